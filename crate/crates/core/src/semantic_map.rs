//! Ego-centric semantic map: per-object heading, category, box and depth,
//! built from panorama detections and rendered as instruction-style text.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Duplicate detections from overlapping views merge above this IoU.
pub const DEDUP_IOU: f64 = 0.5;

pub const EMPTY_MAP_TEXT: &str = "no objects detected";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("invalid bounding box {0}: {1}")]
    InvalidBox(BBox, &'static str),
    #[error("panorama width must be positive and finite, got {0}")]
    InvalidWidth(f64),
    #[error("detection {0} has no depth")]
    MissingDepth(usize),
    #[error("detection {index} has invalid depth {depth}")]
    InvalidDepth { index: usize, depth: f64 },
    #[error("view index {view} out of range for {views} views")]
    InvalidView { view: usize, views: usize },
    #[error("cannot parse map line `{0}`")]
    Parse(String),
}

/// Axis-aligned pixel rectangle `(x1, y1, x2, y2)`, serialized as a 4-array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{},{},{},{}]",
            self.x1.round() as i64,
            self.y1.round() as i64,
            self.x2.round() as i64,
            self.y2.round() as i64
        )
    }
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center_x(&self) -> f64 {
        0.5 * (self.x1 + self.x2)
    }

    pub fn is_finite(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x1.max(other.x1),
            self.y1.max(other.y1),
            self.x2.min(other.x2),
            self.y2.min(other.y2),
        );
        (b.x1 <= b.x2 && b.y1 <= b.y2).then_some(b)
    }

    /// Closed-interval overlap test; touching edges count, so zero-width
    /// boxes can still be hit by a region.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.intersection(other).is_some()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other).map_or(0.0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            // two degenerate boxes: identical counts as full overlap
            return if self == other { 1.0 } else { 0.0 };
        }
        inter / union
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x1.min(other.x1),
            self.y1.min(other.y1),
            self.x2.max(other.x2),
            self.y2.max(other.y2),
        )
    }

    /// Scales width and height by `factor` about the centre.
    pub fn inflate(&self, factor: f64) -> BBox {
        let cx = 0.5 * (self.x1 + self.x2);
        let cy = 0.5 * (self.y1 + self.y2);
        let hw = 0.5 * self.width() * factor;
        let hh = 0.5 * self.height() * factor;
        BBox::new(cx - hw, cy - hh, cx + hw, cy + hh)
    }

    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        BBox::new(
            self.x1.clamp(0.0, width),
            self.y1.clamp(0.0, height),
            self.x2.clamp(0.0, width),
            self.y2.clamp(0.0, height),
        )
    }

    /// Reflection about the vertical centre line of a panorama of `width`.
    pub fn mirror(&self, width: f64) -> BBox {
        BBox::new(width - self.x2, self.y1, width - self.x1, self.y2)
    }
}

/// Panorama geometry and its split into `views` overlapping directional views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanoramaLayout {
    pub width: f64,
    pub height: f64,
    pub views: usize,
    /// Extra field of view per view, as a fraction of the nominal view width.
    pub overlap: f64,
}

impl Default for PanoramaLayout {
    fn default() -> Self {
        Self {
            width: 2048.0,
            height: 512.0,
            views: 8,
            overlap: 0.25,
        }
    }
}

impl PanoramaLayout {
    pub fn full(&self) -> BBox {
        BBox::new(0.0, 0.0, self.width, self.height)
    }

    fn stride(&self) -> f64 {
        self.width / self.views as f64
    }

    /// Panorama-space x interval `[start, end)` seen by `view`; may extend past
    /// either panorama edge.
    pub fn view_span(&self, view: usize) -> (f64, f64) {
        let stride = self.stride();
        let pad = 0.5 * self.overlap * stride;
        let start = view as f64 * stride - pad;
        (start, start + stride + 2.0 * pad)
    }

    /// Views whose span contains panorama column `x` (wrapping at the seam),
    /// in ascending view order.
    pub fn views_containing(&self, x: f64) -> Vec<usize> {
        (0..self.views)
            .filter(|&v| {
                let (s, e) = self.view_span(v);
                [x, x - self.width, x + self.width]
                    .iter()
                    .any(|&c| c >= s && c < e)
            })
            .collect()
    }

    /// Translates a box in view-local pixels into panorama coordinates.
    /// Results are shifted into `[0, W)` on the left edge; a box crossing the
    /// right seam keeps `x2 > W` (wraparound-expanded form).
    pub fn to_panorama(&self, view: usize, local: BBox) -> Result<BBox, MapError> {
        if view >= self.views {
            return Err(MapError::InvalidView {
                view,
                views: self.views,
            });
        }
        let (start, _) = self.view_span(view);
        let mut b = BBox::new(local.x1 + start, local.y1, local.x2 + start, local.y2);
        if b.x1 < 0.0 {
            b.x1 += self.width;
            b.x2 += self.width;
        } else if b.x1 >= self.width {
            b.x1 -= self.width;
            b.x2 -= self.width;
        }
        Ok(b)
    }
}

/// Object heading from a panorama-space box: `π·(x1 + x2 − F)/F`, clamped to
/// `[−π, π]`. Negative headings are to the left.
pub fn heading_angle(bbox: &BBox, panorama_width: f64) -> Result<f64, MapError> {
    if !(panorama_width.is_finite() && panorama_width > 0.0) {
        return Err(MapError::InvalidWidth(panorama_width));
    }
    if !bbox.is_finite() {
        return Err(MapError::InvalidBox(*bbox, "non-finite coordinate"));
    }
    if bbox.x1 < 0.0 || bbox.x2 < 0.0 {
        return Err(MapError::InvalidBox(*bbox, "negative x coordinate"));
    }
    if bbox.x1 > bbox.x2 {
        return Err(MapError::InvalidBox(*bbox, "x1 > x2"));
    }
    if bbox.x2 > 2.0 * panorama_width {
        return Err(MapError::InvalidBox(
            *bbox,
            "x2 beyond twice the panorama width",
        ));
    }
    let h = PI * ((bbox.x1 + bbox.x2 - panorama_width) / panorama_width);
    Ok(h.clamp(-PI, PI))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub view: usize,
    pub bbox: BBox,
    pub category: String,
}

impl Detection {
    pub fn validate(&self, layout: &PanoramaLayout) -> Result<(), MapError> {
        let b = &self.bbox;
        if self.view >= layout.views {
            return Err(MapError::InvalidView {
                view: self.view,
                views: layout.views,
            });
        }
        if !b.is_finite() {
            return Err(MapError::InvalidBox(*b, "non-finite coordinate"));
        }
        if b.x1 > b.x2 || b.y1 > b.y2 {
            return Err(MapError::InvalidBox(*b, "inverted corners"));
        }
        if b.x1 < 0.0 || b.x1 > layout.width || b.x2 > 2.0 * layout.width {
            return Err(MapError::InvalidBox(*b, "outside panorama width"));
        }
        if b.y1 < 0.0 || b.y2 > layout.height {
            return Err(MapError::InvalidBox(*b, "outside panorama height"));
        }
        Ok(())
    }
}

/// Wire form of a detection: `{view, bbox:[x1,y1,x2,y2], category, depth}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub view: usize,
    pub bbox: BBox,
    pub category: String,
    pub depth: f64,
}

impl DetectionRecord {
    pub fn split(records: &[DetectionRecord]) -> (Vec<Detection>, BTreeMap<usize, f64>) {
        let dets = records
            .iter()
            .map(|r| Detection {
                view: r.view,
                bbox: r.bbox,
                category: r.category.clone(),
            })
            .collect();
        let depths = records
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.depth))
            .collect();
        (dets, depths)
    }

    pub fn join(detections: &[Detection], depths: &BTreeMap<usize, f64>) -> Vec<DetectionRecord> {
        detections
            .iter()
            .enumerate()
            .filter_map(|(i, d)| {
                depths.get(&i).map(|&depth| DetectionRecord {
                    view: d.view,
                    bbox: d.bbox,
                    category: d.category.clone(),
                    depth,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticEntry {
    pub heading: f64,
    pub category: String,
    pub bbox: BBox,
    pub depth: f64,
}

impl SemanticEntry {
    fn sort_key(&self, other: &Self) -> Ordering {
        self.heading
            .total_cmp(&other.heading)
            .then_with(|| self.category.cmp(&other.category))
            .then_with(|| self.depth.total_cmp(&other.depth))
            .then_with(|| self.bbox.x1.total_cmp(&other.bbox.x1))
            .then_with(|| self.bbox.y1.total_cmp(&other.bbox.y1))
    }

    /// One line of the map text.
    pub fn render(&self) -> String {
        let deg = round1(self.heading.to_degrees());
        let direction = if deg == 0.0 {
            "straight ahead".to_string()
        } else if deg < 0.0 {
            format!("turn left {:.1} degrees", -deg)
        } else {
            format!("turn right {deg:.1} degrees")
        };
        format!(
            "{direction}, {} (bounding box {}) at {:.1} meters",
            self.category,
            self.bbox,
            round1(self.depth)
        )
    }
}

fn round1(v: f64) -> f64 {
    let r = (v * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMap {
    pub timestep: usize,
    pub entries: Vec<SemanticEntry>,
    pub panorama_width: f64,
    pub panorama_height: f64,
}

impl SemanticMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn render_text(&self) -> String {
        render_map_text(self)
    }
}

/// Builds the map for one timestep. Detections are merged in view order;
/// a detection whose category matches a kept entry with IoU above
/// [`DEDUP_IOU`] replaces it only when strictly nearer.
pub fn build_semantic_map(
    timestep: usize,
    detections: &[Detection],
    depths: &BTreeMap<usize, f64>,
    layout: &PanoramaLayout,
) -> Result<SemanticMap, MapError> {
    let mut staged = Vec::with_capacity(detections.len());
    for (i, det) in detections.iter().enumerate() {
        det.validate(layout)?;
        let depth = *depths.get(&i).ok_or(MapError::MissingDepth(i))?;
        if !(depth.is_finite() && depth > 0.0) {
            return Err(MapError::InvalidDepth { index: i, depth });
        }
        let heading = heading_angle(&det.bbox, layout.width)?;
        staged.push((
            det.view,
            i,
            SemanticEntry {
                heading,
                category: det.category.clone(),
                bbox: det.bbox,
                depth,
            },
        ));
    }
    staged.sort_by_key(|&(view, i, _)| (view, i));

    let mut kept: Vec<SemanticEntry> = Vec::with_capacity(staged.len());
    for (_, _, entry) in staged {
        let dup = kept
            .iter_mut()
            .find(|k| k.category == entry.category && k.bbox.iou(&entry.bbox) > DEDUP_IOU);
        match dup {
            Some(existing) if entry.depth < existing.depth => *existing = entry,
            Some(_) => {}
            None => kept.push(entry),
        }
    }
    kept.sort_by(SemanticEntry::sort_key);
    Ok(SemanticMap {
        timestep,
        entries: kept,
        panorama_width: layout.width,
        panorama_height: layout.height,
    })
}

/// Text form consumed by the orchestration agent: one line per entry, or
/// [`EMPTY_MAP_TEXT`] for an empty map.
pub fn render_map_text(map: &SemanticMap) -> String {
    if map.entries.is_empty() {
        return EMPTY_MAP_TEXT.to_string();
    }
    map.entries
        .iter()
        .map(SemanticEntry::render)
        .collect::<Vec<_>>()
        .join("\n")
}

/// An entry recovered from map text, at the text's rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEntry {
    /// Signed degrees, negative to the left.
    pub heading_deg: f64,
    pub category: String,
    pub bbox: BBox,
    pub depth: f64,
}

/// Inverse of [`render_map_text`].
pub fn parse_map_text(text: &str) -> Result<Vec<ParsedEntry>, MapError> {
    if text.trim() == EMPTY_MAP_TEXT || text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.lines().map(parse_line).collect()
}

fn parse_line(line: &str) -> Result<ParsedEntry, MapError> {
    let bad = || MapError::Parse(line.to_string());
    let (heading_deg, rest) = if let Some(rest) = line.strip_prefix("straight ahead, ") {
        (0.0, rest)
    } else {
        let (sign, rest) = if let Some(r) = line.strip_prefix("turn left ") {
            (-1.0, r)
        } else if let Some(r) = line.strip_prefix("turn right ") {
            (1.0, r)
        } else {
            return Err(bad());
        };
        let (num, rest) = rest.split_once(" degrees, ").ok_or_else(bad)?;
        (sign * num.parse::<f64>().map_err(|_| bad())?, rest)
    };
    let split = rest.rfind(" (bounding box [").ok_or_else(bad)?;
    let category = rest[..split].to_string();
    let tail = &rest[split + " (bounding box [".len()..];
    let (coords, tail) = tail.split_once("]) at ").ok_or_else(bad)?;
    let depth = tail
        .strip_suffix(" meters")
        .ok_or_else(bad)?
        .parse::<f64>()
        .map_err(|_| bad())?;
    let nums: Vec<f64> = coords
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [x1, y1, x2, y2] = nums[..] else {
        return Err(bad());
    };
    Ok(ParsedEntry {
        heading_deg,
        category,
        bbox: BBox::new(x1, y1, x2, y2),
        depth,
    })
}
