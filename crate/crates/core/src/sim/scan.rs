//! Ground-truth panorama scan. Panoramas are world-aligned: column `W/2`
//! faces +y and headings grow clockwise.

use std::f64::consts::PI;

use crate::agents::{Observation, ObservedObject};
use crate::graph::GraphError;
use crate::semantic_map::{BBox, DetectionRecord, PanoramaLayout};

use super::world::World;

/// Physical half-extent used for apparent box size, metres.
const OBJECT_RADIUS: f64 = 0.4;
const EYE_HEIGHT: f64 = 1.5;
/// Depth offset of the second copy of an object seen by two views.
pub const DUPLICATE_DEPTH_OFFSET: f64 = 0.1;

/// Clockwise bearing of `to` seen from `from`, in `(−π, π]`.
pub fn bearing(from: [f64; 3], to: [f64; 3]) -> f64 {
    (to[0] - from[0]).atan2(to[1] - from[1])
}

/// Panorama column for a bearing: inverse of `heading_angle` for a
/// symmetric box.
pub fn bearing_to_column(bearing: f64, width: f64) -> f64 {
    width * (bearing / PI + 1.0) / 2.0
}

/// Boxes and depths for every object visible from `at`, ordered by object id.
/// An object inside two overlapping views is reported once per view, the
/// extra copy slightly deeper.
pub fn oracle_scan(
    world: &World,
    at: &str,
    layout: &PanoramaLayout,
) -> Result<Observation, GraphError> {
    let origin = world.graph().waypoint(at)?.position;
    let mut detections = Vec::new();
    let mut objects = Vec::new();
    for obj in world.objects.iter().filter(|o| o.visible_from.contains(at)) {
        let dx = obj.position[0] - origin[0];
        let dy = obj.position[1] - origin[1];
        let horizontal = (dx * dx + dy * dy).sqrt();
        if horizontal < 1e-6 {
            continue;
        }
        let dz = obj.position[2] - origin[2];
        let depth = (horizontal * horizontal + dz * dz).sqrt();
        let cx = bearing_to_column(bearing(origin, obj.position), layout.width);
        let apparent = layout.width * 2.0 * (OBJECT_RADIUS / horizontal).atan() / (2.0 * PI);
        let half_w = (apparent / 2.0).min(cx).min(layout.width - cx).max(0.0);
        let cy = layout.height / 2.0 - layout.height * (dz - EYE_HEIGHT).atan2(horizontal) / PI;
        let half_h = layout.height * (OBJECT_RADIUS / horizontal).atan() / PI;
        let bbox = BBox::new(
            cx - half_w,
            (cy - half_h).clamp(0.0, layout.height),
            cx + half_w,
            (cy + half_h).clamp(0.0, layout.height),
        );
        let views = layout.views_containing(cx);
        for (k, &view) in views.iter().enumerate() {
            detections.push(DetectionRecord {
                view,
                bbox,
                category: obj.category.clone(),
                depth: depth + k as f64 * DUPLICATE_DEPTH_OFFSET,
            });
        }
        objects.push(ObservedObject {
            object_id: obj.id.clone(),
            category: obj.category.clone(),
            bbox,
            depth,
            attributes: obj.attributes.clone(),
        });
    }
    Ok(Observation {
        waypoint: at.to_string(),
        layout: *layout,
        detections,
        objects,
        image_ref: None,
    })
}
