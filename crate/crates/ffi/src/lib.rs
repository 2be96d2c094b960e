//! C ABI over `focusnav-core`.
//!
//! Every fallible function returns a [`FocusnavStatus`]; on failure the
//! message is available from [`focusnav_last_error`] on the same thread.
//! Objects are opaque handles released by their `_free` function. Strings
//! returned through `char **` out-parameters are owned by the caller and
//! released with [`focusnav_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use focusnav_core::harness::{
    compute_metrics, run_benchmark, run_episode, EpisodeTrace, MovePolicy, RunConfig, Variant,
};
use focusnav_core::mcts::{SearchTree, DEFAULT_LAMBDA, DEFAULT_TOP_K};
use focusnav_core::perception::{SemanticValueMap, DEFAULT_QUERY_BUDGET};
use focusnav_core::semantic_map::{heading_angle, BBox};
use focusnav_core::sim::{generate_world, oracle_backends, Profile, World};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FocusnavStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidUtf8 = -2,
    InvalidArgument = -3,
    NotFound = -4,
    Parse = -5,
    Internal = -255,
}

/// Opaque world handle.
pub struct FocusnavWorld(Arc<World>);

/// Opaque finished-episode handle.
pub struct FocusnavEpisodeResult {
    world: Arc<World>,
    trace: EpisodeTrace,
}

/// Opaque search-tree handle.
pub struct FocusnavTree(SearchTree);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FocusnavRunConfig {
    pub lambda: f64,
    pub top_k: u32,
    pub n_max: u32,
    /// Negative keeps the episode's own step cap.
    pub max_steps: i32,
    pub no_bd_mcts: bool,
    pub no_pp: bool,
    pub prior_visit: bool,
    pub single_edge: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FocusnavMetrics {
    pub ne_m: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub path_length: f64,
    pub reference_length: f64,
    pub steps: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

#[derive(Debug)]
struct Failure(FocusnavStatus, String);

impl Failure {
    fn arg(msg: impl Into<String>) -> Self {
        Failure(FocusnavStatus::InvalidArgument, msg.into())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FocusnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FocusnavStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            FocusnavStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(
            FocusnavStatus::NullPointer,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FocusnavStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(FocusnavStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(FocusnavStatus::NullPointer, format!("{what} is null")))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| {
        Failure(
            FocusnavStatus::Internal,
            "string contains a nul byte".into(),
        )
    })
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on this thread; do not free.
#[no_mangle]
pub extern "C" fn focusnav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn focusnav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates the world for `(seed, profile)`; profile is one of
/// `corridor`, `trap`, `maze`, `r2r-like`, `landmark`.
///
/// # Safety
/// `profile` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn focusnav_world_generate(
    seed: u64,
    profile: *const c_char,
    out: *mut *mut FocusnavWorld,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let p: Profile = read_str(profile, "profile")?.parse().map_err(
            |e: focusnav_core::sim::WorldError| Failure(FocusnavStatus::NotFound, e.to_string()),
        )?;
        *out = Box::into_raw(Box::new(FocusnavWorld(Arc::new(generate_world(seed, p)))));
        Ok(())
    })
}

/// Parses world or episode JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn focusnav_world_from_json(
    json: *const c_char,
    out: *mut *mut FocusnavWorld,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let text = read_str(json, "json")?;
        let world = World::from_json(text, None)
            .map_err(|e| Failure(FocusnavStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(FocusnavWorld(Arc::new(world))));
        Ok(())
    })
}

/// # Safety
/// `world` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn focusnav_world_to_json(
    world: *const FocusnavWorld,
    out: *mut *mut c_char,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let w = handle(world, "world")?;
        *out = to_c_string(w.0.to_json())?;
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn focusnav_world_free(world: *mut FocusnavWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

#[no_mangle]
pub extern "C" fn focusnav_run_config_default() -> FocusnavRunConfig {
    FocusnavRunConfig {
        lambda: DEFAULT_LAMBDA,
        top_k: DEFAULT_TOP_K as u32,
        n_max: DEFAULT_QUERY_BUDGET as u32,
        max_steps: -1,
        no_bd_mcts: false,
        no_pp: false,
        prior_visit: false,
        single_edge: false,
    }
}

fn run_config(c: &FocusnavRunConfig) -> Result<RunConfig, Failure> {
    let cfg = RunConfig {
        lambda: c.lambda,
        top_k: c.top_k as usize,
        n_max: c.n_max as usize,
        max_steps: usize::try_from(c.max_steps).ok(),
        no_bd_mcts: c.no_bd_mcts,
        no_pp: c.no_pp,
        prior_visit: c.prior_visit,
        move_policy: if c.single_edge {
            MovePolicy::SingleEdge
        } else {
            MovePolicy::Traverse
        },
        workers: 1,
        ..RunConfig::default()
    };
    cfg.validate().map_err(|e| Failure::arg(e.to_string()))?;
    Ok(cfg)
}

/// Runs one episode with oracle agents. A null `config` uses defaults.
///
/// # Safety
/// `world` must be a live handle, `config` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn focusnav_episode_run(
    world: *const FocusnavWorld,
    config: *const FocusnavRunConfig,
    out: *mut *mut FocusnavEpisodeResult,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let w = handle(world, "world")?.0.clone();
        let cfg = match config.as_ref() {
            Some(c) => run_config(c)?,
            None => RunConfig::default(),
        };
        let backends = oracle_backends(w.clone(), cfg.panorama);
        let trace =
            run_episode(&w.episode, &backends, &cfg).map_err(|e| Failure::arg(e.to_string()))?;
        *out = Box::into_raw(Box::new(FocusnavEpisodeResult { world: w, trace }));
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn focusnav_result_metrics(
    result: *const FocusnavEpisodeResult,
    out: *mut FocusnavMetrics,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let r = handle(result, "result")?;
        let report = compute_metrics(
            std::slice::from_ref(&r.trace),
            std::slice::from_ref(&r.world.episode),
        )
        .map_err(|e| Failure(FocusnavStatus::Internal, e.to_string()))?;
        let m = &report.per_episode[0];
        *out = FocusnavMetrics {
            ne_m: m.ne_m,
            success: m.success,
            oracle_success: m.oracle_success,
            spl: m.spl,
            path_length: m.path_length,
            reference_length: m.reference_length,
            steps: r.trace.summary.steps as u32,
        };
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn focusnav_result_trace_jsonl(
    result: *const FocusnavEpisodeResult,
    out: *mut *mut c_char,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let r = handle(result, "result")?;
        *out = to_c_string(r.trace.to_jsonl())?;
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn focusnav_result_free(result: *mut FocusnavEpisodeResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Heading in radians of a panorama box, negative to the left.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn focusnav_heading_angle(
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    panorama_width: f64,
    out: *mut f64,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = heading_angle(&BBox::new(x1, y1, x2, y2), panorama_width)
            .map_err(|e| Failure::arg(e.to_string()))?;
        Ok(())
    })
}

/// Benchmark report JSON for comma-separated `profiles` and `variants`
/// (`full`, `no-bd-mcts`, `no-pp`) over seeds `seed_first..=seed_last`.
///
/// # Safety
/// String arguments must be NUL-terminated; `config` null or valid; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn focusnav_benchmark_json(
    profiles: *const c_char,
    variants: *const c_char,
    seed_first: u64,
    seed_last: u64,
    config: *const FocusnavRunConfig,
    out: *mut *mut c_char,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let profiles: Vec<Profile> = read_str(profiles, "profiles")?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.parse().map_err(|e: focusnav_core::sim::WorldError| {
                    Failure(FocusnavStatus::NotFound, e.to_string())
                })
            })
            .collect::<Result<_, _>>()?;
        let variants: Vec<Variant> = read_str(variants, "variants")?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e: String| Failure(FocusnavStatus::NotFound, e))
            })
            .collect::<Result<_, _>>()?;
        let seeds: Vec<u64> = if seed_first > seed_last {
            Vec::new()
        } else {
            (seed_first..=seed_last).collect()
        };
        let mut cfg = match config.as_ref() {
            Some(c) => run_config(c)?,
            None => RunConfig::default(),
        };
        cfg.workers = 0;
        let report = run_benchmark(&profiles, &seeds, &variants, &cfg)
            .map_err(|e| Failure::arg(e.to_string()))?;
        let text = serde_json::to_string(&report)
            .map_err(|e| Failure(FocusnavStatus::Internal, e.to_string()))?;
        *out = to_c_string(text)?;
        Ok(())
    })
}

/// # Safety
/// `root` must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn focusnav_tree_new(
    root: *const c_char,
    root_value: f64,
    out: *mut *mut FocusnavTree,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let root = read_str(root, "root")?;
        if !root_value.is_finite() {
            return Err(Failure::arg("root_value must be finite"));
        }
        *out = Box::into_raw(Box::new(FocusnavTree(SearchTree::new(root, root_value))));
        Ok(())
    })
}

/// Adds candidates `ids[i]` with values `values[i]` under `current`,
/// skipping ids already in the tree. `added`, when non-null, receives the
/// number of nodes created.
///
/// # Safety
/// `ids` and `values` must point to `n` elements each (may be null when
/// `n == 0`); every id NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn focusnav_tree_expand(
    tree: *mut FocusnavTree,
    current: *const c_char,
    ids: *const *const c_char,
    values: *const f64,
    n: usize,
    added: *mut usize,
) -> FocusnavStatus {
    guard(|| {
        let t = tree
            .as_mut()
            .ok_or_else(|| Failure(FocusnavStatus::NullPointer, "tree is null".into()))?;
        let current = read_str(current, "current")?;
        if n > 0 && (ids.is_null() || values.is_null()) {
            return Err(Failure(
                FocusnavStatus::NullPointer,
                "ids or values is null".into(),
            ));
        }
        let mut cands = Vec::with_capacity(n);
        let mut vals = SemanticValueMap::new();
        for i in 0..n {
            let id = read_str(*ids.add(i), "candidate id")?.to_string();
            vals.insert(id.clone(), *values.add(i));
            cands.push(id);
        }
        let new =
            t.0.expand(current, &cands, &vals)
                .map_err(|e| Failure(FocusnavStatus::NotFound, e.to_string()))?;
        if let Some(a) = added.as_mut() {
            *a = new.len();
        }
        Ok(())
    })
}

/// # Safety
/// `tree` must be a live handle; `current` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn focusnav_tree_backprop(
    tree: *mut FocusnavTree,
    current: *const c_char,
    reward: f64,
) -> FocusnavStatus {
    guard(|| {
        let t = tree
            .as_mut()
            .ok_or_else(|| Failure(FocusnavStatus::NullPointer, "tree is null".into()))?;
        let current = read_str(current, "current")?;
        if !reward.is_finite() {
            return Err(Failure::arg("reward must be finite"));
        }
        t.0.backpropagate(current, reward)
            .map_err(|e| Failure(FocusnavStatus::NotFound, e.to_string()))
    })
}

/// # Safety
/// `tree` must be a live handle; `leaf` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn focusnav_tree_path_value(
    tree: *const FocusnavTree,
    leaf: *const c_char,
    out: *mut f64,
) -> FocusnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = handle(tree, "tree")?;
        let leaf = read_str(leaf, "leaf")?;
        *out =
            t.0.path_value(leaf)
                .map_err(|e| Failure(FocusnavStatus::NotFound, e.to_string()))?;
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn focusnav_tree_free(tree: *mut FocusnavTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}
