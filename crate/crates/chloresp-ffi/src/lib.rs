//! C ABI surface for the chlorination-control pipeline.
//!
//! Handles are opaque pointers owned by Rust; every `*_new`/`*_load` has a
//! matching `*_free`. Functions return [`ChlorespStatus`]; on any non-Ok
//! status the thread-local error message is readable through
//! [`chloresp_last_error_message`]. The header is generated by cbindgen into
//! `include/chloresp.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use chloresp::config::{load_config, RunConfig};
use chloresp::env::{make_scenario, rollout, Scenario};
use chloresp::neat::{activate, Genome};
use chloresp::reward::{episode_objectives, timestep_reward};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChlorespStatus {
    Ok = 0,
    /// Null pointer, malformed UTF-8, or an argument out of contract.
    InvalidArgument = 1,
    /// The operation itself failed; see `chloresp_last_error_message`.
    RuntimeError = 2,
}

/// Timestep reward split into its three components plus their sum.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChlorespReward {
    pub penalty: f64,
    pub bonus: f64,
    pub cost: f64,
    pub total: f64,
}

/// Opaque run configuration handle.
pub struct ChlorespConfig(RunConfig);
/// Opaque seeded environment handle.
pub struct ChlorespScenario(Scenario);
/// Opaque prescriptor network handle.
pub struct ChlorespGenome(Genome);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn fail(message: impl std::fmt::Display) -> ChlorespStatus {
    set_error(message);
    ChlorespStatus::RuntimeError
}

fn invalid(message: &str) -> ChlorespStatus {
    set_error(message);
    ChlorespStatus::InvalidArgument
}

/// Copy the last error message into `buffer` (NUL-terminated, truncated to
/// `capacity`). Returns the full message length in bytes, excluding the NUL.
/// A null or zero-capacity buffer just reports the length.
///
/// # Safety
/// `buffer` must point to at least `capacity` writable bytes, or be null.
#[no_mangle]
pub unsafe extern "C" fn chloresp_last_error_message(
    buffer: *mut c_char,
    capacity: usize,
) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static crate version string.
#[no_mangle]
pub extern "C" fn chloresp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn path_from(ptr: *const c_char) -> Option<PathBuf> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok().map(PathBuf::from)
}

/// Default configuration handle. Never fails.
#[no_mangle]
pub extern "C" fn chloresp_config_default() -> *mut ChlorespConfig {
    Box::into_raw(Box::new(ChlorespConfig(RunConfig::default())))
}

/// Load an INI config file; returns null on failure (see last error).
///
/// # Safety
/// `path` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn chloresp_config_load(path: *const c_char) -> *mut ChlorespConfig {
    let Some(path) = path_from(path) else {
        set_error("config path is null or not UTF-8");
        return std::ptr::null_mut();
    };
    match load_config(&path) {
        Ok(config) => Box::into_raw(Box::new(ChlorespConfig(config))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `config` must come from a `chloresp_config_*` constructor, passed once.
#[no_mangle]
pub unsafe extern "C" fn chloresp_config_free(config: *mut ChlorespConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Build the deterministic scenario a seed describes under `config`'s
/// environment section. Returns null on failure.
///
/// # Safety
/// `config` must be a live handle from a `chloresp_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn chloresp_scenario_new(
    config: *const ChlorespConfig,
    seed: u64,
) -> *mut ChlorespScenario {
    if config.is_null() {
        set_error("config handle is null");
        return std::ptr::null_mut();
    }
    match make_scenario(seed, &(*config).0.env) {
        Ok(s) => Box::into_raw(Box::new(ChlorespScenario(s))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `scenario` must come from `chloresp_scenario_new`, passed once.
#[no_mangle]
pub unsafe extern "C" fn chloresp_scenario_free(scenario: *mut ChlorespScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Parse a genome from its JSON checkpoint text. Returns null on failure.
///
/// # Safety
/// `json` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn chloresp_genome_from_json(json: *const c_char) -> *mut ChlorespGenome {
    if json.is_null() {
        set_error("genome json is null");
        return std::ptr::null_mut();
    }
    let Ok(text) = CStr::from_ptr(json).to_str() else {
        set_error("genome json is not UTF-8");
        return std::ptr::null_mut();
    };
    match serde_json::from_str::<Genome>(text) {
        Ok(genome) => Box::into_raw(Box::new(ChlorespGenome(genome))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// Load a genome from a JSON file. Returns null on failure.
///
/// # Safety
/// `path` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn chloresp_genome_load(path: *const c_char) -> *mut ChlorespGenome {
    let Some(path) = path_from(path) else {
        set_error("genome path is null or not UTF-8");
        return std::ptr::null_mut();
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            set_error(format!("{}: {e}", path.display()));
            return std::ptr::null_mut();
        }
    };
    match serde_json::from_str::<Genome>(&text) {
        Ok(genome) => Box::into_raw(Box::new(ChlorespGenome(genome))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `genome` must come from a `chloresp_genome_*` constructor, passed once.
#[no_mangle]
pub unsafe extern "C" fn chloresp_genome_free(genome: *mut ChlorespGenome) {
    if !genome.is_null() {
        drop(Box::from_raw(genome));
    }
}

/// Number of observation inputs the genome expects; 0 for a null handle.
///
/// # Safety
/// `genome` must be null or a live genome handle.
#[no_mangle]
pub unsafe extern "C" fn chloresp_genome_num_inputs(genome: *const ChlorespGenome) -> usize {
    if genome.is_null() {
        return 0;
    }
    (*genome).0.input_count()
}

/// Number of action outputs the genome produces; 0 for a null handle.
///
/// # Safety
/// `genome` must be null or a live genome handle.
#[no_mangle]
pub unsafe extern "C" fn chloresp_genome_num_outputs(genome: *const ChlorespGenome) -> usize {
    if genome.is_null() {
        return 0;
    }
    (*genome).0.output_count()
}

/// Composite timestep reward for `num_nodes` concentrations and
/// `num_injections` injection actions.
///
/// # Safety
/// `concentrations` must point to `num_nodes` doubles, `actions` to
/// `num_injections` doubles (may be null when `num_injections` is 0), and
/// `out` to a writable [`ChlorespReward`].
#[no_mangle]
pub unsafe extern "C" fn chloresp_timestep_reward(
    concentrations: *const f64,
    num_nodes: usize,
    actions: *const f64,
    num_injections: usize,
    out: *mut ChlorespReward,
) -> ChlorespStatus {
    if concentrations.is_null() || out.is_null() || (actions.is_null() && num_injections > 0) {
        return invalid("null pointer argument");
    }
    let c = std::slice::from_raw_parts(concentrations, num_nodes);
    let a = if num_injections == 0 {
        &[][..]
    } else {
        std::slice::from_raw_parts(actions, num_injections)
    };
    match timestep_reward(c, a) {
        Ok(r) => {
            *out = ChlorespReward {
                penalty: r.penalty_cl,
                bonus: r.bonus_cl,
                cost: r.cost_cl,
                total: r.total,
            };
            ChlorespStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Run one forward pass of the genome.
///
/// # Safety
/// `obs` must point to `num_obs` doubles and `out` to `out_len` writable
/// doubles, with `out_len` at least the genome's output count.
#[no_mangle]
pub unsafe extern "C" fn chloresp_genome_activate(
    genome: *const ChlorespGenome,
    obs: *const f64,
    num_obs: usize,
    out: *mut f64,
    out_len: usize,
) -> ChlorespStatus {
    if genome.is_null() || obs.is_null() || out.is_null() {
        return invalid("null pointer argument");
    }
    let genome = &(*genome).0;
    if out_len < genome.output_count() {
        return invalid("output buffer too small");
    }
    let obs = std::slice::from_raw_parts(obs, num_obs);
    match activate(genome, obs) {
        Ok(values) => {
            std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
            ChlorespStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Roll a genome through a full episode; writes the two episode objectives
/// (violation fraction, total injection cost) and the summed composite
/// reward.
///
/// # Safety
/// All handles must be live; the three out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn chloresp_rollout_objectives(
    scenario: *const ChlorespScenario,
    genome: *const ChlorespGenome,
    out_violation: *mut f64,
    out_cost: *mut f64,
    out_reward: *mut f64,
) -> ChlorespStatus {
    if scenario.is_null()
        || genome.is_null()
        || out_violation.is_null()
        || out_cost.is_null()
        || out_reward.is_null()
    {
        return invalid("null pointer argument");
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        let traj = rollout(&(*scenario).0, &(*genome).0)?;
        let objectives = episode_objectives(&traj)?;
        Ok::<_, chloresp::Error>((objectives, traj.total_reward()))
    }));
    match result {
        Ok(Ok((objectives, reward))) => {
            *out_violation = objectives.violation;
            *out_cost = objectives.cost;
            *out_reward = reward;
            ChlorespStatus::Ok
        }
        Ok(Err(e)) => fail(e),
        Err(_) => fail("panic during rollout"),
    }
}

/// Execute a full pipeline run into `out_dir` with the given master seed.
///
/// # Safety
/// `config` must be a live handle; `out_dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn chloresp_run(
    config: *const ChlorespConfig,
    master_seed: u64,
    out_dir: *const c_char,
) -> ChlorespStatus {
    if config.is_null() {
        return invalid("config handle is null");
    }
    let Some(out_dir) = path_from(out_dir) else {
        return invalid("output directory is null or not UTF-8");
    };
    let result = catch_unwind(AssertUnwindSafe(|| {
        chloresp::esp::run(&(*config).0, master_seed, &out_dir)
    }));
    match result {
        Ok(Ok(_)) => ChlorespStatus::Ok,
        Ok(Err(e)) => fail(e),
        Err(_) => fail("panic during run"),
    }
}
