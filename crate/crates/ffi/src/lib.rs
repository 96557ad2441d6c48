//! C ABI over `ssp-po`.
//!
//! Objects are opaque handles created by `*_new`/`*_from_*` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`SspStatus`]; on failure a message is kept per thread and can be read
//! with [`ssp_last_error`]. Strings returned to the caller are freed with
//! [`ssp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ssp_po::env::{generate_instance, EnvSpec, Environment, Generator};
use ssp_po::error::SspError;
use ssp_po::harness::{run_experiment, ExperimentConfig, RegretReport};
use ssp_po::ssp::{key_params, CostFunction, InstanceDocument, SspInstance};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SspStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidInstance = 4,
    Config = 5,
    Parse = 6,
    Io = 7,
    NoProperPolicy = 8,
    Numerical = 9,
    Protocol = 10,
    BufferTooSmall = 11,
    NotReady = 12,
    Panic = 13,
}

/// Parameters of an instance under its mean cost.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SspKeyParams {
    pub b_star: f64,
    pub t_star: f64,
    pub t_max: f64,
    pub diameter: f64,
}

/// An instance together with its mean cost table.
pub struct SspPoInstance {
    instance: SspInstance,
    cost: CostFunction,
}

/// An experiment configuration and the report of its last run.
pub struct SspPoExperiment {
    config: ExperimentConfig,
    report: Option<RegretReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &SspError) -> SspStatus {
    match e {
        SspError::InvalidInstance(_) => SspStatus::InvalidInstance,
        SspError::InvalidArgument(_) | SspError::DilationTooLarge(_) => SspStatus::InvalidArgument,
        SspError::NonProperPolicy(_) | SspError::NoProperPolicy(_) | SspError::AssumptionViolation(_) => {
            SspStatus::NoProperPolicy
        }
        SspError::NoConvergence(_)
        | SspError::InfeasibleRow(_)
        | SspError::ScheduleViolation(_)
        | SspError::EpisodeOverflow(_)
        | SspError::GenerationFailure(_) => SspStatus::Numerical,
        SspError::FeedbackMismatch(_) | SspError::DoubleReveal(_) | SspError::Protocol(_) => SspStatus::Protocol,
        SspError::Config(_) => SspStatus::Config,
        SspError::Parse(_) => SspStatus::Parse,
        SspError::Io(_) => SspStatus::Io,
    }
}

struct Failure(SspStatus, String);

impl From<SspError> for Failure {
    fn from(e: SspError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Run `f`, record any failure and turn panics into `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SspStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SspStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SspStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SspStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(SspStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn read_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(SspStatus::NullPointer, format!("{what} is null")))
}

unsafe fn read_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(SspStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SspStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(values: &[f64], out: *mut f64, capacity: usize, written: *mut usize) -> Result<(), Failure> {
    if !written.is_null() {
        *written = values.len();
    }
    if values.len() > capacity {
        return Err(Failure(SspStatus::BufferTooSmall, format!("need room for {} values", values.len())));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(Failure(SspStatus::NullPointer, "output buffer is null".into()));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ssp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ssp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Free a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ssp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse an instance document (JSON).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssp_instance_from_json(json: *const c_char, out: *mut *mut SspPoInstance) -> SspStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let (instance, cost) = InstanceDocument::from_json(text)?.into_parts()?;
        write_out(out, SspPoInstance { instance, cost })
    })
}

/// Random instance with `p_goal` mass on the goal in every row and costs
/// drawn from `[c_min, 1]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssp_instance_random(
    num_states: usize,
    num_actions: usize,
    p_goal: f64,
    c_min: f64,
    seed: u64,
    out: *mut *mut SspPoInstance,
) -> SspStatus {
    guard(|| {
        let spec = EnvSpec {
            generator: Generator::RandomSsp { num_states, num_actions, p_goal },
            costs: Default::default(),
            c_min,
            seed,
        };
        let (instance, cost) = generate_instance(&spec)?;
        write_out(out, SspPoInstance { instance, cost })
    })
}

/// # Safety
/// `inst` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ssp_instance_free(inst: *mut SspPoInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of non-goal states, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssp_instance_num_states(inst: *const SspPoInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.instance.num_states())
}

/// Number of actions, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssp_instance_num_actions(inst: *const SspPoInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.instance.num_actions())
}

/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssp_instance_key_params(inst: *const SspPoInstance, out: *mut SspKeyParams) -> SspStatus {
    guard(|| {
        let inst = read_ref(inst, "instance")?;
        let out = read_mut(out, "output")?;
        let kp = key_params(&inst.instance, &inst.cost)?;
        *out = SspKeyParams { b_star: kp.b_star, t_star: kp.t_star, t_max: kp.t_max, diameter: kp.diameter };
        Ok(())
    })
}

/// Optimal values per state. `written` receives the number of states even
/// when the buffer is too small.
///
/// # Safety
/// `inst` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ssp_instance_optimal_values(
    inst: *const SspPoInstance,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> SspStatus {
    guard(|| {
        let inst = read_ref(inst, "instance")?;
        let kp = key_params(&inst.instance, &inst.cost)?;
        copy_out(&kp.optimal_values, out, capacity, written)
    })
}

/// Serialize as an instance document. Free the result with
/// [`ssp_string_free`].
///
/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssp_instance_to_json(inst: *const SspPoInstance, out: *mut *mut c_char) -> SspStatus {
    guard(|| {
        let inst = read_ref(inst, "instance")?;
        if out.is_null() {
            return Err(Failure(SspStatus::NullPointer, "output pointer is null".into()));
        }
        let json = InstanceDocument::from_parts(&inst.instance, &inst.cost).to_json();
        *out = CString::new(json).map_err(|_| Failure(SspStatus::InvalidUtf8, "interior NUL".into()))?.into_raw();
        Ok(())
    })
}

/// Parse an experiment configuration (TOML).
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssp_experiment_from_toml(toml: *const c_char, out: *mut *mut SspPoExperiment) -> SspStatus {
    guard(|| {
        let text = read_str(toml, "toml")?;
        let config = ExperimentConfig::from_toml(text)?;
        Environment::from_spec(&config.env)?;
        write_out(out, SspPoExperiment { config, report: None })
    })
}

/// # Safety
/// `exp` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ssp_experiment_free(exp: *mut SspPoExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Apply a `key=value` override, as on the command line.
///
/// # Safety
/// `exp` must be a live handle; `spec` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ssp_experiment_set_override(exp: *mut SspPoExperiment, spec: *const c_char) -> SspStatus {
    guard(|| {
        let exp = read_mut(exp, "experiment")?;
        let spec = read_str(spec, "override")?;
        exp.config.apply_override(spec)?;
        exp.report = None;
        Ok(())
    })
}

/// Replace the learner seeds.
///
/// # Safety
/// `exp` must be a live handle; `seeds` must hold `count` values.
#[no_mangle]
pub unsafe extern "C" fn ssp_experiment_set_seeds(exp: *mut SspPoExperiment, seeds: *const u64, count: usize) -> SspStatus {
    guard(|| {
        let exp = read_mut(exp, "experiment")?;
        if count == 0 {
            return Err(Failure(SspStatus::InvalidArgument, "at least one seed is required".into()));
        }
        if seeds.is_null() {
            return Err(Failure(SspStatus::NullPointer, "seeds is null".into()));
        }
        exp.config.seeds = std::slice::from_raw_parts(seeds, count).to_vec();
        exp.report = None;
        Ok(())
    })
}

/// Run every seed. A seed that fails mid-run keeps its completed episodes;
/// the call then returns that seed's error while the partial report stays
/// available.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssp_experiment_run(exp: *mut SspPoExperiment) -> SspStatus {
    guard(|| {
        let exp = read_mut(exp, "experiment")?;
        let report = run_experiment(&exp.config)?;
        let failure = report.runs.iter().find_map(|r| r.error.clone());
        exp.report = Some(report);
        match failure {
            Some(e) => Err(Failure(SspStatus::Numerical, e)),
            None => Ok(()),
        }
    })
}

unsafe fn report_of<'a>(exp: *const SspPoExperiment) -> Result<&'a RegretReport, Failure> {
    read_ref(exp, "experiment")?
        .report
        .as_ref()
        .ok_or_else(|| Failure(SspStatus::NotReady, "experiment has not been run".into()))
}

/// Seed-mean cumulative regret after each episode of the last run.
///
/// # Safety
/// `exp` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ssp_experiment_mean_regret(
    exp: *const SspPoExperiment,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> SspStatus {
    guard(|| copy_out(&report_of(exp)?.mean_regret(), out, capacity, written))
}

/// Write `episodes.csv`, `summary.csv` and `regret.svg` of the last run.
///
/// # Safety
/// `exp` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn ssp_experiment_write(exp: *const SspPoExperiment, dir: *const c_char) -> SspStatus {
    guard(|| {
        let report = report_of(exp)?;
        let dir = read_str(dir, "dir")?;
        report.write(Path::new(dir))?;
        Ok(())
    })
}

/// Hash that identifies the configuration in output files. Free with
/// [`ssp_string_free`].
///
/// # Safety
/// `exp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssp_experiment_config_hash(exp: *const SspPoExperiment, out: *mut *mut c_char) -> SspStatus {
    guard(|| {
        let exp = read_ref(exp, "experiment")?;
        if out.is_null() {
            return Err(Failure(SspStatus::NullPointer, "output pointer is null".into()));
        }
        *out = CString::new(exp.config.hash()).expect("hex digits").into_raw();
        Ok(())
    })
}
