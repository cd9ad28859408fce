//! C ABI over the `mqi` library.
//!
//! Objects are opaque heap handles returned through out-pointers
//! and released with the matching `mqi_*_free`. Every fallible function
//! returns an [`MqiStatus`]; on failure [`mqi_last_error`] describes the
//! problem. Panics never cross the boundary: they are caught and reported
//! as [`MqiStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};

use mqi::dgp::{generate_dataset, Dataset};
use mqi::evaluation::{spearman, Indicator, Metric};
use mqi::harness::{run_replication, Replication};
use mqi::{derive_parameters, Scenario, ScenarioParam, StreamSeed};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqiStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was malformed: invalid UTF-8, unknown name, wrong length.
    InvalidArgument = 2,
    /// The scenario or configuration was rejected.
    Config = 3,
    /// The requested value is not available, e.g. a metric of a failed fit.
    Missing = 4,
    /// The computation or an I/O operation failed.
    Runtime = 5,
    /// An internal panic was caught.
    Panic = 6,
}

/// Opaque scenario handle.
pub struct MqiScenario(Scenario);

/// Opaque handle to a generated dataset.
pub struct MqiDataset(Dataset);

/// Opaque handle to a fitted and scored replication.
pub struct MqiReplication(Replication);

/// Constants implied by a scenario.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MqiDerived {
    pub region_coef: f64,
    pub region_resid_var: f64,
    pub volume_coef: f64,
    pub hospital_resid_var: f64,
    pub max_volume_w0: u32,
    pub max_volume_w1: u32,
    pub volume_var: f64,
    pub casemix_slope: f64,
    pub casemix_resid_var: f64,
    pub patient_share_w1: f64,
    pub patient_mean_volume: f64,
    pub intercept: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(bytes).unwrap_or_default());
}

struct Failure(MqiStatus, String);

impl From<mqi::Error> for Failure {
    fn from(e: mqi::Error) -> Self {
        let code = if e.is_config() { MqiStatus::Config } else { MqiStatus::Runtime };
        Failure(code, e.to_string())
    }
}

impl From<mqi::error::ScenarioError> for Failure {
    fn from(e: mqi::error::ScenarioError) -> Self {
        Failure(MqiStatus::Config, e.to_string())
    }
}

impl From<mqi::error::ConfigError> for Failure {
    fn from(e: mqi::error::ConfigError) -> Self {
        Failure(MqiStatus::Config, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MqiStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MqiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MqiStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MqiStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(MqiStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn mqi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mqi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates the baseline scenario.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_scenario_baseline(out: *mut *mut MqiScenario) -> MqiStatus {
    guard(|| put(out, Box::into_raw(Box::new(MqiScenario(Scenario::baseline()))), "out"))
}

/// Parses a scenario from configuration text. Missing keys take baseline
/// values; a `[sweep]` section is validated and then ignored.
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_scenario_from_toml(toml: *const c_char, out: *mut *mut MqiScenario) -> MqiStatus {
    guard(|| {
        let config = mqi::config::parse_config(text(toml, "toml")?)?;
        put(out, Box::into_raw(Box::new(MqiScenario(config.scenario))), "out")
    })
}

/// Sets one parameter by its configuration key (`rho`, `sigma_eta`, ...).
/// The scenario is left unchanged if the result would be invalid.
///
/// # Safety
/// `scenario` must be null or a live handle; `key` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mqi_scenario_set(scenario: *mut MqiScenario, key: *const c_char, value: f64) -> MqiStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        let param: ScenarioParam = text(key, "key")?
            .parse()
            .map_err(|e: mqi::error::ScenarioError| Failure(MqiStatus::InvalidArgument, e.to_string()))?;
        let next = s.0.with(param, value)?;
        next.validate()?;
        s.0 = next;
        Ok(())
    })
}

/// Reads one parameter by its configuration key.
///
/// # Safety
/// `scenario` must be null or a live handle; `key` null or NUL-terminated;
/// `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_scenario_get(
    scenario: *const MqiScenario,
    key: *const c_char,
    out: *mut f64,
) -> MqiStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let param: ScenarioParam = text(key, "key")?
            .parse()
            .map_err(|e: mqi::error::ScenarioError| Failure(MqiStatus::InvalidArgument, e.to_string()))?;
        put(out, s.0.get(param), "out")
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mqi_scenario_free(scenario: *mut MqiScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Computes the derived constants of a scenario.
///
/// # Safety
/// `scenario` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_derive(scenario: *const MqiScenario, out: *mut MqiDerived) -> MqiStatus {
    guard(|| {
        let d = derive_parameters(&handle(scenario, "scenario")?.0)?;
        let derived = MqiDerived {
            region_coef: d.region_coef,
            region_resid_var: d.region_resid_var,
            volume_coef: d.volume_coef,
            hospital_resid_var: d.hospital_resid_var,
            max_volume_w0: d.max_volume_w0,
            max_volume_w1: d.max_volume_w1,
            volume_var: d.volume_var,
            casemix_slope: d.casemix_slope,
            casemix_resid_var: d.casemix_resid_var,
            patient_share_w1: d.patient_share_w1,
            patient_mean_volume: d.patient_mean_volume,
            intercept: d.intercept,
        };
        put(out, derived, "out")
    })
}

/// Generates the dataset of replication `replication` at sweep point
/// `point` under `master_seed`.
///
/// # Safety
/// `scenario` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_dataset_generate(
    scenario: *const MqiScenario,
    master_seed: u64,
    point: u32,
    replication: u32,
    out: *mut *mut MqiDataset,
) -> MqiStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let ds = generate_dataset(&s.0, StreamSeed::new(master_seed, point, replication))?;
        put(out, Box::into_raw(Box::new(MqiDataset(ds))), "out")
    })
}

/// Numbers of regions, hospitals and patients. Any output pointer may be
/// null.
///
/// # Safety
/// `dataset` must be null or a live handle; non-null outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_dataset_counts(
    dataset: *const MqiDataset,
    regions: *mut usize,
    hospitals: *mut usize,
    patients: *mut usize,
) -> MqiStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        for (p, v) in [(regions, d.regions.len()), (hospitals, d.hospitals.len()), (patients, d.patients.len())] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Writes the patient-level CSV dump to `path`.
///
/// # Safety
/// `dataset` must be null or a live handle; `path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mqi_dataset_write_csv(dataset: *const MqiDataset, path: *const c_char) -> MqiStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        let path = text(path, "path")?;
        let file = File::create(path).map_err(|e| Failure(MqiStatus::Runtime, format!("{path}: {e}")))?;
        d.write_csv(BufWriter::new(file))?;
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mqi_dataset_free(dataset: *mut MqiDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Generates, fits and scores one replication; identical to the
/// replication the experiment harness runs for the same seed triple.
///
/// # Safety
/// `scenario` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_replication_run(
    scenario: *const MqiScenario,
    master_seed: u64,
    point: u32,
    replication: u32,
    out: *mut *mut MqiReplication,
) -> MqiStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let rep = run_replication(&s.0, StreamSeed::new(master_seed, point, replication))?;
        put(out, Box::into_raw(Box::new(MqiReplication(rep))), "out")
    })
}

/// One evaluation metric, named as in the summary CSV (`shor`, `spearman`,
/// ...). Returns [`MqiStatus::Missing`] when the metric is undefined.
///
/// # Safety
/// `replication` must be null or a live handle; names null or
/// NUL-terminated; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_replication_metric(
    replication: *const MqiReplication,
    indicator: *const c_char,
    metric: *const c_char,
    out: *mut f64,
) -> MqiStatus {
    guard(|| {
        let r = &handle(replication, "replication")?.0;
        let iname = text(indicator, "indicator")?;
        let mname = text(metric, "metric")?;
        let i = Indicator::from_name(iname)
            .ok_or_else(|| Failure(MqiStatus::InvalidArgument, format!("unknown indicator `{iname}`")))?;
        let m = Metric::from_name(mname)
            .ok_or_else(|| Failure(MqiStatus::InvalidArgument, format!("unknown metric `{mname}`")))?;
        if !i.metrics().contains(&m) {
            return Err(Failure(MqiStatus::InvalidArgument, format!("{iname} has no {mname} metric")));
        }
        let v =
            r.metrics.get(i, m).ok_or_else(|| Failure(MqiStatus::Missing, format!("{iname} {mname} is missing")))?;
        put(out, v, "out")
    })
}

/// # Safety
/// `replication` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mqi_replication_free(replication: *mut MqiReplication) {
    if !replication.is_null() {
        drop(Box::from_raw(replication));
    }
}

/// Spearman rank correlation with midranks for ties. Returns
/// [`MqiStatus::Missing`] for constant input or fewer than three values.
///
/// # Safety
/// `a` and `b` must each point to `n` readable doubles; `out` null or valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn mqi_spearman(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> MqiStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("input"));
        }
        let (a, b) = if n == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(a, n), std::slice::from_raw_parts(b, n))
        };
        let rho = spearman(a, b).ok_or_else(|| Failure(MqiStatus::Missing, "correlation undefined".into()))?;
        put(out, rho, "out")
    })
}
