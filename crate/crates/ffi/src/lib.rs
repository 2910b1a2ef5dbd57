//! C ABI over the nortasp toolkit.
//!
//! Fallible calls return an [`NspStatus`]; on failure the message is kept per
//! thread and read back with [`nsp_last_error`]. Handles are opaque and must
//! be released with their `_free` function. Strings handed out by the
//! library are released with [`nsp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nortasp::grid::{GridInstance, HardeningPlan};
use nortasp::stats::{emd, EmpiricalMarginal};
use nortasp::twostage::TwoStageProblem;
use nortasp::{Error, NortaModel, ScenarioSet};

/// Status codes. Values 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NspStatus {
    Ok = 0,
    InvalidInput = 2,
    Numerical = 3,
    Resource = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Fitted NORTA model.
pub struct NspModel {
    inner: NortaModel,
}

/// Grid plus training scenarios.
pub struct NspProblem {
    inner: TwoStageProblem,
}

/// Out-of-sample shed statistics for one plan.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NspSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
    /// First-stage cost plus mean shed.
    pub v_oos: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: NspStatus, msg: impl Into<String>) -> NspStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> NspStatus {
    let status = match e.exit_code() {
        3 => NspStatus::Numerical,
        4 => NspStatus::Resource,
        _ => NspStatus::InvalidInput,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), NspStatus>) -> NspStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NspStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(NspStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn null(what: &str) -> NspStatus {
    fail(NspStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], NspStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, NspStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(NspStatus::InvalidInput, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nsp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn nsp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn nsp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Fits a model to `k` scenarios of `n` heights, row-major.
///
/// # Safety
/// `heights` must point to `k * n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsp_model_fit(
    heights: *const u32,
    k: usize,
    n: usize,
    out: *mut *mut NspModel,
) -> NspStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let total = k
            .checked_mul(n)
            .ok_or_else(|| fail(NspStatus::InvalidInput, "k * n overflows"))?;
        let data = slice(heights, total, "heights")?;
        let rows = data.chunks(n.max(1)).take(k).map(<[u32]>::to_vec).collect();
        let set = ScenarioSet::new(ScenarioSet::default_labels(n), rows).map_err(from_error)?;
        let model = NortaModel::fit(&set).map_err(from_error)?;
        *out = Box::into_raw(Box::new(NspModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsp_model_dim(model: *const NspModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim)
}

/// Draws `m` scenarios into `out` (row-major, `m * dim` values).
///
/// # Safety
/// `model` must be a live handle and `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn nsp_model_sample(
    model: *const NspModel,
    m: usize,
    seed: u64,
    out: *mut u32,
    out_len: usize,
) -> NspStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let need = m.saturating_mul(model.inner.dim);
        if out_len < need {
            return Err(fail(
                NspStatus::BufferTooSmall,
                format!("buffer holds {out_len} values, {need} needed"),
            ));
        }
        if need > 0 && out.is_null() {
            return Err(null("out"));
        }
        let set = model.inner.sample(m, seed).map_err(from_error)?;
        for (k, row) in set.rows().iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                *out.add(k * model.inner.dim + i) = v;
            }
        }
        Ok(())
    })
}

/// Serializes the model as JSON; free the string with `nsp_string_free`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsp_model_to_json(model: *const NspModel, out: *mut *mut c_char) -> NspStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&model.inner)
            .map_err(|e| fail(NspStatus::InvalidInput, e.to_string()))?;
        *out = CString::new(text).expect("JSON has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsp_model_from_json(json: *const c_char, out: *mut *mut NspModel) -> NspStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model: NortaModel =
            serde_json::from_str(text).map_err(|e| fail(NspStatus::InvalidInput, e.to_string()))?;
        model.validate().map_err(from_error)?;
        *out = Box::into_raw(Box::new(NspModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsp_model_free(model: *mut NspModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Earth mover's distance between two samples' empirical distributions.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsp_emd(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut f64,
) -> NspStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let f = EmpiricalMarginal::from_slice(slice(a, na, "a")?).map_err(from_error)?;
        let g = EmpiricalMarginal::from_slice(slice(b, nb, "b")?).map_err(from_error)?;
        *out = emd(&f, &g);
        Ok(())
    })
}

/// Loads a grid JSON file and a scenario CSV file.
///
/// # Safety
/// Paths must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsp_problem_load(
    grid_path: *const c_char,
    scenarios_path: *const c_char,
    out: *mut *mut NspProblem,
) -> NspStatus {
    guard(|| {
        let g = str_arg(grid_path, "grid_path")?;
        let s = str_arg(scenarios_path, "scenarios_path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = GridInstance::load(Path::new(g)).map_err(from_error)?;
        let set = ScenarioSet::read_csv(Path::new(s)).map_err(from_error)?;
        let problem = TwoStageProblem::new(grid, &set).map_err(from_error)?;
        *out = Box::into_raw(Box::new(NspProblem { inner: problem }));
        Ok(())
    })
}

/// Number of flooded substations, the length of every height vector.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsp_problem_n_flooded(problem: *const NspProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.grid().n_flooded())
}

unsafe fn plan_arg(p: &NspProblem, heights: *const u32, len: usize) -> Result<HardeningPlan, NspStatus> {
    let n = p.inner.grid().n_flooded();
    if len != n {
        return Err(fail(
            NspStatus::InvalidInput,
            format!("expected {n} heights, got {len}"),
        ));
    }
    Ok(HardeningPlan::from_heights(slice(heights, len, "heights")?.to_vec()))
}

/// Exact first-stage optimum for `budget`; writes heights and SAA value.
///
/// # Safety
/// `heights_out` must hold `len` values; `value_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsp_problem_solve(
    problem: *const NspProblem,
    budget: f64,
    heights_out: *mut u32,
    len: usize,
    value_out: *mut f64,
) -> NspStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let n = p.inner.grid().n_flooded();
        if len < n {
            return Err(fail(NspStatus::BufferTooSmall, format!("need {n} heights, buffer holds {len}")));
        }
        if value_out.is_null() || (n > 0 && heights_out.is_null()) {
            return Err(null("output"));
        }
        let sol = p.inner.solve_first_stage(budget).map_err(from_error)?;
        for (i, &h) in sol.plan.height.iter().enumerate() {
            *heights_out.add(i) = h;
        }
        *value_out = sol.value;
        Ok(())
    })
}

/// SAA objective of a height vector over the training scenarios.
///
/// # Safety
/// `heights` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsp_problem_saa(
    problem: *const NspProblem,
    heights: *const u32,
    len: usize,
    out: *mut f64,
) -> NspStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let plan = plan_arg(p, heights, len)?;
        *out = p.inner.saa_objective(&plan).map_err(from_error)?;
        Ok(())
    })
}

/// Evaluates a plan on `m` synthetic scenarios (row-major, `m * len`
/// values, columns in flooded-substation order).
///
/// # Safety
/// Pointers must hold the stated number of values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsp_problem_evaluate(
    problem: *const NspProblem,
    heights: *const u32,
    len: usize,
    synthetic: *const u32,
    m: usize,
    out: *mut NspSummary,
) -> NspStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let plan = plan_arg(p, heights, len)?;
        let data = slice(synthetic, m.saturating_mul(len), "synthetic")?;
        let rows = (0..m).map(|k| data[k * len..(k + 1) * len].to_vec()).collect();
        let set = ScenarioSet::new(p.inner.grid().flooded_labels(), rows).map_err(from_error)?;
        let r = p.inner.evaluate_oos(&plan, &set).map_err(from_error)?;
        let s = r.summary;
        *out = NspSummary {
            mean: s.mean,
            std: s.std,
            min: s.min,
            q25: s.q25,
            q50: s.q50,
            q75: s.q75,
            max: s.max,
            v_oos: r.v_oos,
        };
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsp_problem_free(problem: *mut NspProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}
