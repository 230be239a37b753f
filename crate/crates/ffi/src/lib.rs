//! C ABI over `grouprisk`.
//!
//! Models are opaque `GrModel` handles created from a JSON config or a preset
//! and released with `gr_model_free`. Every fallible call returns a
//! `GrStatus`; on failure the message is kept per thread and read back with
//! `gr_last_error_message`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use grouprisk::config::ModelConfigFile;
use grouprisk::reduction::{reduce, ReducedClModel, RiskModelSpec};
use grouprisk::ruin;
use grouprisk::simulation::{estimate_psi_ladder_grid, SimulationConfig};
use grouprisk::{catalog, Error, LatticeSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigParse = 3,
    Schema = 4,
    InvalidParams = 5,
    UnknownPreset = 6,
    NetProfitViolated = 7,
    /// Lattice, transform or series failure.
    Numerical = 8,
    NotReduced = 9,
    Panic = 10,
}

/// Opaque model handle.
pub struct GrModel {
    spec: RiskModelSpec,
    config: ModelConfigFile,
    reduced: Option<ReducedClModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> GrStatus {
    match e {
        Error::ConfigParse(_) => GrStatus::ConfigParse,
        Error::Schema(_) => GrStatus::Schema,
        Error::InvalidParams(_) | Error::Io(_) => GrStatus::InvalidParams,
        Error::UnknownPreset(_) => GrStatus::UnknownPreset,
        Error::NetProfitViolated { .. } => GrStatus::NetProfitViolated,
        _ => GrStatus::Numerical,
    }
}

struct Failure(GrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GrStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus a stored message.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(GrStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn model_ref<'a>(m: *const GrModel) -> Result<&'a GrModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn reduced<'a>(m: *const GrModel) -> Result<&'a ReducedClModel, Failure> {
    model_ref(m)?
        .reduced
        .as_ref()
        .ok_or_else(|| Failure(GrStatus::NotReduced, "call gr_model_reduce first".into()))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

fn into_handle(config: ModelConfigFile) -> Result<*mut GrModel, Failure> {
    let spec = config.to_spec()?;
    Ok(Box::into_raw(Box::new(GrModel { spec, config, reduced: None })))
}

/// Creates a model from a JSON config. `*out` receives the handle.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_model_from_json(json: *const c_char, out: *mut *mut GrModel) -> GrStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let h = into_handle(ModelConfigFile::from_json_str(text)?)?;
        out.write(h);
        Ok(())
    })
}

/// Creates a model from a catalog preset; `params_json` may be null.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_model_from_preset(
    name: *const c_char,
    params_json: *const c_char,
    out: *mut *mut GrModel,
) -> GrStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let params = if params_json.is_null() {
            serde_json::Value::Null
        } else {
            serde_json::from_str(str_arg(params_json, "params_json")?)
                .map_err(|e| Failure(GrStatus::InvalidParams, format!("params_json: {e}")))?
        };
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let h = into_handle(catalog::build(name, &params)?)?;
        out.write(h);
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from a constructor of this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn gr_model_free(model: *mut GrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds the lattice model. `step <= 0` or `points == 0` selects the config
/// or model default.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gr_model_reduce(model: *mut GrModel, step: f64, points: usize) -> GrStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let lattice = if step > 0.0 && points > 0 {
            LatticeSpec::new(step, points)?
        } else {
            m.config.lattice(&m.spec)?
        };
        m.reduced = Some(reduce(&m.spec, lattice)?);
        Ok(())
    })
}

/// Intensity of non-empty groups and mean total claim per group.
///
/// # Safety
/// `model` must be a reduced live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_reduced_parameters(model: *const GrModel, lambda: *mut f64, y1_mean: *mut f64) -> GrStatus {
    guard(|| {
        let r = reduced(model)?;
        write_out(lambda, r.lambda)?;
        write_out(y1_mean, r.y1_mean)
    })
}

/// Safety loading `rho`.
///
/// # Safety
/// `model` must be a reduced live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_safety_loading(model: *const GrModel, out: *mut f64) -> GrStatus {
    guard(|| {
        let m = model_ref(model)?;
        write_out(out, ruin::safety_loading(reduced(model)?, m.spec.premium_rate))
    })
}

/// Ruin probability at zero capital.
///
/// # Safety
/// `model` must be a reduced live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_ruin_probability_zero(model: *const GrModel, out: *mut f64) -> GrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (psi0, _) = ruin::ruin_at_zero(reduced(model)?, m.spec.premium_rate)?;
        write_out(out, psi0)
    })
}

/// Conditional mean ruin time from zero capital.
///
/// # Safety
/// `model` must be a reduced live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_expected_ruin_time_zero(model: *const GrModel, out: *mut f64) -> GrStatus {
    guard(|| {
        let m = model_ref(model)?;
        write_out(out, ruin::expected_ruin_time_zero(reduced(model)?, m.spec.premium_rate)?)
    })
}

/// Lundberg exponent; `*exists` is false (and `*out` untouched) for
/// heavy-tailed claims.
///
/// # Safety
/// `model` must be a reduced live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_lundberg_exponent(model: *const GrModel, out: *mut f64, exists: *mut bool) -> GrStatus {
    guard(|| {
        let m = model_ref(model)?;
        match ruin::lundberg_exponent(reduced(model)?, m.spec.premium_rate)? {
            Some(e) => {
                write_out(out, e)?;
                write_out(exists, true)
            }
            None => write_out(exists, false),
        }
    })
}

/// Ruin probabilities at `n` capitals by the compound-geometric series.
///
/// # Safety
/// `u` must point to `n` readable and `out` to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gr_psi(model: *const GrModel, u: *const f64, n: usize, tol: f64, out: *mut f64) -> GrStatus {
    guard(|| {
        let m = model_ref(model)?;
        if n == 0 {
            return Ok(());
        }
        if u.is_null() || out.is_null() {
            return Err(null("array argument"));
        }
        let us = std::slice::from_raw_parts(u, n);
        let table = ruin::psi_pollaczek_khinchin(reduced(model)?, m.spec.premium_rate, us, tol)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&table.psi);
        Ok(())
    })
}

/// Ladder-height Monte Carlo estimates (and standard errors) of the ruin
/// probability at `n` capitals.
///
/// # Safety
/// `u` must point to `n` readable doubles; `estimate` and `std_error` to `n`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gr_simulate_ladder(
    model: *const GrModel,
    u: *const f64,
    n: usize,
    replications: u64,
    seed: u64,
    estimate: *mut f64,
    std_error: *mut f64,
) -> GrStatus {
    guard(|| {
        let m = model_ref(model)?;
        if n == 0 {
            return Ok(());
        }
        if u.is_null() || estimate.is_null() || std_error.is_null() {
            return Err(null("array argument"));
        }
        let cfg = SimulationConfig { replications, seed, ..SimulationConfig::default() };
        let us = std::slice::from_raw_parts(u, n);
        let est = estimate_psi_ladder_grid(reduced(model)?, m.spec.premium_rate, us, &cfg)?;
        for (i, e) in est.iter().enumerate() {
            estimate.add(i).write(e.estimate);
            std_error.add(i).write(e.std_error);
        }
        Ok(())
    })
}

/// Length in bytes of the last error message on this thread (0 when none),
/// excluding the terminating NUL.
#[no_mangle]
pub extern "C" fn gr_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.len()))
}

/// Copies the last error message into `buf` (truncated, NUL-terminated) and
/// returns the full message length. Returns 0 when there is no error.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn gr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Clears the last error on this thread.
#[no_mangle]
pub extern "C" fn gr_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
