//! C ABI for the abflux laboratory.
//!
//! Every function returns an [`AbfluxStatus`]; on failure the message is kept
//! per thread and read with [`abflux_last_error`]. Handles are opaque and
//! released with their `_free` function. Strings returned through `out`
//! parameters are released with [`abflux_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use abflux::eigen::{count_below_many, lowest_eigenvalue};
use abflux::geometry::{BoxGeometry, FluxConfiguration, ModelSpec};
use abflux::ids::{estimate_ids, IdsParams};
use abflux::lattice::{assemble, Boundary, Grid, LatticeOperator};
use abflux::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbfluxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Computation = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbfluxBoundary {
    Dirichlet = 0,
    Neumann = 1,
}

impl From<AbfluxBoundary> for Boundary {
    fn from(b: AbfluxBoundary) -> Self {
        match b {
            AbfluxBoundary::Dirichlet => Boundary::Dirichlet,
            AbfluxBoundary::Neumann => Boundary::Neumann,
        }
    }
}

/// A sampled or parsed flux configuration.
pub struct AbfluxConfiguration(FluxConfiguration);

/// An assembled magnetic lattice operator.
pub struct AbfluxOperator(LatticeOperator);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AbfluxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AbfluxStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(&format!("{name} is null"));
            AbfluxStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(m))) => {
            set_error(&m);
            AbfluxStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            if e.is_config_error() {
                AbfluxStatus::InvalidArgument
            } else {
                AbfluxStatus::Computation
            }
        }
        Err(_) => {
            set_error("internal panic");
            AbfluxStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure::Invalid(format!("{name}: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    Ok(CString::new(s).map_err(|e| Failure::Invalid(e.to_string()))?.into_raw())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn abflux_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn abflux_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abflux_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Samples a configuration of `model_json` on the box of index `k`.
///
/// # Safety
/// `model_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abflux_configuration_sample(
    model_json: *const c_char,
    k: u32,
    seed: u64,
    out: *mut *mut AbfluxConfiguration,
) -> AbfluxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model: ModelSpec = serde_json::from_str(str_arg(model_json, "model_json")?)
            .map_err(|e| Failure::Invalid(format!("model_json: {e}")))?;
        model.validate()?;
        let config = model.sample(seed, BoxGeometry::new(k))?;
        *out = Box::into_raw(Box::new(AbfluxConfiguration(config)));
        Ok(())
    })
}

/// Parses a configuration document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abflux_configuration_from_json(
    json: *const c_char,
    out: *mut *mut AbfluxConfiguration,
) -> AbfluxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config = FluxConfiguration::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(AbfluxConfiguration(config)));
        Ok(())
    })
}

/// Serializes a configuration; release the result with [`abflux_string_free`].
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abflux_configuration_to_json(
    config: *const AbfluxConfiguration,
    out: *mut *mut c_char,
) -> AbfluxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = into_c_string(ref_arg(config, "config")?.0.to_json()?)?;
        Ok(())
    })
}

/// Number of flux points.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abflux_configuration_len(
    config: *const AbfluxConfiguration,
    out: *mut usize,
) -> AbfluxStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(config, "config")?.0.len();
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abflux_configuration_free(config: *mut AbfluxConfiguration) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Assembles the operator of `config` with `m` mesh intervals per unit length.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abflux_operator_assemble(
    config: *const AbfluxConfiguration,
    m: u32,
    boundary: AbfluxBoundary,
    out: *mut *mut AbfluxOperator,
) -> AbfluxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config = &ref_arg(config, "config")?.0;
        let op = assemble(config, &Grid::new(config.geometry(), m)?, boundary.into())?;
        *out = Box::into_raw(Box::new(AbfluxOperator(op)));
        Ok(())
    })
}

/// Number of unknowns.
///
/// # Safety
/// `op` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abflux_operator_dim(op: *const AbfluxOperator, out: *mut usize) -> AbfluxStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(op, "op")?.0.dim();
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abflux_operator_free(op: *mut AbfluxOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Smallest eigenvalue.
///
/// # Safety
/// `op` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abflux_lowest_eigenvalue(op: *const AbfluxOperator, out: *mut f64) -> AbfluxStatus {
    guard(|| {
        *out_arg(out, "out")? = lowest_eigenvalue(&ref_arg(op, "op")?.0)?;
        Ok(())
    })
}

/// Eigenvalue counts at `n` ascending energies, written to `counts[0..n]`.
///
/// # Safety
/// `energies` and `counts` must point to `n` elements each.
#[no_mangle]
pub unsafe extern "C" fn abflux_count_below(
    op: *const AbfluxOperator,
    energies: *const f64,
    n: usize,
    counts: *mut u64,
) -> AbfluxStatus {
    guard(|| {
        let op = &ref_arg(op, "op")?.0;
        if n == 0 {
            return Ok(());
        }
        if energies.is_null() {
            return Err(Failure::Null("energies"));
        }
        if counts.is_null() {
            return Err(Failure::Null("counts"));
        }
        let e = std::slice::from_raw_parts(energies, n);
        let out = std::slice::from_raw_parts_mut(counts, n);
        for (o, c) in out.iter_mut().zip(count_below_many(op, e)?) {
            *o = c as u64;
        }
        Ok(())
    })
}

/// Monte Carlo IDS for `params_json` (model, k, m, boundary, energies, seed)
/// over `samples` samples; writes the curve as JSON.
///
/// # Safety
/// `params_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abflux_estimate_ids(
    params_json: *const c_char,
    samples: u64,
    out: *mut *mut c_char,
) -> AbfluxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p: IdsParams = serde_json::from_str(str_arg(params_json, "params_json")?)
            .map_err(|e| Failure::Invalid(format!("params_json: {e}")))?;
        let curve = estimate_ids(&p.model, p.k, p.boundary, p.m, samples, &p.energies, p.seed)?;
        *out = into_c_string(serde_json::to_string(&curve).map_err(Error::from)?)?;
        Ok(())
    })
}
