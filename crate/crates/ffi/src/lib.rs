//! C interface to the `gorf` library.
//!
//! Kernels and feature models are opaque heap handles created by
//! `gorf_kernel_new` / `gorf_model_build` and released with the matching
//! `*_free`. Every fallible call returns a [`GorfStatus`]; on failure the
//! message is kept per thread and readable through
//! `gorf_last_error_message`. Strings handed out by the library must be
//! released with `gorf_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gorf::features::{approx_kernel, lift, Coupling, FeatureBuilder, FeatureModel, Method};
use gorf::kernels::{kernel_eval, KernelSpec};
use gorf::numerics::Rng;
use gorf::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GorfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Data = 4,
    Incompatible = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GorfMethod {
    Grff = 0,
    Gorf = 1,
    Rff = 2,
    Orf = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GorfCoupling {
    Stacked = 0,
    Truncated = 1,
    Block = 2,
}

/// A kernel with its prepared spectrum.
pub struct GorfKernel {
    builder: FeatureBuilder,
}

/// A sampled feature map.
pub struct GorfModel {
    model: FeatureModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> GorfStatus {
    match err {
        Error::Incompatible(_) | Error::Indefinite(_) | Error::ZeroMass(_) => GorfStatus::Incompatible,
        Error::Parse { .. } | Error::Data(_) | Error::Io(_) | Error::OffSphere(_) => GorfStatus::Data,
        e if e.exit_code() == 3 => GorfStatus::Numerical,
        _ => GorfStatus::InvalidArgument,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (GorfStatus, String)>) -> GorfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GorfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GorfStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (GorfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GorfStatus, String) {
    (GorfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (GorfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GorfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GorfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gorf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gorf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a kernel (inline form such as `gaussian:sigma=1` or TOML) and
/// prepare its spectrum. `dim` is used when the text does not set one;
/// pass 0 to require it in the text.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gorf_kernel_new(spec: *const c_char, dim: usize, out: *mut *mut GorfKernel) -> GorfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = text(spec, "spec")?;
        let spec = KernelSpec::parse(s, (dim > 0).then_some(dim)).map_err(lib_err)?;
        let builder = FeatureBuilder::new(&spec).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GorfKernel { builder }));
        Ok(())
    })
}

/// # Safety
/// `kernel` must come from `gorf_kernel_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gorf_kernel_free(kernel: *mut GorfKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// # Safety
/// `kernel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gorf_kernel_dim(kernel: *const GorfKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.builder.dim())
}

/// Positive and negative spectral masses.
///
/// # Safety
/// `kernel` must be a live handle; `pos` and `neg` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gorf_kernel_masses(kernel: *const GorfKernel, pos: *mut f64, neg: *mut f64) -> GorfStatus {
    guard(|| {
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        if pos.is_null() || neg.is_null() {
            return Err(null("output"));
        }
        let (p, n) = k.builder.prepared.masses();
        *pos = p;
        *neg = n;
        Ok(())
    })
}

/// Exact kernel value k(x, y).
///
/// # Safety
/// `x` and `y` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gorf_kernel_eval(
    kernel: *const GorfKernel,
    x: *const f64,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> GorfStatus {
    guard(|| {
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (x, y) = (slice(x, dim, "x")?, slice(y, dim, "y")?);
        *out = kernel_eval(&k.builder.spec, x, y).map_err(lib_err)?;
        Ok(())
    })
}

/// Sample a feature model with `s` features per part from `seed`.
///
/// # Safety
/// `kernel` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gorf_model_build(
    kernel: *const GorfKernel,
    method: GorfMethod,
    coupling: GorfCoupling,
    s: usize,
    seed: u64,
    out: *mut *mut GorfModel,
) -> GorfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        let method = match method {
            GorfMethod::Grff => Method::Grff,
            GorfMethod::Gorf => Method::Gorf,
            GorfMethod::Rff => Method::Rff,
            GorfMethod::Orf => Method::Orf,
        };
        let coupling = match coupling {
            GorfCoupling::Stacked => Coupling::Stacked,
            GorfCoupling::Truncated => Coupling::Truncated,
            GorfCoupling::Block => Coupling::Block,
        };
        let model = k.builder.build(method, coupling, s, &mut Rng::new(seed)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GorfModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gorf_model_free(model: *mut GorfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Length of a lifted vector (4s), or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gorf_model_lift_len(model: *const GorfModel) -> usize {
    model.as_ref().map_or(0, |m| 4 * m.model.s)
}

/// Write the lifted vector of `x` into `out` (capacity `out_len`). The
/// first half carries the positive sign, the second half the negative.
///
/// # Safety
/// `x` must point to `dim` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gorf_model_lift(
    model: *const GorfModel,
    x: *const f64,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> GorfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let x = slice(x, dim, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < 4 * m.model.s {
            return Err((GorfStatus::InvalidArgument, format!("output needs {} entries", 4 * m.model.s)));
        }
        let v = lift(&m.model, x).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(out, v.values.len()).copy_from_slice(&v.values);
        Ok(())
    })
}

/// Feature estimate of k(x, y).
///
/// # Safety
/// `x` and `y` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gorf_model_approx_kernel(
    model: *const GorfModel,
    x: *const f64,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> GorfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (x, y) = (slice(x, dim, "x")?, slice(y, dim, "y")?);
        *out = approx_kernel(&m.model, x, y).map_err(lib_err)?;
        Ok(())
    })
}

/// Serialize a model to JSON; free the result with `gorf_string_free`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gorf_model_to_json(model: *const GorfModel, out: *mut *mut c_char) -> GorfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let s = CString::new(m.model.to_json()).map_err(|e| (GorfStatus::Data, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `json` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gorf_model_from_json(json: *const c_char, out: *mut *mut GorfModel) -> GorfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = FeatureModel::from_json(text(json, "json")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GorfModel { model }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gorf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
