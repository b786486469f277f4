//! C interface to Euclidean alignment.
//!
//! All objects are opaque handles owned by the caller and released with the
//! matching `_free` function. Every fallible call returns a
//! [`CovalignStatus`]; on failure a description is available from
//! [`covalign_last_error`] on the same thread.
//!
//! Trial buffers are `double` arrays laid out trial-major, then channel,
//! then sample: element `(n, i, j)` sits at `(n * channels + i) * samples + j`.
//! Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use covalign::alignment::{diag_dominance, ea_residual, fit_ea, EaState, EaTransform, TransformRecord};
use covalign::{DomainSet, Error, Trial};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovalignStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    DegenerateCovariance = 4,
    EmptyState = 5,
    Serialization = 6,
    Panic = 7,
}

/// Trials of one domain.
pub struct CovalignDataset {
    inner: DomainSet,
}

/// A fitted alignment `R̄^{-1/2}`.
pub struct CovalignEa {
    inner: EaTransform,
}

/// Running covariance sum for incremental fitting.
pub struct CovalignEaState {
    inner: EaState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> CovalignStatus {
    match e {
        Error::ShapeMismatch { .. } => CovalignStatus::ShapeMismatch,
        Error::DegenerateCovariance(_) => CovalignStatus::DegenerateCovariance,
        Error::EmptyState => CovalignStatus::EmptyState,
        Error::Json { .. } => CovalignStatus::Serialization,
        _ => CovalignStatus::InvalidArgument,
    }
}

struct Fail(CovalignStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CovalignStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(CovalignStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CovalignStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CovalignStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            CovalignStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(
            CovalignStatus::ShapeMismatch,
            format!("{what} holds {len} values, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn checked_len(n: usize, c: usize, t: usize) -> Result<usize, Fail> {
    n.checked_mul(c)
        .and_then(|v| v.checked_mul(t))
        .ok_or_else(|| invalid("buffer size overflows"))
}

fn trial_from_rows(values: &[f64], c: usize, t: usize, rate: f64) -> Result<Trial, Fail> {
    Ok(Trial::new(DMatrix::from_row_slice(c, t, values), rate)?)
}

fn copy_rows(m: &DMatrix<f64>, out: &mut [f64]) {
    let cols = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..cols {
            out[i * cols + j] = m[(i, j)];
        }
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn covalign_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn covalign_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `n_trials * channels * samples` values into a new dataset.
///
/// # Safety
/// `data` must point to that many readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_dataset_new(
    data: *const f64,
    n_trials: usize,
    channels: usize,
    samples: usize,
    sampling_rate: f64,
    out: *mut *mut CovalignDataset,
) -> CovalignStatus {
    guard(|| {
        if n_trials == 0 || channels == 0 || samples == 0 {
            return Err(invalid("trial, channel and sample counts must be positive"));
        }
        let per = channels * samples;
        let values = slice(data, checked_len(n_trials, channels, samples)?, "data")?;
        let trials = values
            .chunks_exact(per)
            .map(|chunk| trial_from_rows(chunk, channels, samples, sampling_rate))
            .collect::<Result<Vec<_>, _>>()?;
        let inner = DomainSet::new("ffi", trials, None)?;
        put(out, CovalignDataset { inner })
    })
}

/// # Safety
/// `ds` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn covalign_dataset_free(ds: *mut CovalignDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Writes trial count, channels and samples; any output may be null.
///
/// # Safety
/// `ds` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_dataset_shape(
    ds: *const CovalignDataset,
    n_trials: *mut usize,
    channels: *mut usize,
    samples: *mut usize,
) -> CovalignStatus {
    guard(|| {
        let d = &as_ref(ds, "dataset")?.inner;
        for (p, v) in [(n_trials, d.len()), (channels, d.channels()), (samples, d.samples())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the dataset back out in the input layout.
///
/// # Safety
/// `ds` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn covalign_dataset_copy_data(
    ds: *const CovalignDataset,
    out: *mut f64,
    len: usize,
) -> CovalignStatus {
    guard(|| {
        let d = &as_ref(ds, "dataset")?.inner;
        let per = d.channels() * d.samples();
        let buf = out_slice(out, len, d.len() * per, "output buffer")?;
        for (trial, chunk) in d.trials().iter().zip(buf.chunks_exact_mut(per)) {
            copy_rows(trial.data(), chunk);
        }
        Ok(())
    })
}

/// Fits EA on every trial of `ds`.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_fit(ds: *const CovalignDataset, out: *mut *mut CovalignEa) -> CovalignStatus {
    guard(|| {
        let inner = fit_ea(&as_ref(ds, "dataset")?.inner)?;
        put(out, CovalignEa { inner })
    })
}

/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_free(t: *mut CovalignEa) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live handle; `channels` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_channels(t: *const CovalignEa, channels: *mut usize) -> CovalignStatus {
    guard(|| {
        let c = as_ref(t, "transform")?.inner.channels();
        *as_mut(channels, "channels")? = c;
        Ok(())
    })
}

/// Copies the `c x c` alignment map, row-major.
///
/// # Safety
/// `t` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_map(t: *const CovalignEa, out: *mut f64, len: usize) -> CovalignStatus {
    guard(|| {
        let m = as_ref(t, "transform")?.inner.map();
        copy_rows(m, out_slice(out, len, m.len(), "output buffer")?);
        Ok(())
    })
}

/// Copies the `c x c` reference mean covariance, row-major.
///
/// # Safety
/// `t` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_reference(t: *const CovalignEa, out: *mut f64, len: usize) -> CovalignStatus {
    guard(|| {
        let m = as_ref(t, "transform")?.inner.reference().values();
        copy_rows(m, out_slice(out, len, m.len(), "output buffer")?);
        Ok(())
    })
}

/// Aligns every trial of `ds` into a new dataset.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_apply(
    t: *const CovalignEa,
    ds: *const CovalignDataset,
    out: *mut *mut CovalignDataset,
) -> CovalignStatus {
    guard(|| {
        let t = &as_ref(t, "transform")?.inner;
        let inner = t.apply_domain(&as_ref(ds, "dataset")?.inner)?;
        put(out, CovalignDataset { inner })
    })
}

/// Frobenius distance between the dataset's mean covariance and identity.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_residual(ds: *const CovalignDataset, out: *mut f64) -> CovalignStatus {
    guard(|| {
        let r = ea_residual(&as_ref(ds, "dataset")?.inner);
        *as_mut(out, "output")? = r;
        Ok(())
    })
}

/// Share of absolute mass on the diagonal of a row-major `n x n` matrix.
///
/// # Safety
/// `matrix` must hold `n * n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_diag_dominance(matrix: *const f64, n: usize, out: *mut f64) -> CovalignStatus {
    guard(|| {
        let len = n.checked_mul(n).ok_or_else(|| invalid("size overflows"))?;
        let m = DMatrix::from_row_slice(n, n, slice(matrix, len, "matrix")?);
        *as_mut(out, "output")? = diag_dominance(&m);
        Ok(())
    })
}

/// JSON audit record of the transform. Free the string with
/// [`covalign_string_free`].
///
/// # Safety
/// `t` must be a live handle; `domain_id` must be null or a NUL-terminated
/// UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_to_json(
    t: *const CovalignEa,
    domain_id: *const c_char,
    out: *mut *mut c_char,
) -> CovalignStatus {
    guard(|| {
        let t = &as_ref(t, "transform")?.inner;
        let id = if domain_id.is_null() {
            ""
        } else {
            CStr::from_ptr(domain_id)
                .to_str()
                .map_err(|_| invalid("domain id is not UTF-8"))?
        };
        let json = serde_json::to_string(&TransformRecord::ea(id, t))
            .map_err(|e| Fail(CovalignStatus::Serialization, e.to_string()))?;
        let s = CString::new(json).map_err(|e| Fail(CovalignStatus::Serialization, e.to_string()))?;
        *as_mut(out, "output")? = s.into_raw();
        Ok(())
    })
}

/// Rebuilds a transform from [`covalign_ea_to_json`] output.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_from_json(json: *const c_char, out: *mut *mut CovalignEa) -> CovalignStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| invalid("json is not UTF-8"))?;
        let record: TransformRecord =
            serde_json::from_str(text).map_err(|e| Fail(CovalignStatus::Serialization, e.to_string()))?;
        let inner = record
            .to_ea()
            .ok_or_else(|| Fail(CovalignStatus::Serialization, "not an EA transform record".into()))??;
        put(out, CovalignEa { inner })
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn covalign_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_state_new(out: *mut *mut CovalignEaState) -> CovalignStatus {
    guard(|| put(out, CovalignEaState { inner: EaState::new() }))
}

/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_state_free(state: *mut CovalignEaState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Adds one `channels x samples` row-major trial to the running sum.
///
/// # Safety
/// `state` must be a live handle; `trial` must hold `channels * samples`
/// readable doubles.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_state_update(
    state: *mut CovalignEaState,
    trial: *const f64,
    channels: usize,
    samples: usize,
) -> CovalignStatus {
    guard(|| {
        let s = &mut as_mut(state, "state")?.inner;
        if channels == 0 || samples == 0 {
            return Err(invalid("channel and sample counts must be positive"));
        }
        let values = slice(trial, checked_len(1, channels, samples)?, "trial")?;
        // Sampling rate does not enter the covariance.
        s.push(&trial_from_rows(values, channels, samples, 1.0)?)?;
        Ok(())
    })
}

/// # Safety
/// `state` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_state_count(state: *const CovalignEaState, count: *mut usize) -> CovalignStatus {
    guard(|| {
        let n = as_ref(state, "state")?.inner.count();
        *as_mut(count, "count")? = n;
        Ok(())
    })
}

/// Transform from the trials absorbed so far. The state stays usable.
///
/// # Safety
/// `state` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covalign_ea_state_finalize(
    state: *const CovalignEaState,
    out: *mut *mut CovalignEa,
) -> CovalignStatus {
    guard(|| {
        let inner = as_ref(state, "state")?.inner.finalize()?;
        put(out, CovalignEa { inner })
    })
}
