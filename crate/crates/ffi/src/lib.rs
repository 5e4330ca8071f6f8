//! C ABI over the `clr` library.
//!
//! Every function returns a [`ClrStatus`]; on failure the message is available
//! from [`clr_last_error`] on the same thread. Handles are opaque and must be
//! released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clr::bench::{self, FitReport};
use clr::config::RunConfig;
use clr::data::RawDataset;
use clr::intcode::{encode_u, length_u};
use clr::{alpha_encode, BitWriter, CLRModel, ClrError};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Capacity = 5,
    Decode = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

impl From<&ClrError> for ClrStatus {
    fn from(e: &ClrError) -> Self {
        match e {
            ClrError::Config(_) | ClrError::Json(_) => ClrStatus::Config,
            ClrError::Capacity { .. } => ClrStatus::Capacity,
            ClrError::Decode(_) => ClrStatus::Decode,
            ClrError::Domain(_) | ClrError::OutOfRange { .. } | ClrError::Dimension { .. } => {
                ClrStatus::InvalidArgument
            }
            _ => ClrStatus::Data,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(ClrStatus, String);

impl From<ClrError> for Fail {
    fn from(e: ClrError) -> Self {
        Fail(ClrStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ClrStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ClrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClrStatus::Ok,
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
            set_error(format!("panic: {msg}"));
            ClrStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn config(json: *const c_char) -> Result<RunConfig, Fail> {
    if json.is_null() {
        return Ok(RunConfig::default());
    }
    let s = CStr::from_ptr(json)
        .to_str()
        .map_err(|e| Fail(ClrStatus::Config, format!("config is not UTF-8: {e}")))?;
    Ok(RunConfig::from_json(s)?)
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn clr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Length in bits of the universal code of `n`.
///
/// # Safety
/// `bits` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clr_u_length(n: i64, bits: *mut u32) -> ClrStatus {
    guard(|| {
        *out(bits, "bits")? = length_u(n);
        Ok(())
    })
}

/// Writes the universal code of `n` MSB-first into `buf`.
///
/// On `BufferTooSmall`, `bits` still receives the required length.
///
/// # Safety
/// `buf` must hold `cap` bytes; `bits` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clr_u_encode(n: i64, buf: *mut u8, cap: usize, bits: *mut u32) -> ClrStatus {
    guard(|| {
        let bits = out(bits, "bits")?;
        let cw = encode_u(n);
        *bits = cw.len() as u32;
        let mut w = BitWriter::new();
        w.write_codeword(&cw);
        let bytes = w.into_bytes();
        if bytes.len() > cap {
            return Err(Fail(ClrStatus::BufferTooSmall, format!("need {} bytes", bytes.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, bytes.len()).copy_from_slice(&bytes);
        Ok(())
    })
}

/// Length of the rational code of `theta` at precision `delta`, and the value it decodes to.
///
/// # Safety
/// `bits` must be valid; `reconstructed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn clr_alpha_encode(
    theta: f64,
    delta: f64,
    bits: *mut u32,
    reconstructed: *mut f64,
) -> ClrStatus {
    guard(|| {
        let bits = out(bits, "bits")?;
        let code = alpha_encode(theta, delta)?;
        *bits = code.codeword.len() as u32;
        if let Some(r) = reconstructed.as_mut() {
            *r = code.value();
        }
        Ok(())
    })
}

/// A dataset of N observations of J features with a target.
pub struct ClrDataset(RawDataset);

/// A fitted model together with the configuration used to fit it.
pub struct ClrModel {
    model: CLRModel,
    config: RunConfig,
    report: FitReport,
}

/// Builds a dataset from a row-major N×J feature array and N targets.
///
/// # Safety
/// `x` must hold `n_obs * n_features` values, `y` must hold `n_obs`, `dataset` must be valid.
#[no_mangle]
pub unsafe extern "C" fn clr_dataset_new(
    x: *const f64,
    n_obs: usize,
    n_features: usize,
    y: *const f64,
    dataset: *mut *mut ClrDataset,
) -> ClrStatus {
    guard(|| {
        let dst = out(dataset, "dataset")?;
        *dst = ptr::null_mut();
        let len = n_obs
            .checked_mul(n_features)
            .ok_or_else(|| Fail(ClrStatus::InvalidArgument, "size overflow".into()))?;
        let xs = slice(x, len, "x")?;
        let ys = slice(y, n_obs, "y")?;
        let obs = DMatrix::from_row_slice(n_obs, n_features, xs).transpose();
        let names = (0..n_features).map(|j| format!("x{j}")).collect();
        let ds = RawDataset::new(obs, DVector::from_column_slice(ys), names, "y")?;
        *dst = Box::into_raw(Box::new(ClrDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from `clr_dataset_new` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn clr_dataset_free(dataset: *mut ClrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Fits a model. `config_json` may be NULL for defaults.
///
/// # Safety
/// `dataset` must be a live handle, `config_json` NULL or a C string, `model` valid.
#[no_mangle]
pub unsafe extern "C" fn clr_fit(
    dataset: *const ClrDataset,
    config_json: *const c_char,
    model: *mut *mut ClrModel,
) -> ClrStatus {
    guard(|| {
        let dst = out(model, "model")?;
        *dst = ptr::null_mut();
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let cfg = config(config_json)?;
        let report = bench::fit_dataset(&ds.0, &cfg)?;
        *dst = Box::into_raw(Box::new(ClrModel {
            model: report.model.clone(),
            config: cfg,
            report,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `clr_fit` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn clr_model_free(model: *mut ClrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of model features K, including the bias.
///
/// # Safety
/// `model` must be a live handle and `k` valid.
#[no_mangle]
pub unsafe extern "C" fn clr_model_n_features(model: *const ClrModel, k: *mut usize) -> ClrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out(k, "k")? = m.model.n_features;
        Ok(())
    })
}

/// Copies the K coded parameters (zero for culled features) into `theta`.
///
/// # Safety
/// `model` must be a live handle and `theta` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn clr_model_theta(model: *const ClrModel, theta: *mut f64, len: usize) -> ClrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let v = m.model.full_theta_sharp();
        if len < v.len() {
            return Err(Fail(ClrStatus::BufferTooSmall, format!("need {} values", v.len())));
        }
        if theta.is_null() {
            return Err(null("theta"));
        }
        std::slice::from_raw_parts_mut(theta, v.len()).copy_from_slice(&v);
        Ok(())
    })
}

/// Exact description length in bits, and the number of nonzero parameters.
///
/// # Safety
/// `model` must be a live handle; either output may be NULL.
#[no_mangle]
pub unsafe extern "C" fn clr_model_summary(
    model: *const ClrModel,
    description_bits: *mut f64,
    nonzero: *mut usize,
) -> ClrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if let Some(b) = description_bits.as_mut() {
            *b = m
                .report
                .exact_bits
                .map_or(m.model.description_length_bits, |b| b as f64);
        }
        if let Some(n) = nonzero.as_mut() {
            *n = m.model.nonzero_count();
        }
        Ok(())
    })
}

/// Encodes the dataset's target with `model`. Release the buffer with `clr_bytes_free`.
///
/// # Safety
/// Handles must be live; `bytes` and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn clr_encode(
    dataset: *const ClrDataset,
    model: *const ClrModel,
    bytes: *mut *mut u8,
    len: *mut usize,
) -> ClrStatus {
    guard(|| {
        let bytes = out(bytes, "bytes")?;
        let len = out(len, "len")?;
        *bytes = ptr::null_mut();
        *len = 0;
        let ds = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let (stream, _) = bench::encode_dataset(&ds.0, &m.config, Some(&m.model))?;
        let boxed = stream.bytes.into_boxed_slice();
        *len = boxed.len();
        *bytes = Box::into_raw(boxed) as *mut u8;
        Ok(())
    })
}

/// # Safety
/// `bytes`/`len` must come from `clr_encode`. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn clr_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes, len)));
    }
}

/// Decodes a stream given the row-major N×J features used at encode time.
/// `config_json` must match the encoder's feature settings; NULL for defaults.
///
/// # Safety
/// `bytes` must hold `len` bytes, `x` `n_obs * n_features` values, `target` `n_obs` values.
#[no_mangle]
pub unsafe extern "C" fn clr_decode(
    bytes: *const u8,
    len: usize,
    x: *const f64,
    n_obs: usize,
    n_features: usize,
    config_json: *const c_char,
    target: *mut f64,
) -> ClrStatus {
    guard(|| {
        let b = slice(bytes, len, "bytes")?;
        let cells = n_obs
            .checked_mul(n_features)
            .ok_or_else(|| Fail(ClrStatus::InvalidArgument, "size overflow".into()))?;
        let xs = slice(x, cells, "x")?;
        if target.is_null() {
            return Err(null("target"));
        }
        let cfg = config(config_json)?;
        let obs = DMatrix::from_row_slice(n_obs, n_features, xs).transpose();
        let names: Vec<String> = (0..n_features).map(|j| format!("x{j}")).collect();
        let dec = bench::decode_dataset(b, &obs, &names, &cfg)?;
        std::slice::from_raw_parts_mut(target, n_obs).copy_from_slice(&dec.target);
        Ok(())
    })
}
