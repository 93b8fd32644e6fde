//! C ABI over `rfa-doc`.
//!
//! Objects are opaque handles created by `*_new`/`*_load` and released with
//! the matching `*_free`. Every fallible call returns an [`RfaStatus`]; on
//! failure a message is available from [`rfa_last_error_message`] on the same
//! thread. Token ids cross the boundary as `uint32_t`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rfa_doc::checkpoint;
use rfa_doc::decoding::{beam_decode, default_max_len, greedy_decode};
use rfa_doc::random_features::{sample_feature_map, FeatureMap, FeatureMapSpec};
use rfa_doc::transformer::{sequence_log_prob, Example, Model};
use rfa_doc::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    OutOfVocab = 5,
    BufferTooSmall = 6,
    Internal = 7,
    Panic = 8,
}

/// A loaded checkpoint.
pub struct RfaModel {
    model: Model,
}

/// A sampled random feature map.
pub struct RfaFeatureMap {
    map: FeatureMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RfaStatus {
    match e {
        Error::Io { .. } | Error::Exists(_) => RfaStatus::Io,
        Error::Parse { .. } => RfaStatus::Parse,
        Error::OutOfVocab { .. } => RfaStatus::OutOfVocab,
        Error::NonFinite(_) | Error::Diverged { .. } | Error::CacheMismatch(_) | Error::MissingCell { .. } => {
            RfaStatus::Internal
        }
        _ => RfaStatus::InvalidArgument,
    }
}

fn fail(status: RfaStatus, msg: impl Into<String>) -> RfaStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), RfaStatus>) -> RfaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfaStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(RfaStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: rfa_doc::Result<T>) -> Result<T, RfaStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), RfaStatus> {
    if p.is_null() {
        Err(fail(RfaStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null only when `len` is 0, otherwise valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], RfaStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

fn tokens_in(ids: &[u32]) -> Vec<usize> {
    ids.iter().map(|&t| t as usize).collect()
}

/// Copies `tokens` into `out` when it fits; always reports the needed length.
///
/// # Safety
/// `out` must be valid for `cap` writes and `out_len` for one write.
unsafe fn write_tokens(tokens: &[usize], out: *mut u32, cap: usize, out_len: *mut usize) -> Result<(), RfaStatus> {
    *out_len = tokens.len();
    if tokens.len() > cap {
        return Err(fail(
            RfaStatus::BufferTooSmall,
            format!("output needs {} tokens, buffer holds {cap}", tokens.len()),
        ));
    }
    if !tokens.is_empty() {
        non_null(out, "output buffer")?;
        for (i, &t) in tokens.iter().enumerate() {
            *out.add(i) = t as u32;
        }
    }
    Ok(())
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rfa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rfa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rfa_model_load(path: *const c_char, out: *mut *mut RfaModel) -> RfaStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(RfaStatus::InvalidArgument, "path is not valid UTF-8"))?;
        let ckpt = lift(checkpoint::load(Path::new(p)))?;
        *out = Box::into_raw(Box::new(RfaModel { model: ckpt.model }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`rfa_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfa_model_free(model: *mut RfaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfa_model_vocab_size(model: *const RfaModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.vocab_size)
}

/// Translates one source window. `beam` 0 selects greedy decoding; `max_len`
/// 0 selects the default cap. When `out_cap` is too small the call fails
/// with `RFA_STATUS_BUFFER_TOO_SMALL` and `*out_len` holds the needed size.
///
/// # Safety
/// `src` must be valid for `src_len` reads, `out` for `out_cap` writes and
/// `out_len` for one write.
#[no_mangle]
pub unsafe extern "C" fn rfa_model_translate(
    model: *const RfaModel,
    src: *const u32,
    src_len: usize,
    beam: usize,
    max_len: usize,
    out: *mut u32,
    out_cap: usize,
    out_len: *mut usize,
) -> RfaStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out_len, "out_len")?;
        let m = &(*model).model;
        let src = tokens_in(slice(src, src_len, "src")?);
        let cap = if max_len == 0 { default_max_len(src.len()) } else { max_len };
        let tokens = if beam == 0 {
            lift(greedy_decode(m, &src, cap))?
        } else {
            lift(beam_decode(m, &src, beam, cap))?
        };
        write_tokens(&tokens, out, out_cap, out_len)
    })
}

/// `log p(tgt EOS | src)` under teacher forcing.
///
/// # Safety
/// `src` and `tgt` must be valid for their lengths, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn rfa_model_log_prob(
    model: *const RfaModel,
    src: *const u32,
    src_len: usize,
    tgt: *const u32,
    tgt_len: usize,
    out: *mut f64,
) -> RfaStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let ex = Example::new(
            tokens_in(slice(src, src_len, "src")?),
            tokens_in(slice(tgt, tgt_len, "tgt")?),
        );
        *out = lift(sequence_log_prob(&(*model).model, &ex))?;
        Ok(())
    })
}

/// Samples a feature map with `num_features` frequencies over `input_dim`
/// inputs; its output has `2 * num_features` entries.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rfa_feature_map_new(
    input_dim: usize,
    num_features: usize,
    sigma: f64,
    seed: u64,
    out: *mut *mut RfaFeatureMap,
) -> RfaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let map = lift(sample_feature_map(FeatureMapSpec {
            input_dim,
            num_features,
            sigma,
            seed,
        }))?;
        *out = Box::into_raw(Box::new(RfaFeatureMap { map }));
        Ok(())
    })
}

/// Releases a feature map. Null is ignored.
///
/// # Safety
/// `map` must come from [`rfa_feature_map_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfa_feature_map_free(map: *mut RfaFeatureMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Output length of `phi`, or 0 for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfa_feature_map_output_dim(map: *const RfaFeatureMap) -> usize {
    map.as_ref().map_or(0, |m| m.map.output_dim())
}

/// Writes `phi(x)` into `out`, which must hold exactly the output length.
///
/// # Safety
/// `x` must be valid for `x_len` reads and `out` for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn rfa_feature_map_phi(
    map: *const RfaFeatureMap,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> RfaStatus {
    guard(|| {
        non_null(map, "map")?;
        let map = &(*map).map;
        if out_len != map.output_dim() {
            return Err(fail(
                RfaStatus::InvalidArgument,
                format!("output length {out_len}, expected {}", map.output_dim()),
            ));
        }
        let phi = lift(map.phi(slice(x, x_len, "x")?))?;
        non_null(out, "out")?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&phi);
        Ok(())
    })
}

/// Unbiased estimate of `exp(-|x - y|^2 / (2 sigma^2))`.
///
/// # Safety
/// `x` and `y` must be valid for `len` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn rfa_feature_map_kernel(
    map: *const RfaFeatureMap,
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> RfaStatus {
    guard(|| {
        non_null(map, "map")?;
        non_null(out, "out")?;
        *out = lift((*map).map.kernel_estimate(slice(x, len, "x")?, slice(y, len, "y")?))?;
        Ok(())
    })
}
