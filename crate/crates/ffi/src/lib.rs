//! C ABI for expandnet.
//!
//! Every function returns an `EXPANDNET_*` status code. On failure the
//! message is available from `expandnet_last_error_message` on the same
//! thread. Models are opaque handles released with `expandnet_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use expandnet::compression::compress_network;
use expandnet::expansion::{expand_network, ExpansionPlan, Strategies};
use expandnet::graph::{Mode, NetworkGraph};
use expandnet::persist::AnyNetwork;
use expandnet::tensor::{Scalar, Tensor4};
use expandnet::zoo::{build_smallnet, ArchId};
use expandnet::{with_network, Error};

pub const EXPANDNET_OK: i32 = 0;
pub const EXPANDNET_ERR_NULL_POINTER: i32 = 1;
pub const EXPANDNET_ERR_INVALID_ARGUMENT: i32 = 2;
pub const EXPANDNET_ERR_SHAPE: i32 = 3;
pub const EXPANDNET_ERR_PLAN: i32 = 4;
pub const EXPANDNET_ERR_COMPRESSION: i32 = 5;
pub const EXPANDNET_ERR_FORMAT: i32 = 6;
pub const EXPANDNET_ERR_IO: i32 = 7;
pub const EXPANDNET_ERR_PANIC: i32 = 8;

pub const EXPANDNET_DTYPE_F32: i32 = 0;
pub const EXPANDNET_DTYPE_F64: i32 = 1;

/// Strategy bits for `expandnet_expand`.
pub const EXPANDNET_EXPAND_FC: u32 = 1;
pub const EXPANDNET_EXPAND_CL: u32 = 2;
pub const EXPANDNET_EXPAND_CK: u32 = 4;

/// Opaque model handle.
pub struct ExpandnetModel {
    net: AnyNetwork,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXPANDNET_ERR_INVALID_ARGUMENT,
        Error::Shape(_) | Error::Layer { .. } => EXPANDNET_ERR_SHAPE,
        Error::Plan(_) => EXPANDNET_ERR_PLAN,
        Error::Compression(_) | Error::Inexact(_) => EXPANDNET_ERR_COMPRESSION,
        Error::Format { .. } | Error::Corrupt(_) | Error::Version(_) | Error::Dataset(_) | Error::Json(_) => {
            EXPANDNET_ERR_FORMAT
        }
        Error::Io { .. } => EXPANDNET_ERR_IO,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            EXPANDNET_OK
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("{what} is null"));
            EXPANDNET_ERR_NULL_POINTER
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_last_error(msg);
            EXPANDNET_ERR_INVALID_ARGUMENT
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(e.to_string());
            code_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            EXPANDNET_ERR_PANIC
        }
    }
}

unsafe fn model<'a>(m: *const ExpandnetModel) -> Result<&'a ExpandnetModel, Fail> {
    m.as_ref().ok_or(Fail::Null("model"))
}

unsafe fn string<'a>(s: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn emit(out: *mut *mut ExpandnetModel, net: AnyNetwork) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(ExpandnetModel { net }));
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next expandnet call on this thread.
#[no_mangle]
pub extern "C" fn expandnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a zoo architecture such as "smallnet7-3conv-c10".
///
/// # Safety
/// `arch` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn expandnet_build(
    arch: *const c_char,
    dtype: i32,
    seed: u64,
    out: *mut *mut ExpandnetModel,
) -> i32 {
    guard(|| {
        let id: ArchId = string(arch, "arch")?.parse()?;
        let net = match dtype {
            EXPANDNET_DTYPE_F32 => build_smallnet::<f32>(id.kernel_size, id.num_classes, id.depth, seed)?.into(),
            EXPANDNET_DTYPE_F64 => build_smallnet::<f64>(id.kernel_size, id.num_classes, id.depth, seed)?.into(),
            other => return Err(Fail::Arg(format!("unknown dtype {other}"))),
        };
        emit(out, net)
    })
}

/// Loads a model manifest and its weight blob.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn expandnet_load(path: *const c_char, out: *mut *mut ExpandnetModel) -> i32 {
    guard(|| {
        let net = AnyNetwork::load(Path::new(string(path, "path")?))?;
        emit(out, net)
    })
}

/// Writes the manifest to `path` and the weights next to it.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn expandnet_save(model: *const ExpandnetModel, path: *const c_char) -> i32 {
    guard(|| {
        let m = self::model(model)?;
        m.net.save(Path::new(string(path, "path")?))?;
        Ok(())
    })
}

/// Expands a compact model. `strategies` is a mask of `EXPANDNET_EXPAND_*`
/// bits; `fc_depth` is the number of layers each FC expansion produces.
///
/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn expandnet_expand(
    model: *const ExpandnetModel,
    strategies: u32,
    rate: usize,
    fc_depth: usize,
    table1_channels: bool,
    seed: u64,
    out: *mut *mut ExpandnetModel,
) -> i32 {
    guard(|| {
        let m = self::model(model)?;
        if strategies & !(EXPANDNET_EXPAND_FC | EXPANDNET_EXPAND_CL | EXPANDNET_EXPAND_CK) != 0 {
            return Err(Fail::Arg(format!("unknown strategy bits {strategies:#x}")));
        }
        let s = Strategies {
            fc: strategies & EXPANDNET_EXPAND_FC != 0,
            cl: strategies & EXPANDNET_EXPAND_CL != 0,
            ck: strategies & EXPANDNET_EXPAND_CK != 0,
        };
        let expanded: AnyNetwork = with_network!(&m.net, n => {
            let plan = ExpansionPlan::for_network(n, s, rate, fc_depth, table1_channels, seed)?;
            expand_network(n, &plan)?.into()
        });
        emit(out, expanded)
    })
}

/// Collapses every expansion unit of an expanded model.
///
/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn expandnet_compress(model: *const ExpandnetModel, out: *mut *mut ExpandnetModel) -> i32 {
    guard(|| {
        let m = self::model(model)?;
        let compact: AnyNetwork = with_network!(&m.net, n => compress_network(n)?.into());
        emit(out, compact)
    })
}

/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn expandnet_param_count(model: *const ExpandnetModel, out: *mut usize) -> i32 {
    guard(|| {
        let m = self::model(model)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = m.net.param_count();
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn expandnet_num_classes(model: *const ExpandnetModel, out: *mut usize) -> i32 {
    guard(|| {
        let m = self::model(model)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = m.net.num_classes();
        Ok(())
    })
}

/// Writes channels, height and width to `out[0..3]`.
///
/// # Safety
/// `model` must come from this library and `out` point to 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn expandnet_input_shape(model: *const ExpandnetModel, out: *mut usize) -> i32 {
    guard(|| {
        let m = self::model(model)?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        ptr::copy_nonoverlapping(m.net.input_shape().as_ptr(), out, 3);
        Ok(())
    })
}

/// Returns `EXPANDNET_DTYPE_F32` or `EXPANDNET_DTYPE_F64`.
///
/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn expandnet_dtype(model: *const ExpandnetModel, out: *mut i32) -> i32 {
    guard(|| {
        let m = self::model(model)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = match m.net {
            AnyNetwork::F32(_) => EXPANDNET_DTYPE_F32,
            AnyNetwork::F64(_) => EXPANDNET_DTYPE_F64,
        };
        Ok(())
    })
}

fn forward_into<T: Scalar, U: Scalar>(
    net: &NetworkGraph<T>,
    input: &[U],
    batch: usize,
    output: &mut [U],
) -> Result<(), Fail> {
    let [c, h, w] = net.input_shape;
    let x = Tensor4::new([batch, c, h, w], input.iter().map(|v| T::of(v.as_f64())).collect())?;
    let y = net.forward(&x, Mode::Eval)?;
    for (o, v) in output.iter_mut().zip(y.data()) {
        *o = U::of(v.as_f64());
    }
    Ok(())
}

unsafe fn forward<U: Scalar>(
    model: *const ExpandnetModel,
    input: *const U,
    batch: usize,
    output: *mut U,
    output_len: usize,
) -> Result<(), Fail> {
    let m = self::model(model)?;
    if input.is_null() {
        return Err(Fail::Null("input"));
    }
    if output.is_null() {
        return Err(Fail::Null("output"));
    }
    if batch == 0 {
        return Err(Fail::Arg("batch must be positive".into()));
    }
    let [c, h, w] = m.net.input_shape();
    let needed = batch * m.net.num_classes();
    if output_len < needed {
        return Err(Fail::Arg(format!("output holds {output_len} values, {needed} needed")));
    }
    let input = std::slice::from_raw_parts(input, batch * c * h * w);
    let output = std::slice::from_raw_parts_mut(output, needed);
    with_network!(&m.net, n => forward_into(n, input, batch, output))
}

/// Eval-mode logits for `batch` NCHW images, computed in the model's own
/// precision. `output` receives `batch * num_classes` values.
///
/// # Safety
/// `input` must hold `batch * C * H * W` floats and `output` `output_len`.
#[no_mangle]
pub unsafe extern "C" fn expandnet_forward_f32(
    model: *const ExpandnetModel,
    input: *const f32,
    batch: usize,
    output: *mut f32,
    output_len: usize,
) -> i32 {
    guard(|| forward(model, input, batch, output, output_len))
}

/// Double-precision variant of `expandnet_forward_f32`.
///
/// # Safety
/// `input` must hold `batch * C * H * W` doubles and `output` `output_len`.
#[no_mangle]
pub unsafe extern "C" fn expandnet_forward_f64(
    model: *const ExpandnetModel,
    input: *const f64,
    batch: usize,
    output: *mut f64,
    output_len: usize,
) -> i32 {
    guard(|| forward(model, input, batch, output, output_len))
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn expandnet_model_free(model: *mut ExpandnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
