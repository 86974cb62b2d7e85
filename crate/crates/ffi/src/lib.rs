//! C ABI over `eventsr`.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `*_new` style calls and released with the matching `*_free`. Every
//! fallible call returns an [`EsrStatus`]; on failure the message is kept
//! per thread and read with [`esr_last_error_message`]. Panics never
//! unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use eventsr::commands::{infer, load_video, DEFAULT_DT_US};
use eventsr::events::io::{load_evt1, save_evt1};
use eventsr::events::{stack_by_number, Event, EventStream, StackOptions};
use eventsr::metrics::{psnr, ssim};
use eventsr::sim::{simulate_events, SimConfig};
use eventsr::tensor::DType;
use eventsr::trainer::Checkpoint;
use eventsr::{Error, Tensor};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsrStatus {
    Ok = 0,
    /// Bad argument or configuration.
    InvalidArgument = 1,
    /// Missing, malformed or insufficient data.
    Data = 2,
    /// Non-finite values during computation.
    Numerical = 3,
    /// A required pointer was null.
    NullPointer = 4,
    /// An internal panic was caught.
    Panic = 5,
}

/// A validated, time-sorted event stream.
pub struct EsrEvents {
    inner: EventStream,
}

/// A dense f64 tensor in row-major order.
pub struct EsrTensor {
    inner: Tensor,
}

/// A trained phase checkpoint.
pub struct EsrCheckpoint {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(EsrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            1 => EsrStatus::InvalidArgument,
            3 => EsrStatus::Numerical,
            _ => EsrStatus::Data,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(EsrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(EsrStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EsrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EsrStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn esr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bytes needed for the last error message including the NUL, or 0 if none.
#[no_mangle]
pub extern "C" fn esr_last_error_length() -> usize {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(0, |c| c.as_bytes_with_nul().len())
    })
}

/// Copies the last error message of this thread into `buf`, truncating to
/// `len - 1` bytes. Returns the bytes written excluding the NUL, or -1 when
/// `buf` is null or `len` is 0.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn esr_last_error_message(buf: *mut c_char, len: usize) -> isize {
    if buf.is_null() || len == 0 {
        return -1;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
        n as isize
    })
}

/// Builds a stream from parallel arrays; events are validated and sorted.
///
/// # Safety
/// Each array must hold `count` elements (may be null when `count` is 0);
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn esr_events_new(
    t: *const u64,
    x: *const u16,
    y: *const u16,
    p: *const i8,
    count: usize,
    width: u16,
    height: u16,
    out: *mut *mut EsrEvents,
) -> EsrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ev = if count == 0 {
            Vec::new()
        } else {
            if t.is_null() || x.is_null() || y.is_null() || p.is_null() {
                return Err(null("event array"));
            }
            let (t, x, y, p) = (
                std::slice::from_raw_parts(t, count),
                std::slice::from_raw_parts(x, count),
                std::slice::from_raw_parts(y, count),
                std::slice::from_raw_parts(p, count),
            );
            (0..count)
                .map(|i| Event::new(t[i], x[i], y[i], p[i]))
                .collect()
        };
        *out = boxed(EsrEvents {
            inner: EventStream::new(ev, width, height)?,
        });
        Ok(())
    })
}

/// Reads an EVT1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn esr_events_load(
    path: *const c_char,
    out: *mut *mut EsrEvents,
) -> EsrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = load_evt1(&path_arg(path, "path")?)?;
        *out = boxed(EsrEvents { inner });
        Ok(())
    })
}

/// Writes an EVT1 file.
///
/// # Safety
/// `events` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn esr_events_save(
    events: *const EsrEvents,
    path: *const c_char,
) -> EsrStatus {
    guard(|| {
        let ev = handle(events, "events")?;
        save_evt1(&ev.inner, &path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of events; 0 for a null handle.
///
/// # Safety
/// `events` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn esr_events_len(events: *const EsrEvents) -> usize {
    events.as_ref().map_or(0, |e| e.inner.len())
}

/// Sensor width and height.
///
/// # Safety
/// `events` must be a live handle; `width` and `height` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_events_dims(
    events: *const EsrEvents,
    width: *mut u16,
    height: *mut u16,
) -> EsrStatus {
    guard(|| {
        let ev = handle(events, "events")?;
        *out_arg(width, "width")? = ev.inner.width();
        *out_arg(height, "height")? = ev.inner.height();
        Ok(())
    })
}

/// Event `index` in time order.
///
/// # Safety
/// `events` must be a live handle; the four outputs writable.
#[no_mangle]
pub unsafe extern "C" fn esr_events_get(
    events: *const EsrEvents,
    index: usize,
    t: *mut u64,
    x: *mut u16,
    y: *mut u16,
    p: *mut i8,
) -> EsrStatus {
    guard(|| {
        let ev = handle(events, "events")?;
        let e = ev.inner.events().get(index).ok_or_else(|| {
            invalid(format!(
                "event index {index} out of range ({})",
                ev.inner.len()
            ))
        })?;
        *out_arg(t, "t")? = e.t;
        *out_arg(x, "x")? = e.x;
        *out_arg(y, "y")? = e.y;
        *out_arg(p, "p")? = e.p;
        Ok(())
    })
}

/// # Safety
/// `events` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn esr_events_free(events: *mut EsrEvents) {
    if !events.is_null() {
        drop(Box::from_raw(events));
    }
}

/// Simulates events from a directory of PNG frames (`..t<us>.png` names
/// carry timestamps, otherwise frames are 10 ms apart).
///
/// # Safety
/// `video_dir` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_simulate_video_dir(
    video_dir: *const c_char,
    contrast_threshold: f64,
    seed: u64,
    out: *mut *mut EsrEvents,
) -> EsrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let video = load_video(&path_arg(video_dir, "video_dir")?, DEFAULT_DT_US)?;
        let cfg = SimConfig {
            contrast_threshold,
            seed,
            ..SimConfig::default()
        };
        *out = boxed(EsrEvents {
            inner: simulate_events(&video, &cfg)?,
        });
        Ok(())
    })
}

/// Stack of `frames` event frames with `events_per_frame` events each,
/// starting at event `start`, as an `[n, H, W]` tensor.
///
/// # Safety
/// `events` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_stack_by_number(
    events: *const EsrEvents,
    events_per_frame: usize,
    frames: usize,
    start: usize,
    out: *mut *mut EsrTensor,
) -> EsrStatus {
    guard(|| {
        let ev = handle(events, "events")?;
        let out = out_arg(out, "out")?;
        let st = stack_by_number(
            &ev.inner,
            events_per_frame,
            frames,
            start,
            StackOptions::default(),
        )?;
        *out = boxed(EsrTensor {
            inner: st.to_tensor(),
        });
        Ok(())
    })
}

/// Copies `data` (row-major, `product(shape)` values) into a new tensor.
///
/// # Safety
/// `shape` must hold `ndim` values and `data` `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_tensor_new(
    shape: *const usize,
    ndim: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut EsrTensor,
) -> EsrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if (ndim > 0 && shape.is_null()) || (len > 0 && data.is_null()) {
            return Err(null("shape or data"));
        }
        let shape = if ndim == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(shape, ndim).to_vec()
        };
        let data = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(data, len).to_vec()
        };
        *out = boxed(EsrTensor {
            inner: Tensor::new(shape, data)?,
        });
        Ok(())
    })
}

/// Reads a TNS1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_tensor_load(
    path: *const c_char,
    out: *mut *mut EsrTensor,
) -> EsrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (inner, _) = Tensor::load(&path_arg(path, "path")?)?;
        *out = boxed(EsrTensor { inner });
        Ok(())
    })
}

/// Writes a TNS1 file; `dtype` is 1 for float32, 2 for float64.
///
/// # Safety
/// `tensor` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn esr_tensor_save(
    tensor: *const EsrTensor,
    path: *const c_char,
    dtype: u8,
) -> EsrStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        let dtype = DType::from_code(dtype)
            .map_err(|_| invalid(format!("dtype must be 1 or 2, got {dtype}")))?;
        t.inner.save(&path_arg(path, "path")?, dtype)?;
        Ok(())
    })
}

/// Number of dimensions; 0 for a null handle.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn esr_tensor_ndim(tensor: *const EsrTensor) -> usize {
    tensor.as_ref().map_or(0, |t| t.inner.ndim())
}

/// Number of elements; 0 for a null handle.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn esr_tensor_len(tensor: *const EsrTensor) -> usize {
    tensor.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies the shape into `dims`, which must hold at least `ndim` entries.
///
/// # Safety
/// `tensor` must be a live handle; `dims` must hold `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn esr_tensor_shape(
    tensor: *const EsrTensor,
    dims: *mut usize,
    cap: usize,
) -> EsrStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        let s = t.inner.shape();
        if cap < s.len() {
            return Err(invalid(format!(
                "shape needs {} entries, buffer holds {cap}",
                s.len()
            )));
        }
        if !s.is_empty() {
            if dims.is_null() {
                return Err(null("dims"));
            }
            ptr::copy_nonoverlapping(s.as_ptr(), dims, s.len());
        }
        Ok(())
    })
}

/// Copies the values into `buf`, which must hold exactly `len` elements.
///
/// # Safety
/// `tensor` must be a live handle; `buf` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn esr_tensor_copy_data(
    tensor: *const EsrTensor,
    buf: *mut f64,
    len: usize,
) -> EsrStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        let d = t.inner.data();
        if len != d.len() {
            return Err(invalid(format!(
                "tensor has {} values, buffer holds {len}",
                d.len()
            )));
        }
        if len > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(d.as_ptr(), buf, len);
        }
        Ok(())
    })
}

/// # Safety
/// `tensor` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn esr_tensor_free(tensor: *mut EsrTensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}

/// Loads a checkpoint directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_checkpoint_load(
    path: *const c_char,
    out: *mut *mut EsrCheckpoint,
) -> EsrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = Checkpoint::load(&path_arg(path, "path")?)?;
        *out = boxed(EsrCheckpoint { inner });
        Ok(())
    })
}

/// Training phase of the checkpoint (1 to 3); 0 for a null handle.
///
/// # Safety
/// `ckpt` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn esr_checkpoint_phase(ckpt: *const EsrCheckpoint) -> u8 {
    ckpt.as_ref().map_or(0, |c| c.inner.phase)
}

/// Runs the phase-`phase` generator cascade on an `[n, H, W]` stack and
/// returns the `[H', W']` image.
///
/// # Safety
/// `ckpt` and `stack` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_checkpoint_infer(
    ckpt: *const EsrCheckpoint,
    phase: u8,
    stack: *const EsrTensor,
    out: *mut *mut EsrTensor,
) -> EsrStatus {
    guard(|| {
        let c = handle(ckpt, "ckpt")?;
        let s = handle(stack, "stack")?;
        let out = out_arg(out, "out")?;
        if !(1..=3).contains(&phase) {
            return Err(invalid(format!("phase must be 1, 2 or 3, got {phase}")));
        }
        *out = boxed(EsrTensor {
            inner: infer(&c.inner, phase, &s.inner)?,
        });
        Ok(())
    })
}

/// # Safety
/// `ckpt` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn esr_checkpoint_free(ckpt: *mut EsrCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// PSNR in dB of two `[H, W]` images in [0, 1].
///
/// # Safety
/// `a` and `b` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_psnr(
    a: *const EsrTensor,
    b: *const EsrTensor,
    out: *mut f64,
) -> EsrStatus {
    guard(|| {
        *out_arg(out, "out")? = psnr(&handle(a, "a")?.inner, &handle(b, "b")?.inner)?;
        Ok(())
    })
}

/// Mean SSIM of two `[H, W]` images in [0, 1].
///
/// # Safety
/// `a` and `b` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn esr_ssim(
    a: *const EsrTensor,
    b: *const EsrTensor,
    out: *mut f64,
) -> EsrStatus {
    guard(|| {
        *out_arg(out, "out")? = ssim(&handle(a, "a")?.inner, &handle(b, "b")?.inner)?;
        Ok(())
    })
}
