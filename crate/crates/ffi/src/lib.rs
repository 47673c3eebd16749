//! C interface to the pic codec.
//!
//! Every object is an opaque handle created by a `*_new`/`*_load` call and
//! released with the matching `*_free`. Functions return [`PicStatus`];
//! on failure [`pic_last_error_message`] describes the error on the calling
//! thread. Frames cross the boundary as packed I420 (`Y`, then `U`, then
//! `V`, each plane row-major without padding).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::mem::ManuallyDrop;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr::{self, NonNull};
use std::slice;

use pic_core::codec::{
    decode_video, encode_video, Bitstream, Decoder, Encoder, ModelParams, QualityConfig,
};
use pic_core::status::ErrorClass;
use pic_core::video_io::{read_y4m, write_y4m, Frame};

/// Result of every fallible call. Values 1 to 5 match the `pic` exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PicStatus {
    Ok = 0,
    Other = 1,
    Io = 2,
    Format = 3,
    Digest = 4,
    Config = 5,
    /// A required pointer argument was null.
    NullArgument = 6,
    /// The library panicked; the handle involved should be freed.
    Panic = 7,
}

impl From<ErrorClass> for PicStatus {
    fn from(c: ErrorClass) -> Self {
        match c {
            ErrorClass::Other => PicStatus::Other,
            ErrorClass::Io => PicStatus::Io,
            ErrorClass::Format => PicStatus::Format,
            ErrorClass::Digest => PicStatus::Digest,
            ErrorClass::Config => PicStatus::Config,
        }
    }
}

/// Scene model parameters.
pub struct PicModel {
    params: ModelParams,
}

/// Owned byte buffer returned by the library.
pub struct PicBuffer {
    data: Vec<u8>,
}

/// Frame-by-frame encoder. Owns a copy of the model.
pub struct PicEncoder {
    inner: ManuallyDrop<Encoder<'static>>,
    model: NonNull<ModelParams>,
}

/// Frame-by-frame decoder. Owns a copy of the model.
pub struct PicDecoder {
    inner: ManuallyDrop<Decoder<'static>>,
    model: NonNull<ModelParams>,
}

impl Drop for PicEncoder {
    fn drop(&mut self) {
        // SAFETY: `inner` borrows `model` and is dropped before it; `model`
        // came from `Box::into_raw` and is released exactly once.
        unsafe {
            ManuallyDrop::drop(&mut self.inner);
            drop(Box::from_raw(self.model.as_ptr()));
        }
    }
}

impl Drop for PicDecoder {
    fn drop(&mut self) {
        // SAFETY: as for `PicEncoder`.
        unsafe {
            ManuallyDrop::drop(&mut self.inner);
            drop(Box::from_raw(self.model.as_ptr()));
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure {
    status: PicStatus,
    message: String,
}

impl Failure {
    fn null(name: &str) -> Self {
        Failure {
            status: PicStatus::NullArgument,
            message: format!("{name} is null"),
        }
    }
}

impl<E: std::error::Error + 'static> From<E> for Failure {
    fn from(e: E) -> Self {
        let status = pic_core::status::classify(&e).map_or(PicStatus::Other, PicStatus::from);
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PicStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PicStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {what}"));
            PicStatus::Panic
        }
    }
}

unsafe fn bytes<'a>(data: *const u8, len: usize, name: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(Failure::null(name));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn out_ptr<'a, T>(out: *mut *mut T, name: &str) -> Result<&'a mut *mut T, Failure> {
    let slot = out.as_mut().ok_or_else(|| Failure::null(name))?;
    *slot = ptr::null_mut();
    Ok(slot)
}

unsafe fn model_ref<'a>(model: *const PicModel) -> Result<&'a ModelParams, Failure> {
    model
        .as_ref()
        .map(|m| &m.params)
        .ok_or_else(|| Failure::null("model"))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn buffer(data: Vec<u8>) -> *mut PicBuffer {
    boxed(PicBuffer { data })
}

fn quality(qp: i32) -> Result<QualityConfig, Failure> {
    Ok(QualityConfig::with_base_qp(qp as i64)?)
}

fn frame_from_i420(params: &ModelParams, data: &[u8]) -> Result<Frame, Failure> {
    let (w, h) = (params.width(), params.height());
    let luma = w * h;
    let chroma = luma / 4;
    if data.len() != luma + 2 * chroma {
        return Err(Failure {
            status: PicStatus::Format,
            message: format!(
                "frame buffer has {} bytes, a {w}x{h} I420 frame has {}",
                data.len(),
                luma + 2 * chroma
            ),
        });
    }
    let (y, rest) = data.split_at(luma);
    let (u, v) = rest.split_at(chroma);
    Ok(Frame::new(w, h, y.to_vec(), u.to_vec(), v.to_vec())?)
}

fn frame_to_i420(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.byte_len());
    for p in frame.planes() {
        out.extend_from_slice(p);
    }
    out
}

/// Message for the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pic_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a serialized model.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_model_from_bytes(
    data: *const u8,
    len: usize,
    out: *mut *mut PicModel,
) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = ModelParams::from_bytes(bytes(data, len, "data")?)?;
        *out = boxed(PicModel { params });
        Ok(())
    })
}

/// Reads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_model_load(path: *const c_char, out: *mut *mut PicModel) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if path.is_null() {
            return Err(Failure::null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| Failure {
            status: PicStatus::Config,
            message: "path is not valid UTF-8".into(),
        })?;
        let file = File::open(path).map_err(|e| Failure {
            status: PicStatus::Io,
            message: format!("{path}: {e}"),
        })?;
        let params = ModelParams::read_from(BufReader::new(file))?;
        *out = boxed(PicModel { params });
        Ok(())
    })
}

/// Serializes a model into a new buffer.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_model_to_bytes(
    model: *const PicModel,
    out: *mut *mut PicBuffer,
) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = buffer(model_ref(model)?.to_bytes());
        Ok(())
    })
}

/// Frame width, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pic_model_width(model: *const PicModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.width())
}

/// Frame height, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pic_model_height(model: *const PicModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.height())
}

/// Parameter digest carried in every stream coded with this model, or 0
/// for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pic_model_digest(model: *const PicModel) -> u64 {
    model.as_ref().map_or(0, |m| m.params.digest())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pic_model_free(model: *mut PicModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Codes a whole Y4M clip into a stream container.
///
/// # Safety
/// `model` must be a live handle; `y4m` must point to `len` readable bytes;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_encode_y4m(
    model: *const PicModel,
    y4m: *const u8,
    len: usize,
    qp: i32,
    out: *mut *mut PicBuffer,
) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = model_ref(model)?;
        let cfg = quality(qp)?;
        let clip = read_y4m(bytes(y4m, len, "y4m")?)?;
        let encoded = encode_video(&clip, params, &cfg)?;
        *out = buffer(encoded.bitstream.to_bytes());
        Ok(())
    })
}

/// Decodes a stream container into a Y4M clip.
///
/// # Safety
/// `model` must be a live handle; `stream` must point to `len` readable
/// bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_decode_stream(
    model: *const PicModel,
    stream: *const u8,
    len: usize,
    out: *mut *mut PicBuffer,
) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = model_ref(model)?;
        let bitstream = Bitstream::from_bytes(bytes(stream, len, "stream")?)?;
        let cfg = quality(bitstream.header.base_qp as i32)?;
        let clip = decode_video(&bitstream, params, &cfg)?;
        let mut y4m = Vec::new();
        write_y4m(&clip, &mut y4m)?;
        *out = buffer(y4m);
        Ok(())
    })
}

fn leak_model(params: &ModelParams) -> (NonNull<ModelParams>, &'static ModelParams) {
    let raw = Box::into_raw(Box::new(params.clone()));
    // SAFETY: freshly boxed, so non-null and valid until the owning handle
    // reclaims it in `Drop`.
    unsafe { (NonNull::new_unchecked(raw), &*raw) }
}

/// Reclaims a model from [`leak_model`] when constructing the handle failed.
unsafe fn reclaim(model: NonNull<ModelParams>) {
    drop(Box::from_raw(model.as_ptr()));
}

/// Starts a frame-by-frame encoder at base quality `qp`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_encoder_new(
    model: *const PicModel,
    qp: i32,
    out: *mut *mut PicEncoder,
) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = model_ref(model)?;
        let cfg = quality(qp)?;
        let (owned, borrowed) = leak_model(params);
        match Encoder::new(borrowed, &cfg) {
            Ok(enc) => {
                *out = boxed(PicEncoder {
                    inner: ManuallyDrop::new(enc),
                    model: owned,
                });
                Ok(())
            }
            Err(e) => {
                reclaim(owned);
                Err(e.into())
            }
        }
    })
}

/// Codes one I420 frame; `out` receives the frame payload.
///
/// # Safety
/// `encoder` must be a live handle; `frame` must point to `len` readable
/// bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_encoder_encode_frame(
    encoder: *mut PicEncoder,
    frame: *const u8,
    len: usize,
    out: *mut *mut PicBuffer,
) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let enc = encoder.as_mut().ok_or_else(|| Failure::null("encoder"))?;
        let frame = frame_from_i420(enc.model.as_ref(), bytes(frame, len, "frame")?)?;
        let coded = enc.inner.encode_frame(&frame)?;
        *out = buffer(coded.payload);
        Ok(())
    })
}

/// # Safety
/// `encoder` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pic_encoder_free(encoder: *mut PicEncoder) {
    if !encoder.is_null() {
        drop(Box::from_raw(encoder));
    }
}

/// Starts a frame-by-frame decoder for payloads coded at base quality `qp`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_decoder_new(
    model: *const PicModel,
    qp: i32,
    out: *mut *mut PicDecoder,
) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let params = model_ref(model)?;
        let cfg = quality(qp)?;
        let (owned, borrowed) = leak_model(params);
        match Decoder::new(borrowed, &cfg) {
            Ok(dec) => {
                *out = boxed(PicDecoder {
                    inner: ManuallyDrop::new(dec),
                    model: owned,
                });
                Ok(())
            }
            Err(e) => {
                reclaim(owned);
                Err(e.into())
            }
        }
    })
}

/// Decodes one frame payload; `out` receives the I420 picture.
///
/// # Safety
/// `decoder` must be a live handle; `payload` must point to `len` readable
/// bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pic_decoder_decode_frame(
    decoder: *mut PicDecoder,
    payload: *const u8,
    len: usize,
    out: *mut *mut PicBuffer,
) -> PicStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let dec = decoder.as_mut().ok_or_else(|| Failure::null("decoder"))?;
        let planes = dec.inner.decode_frame(bytes(payload, len, "payload")?)?;
        *out = buffer(frame_to_i420(&planes.to_frame()));
        Ok(())
    })
}

/// # Safety
/// `decoder` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pic_decoder_free(decoder: *mut PicDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Start of the buffer's bytes, or null for a null handle.
///
/// # Safety
/// `buf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pic_buffer_data(buf: *const PicBuffer) -> *const u8 {
    buf.as_ref().map_or(ptr::null(), |b| b.data.as_ptr())
}

/// Length in bytes, or 0 for a null handle.
///
/// # Safety
/// `buf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pic_buffer_len(buf: *const PicBuffer) -> usize {
    buf.as_ref().map_or(0, |b| b.data.len())
}

/// # Safety
/// `buf` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pic_buffer_free(buf: *mut PicBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}
