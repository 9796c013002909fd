//! C interface. Every fallible call returns a `UgStatus`; on failure the
//! message is kept per thread and can be copied out with `ug_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use unetgan::metrics::{si_snr, stoi};
use unetgan::model::Generator;
use unetgan::tensor::Checkpoint;
use unetgan::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    DataFormat = 4,
    Panic = 5,
}

/// Opaque generator loaded from a checkpoint.
pub struct UgGenerator {
    inner: Generator<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> UgStatus {
    match e {
        Error::Io { .. } => UgStatus::Io,
        e if e.is_data_format() => UgStatus::DataFormat,
        Error::Context { source, .. } => status_of(source),
        _ => UgStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (UgStatus, String)>) -> UgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            UgStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            UgStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (UgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (UgStatus, String) {
    (UgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn input<'a>(
    p: *const f32,
    len: usize,
    what: &str,
) -> Result<&'a [f32], (UgStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(
    p: *mut f32,
    len: usize,
    what: &str,
) -> Result<&'a mut [f32], (UgStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `cap` bytes, into `buf`. Returns the full message length
/// plus one, so a return value above `cap` means truncation. `buf` may be
/// null to query the size.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ug_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn ug_status_name(status: UgStatus) -> *const c_char {
    let s: &'static CStr = match status {
        UgStatus::Ok => c"ok",
        UgStatus::NullPointer => c"null pointer",
        UgStatus::InvalidArgument => c"invalid argument",
        UgStatus::Io => c"i/o error",
        UgStatus::DataFormat => c"data format error",
        UgStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Loads the generator stored in a checkpoint (a generator-only file or a
/// full training state). On success `*out` owns a handle that must be
/// released with `ug_generator_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ug_generator_load(
    path: *const c_char,
    out: *mut *mut UgGenerator,
) -> UgStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (UgStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let ckpt = Checkpoint::load(Path::new(path)).map_err(lib_err)?;
        let inner = Generator::from_checkpoint(&ckpt).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(UgGenerator { inner }));
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a handle from `ug_generator_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ug_generator_free(g: *mut UgGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of down-sampling levels; inputs are padded internally to a
/// multiple of `2^levels`.
///
/// # Safety
/// `g` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ug_generator_levels(g: *const UgGenerator) -> usize {
    g.as_ref().map_or(0, |g| g.inner.config.levels)
}

/// Enhances `len` samples of 16 kHz audio into `output` (also `len`
/// samples). Input and output may not overlap.
///
/// # Safety
/// `g` must be a live handle; `input` and `output` must each point to `len`
/// floats.
#[no_mangle]
pub unsafe extern "C" fn ug_generator_enhance(
    g: *const UgGenerator,
    input: *const f32,
    len: usize,
    output: *mut f32,
) -> UgStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("generator"))?;
        let x = self::input(input, len, "input")?;
        let y = self::output(output, len, "output")?;
        let enhanced = g.inner.enhance(x).map_err(lib_err)?;
        y.copy_from_slice(&enhanced);
        Ok(())
    })
}

/// STOI of `processed` against `clean`, both `len` samples at 16 kHz.
///
/// # Safety
/// `clean` and `processed` must point to `len` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ug_stoi(
    clean: *const f32,
    processed: *const f32,
    len: usize,
    out: *mut f64,
) -> UgStatus {
    guard(|| {
        let (c, p) = (
            input(clean, len, "clean")?,
            input(processed, len, "processed")?,
        );
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = stoi(c, p).map_err(lib_err)?;
        Ok(())
    })
}

/// Scale-invariant SNR in dB, capped at ±100.
///
/// # Safety
/// As for `ug_stoi`.
#[no_mangle]
pub unsafe extern "C" fn ug_si_snr(
    clean: *const f32,
    processed: *const f32,
    len: usize,
    out: *mut f64,
) -> UgStatus {
    guard(|| {
        let (c, p) = (
            input(clean, len, "clean")?,
            input(processed, len, "processed")?,
        );
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = si_snr(c, p).map_err(lib_err)?;
        Ok(())
    })
}

/// Mixes `clean` with `noise[offset .. offset + clean_len]` at `snr_db`.
/// Writes `clean_len` samples to `mixture_out` and to `clean_out` (the
/// reference after joint peak normalization) and the applied normalization
/// factor to `norm_scale_out`. `clean_out` and `norm_scale_out` may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ug_mix_at_snr(
    clean: *const f32,
    clean_len: usize,
    noise: *const f32,
    noise_len: usize,
    snr_db: f64,
    offset: usize,
    mixture_out: *mut f32,
    clean_out: *mut f32,
    norm_scale_out: *mut f64,
) -> UgStatus {
    guard(|| {
        let c = input(clean, clean_len, "clean")?;
        let n = input(noise, noise_len, "noise")?;
        let mix_out = output(mixture_out, clean_len, "mixture_out")?;
        let m = unetgan::data::mix_at_snr(c, n, snr_db, offset).map_err(lib_err)?;
        mix_out.copy_from_slice(&m.mixture);
        if !clean_out.is_null() {
            slice::from_raw_parts_mut(clean_out, clean_len).copy_from_slice(&m.clean);
        }
        if let Some(s) = norm_scale_out.as_mut() {
            *s = m.norm_scale;
        }
        Ok(())
    })
}
