//! C ABI for the `rca-ghost` pipeline.
//!
//! Every fallible function returns an [`RgStatus`]. On failure a message is
//! stored per thread and can be read with [`rg_last_error_message`]. Panics
//! never cross the boundary; they surface as `RG_STATUS_PANIC`.
//!
//! Handles ([`RgConfig`], [`RgVolume`]) are opaque and owned by the caller
//! once returned; release them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use num_complex::Complex64;
use rca_ghost::beamformer::ComplexVolume;
use rca_ghost::config::{PipelineConfig, Profile};
use rca_ghost::geometry::{tof, PathIndex, Point3};
use rca_ghost::pipeline::{load_filtered, load_frames, run_stage, with_threads, Stage};
use rca_ghost::postfilter::complex_correlation;
use rca_ghost::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    MissingArtifact = 4,
    MalformedArtifact = 5,
    Io = 6,
    Numeric = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Pipeline configuration handle.
pub struct RgConfig {
    inner: PipelineConfig,
}

/// Complex volume handle, `[x][y][z]`.
pub struct RgVolume {
    inner: ComplexVolume,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RgStatus {
    match e {
        Error::InvalidArgument(_) => RgStatus::InvalidArgument,
        Error::InvalidConfig(_) | Error::ConfigParse(_) => RgStatus::InvalidConfig,
        Error::MissingArtifact { .. } => RgStatus::MissingArtifact,
        Error::MalformedArtifact { .. } | Error::StaleArtifact { .. } => {
            RgStatus::MalformedArtifact
        }
        Error::Io { .. } => RgStatus::Io,
        _ => RgStatus::Numeric,
    }
}

enum Failure {
    Status(RgStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(RgStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RgStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::Status(
            RgStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn profile_arg(p: *const c_char) -> Result<Profile, Failure> {
    if p.is_null() {
        return Ok(Profile::Desk);
    }
    Ok(str_arg(p, "profile")?.parse::<Profile>()?)
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a config from a built-in profile (`"desk"` or `"full"`; NULL
/// means desk), optionally merged with the TOML file at `path` (may be NULL).
///
/// # Safety
/// `profile` and `path` must be NULL or valid C strings; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_config_load(
    profile: *const c_char,
    path: *const c_char,
    out: *mut *mut RgConfig,
) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let profile = profile_arg(profile)?;
        let path = if path.is_null() {
            None
        } else {
            Some(PathBuf::from(str_arg(path, "path")?))
        };
        let inner = PipelineConfig::load(profile, path.as_deref())?;
        *out = Box::into_raw(Box::new(RgConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from [`rg_config_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rg_config_free(cfg: *mut RgConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle and `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn rg_config_set_output_dir(
    cfg: *mut RgConfig,
    dir: *const c_char,
) -> RgStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.inner.output_dir = PathBuf::from(str_arg(dir, "dir")?);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_config_set_seed(cfg: *mut RgConfig, seed: u64) -> RgStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.inner.seed = seed;
        Ok(())
    })
}

/// Runs `"simulate"`, `"beamform"`, `"filter"`, `"metrics"` or `"all"`.
/// `threads == 0` uses the default pool.
///
/// # Safety
/// `cfg` must be a live handle and `stage` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn rg_run_stage(
    cfg: *const RgConfig,
    stage: *const c_char,
    threads: u32,
) -> RgStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let stage: Stage = str_arg(stage, "stage")?.parse()?;
        cfg.inner.validate()?;
        let threads = (threads > 0).then_some(threads as usize);
        with_threads(threads, || run_stage(stage, &cfg.inner))??;
        Ok(())
    })
}

/// Time of flight in seconds from transmit element `tx` through point `p`
/// (meters, `[x, y, z]`) to receive element `rx` along path `(n, i)`, using
/// the config's array and sound speed.
///
/// # Safety
/// `cfg` must be a live handle, `p` must point to 3 doubles and `out` to one.
#[no_mangle]
pub unsafe extern "C" fn rg_tof(
    cfg: *const RgConfig,
    tx: usize,
    rx: usize,
    n: u8,
    i: u8,
    p: *const f64,
    out: *mut f64,
) -> RgStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if p.is_null() || out.is_null() {
            return Err(null("p or out"));
        }
        let array = cfg.inner.array.build()?;
        let (txs, rxs) = (array.tx_elements(), array.rx_elements());
        if tx >= txs.len() || rx >= rxs.len() {
            return Err(Failure::Status(
                RgStatus::InvalidArgument,
                format!("element index out of range ({tx}, {rx})"),
            ));
        }
        let p = std::slice::from_raw_parts(p, 3);
        let point = Point3::new(p[0], p[1], p[2]);
        *out = tof(
            &point,
            &txs[tx],
            &rxs[rx],
            PathIndex::new(n, i)?,
            cfg.inner.medium,
        );
        Ok(())
    })
}

/// Normalized complex correlation of two interleaved `(re, im)` vectors of
/// `len` complex values each. Writes `(re, im)` to `out`.
///
/// # Safety
/// `x` and `y` must point to `2 * len` doubles, `out` to 2.
#[no_mangle]
pub unsafe extern "C" fn rg_complex_correlation(
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> RgStatus {
    guard(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            return Err(null("x, y or out"));
        }
        let read = |p: *const f64| -> Vec<Complex64> {
            std::slice::from_raw_parts(p, 2 * len)
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect()
        };
        let c = complex_correlation(&read(x), &read(y))?;
        *out = c.re;
        *out.add(1) = c.im;
        Ok(())
    })
}

fn volume_out(out: *mut *mut RgVolume, inner: ComplexVolume) {
    unsafe { *out = Box::into_raw(Box::new(RgVolume { inner })) };
}

/// Loads the beamformed frame for path `(n, i)` from the config's output
/// directory.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_volume_load_frame(
    cfg: *const RgConfig,
    n: u8,
    i: u8,
    out: *mut *mut RgVolume,
) -> RgStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathIndex::new(n, i)?;
        let frames = load_frames(&cfg.inner)?;
        volume_out(out, frames.get(path).clone());
        Ok(())
    })
}

/// Loads the filtered volume from the config's output directory.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_volume_load_filtered(
    cfg: *const RgConfig,
    out: *mut *mut RgVolume,
) -> RgStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (_, filtered, _) = load_filtered(&cfg.inner)?;
        volume_out(out, filtered);
        Ok(())
    })
}

/// # Safety
/// `v` must be NULL or a live volume handle.
#[no_mangle]
pub unsafe extern "C" fn rg_volume_free(v: *mut RgVolume) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Writes the voxel counts `[nx, ny, nz]`.
///
/// # Safety
/// `v` must be a live handle and `dims` must point to 3 `size_t`.
#[no_mangle]
pub unsafe extern "C" fn rg_volume_dims(v: *const RgVolume, dims: *mut usize) -> RgStatus {
    guard(|| {
        let v = v.as_ref().ok_or_else(|| null("volume"))?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        let (a, b, c) = v.inner.data.dim();
        std::slice::from_raw_parts_mut(dims, 3).copy_from_slice(&[a, b, c]);
        Ok(())
    })
}

/// Copies the voxel magnitudes in `[x][y][z]` order into `buf`, which must
/// hold at least `nx * ny * nz` doubles.
///
/// # Safety
/// `v` must be a live handle and `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_volume_magnitude(
    v: *const RgVolume,
    buf: *mut f64,
    len: usize,
) -> RgStatus {
    guard(|| {
        let v = v.as_ref().ok_or_else(|| null("volume"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let need = v.inner.data.len();
        if len < need {
            return Err(Failure::Status(
                RgStatus::BufferTooSmall,
                format!("buffer holds {len} values, volume has {need}"),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (o, x) in out.iter_mut().zip(v.inner.data.iter()) {
            *o = x.norm();
        }
        Ok(())
    })
}

/// Writes the index of the largest-magnitude voxel.
///
/// # Safety
/// `v` must be a live handle and `idx` must point to 3 `size_t`.
#[no_mangle]
pub unsafe extern "C" fn rg_volume_argmax(v: *const RgVolume, idx: *mut usize) -> RgStatus {
    guard(|| {
        let v = v.as_ref().ok_or_else(|| null("volume"))?;
        if idx.is_null() {
            return Err(null("idx"));
        }
        std::slice::from_raw_parts_mut(idx, 3).copy_from_slice(&v.inner.argmax());
        Ok(())
    })
}
