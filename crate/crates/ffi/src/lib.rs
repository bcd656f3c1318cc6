//! C ABI over the bevlift pooling engines, geometry and depth metrics.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by `*_free`. Every fallible call returns a [`BevStatus`]; the
//! message for the most recent failure on the calling thread is available
//! from [`bevlift_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bevlift::geometry::{compose_relative, project_points, unproject_pixel, Mat3};
use bevlift::lift::WeightSource;
use bevlift::metrics::{compute_metrics, DepthEvalPairs};
use bevlift::{BevGridSpec, CameraView, EgoPose, Engine, Error, FrustumPoints, Vec3};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Precondition = 3,
    Validation = 4,
    EngineMismatch = 5,
    Io = 6,
    Parse = 7,
    Usage = 8,
    Panic = 9,
}

/// Pooling engine selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevEngine {
    Sequential = 0,
    PrefixSum = 1,
    ScatterAdd = 2,
}

/// BEV grid extent; mirrors the Rust `BevGridSpec`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BevGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell_size: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl From<BevGrid> for BevGridSpec {
    fn from(g: BevGrid) -> Self {
        BevGridSpec {
            x_min: g.x_min,
            x_max: g.x_max,
            y_min: g.y_min,
            y_max: g.y_max,
            cell_size: g.cell_size,
            z_min: g.z_min,
            z_max: g.z_max,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BevMetrics {
    pub silog: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub log10: f64,
    pub rmse: f64,
    pub count: usize,
}

/// Opaque camera handle.
pub struct BevCamera(CameraView);

/// Opaque frustum point set handle.
pub struct BevPoints(FrustumPoints);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BevStatus {
    match err {
        Error::Config { .. } => BevStatus::Config,
        Error::Precondition { .. } => BevStatus::Precondition,
        Error::Validation { .. } => BevStatus::Validation,
        Error::EngineMismatch { .. } => BevStatus::EngineMismatch,
        Error::Usage { .. } => BevStatus::Usage,
        Error::Io { .. } => BevStatus::Io,
        Error::Parse { .. } => BevStatus::Parse,
    }
}

fn guard(f: impl FnOnce() -> Result<(), BevFailure>) -> BevStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BevStatus::Ok,
        Ok(Err(BevFailure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BevStatus::NullPointer
        }
        Ok(Err(BevFailure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            BevStatus::Panic
        }
    }
}

enum BevFailure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for BevFailure {
    fn from(e: Error) -> Self {
        BevFailure::Lib(e)
    }
}

unsafe fn slice_in<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], BevFailure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(BevFailure::Null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn slice_out<'a, T>(p: *mut T, n: usize, what: &'static str) -> Result<&'a mut [T], BevFailure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(BevFailure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn mat3(p: *const f64, what: &'static str) -> Result<Mat3, BevFailure> {
    Ok(Mat3::from_row_slice(slice_in(p, 9, what)?))
}

unsafe fn vec3(p: *const f64, what: &'static str) -> Result<Vec3, BevFailure> {
    let s = slice_in(p, 3, what)?;
    Ok(Vec3::new(s[0], s[1], s[2]))
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bevlift_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bevlift_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a camera from row-major `k[9]`, row-major ego-to-camera `r[9]` and `t[3]`.
///
/// # Safety
/// `k`, `r` and `t` must point to 9, 9 and 3 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevlift_camera_new(
    k: *const f64,
    r: *const f64,
    t: *const f64,
    width: u32,
    height: u32,
    view_id: i32,
    out: *mut *mut BevCamera,
) -> BevStatus {
    guard(|| {
        if out.is_null() {
            return Err(BevFailure::Null("out"));
        }
        let cam = CameraView::new(mat3(k, "k")?, mat3(r, "r")?, vec3(t, "t")?, width, height, view_id)?;
        *out = Box::into_raw(Box::new(BevCamera(cam)));
        Ok(())
    })
}

/// # Safety
/// `cam` must come from [`bevlift_camera_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bevlift_camera_free(cam: *mut BevCamera) {
    if !cam.is_null() {
        drop(Box::from_raw(cam));
    }
}

/// Projects `n` ego-frame points (`xyz`, 3n doubles). Visible points are written
/// as `(u, v, d)` triplets to `uvd` with their input index in `index`, in input
/// order; `out_count` receives how many. Both outputs need room for `n` points.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn bevlift_project_points(
    cam: *const BevCamera,
    xyz: *const f64,
    n: usize,
    uvd: *mut f64,
    index: *mut usize,
    out_count: *mut usize,
) -> BevStatus {
    guard(|| {
        let cam = cam.as_ref().ok_or(BevFailure::Null("cam"))?;
        let out_count = out_count.as_mut().ok_or(BevFailure::Null("out_count"))?;
        let input = slice_in(xyz, 3 * n, "xyz")?;
        let uvd = slice_out(uvd, 3 * n, "uvd")?;
        let index = slice_out(index, n, "index")?;
        let cloud: Vec<Vec3> = input.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let projected = project_points(&cloud, &cam.0);
        for (k, (p, i)) in projected.iter().enumerate() {
            uvd[3 * k..3 * k + 3].copy_from_slice(&[p.u, p.v, p.d]);
            index[k] = *i;
        }
        *out_count = projected.len();
        Ok(())
    })
}

/// Ego-frame point seen at pixel `(u, v)` with camera depth `d`, written to `out_xyz[3]`.
///
/// # Safety
/// `cam` must be a live handle and `out_xyz` writable for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn bevlift_unproject_pixel(
    cam: *const BevCamera,
    u: f64,
    v: f64,
    d: f64,
    out_xyz: *mut f64,
) -> BevStatus {
    guard(|| {
        let cam = cam.as_ref().ok_or(BevFailure::Null("cam"))?;
        let out = slice_out(out_xyz, 3, "out_xyz")?;
        let p = unproject_pixel(u, v, d, &cam.0)?;
        out.copy_from_slice(&[p.x, p.y, p.z]);
        Ok(())
    })
}

/// Relative transform taking points from the `prev` ego frame to the `cur`
/// ego frame. Poses are ego-to-global, rotation row-major.
///
/// # Safety
/// Inputs point to 9 / 3 doubles; outputs are writable for 9 / 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn bevlift_compose_relative(
    prev_r: *const f64,
    prev_t: *const f64,
    cur_r: *const f64,
    cur_t: *const f64,
    out_r: *mut f64,
    out_t: *mut f64,
) -> BevStatus {
    guard(|| {
        let prev = EgoPose::new(mat3(prev_r, "prev_r")?, vec3(prev_t, "prev_t")?, 0)?;
        let cur = EgoPose::new(mat3(cur_r, "cur_r")?, vec3(cur_t, "cur_t")?, 0)?;
        let rel = compose_relative(&prev, &cur)?;
        let (r, t) = (slice_out(out_r, 9, "out_r")?, slice_out(out_t, 3, "out_t")?);
        for i in 0..3 {
            for j in 0..3 {
                r[i * 3 + j] = rel.rotation[(i, j)];
            }
            t[i] = rel.translation[i];
        }
        Ok(())
    })
}

/// Creates a point set from `n` coordinates (`xyz`, 3n doubles) and features
/// (`features`, n × `channels` floats, row-major).
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevlift_points_new(
    xyz: *const f64,
    features: *const f32,
    n: usize,
    channels: usize,
    out: *mut *mut BevPoints,
) -> BevStatus {
    guard(|| {
        if out.is_null() {
            return Err(BevFailure::Null("out"));
        }
        let coords = slice_in(xyz, 3 * n, "xyz")?
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect();
        let feats = slice_in(features, n * channels, "features")?.to_vec();
        let pts = FrustumPoints::new(channels, coords, feats, WeightSource::Synthetic)?;
        *out = Box::into_raw(Box::new(BevPoints(pts)));
        Ok(())
    })
}

/// # Safety
/// `points` must come from [`bevlift_points_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bevlift_points_free(points: *mut BevPoints) {
    if !points.is_null() {
        drop(Box::from_raw(points));
    }
}

/// Number of points in a set, 0 for NULL.
///
/// # Safety
/// `points` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bevlift_points_len(points: *const BevPoints) -> usize {
    points.as_ref().map_or(0, |p| p.0.len())
}

/// Rows and columns of a grid.
///
/// # Safety
/// `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevlift_grid_shape(grid: BevGrid, rows: *mut usize, cols: *mut usize) -> BevStatus {
    guard(|| {
        let spec = BevGridSpec::from(grid);
        spec.validate()?;
        *rows.as_mut().ok_or(BevFailure::Null("rows"))? = spec.rows();
        *cols.as_mut().ok_or(BevFailure::Null("cols"))? = spec.cols();
        Ok(())
    })
}

/// Pools `count` point sets onto `grid`. `out` receives `channels × rows × cols`
/// doubles (channel-major) and must hold `out_len` of them; `dropped` receives
/// the number of points outside the grid. `workers` applies to scatter-add only.
///
/// # Safety
/// `sets` must point to `count` live handles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevlift_pool(
    engine: BevEngine,
    workers: usize,
    sets: *const *const BevPoints,
    count: usize,
    grid: BevGrid,
    out: *mut f64,
    out_len: usize,
    dropped: *mut usize,
) -> BevStatus {
    guard(|| {
        let handles = slice_in(sets, count, "sets")?;
        let mut owned = Vec::with_capacity(count);
        for &h in handles {
            // engines take a contiguous slice of point sets
            owned.push(h.as_ref().ok_or(BevFailure::Null("sets[i]"))?.0.clone());
        }
        let engine = match engine {
            BevEngine::Sequential => Engine::Sequential,
            BevEngine::PrefixSum => Engine::PrefixSum,
            BevEngine::ScatterAdd => Engine::scatter_add(workers),
        };
        let pooled = engine.pool(&owned, &grid.into())?;
        let data = pooled.grid.data();
        if out_len != data.len() {
            return Err(Error::Config {
                module: "pooling",
                message: format!("output buffer holds {out_len} values, grid needs {}", data.len()),
            }
            .into());
        }
        slice_out(out, out_len, "out")?.copy_from_slice(data);
        *dropped.as_mut().ok_or(BevFailure::Null("dropped"))? = pooled.dropped;
        Ok(())
    })
}

/// Depth metrics over `n` matched prediction / ground-truth depths.
///
/// # Safety
/// `pred` and `gt` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevlift_depth_metrics(
    pred: *const f64,
    gt: *const f64,
    n: usize,
    out: *mut BevMetrics,
) -> BevStatus {
    guard(|| {
        let out = out.as_mut().ok_or(BevFailure::Null("out"))?;
        let pairs = DepthEvalPairs::new(slice_in(pred, n, "pred")?.to_vec(), slice_in(gt, n, "gt")?.to_vec())?;
        let m = compute_metrics(&pairs);
        *out = BevMetrics {
            silog: m.silog,
            abs_rel: m.abs_rel,
            sq_rel: m.sq_rel,
            log10: m.log10,
            rmse: m.rmse,
            count: m.count,
        };
        Ok(())
    })
}
