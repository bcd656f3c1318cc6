//! Ground-truth depth from LiDAR: project, min-pool onto the feature grid,
//! then one-hot encode the surviving depth per cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_points, CameraView, Point25D, Vec3};
use crate::tensor::{FeatureGrid, GridKind};

/// Default feature stride between image pixels and grid cells.
pub const DEFAULT_STRIDE: usize = 16;

/// Uniform discretization of `[d_min, d_max)` into `num_bins` depth bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBinSpec {
    pub d_min: f64,
    pub d_max: f64,
    pub num_bins: usize,
}

impl Default for DepthBinSpec {
    fn default() -> Self {
        Self {
            d_min: 2.0,
            d_max: 58.0,
            num_bins: 112,
        }
    }
}

impl DepthBinSpec {
    pub fn new(d_min: f64, d_max: f64, num_bins: usize) -> Result<Self> {
        let spec = Self {
            d_min,
            d_max,
            num_bins,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_max > self.d_min && self.d_max.is_finite()) {
            return Err(Error::config(
                "depth_gt",
                format!("invalid depth range [{}, {})", self.d_min, self.d_max),
            ));
        }
        if self.num_bins == 0 {
            return Err(Error::config("depth_gt", "num_bins must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn bin_width(&self) -> f64 {
        (self.d_max - self.d_min) / self.num_bins as f64
    }

    #[inline]
    pub fn center(&self, bin: usize) -> f64 {
        self.d_min + (bin as f64 + 0.5) * self.bin_width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.num_bins).map(|j| self.center(j)).collect()
    }

    /// Bin containing `d`, or `None` outside `[d_min, d_max)`.
    #[inline]
    pub fn bin_index(&self, d: f64) -> Option<usize> {
        if !(d >= self.d_min && d < self.d_max) {
            return None;
        }
        let j = ((d - self.d_min) / self.bin_width()).floor() as usize;
        // rounding can push values just below d_max onto num_bins
        Some(j.min(self.num_bins - 1))
    }
}

/// Per-cell minimum depth on a `height × width` grid; absent cells had no points.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    height: usize,
    width: usize,
    stride: usize,
    depth: Vec<f64>,
}

impl SparseDepthMap {
    pub fn empty(height: usize, width: usize, stride: usize) -> Self {
        Self {
            height,
            width,
            stride,
            depth: vec![f64::INFINITY; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let d = self.depth[row * self.width + col];
        d.is_finite().then_some(d)
    }

    /// Occupied cells as `((row, col), depth)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.depth
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_finite())
            .map(move |(i, &d)| ((i / self.width, i % self.width), d))
    }

    pub fn len(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Keeps the nearest depth among the points landing in each `stride × stride` cell.
pub fn min_pool(
    points: &[Point25D],
    stride: usize,
    out_height: usize,
    out_width: usize,
) -> Result<SparseDepthMap> {
    if stride == 0 {
        return Err(Error::config("depth_gt", "stride must be at least 1"));
    }
    let mut map = SparseDepthMap::empty(out_height, out_width, stride);
    let (u_max, v_max) = ((out_width * stride) as f64, (out_height * stride) as f64);
    for (i, p) in points.iter().enumerate() {
        if !(p.u >= 0.0 && p.u < u_max && p.v >= 0.0 && p.v < v_max) {
            return Err(Error::Precondition {
                module: "depth_gt",
                index: i,
                message: format!("point ({}, {}) outside {u_max}x{v_max} image", p.u, p.v),
            });
        }
        if !(p.d > 0.0 && p.d.is_finite()) {
            return Err(Error::Precondition {
                module: "depth_gt",
                index: i,
                message: format!("depth {} is not positive", p.d),
            });
        }
        let row = (p.v / stride as f64).floor() as usize;
        let col = (p.u / stride as f64).floor() as usize;
        let slot = &mut map.depth[row * out_width + col];
        if p.d < *slot {
            *slot = p.d;
        }
    }
    Ok(map)
}

/// One-hot encodes each occupied cell's depth into `bins.num_bins` channels.
/// Empty cells and out-of-range depths give all-zero columns.
pub fn one_hot_depth(map: &SparseDepthMap, bins: &DepthBinSpec) -> FeatureGrid {
    let mut grid = FeatureGrid::zeros(GridKind::DepthOneHot, bins.num_bins, map.height, map.width);
    for ((row, col), d) in map.iter() {
        if let Some(j) = bins.bin_index(d) {
            grid.set(j, row, col, 1.0);
        }
    }
    grid
}

/// Full ground-truth path for one camera: project, min-pool, one-hot.
pub fn make_depth_gt(
    cloud: &[Vec3],
    cam: &CameraView,
    stride: usize,
    bins: &DepthBinSpec,
) -> Result<FeatureGrid> {
    let map = sparse_depth(cloud, cam, stride)?;
    bins.validate()?;
    Ok(one_hot_depth(&map, bins))
}

/// Min-pooled depth map of `cloud` as seen by `cam`.
pub fn sparse_depth(cloud: &[Vec3], cam: &CameraView, stride: usize) -> Result<SparseDepthMap> {
    let (w, h) = grid_shape(cam, stride)?;
    let projected: Vec<Point25D> = project_points(cloud, cam).into_iter().map(|(p, _)| p).collect();
    min_pool(&projected, stride, h, w)
}

/// Feature-grid `(width, height)` for a camera at `stride`.
pub fn grid_shape(cam: &CameraView, stride: usize) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::config("depth_gt", "stride must be at least 1"));
    }
    let (w, h) = (cam.image_width() as usize, cam.image_height() as usize);
    if w % stride != 0 || h % stride != 0 {
        return Err(Error::config(
            "depth_gt",
            format!("image {w}x{h} is not divisible by stride {stride}"),
        ));
    }
    Ok((w / stride, h / stride))
}
