//! Voxel pooling: sum frustum features falling into the same BEV cell.
//!
//! Three engines produce the same grid up to floating-point reassociation:
//!
//! * [`pool_sequential`] walks the points once in input order. It is the
//!   reference every other engine is checked against.
//! * [`pool_prefix_sum`] is the sort-based "cumsum trick": stable-sort points by
//!   cell id, take an inclusive running sum over the sorted feature rows, and
//!   recover each cell's total by differencing the running sum at segment ends.
//! * [`pool_scatter_add`] gives every worker a slice of the points and lets it
//!   add each feature straight into its cell, either with per-element atomic
//!   adds into one shared grid or into a private grid merged at the end.
//!
//! Accumulation is `f64` in all engines; points carry `f32` features.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::lift::FrustumPoints;
use crate::tensor::{FeatureGrid, GridKind};

/// Per-cell relative tolerance between engines.
pub const ENGINE_REL_TOL: f64 = 1e-5;
/// Absolute floor applied to near-zero cells.
pub const ENGINE_ABS_TOL: f64 = 1e-6;
/// Relative tolerance when scatter-add runs with a single worker.
pub const SINGLE_WORKER_REL_TOL: f64 = 1e-7;

/// BEV extent in the ego x/y plane, cell size, and the retained height band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell_size: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for BevGridSpec {
    fn default() -> Self {
        Self {
            x_min: -51.2,
            x_max: 51.2,
            y_min: -51.2,
            y_max: 51.2,
            cell_size: 0.8,
            z_min: -5.0,
            z_max: 3.0,
        }
    }
}

fn exact_cells(extent: f64, cell: f64) -> Option<usize> {
    let n = extent / cell;
    let r = n.round();
    ((n - r).abs() <= 1e-9 * r.max(1.0) && r >= 1.0).then_some(r as usize)
}

impl BevGridSpec {
    /// Square grid centred on the ego origin with `cells` cells per side.
    pub fn square(half_extent: f64, cells: usize, z_min: f64, z_max: f64) -> Self {
        Self {
            x_min: -half_extent,
            x_max: half_extent,
            y_min: -half_extent,
            y_max: half_extent,
            cell_size: 2.0 * half_extent / cells as f64,
            z_min,
            z_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.x_min,
            self.x_max,
            self.y_min,
            self.y_max,
            self.cell_size,
            self.z_min,
            self.z_max,
        ];
        if !vals.iter().all(|v| v.is_finite()) || !(self.cell_size > 0.0) {
            return Err(Error::config("pooling", "grid values must be finite with positive cell size"));
        }
        if !(self.z_max > self.z_min) {
            return Err(Error::config("pooling", "empty z band"));
        }
        if exact_cells(self.x_max - self.x_min, self.cell_size).is_none()
            || exact_cells(self.y_max - self.y_min, self.cell_size).is_none()
        {
            return Err(Error::config(
                "pooling",
                "grid extents must be positive whole multiples of the cell size",
            ));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        exact_cells(self.y_max - self.y_min, self.cell_size).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        exact_cells(self.x_max - self.x_min, self.cell_size).unwrap_or(0)
    }

    pub fn num_cells(&self) -> usize {
        self.rows() * self.cols()
    }

    /// `(row, col)` of the cell containing `p`, or `None` outside the half-open
    /// grid box or the z band.
    #[inline]
    pub fn cell_id(&self, p: &Vec3) -> Option<(usize, usize)> {
        if !(p.x >= self.x_min && p.x < self.x_max)
            || !(p.y >= self.y_min && p.y < self.y_max)
            || !(p.z >= self.z_min && p.z < self.z_max)
        {
            return None;
        }
        let row = ((p.y - self.y_min) / self.cell_size).floor() as usize;
        let col = ((p.x - self.x_min) / self.cell_size).floor() as usize;
        Some((row.min(self.rows() - 1), col.min(self.cols() - 1)))
    }

    /// Row-major linear cell id `row * cols + col`.
    #[inline]
    pub fn linear_id(&self, p: &Vec3) -> Option<u64> {
        self.cell_id(p)
            .map(|(r, c)| r as u64 * self.cols() as u64 + c as u64)
    }
}

/// How scatter-add workers combine their contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterStrategy {
    /// Compare-and-swap `f64` adds into one shared grid.
    Atomic,
    /// One private grid per worker, summed in worker order after the join.
    PartialGrids,
}

impl fmt::Display for ScatterStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScatterStrategy::Atomic => "atomic",
            ScatterStrategy::PartialGrids => "partial_grids",
        })
    }
}

/// Pooling engine selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Sequential,
    PrefixSum,
    ScatterAdd {
        workers: usize,
        strategy: ScatterStrategy,
    },
}

/// Engine family as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Sequential,
    PrefixSum,
    ScatterAdd,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [
        EngineKind::Sequential,
        EngineKind::PrefixSum,
        EngineKind::ScatterAdd,
    ];

    pub fn with_workers(self, workers: usize) -> Engine {
        match self {
            EngineKind::Sequential => Engine::Sequential,
            EngineKind::PrefixSum => Engine::PrefixSum,
            EngineKind::ScatterAdd => Engine::scatter_add(workers),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Sequential => "sequential",
            EngineKind::PrefixSum => "prefix_sum",
            EngineKind::ScatterAdd => "scatter_add",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(EngineKind::Sequential),
            "prefix_sum" => Ok(EngineKind::PrefixSum),
            "scatter_add" => Ok(EngineKind::ScatterAdd),
            other => Err(Error::Usage {
                module: "pooling",
                message: format!("unknown engine '{other}' (sequential|prefix_sum|scatter_add)"),
            }),
        }
    }
}

impl Engine {
    /// Scatter-add with the default strategy.
    pub fn scatter_add(workers: usize) -> Self {
        Engine::ScatterAdd {
            workers,
            strategy: ScatterStrategy::PartialGrids,
        }
    }

    pub fn kind(&self) -> EngineKind {
        match self {
            Engine::Sequential => EngineKind::Sequential,
            Engine::PrefixSum => EngineKind::PrefixSum,
            Engine::ScatterAdd { .. } => EngineKind::ScatterAdd,
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            Engine::ScatterAdd { workers, .. } => *workers,
            _ => 1,
        }
    }

    /// Descriptive tag recorded with pooled output, e.g. `scatter_add[partial_grids,w=8]`.
    pub fn tag(&self) -> String {
        match self {
            Engine::ScatterAdd { workers, strategy } => {
                format!("scatter_add[{strategy},w={workers}]")
            }
            other => other.kind().name().to_string(),
        }
    }

    pub fn pool(&self, points: &[FrustumPoints], spec: &BevGridSpec) -> Result<PooledBev> {
        match *self {
            Engine::Sequential => pool_sequential(points, spec),
            Engine::PrefixSum => pool_prefix_sum(points, spec),
            Engine::ScatterAdd { workers, strategy } => {
                pool_scatter_add_with(points, spec, workers, strategy)
            }
        }
    }
}

/// BEV grid `channels × rows × cols` plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledBev {
    pub grid: FeatureGrid,
    pub engine: String,
    /// Points outside the grid box or z band.
    pub dropped: usize,
}

fn check_inputs(points: &[FrustumPoints], spec: &BevGridSpec) -> Result<usize> {
    spec.validate()?;
    let first = points
        .first()
        .ok_or_else(|| Error::config("pooling", "no frustum point sets given"))?;
    let channels = first.channels();
    if let Some(i) = points.iter().position(|p| p.channels() != channels) {
        return Err(Error::config(
            "pooling",
            format!(
                "point set {i} has {} channels, expected {channels}",
                points[i].channels()
            ),
        ));
    }
    Ok(channels)
}

/// Cell-major accumulator (`cells × channels`) to channel-major BEV grid.
fn into_bev(acc: &[f64], channels: usize, spec: &BevGridSpec) -> FeatureGrid {
    let (rows, cols) = (spec.rows(), spec.cols());
    let cells = rows * cols;
    let mut grid = FeatureGrid::zeros(GridKind::BevFeature, channels, rows, cols);
    let out = grid.data_mut();
    for (cell, row) in acc.chunks_exact(channels).enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[c * cells + cell] = v;
        }
    }
    grid
}

#[inline]
fn add_row(dst: &mut [f64], src: &[f32]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s as f64;
    }
}

/// Reference engine: one pass, input order.
pub fn pool_sequential(points: &[FrustumPoints], spec: &BevGridSpec) -> Result<PooledBev> {
    let channels = check_inputs(points, spec)?;
    let mut acc = vec![0.0f64; spec.num_cells() * channels];
    let mut dropped = 0;
    for set in points {
        for (i, p) in set.coords().iter().enumerate() {
            match spec.linear_id(p) {
                Some(id) => {
                    let id = id as usize;
                    add_row(&mut acc[id * channels..(id + 1) * channels], set.feature(i));
                }
                None => dropped += 1,
            }
        }
    }
    Ok(PooledBev {
        grid: into_bev(&acc, channels, spec),
        engine: Engine::Sequential.tag(),
        dropped,
    })
}

/// Sort-based engine: stable sort by cell id, inclusive cumulative sum over the
/// sorted features, segment totals by subtracting the running sum at each
/// segment boundary.
pub fn pool_prefix_sum(points: &[FrustumPoints], spec: &BevGridSpec) -> Result<PooledBev> {
    let channels = check_inputs(points, spec)?;
    let total: usize = points.iter().map(|p| p.len()).sum();

    // (cell id, set, index) for every retained point
    let mut keyed: Vec<(u64, u32, u32)> = Vec::with_capacity(total);
    let mut dropped = 0;
    for (s, set) in points.iter().enumerate() {
        for (i, p) in set.coords().iter().enumerate() {
            match spec.linear_id(p) {
                Some(id) => keyed.push((id, s as u32, i as u32)),
                None => dropped += 1,
            }
        }
    }
    keyed.sort_by_key(|k| k.0);

    // gather sorted features, then cumulative sum in place
    let n = keyed.len();
    let mut cumsum = vec![0.0f64; n * channels];
    for (row, &(_, s, i)) in cumsum.chunks_exact_mut(channels).zip(&keyed) {
        for (d, &f) in row.iter_mut().zip(points[s as usize].feature(i as usize)) {
            *d = f as f64;
        }
    }
    for r in 1..n {
        let (done, rest) = cumsum.split_at_mut(r * channels);
        let prev = &done[(r - 1) * channels..];
        for (d, p) in rest[..channels].iter_mut().zip(prev) {
            *d += p;
        }
    }

    let mut acc = vec![0.0f64; spec.num_cells() * channels];
    let mut boundary: Option<usize> = None;
    for r in 0..n {
        let id = keyed[r].0;
        if r + 1 < n && keyed[r + 1].0 == id {
            continue;
        }
        let end = &cumsum[r * channels..(r + 1) * channels];
        let dst = &mut acc[id as usize * channels..(id as usize + 1) * channels];
        match boundary {
            Some(b) => {
                let start = &cumsum[b * channels..(b + 1) * channels];
                for ((d, e), s) in dst.iter_mut().zip(end).zip(start) {
                    *d = e - s;
                }
            }
            None => dst.copy_from_slice(end),
        }
        boundary = Some(r);
    }

    Ok(PooledBev {
        grid: into_bev(&acc, channels, spec),
        engine: Engine::PrefixSum.tag(),
        dropped,
    })
}

/// Parallel scatter-add with the default strategy.
pub fn pool_scatter_add(
    points: &[FrustumPoints],
    spec: &BevGridSpec,
    workers: usize,
) -> Result<PooledBev> {
    let Engine::ScatterAdd { strategy, .. } = Engine::scatter_add(workers) else {
        unreachable!()
    };
    pool_scatter_add_with(points, spec, workers, strategy)
}

/// Contiguous `[start, end)` ranges over the concatenation of all point sets.
fn partition(total: usize, workers: usize) -> Vec<(usize, usize)> {
    let chunk = total.div_ceil(workers).max(1);
    (0..workers)
        .map(|w| ((w * chunk).min(total), ((w + 1) * chunk).min(total)))
        .collect()
}

/// Visits every point of the global range `[start, end)` in order.
fn for_each_in_range(
    points: &[FrustumPoints],
    start: usize,
    end: usize,
    mut f: impl FnMut(&Vec3, &[f32]),
) {
    let mut offset = 0;
    for set in points {
        let (lo, hi) = (offset, offset + set.len());
        offset = hi;
        if hi <= start || lo >= end {
            continue;
        }
        for i in start.max(lo) - lo..end.min(hi) - lo {
            f(&set.coords()[i], set.feature(i));
        }
    }
}

#[inline]
fn atomic_add_f64(cell: &AtomicU64, value: f64) {
    let mut cur = cell.load(Ordering::Relaxed);
    loop {
        let next = (f64::from_bits(cur) + value).to_bits();
        match cell.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return,
            Err(seen) => cur = seen,
        }
    }
}

pub fn pool_scatter_add_with(
    points: &[FrustumPoints],
    spec: &BevGridSpec,
    workers: usize,
    strategy: ScatterStrategy,
) -> Result<PooledBev> {
    let channels = check_inputs(points, spec)?;
    if workers == 0 {
        return Err(Error::config("pooling", "workers must be at least 1"));
    }
    let total: usize = points.iter().map(|p| p.len()).sum();
    let ranges = partition(total, workers);
    let len = spec.num_cells() * channels;
    let dropped = AtomicUsize::new(0);

    let acc = match strategy {
        ScatterStrategy::Atomic => {
            let shared: Vec<AtomicU64> = (0..len).map(|_| AtomicU64::new(0)).collect();
            let work = |(start, end): (usize, usize)| {
                let mut local_dropped = 0;
                for_each_in_range(points, start, end, |p, feat| match spec.linear_id(p) {
                    Some(id) => {
                        let base = id as usize * channels;
                        for (cell, &f) in shared[base..base + channels].iter().zip(feat) {
                            atomic_add_f64(cell, f as f64);
                        }
                    }
                    None => local_dropped += 1,
                });
                dropped.fetch_add(local_dropped, Ordering::Relaxed);
            };
            if workers == 1 {
                work(ranges[0]);
            } else {
                std::thread::scope(|scope| {
                    for &range in &ranges {
                        scope.spawn(move || work(range));
                    }
                });
            }
            shared
                .into_iter()
                .map(|a| f64::from_bits(a.into_inner()))
                .collect::<Vec<_>>()
        }
        ScatterStrategy::PartialGrids => {
            let work = |(start, end): (usize, usize)| {
                let mut grid = vec![0.0f64; len];
                let mut local_dropped = 0;
                for_each_in_range(points, start, end, |p, feat| match spec.linear_id(p) {
                    Some(id) => {
                        let base = id as usize * channels;
                        add_row(&mut grid[base..base + channels], feat);
                    }
                    None => local_dropped += 1,
                });
                dropped.fetch_add(local_dropped, Ordering::Relaxed);
                grid
            };
            if workers == 1 {
                work(ranges[0])
            } else {
                let partials: Vec<Vec<f64>> = std::thread::scope(|scope| {
                    let handles: Vec<_> = ranges
                        .iter()
                        .map(|&range| scope.spawn(move || work(range)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("pooling worker panicked"))
                        .collect()
                });
                let mut iter = partials.into_iter();
                let mut merged = iter.next().unwrap_or_else(|| vec![0.0; len]);
                for part in iter {
                    for (m, p) in merged.iter_mut().zip(&part) {
                        *m += p;
                    }
                }
                merged
            }
        }
    };

    Ok(PooledBev {
        grid: into_bev(&acc, channels, spec),
        engine: Engine::ScatterAdd { workers, strategy }.tag(),
        dropped: dropped.into_inner(),
    })
}

/// Worst per-cell disagreement between two grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDiff {
    /// Largest `|a - b| / max(|b|, abs_floor / rel_tol)`; at most 1 when within tolerance.
    pub worst_ratio: f64,
    pub max_abs: f64,
    pub max_rel: f64,
    pub worst_index: usize,
    pub within: bool,
}

/// Compares `candidate` against `reference` cell by cell: a cell passes when
/// `|a - b| <= max(rel_tol * |b|, abs_tol)`.
pub fn compare_grids(candidate: &[f64], reference: &[f64], rel_tol: f64, abs_tol: f64) -> GridDiff {
    let mut diff = GridDiff {
        worst_ratio: 0.0,
        max_abs: 0.0,
        max_rel: 0.0,
        worst_index: 0,
        within: candidate.len() == reference.len(),
    };
    for (i, (&a, &b)) in candidate.iter().zip(reference).enumerate() {
        let err = (a - b).abs();
        let allowed = (rel_tol * b.abs()).max(abs_tol);
        let ratio = if err.is_nan() { f64::INFINITY } else { err / allowed };
        diff.max_abs = diff.max_abs.max(err);
        if b != 0.0 {
            diff.max_rel = diff.max_rel.max(err / b.abs());
        }
        if ratio > diff.worst_ratio {
            diff.worst_ratio = ratio;
            diff.worst_index = i;
        }
    }
    diff.within &= diff.worst_ratio <= 1.0;
    diff
}
