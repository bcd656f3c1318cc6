//! Pooling benchmark: one seeded instance, every engine checked against the
//! sequential reference, then timed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::lift::{FrustumPoints, WeightSource};
use crate::pooling::{
    compare_grids, pool_sequential, BevGridSpec, Engine, EngineKind, ScatterStrategy, ENGINE_ABS_TOL,
    ENGINE_REL_TOL, SINGLE_WORKER_REL_TOL,
};

pub const BENCH_CSV_HEADER: &str = "engine,points,channels,rows,cols,workers,median_ns,throughput_pps";
pub const SUMMARY_CSV_HEADER: &str =
    "points,channels,rows,cols,baseline,candidate,candidate_workers,speedup,machine";

/// Size and seed of a synthetic pooling workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchInstance {
    pub points: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

impl BenchInstance {
    /// Grid with 0.8 m cells centred on the origin, z band `[-5, 3)`.
    pub fn grid(&self) -> BevGridSpec {
        let cell = 0.8;
        let (hx, hy) = (self.cols as f64 * cell / 2.0, self.rows as f64 * cell / 2.0);
        BevGridSpec {
            x_min: -hx,
            x_max: hx,
            y_min: -hy,
            y_max: hy,
            cell_size: cell,
            z_min: -5.0,
            z_max: 3.0,
        }
    }

    /// Points spread over the grid plus a 5% margin (so some are dropped),
    /// features uniform in `[-1, 1)`, split into six views.
    pub fn generate(&self) -> Vec<FrustumPoints> {
        let spec = self.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (mx, my) = (0.05 * (spec.x_max - spec.x_min), 0.05 * (spec.y_max - spec.y_min));
        let views = 6;
        (0..views)
            .map(|v| {
                let n = self.points / views + usize::from(v < self.points % views);
                let coords: Vec<Vec3> = (0..n)
                    .map(|_| {
                        Vec3::new(
                            rng.gen_range(spec.x_min - mx..spec.x_max + mx),
                            rng.gen_range(spec.y_min - my..spec.y_max + my),
                            rng.gen_range(-5.5..3.5),
                        )
                    })
                    .collect();
                let features = (0..n * self.channels).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                FrustumPoints::new(self.channels, coords, features, WeightSource::Synthetic)
                    .expect("generated points are finite")
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub engine: String,
    pub points: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub workers: usize,
    pub median_ns: u128,
    pub throughput_pps: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.1}",
            self.engine,
            self.points,
            self.channels,
            self.rows,
            self.cols,
            self.workers,
            self.median_ns,
            self.throughput_pps
        )
    }
}

/// Throughput ratio between a candidate engine and a baseline at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub instance: BenchInstance,
    pub baseline: String,
    pub candidate: String,
    pub candidate_workers: usize,
    pub speedup: f64,
}

impl Speedup {
    pub fn csv(&self, machine: &str) -> String {
        let i = &self.instance;
        format!(
            "{},{},{},{},{},{},{},{:.3},\"{}\"",
            i.points,
            i.channels,
            i.rows,
            i.cols,
            self.baseline,
            self.candidate,
            self.candidate_workers,
            self.speedup,
            machine.replace('"', "'")
        )
    }
}

/// Times `engines` on one generated instance and returns one row per engine.
///
/// Every engine is first run once and compared with the sequential reference;
/// that run doubles as warm-up. A disagreement aborts the benchmark.
pub fn benchmark_pooling(instance: &BenchInstance, engines: &[Engine], repeats: usize) -> Result<Vec<BenchRow>> {
    if repeats < 3 {
        return Err(Error::config("pooling", "benchmark needs at least 3 repeats"));
    }
    let spec = instance.grid();
    let points = instance.generate();
    let reference = pool_sequential(&points, &spec)?;

    let mut rows = Vec::with_capacity(engines.len());
    for engine in engines {
        let check = engine.pool(&points, &spec)?;
        let rel = match engine {
            Engine::ScatterAdd { workers: 1, .. } => SINGLE_WORKER_REL_TOL,
            _ => ENGINE_REL_TOL,
        };
        let diff = compare_grids(check.grid.data(), reference.grid.data(), rel, ENGINE_ABS_TOL);
        if !diff.within || check.dropped != reference.dropped {
            return Err(Error::EngineMismatch {
                engine: engine.tag(),
                message: format!(
                    "max abs {:e}, max rel {:e} at flat index {}, dropped {} vs {}",
                    diff.max_abs, diff.max_rel, diff.worst_index, check.dropped, reference.dropped
                ),
            });
        }
        drop(check);

        let mut times: Vec<u128> = (0..repeats)
            .map(|_| {
                let start = Instant::now();
                let out = engine.pool(&points, &spec);
                let elapsed = start.elapsed().as_nanos();
                std::hint::black_box(out).ok();
                elapsed
            })
            .collect();
        times.sort_unstable();
        let median_ns = times[times.len() / 2].max(1);
        rows.push(BenchRow {
            engine: engine.kind().name().to_string(),
            points: instance.points,
            channels: instance.channels,
            rows: instance.rows,
            cols: instance.cols,
            workers: engine.workers(),
            median_ns,
            throughput_pps: instance.points as f64 / (median_ns as f64 * 1e-9),
        });
    }
    Ok(rows)
}

/// Result of a sweep: all timing rows plus scatter-add / prefix-sum ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub speedups: Vec<Speedup>,
    pub machine: String,
}

/// Benchmarks every `(engine, size, workers)` combination. Sequential and
/// prefix-sum ignore `workers` and run once per size.
pub fn run_benchmark(
    sizes: &[BenchInstance],
    kinds: &[EngineKind],
    workers: &[usize],
    strategy: ScatterStrategy,
    repeats: usize,
) -> Result<BenchReport> {
    if sizes.is_empty() || kinds.is_empty() {
        return Err(Error::config("pooling", "benchmark sweep is empty"));
    }
    let workers: Vec<usize> = if workers.is_empty() { vec![1] } else { workers.to_vec() };
    let mut report = BenchReport {
        rows: Vec::new(),
        speedups: Vec::new(),
        machine: machine_description(),
    };
    for inst in sizes {
        let mut engines = Vec::new();
        for &kind in kinds {
            match kind {
                EngineKind::ScatterAdd => engines.extend(
                    workers.iter().map(|&w| Engine::ScatterAdd { workers: w, strategy }),
                ),
                other => engines.push(other.with_workers(1)),
            }
        }
        let rows = benchmark_pooling(inst, &engines, repeats)?;
        if let Some(base) = rows.iter().find(|r| r.engine == EngineKind::PrefixSum.name()) {
            for r in rows.iter().filter(|r| r.engine == EngineKind::ScatterAdd.name()) {
                report.speedups.push(Speedup {
                    instance: *inst,
                    baseline: base.engine.clone(),
                    candidate: r.engine.clone(),
                    candidate_workers: r.workers,
                    speedup: r.throughput_pps / base.throughput_pps,
                });
            }
        }
        report.rows.extend(rows);
    }
    Ok(report)
}

/// OS, architecture, core count and CPU model when available.
pub fn machine_description() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".to_string());
    format!("{} {} {cores} cores {cpu}", std::env::consts::OS, std::env::consts::ARCH)
}

pub fn available_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
