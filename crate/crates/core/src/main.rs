use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use bevlift::bench::{self, BenchInstance, BENCH_CSV_HEADER, SUMMARY_CSV_HEADER};
use bevlift::io;
use bevlift::metrics::{compute_metrics, DepthEvalPairs, DepthMetrics};
use bevlift::pipeline::{run_pipeline, write_scene, PipelineConfig};
use bevlift::pooling::{EngineKind, ScatterStrategy};
use bevlift::scene::{ScenePreset, SceneOptions};

#[derive(Parser)]
#[command(name = "bevlift", version, about = "Depth-supervised camera-to-BEV lift and voxel pooling harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene (rig, poses, per-frame clouds) and a config for it.
    GenScene {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "wall")]
        preset: ScenePreset,
        #[arg(long, default_value_t = 1)]
        views: usize,
        #[arg(long, default_value_t = 2)]
        frames: usize,
        /// Point count for the random preset.
        #[arg(long, default_value_t = 20_000)]
        points: usize,
        #[arg(long, default_value = "scene")]
        out: PathBuf,
    },
    /// Run the pipeline and write the BEV dump, metrics CSV and run manifest.
    Run {
        /// Pipeline config or a previous run manifest.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Synthetic scene seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preset: Option<ScenePreset>,
        #[arg(long)]
        engine: Option<EngineKind>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        views: Option<usize>,
        /// Lift with the ground-truth depth instead of the prediction.
        #[arg(long)]
        oracle_depth: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark the pooling engines over a size sweep.
    Bench {
        /// Point counts to sweep.
        #[arg(long, value_delimiter = ',', default_value = "100000")]
        points: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        channels: usize,
        #[arg(long, default_value_t = 128)]
        rows: usize,
        #[arg(long, default_value_t = 128)]
        cols: usize,
        /// Engines to run; defaults to all three.
        #[arg(long = "engine")]
        engines: Vec<EngineKind>,
        /// Scatter-add worker counts; 0 means all available cores.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        workers: Vec<usize>,
        /// How scatter-add workers combine results: atomic or partial_grids.
        #[arg(long, default_value = "partial_grids")]
        scatter_strategy: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
    },
    /// Depth metrics for a CSV of `pred,gt` pairs.
    Metrics {
        #[arg(long)]
        pairs: PathBuf,
        /// Write the metrics row here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(match err.downcast_ref::<bevlift::Error>() {
                Some(bevlift::Error::Usage { .. }) => 2,
                Some(bevlift::Error::EngineMismatch { .. }) => 3,
                _ => 1,
            })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenScene { seed, preset, views, frames, points, out } => {
            let opts = SceneOptions { seed, preset, views, frames, points, ..Default::default() };
            let cfg = write_scene(&opts, &out)?;
            println!("{}", cfg.display());
        }
        Command::Run { config, seed, preset, engine, workers, frames, views, oracle_depth, out } => {
            let mut cfg = match &config {
                Some(path) => PipelineConfig::load(path)?,
                None => PipelineConfig::default(),
            };
            if let Some(s) = seed {
                cfg.scene.seed = s;
            }
            if let Some(p) = preset {
                cfg.scene.preset = p;
            }
            if let Some(e) = engine {
                cfg.engine = e;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(k) = frames {
                cfg.frames = k;
            }
            if let Some(v) = views {
                cfg.scene.views = v;
            }
            cfg.oracle_depth |= oracle_depth;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let result = run_pipeline(&cfg)?;
            for v in &result.views {
                log::info!(
                    "frame {} view {}: depth loss {:.6} over {} supervised cells",
                    v.frame, v.view_id, v.depth_loss, v.supervised_pixels
                );
            }
            if let Some(m) = result.metrics {
                println!("{}\n{}", DepthMetrics::CSV_HEADER, m.csv_row());
            }
            println!("{}", result.manifest_path.display());
        }
        Command::Bench { points, channels, rows, cols, engines, workers, scatter_strategy, repeats, seed, out } => {
            let strategy = match scatter_strategy.as_str() {
                "atomic" => ScatterStrategy::Atomic,
                "partial_grids" => ScatterStrategy::PartialGrids,
                other => bail!("unknown scatter strategy '{other}' (atomic|partial_grids)"),
            };
            let engines = if engines.is_empty() { EngineKind::ALL.to_vec() } else { engines };
            let workers: Vec<usize> = workers
                .into_iter()
                .map(|w| if w == 0 { bench::available_workers() } else { w })
                .collect();
            let sizes: Vec<_> = points
                .iter()
                .map(|&p| BenchInstance { points: p, channels, rows, cols, seed })
                .collect();
            let report = bench::run_benchmark(&sizes, &engines, &workers, strategy, repeats)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            io::write_csv(&out.join("bench.csv"), BENCH_CSV_HEADER, report.rows.iter().map(|r| r.csv()))?;
            io::write_csv(
                &out.join("bench_summary.csv"),
                SUMMARY_CSV_HEADER,
                report.speedups.iter().map(|s| s.csv(&report.machine)),
            )?;
            println!("{BENCH_CSV_HEADER}");
            for r in &report.rows {
                println!("{}", r.csv());
            }
            for s in &report.speedups {
                println!(
                    "speedup {} (w={}) over {} at {} points: {:.2}x",
                    s.candidate, s.candidate_workers, s.baseline, s.instance.points, s.speedup
                );
            }
            println!("machine: {}", report.machine);
        }
        Command::Metrics { pairs, out } => {
            let text = fs::read_to_string(&pairs).with_context(|| format!("reading {}", pairs.display()))?;
            let (mut pred, mut gt) = (Vec::new(), Vec::new());
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || (n == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
                    continue;
                }
                let mut it = line.split(',').map(|f| f.trim().parse::<f64>());
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(p)), Some(Ok(g)), None) => {
                        pred.push(p);
                        gt.push(g);
                    }
                    _ => bail!("{}: line {}: expected pred,gt", pairs.display(), n + 1),
                }
            }
            let m = compute_metrics(&DepthEvalPairs::new(pred, gt)?);
            let text = format!("{}\n{}\n", DepthMetrics::CSV_HEADER, m.csv_row());
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
