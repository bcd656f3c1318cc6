//! End-to-end run: depth supervision, camera-aware depth, lift, multi-frame
//! pooling, and the artifacts written for each run.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::depth_gt::{make_depth_gt, DepthBinSpec, DEFAULT_STRIDE};
use crate::depth_head::{
    bce_depth_loss, predict_depth, se_gate, CameraParamVector, DepthHeadParams, DEFAULT_HIDDEN,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraView, EgoPose, Vec3};
use crate::io;
use crate::lift::{lift_view, WeightSource};
use crate::metrics::{compute_metrics, extract_depth_scalar, DepthEvalPairs, DepthMetrics, DepthReduction};
use crate::pooling::{BevGridSpec, EngineKind};
use crate::scene::{generate_scene, SceneOptions, ScenePreset, Surface};
use crate::temporal::{fuse_frames, Frame, DEFAULT_FRAMES};
use crate::tensor::{FeatureGrid, GridKind};

pub const BEV_FILE: &str = "bev.bevf";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything a run needs. Paths are optional; missing inputs come from the
/// synthetic scene described by `scene`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Camera rig JSON; defaults to the synthetic rig.
    pub rig: Option<PathBuf>,
    /// One point cloud per frame (oldest first), each in that frame's ego frame.
    pub clouds: Vec<PathBuf>,
    /// Ego pose JSON, one pose per frame.
    pub poses: Option<PathBuf>,
    pub scene: SceneOptions,
    pub bins: DepthBinSpec,
    pub grid: BevGridSpec,
    pub stride: usize,
    pub channels: usize,
    pub hidden: usize,
    /// Depth-head parameter file; defaults to seeded random parameters.
    pub head_params: Option<PathBuf>,
    pub head_seed: u64,
    pub feature_seed: u64,
    pub frames: usize,
    pub engine: EngineKind,
    pub workers: usize,
    /// Use the ground-truth one-hot depth in place of the prediction.
    pub oracle_depth: bool,
    pub depth_reduction: DepthReduction,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rig: None,
            clouds: Vec::new(),
            poses: None,
            scene: SceneOptions::default(),
            bins: DepthBinSpec::default(),
            grid: BevGridSpec::default(),
            stride: DEFAULT_STRIDE,
            channels: 16,
            hidden: DEFAULT_HIDDEN,
            head_params: None,
            head_seed: 1,
            feature_seed: 2,
            frames: DEFAULT_FRAMES,
            engine: EngineKind::Sequential,
            workers: 1,
            oracle_depth: false,
            depth_reduction: DepthReduction::Expectation,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    /// Reads a config file, or the `config` section of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io("harness_cli", path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::parse("harness_cli", path, e.to_string()))?;
        let value = match value.get("config") {
            Some(inner) if value.get("config_hash").is_some() => inner.clone(),
            _ => value,
        };
        let mut cfg: PipelineConfig =
            serde_json::from_value(value).map_err(|e| Error::parse("harness_cli", path, e.to_string()))?;
        // relative input paths resolve against the config file's directory
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            cfg.rig.as_mut().map(fix);
            cfg.poses.as_mut().map(fix);
            cfg.head_params.as_mut().map(fix);
            cfg.clouds.iter_mut().for_each(fix);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.bins.validate()?;
        self.grid.validate()?;
        let cfg = |m: &str| Error::config("harness_cli", m.to_string());
        if self.stride == 0 || self.channels == 0 || self.hidden == 0 {
            return Err(cfg("stride, channels and hidden must be positive"));
        }
        if self.frames == 0 || self.workers == 0 {
            return Err(cfg("frames and workers must be at least 1"));
        }
        if !self.clouds.is_empty() && self.clouds.len() != self.frames {
            return Err(cfg("need exactly one point cloud per frame"));
        }
        for p in self.rig.iter().chain(&self.poses).chain(&self.head_params).chain(&self.clouds) {
            if !p.exists() {
                return Err(Error::config(
                    "harness_cli",
                    format!("input {} does not exist", p.display()),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Loss bookkeeping for one view of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub frame: usize,
    pub view_id: i32,
    pub depth_loss: f64,
    pub supervised_pixels: usize,
    pub no_supervision: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub engine: String,
    pub depth_reduction: DepthReduction,
    pub oracle_depth: bool,
    pub views: Vec<ViewReport>,
    pub metrics: Option<DepthMetrics>,
    pub bev_shape: [usize; 3],
    pub bev_sha256: String,
    pub metrics_sha256: String,
}

/// In-memory result of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub bev: FeatureGrid,
    pub metrics: Option<DepthMetrics>,
    pub views: Vec<ViewReport>,
    /// Lifted points per frame, in each frame's own ego frame.
    pub frames: Vec<Frame>,
    pub surface: Option<Surface>,
    pub bev_path: PathBuf,
    pub metrics_path: PathBuf,
    pub manifest_path: PathBuf,
}

struct Inputs {
    rig: Vec<CameraView>,
    poses: Vec<EgoPose>,
    clouds: Vec<Vec<Vec3>>,
    surface: Option<Surface>,
}

fn gather_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let opts = SceneOptions {
        frames: cfg.frames,
        ..cfg.scene
    };
    let needs_scene = cfg.rig.is_none() || cfg.clouds.is_empty() || cfg.poses.is_none();
    let scene = if needs_scene { Some(generate_scene(&opts)?) } else { None };

    let rig = match &cfg.rig {
        Some(p) => io::load_rig(p)?,
        None => scene.as_ref().unwrap().rig.clone(),
    };
    let poses = match &cfg.poses {
        Some(p) => io::load_poses(p)?,
        None => scene.as_ref().unwrap().poses.clone(),
    };
    if poses.len() != cfg.frames {
        return Err(Error::config(
            "harness_cli",
            format!("{} poses for {} frames", poses.len(), cfg.frames),
        ));
    }
    let (clouds, surface) = if cfg.clouds.is_empty() {
        let scene = scene.as_ref().unwrap();
        let clouds = (0..cfg.frames).map(|f| scene.cloud_in_frame(f)).collect();
        (clouds, Some(scene.surface.clone()))
    } else {
        let clouds = cfg.clouds.iter().map(|p| io::load_point_cloud(p)).collect::<Result<_>>()?;
        (clouds, None)
    };
    Ok(Inputs {
        rig,
        poses,
        clouds,
        surface,
    })
}

fn head_params(cfg: &PipelineConfig) -> Result<DepthHeadParams> {
    let params = match &cfg.head_params {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Error::io("depth_head", path, e))?;
            DepthHeadParams::read_from(std::io::BufReader::new(file))?
        }
        None => DepthHeadParams::random(cfg.head_seed, cfg.hidden, cfg.channels, cfg.bins.num_bins),
    };
    if params.channels() != cfg.channels || params.bins() != cfg.bins.num_bins {
        return Err(Error::config(
            "depth_head",
            format!(
                "parameters are for {} channels / {} bins, config asks {} / {}",
                params.channels(),
                params.bins(),
                cfg.channels,
                cfg.bins.num_bins
            ),
        ));
    }
    Ok(params)
}

/// Seeded stand-in for backbone image features, values in `[0, 1)`.
pub fn synthetic_context(seed: u64, frame: usize, view: usize, channels: usize, h: usize, w: usize) -> FeatureGrid {
    let stream = seed ^ ((frame as u64) << 32) ^ (view as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let data = (0..channels * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    FeatureGrid::from_vec(GridKind::ImageFeature, channels, h, w, data).expect("positive dims")
}

/// Runs the whole pipeline and writes the BEV dump, metrics CSV and manifest
/// into `cfg.out_dir`. On failure any artifact already written is removed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io("harness_cli", &cfg.out_dir, e))?;
    let paths = [
        cfg.out_dir.join(BEV_FILE),
        cfg.out_dir.join(METRICS_FILE),
        cfg.out_dir.join(MANIFEST_FILE),
    ];
    let result = run_inner(cfg, &paths);
    if result.is_err() {
        for p in &paths {
            let _ = fs::remove_file(p);
        }
    }
    result
}

fn run_inner(cfg: &PipelineConfig, paths: &[PathBuf; 3]) -> Result<RunOutput> {
    let inputs = gather_inputs(cfg)?;
    let params = head_params(cfg)?;
    let engine = cfg.engine.with_workers(cfg.workers);

    let mut frames = Vec::with_capacity(cfg.frames);
    let mut views = Vec::new();
    let (mut pred_depths, mut gt_depths) = (Vec::new(), Vec::new());
    for (f, cloud) in inputs.clouds.iter().enumerate() {
        let mut lifted = Vec::with_capacity(inputs.rig.len());
        for (v, cam) in inputs.rig.iter().enumerate() {
            let gt = make_depth_gt(cloud, cam, cfg.stride, &cfg.bins)?;
            let (_, h, w) = gt.shape();
            let context = synthetic_context(cfg.feature_seed, f, v, cfg.channels, h, w);
            let gated = se_gate(&context, &CameraParamVector::from_camera(cam), &params)?;
            let pred = predict_depth(&gated, &params)?;
            let loss = bce_depth_loss(&pred, &gt)?;
            views.push(ViewReport {
                frame: f,
                view_id: cam.view_id(),
                depth_loss: loss.loss,
                supervised_pixels: loss.supervised_pixels,
                no_supervision: loss.no_supervision,
            });

            let depth = if cfg.oracle_depth { &gt } else { &pred };
            let gt_scalar = extract_depth_scalar(&gt, &cfg.bins, cfg.depth_reduction);
            let pred_scalar = extract_depth_scalar(depth, &cfg.bins, cfg.depth_reduction);
            let plane = h * w;
            for px in 0..plane {
                let supervised = (0..cfg.bins.num_bins).any(|j| gt.data()[j * plane + px] != 0.0);
                if supervised {
                    pred_depths.push(pred_scalar[px]);
                    gt_depths.push(gt_scalar[px]);
                }
            }

            let mut points = lift_view(&gated, depth, cam, &cfg.bins, cfg.stride)?;
            if cfg.oracle_depth {
                points.source = WeightSource::GroundTruth;
            }
            lifted.push(points);
        }
        frames.push(Frame {
            views: lifted,
            pose: inputs.poses[f],
        });
    }

    let bev = fuse_frames(&frames, &cfg.grid, &engine)?;
    let metrics = if pred_depths.is_empty() {
        log::warn!("no supervised cells; depth metrics not computed");
        None
    } else {
        Some(compute_metrics(&DepthEvalPairs::new(pred_depths, gt_depths)?))
    };

    let [bev_path, metrics_path, manifest_path] = paths.clone();
    let bev_bytes = io::encode_bev(&bev);
    fs::write(&bev_path, &bev_bytes).map_err(|e| Error::io("harness_cli", &bev_path, e))?;
    let metrics_row = metrics
        .map(|m| m.csv_row())
        .unwrap_or_else(|| "nan,nan,nan,nan,nan,0".to_string());
    let metrics_text = format!("{}\n{}\n", DepthMetrics::CSV_HEADER, metrics_row);
    fs::write(&metrics_path, &metrics_text).map_err(|e| Error::io("harness_cli", &metrics_path, e))?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        engine: engine.tag(),
        depth_reduction: cfg.depth_reduction,
        oracle_depth: cfg.oracle_depth,
        views: views.clone(),
        metrics,
        bev_shape: [bev.channels(), bev.height(), bev.width()],
        bev_sha256: hex::encode(Sha256::digest(&bev_bytes)),
        metrics_sha256: hex::encode(Sha256::digest(metrics_text.as_bytes())),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, manifest_json).map_err(|e| Error::io("harness_cli", &manifest_path, e))?;

    Ok(RunOutput {
        bev,
        metrics,
        views,
        frames,
        surface: inputs.surface,
        bev_path,
        metrics_path,
        manifest_path,
    })
}

/// Writes a synthetic scene's rig, poses and per-frame clouds plus a config
/// that points at them. Returns the config path.
pub fn write_scene(opts: &SceneOptions, dir: &Path) -> Result<PathBuf> {
    let scene = generate_scene(opts)?;
    fs::create_dir_all(dir).map_err(|e| Error::io("harness_cli", dir, e))?;
    io::save_rig(&dir.join("rig.json"), &scene.rig)?;
    io::save_poses(&dir.join("poses.json"), &scene.poses)?;
    let mut clouds = Vec::new();
    for f in 0..opts.frames {
        let name = format!("cloud_{f}.bin");
        io::save_point_cloud(&dir.join(&name), &scene.cloud_in_frame(f))?;
        clouds.push(PathBuf::from(name));
    }
    let cfg = PipelineConfig {
        rig: Some("rig.json".into()),
        poses: Some("poses.json".into()),
        clouds,
        scene: *opts,
        frames: opts.frames,
        out_dir: dir.join("run"),
        ..Default::default()
    };
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).expect("config serializes"))
        .map_err(|e| Error::io("harness_cli", &path, e))?;
    Ok(path)
}

/// Default config for quick runs on a synthetic preset.
pub fn preset_config(preset: ScenePreset, seed: u64, out_dir: PathBuf) -> PipelineConfig {
    PipelineConfig {
        scene: SceneOptions {
            seed,
            preset,
            ..Default::default()
        },
        out_dir,
        ..Default::default()
    }
}
