//! Deterministic synthetic scenes standing in for recorded drives.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, EgoPose, Mat3, RigidTransform, Vec3};
use crate::pooling::BevGridSpec;

pub const IMAGE_WIDTH: u32 = 704;
pub const IMAGE_HEIGHT: u32 = 256;
pub const FOCAL: f64 = 500.0;
pub const CAMERA_HEIGHT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenePreset {
    /// Fronto-parallel plane in front of camera 0.
    Wall,
    /// Surfaces of axis-aligned cuboids scattered around the ego vehicle.
    Boxes,
    /// Uniform points in the default BEV volume.
    Random,
}

impl FromStr for ScenePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wall" => Ok(ScenePreset::Wall),
            "boxes" => Ok(ScenePreset::Boxes),
            "random" => Ok(ScenePreset::Random),
            other => Err(Error::Usage {
                module: "harness_cli",
                message: format!("unknown scene preset '{other}' (wall|boxes|random)"),
            }),
        }
    }
}

impl fmt::Display for ScenePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenePreset::Wall => "wall",
            ScenePreset::Boxes => "boxes",
            ScenePreset::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneOptions {
    pub seed: u64,
    pub preset: ScenePreset,
    /// Cameras evenly spaced in yaw, camera 0 facing ego +x.
    pub views: usize,
    pub frames: usize,
    /// Point count for the random preset.
    pub points: usize,
    /// Depth of the wall in front of camera 0, meters.
    pub wall_depth: f64,
    /// Forward ego motion between consecutive frames, meters.
    pub ego_step: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            preset: ScenePreset::Wall,
            views: 1,
            frames: 1,
            points: 20_000,
            wall_depth: 20.0,
            ego_step: 1.6,
        }
    }
}

/// Half-open axis-aligned box in global coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    pub min: Vec3,
    pub max: Vec3,
}

impl Cuboid {
    /// Distance from `p` to the box surface.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        let outside = Vec3::new(
            (self.min.x - p.x).max(p.x - self.max.x).max(0.0),
            (self.min.y - p.y).max(p.y - self.max.y).max(0.0),
            (self.min.z - p.z).max(p.z - self.max.z).max(0.0),
        );
        if outside.norm() > 0.0 {
            return outside.norm();
        }
        let inside = [
            p.x - self.min.x,
            self.max.x - p.x,
            p.y - self.min.y,
            self.max.y - p.y,
            p.z - self.min.z,
            self.max.z - p.z,
        ];
        inside.into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Ground-truth geometry the cloud was sampled from.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// Plane `x = depth` (global frame).
    Wall { depth: f64 },
    Boxes(Vec<Cuboid>),
    Unstructured,
}

impl Surface {
    /// Distance from a global-frame point to the surface, when one exists.
    pub fn distance(&self, p: &Vec3) -> Option<f64> {
        match self {
            Surface::Wall { depth } => Some((p.x - depth).abs()),
            Surface::Boxes(boxes) => boxes.iter().map(|b| b.surface_distance(p)).reduce(f64::min),
            Surface::Unstructured => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// Static world points, global frame.
    pub cloud: Vec<Vec3>,
    pub rig: Vec<CameraView>,
    /// Ego-to-global pose per frame, oldest first; the last is the identity.
    pub poses: Vec<EgoPose>,
    pub surface: Surface,
}

impl Scene {
    /// The cloud expressed in the ego frame of `frame`.
    pub fn cloud_in_frame(&self, frame: usize) -> Vec<Vec3> {
        let to_ego = self.poses[frame].ego_to_global.inverse();
        self.cloud.iter().map(|p| to_ego.apply(p)).collect()
    }
}

pub fn default_intrinsics() -> Mat3 {
    Mat3::new(
        FOCAL,
        0.0,
        IMAGE_WIDTH as f64 / 2.0,
        0.0,
        FOCAL,
        IMAGE_HEIGHT as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    )
}

/// `views` cameras at the ego origin, `CAMERA_HEIGHT` up, evenly spaced in yaw.
pub fn default_rig(views: usize) -> Result<Vec<CameraView>> {
    (0..views)
        .map(|i| {
            let yaw = std::f64::consts::TAU * i as f64 / views as f64;
            CameraView::looking_at_yaw(
                default_intrinsics(),
                yaw,
                Vec3::new(0.0, 0.0, CAMERA_HEIGHT),
                IMAGE_WIDTH,
                IMAGE_HEIGHT,
                i as i32,
            )
        })
        .collect()
}

pub fn generate_scene(opts: &SceneOptions) -> Result<Scene> {
    if opts.views == 0 || opts.frames == 0 {
        return Err(Error::Usage {
            module: "harness_cli",
            message: "scene needs at least one view and one frame".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let rig = default_rig(opts.views)?;
    let k = opts.frames;
    let poses = (0..k)
        .map(|i| EgoPose {
            ego_to_global: RigidTransform::from_yaw(
                0.0,
                Vec3::new(-opts.ego_step * (k - 1 - i) as f64, 0.0, 0.0),
            ),
            timestamp_us: (i as i64) * 500_000,
        })
        .collect();

    let (cloud, surface) = match opts.preset {
        ScenePreset::Wall => {
            let depth = opts.wall_depth;
            // cover the front camera's field of view with margin
            let half_w = depth * (IMAGE_WIDTH as f64 / 2.0) / FOCAL * 1.15;
            let half_h = depth * (IMAGE_HEIGHT as f64 / 2.0) / FOCAL * 1.15;
            let spacing = 0.1 * depth / 20.0;
            let (ny, nz) = ((2.0 * half_w / spacing) as usize, (2.0 * half_h / spacing) as usize);
            let mut cloud = Vec::with_capacity(ny * nz);
            for iy in 0..ny {
                for iz in 0..nz {
                    let y = -half_w + (iy as f64 + rng.gen_range(0.0..1.0)) * spacing;
                    let z = CAMERA_HEIGHT - half_h + (iz as f64 + rng.gen_range(0.0..1.0)) * spacing;
                    cloud.push(Vec3::new(depth, y, z));
                }
            }
            (cloud, Surface::Wall { depth })
        }
        ScenePreset::Boxes => {
            let mut boxes = Vec::new();
            let mut cloud = Vec::new();
            for _ in 0..12 {
                let r = rng.gen_range(6.0..40.0);
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let size = Vec3::new(rng.gen_range(1.5..5.0), rng.gen_range(1.5..3.0), rng.gen_range(1.2..3.0));
                let min = Vec3::new(r * a.cos(), r * a.sin(), 0.0);
                let b = Cuboid { min, max: min + size };
                sample_cuboid(&b, 0.15, &mut rng, &mut cloud);
                boxes.push(b);
            }
            (cloud, Surface::Boxes(boxes))
        }
        ScenePreset::Random => {
            let g = BevGridSpec::default();
            let cloud = (0..opts.points)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(g.x_min..g.x_max),
                        rng.gen_range(g.y_min..g.y_max),
                        rng.gen_range(g.z_min..g.z_max),
                    )
                })
                .collect();
            (cloud, Surface::Unstructured)
        }
    };
    Ok(Scene {
        cloud,
        rig,
        poses,
        surface,
    })
}

fn sample_cuboid(b: &Cuboid, spacing: f64, rng: &mut impl Rng, out: &mut Vec<Vec3>) {
    let size = b.max - b.min;
    // each face: fixed axis, two sweep axes
    for axis in 0..3 {
        let (u_ax, v_ax) = ((axis + 1) % 3, (axis + 2) % 3);
        let nu = (size[u_ax] / spacing).ceil() as usize;
        let nv = (size[v_ax] / spacing).ceil() as usize;
        for fixed in [b.min[axis], b.max[axis]] {
            for i in 0..nu {
                for j in 0..nv {
                    let mut p = Vec3::zeros();
                    p[axis] = fixed;
                    p[u_ax] = b.min[u_ax] + ((i as f64 + rng.gen_range(0.0..1.0)) * spacing).min(size[u_ax]);
                    p[v_ax] = b.min[v_ax] + ((j as f64 + rng.gen_range(0.0..1.0)) * spacing).min(size[v_ax]);
                    out.push(p);
                }
            }
        }
    }
}
