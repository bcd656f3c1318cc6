//! File formats: camera rigs and ego poses (JSON), point clouds (CSV or raw
//! `f32` triplets), BEV feature dumps, and CSV reports.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, EgoPose, Mat3, Vec3};
use crate::tensor::{FeatureGrid, GridKind};

pub const BEV_MAGIC: &[u8; 4] = b"BEVF";

/// One camera as it appears in a rig file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub view_id: i32,
    #[serde(rename = "K")]
    pub intrinsics: [f64; 9],
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    pub t: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl CameraRecord {
    pub fn from_camera(cam: &CameraView) -> Self {
        Self {
            view_id: cam.view_id(),
            intrinsics: row_major(cam.intrinsics()),
            rotation: row_major(cam.rotation()),
            t: [cam.translation().x, cam.translation().y, cam.translation().z],
            width: cam.image_width(),
            height: cam.image_height(),
        }
    }

    pub fn to_camera(&self) -> Result<CameraView> {
        CameraView::new(
            Mat3::from_row_slice(&self.intrinsics),
            Mat3::from_row_slice(&self.rotation),
            Vec3::from(self.t),
            self.width,
            self.height,
            self.view_id,
        )
    }
}

/// One ego-to-global pose as it appears in a pose file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    pub t: [f64; 3],
    pub timestamp: i64,
}

impl PoseRecord {
    pub fn from_pose(pose: &EgoPose) -> Self {
        let t = pose.ego_to_global.translation;
        Self {
            rotation: row_major(&pose.ego_to_global.rotation),
            t: [t.x, t.y, t.z],
            timestamp: pose.timestamp_us,
        }
    }

    pub fn to_pose(&self) -> Result<EgoPose> {
        EgoPose::new(
            Mat3::from_row_slice(&self.rotation),
            Vec3::from(self.t),
            self.timestamp,
        )
    }
}

fn row_major(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[i * 3 + j] = m[(i, j)];
        }
    }
    out
}

fn read_string(module: &'static str, path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(module, path, e))
}

fn write_bytes(module: &'static str, path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(module, path, e))
}

pub fn load_rig(path: &Path) -> Result<Vec<CameraView>> {
    let records: Vec<CameraRecord> = serde_json::from_str(&read_string("geometry", path)?)
        .map_err(|e| Error::parse("geometry", path, e.to_string()))?;
    if records.is_empty() {
        return Err(Error::config("geometry", "camera rig has no views"));
    }
    records.iter().map(CameraRecord::to_camera).collect()
}

pub fn rig_to_json(rig: &[CameraView]) -> String {
    let records: Vec<_> = rig.iter().map(CameraRecord::from_camera).collect();
    serde_json::to_string_pretty(&records).expect("camera records serialize")
}

pub fn save_rig(path: &Path, rig: &[CameraView]) -> Result<()> {
    write_bytes("geometry", path, rig_to_json(rig).as_bytes())
}

pub fn load_poses(path: &Path) -> Result<Vec<EgoPose>> {
    let records: Vec<PoseRecord> = serde_json::from_str(&read_string("geometry", path)?)
        .map_err(|e| Error::parse("geometry", path, e.to_string()))?;
    records.iter().map(PoseRecord::to_pose).collect()
}

pub fn poses_to_json(poses: &[EgoPose]) -> String {
    let records: Vec<_> = poses.iter().map(PoseRecord::from_pose).collect();
    serde_json::to_string_pretty(&records).expect("pose records serialize")
}

pub fn save_poses(path: &Path, poses: &[EgoPose]) -> Result<()> {
    write_bytes("geometry", path, poses_to_json(poses).as_bytes())
}

enum CloudFormat {
    Csv,
    Bin,
}

fn cloud_format(path: &Path) -> Result<CloudFormat> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => Ok(CloudFormat::Csv),
        Some("bin") => Ok(CloudFormat::Bin),
        _ => Err(Error::Usage {
            module: "depth_gt",
            message: format!("{}: point cloud must be .csv or .bin", path.display()),
        }),
    }
}

/// Loads points from CSV (`x,y,z` per line, optional header) or raw
/// little-endian `f32` xyz triplets, chosen by extension.
pub fn load_point_cloud(path: &Path) -> Result<Vec<Vec3>> {
    match cloud_format(path)? {
        CloudFormat::Csv => parse_cloud_csv(path, &read_string("depth_gt", path)?),
        CloudFormat::Bin => {
            let bytes = fs::read(path).map_err(|e| Error::io("depth_gt", path, e))?;
            parse_cloud_bin(path, &bytes)
        }
    }
}

fn parse_cloud_csv(path: &Path, text: &str) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 3 => out.push(Vec3::new(v[0], v[1], v[2])),
            None if out.is_empty() && line_no == 0 => continue, // header
            _ => {
                return Err(Error::parse(
                    "depth_gt",
                    path,
                    format!("line {}: expected x,y,z", line_no + 1),
                ))
            }
        }
    }
    Ok(out)
}

fn parse_cloud_bin(path: &Path, bytes: &[u8]) -> Result<Vec<Vec3>> {
    if bytes.len() % 12 != 0 {
        return Err(Error::parse(
            "depth_gt",
            path,
            format!("{} bytes is not a whole number of xyz f32 triplets", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().unwrap()) as f64;
            Vec3::new(f(0), f(4), f(8))
        })
        .collect())
}

pub fn save_point_cloud(path: &Path, cloud: &[Vec3]) -> Result<()> {
    let mut buf = Vec::new();
    match cloud_format(path)? {
        CloudFormat::Csv => {
            for p in cloud {
                writeln!(buf, "{},{},{}", p.x, p.y, p.z).unwrap();
            }
        }
        CloudFormat::Bin => {
            for p in cloud {
                for v in [p.x, p.y, p.z] {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
    write_bytes("depth_gt", path, &buf)
}

/// `BEVF`, u32 channels, rows, cols (little-endian), then `f32` values in
/// channel-major row-major order.
pub fn encode_bev(grid: &FeatureGrid) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 4 * grid.data().len());
    buf.extend_from_slice(BEV_MAGIC);
    for v in [grid.channels(), grid.height(), grid.width()] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &x in grid.data() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    buf
}

pub fn decode_bev(bytes: &[u8]) -> Result<FeatureGrid> {
    let bad = |m: &str| Error::config("harness_cli", format!("bad BEV dump: {m}"));
    if bytes.len() < 16 || &bytes[..4] != BEV_MAGIC {
        return Err(bad("missing BEVF header"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let body = &bytes[16..];
    if body.len() != 4 * c * h * w {
        return Err(bad("payload length does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    FeatureGrid::from_vec(GridKind::BevFeature, c, h, w, data)
}

pub fn write_bev(path: &Path, grid: &FeatureGrid) -> Result<()> {
    write_bytes("harness_cli", path, &encode_bev(grid))
}

pub fn read_bev(path: &Path) -> Result<FeatureGrid> {
    decode_bev(&fs::read(path).map_err(|e| Error::io("harness_cli", path, e))?)
}

/// Writes `header` and `rows` as a CSV file.
pub fn write_csv<I, S>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let file = fs::File::create(path).map_err(|e| Error::io("harness_cli", path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| {
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{}", row.as_ref())?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io("harness_cli", path, e))
}
