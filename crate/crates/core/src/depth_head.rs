//! Camera-aware depth prediction at desk scale.
//!
//! The camera parameters are flattened to a 21-vector, embedded by a two-layer
//! MLP into a per-channel sigmoid gate that re-weights the image feature, and
//! the gated feature goes through a shared per-pixel linear map and a softmax
//! over depth bins. The depth loss is per-channel binary cross entropy against
//! the one-hot ground truth, with its gradient taken back through the softmax.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::tensor::{FeatureGrid, GridKind};

pub const CAMERA_VECTOR_LEN: usize = 21;
pub const DEFAULT_HIDDEN: usize = 32;
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

const PARAMS_MAGIC: &[u8; 4] = b"BDHP";
const PARAMS_VERSION: u32 = 1;

/// Rotation (9, row-major), translation (3) and intrinsics (9, row-major), in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParamVector(pub [f64; CAMERA_VECTOR_LEN]);

impl CameraParamVector {
    pub fn from_camera(cam: &CameraView) -> Self {
        let mut v = [0.0; CAMERA_VECTOR_LEN];
        let (r, t, k) = (cam.rotation(), cam.translation(), cam.intrinsics());
        for i in 0..3 {
            for j in 0..3 {
                v[i * 3 + j] = r[(i, j)];
                v[12 + i * 3 + j] = k[(i, j)];
            }
            v[9 + i] = t[i];
        }
        Self(v)
    }
}

/// Weights of the camera MLP and the per-pixel depth projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHeadParams {
    hidden: usize,
    channels: usize,
    bins: usize,
    /// `hidden × 21`
    pub mlp_w1: Vec<f64>,
    pub mlp_b1: Vec<f64>,
    /// `channels × hidden`
    pub mlp_w2: Vec<f64>,
    pub mlp_b2: Vec<f64>,
    /// `bins × channels`
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
}

impl DepthHeadParams {
    pub fn zeros(hidden: usize, channels: usize, bins: usize) -> Self {
        Self {
            hidden,
            channels,
            bins,
            mlp_w1: vec![0.0; hidden * CAMERA_VECTOR_LEN],
            mlp_b1: vec![0.0; hidden],
            mlp_w2: vec![0.0; channels * hidden],
            mlp_b2: vec![0.0; channels],
            proj_w: vec![0.0; bins * channels],
            proj_b: vec![0.0; bins],
        }
    }

    /// Seeded uniform initialization scaled by fan-in. Values are rounded to
    /// `f32` so a serialized copy reloads bit-identically.
    pub fn random(seed: u64, hidden: usize, channels: usize, bins: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(hidden, channels, bins);
        let mut fill = |v: &mut Vec<f64>, fan_in: usize| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for x in v.iter_mut() {
                *x = rng.gen_range(-scale..scale) as f32 as f64;
            }
        };
        // camera vectors carry focal lengths in the hundreds; keep the first layer small
        fill(&mut p.mlp_w1, CAMERA_VECTOR_LEN * 500);
        fill(&mut p.mlp_b1, CAMERA_VECTOR_LEN);
        fill(&mut p.mlp_w2, hidden);
        fill(&mut p.mlp_b2, hidden);
        fill(&mut p.proj_w, channels);
        fill(&mut p.proj_b, channels);
        p
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn validate(&self) -> Result<()> {
        let (h, c, d) = (self.hidden, self.channels, self.bins);
        let lens = [
            (self.mlp_w1.len(), h * CAMERA_VECTOR_LEN, "mlp_w1"),
            (self.mlp_b1.len(), h, "mlp_b1"),
            (self.mlp_w2.len(), c * h, "mlp_w2"),
            (self.mlp_b2.len(), c, "mlp_b2"),
            (self.proj_w.len(), d * c, "proj_w"),
            (self.proj_b.len(), d, "proj_b"),
        ];
        for (got, want, name) in lens {
            if got != want {
                return Err(Error::config(
                    "depth_head",
                    format!("{name} has {got} entries, expected {want}"),
                ));
            }
        }
        if h == 0 || c == 0 || d == 0 {
            return Err(Error::config("depth_head", "dimensions must be positive"));
        }
        if !self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite())) {
            return Err(Error::config("depth_head", "parameters must be finite"));
        }
        Ok(())
    }

    fn tensors(&self) -> [&Vec<f64>; 6] {
        [
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
            &self.proj_w,
            &self.proj_b,
        ]
    }

    /// Header `BDHP`, then u32 version, input width, hidden, channels and bins,
    /// then every tensor as little-endian `f32` in declaration order.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(PARAMS_MAGIC)?;
        for v in [
            PARAMS_VERSION,
            CAMERA_VECTOR_LEN as u32,
            self.hidden as u32,
            self.channels as u32,
            self.bins as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for t in self.tensors() {
            for &x in t {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |m: String| Error::config("depth_head", m);
        let io = |e: std::io::Error| bad(format!("truncated parameter file: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != PARAMS_MAGIC {
            return Err(bad("bad parameter file magic".into()));
        }
        let mut header = [0u32; 5];
        for h in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(io)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, input, hidden, channels, bins] = header;
        if version != PARAMS_VERSION || input as usize != CAMERA_VECTOR_LEN {
            return Err(bad(format!(
                "unsupported parameter file (version {version}, input {input})"
            )));
        }
        let mut p = Self::zeros(hidden as usize, channels as usize, bins as usize);
        for t in [
            &mut p.mlp_w1,
            &mut p.mlp_b1,
            &mut p.mlp_w2,
            &mut p.mlp_b2,
            &mut p.proj_w,
            &mut p.proj_b,
        ] {
            for x in t.iter_mut() {
                let mut b = [0u8; 4];
                r.read_exact(&mut b).map_err(io)?;
                *x = f32::from_le_bytes(b) as f64;
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Per-channel gate `sigmoid(W2 relu(W1 x + b1) + b2)`.
    pub fn camera_gate(&self, cam_vec: &CameraParamVector) -> Vec<f64> {
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|i| {
                let row = &self.mlp_w1[i * CAMERA_VECTOR_LEN..(i + 1) * CAMERA_VECTOR_LEN];
                let z: f64 = row.iter().zip(&cam_vec.0).map(|(w, x)| w * x).sum::<f64>()
                    + self.mlp_b1[i];
                z.max(0.0)
            })
            .collect();
        (0..self.channels)
            .map(|c| {
                let row = &self.mlp_w2[c * self.hidden..(c + 1) * self.hidden];
                let z: f64 =
                    row.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>() + self.mlp_b2[c];
                sigmoid(z)
            })
            .collect()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Scales every channel of `feature` by its camera gate.
pub fn se_gate(
    feature: &FeatureGrid,
    cam_vec: &CameraParamVector,
    params: &DepthHeadParams,
) -> Result<FeatureGrid> {
    if feature.channels() != params.channels {
        return Err(Error::config(
            "depth_head",
            format!(
                "feature has {} channels, parameters expect {}",
                feature.channels(),
                params.channels
            ),
        ));
    }
    let gate = params.camera_gate(cam_vec);
    let mut out = feature.clone();
    let plane = out.plane();
    for (c, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        for x in chunk {
            *x *= gate[c];
        }
    }
    Ok(out)
}

/// Pre-softmax depth logits, `bins × H × W`.
pub fn depth_logits(gated: &FeatureGrid, params: &DepthHeadParams) -> Result<FeatureGrid> {
    if gated.channels() != params.channels {
        return Err(Error::config(
            "depth_head",
            format!(
                "feature has {} channels, parameters expect {}",
                gated.channels(),
                params.channels
            ),
        ));
    }
    let (h, w) = (gated.height(), gated.width());
    let plane = h * w;
    let mut logits = FeatureGrid::zeros(GridKind::DepthDistribution, params.bins, h, w);
    let out = logits.data_mut();
    for j in 0..params.bins {
        let dst = &mut out[j * plane..(j + 1) * plane];
        dst.fill(params.proj_b[j]);
        for c in 0..params.channels {
            let wjc = params.proj_w[j * params.channels + c];
            let src = &gated.data()[c * plane..(c + 1) * plane];
            for (o, x) in dst.iter_mut().zip(src) {
                *o += wjc * x;
            }
        }
    }
    Ok(logits)
}

/// Softmax over the channel axis of every pixel.
pub fn softmax_channels(logits: &FeatureGrid) -> FeatureGrid {
    let mut out = logits.clone().with_kind(GridKind::DepthDistribution);
    let (bins, plane) = (out.channels(), out.plane());
    let data = out.data_mut();
    for px in 0..plane {
        let max = (0..bins)
            .map(|j| data[j * plane + px])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..bins {
            let e = (data[j * plane + px] - max).exp();
            data[j * plane + px] = e;
            sum += e;
        }
        for j in 0..bins {
            data[j * plane + px] /= sum;
        }
    }
    out
}

/// Depth distribution `bins × H × W` for an already gated feature.
pub fn predict_depth(gated: &FeatureGrid, params: &DepthHeadParams) -> Result<FeatureGrid> {
    Ok(softmax_channels(&depth_logits(gated, params)?))
}

/// Result of [`bce_depth_loss`].
#[derive(Debug, Clone)]
pub struct DepthLoss {
    pub loss: f64,
    /// Gradient of `loss` with respect to the pre-softmax logits.
    pub grad_logits: FeatureGrid,
    pub supervised_pixels: usize,
    /// Set when no pixel carried ground truth; the loss is then defined as zero.
    pub no_supervision: bool,
}

/// Mean binary cross entropy over supervised pixels and all channels.
///
/// A pixel is supervised when its ground-truth column sums to one. `pred` must
/// be a softmax output; the returned gradient goes back through that softmax.
pub fn bce_depth_loss(pred: &FeatureGrid, gt: &FeatureGrid) -> Result<DepthLoss> {
    if pred.shape() != gt.shape() {
        return Err(Error::config(
            "depth_head",
            format!("prediction {:?} and target {:?} differ in shape", pred.shape(), gt.shape()),
        ));
    }
    let (bins, plane) = (pred.channels(), pred.plane());
    let (p, y) = (pred.data(), gt.data());

    let supervised: Vec<usize> = (0..plane)
        .filter(|&px| {
            let s: f64 = (0..bins).map(|j| y[j * plane + px]).sum();
            s == 1.0
        })
        .collect();
    let mut grad = FeatureGrid::zeros(GridKind::DepthDistribution, bins, pred.height(), pred.width());
    if supervised.is_empty() {
        log::warn!("depth loss: no supervised pixels");
        return Ok(DepthLoss {
            loss: 0.0,
            grad_logits: grad,
            supervised_pixels: 0,
            no_supervision: true,
        });
    }

    let norm = 1.0 / (supervised.len() * bins) as f64;
    let mut total = 0.0;
    let mut dl_dp = vec![0.0; bins];
    let g = grad.data_mut();
    for &px in &supervised {
        for j in 0..bins {
            let i = j * plane + px;
            let (raw, t) = (p[i], y[i]);
            let q = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
            dl_dp[j] = if raw > PROB_CLAMP && raw < 1.0 - PROB_CLAMP {
                norm * ((1.0 - t) / (1.0 - q) - t / q)
            } else {
                0.0
            };
        }
        // softmax Jacobian: dz_k = p_k (dp_k - sum_j dp_j p_j)
        let dot: f64 = (0..bins).map(|j| dl_dp[j] * p[j * plane + px]).sum();
        for k in 0..bins {
            let i = k * plane + px;
            g[i] = p[i] * (dl_dp[k] - dot);
        }
    }
    Ok(DepthLoss {
        loss: total * norm,
        grad_logits: grad,
        supervised_pixels: supervised.len(),
        no_supervision: false,
    })
}
