//! Outer-product lift of image context by the per-pixel depth distribution.

use crate::depth_gt::DepthBinSpec;
use crate::error::{Error, Result};
use crate::geometry::{unproject_unchecked, CameraView, RigidTransform, Vec3};
use crate::tensor::FeatureGrid;

/// Where the depth weights of a point set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    Predicted,
    GroundTruth,
    Synthetic,
}

/// Pseudo point cloud: one ego-frame coordinate and one feature row per point.
///
/// Features are stored as `f32`, row-major `len × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrustumPoints {
    channels: usize,
    coords: Vec<Vec3>,
    features: Vec<f32>,
    pub source: WeightSource,
}

impl FrustumPoints {
    pub fn new(
        channels: usize,
        coords: Vec<Vec3>,
        features: Vec<f32>,
        source: WeightSource,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("lift", "channels must be positive"));
        }
        if features.len() != coords.len() * channels {
            return Err(Error::config(
                "lift",
                format!(
                    "{} feature values for {} points of {channels} channels",
                    features.len(),
                    coords.len()
                ),
            ));
        }
        if !coords.iter().all(|c| c.iter().all(|v| v.is_finite()))
            || !features.iter().all(|f| f.is_finite())
        {
            return Err(Error::config("lift", "non-finite frustum values"));
        }
        Ok(Self {
            channels,
            coords,
            features,
            source,
        })
    }

    pub fn empty(channels: usize) -> Self {
        Self {
            channels,
            coords: Vec::new(),
            features: Vec::new(),
            source: WeightSource::Synthetic,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn len(&self) -> usize {
        self.coords.len()
    }
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }
    pub fn features(&self) -> &[f32] {
        &self.features
    }
    #[inline]
    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    /// Same features, coordinates mapped through `transform`.
    pub fn transformed(&self, transform: &RigidTransform) -> Self {
        Self {
            channels: self.channels,
            coords: self.coords.iter().map(|p| transform.apply(p)).collect(),
            features: self.features.clone(),
            source: self.source,
        }
    }

    /// Features multiplied by `alpha`, coordinates untouched.
    pub fn scaled(&self, alpha: f32) -> Self {
        Self {
            features: self.features.iter().map(|f| f * alpha).collect(),
            ..self.clone()
        }
    }
}

/// Lifts one view. Row `(j * H + h) * W + w` holds bin `j` at cell `(h, w)`:
/// its feature is `depth[j, h, w] * context[:, h, w]` and its coordinate is the
/// unprojection of the cell's pixel center at bin `j`'s center depth.
pub fn lift_view(
    context: &FeatureGrid,
    depth: &FeatureGrid,
    cam: &CameraView,
    bins: &DepthBinSpec,
    stride: usize,
) -> Result<FrustumPoints> {
    let (channels, h, w) = context.shape();
    if depth.height() != h || depth.width() != w {
        return Err(Error::config(
            "lift",
            format!("context is {h}x{w} but depth is {}x{}", depth.height(), depth.width()),
        ));
    }
    if depth.channels() != bins.num_bins {
        return Err(Error::config(
            "lift",
            format!("depth has {} bins, expected {}", depth.channels(), bins.num_bins),
        ));
    }
    if h * stride != cam.image_height() as usize || w * stride != cam.image_width() as usize {
        return Err(Error::config(
            "lift",
            format!(
                "grid {h}x{w} at stride {stride} does not cover image {}x{}",
                cam.image_height(),
                cam.image_width()
            ),
        ));
    }
    bins.validate()?;

    let n = bins.num_bins * h * w;
    let plane = h * w;
    let mut coords = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * channels);
    let ctx = context.data();
    for j in 0..bins.num_bins {
        let d = bins.center(j);
        for row in 0..h {
            let v = (row as f64 + 0.5) * stride as f64;
            for col in 0..w {
                let u = (col as f64 + 0.5) * stride as f64;
                coords.push(unproject_unchecked(u, v, d, cam));
                let px = row * w + col;
                let weight = depth.data()[j * plane + px];
                for c in 0..channels {
                    features.push((weight * ctx[c * plane + px]) as f32);
                }
            }
        }
    }
    FrustumPoints::new(channels, coords, features, WeightSource::Predicted)
}
