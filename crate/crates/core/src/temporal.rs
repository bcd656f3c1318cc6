//! Multi-frame fusion: previous-frame pseudo points are moved into the current
//! ego frame before pooling, and the per-frame BEV grids are stacked along
//! channels, oldest frame first.

use crate::error::{Error, Result};
use crate::geometry::{compose_relative, EgoPose};
use crate::lift::FrustumPoints;
use crate::pooling::{BevGridSpec, Engine};
use crate::tensor::{FeatureGrid, GridKind};

pub const DEFAULT_FRAMES: usize = 2;

/// Pseudo points of every view at one timestamp, in that timestamp's ego frame.
#[derive(Debug, Clone)]
pub struct Frame {
    pub views: Vec<FrustumPoints>,
    pub pose: EgoPose,
}

/// Whether previous frames are moved into the current ego frame before pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    EgoMotion,
    /// Pool every frame in its own ego frame. Only useful to show the misalignment.
    Disabled,
}

/// Re-expresses `prev` points, captured at `prev_pose`, in the ego frame at `cur_pose`.
pub fn align_points(
    prev: &FrustumPoints,
    prev_pose: &EgoPose,
    cur_pose: &EgoPose,
) -> Result<FrustumPoints> {
    let relative = compose_relative(prev_pose, cur_pose)?;
    Ok(prev.transformed(&relative))
}

/// Pools every frame on `spec` after ego-motion alignment and concatenates the
/// grids, giving `frames.len() * C_F` channels. The last frame is the current one.
pub fn fuse_frames(frames: &[Frame], spec: &BevGridSpec, engine: &Engine) -> Result<FeatureGrid> {
    fuse_frames_with(frames, spec, engine, Alignment::EgoMotion)
}

pub fn fuse_frames_with(
    frames: &[Frame],
    spec: &BevGridSpec,
    engine: &Engine,
    alignment: Alignment,
) -> Result<FeatureGrid> {
    let current = frames
        .last()
        .ok_or_else(|| Error::config("temporal_fusion", "at least one frame is required"))?;
    let channels = current
        .views
        .first()
        .map(|v| v.channels())
        .ok_or_else(|| Error::config("temporal_fusion", "current frame has no views"))?;
    for (f, frame) in frames.iter().enumerate() {
        if frame.views.is_empty() || frame.views.iter().any(|v| v.channels() != channels) {
            return Err(Error::config(
                "temporal_fusion",
                format!("frame {f} does not carry {channels}-channel features in every view"),
            ));
        }
    }

    let mut grids = Vec::with_capacity(frames.len());
    for frame in frames {
        let pooled = if alignment == Alignment::EgoMotion && !std::ptr::eq(frame, current) {
            let aligned = frame
                .views
                .iter()
                .map(|v| align_points(v, &frame.pose, &current.pose))
                .collect::<Result<Vec<_>>>()?;
            engine.pool(&aligned, spec)?
        } else {
            engine.pool(&frame.views, spec)?
        };
        grids.push(pooled.grid);
    }
    FeatureGrid::concat_channels(GridKind::BevFeature, &grids)
}
