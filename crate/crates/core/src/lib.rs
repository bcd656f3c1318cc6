//! Camera-to-BEV view transform with explicit depth supervision.
//!
//! The crate covers the deterministic half of a depth-based BEV detector:
//! pinhole geometry, LiDAR depth ground truth, a small camera-aware depth head
//! with its BCE loss, the depth-distribution lift, ego-motion aligned
//! multi-frame fusion, and three interchangeable voxel-pooling engines.

pub mod bench;
pub mod depth_gt;
pub mod depth_head;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lift;
pub mod metrics;
pub mod pipeline;
pub mod pooling;
pub mod scene;
pub mod temporal;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{CameraView, EgoPose, Point25D, RigidTransform, Vec3};
pub use lift::FrustumPoints;
pub use pooling::{BevGridSpec, Engine, EngineKind, PooledBev};
pub use tensor::{FeatureGrid, GridKind};
