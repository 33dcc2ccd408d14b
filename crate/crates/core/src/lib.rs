//! Multi-camera multi-object tracking downstream of a detector.
//!
//! The pipeline runs per camera: [`suppression`] removes overlapping
//! detections, [`sct`] links the survivors into local tracklets, and
//! [`sync`] merges tracklets across adjacent cameras into global identities
//! using [`reid`] appearance distances. [`metrics`] scores the result and
//! [`simgen`] produces synthetic scenarios with ground truth.

pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod model;
pub mod reid;
pub mod sct;
pub mod simgen;
pub mod suppression;
pub mod sync;

pub use error::{Error, Result};
pub use geometry::{iou, BoundingBox};
pub use model::{CameraId, CameraMeta, Detection, DetectionSet, EmbeddingStore, FrameIndex, Observation, TrackRecord};
