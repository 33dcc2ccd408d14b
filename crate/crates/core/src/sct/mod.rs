//! Single-camera tracking: Kalman motion model, assignment solver and the
//! cascade tracker.

pub mod assignment;
pub mod kalman;
pub mod tracker;

pub use tracker::{Tracker, TrackerConfig, Tracklet, TrackStatus};
