//! Multi-view sparse processing for crowd detection and tracking.
//!
//! A rig of calibrated cameras watches a shared ground plane. Each frame is
//! cut into fixed-size blocks, and a learned per-block policy decides which
//! blocks a camera sends to the detector. Detections are fused across views
//! on the ground plane, the `K` best views of every person keep their blocks,
//! and a Kalman tracker turns the fused points into trajectories.

pub mod association;
pub mod detector;
pub mod geometry;
pub mod hungarian;
pub mod metrics;
pub mod policy;
pub mod render;
pub mod rng;
pub mod runtime;
pub mod scene;
pub mod tracker;
