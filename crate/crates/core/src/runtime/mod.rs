//! Running the full pipeline: configuration, the single-process loop, the
//! networked camera/server split, wire format, traffic model and reports.

pub mod config;
pub mod net;
pub mod node;
pub mod report;
pub mod sim;
pub mod traffic;
pub mod wire;

use thiserror::Error;

use crate::detector::DetectorError;
use crate::metrics::MetricsError;
use crate::rng::stream;
use crate::scene::{load_trajectories, SceneError, SceneSequence};

pub use config::{ConfigError, Mode, RunConfig};
pub use net::{run_camera_node, run_server, Server};
pub use report::{compare_reports, RunReport};
pub use sim::run_sim;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Wire(#[from] wire::WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("connection to {peer} lost: {reason}")]
    ConnectionLost {
        peer: String,
        reason: String,
        /// What the run produced before the failure, if anything.
        partial: Option<Box<RunReport>>,
    },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("bad report: {0}")]
    Report(String),
}

impl RunError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Wire(_)
            | RunError::Io(_)
            | RunError::ConnectionLost { .. }
            | RunError::Protocol(_) => 2,
            _ => 1,
        }
    }
}

/// The configured frame source.
pub fn scene_source(cfg: &RunConfig) -> Result<SceneSequence, RunError> {
    Ok(match &cfg.trajectories {
        Some(path) => SceneSequence::replay(load_trajectories(path, cfg.scene.dt, &cfg.scene)?),
        None => SceneSequence::synthetic(cfg.scene.clone(), stream(cfg.seed, "scene", 0)),
    })
}
