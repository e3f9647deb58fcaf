//! Run configuration: a TOML document with one table per component.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detector::DetectorConfig;
use crate::geometry::{BlockGrid, CalibrationRecord, CameraModel, GeometryError};
use crate::policy::PolicyConfig;
use crate::scene::SceneConfig;
use crate::tracker::TrackerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Camera(#[from] GeometryError),
}

/// Which blocks each camera processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every block, every frame.
    Full,
    /// Learned per-camera selection without cross-camera feedback.
    Blockcopy,
    /// A fixed mask profiled on an initial stretch of the sequence.
    StaticMask,
    /// Learned selection driven by top-K server feedback.
    #[default]
    Mvsparse,
    /// Ground-truth guided top-K selection.
    Oracle,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Full,
        Mode::Blockcopy,
        Mode::StaticMask,
        Mode::Mvsparse,
        Mode::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Blockcopy => "blockcopy",
            Mode::StaticMask => "static_mask",
            Mode::Mvsparse => "mvsparse",
            Mode::Oracle => "oracle",
        }
    }

    /// Whether cameras run a learning agent.
    pub fn learns(self) -> bool {
        matches!(self, Mode::Blockcopy | Mode::Mvsparse)
    }

    /// Whether the mode needs privileged state only a single process has.
    pub fn local_only(self) -> bool {
        matches!(self, Mode::StaticMask | Mode::Oracle)
    }
}

impl std::str::FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown mode {s:?}")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub listen: String,
    /// Per-link bandwidth, bytes per second.
    pub bandwidth_bytes_per_s: f64,
    pub latency_ms: f64,
    /// Modeled camera-side time per processed block.
    pub compute_ms_per_block: f64,
    /// How long the server waits for a frame's updates.
    pub frame_timeout_ms: u64,
    pub connect_attempts: u32,
    /// First retry delay; doubles per attempt.
    pub retry_backoff_ms: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7878".into(),
            bandwidth_bytes_per_s: 20e6 / 8.0,
            latency_ms: 5.0,
            compute_ms_per_block: 1.0,
            frame_timeout_ms: 10_000,
            connect_attempts: 8,
            retry_backoff_ms: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub frames: u64,
    pub seed: u64,
    /// Views kept per identity.
    pub k: usize,
    /// Cross-view association radius, meters.
    pub eps: f64,
    pub block_size: u32,
    /// Evaluation match radius, meters.
    pub r_match: f64,
    pub compression_factor: f64,
    /// Fixed target used by `blockcopy`.
    pub blockcopy_tau: f64,
    /// Frames profiled to build the `static_mask` mask.
    pub profile_frames: u64,
    /// Gate for matching per-view candidates to ground truth in `oracle`.
    pub oracle_radius: f64,
    /// Optional `frame_id person_id x y` file replacing the synthetic crowd.
    pub trajectories: Option<PathBuf>,
    pub scene: SceneConfig,
    pub detector: DetectorConfig,
    pub policy: PolicyConfig,
    pub tracker: TrackerConfig,
    pub network: NetworkConfig,
    /// Empty means the built-in four-camera rig.
    pub cameras: Vec<CalibrationRecord>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            frames: 1000,
            seed: 0,
            k: 3,
            eps: 0.5,
            block_size: 128,
            r_match: 0.5,
            compression_factor: 3.3,
            blockcopy_tau: 33.33 / 45.0,
            profile_frames: 100,
            oracle_radius: 1.0,
            trajectories: None,
            scene: SceneConfig::default(),
            detector: DetectorConfig::default(),
            policy: PolicyConfig::default(),
            tracker: TrackerConfig::default(),
            network: NetworkConfig::default(),
            cameras: Vec::new(),
        }
    }
}

/// Four 1152x640 cameras over the default 36 m x 12 m arena: one high
/// overview camera and three lower ones each covering about a third.
pub fn default_rig() -> Vec<CameraModel> {
    let size = (1152, 640);
    let mut rig = vec![CameraModel::look_at(
        0,
        Vector3::new(18.0, -6.0, 30.0),
        Vector3::new(18.0, 6.0, 0.0),
        800.0,
        size,
    )
    .expect("overview camera is valid")];
    for (i, x) in [6.0, 18.0, 30.0].into_iter().enumerate() {
        rig.push(
            CameraModel::look_at(
                i as u32 + 1,
                Vector3::new(x, -2.0, 8.0),
                Vector3::new(x, 6.0, 0.0),
                800.0,
                size,
            )
            .expect("side camera is valid"),
        );
    }
    rig
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(t) = &cfg.trajectories {
            if t.is_relative() {
                cfg.trajectories = Some(path.parent().unwrap_or(Path::new(".")).join(t));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.k == 0 {
            return invalid("k must be at least 1");
        }
        if self.frames == 0 {
            return invalid("frames must be at least 1");
        }
        if self.block_size == 0 {
            return invalid("block_size must be positive");
        }
        if !(self.eps > 0.0 && self.r_match > 0.0 && self.oracle_radius > 0.0) {
            return invalid("eps, r_match and oracle_radius must be positive");
        }
        if !(self.compression_factor > 0.0) {
            return invalid("compression_factor must be positive");
        }
        if !(0.0..=1.0).contains(&self.blockcopy_tau) {
            return invalid("blockcopy_tau must lie in [0, 1]");
        }
        let p = &self.policy;
        if !(p.alpha > 0.0) || !(0.0..1.0).contains(&p.momentum) || !(0.0..0.5).contains(&p.p_floor)
        {
            return invalid("policy needs alpha > 0, momentum in [0, 1) and p_floor in [0, 0.5)");
        }
        if !(self.scene.dt > 0.0) {
            return invalid("scene.dt must be positive");
        }
        if !(self.network.bandwidth_bytes_per_s > 0.0) {
            return invalid("network bandwidth must be positive");
        }
        let cams = self.camera_models()?;
        let mut ids: Vec<u32> = cams.iter().map(|c| c.camera_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return invalid("camera ids must be unique");
        }
        if cams.iter().any(|c| c.image_size != cams[0].image_size) {
            return invalid("all cameras must share one image size");
        }
        Ok(())
    }

    /// Cameras in ascending id order.
    pub fn camera_models(&self) -> Result<Vec<CameraModel>, ConfigError> {
        let mut cams = if self.cameras.is_empty() {
            default_rig()
        } else {
            self.cameras
                .iter()
                .map(CalibrationRecord::to_camera)
                .collect::<Result<Vec<_>, _>>()?
        };
        cams.sort_by_key(|c| c.camera_id);
        Ok(cams)
    }

    pub fn grid(&self) -> Result<BlockGrid, ConfigError> {
        let cams = self.camera_models()?;
        Ok(BlockGrid::for_camera(&cams[0], self.block_size))
    }

    /// Raw bytes of one RGB block.
    pub fn block_bytes(&self) -> usize {
        self.block_size as usize * self.block_size as usize * 3
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config always serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let grid = cfg.grid().unwrap();
        assert_eq!((grid.rows, grid.cols, grid.len()), (5, 9, 45));
        assert_eq!(cfg.block_bytes(), 49_152);
        assert_eq!(cfg.camera_models().unwrap().len(), 4);
    }

    #[test]
    fn toml_round_trip_and_partial_documents() {
        let cfg = RunConfig {
            mode: Mode::Oracle,
            k: 1,
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());

        let partial =
            RunConfig::from_toml_str("mode = \"full\"\nframes = 7\n[policy]\nalpha = 0.5\n")
                .unwrap();
        assert_eq!(partial.mode, Mode::Full);
        assert_eq!(partial.frames, 7);
        assert_eq!(partial.policy.alpha, 0.5);
        assert_eq!(partial.policy.train_interval, 10);
    }

    #[test]
    fn explicit_cameras_replace_the_rig() {
        let rig = default_rig();
        let cfg = RunConfig {
            cameras: rig[..2].iter().map(CalibrationRecord::from).collect(),
            ..RunConfig::default()
        };
        let text = cfg.to_toml_string();
        let back = RunConfig::from_toml_str(&text).unwrap();
        let cams = back.camera_models().unwrap();
        assert_eq!(cams.len(), 2);
        assert_eq!(cams[1].camera_id, 1);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "k = 0",
            "frames = 0",
            "eps = -1.0",
            "mode = \"sideways\"",
            "blockcopy_tau = 2.0",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
        let dup = RunConfig {
            cameras: vec![CalibrationRecord::from(&default_rig()[0]); 2],
            ..RunConfig::default()
        };
        assert!(matches!(dup.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 1,
            ..a.clone()
        };
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn mode_names_parse() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
    }
}
