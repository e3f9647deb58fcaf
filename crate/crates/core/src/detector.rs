//! Behavioral model of a block-sparse per-view detector.
//!
//! Blocks processed this frame produce fresh (noisy) detections; blocks that
//! were skipped replay whatever was detected there the last time they ran.
//! This reproduces the accuracy/computation trade-off of feature reuse
//! without running a network.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::Cluster;
use crate::geometry::{BBox, BlockGrid, BlockMask, CameraModel, GroundPoint};
use crate::rng::StreamRng;
use crate::scene::GtView;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("action grid is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Minimum visible fraction for a person to be detectable.
    pub v_min: f64,
    /// Standard deviation of box jitter, pixels.
    pub sigma_px: f64,
    pub p_miss: f64,
    /// Expected false positives per view and frame.
    pub lambda_fp: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            v_min: 0.25,
            sigma_px: 2.0,
            p_miss: 0.05,
            lambda_fp: 0.1,
        }
    }
}

impl DetectorConfig {
    /// Noise-free detector that sees everyone visible enough.
    pub fn perfect() -> Self {
        Self {
            sigma_px: 0.0,
            p_miss: 0.0,
            lambda_fp: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub camera_id: u32,
    pub bbox: BBox,
    /// Ground projection of the box foot.
    pub ground: GroundPoint,
    pub score: f64,
    /// Replayed from an earlier frame rather than computed now.
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub camera_id: u32,
    pub frame_id: u64,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn empty(camera_id: u32, frame_id: u64) -> Self {
        Self {
            camera_id,
            frame_id,
            detections: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaleEntry {
    pub bbox: BBox,
    pub score: f64,
    pub captured: u64,
}

/// Per-camera duplication state: when each block last ran and what was
/// detected there.
#[derive(Debug, Clone)]
pub struct ViewState {
    pub camera_id: u32,
    pub grid: BlockGrid,
    pub last_refresh: Vec<Option<u64>>,
    pub stale_detections: BTreeMap<u32, StaleEntry>,
    rng: StreamRng,
}

impl ViewState {
    pub fn new(camera_id: u32, grid: BlockGrid, rng: StreamRng) -> Self {
        Self {
            camera_id,
            grid,
            last_refresh: vec![None; grid.len()],
            stale_detections: BTreeMap::new(),
            rng,
        }
    }

    /// Frames since block `i` last ran, `None` if it never has.
    pub fn staleness(&self, i: usize, frame_id: u64) -> Option<u64> {
        self.last_refresh[i].map(|f| frame_id.saturating_sub(f))
    }

    /// Run the detector for one frame under `actions`.
    ///
    /// Random draws per annotated person are taken whether or not the person
    /// is processed, so two runs from the same state see the same noise.
    pub fn simulate(
        &mut self,
        actions: &BlockMask,
        gt: &GtView,
        cam: &CameraModel,
        frame_id: u64,
        cfg: &DetectorConfig,
    ) -> Result<DetectionSet, DetectorError> {
        if !actions.matches_grid(&self.grid) {
            return Err(DetectorError::DimensionMismatch {
                rows: self.grid.rows,
                cols: self.grid.cols,
                got_rows: actions.rows(),
                got_cols: actions.cols(),
            });
        }
        for idx in actions.iter_set() {
            self.last_refresh[self.grid.flat(idx)] = Some(frame_id);
        }
        let touches_fresh = |b: &BBox| {
            self.grid
                .blocks_for_bbox(b)
                .into_iter()
                .any(|i| actions.get(i))
        };
        let jitter = Normal::new(0.0, cfg.sigma_px.max(0.0)).expect("finite sigma");
        let (w, h) = (cam.width(), cam.height());

        let mut out = DetectionSet::empty(self.camera_id, frame_id);
        let mut seen = Vec::with_capacity(gt.entries.len());
        for entry in &gt.entries {
            let noise: [f64; 4] = std::array::from_fn(|_| jitter.sample(&mut self.rng));
            let missed = self.rng.gen::<f64>() < cfg.p_miss;
            seen.push(entry.person_id);

            let fresh = touches_fresh(&entry.bbox);
            if entry.visibility < cfg.v_min {
                if fresh {
                    self.stale_detections.remove(&entry.person_id);
                }
                continue;
            }
            if fresh {
                let jittered = BBox::new(
                    entry.bbox.x + noise[0],
                    entry.bbox.y + noise[1],
                    (entry.bbox.w + noise[2]).max(2.0),
                    (entry.bbox.h + noise[3]).max(2.0),
                )
                .clamp_to(w, h);
                let ground = jittered
                    .and_then(|b| cam.project_image_to_ground(b.foot()).ok().map(|g| (b, g)));
                match (missed, ground) {
                    (false, Some((bbox, ground))) => {
                        let score = 0.5 + 0.5 * entry.visibility;
                        self.stale_detections.insert(
                            entry.person_id,
                            StaleEntry {
                                bbox,
                                score,
                                captured: frame_id,
                            },
                        );
                        out.detections.push(Detection {
                            camera_id: self.camera_id,
                            bbox,
                            ground,
                            score,
                            stale: false,
                        });
                    }
                    _ => {
                        self.stale_detections.remove(&entry.person_id);
                    }
                }
            } else if let Some(old) = self.stale_detections.get(&entry.person_id).copied() {
                let replay = if touches_fresh(&old.bbox) {
                    None
                } else {
                    cam.project_image_to_ground(old.bbox.foot()).ok()
                };
                match replay {
                    Some(ground) => out.detections.push(Detection {
                        camera_id: self.camera_id,
                        bbox: old.bbox,
                        ground,
                        score: old.score,
                        stale: true,
                    }),
                    None => {
                        self.stale_detections.remove(&entry.person_id);
                    }
                }
            }
        }
        // Memory of people no longer annotated survives only in skipped blocks.
        let gone: Vec<u32> = self
            .stale_detections
            .iter()
            .filter(|(id, e)| !seen.contains(id) && touches_fresh(&e.bbox))
            .map(|(id, _)| *id)
            .collect();
        for id in gone {
            self.stale_detections.remove(&id);
        }

        let n_fp = if cfg.lambda_fp > 0.0 {
            Poisson::new(cfg.lambda_fp)
                .expect("positive rate")
                .sample(&mut self.rng) as usize
        } else {
            0
        };
        for _ in 0..n_fp {
            let block = self.grid.unflat(self.rng.gen_range(0..self.grid.len()));
            let rect = self.grid.block_rect(block);
            let bw = self.rng.gen_range(16.0..48.0);
            let bh = self.rng.gen_range(40.0..120.0);
            let bx = rect.x + self.rng.gen::<f64>() * rect.w;
            let by = rect.y + self.rng.gen::<f64>() * rect.h;
            let score = self.rng.gen_range(0.3..0.6);
            if !actions.get(block) {
                continue;
            }
            let Some(bbox) = BBox::new(bx - 0.5 * bw, by - 0.5 * bh, bw, bh).clamp_to(w, h) else {
                continue;
            };
            if let Ok(ground) = cam.project_image_to_ground(bbox.foot()) {
                out.detections.push(Detection {
                    camera_id: self.camera_id,
                    bbox,
                    ground,
                    score,
                    stale: false,
                });
            }
        }
        Ok(out)
    }
}

/// Ground-plane detection merged from one identity cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDetection {
    pub ground: GroundPoint,
    pub score: f64,
    /// Cameras that contributed, ascending.
    pub views: Vec<u32>,
}

/// One fused detection per cluster: mean ground point, best score.
pub fn fuse_ground_plane(clusters: &[Cluster]) -> Vec<FusedDetection> {
    clusters
        .iter()
        .filter_map(|c| {
            let ground = GroundPoint::mean(c.members.iter().map(|d| &d.ground))?;
            let score = c.members.iter().map(|d| d.score).fold(0.0, f64::max);
            let mut views: Vec<u32> = c.members.iter().map(|d| d.camera_id).collect();
            views.sort_unstable();
            Some(FusedDetection {
                ground,
                score,
                views,
            })
        })
        .collect()
}
