//! Per-frame camera and server logic shared by the single-process loop and
//! the networked nodes.

use std::collections::{BTreeMap, BTreeSet};

use crate::association::{assign_cameras, cluster_detections};
use crate::detector::{fuse_ground_plane, Detection, DetectionSet, DetectorConfig, ViewState};
use crate::geometry::{BBox, BlockGrid, BlockMask, CameraModel, GroundPoint};
use crate::metrics::{MetricAccumulator, MetricsError};
use crate::policy::{
    extract_block_features, information_gain, target_cost, BlockFeatures, Decision, GainInputs,
    PolicyAgent, PolicyState,
};
use crate::render::{render_view, GrayFrame, MotionMap};
use crate::rng::stream;
use crate::scene::{ground_truth_view, SceneFrame};
use crate::tracker::Tracker;

use super::config::{Mode, RunConfig};
use super::report::{FrameRecord, RunReport};
use super::traffic::{account_traffic, TrafficModel};
use super::wire::{BlockUpdate, ServerFeedback};
use super::RunError;

/// A decision waiting for the server's verdict on its frame.
#[derive(Debug)]
struct Pending {
    decision: Decision,
    motion: MotionMap,
    detections: Vec<Detection>,
    refreshed_before: Vec<Option<u64>>,
}

/// One camera: renders its view, picks blocks, runs the detector model and
/// learns from server feedback.
#[derive(Debug)]
pub struct CameraNode {
    camera: CameraModel,
    grid: BlockGrid,
    mode: Mode,
    detector: DetectorConfig,
    view: ViewState,
    agent: Option<PolicyAgent>,
    eps: f64,
    blockcopy_tau: f64,
    block_bytes: usize,
    materialize: bool,
    background: GrayFrame,
    prev_frame: Option<GrayFrame>,
    prev_actions: BlockMask,
    prev_detections: Vec<BBox>,
    feedback: Option<ServerFeedback>,
    fixed_mask: Option<BlockMask>,
    /// Ground points emitted per frame, kept while some block refers to it.
    history: BTreeMap<u64, Vec<GroundPoint>>,
    pending: Option<Pending>,
}

impl CameraNode {
    pub fn new(cfg: &RunConfig, camera: CameraModel) -> Self {
        let grid = BlockGrid::for_camera(&camera, cfg.block_size);
        let id = camera.camera_id;
        let agent = cfg.mode.learns().then(|| {
            PolicyAgent::new(
                cfg.policy.clone(),
                stream(cfg.seed, "policy", u64::from(id)),
            )
        });
        Self {
            grid,
            mode: cfg.mode,
            detector: cfg.detector.clone(),
            view: ViewState::new(id, grid, stream(cfg.seed, "detector", u64::from(id))),
            agent,
            eps: cfg.eps,
            blockcopy_tau: cfg.blockcopy_tau,
            block_bytes: cfg.block_bytes(),
            materialize: false,
            background: GrayFrame::background(
                id,
                camera.image_size.0 as usize,
                camera.image_size.1 as usize,
            ),
            prev_frame: None,
            prev_actions: BlockMask::for_grid(&grid, false),
            prev_detections: Vec::new(),
            feedback: None,
            fixed_mask: None,
            history: BTreeMap::new(),
            pending: None,
            camera,
        }
    }

    /// Fill update payloads with real block pixels.
    pub fn with_payload(mut self, on: bool) -> Self {
        self.materialize = on;
        self
    }

    /// Process exactly these blocks every frame.
    pub fn with_fixed_mask(mut self, mask: BlockMask) -> Self {
        self.fixed_mask = Some(mask);
        self
    }

    pub fn camera_id(&self) -> u32 {
        self.camera.camera_id
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    pub fn weights(&self) -> Option<BlockFeatures> {
        self.agent.as_ref().map(|a| a.params.weights)
    }

    /// What the detector would report this frame if every block ran,
    /// without advancing any state.
    pub fn probe(&self, scene: &SceneFrame) -> Result<DetectionSet, RunError> {
        let gt = ground_truth_view(scene, &self.camera);
        let mut view = self.view.clone();
        Ok(view.simulate(
            &BlockMask::for_grid(&self.grid, true),
            &gt,
            &self.camera,
            scene.frame_id,
            &self.detector,
        )?)
    }

    /// Apply the server's answer for the previous frame.
    pub fn absorb(&mut self, feedback: ServerFeedback) -> Result<(), RunError> {
        if let Some(p) = self.pending.take() {
            if p.decision.frame_id != feedback.frame_id {
                return Err(RunError::Protocol(format!(
                    "camera {} got feedback for frame {} while waiting on {}",
                    self.camera_id(),
                    feedback.frame_id,
                    p.decision.frame_id
                )));
            }
            self.learn(p, &feedback.mask, feedback.tau);
        }
        self.feedback = Some(feedback);
        Ok(())
    }

    fn learn(&mut self, p: Pending, assigned: &BlockMask, tau: f64) {
        let Some(agent) = self.agent.as_mut() else {
            return;
        };
        let reference: Vec<Option<&[GroundPoint]>> = p
            .refreshed_before
            .iter()
            .map(|f| f.and_then(|f| self.history.get(&f)).map(Vec::as_slice))
            .collect();
        let gain = information_gain(&GainInputs {
            grid: &self.grid,
            motion: &p.motion,
            detections: &p.detections,
            reference: &reference,
            assigned,
            delta_motion: agent.config().delta_motion,
            eps: self.eps,
        });
        let frame_id = p.decision.frame_id;
        let out = agent.learn(p.decision, &gain, tau);
        log::trace!(
            "camera {} frame {frame_id}: gain {:.4} cost {:.4} weights {:?}",
            self.camera.camera_id,
            gain.iter().sum::<f64>() / gain.len().max(1) as f64,
            out.cost,
            agent.params.weights
        );
    }

    /// Run one frame and produce the update for the server. `plan`
    /// overrides the camera's own block choice.
    pub fn step(
        &mut self,
        scene: &SceneFrame,
        plan: Option<BlockMask>,
    ) -> Result<BlockUpdate, RunError> {
        if self.pending.is_some() {
            return Err(RunError::Protocol(format!(
                "camera {} stepped frame {} before feedback on the previous frame",
                self.camera_id(),
                scene.frame_id
            )));
        }
        let frame_id = scene.frame_id;
        let gt = ground_truth_view(scene, &self.camera);
        let needs_pixels = self.agent.is_some() || self.materialize;
        let (frame, motion) = if needs_pixels {
            let cur = render_view(&self.background, &gt);
            let motion = match &self.prev_frame {
                Some(prev) => MotionMap::between(prev, &cur),
                None => MotionMap::zeros(cur.width, cur.height),
            };
            (Some(cur), Some(motion))
        } else {
            (None, None)
        };

        let mut decision = None;
        let actions = if let Some(plan) = plan {
            plan
        } else if let Some(mask) = &self.fixed_mask {
            mask.clone()
        } else if let (Some(agent), Some(frame), Some(motion)) =
            (self.agent.as_mut(), &frame, &motion)
        {
            let (topk, mask) = match (self.mode, &self.feedback) {
                (Mode::Mvsparse, Some(fb)) => (fb.topk.clone(), fb.mask.clone()),
                (Mode::Mvsparse, None) => (Vec::new(), BlockMask::for_grid(&self.grid, false)),
                _ => (
                    self.prev_detections.clone(),
                    BlockMask::for_grid(&self.grid, true),
                ),
            };
            let ages: Vec<Option<u64>> = (0..self.grid.len())
                .map(|i| self.view.staleness(i, frame_id))
                .collect();
            let features = extract_block_features(
                &PolicyState {
                    frame,
                    motion,
                    topk: &topk,
                    mask: &mask,
                    prev_detections: &self.prev_detections,
                    prev_actions: &self.prev_actions,
                    frames_since_refresh: &ages,
                },
                &self.grid,
                agent.config().delta_motion,
                agent.config().full_every,
            )
            .map_err(|e| RunError::Protocol(e.to_string()))?;
            let d = agent.act(frame_id, features, &self.grid);
            let a = d.actions.clone();
            decision = Some(d);
            a
        } else {
            BlockMask::for_grid(&self.grid, true)
        };
        if !actions.matches_grid(&self.grid) {
            return Err(RunError::Protocol(format!(
                "camera {} got a {}x{} plan for a {}x{} grid",
                self.camera_id(),
                actions.rows(),
                actions.cols(),
                self.grid.rows,
                self.grid.cols
            )));
        }

        let refreshed_before = self.view.last_refresh.clone();
        let detections =
            self.view
                .simulate(&actions, &gt, &self.camera, frame_id, &self.detector)?;
        self.history.insert(
            frame_id,
            detections.detections.iter().map(|d| d.ground).collect(),
        );

        if let (Some(decision), Some(motion)) = (decision, motion) {
            let pending = Pending {
                decision,
                motion,
                detections: detections.detections.clone(),
                refreshed_before,
            };
            if self.mode == Mode::Mvsparse {
                self.pending = Some(pending);
            } else {
                let all = BlockMask::for_grid(&self.grid, true);
                self.learn(pending, &all, self.blockcopy_tau);
            }
        }
        self.prune_history();

        let payload = match (&frame, self.materialize) {
            (Some(frame), true) => self.block_payload(frame, &actions),
            _ => Vec::new(),
        };
        self.prev_detections = detections.detections.iter().map(|d| d.bbox).collect();
        self.prev_actions = actions.clone();
        self.prev_frame = frame;
        Ok(BlockUpdate {
            frame_id,
            camera_id: self.camera_id(),
            actions,
            block_bytes: self.block_bytes as u32,
            payload,
            detections: detections.detections,
        })
    }

    fn prune_history(&mut self) {
        let mut keep: BTreeSet<u64> = self.view.last_refresh.iter().flatten().copied().collect();
        if let Some(p) = &self.pending {
            keep.extend(p.refreshed_before.iter().flatten());
        }
        self.history.retain(|f, _| keep.contains(f));
    }

    /// Processed blocks as RGB bytes, zero-padded past the image edge.
    fn block_payload(&self, frame: &GrayFrame, actions: &BlockMask) -> Vec<u8> {
        let b = self.grid.block_size as usize;
        let mut out = Vec::with_capacity(actions.popcount() * self.block_bytes);
        for idx in actions.iter_set() {
            let (cols, rows) = self.grid.block_pixels(idx);
            for r in 0..b {
                for c in 0..b {
                    let v = if rows.contains(&(rows.start + r)) && cols.contains(&(cols.start + c))
                    {
                        frame.get(cols.start + c, rows.start + r)
                    } else {
                        0
                    };
                    out.extend_from_slice(&[v, v, v]);
                }
            }
        }
        out
    }
}

/// Server-side fusion, tracking and bookkeeping for a whole run.
#[derive(Debug)]
pub struct ServerCore {
    cfg: RunConfig,
    cameras: Vec<CameraModel>,
    grid: BlockGrid,
    tracker: Tracker,
    metrics: MetricAccumulator,
    traffic: TrafficModel,
    series: Vec<FrameRecord>,
    fraction_sums: Vec<f64>,
    dropped: Vec<u64>,
}

impl ServerCore {
    pub fn new(cfg: &RunConfig) -> Result<Self, RunError> {
        let cameras = cfg.camera_models()?;
        Ok(Self {
            grid: cfg.grid()?,
            tracker: Tracker::new(cfg.tracker.clone()),
            metrics: MetricAccumulator::new(),
            traffic: TrafficModel::from_config(cfg),
            series: Vec::new(),
            fraction_sums: vec![0.0; cameras.len()],
            dropped: Vec::new(),
            cameras,
            cfg: cfg.clone(),
        })
    }

    pub fn camera_ids(&self) -> Vec<u32> {
        self.cameras.iter().map(|c| c.camera_id).collect()
    }

    /// Identities annotated in at least one view.
    pub fn ground_truth(&self, scene: &SceneFrame) -> Vec<(u32, GroundPoint)> {
        let seen: BTreeSet<u32> = self
            .cameras
            .iter()
            .flat_map(|c| {
                ground_truth_view(scene, c)
                    .entries
                    .into_iter()
                    .map(|e| e.person_id)
            })
            .collect();
        scene
            .ground_truth()
            .into_iter()
            .filter(|(id, _)| seen.contains(id))
            .collect()
    }

    /// Fuse one frame's updates (one per camera, any order) and return the
    /// feedback for every camera in id order.
    pub fn process(
        &mut self,
        scene: &SceneFrame,
        mut updates: Vec<BlockUpdate>,
    ) -> Result<Vec<ServerFeedback>, RunError> {
        updates.sort_by_key(|u| u.camera_id);
        let ids = self.camera_ids();
        if updates.iter().map(|u| u.camera_id).collect::<Vec<_>>() != ids {
            return Err(RunError::Protocol(format!(
                "frame {} needs one update from each of cameras {ids:?}",
                scene.frame_id
            )));
        }
        if let Some(u) = updates.iter().find(|u| u.frame_id != scene.frame_id) {
            return Err(RunError::Protocol(format!(
                "camera {} sent frame {} during frame {}",
                u.camera_id, u.frame_id, scene.frame_id
            )));
        }
        let views: Vec<DetectionSet> = updates
            .iter()
            .map(|u| DetectionSet {
                camera_id: u.camera_id,
                frame_id: u.frame_id,
                detections: u.detections.clone(),
            })
            .collect();
        let clusters = cluster_detections(&views, self.cfg.eps);
        let selection = assign_cameras(&clusters, self.cfg.k, &self.grid, &ids);
        let fused = fuse_ground_plane(&clusters);
        let counts: Vec<usize> = ids.iter().map(|c| selection.counts()[c]).collect();
        let taus = target_cost(&counts);

        self.tracker.predict(self.cfg.scene.dt);
        self.tracker.associate_and_update(&fused);

        let gt = self.ground_truth(scene);
        let gt_points: Vec<GroundPoint> = gt.iter().map(|g| g.1).collect();
        let fused_points: Vec<GroundPoint> = fused.iter().map(|f| f.ground).collect();
        self.metrics
            .accumulate_detection_frame(&gt_points, &fused_points, self.cfg.r_match);
        self.metrics
            .accumulate_tracking_frame(&gt, &self.tracker.reported(), self.cfg.r_match);

        let mut bytes = 0.0;
        let mut slowest: f64 = 0.0;
        let mut busiest: f64 = 0.0;
        let mut blocks = Vec::with_capacity(updates.len());
        for (i, u) in updates.iter().enumerate() {
            let b = account_traffic(u, &self.traffic);
            bytes += b;
            slowest = slowest.max(self.traffic.transmission_ms(b));
            let n = u.actions.popcount();
            busiest = busiest.max(self.traffic.compute_ms(n));
            self.fraction_sums[i] += n as f64 / u.actions.len().max(1) as f64;
            blocks.push(n as u32);
        }
        self.metrics.record_traffic(
            updates.len(),
            blocks.iter().map(|&b| b as usize).sum(),
            bytes,
        );
        self.series.push(FrameRecord {
            frame_id: scene.frame_id,
            blocks,
            bytes,
            compute_ms: busiest,
            transmission_ms: slowest,
        });

        Ok(ids
            .iter()
            .zip(&taus)
            .map(|(&c, &tau)| {
                let sel = selection.get(c).expect("every camera has a selection");
                ServerFeedback {
                    frame_id: scene.frame_id,
                    camera_id: c,
                    topk: sel.detections.iter().map(|d| d.bbox).collect(),
                    mask: sel.mask.clone(),
                    fused: fused_points.clone(),
                    tau,
                }
            })
            .collect())
    }

    /// Give up on a frame: nothing is scored and cameras get empty feedback.
    pub fn drop_frame(&mut self, frame_id: u64) -> Vec<ServerFeedback> {
        log::warn!("frame {frame_id} dropped");
        self.dropped.push(frame_id);
        self.camera_ids()
            .into_iter()
            .map(|c| ServerFeedback {
                frame_id,
                camera_id: c,
                topk: Vec::new(),
                mask: BlockMask::for_grid(&self.grid, false),
                fused: Vec::new(),
                tau: 0.0,
            })
            .collect()
    }

    pub fn frames_processed(&self) -> usize {
        self.series.len()
    }

    pub fn report(&self, complete: bool) -> Result<RunReport, MetricsError> {
        let scores = self.metrics.finalize()?;
        let n = self.series.len().max(1) as f64;
        Ok(RunReport {
            mode: self.cfg.mode,
            config_digest: self.cfg.digest(),
            seed: self.cfg.seed,
            k: self.cfg.k,
            cameras: self.camera_ids(),
            frames: self.series.len() as u64,
            complete,
            dropped_frames: self.dropped.clone(),
            processed_fraction: self.fraction_sums.iter().map(|s| s / n).collect(),
            scores,
            series: self.series.clone(),
        })
    }
}
