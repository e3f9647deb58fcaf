//! Deterministic single-process run of the whole pipeline.

use std::collections::BTreeMap;

use crate::geometry::{BlockMask, GroundPoint};
use crate::metrics::oracle_select;

use super::config::{Mode, RunConfig};
use super::node::{CameraNode, ServerCore};
use super::report::RunReport;
use super::{scene_source, RunError};

/// Union of the blocks the server assigns to each camera during a
/// full-processing pass over the first `profile_frames` frames.
pub fn profile_static_masks(cfg: &RunConfig) -> Result<BTreeMap<u32, BlockMask>, RunError> {
    let profile = RunConfig {
        mode: Mode::Full,
        frames: cfg.profile_frames.clamp(1, cfg.frames),
        ..cfg.clone()
    };
    let grid = profile.grid()?;
    let mut masks: BTreeMap<u32, BlockMask> = profile
        .camera_models()?
        .iter()
        .map(|c| (c.camera_id, BlockMask::for_grid(&grid, false)))
        .collect();
    drive(&profile, &BTreeMap::new(), |fbs| {
        for fb in fbs {
            masks
                .get_mut(&fb.camera_id)
                .expect("known camera")
                .union_with(&fb.mask);
        }
    })?;
    Ok(masks)
}

fn drive(
    cfg: &RunConfig,
    fixed: &BTreeMap<u32, BlockMask>,
    mut on_feedback: impl FnMut(&[super::wire::ServerFeedback]),
) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let mut cams: Vec<CameraNode> = cfg
        .camera_models()?
        .into_iter()
        .map(|c| {
            let id = c.camera_id;
            let node = CameraNode::new(cfg, c);
            match fixed.get(&id) {
                Some(m) => node.with_fixed_mask(m.clone()),
                None => node,
            }
        })
        .collect();
    let mut server = ServerCore::new(cfg)?;
    let grid = cfg.grid()?;
    for scene in scene_source(cfg)?.take(cfg.frames as usize) {
        let plans: Vec<Option<BlockMask>> = if cfg.mode == Mode::Oracle {
            let probes = cams
                .iter()
                .map(|c| c.probe(&scene))
                .collect::<Result<Vec<_>, _>>()?;
            let gt: Vec<GroundPoint> = server
                .ground_truth(&scene)
                .into_iter()
                .map(|g| g.1)
                .collect();
            let masks = oracle_select(&gt, &probes, cfg.k, &grid, cfg.oracle_radius);
            cams.iter()
                .map(|c| masks.get(&c.camera_id()).cloned())
                .collect()
        } else {
            vec![None; cams.len()]
        };
        let updates = cams
            .iter_mut()
            .zip(plans)
            .map(|(c, plan)| c.step(&scene, plan))
            .collect::<Result<Vec<_>, _>>()?;
        let feedback = server.process(&scene, updates)?;
        on_feedback(&feedback);
        for (cam, fb) in cams.iter_mut().zip(feedback) {
            cam.absorb(fb)?;
        }
    }
    Ok(server.report(true)?)
}

/// Simulate `cfg.frames` frames of the configured mode in one process.
pub fn run_sim(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let fixed = if cfg.mode == Mode::StaticMask {
        profile_static_masks(cfg)?
    } else {
        BTreeMap::new()
    };
    drive(cfg, &fixed, |_| {})
}
