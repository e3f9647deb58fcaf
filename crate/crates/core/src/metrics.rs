//! Detection and tracking scores on the ground plane, plus the
//! ground-truth Oracle block selector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::match_bipartite;
use crate::detector::DetectionSet;
use crate::geometry::{BlockGrid, BlockMask, GroundPoint};
use crate::hungarian::min_cost_assignment;
use crate::tracker::TrackReport;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no frames were accumulated")]
    EmptyRun,
}

fn distance_matrix(a: &[GroundPoint], b: &[GroundPoint]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|p| b.iter().map(|q| p.distance(q)).collect())
        .collect()
}

/// Running totals for one evaluation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricAccumulator {
    pub frames: u64,
    pub gt: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Sum of `1 - d / r` over detection matches.
    pub overlap_sum: f64,

    pub track_frames: u64,
    pub track_gt: u64,
    pub track_tp: u64,
    pub track_fp: u64,
    pub track_fn: u64,
    pub idsw: u64,
    last_track_of: BTreeMap<u32, u64>,
    /// Frames in which a GT identity and a track were within the radius.
    pair_hits: BTreeMap<(u32, u64), u64>,
    track_total: u64,

    pub blocks: u64,
    pub camera_frames: u64,
    pub bytes: f64,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate_detection_frame(
        &mut self,
        gt: &[GroundPoint],
        detections: &[GroundPoint],
        r_match: f64,
    ) {
        assert!(r_match > 0.0, "match radius must be positive");
        let m = match_bipartite(&distance_matrix(gt, detections), r_match);
        self.frames += 1;
        self.gt += gt.len() as u64;
        self.tp += m.matched.len() as u64;
        self.fn_ += m.unmatched_rows.len() as u64;
        self.fp += m.unmatched_cols.len() as u64;
        for &(g, d) in &m.matched {
            self.overlap_sum += 1.0 - gt[g].distance(&detections[d]) / r_match;
        }
    }

    /// Correspondences from the previous frame are kept while the pair is
    /// still within `r_match`; the rest are matched optimally.
    pub fn accumulate_tracking_frame(
        &mut self,
        gt: &[(u32, GroundPoint)],
        tracks: &[TrackReport],
        r_match: f64,
    ) {
        assert!(r_match > 0.0, "match radius must be positive");
        let gt_pts: Vec<GroundPoint> = gt.iter().map(|g| g.1).collect();
        let tr_pts: Vec<GroundPoint> = tracks.iter().map(|t| t.position).collect();
        let dist = distance_matrix(&gt_pts, &tr_pts);

        let mut matched: Vec<(usize, usize)> = Vec::new();
        let mut gt_used = vec![false; gt.len()];
        let mut tr_used = vec![false; tracks.len()];
        for (g, (gid, _)) in gt.iter().enumerate() {
            let Some(&tid) = self.last_track_of.get(gid) else {
                continue;
            };
            if let Some(t) = tracks.iter().position(|t| t.track_id == tid) {
                if dist[g][t] < r_match && !tr_used[t] {
                    matched.push((g, t));
                    gt_used[g] = true;
                    tr_used[t] = true;
                }
            }
        }
        let free_g: Vec<usize> = (0..gt.len()).filter(|&g| !gt_used[g]).collect();
        let free_t: Vec<usize> = (0..tracks.len()).filter(|&t| !tr_used[t]).collect();
        let sub: Vec<Vec<f64>> = free_g
            .iter()
            .map(|&g| free_t.iter().map(|&t| dist[g][t]).collect())
            .collect();
        matched.extend(
            match_bipartite(&sub, r_match)
                .matched
                .into_iter()
                .map(|(g, t)| (free_g[g], free_t[t])),
        );

        self.track_frames += 1;
        self.track_gt += gt.len() as u64;
        self.track_tp += matched.len() as u64;
        self.track_fn += (gt.len() - matched.len()) as u64;
        self.track_fp += (tracks.len() - matched.len()) as u64;
        for &(g, t) in &matched {
            let (gid, tid) = (gt[g].0, tracks[t].track_id);
            if let Some(prev) = self.last_track_of.insert(gid, tid) {
                if prev != tid {
                    self.idsw += 1;
                }
            }
        }
        for (g, row) in dist.iter().enumerate() {
            for (t, &d) in row.iter().enumerate() {
                if d < r_match {
                    *self
                        .pair_hits
                        .entry((gt[g].0, tracks[t].track_id))
                        .or_default() += 1;
                }
            }
        }
        self.track_total += tracks.len() as u64;
    }

    pub fn record_traffic(&mut self, cameras: usize, blocks: usize, bytes: f64) {
        self.camera_frames += cameras as u64;
        self.blocks += blocks as u64;
        self.bytes += bytes;
    }

    /// Identity tallies from the best global GT-identity to track-identity
    /// assignment: `(IDTP, IDFP, IDFN)`.
    pub fn identity_counts(&self) -> (u64, u64, u64) {
        let mut gt_ids: Vec<u32> = self.pair_hits.keys().map(|k| k.0).collect();
        let mut tr_ids: Vec<u64> = self.pair_hits.keys().map(|k| k.1).collect();
        gt_ids.sort_unstable();
        gt_ids.dedup();
        tr_ids.sort_unstable();
        tr_ids.dedup();
        let hits =
            |g: usize, t: usize| *self.pair_hits.get(&(gt_ids[g], tr_ids[t])).unwrap_or(&0) as f64;
        let idtp: u64 = min_cost_assignment(gt_ids.len(), tr_ids.len(), |g, t| -hits(g, t))
            .into_iter()
            .map(|(g, t)| hits(g, t) as u64)
            .sum();
        (idtp, self.track_total - idtp, self.track_gt - idtp)
    }

    pub fn finalize(&self) -> Result<MetricsReport, MetricsError> {
        if self.frames == 0 && self.track_frames == 0 {
            return Err(MetricsError::EmptyRun);
        }
        let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
        let (idtp, idfp, idfn) = self.identity_counts();
        Ok(MetricsReport {
            frames: self.frames.max(self.track_frames),
            moda: ratio((self.fp + self.fn_) as f64, self.gt as f64).map(|r| 1.0 - r),
            modp: Some(self.overlap_sum / self.tp.max(1) as f64),
            precision: ratio(self.tp as f64, (self.tp + self.fp) as f64),
            recall: ratio(self.tp as f64, (self.tp + self.fn_) as f64),
            mota: ratio(
                (self.track_fp + self.track_fn + self.idsw) as f64,
                self.track_gt as f64,
            )
            .map(|r| 1.0 - r),
            idf1: ratio(2.0 * idtp as f64, (2 * idtp + idfp + idfn) as f64),
            id_switches: self.idsw,
            blocks_per_frame: ratio(self.blocks as f64, self.camera_frames as f64).unwrap_or(0.0),
            total_blocks_per_frame: ratio(
                self.blocks as f64,
                self.frames.max(self.track_frames) as f64,
            )
            .unwrap_or(0.0),
            mb_per_frame: ratio(self.bytes / 1e6, self.frames.max(self.track_frames) as f64)
                .unwrap_or(0.0),
        })
    }
}

/// Final scores; ratios with a zero denominator are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: u64,
    pub moda: Option<f64>,
    pub modp: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mota: Option<f64>,
    pub idf1: Option<f64>,
    pub id_switches: u64,
    /// Processed blocks per camera and frame.
    pub blocks_per_frame: f64,
    /// Processed blocks summed over cameras, per frame.
    pub total_blocks_per_frame: f64,
    pub mb_per_frame: f64,
}

/// Ground-truth Oracle: for each target keep the `k` views whose matched
/// detection lies closest to the true position, and process only the
/// blocks of those detections.
///
/// Each view is matched to the ground truth independently (optimal
/// assignment gated at `radius`). Ties prefer the lower camera id.
pub fn oracle_select(
    gt: &[GroundPoint],
    views: &[DetectionSet],
    k: usize,
    grid: &BlockGrid,
    radius: f64,
) -> BTreeMap<u32, BlockMask> {
    let mut masks: BTreeMap<u32, BlockMask> = views
        .iter()
        .map(|v| (v.camera_id, BlockMask::for_grid(grid, false)))
        .collect();
    // Per target: (distance, camera, detection index).
    let mut candidates: Vec<Vec<(f64, u32, usize)>> = vec![Vec::new(); gt.len()];
    for v in views {
        let pts: Vec<GroundPoint> = v.detections.iter().map(|d| d.ground).collect();
        let dist = distance_matrix(gt, &pts);
        for (g, d) in match_bipartite(&dist, radius).matched {
            candidates[g].push((dist[g][d], v.camera_id, d));
        }
    }
    // Nanometre resolution.
    let quantized = |d: f64| (d * 1e9).round();
    for mut c in candidates {
        c.sort_by(|a, b| {
            quantized(a.0)
                .total_cmp(&quantized(b.0))
                .then(a.1.cmp(&b.1))
        });
        for (_, cam, d) in c.into_iter().take(k) {
            let view = views
                .iter()
                .find(|v| v.camera_id == cam)
                .expect("candidate from a listed view");
            let mask = masks.get_mut(&cam).expect("mask for every view");
            for idx in grid.blocks_for_bbox(&view.detections[d].bbox) {
                mask.set(idx, true);
            }
        }
    }
    masks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Detection;
    use crate::geometry::BBox;
    use approx::assert_abs_diff_eq;

    fn pts(v: &[(f64, f64)]) -> Vec<GroundPoint> {
        v.iter().map(|&(x, y)| GroundPoint::new(x, y)).collect()
    }

    #[test]
    fn perfect_detection_frame() {
        let mut acc = MetricAccumulator::new();
        let g = pts(&[(0.0, 0.0), (3.0, 1.0)]);
        acc.accumulate_detection_frame(&g, &g, 0.5);
        assert_eq!((acc.tp, acc.fp, acc.fn_), (2, 0, 0));
        assert_abs_diff_eq!(acc.overlap_sum, 2.0);
    }

    #[test]
    fn all_missed() {
        let mut acc = MetricAccumulator::new();
        acc.accumulate_detection_frame(&pts(&[(0.0, 0.0); 5]), &[], 0.5);
        assert_eq!(acc.fn_, 5);
        assert_eq!(acc.tp + acc.fn_, acc.gt);
    }

    #[test]
    fn hand_matched_frame() {
        let mut acc = MetricAccumulator::new();
        acc.accumulate_detection_frame(
            &pts(&[(0.0, 0.0), (10.0, 0.0)]),
            &pts(&[(0.25, 0.0), (9.0, 0.0)]),
            0.5,
        );
        assert_eq!((acc.tp, acc.fp, acc.fn_), (1, 1, 1));
        assert_abs_diff_eq!(acc.overlap_sum, 0.5);
        let r = acc.finalize().unwrap();
        assert_abs_diff_eq!(r.moda.unwrap(), 0.0);
        assert_abs_diff_eq!(r.modp.unwrap(), 0.5);
        assert_abs_diff_eq!(r.precision.unwrap(), 0.5);
        assert_abs_diff_eq!(r.recall.unwrap(), 0.5);
    }

    fn tracks(v: &[(u64, f64)]) -> Vec<TrackReport> {
        v.iter()
            .map(|&(id, x)| TrackReport {
                track_id: id,
                position: GroundPoint::new(x, 0.0),
            })
            .collect()
    }

    #[test]
    fn perfect_tracking() {
        let mut acc = MetricAccumulator::new();
        let gt: Vec<(u32, GroundPoint)> = (0..10)
            .map(|i| (i, GroundPoint::new(i as f64 * 2.0, 0.0)))
            .collect();
        let tr = tracks(
            &(0..10)
                .map(|i| (i as u64 + 100, i as f64 * 2.0))
                .collect::<Vec<_>>(),
        );
        for _ in 0..2 {
            acc.accumulate_tracking_frame(&gt, &tr, 0.5);
        }
        let r = acc.finalize().unwrap();
        assert_eq!(r.mota, Some(1.0));
        assert_eq!(r.idf1, Some(1.0));
    }

    #[test]
    fn mota_from_counts() {
        let acc = MetricAccumulator {
            track_frames: 2,
            track_gt: 20,
            track_fp: 1,
            track_fn: 2,
            ..MetricAccumulator::default()
        };
        assert_abs_diff_eq!(acc.finalize().unwrap().mota.unwrap(), 0.85, epsilon = 1e-12);
    }

    #[test]
    fn idf1_from_counts() {
        // 10 GT observations of one identity, 10 track observations; the
        // identity is covered by track 1 for 8 frames and by track 2 for 2.
        let mut acc = MetricAccumulator::new();
        let gt = [(0u32, GroundPoint::new(0.0, 0.0))];
        for k in 0..10 {
            let id = if k < 8 { 1 } else { 2 };
            acc.accumulate_tracking_frame(&gt, &tracks(&[(id, 0.0)]), 0.5);
        }
        assert_eq!(acc.identity_counts(), (8, 2, 2));
        let r = acc.finalize().unwrap();
        assert_abs_diff_eq!(r.idf1.unwrap(), 0.8, epsilon = 1e-12);
        assert_eq!(r.id_switches, 1);
        assert_abs_diff_eq!(r.mota.unwrap(), 1.0 - 1.0 / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn valid_correspondence_survives_a_closer_newcomer() {
        let mut acc = MetricAccumulator::new();
        let gt = [(0u32, GroundPoint::new(0.0, 0.0))];
        acc.accumulate_tracking_frame(&gt, &tracks(&[(1, 0.3)]), 0.5);
        acc.accumulate_tracking_frame(&gt, &tracks(&[(1, 0.3), (2, 0.0)]), 0.5);
        assert_eq!(acc.idsw, 0);
        assert_eq!((acc.track_tp, acc.track_fp), (2, 1));
        // Once the old track drifts out of range the identity moves on.
        acc.accumulate_tracking_frame(&gt, &tracks(&[(1, 0.9), (2, 0.0)]), 0.5);
        assert_eq!(acc.idsw, 1);
    }

    #[test]
    fn empty_and_degenerate_runs() {
        assert_eq!(
            MetricAccumulator::new().finalize(),
            Err(MetricsError::EmptyRun)
        );
        let mut acc = MetricAccumulator::new();
        acc.accumulate_detection_frame(&[], &[], 0.5);
        acc.accumulate_tracking_frame(&[], &[], 0.5);
        let r = acc.finalize().unwrap();
        assert_eq!(r.moda, None);
        assert_eq!(r.mota, None);
    }

    #[test]
    fn micro_scenario_precision_recall() {
        // Three frames, counted by hand: TP 2+1+2, FP 0+1+1, FN 1+1+0.
        let mut acc = MetricAccumulator::new();
        let g = pts(&[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)]);
        acc.accumulate_detection_frame(&g, &pts(&[(0.1, 0.0), (5.0, 0.2)]), 0.5);
        acc.accumulate_detection_frame(&g[..2], &pts(&[(0.0, 0.0), (20.0, 0.0)]), 0.5);
        acc.accumulate_detection_frame(&g[1..], &pts(&[(5.0, 0.0), (10.0, 0.4), (7.0, 7.0)]), 0.5);
        let r = acc.finalize().unwrap();
        assert_eq!((acc.tp, acc.fp, acc.fn_), (5, 2, 2));
        assert_abs_diff_eq!(r.precision.unwrap(), 5.0 / 7.0);
        assert_abs_diff_eq!(r.recall.unwrap(), 5.0 / 7.0);
        assert_abs_diff_eq!(r.moda.unwrap(), 1.0 - 4.0 / 7.0);
    }

    fn view(camera_id: u32, x: f64, col: f64) -> DetectionSet {
        DetectionSet {
            camera_id,
            frame_id: 0,
            detections: vec![Detection {
                camera_id,
                bbox: BBox::new(col, 10.0, 20.0, 50.0),
                ground: GroundPoint::new(x, 0.0),
                score: 1.0,
                stale: false,
            }],
        }
    }

    #[test]
    fn oracle_keeps_closest_views() {
        let grid = BlockGrid::new(1152, 640, 128);
        let gt = [GroundPoint::new(0.0, 0.0)];
        let views = [view(0, 0.2, 10.0), view(1, 0.1, 300.0), view(2, 0.5, 600.0)];
        let m1 = oracle_select(&gt, &views, 1, &grid, 1.0);
        assert_eq!(m1[&0].popcount(), 0);
        assert_eq!(m1[&1].popcount(), 1);
        assert_eq!(m1[&2].popcount(), 0);
        let m3 = oracle_select(&gt, &views, 3, &grid, 1.0);
        assert!(m3.values().all(|m| m.popcount() == 1));
        let m2 = oracle_select(&gt, &views, 2, &grid, 1.0);
        for c in 0..3 {
            assert!(m1[&c].is_subset_of(&m2[&c]));
            assert!(m2[&c].is_subset_of(&m3[&c]));
        }
    }
}
