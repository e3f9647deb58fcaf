//! Cross-camera object association and top-K camera assignment.
//!
//! Detections are grouped view by view: the first view seeds one cluster per
//! detection, and every following view is matched against the current
//! cluster centres on the ground plane. Matched detections join their
//! cluster, the rest open new ones. Afterwards each cluster keeps its `K`
//! members with the largest boxes, which decides the objects (and blocks)
//! every camera stays responsible for.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::{Detection, DetectionSet};
use crate::geometry::{BlockGrid, BlockMask, GroundPoint};
use crate::hungarian::min_cost_assignment;

/// Result of a gated bipartite matching.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BipartiteMatch {
    pub matched: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Optimal one-to-one matching keeping only pairs with cost below `eps`.
///
/// Costs are capped at `eps` before solving, so an unmatched element costs
/// exactly `eps` and far-away pairs cannot distort the assignment of the
/// close ones.
pub fn match_bipartite(cost: &[Vec<f64>], eps: f64) -> BipartiteMatch {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let pairs = min_cost_assignment(rows, cols, |r, c| cost[r][c].min(eps));
    let matched: Vec<(usize, usize)> = pairs
        .into_iter()
        .filter(|&(r, c)| cost[r][c] < eps)
        .collect();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &matched {
        row_used[r] = true;
        col_used[c] = true;
    }
    BipartiteMatch {
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        matched,
    }
}

/// Detections believed to be one person, at most one per camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<Detection>,
    pub center: GroundPoint,
}

impl Cluster {
    pub fn new(members: Vec<Detection>) -> Self {
        let center = GroundPoint::mean(members.iter().map(|d| &d.ground)).unwrap_or_default();
        Self { members, center }
    }

    fn recompute_center(&mut self) {
        if let Some(c) = GroundPoint::mean(self.members.iter().map(|d| &d.ground)) {
            self.center = c;
        }
    }

    pub fn has_camera(&self, camera_id: u32) -> bool {
        self.members.iter().any(|d| d.camera_id == camera_id)
    }
}

/// Group detections from all views into identity clusters.
///
/// Views are visited in ascending camera order regardless of input order.
pub fn cluster_detections(views: &[DetectionSet], eps: f64) -> Vec<Cluster> {
    let mut order: Vec<&DetectionSet> = views.iter().collect();
    order.sort_by_key(|v| v.camera_id);
    let mut clusters: Vec<Cluster> = Vec::new();
    for view in order {
        let cost: Vec<Vec<f64>> = clusters
            .iter()
            .map(|c| {
                view.detections
                    .iter()
                    .map(|d| c.center.distance(&d.ground))
                    .collect()
            })
            .collect();
        let m = if clusters.is_empty() {
            BipartiteMatch {
                unmatched_cols: (0..view.detections.len()).collect(),
                ..BipartiteMatch::default()
            }
        } else {
            match_bipartite(&cost, eps)
        };
        for &(p, q) in &m.matched {
            clusters[p].members.push(view.detections[q].clone());
            clusters[p].recompute_center();
        }
        for &u in &m.unmatched_cols {
            clusters.push(Cluster::new(vec![view.detections[u].clone()]));
        }
    }
    clusters
}

/// Objects and blocks assigned to one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSelection {
    /// Selected detections (the camera's top-K share).
    pub detections: Vec<Detection>,
    /// Blocks overlapping any selected detection.
    pub mask: BlockMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKSelection {
    pub per_camera: BTreeMap<u32, CameraSelection>,
}

impl TopKSelection {
    pub fn get(&self, camera_id: u32) -> Option<&CameraSelection> {
        self.per_camera.get(&camera_id)
    }

    pub fn counts(&self) -> BTreeMap<u32, usize> {
        self.per_camera
            .iter()
            .map(|(&c, s)| (c, s.detections.len()))
            .collect()
    }
}

/// Keep the `k` largest-box members of every cluster (ties: lower camera id)
/// and build each camera's selection. Every id in `camera_ids` gets an entry.
pub fn assign_cameras(
    clusters: &[Cluster],
    k: usize,
    grid: &BlockGrid,
    camera_ids: &[u32],
) -> TopKSelection {
    assert!(k >= 1, "K must be at least 1");
    let mut per_camera: BTreeMap<u32, CameraSelection> = camera_ids
        .iter()
        .map(|&c| {
            (
                c,
                CameraSelection {
                    detections: Vec::new(),
                    mask: BlockMask::for_grid(grid, false),
                },
            )
        })
        .collect();
    for cluster in clusters {
        let mut ranked: Vec<&Detection> = cluster.members.iter().collect();
        ranked.sort_by(|a, b| {
            b.bbox
                .area()
                .total_cmp(&a.bbox.area())
                .then(a.camera_id.cmp(&b.camera_id))
        });
        for det in ranked.into_iter().take(k) {
            let sel = per_camera
                .entry(det.camera_id)
                .or_insert_with(|| CameraSelection {
                    detections: Vec::new(),
                    mask: BlockMask::for_grid(grid, false),
                });
            for idx in grid.blocks_for_bbox(&det.bbox) {
                sel.mask.set(idx, true);
            }
            sel.detections.push(det.clone());
        }
    }
    TopKSelection { per_camera }
}
