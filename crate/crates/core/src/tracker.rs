//! Ground-plane tracker: constant-velocity Kalman filter per trajectory,
//! square-IoU association against fused detections.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::detector::FusedDetection;
use crate::geometry::{BBox, GroundPoint};
use crate::hungarian::min_cost_assignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Side of the square drawn around each position, meters.
    pub square_side: f64,
    /// Pairs must exceed this IoU to match.
    pub iou_threshold: f64,
    /// Process noise spectral density (acceleration variance).
    pub process_noise: f64,
    /// Measurement noise variance per axis, m^2.
    pub measurement_noise: f64,
    pub initial_position_var: f64,
    pub initial_velocity_var: f64,
    pub max_misses: u32,
    pub min_hits: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            // Five ground cells of 2.5 cm.
            square_side: 5.0 * 0.025,
            iou_threshold: 0.5,
            process_noise: 1.0,
            measurement_noise: 0.01,
            initial_position_var: 0.01,
            initial_velocity_var: 4.0,
            max_misses: 10,
            min_hits: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    /// `(x, y, vx, vy)`.
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub age: u32,
    pub misses: u32,
    pub hits: u32,
    /// Seconds predicted since the track was spawned.
    pub elapsed: f64,
}

impl Track {
    pub fn position(&self) -> GroundPoint {
        GroundPoint::new(self.state[0], self.state[1])
    }
}

/// Axis-aligned square of side `side` centred on a ground point.
pub fn ground_square(p: GroundPoint, side: f64) -> BBox {
    BBox::new(p.x - 0.5 * side, p.y - 0.5 * side, side, side)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub track_id: u64,
    pub position: GroundPoint,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    frames: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            tracks: Vec::new(),
            next_id: 0,
            frames: 0,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Constant-velocity prediction of every track over `dt` seconds.
    pub fn predict(&mut self, dt: f64) {
        assert!(dt > 0.0, "dt must be positive");
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let q = self.cfg.process_noise;
        let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
        #[rustfmt::skip]
        let noise = Matrix4::new(
            dt4 / 4.0, 0.0,       dt3 / 2.0, 0.0,
            0.0,       dt4 / 4.0, 0.0,       dt3 / 2.0,
            dt3 / 2.0, 0.0,       dt2,       0.0,
            0.0,       dt3 / 2.0, 0.0,       dt2,
        ) * q;
        for t in &mut self.tracks {
            t.state = f * t.state;
            t.covariance = f * t.covariance * f.transpose() + noise;
            t.covariance = 0.5 * (t.covariance + t.covariance.transpose());
            t.age += 1;
            t.elapsed += dt;
        }
    }

    fn spawn(&mut self, p: GroundPoint) {
        let mut cov = Matrix4::zeros();
        cov[(0, 0)] = self.cfg.initial_position_var;
        cov[(1, 1)] = self.cfg.initial_position_var;
        cov[(2, 2)] = self.cfg.initial_velocity_var;
        cov[(3, 3)] = self.cfg.initial_velocity_var;
        self.tracks.push(Track {
            track_id: self.next_id,
            state: Vector4::new(p.x, p.y, 0.0, 0.0),
            covariance: cov,
            age: 0,
            misses: 0,
            hits: 1,
            elapsed: 0.0,
        });
        self.next_id += 1;
    }

    /// Second observation of a track: velocity from the two positions.
    fn initiate(track: &mut Track, z: GroundPoint, pos_var: f64) {
        let dt = track.elapsed;
        let origin = track.position();
        track.state = Vector4::new(z.x, z.y, (z.x - origin.x) / dt, (z.y - origin.y) / dt);
        let vel_var = 2.0 * pos_var / (dt * dt);
        track.covariance =
            Matrix4::from_diagonal(&Vector4::new(pos_var, pos_var, vel_var, vel_var));
        track.covariance[(0, 2)] = pos_var / dt;
        track.covariance[(2, 0)] = pos_var / dt;
        track.covariance[(1, 3)] = pos_var / dt;
        track.covariance[(3, 1)] = pos_var / dt;
    }

    fn correct(track: &mut Track, z: GroundPoint, r: f64) {
        let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        let s = h * track.covariance * h.transpose() + Matrix2::identity() * r;
        let Some(s_inv) = s.try_inverse() else {
            return;
        };
        let k: Matrix4x2<f64> = track.covariance * h.transpose() * s_inv;
        let innovation = Vector2::new(z.x, z.y) - h * track.state;
        track.state += k * innovation;
        // Joseph form keeps the covariance symmetric positive semi-definite.
        let ikh = Matrix4::identity() - k * h;
        track.covariance = ikh * track.covariance * ikh.transpose()
            + k * (Matrix2::identity() * r) * k.transpose();
        track.covariance = 0.5 * (track.covariance + track.covariance.transpose());
    }

    /// Match predicted tracks to detections, update, spawn and retire.
    pub fn associate_and_update(&mut self, detections: &[FusedDetection]) {
        self.frames += 1;
        let side = self.cfg.square_side;
        let iou: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .map(|t| {
                let a = ground_square(t.position(), side);
                detections
                    .iter()
                    .map(|d| a.iou(&ground_square(d.ground, side)))
                    .collect()
            })
            .collect();
        let pairs =
            min_cost_assignment(self.tracks.len(), detections.len(), |r, c| 1.0 - iou[r][c]);
        let mut track_hit = vec![false; self.tracks.len()];
        let mut det_used = vec![false; detections.len()];
        for (r, c) in pairs {
            if iou[r][c] > self.cfg.iou_threshold {
                track_hit[r] = true;
                det_used[c] = true;
                let t = &mut self.tracks[r];
                if t.hits == 1 && t.elapsed > 0.0 {
                    Self::initiate(t, detections[c].ground, self.cfg.initial_position_var);
                } else {
                    Self::correct(t, detections[c].ground, self.cfg.measurement_noise);
                }
                t.hits += 1;
                t.misses = 0;
            }
        }
        for (t, hit) in self.tracks.iter_mut().zip(&track_hit) {
            if !hit {
                t.misses += 1;
            }
        }
        let max_misses = self.cfg.max_misses;
        self.tracks.retain(|t| t.misses <= max_misses);
        for (d, used) in detections.iter().zip(det_used) {
            if !used {
                self.spawn(d.ground);
            }
        }
    }

    /// Tracks confirmed by enough hits and seen this frame. During the first
    /// `min_hits` frames of a run every live track is reported.
    pub fn reported(&self) -> Vec<TrackReport> {
        let warmup = self.frames <= self.cfg.min_hits as u64;
        self.tracks
            .iter()
            .filter(|t| t.misses == 0 && (warmup || t.hits >= self.cfg.min_hits))
            .map(|t| TrackReport {
                track_id: t.track_id,
                position: t.position(),
            })
            .collect()
    }
}
