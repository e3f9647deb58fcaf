//! Ground-truth pedestrian motion and per-view annotations.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{union_area, BBox, CameraModel, GroundPoint};
use crate::rng::StreamRng;

/// Distance at which a walker counts as having reached its waypoint.
pub const ARRIVAL_RADIUS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("frame {frame_id} lists person {person_id} more than once")]
    DuplicateIdentity { frame_id: u64, person_id: u32 },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Arena extent along x, meters.
    pub arena_x: f64,
    /// Arena extent along y, meters.
    pub arena_y: f64,
    pub pedestrians: usize,
    pub min_speed: f64,
    pub max_speed: f64,
    pub person_height: f64,
    pub person_radius: f64,
    /// Seconds between frames.
    pub dt: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            arena_x: 36.0,
            arena_y: 12.0,
            pedestrians: 20,
            min_speed: 0.5,
            max_speed: 1.5,
            person_height: 1.8,
            person_radius: 0.3,
            dt: 1.0 / 30.0,
        }
    }
}

impl SceneConfig {
    pub fn clamp_to_arena(&self, p: GroundPoint) -> GroundPoint {
        GroundPoint::new(p.x.clamp(0.0, self.arena_x), p.y.clamp(0.0, self.arena_y))
    }

    fn random_point(&self, rng: &mut StreamRng) -> GroundPoint {
        GroundPoint::new(
            rng.gen::<f64>() * self.arena_x,
            rng.gen::<f64>() * self.arena_y,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub person_id: u32,
    pub position: GroundPoint,
    /// Last displacement divided by the step, m/s.
    pub velocity: Vector2<f64>,
    pub waypoint: GroundPoint,
    /// Walking speed toward the waypoint, m/s.
    pub speed: f64,
    pub height: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub frame_id: u64,
    pub timestamp: f64,
    pub pedestrians: Vec<Pedestrian>,
}

impl SceneFrame {
    pub fn ground_truth(&self) -> Vec<(u32, GroundPoint)> {
        self.pedestrians
            .iter()
            .map(|p| (p.person_id, p.position))
            .collect()
    }
}

/// Random-waypoint population, uniformly placed in the arena.
pub fn spawn_scene(cfg: &SceneConfig, rng: &mut StreamRng) -> SceneFrame {
    let lo = cfg.min_speed.min(cfg.max_speed);
    let pedestrians = (0..cfg.pedestrians)
        .map(|i| {
            let position = cfg.random_point(rng);
            let waypoint = cfg.random_point(rng);
            let speed = lo + rng.gen::<f64>() * (cfg.max_speed - lo);
            Pedestrian {
                person_id: i as u32,
                position,
                velocity: Vector2::zeros(),
                waypoint,
                speed,
                height: cfg.person_height,
                radius: cfg.person_radius,
            }
        })
        .collect();
    SceneFrame {
        frame_id: 0,
        timestamp: 0.0,
        pedestrians,
    }
}

/// Advance every walker by `dt` toward its waypoint.
pub fn step_scene(
    scene: &SceneFrame,
    cfg: &SceneConfig,
    dt: f64,
    rng: &mut StreamRng,
) -> SceneFrame {
    assert!(dt > 0.0, "dt must be positive");
    let pedestrians = scene
        .pedestrians
        .iter()
        .map(|p| {
            let mut next = p.clone();
            let to_goal = Vector2::new(p.waypoint.x - p.position.x, p.waypoint.y - p.position.y);
            let dist = to_goal.norm();
            if dist < ARRIVAL_RADIUS {
                next.waypoint = cfg.random_point(rng);
                next.velocity = Vector2::zeros();
                return next;
            }
            let travel = (p.speed.min(cfg.max_speed) * dt).min(dist);
            let moved = to_goal * (travel / dist);
            next.position = cfg.clamp_to_arena(GroundPoint::new(
                p.position.x + moved.x,
                p.position.y + moved.y,
            ));
            next.velocity = Vector2::new(
                next.position.x - p.position.x,
                next.position.y - p.position.y,
            ) / dt;
            next
        })
        .collect();
    SceneFrame {
        frame_id: scene.frame_id + 1,
        timestamp: scene.timestamp + dt,
        pedestrians,
    }
}

/// Deterministic frame source: a seeded synthetic crowd or a replayed file.
#[derive(Debug, Clone)]
pub enum SceneSequence {
    Synthetic {
        cfg: SceneConfig,
        rng: StreamRng,
        next: Option<SceneFrame>,
    },
    Replay {
        frames: Vec<SceneFrame>,
        cursor: usize,
    },
}

impl SceneSequence {
    pub fn synthetic(cfg: SceneConfig, mut rng: StreamRng) -> Self {
        let first = spawn_scene(&cfg, &mut rng);
        Self::Synthetic {
            cfg,
            rng,
            next: Some(first),
        }
    }

    pub fn replay(frames: Vec<SceneFrame>) -> Self {
        Self::Replay { frames, cursor: 0 }
    }
}

impl Iterator for SceneSequence {
    type Item = SceneFrame;

    fn next(&mut self) -> Option<SceneFrame> {
        match self {
            Self::Synthetic { cfg, rng, next } => {
                let current = next.take()?;
                *next = Some(step_scene(&current, cfg, cfg.dt, rng));
                Some(current)
            }
            Self::Replay { frames, cursor } => {
                let f = frames.get(*cursor).cloned();
                *cursor += 1;
                f
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEntry {
    pub person_id: u32,
    pub bbox: BBox,
    /// Fraction of the box not hidden by nearer people.
    pub visibility: f64,
    pub ground: GroundPoint,
    /// Distance from the camera centre to the person's axis at mid height.
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtView {
    pub camera_id: u32,
    pub entries: Vec<GtEntry>,
}

const SILHOUETTE_SAMPLES: usize = 16;

/// Image box of an upright cylinder. Horizontal extent comes from the
/// silhouette, the top from the head circle and the bottom from the ground
/// contact point, so the box foot maps back onto the person's position.
pub fn cylinder_bbox(
    cam: &CameraModel,
    ground: GroundPoint,
    height: f64,
    radius: f64,
) -> Option<BBox> {
    let foot = cam
        .project_world(&Vector3::new(ground.x, ground.y, 0.0))
        .ok()?;
    let (mut umin, mut umax, mut vtop) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..SILHOUETTE_SAMPLES {
        let a = std::f64::consts::TAU * k as f64 / SILHOUETTE_SAMPLES as f64;
        let (dx, dy) = (radius * a.cos(), radius * a.sin());
        for z in [0.0, height] {
            let q = cam
                .project_world(&Vector3::new(ground.x + dx, ground.y + dy, z))
                .ok()?;
            umin = umin.min(q.u);
            umax = umax.max(q.u);
            if z > 0.0 {
                vtop = vtop.min(q.v);
            }
        }
    }
    // Symmetric about the contact point so the bottom centre lands on it.
    let half = (foot.u - umin).max(umax - foot.u);
    (half > 0.0 && foot.v > vtop)
        .then(|| BBox::from_corners(foot.u - half, vtop, foot.u + half, foot.v))
}

/// Annotate one camera's view of a scene.
///
/// People whose feet fall outside the image or whose box leaves the image
/// horizontally are omitted; boxes are clipped at the top edge.
pub fn ground_truth_view(scene: &SceneFrame, cam: &CameraModel) -> GtView {
    let centre = cam.center();
    let mut visible: Vec<GtEntry> = Vec::new();
    for p in &scene.pedestrians {
        let Some(raw) = cylinder_bbox(cam, p.position, p.height, p.radius) else {
            continue;
        };
        if !cam.in_image(raw.foot())
            || raw.x < 0.0
            || raw.right() > cam.width()
            || raw.bottom() > cam.height()
        {
            continue;
        }
        let Some(bbox) = raw.clamp_to(cam.width(), cam.height()) else {
            continue;
        };
        let range = (Vector3::new(p.position.x, p.position.y, 0.5 * p.height) - centre).norm();
        visible.push(GtEntry {
            person_id: p.person_id,
            bbox,
            visibility: 1.0,
            ground: p.position,
            range,
        });
    }
    let occluders: Vec<(f64, BBox)> = visible.iter().map(|e| (e.range, e.bbox)).collect();
    for e in &mut visible {
        let covering: Vec<BBox> = occluders
            .iter()
            .filter(|(r, _)| *r < e.range)
            .filter_map(|(_, b)| b.intersection(&e.bbox))
            .collect();
        let hidden = union_area(&covering);
        e.visibility = (1.0 - hidden / e.bbox.area()).clamp(0.0, 1.0);
    }
    GtView {
        camera_id: cam.camera_id,
        entries: visible,
    }
}

/// Parse `frame_id person_id x y` records. Blank lines and `#` comments are
/// skipped. `dt` sets the timestamps.
pub fn parse_trajectories(
    text: &str,
    dt: f64,
    cfg: &SceneConfig,
) -> Result<Vec<SceneFrame>, SceneError> {
    let mut frames: BTreeMap<u64, BTreeMap<u32, GroundPoint>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(SceneError::Parse {
                line: line_no,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str, v: &str| SceneError::Parse {
            line: line_no,
            message: format!("bad {what} {v:?}"),
        };
        let frame_id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err("frame id", fields[0]))?;
        let person_id: u32 = fields[1]
            .parse()
            .map_err(|_| parse_err("person id", fields[1]))?;
        let x: f64 = fields[2].parse().map_err(|_| parse_err("x", fields[2]))?;
        let y: f64 = fields[3].parse().map_err(|_| parse_err("y", fields[3]))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err("coordinate", content));
        }
        if frames
            .entry(frame_id)
            .or_default()
            .insert(person_id, GroundPoint::new(x, y))
            .is_some()
        {
            return Err(SceneError::DuplicateIdentity {
                frame_id,
                person_id,
            });
        }
    }
    let mut out: Vec<SceneFrame> = Vec::with_capacity(frames.len());
    let mut last: BTreeMap<u32, GroundPoint> = BTreeMap::new();
    for (frame_id, people) in frames {
        let pedestrians = people
            .iter()
            .map(|(&person_id, &position)| {
                let velocity = last.get(&person_id).map_or(Vector2::zeros(), |prev| {
                    Vector2::new(position.x - prev.x, position.y - prev.y) / dt
                });
                Pedestrian {
                    person_id,
                    position,
                    velocity,
                    waypoint: position,
                    speed: velocity.norm(),
                    height: cfg.person_height,
                    radius: cfg.person_radius,
                }
            })
            .collect();
        last = people;
        out.push(SceneFrame {
            frame_id,
            timestamp: frame_id as f64 * dt,
            pedestrians,
        });
    }
    Ok(out)
}

pub fn load_trajectories(
    path: impl AsRef<Path>,
    dt: f64,
    cfg: &SceneConfig,
) -> Result<Vec<SceneFrame>, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trajectories(&text, dt, cfg)
}
