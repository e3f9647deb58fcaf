//! Per-camera block-selection agent trained online with REINFORCE.
//!
//! The policy is logistic-linear over a handful of per-block features with
//! weights shared across blocks. Each block's action is an independent
//! Bernoulli draw. Rewards combine a multi-view information gain (masked by
//! the blocks the server assigned to this camera) with a view-level cost
//! that pulls the processed fraction toward a target set by the server.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::Rng;

use crate::detector::Detection;
use crate::geometry::{union_area, BBox, BlockGrid, BlockMask, GroundPoint};
use crate::render::{GrayFrame, MotionMap};
use crate::rng::StreamRng;

pub const FEATURE_COUNT: usize = 7;

/// `[motion, assigned, detection coverage, top-K coverage, previous action,
/// staleness, bias]`, each in `[0, 1]`.
pub type BlockFeatures = [f64; FEATURE_COUNT];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("{what} has {got} entries, grid needs {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("gradient step produced non-finite weights; step skipped")]
    NonFiniteGradient,
    #[error("training window is empty")]
    EmptyWindow,
}

/// How the processed-fraction average is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmaMode {
    /// `M_t = (1 - mu) P_t + mu M_{t-1}`.
    #[default]
    Recursive,
    /// `M_t = (1 - mu) P_t + mu P_{t-1}`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub alpha: f64,
    pub momentum: f64,
    pub ema_mode: EmaMode,
    /// Frames between gradient steps.
    pub train_interval: u64,
    /// Every this many frames all blocks are processed.
    pub full_every: u64,
    /// Intensity change that counts as motion.
    pub delta_motion: u8,
    pub p_floor: f64,
    pub initial_bias: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            momentum: 0.9,
            ema_mode: EmaMode::Recursive,
            train_interval: 10,
            full_every: 32,
            delta_motion: 10,
            p_floor: 1e-4,
            initial_bias: 0.0,
        }
    }
}

/// Inputs the policy sees before acting on a frame.
#[derive(Debug, Clone, Copy)]
pub struct PolicyState<'a> {
    pub frame: &'a GrayFrame,
    /// Change between the previous and the current frame.
    pub motion: &'a MotionMap,
    /// Boxes the server assigned to this camera last frame.
    pub topk: &'a [BBox],
    /// Block mask of `topk`.
    pub mask: &'a BlockMask,
    pub prev_detections: &'a [BBox],
    pub prev_actions: &'a BlockMask,
    pub frames_since_refresh: &'a [Option<u64>],
}

fn coverage(grid: &BlockGrid, i: usize, boxes: &[BBox]) -> f64 {
    let rect = grid.block_rect(grid.unflat(i));
    let clipped: Vec<BBox> = boxes.iter().filter_map(|b| b.intersection(&rect)).collect();
    (union_area(&clipped) / rect.area()).clamp(0.0, 1.0)
}

pub fn extract_block_features(
    s: &PolicyState<'_>,
    grid: &BlockGrid,
    delta_motion: u8,
    staleness_horizon: u64,
) -> Result<Vec<BlockFeatures>, PolicyError> {
    let n = grid.len();
    let check = |what, got: usize| {
        if got == n {
            Ok(())
        } else {
            Err(PolicyError::DimensionMismatch {
                what,
                expected: n,
                got,
            })
        }
    };
    check("mask", s.mask.len())?;
    check("previous actions", s.prev_actions.len())?;
    check("refresh ages", s.frames_since_refresh.len())?;
    let pixels = grid.width as usize * grid.height as usize;
    for (what, w, h, len) in [
        ("frame", s.frame.width, s.frame.height, s.frame.pixels.len()),
        (
            "motion map",
            s.motion.width,
            s.motion.height,
            s.motion.values.len(),
        ),
    ] {
        if (w, h) != (grid.width as usize, grid.height as usize) || len != pixels {
            return Err(PolicyError::DimensionMismatch {
                what,
                expected: pixels,
                got: len,
            });
        }
    }
    let horizon = staleness_horizon.max(1) as f64;
    Ok((0..n)
        .map(|i| {
            let idx = grid.unflat(i);
            let rect = grid.block_rect(idx);
            let moving = s.motion.count_above(grid, idx, delta_motion) as f64 / rect.area();
            let staleness =
                s.frames_since_refresh[i].map_or(1.0, |a| (a as f64).min(horizon) / horizon);
            [
                moving.clamp(0.0, 1.0),
                f64::from(u8::from(s.mask.get(idx))),
                coverage(grid, i, s.prev_detections),
                coverage(grid, i, s.topk),
                f64::from(u8::from(s.prev_actions.get(idx))),
                staleness,
                1.0,
            ]
        })
        .collect())
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shared weights plus the running processed-fraction state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub weights: BlockFeatures,
    pub alpha: f64,
    pub momentum: f64,
    pub ema_mode: EmaMode,
    pub p_floor: f64,
    /// Moving average of the processed fraction, `None` before the first frame.
    pub avg_processed: Option<f64>,
    pub last_processed: Option<f64>,
}

impl PolicyParams {
    pub fn new(cfg: &PolicyConfig) -> Self {
        let mut weights = [0.0; FEATURE_COUNT];
        weights[FEATURE_COUNT - 1] = cfg.initial_bias;
        Self {
            weights,
            alpha: cfg.alpha,
            momentum: cfg.momentum,
            ema_mode: cfg.ema_mode,
            p_floor: cfg.p_floor,
            avg_processed: None,
            last_processed: None,
        }
    }

    fn logit(&self, f: &BlockFeatures) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    fn prob(&self, f: &BlockFeatures) -> (f64, bool) {
        let raw = logistic(self.logit(f));
        let clamped = raw.clamp(self.p_floor, 1.0 - self.p_floor);
        (clamped, clamped != raw)
    }
}

/// Per-block processing probabilities.
pub fn forward(params: &PolicyParams, features: &[BlockFeatures]) -> Vec<f64> {
    features.iter().map(|f| params.prob(f).0).collect()
}

/// Independent Bernoulli draw per block.
pub fn sample_actions(probs: &[f64], grid: &BlockGrid, rng: &mut StreamRng) -> BlockMask {
    let bits = probs.iter().map(|&p| rng.gen::<f64>() < p).collect();
    BlockMask::from_bits(grid.rows, grid.cols, bits).expect("one probability per block")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockActions {
    pub probs: Vec<f64>,
    pub actions: BlockMask,
}

/// What the information gain is computed from.
#[derive(Debug, Clone, Copy)]
pub struct GainInputs<'a> {
    pub grid: &'a BlockGrid,
    pub motion: &'a MotionMap,
    pub detections: &'a [Detection],
    /// Per block: detections emitted when the block last ran before this
    /// frame, `None` if it never ran.
    pub reference: &'a [Option<&'a [GroundPoint]>],
    /// Blocks assigned to this camera for the current frame.
    pub assigned: &'a BlockMask,
    pub delta_motion: u8,
    pub eps: f64,
}

/// Per-block gain: the fraction of block pixels inside a detection that is
/// new relative to the block's last refresh, or inside any detection and
/// moving; zero wherever the block is not assigned to this camera.
pub fn information_gain(inp: &GainInputs<'_>) -> Vec<f64> {
    let grid = inp.grid;
    (0..grid.len())
        .map(|i| {
            let idx = grid.unflat(i);
            if !inp.assigned.get(idx) {
                return 0.0;
            }
            let rect = grid.block_rect(idx);
            let reference = inp.reference.get(i).copied().flatten();
            let boxes: Vec<(BBox, bool)> = inp
                .detections
                .iter()
                .filter_map(|d| {
                    let clipped = d.bbox.intersection(&rect)?;
                    let unmatched = reference
                        .is_none_or(|r| r.iter().all(|g| g.distance(&d.ground) > inp.eps));
                    Some((clipped, unmatched))
                })
                .collect();
            if boxes.is_empty() {
                return 0.0;
            }
            let (cols, rows) = grid.block_pixels(idx);
            let mut gain = 0usize;
            for r in rows {
                for c in cols.clone() {
                    let mut inside = false;
                    let mut novel = false;
                    for (b, unmatched) in &boxes {
                        if b.contains_pixel(c, r) {
                            inside = true;
                            if *unmatched {
                                novel = true;
                                break;
                            }
                        }
                    }
                    if novel || (inside && inp.motion.get(c, r) > inp.delta_motion) {
                        gain += 1;
                    }
                }
            }
            gain as f64 / rect.area()
        })
        .collect()
}

/// Normalized per-view target: selected objects relative to the busiest
/// view; all zero when nothing was selected anywhere.
pub fn target_cost(selected_counts: &[usize]) -> Vec<f64> {
    let max = selected_counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![0.0; selected_counts.len()];
    }
    selected_counts
        .iter()
        .map(|&n| n as f64 / max as f64)
        .collect()
}

/// Update the processed-fraction average with this frame's actions and
/// return the signed squared gap to `tau`.
pub fn compute_cost(actions: &BlockMask, params: &mut PolicyParams, tau: f64) -> f64 {
    let p = actions.popcount() as f64 / actions.len().max(1) as f64;
    let mu = params.momentum;
    let m = match params.ema_mode {
        EmaMode::Recursive => params
            .avg_processed
            .map_or(p, |prev| (1.0 - mu) * p + mu * prev),
        EmaMode::Literal => params
            .last_processed
            .map_or(p, |prev| (1.0 - mu) * p + mu * prev),
    };
    params.avg_processed = Some(m);
    params.last_processed = Some(p);
    let gap = tau - m;
    gap * gap.abs()
}

/// Positive for processed blocks, negated for skipped ones.
pub fn reward(actions: &BlockMask, gain: &[f64], cost: f64) -> Vec<f64> {
    actions
        .bits()
        .iter()
        .zip(gain)
        .map(|(&a, &g)| if a { g + cost } else { -(g + cost) })
        .collect()
}

/// One frame of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: Vec<BlockFeatures>,
    pub probs: Vec<f64>,
    pub actions: Vec<bool>,
    pub rewards: Vec<f64>,
}

/// `-sum R log pi(a | s)` over a window, at the current weights.
pub fn loss(params: &PolicyParams, window: &[Transition]) -> f64 {
    let mut total = 0.0;
    for t in window {
        for ((f, &a), &r) in t.features.iter().zip(&t.actions).zip(&t.rewards) {
            let (p, _) = params.prob(f);
            let pa = if a { p } else { 1.0 - p };
            total -= r * pa.ln();
        }
    }
    total
}

/// Analytic gradient of [`loss`] with respect to the weights.
pub fn loss_gradient(params: &PolicyParams, window: &[Transition]) -> BlockFeatures {
    let mut grad = [0.0; FEATURE_COUNT];
    for t in window {
        for ((f, &a), &r) in t.features.iter().zip(&t.actions).zip(&t.rewards) {
            let (p, clamped) = params.prob(f);
            if clamped {
                continue;
            }
            let scale = -r * (f64::from(u8::from(a)) - p);
            for (g, x) in grad.iter_mut().zip(f) {
                *g += scale * x;
            }
        }
    }
    grad
}

/// One gradient-descent step on the window loss.
pub fn reinforce_update(
    params: &mut PolicyParams,
    window: &[Transition],
) -> Result<(), PolicyError> {
    if window.is_empty() {
        return Err(PolicyError::EmptyWindow);
    }
    let grad = loss_gradient(params, window);
    let mut next = params.weights;
    for (w, g) in next.iter_mut().zip(&grad) {
        *w -= params.alpha * g;
    }
    if !next.iter().all(|w| w.is_finite()) {
        return Err(PolicyError::NonFiniteGradient);
    }
    params.weights = next;
    Ok(())
}

/// A decision taken for one frame, kept until its reward is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub frame_id: u64,
    pub features: Vec<BlockFeatures>,
    pub probs: Vec<f64>,
    pub actions: BlockMask,
    /// Actions were overridden to all ones rather than sampled.
    pub forced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnOutcome {
    pub cost: f64,
    pub mean_reward: f64,
    pub updated: bool,
}

/// Online agent owned by a single camera.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    pub params: PolicyParams,
    cfg: PolicyConfig,
    rng: StreamRng,
    window: Vec<Transition>,
}

impl PolicyAgent {
    pub fn new(cfg: PolicyConfig, rng: StreamRng) -> Self {
        Self {
            params: PolicyParams::new(&cfg),
            cfg,
            rng,
            window: Vec::new(),
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    /// Whether `frame_id` is a resynchronization frame.
    pub fn is_full_frame(&self, frame_id: u64) -> bool {
        frame_id == 0 || (self.cfg.full_every > 0 && frame_id.is_multiple_of(self.cfg.full_every))
    }

    pub fn act(
        &mut self,
        frame_id: u64,
        features: Vec<BlockFeatures>,
        grid: &BlockGrid,
    ) -> Decision {
        let probs = forward(&self.params, &features);
        // Draw even on forced frames so the stream position depends only on
        // the frame count.
        let sampled = sample_actions(&probs, grid, &mut self.rng);
        let forced = self.is_full_frame(frame_id);
        let actions = if forced {
            BlockMask::for_grid(grid, true)
        } else {
            sampled
        };
        Decision {
            frame_id,
            features,
            probs,
            actions,
            forced,
        }
    }

    /// Score a decision once its gain and target are known; steps the
    /// weights at the end of every training interval.
    pub fn learn(&mut self, decision: Decision, gain: &[f64], tau: f64) -> LearnOutcome {
        let cost = compute_cost(&decision.actions, &mut self.params, tau);
        let rewards = reward(&decision.actions, gain, cost);
        let mean_reward = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
        if !decision.forced {
            self.window.push(Transition {
                actions: decision.actions.bits().to_vec(),
                features: decision.features,
                probs: decision.probs,
                rewards,
            });
        }
        let mut updated = false;
        let interval = self.cfg.train_interval.max(1);
        if (decision.frame_id + 1).is_multiple_of(interval) && !self.window.is_empty() {
            match reinforce_update(&mut self.params, &self.window) {
                Ok(()) => updated = true,
                Err(e) => log::warn!("policy update skipped: {e}"),
            }
            self.window.clear();
        }
        LearnOutcome {
            cost,
            mean_reward,
            updated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn grid() -> BlockGrid {
        BlockGrid::new(1152, 640, 128)
    }

    fn params(weights: BlockFeatures) -> PolicyParams {
        PolicyParams {
            weights,
            ..PolicyParams::new(&PolicyConfig::default())
        }
    }

    #[test]
    fn static_frame_features() {
        let g = grid();
        let frame = GrayFrame::background(0, 1152, 640);
        let motion = MotionMap::zeros(1152, 640);
        let mut mask = BlockMask::for_grid(&g, false);
        mask.set(g.unflat(3), true);
        let prev = BlockMask::for_grid(&g, false);
        let ages: Vec<Option<u64>> = (0..45)
            .map(|i| if i < 5 { Some(8) } else { None })
            .collect();
        let s = PolicyState {
            frame: &frame,
            motion: &motion,
            topk: &[],
            mask: &mask,
            prev_detections: &[],
            prev_actions: &prev,
            frames_since_refresh: &ages,
        };
        let f = extract_block_features(&s, &g, 10, 32).unwrap();
        assert_eq!(f[3], [0.0, 1.0, 0.0, 0.0, 0.0, 0.25, 1.0]);
        assert_eq!(f[10], [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn saturated_and_half_covered_blocks() {
        let g = grid();
        let frame = GrayFrame::background(0, 1152, 640);
        let mut motion = MotionMap::zeros(1152, 640);
        motion.values.fill(200);
        let mask = BlockMask::for_grid(&g, true);
        let prev = BlockMask::for_grid(&g, true);
        let ages = vec![Some(0); 45];
        let gamma = [BBox::new(0.0, 0.0, 128.0, 128.0)];
        let half = [BBox::new(128.0, 0.0, 64.0, 128.0)];
        let s = PolicyState {
            frame: &frame,
            motion: &motion,
            topk: &gamma,
            mask: &mask,
            prev_detections: &half,
            prev_actions: &prev,
            frames_since_refresh: &ages,
        };
        let f = extract_block_features(&s, &g, 10, 32).unwrap();
        assert_eq!(f[0][0], 1.0);
        assert_eq!(f[0][3], 1.0);
        // Oracle: 64 of 128 pixel columns.
        assert!((f[1][2] - 0.5).abs() <= 1.0 / (128.0 * 128.0));
        assert!(f.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn feature_dimension_mismatch() {
        let g = grid();
        let frame = GrayFrame::background(0, 1152, 640);
        let motion = MotionMap::zeros(1152, 640);
        let mask = BlockMask::zeros(4, 9);
        let prev = BlockMask::for_grid(&g, false);
        let ages = vec![None; 45];
        let s = PolicyState {
            frame: &frame,
            motion: &motion,
            topk: &[],
            mask: &mask,
            prev_detections: &[],
            prev_actions: &prev,
            frames_since_refresh: &ages,
        };
        assert!(matches!(
            extract_block_features(&s, &g, 10, 32),
            Err(PolicyError::DimensionMismatch { what: "mask", .. })
        ));
    }

    #[test]
    fn forward_examples() {
        let f = [[0.3, 1.0, 0.2, 0.0, 1.0, 0.5, 1.0]];
        assert_eq!(forward(&params([0.0; 7]), &f), vec![0.5]);
        let mut w = [0.0; 7];
        w[6] = 20.0;
        assert_abs_diff_eq!(forward(&params(w), &f)[0], 1.0 - 1e-4);
        w[6] = 3f64.ln();
        assert_abs_diff_eq!(forward(&params(w), &f)[0], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn saturated_probabilities_give_constant_actions() {
        let g = grid();
        let mut rng = stream(11, "policy", 0);
        let mut all_ones = 0;
        let mut all_zeros = 0;
        for _ in 0..200 {
            all_ones +=
                usize::from(sample_actions(&[1.0 - 1e-4; 45], &g, &mut rng).popcount() == 45);
            all_zeros += usize::from(sample_actions(&[1e-4; 45], &g, &mut rng).popcount() == 0);
        }
        // (1 - 1e-4)^45 > 0.995 per frame.
        assert!(all_ones >= 198, "{all_ones}");
        assert!(all_zeros >= 198, "{all_zeros}");
    }

    #[test]
    fn fair_coin_mean() {
        let g = BlockGrid::new(1000, 1000, 10);
        let a = sample_actions(&vec![0.5; 10_000], &g, &mut stream(2, "policy", 0));
        let mean = a.popcount() as f64 / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn target_cost_examples() {
        let t = target_cost(&[3, 6, 2]);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[1], 1.0);
        assert_abs_diff_eq!(t[2], 1.0 / 3.0);
        assert_eq!(target_cost(&[4, 4]), vec![1.0, 1.0]);
        assert_eq!(target_cost(&[0, 0, 0]), vec![0.0; 3]);
    }

    fn mask_with_fraction(n_on: usize) -> BlockMask {
        let mut m = BlockMask::zeros(1, 10);
        for c in 0..n_on {
            m.set(crate::geometry::BlockIndex { row: 0, col: c }, true);
        }
        m
    }

    #[test]
    fn cost_examples() {
        let mut p = params([0.0; 7]);
        p.avg_processed = Some(0.7);
        let cost = compute_cost(&mask_with_fraction(6), &mut p, 0.5);
        assert_abs_diff_eq!(p.avg_processed.unwrap(), 0.69, epsilon = 1e-12);
        assert_abs_diff_eq!(cost, -0.0361, epsilon = 1e-12);

        let mut p = params([0.0; 7]);
        p.avg_processed = Some(0.6);
        assert_abs_diff_eq!(compute_cost(&mask_with_fraction(6), &mut p, 0.6), 0.0);

        let mut p = params([0.0; 7]);
        p.avg_processed = Some(0.6);
        assert_abs_diff_eq!(
            compute_cost(&mask_with_fraction(6), &mut p, 1.0),
            0.16,
            epsilon = 1e-12
        );
    }

    #[test]
    fn literal_ema_blends_raw_fractions() {
        let mut p = params([0.0; 7]);
        p.ema_mode = EmaMode::Literal;
        p.avg_processed = Some(0.0);
        p.last_processed = Some(0.2);
        compute_cost(&mask_with_fraction(6), &mut p, 0.5);
        assert_abs_diff_eq!(
            p.avg_processed.unwrap(),
            0.1 * 0.6 + 0.9 * 0.2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn reward_signs() {
        let m = mask_with_fraction(1);
        let r = reward(&m, &[0.8; 10], -0.04);
        assert_abs_diff_eq!(r[0], 0.76, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], -0.76, epsilon = 1e-12);
        assert!(reward(&m, &[0.0; 10], 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_block_loss() {
        // Bias chosen so the block probability is 0.9.
        let mut w = [0.0; 7];
        w[6] = (0.9f64 / 0.1).ln();
        let window = [Transition {
            features: vec![[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]],
            probs: vec![0.9],
            actions: vec![true],
            rewards: vec![0.5],
        }];
        assert_abs_diff_eq!(
            loss(&params(w), &window),
            -0.5 * 0.9f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(loss(&params(w), &window), 0.05268, epsilon = 1e-5);
    }

    #[test]
    fn zero_reward_leaves_weights() {
        let mut p = params([0.1, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2]);
        let before = p.weights;
        let window = [Transition {
            features: vec![[0.5; 7]; 4],
            probs: vec![0.5; 4],
            actions: vec![true, false, true, false],
            rewards: vec![0.0; 4],
        }];
        reinforce_update(&mut p, &window).unwrap();
        assert_eq!(p.weights, before);
        assert_eq!(reinforce_update(&mut p, &[]), Err(PolicyError::EmptyWindow));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = stream(7, "test", 0);
        let h = 1e-5;
        for _ in 0..100 {
            let p = params(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let window: Vec<Transition> = (0..3)
                .map(|_| Transition {
                    features: (0..5)
                        .map(|_| std::array::from_fn(|_| rng.gen::<f64>()))
                        .collect(),
                    probs: vec![0.5; 5],
                    actions: (0..5).map(|_| rng.gen_bool(0.5)).collect(),
                    rewards: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                })
                .collect();
            let analytic = loss_gradient(&p, &window);
            for i in 0..FEATURE_COUNT {
                let (mut up, mut down) = (p.clone(), p.clone());
                up.weights[i] += h;
                down.weights[i] -= h;
                let numeric = (loss(&up, &window) - loss(&down, &window)) / (2.0 * h);
                let rel =
                    (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "component {i}: {} vs {numeric}", analytic[i]);
            }
        }
    }

    #[test]
    fn huge_step_is_rejected() {
        let mut p = params([0.0; 7]);
        p.alpha = f64::MAX;
        let before = p.weights;
        let window = [Transition {
            features: vec![[1.0; 7]],
            probs: vec![0.5],
            actions: vec![true],
            rewards: vec![1e300],
        }];
        assert_eq!(
            reinforce_update(&mut p, &window),
            Err(PolicyError::NonFiniteGradient)
        );
        assert_eq!(p.weights, before);
    }

    fn gain_inputs_fixture() -> (BlockGrid, MotionMap, BlockMask) {
        let g = grid();
        (
            g,
            MotionMap::zeros(1152, 640),
            BlockMask::for_grid(&g, true),
        )
    }

    fn person(bbox: BBox, x: f64) -> Detection {
        Detection {
            camera_id: 0,
            bbox,
            ground: GroundPoint::new(x, 0.0),
            score: 1.0,
            stale: false,
        }
    }

    #[test]
    fn gain_examples() {
        let (g, motion, all) = gain_inputs_fixture();
        let refs: Vec<Option<&[GroundPoint]>> = vec![None; 45];
        let background = information_gain(&GainInputs {
            grid: &g,
            motion: &motion,
            detections: &[],
            reference: &refs,
            assigned: &all,
            delta_motion: 10,
            eps: 0.5,
        });
        assert!(background.iter().all(|&v| v == 0.0));

        let newcomer = [person(BBox::new(0.0, 0.0, 128.0, 128.0), 3.0)];
        let gain = information_gain(&GainInputs {
            grid: &g,
            motion: &motion,
            detections: &newcomer,
            reference: &refs,
            assigned: &all,
            delta_motion: 10,
            eps: 0.5,
        });
        assert_eq!(gain[0], 1.0);

        let none = BlockMask::for_grid(&g, false);
        let masked = information_gain(&GainInputs {
            grid: &g,
            motion: &motion,
            detections: &newcomer,
            reference: &refs,
            assigned: &none,
            delta_motion: 10,
            eps: 0.5,
        });
        assert_eq!(masked[0], 0.0);
    }

    #[test]
    fn known_static_person_has_no_gain_until_moving() {
        let (g, mut motion, all) = gain_inputs_fixture();
        let seen = [GroundPoint::new(3.1, 0.0)];
        let refs: Vec<Option<&[GroundPoint]>> = vec![Some(&seen[..]); 45];
        let dets = [person(BBox::new(0.0, 0.0, 64.0, 128.0), 3.0)];
        let gain = |motion: &MotionMap| {
            information_gain(&GainInputs {
                grid: &g,
                motion,
                detections: &dets,
                reference: &refs,
                assigned: &all,
                delta_motion: 10,
                eps: 0.5,
            })[0]
        };
        assert_eq!(gain(&motion), 0.0);
        // Moving pixels inside the box count; moving pixels outside do not.
        for r in 0..128 {
            for c in 32..96 {
                motion.values[r * 1152 + c] = 50;
            }
        }
        assert_abs_diff_eq!(gain(&motion), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn agent_forces_first_and_periodic_frames() {
        let g = grid();
        let cfg = PolicyConfig {
            initial_bias: -30.0,
            ..PolicyConfig::default()
        };
        let mut agent = PolicyAgent::new(cfg, stream(0, "policy", 0));
        let feats = vec![[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]; 45];
        assert!(agent.act(0, feats.clone(), &g).forced);
        assert_eq!(agent.act(0, feats.clone(), &g).actions.popcount(), 45);
        assert_eq!(agent.act(5, feats.clone(), &g).actions.popcount(), 0);
        assert_eq!(agent.act(64, feats, &g).actions.popcount(), 45);
    }
}
