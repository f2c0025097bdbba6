//! Synthetic multimodal samplers and planar tasks.
//!
//! The samplers here stand in for trained policies. Each chunk they emit
//! carries a latent mode tag that evaluation code may read; decoders never do.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chunk::{Action, ActionChunk, ChunkSampler, ObservationHistory};
use crate::decoder::{Environment, RolloutRecord, Step};
use crate::error::{BidError, Result};

/// Latent tag of chunks drawn from the first mode.
pub const MODE_A: u8 = 0;
/// Latent tag of chunks drawn from the second mode.
pub const MODE_B: u8 = 1;
/// Latent tag of chunks drawn from the mode-averaged trajectory.
pub const MODE_MIXED: u8 = 2;

/// Ticks between drift direction changes in [`DriftEnv`].
pub const DRIFT_RESAMPLE_TICKS: usize = 20;

/// A reference action sequence indexed by absolute tick.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeTrajectory {
    /// The same action at every tick.
    Constant(Vec<f64>),
    /// One row per tick; ticks past the end repeat the last row.
    Table(Vec<Vec<f64>>),
}

impl ModeTrajectory {
    pub fn constant(action: Vec<f64>) -> Result<Self> {
        Action::new(action.clone())?;
        Ok(ModeTrajectory::Constant(action))
    }

    pub fn table(rows: Vec<Vec<f64>>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| BidError::Empty("mode table has no rows".into()))?;
        let dim = first.len();
        for row in &rows {
            if row.len() != dim {
                return Err(BidError::DimensionMismatch { expected: dim, got: row.len() });
            }
            Action::new(row.clone())?;
        }
        Ok(ModeTrajectory::Table(rows))
    }

    /// Parses a numeric table with one `tick, x, y, ...` row per line.
    ///
    /// Fields may be separated by commas or whitespace. Blank lines and lines
    /// starting with `#` are skipped. Ticks must be 0, 1, 2, ... in order.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() < 2 {
                return Err(BidError::Parse { line: i + 1, msg: "expected tick and at least one value".into() });
            }
            let tick: usize = fields[0]
                .parse()
                .map_err(|_| BidError::Parse { line: i + 1, msg: format!("bad tick '{}'", fields[0]) })?;
            if tick != rows.len() {
                return Err(BidError::Parse {
                    line: i + 1,
                    msg: format!("expected tick {}, found {}", rows.len(), tick),
                });
            }
            let values = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| BidError::Parse { line: i + 1, msg: format!("bad number '{f}'") })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(values);
        }
        Self::table(rows)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse_table(&std::fs::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        match self {
            ModeTrajectory::Constant(a) => a.len(),
            ModeTrajectory::Table(rows) => rows[0].len(),
        }
    }

    pub fn at(&self, tick: usize) -> &[f64] {
        match self {
            ModeTrajectory::Constant(a) => a,
            ModeTrajectory::Table(rows) => &rows[tick.min(rows.len() - 1)],
        }
    }
}

/// Per-tick displacements that move a point along a parabolic arc from
/// `start` to `goal` in `duration` ticks, bulging `height` to the left of the
/// travel direction (negative `height` bulges right). The final row is zero so
/// the trajectory rests at the goal.
pub fn parabolic_arc(start: [f64; 2], goal: [f64; 2], height: f64, duration: usize) -> Result<ModeTrajectory> {
    if duration == 0 {
        return Err(BidError::InvalidValue("arc duration must be positive".into()));
    }
    let d = [goal[0] - start[0], goal[1] - start[1]];
    let len = d[0].hypot(d[1]);
    if len == 0.0 || !len.is_finite() || !height.is_finite() {
        return Err(BidError::InvalidValue("arc needs distinct finite endpoints".into()));
    }
    let normal = [-d[1] / len, d[0] / len];
    let pos = |u: f64| {
        let bulge = 4.0 * height * u * (1.0 - u);
        [start[0] + u * d[0] + bulge * normal[0], start[1] + u * d[1] + bulge * normal[1]]
    };
    let mut rows = Vec::with_capacity(duration + 1);
    for t in 0..duration {
        let p0 = pos(t as f64 / duration as f64);
        let p1 = pos((t + 1) as f64 / duration as f64);
        rows.push(vec![p1[0] - p0[0], p1[1] - p0[1]]);
    }
    rows.push(vec![0.0, 0.0]);
    ModeTrajectory::table(rows)
}

/// A two-mode mixture of reference trajectories with Gaussian noise.
///
/// `collapse_prob` optionally mixes in chunks that follow the average of the
/// two modes; such chunks are tagged [`MODE_MIXED`].
#[derive(Debug, Clone, PartialEq)]
pub struct BimodalChunkSampler {
    pub mode_a: ModeTrajectory,
    pub mode_b: ModeTrajectory,
    pub mode_prob: f64,
    pub sigma: f64,
    pub horizon: usize,
    pub collapse_prob: f64,
}

impl BimodalChunkSampler {
    pub fn new(mode_a: ModeTrajectory, mode_b: ModeTrajectory, mode_prob: f64, sigma: f64, horizon: usize) -> Result<Self> {
        if mode_a.dim() != mode_b.dim() {
            return Err(BidError::DimensionMismatch { expected: mode_a.dim(), got: mode_b.dim() });
        }
        check_unit("mode_prob", mode_prob)?;
        check_nonneg("sigma", sigma)?;
        if horizon == 0 {
            return Err(BidError::InvalidValue("horizon must be positive".into()));
        }
        Ok(BimodalChunkSampler { mode_a, mode_b, mode_prob, sigma, horizon, collapse_prob: 0.0 })
    }

    /// Two constant lanes: both move `speed` along x, offset by `separation` in y.
    pub fn lanes(speed: f64, separation: f64, sigma: f64, horizon: usize) -> Result<Self> {
        let half = separation / 2.0;
        Self::new(
            ModeTrajectory::constant(vec![speed, half])?,
            ModeTrajectory::constant(vec![speed, -half])?,
            0.5,
            sigma,
            horizon,
        )
    }

    /// Mirrored arcs from `start` to `goal`, one bulging each way.
    pub fn arcs(start: [f64; 2], goal: [f64; 2], height: f64, duration: usize, sigma: f64, horizon: usize) -> Result<Self> {
        Self::new(
            parabolic_arc(start, goal, height, duration)?,
            parabolic_arc(start, goal, -height, duration)?,
            0.5,
            sigma,
            horizon,
        )
    }

    pub fn with_collapse_prob(mut self, p: f64) -> Result<Self> {
        check_unit("collapse_prob", p)?;
        self.collapse_prob = p;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mode_a.dim()
    }

    /// The noiseless action a chunk of mode `mode` emits at `tick` after
    /// interpolating `blur` of the way toward the mode average.
    pub fn reference(&self, mode: u8, tick: usize, blur: f64) -> Vec<f64> {
        let a = self.mode_a.at(tick);
        let b = self.mode_b.at(tick);
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let avg = 0.5 * (x + y);
                let m = match mode {
                    MODE_A => x,
                    MODE_B => y,
                    _ => avg,
                };
                (1.0 - blur) * m + blur * avg
            })
            .collect()
    }

    fn draw(&self, tick: usize, n: usize, blur: f64, sigma: f64, rng: &mut dyn RngCore) -> Result<Vec<ActionChunk>> {
        if n == 0 {
            return Err(BidError::InvalidValue("sample count must be positive".into()));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let collapse = rng.random::<f64>() < self.collapse_prob;
            let pick_a = rng.random::<f64>() < self.mode_prob;
            let mode = if collapse {
                MODE_MIXED
            } else if pick_a {
                MODE_A
            } else {
                MODE_B
            };
            let mut rows = Vec::with_capacity(self.horizon);
            for t in tick..tick + self.horizon {
                let mut row = self.reference(mode, t, blur);
                for v in row.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += sigma * z;
                }
                rows.push(row);
            }
            out.push(ActionChunk::from_rows(tick, rows)?.with_latent_mode(Some(mode)));
        }
        Ok(out)
    }
}

impl ChunkSampler for BimodalChunkSampler {
    fn sample(&self, history: &ObservationHistory, n: usize, rng: &mut dyn RngCore) -> Result<Vec<ActionChunk>> {
        self.draw(history.tick(), n, 0.0, self.sigma, rng)
    }
}

/// An underfit version of a [`BimodalChunkSampler`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeakenedSampler {
    pub base: BimodalChunkSampler,
    pub blur: f64,
    pub extra_sigma: f64,
}

impl WeakenedSampler {
    pub fn sigma(&self) -> f64 {
        self.base.sigma + self.extra_sigma
    }
}

/// Blurs `base` toward its mode average and inflates its noise.
pub fn weaken(base: &BimodalChunkSampler, blur: f64, extra_sigma: f64) -> Result<WeakenedSampler> {
    check_unit("blur", blur)?;
    check_nonneg("extra_sigma", extra_sigma)?;
    Ok(WeakenedSampler { base: base.clone(), blur, extra_sigma })
}

impl ChunkSampler for WeakenedSampler {
    fn sample(&self, history: &ObservationHistory, n: usize, rng: &mut dyn RngCore) -> Result<Vec<ActionChunk>> {
        self.base.draw(history.tick(), n, self.blur, self.sigma(), rng)
    }
}

/// A state-conditioned planner for [`DriftEnv`]. Each chunk follows a
/// quadratic curve from the agent to the observed target, bending sideways by
/// a random fraction of the distance, at `speed` per step. Once the curve
/// reaches the target the remaining steps are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PursuitSampler {
    pub speed: f64,
    /// Standard deviation of the curve's lateral control-point offset, as a
    /// fraction of the distance to the target.
    pub curve_sigma: f64,
    pub sigma: f64,
    pub horizon: usize,
}

/// Segments used to measure curve length.
const CURVE_SEGMENTS: usize = 32;

impl PursuitSampler {
    pub fn new(speed: f64, curve_sigma: f64, sigma: f64, horizon: usize) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(BidError::InvalidValue(format!("speed must be positive, got {speed}")));
        }
        check_nonneg("curve_sigma", curve_sigma)?;
        check_nonneg("sigma", sigma)?;
        if horizon == 0 {
            return Err(BidError::InvalidValue("horizon must be positive".into()));
        }
        Ok(PursuitSampler { speed, curve_sigma, sigma, horizon })
    }

    /// Same planner with scaled curvature spread and extra step noise.
    pub fn weakened(&self, curve_scale: f64, extra_sigma: f64) -> Result<Self> {
        check_nonneg("curve_scale", curve_scale)?;
        Self::new(self.speed, self.curve_sigma * curve_scale, self.sigma + extra_sigma, self.horizon)
    }

    /// Noiseless displacements of the curve with lateral offset `bend`
    /// (fraction of the distance, positive to the left).
    pub fn plan(&self, agent: [f64; 2], target: [f64; 2], bend: f64) -> Vec<[f64; 2]> {
        let d = [target[0] - agent[0], target[1] - agent[1]];
        let dist = d[0].hypot(d[1]);
        let mut out = vec![[0.0, 0.0]; self.horizon];
        if dist == 0.0 {
            return out;
        }
        let ctrl = [agent[0] + 0.5 * d[0] - bend * d[1], agent[1] + 0.5 * d[1] + bend * d[0]];
        let point = |u: f64| {
            let (a, b, c) = ((1.0 - u) * (1.0 - u), 2.0 * u * (1.0 - u), u * u);
            [a * agent[0] + b * ctrl[0] + c * target[0], a * agent[1] + b * ctrl[1] + c * target[1]]
        };
        let mut length = 0.0;
        let mut last = agent;
        for k in 1..=CURVE_SEGMENTS {
            let p = point(k as f64 / CURVE_SEGMENTS as f64);
            length += (p[0] - last[0]).hypot(p[1] - last[1]);
            last = p;
        }
        let steps = ((length / self.speed).ceil() as usize).max(1);
        let mut prev = agent;
        for (k, slot) in out.iter_mut().enumerate().take(steps) {
            let p = point((k + 1) as f64 / steps as f64);
            *slot = [p[0] - prev[0], p[1] - prev[1]];
            prev = p;
        }
        out
    }
}

impl ChunkSampler for PursuitSampler {
    fn sample(&self, history: &ObservationHistory, n: usize, rng: &mut dyn RngCore) -> Result<Vec<ActionChunk>> {
        if n == 0 {
            return Err(BidError::InvalidValue("sample count must be positive".into()));
        }
        let obs = history.current();
        if obs.len() != 4 {
            return Err(BidError::DimensionMismatch { expected: 4, got: obs.len() });
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let rows = self
                .plan([obs[0], obs[1]], [obs[2], obs[3]], self.curve_sigma * z)
                .into_iter()
                .map(|[x, y]| {
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    vec![x + self.sigma * nx, y + self.sigma * ny]
                })
                .collect();
            out.push(ActionChunk::from_rows(history.tick(), rows)?);
        }
        Ok(out)
    }
}

/// A point agent chasing a target that drifts in a random direction.
///
/// Observations are `[agent_x, agent_y, target_x, target_y]`. The episode never
/// terminates on its own; success latches once the agent comes within
/// `tolerance` of the target. The target's motion is drawn from a private
/// stream seeded at reset, so two episodes reset from equally seeded
/// generators see the same target path whatever the agent does.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftEnv {
    pub drift_speed: f64,
    pub tolerance: f64,
    pub max_step: f64,
    pub start_distance: f64,
    agent: [f64; 2],
    target: [f64; 2],
    heading: f64,
    motion: ChaCha8Rng,
    tick: usize,
    success: bool,
}

impl DriftEnv {
    pub fn new(drift_speed: f64, tolerance: f64, max_step: f64, start_distance: f64) -> Result<Self> {
        check_nonneg("drift_speed", drift_speed)?;
        check_nonneg("start_distance", start_distance)?;
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(BidError::InvalidValue(format!("tolerance must be positive, got {tolerance}")));
        }
        if !(max_step > 0.0 && max_step.is_finite()) {
            return Err(BidError::InvalidValue(format!("max_step must be positive, got {max_step}")));
        }
        let mut env = DriftEnv {
            drift_speed,
            tolerance,
            max_step,
            start_distance,
            agent: [0.0; 2],
            target: [start_distance, 0.0],
            heading: 0.0,
            motion: ChaCha8Rng::seed_from_u64(0),
            tick: 0,
            success: false,
        };
        env.success = env.distance() <= tolerance;
        Ok(env)
    }

    pub fn agent(&self) -> [f64; 2] {
        self.agent
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn distance(&self) -> f64 {
        (self.target[0] - self.agent[0]).hypot(self.target[1] - self.agent[1])
    }

    pub fn success(&self) -> bool {
        self.success
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.agent[0], self.agent[1], self.target[0], self.target[1]]
    }

    fn redraw_heading(&mut self) {
        self.heading = self.motion.random_range(0.0..std::f64::consts::TAU);
    }

    /// Applies one displacement and advances the target.
    pub fn drift_step(&mut self, action: [f64; 2]) -> Result<()> {
        if !action.iter().all(|v| v.is_finite()) {
            return Err(BidError::InvalidValue("non-finite action".into()));
        }
        let [ax, ay] = clip_norm(action, self.max_step);
        self.agent[0] += ax;
        self.agent[1] += ay;
        self.tick += 1;
        if self.tick.is_multiple_of(DRIFT_RESAMPLE_TICKS) {
            self.redraw_heading();
        }
        let (s, c) = self.heading.sin_cos();
        self.target[0] += self.drift_speed * c;
        self.target[1] += self.drift_speed * s;
        if self.distance() <= self.tolerance {
            self.success = true;
        }
        Ok(())
    }
}

impl Environment for DriftEnv {
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.agent = [0.0; 2];
        self.target = [self.start_distance, 0.0];
        self.tick = 0;
        self.motion = ChaCha8Rng::seed_from_u64(rng.next_u64());
        self.redraw_heading();
        self.success = self.distance() <= self.tolerance;
        self.observation()
    }

    fn step(&mut self, action: &Action, _rng: &mut dyn RngCore) -> Result<Step> {
        let v = action.values();
        if v.len() != 2 {
            return Err(BidError::DimensionMismatch { expected: 2, got: v.len() });
        }
        self.drift_step([v[0], v[1]])?;
        Ok(Step { observation: self.observation(), terminal: false })
    }
}

/// A disk-shaped obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

/// A point agent moving by displacements toward an optional goal around an
/// optional obstacle. Observations are `[x, y]`.
///
/// Reaching the goal or touching the obstacle ends the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarEnv {
    pub start: [f64; 2],
    pub goal: Option<[f64; 2]>,
    pub obstacle: Option<Disk>,
    pub tolerance: f64,
    pub max_step: f64,
    agent: [f64; 2],
    reached: bool,
    collided: bool,
}

impl PlanarEnv {
    pub fn new(start: [f64; 2], max_step: f64) -> Result<Self> {
        if max_step.is_nan() || max_step <= 0.0 {
            return Err(BidError::InvalidValue(format!("max_step must be positive, got {max_step}")));
        }
        Ok(PlanarEnv {
            start,
            goal: None,
            obstacle: None,
            tolerance: 1.0,
            max_step,
            agent: start,
            reached: false,
            collided: false,
        })
    }

    pub fn with_goal(mut self, goal: [f64; 2], tolerance: f64) -> Result<Self> {
        if tolerance.is_nan() || tolerance <= 0.0 {
            return Err(BidError::InvalidValue(format!("tolerance must be positive, got {tolerance}")));
        }
        self.goal = Some(goal);
        self.tolerance = tolerance;
        Ok(self)
    }

    pub fn with_obstacle(mut self, obstacle: Disk) -> Result<Self> {
        if obstacle.radius.is_nan() || obstacle.radius <= 0.0 {
            return Err(BidError::InvalidValue("obstacle radius must be positive".into()));
        }
        self.obstacle = Some(obstacle);
        Ok(self)
    }

    pub fn agent(&self) -> [f64; 2] {
        self.agent
    }

    pub fn reached(&self) -> bool {
        self.reached
    }

    pub fn collided(&self) -> bool {
        self.collided
    }

    pub fn success(&self) -> bool {
        self.reached && !self.collided
    }

    pub fn goal_distance(&self) -> Option<f64> {
        self.goal.map(|g| (g[0] - self.agent[0]).hypot(g[1] - self.agent[1]))
    }
}

impl Environment for PlanarEnv {
    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.agent = self.start;
        self.reached = false;
        self.collided = false;
        self.agent.to_vec()
    }

    fn step(&mut self, action: &Action, _rng: &mut dyn RngCore) -> Result<Step> {
        let v = action.values();
        if v.len() != 2 {
            return Err(BidError::DimensionMismatch { expected: 2, got: v.len() });
        }
        if self.reached || self.collided {
            return Err(BidError::Environment("step after episode end".into()));
        }
        let [dx, dy] = clip_norm([v[0], v[1]], self.max_step);
        let from = self.agent;
        self.agent = [from[0] + dx, from[1] + dy];
        if let Some(d) = self.obstacle {
            if segment_distance(from, self.agent, d.center) < d.radius {
                self.collided = true;
            }
        }
        if !self.collided && self.goal_distance().is_some_and(|g| g <= self.tolerance) {
            self.reached = true;
        }
        Ok(Step { observation: self.agent.to_vec(), terminal: self.reached || self.collided })
    }
}

/// Per-episode outcome on a synthetic task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSwitchStats {
    pub switch_rate: f64,
    pub success: bool,
    pub final_error: f64,
}

/// Fraction of consecutive selected chunks whose latent modes differ.
///
/// This is an operational measure of strategy oscillation.
pub fn mode_switch_rate(record: &RolloutRecord) -> Result<f64> {
    let chunks = &record.selected_chunks;
    if chunks.len() < 2 {
        return Err(BidError::InvalidValue(format!(
            "switch rate needs at least 2 replanning ticks, got {}",
            chunks.len()
        )));
    }
    let modes = chunks
        .iter()
        .map(|c| c.latent_mode().ok_or_else(|| BidError::InvalidValue("chunk without mode tag".into())))
        .collect::<Result<Vec<u8>>>()?;
    let switches = modes.windows(2).filter(|w| w[0] != w[1]).count();
    Ok(switches as f64 / (modes.len() - 1) as f64)
}

fn clip_norm(v: [f64; 2], max: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n > max {
        [v[0] * max / n, v[1] * max / n]
    } else {
        v
    }
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 { 0.0 } else { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(BidError::InvalidValue(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(BidError::InvalidValue(format!("{name} must be finite and non-negative, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk::step_distance;
    use crate::decoder::{closed_loop_rollout, VanillaDecoder};

    fn hist(tick: usize) -> ObservationHistory {
        let mut h = ObservationHistory::new(1, vec![0.0, 0.0]).unwrap();
        for _ in 0..tick {
            h.push(vec![0.0, 0.0]).unwrap();
        }
        h
    }

    fn lanes(sigma: f64) -> BimodalChunkSampler {
        BimodalChunkSampler::lanes(1.0, 1.0, sigma, 16).unwrap()
    }

    #[test]
    fn noiseless_pure_mode_a_reproduces_reference() {
        let mut s = BimodalChunkSampler::arcs([0.0, 0.0], [20.0, 0.0], 5.0, 30, 0.0, 16).unwrap();
        s.mode_prob = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in s.sample(&hist(7), 20, &mut rng).unwrap() {
            assert_eq!(c.latent_mode(), Some(MODE_A));
            for (k, a) in c.actions().iter().enumerate() {
                assert_eq!(a.values(), s.mode_a.at(7 + k));
            }
        }
    }

    #[test]
    fn mode_frequency_matches_weight() {
        let s = lanes(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let chunks = s.sample(&hist(0), 10_000, &mut rng).unwrap();
        let a = chunks.iter().filter(|c| c.latent_mode() == Some(MODE_A)).count();
        let f = a as f64 / 10_000.0;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn constant_separation_gives_linear_chunk_distance() {
        let delta = 2.5;
        let mut s = BimodalChunkSampler::lanes(1.0, delta, 0.0, 16).unwrap();
        s.mode_prob = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = s.sample(&hist(0), 1, &mut rng).unwrap().remove(0);
        s.mode_prob = 0.0;
        let b = s.sample(&hist(0), 1, &mut rng).unwrap().remove(0);
        let total: f64 = a
            .actions()
            .iter()
            .zip(b.actions())
            .map(|(x, y)| step_distance(x, y).unwrap())
            .sum();
        assert!((total - 16.0 * delta).abs() < 1e-12);
    }

    #[test]
    fn identity_weakening_matches_base_bitwise() {
        let s = BimodalChunkSampler::arcs([0.0, 0.0], [20.0, 0.0], 5.0, 30, 0.3, 16).unwrap();
        let w = weaken(&s, 0.0, 0.0).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(s.sample(&hist(4), 12, &mut r1).unwrap(), w.sample(&hist(4), 12, &mut r2).unwrap());
    }

    #[test]
    fn full_blur_collapses_to_average() {
        let s = BimodalChunkSampler::arcs([0.0, 0.0], [20.0, 0.0], 5.0, 30, 0.0, 16).unwrap();
        let w = weaken(&s, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chunks = w.sample(&hist(3), 50, &mut rng).unwrap();
        for c in &chunks {
            for (k, a) in c.actions().iter().enumerate() {
                let avg: Vec<f64> =
                    s.mode_a.at(3 + k).iter().zip(s.mode_b.at(3 + k)).map(|(x, y)| 0.5 * (x + y)).collect();
                for (v, m) in a.values().iter().zip(&avg) {
                    assert!((v - m).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn half_blur_is_midpoint_of_mode_and_average() {
        let a = ModeTrajectory::constant(vec![1.0, 2.0]).unwrap();
        let b = ModeTrajectory::constant(vec![3.0, -2.0]).unwrap();
        let mut s = BimodalChunkSampler::new(a, b, 1.0, 0.0, 4).unwrap();
        s.mode_prob = 1.0;
        let w = weaken(&s, 0.5, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = w.sample(&hist(0), 1, &mut rng).unwrap().remove(0);
        // mode A (1, 2), average (2, 0), midpoint (1.5, 1)
        for a in c.actions() {
            assert_eq!(a.values(), &[1.5, 1.0]);
        }
    }

    #[test]
    fn weaken_rejects_out_of_range_blur() {
        let s = lanes(0.1);
        assert!(weaken(&s, 1.5, 0.0).is_err());
        assert!(weaken(&s, -0.1, 0.0).is_err());
        assert!(weaken(&s, 0.5, -1.0).is_err());
    }

    #[test]
    fn arc_displacements_sum_to_goal() {
        let tr = parabolic_arc([1.0, 2.0], [11.0, 2.0], 3.0, 25).unwrap();
        let mut p = [1.0, 2.0];
        let mut peak: f64 = 0.0;
        for t in 0..40 {
            let d = tr.at(t);
            p[0] += d[0];
            p[1] += d[1];
            peak = peak.max(p[1] - 2.0);
        }
        assert!((p[0] - 11.0).abs() < 1e-9 && (p[1] - 2.0).abs() < 1e-9);
        assert!(peak > 2.9 && peak <= 3.0 + 1e-12);
    }

    #[test]
    fn table_parsing() {
        let t = ModeTrajectory::parse_table("# tick x y\n0, 1.0, 0.5\n1 2.0 0.25\n\n2,3,0\n").unwrap();
        assert_eq!(t.at(1), &[2.0, 0.25]);
        assert_eq!(t.at(99), &[3.0, 0.0]);
        assert!(ModeTrajectory::parse_table("0,1,1\n2,1,1\n").is_err());
        assert!(ModeTrajectory::parse_table("0,1,x\n").is_err());
        assert!(ModeTrajectory::parse_table("0,1,1\n1,1\n").is_err());
        assert!(ModeTrajectory::parse_table("").is_err());
    }

    #[test]
    fn static_pursuit_succeeds_in_ceiling_ticks() {
        let mut env = DriftEnv::new(0.0, 0.1, 0.7, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        env.reset(&mut rng);
        let bound = (5.0f64 / 0.7).ceil() as usize;
        let mut ticks = 0;
        while !env.success() {
            let a = env.agent();
            let t = env.target();
            env.drift_step([t[0] - a[0], t[1] - a[1]]).unwrap();
            ticks += 1;
            assert!(ticks <= bound);
        }
    }

    #[test]
    fn idle_agent_error_grows_linearly() {
        let mut env = DriftEnv::new(0.25, 0.1, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        env.reset(&mut rng);
        for _ in 0..DRIFT_RESAMPLE_TICKS - 1 {
            env.drift_step([0.0, 0.0]).unwrap();
        }
        let t = (DRIFT_RESAMPLE_TICKS - 1) as f64;
        assert!((env.distance() - 0.25 * t).abs() < 1e-9);
    }

    #[test]
    fn tolerance_covering_start_succeeds_at_reset() {
        let mut env = DriftEnv::new(0.0, 3.0, 1.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        env.reset(&mut rng);
        assert!(env.success());
        assert_eq!(env.tick(), 0);
    }

    #[test]
    fn drift_clips_actions() {
        let mut env = DriftEnv::new(0.0, 0.1, 1.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        env.reset(&mut rng);
        env.drift_step([3.0, 4.0]).unwrap();
        assert!((env.agent()[0] - 0.6).abs() < 1e-12 && (env.agent()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn planar_env_detects_collision_and_goal() {
        let obstacle = Disk { center: [5.0, 0.0], radius: 1.0 };
        let mut env = PlanarEnv::new([0.0, 0.0], 10.0)
            .unwrap()
            .with_goal([10.0, 0.0], 0.5)
            .unwrap()
            .with_obstacle(obstacle)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        let s = env.step(&Action::new(vec![10.0, 0.0]).unwrap(), &mut rng).unwrap();
        assert!(s.terminal && env.collided() && !env.success());

        env.reset(&mut rng);
        for a in [[5.0, 3.0], [5.0, -3.0]] {
            env.step(&Action::new(a.to_vec()).unwrap(), &mut rng).unwrap();
        }
        assert!(env.success());
    }

    fn tagged(modes: &[u8]) -> RolloutRecord {
        RolloutRecord {
            selected_chunks: modes
                .iter()
                .enumerate()
                .map(|(t, &m)| ActionChunk::from_rows(t, vec![vec![0.0]]).unwrap().with_latent_mode(Some(m)))
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn switch_rate_extremes() {
        assert_eq!(mode_switch_rate(&tagged(&[0, 0, 0, 0])).unwrap(), 0.0);
        assert_eq!(mode_switch_rate(&tagged(&[0, 1, 0, 1, 0])).unwrap(), 1.0);
        assert!(mode_switch_rate(&tagged(&[0])).is_err());
        let mut r = tagged(&[0, 1]);
        r.selected_chunks[1] = ActionChunk::from_rows(1, vec![vec![0.0]]).unwrap();
        assert!(mode_switch_rate(&r).is_err());
    }

    #[test]
    fn vanilla_switch_rate_is_one_half() {
        let mut env = PlanarEnv::new([0.0, 0.0], 10.0).unwrap();
        let mut dec = VanillaDecoder::new(lanes(0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rec = closed_loop_rollout(&mut env, &mut dec, 10_001, 1, &mut rng).unwrap();
        let r = mode_switch_rate(&rec).unwrap();
        assert!((r - 0.5).abs() <= 0.02, "{r}");
    }
}
