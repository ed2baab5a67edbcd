//! Target-reaching task: target sampling, termination limits, observation
//! assembly and reward shaping.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heightfield::{AreaRect, Heightfield};
use crate::robot::{self, heading_axes, orientation_features, RobotParams, RobotState};

/// Slack added before flooring threshold counts (0.3 / 0.1 = 2.9999999999999996).
const FLOOR_EPS: f64 = 1e-9;

/// How the progress payout measures distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressMetric {
    /// Planar distance between the episode's start position and the robot.
    FromStart,
    /// Reduction of the robot-target distance relative to the initial distance.
    TowardTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConstants {
    /// Step length Δ in meters.
    pub delta: f64,
    /// Targets are drawn from the annulus `(delta, outer_factor * delta]`.
    pub outer_factor: f64,
    /// Reached when the planar distance drops below this.
    pub reach_radius: f64,
    pub progress_metric: ProgressMetric,
    /// Robot respawns tried before target sampling is declared impossible.
    pub max_spawn_retries: u32,
    /// Target draws per robot position before respawning.
    pub target_attempts: u32,
}

impl Default for TaskConstants {
    fn default() -> Self {
        Self {
            delta: 0.1,
            outer_factor: 5.0,
            reach_radius: 0.1,
            progress_metric: ProgressMetric::FromStart,
            max_spawn_retries: 100,
            target_attempts: 256,
        }
    }
}

impl TaskConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config("delta must be positive".into()));
        }
        if !(self.outer_factor > 1.0) || !(self.reach_radius > 0.0) {
            return Err(Error::Config("outer_factor must exceed 1 and reach_radius be positive".into()));
        }
        if self.max_spawn_retries == 0 || self.target_attempts == 0 {
            return Err(Error::Config("retry counts must be positive".into()));
        }
        Ok(())
    }

    pub fn inner_radius(&self) -> f64 {
        self.delta
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_factor * self.delta
    }
}

/// Reward coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub base_offset: f64,
    pub base_scale: f64,
    /// Budget shared between the base reward and the progress payouts (1+2+3+4+5).
    pub remaining_budget: f64,
    /// Cap on the number of Δ steps counted for the base reward.
    pub max_steps_counted: u32,
    pub orientation_scale: f64,
    pub progress_scale: f64,
    pub mes_offset: f64,
    pub mes_per_meter: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            base_offset: 100.0,
            base_scale: 10.0,
            remaining_budget: 15.0,
            max_steps_counted: 5,
            orientation_scale: 50.0,
            progress_scale: 100.0,
            mes_offset: 300.0,
            mes_per_meter: 200.0,
        }
    }
}

/// Maximum episode length for an initial distance: `300 + 200·ID`, rounded.
pub fn max_episode_steps(initial_distance: f64) -> u32 {
    max_episode_steps_with(initial_distance, &RewardConfig::default())
}

pub fn max_episode_steps_with(initial_distance: f64, rewards: &RewardConfig) -> u32 {
    (rewards.mes_offset + rewards.mes_per_meter * initial_distance).round().max(1.0) as u32
}

/// Drift limit `(ID + 2Δ) − kΔ`.
pub fn penalty_distance(initial_distance: f64, k: u32, delta: f64) -> f64 {
    (initial_distance + 2.0 * delta) - k as f64 * delta
}

/// Number of Δ approach thresholds crossed given the closest distance so far.
pub fn thresholds_crossed(initial_distance: f64, min_distance: f64, delta: f64) -> u32 {
    let max = (initial_distance / delta + FLOOR_EPS).floor().max(0.0);
    ((initial_distance - min_distance) / delta + FLOOR_EPS).floor().clamp(0.0, max) as u32
}

/// `BR = 100 + 10·RD`, `RD = 15 − N(N+1)/2`, `N = min(⌊ID/Δ⌋, 5)`.
pub fn base_reward(initial_distance: f64, delta: f64) -> f64 {
    base_reward_with(initial_distance, delta, &RewardConfig::default())
}

pub fn base_reward_with(initial_distance: f64, delta: f64, rewards: &RewardConfig) -> f64 {
    let n = ((initial_distance / delta + FLOOR_EPS).floor().max(0.0) as u32).min(rewards.max_steps_counted);
    let triangular = f64::from(n * (n + 1) / 2);
    let rd = rewards.remaining_budget - triangular;
    rewards.base_offset + rewards.base_scale * rd
}

/// Truncates (toward zero) to one decimal place.
pub fn truncate_tenth(value: f64) -> f64 {
    (value * 10.0 + FLOOR_EPS).floor().max(0.0) / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeStatus {
    Running,
    Reached,
    Timeout,
    Drifted,
}

impl EpisodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeStatus::Running => "running",
            EpisodeStatus::Reached => "reached",
            EpisodeStatus::Timeout => "timeout",
            EpisodeStatus::Drifted => "drifted",
        }
    }

    pub fn is_done(self) -> bool {
        self != EpisodeStatus::Running
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub initial_position: [f64; 2],
    pub target: [f64; 3],
    pub initial_distance: f64,
    pub max_steps: u32,
    pub step_count: u32,
    pub k: u32,
    pub min_distance: f64,
    /// Approach thresholds (1-based) that have already paid out.
    pub progress_ledger: BTreeSet<u32>,
    /// Running sum of cos θx over simulated steps.
    pub mo_accumulator: f64,
    pub total_reward: f64,
    pub status: EpisodeStatus,
}

impl EpisodeState {
    pub fn new(robot: &RobotState, target: [f64; 3], rewards: &RewardConfig) -> Self {
        let initial_distance = robot.planar_distance_to(target[0], target[2]);
        Self {
            initial_position: [robot.x, robot.z],
            target,
            initial_distance,
            max_steps: max_episode_steps_with(initial_distance, rewards),
            step_count: 0,
            k: 0,
            min_distance: initial_distance,
            progress_ledger: BTreeSet::new(),
            mo_accumulator: 0.0,
            total_reward: 0.0,
            status: EpisodeStatus::Running,
        }
    }

    /// Episode average of cos θx.
    pub fn mean_orientation(&self) -> f64 {
        if self.step_count == 0 {
            0.0
        } else {
            self.mo_accumulator / f64::from(self.step_count)
        }
    }

    pub fn penalty_distance(&self, delta: f64) -> f64 {
        penalty_distance(self.initial_distance, self.k, delta)
    }

    /// Folds a new robot-target distance into the minimum and the threshold count `k`.
    pub fn update_k(&mut self, current_distance: f64, delta: f64) {
        self.min_distance = self.min_distance.min(current_distance);
        let k = thresholds_crossed(self.initial_distance, self.min_distance, delta);
        self.k = self.k.max(k);
    }

    /// `FinalReward = BR + OR − TP`; only defined once the target is reached.
    pub fn final_reward(&self, delta: f64, rewards: &RewardConfig) -> Result<f64> {
        if self.status != EpisodeStatus::Reached {
            return Err(Error::Input(format!("final reward requested for a {} episode", self.status.as_str())));
        }
        let br = base_reward_with(self.initial_distance, delta, rewards);
        let or = rewards.orientation_scale * self.mean_orientation();
        let tp = f64::from(self.step_count) / f64::from(self.max_steps);
        Ok(br + or - tp)
    }

    /// Pays `100·PD` for every crossed threshold not yet in the ledger.
    pub fn progress_reward(&mut self, position: [f64; 2], constants: &TaskConstants, rewards: &RewardConfig) -> f64 {
        let mut paid = 0.0;
        for threshold in 1..=self.k {
            if self.progress_ledger.insert(threshold) {
                let raw = match constants.progress_metric {
                    ProgressMetric::FromStart => {
                        (position[0] - self.initial_position[0]).hypot(position[1] - self.initial_position[1])
                    }
                    ProgressMetric::TowardTarget => {
                        let d = (position[0] - self.target[0]).hypot(position[1] - self.target[2]);
                        (self.initial_distance - d).max(0.0)
                    }
                };
                paid += rewards.progress_scale * truncate_tenth(raw);
            }
        }
        paid
    }
}

/// Target position in the robot's heading frame plus distance and attitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// `(t_x, t_y, t_z)`: lateral (right positive), vertical, fore-aft (forward positive).
    pub relative_target: [f64; 3],
    pub distance: f64,
    pub orientation: [f64; 6],
}

pub const OBS_DIM: usize = 10;
pub const ACT_DIM: usize = 2;

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let [tx, ty, tz] = self.relative_target;
        let o = self.orientation;
        [tx, ty, tz, self.distance, o[0], o[1], o[2], o[3], o[4], o[5]]
    }
}

pub fn build_observation(robot: &RobotState, target: [f64; 3]) -> Observation {
    let (fwd, right) = heading_axes(robot.euler.yaw);
    let dx = target[0] - robot.x;
    let dz = target[2] - robot.z;
    let tx = dx * right[0] + dz * right[1];
    let tz = dx * fwd[0] + dz * fwd[1];
    Observation {
        relative_target: [tx, target[1] - robot.y, tz],
        distance: tx.hypot(tz),
        orientation: orientation_features(robot),
    }
}

/// Draws a target uniformly over the annulus around `(x, z)` clipped to `bounds`.
/// Returns `None` when `attempts` draws all fall outside the bounds.
pub fn sample_target_near<R: Rng + ?Sized>(
    x: f64,
    z: f64,
    rng: &mut R,
    bounds: &AreaRect,
    constants: &TaskConstants,
) -> Option<([f64; 2], f64)> {
    let r_in = constants.inner_radius();
    let r_out = constants.outer_radius();
    for _ in 0..constants.target_attempts {
        // Inverse CDF of the area-uniform radial law; 1 − u keeps r in (r_in, r_out].
        let u: f64 = 1.0 - rng.random::<f64>();
        let r = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let (tx, tz) = (x + r * angle.cos(), z + r * angle.sin());
        if r > r_in && bounds.contains(tx, tz) {
            return Some(([tx, tz], r));
        }
    }
    None
}

/// Samples a target around the robot, settling its height onto the field.
/// Returns the target and the initial distance.
pub fn sample_target<R: Rng + ?Sized>(
    robot: &RobotState,
    rng: &mut R,
    bounds: &AreaRect,
    constants: &TaskConstants,
    field: &Heightfield,
) -> Result<Option<([f64; 3], f64)>> {
    match sample_target_near(robot.x, robot.z, rng, bounds, constants) {
        Some(([tx, tz], _)) => {
            let ty = field.height_at(tx, tz)?;
            let id = robot.planar_distance_to(tx, tz);
            Ok(Some(([tx, ty, tz], id)))
        }
        None => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStep {
    pub robot: RobotState,
    pub reward: f64,
    pub status: EpisodeStatus,
    /// The robot hit the edge of the field during this step.
    pub clamped: bool,
}

/// Advances one step of a running episode, paying progress and final rewards.
pub fn step_episode(
    state: &mut EpisodeState,
    robot: &RobotState,
    action: [f64; 2],
    field: &Heightfield,
    params: &RobotParams,
    constants: &TaskConstants,
    rewards: &RewardConfig,
) -> Result<EpisodeStep> {
    if state.status != EpisodeStatus::Running {
        return Err(Error::Input("step on a finished episode".into()));
    }
    let outcome = robot::step(robot, action, field, params)?;
    let next = outcome.state;
    state.step_count += 1;
    state.mo_accumulator += next.euler.pitch.cos();

    let distance = next.planar_distance_to(state.target[0], state.target[2]);
    state.update_k(distance, constants.delta);
    let mut reward = state.progress_reward([next.x, next.z], constants, rewards);

    state.status = if distance < constants.reach_radius {
        EpisodeStatus::Reached
    } else if distance > state.penalty_distance(constants.delta) {
        EpisodeStatus::Drifted
    } else if state.step_count >= state.max_steps {
        EpisodeStatus::Timeout
    } else {
        EpisodeStatus::Running
    };
    if state.status == EpisodeStatus::Reached {
        reward += state.final_reward(constants.delta, rewards)?;
    }
    state.total_reward += reward;
    Ok(EpisodeStep { robot: next, reward, status: state.status, clamped: outcome.clamped })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::heightfield::{Terrain, TerrainSpec};

    const D: f64 = 0.1;

    fn field() -> Heightfield {
        Heightfield::generate(&TerrainSpec::default()).unwrap()
    }

    #[test]
    fn mes_values() {
        assert_eq!(max_episode_steps(0.1), 320);
        assert_eq!(max_episode_steps(0.5), 400);
        assert_eq!(max_episode_steps(0.25), 350);
        assert_eq!(max_episode_steps(0.3333), 367);
    }

    #[test]
    fn ped_values() {
        assert!((penalty_distance(0.3, 0, D) - 0.5).abs() < 1e-12);
        assert!((penalty_distance(0.3, 2, D) - 0.3).abs() < 1e-12);
        assert!((penalty_distance(0.1, 0, D) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn base_reward_values() {
        assert_eq!(base_reward(0.5, D), 100.0);
        assert_eq!(base_reward(0.1, D), 240.0);
        assert_eq!(base_reward(0.3, D), 190.0);
        // N saturates at five.
        assert_eq!(base_reward(0.75, D), 100.0);
    }

    #[test]
    fn base_reward_range() {
        for i in 0..=400 {
            let id = 0.1 + 0.4 * f64::from(i) / 400.0;
            let br = base_reward(id, D);
            assert!((100.0..=240.0).contains(&br), "{id} -> {br}");
        }
    }

    #[test]
    fn k_from_min_distance() {
        assert_eq!(thresholds_crossed(0.5, 0.31, D), 1);
        assert_eq!(thresholds_crossed(0.5, 0.5, D), 0);
        assert_eq!(thresholds_crossed(0.5, 0.6, D), 0);
        assert_eq!(thresholds_crossed(0.3, 0.1, D), 2);
        assert_eq!(thresholds_crossed(0.3, 0.0, D), 3);
    }

    #[test]
    fn k_is_monotone_under_retreat() {
        let robot = RobotState::default();
        let mut s = EpisodeState::new(&robot, [0.5, 0.0, 0.0], &RewardConfig::default());
        s.update_k(0.31, D);
        assert_eq!(s.k, 1);
        s.update_k(0.45, D);
        assert_eq!(s.k, 1);
        s.update_k(0.7, D);
        assert_eq!(s.k, 1);
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_tenth(0.37), 0.3);
        assert_eq!(truncate_tenth(0.3), 0.3);
        assert_eq!(truncate_tenth(0.29999999), 0.2);
        assert_eq!(truncate_tenth(0.05), 0.0);
    }

    fn reached_state(mo: f64, id: f64, steps: u32) -> EpisodeState {
        let robot = RobotState::default();
        let mut s = EpisodeState::new(&robot, [id, 0.0, 0.0], &RewardConfig::default());
        s.step_count = steps;
        s.mo_accumulator = mo * f64::from(steps);
        s.status = EpisodeStatus::Reached;
        s
    }

    #[test]
    fn final_reward_composition() {
        let s = reached_state(1.0, 0.1, 160);
        assert_eq!(s.max_steps, 320);
        let r = s.final_reward(D, &RewardConfig::default()).unwrap();
        assert!((r - 289.5).abs() < 1e-9, "{r}");

        let s = reached_state(1.0, 0.1, 320);
        let r = s.final_reward(D, &RewardConfig::default()).unwrap();
        assert!((r - (240.0 + 50.0 - 1.0)).abs() < 1e-9);

        let s = reached_state(0.0, 0.3, 10);
        let r = s.final_reward(D, &RewardConfig::default()).unwrap();
        assert!((r - (190.0 - 10.0 / 360.0)).abs() < 1e-9);
    }

    #[test]
    fn final_reward_tends_to_br_plus_or() {
        let s = reached_state(1.0, 0.2, 1);
        let r = s.final_reward(D, &RewardConfig::default()).unwrap();
        assert!((r - (base_reward(0.2, D) + 50.0)).abs() < 1.0 / 300.0);
    }

    #[test]
    fn final_reward_requires_reached() {
        let mut s = reached_state(1.0, 0.1, 5);
        s.status = EpisodeStatus::Timeout;
        assert!(s.final_reward(D, &RewardConfig::default()).is_err());
    }

    #[test]
    fn progress_pays_once_per_threshold() {
        let robot = RobotState::default();
        let c = TaskConstants::default();
        let rw = RewardConfig::default();
        let mut s = EpisodeState::new(&robot, [0.0, 0.0, 0.5], &rw);
        assert_eq!(s.progress_reward([0.0, 0.0], &c, &rw), 0.0);
        // Walked 0.37 m from start toward the target.
        s.update_k(0.13, D);
        assert_eq!(s.k, 3);
        let paid = s.progress_reward([0.0, 0.37], &c, &rw);
        assert!((paid - 3.0 * 30.0).abs() < 1e-9);
        s.update_k(0.4, D);
        assert_eq!(s.progress_reward([0.0, 0.1], &c, &rw), 0.0);
        s.update_k(0.13, D);
        assert_eq!(s.progress_reward([0.0, 0.37], &c, &rw), 0.0);
    }

    #[test]
    fn progress_single_crossing() {
        let robot = RobotState::default();
        let c = TaskConstants::default();
        let rw = RewardConfig::default();
        let mut s = EpisodeState::new(&robot, [0.0, 0.0, 0.5], &rw);
        s.update_k(0.39, D);
        let paid = s.progress_reward([0.2, 0.31], &c, &rw);
        // |(0.2, 0.31)| = 0.3689 truncates to 0.3.
        assert!((paid - 30.0).abs() < 1e-9);
    }

    #[test]
    fn progress_toward_target_variant() {
        let robot = RobotState::default();
        let c = TaskConstants { progress_metric: ProgressMetric::TowardTarget, ..TaskConstants::default() };
        let rw = RewardConfig::default();
        let mut s = EpisodeState::new(&robot, [0.0, 0.0, 0.5], &rw);
        s.update_k(0.28, D);
        let paid = s.progress_reward([0.3, 0.2], &c, &rw);
        // distance to target = |(0.3, -0.3)| ≈ 0.424, progress 0.076 → 0.0 per payment.
        assert_eq!(paid, 0.0);
        assert_eq!(s.progress_ledger.len(), 2);
    }

    #[test]
    fn observation_frames() {
        let robot = RobotState { x: 1.0, y: 0.2, z: 2.0, ..RobotState::default() };
        let obs = build_observation(&robot, [1.0, 0.5, 3.0]);
        assert!(obs.relative_target[0].abs() < 1e-15);
        assert!((obs.relative_target[1] - 0.3).abs() < 1e-15);
        assert!((obs.relative_target[2] - 1.0).abs() < 1e-15);
        assert!((obs.distance - 1.0).abs() < 1e-15);

        let mut turned = robot;
        turned.euler.yaw = -std::f64::consts::PI;
        let o2 = build_observation(&turned, [1.3, 0.5, 2.4]);
        let o1 = build_observation(&robot, [1.3, 0.5, 2.4]);
        assert!((o2.relative_target[0] + o1.relative_target[0]).abs() < 1e-12);
        assert!((o2.relative_target[2] + o1.relative_target[2]).abs() < 1e-12);
        assert!((o2.distance - o1.distance).abs() < 1e-12);

        let at = build_observation(&robot, [1.0, 0.2, 2.0]);
        assert_eq!(at.relative_target, [0.0, 0.0, 0.0]);
        assert_eq!(at.distance, 0.0);
        assert_eq!(at.to_array().len(), OBS_DIM);
    }

    #[test]
    fn observation_right_is_positive_x() {
        // Facing +Z, a target at world +X lies to the right.
        let robot = RobotState::default();
        let obs = build_observation(&robot, [0.4, 0.0, 0.0]);
        assert!((obs.relative_target[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn sampled_targets_in_annulus_and_bounds() {
        let bounds = AreaRect::default_flat();
        let c = TaskConstants::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..100_000 {
            // Sweep spawn points over the patch, including corners.
            let x = bounds.x_min + bounds.width() * ((i % 97) as f64 / 96.0);
            let z = bounds.z_min + bounds.depth() * ((i % 89) as f64 / 88.0);
            let ([tx, tz], r) = sample_target_near(x, z, &mut rng, &bounds, &c).expect("corner sampling");
            assert!(r > c.delta && r <= 5.0 * c.delta);
            assert!(bounds.contains(tx, tz));
        }
    }

    #[test]
    fn initial_distance_follows_annulus_law() {
        // Bounds far larger than the annulus: no clipping, so the radial CDF
        // is (r² − Δ²) / ((5Δ)² − Δ²).
        let bounds = AreaRect::new(-10.0, 10.0, -10.0, 10.0, Terrain::Flat).unwrap();
        let c = TaskConstants::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let mut r: Vec<f64> = (0..n).map(|_| sample_target_near(0.0, 0.0, &mut rng, &bounds, &c).unwrap().1).collect();
        r.sort_by(f64::total_cmp);
        let cdf = |x: f64| (x * x - 0.01) / (0.25 - 0.01);
        let ks = r
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic.
        assert!(ks < 1.63 / (n as f64).sqrt(), "KS = {ks}");
    }

    #[test]
    fn immediate_reach() {
        let field = field();
        let p = RobotParams::default();
        let c = TaskConstants::default();
        let rw = RewardConfig::default();
        let robot = RobotState::spawn(-1.0, -0.3, 0.0, &field, &p).unwrap();
        let mut s = EpisodeState::new(&robot, [-1.0, 0.0, -0.25], &rw);
        let out = step_episode(&mut s, &robot, [0.0, 0.0], &field, &p, &c, &rw).unwrap();
        assert_eq!(out.status, EpisodeStatus::Reached);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_action_times_out_at_mes() {
        let field = field();
        let p = RobotParams::default();
        let c = TaskConstants::default();
        let rw = RewardConfig::default();
        let mut robot = RobotState::spawn(-1.0, -0.3, 0.0, &field, &p).unwrap();
        let mut s = EpisodeState::new(&robot, [-1.0, 0.0, 0.05], &rw);
        let mes = s.max_steps;
        assert_eq!(mes, 370);
        let mut steps = 0;
        loop {
            let out = step_episode(&mut s, &robot, [0.0, 0.0], &field, &p, &c, &rw).unwrap();
            robot = out.robot;
            steps += 1;
            assert_eq!(out.reward, 0.0);
            if out.status.is_done() {
                assert_eq!(out.status, EpisodeStatus::Timeout);
                break;
            }
        }
        assert_eq!(steps, mes);
        assert!(step_episode(&mut s, &robot, [0.0, 0.0], &field, &p, &c, &rw).is_err());
    }

    #[test]
    fn drifting_away_terminates() {
        let field = field();
        let p = RobotParams::default();
        let c = TaskConstants::default();
        let rw = RewardConfig::default();
        let robot = RobotState::spawn(-1.0, -0.3, 0.0, &field, &p).unwrap();
        let mut s = EpisodeState::new(&robot, [-1.0, 0.0, -0.1], &rw);
        // Teleport 0.5 m past the target's far side: beyond PED = 0.4.
        let far = RobotState::spawn(-1.0, -0.8, 0.0, &field, &p).unwrap();
        let out = step_episode(&mut s, &far, [0.0, 0.0], &field, &p, &c, &rw).unwrap();
        assert_eq!(out.status, EpisodeStatus::Drifted);
    }

    #[test]
    fn straight_drive_collects_progress_and_final() {
        let field = field();
        let p = RobotParams::default();
        let c = TaskConstants::default();
        let rw = RewardConfig::default();
        let mut robot = RobotState::spawn(-1.0, -0.625, 0.0, &field, &p).unwrap();
        let mut s = EpisodeState::new(&robot, [-1.0, 0.0, -0.2], &rw);
        let mut total = 0.0;
        loop {
            let out = step_episode(&mut s, &robot, [3.0, 3.0], &field, &p, &c, &rw).unwrap();
            robot = out.robot;
            total += out.reward;
            if out.status.is_done() {
                assert_eq!(out.status, EpisodeStatus::Reached);
                break;
            }
        }
        // ID = 0.425 at 0.03 m per step: thresholds are crossed after 4, 7 and
        // 10 steps (0.12, 0.21, 0.30 m from start) and the target after 11.
        assert_eq!(s.step_count, 11);
        assert_eq!(s.max_steps, 385);
        assert_eq!(s.progress_ledger.len(), 3);
        let progress = 10.0 + 20.0 + 30.0;
        let fin = 150.0 + 50.0 - 11.0 / 385.0;
        assert!((total - (progress + fin)).abs() < 1e-9, "{total}");
        assert!(s.k <= (s.initial_distance / D).floor() as u32);
    }
}
