//! Gym-style wrapper running target-reaching episodes back to back on one area.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::episode::{
    build_observation, sample_target, step_episode, EpisodeState, EpisodeStatus, RewardConfig, TaskConstants, ACT_DIM,
    OBS_DIM,
};
use crate::error::{Error, Result};
use crate::heightfield::{AreaRect, Heightfield, Terrain};
use crate::robot::{RobotParams, RobotState};

/// Anything the PPO trainer can roll out in.
pub trait Environment {
    fn observe(&self) -> [f64; OBS_DIM];
    fn step(&mut self, action: [f64; ACT_DIM]) -> Result<Transition>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Observation to act on next (already from a fresh episode when `done`).
    pub observation: [f64; OBS_DIM],
    pub reward: f64,
    pub done: bool,
    pub summary: Option<EpisodeSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub initial_distance: f64,
    pub steps: u32,
    pub status: EpisodeStatus,
    pub total_reward: f64,
    pub mean_orientation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub robot: RobotParams,
    pub task: TaskConstants,
    pub rewards: RewardConfig,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.task.validate()
    }
}

pub struct TargetReachEnv {
    field: Arc<Heightfield>,
    area: AreaRect,
    spawn_rect: AreaRect,
    config: EnvConfig,
    rng: ChaCha8Rng,
    robot: RobotState,
    episode: EpisodeState,
    episodes_started: u64,
    respawn_on_exit: bool,
    exit_events: u64,
}

impl TargetReachEnv {
    pub fn new(field: Arc<Heightfield>, terrain: Terrain, config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let area = *field.rect(terrain);
        let spawn_rect = area.shrink(config.robot.footprint_radius())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let robot = random_pose(&mut rng, &spawn_rect, &field, &config.robot)?;
        let placeholder = EpisodeState::new(&robot, [robot.x, robot.y, robot.z], &config.rewards);
        let mut env = Self {
            field,
            area,
            spawn_rect,
            config,
            rng,
            robot,
            episode: placeholder,
            episodes_started: 0,
            respawn_on_exit: false,
            exit_events: 0,
        };
        env.begin_episode()?;
        Ok(env)
    }

    /// Respawn inside the area as soon as the robot leaves it, instead of
    /// only between episodes.
    pub fn with_respawn_on_exit(mut self, enabled: bool) -> Self {
        self.respawn_on_exit = enabled;
        self
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn episode(&self) -> &EpisodeState {
        &self.episode
    }

    pub fn area(&self) -> &AreaRect {
        &self.area
    }

    pub fn field(&self) -> &Heightfield {
        &self.field
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Times the robot left the area and was put back.
    pub fn exit_events(&self) -> u64 {
        self.exit_events
    }

    fn respawn(&mut self) -> Result<()> {
        self.robot = random_pose(&mut self.rng, &self.spawn_rect, &self.field, &self.config.robot)?;
        Ok(())
    }

    /// Samples a new target around the current pose; the pose is kept unless
    /// the robot is outside the area or no target fits around it.
    fn begin_episode(&mut self) -> Result<()> {
        if !self.area.contains(self.robot.x, self.robot.z) {
            self.respawn()?;
        }
        for _ in 0..self.config.task.max_spawn_retries {
            if let Some((target, _)) =
                sample_target(&self.robot, &mut self.rng, &self.area, &self.config.task, &self.field)?
            {
                self.episode = EpisodeState::new(&self.robot, target, &self.config.rewards);
                self.episodes_started += 1;
                return Ok(());
            }
            self.respawn()?;
        }
        Err(Error::Config(format!(
            "no target fits inside the {} area after {} respawns",
            self.area.label, self.config.task.max_spawn_retries
        )))
    }
}

fn random_pose<R: Rng>(rng: &mut R, rect: &AreaRect, field: &Heightfield, params: &RobotParams) -> Result<RobotState> {
    let x = rect.x_min + rng.random::<f64>() * rect.width();
    let z = rect.z_min + rng.random::<f64>() * rect.depth();
    let yaw = (rng.random::<f64>() * 2.0 - 1.0) * std::f64::consts::PI;
    RobotState::spawn(x, z, yaw, field, params)
}

impl Environment for TargetReachEnv {
    fn observe(&self) -> [f64; OBS_DIM] {
        build_observation(&self.robot, self.episode.target).to_array()
    }

    fn step(&mut self, action: [f64; ACT_DIM]) -> Result<Transition> {
        let out = step_episode(
            &mut self.episode,
            &self.robot,
            action,
            &self.field,
            &self.config.robot,
            &self.config.task,
            &self.config.rewards,
        )?;
        self.robot = out.robot;
        let mut summary = None;
        if out.status.is_done() {
            summary = Some(EpisodeSummary {
                episode: self.episodes_started - 1,
                initial_distance: self.episode.initial_distance,
                steps: self.episode.step_count,
                status: out.status,
                total_reward: self.episode.total_reward,
                mean_orientation: self.episode.mean_orientation(),
            });
            self.begin_episode()?;
        } else if self.respawn_on_exit && !self.area.contains(self.robot.x, self.robot.z) {
            self.exit_events += 1;
            log_exit(&self.area, &self.robot);
            self.respawn()?;
            self.begin_episode()?;
        }
        Ok(Transition { observation: self.observe(), reward: out.reward, done: out.status.is_done(), summary })
    }
}

fn log_exit(area: &AreaRect, robot: &RobotState) {
    if std::env::var_os("TERRAIN_PITCH_VERBOSE").is_some() {
        eprintln!("robot left the {} area at ({:.3}, {:.3}); respawning", area.label, robot.x, robot.z);
    }
}
