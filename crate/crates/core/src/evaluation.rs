//! Target-reaching success rates and the model × area cross-evaluation table.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, Environment, TargetReachEnv};
use crate::episode::{EpisodeStatus, ACT_DIM};
use crate::error::Result;
use crate::heightfield::{Heightfield, Terrain};
use crate::policy::PolicyNet;
use crate::robot::MAX_WHEEL_RATE;

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Action mean of the policy.
    Deterministic(&'a PolicyNet),
    /// Sampled from the policy's Gaussian.
    Stochastic(&'a PolicyNet),
    /// Independent uniform wheel commands over the full action range.
    UniformRandom,
}

impl Controller<'_> {
    pub fn action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<[f64; ACT_DIM]> {
        match self {
            Controller::Deterministic(p) => p.action_mean(obs),
            Controller::Stochastic(p) => Ok(p.act(obs, rng)?.0),
            Controller::UniformRandom => Ok([0; ACT_DIM].map(|_| rng.random_range(-MAX_WHEEL_RATE..=MAX_WHEEL_RATE))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub episodes: usize,
    pub successes: usize,
    /// Seconds to reach the target, successful episodes only.
    pub reach_times: Vec<f64>,
}

impl EvalStats {
    pub fn success_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }

    /// Mean and population standard deviation of the reach time.
    pub fn time_mean_std(&self) -> Option<(f64, f64)> {
        if self.reach_times.is_empty() {
            return None;
        }
        let n = self.reach_times.len() as f64;
        let mean = self.reach_times.iter().sum::<f64>() / n;
        let var = self.reach_times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    }
}

/// Runs `episodes` consecutive episodes and counts how many reach the target.
pub fn evaluate<E: Environment>(
    env: &mut E,
    controller: Controller<'_>,
    episodes: usize,
    dt: f64,
    seed: u64,
) -> Result<EvalStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = EvalStats { episodes: 0, successes: 0, reach_times: Vec::new() };
    let mut obs = env.observe();
    while stats.episodes < episodes {
        let action = controller.action(&obs, &mut rng)?;
        let tr = env.step(action)?;
        obs = tr.observation;
        if let Some(s) = tr.summary {
            stats.episodes += 1;
            if s.status == EpisodeStatus::Reached {
                stats.successes += 1;
                stats.reach_times.push(f64::from(s.steps) * dt);
            }
        }
    }
    Ok(stats)
}

/// Convenience: evaluation on a fresh environment over one area.
pub fn evaluate_on(
    field: Arc<Heightfield>,
    terrain: Terrain,
    env_config: EnvConfig,
    controller: Controller<'_>,
    episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    let mut env = TargetReachEnv::new(field, terrain, env_config, seed)?;
    evaluate(&mut env, controller, episodes, env_config.robot.dt, seed ^ 0x5EED)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEvalRow {
    pub model: String,
    pub area: Terrain,
    pub stats: EvalStats,
}

/// Evaluates every model on every area.
pub fn cross_evaluate(
    field: Arc<Heightfield>,
    env_config: EnvConfig,
    models: &[(String, &PolicyNet)],
    episodes: usize,
    seed: u64,
) -> Result<Vec<CrossEvalRow>> {
    let mut rows = Vec::new();
    for (model, policy) in models {
        for area in [Terrain::Flat, Terrain::Rough] {
            let stats = evaluate_on(
                field.clone(),
                area,
                env_config,
                Controller::Deterministic(policy),
                episodes,
                seed.wrapping_add(area.index() as u64),
            )?;
            rows.push(CrossEvalRow { model: model.clone(), area, stats });
        }
    }
    Ok(rows)
}

/// Columns: model, area, success_pct, arrivals, episodes, mean_time_s, std_time_s.
pub fn write_cross_eval(path: &Path, rows: &[CrossEvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "area", "success_pct", "arrivals", "episodes", "mean_time_s", "std_time_s"])?;
    for r in rows {
        let (mean, std) =
            r.stats.time_mean_std().map(|(m, s)| (format!("{m:.2}"), format!("{s:.2}"))).unwrap_or_default();
        w.write_record([
            r.model.clone(),
            r.area.to_string(),
            format!("{:.1}", 100.0 * r.stats.success_rate()),
            r.stats.successes.to_string(),
            r.stats.episodes.to_string(),
            mean,
            std,
        ])?;
    }
    w.flush()?;
    Ok(())
}
