//! Orientation recording of a trained policy and rolling-window features of sin(pitch).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Environment, TargetReachEnv};
use crate::error::{Error, Result};
use crate::heightfield::{AreaLabel, Heightfield, Terrain};
use crate::policy::PolicyNet;

/// One recorded control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub time: f64,
    pub x: f64,
    pub z: f64,
    pub theta_x: f64,
    pub theta_z: f64,
    pub theta_y: f64,
    pub sin_theta_x: f64,
    pub sin_theta_z: f64,
    pub area_label: AreaLabel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sin_pitch(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sin_theta_x).collect()
    }

    pub fn sin_roll(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sin_theta_z).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.rows.is_empty() {
            w.write_record(TRAJECTORY_COLUMNS)?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        if r.headers()?.iter().ne(TRAJECTORY_COLUMNS) {
            return Err(Error::Format { path: path.to_path_buf(), reason: "unexpected trajectory columns".into() });
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<TrajectoryRow>, _>>()?;
        Ok(Self { rows })
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 10] =
    ["step", "time", "x", "z", "theta_x", "theta_z", "theta_y", "sin_theta_x", "sin_theta_z", "area_label"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectParams {
    pub n_steps: usize,
    pub discard: usize,
}

impl Default for CollectParams {
    fn default() -> Self {
        Self { n_steps: 500, discard: 100 }
    }
}

/// Runs the policy's action mean on one area and records every step after
/// the first `discard`. The robot chains target-reaching episodes and is put
/// back inside the area whenever it leaves it.
pub fn collect(
    policy: &PolicyNet,
    field: Arc<Heightfield>,
    terrain: Terrain,
    env_config: EnvConfig,
    params: CollectParams,
    seed: u64,
) -> Result<Trajectory> {
    if params.discard > params.n_steps {
        return Err(Error::Input(format!("discard {} exceeds n_steps {}", params.discard, params.n_steps)));
    }
    let dt = env_config.robot.dt;
    let mut env = TargetReachEnv::new(field, terrain, env_config, seed)?.with_respawn_on_exit(true);
    let mut rows = Vec::with_capacity(params.n_steps - params.discard);
    let mut obs = env.observe();
    for step in 0..params.n_steps {
        obs = env.step(policy.action_mean(&obs)?)?.observation;
        if step < params.discard {
            continue;
        }
        let r = env.robot();
        let e = r.euler;
        rows.push(TrajectoryRow {
            step: step as u64,
            time: step as f64 * dt,
            x: r.x,
            z: r.z,
            theta_x: e.pitch,
            theta_z: e.roll,
            theta_y: e.yaw,
            sin_theta_x: e.pitch.sin(),
            sin_theta_z: e.roll.sin(),
            area_label: env.field().area_of(r.x, r.z),
        });
    }
    Ok(Trajectory { rows })
}

const REFRESH_EVERY: usize = 64;

/// Population standard deviation over every contiguous window; output `i`
/// covers `series[i..i + window]`.
pub fn rolling_std(series: &[f64], window: usize) -> Result<Vec<f64>> {
    rolling_std_strided(series, window, 1)
}

/// Like [`rolling_std`] but keeps only windows starting at multiples of `stride`.
///
/// Sliding sums are updated incrementally and recomputed exactly every
/// few dozen windows to bound drift.
pub fn rolling_std_strided(series: &[f64], window: usize, stride: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::Input(format!("window must be at least 2, got {window}")));
    }
    if stride == 0 {
        return Err(Error::Input("stride must be positive".into()));
    }
    if series.len() < window {
        return Err(Error::Input(format!("series of length {} is shorter than window {window}", series.len())));
    }
    if let Some(bad) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite value {bad} in series")));
    }
    let n = window as f64;
    let count = series.len() - window + 1;
    let mut out = Vec::with_capacity(count.div_ceil(stride));
    let (mut mean, mut m2) = two_pass(&series[..window]);
    let mut since_refresh = 0;
    for i in 0..count {
        if i > 0 {
            since_refresh += 1;
            if since_refresh >= REFRESH_EVERY {
                (mean, m2) = two_pass(&series[i..i + window]);
                since_refresh = 0;
            } else {
                let old = series[i - 1];
                let new = series[i + window - 1];
                let old_mean = mean;
                mean += (new - old) / n;
                m2 += (new - old) * (new - mean + old - old_mean);
            }
        }
        if i % stride == 0 {
            out.push((m2.max(0.0) / n).sqrt());
        }
    }
    Ok(out)
}

fn two_pass(values: &[f64]) -> (f64, f64) {
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean, values.iter().map(|v| (v - mean) * (v - mean)).sum())
}

/// Rolling std of sin(pitch) with the ground-truth label of each window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub window: usize,
    pub stride: usize,
    pub start_steps: Vec<u64>,
    pub values: Vec<f64>,
    /// Majority row label inside each window.
    pub labels: Vec<AreaLabel>,
}

impl FeatureSeries {
    pub fn from_trajectory(traj: &Trajectory, window: usize, stride: usize) -> Result<Self> {
        let values = rolling_std_strided(&traj.sin_pitch(), window, stride)?;
        let mut start_steps = Vec::with_capacity(values.len());
        let mut labels = Vec::with_capacity(values.len());
        for k in 0..values.len() {
            let i = k * stride;
            start_steps.push(traj.rows[i].step);
            labels.push(majority_label(&traj.rows[i..i + window]));
        }
        Ok(Self { window, stride, start_steps, values, labels })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Columns: start_step, window, std, area_label.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["start_step", "window", "std", "area_label"])?;
        for ((s, v), l) in self.start_steps.iter().zip(&self.values).zip(&self.labels) {
            w.write_record([s.to_string(), self.window.to_string(), v.to_string(), l.as_str().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn majority_label(rows: &[TrajectoryRow]) -> AreaLabel {
    let mut counts = [0usize; 3];
    for r in rows {
        counts[label_index(r.area_label)] += 1;
    }
    let first = rows[0].area_label;
    [AreaLabel::Flat, AreaLabel::Rough, AreaLabel::Neither].into_iter().fold(first, |best, l| {
        if counts[label_index(l)] > counts[label_index(best)] {
            l
        } else {
            best
        }
    })
}

fn label_index(l: AreaLabel) -> usize {
    match l {
        AreaLabel::Flat => 0,
        AreaLabel::Rough => 1,
        AreaLabel::Neither => 2,
    }
}
