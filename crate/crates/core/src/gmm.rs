//! Two-component 1-D Gaussian mixture fit by EM, terrain classification of
//! rolling-std windows and the window-size sweep.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heightfield::Terrain;
use crate::policy::HALF_LN_2PI;
use crate::telemetry::{FeatureSeries, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Absolute log-likelihood change that counts as converged.
    pub tol: f64,
    pub sigma_floor: f64,
    /// Seeded random restarts tried after the percentile initialization.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-8, sigma_floor: 1e-6, restarts: 5, seed: 0 }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("gmm max_iter must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("gmm tol must be non-negative".into()));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Config("gmm sigma_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Raw mixture parameters, indexed by component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub stds: [f64; 2],
}

impl GmmParams {
    /// Means at the 25th and 75th percentiles, both stds at half the pooled
    /// std, equal weights.
    pub fn percentile_init(data: &[f64], sigma_floor: f64) -> Self {
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (_, var) = mean_var(data);
        let s = (0.5 * var.sqrt()).max(sigma_floor);
        Self { weights: [0.5; 2], means: [percentile(&sorted, 0.25), percentile(&sorted, 0.75)], stds: [s; 2] }
    }

    /// Random means inside the data range, random stds and weights.
    pub fn random_init<R: Rng + ?Sized>(data: &[f64], sigma_floor: f64, rng: &mut R) -> Self {
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        let w = rng.random_range(0.1..0.9);
        let mut draw_std = || (range * rng.random_range(0.05..0.5)).max(sigma_floor);
        let stds = [draw_std(), draw_std()];
        Self {
            weights: [w, 1.0 - w],
            means: [lo + range * rng.random::<f64>(), lo + range * rng.random::<f64>()],
            stds,
        }
    }

    fn log_joint(&self, x: f64) -> [f64; 2] {
        [0, 1].map(|k| {
            let z = (x - self.means[k]) / self.stds[k];
            self.weights[k].ln() - self.stds[k].ln() - HALF_LN_2PI - 0.5 * z * z
        })
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: f64) -> [f64; 2] {
        let lj = self.log_joint(x);
        let lse = log_sum_exp(lj);
        let g0 = (lj[0] - lse).exp();
        let g1 = (lj[1] - lse).exp();
        let s = g0 + g1;
        [g0 / s, g1 / s]
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| log_sum_exp(self.log_joint(x))).sum()
    }
}

fn log_sum_exp(v: [f64; 2]) -> f64 {
    let m = v[0].max(v[1]);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((v[0] - m).exp() + (v[1] - m).exp()).ln()
}

fn mean_var(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    (mean, data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fitted mixture with its component-to-terrain map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub stds: [f64; 2],
    /// Terrain assigned to each component; the lower mean is flat.
    pub alignment: [Terrain; 2],
    pub loglik: f64,
}

impl GmmModel {
    pub fn from_params(p: GmmParams, loglik: f64) -> Self {
        let alignment =
            if p.means[1] < p.means[0] { [Terrain::Rough, Terrain::Flat] } else { [Terrain::Flat, Terrain::Rough] };
        Self { weights: p.weights, means: p.means, stds: p.stds, alignment, loglik }
    }

    pub fn params(&self) -> GmmParams {
        GmmParams { weights: self.weights, means: self.means, stds: self.stds }
    }

    pub fn responsibilities(&self, x: f64) -> [f64; 2] {
        self.params().responsibilities(x)
    }

    /// Index of the component mapped to `terrain`.
    pub fn component_of(&self, terrain: Terrain) -> usize {
        if self.alignment[0] == terrain {
            0
        } else {
            1
        }
    }

    /// Most responsible component's terrain; ties go to flat.
    pub fn classify_value(&self, x: f64) -> Terrain {
        let g = self.responsibilities(x);
        let f = self.component_of(Terrain::Flat);
        if g[f] >= g[1 - f] {
            Terrain::Flat
        } else {
            Terrain::Rough
        }
    }

    pub fn classify(&self, values: &[f64]) -> Vec<Terrain> {
        values.iter().map(|&x| self.classify_value(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: GmmModel,
    /// Log-likelihood of the initial parameters and after every M-step.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

fn check_data(data: &[f64]) -> Result<()> {
    if data.len() < 4 {
        return Err(Error::Input(format!("need at least 4 data points, got {}", data.len())));
    }
    if let Some(bad) = data.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Input(format!("feature values must be finite and non-negative, found {bad}")));
    }
    if data.iter().all(|&x| x == data[0]) {
        return Err(Error::Degenerate(format!("all {} data points equal {}", data.len(), data[0])));
    }
    Ok(())
}

/// EM from a given starting point.
pub fn em_fit(data: &[f64], init: GmmParams, config: &GmmConfig) -> Result<EmFit> {
    config.validate()?;
    check_data(data)?;
    let floor = config.sigma_floor;
    let mut p = init;
    for k in 0..2 {
        if !(p.weights[k] > 0.0 && p.means[k].is_finite() && p.stds[k].is_finite()) {
            return Err(Error::Input(format!("invalid initial parameters {init:?}")));
        }
        p.stds[k] = p.stds[k].max(floor);
    }
    let wsum = p.weights[0] + p.weights[1];
    p.weights = p.weights.map(|w| w / wsum);

    let n = data.len() as f64;
    let mut trace = Vec::new();
    let mut gamma = vec![[0.0; 2]; data.len()];
    let mut iterations = 0;
    loop {
        let mut ll = 0.0;
        for (g, &x) in gamma.iter_mut().zip(data) {
            let lj = p.log_joint(x);
            let lse = log_sum_exp(lj);
            ll += lse;
            *g = [(lj[0] - lse).exp(), (lj[1] - lse).exp()];
        }
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("log-likelihood became {ll}")));
        }
        let converged = trace.last().is_some_and(|&prev: &f64| ll - prev < config.tol);
        trace.push(ll);
        if converged || iterations == config.max_iter {
            return Ok(EmFit { model: GmmModel::from_params(p, ll), trace, iterations });
        }

        for k in 0..2 {
            let nk: f64 = gamma.iter().map(|g| g[k]).sum();
            if nk <= 0.0 {
                p.weights[k] = 0.0;
                continue;
            }
            let mu = gamma.iter().zip(data).map(|(g, x)| g[k] * x).sum::<f64>() / nk;
            let var = gamma.iter().zip(data).map(|(g, x)| g[k] * (x - mu) * (x - mu)).sum::<f64>() / nk;
            p.weights[k] = nk / n;
            p.means[k] = mu;
            p.stds[k] = var.sqrt().max(floor);
        }
        iterations += 1;
    }
}

/// Percentile start plus `config.restarts` seeded random starts; the fit
/// with the highest log-likelihood wins, earliest on ties.
pub fn fit(data: &[f64], config: &GmmConfig) -> Result<EmFit> {
    config.validate()?;
    check_data(data)?;
    let mut best = em_fit(data, GmmParams::percentile_init(data, config.sigma_floor), config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.restarts {
        let init = GmmParams::random_init(data, config.sigma_floor, &mut rng);
        let cand = em_fit(data, init, config)?;
        if cand.model.loglik > best.model.loglik {
            best = cand;
        }
    }
    Ok(best)
}

/// Rows are true (flat, rough), columns predicted (flat, rough).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn accuracy(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.correct() as f64 / t as f64)
    }

    /// Fraction of true `terrain` windows predicted as such; `None` if the
    /// class is absent.
    pub fn recall(&self, terrain: Terrain) -> Option<f64> {
        let row = self.counts[terrain.index()];
        let t = row[0] + row[1];
        (t > 0).then(|| row[terrain.index()] as f64 / t as f64)
    }
}

pub fn evaluate(predicted: &[Terrain], truth: &[Terrain]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::Input(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let mut m = ConfusionMatrix::default();
    for (p, t) in predicted.iter().zip(truth) {
        m.counts[t.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub window: usize,
    pub model: GmmModel,
    pub confusion: ConfusionMatrix,
    pub iterations: usize,
}

impl SweepRow {
    pub fn mean_std(&self, terrain: Terrain) -> (f64, f64) {
        let k = self.model.component_of(terrain);
        (self.model.means[k], self.model.stds[k])
    }
}

pub const DEFAULT_WINDOWS: [usize; 4] = [10, 20, 40, 70];

/// Pools the labelled windows of every trajectory for one window size.
pub fn pooled_features(trajectories: &[&Trajectory], window: usize, stride: usize) -> Result<(Vec<f64>, Vec<Terrain>)> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for t in trajectories {
        let f = FeatureSeries::from_trajectory(t, window, stride)?;
        for (v, l) in f.values.iter().zip(&f.labels) {
            if let Some(terrain) = l.terrain() {
                values.push(*v);
                labels.push(terrain);
            }
        }
    }
    Ok((values, labels))
}

/// For each window: pool all windows without labels, fit, classify and score
/// against the withheld labels.
pub fn window_sweep(
    trajectories: &[&Trajectory],
    windows: &[usize],
    stride: usize,
    config: &GmmConfig,
) -> Result<Vec<SweepRow>> {
    let largest = windows.iter().copied().max().unwrap_or(0);
    if let Some(t) = trajectories.iter().find(|t| t.len() < largest) {
        return Err(Error::Input(format!("trajectory of {} rows is shorter than window {largest}", t.len())));
    }
    windows
        .iter()
        .map(|&window| {
            let (values, truth) = pooled_features(trajectories, window, stride)?;
            let fit = fit(&values, config)?;
            let confusion = evaluate(&fit.model.classify(&values), &truth)?;
            Ok(SweepRow { window, model: fit.model, confusion, iterations: fit.iterations })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub window: usize,
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub stds: [f64; 2],
    pub alignment: [Terrain; 2],
    pub loglik: f64,
}

pub fn write_models_json(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let records: Vec<ModelRecord> = rows
        .iter()
        .map(|r| ModelRecord {
            window: r.window,
            weights: r.model.weights,
            means: r.model.means,
            stds: r.model.stds,
            alignment: r.model.alignment,
            loglik: r.model.loglik,
        })
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&records)? + "\n")?;
    Ok(())
}

pub fn read_models_json(path: &Path) -> Result<Vec<ModelRecord>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Columns: window, mean_flat, std_flat, mean_rough, std_rough, accuracy (percent).
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window", "mean_flat", "std_flat", "mean_rough", "std_rough", "accuracy"])?;
    for r in rows {
        let (mf, sf) = r.mean_std(Terrain::Flat);
        let (mr, sr) = r.mean_std(Terrain::Rough);
        let acc = r.confusion.accuracy().map(|a| format!("{:.2}", 100.0 * a)).unwrap_or_default();
        w.write_record([r.window.to_string(), fmt4(mf), fmt4(sf), fmt4(mr), fmt4(sr), acc])?;
    }
    w.flush()?;
    Ok(())
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Long format: window, true_label, predicted_label, count.
pub fn write_confusion_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window", "true_label", "predicted_label", "count"])?;
    for r in rows {
        for t in [Terrain::Flat, Terrain::Rough] {
            for p in [Terrain::Flat, Terrain::Rough] {
                w.write_record([
                    r.window.to_string(),
                    t.to_string(),
                    p.to_string(),
                    r.confusion.counts[t.index()][p.index()].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
