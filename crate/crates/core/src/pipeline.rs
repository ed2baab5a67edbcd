//! Stage orchestration and the on-disk artifact tree.
//!
//! ```text
//! <out>/config.toml                 effective configuration
//! <out>/terrain/heightfield.bin
//! <out>/models/{initial-flat,general}.ckpt, {initial-flat,general}.latest.ckpt
//! <out>/logs/train_{initial-flat,general}.csv
//! <out>/telemetry/{flat,rough}.csv
//! <out>/sweep/{results.json,models.json,window_sweep.csv,confusion.csv,features_{flat,rough}_w<W>.csv}
//! <out>/eval/cross_eval.csv
//! <out>/report/{timeseries_flat,timeseries_rough,histogram,window_sweep,confusion,cross_eval}.csv
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::env::TargetReachEnv;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_on, write_cross_eval, Controller, CrossEvalRow};
use crate::gmm::{self, ConfusionMatrix, GmmModel, SweepRow};
use crate::heightfield::{Heightfield, Terrain};
use crate::policy::Checkpoint;
use crate::ppo::{self, derive_seed, PpoConfig};
use crate::telemetry::{self, FeatureSeries, Trajectory};

/// PPO stage: flat-only from scratch, or both areas from the flat model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStage {
    InitialFlat,
    General,
}

impl TrainStage {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainStage::InitialFlat => "initial-flat",
            TrainStage::General => "general",
        }
    }
}

impl fmt::Display for TrainStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial-flat" => Ok(TrainStage::InitialFlat),
            "general" => Ok(TrainStage::General),
            other => Err(Error::Config(format!("unknown training stage `{other}` (expected initial-flat or general)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    GenTerrain,
    TrainInitialFlat,
    TrainGeneral,
    Collect,
    Sweep,
    CrossEval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::GenTerrain,
        Stage::TrainInitialFlat,
        Stage::TrainGeneral,
        Stage::Collect,
        Stage::Sweep,
        Stage::CrossEval,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::GenTerrain => "gen-terrain",
            Stage::TrainInitialFlat => "train-initial-flat",
            Stage::TrainGeneral => "train-general",
            Stage::Collect => "collect",
            Stage::Sweep => "sweep",
            Stage::CrossEval => "cross-eval",
            Stage::Report => "report",
        }
    }

    /// Parses a stage name; `train` selects both training stages.
    pub fn parse_set(s: &str) -> Result<Vec<Stage>> {
        if s == "train" {
            return Ok(vec![Stage::TrainInitialFlat, Stage::TrainGeneral]);
        }
        Stage::ALL.into_iter().find(|st| st.as_str() == s).map(|st| vec![st]).ok_or_else(|| {
            let names: Vec<_> = Stage::ALL.iter().map(|s| s.as_str()).collect();
            Error::Config(format!("unknown stage `{s}`; expected train or one of {}", names.join(", ")))
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Paths of every artifact under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn heightfield(&self) -> PathBuf {
        self.root.join("terrain").join("heightfield.bin")
    }

    pub fn checkpoint(&self, stage: TrainStage) -> PathBuf {
        self.root.join("models").join(format!("{stage}.ckpt"))
    }

    /// Overwritten every few iterations while a stage trains.
    pub fn latest_checkpoint(&self, stage: TrainStage) -> PathBuf {
        self.root.join("models").join(format!("{stage}.latest.ckpt"))
    }

    pub fn training_log(&self, stage: TrainStage) -> PathBuf {
        self.root.join("logs").join(format!("train_{stage}.csv"))
    }

    pub fn trajectory(&self, area: Terrain) -> PathBuf {
        self.root.join("telemetry").join(format!("{area}.csv"))
    }

    pub fn sweep_dir(&self) -> PathBuf {
        self.root.join("sweep")
    }

    pub fn sweep_results(&self) -> PathBuf {
        self.sweep_dir().join("results.json")
    }

    pub fn cross_eval(&self) -> PathBuf {
        self.root.join("eval").join("cross_eval.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { path: path.to_path_buf(), stage: stage.to_string() })
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Everything the sweep found for one window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub window: usize,
    pub model: GmmModel,
    pub confusion: ConfusionMatrix,
    pub iterations: usize,
}

impl From<&SweepRow> for SweepRecord {
    fn from(r: &SweepRow) -> Self {
        Self { window: r.window, model: r.model, confusion: r.confusion, iterations: r.iterations }
    }
}

impl From<&SweepRecord> for SweepRow {
    fn from(r: &SweepRecord) -> Self {
        Self { window: r.window, model: r.model, confusion: r.confusion, iterations: r.iterations }
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    pub layout: Layout,
    pub verbose: bool,
}

impl Pipeline {
    /// Validates the configuration, creates the output directory and writes
    /// the effective configuration into it.
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(out);
        std::fs::create_dir_all(&layout.root)?;
        std::fs::write(layout.config(), config.to_toml()?)?;
        Ok(Self { config, layout, verbose: false })
    }

    pub fn verbose(mut self, on: bool) -> Self {
        self.verbose = on;
        self
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn seed(&self, stream: u64) -> u64 {
        derive_seed(self.config.seed, stream)
    }

    pub fn run(&self, stages: &[Stage]) -> Result<()> {
        for &stage in stages {
            self.note(format!("== {stage}"));
            match stage {
                Stage::GenTerrain => drop(self.gen_terrain()?),
                Stage::TrainInitialFlat => drop(self.train(TrainStage::InitialFlat)?),
                Stage::TrainGeneral => drop(self.train(TrainStage::General)?),
                Stage::Collect => {
                    self.collect(Terrain::Flat, None)?;
                    self.collect(Terrain::Rough, None)?;
                }
                Stage::Sweep => drop(self.sweep()?),
                Stage::CrossEval => drop(self.cross_eval()?),
                Stage::Report => self.report()?,
            }
        }
        Ok(())
    }

    pub fn gen_terrain(&self) -> Result<Heightfield> {
        let field = Heightfield::generate(&self.config.terrain)?;
        let path = self.layout.heightfield();
        create_parent(&path)?;
        field.save(&path)?;
        let rough = field.heights_in(field.rough_rect());
        let (lo, hi) = rough.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &h| (a.min(h), b.max(h)));
        self.note(format!("terrain {:?} cells, rough heights in [{lo:.4}, {hi:.4}] m", field.dims()));
        Ok(field)
    }

    pub fn load_field(&self) -> Result<Arc<Heightfield>> {
        let path = self.layout.heightfield();
        require(&path, "gen-terrain")?;
        Ok(Arc::new(Heightfield::load(&path)?))
    }

    pub fn load_checkpoint(&self, stage: TrainStage) -> Result<Checkpoint> {
        let path = self.layout.checkpoint(stage);
        require(&path, "train")?;
        Checkpoint::load(&path)
    }

    pub fn ppo_config(&self, stage: TrainStage) -> &PpoConfig {
        match stage {
            TrainStage::InitialFlat => &self.config.train.initial_flat,
            TrainStage::General => &self.config.train.general,
        }
    }

    pub fn train(&self, stage: TrainStage) -> Result<Checkpoint> {
        let field = self.load_field()?;
        let (initial, stream) = match stage {
            TrainStage::InitialFlat => (None, 100),
            TrainStage::General => (Some(self.load_checkpoint(TrainStage::InitialFlat)?), 101),
        };
        let seed = self.seed(stream);
        let env_config = self.config.env();
        let factory = |i: usize| {
            let area = match stage {
                TrainStage::InitialFlat => Terrain::Flat,
                TrainStage::General if i.is_multiple_of(2) => Terrain::Flat,
                TrainStage::General => Terrain::Rough,
            };
            TargetReachEnv::new(field.clone(), area, env_config, derive_seed(seed, 1000 + i as u64))
        };
        let verbose = self.verbose;
        let every = self.config.train.checkpoint_every;
        let latest = self.layout.latest_checkpoint(stage);
        create_parent(&latest)?;
        let outcome = ppo::train(self.ppo_config(stage), factory, initial, stage.as_str(), seed, |row, ck| {
            if every > 0 && (row.iteration + 1) % every == 0 {
                ck.save(&latest)?;
            }
            if verbose && row.iteration % 10 == 0 {
                eprintln!(
                    "  [{stage}] iter {:>4} steps {:>7} success {:.2} entropy {:.3}",
                    row.iteration, row.env_steps, row.success_rate, row.entropy
                );
            }
            Ok(())
        })?;
        let path = self.layout.checkpoint(stage);
        create_parent(&path)?;
        outcome.checkpoint.save(&path)?;
        let log = self.layout.training_log(stage);
        create_parent(&log)?;
        ppo::write_training_log(&log, &outcome.log)?;
        Ok(outcome.checkpoint)
    }

    /// Records the general model (or `model` if given) on one area.
    pub fn collect(&self, area: Terrain, model: Option<&Path>) -> Result<Trajectory> {
        let field = self.load_field()?;
        let checkpoint = match model {
            Some(p) => {
                require(p, "train")?;
                Checkpoint::load(p)?
            }
            None => self.load_checkpoint(TrainStage::General)?,
        };
        let stream = 200 + area.index() as u64;
        let traj = telemetry::collect(
            &checkpoint.policy,
            field,
            area,
            self.config.env(),
            self.config.telemetry.collect_params(),
            self.seed(stream),
        )?;
        let path = self.layout.trajectory(area);
        create_parent(&path)?;
        traj.write_csv(&path)?;
        self.note(format!("collected {} {area} rows", traj.len()));
        Ok(traj)
    }

    pub fn load_trajectory(&self, area: Terrain) -> Result<Trajectory> {
        let path = self.layout.trajectory(area);
        require(&path, "collect")?;
        Trajectory::read_csv(&path)
    }

    pub fn sweep(&self) -> Result<Vec<SweepRow>> {
        let flat = self.load_trajectory(Terrain::Flat)?;
        let rough = self.load_trajectory(Terrain::Rough)?;
        let stride = self.config.telemetry.stride;
        let windows = &self.config.gmm.windows;
        let rows = gmm::window_sweep(&[&flat, &rough], windows, stride, &self.config.gmm.gmm(self.seed(300)))?;
        let dir = self.layout.sweep_dir();
        std::fs::create_dir_all(&dir)?;
        for &w in windows {
            for (traj, area) in [(&flat, Terrain::Flat), (&rough, Terrain::Rough)] {
                FeatureSeries::from_trajectory(traj, w, stride)?
                    .write_csv(&dir.join(format!("features_{area}_w{w}.csv")))?;
            }
        }
        let records: Vec<SweepRecord> = rows.iter().map(SweepRecord::from).collect();
        std::fs::write(self.layout.sweep_results(), serde_json::to_string_pretty(&records)? + "\n")?;
        gmm::write_models_json(&dir.join("models.json"), &rows)?;
        gmm::write_sweep_csv(&dir.join("window_sweep.csv"), &rows)?;
        gmm::write_confusion_csv(&dir.join("confusion.csv"), &rows)?;
        for r in &rows {
            let acc = r.confusion.accuracy().unwrap_or(f64::NAN);
            self.note(format!("window {:>3}: accuracy {:.2}%", r.window, 100.0 * acc));
        }
        Ok(rows)
    }

    pub fn load_sweep(&self) -> Result<Vec<SweepRow>> {
        let path = self.layout.sweep_results();
        require(&path, "sweep")?;
        let records: Vec<SweepRecord> = serde_json::from_slice(&std::fs::read(&path)?)?;
        Ok(records.iter().map(SweepRow::from).collect())
    }

    /// Both trained models and a uniform-random controller on both areas.
    pub fn cross_eval(&self) -> Result<Vec<CrossEvalRow>> {
        let field = self.load_field()?;
        let flat = self.load_checkpoint(TrainStage::InitialFlat)?;
        let general = self.load_checkpoint(TrainStage::General)?;
        let env = self.config.env();
        let episodes = self.config.eval.episodes;
        let seed = self.seed(400);
        let mut rows = Vec::new();
        let controllers = [
            ("initial-flat", Controller::Deterministic(&flat.policy)),
            ("general", Controller::Deterministic(&general.policy)),
            ("random", Controller::UniformRandom),
        ];
        for (name, controller) in controllers {
            for area in [Terrain::Flat, Terrain::Rough] {
                let stats = evaluate_on(field.clone(), area, env, controller, episodes, seed + area.index() as u64)?;
                self.note(format!("{name:>12} on {area:<5}: {:.0}%", 100.0 * stats.success_rate()));
                rows.push(CrossEvalRow { model: name.to_string(), area, stats });
            }
        }
        let path = self.layout.cross_eval();
        create_parent(&path)?;
        write_cross_eval(&path, &rows)?;
        Ok(rows)
    }

    /// Plot-ready CSVs derived from the telemetry and sweep artifacts.
    pub fn report(&self) -> Result<()> {
        let rows = self.load_sweep()?;
        let flat = self.load_trajectory(Terrain::Flat)?;
        let rough = self.load_trajectory(Terrain::Rough)?;
        for (t, area) in [(&flat, Terrain::Flat), (&rough, Terrain::Rough)] {
            if t.is_empty() {
                return Err(Error::Input(format!("the {area} trajectory is empty; rerun collect with more steps")));
            }
        }
        let dir = self.layout.report_dir();
        std::fs::create_dir_all(&dir)?;
        write_timeseries(&dir.join("timeseries_flat.csv"), &flat)?;
        write_timeseries(&dir.join("timeseries_rough.csv"), &rough)?;
        write_histogram(
            &dir.join("histogram.csv"),
            &[&flat, &rough],
            &self.config.gmm.windows,
            self.config.telemetry.stride,
            self.config.gmm.histogram_bins,
        )?;
        gmm::write_sweep_csv(&dir.join("window_sweep.csv"), &rows)?;
        write_confusion_report(&dir.join("confusion.csv"), &rows)?;
        let cross = self.layout.cross_eval();
        if cross.exists() {
            std::fs::copy(&cross, dir.join("cross_eval.csv"))?;
        }
        Ok(())
    }
}

/// Columns: step, time, sin_theta_x, sin_theta_z.
fn write_timeseries(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "time", "sin_theta_x", "sin_theta_z"])?;
    for r in &traj.rows {
        w.write_record([
            r.step.to_string(),
            format!("{:.1}", r.time),
            r.sin_theta_x.to_string(),
            r.sin_theta_z.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: window, area, bin_lo, bin_hi, count. Bins span `[0, max]` of
/// the pooled rolling std at each window and are shared by both areas.
fn write_histogram(path: &Path, trajs: &[&Trajectory], windows: &[usize], stride: usize, bins: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window", "area", "bin_lo", "bin_hi", "count"])?;
    for &window in windows {
        let series =
            trajs.iter().map(|t| FeatureSeries::from_trajectory(t, window, stride)).collect::<Result<Vec<_>>>()?;
        let max = series.iter().flat_map(|s| s.values.iter().copied()).fold(0.0, f64::max);
        let width = max / bins as f64;
        for area in [Terrain::Flat, Terrain::Rough] {
            let mut counts = vec![0u64; bins];
            for s in &series {
                for (v, l) in s.values.iter().zip(&s.labels) {
                    if l.terrain() == Some(area) {
                        let b = if width > 0.0 { ((v / width) as usize).min(bins - 1) } else { 0 };
                        counts[b] += 1;
                    }
                }
            }
            for (b, c) in counts.iter().enumerate() {
                w.write_record([
                    window.to_string(),
                    area.to_string(),
                    format!("{:.6}", b as f64 * width),
                    format!("{:.6}", (b + 1) as f64 * width),
                    c.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: window, true_label, predicted_flat, predicted_rough, recall.
fn write_confusion_report(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window", "true_label", "predicted_flat", "predicted_rough", "recall"])?;
    for r in rows {
        for t in [Terrain::Flat, Terrain::Rough] {
            let c = r.confusion.counts[t.index()];
            let recall = r.confusion.recall(t).map(|v| format!("{v:.4}")).unwrap_or_default();
            w.write_record([r.window.to_string(), t.to_string(), c[0].to_string(), c[1].to_string(), recall])?;
        }
    }
    w.flush()?;
    Ok(())
}
