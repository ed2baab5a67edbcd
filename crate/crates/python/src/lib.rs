//! Python module `terrain_pitch`.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use terrain_pitch::config::RunConfig;
use terrain_pitch::env::{EnvConfig, Environment, TargetReachEnv};
use terrain_pitch::episode::{self, ACT_DIM};
use terrain_pitch::gmm::{self, GmmConfig, GmmModel};
use terrain_pitch::heightfield::{self, Terrain, TerrainSpec};
use terrain_pitch::pipeline::{Pipeline, Stage};
use terrain_pitch::policy::Checkpoint as CoreCheckpoint;
use terrain_pitch::telemetry::{self, CollectParams};

fn to_py(e: terrain_pitch::Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn terrain(name: &str) -> PyResult<Terrain> {
    name.parse().map_err(to_py)
}

#[pyclass(module = "terrain_pitch", frozen)]
struct Heightfield {
    inner: Arc<heightfield::Heightfield>,
}

#[pymethods]
impl Heightfield {
    /// Generates a field; keyword arguments override the default terrain spec.
    #[new]
    #[pyo3(signature = (amplitude=None, roughness_scale=None, seed=None, cell_size=None))]
    fn new(
        amplitude: Option<f64>,
        roughness_scale: Option<f64>,
        seed: Option<u64>,
        cell_size: Option<f64>,
    ) -> PyResult<Self> {
        let d = TerrainSpec::default();
        let spec = TerrainSpec {
            amplitude: amplitude.unwrap_or(d.amplitude),
            roughness_scale: roughness_scale.unwrap_or(d.roughness_scale),
            seed: seed.unwrap_or(d.seed),
            cell_size: cell_size.unwrap_or(d.cell_size),
            ..d
        };
        let inner = heightfield::Heightfield::generate(&spec).map_err(to_py)?;
        Ok(Self { inner: Arc::new(inner) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: Arc::new(heightfield::Heightfield::load(&path).map_err(to_py)?) })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    /// `(nx, nz)` lattice nodes.
    #[getter]
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }

    /// `(x_min, x_max, z_min, z_max)`.
    #[getter]
    fn extent(&self) -> (f64, f64, f64, f64) {
        self.inner.extent()
    }

    fn height_at(&self, x: f64, z: f64) -> PyResult<f64> {
        self.inner.height_at(x, z).map_err(to_py)
    }

    /// `"flat"`, `"rough"` or `"neither"`.
    fn area_of(&self, x: f64, z: f64) -> &'static str {
        self.inner.area_of(x, z).as_str()
    }

    /// Row-major heights inside the named area.
    fn heights_in(&self, area: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.heights_in(self.inner.rect(terrain(area)?)))
    }
}

#[pyclass(module = "terrain_pitch", frozen)]
struct Checkpoint {
    inner: CoreCheckpoint,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CoreCheckpoint::load(&path).map_err(to_py)? })
    }

    #[getter]
    fn stage(&self) -> String {
        self.inner.stage.clone()
    }

    #[getter]
    fn env_steps(&self) -> u64 {
        self.inner.env_steps
    }

    /// Deterministic wheel command for a 10-element observation.
    fn action_mean(&self, obs: Vec<f64>) -> PyResult<(f64, f64)> {
        let a = self.inner.policy.action_mean(&obs).map_err(to_py)?;
        Ok((a[0], a[1]))
    }

    fn value(&self, obs: Vec<f64>) -> PyResult<f64> {
        self.inner.value.value(&obs).map_err(to_py)
    }
}

/// Target-reaching environment on one area.
#[pyclass(module = "terrain_pitch")]
struct Env {
    inner: TargetReachEnv,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (field, area, seed=0))]
    fn new(field: &Heightfield, area: &str, seed: u64) -> PyResult<Self> {
        let inner =
            TargetReachEnv::new(field.inner.clone(), terrain(area)?, EnvConfig::default(), seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn observe(&self) -> Vec<f64> {
        self.inner.observe().to_vec()
    }

    /// Returns `(observation, reward, done)`.
    fn step(&mut self, left: f64, right: f64) -> PyResult<(Vec<f64>, f64, bool)> {
        let action: [f64; ACT_DIM] = [left, right];
        let t = self.inner.step(action).map_err(to_py)?;
        Ok((t.observation.to_vec(), t.reward, t.done))
    }

    /// `(x, y, z, pitch, yaw, roll)`.
    fn pose(&self) -> (f64, f64, f64, f64, f64, f64) {
        let r = self.inner.robot();
        (r.x, r.y, r.z, r.euler.pitch, r.euler.yaw, r.euler.roll)
    }
}

#[pyclass(module = "terrain_pitch", frozen)]
struct Gmm {
    inner: GmmModel,
}

#[pymethods]
impl Gmm {
    #[getter]
    fn weights(&self) -> (f64, f64) {
        (self.inner.weights[0], self.inner.weights[1])
    }

    #[getter]
    fn means(&self) -> (f64, f64) {
        (self.inner.means[0], self.inner.means[1])
    }

    #[getter]
    fn stds(&self) -> (f64, f64) {
        (self.inner.stds[0], self.inner.stds[1])
    }

    #[getter]
    fn alignment(&self) -> (String, String) {
        (self.inner.alignment[0].to_string(), self.inner.alignment[1].to_string())
    }

    #[getter]
    fn loglik(&self) -> f64 {
        self.inner.loglik
    }

    fn responsibilities(&self, x: f64) -> (f64, f64) {
        let g = self.inner.responsibilities(x);
        (g[0], g[1])
    }

    fn classify(&self, values: Vec<f64>) -> Vec<String> {
        self.inner.classify(&values).into_iter().map(|t| t.to_string()).collect()
    }
}

#[pyfunction]
fn max_episode_steps(initial_distance: f64) -> u32 {
    episode::max_episode_steps(initial_distance)
}

#[pyfunction]
#[pyo3(signature = (initial_distance, k, delta=0.1))]
fn penalty_distance(initial_distance: f64, k: u32, delta: f64) -> f64 {
    episode::penalty_distance(initial_distance, k, delta)
}

#[pyfunction]
#[pyo3(signature = (initial_distance, delta=0.1))]
fn base_reward(initial_distance: f64, delta: f64) -> f64 {
    episode::base_reward(initial_distance, delta)
}

#[pyfunction]
#[pyo3(signature = (series, window, stride=1))]
fn rolling_std(series: Vec<f64>, window: usize, stride: usize) -> PyResult<Vec<f64>> {
    telemetry::rolling_std_strided(&series, window, stride).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (data, restarts=5, seed=0))]
fn fit_gmm(data: Vec<f64>, restarts: usize, seed: u64) -> PyResult<Gmm> {
    let config = GmmConfig { restarts, seed, ..GmmConfig::default() };
    Ok(Gmm { inner: gmm::fit(&data, &config).map_err(to_py)?.model })
}

/// Records the checkpoint's deterministic policy on one area; returns
/// `(sin_theta_x, sin_theta_z)` lists of the retained steps.
#[pyfunction]
#[pyo3(signature = (checkpoint, field, area, n_steps=500, discard=100, seed=0))]
fn collect(
    checkpoint: &Checkpoint,
    field: &Heightfield,
    area: &str,
    n_steps: usize,
    discard: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let t = telemetry::collect(
        &checkpoint.inner.policy,
        field.inner.clone(),
        terrain(area)?,
        EnvConfig::default(),
        CollectParams { n_steps, discard },
        seed,
    )
    .map_err(to_py)?;
    Ok((t.sin_pitch(), t.sin_roll()))
}

/// Runs pipeline stages into `out`; `stage=None` runs all of them.
#[pyfunction]
#[pyo3(signature = (out, config=None, seed=None, steps=None, stage=None))]
fn run_pipeline(
    py: Python<'_>,
    out: PathBuf,
    config: Option<PathBuf>,
    seed: Option<u64>,
    steps: Option<u64>,
    stage: Option<String>,
) -> PyResult<()> {
    let mut c = match config {
        Some(p) => RunConfig::load(&p).map_err(to_py)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(s) = steps {
        c.train.initial_flat.total_steps = s;
        c.train.general.total_steps = s;
    }
    let stages = match stage {
        Some(s) => Stage::parse_set(&s).map_err(to_py)?,
        None => Stage::ALL.to_vec(),
    };
    py.detach(|| Pipeline::new(c, out).and_then(|p| p.run(&stages))).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "terrain_pitch")]
fn terrain_pitch_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Heightfield>()?;
    m.add_class::<Checkpoint>()?;
    m.add_class::<Env>()?;
    m.add_class::<Gmm>()?;
    m.add_function(wrap_pyfunction!(max_episode_steps, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_distance, m)?)?;
    m.add_function(wrap_pyfunction!(base_reward, m)?)?;
    m.add_function(wrap_pyfunction!(rolling_std, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(collect, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
