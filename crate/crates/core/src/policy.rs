//! Tanh MLPs for the Gaussian policy and the value function, with hand-written
//! backpropagation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::episode::{ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};

/// `0.5 · ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Fully connected network: tanh on hidden layers, identity output.
///
/// Parameters are stored flat, layer by layer, each layer as a row-major
/// `out × in` weight matrix followed by `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations cached by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has an output layer")
    }
}

impl Mlp {
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self { sizes: sizes.to_vec(), params: vec![0.0; Self::param_count_for(sizes)] }
    }

    /// Orthogonal initialization: gain √2 on hidden layers, `output_gain` on the last.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = sizes.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { std::f64::consts::SQRT_2 };
            let w = orthogonal_matrix(n_out, n_in, rng);
            for (dst, v) in net.params[offset..offset + n_in * n_out].iter_mut().zip(w) {
                *dst = gain * v;
            }
            offset += n_in * n_out + n_out;
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || params.len() != Self::param_count_for(sizes) {
            return Err(Error::Input(format!(
                "parameter vector of length {} does not fit layer sizes {:?}",
                params.len(),
                sizes
            )));
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> MlpTrace {
        debug_assert_eq!(input.len(), self.sizes[0]);
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &acts[l];
            let mut y: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>())
                .collect();
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
            offset += n_in * n_out + n_out;
        }
        MlpTrace { acts }
    }

    pub fn output(&self, input: &[f64]) -> Vec<f64> {
        self.forward(input).acts.pop().expect("non-empty trace")
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂output`.
    pub fn backward(&self, trace: &MlpTrace, d_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_output.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &trace.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let gw = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += d * xi;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            // Input to layer l is tanh output of layer l-1.
            for (p, a) in prev.iter_mut().zip(x) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

/// Random `rows × cols` matrix with orthonormal rows (or columns, whichever is shorter).
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let transpose = rows > cols;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut m: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| StandardNormal.sample(rng)).collect()).collect();
    // Modified Gram-Schmidt over the r ≤ c rows.
    for i in 0..r {
        for j in 0..i {
            let dot: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
            let mj = m[j].clone();
            m[i].iter_mut().zip(&mj).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = m[i].iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        m[i].iter_mut().for_each(|a| *a /= norm);
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..r {
        for j in 0..c {
            if transpose {
                out[j * cols + i] = m[i][j];
            } else {
                out[i * cols + j] = m[i][j];
            }
        }
    }
    out
}

fn check_observation(obs: &[f64]) -> Result<()> {
    if obs.len() != OBS_DIM {
        return Err(Error::Input(format!("observation has {} components, expected {OBS_DIM}", obs.len())));
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("observation contains a non-finite value".into()));
    }
    Ok(())
}

/// Diagonal Gaussian policy with a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub mean: Mlp,
    pub log_std: [f64; ACT_DIM],
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], init_log_std: f64, rng: &mut R) -> Self {
        let sizes = layer_sizes(OBS_DIM, hidden, ACT_DIM);
        Self { mean: Mlp::orthogonal(&sizes, 0.01, rng), log_std: [init_log_std; ACT_DIM] }
    }

    pub fn param_count(&self) -> usize {
        self.mean.params.len() + ACT_DIM
    }

    /// Flat parameter vector θ: network weights followed by the log-std.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mean.params.clone();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Input("policy parameter length mismatch".into()));
        }
        let n = self.mean.params.len();
        self.mean.params.copy_from_slice(&params[..n]);
        self.log_std.copy_from_slice(&params[n..]);
        Ok(())
    }

    pub fn action_mean(&self, obs: &[f64]) -> Result<[f64; ACT_DIM]> {
        check_observation(obs)?;
        let out = self.mean.output(obs);
        Ok([out[0], out[1]])
    }

    /// Samples an action (unclamped) and returns it with its log-density.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<([f64; ACT_DIM], f64)> {
        let mean = self.action_mean(obs)?;
        let mut action = [0.0; ACT_DIM];
        let mut log_prob = 0.0;
        for i in 0..ACT_DIM {
            let eps: f64 = StandardNormal.sample(rng);
            let std = self.log_std[i].exp();
            action[i] = if std > 0.0 { mean[i] + std * eps } else { mean[i] };
            log_prob += -0.5 * eps * eps - self.log_std[i] - HALF_LN_2PI;
        }
        Ok((action, log_prob))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64; ACT_DIM]) -> Result<f64> {
        let mean = self.action_mean(obs)?;
        Ok(gaussian_log_prob(&mean, &self.log_std, action))
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|s| s + 0.5 + HALF_LN_2PI).sum()
    }
}

pub fn gaussian_log_prob(mean: &[f64; ACT_DIM], log_std: &[f64; ACT_DIM], action: &[f64; ACT_DIM]) -> f64 {
    (0..ACT_DIM)
        .map(|i| {
            let z = (action[i] - mean[i]) * (-log_std[i]).exp();
            -0.5 * z * z - log_std[i] - HALF_LN_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        Self { net: Mlp::orthogonal(&layer_sizes(OBS_DIM, hidden, 1), 1.0, rng) }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        check_observation(obs)?;
        Ok(self.net.output(obs)[0])
    }
}

pub fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

/// Architecture and origin recorded with a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: String,
    pub stage: String,
    pub env_steps: u64,
    pub policy_params: usize,
    pub value_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub stage: String,
    pub env_steps: u64,
}

const CKPT_MAGIC: &[u8; 8] = b"TPCKPT\0\0";
const CKPT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn hidden(&self) -> Vec<usize> {
        let sizes = self.policy.mean.sizes();
        sizes[1..sizes.len() - 1].to_vec()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let policy = self.policy.params();
        let value = self.value.net.params();
        let meta = CheckpointMeta {
            obs_dim: OBS_DIM,
            act_dim: ACT_DIM,
            hidden: self.hidden(),
            activation: "tanh".into(),
            stage: self.stage.clone(),
            env_steps: self.env_steps,
            policy_params: policy.len(),
            value_params: value.len(),
        };
        let meta = serde_json::to_vec(&meta)?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        for v in policy.iter().chain(value) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
        if &magic != CKPT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        if u32::from_le_bytes(word) != CKPT_VERSION {
            return Err(bad("unsupported checkpoint version"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut meta = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut meta)?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta)?;
        if meta.obs_dim != OBS_DIM || meta.act_dim != ACT_DIM || meta.activation != "tanh" {
            return Err(bad("incompatible architecture"));
        }
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut buf = [0u8; 8];
            (0..n)
                .map(|_| {
                    r.read_exact(&mut buf).map_err(|_| bad("truncated parameter body"))?;
                    Ok(f64::from_le_bytes(buf))
                })
                .collect()
        };
        let policy_params = read_vec(meta.policy_params)?;
        let value_params = read_vec(meta.value_params)?;
        let mut tail = [0u8; 1];
        if r.read(&mut tail)? != 0 {
            return Err(bad("trailing bytes"));
        }
        let p_sizes = layer_sizes(OBS_DIM, &meta.hidden, ACT_DIM);
        let n = Mlp::param_count_for(&p_sizes);
        if policy_params.len() != n + ACT_DIM {
            return Err(bad("policy parameter count does not match architecture"));
        }
        let mean = Mlp::from_params(&p_sizes, policy_params[..n].to_vec())?;
        let log_std = [policy_params[n], policy_params[n + 1]];
        let value = Mlp::from_params(&layer_sizes(OBS_DIM, &meta.hidden, 1), value_params)
            .map_err(|_| bad("value parameter count does not match architecture"))?;
        Ok(Self {
            policy: PolicyNet { mean, log_std },
            value: ValueNet { net: value },
            stage: meta.stage,
            env_steps: meta.env_steps,
        })
    }
}
