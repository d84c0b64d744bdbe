//! The Δt-conditioned world model.
//!
//! Five MLP heads over a shared latent space:
//!
//! - encoder        z = h(o)                      (not conditioned on Δt)
//! - latent dynamics ẑ' = z + d(z, a, Δt)·τ(Δt)   (Euler) or the four-stage
//!   composition in [`WorldModel::dynamics_rk4`]
//! - reward         r̂ = R(z, a, Δt)
//! - value          q̂ = Q(z, a, Δt)
//! - policy prior   â = p(z, Δt), squashed into [−1, 1] by tanh
//!
//! τ(x) = max(0, log₁₀x + 5) replaces raw seconds as the integration scale,
//! so step sizes spanning several orders of magnitude land in a narrow
//! numeric range, and any Δt ≤ 1e−5 leaves the latent unchanged bit-exactly.
//! Networks receive Δt as the bounded feature τ(Δt)/5.

pub mod loss;

pub use loss::{grad_check_losses, loss_batch, LossBreakdown, LossConfig, ModelGrads, SubTraj};

use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Activation, ArchSpec, Matrix, NnError, ParamStore};
use crate::rng::stream;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum WmError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("tau({0}) = 0: interpolation factor undefined")]
    TauZero(f64),
    #[error("non-finite value at {stage}")]
    NonFinite { stage: &'static str },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A strictly positive observation interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStep(f64);

impl TimeStep {
    pub fn new(seconds: f64) -> Result<Self, WmError> {
        if seconds > 0.0 && seconds.is_finite() {
            Ok(TimeStep(seconds))
        } else {
            Err(WmError::NonPositiveDt(seconds))
        }
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

/// τ(x) = max(0, log₁₀x + 5); zero for x ≤ 1e−5, monotone non-decreasing.
pub fn tau(dt: f64) -> Result<f64, WmError> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(WmError::NonPositiveDt(dt));
    }
    Ok((dt.log10() + 5.0).max(0.0))
}

/// Network input feature for Δt: τ(Δt)/5, in [0, 1] over the training range.
pub fn dt_feature(dt: f64) -> Result<f64, WmError> {
    Ok(tau(dt)? / 5.0)
}

/// I(Δt) = (Δt/τ(Δt)) · (τ(Δt̄)/Δt̄); equals 1 when Δt = Δt̄.
pub fn interpolation_factor(dt: f64, dt_bar: f64) -> Result<f64, WmError> {
    let t = tau(dt)?;
    let t_bar = tau(dt_bar)?;
    if t == 0.0 {
        return Err(WmError::TauZero(dt));
    }
    if t_bar == 0.0 {
        return Err(WmError::TauZero(dt_bar));
    }
    if dt == dt_bar {
        return Ok(1.0);
    }
    Ok((dt / t) * (t_bar / dt_bar))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub obs_dim: usize,
    pub n_a: usize,
    pub d_z: usize,
    /// Hidden layer widths shared by all heads.
    pub hidden: Vec<usize>,
    pub integrator: Integrator,
    /// EMA coefficient for the target copies of h and Q.
    pub ema: f64,
}

impl ModelConfig {
    pub fn new(obs_dim: usize, n_a: usize, integrator: Integrator) -> Self {
        ModelConfig { obs_dim, n_a, d_z: 32, hidden: vec![64, 64], integrator, ema: 0.995 }
    }
}

#[derive(Debug, Clone)]
pub struct WorldModel {
    pub cfg: ModelConfig,
    pub h: ParamStore,
    pub d: ParamStore,
    pub reward: ParamStore,
    pub value: ParamStore,
    pub prior: ParamStore,
    pub h_target: ParamStore,
    pub q_target: ParamStore,
}

fn head_arch(sizes_in: usize, hidden: &[usize], out: usize, out_act: Activation) -> ArchSpec {
    let mut sizes = vec![sizes_in];
    sizes.extend_from_slice(hidden);
    sizes.push(out);
    ArchSpec::mlp(&sizes, Activation::Silu, out_act)
}

impl WorldModel {
    /// Seeded initialization; target copies start equal to their sources.
    pub fn new(cfg: ModelConfig, seed: u64) -> Self {
        let ModelConfig { obs_dim, n_a, d_z, ref hidden, .. } = cfg;
        let init = |name: &str, arch: ArchSpec| {
            let mut rng = stream(seed, "model-init", &[name_tag(name)]);
            ParamStore::init(name, arch, &mut rng)
        };
        // d, R, Q take (z, a, Δt); p takes (z, Δt); h sees the observation only.
        let h = init("h", head_arch(obs_dim, hidden, d_z, Activation::Identity));
        let d = init("d", head_arch(d_z + n_a + 1, hidden, d_z, Activation::Identity));
        let reward = init("reward", head_arch(d_z + n_a + 1, hidden, 1, Activation::Identity));
        let value = init("value", head_arch(d_z + n_a + 1, hidden, 1, Activation::Identity));
        let prior = init("prior", head_arch(d_z + 1, hidden, n_a, Activation::Tanh));
        let mut h_target = h.clone();
        h_target.name = "h_target".into();
        let mut q_target = value.clone();
        q_target.name = "q_target".into();
        WorldModel { cfg, h, d, reward, value, prior, h_target, q_target }
    }

    /// All-zero heads; useful as a stub (encodes to 0, predicts 0, acts 0).
    pub fn zeros(cfg: ModelConfig) -> Self {
        let ModelConfig { obs_dim, n_a, d_z, ref hidden, .. } = cfg;
        let z = |name: &str, arch: ArchSpec| ParamStore::zeros(name, arch);
        let h = z("h", head_arch(obs_dim, hidden, d_z, Activation::Identity));
        let d = z("d", head_arch(d_z + n_a + 1, hidden, d_z, Activation::Identity));
        let reward = z("reward", head_arch(d_z + n_a + 1, hidden, 1, Activation::Identity));
        let value = z("value", head_arch(d_z + n_a + 1, hidden, 1, Activation::Identity));
        let prior = z("prior", head_arch(d_z + 1, hidden, n_a, Activation::Tanh));
        let h_target = ParamStore { name: "h_target".into(), ..h.clone() };
        let q_target = ParamStore { name: "q_target".into(), ..value.clone() };
        WorldModel { cfg, h, d, reward, value, prior, h_target, q_target }
    }

    pub fn ema_update_targets(&mut self) {
        let ema = self.cfg.ema;
        self.h_target.ema_update(&self.h, ema);
        self.q_target.ema_update(&self.value, ema);
    }

    /// z = h(o); deterministic and independent of Δt by construction.
    pub fn encode(&self, obs: &[f64]) -> Result<Vec<f64>, WmError> {
        Ok(self.h.forward(obs)?)
    }

    pub fn encode_batch(&self, obs: &Matrix) -> Result<Matrix, WmError> {
        Ok(self.h.forward_batch(obs)?)
    }

    /// Stack (z, a, feature-row) into one head input panel.
    fn zad_input(z: &Matrix, a: &Matrix, feat: f64) -> Matrix {
        let n = z.cols;
        let mut m = Matrix::zeros(z.rows + a.rows + 1, n);
        m.data[..z.rows * n].copy_from_slice(&z.data);
        m.data[z.rows * n..(z.rows + a.rows) * n].copy_from_slice(&a.data);
        for c in 0..n {
            m.data[(z.rows + a.rows) * n + c] = feat;
        }
        m
    }

    fn zd_input(z: &Matrix, feat: f64) -> Matrix {
        let n = z.cols;
        let mut m = Matrix::zeros(z.rows + 1, n);
        m.data[..z.rows * n].copy_from_slice(&z.data);
        for c in 0..n {
            m.data[z.rows * n + c] = feat;
        }
        m
    }

    /// Raw derivative head d(z, a, Δt) on a batch.
    pub fn derivative_batch(&self, z: &Matrix, a: &Matrix, dt: f64) -> Result<Matrix, WmError> {
        let input = Self::zad_input(z, a, dt_feature(dt)?);
        Ok(self.d.forward_batch(&input)?)
    }

    /// Euler step: ẑ' = z + d(z, a, Δt)·τ(Δt).
    pub fn dynamics_euler_batch(&self, z: &Matrix, a: &Matrix, dt: f64) -> Result<Matrix, WmError> {
        let t = tau(dt)?;
        let deriv = self.derivative_batch(z, a, dt)?;
        let mut out = z.clone();
        for (o, d) in out.data.iter_mut().zip(&deriv.data) {
            *o += d * t;
        }
        if !out.is_finite() {
            return Err(WmError::NonFinite { stage: "euler step" });
        }
        Ok(out)
    }

    /// Four-stage composition with midpoints advanced by τ(Δt/2):
    ///
    /// k₁ = d(z, a, Δt)
    /// ẑ₁ = z + d(z, a, Δt/2)·τ(Δt/2),   k₂ = d(ẑ₁, a, Δt)
    /// ẑ₂ = z + d(ẑ₁, a, Δt/2)·τ(Δt/2),  k₃ = d(ẑ₂, a, Δt)
    /// ẑ₃ = z + k₃·τ(Δt),                k₄ = d(ẑ₃, a, Δt)
    /// ẑ' = z + (k₁ + 2k₂ + 2k₃ + k₄)/6·τ(Δt)
    pub fn dynamics_rk4_batch(&self, z: &Matrix, a: &Matrix, dt: f64) -> Result<Matrix, WmError> {
        let t = tau(dt)?;
        let t_half = tau(dt / 2.0)?;
        let advance = |base: &Matrix, deriv: &Matrix, scale: f64| {
            let mut out = base.clone();
            for (o, d) in out.data.iter_mut().zip(&deriv.data) {
                *o += d * scale;
            }
            out
        };
        let k1 = self.derivative_batch(z, a, dt)?;
        let z1 = advance(z, &self.derivative_batch(z, a, dt / 2.0)?, t_half);
        if !z1.is_finite() {
            return Err(WmError::NonFinite { stage: "rk4 midpoint 1" });
        }
        let k2 = self.derivative_batch(&z1, a, dt)?;
        let z2 = advance(z, &self.derivative_batch(&z1, a, dt / 2.0)?, t_half);
        if !z2.is_finite() {
            return Err(WmError::NonFinite { stage: "rk4 midpoint 2" });
        }
        let k3 = self.derivative_batch(&z2, a, dt)?;
        let z3 = advance(z, &k3, t);
        if !z3.is_finite() {
            return Err(WmError::NonFinite { stage: "rk4 midpoint 3" });
        }
        let k4 = self.derivative_batch(&z3, a, dt)?;
        let mut out = z.clone();
        for i in 0..out.data.len() {
            let stage_sum = (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]) / 6.0;
            out.data[i] += stage_sum * t;
        }
        if !out.is_finite() {
            return Err(WmError::NonFinite { stage: "rk4 step" });
        }
        Ok(out)
    }

    /// Step the latent with the configured integrator.
    pub fn dynamics_batch(&self, z: &Matrix, a: &Matrix, dt: f64) -> Result<Matrix, WmError> {
        match self.cfg.integrator {
            Integrator::Euler => self.dynamics_euler_batch(z, a, dt),
            Integrator::Rk4 => self.dynamics_rk4_batch(z, a, dt),
        }
    }

    pub fn dynamics_euler(&self, z: &[f64], a: &[f64], dt: f64) -> Result<Vec<f64>, WmError> {
        Ok(self
            .dynamics_euler_batch(&Matrix::column_vector(z), &Matrix::column_vector(a), dt)?
            .data)
    }

    pub fn dynamics_rk4(&self, z: &[f64], a: &[f64], dt: f64) -> Result<Vec<f64>, WmError> {
        Ok(self
            .dynamics_rk4_batch(&Matrix::column_vector(z), &Matrix::column_vector(a), dt)?
            .data)
    }

    /// r̂ = R(z, a, Δt) per column.
    pub fn reward_batch(&self, z: &Matrix, a: &Matrix, dt: f64) -> Result<Vec<f64>, WmError> {
        let input = Self::zad_input(z, a, dt_feature(dt)?);
        Ok(self.reward.forward_batch(&input)?.data)
    }

    /// q̂ = Q(z, a, Δt) per column; `target` selects the EMA copy.
    pub fn value_batch(&self, z: &Matrix, a: &Matrix, dt: f64, target: bool) -> Result<Vec<f64>, WmError> {
        let input = Self::zad_input(z, a, dt_feature(dt)?);
        let store = if target { &self.q_target } else { &self.value };
        Ok(store.forward_batch(&input)?.data)
    }

    /// â = p(z, Δt) per column, each component in [−1, 1].
    pub fn prior_batch(&self, z: &Matrix, dt: f64) -> Result<Matrix, WmError> {
        let input = Self::zd_input(z, dt_feature(dt)?);
        Ok(self.prior.forward_batch(&input)?)
    }

    pub fn predict_reward(&self, z: &[f64], a: &[f64], dt: f64) -> Result<f64, WmError> {
        Ok(self.reward_batch(&Matrix::column_vector(z), &Matrix::column_vector(a), dt)?[0])
    }

    pub fn predict_value(&self, z: &[f64], a: &[f64], dt: f64) -> Result<f64, WmError> {
        Ok(self.value_batch(&Matrix::column_vector(z), &Matrix::column_vector(a), dt, false)?[0])
    }

    pub fn policy_prior(&self, z: &[f64], dt: f64) -> Result<Vec<f64>, WmError> {
        Ok(self.prior_batch(&Matrix::column_vector(z), dt)?.data)
    }

    pub fn save(&self, path: &Path, extra_meta: serde_json::Value) -> Result<(), WmError> {
        let meta = serde_json::json!({
            "model": {
                "obs_dim": self.cfg.obs_dim,
                "n_a": self.cfg.n_a,
                "d_z": self.cfg.d_z,
                "hidden": self.cfg.hidden,
                "integrator": self.cfg.integrator,
                "ema": self.cfg.ema,
            },
            "extra": extra_meta,
        });
        let ckpt = Checkpoint {
            stores: vec![
                self.h.clone(),
                self.d.clone(),
                self.reward.clone(),
                self.value.clone(),
                self.prior.clone(),
                self.h_target.clone(),
                self.q_target.clone(),
            ],
            meta,
        };
        ckpt.save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(WorldModel, serde_json::Value), WmError> {
        let ckpt = Checkpoint::load(path)?;
        let m = &ckpt.meta["model"];
        let cfg = ModelConfig {
            obs_dim: m["obs_dim"].as_u64().ok_or_else(|| NnError::Format("missing obs_dim".into()))? as usize,
            n_a: m["n_a"].as_u64().ok_or_else(|| NnError::Format("missing n_a".into()))? as usize,
            d_z: m["d_z"].as_u64().ok_or_else(|| NnError::Format("missing d_z".into()))? as usize,
            hidden: serde_json::from_value(m["hidden"].clone()).map_err(|e| NnError::Format(e.to_string()))?,
            integrator: serde_json::from_value(m["integrator"].clone())
                .map_err(|e| NnError::Format(e.to_string()))?,
            ema: m["ema"].as_f64().ok_or_else(|| NnError::Format("missing ema".into()))?,
        };
        let mut stores = ckpt.stores.into_iter();
        let mut next = |expect: &str| -> Result<ParamStore, WmError> {
            let s = stores.next().ok_or_else(|| NnError::Format(format!("missing store {expect}")))?;
            if s.name != expect {
                return Err(NnError::Format(format!("expected store {expect}, found {}", s.name)).into());
            }
            Ok(s)
        };
        let model = WorldModel {
            cfg,
            h: next("h")?,
            d: next("d")?,
            reward: next("reward")?,
            value: next("value")?,
            prior: next("prior")?,
            h_target: next("h_target")?,
            q_target: next("q_target")?,
        };
        Ok((model, ckpt.meta["extra"].clone()))
    }
}

fn name_tag(name: &str) -> u64 {
    name.bytes().fold(0u64, |acc, b| acc.wrapping_mul(31).wrapping_add(u64::from(b)))
}
