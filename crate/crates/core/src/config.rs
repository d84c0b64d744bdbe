//! Flat JSON run configuration.
//!
//! One top-level object, no nesting; unknown keys are rejected. Optional
//! keys default from the chosen environment, and `resolve` materializes
//! every default so the echoed config reproduces the run exactly.

use crate::env::{EnvSpec, OscSpec, PdeSpec};
use crate::planner::PlanConfig;
use crate::trainer::{DtSampleMode, TrainConfig};
use crate::worldmodel::Integrator;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("unknown environment '{0}' (expected burgers|allen-cahn|wave|oscillator)")]
    UnknownEnv(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    #[serde(default)]
    pub seed: u64,
    /// Seed list for sweeps and curves; defaults to `[seed]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,

    #[serde(default = "default_mode")]
    pub mode: DtSampleMode,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Fixed-mode Δt; defaults to the task default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_len: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_episodes: usize,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_ckpt_interval")]
    pub checkpoint_interval: usize,
    #[serde(default = "default_updates")]
    pub updates_per_step: usize,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,

    #[serde(default = "default_plan_horizon")]
    pub plan_horizon: usize,
    #[serde(default = "default_plan_samples")]
    pub plan_samples: usize,
    #[serde(default = "default_plan_elites")]
    pub plan_elites: usize,
    #[serde(default = "default_plan_iterations")]
    pub plan_iterations: usize,
    #[serde(default = "default_plan_temperature")]
    pub plan_temperature: f64,
    #[serde(default = "default_plan_init_std")]
    pub plan_init_std: f64,
    #[serde(default = "default_plan_min_std")]
    pub plan_min_std: f64,
    #[serde(default = "default_gamma_base")]
    pub gamma_base: f64,
    #[serde(default = "default_prior_fraction")]
    pub plan_prior_fraction: f64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_dt_grid: Option<Vec<f64>>,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Sweep entries as `id=path/to/checkpoint.tawm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
    /// Ids from `models` to additionally evaluate with action repeat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_repeat: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<String>,
    #[serde(default = "default_parallel")]
    pub parallel: bool,

    // environment overrides (task defaults apply when absent)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_n_x: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_n_a: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_init_noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_cost_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_cost_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_omega_fast: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_omega_slow: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_kappa: Option<f64>,
}

fn default_mode() -> DtSampleMode {
    DtSampleMode::LogUniform
}
fn default_dt_min() -> f64 {
    0.01
}
fn default_dt_max() -> f64 {
    1.0
}
fn default_steps() -> usize {
    20_000
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_warmup() -> usize {
    5
}
fn default_capacity() -> usize {
    100_000
}
fn default_ckpt_interval() -> usize {
    5_000
}
fn default_updates() -> usize {
    1
}
fn default_integrator() -> Integrator {
    Integrator::Euler
}
fn default_plan_horizon() -> usize {
    5
}
fn default_plan_samples() -> usize {
    256
}
fn default_plan_elites() -> usize {
    32
}
fn default_plan_iterations() -> usize {
    4
}
fn default_plan_temperature() -> f64 {
    0.5
}
fn default_plan_init_std() -> f64 {
    0.5
}
fn default_plan_min_std() -> f64 {
    0.05
}
fn default_gamma_base() -> f64 {
    0.99
}
fn default_prior_fraction() -> f64 {
    0.25
}
fn default_eval_episodes() -> usize {
    10
}
fn default_parallel() -> bool {
    true
}

impl RunConfig {
    pub fn minimal(env: &str) -> Self {
        serde_json::from_value(serde_json::json!({"env": env})).expect("minimal config")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn env_spec(&self) -> Result<EnvSpec, ConfigError> {
        let mut spec = match self.env.as_str() {
            "burgers" => EnvSpec::Pde(PdeSpec::burgers()),
            "allen-cahn" => EnvSpec::Pde(PdeSpec::allen_cahn()),
            "wave" => EnvSpec::Pde(PdeSpec::wave()),
            "oscillator" => EnvSpec::Oscillator(OscSpec::default()),
            other => return Err(ConfigError::UnknownEnv(other.to_string())),
        };
        match &mut spec {
            EnvSpec::Pde(p) => {
                if let Some(n) = self.env_n_x {
                    p.n_x = n;
                }
                if let Some(n) = self.env_n_a {
                    p.n_a = n;
                }
                if let Some(v) = self.env_init_noise {
                    p.init_noise = v;
                }
                if let Some(v) = self.env_cost_q {
                    p.cost_q = v;
                }
                if let Some(v) = self.env_cost_r {
                    p.cost_r = v;
                }
                if let Some(n) = self.episode_len {
                    p.episode_len = n;
                }
            }
            EnvSpec::Oscillator(o) => {
                if let Some(v) = self.env_omega_fast {
                    o.omega_fast = v;
                }
                if let Some(v) = self.env_omega_slow {
                    o.omega_slow = v;
                }
                if let Some(v) = self.env_kappa {
                    o.kappa = v;
                }
                if let Some(v) = self.env_cost_q {
                    o.cost_q = v;
                }
                if let Some(v) = self.env_cost_r {
                    o.cost_r = v;
                }
                if let Some(n) = self.episode_len {
                    o.episode_len = n;
                }
            }
        }
        Ok(spec)
    }

    pub fn train_config(&self, env: &EnvSpec) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
            dt_fixed: self.dt.unwrap_or_else(|| env.default_dt()),
            total_steps: self.steps,
            episode_len: self.episode_len.unwrap_or_else(|| env.episode_len()),
            batch_size: self.batch_size,
            updates_per_step: self.updates_per_step,
            warmup_episodes: self.warmup_episodes,
            buffer_capacity: self.buffer_capacity,
            checkpoint_interval: self.checkpoint_interval,
            lr: self.lr,
            seed: self.seed,
            integrator: self.integrator,
        }
    }

    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            horizon: self.plan_horizon,
            n_samples: self.plan_samples,
            n_elites: self.plan_elites,
            n_iterations: self.plan_iterations,
            temperature: self.plan_temperature,
            init_std: self.plan_init_std,
            min_std: self.plan_min_std,
            gamma_base: self.gamma_base,
            prior_fraction: self.plan_prior_fraction,
        }
    }

    /// Default sweep grid: {0.5×, 1×, 2×, 4×, 8×} of the task default,
    /// clipped to the simulation step and the 1 s training cap.
    pub fn grid(&self, env: &EnvSpec) -> Vec<f64> {
        self.eval_dt_grid.clone().unwrap_or_else(|| {
            [0.5, 1.0, 2.0, 4.0, 8.0]
                .iter()
                .map(|m| m * env.default_dt())
                .filter(|dt| *dt >= env.dt_sim() && *dt <= 1.0)
                .collect()
        })
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![self.seed])
    }

    /// Copy with every optional default materialized; echoing this next to a
    /// run's outputs lets the run be reproduced from the echo alone.
    pub fn resolve(&self, env: &EnvSpec) -> RunConfig {
        let mut r = self.clone();
        r.seeds = Some(self.seed_list());
        r.dt = Some(self.dt.unwrap_or_else(|| env.default_dt()));
        r.episode_len = Some(self.episode_len.unwrap_or_else(|| env.episode_len()));
        r.eval_dt_grid = Some(self.grid(env));
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization") + "\n"
    }

    /// Parse `id=path` sweep entries.
    pub fn model_entries(&self) -> Vec<(String, String)> {
        self.models
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .filter_map(|spec| {
                spec.split_once('=').map(|(id, path)| (id.to_string(), path.to_string()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"env": "wave", "tpyo": 3}"#).unwrap_err();
        assert!(err.to_string().contains("tpyo"));
    }

    #[test]
    fn resolved_config_round_trips_to_the_same_resolution() {
        let cfg = RunConfig::minimal("wave");
        let env = cfg.env_spec().unwrap();
        let resolved = cfg.resolve(&env);
        let echoed: RunConfig = serde_json::from_str(&resolved.to_json()).unwrap();
        assert_eq!(resolved.to_json(), echoed.resolve(&env).to_json());
    }

    #[test]
    fn default_grid_covers_half_to_eight_times_default() {
        let cfg = RunConfig::minimal("wave");
        let env = cfg.env_spec().unwrap();
        assert_eq!(cfg.grid(&env), vec![0.05, 0.1, 0.2, 0.4, 0.8]);
    }

    #[test]
    fn env_names_map_to_specs() {
        for name in ["burgers", "allen-cahn", "wave", "oscillator"] {
            let cfg = RunConfig::minimal(name);
            assert_eq!(cfg.env_spec().unwrap().name(), name);
        }
        assert!(RunConfig::minimal("pendulum").env_spec().is_err());
    }

    #[test]
    fn model_entries_parse_id_path_pairs() {
        let mut cfg = RunConfig::minimal("wave");
        cfg.models = Some(vec!["tawm=/tmp/a.tawm".into(), "baseline=/tmp/b.tawm".into()]);
        assert_eq!(
            cfg.model_entries(),
            vec![
                ("tawm".to_string(), "/tmp/a.tawm".to_string()),
                ("baseline".to_string(), "/tmp/b.tawm".to_string())
            ]
        );
    }
}
