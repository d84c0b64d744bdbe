//! Control environments with variable-Δt stepping.
//!
//! Every environment advances by fixed internal sub-steps of `dt_sim`; a
//! requested Δt is rounded to the nearest integer multiple, so stepping by
//! `k·dt_sim` is bit-identical to composing `k` unit steps with the same
//! (zero-order-hold) action. Rewards are one LQ evaluation at the post-step
//! state with target 0.

pub mod oscillator;
pub mod pde;

pub use oscillator::{OscSpec, OscState};
pub use pde::{PdeKind, PdeSpec, PdeState};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("stability violation: {0}")]
    Stability(String),
    #[error("non-finite state in {0}")]
    NonFinite(String),
    #[error("requested dt {requested} below simulation step {dt_sim}")]
    DtTooSmall { requested: f64, dt_sim: f64 },
    #[error("action length {got}, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Realized Δt: an exact integer multiple of `dt_sim`.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EnvSpec {
    Pde(PdeSpec),
    Oscillator(OscSpec),
}

#[derive(Debug, Clone)]
pub enum EnvState {
    Pde(PdeState),
    Oscillator(OscState),
}

impl EnvSpec {
    pub fn burgers() -> Self {
        EnvSpec::Pde(PdeSpec::burgers())
    }

    pub fn allen_cahn() -> Self {
        EnvSpec::Pde(PdeSpec::allen_cahn())
    }

    pub fn wave() -> Self {
        EnvSpec::Pde(PdeSpec::wave())
    }

    pub fn oscillator() -> Self {
        EnvSpec::Oscillator(OscSpec::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Pde(p) => match p.kind {
                PdeKind::Burgers => "burgers",
                PdeKind::AllenCahn => "allen-cahn",
                PdeKind::Wave => "wave",
            },
            EnvSpec::Oscillator(_) => "oscillator",
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            EnvSpec::Pde(p) => p.validate(),
            EnvSpec::Oscillator(o) => o.validate(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvSpec::Pde(p) => p.obs_dim(),
            EnvSpec::Oscillator(_) => 4,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            EnvSpec::Pde(p) => p.n_a,
            EnvSpec::Oscillator(o) => o.control_gain.len(),
        }
    }

    pub fn default_dt(&self) -> f64 {
        match self {
            EnvSpec::Pde(p) => p.default_dt,
            EnvSpec::Oscillator(o) => o.default_dt,
        }
    }

    pub fn dt_sim(&self) -> f64 {
        match self {
            EnvSpec::Pde(p) => p.dt_sim,
            EnvSpec::Oscillator(o) => o.dt_sim,
        }
    }

    pub fn episode_len(&self) -> usize {
        match self {
            EnvSpec::Pde(p) => p.episode_len,
            EnvSpec::Oscillator(o) => o.episode_len,
        }
    }

    /// Deterministic initial state for the given seed.
    pub fn reset(&self, seed: u64) -> EnvState {
        match self {
            EnvSpec::Pde(p) => EnvState::Pde(p.reset(seed)),
            EnvSpec::Oscillator(o) => EnvState::Oscillator(o.reset(seed)),
        }
    }

    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        match (self, state) {
            (EnvSpec::Pde(p), EnvState::Pde(s)) => p.observe(s),
            (EnvSpec::Oscillator(_), EnvState::Oscillator(s)) => s.observe(),
            _ => panic!("state does not match spec"),
        }
    }

    /// Advance by `round(dt / dt_sim)` sub-steps under a zero-order-hold
    /// action; the reward is the LQ cost at the resulting state.
    pub fn step(&self, state: &mut EnvState, action: &[f64], dt: f64) -> Result<StepResult, EnvError> {
        match (self, state) {
            (EnvSpec::Pde(p), EnvState::Pde(s)) => p.step(s, action, dt),
            (EnvSpec::Oscillator(o), EnvState::Oscillator(s)) => o.step(s, action, dt),
            _ => panic!("state does not match spec"),
        }
    }
}

/// Per-step trajectory record in the dump format
/// `t, dt, r, u_0..` (plus `psi_*` for Wave).
pub struct TrajectoryDump {
    obs_labels: Vec<String>,
    rows: Vec<(f64, f64, f64, Vec<f64>)>,
}

impl TrajectoryDump {
    pub fn new(spec: &EnvSpec) -> Self {
        let obs_labels = match spec {
            EnvSpec::Pde(p) => {
                let mut l: Vec<String> = (0..p.n_x).map(|i| format!("u_{i}")).collect();
                if p.kind == PdeKind::Wave {
                    l.extend((0..p.n_x).map(|i| format!("psi_{i}")));
                }
                l
            }
            EnvSpec::Oscillator(_) => {
                vec!["x_fast".into(), "v_fast".into(), "x_slow".into(), "v_slow".into()]
            }
        };
        TrajectoryDump { obs_labels, rows: Vec::new() }
    }

    pub fn push(&mut self, t: f64, dt: f64, reward: f64, obs: &[f64]) {
        self.rows.push((t, dt, reward, obs.to_vec()));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,dt,r");
        for l in &self.obs_labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (t, dt, r, obs) in &self.rows {
            out.push_str(&format!("{t},{dt},{r}"));
            for v in obs {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}
