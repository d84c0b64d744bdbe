//! Synthetic multi-scale system: two coupled linear oscillators.
//!
//! One fast and one slow harmonic oscillator, spring-coupled, each with its
//! own actuator. The state derivative splits into per-subsystem terms with
//! widely separated characteristic frequencies, which is the whole point of
//! the fixture: a single sampling rate is wrong for at least one subsystem.
//!
//! The sub-step integrator is velocity-Verlet; with κ = 0 and zero control
//! each sub-oscillator's energy stays within an O((ω·dt)²) band.

use super::{EnvError, StepResult};
use crate::rng::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscSpec {
    /// Fast angular frequency (rad/s); must exceed `omega_slow`.
    pub omega_fast: f64,
    pub omega_slow: f64,
    /// Spring coupling between the two oscillators (≥ 0).
    pub kappa: f64,
    /// Force per unit action on each oscillator; length = action dim.
    pub control_gain: Vec<f64>,
    pub dt_sim: f64,
    pub default_dt: f64,
    pub cost_q: f64,
    pub cost_r: f64,
    /// Reset draws positions and velocities from U(−amp, amp).
    pub init_amp: f64,
    pub episode_len: usize,
}

impl Default for OscSpec {
    fn default() -> Self {
        OscSpec {
            omega_fast: 8.0,
            omega_slow: 0.8,
            kappa: 0.5,
            control_gain: vec![1.0, 1.0],
            dt_sim: 0.005,
            default_dt: 0.05,
            cost_q: 0.25,
            cost_r: 0.01,
            init_amp: 1.0,
            episode_len: 100,
        }
    }
}

/// Positions and velocities of (fast, slow), plus elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct OscState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub t: f64,
}

impl OscState {
    pub fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.vel[0], self.pos[1], self.vel[1]]
    }
}

impl OscSpec {
    /// Slow variant used as a Lemma-style oracle: spectrum chosen so the
    /// dynamics are fully captured at the default Δt.
    pub fn slow_oracle() -> Self {
        OscSpec {
            omega_fast: 1.0,
            omega_slow: 0.25,
            kappa: 0.1,
            ..OscSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.omega_fast > self.omega_slow && self.omega_slow > 0.0) {
            return Err(EnvError::InvalidSpec("need omega_fast > omega_slow > 0".into()));
        }
        if self.kappa < 0.0 {
            return Err(EnvError::InvalidSpec("negative coupling".into()));
        }
        if self.control_gain.len() != 2 {
            return Err(EnvError::InvalidSpec("control gain must cover both oscillators".into()));
        }
        if self.dt_sim <= 0.0 || self.omega_fast * self.dt_sim > 0.5 {
            return Err(EnvError::InvalidSpec(format!(
                "dt_sim resolves the fast oscillator poorly: ω·dt = {}",
                self.omega_fast * self.dt_sim
            )));
        }
        Ok(())
    }

    pub fn reset(&self, seed: u64) -> OscState {
        let mut rng = stream(seed, "osc-reset", &[]);
        let mut draw = || rng.gen_range(-self.init_amp..=self.init_amp);
        OscState { pos: [draw(), draw()], vel: [draw(), draw()], t: 0.0 }
    }

    /// Spring + coupling + control acceleration at the given positions.
    fn accel(&self, pos: &[f64; 2], action: &[f64]) -> [f64; 2] {
        let omega2 = [self.omega_fast * self.omega_fast, self.omega_slow * self.omega_slow];
        let mut acc = [0.0; 2];
        for i in 0..2 {
            let other = 1 - i;
            acc[i] = -omega2[i] * pos[i] - self.kappa * (pos[i] - pos[other])
                + self.control_gain[i] * action[i];
        }
        acc
    }

    pub fn lq_reward(&self, state: &OscState, action: &[f64]) -> f64 {
        let s2 = state.pos[0] * state.pos[0]
            + state.vel[0] * state.vel[0]
            + state.pos[1] * state.pos[1]
            + state.vel[1] * state.vel[1];
        let a2: f64 = action.iter().map(|v| v * v).sum();
        -(self.cost_q * s2 + self.cost_r * a2)
    }

    pub fn step(&self, state: &mut OscState, action: &[f64], dt: f64) -> Result<StepResult, EnvError> {
        if action.len() != 2 {
            return Err(EnvError::ActionLength { expected: 2, got: action.len() });
        }
        if dt < self.dt_sim {
            return Err(EnvError::DtTooSmall { requested: dt, dt_sim: self.dt_sim });
        }
        let n_sub = (dt / self.dt_sim).round() as usize;
        let h = self.dt_sim;
        for _ in 0..n_sub {
            let a0 = self.accel(&state.pos, action);
            for i in 0..2 {
                state.vel[i] += 0.5 * h * a0[i];
                state.pos[i] += h * state.vel[i];
            }
            let a1 = self.accel(&state.pos, action);
            for i in 0..2 {
                state.vel[i] += 0.5 * h * a1[i];
            }
            state.t += h;
        }
        if !state.pos.iter().chain(state.vel.iter()).all(|v| v.is_finite()) {
            return Err(EnvError::NonFinite("oscillator state".into()));
        }
        Ok(StepResult {
            obs: state.observe(),
            reward: self.lq_reward(state, action),
            elapsed: n_sub as f64 * self.dt_sim,
        })
    }

    /// Energy of one sub-oscillator (valid as an invariant when κ = 0).
    pub fn sub_energy(&self, state: &OscState, which: usize) -> f64 {
        let omega = if which == 0 { self.omega_fast } else { self.omega_slow };
        0.5 * (state.vel[which] * state.vel[which] + omega * omega * state.pos[which] * state.pos[which])
    }
}
