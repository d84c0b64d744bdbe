//! Three 1D PDE boundary-control tasks on a periodic grid.
//!
//! Governing equations (all forced by a distributed control field `a(x,t)`):
//!
//! - Burgers:      ∂u/∂t + u ∂u/∂x − ν ∂²u/∂x² = a(x,t)
//! - Allen–Cahn:   ∂u/∂t − ν² ∂²u/∂x² + V(u³ − u) = a(x,t)
//! - Wave:         ∂²u/∂t² − c² ∂²u/∂x² = a(x,t)
//!
//! Spatial discretization is second-order centered differences on nodes
//! x_i = i·L/n_x. The Burgers advection term uses the conservative two-point
//! product flux F_{i+1/2} = u_i·u_{i+1}/2, which telescopes over the periodic
//! grid, so Σu·Δx is exact to rounding under zero forcing. Burgers and
//! Allen–Cahn sub-step with explicit RK4; Wave uses velocity-Verlet so the
//! discrete energy stays within an O((ω·dt)²) band instead of drifting.

use super::{EnvError, StepResult};
use crate::rng::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    Burgers,
    AllenCahn,
    Wave,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeSpec {
    pub kind: PdeKind,
    /// Domain length L; the grid is x_i = i·L/n_x, periodic.
    pub length: f64,
    pub n_x: usize,
    /// Diffusivity ν. Burgers uses ν directly; Allen–Cahn enters as ν².
    pub nu: f64,
    /// Potential constant V (Allen–Cahn only).
    pub potential: f64,
    /// Wave speed c (Wave only).
    pub wave_speed: f64,
    /// Number of actuators.
    pub n_a: usize,
    /// Gaussian actuator width as a fraction of the actuator spacing L/n_a.
    pub support_width: f64,
    /// Internal simulation sub-step (seconds).
    pub dt_sim: f64,
    /// The task's default observation Δt (seconds).
    pub default_dt: f64,
    /// Uniform diagonal of the LQ state cost.
    pub cost_q: f64,
    /// Uniform diagonal of the LQ action cost.
    pub cost_r: f64,
    /// Amplitude of the seeded uniform perturbation added at reset.
    pub init_noise: f64,
    pub episode_len: usize,
}

#[derive(Debug, Clone)]
pub struct PdeState {
    pub u: Vec<f64>,
    /// Time derivative field; present iff kind == Wave.
    pub psi: Option<Vec<f64>>,
    pub t: f64,
}

impl PdeSpec {
    /// L=1, ν=1e-3, u(x,0)=sech(10x−5), Δt_sim=1 ms, default Δt=50 ms.
    pub fn burgers() -> Self {
        PdeSpec {
            kind: PdeKind::Burgers,
            length: 1.0,
            n_x: 64,
            nu: 1e-3,
            potential: 0.0,
            wave_speed: 0.0,
            n_a: 8,
            support_width: 0.4,
            dt_sim: 1e-3,
            default_dt: 0.05,
            cost_q: 1.0 / 64.0,
            cost_r: 0.01,
            init_noise: 0.1,
            episode_len: 100,
        }
    }

    /// L=2, ν=1e-4, V=5, u(x,0)=(x−1)²cos(π(x−1)), default Δt=10 ms.
    pub fn allen_cahn() -> Self {
        PdeSpec {
            kind: PdeKind::AllenCahn,
            length: 2.0,
            n_x: 64,
            nu: 1e-4,
            potential: 5.0,
            wave_speed: 0.0,
            n_a: 8,
            support_width: 0.4,
            dt_sim: 2e-3,
            default_dt: 0.01,
            cost_q: 2.0 / 64.0,
            cost_r: 0.01,
            init_noise: 0.1,
            episode_len: 100,
        }
    }

    /// L=1, c=0.1, u(x,0)=sech(10x−5), ψ(x,0)=0, default Δt=100 ms.
    pub fn wave() -> Self {
        PdeSpec {
            kind: PdeKind::Wave,
            length: 1.0,
            n_x: 64,
            nu: 0.0,
            potential: 0.0,
            wave_speed: 0.1,
            n_a: 8,
            support_width: 0.4,
            dt_sim: 2.5e-3,
            default_dt: 0.1,
            cost_q: 1.0 / 64.0,
            cost_r: 0.01,
            init_noise: 0.1,
            episode_len: 100,
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    pub fn obs_dim(&self) -> usize {
        if self.kind == PdeKind::Wave { 2 * self.n_x } else { self.n_x }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_x < 16 {
            return Err(EnvError::InvalidSpec(format!("n_x = {} < 16", self.n_x)));
        }
        if self.length <= 0.0 || self.dt_sim <= 0.0 || self.n_a == 0 {
            return Err(EnvError::InvalidSpec("non-positive length, dt_sim, or n_a".into()));
        }
        if self.cost_q < 0.0 || self.cost_r < 0.0 {
            return Err(EnvError::InvalidSpec("negative LQ cost".into()));
        }
        // Static stability: wave CFL and diffusion numbers are state-free.
        let dx = self.dx();
        if self.kind == PdeKind::Wave && self.wave_speed * self.dt_sim / dx > CFL_LIMIT {
            return Err(EnvError::Stability(format!(
                "wave CFL {:.3} exceeds {CFL_LIMIT}",
                self.wave_speed * self.dt_sim / dx
            )));
        }
        let diff = match self.kind {
            PdeKind::Burgers => self.nu,
            PdeKind::AllenCahn => self.nu * self.nu,
            PdeKind::Wave => 0.0,
        };
        if diff * self.dt_sim / (dx * dx) > DIFFUSION_LIMIT {
            return Err(EnvError::Stability(format!(
                "diffusion number {:.3} exceeds {DIFFUSION_LIMIT}",
                diff * self.dt_sim / (dx * dx)
            )));
        }
        // Actuator supports must tile the domain.
        let field = self.forcing_profile(&vec![1.0; self.n_a])?;
        if field.iter().any(|v| *v <= 0.0) {
            return Err(EnvError::InvalidSpec("actuator supports do not cover the grid".into()));
        }
        Ok(())
    }

    /// Paper initial conditions plus a seeded uniform perturbation.
    pub fn reset(&self, seed: u64) -> PdeState {
        let mut rng = stream(seed, "pde-reset", &[]);
        let n = self.n_x;
        let mut u = Vec::with_capacity(n);
        for i in 0..n {
            let x = i as f64 * self.dx();
            let base = match self.kind {
                PdeKind::Burgers | PdeKind::Wave => sech(10.0 * x - 5.0),
                PdeKind::AllenCahn => {
                    let s = x - 1.0;
                    s * s * (std::f64::consts::PI * s).cos()
                }
            };
            u.push(base);
        }
        if self.init_noise > 0.0 {
            for v in u.iter_mut() {
                *v += rng.gen_range(-self.init_noise..=self.init_noise);
            }
        }
        let psi = (self.kind == PdeKind::Wave).then(|| vec![0.0; n]);
        PdeState { u, psi, t: 0.0 }
    }

    pub fn observe(&self, state: &PdeState) -> Vec<f64> {
        let mut obs = state.u.clone();
        if let Some(psi) = &state.psi {
            obs.extend_from_slice(psi);
        }
        obs
    }

    /// Distributed forcing field a(x) = Σ_j Φ_j(x)·a_j for the given action.
    pub fn forcing_profile(&self, action: &[f64]) -> Result<Vec<f64>, EnvError> {
        if action.len() != self.n_a {
            return Err(EnvError::ActionLength { expected: self.n_a, got: action.len() });
        }
        let mut field = vec![0.0; self.n_x];
        for (j, &aj) in action.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            for (i, f) in field.iter_mut().enumerate() {
                *f += self.support(j, i) * aj;
            }
        }
        Ok(field)
    }

    /// Gaussian bump Φ_j at grid node i, periodic in x.
    pub fn support(&self, j: usize, i: usize) -> f64 {
        let spacing = self.length / self.n_a as f64;
        let center = (j as f64 + 0.5) * spacing;
        let x = i as f64 * self.dx();
        let mut d = (x - center).abs();
        if d > self.length / 2.0 {
            d = self.length - d;
        }
        let sigma = self.support_width * spacing;
        (-0.5 * (d / sigma) * (d / sigma)).exp()
    }

    /// LQ reward −[(s−0)ᵀQ(s−0) + aᵀRa] with uniform diagonal costs.
    pub fn lq_reward(&self, state: &PdeState, action: &[f64]) -> f64 {
        let mut s2: f64 = state.u.iter().map(|v| v * v).sum();
        if let Some(psi) = &state.psi {
            s2 += psi.iter().map(|v| v * v).sum::<f64>();
        }
        let a2: f64 = action.iter().map(|v| v * v).sum();
        -(self.cost_q * s2 + self.cost_r * a2)
    }

    /// Right-hand side du/dt (and dψ/dt for Wave) under the given forcing.
    pub fn rhs(&self, state: &PdeState, forcing: &[f64]) -> Result<(Vec<f64>, Option<Vec<f64>>), EnvError> {
        if !state.u.iter().all(|v| v.is_finite()) {
            return Err(EnvError::NonFinite("pde field".into()));
        }
        let n = self.n_x;
        let dx = self.dx();
        let lap = |u: &[f64], i: usize| {
            let im = if i == 0 { n - 1 } else { i - 1 };
            let ip = if i + 1 == n { 0 } else { i + 1 };
            (u[ip] - 2.0 * u[i] + u[im]) / (dx * dx)
        };
        match self.kind {
            PdeKind::Burgers => {
                let u = &state.u;
                let mut du = vec![0.0; n];
                for i in 0..n {
                    let im = if i == 0 { n - 1 } else { i - 1 };
                    let ip = if i + 1 == n { 0 } else { i + 1 };
                    // product flux: (F_{i+1/2} − F_{i−1/2})/dx, F = u_i·u_{i+1}/2
                    let adv = (u[i] * u[ip] - u[im] * u[i]) / (2.0 * dx);
                    du[i] = -adv + self.nu * lap(u, i) + forcing[i];
                }
                Ok((du, None))
            }
            PdeKind::AllenCahn => {
                let u = &state.u;
                let nu2 = self.nu * self.nu;
                let mut du = vec![0.0; n];
                for i in 0..n {
                    du[i] = nu2 * lap(u, i) - self.potential * (u[i] * u[i] * u[i] - u[i]) + forcing[i];
                }
                Ok((du, None))
            }
            PdeKind::Wave => {
                let psi = state.psi.as_ref().expect("wave state carries psi");
                if !psi.iter().all(|v| v.is_finite()) {
                    return Err(EnvError::NonFinite("wave velocity field".into()));
                }
                let c2 = self.wave_speed * self.wave_speed;
                let du = psi.clone();
                let mut dpsi = vec![0.0; n];
                for i in 0..n {
                    dpsi[i] = c2 * lap(&state.u, i) + forcing[i];
                }
                Ok((du, Some(dpsi)))
            }
        }
    }

    fn check_stability(&self, state: &PdeState) -> Result<(), EnvError> {
        let dx = self.dx();
        match self.kind {
            PdeKind::Burgers => {
                let umax = state.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let courant = umax * self.dt_sim / dx;
                if courant > CFL_LIMIT {
                    return Err(EnvError::Stability(format!(
                        "advective Courant number {courant:.3} exceeds {CFL_LIMIT}"
                    )));
                }
            }
            PdeKind::AllenCahn => {
                let umax2 = state.u.iter().fold(0.0f64, |m, v| m.max(v * v));
                let rate = self.potential * (3.0 * umax2 + 1.0) * self.dt_sim;
                if rate > REACTION_LIMIT {
                    return Err(EnvError::Stability(format!(
                        "reaction rate {rate:.3} exceeds {REACTION_LIMIT} per sub-step"
                    )));
                }
            }
            PdeKind::Wave => {
                let courant = self.wave_speed * self.dt_sim / dx;
                if courant > CFL_LIMIT {
                    return Err(EnvError::Stability(format!(
                        "wave Courant number {courant:.3} exceeds {CFL_LIMIT}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One `dt_sim` sub-step under frozen forcing.
    fn sub_step(&self, state: &mut PdeState, forcing: &[f64]) -> Result<(), EnvError> {
        let dt = self.dt_sim;
        match self.kind {
            PdeKind::Wave => {
                // velocity-Verlet (kick-drift-kick)
                let (_, dpsi) = self.rhs(state, forcing)?;
                let dpsi = dpsi.expect("wave rhs");
                let psi = state.psi.as_mut().expect("wave state");
                for (p, a) in psi.iter_mut().zip(&dpsi) {
                    *p += 0.5 * dt * a;
                }
                let psi_snapshot = state.psi.clone().expect("wave state");
                for (u, p) in state.u.iter_mut().zip(&psi_snapshot) {
                    *u += dt * p;
                }
                let (_, dpsi) = self.rhs(state, forcing)?;
                let dpsi = dpsi.expect("wave rhs");
                let psi = state.psi.as_mut().expect("wave state");
                for (p, a) in psi.iter_mut().zip(&dpsi) {
                    *p += 0.5 * dt * a;
                }
            }
            _ => {
                // classical RK4 on u
                let (k1, _) = self.rhs(state, forcing)?;
                let mut s2 = state.clone();
                axpy(&mut s2.u, &state.u, &k1, 0.5 * dt);
                let (k2, _) = self.rhs(&s2, forcing)?;
                let mut s3 = state.clone();
                axpy(&mut s3.u, &state.u, &k2, 0.5 * dt);
                let (k3, _) = self.rhs(&s3, forcing)?;
                let mut s4 = state.clone();
                axpy(&mut s4.u, &state.u, &k3, dt);
                let (k4, _) = self.rhs(&s4, forcing)?;
                for i in 0..self.n_x {
                    state.u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        state.t += dt;
        Ok(())
    }

    /// Advance by `round(dt/dt_sim)` sub-steps holding `action` fixed.
    pub fn step(&self, state: &mut PdeState, action: &[f64], dt: f64) -> Result<StepResult, EnvError> {
        if dt < self.dt_sim {
            return Err(EnvError::DtTooSmall { requested: dt, dt_sim: self.dt_sim });
        }
        let n_sub = (dt / self.dt_sim).round() as usize;
        let forcing = self.forcing_profile(action)?;
        for _ in 0..n_sub {
            self.check_stability(state)?;
            self.sub_step(state, &forcing)?;
        }
        if !state.u.iter().all(|v| v.is_finite()) {
            return Err(EnvError::NonFinite("pde field after step".into()));
        }
        Ok(StepResult {
            obs: self.observe(state),
            reward: self.lq_reward(state, action),
            elapsed: n_sub as f64 * self.dt_sim,
        })
    }

    /// Discrete wave energy ½Σ(ψ² + c²(∂ₓu)²)Δx with forward differences.
    pub fn wave_energy(&self, state: &PdeState) -> f64 {
        let psi = state.psi.as_ref().expect("wave state");
        let dx = self.dx();
        let c2 = self.wave_speed * self.wave_speed;
        let n = self.n_x;
        let mut e = 0.0;
        for i in 0..n {
            let ip = if i + 1 == n { 0 } else { i + 1 };
            let grad = (state.u[ip] - state.u[i]) / dx;
            e += 0.5 * (psi[i] * psi[i] + c2 * grad * grad) * dx;
        }
        e
    }

    /// Total mass Σu·Δx (conserved by Burgers under zero forcing).
    pub fn mass(&self, state: &PdeState) -> f64 {
        state.u.iter().sum::<f64>() * self.dx()
    }
}

const CFL_LIMIT: f64 = 0.8;
const DIFFUSION_LIMIT: f64 = 0.4;
const REACTION_LIMIT: f64 = 2.0;

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

fn axpy(dst: &mut [f64], base: &[f64], k: &[f64], scale: f64) {
    for i in 0..dst.len() {
        dst[i] = base[i] + scale * k[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_noise(mut spec: PdeSpec) -> PdeSpec {
        spec.init_noise = 0.0;
        spec
    }

    #[test]
    fn burgers_initial_condition_is_sech_pulse() {
        let spec = no_noise(PdeSpec::burgers());
        let state = spec.reset(0);
        for i in 0..spec.n_x {
            let x = i as f64 * spec.dx();
            assert!((state.u[i] - sech(10.0 * x - 5.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn allen_cahn_initial_condition_vanishes_at_center() {
        let spec = no_noise(PdeSpec::allen_cahn());
        let state = spec.reset(0);
        // x = 1 is a grid node for L=2, n_x=64; (x−1)²cos(π(x−1)) = 0 there.
        let i_center = spec.n_x / 2;
        assert!((i_center as f64 * spec.dx() - 1.0).abs() < 1e-12);
        assert_eq!(state.u[i_center], 0.0);
    }

    #[test]
    fn wave_reset_has_zero_velocity_field() {
        let spec = PdeSpec::wave();
        let state = spec.reset(123);
        assert!(state.psi.as_ref().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_field_is_burgers_fixed_point() {
        let spec = no_noise(PdeSpec::burgers());
        let state = PdeState { u: vec![0.7; spec.n_x], psi: None, t: 0.0 };
        let (du, _) = spec.rhs(&state, &vec![0.0; spec.n_x]).unwrap();
        for v in du {
            assert!(v.abs() < 1e-13, "constant field must not evolve, got {v}");
        }
    }

    #[test]
    fn allen_cahn_phases_are_fixed_points() {
        let spec = no_noise(PdeSpec::allen_cahn());
        for phase in [1.0, -1.0] {
            let state = PdeState { u: vec![phase; spec.n_x], psi: None, t: 0.0 };
            let (du, _) = spec.rhs(&state, &vec![0.0; spec.n_x]).unwrap();
            assert!(du.iter().all(|v| v.abs() < 1e-14), "u ≡ {phase} must be stationary");
        }
    }

    #[test]
    fn burgers_rhs_matches_spectral_oracle() {
        // u = sin(2πx) at n_x = 256 against a naive-DFT spectral derivative.
        let mut spec = no_noise(PdeSpec::burgers());
        spec.n_x = 256;
        let n = spec.n_x;
        let u: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 * spec.dx()).sin())
            .collect();
        let state = PdeState { u: u.clone(), psi: None, t: 0.0 };
        let (du, _) = spec.rhs(&state, &vec![0.0; n]).unwrap();

        let ux = spectral_derivative(&u, spec.length, 1);
        let uxx = spectral_derivative(&u, spec.length, 2);
        let mut max_err = 0.0f64;
        for i in 0..n {
            let oracle = -u[i] * ux[i] + spec.nu * uxx[i];
            max_err = max_err.max((du[i] - oracle).abs());
        }
        assert!(max_err < 1e-3, "max-norm error vs spectral oracle: {max_err}");
    }

    /// O(n²) discrete Fourier spectral derivative; independent of the
    /// finite-difference code under test.
    fn spectral_derivative(u: &[f64], length: f64, order: u32) -> Vec<f64> {
        let n = u.len();
        let tau = 2.0 * std::f64::consts::PI;
        // forward DFT
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for k in 0..n {
            for (j, uj) in u.iter().enumerate() {
                let ang = -tau * (k * j) as f64 / n as f64;
                re[k] += uj * ang.cos();
                im[k] += uj * ang.sin();
            }
        }
        // multiply by (i·2πk/L)^order with symmetric wavenumbers
        for k in 0..n {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let w = tau * kk / length;
            let (r, i) = (re[k], im[k]);
            match order {
                1 => {
                    re[k] = -w * i;
                    im[k] = w * r;
                }
                2 => {
                    re[k] = -w * w * r;
                    im[k] = -w * w * i;
                }
                _ => unreachable!(),
            }
        }
        // inverse DFT (real part)
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate() {
            for k in 0..n {
                let ang = tau * (k * j) as f64 / n as f64;
                *o += re[k] * ang.cos() - im[k] * ang.sin();
            }
            *o /= n as f64;
        }
        out
    }

    #[test]
    fn forcing_zero_action_gives_zero_field() {
        let spec = PdeSpec::burgers();
        let field = spec.forcing_profile(&vec![0.0; spec.n_a]).unwrap();
        assert!(field.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forcing_one_hot_equals_single_support() {
        let spec = PdeSpec::burgers();
        for j in [0, 3, 7] {
            let mut action = vec![0.0; spec.n_a];
            action[j] = 1.0;
            let field = spec.forcing_profile(&action).unwrap();
            for i in 0..spec.n_x {
                assert_eq!(field[i], spec.support(j, i));
            }
        }
    }

    #[test]
    fn forcing_all_ones_is_sum_of_supports_and_positive() {
        let spec = PdeSpec::burgers();
        let field = spec.forcing_profile(&vec![1.0; spec.n_a]).unwrap();
        for i in 0..spec.n_x {
            let direct: f64 = (0..spec.n_a).map(|j| spec.support(j, i)).sum();
            assert!((field[i] - direct).abs() < 1e-12);
            assert!(field[i] > 0.0, "supports must tile the domain");
        }
    }

    #[test]
    fn forcing_wrong_action_length_rejected() {
        let spec = PdeSpec::burgers();
        assert!(matches!(
            spec.forcing_profile(&[0.0; 3]),
            Err(EnvError::ActionLength { expected: 8, got: 3 })
        ));
    }

    #[test]
    fn lq_reward_zero_state_zero_action_is_zero() {
        let spec = PdeSpec::burgers();
        let state = PdeState { u: vec![0.0; spec.n_x], psi: None, t: 0.0 };
        assert_eq!(spec.lq_reward(&state, &vec![0.0; spec.n_a]), 0.0);
    }

    #[test]
    fn lq_reward_identity_weighting_quadratic_form() {
        let mut spec = PdeSpec::burgers();
        spec.cost_q = 1.0;
        let mut u = vec![0.0; spec.n_x];
        u[3] = 1.0;
        u[40] = -1.0; // Σu² = 2
        let state = PdeState { u, psi: None, t: 0.0 };
        assert!((spec.lq_reward(&state, &vec![0.0; spec.n_a]) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn lq_reward_matches_direct_quadratic_oracle() {
        let spec = PdeSpec::wave();
        let state = spec.reset(5);
        let action: Vec<f64> = (0..spec.n_a).map(|j| 0.1 * j as f64 - 0.3).collect();
        let psi = state.psi.as_ref().unwrap();
        let direct = -(spec.cost_q
            * (state.u.iter().map(|v| v * v).sum::<f64>() + psi.iter().map(|v| v * v).sum::<f64>())
            + spec.cost_r * action.iter().map(|v| v * v).sum::<f64>());
        assert!((spec.lq_reward(&state, &action) - direct).abs() < 1e-15);
    }

    #[test]
    fn substep_composition_is_bit_exact() {
        for spec in [no_noise(PdeSpec::burgers()), no_noise(PdeSpec::allen_cahn()), no_noise(PdeSpec::wave())] {
            let action: Vec<f64> = (0..spec.n_a).map(|j| ((j as f64) * 0.7).sin() * 0.5).collect();
            let k = 5;
            let mut one_shot = spec.reset(9);
            let r = spec.step(&mut one_shot, &action, k as f64 * spec.dt_sim).unwrap();
            assert_eq!(r.elapsed, k as f64 * spec.dt_sim);

            let mut composed = spec.reset(9);
            for _ in 0..k {
                spec.step(&mut composed, &action, spec.dt_sim).unwrap();
            }
            assert_eq!(one_shot.u, composed.u, "sub-step composition must be bit-exact");
            assert_eq!(one_shot.psi, composed.psi);
        }
    }

    #[test]
    fn burgers_mass_conserved_per_step() {
        let spec = no_noise(PdeSpec::burgers());
        let mut state = spec.reset(3);
        let zero = vec![0.0; spec.n_a];
        let mut prev = spec.mass(&state);
        for _ in 0..50 {
            spec.step(&mut state, &zero, spec.dt_sim).unwrap();
            let m = spec.mass(&state);
            assert!((m - prev).abs() < 1e-10, "mass drift {} per step", (m - prev).abs());
            prev = m;
        }
    }

    #[test]
    fn wave_energy_drift_below_tenth_percent() {
        let spec = no_noise(PdeSpec::wave());
        let mut state = spec.reset(0);
        let zero = vec![0.0; spec.n_a];
        let e0 = spec.wave_energy(&state);
        let mut max_dev = 0.0f64;
        for _ in 0..100 {
            spec.step(&mut state, &zero, spec.dt_sim).unwrap();
            max_dev = max_dev.max((spec.wave_energy(&state) - e0).abs() / e0);
        }
        assert!(max_dev < 1e-3, "energy drift {max_dev}");
    }

    #[test]
    fn dt_below_dt_sim_is_rejected() {
        let spec = PdeSpec::burgers();
        let mut state = spec.reset(0);
        let err = spec.step(&mut state, &vec![0.0; spec.n_a], spec.dt_sim * 0.25).unwrap_err();
        assert!(matches!(err, EnvError::DtTooSmall { .. }));
    }

    #[test]
    fn cfl_violation_is_an_error_not_a_blowup() {
        let spec = no_noise(PdeSpec::burgers());
        let mut state = spec.reset(0);
        // |u| = 20 → Courant 20·1e-3/ (1/64) = 1.28 > 0.8
        state.u[10] = 20.0;
        let err = spec.step(&mut state, &vec![0.0; spec.n_a], spec.dt_sim).unwrap_err();
        assert!(matches!(err, EnvError::Stability(_)), "{err:?}");
    }

    #[test]
    fn default_specs_validate() {
        for spec in [PdeSpec::burgers(), PdeSpec::allen_cahn(), PdeSpec::wave()] {
            spec.validate().unwrap();
        }
    }
}
