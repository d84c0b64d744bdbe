//! MPPI planning over Δt-conditioned latent rollouts.
//!
//! Each planning call samples action sequences around a running mean (a
//! fraction of samples instead follows the policy prior), scores them with
//! single-model-call latent rollouts at the episode Δt, softmax-weights the
//! top elites by temperature, and iterates. Scoring is chunk-parallel with a
//! fixed chunk size and per-(iteration, sample) RNG streams, so parallel and
//! serial runs are bit-identical.

use crate::nn::Matrix;
use crate::rng::stream;
use crate::worldmodel::{WmError, WorldModel};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples per parallel scoring chunk; fixed so the worker count cannot
/// change results.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanConfig {
    pub horizon: usize,
    pub n_samples: usize,
    pub n_elites: usize,
    pub n_iterations: usize,
    pub temperature: f64,
    /// Sampling std at the start of every planning call.
    pub init_std: f64,
    /// Std floor keeping later iterations from collapsing.
    pub min_std: f64,
    pub gamma_base: f64,
    /// Fraction of samples rolled out from the policy prior.
    pub prior_fraction: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            horizon: 5,
            n_samples: 256,
            n_elites: 32,
            n_iterations: 4,
            temperature: 0.5,
            init_std: 0.5,
            min_std: 0.05,
            gamma_base: 0.99,
            prior_fraction: 0.25,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<(), WmError> {
        if self.n_samples == 0 || self.n_iterations == 0 {
            return Err(WmError::Config("sample and iteration counts must be positive".into()));
        }
        if self.n_elites == 0 || self.n_elites > self.n_samples {
            return Err(WmError::Config(format!(
                "n_elites {} must be in 1..={}",
                self.n_elites, self.n_samples
            )));
        }
        if self.temperature <= 0.0 {
            return Err(WmError::Config("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.prior_fraction) {
            return Err(WmError::Config("prior fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Δt-aware discount γ_base^(Δt/Δt_ref).
    pub fn gamma(&self, dt: f64, dt_ref: f64) -> f64 {
        self.gamma_base.powf(dt / dt_ref)
    }
}

/// One action per planner step.
pub type ActionSeq = Vec<Vec<f64>>;

/// Latent rollout of one action sequence:
/// return = Σ_{k<H} γᵏ·r̂(ẑ_k, a_k, Δt) + γᴴ·q̂(ẑ_H, p(ẑ_H, Δt), Δt),
/// one model call per planner step.
pub fn latent_rollout(
    model: &WorldModel,
    z0: &[f64],
    actions: &[Vec<f64>],
    dt: f64,
    gamma: f64,
) -> Result<(Vec<Vec<f64>>, f64), WmError> {
    let mut traj = vec![z0.to_vec()];
    let mut ret = 0.0;
    let mut disc = 1.0;
    let mut z = z0.to_vec();
    for a in actions {
        ret += disc * model.predict_reward(&z, a, dt)?;
        z = model
            .dynamics_batch(&Matrix::column_vector(&z), &Matrix::column_vector(a), dt)?
            .data;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(WmError::NonFinite { stage: "latent rollout" });
        }
        traj.push(z.clone());
        disc *= gamma;
    }
    let terminal_action = model.policy_prior(&z, dt)?;
    ret += disc * model.predict_value(&z, &terminal_action, dt)?;
    Ok((traj, ret))
}

/// Batched rollout scores for a chunk of action sequences. `actions[k]`
/// holds step-k actions, one sample per column; per-column results equal
/// single-sample [`latent_rollout`] returns bit-for-bit.
fn score_chunk(
    model: &WorldModel,
    z0: &[f64],
    actions: &[Matrix],
    dt: f64,
    gamma: f64,
) -> Result<Vec<f64>, WmError> {
    let n = actions.first().map_or(0, |a| a.cols);
    let mut z = Matrix::from_columns(&vec![z0.to_vec(); n]);
    let mut ret = vec![0.0; n];
    let mut disc = 1.0;
    for a in actions {
        let r = model.reward_batch(&z, a, dt)?;
        for (acc, ri) in ret.iter_mut().zip(&r) {
            *acc += disc * ri;
        }
        z = model.dynamics_batch(&z, a, dt)?;
        disc *= gamma;
    }
    let terminal = model.prior_batch(&z, dt)?;
    let q = model.value_batch(&z, &terminal, dt, false)?;
    for (acc, qi) in ret.iter_mut().zip(&q) {
        *acc += disc * qi;
    }
    Ok(ret)
}

/// Softmax weights over elite scores; shift-invariant by construction.
fn softmax_weights(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

pub struct MppiIteration {
    pub mean: ActionSeq,
    pub std: ActionSeq,
    /// Mean score of the selected elites; non-decreasing across iterations
    /// under common random numbers on deterministic models.
    pub elite_mean_score: f64,
}

/// One MPPI update given explicit sample noise (`noise[j][k][i]` for sample
/// j, step k, action dim i). Sample 0 replays the prior rollout noise-free;
/// samples 1..n_prior explore around the prior rollout, the rest around the
/// running mean.
#[allow(clippy::too_many_arguments)]
pub fn mppi_iterate(
    model: &WorldModel,
    z0: &[f64],
    dt: f64,
    gamma: f64,
    cfg: &PlanConfig,
    mean: &ActionSeq,
    std: &ActionSeq,
    noise: &[ActionSeq],
    prior_rollout: &ActionSeq,
) -> Result<MppiIteration, WmError> {
    let n = cfg.n_samples;
    let n_a = model.cfg.n_a;
    let h = cfg.horizon;
    let n_prior = ((cfg.prior_fraction * n as f64).ceil() as usize).min(n);

    let mut actions: Vec<Matrix> = (0..h).map(|_| Matrix::zeros(n_a, n)).collect();
    for j in 0..n {
        for (k, step_actions) in actions.iter_mut().enumerate() {
            for i in 0..n_a {
                let center = if j < n_prior { prior_rollout[k][i] } else { mean[k][i] };
                let eps = if j == 0 && n_prior > 0 { 0.0 } else { noise[j][k][i] };
                step_actions.set(i, j, (center + std[k][i] * eps).clamp(-1.0, 1.0));
            }
        }
    }

    let ranges: Vec<(usize, usize)> =
        (0..n).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(n))).collect();
    let chunk_scores: Vec<Result<Vec<f64>, WmError>> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let slice: Vec<Matrix> = actions
                .iter()
                .map(|a| {
                    let mut m = Matrix::zeros(n_a, e - s);
                    for r in 0..n_a {
                        for c in s..e {
                            m.set(r, c - s, a.get(r, c));
                        }
                    }
                    m
                })
                .collect();
            score_chunk(model, z0, &slice, dt, gamma)
        })
        .collect();
    let mut scores = Vec::with_capacity(n);
    for cs in chunk_scores {
        scores.extend(cs?);
    }

    // Rank finite scores descending, ties broken by sample index.
    let mut order: Vec<usize> = (0..n).filter(|&j| scores[j].is_finite()).collect();
    if order.is_empty() {
        return Err(WmError::NonFinite { stage: "all rollouts" });
    }
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut elites: Vec<usize> = order.into_iter().take(cfg.n_elites.min(n)).collect();
    elites.sort_unstable(); // fixed accumulation order

    let elite_scores: Vec<f64> = elites.iter().map(|&j| scores[j]).collect();
    let weights = softmax_weights(&elite_scores, cfg.temperature);
    let elite_mean_score = elite_scores.iter().sum::<f64>() / elite_scores.len() as f64;

    let mut new_mean = vec![vec![0.0; n_a]; h];
    let mut new_std = vec![vec![0.0; n_a]; h];
    for k in 0..h {
        for i in 0..n_a {
            let mut mu = 0.0;
            for (w, &j) in weights.iter().zip(&elites) {
                mu += w * actions[k].get(i, j);
            }
            let mut var = 0.0;
            for (w, &j) in weights.iter().zip(&elites) {
                let dev = actions[k].get(i, j) - mu;
                var += w * dev * dev;
            }
            new_mean[k][i] = mu;
            new_std[k][i] = var.sqrt().max(cfg.min_std);
        }
    }
    Ok(MppiIteration { mean: new_mean, std: new_std, elite_mean_score })
}

/// Box–Muller standard normal draw.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Per-sample noise tensors from streams derived from (call seed,
/// iteration, sample index); workers can regenerate them independently.
fn sample_noise(call_seed: u64, iter: usize, cfg: &PlanConfig, n_a: usize) -> Vec<ActionSeq> {
    (0..cfg.n_samples)
        .map(|j| {
            let mut rng = stream(call_seed, "mppi-noise", &[iter as u64, j as u64]);
            (0..cfg.horizon)
                .map(|_| (0..n_a).map(|_| gaussian(&mut rng)).collect())
                .collect()
        })
        .collect()
}

/// Full MPPI planning call. Returns the first action of the final mean
/// (clamped to bounds) plus the mean sequence for warm-starting.
pub fn mppi_plan<R: Rng>(
    model: &WorldModel,
    z0: &[f64],
    dt: f64,
    dt_ref: f64,
    cfg: &PlanConfig,
    warm_mean: Option<&ActionSeq>,
    rng: &mut R,
) -> Result<(Vec<f64>, ActionSeq), WmError> {
    cfg.validate()?;
    let n_a = model.cfg.n_a;
    let gamma = cfg.gamma(dt, dt_ref);
    let call_seed: u64 = rng.gen();

    // Prior rollout: follow p through the latent dynamics once.
    let mut prior_rollout: ActionSeq = Vec::with_capacity(cfg.horizon);
    let mut z = z0.to_vec();
    for _ in 0..cfg.horizon {
        let a = model.policy_prior(&z, dt)?;
        z = model
            .dynamics_batch(&Matrix::column_vector(&z), &Matrix::column_vector(&a), dt)?
            .data;
        prior_rollout.push(a);
    }

    // Warm start: shift the previous plan one step and zero-pad the tail;
    // the sampling std is re-inflated every call.
    let mut mean: ActionSeq = match warm_mean {
        Some(prev) if prev.len() == cfg.horizon => {
            let mut m: ActionSeq = prev[1..].to_vec();
            m.push(vec![0.0; n_a]);
            m
        }
        _ => vec![vec![0.0; n_a]; cfg.horizon],
    };
    let mut std: ActionSeq = vec![vec![cfg.init_std; n_a]; cfg.horizon];

    for iter in 0..cfg.n_iterations {
        let noise = sample_noise(call_seed, iter, cfg, n_a);
        let it = mppi_iterate(model, z0, dt, gamma, cfg, &mean, &std, &noise, &prior_rollout)?;
        mean = it.mean;
        std = it.std;
    }

    let action: Vec<f64> = mean
        .first()
        .map(|a| a.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
        .unwrap_or_else(|| vec![0.0; n_a]);
    Ok((action, mean))
}

/// Stateful planning front end holding the warm-start sequence.
pub struct Planner {
    pub cfg: PlanConfig,
    prev_mean: Option<ActionSeq>,
}

impl Planner {
    pub fn new(cfg: PlanConfig) -> Self {
        Planner { cfg, prev_mean: None }
    }

    /// Drop the warm start at episode boundaries.
    pub fn begin_episode(&mut self) {
        self.prev_mean = None;
    }

    pub fn act<R: Rng>(
        &mut self,
        model: &WorldModel,
        obs: &[f64],
        dt: f64,
        dt_ref: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>, WmError> {
        let z0 = model.encode(obs)?;
        let (action, mean) =
            mppi_plan(model, &z0, dt, dt_ref, &self.cfg, self.prev_mean.as_ref(), rng)?;
        self.prev_mean = Some(mean);
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{adam_step, mlp_backward, mlp_forward, AdamConfig, AdamState, ParamStore};
    use crate::worldmodel::{dt_feature, loss, Integrator, ModelConfig, WorldModel};
    use rand::Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            obs_dim: 3,
            n_a: 2,
            d_z: 3,
            hidden: vec![16],
            integrator: Integrator::Euler,
            ema: 0.995,
        }
    }

    /// Zero dynamics/value/prior; reward head trained to approximate −‖a‖²,
    /// so the optimal action is analytically 0.
    fn quadratic_model() -> WorldModel {
        let mut model = WorldModel::zeros(tiny_cfg());
        let mut rng = crate::rng::stream(77, "quad-init", &[]);
        model.reward = ParamStore::init("reward", model.reward.arch.clone(), &mut rng);
        let mut adam =
            AdamState::new(&model.reward, AdamConfig { lr: 3e-3, ..AdamConfig::default() });
        let feat = dt_feature(0.05).unwrap();
        for _ in 0..1500 {
            let mut grads = model.reward.zero_grads();
            for _ in 0..64 {
                let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let target = -(a[0] * a[0] + a[1] * a[1]);
                let input = vec![0.0, 0.0, 0.0, a[0], a[1], feat];
                let (y, tape) = mlp_forward(&model.reward, &input).unwrap();
                let g = mlp_backward(&tape, &[2.0 * (y[0] - target) / 64.0]).unwrap();
                grads.add_assign(&g);
            }
            adam_step(&mut model.reward, &grads, &mut adam).unwrap();
        }
        model
    }

    #[test]
    fn empty_horizon_returns_value_bootstrap_only() {
        let model = WorldModel::new(tiny_cfg(), 5);
        let z0 = vec![0.2, -0.1, 0.4];
        let (traj, ret) = latent_rollout(&model, &z0, &[], 0.05, 0.99).unwrap();
        assert_eq!(traj.len(), 1);
        let a = model.policy_prior(&z0, 0.05).unwrap();
        let q = model.predict_value(&z0, &a, 0.05).unwrap();
        assert_eq!(ret, q);
    }

    #[test]
    fn zero_heads_give_zero_return() {
        let model = WorldModel::zeros(tiny_cfg());
        let actions = vec![vec![0.5, -0.5]; 4];
        let (_, ret) = latent_rollout(&model, &[0.1, 0.2, 0.3], &actions, 0.05, 0.95).unwrap();
        assert_eq!(ret, 0.0);
    }

    #[test]
    fn two_step_rollout_matches_hand_computation() {
        let model = WorldModel::new(tiny_cfg(), 13);
        let z0 = vec![0.3, -0.6, 0.9];
        let actions = vec![vec![0.4, -0.8], vec![-0.2, 0.6]];
        let dt = 0.07;
        let gamma = 0.97;
        let (_, ret) = latent_rollout(&model, &z0, &actions, dt, gamma).unwrap();

        let r0 = model.predict_reward(&z0, &actions[0], dt).unwrap();
        let z1 = model.dynamics_euler(&z0, &actions[0], dt).unwrap();
        let r1 = model.predict_reward(&z1, &actions[1], dt).unwrap();
        let z2 = model.dynamics_euler(&z1, &actions[1], dt).unwrap();
        let a2 = model.policy_prior(&z2, dt).unwrap();
        let q2 = model.predict_value(&z2, &a2, dt).unwrap();
        let expected = r0 + gamma * r1 + gamma * gamma * q2;
        assert!((ret - expected).abs() < 1e-12);
    }

    #[test]
    fn batched_scores_match_single_rollouts_bitwise() {
        let model = WorldModel::new(tiny_cfg(), 19);
        let z0 = vec![0.1, 0.4, -0.3];
        let dt = 0.1;
        let gamma = 0.98;
        let seqs: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|j| {
                (0..3)
                    .map(|k| {
                        vec![
                            ((j + k) as f64 * 0.37).sin() * 0.8,
                            ((j * k) as f64 * 0.11).cos() * 0.5,
                        ]
                    })
                    .collect()
            })
            .collect();
        let tensors: Vec<Matrix> = (0..3)
            .map(|k| Matrix::from_columns(&seqs.iter().map(|s| s[k].clone()).collect::<Vec<_>>()))
            .collect();
        let batch = score_chunk(&model, &z0, &tensors, dt, gamma).unwrap();
        for (j, seq) in seqs.iter().enumerate() {
            let (_, single) = latent_rollout(&model, &z0, seq, dt, gamma).unwrap();
            assert_eq!(batch[j], single, "sample {j}");
        }
    }

    #[test]
    fn degenerate_sampler_returns_prior_action() {
        let model = WorldModel::new(tiny_cfg(), 23);
        let cfg = PlanConfig {
            n_samples: 1,
            n_elites: 1,
            init_std: 0.0,
            min_std: 0.0,
            ..PlanConfig::default()
        };
        let z0 = model.encode(&[0.5, -0.5, 0.2]).unwrap();
        let mut rng = crate::rng::stream(1, "plan", &[]);
        let (action, _) = mppi_plan(&model, &z0, 0.05, 0.05, &cfg, None, &mut rng).unwrap();
        let prior = model.policy_prior(&z0, 0.05).unwrap();
        for (a, p) in action.iter().zip(&prior) {
            assert!((a - p).abs() < 1e-12, "degenerate MPPI must return the prior action");
        }
    }

    #[test]
    fn planning_is_seed_deterministic_and_bounded() {
        let model = WorldModel::new(tiny_cfg(), 29);
        let cfg =
            PlanConfig { n_samples: 32, n_elites: 8, n_iterations: 2, ..PlanConfig::default() };
        let z0 = model.encode(&[0.9, -0.2, 0.3]).unwrap();
        let act = |seed: u64| {
            let mut rng = crate::rng::stream(seed, "plan", &[]);
            mppi_plan(&model, &z0, 0.05, 0.05, &cfg, None, &mut rng).unwrap().0
        };
        let a = act(4);
        assert_eq!(a, act(4), "same seed, same action");
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn softmax_weights_are_shift_invariant() {
        let scores = vec![-3.0, -1.0, -2.5, 0.0];
        let w1 = softmax_weights(&scores, 0.5);
        let shifted: Vec<f64> = scores.iter().map(|s| s + 123.456).collect();
        let w2 = softmax_weights(&shifted, 0.5);
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_model_converges_to_zero_action() {
        let model = quadratic_model();
        let cfg = PlanConfig { n_iterations: 6, ..PlanConfig::default() };
        let z0 = vec![0.0, 0.0, 0.0];
        let mut rng = crate::rng::stream(31, "plan", &[]);
        let (action, _) = mppi_plan(&model, &z0, 0.05, 0.05, &cfg, None, &mut rng).unwrap();
        for v in &action {
            assert!(v.abs() < 0.05, "expected near-zero optimum, got {action:?}");
        }
    }

    #[test]
    fn elite_mean_score_is_monotone_under_common_random_numbers() {
        let model = quadratic_model();
        let cfg = PlanConfig { n_samples: 64, n_elites: 8, ..PlanConfig::default() };
        let z0 = vec![0.0, 0.0, 0.0];
        let noise = sample_noise(99, 0, &cfg, 2);
        let prior = vec![vec![0.0, 0.0]; cfg.horizon];
        let mut mean = vec![vec![0.9, -0.9]; cfg.horizon];
        let mut std = vec![vec![cfg.init_std; 2]; cfg.horizon];
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..4 {
            let it =
                mppi_iterate(&model, &z0, 0.05, 1.0, &cfg, &mean, &std, &noise, &prior).unwrap();
            assert!(
                it.elite_mean_score >= prev - 1e-12,
                "elite mean decreased: {prev} -> {}",
                it.elite_mean_score
            );
            prev = it.elite_mean_score;
            mean = it.mean;
            std = it.std;
        }
    }

    #[test]
    fn briefly_trained_model_plans_within_bounds() {
        let mut model = WorldModel::new(tiny_cfg(), 41);
        let batch = vec![loss::SubTraj {
            obs: vec![vec![0.4, 0.1, -0.2]; 4],
            actions: vec![vec![0.3, -0.3]; 3],
            rewards: vec![-0.5; 3],
            dt: 0.05,
        }];
        let cfg = loss::LossConfig::new(0.05);
        let mut states = [
            AdamState::new(&model.h, AdamConfig::default()),
            AdamState::new(&model.d, AdamConfig::default()),
            AdamState::new(&model.reward, AdamConfig::default()),
            AdamState::new(&model.value, AdamConfig::default()),
        ];
        for _ in 0..20 {
            let (_, grads) = loss::loss_batch(&model, &batch, &cfg).unwrap();
            adam_step(&mut model.h, &grads.h, &mut states[0]).unwrap();
            adam_step(&mut model.d, &grads.d, &mut states[1]).unwrap();
            adam_step(&mut model.reward, &grads.reward, &mut states[2]).unwrap();
            adam_step(&mut model.value, &grads.value, &mut states[3]).unwrap();
            model.ema_update_targets();
        }
        let mut planner =
            Planner::new(PlanConfig { n_samples: 32, n_elites: 8, ..Default::default() });
        planner.begin_episode();
        let mut rng = crate::rng::stream(2, "plan", &[]);
        let a = planner.act(&model, &[0.4, 0.1, -0.2], 0.05, 0.05, &mut rng).unwrap();
        assert!(a.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
    }
}
