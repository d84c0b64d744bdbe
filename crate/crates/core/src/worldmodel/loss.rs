//! Joint training loss over short sub-trajectories.
//!
//! For a batch of length-H sub-trajectories, each with its own episode Δt,
//!
//!   loss = mean_batch Σ_{k<H} λᵏ · [ c₁·‖ẑ_{k+1} − sg(h⁻(o_{k+1}))‖²
//!                                  + c₂·(r̂_k − r_k)²
//!                                  + c₃·(q̂_k − y_k)² ]
//!
//! where ẑ is the rolled-out latent (re-fed, never re-encoded), h⁻/Q⁻ are the
//! EMA target copies, y_k = r_k + γ_Δt·sg(Q⁻(z_{k+1}⁻, p(z_{k+1}⁻, Δt), Δt)),
//! and γ_Δt = γ_base^(Δt/Δt_ref) so value scales stay comparable across Δt.
//!
//! Everything inside sg(·) is evaluated outside the gradient tape, so the
//! policy prior receives no gradient from this loss: it shapes TD targets
//! only. Δt rides along as one network input feature per batch column.

use super::{dt_feature, tau, Integrator, WmError, WorldModel};
use crate::nn::tape::{GradTape, NodeId, StoreGrads};
use crate::nn::{gradcheck, Matrix, ParamStore};

#[derive(Debug, Clone)]
pub struct SubTraj {
    /// H+1 observations o_0 .. o_H.
    pub obs: Vec<Vec<f64>>,
    /// H actions.
    pub actions: Vec<Vec<f64>>,
    /// H rewards.
    pub rewards: Vec<f64>,
    /// The episode's Δt (one per episode, shared by every step).
    pub dt: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Horizon discount λ on later rollout steps.
    pub lambda: f64,
    pub gamma_base: f64,
    /// Reference Δt for the Δt-aware discount exponent.
    pub dt_ref: f64,
}

impl LossConfig {
    pub fn new(dt_ref: f64) -> Self {
        LossConfig { c1: 1.0, c2: 0.5, c3: 0.5, lambda: 0.9, gamma_base: 0.99, dt_ref }
    }

    /// γ_Δt = γ_base^(Δt/Δt_ref).
    pub fn gamma(&self, dt: f64) -> f64 {
        self.gamma_base.powf(dt / self.dt_ref)
    }
}

/// Weighted contributions; `total = consistency + reward + value` exactly.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: f64,
    pub consistency: f64,
    pub reward: f64,
    pub value: f64,
}

/// Gradients for every head; the prior entry is zero under this loss.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub h: StoreGrads,
    pub d: StoreGrads,
    pub reward: StoreGrads,
    pub value: StoreGrads,
    pub prior: StoreGrads,
}

/// Stop-gradient quantities, fixed before the differentiated pass.
pub struct Targets {
    /// z⁻_{k+1} = h⁻(o_{k+1}) for k = 0..H−1, each `[d_z × B]`.
    pub z_next: Vec<Matrix>,
    /// TD targets y_k per step, each `[1 × B]` stored row-wise.
    pub y: Vec<Vec<f64>>,
}

pub fn compute_targets(model: &WorldModel, batch: &[SubTraj], cfg: &LossConfig) -> Result<Targets, WmError> {
    let horizon = batch[0].rewards.len();
    let n = batch.len();
    let mut z_next = Vec::with_capacity(horizon);
    let mut y = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let obs_k1 = Matrix::from_columns(
            &batch.iter().map(|t| t.obs[k + 1].clone()).collect::<Vec<_>>(),
        );
        let z = model.h_target.forward_batch(&obs_k1)?;
        // Per-column Δt features; the prior and target value read them raw.
        let mut q_next = vec![0.0; n];
        for (col, traj) in batch.iter().enumerate() {
            let zc = Matrix::column_vector(&z.column(col));
            let a = model.prior_batch(&zc, traj.dt)?;
            let q = model.value_batch(&zc, &a, traj.dt, true)?;
            q_next[col] = q[0];
        }
        let mut yk = vec![0.0; n];
        for (col, traj) in batch.iter().enumerate() {
            yk[col] = traj.rewards[k] + cfg.gamma(traj.dt) * q_next[col];
        }
        z_next.push(z);
        y.push(yk);
    }
    Ok(Targets { z_next, y })
}

/// Latent step on the tape; mirrors the plain-forward integrators exactly.
fn tape_dynamics(
    tape: &mut GradTape<'_>,
    d_store: usize,
    integrator: Integrator,
    z: NodeId,
    a_leaf: NodeId,
    feat_leaf: NodeId,
    feat_half_leaf: NodeId,
    taus: &[f64],
    taus_half: &[f64],
) -> Result<NodeId, WmError> {
    let dcall = |tape: &mut GradTape<'_>, z: NodeId, feat: NodeId| -> Result<NodeId, WmError> {
        let input = tape.concat_rows(&[z, a_leaf, feat]);
        Ok(tape.forward_store(d_store, input)?)
    };
    match integrator {
        Integrator::Euler => {
            let deriv = dcall(tape, z, feat_leaf)?;
            let step = tape.scale_cols(deriv, taus.to_vec());
            Ok(tape.add(z, step))
        }
        Integrator::Rk4 => {
            let k1 = dcall(tape, z, feat_leaf)?;
            let dh1 = dcall(tape, z, feat_half_leaf)?;
            let sh1 = tape.scale_cols(dh1, taus_half.to_vec());
            let z1 = tape.add(z, sh1);
            let k2 = dcall(tape, z1, feat_leaf)?;
            let dh2 = dcall(tape, z1, feat_half_leaf)?;
            let sh2 = tape.scale_cols(dh2, taus_half.to_vec());
            let z2 = tape.add(z, sh2);
            let k3 = dcall(tape, z2, feat_leaf)?;
            let s3 = tape.scale_cols(k3, taus.to_vec());
            let z3 = tape.add(z, s3);
            let k4 = dcall(tape, z3, feat_leaf)?;
            let k2x2 = tape.scale(k2, 2.0);
            let k3x2 = tape.scale(k3, 2.0);
            let s12 = tape.add(k1, k2x2);
            let s34 = tape.add(k3x2, k4);
            let sum = tape.add(s12, s34);
            let avg = tape.scale(sum, 1.0 / 6.0);
            let step = tape.scale_cols(avg, taus.to_vec());
            Ok(tape.add(z, step))
        }
    }
}

/// Loss and gradients against precomputed stop-gradient targets.
pub fn loss_batch_with_targets(
    model: &WorldModel,
    batch: &[SubTraj],
    cfg: &LossConfig,
    targets: &Targets,
) -> Result<(LossBreakdown, ModelGrads), WmError> {
    let n = batch.len();
    let horizon = batch[0].rewards.len();
    for traj in batch {
        if traj.rewards.len() != horizon || traj.obs.len() != horizon + 1 || traj.actions.len() != horizon {
            return Err(WmError::NonFinite { stage: "ragged batch" });
        }
        if traj.dt <= 0.0 {
            return Err(WmError::NonPositiveDt(traj.dt));
        }
    }

    let feats: Vec<f64> = batch.iter().map(|t| dt_feature(t.dt)).collect::<Result<_, _>>()?;
    let feats_half: Vec<f64> =
        batch.iter().map(|t| dt_feature(t.dt / 2.0)).collect::<Result<_, _>>()?;
    let taus: Vec<f64> = batch.iter().map(|t| tau(t.dt)).collect::<Result<_, _>>()?;
    let taus_half: Vec<f64> = batch.iter().map(|t| tau(t.dt / 2.0)).collect::<Result<_, _>>()?;

    let mut tape = GradTape::new();
    let sid_h = tape.register(&model.h);
    let sid_d = tape.register(&model.d);
    let sid_r = tape.register(&model.reward);
    let sid_q = tape.register(&model.value);

    let obs0 = Matrix::from_columns(&batch.iter().map(|t| t.obs[0].clone()).collect::<Vec<_>>());
    let obs0 = tape.leaf(obs0);
    let mut z = tape.forward_store(sid_h, obs0)?;

    let feat_leaf = tape.leaf(Matrix::from_vec(1, n, feats.clone()));
    let feat_half_leaf = tape.leaf(Matrix::from_vec(1, n, feats_half.clone()));

    let mut cons_acc: Option<NodeId> = None;
    let mut rew_acc: Option<NodeId> = None;
    let mut val_acc: Option<NodeId> = None;
    let push = |tape: &mut GradTape<'_>, acc: &mut Option<NodeId>, term: NodeId, weight: f64| {
        let scaled = tape.scale(term, weight);
        *acc = Some(match *acc {
            Some(prev) => tape.add(prev, scaled),
            None => scaled,
        });
    };

    for k in 0..horizon {
        let a_leaf = tape.leaf(Matrix::from_columns(
            &batch.iter().map(|t| t.actions[k].clone()).collect::<Vec<_>>(),
        ));
        let head_input = tape.concat_rows(&[z, a_leaf, feat_leaf]);
        let weight = cfg.lambda.powi(k as i32);

        let r_hat = tape.forward_store(sid_r, head_input)?;
        let r_leaf = tape.leaf(Matrix::from_vec(1, n, batch.iter().map(|t| t.rewards[k]).collect()));
        let r_err = tape.sub(r_hat, r_leaf);
        let rew_k = tape.sum_sq_cols(r_err);
        push(&mut tape, &mut rew_acc, rew_k, weight);

        let q_hat = tape.forward_store(sid_q, head_input)?;
        let y_leaf = tape.leaf(Matrix::from_vec(1, n, targets.y[k].clone()));
        let q_err = tape.sub(q_hat, y_leaf);
        let val_k = tape.sum_sq_cols(q_err);
        push(&mut tape, &mut val_acc, val_k, weight);

        z = tape_dynamics(
            &mut tape,
            sid_d,
            model.cfg.integrator,
            z,
            a_leaf,
            feat_leaf,
            feat_half_leaf,
            &taus,
            &taus_half,
        )?;
        let z_tgt = tape.leaf(targets.z_next[k].clone());
        let z_err = tape.sub(z, z_tgt);
        let cons_k = tape.sum_sq_cols(z_err);
        push(&mut tape, &mut cons_acc, cons_k, weight);
    }

    // Weighted contributions, averaged over the batch.
    let mean_w = vec![1.0 / n as f64; n];
    let contribution = |tape: &mut GradTape<'_>, acc: NodeId, c: f64| {
        let mean = tape.weighted_col_sum(acc, mean_w.clone());
        tape.scale(mean, c)
    };
    let cons_total = contribution(&mut tape, cons_acc.expect("nonzero horizon"), cfg.c1);
    let rew_total = contribution(&mut tape, rew_acc.expect("nonzero horizon"), cfg.c2);
    let val_total = contribution(&mut tape, val_acc.expect("nonzero horizon"), cfg.c3);
    let partial = tape.add(cons_total, rew_total);
    let total = tape.add(partial, val_total);

    let breakdown = LossBreakdown {
        total: tape.value(total).data[0],
        consistency: tape.value(cons_total).data[0],
        reward: tape.value(rew_total).data[0],
        value: tape.value(val_total).data[0],
    };
    if !breakdown.total.is_finite() {
        return Err(WmError::NonFinite { stage: "loss total" });
    }

    let res = tape.backward_from(total, &Matrix::from_vec(1, 1, vec![1.0]));
    let mut grads = res.store_grads.into_iter();
    let model_grads = ModelGrads {
        h: grads.next().expect("h grads"),
        d: grads.next().expect("d grads"),
        reward: grads.next().expect("reward grads"),
        value: grads.next().expect("value grads"),
        prior: model.prior.zero_grads(),
    };
    Ok((breakdown, model_grads))
}

/// Full loss: compute stop-gradient targets, then differentiate.
pub fn loss_batch(
    model: &WorldModel,
    batch: &[SubTraj],
    cfg: &LossConfig,
) -> Result<(LossBreakdown, ModelGrads), WmError> {
    let targets = compute_targets(model, batch, cfg)?;
    loss_batch_with_targets(model, batch, cfg, &targets)
}

/// Which store a head name refers to, for gradient checking.
fn head_mut<'m>(model: &'m mut WorldModel, head: &str) -> &'m mut ParamStore {
    match head {
        "h" => &mut model.h,
        "d" => &mut model.d,
        "reward" => &mut model.reward,
        "value" => &mut model.value,
        "prior" => &mut model.prior,
        _ => panic!("unknown head {head}"),
    }
}

fn head_grads<'g>(grads: &'g ModelGrads, head: &str) -> &'g StoreGrads {
    match head {
        "h" => &grads.h,
        "d" => &grads.d,
        "reward" => &grads.reward,
        "value" => &grads.value,
        "prior" => &grads.prior,
        _ => panic!("unknown head {head}"),
    }
}

pub const LOSS_HEADS: [&str; 5] = ["h", "d", "reward", "value", "prior"];

/// Finite-difference check of `loss_batch` gradients, head by head.
///
/// Targets are frozen across perturbations, matching the stop-gradient
/// semantics of the loss (finite differences would otherwise differentiate
/// through sg).
pub fn grad_check_losses(
    model: &WorldModel,
    batch: &[SubTraj],
    cfg: &LossConfig,
    probes_per_head: usize,
    seed: u64,
) -> Result<Vec<(String, gradcheck::GradCheckReport)>, WmError> {
    let targets = compute_targets(model, batch, cfg)?;
    let (_, analytic) = loss_batch_with_targets(model, batch, cfg, &targets)?;

    let mut reports = Vec::new();
    for head in LOSS_HEADS {
        let mut scratch = model.clone();
        let mut store = head_mut(&mut scratch, head).clone();
        let base = scratch.clone();
        let report = gradcheck::grad_check(
            &mut store,
            head_grads(&analytic, head),
            |perturbed| {
                let mut m = base.clone();
                *head_mut(&mut m, head) = perturbed.clone();
                let (b, _) = loss_batch_with_targets(&m, batch, cfg, &targets)
                    .expect("loss evaluation during grad check");
                b.total
            },
            gradcheck::Probes::Sampled { count: probes_per_head, seed },
            1e-5,
        );
        reports.push((head.to_string(), report));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::{ModelConfig, WorldModel};
    use rand::Rng;

    fn tiny_cfg(integrator: Integrator) -> ModelConfig {
        ModelConfig { obs_dim: 4, n_a: 2, d_z: 3, hidden: vec![8], integrator, ema: 0.995 }
    }

    fn random_batch(n: usize, horizon: usize, seed: u64) -> Vec<SubTraj> {
        let mut rng = crate::rng::stream(seed, "loss-batch", &[]);
        (0..n)
            .map(|_| {
                let dt = rng.gen_range(0.01..0.5f64);
                SubTraj {
                    obs: (0..=horizon)
                        .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect(),
                    actions: (0..horizon)
                        .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect(),
                    rewards: (0..horizon).map(|_| rng.gen_range(-2.0..0.0)).collect(),
                    dt,
                }
            })
            .collect()
    }

    #[test]
    fn zero_model_on_zero_reward_transition_has_zero_loss_terms() {
        // All-zero heads memorize a (o, a, r=0, o') transition perfectly:
        // every latent is 0 and the predicted reward matches r = 0.
        let model = WorldModel::zeros(tiny_cfg(Integrator::Euler));
        let batch = vec![SubTraj {
            obs: vec![vec![0.5, -0.5, 0.2, 0.1], vec![0.3, 0.3, -0.3, 0.0]],
            actions: vec![vec![0.7, -0.2]],
            rewards: vec![0.0],
            dt: 0.05,
        }];
        let (b, _) = loss_batch(&model, &batch, &LossConfig::new(0.05)).unwrap();
        assert!(b.consistency < 1e-6, "consistency {}", b.consistency);
        assert!(b.reward < 1e-6, "reward {}", b.reward);
        assert_eq!(b.total, b.consistency + b.reward + b.value);
    }

    #[test]
    fn doubling_c2_exactly_doubles_the_reward_contribution() {
        let model = WorldModel::new(tiny_cfg(Integrator::Euler), 3);
        let batch = random_batch(4, 3, 9);
        let cfg = LossConfig::new(0.05);
        let (b1, _) = loss_batch(&model, &batch, &cfg).unwrap();
        let cfg2 = LossConfig { c2: 2.0 * cfg.c2, ..cfg };
        let (b2, _) = loss_batch(&model, &batch, &cfg2).unwrap();
        assert_eq!(b2.reward, 2.0 * b1.reward);
        assert_eq!(b2.consistency, b1.consistency);
        assert_eq!(b2.value, b1.value);
    }

    #[test]
    fn gradients_match_finite_differences_for_both_integrators() {
        for integrator in [Integrator::Euler, Integrator::Rk4] {
            let model = WorldModel::new(tiny_cfg(integrator), 11);
            let batch = random_batch(3, 3, 21);
            let reports =
                grad_check_losses(&model, &batch, &LossConfig::new(0.05), 40, 5).unwrap();
            for (head, report) in reports {
                assert!(
                    report.passes(1e-4),
                    "{integrator:?} head {head}: max rel err {}",
                    report.max_rel_err
                );
                if head == "prior" {
                    // stop-gradient: the loss is constant in the prior
                    assert_eq!(report.checked, 0, "prior must have no informative coords");
                }
            }
        }
    }

    #[test]
    fn gamma_is_dt_aware() {
        let cfg = LossConfig::new(0.1);
        assert!((cfg.gamma(0.1) - 0.99).abs() < 1e-12);
        assert!((cfg.gamma(0.8) - 0.99f64.powi(8)).abs() < 1e-12);
        assert!(cfg.gamma(0.05) > 0.99);
    }
}
