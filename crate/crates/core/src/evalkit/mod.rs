//! Δt-sweep evaluation: greedy planner rollouts at fixed evaluation Δt,
//! the action-repeat extension of fixed-Δt baselines, interpolation-law
//! experiments on a linear oracle system, and learning-curve extraction
//! from checkpoint directories. Reports are CSV plus an in-repo SVG chart;
//! fixed seeds make them byte-identical across runs and across serial and
//! parallel row evaluation.

pub mod svg;

use crate::env::{EnvError, EnvSpec, OscSpec};
use crate::nn::{adam_step, mlp_backward, mlp_forward, AdamConfig, AdamState, NnError};
use crate::nn::{Activation, ArchSpec, ParamStore};
use crate::planner::{PlanConfig, Planner};
use crate::rng::{derive_seed, stream};
use crate::stats;
use crate::worldmodel::{dt_feature, interpolation_factor, tau, WmError, WorldModel};
use rand::Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty evaluation rejected: {0}")]
    Empty(&'static str),
    #[error("action repeat undefined: dt_eval {dt_eval} below default {dt_default}")]
    RepeatBelowOne { dt_eval: f64, dt_default: f64 },
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("model: {0}")]
    Model(#[from] WmError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub mean_reward: f64,
    pub per_episode: Vec<f64>,
    /// Mean discounted return Σ γ_Δtᵏ·r_k across episodes.
    pub discounted_return: f64,
}

/// One greedy episode: plan at `condition_dt`, step the environment by
/// `env_dt` per planner query.
fn run_episode(
    model: &WorldModel,
    env: &EnvSpec,
    condition_dt: f64,
    env_dt: f64,
    plan_cfg: &PlanConfig,
    seed: u64,
    episode: u64,
) -> Result<(f64, f64), EvalError> {
    let mut state = env.reset(derive_seed(seed, "episode-reset", &[episode]));
    let mut obs = env.observe(&state);
    let mut planner = Planner::new(*plan_cfg);
    planner.begin_episode();
    let mut rng = stream(seed, "episode-actions", &[episode]);
    let gamma = plan_cfg.gamma(env_dt, env.default_dt());
    let mut total = 0.0;
    let mut discounted = 0.0;
    let mut disc = 1.0;
    for _ in 0..env.episode_len() {
        let action = planner.act(model, &obs, condition_dt, env.default_dt(), &mut rng)?;
        let sr = env.step(&mut state, &action, env_dt)?;
        total += sr.reward;
        discounted += disc * sr.reward;
        disc *= gamma;
        obs = sr.obs;
    }
    Ok((total, discounted))
}

/// Greedy planner rollouts at fixed Δt_eval; deterministic given the seed.
pub fn eval_model(
    model: &WorldModel,
    env: &EnvSpec,
    dt_eval: f64,
    n_episodes: usize,
    seed: u64,
    plan_cfg: &PlanConfig,
) -> Result<EvalOutcome, EvalError> {
    if n_episodes == 0 {
        return Err(EvalError::Empty("n_episodes = 0"));
    }
    let mut per_episode = Vec::with_capacity(n_episodes);
    let mut discounted_sum = 0.0;
    for e in 0..n_episodes {
        let (total, disc) = run_episode(model, env, dt_eval, dt_eval, plan_cfg, seed, e as u64)?;
        per_episode.push(total);
        discounted_sum += disc;
    }
    Ok(EvalOutcome {
        mean_reward: stats::mean(&per_episode),
        discounted_return: discounted_sum / n_episodes as f64,
        per_episode,
    })
}

/// Fixed-Δt baseline extended by action repeat: the planner is queried once
/// per Δt_eval window at the task-default conditioning, and the chosen
/// action is held for k = Δt_eval/Δt_default default-size sub-windows
/// (non-integer ratios round to the nearest k ≥ 1).
pub fn action_repeat_eval(
    model: &WorldModel,
    env: &EnvSpec,
    dt_eval: f64,
    n_episodes: usize,
    seed: u64,
    plan_cfg: &PlanConfig,
) -> Result<EvalOutcome, EvalError> {
    if n_episodes == 0 {
        return Err(EvalError::Empty("n_episodes = 0"));
    }
    let dt_default = env.default_dt();
    if dt_eval < dt_default {
        return Err(EvalError::RepeatBelowOne { dt_eval, dt_default });
    }
    let k = (dt_eval / dt_default).round().max(1.0);
    let window = k * dt_default;
    let mut per_episode = Vec::with_capacity(n_episodes);
    let mut discounted_sum = 0.0;
    for e in 0..n_episodes {
        let (total, disc) = run_episode(model, env, dt_default, window, plan_cfg, seed, e as u64)?;
        per_episode.push(total);
        discounted_sum += disc;
    }
    Ok(EvalOutcome {
        mean_reward: stats::mean(&per_episode),
        discounted_return: discounted_sum / n_episodes as f64,
        per_episode,
    })
}

/// How a sweep entry is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Plain,
    ActionRepeat,
}

pub struct SweepEntry<'m> {
    pub id: String,
    pub model: &'m WorldModel,
    pub mode: EvalMode,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model: String,
    pub dt_eval: f64,
    pub seed: u64,
    pub n_episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub discounted_return: f64,
}

#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub model: String,
    pub dt_eval: f64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("model,dt_eval,seed,n_episodes,mean_reward,std_reward,discounted_return\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.model, r.dt_eval, r.seed, r.n_episodes, r.mean_reward, r.std_reward, r.discounted_return
            ));
        }
        out
    }

    /// Mean reward over seeds for one model at one Δt.
    pub fn mean_over_seeds(&self, model: &str, dt_eval: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.model == model && r.dt_eval == dt_eval)
            .map(|r| r.mean_reward)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(stats::mean(&vals))
        }
    }

    /// All per-seed mean rewards for one model at one Δt.
    pub fn seed_means(&self, model: &str, dt_eval: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.dt_eval == dt_eval)
            .map(|r| r.mean_reward)
            .collect()
    }

    /// Fig-2 style chart: mean ± 95% CI over seeds per model across the grid.
    pub fn to_svg(&self, title: &str) -> String {
        let mut models: Vec<String> = self.rows.iter().map(|r| r.model.clone()).collect();
        models.sort();
        models.dedup();
        let mut grid: Vec<f64> = self.rows.iter().map(|r| r.dt_eval).collect();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let series: Vec<svg::Series> = models
            .iter()
            .map(|m| {
                let mut points = Vec::new();
                let mut band = Vec::new();
                for &dt in &grid {
                    let vals = self.seed_means(m, dt);
                    if vals.is_empty() {
                        continue;
                    }
                    points.push((dt, stats::mean(&vals)));
                    band.push(stats::ci95(&vals));
                }
                svg::Series { name: m.clone(), points, band: Some(band) }
            })
            .collect();
        let spec = svg::ChartSpec {
            title: title.to_string(),
            x_label: "evaluation dt (s)".into(),
            y_label: "mean episode reward".into(),
            log_x: true,
        };
        svg::line_chart(&spec, &series)
    }
}

/// Evaluate the full (entry × Δt × seed) cross-product. Failures are
/// recorded per row and the sweep continues. With `parallel` the rows run
/// on the global thread pool; results are identical to the serial path.
pub fn sweep(
    entries: &[SweepEntry<'_>],
    env: &EnvSpec,
    grid: &[f64],
    seeds: &[u64],
    n_episodes: usize,
    plan_cfg: &PlanConfig,
    parallel: bool,
) -> Result<SweepReport, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::Empty("model set"));
    }
    if grid.is_empty() || seeds.is_empty() {
        return Err(EvalError::Empty("dt grid or seed list"));
    }
    let mut sorted_grid = grid.to_vec();
    sorted_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut jobs = Vec::new();
    for entry in entries {
        for &dt in &sorted_grid {
            for &seed in seeds {
                jobs.push((entry, dt, seed));
            }
        }
    }
    let evaluate = |&(entry, dt, seed): &(&SweepEntry<'_>, f64, u64)| -> Result<SweepRow, SweepFailure> {
        let outcome = match entry.mode {
            EvalMode::Plain => eval_model(entry.model, env, dt, n_episodes, seed, plan_cfg),
            EvalMode::ActionRepeat => {
                action_repeat_eval(entry.model, env, dt, n_episodes, seed, plan_cfg)
            }
        };
        match outcome {
            Ok(o) => Ok(SweepRow {
                model: entry.id.clone(),
                dt_eval: dt,
                seed,
                n_episodes,
                mean_reward: o.mean_reward,
                std_reward: stats::std_dev(&o.per_episode),
                discounted_return: o.discounted_return,
            }),
            Err(e) => Err(SweepFailure { model: entry.id.clone(), dt_eval: dt, seed, message: e.to_string() }),
        }
    };

    let results: Vec<Result<SweepRow, SweepFailure>> = if parallel {
        jobs.par_iter().map(evaluate).collect()
    } else {
        jobs.iter().map(evaluate).collect()
    };

    let mut report = SweepReport::default();
    for r in results {
        match r {
            Ok(row) => report.rows.push(row),
            Err(f) => {
                eprintln!("sweep row failed: {} dt={} seed={}: {}", f.model, f.dt_eval, f.seed, f.message);
                report.failures.push(f);
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Interpolation-law experiment on a linear oracle system
// ---------------------------------------------------------------------------

/// A Δt-conditioned derivative net trained supervised on oracle transitions
/// (identity encoder: the latent is the raw oscillator state).
pub struct LemmaModel {
    pub dnet: ParamStore,
    /// Converged held-out residual: RMS of ‖d(z,a,Δt) − (z' − z)/τ(Δt)‖.
    pub residual: f64,
}

fn lemma_input(z: &[f64], a: &[f64], dt: f64) -> Result<Vec<f64>, WmError> {
    let mut input = z.to_vec();
    input.extend_from_slice(a);
    input.push(dt_feature(dt)?);
    Ok(input)
}

/// Oracle transition sample: state, action, realized Δt, next state.
fn oracle_transition<R: Rng>(
    osc: &OscSpec,
    dt_min: f64,
    dt_bar: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>), EvalError> {
    use crate::env::OscState;
    let pos = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let vel = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ln = rng.gen_range(dt_min.ln()..=dt_bar.ln());
    let mut state = OscState { pos, vel, t: 0.0 };
    let z = state.observe();
    let sr = osc.step(&mut state, &a, ln.exp())?;
    // train on the realized dt so labels and dynamics agree exactly
    Ok((z, a, sr.elapsed, sr.obs))
}

/// Supervised training of the Δt-conditioned derivative on mixed-Δt oracle
/// data: regress d(z, a, Δt) onto (z' − z)/τ(Δt).
pub fn train_lemma_dnet(
    osc: &OscSpec,
    dt_min: f64,
    dt_bar: f64,
    n_train: usize,
    train_steps: usize,
    seed: u64,
) -> Result<LemmaModel, EvalError> {
    let arch = ArchSpec::mlp(&[4 + 2 + 1, 64, 64, 4], Activation::Silu, Activation::Identity);
    let mut init_rng = stream(seed, "lemma-init", &[]);
    let mut dnet = ParamStore::init("lemma-d", arch, &mut init_rng);

    let mut data_rng = stream(seed, "lemma-data", &[]);
    let mut data = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        let (z, a, dt, z_next) = oracle_transition(osc, dt_min, dt_bar, &mut data_rng)?;
        let t = tau(dt)?;
        let target: Vec<f64> = z_next.iter().zip(&z).map(|(n, c)| (n - c) / t).collect();
        data.push((lemma_input(&z, &a, dt)?, target));
    }
    let holdout = n_train / 8;
    let (eval_set, train_set) = data.split_at(holdout);

    let mut adam = AdamState::new(&dnet, AdamConfig { lr: 2e-3, ..AdamConfig::default() });
    let mut batch_rng = stream(seed, "lemma-batch", &[]);
    let batch_size = 128;
    for _ in 0..train_steps {
        let mut grads = dnet.zero_grads();
        for _ in 0..batch_size {
            let (input, target) = &train_set[batch_rng.gen_range(0..train_set.len())];
            let (y, tape) = mlp_forward(&dnet, input)?;
            let seed_grad: Vec<f64> =
                y.iter().zip(target).map(|(a, b)| 2.0 * (a - b) / batch_size as f64).collect();
            grads.add_assign(&mlp_backward(&tape, &seed_grad)?);
        }
        adam_step(&mut dnet, &grads, &mut adam)?;
    }

    let mut sq_sum = 0.0;
    for (input, target) in eval_set {
        let y = dnet.forward(input)?;
        sq_sum += y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let residual = (sq_sum / eval_set.len() as f64).sqrt();
    Ok(LemmaModel { dnet, residual })
}

#[derive(Debug, Clone)]
pub struct LemmaReport {
    /// Measured sup‖f̄(·, Δt) − f̄(·, Δt̄)‖ over grid and probe states; small
    /// means the dynamics are fully captured at Δt̄.
    pub epsilon: f64,
    /// Max over grid and probe states of ‖d(z,a,Δt) − d(z,a,Δt̄)·I(Δt)‖.
    pub max_deviation: f64,
    pub per_dt: Vec<(f64, f64)>,
}

/// Deviation of a trained Δt-conditioned derivative from the interpolation
/// relation d(Δt) ≈ d(Δt̄)·I(Δt) over a Δt grid and random probe states.
pub fn lemma1_experiment(
    osc: &OscSpec,
    dnet: &ParamStore,
    dt_bar: f64,
    grid: &[f64],
    n_probes: usize,
    seed: u64,
) -> Result<LemmaReport, EvalError> {
    use crate::env::OscState;
    for &dt in grid {
        if tau(dt)? == 0.0 {
            return Err(EvalError::Model(WmError::TauZero(dt)));
        }
    }
    let mut rng = stream(seed, "lemma-probes", &[]);
    let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..n_probes)
        .map(|_| {
            let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (z, a)
        })
        .collect();

    // f̄(z, a, Δt) = (step(z, a, Δt) − z)/Δt measured on the oracle itself.
    let f_bar = |z: &[f64], a: &[f64], dt: f64| -> Result<Vec<f64>, EvalError> {
        let mut state = OscState { pos: [z[0], z[2]], vel: [z[1], z[3]], t: 0.0 };
        let sr = osc.step(&mut state, a, dt)?;
        Ok(sr.obs.iter().zip(z).map(|(n, c)| (n - c) / sr.elapsed).collect())
    };

    let mut epsilon: f64 = 0.0;
    let mut max_deviation: f64 = 0.0;
    let mut per_dt = Vec::with_capacity(grid.len());
    for &dt in grid {
        let factor = interpolation_factor(dt, dt_bar)?;
        let mut worst: f64 = 0.0;
        for (z, a) in &probes {
            let fd = f_bar(z, a, dt)?;
            let fb = f_bar(z, a, dt_bar)?;
            let eps: f64 =
                fd.iter().zip(&fb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            epsilon = epsilon.max(eps);

            let d_dt = dnet.forward(&lemma_input(z, a, dt)?)?;
            let d_bar = dnet.forward(&lemma_input(z, a, dt_bar)?)?;
            let dev: f64 = d_dt
                .iter()
                .zip(&d_bar)
                .map(|(x, y)| (x - y * factor) * (x - y * factor))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(dev);
        }
        per_dt.push((dt, worst));
        max_deviation = max_deviation.max(worst);
    }
    Ok(LemmaReport { epsilon, max_deviation, per_dt })
}

// ---------------------------------------------------------------------------
// Learning curves from checkpoint directories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub step: usize,
    pub dt_eval: f64,
    pub seed: u64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CurveReport {
    pub points: Vec<CurvePoint>,
    pub skipped: Vec<String>,
}

impl CurveReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,dt_eval,seed,mean_reward\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.step, p.dt_eval, p.seed, p.mean_reward));
        }
        out
    }

    pub fn to_svg(&self, title: &str) -> String {
        let mut dts: Vec<f64> = self.points.iter().map(|p| p.dt_eval).collect();
        dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dts.dedup();
        let mut steps: Vec<usize> = self.points.iter().map(|p| p.step).collect();
        steps.sort_unstable();
        steps.dedup();
        let series: Vec<svg::Series> = dts
            .iter()
            .map(|&dt| {
                let points: Vec<(f64, f64)> = steps
                    .iter()
                    .filter_map(|&s| {
                        let vals: Vec<f64> = self
                            .points
                            .iter()
                            .filter(|p| p.step == s && p.dt_eval == dt)
                            .map(|p| p.mean_reward)
                            .collect();
                        if vals.is_empty() {
                            None
                        } else {
                            Some((s as f64, stats::mean(&vals)))
                        }
                    })
                    .collect();
                svg::Series { name: format!("dt={dt}"), points, band: None }
            })
            .collect();
        let spec = svg::ChartSpec {
            title: title.to_string(),
            x_label: "environment steps".into(),
            y_label: "mean episode reward".into(),
            log_x: false,
        };
        svg::line_chart(&spec, &series)
    }

    /// Mean reward over seeds at one (step, Δt) point.
    pub fn mean_at(&self, step: usize, dt_eval: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.step == step && p.dt_eval == dt_eval)
            .map(|p| p.mean_reward)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(stats::mean(&vals))
        }
    }
}

/// Checkpoints named `ckpt_<step>.tawm` in ascending step order.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<(usize, PathBuf)>, EvalError> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(step_str) = name.strip_prefix("ckpt_").and_then(|s| s.strip_suffix(".tawm")) {
            if let Ok(step) = step_str.parse::<usize>() {
                found.push((step, path));
            }
        }
    }
    found.sort_by_key(|(s, _)| *s);
    for pair in found.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(EvalError::Other(format!("duplicate checkpoint step {}", pair[0].0)));
        }
    }
    Ok(found)
}

/// Evaluate every checkpoint at every (Δt, seed); unreadable checkpoints are
/// skipped with a warning entry.
pub fn learning_curve(
    ckpt_dir: &Path,
    env: &EnvSpec,
    grid: &[f64],
    seeds: &[u64],
    n_episodes: usize,
    plan_cfg: &PlanConfig,
    parallel: bool,
) -> Result<CurveReport, EvalError> {
    let checkpoints = list_checkpoints(ckpt_dir)?;
    if checkpoints.is_empty() {
        return Err(EvalError::Empty("no checkpoints found"));
    }
    let mut report = CurveReport::default();
    let mut loaded = Vec::new();
    for (step, path) in checkpoints {
        match WorldModel::load(&path) {
            Ok((model, _)) => loaded.push((step, model)),
            Err(e) => {
                eprintln!("warning: skipping checkpoint {}: {e}", path.display());
                report.skipped.push(format!("{}: {e}", path.display()));
            }
        }
    }
    let mut jobs = Vec::new();
    for (step, model) in &loaded {
        for &dt in grid {
            for &seed in seeds {
                jobs.push((*step, model, dt, seed));
            }
        }
    }
    let evaluate = |&(step, model, dt, seed): &(usize, &WorldModel, f64, u64)| -> Result<CurvePoint, EvalError> {
        let o = eval_model(model, env, dt, n_episodes, seed, plan_cfg)?;
        Ok(CurvePoint { step, dt_eval: dt, seed, mean_reward: o.mean_reward })
    };
    let results: Vec<Result<CurvePoint, EvalError>> = if parallel {
        jobs.par_iter().map(evaluate).collect()
    } else {
        jobs.iter().map(evaluate).collect()
    };
    for r in results {
        report.points.push(r?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::{Integrator, ModelConfig};

    fn small_plan() -> PlanConfig {
        PlanConfig { n_samples: 16, n_elites: 4, n_iterations: 1, ..PlanConfig::default() }
    }

    fn zero_model(env: &EnvSpec) -> WorldModel {
        WorldModel::zeros(ModelConfig::new(env.obs_dim(), env.action_dim(), Integrator::Euler))
    }

    #[test]
    fn empty_evaluation_is_rejected() {
        let env = EnvSpec::oscillator();
        let model = zero_model(&env);
        assert!(matches!(
            eval_model(&model, &env, 0.05, 0, 1, &small_plan()),
            Err(EvalError::Empty(_))
        ));
    }

    #[test]
    fn zero_action_model_reproduces_uncontrolled_reward_on_wave() {
        // A zero model with a degenerate sampler acts exactly 0.
        let env = EnvSpec::wave();
        let model = zero_model(&env);
        let cfg = PlanConfig {
            n_samples: 1,
            n_elites: 1,
            n_iterations: 1,
            init_std: 0.0,
            min_std: 0.0,
            ..PlanConfig::default()
        };
        let out = eval_model(&model, &env, 0.1, 2, 5, &cfg).unwrap();

        for e in 0..2u64 {
            let mut state = env.reset(derive_seed(5, "episode-reset", &[e]));
            let zero = vec![0.0; env.action_dim()];
            let mut total = 0.0;
            for _ in 0..env.episode_len() {
                total += env.step(&mut state, &zero, 0.1).unwrap().reward;
            }
            assert_eq!(out.per_episode[e as usize], total);
        }
    }

    #[test]
    fn eval_is_seed_deterministic() {
        let env = EnvSpec::oscillator();
        let model = WorldModel::new(
            ModelConfig::new(env.obs_dim(), env.action_dim(), Integrator::Euler),
            3,
        );
        let a = eval_model(&model, &env, 0.05, 2, 9, &small_plan()).unwrap();
        let b = eval_model(&model, &env, 0.05, 2, 9, &small_plan()).unwrap();
        assert_eq!(a.per_episode, b.per_episode);
        assert_eq!(stats::mean(&a.per_episode), a.mean_reward);
    }

    #[test]
    fn action_repeat_at_factor_one_matches_plain_eval() {
        let env = EnvSpec::oscillator();
        let model = WorldModel::new(
            ModelConfig::new(env.obs_dim(), env.action_dim(), Integrator::Euler),
            7,
        );
        let plain = eval_model(&model, &env, env.default_dt(), 2, 4, &small_plan()).unwrap();
        let repeat = action_repeat_eval(&model, &env, env.default_dt(), 2, 4, &small_plan()).unwrap();
        assert_eq!(plain.per_episode, repeat.per_episode, "k = 1 must be identical");
    }

    #[test]
    fn action_repeat_below_default_dt_is_rejected() {
        let env = EnvSpec::oscillator();
        let model = zero_model(&env);
        assert!(matches!(
            action_repeat_eval(&model, &env, 0.01, 1, 1, &small_plan()),
            Err(EvalError::RepeatBelowOne { .. })
        ));
    }

    #[test]
    fn repeat_factor_rounds_to_nearest_integer() {
        // 5 ms on a 2.5 ms default is exactly factor 2; the env advances one
        // 2-default window per planner query.
        let mut osc = OscSpec::default();
        osc.default_dt = 0.0025;
        osc.dt_sim = 0.00125;
        let env = EnvSpec::Oscillator(osc);
        let model = zero_model(&env);
        let cfg = PlanConfig {
            n_samples: 1,
            n_elites: 1,
            n_iterations: 1,
            init_std: 0.0,
            min_std: 0.0,
            ..PlanConfig::default()
        };
        let rep = action_repeat_eval(&model, &env, 0.005, 1, 2, &cfg).unwrap();
        // oracle: zero actions, env stepped by 2×default per query
        let mut state = env.reset(derive_seed(2, "episode-reset", &[0]));
        let zero = vec![0.0; env.action_dim()];
        let mut total = 0.0;
        for _ in 0..env.episode_len() {
            let sr = env.step(&mut state, &zero, 0.005).unwrap();
            assert_eq!(sr.elapsed, 0.005);
            total += sr.reward;
        }
        assert_eq!(rep.per_episode[0], total);
    }

    #[test]
    fn sweep_cross_product_and_failure_recording() {
        let env = EnvSpec::oscillator();
        let model = zero_model(&env);
        let entries = vec![
            SweepEntry { id: "zero".into(), model: &model, mode: EvalMode::Plain },
            SweepEntry { id: "zero+repeat".into(), model: &model, mode: EvalMode::ActionRepeat },
        ];
        // 0.025 is below the default 0.05: the repeat entry fails there, the
        // sweep continues.
        let report =
            sweep(&entries, &env, &[0.025, 0.05], &[1, 2], 1, &small_plan(), false).unwrap();
        assert_eq!(report.rows.len(), 2 * 2 * 2 - 2);
        assert_eq!(report.failures.len(), 2);
        let csv = report.to_csv();
        assert!(csv.starts_with("model,dt_eval,seed,n_episodes,mean_reward,std_reward,discounted_return\n"));

        assert!(matches!(
            sweep(&[], &env, &[0.05], &[1], 1, &small_plan(), false),
            Err(EvalError::Empty(_))
        ));
    }

    #[test]
    fn sweep_single_cell_yields_one_row() {
        let env = EnvSpec::oscillator();
        let model = zero_model(&env);
        let entries = vec![SweepEntry { id: "m".into(), model: &model, mode: EvalMode::Plain }];
        let report = sweep(&entries, &env, &[0.05], &[3], 1, &small_plan(), false).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].n_episodes, 1);
    }

    #[test]
    fn sweep_parallel_matches_serial_byte_for_byte() {
        let env = EnvSpec::oscillator();
        let model = WorldModel::new(
            ModelConfig::new(env.obs_dim(), env.action_dim(), Integrator::Euler),
            11,
        );
        let entries = vec![SweepEntry { id: "m".into(), model: &model, mode: EvalMode::Plain }];
        let serial =
            sweep(&entries, &env, &[0.05, 0.1], &[1, 2], 2, &small_plan(), false).unwrap();
        let parallel =
            sweep(&entries, &env, &[0.05, 0.1], &[1, 2], 2, &small_plan(), true).unwrap();
        assert_eq!(serial.to_csv(), parallel.to_csv());
    }

    #[test]
    fn lemma_deviation_is_zero_at_dt_bar_and_large_for_random_net() {
        let osc = OscSpec::slow_oracle();
        let mut rng = stream(5, "lemma-rand", &[]);
        let arch = ArchSpec::mlp(&[7, 64, 64, 4], Activation::Silu, Activation::Identity);
        let random_net = ParamStore::init("lemma-d", arch, &mut rng);
        let report = lemma1_experiment(&osc, &random_net, 0.05, &[0.05], 16, 3).unwrap();
        assert_eq!(report.max_deviation, 0.0, "I(dt_bar) = 1 makes the deviation vanish");

        let wide = lemma1_experiment(&osc, &random_net, 0.05, &[0.01, 0.02, 0.05], 16, 3).unwrap();
        assert!(wide.max_deviation > 1e-3, "random net should violate the relation");
    }

    #[test]
    fn lemma_grid_rejects_tau_zero_points() {
        let osc = OscSpec::slow_oracle();
        let arch = ArchSpec::mlp(&[7, 8, 4], Activation::Silu, Activation::Identity);
        let net = ParamStore::zeros("lemma-d", arch);
        assert!(lemma1_experiment(&osc, &net, 0.05, &[1e-6], 4, 3).is_err());
    }

    #[test]
    fn curve_report_from_checkpoint_dir() {
        let env = EnvSpec::oscillator();
        let dir = tempfile::tempdir().unwrap();
        let model = zero_model(&env);
        for step in [100usize, 200] {
            model
                .save(
                    &dir.path().join(format!("ckpt_{step:07}.tawm")),
                    serde_json::json!({"step": step}),
                )
                .unwrap();
        }
        // a decoy that must be skipped with a warning
        std::fs::write(dir.path().join("ckpt_0000300.tawm"), b"garbage").unwrap();

        let report =
            learning_curve(dir.path(), &env, &[0.05], &[1], 1, &small_plan(), false).unwrap();
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.points.len(), 2);
        assert!(report.points.windows(2).all(|w| w[0].step <= w[1].step));
        let csv = report.to_csv();
        assert!(csv.starts_with("step,dt_eval,seed,mean_reward\n"));
        assert_eq!(csv.lines().count(), 3);

        // single checkpoint → single-point curves
        let dir2 = tempfile::tempdir().unwrap();
        model.save(&dir2.path().join("ckpt_0000100.tawm"), serde_json::Value::Null).unwrap();
        let single =
            learning_curve(dir2.path(), &env, &[0.05], &[1], 1, &small_plan(), false).unwrap();
        assert_eq!(single.points.len(), 1);
    }
}
