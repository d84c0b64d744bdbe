//! Mixture-of-Δt training loop.
//!
//! Each episode draws its own Δt (log-uniform, uniform, or fixed), collects
//! transitions with the MPPI planner (uniform-random actions during the
//! seed-exploration warmup), and interleaves one gradient step per
//! environment step. All randomness is derived from the run seed, so two
//! runs with the same config produce byte-identical logs and checkpoints.

pub mod replay;

pub use replay::{ReplayBuffer, Transition};

use crate::env::{EnvError, EnvSpec, EnvState};
use crate::nn::{adam_step, AdamConfig, AdamState, NnError};
use crate::planner::{PlanConfig, Planner};
use crate::rng::{derive_seed, stream};
use crate::trainer::replay::ReplayBuffer as Buffer;
use crate::worldmodel::{
    loss_batch, Integrator, LossConfig, ModelConfig, SubTraj, TimeStep, WmError, WorldModel,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("environment error in episode {episode}: {source}")]
    Env { episode: u64, source: EnvError },
    #[error(transparent)]
    Model(#[from] WmError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("replay buffer cannot form a batch yet")]
    EmptyBuffer,
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtSampleMode {
    LogUniform,
    Uniform,
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: DtSampleMode,
    pub dt_min: f64,
    pub dt_max: f64,
    /// The constant used in fixed mode.
    pub dt_fixed: f64,
    /// Total environment steps N.
    pub total_steps: usize,
    /// Episode length H.
    pub episode_len: usize,
    pub batch_size: usize,
    /// Gradient steps per environment step.
    pub updates_per_step: usize,
    /// Episodes of uniform-random actions before the planner takes over.
    pub warmup_episodes: usize,
    pub buffer_capacity: usize,
    pub checkpoint_interval: usize,
    pub lr: f64,
    pub seed: u64,
    pub integrator: Integrator,
}

impl TrainConfig {
    pub fn new(env: &EnvSpec, seed: u64) -> Self {
        TrainConfig {
            mode: DtSampleMode::LogUniform,
            dt_min: 0.01,
            dt_max: 1.0,
            dt_fixed: env.default_dt(),
            total_steps: 20_000,
            episode_len: env.episode_len(),
            batch_size: 32,
            updates_per_step: 1,
            warmup_episodes: 5,
            buffer_capacity: 100_000,
            checkpoint_interval: 5_000,
            lr: 1e-3,
            seed,
            integrator: Integrator::Euler,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.dt_min < self.dt_max) || self.dt_min <= 0.0 {
            return Err(TrainError::Config(format!(
                "need 0 < dt_min < dt_max, got [{}, {}]",
                self.dt_min, self.dt_max
            )));
        }
        if self.mode == DtSampleMode::Fixed && self.dt_fixed <= 0.0 {
            return Err(TrainError::Config("fixed dt must be positive".into()));
        }
        if self.total_steps == 0 || self.episode_len == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("counts must be positive".into()));
        }
        Ok(())
    }
}

/// Draw the episode Δt per the configured sampling mode.
pub fn sample_dt<R: Rng>(cfg: &TrainConfig, rng: &mut R) -> TimeStep {
    let dt = match cfg.mode {
        DtSampleMode::Fixed => cfg.dt_fixed,
        DtSampleMode::Uniform => rng.gen_range(cfg.dt_min..=cfg.dt_max),
        DtSampleMode::LogUniform => {
            let ln = rng.gen_range(cfg.dt_min.ln()..=cfg.dt_max.ln());
            ln.exp()
        }
    };
    TimeStep::new(dt).expect("sampler produces positive dt")
}

/// Action source for data collection.
pub enum Policy<'m> {
    Mppi { model: &'m WorldModel, planner: &'m mut Planner },
    UniformRandom,
    ZeroAction,
}

#[derive(Debug, Clone)]
pub struct EpisodeStats {
    pub episode_id: u64,
    pub dt: f64,
    pub total_reward: f64,
    pub steps: usize,
}

/// Collect one fixed-Δt episode into the buffer (no model updates).
pub fn collect_episode(
    env: &EnvSpec,
    mut policy: Policy<'_>,
    dt: f64,
    buffer: &mut Buffer,
    episode_id: u64,
    seed: u64,
) -> Result<EpisodeStats, TrainError> {
    let mut state = env.reset(derive_seed(seed, "episode-reset", &[episode_id]));
    let mut obs = env.observe(&state);
    let mut total_reward = 0.0;
    let n_a = env.action_dim();
    let mut action_rng = stream(seed, "episode-actions", &[episode_id]);
    if let Policy::Mppi { planner, .. } = &mut policy {
        planner.begin_episode();
    }
    for step in 0..env.episode_len() {
        let action = match &mut policy {
            Policy::Mppi { model, planner } => {
                planner.act(model, &obs, dt, env.default_dt(), &mut action_rng)?
            }
            Policy::UniformRandom => (0..n_a).map(|_| action_rng.gen_range(-1.0..=1.0)).collect(),
            Policy::ZeroAction => vec![0.0; n_a],
        };
        let sr = env
            .step(&mut state, &action, dt)
            .map_err(|source| TrainError::Env { episode: episode_id, source })?;
        buffer.push(Transition {
            obs: obs.clone(),
            action,
            obs_next: sr.obs.clone(),
            reward: sr.reward,
            dt,
            episode_id,
            step_index: step,
        });
        total_reward += sr.reward;
        obs = sr.obs;
    }
    Ok(EpisodeStats { episode_id, dt, total_reward, steps: env.episode_len() })
}

/// Per-head Adam states.
pub struct ModelOptim {
    pub h: AdamState,
    pub d: AdamState,
    pub reward: AdamState,
    pub value: AdamState,
    pub prior: AdamState,
}

impl ModelOptim {
    pub fn new(model: &WorldModel, lr: f64) -> Self {
        let cfg = AdamConfig { lr, ..AdamConfig::default() };
        ModelOptim {
            h: AdamState::new(&model.h, cfg),
            d: AdamState::new(&model.d, cfg),
            reward: AdamState::new(&model.reward, cfg),
            value: AdamState::new(&model.value, cfg),
            prior: AdamState::new(&model.prior, cfg),
        }
    }
}

/// One Adam step on the joint loss over a uniformly sampled batch of
/// sub-trajectories, then an EMA update of the target copies.
pub fn update_step<R: Rng>(
    model: &mut WorldModel,
    optim: &mut ModelOptim,
    buffer: &Buffer,
    loss_cfg: &LossConfig,
    batch_size: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<f64, TrainError> {
    if !buffer.can_sample(horizon) {
        return Err(TrainError::EmptyBuffer);
    }
    let batch: Vec<SubTraj> = (0..batch_size)
        .map(|_| {
            let w = buffer.sample_window(horizon, rng).expect("checked can_sample");
            let mut obs: Vec<Vec<f64>> = w.iter().map(|t| t.obs.clone()).collect();
            obs.push(w.last().expect("window non-empty").obs_next.clone());
            SubTraj {
                obs,
                actions: w.iter().map(|t| t.action.clone()).collect(),
                rewards: w.iter().map(|t| t.reward).collect(),
                dt: w[0].dt,
            }
        })
        .collect();
    let (breakdown, grads) = loss_batch(model, &batch, loss_cfg)?;
    adam_step(&mut model.h, &grads.h, &mut optim.h)?;
    adam_step(&mut model.d, &grads.d, &mut optim.d)?;
    adam_step(&mut model.reward, &grads.reward, &mut optim.reward)?;
    adam_step(&mut model.value, &grads.value, &mut optim.value)?;
    adam_step(&mut model.prior, &grads.prior, &mut optim.prior)?;
    model.ema_update_targets();
    Ok(breakdown.total)
}

/// How many rollout steps the consistency loss spans.
pub const H_TRAIN: usize = 3;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoints: Vec<(usize, PathBuf)>,
    pub log_path: PathBuf,
    pub final_model: PathBuf,
    pub episodes: usize,
}

/// Algorithm: per episode draw Δt, roll the planner (or warmup actions),
/// store transitions, and take one gradient step per environment step until
/// N total steps. Checkpoints land in `out_dir` as `ckpt_<step>.tawm`.
pub fn train(env: &EnvSpec, cfg: &TrainConfig, plan_cfg: &PlanConfig, out_dir: &Path) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    env.validate().map_err(|source| TrainError::Env { episode: 0, source })?;
    fs::create_dir_all(out_dir)?;

    let model_cfg = ModelConfig {
        integrator: cfg.integrator,
        ..ModelConfig::new(env.obs_dim(), env.action_dim(), cfg.integrator)
    };
    let mut model = WorldModel::new(model_cfg, derive_seed(cfg.seed, "model-init", &[]));
    let mut optim = ModelOptim::new(&model, cfg.lr);
    let mut planner = Planner::new(*plan_cfg);
    let mut buffer = Buffer::new(cfg.buffer_capacity);
    let loss_cfg = LossConfig::new(env.default_dt());

    let mut dt_rng = stream(cfg.seed, "dt", &[]);
    let mut batch_rng = stream(cfg.seed, "batch", &[]);

    let mut log = String::from("step,dt_episode,episode_reward,loss_mean\n");
    let mut checkpoints: Vec<(usize, PathBuf)> = Vec::new();
    let mut total_steps = 0usize;
    let mut episode_id = 0u64;

    'outer: loop {
        let dt = sample_dt(cfg, &mut dt_rng).seconds();
        let mut state: EnvState = env.reset(derive_seed(cfg.seed, "episode-reset", &[episode_id]));
        let mut obs = env.observe(&state);
        let mut action_rng = stream(cfg.seed, "episode-actions", &[episode_id]);
        planner.begin_episode();
        let warmup = (episode_id as usize) < cfg.warmup_episodes;

        let mut episode_reward = 0.0;
        let mut losses: Vec<f64> = Vec::new();
        let mut steps_this_episode = 0usize;

        for step in 0..cfg.episode_len {
            let action: Vec<f64> = if warmup {
                (0..env.action_dim()).map(|_| action_rng.gen_range(-1.0..=1.0)).collect()
            } else {
                planner.act(&model, &obs, dt, env.default_dt(), &mut action_rng)?
            };
            let sr = env
                .step(&mut state, &action, dt)
                .map_err(|source| TrainError::Env { episode: episode_id, source })?;
            buffer.push(Transition {
                obs: obs.clone(),
                action,
                obs_next: sr.obs.clone(),
                reward: sr.reward,
                dt,
                episode_id,
                step_index: step,
            });
            episode_reward += sr.reward;
            obs = sr.obs;
            total_steps += 1;
            steps_this_episode += 1;

            if buffer.can_sample(H_TRAIN) {
                for _ in 0..cfg.updates_per_step {
                    let l = update_step(
                        &mut model,
                        &mut optim,
                        &buffer,
                        &loss_cfg,
                        cfg.batch_size,
                        H_TRAIN,
                        &mut batch_rng,
                    )?;
                    losses.push(l);
                }
            }

            if total_steps % cfg.checkpoint_interval == 0 || total_steps == cfg.total_steps {
                let path = out_dir.join(format!("ckpt_{total_steps:07}.tawm"));
                if checkpoints.last().map_or(true, |(s, _)| *s != total_steps) {
                    model.save(&path, serde_json::json!({"step": total_steps, "seed": cfg.seed}))?;
                    checkpoints.push((total_steps, path));
                }
            }
            if total_steps >= cfg.total_steps {
                let loss_mean = if losses.is_empty() {
                    String::new()
                } else {
                    format!("{}", losses.iter().sum::<f64>() / losses.len() as f64)
                };
                log.push_str(&format!("{total_steps},{dt},{episode_reward},{loss_mean}\n"));
                episode_id += 1;
                break 'outer;
            }
        }
        if steps_this_episode == cfg.episode_len {
            let loss_mean = if losses.is_empty() {
                String::new()
            } else {
                format!("{}", losses.iter().sum::<f64>() / losses.len() as f64)
            };
            log.push_str(&format!("{total_steps},{dt},{episode_reward},{loss_mean}\n"));
            episode_id += 1;
        }
    }

    let log_path = out_dir.join("train_log.csv");
    fs::write(&log_path, log)?;
    let final_model = checkpoints.last().expect("at least one checkpoint").1.clone();
    Ok(TrainOutcome { checkpoints, log_path, final_model, episodes: episode_id as usize })
}
