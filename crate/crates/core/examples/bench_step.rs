use std::time::Instant;
use tawm_core::env::EnvSpec;
use tawm_core::planner::{PlanConfig, Planner};
use tawm_core::rng::stream;
use tawm_core::trainer::{update_step, ModelOptim, Policy, ReplayBuffer, TrainConfig, collect_episode, H_TRAIN};
use tawm_core::worldmodel::{Integrator, LossConfig, ModelConfig, WorldModel};

fn main() {
    let env = EnvSpec::wave();
    let model_cfg = ModelConfig::new(env.obs_dim(), env.action_dim(), Integrator::Euler);
    let mut model = WorldModel::new(model_cfg, 1);
    let plan = PlanConfig::default();
    let mut planner = Planner::new(plan);
    let mut buffer = ReplayBuffer::new(100000);
    collect_episode(&env, Policy::UniformRandom, 0.1, &mut buffer, 0, 1).unwrap();

    // planner cost
    let mut state = env.reset(7);
    let mut obs = env.observe(&state);
    planner.begin_episode();
    let mut rng = stream(1, "bench", &[]);
    let t0 = Instant::now();
    let n = 30;
    for _ in 0..n {
        let a = planner.act(&model, &obs, 0.1, 0.1, &mut rng).unwrap();
        let sr = env.step(&mut state, &a, 0.1).unwrap();
        obs = sr.obs;
    }
    let per_plan = t0.elapsed().as_secs_f64() / n as f64;
    println!("plan+env step: {:.1} ms", per_plan * 1e3);

    // update cost
    let mut optim = ModelOptim::new(&model, 1e-3);
    let loss_cfg = LossConfig::new(0.1);
    let mut brng = stream(2, "bench-b", &[]);
    let t1 = Instant::now();
    let m = 30;
    for _ in 0..m {
        update_step(&mut model, &mut optim, &buffer, &loss_cfg, 32, H_TRAIN, &mut brng).unwrap();
    }
    let per_update = t1.elapsed().as_secs_f64() / m as f64;
    println!("update step (batch 32): {:.1} ms", per_update * 1e3);

    let cfg = TrainConfig::new(&env, 0);
    let total = (per_plan + per_update) * 30000.0;
    println!("projected 3e4-step wave run: {:.1} min", total / 60.0);
    let _ = cfg;
}
