//! Runtime property checks behind the `propcheck` subcommand.
//!
//! Each check exercises one module invariant through public APIs and returns
//! a short failure description instead of panicking, so the CLI can print
//! one line per property and exit non-zero on any failure.

use crate::env::{EnvSpec, OscSpec, PdeSpec, PdeState};
use crate::evalkit::{self, EvalMode, SweepEntry};
use crate::nn::{Activation, ArchSpec, Matrix, ParamStore};
use crate::planner::PlanConfig;
use crate::rng::stream;
use crate::stats;
use crate::trainer::{collect_episode, sample_dt, DtSampleMode, Policy, ReplayBuffer, TrainConfig};
use crate::worldmodel::{
    grad_check_losses, tau, Integrator, LossConfig, ModelConfig, SubTraj, WorldModel,
};
use rand::Rng;

pub struct PropResult {
    pub name: &'static str,
    pub detail: Result<(), String>,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(), String>) -> PropResult {
    PropResult { name, detail: f() }
}

fn small_plan() -> PlanConfig {
    PlanConfig { n_samples: 32, n_elites: 8, n_iterations: 2, ..PlanConfig::default() }
}

fn tau_identities() -> Result<(), String> {
    for (dt, expect) in [(1e-5, 0.0), (1e-3, 2.0), (1.0, 5.0)] {
        let got = tau(dt).map_err(|e| e.to_string())?;
        if got != expect {
            return Err(format!("tau({dt}) = {got}, expected {expect} exactly"));
        }
    }
    let grid: Vec<f64> = (0..100).map(|i| 10f64.powf(-6.0 + 0.08 * i as f64)).collect();
    for w in grid.windows(2) {
        if tau(w[0]).unwrap() > tau(w[1]).unwrap() {
            return Err(format!("tau not monotone between {} and {}", w[0], w[1]));
        }
    }
    Ok(())
}

fn integrator_identity_at_tau_zero() -> Result<(), String> {
    for integrator in [Integrator::Euler, Integrator::Rk4] {
        let model = WorldModel::new(
            ModelConfig { obs_dim: 4, n_a: 2, d_z: 8, hidden: vec![16], integrator, ema: 0.995 },
            7,
        );
        let z: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = vec![0.4, -0.6];
        let out = model
            .dynamics_batch(&Matrix::column_vector(&z), &Matrix::column_vector(&a), 1e-5)
            .map_err(|e| e.to_string())?;
        if out.data != z {
            return Err(format!("{integrator:?}: latent changed at dt = 1e-5"));
        }
    }
    Ok(())
}

fn constant_derivative_rk4_equals_euler() -> Result<(), String> {
    let cfg =
        ModelConfig { obs_dim: 4, n_a: 2, d_z: 4, hidden: vec![8], integrator: Integrator::Euler, ema: 0.995 };
    let mut model = WorldModel::zeros(cfg);
    let last = model.d.layers.len() - 1;
    model.d.layers[last].b = vec![0.3, -0.2, 0.9, 0.05];
    let z = vec![0.5, -1.0, 0.25, 2.0];
    let a = vec![0.1, 0.9];
    for dt in [0.01, 0.25, 1.0] {
        let e = model.dynamics_euler(&z, &a, dt).map_err(|e| e.to_string())?;
        let r = model.dynamics_rk4(&z, &a, dt).map_err(|e| e.to_string())?;
        for i in 0..4 {
            if (e[i] - r[i]).abs() >= 1e-12 {
                return Err(format!("RK4 and Euler disagree for constant d at dt = {dt}"));
            }
        }
    }
    Ok(())
}

fn loss_gradients_match_finite_differences() -> Result<(), String> {
    let model = WorldModel::new(
        ModelConfig { obs_dim: 4, n_a: 2, d_z: 3, hidden: vec![8], integrator: Integrator::Rk4, ema: 0.995 },
        13,
    );
    let mut rng = stream(13, "prop-loss", &[]);
    let batch: Vec<SubTraj> = (0..2)
        .map(|_| SubTraj {
            obs: (0..4).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            actions: (0..3).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            rewards: (0..3).map(|_| rng.gen_range(-1.0..0.0)).collect(),
            dt: rng.gen_range(0.01..0.5),
        })
        .collect();
    let reports = grad_check_losses(&model, &batch, &LossConfig::new(0.05), 24, 17)
        .map_err(|e| e.to_string())?;
    for (head, report) in reports {
        if !report.passes(1e-4) {
            return Err(format!("head {head}: max rel err {}", report.max_rel_err));
        }
    }
    Ok(())
}

fn checkpoint_round_trip_is_byte_identical() -> Result<(), String> {
    let dir = std::env::temp_dir().join(format!("tawm-prop-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let model = WorldModel::new(
        ModelConfig { obs_dim: 4, n_a: 2, d_z: 4, hidden: vec![8], integrator: Integrator::Euler, ema: 0.995 },
        29,
    );
    let p1 = dir.join("a.tawm");
    let p2 = dir.join("b.tawm");
    model.save(&p1, serde_json::Value::Null).map_err(|e| e.to_string())?;
    let (loaded, _) = WorldModel::load(&p1).map_err(|e| e.to_string())?;
    loaded.save(&p2, serde_json::Value::Null).map_err(|e| e.to_string())?;
    let same = std::fs::read(&p1).map_err(|e| e.to_string())?
        == std::fs::read(&p2).map_err(|e| e.to_string())?;
    let _ = std::fs::remove_dir_all(&dir);
    if same {
        Ok(())
    } else {
        Err("save→load→save changed checkpoint bytes".into())
    }
}

fn env_substep_composition_bit_exact() -> Result<(), String> {
    for env in [EnvSpec::burgers(), EnvSpec::allen_cahn(), EnvSpec::wave(), EnvSpec::oscillator()] {
        let action: Vec<f64> = (0..env.action_dim()).map(|j| 0.3 * ((j + 1) as f64).sin()).collect();
        let k = 4;
        let dt_sim = env.dt_sim();
        let mut one = env.reset(33);
        env.step(&mut one, &action, k as f64 * dt_sim).map_err(|e| e.to_string())?;
        let mut many = env.reset(33);
        for _ in 0..k {
            env.step(&mut many, &action, dt_sim).map_err(|e| e.to_string())?;
        }
        let (a, b) = (env.observe(&one), env.observe(&many));
        if a != b {
            return Err(format!("{}: sub-step composition differs", env.name()));
        }
    }
    Ok(())
}

fn burgers_mass_and_wave_energy() -> Result<(), String> {
    let spec = PdeSpec::burgers();
    let mut state = spec.reset(5);
    let zero = vec![0.0; spec.n_a];
    let mut prev = spec.mass(&state);
    for _ in 0..25 {
        spec.step(&mut state, &zero, spec.dt_sim).map_err(|e| e.to_string())?;
        let m = spec.mass(&state);
        if (m - prev).abs() >= 1e-10 {
            return Err(format!("burgers mass drift {}", (m - prev).abs()));
        }
        prev = m;
    }
    let wave = PdeSpec::wave();
    let mut ws = wave.reset(5);
    let zero = vec![0.0; wave.n_a];
    let e0 = wave.wave_energy(&ws);
    for _ in 0..100 {
        wave.step(&mut ws, &zero, wave.dt_sim).map_err(|e| e.to_string())?;
        let rel = (wave.wave_energy(&ws) - e0).abs() / e0;
        if rel >= 1e-3 {
            return Err(format!("wave energy drift {rel}"));
        }
    }
    Ok(())
}

fn allen_cahn_phase_fixed_points() -> Result<(), String> {
    let spec = PdeSpec::allen_cahn();
    for phase in [1.0, -1.0] {
        let state = PdeState { u: vec![phase; spec.n_x], psi: None, t: 0.0 };
        let (du, _) = spec.rhs(&state, &vec![0.0; spec.n_x]).map_err(|e| e.to_string())?;
        if du.iter().any(|v| v.abs() > 1e-13) {
            return Err(format!("u ≡ {phase} is not stationary"));
        }
    }
    Ok(())
}

fn oscillator_amplitude_conservation() -> Result<(), String> {
    let spec = OscSpec { kappa: 0.0, ..OscSpec::default() };
    let mut state = spec.reset(21);
    let e0 = [spec.sub_energy(&state, 0), spec.sub_energy(&state, 1)];
    let zero = [0.0, 0.0];
    for _ in 0..100 {
        spec.step(&mut state, &zero, 100.0 * spec.dt_sim).map_err(|e| e.to_string())?;
    }
    for which in 0..2 {
        let rel = (spec.sub_energy(&state, which) - e0[which]).abs() / e0[which];
        if rel >= 1e-3 {
            return Err(format!("oscillator {which} amplitude drift {rel} over 1e4 sub-steps"));
        }
    }
    Ok(())
}

fn dt_sampler_matches_closed_form_cdfs() -> Result<(), String> {
    let env = EnvSpec::oscillator();
    let cases: Vec<(DtSampleMode, Box<dyn Fn(f64) -> f64>)> = vec![
        (
            DtSampleMode::LogUniform,
            Box::new(|x: f64| {
                ((x.ln() - 0.01f64.ln()) / (1.0f64.ln() - 0.01f64.ln())).clamp(0.0, 1.0)
            }),
        ),
        (DtSampleMode::Uniform, Box::new(|x: f64| ((x - 0.01) / 0.99).clamp(0.0, 1.0))),
    ];
    for (mode, cdf) in cases {
        let cfg = TrainConfig { mode, dt_min: 0.01, dt_max: 1.0, ..TrainConfig::new(&env, 6) };
        let mut rng = stream(6, "prop-dt", &[]);
        let draws: Vec<f64> = (0..10_000).map(|_| sample_dt(&cfg, &mut rng).seconds()).collect();
        let res = stats::ks_test(&draws, cdf, 0.01);
        if !res.passes {
            return Err(format!("{mode:?}: KS {} ≥ critical {}", res.statistic, res.critical));
        }
    }
    Ok(())
}

fn buffer_windows_stay_within_episodes() -> Result<(), String> {
    let env = EnvSpec::oscillator();
    let mut buffer = ReplayBuffer::new(220);
    for ep in 0..5 {
        collect_episode(&env, Policy::UniformRandom, 0.05, &mut buffer, ep, 8)
            .map_err(|e| e.to_string())?;
    }
    let mut rng = stream(8, "prop-buffer", &[]);
    for _ in 0..300 {
        let w = buffer.sample_window(3, &mut rng).ok_or("no window available")?;
        let ep = w[0].episode_id;
        for (i, t) in w.iter().enumerate() {
            if t.episode_id != ep || t.step_index != w[0].step_index + i {
                return Err("window crossed an episode boundary".into());
            }
        }
    }
    Ok(())
}

fn planner_bounds_and_determinism() -> Result<(), String> {
    let env = EnvSpec::oscillator();
    let model =
        WorldModel::new(ModelConfig::new(env.obs_dim(), env.action_dim(), Integrator::Euler), 31);
    let obs = env.observe(&env.reset(4));
    let act = |seed: u64| -> Result<Vec<f64>, String> {
        let mut planner = crate::planner::Planner::new(small_plan());
        planner.begin_episode();
        let mut rng = stream(seed, "prop-plan", &[]);
        planner.act(&model, &obs, 0.05, 0.05, &mut rng).map_err(|e| e.to_string())
    };
    let a = act(9)?;
    let b = act(9)?;
    if a != b {
        return Err("same seed produced different actions".into());
    }
    if !a.iter().all(|v| (-1.0..=1.0).contains(v)) {
        return Err(format!("action out of bounds: {a:?}"));
    }
    Ok(())
}

fn sweep_serial_equals_parallel() -> Result<(), String> {
    let env = EnvSpec::oscillator();
    let model =
        WorldModel::new(ModelConfig::new(env.obs_dim(), env.action_dim(), Integrator::Euler), 37);
    let entries = vec![
        SweepEntry { id: "m".into(), model: &model, mode: EvalMode::Plain },
        SweepEntry { id: "m+repeat".into(), model: &model, mode: EvalMode::ActionRepeat },
    ];
    let serial = evalkit::sweep(&entries, &env, &[0.05, 0.1], &[1], 1, &small_plan(), false)
        .map_err(|e| e.to_string())?;
    let parallel = evalkit::sweep(&entries, &env, &[0.05, 0.1], &[1], 1, &small_plan(), true)
        .map_err(|e| e.to_string())?;
    if serial.to_csv() != parallel.to_csv() {
        return Err("serial and parallel sweeps differ".into());
    }
    let row = &serial.rows[0];
    // report consistency: the stored mean is the mean of per-episode rewards
    let again = evalkit::eval_model(&model, &env, row.dt_eval, row.n_episodes, row.seed, &small_plan())
        .map_err(|e| e.to_string())?;
    if (stats::mean(&again.per_episode) - row.mean_reward).abs() > 1e-12 {
        return Err("reported mean disagrees with per-episode rewards".into());
    }
    Ok(())
}

fn adam_is_deterministic() -> Result<(), String> {
    use crate::nn::{adam_step, AdamConfig, AdamState};
    let arch = ArchSpec::mlp(&[3, 8, 1], Activation::Silu, Activation::Identity);
    let run = || {
        let mut rng = stream(41, "prop-adam", &[]);
        let mut store = ParamStore::init("net", arch.clone(), &mut rng);
        let mut st = AdamState::new(&store, AdamConfig::default());
        for k in 0..25 {
            let mut g = store.zero_grads();
            for (li, l) in store.layers.iter().enumerate() {
                for (wi, w) in l.w.iter().enumerate() {
                    g.layers[li].w[wi] = (w * (k + 1) as f64).cos();
                }
            }
            adam_step(&mut store, &g, &mut st).unwrap();
        }
        store
    };
    if run() != run() {
        return Err("Adam updates are not bit-deterministic".into());
    }
    Ok(())
}

/// Run every property; all must pass for `propcheck` to exit 0.
pub fn run_all() -> Vec<PropResult> {
    vec![
        check("tau identities and monotonicity", tau_identities),
        check("integrator identity at tau = 0", integrator_identity_at_tau_zero),
        check("constant-derivative RK4 equals Euler", constant_derivative_rk4_equals_euler),
        check("loss gradients match finite differences", loss_gradients_match_finite_differences),
        check("checkpoint round trip byte-identical", checkpoint_round_trip_is_byte_identical),
        check("env sub-step composition bit-exact", env_substep_composition_bit_exact),
        check("burgers mass / wave energy conservation", burgers_mass_and_wave_energy),
        check("allen-cahn phase fixed points", allen_cahn_phase_fixed_points),
        check("oscillator amplitude conservation", oscillator_amplitude_conservation),
        check("dt sampler KS tests", dt_sampler_matches_closed_form_cdfs),
        check("replay windows stay within episodes", buffer_windows_stay_within_episodes),
        check("planner bounds and determinism", planner_bounds_and_determinism),
        check("sweep serial equals parallel", sweep_serial_equals_parallel),
        check("adam determinism", adam_is_deterministic),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_properties_hold() {
        for prop in super::run_all() {
            if let Err(e) = &prop.detail {
                panic!("property '{}' failed: {e}", prop.name);
            }
        }
    }
}
