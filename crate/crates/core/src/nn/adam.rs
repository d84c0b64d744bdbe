//! Adam with bias correction; deterministic, no weight decay.

use super::tape::StoreGrads;
use super::{LayerParams, NnError, ParamStore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators, shaped like the parameter store.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<LayerParams>,
    v: Vec<LayerParams>,
    step: u64,
    pub cfg: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ParamStore, cfg: AdamConfig) -> Self {
        let zero = || {
            params
                .arch
                .layers
                .iter()
                .map(|l| LayerParams { w: vec![0.0; l.input * l.output], b: vec![0.0; l.output] })
                .collect::<Vec<_>>()
        };
        AdamState { m: zero(), v: zero(), step: 0, cfg }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update:
/// m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g², θ ← θ − lr·m̂/(√v̂ + ε).
pub fn adam_step(params: &mut ParamStore, grads: &StoreGrads, state: &mut AdamState) -> Result<(), NnError> {
    for (layer, (g, p)) in grads.layers.iter().zip(&params.layers).enumerate() {
        for (idx, gv) in g.w.iter().chain(g.b.iter()).enumerate() {
            if !gv.is_finite() {
                let kind = if idx < p.w.len() { "w" } else { "b" };
                return Err(NnError::NonFiniteGrad {
                    param: format!("{}/layer{}/{}", params.name, layer, kind),
                });
            }
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let AdamConfig { lr, beta1, beta2, eps } = state.cfg;
    let bc1 = 1.0 - beta1.powf(t);
    let bc2 = 1.0 - beta2.powf(t);

    for (layer, g) in grads.layers.iter().enumerate() {
        let p = &mut params.layers[layer];
        let m = &mut state.m[layer];
        let v = &mut state.v[layer];
        let update = |theta: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..theta.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        update(&mut p.w, &g.w, &mut m.w, &mut v.w);
        update(&mut p.b, &g.b, &mut m.b, &mut v.b);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, ArchSpec};

    fn scalar_store(value: f64) -> ParamStore {
        let arch = ArchSpec::mlp(&[1, 1], Activation::Silu, Activation::Identity);
        let mut s = ParamStore::zeros("w", arch);
        s.layers[0].w[0] = value;
        s
    }

    fn scalar_grad(store: &ParamStore, g: f64) -> StoreGrads {
        let mut sg = store.zero_grads();
        sg.layers[0].w[0] = g;
        sg
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = scalar_store(0.7);
        let before = store.clone();
        let mut st = AdamState::new(&store, AdamConfig::default());
        let zero = store.zero_grads();
        adam_step(&mut store, &zero, &mut st).unwrap();
        assert_eq!(store, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias-corrected Adam's first step is −lr·g/(|g| + ε') ≈ −lr for g=1.
        let mut store = scalar_store(0.0);
        let mut st = AdamState::new(&store, AdamConfig { lr: 0.1, ..AdamConfig::default() });
        let g = scalar_grad(&store, 1.0);
        adam_step(&mut store, &g, &mut st).unwrap();
        assert!((store.layers[0].w[0] + 0.1).abs() < 1e-8, "got {}", store.layers[0].w[0]);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // f(w) = (w − 3)², analytic gradient 2(w − 3).
        let mut store = scalar_store(0.0);
        let mut st = AdamState::new(&store, AdamConfig { lr: 0.1, ..AdamConfig::default() });
        for _ in 0..1000 {
            let w = store.layers[0].w[0];
            let g = scalar_grad(&store, 2.0 * (w - 3.0));
            adam_step(&mut store, &g, &mut st).unwrap();
        }
        assert!((store.layers[0].w[0] - 3.0).abs() < 1e-3);
        assert_eq!(st.step_count(), 1000);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut store = scalar_store(0.0);
        let mut st = AdamState::new(&store, AdamConfig::default());
        let g = scalar_grad(&store, f64::NAN);
        let err = adam_step(&mut store, &g, &mut st).unwrap_err();
        assert!(err.to_string().contains("w/layer0/w"), "{err}");
    }

    #[test]
    fn same_seed_same_params_after_n_steps() {
        use crate::rng::stream;
        let arch = ArchSpec::mlp(&[2, 4, 1], Activation::Silu, Activation::Identity);
        let run = || {
            let mut rng = stream(3, "determinism", &[]);
            let mut store = ParamStore::init("net", arch.clone(), &mut rng);
            let mut st = AdamState::new(&store, AdamConfig::default());
            for k in 0..50 {
                let mut g = store.zero_grads();
                for (i, l) in store.layers.iter().enumerate() {
                    for (j, w) in l.w.iter().enumerate() {
                        g.layers[i].w[j] = (w * (k as f64 + 1.0)).sin();
                    }
                }
                adam_step(&mut store, &g, &mut st).unwrap();
            }
            store
        };
        let a = run();
        let b = run();
        assert_eq!(a, b, "bit-identical parameters expected");
    }
}
