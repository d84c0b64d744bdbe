//! Minimal deterministic MLP stack: forward, reverse-mode gradients, Adam.
//!
//! Everything is plain `f64` in memory; checkpoint files carry a 32-bit
//! payload (see [`checkpoint`]). There is no implicit batching or
//! broadcasting — a batch is a [`Matrix`] with one sample per column, and the
//! per-column results are bit-identical to single-column calls.

pub mod adam;
pub mod checkpoint;
pub mod fastmath;
pub mod gradcheck;
pub mod matrix;
pub mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, Probes};
pub use matrix::Matrix;
pub use tape::{GradTape, NodeId, StoreGrads};

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {store} layer {layer}: expected input {expected}, got {got}")]
    ShapeMismatch { store: String, layer: usize, expected: usize, got: usize },
    #[error("non-finite gradient at {param}")]
    NonFiniteGrad { param: String },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// x · σ(x); smooth, so finite-difference checks are clean everywhere.
    Silu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation input.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    fastmath::sigmoid(x)
}

/// One dense layer: `act(W x + b)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub act: Activation,
}

/// Architecture descriptor; parameter layout is a pure function of this.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    /// Standard MLP: `sizes = [in, h1, .., out]`, hidden activation on all but
    /// the last layer.
    pub fn mlp(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                input: w[0],
                output: w[1],
                act: if i + 2 == sizes.len() { output } else { hidden },
            })
            .collect();
        ArchSpec { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.input * l.output + l.output).sum()
    }

    /// Consecutive layer widths must agree.
    pub fn validate(&self) -> Result<(), String> {
        if self.layers.is_empty() {
            return Err("architecture has no layers".into());
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output != pair[1].input {
                return Err(format!(
                    "layer {} output {} does not feed layer {} input {}",
                    i,
                    pair[0].output,
                    i + 1,
                    pair[1].input
                ));
            }
        }
        Ok(())
    }
}

/// Weights and bias of one layer; `w` is `[output × input]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// A named MLP parameter collection plus its layout metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub name: String,
    pub arch: ArchSpec,
    pub layers: Vec<LayerParams>,
}

impl ParamStore {
    /// Uniform fan-in scaled init: w, b ~ U(−1/√fan_in, 1/√fan_in).
    ///
    /// Draws are made in f32 so a freshly initialized store survives the
    /// 32-bit checkpoint payload bit-exactly.
    pub fn init<R: Rng>(name: &str, arch: ArchSpec, rng: &mut R) -> Self {
        arch.validate().expect("invalid architecture");
        let layers = arch
            .layers
            .iter()
            .map(|l| {
                let bound = 1.0 / (l.input as f64).sqrt();
                let bound32 = bound as f32;
                let mut draw = || f64::from(rng.gen_range(-bound32..=bound32));
                LayerParams {
                    w: (0..l.input * l.output).map(|_| draw()).collect(),
                    b: (0..l.output).map(|_| draw()).collect(),
                }
            })
            .collect();
        ParamStore { name: name.to_string(), arch, layers }
    }

    pub fn zeros(name: &str, arch: ArchSpec) -> Self {
        arch.validate().expect("invalid architecture");
        let layers = arch
            .layers
            .iter()
            .map(|l| LayerParams { w: vec![0.0; l.input * l.output], b: vec![0.0; l.output] })
            .collect();
        ParamStore { name: name.to_string(), arch, layers }
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    /// Plain forward pass on a batch, no tape.
    pub fn forward_batch(&self, input: &Matrix) -> Result<Matrix, NnError> {
        if input.rows != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                store: self.name.clone(),
                layer: 0,
                expected: self.input_dim(),
                got: input.rows,
            });
        }
        let mut cur = input.clone();
        let mut next = Matrix::zeros(0, 0);
        for (spec, params) in self.arch.layers.iter().zip(&self.layers) {
            matrix::linear_into(&params.w, &params.b, spec.input, spec.output, &cur, &mut next);
            if spec.act != Activation::Identity {
                for v in next.data.iter_mut() {
                    *v = spec.act.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Plain forward pass on one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_batch(&Matrix::column_vector(input))?.data)
    }

    /// Zero gradients shaped like this store.
    pub fn zero_grads(&self) -> StoreGrads {
        StoreGrads {
            layers: self
                .arch
                .layers
                .iter()
                .map(|l| LayerParams { w: vec![0.0; l.input * l.output], b: vec![0.0; l.output] })
                .collect(),
        }
    }

    /// Exponential moving average toward `source`: θ ← ema·θ + (1−ema)·source.
    pub fn ema_update(&mut self, source: &ParamStore, ema: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            for (d, s) in dst.w.iter_mut().zip(&src.w) {
                *d = ema * *d + (1.0 - ema) * s;
            }
            for (d, s) in dst.b.iter_mut().zip(&src.b) {
                *d = ema * *d + (1.0 - ema) * s;
            }
        }
    }

    /// Flat view of all parameters in declaration order (w then b per layer).
    pub fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }
}

/// Forward pass recording a tape; returns the output and the tape.
pub fn mlp_forward<'p>(params: &'p ParamStore, input: &[f64]) -> Result<(Vec<f64>, GradTape<'p>), NnError> {
    let mut tape = GradTape::new();
    let sid = tape.register(params);
    let x = tape.leaf(Matrix::column_vector(input));
    let out = tape.forward_store(sid, x)?;
    let value = tape.value(out).data.clone();
    tape.set_default_output(out);
    Ok((value, tape))
}

/// Parameter gradients of the recorded computation, seeded with
/// `output_grad` on the forward output. Exact for the recorded ops.
pub fn mlp_backward(tape: &GradTape<'_>, output_grad: &[f64]) -> Result<StoreGrads, NnError> {
    let out = tape.default_output().ok_or_else(|| NnError::Format("tape has no output".into()))?;
    let out_val = tape.value(out);
    if out_val.rows != output_grad.len() {
        return Err(NnError::ShapeMismatch {
            store: "output_grad".into(),
            layer: 0,
            expected: out_val.rows,
            got: output_grad.len(),
        });
    }
    let res = tape.backward_from(out, &Matrix::column_vector(output_grad));
    Ok(res.store_grads.into_iter().next().expect("one registered store"))
}
