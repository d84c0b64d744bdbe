//! Time-aware latent world model at desk scale.
//!
//! A single observation-rate is baked into most world-model training loops.
//! This crate instead conditions every dynamics-dependent network head on the
//! step size Δt, trains over a mixture of Δt values, and plans with MPPI over
//! Δt-conditioned latent rollouts. It is fully self-contained: the MLP stack
//! (forward, reverse-mode gradients, Adam) lives in [`nn`], the control
//! environments (three 1D PDE boundary-control tasks and a multi-scale
//! oscillator) in [`env`], and the evaluation machinery (Δt sweeps, action
//! repeat baselines, interpolation-law experiments) in [`evalkit`].
//!
//! Determinism is a hard contract throughout: every source of randomness is a
//! named stream derived from one root seed (see [`rng`]), and parallel and
//! serial execution produce byte-identical artifacts.

pub mod config;
pub mod env;
pub mod evalkit;
pub mod nn;
pub mod planner;
pub mod props;
pub mod rng;
pub mod stats;
pub mod trainer;
pub mod worldmodel;
