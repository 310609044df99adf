//! Energy-harvesting vehicle suspension toolkit built around an
//! inerter-pendulum vibration absorber (IPVA) in a quarter-car model.
//!
//! The crate covers the full workflow: nonlinear plant dynamics, stochastic
//! road synthesis, fixed-step simulation and spectral analysis, Pareto
//! design search, stochastic linearization with stabilizability repair,
//! nonlinear and linearized model-predictive control, and a high-gain
//! observer for road disturbance estimation. A CLI binary (`ipva`) wraps
//! the pieces into reproducible experiments.

pub mod config;
pub mod design;
pub mod error;
pub mod experiment;
pub mod model;
pub mod mpc;
pub mod observer;
pub mod params;
pub mod road;
pub mod sim;
pub mod slin;
