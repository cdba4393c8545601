//! Stochastic optimal impedance control for two physically coupled tracking agents.
//!
//! Each agent tracks a common multisine target through its own biased, noisy
//! position sensing while a virtual spring transmits torque between the two.
//! The crate computes the viscoelastic gains that minimise expected tracking
//! error plus effort, simulates coupled pairs with those gains, and evaluates
//! the performance and haptic-communication metrics used to compare
//! controllers.
//!
//! Module map:
//!
//! * [`signalgen`]: target trajectories and seeded noise substreams.
//! * [`dynamics`]: closed-loop matrices, design-model and coupled-pair simulation.
//! * [`moments`]: mean/covariance propagation, Monte-Carlo estimation, cost.
//! * [`soie`]: optimal impedance parameter and noise-grid surfaces.
//! * [`pso`]: bounded particle swarm optimiser and human hyperparameter fit.
//! * [`metrics`]: error, effort, SNR, correlation, delay and paired tests.
//! * [`experiments`]: batch runs of the robot-robot, human-human and human-robot studies.
//! * [`cli`]: command-line front end over JSON configuration files.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod pso;
pub mod signalgen;
pub mod soie;
pub mod units;

pub use error::{Error, Result};
