//! Knee motion generation for transfemoral prostheses.
//!
//! The crate covers the whole pipeline: a planar three-link swing model,
//! zero-torque (inertial) knee trajectories found as via-point solutions of
//! the knee dynamics, kinematic-synergy analysis by SVD, linear and
//! toe-off-adaptive regressors from intact-limb states to the desired knee
//! state, and PD-tracked swing simulation with floor-clearance and
//! terminal-extension metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod dynamics;
pub mod error;
pub mod gait;
pub mod inertial;
pub mod lstsq;
pub mod ode;
pub mod pipeline;
pub mod plot;
pub mod simulate;
pub mod spline;
pub mod synergy;
mod textio;

pub use error::{Error, Result};
