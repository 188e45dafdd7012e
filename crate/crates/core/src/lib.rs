//! Lagrangian solver and bound monitor for a nonlocal active scalar transport
//! model whose solutions form a cusp in finite time.

// `!(a > b)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod certify;
pub mod cli;
pub mod error;
pub mod flowfield;
pub mod integrator;
pub mod profile;
pub mod regression;

pub use error::{Error, ProfileViolation, Result};
pub use flowfield::{
    cumulative_phi, eulerian_velocity_gradient, make_grid, support_drift, velocity_gradient,
    FlowField, FlowState, GridSpec, LagrangianGrid, VelocityGradient,
};
pub use profile::{
    build_forcing, build_profile, fit_k_bounds, Forcing, InitialProfile, KBounds, ProfileFamily,
};
