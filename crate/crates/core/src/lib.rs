//! Minimal-time mean field games with state constraints.
//!
//! The crate computes value functions of minimal-time problems on analytic
//! domains, extracts optimal trajectories from maximal descent directions,
//! solves the Lagrangian equilibrium by fictitious play, and audits the
//! resulting flows against the MFG system.

// `!(x > 0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod congestion;
pub mod equilibrium;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hjb;
pub mod io;
pub mod penalty;
mod point;
pub mod residuals;
pub mod runner;
pub mod sampling;
pub mod scenario;
mod scalar;
pub mod trajectories;
pub mod transport;

pub use congestion::{CongestionLaw, Kernel, KernelProfile, SpeedField, Weight, WeightBox};
pub use equilibrium::{Equilibrium, EquilibriumConfig, EquilibriumReport, Verdict};
pub use error::{ConfigIssue, ErrorCategory, MfgError, Result};
pub use geometry::{DomainSpec, Shape, TargetSpec};
pub use grid::{SpaceGrid, Stencil};
pub use hjb::{Constraint, NormalizedGradient, SolverParams, ValueField};
pub use penalty::{epsilon_threshold, penalized_speed, PenaltyParams};
pub use point::Point;
pub use residuals::{ResidualReport, TestFunction};
pub use scalar::Scalar;
pub use trajectories::{IntegrationError, Trajectory};
pub use transport::{FlowMeasure, ParticleEnsemble, W1Estimate};

/// Double-precision aliases; the runner and the CLI work in `f64`.
pub type Domain = DomainSpec<f64>;
pub type Target = TargetSpec<f64>;
pub type Law = CongestionLaw<f64>;
pub type Speed = SpeedField<f64>;
pub type Phi = ValueField<f64>;
pub type Ensemble = ParticleEnsemble<f64>;
pub type Flow = FlowMeasure<f64>;

/// Single-precision aliases.
pub type Domain32 = DomainSpec<f32>;
pub type Target32 = TargetSpec<f32>;
pub type Law32 = CongestionLaw<f32>;
pub type Speed32 = SpeedField<f32>;
pub type Phi32 = ValueField<f32>;
pub type Ensemble32 = ParticleEnsemble<f32>;
pub type Flow32 = FlowMeasure<f32>;
