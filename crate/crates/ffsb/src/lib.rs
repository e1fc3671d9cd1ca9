//! Shape-based design of planar low-thrust spacecraft transfers.
//!
//! The toolkit approximates the polar states of a spacecraft with a finite
//! Fourier series, eliminates the trajectory boundary conditions
//! analytically, and solves a small nonlinear program for the remaining
//! coefficients. The objective blends the squared equation-of-motion
//! residual with an optional time-of-flight or ΔV penalty, so the same
//! machinery produces both feasibility-driven and sub-optimal shortened
//! transfers.
//!
//! Alongside the shaping solver the crate ships:
//!
//! * an adaptive Dormand–Prince propagator that replays the shaped thrust
//!   program open loop against the full nonlinear dynamics
//!   ([`propagation`]),
//! * a Hermite–Simpson direct-collocation solver for the minimum-time
//!   optimal control problem, used as the baseline the shaped transfers
//!   are judged against ([`collocation`]),
//! * the augmented-Lagrangian / BFGS minimizer both solvers run on
//!   ([`nlp`]).
//!
//! All physics is done in canonical units (gravitational parameter = 1);
//! [`scenario`] owns the conversions and the scenario file format.

pub mod boundary;
pub mod collocation;
pub mod dynamics;
pub mod fourier;
pub mod nlp;
pub mod propagation;
pub mod scenario;
pub mod shaping;

pub use boundary::CoefficientMap;
pub use collocation::{solve_min_time, stats::saturation_fraction, OptimalSolution, TranscriptionGrid};
pub use dynamics::{StateSample, ThrustSample, TrajectoryProfile};
pub use fourier::{CoefficientVector, FourierBasis};
pub use nlp::{DualState, NlpOptions, NlpResult, NlpStatus};
pub use propagation::{
    compare_profiles, integrate_open_loop, DeviationMetrics, IntegratorOptions, PropagationReport,
};
pub use scenario::{
    load_scenario, BoundaryConditions, CanonicalUnits, FinalAngleMode, ObjectiveMode,
    ScenarioConfig, UnitKind,
};
pub use shaping::{
    rendezvous_theta_f, sweep, sweep_with_mode, DecisionLayout, ShapeProblem, ShapeSolution,
    SweepMode, SweepRecord,
};

/// Toolkit-wide error type; each subsystem contributes a variant.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Fourier(#[from] fourier::FourierError),
    #[error(transparent)]
    Boundary(#[from] boundary::BoundaryError),
    #[error(transparent)]
    Dynamics(#[from] dynamics::DynamicsError),
    #[error(transparent)]
    Shaping(#[from] shaping::ShapingError),
    #[error(transparent)]
    Propagation(#[from] propagation::PropagationError),
    #[error(transparent)]
    Collocation(#[from] collocation::CollocationError),
}

pub type Result<T> = std::result::Result<T, Error>;
