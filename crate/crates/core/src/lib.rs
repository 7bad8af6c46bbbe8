//! Multispecies particle-cavity selforganisation: stochastic simulation and
//! analytic kinetic theory.
//!
//! Units are fixed in [`model`]. [`dynamics`] integrates the coupled
//! particle-field equations, [`kinetics`] holds the analytic predictions and
//! [`observables`] reduces simulated states to comparable quantities.

pub mod dynamics;
pub mod kinetics;
pub mod model;
pub mod numerics;
pub mod observables;

pub use dynamics::{
    ensemble_run, run, Channel, DynamicsError, EnsembleStats, Recorder, TimeSeries,
};
pub use kinetics::{EquilibriumPrediction, KineticsError, StabilityReport};
pub use model::{
    CavityParams, InitialCondition, ModelError, SimConfig, SimState, SpeciesParams,
    SpeciesState,
};
pub use num_complex::Complex64;
pub use observables::{Histogram, QGaussianFit};
