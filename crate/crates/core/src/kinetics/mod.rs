//! Analytic kinetic theory of the multispecies particle-cavity system.
//!
//! Closed-form and quadrature results for the linear stability of uniform
//! states, their growth rates, the homogeneous (q-Gaussian) and organised
//! (Maxwell-Boltzmann) equilibria, single-particle actions and the adiabatic
//! map onto selforganised states, uniform-limit friction and diffusion, and
//! the inter-species heat flow.

mod action;
mod equilibrium;
mod threshold;
mod transport;

pub use action::{
    action, action_in_well, adiabatic_map, adiabatic_steady_state, reduced_action,
    AdiabaticMap, AdiabaticSteadyState, Maxwellian, MomentumDistribution, OrbitKind,
};
pub use equilibrium::{
    organised_equilibrium, organised_equilibrium_with, qgaussian_equilibrium, Branch,
    EquilibriumPrediction, OrganisedOptions, SpeciesEquilibrium,
};
pub use threshold::{
    critical_pump_scale, growth_rate_full, growth_rate_hot, maxwellian_dispersion_integral,
    stability_margin, Regime, StabilityReport,
};
pub use transport::{friction_diffusion_uniform, heat_flow, FrictionDiffusion, HeatFlow};

use thiserror::Error;

use crate::model::{CavityParams, SpeciesParams};
use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticsError {
    #[error("effective detuning {delta} is not red (δ < 0 required)")]
    NotRedDetuned { delta: f64 },
    #[error("all pump amplitudes vanish")]
    NoPump,
    #[error("quadrature failed for species {species}: {source}")]
    Quadrature {
        species: usize,
        #[source]
        source: NumericsError,
    },
    #[error("uniform state is unstable (margin {margin})")]
    AboveThreshold { margin: f64 },
    #[error("energy {energy} lies below the potential minimum {minimum}")]
    BelowBottom { energy: f64, minimum: f64 },
    #[error("self-consistent field did not converge after {iterations} iterations (residual {residual})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Box<EquilibriumPrediction>,
    },
    #[error("self-consistent field collapsed to zero: configuration is effectively below threshold")]
    Collapsed,
    #[error("no selforganised solution: {0}")]
    NoSolution(String),
}

/// Effective detuning `δ = Δ_c − ½ Σ_s N_s U0_s`.
pub fn effective_detuning(cavity: &CavityParams, species: &[SpeciesParams]) -> f64 {
    cavity.detuning
        - 0.5
            * species
                .iter()
                .map(|s| s.n_particles as f64 * s.light_shift)
                .sum::<f64>()
}

/// Minimal `k_B T* = ħ(κ² + δ²)/(4|δ|)` reached by homogeneous equilibria.
pub fn equilibrium_temperature(kappa: f64, delta: f64) -> f64 {
    (kappa * kappa + delta * delta) / (4.0 * delta.abs())
}
