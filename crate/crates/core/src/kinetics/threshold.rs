//! Linear stability of spatially uniform Maxwellian states.

use std::cell::Cell;
use std::f64::consts::{FRAC_PI_2, PI};

use super::{effective_detuning, KineticsError};
use crate::model::{CavityParams, SpeciesParams};
use crate::numerics::{bisect, integrate, NumericsError};

/// Whether the analytic stability theory applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `δ < 0`: selforganisation threshold is defined.
    RedDetuned,
    /// `δ ≥ 0`: the heating instability, not described analytically.
    OutOfRegime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub delta: f64,
    pub regime: Regime,
    /// Left side of the threshold inequality divided by its right side.
    pub threshold_lhs: f64,
    pub unstable: bool,
    /// Growth rate of the field amplitude, present only when unstable.
    pub growth_rate: Option<f64>,
    /// Fraction of `threshold_lhs` contributed by each species.
    pub shares: Vec<f64>,
}

/// `Σ_s N_s η_s² / k_B T_s`
fn pump_sum(species: &[SpeciesParams]) -> f64 {
    species.iter().map(summand).sum()
}

fn summand(s: &SpeciesParams) -> f64 {
    s.n_particles as f64 * s.pump * s.pump / s.temperature
}

/// Threshold margin for Maxwellian momentum distributions at the species
/// temperatures: unstable iff `[Σ_s N_s η_s²/k_B T_s]·ħ|δ|/(κ² + δ²) > 1`.
pub fn stability_margin(cavity: &CavityParams, species: &[SpeciesParams]) -> StabilityReport {
    let delta = effective_detuning(cavity, species);
    let geometry = delta.abs() / (cavity.kappa.powi(2) + delta * delta);
    let total = pump_sum(species);
    let threshold_lhs = total * geometry;
    let shares = species
        .iter()
        .map(|s| if total > 0.0 { summand(s) / total } else { 0.0 })
        .collect();
    if delta >= 0.0 {
        return StabilityReport {
            delta,
            regime: Regime::OutOfRegime,
            threshold_lhs,
            unstable: false,
            growth_rate: None,
            shares,
        };
    }
    let unstable = threshold_lhs > 1.0;
    let growth_rate = if unstable {
        growth_rate_full(cavity, species).ok().flatten()
    } else {
        None
    };
    StabilityReport {
        delta,
        regime: Regime::RedDetuned,
        threshold_lhs,
        unstable,
        growth_rate,
        shares,
    }
}

/// Common factor `ζ` by which all pump amplitudes must be scaled to sit
/// exactly at threshold, `ζ = margin^{-1/2}`.
pub fn critical_pump_scale(
    cavity: &CavityParams,
    species: &[SpeciesParams],
) -> Result<f64, KineticsError> {
    let delta = effective_detuning(cavity, species);
    if delta >= 0.0 {
        return Err(KineticsError::NotRedDetuned { delta });
    }
    if species.iter().all(|s| s.pump == 0.0) {
        return Err(KineticsError::NoPump);
    }
    Ok(1.0 / stability_margin(cavity, species).threshold_lhs.sqrt())
}

/// Growth rate in the hot limit `(k·min v_s)² ≫ κ² + δ²`:
/// `γ = −κ + (Σ_s ħ|δ| N_s η_s²/k_B T_s − δ²)^{1/2}`, or `None` when stable.
pub fn growth_rate_hot(cavity: &CavityParams, species: &[SpeciesParams]) -> Option<f64> {
    let delta = effective_detuning(cavity, species);
    if delta >= 0.0 {
        return None;
    }
    let radicand = delta.abs() * pump_sum(species) - delta * delta;
    if radicand < 0.0 {
        return None;
    }
    let gamma = -cavity.kappa + radicand.sqrt();
    (gamma > 0.0).then_some(gamma)
}

/// `∫ u G'(u)/(c² + u²) du` over the real line for the unit Maxwellian
/// `G(u) = e^{−u²}/√π`. Equals −2 at `c = 0`.
pub fn maxwellian_dispersion_integral(c: f64) -> Result<f64, NumericsError> {
    // u²/(c² + u²) = 1 − c²/(c² + u²); the second part with u = c·tan φ
    // avoids resolving a Lorentzian of width c
    let c = c.abs();
    if c == 0.0 {
        return Ok(-2.0);
    }
    let lorentz = integrate(
        |phi: f64| (-(c * phi.tan()).powi(2)).exp(),
        0.0,
        FRAC_PI_2,
        1e-9 * PI.sqrt() / (4.0 * c),
        0.0,
    )?;
    Ok(-4.0 / PI.sqrt() * (0.5 * PI.sqrt() - c * lorentz))
}

/// Exact Maxwellian growth rate: the positive root `γ` of
/// `(γ+κ)² + δ² = Σ_s [N_s η_s² ħδ/(2k_B T_s)] ∫ u G'(u)/((γ/kv_s)² + u²) du`.
pub fn growth_rate_full(
    cavity: &CavityParams,
    species: &[SpeciesParams],
) -> Result<Option<f64>, KineticsError> {
    let delta = effective_detuning(cavity, species);
    if delta >= 0.0 {
        return Ok(None);
    }
    let report_lhs = pump_sum(species) * delta.abs() / (cavity.kappa.powi(2) + delta * delta);
    if report_lhs <= 1.0 {
        return Ok(None);
    }
    let Some(gamma_hot) = growth_rate_hot(cavity, species) else {
        return Ok(None);
    };
    let failure: Cell<Option<KineticsError>> = Cell::new(None);
    let balance = |gamma: f64| -> f64 {
        match growth_balance(cavity.kappa, delta, species, gamma) {
            Ok(v) => v,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let upper = gamma_hot + cavity.kappa;
    let root = bisect(balance, 0.0, upper, 1e-10);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(root.filter(|&g| g > 0.0))
}

/// Right side minus left side of the growth-rate balance at `γ`.
fn growth_balance(
    kappa: f64,
    delta: f64,
    species: &[SpeciesParams],
    gamma: f64,
) -> Result<f64, KineticsError> {
    let mut rhs = 0.0;
    for (index, s) in species.iter().enumerate() {
        if s.pump == 0.0 {
            continue;
        }
        let c = gamma / s.thermal_velocity();
        let integral = maxwellian_dispersion_integral(c)
            .map_err(|source| KineticsError::Quadrature { species: index, source })?;
        rhs += s.n_particles as f64 * s.pump * s.pump * delta / (2.0 * s.temperature) * integral;
    }
    Ok(rhs - (gamma + kappa).powi(2) - delta * delta)
}
