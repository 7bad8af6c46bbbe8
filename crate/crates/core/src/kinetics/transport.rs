use std::f64::consts::PI;

use super::threshold::stability_margin;
use super::{effective_detuning, KineticsError};
use crate::model::{CavityParams, SpeciesParams, REFERENCE_MASS};

/// Uniform-limit momentum transport coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionDiffusion {
    /// `A_s`; the mean momentum changes at rate `−A_s`.
    pub drift: f64,
    /// `B_s > 0`
    pub diffusion: f64,
}

/// Drift and diffusion of a free particle with momentum `p` from the
/// fluctuation and decay of the field, using the bare-cavity dispersion
/// `D(iω) = (iω + κ)² + δ²` and the `n = ±1` harmonics of a free orbit:
///
/// `A = −2δη²κω/|D|²`, `B = η²κ(κ² + δ² + ω²)/(2|D|²)`, `ω = p/m_s`.
pub fn friction_diffusion_uniform(
    p: f64,
    cavity: &CavityParams,
    delta: f64,
    s: &SpeciesParams,
) -> FrictionDiffusion {
    let kappa = cavity.kappa;
    let omega = p / s.mass;
    let base = kappa * kappa + delta * delta;
    let d2 = (base - omega * omega).powi(2) + 4.0 * kappa * kappa * omega * omega;
    let eta2 = s.pump * s.pump;
    FrictionDiffusion {
        drift: -2.0 * delta * eta2 * kappa * omega / d2,
        diffusion: eta2 * kappa * (base + omega * omega) / (2.0 * d2),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatFlow {
    pub q_2_to_1: f64,
    /// `−(N₂m₂)/(N₁m₁)·Q̇_{2→1}`
    pub q_1_to_2: f64,
    /// Violated preconditions of the estimate.
    pub warnings: Vec<String>,
}

/// Inter-species energy flow per particle between two homogeneous
/// ensembles at temperatures `T₁ = s1.temperature`, `T₂ = s2.temperature`:
///
/// `Q̇_{2→1} = N₁η₂²η₁²·4√π δ²/(κ²+δ²)²·(ω_rec/k_BT₁)^{1/2}·(1 − T₂/T₁)·(1 + m₁T₂/(m₂T₁))^{−3/2}`.
pub fn heat_flow(
    cavity: &CavityParams,
    s1: &SpeciesParams,
    s2: &SpeciesParams,
) -> Result<HeatFlow, KineticsError> {
    let pair = [s1.clone(), s2.clone()];
    let delta = effective_detuning(cavity, &pair);
    let kappa = cavity.kappa;
    let (t1, t2) = (s1.temperature, s2.temperature);
    let mut warnings = Vec::new();
    if delta >= 0.0 {
        warnings.push(format!("effective detuning {delta} is not red"));
    }
    // recoil frequency of the reference species is the unit of frequency
    let omega_rec = 1.0 / (2.0 * REFERENCE_MASS);
    if 2.0 * t1 / kappa > 0.1 * kappa / omega_rec {
        warnings.push(format!(
            "species one is not cold: 2T1/kappa = {} vs kappa/omega_rec = {}",
            2.0 * t1 / kappa,
            kappa / omega_rec
        ));
    }
    let margin = stability_margin(cavity, &pair).threshold_lhs;
    if margin > 0.5 {
        warnings.push(format!("ensembles are close to or above threshold (margin {margin})"));
    }
    let n1 = s1.n_particles as f64;
    let geometry = 4.0 * PI.sqrt() * delta * delta / (kappa * kappa + delta * delta).powi(2);
    let q_2_to_1 = n1
        * s2.pump.powi(2)
        * s1.pump.powi(2)
        * geometry
        * (omega_rec / t1).sqrt()
        * (1.0 - t2 / t1)
        * (1.0 + s1.mass * t2 / (s2.mass * t1)).powf(-1.5);
    let q_1_to_2 = -(s2.n_particles as f64 * s2.mass) / (n1 * s1.mass) * q_2_to_1;
    if !q_2_to_1.is_finite() {
        return Err(KineticsError::NoSolution(format!("heat flow is not finite: {q_2_to_1}")));
    }
    Ok(HeatFlow {
        q_2_to_1,
        q_1_to_2,
        warnings,
    })
}
