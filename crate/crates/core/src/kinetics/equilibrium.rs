use std::f64::consts::TAU;

use num_complex::Complex64;

use super::threshold::stability_margin;
use super::{effective_detuning, equilibrium_temperature, KineticsError};
use crate::model::{CavityParams, SpeciesParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Homogeneous,
    Organised,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesEquilibrium {
    pub q: f64,
    /// `⟨p²⟩/m_s`; infinite for homogeneous states with `q ≥ 5/3`.
    pub kinetic_temperature: f64,
    /// `ω0_s = (4η_s ω_R,s |Re α|)^{1/2}`
    pub trap_frequency: f64,
    /// `|⟨sin kx⟩|`
    pub order_parameter: f64,
    /// `⟨sin² kx⟩`
    pub bunching: f64,
    /// `Δx·Δp = k_B T_kin/ω0` in units of `ħ`.
    pub uncertainty_product: Option<f64>,
    /// `Δx·Δp·ω0` per particle.
    pub energy: Option<f64>,
    /// Existence condition of the homogeneous state, `2δ < −ω_R,s`.
    pub exists: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPrediction {
    pub branch: Branch,
    /// Effective detuning of the equilibrium, including the bunching shift.
    pub delta: f64,
    /// `k_B T* = (κ² + δ²)/(4|δ|)`
    pub t_star: f64,
    pub alpha: Complex64,
    pub species: Vec<SpeciesEquilibrium>,
    /// Relative self-consistency residual `|F(α) − α|/max(1, |α|)`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Spatially uniform q-Gaussian equilibrium
/// `f_s ∝ exp_q(−p²/(2m_s k_B T*))` with `q_s = 1 + ω_R,s/|δ|`.
///
/// Fails for `δ ≥ 0` and when the state is above threshold at `T = T*`.
pub fn qgaussian_equilibrium(
    cavity: &CavityParams,
    species: &[SpeciesParams],
) -> Result<EquilibriumPrediction, KineticsError> {
    let delta = effective_detuning(cavity, species);
    if delta >= 0.0 {
        return Err(KineticsError::NotRedDetuned { delta });
    }
    let t_star = equilibrium_temperature(cavity.kappa, delta);
    let at_t_star: Vec<SpeciesParams> = species.iter().map(|s| s.at_temperature(t_star)).collect();
    let margin = stability_margin(cavity, &at_t_star).threshold_lhs;
    if margin > 1.0 {
        return Err(KineticsError::AboveThreshold { margin });
    }
    let per_species = species
        .iter()
        .map(|s| {
            let omega_r = s.recoil_frequency();
            let q = 1.0 + omega_r / delta.abs();
            let kinetic_temperature = if q < 5.0 / 3.0 {
                2.0 * t_star / (5.0 - 3.0 * q)
            } else {
                f64::INFINITY
            };
            SpeciesEquilibrium {
                q,
                kinetic_temperature,
                trap_frequency: 0.0,
                order_parameter: 0.0,
                bunching: 0.5,
                uncertainty_product: None,
                energy: None,
                exists: 2.0 * delta < -omega_r,
            }
        })
        .collect();
    Ok(EquilibriumPrediction {
        branch: Branch::Homogeneous,
        delta,
        t_star,
        alpha: Complex64::new(0.0, 0.0),
        species: per_species,
        residual: 0.0,
        iterations: 0,
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrganisedOptions {
    /// Relative convergence tolerance on `|F(α) − α|`.
    pub tol: f64,
    /// Fraction of the fixed-point update applied per iteration.
    pub damping: f64,
    pub max_iter: usize,
    /// Trapezoid points per spatial period for the Boltzmann averages.
    pub grid: usize,
}

impl Default for OrganisedOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            damping: 0.5,
            max_iter: 10_000,
            grid: 4096,
        }
    }
}

/// Selforganised Maxwell-Boltzmann equilibrium with default options and the
/// given tolerance.
pub fn organised_equilibrium(
    cavity: &CavityParams,
    species: &[SpeciesParams],
    tol: f64,
) -> Result<EquilibriumPrediction, KineticsError> {
    organised_equilibrium_with(
        cavity,
        species,
        &OrganisedOptions {
            tol,
            ..OrganisedOptions::default()
        },
    )
}

/// Damped fixed-point solution of the coupled field and temperature
/// equations of the organised branch.
///
/// For a trial field `α` each species is assigned
/// `k_B T_kin,s = k_B T*(δ) + ω0_s²/|δ|` and Boltzmann averages under
/// `exp(−Φ_s/k_B T_kin,s)`; the steady-state field equation then yields
/// `F(α) = −i Σ_s N_s η_s ⟨sin kx⟩_s/(κ − iδ)` with
/// `δ = Δ_c − Σ_s N_s U0_s ⟨sin² kx⟩_s`. The reported branch has `Re α ≤ 0`.
pub fn organised_equilibrium_with(
    cavity: &CavityParams,
    species: &[SpeciesParams],
    options: &OrganisedOptions,
) -> Result<EquilibriumPrediction, KineticsError> {
    let delta0 = effective_detuning(cavity, species);
    if delta0 >= 0.0 {
        return Err(KineticsError::NotRedDetuned { delta: delta0 });
    }
    if species.iter().all(|s| s.pump == 0.0 || s.n_particles == 0) {
        return Err(KineticsError::NoPump);
    }
    let total_pump: f64 = species.iter().map(|s| s.n_particles as f64 * s.pump).sum();
    let mut delta =
        cavity.detuning - species.iter().map(|s| s.n_particles as f64 * s.light_shift).sum::<f64>();
    if delta >= 0.0 {
        delta = delta0;
    }
    let mut alpha = Complex64::new(0.0, -total_pump) / Complex64::new(cavity.kappa, -delta);
    if alpha.re > 0.0 {
        alpha = -alpha;
    }
    let scale = total_pump / cavity.kappa;

    let mut iterations = 0;
    loop {
        let eval = evaluate(cavity, species, alpha, delta, options.grid)?;
        let residual = ((eval.next - alpha).norm() / alpha.norm().max(1.0))
            .max((eval.next_delta - delta).abs() / delta.abs().max(1.0));
        let converged = residual < options.tol;
        if converged || iterations >= options.max_iter {
            let prediction = EquilibriumPrediction {
                branch: Branch::Organised,
                delta,
                t_star: eval.t_star,
                alpha,
                species: eval.species,
                residual,
                iterations,
                converged,
            };
            if converged {
                return Ok(prediction);
            }
            return Err(KineticsError::NotConverged {
                iterations,
                residual,
                last: Box::new(prediction),
            });
        }
        alpha += options.damping * (eval.next - alpha);
        delta += options.damping * (eval.next_delta - delta);
        iterations += 1;
        if alpha.norm() < 1e-9 * scale.max(1.0) {
            return Err(KineticsError::Collapsed);
        }
        if delta >= 0.0 {
            return Err(KineticsError::NoSolution(format!(
                "bunching shift drives the detuning to {delta}"
            )));
        }
    }
}

struct Evaluation {
    t_star: f64,
    next: Complex64,
    next_delta: f64,
    species: Vec<SpeciesEquilibrium>,
}

/// Species averages at field `α` and detuning `δ`, and the resulting updated
/// field and detuning.
fn evaluate(
    cavity: &CavityParams,
    species: &[SpeciesParams],
    alpha: Complex64,
    delta: f64,
    grid: usize,
) -> Result<Evaluation, KineticsError> {
    let t_star = equilibrium_temperature(cavity.kappa, delta);
    let mut source = 0.0;
    let mut shift = 0.0;
    let mut out = Vec::with_capacity(species.len());
    for s in species {
        let omega0_sq = 4.0 * s.pump * s.recoil_frequency() * alpha.re.abs();
        let omega0 = omega0_sq.sqrt();
        let t_kin = t_star + omega0_sq / delta.abs();
        let (mean_sin, mean_sin2) = boltzmann_moments(s, alpha, t_kin, grid);
        source += s.n_particles as f64 * s.pump * mean_sin;
        shift += s.n_particles as f64 * s.light_shift * mean_sin2;
        let product = (omega0 > 0.0).then(|| t_kin / omega0);
        out.push(SpeciesEquilibrium {
            q: 1.0,
            kinetic_temperature: t_kin,
            trap_frequency: omega0,
            order_parameter: mean_sin.abs(),
            bunching: mean_sin2,
            uncertainty_product: product,
            energy: product.map(|p| p * omega0),
            exists: true,
        });
    }
    let next_delta = cavity.detuning - shift;
    let next = Complex64::new(0.0, -source) / Complex64::new(cavity.kappa, -next_delta);
    Ok(Evaluation {
        t_star,
        next,
        next_delta,
        species: out,
    })
}

/// `(⟨sin kx⟩, ⟨sin² kx⟩)` under `exp(−Φ_s(x)/T)` by the periodic trapezoid
/// rule.
fn boltzmann_moments(s: &SpeciesParams, alpha: Complex64, temperature: f64, grid: usize) -> (f64, f64) {
    let a = 2.0 * s.pump * alpha.re;
    let b = s.light_shift * alpha.norm_sqr();
    let h = TAU / grid as f64;
    let phi = |x: f64| {
        let sn = x.sin();
        a * sn + b * sn * sn
    };
    let floor = (0..grid).map(|j| phi(j as f64 * h)).fold(f64::INFINITY, f64::min);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for j in 0..grid {
        let sn = (j as f64 * h).sin();
        let w = (-(a * sn + b * sn * sn - floor) / temperature).exp();
        z += w;
        m1 += w * sn;
        m2 += w * sn * sn;
    }
    (m1 / z, m2 / z)
}
