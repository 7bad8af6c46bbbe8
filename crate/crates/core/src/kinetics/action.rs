use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;

use super::{effective_detuning, KineticsError};
use crate::model::{CavityParams, SpeciesParams};
use crate::numerics::{bisect, integrate, periodic_mean};

const ACTION_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitKind {
    Trapped,
    Untrapped,
}

impl OrbitKind {
    /// Orbit type at energy `H` in the potential `−A cos θ`.
    pub fn classify(energy: f64, amplitude: f64) -> Self {
        if energy < amplitude {
            OrbitKind::Trapped
        } else {
            OrbitKind::Untrapped
        }
    }
}

/// Action of a particle of species `s` at energy `H` in the weak-coupling
/// potential `2η_s Re(α) sin kx`.
pub fn action(energy: f64, alpha: Complex64, s: &SpeciesParams) -> Result<f64, KineticsError> {
    action_in_well(energy, 2.0 * s.pump * alpha.re.abs(), s.mass)
}

/// `I = (1/2π)∮ p dx` at energy `H` in a cosine well of depth `A`.
///
/// Trapped orbits (`H < A`):
/// `I = (8/π)(mA)^{1/2} k² ∫₀^{π/2} cos²ψ (1 − k² sin²ψ)^{−1/2} dψ`, `k² = (H + A)/(2A)`.
/// Untrapped orbits:
/// `I = (2/π)(2m(H + A))^{1/2} ∫₀^{π/2} (1 − k'² sin²u)^{1/2} du`, `k'² = 2A/(H + A)`.
/// Both forms follow from substitutions that remove the turning-point
/// singularities.
pub fn action_in_well(energy: f64, amplitude: f64, mass: f64) -> Result<f64, KineticsError> {
    let a = amplitude;
    if energy < -a {
        return Err(KineticsError::BelowBottom {
            energy,
            minimum: -a,
        });
    }
    if a == 0.0 {
        return Ok((2.0 * mass * energy).sqrt());
    }
    let quad = |f: &dyn Fn(f64) -> f64| {
        integrate(f, 0.0, FRAC_PI_2, 0.0, ACTION_REL_TOL)
            .map_err(|source| KineticsError::Quadrature { species: 0, source })
    };
    match OrbitKind::classify(energy, a) {
        OrbitKind::Trapped => {
            let k2 = ((energy + a) / (2.0 * a)).min(1.0);
            if k2 == 0.0 {
                return Ok(0.0);
            }
            let integral = quad(&|psi: f64| {
                let (sn, cs) = psi.sin_cos();
                let root = (1.0 - k2 * sn * sn).max(0.0).sqrt().max(cs.abs());
                if root > 0.0 {
                    cs * cs / root
                } else {
                    0.0
                }
            })?;
            Ok(8.0 / PI * (mass * a).sqrt() * k2 * integral)
        }
        OrbitKind::Untrapped => {
            let k2 = 2.0 * a / (energy + a);
            let integral = quad(&|u: f64| (1.0 - k2 * u.sin().powi(2)).max(0.0).sqrt())?;
            Ok(2.0 / PI * (2.0 * mass * (energy + a)).sqrt() * integral)
        }
    }
}

/// `J = I/2` for trapped orbits and `J = I` for untrapped ones; continuous
/// across the separatrix and equal to `|p|` in the free limit.
pub fn reduced_action(energy: f64, amplitude: f64, mass: f64) -> Result<f64, KineticsError> {
    let i = action_in_well(energy, amplitude, mass)?;
    Ok(match OrbitKind::classify(energy, amplitude) {
        OrbitKind::Trapped => 0.5 * i,
        OrbitKind::Untrapped => i,
    })
}

/// Even one-dimensional momentum density.
pub trait MomentumDistribution {
    fn density(&self, p: f64) -> f64;
    /// Half-width beyond which the density is negligible.
    fn support(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maxwellian {
    pub mass: f64,
    pub temperature: f64,
}

impl Maxwellian {
    pub fn of(s: &SpeciesParams) -> Self {
        Self {
            mass: s.mass,
            temperature: s.temperature,
        }
    }
}

impl MomentumDistribution for Maxwellian {
    fn density(&self, p: f64) -> f64 {
        let var = self.mass * self.temperature;
        (-p * p / (2.0 * var)).exp() / (TAU * var).sqrt()
    }

    fn support(&self) -> f64 {
        12.0 * (self.mass * self.temperature).sqrt()
    }
}

/// Phase-space density reached by slowly switching on the potential
/// `2η Re(α) sin kx` in an initially uniform ensemble with momentum density
/// `f0`: `f(x, p) = f0(J(x, p))/2π`.
#[derive(Debug, Clone)]
pub struct AdiabaticMap<D> {
    f0: D,
    /// Coefficient `2η Re(α)` of `sin kx`.
    coupling: f64,
    mass: f64,
}

pub fn adiabatic_map<D: MomentumDistribution>(
    f0: D,
    alpha_final: Complex64,
    s: &SpeciesParams,
) -> AdiabaticMap<D> {
    AdiabaticMap {
        f0,
        coupling: 2.0 * s.pump * alpha_final.re,
        mass: s.mass,
    }
}

impl<D: MomentumDistribution> AdiabaticMap<D> {
    /// Well depth `A = 2η|Re α|`.
    pub fn amplitude(&self) -> f64 {
        self.coupling.abs()
    }

    fn potential(&self, x: f64) -> f64 {
        self.coupling * x.sin()
    }

    fn mapped(&self, x: f64, p: f64) -> Result<f64, KineticsError> {
        let energy = p * p / (2.0 * self.mass) + self.potential(x);
        // clamp rounding just below the well bottom
        let energy = energy.max(-self.amplitude());
        Ok(self.f0.density(reduced_action(energy, self.amplitude(), self.mass)?))
    }

    pub fn density(&self, x: f64, p: f64) -> Result<f64, KineticsError> {
        Ok(self.mapped(x, p)? / TAU)
    }

    /// `g(p) = ∫ f(x, p) dx` on the given momenta, by the periodic trapezoid
    /// rule with `nx` points.
    pub fn momentum_marginal(&self, momenta: &[f64], nx: usize) -> Result<Vec<f64>, KineticsError> {
        momenta
            .iter()
            .map(|&p| {
                let mut failure = None;
                let mean = periodic_mean(
                    |x| match self.mapped(x, p) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    },
                    nx,
                );
                failure.map_or(Ok(mean), Err)
            })
            .collect()
    }

    /// `|⟨sin kx⟩|` of the mapped state. The momentum integral at each
    /// position is split at the separatrix.
    pub fn order_parameter(&self, nx: usize) -> Result<f64, KineticsError> {
        let a = self.amplitude();
        let m = self.mass;
        let p_max = ((0.5 * PI * self.f0.support()).powi(2) + 4.0 * m * a).sqrt();
        let mut failure = None;
        let mut p_integral = |x: f64| -> f64 {
            let v = self.potential(x);
            let p_sep = (2.0 * m * (a - v)).max(0.0).sqrt();
            let f = |p: f64| self.mapped(x, p).unwrap_or(f64::NAN);
            let tol = 1e-12 * self.f0.density(0.0) * p_max;
            let inner = integrate(f, 0.0, p_sep, tol, 1e-10)
                .and_then(|t| integrate(f, p_sep, p_max, tol, 1e-10).map(|u| t + u));
            match inner {
                Ok(val) => 2.0 * val,
                Err(source) => {
                    failure.get_or_insert(KineticsError::Quadrature { species: 0, source });
                    0.0
                }
            }
        };
        let h = TAU / nx as f64;
        let (mut mass_sum, mut sin_sum) = (0.0, 0.0);
        for j in 0..nx {
            let x = j as f64 * h;
            let w = p_integral(x);
            mass_sum += w;
            sin_sum += w * x.sin();
        }
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((sin_sum / mass_sum).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticSteadyState {
    pub alpha: Complex64,
    pub delta: f64,
    pub order_parameters: Vec<f64>,
}

/// Self-consistent selforganised state of the adiabatic map: the positive
/// root of `a = |δ|/(κ² + δ²)·Σ_s N_s η_s θ_s(2η_s a)` for `a = |Re α|`, with
/// `θ_s` the order parameter of the mapped initial density `f0_s`.
pub fn adiabatic_steady_state<D: MomentumDistribution + Clone>(
    cavity: &CavityParams,
    species: &[SpeciesParams],
    initial: &[D],
) -> Result<AdiabaticSteadyState, KineticsError> {
    const NX: usize = 256;
    let delta = effective_detuning(cavity, species);
    if delta >= 0.0 {
        return Err(KineticsError::NotRedDetuned { delta });
    }
    let geometry = delta.abs() / (cavity.kappa.powi(2) + delta * delta);
    let thetas = |a: f64| -> Result<Vec<f64>, KineticsError> {
        species
            .iter()
            .zip(initial)
            .enumerate()
            .map(|(index, (s, f0))| {
                let alpha = Complex64::new(-a, 0.0);
                adiabatic_map(f0.clone(), alpha, s)
                    .order_parameter(NX)
                    .map_err(|e| match e {
                        KineticsError::Quadrature { source, .. } => {
                            KineticsError::Quadrature { species: index, source }
                        }
                        other => other,
                    })
            })
            .collect()
    };
    let source = |th: &[f64]| -> f64 {
        species
            .iter()
            .zip(th)
            .map(|(s, t)| s.n_particles as f64 * s.pump * t)
            .sum()
    };
    let a_max = geometry * source(&vec![1.0; species.len()]);
    if a_max == 0.0 {
        return Err(KineticsError::NoPump);
    }
    let mut failure = None;
    let mut balance = |a: f64| -> f64 {
        match thetas(a) {
            Ok(th) => geometry * source(&th) - a,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let mut hi = a_max;
    let mut lo = 0.5 * a_max;
    loop {
        let g = balance(lo);
        if g.is_nan() {
            break;
        }
        if g > 0.0 {
            break;
        }
        hi = lo;
        lo *= 0.5;
        if lo < 1e-12 * a_max {
            return Err(KineticsError::NoSolution(
                "no positive self-consistent field amplitude".into(),
            ));
        }
    }
    let root = bisect(&mut balance, lo, hi, 1e-9);
    if let Some(e) = failure {
        return Err(e);
    }
    let a = root.ok_or_else(|| KineticsError::NoSolution("root not bracketed".into()))?;
    let order_parameters = thetas(a)?;
    let total = source(&order_parameters);
    let alpha = Complex64::new(delta, -cavity.kappa) * total / (cavity.kappa.powi(2) + delta * delta);
    Ok(AdiabaticSteadyState {
        alpha,
        delta,
        order_parameters,
    })
}
