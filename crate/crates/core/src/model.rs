//! Unit system, domain types and single-particle optical potential.
//!
//! Everything is expressed in natural units: `ħ = 1`, the mode wavenumber
//! `k = 1` and the recoil frequency of the first (reference) species
//! `ω_rec = ħk²/(2m₁) = 1`, so `m₁ = 1/2`. Times are in `1/ω_rec`, rates in
//! `ω_rec`, momenta in `ħk`, positions in `1/k` and energies in `ħω_rec`.
//! Temperatures are quoted as `k_B T` in energy units.

use std::f64::consts::TAU;

use num_complex::Complex64;
use thiserror::Error;

/// Mass of the unit-defining reference species.
pub const REFERENCE_MASS: f64 = 0.5;

/// Errors raised when constructing or validating model parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("species {index}: {message}")]
    Species { index: usize, message: String },
    #[error("cavity: {0}")]
    Cavity(String),
    #[error("simulation: {0}")]
    Sim(String),
}

/// Physical constants of one particle species.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesParams {
    pub n_particles: usize,
    pub mass: f64,
    /// Effective pump amplitude `η_s`.
    pub pump: f64,
    /// Light shift per photon `U0_s`.
    pub light_shift: f64,
    /// Initial (or ensemble) temperature `k_B T_s`.
    pub temperature: f64,
}

impl SpeciesParams {
    /// Species whose mass is given relative to the reference species.
    pub fn with_mass_ratio(
        n_particles: usize,
        mass_ratio: f64,
        pump: f64,
        light_shift: f64,
        temperature: f64,
    ) -> Self {
        Self {
            n_particles,
            mass: REFERENCE_MASS * mass_ratio,
            pump,
            light_shift,
            temperature,
        }
    }

    pub fn mass_ratio(&self) -> f64 {
        self.mass / REFERENCE_MASS
    }

    /// Recoil frequency `ω_R,s = ħk²/(2m_s)`.
    pub fn recoil_frequency(&self) -> f64 {
        1.0 / (2.0 * self.mass)
    }

    /// Thermal velocity `v_s` defined through `k_B T_s = m_s v_s²/2`.
    pub fn thermal_velocity(&self) -> f64 {
        (2.0 * self.temperature / self.mass).sqrt()
    }

    /// Same species at a different temperature.
    pub fn at_temperature(&self, temperature: f64) -> Self {
        Self {
            temperature,
            ..self.clone()
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), ModelError> {
        let fail = |message: &str| {
            Err(ModelError::Species {
                index,
                message: message.to_string(),
            })
        };
        if self.n_particles < 1 {
            return fail("n_particles must be at least 1");
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return fail("mass must be positive and finite");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return fail("temperature must be positive and finite");
        }
        if !(self.pump.is_finite() && self.pump >= 0.0) {
            return fail("pump must be non-negative and finite");
        }
        if !self.light_shift.is_finite() {
            return fail("light_shift must be finite");
        }
        Ok(())
    }
}

/// Cavity mode parameters. The wavenumber is fixed to one by the unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    /// Field decay rate `κ`.
    pub kappa: f64,
    /// Pump-cavity detuning `Δ_c = ω_p − ω_c`.
    pub detuning: f64,
}

impl CavityParams {
    pub fn new(kappa: f64, detuning: f64) -> Result<Self, ModelError> {
        let cavity = Self { kappa, detuning };
        cavity.validate()?;
        Ok(cavity)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(ModelError::Cavity("kappa must be positive".into()));
        }
        if !self.detuning.is_finite() {
            return Err(ModelError::Cavity("detuning must be finite".into()));
        }
        Ok(())
    }
}

/// Phase-space coordinates of all particles of one species.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeciesState {
    /// Wrapped phases `kx ∈ [0, 2π)`.
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
}

/// Full simulation state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub species: Vec<SpeciesState>,
    pub alpha: Complex64,
    pub time: f64,
}

impl SimState {
    pub fn photon_number(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    /// Checks array lengths against the configuration and the phase range.
    pub fn check_shape(&self, species: &[SpeciesParams]) -> Result<(), ModelError> {
        if self.species.len() != species.len() {
            return Err(ModelError::Sim(format!(
                "state holds {} species, configuration {}",
                self.species.len(),
                species.len()
            )));
        }
        for (index, (state, params)) in self.species.iter().zip(species).enumerate() {
            if state.positions.len() != params.n_particles
                || state.momenta.len() != params.n_particles
            {
                return Err(ModelError::Species {
                    index,
                    message: "array length does not match n_particles".into(),
                });
            }
            if state.positions.iter().any(|x| !(0.0..TAU).contains(x)) {
                return Err(ModelError::Species {
                    index,
                    message: "position outside [0, 2π)".into(),
                });
            }
        }
        Ok(())
    }
}

/// Initial-condition descriptor: uniform positions with an optional
/// `(1 + ε sin kx)` density perturbation, Maxwellian momenta.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialCondition {
    pub perturbation: f64,
}

/// Everything needed to integrate one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub species: Vec<SpeciesParams>,
    pub cavity: CavityParams,
    pub dt: f64,
    pub duration: f64,
    /// Record observables every `stride` steps.
    pub stride: usize,
    pub noise: bool,
    pub seed: Option<u64>,
    pub initial: InitialCondition,
}

impl SimConfig {
    /// Configuration with the default timestep and stride 1.
    pub fn new(species: Vec<SpeciesParams>, cavity: CavityParams, duration: f64) -> Self {
        let dt = default_timestep(&cavity, &species);
        Self {
            species,
            cavity,
            dt,
            duration,
            stride: 1,
            noise: true,
            seed: None,
            initial: InitialCondition::default(),
        }
    }

    pub fn n_steps(&self) -> usize {
        let ratio = self.duration / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() < 1e-6 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.cavity.validate()?;
        for (index, s) in self.species.iter().enumerate() {
            s.validate(index)?;
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ModelError::Sim("dt must be positive".into()));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(ModelError::Sim("duration must be non-negative".into()));
        }
        if self.stride < 1 {
            return Err(ModelError::Sim("stride must be at least 1".into()));
        }
        let eps = self.initial.perturbation;
        if !(0.0..1.0).contains(&eps) {
            return Err(ModelError::Sim(
                "perturbation must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Default timestep: `κ·dt ≤ 0.1` and `ω₀,max·dt ≤ 0.05`, where `ω₀,max` is
/// the trap frequency reached if every species were perfectly ordered.
pub fn default_timestep(cavity: &CavityParams, species: &[SpeciesParams]) -> f64 {
    let mut dt = 0.1 / cavity.kappa;
    let source: f64 = species
        .iter()
        .map(|s| s.n_particles as f64 * s.pump)
        .sum();
    let delta = cavity.detuning
        - 0.5
            * species
                .iter()
                .map(|s| s.n_particles as f64 * s.light_shift)
                .sum::<f64>();
    let alpha_max = source / (cavity.kappa.powi(2) + delta.powi(2)).sqrt();
    for s in species {
        let omega0 = (4.0 * s.pump * s.recoil_frequency() * alpha_max).sqrt();
        if omega0 > 0.0 {
            dt = dt.min(0.05 / omega0);
        }
    }
    dt
}

/// Wraps a phase into `[0, 2π)`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Optical potential `ħη(α+α*) sin kx + ħU0|α|² sin² kx`.
pub fn potential(phase: f64, alpha: Complex64, s: &SpeciesParams) -> f64 {
    let sin = phase.sin();
    2.0 * s.pump * alpha.re * sin + s.light_shift * alpha.norm_sqr() * sin * sin
}

/// Force `−∂Φ/∂x` on one particle.
pub fn force(phase: f64, alpha: Complex64, s: &SpeciesParams) -> f64 {
    let (sin, cos) = phase.sin_cos();
    -2.0 * s.pump * alpha.re * cos - 2.0 * s.light_shift * alpha.norm_sqr() * sin * cos
}

/// One-particle Hamiltonian `p²/(2m) + Φ`.
pub fn hamiltonian(phase: f64, momentum: f64, alpha: Complex64, s: &SpeciesParams) -> f64 {
    momentum * momentum / (2.0 * s.mass) + potential(phase, alpha, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn species(pump: f64, light_shift: f64) -> SpeciesParams {
        SpeciesParams::with_mass_ratio(1, 1.0, pump, light_shift, 1.0)
    }

    #[test]
    fn potential_examples() {
        let s = species(1.3, -0.7);
        assert_eq!(potential(0.7, Complex64::new(0.0, 0.0), &s), 0.0);
        assert_eq!(potential(0.0, Complex64::new(3.0, 2.0), &s), 0.0);
        let a = potential(FRAC_PI_2, Complex64::new(1.0, 0.0), &species(1.0, 0.0));
        assert!((a - 2.0).abs() < 1e-15);
        let b = potential(FRAC_PI_2, Complex64::new(0.0, 1.0), &species(5.0, -0.1));
        assert!((b + 0.1).abs() < 1e-15);
    }

    #[test]
    fn force_examples() {
        let s = species(2.0, 0.0);
        assert!(force(FRAC_PI_2, Complex64::new(3.0, 0.0), &s).abs() < 1e-14);
        assert_eq!(force(1.1, Complex64::new(0.0, 0.0), &species(2.0, -1.0)), 0.0);
    }

    #[test]
    fn hamiltonian_examples() {
        let s = species(1.0, -1.0);
        assert!((hamiltonian(0.3, 1.0, Complex64::new(0.0, 0.0), &s) - 1.0).abs() < 1e-15);
        assert_eq!(hamiltonian(0.0, 0.0, Complex64::new(4.0, -1.0), &s), 0.0);
    }

    #[test]
    fn reference_units() {
        let s = species(0.0, 0.0);
        assert_eq!(s.mass, 0.5);
        assert_eq!(s.recoil_frequency(), 1.0);
        let heavy = SpeciesParams::with_mass_ratio(1, 40.0, 0.0, 0.0, 1.0);
        assert!((heavy.recoil_frequency() - 1.0 / 40.0).abs() < 1e-15);
        assert!((heavy.recoil_frequency() * heavy.mass - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(CavityParams::new(0.0, -1.0).is_err());
        assert!(SpeciesParams::with_mass_ratio(0, 1.0, 1.0, 0.0, 1.0).validate(0).is_err());
        assert!(SpeciesParams::with_mass_ratio(1, 1.0, -1.0, 0.0, 1.0).validate(0).is_err());
        assert!(SpeciesParams::with_mass_ratio(1, 1.0, 1.0, 0.0, 0.0).validate(0).is_err());
        let mut cfg = SimConfig::new(
            vec![species(1.0, 0.0)],
            CavityParams::new(1.0, -1.0).unwrap(),
            1.0,
        );
        cfg.initial.perturbation = 1.0;
        assert!(cfg.validate().is_err());
        cfg.initial.perturbation = 0.5;
        assert!(cfg.validate().is_ok());
        cfg.stride = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wrap_phase_range() {
        for x in [-1e-300, -TAU, -0.1, 0.0, TAU, 3.0 * TAU + 0.5, 1e6] {
            let y = wrap_phase(x);
            assert!((0.0..TAU).contains(&y), "{x} -> {y}");
        }
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn force_matches_finite_difference(
            x in 0.0..TAU,
            re in -50.0..50.0f64,
            im in -50.0..50.0f64,
            pump in 0.0..20.0f64,
            shift in -2.0..0.5f64,
        ) {
            let s = species(pump, shift);
            let alpha = Complex64::new(re, im);
            let h = 1e-5;
            let fd = -(potential(x + h, alpha, &s) - potential(x - h, alpha, &s)) / (2.0 * h);
            let f = force(x, alpha, &s);
            let scale = 2.0 * pump * re.abs() + 2.0 * shift.abs() * alpha.norm_sqr() + 1e-12;
            prop_assert!((f - fd).abs() <= 1e-6 * scale, "f={f} fd={fd}");
        }

        #[test]
        fn potential_is_periodic(x in 0.0..TAU, re in -10.0..10.0f64, im in -10.0..10.0f64) {
            let s = species(1.7, -0.3);
            let alpha = Complex64::new(re, im);
            let a = potential(x, alpha, &s);
            let b = potential(wrap_phase(x + TAU), alpha, &s);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn potential_depends_on_real_part_only_without_light_shift(
            x in 0.0..TAU, re in -10.0..10.0f64, im1 in -10.0..10.0f64, im2 in -10.0..10.0f64,
        ) {
            let s = species(2.3, 0.0);
            prop_assert_eq!(
                potential(x, Complex64::new(re, im1), &s),
                potential(x, Complex64::new(re, im2), &s)
            );
        }

        #[test]
        fn hamiltonian_is_kinetic_plus_potential(
            x in 0.0..TAU, p in -100.0..100.0f64, re in -5.0..5.0f64, im in -5.0..5.0f64,
        ) {
            let s = SpeciesParams::with_mass_ratio(1, 7.0, 1.5, -0.2, 1.0);
            let alpha = Complex64::new(re, im);
            let kinetic = p * p / (2.0 * 3.5);
            let h = hamiltonian(x, p, alpha, &s);
            prop_assert!((h - kinetic - potential(x, alpha, &s)).abs() <= 1e-12 * (1.0 + h.abs()));
        }
    }
}
