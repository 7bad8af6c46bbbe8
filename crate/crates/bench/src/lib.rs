//! Benchmark fixtures shared by the criterion targets.

use cavsim_core::{CavityParams, SimConfig, SpeciesParams};

/// Two-species organised configuration with 300 light and 200 heavy
/// particles.
pub fn organised_mixture() -> SimConfig {
    let species = vec![
        SpeciesParams::with_mass_ratio(300, 1.0, 600.0 / 300f64.sqrt(), 0.0, 100.0),
        SpeciesParams::with_mass_ratio(200, 10.0, 600.0 / 200f64.sqrt(), 0.0, 100.0),
    ];
    let cavity = CavityParams::new(100.0, -100.0).expect("valid cavity");
    let mut config = SimConfig::new(species, cavity, 1.0);
    config.dt = 2e-3;
    config
}

/// Single hot Maxwellian species at four times the threshold pump.
pub fn hot_species() -> (CavityParams, Vec<SpeciesParams>) {
    let cavity = CavityParams::new(100.0, -100.0).expect("valid cavity");
    let pump = (4.0 * 2.0 * 100.0 * 5e5 / 4000.0_f64).sqrt();
    (
        cavity,
        vec![SpeciesParams::with_mass_ratio(4000, 1.0, pump, 0.0, 5e5)],
    )
}
