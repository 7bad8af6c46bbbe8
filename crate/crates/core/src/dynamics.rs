//! Stochastic integration of the coupled particle and cavity-field equations.
//!
//! Each particle obeys Newton's equations in the optical potential
//! [`potential`](crate::model::potential) while the field follows
//!
//! ```text
//! dα/dt = (−κ + iΔ_c)α − i Σ_s Σ_j [U0_s α sin²(kx_j) + η_s sin(kx_j)] − √κ ξ(t)
//! ```
//!
//! with complex white noise `⟨ξ(t)ξ*(t')⟩ = δ(t−t')`, `⟨ξξ⟩ = 0`.
//!
//! A step of length `dt` is the palindromic splitting
//! `F(dt/2) K(dt/2) D(dt) K(dt/2) F(dt/2)`: `F` advances the field with the
//! particle sums frozen (exact Ornstein-Uhlenbeck update including noise),
//! `K` kicks momenta at frozen field and `D` drifts positions. Every sub-flow
//! is solved exactly, so the deterministic part is second order in `dt`, and
//! only one `sin_cos` per particle is evaluated per step.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{ModelError, SimConfig, SimState, SpeciesState};
use crate::numerics::sin_cos_reduced;
use crate::observables::Histogram;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },
    #[error("realisation {index} (base seed {base_seed}) failed: {source}")]
    Realisation {
        index: u64,
        base_seed: u64,
        source: Box<DynamicsError>,
    },
    #[error("recorder: {0}")]
    Recorder(String),
}

/// Momentum magnitude beyond which a trajectory is declared divergent.
pub const MOMENTUM_LIMIT: f64 = 1e6;

/// Random stream of realisation `index` for a base seed.
///
/// The generator is ChaCha8 seeded with `base_seed`, using `index` as the
/// stream number. A single run with seed `s` is realisation 0 of base seed
/// `s`.
pub fn realisation_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Draws the initial state: uniform (optionally perturbed) positions,
/// Maxwellian momenta, empty cavity.
pub fn sample_initial(config: &SimConfig, seed: u64) -> Result<SimState, DynamicsError> {
    sample_initial_with(config, &mut realisation_rng(seed, 0))
}

pub fn sample_initial_with<R: Rng>(
    config: &SimConfig,
    rng: &mut R,
) -> Result<SimState, DynamicsError> {
    config.validate()?;
    let eps = config.initial.perturbation;
    let species = config
        .species
        .iter()
        .map(|s| {
            let positions = (0..s.n_particles)
                .map(|_| loop {
                    let x = rng.random::<f64>() * TAU;
                    // rejection sampling of (1 + ε sin x)
                    if eps == 0.0 || rng.random::<f64>() * (1.0 + eps) < 1.0 + eps * x.sin() {
                        break x;
                    }
                })
                .collect();
            let maxwell = Normal::new(0.0, (s.mass * s.temperature).sqrt())
                .expect("validated temperature");
            let momenta = (0..s.n_particles).map(|_| maxwell.sample(rng)).collect();
            SpeciesState { positions, momenta }
        })
        .collect();
    Ok(SimState {
        species,
        alpha: Complex64::new(0.0, 0.0),
        time: 0.0,
    })
}

/// `(eᶻ − 1)/z`, accurate near zero.
fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        Complex64::new(1.0, 0.0) + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Stepper holding per-particle trigonometric caches and the collective
/// source sums for one configuration.
pub struct Integrator<'a> {
    config: &'a SimConfig,
    sin: Vec<Vec<f64>>,
    cos: Vec<Vec<f64>>,
    synced_time: Option<f64>,
    /// Σ_s η_s Σ_j sin(kx_j)
    pump_sum: f64,
    /// Σ_s U0_s Σ_j sin²(kx_j)
    shift_sum: f64,
    noise_sigma: f64,
    alpha_limit: f64,
    frozen_field: bool,
}

impl<'a> Integrator<'a> {
    pub fn new(config: &'a SimConfig) -> Self {
        let kappa = config.cavity.kappa;
        let h = 0.5 * config.dt;
        // per-quadrature standard deviation for a half step
        let noise_sigma = if config.noise && kappa > 0.0 {
            (-(-2.0 * kappa * h).exp_m1() / 4.0).sqrt()
        } else {
            0.0
        };
        let source: f64 = config
            .species
            .iter()
            .map(|s| s.n_particles as f64 * s.pump)
            .sum();
        let scale = if kappa > 0.0 { source / kappa } else { source };
        let alpha_limit = 1e4 * scale.powi(2).max(1.0);
        Self {
            config,
            sin: config.species.iter().map(|s| vec![0.0; s.n_particles]).collect(),
            cos: config.species.iter().map(|s| vec![0.0; s.n_particles]).collect(),
            synced_time: None,
            pump_sum: 0.0,
            shift_sum: 0.0,
            noise_sigma,
            alpha_limit,
            frozen_field: false,
        }
    }

    /// Keeps `α` fixed; only the particles move.
    pub fn with_frozen_field(mut self) -> Self {
        self.frozen_field = true;
        self
    }

    /// Recomputes the caches from `state`. Called automatically when the
    /// state was not produced by the previous step of this integrator.
    pub fn sync(&mut self, state: &SimState) {
        let mut pump_sum = 0.0;
        let mut shift_sum = 0.0;
        for (s, params) in self.config.species.iter().enumerate() {
            let mut sum_sin = 0.0;
            let mut sum_sin2 = 0.0;
            for (j, &x) in state.species[s].positions.iter().enumerate() {
                let (sn, cs) = x.sin_cos();
                self.sin[s][j] = sn;
                self.cos[s][j] = cs;
                sum_sin += sn;
                sum_sin2 += sn * sn;
            }
            pump_sum += params.pump * sum_sin;
            shift_sum += params.light_shift * sum_sin2;
        }
        self.pump_sum = pump_sum;
        self.shift_sum = shift_sum;
        self.synced_time = Some(state.time);
    }

    fn field_substep<R: Rng>(&self, alpha: Complex64, h: f64, rng: &mut R) -> Complex64 {
        let cavity = &self.config.cavity;
        let lambda = Complex64::new(-cavity.kappa, cavity.detuning - self.shift_sum);
        let z = lambda * h;
        let source = Complex64::new(0.0, -self.pump_sum);
        let mut next = z.exp() * alpha + phi1(z) * h * source;
        if self.noise_sigma > 0.0 {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            next += Complex64::new(re, im) * self.noise_sigma;
        }
        next
    }

    /// Kick-drift-kick at fixed `α`. Each particle only feels its own
    /// position, so the three sub-steps are fused per particle. Returns the
    /// largest `|p|`.
    fn particles(&mut self, state: &mut SimState, dt: f64) -> f64 {
        let h = 0.5 * dt;
        let alpha = state.alpha;
        let mut max_p = 0.0f64;
        let mut pump_sum = 0.0;
        let mut shift_sum = 0.0;
        for (s, params) in self.config.species.iter().enumerate() {
            let c1 = -2.0 * params.pump * alpha.re * h;
            let c2 = -2.0 * params.light_shift * alpha.norm_sqr() * h;
            let velocity_scale = dt / params.mass;
            let species = &mut state.species[s];
            let (sin, cos) = (&mut self.sin[s][..], &mut self.cos[s][..]);
            let n = species.positions.len();
            let (xs, ps) = (&mut species.positions[..n], &mut species.momenta[..n]);
            let (sin, cos) = (&mut sin[..n], &mut cos[..n]);
            let mut stray = false;
            for j in 0..n {
                let q = ps[j] + cos[j] * (c1 + c2 * sin[j]);
                let y = xs[j] + q * velocity_scale;
                let y = if y >= TAU { y - TAU } else { y };
                let y = if y < 0.0 { y + TAU } else { y };
                let inside = y * (TAU - y) > 0.0;
                stray |= !inside;
                let (sn, cs) = sin_cos_reduced(y);
                xs[j] = y;
                ps[j] = q + cs * (c1 + c2 * sn);
                sin[j] = sn;
                cos[j] = cs;
            }
            if stray {
                for (j, x) in xs.iter_mut().enumerate() {
                    if !(0.0..TAU).contains(x) {
                        *x = crate::model::wrap_phase(*x);
                        (sin[j], cos[j]) = x.sin_cos();
                    }
                }
            }
            let (sum_sin, sum_sin2, largest) = moments(sin, ps);
            pump_sum += params.pump * sum_sin;
            shift_sum += params.light_shift * sum_sin2;
            max_p = max_p.max(largest);
        }
        self.pump_sum = pump_sum;
        self.shift_sum = shift_sum;
        max_p
    }

    /// Advances `state` by one timestep `config.dt`.
    pub fn step<R: Rng>(&mut self, state: &mut SimState, rng: &mut R) -> Result<(), DynamicsError> {
        if self.synced_time != Some(state.time) {
            self.sync(state);
        }
        let dt = self.config.dt;
        let h = 0.5 * dt;
        if !self.frozen_field {
            state.alpha = self.field_substep(state.alpha, h, rng);
        }
        let max_p = self.particles(state, dt);
        if !self.frozen_field {
            state.alpha = self.field_substep(state.alpha, h, rng);
        }
        state.time += dt;
        self.synced_time = Some(state.time);
        let photons = state.alpha.norm_sqr();
        if !(max_p <= MOMENTUM_LIMIT && photons.is_finite() && photons <= self.alpha_limit) {
            return Err(DynamicsError::Divergence { time: state.time });
        }
        Ok(())
    }

    /// `(⟨sin kx⟩, ⟨sin² kx⟩)` of species `s` at the last synced state.
    pub fn position_moments(&self, s: usize) -> (f64, f64) {
        let sin = &self.sin[s];
        let n = sin.len().max(1) as f64;
        let (a, b) = sin
            .iter()
            .fold((0.0, 0.0), |(a, b), &v| (a + v, b + v * v));
        (a / n, b / n)
    }
}

/// `(Σ sin, Σ sin², max |p|)` with four interleaved accumulators.
fn moments(sin: &[f64], p: &[f64]) -> (f64, f64, f64) {
    let mut a = [0.0; 4];
    let mut b = [0.0; 4];
    let mut m = [0.0f64; 4];
    let (sc, sr) = sin.split_at(sin.len() / 4 * 4);
    let (pc, pr) = p.split_at(sc.len());
    for (s4, p4) in sc.chunks_exact(4).zip(pc.chunks_exact(4)) {
        for l in 0..4 {
            a[l] += s4[l];
            b[l] += s4[l] * s4[l];
            let q = p4[l].abs();
            m[l] = if q > m[l] || q.is_nan() { q } else { m[l] };
        }
    }
    for (&s, &q) in sr.iter().zip(pr) {
        a[0] += s;
        b[0] += s * s;
        let q = q.abs();
        m[0] = if q > m[0] || q.is_nan() { q } else { m[0] };
    }
    let nan = m.iter().any(|v| v.is_nan());
    let largest = if nan { f64::NAN } else { m.iter().fold(0.0f64, |x, &y| x.max(y)) };
    ((a[0] + a[1]) + (a[2] + a[3]), (b[0] + b[1]) + (b[2] + b[3]), largest)
}

/// Advances a copy of `state` by one step of `config.dt`.
pub fn step<R: Rng>(
    state: &SimState,
    config: &SimConfig,
    rng: &mut R,
) -> Result<SimState, DynamicsError> {
    let mut next = state.clone();
    Integrator::new(config).step(&mut next, rng)?;
    Ok(next)
}

/// Observable recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    PhotonNumber,
    ReAlpha,
    ImAlpha,
    /// `θ_s = |⟨sin kx⟩_s|`, one column per species.
    OrderParameter,
    /// `⟨p²⟩_s/m_s`, one column per species.
    KineticTemperature,
    /// `⟨sin² kx⟩_s`, one column per species.
    Bunching,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::PhotonNumber,
        Channel::ReAlpha,
        Channel::ImAlpha,
        Channel::OrderParameter,
        Channel::KineticTemperature,
        Channel::Bunching,
    ];

    pub fn per_species(self) -> bool {
        matches!(
            self,
            Channel::OrderParameter | Channel::KineticTemperature | Channel::Bunching
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::PhotonNumber => "photons",
            Channel::ReAlpha => "re_alpha",
            Channel::ImAlpha => "im_alpha",
            Channel::OrderParameter => "theta",
            Channel::KineticTemperature => "tkin",
            Channel::Bunching => "bunching",
        }
    }

    /// Column name; species are numbered from one.
    pub fn column_name(self, species: Option<usize>) -> String {
        match species {
            Some(s) => format!("{}_{}", self.label(), s + 1),
            None => self.label().to_string(),
        }
    }
}

/// Which observables to sample and how often.
#[derive(Debug, Clone, PartialEq)]
pub struct Recorder {
    pub stride: usize,
    pub channels: Vec<Channel>,
    /// Times at which full phase-space snapshots are kept.
    pub snapshot_times: Vec<f64>,
}

impl Recorder {
    pub fn new(stride: usize) -> Self {
        Self {
            stride,
            channels: Channel::ALL.to_vec(),
            snapshot_times: Vec::new(),
        }
    }

    pub fn with_channels(mut self, channels: &[Channel]) -> Self {
        self.channels = channels.to_vec();
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.stride < 1 {
            return Err(DynamicsError::Recorder("stride must be at least 1".into()));
        }
        if self.channels.is_empty() {
            return Err(DynamicsError::Recorder("no channels selected".into()));
        }
        Ok(())
    }

    fn columns(&self, n_species: usize) -> Vec<(Channel, Option<usize>)> {
        let mut cols = Vec::new();
        for &c in &self.channels {
            if c.per_species() {
                cols.extend((0..n_species).map(|s| (c, Some(s))));
            } else {
                cols.push((c, None));
            }
        }
        cols
    }
}

/// One recorded column.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub channel: Channel,
    pub species: Option<usize>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn name(&self) -> String {
        self.channel.column_name(self.species)
    }
}

/// Observables of one trajectory on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub series: Vec<Series>,
    pub seed: u64,
    pub config: SimConfig,
    pub snapshots: Vec<SimState>,
    pub final_state: SimState,
}

impl TimeSeries {
    pub fn get(&self, channel: Channel, species: Option<usize>) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|s| s.channel == channel && s.species == species)
            .map(|s| s.values.as_slice())
    }
}

fn observe(
    columns: &[(Channel, Option<usize>)],
    state: &SimState,
    integrator: &Integrator,
    config: &SimConfig,
) -> Vec<f64> {
    columns
        .iter()
        .map(|&(channel, species)| match (channel, species) {
            (Channel::PhotonNumber, _) => state.alpha.norm_sqr(),
            (Channel::ReAlpha, _) => state.alpha.re,
            (Channel::ImAlpha, _) => state.alpha.im,
            (Channel::OrderParameter, Some(s)) => integrator.position_moments(s).0.abs(),
            (Channel::Bunching, Some(s)) => integrator.position_moments(s).1,
            (Channel::KineticTemperature, Some(s)) => {
                crate::observables::species_kinetic_temperature(
                    &state.species[s],
                    config.species[s].mass,
                )
            }
            _ => unreachable!("per-species channel without species"),
        })
        .collect()
}

/// Integrates one trajectory from a freshly sampled initial state.
pub fn run(config: &SimConfig, seed: u64, recorder: &Recorder) -> Result<TimeSeries, DynamicsError> {
    run_stream(config, seed, 0, recorder)
}

fn run_stream(
    config: &SimConfig,
    base_seed: u64,
    stream: u64,
    recorder: &Recorder,
) -> Result<TimeSeries, DynamicsError> {
    config.validate()?;
    recorder.validate()?;
    let mut rng = realisation_rng(base_seed, stream);
    let state = sample_initial_with(config, &mut rng)?;
    run_from(config, state, &mut rng, recorder, base_seed)
}

/// Integrates from a given initial state with a caller-supplied generator.
pub fn run_from<R: Rng>(
    config: &SimConfig,
    mut state: SimState,
    rng: &mut R,
    recorder: &Recorder,
    seed: u64,
) -> Result<TimeSeries, DynamicsError> {
    config.validate()?;
    recorder.validate()?;
    state.check_shape(&config.species)?;
    let columns = recorder.columns(config.species.len());
    let mut integrator = Integrator::new(config);
    integrator.sync(&state);
    let n_steps = config.n_steps();
    let capacity = n_steps / recorder.stride + 1;
    let mut times = Vec::with_capacity(capacity);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(capacity); columns.len()];
    let mut snapshots = Vec::new();
    let mut pending_snapshots: Vec<f64> = recorder.snapshot_times.clone();
    pending_snapshots.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;

    for step_index in 0..=n_steps {
        if step_index > 0 {
            integrator.step(&mut state, rng)?;
        }
        while next_snapshot < pending_snapshots.len()
            && state.time >= pending_snapshots[next_snapshot] - 0.5 * config.dt
        {
            snapshots.push(state.clone());
            next_snapshot += 1;
        }
        if step_index % recorder.stride == 0 {
            times.push(state.time);
            for (col, v) in values
                .iter_mut()
                .zip(observe(&columns, &state, &integrator, config))
            {
                col.push(v);
            }
        }
    }
    let series = columns
        .iter()
        .zip(values)
        .map(|(&(channel, species), values)| Series {
            channel,
            species,
            values,
        })
        .collect();
    Ok(TimeSeries {
        times,
        series,
        seed,
        config: config.clone(),
        snapshots,
        final_state: state,
    })
}

/// Mean and standard error of one column across realisations.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub channel: Channel,
    pub species: Option<usize>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl SeriesStats {
    pub fn name(&self) -> String {
        self.channel.column_name(self.species)
    }
}

/// Ensemble-averaged observables plus pooled final phase-space samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub series: Vec<SeriesStats>,
    /// Final momenta of every realisation, pooled per species.
    pub final_momenta: Vec<Vec<f64>>,
    /// Final positions of every realisation, pooled per species.
    pub final_positions: Vec<Vec<f64>>,
    pub n_realisations: usize,
    pub base_seed: u64,
}

impl EnsembleStats {
    pub fn get(&self, channel: Channel, species: Option<usize>) -> Option<&SeriesStats> {
        self.series
            .iter()
            .find(|s| s.channel == channel && s.species == species)
    }

    /// Pooled final momentum histograms, `bins` uniform bins spanning five
    /// rms widths of each species' pooled sample.
    pub fn momentum_histograms(&self, bins: usize) -> Vec<Histogram> {
        self.final_momenta
            .iter()
            .map(|p| Histogram::symmetric(p, bins, 5.0))
            .collect()
    }
}

/// Runs `n_realisations` independent trajectories (realisation `i` uses
/// [`realisation_rng`]`(base_seed, i)`) and reduces them in index order, so
/// the result does not depend on thread scheduling.
pub fn ensemble_run(
    config: &SimConfig,
    n_realisations: usize,
    base_seed: u64,
    recorder: &Recorder,
) -> Result<EnsembleStats, DynamicsError> {
    if n_realisations < 1 {
        return Err(DynamicsError::Recorder("need at least one realisation".into()));
    }
    config.validate()?;
    recorder.validate()?;
    let runs: Vec<Result<TimeSeries, DynamicsError>> = (0..n_realisations as u64)
        .into_par_iter()
        .map(|i| {
            run_stream(config, base_seed, i, recorder).map_err(|e| DynamicsError::Realisation {
                index: i,
                base_seed,
                source: Box::new(e),
            })
        })
        .collect();
    let runs: Vec<TimeSeries> = runs.into_iter().collect::<Result<_, _>>()?;
    Ok(reduce(&runs, base_seed))
}

fn reduce(runs: &[TimeSeries], base_seed: u64) -> EnsembleStats {
    let n = runs.len() as f64;
    let first = &runs[0];
    let series = first
        .series
        .iter()
        .enumerate()
        .map(|(c, proto)| {
            let len = proto.values.len();
            let mut mean = vec![0.0; len];
            let mut sq = vec![0.0; len];
            for run in runs {
                for (k, &v) in run.series[c].values.iter().enumerate() {
                    mean[k] += v;
                    sq[k] += v * v;
                }
            }
            let mut stderr = vec![0.0; len];
            for k in 0..len {
                mean[k] /= n;
                if runs.len() > 1 {
                    let var = ((sq[k] - n * mean[k] * mean[k]) / (n - 1.0)).max(0.0);
                    stderr[k] = (var / n).sqrt();
                }
            }
            SeriesStats {
                channel: proto.channel,
                species: proto.species,
                mean,
                stderr,
            }
        })
        .collect();
    let n_species = first.final_state.species.len();
    let pool = |f: fn(&SpeciesState) -> &Vec<f64>| -> Vec<Vec<f64>> {
        (0..n_species)
            .map(|s| {
                runs.iter()
                    .flat_map(|r| f(&r.final_state.species[s]).iter().copied())
                    .collect()
            })
            .collect()
    };
    EnsembleStats {
        times: first.times.clone(),
        series,
        final_momenta: pool(|s| &s.momenta),
        final_positions: pool(|s| &s.positions),
        n_realisations: runs.len(),
        base_seed,
    }
}
