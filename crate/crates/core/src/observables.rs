//! Measured quantities: order parameters, kinetic temperatures, photon
//! numbers, momentum histograms, q-Gaussian fits and CDF distances.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::model::{SimState, SpeciesState};
use crate::numerics::nelder_mead;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("histogram has {0} non-empty bins, at least 20 are needed")]
    TooFewBins(usize),
    #[error("q-Gaussian fit did not converge (best q = {}, T = {})", .best.q, .best.temperature)]
    NotConverged { best: QGaussianFit },
}

/// `|⟨sin kx⟩|` over the particles of one species.
pub fn order_parameter(state: &SimState, s: usize) -> f64 {
    species_order_parameter(&state.species[s])
}

pub fn species_order_parameter(species: &SpeciesState) -> f64 {
    mean(species.positions.iter().map(|x| x.sin())).abs()
}

/// Bunching `⟨sin² kx⟩` of one species.
pub fn bunching(species: &SpeciesState) -> f64 {
    mean(species.positions.iter().map(|x| x.sin().powi(2)))
}

/// Kinetic temperature `⟨p²⟩/m`.
pub fn kinetic_temperature(state: &SimState, s: usize, mass: f64) -> f64 {
    species_kinetic_temperature(&state.species[s], mass)
}

pub fn species_kinetic_temperature(species: &SpeciesState, mass: f64) -> f64 {
    mean(species.momenta.iter().map(|p| p * p)) / mass
}

pub fn photon_number(state: &SimState) -> f64 {
    state.alpha.norm_sqr()
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

/// Histogram with uniform bins on `[lo, hi)`. Samples outside the range are
/// tallied separately and do not enter the normalised density.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(hi > lo && bins > 0, "invalid histogram range");
        Self {
            lo,
            hi,
            counts: vec![0.0; bins],
            underflow: 0.0,
            overflow: 0.0,
        }
    }

    pub fn from_samples(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut h = Self::new(lo, hi, bins);
        for &x in samples {
            h.add(x, 1.0);
        }
        h
    }

    /// Symmetric histogram spanning `±widths·√⟨x²⟩` of the samples.
    pub fn symmetric(samples: &[f64], bins: usize, widths: f64) -> Self {
        let rms = (samples.iter().map(|x| x * x).sum::<f64>() / samples.len().max(1) as f64)
            .sqrt()
            .max(f64::MIN_POSITIVE);
        Self::from_samples(samples, -widths * rms, widths * rms, bins)
    }

    /// Histogram whose bin weights are the integrals of `density` over each
    /// bin (composite Simpson rule, 8 panels per bin).
    pub fn from_density<F: Fn(f64) -> f64>(lo: f64, hi: f64, bins: usize, density: F) -> Self {
        let mut h = Self::new(lo, hi, bins);
        let w = h.width();
        const PANELS: usize = 8;
        for (i, c) in h.counts.iter_mut().enumerate() {
            let a = lo + i as f64 * w;
            let step = w / PANELS as f64;
            let mut acc = density(a) + density(a + w);
            for k in 1..PANELS {
                let factor = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += factor * density(a + k as f64 * step);
            }
            *c = (acc * step / 3.0).max(0.0);
        }
        h
    }

    pub fn add(&mut self, x: f64, weight: f64) {
        if x < self.lo {
            self.underflow += weight;
        } else if x >= self.hi {
            self.overflow += weight;
        } else {
            let bins = self.counts.len();
            let i = (((x - self.lo) / self.width()) as usize).min(bins - 1);
            self.counts[i] += weight;
        }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.bins()).map(|i| self.lo + i as f64 * w).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.bins()).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    /// Total in-range weight.
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Normalised density: integrates to one over the histogram range.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total() * self.width();
        if norm <= 0.0 {
            return vec![0.0; self.bins()];
        }
        self.counts.iter().map(|c| c / norm).collect()
    }

    pub fn nonzero_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0.0).count()
    }

    /// Normalised CDF at `x`, linear within bins.
    pub fn cdf(&self, x: f64) -> f64 {
        let total = self.total();
        if total <= 0.0 {
            return 0.0;
        }
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let pos = (x - self.lo) / self.width();
        let i = (pos as usize).min(self.bins() - 1);
        let below: f64 = self.counts[..i].iter().sum();
        ((below + (pos - i as f64) * self.counts[i]) / total).clamp(0.0, 1.0)
    }
}

/// Sup-norm distance between the normalised CDFs of two histograms,
/// evaluated on the union of both sets of bin edges.
pub fn ks_distance(a: &Histogram, b: &Histogram) -> f64 {
    let mut grid = a.edges();
    grid.extend(b.edges());
    grid.iter()
        .map(|&x| (a.cdf(x) - b.cdf(x)).abs())
        .fold(0.0, f64::max)
}

/// Result of a least-squares q-Gaussian fit.
#[derive(Debug, Clone, PartialEq)]
pub struct QGaussianFit {
    pub q: f64,
    pub temperature: f64,
    /// Weighted residual sum of squares at the optimum.
    pub residual: f64,
    /// Two-standard-error half widths for `q` and `T`.
    pub q_half_width: f64,
    pub temperature_half_width: f64,
}

const GAUSSIAN_LIMIT: f64 = 1e-9;

/// Normalised momentum density `exp_q(−p²/(2mT))/Z` for `1 ≤ q < 3`.
pub fn qgaussian_density(p: f64, q: f64, temperature: f64, mass: f64) -> f64 {
    let u = p * p / (2.0 * mass * temperature);
    let dq = q - 1.0;
    if dq <= GAUSSIAN_LIMIT {
        return (-u).exp() / (2.0 * PI * mass * temperature).sqrt();
    }
    let n = 1.0 / dq;
    let log_norm = 0.5 * (2.0 * mass * temperature / dq * PI).ln() + ln_gamma(n - 0.5)
        - ln_gamma(n);
    (-n * (dq * u).ln_1p() - log_norm).exp()
}

/// Fits the normalised q-Gaussian density in `(q, T)` to the histogram
/// density, weighting the squared residual of each bin by `√counts`.
pub fn fit_qgaussian(hist: &Histogram, mass: f64) -> Result<QGaussianFit, FitError> {
    let nonzero = hist.nonzero_bins();
    if nonzero < 20 {
        return Err(FitError::TooFewBins(nonzero));
    }
    let centers = hist.centers();
    let density = hist.density();
    let weights: Vec<f64> = hist.counts.iter().map(|c| c.max(0.0).sqrt()).collect();
    let model = |q: f64, t: f64| -> Vec<f64> {
        centers.iter().map(|&p| qgaussian_density(p, q, t, mass)).collect()
    };
    let rss = |q: f64, t: f64| -> f64 {
        centers
            .iter()
            .zip(density.iter().zip(&weights))
            .map(|(&p, (&d, &w))| w * (d - qgaussian_density(p, q, t, mass)).powi(2))
            .sum()
    };
    // parametrise q = 1 + s², T = exp(τ) to keep the fit on the q ≥ 1 branch
    let objective = |x: &[f64]| rss(1.0 + x[0] * x[0], x[1].exp());

    let total = hist.total();
    let second_moment: f64 = centers
        .iter()
        .zip(&hist.counts)
        .map(|(p, c)| p * p * c)
        .sum::<f64>()
        / total;
    let t0 = (second_moment / mass).max(f64::MIN_POSITIVE);
    let mut best = None::<crate::numerics::Minimum>;
    for s0 in [0.05, 0.3, 0.6] {
        for scale in [1.0, 0.5] {
            let m = nelder_mead(objective, &[s0, (scale * t0).ln()], &[0.1, 0.2], 1e-10, 4000);
            if best.as_ref().is_none_or(|b| m.value < b.value) {
                best = Some(m);
            }
        }
    }
    let best = best.expect("at least one start");
    let q = 1.0 + best.point[0].powi(2);
    let temperature = best.point[1].exp();

    // linearised covariance from the weighted Jacobian
    let base = model(q, temperature);
    let hq = 1e-6;
    let ht = 1e-6 * temperature;
    let dq: Vec<f64> = model(q + hq, temperature)
        .iter()
        .zip(&base)
        .map(|(a, b)| (a - b) / hq)
        .collect();
    let dt: Vec<f64> = model(q, temperature + ht)
        .iter()
        .zip(&base)
        .map(|(a, b)| (a - b) / ht)
        .collect();
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    for i in 0..base.len() {
        a11 += weights[i] * dq[i] * dq[i];
        a12 += weights[i] * dq[i] * dt[i];
        a22 += weights[i] * dt[i] * dt[i];
    }
    let dof = (nonzero.saturating_sub(2)).max(1) as f64;
    let sigma2 = best.value / dof;
    let det = a11 * a22 - a12 * a12;
    let (q_var, t_var) = if det > 0.0 {
        (sigma2 * a22 / det, sigma2 * a11 / det)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let fit = QGaussianFit {
        q,
        temperature,
        residual: best.value,
        q_half_width: 2.0 * q_var.sqrt(),
        temperature_half_width: 2.0 * t_var.sqrt(),
    };
    if best.converged {
        Ok(fit)
    } else {
        Err(FitError::NotConverged { best: fit })
    }
}
