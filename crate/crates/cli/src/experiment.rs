//! Experiment orchestration: runs one configured experiment and writes its
//! artifacts into the output directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use cavsim_core::kinetics::{
    adiabatic_map, adiabatic_steady_state, critical_pump_scale, equilibrium_temperature,
    friction_diffusion_uniform, growth_rate_hot, heat_flow, organised_equilibrium,
    qgaussian_equilibrium, stability_margin, AdiabaticSteadyState, Maxwellian,
};
use cavsim_core::model::default_timestep;
use cavsim_core::observables::qgaussian_density;
use cavsim_core::{
    ensemble_run, CavityParams, DynamicsError, EquilibriumPrediction, Histogram,
    KineticsError, Recorder, SimConfig, SpeciesParams, StabilityReport,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Format, Kind};
use crate::output::{Cell, Summary, Table};

/// Convergence tolerance of the organised-branch field iteration.
const ORGANISED_TOL: f64 = 1e-10;
/// Points in `x` used for adiabatic momentum marginals.
const MARGINAL_NX: usize = 128;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io { .. } => 1,
        }
    }
}

impl From<DynamicsError> for RunError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Config(m) => RunError::Config(ConfigError::Invalid(vec![m.to_string()])),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Paths written and the summary of a finished experiment.
pub struct Report {
    pub directory: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

struct Sink<'a> {
    dir: &'a Path,
    formats: &'a [Format],
    files: Vec<PathBuf>,
}

impl Sink<'_> {
    fn table(&mut self, format: Format, name: &str, table: &Table) -> Result<(), RunError> {
        if !self.formats.contains(&format) {
            return Ok(());
        }
        let path = self.dir.join(name);
        table.write(&path).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }
}

/// Analytic predictions for one parameter set. Failed branches keep their
/// error message.
pub struct Predictions {
    pub stability: StabilityReport,
    pub growth_rate_hot: Option<f64>,
    pub critical_pump_scale: Result<f64, KineticsError>,
    pub homogeneous: Result<EquilibriumPrediction, KineticsError>,
    pub organised: Result<EquilibriumPrediction, KineticsError>,
    pub adiabatic: Result<AdiabaticSteadyState, KineticsError>,
    pub photon_bound: f64,
    cavity: CavityParams,
    species: Vec<SpeciesParams>,
}

impl Predictions {
    pub fn compute(cavity: &CavityParams, species: &[SpeciesParams]) -> Self {
        let stability = stability_margin(cavity, species);
        let initial: Vec<Maxwellian> = species.iter().map(Maxwellian::of).collect();
        let source: f64 = species.iter().map(|s| s.n_particles as f64 * s.pump).sum();
        let photon_bound = source * source / (cavity.kappa.powi(2) + stability.delta.powi(2));
        let nonempty = !species.is_empty();
        Self {
            growth_rate_hot: growth_rate_hot(cavity, species),
            critical_pump_scale: if nonempty { critical_pump_scale(cavity, species) } else { Err(KineticsError::NoPump) },
            homogeneous: if nonempty { qgaussian_equilibrium(cavity, species) } else { Err(KineticsError::NoPump) },
            organised: organised_equilibrium(cavity, species, ORGANISED_TOL),
            adiabatic: if nonempty { adiabatic_steady_state(cavity, species, &initial) } else { Err(KineticsError::NoPump) },
            stability,
            photon_bound,
            cavity: *cavity,
            species: species.to_vec(),
        }
    }

    /// `(quantity, species, value)`; species 0 marks global quantities.
    pub fn rows(&self) -> Vec<(&'static str, usize, f64)> {
        let nan = f64::NAN;
        let st = &self.stability;
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let homo = self.homogeneous.as_ref().ok();
        let org = self.organised.as_ref().ok();
        let adi = self.adiabatic.as_ref().ok();
        let t_star = equilibrium_temperature(self.cavity.kappa, st.delta);
        let mut rows = vec![
            ("delta", 0, st.delta),
            ("t_star", 0, if st.delta < 0.0 { t_star } else { nan }),
            ("threshold_lhs", 0, st.threshold_lhs),
            ("unstable", 0, flag(st.unstable)),
            ("critical_pump_scale", 0, *self.critical_pump_scale.as_ref().unwrap_or(&nan)),
            ("growth_rate_hot", 0, self.growth_rate_hot.unwrap_or(nan)),
            ("growth_rate_full", 0, st.growth_rate.unwrap_or(nan)),
            ("photon_bound", 0, self.photon_bound),
            ("organised_re_alpha", 0, org.map_or(nan, |o| o.alpha.re)),
            ("organised_im_alpha", 0, org.map_or(nan, |o| o.alpha.im)),
            ("organised_photons", 0, org.map_or(nan, |o| o.alpha.norm_sqr())),
            ("organised_delta", 0, org.map_or(nan, |o| o.delta)),
            ("adiabatic_re_alpha", 0, adi.map_or(nan, |a| a.alpha.re)),
            ("adiabatic_photons", 0, adi.map_or(nan, |a| a.alpha.norm_sqr())),
        ];
        for s in 0..self.species.len() {
            let k = s + 1;
            let hs = homo.map(|h| &h.species[s]);
            let os = org.map(|o| &o.species[s]);
            rows.extend([
                ("share", k, st.shares[s]),
                ("q", k, hs.map_or(nan, |h| h.q)),
                ("qgaussian_exists", k, hs.map_or(nan, |h| flag(h.exists))),
                ("qgaussian_temperature", k, hs.map_or(nan, |h| h.kinetic_temperature)),
                ("organised_temperature", k, os.map_or(nan, |o| o.kinetic_temperature)),
                ("organised_trap_frequency", k, os.map_or(nan, |o| o.trap_frequency)),
                ("organised_order_parameter", k, os.map_or(nan, |o| o.order_parameter)),
                ("organised_bunching", k, os.map_or(nan, |o| o.bunching)),
                (
                    "organised_uncertainty_product",
                    k,
                    os.and_then(|o| o.uncertainty_product).unwrap_or(nan),
                ),
                ("organised_energy", k, os.and_then(|o| o.energy).unwrap_or(nan)),
                ("adiabatic_order_parameter", k, adi.map_or(nan, |a| a.order_parameters[s])),
            ]);
        }
        rows
    }

    fn statuses(&self) -> [(&'static str, String); 4] {
        fn status<T>(r: &Result<T, KineticsError>) -> String {
            match r {
                Ok(_) => "ok".into(),
                Err(e) => e.to_string(),
            }
        }
        [
            ("critical_pump_scale", status(&self.critical_pump_scale)),
            ("homogeneous", status(&self.homogeneous)),
            ("organised", status(&self.organised)),
            ("adiabatic", status(&self.adiabatic)),
        ]
    }

    fn summarise(&self, summary: &mut Summary) {
        for (name, status) in self.statuses() {
            summary.text(format!("status.{name}"), status);
        }
        for (quantity, species, value) in self.rows() {
            summary.num(prediction_key(quantity, species), value);
        }
    }

    fn table(&self, config_text: &str) -> Table {
        let mut t = Table::new(["quantity", "species", "value"]);
        t.comment("analytic predictions; species 0 marks global quantities, nan marks an unavailable branch")
            .config(config_text);
        for (quantity, species, value) in self.rows() {
            t.push(vec![quantity.into(), species.into(), value.into()]);
        }
        t
    }

    /// Predicted momentum densities of species `s` at `momenta`:
    /// homogeneous q-Gaussian, organised Boltzmann marginal and the
    /// adiabatic map of the initial Maxwellian.
    pub fn densities(&self, s: usize, momenta: &[f64]) -> [Vec<f64>; 3] {
        let sp = &self.species[s];
        let nan = vec![f64::NAN; momenta.len()];
        let qgauss = match &self.homogeneous {
            Ok(h) if h.species[s].exists => momenta
                .iter()
                .map(|&p| qgaussian_density(p, h.species[s].q, h.t_star, sp.mass))
                .collect(),
            _ => nan.clone(),
        };
        let boltzmann = match &self.organised {
            Ok(o) => {
                let var = sp.mass * o.species[s].kinetic_temperature;
                momenta
                    .iter()
                    .map(|&p| (-p * p / (2.0 * var)).exp() / (std::f64::consts::TAU * var).sqrt())
                    .collect()
            }
            Err(_) => nan.clone(),
        };
        let adiabatic = match &self.adiabatic {
            Ok(a) => adiabatic_map(Maxwellian::of(sp), a.alpha, sp)
                .momentum_marginal(momenta, MARGINAL_NX)
                .unwrap_or(nan),
            Err(_) => nan,
        };
        [qgauss, boltzmann, adiabatic]
    }
}

fn prediction_key(quantity: &str, species: usize) -> String {
    if species == 0 {
        format!("prediction.{quantity}")
    } else {
        format!("prediction.{quantity}.{species}")
    }
}

fn histogram_table(
    config_text: &str,
    predictions: &Predictions,
    momenta: &[Vec<f64>],
    bins: usize,
) -> Table {
    let mut t = Table::new([
        "species", "lo", "hi", "center", "count", "density", "qgaussian", "boltzmann", "adiabatic",
    ]);
    t.comment("final momentum histograms pooled over realisations, bins spanning five rms widths")
        .comment("density = count/(total*width); qgaussian, boltzmann, adiabatic = predicted densities at the bin centre")
        .config(config_text);
    for (s, p) in momenta.iter().enumerate() {
        let h = Histogram::symmetric(p, bins, 5.0);
        let centers = h.centers();
        let density = h.density();
        let [qg, bz, ad] = predictions.densities(s, &centers);
        let edges = h.edges();
        for b in 0..h.bins() {
            t.push(vec![
                (s + 1).into(),
                edges[b].into(),
                edges[b + 1].into(),
                centers[b].into(),
                h.counts[b].into(),
                density[b].into(),
                qg[b].into(),
                bz[b].into(),
                ad[b].into(),
            ]);
        }
    }
    t
}

fn resolve_seed(config: &ExperimentConfig) -> ExperimentConfig {
    let mut resolved = config.clone();
    if resolved.sim.seed.is_none() {
        resolved.sim.seed = Some(rand::random());
    }
    resolved
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Runs `config` and writes its artifacts into `config.output`.
///
/// A missing seed is drawn from entropy and recorded in every artifact.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report, RunError> {
    let config = resolve_seed(config);
    let dir = config.output.clone();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let started = Instant::now();
    let mut summary = Summary::default();
    summary
        .text("tool", concat!("cavsim ", env!("CARGO_PKG_VERSION")))
        .text("run.kind", config.kind)
        .text("run.started_unix", unix_time())
        .text("run.seed", config.sim.seed.expect("resolved seed"))
        .text("run.realisations", config.realisations)
        .text("run.species", config.sim.species.len())
        .num("run.dt", config.sim.dt)
        .num("run.duration", config.sim.duration)
        .text("run.steps", config.sim.n_steps());
    let mut sink = Sink {
        dir: &dir,
        formats: &config.formats,
        files: Vec::new(),
    };
    let text = config.to_text();
    sink.text("config.cfg", &text)?;
    match config.kind {
        Kind::Simulate | Kind::Ensemble => simulate(&config, &text, &mut sink, &mut summary)?,
        Kind::Threshold => analytic(&config, &text, &mut sink, &mut summary).map(drop)?,
        Kind::Equilibrium => equilibrium(&config, &text, &mut sink, &mut summary)?,
        Kind::Heatflow => heatflow(&config, &text, &mut sink, &mut summary)?,
        Kind::Sweep => sweep(&config, &mut sink, &mut summary)?,
    }
    summary.num("run.wall_seconds", started.elapsed().as_secs_f64());
    if config.formats.contains(&Format::Summary) {
        sink.text("summary.txt", &summary.render())?;
    }
    let files = sink.files;
    Ok(Report {
        directory: dir,
        files,
        summary,
    })
}

fn analytic(
    config: &ExperimentConfig,
    text: &str,
    sink: &mut Sink,
    summary: &mut Summary,
) -> Result<Predictions, RunError> {
    let predictions = Predictions::compute(&config.sim.cavity, &config.sim.species);
    predictions.summarise(summary);
    sink.table(Format::Predictions, "predictions.csv", &predictions.table(text))?;
    Ok(predictions)
}

fn simulate(
    config: &ExperimentConfig,
    text: &str,
    sink: &mut Sink,
    summary: &mut Summary,
) -> Result<(), RunError> {
    let predictions = analytic(config, text, sink, summary)?;
    let seed = config.sim.seed.expect("resolved seed");
    let recorder = Recorder::new(config.sim.stride);
    let stats = ensemble_run(&config.sim, config.realisations, seed, &recorder)?;
    let mut header = vec!["time".to_string()];
    let single = config.kind == Kind::Simulate;
    for s in &stats.series {
        if single {
            header.push(s.name());
        } else {
            header.push(format!("{}_mean", s.name()));
            header.push(format!("{}_stderr", s.name()));
        }
    }
    let mut t = Table::new(header);
    t.comment(format!("{} time series, {} realisation(s), base seed {seed}", config.kind, config.realisations))
        .comment("photons = |alpha|^2; theta_s = |<sin kx>_s|; tkin_s = <p^2>_s/m_s; bunching_s = <sin^2 kx>_s");
    if !single {
        t.comment("_mean and _stderr are the ensemble mean and its standard error");
    }
    t.config(text);
    for (k, &time) in stats.times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![time.into()];
        for s in &stats.series {
            row.push(s.mean[k].into());
            if !single {
                row.push(s.stderr[k].into());
            }
        }
        t.push(row);
    }
    sink.table(Format::Timeseries, "timeseries.csv", &t)?;
    for s in &stats.series {
        if let (Some(&mean), Some(&err)) = (s.mean.last(), s.stderr.last()) {
            summary.num(format!("final.{}", s.name()), mean);
            if !single {
                summary.num(format!("final.{}.stderr", s.name()), err);
            }
        }
    }
    if !config.sim.species.is_empty() {
        let h = histogram_table(text, &predictions, &stats.final_momenta, config.bins);
        sink.table(Format::Histograms, "histograms.csv", &h)?;
    }
    Ok(())
}

fn equilibrium(
    config: &ExperimentConfig,
    text: &str,
    sink: &mut Sink,
    summary: &mut Summary,
) -> Result<(), RunError> {
    let predictions = analytic(config, text, sink, summary)?;
    let branch = if predictions.stability.unstable { "organised" } else { "homogeneous" };
    summary.text("equilibrium.branch", branch);
    let chosen_failed = match branch {
        "organised" => predictions.organised.as_ref().err(),
        _ => predictions.homogeneous.as_ref().err(),
    };
    let mut t = Table::new(["species", "p", "qgaussian", "boltzmann", "adiabatic"]);
    t.comment("predicted momentum densities on a uniform grid spanning five initial thermal widths")
        .config(text);
    for (s, sp) in config.sim.species.iter().enumerate() {
        let width = 5.0 * (sp.mass * sp.temperature).sqrt();
        let grid: Vec<f64> = (0..config.bins)
            .map(|i| -width + 2.0 * width * i as f64 / (config.bins - 1) as f64)
            .collect();
        let [qg, bz, ad] = predictions.densities(s, &grid);
        for (i, &p) in grid.iter().enumerate() {
            t.push(vec![(s + 1).into(), p.into(), qg[i].into(), bz[i].into(), ad[i].into()]);
        }
    }
    sink.table(Format::Histograms, "distributions.csv", &t)?;
    match chosen_failed {
        Some(e) => Err(RunError::Numerical(format!("{branch} equilibrium: {e}"))),
        None => Ok(()),
    }
}

fn heatflow(
    config: &ExperimentConfig,
    text: &str,
    sink: &mut Sink,
    summary: &mut Summary,
) -> Result<(), RunError> {
    let predictions = analytic(config, text, sink, summary)?;
    let cavity = &config.sim.cavity;
    let sp = &config.sim.species;
    let flow = heat_flow(cavity, &sp[0], &sp[1]).map_err(|e| RunError::Numerical(e.to_string()))?;
    summary
        .num("heatflow.q_2_to_1", flow.q_2_to_1)
        .num("heatflow.q_1_to_2", flow.q_1_to_2)
        .text("heatflow.warnings", flow.warnings.len());
    for (i, w) in flow.warnings.iter().enumerate() {
        summary.text(format!("heatflow.warning.{}", i + 1), w);
    }
    let delta = predictions.stability.delta;
    let mut t = Table::new(["species", "p", "drift", "diffusion"]);
    t.comment("uniform-state friction A(p) and diffusion B(p) on a grid spanning five thermal widths")
        .config(text);
    for (s, species) in sp.iter().enumerate() {
        let width = 5.0 * (species.mass * species.temperature).sqrt();
        for i in 0..config.bins {
            let p = -width + 2.0 * width * i as f64 / (config.bins - 1) as f64;
            let fd = friction_diffusion_uniform(p, cavity, delta, species);
            t.push(vec![(s + 1).into(), p.into(), fd.drift.into(), fd.diffusion.into()]);
        }
    }
    sink.table(Format::Timeseries, "transport.csv", &t)
}

fn sweep(config: &ExperimentConfig, sink: &mut Sink, summary: &mut Summary) -> Result<(), RunError> {
    let sw = config.sweep.as_ref().expect("validated sweep");
    let values = sw.values();
    summary
        .text("sweep.parameter", sw.parameter)
        .text("sweep.count", sw.count)
        .text("sweep.simulate", sw.simulate);
    let points: Vec<(f64, SimConfig)> = values
        .iter()
        .map(|&v| {
            let mut sim = config.sim.clone();
            sw.parameter.apply(&mut sim, v);
            if sw.simulate {
                sim.dt = sim.dt.min(default_timestep(&sim.cavity, &sim.species));
            }
            (v, sim)
        })
        .collect();
    for (v, sim) in &points {
        sim.validate().map_err(|e| {
            ConfigError::Invalid(vec![format!("sweep point {} = {}: {e}", sw.parameter, v)])
        })?;
    }
    let results: Vec<Result<(Predictions, Option<Report>), RunError>> = points
        .par_iter()
        .enumerate()
        .map(|(i, (_, sim))| {
            let predictions = Predictions::compute(&sim.cavity, &sim.species);
            let report = if sw.simulate {
                let point = ExperimentConfig {
                    kind: Kind::Ensemble,
                    sim: sim.clone(),
                    sweep: None,
                    output: sink.dir.join(format!("point_{i:03}")),
                    ..config.clone()
                };
                Some(run_experiment(&point)?)
            } else {
                None
            };
            Ok((predictions, report))
        })
        .collect();
    let results: Vec<(Predictions, Option<Report>)> = results.into_iter().collect::<Result<_, _>>()?;

    let mut header = vec!["index".to_string(), "value".to_string(), "dt".to_string()];
    let names: Vec<String> = results[0]
        .0
        .rows()
        .iter()
        .map(|&(q, s, _)| if s == 0 { q.to_string() } else { format!("{q}_{s}") })
        .collect();
    header.extend(names.iter().cloned());
    let final_keys: Vec<String> = match &results[0].1 {
        Some(r) => r
            .summary
            .render()
            .lines()
            .filter_map(|l| l.split(" = ").next())
            .filter(|k| k.starts_with("final."))
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };
    header.extend(final_keys.iter().map(|k| k.trim_start_matches("final.").replace('.', "_")));
    let mut t = Table::new(header);
    t.comment(format!("sweep over {}; one row per point, prediction columns as in predictions.csv", sw.parameter));
    if sw.simulate {
        t.comment("trailing columns are final ensemble means (and standard errors) from point_NNN/");
    }
    t.config(&config.to_text());
    for (i, ((value, sim), (pred, report))) in points.iter().zip(&results).enumerate() {
        let mut row: Vec<Cell> = vec![i.into(), (*value).into(), sim.dt.into()];
        row.extend(pred.rows().into_iter().map(|(_, _, v)| Cell::from(v)));
        if let Some(r) = report {
            for k in &final_keys {
                let v = r.summary.get(k).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
                row.push(v.into());
            }
            sink.files.extend(r.files.iter().cloned());
        }
        t.push(row);
    }
    sink.table(Format::Predictions, "sweep.csv", &t)
}
