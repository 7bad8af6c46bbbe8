//! Experiment configuration: a small INI-style key-value format.
//!
//! ```text
//! # comment
//! [run]
//! kind = ensemble
//! duration = 200
//! realisations = 64
//!
//! [cavity]
//! kappa = 100
//! detuning = -2.6
//!
//! [species]
//! n = 300
//! collective_pump = 800
//! collective_light_shift = -0.1
//! temperature = 1000
//! ```
//!
//! `[species]` may repeat; the first block is the reference species and must
//! have `mass_ratio = 1`. Unknown sections and keys are rejected. A `simulate`
//! run always has one realisation.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use cavsim_core::model::default_timestep;
use cavsim_core::{CavityParams, InitialCondition, SimConfig, SpeciesParams};
use thiserror::Error;

/// Target number of recorded samples when no stride is given.
const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Simulate,
    Ensemble,
    Threshold,
    Equilibrium,
    Heatflow,
    Sweep,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Simulate,
        Kind::Ensemble,
        Kind::Threshold,
        Kind::Equilibrium,
        Kind::Heatflow,
        Kind::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Ensemble => "ensemble",
            Kind::Threshold => "threshold",
            Kind::Equilibrium => "equilibrium",
            Kind::Heatflow => "heatflow",
            Kind::Sweep => "sweep",
        }
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kind `{s}`"))
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Timeseries,
    Histograms,
    Predictions,
    Summary,
}

impl Format {
    pub const ALL: [Format; 4] = [
        Format::Timeseries,
        Format::Histograms,
        Format::Predictions,
        Format::Summary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Format::Timeseries => "timeseries",
            Format::Histograms => "histograms",
            Format::Predictions => "predictions",
            Format::Summary => "summary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// Numeric field addressed by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPath {
    Kappa,
    Detuning,
    Duration,
    Dt,
    Perturbation,
    Species(usize, SpeciesField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeciesField {
    N,
    MassRatio,
    Pump,
    CollectivePump,
    LightShift,
    Temperature,
}

impl SpeciesField {
    const ALL: [SpeciesField; 6] = [
        SpeciesField::N,
        SpeciesField::MassRatio,
        SpeciesField::Pump,
        SpeciesField::CollectivePump,
        SpeciesField::LightShift,
        SpeciesField::Temperature,
    ];

    fn name(self) -> &'static str {
        match self {
            SpeciesField::N => "n",
            SpeciesField::MassRatio => "mass_ratio",
            SpeciesField::Pump => "pump",
            SpeciesField::CollectivePump => "collective_pump",
            SpeciesField::LightShift => "light_shift",
            SpeciesField::Temperature => "temperature",
        }
    }
}

impl ParamPath {
    pub fn parse(text: &str, n_species: usize) -> Result<Self, String> {
        let parts: Vec<&str> = text.split('.').collect();
        let path = match parts.as_slice() {
            ["cavity", "kappa"] => ParamPath::Kappa,
            ["cavity", "detuning"] => ParamPath::Detuning,
            ["run", "duration"] => ParamPath::Duration,
            ["run", "dt"] => ParamPath::Dt,
            ["run", "perturbation"] => ParamPath::Perturbation,
            ["species", index, field] => {
                let k: usize = index
                    .parse()
                    .map_err(|_| format!("`{index}` is not a species number"))?;
                if k < 1 || k > n_species {
                    return Err(format!("species {k} does not exist (have {n_species})"));
                }
                let field = SpeciesField::ALL
                    .into_iter()
                    .find(|f| f.name() == *field)
                    .ok_or_else(|| format!("`{field}` is not a numeric species field"))?;
                if k == 1 && field == SpeciesField::MassRatio {
                    return Err("the reference species mass ratio is fixed to 1".into());
                }
                ParamPath::Species(k - 1, field)
            }
            _ => return Err(format!("`{text}` does not name a numeric field")),
        };
        Ok(path)
    }

    /// Writes `value` into `config`.
    pub fn apply(self, config: &mut SimConfig, value: f64) {
        match self {
            ParamPath::Kappa => config.cavity.kappa = value,
            ParamPath::Detuning => config.cavity.detuning = value,
            ParamPath::Duration => config.duration = value,
            ParamPath::Dt => config.dt = value,
            ParamPath::Perturbation => config.initial.perturbation = value,
            ParamPath::Species(k, field) => {
                let s = &mut config.species[k];
                match field {
                    SpeciesField::N => s.n_particles = value.round().max(0.0) as usize,
                    SpeciesField::MassRatio => {
                        *s = SpeciesParams::with_mass_ratio(
                            s.n_particles,
                            value,
                            s.pump,
                            s.light_shift,
                            s.temperature,
                        )
                    }
                    SpeciesField::Pump => s.pump = value,
                    SpeciesField::CollectivePump => {
                        s.pump = value / (s.n_particles as f64).sqrt()
                    }
                    SpeciesField::LightShift => s.light_shift = value,
                    SpeciesField::Temperature => s.temperature = value,
                }
            }
        }
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamPath::Kappa => f.write_str("cavity.kappa"),
            ParamPath::Detuning => f.write_str("cavity.detuning"),
            ParamPath::Duration => f.write_str("run.duration"),
            ParamPath::Dt => f.write_str("run.dt"),
            ParamPath::Perturbation => f.write_str("run.perturbation"),
            ParamPath::Species(k, field) => write!(f, "species.{}.{}", k + 1, field.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: ParamPath,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
    /// Also run an ensemble at every point.
    pub simulate: bool,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.start + t * (self.stop - self.start),
                    Spacing::Log => (self.start.ln() + t * (self.stop.ln() - self.start.ln())).exp(),
                }
            })
            .collect()
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub sim: SimConfig,
    pub realisations: usize,
    pub bins: usize,
    pub output: PathBuf,
    pub formats: Vec<Format>,
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

struct Entry {
    key: String,
    value: String,
    line: usize,
    column: usize,
}

struct Section {
    name: String,
    entries: Vec<Entry>,
}

const RUN_KEYS: [&str; 11] = [
    "kind",
    "duration",
    "dt",
    "stride",
    "noise",
    "seed",
    "perturbation",
    "realisations",
    "bins",
    "output",
    "formats",
];
const CAVITY_KEYS: [&str; 2] = ["kappa", "detuning"];
const SPECIES_KEYS: [&str; 7] = [
    "n",
    "mass_ratio",
    "pump",
    "collective_pump",
    "light_shift",
    "collective_light_shift",
    "temperature",
];
const SWEEP_KEYS: [&str; 6] = ["parameter", "start", "stop", "count", "spacing", "simulate"];

fn allowed_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "run" => Some(&RUN_KEYS),
        "cavity" => Some(&CAVITY_KEYS),
        "species" => Some(&SPECIES_KEYS),
        "sweep" => Some(&SWEEP_KEYS),
        _ => None,
    }
}

fn lex(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |column: usize, message: String| ConfigError::Parse {
            line,
            column,
            message,
        };
        let content = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let start = raw.chars().take_while(|c| c.is_whitespace()).count() + 1;
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(err(start + trimmed.chars().count(), "expected `]`".into()));
            };
            let name = name.trim();
            if allowed_keys(name).is_none() {
                return Err(err(start + 1, format!("unknown section `[{name}]`")));
            }
            let repeats = sections.iter().any(|s| s.name == name);
            if repeats && name != "species" {
                return Err(err(start, format!("section `[{name}]` appears twice")));
            }
            sections.push(Section {
                name: name.to_string(),
                entries: Vec::new(),
            });
            continue;
        }
        let Some(eq) = trimmed.find('=') else {
            return Err(err(start, "expected `key = value`".into()));
        };
        let key = trimmed[..eq].trim();
        let value = trimmed[eq + 1..].trim();
        let value_column = start + trimmed[..eq + 1].chars().count()
            + (trimmed[eq + 1..].len() - trimmed[eq + 1..].trim_start().len());
        let Some(section) = sections.last_mut() else {
            return Err(err(start, format!("key `{key}` outside of any section")));
        };
        if key.is_empty() {
            return Err(err(start, "missing key before `=`".into()));
        }
        let allowed = allowed_keys(&section.name).expect("checked section");
        if !allowed.contains(&key) {
            return Err(err(
                start,
                format!("unknown key `{key}` in `[{}]`", section.name),
            ));
        }
        if section.entries.iter().any(|e| e.key == key) {
            return Err(err(start, format!("duplicate key `{key}`")));
        }
        if value.is_empty() {
            return Err(err(value_column, format!("missing value for `{key}`")));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
            column: value_column,
        });
    }
    Ok(sections)
}

struct Reader<'a> {
    section: &'a Section,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> Option<&'a Entry> {
        self.section.entries.iter().find(|e| e.key == key)
    }

    fn get<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| ConfigError::Parse {
                line: e.line,
                column: e.column,
                message: format!("`{}` is not {what}", e.value),
            }),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key, "a number")
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(key, "`true` or `false`")
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(key, "a non-negative integer")
    }
}

fn empty_section(name: &str) -> Section {
    Section {
        name: name.to_string(),
        entries: Vec::new(),
    }
}

/// Parses and validates a configuration, filling in every default.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_as(text, None)
}

/// Like [`parse_config`], with `kind` taking the place of `run.kind`.
pub fn parse_config_as(text: &str, kind: Option<Kind>) -> Result<ExperimentConfig, ConfigError> {
    let sections = lex(text)?;
    let find = |name: &str| sections.iter().find(|s| s.name == name);
    let empty_run = empty_section("run");
    let empty_cavity = empty_section("cavity");
    let run = Reader {
        section: find("run").unwrap_or(&empty_run),
    };
    let cavity = Reader {
        section: find("cavity").unwrap_or(&empty_cavity),
    };
    let mut problems = Vec::new();
    let kind = match (kind, run.raw("kind")) {
        (Some(kind), _) => kind,
        (None, None) => {
            problems.push("run.kind: required".into());
            Kind::Simulate
        }
        (None, Some(e)) => e.value.parse().map_err(|message| ConfigError::Parse {
            line: e.line,
            column: e.column,
            message,
        })?,
    };
    if let Some(e) = run.raw("kind") {
        e.value.parse::<Kind>().map_err(|message| ConfigError::Parse {
            line: e.line,
            column: e.column,
            message,
        })?;
    }
    let mut require = |value: Option<f64>, field: &str| {
        value.unwrap_or_else(|| {
            problems.push(format!("{field}: required"));
            f64::NAN
        })
    };

    let kappa = require(cavity.number("kappa")?, "cavity.kappa");
    let detuning = require(cavity.number("detuning")?, "cavity.detuning");

    let mut species = Vec::new();
    for (k, section) in sections.iter().filter(|s| s.name == "species").enumerate() {
        let r = Reader { section };
        let label = format!("species.{}", k + 1);
        let n = r.count("n")?.unwrap_or_else(|| {
            problems.push(format!("{label}.n: required"));
            1
        });
        let mass_ratio = r.number("mass_ratio")?.unwrap_or(1.0);
        if k == 0 && mass_ratio != 1.0 {
            problems.push(format!(
                "{label}.mass_ratio: the first species defines the units and must have mass_ratio = 1"
            ));
        }
        let pump = match (r.number("pump")?, r.number("collective_pump")?) {
            (Some(p), None) => p,
            (None, Some(c)) => c / (n as f64).sqrt(),
            (Some(_), Some(_)) => {
                problems.push(format!("{label}: give either pump or collective_pump, not both"));
                f64::NAN
            }
            (None, None) => {
                problems.push(format!("{label}.pump: required (or collective_pump)"));
                f64::NAN
            }
        };
        let light_shift = match (r.number("light_shift")?, r.number("collective_light_shift")?) {
            (Some(u), None) => u,
            (None, Some(c)) => c / n as f64,
            (Some(_), Some(_)) => {
                problems.push(format!(
                    "{label}: give either light_shift or collective_light_shift, not both"
                ));
                f64::NAN
            }
            (None, None) => 0.0,
        };
        let temperature = r.number("temperature")?.unwrap_or_else(|| {
            problems.push(format!("{label}.temperature: required"));
            f64::NAN
        });
        if n < 1 {
            problems.push(format!("{label}.n: must be at least 1"));
        }
        if !(mass_ratio.is_finite() && mass_ratio > 0.0) {
            problems.push(format!("{label}.mass_ratio: must be positive"));
        }
        if !(pump.is_nan() || pump.is_finite() && pump >= 0.0) {
            problems.push(format!("{label}.pump: must be non-negative"));
        }
        if !(temperature.is_nan() || temperature.is_finite() && temperature > 0.0) {
            problems.push(format!("{label}.temperature: must be positive"));
        }
        if !(light_shift.is_nan() || light_shift.is_finite()) {
            problems.push(format!("{label}.light_shift: must be finite"));
        }
        species.push(SpeciesParams::with_mass_ratio(n, mass_ratio, pump, light_shift, temperature));
    }

    if kappa.is_finite() && kappa <= 0.0 {
        problems.push("cavity.kappa: must be positive".into());
    }
    if matches!(kind, Kind::Heatflow) && species.len() != 2 {
        problems.push(format!(
            "species: heatflow needs exactly two species, found {}",
            species.len()
        ));
    }
    if matches!(kind, Kind::Threshold | Kind::Equilibrium | Kind::Sweep) && species.is_empty() {
        problems.push(format!("species: {kind} needs at least one species"));
    }

    let duration = run.number("duration")?.unwrap_or(0.0);
    if !(duration.is_finite() && duration >= 0.0) {
        problems.push("run.duration: must be non-negative".into());
    }
    let perturbation = run.number("perturbation")?.unwrap_or(0.0);
    if !(0.0..1.0).contains(&perturbation) {
        problems.push(format!("run.perturbation: {perturbation} must lie in [0, 1)"));
    }
    let noise = run.bool("noise")?.unwrap_or(true);
    let seed = run.get::<u64>("seed", "an unsigned 64-bit integer")?;
    let realisations = match (kind, run.count("realisations")?) {
        (Kind::Simulate, _) => 1,
        (_, Some(n)) => n,
        (Kind::Ensemble, None) => 16,
        (_, None) => 1,
    };
    if realisations < 1 {
        problems.push("run.realisations: must be at least 1".into());
    }
    let bins = run.count("bins")?.unwrap_or(64);
    if bins < 2 {
        problems.push("run.bins: must be at least 2".into());
    }
    let output = run
        .raw("output")
        .map_or_else(|| PathBuf::from("out"), |e| PathBuf::from(&e.value));
    let formats = match run.raw("formats") {
        None => Format::ALL.to_vec(),
        Some(e) => {
            let mut formats = Vec::new();
            for (offset, name) in split_list(&e.value) {
                let f = Format::ALL
                    .into_iter()
                    .find(|f| f.name() == name)
                    .ok_or_else(|| ConfigError::Parse {
                        line: e.line,
                        column: e.column + offset,
                        message: format!("unknown output format `{name}`"),
                    })?;
                if !formats.contains(&f) {
                    formats.push(f);
                }
            }
            formats
        }
    };

    let sweep = match find("sweep") {
        None => {
            if kind == Kind::Sweep {
                problems.push("sweep: kind = sweep needs a [sweep] section".into());
            }
            None
        }
        Some(section) => {
            if kind != Kind::Sweep {
                problems.push(format!("sweep: [sweep] is only valid with kind = sweep, not {kind}"));
            }
            let r = Reader { section };
            let parameter = match r.raw("parameter") {
                None => {
                    problems.push("sweep.parameter: required".into());
                    None
                }
                Some(e) => match ParamPath::parse(&e.value, species.len()) {
                    Ok(p) => Some(p),
                    Err(message) => {
                        problems.push(format!("sweep.parameter: {message}"));
                        None
                    }
                },
            };
            let start = r.number("start")?;
            let stop = r.number("stop")?;
            let count = r.count("count")?;
            let spacing = match r.raw("spacing").map(|e| (e, e.value.as_str())) {
                None | Some((_, "linear")) => Spacing::Linear,
                Some((_, "log")) => Spacing::Log,
                Some((e, other)) => {
                    return Err(ConfigError::Parse {
                        line: e.line,
                        column: e.column,
                        message: format!("spacing must be `linear` or `log`, not `{other}`"),
                    })
                }
            };
            let simulate = r.bool("simulate")?.unwrap_or(false);
            for (v, name) in [(start, "start"), (stop, "stop")] {
                match v {
                    None => problems.push(format!("sweep.{name}: required")),
                    Some(x) if !x.is_finite() => problems.push(format!("sweep.{name}: must be finite")),
                    Some(x) if spacing == Spacing::Log && x <= 0.0 => {
                        problems.push(format!("sweep.{name}: log spacing needs positive bounds"))
                    }
                    _ => {}
                }
            }
            match count {
                None => problems.push("sweep.count: required".into()),
                Some(c) if c < 2 => problems.push(format!("sweep.count: {c} must be at least 2")),
                _ => {}
            }
            match (parameter, start, stop, count) {
                (Some(parameter), Some(start), Some(stop), Some(count)) => Some(Sweep {
                    parameter,
                    start,
                    stop,
                    count,
                    spacing,
                    simulate,
                }),
                _ => None,
            }
        }
    };

    let cavity = CavityParams {
        kappa,
        detuning,
    };
    let dt = match run.number("dt")? {
        Some(dt) => dt,
        None if problems.is_empty() => default_timestep(&cavity, &species),
        None => f64::NAN,
    };
    if problems.is_empty() && !(dt.is_finite() && dt > 0.0) {
        problems.push("run.dt: must be positive".into());
    }
    let mut sim = SimConfig {
        species,
        cavity,
        dt,
        duration,
        stride: 1,
        noise,
        seed,
        initial: InitialCondition { perturbation },
    };
    sim.stride = match run.count("stride")? {
        Some(s) => s,
        None if problems.is_empty() => sim.n_steps().div_ceil(DEFAULT_SAMPLES).max(1),
        None => 1,
    };
    if sim.stride < 1 {
        problems.push("run.stride: must be at least 1".into());
    }
    if !problems.is_empty() {
        return Err(ConfigError::Invalid(problems));
    }
    if let Err(e) = sim.validate() {
        return Err(ConfigError::Invalid(vec![e.to_string()]));
    }
    Ok(ExperimentConfig {
        kind,
        sim,
        realisations,
        bins,
        output,
        formats,
        sweep,
    })
}

fn split_list(value: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for part in value.split(',') {
        let lead = part.len() - part.trim_start().len();
        if !part.trim().is_empty() {
            out.push((value[..offset + lead].chars().count(), part.trim()));
        }
        offset += part.len() + 1;
    }
    out
}

/// Shortest decimal string that parses back to exactly `x`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x == 0.0 || (1e-4..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl ExperimentConfig {
    /// Fully resolved configuration text; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let sim = &self.sim;
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "kind = {}", self.kind);
        let _ = writeln!(out, "duration = {}", fmt_f64(sim.duration));
        let _ = writeln!(out, "dt = {}", fmt_f64(sim.dt));
        let _ = writeln!(out, "stride = {}", sim.stride);
        let _ = writeln!(out, "noise = {}", sim.noise);
        if let Some(seed) = sim.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        let _ = writeln!(out, "perturbation = {}", fmt_f64(sim.initial.perturbation));
        let _ = writeln!(out, "realisations = {}", self.realisations);
        let _ = writeln!(out, "bins = {}", self.bins);
        let _ = writeln!(out, "output = {}", self.output.display());
        let formats: Vec<&str> = self.formats.iter().map(|f| f.name()).collect();
        let _ = writeln!(out, "formats = {}", formats.join(", "));
        let _ = writeln!(out, "\n[cavity]");
        let _ = writeln!(out, "kappa = {}", fmt_f64(sim.cavity.kappa));
        let _ = writeln!(out, "detuning = {}", fmt_f64(sim.cavity.detuning));
        for s in &sim.species {
            let _ = writeln!(out, "\n[species]");
            let _ = writeln!(out, "n = {}", s.n_particles);
            let _ = writeln!(out, "mass_ratio = {}", fmt_f64(s.mass_ratio()));
            let _ = writeln!(out, "pump = {}", fmt_f64(s.pump));
            let _ = writeln!(out, "light_shift = {}", fmt_f64(s.light_shift));
            let _ = writeln!(out, "temperature = {}", fmt_f64(s.temperature));
        }
        if let Some(sw) = &self.sweep {
            let _ = writeln!(out, "\n[sweep]");
            let _ = writeln!(out, "parameter = {}", sw.parameter);
            let _ = writeln!(out, "start = {}", fmt_f64(sw.start));
            let _ = writeln!(out, "stop = {}", fmt_f64(sw.stop));
            let _ = writeln!(out, "count = {}", sw.count);
            let spacing = match sw.spacing {
                Spacing::Linear => "linear",
                Spacing::Log => "log",
            };
            let _ = writeln!(out, "spacing = {spacing}");
            let _ = writeln!(out, "simulate = {}", sw.simulate);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[run]\nkind = simulate\n[cavity]\nkappa = 10\ndetuning = -10\n[species]\nn = 5\npump = 1\ntemperature = 2\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.kind, Kind::Simulate);
        assert_eq!(c.realisations, 1);
        assert_eq!(c.bins, 64);
        assert_eq!(c.formats, Format::ALL.to_vec());
        assert_eq!(c.sim.duration, 0.0);
        assert!(c.sim.noise);
        assert_eq!(c.sim.seed, None);
        let s = &c.sim.species[0];
        assert_eq!(s.mass_ratio(), 1.0);
        assert_eq!(s.light_shift, 0.0);
        assert_eq!(c.sim.dt, default_timestep(&c.sim.cavity, &c.sim.species));
        let echo = c.to_text();
        assert!(echo.contains("dt = "));
        assert!(echo.contains("mass_ratio = 1"));
        assert_eq!(parse_config(&echo).unwrap(), c);
    }

    #[test]
    fn collective_keys_are_divided_by_n() {
        let text = MINIMAL.replace("pump = 1", "collective_pump = 600\ncollective_light_shift = -0.1")
            .replace("n = 5", "n = 300");
        let c = parse_config(&text).unwrap();
        let s = &c.sim.species[0];
        assert_eq!(s.pump, 600.0 / 300f64.sqrt());
        assert_eq!(s.light_shift, -0.1 / 300.0);
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn out_of_range_perturbation_names_the_field() {
        let text = MINIMAL.replace("kind = simulate", "kind = simulate\nperturbation = 1.5");
        let ConfigError::Invalid(problems) = parse_config(&text).unwrap_err() else {
            panic!("expected a validation error");
        };
        assert_eq!(problems.len(), 1);
        assert!(problems[0].starts_with("run.perturbation"), "{problems:?}");
    }

    #[test]
    fn every_violation_is_listed() {
        let text = "[run]\nkind = sweep\nperturbation = 2\n[cavity]\nkappa = -1\n[species]\nn = 0\nmass_ratio = 3\npump = 1\ntemperature = -1\n";
        let ConfigError::Invalid(problems) = parse_config(text).unwrap_err() else {
            panic!("expected a validation error");
        };
        for field in [
            "cavity.detuning",
            "cavity.kappa",
            "species.1.n",
            "species.1.mass_ratio",
            "species.1.temperature",
            "run.perturbation",
            "sweep:",
        ] {
            assert!(problems.iter().any(|p| p.starts_with(field)), "{field} missing in {problems:?}");
        }
    }

    #[test]
    fn parse_errors_carry_positions() {
        let cases = [
            ("[run]\nkind = simulate\n  colour = red\n", 3, 3, "unknown key"),
            ("[run]\nkind = simulat\n", 2, 8, "unknown kind"),
            ("[runs]\n", 1, 2, "unknown section"),
            ("kind = simulate\n", 1, 1, "outside"),
            ("[run]\nkind\n", 2, 1, "key = value"),
            ("[run]\nkind = simulate\n[cavity]\nkappa = ten\n", 4, 9, "not a number"),
            ("[run]\nkind = simulate\nkind = ensemble\n", 3, 1, "duplicate"),
            ("[run]\n[run]\n", 2, 1, "twice"),
            ("[run\n", 1, 5, "expected `]`"),
            ("[run]\nformats = summary, csvs\n", 2, 20, "unknown output format"),
        ];
        for (text, line, column, needle) in cases {
            match parse_config(text) {
                Err(ConfigError::Parse {
                    line: l,
                    column: c,
                    message,
                }) => {
                    assert_eq!((l, c), (line, column), "{text:?}: {message}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# header\n\n{}", MINIMAL.replace("n = 5", "n = 5   # five"));
        assert_eq!(parse_config(&text).unwrap().sim.species[0].n_particles, 5);
    }

    #[test]
    fn sweep_paths_resolve_to_numeric_fields() {
        assert_eq!(ParamPath::parse("cavity.detuning", 1), Ok(ParamPath::Detuning));
        assert_eq!(
            ParamPath::parse("species.2.temperature", 2),
            Ok(ParamPath::Species(1, SpeciesField::Temperature))
        );
        assert!(ParamPath::parse("species.3.temperature", 2).is_err());
        assert!(ParamPath::parse("species.1.mass_ratio", 2).is_err());
        assert!(ParamPath::parse("species.1.colour", 2).is_err());
        assert!(ParamPath::parse("run.kind", 2).is_err());
        for p in ["cavity.kappa", "run.dt", "species.2.collective_pump", "species.1.n"] {
            assert_eq!(ParamPath::parse(p, 2).unwrap().to_string(), p);
        }
    }

    #[test]
    fn sweep_needs_two_points() {
        let text = MINIMAL.replace("kind = simulate", "kind = sweep")
            + "[sweep]\nparameter = cavity.detuning\nstart = -1\nstop = -10\ncount = 1\n";
        let ConfigError::Invalid(problems) = parse_config(&text).unwrap_err() else {
            panic!("expected a validation error");
        };
        assert!(problems.iter().any(|p| p.starts_with("sweep.count")));
        let ok = text.replace("count = 1", "count = 4\nspacing = log").replace("-1\n", "1\n").replace("-10\n", "10\n");
        let c = parse_config(&ok).unwrap();
        let values = c.sweep.as_ref().unwrap().values();
        assert_eq!(values.len(), 4);
        assert!((values[1] - 10f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, -0.0, 1.0, 0.1, 1e-7, -3.25e-300, 6.02e23, 1e16, 9999.5, f64::MAX, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-7), "1e-7");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert!(fmt_f64(f64::NAN).parse::<f64>().unwrap().is_nan());
    }
}
