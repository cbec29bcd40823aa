//! Flat `key = value` experiment configuration.
//!
//! ```text
//! experiment = skin-steady-state
//!
//! [model]
//! L = 50
//! gamma = 0.4
//!
//! [run]
//! T = 300
//! ```
//!
//! Keys outside a section belong to the top level. `#` starts a comment.
//! Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    AtomPurity,
    AtomMethodCompare,
    TrivialChain,
    SkinSteadyState,
    BetaScan,
    EntropyScan,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::AtomPurity,
        Experiment::AtomMethodCompare,
        Experiment::TrivialChain,
        Experiment::SkinSteadyState,
        Experiment::BetaScan,
        Experiment::EntropyScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::AtomPurity => "atom-purity",
            Experiment::AtomMethodCompare => "atom-method-compare",
            Experiment::TrivialChain => "trivial-chain",
            Experiment::SkinSteadyState => "skin-steady-state",
            Experiment::BetaScan => "beta-scan",
            Experiment::EntropyScan => "entropy-scan",
        }
    }

    pub fn is_chain(self) -> bool {
        !matches!(self, Experiment::AtomPurity | Experiment::AtomMethodCompare)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Where a value came from, for error messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => f.write_str("command line"),
            Origin::Default => f.write_str("default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Option<Origin>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.origin {
            Some(o) => write!(f, "{o}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Strips one layer of matching quotes or list brackets.
fn unwrap_value(value: &str) -> String {
    let v = value.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('[', ']')] {
        if v.len() >= 2 && v.starts_with(open) && v.ends_with(close) {
            return v[1..v.len() - 1].trim().to_string();
        }
    }
    v.to_string()
}

fn err(origin: Option<Origin>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        origin,
        message: message.into(),
    }
}

/// Every accepted key, `section.key` or a bare top-level key.
pub const KEYS: &[&str] = &[
    "experiment",
    "model.J",
    "model.gamma",
    "model.eta",
    "model.L",
    "model.filling",
    "model.phase",
    "model.boundary",
    "run.dt",
    "run.T",
    "run.n_traj",
    "run.n_traj_qt1",
    "run.master_seed",
    "run.record_stride",
    "run.window_fraction",
    "run.threads",
    "scan.gammas",
    "scan.etas",
    "scan.sizes",
    "scan.delta_points",
    "output.dir",
];

/// Raw values keyed by `section.key`.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, (String, Origin)>,
}

impl RawConfig {
    /// Parses the file text, collecting every error.
    pub fn parse(text: &str) -> Result<Self, Vec<ConfigError>> {
        let mut raw = RawConfig::default();
        let mut errors = Vec::new();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let origin = Origin::Line(i + 1);
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                match rest.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => section = name.trim().to_string(),
                    _ => errors.push(err(Some(origin), format!("malformed section header `{line}`"))),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(err(Some(origin), format!("expected `key = value`, got `{line}`")));
                continue;
            };
            let key = key.trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if let Err(e) = raw.insert(&full, value.trim(), origin) {
                errors.push(e);
            }
        }
        if errors.is_empty() {
            Ok(raw)
        } else {
            Err(errors)
        }
    }

    fn insert(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(err(Some(origin), format!("unknown key `{key}`")));
        }
        if origin != Origin::Override {
            if let Some((_, Origin::Line(prev))) = self.values.get(key) {
                return Err(err(
                    Some(origin),
                    format!("duplicate key `{key}` (first set on line {prev})"),
                ));
            }
        }
        self.values.insert(key.to_string(), (unwrap_value(value), origin));
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(err(
                Some(Origin::Override),
                format!("override `{assignment}` is not `key=value`"),
            ));
        };
        self.insert(key.trim(), value.trim(), Origin::Override)
    }

    fn get(&self, key: &str) -> Option<(&str, Origin)> {
        self.values.get(key).map(|(v, o)| (v.as_str(), *o))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Filling {
    Half,
    Particles(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    OccupiedFirst,
    EmptyFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Open,
    Periodic,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelParams {
    pub hopping: f64,
    pub gamma: f64,
    pub eta: f64,
    pub sites: usize,
    pub filling: Filling,
    pub phase: Phase,
    pub boundary: BoundaryKind,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunParams {
    pub dt: f64,
    pub horizon: f64,
    pub n_traj: usize,
    pub n_traj_qt1: usize,
    pub master_seed: u64,
    pub record_stride: usize,
    pub window_fraction: f64,
    /// 0 selects the number of available cores.
    pub threads: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanParams {
    pub gammas: Vec<f64>,
    pub etas: Vec<f64>,
    pub sizes: Vec<usize>,
    pub delta_points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelParams,
    pub run: RunParams,
    pub scan: ScanParams,
    pub output_dir: PathBuf,
    /// Effective `key = value` pairs with their origin, in key order.
    #[serde(skip)]
    pub effective: Vec<(String, String, Origin)>,
}

/// Experiment-dependent default for a key, as config text.
fn default_for(exp: Experiment, key: &str) -> Option<&'static str> {
    use Experiment::*;
    let atom = matches!(exp, AtomPurity | AtomMethodCompare);
    Some(match key {
        "model.J" => "1",
        "model.gamma" if atom => "0.5",
        "model.gamma" if exp == TrivialChain => "0.3",
        "model.gamma" => "0.4",
        "model.eta" if atom => "0.2",
        "model.eta" if exp == TrivialChain => "0.5",
        "model.eta" => "0.6",
        "model.filling" => "half",
        "model.phase" => "occupied-first",
        "model.boundary" => "open",
        "run.dt" => "0.005",
        "run.T" if atom || exp == TrivialChain => "10",
        "run.T" if exp == SkinSteadyState => "300",
        "run.T" => "200",
        "run.n_traj" if exp == AtomMethodCompare => "10000",
        "run.n_traj" => "60",
        "run.n_traj_qt1" => "3000",
        "run.master_seed" => "0",
        "run.record_stride" if atom || exp == TrivialChain => "20",
        "run.record_stride" => "200",
        "run.window_fraction" => "0.1",
        "run.threads" => "0",
        "scan.gammas" if exp == BetaScan => "0.2, 0.4, 0.6, 0.8",
        "scan.gammas" => "0.4",
        "scan.etas" => "0, 0.4, 0.8, 1",
        "scan.sizes" => "",
        "scan.delta_points" => "8",
        "output.dir" => return None,
        _ => return None,
    })
}

/// Typed view over a [`RawConfig`] that accumulates errors.
struct Reader<'a> {
    raw: &'a RawConfig,
    experiment: Experiment,
    errors: Vec<ConfigError>,
    effective: Vec<(String, String, Origin)>,
}

impl Reader<'_> {
    fn value(&mut self, key: &str) -> Option<(String, Origin)> {
        let found = match self.raw.get(key) {
            Some((v, o)) => Some((v.to_string(), o)),
            None => default_for(self.experiment, key).map(|v| (v.to_string(), Origin::Default)),
        };
        if let Some((v, o)) = &found {
            self.effective.push((key.to_string(), v.clone(), *o));
        }
        found
    }

    fn parsed<T: FromStr>(&mut self, key: &str, what: &str) -> Option<(T, Origin)> {
        let (v, o) = self.value(key)?;
        match v.parse::<T>() {
            Ok(x) => Some((x, o)),
            Err(_) => {
                self.errors
                    .push(err(Some(o), format!("`{key}` = `{v}` is not {what}")));
                None
            }
        }
    }

    fn number(&mut self, key: &str, ok: impl Fn(f64) -> bool, allowed: &str) -> f64 {
        match self.parsed::<f64>(key, "a number") {
            Some((x, o)) if !x.is_finite() || !ok(x) => {
                self.errors.push(err(
                    Some(o),
                    format!("`{key}` = {x} is out of range: expected {allowed}"),
                ));
                f64::NAN
            }
            Some((x, _)) => x,
            None => f64::NAN,
        }
    }

    fn count(&mut self, key: &str, min: usize, allowed: &str) -> usize {
        match self.parsed::<usize>(key, "a non-negative integer") {
            Some((x, o)) if x < min => {
                self.errors.push(err(
                    Some(o),
                    format!("`{key}` = {x} is out of range: expected {allowed}"),
                ));
                0
            }
            Some((x, _)) => x,
            None => 0,
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, what: &str) -> (Vec<T>, Option<Origin>) {
        let Some((v, o)) = self.value(key) else {
            return (Vec::new(), None);
        };
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse::<T>() {
                Ok(x) => out.push(x),
                Err(_) => self
                    .errors
                    .push(err(Some(o), format!("`{key}` entry `{item}` is not {what}"))),
            }
        }
        (out, Some(o))
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T> {
        let (v, o) = self.value(key)?;
        match options.iter().find(|(name, _)| *name == v) {
            Some((_, t)) => Some(*t),
            None => {
                let names: Vec<_> = options.iter().map(|(n, _)| *n).collect();
                self.errors.push(err(
                    Some(o),
                    format!("`{key}` = `{v}`: expected one of {}", names.join(", ")),
                ));
                None
            }
        }
    }
}

pub const REQUIRED_HINT: &str =
    "required keys: `experiment` (all experiments), `model.L` (trivial-chain, skin-steady-state, beta-scan, entropy-scan)";

impl ExperimentConfig {
    /// Typed, range-checked configuration. `experiment` may be supplied by
    /// the subcommand; a conflicting value in the file is an error.
    pub fn from_raw(raw: &RawConfig, implied: Option<Experiment>) -> Result<Self, Vec<ConfigError>> {
        let mut errors = Vec::new();
        let file_exp = raw.get("experiment").map(|(v, o)| (v.parse::<Experiment>(), o));
        let experiment = match (file_exp, implied) {
            (None, None) => {
                return Err(vec![err(None, format!("missing `experiment`; {REQUIRED_HINT}"))]);
            }
            (None, Some(e)) => e,
            (Some((Err(msg), o)), _) => return Err(vec![err(Some(o), msg)]),
            (Some((Ok(e), o)), Some(sub)) if e != sub => {
                return Err(vec![err(
                    Some(o),
                    format!("config is for `{e}` but the subcommand is `{sub}`"),
                )]);
            }
            (Some((Ok(e), _)), _) => e,
        };
        let mut r = Reader {
            raw,
            experiment,
            errors: Vec::new(),
            effective: vec![(
                "experiment".into(),
                experiment.name().into(),
                raw.get("experiment").map_or(Origin::Override, |(_, o)| o),
            )],
        };

        let hopping = r.number("model.J", |x| x > 0.0, "J > 0");
        let gamma = r.number("model.gamma", |x| x >= 0.0, "gamma >= 0");
        let eta = r.number("model.eta", |x| (0.0..=1.0).contains(&x), "eta in [0, 1]");
        let sites = if !experiment.is_chain() {
            1
        } else if raw.get("model.L").is_none() {
            errors.push(err(
                None,
                format!("missing `model.L` for `{experiment}`; {REQUIRED_HINT}"),
            ));
            0
        } else {
            let min = if experiment == Experiment::TrivialChain { 2 } else { 4 };
            r.count("model.L", min, &format!("L >= {min}"))
        };
        let filling = match r.value("model.filling") {
            Some((v, _)) if v == "half" => Filling::Half,
            Some((v, o)) => match v.parse::<usize>() {
                Ok(n) if n >= 1 && (sites == 0 || n < sites) => Filling::Particles(n),
                _ => {
                    r.errors.push(err(
                        Some(o),
                        format!("`model.filling` = `{v}`: expected `half` or a particle count 1 <= N < L"),
                    ));
                    Filling::Half
                }
            },
            None => Filling::Half,
        };
        let phase = r
            .choice(
                "model.phase",
                &[("occupied-first", Phase::OccupiedFirst), ("empty-first", Phase::EmptyFirst)],
            )
            .unwrap_or(Phase::OccupiedFirst);
        let boundary = r
            .choice(
                "model.boundary",
                &[("open", BoundaryKind::Open), ("periodic", BoundaryKind::Periodic)],
            )
            .unwrap_or(BoundaryKind::Open);

        let dt = r.number("run.dt", |x| x > 0.0, "dt > 0");
        let horizon = r.number("run.T", |x| x > 0.0, "T > 0");
        let n_traj = r.count("run.n_traj", 1, "n_traj >= 1");
        let n_traj_qt1 = r.count("run.n_traj_qt1", 1, "n_traj_qt1 >= 1");
        let master_seed = r
            .parsed::<u64>("run.master_seed", "a non-negative integer")
            .map_or(0, |(x, _)| x);
        let record_stride = r.count("run.record_stride", 1, "record_stride >= 1");
        let window_fraction = r.number(
            "run.window_fraction",
            |x| x > 0.0 && x <= 1.0,
            "window_fraction in (0, 1]",
        );
        let threads = r.count("run.threads", 0, "threads >= 0");

        let (gammas, gorigin) = r.list::<f64>("scan.gammas", "a number");
        let (etas, eorigin) = r.list::<f64>("scan.etas", "a number");
        let (sizes, sorigin) = r.list::<usize>("scan.sizes", "a non-negative integer");
        let delta_points = r.count("scan.delta_points", 2, "delta_points >= 2");
        if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            r.errors.push(err(gorigin, "`scan.gammas`: expected every gamma >= 0"));
        }
        if experiment == Experiment::BetaScan {
            if gammas.len() < 3 {
                r.errors.push(err(gorigin, "`scan.gammas`: beta-scan needs at least 3 values"));
            }
            if gammas.iter().any(|g| *g <= 0.0) {
                r.errors.push(err(gorigin, "`scan.gammas`: beta-scan needs gamma > 0"));
            }
        }
        if etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
            r.errors.push(err(eorigin, "`scan.etas`: expected every eta in [0, 1]"));
        }
        if sizes.iter().any(|&l| l < 4 || l % 2 == 1) {
            r.errors.push(err(sorigin, "`scan.sizes`: expected even sizes L >= 4"));
        }
        if experiment == Experiment::AtomPurity && etas.is_empty() {
            r.errors.push(err(eorigin, "`scan.etas` must not be empty"));
        }
        if matches!(experiment, Experiment::EntropyScan | Experiment::BetaScan) && gammas.is_empty() {
            r.errors.push(err(gorigin, "`scan.gammas` must not be empty"));
        }
        if experiment.is_chain() && filling == Filling::Half && sites % 2 == 1 {
            r.errors.push(err(None, "`model.filling = half` needs an even `model.L`"));
        }

        let output_dir = match r.value("output.dir") {
            Some((v, _)) => PathBuf::from(v),
            None => {
                r.effective
                    .push(("output.dir".into(), format!("out/{experiment}"), Origin::Default));
                PathBuf::from(format!("out/{experiment}"))
            }
        };

        errors.extend(r.errors);
        if !errors.is_empty() {
            return Err(errors);
        }
        let mut effective = r.effective;
        effective.sort_by(|a, b| a.0.cmp(&b.0));
        effective.dedup_by(|a, b| a.0 == b.0);
        Ok(ExperimentConfig {
            experiment,
            model: ModelParams {
                hopping,
                gamma,
                eta,
                sites,
                filling,
                phase,
                boundary,
            },
            run: RunParams {
                dt,
                horizon,
                n_traj,
                n_traj_qt1,
                master_seed,
                record_stride,
                window_fraction,
                threads,
            },
            scan: ScanParams {
                gammas,
                etas,
                sizes,
                delta_points,
            },
            output_dir,
            effective,
        })
    }

    /// `key = value` listing of the effective parameters.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v, o) in &self.effective {
            let note = match o {
                Origin::Default => "  # default",
                Origin::Override => "  # command line",
                Origin::Line(_) => "",
            };
            s.push_str(&format!("{k} = {v}{note}\n"));
        }
        s
    }

    /// Effective values as a sorted map, for the manifest.
    pub fn echo_map(&self) -> BTreeMap<String, String> {
        self.effective
            .iter()
            .map(|(k, v, _)| (k.clone(), v.clone()))
            .collect()
    }
}

/// Parses text plus overrides into a typed configuration.
pub fn load(
    text: &str,
    overrides: &[String],
    implied: Option<Experiment>,
) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let mut raw = RawConfig::parse(text)?;
    let errors: Vec<_> = overrides.iter().filter_map(|o| raw.set(o).err()).collect();
    if !errors.is_empty() {
        return Err(errors);
    }
    ExperimentConfig::from_raw(&raw, implied)
}
