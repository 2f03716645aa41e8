//! Flat `key = value` experiment files.
//!
//! Lines are `key = value`; `#` starts a comment. Keys not listed in [`KEYS`]
//! are rejected, as are duplicates within one file. `--override key=value`
//! entries replace file values before anything is parsed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bathy::{BottomProfile, Field, Grid, ModelKind, ModelSpec, PipelineConfig, ProfileKind, SolveOptions};

use crate::error::{CliError, Result};

/// Every recognised key with its default (`None` when unset by default).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("model", Some("boussinesq")),
    ("mu", Some("1")),
    ("n", Some("512")),
    ("dt", Some("0.001")),
    ("amplitude", Some("0.0525")),
    ("profile", Some("profile1")),
    ("profile_value", None),
    ("profile_file", None),
    ("t_end", Some("2000")),
    ("record_every", Some("1000")),
    ("epsilon", Some("0.01")),
    ("zeta_c", Some("-0.25")),
    ("lambda", None),
    ("nu", None),
    ("observer_bottom", Some("guess")),
    ("snapshots", Some("200")),
    ("threshold", Some("1e-4")),
    ("harvest_fraction", Some("0.1")),
    ("cadence", Some("1")),
    ("history_stride", Some("500")),
    ("allow_large_epsilon", Some("false")),
    ("eigen_cutoff", None),
    ("eigen_snapshots", Some("1,10,100,200")),
    ("eigen_amplitude", Some("0.1")),
    ("archive", None),
    ("stream", None),
    ("write_trajectory", Some("true")),
];

/// Raw key-value pairs after overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(p) => &line[..p],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = split_pair(line).ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            check_key(&key)?;
            if entries.insert(key.clone(), value).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = split_pair(spec).ok_or_else(|| CliError::Config(format!("override `{spec}`: expected key=value")))?;
        check_key(&key)?;
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Value from the file, else the default.
    fn value(&self, key: &str) -> Option<&str> {
        self.get(key).or_else(|| KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d))
    }
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(CliError::Config(format!("unknown key `{key}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProfileChoice {
    Profile1,
    Profile2,
    Constant(f64),
    /// Second column of a CSV file (first if it has only one), header optional.
    File(PathBuf),
}

/// Which bottom the observer of `observe` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObserverBottom {
    Guess,
    Truth,
}

/// Typed experiment settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub mu: f64,
    pub n: usize,
    pub dt: f64,
    pub amplitude: f64,
    pub profile: ProfileChoice,
    /// `None` for `t_end = auto`.
    pub t_end: Option<f64>,
    pub record_every: usize,
    pub epsilon: f64,
    pub zeta_c: f64,
    pub lambda: Option<f64>,
    pub nu: Option<f64>,
    pub observer_bottom: ObserverBottom,
    pub snapshots: usize,
    pub threshold: f64,
    pub harvest_fraction: f64,
    pub cadence: usize,
    pub history_stride: usize,
    pub allow_large_epsilon: bool,
    pub eigen_cutoff: Option<f64>,
    pub eigen_snapshots: Vec<usize>,
    pub eigen_amplitude: f64,
    pub archive: Option<PathBuf>,
    pub stream: Option<PathBuf>,
    pub write_trajectory: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_raw(&RawConfig::default()).expect("defaults parse")
    }
}

fn parse_num<T: FromStr>(raw: &RawConfig, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let v = raw.value(key).ok_or_else(|| CliError::invalid(key, "missing"))?;
    v.parse::<T>().map_err(|e| CliError::invalid(key, format!("`{v}`: {e}")))
}

fn parse_opt<T: FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match raw.value(key) {
        None | Some("") | Some("none") => Ok(None),
        Some(_) => parse_num(raw, key).map(Some),
    }
}

fn parse_bool(raw: &RawConfig, key: &str) -> Result<bool> {
    match raw.value(key).unwrap_or("").to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(CliError::invalid(key, format!("`{other}` is not a boolean"))),
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::invalid(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::invalid(key, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let model_name = raw.value("model").unwrap_or_default();
        let model = ModelKind::from_str(model_name).map_err(|e| CliError::invalid("model", e.to_string()))?;
        let profile = match raw.value("profile").unwrap_or_default() {
            "profile1" => ProfileChoice::Profile1,
            "profile2" => ProfileChoice::Profile2,
            "constant" => ProfileChoice::Constant(finite(
                "profile_value",
                parse_opt(raw, "profile_value")?.ok_or_else(|| CliError::invalid("profile_value", "required by profile = constant"))?,
            )?),
            "file" => ProfileChoice::File(
                raw.value("profile_file")
                    .map(PathBuf::from)
                    .ok_or_else(|| CliError::invalid("profile_file", "required by profile = file"))?,
            ),
            other => {
                return Err(CliError::invalid("profile", format!("`{other}` (expected profile1, profile2, constant or file)")))
            }
        };
        let t_end = match raw.value("t_end") {
            Some("auto") => None,
            _ => Some(parse_num::<f64>(raw, "t_end")?),
        };
        if let Some(t) = t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CliError::invalid("t_end", format!("must be >= 0 or `auto`, got {t}")));
            }
        }
        let observer_bottom = match raw.value("observer_bottom").unwrap_or_default() {
            "guess" => ObserverBottom::Guess,
            "truth" => ObserverBottom::Truth,
            other => return Err(CliError::invalid("observer_bottom", format!("`{other}` (expected guess or truth)"))),
        };
        let eigen_snapshots = raw
            .value("eigen_snapshots")
            .unwrap_or_default()
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| match s.parse::<usize>() {
                Ok(m) if m > 0 => Ok(m),
                _ => Err(CliError::invalid("eigen_snapshots", format!("`{s}` is not a positive integer"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if eigen_snapshots.is_empty() {
            return Err(CliError::invalid("eigen_snapshots", "needs at least one count"));
        }
        let lambda = parse_opt::<f64>(raw, "lambda")?;
        let nu = parse_opt::<f64>(raw, "nu")?;
        if lambda.is_some() != nu.is_some() {
            return Err(CliError::invalid("lambda", "lambda and nu must be given together"));
        }
        let cfg = Self {
            model,
            mu: positive("mu", parse_num(raw, "mu")?)?,
            n: parse_num(raw, "n")?,
            dt: positive("dt", parse_num(raw, "dt")?)?,
            amplitude: positive("amplitude", parse_num(raw, "amplitude")?)?,
            profile,
            t_end,
            record_every: parse_num(raw, "record_every")?,
            epsilon: parse_num(raw, "epsilon")?,
            zeta_c: finite("zeta_c", parse_num(raw, "zeta_c")?)?,
            lambda,
            nu,
            observer_bottom,
            snapshots: parse_num(raw, "snapshots")?,
            threshold: parse_num(raw, "threshold")?,
            harvest_fraction: parse_num(raw, "harvest_fraction")?,
            cadence: parse_num(raw, "cadence")?,
            history_stride: parse_num(raw, "history_stride")?,
            allow_large_epsilon: parse_bool(raw, "allow_large_epsilon")?,
            eigen_cutoff: parse_opt(raw, "eigen_cutoff")?,
            eigen_snapshots,
            eigen_amplitude: positive("eigen_amplitude", parse_num(raw, "eigen_amplitude")?)?,
            archive: raw.value("archive").filter(|s| !s.is_empty()).map(PathBuf::from),
            stream: raw.value("stream").filter(|s| !s.is_empty()).map(PathBuf::from),
            write_trajectory: parse_bool(raw, "write_trajectory")?,
        };
        if cfg.record_every == 0 {
            return Err(CliError::invalid("record_every", "must be positive"));
        }
        Grid::<f64>::new(cfg.n)?;
        Ok(cfg)
    }

    /// Reads `path`, applies `overrides` in order and parses.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut raw = RawConfig::load(path)?;
        for o in overrides {
            raw.apply_override(o)?;
        }
        Self::from_raw(&raw)
    }

    pub fn model_spec(&self) -> Result<ModelSpec<f64>> {
        Ok(ModelSpec::new(self.model, self.mu)?)
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        Ok(Grid::new(self.n)?)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig<f64>> {
        let mut c = PipelineConfig::new(self.model_spec()?);
        c.n = self.n;
        c.dt = self.dt;
        c.epsilon = self.epsilon;
        c.zeta_c = self.zeta_c;
        c.snapshots = self.snapshots;
        c.t_end = self.t_end;
        c.threshold = self.threshold;
        c.amplitude = self.amplitude;
        c.harvest_fraction = self.harvest_fraction;
        c.cadence = self.cadence;
        c.history_stride = self.history_stride;
        c.allow_large_epsilon = self.allow_large_epsilon;
        c.solve = SolveOptions { eigen_cutoff: self.eigen_cutoff };
        c.validate()?;
        Ok(c)
    }

    /// The true bottom sampled on the grid.
    pub fn bottom(&self) -> Result<BottomProfile<f64>> {
        let grid = self.grid()?;
        let kind = match &self.profile {
            ProfileChoice::Profile1 => ProfileKind::Profile1,
            ProfileChoice::Profile2 => ProfileKind::Profile2,
            ProfileChoice::Constant(c) => ProfileKind::Constant(*c),
            ProfileChoice::File(path) => ProfileKind::Custom(read_profile_file(path)?),
        };
        Ok(bathy::profile(&kind, &grid)?)
    }

    /// `t_end` for commands that need a fixed duration.
    pub fn fixed_t_end(&self) -> Result<f64> {
        self.t_end.ok_or_else(|| CliError::invalid("t_end", "`auto` is only meaningful for observe and reconstruct"))
    }
}

fn read_profile_file(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = rec.get(if rec.len() > 1 { 1 } else { 0 }).unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(CliError::invalid("profile_file", format!("{}: row {}: `{field}` is not a number", path.display(), i + 1))),
        }
    }
    let _ = Field::new(values.clone())?;
    Ok(values)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::invalid("profile_file", format!("{}: {other:?}", path.display())),
    }
}
