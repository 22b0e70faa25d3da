//! Command-line front end: flag/config-file layering, validation into a
//! [`RunConfig`], and orchestration of each subcommand into CSV artifacts.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::brownian::{write_matrices, IncrementStream};
use crate::error::Error;
use crate::harness::{observe_ensemble, steps_for, strong_error_study, weak_error_study, Ensemble, ErrorTable};
use crate::integrator::{drive_path, trajectory_row, TRAJECTORY_COLUMNS};
use crate::matrix::{cauchy_transform_of_spectrum, HermitianMatrix};
use crate::model::{cir_model, gbm1_model, ou_model, FsdeModel, PsdPolicy};
use crate::spectral::{
    default_probes, stieltjes_invert, uniform_grid, write_density_csv, write_histogram_csv, write_moments_csv,
    write_probes_csv, SpectralSummary, DEFAULT_BINS, DEFAULT_EPS,
};

pub const MODEL_NAMES: [&str; 3] = ["ou", "gbm1", "cir"];

/// Grid points of the `density` curve.
const DENSITY_INTERVALS: usize = 400;

#[derive(Parser, Debug)]
#[command(name = "freesde", version, about = "Simulate free SDEs on random matrices with free Euler-Maruyama")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Subcommand, Debug)]
pub enum CliCommand {
    /// One trajectory: k, t, φ(X), extreme eigenvalues, clamp events.
    Simulate(RawArgs),
    /// Eigenvalue histogram and moments of the terminal ensemble.
    Spectrum(RawArgs),
    /// Density recovered from the ensemble Cauchy transform.
    Density(RawArgs),
    /// Strong error table over coarsening factors.
    StrongOrder(RawArgs),
    /// Weak error table over step sizes.
    WeakOrder(RawArgs),
}

/// Flags as typed on the command line or read from a config file. Every
/// field is optional until [`validate`] resolves it.
#[derive(Args, Debug, Default, Clone, PartialEq)]
pub struct RawArgs {
    /// ou, gbm1 or cir.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Matrix dimension N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Horizon.
    #[arg(long = "T", value_parser = parse_real)]
    pub horizon: Option<f64>,
    /// Number of steps.
    #[arg(long = "L")]
    pub steps: Option<usize>,
    /// Step size (the finest one for strong-order). Accepts `2^-10`.
    #[arg(long, value_parser = parse_real)]
    pub dt: Option<f64>,
    /// Number of paths.
    #[arg(long = "M")]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coarsening factors, comma separated.
    #[arg(long = "R-list", value_delimiter = ',')]
    pub r_list: Option<Vec<usize>>,
    /// Step sizes, comma separated.
    #[arg(long = "dt-list", value_delimiter = ',', value_parser = parse_real)]
    pub dt_list: Option<Vec<f64>>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Stieltjes inversion bandwidth.
    #[arg(long, value_parser = parse_real)]
    pub eps: Option<f64>,
    /// Histogram range override, lower end.
    #[arg(long = "hist-min", value_parser = parse_real, allow_hyphen_values = true)]
    pub hist_min: Option<f64>,
    #[arg(long = "hist-max", value_parser = parse_real, allow_hyphen_values = true)]
    pub hist_max: Option<f64>,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Fail instead of clamping negative eigenvalues under a square root.
    #[arg(long = "strict-psd")]
    pub strict_psd: bool,
    /// Also write increments.bin and states.bin (simulate only).
    #[arg(long)]
    pub dump: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Flat `key = value` file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parses a real number, also in the form `2^-10`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| format!("invalid number `{s}`"))?;
            let exp: i32 = exp.trim().parse().map_err(|_| format!("invalid exponent in `{s}`"))?;
            base.powi(exp)
        }
        None => s.parse().map_err(|_| format!("invalid number `{s}`"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_flag<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.trim().parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_list<T>(key: &str, value: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| item(s).map_err(|e| format!("`{key}`: {e}")))
        .collect()
}

impl RawArgs {
    /// Sets one key from its textual value. Keys are the flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let real = |v: &str| parse_real(v).map_err(|e| format!("`{key}`: {e}"));
        match key {
            "model" => self.model = Some(value.trim().to_string()),
            "theta" => self.theta = Some(real(value)?),
            "sigma" => self.sigma = Some(real(value)?),
            "a" => self.a = Some(real(value)?),
            "b" => self.b = Some(real(value)?),
            "n" => self.n = Some(parse_flag(key, value)?),
            "T" => self.horizon = Some(real(value)?),
            "L" => self.steps = Some(parse_flag(key, value)?),
            "dt" => self.dt = Some(real(value)?),
            "M" => self.paths = Some(parse_flag(key, value)?),
            "seed" => self.seed = Some(parse_flag(key, value)?),
            "R-list" => self.r_list = Some(parse_list(key, value, |s| parse_flag(key, s))?),
            "dt-list" => self.dt_list = Some(parse_list(key, value, parse_real)?),
            "bins" => self.bins = Some(parse_flag(key, value)?),
            "eps" => self.eps = Some(real(value)?),
            "hist-min" => self.hist_min = Some(real(value)?),
            "hist-max" => self.hist_max = Some(real(value)?),
            "out-dir" => self.out_dir = Some(PathBuf::from(value.trim())),
            "strict-psd" => self.strict_psd = parse_flag(key, value)?,
            "dump" => self.dump = parse_flag(key, value)?,
            "workers" => self.workers = Some(parse_flag(key, value)?),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Reads a flat config file: one `key = value` per line, TOML syntax.
    pub fn from_config_file(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_config_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    pub fn from_config_str(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
        let mut raw = Self::default();
        for (key, value) in &table {
            let text = match value {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                toml::Value::Array(items) => items
                    .iter()
                    .map(|v| match v {
                        toml::Value::String(s) => Ok(s.clone()),
                        toml::Value::Integer(i) => Ok(i.to_string()),
                        toml::Value::Float(f) => Ok(f.to_string()),
                        _ => Err(format!("`{key}`: list items must be numbers")),
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .join(","),
                _ => return Err(format!("`{key}`: nested values are not supported")),
            };
            raw.set(key, &text)?;
        }
        Ok(raw)
    }

    /// `self` with every unset field taken from `base`.
    pub fn over(self, base: RawArgs) -> RawArgs {
        RawArgs {
            model: self.model.or(base.model),
            theta: self.theta.or(base.theta),
            sigma: self.sigma.or(base.sigma),
            a: self.a.or(base.a),
            b: self.b.or(base.b),
            n: self.n.or(base.n),
            horizon: self.horizon.or(base.horizon),
            steps: self.steps.or(base.steps),
            dt: self.dt.or(base.dt),
            paths: self.paths.or(base.paths),
            seed: self.seed.or(base.seed),
            r_list: self.r_list.or(base.r_list),
            dt_list: self.dt_list.or(base.dt_list),
            bins: self.bins.or(base.bins),
            eps: self.eps.or(base.eps),
            hist_min: self.hist_min.or(base.hist_min),
            hist_max: self.hist_max.or(base.hist_max),
            out_dir: self.out_dir.or(base.out_dir),
            strict_psd: self.strict_psd || base.strict_psd,
            dump: self.dump || base.dump,
            workers: self.workers.or(base.workers),
            config: self.config,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Spectrum,
    Density,
    StrongOrder,
    WeakOrder,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Spectrum => "spectrum",
            Command::Density => "density",
            Command::StrongOrder => "strong-order",
            Command::WeakOrder => "weak-order",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Command::Simulate,
            Command::Spectrum,
            Command::Density,
            Command::StrongOrder,
            Command::WeakOrder,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

/// A built-in model and its resolved parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    pub name: String,
    pub params: Vec<(String, f64)>,
}

impl ModelSpec {
    fn resolve(raw: &RawArgs) -> Result<Self, String> {
        let name = raw
            .model
            .clone()
            .ok_or_else(|| format!("missing `model`; valid models: {}", MODEL_NAMES.join(", ")))?;
        // Parameter names with the defaults used in the reference runs.
        let defaults: &[(&str, f64)] = match name.as_str() {
            "ou" => &[("theta", 1.0), ("sigma", 1.0)],
            "gbm1" => &[("theta", 1.0)],
            "cir" => &[("a", 2.0), ("b", 1.0), ("sigma", 1.0)],
            other => return Err(format!("unknown model `{other}`; valid models: {}", MODEL_NAMES.join(", "))),
        };
        let given = [("theta", raw.theta), ("sigma", raw.sigma), ("a", raw.a), ("b", raw.b)];
        for (key, value) in given {
            if value.is_some() && !defaults.iter().any(|(k, _)| *k == key) {
                return Err(format!("`{key}` does not apply to model `{name}`"));
            }
        }
        let params = defaults
            .iter()
            .map(|(k, d)| {
                let v = given.iter().find(|(g, _)| g == k).and_then(|(_, v)| *v).unwrap_or(*d);
                (k.to_string(), v)
            })
            .collect();
        Ok(Self { name, params })
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("model {} has no parameter {key}", self.name))
    }

    pub fn build(&self, strict_psd: bool) -> crate::error::Result<FsdeModel<f64>> {
        let model = match self.name.as_str() {
            "ou" => ou_model(self.param("theta"), self.param("sigma")),
            "gbm1" => gbm1_model(self.param("theta")),
            "cir" => cir_model(self.param("a"), self.param("b"), self.param("sigma"))?,
            other => return Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        };
        let policy = if strict_psd { PsdPolicy::Strict } else { PsdPolicy::Clamp };
        Ok(model.with_psd_policy(policy))
    }
}

/// A fully resolved run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelSpec,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// `L`; absent for weak-order, which uses `dt_list`.
    #[serde(rename = "L")]
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    #[serde(rename = "M")]
    pub paths: usize,
    pub seed: u64,
    #[serde(rename = "R_list")]
    pub r_list: Vec<usize>,
    pub dt_list: Vec<f64>,
    pub bins: usize,
    pub eps: f64,
    pub hist_range: Option<(f64, f64)>,
    pub strict_psd: bool,
    pub dump: bool,
    pub workers: usize,
    pub out_dir: PathBuf,
}

pub const DEFAULT_N: usize = 50;
pub const DEFAULT_STUDY_PATHS: usize = 100;

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Resolves any two of `T`, `L`, `dt` into all three; `T` defaults to 1.
pub fn resolve_grid(horizon: Option<f64>, steps: Option<usize>, dt: Option<f64>) -> Result<(f64, usize, f64), String> {
    if let Some(t) = horizon {
        if !(t > 0.0) {
            return Err(format!("`T` must be positive, got {t}"));
        }
    }
    if let Some(h) = dt {
        if !(h > 0.0) {
            return Err(format!("`dt` must be positive, got {h}"));
        }
    }
    if steps == Some(0) {
        return Err("`L` must be at least 1".into());
    }
    match (horizon, steps, dt) {
        (Some(t), Some(l), Some(h)) => {
            if ((l as f64) * h - t).abs() > 1e-9 * t {
                return Err(format!("inconsistent grid: L·dt = {} but T = {t}", l as f64 * h));
            }
            Ok((t, l, h))
        }
        (None, Some(l), Some(h)) => Ok((l as f64 * h, l, h)),
        (t, Some(l), None) => {
            let t = t.unwrap_or(1.0);
            Ok((t, l, t / l as f64))
        }
        (t, None, Some(h)) => {
            let t = t.unwrap_or(1.0);
            let l = steps_for(t, h).map_err(|e| e.to_string())?;
            Ok((t, l, h))
        }
        (_, None, None) => Err("one of `L` or `dt` is required".into()),
    }
}

/// Layers the config file (if any) under the flags and resolves defaults.
pub fn validate(command: Command, flags: RawArgs) -> Result<RunConfig, String> {
    let raw = match &flags.config {
        Some(path) => {
            let file = RawArgs::from_config_file(path)?;
            flags.over(file)
        }
        None => flags,
    };
    resolve(command, raw)
}

fn resolve(command: Command, raw: RawArgs) -> Result<RunConfig, String> {
    let model = ModelSpec::resolve(&raw)?;
    model.build(false).map_err(|e| e.to_string())?;
    let n = raw.n.unwrap_or(DEFAULT_N);
    if n == 0 {
        return Err("`n` must be at least 1".into());
    }
    let studies = matches!(command, Command::StrongOrder | Command::WeakOrder);
    let paths = raw.paths.unwrap_or(if studies { DEFAULT_STUDY_PATHS } else { 1 });
    if paths == 0 {
        return Err("`M` must be at least 1".into());
    }
    if command == Command::Simulate && paths != 1 {
        return Err("`M` does not apply to simulate (one trajectory)".into());
    }
    if command == Command::StrongOrder && paths < 2 {
        return Err("strong-order needs `M` >= 2".into());
    }
    if command != Command::StrongOrder && raw.r_list.is_some() {
        return Err(format!("`R-list` does not apply to {}", command.name()));
    }
    if command != Command::WeakOrder && raw.dt_list.is_some() {
        return Err(format!("`dt-list` does not apply to {}", command.name()));
    }
    if raw.dump && command != Command::Simulate {
        return Err(format!("`dump` does not apply to {}", command.name()));
    }
    let (horizon, steps, dt, dt_list) = if command == Command::WeakOrder {
        if raw.steps.is_some() || raw.dt.is_some() {
            return Err("weak-order takes `dt-list` and `T`, not `L` or `dt`".into());
        }
        let horizon = raw.horizon.unwrap_or(1.0);
        let dts = raw.dt_list.clone().ok_or("weak-order requires `dt-list`")?;
        if dts.is_empty() {
            return Err("`dt-list` is empty".into());
        }
        for &h in &dts {
            steps_for(horizon, h).map_err(|e| format!("`dt-list`: {e}"))?;
        }
        (horizon, None, None, dts)
    } else {
        let (t, l, h) = resolve_grid(raw.horizon, raw.steps, raw.dt)?;
        (t, Some(l), Some(h), Vec::new())
    };
    let r_list = if command == Command::StrongOrder {
        let rs = raw.r_list.clone().ok_or("strong-order requires `R-list`")?;
        let l = steps.expect("grid resolved");
        if rs.is_empty() {
            return Err("`R-list` is empty".into());
        }
        if let Some(r) = rs.iter().find(|&&r| r == 0 || l % r != 0) {
            return Err(format!("`R-list`: R = {r} does not divide L = {l}"));
        }
        rs
    } else {
        Vec::new()
    };
    let bins = raw.bins.unwrap_or(DEFAULT_BINS);
    if bins == 0 {
        return Err("`bins` must be at least 1".into());
    }
    let eps = raw.eps.unwrap_or(DEFAULT_EPS);
    if !(eps > 0.0) {
        return Err(format!("`eps` must be positive, got {eps}"));
    }
    let hist_range = match (raw.hist_min, raw.hist_max) {
        (None, None) => None,
        (Some(lo), Some(hi)) if lo < hi => Some((lo, hi)),
        (Some(lo), Some(hi)) => return Err(format!("`hist-min` {lo} must be below `hist-max` {hi}")),
        _ => return Err("`hist-min` and `hist-max` go together".into()),
    };
    let workers = raw.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err("`workers` must be at least 1".into());
    }
    let seed = raw.seed.unwrap_or_else(rand::random);
    Ok(RunConfig {
        command,
        model,
        n,
        horizon,
        steps,
        dt,
        paths,
        seed,
        r_list,
        dt_list,
        bins,
        eps,
        hist_range,
        strict_psd: raw.strict_psd,
        dump: raw.dump,
        workers,
        out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from(".")),
    })
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// `# command=… key=value …`: everything that determines the artifact
    /// contents. Worker count, output location and dump choice are left out.
    pub fn header_line(&self) -> String {
        let mut s = format!("# command={} model={}", self.command.name(), self.model.name);
        for (k, v) in &self.model.params {
            let _ = write!(s, " {k}={v}");
        }
        let _ = write!(s, " n={} T={}", self.n, self.horizon);
        if let (Some(l), Some(dt)) = (self.steps, self.dt) {
            let _ = write!(s, " L={l} dt={dt}");
        }
        let _ = write!(s, " M={} seed={}", self.paths, self.seed);
        if !self.r_list.is_empty() {
            let _ = write!(s, " R-list={}", join(&self.r_list));
        }
        if !self.dt_list.is_empty() {
            let _ = write!(s, " dt-list={}", join(&self.dt_list));
        }
        let _ = write!(s, " bins={} eps={}", self.bins, self.eps);
        if let Some((lo, hi)) = self.hist_range {
            let _ = write!(s, " hist-min={lo} hist-max={hi}");
        }
        let _ = write!(s, " strict-psd={}", self.strict_psd);
        s
    }

    /// Rebuilds a config from [`header_line`](Self::header_line) output.
    pub fn from_header(line: &str) -> Result<RunConfig, String> {
        let body = line.strip_prefix('#').ok_or("header must start with `#`")?;
        let mut raw = RawArgs::default();
        let mut command = None;
        for token in body.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| format!("malformed token `{token}`"))?;
            if key == "command" {
                command = Some(Command::from_name(value).ok_or_else(|| format!("unknown command `{value}`"))?);
            } else {
                raw.set(key, value)?;
            }
        }
        let command = command.ok_or("header lacks `command`")?;
        raw.workers = Some(1);
        resolve(command, raw)
    }

    /// Equal up to worker count, output location and dump choice.
    pub fn same_run(&self, other: &RunConfig) -> bool {
        let strip = |c: &RunConfig| RunConfig {
            workers: 1,
            out_dir: PathBuf::new(),
            dump: false,
            ..c.clone()
        };
        strip(self) == strip(other)
    }

    fn ensemble(&self) -> Ensemble {
        Ensemble::new(self.paths, self.seed).with_workers(self.workers)
    }

    fn grid(&self) -> (usize, f64) {
        (
            self.steps.expect("grid resolved for this command"),
            self.dt.expect("grid resolved for this command"),
        )
    }
}

/// What a run produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub clamp_events: usize,
    pub outputs: Vec<PathBuf>,
    pub fitted_order: Option<f64>,
}

struct Artifacts<'a> {
    config: &'a RunConfig,
    outputs: Vec<PathBuf>,
}

impl Artifacts<'_> {
    fn create(&mut self, name: &str) -> crate::error::Result<BufWriter<File>> {
        let path = self.config.out_dir.join(name);
        let file = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.outputs.push(path);
        Ok(BufWriter::new(file))
    }

    fn header(&self, clamp_events: usize) -> Vec<String> {
        vec![self.config.header_line(), format!("# clamp_events={clamp_events}")]
    }
}

/// Runs one resolved configuration, writing its artifacts and `run.jsonl`.
pub fn run(config: &RunConfig) -> crate::error::Result<RunReport> {
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", config.out_dir.display())))?;
    let model = config.model.build(config.strict_psd)?;
    for w in model.warnings() {
        eprintln!("warning: {w}");
    }
    let start = Instant::now();
    let mut out = Artifacts {
        config,
        outputs: Vec::new(),
    };
    let mut log = vec![json!({ "event": "config", "config": config })];
    let (clamp_events, fitted_order) = match config.command {
        Command::Simulate => (simulate(config, &model, &mut out)?, None),
        Command::Spectrum => (spectrum(config, &model, &mut out)?, None),
        Command::Density => (density(config, &model, &mut out)?, None),
        Command::StrongOrder => {
            let (steps, dt) = config.grid();
            let table = strong_error_study(&model, config.n, dt, steps, &config.r_list, &config.ensemble())?;
            write_table(&table, "strong_error.csv", &mut out, &mut log)?
        }
        Command::WeakOrder => {
            let table = weak_error_study(&model, config.n, &config.dt_list, config.horizon, &config.ensemble())?;
            write_table(&table, "weak_error.csv", &mut out, &mut log)?
        }
    };
    log.push(json!({
        "event": "done",
        "clamp_events": clamp_events,
        "fitted_order": fitted_order,
        "seconds": start.elapsed().as_secs_f64(),
    }));
    let mut w = out.create("run.jsonl")?;
    for entry in &log {
        writeln!(w, "{entry}")?;
    }
    w.flush()?;
    Ok(RunReport {
        clamp_events,
        outputs: out.outputs,
        fitted_order,
    })
}

fn write_table(
    table: &ErrorTable,
    name: &str,
    out: &mut Artifacts<'_>,
    log: &mut Vec<serde_json::Value>,
) -> crate::error::Result<(usize, Option<f64>)> {
    let header = out.header(table.clamp_events);
    table.write_csv(out.create(name)?, &header)?;
    for (row, seconds) in table.rows.iter().zip(&table.row_seconds) {
        log.push(json!({ "event": "row", "kind": table.kind, "row": row, "seconds": seconds }));
    }
    log.push(json!({ "event": "fit", "fit": table.fit, "reason": table.fit_failure }));
    Ok((table.clamp_events, table.fitted_order()))
}

fn simulate(config: &RunConfig, model: &FsdeModel<f64>, out: &mut Artifacts<'_>) -> crate::error::Result<usize> {
    let (steps, dt) = config.grid();
    let n = config.n;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut states = Vec::new();
    let mut increments = Vec::new();
    let stream = IncrementStream::new(n, dt, config.seed, 0)?.inspect(|dw| {
        if config.dump {
            increments.push(dw.clone());
        }
    });
    let (_, clamps) = drive_path(model, n, dt, steps, stream, 0, |k, x, so_far| {
        rows.push(trajectory_row(k, k as f64 * dt, x, so_far)?);
        if config.dump {
            states.push(x.clone());
        }
        Ok(())
    })?;
    let mut w = out.create("trajectory.csv")?;
    for line in out.header(clamps) {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "{TRAJECTORY_COLUMNS}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    if config.dump {
        write_matrices(out.create("increments.bin")?, n, dt, config.seed, 0, &increments)?;
        write_matrices(out.create("states.bin")?, n, dt, config.seed, 0, &states)?;
    }
    Ok(clamps)
}

/// Pooled eigenvalues of the terminal states of the ensemble.
fn terminal_spectrum(config: &RunConfig, model: &FsdeModel<f64>) -> crate::error::Result<(Vec<f64>, usize)> {
    let (steps, dt) = config.grid();
    let (per_path, clamps) = observe_ensemble(
        model,
        config.n,
        dt,
        steps,
        &[steps],
        &config.ensemble(),
        HermitianMatrix::eigenvalues,
    )?;
    let mut pooled: Vec<f64> = per_path.into_iter().flatten().flatten().collect();
    pooled.sort_by(f64::total_cmp);
    Ok((pooled, clamps))
}

fn spectrum(config: &RunConfig, model: &FsdeModel<f64>, out: &mut Artifacts<'_>) -> crate::error::Result<usize> {
    let (pooled, clamps) = terminal_spectrum(config, model)?;
    let summary = SpectralSummary::from_eigenvalues(pooled, config.bins, config.hist_range)?;
    let header = out.header(clamps);
    write_histogram_csv(out.create("histogram.csv")?, &header, &summary.histogram)?;
    write_moments_csv(out.create("moments.csv")?, &header, &summary)?;
    Ok(clamps)
}

fn density(config: &RunConfig, model: &FsdeModel<f64>, out: &mut Artifacts<'_>) -> crate::error::Result<usize> {
    let (pooled, clamps) = terminal_spectrum(config, model)?;
    let eps = config.eps;
    let (lo, hi) = config
        .hist_range
        .unwrap_or((pooled[0] - 10.0 * eps, pooled[pooled.len() - 1] + 10.0 * eps));
    let grid = uniform_grid(lo, hi, DENSITY_INTERVALS);
    let curve = stieltjes_invert(|z| cauchy_transform_of_spectrum(&pooled, z), &grid, eps)?;
    let probes: Vec<(Complex64, Complex64)> = default_probes()
        .into_iter()
        .map(|z| (z, cauchy_transform_of_spectrum(&pooled, z)))
        .collect();
    let header = out.header(clamps);
    write_density_csv(out.create("density.csv")?, &header, &curve)?;
    write_probes_csv(out.create("transform.csv")?, &header, &probes)?;
    Ok(clamps)
}

/// Parses `args`, runs, and returns the process exit code: 0 on success,
/// 1 on a runtime failure, 2 on a configuration error.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, raw) = match cli.command {
        CliCommand::Simulate(a) => (Command::Simulate, a),
        CliCommand::Spectrum(a) => (Command::Spectrum, a),
        CliCommand::Density(a) => (Command::Density, a),
        CliCommand::StrongOrder(a) => (Command::StrongOrder, a),
        CliCommand::WeakOrder(a) => (Command::WeakOrder, a),
    };
    let config = match validate(command, raw) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    match run(&config) {
        Ok(report) => {
            eprintln!(
                "{}",
                json!({
                    "config": config,
                    "clamp_events": report.clamp_events,
                    "fitted_order": report.fitted_order,
                    "outputs": report.outputs,
                })
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", json!({ "config": config, "error": e.to_string() }));
            1
        }
    }
}
