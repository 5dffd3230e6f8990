//! Batch driver behind the `lfe` binary.
//!
//! A run is described by a [`RunConfig`], read from a `key = value` file and
//! overridden by command-line flags. Every command writes `report.json`, which
//! depends only on the configuration, and `timings.json` next to it.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::action::{self, standard_probes, vi_residual, ProbeOptions};
use crate::bm_solver::{solve_subproblem, subproblem_vi_residual, Forcing};
use crate::moreau::{alpha_bound, check_el_properties, prox, random_trajectory, ConvexityBudget, ElCheckOptions, ProxOptions};
use crate::orbit_search::{certify, multi_start, verify_negativity, DescendOptions, OrbitSet, SearchConfig, StartTag};
use crate::potentials::Potentials;
use crate::trajectory::PeriodicTrajectory;
use crate::verify::{ode_residual, shooting_defect};

/// Exit code of a run whose verification checks failed.
pub const EXIT_VERIFICATION: i32 = 2;
/// Exit code of a malformed invocation or configuration.
pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Sweep,
    Verify,
    Lemmas,
    Subproblem,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Sweep => "sweep",
            Self::Verify => "verify",
            Self::Lemmas => "lemmas",
            Self::Subproblem => "subproblem",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::Solve, Self::Sweep, Self::Verify, Self::Lemmas, Self::Subproblem]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

/// Everything a run depends on. The output directory is deliberately not part
/// of it, so the same experiment written to two places gives identical
/// reports.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub electric: String,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub magnetic: String,
    pub kappa: f64,
    pub m: usize,
    pub r: f64,
    pub nodes: usize,
    pub epsilon: Option<f64>,
    pub tol_crit: f64,
    pub inner_tol: f64,
    pub tol_ode: f64,
    pub sep_tol: f64,
    /// Newton tolerance of the `subproblem` command.
    pub tol: f64,
    pub seed: u64,
    /// Total starts per λ: `3m` structured circles, the rest random.
    pub starts: usize,
    /// Battery size for `lemmas`; boundary samples for the negativity check.
    pub samples: usize,
    pub trajectory: Option<PathBuf>,
    pub forcing: Option<PathBuf>,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            electric: "arctan".into(),
            lambda: 50.0,
            lambda_grid: vec![1.0, 5.0, 10.0, 50.0, 100.0],
            magnetic: "none".into(),
            kappa: 0.1,
            m: 1,
            r: 0.5,
            nodes: 256,
            epsilon: None,
            tol_crit: 1e-7,
            inner_tol: 1e-10,
            tol_ode: 1e-6,
            sep_tol: 1e-2,
            tol: 1e-10,
            seed: 42,
            starts: 12,
            samples: 20,
            trajectory: None,
            forcing: None,
        }
    }

    pub const KEYS: [&'static str; 20] = [
        "command", "electric", "lambda", "lambda_grid", "magnetic", "kappa", "m", "r", "nodes", "epsilon",
        "tol_crit", "inner_tol", "tol_ode", "sep_tol", "tol", "seed", "starts", "samples", "trajectory", "forcing",
    ];

    /// Apply one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`"))
        }
        match key {
            "command" => {
                let c = Command::parse(value).ok_or_else(|| format!("unknown command `{value}`"))?;
                if c != self.command {
                    return Err(format!("config is for `{value}`, not `{}`", self.command.as_str()));
                }
            }
            "electric" => self.electric = value.to_string(),
            "lambda" => self.lambda = num(key, value)?,
            "lambda_grid" => {
                self.lambda_grid = value
                    .split(',')
                    .map(|v| num(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "magnetic" => self.magnetic = value.to_string(),
            "kappa" => self.kappa = num(key, value)?,
            "m" => self.m = num(key, value)?,
            "r" => self.r = num(key, value)?,
            "nodes" => self.nodes = num(key, value)?,
            "epsilon" => self.epsilon = Some(num(key, value)?),
            "tol_crit" => self.tol_crit = num(key, value)?,
            "inner_tol" => self.inner_tol = num(key, value)?,
            "tol_ode" => self.tol_ode = num(key, value)?,
            "sep_tol" => self.sep_tol = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "starts" => self.starts = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "trajectory" => self.trajectory = Some(PathBuf::from(value)),
            "forcing" => self.forcing = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parse a config file on top of the defaults for `command`. Blank lines
    /// and `#` comments are ignored; unknown and repeated keys are errors.
    pub fn parse(command: Command, text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::defaults(command);
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CliError::Config { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("lambda", self.lambda),
            ("tol_crit", self.tol_crit),
            ("inner_tol", self.inner_tol),
            ("tol_ode", self.tol_ode),
            ("sep_tol", self.sep_tol),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(usage(format!("`{name}` must be positive, got {v}")));
            }
        }
        if !(self.kappa >= 0.0) {
            return Err(usage(format!("`kappa` must be nonnegative, got {}", self.kappa)));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(usage(format!("`epsilon` must be positive, got {e}")));
            }
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(usage(format!("`r` must lie in (0, 1), got {}", self.r)));
        }
        if self.m == 0 {
            return Err(usage("`m` must be at least 1"));
        }
        if self.nodes < 8 {
            return Err(usage("`nodes` must be at least 8"));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l > 0.0)) {
            return Err(usage("`lambda_grid` must be a nonempty list of positive values"));
        }
        if matches!(self.command, Command::Solve | Command::Sweep) && self.starts < 3 * self.m {
            return Err(usage(format!("`starts` must be at least 3m = {}", 3 * self.m)));
        }
        if self.samples == 0 {
            return Err(usage("`samples` must be at least 1"));
        }
        if self.command == Command::Verify && self.trajectory.is_none() {
            return Err(usage("`verify` needs a trajectory"));
        }
        if self.command == Command::Subproblem && self.forcing.is_none() {
            return Err(usage("`subproblem` needs a forcing"));
        }
        Potentials::from_names(&self.electric, self.lambda, &self.magnetic, self.kappa)
            .map_err(|e| usage(e.to_string()))?;
        Ok(())
    }

    /// Canonical `key = value` text; [`RunConfig::parse`] reads it back to an
    /// equal config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let f = fmt_f64;
        let _ = writeln!(s, "command = {}", self.command.as_str());
        let _ = writeln!(s, "electric = {}", self.electric);
        let _ = writeln!(s, "lambda = {}", f(self.lambda));
        let grid: Vec<String> = self.lambda_grid.iter().map(|v| f(*v)).collect();
        let _ = writeln!(s, "lambda_grid = {}", grid.join(","));
        let _ = writeln!(s, "magnetic = {}", self.magnetic);
        let _ = writeln!(s, "kappa = {}", f(self.kappa));
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "r = {}", f(self.r));
        let _ = writeln!(s, "nodes = {}", self.nodes);
        if let Some(e) = self.epsilon {
            let _ = writeln!(s, "epsilon = {}", f(e));
        }
        let _ = writeln!(s, "tol_crit = {}", f(self.tol_crit));
        let _ = writeln!(s, "inner_tol = {}", f(self.inner_tol));
        let _ = writeln!(s, "tol_ode = {}", f(self.tol_ode));
        let _ = writeln!(s, "sep_tol = {}", f(self.sep_tol));
        let _ = writeln!(s, "tol = {}", f(self.tol));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "starts = {}", self.starts);
        let _ = writeln!(s, "samples = {}", self.samples);
        if let Some(p) = &self.trajectory {
            let _ = writeln!(s, "trajectory = {}", p.display());
        }
        if let Some(p) = &self.forcing {
            let _ = writeln!(s, "forcing = {}", p.display());
        }
        s
    }

    pub fn potentials_at(&self, lambda: f64) -> Result<Potentials, CliError> {
        Potentials::from_names(&self.electric, lambda, &self.magnetic, self.kappa).map_err(|e| usage(e.to_string()))
    }

    pub fn budget(&self, pot: &Potentials) -> Result<ConvexityBudget, CliError> {
        let b = alpha_bound(pot).map_err(|e| usage(e.to_string()))?;
        match self.epsilon {
            Some(e) => b.with_epsilon(e).map_err(|e| usage(e.to_string())),
            None => Ok(b),
        }
    }

    pub fn prox_options(&self) -> ProxOptions {
        ProxOptions { inner_tol: self.inner_tol, ..ProxOptions::default() }
    }

    pub fn descend_options(&self) -> DescendOptions {
        DescendOptions { tol_crit: self.tol_crit, tol_ode: self.tol_ode, inner: self.prox_options(), ..DescendOptions::default() }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            m: self.m,
            r: self.r,
            nodes: self.nodes,
            extra_random_starts: self.starts - 3 * self.m,
            seed: self.seed,
            sep_tol: self.sep_tol,
            descend: self.descend_options(),
        }
    }
}

/// Shortest round-trip decimal, switching to exponent form for small values.
fn fmt_f64(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Parser)]
#[command(name = "lfe", version, about = "Periodic orbits of the relativistic Lorentz force equation")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Multi-start orbit search at one λ.
    #[command(allow_negative_numbers = true)]
    Solve(Common),
    /// Orbit census over a λ grid.
    #[command(allow_negative_numbers = true)]
    Sweep(Common),
    /// Check a trajectory CSV against the equation of motion.
    #[command(allow_negative_numbers = true)]
    Verify(Common),
    /// Envelope properties on a random battery.
    #[command(allow_negative_numbers = true)]
    Lemmas(Common),
    /// Solve the convex subproblem for a forcing CSV.
    #[command(allow_negative_numbers = true)]
    Subproblem(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    electric: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long = "lambda-grid")]
    lambda_grid: Option<String>,
    #[arg(long)]
    magnetic: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long = "tol-crit")]
    tol_crit: Option<String>,
    #[arg(long = "inner-tol")]
    inner_tol: Option<String>,
    #[arg(long = "tol-ode")]
    tol_ode: Option<String>,
    #[arg(long = "sep-tol")]
    sep_tol: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    starts: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    trajectory: Option<String>,
    #[arg(long)]
    forcing: Option<String>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        let pairs = [
            ("electric", &self.electric),
            ("lambda", &self.lambda),
            ("lambda_grid", &self.lambda_grid),
            ("magnetic", &self.magnetic),
            ("kappa", &self.kappa),
            ("m", &self.m),
            ("r", &self.r),
            ("nodes", &self.nodes),
            ("epsilon", &self.epsilon),
            ("tol_crit", &self.tol_crit),
            ("inner_tol", &self.inner_tol),
            ("tol_ode", &self.tol_ode),
            ("sep_tol", &self.sep_tol),
            ("tol", &self.tol),
            ("seed", &self.seed),
            ("starts", &self.starts),
            ("samples", &self.samples),
            ("trajectory", &self.trajectory),
            ("forcing", &self.forcing),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k, v))).collect()
    }
}

/// Result of a command: the deterministic report, per-phase timings and
/// whether every check passed.
pub struct Outcome {
    pub report: Value,
    pub timings: Vec<(String, f64)>,
    pub passed: bool,
}

#[derive(Serialize)]
struct Check {
    name: String,
    passed: bool,
    value: f64,
}

/// Progress line on stdout; a closed pipe is not an error.
fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn save(q: &PeriodicTrajectory, path: &Path) -> Result<(), CliError> {
    q.save_csv(path).map_err(|e| io_err(path, e))
}

fn envelope(cfg: &RunConfig) -> Value {
    json!({
        "command": cfg.command.as_str(),
        "config": cfg.echo(),
        "versions": { "lfe-core": env!("CARGO_PKG_VERSION"), "report_format": 1 },
    })
}

fn finish(cfg: &RunConfig, result: Value, checks: Vec<Check>, timings: Vec<(String, f64)>) -> Outcome {
    let passed = checks.iter().all(|c| c.passed);
    let mut report = envelope(cfg);
    report["result"] = result;
    report["checks"] = serde_json::to_value(&checks).expect("serializable");
    report["passed"] = Value::Bool(passed);
    Outcome { report, timings, passed }
}

/// Write every orbit of `set` as `<prefix>orbit_<k>.csv` and re-certify it from
/// the file.
fn write_orbits(
    set: &OrbitSet,
    prefix: &str,
    out: &Path,
    pot: &Potentials,
    budget: &ConvexityBudget,
    cfg: &RunConfig,
    checks: &mut Vec<Check>,
) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    for (k, orbit) in set.orbits.iter().enumerate() {
        let name = format!("{prefix}orbit_{k:02}.csv");
        let path = out.join(&name);
        save(&orbit.representative, &path)?;
        let back = PeriodicTrajectory::load_csv(&path).map_err(|e| io_err(&path, e))?;
        let re = certify(&back, pot, budget, &cfg.descend_options(), cfg.m + 1, orbit.start_tag);
        checks.push(Check {
            name: format!("{name} reverified"),
            passed: re.is_ok(),
            value: re.map(|o| o.grad_norm).unwrap_or(f64::NAN),
        });
        files.push(name);
    }
    Ok(files)
}

fn run_solve(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let pot = cfg.potentials_at(cfg.lambda)?;
    let budget = cfg.budget(&pot)?;
    let set = multi_start(&pot, &budget, cfg.lambda, &cfg.search_config()).map_err(|e| usage(e.to_string()))?;
    let t_search = t0.elapsed().as_secs_f64();
    let negativity = verify_negativity(cfg.m, cfg.r, &pot, cfg.samples, cfg.nodes, cfg.seed).map_err(|e| usage(e.to_string()))?;
    let mut checks = vec![Check { name: "orbits_found".into(), passed: !set.orbits.is_empty(), value: set.orbits.len() as f64 }];
    let files = write_orbits(&set, "", out, &pot, &budget, cfg, &mut checks)?;
    say(&format!("solve: {} verified orbit(s) at lambda = {}", set.orbits.len(), cfg.lambda));
    let result = json!({ "budget": budget, "orbit_set": set, "orbit_files": files, "negativity": negativity });
    let timings = vec![("search".into(), t_search), ("total".into(), t0.elapsed().as_secs_f64())];
    Ok(finish(cfg, result, checks, timings))
}

fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let mut table = String::from("lambda,orbit_count,min_level,lambda_hat,negativity_margin\n");
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    let mut timings = Vec::new();
    for (i, &lambda) in cfg.lambda_grid.iter().enumerate() {
        let tc = Instant::now();
        let pot = cfg.potentials_at(lambda)?;
        let budget = cfg.budget(&pot)?;
        let set = multi_start(&pot, &budget, lambda, &cfg.search_config()).map_err(|e| usage(e.to_string()))?;
        let neg = verify_negativity(cfg.m, cfg.r, &pot, cfg.samples, cfg.nodes, cfg.seed).map_err(|e| usage(e.to_string()))?;
        let files = write_orbits(&set, &format!("lambda_{i:02}_"), out, &pot, &budget, cfg, &mut checks)?;
        let min_level = set.orbits.first().map(|o| o.level);
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            fmt_f64(lambda),
            set.orbits.len(),
            min_level.map(fmt_f64).unwrap_or_default(),
            fmt_f64(set.lambda_m.squared),
            fmt_f64(neg.margin)
        );
        say(&format!("sweep: lambda = {lambda}: {} orbit(s)", set.orbits.len()));
        cells.push(json!({ "lambda": lambda, "orbit_set": set, "orbit_files": files, "negativity": neg }));
        timings.push((format!("lambda[{i}]"), tc.elapsed().as_secs_f64()));
    }
    write_file(&out.join("sweep.csv"), &table)?;
    timings.push(("total".into(), t0.elapsed().as_secs_f64()));
    Ok(finish(cfg, json!({ "cells": cells, "table": "sweep.csv" }), checks, timings))
}

fn run_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let path = cfg.trajectory.as_ref().expect("validated");
    let q = PeriodicTrajectory::load_csv(path).map_err(|e| io_err(path, e))?;
    let pot = cfg.potentials_at(cfg.lambda)?;
    let budget = cfg.budget(&pot)?;
    let opts = cfg.descend_options();
    let a = action::action(&q, &pot);
    let mut residuals = json!({ "psi": a.psi, "f": a.f, "action": a.total, "sup_speed": a.sup_speed });
    if a.is_finite() {
        let st = prox(&q.band_limited(), &pot, &budget, &opts.inner).map_err(|e| usage(e.to_string()))?;
        let mut probes = standard_probes(&q, &ProbeOptions::default());
        probes.push(st.gamma.clone());
        residuals["grad_norm"] = json!(st.grad_norm);
        residuals["vi_residual"] = json!(vi_residual(&q, &pot, &probes).ok());
        residuals["ode_residual"] = json!(ode_residual(&q, &pot).ok());
        residuals["shooting_defect"] = json!(shooting_defect(&q, &pot, opts.shooting_steps).ok());
    }
    let verdict = certify(&q, &pot, &budget, &opts, cfg.m + 1, StartTag::custom(0));
    let checks = vec![Check {
        name: "certified".into(),
        passed: verdict.is_ok(),
        value: verdict.as_ref().map(|o| o.grad_norm).unwrap_or(f64::NAN),
    }];
    let result = json!({
        "node_count": q.node_count(),
        "residuals": residuals,
        "verdict": match &verdict {
            Ok(o) => json!({ "status": "verified", "orbit": o }),
            Err(e) => json!({ "status": "rejected", "reason": e.to_string(), "detail": e }),
        },
    });
    let outcome = finish(cfg, result, checks, vec![("total".into(), t0.elapsed().as_secs_f64())]);
    say(&serde_json::to_string_pretty(&outcome.report["result"]).expect("serializable"));
    Ok(outcome)
}

fn run_lemmas(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let pot = cfg.potentials_at(cfg.lambda)?;
    let budget = cfg.budget(&pot)?;
    let opts = ElCheckOptions { inner: cfg.prox_options(), seed: cfg.seed, ..ElCheckOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for i in 0..cfg.samples {
        let q = random_trajectory(cfg.nodes, 4, 0.5, &mut rng);
        let rep = check_el_properties(&q, &pot, &budget, &opts).map_err(|e| usage(e.to_string()))?;
        for c in &rep.checks {
            checks.push(Check { name: format!("sample {i}: {}", c.name), passed: c.passed, value: c.value });
        }
        rows.push(rep);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    say(&format!("lemmas: {} checks on {} samples, {failed} failed", checks.len(), cfg.samples));
    let result = json!({ "budget": budget, "tolerance": opts.tol, "samples": rows });
    Ok(finish(cfg, result, checks, vec![("total".into(), t0.elapsed().as_secs_f64())]))
}

fn run_subproblem(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let path = cfg.forcing.as_ref().expect("validated");
    let raw = PeriodicTrajectory::load_csv(path).map_err(|e| io_err(path, e))?;
    // resample band-limited when the requested grid differs from the file's
    let f = if raw.node_count() == cfg.nodes {
        raw
    } else {
        raw.to_fourier((raw.node_count() - 1) / 2).sample(cfg.nodes)
    };
    let forcing = Forcing::from(f);
    let (result, checks) = match solve_subproblem(&forcing, cfg.tol) {
        Ok(sol) => {
            save(&sol.q_f, &out.join("subproblem.csv"))?;
            let probes = standard_probes(&sol.q_f, &ProbeOptions::default());
            let vi = subproblem_vi_residual(&sol.q_f, &forcing, &probes).ok();
            let checks = vec![Check { name: "converged".into(), passed: true, value: sol.closure_residual }];
            (json!({ "solution": sol, "vi_residual": vi, "file": "subproblem.csv" }), checks)
        }
        Err(e) => (
            json!({ "error": e.to_string() }),
            vec![Check { name: "converged".into(), passed: false, value: f64::NAN }],
        ),
    };
    say(&format!("subproblem: {}", if checks[0].passed { "converged" } else { "failed" }));
    Ok(finish(cfg, json!(result), checks, vec![("total".into(), t0.elapsed().as_secs_f64())]))
}

/// Execute `cfg`, writing `report.json`, `timings.json` and the command's
/// CSV files into `out`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let outcome = match cfg.command {
        Command::Solve => run_solve(cfg, out)?,
        Command::Sweep => run_sweep(cfg, out)?,
        Command::Verify => run_verify(cfg)?,
        Command::Lemmas => run_lemmas(cfg)?,
        Command::Subproblem => run_subproblem(cfg, out)?,
    };
    let report = serde_json::to_string_pretty(&outcome.report).expect("serializable") + "\n";
    write_file(&out.join("report.json"), &report)?;
    let timings: serde_json::Map<String, Value> =
        outcome.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    write_file(&out.join("timings.json"), &(serde_json::to_string_pretty(&timings).expect("serializable") + "\n"))?;
    Ok(outcome)
}

fn build(args: Common, command: Command) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            RunConfig::parse(command, &text)?
        }
        None => RunConfig::defaults(command),
    };
    for (k, v) in args.overrides() {
        cfg.set(k, v).map_err(|e| usage(format!("--{}: {e}", k.replace('_', "-"))))?;
    }
    Ok((cfg, args.out))
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let (common, command) = match cli.command {
        Sub::Solve(a) => (a, Command::Solve),
        Sub::Sweep(a) => (a, Command::Sweep),
        Sub::Verify(a) => (a, Command::Verify),
        Sub::Lemmas(a) => (a, Command::Lemmas),
        Sub::Subproblem(a) => (a, Command::Subproblem),
    };
    let result = build(common, command).and_then(|(cfg, out)| execute(&cfg, &out));
    match result {
        Ok(o) if o.passed => 0,
        Ok(_) => {
            eprintln!("verification failed; see report.json");
            EXIT_VERIFICATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::defaults(Command::Sweep);
        cfg.epsilon = Some(0.004);
        cfg.lambda_grid = vec![0.05, 1.0, 1e-7, 123.456];
        cfg.trajectory = Some("a/b.csv".into());
        let back = RunConfig::parse(Command::Sweep, &cfg.echo()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.echo(), cfg.echo());
    }

    #[test]
    fn parse_errors() {
        let e = RunConfig::parse(Command::Solve, "lambda = 5\nlamda = 3\n").unwrap_err();
        assert!(matches!(e, CliError::Config { line: 2, .. }), "{e}");
        assert!(RunConfig::parse(Command::Solve, "lambda = 5\nlambda = 6").is_err());
        assert!(RunConfig::parse(Command::Solve, "lambda 5").is_err());
        assert!(RunConfig::parse(Command::Solve, "command = sweep").is_err());
        assert!(RunConfig::parse(Command::Solve, "seed = -1").is_err());
        let cfg = RunConfig::parse(Command::Solve, "# comment\n\n m = 2 # trailing\nlambda_grid = 1, 2").unwrap();
        assert_eq!(cfg.m, 2);
        assert_eq!(cfg.lambda_grid, vec![1.0, 2.0]);
    }

    #[test]
    fn validation() {
        let ok = RunConfig::defaults(Command::Solve);
        assert!(ok.validate().is_ok());
        for text in ["tol_crit = -1e-7", "r = 1", "starts = 2", "electric = coulomb", "epsilon = 0", "nodes = 4"] {
            let cfg = RunConfig::parse(Command::Solve, text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
        assert!(RunConfig::defaults(Command::Verify).validate().is_err());
    }
}
