//! Config ingestion, experiment orchestration and artifact emission for the
//! `respectra` binary.
//!
//! # Config schema
//!
//! ```json
//! {
//!   "command": "spectrum | evolve | liouville | barrier | validate",
//!   "model": { "family": "sqrt_exp", "params": [1.0], "omega": 1.0, "epsilon": 0.1,
//!              "kernel": null,
//!              "contour": { "depth": 0.5, "cutoff": 20.0, "shape": "rectangle", "n_nodes": 200 } },
//!   "barrier": { "a": 1.0, "b": 5.0, "v0": 1.0, "v1": 0.8, "mu": 1.0, "hbar": 1.0 },
//!   "output": "out",
//!   "tolerance": 1e-13,
//!   "nodes": 200,
//!   "seed": 2024,
//!   "order": 2,
//!   "times": { "span": 5.0, "points": 200 },
//!   "oracle_levels": 2000,
//!   "liouville_nodes": 100,
//!   "sweep": [4.0, 4.5, 5.0],
//!   "dump_grid": false
//! }
//! ```
//!
//! Every key except `command` is optional and unknown keys are rejected.
//! `nodes` overrides the contour node count, `tolerance` the pole-solver
//! tolerance, `times.span` is in lifetimes 1/Γ_w and `sweep` lists barrier
//! widths b − a.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use respectra::validation::{run_suite, Check, Status, SuiteOptions};
use respectra::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version of the artifact schemas written by this crate.
pub const SPEC_VERSION: &str = "1.0";

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

const DEFAULT_TOLERANCE: f64 = 1e-13;
const DEFAULT_SEED: u64 = 2024;
const DEFAULT_ORACLE_LEVELS: usize = 2000;
const POLE_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Spectrum,
    Evolve,
    Liouville,
    Barrier,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    /// End of the grid in lifetimes 1/Γ_w.
    pub span: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<TimeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liouville_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dump_grid: bool,
}

impl RunConfig {
    pub fn for_command(command: Command) -> Self {
        Self {
            command,
            model: None,
            barrier: None,
            output: None,
            tolerance: None,
            nodes: None,
            seed: None,
            order: None,
            times: None,
            oracle_levels: None,
            liouville_nodes: None,
            sweep: None,
            dump_grid: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// SHA-256 of the canonical JSON of everything except the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if let Some(t) = self.tolerance {
            positive("tolerance", t)?;
        }
        if let Some(t) = self.times {
            positive("times.span", t.span)?;
        }
        if self.nodes == Some(0) || self.liouville_nodes == Some(0) || self.oracle_levels == Some(0) {
            return Err(Error::Config("node and level counts must be positive".into()));
        }
        if let Some(o) = self.order {
            if !(1..=4).contains(&o) {
                return Err(Error::Config(format!("perturbation order must be in 1..=4, got {o}")));
            }
        }
        if let Some(s) = &self.sweep {
            for &w in s {
                positive("sweep width", w)?;
            }
        }
        match self.command {
            Command::Barrier if self.model.is_some() => Err(Error::Config("barrier runs take a `barrier` block, not `model`".into())),
            Command::Spectrum | Command::Evolve | Command::Liouville if self.barrier.is_some() => {
                Err(Error::Config("this command takes a `model` block, not `barrier`".into()))
            }
            _ => Ok(()),
        }
    }

    /// The model with `nodes` applied; the default model when none is given.
    pub fn build_model(&self) -> Result<ModelSpec> {
        let mut cfg = self.model.clone().unwrap_or_else(default_model_config);
        if let Some(n) = self.nodes {
            let c = cfg.contour.unwrap_or_else(|| ContourSpec::for_level(cfg.omega));
            cfg.contour = Some(c.with_nodes(n));
        }
        cfg.build()
    }

    pub fn build_barrier(&self) -> Result<BarrierSpec> {
        let b = self.barrier.unwrap_or_default();
        b.validate()?;
        Ok(b)
    }
}

/// sqrt_exp with unit decay scale, Ω = 1, ε = 0.1.
pub fn default_model_config() -> ModelConfig {
    ModelConfig { family: "sqrt_exp".into(), params: vec![1.0], omega: 1.0, epsilon: 0.1, kernel: None, contour: None }
}

/// Process exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::UnknownFamily(_)
        | Error::Analyticity(_)
        | Error::Domain(_)
        | Error::Barrier(_)
        | Error::ClosedChannel { .. }
        | Error::Unsupported(_)
        | Error::NegativeTime(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Outcome of a run: files written, lines for stdout and the exit code.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub stdout: String,
    pub exit: i32,
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(hash: &str, header: &[&str]) -> Self {
        Self { text: format!("# config_hash {hash}\n{}\n", header.join(",")) }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

/// Lossless scientific formatting, 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    spec_version: &'static str,
    config_hash: &'a str,
    command: Command,
    #[serde(flatten)]
    body: T,
}

fn write_file(dir: &Path, name: &str, text: &str, report: &mut Report) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    report.files.push(path);
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, cfg: &RunConfig, hash: &str, body: T, report: &mut Report) -> Result<()> {
    let env = Envelope { spec_version: SPEC_VERSION, config_hash: hash, command: cfg.command, body };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_file(dir, name, &text, report)
}

/// Validates the config, runs the command and writes its artifacts.
pub fn run(cfg: &RunConfig) -> Report {
    let mut report = Report::default();
    if let Err(e) = execute(cfg, &mut report) {
        let _ = writeln!(report.stdout, "error: {e}");
        report.exit = exit_code(&e);
    }
    report
}

fn execute(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    cfg.validate()?;
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let hash = cfg.hash();
    if cfg.dump_grid && cfg.command != Command::Barrier {
        dump_grid(&cfg.build_model()?, &dir, &hash, report)?;
    }
    match cfg.command {
        Command::Spectrum => spectrum(cfg, &dir, &hash, report),
        Command::Evolve => evolve(cfg, &dir, &hash, report),
        Command::Liouville => liouville(cfg, &dir, &hash, report),
        Command::Barrier => barrier(cfg, &dir, &hash, report),
        Command::Validate => validate(cfg, &dir, &hash, report),
    }
}

fn dump_grid(model: &ModelSpec, dir: &Path, hash: &str, report: &mut Report) -> Result<()> {
    let g = model.grid()?;
    let mut csv = Csv::new(hash, &["node_re", "node_im", "weight_re", "weight_im"]);
    for (z, w) in g.nodes().iter().zip(g.weights()) {
        csv.row(&[num(z.re), num(z.im), num(w.re), num(w.im)]);
    }
    write_file(dir, "grid.csv", &csv.text, report)
}

#[derive(Serialize)]
struct NodeSample {
    node: C64,
    value: C64,
}

#[derive(Serialize)]
struct SpectrumBody {
    omega: f64,
    epsilon: f64,
    golden_rule_width: f64,
    pole: PoleResult,
    order: usize,
    lambda_perturbative: C64,
    /// |λ_pert − λ_pole|.
    gap: f64,
    /// Continuum part of the right discrete eigenvector at the contour nodes.
    right_samples: Vec<NodeSample>,
    left_samples: Vec<NodeSample>,
}

fn spectrum(cfg: &RunConfig, dir: &Path, hash: &str, report: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let order = cfg.order.unwrap_or(2);
    let pole = find_pole(&model, cfg.tolerance.unwrap_or(DEFAULT_TOLERANCE), POLE_MAX_ITER)?;
    let series = perturb_discrete(&model, order)?;
    let lambda = series.eigenvalue();
    let grid = model.grid()?;
    let samples = |v: &VectorCoeffs| {
        grid.nodes().iter().map(|&z| NodeSample { node: z, value: v.regular_at(z) }).collect::<Vec<_>>()
    };
    let body = SpectrumBody {
        omega: model.omega_level(),
        epsilon: model.coupling(),
        golden_rule_width: model.golden_rule_width(),
        pole,
        order,
        lambda_perturbative: lambda,
        gap: (lambda - pole.lambda_pole).norm(),
        right_samples: samples(&series.right()),
        left_samples: samples(&series.left()),
    };
    let _ = writeln!(
        report.stdout,
        "pole {} {}  perturbative {} {}  gap {:.3e}",
        num(pole.lambda_pole.re),
        num(pole.lambda_pole.im),
        num(lambda.re),
        num(lambda.im),
        body.gap
    );
    write_json(dir, "spectrum.json", cfg, hash, body, report)
}

fn times_for(cfg: &RunConfig, model: &ModelSpec) -> Result<Vec<f64>> {
    match cfg.times {
        Some(t) => time_grid(model, t.span, t.points),
        None => default_time_grid(model),
    }
}

fn evolve(cfg: &RunConfig, dir: &Path, hash: &str, report: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let times = times_for(cfg, &model)?;
    let spectral = survival_curve(&assemble_system(&model, cfg.order.unwrap_or(4))?, &times)?;
    let oracle = discretize(&model, cfg.oracle_levels.unwrap_or(DEFAULT_ORACLE_LEVELS), model.contour().cutoff)?;
    let reference = oracle_survival_curve(&oracle, &times)?;
    let mut csv = Csv::new(hash, &["t", "survival_spectral", "survival_oracle", "survival_exponential"]);
    for (k, &t) in times.iter().enumerate() {
        csv.row(&[num(t), num(spectral.survival[k]), num(reference.survival[k]), num(exponential_approx(&model, t)?)]);
    }
    let gap = respectra::validation::max_gap(&spectral, &reference);
    let _ = writeln!(report.stdout, "max |spectral - oracle| = {gap:.3e} over {} times", times.len());
    write_file(dir, "decay.csv", &csv.text, report)
}

fn liouville(cfg: &RunConfig, dir: &Path, hash: &str, report: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let sys = LiouvilleSystem::build(&model, cfg.liouville_nodes.unwrap_or(LIOUVILLE_NODES))?;
    let mut cloud = Csv::new(hash, &["branch", "re", "im"]);
    for (b, l) in sys.eigenvalue_cloud() {
        cloud.row(&[b.tag().to_string(), num(l.re), num(l.im)]);
    }
    write_file(dir, "liouville_eigenvalues.csv", &cloud.text, report)?;

    let times = times_for(cfg, &model)?;
    let rho = GeneralizedState::level_state(sys.grid());
    let mut traj = Csv::new(hash, &["t", "level_population", "atom_at_level", "trace_re", "trace_im"]);
    for &t in &times {
        let e = sys.evolve_state(&rho, t)?;
        traj.row(&[num(t), num(e.level_population), num(e.atom_at_level), num(e.total.re), num(e.total.im)]);
    }
    let l = sys.zero_sector().lambda_decay;
    let _ = writeln!(report.stdout, "decay eigenvalue {} {}", num(l.re), num(l.im));
    write_file(dir, "liouville_trajectory.csv", &traj.text, report)
}

#[derive(Serialize)]
struct BarrierBody {
    barrier: BarrierSpec,
    resonance: BarrierResonance,
    /// −2 Im λ of the mapped Friedrichs model at second order.
    mapped_width: f64,
}

fn barrier(cfg: &RunConfig, dir: &Path, hash: &str, report: &mut Report) -> Result<()> {
    use rayon::prelude::*;
    let spec = cfg.build_barrier()?;
    let resonance = resonance_width(&spec)?;
    let mapped = mapped_model(&spec, None)?;
    let mapped_width = -2.0 * perturb_discrete(&mapped, 2)?.eigenvalue().im;
    let _ = writeln!(report.stdout, "width {}  mapped {}", num(resonance.width), num(mapped_width));
    write_json(dir, "barrier.json", cfg, hash, BarrierBody { barrier: spec, resonance, mapped_width }, report)?;

    let widths = cfg.sweep.clone().unwrap_or_else(|| (0..9).map(|k| spec.b - spec.a + 0.5 * k as f64).collect());
    let rows = widths.par_iter().map(|&w| width_sweep(&spec, &[w]).map(|r| r[0])).collect::<Result<Vec<_>>>()?;
    let mut csv = Csv::new(hash, &["separation", "width"]);
    for (w, g) in rows {
        csv.row(&[num(w), num(g)]);
    }
    write_file(dir, "barrier_sweep.csv", &csv.text, report)
}

/// Fixed-width pass/fail table.
pub fn format_table(checks: &[Check]) -> String {
    let mut s = format!("{:<34} {:>6} {:>12} {:>12}\n", "check", "status", "value", "tolerance");
    for c in checks {
        let status = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        let _ = write!(s, "{:<34} {:>6} {:>12.3e} {:>12.1e}", c.name, status, c.value, c.tolerance);
        if !c.detail.is_empty() {
            let _ = write!(s, "  {}", c.detail);
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct ValidationBody<'a> {
    checks: &'a [Check],
    passed: bool,
}

fn validate(cfg: &RunConfig, dir: &Path, hash: &str, report: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let barrier = cfg.build_barrier()?;
    let mut opts = SuiteOptions { seed: cfg.seed.unwrap_or(DEFAULT_SEED), ..SuiteOptions::default() };
    if let Some(t) = cfg.tolerance {
        opts.pole_tolerance = t;
    }
    if let Some(n) = cfg.oracle_levels {
        opts.oracle_levels = n;
    }
    if let Some(n) = cfg.liouville_nodes {
        opts.liouville_nodes = n;
    }
    let checks = run_suite(&model, &barrier, &opts);
    let passed = checks.iter().all(|c| c.status != Status::Fail);
    report.stdout.push_str(&format_table(&checks));
    write_json(dir, "validation.json", cfg, hash, ValidationBody { checks: &checks, passed }, report)?;
    if !passed {
        report.exit = EXIT_VALIDATION;
    }
    Ok(())
}

/// Caps the global worker pool from `RESPECTRA_THREADS`.
pub fn configure_threads(value: Option<&str>) -> Result<()> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("RESPECTRA_THREADS must be a positive integer, got `{v}`")))?;
    // A pool that is already built keeps its size; later calls are harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
