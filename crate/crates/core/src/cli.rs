//! Configuration-driven command line: `sample`, `verify`, `ids`, `lifshitz`, `merge`, `report`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    chernoff_check, estimate_s0, feynman_hellmann_check, lower_bound_scales, rayleigh_quotient_dirichlet,
    residual_norm, taylor_remainder_check, weyl_schedule, c5_ratio, event_b_bound, WeylTrial, C5_FROZEN,
};
use crate::eigen::dense_eigenvalues;
use crate::error::{Error, Result};
use crate::gauge::{gauge_shift, GaugeField};
use crate::geometry::{check_event_a, check_event_b, BoxGeometry, FluxConfiguration, ModelSpec};
use crate::hardy::{verify_diamagnetic, verify_hardy_bound};
use crate::ids::{
    bracket_violations, default_energies, lifshitz_fit, small_e1_probability, IdsAccumulator, IdsParams,
};
use crate::lattice::{assemble, Boundary, Grid};
use crate::ledger::{Ledger, Row};
use crate::quadrature::QuadratureScheme;
use crate::rng::{aux_stream, sample_seed};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "ABFLUX_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "abflux", version, about = "Random Aharonov-Bohm flux laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample flux configurations.
    Sample(RunArgs),
    /// Run a verification suite and write a ledger.
    Verify(RunArgs),
    /// Estimate the integrated density of states.
    Ids(RunArgs),
    /// Fit the low-energy tail of an IDS or probability curve.
    Lifshitz(RunArgs),
    /// Merge IDS accumulators from disjoint shards.
    Merge {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Summarize an output directory.
    Report { dir: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; never changes results.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<IdsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifshitz: Option<LifshitzBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    pub model: ModelSpec,
    pub k: u32,
    #[serde(default = "one")]
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Gauge,
    Diamagnetic,
    Hardy,
    Weyl,
    LowerBound,
    Chernoff,
    Taylor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub suite: Suite,
    pub model: ModelSpec,
    pub k: u32,
    #[serde(default = "default_m")]
    pub m: u32,
    pub samples: u64,
    /// Event scale `1/l` for the Weyl and lower-bound suites.
    #[serde(default = "default_l")]
    pub l: f64,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Disc separation constant of event (a).
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_c5")]
    pub c5: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_plaquettes")]
    pub plaquettes: usize,
    #[serde(default = "default_s0_samples")]
    pub s0_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySelection {
    Dirichlet,
    Neumann,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsBlock {
    pub model: ModelSpec,
    pub k: u32,
    #[serde(default = "default_ids_m")]
    pub m: u32,
    pub boundary: BoundarySelection,
    pub samples: u64,
    /// First sample index; shards use disjoint `[start, start + samples)`.
    #[serde(default)]
    pub start: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default = "default_chunk")]
    pub chunk: u64,
    /// Thresholds for `P{E_1(H_D) ≤ ε}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e1_epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifshitzBlock {
    /// IDS curve (`E,N_hat,...`) or probability curve (`epsilon,frequency,...`).
    pub input: PathBuf,
    pub window: (f64, f64),
}

fn one() -> u64 {
    1
}
fn default_m() -> u32 {
    16
}
fn default_ids_m() -> u32 {
    8
}
fn default_l() -> f64 {
    30.0
}
fn default_xi() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_separation() -> f64 {
    1.0
}
fn default_c5() -> f64 {
    C5_FROZEN
}
fn default_lambda() -> f64 {
    1.0
}
fn default_trials() -> usize {
    5
}
fn default_plaquettes() -> usize {
    20
}
fn default_s0_samples() -> usize {
    1000
}
fn default_chunk() -> u64 {
    1000
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if c.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                c.schema_version
            )));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.sample {
            s.model.validate()?;
        }
        if let Some(v) = &self.verify {
            v.model.validate()?;
            Grid::new(BoxGeometry::new(v.k), v.m)?;
            if !(v.l > 0.0 && v.epsilon > 0.0 && v.lambda > 0.0 && v.xi.is_finite()) {
                return Err(Error::Config("verify: l, epsilon and lambda must be positive".into()));
            }
        }
        if let Some(b) = &self.ids {
            b.model.validate()?;
            Grid::new(BoxGeometry::new(b.k), b.m)?;
            if b.chunk == 0 {
                return Err(Error::Config("ids: chunk must be positive".into()));
            }
            if let Some(e) = &b.energies {
                if !e.windows(2).all(|w| w[0] < w[1]) || e.is_empty() {
                    return Err(Error::Config("ids: energies must be non-empty and strictly ascending".into()));
                }
            }
        }
        if let Some(l) = &self.lifshitz {
            if !(l.window.0 < l.window.1) {
                return Err(Error::Config("lifshitz: window must satisfy E_min < E_max".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one run: its effective configuration and the data files it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub schema_version: u32,
    pub code_version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

/// Writes files into one directory and records their hashes.
pub struct Output {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Records a file that already exists with the given contents.
    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn finish(mut self, command: &str, config: &ExperimentConfig, seeds: Vec<u64>) -> Result<PathBuf> {
        let manifest = Manifest {
            command: command.into(),
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: config.hash(),
            config: serde_json::to_value(config)?,
            seeds,
            files: std::mem::take(&mut self.files),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(self.dir)
    }
}

/// Output directory: the flag, else the config entry, else `abflux-out`;
/// relative paths are placed under `ABFLUX_OUTPUT_ROOT` when it is set.
pub fn resolve_output(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    let dir = flag.or(config).map_or_else(|| PathBuf::from("abflux-out"), Path::to_path_buf);
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir,
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub dir: PathBuf,
    /// Hard failures recorded in a ledger.
    pub failures: usize,
}

/// Process exit code for a command result: 0 success, 1 computational failure, 2 config error.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.failures == 0 => 0,
        Ok(_) => 1,
        Err(e) if e.is_config_error() => 2,
        Err(_) => 1,
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Sample(a) => with_jobs(a.jobs, || {
            let (c, dir) = load(&a)?;
            cmd_sample(&c, &dir)
        }),
        Command::Verify(a) => with_jobs(a.jobs, || {
            let (c, dir) = load(&a)?;
            cmd_verify(&c, &dir)
        }),
        Command::Ids(a) => with_jobs(a.jobs, || {
            let (c, dir) = load(&a)?;
            cmd_ids(&c, &dir)
        }),
        Command::Lifshitz(a) => {
            let (c, dir) = load(&a)?;
            cmd_lifshitz(&c, &dir)
        }
        Command::Merge { out, jobs: _, inputs } => cmd_merge(&inputs, &resolve_output(Some(&out), None)),
        Command::Report { dir } => {
            print!("{}", cmd_report(&dir)?);
            Ok(Outcome { dir, failures: 0 })
        }
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn load(a: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.config.display())))?;
    let mut c = ExperimentConfig::from_json(&text)?;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    let dir = resolve_output(a.out.as_deref(), c.output_dir.as_deref());
    Ok((c, dir))
}

fn block<'a, T>(b: &'a Option<T>, name: &str) -> Result<&'a T> {
    b.as_ref().ok_or_else(|| Error::Config(format!("config has no \"{name}\" block")))
}

/// Writes one configuration file per sample.
pub fn cmd_sample(c: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let b = block(&c.sample, "sample")?;
    let g = BoxGeometry::new(b.k);
    let seeds: Vec<u64> = (0..b.samples).map(|i| sample_seed(c.seed, i)).collect();
    let configs: Vec<Result<String>> = seeds.par_iter().map(|&s| b.model.sample(s, g)?.to_json()).collect();
    let mut out = Output::create(dir)?;
    for (i, text) in configs.into_iter().enumerate() {
        out.write(&format!("config_{i:06}.json"), text?.as_bytes())?;
    }
    let dir = out.finish("sample", c, seeds)?;
    Ok(Outcome { dir, failures: 0 })
}

/// Runs one verification suite over `samples` configurations.
pub fn cmd_verify(c: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let v = block(&c.verify, "verify")?;
    let ledger = verify_suite(v, c.seed)?;
    if ledger.skipped() > 0 {
        log::warn!("{} checks skipped", ledger.skipped());
    }
    let mut out = Output::create(dir)?;
    out.write("ledger.csv", ledger.to_csv()?.as_bytes())?;
    let seeds = (0..v.samples).map(|i| sample_seed(c.seed, i)).collect();
    let failures = ledger.failures();
    let dir = out.finish("verify", c, seeds)?;
    Ok(Outcome { dir, failures })
}

/// Ledger of a suite; per-configuration errors become failed rows.
pub fn verify_suite(v: &VerifyBlock, seed: u64) -> Result<Ledger> {
    let mut ledger = Ledger::default();
    match v.suite {
        Suite::Chernoff => {
            let s0 = estimate_s0(&v.model, v.s0_samples, seed)?;
            ledger.push(Row::info(seed, "s0_hat", s0.s0));
            ledger.push(Row::info(seed, "s0_ci_low", s0.ci_low));
            ledger.push(Row::info(seed, "s0_ci_high", s0.ci_high));
            if s0.degenerate {
                ledger.push(Row::skipped(seed, "chernoff_frequency"));
            } else {
                let r = chernoff_check(&v.model, v.k, v.samples as usize, s0.s0, sample_seed(seed, u64::MAX))?;
                ledger.push(Row::upper(seed, "chernoff_frequency", r.frequency, r.bound + 3.0 * r.sigma));
            }
            return Ok(ledger);
        }
        Suite::Weyl => ledger.extend(weyl_rows(v, seed)?),
        _ => {
            let g = BoxGeometry::new(v.k);
            let grid = Grid::new(g, v.m)?;
            let per_sample: Vec<Vec<Row>> = (0..v.samples)
                .into_par_iter()
                .map(|i| {
                    let s = sample_seed(seed, i);
                    let rows = v.model.sample(s, g).and_then(|config| sample_rows(v, &config, &grid, s));
                    rows.unwrap_or_else(|e| vec![Row::failed(s, format!("{:?}", v.suite), &e.to_string())])
                })
                .collect();
            ledger.extend(per_sample.into_iter().flatten());
        }
    }
    Ok(ledger)
}

fn sample_rows(v: &VerifyBlock, config: &FluxConfiguration, grid: &Grid, s: u64) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    match v.suite {
        Suite::Gauge => {
            let field = GaugeField::new(config);
            let g = config.geometry();
            let mut rng = aux_stream(s, 0x9A);
            let mut worst: f64 = 0.0;
            let mut done = 0;
            while done < v.plaquettes {
                let side = rng.random_range(0.05..1.0);
                let x0 = -g.half_width() + rng.random::<f64>() * (g.side() - side);
                let y0 = -g.half_width() + rng.random::<f64>() * (g.side() - side);
                let Ok(phase) = field.plaquette_phase(x0, y0, side) else { continue };
                let inside: f64 = config
                    .points()
                    .iter()
                    .filter(|p| p.x > x0 && p.x < x0 + side && p.y > y0 && p.y < y0 + side)
                    .map(|p| p.flux())
                    .sum();
                worst = worst.max((phase - 2.0 * PI * inside).abs());
                done += 1;
            }
            rows.push(Row::upper(s, "plaquette_phase_error", worst, 1e-9));
            let op = assemble(config, grid, Boundary::Neumann)?;
            let base = dense_eigenvalues(&op)?;
            let mut shifted = config.clone();
            for i in 0..config.len() {
                shifted = gauge_shift(&shifted, i, 1)?;
            }
            let moved = dense_eigenvalues(&assemble(&shifted, grid, Boundary::Neumann)?)?;
            let diff = base.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            rows.push(Row::upper(s, "integer_shift_spectrum_error", diff, 1e-9));
        }
        Suite::Diamagnetic => {
            let r = verify_diamagnetic(config, grid, v.lambda, v.trials, s)?;
            rows.push(Row::lower(s, "resolvent_entrywise_slack", r.min_slack, -1e-12));
            rows.push(Row::upper(s, "hilbert_schmidt_magnetic", r.hs_magnetic, r.hs_free * (1.0 + 1e-12)));
        }
        Suite::Hardy => {
            let r = verify_hardy_bound(config, grid)?;
            if r.skipped {
                rows.push(Row::skipped(s, "hardy_slack"));
            } else {
                rows.push(Row::lower(s, "hardy_slack", r.slack, -r.tolerance));
            }
        }
        Suite::LowerBound => {
            let holds = check_event_a(config, 1.0 / v.l, v.separation)?.iter().all(|b| *b);
            if !holds {
                rows.push(Row::skipped(s, "dirichlet_quotient"));
                return Ok(rows);
            }
            let r = rayleigh_quotient_dirichlet(config, &QuadratureScheme::default())?;
            rows.push(Row::upper(s, "dirichlet_quotient", r.quotient, r.bound));
            rows.push(Row::lower(s, "dirichlet_quotient_nonnegative", r.quotient, 0.0));
            rows.push(Row::upper(s, "dirichlet_quotient_routes", (r.quotient - r.quotient_form).abs(), 1e-6));
            rows.push(Row::info(s, "c1_prime", r.c1_prime));
            match lower_bound_scales(v.epsilon) {
                Ok((k, l)) => {
                    rows.push(Row::info(s, "schedule_k", k as f64));
                    rows.push(Row::info(s, "schedule_l", l as f64));
                }
                Err(e) => rows.push(Row::failed(s, "schedule", &e.to_string())),
            }
        }
        Suite::Taylor => {
            let fh = feynman_hellmann_check(config, grid)?;
            rows.push(Row::upper(s, "feynman_hellmann_error", fh.abs_error, 1e-4));
            let t = taylor_remainder_check(config, grid, None)?;
            if t.skipped {
                rows.push(Row::skipped(s, "taylor_remainder"));
            }
            for r in &t.rows {
                rows.push(Row::upper(s, format!("taylor_remainder_t={:e}", r.t), r.remainder, r.bound));
            }
        }
        Suite::Weyl | Suite::Chernoff => unreachable!("handled per suite"),
    }
    Ok(rows)
}

fn weyl_rows(v: &VerifyBlock, seed: u64) -> Result<Vec<Row>> {
    if v.k == 0 {
        return Err(Error::Config("weyl suite needs k ≥ 1".into()));
    }
    let g = BoxGeometry::new(v.k);
    let scheme = QuadratureScheme::default();
    let trial = WeylTrial::new(v.xi);
    let cell_bound = 1.0 - 9.0 * PI / v.l;
    let norm_bound = cell_bound.max(0.0).sqrt() * (2.0 * v.k as f64 - 1.0);
    let per_sample: Vec<(Vec<Row>, Option<f64>)> = (0..v.samples)
        .into_par_iter()
        .map(|i| {
            let s = sample_seed(seed, i);
            let run = || -> Result<(Vec<Row>, Option<f64>)> {
                let config = v.model.sample(s, g)?;
                let mut rows = Vec::new();
                if !check_event_a(&config, 1.0 / v.l, v.separation)?.iter().all(|b| *b) {
                    rows.push(Row::skipped(s, "weyl_residual"));
                    return Ok((rows, None));
                }
                let r = residual_norm(&config, &trial, &scheme)?;
                rows.push(Row::lower(s, "cell_integral_min", r.min_inner, cell_bound));
                rows.push(Row::lower(s, "norm_v", r.norm_v.value, norm_bound));
                rows.push(Row::upper(s, "weyl_residual", r.residual.upper(), r.bound));
                rows.push(Row::info(s, "residual_ratio", r.ratio));
                rows.push(Row::upper(s, "c5_ratio", c5_ratio(&config, r.psi_psi.upper(), v.l), v.c5));
                if check_event_b(&config, 1.0 / v.l)?.iter().all(|b| *b) {
                    rows.push(Row::upper(s, "psi_psi_event_b", r.psi_psi.upper(), event_b_bound(&config, v.l)));
                }
                Ok((rows, Some(r.norm_v.value / g.side())))
            };
            run().unwrap_or_else(|e| (vec![Row::failed(s, "weyl", &e.to_string())], None))
        })
        .collect();
    let c1 = per_sample.iter().filter_map(|(_, c)| *c).fold(f64::INFINITY, f64::min);
    let mut rows: Vec<Row> = per_sample.into_iter().flat_map(|(r, _)| r).collect();
    if c1.is_finite() {
        rows.push(Row::info(seed, "c1_measured", c1));
        match weyl_schedule(v.xi, v.epsilon, c1, v.c5) {
            Ok(sch) => {
                rows.push(Row::info(seed, "schedule_xi", sch.xi));
                rows.push(Row::info(seed, "schedule_epsilon", sch.epsilon));
                rows.push(Row::info(seed, "schedule_c2", sch.c2));
                rows.push(Row::info(seed, "schedule_c5", sch.c5));
                rows.push(Row::info(seed, "schedule_k", sch.k as f64));
                rows.push(Row::info(seed, "schedule_l", sch.l));
                rows.push(Row::upper(seed, "schedule_rhs", sch.rhs, sch.epsilon));
            }
            Err(e) => rows.push(Row::failed(seed, "schedule", &e.to_string())),
        }
    }
    Ok(rows)
}

fn boundaries(sel: BoundarySelection) -> Vec<Boundary> {
    match sel {
        BoundarySelection::Dirichlet => vec![Boundary::Dirichlet],
        BoundarySelection::Neumann => vec![Boundary::Neumann],
        BoundarySelection::Both => vec![Boundary::Dirichlet, Boundary::Neumann],
    }
}

fn bc_name(b: Boundary) -> &'static str {
    match b {
        Boundary::Dirichlet => "dirichlet",
        Boundary::Neumann => "neumann",
    }
}

/// IDS estimation in chunks; chunk files already present with matching
/// parameters are reused, so an interrupted run resumes where it stopped.
pub fn cmd_ids(c: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let b = block(&c.ids, "ids")?;
    let energies = b.energies.clone().unwrap_or_else(default_energies);
    let mut out = Output::create(dir)?;
    let mut curves = Vec::new();
    for bc in boundaries(b.boundary) {
        let params = IdsParams { model: b.model, k: b.k, m: b.m, boundary: bc, energies: energies.clone(), seed: c.seed };
        let mut total = IdsAccumulator::new(params.clone())?;
        let end = b.start + b.samples;
        let mut lo = b.start;
        while lo < end {
            let hi = (lo + b.chunk).min(end);
            let name = format!("chunks/{}-{lo:012}-{hi:012}.json", bc_name(bc));
            let path = dir.join(&name);
            let cached = fs::read(&path).ok().and_then(|bytes| {
                let acc: IdsAccumulator = serde_json::from_slice(&bytes).ok()?;
                (acc.params == params && acc.ranges == [(lo, hi)]).then_some((acc, bytes))
            });
            let acc = match cached {
                Some((acc, bytes)) => {
                    log::info!("reusing {name}");
                    out.record(&name, &bytes);
                    acc
                }
                None => {
                    let mut acc = IdsAccumulator::new(params.clone())?;
                    acc.run(lo..hi)?;
                    out.write_json(&name, &acc)?;
                    acc
                }
            };
            total.merge(&acc)?;
            lo = hi;
        }
        total.check_failures()?;
        out.write_json(&format!("accumulator_{}.json", bc_name(bc)), &total)?;
        let curve = total.curve();
        out.write(&format!("ids_{}.csv", bc_name(bc)), curve.to_csv()?.as_bytes())?;
        curves.push(curve);
    }
    if let [d, n] = curves.as_slice() {
        let violations = bracket_violations(d, n);
        if !violations.is_empty() {
            log::warn!("Dirichlet estimate above Neumann at {} energies", violations.len());
        }
        out.write_json("bracket.json", &serde_json::json!({ "violations": violations }))?;
    }
    if let Some(eps) = &b.e1_epsilons {
        let p = small_e1_probability(&b.model, b.k, b.m, eps, b.start..b.start + b.samples, c.seed)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epsilon", "frequency", "wilson_low", "wilson_high", "successes", "trials"])?;
        for i in 0..eps.len() {
            w.write_record([
                eps[i].to_string(),
                p.frequency[i].to_string(),
                p.low[i].to_string(),
                p.high[i].to_string(),
                p.successes[i].to_string(),
                p.trials.to_string(),
            ])?;
        }
        out.write("e1_probability.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    }
    let seeds = (b.start..b.start + b.samples).map(|i| sample_seed(c.seed, i)).collect();
    let dir = out.finish("ids", c, seeds)?;
    Ok(Outcome { dir, failures: 0 })
}

/// Merges accumulator files of disjoint shards into one curve per boundary condition.
pub fn cmd_merge(inputs: &[PathBuf], dir: &Path) -> Result<Outcome> {
    let mut merged: BTreeMap<&'static str, IdsAccumulator> = BTreeMap::new();
    for path in inputs {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let acc: IdsAccumulator = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        match merged.get_mut(bc_name(acc.params.boundary)) {
            Some(m) => m.merge(&acc).map_err(|e| Error::Config(e.to_string()))?,
            None => {
                merged.insert(bc_name(acc.params.boundary), acc);
            }
        }
    }
    let mut out = Output::create(dir)?;
    let mut seeds = Vec::new();
    let mut first: Option<IdsParams> = None;
    for (name, acc) in &merged {
        acc.check_failures()?;
        out.write_json(&format!("accumulator_{name}.json"), acc)?;
        out.write(&format!("ids_{name}.csv"), acc.curve().to_csv()?.as_bytes())?;
        for &(a, b) in &acc.ranges {
            seeds.extend((a..b).map(|i| sample_seed(acc.params.seed, i)));
        }
        first.get_or_insert_with(|| acc.params.clone());
    }
    let p = first.ok_or_else(|| Error::Config("nothing to merge".into()))?;
    seeds.sort_unstable();
    seeds.dedup();
    let config = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        output_dir: None,
        seed: p.seed,
        sample: None,
        verify: None,
        ids: Some(IdsBlock {
            model: p.model,
            k: p.k,
            m: p.m,
            boundary: if merged.len() == 2 {
                BoundarySelection::Both
            } else if merged.contains_key("dirichlet") {
                BoundarySelection::Dirichlet
            } else {
                BoundarySelection::Neumann
            },
            samples: merged.values().map(|a| a.samples + a.failures).max().unwrap_or(0),
            start: 0,
            energies: Some(p.energies),
            chunk: default_chunk(),
            e1_epsilons: None,
        }),
        lifshitz: None,
    };
    let dir = out.finish("merge", &config, seeds)?;
    Ok(Outcome { dir, failures: 0 })
}

/// Reads `(x, y)` pairs from an IDS or probability CSV.
pub fn read_curve(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (xi, yi) = match (col("E"), col("N_hat"), col("epsilon"), col("frequency")) {
        (Some(x), Some(y), _, _) | (_, _, Some(x), Some(y)) => (x, y),
        _ => return Err(Error::Config(format!("{}: expected columns E,N_hat or epsilon,frequency", path.display()))),
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| {
            rec[i].parse::<f64>().map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        };
        xs.push(parse(xi)?);
        ys.push(parse(yi)?);
    }
    Ok((xs, ys))
}

/// Tail fit of an existing curve, with a plot-ready table.
pub fn cmd_lifshitz(c: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let b = block(&c.lifshitz, "lifshitz")?;
    let (e, n) = read_curve(&b.input)?;
    let fit = lifshitz_fit(&e, &n, b.window)?;
    let mut out = Output::create(dir)?;
    out.write_json("fit.json", &fit)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["E", "N_hat", "log_N", "log_abs_log_N", "fit_log_N", "used"])?;
    for (x, y) in e.iter().zip(&n) {
        let log_n = y.ln();
        w.write_record([
            x.to_string(),
            y.to_string(),
            log_n.to_string(),
            (-log_n).ln().to_string(),
            (fit.intercept - fit.c / x).to_string(),
            fit.used_energies.contains(x).to_string(),
        ])?;
    }
    out.write("lifshitz_plot.csv", &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    let dir = out.finish("lifshitz", c, vec![c.seed])?;
    Ok(Outcome { dir, failures: 0 })
}

/// Human-readable summary of a run directory.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let text = fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| Error::Config(format!("{}: no manifest ({e})", dir.display())))?;
    let m: Manifest = serde_json::from_str(&text)?;
    let mut s = format!(
        "command: {}\ncode version: {}\nconfig sha256: {}\nseeds: {}\n",
        m.command,
        m.code_version,
        m.config_sha256,
        m.seeds.len()
    );
    for (name, hash) in &m.files {
        let ok = fs::read(dir.join(name)).map(|b| sha256_hex(&b) == *hash).unwrap_or(false);
        s += &format!("  {name} {}\n", if ok { "ok" } else { "MODIFIED OR MISSING" });
    }
    if m.files.contains_key("ledger.csv") {
        let mut r = csv::Reader::from_path(dir.join("ledger.csv"))?;
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for rec in r.records() {
            *counts.entry(rec?[5].to_string()).or_default() += 1;
        }
        for (k, v) in counts {
            s += &format!("{k}: {v}\n");
        }
    }
    if m.files.contains_key("fit.json") {
        let fit: crate::ids::LifshitzFit = serde_json::from_str(&fs::read_to_string(dir.join("fit.json"))?)?;
        s += &format!(
            "log|log N| slope {:.4} [{:.4}, {:.4}]\nC {:.4} [{:.4}, {:.4}]\n",
            fit.slope, fit.slope_ci.0, fit.slope_ci.1, fit.c, fit.c_ci.0, fit.c_ci.1
        );
    }
    Ok(s)
}
