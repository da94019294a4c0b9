//! Experiment orchestration behind the `squint-isac` binary.
//!
//! Every batch is a grid of independent cells. A cell's seed depends only on
//! the base seed and the cell's grid coordinates, cells run on a work-stealing
//! pool, and results are collected in grid order, so output files are
//! byte-identical for any thread count.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{beamspace_channels, cs_correlation, evaluate_with, BeamspaceDictionary};
use crate::model::dataset::{import_dataset, Dataset, Normalizers, Sample};
use crate::model::{derive_seed, sample_realization, ChannelRealization, SystemConfig};
use crate::pareto::{trace_region, Endpoints};
use crate::precoder::{PrecoderState, TtdGrid};
use crate::schemes::{optimize_ttd_correlation, optimize_ttd_from, OptimizerConfig, Scheme};
use crate::theory::{verify_correlation_trend, VerificationReport, VerifyConfig};
use crate::{Error, Result};

/// Salt separating the normalizer search's random start from the optimizer's own.
const EXPORT_SALT: u64 = 0xE5_0000_0000_0002;

#[derive(Debug, Parser)]
#[command(name = "squint-isac", version, about = "Wideband ISAC hybrid precoding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate, CRB and correlation of every scheme over an SNR x MSIA x seed grid.
    Sweep(RunArgs),
    /// Rate-CRB boundaries and dual-functional gains of the tunable schemes.
    Pareto(RunArgs),
    /// Monte-Carlo check that higher C-S correlation improves the closed-form boundary.
    Verify(RunArgs),
    /// Channel dataset with per-sample loss normalizers.
    Export(RunArgs),
    /// Scores serialized precoder states against a dataset.
    EvalState(EvalArgs),
}

/// Built-in system profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 16x16 arrays, 8x8 TTDs, 32 subcarriers.
    #[default]
    Paper,
    /// 4x4 arrays, 2x2 TTDs, 8 subcarriers.
    Desk,
}

impl Profile {
    pub fn config(self) -> SystemConfig {
        match self {
            Profile::Paper => SystemConfig::paper(),
            Profile::Desk => SystemConfig::desk(),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML experiment file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base system profile; a `profile` key in the file takes precedence.
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Realizations per grid point.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated scheme names.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<String>>,
    /// SNR grid in dB, `lo:hi:step` or a single value.
    #[arg(long)]
    pub snr_db: Option<String>,
    /// Comma-separated MSIA values in radians.
    #[arg(long, value_delimiter = ',')]
    pub msia: Option<Vec<f64>>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Dataset written by `export`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// State files. The sample index is the trailing number of each file stem
    /// unless `--sample` is given.
    #[arg(required = true)]
    pub states: Vec<PathBuf>,
    /// Sample index for a single state file.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Boundary-tracing settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParetoSettings {
    /// Thresholds per boundary, from 0 to the largest serviceable one.
    pub n_gamma: usize,
}

impl Default for ParetoSettings {
    fn default() -> Self {
        Self { n_gamma: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub trials: usize,
    pub offsets: Vec<f64>,
    pub gamma: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        let v = VerifyConfig::default();
        Self { trials: v.trials, offsets: v.offsets, gamma: v.gamma }
    }
}

/// Top level of the TOML experiment file; `[system]` is merged onto the profile separately.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpecFile {
    profile: Option<Profile>,
    schemes: Vec<String>,
    snr_db: Vec<f64>,
    msia: Vec<f64>,
    seeds: usize,
    base_seed: u64,
    out: PathBuf,
    optimizer: OptimizerConfig,
    pareto: ParetoSettings,
    verify: VerifySettings,
}

impl Default for SpecFile {
    fn default() -> Self {
        Self {
            profile: None,
            schemes: Scheme::ALL.iter().map(|s| s.name().to_string()).collect(),
            snr_db: vec![10.0],
            msia: vec![0.1],
            seeds: 10,
            base_seed: 0,
            out: PathBuf::from("out"),
            optimizer: OptimizerConfig::default(),
            pareto: ParetoSettings::default(),
            verify: VerifySettings::default(),
        }
    }
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub cfg: SystemConfig,
    pub opt: OptimizerConfig,
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub msia: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    pub out: PathBuf,
    pub pareto: ParetoSettings,
    pub verify: VerifySettings,
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    /// Defaults of `profile` with nothing overridden.
    pub fn from_profile(profile: Profile) -> Self {
        let f = SpecFile::default();
        Self {
            cfg: profile.config(),
            opt: f.optimizer,
            schemes: Scheme::ALL.to_vec(),
            snr_db: f.snr_db,
            msia: f.msia,
            seeds: f.seeds,
            base_seed: f.base_seed,
            out: f.out,
            pareto: f.pareto,
            verify: f.verify,
            threads: None,
        }
    }

    /// Parses a TOML experiment. `[system]` keys override the chosen profile one by one.
    pub fn from_toml(text: &str, fallback: Profile) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let overrides = table.remove("system");
        let file: SpecFile =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let profile = file.profile.unwrap_or(fallback);
        let mut cfg = profile.config();
        if let Some(overrides) = overrides {
            let toml::Value::Table(overrides) = overrides else {
                return Err(Error::Config("`system` must be a table".into()));
            };
            let mut base = match toml::Value::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))? {
                toml::Value::Table(t) => t,
                _ => unreachable!("a struct serializes to a table"),
            };
            base.extend(overrides);
            cfg = toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        }
        let schemes = parse_schemes(&file.schemes)?;
        let spec = Self {
            cfg,
            opt: file.optimizer,
            schemes,
            snr_db: file.snr_db,
            msia: file.msia,
            seeds: file.seeds,
            base_seed: file.base_seed,
            out: file.out,
            pareto: file.pareto,
            verify: file.verify,
            threads: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Loads the file named by `args` (if any) and applies the command-line overrides.
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let fallback = args.profile.unwrap_or_default();
        let mut spec = match &args.config {
            Some(path) => Self::from_toml(&fs::read_to_string(path)?, fallback)?,
            None => Self::from_profile(fallback),
        };
        if let Some(n) = args.seeds {
            spec.seeds = n;
        }
        if let Some(s) = args.base_seed {
            spec.base_seed = s;
        }
        if let Some(o) = &args.out {
            spec.out = o.clone();
        }
        if let Some(names) = &args.schemes {
            spec.schemes = parse_schemes(names)?;
        }
        if let Some(grid) = &args.snr_db {
            spec.snr_db = parse_range(grid)?;
        }
        if let Some(m) = &args.msia {
            spec.msia = m.clone();
        }
        spec.threads = args.threads;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        self.opt.validate()?;
        if self.schemes.is_empty() || self.snr_db.is_empty() || self.msia.is_empty() || self.seeds == 0 {
            return Err(Error::Config("schemes, SNR grid, MSIA grid and seed count must be non-empty".into()));
        }
        if self.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("SNR values must be finite".into()));
        }
        if self.msia.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("MSIA values must be finite and non-negative".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        if self.pareto.n_gamma == 0 || self.verify.trials == 0 || self.verify.offsets.is_empty() {
            return Err(Error::Config("pareto and verify grids must be non-empty".into()));
        }
        Ok(())
    }

    /// Every `(snr index, msia index, trial)` cell in emission order.
    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.snr_db.len() * self.msia.len() * self.seeds);
        for (i, &snr_db) in self.snr_db.iter().enumerate() {
            for (j, &msia) in self.msia.iter().enumerate() {
                for trial in 0..self.seeds {
                    let seed = derive_seed(self.base_seed, &[i as u64, j as u64, trial as u64]);
                    out.push(Cell { snr_db, msia, seed });
                }
            }
        }
        out
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    snr_db: f64,
    msia: f64,
    seed: u64,
}

impl Cell {
    fn realize(&self, spec: &ExperimentSpec) -> Result<(SystemConfig, ChannelRealization)> {
        let cfg = spec.cfg.clone().with_snr_db(self.snr_db);
        let r = sample_realization(self.seed, &cfg, self.msia)?;
        Ok((cfg, r))
    }
}

pub fn parse_schemes(names: &[String]) -> Result<Vec<Scheme>> {
    let mut out: Vec<Scheme> = Vec::with_capacity(names.len());
    for n in names {
        let s: Scheme = n.trim().parse()?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

/// `lo:hi:step` (inclusive of `hi` up to rounding) or a single number.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("expected `lo:hi:step` or a number, got {text:?}"));
    let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
    match parts.as_slice() {
        [v] => Ok(vec![*v]),
        [lo, hi, step] if *step > 0.0 && hi >= lo => {
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| lo + step * i as f64).collect())
        }
        _ => Err(bad()),
    }
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub scheme: Scheme,
    pub snr_db: f64,
    pub msia: f64,
    pub rate_bits: f64,
    /// Infinite when the precoder leaves a target unobservable.
    pub crb: f64,
    pub correlation: f64,
}

/// Runs every scheme on every cell. Infeasible `(cell, scheme)` pairs are left out.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cells = spec.cells();
    let per_cell: Vec<Vec<SweepRow>> = spec.pool()?.install(|| {
        cells.par_iter().map(|c| sweep_cell(spec, c)).collect::<Result<_>>()
    })?;
    let rows: Vec<SweepRow> = per_cell.into_iter().flatten().collect();
    if rows.is_empty() {
        return Err(Error::NoFeasiblePoint("sweep".into()));
    }
    Ok(rows)
}

fn sweep_cell(spec: &ExperimentSpec, cell: &Cell) -> Result<Vec<SweepRow>> {
    let (cfg, r) = cell.realize(spec)?;
    let dict = BeamspaceDictionary::uniform(&cfg);
    let mut rows = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        let state = match scheme.run(&r, &cfg, &spec.opt) {
            Ok(s) => s,
            Err(Error::Infeasible { required, budget }) => {
                log::warn!("{} infeasible on seed {} (needs {required}, budget {budget})", scheme.name(), cell.seed);
                continue;
            }
            Err(e) => return Err(e),
        };
        rows.push(score(&r, &state, &dict, &cfg, cell, scheme)?);
    }
    Ok(rows)
}

fn score(
    r: &ChannelRealization,
    state: &PrecoderState,
    dict: &BeamspaceDictionary,
    cfg: &SystemConfig,
    cell: &Cell,
    scheme: Scheme,
) -> Result<SweepRow> {
    let (rate_bits, crb, correlation) = match evaluate_with(r, state, dict, cfg) {
        Ok(p) => (p.rate, p.crb, p.correlation),
        Err(Error::SingularFisher(_)) => {
            let (hc, hs) = beamspace_channels(&r.comm, &r.scene, Some(&state.ttd), dict, cfg)?;
            (crate::metrics::rate(&r.comm, state, cfg), f64::INFINITY, cs_correlation(&hc, &hs)?)
        }
        Err(e) => return Err(e),
    };
    Ok(SweepRow { seed: cell.seed, scheme, snr_db: cell.snr_db, msia: cell.msia, rate_bits, crb, correlation })
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One swept operating point of one boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub seed: u64,
    pub snr_db: f64,
    pub msia: f64,
    pub scheme: Scheme,
    pub eta: f64,
    pub gamma: f64,
    pub rate_bits: f64,
    pub crb: f64,
    pub dominated_flag: bool,
}

/// Gain of one scheme on one cell; `rho` is absent when the dedicated
/// endpoints do not span a rectangle or no threshold was feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub seed: u64,
    pub snr_db: f64,
    pub msia: f64,
    pub scheme: Scheme,
    pub rho: Option<f64>,
    pub endpoints: Option<Endpoints>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoOutput {
    pub boundary: Vec<BoundaryRow>,
    pub summaries: Vec<RegionSummary>,
}

/// Traces every tunable scheme of `spec` on every cell.
pub fn run_pareto(spec: &ExperimentSpec) -> Result<ParetoOutput> {
    spec.validate()?;
    let schemes: Vec<Scheme> = spec.schemes.iter().copied().filter(|s| s.is_tunable()).collect();
    if schemes.is_empty() {
        return Err(Error::Config("boundary tracing needs at least one of sa-opt, cbs, no-ttd".into()));
    }
    let cells = spec.cells();
    let per_cell: Vec<ParetoOutput> = spec.pool()?.install(|| {
        cells.par_iter().map(|c| pareto_cell(spec, &schemes, c)).collect::<Result<_>>()
    })?;
    let mut out = ParetoOutput::default();
    for p in per_cell {
        out.boundary.extend(p.boundary);
        out.summaries.extend(p.summaries);
    }
    if out.boundary.is_empty() {
        return Err(Error::NoFeasiblePoint("pareto".into()));
    }
    Ok(out)
}

fn pareto_cell(spec: &ExperimentSpec, schemes: &[Scheme], cell: &Cell) -> Result<ParetoOutput> {
    let (cfg, r) = cell.realize(spec)?;
    let summary = |scheme, rho, endpoints, status: &str| RegionSummary {
        seed: cell.seed,
        snr_db: cell.snr_db,
        msia: cell.msia,
        scheme,
        rho,
        endpoints,
        status: status.to_string(),
    };
    let mut out = ParetoOutput::default();
    let endpoints = match Endpoints::from_dedicated(&r, &cfg, &spec.opt).and_then(|e| e.validate().map(|_| e)) {
        Ok(e) => Some(e),
        Err(e @ (Error::Degenerate(_) | Error::SingularFisher(_))) => {
            log::warn!("seed {}: no reference rectangle ({e})", cell.seed);
            None
        }
        Err(e) => return Err(e),
    };
    // a degenerate rectangle still gets its boundaries traced, scored against a placeholder
    let reference = endpoints.unwrap_or(Endpoints { r_sen: 0.0, crb_min: 0.0, r_max: 1.0, crb_com: 1.0 });
    for &scheme in schemes {
        match trace_region(&r, scheme, reference, spec.pareto.n_gamma, &cfg, &spec.opt) {
            Ok(region) => {
                out.boundary.extend(region.sweep.iter().map(|p| BoundaryRow {
                    seed: cell.seed,
                    snr_db: cell.snr_db,
                    msia: cell.msia,
                    scheme,
                    eta: p.eta,
                    gamma: p.gamma,
                    rate_bits: p.rate,
                    crb: p.crb,
                    dominated_flag: p.dominated,
                }));
                out.summaries.push(match endpoints {
                    Some(e) => summary(scheme, Some(region.rho), Some(e), "ok"),
                    None => summary(scheme, None, None, "degenerate-endpoints"),
                });
            }
            Err(Error::NoFeasiblePoint(_)) => out.summaries.push(summary(scheme, None, endpoints, "infeasible")),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Monte-Carlo correlation check at the first SNR of the grid.
pub fn run_verify(spec: &ExperimentSpec) -> Result<VerificationReport> {
    spec.validate()?;
    let cfg = spec.cfg.clone().with_snr_db(spec.snr_db[0]);
    let v = VerifyConfig {
        trials: spec.verify.trials,
        offsets: spec.verify.offsets.clone(),
        gamma: spec.verify.gamma,
        base_seed: spec.base_seed,
    };
    spec.pool()?.install(|| verify_correlation_trend(&cfg, &v))
}

/// Loss normalizers of one realization.
///
/// `cor_star` is the better of two TTD searches, one from a random start and one
/// from zero delays, so it never falls below the TTD-free correlation.
pub fn normalizers(r: &ChannelRealization, cfg: &SystemConfig, opt: &OptimizerConfig) -> Result<Normalizers> {
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed ^ EXPORT_SALT);
    let random = optimize_ttd_correlation(r, cfg, opt, &mut rng)?;
    let dict = BeamspaceDictionary::uniform(cfg);
    let zero = optimize_ttd_from(r, TtdGrid::zeros(cfg), &dict, cfg, opt)?;
    let cor_star = random.correlation.max(zero.correlation);
    let r_max = crate::metrics::rate(&r.comm, &Scheme::Com.run(r, cfg, opt)?, cfg);
    let crb_min = crate::metrics::crb(&r.scene, &Scheme::Sense.run(r, cfg, opt)?, cfg)?;
    Ok(Normalizers { cor_star, r_max, crb_min })
}

/// Dataset of every MSIA x trial cell at the first SNR of the grid.
pub fn run_export(spec: &ExperimentSpec) -> Result<Dataset> {
    spec.validate()?;
    let cells: Vec<Cell> = spec.cells().into_iter().filter(|c| c.snr_db == spec.snr_db[0]).collect();
    let cfg = spec.cfg.clone().with_snr_db(spec.snr_db[0]);
    let samples: Vec<Sample> = spec.pool()?.install(|| {
        cells
            .par_iter()
            .map(|c| {
                let (cfg, r) = c.realize(spec)?;
                let n = normalizers(&r, &cfg, &spec.opt)?;
                Ok(Sample { realization: r, normalizers: Some(n) })
            })
            .collect::<Result<_>>()
    })?;
    Ok(Dataset { cfg, samples })
}

/// Score of one externally produced state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub sample: usize,
    pub seed: u64,
    pub rate_bits: f64,
    pub crb: f64,
    pub correlation: f64,
    /// `(Cor / Cor⋆)(R / R_max + CRB_min / CRB)` when the sample carries normalizers.
    pub utility: Option<f64>,
}

/// Learning utility of one operating point; 2 at both dedicated optima with `Cor = Cor⋆`.
pub fn utility(rate: f64, crb: f64, correlation: f64, n: &Normalizers) -> f64 {
    (correlation / n.cor_star) * (rate / n.r_max + n.crb_min / crb)
}

pub fn eval_state(dataset: &Dataset, index: usize, state: &PrecoderState) -> Result<EvalRow> {
    let sample = dataset
        .samples
        .get(index)
        .ok_or_else(|| Error::InvalidInput(format!("sample {index} not in dataset of {}", dataset.samples.len())))?;
    let cfg = &dataset.cfg;
    let r = &sample.realization;
    let dict = BeamspaceDictionary::uniform(cfg);
    let cell = Cell { snr_db: 0.0, msia: r.msia, seed: r.seed };
    let row = score(r, state, &dict, cfg, &cell, Scheme::SaOpt)?;
    Ok(EvalRow {
        sample: index,
        seed: r.seed,
        rate_bits: row.rate_bits,
        crb: row.crb,
        correlation: row.correlation,
        utility: sample.normalizers.map(|n| utility(row.rate_bits, row.crb, row.correlation, &n)),
    })
}

/// Trailing decimal digits of a file stem, e.g. `state_12.json` gives 12.
fn stem_index(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().rev().take_while(char::is_ascii_digit).collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

pub fn run_eval(args: &EvalArgs) -> Result<Vec<EvalRow>> {
    let dataset = import_dataset(&args.dataset)?;
    if args.sample.is_some() && args.states.len() != 1 {
        return Err(Error::Config("--sample applies to a single state file".into()));
    }
    args.states
        .iter()
        .map(|path| {
            let index = args
                .sample
                .or_else(|| stem_index(path))
                .ok_or_else(|| Error::Config(format!("cannot tell the sample index of {}", path.display())))?;
            let state = PrecoderState::from_json(&fs::read_to_string(path)?, &dataset.cfg)?;
            eval_state(&dataset, index, &state)
        })
        .collect()
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Process exit status for an error: 2 for bad configuration or input, 3 when nothing was feasible.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::UnknownScheme(_)
        | Error::MsiaUnreachable(_)
        | Error::Dataset(_)
        | Error::Version { .. }
        | Error::Json(_) => 2,
        Error::NoFeasiblePoint(_) => 3,
        _ => 1,
    }
}

/// Executes one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep(a) => {
            let spec = ExperimentSpec::from_args(&a)?;
            let rows = run_sweep(&spec)?;
            out_dir(&spec.out)?;
            let path = spec.out.join("sweep.csv");
            write_csv(&rows, &path)?;
            log::info!("{} rows -> {}", rows.len(), path.display());
        }
        Command::Pareto(a) => {
            let spec = ExperimentSpec::from_args(&a)?;
            let out = run_pareto(&spec)?;
            out_dir(&spec.out)?;
            write_csv(&out.boundary, &spec.out.join("pareto_boundary.csv"))?;
            fs::write(spec.out.join("pareto_summary.json"), serde_json::to_string_pretty(&out.summaries)?)?;
            log::info!("{} regions traced", out.summaries.len());
        }
        Command::Verify(a) => {
            let spec = ExperimentSpec::from_args(&a)?;
            let report = run_verify(&spec)?;
            out_dir(&spec.out)?;
            fs::write(spec.out.join("verify.json"), serde_json::to_string_pretty(&report)?)?;
            println!(
                "spearman cor/rate {:.3}, cor/inv-crb {:.3}: {}",
                report.spearman.cor_rate,
                report.spearman.cor_inv_crb,
                if report.pass { "pass" } else { "fail" }
            );
        }
        Command::Export(a) => {
            let spec = ExperimentSpec::from_args(&a)?;
            let ds = run_export(&spec)?;
            out_dir(&spec.out)?;
            let path = spec.out.join("dataset.json");
            crate::model::dataset::export_dataset(&ds, &path)?;
            log::info!("{} samples -> {}", ds.samples.len(), path.display());
        }
        Command::EvalState(a) => {
            let rows = run_eval(&a)?;
            match &a.out {
                Some(dir) => {
                    out_dir(dir)?;
                    write_csv(&rows, &dir.join("eval.csv"))?;
                }
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentSpec {
        let mut s = ExperimentSpec::from_profile(Profile::Desk);
        s.seeds = 2;
        s
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0:20:5").unwrap(), vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_range("10").unwrap(), vec![10.0]);
        assert_eq!(parse_range("0:1:0.1").unwrap().len(), 11);
        assert!(parse_range("5:0:1").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn toml_overrides_profile_fields() {
        let text = r#"
            profile = "desk"
            schemes = ["sa-opt", "com"]
            snr_db = [0.0, 10.0]
            seeds = 3
            [system]
            subcarriers = 4
            [optimizer]
            n_ao = 2
        "#;
        let s = ExperimentSpec::from_toml(text, Profile::Paper).unwrap();
        assert_eq!(s.cfg.subcarriers, 4);
        assert_eq!(s.cfg.n_th, SystemConfig::desk().n_th);
        assert_eq!(s.opt.n_ao, 2);
        assert_eq!(s.schemes, vec![Scheme::SaOpt, Scheme::Com]);
        assert!(matches!(ExperimentSpec::from_toml("bogus = 1", Profile::Desk), Err(Error::Config(_))));
        assert!(matches!(ExperimentSpec::from_toml("[system]\nn_th = 3", Profile::Desk), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentSpec::from_toml("schemes = [\"nope\"]", Profile::Desk),
            Err(Error::UnknownScheme(_))
        ));
    }

    #[test]
    fn single_cell_single_row() {
        let mut s = tiny();
        s.seeds = 1;
        s.schemes = vec![Scheme::Com];
        let rows = run_sweep(&s).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].scheme, Scheme::Com);
    }

    #[test]
    fn cell_seeds_are_distinct_and_stable() {
        let s = tiny();
        let a: Vec<u64> = s.cells().iter().map(|c| c.seed).collect();
        let b: Vec<u64> = s.cells().iter().map(|c| c.seed).collect();
        assert_eq!(a, b);
        let mut d = a.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), a.len());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::NoFeasiblePoint("sweep".into())), 3);
        assert_eq!(exit_code(&Error::ZeroChannel), 1);
    }

    #[test]
    fn stem_indices() {
        assert_eq!(stem_index(Path::new("dir/state_12.json")), Some(12));
        assert_eq!(stem_index(Path::new("7.json")), Some(7));
        assert_eq!(stem_index(Path::new("state.json")), None);
    }

    #[test]
    fn utility_peaks_at_two() {
        let n = Normalizers { cor_star: 3.0, r_max: 10.0, crb_min: 0.01 };
        assert!((utility(10.0, 0.01, 3.0, &n) - 2.0).abs() < 1e-15);
    }
}
