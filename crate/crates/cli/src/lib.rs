//! `savvy` command-line pipeline: simulate corpora, describe datasets, run the
//! per-dataset analyses, pool ratios across datasets, or all of it at once.
//!
//! Exit codes: 0 success, 1 partial failure (some dataset or table failed, or
//! an I/O error), 2 invalid configuration.

pub mod config;
pub mod describe;
pub mod inputs;
pub mod pipeline;
pub mod pooling;
pub mod report;
pub mod simulate;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use savvy_core::benchmark::read_ratio_records;

use config::{ConfigError, FileConfig, RunConfig, RunSection};
use inputs::{discover, DatasetSource};
use pooling::TableRecords;
use report::BundleWriter;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "savvy", version, about = "Adverse-event analyses under competing events")]
pub struct Cli {
    /// TOML config with [run] and [simulate] sections; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated corpus from the [simulate] section.
    Simulate(SimulateArgs),
    /// Per-arm event frequencies and follow-up.
    Describe(RunArgs),
    /// Per-dataset estimates, ratios, cross-tabs and exclusions.
    Analyze(RunArgs),
    /// Pool ratio CSVs written by `analyze`.
    Meta(RunArgs),
    /// describe + analyze + meta in one bundle.
    Report(RunArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory (overrides simulate.output).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub datasets: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Dataset CSVs or directories of them (ratio CSVs for `meta`).
    pub inputs: Vec<PathBuf>,
    /// CSV manifest with columns trial_id,ae_type_id,path.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Evaluation quantiles, from 1.0, 0.9, 0.6, 0.3.
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// all_ce and/or death_only.
    #[arg(long = "ce-mode", value_delimiter = ',')]
    pub ce_modes: Option<Vec<String>>,
    /// Bootstrap replicates.
    #[arg(short = 'B', long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum AEs per arm for hazard analyses.
    #[arg(long)]
    pub min_events: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Extra report formats (csv is always written): json.
    #[arg(long = "format", value_delimiter = ',')]
    pub formats: Option<Vec<String>>,
    /// dersimonian_laird, reml or fixed_effect.
    #[arg(long)]
    pub tau_method: Option<String>,
    /// efron or breslow.
    #[arg(long)]
    pub ties: Option<String>,
}

impl RunArgs {
    fn section(&self) -> RunSection {
        RunSection {
            inputs: (!self.inputs.is_empty()).then(|| self.inputs.clone()),
            manifest: self.manifest.clone(),
            quantiles: self.quantiles.clone(),
            ce_modes: self.ce_modes.clone(),
            replicates: self.replicates,
            seed: self.seed,
            min_events: self.min_events,
            output: self.output.clone(),
            formats: self.formats.clone(),
            tau_method: self.tau_method.clone(),
            ties: self.ties.clone(),
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<ConfigError>() {
            Ok(c) => Failure::Config(c),
            Err(e) => Failure::Runtime(e),
        }
    }
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig, ConfigError> {
    path.map_or_else(|| Ok(FileConfig::default()), FileConfig::load)
}

pub fn resolve_run(file: &FileConfig, args: &RunArgs) -> Result<RunConfig, ConfigError> {
    RunConfig::resolve(file.run.clone().overridden_by(args.section()))
}

/// Outcome of a command: whether any dataset or table failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Clean,
    Partial,
}

pub fn run_simulate(file: &FileConfig, args: &SimulateArgs) -> Result<Completion, Failure> {
    let mut sec = file.simulate.clone().ok_or_else(|| ConfigError("simulate needs a [simulate] section".into()))?;
    if let Some(s) = args.seed {
        sec.seed = Some(s);
    }
    if let Some(n) = args.datasets {
        sec.datasets = n;
    }
    let dir = args.output.clone().or(sec.output.clone()).unwrap_or_else(|| PathBuf::from("savvy-sim"));
    let sources = simulate::write_corpus(&sec, &dir)?;
    log::info!("wrote {} datasets to {}", sources.len(), dir.display());
    Ok(Completion::Clean)
}

pub fn run_describe(cfg: &RunConfig) -> Result<Completion, Failure> {
    cfg.require_inputs()?;
    let sources = discover(cfg)?;
    let mut rows = Vec::new();
    let mut partial = false;
    for s in &sources {
        match s.load() {
            Ok(ds) => rows.extend(describe::describe_dataset(&ds)),
            Err(e) => {
                log::warn!("{}/{}: {e}", s.trial_id, s.ae_type_id);
                partial = true;
            }
        }
    }
    let mut w = BundleWriter::new(&cfg.output)?;
    report::write_describe(&mut w, &rows)?;
    Ok(if partial { Completion::Partial } else { Completion::Clean })
}

fn analyze_into(w: &mut BundleWriter, cfg: &RunConfig, sources: &[DatasetSource]) -> anyhow::Result<pipeline::Bundle> {
    let bundle = pipeline::run_analyses(cfg, sources);
    report::write_analysis(w, cfg, &bundle)?;
    Ok(bundle)
}

pub fn run_analyze(cfg: &RunConfig) -> Result<Completion, Failure> {
    cfg.require_inputs()?;
    let sources = discover(cfg)?;
    let mut w = BundleWriter::new(&cfg.output)?;
    let bundle = analyze_into(&mut w, cfg, &sources)?;
    report::write_manifest(&mut w, "analyze", cfg, &sources, Some(&bundle))?;
    Ok(if bundle.has_failures() { Completion::Partial } else { Completion::Clean })
}

pub fn run_report(cfg: &RunConfig) -> Result<Completion, Failure> {
    cfg.require_inputs()?;
    let sources = discover(cfg)?;
    let mut w = BundleWriter::new(&cfg.output)?;
    let bundle = analyze_into(&mut w, cfg, &sources)?;
    let describe: Vec<_> = bundle.outcomes.iter().flat_map(|o| o.describe.iter().cloned()).collect();
    report::write_describe(&mut w, &describe)?;
    let pooled = pooling::pool(&report::table_records(&bundle), cfg.tau_method);
    for warning in &pooled.warnings {
        log::warn!("{warning}");
    }
    report::write_pooled(&mut w, cfg, &pooled)?;
    report::write_manifest(&mut w, "report", cfg, &sources, Some(&bundle))?;
    Ok(if bundle.has_failures() { Completion::Partial } else { Completion::Clean })
}

fn ratio_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            ratio_files(&p, out)?;
        } else if p.file_name().is_some_and(|n| {
            let n = n.to_string_lossy();
            n.starts_with("ratios_") && n.ends_with(".csv")
        }) {
            out.push(p);
        }
    }
    Ok(())
}

/// Table name of a ratio file: its parent directory plus the stem without
/// the `ratios_` prefix, e.g. `all_ce/prob_q100`.
pub fn ratio_table_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let leaf = stem.strip_prefix("ratios_").unwrap_or(&stem).to_string();
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) => format!("{}/{leaf}", dir.to_string_lossy()),
        None => leaf,
    }
}

// Same table and candidate order as `report`; unknown tables go last by name.
fn canonical_order(groups: &mut [TableRecords]) {
    let all = RunConfig {
        quantiles: config::ALLOWED_QUANTILES.to_vec(),
        ce_modes: vec![savvy_core::CeMode::AllCE, savvy_core::CeMode::DeathOnly],
        ..RunConfig::resolve(RunSection::default()).expect("defaults are valid")
    };
    let known = pipeline::tables(&all);
    for g in groups.iter_mut() {
        if let Some(t) = known.iter().find(|t| t.name() == g.table) {
            g.expected = report::expected_candidates(*t);
        }
    }
    groups.sort_by_key(|g| (known.iter().position(|t| t.name() == g.table).unwrap_or(usize::MAX), g.table.clone()));
}

pub fn run_meta(cfg: &RunConfig) -> Result<Completion, Failure> {
    if cfg.inputs.is_empty() {
        return Err(ConfigError("meta needs ratio CSVs or directories containing them".into()).into());
    }
    let mut files = Vec::new();
    for input in &cfg.inputs {
        if input.is_dir() {
            ratio_files(input, &mut files).map_err(|e| anyhow::anyhow!("{}: {e}", input.display()))?;
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            return Err(ConfigError(format!("input {} does not exist", input.display())).into());
        }
    }
    let mut groups = Vec::new();
    let mut partial = false;
    for f in &files {
        let records = std::fs::File::open(f)
            .map_err(anyhow::Error::from)
            .and_then(|file| read_ratio_records(file).map_err(anyhow::Error::from));
        match records {
            Ok(records) => groups.push(TableRecords { table: ratio_table_name(f), expected: Vec::new(), records }),
            Err(e) => {
                log::warn!("{}: {e}", f.display());
                partial = true;
            }
        }
    }
    canonical_order(&mut groups);
    let pooled = pooling::pool(&groups, cfg.tau_method);
    let mut w = BundleWriter::new(&cfg.output)?;
    report::write_pooled(&mut w, cfg, &pooled)?;
    report::write_manifest(&mut w, "meta", cfg, &[], None)?;
    Ok(if partial { Completion::Partial } else { Completion::Clean })
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let outcome = load_file_config(cli.config.as_deref()).map_err(Failure::from).and_then(|file| match &cli.command {
        Command::Simulate(a) => run_simulate(&file, a),
        Command::Describe(a) => run_describe(&resolve_run(&file, a)?),
        Command::Analyze(a) => run_analyze(&resolve_run(&file, a)?),
        Command::Meta(a) => run_meta(&resolve_run(&file, a)?),
        Command::Report(a) => run_report(&resolve_run(&file, a)?),
    });
    match outcome {
        Ok(Completion::Clean) => EXIT_OK,
        Ok(Completion::Partial) => {
            eprintln!("savvy: finished with failures; see exclusions.csv");
            EXIT_PARTIAL
        }
        Err(Failure::Config(e)) => {
            eprintln!("savvy: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("savvy: {e:#}");
            EXIT_PARTIAL
        }
    }
}
