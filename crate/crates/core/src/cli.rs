//! Command-line front end. [`run`] returns the process exit status.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::codec::read_template_file;
use crate::error::{Error, Result};
use crate::harness::{
    compute_experiment, report_from_rows, run_experiment, summary_tables, write_population, ExperimentConfig,
    PopulationSource, TwoStage,
};
use crate::matcher::ShiftRange;
use crate::search::{identify, identify_two_stage, load_manifest, Gallery, Method, SearchParams, SearchResult};
use crate::synth::{generate_population, ProbeSchedule};
use crate::validation::{
    oracle_exhaustive_small, oracle_random_pairs, randomized_equivalence_trials, EquivalenceReport, OracleReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "iris-lab", version, about = "1:N versus 1:First iris identification experiments")]
pub struct Cli {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Comma-separated shift bounds, e.g. 0,3,5.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    shifts: Option<Vec<u32>>,
    /// Comma-separated thresholds, e.g. 0.26,0.30.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    thresholds: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    #[value(name = "1n")]
    OneToN,
    #[value(name = "1first")]
    OneToFirst,
    Both,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::OneToN => vec![Method::OneToN],
            MethodArg::OneToFirst => vec![Method::OneToFirst],
            MethodArg::Both => Method::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic population as template files plus manifests.
    Generate(GenerateArgs),
    /// Search one probe against a gallery manifest and print JSON.
    Identify(IdentifyArgs),
    /// Run the configured sweep and write the results bundle.
    Sweep(SweepArgs),
    /// Run the oracle and decision-equivalence suites.
    Validate(ValidateArgs),
    /// Rebuild summary CSV and ROC JSON from a rows CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    identities: Option<usize>,
    /// Probes per identity.
    #[arg(long)]
    probes: Option<u32>,
    #[arg(long)]
    block_rows: Option<usize>,
    #[arg(long)]
    block_cols: Option<usize>,
    #[arg(long)]
    flip_prob: Option<f64>,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    probe: PathBuf,
    gallery: PathBuf,
    #[arg(long)]
    threshold: f64,
    /// Narrow and wide bounds, e.g. 7,21.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["NARROW", "WIDE"])]
    two_stage: Option<Vec<u32>>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated nested gallery sizes.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["NARROW", "WIDE"])]
    two_stage: Option<Vec<u32>>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1_000)]
    pairs: u64,
    /// Also check equivalence on the configured population.
    #[arg(long)]
    population: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    rows: PathBuf,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn two_stage(v: &Option<Vec<u32>>) -> Option<TwoStage> {
    v.as_ref().map(|v| TwoStage { narrow: v[0], wide: v[1] })
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Some(m) = cli.method {
        cfg.methods = m.methods();
    }
    if let Some(s) = &cli.shifts {
        cfg.shift_ranges = s.clone();
    }
    if let Some(t) = &cli.thresholds {
        cfg.thresholds = t.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<i32> {
    let cfg = config(&cli)?;
    match &cli.command {
        Command::Generate(a) => generate(cfg, a, cli.output.is_none()),
        Command::Identify(a) => identify_cmd(&cli, a),
        Command::Sweep(a) => sweep(cfg, a),
        Command::Validate(a) => validate(cfg, a),
        Command::Report(a) => {
            let dir = match &cli.output {
                Some(d) => d.clone(),
                None => a.rows.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            let summary = report_from_rows(&a.rows, &dir)?;
            let mut shifts: Vec<u32> = summary.iter().map(|s| s.shifts).collect();
            shifts.sort_unstable();
            shifts.dedup();
            print!("{}", summary_tables(&summary, &shifts));
            Ok(EXIT_OK)
        }
    }
}

fn generate(cfg: ExperimentConfig, a: &GenerateArgs, default_dir: bool) -> Result<i32> {
    let cfg = cfg.resolved();
    let mut params = match cfg.population {
        PopulationSource::Synthetic(p) => p,
        PopulationSource::Manifest { .. } => {
            return Err(Error::Config("generate needs a synthetic population config".into()))
        }
    };
    if let Some(n) = a.identities {
        params.n_identities = n;
    }
    if let Some(n) = a.probes {
        params.probes_per_identity = ProbeSchedule::Fixed(n);
    }
    if let Some(b) = a.block_rows {
        params.block_rows = b;
    }
    if let Some(b) = a.block_cols {
        params.block_cols = b;
    }
    if let Some(f) = a.flip_prob {
        params.flip_prob = f;
    }
    params.validate().map_err(|e| Error::Config(e.to_string()))?;
    let dir = if default_dir { PathBuf::from("population") } else { cfg.output_dir };
    let pop = generate_population(&params, &[])?;
    write_population(&pop, &params, &dir)?;
    println!(
        "wrote {} enrollments and {} probes to {}",
        pop.gallery.len(),
        pop.probes.len(),
        dir.display()
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Identified<'a> {
    method: &'static str,
    #[serde(flatten)]
    result: &'a SearchResult,
}

fn identify_cmd(cli: &Cli, a: &IdentifyArgs) -> Result<i32> {
    let shifts = match cli.shifts.as_deref() {
        None => 0,
        Some([s]) => *s,
        Some(_) => return Err(Error::Config("identify takes a single --shifts value".into())),
    };
    let probe = read_template_file(&a.probe)?;
    let gallery = Gallery::from_ordered(load_manifest(&a.gallery)?, cli.seed.unwrap_or(0))?;
    let methods = cli.method.unwrap_or(MethodArg::Both).methods();
    for m in methods {
        let result = match two_stage(&a.two_stage) {
            Some(ts) => identify_two_stage(
                &gallery,
                &probe,
                a.threshold,
                ShiftRange::new(ts.narrow),
                ShiftRange::new(ts.wide),
                m,
            )?,
            None => identify(m, &gallery, &probe, &SearchParams::new(a.threshold, ShiftRange::new(shifts))?)?,
        };
        println!("{}", serde_json::to_string(&Identified { method: m.as_str(), result: &result })?);
    }
    Ok(EXIT_OK)
}

fn sweep(mut cfg: ExperimentConfig, a: &SweepArgs) -> Result<i32> {
    if let Some(s) = &a.sizes {
        cfg.gallery_sizes = s.clone();
    }
    if a.two_stage.is_some() {
        cfg.two_stage = two_stage(&a.two_stage);
    }
    let bundle = run_experiment(&cfg)?;
    print!("{}", summary_tables(&bundle.summary, &bundle.config.shift_ranges));
    let v = bundle.validation.violations();
    println!("{} rows written to {}; {v} violations", bundle.rows.len(), bundle.config.output_dir.display());
    Ok(if v == 0 { EXIT_OK } else { EXIT_VIOLATIONS })
}

#[derive(Serialize)]
struct ValidateReport {
    oracle_small: OracleReport,
    oracle_random: OracleReport,
    randomized: EquivalenceReport,
    population_violations: Option<usize>,
}

fn validate(cfg: ExperimentConfig, a: &ValidateArgs) -> Result<i32> {
    let seed = cfg.master_seed;
    let report = ValidateReport {
        oracle_small: oracle_exhaustive_small()?,
        oracle_random: oracle_random_pairs(seed, a.pairs, 20, 240, ShiftRange::new(14))?,
        randomized: randomized_equivalence_trials(seed, a.trials)?,
        population_violations: if a.population {
            Some(compute_experiment(&cfg)?.validation.violations())
        } else {
            None
        },
    };
    println!(
        "oracle 1x8 exhaustive: {} pairs, {} mismatches",
        report.oracle_small.pairs_checked,
        report.oracle_small.mismatches.len()
    );
    println!(
        "oracle 20x240 random ±14: {} pairs, {} mismatches",
        report.oracle_random.pairs_checked,
        report.oracle_random.mismatches.len()
    );
    println!(
        "randomized equivalence: {} trials, {} violations",
        report.randomized.trials,
        report.randomized.violations.len()
    );
    if let Some(v) = report.population_violations {
        println!("population sweep checks: {v} violations");
    }
    if cfg.output_dir != ExperimentConfig::default().output_dir {
        std::fs::create_dir_all(&cfg.output_dir)?;
        std::fs::write(cfg.output_dir.join("validate.json"), serde_json::to_string_pretty(&report)?)?;
    }
    let bad = report.oracle_small.mismatches.len()
        + report.oracle_random.mismatches.len()
        + report.randomized.violations.len()
        + report.population_violations.unwrap_or(0);
    Ok(if bad == 0 { EXIT_OK } else { EXIT_VIOLATIONS })
}
