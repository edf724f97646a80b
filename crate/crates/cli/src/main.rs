//! `veritas`: run scenarios, verify and replay trails, classify consensus
//! shifts and export reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use veritas_core::config::{ConfigError, ScenarioConfig};
use veritas_core::reputation::{
    classify_region, region_sweep, ConvictionBand, RegimeTable, RegionLabel, RegionThresholds,
};
use veritas_core::sim::{simulate, with_threads, PairMetrics, SimError};
use veritas_core::trail::{replay, verify, ReplayError, ReplayState, TrailWriter};

const THREADS_VAR: &str = "VERITAS_THREADS";
const TRAIL_SUFFIX: &str = ".trail.jsonl";
const SWEEP_SIZE: usize = 201;

#[derive(Debug, Parser)]
#[command(name = "veritas", version, about = "Conviction and reputation simulation over claims and sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its trail plus metric and reputation summaries.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a trail, rebuild its ledger and print the reputation table.
    Replay {
        #[arg(long)]
        trail: PathBuf,
        /// Also print the verified event count and chain tip.
        #[arg(long)]
        verify: bool,
    },
    /// Print the region of a (prior, posterior) consensus pair.
    Classify {
        #[arg(long, allow_negative_numbers = true)]
        prior: f64,
        #[arg(long, allow_negative_numbers = true)]
        posterior: f64,
    },
    /// Export reputation, per-claim and regime reports from a trail.
    Report {
        #[arg(long)]
        trail: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Also export the region grid over the unit square.
        #[arg(long = "sweep-figure3")]
        sweep: bool,
        /// Overwrite existing report files.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Integrity(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Integrity(_) => 3,
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        CliError::Integrity(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            other => CliError::runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed, out } => cmd_simulate(&config, seed, &out),
        Command::Replay { trail, verify } => cmd_replay(&trail, verify),
        Command::Classify { prior, posterior } => cmd_classify(prior, posterior),
        Command::Report {
            trail,
            format,
            sweep,
            force,
        } => cmd_report(&trail, format, sweep, force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("veritas: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn thread_override() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        },
    }
}

/// `run.trail.jsonl` → `run`; any other name loses its last extension.
fn output_stem(trail: &Path) -> PathBuf {
    let name = trail.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = match name.strip_suffix(TRAIL_SUFFIX) {
        Some(s) => s.to_owned(),
        None => Path::new(&name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(name),
    };
    trail.with_file_name(stem)
}

fn sibling(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    stem.with_file_name(name)
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    claim_id: &'a str,
    source_id: &'a str,
    faithfulness: f64,
    conviction_p: f64,
    transparency: f64,
    correctness: f64,
    neutrality: f64,
    redundancy: f64,
    conviction: f64,
    persuasiveness: f64,
    demonstrability: f64,
}

impl<'a> From<&'a PairMetrics> for MetricsRow<'a> {
    fn from(m: &'a PairMetrics) -> Self {
        Self {
            claim_id: m.claim_id.as_str(),
            source_id: m.source_id.as_str(),
            faithfulness: m.report.faithfulness.probability,
            conviction_p: m.report.conviction.probability,
            transparency: m.report.transparency.probability,
            correctness: m.report.correctness.probability,
            neutrality: m.report.neutrality.probability,
            redundancy: m.report.redundancy.probability,
            conviction: m.conviction,
            persuasiveness: m.persuasiveness,
            demonstrability: m.demonstrability,
        }
    }
}

#[derive(Serialize)]
struct ReputationRow<'a> {
    source_id: &'a str,
    realm: &'a str,
    count: usize,
    reputation: f64,
}

fn reputation_rows(state: &ReplayState) -> Vec<ReputationRow<'_>> {
    state
        .ledger
        .rows()
        .map(|(source, realm, count, reputation)| ReputationRow {
            source_id: source.as_str(),
            realm,
            count,
            reputation,
        })
        .collect()
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).map_err(CliError::runtime)?;
    }
    for row in rows {
        w.serialize(row).map_err(CliError::runtime)?;
    }
    w.into_inner().map_err(CliError::runtime)
}

fn encode<T: Serialize>(rows: &[T], header: &[&str], format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Csv => csv_bytes(rows, header),
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(rows).map_err(CliError::runtime)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

const METRICS_HEADER: [&str; 11] = [
    "claim_id",
    "source_id",
    "faithfulness",
    "conviction_p",
    "transparency",
    "correctness",
    "neutrality",
    "redundancy",
    "conviction",
    "persuasiveness",
    "demonstrability",
];
const REPUTATION_HEADER: [&str; 4] = ["source_id", "realm", "count", "reputation"];

fn cmd_simulate(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let config = ScenarioConfig::load(config_path)?;
    let threads = thread_override()?;
    let seed = seed.unwrap_or(config.seed);
    RegimeTable::standard().map_err(CliError::runtime)?;

    // The trail is complete on disk before any summary is written.
    let mut writer = TrailWriter::create(out).map_err(CliError::runtime)?;
    let output = with_threads(threads, || simulate(&config, seed, &mut writer, None))??;
    drop(writer);

    let stem = output_stem(out);
    let rows: Vec<MetricsRow> = output.metrics.iter().map(MetricsRow::from).collect();
    let metrics_path = sibling(&stem, ".metrics.csv");
    fs::write(&metrics_path, csv_bytes(&rows, &METRICS_HEADER)?).map_err(CliError::runtime)?;
    let reputation_path = sibling(&stem, ".reputation.csv");
    fs::write(
        &reputation_path,
        csv_bytes(&reputation_rows(&output.state), &REPUTATION_HEADER)?,
    )
    .map_err(CliError::runtime)?;

    if let Some(c) = &output.coupling {
        if !c.converged {
            eprintln!(
                "veritas: verifier reputation coupling did not converge after {} iterations (residual {})",
                c.iterations, c.residual
            );
        }
    }
    println!(
        "wrote {} events to {}; summaries {} and {}",
        output.state.events,
        out.display(),
        metrics_path.display(),
        reputation_path.display()
    );
    Ok(())
}

fn read_trail(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn cmd_replay(trail: &Path, report_verify: bool) -> Result<(), CliError> {
    let bytes = read_trail(trail)?;
    if report_verify {
        let events = verify(&bytes).map_err(|e| CliError::Integrity(e.to_string()))?;
        let tip = events.last().map_or("none", |e| e.hash.as_str());
        eprintln!("verified {} events; chain tip {tip}", events.len());
    }
    let state = replay(&bytes)?;
    let out = csv_bytes(&reputation_rows(&state), &REPUTATION_HEADER)?;
    std::io::stdout().write_all(&out).map_err(CliError::runtime)
}

fn cmd_classify(prior: f64, posterior: f64) -> Result<(), CliError> {
    let region = classify_region(prior, posterior).map_err(|e| CliError::Config(e.to_string()))?;
    println!("{region}");
    Ok(())
}

#[derive(Serialize)]
struct ClaimRow<'a> {
    source_id: &'a str,
    claim_id: &'a str,
    region: RegionLabel,
    conviction: f64,
    signed_conviction: f64,
    w_minus: f64,
    w_plus: f64,
    w: f64,
    contribution: f64,
}

#[derive(Serialize)]
struct RegimeRow {
    region: RegionLabel,
    band: ConvictionBand,
    contribution: String,
    archetype: String,
    count: usize,
}

#[derive(Serialize)]
struct SweepRow {
    p_orig: f64,
    p_joint: f64,
    region: RegionLabel,
}

fn cmd_report(trail: &Path, format: Format, sweep: bool, force: bool) -> Result<(), CliError> {
    let table = RegimeTable::standard().map_err(CliError::runtime)?;
    let state = replay(&read_trail(trail)?)?;
    let stem = output_stem(trail);
    let ext = format.extension();
    let mut outputs: Vec<(PathBuf, Vec<u8>)> = Vec::new();

    outputs.push((
        sibling(&stem, &format!(".report.reputation.{ext}")),
        encode(&reputation_rows(&state), &REPUTATION_HEADER, format)?,
    ));

    let claims: Vec<ClaimRow> = state
        .pairs
        .iter()
        .map(|((source, claim), pair)| ClaimRow {
            source_id: source.as_str(),
            claim_id: claim.as_str(),
            region: pair.fold.region,
            conviction: pair.consensus.conviction,
            signed_conviction: pair.fold.signed_conviction,
            w_minus: pair.fold.w_minus,
            w_plus: pair.fold.w_plus,
            w: pair.fold.w,
            contribution: pair.fold.contribution,
        })
        .collect();
    let claims_header = [
        "source_id",
        "claim_id",
        "region",
        "conviction",
        "signed_conviction",
        "w_minus",
        "w_plus",
        "w",
        "contribution",
    ];
    outputs.push((
        sibling(&stem, &format!(".report.claims.{ext}")),
        encode(&claims, &claims_header, format)?,
    ));

    let regimes: Vec<RegimeRow> = RegionLabel::ALL
        .into_iter()
        .flat_map(|region| ConvictionBand::ALL.into_iter().map(move |band| (region, band)))
        .map(|(region, band)| {
            let cell = table.cell(region, band);
            RegimeRow {
                region,
                band,
                contribution: cell.contribution_label,
                archetype: cell.archetype,
                count: state
                    .pairs
                    .values()
                    .filter(|p| p.fold.region == region && p.fold.band == band)
                    .count(),
            }
        })
        .collect();
    outputs.push((
        sibling(&stem, &format!(".report.regimes.{ext}")),
        encode(&regimes, &["region", "band", "contribution", "archetype", "count"], format)?,
    ));

    if sweep {
        let step = (SWEEP_SIZE - 1) as f64;
        let grid = region_sweep(SWEEP_SIZE, &RegionThresholds::default());
        let rows: Vec<SweepRow> = grid
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().enumerate().map(move |(j, region)| SweepRow {
                    p_orig: i as f64 / step,
                    p_joint: j as f64 / step,
                    region: *region,
                })
            })
            .collect();
        outputs.push((
            sibling(&stem, &format!(".report.figure3.{ext}")),
            encode(&rows, &["p_orig", "p_joint", "region"], format)?,
        ));
    }

    if !force {
        if let Some((path, _)) = outputs.iter().find(|(p, _)| p.exists()) {
            return Err(CliError::Runtime(format!(
                "{} exists; pass --force to overwrite",
                path.display()
            )));
        }
    }
    for (path, bytes) in &outputs {
        fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(())
}
