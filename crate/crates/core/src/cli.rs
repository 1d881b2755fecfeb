//! Command-line driver: `fit`, `recommend`, `compare` and `simulate`.
//!
//! Campaigns are processed independently (in parallel) and merged in
//! campaign-id order, so every command's output is a pure function of its
//! input file, config and seed. A campaign that fails is reported and the
//! rest are still written.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::compare::{
    compare_campaign, current_point_index, mean_diff_r, summarize_models, summarize_strategies, CampaignComparison,
    StrategySummary,
};
use crate::config::{ConfigError, Settings};
use crate::curvefit::{fit, FitResult, ModelKind};
use crate::landscape::{
    build_landscape, click_cost_pairs, group_by_campaign, read_observations, write_observations, AuctionObservation,
    BidLandscape, ClickCostCurve, LandscapeError,
};
use crate::metrics::EvalReport;
use crate::recommend::{recommend, BudgetConstraint, Recommendation, Strategy};
use crate::simgen::{generate_market, SimError};

#[derive(Debug, Parser)]
#[command(name = "bidcurve", version, about = "Fit click-vs-cost curves and recommend bids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit response models per campaign and write FitResult JSON.
    Fit(RunArgs),
    /// Recommend a bid per campaign under a budget.
    Recommend(RunArgs),
    /// Compare models (leave-one-out) and strategies across campaigns.
    Compare(RunArgs),
    /// Generate a synthetic auction log.
    Simulate(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Observation CSV; `-` or absent reads stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory; absent writes to stdout where supported.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// TOML config; falls back to $BIDCURVE_CONFIG.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub strategy: Option<String>,
    /// Comma-separated models: sigmoid,power,mm,negexp,nns,li.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid arguments: {0}")]
    Validation(String),
    #[error("no campaigns in input")]
    NoCampaigns,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Input(#[from] LandscapeError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Fit,
    Recommend,
    Compare,
    Simulate,
}

/// Validated arguments for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: CommandKind,
    pub input_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub config_path: Option<PathBuf>,
    pub budget: Option<f64>,
    pub strategy: Strategy,
    pub models: Vec<ModelKind>,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn from_args(command: CommandKind, args: &RunArgs) -> Result<Self, CliError> {
        let invalid = |m: String| Err(CliError::Validation(m));
        let non_empty = |p: &Option<PathBuf>| p.as_ref().is_none_or(|p| !p.as_os_str().is_empty());
        if !non_empty(&args.input) || !non_empty(&args.output) || !non_empty(&args.config) {
            return invalid("paths must be non-empty".into());
        }
        match (command, args.budget) {
            (CommandKind::Recommend, None) => return invalid("--budget is required for recommend".into()),
            (CommandKind::Recommend, Some(b)) if !(b > 0.0 && b.is_finite()) => {
                return invalid(format!("--budget must be positive, got {b}"))
            }
            (CommandKind::Recommend, Some(_)) => {}
            (_, Some(_)) => return invalid("--budget is only valid for recommend".into()),
            (_, None) => {}
        }
        if matches!(command, CommandKind::Recommend | CommandKind::Compare) && args.output.is_none() {
            return invalid("--output DIR is required".into());
        }
        let strategy = match &args.strategy {
            Some(s) => s.parse().map_err(CliError::Validation)?,
            None => Strategy::Inflection,
        };
        let models = match &args.models {
            Some(list) => list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<ModelKind>, _>>()
                .map_err(CliError::Validation)?,
            None if command == CommandKind::Compare => ModelKind::ALL.to_vec(),
            None => vec![ModelKind::Sigmoid],
        };
        if models.is_empty() {
            return invalid("--models is empty".into());
        }
        Ok(Self {
            command,
            input_path: args.input.clone(),
            output_path: args.output.clone(),
            config_path: args.config.clone(),
            budget: args.budget,
            strategy,
            models,
            seed: args.seed,
        })
    }
}

/// Outcome of a run that produced output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunStatus {
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignError {
    pub campaign_id: String,
    pub message: String,
}

pub fn run(cli: &Cli) -> Result<RunStatus, CliError> {
    let (kind, args) = match &cli.command {
        Command::Fit(a) => (CommandKind::Fit, a),
        Command::Recommend(a) => (CommandKind::Recommend, a),
        Command::Compare(a) => (CommandKind::Compare, a),
        Command::Simulate(a) => (CommandKind::Simulate, a),
    };
    let manifest = RunManifest::from_args(kind, args)?;
    let settings = Settings::resolve(manifest.config_path.as_deref())?;
    match kind {
        CommandKind::Fit => cmd_fit(&manifest, &settings),
        CommandKind::Recommend => cmd_recommend(&manifest, &settings),
        CommandKind::Compare => cmd_compare(&manifest, &settings),
        CommandKind::Simulate => cmd_simulate(&manifest, &settings),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_input(manifest: &RunManifest) -> Result<Vec<AuctionObservation>, CliError> {
    let mut text = String::new();
    match manifest.input_path.as_deref() {
        Some(p) if p != Path::new("-") => {
            fs::File::open(p)
                .and_then(|mut f| f.read_to_string(&mut text))
                .map_err(io_err(p))?;
        }
        _ => {
            io::stdin()
                .read_to_string(&mut text)
                .map_err(io_err(Path::new("<stdin>")))?;
        }
    }
    Ok(read_observations(text.as_bytes())?)
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let target = dir.join(name);
    if let Some(parent) = target.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = target.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, &target).map_err(io_err(&target))
}

fn emit(manifest: &RunManifest, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    match &manifest.output_path {
        Some(dir) => write_atomic(dir, name, bytes),
        None => io::stdout().write_all(bytes).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("output serializes");
    out.push(b'\n');
    out
}

struct Prepared {
    landscape: BidLandscape,
    curve: ClickCostCurve,
}

fn prepare(observations: &[AuctionObservation]) -> Result<Prepared, String> {
    let landscape = build_landscape(observations).map_err(|e| e.to_string())?;
    let curve = click_cost_pairs(&landscape).map_err(|e| e.to_string())?;
    Ok(Prepared { landscape, curve })
}

/// Successful `(campaign_id, output)` pairs and per-campaign failures.
type Outcomes<T> = (Vec<(String, T)>, Vec<CampaignError>);

/// Runs `work` on every campaign in parallel, returning results in
/// campaign-id order.
fn per_campaign<T: Send>(
    observations: Vec<AuctionObservation>,
    work: impl Fn(&str, &[AuctionObservation]) -> Result<T, String> + Sync,
) -> Result<Outcomes<T>, CliError> {
    let groups: Vec<(String, Vec<AuctionObservation>)> = group_by_campaign(observations).into_iter().collect();
    if groups.is_empty() {
        return Err(CliError::NoCampaigns);
    }
    let results: Vec<(String, Result<T, String>)> =
        groups.par_iter().map(|(id, obs)| (id.clone(), work(id, obs))).collect();
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for (campaign_id, r) in results {
        match r {
            Ok(v) => ok.push((campaign_id, v)),
            Err(message) => errors.push(CampaignError { campaign_id, message }),
        }
    }
    Ok((ok, errors))
}

#[derive(Serialize)]
struct CampaignFits {
    campaign_id: String,
    fits: Vec<FitResult>,
}

#[derive(Serialize)]
struct FitOutput {
    results: Vec<CampaignFits>,
    errors: Vec<CampaignError>,
}

pub fn cmd_fit(manifest: &RunManifest, settings: &Settings) -> Result<RunStatus, CliError> {
    let observations = read_input(manifest)?;
    let (ok, errors) = per_campaign(observations, |_, obs| {
        let prepared = prepare(obs)?;
        manifest
            .models
            .iter()
            .map(|&kind| fit(kind, &prepared.curve, &settings.fit).map_err(|e| format!("{kind}: {e}")))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let status = RunStatus {
        succeeded: ok.len(),
        failed: errors.len(),
    };
    let output = FitOutput {
        results: ok
            .into_iter()
            .map(|(campaign_id, fits)| CampaignFits { campaign_id, fits })
            .collect(),
        errors,
    };
    emit(manifest, "fits.json", &to_json(&output))?;
    Ok(status)
}

fn curve_tsv(curve: &ClickCostCurve, fit: &FitResult) -> String {
    let params = fit.model.as_sigmoid().expect("sigmoid fit");
    let mut out = String::from("cost\tobserved_clicks\tfitted_clicks\tfitted_derivative\n");
    for &(cost, clicks) in &curve.pairs {
        out.push_str(&format!(
            "{:.3}\t{:.6}\t{:.6}\t{:.6}\n",
            cost,
            clicks,
            params.value(cost),
            params.derivative(cost)
        ));
    }
    out
}

fn file_stem(campaign_id: &str) -> String {
    campaign_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_recommend(manifest: &RunManifest, settings: &Settings) -> Result<RunStatus, CliError> {
    let budget = manifest
        .budget
        .ok_or_else(|| CliError::Validation("--budget is required".into()))
        .and_then(|b| BudgetConstraint::new(b).map_err(|e| CliError::Validation(e.to_string())))?;
    let observations = read_input(manifest)?;
    let out_dir = manifest.output_path.clone().expect("validated");
    let (ok, errors) = per_campaign(observations, |_, obs| {
        let prepared = prepare(obs)?;
        let fitted = fit(ModelKind::Sigmoid, &prepared.curve, &settings.fit).map_err(|e| e.to_string())?;
        let rec = recommend(&fitted, &prepared.landscape, &budget, manifest.strategy).map_err(|e| e.to_string())?;
        Ok((rec, curve_tsv(&prepared.curve, &fitted)))
    })?;
    for (campaign_id, (_, tsv)) in &ok {
        write_atomic(
            &out_dir,
            &format!("curves/{}.tsv", file_stem(campaign_id)),
            tsv.as_bytes(),
        )?;
    }
    let status = RunStatus {
        succeeded: ok.len(),
        failed: errors.len(),
    };
    let recs: Vec<Recommendation> = ok.into_iter().map(|(_, (rec, _))| rec).collect();
    write_atomic(&out_dir, "recommendations.json", &to_json(&recs))?;
    write_atomic(&out_dir, "errors.json", &to_json(&errors))?;
    Ok(status)
}

#[derive(Serialize)]
struct CompareSummary {
    campaigns: usize,
    skipped: usize,
    mean_diff_r: Option<f64>,
    errors: Vec<CampaignError>,
}

pub fn cmd_compare(manifest: &RunManifest, settings: &Settings) -> Result<RunStatus, CliError> {
    let observations = read_input(manifest)?;
    let out_dir = manifest.output_path.clone().expect("validated");
    let (ok, errors) = per_campaign(observations, |id, obs| {
        let prepared = prepare(obs)?;
        let held_out = current_point_index(&prepared.landscape, &prepared.curve).map_err(|e| e.to_string())?;
        compare_campaign(
            id,
            &prepared.curve,
            &prepared.landscape,
            held_out,
            &manifest.models,
            &settings.fit,
        )
        .map_err(|e| e.to_string())
    })?;
    let comparisons: Vec<CampaignComparison> = ok.into_iter().map(|(_, c)| c).collect();

    let mut eval = format!("{}\n", EvalReport::CSV_HEADER);
    for r in comparisons
        .iter()
        .flat_map(|c| &c.reports)
        .chain(&summarize_models(&comparisons))
    {
        eval.push_str(&r.csv_row());
        eval.push('\n');
    }
    let mut strategies = format!("{}\n", StrategySummary::CSV_HEADER);
    for s in summarize_strategies(&comparisons) {
        strategies.push_str(&s.csv_row());
        strategies.push('\n');
    }
    let summary = CompareSummary {
        campaigns: comparisons.len(),
        skipped: errors.len(),
        mean_diff_r: mean_diff_r(&comparisons),
        errors,
    };
    write_atomic(&out_dir, "eval.csv", eval.as_bytes())?;
    write_atomic(&out_dir, "strategies.csv", strategies.as_bytes())?;
    write_atomic(&out_dir, "summary.json", &to_json(&summary))?;
    Ok(RunStatus {
        succeeded: summary.campaigns,
        failed: summary.skipped,
    })
}

pub fn cmd_simulate(manifest: &RunManifest, settings: &Settings) -> Result<RunStatus, CliError> {
    let mut market = settings.simgen.clone();
    if let Some(seed) = manifest.seed {
        market.seed = seed;
    }
    let observations = generate_market(&market)?;
    let mut buf = Vec::new();
    write_observations(&mut buf, &observations)?;
    emit(manifest, "observations.csv", &buf)?;
    Ok(RunStatus {
        succeeded: market.n_campaigns,
        failed: 0,
    })
}
