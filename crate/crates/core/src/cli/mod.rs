//! Command-line front end.
//!
//! Every failure prints `error_code=<Code>` on its own line before the
//! human-readable message. Exit codes: 1 usage or configuration, 2 data
//! validation, 3 numerical failure.

mod commands;
mod report;
mod rows;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::cascade::CascadeError;
use crate::causal::{CausalError, ModelSpec, OutcomeMode, Strategy};
use crate::datastore::DatastoreError;
use crate::exposure::ExposureError;
use crate::simgen::{SimConfig, SimError};
use crate::tpr::{TprConfig, TprError};

pub const JOBS_ENV: &str = "TRENDFORGE_JOBS";

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "trendforge", version, about = "Efficacy analytics for astroturfed trending campaigns")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads (falls back to TRENDFORGE_JOBS, then the config).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate an input directory, printing a JSON summary.
    Validate(IoArgs),
    /// Cascade sizes and implied retweets.
    Cascade(IoArgs),
    /// Exposure records, ECDFs and exposure effectiveness.
    Exposure(ExposureArgs),
    /// Template penetration rate over embedding neighborhoods.
    Tpr(TprArgs),
    /// Fit the trending-effect panel model.
    Fit(FitArgs),
    /// Generate a synthetic corpus with ground truth.
    Simulate(SimulateArgs),
    /// Collate prior outputs into report.json and SVG figures.
    Report(IoArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct IoArgs {
    /// Input directory.
    #[arg(long = "in", value_name = "DIR")]
    pub input: Option<PathBuf>,
    /// Output directory (defaults to the input directory).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Restrict to these hashtags (repeatable).
    #[arg(long = "hashtag", value_name = "TAG")]
    pub hashtags: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ExposureArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Label permutations for the effectiveness test.
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Seed of the permutation test.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Friend-count threshold of the low-exposure share.
    #[arg(long)]
    pub max_friends: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    /// Read embeddings.bin from the input directory.
    File,
    /// Hashed character-trigram vectors of the cleaned text.
    Trigram,
}

#[derive(Debug, Clone, Args)]
pub struct TprArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Minimum unique tweets per hashtag.
    #[arg(long)]
    pub min_unique: Option<usize>,
    /// Neighborhood size as a fraction of unique tweets.
    #[arg(long)]
    pub neighborhood_fraction: Option<f64>,
    /// Lowest-TPR templates listed per hashtag.
    #[arg(long)]
    pub exemplars: Option<usize>,
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    /// Seed of the trigram embedder.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Earliest,
    DonutHole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeArg {
    TrendingExposedOnly,
    AllNonAstroturfed,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Treatment-onset strategy.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Which adoptions count toward the outcome.
    #[arg(long, value_enum)]
    pub outcome: Option<OutcomeArg>,
    /// Add the top-10 indicator.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub top10: Option<bool>,
    /// First bin offset relative to onset.
    #[arg(long, allow_hyphen_values = true)]
    pub window_min: Option<i64>,
    /// Last bin offset relative to onset.
    #[arg(long, allow_hyphen_values = true)]
    pub window_max: Option<i64>,
    /// Bin width in seconds.
    #[arg(long)]
    pub bin_seconds: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Simulator defaults.
    Default,
    /// 20 campaigns on 5,000 users, no embeddings.
    Recovery,
    /// Network-dominated campaigns for exposure curves.
    ExposureCurve,
    /// One large topic-separated campaign for TPR.
    Persistence,
}

impl Preset {
    pub fn config(self, seed: u64) -> SimConfig {
        match self {
            Preset::Default => SimConfig {
                seed,
                ..Default::default()
            },
            Preset::Recovery => SimConfig::recovery(seed, std::f64::consts::LN_2),
            Preset::ExposureCurve => SimConfig::exposure_curve(seed),
            Preset::Persistence => SimConfig::persistence(seed),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Simulation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// True top-50 trending effect on the log scale.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_true: Option<f64>,
    /// True top-10 effect; enables a top-10 interval.
    #[arg(long, allow_hyphen_values = true)]
    pub rho_true: Option<f64>,
    /// Number of users in the follower graph.
    #[arg(long)]
    pub n_users: Option<usize>,
    /// Number of campaign hashtags.
    #[arg(long)]
    pub n_hashtags: Option<usize>,
    /// Reporting granularity of the recorded trending times, in seconds.
    #[arg(long)]
    pub uncertainty: Option<i64>,
    /// Participants are accounts nobody follows.
    #[arg(long)]
    pub turkey: bool,
    /// Skip embeddings.bin.
    #[arg(long)]
    pub no_embeddings: bool,
}

/// JSON configuration file. Fields mirror the flags; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Accepted for symmetry with the command line; the subcommand on the
    /// command line is authoritative.
    pub subcommand: Option<String>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub hashtags: Vec<String>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub model: ModelSpec,
    pub tpr: TprConfig,
    pub exemplars: Option<usize>,
    pub embedder: Option<EmbedderKind>,
    pub permutations: Option<usize>,
    pub max_friends: Option<u64>,
    pub preset: Option<Preset>,
    pub simulation: Option<SimConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage("InvalidConfig", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage("InvalidConfig", format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub exit: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: impl Into<String>, exit: i32, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            exit,
            message: message.into(),
        }
    }

    pub fn usage(code: &str, message: impl Into<String>) -> Self {
        Self::new(code, EXIT_USAGE, message)
    }

    pub fn data(code: &str, message: impl Into<String>) -> Self {
        Self::new(code, EXIT_DATA, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error_code={}\nerror: {}", self.code, self.message)
    }
}

/// Variant name from a derived `Debug` rendering.
fn variant<E: fmt::Debug>(e: &E) -> String {
    format!("{e:?}")
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect()
}

impl From<DatastoreError> for CliError {
    fn from(e: DatastoreError) -> Self {
        CliError::new(variant(&e), EXIT_DATA, e.to_string())
    }
}

impl From<CascadeError> for CliError {
    fn from(e: CascadeError) -> Self {
        CliError::new(variant(&e), EXIT_DATA, e.to_string())
    }
}

impl From<ExposureError> for CliError {
    fn from(e: ExposureError) -> Self {
        CliError::new(variant(&e), EXIT_DATA, e.to_string())
    }
}

impl From<TprError> for CliError {
    fn from(e: TprError) -> Self {
        let exit = match e {
            TprError::IdentityViolated { .. } => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        };
        CliError::new(variant(&e), exit, e.to_string())
    }
}

impl From<CausalError> for CliError {
    fn from(e: CausalError) -> Self {
        let exit = match e {
            CausalError::NotConverged { .. }
            | CausalError::SeparationSuspected { .. }
            | CausalError::RankDeficient(_)
            | CausalError::ZeroVariance => EXIT_NUMERICAL,
            CausalError::InvalidSpec(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError::new(variant(&e), exit, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ConfigInvalid(_) => CliError::new("ConfigInvalid", EXIT_USAGE, e.to_string()),
            SimError::Datastore(d) => d.into(),
            SimError::Causal(c) => c.into(),
            SimError::Io(io) => CliError::data("WriteFailure", io.to_string()),
            SimError::Json(j) => CliError::data("WriteFailure", j.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data("WriteFailure", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data("WriteFailure", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data("WriteFailure", e.to_string())
    }
}

/// Thread count: flag, then environment, then config file.
fn resolve_jobs(flag: Option<usize>, config: &RunConfig) -> Result<Option<usize>, CliError> {
    let jobs = match (flag, std::env::var(JOBS_ENV)) {
        (Some(n), _) => Some(n),
        (None, Ok(v)) if !v.trim().is_empty() => Some(
            v.trim()
                .parse()
                .map_err(|_| CliError::usage("InvalidJobs", format!("{JOBS_ENV}={v} is not a count")))?,
        ),
        _ => config.jobs,
    };
    if jobs == Some(0) {
        return Err(CliError::usage("InvalidJobs", "--jobs must be positive"));
    }
    Ok(jobs)
}

fn model_spec(args: &FitArgs, config: &RunConfig) -> ModelSpec {
    let mut spec = config.model;
    if let Some(s) = args.strategy {
        spec.strategy = match s {
            StrategyArg::Earliest => Strategy::Earliest,
            StrategyArg::DonutHole => Strategy::DonutHole,
        };
    }
    if let Some(o) = args.outcome {
        spec.outcome_mode = match o {
            OutcomeArg::TrendingExposedOnly => OutcomeMode::TrendingExposedOnly,
            OutcomeArg::AllNonAstroturfed => OutcomeMode::AllNonAstroturfed,
        };
    }
    if let Some(t) = args.top10 {
        spec.include_top10 = t;
    }
    if let Some(v) = args.window_min {
        spec.window.0 = v;
    }
    if let Some(v) = args.window_max {
        spec.window.1 = v;
    }
    if let Some(v) = args.bin_seconds {
        spec.bin_seconds = v;
    }
    spec
}

fn sim_config(args: &SimulateArgs, config: &RunConfig) -> SimConfig {
    let seed = args.seed.or(config.seed);
    let mut cfg = match (args.preset, &config.simulation, config.preset) {
        (Some(p), _, _) => p.config(seed.unwrap_or(Preset::Default.config(0).seed)),
        (None, Some(sim), _) => sim.clone(),
        (None, None, Some(p)) => p.config(seed.unwrap_or(Preset::Default.config(0).seed)),
        (None, None, None) => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = args.lambda_true {
        cfg.lambda_true = v;
    }
    if let Some(v) = args.rho_true {
        let mut top10 = cfg.top10.take().unwrap_or_default();
        top10.rho_true = v;
        cfg.top10 = Some(top10);
    }
    if let Some(v) = args.n_users {
        cfg.n_users = v;
    }
    if let Some(v) = args.n_hashtags {
        cfg.n_hashtags = v;
    }
    if let Some(v) = args.uncertainty {
        cfg.uncertainty_s = v;
    }
    if args.turkey {
        cfg.turkey_mode = true;
    }
    if args.no_embeddings {
        cfg.embeddings = None;
    }
    cfg
}

/// Input and output directories after merging flags and config.
#[derive(Debug, Clone)]
pub(crate) struct Paths {
    pub input: PathBuf,
    pub out: PathBuf,
    pub hashtags: Vec<String>,
}

fn paths(io: &IoArgs, config: &RunConfig) -> Result<Paths, CliError> {
    let input = io
        .input
        .clone()
        .or_else(|| config.input.clone())
        .ok_or_else(|| CliError::usage("MissingArgument", "--in is required"))?;
    let out = io
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| input.clone());
    let hashtags = if io.hashtags.is_empty() {
        config.hashtags.clone()
    } else {
        io.hashtags.clone()
    };
    Ok(Paths {
        input,
        out,
        hashtags: hashtags.iter().map(|h| crate::datastore::fold_hashtag(h)).collect(),
    })
}

fn dispatch(cli: &Cli, config: &RunConfig) -> Result<(), CliError> {
    if let Some(s) = &config.subcommand {
        log::debug!("config subcommand {s} ignored in favor of the command line");
    }
    match &cli.command {
        Command::Validate(io) => commands::validate(&paths(io, config)?),
        Command::Cascade(io) => commands::cascade(&paths(io, config)?),
        Command::Exposure(a) => commands::exposure(
            &paths(&a.io, config)?,
            &commands::ExposureOptions {
                permutations: a
                    .permutations
                    .or(config.permutations)
                    .unwrap_or(crate::exposure::PERMUTATIONS),
                seed: a
                    .seed
                    .or(config.seed)
                    .unwrap_or(crate::exposure::PERMUTATION_SEED),
                max_friends: a.max_friends.or(config.max_friends).unwrap_or(1),
            },
        ),
        Command::Tpr(a) => {
            let mut tpr = config.tpr;
            if let Some(v) = a.min_unique {
                tpr.min_unique = v;
            }
            if let Some(v) = a.neighborhood_fraction {
                tpr.neighborhood_fraction = v;
            }
            if !(tpr.neighborhood_fraction > 0.0 && tpr.neighborhood_fraction <= 1.0) {
                return Err(CliError::usage(
                    "InvalidArgument",
                    "--neighborhood-fraction must be in (0, 1]",
                ));
            }
            commands::tpr(
                &paths(&a.io, config)?,
                &commands::TprOptions {
                    config: tpr,
                    exemplars: a.exemplars.or(config.exemplars).unwrap_or(10),
                    embedder: a.embedder.or(config.embedder).unwrap_or(EmbedderKind::File),
                    seed: a.seed.or(config.seed).unwrap_or(0),
                },
            )
        }
        Command::Fit(a) => commands::fit(&paths(&a.io, config)?, &model_spec(a, config)),
        Command::Simulate(a) => {
            let out = a
                .out
                .clone()
                .or_else(|| config.out.clone())
                .ok_or_else(|| CliError::usage("MissingArgument", "--out is required"))?;
            commands::simulate(&out, &sim_config(a, config))
        }
        Command::Report(io) => report::report(&paths(io, config)?),
    }
}

fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
}

/// Parses `argv` (program name first) and runs one subcommand. Returns the
/// process exit code; errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("error_code=Usage");
            eprint!("{e}");
            return EXIT_USAGE;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match resolve_jobs(cli.jobs, &config)? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage("InvalidJobs", e.to_string()))?
            .install(|| dispatch(cli, &config)),
        None => dispatch(cli, &config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("trendforge").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn variant_names_come_from_debug() {
        let e = TprError::HashtagTooSmall { n: 100, min: 3000 };
        assert_eq!(variant(&e), "HashtagTooSmall");
        let c: CliError = CausalError::NotConverged {
            iterations: 50,
            score_max: 1.0,
        }
        .into();
        assert_eq!((c.code.as_str(), c.exit), ("NotConverged", EXIT_NUMERICAL));
        let d: CliError = DatastoreError::DuplicateTweetId(7).into();
        assert_eq!((d.code.as_str(), d.exit), ("DuplicateTweetId", EXIT_DATA));
    }

    #[test]
    fn error_line_precedes_message() {
        let e = CliError::data("HashtagTooSmall", "too small");
        assert_eq!(e.to_string(), "error_code=HashtagTooSmall\nerror: too small");
    }

    #[test]
    fn flags_override_config_model() {
        let cli = parse(&["fit", "--in", "d", "--strategy", "donut-hole", "--window-min", "-12"]);
        let config = RunConfig {
            model: ModelSpec {
                include_top10: true,
                window: (-100, 10),
                ..Default::default()
            },
            ..Default::default()
        };
        let Command::Fit(a) = &cli.command else {
            panic!("fit expected")
        };
        let spec = model_spec(a, &config);
        assert_eq!(spec.strategy, Strategy::DonutHole);
        assert!(spec.include_top10);
        assert_eq!(spec.window, (-12, 10));
    }

    #[test]
    fn top10_flag_takes_optional_value() {
        let Command::Fit(a) = parse(&["fit", "--in", "d", "--top10"]).command else {
            panic!()
        };
        assert_eq!(a.top10, Some(true));
        let Command::Fit(a) = parse(&["fit", "--in", "d", "--top10", "false"]).command else {
            panic!()
        };
        assert_eq!(a.top10, Some(false));
    }

    #[test]
    fn simulate_flags_layer_over_preset() {
        let Command::Simulate(a) = parse(&[
            "simulate",
            "--out",
            "d",
            "--preset",
            "recovery",
            "--seed",
            "3",
            "--lambda-true",
            "-0.5",
            "--rho-true",
            "0.2",
        ])
        .command
        else {
            panic!()
        };
        let cfg = sim_config(&a, &RunConfig::default());
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.lambda_true, -0.5);
        assert_eq!(cfg.top10.unwrap().rho_true, 0.2);
        assert!(cfg.embeddings.is_none());
    }

    #[test]
    fn config_file_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"input": "x", "model": {"strategy": "donut-hole"}}"#).unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.model.strategy, Strategy::DonutHole);
        assert_eq!(c.model.window, ModelSpec::default().window);
        std::fs::write(&p, r#"{"bogus": 1}"#).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap_err().code, "InvalidConfig");
    }

    #[test]
    fn output_defaults_to_input() {
        let cli = parse(&["cascade", "--in", "data", "--hashtag", "#ModiRocks"]);
        let Command::Cascade(io) = &cli.command else {
            panic!()
        };
        let p = paths(io, &RunConfig::default()).unwrap();
        assert_eq!(p.out, PathBuf::from("data"));
        assert_eq!(p.hashtags, vec!["modirocks".to_string()]);
        let missing = paths(&IoArgs::default(), &RunConfig::default()).unwrap_err();
        assert_eq!(missing.exit, EXIT_USAGE);
    }
}
