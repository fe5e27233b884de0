//! The `regen-lab` command line: configured runs, built-in presets and
//! one-line model subcommands that build a configuration from flags.
//!
//! Exit codes: 0 on success, 1 when an acceptance criterion fails, 2 on a
//! configuration error and 3 on any other runtime error.

pub mod config;
pub mod presets;
pub mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::core::{parse_rational, LawSpec, WeightSpec};
use crate::walk::FutureVariant;
use config::{
    BinsBasicSection, BinsPrimeSection, ConfigError, Contact2Section, Contact3Section, ExperimentConfig, HarrisChain,
    HarrisSection, HarrisTv, IncrementSpec, LinksSection, ProcessSection, ScannerSection, SeedRange, Seeds, WalkSection,
    SCHEMA_VERSION,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "REGENLAB_THREADS";

/// Top-level command line.
#[derive(Debug, Parser)]
#[command(name = "regen-lab", version, about = "Break times, regeneration cycles and their verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configuration file or a built-in preset.
    Run {
        /// Path to a TOML configuration, or the name of a built-in preset.
        config: String,
        /// Output directory, overriding the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it.
    Validate {
        /// Path to a TOML configuration, or the name of a built-in preset.
        config: String,
    },
    /// Run only the exact oracle section of a configuration or preset.
    Oracle {
        /// Path to a TOML configuration, or the name of a built-in preset.
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets.
    ListPresets {
        /// Print the TOML of one preset.
        #[arg(long)]
        show: Option<String>,
    },
    /// Random walk with the future-minimum event on `{-1, 0, +1}` steps.
    Walk {
        /// `P(ξ = +1)`, as a decimal or `num/den`.
        #[arg(long)]
        p: String,
        /// `P(ξ = -1)`, as a decimal or `num/den`.
        #[arg(long)]
        q: String,
        #[arg(long, value_enum, default_value_t = VariantArg::Weak)]
        variant: VariantArg,
        /// Require a strict past record at each break time.
        #[arg(long)]
        records: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Two-state contact process with nearest-neighbour descendants.
    Contact2 {
        /// Probability of each of the two descendants.
        #[arg(long)]
        b: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Three-state immunisation process.
    Contact3 {
        #[arg(long)]
        b: f64,
        /// Reinfection probability of previously infected sites.
        #[arg(long)]
        q: f64,
        /// Initial window of the process started from the left half line.
        #[arg(long, default_value_t = crate::contact::three::DEFAULT_BAR_WINDOW)]
        window: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Infinite-bin models.
    Bins {
        #[command(subcommand)]
        model: BinsCommand,
    },
    /// Harris chain with the coin-flip split.
    Harris {
        #[arg(long, value_enum, default_value_t = ChainArg::Split)]
        chain: ChainArg,
        /// Initial state of the scanned chain.
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        /// Time at which the laws from different starts are compared.
        #[arg(long)]
        n: Option<u64>,
        /// Replicas per initial state in the comparison.
        #[arg(long, default_value_t = 100_000)]
        replicas: usize,
        /// Comma-separated initial states of the comparison.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        inits: Vec<f64>,
        /// Chain length; same as `--max-time`.
        #[arg(long)]
        steps: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

/// Infinite-bin subcommands.
#[derive(Debug, Subcommand)]
pub enum BinsCommand {
    /// The basic model.
    Basic {
        /// `geometric:R`, `finite:v=w,v=w,...`, `uniform` or `exponential:RATE`.
        #[arg(long = "xi-law")]
        xi_law: String,
        /// Display depth of the trace `X_n(-k)`.
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// The mutually-prime extension.
    Prime {
        #[arg(long)]
        i1: u64,
        #[arg(long)]
        i2: u64,
        #[arg(long = "xi-law")]
        xi_law: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// The random-links model.
    Links {
        /// Activity probability of each rank.
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        /// Number of backward blocks in the past event.
        #[arg(long = "K", default_value_t = 64)]
        blocks: usize,
        #[command(flatten)]
        common: Common,
    },
}

/// Flags shared by the model subcommands.
#[derive(Debug, Args)]
pub struct Common {
    /// Seeds as `1,2,5` or an inclusive range `1..10`.
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// Probe horizon.
    #[arg(long, default_value_t = 1_000)]
    pub horizon: u64,
    /// Last candidate time.
    #[arg(long = "max-time", default_value_t = 10_000)]
    pub max_time: u64,
    /// Output directory; defaults to `out/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run name.
    #[arg(long)]
    pub name: Option<String>,
    /// Print the generated configuration instead of running it.
    #[arg(long)]
    pub print_config: bool,
}

/// Future-minimum inequality.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    Weak,
    Strict,
}

/// Harris chain choice.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ChainArg {
    Split,
    Lindley,
}

/// Parse `1,2,5` or `1..10`.
pub fn parse_seeds(text: &str) -> Result<Seeds> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let start = a.trim().parse().with_context(|| format!("bad seed range start {a:?}"))?;
        let end = b.trim_start_matches('=').trim().parse().with_context(|| format!("bad seed range end {b:?}"))?;
        return Ok(Seeds::Range(SeedRange { start, end }));
    }
    let list = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Seeds::List(list))
}

fn weight(text: &str) -> Result<WeightSpec> {
    let text = text.trim();
    if text.contains('/') {
        parse_rational(text).ok_or_else(|| anyhow!("cannot parse {text:?} as a rational"))?;
        Ok(WeightSpec::Exact(text.to_string()))
    } else {
        Ok(WeightSpec::Float(text.parse().with_context(|| format!("cannot parse {text:?} as a probability"))?))
    }
}

/// Parse `geometric:R`, `finite:v=w,...`, `uniform` or `exponential:RATE`.
pub fn parse_law(text: &str) -> Result<LawSpec> {
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    match kind.trim() {
        "geometric" => Ok(LawSpec::Geometric { r: rest.trim().parse().with_context(|| format!("bad ratio {rest:?}"))? }),
        "exponential" => Ok(LawSpec::Exponential { rate: rest.trim().parse().with_context(|| format!("bad rate {rest:?}"))? }),
        "uniform" => Ok(LawSpec::Uniform),
        "finite" => {
            let mut symbols = Vec::new();
            let mut weights = Vec::new();
            for part in rest.split(',').filter(|s| !s.trim().is_empty()) {
                let (v, w) = part.split_once('=').ok_or_else(|| anyhow!("expected value=weight, got {part:?}"))?;
                symbols.push(v.trim().parse::<i64>().with_context(|| format!("bad value {v:?}"))?);
                weights.push(weight(w)?);
            }
            if symbols.is_empty() {
                bail!("finite law needs at least one value=weight pair");
            }
            Ok(LawSpec::Finite { symbols, weights })
        }
        other => bail!("unknown law {other:?}; expected geometric, finite, uniform or exponential"),
    }
}

fn walk_increments(p: &str, q: &str) -> Result<IncrementSpec> {
    let (wp, wq) = (weight(p)?, weight(q)?);
    let zero = match (&wp, &wq) {
        (WeightSpec::Exact(a), WeightSpec::Exact(b)) => {
            let one = num::BigRational::from_integer(1.into());
            let r = one - parse_rational(a).expect("checked") - parse_rational(b).expect("checked");
            WeightSpec::Exact(format!("{}/{}", r.numer(), r.denom()))
        }
        _ => {
            let f = |w: &WeightSpec| match w {
                WeightSpec::Float(x) => *x,
                WeightSpec::Exact(s) => crate::core::rational_to_f64(&parse_rational(s).expect("checked")),
            };
            WeightSpec::Float(1.0 - f(&wp) - f(&wq))
        }
    };
    Ok(IncrementSpec::Finite { symbols: vec![-1, 0, 1], weights: vec![wq, zero, wp] })
}

fn model_config(name: &str, process: ProcessSection, common: &Common) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: common.name.clone().unwrap_or_else(|| name.to_string()),
        description: String::new(),
        seeds: parse_seeds(&common.seeds)?,
        process: Some(process),
        scanner: ScannerSection { horizon: common.horizon, max_time: common.max_time, ..ScannerSection::default() },
        verification: Default::default(),
        oracle: None,
        acceptance: None,
        output: config::OutputSection { dir: common.out.clone() },
    })
}

/// Load a configuration from a file path or a built-in preset name.
pub fn load(source: &str) -> Result<(ExperimentConfig, String)> {
    let path = Path::new(source);
    let raw = if path.exists() {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else if let Some(text) = presets::get(source) {
        text.to_string()
    } else {
        return Err(ConfigError::Parse(format!("{source:?} is neither a file nor a built-in preset")).into());
    };
    let cfg = ExperimentConfig::from_toml_str(&raw)?;
    Ok((cfg, raw))
}

fn execute(cfg: &ExperimentConfig, raw: &str, out: Option<PathBuf>) -> Result<bool> {
    let dir = out.unwrap_or_else(|| cfg.output_dir());
    let outcome = runner::run(cfg, raw, &dir)?;
    if let Some(per_seed) = outcome.summary.get("per_seed").and_then(|v| v.as_array()) {
        for s in per_seed {
            println!(
                "seed {}: {} break times, {} cycles, mean gap {}",
                s["seed"],
                s["break_times"],
                s["cycles"],
                s["mean_gap"].as_f64().map_or("n/a".to_string(), |g| format!("{g:.4}")),
            );
        }
    }
    if let Some(o) = outcome.summary.get("oracle") {
        println!("oracle: {o}");
    }
    if let Some(list) = outcome.summary.get("acceptance").and_then(|v| v.as_array()) {
        for c in list {
            let c: crate::acceptance::CriterionOutcome = serde_json::from_value(c.clone())?;
            println!("{}", c.line());
        }
    }
    println!("wrote {} files to {}", outcome.files.len(), outcome.dir.display());
    Ok(outcome.pass)
}

fn run_model(name: &str, process: ProcessSection, common: &Common) -> Result<bool> {
    let cfg = model_config(name, process, common)?;
    cfg.validate()?;
    let raw = cfg.to_toml_string();
    if common.print_config {
        print!("{raw}");
        return Ok(true);
    }
    execute(&cfg, &raw, common.out.clone())
}

/// Configure the global thread pool from [`THREADS_ENV`].
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
        if n == 0 {
            bail!("{THREADS_ENV} must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// Dispatch a parsed command line; `Ok(false)` means an acceptance failure.
pub fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let (cfg, raw) = load(&config)?;
            execute(&cfg, &raw, out)
        }
        Command::Validate { config } => {
            let (cfg, _) = load(&config)?;
            println!("{config}: valid ({})", cfg.process.as_ref().map_or("no process", |p| p.kind()));
            Ok(true)
        }
        Command::Oracle { config, out } => {
            let (mut cfg, _) = load(&config)?;
            if cfg.oracle.is_none() {
                return Err(ConfigError::Invalid(vec![format!("{config}: no [oracle] section")]).into());
            }
            cfg.process = None;
            cfg.acceptance = None;
            let raw = cfg.to_toml_string();
            execute(&cfg, &raw, out)
        }
        Command::ListPresets { show: Some(name) } => {
            let text = presets::get(&name).ok_or_else(|| ConfigError::Parse(format!("no preset named {name:?}")))?;
            print!("{text}");
            Ok(true)
        }
        Command::ListPresets { show: None } => {
            for (name, text) in presets::PRESETS {
                let description = ExperimentConfig::from_toml_str(text).map(|c| c.description).unwrap_or_default();
                println!("{name:<18} {description}");
            }
            Ok(true)
        }
        Command::Walk { p, q, variant, records, common } => {
            let variant = match variant {
                VariantArg::Weak => FutureVariant::Weak,
                VariantArg::Strict => FutureVariant::Strict,
            };
            let section = WalkSection { increments: walk_increments(&p, &q)?, variant, records };
            run_model("walk", ProcessSection::Walk(section), &common)
        }
        Command::Contact2 { b, common } => {
            run_model("contact2", ProcessSection::Contact2(Contact2Section { b: Some(b), law: None }), &common)
        }
        Command::Contact3 { b, q, window, common } => {
            let section = Contact3Section { b: Some(b), law: None, q, window };
            run_model("contact3", ProcessSection::Contact3(section), &common)
        }
        Command::Bins { model: BinsCommand::Basic { xi_law, k, common } } => {
            let section = BinsBasicSection { law: parse_law(&xi_law)?, k, initial: vec![1], first_of_run: true };
            run_model("bins-basic", ProcessSection::BinsBasic(section), &common)
        }
        Command::Bins { model: BinsCommand::Prime { i1, i2, xi_law, k, common } } => {
            let section = BinsPrimeSection {
                law: parse_law(&xi_law)?,
                i1,
                i2,
                k,
                initial: vec![1],
                word_bound: crate::bins::prime::DEFAULT_WORD_BOUND,
            };
            run_model("bins-prime", ProcessSection::BinsPrime(section), &common)
        }
        Command::Bins { model: BinsCommand::Links { p, eps, blocks, common } } => {
            let section = LinksSection { p, mean: 1.0, eps, blocks, calibration_steps: 200_000 };
            run_model("links", ProcessSection::Links(section), &common)
        }
        Command::Harris { chain, x0, n, replicas, inits, steps, mut common } => {
            if let Some(steps) = steps {
                common.max_time = steps;
            }
            let chain = match chain {
                ChainArg::Split => HarrisChain::Split,
                ChainArg::Lindley => HarrisChain::Lindley,
            };
            let tv = n.map(|n| HarrisTv { inits, n, replicas });
            run_model("harris", ProcessSection::Harris(HarrisSection { chain, x0, tv }), &common)
        }
    }
}

/// Exit code for an error: 2 for configuration errors, 3 otherwise.
pub fn error_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        2
    } else {
        3
    }
}

/// Entry point of the `regen-lab` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| dispatch(cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}
