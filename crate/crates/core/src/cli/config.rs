//! Experiment configuration: a TOML document with an explicit schema
//! version, validated before anything runs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acceptance::{AcceptancePlan, CRITERIA};
use crate::contact::DescendantLaw;
use crate::core::{parse_rational, Alphabet, Law, LawSpec, WeightSpec};
use crate::harris::SplitChainSpec;
use crate::oracle::EventPreset;
use crate::regen::{BreakConfig, UndecidedPolicy};
use crate::walk::{FutureVariant, Increments};

/// The schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Configuration errors, with every diagnostic collected.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// A complete experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub process: Option<ProcessSection>,
    #[serde(default)]
    pub scanner: ScannerSection,
    #[serde(default)]
    pub verification: VerificationSection,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub acceptance: Option<AcceptanceSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Seeds as an explicit list or an inclusive range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range(SeedRange),
}

/// `start..=end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::List(vec![1])
    }
}

impl Seeds {
    /// The seeds in run order.
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range(r) if r.start <= r.end => (r.start..=r.end).collect(),
            Seeds::Range(_) => Vec::new(),
        }
    }
}

/// The process under study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessSection {
    Walk(WalkSection),
    Contact2(Contact2Section),
    Contact3(Contact3Section),
    BinsBasic(BinsBasicSection),
    BinsPrime(BinsPrimeSection),
    Links(LinksSection),
    Harris(HarrisSection),
}

impl ProcessSection {
    /// The section name as written in the file.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Walk(_) => "walk",
            Self::Contact2(_) => "contact2",
            Self::Contact3(_) => "contact3",
            Self::BinsBasic(_) => "bins-basic",
            Self::BinsPrime(_) => "bins-prime",
            Self::Links(_) => "links",
            Self::Harris(_) => "harris",
        }
    }
}

/// Increment law of a walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum IncrementSpec {
    Finite { symbols: Vec<i64>, weights: Vec<WeightSpec> },
    Uniform { lo: f64, hi: f64 },
}

/// A random walk with the future-minimum event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    pub increments: IncrementSpec,
    #[serde(default)]
    pub variant: FutureVariant,
    /// Require a strict past record, `S_n > max_{j<n} S_j`.
    #[serde(default)]
    pub records: bool,
}

impl WalkSection {
    /// The increment law.
    pub fn increments(&self) -> Result<Increments, String> {
        let inc = match &self.increments {
            IncrementSpec::Finite { symbols, weights } => {
                match Law::try_from(&LawSpec::Finite { symbols: symbols.clone(), weights: weights.clone() }) {
                    Ok(Law::Finite(a)) => Increments::Finite(a),
                    Ok(_) => unreachable!("finite spec yields a finite law"),
                    Err(e) => return Err(e.to_string()),
                }
            }
            IncrementSpec::Uniform { lo, hi } if lo < hi => Increments::Uniform { lo: *lo, hi: *hi },
            IncrementSpec::Uniform { lo, hi } => return Err(format!("uniform increments need lo < hi, got [{lo}, {hi})")),
        };
        inc.validate().map_err(|e| e.to_string())?;
        Ok(inc)
    }
}

/// The two-state contact process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contact2Section {
    /// Independent nearest-neighbour descendants with probability `b` each.
    #[serde(default)]
    pub b: Option<f64>,
    /// A general descendant law; exclusive with `b`.
    #[serde(default)]
    pub law: Option<DescendantLaw>,
}

/// The three-state immunisation process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contact3Section {
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub law: Option<DescendantLaw>,
    /// Reinfection probability of previously infected sites.
    pub q: f64,
    /// Initial window of the `Z_-` started process, in site offsets.
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    crate::contact::three::DEFAULT_BAR_WINDOW
}

fn descendant_law(b: Option<f64>, law: Option<DescendantLaw>) -> Result<DescendantLaw, String> {
    let law = match (b, law) {
        (Some(b), None) => DescendantLaw::independent(b),
        (None, Some(l)) => l,
        (Some(_), Some(_)) => return Err("give either `b` or `law`, not both".into()),
        (None, None) => return Err("missing descendant law: give `b` or `law`".into()),
    };
    law.validate().map_err(|e| e.to_string())?;
    Ok(law)
}

impl Contact2Section {
    /// The descendant law.
    pub fn law(&self) -> Result<DescendantLaw, String> {
        descendant_law(self.b, self.law)
    }
}

impl Contact3Section {
    /// The descendant law.
    pub fn law(&self) -> Result<DescendantLaw, String> {
        descendant_law(self.b, self.law)
    }
}

fn default_initial() -> Vec<u64> {
    vec![1]
}

fn default_true() -> bool {
    true
}

/// The basic infinite-bin model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsBasicSection {
    pub law: LawSpec,
    /// Display depth: the trace is `X_n(-k)`.
    #[serde(default)]
    pub k: usize,
    /// Initial bin counts, left to right, top bin last.
    #[serde(default = "default_initial")]
    pub initial: Vec<u64>,
    #[serde(default = "default_true")]
    pub first_of_run: bool,
}

/// The mutually-prime extension of the bin model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsPrimeSection {
    pub law: LawSpec,
    pub i1: u64,
    pub i2: u64,
    #[serde(default = "default_one")]
    pub k: usize,
    #[serde(default = "default_initial")]
    pub initial: Vec<u64>,
    #[serde(default = "default_word_bound")]
    pub word_bound: usize,
}

fn default_one() -> usize {
    1
}

fn default_word_bound() -> usize {
    crate::bins::prime::DEFAULT_WORD_BOUND
}

/// The random-links model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinksSection {
    /// Activity probability of each rank.
    pub p: f64,
    #[serde(default = "default_mean")]
    pub mean: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Number of red blocks `K` in the past event.
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_calibration")]
    pub calibration_steps: u64,
}

fn default_mean() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    0.5
}

fn default_blocks() -> usize {
    64
}

fn default_calibration() -> u64 {
    200_000
}

/// Which Harris chain to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarrisChain {
    #[default]
    Split,
    Lindley,
}

impl HarrisChain {
    /// The chain specification.
    pub fn spec(self) -> SplitChainSpec {
        match self {
            Self::Split => SplitChainSpec::Split,
            Self::Lindley => SplitChainSpec::lindley(),
        }
    }
}

/// A Harris chain with the coin-flip split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarrisSection {
    #[serde(default)]
    pub chain: HarrisChain,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub tv: Option<HarrisTv>,
}

/// Convergence in total variation from several initial states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarrisTv {
    pub inits: Vec<f64>,
    pub n: u64,
    pub replicas: usize,
}

/// Scanner parameters shared by every process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScannerSection {
    pub horizon: u64,
    pub min_separation: u64,
    /// Last candidate time `N`.
    #[serde(alias = "N")]
    pub max_time: u64,
    pub undecided_policy: UndecidedPolicy,
}

impl Default for ScannerSection {
    fn default() -> Self {
        Self { horizon: 1_000, min_separation: 1, max_time: 10_000, undecided_policy: UndecidedPolicy::Truncate }
    }
}

impl ScannerSection {
    /// The scanner configuration.
    pub fn break_config(&self) -> BreakConfig {
        BreakConfig::new(self.horizon, self.max_time)
            .with_min_separation(self.min_separation)
            .with_policy(self.undecided_policy)
    }
}

/// A verification suite run on the cycles of every seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// KS half-vs-half and adjacent permutation tests on cycle features.
    Iid,
    /// Geometric tail fit of the cycle lengths.
    Tail,
    /// Renewal-reward rate of the trace increment per cycle.
    Renewal,
}

/// Which suites run and at what levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationSection {
    pub suites: Vec<Suite>,
    pub alpha: f64,
    pub confidence: f64,
    pub permutations: usize,
    pub max_pairs: usize,
    /// Distance between paired cycles in the permutation test.
    pub lag: usize,
}

impl Default for VerificationSection {
    fn default() -> Self {
        Self {
            suites: vec![Suite::Iid, Suite::Tail, Suite::Renewal],
            alpha: 0.01,
            confidence: 0.95,
            permutations: 199,
            max_pairs: 400,
            lag: 1,
        }
    }
}

/// Exact oracle run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub preset: EventPreset,
    /// `P(ξ = +1)` as `"num/den"`.
    pub p: String,
    /// `P(ξ = -1)` as `"num/den"`.
    pub q: String,
    pub t_max: usize,
    pub lookahead: usize,
    #[serde(default)]
    pub max_m: Option<usize>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub cross_check_replicas: u64,
}

fn default_n_max() -> usize {
    2
}

impl OracleSection {
    /// The exact `{-1, 0, +1}` alphabet.
    pub fn alphabet(&self) -> Result<Alphabet, String> {
        let parse = |s: &str| -> Result<(i64, i64), String> {
            let r = parse_rational(s).ok_or_else(|| format!("cannot parse {s:?} as a rational"))?;
            let (n, d) = (r.numer().clone(), r.denom().clone());
            match (i64::try_from(n), i64::try_from(d)) {
                (Ok(n), Ok(d)) => Ok((n, d)),
                _ => Err(format!("{s:?} does not fit in 64-bit integers")),
            }
        };
        Alphabet::walk_rational(parse(&self.p)?, parse(&self.q)?).map_err(|e| e.to_string())
    }
}

/// Acceptance run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSection {
    #[serde(default = "all_criteria")]
    pub criteria: Vec<u8>,
    #[serde(default)]
    pub plan: AcceptancePlan,
}

fn all_criteria() -> Vec<u8> {
    (1..=CRITERIA).collect()
}

/// Where artifacts go.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; defaults to `out/<name>`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parse and validate a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize back to TOML.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// The output directory.
    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }

    /// Check every section, collecting all diagnostics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            errs.push(format!("name {:?} must be non-empty ASCII letters, digits, '-' or '_'", self.name));
        }
        if self.process.is_none() && self.oracle.is_none() && self.acceptance.is_none() {
            errs.push("nothing to run: add a [process.*], [oracle] or [acceptance] section".into());
        }
        let seeds = self.seeds.list();
        if seeds.is_empty() {
            errs.push("seeds: the list or range is empty".into());
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            errs.push("seeds: duplicate seeds".into());
        }
        let s = &self.scanner;
        if s.horizon == 0 {
            errs.push("scanner.horizon must be positive".into());
        }
        if s.max_time == 0 {
            errs.push("scanner.max_time must be positive".into());
        }
        if s.min_separation == 0 {
            errs.push("scanner.min_separation must be at least 1".into());
        }
        if let UndecidedPolicy::Escalate { cap } = s.undecided_policy {
            if cap < s.horizon {
                errs.push(format!("scanner.undecided_policy.cap {cap} is below the horizon {}", s.horizon));
            }
        }
        let v = &self.verification;
        if !(v.alpha > 0.0 && v.alpha < 1.0) {
            errs.push(format!("verification.alpha {} must lie in (0, 1)", v.alpha));
        }
        if !(v.confidence > 0.0 && v.confidence < 1.0) {
            errs.push(format!("verification.confidence {} must lie in (0, 1)", v.confidence));
        }
        if v.permutations == 0 || v.max_pairs < 4 || v.lag == 0 {
            errs.push("verification: permutations ≥ 1, max_pairs ≥ 4 and lag ≥ 1 are required".into());
        }
        if let Some(p) = &self.process {
            self.validate_process(p, &mut errs);
        }
        if let Some(o) = &self.oracle {
            if let Err(e) = o.alphabet() {
                errs.push(format!("oracle: {e}"));
            }
            if o.t_max == 0 || o.lookahead == 0 {
                errs.push("oracle: t_max and lookahead must be positive".into());
            }
        }
        if let Some(a) = &self.acceptance {
            if let Some(bad) = a.criteria.iter().find(|&&c| c == 0 || c > CRITERIA) {
                errs.push(format!("acceptance.criteria: {bad} is not a criterion (1 to {CRITERIA})"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    fn validate_process(&self, p: &ProcessSection, errs: &mut Vec<String>) {
        let truncate_only = |errs: &mut Vec<String>, kind: &str| {
            if self.scanner.undecided_policy != UndecidedPolicy::Truncate || self.scanner.min_separation != 1 {
                errs.push(format!(
                    "process.{kind}: the survival-probe scan supports undecided_policy = truncate and min_separation = 1 only"
                ));
            }
        };
        match p {
            ProcessSection::Walk(w) => {
                if let Err(e) = w.increments() {
                    errs.push(format!("process.walk: {e}"));
                }
            }
            ProcessSection::Contact2(c) => {
                if let Err(e) = c.law() {
                    errs.push(format!("process.contact2: {e}"));
                }
                truncate_only(errs, "contact2");
            }
            ProcessSection::Contact3(c) => {
                if let Err(e) = c.law() {
                    errs.push(format!("process.contact3: {e}"));
                }
                if !(c.q >= 0.0 && c.q <= 1.0) {
                    errs.push(format!("process.contact3.q {} must lie in [0, 1]", c.q));
                }
                if c.window < 2 {
                    errs.push("process.contact3.window must be at least 2".into());
                }
                truncate_only(errs, "contact3");
            }
            ProcessSection::BinsBasic(b) => {
                check_bins_law(&b.law, &b.initial, "bins-basic", errs);
            }
            ProcessSection::BinsPrime(b) => {
                check_bins_law(&b.law, &b.initial, "bins-prime", errs);
                if let Err(e) = crate::bins::find_word(b.i1, b.i2, b.word_bound) {
                    errs.push(format!("process.bins-prime: {e}"));
                }
            }
            ProcessSection::Links(l) => {
                if let Err(e) = crate::bins::LinkDriving::new(1, l.p, l.mean) {
                    errs.push(format!("process.links: {e}"));
                }
                if !(l.eps > 0.0 && l.eps < 1.0) {
                    errs.push(format!("process.links.eps {} must lie in (0, 1)", l.eps));
                }
                if l.blocks == 0 || l.calibration_steps < 1_000 {
                    errs.push("process.links: blocks ≥ 1 and calibration_steps ≥ 1000 are required".into());
                }
            }
            ProcessSection::Harris(h) => {
                let spec = h.chain.spec();
                if !spec.in_space(h.x0) {
                    errs.push(format!("process.harris.x0 {} is outside the state space", h.x0));
                }
                if let Some(tv) = &h.tv {
                    if tv.inits.len() < 2 || tv.n == 0 || tv.replicas == 0 {
                        errs.push("process.harris.tv: at least two inits, n ≥ 1 and replicas ≥ 1 are required".into());
                    }
                    if let Some(x) = tv.inits.iter().find(|&&x| !spec.in_space(x)) {
                        errs.push(format!("process.harris.tv.inits: {x} is outside the state space"));
                    }
                }
            }
        }
    }
}

fn check_bins_law(law: &LawSpec, initial: &[u64], kind: &str, errs: &mut Vec<String>) {
    match Law::try_from(law) {
        Ok(Law::Finite(_)) | Ok(Law::Geometric { .. }) => {}
        Ok(_) => errs.push(format!("process.{kind}.law must be finite or geometric (integer ranks)")),
        Err(e) => errs.push(format!("process.{kind}.law: {e}")),
    }
    if initial.is_empty() || initial.contains(&0) {
        errs.push(format!("process.{kind}.initial must be nonempty with every bin occupied"));
    }
}
