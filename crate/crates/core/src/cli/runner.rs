//! Orchestration of a configured experiment and the artifacts it writes:
//! per-seed cycle tables, a summary and a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ProcessSection, Suite, VerificationSection};
use crate::acceptance::{run_all, CriterionOutcome};
use crate::bins::links::scan_links;
use crate::bins::{scan_bins_basic, scan_bins_prime, BasicScanConfig, BinState, LinkDriving, LinkParams, PrimeScanConfig};
use crate::contact::three::{record_scan3, RecordScanConfig};
use crate::contact::two::{kuczek_scan, speed_and_diffusion, KuczekConfig};
use crate::contact::ContactDriving;
use crate::core::{DrivingStream, Law};
use crate::harris::{regeneration_scan, tv_convergence_check, HarrisDriving};
use crate::oracle::{run_preset, OraclePlan, OracleReport};
use crate::regen::{iid_suite, scan_break_times, ScanReport};
use crate::stats::{geometric_tail_fit, renewal_reward};
use crate::walk::{FutureMinimum, WalkAdapter, WalkConfig};

/// Column names of the cycles table.
pub const CYCLES_HEADER: [&str; 5] = ["k", "tau_start", "tau_end", "gap", "trace"];

/// A trace value as written to the cycles table.
pub trait TraceCell {
    /// The text of one step; vector components are joined by `:`.
    fn cell(&self) -> String;
    /// The value as a real number, for scalar traces.
    fn scalar(&self) -> Option<f64>;
}

impl TraceCell for f64 {
    fn cell(&self) -> String {
        format!("{self}")
    }
    fn scalar(&self) -> Option<f64> {
        Some(*self)
    }
}

impl TraceCell for i64 {
    fn cell(&self) -> String {
        self.to_string()
    }
    fn scalar(&self) -> Option<f64> {
        Some(*self as f64)
    }
}

impl TraceCell for u64 {
    fn cell(&self) -> String {
        self.to_string()
    }
    fn scalar(&self) -> Option<f64> {
        Some(*self as f64)
    }
}

impl<T: TraceCell> TraceCell for Vec<T> {
    fn cell(&self) -> String {
        self.iter().map(TraceCell::cell).collect::<Vec<_>>().join(":")
    }
    fn scalar(&self) -> Option<f64> {
        None
    }
}

/// The cycles table of a scan as CSV bytes.
pub fn cycles_csv<T: TraceCell>(scan: &ScanReport<T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CYCLES_HEADER)?;
    for c in &scan.cycles {
        let trace = c.trace.iter().map(TraceCell::cell).collect::<Vec<_>>().join(";");
        w.write_record([c.k.to_string(), c.tau_start.to_string(), c.tau_end.to_string(), c.gap().to_string(), trace])?;
    }
    w.into_inner().map_err(|e| anyhow!("csv writer: {e}"))
}

/// Per-seed summary of one scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub break_times: usize,
    pub cycles: usize,
    pub first_break_time: Option<u64>,
    pub horizon: u64,
    pub max_time: u64,
    pub probes: u64,
    pub undecided: u64,
    pub diagnostic: Option<String>,
    pub mean_gap: Option<f64>,
    pub verification: BTreeMap<String, Value>,
    pub model: BTreeMap<String, Value>,
}

/// One seed's artifacts before they are written.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub taus: Vec<u64>,
    pub csv: Vec<u8>,
    pub summary: SeedSummary,
}

fn summarize<T: TraceCell>(
    seed: u64,
    scan: &ScanReport<T>,
    verification: &VerificationSection,
    model: BTreeMap<String, Value>,
) -> Result<SeedRun> {
    let gaps: Vec<f64> = scan.cycles.iter().map(|c| c.gap() as f64).collect();
    let mean_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
    let scalar: Option<Vec<(f64, f64)>> = scan
        .cycles
        .iter()
        .map(|c| {
            let values: Option<Vec<f64>> = c.trace.iter().map(TraceCell::scalar).collect();
            let values = values?;
            Some((values.last().copied().unwrap_or(0.0), values.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        })
        .collect();
    let mut ver = BTreeMap::new();
    for suite in &verification.suites {
        let value = match suite {
            Suite::Tail => {
                let raw: Vec<u64> = scan.cycles.iter().map(|c| c.gap()).collect();
                geometric_tail_fit(&raw).map(|f| json!(f)).unwrap_or_else(|e| json!({ "error": e.to_string() }))
            }
            Suite::Renewal => match &scalar {
                Some(s) if !s.is_empty() => {
                    let rewards: Vec<f64> = s.iter().map(|p| p.0).collect();
                    renewal_reward(&gaps, &rewards, verification.confidence)
                        .map(|r| json!(r))
                        .unwrap_or_else(|e| json!({ "error": e.to_string() }))
                }
                _ => json!({ "error": "needs scalar traces and at least one cycle" }),
            },
            Suite::Iid => {
                let (names, features): (Vec<&str>, Vec<Vec<f64>>) = match &scalar {
                    Some(s) => (
                        vec!["gap", "increment", "max"],
                        gaps.iter().zip(s).map(|(g, p)| vec![*g, p.0, p.1]).collect(),
                    ),
                    None => (vec!["gap"], gaps.iter().map(|g| vec![*g]).collect()),
                };
                iid_suite(&names, &features, verification.alpha, verification.permutations, verification.max_pairs, verification.lag, seed)
                    .map(|r| json!(r))
                    .unwrap_or_else(|e| json!({ "error": e.to_string() }))
            }
        };
        ver.insert(format!("{suite:?}").to_lowercase(), value);
    }
    Ok(SeedRun {
        seed,
        taus: scan.taus.clone(),
        csv: cycles_csv(scan)?,
        summary: SeedSummary {
            seed,
            break_times: scan.taus.len(),
            cycles: scan.cycles.len(),
            first_break_time: scan.taus.first().copied(),
            horizon: scan.horizon,
            max_time: scan.max_time,
            probes: scan.probes,
            undecided: scan.undecided,
            diagnostic: scan.diagnostic.clone(),
            mean_gap,
            verification: ver,
            model,
        },
    })
}

fn bin_state(counts: &[u64]) -> Result<BinState> {
    BinState::new(counts.to_vec()).ok_or_else(|| anyhow!("initial bins must be nonempty and occupied"))
}

/// Run the process section for one seed.
pub fn run_seed(cfg: &ExperimentConfig, process: &ProcessSection, seed: u64) -> Result<SeedRun> {
    let s = &cfg.scanner;
    let bc = s.break_config();
    let v = &cfg.verification;
    let mut model = BTreeMap::new();
    match process {
        ProcessSection::Walk(w) => {
            let wc = WalkConfig::new(w.increments().map_err(|e| anyhow!(e))?, s.max_time, w.variant)?;
            let source = wc.source(seed);
            let scan = scan_break_times(&WalkAdapter::new(w.records), &source, &FutureMinimum::new(w.variant), &bc);
            model.insert("drift".into(), json!(wc.increments.mean()));
            summarize(seed, &scan, v, model)
        }
        ProcessSection::Contact2(c) => {
            let d = ContactDriving::new(seed, c.law().map_err(|e| anyhow!(e))?, 1.0)?;
            let rep = kuczek_scan(&d, &KuczekConfig::new(s.horizon, s.max_time))?;
            if let Ok(sp) = speed_and_diffusion(&rep.scan, v.confidence) {
                model.insert("speed".into(), json!(sp.speed));
                model.insert("diffusion".into(), json!(sp.diffusion));
            }
            model.insert("failed_probes".into(), json!(rep.extinction_lags.len()));
            summarize(seed, &rep.scan, v, model)
        }
        ProcessSection::Contact3(c) => {
            let d = ContactDriving::new(seed, c.law().map_err(|e| anyhow!(e))?, c.q)?;
            let rc = RecordScanConfig { window: c.window, width_cap: c.window, ..RecordScanConfig::new(s.horizon, s.max_time) };
            let rep = record_scan3(&d, &rc)?;
            model.insert("records".into(), json!(rep.records));
            model.insert("failed_probes".into(), json!(rep.extinction_lags.len()));
            summarize(seed, &rep.scan, v, model)
        }
        ProcessSection::BinsBasic(b) => {
            let d = DrivingStream::new(seed, Law::try_from(&b.law)?);
            let mut params = BasicScanConfig::new(b.k, bin_state(&b.initial)?);
            params.first_of_run = b.first_of_run;
            let scan = scan_bins_basic(&d, &params, &bc)?;
            summarize(seed, &scan, v, model)
        }
        ProcessSection::BinsPrime(b) => {
            let d = DrivingStream::new(seed, Law::try_from(&b.law)?);
            let params = PrimeScanConfig {
                initial: bin_state(&b.initial)?,
                word_bound: b.word_bound,
                ..PrimeScanConfig::new(b.i1, b.i2, b.k)
            };
            let rep = scan_bins_prime(&d, &params, &bc)?;
            model.insert("word".into(), json!(rep.word.block()));
            model.insert("run_length".into(), json!(rep.r));
            model.insert("past_hits".into(), json!(rep.past_hits));
            model.insert("all_i1_violations".into(), json!(rep.violations.len()));
            model.insert("min_gap".into(), json!(rep.min_gap));
            model.insert("excluded_gap".into(), json!(rep.excluded_gap));
            model.insert("exact_checks_pass".into(), json!(rep.exact_checks_pass()));
            summarize(seed, &rep.scan, v, model)
        }
        ProcessSection::Links(l) => {
            let d = LinkDriving::new(seed, l.p, l.mean)?;
            let params = LinkParams::calibrated(&d, l.eps, l.blocks, l.calibration_steps, s.horizon)?;
            let rep = scan_links(&d, &params, &bc)?;
            model.insert("params".into(), json!(rep.params));
            model.insert("past_hits".into(), json!(rep.past_hits));
            model.insert("attachments_checked".into(), json!(rep.attachments_checked));
            model.insert("attachment_violations".into(), json!(rep.attachment_violations.len()));
            summarize(seed, &rep.scan, v, model)
        }
        ProcessSection::Harris(h) => {
            let spec = h.chain.spec();
            let scan = regeneration_scan(&spec, &HarrisDriving { seed }, h.x0, s.max_time)?;
            if let Some(tv) = &h.tv {
                let m = tv_convergence_check(&spec, &tv.inits, tv.n, tv.replicas, seed)?;
                model.insert("tv_max".into(), json!(m.max()));
                model.insert("tv".into(), json!(m));
            }
            summarize(seed, &scan, v, model)
        }
    }
}

/// Run the oracle section.
pub fn run_oracle(cfg: &ExperimentConfig, seed: u64) -> Result<Option<OracleReport>> {
    let Some(o) = &cfg.oracle else {
        return Ok(None);
    };
    let alphabet = o.alphabet().map_err(|e| anyhow!(e))?;
    let plan = OraclePlan {
        t_max: o.t_max,
        lookahead: o.lookahead,
        max_m: o.max_m.unwrap_or(o.lookahead),
        n_max: o.n_max,
        cross_check_replicas: o.cross_check_replicas,
        seed,
    };
    Ok(Some(run_preset(o.preset, &alphabet, &plan)?))
}

/// Headline verdicts of an oracle report.
pub fn oracle_verdicts(r: &OracleReport) -> Value {
    json!({
        "preset": r.preset,
        "total_mass": r.total_mass,
        "monotonicity": r.monotonicity.as_ref().map(|m| m.pass),
        "past_future": r.past_future.pass,
        "iid": r.iid.pass,
        "iid_witness": r.iid.witness,
        "gap_law": r.gap_law.as_ref().map(|g| g.pass),
        "gap_law_constant": r.gap_law.as_ref().and_then(|g| g.constant.clone()),
        "next_zero_after_unit_gap": r.next_zero_after_unit_gap,
        "cross_check_ks": r.cross_check_ks,
    })
}

/// What a run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
    /// False when an acceptance criterion failed.
    pub pass: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn pretty(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Run everything the configuration asks for and write the artifacts to
/// `dir`: `cycles_seed<seed>.csv` per seed, `oracle.json`, `summary.json`,
/// `config.toml` and `manifest.json`.
///
/// `raw` is the configuration text as read, hashed into the manifest.
pub fn run(cfg: &ExperimentConfig, raw: &str, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let seeds = cfg.seeds.list();
    let mut artifacts: Vec<(String, Vec<u8>)> = Vec::new();
    let mut summary = serde_json::Map::new();
    summary.insert("name".into(), json!(cfg.name));
    summary.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
    summary.insert("seeds".into(), json!(seeds));
    if let Some(process) = &cfg.process {
        let runs: Vec<Result<SeedRun>> = seeds.par_iter().map(|&s| run_seed(cfg, process, s)).collect();
        let mut per_seed = Vec::new();
        for run in runs {
            let run = run?;
            artifacts.push((format!("cycles_seed{}.csv", run.seed), run.csv));
            per_seed.push(run.summary);
        }
        summary.insert("process".into(), json!(process.kind()));
        summary.insert("scanner".into(), json!(cfg.scanner));
        summary.insert("per_seed".into(), json!(per_seed));
    }
    if let Some(report) = run_oracle(cfg, seeds[0])? {
        summary.insert("oracle".into(), oracle_verdicts(&report));
        artifacts.push(("oracle.json".into(), pretty(&report)?));
    }
    let mut pass = true;
    if let Some(a) = &cfg.acceptance {
        let outcomes: Vec<CriterionOutcome> = run_all(&a.criteria, &a.plan);
        pass = outcomes.iter().all(|o| o.pass);
        summary.insert("acceptance".into(), json!(outcomes));
        summary.insert("acceptance_pass".into(), json!(pass));
    }
    let summary = Value::Object(summary);
    artifacts.push(("summary.json".into(), pretty(&summary)?));
    artifacts.push(("config.toml".into(), raw.as_bytes().to_vec()));
    let mut files = Vec::new();
    let mut listed = Vec::new();
    for (name, bytes) in &artifacts {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        listed.push(json!({ "file": name, "bytes": bytes.len(), "sha256": sha256_hex(bytes) }));
        files.push(path);
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "schema_version": cfg.schema_version,
        "config_sha256": sha256_hex(raw.as_bytes()),
        "seeds": seeds,
        "artifacts": listed,
    });
    let path = dir.join("manifest.json");
    fs::write(&path, pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    Ok(RunOutcome { dir: dir.to_path_buf(), files, summary, pass })
}
