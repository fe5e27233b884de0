//! Command-line and runner tests: golden cycle tables, byte-identical
//! reruns across thread counts, preset validity and configuration rejection.

use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};

use regen_lab::cli::config::{ConfigError, ExperimentConfig};
use regen_lab::cli::{parse_law, parse_seeds, presets, runner};

const BIN: &str = env!("CARGO_BIN_EXE_regen-lab");

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn regen(args: &[&str], out: &Path, threads: &str) -> std::process::Output {
    Command::new(BIN).args(args).arg("--out").arg(out).env("REGENLAB_THREADS", threads).output().unwrap()
}

fn run_and_read(args: &[&str], file: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    let out = regen(args, dir.path(), "1");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read_to_string(dir.path().join(file)).unwrap()
}

#[test]
fn walk_cycles_match_golden() {
    let args = ["walk", "--p", "1/2", "--q", "1/4", "--seeds", "7", "--horizon", "100", "--max-time", "200", "--name", "g-walk"];
    let csv = run_and_read(&args, "cycles_seed7.csv");
    assert_eq!(csv, golden("walk_seed7.csv"));
}

#[test]
fn bins_basic_cycles_match_golden() {
    let args = [
        "bins", "basic", "--xi-law", "geometric:0.5", "--k", "1", "--seeds", "3", "--horizon", "50", "--max-time", "200", "--name",
        "g-bins",
    ];
    let csv = run_and_read(&args, "cycles_seed3.csv");
    assert_eq!(csv, golden("bins_basic_seed3.csv"));
}

#[test]
fn contact2_cycles_match_golden() {
    let args = ["contact2", "--b", "0.75", "--seeds", "5", "--horizon", "100", "--max-time", "200", "--name", "g-c2"];
    let csv = run_and_read(&args, "cycles_seed5.csv");
    assert_eq!(csv, golden("contact2_seed5.csv"));
}

#[test]
fn golden_walk_cycles_are_consistent() {
    let text = golden("walk_seed7.csv");
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), runner::CYCLES_HEADER);
    let mut prev_end = None;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (start, end, gap): (u64, u64, u64) = (rec[1].parse().unwrap(), rec[2].parse().unwrap(), rec[3].parse().unwrap());
        assert_eq!(end - start, gap);
        if let Some(p) = prev_end {
            assert_eq!(p, start);
        }
        prev_end = Some(end);
        let trace: Vec<f64> = rec[4].split(';').map(|v| v.parse().unwrap()).collect();
        assert_eq!(trace.len() as u64, gap);
        assert!(trace.iter().all(|&v| v >= 0.0), "weak future minimum violated inside cycle {}", &rec[0]);
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let args = ["run", concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets/walk-example1a.toml")];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(regen(&args, a.path(), "1").status.success());
    assert!(regen(&args, b.path(), "3").status.success());
    let files = ["cycles_seed1.csv", "cycles_seed2.csv", "cycles_seed3.csv", "summary.json", "config.toml", "manifest.json"];
    for f in files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn manifest_hashes_match_artifacts() {
    let cfg = ExperimentConfig::from_toml_str(presets::get("kuczek2").unwrap()).unwrap();
    let mut cfg = cfg;
    cfg.scanner.max_time = 500;
    cfg.scanner.horizon = 100;
    let raw = cfg.to_toml_string();
    let dir = tempfile::tempdir().unwrap();
    let outcome = runner::run(&cfg, &raw, dir.path()).unwrap();
    assert!(outcome.pass);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    for a in manifest["artifacts"].as_array().unwrap() {
        let bytes = std::fs::read(dir.path().join(a["file"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(a["sha256"].as_str().unwrap(), format!("{:x}", Sha256::digest(&bytes)));
    }
    let reread = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&reread).unwrap(), cfg);
}

#[test]
fn every_preset_validates_and_round_trips() {
    for (name, text) in presets::PRESETS {
        let cfg = ExperimentConfig::from_toml_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&cfg.name, name);
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }
}

#[test]
fn oracle_preset_reports_exact_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN).args(["oracle", "example1a", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(report["total_mass"], "1/1");
    assert_eq!(report["iid"]["pass"], true);
}

fn invalid(text: &str) -> Vec<String> {
    match ExperimentConfig::from_toml_str(text) {
        Err(ConfigError::Invalid(v)) => v,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn rejects_unknown_fields_and_bad_versions() {
    let unknown = "schema_version = 1\nname = \"x\"\nbogus = 3\n[process.contact2]\nb = 0.75\n";
    assert!(matches!(ExperimentConfig::from_toml_str(unknown), Err(ConfigError::Parse(_))));
    let errs = invalid("schema_version = 9\nname = \"x\"\n[process.contact2]\nb = 0.75\n");
    assert!(errs.iter().any(|e| e.contains("schema_version")));
}

#[test]
fn collects_every_diagnostic() {
    let text = r#"
schema_version = 1
name = "bad"
seeds = [1, 1]

[process.contact3]
b = 0.875
q = 1.5

[scanner]
horizon = 0
min_separation = 2

[verification]
alpha = 2.0
"#;
    let errs = invalid(text);
    for needle in ["duplicate", "horizon", "min_separation", "alpha", "contact3"] {
        assert!(errs.iter().any(|e| e.contains(needle)), "missing {needle:?} in {errs:?}");
    }
}

#[test]
fn rejects_model_specific_mistakes() {
    let zero_bin = "schema_version = 1\nname = \"b\"\n[process.bins-basic]\ninitial = [1, 0]\n[process.bins-basic.law]\ntype = \"geometric\"\nr = 0.5\n";
    assert!(!invalid(zero_bin).is_empty());
    let no_word = "schema_version = 1\nname = \"p\"\n[process.bins-prime]\ni1 = 2\ni2 = 4\n[process.bins-prime.law]\ntype = \"finite\"\nsymbols = [2, 4]\nweights = [0.5, 0.5]\n";
    assert!(!invalid(no_word).is_empty());
    let both = "schema_version = 1\nname = \"c\"\n[process.contact2]\nb = 0.75\n[process.contact2.law]\np_none = 1.0\np_left = 0.0\np_right = 0.0\np_both = 0.0\n";
    assert!(invalid(both).iter().any(|e| e.contains("either")));
}

#[test]
fn exit_codes_distinguish_config_errors() {
    let out = Command::new(BIN).args(["contact2", "--b", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(BIN).args(["run", "no-such-preset"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(BIN).args(["validate", "kuczek2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn flag_parsers() {
    assert_eq!(parse_seeds("1..3").unwrap().list(), vec![1, 2, 3]);
    assert_eq!(parse_seeds("4, 2").unwrap().list(), vec![4, 2]);
    assert!(parse_seeds("a").is_err());
    assert!(parse_law("finite:1=1/2,2=1/2").is_ok());
    assert!(parse_law("geometric:0.25").is_ok());
    assert!(parse_law("cauchy").is_err());
    assert!(parse_law("finite:").is_err());
}
