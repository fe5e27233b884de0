//! Round trips through the C ABI, from Rust and from a C program compiled
//! against the generated header.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use regen_lab_ffi::*;

const SMALL: &str = "schema_version = 1\nname = \"ffi\"\nseeds = [1, 2]\n[process.bins-basic]\n[process.bins-basic.law]\ntype = \"geometric\"\nr = 0.5\n[scanner]\nhorizon = 50\nmax_time = 2000\n";

fn config(text: &str) -> *mut RlConfig {
    let c = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { rl_config_from_toml(c.as_ptr(), &mut out) };
    assert_eq!(status, RlStatus::RlOk, "{}", last_error());
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rl_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn scan_matches_the_rust_runner() {
    let cfg = config(SMALL);
    let mut seeds = 0;
    assert_eq!(unsafe { rl_config_seed_count(cfg, &mut seeds) }, RlStatus::RlOk);
    assert_eq!(seeds, 2);
    let mut scan = ptr::null_mut();
    assert_eq!(unsafe { rl_scan_run(cfg, 2, &mut scan) }, RlStatus::RlOk);
    let mut count = 0;
    assert_eq!(unsafe { rl_scan_break_time_count(scan, &mut count) }, RlStatus::RlOk);
    let mut buf = vec![0u64; count + 3];
    let mut written = 0;
    assert_eq!(unsafe { rl_scan_break_times(scan, buf.as_mut_ptr(), buf.len(), &mut written) }, RlStatus::RlOk);
    assert_eq!(written, count);

    let parsed = regen_lab::cli::config::ExperimentConfig::from_toml_str(SMALL).unwrap();
    let direct = regen_lab::cli::runner::run_seed(&parsed, parsed.process.as_ref().unwrap(), 2).unwrap();
    assert_eq!(&buf[..written], &direct.taus[..]);
    let csv = unsafe { CStr::from_ptr(rl_scan_cycles_csv(scan)) }.to_bytes();
    assert_eq!(csv, &direct.csv[..]);
    let summary: serde_json::Value =
        serde_json::from_str(unsafe { CStr::from_ptr(rl_scan_summary_json(scan)) }.to_str().unwrap()).unwrap();
    assert_eq!(summary["break_times"].as_u64().unwrap() as usize, count);
    unsafe {
        rl_scan_free(scan);
        rl_config_free(cfg);
    }
}

#[test]
fn errors_are_reported_with_codes_and_messages() {
    let bad = CString::new("schema_version = 1\nname = \"x\"\n[process.contact2]\nb = 2.0\n").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rl_config_from_toml(bad.as_ptr(), &mut out) }, RlStatus::RlConfigError);
    assert!(out.is_null());
    assert!(last_error().contains("contact2"));
    assert_eq!(unsafe { rl_config_from_toml(ptr::null(), &mut out) }, RlStatus::RlNullPointer);
    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { rl_config_from_toml(invalid.as_ptr().cast(), &mut out) }, RlStatus::RlInvalidUtf8);
    let name = CString::new("nope").unwrap();
    assert_eq!(unsafe { rl_config_from_preset(name.as_ptr(), &mut out) }, RlStatus::RlConfigError);

    let oracle_only = config("schema_version = 1\nname = \"o\"\n[oracle]\npreset = \"example1a\"\np = \"1/4\"\nq = \"1/4\"\nt_max = 3\nlookahead = 3\n");
    let mut scan = ptr::null_mut();
    assert_eq!(unsafe { rl_scan_run(oracle_only, 1, &mut scan) }, RlStatus::RlMissingSection);
    assert!(scan.is_null());
    unsafe {
        rl_config_free(oracle_only);
        rl_config_free(ptr::null_mut());
        rl_scan_free(ptr::null_mut());
    }
    assert!(unsafe { rl_scan_cycles_csv(ptr::null()) }.is_null());
}

#[test]
fn runs_a_preset_into_a_directory() {
    let name = CString::new("example1a").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { rl_config_from_preset(name.as_ptr(), &mut cfg) }, RlStatus::RlOk);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut passed = -1;
    assert_eq!(unsafe { rl_run_to_dir(cfg, path.as_ptr(), &mut passed) }, RlStatus::RlOk);
    assert_eq!(passed, 1);
    for f in ["oracle.json", "summary.json", "config.toml", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    unsafe { rl_config_free(cfg) };
    let version = unsafe { CStr::from_ptr(rl_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libregen_lab_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(compiler)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let count: usize = text.split_whitespace().next().unwrap().parse().unwrap();
    assert!(count > 0);
}
