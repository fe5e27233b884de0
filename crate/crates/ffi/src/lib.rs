//! C ABI over `regen-lab`: parse a configuration, scan one seed, read the
//! break times, cycle table and summary back, or run a whole experiment
//! into a directory.
//!
//! Every function returns an [`RlStatus`]. On failure a message is
//! available from [`rl_last_error`] on the same thread until the next call.
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Strings returned through handles stay valid
//! until the handle is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use regen_lab::cli::config::{ConfigError, ExperimentConfig};
use regen_lab::cli::{presets, runner};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RlStatus {
    /// Success.
    RlOk = 0,
    /// A required pointer argument was null.
    RlNullPointer = 1,
    /// A string argument was not valid UTF-8.
    RlInvalidUtf8 = 2,
    /// The configuration could not be parsed or failed validation.
    RlConfigError = 3,
    /// The run itself failed.
    RlRuntimeError = 4,
    /// The configuration lacks the section the call needs.
    RlMissingSection = 5,
    /// A panic was caught at the boundary.
    RlPanic = 6,
}

/// A validated experiment configuration.
pub struct RlConfig {
    config: ExperimentConfig,
    raw: String,
}

/// The scan of one seed.
pub struct RlScan {
    taus: Vec<u64>,
    csv: CString,
    summary: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: RlStatus, message: impl AsRef<str>) -> RlStatus {
    set_error(message.as_ref());
    status
}

fn guard(f: impl FnOnce() -> RlStatus) -> RlStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(RlStatus::RlPanic, msg)
        }
    }
}

/// # Safety
/// `s` is null or a NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, RlStatus> {
    if s.is_null() {
        return Err(fail(RlStatus::RlNullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(RlStatus::RlInvalidUtf8, e.to_string()))
}

fn config_status(e: ConfigError) -> RlStatus {
    fail(RlStatus::RlConfigError, e.to_string())
}

fn to_cstring(bytes: Vec<u8>) -> CString {
    CString::new(bytes).unwrap_or_default()
}

/// The library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The message of the last failed call on this thread; empty after success.
#[no_mangle]
pub extern "C" fn rl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse and validate a TOML configuration.
///
/// # Safety
/// `toml` is a NUL-terminated string and `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_config_from_toml(toml: *const c_char, out: *mut *mut RlConfig) -> RlStatus {
    guard(|| {
        if out.is_null() {
            return fail(RlStatus::RlNullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_toml_str(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(RlConfig { config, raw: text.to_string() }));
                RlStatus::RlOk
            }
            Err(e) => config_status(e),
        }
    })
}

/// Load a built-in preset by name.
///
/// # Safety
/// `name` is a NUL-terminated string and `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_config_from_preset(name: *const c_char, out: *mut *mut RlConfig) -> RlStatus {
    let text = match read_str(name) {
        Ok(n) => match presets::get(n) {
            Some(t) => t,
            None => return fail(RlStatus::RlConfigError, format!("no preset named {n:?}")),
        },
        Err(s) => return s,
    };
    let c = CString::new(text).expect("presets contain no NUL");
    rl_config_from_toml(c.as_ptr(), out)
}

/// Number of seeds in a configuration.
///
/// # Safety
/// `config` is a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_config_seed_count(config: *const RlConfig, out: *mut usize) -> RlStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return fail(RlStatus::RlNullPointer, "null argument");
        }
        *out = (*config).config.seeds.list().len();
        RlStatus::RlOk
    })
}

/// Release a configuration; null is ignored.
///
/// # Safety
/// `config` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_config_free(config: *mut RlConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Scan the configured process for one seed.
///
/// # Safety
/// `config` is a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_scan_run(config: *const RlConfig, seed: u64, out: *mut *mut RlScan) -> RlStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return fail(RlStatus::RlNullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let cfg = &(*config).config;
        let Some(process) = &cfg.process else {
            return fail(RlStatus::RlMissingSection, "the configuration has no process section");
        };
        match runner::run_seed(cfg, process, seed) {
            Ok(run) => {
                let summary = serde_json::to_vec(&run.summary).expect("summary serializes");
                *out = Box::into_raw(Box::new(RlScan {
                    taus: run.taus,
                    csv: to_cstring(run.csv),
                    summary: to_cstring(summary),
                }));
                RlStatus::RlOk
            }
            Err(e) => fail(RlStatus::RlRuntimeError, format!("{e:#}")),
        }
    })
}

/// Number of break times found.
///
/// # Safety
/// `scan` is a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_scan_break_time_count(scan: *const RlScan, out: *mut usize) -> RlStatus {
    guard(|| {
        if scan.is_null() || out.is_null() {
            return fail(RlStatus::RlNullPointer, "null argument");
        }
        *out = (*scan).taus.len();
        RlStatus::RlOk
    })
}

/// Copy up to `capacity` break times into `buffer`; `written` receives the
/// number copied.
///
/// # Safety
/// `buffer` holds at least `capacity` values; `scan` and `written` are valid.
#[no_mangle]
pub unsafe extern "C" fn rl_scan_break_times(
    scan: *const RlScan,
    buffer: *mut u64,
    capacity: usize,
    written: *mut usize,
) -> RlStatus {
    guard(|| {
        if scan.is_null() || written.is_null() || (buffer.is_null() && capacity > 0) {
            return fail(RlStatus::RlNullPointer, "null argument");
        }
        let taus = &(*scan).taus;
        let n = taus.len().min(capacity);
        if n > 0 {
            ptr::copy_nonoverlapping(taus.as_ptr(), buffer, n);
        }
        *written = n;
        RlStatus::RlOk
    })
}

/// The cycle table as CSV, owned by the scan.
///
/// # Safety
/// `scan` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn rl_scan_cycles_csv(scan: *const RlScan) -> *const c_char {
    if scan.is_null() {
        return ptr::null();
    }
    (*scan).csv.as_ptr()
}

/// The per-seed summary as JSON, owned by the scan.
///
/// # Safety
/// `scan` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn rl_scan_summary_json(scan: *const RlScan) -> *const c_char {
    if scan.is_null() {
        return ptr::null();
    }
    (*scan).summary.as_ptr()
}

/// Release a scan; null is ignored.
///
/// # Safety
/// `scan` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_scan_free(scan: *mut RlScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}

/// Run the whole configuration and write its artifacts to `dir`.
/// `passed` receives 0 when an acceptance criterion failed and 1 otherwise.
///
/// # Safety
/// `config` is a live handle, `dir` a NUL-terminated path and `passed` null
/// or valid.
#[no_mangle]
pub unsafe extern "C" fn rl_run_to_dir(config: *const RlConfig, dir: *const c_char, passed: *mut i32) -> RlStatus {
    guard(|| {
        if config.is_null() {
            return fail(RlStatus::RlNullPointer, "null configuration");
        }
        let dir = match read_str(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        let c = &*config;
        match runner::run(&c.config, &c.raw, Path::new(dir)) {
            Ok(outcome) => {
                if !passed.is_null() {
                    *passed = i32::from(outcome.pass);
                }
                RlStatus::RlOk
            }
            Err(e) => fail(RlStatus::RlRuntimeError, format!("{e:#}")),
        }
    })
}
