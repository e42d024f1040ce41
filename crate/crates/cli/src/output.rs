//! CSV formatting, manifests and check bookkeeping.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;

/// Twelve significant digits, fixed notation where sensible.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000000000".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..12).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new leading digit
        let digits = s.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        if digits.trim_start_matches('0').len() > 12 && decimals > 0 {
            return format!("{x:.prec$}", prec = decimals - 1);
        }
        s
    } else {
        format!("{x:.11e}")
    }
}

/// Serializes through `Display`.
pub fn display<S: serde::Serializer, T: std::fmt::Display>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Passed and failed checks of one run.
#[derive(Debug, Default, Serialize)]
pub struct Checks {
    pub passed: usize,
    pub failed: Vec<String>,
    /// Empirical tripwires that fired; failures only under `--strict`.
    pub tripped: Vec<String>,
}

impl Checks {
    pub fn assert(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            let msg = what();
            eprintln!("check failed: {msg}");
            self.failed.push(msg);
        }
    }

    pub fn tripwire(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            let msg = what();
            eprintln!("tripwire: {msg}");
            self.tripped.push(msg);
        }
    }

    pub fn success(&self, strict: bool) -> bool {
        self.failed.is_empty() && (!strict || self.tripped.is_empty())
    }
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    command: &'a str,
    argv: Vec<String>,
    parameters: &'a P,
    version: String,
    started: String,
    finished: String,
    output: String,
    checks: &'a Checks,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Package version followed by `git describe` output when available.
pub fn version() -> String {
    let pkg = env!("CARGO_PKG_VERSION");
    let git = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string());
    match git {
        Some(g) if !g.is_empty() => format!("{pkg}-{g}"),
        _ => pkg.to_string(),
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes the manifest beside `out`.
pub fn write_manifest<P: Serialize>(command: &str, parameters: &P, started: &str, out: &Path, checks: &Checks) -> Result<()> {
    let m = Manifest {
        command,
        argv: std::env::args().collect(),
        parameters,
        version: version(),
        started: started.to_string(),
        finished: now(),
        output: out.display().to_string(),
        checks,
    };
    let path = manifest_path(out);
    let text = serde_json::to_string_pretty(&m)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// CSV writer on a file, or stdout when no path is given.
pub fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(1.0072779439), "1.00727794390");
        assert_eq!(sig12(10.109454622), "10.1094546220");
        assert_eq!(sig12(0.5719), "0.571900000000");
        assert_eq!(sig12(9.99999999999951), "10.0000000000");
        assert_eq!(sig12(f64::INFINITY), "inf");
        assert_eq!(sig12(1.5e-9), "1.50000000000e-9");
    }

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("/tmp/a/t2.csv")), Path::new("/tmp/a/t2.csv.manifest.json"));
    }
}
