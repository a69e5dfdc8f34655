//! Report envelopes and their files.

use crate::config::RunConfig;
use drift_lab::grid::atomic_write;
use drift_lab::report::{Check, ScanReport};
use drift_lab::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const TOOL: &str = "drift-lab";
pub const RNG_NAME: &str = "ChaCha8Rng";

/// A scan report together with where it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    /// Unique within a run; also the file stem.
    pub name: String,
    pub command: String,
    pub battery: String,
    /// Set when the scan confirms a predicted divergence; its checks then
    /// assert the divergence.
    pub expected_divergence: bool,
    pub report: ScanReport,
}

impl NamedReport {
    pub fn new(command: &str, battery: &str, name: impl Into<String>, report: ScanReport) -> Self {
        NamedReport { name: name.into(), command: command.into(), battery: battery.into(), expected_divergence: false, report }
    }

    /// A report recording a computation that stopped with a non-usage error.
    pub fn failure(command: &str, battery: &str, name: impl Into<String>, error: &drift_lab::LabError) -> Self {
        let mut report = ScanReport::new("error");
        report.check("completed", false, error.to_string());
        NamedReport::new(command, battery, name, report)
    }
}

/// Header shared by the summary and by every per-report file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub module_versions: BTreeMap<String, String>,
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub rng: String,
    pub seed: u64,
    /// Unix seconds; `SOURCE_DATE_EPOCH` wins when set.
    pub timestamp: u64,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        let modules = ["group_core", "grid_field", "heat", "sobolev", "embeddings", "hardy_counterexamples", "pde"];
        let mut module_versions: BTreeMap<String, String> =
            modules.iter().map(|m| (m.to_string(), drift_lab::VERSION.to_string())).collect();
        module_versions.insert("cli".into(), env!("CARGO_PKG_VERSION").into());
        Provenance {
            tool: TOOL.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            module_versions,
            command: config.command.name().into(),
            config: config.clone(),
            config_hash: config.hash(),
            rng: RNG_NAME.into(),
            seed: config.seed,
            timestamp: timestamp(),
        }
    }
}

fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return v;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    UsageError,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::UsageError => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedCheck {
    pub report: String,
    pub check: Check,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
    pub failed_checks: Vec<FailedCheck>,
    pub reports: Vec<NamedReport>,
}

impl Envelope {
    pub fn new(config: &RunConfig, reports: Vec<NamedReport>, usage_error: Option<String>) -> Self {
        let failed_checks: Vec<FailedCheck> = reports
            .iter()
            .flat_map(|r| r.report.failed_checks().into_iter().map(|c| FailedCheck { report: r.name.clone(), check: c.clone() }))
            .collect();
        let status = if usage_error.is_some() {
            Status::UsageError
        } else if failed_checks.is_empty() {
            Status::Pass
        } else {
            Status::Fail
        };
        Envelope {
            provenance: Provenance::new(config),
            status,
            exit_code: status.exit_code(),
            error: usage_error,
            failed_checks,
            reports,
        }
    }

    pub fn report(&self, name: &str) -> Option<&NamedReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    pub fn reports_of(&self, battery: &str) -> impl Iterator<Item = &NamedReport> {
        let battery = battery.to_string();
        self.reports.iter().filter(move |r| r.battery == battery)
    }

    /// `summary.json` plus one JSON and/or CSV file per report under `reports/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let format = self.provenance.config.format;
        let reports_dir = dir.join("reports");
        std::fs::create_dir_all(&reports_dir)?;
        for r in &self.reports {
            if format.json() {
                let doc = ReportFile { provenance: &self.provenance, report: r };
                atomic_write(&reports_dir.join(format!("{}.json", r.name)), &to_json(&doc)?)?;
            }
            if format.csv() {
                atomic_write(&reports_dir.join(format!("{}.csv", r.name)), r.report.to_csv().as_bytes())?;
            }
        }
        atomic_write(&dir.join("summary.json"), &to_json(self)?)
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    #[serde(flatten)]
    report: &'a NamedReport,
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// File-name-safe form of a label.
pub fn slug(text: &str) -> String {
    let mut out = String::new();
    for ch in text.chars() {
        match ch {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '_' | '-' => out.push(ch),
            '.' => out.push('p'),
            _ => {
                if !out.ends_with('_') {
                    out.push('_')
                }
            }
        }
    }
    out.trim_matches('_').to_string()
}

/// Compact number label: `1.5 → 1p5`, `-0.4 → m0p4`, `∞ → inf`.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "minf".into() };
    }
    let s = format!("{x}");
    let s = s.replace('-', "m");
    slug(&s)
}
