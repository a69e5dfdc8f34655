//! Machine-readable scan results.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};

/// One asserted property of a scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// One row of a scan table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub label: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub scan: String,
    pub params: BTreeMap<String, Value>,
    pub rows: Vec<ScanRow>,
    pub summary: BTreeMap<String, f64>,
    /// Largest relative change of the headline quantity under grid halving.
    pub refinement_ratio: Option<f64>,
    pub truncation_mass: Option<f64>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl ScanReport {
    pub fn new(scan: &str) -> Self {
        ScanReport {
            scan: scan.to_string(),
            params: BTreeMap::new(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
            refinement_ratio: None,
            truncation_mass: None,
            checks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.params.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn row(&mut self, label: impl Into<String>, values: &[(&str, f64)]) -> &mut Self {
        self.rows.push(ScanRow {
            label: label.into(),
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
        self
    }

    pub fn stat(&mut self, key: &str, value: f64) -> &mut Self {
        self.summary.insert(key.to_string(), value);
        self
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) -> &mut Self {
        self.checks.push(Check { name: name.to_string(), passed, detail: detail.into() });
        self
    }

    pub fn warn(&mut self, msg: impl Into<String>) -> &mut Self {
        self.warnings.push(msg.into());
        self
    }

    /// Keeps the worst refinement drift seen so far.
    pub fn note_refinement(&mut self, drift: f64) {
        self.refinement_ratio = Some(self.refinement_ratio.map_or(drift, |r| r.max(drift)));
    }

    pub fn note_truncation(&mut self, mass: f64) {
        self.truncation_mass = Some(self.truncation_mass.map_or(mass, |r| r.max(mass)));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    /// Rows as CSV with a `label` column followed by the union of value keys.
    pub fn to_csv(&self) -> String {
        let keys: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.values.keys()).collect();
        let mut out = String::from("label");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_field(&r.label));
            for k in &keys {
                out.push(',');
                if let Some(v) = r.values.get(*k) {
                    out.push_str(&format!("{v:e}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Relative drift `|fine/coarse - 1|`, infinite when only one side vanishes.
pub fn relative_drift(coarse: f64, fine: f64) -> f64 {
    if coarse == fine {
        return 0.0;
    }
    if coarse == 0.0 || !coarse.is_finite() || !fine.is_finite() {
        return f64::INFINITY;
    }
    (fine / coarse - 1.0).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_union_of_columns() {
        let mut r = ScanReport::new("demo");
        r.row("a", &[("x", 1.0)]).row("b,c", &[("y", 2.5)]);
        let csv = r.to_csv();
        assert_eq!(csv, "label,x,y\na,1e0,\n\"b,c\",,2.5e0\n");
    }

    #[test]
    fn json_round_trip_and_pass_state() {
        let mut r = ScanReport::new("demo");
        r.param("p", 2.0).check("ok", true, "").check("bad", false, "why");
        r.note_refinement(0.1);
        r.note_refinement(0.05);
        assert_eq!(r.refinement_ratio, Some(0.1));
        assert!(!r.passed());
        let back: ScanReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn drift_definition() {
        assert_eq!(relative_drift(2.0, 2.2), 0.10000000000000009);
        assert_eq!(relative_drift(0.0, 0.0), 0.0);
        assert!(relative_drift(0.0, 1.0).is_infinite());
    }
}
