//! Run configuration and its content hash.

use drift_lab::{GridSpec, GroupKind, LabError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Heat,
    Sobolev,
    Embed,
    Counterexample,
    Pde,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Heat => "heat",
            Command::Sobolev => "sobolev",
            Command::Embed => "embed",
            Command::Counterexample => "counterexample",
            Command::Pde => "pde",
            Command::All => "all",
        }
    }

    /// Sub-batteries that `--battery` may select.
    pub fn batteries(self) -> &'static [&'static str] {
        match self {
            Command::Heat => &["invariants", "certificates", "kernels"],
            Command::Sobolev => &["triangle", "riesz"],
            Command::Embed => &["ratios", "integrability", "young", "translation", "obstruction"],
            Command::Counterexample => &["nobmo", "algebra", "window"],
            Command::Pde => &["heat", "schrodinger", "linear", "admissibility", "composition", "export"],
            Command::All => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

/// `--grid nx,ns,xmax,smax`: the box `[-xmax, xmax] × [-smax, smax]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridArgs {
    pub nx: usize,
    pub ns: usize,
    pub xmax: f64,
    pub smax: f64,
}

impl GridArgs {
    pub fn parse(text: &str) -> std::result::Result<GridArgs, String> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected nx,ns,xmax,smax, got '{text}'"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| format!("'{s}': {e}"));
        let real = |s: &str| s.parse::<f64>().map_err(|e| format!("'{s}': {e}"));
        Ok(GridArgs { nx: int(parts[0])?, ns: int(parts[1])?, xmax: real(parts[2])?, smax: real(parts[3])? })
    }

    pub fn spec(&self, kind: GroupKind) -> Result<GridSpec> {
        match kind {
            GroupKind::AxB => GridSpec::symmetric(self.nx, self.ns, self.xmax, self.smax),
            GroupKind::AbelianLine => GridSpec::line(-self.xmax, self.xmax, self.nx),
        }
    }
}

/// Everything that determines the numbers of a run. The output directory is
/// not part of the hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub group: GroupKind,
    pub grid: Option<GridArgs>,
    pub gammas: Option<Vec<f64>>,
    pub ps: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub c: Option<f64>,
    /// Heat times.
    pub ts: Option<Vec<f64>>,
    /// PDE horizon.
    pub tau: Option<f64>,
    /// Empty selects every battery of the command.
    pub batteries: Vec<String>,
    pub seed: u64,
    pub format: Format,
    #[serde(skip)]
    pub out: PathBuf,
}

pub const DEFAULT_SEED: u64 = 7;

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            group: GroupKind::AxB,
            grid: None,
            gammas: None,
            ps: None,
            alphas: None,
            c: None,
            ts: None,
            tau: None,
            batteries: Vec::new(),
            seed: DEFAULT_SEED,
            format: Format::Both,
            out: PathBuf::from("drift-lab-out"),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn selected(&self, battery: &str) -> bool {
        self.batteries.is_empty() || self.batteries.iter().any(|b| b == battery)
    }

    /// `γ` values, collapsed to `{0}` on the line.
    pub fn gammas_or(&self, default: &[f64]) -> Vec<f64> {
        if self.group == GroupKind::AbelianLine {
            return vec![0.0];
        }
        self.gammas.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn ps_or(&self, default: &[f64]) -> Vec<f64> {
        self.ps.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn alphas_or(&self, default: &[f64]) -> Vec<f64> {
        self.alphas.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn grid_or(&self, default: GridSpec) -> Result<GridSpec> {
        match self.grid {
            Some(g) => g.spec(self.group),
            None => Ok(default),
        }
    }

    /// Checks that do not need any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Parameter(msg));
        let commands: Vec<Command> = match self.command {
            Command::All => vec![Command::Heat, Command::Sobolev, Command::Embed, Command::Counterexample, Command::Pde],
            c => vec![c],
        };
        for b in &self.batteries {
            if !commands.iter().any(|c| c.batteries().contains(&b.as_str())) {
                return bad(format!("unknown battery '{b}' for '{}'", self.command.name()));
            }
        }
        if let Some(g) = self.grid {
            g.spec(self.group)?;
        }
        for (name, values) in [("gamma", &self.gammas), ("p", &self.ps), ("alpha", &self.alphas), ("t", &self.ts)] {
            if let Some(v) = values {
                if v.is_empty() {
                    return bad(format!("--{name} needs at least one value"));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return bad(format!("--{name} values must be finite"));
                }
            }
        }
        if let Some(ps) = &self.ps {
            if let Some(p) = ps.iter().find(|&&p| !(p > 1.0)) {
                return bad(format!("p must exceed 1, got {p}"));
            }
        }
        if let Some(alphas) = &self.alphas {
            if let Some(a) = alphas.iter().find(|&&a| !(a >= 0.0)) {
                return bad(format!("α must be nonnegative, got {a}"));
            }
        }
        if let Some(ts) = &self.ts {
            if let Some(t) = ts.iter().find(|&&t| !(t > 0.0)) {
                return bad(format!("heat times must be positive, got {t}"));
            }
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad(format!("--tau must be positive, got {tau}"));
            }
        }
        if let Some(c) = self.c {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("--c must be positive, got {c}"));
            }
        }
        if self.command == Command::Counterexample {
            if self.group == GroupKind::AbelianLine {
                return bad("the counterexample family lives on ax+b".into());
            }
            if let Some(g) = self.gammas.as_ref().and_then(|v| v.iter().find(|&&g| g == 1.0)) {
                return bad(format!("γ = {g} is the Haar case, where no counterexample exists"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_directory() {
        let mut a = RunConfig::new(Command::Heat);
        let mut b = a.clone();
        b.out = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        a.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn grid_argument() {
        let g = GridArgs::parse("128, 64,6,2.5").unwrap();
        assert_eq!((g.nx, g.ns, g.xmax, g.smax), (128, 64, 6.0, 2.5));
        assert!(GridArgs::parse("1,2,3").is_err());
        assert!(GridArgs::parse("a,2,3,4").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::new(Command::Heat);
        assert!(c.validate().is_ok());
        c.ts = Some(vec![0.5, 0.0]);
        assert!(c.validate().unwrap_err().is_usage());
        let mut c = RunConfig::new(Command::Counterexample);
        c.gammas = Some(vec![0.0, 1.0]);
        assert!(c.validate().is_err());
        let mut c = RunConfig::new(Command::Embed);
        c.batteries = vec!["riesz".into()];
        assert!(c.validate().is_err());
    }
}
