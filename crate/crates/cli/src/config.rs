//! Experiment configuration: a TOML document validated into
//! [`ExperimentConfig`].

use std::fmt;
use std::path::PathBuf;

use colht::exponent::{Cardinalities, SearchConfig};
use colht::protocol::Deltas;
use colht::JointPmf;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the total mass of an input matrix.
const MATRIX_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exponent,
    Independence,
    Unidirectional,
    ZeroRate,
    Simulate,
    OracleAudit,
    ConverseAudit,
    IdentityAudit,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Exponent => "exponent",
            Mode::Independence => "independence",
            Mode::Unidirectional => "unidirectional",
            Mode::ZeroRate => "zero-rate",
            Mode::Simulate => "simulate",
            Mode::OracleAudit => "oracle-audit",
            Mode::ConverseAudit => "converse-audit",
            Mode::IdentityAudit => "identity-audit",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Table,
    Csv,
    Jsonl,
}

/// Where the simulated protocol's channel stack comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackSource {
    /// Best stack of the exponent search at the configured rate.
    #[default]
    Optimized,
    /// Dirichlet-random stack from the master seed.
    Random,
}

/// Typicality slacks; unset entries follow the defaults for each `n`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaConfig {
    pub delta: Option<f64>,
    pub delta_b: Option<f64>,
    pub delta_final: Option<f64>,
}

impl DeltaConfig {
    pub fn resolve(&self, n: usize) -> Result<Deltas, ConfigError> {
        let base = self.delta.unwrap_or_else(|| Deltas::default_for(n).delta);
        let d = Deltas {
            delta: base,
            delta_b: self.delta_b.unwrap_or(2.0 * base),
            delta_final: self.delta_final.unwrap_or(3.0 * base),
        };
        d.validate().map_err(|e| invalid("deltas", e.to_string()))?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// A validated experiment. Matrices are rows = x, columns = y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    pub h0: Option<Vec<Vec<f64>>>,
    /// Defaults to the product of the H0 marginals where a mode needs it.
    pub h1: Option<Vec<Vec<f64>>>,
    /// Single rate; merged into `rates`.
    pub rate: Option<f64>,
    #[serde(default)]
    pub rates: Vec<f64>,
    #[serde(default = "one")]
    pub rounds: usize,
    /// `(|U_k|, |V_k|)` per round.
    pub cardinalities: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub n: Vec<usize>,
    pub trials: Option<u64>,
    #[serde(default)]
    pub deltas: DeltaConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub stack: StackSource,
    /// Configurations per blocklength in `oracle-audit`.
    pub audits: Option<usize>,
    /// Random codes in `converse-audit`.
    pub codes: Option<usize>,
    /// Random joints in `identity-audit`.
    pub joints: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> usize {
    1
}

/// Parsed config plus the unknown keys that were tolerated in lax mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

/// Parse and validate. Unknown keys are errors when `strict`, warnings
/// otherwise. `mode` overrides the document's mode (it must agree when both
/// are given).
pub fn parse_config(text: &str, strict: bool, mode: Option<Mode>) -> Result<Parsed, ConfigError> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let mut config: ExperimentConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
    if strict && !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    let warnings = unknown.into_iter().map(|k| format!("ignoring unknown key `{k}`")).collect();
    match (config.mode, mode) {
        (Some(a), Some(b)) if a != b => {
            return Err(invalid("mode", format!("document says {a} but {b} was requested")))
        }
        (None, Some(b)) => config.mode = Some(b),
        _ => {}
    }
    config.validate()?;
    Ok(Parsed { config, warnings })
}

pub fn read_config(path: &std::path::Path, strict: bool, mode: Option<Mode>) -> Result<Parsed, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text, strict, mode)
}

/// Joint over `(X, Y)` from a row-major matrix, checking the invariants by
/// name.
pub fn matrix_joint(field: &str, rows: &[Vec<f64>]) -> Result<JointPmf, ConfigError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(invalid(field, "Empty"));
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(invalid(field, "ragged rows"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(field, "NegativeMass"));
    }
    let total: f64 = rows.iter().flatten().sum();
    if (total - 1.0).abs() > MATRIX_TOL {
        return Err(invalid(field, format!("NotNormalized (sum {total})")));
    }
    JointPmf::from_matrix(rows, "X", "Y").map_err(|e| invalid(field, e.to_string()))
}

impl ExperimentConfig {
    pub fn mode(&self) -> Mode {
        self.mode.expect("validated configs carry a mode")
    }

    pub fn h0_joint(&self) -> Result<JointPmf, ConfigError> {
        matrix_joint("h0", self.h0.as_deref().ok_or_else(|| invalid("h0", "missing h0"))?)
    }

    /// H1 joint, defaulting to the product of the H0 marginals.
    pub fn h1_joint(&self) -> Result<JointPmf, ConfigError> {
        match &self.h1 {
            Some(m) => matrix_joint("h1", m),
            None => Ok(self.h0_joint()?.product_of_marginals()),
        }
    }

    /// `rate` and `rates` merged.
    pub fn rate_grid(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.rate.into_iter().chain(self.rates.iter().copied()).collect();
        r.dedup();
        r
    }

    pub fn cards(&self) -> Option<Cardinalities> {
        self.cardinalities.clone().map(Cardinalities)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mode = self.mode.ok_or_else(|| invalid("mode", "missing mode"))?;
        let needs_h0 = !matches!(mode, Mode::IdentityAudit);
        if needs_h0 {
            let h0 = self.h0_joint()?;
            if let Some(m) = &self.h1 {
                let h1 = matrix_joint("h1", m)?;
                if h1.sizes() != h0.sizes() {
                    return Err(invalid("h1", "shape differs from h0"));
                }
            }
        }
        if mode == Mode::Exponent && self.h1.is_none() {
            return Err(invalid("h1", "missing h1"));
        }
        if let Some(r) = self.rate_grid().iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(invalid("rates", format!("InvalidRate {r}")));
        }
        let needs_rates = matches!(mode, Mode::Exponent | Mode::Independence | Mode::Unidirectional)
            || (mode == Mode::Simulate && self.stack == StackSource::Optimized);
        if needs_rates && self.rate_grid().is_empty() {
            return Err(invalid("rates", "missing rate or rates"));
        }
        if mode == Mode::Simulate && self.stack == StackSource::Optimized && self.rate_grid().len() != 1 {
            return Err(invalid("rates", "simulate takes a single rate"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if let Some(c) = &self.cardinalities {
            if c.len() != self.rounds || c.iter().any(|&(u, v)| u == 0 || v == 0) {
                return Err(invalid(
                    "cardinalities",
                    "need one pair of positive sizes per round",
                ));
            }
        }
        if matches!(mode, Mode::Simulate | Mode::OracleAudit) && self.n.is_empty() {
            return Err(invalid("n", "missing n-list"));
        }
        if self.n.contains(&0) {
            return Err(invalid("n", "blocklengths must be at least 1"));
        }
        if matches!(mode, Mode::Simulate | Mode::OracleAudit) && self.trials.is_none() {
            return Err(invalid("trials", "missing trials"));
        }
        if mode == Mode::ZeroRate && !self.n.is_empty() {
            // one-bit scheme needs a full-support H1
            let h1 = self.h1_joint()?;
            if h1.weights().iter().any(|&w| w <= 0.0) {
                return Err(invalid("h1", "one-bit scheme needs full support"));
            }
        }
        for &n in &self.n {
            self.deltas.resolve(n)?;
        }
        self.search.validate().map_err(|e| invalid("search", e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mode = "zero-rate"
h0 = [[0.4, 0.1], [0.15, 0.35]]
h1 = [[0.1, 0.2], [0.2, 0.5]]
"#;

    #[test]
    fn minimal_zero_rate() {
        let p = parse_config(MINIMAL, true, None).unwrap();
        assert_eq!(p.config.mode(), Mode::ZeroRate);
        assert!(p.warnings.is_empty());
        assert_eq!(p.config.rounds, 1);
    }

    #[test]
    fn unnormalized_matrix() {
        let text = MINIMAL.replace("0.35]]\nh1", "0.33]]\nh1");
        let e = parse_config(&text, true, None).unwrap_err();
        assert!(matches!(&e, ConfigError::Validation { field, reason } if field == "h0" && reason.starts_with("NotNormalized")), "{e}");
    }

    #[test]
    fn simulate_needs_blocklengths() {
        let text = "mode = \"simulate\"\nstack = \"random\"\ntrials = 10\nh0 = [[0.5, 0.0], [0.0, 0.5]]\n";
        let e = parse_config(text, true, None).unwrap_err();
        assert_eq!(e, invalid("n", "missing n-list"));
    }

    #[test]
    fn unknown_keys_strict_and_lax() {
        let text = format!("{MINIMAL}typo = 3\n[search]\nrestart = 4\n");
        match parse_config(&text, true, None).unwrap_err() {
            ConfigError::UnknownKeys(k) => assert_eq!(k, ["typo", "search.restart"]),
            e => panic!("{e}"),
        }
        let p = parse_config(&text, false, None).unwrap();
        assert_eq!(p.warnings.len(), 2);
    }

    #[test]
    fn mode_conflict_and_override() {
        assert!(parse_config(MINIMAL, true, Some(Mode::Exponent)).is_err());
        let text = MINIMAL.replace("mode = \"zero-rate\"\n", "rates = [0.5]\n");
        assert_eq!(parse_config(&text, true, Some(Mode::Exponent)).unwrap().config.mode(), Mode::Exponent);
    }

    #[test]
    fn parse_errors_carry_location() {
        let e = parse_config("mode = \"exponent\"\nh0 = [[0.5, 0.5]\n", true, None).unwrap_err();
        let ConfigError::Parse(msg) = e else { panic!() };
        assert!(msg.contains("line"), "{msg}");
    }
}
