use std::fmt;

use thiserror::Error;

use crate::local_poly::Side;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Identifies one estimation arm (treatment status, cutoff group, side of
/// the group's own cutoff) in error messages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmLabel {
    pub treated: Option<bool>,
    pub cutoff: f64,
    pub side: Side,
}

impl fmt::Display for ArmLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.treated {
            Some(true) => "1",
            Some(false) => "0",
            None => "any",
        };
        let side = match self.side {
            Side::Left => "x < c",
            Side::Right => "x >= c",
            Side::All => "all x",
        };
        write!(f, "(d={d}, c={}, {side})", self.cutoff)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("insufficient local data at x0={x0} with bandwidth {bandwidth} (effective n={n_eff})")]
    InsufficientLocalData { x0: f64, bandwidth: f64, n_eff: usize },

    #[error("degenerate density estimate {density:e} at x0={x0}")]
    DegenerateDensity { x0: f64, density: f64 },

    #[error("bandwidth pilot fit failed: {reason} (fallback bandwidth {fallback})")]
    PilotFailure { reason: String, fallback: f64 },

    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),

    #[error("no observations in required arm {0}")]
    MissingArm(ArmLabel),

    #[error("evaluation point {x} outside the open interval ({lo}, {hi})")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },

    #[error("estimated take-up {p_hat} below floor {p_min} at x={x}")]
    WeakTakeup { x: f64, p_hat: f64, p_min: f64 },

    #[error("non-finite or negative variance at x0={x0}")]
    InvalidVariance { x0: f64 },

    #[error("bootstrap unstable: {discarded} of {replications} replications discarded")]
    BootstrapInstability { discarded: usize, replications: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Input { line: usize, message: String },

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("line {line}: cutoff label {value} does not match any configured cutoff")]
    UnknownCutoff { line: usize, value: f64 },

    #[error("one-sided compliance violated (treated below cutoff) on lines {}", format_lines(.lines))]
    ComplianceViolation { lines: Vec<usize> },

    #[error("sharp assignment violated (d != 1{{x >= c}}) on lines {}", format_lines(.lines))]
    SharpAssignmentViolation { lines: Vec<usize> },

    #[error("monte carlo harness: {failed} of {reps} repetitions failed; first error: {first}")]
    HarnessFailure { failed: usize, reps: usize, first: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_lines(lines: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s = lines.iter().take(SHOWN).map(|l| l.to_string()).collect::<Vec<_>>().join(", ");
    if lines.len() > SHOWN {
        s.push_str(&format!(" and {} more", lines.len() - SHOWN));
    }
    s
}

impl Error {
    /// Short machine-readable tag used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidKernel(_) => "invalid_kernel",
            Error::InsufficientLocalData { .. } => "insufficient_local_data",
            Error::DegenerateDensity { .. } => "degenerate_density",
            Error::PilotFailure { .. } => "pilot_failure",
            Error::InvalidBandwidth(_) => "invalid_bandwidth",
            Error::MissingArm(_) => "missing_arm",
            Error::OutsideDomain { .. } => "outside_domain",
            Error::WeakTakeup { .. } => "weak_takeup",
            Error::InvalidVariance { .. } => "invalid_variance",
            Error::BootstrapInstability { .. } => "bootstrap_instability",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Input { .. } => "input",
            Error::MissingColumn(_) => "missing_column",
            Error::UnknownCutoff { .. } => "unknown_cutoff",
            Error::ComplianceViolation { .. } => "compliance_violation",
            Error::SharpAssignmentViolation { .. } => "sharp_assignment_violation",
            Error::HarnessFailure { .. } => "harness_failure",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
