use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("atoms have different resonant frequencies ({0} vs {1}); equal frequencies are required")]
    UnequalFrequencies(f64, f64),

    #[error("atom positions must be non-decreasing (atom {index} at {position} follows {previous})")]
    UnsortedPositions { index: usize, position: f64, previous: f64 },

    #[error("operation requires all atoms at one position")]
    PositionsNotEqual,

    #[error("step {dt} exceeds a quarter of the shortest delay {min_delay}")]
    StepTooLarge { dt: f64, min_delay: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("history queried at t = {t}, beyond the last stored time {last}")]
    FutureHistory { t: f64, last: f64 },

    #[error("time {t} outside the trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("k-grid under-resolved: dk * t_end = {0:.3} > pi")]
    Aliasing(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is singular at s = {0}")]
    Singular(String),

    #[error("limit did not settle: {0}")]
    Indeterminate(String),

    #[error("rho is not a density matrix: {0}")]
    NotDensity(String),

    #[error("quantity undefined when gamma_eff = 0 (trapped regime)")]
    Trapped,

    #[error("vanishing denominator in steady-state formula")]
    VanishingDenominator,

    #[error("closed form {closed} and extrapolated limit {numeric} disagree")]
    LimitMismatch { closed: f64, numeric: f64 },

    #[error("trajectory {index} blew up at t = {t} (|state| = {norm:.3e})")]
    BlowUp { index: usize, t: f64, norm: f64 },

    #[error("Bloch-ball clipping rate {rate:.4} exceeds the 0.1% budget")]
    ClippingBudget { rate: f64 },

    #[error("series has not converged (last-decade drift {0:.3e})")]
    NotConverged(f64),

    #[error("large-delay generator requires t_end < tau ({t_end} >= {tau})")]
    DelayActive { t_end: f64, tau: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check(cond: bool, name: &'static str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: reason.into() })
    }
}
