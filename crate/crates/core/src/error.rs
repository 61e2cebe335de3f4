use thiserror::Error;

pub type Result<T> = std::result::Result<T, TailError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The model carries a modifier for which no auxiliary function is tabulated.
    #[error("no closed-form auxiliary function for {0}")]
    NoClosedFormAuxiliary(String),

    #[error("auxiliary function does not diverge: {0}")]
    AuxiliaryNotDiverging(String),

    /// Joint survival requested for a kind without a closed form.
    #[error("unsupported joint kind for closed-form evaluation: {0}")]
    UnsupportedKind(String),

    #[error("tail ratio did not stabilise on probe grid {probes:?}: ratios {ratios:?}")]
    NonStabilizingRatio { probes: Vec<f64>, ratios: Vec<f64> },

    #[error("model {index} has a heavier tail than the leading model (ratios {ratios:?})")]
    HeavierLaterTail { index: usize, ratios: Vec<f64> },

    #[error("model {index} has vanishing tail ratio; linear-combination recipe needs c_i in (0, inf)")]
    ZeroTailRatio { index: usize },

    #[error("infeasible constraint: {0}")]
    InfeasibleConstraint(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),
}

impl From<serde_json::Error> for TailError {
    fn from(e: serde_json::Error) -> Self {
        TailError::Config(e.to_string())
    }
}
