use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state box is empty in component {0}")]
    EmptyBox(usize),
    #[error("invalid system: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("inconsistent LP dimensions: {0}")]
    Dimension(String),
    #[error("variable {index} has invalid bounds [{lo}, {hi}]")]
    Bounds { index: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MilpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("instance has {0} binaries, enumeration is limited to {1}")]
    InstanceTooLarge(usize, usize),
    #[error("LP solver hit its iteration limit at a branch-and-bound node")]
    IterLimit,
    #[error("LP relaxation reported unbounded")]
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LotSizingError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("interval [{alpha}, {beta}] LP returned fractional value {value} for variable {index}")]
    IntegralityViolation {
        alpha: usize,
        beta: usize,
        index: usize,
        value: f64,
    },
    #[error("interval [{alpha}, {beta}] LP ended with status {status}")]
    LpFailure {
        alpha: usize,
        beta: usize,
        status: String,
    },
    #[error("replayed schedule breaks {0}")]
    ReplayViolation(String),
    #[error("schedule is not feasible (status {0})")]
    NoSchedule(String),
    #[error("interval [{alpha}, {beta}] outside [{first}, {last}]")]
    BadInterval {
        alpha: usize,
        beta: usize,
        first: usize,
        last: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    LotSizing(#[from] LotSizingError),
    #[error("controller has no plan at period {0} and no previous plan to fall back on")]
    ControllerInfeasible(usize),
    #[error("percentage error undefined: exact cost is {0}")]
    DivisionByZero(f64),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("no feasible plan: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// 2 for configuration problems, 3 when no feasible plan exists.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Infeasible(_) => 3,
            ExperimentError::Control(ControlError::ControllerInfeasible(_)) => 3,
            ExperimentError::Control(ControlError::Model(_)) => 2,
            _ => 1,
        }
    }
}
