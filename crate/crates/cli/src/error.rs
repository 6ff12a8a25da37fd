use ss_yield_core::Error;

/// Hard failures, one variant per exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Condition(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Condition(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Simulation(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Condition(_) => "condition",
            CliError::Numeric(_) => "numeric",
            CliError::Simulation(_) => "simulation",
        }
    }

    pub fn from_core(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter(_)
            | Error::OutOfRegion { .. }
            | Error::NotApplicable(_)
            | Error::Unsupported(_)
            | Error::MissingOptimum(_) => CliError::Config(msg),
            Error::NondegeneracyViolation { .. }
            | Error::ClassificationMismatch { .. }
            | Error::IntegrabilityFailure { .. } => CliError::Condition(msg),
            Error::InconclusiveIntegral { .. }
            | Error::StencilOutOfDomain { .. }
            | Error::NonFiniteIntegrand { .. }
            | Error::DivergentTail { .. }
            | Error::AllStartsFailed => CliError::Numeric(msg),
            Error::StateEscapedDomain { .. } => CliError::Simulation(msg),
        }
    }

    /// Mapping inside a simulation: anything that is not a bad input is a
    /// simulation failure.
    pub fn from_sim(e: Error) -> Self {
        match CliError::from_core(e) {
            CliError::Numeric(m) | CliError::Condition(m) => CliError::Simulation(m),
            other => other,
        }
    }
}
