use thiserror::Error;

/// Named properties a coefficient family can be refused for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    NonAnticipativity,
    LinearGrowth,
    SharedLinearGrowth,
    PathLipschitz,
    TerminalBound,
    UniformTerminalBound,
    ConvexAttainableSet,
    MarkovianField,
    Shape,
}

impl Condition {
    pub fn describe(self) -> &'static str {
        match self {
            Condition::NonAnticipativity => "non-anticipativity",
            Condition::LinearGrowth => "linear growth bound",
            Condition::SharedLinearGrowth => "linear growth bound shared by every member of the sequence",
            Condition::PathLipschitz => "path-Lipschitz continuity of the coefficients",
            Condition::TerminalBound => "bounded terminal functional",
            Condition::UniformTerminalBound => "terminal functionals bounded uniformly in n",
            Condition::ConvexAttainableSet => "convexity of the attainable (drift, covariance) set",
            Condition::MarkovianField => "Markovian coefficients and terminal functional",
            Condition::Shape => "matching dimensions across the sequence",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.describe())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation refused ({condition}): {detail}")]
    Validation { condition: Condition, detail: String },

    #[error("budget exceeded: {what} requires {required:e} but the budget is {budget:e}")]
    Budget {
        what: &'static str,
        required: f64,
        budget: f64,
    },

    #[error("non-finite value at {location}")]
    Numeric { location: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(condition: Condition, detail: impl Into<String>) -> Self {
        Error::Validation {
            condition,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
