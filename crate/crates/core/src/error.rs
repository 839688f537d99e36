use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A trial record or parameter file failed to parse. `field` names the
    /// offending key.
    #[error("parse error in field `{field}`: {msg}")]
    Parse { field: String, msg: String },

    #[error("unsorted timetags at index {index}")]
    UnsortedTimetags { index: usize },

    #[error("non-finite timetag at index {index}")]
    NonFiniteTimetag { index: usize },

    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParameter { name: &'static str, msg: String },

    /// A combinator or operation was applied outside its precondition.
    #[error("{op}: precondition violated: {msg}")]
    Precondition { op: &'static str, msg: String },

    #[error("outcome space too large for enumeration: {size} assignments exceeds bound {bound}")]
    SpaceTooLarge { size: u128, bound: u128 },

    #[error("no violation achievable at efficiency {efficiency} (best CHSH value {best})")]
    NoViolation { efficiency: f64, best: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("test factor {candidate} evaluated negative ({value}) on trial {trial}")]
    NegativeTestFactor {
        candidate: usize,
        trial: usize,
        value: f64,
    },

    #[error("settings class {0} has no trials")]
    EmptySettingsClass(crate::trial::SettingsPair),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            msg: msg.into(),
        }
    }

    pub(crate) fn precondition(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Precondition {
            op,
            msg: msg.into(),
        }
    }
}
