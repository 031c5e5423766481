use thiserror::Error;

use crate::qubit::{BlochState, ControlInput};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain where the quantity is defined.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// Time requested outside a tabulated range.
    #[error("time {t} outside table range [0, {t_max}]")]
    Range { t: f64, t_max: f64 },

    #[error("invalid {field}: {detail}")]
    Validation { field: &'static str, detail: String },

    #[error("grid of {requested} samples exceeds the budget of {available}")]
    Resource { requested: usize, available: usize },

    #[error("integration failed at t={t}: state {state:?}, control {control:?}: {reason}")]
    Integration {
        t: f64,
        state: BlochState,
        control: ControlInput,
        reason: String,
    },

    #[error("control policy failed at t={t}: {reason}")]
    Policy { t: f64, reason: String },

    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn validation(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Validation {
            field,
            detail: detail.into(),
        }
    }
}
