use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Modelling assumption required before extinction classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// `0 < gamma < inf`.
    A1,
    /// `P(N = 1) < 1` and `P(Z_1 = 1) < 1`.
    A2,
    /// Some `p_k P(X^(j,k) >= 2) > 0`.
    A3,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::A1 => "(A1)",
            Assumption::A2 => "(A2)",
            Assumption::A3 => "(A3)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed law or model: unnormalized probabilities, duplicate atoms, missing sharing laws.
    #[error("{module}: structural error: {detail}")]
    Structural { module: &'static str, detail: String },

    #[error("{module}: assumption {assumption} violated: {detail}")]
    Assumption {
        module: &'static str,
        assumption: Assumption,
        detail: String,
    },

    /// Enumeration exceeded the atom budget.
    #[error("{module}: capacity exceeded: {detail}")]
    Capacity { module: &'static str, detail: String },

    /// An exact recursion lost too much probability mass above its state cap.
    #[error("{module}: escaped mass {escaped:.3e} exceeds limit {limit} (raise the cap): {detail}")]
    EscapedMass {
        module: &'static str,
        escaped: f64,
        limit: f64,
        detail: String,
    },

    #[error("{module}: invalid argument: {detail}")]
    InvalidArgument { module: &'static str, detail: String },
}

impl Error {
    pub(crate) fn structural(module: &'static str, detail: impl Into<String>) -> Self {
        Error::Structural {
            module,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(module: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            module,
            detail: detail.into(),
        }
    }

    pub(crate) fn capacity(module: &'static str, detail: impl Into<String>) -> Self {
        Error::Capacity {
            module,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
