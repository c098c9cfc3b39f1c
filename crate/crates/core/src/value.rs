use std::fmt;

use serde::{Serialize, Serializer};

/// A log-scale quantity that may be the logarithm of zero.
///
/// Infeasible empirical-likelihood problems and parameters outside the prior
/// support produce [`LogValue::LogZero`]. It serialises as `null` so that no
/// raw infinity ever reaches an output file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LogValue {
    Finite(f64),
    LogZero,
}

impl LogValue {
    /// Maps `-inf` to `LogZero`. NaN and `+inf` are also mapped to `LogZero`
    /// so that callers never propagate them.
    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            LogValue::Finite(v)
        } else {
            LogValue::LogZero
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, LogValue::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            LogValue::Finite(v) => Some(v),
            LogValue::LogZero => None,
        }
    }

    /// Raw float with `LogZero` as negative infinity, for arithmetic only.
    pub fn to_f64(self) -> f64 {
        match self {
            LogValue::Finite(v) => v,
            LogValue::LogZero => f64::NEG_INFINITY,
        }
    }
}

impl std::ops::Add for LogValue {
    type Output = LogValue;

    fn add(self, rhs: LogValue) -> LogValue {
        match (self, rhs) {
            (LogValue::Finite(a), LogValue::Finite(b)) => LogValue::from_f64(a + b),
            _ => LogValue::LogZero,
        }
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogValue::Finite(v) => write!(f, "{v}"),
            LogValue::LogZero => f.write_str("log(0)"),
        }
    }
}

impl Serialize for LogValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LogValue::Finite(v) => s.serialize_f64(*v),
            LogValue::LogZero => s.serialize_none(),
        }
    }
}
