//! Named test integrands.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Builtin {
    One,
    T,
    T2,
    Abs,
    Sin,
    /// `1/(1 + 25t²)`
    Runge,
}

pub const INTEGRAND_NAMES: [&str; 6] = ["one", "t", "t2", "abs", "sin", "runge"];

impl Builtin {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Builtin::One => 1.0,
            Builtin::T => t,
            Builtin::T2 => t * t,
            Builtin::Abs => t.abs(),
            Builtin::Sin => t.sin(),
            Builtin::Runge => 1.0 / (1.0 + 25.0 * t * t),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::One => "one",
            Builtin::T => "t",
            Builtin::T2 => "t2",
            Builtin::Abs => "abs",
            Builtin::Sin => "sin",
            Builtin::Runge => "runge",
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "one" => Builtin::One,
            "t" => Builtin::T,
            "t2" => Builtin::T2,
            "abs" => Builtin::Abs,
            "sin" => Builtin::Sin,
            "runge" => Builtin::Runge,
            other => {
                return Err(Error::Parameter(format!(
                    "unknown integrand `{other}`; accepted names are {}",
                    INTEGRAND_NAMES.join(", ")
                )))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_back() {
        for name in INTEGRAND_NAMES {
            assert_eq!(name.parse::<Builtin>().unwrap().name(), name);
        }
        let err = "cos".parse::<Builtin>().unwrap_err().to_string();
        assert!(err.contains("runge"));
        assert_eq!(Builtin::Runge.eval(0.2), 0.5);
    }
}
