//! The invertible function family `f` used between layers, together with
//! `f⁻¹` and the derivative of `f⁻¹` needed by the joint update rules.
//!
//! Each member maps `[0, ∞)` onto itself, is strictly increasing, and has a
//! non-negative inverse derivative, which is what keeps the multiplicative
//! updates sign-preserving.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::matrix::NonNegMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    /// `f(x) = x`; the degenerate baseline.
    Identity,
    /// `f(x) = x^gamma` with `gamma` in `(0, 1]`.
    Power { gamma: f64 },
    /// `f(x) = ln(1 + x)`.
    Log1p,
}

impl Nonlinearity {
    pub fn power(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!(
                "power nonlinearity requires gamma in (0, 1], got {gamma}"
            )));
        }
        Ok(Nonlinearity::Power { gamma })
    }

    fn f(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::Power { gamma } => x.powf(*gamma),
            Nonlinearity::Log1p => x.ln_1p(),
        }
    }

    fn f_inv(&self, y: f64) -> f64 {
        match self {
            Nonlinearity::Identity => y,
            Nonlinearity::Power { gamma } => y.powf(1.0 / *gamma),
            Nonlinearity::Log1p => y.exp_m1(),
        }
    }

    fn f_inv_deriv(&self, y: f64) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            // d/dy y^(1/g) = (1/g) y^(1/g - 1); finite on [0, ∞) for g in (0, 1].
            Nonlinearity::Power { gamma } => {
                let p = 1.0 / *gamma;
                p * y.powf(p - 1.0)
            }
            Nonlinearity::Log1p => y.exp(),
        }
    }

    /// Entrywise `f`.
    pub fn apply_f(&self, x: &NonNegMatrix) -> NonNegMatrix {
        NonNegMatrix::from_array_unchecked(x.as_array().mapv(|v| self.f(v)))
    }

    /// Entrywise `f⁻¹`.
    pub fn apply_f_inv(&self, y: &NonNegMatrix) -> NonNegMatrix {
        NonNegMatrix::from_array_unchecked(y.as_array().mapv(|v| self.f_inv(v)))
    }

    /// Entrywise derivative of `f⁻¹`. Non-finite values (possible only for
    /// members outside the supported parameter range) are clamped to `1/eps`.
    pub fn apply_f_inv_deriv(&self, y: &NonNegMatrix, eps: f64) -> NonNegMatrix {
        self.apply_f_inv_deriv_counted(y, eps).0
    }

    /// Like [`apply_f_inv_deriv`](Self::apply_f_inv_deriv) but also reports
    /// how many entries were clamped.
    pub fn apply_f_inv_deriv_counted(&self, y: &NonNegMatrix, eps: f64) -> (NonNegMatrix, u64) {
        let mut clamped = 0u64;
        let out = y.as_array().mapv(|v| {
            let d = self.f_inv_deriv(v);
            if d.is_finite() {
                d
            } else {
                clamped += 1;
                1.0 / eps
            }
        });
        (NonNegMatrix::from_array_unchecked(out), clamped)
    }

    /// Entrywise `f⁻¹` applied to a raw array; used by training internals.
    pub(crate) fn f_inv_array(&self, y: &Array2<f64>) -> Array2<f64> {
        y.mapv(|v| self.f_inv(v))
    }

    /// Entrywise `(f⁻¹)'` on a raw array, clamping non-finite values to
    /// `1/eps` and counting the clamps.
    pub(crate) fn f_inv_deriv_array(&self, y: &Array2<f64>, eps: f64) -> (Array2<f64>, u64) {
        let mut clamped = 0u64;
        let out = y.mapv(|v| {
            let d = self.f_inv_deriv(v);
            if d.is_finite() {
                d
            } else {
                clamped += 1;
                1.0 / eps
            }
        });
        (out, clamped)
    }

    pub(crate) fn f_scalar(&self, x: f64) -> f64 {
        self.f(x)
    }
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity::Power { gamma: 0.5 }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Identity => write!(f, "identity"),
            Nonlinearity::Power { gamma } => write!(f, "power:{gamma}"),
            Nonlinearity::Log1p => write!(f, "log1p"),
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    /// Parses the config/CLI spelling: `identity`, `log1p`, or `power:<gamma>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "identity" => Ok(Nonlinearity::Identity),
            "log1p" => Ok(Nonlinearity::Log1p),
            "power" => Ok(Nonlinearity::default()),
            _ => {
                if let Some(rest) = s.strip_prefix("power:") {
                    let gamma: f64 = rest.parse().map_err(|_| {
                        Error::Config(format!("cannot parse power gamma from {rest:?}"))
                    })?;
                    Nonlinearity::power(gamma)
                } else {
                    Err(Error::Config(format!(
                        "unknown nonlinearity {s:?}; expected identity, power:<gamma>, or log1p"
                    )))
                }
            }
        }
    }
}
