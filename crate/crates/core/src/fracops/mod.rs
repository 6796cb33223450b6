//! Fractional-calculus primitives: special functions, the Wright density,
//! weakly singular quadrature and Riemann-Liouville operators on sampled data.

pub mod calculus;
pub mod quadrature;
pub mod special;
pub mod wright;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calculus::{rl_derivative, rl_integral, singular_quad, QuadratureKind, QuadratureRule, SampledFunction};
pub use special::{beta, gamma, inv_gamma, ln_gamma, mittag_leffler, mittag_leffler2, MittagLeffler};
pub use wright::{wright_density, DensityRule};

/// Order `eta` with `0 < eta < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(eta: f64) -> Result<Self> {
        if eta > 0.0 && eta < 1.0 {
            Ok(Self(eta))
        } else {
            Err(Error::OrderOutOfRange(eta))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FractionalOrder {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FractionalOrder> for f64 {
    fn from(o: FractionalOrder) -> f64 {
        o.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_bounds_are_strict() {
        assert!(FractionalOrder::new(0.0).is_err());
        assert!(FractionalOrder::new(1.0).is_err());
        assert!(FractionalOrder::new(f64::NAN).is_err());
        assert_eq!(FractionalOrder::new(0.25).unwrap().value(), 0.25);
    }
}
