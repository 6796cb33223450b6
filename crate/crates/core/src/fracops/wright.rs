//! The Wright-type probability density `xi_eta` on `(0, inf)` and a
//! quadrature rule for integrals against it.
//!
//! Small arguments use the alternating power series
//! `xi(theta) = 1/(pi eta) sum_{n>=1} (-theta)^{n-1} Gamma(n eta + 1)/n! sin(n pi eta)`.
//! For `theta > 1` the Zolotarev-type integral
//! `xi(theta) = theta^{eta/(1-eta)} / ((1-eta) pi) int_0^pi A(u) exp(-A(u) theta^{1/(1-eta)}) du`
//! with `A(u) = (sin(eta u)/sin u)^{1/(1-eta)} sin((1-eta) u)/sin(eta u)` is used,
//! since the series cancels badly there.

use std::f64::consts::PI;

use super::quadrature::{adaptive_gk15, GaussRule};
use super::special::{ln_gamma, sin_pi};
use super::FractionalOrder;
use crate::error::{Error, Result};

const SERIES_CAP: usize = 500;
const SERIES_THRESHOLD: f64 = 1.0;

/// Density `xi_eta(theta)` for `theta > 0`.
pub fn wright_density(eta: FractionalOrder, theta: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("density argument must be positive, got {theta}")));
    }
    let e = eta.value();
    if theta <= SERIES_THRESHOLD {
        series(e, theta)
    } else {
        integral(e, theta)
    }
}

fn series(e: f64, theta: f64) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut small = 0;
    let lt = theta.ln();
    for n in 1..=SERIES_CAP {
        let nf = n as f64;
        let mag = ((nf - 1.0) * lt + ln_gamma(nf * e + 1.0) - ln_gamma(nf + 1.0)).exp();
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * mag * sin_pi(nf * e);
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            small += 1;
            if small >= 3 {
                return Ok((sum / (PI * e)).max(0.0));
            }
        } else {
            small = 0;
        }
    }
    Err(Error::AccuracyLoss(format!(
        "density series did not converge at theta = {theta} within {SERIES_CAP} terms"
    )))
}

fn integral(e: f64, theta: f64) -> Result<f64> {
    let p = 1.0 / (1.0 - e);
    let x = theta.powf(p);
    let a = |u: f64| -> f64 {
        if u <= 0.0 {
            return e.powf(p) * (1.0 - e) / e;
        }
        let su = u.sin();
        if su <= 0.0 {
            return f64::INFINITY;
        }
        (((e * u).sin() / su).powf(p)) * ((1.0 - e) * u).sin() / (e * u).sin()
    };
    let v = adaptive_gk15(
        |u| {
            let au = a(u);
            if !au.is_finite() {
                return 0.0;
            }
            let arg = au * x;
            if arg > 745.0 {
                0.0
            } else {
                au * (-arg).exp()
            }
        },
        0.0,
        PI,
        1e-300,
        1e-12,
        2000,
    )?;
    Ok((theta.powf(e * p) / ((1.0 - e) * PI) * v).max(0.0))
}

/// Quadrature nodes and density-weighted weights for
/// `int_0^inf f(theta) xi_eta(theta) d theta`.
///
/// Panels are geometric in `theta` and each is mapped through
/// `theta = u / (1 - u)` before applying a Gauss-Legendre rule in `u`.
#[derive(Debug, Clone)]
pub struct DensityRule {
    pub eta: FractionalOrder,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DensityRule {
    pub fn new(eta: FractionalOrder) -> Result<Self> {
        let mut theta_max = 2.0;
        while theta_max * wright_density(eta, theta_max)? >= 1e-22 && theta_max < 1e4 {
            theta_max *= 1.5;
        }
        let mut breaks = vec![0.0, 1e-6];
        while *breaks.last().unwrap() < theta_max {
            let next = (breaks.last().unwrap() * 2.0).min(theta_max);
            breaks.push(next);
        }
        let gl = GaussRule::legendre(16);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in breaks.windows(2) {
            let (ua, ub) = (w[0] / (1.0 + w[0]), w[1] / (1.0 + w[1]));
            for (u, wu) in gl.mapped(ua, ub) {
                let theta = u / (1.0 - u);
                let jac = 1.0 / ((1.0 - u) * (1.0 - u));
                nodes.push(theta);
                weights.push(wu * jac * wright_density(eta, theta)?);
            }
        }
        Ok(Self { eta, nodes, weights })
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::special::gamma;
    use approx::assert_relative_eq;

    fn ord(e: f64) -> FractionalOrder {
        FractionalOrder::new(e).unwrap()
    }

    #[test]
    fn half_order_is_a_half_gaussian() {
        for &t in &[0.01f64, 0.3, 0.99, 1.01, 2.0, 5.0, 9.0] {
            let exact = (-t * t / 4.0).exp() / PI.sqrt();
            assert_relative_eq!(wright_density(ord(0.5), t).unwrap(), exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn branches_agree_at_the_switch() {
        for &e in &[0.3, 2.0 / 3.0, 0.9] {
            let s = series(e, 1.0).unwrap();
            let i = integral(e, 1.0).unwrap();
            assert_relative_eq!(s, i, max_relative = 1e-9);
        }
    }

    #[test]
    fn normalised_with_correct_first_moment() {
        for &e in &[0.3, 0.5, 2.0 / 3.0, 0.9] {
            let rule = DensityRule::new(ord(e)).unwrap();
            assert!((rule.integrate(|_| 1.0) - 1.0).abs() < 1e-6);
            let m1 = rule.integrate(|t| t);
            assert_relative_eq!(m1, 1.0 / gamma(1.0 + e), max_relative = 1e-6);
        }
    }

    #[test]
    fn rejects_non_positive_argument() {
        assert!(wright_density(ord(0.5), 0.0).is_err());
    }
}
