//! Gamma-type functions and the Mittag-Leffler family.
//!
//! `E_{a,b}(w)` is summed from its Taylor series for moderate arguments.
//! For `w < -1` and `a < 1` the series suffers cancellation, so the
//! asymptotic expansion or the real-axis integral representation
//! `E_{a,b}(-x) = (1/pi) int_0^inf y^{a-b} e^{-y} [y^a sin(pi(1-b)) + x sin(pi(1-b+a))]
//!                / (y^{2a} + 2 y^a x cos(pi a) + x^2) dy`
//! is used instead.

use std::f64::consts::PI;

use super::quadrature::adaptive_gk15;
use crate::error::{Error, Result};

/// Largest positive argument accepted by the Mittag-Leffler evaluators.
pub const ML_POSITIVE_LIMIT: f64 = 50.0;
/// Below this magnitude the Taylor series is always used.
const SERIES_RADIUS: f64 = 1.0;
const SERIES_MAX_TERMS: usize = 20_000;

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `ln |Gamma(x)|`, valid for negative non-integer arguments too.
pub fn ln_gamma(x: f64) -> f64 {
    if x >= 0.5 {
        statrs::function::gamma::ln_gamma(x)
    } else {
        PI.ln() - sin_pi(x).abs().ln() - statrs::function::gamma::ln_gamma(1.0 - x)
    }
}

pub fn erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x)
}

/// `B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b)` for positive arguments.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// `sin(pi x)` with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).floor();
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r < 0.5 {
        (PI * r).sin()
    } else if r < 1.5 {
        (PI * (1.0 - r)).sin()
    } else {
        -(PI * (2.0 - r)).sin()
    }
}

/// `1 / Gamma(x)`, entire; zero at the non-positive integers.
pub fn inv_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x >= 0.5 {
        if x < 170.0 {
            1.0 / gamma(x)
        } else {
            (-ln_gamma(x)).exp()
        }
    } else {
        // reflection: 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
        let y = 1.0 - x;
        let g = if y < 170.0 { gamma(y) } else { ln_gamma(y).exp() };
        sin_pi(x) * g / PI
    }
}

fn check_params(alpha: f64, beta: f64, w: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::OrderOutOfRange(alpha));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("second parameter must be positive, got {beta}")));
    }
    if !w.is_finite() {
        return Err(Error::InvalidArgument("Mittag-Leffler argument must be finite".into()));
    }
    if w > ML_POSITIVE_LIMIT {
        return Err(Error::AccuracyLoss(format!(
            "argument {w} exceeds the validated range (<= {ML_POSITIVE_LIMIT})"
        )));
    }
    Ok(())
}

/// One-parameter Mittag-Leffler function `E_alpha(w)`.
pub fn mittag_leffler(alpha: f64, w: f64) -> Result<f64> {
    mittag_leffler2(alpha, 1.0, w)
}

/// Two-parameter Mittag-Leffler function `E_{alpha,beta}(w)`.
pub fn mittag_leffler2(alpha: f64, beta: f64, w: f64) -> Result<f64> {
    check_params(alpha, beta, w)?;
    if w == 0.0 {
        return Ok(inv_gamma(beta));
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(w.exp());
    }
    if w > 0.0 || w.abs() <= SERIES_RADIUS {
        return series(alpha, beta, w, |k| inv_gamma(alpha * k as f64 + beta));
    }
    negative_branch(alpha, beta, -w)
}

/// Evaluator with a cached coefficient table, for repeated calls with
/// fixed parameters.
#[derive(Debug, Clone)]
pub struct MittagLeffler {
    alpha: f64,
    beta: f64,
    coeffs: Vec<f64>,
}

impl MittagLeffler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_params(alpha, beta, 0.0)?;
        let n = (60.0 / alpha.min(1.0)).ceil() as usize + 40;
        let coeffs = (0..n).map(|k| inv_gamma(alpha * k as f64 + beta)).collect();
        Ok(Self { alpha, beta, coeffs })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eval(&self, w: f64) -> Result<f64> {
        check_params(self.alpha, self.beta, w)?;
        if w == 0.0 {
            return Ok(self.coeffs[0]);
        }
        if w.abs() <= SERIES_RADIUS {
            let a = self.alpha;
            let b = self.beta;
            let c = &self.coeffs;
            return series(a, b, w, |k| c.get(k).copied().unwrap_or_else(|| inv_gamma(a * k as f64 + b)));
        }
        mittag_leffler2(self.alpha, self.beta, w)
    }
}

/// Neumaier-compensated Taylor sum. Powers of `w` are carried in log form
/// when they would overflow.
fn series<C: Fn(usize) -> f64>(alpha: f64, beta: f64, w: f64, coeff: C) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut small = 0;
    let mut max_term = 0.0f64;
    let lw = w.abs().ln();
    let neg = w < 0.0;
    for k in 0..SERIES_MAX_TERMS {
        let c = coeff(k);
        let term = if k < 120 || w.abs() <= 1.0 {
            c * w.powi(k as i32)
        } else {
            let lg = k as f64 * lw - ln_gamma(alpha * k as f64 + beta);
            if lg > 700.0 {
                return Err(Error::AccuracyLoss(format!("E_{{{alpha},{beta}}}({w}) overflows")));
            }
            let sign = if neg && k % 2 == 1 { -1.0 } else { 1.0 };
            sign * lg.exp()
        };
        if !term.is_finite() {
            return Err(Error::AccuracyLoss(format!("E_{{{alpha},{beta}}}({w}) overflows")));
        }
        max_term = max_term.max(term.abs());
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        let total = sum + comp;
        if term.abs() <= 1e-17 * total.abs() {
            small += 1;
            if small >= 3 {
                if max_term > 1e6 * total.abs() {
                    return Err(Error::AccuracyLoss(format!(
                        "cancellation in the series for E_{{{alpha},{beta}}}({w})"
                    )));
                }
                return Ok(total);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::AccuracyLoss(format!(
        "series for E_{{{alpha},{beta}}}({w}) did not converge in {SERIES_MAX_TERMS} terms"
    )))
}

/// `E_{alpha,beta}(-x)` for `x > 1`.
fn negative_branch(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    if alpha >= 1.0 {
        // no integral representation on the negative axis; series only
        if x <= 5.0 {
            return series(alpha, beta, -x, |k| inv_gamma(alpha * k as f64 + beta));
        }
        return Err(Error::AccuracyLoss(format!(
            "E_{{{alpha},{beta}}}(-{x}) outside the validated range for alpha >= 1"
        )));
    }
    if let Some(v) = asymptotic(alpha, beta, x) {
        return Ok(v);
    }
    if beta > 1.0 {
        // E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z
        let lower = negative_branch(alpha, beta - alpha, x)?;
        return Ok((lower - inv_gamma(beta - alpha)) / (-x));
    }
    integral_representation(alpha, beta, x)
}

/// `-sum_{k>=1} (-x)^{-k} / Gamma(beta - alpha k)`, accepted only when the
/// smallest term drops below double-precision resolution.
fn asymptotic(alpha: f64, beta: f64, x: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut small = 0;
    let z = -x;
    for k in 1..400 {
        let arg = beta - alpha * k as f64;
        if arg <= 0.0 && (arg - arg.round()).abs() < 1e-12 {
            // pole of Gamma: the coefficient vanishes
            continue;
        }
        let term = -inv_gamma(arg) * z.powi(-(k as i32));
        if !term.is_finite() {
            return None;
        }
        if term.abs() > prev {
            return None;
        }
        prev = term.abs();
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            small += 1;
            if small >= 2 {
                return Some(sum);
            }
        } else {
            small = 0;
        }
    }
    None
}

fn integral_representation(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    let s1 = sin_pi(1.0 - beta);
    let s2 = sin_pi(1.0 - beta + alpha);
    let c = (PI * alpha).cos();
    let kernel = |y: f64| -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let ya = y.powf(alpha);
        (-y).exp() * (ya * s1 + x * s2) / (ya * ya + 2.0 * ya * c * x + x * x) / PI
    };
    let ymax: f64 = 60.0;
    let value = if alpha - beta < 0.0 {
        // y = v^p with p = 1/(1 + alpha - beta) absorbs the y^{alpha - beta} factor
        let gap = 1.0 + alpha - beta;
        let p = 1.0 / gap;
        adaptive_gk15(|v| p * kernel(v.powf(p)), 0.0, ymax.powf(gap), 1e-300, 1e-13, 4000)?
    } else {
        adaptive_gk15(|y| y.powf(alpha - beta) * kernel(y), 0.0, ymax, 1e-300, 1e-13, 4000)?
    };
    Ok(value)
}
