//! Gauss rules and an adaptive Gauss-Kronrod integrator.
//!
//! Gauss-Jacobi nodes come from the Golub-Welsch eigenvalue problem for the
//! Jacobi matrix of the weight `(1 - x)^alpha (1 + x)^beta` on `[-1, 1]`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};

use super::special::ln_gamma;
use crate::error::{Error, Result};

/// Nodes and weights of a Gauss rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl GaussRule {
    /// `n`-point Gauss-Legendre rule.
    pub fn legendre(n: usize) -> Self {
        Self::jacobi(n, 0.0, 0.0).expect("Legendre parameters are always valid")
    }

    /// `n`-point Gauss-Jacobi rule for the weight `(1 - x)^alpha (1 + x)^beta`.
    pub fn jacobi(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("Gauss rule needs at least one node".into()));
        }
        if !(alpha > -1.0 && beta > -1.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Jacobi exponents must exceed -1 (alpha = {alpha}, beta = {beta})"
            )));
        }
        let ab = alpha + beta;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let diag = if k == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                let s = 2.0 * kf + ab;
                (beta * beta - alpha * alpha) / (s * (s + 2.0))
            };
            jac[(k, k)] = diag;
            if k + 1 < n {
                let j = kf + 1.0;
                let s = 2.0 * j + ab;
                // the (j + ab) factor cancels against (s - 1) when j = 1
                let off2 = if k == 0 {
                    4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * j * (j + alpha) * (j + beta) * (j + ab) / (s * s * (s + 1.0) * (s - 1.0))
                };
                let off = off2.sqrt();
                jac[(k, k + 1)] = off;
                jac[(k + 1, k)] = off;
            }
        }
        let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
            - ln_gamma(ab + 2.0))
        .exp();
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            alpha,
            beta,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Map the rule onto `[a, b]`. Returned weights include the Jacobian and
    /// the factor `((b - a) / 2)^(alpha + beta)` so that
    /// `sum w_i f(x_i) ~ int_a^b (b - s)^alpha (s - a)^beta f(s) ds`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let scale = half.powf(1.0 + self.alpha + self.beta);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (a + half * (x + 1.0), w * scale))
    }

    /// `int_a^b (b - s)^alpha (s - a)^beta f(s) ds`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(s, w)| w * f(s)).sum()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive 15-point Gauss-Kronrod quadrature on a finite interval.
///
/// Stops when the summed error estimate drops below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive_gk15<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let mut total = v;
    let mut total_err = e;
    let mut count = 1;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(Error::QuadratureFailure("non-finite integrand".into()));
        }
        if count >= max_segments {
            // roundoff floor: accept when the remaining error is at the noise level
            if total_err <= 1e3 * f64::EPSILON * total.abs().max(abs_tol) {
                break;
            }
            return Err(Error::QuadratureFailure(format!(
                "adaptive rule exhausted {max_segments} segments (error {total_err:.2e})"
            )));
        }
        let seg = heap.pop().expect("heap never empty");
        let m = 0.5 * (seg.a + seg.b);
        let (v1, e1) = gk15(&mut f, seg.a, m);
        let (v2, e2) = gk15(&mut f, m, seg.b);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.err;
        heap.push(Segment { a: seg.a, b: m, value: v1, err: e1 });
        heap.push(Segment { a: m, b: seg.b, value: v2, err: e2 });
        count += 1;
        // refresh the running sum to avoid drift from repeated updates
        if count % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.err).sum();
        }
    }
    Ok(heap.iter().map(|s| s.value).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::legendre(5);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(9));
        assert_relative_eq!(v, 2f64.powi(10) / 10.0, max_relative = 1e-13);
    }

    #[test]
    fn jacobi_moments() {
        // int_0^1 (1 - s)^{-1/2} s^{1/3} ds = B(1/2, 4/3)
        let rule = GaussRule::jacobi(8, -0.5, 1.0 / 3.0).unwrap();
        let v = rule.integrate(0.0, 1.0, |_| 1.0);
        let exact = (ln_gamma(0.5) + ln_gamma(4.0 / 3.0) - ln_gamma(0.5 + 4.0 / 3.0)).exp();
        assert_relative_eq!(v, exact, max_relative = 1e-13);
    }

    #[test]
    fn jacobi_with_exponents_summing_to_minus_one() {
        let rule = GaussRule::jacobi(6, -0.4, -0.6).unwrap();
        let v = rule.integrate(0.0, 1.0, |s| s * s);
        // int (1-s)^{-0.4} s^{1.4} ds = B(0.6, 2.4)
        let exact = (ln_gamma(0.6) + ln_gamma(2.4) - ln_gamma(3.0)).exp();
        assert_relative_eq!(v, exact, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(GaussRule::jacobi(4, -1.0, 0.0).is_err());
        assert!(GaussRule::jacobi(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn adaptive_handles_peaks() {
        let v = adaptive_gk15(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-14, 1e-12, 500).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert_relative_eq!(v, exact, max_relative = 1e-11);
    }
}
