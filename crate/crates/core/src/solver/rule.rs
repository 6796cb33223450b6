//! Product-integration weights for
//! `int_p^{s_i} (s_i - s)^{eta-1} T_eta(s_i - s) (s - p)^{-omega} G(s) ds`
//! with `G` piecewise linear on the nodes `p = s_0 < s_1 < ... < s_N`.

use crate::error::Result;
use crate::fracops::calculus::split_cell;
use crate::fracops::quadrature::GaussRule;
use crate::operators::{kernel_head_rule, FracKernel, LinOp};

/// `rows[i - 1][j]` multiplies `G(s_j)` in the integral up to `s_i`.
#[derive(Debug, Clone)]
pub struct ProductWeights {
    pub omega: f64,
    pub rows: Vec<Vec<LinOp>>,
}

impl ProductWeights {
    /// `sum_j rows[i-1][j] g[j]`
    pub fn apply_row(&self, i: usize, g: &[nalgebra::DVector<f64>], out: &mut nalgebra::DVector<f64>) {
        for (w, v) in self.rows[i - 1].iter().zip(g) {
            w.apply_acc(1.0, v, out);
        }
    }
}

struct Acc<'a> {
    rows: &'a mut [Vec<LinOp>],
    omegas: &'a [f64],
    p: f64,
}

impl Acc<'_> {
    /// Add `w * (s - p)^{-omega_c} * K` split between the hats of `left` and `left + 1`.
    fn add(&mut self, comps: &[usize], s: f64, w: f64, k: &LinOp, left: usize, a: f64, b: f64, with_weight: bool) {
        let h = b - a;
        let hl = (b - s) / h;
        let hr = (s - a) / h;
        for &c in comps {
            let f = if with_weight && self.omegas[c] != 0.0 { w * (s - self.p).powf(-self.omegas[c]) } else { w };
            self.rows[c][left].add_scaled(f * hl, k);
            self.rows[c][left + 1].add_scaled(f * hr, k);
        }
    }
}

/// Weights for several weight exponents `omegas` at once (kernel
/// evaluations are shared).
pub fn product_weights(kernel: &FracKernel, s: &[f64], omegas: &[f64]) -> Result<Vec<ProductWeights>> {
    let e = kernel.eta().value();
    let p = s[0];
    let n = s.len() - 1;
    let stiff = kernel.stiffness();
    let zero = kernel.eval(s[1] - p)?.zeros_like();
    let gl = GaussRule::legendre(8);
    let jacobi: Vec<Option<GaussRule>> = omegas
        .iter()
        .map(|&o| if o > 0.0 { GaussRule::jacobi(12, 0.0, -o).ok() } else { None })
        .collect();
    let all: Vec<usize> = (0..omegas.len()).collect();
    let mut out: Vec<ProductWeights> =
        omegas.iter().map(|&o| ProductWeights { omega: o, rows: Vec::with_capacity(n) }).collect();

    for i in 1..=n {
        let si = s[i];
        let mut rows: Vec<Vec<LinOp>> = vec![vec![zero.clone(); i + 1]; omegas.len()];
        {
            let mut acc = Acc { rows: &mut rows, omegas, p };
            // last cell [s_{i-1}, s_i]; for i = 1 only its right half
            let (a, b) = (s[i - 1], si);
            let head_start = if i == 1 { 0.5 * (a + b) } else { a };
            for (tau, w) in kernel_head_rule(e, stiff, si - head_start) {
                let x = si - tau;
                let k = kernel.eval(tau)?;
                acc.add(&all, x, w, &k, i - 1, a, b, true);
            }
            // first cell (or the left half of it when i = 1)
            let first_end = if i == 1 { head_start } else { s[1] };
            for (c, rule) in jacobi.iter().enumerate() {
                let r = rule.as_ref().unwrap_or(&gl);
                for (x, w) in r.mapped(p, first_end) {
                    let tau = si - x;
                    let k = kernel.eval(tau)?;
                    // the Jacobi rule carries (x - p)^{-omega}
                    acc.add(&[c], x, w * tau.powf(e - 1.0), &k, 0, p, s[1], rule.is_none());
                }
            }
            for c in 2..i {
                let (a, b) = (s[c - 1], s[c]);
                for (pa, pb) in split_cell(a, b, None, si) {
                    for (x, w) in gl.mapped(pa, pb) {
                        let tau = si - x;
                        let k = kernel.eval(tau)?;
                        acc.add(&all, x, w * tau.powf(e - 1.0), &k, c - 1, a, b, true);
                    }
                }
            }
        }
        for (c, r) in rows.into_iter().enumerate() {
            out[c].rows.push(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::{gamma, mittag_leffler2, FractionalOrder};
    use crate::operators::Generator;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn mesh(n: usize, g: f64, p: f64, l: f64) -> Vec<f64> {
        (0..=n).map(|j| p + l * (j as f64 / n as f64).powf(g)).collect()
    }

    #[test]
    fn constant_forcing_matches_closed_form() {
        // int_0^t (t-s)^{eta-1} E_{eta,eta}(lam (t-s)^eta) ds = t^eta E_{eta,eta+1}(lam t^eta)
        let eta = 0.6;
        let lam = -3.0;
        let gen = Generator::spectral(vec![lam], None, 1.0).unwrap();
        let k = gen.frac_kernel(FractionalOrder::new(eta).unwrap()).unwrap();
        let s = mesh(16, 1.0 / eta, 0.2, 0.8);
        let w = product_weights(&k, &s, &[0.0]).unwrap();
        let g = vec![DVector::from_element(1, 1.0); s.len()];
        for i in [1, 5, 16] {
            let mut out = DVector::zeros(1);
            w[0].apply_row(i, &g[..=i], &mut out);
            let t = s[i] - 0.2;
            let exact = t.powf(eta) * mittag_leffler2(eta, eta + 1.0, lam * t.powf(eta)).unwrap();
            assert_relative_eq!(out[0], exact, max_relative = 1e-11);
        }
    }

    #[test]
    fn weighted_component_is_exact_for_the_weight_itself() {
        // G = 1 with omega: int_0^t (t-s)^{eta-1} s^{-omega} ds / Gamma(eta) for lambda = 0
        let eta = 0.4;
        let omega = 1.0 - eta;
        let gen = Generator::spectral(vec![0.0], None, 1.0).unwrap();
        let k = gen.frac_kernel(FractionalOrder::new(eta).unwrap()).unwrap();
        let s = mesh(12, 2.5, 0.0, 1.0);
        let w = product_weights(&k, &s, &[omega, eta]).unwrap();
        let g = vec![DVector::from_element(1, 1.0); s.len()];
        for (c, om) in [omega, eta].iter().enumerate() {
            for i in [1, 2, 12] {
                let mut out = DVector::zeros(1);
                w[c].apply_row(i, &g[..=i], &mut out);
                let t: f64 = s[i];
                let exact = t.powf(eta - om) * gamma(1.0 - om) / gamma(1.0 - om + eta);
                assert_relative_eq!(out[0], exact, max_relative = 1e-8);
            }
        }
    }
}
