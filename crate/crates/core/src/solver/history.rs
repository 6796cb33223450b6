//! Weights for the memory term
//! `phi_r(s) = eta/Gamma(1-eta) sum_k [ int_{p_k}^{t_{k+1}} z(x) (s-x)^{-1-eta} dx
//!            + int_{t_{k+1}}^{p_{k+1}} psi_{k+1}(x) (s-x)^{-1-eta} dx ]`.
//!
//! Window samples are interpolated linearly. On a flow interval the weighted
//! state `(x - p)^{1-eta} z(x)` is interpolated linearly in the variable
//! `(x - p)^{1-eta}`; on the first cell the state is modelled as
//! `(x - p)^{eta-1} w_0 + c`. Both are exact for constant states and for the
//! pure singular profile.

use crate::fracops::calculus::split_cell;
use crate::fracops::quadrature::GaussRule;
use crate::fracops::special::gamma;

/// Nodes of one sampled segment: an origin and the nodes to its right.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub origin: f64,
    pub nodes: &'a [f64],
}

/// Weights of `phi_r(s)` against the samples of every earlier segment.
///
/// `flow[k]` pairs with `[w_0, z(s_1), ..., z(s_N)]` of flow interval `k`
/// (`w_0` the weighted origin limit); `window[k]` pairs with
/// `[psi(t_{k+1}), psi(x_1), ...]` of window `k + 1`.
#[derive(Debug, Clone, Default)]
pub struct HistoryWeights {
    pub flow: Vec<Vec<f64>>,
    pub window: Vec<Vec<f64>>,
}

/// `(wa, wb)` with `wa f(a) + wb f(b) = int_a^b f(x) (s-x)^{-1-eta} dx` for
/// linear `f`, `s > b`.
fn linear_moments(s: f64, a: f64, b: f64, e: f64) -> (f64, f64) {
    let (da, db) = (s - a, s - b);
    if b - a < 0.1 * db {
        let gl = GaussRule::legendre(6);
        let mut wa = 0.0;
        let mut wb = 0.0;
        for (x, w) in gl.mapped(a, b) {
            let k = w * (s - x).powf(-1.0 - e);
            wa += k * (b - x) / (b - a);
            wb += k * (x - a) / (b - a);
        }
        return (wa, wb);
    }
    let m0 = (db.powf(-e) - da.powf(-e)) / e;
    let m1 = (da.powf(1.0 - e) - db.powf(1.0 - e)) / (1.0 - e);
    let slope = (da * m0 - m1) / (b - a);
    (m0 - slope, slope)
}

/// `int_p^{s1} (x-p)^{eta-1} (s-x)^{-1-eta} dx`
fn singular_first_cell(s: f64, p: f64, s1: f64, e: f64, gj: &GaussRule, gl: &GaussRule) -> f64 {
    let mut acc = 0.0;
    for (a, b) in split_cell(p, s1, None, s) {
        if a == p {
            acc += gj.integrate(a, b, |x| (s - x).powf(-1.0 - e));
        } else {
            acc += gl.integrate(a, b, |x| (x - p).powf(e - 1.0) * (s - x).powf(-1.0 - e));
        }
    }
    acc
}

/// Weights of `phi(s)` for a target time `s` to the right of every segment.
pub fn history_weights(eta: f64, s: f64, flows: &[Segment<'_>], windows: &[Segment<'_>]) -> HistoryWeights {
    let e = eta;
    let c = e / gamma(1.0 - e);
    let gj = GaussRule::jacobi(12, 0.0, e - 1.0).expect("valid Jacobi parameters");
    let gl = GaussRule::legendre(12);
    let gl8 = GaussRule::legendre(8);
    let mut out = HistoryWeights::default();
    for seg in flows {
        let n = seg.nodes.len();
        let mut w = vec![0.0; n + 1];
        let (p, s1) = (seg.origin, seg.nodes[0]);
        let a = singular_first_cell(s, p, s1, e, &gj, &gl);
        let (b0, b1) = linear_moments(s, p, s1, e);
        let b = b0 + b1;
        w[0] += a - (s1 - p).powf(e - 1.0) * b;
        w[1] += b;
        for j in 1..n {
            let (a, b) = (seg.nodes[j - 1], seg.nodes[j]);
            let (ra, rb) = ((a - p).powf(1.0 - e), (b - p).powf(1.0 - e));
            for (pa, pb) in split_cell(a, b, Some(p), s) {
                for (x, wx) in gl8.mapped(pa, pb) {
                    let y = (x - p).powf(1.0 - e);
                    let k = wx * (s - x).powf(-1.0 - e) / y;
                    w[j] += k * ra * (rb - y) / (rb - ra);
                    w[j + 1] += k * rb * (y - ra) / (rb - ra);
                }
            }
        }
        out.flow.push(w.into_iter().map(|x| c * x).collect());
    }
    for seg in windows {
        let n = seg.nodes.len();
        let mut w = vec![0.0; n + 1];
        let mut prev = seg.origin;
        for j in 0..n {
            let (wa, wb) = linear_moments(s, prev, seg.nodes[j], e);
            w[j] += wa;
            w[j + 1] += wb;
            prev = seg.nodes[j];
        }
        out.window.push(w.into_iter().map(|x| c * x).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_history_matches_closed_form() {
        // z = 1 on (0, 0.3], psi = 1 on (0.3, 0.5]:
        // phi(s) = ((s - 0.5)^{-e} - s^{-e}) / Gamma(1 - e)
        let e = 2.0 / 3.0;
        let flow: Vec<f64> = (1..=64).map(|j| 0.3 * (j as f64 / 64.0).powf(1.5)).collect();
        let win: Vec<f64> = (1..=16).map(|j| 0.3 + 0.2 * j as f64 / 16.0).collect();
        for &s in &[0.5001, 0.51, 0.9] {
            let hw = history_weights(e, s, &[Segment { origin: 0.0, nodes: &flow }], &[Segment { origin: 0.3, nodes: &win }]);
            // w_0 = 0 for a bounded state
            let mut phi = hw.flow[0][1..].iter().sum::<f64>();
            phi += hw.window[0].iter().sum::<f64>();
            let exact = ((s - 0.5f64).powf(-e) - s.powf(-e)) / gamma(1.0 - e);
            assert_relative_eq!(phi, exact, max_relative = 1e-5);
        }
    }

    #[test]
    fn singular_profile_is_exact() {
        // z = x^{e-1}: int_0^T x^{e-1} (s-x)^{-1-e} dx = T^e / (e s (s-T)^e)
        let e = 0.4;
        let t_end = 0.5;
        let flow: Vec<f64> = (1..=8).map(|j| t_end * (j as f64 / 8.0).powf(2.5)).collect();
        let s = 0.8;
        let hw = history_weights(e, s, &[Segment { origin: 0.0, nodes: &flow }], &[]);
        let w = &hw.flow[0];
        let mut phi = w[0];
        for (j, &x) in flow.iter().enumerate() {
            phi += w[j + 1] * x.powf(e - 1.0);
        }
        let exact = e / gamma(1.0 - e) * t_end.powf(e) / (e * s * (s - t_end).powf(e));
        assert_relative_eq!(phi, exact, max_relative = 1e-12);
    }
}
