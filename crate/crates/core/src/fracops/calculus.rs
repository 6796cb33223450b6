//! Riemann-Liouville integrals and derivatives of sampled functions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::quadrature::GaussRule;
use super::special::gamma;
use super::FractionalOrder;
use crate::error::{Error, Result};

const CELL_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    GradedMesh,
    GaussJacobi,
}

/// Rule used for weakly singular integrals of sampled data.
///
/// `order` is the number of points in each local interpolation stencil
/// (graded mesh) or the number of Gauss-Jacobi nodes. `grading` shapes
/// meshes built by [`QuadratureRule::graded_nodes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub order: usize,
    pub grading: f64,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self { kind: QuadratureKind::GradedMesh, order: 4, grading: 2.0 }
    }
}

impl QuadratureRule {
    pub fn new(kind: QuadratureKind, order: usize, grading: f64) -> Result<Self> {
        let rule = Self { kind, order, grading };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::InvalidArgument(format!("rule order must be >= 2, got {}", self.order)));
        }
        if !(self.grading >= 1.0) || !self.grading.is_finite() {
            return Err(Error::InvalidArgument(format!("grading must be >= 1, got {}", self.grading)));
        }
        Ok(())
    }

    /// `n` nodes `origin + (end - origin) (j/n)^grading`, `j = 1..=n`.
    pub fn graded_nodes(&self, origin: f64, end: f64, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|j| origin + (end - origin) * (j as f64 / n as f64).powf(self.grading))
            .collect()
    }
}

/// Vector-valued samples of a function on `(origin, nodes.last()]`.
///
/// Values are stored raw. `weight_exponent` records a known
/// `(t - origin)^{-weight_exponent}` singularity: the product
/// `(t - origin)^{weight_exponent} f(t)` is treated as smooth, and
/// `origin_weighted` optionally holds its limit at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub origin: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub weight_exponent: f64,
    pub origin_weighted: Option<DVector<f64>>,
}

impl SampledFunction {
    pub fn new(
        origin: f64,
        nodes: Vec<f64>,
        values: Vec<DVector<f64>>,
        weight_exponent: f64,
        origin_weighted: Option<DVector<f64>>,
    ) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: nodes.len().max(1), got: values.len() });
        }
        if !(nodes[0] > origin) {
            return Err(Error::InvalidArgument("first node must lie to the right of the origin".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("nodes must be strictly increasing".into()));
        }
        if !(0.0..1.0).contains(&weight_exponent) {
            return Err(Error::InvalidArgument(format!("weight exponent {weight_exponent} outside [0, 1)")));
        }
        let dim = values[0].len();
        if let Some(v) = values.iter().chain(origin_weighted.iter()).find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        Ok(Self { origin, nodes, values, weight_exponent, origin_weighted })
    }

    /// Sample `f` at the given nodes.
    pub fn from_fn<F: FnMut(f64) -> DVector<f64>>(
        origin: f64,
        nodes: Vec<f64>,
        weight_exponent: f64,
        origin_weighted: Option<DVector<f64>>,
        mut f: F,
    ) -> Result<Self> {
        let values = nodes.iter().map(|&t| f(t)).collect();
        Self::new(origin, nodes, values, weight_exponent, origin_weighted)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().expect("non-empty")
    }

    fn weight(&self, t: f64) -> f64 {
        if self.weight_exponent == 0.0 {
            1.0
        } else {
            (t - self.origin).powf(self.weight_exponent)
        }
    }

    /// Interpolation data: abscissae and weighted ordinates.
    fn table(&self) -> (Vec<f64>, Vec<DVector<f64>>) {
        let mut xs = Vec::with_capacity(self.nodes.len() + 1);
        let mut gs = Vec::with_capacity(self.nodes.len() + 1);
        if let Some(w0) = &self.origin_weighted {
            xs.push(self.origin);
            gs.push(w0.clone());
        }
        for (t, v) in self.nodes.iter().zip(&self.values) {
            xs.push(*t);
            gs.push(v * self.weight(*t));
        }
        (xs, gs)
    }

    /// Piecewise local Lagrange interpolant of the weighted view
    /// `(t - origin)^{weight_exponent} f(t)` with `order`-point stencils.
    ///
    /// With a positive weight exponent `w` the stencils are built in the
    /// variable `(t - origin)^{1 - w}`, in which weighted mild solutions are
    /// regular at the origin.
    pub fn interpolator(&self, order: usize) -> Interpolant {
        let (ts, gs) = self.table();
        let power = 1.0 - self.weight_exponent;
        let origin = self.origin;
        let xs = if self.weight_exponent > 0.0 { ts.iter().map(|t| (t - origin).powf(power)).collect() } else { ts.clone() };
        Interpolant { ts, xs, gs, order, origin, power: if self.weight_exponent > 0.0 { power } else { 1.0 } }
    }

    /// Interpolation abscissae: the origin (when its weighted limit is
    /// known) followed by the nodes.
    pub fn abscissae(&self) -> Vec<f64> {
        let mut xs = Vec::with_capacity(self.nodes.len() + 1);
        if self.origin_weighted.is_some() {
            xs.push(self.origin);
        }
        xs.extend_from_slice(&self.nodes);
        xs
    }

    pub fn weighted_at(&self, t: f64, order: usize) -> DVector<f64> {
        self.interpolator(order).eval(t)
    }

    /// Interpolated raw value at `t > origin`.
    pub fn value_at(&self, t: f64, order: usize) -> DVector<f64> {
        self.weighted_at(t, order) / self.weight(t)
    }
}

#[derive(Debug, Clone)]
pub struct Interpolant {
    ts: Vec<f64>,
    xs: Vec<f64>,
    gs: Vec<DVector<f64>>,
    order: usize,
    origin: f64,
    power: f64,
}

impl Interpolant {
    fn stencil(&self, t: f64) -> (usize, usize) {
        let n = self.ts.len();
        let p = self.order.min(n);
        let cell = match self.ts.partition_point(|&x| x <= t) {
            0 => 0,
            i => (i - 1).min(n.saturating_sub(2)),
        };
        let start = (cell + 1).saturating_sub(p / 2).min(n - p);
        (start, start + p)
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let (a, b) = self.stencil(t);
        let x = if self.power == 1.0 { t } else { (t - self.origin).max(0.0).powf(self.power) };
        let mut out = DVector::zeros(self.gs[0].len());
        for j in a..b {
            let mut l = 1.0;
            for k in a..b {
                if k != j {
                    l *= (x - self.xs[k]) / (self.xs[j] - self.xs[k]);
                }
            }
            out.axpy(l, &self.gs[j], 1.0);
        }
        out
    }
}

/// `int_lower^upper (upper - s)^kernel_exponent g(s) ds` with
/// `-1 < kernel_exponent <= 0`.
///
/// `g` is reconstructed from its samples by piecewise local Lagrange
/// interpolation of `(s - origin)^{weight_exponent} g(s)`, so the result is
/// exact up to rounding for such products that are polynomials of degree
/// below `rule.order`.
pub fn singular_quad(
    kernel_exponent: f64,
    g: &SampledFunction,
    lower: f64,
    upper: f64,
    rule: &QuadratureRule,
) -> Result<DVector<f64>> {
    rule.validate()?;
    if !(kernel_exponent > -1.0 && kernel_exponent <= 0.0) {
        return Err(Error::InvalidArgument(format!("kernel exponent {kernel_exponent} outside (-1, 0]")));
    }
    if !(lower < upper) {
        return Err(Error::InvalidArgument(format!("empty integration range [{lower}, {upper}]")));
    }
    let span_tol = 1e-12 * (g.end() - g.origin).abs().max(1.0);
    if lower < g.origin - span_tol || upper > g.end() + span_tol {
        return Err(Error::InvalidArgument(format!(
            "range [{lower}, {upper}] outside the sampled span [{}, {}]",
            g.origin,
            g.end()
        )));
    }
    let interp = g.interpolator(rule.order);
    let xs = g.abscissae();
    let at_origin = (lower - g.origin).abs() <= span_tol && g.weight_exponent > 0.0;
    let omega = g.weight_exponent;

    let mut cells = vec![lower];
    if rule.kind == QuadratureKind::GradedMesh {
        cells.extend(xs.iter().copied().filter(|&x| x > lower + span_tol && x < upper - span_tol));
    }
    cells.push(upper);
    let npts = match rule.kind {
        QuadratureKind::GradedMesh => CELL_POINTS,
        QuadratureKind::GaussJacobi => rule.order,
    };

    let mut acc = DVector::zeros(g.dim());
    let last = cells.len() - 2;
    let smooth = GaussRule::legendre(npts);
    for (c, w) in cells.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let left_sing = c == 0 && at_origin;
        let right_sing = c == last;
        if left_sing || right_sing {
            let alpha = if right_sing { kernel_exponent } else { 0.0 };
            let beta = if left_sing { -omega } else { 0.0 };
            let gr = GaussRule::jacobi(npts, alpha, beta)?;
            for (s, wt) in gr.mapped(a, b) {
                let mut factor = wt;
                if !right_sing {
                    factor *= (upper - s).powf(kernel_exponent);
                }
                if !left_sing && omega > 0.0 {
                    factor *= (s - g.origin).powf(-omega);
                }
                acc.axpy(factor, &interp.eval(s), 1.0);
            }
        } else {
            // near-singular factors: split so each piece is no longer than
            // its distance to the nearest singular point
            let left_pt = if omega > 0.0 { Some(g.origin) } else { None };
            for (pa, pb) in split_cell(a, b, left_pt, upper) {
                for (s, wt) in smooth.mapped(pa, pb) {
                    let mut factor = wt * (upper - s).powf(kernel_exponent);
                    if omega > 0.0 {
                        factor *= (s - g.origin).powf(-omega);
                    }
                    acc.axpy(factor, &interp.eval(s), 1.0);
                }
            }
        }
    }
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureFailure("non-finite quadrature sum".into()));
    }
    Ok(acc)
}

pub(crate) fn split_cell(a: f64, b: f64, left: Option<f64>, right: f64) -> Vec<(f64, f64)> {
    let mut pieces = Vec::new();
    let mut stack = vec![(a, b)];
    while let Some((x, y)) = stack.pop() {
        let mut dist = right - y;
        if let Some(l) = left {
            dist = dist.min(x - l);
        }
        if y - x <= dist || pieces.len() + stack.len() > 200 {
            pieces.push((x, y));
            continue;
        }
        // cut towards the closer singular point
        let m = if left.is_some_and(|l| x - l < right - y) {
            x + 0.5 * (x - left.unwrap()).max((y - x) * 1e-3)
        } else {
            y - (right - y).max((y - x) * 1e-3)
        };
        let m = m.clamp(x + 1e-3 * (y - x), y - 1e-3 * (y - x));
        stack.push((x, m));
        stack.push((m, y));
    }
    pieces
}

/// `(I^eta f)(t) = 1/Gamma(eta) int_origin^t (t - r)^{eta - 1} f(r) dr`
/// for `eta` in `(0, 1]`.
pub fn rl_integral(eta_int: f64, f: &SampledFunction, t: f64, rule: &QuadratureRule) -> Result<DVector<f64>> {
    if !(eta_int > 0.0 && eta_int <= 1.0) {
        return Err(Error::OrderOutOfRange(eta_int));
    }
    if !(t > f.origin) {
        return Err(Error::InvalidArgument(format!("t = {t} must exceed the origin {}", f.origin)));
    }
    Ok(singular_quad(eta_int - 1.0, f, f.origin, t, rule)? / gamma(eta_int))
}

/// `(D^eta f)(t) = d/dt (I^{1-eta} f)(t)`.
///
/// The outer derivative is a central difference with step
/// `1e-4` times the local mesh width, Richardson-extrapolated once.
pub fn rl_derivative(
    eta: FractionalOrder,
    f: &SampledFunction,
    t: f64,
    rule: &QuadratureRule,
) -> Result<DVector<f64>> {
    let width = local_width(f, t);
    let h = 1e-4 * width;
    if !(t - h > f.origin) || t + h > f.end() {
        return Err(Error::StencilUnderflow(t));
    }
    let order = 1.0 - eta.value();
    let diff = |h: f64| -> Result<DVector<f64>> {
        let up = rl_integral(order, f, t + h, rule)?;
        let down = rl_integral(order, f, t - h, rule)?;
        Ok((up - down) / (2.0 * h))
    };
    let coarse = diff(h)?;
    let fine = diff(0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

fn local_width(f: &SampledFunction, t: f64) -> f64 {
    let mut xs = vec![f.origin];
    xs.extend_from_slice(&f.nodes);
    let i = xs.partition_point(|&x| x < t).clamp(1, xs.len() - 1);
    xs[i] - xs[i - 1]
}
