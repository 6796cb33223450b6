//! Generators, the semigroup `T(t)`, the fractional solution operator
//! `T_eta(t)` and the terminal integral operator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::calculus::split_cell;
use crate::fracops::quadrature::GaussRule;
use crate::fracops::{DensityRule, FractionalOrder, MittagLeffler, QuadratureRule, SampledFunction};

/// Number of uniform intervals of the sine-basis grid on `[0, pi]`.
pub const BASIS_INTERVALS: usize = 256;
const M_SAMPLES: usize = 200;

/// Orthonormal Dirichlet sine modes `alpha_l(x) = sqrt(2/pi) sin(l x)` on a
/// uniform grid of `[0, pi]`, with composite Simpson inner products.
///
/// Simpson's rule on 256 intervals integrates products of these modes
/// exactly for `l + k < 256`, so the discrete modes are orthonormal up to
/// rounding for up to 127 modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SineBasis {
    pub grid: Vec<f64>,
    simpson: Vec<f64>,
    /// `modes[(l, j)] = alpha_{l+1}(x_j)`
    modes: DMatrix<f64>,
}

impl SineBasis {
    pub fn new(levels: usize) -> Result<Self> {
        if levels == 0 || levels >= BASIS_INTERVALS / 2 {
            return Err(Error::InvalidArgument(format!(
                "sine basis needs 1..{} modes, got {levels}",
                BASIS_INTERVALS / 2
            )));
        }
        let n = BASIS_INTERVALS;
        let h = std::f64::consts::PI / n as f64;
        let grid: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
        let simpson = (0..=n)
            .map(|j| {
                let c = if j == 0 || j == n {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        let norm = (2.0 / std::f64::consts::PI).sqrt();
        let modes = DMatrix::from_fn(levels, n + 1, |l, j| norm * ((l + 1) as f64 * grid[j]).sin());
        Ok(Self { grid, simpson, modes })
    }

    pub fn levels(&self) -> usize {
        self.modes.nrows()
    }

    /// Coefficients `<f, alpha_l>` of grid values.
    pub fn project(&self, values: &DVector<f64>) -> DVector<f64> {
        let weighted = values.component_mul(&DVector::from_column_slice(&self.simpson));
        &self.modes * weighted
    }

    /// Grid values of `sum_l c_l alpha_l`.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.modes.transpose() * coeffs
    }

    /// Squared `L^2` energy of `values` not captured by the retained modes.
    pub fn tail_energy(&self, values: &DVector<f64>) -> f64 {
        let total: f64 = values.iter().zip(&self.simpson).map(|(v, w)| w * v * v).sum();
        (total - self.project(values).norm_squared()).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    Dense(DMatrix<f64>),
    /// Diagonal in an orthonormal basis; states are coefficient vectors.
    Spectral { eigenvalues: Vec<f64>, basis: Option<SineBasis> },
}

/// Generator `A` of a `C_0`-semigroup on a finite-dimensional state space,
/// with the bound `M >= sup_{[0, horizon]} ||T(t)||`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub kind: GeneratorKind,
    bound: f64,
    horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FracRoute {
    WrightIntegral,
    SpectralMl,
}

impl Generator {
    pub fn dense(matrix: DMatrix<f64>, horizon: f64) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("generator entries must be finite".into()));
        }
        check_horizon(horizon)?;
        let mut bound: f64 = 1.0;
        for j in 0..=M_SAMPLES {
            let t = horizon * j as f64 / M_SAMPLES as f64;
            bound = bound.max(spectral_norm(&(&matrix * t).exp()));
        }
        // absorb the sampling gap
        bound *= 1.0 + 1e-9;
        Ok(Self { kind: GeneratorKind::Dense(matrix), bound, horizon })
    }

    pub fn spectral(eigenvalues: Vec<f64>, basis: Option<SineBasis>, horizon: f64) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("spectral generator needs finite eigenvalues".into()));
        }
        if let Some(b) = &basis {
            if b.levels() != eigenvalues.len() {
                return Err(Error::DimensionMismatch { expected: b.levels(), got: eigenvalues.len() });
            }
        }
        check_horizon(horizon)?;
        let bound = eigenvalues.iter().fold(1.0f64, |m, &l| m.max((l * horizon).exp()));
        Ok(Self { kind: GeneratorKind::Spectral { eigenvalues, basis }, bound, horizon })
    }

    /// Dirichlet Laplacian on `(0, pi)` truncated to `levels` modes:
    /// `lambda_l = -l^2`.
    pub fn heat(levels: usize, horizon: f64) -> Result<Self> {
        let eigs = (1..=levels).map(|l| -((l * l) as f64)).collect();
        Self::spectral(eigs, Some(SineBasis::new(levels)?), horizon)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            GeneratorKind::Dense(m) => m.nrows(),
            GeneratorKind::Spectral { eigenvalues, .. } => eigenvalues.len(),
        }
    }

    /// Semigroup bound `M`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn basis(&self) -> Option<&SineBasis> {
        match &self.kind {
            GeneratorKind::Spectral { basis, .. } => basis.as_ref(),
            GeneratorKind::Dense(_) => None,
        }
    }

    fn check_dim(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        Ok(())
    }

    pub fn semigroup_apply(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("semigroup time must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(z.clone());
        }
        Ok(match &self.kind {
            GeneratorKind::Dense(m) => (m * t).exp() * z,
            GeneratorKind::Spectral { eigenvalues, .. } => {
                DVector::from_iterator(z.len(), eigenvalues.iter().zip(z.iter()).map(|(l, c)| (l * t).exp() * c))
            }
        })
    }

    /// `T_eta(t) z` by the chosen route.
    pub fn frac_operator_apply(
        &self,
        eta: FractionalOrder,
        t: f64,
        z: &DVector<f64>,
        route: FracRoute,
    ) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
        }
        match route {
            FracRoute::SpectralMl => match &self.kind {
                GeneratorKind::Spectral { eigenvalues, .. } => {
                    let ml = MittagLeffler::new(eta.value(), eta.value())?;
                    let te = t.powf(eta.value());
                    let mut out = z.clone();
                    for (o, l) in out.iter_mut().zip(eigenvalues) {
                        *o *= ml.eval(l * te)?;
                    }
                    Ok(out)
                }
                GeneratorKind::Dense(_) => {
                    Err(Error::RouteUnavailable("the Mittag-Leffler route needs a spectral generator".into()))
                }
            },
            FracRoute::WrightIntegral => {
                let rule = DensityRule::new(eta)?;
                self.wright_apply(&rule, t, z)
            }
        }
    }

    fn wright_apply(&self, rule: &DensityRule, t: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        let e = rule.eta.value();
        let te = t.powf(e);
        let mut acc = DVector::zeros(z.len());
        for (&theta, &w) in rule.nodes.iter().zip(&rule.weights) {
            acc.axpy(e * theta * w, &self.semigroup_apply(te * theta, z)?, 1.0);
        }
        Ok(acc)
    }

    /// Cached evaluator of `T_eta(tau)` as an explicit operator.
    pub fn frac_kernel(&self, eta: FractionalOrder) -> Result<FracKernel> {
        FracKernel::new(self, eta)
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// A linear map on the state space, kept diagonal when possible.
#[derive(Debug, Clone, PartialEq)]
pub enum LinOp {
    Diag(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl LinOp {
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            LinOp::Diag(d) => d.component_mul(z),
            LinOp::Dense(m) => m * z,
        }
    }

    /// `z += c * self * x`
    pub fn apply_acc(&self, c: f64, x: &DVector<f64>, z: &mut DVector<f64>) {
        match self {
            LinOp::Diag(d) => {
                for ((zi, di), xi) in z.iter_mut().zip(d.iter()).zip(x.iter()) {
                    *zi += c * di * xi;
                }
            }
            LinOp::Dense(m) => z.gemv(c, m, x, 1.0),
        }
    }

    /// `self += c * other` (same variant).
    pub fn add_scaled(&mut self, c: f64, other: &LinOp) {
        match (self, other) {
            (LinOp::Diag(a), LinOp::Diag(b)) => a.axpy(c, b, 1.0),
            (LinOp::Dense(a), LinOp::Dense(b)) => *a += b * c,
            (this, other) => {
                let mut a = this.to_dense();
                a += other.to_dense() * c;
                *this = LinOp::Dense(a);
            }
        }
    }

    pub fn zeros_like(&self) -> LinOp {
        match self {
            LinOp::Diag(d) => LinOp::Diag(DVector::zeros(d.len())),
            LinOp::Dense(m) => LinOp::Dense(DMatrix::zeros(m.nrows(), m.ncols())),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            LinOp::Diag(d) => DMatrix::from_diagonal(d),
            LinOp::Dense(m) => m.clone(),
        }
    }

    pub fn scaled(&self, c: f64) -> LinOp {
        match self {
            LinOp::Diag(d) => LinOp::Diag(d * c),
            LinOp::Dense(m) => LinOp::Dense(m * c),
        }
    }
}

#[derive(Debug, Clone)]
enum KernelForm {
    /// `T_eta(tau) = diag(E_{eta,eta}(lambda_l tau^eta))`
    Diagonal { eigenvalues: Vec<f64> },
    /// `A = V diag(lambda) V^{-1}` with real eigenvalues
    Similar { v: DMatrix<f64>, v_inv: DMatrix<f64>, eigenvalues: Vec<f64> },
    /// fall back to the density integral of the semigroup
    Wright { matrix: DMatrix<f64>, rule: DensityRule },
}

/// Evaluator of `T_eta(tau)` for repeated use at many `tau`.
///
/// Dense generators with real, well-conditioned eigenvectors are evaluated
/// through their eigen-decomposition and the two-parameter Mittag-Leffler
/// function; other dense generators use the density integral.
#[derive(Debug, Clone)]
pub struct FracKernel {
    eta: FractionalOrder,
    ml: MittagLeffler,
    form: KernelForm,
}

impl FracKernel {
    pub fn new(gen: &Generator, eta: FractionalOrder) -> Result<Self> {
        let ml = MittagLeffler::new(eta.value(), eta.value())?;
        let form = match &gen.kind {
            GeneratorKind::Spectral { eigenvalues, .. } => KernelForm::Diagonal { eigenvalues: eigenvalues.clone() },
            GeneratorKind::Dense(m) => match real_diagonalization(m) {
                Some((v, v_inv, eigenvalues)) => {
                    if m.nrows() == 1 || is_diagonal(m) {
                        KernelForm::Diagonal { eigenvalues }
                    } else {
                        KernelForm::Similar { v, v_inv, eigenvalues }
                    }
                }
                None => KernelForm::Wright { matrix: m.clone(), rule: DensityRule::new(eta)? },
            },
        };
        Ok(Self { eta, ml, form })
    }

    pub fn eta(&self) -> FractionalOrder {
        self.eta
    }

    /// Largest eigenvalue magnitude, used to size quadrature panels.
    pub fn stiffness(&self) -> f64 {
        match &self.form {
            KernelForm::Diagonal { eigenvalues } | KernelForm::Similar { eigenvalues, .. } => {
                eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()))
            }
            KernelForm::Wright { matrix, .. } => spectral_norm(matrix),
        }
    }

    /// Per-mode values `E_{eta,eta}(lambda_l tau^eta)` in the eigenbasis.
    fn modal(&self, eigenvalues: &[f64], tau: f64) -> Result<DVector<f64>> {
        let te = tau.powf(self.eta.value());
        let mut out = DVector::zeros(eigenvalues.len());
        for (o, l) in out.iter_mut().zip(eigenvalues) {
            *o = self.ml.eval(l * te)?;
        }
        Ok(out)
    }

    /// `T_eta(tau)` for `tau >= 0` (the limit `T_eta(0+) = I / Gamma(eta)` at 0).
    pub fn eval(&self, tau: f64) -> Result<LinOp> {
        match &self.form {
            KernelForm::Diagonal { eigenvalues } => Ok(LinOp::Diag(self.modal(eigenvalues, tau)?)),
            KernelForm::Similar { v, v_inv, eigenvalues } => {
                let d = self.modal(eigenvalues, tau)?;
                Ok(LinOp::Dense(v * DMatrix::from_diagonal(&d) * v_inv))
            }
            KernelForm::Wright { matrix, rule } => {
                let e = self.eta.value();
                let te = tau.powf(e);
                let n = matrix.nrows();
                let mut acc = DMatrix::zeros(n, n);
                for (&theta, &w) in rule.nodes.iter().zip(&rule.weights) {
                    acc += (matrix * (te * theta)).exp() * (e * theta * w);
                }
                Ok(LinOp::Dense(acc))
            }
        }
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Real eigen-decomposition `A = V diag(lambda) V^{-1}` when all eigenvalues
/// are real and the eigenvector matrix is well conditioned.
fn real_diagonalization(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    let n = m.nrows();
    if is_diagonal(m) {
        let eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
        return Some((DMatrix::identity(n, n), DMatrix::identity(n, n), eigs));
    }
    if m == &m.transpose() {
        let se = m.clone().symmetric_eigen();
        let v = se.eigenvectors.clone();
        return Some((v.clone(), v.transpose(), se.eigenvalues.iter().copied().collect()));
    }
    let eigs: Vec<f64> = m.clone().schur().eigenvalues()?.iter().copied().collect();
    let mut v = DMatrix::zeros(n, n);
    for (k, &l) in eigs.iter().enumerate() {
        let shifted = m - DMatrix::identity(n, n) * l;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))?;
        v.set_column(k, &vt.row(imin).transpose());
    }
    let svd = v.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-8 * smax) {
        return None;
    }
    let v_inv = v.clone().try_inverse()?;
    // reject if the reconstruction is poor (defective or clustered spectrum)
    let recon = &v * DMatrix::from_diagonal(&DVector::from_column_slice(&eigs)) * &v_inv;
    if (recon - m).norm() > 1e-10 * m.norm().max(1.0) {
        return None;
    }
    Some((v, v_inv, eigs))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMap {
    Identity,
    /// `n x k` matrix acting on controls in `R^k`.
    Dense(DMatrix<f64>),
}

impl ControlMap {
    pub fn control_dim(&self, state_dim: usize) -> usize {
        match self {
            ControlMap::Identity => state_dim,
            ControlMap::Dense(b) => b.ncols(),
        }
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if let ControlMap::Dense(b) = self {
            if b.nrows() != state_dim {
                return Err(Error::DimensionMismatch { expected: state_dim, got: b.nrows() });
            }
        }
        Ok(())
    }

    /// Operator 2-norm.
    pub fn bound(&self) -> f64 {
        match self {
            ControlMap::Identity => 1.0,
            ControlMap::Dense(b) => spectral_norm(b),
        }
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            ControlMap::Identity => u.clone(),
            ControlMap::Dense(b) => b * u,
        }
    }

    pub fn matrix(&self, state_dim: usize) -> DMatrix<f64> {
        match self {
            ControlMap::Identity => DMatrix::identity(state_dim, state_dim),
            ControlMap::Dense(b) => b.clone(),
        }
    }
}

/// Nodes `tau_k` and weights `w_k` with
/// `sum_k w_k F(tau_k) ~ int_0^h tau^{eta - 1} F(tau) d tau` for `F` that is
/// smooth in `v = tau^eta` on scale `1/stiffness`.
///
/// The substitution `v = tau^eta` removes the weak singularity; panels in
/// `v` are graded geometrically towards 0 until they resolve `1/stiffness`.
pub fn kernel_head_rule(eta: f64, stiffness: f64, h: f64) -> Vec<(f64, f64)> {
    let top = h.powf(eta);
    let levels = ((top * stiffness.max(1.0)).log2().ceil().max(0.0) as usize) + 6;
    let gl = GaussRule::legendre(12);
    let mut out = Vec::with_capacity((levels + 1) * gl.len());
    let mut hi = top;
    for k in 0..=levels {
        let lo = if k == levels { 0.0 } else { 0.5 * hi };
        for (v, w) in gl.mapped(lo, hi) {
            out.push((v.powf(1.0 / eta), w / eta));
        }
        hi = lo;
    }
    out
}

/// `int_p^end (end - s)^{eta - 1} T_eta(end - s) f(s) ds` over the sampled
/// span `(f.origin, end]` of `f`, with `p = f.origin`.
///
/// `f` is interpolated as in [`crate::fracops::singular_quad`].
pub fn terminal_operator(kernel: &FracKernel, f: &SampledFunction, rule: &QuadratureRule) -> Result<DVector<f64>> {
    rule.validate()?;
    let e = kernel.eta().value();
    let (p, end) = (f.origin, f.end());
    let interp = f.interpolator(rule.order);
    let omega = f.weight_exponent;
    let mut cells = vec![p];
    cells.extend(f.abscissae().into_iter().filter(|&x| x > p && x < end));
    cells.push(end);
    let last = cells.len() - 2;
    let mut acc = DVector::zeros(f.dim());
    let gl = GaussRule::legendre(16);
    let weight = |s: f64| if omega > 0.0 { (s - p).powf(-omega) } else { 1.0 };
    for (c, w) in cells.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if c == last && !(c == 0 && omega > 0.0) {
            for (tau, wt) in kernel_head_rule(e, kernel.stiffness(), b - a) {
                let s = end - tau;
                kernel.eval(tau)?.apply_acc(wt * weight(s), &interp.eval(s), &mut acc);
            }
            continue;
        }
        if c == 0 && omega > 0.0 {
            // both endpoint factors on one cell when it is also the last
            let alpha = if c == last { e - 1.0 } else { 0.0 };
            let gr = GaussRule::jacobi(16, alpha, -omega)?;
            for (s, wt) in gr.mapped(a, b) {
                let tau = end - s;
                let factor = if c == last { wt } else { wt * tau.powf(e - 1.0) };
                kernel.eval(tau)?.apply_acc(factor, &interp.eval(s), &mut acc);
            }
            continue;
        }
        for (pa, pb) in split_cell(a, b, if omega > 0.0 { Some(p) } else { None }, end) {
            for (s, wt) in gl.mapped(pa, pb) {
                let tau = end - s;
                kernel.eval(tau)?.apply_acc(wt * tau.powf(e - 1.0) * weight(s), &interp.eval(s), &mut acc);
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::{gamma, mittag_leffler2};
    use approx::assert_relative_eq;

    fn ord(e: f64) -> FractionalOrder {
        FractionalOrder::new(e).unwrap()
    }

    #[test]
    fn sine_basis_is_orthonormal() {
        let b = SineBasis::new(64).unwrap();
        for l in [0usize, 5, 63] {
            let row = b.modes.row(l).transpose();
            let c = b.project(&row);
            for k in 0..64 {
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((c[k] - expect).abs() < 1e-12, "{l} {k} {}", c[k]);
            }
        }
    }

    #[test]
    fn heat_semigroup_on_first_mode() {
        let g = Generator::heat(8, 1.0).unwrap();
        assert_eq!(g.bound(), 1.0);
        let mut z = DVector::zeros(8);
        z[0] = 1.0;
        let out = g.semigroup_apply(1.0, &z).unwrap();
        assert_relative_eq!(out[0], (-1.0f64).exp(), max_relative = 1e-15);
        assert_eq!(g.semigroup_apply(0.0, &z).unwrap(), z);
    }

    #[test]
    fn dense_bound_dominates_samples() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, -0.5]);
        let g = Generator::dense(m, 2.0).unwrap();
        let z = DVector::from_vec(vec![0.3, -1.0]);
        for j in 0..50 {
            let t = 2.0 * j as f64 / 49.0;
            assert!(g.semigroup_apply(t, &z).unwrap().norm() <= g.bound() * z.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn routes_agree_for_scalar_decay() {
        let g = Generator::spectral(vec![-1.0], None, 1.0).unwrap();
        let z = DVector::from_element(1, 1.0);
        let w = g.frac_operator_apply(ord(0.5), 1.0, &z, FracRoute::WrightIntegral).unwrap();
        let s = g.frac_operator_apply(ord(0.5), 1.0, &z, FracRoute::SpectralMl).unwrap();
        assert_relative_eq!(w[0], s[0], max_relative = 1e-5);
    }

    #[test]
    fn zero_generator_gives_inverse_gamma() {
        let g = Generator::spectral(vec![0.0], None, 1.0).unwrap();
        let z = DVector::from_element(1, 2.0);
        for route in [FracRoute::WrightIntegral, FracRoute::SpectralMl] {
            let v = g.frac_operator_apply(ord(2.0 / 3.0), 0.7, &z, route).unwrap();
            assert_relative_eq!(v[0], 2.0 / gamma(2.0 / 3.0), max_relative = 1e-6);
        }
    }

    #[test]
    fn dense_rejects_spectral_route() {
        let g = Generator::dense(DMatrix::from_element(1, 1, -1.0), 1.0).unwrap();
        let z = DVector::from_element(1, 1.0);
        assert!(matches!(
            g.frac_operator_apply(ord(0.5), 1.0, &z, FracRoute::SpectralMl),
            Err(Error::RouteUnavailable(_))
        ));
    }

    #[test]
    fn kernel_forms_agree() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.2, -2.0]);
        let g = Generator::dense(m.clone(), 1.0).unwrap();
        let k = g.frac_kernel(ord(0.6)).unwrap();
        assert!(matches!(k.form, KernelForm::Similar { .. }));
            let wright = FracKernel {
            eta: ord(0.6),
            ml: k.ml.clone(),
            form: KernelForm::Wright { matrix: m, rule: DensityRule::new(ord(0.6)).unwrap() },
        };
        let a = k.eval(0.8).unwrap().to_dense();
        let b = wright.eval(0.8).unwrap().to_dense();
        assert!((a - b).norm() < 1e-6);
    }

    #[test]
    fn terminal_operator_closed_forms() {
        let eta = 0.4;
        let g = Generator::spectral(vec![0.0], None, 1.0).unwrap();
        let k = g.frac_kernel(ord(eta)).unwrap();
        let rule = QuadratureRule::default();
        let nodes = rule.graded_nodes(0.2, 0.9, 12);
        let f = SampledFunction::from_fn(0.2, nodes.clone(), 0.0, None, |_| DVector::from_element(1, 3.0)).unwrap();
        let v = terminal_operator(&k, &f, &rule).unwrap();
        assert_relative_eq!(v[0], 3.0 * 0.7f64.powf(eta) / gamma(eta + 1.0), max_relative = 1e-12);

        // lambda = -1, f = 1: int_0^L s^{eta-1} E_{eta,eta}(-s^eta) ds = L^eta E_{eta,eta+1}(-L^eta)
        let g = Generator::spectral(vec![-1.0], None, 1.0).unwrap();
        let k = g.frac_kernel(ord(eta)).unwrap();
        let v = terminal_operator(&k, &f, &rule).unwrap();
        let le = 0.7f64.powf(eta);
        assert_relative_eq!(v[0], 3.0 * le * mittag_leffler2(eta, eta + 1.0, -le).unwrap(), max_relative = 1e-10);
    }
}
