//! Mild solutions by Picard iteration of
//! `(Gz)(t) = (t-p_r)^{eta-1} T_eta(t-p_r) psi_r(p_r, z(t_r^-))
//!          + int_{p_r}^t (t-s)^{eta-1} T_eta(t-s) [B u + h(s, z) + phi_r(s, z)] ds`
//! on each flow interval, with the impulse windows given by `psi_r`.
//!
//! Each flow interval carries a mesh graded towards `p_r`. The integral is
//! evaluated by product integration: `Bu`, `(s-p_r)^{1-eta} h` and
//! `(s-p_r)^eta phi_r` are interpolated linearly and integrated against the
//! kernel with precomputed operator weights.

pub mod history;
pub mod rule;

use log::{debug, info};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{gamma, rl_integral, QuadratureRule, SampledFunction};
use crate::hypotheses::compute_nu;
use crate::operators::{FracKernel, LinOp};
use crate::system::{SystemSpec, Trajectory};
use history::{history_weights, HistoryWeights, Segment};
use rule::{product_weights, ProductWeights};

/// Components of the forcing integrated by product rules.
pub(crate) const CONTROL: usize = 0;
pub(crate) const NONLINEAR: usize = 1;
pub(crate) const MEMORY: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mesh_per_interval: usize,
    /// Grading exponent towards each `p_r`; `1/eta` when absent.
    pub grading: Option<f64>,
    pub max_picard_iters: usize,
    pub fp_tolerance: f64,
    pub quad: QuadratureRule,
    /// Iterate even when `nu >= 1`.
    pub allow_hypothesis_violation: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mesh_per_interval: 64,
            grading: None,
            max_picard_iters: 200,
            fp_tolerance: 1e-10,
            quad: QuadratureRule::default(),
            allow_hypothesis_violation: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mesh_per_interval < 8 {
            return Err(Error::InvalidArgument(format!(
                "mesh_per_interval must be at least 8, got {}",
                self.mesh_per_interval
            )));
        }
        if let Some(g) = self.grading {
            if !(g >= 1.0) || !g.is_finite() {
                return Err(Error::InvalidArgument(format!("grading must be at least 1, got {g}")));
            }
        }
        if self.max_picard_iters == 0 {
            return Err(Error::InvalidArgument("max_picard_iters must be positive".into()));
        }
        if !(self.fp_tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("fp_tolerance must be positive, got {}", self.fp_tolerance)));
        }
        self.quad.validate()
    }

    pub fn grading_for(&self, eta: f64) -> f64 {
        self.grading.unwrap_or(1.0 / eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub contraction_estimate: f64,
    pub converged: bool,
}

/// A control sampled on the solver mesh: `values[r][j]` at `s_j` of flow
/// interval `r`, `j = 0` being the right limit at `p_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshControl {
    pub values: Vec<Vec<DVector<f64>>>,
}

impl MeshControl {
    /// `(int ||u||^q)^{1/q}` over the flow intervals, trapezoidal on the mesh.
    pub fn norm_lq(&self, solver: &Solver, q: f64) -> f64 {
        let mut acc = 0.0;
        for (r, vals) in self.values.iter().enumerate() {
            let s = solver.flow_mesh(r);
            for j in 1..s.len() {
                let fa = vals[j - 1].norm().powf(q);
                let fb = vals[j].norm().powf(q);
                acc += 0.5 * (s[j] - s[j - 1]) * (fa + fb);
            }
        }
        acc.powf(1.0 / q)
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &MeshControl) -> MeshControl {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y * c).collect())
            .collect();
        MeshControl { values }
    }

    /// Control dimension.
    pub fn dim(&self) -> usize {
        self.values[0][0].len()
    }

    /// Rows `(t, u(t))` in time order; `p_r` rows are right limits.
    pub fn rows(&self, solver: &Solver) -> Vec<(f64, DVector<f64>)> {
        let mut out = Vec::new();
        for (r, vals) in self.values.iter().enumerate() {
            for (t, v) in solver.flow_mesh(r).iter().zip(vals) {
                out.push((*t, v.clone()));
            }
        }
        out
    }
}

/// Precomputed meshes and weights for one system.
#[derive(Debug, Clone)]
pub struct Solver {
    spec: SystemSpec,
    cfg: SolverConfig,
    kernel: FracKernel,
    nu: f64,
    /// `s_0 = p_r, ..., s_N = t_{r+1}`
    flow_nodes: Vec<Vec<f64>>,
    /// window `r + 1` nodes in `(t_{r+1}, p_{r+1}]`
    window_nodes: Vec<Vec<f64>>,
    /// `(s_i - p_r)^{eta-1} T_eta(s_i - p_r)`, `i = 1..N`
    hom: Vec<Vec<LinOp>>,
    weights: Vec<Vec<ProductWeights>>,
    /// memory weights at `s_i`, `i = 1..N`
    history: Vec<Vec<HistoryWeights>>,
}

impl Solver {
    pub fn new(spec: &SystemSpec, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let e = spec.eta.value();
        let part = &spec.partition;
        let m = part.m();
        let n = cfg.mesh_per_interval;
        let g = cfg.grading_for(e);
        let kernel = spec.generator.frac_kernel(spec.eta)?;

        let mut flow_nodes = Vec::with_capacity(m + 1);
        for r in 0..=m {
            let (p, end) = part.flow_interval(r);
            let mut s: Vec<f64> = (0..=n).map(|j| p + (end - p) * (j as f64 / n as f64).powf(g)).collect();
            s[0] = p;
            s[n] = end;
            flow_nodes.push(s);
        }
        let k = (n / 4).max(4);
        let mut window_nodes = Vec::with_capacity(m);
        for r in 1..=m {
            let (lo, hi) = part.window(r);
            let mut w: Vec<f64> = (1..=k).map(|j| lo + (hi - lo) * j as f64 / k as f64).collect();
            w[k - 1] = hi;
            window_nodes.push(w);
        }

        let mut hom = Vec::with_capacity(m + 1);
        let mut weights = Vec::with_capacity(m + 1);
        let mut history = Vec::with_capacity(m + 1);
        for r in 0..=m {
            let s = &flow_nodes[r];
            let p = s[0];
            let mut h_r = Vec::with_capacity(n);
            for &si in &s[1..] {
                h_r.push(kernel.eval(si - p)?.scaled((si - p).powf(e - 1.0)));
            }
            hom.push(h_r);
            let omegas: Vec<f64> = if r == 0 { vec![0.0, 1.0 - e] } else { vec![0.0, 1.0 - e, e] };
            weights.push(product_weights(&kernel, s, &omegas)?);
            let flows: Vec<Segment> =
                (0..r).map(|k| Segment { origin: flow_nodes[k][0], nodes: &flow_nodes[k][1..] }).collect();
            let wins: Vec<Segment> =
                (0..r).map(|k| Segment { origin: part.t(k + 1), nodes: &window_nodes[k] }).collect();
            history.push(if r == 0 {
                Vec::new()
            } else {
                s[1..].iter().map(|&si| history_weights(e, si, &flows, &wins)).collect()
            });
        }
        debug!("solver mesh: {} intervals, {} nodes each, grading {g}", m + 1, n);
        Ok(Self { spec: spec.clone(), cfg: cfg.clone(), kernel, nu: compute_nu(spec), flow_nodes, window_nodes, hom, weights, history })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn kernel(&self) -> &FracKernel {
        &self.kernel
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `p_r = s_0 < s_1 < ... < s_N = t_{r+1}`
    pub fn flow_mesh(&self, r: usize) -> &[f64] {
        &self.flow_nodes[r]
    }

    /// Nodes of window `r` (`1 <= r <= m`) in `(t_r, p_r]`.
    pub fn window_mesh(&self, r: usize) -> &[f64] {
        &self.window_nodes[r - 1]
    }

    /// Terminal product weights of flow interval `r` for one forcing
    /// component (`0`: `Bu`, `1`: weighted `h`, `2`: weighted `phi`).
    pub(crate) fn terminal_weights(&self, r: usize, component: usize) -> &[LinOp] {
        let w = &self.weights[r][component];
        &w.rows[w.rows.len() - 1]
    }

    /// `(t_{r+1}-p_r)^{eta-1} T_eta(t_{r+1}-p_r)`
    pub(crate) fn terminal_hom(&self, r: usize) -> &LinOp {
        self.hom[r].last().expect("non-empty mesh")
    }

    pub fn zero_control(&self) -> MeshControl {
        let k = self.spec.control_dim();
        MeshControl {
            values: self.flow_nodes.iter().map(|s| vec![DVector::zeros(k); s.len()]).collect(),
        }
    }

    /// Sample `u(t)` on the flow meshes (`t = p_r` is evaluated as is).
    pub fn control_from_fn<F: FnMut(f64) -> DVector<f64>>(&self, mut u: F) -> Result<MeshControl> {
        let k = self.spec.control_dim();
        let mut values = Vec::with_capacity(self.flow_nodes.len());
        for s in &self.flow_nodes {
            let mut row = Vec::with_capacity(s.len());
            for &t in s {
                let v = u(t);
                if v.len() != k {
                    return Err(Error::DimensionMismatch { expected: k, got: v.len() });
                }
                row.push(v);
            }
            values.push(row);
        }
        Ok(MeshControl { values })
    }

    fn check_control(&self, u: &MeshControl) -> Result<()> {
        let k = self.spec.control_dim();
        if u.values.len() != self.flow_nodes.len()
            || u.values.iter().zip(&self.flow_nodes).any(|(v, s)| v.len() != s.len())
        {
            return Err(Error::InvalidArgument("control is not sampled on this solver's mesh".into()));
        }
        if let Some(v) = u.values.iter().flatten().find(|v| v.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, got: v.len() });
        }
        Ok(())
    }

    fn check_trajectory(&self, z: &Trajectory) -> Result<()> {
        let ok = z.flows.len() == self.flow_nodes.len()
            && z.flows.iter().zip(&self.flow_nodes).all(|(f, s)| f.nodes.as_slice() == &s[1..] && f.origin_weighted.is_some())
            && z.windows.iter().zip(&self.window_nodes).all(|(w, s)| &w.nodes == s && w.origin_weighted.is_some());
        if !ok {
            return Err(Error::HistoryIncomplete(z.flows.len()));
        }
        Ok(())
    }

    fn flow_sample(&self, r: usize, w0: DVector<f64>, values: Vec<DVector<f64>>) -> Result<SampledFunction> {
        let s = &self.flow_nodes[r];
        SampledFunction::new(s[0], s[1..].to_vec(), values, 1.0 - self.spec.eta.value(), Some(w0))
    }

    /// Window `r` sampled from the left limit `z(t_r^-)`.
    fn window_sample(&self, r: usize, left: &DVector<f64>) -> Result<SampledFunction> {
        let t_r = self.spec.partition.t(r);
        let origin = self.spec.psi(r, t_r, left);
        let nodes = self.window_nodes[r - 1].clone();
        let values = nodes.iter().map(|&x| self.spec.psi(r, x, left)).collect();
        SampledFunction::new(t_r, nodes, values, 0.0, Some(origin))
    }

    /// The first term of the mild-solution formula on every interval, chained
    /// through the impulses.
    pub fn homogeneous(&self) -> Result<Trajectory> {
        let m = self.spec.partition.m();
        let ginv = 1.0 / gamma(self.spec.eta.value());
        let mut datum = self.spec.z0.clone();
        let mut flows = Vec::with_capacity(m + 1);
        let mut windows = Vec::with_capacity(m);
        for r in 0..=m {
            let values: Vec<DVector<f64>> = self.hom[r].iter().map(|h| h.apply(&datum)).collect();
            let left = values.last().expect("non-empty").clone();
            flows.push(self.flow_sample(r, &datum * ginv, values)?);
            if r < m {
                windows.push(self.window_sample(r + 1, &left)?);
                datum = self.spec.psi(r + 1, self.spec.partition.p(r + 1), &left);
            }
        }
        Trajectory::new(self.spec.eta, self.spec.partition.clone(), flows, windows)
    }

    /// `phi_r` at node `i` of flow interval `r`.
    fn memory_at(&self, z: &Trajectory, r: usize, i: usize) -> DVector<f64> {
        let mut acc = DVector::zeros(self.spec.dim());
        if r == 0 {
            return acc;
        }
        apply_history(&self.history[r][i - 1], z, &mut acc);
        acc
    }

    /// Weighted forcing samples `[B u, (s-p)^{1-eta} h, (s-p)^eta phi]` on
    /// `s_0..s_N` of interval `r`, evaluated on `z`.
    pub(crate) fn forcing(&self, u: &MeshControl, z: &Trajectory, r: usize) -> Vec<Vec<DVector<f64>>> {
        let e = self.spec.eta.value();
        let s = &self.flow_nodes[r];
        let p = s[0];
        let flow = &z.flows[r];
        let bu: Vec<DVector<f64>> = u.values[r].iter().map(|v| self.spec.control_map.apply(v)).collect();
        let mut hw = Vec::with_capacity(s.len());
        hw.push(self.nonlinear_origin_limit(r, flow.origin_weighted.as_ref().expect("checked")));
        for (j, v) in flow.values.iter().enumerate() {
            let sj = s[j + 1];
            hw.push(self.spec.h(r, sj, v) * (sj - p).powf(1.0 - e));
        }
        let mut out = vec![bu, hw];
        debug_assert_eq!(out.len(), MEMORY);
        if r > 0 {
            let mut mem = Vec::with_capacity(s.len());
            let last = z.windows[r - 1].values.last().expect("non-empty");
            mem.push(last / gamma(1.0 - e));
            for i in 1..s.len() {
                mem.push(self.memory_at(z, r, i) * (s[i] - p).powf(e));
            }
            out.push(mem);
        }
        out
    }

    /// `lim_{s -> p_r} (s-p_r)^{1-eta} h(s, z(s))` for `z ~ (s-p_r)^{eta-1} w0`.
    fn nonlinear_origin_limit(&self, r: usize, w0: &DVector<f64>) -> DVector<f64> {
        let e = self.spec.eta.value();
        let (p, end) = self.spec.partition.flow_interval(r);
        let eps = 1e-24 * (end - p);
        self.spec.h(r, p + eps, &(w0 * eps.powf(e - 1.0))) * eps.powf(1.0 - e)
    }

    /// `G(z)` on the solver mesh.
    pub fn g_apply(&self, u: &MeshControl, z: &Trajectory) -> Result<Trajectory> {
        self.g_apply_frozen(u, z, 0)
    }

    /// `G(z)` with flow intervals `< frozen` (and the windows that follow
    /// them) copied from `z`.
    pub fn g_apply_frozen(&self, u: &MeshControl, z: &Trajectory, frozen: usize) -> Result<Trajectory> {
        self.check_control(u)?;
        self.check_trajectory(z)?;
        let part = &self.spec.partition;
        let m = part.m();
        let ginv = 1.0 / gamma(self.spec.eta.value());
        let mut flows = Vec::with_capacity(m + 1);
        for r in 0..=m {
            if r < frozen {
                flows.push(z.flows[r].clone());
                continue;
            }
            let datum = if r == 0 { self.spec.z0.clone() } else { self.spec.psi(r, part.p(r), z.left_limit(r)) };
            let g = self.forcing(u, z, r);
            let mut values = Vec::with_capacity(self.hom[r].len());
            for (i, h) in self.hom[r].iter().enumerate() {
                let mut v = h.apply(&datum);
                for (c, w) in self.weights[r].iter().enumerate() {
                    w.apply_row(i + 1, &g[c][..=i + 1], &mut v);
                }
                values.push(v);
            }
            if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
                return Err(Error::QuadratureFailure(format!("non-finite state on interval {r}")));
            }
            flows.push(self.flow_sample(r, &datum * ginv, values)?);
        }
        let mut windows = Vec::with_capacity(m);
        for r in 1..=m {
            if r <= frozen {
                windows.push(z.windows[r - 1].clone());
            } else {
                let left = flows[r - 1].values.last().expect("non-empty").clone();
                windows.push(self.window_sample(r, &left)?);
            }
        }
        Trajectory::new(self.spec.eta, part.clone(), flows, windows)
    }

    /// Fixed point of `G` from the homogeneous iterate.
    pub fn solve(&self, u: &MeshControl) -> Result<(Trajectory, SolveReport)> {
        self.solve_from(u, None, 0)
    }

    /// Fixed point of `G` from `warm` (or the homogeneous iterate), keeping
    /// flow intervals `< frozen` of `warm` unchanged.
    pub fn solve_from(&self, u: &MeshControl, warm: Option<&Trajectory>, frozen: usize) -> Result<(Trajectory, SolveReport)> {
        if self.nu >= 1.0 {
            if !self.cfg.allow_hypothesis_violation {
                return Err(Error::HypothesisViolated(format!("contraction constant nu = {} >= 1", self.nu)));
            }
            log::warn!("iterating with nu = {} >= 1", self.nu);
        }
        let mut z = match warm {
            Some(w) => w.clone(),
            None => self.homogeneous()?,
        };
        let frozen = if warm.is_some() { frozen } else { 0 };
        let mut history = Vec::new();
        let mut ratio = 0.0f64;
        for k in 1..=self.cfg.max_picard_iters {
            let next = self.g_apply_frozen(u, &z, frozen)?;
            let res = next.difference(&z)?.pc_norm()?;
            let scale = next.pc_norm()?.max(1.0);
            if let Some(&prev) = history.last() {
                if prev > 1e-13 * scale {
                    ratio = ratio.max(res / prev);
                }
            }
            history.push(res);
            z = next;
            debug!("picard {k}: residual {res:.3e}");
            if res <= self.cfg.fp_tolerance {
                info!("picard converged in {k} iterations (contraction {ratio:.3})");
                return Ok((z, SolveReport { iterations: k, residual_history: history, contraction_estimate: ratio, converged: true }));
            }
            if !res.is_finite() {
                break;
            }
        }
        Err(Error::NonConvergence {
            iterations: history.len(),
            last_error: history.last().copied().unwrap_or(f64::NAN),
            ratio,
        })
    }

    /// `phi_r(t)` for `t` in `(p_r, t_{r+1}]`.
    pub fn history_term(&self, z: &Trajectory, r: usize, t: f64) -> Result<DVector<f64>> {
        history_term_on(&self.spec, z, r, t)
    }
}

/// `phi_r(t, z)` read from the samples of `z` on the intervals before `r`.
pub fn history_term(spec: &SystemSpec, z: &Trajectory, r: usize, t: f64) -> Result<DVector<f64>> {
    history_term_on(spec, z, r, t)
}

fn history_term_on(spec: &SystemSpec, z: &Trajectory, r: usize, t: f64) -> Result<DVector<f64>> {
    let part = &spec.partition;
    let m = part.m();
    if r > m {
        return Err(Error::IndexOutOfRange { index: r, max: m });
    }
    let (lo, hi) = part.flow_interval(r);
    if !(t > lo && t <= hi) {
        return Err(Error::TimeOutsideWindow { t, lo, hi });
    }
    let mut acc = DVector::zeros(spec.dim());
    if r == 0 {
        return Ok(acc);
    }
    if z.flows.len() < r || z.windows.len() < r {
        return Err(Error::HistoryIncomplete(r));
    }
    for k in 0..r {
        if z.flows[k].origin_weighted.is_none() || z.windows[k].origin_weighted.is_none() {
            return Err(Error::HistoryIncomplete(k));
        }
    }
    let flows: Vec<Segment> = (0..r).map(|k| Segment { origin: z.flows[k].origin, nodes: &z.flows[k].nodes }).collect();
    let wins: Vec<Segment> = (0..r).map(|k| Segment { origin: z.windows[k].origin, nodes: &z.windows[k].nodes }).collect();
    let hw = history_weights(spec.eta.value(), t, &flows, &wins);
    apply_history(&hw, z, &mut acc);
    Ok(acc)
}

/// `acc += sum of weights times samples`
fn apply_history(hw: &HistoryWeights, z: &Trajectory, acc: &mut DVector<f64>) {
    let segs = hw.flow.iter().zip(&z.flows).chain(hw.window.iter().zip(&z.windows));
    for (w, f) in segs {
        acc.axpy(w[0], f.origin_weighted.as_ref().expect("checked"), 1.0);
        for (wj, v) in w[1..].iter().zip(&f.values) {
            acc.axpy(*wj, v, 1.0);
        }
    }
}

/// `|| lim_{t->0+} (I^{1-eta} z)(t) - z_0 ||`, extrapolating quadratically
/// in `t^eta` from the first three mesh nodes.
pub fn verify_initial_condition(spec: &SystemSpec, z: &Trajectory, rule: &QuadratureRule) -> Result<f64> {
    let e = spec.eta.value();
    let f = &z.flows[0];
    if f.nodes.is_empty() {
        return Err(Error::HistoryIncomplete(0));
    }
    let n = f.nodes.len().min(3);
    let xs: Vec<f64> = f.nodes[..n].iter().map(|t| t.powf(e)).collect();
    let mut v0 = DVector::zeros(spec.dim());
    for j in 0..n {
        let mut l = 1.0;
        for k in 0..n {
            if k != j {
                l *= xs[k] / (xs[k] - xs[j]);
            }
        }
        v0.axpy(l, &rl_integral(1.0 - e, f, f.nodes[j], rule)?, 1.0);
    }
    Ok((v0 - &spec.z0).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::{mittag_leffler2, FractionalOrder};
    use crate::operators::{ControlMap, Generator};
    use crate::system::{ImpulseKind, ImpulseMap, ImpulseSpec, NonlinearityKind, Partition};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn scalar(eta: f64, lam: f64, nl: NonlinearityKind, part: Partition, gains: &[f64]) -> SystemSpec {
        let a = part.a();
        let imps = gains.iter().map(|&g| ImpulseMap::new(ImpulseKind::Linear { gain: g })).collect();
        SystemSpec::new(
            FractionalOrder::new(eta).unwrap(),
            2.0,
            part,
            Generator::dense(DMatrix::from_element(1, 1, lam), a).unwrap(),
            ControlMap::Identity,
            nl,
            ImpulseSpec::new(imps),
            DVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    fn cfg(n: usize) -> SolverConfig {
        SolverConfig { mesh_per_interval: n, ..SolverConfig::default() }
    }

    fn exact(eta: f64, lam: f64, t: f64) -> f64 {
        t.powf(eta - 1.0) * mittag_leffler2(eta, eta, lam * t.powf(eta)).unwrap()
    }

    #[test]
    fn linear_benchmark_is_a_fixed_point() {
        let eta = 2.0 / 3.0;
        let part = Partition::new(vec![0.0], vec![1.0]).unwrap();
        let spec = scalar(eta, -1.0, NonlinearityKind::Zero, part, &[]);
        let solver = Solver::new(&spec, &cfg(32)).unwrap();
        let (z, rep) = solver.solve(&solver.zero_control()).unwrap();
        assert!(rep.converged);
        assert_relative_eq!(z.terminal()[0], mittag_leffler2(eta, eta, -1.0).unwrap(), max_relative = 1e-12);
        let again = solver.g_apply(&solver.zero_control(), &z).unwrap();
        assert!(again.difference(&z).unwrap().pc_norm().unwrap() < 1e-14);
        assert!(verify_initial_condition(&spec, &z, &QuadratureRule::default()).unwrap() < 1e-3);
    }

    #[test]
    fn split_generator_reproduces_the_benchmark() {
        // A = -0.5 with h = -0.5 z has the same solution as A = -1
        let eta = 2.0 / 3.0;
        let part = Partition::new(vec![0.0], vec![1.0]).unwrap();
        let spec = scalar(eta, -0.5, NonlinearityKind::Linear { gain: -0.5 }, part, &[]);
        let solver = Solver::new(&spec, &cfg(128)).unwrap();
        let (z, _) = solver.solve(&solver.zero_control()).unwrap();
        for (t, v) in z.flows[0].nodes.iter().zip(&z.flows[0].values).step_by(16) {
            assert_relative_eq!(v[0], exact(eta, -1.0, *t), max_relative = 1e-4);
        }
    }

    #[test]
    fn zero_data_stay_zero() {
        let part = Partition::new(vec![0.0, 0.5], vec![0.3, 1.0]).unwrap();
        let mut spec = scalar(0.6, -1.0, NonlinearityKind::Sine { amplitude: 0.2 }, part, &[0.5]);
        spec.z0 = DVector::zeros(1);
        let solver = Solver::new(&spec, &cfg(16)).unwrap();
        let z0 = solver.homogeneous().unwrap();
        let g = solver.g_apply(&solver.zero_control(), &z0).unwrap();
        assert_eq!(g.pc_norm().unwrap(), 0.0);
    }

    #[test]
    fn impulse_restarts_from_weighted_datum() {
        let eta = 0.6;
        let part = Partition::new(vec![0.0, 0.5], vec![0.3, 1.0]).unwrap();
        let spec = scalar(eta, -1.0, NonlinearityKind::Zero, part, &[0.5]);
        let solver = Solver::new(&spec, &SolverConfig { allow_hypothesis_violation: true, ..cfg(32) }).unwrap();
        let (z, rep) = solver.solve(&solver.zero_control()).unwrap();
        assert!(rep.converged);
        let datum = 0.5 * z.left_limit(1)[0];
        let w0 = z.flows[1].origin_weighted.as_ref().unwrap()[0];
        assert_relative_eq!(w0, datum / gamma(eta), max_relative = 1e-14);
        assert_relative_eq!(z.left_limit(1)[0], exact(eta, -1.0, 0.3), max_relative = 1e-10);
    }

    #[test]
    fn history_term_zero_cases() {
        let part = Partition::new(vec![0.0, 0.5], vec![0.3, 1.0]).unwrap();
        let mut spec = scalar(0.6, -1.0, NonlinearityKind::Zero, part, &[0.5]);
        spec.z0 = DVector::zeros(1);
        let solver = Solver::new(&spec, &cfg(16)).unwrap();
        let z = solver.homogeneous().unwrap();
        assert_eq!(solver.history_term(&z, 1, 0.7).unwrap()[0], 0.0);
        assert_eq!(solver.history_term(&z, 0, 0.2).unwrap()[0], 0.0);
        assert!(solver.history_term(&z, 1, 0.4).is_err());
    }

    #[test]
    fn guard_rejects_large_nu() {
        let part = Partition::new(vec![0.0], vec![1.0]).unwrap();
        let spec = scalar(0.5, -1.0, NonlinearityKind::Sine { amplitude: 0.9 }, part, &[]);
        let solver = Solver::new(&spec, &cfg(16)).unwrap();
        assert!(matches!(solver.solve(&solver.zero_control()), Err(Error::HypothesisViolated(_))));
        let forced = Solver::new(&spec, &SolverConfig { allow_hypothesis_violation: true, ..cfg(16) }).unwrap();
        assert!(forced.solve(&forced.zero_control()).is_ok());
    }

    #[test]
    fn scaled_trajectory_defect() {
        let eta = 2.0 / 3.0;
        let part = Partition::new(vec![0.0], vec![1.0]).unwrap();
        let spec = scalar(eta, -1.0, NonlinearityKind::Zero, part, &[]);
        let solver = Solver::new(&spec, &cfg(32)).unwrap();
        let (z, _) = solver.solve(&solver.zero_control()).unwrap();
        let d = verify_initial_condition(&spec, &z.scaled(2.0), &QuadratureRule::default()).unwrap();
        assert_relative_eq!(d, 1.0, max_relative = 1e-3);
    }
}
