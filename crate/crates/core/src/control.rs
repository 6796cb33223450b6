//! Steering controls built interval by interval from the terminal operator
//! `F u = int_{p_r}^{t_{r+1}} (t_{r+1}-s)^{eta-1} T_eta(t_{r+1}-s) u(s) ds`.

use std::fmt::Write as _;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fracops::calculus::SampledFunction;
use crate::fracops::special::gamma;
use crate::hypotheses::check_all;
use crate::solver::{MeshControl, Solver, CONTROL, MEMORY, NONLINEAR};
use crate::system::{SystemSpec, Trajectory};

/// Relative singular-value cutoff of the discrete terminal operator.
const RANK_TOL: f64 = 1e-10;
/// Relative residual accepted for `F zeta = target`.
const ZETA_TOL: f64 = 1e-6;
/// Relative change of `e_n` below which the iteration is stagnant.
const STAGNATION: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SteeringProblem {
    pub target: DVector<f64>,
    pub epsilon: f64,
    pub max_outer_iters: usize,
    /// Targets at `t_{r+1}` for `r < m`; `None` keeps the uncontrolled
    /// continuation.
    pub waypoints: Option<Vec<DVector<f64>>>,
    /// Warn instead of failing when (H5)-(H8) do not hold.
    pub allow_violation: bool,
}

impl SteeringProblem {
    pub fn new(target: DVector<f64>, epsilon: f64) -> Self {
        Self { target, epsilon, max_outer_iters: 50, waypoints: None, allow_violation: false }
    }

    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidArgument("max_outer_iters must be positive".into()));
        }
        spec.check_state(&self.target)?;
        if let Some(w) = &self.waypoints {
            let m = spec.partition.m();
            if w.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: w.len() });
            }
            for v in w {
                spec.check_state(v)?;
            }
        }
        Ok(())
    }

    /// Error budget of interval `r`: `eps/2` on the last one, `eps/2^{m-r+1}` before.
    pub fn budget(&self, r: usize, m: usize) -> f64 {
        self.epsilon / 2f64.powi((m - r + 1) as i32)
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub r: usize,
    pub n: usize,
    pub error: f64,
    /// `e_n / e_{n-1}`, `NaN` for the first iterate.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRun {
    pub r: usize,
    pub budget: f64,
    pub errors: Vec<f64>,
    /// `||B w_n||_{L^q} / ||B w_{n-1}||_{L^q}` for consecutive corrections.
    pub cauchy_ratios: Vec<f64>,
    pub controls: Vec<Vec<DVector<f64>>>,
    pub corrections: Vec<Vec<DVector<f64>>>,
    pub converged: bool,
}

impl IntervalRun {
    pub fn iterations(&self) -> usize {
        self.errors.len()
    }

    /// Largest `e_n / e_{n-1}`.
    pub fn decay_ratio(&self) -> f64 {
        self.errors.windows(2).map(|w| w[1] / w[0]).fold(f64::NAN, f64::max)
    }

    pub fn max_cauchy_ratio(&self) -> f64 {
        self.cauchy_ratios.iter().copied().fold(f64::NAN, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlRun {
    pub intervals: Vec<IntervalRun>,
}

impl ControlRun {
    pub fn rows(&self) -> Vec<RunRow> {
        let mut out = Vec::new();
        for iv in &self.intervals {
            for (k, &e) in iv.errors.iter().enumerate() {
                let ratio = if k == 0 { f64::NAN } else { e / iv.errors[k - 1] };
                out.push(RunRow { r: iv.r, n: k + 1, error: e, ratio });
            }
        }
        out
    }

    /// `r,n,e_n,ratio`, one row per accepted iterate.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,n,e_n,ratio\n");
        for row in self.rows() {
            let ratio = if row.ratio.is_nan() { String::new() } else { format!("{:.16e}", row.ratio) };
            let _ = writeln!(s, "{},{},{:.16e},{}", row.r, row.n, row.error, ratio);
        }
        s
    }

    pub fn converged(&self) -> bool {
        self.intervals.iter().all(|iv| iv.converged)
    }
}

/// Result of [`steer`].
#[derive(Debug, Clone)]
pub struct Steered {
    pub control: MeshControl,
    pub run: ControlRun,
    pub trajectory: Trajectory,
}

/// `h(s, z(s))` on the flow nodes of interval `r`.
pub fn nemytskii_h(spec: &SystemSpec, z: &Trajectory, r: usize) -> Result<SampledFunction> {
    let flow = flow_of(z, r)?;
    let e = spec.eta.value();
    let values = flow.nodes.iter().zip(&flow.values).map(|(&t, v)| spec.h(r, t, v)).collect();
    let origin = flow.origin_weighted.as_ref().map(|w0| {
        let (p, end) = spec.partition.flow_interval(r);
        let eps = 1e-24 * (end - p);
        spec.h(r, p + eps, &(w0 * eps.powf(e - 1.0))) * eps.powf(1.0 - e)
    });
    SampledFunction::new(flow.origin, flow.nodes.clone(), values, flow.weight_exponent, origin)
}

/// `phi_r(s)` on the flow nodes of interval `r >= 1`.
pub fn nemytskii_phi(spec: &SystemSpec, z: &Trajectory, r: usize) -> Result<SampledFunction> {
    let flow = flow_of(z, r)?;
    let e = spec.eta.value();
    let values = flow
        .nodes
        .iter()
        .map(|&t| crate::solver::history_term(spec, z, r, t))
        .collect::<Result<Vec<_>>>()?;
    let origin = match r {
        0 => None,
        _ => z.windows.get(r - 1).and_then(|w| w.values.last()).map(|v| v / gamma(1.0 - e)),
    };
    SampledFunction::new(flow.origin, flow.nodes.clone(), values, e, origin)
}

fn flow_of(z: &Trajectory, r: usize) -> Result<&SampledFunction> {
    z.flows.get(r).ok_or(Error::HistoryIncomplete(r))
}

/// Discrete terminal operator `u -> F B u` of one interval with its
/// minimum-`L^2` right inverse.
#[derive(Debug, Clone)]
struct TerminalMap {
    /// `n x k(N+1)`
    fb: DMatrix<f64>,
    /// `k(N+1) x n`
    pinv: DMatrix<f64>,
    rank_deficient: bool,
    k: usize,
}

impl TerminalMap {
    fn new(solver: &Solver, r: usize) -> Result<Self> {
        let spec = solver.spec();
        let n = spec.dim();
        let k = spec.control_dim();
        let b = spec.control_map.matrix(n);
        let w = solver.terminal_weights(r, CONTROL);
        let s = solver.flow_mesh(r);
        let cols = k * w.len();
        let mut fb = DMatrix::zeros(n, cols);
        let mut scale = DVector::zeros(cols);
        for (j, wj) in w.iter().enumerate() {
            let block = wj.to_dense() * &b;
            fb.columns_mut(j * k, k).copy_from(&block);
            let h = 0.5 * (s[(j + 1).min(s.len() - 1)] - s[j.saturating_sub(1)]);
            for c in 0..k {
                scale[j * k + c] = h.sqrt();
            }
        }
        // minimise the trapezoidal L^2 norm: u = D^{-1/2} (F B D^{-1/2})^+ v
        let mut scaled = fb.clone();
        for (c, mut col) in scaled.column_iter_mut().enumerate() {
            col /= scale[c];
        }
        let svd = scaled.svd(true, true);
        let smax = svd.singular_values.max();
        let cutoff = RANK_TOL * smax;
        let rank = svd.singular_values.iter().filter(|&&x| x > cutoff).count();
        let rank_deficient = smax == 0.0 || rank < n;
        let mut pinv = svd.pseudo_inverse(cutoff.max(f64::MIN_POSITIVE)).map_err(|e| Error::SingularTerminalOperator(e.to_string()))?;
        for (c, mut row) in pinv.row_iter_mut().enumerate() {
            row /= scale[c];
        }
        Ok(Self { fb, pinv, rank_deficient, k })
    }

    fn preimage(&self, v: &DVector<f64>) -> Vec<DVector<f64>> {
        let flat = &self.pinv * v;
        flat.as_slice().chunks(self.k).map(DVector::from_column_slice).collect()
    }

    fn apply(&self, u: &[DVector<f64>]) -> DVector<f64> {
        let flat: Vec<f64> = u.iter().flat_map(|v| v.iter().copied()).collect();
        &self.fb * DVector::from_vec(flat)
    }
}

/// A control on flow interval `r` with `F B zeta = target`, as samples at
/// `s_0 = p_r, ..., s_N = t_{r+1}`.
pub fn zeta_init(solver: &Solver, r: usize, target: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let m = solver.spec().partition.m();
    if r > m {
        return Err(Error::IndexOutOfRange { index: r, max: m });
    }
    solver.spec().check_state(target)?;
    zeta_with(&TerminalMap::new(solver, r)?, target, true)
}

/// [`zeta_init`] as a sampled function on `(p_r, t_{r+1}]`.
pub fn zeta_sampled(solver: &Solver, r: usize, target: &DVector<f64>) -> Result<SampledFunction> {
    let vals = zeta_init(solver, r, target)?;
    let s = solver.flow_mesh(r);
    SampledFunction::new(s[0], s[1..].to_vec(), vals[1..].to_vec(), 0.0, Some(vals[0].clone()))
}

fn zeta_with(map: &TerminalMap, target: &DVector<f64>, strict: bool) -> Result<Vec<DVector<f64>>> {
    let zeta = map.preimage(target);
    let res = (map.apply(&zeta) - target).norm();
    if strict && (map.rank_deficient || res > ZETA_TOL * target.norm().max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularTerminalOperator(format!("residual {res:.3e} for target norm {:.3e}", target.norm())));
    }
    Ok(zeta)
}

/// `||v||_{L^q}` of samples on the flow mesh of interval `r`.
fn interval_lq(solver: &Solver, r: usize, vals: &[DVector<f64>], q: f64) -> f64 {
    let s = solver.flow_mesh(r);
    let mut acc = 0.0;
    for j in 1..s.len() {
        acc += 0.5 * (s[j] - s[j - 1]) * (vals[j - 1].norm().powf(q) + vals[j].norm().powf(q));
    }
    acc.powf(1.0 / q)
}

/// `F Omega_h(z) + F Omega_phi(z)` at `t_{r+1}`.
fn nonlinear_terminal(solver: &Solver, u: &MeshControl, z: &Trajectory, r: usize) -> DVector<f64> {
    let g = solver.forcing(u, z, r);
    let mut out = DVector::zeros(solver.spec().dim());
    for c in [NONLINEAR, MEMORY] {
        if let Some(gc) = g.get(c) {
            for (w, v) in solver.terminal_weights(r, c).iter().zip(gc) {
                w.apply_acc(1.0, v, &mut out);
            }
        }
    }
    out
}

/// Steer flow interval `r` to `target` at `t_{r+1}`, keeping the earlier
/// intervals of `z_in` fixed.
pub fn steer_interval(
    solver: &Solver,
    problem: &SteeringProblem,
    r: usize,
    target: &DVector<f64>,
    u: MeshControl,
    z_in: Trajectory,
) -> Result<(MeshControl, Trajectory, IntervalRun)> {
    let spec = solver.spec();
    let m = spec.partition.m();
    if r > m {
        return Err(Error::IndexOutOfRange { index: r, max: m });
    }
    let budget = problem.budget(r, m);
    let mut run = IntervalRun {
        r,
        budget,
        errors: Vec::new(),
        cauchy_ratios: Vec::new(),
        controls: Vec::new(),
        corrections: Vec::new(),
        converged: false,
    };
    let e0 = (target - z_in.flows[r].values.last().expect("non-empty")).norm();
    if e0 <= budget {
        run.errors.push(e0);
        run.controls.push(u.values[r].clone());
        run.converged = true;
        info!("interval {r}: accepted the incoming control (error {e0:.3e})");
        return Ok((u, z_in, run));
    }

    let datum = if r == 0 { spec.z0.clone() } else { spec.psi(r, spec.partition.p(r), z_in.left_limit(r)) };
    let star = target - solver.terminal_hom(r).apply(&datum);
    let map = TerminalMap::new(solver, r)?;
    if map.rank_deficient {
        if !problem.allow_violation {
            return Err(Error::SingularTerminalOperator(format!("terminal operator of interval {r} is rank deficient")));
        }
        warn!("interval {r}: rank-deficient terminal operator, using the least-squares inverse");
    }
    let mut u = u;
    u.values[r] = zeta_with(&map, &star, false)?;
    let mut z = z_in;
    let mut prev_terminal = DVector::zeros(spec.dim());
    let mut prev_corr: Option<f64> = None;
    let mut stagnant = 0;
    for n in 1..=problem.max_outer_iters {
        let (zn, _) = solver.solve_from(&u, Some(&z), r)?;
        z = zn;
        let e = (target - z.flows[r].values.last().expect("non-empty")).norm();
        run.controls.push(u.values[r].clone());
        if let Some(&last) = run.errors.last() {
            stagnant = if (e - last).abs() <= STAGNATION * last { stagnant + 1 } else { 0 };
        }
        run.errors.push(e);
        info!("interval {r}, iterate {n}: error {e:.3e} (budget {budget:.3e})");
        if e <= budget {
            run.converged = true;
            return Ok((u, z, run));
        }
        if stagnant >= 3 {
            break;
        }
        let term = nonlinear_terminal(solver, &u, &z, r);
        let omega = map.preimage(&(&term - &prev_terminal));
        prev_terminal = term;
        let b_omega: Vec<DVector<f64>> = omega.iter().map(|w| spec.control_map.apply(w)).collect();
        let size = interval_lq(solver, r, &b_omega, spec.q);
        if let Some(prev) = prev_corr {
            if prev > 0.0 {
                run.cauchy_ratios.push(size / prev);
            }
        }
        prev_corr = Some(size);
        for (uj, wj) in u.values[r].iter_mut().zip(&omega) {
            *uj -= wj;
        }
        run.corrections.push(omega);
    }
    let ratio = run.decay_ratio();
    Err(Error::NonConvergence { iterations: run.errors.len(), last_error: *run.errors.last().unwrap_or(&f64::NAN), ratio })
}

/// Steer `z(a)` to `problem.target`, one flow interval at a time.
pub fn steer(solver: &Solver, problem: &SteeringProblem) -> Result<Steered> {
    let spec = solver.spec();
    problem.validate(spec)?;
    let report = check_all(spec, 0.0);
    if !report.passes(&["H5", "H6", "H7", "H8"]) {
        let failed: Vec<&str> = report.checks.iter().filter(|(_, c)| !c.pass).map(|(k, _)| k.as_str()).collect();
        let msg = format!("steering hypotheses fail: {}", failed.join(", "));
        if !problem.allow_violation {
            return Err(Error::HypothesisViolated(msg));
        }
        warn!("{msg}");
    }
    let m = spec.partition.m();
    let mut u = solver.zero_control();
    let (mut z, _) = solver.solve(&u)?;
    let mut run = ControlRun::default();
    for r in 0..=m {
        let target = if r == m {
            problem.target.clone()
        } else {
            match &problem.waypoints {
                Some(w) => w[r].clone(),
                None => z.flows[r].values.last().expect("non-empty").clone(),
            }
        };
        let (un, zn, iv) = steer_interval(solver, problem, r, &target, u, z)?;
        u = un;
        z = zn;
        run.intervals.push(iv);
    }
    Ok(Steered { control: u, run, trajectory: z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::FractionalOrder;
    use crate::operators::{ControlMap, Generator};
    use crate::solver::SolverConfig;
    use crate::system::{ImpulseKind, ImpulseMap, ImpulseSpec, NonlinearityKind, Partition};
    use approx::assert_relative_eq;

    fn scalar(lam: f64, nl: NonlinearityKind, p: Vec<f64>, t: Vec<f64>, cm: ControlMap, gen_dim: usize) -> SystemSpec {
        let part = Partition::new(p, t).unwrap();
        let m = part.m();
        let a = part.a();
        SystemSpec::new(
            FractionalOrder::new(2.0 / 3.0).unwrap(),
            2.0,
            part,
            Generator::spectral(vec![lam; gen_dim], None, a).unwrap(),
            cm,
            nl,
            ImpulseSpec::new((0..m).map(|_| ImpulseMap::new(ImpulseKind::Linear { gain: 0.1 })).collect()),
            DVector::from_element(gen_dim, 1.0),
        )
        .unwrap()
    }

    fn solver(spec: &SystemSpec, n: usize) -> Solver {
        Solver::new(spec, &SolverConfig { mesh_per_interval: n, ..Default::default() }).unwrap()
    }

    #[test]
    fn zero_target_gives_zero_density() {
        let spec = scalar(-1.0, NonlinearityKind::Zero, vec![0.0], vec![1.0], ControlMap::Identity, 1);
        let s = solver(&spec, 16);
        let z = zeta_init(&s, 0, &DVector::zeros(1)).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn constant_density_oracle() {
        // A = 0: F c = c t_1^eta / Gamma(eta + 1)
        let spec = scalar(0.0, NonlinearityKind::Zero, vec![0.0], vec![0.8], ControlMap::Identity, 1);
        let s = solver(&spec, 32);
        let map = TerminalMap::new(&s, 0).unwrap();
        let c = 0.7;
        let ones = vec![DVector::from_element(1, c); s.flow_mesh(0).len()];
        let e = 2.0 / 3.0;
        assert_relative_eq!(map.apply(&ones)[0], c * 0.8f64.powf(e) / gamma(e + 1.0), max_relative = 1e-10);
        let g = 0.3;
        let zeta = zeta_init(&s, 0, &DVector::from_element(1, g)).unwrap();
        assert_relative_eq!(map.apply(&zeta)[0], g, max_relative = 1e-9);
    }

    #[test]
    fn rank_deficient_map_is_rejected() {
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let spec = scalar(-1.0, NonlinearityKind::Zero, vec![0.0], vec![1.0], ControlMap::Dense(b), 2);
        let s = solver(&spec, 16);
        let err = zeta_init(&s, 0, &DVector::from_vec(vec![0.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::SingularTerminalOperator(_)));
    }

    #[test]
    fn linear_problem_needs_one_iteration() {
        let spec = scalar(-1.0, NonlinearityKind::Zero, vec![0.0], vec![1.0], ControlMap::Identity, 1);
        let s = solver(&spec, 32);
        let out = steer(&s, &SteeringProblem::new(DVector::from_element(1, 0.5), 1e-6)).unwrap();
        assert_eq!(out.run.intervals[0].iterations(), 1);
        assert!((out.trajectory.terminal()[0] - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn uncontrolled_target_is_accepted_immediately() {
        let nl = NonlinearityKind::WeightedLinear { gain: 0.05, beta: 1.0 };
        let spec = scalar(-1.0, nl, vec![0.0, 0.6], vec![0.4, 1.0], ControlMap::Identity, 1);
        let s = solver(&spec, 32);
        let (z, _) = s.solve(&s.zero_control()).unwrap();
        let problem = SteeringProblem { allow_violation: true, ..SteeringProblem::new(z.terminal().clone(), 1e-3) };
        let out = steer(&s, &problem).unwrap();
        for iv in &out.run.intervals {
            assert_eq!(iv.iterations(), 1);
        }
        assert!(out.control.norm_lq(&s, 2.0) == 0.0);
    }

    #[test]
    fn nonlinear_steering_reaches_target() {
        let spec = scalar(-1.0, NonlinearityKind::Sine { amplitude: 0.05 }, vec![0.0, 0.6], vec![0.4, 1.0], ControlMap::Identity, 1);
        let s = solver(&spec, 32);
        // sin has no weighted Lipschitz constant, so (H5) is waived
        let problem = SteeringProblem { allow_violation: true, ..SteeringProblem::new(DVector::from_element(1, -0.3), 1e-3) };
        let out = steer(&s, &problem).unwrap();
        assert!((out.trajectory.terminal()[0] + 0.3).abs() <= 1e-3);
        let last = out.run.intervals.last().unwrap();
        assert!(last.iterations() > 1);
        assert!(last.decay_ratio() < 0.5);
        let csv = out.run.to_csv();
        assert!(csv.starts_with("r,n,e_n,ratio\n"));
        assert_eq!(csv.lines().count(), 1 + out.run.rows().len());
    }

    #[test]
    fn nemytskii_images() {
        let spec = scalar(-1.0, NonlinearityKind::Zero, vec![0.0, 0.6], vec![0.4, 1.0], ControlMap::Identity, 1);
        let s = solver(&spec, 16);
        let (z, _) = s.solve(&s.zero_control()).unwrap();
        let h = nemytskii_h(&spec, &z, 1).unwrap();
        assert!(h.values.iter().all(|v| v.norm() == 0.0));
        let phi = nemytskii_phi(&spec, &z, 1).unwrap();
        for (t, v) in phi.nodes.iter().zip(&phi.values) {
            assert_eq!(v, &s.history_term(&z, 1, *t).unwrap());
        }
        let phi0 = nemytskii_phi(&spec, &z, 0).unwrap();
        assert!(phi0.values.iter().all(|v| v.norm() == 0.0));
    }
}
