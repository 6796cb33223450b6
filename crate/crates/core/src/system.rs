//! Problem data: partition, impulse maps, nonlinearity, and the piecewise
//! trajectory representation with its weighted sup norm.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::quadrature::GaussRule;
use crate::fracops::{FractionalOrder, SampledFunction};
use crate::operators::{ControlMap, Generator, SineBasis};

/// Number of random probes used to spot-check declared constants.
pub const PROBES: usize = 1000;
const PROBE_SEED: u64 = 0x5eed_1234;
const PROBE_SLACK: f64 = 1e-9;

/// `0 = p_0 < t_1 < p_1 < t_2 < ... < p_m < t_{m+1} = p_{m+1} = a`.
///
/// `p` holds `p_0..=p_m` and `t` holds `t_1..=t_{m+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    p: Vec<f64>,
    t: Vec<f64>,
}

/// Which branch of the piecewise definition a time falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `(p_r, t_{r+1}]`
    Flow(usize),
    /// `(t_r, p_r]`
    Impulse(usize),
}

impl Partition {
    /// Build from `p_0..=p_m` and `t_1..=t_{m+1}`.
    pub fn new(p: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if p.is_empty() || t.len() != p.len() {
            return Err(Error::InvalidPartition(format!(
                "need p_0..p_m and t_1..t_(m+1): got {} and {} points",
                p.len(),
                t.len()
            )));
        }
        if p[0] != 0.0 {
            return Err(Error::InvalidPartition(format!("p_0 must be 0, got {}", p[0])));
        }
        let merged = Self::interleave(&p, &t);
        if merged.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPartition("non-finite partition point".into()));
        }
        if let Some(w) = merged.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPartition(format!("ordering is not strict at {} -> {}", w[0], w[1])));
        }
        Ok(Self { p, t })
    }

    fn interleave(p: &[f64], t: &[f64]) -> Vec<f64> {
        p.iter().zip(t).flat_map(|(a, b)| [*a, *b]).collect()
    }

    /// Number of impulses.
    pub fn m(&self) -> usize {
        self.p.len() - 1
    }

    pub fn a(&self) -> f64 {
        *self.t.last().expect("validated")
    }

    /// `p_r` for `r = 0..=m+1` (`p_{m+1} = a`).
    pub fn p(&self, r: usize) -> f64 {
        if r == self.p.len() {
            self.a()
        } else {
            self.p[r]
        }
    }

    /// `t_r` for `r = 1..=m+1`.
    pub fn t(&self, r: usize) -> f64 {
        self.t[r - 1]
    }

    pub fn p_points(&self) -> &[f64] {
        &self.p
    }

    pub fn t_points(&self) -> &[f64] {
        &self.t
    }

    /// `tau = max_r (t_{r+1} - p_r)`.
    pub fn tau(&self) -> f64 {
        (0..=self.m()).map(|r| self.t(r + 1) - self.p(r)).fold(0.0, f64::max)
    }

    /// `(p_r, t_{r+1}]`
    pub fn flow_interval(&self, r: usize) -> (f64, f64) {
        (self.p(r), self.t(r + 1))
    }

    /// `(t_r, p_r]`, `r = 1..=m`.
    pub fn window(&self, r: usize) -> (f64, f64) {
        (self.t(r), self.p(r))
    }

    /// Branch containing `t` in `(0, a]`.
    pub fn locate(&self, t: f64) -> Option<Branch> {
        if !(t > 0.0 && t <= self.a()) {
            return None;
        }
        for r in 0..=self.m() {
            if t <= self.t(r + 1) {
                return Some(Branch::Flow(r));
            }
            if t <= self.p(r + 1) {
                return Some(Branch::Impulse(r + 1));
            }
        }
        None
    }
}

/// Built-in impulse maps `psi_r(t, z)` on `[t_r, p_r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ImpulseKind {
    Zero,
    /// `gain * z`
    Linear { gain: f64 },
    /// `gain * sin(z)`, pointwise in physical space
    Sine { gain: f64 },
    /// `gain * exp(-rate (t - t_r)) * z`
    Decaying { gain: f64, rate: f64 },
}

impl ImpulseKind {
    /// Tightest Lipschitz and growth constants of the map.
    pub fn natural_constants(&self) -> (f64, f64) {
        match self {
            ImpulseKind::Zero => (0.0, 0.0),
            ImpulseKind::Linear { gain } | ImpulseKind::Sine { gain } | ImpulseKind::Decaying { gain, .. } => {
                (gain.abs(), gain.abs())
            }
        }
    }
}

/// One impulse map with its declared constants `b_r` (Lipschitz) and
/// `c_r` (growth).
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseMap {
    pub kind: ImpulseKind,
    pub lipschitz: f64,
    pub growth: f64,
}

impl ImpulseMap {
    pub fn new(kind: ImpulseKind) -> Self {
        let (b, c) = kind.natural_constants();
        Self { kind, lipschitz: b, growth: c }
    }

    pub fn with_constants(kind: ImpulseKind, lipschitz: f64, growth: f64) -> Self {
        Self { kind, lipschitz, growth }
    }

    fn eval(&self, window_start: f64, t: f64, z: &DVector<f64>, basis: Option<&SineBasis>) -> DVector<f64> {
        match &self.kind {
            ImpulseKind::Zero => DVector::zeros(z.len()),
            ImpulseKind::Linear { gain } => z * *gain,
            ImpulseKind::Sine { gain } => pointwise(z, basis, |v| gain * v.sin()),
            ImpulseKind::Decaying { gain, rate } => z * (gain * (-rate * (t - window_start)).exp()),
        }
    }
}

/// Impulse maps `psi_1..psi_m`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImpulseSpec {
    pub maps: Vec<ImpulseMap>,
}

impl ImpulseSpec {
    pub fn new(maps: Vec<ImpulseMap>) -> Self {
        Self { maps }
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// `b_r`, `r = 1..=m`.
    pub fn b(&self, r: usize) -> f64 {
        self.maps[r - 1].lipschitz
    }

    /// `c_r`, `r = 1..=m`.
    pub fn c(&self, r: usize) -> f64 {
        self.maps[r - 1].growth
    }

    /// `psi_r(t, z)` on the closed window `[t_r, p_r]`, without checks.
    pub(crate) fn eval(
        &self,
        partition: &Partition,
        r: usize,
        t: f64,
        z: &DVector<f64>,
        basis: Option<&SineBasis>,
    ) -> DVector<f64> {
        self.maps[r - 1].eval(partition.t(r), t, z, basis)
    }

    /// Spot-check the declared constants with seeded random probes.
    pub fn verify(&self, partition: &Partition, dim: usize, basis: Option<&SineBasis>) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        for (i, map) in self.maps.iter().enumerate() {
            let r = i + 1;
            if !(map.lipschitz >= 0.0) || !(map.growth >= 0.0) {
                return Err(Error::ConstantViolated(format!("impulse {r}: constants must be non-negative")));
            }
            let (lo, hi) = partition.window(r);
            for _ in 0..PROBES {
                let t = rng.random_range(lo..=hi);
                let z = random_vector(&mut rng, dim);
                let y = random_vector(&mut rng, dim);
                let pz = map.eval(lo, t, &z, basis);
                let py = map.eval(lo, t, &y, basis);
                let dz = (&z - &y).norm();
                if (&pz - &py).norm() > map.lipschitz * dz * (1.0 + PROBE_SLACK) + 1e-14 {
                    return Err(Error::ConstantViolated(format!(
                        "impulse {r}: Lipschitz constant {} exceeded",
                        map.lipschitz
                    )));
                }
                if pz.norm() > map.growth * z.norm() * (1.0 + PROBE_SLACK) + 1e-14 {
                    return Err(Error::ConstantViolated(format!("impulse {r}: growth constant {} exceeded", map.growth)));
                }
            }
        }
        Ok(())
    }
}

/// `psi_r(t, z(t_r^-))` for `t` in `(t_r, p_r]`.
pub fn impulse_apply(spec: &SystemSpec, r: usize, t: f64, z_at_tr: &DVector<f64>) -> Result<DVector<f64>> {
    let m = spec.partition.m();
    if r == 0 || r > m {
        return Err(Error::IndexOutOfRange { index: r, max: m });
    }
    let (lo, hi) = spec.partition.window(r);
    if !(t > lo && t <= hi) {
        return Err(Error::TimeOutsideWindow { t, lo, hi });
    }
    spec.check_state(z_at_tr)?;
    Ok(spec.impulses.eval(&spec.partition, r, t, z_at_tr, spec.generator.basis()))
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    DVector::from_fn(dim, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Apply `f` entrywise; with a basis, entrywise on the physical grid and
/// project back.
fn pointwise<F: Fn(f64) -> f64>(z: &DVector<f64>, basis: Option<&SineBasis>, f: F) -> DVector<f64> {
    match basis {
        Some(b) => b.project(&b.synthesize(z).map(f)),
        None => z.map(f),
    }
}

/// Built-in nonlinearities `h(t, z)`; `l = t - p_r` on `(p_r, p_{r+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearityKind {
    Zero,
    /// `gain * z`
    Linear { gain: f64 },
    /// `gain * l^beta * z`
    WeightedLinear { gain: f64, beta: f64 },
    /// `amplitude * sin(z)`
    Sine { amplitude: f64 },
    /// `gain * z + offset`
    Affine { gain: f64, offset: Vec<f64> },
    /// `(1 + l^2) + delta * l^beta * (z + sin z)`, pointwise
    Example2 { delta: f64, beta: f64 },
}

/// Nonlinearity with its constants: `kappa` (Lipschitz), `kappa_tilde`
/// (weighted Lipschitz) and the growth pair `(varsigma, d)`.
///
/// Constants that do not exist for a kind are `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    pub kappa: f64,
    pub kappa_tilde: f64,
    pub d: f64,
    /// `||1||` in the state norm, used by the constant terms of `varsigma`.
    unit_norm: f64,
    offset_norm: f64,
    eta: f64,
}

impl Nonlinearity {
    pub fn new(
        kind: NonlinearityKind,
        eta: FractionalOrder,
        partition: &Partition,
        dim: usize,
        basis: Option<&SineBasis>,
    ) -> Result<Self> {
        let e = eta.value();
        let unit_norm = match basis {
            Some(b) => b.project(&DVector::from_element(b.grid.len(), 1.0)).norm(),
            None => (dim as f64).sqrt(),
        };
        // longest stretch of (p_r, p_{r+1}]
        let span = (0..=partition.m()).map(|r| partition.p(r + 1) - partition.p(r)).fold(0.0, f64::max);
        let inf = f64::INFINITY;
        let mut offset_norm = 0.0;
        let (kappa, kappa_tilde, d) = match &kind {
            NonlinearityKind::Zero => (0.0, 0.0, 0.0),
            NonlinearityKind::Linear { gain } => (gain.abs(), if *gain == 0.0 { 0.0 } else { inf }, if *gain == 0.0 { 0.0 } else { inf }),
            NonlinearityKind::WeightedLinear { gain, beta } => {
                check_finite(&[*gain, *beta])?;
                if *beta < 0.0 {
                    return Err(Error::InvalidArgument(format!("weight exponent beta = {beta} must be >= 0")));
                }
                let k = gain.abs() * span.powf(*beta);
                let kt = if *beta >= 1.0 - e { gain.abs() * span.powf(beta + e - 1.0) } else { inf };
                (k, kt, kt)
            }
            NonlinearityKind::Sine { amplitude } => {
                (amplitude.abs(), if *amplitude == 0.0 { 0.0 } else { inf }, 0.0)
            }
            NonlinearityKind::Affine { gain, offset } => {
                if offset.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: offset.len() });
                }
                offset_norm = DVector::from_column_slice(offset).norm();
                (gain.abs(), if *gain == 0.0 { 0.0 } else { inf }, if *gain == 0.0 { 0.0 } else { inf })
            }
            NonlinearityKind::Example2 { delta, beta } => {
                check_finite(&[*delta, *beta])?;
                if *beta < 1.0 - e {
                    return Err(Error::InvalidArgument(format!("beta = {beta} must be >= 1 - eta")));
                }
                let k = 2.0 * delta.abs() * span.powf(*beta);
                let kt = 2.0 * delta.abs() * span.powf(beta + e - 1.0);
                (k, kt, kt)
            }
        };
        Ok(Self { kind, kappa, kappa_tilde, d, unit_norm, offset_norm, eta: e })
    }

    /// `h(t, z)` with `t` in `(p_r, p_{r+1}]`.
    pub fn eval(&self, t: f64, p_r: f64, z: &DVector<f64>, basis: Option<&SineBasis>) -> DVector<f64> {
        let l = t - p_r;
        match &self.kind {
            NonlinearityKind::Zero => DVector::zeros(z.len()),
            NonlinearityKind::Linear { gain } => z * *gain,
            NonlinearityKind::WeightedLinear { gain, beta } => z * (gain * l.powf(*beta)),
            NonlinearityKind::Sine { amplitude } => pointwise(z, basis, |v| amplitude * v.sin()),
            NonlinearityKind::Affine { gain, offset } => z * *gain + DVector::from_column_slice(offset),
            NonlinearityKind::Example2 { delta, beta } => {
                let c = 1.0 + l * l;
                let s = delta * l.powf(*beta);
                pointwise(z, basis, |v| c + s * (v + v.sin()))
            }
        }
    }

    /// `varsigma(t)` on `(p_r, p_{r+1}]`.
    pub fn varsigma(&self, t: f64, p_r: f64) -> f64 {
        let l = t - p_r;
        match &self.kind {
            NonlinearityKind::Zero
            | NonlinearityKind::Linear { .. }
            | NonlinearityKind::WeightedLinear { .. } => 0.0,
            NonlinearityKind::Sine { amplitude } => amplitude.abs() * self.unit_norm,
            NonlinearityKind::Affine { .. } => self.offset_norm,
            NonlinearityKind::Example2 { .. } => self.unit_norm * (1.0 + l * l),
        }
    }

    /// `||varsigma||_{L^q([0, a])}` by composite Gauss-Legendre quadrature.
    pub fn varsigma_lq(&self, partition: &Partition, q: f64) -> f64 {
        let gl = GaussRule::legendre(16);
        let mut acc = 0.0;
        for r in 0..=partition.m() {
            let (lo, hi) = (partition.p(r), partition.p(r + 1));
            for k in 0..16 {
                let a = lo + (hi - lo) * k as f64 / 16.0;
                let b = lo + (hi - lo) * (k + 1) as f64 / 16.0;
                acc += gl.integrate(a, b, |s| self.varsigma(s, lo).powf(q));
            }
        }
        acc.powf(1.0 / q)
    }

    /// Spot-check (H1), (H2) and, when finite, (H5) with random probes.
    pub fn verify(&self, partition: &Partition, dim: usize, basis: Option<&SineBasis>) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED ^ 0xa5a5);
        for _ in 0..PROBES {
            let r = rng.random_range(0..=partition.m());
            let (lo, hi) = (partition.p(r), partition.p(r + 1));
            let t = lo + (hi - lo) * rng.random_range(1e-6..=1.0);
            let z = random_vector(&mut rng, dim);
            let y = random_vector(&mut rng, dim);
            let hz = self.eval(t, lo, &z, basis);
            let hy = self.eval(t, lo, &y, basis);
            let diff = (&hz - &hy).norm();
            let dz = (&z - &y).norm();
            let tol = |bound: f64| bound * (1.0 + PROBE_SLACK) + 1e-12;
            if self.kappa.is_finite() && diff > tol(self.kappa * dz) {
                return Err(Error::ConstantViolated(format!("Lipschitz constant kappa = {} exceeded", self.kappa)));
            }
            let w = (t - lo).powf(1.0 - self.eta);
            if self.kappa_tilde.is_finite() && diff > tol(self.kappa_tilde * w * dz) {
                return Err(Error::ConstantViolated(format!(
                    "weighted Lipschitz constant {} exceeded",
                    self.kappa_tilde
                )));
            }
            if self.d.is_finite() && hz.norm() > tol(self.varsigma(t, lo) + self.d * w * z.norm()) {
                return Err(Error::ConstantViolated(format!("growth pair (varsigma, d = {}) exceeded", self.d)));
            }
        }
        Ok(())
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("nonlinearity parameters must be finite".into()));
    }
    Ok(())
}

/// Complete problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub eta: FractionalOrder,
    pub q: f64,
    pub partition: Partition,
    pub generator: Generator,
    pub control_map: ControlMap,
    pub nonlinearity: Nonlinearity,
    pub impulses: ImpulseSpec,
    pub z0: DVector<f64>,
}

impl SystemSpec {
    /// Validate dimensions and spot-check all declared constants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eta: FractionalOrder,
        q: f64,
        partition: Partition,
        generator: Generator,
        control_map: ControlMap,
        nonlinearity: NonlinearityKind,
        impulses: ImpulseSpec,
        z0: DVector<f64>,
    ) -> Result<Self> {
        let dim = generator.dim();
        if z0.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: z0.len() });
        }
        control_map.validate(dim)?;
        if impulses.len() != partition.m() {
            return Err(Error::DimensionMismatch { expected: partition.m(), got: impulses.len() });
        }
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::InvalidArgument(format!("integrability exponent q = {q} must exceed 1")));
        }
        if (generator.horizon() - partition.a()).abs() > 1e-12 * partition.a() {
            return Err(Error::InvalidArgument(format!(
                "generator horizon {} differs from the final time {}",
                generator.horizon(),
                partition.a()
            )));
        }
        let basis = generator.basis();
        impulses.verify(&partition, dim, basis)?;
        let nonlinearity = Nonlinearity::new(nonlinearity, eta, &partition, dim, basis)?;
        nonlinearity.verify(&partition, dim, basis)?;
        Ok(Self { eta, q, partition, generator, control_map, nonlinearity, impulses, z0 })
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.control_map.control_dim(self.dim())
    }

    pub fn check_state(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        Ok(())
    }

    /// `h(t, z)` on flow interval `r`.
    pub fn h(&self, r: usize, t: f64, z: &DVector<f64>) -> DVector<f64> {
        self.nonlinearity.eval(t, self.partition.p(r), z, self.generator.basis())
    }

    /// `psi_r(t, z)` on `[t_r, p_r]`.
    pub fn psi(&self, r: usize, t: f64, z: &DVector<f64>) -> DVector<f64> {
        self.impulses.eval(&self.partition, r, t, z, self.generator.basis())
    }
}

/// Piecewise samples of a trajectory in `PC_{1-eta}`.
///
/// `flows[r]` samples `(p_r, t_{r+1}]` with origin `p_r`, weight exponent
/// `1 - eta` and the weighted limit at `p_r`; `windows[r - 1]` samples the
/// impulse window `(t_r, p_r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eta: FractionalOrder,
    pub partition: Partition,
    pub flows: Vec<SampledFunction>,
    pub windows: Vec<SampledFunction>,
}

/// One output row of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub interval: usize,
    pub branch: Branch,
    pub value: DVector<f64>,
    pub weighted_norm: f64,
}

impl Trajectory {
    pub fn new(
        eta: FractionalOrder,
        partition: Partition,
        flows: Vec<SampledFunction>,
        windows: Vec<SampledFunction>,
    ) -> Result<Self> {
        if flows.len() != partition.m() + 1 {
            return Err(Error::EmptyInterval(flows.len()));
        }
        if windows.len() != partition.m() {
            return Err(Error::EmptyInterval(partition.m() + 1 + windows.len()));
        }
        Ok(Self { eta, partition, flows, windows })
    }

    /// `z(t_r^-)`, the last sample of flow interval `r - 1`.
    pub fn left_limit(&self, r: usize) -> &DVector<f64> {
        self.flows[r - 1].values.last().expect("non-empty")
    }

    /// `z(a)`.
    pub fn terminal(&self) -> &DVector<f64> {
        self.flows.last().expect("non-empty").values.last().expect("non-empty")
    }

    /// `||z||_r = sup_{(p_r, p_{r+1}]} (t - p_r)^{1-eta} ||z(t)||` on the samples,
    /// including the weighted limit at `p_r`.
    pub fn interval_norm(&self, r: usize) -> Result<f64> {
        let w = 1.0 - self.eta.value();
        let flow = &self.flows[r];
        if flow.values.is_empty() {
            return Err(Error::EmptyInterval(r));
        }
        let p = self.partition.p(r);
        let mut sup = flow.origin_weighted.as_ref().map_or(0.0, |v| v.norm());
        for (t, v) in flow.nodes.iter().zip(&flow.values) {
            sup = sup.max((t - p).powf(w) * v.norm());
        }
        if r < self.partition.m() {
            let win = &self.windows[r];
            if win.values.is_empty() {
                return Err(Error::EmptyInterval(r));
            }
            for (t, v) in win.nodes.iter().zip(&win.values) {
                sup = sup.max((t - p).powf(w) * v.norm());
            }
        }
        Ok(sup)
    }

    /// `||z||_{[0,a]} = max_r ||z||_r`.
    pub fn pc_norm(&self) -> Result<f64> {
        let mut n = 0.0f64;
        for r in 0..=self.partition.m() {
            n = n.max(self.interval_norm(r)?);
        }
        Ok(n)
    }

    /// Combine sample-wise with another trajectory on the same nodes.
    pub fn zip_with<F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>>(&self, other: &Self, f: F) -> Result<Self> {
        let comb = |a: &SampledFunction, b: &SampledFunction| -> Result<SampledFunction> {
            if a.nodes != b.nodes {
                return Err(Error::InvalidArgument("trajectories sampled on different nodes".into()));
            }
            let values = a.values.iter().zip(&b.values).map(|(x, y)| f(x, y)).collect();
            let ow = match (&a.origin_weighted, &b.origin_weighted) {
                (Some(x), Some(y)) => Some(f(x, y)),
                _ => None,
            };
            SampledFunction::new(a.origin, a.nodes.clone(), values, a.weight_exponent, ow)
        };
        let flows = self.flows.iter().zip(&other.flows).map(|(a, b)| comb(a, b)).collect::<Result<_>>()?;
        let windows = self.windows.iter().zip(&other.windows).map(|(a, b)| comb(a, b)).collect::<Result<_>>()?;
        Ok(Self { eta: self.eta, partition: self.partition.clone(), flows, windows })
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.zip_with(self, |a, _| a * c).expect("same nodes")
    }

    /// All samples in time order.
    pub fn rows(&self) -> Vec<TrajectoryRow> {
        let w = 1.0 - self.eta.value();
        let mut rows = Vec::new();
        for r in 0..=self.partition.m() {
            let p = self.partition.p(r);
            for (t, v) in self.flows[r].nodes.iter().zip(&self.flows[r].values) {
                rows.push(TrajectoryRow {
                    t: *t,
                    interval: r,
                    branch: Branch::Flow(r),
                    value: v.clone(),
                    weighted_norm: (t - p).powf(w) * v.norm(),
                });
            }
            if r < self.partition.m() {
                for (t, v) in self.windows[r].nodes.iter().zip(&self.windows[r].values) {
                    rows.push(TrajectoryRow {
                        t: *t,
                        interval: r,
                        branch: Branch::Impulse(r + 1),
                        value: v.clone(),
                        weighted_norm: (t - p).powf(w) * v.norm(),
                    });
                }
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn two_interval() -> Partition {
        Partition::new(vec![0.0, 0.5], vec![0.4, 1.0]).unwrap()
    }

    #[test]
    fn partition_ordering() {
        let p = two_interval();
        assert_eq!(p.m(), 1);
        assert_eq!(p.a(), 1.0);
        assert_relative_eq!(p.tau(), 0.5);
        assert_eq!(p.locate(0.45), Some(Branch::Impulse(1)));
        assert_eq!(p.locate(0.4), Some(Branch::Flow(0)));
        assert_eq!(p.locate(0.7), Some(Branch::Flow(1)));
        assert!(Partition::new(vec![0.0, 0.3], vec![0.4, 1.0]).is_err());
        assert!(Partition::new(vec![0.1], vec![1.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.5], vec![0.4]).is_err());
    }

    fn scalar_spec(nl: NonlinearityKind, imp: ImpulseKind) -> SystemSpec {
        SystemSpec::new(
            FractionalOrder::new(0.5).unwrap(),
            2.5,
            two_interval(),
            Generator::dense(DMatrix::from_element(1, 1, -1.0), 1.0).unwrap(),
            ControlMap::Identity,
            nl,
            ImpulseSpec::new(vec![ImpulseMap::new(imp)]),
            DVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn impulse_application_and_errors() {
        let spec = scalar_spec(NonlinearityKind::Zero, ImpulseKind::Linear { gain: 0.3 });
        let v = DVector::from_element(1, 2.0);
        assert_relative_eq!(impulse_apply(&spec, 1, 0.45, &v).unwrap()[0], 0.6);
        assert!(matches!(impulse_apply(&spec, 2, 0.45, &v), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(impulse_apply(&spec, 1, 0.4, &v), Err(Error::TimeOutsideWindow { .. })));
        let spec = scalar_spec(NonlinearityKind::Zero, ImpulseKind::Zero);
        assert_eq!(impulse_apply(&spec, 1, 0.5, &v).unwrap()[0], 0.0);
    }

    #[test]
    fn understated_constants_are_rejected() {
        let imp = ImpulseSpec::new(vec![ImpulseMap::with_constants(ImpulseKind::Linear { gain: 0.5 }, 0.4, 0.5)]);
        assert!(matches!(imp.verify(&two_interval(), 2, None), Err(Error::ConstantViolated(_))));
    }

    #[test]
    fn example2_constants_hold_in_the_sine_basis() {
        let basis = SineBasis::new(16).unwrap();
        let eta = FractionalOrder::new(2.0 / 3.0).unwrap();
        let nl = Nonlinearity::new(NonlinearityKind::Example2 { delta: 0.01, beta: 1.0 }, eta, &two_interval(), 16, Some(&basis))
            .unwrap();
        assert!(nl.unit_norm < std::f64::consts::PI.sqrt());
        assert!(nl.unit_norm > 0.95 * std::f64::consts::PI.sqrt());
        nl.verify(&two_interval(), 16, Some(&basis)).unwrap();
    }

    #[test]
    fn pc_norm_cancels_the_singularity() {
        let eta = FractionalOrder::new(0.5).unwrap();
        let part = Partition::new(vec![0.0], vec![1.0]).unwrap();
        let nodes: Vec<f64> = (1..=10).map(|j| j as f64 / 10.0).collect();
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let f = SampledFunction::from_fn(0.0, nodes, 0.5, Some(v.clone()), |t| &v * t.powf(-0.5)).unwrap();
        let z = Trajectory::new(eta, part, vec![f], vec![]).unwrap();
        assert_relative_eq!(z.pc_norm().unwrap(), 5.0, max_relative = 1e-14);
        assert_relative_eq!(z.scaled(-2.0).pc_norm().unwrap(), 10.0, max_relative = 1e-14);
        assert_eq!(z.difference(&z).unwrap().pc_norm().unwrap(), 0.0);
    }
}
