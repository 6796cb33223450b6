//! TOML configuration documents.
//!
//! ```toml
//! [order]
//! eta = 0.5
//! q = 3.0
//!
//! [partition]
//! p = [0.0]
//! t = [1.0]
//!
//! [generator]
//! kind = "spectral"
//! eigenvalues = [-1.0]
//!
//! [initial]
//! z0 = [1.0]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::SteeringProblem;
use crate::error::{Error, Result};
use crate::fracops::FractionalOrder;
use crate::operators::{ControlMap, Generator};
use crate::solver::SolverConfig;
use crate::system::{ImpulseKind, ImpulseMap, ImpulseSpec, NonlinearityKind, Partition, SystemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub order: OrderSection,
    pub partition: PartitionSection,
    pub generator: GeneratorSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default = "no_nonlinearity")]
    pub nonlinearity: NonlinearityKind,
    #[serde(default)]
    pub impulses: Vec<ImpulseSection>,
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering: Option<SteeringSection>,
}

fn no_nonlinearity() -> NonlinearityKind {
    NonlinearityKind::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderSection {
    pub eta: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    /// `p_0..p_m`
    pub p: Vec<f64>,
    /// `t_1..t_{m+1}`
    pub t: Vec<f64>,
    /// Final time; must equal the last `t` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSection {
    /// Dirichlet Laplacian on `(0, pi)` with `modes` sine modes.
    Heat { modes: usize },
    Spectral { eigenvalues: Vec<f64> },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSection {
    #[default]
    Identity,
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseSection {
    pub map: ImpulseKind,
    /// Lipschitz constant `b_r`; the map's own constant when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Growth constant `c_r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub z0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub mesh: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grading: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub force: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self { mesh: d.mesh_per_interval, grading: d.grading, tol: d.fp_tolerance, max_iters: d.max_picard_iters, force: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringSection {
    pub target: Vec<f64>,
    pub epsilon: f64,
    #[serde(default = "default_outer")]
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<Vec<f64>>>,
    /// Steer even when the steering hypotheses fail.
    #[serde(default)]
    pub allow_violation: bool,
}

fn default_outer() -> usize {
    50
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub document: ConfigDocument,
    pub spec: SystemSpec,
    pub solver: SolverConfig,
    pub steering: Option<SteeringProblem>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Config(format!("{what}: rows must be non-empty and of equal length")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical text: defaults made explicit, `a` filled in.
    pub fn normalized(&self) -> Result<String> {
        let mut doc = self.clone();
        doc.partition.a = doc.partition.t.last().copied();
        if let ControlSection::Matrix { rows } = &doc.control {
            doc.control = ControlSection::Matrix { rows: rows_of(&matrix(rows, "control")?) };
        }
        toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<Loaded> {
        let ctx = |what: &'static str| move |e: Error| Error::Config(format!("[{what}] {e}"));
        let eta = FractionalOrder::new(self.order.eta).map_err(ctx("order"))?;
        let part = Partition::new(self.partition.p.clone(), self.partition.t.clone()).map_err(ctx("partition"))?;
        let a = part.a();
        if let Some(given) = self.partition.a {
            if given != a {
                return Err(Error::Config(format!("[partition] a = {given} differs from the last t = {a}")));
            }
        }
        let generator = match &self.generator {
            GeneratorSection::Heat { modes } => Generator::heat(*modes, a),
            GeneratorSection::Spectral { eigenvalues } => Generator::spectral(eigenvalues.clone(), None, a),
            GeneratorSection::Matrix { rows } => Generator::dense(matrix(rows, "generator")?, a),
        }
        .map_err(ctx("generator"))?;
        let control = match &self.control {
            ControlSection::Identity => ControlMap::Identity,
            ControlSection::Matrix { rows } => ControlMap::Dense(matrix(rows, "control")?),
        };
        let maps = self
            .impulses
            .iter()
            .map(|s| {
                let (b, c) = s.map.natural_constants();
                ImpulseMap::with_constants(s.map.clone(), s.b.unwrap_or(b), s.c.unwrap_or(c))
            })
            .collect();
        let z0 = DVector::from_vec(self.initial.z0.clone());
        let spec = SystemSpec::new(
            eta,
            self.order.q,
            part,
            generator,
            control,
            self.nonlinearity.clone(),
            ImpulseSpec::new(maps),
            z0,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let solver = SolverConfig {
            mesh_per_interval: self.solver.mesh,
            grading: self.solver.grading,
            max_picard_iters: self.solver.max_iters,
            fp_tolerance: self.solver.tol,
            allow_hypothesis_violation: self.solver.force,
            ..SolverConfig::default()
        };
        solver.validate().map_err(ctx("solver"))?;
        let steering = match &self.steering {
            None => None,
            Some(s) => {
                let problem = SteeringProblem {
                    target: DVector::from_vec(s.target.clone()),
                    epsilon: s.epsilon,
                    max_outer_iters: s.max_iters,
                    waypoints: s.waypoints.as_ref().map(|w| w.iter().map(|v| DVector::from_vec(v.clone())).collect()),
                    allow_violation: s.allow_violation,
                };
                problem.validate(&spec).map_err(ctx("steering"))?;
                Some(problem)
            }
        };
        Ok(Loaded { document: self.clone(), spec, solver, steering })
    }
}

pub fn load_str(text: &str) -> Result<Loaded> {
    ConfigDocument::parse(text)?.build()
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    load_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
[order]
eta = 0.5
q = 3.0

[partition]
p = [0.0, 0.5]
t = [0.4, 1.0]

[generator]
kind = "matrix"
rows = [[-1.0]]

[nonlinearity]
kind = "sine"
amplitude = 0.1

[[impulses]]
map = { kind = "linear", gain = 0.2 }

[initial]
z0 = [1.0]
"#;

    #[test]
    fn loads_and_defaults() {
        let l = load_str(SCALAR).unwrap();
        assert_eq!(l.spec.partition.m(), 1);
        assert_eq!(l.solver, SolverConfig::default());
        assert_eq!(l.spec.impulses.b(1), 0.2);
        assert!(l.steering.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SCALAR.replace("q = 3.0", "q = 3.0\nzeta = 1");
        let err = load_str(&bad).unwrap_err().to_string();
        assert!(err.contains("zeta"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn invariants_are_revalidated() {
        assert!(load_str(&SCALAR.replace("eta = 0.5", "eta = 1.5")).is_err());
        assert!(load_str(&SCALAR.replace("z0 = [1.0]", "z0 = [1.0, 2.0]")).is_err());
        assert!(load_str(&SCALAR.replace("t = [0.4, 1.0]", "t = [0.4, 1.0]\na = 2.0")).is_err());
    }

    #[test]
    fn normalizer_round_trips() {
        let l = load_str(SCALAR).unwrap();
        let text = l.document.normalized().unwrap();
        let again = load_str(&text).unwrap();
        assert_eq!(again.spec, l.spec);
        assert_eq!(again.solver, l.solver);
        assert_eq!(again.document.normalized().unwrap(), text);
    }
}
