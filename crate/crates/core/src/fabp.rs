//! Linearized (fast) belief propagation: diffuse ±1 seed labels over a
//! graph by solving `[I + aD - c'A] b = φ`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::graph::KnnGraph;

/// Graphs up to this size fall back to a dense direct solve when the
/// iterative solver stalls.
pub const DENSE_LIMIT: usize = 500;

/// Spacing of the automatic homophily grid.
pub const HOMOPHILY_STEP: f64 = 0.001;

/// Automatic homophily never exceeds this.
pub const HOMOPHILY_CAP: f64 = 0.499;

#[derive(Debug, Error)]
pub enum FabpError {
    #[error("homophily {0} outside (0, 0.5)")]
    InvalidHomophily(f64),
    #[error("label vector has no nonzero entry")]
    NoLabels,
    #[error("label entry {value} at {index} is not -1, 0 or 1")]
    InvalidLabel { index: usize, value: i8 },
    #[error("graph has {graph} nodes but label vector has {labels}")]
    SizeMismatch { graph: usize, labels: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("solver did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Entries in {-1, 0, +1}: fake, unknown, real.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector(Vec<i8>);

impl LabelVector {
    pub fn new(values: Vec<i8>) -> Result<Self, FabpError> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| v.abs() > 1) {
            return Err(FabpError::InvalidLabel { index, value });
        }
        Ok(LabelVector(values))
    }

    pub fn from_labels(labels: &[Label]) -> Self {
        LabelVector(labels.iter().map(|l| l.sign()).collect())
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn revealed(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0).count()
    }

    pub fn negated(&self) -> Self {
        LabelVector(self.0.iter().map(|v| -v).collect())
    }
}

/// Fixed homophily or the largest grid value keeping the system strictly
/// diagonally dominant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "HomophilyRepr", into = "HomophilyRepr")]
pub enum Homophily {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum HomophilyRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<HomophilyRepr> for Homophily {
    type Error = String;

    fn try_from(r: HomophilyRepr) -> Result<Self, Self::Error> {
        match r {
            HomophilyRepr::Value(h) => Ok(Homophily::Fixed(h)),
            HomophilyRepr::Name(s) if s == "auto" => Ok(Homophily::Auto),
            HomophilyRepr::Name(s) => s
                .parse()
                .map(Homophily::Fixed)
                .map_err(|_| format!("homophily must be \"auto\" or a number, got {s:?}")),
        }
    }
}

impl From<Homophily> for HomophilyRepr {
    fn from(h: Homophily) -> Self {
        match h {
            Homophily::Auto => HomophilyRepr::Name("auto".into()),
            Homophily::Fixed(v) => HomophilyRepr::Value(v),
        }
    }
}

impl std::str::FromStr for Homophily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HomophilyRepr::Name(s.to_string()).try_into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FabpConfig {
    pub homophily: Homophily,
    pub prior_magnitude: f64,
    /// Bound on `||φ - M b||₂`.
    pub solver_tol: f64,
    pub max_solver_iters: usize,
}

impl Default for FabpConfig {
    fn default() -> Self {
        FabpConfig {
            homophily: Homophily::Auto,
            prior_magnitude: 0.5,
            solver_tol: 1e-10,
            max_solver_iters: 1000,
        }
    }
}

impl FabpConfig {
    pub fn validate(&self) -> Result<(), FabpError> {
        if let Homophily::Fixed(h) = self.homophily {
            compute_coefficients(h)?;
        }
        if !(self.prior_magnitude > 0.0 && self.prior_magnitude.is_finite()) {
            return Err(FabpError::InvalidConfig(format!(
                "prior_magnitude must be positive, got {}",
                self.prior_magnitude
            )));
        }
        if self.solver_tol.is_nan() || self.solver_tol <= 0.0 {
            return Err(FabpError::InvalidConfig(
                "solver_tol must be positive".into(),
            ));
        }
        if self.max_solver_iters == 0 {
            return Err(FabpError::InvalidConfig(
                "max_solver_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Homophily and the two system coefficients derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub h: f64,
    pub a: f64,
    pub c_prime: f64,
}

impl Coefficients {
    pub fn new(h: f64) -> Result<Self, FabpError> {
        let (a, c_prime) = compute_coefficients(h)?;
        Ok(Coefficients { h, a, c_prime })
    }
}

/// `a = 4h² / (1 - 4h²)` and `c' = 2h / (1 - 4h²)`.
pub fn compute_coefficients(h: f64) -> Result<(f64, f64), FabpError> {
    if !(h > 0.0 && h < 0.5) {
        return Err(FabpError::InvalidHomophily(h));
    }
    let denom = 1.0 - 4.0 * h * h;
    Ok((4.0 * h * h / denom, 2.0 * h / denom))
}

/// Largest multiple of [`HOMOPHILY_STEP`] not above `1 / (2 (d_max + 1))`,
/// capped at [`HOMOPHILY_CAP`]. When the bound is below one step the bound
/// itself is returned.
pub fn choose_homophily(graph: &KnnGraph) -> f64 {
    let bound = 1.0 / (2.0 * (graph.max_degree() as f64 + 1.0));
    let mut steps = (bound / HOMOPHILY_STEP).floor() as i64;
    while steps as f64 * HOMOPHILY_STEP > bound {
        steps -= 1;
    }
    while (steps + 1) as f64 * HOMOPHILY_STEP <= bound {
        steps += 1;
    }
    if steps < 1 {
        return bound;
    }
    (steps as f64 * HOMOPHILY_STEP).min(HOMOPHILY_CAP)
}

pub fn resolve_coefficients(
    graph: &KnnGraph,
    homophily: Homophily,
) -> Result<Coefficients, FabpError> {
    let h = match homophily {
        Homophily::Auto => choose_homophily(graph),
        Homophily::Fixed(h) => h,
    };
    Coefficients::new(h)
}

/// `|1 + a d_i| > c' d_i` for every row.
pub fn is_strictly_diagonally_dominant(graph: &KnnGraph, coeffs: &Coefficients) -> bool {
    (0..graph.node_count()).all(|i| {
        let d = graph.neighbors(i).len() as f64;
        (1.0 + coeffs.a * d).abs() > coeffs.c_prime * d
    })
}

/// The sparse system matrix `I + aD - c'A`.
struct SystemMatrix<'g> {
    graph: &'g KnnGraph,
    diag: Vec<f64>,
    c_prime: f64,
}

impl<'g> SystemMatrix<'g> {
    fn new(graph: &'g KnnGraph, coeffs: &Coefficients) -> Self {
        let diag = (0..graph.node_count())
            .map(|i| 1.0 + coeffs.a * graph.neighbors(i).len() as f64)
            .collect();
        SystemMatrix {
            graph,
            diag,
            c_prime: coeffs.c_prime,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let coupled: f64 = self.graph.neighbors(i).iter().map(|&j| x[j]).sum();
            *o = self.diag[i] * x[i] - self.c_prime * coupled;
        });
    }

    fn residual_norm(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let mut mx = vec![0.0; x.len()];
        self.apply(x, &mut mx);
        rhs.iter()
            .zip(&mx)
            .map(|(b, v)| (b - v) * (b - v))
            .sum::<f64>()
            .sqrt()
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for i in 0..n {
            for &j in self.graph.neighbors(i) {
                m[(i, j)] = -self.c_prime;
            }
        }
        m
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Jacobi-preconditioned conjugate gradient from a zero start. Returns the
/// iterate and the number of iterations used.
fn preconditioned_cg(
    system: &SystemMatrix<'_>,
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> (Vec<f64>, usize) {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    if dot(&r, &r).sqrt() <= tol {
        return (x, 0);
    }
    let mut z: Vec<f64> = r.iter().zip(&system.diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for iter in 1..=max_iters {
        system.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return (x, iter);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol {
            return (x, iter);
        }
        for i in 0..n {
            z[i] = r[i] / system.diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, max_iters)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    ConjugateGradient,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub priors: Vec<f64>,
    pub beliefs: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub coefficients: Coefficients,
    pub solver: SolverKind,
}

/// Solves for final beliefs given seed labels.
pub fn propagate(
    graph: &KnnGraph,
    labels: &LabelVector,
    config: &FabpConfig,
) -> Result<BeliefState, FabpError> {
    config.validate()?;
    if graph.node_count() != labels.len() {
        return Err(FabpError::SizeMismatch {
            graph: graph.node_count(),
            labels: labels.len(),
        });
    }
    if labels.revealed() == 0 {
        return Err(FabpError::NoLabels);
    }
    let coefficients = resolve_coefficients(graph, config.homophily)?;
    let priors: Vec<f64> = labels
        .values()
        .iter()
        .map(|&l| config.prior_magnitude * f64::from(l))
        .collect();
    let system = SystemMatrix::new(graph, &coefficients);
    let (beliefs, iterations) =
        preconditioned_cg(&system, &priors, config.solver_tol, config.max_solver_iters);
    let residual = system.residual_norm(&beliefs, &priors);
    if residual <= config.solver_tol {
        return Ok(BeliefState {
            priors,
            beliefs,
            residual,
            iterations,
            coefficients,
            solver: SolverKind::ConjugateGradient,
        });
    }
    if graph.node_count() <= DENSE_LIMIT {
        if let Some(solution) = system
            .to_dense()
            .lu()
            .solve(&DVector::from_column_slice(&priors))
        {
            let beliefs: Vec<f64> = solution.iter().copied().collect();
            let dense_residual = system.residual_norm(&beliefs, &priors);
            if dense_residual <= config.solver_tol {
                return Ok(BeliefState {
                    priors,
                    beliefs,
                    residual: dense_residual,
                    iterations,
                    coefficients,
                    solver: SolverKind::Dense,
                });
            }
        }
    }
    Err(FabpError::NonConvergence {
        iterations,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub labels: Vec<Label>,
    /// Nodes with belief exactly zero, predicted real.
    pub ties: usize,
}

/// Positive belief is real, negative is fake, zero is real and counted.
pub fn classify(state: &BeliefState) -> Classification {
    let mut ties = 0;
    let labels = state
        .beliefs
        .iter()
        .map(|&b| {
            if b > 0.0 {
                Label::Real
            } else if b < 0.0 {
                Label::Fake
            } else {
                ties += 1;
                Label::Real
            }
        })
        .collect();
    Classification { labels, ties }
}

/// One `node_id prior belief prediction` line per node.
pub fn write_beliefs<W: Write>(
    mut out: W,
    ids: &[&str],
    state: &BeliefState,
    predictions: &Classification,
) -> std::io::Result<()> {
    for (i, id) in ids.iter().enumerate() {
        writeln!(
            out,
            "{} {:e} {:e} {}",
            id, state.priors[i], state.beliefs[i], predictions.labels[i]
        )?;
    }
    Ok(())
}
