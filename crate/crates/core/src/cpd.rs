//! Rank-R CP decomposition of sparse three-mode tensors by alternating
//! least squares.

use std::io::{BufRead, Write};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::SparseTensor;

pub const MAX_RANK: usize = 50;

/// Relative ridge added to a singular Gram product.
pub const RIDGE_SCALE: f64 = 1e-12;

const CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum CpError {
    #[error("tensor has no nonzero entries")]
    EmptyTensor,
    #[error("rank {0} outside [1, {MAX_RANK}]")]
    InvalidRank(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One of the three tensor modes (1-based in the usual notation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    First,
    Second,
    Third,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::First, Mode::Second, Mode::Third];

    fn index(self) -> usize {
        match self {
            Mode::First => 0,
            Mode::Second => 1,
            Mode::Third => 2,
        }
    }

    fn others(self) -> (usize, usize) {
        match self {
            Mode::First => (1, 2),
            Mode::Second => (0, 2),
            Mode::Third => (0, 1),
        }
    }
}

impl TryFrom<u8> for Mode {
    type Error = CpError;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            1 => Ok(Mode::First),
            2 => Ok(Mode::Second),
            3 => Ok(Mode::Third),
            _ => Err(CpError::InvalidConfig(format!("mode {n} is not 1, 2 or 3"))),
        }
    }
}

/// CP factors `A` (I×R), `B` (J×R), `C` (K×R) and per-component weights.
///
/// `cp_als` returns unit-norm columns with all magnitude in `weights`;
/// hand-built factors need not be normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub weights: DVector<f64>,
}

impl FactorMatrices {
    /// Factors with unit weights.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Self {
        let rank = a.ncols();
        FactorMatrices {
            a,
            b,
            c,
            weights: DVector::from_element(rank, 1.0),
        }
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn factor(&self, mode: Mode) -> &DMatrix<f64> {
        match mode {
            Mode::First => &self.a,
            Mode::Second => &self.b,
            Mode::Third => &self.c,
        }
    }

    fn factors(&self) -> [&DMatrix<f64>; 3] {
        [&self.a, &self.b, &self.c]
    }

    fn check_dims(&self, dims: [usize; 3]) -> Result<(), CpError> {
        let rank = self.rank();
        for (n, f) in self.factors().into_iter().enumerate() {
            if f.nrows() != dims[n] || f.ncols() != rank {
                return Err(CpError::DimensionMismatch(format!(
                    "factor {} is {}x{}, expected {}x{}",
                    n + 1,
                    f.nrows(),
                    f.ncols(),
                    dims[n],
                    rank
                )));
            }
        }
        Ok(())
    }

    /// Model value at one coordinate.
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        (0..self.rank())
            .map(|r| self.weights[r] * self.a[(i, r)] * self.b[(j, r)] * self.c[(k, r)])
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once the fit changes by less than this between sweeps.
    pub tol: f64,
    pub seed: u64,
}

impl Default for CpConfig {
    fn default() -> Self {
        CpConfig {
            rank: 10,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl CpConfig {
    pub fn validate(&self) -> Result<(), CpError> {
        if !(1..=MAX_RANK).contains(&self.rank) {
            return Err(CpError::InvalidRank(self.rank));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CpError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(CpError::InvalidConfig(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CpResult {
    pub factors: FactorMatrices,
    /// Residual norm of the initial guess followed by one entry per sweep.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of Gram solves that needed the ridge fallback.
    pub ridge_events: usize,
    pub tensor_norm: f64,
}

impl CpResult {
    pub fn final_residual(&self) -> f64 {
        *self
            .residuals
            .last()
            .expect("history holds the initial residual")
    }

    /// `1 - residual / ||X||`.
    pub fn final_fit(&self) -> f64 {
        1.0 - self.final_residual() / self.tensor_norm
    }
}

/// Entries of a tensor grouped by their index along one mode and stored
/// contiguously, so each output row of an MTTKRP is reduced sequentially
/// in a fixed order.
struct ModeIndex {
    row_ptr: Vec<usize>,
    /// Indices along the two other modes, in `Mode::others` order.
    others: Vec<[usize; 2]>,
    values: Vec<f64>,
}

impl ModeIndex {
    fn new(tensor: &SparseTensor, mode: Mode) -> Self {
        let n = mode.index();
        let (p, q) = mode.others();
        let rows = tensor.dims()[n];
        let mut row_ptr = vec![0usize; rows + 1];
        for c in tensor.coords() {
            row_ptr[c[n] + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut next = row_ptr.clone();
        let mut others = vec![[0usize; 2]; tensor.nnz()];
        let mut values = vec![0.0; tensor.nnz()];
        for (c, &v) in tensor.coords().iter().zip(tensor.values()) {
            let slot = next[c[n]];
            others[slot] = [c[p], c[q]];
            values[slot] = v;
            next[c[n]] += 1;
        }
        ModeIndex {
            row_ptr,
            others,
            values,
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn mttkrp_indexed(index: &ModeIndex, factors: [&DMatrix<f64>; 3], mode: Mode) -> DMatrix<f64> {
    let rank = factors[0].ncols();
    let rows = index.row_ptr.len() - 1;
    let (p, q) = mode.others();
    let (fp, fq) = (row_major(factors[p]), row_major(factors[q]));
    let mut out = vec![0.0; rows * rank];
    if rank > 0 {
        out.par_chunks_mut(rank).enumerate().for_each(|(row, acc)| {
            let span = index.row_ptr[row]..index.row_ptr[row + 1];
            for (&[ip, iq], &v) in index.others[span.clone()].iter().zip(&index.values[span]) {
                let xp = &fp[ip * rank..(ip + 1) * rank];
                let xq = &fq[iq * rank..(iq + 1) * rank];
                for r in 0..rank {
                    acc[r] += v * xp[r] * xq[r];
                }
            }
        });
    }
    DMatrix::from_row_slice(rows, rank, &out)
}

/// Matricized tensor times Khatri-Rao product for `mode`. Weights are not
/// applied.
pub fn mttkrp(
    tensor: &SparseTensor,
    factors: &FactorMatrices,
    mode: Mode,
) -> Result<DMatrix<f64>, CpError> {
    factors.check_dims(tensor.dims())?;
    let index = ModeIndex::new(tensor, mode);
    Ok(mttkrp_indexed(&index, factors.factors(), mode))
}

/// `||X - model||_F` via `||X||² - 2<X, model> + ||model||²`, never
/// materializing the dense model. Near an exact fit the result carries
/// cancellation error of order `sqrt(eps) * ||X||`.
pub fn reconstruction_residual(
    tensor: &SparseTensor,
    factors: &FactorMatrices,
) -> Result<f64, CpError> {
    factors.check_dims(tensor.dims())?;
    Ok(residual_unchecked(tensor, factors))
}

fn residual_unchecked(tensor: &SparseTensor, factors: &FactorMatrices) -> f64 {
    let norm_sq: f64 = tensor.values().iter().map(|v| v * v).sum();
    let inner = chunked_sum(tensor.coords(), tensor.values(), |[i, j, k], v| {
        v * factors.value(i, j, k)
    });
    let grams = factors.factors().map(gram);
    residual_from_parts(norm_sq, inner, &grams, &factors.weights)
}

fn residual_from_parts(
    norm_sq: f64,
    inner: f64,
    grams: &[DMatrix<f64>; 3],
    weights: &DVector<f64>,
) -> f64 {
    let gram = hadamard(&hadamard(&grams[0], &grams[1]), &grams[2]);
    let model_sq = weights.dot(&(&gram * weights));
    (norm_sq - 2.0 * inner + model_sq).max(0.0).sqrt()
}

/// Sum over entries with a fixed reduction tree, independent of thread count.
fn chunked_sum<F>(coords: &[[usize; 3]], values: &[f64], f: F) -> f64
where
    F: Fn([usize; 3], f64) -> f64 + Sync,
{
    let partials: Vec<f64> = coords
        .par_chunks(CHUNK)
        .zip(values.par_chunks(CHUNK))
        .map(|(cs, vs)| cs.iter().zip(vs).map(|(&c, &v)| f(c, v)).sum())
        .collect();
    partials.iter().sum()
}

fn gram(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.tr_mul(m)
}

fn hadamard(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    x.component_mul(y)
}

/// Solves `U G = M` for symmetric positive semi-definite `G`. Returns the
/// solution and whether the ridge fallback was needed.
fn solve_gram(g: &DMatrix<f64>, m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(chol) = g.clone().cholesky() {
        return (chol.solve(&m.transpose()).transpose(), false);
    }
    let trace = g.trace();
    let ridge = if trace > 0.0 {
        RIDGE_SCALE * trace
    } else {
        RIDGE_SCALE
    };
    let mut regularized = g.clone();
    for r in 0..g.nrows() {
        regularized[(r, r)] += ridge;
    }
    let solution = match regularized.clone().cholesky() {
        Some(chol) => chol.solve(&m.transpose()),
        None => regularized
            .lu()
            .solve(&m.transpose())
            .unwrap_or_else(|| DMatrix::zeros(g.nrows(), m.nrows())),
    };
    (solution.transpose(), true)
}

/// Normalizes columns to unit ℓ2 norm and returns the norms. Zero columns
/// are left untouched with norm 0.
fn normalize_columns(m: &mut DMatrix<f64>) -> DVector<f64> {
    let mut norms = DVector::zeros(m.ncols());
    for (r, mut col) in m.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
        norms[r] = n;
    }
    norms
}

fn random_factor(rng: &mut ChaCha8Rng, rows: usize, rank: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * rank).map(|_| rng.gen::<f64>()).collect();
    let mut m = DMatrix::from_row_slice(rows, rank, &data);
    normalize_columns(&mut m);
    m
}

/// Fits a rank-`config.rank` CP model to `tensor`.
pub fn cp_als(tensor: &SparseTensor, config: &CpConfig) -> Result<CpResult, CpError> {
    config.validate()?;
    if tensor.is_empty() || tensor.values().iter().all(|&v| v == 0.0) {
        return Err(CpError::EmptyTensor);
    }
    let dims = tensor.dims();
    let rank = config.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut factors = FactorMatrices::new(
        random_factor(&mut rng, dims[0], rank),
        random_factor(&mut rng, dims[1], rank),
        random_factor(&mut rng, dims[2], rank),
    );
    let indexes = Mode::ALL.map(|m| ModeIndex::new(tensor, m));
    let tensor_norm = tensor.norm();
    let norm_sq = tensor_norm * tensor_norm;
    let mut grams = factors.factors().map(gram);

    let mut residuals = vec![residual_unchecked(tensor, &factors)];
    let mut fit_old = 1.0 - residuals[0] / tensor_norm;
    let mut ridge_events = 0;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        // <X, model> from the last mode's MTTKRP: sum_r w_r sum_k C_kr M_kr.
        let mut inner = 0.0;
        for mode in Mode::ALL {
            let n = mode.index();
            let (p, q) = mode.others();
            let m = mttkrp_indexed(&indexes[n], factors.factors(), mode);
            let (mut update, ridged) = solve_gram(&hadamard(&grams[p], &grams[q]), &m);
            if ridged {
                ridge_events += 1;
                warn!("singular normal equations in mode {}; ridge applied", n + 1);
            }
            factors.weights = normalize_columns(&mut update);
            grams[n] = gram(&update);
            if mode == Mode::Third {
                inner = (0..rank)
                    .map(|r| factors.weights[r] * update.column(r).dot(&m.column(r)))
                    .sum();
            }
            match mode {
                Mode::First => factors.a = update,
                Mode::Second => factors.b = update,
                Mode::Third => factors.c = update,
            }
        }
        iterations += 1;
        let residual = residual_from_parts(norm_sq, inner, &grams, &factors.weights);
        residuals.push(residual);
        let fit = 1.0 - residual / tensor_norm;
        if (fit - fit_old).abs() < config.tol {
            converged = true;
            break;
        }
        fit_old = fit;
    }

    Ok(CpResult {
        factors,
        residuals,
        iterations,
        converged,
        ridge_events,
        tensor_norm,
    })
}

/// Writes a matrix as space-separated rows.
pub fn write_matrix<W: Write>(mut out: W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads space-separated rows written by [`write_matrix`].
pub fn read_matrix<R: BufRead>(input: R) -> Result<DMatrix<f64>, CpError> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| CpError::Parse {
                line: n + 1,
                reason: format!("{e}"),
            })?;
        if *cols.get_or_insert(parsed.len()) != parsed.len() {
            return Err(CpError::Parse {
                line: n + 1,
                reason: "ragged row".into(),
            });
        }
        data.extend(parsed);
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// Dense `I×J×K` array, indexed `[i][j][k]`.
    type Dense = Vec<Vec<Vec<f64>>>;

    fn densify(t: &SparseTensor) -> Dense {
        let [a, b, c] = t.dims();
        let mut d = vec![vec![vec![0.0; c]; b]; a];
        for ([i, j, k], v) in t.iter() {
            d[i][j][k] = v;
        }
        d
    }

    #[allow(clippy::needless_range_loop)]
    fn dense_mttkrp(d: &Dense, f: &FactorMatrices, mode: Mode) -> DMatrix<f64> {
        let (ni, nj, nk) = (d.len(), d[0].len(), d[0][0].len());
        let rank = f.rank();
        let rows = [ni, nj, nk][mode.index()];
        let mut out = DMatrix::zeros(rows, rank);
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    for r in 0..rank {
                        let (row, w) = match mode {
                            Mode::First => (i, f.b[(j, r)] * f.c[(k, r)]),
                            Mode::Second => (j, f.a[(i, r)] * f.c[(k, r)]),
                            Mode::Third => (k, f.a[(i, r)] * f.b[(j, r)]),
                        };
                        out[(row, r)] += d[i][j][k] * w;
                    }
                }
            }
        }
        out
    }

    fn dense_residual(d: &Dense, f: &FactorMatrices) -> f64 {
        let mut s = 0.0;
        for (i, plane) in d.iter().enumerate() {
            for (j, fiber) in plane.iter().enumerate() {
                for (k, &x) in fiber.iter().enumerate() {
                    let e = x - f.value(i, j, k);
                    s += e * e;
                }
            }
        }
        s.sqrt()
    }

    fn random_tensor(dims: [usize; 3], density: f64, seed: u64) -> SparseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    if rng.gen::<f64>() < density {
                        entries.push(([i, j, k], rng.gen_range(-2.0..2.0)));
                    }
                }
            }
        }
        if entries.is_empty() {
            entries.push(([0, 0, 0], 1.0));
        }
        SparseTensor::from_entries(dims, entries).unwrap()
    }

    fn random_factors(dims: [usize; 3], rank: usize, seed: u64) -> FactorMatrices {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |rows| DMatrix::from_fn(rows, rank, |_, _| rng.gen_range(-1.0..1.0));
        let (a, b, c) = (m(dims[0]), m(dims[1]), m(dims[2]));
        let mut f = FactorMatrices::new(a, b, c);
        f.weights = DVector::from_fn(rank, |r, _| 0.5 + r as f64);
        f
    }

    #[test]
    fn tracked_residual_matches_recomputation() {
        let t = random_tensor([7, 6, 9], 0.6, 3);
        let result = cp_als(
            &t,
            &CpConfig {
                rank: 3,
                max_iters: 12,
                tol: 1e-15,
                seed: 5,
            },
        )
        .unwrap();
        let direct = reconstruction_residual(&t, &result.factors).unwrap();
        assert_close(result.final_residual(), direct, 1e-9 * result.tensor_norm);
    }

    #[test]
    fn mttkrp_single_nonzero_all_ones() {
        // X(1,0,1) = 3 in a 2×2×2 tensor; mode 3 with all-ones factors puts
        // 3 in row k = 1.
        let t = SparseTensor::from_entries([2, 2, 2], vec![([1, 0, 1], 3.0)]).unwrap();
        let ones = || DMatrix::from_element(2, 1, 1.0);
        let f = FactorMatrices::new(ones(), ones(), ones());
        let m = mttkrp(&t, &f, Mode::Third).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 1, &[0.0, 3.0]));
    }

    #[test]
    fn mttkrp_of_empty_tensor_is_zero() {
        let t = SparseTensor::from_entries([3, 2, 4], vec![]).unwrap();
        let f = random_factors([3, 2, 4], 2, 1);
        for mode in Mode::ALL {
            let m = mttkrp(&t, &f, mode).unwrap();
            assert!(m.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mttkrp_rejects_mismatched_factors() {
        let t = random_tensor([3, 3, 3], 0.5, 1);
        let f = random_factors([3, 3, 2], 2, 1);
        assert!(matches!(
            mttkrp(&t, &f, Mode::First),
            Err(CpError::DimensionMismatch(_))
        ));
        assert!(matches!(
            reconstruction_residual(&t, &f),
            Err(CpError::DimensionMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn mttkrp_matches_dense_oracle(
            d0 in 1usize..=5, d1 in 1usize..=5, d2 in 1usize..=5,
            rank in 1usize..4, seed: u64,
        ) {
            let dims = [d0, d1, d2];
            let t = random_tensor(dims, 0.4, seed);
            let f = random_factors(dims, rank, seed ^ 0xabcd);
            let d = densify(&t);
            for mode in Mode::ALL {
                let fast = mttkrp(&t, &f, mode).unwrap();
                let slow = dense_mttkrp(&d, &f, mode);
                for (x, y) in fast.iter().zip(slow.iter()) {
                    prop_assert!((x - y).abs() <= 1e-10);
                }
            }
        }

        #[test]
        fn residual_matches_dense_oracle(seed: u64, rank in 1usize..4) {
            let dims = [4, 4, 3];
            let t = random_tensor(dims, 0.5, seed);
            let f = random_factors(dims, rank, seed.wrapping_add(7));
            let fast = reconstruction_residual(&t, &f).unwrap();
            let slow = dense_residual(&densify(&t), &f);
            prop_assert!((fast - slow).abs() <= 1e-9, "{} vs {}", fast, slow);
        }
    }

    #[test]
    fn residual_of_exact_model_is_zero() {
        // Dyadic factors keep every product exact.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.25, 0.0, 0.5, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 0.25]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.125, 0.5]);
        let f = FactorMatrices::new(a, b, c);
        let mut entries = Vec::new();
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..2 {
                    let v = f.value(i, j, k);
                    if v != 0.0 {
                        entries.push(([i, j, k], v));
                    }
                }
            }
        }
        let t = SparseTensor::from_entries([3, 2, 2], entries).unwrap();
        assert!(reconstruction_residual(&t, &f).unwrap() <= 1e-8);
    }

    #[test]
    fn residual_of_zero_model_is_tensor_norm() {
        let t = random_tensor([4, 3, 5], 0.3, 9);
        let mut f = random_factors([4, 3, 5], 2, 3);
        f.weights.fill(0.0);
        assert_close(reconstruction_residual(&t, &f).unwrap(), t.norm(), 1e-12);
    }

    fn unit(v: &[f64]) -> DVector<f64> {
        let v = DVector::from_column_slice(v);
        let n = v.norm();
        v / n
    }

    fn rank_one_tensor(
        weight: f64,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
    ) -> SparseTensor {
        let mut entries = Vec::new();
        for i in 0..a.len() {
            for j in 0..b.len() {
                for k in 0..c.len() {
                    let v = weight * a[i] * b[j] * c[k];
                    if v != 0.0 {
                        entries.push(([i, j, k], v));
                    }
                }
            }
        }
        SparseTensor::from_entries([a.len(), b.len(), c.len()], entries).unwrap()
    }

    #[test]
    fn recovers_planted_rank_one() {
        let a = unit(&[1.0, 2.0, 0.5, 3.0]);
        let b = unit(&[0.2, 1.0, 1.5]);
        let c = unit(&[2.0, 0.0, 1.0, 1.0, 0.3]);
        let weight = 7.5;
        let t = rank_one_tensor(weight, &a, &b, &c);
        let cfg = CpConfig {
            rank: 1,
            max_iters: 200,
            tol: 1e-12,
            seed: 3,
        };
        let res = cp_als(&t, &cfg).unwrap();
        assert_close(res.factors.weights[0], weight, 1e-6);
        for (truth, got) in [
            (&a, &res.factors.a),
            (&b, &res.factors.b),
            (&c, &res.factors.c),
        ] {
            let cos = truth.dot(&got.column(0)) / got.column(0).norm();
            assert!(cos.abs() >= 0.999, "cosine {cos}");
        }
    }

    #[test]
    fn one_sweep_does_not_increase_residual() {
        for seed in 0..10 {
            let t = random_tensor([5, 4, 6], 0.3, seed);
            let cfg = CpConfig {
                rank: 1,
                max_iters: 1,
                tol: 1e-12,
                seed,
            };
            let res = cp_als(&t, &cfg).unwrap();
            assert_eq!(res.residuals.len(), 2);
            assert!(res.residuals[1] <= res.residuals[0] + 1e-9);
        }
    }

    #[test]
    fn residual_history_is_monotone() {
        for seed in 0..5 {
            let t = random_tensor([6, 6, 8], 0.3, 100 + seed);
            let cfg = CpConfig {
                rank: 3,
                max_iters: 60,
                tol: 1e-14,
                seed,
            };
            let res = cp_als(&t, &cfg).unwrap();
            for w in res.residuals.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn output_columns_are_unit_norm() {
        let t = random_tensor([6, 5, 7], 0.4, 4);
        let res = cp_als(
            &t,
            &CpConfig {
                rank: 4,
                ..CpConfig::default()
            },
        )
        .unwrap();
        for f in [&res.factors.a, &res.factors.b, &res.factors.c] {
            for col in f.column_iter() {
                let n = col.norm();
                assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            }
        }
        assert!(res.factors.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let t = random_tensor([8, 8, 10], 0.2, 5);
        let cfg = CpConfig {
            rank: 3,
            seed: 42,
            ..CpConfig::default()
        };
        let x = cp_als(&t, &cfg).unwrap();
        let y = cp_als(&t, &cfg).unwrap();
        assert_eq!(x.factors, y.factors);
        assert_eq!(x.residuals, y.residuals);
    }

    #[test]
    fn rank_may_exceed_dimensions() {
        let t = random_tensor([2, 2, 3], 0.9, 6);
        let res = cp_als(
            &t,
            &CpConfig {
                rank: 5,
                max_iters: 5,
                ..CpConfig::default()
            },
        )
        .unwrap();
        assert_eq!(res.factors.rank(), 5);
        assert!(res.final_residual().is_finite());
    }

    #[test]
    fn duplicate_slices_trigger_ridge() {
        // Two identical articles make C rank-deficient when R exceeds the
        // number of distinct slices.
        let entries = vec![
            ([0, 1, 0], 1.0),
            ([1, 0, 0], 1.0),
            ([0, 1, 1], 1.0),
            ([1, 0, 1], 1.0),
        ];
        let t = SparseTensor::from_entries([2, 2, 2], entries).unwrap();
        let res = cp_als(
            &t,
            &CpConfig {
                rank: 4,
                max_iters: 10,
                ..CpConfig::default()
            },
        )
        .unwrap();
        assert!(res.ridge_events > 0);
        assert!(res.final_residual().is_finite());
    }

    #[test]
    fn rejects_invalid_inputs() {
        let empty = SparseTensor::from_entries([2, 2, 2], vec![]).unwrap();
        assert!(matches!(
            cp_als(&empty, &CpConfig::default()),
            Err(CpError::EmptyTensor)
        ));
        let zeros = SparseTensor::from_entries([2, 2, 2], vec![([0, 0, 0], 0.0)]).unwrap();
        assert!(matches!(
            cp_als(&zeros, &CpConfig::default()),
            Err(CpError::EmptyTensor)
        ));
        let t = random_tensor([3, 3, 3], 0.5, 1);
        for bad in [
            CpConfig {
                rank: 0,
                ..CpConfig::default()
            },
            CpConfig {
                rank: 51,
                ..CpConfig::default()
            },
            CpConfig {
                tol: 0.0,
                ..CpConfig::default()
            },
            CpConfig {
                max_iters: 0,
                ..CpConfig::default()
            },
        ] {
            assert!(cp_als(&t, &bad).is_err());
        }
        assert!(Mode::try_from(4).is_err());
    }

    #[test]
    fn matrix_text_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-300, 0.1, 0.2, 0.3]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
        assert!(read_matrix("1 2\n3\n".as_bytes()).is_err());
    }
}
