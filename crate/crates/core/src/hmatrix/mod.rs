//! Hierarchical matrices: blockwise truncated-SVD compression of a dense
//! inverse over an admissible block partition, the computable spectral
//! error bound, matrix-vector products and memory accounting.
//!
//! Admissible blocks hold rank-`r` factorizations `X Y^T` obtained from the
//! blockwise singular value decomposition of the dense matrix; small blocks
//! are copied verbatim. The first discarded singular value of every block
//! is recorded, which makes `depth * max sigma_{r+1}` a computable upper
//! bound for the spectral approximation error.

use crate::clustering::BlockPartition;
use crate::fem::SparseMatrix;
use crate::util::fmt_e17;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Default cap on the dense-inversion problem size.
pub const DEFAULT_DENSE_BUDGET: usize = 10_000;

/// A low-rank factorized block `X Y^T` with its singular-value record.
#[derive(Clone, Debug)]
pub struct LowRankBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// `card(I) x r`, the left factor scaled by the singular values.
    pub x: DMatrix<f64>,
    /// `card(J) x r`.
    pub y: DMatrix<f64>,
    /// Retained singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// First discarded singular value `sigma_{r+1}`; zero when the
    /// truncation is exact.
    pub truncation_error: f64,
}

impl LowRankBlock {
    pub fn rank(&self) -> usize {
        self.x.ncols()
    }
}

/// A verbatim dense block.
#[derive(Clone, Debug)]
pub struct DenseBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: DMatrix<f64>,
}

/// Block-structured matrix mirroring a block partition: one low-rank block
/// per admissible pair, one dense block per small pair.
#[derive(Clone, Debug)]
pub struct HMatrix {
    pub n: usize,
    pub rank_bound: usize,
    /// Depth of the block cluster tree the partition came from.
    pub depth: usize,
    pub low_rank: Vec<LowRankBlock>,
    pub dense: Vec<DenseBlock>,
}

/// Explicit dense inverse with a residual spot check on pseudo-random
/// columns: `||A M - I||_max <= 1e-8` on every checked column.
pub fn invert_dense(a: &SparseMatrix, budget: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("matrix is {}x{}", n, a.ncols())));
    }
    if n > budget {
        return Err(Error::DenseBudgetExceeded { n, budget, bytes: 8 * (n as u64) * (n as u64) });
    }
    let dense = a.to_dense();
    let inverse = dense
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SolverFailure("matrix is singular".into()))?;
    // Deterministic pseudo-random column picks.
    let mut state = 0x853c49e6748fea9bu64 ^ (n as u64);
    for _ in 0..10.min(n) {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let j = (state >> 33) as usize % n;
        let col = inverse.column(j);
        let residual = &dense * col;
        for i in 0..n {
            let expected = if i == j { 1.0 } else { 0.0 };
            if (residual[i] - expected).abs() > 1e-8 {
                return Err(Error::SolverFailure(format!(
                    "inverse residual {:.3e} at ({i}, {j}) exceeds 1e-8",
                    (residual[i] - expected).abs()
                )));
            }
        }
    }
    Ok(inverse)
}

/// Full singular value decomposition of one admissible block, kept around
/// so that every rank bound of a sweep truncates the same factorization.
struct PlannedBlock {
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// `card(I) x min_dim`, columns ordered by nonincreasing singular value.
    u: DMatrix<f64>,
    /// `card(J) x min_dim`.
    v: DMatrix<f64>,
    sigma: Vec<f64>,
}

/// All blockwise SVDs of a dense matrix over a partition, computed once.
pub struct CompressionPlan {
    n: usize,
    depth: usize,
    admissible: Vec<PlannedBlock>,
    small: Vec<DenseBlock>,
}

fn extract(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Sorted SVD with a deterministic sign convention: the first nonzero
/// entry of every left singular vector is positive.
fn block_svd(block: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let min_dim = block.nrows().min(block.ncols());
    let svd = block.clone().svd(true, true);
    let u_raw = svd.u.expect("svd with u requested");
    let vt_raw = svd.v_t.expect("svd with v_t requested");
    let mut order: Vec<usize> = (0..min_dim).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("singular values are finite")
    });
    let mut u = DMatrix::zeros(block.nrows(), min_dim);
    let mut v = DMatrix::zeros(block.ncols(), min_dim);
    let mut sigma = Vec::with_capacity(min_dim);
    for (k, &src) in order.iter().enumerate() {
        sigma.push(svd.singular_values[src]);
        let mut flip = 1.0;
        for i in 0..block.nrows() {
            let val = u_raw[(i, src)];
            if val != 0.0 {
                flip = val.signum();
                break;
            }
        }
        for i in 0..block.nrows() {
            u[(i, k)] = flip * u_raw[(i, src)];
        }
        for j in 0..block.ncols() {
            v[(j, k)] = flip * vt_raw[(src, j)];
        }
    }
    (u, v, sigma)
}

impl CompressionPlan {
    /// Runs the blockwise SVD of `m` over every admissible block of the
    /// partition and copies the small blocks verbatim.
    pub fn new(m: &DMatrix<f64>, partition: &BlockPartition) -> Result<Self> {
        let n = partition.n();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, partition expects {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        let admissible = partition
            .admissible
            .iter()
            .map(|b| {
                let block = extract(m, &b.rows, &b.cols);
                let (u, v, sigma) = block_svd(&block);
                PlannedBlock { rows: b.rows.clone(), cols: b.cols.clone(), u, v, sigma }
            })
            .collect();
        let small = partition
            .small
            .iter()
            .map(|b| DenseBlock {
                rows: b.rows.clone(),
                cols: b.cols.clone(),
                values: extract(m, &b.rows, &b.cols),
            })
            .collect();
        Ok(CompressionPlan { n, depth: partition.depth, admissible, small })
    }

    /// Largest `min(card I, card J)` over the admissible blocks: the rank
    /// bound at which truncation becomes exact.
    pub fn max_min_dim(&self) -> usize {
        self.admissible.iter().map(|b| b.sigma.len()).max().unwrap_or(0)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Rank-`r` truncation of every admissible block.
    pub fn truncate(&self, r: usize) -> Result<HMatrix> {
        if r < 1 {
            return Err(Error::invalid("rank bound must be at least 1"));
        }
        let low_rank = self
            .admissible
            .iter()
            .map(|b| {
                let min_dim = b.sigma.len();
                let k = r.min(min_dim);
                let mut x = DMatrix::zeros(b.rows.len(), k);
                for c in 0..k {
                    for i in 0..b.rows.len() {
                        x[(i, c)] = b.u[(i, c)] * b.sigma[c];
                    }
                }
                let y = b.v.columns(0, k).into_owned();
                LowRankBlock {
                    rows: b.rows.clone(),
                    cols: b.cols.clone(),
                    x,
                    y,
                    singular_values: b.sigma[..k].to_vec(),
                    truncation_error: if min_dim > r { b.sigma[r] } else { 0.0 },
                }
            })
            .collect();
        Ok(HMatrix {
            n: self.n,
            rank_bound: r,
            depth: self.depth,
            low_rank,
            dense: self.small.clone(),
        })
    }
}

/// Blockwise truncated-SVD compression at rank bound `r`.
pub fn compress(m: &DMatrix<f64>, partition: &BlockPartition, r: usize) -> Result<HMatrix> {
    CompressionPlan::new(m, partition)?.truncate(r)
}

/// The computable error bound `depth * max sigma_{r+1}` over the
/// admissible blocks (small blocks are exact and contribute zero).
pub fn computable_bound(h: &HMatrix) -> f64 {
    let max_sigma = h.low_rank.iter().map(|b| b.truncation_error).fold(0.0, f64::max);
    h.depth as f64 * max_sigma
}

/// `y = H x` by blockwise accumulation in partition order.
pub fn hmatvec(h: &HMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h.n {
        return Err(Error::DimensionMismatch(format!(
            "hmatvec: vector length {} vs dimension {}",
            x.len(),
            h.n
        )));
    }
    let mut y = vec![0.0; h.n];
    for block in &h.low_rank {
        let xj = DVector::from_fn(block.cols.len(), |j, _| x[block.cols[j]]);
        let yi = &block.x * (block.y.transpose() * xj);
        for (i, &row) in block.rows.iter().enumerate() {
            y[row] += yi[i];
        }
    }
    for block in &h.dense {
        let xj = DVector::from_fn(block.cols.len(), |j, _| x[block.cols[j]]);
        let yi = &block.values * xj;
        for (i, &row) in block.rows.iter().enumerate() {
            y[row] += yi[i];
        }
    }
    Ok(y)
}

/// `y = H^T x`.
pub fn hmatvec_transpose(h: &HMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h.n {
        return Err(Error::DimensionMismatch(format!(
            "hmatvec_transpose: vector length {} vs dimension {}",
            x.len(),
            h.n
        )));
    }
    let mut y = vec![0.0; h.n];
    for block in &h.low_rank {
        let xi = DVector::from_fn(block.rows.len(), |i, _| x[block.rows[i]]);
        let yj = &block.y * (block.x.transpose() * xi);
        for (j, &col) in block.cols.iter().enumerate() {
            y[col] += yj[j];
        }
    }
    for block in &h.dense {
        let xi = DVector::from_fn(block.rows.len(), |i, _| x[block.rows[i]]);
        let yj = block.values.transpose() * xi;
        for (j, &col) in block.cols.iter().enumerate() {
            y[col] += yj[j];
        }
    }
    Ok(y)
}

/// Materializes the H-matrix as a dense matrix.
pub fn reconstruct_dense(h: &HMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(h.n, h.n);
    for block in &h.low_rank {
        let values = &block.x * block.y.transpose();
        for (i, &row) in block.rows.iter().enumerate() {
            for (j, &col) in block.cols.iter().enumerate() {
                m[(row, col)] = values[(i, j)];
            }
        }
    }
    for block in &h.dense {
        for (i, &row) in block.rows.iter().enumerate() {
            for (j, &col) in block.cols.iter().enumerate() {
                m[(row, col)] = block.values[(i, j)];
            }
        }
    }
    m
}

/// Two-sided error report of `||M - H||`.
#[derive(Clone, Copy, Debug)]
pub struct SpectralError {
    /// Power-iteration estimate of the spectral norm (a lower bound up to
    /// iteration error).
    pub estimate: f64,
    /// Frobenius norm of the difference, an upper bound for the spectral
    /// norm.
    pub frobenius: f64,
}

/// Power-iteration estimate of `||M - H||_2` (matrix-free in `H`), with
/// the blockwise Frobenius norm as an upper-bound companion.
pub fn spectral_error(
    m: &DMatrix<f64>,
    h: &HMatrix,
    iterations: usize,
    rng: &mut impl Rng,
) -> Result<SpectralError> {
    if m.nrows() != h.n || m.ncols() != h.n {
        return Err(Error::DimensionMismatch(format!(
            "spectral_error: matrix is {}x{}, H-matrix has dimension {}",
            m.nrows(),
            m.ncols(),
            h.n
        )));
    }
    let n = h.n;
    // Frobenius part, block by block against M.
    let mut frob_sq = 0.0;
    for block in &h.low_rank {
        let exact = extract(m, &block.rows, &block.cols);
        let approx = &block.x * block.y.transpose();
        frob_sq += (exact - approx).norm_squared();
    }
    for block in &h.dense {
        let exact = extract(m, &block.rows, &block.cols);
        frob_sq += (exact - &block.values).norm_squared();
    }

    // Power iteration on (M-H)^T (M-H).
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let hx = hmatvec(h, x)?;
        let mx = m * DVector::from_column_slice(x);
        Ok((0..n).map(|i| mx[i] - hx[i]).collect())
    };
    let apply_t = |x: &[f64]| -> Result<Vec<f64>> {
        let htx = hmatvec_transpose(h, x)?;
        let mtx = m.transpose() * DVector::from_column_slice(x);
        Ok((0..n).map(|i| mtx[i] - htx[i]).collect())
    };
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let y = apply(&x)?;
        estimate = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if estimate == 0.0 {
            break;
        }
        x = apply_t(&y)?;
    }
    Ok(SpectralError { estimate, frobenius: frob_sq.sqrt() })
}

/// Stored bytes at 8 bytes per scalar, factors and dense values only;
/// index metadata is accounted separately.
#[derive(Clone, Copy, Debug)]
pub struct MemoryReport {
    pub factor_bytes: u64,
    pub index_bytes: u64,
}

pub fn memory_bytes(h: &HMatrix) -> MemoryReport {
    let mut factors = 0u64;
    let mut indices = 0u64;
    for block in &h.low_rank {
        factors += 8 * (block.rank() as u64) * (block.rows.len() + block.cols.len()) as u64;
        indices += 8 * (block.rows.len() + block.cols.len()) as u64;
    }
    for block in &h.dense {
        factors += 8 * (block.rows.len() as u64) * (block.cols.len() as u64);
        indices += 8 * (block.rows.len() + block.cols.len()) as u64;
    }
    MemoryReport { factor_bytes: factors, index_bytes: indices }
}

/// One row of the rank-sweep experiment.
#[derive(Clone, Copy, Debug)]
pub struct ExperimentRow {
    pub r: usize,
    pub computable_bound: f64,
    pub spectral_error: f64,
    pub memory_bytes: u64,
    pub depth: usize,
    pub n_adm: usize,
    pub n_small: usize,
}

/// Truncates the plan at every rank bound in `ranks` and measures bound,
/// spectral error and memory per rank.
pub fn rank_sweep(
    m: &DMatrix<f64>,
    plan: &CompressionPlan,
    ranks: impl Iterator<Item = usize>,
    power_iterations: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ExperimentRow>> {
    let mut rows = Vec::new();
    for r in ranks {
        let h = plan.truncate(r)?;
        let err = spectral_error(m, &h, power_iterations, rng)?;
        rows.push(ExperimentRow {
            r,
            computable_bound: computable_bound(&h),
            spectral_error: err.estimate,
            memory_bytes: memory_bytes(&h).factor_bytes,
            depth: h.depth,
            n_adm: h.low_rank.len(),
            n_small: h.dense.len(),
        });
    }
    Ok(rows)
}

/// Experiment CSV: fixed header, floats at 17 significant digits.
pub fn write_experiment_csv(rows: &[ExperimentRow], out: &mut impl std::io::Write) -> Result<()> {
    writeln!(out, "r,computable_bound,spectral_error,memory_bytes,depth,n_adm,n_small")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.r,
            fmt_e17(row.computable_bound),
            fmt_e17(row.spectral_error),
            row.memory_bytes,
            row.depth,
            row.n_adm,
            row.n_small
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
