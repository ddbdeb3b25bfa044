//! Locally discrete harmonic spaces and the discrete Caccioppoli ratio.
//!
//! A function is locally discrete harmonic on a cluster `B` when the
//! bilinear form vanishes against every test function supported inside
//! `B`. In the hat basis those test functions are spanned by the hats of
//! the DOFs whose whole support lies in `B`, so the space is the null
//! space of the corresponding rows of the system matrix. The rows are
//! linearly independent (they come from an invertible matrix), which makes
//! the dimension exactly `N - card(J_B)`.

use crate::fem::{Discretization, DofMap, PiecewiseP1, SparseMatrix};
use crate::mesh::{Cluster, Mesh};
use crate::{Error, Result};
use nalgebra::DMatrix;

/// Mass-orthonormal basis of the locally discrete harmonic space on a
/// cluster.
pub struct HarmonicBasis {
    pub cluster: Cluster,
    /// `N x dim` coefficient matrix over the interior DOFs; columns are
    /// orthonormal in the mass inner product (unless `trivial`).
    pub basis: DMatrix<f64>,
    /// DOFs whose hat support lies inside the cluster (the constraints).
    pub constrained_dofs: Vec<usize>,
    /// Worst constraint violation `max_j |(A u)_j| / ||u||` over columns.
    pub max_residual: f64,
    /// Set when there are no constraints at all and the basis is the raw
    /// identity.
    pub trivial: bool,
}

impl HarmonicBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// DOFs whose hat functions are supported inside the cluster.
pub fn interior_dofs(mesh: &Mesh, dofmap: &DofMap, b: &Cluster) -> Vec<usize> {
    (0..dofmap.n())
        .filter(|&dof| {
            mesh.elements_at_node(dofmap.node_of(dof)).iter().all(|&t| b.contains(t))
        })
        .collect()
}

/// Null-space parametrization of the harmonic space on `B`: with `F` the
/// constrained and `G` the free DOFs, `u_F = -A_FF^{-1} A_FG u_G`. The
/// constrained block inherits invertibility from the coercive full matrix.
struct RawHarmonic {
    constrained: Vec<usize>,
    free: Vec<usize>,
    /// `card(F) x card(G)` coupling matrix `A_FF^{-1} A_FG`.
    coupled: DMatrix<f64>,
}

fn raw_harmonic(a: &SparseMatrix, constrained: Vec<usize>, n: usize) -> Result<RawHarmonic> {
    let k = constrained.len();
    let mut class = vec![usize::MAX; n];
    for (row, &f) in constrained.iter().enumerate() {
        class[f] = row;
    }
    let free: Vec<usize> = (0..n).filter(|&j| class[j] == usize::MAX).collect();
    let mut free_col = vec![usize::MAX; n];
    for (col, &g) in free.iter().enumerate() {
        free_col[g] = col;
    }
    let mut a_ff = DMatrix::<f64>::zeros(k, k);
    let mut a_fg = DMatrix::<f64>::zeros(k, free.len());
    for (row, &f) in constrained.iter().enumerate() {
        let (cols, vals) = a.row(f);
        for (&j, &v) in cols.iter().zip(vals) {
            if class[j] != usize::MAX {
                a_ff[(row, class[j])] = v;
            } else {
                a_fg[(row, free_col[j])] = v;
            }
        }
    }
    let coupled = a_ff
        .lu()
        .solve(&a_fg)
        .ok_or_else(|| Error::SolverFailure("constrained block is singular".into()))?;
    Ok(RawHarmonic { constrained, free, coupled })
}

impl RawHarmonic {
    fn dim(&self) -> usize {
        self.free.len()
    }

    /// Dense `N x dim` basis matrix.
    fn full_basis(&self, n: usize) -> DMatrix<f64> {
        let mut basis = DMatrix::<f64>::zeros(n, self.dim());
        for (col, &g) in self.free.iter().enumerate() {
            basis[(g, col)] = 1.0;
        }
        for (row, &f) in self.constrained.iter().enumerate() {
            for col in 0..self.dim() {
                basis[(f, col)] = -self.coupled[(row, col)];
            }
        }
        basis
    }

    /// Rows of the basis for a selection of DOFs.
    fn rows_for(&self, dofs: &[usize], n: usize) -> DMatrix<f64> {
        let mut class = vec![usize::MAX; n];
        for (row, &f) in self.constrained.iter().enumerate() {
            class[f] = row;
        }
        let mut free_col = vec![usize::MAX; n];
        for (col, &g) in self.free.iter().enumerate() {
            free_col[g] = col;
        }
        let mut rows = DMatrix::<f64>::zeros(dofs.len(), self.dim());
        for (out, &dof) in dofs.iter().enumerate() {
            if class[dof] != usize::MAX {
                for col in 0..self.dim() {
                    rows[(out, col)] = -self.coupled[(class[dof], col)];
                }
            } else {
                rows[(out, free_col[dof])] = 1.0;
            }
        }
        rows
    }
}

/// Builds the mass-orthonormal harmonic basis on `B`.
pub fn harmonic_basis(disc: &Discretization, b: &Cluster) -> Result<HarmonicBasis> {
    let mesh = &disc.mesh;
    let dofmap = &disc.dofmap;
    let n = dofmap.n();
    let constrained = interior_dofs(mesh, dofmap, b);
    if constrained.is_empty() {
        return Ok(HarmonicBasis {
            cluster: b.clone(),
            basis: DMatrix::identity(n, n),
            constrained_dofs: constrained,
            max_residual: 0.0,
            trivial: true,
        });
    }
    let raw = raw_harmonic(&disc.a, constrained, n)?;
    let mut basis = raw.full_basis(n);
    if raw.dim() > 0 {
        let (mass, _) = disc.norms.interior(dofmap);
        let mut mass_basis = DMatrix::<f64>::zeros(n, raw.dim());
        for col in 0..raw.dim() {
            let x: Vec<f64> = basis.column(col).iter().copied().collect();
            let mx = mass.matvec(&x)?;
            for row in 0..n {
                mass_basis[(row, col)] = mx[row];
            }
        }
        let gram = basis.transpose() * &mass_basis;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::SolverFailure("harmonic Gram matrix not positive".into()))?;
        // basis <- basis * L^{-T}, via L X = basis^T.
        let solved = chol
            .l()
            .solve_lower_triangular(&basis.transpose())
            .ok_or_else(|| Error::SolverFailure("triangular solve failed".into()))?;
        basis = solved.transpose();
    }
    let max_residual = constraint_residual(&disc.a, &raw.constrained, &basis)?;
    Ok(HarmonicBasis {
        cluster: b.clone(),
        basis,
        constrained_dofs: raw.constrained,
        max_residual,
        trivial: false,
    })
}

/// `max_j |(A u)_j| / ||u||_2` over the columns of `basis`, `j` ranging
/// over the constrained DOFs.
pub fn constraint_residual(
    a: &SparseMatrix,
    constrained: &[usize],
    basis: &DMatrix<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for col in 0..basis.ncols() {
        let x: Vec<f64> = basis.column(col).iter().copied().collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let ax = a.matvec(&x)?;
        let residual = constrained.iter().map(|&j| ax[j].abs()).fold(0.0, f64::max);
        worst = worst.max(residual / norm);
    }
    Ok(worst)
}

/// Residual tolerance for the harmonicity precondition.
const HARMONIC_TOL: f64 = 1e-8;

/// The Caccioppoli ratio `delta |u|_{H1(B)} / ||u||_{L2(B^delta)}` of one
/// function; rejects inputs that are not locally discrete harmonic on the
/// inflated cluster (the inequality is false for general functions).
pub fn caccioppoli_ratio(
    disc: &Discretization,
    u: &[f64],
    b: &Cluster,
    delta: f64,
) -> Result<f64> {
    let mesh = &disc.mesh;
    if u.len() != disc.n() {
        return Err(Error::DimensionMismatch(format!(
            "caccioppoli_ratio: {} coefficients vs {} DOFs",
            u.len(),
            disc.n()
        )));
    }
    let inflated = mesh.inflate(b, delta)?;
    let constrained = interior_dofs(mesh, &disc.dofmap, &inflated);
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("caccioppoli_ratio: zero function"));
    }
    let ax = disc.a.matvec(u)?;
    let residual = constrained.iter().map(|&j| ax[j].abs()).fold(0.0, f64::max) / norm;
    if residual > HARMONIC_TOL {
        return Err(Error::NotHarmonic { residual, tolerance: HARMONIC_TOL });
    }
    let f = PiecewiseP1::from_dofs(mesh, &disc.dofmap, u);
    let h1_sq = disc.norms.h1_semi_sq_on(mesh, b.iter(), &f);
    let l2_sq = disc.norms.l2_norm_sq_on(mesh, inflated.iter(), &f);
    if l2_sq <= 0.0 {
        return Err(Error::invalid(
            "caccioppoli_ratio: function vanishes on the inflated cluster",
        ));
    }
    Ok(delta * (h1_sq / l2_sq).sqrt())
}

/// Sharp Caccioppoli constant of one cluster: maximizes the ratio over the
/// whole harmonic space of `B^delta` via a generalized eigenproblem.
///
/// Both quadratic forms only see function values at the nodes of
/// `B^delta`, so the maximization happens on the space of restrictions to
/// those nodes. Directions invisible to the `L2(B^delta)` form vanish on
/// `B^delta` and are therefore invisible to the `H1(B)` form too, which
/// keeps the reduced pencil well posed. Returns the max ratio and the
/// dimension of the harmonic space.
pub fn caccioppoli_max_ratio(
    disc: &Discretization,
    b: &Cluster,
    delta: f64,
) -> Result<(f64, usize)> {
    let mesh = &disc.mesh;
    let dofmap = &disc.dofmap;
    let n = dofmap.n();
    let inflated = mesh.inflate(b, delta)?;
    let constrained = interior_dofs(mesh, dofmap, &inflated);
    let raw = raw_harmonic(&disc.a, constrained, n)?;
    let dim = raw.dim();
    if dim == 0 {
        return Ok((0.0, 0));
    }

    // Interior nodes of the inflated cluster, as DOF indices; boundary
    // nodes carry fixed zeros and drop out of the quadratic forms.
    let mut node_set: Vec<usize> = Vec::new();
    for t in inflated.iter() {
        for &v in &mesh.element(t).vertex_ids {
            if let Some(dof) = dofmap.dof_of(v) {
                node_set.push(dof);
            }
        }
    }
    node_set.sort_unstable();
    node_set.dedup();
    let mut local_index = vec![usize::MAX; n];
    for (k, &dof) in node_set.iter().enumerate() {
        local_index[dof] = k;
    }
    let n_loc = node_set.len();
    if n_loc == 0 {
        return Ok((0.0, dim));
    }

    // Restriction of the harmonic space to the local nodes.
    let restricted = raw.rows_for(&node_set, n);

    // Local quadratic forms on the node selection.
    let mut h1_local = DMatrix::<f64>::zeros(n_loc, n_loc);
    let mut l2_local = DMatrix::<f64>::zeros(n_loc, n_loc);
    let locals = &disc.norms.local;
    for t in inflated.iter() {
        let vs = mesh.element(t).vertex_ids;
        let in_b = b.contains(t);
        for i in 0..3 {
            let Some(di) = dofmap.dof_of(vs[i]) else { continue };
            let li = local_index[di];
            for j in 0..3 {
                let Some(dj) = dofmap.dof_of(vs[j]) else { continue };
                let lj = local_index[dj];
                l2_local[(li, lj)] += locals[t].mass[i][j];
                if in_b {
                    h1_local[(li, lj)] += locals[t].stiffness[i][j];
                }
            }
        }
    }

    // Orthonormal basis of the restriction space from the spectral
    // decomposition of its Gram matrix. The nonzero eigenvalues are all
    // >= 1 here (free DOFs contribute unit rows), so the rank cut is
    // clean.
    let gram = &restricted * restricted.transpose();
    let eig = nalgebra::SymmetricEigen::new(gram);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if lambda_max <= 0.0 {
        return Ok((0.0, dim));
    }
    let keep: Vec<usize> =
        (0..n_loc).filter(|&i| eig.eigenvalues[i] > 1e-20 * lambda_max).collect();
    let mut q = DMatrix::<f64>::zeros(n_loc, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        for row in 0..n_loc {
            q[(row, col)] = eig.eigenvectors[(row, i)];
        }
    }

    let h1_q = q.transpose() * &h1_local * &q;
    let l2_q = q.transpose() * &l2_local * &q;
    let l2_eig = nalgebra::SymmetricEigen::new(l2_q);
    let l2_max = l2_eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if l2_max <= 0.0 {
        return Ok((0.0, dim));
    }
    let keep2: Vec<usize> = (0..keep.len())
        .filter(|&i| l2_eig.eigenvalues[i] > 1e-12 * l2_max)
        .collect();
    if keep2.is_empty() {
        return Ok((0.0, dim));
    }
    let mut w = DMatrix::<f64>::zeros(keep.len(), keep2.len());
    for (col, &i) in keep2.iter().enumerate() {
        let scale = 1.0 / l2_eig.eigenvalues[i].sqrt();
        for row in 0..keep.len() {
            w[(row, col)] = l2_eig.eigenvectors[(row, i)] * scale;
        }
    }
    let reduced = w.transpose() * &h1_q * &w;
    let top = nalgebra::SymmetricEigen::new(reduced)
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    Ok((delta * top.max(0.0).sqrt(), dim))
}
