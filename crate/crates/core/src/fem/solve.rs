//! Dense-factorization solver for the assembled systems and the
//! discrete solution operator built on it.

use super::dual::{apply_lambda, apply_lambda_t, DualSystem};
use super::{assemble_load, DofMap, ElementFunction, NormMatrices, PiecewiseP1, SparseMatrix};
use crate::mesh::Mesh;
use crate::{Error, Result};
use nalgebra::DVector;
use rand::Rng;

/// Relative residual enforced after every solve.
const SOLVE_RESIDUAL_TOL: f64 = 1e-12;

/// LU factorization of the system matrix with a post-solve residual check.
/// The desk-scale systems are small enough that a dense factorization is
/// the simplest route satisfying the accuracy contract.
pub struct StiffnessSolver {
    matrix: SparseMatrix,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl StiffnessSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "system matrix is {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let dense = a.to_dense();
        let lu = dense.lu();
        if !lu.is_invertible() {
            return Err(Error::SolverFailure(
                "LU factorization detected a singular system matrix".into(),
            ));
        }
        Ok(StiffnessSolver { matrix: a.clone(), lu })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves `A u = b` and verifies `||Au - b|| <= 1e-12 ||b||`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "solve: rhs length {} vs system size {}",
                b.len(),
                self.n()
            )));
        }
        let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_b == 0.0 {
            return Ok(vec![0.0; self.n()]);
        }
        let rhs = DVector::from_column_slice(b);
        let u = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::SolverFailure("LU solve failed".into()))?;
        let u: Vec<f64> = u.iter().copied().collect();
        let au = self.matrix.matvec(&u)?;
        let residual =
            au.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / norm_b;
        if residual > SOLVE_RESIDUAL_TOL {
            return Err(Error::SolverFailure(format!(
                "solve residual {residual:.3e} exceeds {SOLVE_RESIDUAL_TOL:.1e}"
            )));
        }
        Ok(u)
    }
}

/// Galerkin solution together with the a-priori data of its bound.
pub struct DiscreteSolution {
    pub coefficients: Vec<f64>,
    /// `||u||_{H1}` of the discrete solution.
    pub h1_norm: f64,
    /// `||f||_{L2}` of the right-hand side.
    pub f_l2_norm: f64,
}

/// The discrete solution operator: the unique `u` in the constrained P1
/// space with `a(u, phi_m) = <f, phi_m>` for all interior hats.
pub fn discrete_solution(
    mesh: &Mesh,
    dofmap: &DofMap,
    norms: &NormMatrices,
    solver: &StiffnessSolver,
    f: &impl ElementFunction,
) -> Result<DiscreteSolution> {
    let b = assemble_load(mesh, dofmap, f);
    let coefficients = solver.solve(&b)?;
    let u = PiecewiseP1::from_dofs(mesh, dofmap, &coefficients);
    let h1_norm = (norms.l2_norm_sq(mesh, &u) + norms.h1_semi_sq(mesh, &u)).sqrt();
    let f_l2_sq: f64 = (0..mesh.n_elements())
        .map(|t| {
            super::integrate_on_element(mesh, t, super::DEGREE4_RULE, |p, _| {
                let v = f.eval_on(mesh, t, p);
                v * v
            })
        })
        .sum();
    Ok(DiscreteSolution { coefficients, h1_norm, f_l2_norm: f_l2_sq.sqrt() })
}

/// Max relative residual of the identity `A^{-1} f = Lambda^T S (Lambda f)`
/// over random trial vectors: the inverse matrix applied to `f` must agree
/// with solving the PDE for the explicit right-hand side `sum f_n lambda_n`
/// and pairing the Galerkin solution with the duals again.
pub fn representation_residual(
    mesh: &Mesh,
    dofmap: &DofMap,
    dual: &DualSystem,
    solver: &StiffnessSolver,
    trial_count: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let n = dofmap.n();
    let mut worst = 0.0f64;
    for _ in 0..trial_count {
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = solver.solve(&f)?;
        let norm_direct = direct.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_direct == 0.0 {
            continue;
        }
        let lambda_f = apply_lambda(mesh, dual, &f)?;
        let load = assemble_load(mesh, dofmap, &lambda_f);
        let u = solver.solve(&load)?;
        let u_fn = PiecewiseP1::from_dofs(mesh, dofmap, &u);
        let via_operator = apply_lambda_t(mesh, dual, &u_fn);
        let diff = direct
            .iter()
            .zip(&via_operator)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(diff / norm_direct);
    }
    Ok(worst)
}
