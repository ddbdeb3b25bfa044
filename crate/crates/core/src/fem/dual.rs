//! The dual system of the P1 hat basis.
//!
//! Every interior node `n` gets a dual function `lambda_n` supported on a
//! single carrier element `T_n` incident to that node. On the reference
//! element the dual shape functions are determined by the inverse of the P1
//! reference mass matrix, so that `<phi_n, lambda_m> = delta_nm` holds
//! exactly; the pushforward to `T_n` carries the factor `1/|det grad F|`.

use super::quadrature::{integrate_on_element, DEGREE4_RULE};
use super::{DofMap, ElementFunction, PiecewiseP1};
use crate::mesh::{Cluster, Mesh};
use crate::{Error, Result};

/// Inverse of the P1 reference mass matrix `(1/24) [[2,1,1],[1,2,1],[1,1,2]]`:
/// row `l` holds the coefficients of the dual shape function biorthogonal to
/// the l-th reference hat.
pub const DUAL_SHAPE_COEFFS: [[f64; 3]; 3] = [
    [18.0, -6.0, -6.0],
    [-6.0, 18.0, -6.0],
    [-6.0, -6.0, 18.0],
];

/// Carrier elements and local coefficients of all dual functions.
#[derive(Clone, Debug)]
pub struct DualSystem {
    /// Per DOF: the single element carrying its dual function.
    carrier: Vec<usize>,
    /// Per DOF: the local vertex index of the DOF's node in the carrier.
    local_index: Vec<usize>,
    /// Per element: the DOFs carried by it (at most three).
    carried: Vec<Vec<usize>>,
}

/// Assigns carriers greedily: each interior node takes its lowest-index
/// incident element whose vertex slot for that node is still free. With the
/// hat basis the slot of a node in an element is unique to that node, so
/// the assignment cannot fail; the slot bookkeeping asserts it regardless.
pub fn build_dual_system(mesh: &Mesh, dofmap: &DofMap) -> Result<DualSystem> {
    let mut slot_taken = vec![[false; 3]; mesh.n_elements()];
    let mut carrier = Vec::with_capacity(dofmap.n());
    let mut local_index = Vec::with_capacity(dofmap.n());
    let mut carried = vec![Vec::new(); mesh.n_elements()];
    for dof in 0..dofmap.n() {
        let node = dofmap.node_of(dof);
        let mut assigned = None;
        for &t in mesh.elements_at_node(node) {
            let slot = mesh
                .element(t)
                .vertex_ids
                .iter()
                .position(|&v| v == node)
                .expect("incidence lists are consistent");
            if !slot_taken[t][slot] {
                slot_taken[t][slot] = true;
                assigned = Some((t, slot));
                break;
            }
        }
        let Some((t, slot)) = assigned else {
            return Err(Error::invalid(format!(
                "no free carrier slot for interior node {node}"
            )));
        };
        carrier.push(t);
        local_index.push(slot);
        carried[t].push(dof);
    }
    Ok(DualSystem { carrier, local_index, carried })
}

impl DualSystem {
    pub fn n(&self) -> usize {
        self.carrier.len()
    }

    /// Carrier element `T_n`.
    pub fn carrier(&self, dof: usize) -> usize {
        self.carrier[dof]
    }

    pub fn local_index(&self, dof: usize) -> usize {
        self.local_index[dof]
    }

    /// DOFs whose dual functions live on element `t` (at most three).
    pub fn dofs_carried_by(&self, t: usize) -> &[usize] {
        &self.carried[t]
    }

    /// Local vertex values of `lambda_n` on its carrier element. The
    /// Jacobian determinant of the affine map from the reference element
    /// equals twice the element area.
    pub fn dual_local_values(&self, mesh: &Mesh, dof: usize) -> [f64; 3] {
        let t = self.carrier[dof];
        let det = 2.0 * mesh.element(t).area;
        let row = DUAL_SHAPE_COEFFS[self.local_index[dof]];
        [row[0] / det, row[1] / det, row[2] / det]
    }

    /// `||lambda_n||_{L2}`, exact via the local mass matrix.
    pub fn dual_l2_norm(&self, mesh: &Mesh, dof: usize) -> f64 {
        let t = self.carrier[dof];
        let v = self.dual_local_values(mesh, dof);
        let area = mesh.element(t).area;
        let mut sq = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                sq += v[i] * v[j] * area / 12.0 * if i == j { 2.0 } else { 1.0 };
            }
        }
        sq.sqrt()
    }

    /// Union of the carrier elements of an index set (the index patch).
    pub fn carriers_of(&self, indices: impl Iterator<Item = usize>) -> Result<Cluster> {
        Cluster::new(indices.map(|n| self.carrier[n]).collect())
    }

    /// Operator norm of the coordinate mapping `x -> sum x_n lambda_n` from
    /// the Euclidean norm to `L2`. The duals are carrier-local, so the Gram
    /// matrix is block diagonal over elements with blocks of size at most
    /// three, and the norm is the square root of the largest block
    /// eigenvalue.
    pub fn lambda_operator_norm(&self, mesh: &Mesh) -> f64 {
        let mut max_eig = 0.0f64;
        for t in 0..mesh.n_elements() {
            let dofs = self.dofs_carried_by(t);
            if dofs.is_empty() {
                continue;
            }
            let k = dofs.len();
            let area = mesh.element(t).area;
            let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
            let values: Vec<[f64; 3]> =
                dofs.iter().map(|&n| self.dual_local_values(mesh, n)).collect();
            for a in 0..k {
                for b in 0..k {
                    let mut s = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            s += values[a][i] * values[b][j] * area / 12.0
                                * if i == j { 2.0 } else { 1.0 };
                        }
                    }
                    gram[(a, b)] = s;
                }
            }
            let eigs = gram.symmetric_eigenvalues();
            max_eig = max_eig.max(eigs.max());
        }
        max_eig.sqrt()
    }
}

/// The coordinate mapping: `x -> sum_n x_n lambda_n`, returned as an
/// element-wise P1 table (nonzero only on carrier elements).
pub fn apply_lambda(mesh: &Mesh, dual: &DualSystem, x: &[f64]) -> Result<PiecewiseP1> {
    if x.len() != dual.n() {
        return Err(Error::DimensionMismatch(format!(
            "apply_lambda: vector length {} vs {} dual functions",
            x.len(),
            dual.n()
        )));
    }
    let mut table = vec![[0.0; 3]; mesh.n_elements()];
    for (dof, &coeff) in x.iter().enumerate() {
        if coeff == 0.0 {
            continue;
        }
        let t = dual.carrier(dof);
        let values = dual.dual_local_values(mesh, dof);
        for i in 0..3 {
            table[t][i] += coeff * values[i];
        }
    }
    Ok(PiecewiseP1::Elementwise(table))
}

/// The transposed coordinate mapping: `(Lambda^T v)_n = <v, lambda_n>`,
/// integrated with the degree-4 rule on the carrier element. Exact for
/// element-wise polynomials `v` of degree up to 3, which covers every
/// internal use (degree <= 2 data against the P1 duals).
pub fn apply_lambda_t(mesh: &Mesh, dual: &DualSystem, v: &impl ElementFunction) -> Vec<f64> {
    let mut out = vec![0.0; dual.n()];
    for dof in 0..dual.n() {
        let t = dual.carrier(dof);
        let values = dual.dual_local_values(mesh, dof);
        out[dof] = integrate_on_element(mesh, t, DEGREE4_RULE, |p, bary| {
            let lambda = values[0] * bary[0] + values[1] * bary[1] + values[2] * bary[2];
            v.eval_on(mesh, t, p) * lambda
        });
    }
    out
}

/// Max deviation of the duality Gram matrix `<phi_n, lambda_m>` from the
/// identity. Off-carrier entries vanish structurally (disjoint supports),
/// so only the vertex DOFs of every carrier element contribute.
pub fn duality_gram_error(mesh: &Mesh, dofmap: &DofMap, dual: &DualSystem) -> f64 {
    let mut worst = 0.0f64;
    for m in 0..dual.n() {
        let t = dual.carrier(m);
        let area = mesh.element(t).area;
        let lambda = dual.dual_local_values(mesh, m);
        let vs = mesh.element(t).vertex_ids;
        for (i, &v) in vs.iter().enumerate() {
            let Some(n) = dofmap.dof_of(v) else { continue };
            // <phi_n, lambda_m> on T via the exact local mass matrix.
            let mut inner = 0.0;
            for j in 0..3 {
                inner += lambda[j] * area / 12.0 * if i == j { 2.0 } else { 1.0 };
            }
            let expected = if n == m { 1.0 } else { 0.0 };
            worst = worst.max((inner - expected).abs());
        }
    }
    worst
}
