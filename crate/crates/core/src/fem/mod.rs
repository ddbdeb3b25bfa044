//! P1 Galerkin assembly for the bilinear form
//! `a(u,v) = (a1 grad u, grad v) + (a2 . grad u, v) + (a3 u, v)`
//! with homogeneous Dirichlet conditions, plus the dual system and
//! coordinate mappings that connect coefficient vectors with functions.

mod dual;
mod function;
mod quadrature;
mod solve;
mod sparse;

pub use dual::{
    apply_lambda, apply_lambda_t, build_dual_system, duality_gram_error, DualSystem,
    DUAL_SHAPE_COEFFS,
};
pub use function::{ElementFunction, FnOnElements, PiecewiseP1};
pub use quadrature::{barycentric_point, integrate_on_element, DEGREE4_RULE, MIDPOINT_RULE};
pub use solve::{discrete_solution, representation_residual, DiscreteSolution, StiffnessSolver};
pub use sparse::{CooBuilder, SparseMatrix};

use crate::mesh::{Mesh, Point2};
use crate::{Error, Result};

/// PDE coefficients: a 2x2 diffusion table, a convection vector and a
/// reaction scalar, each evaluable at any point of the domain.
pub struct Coefficients {
    a1: Box<dyn Fn(Point2) -> [[f64; 2]; 2] + Send + Sync>,
    a2: Box<dyn Fn(Point2) -> [f64; 2] + Send + Sync>,
    a3: Box<dyn Fn(Point2) -> f64 + Send + Sync>,
}

impl Coefficients {
    pub fn new(
        a1: impl Fn(Point2) -> [[f64; 2]; 2] + Send + Sync + 'static,
        a2: impl Fn(Point2) -> [f64; 2] + Send + Sync + 'static,
        a3: impl Fn(Point2) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Coefficients { a1: Box::new(a1), a2: Box::new(a2), a3: Box::new(a3) }
    }

    /// Pure Laplacian: `a1 = I`, `a2 = 0`, `a3 = 0`.
    pub fn laplace() -> Self {
        Coefficients::constant([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], 0.0)
    }

    /// The anisotropic convection-diffusion benchmark:
    /// `a1 = ((10, -1), (-1, 1))`, `a2 = (10 x2, 0)`, `a3 = 1`.
    pub fn anisotropic_convection() -> Self {
        Coefficients::new(
            |_| [[10.0, -1.0], [-1.0, 1.0]],
            |p| [10.0 * p.y, 0.0],
            |_| 1.0,
        )
    }

    pub fn constant(a1: [[f64; 2]; 2], a2: [f64; 2], a3: f64) -> Self {
        Coefficients::new(move |_| a1, move |_| a2, move |_| a3)
    }

    pub fn a1(&self, p: Point2) -> [[f64; 2]; 2] {
        (self.a1)(p)
    }

    pub fn a2(&self, p: Point2) -> [f64; 2] {
        (self.a2)(p)
    }

    pub fn a3(&self, p: Point2) -> f64 {
        (self.a3)(p)
    }
}

/// Smaller eigenvalue of the symmetric part of a 2x2 table.
pub fn min_symmetric_eigenvalue(m: [[f64; 2]; 2]) -> f64 {
    let sym_off = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_gap = 0.5 * (m[0][0] - m[1][1]);
    mean - (half_gap * half_gap + sym_off * sym_off).sqrt()
}

/// Bijection between the interior mesh nodes and the degrees of freedom
/// `0..N` of the homogeneous-Dirichlet P1 space.
#[derive(Clone, Debug)]
pub struct DofMap {
    dof_to_node: Vec<usize>,
    node_to_dof: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut dof_to_node = Vec::new();
        let mut node_to_dof = vec![None; mesh.n_nodes()];
        for node in 0..mesh.n_nodes() {
            if !mesh.is_boundary_node(node) {
                node_to_dof[node] = Some(dof_to_node.len());
                dof_to_node.push(node);
            }
        }
        DofMap { dof_to_node, node_to_dof }
    }

    /// Dimension of the constrained P1 space.
    pub fn n(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn node_of(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    pub fn dof_of(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }
}

/// P1 gradients on an element: `grad lambda_i` for the three barycentric
/// basis functions, assuming counterclockwise vertex order.
fn p1_gradients(mesh: &Mesh, t: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.element(t).vertex_ids;
    let (pa, pb, pc) = (mesh.nodes()[a], mesh.nodes()[b], mesh.nodes()[c]);
    let inv2a = 1.0 / (2.0 * mesh.element(t).area);
    [
        [(pb.y - pc.y) * inv2a, (pc.x - pb.x) * inv2a],
        [(pc.y - pa.y) * inv2a, (pa.x - pc.x) * inv2a],
        [(pa.y - pb.y) * inv2a, (pb.x - pa.x) * inv2a],
    ]
}

/// Local bilinear-form matrix of one element: entry `(i, j)` couples the
/// j-th vertex as trial with the i-th vertex as test function. Evaluated
/// with the edge-midpoint rule (exact to degree 2); the coercivity of the
/// diffusion table is checked at every quadrature point.
pub fn element_bilinear_matrix(
    mesh: &Mesh,
    t: usize,
    coeffs: &Coefficients,
) -> Result<[[f64; 3]; 3]> {
    let grads = p1_gradients(mesh, t);
    let area = mesh.element(t).area;
    let mut local = [[0.0; 3]; 3];
    for &(bary, w) in MIDPOINT_RULE.points {
        let p = barycentric_point(mesh, t, bary);
        let a1 = coeffs.a1(p);
        let eig = min_symmetric_eigenvalue(a1);
        if eig <= 0.0 {
            return Err(Error::coercivity(p, eig));
        }
        let a2 = coeffs.a2(p);
        let a3 = coeffs.a3(p);
        for i in 0..3 {
            for j in 0..3 {
                let diffusion = (a1[0][0] * grads[j][0] + a1[0][1] * grads[j][1]) * grads[i][0]
                    + (a1[1][0] * grads[j][0] + a1[1][1] * grads[j][1]) * grads[i][1];
                let convection = (a2[0] * grads[j][0] + a2[1] * grads[j][1]) * bary[i];
                let reaction = a3 * bary[j] * bary[i];
                local[i][j] += w * area * (diffusion + convection + reaction);
            }
        }
    }
    Ok(local)
}

/// Assembles the Galerkin matrix `A_{mn} = a(phi_n, phi_m)` over the hat
/// functions of the interior nodes.
pub fn assemble_system(mesh: &Mesh, coeffs: &Coefficients) -> Result<(SparseMatrix, DofMap)> {
    let dofmap = DofMap::new(mesh);
    let mut builder = CooBuilder::new(dofmap.n(), dofmap.n());
    for t in 0..mesh.n_elements() {
        let local = element_bilinear_matrix(mesh, t, coeffs)?;
        let vs = mesh.element(t).vertex_ids;
        for i in 0..3 {
            let Some(row) = dofmap.dof_of(vs[i]) else { continue };
            for j in 0..3 {
                let Some(col) = dofmap.dof_of(vs[j]) else { continue };
                builder.push(row, col, local[i][j]);
            }
        }
    }
    Ok((builder.build(), dofmap))
}

/// Measured coercivity margin: the minimum over all quadrature points of
/// the smaller eigenvalue of `sym a1`.
pub fn coercivity_lower_bound(mesh: &Mesh, coeffs: &Coefficients) -> f64 {
    let mut lo = f64::INFINITY;
    for t in 0..mesh.n_elements() {
        for &(bary, _) in MIDPOINT_RULE.points {
            let p = barycentric_point(mesh, t, bary);
            lo = lo.min(min_symmetric_eigenvalue(coeffs.a1(p)));
        }
    }
    lo
}

/// Per-element mass and H1-seminorm matrices.
#[derive(Clone, Debug)]
pub struct ElementMatrices {
    pub vertex_ids: [usize; 3],
    pub mass: [[f64; 3]; 3],
    pub stiffness: [[f64; 3]; 3],
}

/// Global mass and H1-seminorm matrices over the full (boundary included)
/// P1 space, plus their per-element building blocks for cluster-restricted
/// norms.
pub struct NormMatrices {
    pub mass: SparseMatrix,
    pub h1_semi: SparseMatrix,
    pub local: Vec<ElementMatrices>,
}

/// Exact local mass matrix `area/12 * [[2,1,1],[1,2,1],[1,1,2]]` and local
/// stiffness `area * (grad_i . grad_j)` for every element.
pub fn assemble_norm_matrices(mesh: &Mesh) -> NormMatrices {
    let n = mesh.n_nodes();
    let mut mass_builder = CooBuilder::new(n, n);
    let mut stiff_builder = CooBuilder::new(n, n);
    let mut local = Vec::with_capacity(mesh.n_elements());
    for t in 0..mesh.n_elements() {
        let vs = mesh.element(t).vertex_ids;
        let area = mesh.element(t).area;
        let grads = p1_gradients(mesh, t);
        let mut mass = [[0.0; 3]; 3];
        let mut stiffness = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                mass[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                stiffness[i][j] = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                mass_builder.push(vs[i], vs[j], mass[i][j]);
                stiff_builder.push(vs[i], vs[j], stiffness[i][j]);
            }
        }
        local.push(ElementMatrices { vertex_ids: vs, mass, stiffness });
    }
    NormMatrices { mass: mass_builder.build(), h1_semi: stiff_builder.build(), local }
}

impl NormMatrices {
    /// `||v||^2_{L2}` restricted to the elements of a cluster.
    pub fn l2_norm_sq_on(&self, mesh: &Mesh, cluster: impl Iterator<Item = usize>, v: &PiecewiseP1) -> f64 {
        cluster
            .map(|t| quadratic_local(&self.local[t].mass, v.local_values(mesh, t)))
            .sum()
    }

    /// `|v|^2_{H1}` restricted to the elements of a cluster.
    pub fn h1_semi_sq_on(&self, mesh: &Mesh, cluster: impl Iterator<Item = usize>, v: &PiecewiseP1) -> f64 {
        cluster
            .map(|t| quadratic_local(&self.local[t].stiffness, v.local_values(mesh, t)))
            .sum()
    }

    pub fn l2_norm_sq(&self, mesh: &Mesh, v: &PiecewiseP1) -> f64 {
        self.l2_norm_sq_on(mesh, 0..mesh.n_elements(), v)
    }

    pub fn h1_semi_sq(&self, mesh: &Mesh, v: &PiecewiseP1) -> f64 {
        self.h1_semi_sq_on(mesh, 0..mesh.n_elements(), v)
    }

    /// Mass and H1 matrices restricted to the interior degrees of freedom.
    pub fn interior(&self, dofmap: &DofMap) -> (SparseMatrix, SparseMatrix) {
        let indices: Vec<usize> = (0..dofmap.n()).map(|d| dofmap.node_of(d)).collect();
        (self.mass.restrict(&indices), self.h1_semi.restrict(&indices))
    }
}

fn quadratic_local(m: &[[f64; 3]; 3], v: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += v[i] * m[i][j] * v[j];
        }
    }
    s
}

/// Everything the verification suites need about one discretized problem.
pub struct Discretization {
    pub mesh: crate::mesh::Mesh,
    pub a: SparseMatrix,
    pub dofmap: DofMap,
    pub dual: DualSystem,
    pub norms: NormMatrices,
}

impl Discretization {
    pub fn new(mesh: crate::mesh::Mesh, coeffs: &Coefficients) -> Result<Self> {
        let (a, dofmap) = assemble_system(&mesh, coeffs)?;
        let dual = build_dual_system(&mesh, &dofmap)?;
        let norms = assemble_norm_matrices(&mesh);
        Ok(Discretization { mesh, a, dofmap, dual, norms })
    }

    pub fn n(&self) -> usize {
        self.dofmap.n()
    }
}

/// Load vector `b_m = <f, phi_m>` over the interior hat functions,
/// integrated with the degree-4 rule.
pub fn assemble_load(mesh: &Mesh, dofmap: &DofMap, f: &impl ElementFunction) -> Vec<f64> {
    let mut b = vec![0.0; dofmap.n()];
    for t in 0..mesh.n_elements() {
        let vs = mesh.element(t).vertex_ids;
        for (i, &v) in vs.iter().enumerate() {
            let Some(dof) = dofmap.dof_of(v) else { continue };
            b[dof] += integrate_on_element(mesh, t, DEGREE4_RULE, |p, bary| {
                f.eval_on(mesh, t, p) * bary[i]
            });
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, Domain, GradingSpec};

    pub(crate) fn reference_triangle() -> Mesh {
        Mesh::from_raw(
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn local_stiffness_on_reference_triangle() {
        let mesh = reference_triangle();
        let local = element_bilinear_matrix(&mesh, 0, &Coefficients::laplace()).unwrap();
        let expected = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (local[i][j] - 0.5 * expected[i][j]).abs() < 1e-14,
                    "entry ({i},{j}) = {}",
                    local[i][j]
                );
            }
        }
    }

    #[test]
    fn vanishing_convection_gives_symmetric_matrix() {
        let mesh = generate_mesh(Domain::UnitSquare, None, Some(0.2)).unwrap();
        let coeffs = Coefficients::constant([[3.0, 1.0], [1.0, 2.0]], [0.0, 0.0], 0.7);
        let (a, _) = assemble_system(&mesh, &coeffs).unwrap();
        assert!(a.asymmetry() <= 1e-12);
    }

    #[test]
    fn benchmark_coefficients_pass_the_coercivity_check() {
        let mesh = generate_mesh(Domain::UnitSquare, None, Some(0.5)).unwrap();
        let coeffs = Coefficients::anisotropic_convection();
        let expected = (11.0 - 85.0f64.sqrt()) / 2.0;
        let measured = coercivity_lower_bound(&mesh, &coeffs);
        assert!((measured - expected).abs() < 1e-12);
        assert!(assemble_system(&mesh, &coeffs).is_ok());
    }

    #[test]
    fn indefinite_diffusion_aborts_assembly() {
        let mesh = generate_mesh(Domain::UnitSquare, None, Some(0.5)).unwrap();
        let coeffs = Coefficients::constant([[1.0, 3.0], [3.0, 1.0]], [0.0, 0.0], 0.0);
        assert!(matches!(
            assemble_system(&mesh, &coeffs),
            Err(Error::CoercivityFailure { .. })
        ));
    }

    #[test]
    fn norm_matrices_reproduce_known_norms() {
        let mesh = generate_mesh(Domain::UnitSquare, None, Some(0.2)).unwrap();
        let norms = assemble_norm_matrices(&mesh);
        let ones = PiecewiseP1::Conforming(vec![1.0; mesh.n_nodes()]);
        assert!((norms.l2_norm_sq(&mesh, &ones) - 1.0).abs() < 1e-12);
        assert!(norms.h1_semi_sq(&mesh, &ones).abs() < 1e-12);
        let linear =
            PiecewiseP1::Conforming(mesh.nodes().iter().map(|p| p.x).collect::<Vec<_>>());
        assert!((norms.h1_semi_sq(&mesh, &linear) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norm_matrices_match_quadrature_oracle() {
        let mesh = generate_mesh(Domain::UnitSquare, None, Some(0.4)).unwrap();
        let norms = assemble_norm_matrices(&mesh);
        // Deterministic pseudo-random nodal values.
        let values: Vec<f64> =
            (0..mesh.n_nodes()).map(|k| ((k * 2654435761) % 1000) as f64 / 500.0 - 1.0).collect();
        let v = PiecewiseP1::Conforming(values);
        let oracle: f64 = (0..mesh.n_elements())
            .map(|t| {
                integrate_on_element(&mesh, t, DEGREE4_RULE, |p, _| {
                    let val = v.eval(&mesh, t, p);
                    val * val
                })
            })
            .sum();
        assert!((norms.l2_norm_sq(&mesh, &v) - oracle).abs() < 1e-12);
    }

    #[test]
    fn coercivity_ratio_is_stable_under_refinement() {
        // x^T (sym A) x >= c x^T (M + K) x with the same c on both levels.
        let coeffs = Coefficients::anisotropic_convection();
        let mut mins = Vec::new();
        for width in [0.25, 0.125] {
            let mesh = generate_mesh(Domain::UnitSquare, None, Some(width)).unwrap();
            let (a, dofmap) = assemble_system(&mesh, &coeffs).unwrap();
            let norms = assemble_norm_matrices(&mesh);
            let (mass, h1) = norms.interior(&dofmap);
            let mut min_ratio = f64::INFINITY;
            for trial in 0..100u64 {
                let x: Vec<f64> = (0..dofmap.n())
                    .map(|k| (((k as u64 + 17 * trial) * 2654435761 % 1000) as f64 / 500.0) - 1.0)
                    .collect();
                let ax = a.matvec(&x).unwrap();
                let sym = x.iter().zip(&ax).map(|(u, v)| u * v).sum::<f64>();
                let denom = mass.quadratic_form(&x).unwrap() + h1.quadratic_form(&x).unwrap();
                min_ratio = min_ratio.min(sym / denom);
            }
            mins.push(min_ratio);
        }
        // The anisotropic table has min symmetric eigenvalue 0.8902 and the
        // convection field is skew, so the ratio must stay near that value.
        for m in &mins {
            assert!(*m >= 0.88 && *m <= 10.2, "ratio {m}");
        }
        assert!(mins[1] >= 0.9 * mins[0]);
    }

    #[test]
    fn graded_mesh_assembly_is_invertible_scale() {
        let spec = GradingSpec::new(vec![Point2::new(0.5, 0.5)], 5.0, 0.3).unwrap();
        let mesh = generate_mesh(Domain::LShape, Some(spec), None).unwrap();
        let (a, dofmap) = assemble_system(&mesh, &Coefficients::anisotropic_convection()).unwrap();
        assert_eq!(a.nrows(), dofmap.n());
        let solver = StiffnessSolver::new(&a).unwrap();
        let b = vec![1.0; dofmap.n()];
        let u = solver.solve(&b).unwrap();
        assert!(u.iter().all(|x| x.is_finite()));
    }
}
