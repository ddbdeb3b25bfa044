//! Piecewise-linear functions over a mesh.

use crate::mesh::{Mesh, Point2};

/// A piecewise P1 function: either globally continuous (one value per mesh
/// node, boundary included) or element-wise linear without continuity
/// (three local vertex values per element).
#[derive(Clone, Debug)]
pub enum PiecewiseP1 {
    Conforming(Vec<f64>),
    Elementwise(Vec<[f64; 3]>),
}

impl PiecewiseP1 {
    pub fn zero_conforming(mesh: &Mesh) -> Self {
        PiecewiseP1::Conforming(vec![0.0; mesh.n_nodes()])
    }

    /// Lifts a coefficient vector over the interior DOFs to nodal values,
    /// with zeros on the boundary.
    pub fn from_dofs(mesh: &Mesh, dofmap: &super::DofMap, coeffs: &[f64]) -> Self {
        let mut values = vec![0.0; mesh.n_nodes()];
        for (dof, &c) in coeffs.iter().enumerate() {
            values[dofmap.node_of(dof)] = c;
        }
        PiecewiseP1::Conforming(values)
    }

    /// Local vertex values on one element.
    pub fn local_values(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        match self {
            PiecewiseP1::Conforming(nodal) => {
                let [a, b, c] = mesh.element(t).vertex_ids;
                [nodal[a], nodal[b], nodal[c]]
            }
            PiecewiseP1::Elementwise(table) => table[t],
        }
    }

    /// Evaluates the function on element `t` at a point of that element.
    pub fn eval(&self, mesh: &Mesh, t: usize, p: Point2) -> f64 {
        let local = self.local_values(mesh, t);
        let bary = barycentric_coords(mesh, t, p);
        local[0] * bary[0] + local[1] * bary[1] + local[2] * bary[2]
    }

    pub fn nodal(&self) -> Option<&[f64]> {
        match self {
            PiecewiseP1::Conforming(v) => Some(v),
            PiecewiseP1::Elementwise(_) => None,
        }
    }

    /// Element ids on which the function is not identically zero, in the
    /// discrete-support sense (a P1 function vanishes on an element exactly
    /// when all three local vertex values vanish).
    pub fn support(&self, mesh: &Mesh) -> Vec<usize> {
        (0..mesh.n_elements())
            .filter(|&t| self.local_values(mesh, t).iter().any(|&v| v != 0.0))
            .collect()
    }
}

/// Barycentric coordinates of `p` with respect to element `t`.
pub fn barycentric_coords(mesh: &Mesh, t: usize, p: Point2) -> [f64; 3] {
    let [a, b, c] = mesh.element(t).vertex_ids;
    let (pa, pb, pc) = (mesh.nodes()[a], mesh.nodes()[b], mesh.nodes()[c]);
    let inv2a = 1.0 / (2.0 * mesh.element(t).area);
    let l0 = ((pb.x - p.x) * (pc.y - p.y) - (pc.x - p.x) * (pb.y - p.y)) * inv2a;
    let l1 = ((pc.x - p.x) * (pa.y - p.y) - (pa.x - p.x) * (pc.y - p.y)) * inv2a;
    [l0, l1, 1.0 - l0 - l1]
}

/// Anything evaluable element by element; integration routines sample these
/// at quadrature points, so element-wise polynomials up to the rule's
/// exactness degree are integrated exactly.
pub trait ElementFunction {
    fn eval_on(&self, mesh: &Mesh, element: usize, p: Point2) -> f64;
}

impl ElementFunction for PiecewiseP1 {
    fn eval_on(&self, mesh: &Mesh, element: usize, p: Point2) -> f64 {
        self.eval(mesh, element, p)
    }
}

/// Adapter for closures `(element, point) -> value`.
pub struct FnOnElements<F: Fn(usize, Point2) -> f64>(pub F);

impl<F: Fn(usize, Point2) -> f64> ElementFunction for FnOnElements<F> {
    fn eval_on(&self, _mesh: &Mesh, element: usize, p: Point2) -> f64 {
        (self.0)(element, p)
    }
}
