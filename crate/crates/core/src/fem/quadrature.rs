//! Quadrature rules on triangles, in barycentric coordinates.

use crate::mesh::{Mesh, Point2};

/// A rule as (barycentric coordinates, weight) pairs; weights sum to one
/// and are applied relative to the element area.
#[derive(Clone, Copy)]
pub struct TriangleRule {
    pub points: &'static [([f64; 3], f64)],
}

/// Edge-midpoint rule, exact for polynomials of total degree 2. This is the
/// assembly rule: with P1 trial/test functions and affine-linear
/// coefficients every stiffness integrand has degree at most 2.
pub const MIDPOINT_RULE: TriangleRule = TriangleRule {
    points: &[
        ([0.5, 0.5, 0.0], 1.0 / 3.0),
        ([0.0, 0.5, 0.5], 1.0 / 3.0),
        ([0.5, 0.0, 0.5], 1.0 / 3.0),
    ],
};

const D4_A: f64 = 0.445_948_490_915_965;
const D4_WA: f64 = 0.223_381_589_678_011;
const D4_B: f64 = 0.091_576_213_509_771;
const D4_WB: f64 = 0.109_951_743_655_322;

/// Six-point rule, exact for polynomials of total degree 4. Used wherever a
/// piecewise polynomial of degree up to two is integrated against a P1
/// factor (loads, dual pairings), which caps the integrand degree at 3.
pub const DEGREE4_RULE: TriangleRule = TriangleRule {
    points: &[
        ([1.0 - 2.0 * D4_A, D4_A, D4_A], D4_WA),
        ([D4_A, 1.0 - 2.0 * D4_A, D4_A], D4_WA),
        ([D4_A, D4_A, 1.0 - 2.0 * D4_A], D4_WA),
        ([1.0 - 2.0 * D4_B, D4_B, D4_B], D4_WB),
        ([D4_B, 1.0 - 2.0 * D4_B, D4_B], D4_WB),
        ([D4_B, D4_B, 1.0 - 2.0 * D4_B], D4_WB),
    ],
};

/// Maps barycentric coordinates to a point of element `t`.
pub fn barycentric_point(mesh: &Mesh, t: usize, bary: [f64; 3]) -> Point2 {
    let [a, b, c] = mesh.element(t).vertex_ids;
    let (pa, pb, pc) = (mesh.nodes()[a], mesh.nodes()[b], mesh.nodes()[c]);
    Point2::new(
        bary[0] * pa.x + bary[1] * pb.x + bary[2] * pc.x,
        bary[0] * pa.y + bary[1] * pb.y + bary[2] * pc.y,
    )
}

/// Integrates `f` over element `t` with the given rule.
pub fn integrate_on_element(
    mesh: &Mesh,
    t: usize,
    rule: TriangleRule,
    mut f: impl FnMut(Point2, [f64; 3]) -> f64,
) -> f64 {
    let area = mesh.element(t).area;
    rule.points
        .iter()
        .map(|&(bary, w)| w * f(barycentric_point(mesh, t, bary), bary))
        .sum::<f64>()
        * area
}
