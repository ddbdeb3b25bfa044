//! Triangular meshes, the incenter metric and cluster operations.
//!
//! A [`Mesh`] is a conforming triangulation carrying per-element incenters,
//! widths and inradii. All distances between elements and clusters are
//! measured in the *mesh metric*: the Euclidean distance between incenters,
//! extended to clusters by the min (distance) resp. max (diameter) over
//! pairs. Admissibility of matrix blocks, cluster inflation and the cut-off
//! machinery are all expressed in this metric, so it lives here.

mod generate;
mod io;

pub use generate::{generate_mesh, Domain};

use crate::{Error, Result};
use rand::Rng;

/// A point of the computational domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One triangle of the mesh, with the derived geometric quantities cached.
#[derive(Clone, Debug)]
pub struct Element {
    /// Node indices, counterclockwise.
    pub vertex_ids: [usize; 3],
    /// Center of the largest inscribed ball.
    pub incenter: Point2,
    /// Local mesh width `h(T)`, attained at a vertex pair.
    pub width: f64,
    /// Radius of the largest inscribed ball.
    pub inradius: f64,
    /// Triangle area.
    pub area: f64,
}

/// Parameters of an algebraically graded mesh: element widths follow
/// `h(T) ~ dist(x_T, gamma_set)^(1 - 1/alpha) * coarse_width`.
#[derive(Clone, Debug)]
pub struct GradingSpec {
    pub gamma_set: Vec<Point2>,
    pub alpha: f64,
    pub coarse_width: f64,
}

impl GradingSpec {
    pub fn new(gamma_set: Vec<Point2>, alpha: f64, coarse_width: f64) -> Result<Self> {
        if gamma_set.is_empty() {
            return Err(Error::invalid("grading point set must be nonempty"));
        }
        if !(alpha >= 1.0) {
            return Err(Error::invalid(format!("grading exponent must be >= 1, got {alpha}")));
        }
        if !(coarse_width > 0.0) {
            return Err(Error::invalid(format!("coarse width must be positive, got {coarse_width}")));
        }
        Ok(GradingSpec { gamma_set, alpha, coarse_width })
    }

    /// Euclidean distance from a point to the grading set (finite point sets only).
    pub fn dist_to_gamma(&self, p: Point2) -> f64 {
        self.gamma_set.iter().map(|g| p.dist(*g)).fold(f64::INFINITY, f64::min)
    }

    /// Target width of the grading law at distance `d` from the grading set.
    pub fn target_width(&self, d: f64) -> f64 {
        d.powf(1.0 - 1.0 / self.alpha) * self.coarse_width
    }
}

/// A set of mesh elements, stored as sorted, duplicate-free indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    ids: Vec<usize>,
}

impl Cluster {
    /// Builds a cluster from arbitrary element indices; sorts and deduplicates.
    pub fn new(mut ids: Vec<usize>) -> Result<Self> {
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::EmptyCluster);
        }
        Ok(Cluster { ids })
    }

    pub fn singleton(id: usize) -> Self {
        Cluster { ids: vec![id] }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.ids.iter().copied()
    }

    pub fn union(&self, other: &Cluster) -> Cluster {
        let mut ids = self.ids.clone();
        ids.extend_from_slice(&other.ids);
        ids.sort_unstable();
        ids.dedup();
        Cluster { ids }
    }

    pub fn is_subset_of(&self, other: &Cluster) -> bool {
        self.ids.iter().all(|id| other.contains(*id))
    }
}

/// A conforming triangulation with shape-regularity data.
#[derive(Clone, Debug)]
pub struct Mesh {
    nodes: Vec<Point2>,
    elements: Vec<Element>,
    boundary_node: Vec<bool>,
    /// For every node, the indices of the elements incident to it (sorted).
    node_elements: Vec<Vec<usize>>,
    /// Realized shape-regularity constant: the smallest `C >= 1` such that
    /// every element contains `Ball(x_T, h(T)/C)`, every patch fits in
    /// `Ball(x_T, C h(T))` and non-neighbors satisfy
    /// `dist(T,S) >= (h(T)+h(S))/C`.
    shape_constant: f64,
    grading: Option<GradingSpec>,
}

impl Mesh {
    /// Builds a mesh from node coordinates and element vertex triples.
    ///
    /// Checks conformity (every edge belongs to one or two elements),
    /// orients all triangles counterclockwise, derives boundary flags from
    /// the edge counts and computes the realized shape constant.
    pub fn from_raw(nodes: Vec<Point2>, element_vertices: Vec<[usize; 3]>) -> Result<Self> {
        if element_vertices.is_empty() {
            return Err(Error::invalid("mesh must contain at least one element"));
        }
        for p in &nodes {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::invalid("node coordinates must be finite"));
            }
        }
        let mut elements = Vec::with_capacity(element_vertices.len());
        for (t, vs) in element_vertices.iter().enumerate() {
            for &v in vs {
                if v >= nodes.len() {
                    return Err(Error::invalid(format!(
                        "element {t} references node {v}, but the mesh has only {} nodes",
                        nodes.len()
                    )));
                }
            }
            if vs[0] == vs[1] || vs[1] == vs[2] || vs[0] == vs[2] {
                return Err(Error::invalid(format!("element {t} has repeated vertices")));
            }
            let mut vs = *vs;
            let signed = signed_area(nodes[vs[0]], nodes[vs[1]], nodes[vs[2]]);
            if signed == 0.0 {
                return Err(Error::invalid(format!("element {t} is degenerate")));
            }
            if signed < 0.0 {
                vs.swap(1, 2);
            }
            elements.push(element_geometry(&nodes, vs));
        }

        // Conformity: every edge is shared by exactly two elements or lies
        // on the boundary. Nodes of single-count edges are boundary nodes.
        let mut edge_count: std::collections::HashMap<(usize, usize), u32> =
            std::collections::HashMap::new();
        for el in &elements {
            let [a, b, c] = el.vertex_ids;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *edge_count.entry(edge_key(u, v)).or_insert(0) += 1;
            }
        }
        let mut boundary_node = vec![false; nodes.len()];
        for (&(u, v), &count) in &edge_count {
            match count {
                1 => {
                    boundary_node[u] = true;
                    boundary_node[v] = true;
                }
                2 => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "edge ({u}, {v}) is shared by {count} elements"
                    )))
                }
            }
        }

        let mut node_elements = vec![Vec::new(); nodes.len()];
        for (t, el) in elements.iter().enumerate() {
            for &v in &el.vertex_ids {
                node_elements[v].push(t);
            }
        }

        let mut mesh = Mesh {
            nodes,
            elements,
            boundary_node,
            node_elements,
            shape_constant: 1.0,
            grading: None,
        };
        mesh.shape_constant = mesh.compute_shape_constant();
        Ok(mesh)
    }

    pub(crate) fn set_grading(&mut self, grading: GradingSpec) {
        self.grading = Some(grading);
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: usize) -> &Element {
        &self.elements[id]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary_node[node]
    }

    pub fn shape_constant(&self) -> f64 {
        self.shape_constant
    }

    pub fn grading(&self) -> Option<&GradingSpec> {
        self.grading.as_ref()
    }

    /// Elements incident to a node, in ascending index order.
    pub fn elements_at_node(&self, node: usize) -> &[usize] {
        &self.node_elements[node]
    }

    pub fn incenter(&self, id: usize) -> Point2 {
        self.elements[id].incenter
    }

    pub fn width(&self, id: usize) -> f64 {
        self.elements[id].width
    }

    pub fn h_max(&self) -> f64 {
        self.elements.iter().map(|e| e.width).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.elements.iter().map(|e| e.width).fold(f64::INFINITY, f64::min)
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    /// Diagonal of the node bounding box; an upper bound for all mesh-metric
    /// distances, used to scale sampling radii.
    pub fn bbox_diameter(&self) -> f64 {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.nodes {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        lo.dist(hi)
    }

    fn check_cluster(&self, c: &Cluster) -> Result<()> {
        if c.is_empty() {
            return Err(Error::EmptyCluster);
        }
        let last = *c.ids().last().unwrap();
        if last >= self.elements.len() {
            return Err(Error::ClusterOutOfRange { id: last, count: self.elements.len() });
        }
        Ok(())
    }

    /// Incenter distance between two elements.
    pub fn element_dist(&self, s: usize, t: usize) -> f64 {
        self.elements[s].incenter.dist(self.elements[t].incenter)
    }

    /// Mesh-metric distance from one element to a cluster.
    pub fn dist_to_cluster(&self, t: usize, b: &Cluster) -> f64 {
        b.iter().map(|s| self.element_dist(t, s)).fold(f64::INFINITY, f64::min)
    }

    /// Mesh-metric distance between clusters: min over incenter pairs.
    pub fn mesh_dist(&self, a: &Cluster, b: &Cluster) -> Result<f64> {
        self.check_cluster(a)?;
        self.check_cluster(b)?;
        let mut best = f64::INFINITY;
        for s in a.iter() {
            for t in b.iter() {
                let d = self.element_dist(s, t);
                if d < best {
                    best = d;
                }
            }
        }
        Ok(best)
    }

    /// Cluster diameter: max over incenter pairs; zero for singletons.
    pub fn cluster_diam(&self, a: &Cluster) -> Result<f64> {
        self.check_cluster(a)?;
        let ids = a.ids();
        let mut best = 0.0f64;
        for (k, &s) in ids.iter().enumerate() {
            for &t in &ids[k + 1..] {
                let d = self.element_dist(s, t);
                if d > best {
                    best = d;
                }
            }
        }
        Ok(best)
    }

    /// Inflated cluster: all elements within mesh-metric distance `delta` of `b`.
    pub fn inflate(&self, b: &Cluster, delta: f64) -> Result<Cluster> {
        self.check_cluster(b)?;
        if !(delta >= 0.0) {
            return Err(Error::invalid(format!("inflation radius must be >= 0, got {delta}")));
        }
        let ids = (0..self.elements.len())
            .filter(|&t| self.dist_to_cluster(t, b) <= delta)
            .collect();
        Ok(Cluster { ids })
    }

    /// Patch of a cluster: every element whose closure touches the closure
    /// of a member element. In a conforming triangulation this is exactly
    /// the set of vertex-sharing neighbors.
    pub fn patch_of_cluster(&self, b: &Cluster) -> Result<Cluster> {
        self.check_cluster(b)?;
        let mut ids = Vec::new();
        for t in b.iter() {
            for &v in &self.elements[t].vertex_ids {
                ids.extend_from_slice(&self.node_elements[v]);
            }
        }
        Cluster::new(ids)
    }

    /// Patch of a single element.
    pub fn patch_of_element(&self, t: usize) -> Cluster {
        self.patch_of_cluster(&Cluster::singleton(t)).expect("valid element id")
    }

    /// Patch of a point region: all elements whose closure contains `p`.
    pub fn patch_of_point(&self, p: Point2) -> Option<Cluster> {
        let ids: Vec<usize> = (0..self.elements.len())
            .filter(|&t| {
                let [a, b, c] = self.elements[t].vertex_ids;
                point_in_closed_triangle(self.nodes[a], self.nodes[b], self.nodes[c], p)
            })
            .collect();
        if ids.is_empty() {
            None
        } else {
            Some(Cluster { ids })
        }
    }

    /// Patch of a node: the elements incident to it.
    pub fn patch_of_node(&self, node: usize) -> Option<Cluster> {
        let ids = self.node_elements[node].clone();
        if ids.is_empty() {
            None
        } else {
            Some(Cluster { ids })
        }
    }

    fn compute_shape_constant(&self) -> f64 {
        let mut c: f64 = 1.0;
        for (t, el) in self.elements.iter().enumerate() {
            c = c.max(el.width / el.inradius);
            let patch = self.patch_of_element(t);
            for s in patch.iter() {
                for &v in &self.elements[s].vertex_ids {
                    c = c.max(el.incenter.dist(self.nodes[v]) / el.width);
                }
            }
        }
        // Lower separation bound for non-neighbors.
        for t in 0..self.elements.len() {
            let patch = self.patch_of_element(t);
            for s in (t + 1)..self.elements.len() {
                if patch.contains(s) {
                    continue;
                }
                let d = self.element_dist(t, s);
                let widths = self.elements[t].width + self.elements[s].width;
                if d > 0.0 {
                    c = c.max(widths / d);
                }
            }
        }
        c
    }

    /// Checks the mesh against the domain it was generated for: the element
    /// areas must sum to the domain area (1e-10 relative) and every boundary
    /// edge must lie on the domain boundary.
    pub fn validate_against_domain(&self, domain: &Domain) -> Result<()> {
        let total = self.total_area();
        let expected = domain.area();
        if ((total - expected) / expected).abs() > 1e-10 {
            return Err(Error::invalid(format!(
                "element areas sum to {total:.15e}, expected domain area {expected:.15e}"
            )));
        }
        let mut edge_count: std::collections::HashMap<(usize, usize), u32> =
            std::collections::HashMap::new();
        for el in &self.elements {
            let [a, b, c] = el.vertex_ids;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *edge_count.entry(edge_key(u, v)).or_insert(0) += 1;
            }
        }
        for (&(u, v), &count) in &edge_count {
            if count == 1 && !domain.on_boundary_segment(self.nodes[u], self.nodes[v]) {
                return Err(Error::invalid(format!(
                    "free edge ({:?} - {:?}) does not lie on the domain boundary",
                    self.nodes[u], self.nodes[v]
                )));
            }
        }
        Ok(())
    }
}

/// One sampled cluster of the cardinality diagnostic.
#[derive(Clone, Debug)]
pub struct CardinalitySample {
    pub center_element: usize,
    pub radius: f64,
    pub cardinality: usize,
    pub diameter: f64,
    pub h_max: f64,
    /// `card(B) / (1 + diam(B)/h_max(B))^(d * C_card)`.
    pub ratio: f64,
}

/// Output of [`regularity_cardinality_report`].
#[derive(Clone, Debug)]
pub struct CardinalityReport {
    pub c_card: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// `h_max^C_card / h_min`; bounded for mesh families with locally
    /// bounded cardinality of exponent `C_card`.
    pub width_power_ratio: f64,
    pub samples: Vec<CardinalitySample>,
    pub max_ratio: f64,
    pub flag_bound: f64,
    pub flagged: usize,
}

impl CardinalityReport {
    pub fn passes(&self) -> bool {
        self.flagged == 0
    }
}

/// Samples random mesh-metric balls and measures the locally-bounded-
/// cardinality ratio `card(B) / (1 + diam(B)/h_max(B))^(d*C_card)`.
///
/// Ratios above `flag_bound` are counted as violations. For a uniform mesh
/// the ratios stay bounded with `C_card = 1`; for a mesh graded with
/// exponent `alpha` they stay bounded with `C_card = alpha`, while testing
/// a graded family with too small an exponent makes the max ratio grow
/// under refinement.
pub fn regularity_cardinality_report(
    mesh: &Mesh,
    c_card: f64,
    sample_count: usize,
    flag_bound: f64,
    rng: &mut impl Rng,
) -> Result<CardinalityReport> {
    if !(c_card >= 1.0) {
        return Err(Error::invalid(format!("C_card must be >= 1, got {c_card}")));
    }
    let h_max = mesh.h_max();
    let h_min = mesh.h_min();
    let scale = mesh.bbox_diameter();
    let mut samples = Vec::with_capacity(sample_count);
    let mut max_ratio = 0.0f64;
    let mut flagged = 0;
    for _ in 0..sample_count {
        let center = rng.random_range(0..mesh.n_elements());
        let radius = rng.random_range(0.0..=0.5) * scale;
        let ball = mesh.inflate(&Cluster::singleton(center), radius)?;
        let diameter = mesh.cluster_diam(&ball)?;
        let h_max_b = ball.iter().map(|t| mesh.width(t)).fold(0.0, f64::max);
        let ratio =
            ball.len() as f64 / (1.0 + diameter / h_max_b).powf(2.0 * c_card);
        if ratio > flag_bound {
            flagged += 1;
        }
        max_ratio = max_ratio.max(ratio);
        samples.push(CardinalitySample {
            center_element: center,
            radius,
            cardinality: ball.len(),
            diameter,
            h_max: h_max_b,
            ratio,
        });
    }
    Ok(CardinalityReport {
        c_card,
        h_max,
        h_min,
        width_power_ratio: h_max.powf(c_card) / h_min,
        samples,
        max_ratio,
        flag_bound,
        flagged,
    })
}

pub(crate) fn edge_key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

pub(crate) fn signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

pub(crate) fn element_geometry(nodes: &[Point2], vertex_ids: [usize; 3]) -> Element {
    let [ai, bi, ci] = vertex_ids;
    let (a, b, c) = (nodes[ai], nodes[bi], nodes[ci]);
    let la = b.dist(c);
    let lb = c.dist(a);
    let lc = a.dist(b);
    let perimeter = la + lb + lc;
    let area = signed_area(a, b, c).abs();
    let incenter = Point2::new(
        (la * a.x + lb * b.x + lc * c.x) / perimeter,
        (la * a.y + lb * b.y + lc * c.y) / perimeter,
    );
    Element {
        vertex_ids,
        incenter,
        width: la.max(lb).max(lc),
        inradius: 2.0 * area / perimeter,
        area,
    }
}

/// Closed-triangle membership, robust to either orientation.
pub(crate) fn point_in_closed_triangle(a: Point2, b: Point2, c: Point2, p: Point2) -> bool {
    let orientation = signed_area(a, b, c).signum();
    let scale = signed_area(a, b, c).abs().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    for (u, v) in [(a, b), (b, c), (c, a)] {
        let cross = (v.x - u.x) * (p.y - u.y) - (p.x - u.x) * (v.y - u.y);
        if orientation * cross < -tol {
            return false;
        }
    }
    true
}
