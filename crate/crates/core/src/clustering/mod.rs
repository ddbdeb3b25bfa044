//! Cluster trees over the DOF indices and admissible block partitions.
//!
//! The tree bisects index sets geometrically: a node's DOFs are split at
//! the midpoint of the longest axis of the bounding box of their carrier
//! incenters (ties toward the x-axis, median fallback for degenerate
//! splits) until a node holds at most `C_small` indices. The block
//! partition descends row and column trees in lockstep: pairs with
//! `min(card I, card J) <= C_small` are stored as small (dense) blocks,
//! pairs with `0 < diam(patch(I)) <= C_adm * dist(patch(I), patch(J))` in
//! the mesh metric are kept as admissible blocks, and everything else
//! splits into the four child pairs. Blocks qualifying on both counts are
//! stored dense, which is never larger than rank factors at that size and
//! keeps the stored bytes of a rank sweep linear in the rank bound.

use crate::fem::DualSystem;
use crate::mesh::{Cluster, Mesh, Point2};
use crate::{Error, Result};

/// The index patch of a DOF set: the union of the carrier elements of its
/// dual functions.
pub fn index_patch(dual: &DualSystem, indices: &[usize]) -> Result<Cluster> {
    if indices.is_empty() {
        return Err(Error::EmptyCluster);
    }
    dual.carriers_of(indices.iter().copied())
}

/// One node of the cluster tree.
#[derive(Clone, Debug)]
pub struct TreeNode {
    /// Sorted DOF indices of this cluster.
    pub index_set: Vec<usize>,
    /// Bounding box of the carrier incenters.
    pub bbox: (Point2, Point2),
    /// Index patch (carrier elements) of the DOF set.
    pub patch: Cluster,
    /// Mesh-metric diameter of the patch, cached for admissibility tests.
    pub patch_diam: f64,
    pub children: Option<(usize, usize)>,
    /// Root has level 1.
    pub level: usize,
}

/// Binary cluster tree in arena layout; node 0 is the root.
#[derive(Clone, Debug)]
pub struct ClusterTree {
    nodes: Vec<TreeNode>,
    c_small: usize,
    depth: usize,
}

impl ClusterTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn c_small(&self) -> usize {
        self.c_small
    }

    /// Maximum node level; the root counts as level 1.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &TreeNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.children.is_none())
    }

    /// Position of every DOF in left-to-right leaf order. Every node's
    /// index set is a contiguous range of these positions, which is the
    /// ordering matrix plots of the partition use.
    pub fn leaf_order_positions(&self) -> Vec<usize> {
        let mut positions = vec![0usize; self.root().index_set.len()];
        let mut counter = 0usize;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.node(id).children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &dof in &self.node(id).index_set {
                        positions[dof] = counter;
                        counter += 1;
                    }
                }
            }
        }
        positions
    }
}

fn bbox_of(mesh: &Mesh, dual: &DualSystem, indices: &[usize]) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &n in indices {
        let c = mesh.incenter(dual.carrier(n));
        lo.x = lo.x.min(c.x);
        lo.y = lo.y.min(c.y);
        hi.x = hi.x.max(c.x);
        hi.y = hi.y.max(c.y);
    }
    (lo, hi)
}

/// Geometric bisection of the index set at the bounding-box midpoint of
/// the longest axis; equal axis lengths split along x. When every carrier
/// lands on one side, falls back to the median of the coordinate order.
fn split_indices(mesh: &Mesh, dual: &DualSystem, node: &TreeNode) -> (Vec<usize>, Vec<usize>) {
    let (lo, hi) = node.bbox;
    let split_x = (hi.x - lo.x) >= (hi.y - lo.y);
    let coord = |n: usize| {
        let c = mesh.incenter(dual.carrier(n));
        if split_x {
            c.x
        } else {
            c.y
        }
    };
    let mid = if split_x { 0.5 * (lo.x + hi.x) } else { 0.5 * (lo.y + hi.y) };
    let (mut left, mut right): (Vec<usize>, Vec<usize>) =
        node.index_set.iter().partition(|&&n| coord(n) <= mid);
    if left.is_empty() || right.is_empty() {
        let mut order: Vec<usize> = node.index_set.clone();
        order.sort_by(|&a, &b| {
            coord(a).partial_cmp(&coord(b)).expect("finite coordinates").then(a.cmp(&b))
        });
        let half = order.len() / 2;
        left = order[..half].to_vec();
        right = order[half..].to_vec();
        left.sort_unstable();
        right.sort_unstable();
    }
    (left, right)
}

/// Builds the geometrically balanced cluster tree over all DOF indices.
pub fn build_cluster_tree(mesh: &Mesh, dual: &DualSystem, c_small: usize) -> Result<ClusterTree> {
    if c_small < 1 {
        return Err(Error::invalid("C_small must be at least 1"));
    }
    if dual.n() == 0 {
        return Err(Error::invalid("cannot build a cluster tree over zero DOFs"));
    }
    let mut tree = ClusterTree { nodes: Vec::new(), c_small, depth: 0 };
    let root_set: Vec<usize> = (0..dual.n()).collect();
    push_node(mesh, dual, &mut tree, root_set, 1)?;
    let mut cursor = 0;
    while cursor < tree.nodes.len() {
        let card = tree.nodes[cursor].index_set.len();
        let level = tree.nodes[cursor].level;
        if card > c_small {
            let (left, right) = split_indices(mesh, dual, &tree.nodes[cursor]);
            debug_assert!(!left.is_empty() && !right.is_empty());
            let l = push_node(mesh, dual, &mut tree, left, level + 1)?;
            let r = push_node(mesh, dual, &mut tree, right, level + 1)?;
            tree.nodes[cursor].children = Some((l, r));
        }
        cursor += 1;
    }
    Ok(tree)
}

fn push_node(
    mesh: &Mesh,
    dual: &DualSystem,
    tree: &mut ClusterTree,
    index_set: Vec<usize>,
    level: usize,
) -> Result<usize> {
    let patch = index_patch(dual, &index_set)?;
    let patch_diam = mesh.cluster_diam(&patch)?;
    let bbox = bbox_of(mesh, dual, &index_set);
    tree.depth = tree.depth.max(level);
    tree.nodes.push(TreeNode { index_set, bbox, patch, patch_diam, children: None, level });
    Ok(tree.nodes.len() - 1)
}

/// A matrix block `I x J`, with the tree nodes it came from.
#[derive(Clone, Debug)]
pub struct Block {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub row_node: usize,
    pub col_node: usize,
    /// Position in the pre-order emission of the block tree.
    pub seq: usize,
}

/// An admissible block partition of `{0..N} x {0..N}`.
#[derive(Clone, Debug)]
pub struct BlockPartition {
    n: usize,
    c_adm: f64,
    c_small: usize,
    pub admissible: Vec<Block>,
    pub small: Vec<Block>,
    /// Depth of the block cluster tree (root pair at level 1).
    pub depth: usize,
    /// Pairs that were neither admissible nor small but could not be split.
    /// The tree construction makes every leaf small, so this stays zero.
    pub forced_small: usize,
}

/// Row-cluster diameter test of the paper's admissibility condition,
/// verbatim: `0 < diam(patch(I)) <= c_adm * dist(patch(I), patch(J))`.
fn is_admissible(mesh: &Mesh, tree: &ClusterTree, i: usize, j: usize, c_adm: f64) -> bool {
    let diam = tree.node(i).patch_diam;
    if diam <= 0.0 {
        return false;
    }
    let threshold = diam / c_adm;
    // dist is a min over incenter pairs: once it drops below diam/c_adm the
    // pair is settled inadmissible.
    let mut min_dist = f64::INFINITY;
    for s in tree.node(i).patch.iter() {
        for t in tree.node(j).patch.iter() {
            let d = mesh.element_dist(s, t);
            if d < min_dist {
                min_dist = d;
                if min_dist < threshold {
                    return false;
                }
            }
        }
    }
    diam <= c_adm * min_dist
}

/// Builds the block partition by descending row and column clusters in
/// lockstep from `(root, root)`.
pub fn build_block_partition(
    tree: &ClusterTree,
    mesh: &Mesh,
    c_adm: f64,
) -> Result<BlockPartition> {
    if !(c_adm > 0.0) {
        return Err(Error::invalid(format!("C_adm must be positive, got {c_adm}")));
    }
    let n = tree.root().index_set.len();
    let mut partition = BlockPartition {
        n,
        c_adm,
        c_small: tree.c_small(),
        admissible: Vec::new(),
        small: Vec::new(),
        depth: 0,
        forced_small: 0,
    };
    let mut seq = 0usize;
    let mut stack = vec![(0usize, 0usize, 1usize)];
    while let Some((i, j, level)) = stack.pop() {
        partition.depth = partition.depth.max(level);
        let node_i = tree.node(i);
        let node_j = tree.node(j);
        let block = |seq: usize| Block {
            rows: node_i.index_set.clone(),
            cols: node_j.index_set.clone(),
            row_node: i,
            col_node: j,
            seq,
        };
        // Blocks qualifying as both admissible and small go to the small
        // list: verbatim storage of a block with min dimension <= C_small
        // never costs more than rank factors would.
        if node_i.index_set.len().min(node_j.index_set.len()) <= tree.c_small() {
            partition.small.push(block(seq));
            seq += 1;
        } else if is_admissible(mesh, tree, i, j, c_adm) {
            partition.admissible.push(block(seq));
            seq += 1;
        } else {
            match (node_i.children, node_j.children) {
                (Some((i1, i2)), Some((j1, j2))) => {
                    // Reversed push order: the stack pops in pre-order
                    // (i1,j1), (i1,j2), (i2,j1), (i2,j2).
                    stack.push((i2, j2, level + 1));
                    stack.push((i2, j1, level + 1));
                    stack.push((i1, j2, level + 1));
                    stack.push((i1, j1, level + 1));
                }
                _ => {
                    partition.forced_small += 1;
                    partition.small.push(block(seq));
                    seq += 1;
                }
            }
        }
    }
    Ok(partition)
}

impl BlockPartition {
    /// Assembles a partition from explicit block lists, verifying the
    /// disjoint cover of the index square. Used for hand-built partitions
    /// in tests and tools.
    pub fn from_blocks(
        n: usize,
        c_adm: f64,
        c_small: usize,
        admissible: Vec<Block>,
        small: Vec<Block>,
        depth: usize,
    ) -> Result<Self> {
        let partition =
            BlockPartition { n, c_adm, c_small, admissible, small, depth, forced_small: 0 };
        if partition.covered_cells() != (n as u128) * (n as u128) {
            return Err(Error::invalid("blocks do not tile the index square"));
        }
        Ok(partition)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c_adm(&self) -> f64 {
        self.c_adm
    }

    pub fn c_small(&self) -> usize {
        self.c_small
    }

    pub fn n_blocks(&self) -> usize {
        self.admissible.len() + self.small.len()
    }

    /// All blocks in pre-order of the block tree.
    pub fn blocks_in_order(&self) -> Vec<(&'static str, &Block)> {
        let mut tagged: Vec<(&'static str, &Block)> = self
            .admissible
            .iter()
            .map(|b| ("adm", b))
            .chain(self.small.iter().map(|b| ("small", b)))
            .collect();
        tagged.sort_by_key(|(_, b)| b.seq);
        tagged
    }

    /// Sum of `card(I) * card(J)` over all blocks; must equal `N^2`.
    pub fn covered_cells(&self) -> u128 {
        self.admissible
            .iter()
            .chain(self.small.iter())
            .map(|b| b.rows.len() as u128 * b.cols.len() as u128)
            .sum()
    }

    /// Number of blocks containing the matrix entry `(row, col)`.
    pub fn multiplicity(&self, row: usize, col: usize) -> usize {
        self.admissible
            .iter()
            .chain(self.small.iter())
            .filter(|b| {
                b.rows.binary_search(&row).is_ok() && b.cols.binary_search(&col).is_ok()
            })
            .count()
    }

    /// Text export: one block per line, `adm|small <row ranges> <col ranges>`
    /// with the sorted index sets run-length encoded, in pre-order.
    pub fn write_text(&self, out: &mut impl std::io::Write) -> Result<()> {
        for (tag, block) in self.blocks_in_order() {
            writeln!(out, "{tag} {} {}", encode_ranges(&block.rows), encode_ranges(&block.cols))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("partition text is ASCII")
    }
}

fn encode_ranges(sorted: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut k = 0;
    while k < sorted.len() {
        let lo = sorted[k];
        let mut hi = lo;
        while k + 1 < sorted.len() && sorted[k + 1] == hi + 1 {
            k += 1;
            hi += 1;
        }
        parts.push(format!("{lo}..{hi}"));
        k += 1;
    }
    parts.join(",")
}

/// Summary of a block partition.
#[derive(Clone, Debug)]
pub struct PartitionReport {
    pub n: usize,
    pub n_blocks: usize,
    pub n_admissible: usize,
    pub n_small: usize,
    pub depth: usize,
    /// Max number of blocks sharing one row or one column cluster.
    pub c_sparse: usize,
    pub forced_small: usize,
    /// Cardinality sum equals `N^2` and deterministic probes hit exactly
    /// one block each.
    pub cover_exact: bool,
}

/// Verifies the disjoint-cover property and collects the block statistics.
pub fn partition_report(partition: &BlockPartition) -> PartitionReport {
    let n = partition.n();
    let mut row_counts: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut col_counts: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for b in partition.admissible.iter().chain(partition.small.iter()) {
        *row_counts.entry(b.row_node).or_insert(0) += 1;
        *col_counts.entry(b.col_node).or_insert(0) += 1;
    }
    let c_sparse = row_counts
        .values()
        .chain(col_counts.values())
        .copied()
        .max()
        .unwrap_or(0);

    let mut cover_exact = partition.covered_cells() == (n as u128) * (n as u128);
    // Deterministic probe pattern over the index square.
    let mut state = 0x9e3779b97f4a7c15u64 ^ (n as u64);
    for _ in 0..200 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let row = (state >> 33) as usize % n;
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let col = (state >> 33) as usize % n;
        if partition.multiplicity(row, col) != 1 {
            cover_exact = false;
        }
    }

    PartitionReport {
        n,
        n_blocks: partition.n_blocks(),
        n_admissible: partition.admissible.len(),
        n_small: partition.small.len(),
        depth: partition.depth,
        c_sparse,
        forced_small: partition.forced_small,
        cover_exact,
    }
}

#[cfg(test)]
mod tests;
