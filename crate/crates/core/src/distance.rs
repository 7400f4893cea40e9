//! The tree mapping and the closed-form Wasserstein distance it induces.
//!
//! For a measure `μ` on a rooted tree, the tree mapping assigns one
//! coordinate per edge: `h(μ)_e = w_e · μ(Γ(v_e))`, the edge length times
//! the mass in the subtree below the edge. The 1-Wasserstein distance with
//! tree-metric ground cost is then exactly the l1 distance between the two
//! mapped vectors — no optimization required. The mapping is invertible on
//! its image, so barycenters computed coordinate-wise in l1 can be pulled
//! back to measures.

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::sampling::{EnsembleMeasure, TreeEnsemble};
use crate::tree::{NodeId, Tree};

/// Image of a measure under the tree mapping: one value per edge, paired
/// with the fingerprint of the tree it was computed on so that vectors
/// from different trees cannot be mixed silently.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeVector {
    values: Vec<f64>,
    tree_fingerprint: u64,
}

impl EdgeVector {
    /// Wraps raw per-edge values for `tree`. Values must be finite and
    /// non-negative, one per edge.
    pub fn new(tree: &Tree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.edge_count() {
            return Err(Error::structural(format!(
                "edge vector has {} entries but tree has {} edges",
                values.len(),
                tree.edge_count()
            )));
        }
        for (e, &x) in values.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::domain(format!(
                    "edge vector entry {e} is invalid: {x}"
                )));
            }
        }
        Ok(EdgeVector {
            values,
            tree_fingerprint: tree.fingerprint(),
        })
    }

    /// Per-edge values in edge id order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fingerprint of the tree this vector belongs to.
    pub fn tree_fingerprint(&self) -> u64 {
        self.tree_fingerprint
    }

    fn check_same_tree(&self, other: &EdgeVector) -> Result<()> {
        if self.tree_fingerprint != other.tree_fingerprint {
            return Err(Error::structural("edge vectors belong to different trees"));
        }
        Ok(())
    }

    fn check_tree(&self, tree: &Tree) -> Result<()> {
        if self.tree_fingerprint != tree.fingerprint() {
            return Err(Error::structural(
                "edge vector does not belong to this tree",
            ));
        }
        Ok(())
    }
}

/// Maps a measure to its per-edge vector `h(μ)_e = w_e · μ(Γ(v_e))`.
///
/// Subtree masses are accumulated leaf-to-root in one pass, so this runs
/// in O(nodes) regardless of support size.
pub fn tree_map(tree: &Tree, mu: &DiscreteMeasure) -> Result<EdgeVector> {
    let n = tree.node_count();
    let mut subtree_mass = vec![0.0; n];
    for (node, w) in mu.iter() {
        if node.0 >= n {
            return Err(Error::structural(format!(
                "measure support {node} out of range for tree with {n} nodes"
            )));
        }
        subtree_mass[node.0] += w;
    }
    // Children precede parents in reversed BFS order.
    for &v in tree.bfs_order().iter().rev() {
        if let Some(p) = tree.parent(v) {
            subtree_mass[p.0] += subtree_mass[v.0];
        }
    }
    let values = (0..tree.edge_count())
        .map(|e| {
            let e = crate::tree::EdgeId(e);
            tree.edge_weight(e) * subtree_mass[tree.edge_node(e).0]
        })
        .collect();
    Ok(EdgeVector {
        values,
        tree_fingerprint: tree.fingerprint(),
    })
}

/// Pulls an edge vector back to the unique measure that maps to it.
///
/// The node masses are recovered as `a_x = (flow into x) − (flow out of
/// x)` where the flow on edge `e` is `vec_e / w_e`, and the root receives
/// `1 − (flow out of root)`. Fails when a zero-length edge carries nonzero
/// mass ([`Error::Inversion`]), when a recovered mass is below `-1e-9`
/// ([`Error::NotAMeasure`]), or when the total strays from one by more
/// than `1e-9` ([`Error::Numeric`]); masses in `[-1e-9, 0)` are clamped to
/// zero.
pub fn inverse_map(tree: &Tree, vec: &EdgeVector) -> Result<DiscreteMeasure> {
    vec.check_tree(tree)?;
    let n = tree.node_count();
    let mut flow = vec![0.0; tree.edge_count()];
    for (e, f) in flow.iter_mut().enumerate() {
        let w = tree.edge_weight(crate::tree::EdgeId(e));
        let x = vec.values[e];
        if w > 0.0 {
            *f = x / w;
        } else if x != 0.0 {
            return Err(Error::Inversion { edge: e, mass: x });
        }
    }
    let mut mass = vec![0.0; n];
    for v in 0..n {
        let v = NodeId(v);
        let inflow = match tree.node_edge(v) {
            Some(e) => flow[e.0],
            None => 1.0,
        };
        let outflow: f64 = tree
            .children(v)
            .iter()
            .map(|&c| flow[tree.node_edge(c).unwrap().0])
            .sum();
        mass[v.0] = inflow - outflow;
    }
    let mut supports = Vec::new();
    let mut weights = Vec::new();
    let mut total = 0.0;
    for (v, &a) in mass.iter().enumerate() {
        if a < -1e-9 {
            return Err(Error::NotAMeasure {
                node: NodeId(v),
                mass: a,
            });
        }
        total += a.max(0.0);
        if a > 0.0 {
            supports.push(NodeId(v));
            weights.push(a);
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric(format!(
            "inverse mapping recovered total mass {total}, expected 1 within 1e-9"
        )));
    }
    DiscreteMeasure::new(tree, supports, weights)
}

/// l1 distance between two edge vectors from the same tree.
pub fn l1_distance(a: &EdgeVector, b: &EdgeVector) -> Result<f64> {
    a.check_same_tree(b)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Tree-Wasserstein distance between two measures:
/// `Σ_e w_e |μ(Γ(v_e)) − ν(Γ(v_e))|`, evaluated as the l1 distance of the
/// tree mappings.
pub fn tw(tree: &Tree, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let a = tree_map(tree, mu)?;
    let b = tree_map(tree, nu)?;
    l1_distance(&a, &b)
}

/// Tree-sliced Wasserstein distance: the average of [`tw`] across the
/// trees of an ensemble.
pub fn tsw(ensemble: &TreeEnsemble, a: &EnsembleMeasure, b: &EnsembleMeasure) -> Result<f64> {
    let k = ensemble.trees().len();
    if a.components().len() != k || b.components().len() != k {
        return Err(Error::domain(format!(
            "ensemble has {k} trees but measures have {} and {} components",
            a.components().len(),
            b.components().len()
        )));
    }
    let mut total = 0.0;
    for ((tree, ma), mb) in ensemble
        .trees()
        .iter()
        .zip(a.components())
        .zip(b.components())
    {
        total += tw(tree, ma, mb)?;
    }
    Ok(total / k as f64)
}
