//! Discrete probability measures supported on tree nodes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::{NodeId, Tree};

/// A probability measure with finite support on the nodes of a tree.
///
/// Canonical form is enforced on construction: supports are sorted by node
/// id, duplicate nodes are merged by summing their weights, zero-weight
/// entries are dropped, and weights are normalized so they sum to exactly
/// one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    supports: Vec<NodeId>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from parallel support/weight lists.
    ///
    /// Weights must be finite and non-negative with a positive total;
    /// supports must be valid nodes of `tree`.
    pub fn new(tree: &Tree, supports: Vec<NodeId>, weights: Vec<f64>) -> Result<Self> {
        if supports.len() != weights.len() {
            return Err(Error::domain(format!(
                "{} supports but {} weights",
                supports.len(),
                weights.len()
            )));
        }
        if supports.is_empty() {
            return Err(Error::domain("measure must have at least one support"));
        }
        for &s in &supports {
            tree.check_node(s)?;
        }
        for (&s, &w) in supports.iter().zip(&weights) {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::domain(format!("support {s} has invalid weight {w}")));
            }
        }

        let mut pairs: Vec<(NodeId, f64)> = supports.into_iter().zip(weights).collect();
        pairs.sort_by_key(|&(node, _)| node);
        let mut merged_supports: Vec<NodeId> = Vec::with_capacity(pairs.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (node, w) in pairs {
            if merged_supports.last() == Some(&node) {
                *merged_weights.last_mut().unwrap() += w;
            } else {
                merged_supports.push(node);
                merged_weights.push(w);
            }
        }
        normalize_simplex(&mut merged_weights)?;
        // Normalization cannot zero a positive weight, but inputs may have
        // carried zeros; drop them now.
        let mut supports = Vec::with_capacity(merged_supports.len());
        let mut weights = Vec::with_capacity(merged_weights.len());
        for (node, w) in merged_supports.into_iter().zip(merged_weights) {
            if w > 0.0 {
                supports.push(node);
                weights.push(w);
            }
        }
        renormalize_exact(&mut weights);
        Ok(DiscreteMeasure { supports, weights })
    }

    /// The unit point mass at `node`.
    pub fn dirac(tree: &Tree, node: NodeId) -> Result<Self> {
        Self::new(tree, vec![node], vec![1.0])
    }

    /// Attaches a weighted point cloud to the tree: each point descends
    /// from the root to a leaf (see [`descend_to_leaf`]) and deposits its
    /// mass there.
    pub fn from_points(tree: &Tree, points: &[Vec<f64>], masses: &[f64]) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::domain(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        let supports = points
            .iter()
            .map(|p| descend_to_leaf(tree, p))
            .collect::<Result<Vec<NodeId>>>()?;
        Self::new(tree, supports, masses.to_vec())
    }

    /// Attaches a point cloud with uniform masses.
    pub fn uniform_empirical(tree: &Tree, points: &[Vec<f64>]) -> Result<Self> {
        Self::from_points(tree, points, &vec![1.0; points.len()])
    }

    /// Support nodes in ascending id order.
    pub fn supports(&self) -> &[NodeId] {
        &self.supports
    }

    /// Weights aligned with [`DiscreteMeasure::supports`]; all positive,
    /// summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of support nodes.
    pub fn support_count(&self) -> usize {
        self.supports.len()
    }

    /// Weight carried by `node` (zero if not a support).
    pub fn weight_at(&self, node: NodeId) -> f64 {
        match self.supports.binary_search(&node) {
            Ok(i) => self.weights[i],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(support, weight)` pairs in ascending node order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.supports
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    /// Whether two measures agree support-by-support within `tol`
    /// (missing supports count as weight zero).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.supports.len() || j < other.supports.len() {
            let a = self.supports.get(i);
            let b = other.supports.get(j);
            match (a, b) {
                (Some(&na), Some(&nb)) if na == nb => {
                    if (self.weights[i] - other.weights[j]).abs() > tol {
                        return false;
                    }
                    i += 1;
                    j += 1;
                }
                (Some(&na), Some(&nb)) if na < nb => {
                    if self.weights[i].abs() > tol {
                        return false;
                    }
                    i += 1;
                }
                (Some(_), Some(_)) | (None, Some(_)) => {
                    if other.weights[j].abs() > tol {
                        return false;
                    }
                    j += 1;
                }
                (Some(_), None) => {
                    if self.weights[i].abs() > tol {
                        return false;
                    }
                    i += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        true
    }
}

/// Routes a Euclidean point to a leaf of an embedded tree by repeatedly
/// stepping to the child whose embedding is nearest (ties go to the child
/// with the lowest id). Returns the reached leaf.
pub fn descend_to_leaf(tree: &Tree, point: &[f64]) -> Result<NodeId> {
    let dim = tree
        .embedding_dim()
        .ok_or_else(|| Error::domain("tree has no node embeddings; cannot attach points"))?;
    if point.len() != dim {
        return Err(Error::domain(format!(
            "point has dimension {} but tree embeddings have dimension {dim}",
            point.len()
        )));
    }
    if point.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("point contains a non-finite coordinate"));
    }
    let mut node = tree.root();
    loop {
        let children = tree.children(node);
        if children.is_empty() {
            return Ok(node);
        }
        let mut best = children[0];
        let mut best_d = squared_distance(tree.embedding(children[0]).unwrap(), point);
        for &c in &children[1..] {
            let d = squared_distance(tree.embedding(c).unwrap(), point);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        node = best;
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Validates a non-negative weight vector and scales it to unit total.
pub(crate) fn normalize_simplex(weights: &mut [f64]) -> Result<()> {
    let total: f64 = weights.iter().sum();
    if !total.is_finite() {
        return Err(Error::domain("weight total is not finite"));
    }
    if total <= 0.0 {
        return Err(Error::domain("weights must have a positive total"));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    renormalize_exact(weights);
    Ok(())
}

/// Nudges the largest weight so the vector sums to exactly 1.0. The inputs
/// already sum to 1 within a few ulps, so the correction is far below any
/// tolerance used elsewhere.
pub(crate) fn renormalize_exact(weights: &mut [f64]) {
    for _ in 0..8 {
        let s: f64 = weights.iter().sum();
        if s == 1.0 {
            return;
        }
        let imax = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        weights[imax] += 1.0 - s;
    }
}

/// A finite family of measures on one tree together with mixture weights
/// on the probability simplex. This is the input of a barycenter problem.
#[derive(Clone, Debug)]
pub struct WeightedMeasureSet {
    measures: Vec<DiscreteMeasure>,
    mixture_weights: Vec<f64>,
}

impl WeightedMeasureSet {
    /// Pairs measures with mixture weights. Weights must be non-negative
    /// and sum to 1 within 1e-9; they are then renormalized exactly.
    pub fn new(measures: Vec<DiscreteMeasure>, mixture_weights: Vec<f64>) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::domain("measure set must not be empty"));
        }
        if measures.len() != mixture_weights.len() {
            return Err(Error::domain(format!(
                "{} measures but {} mixture weights",
                measures.len(),
                mixture_weights.len()
            )));
        }
        for &p in &mixture_weights {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::domain(format!("invalid mixture weight {p}")));
            }
        }
        let total: f64 = mixture_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "mixture weights sum to {total}, expected 1 within 1e-9"
            )));
        }
        let mut mixture_weights = mixture_weights;
        renormalize_exact(&mut mixture_weights);
        Ok(WeightedMeasureSet {
            measures,
            mixture_weights,
        })
    }

    /// Pairs measures with uniform mixture weights.
    pub fn uniform(measures: Vec<DiscreteMeasure>) -> Result<Self> {
        let k = measures.len();
        if k == 0 {
            return Err(Error::domain("measure set must not be empty"));
        }
        Self::new(measures, vec![1.0 / k as f64; k])
    }

    /// The member measures.
    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    /// Mixture weights aligned with [`WeightedMeasureSet::measures`].
    pub fn mixture_weights(&self) -> &[f64] {
        &self.mixture_weights
    }

    /// Number of member measures.
    pub fn len(&self) -> usize {
        self.measures.len()
    }

    /// Whether the set is empty (never true for a constructed set).
    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Tree;

    fn chain(weights: &[f64]) -> Tree {
        let n = weights.len() + 1;
        let parents: Vec<Option<usize>> = (0..n)
            .map(|v| if v == 0 { None } else { Some(v - 1) })
            .collect();
        let mut w = vec![0.0];
        w.extend_from_slice(weights);
        Tree::from_parents(0, &parents, &w, None).unwrap()
    }

    #[test]
    fn duplicates_merge_zeros_drop_and_mass_normalizes() {
        let t = chain(&[1.0, 1.0, 1.0]);
        let m = DiscreteMeasure::new(
            &t,
            vec![NodeId(2), NodeId(0), NodeId(2), NodeId(3)],
            vec![1.0, 2.0, 1.0, 0.0],
        )
        .unwrap();
        assert_eq!(m.supports(), &[NodeId(0), NodeId(2)]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_eq!(m.weights().iter().sum::<f64>(), 1.0);
        assert_eq!(m.weight_at(NodeId(3)), 0.0);
    }

    #[test]
    fn normalized_total_is_exactly_one() {
        // 0.1 + 0.2 + 0.3 + 0.4 != 1.0 in binary floating point.
        let t = chain(&[1.0, 1.0, 1.0]);
        let m = DiscreteMeasure::new(
            &t,
            vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        assert_eq!(m.weights().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_zero_and_negative_inputs_are_rejected() {
        let t = chain(&[1.0]);
        assert!(DiscreteMeasure::new(&t, vec![], vec![]).is_err());
        assert!(DiscreteMeasure::new(&t, vec![NodeId(0)], vec![0.0]).is_err());
        assert!(DiscreteMeasure::new(&t, vec![NodeId(0)], vec![-0.5]).is_err());
        assert!(DiscreteMeasure::new(&t, vec![NodeId(0)], vec![f64::NAN]).is_err());
        assert!(DiscreteMeasure::new(&t, vec![NodeId(7)], vec![1.0]).is_err());
    }

    #[test]
    fn dirac_is_a_single_unit_support() {
        let t = chain(&[2.0, 3.0]);
        let d = DiscreteMeasure::dirac(&t, NodeId(2)).unwrap();
        assert_eq!(d.supports(), &[NodeId(2)]);
        assert_eq!(d.weights(), &[1.0]);
    }

    fn embedded_tree() -> Tree {
        // Root at the origin; two children at x = -1 and x = +1, each with
        // one grandchild at x = -2 and x = +2.
        Tree::from_parents(
            0,
            &[None, Some(0), Some(0), Some(1), Some(2)],
            &[0.0, 1.0, 1.0, 1.0, 1.0],
            Some(vec![
                vec![0.0],
                vec![-1.0],
                vec![1.0],
                vec![-2.0],
                vec![2.0],
            ]),
        )
        .unwrap()
    }

    #[test]
    fn descent_routes_points_to_nearest_branches() {
        let t = embedded_tree();
        assert_eq!(descend_to_leaf(&t, &[-1.5]).unwrap(), NodeId(3));
        assert_eq!(descend_to_leaf(&t, &[0.7]).unwrap(), NodeId(4));
        // Equidistant from both children: the lower child id wins.
        assert_eq!(descend_to_leaf(&t, &[0.0]).unwrap(), NodeId(3));
    }

    #[test]
    fn descent_requires_embeddings_and_matching_dimension() {
        let bare = chain(&[1.0]);
        assert!(descend_to_leaf(&bare, &[0.0]).is_err());
        let t = embedded_tree();
        assert!(descend_to_leaf(&t, &[0.0, 0.0]).is_err());
        assert!(descend_to_leaf(&t, &[f64::NAN]).is_err());
    }

    #[test]
    fn from_points_accumulates_mass_per_leaf() {
        let t = embedded_tree();
        let points = vec![vec![-3.0], vec![-1.2], vec![2.0]];
        let m = DiscreteMeasure::from_points(&t, &points, &[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.supports(), &[NodeId(3), NodeId(4)]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let u = DiscreteMeasure::uniform_empirical(&t, &points).unwrap();
        assert_eq!(u.weight_at(NodeId(3)), 2.0 / 3.0);
    }

    #[test]
    fn approx_eq_tolerates_missing_near_zero_supports() {
        let t = chain(&[1.0, 1.0]);
        let a = DiscreteMeasure::new(&t, vec![NodeId(0), NodeId(1)], vec![0.5, 0.5]).unwrap();
        let b = DiscreteMeasure::new(
            &t,
            vec![NodeId(0), NodeId(1), NodeId(2)],
            vec![0.5, 0.5 - 1e-13, 1e-13],
        )
        .unwrap();
        assert!(a.approx_eq(&b, 1e-12));
        assert!(b.approx_eq(&a, 1e-12));
        assert!(!a.approx_eq(&b, 1e-16));
    }

    #[test]
    fn measure_set_validates_mixture_weights() {
        let t = chain(&[1.0]);
        let m = DiscreteMeasure::dirac(&t, NodeId(1)).unwrap();
        assert!(WeightedMeasureSet::new(vec![m.clone()], vec![0.9]).is_err());
        assert!(WeightedMeasureSet::new(vec![m.clone()], vec![-1.0]).is_err());
        assert!(WeightedMeasureSet::new(vec![m.clone(), m.clone()], vec![1.0]).is_err());
        let set = WeightedMeasureSet::uniform(vec![m.clone(), m]).unwrap();
        assert_eq!(set.mixture_weights(), &[0.5, 0.5]);
        assert_eq!(set.mixture_weights().iter().sum::<f64>(), 1.0);
    }
}
