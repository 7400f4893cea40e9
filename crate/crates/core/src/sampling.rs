//! Random tree metrics over point clouds.
//!
//! A tree is grown by recursive farthest-point partitioning: the root
//! sits at the dataset centroid, every node splits its points into at
//! most κ clusters, and each cluster becomes a child embedded at its
//! center point. Edge lengths are Euclidean parent–child distances,
//! floored at a configurable minimum so no edge has length zero. An
//! ensemble of such trees, each grown from its own seed, defines the
//! averaged tree distance used everywhere else in this crate.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{squared_distance, DiscreteMeasure};
use crate::tree::{NodeId, Tree, TreeBuilder};

/// Parameters for growing random trees over a point cloud.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplingConfig {
    /// Maximum children per node (κ ≥ 2).
    pub kappa: usize,
    /// Maximum node depth; the root has depth 1, so this must be ≥ 2.
    pub depth: usize,
    /// Trees per ensemble (≥ 1).
    pub num_trees: usize,
    /// Base seed; tree `t` uses `seed + t`.
    pub seed: u64,
    /// Lower bound for edge lengths, keeping the tree a genuine metric
    /// even when a center coincides with its parent's embedding.
    pub min_edge_weight: f64,
}

impl SamplingConfig {
    pub const DEFAULT_MIN_EDGE_WEIGHT: f64 = 1e-6;

    /// Config with the default edge-length floor.
    pub fn new(kappa: usize, depth: usize, num_trees: usize, seed: u64) -> Result<Self> {
        let config = SamplingConfig {
            kappa,
            depth,
            num_trees,
            seed,
            min_edge_weight: Self::DEFAULT_MIN_EDGE_WEIGHT,
        };
        config.validate()?;
        Ok(config)
    }

    /// Replaces the edge-length floor.
    pub fn with_min_edge_weight(mut self, min_edge_weight: f64) -> Result<Self> {
        self.min_edge_weight = min_edge_weight;
        self.validate()?;
        Ok(self)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.kappa < 2 {
            return Err(Error::domain(format!(
                "branching factor must be at least 2, got {}",
                self.kappa
            )));
        }
        if self.depth < 2 {
            return Err(Error::domain(format!(
                "tree depth must be at least 2, got {}",
                self.depth
            )));
        }
        if self.num_trees == 0 {
            return Err(Error::domain("ensemble needs at least one tree"));
        }
        if !self.min_edge_weight.is_finite() || self.min_edge_weight <= 0.0 {
            return Err(Error::domain(format!(
                "edge-length floor must be positive and finite, got {}",
                self.min_edge_weight
            )));
        }
        Ok(())
    }
}

/// Output of farthest-point clustering.
#[derive(Clone, Debug, PartialEq)]
pub struct FpcResult {
    /// Chosen center points (indices into the input), in pick order.
    pub centers: Vec<usize>,
    /// For each input point, the position of its center in `centers`.
    pub assignments: Vec<usize>,
    /// Largest distance from a point to its assigned center.
    pub radius: f64,
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = points.first() else {
        return Err(Error::domain("empty point cloud"));
    };
    let dim = first.len();
    if dim == 0 {
        return Err(Error::domain("points must have at least one coordinate"));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::domain(format!(
                "point {i} has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
    }
    Ok(dim)
}

/// Greedy k-center clustering (Gonzalez), a 2-approximation of the
/// optimal covering radius.
///
/// The first center is drawn uniformly from `rng`; each further center is
/// the point farthest from the chosen set (ties to the lowest index).
/// Selection stops early once every point coincides with a center, so
/// duplicated points cannot produce duplicate centers. If `k` is at least
/// the number of points, every point becomes its own center.
pub fn farthest_point_clustering<R: Rng>(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut R,
) -> Result<FpcResult> {
    check_points(points)?;
    if k == 0 {
        return Err(Error::domain("farthest-point clustering needs k ≥ 1"));
    }
    let subset: Vec<usize> = (0..points.len()).collect();
    let (centers, assignments, radius) = fpc_over(points, &subset, k, rng);
    Ok(FpcResult {
        centers,
        assignments,
        radius,
    })
}

/// Farthest-point clustering over `subset`; returned centers are
/// positions within `subset`.
fn fpc_over<R: Rng>(
    points: &[Vec<f64>],
    subset: &[usize],
    k: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>, f64) {
    let m = subset.len();
    if k >= m {
        return ((0..m).collect(), (0..m).collect(), 0.0);
    }
    let dist = |a: usize, b: usize| squared_distance(&points[subset[a]], &points[subset[b]]).sqrt();
    let first = rng.random_range(0..m);
    let mut centers = vec![first];
    let mut nearest: Vec<f64> = (0..m).map(|i| dist(i, first)).collect();
    let mut assign = vec![0usize; m];
    while centers.len() < k {
        let mut far = 0;
        for i in 1..m {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        if nearest[far] == 0.0 {
            break;
        }
        let j = centers.len();
        centers.push(far);
        for i in 0..m {
            let d = dist(i, far);
            if d < nearest[i] {
                nearest[i] = d;
                assign[i] = j;
            }
        }
    }
    let radius = nearest.iter().fold(0.0f64, |a, &b| a.max(b));
    (centers, assign, radius)
}

/// Grows one random tree over `points` (see the module docs) and reports,
/// for each point, the node where its recursive partition terminated.
pub fn sample_tree(
    points: &[Vec<f64>],
    config: &SamplingConfig,
    seed: u64,
) -> Result<(Tree, Vec<NodeId>)> {
    config.validate()?;
    let dim = check_points(points)?;
    let n = points.len();
    let mut centroid = vec![0.0; dim];
    for p in points {
        for (c, x) in centroid.iter_mut().zip(p) {
            *c += x;
        }
    }
    for c in centroid.iter_mut() {
        *c /= n as f64;
    }

    let mut builder = TreeBuilder::with_root_embedding(centroid.clone());
    let mut embeddings = vec![centroid];
    let mut terminal = vec![NodeId(0); n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queue: VecDeque<(NodeId, Vec<usize>, usize)> = VecDeque::new();
    queue.push_back((NodeId(0), (0..n).collect(), 1));
    while let Some((node, subset, depth)) = queue.pop_front() {
        if depth >= config.depth || subset.len() <= 1 {
            for &i in &subset {
                terminal[i] = node;
            }
            continue;
        }
        let (centers, assign, _) = fpc_over(points, &subset, config.kappa, &mut rng);
        for (j, &cpos) in centers.iter().enumerate() {
            let embedding = points[subset[cpos]].clone();
            let weight = squared_distance(&embeddings[node.0], &embedding)
                .sqrt()
                .max(config.min_edge_weight);
            let child = builder.add_embedded_child(node, weight, embedding.clone());
            embeddings.push(embedding);
            let members: Vec<usize> = subset
                .iter()
                .enumerate()
                .filter(|&(pos, _)| assign[pos] == j)
                .map(|(_, &i)| i)
                .collect();
            queue.push_back((child, members, depth + 1));
        }
    }
    Ok((builder.build()?, terminal))
}

/// A set of trees grown over one dataset, with each tree's terminal node
/// for every data point.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TreeEnsembleJson")]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    point_paths: Vec<Vec<NodeId>>,
}

#[derive(Deserialize)]
struct TreeEnsembleJson {
    trees: Vec<Tree>,
    point_paths: Vec<Vec<NodeId>>,
}

impl TryFrom<TreeEnsembleJson> for TreeEnsemble {
    type Error = Error;

    fn try_from(json: TreeEnsembleJson) -> Result<Self> {
        TreeEnsemble::new(json.trees, json.point_paths)
    }
}

impl TreeEnsemble {
    /// Pairs trees with per-tree point assignments. All assignment vectors
    /// must be equally long (they index one dataset) and point at valid
    /// nodes; empty vectors are allowed for ensembles detached from data.
    pub fn new(trees: Vec<Tree>, point_paths: Vec<Vec<NodeId>>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::domain("ensemble needs at least one tree"));
        }
        if trees.len() != point_paths.len() {
            return Err(Error::domain(format!(
                "{} trees but {} point-assignment vectors",
                trees.len(),
                point_paths.len()
            )));
        }
        let n = point_paths[0].len();
        for (t, (tree, path)) in trees.iter().zip(&point_paths).enumerate() {
            if path.len() != n {
                return Err(Error::domain(format!(
                    "tree {t} assigns {} points, expected {n}",
                    path.len()
                )));
            }
            for &v in path {
                tree.check_node(v)?;
            }
        }
        Ok(TreeEnsemble { trees, point_paths })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Per-tree terminal node of each dataset point.
    pub fn point_paths(&self) -> &[Vec<NodeId>] {
        &self.point_paths
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Number of dataset points the ensemble was grown over.
    pub fn point_count(&self) -> usize {
        self.point_paths[0].len()
    }

    /// Attaches a weighted subset of the construction dataset, placing
    /// each point's mass at its recorded terminal node in every tree.
    pub fn attach_indices(&self, indices: &[usize], masses: &[f64]) -> Result<EnsembleMeasure> {
        if self.point_count() == 0 {
            return Err(Error::domain(
                "ensemble carries no point assignments; attach explicit points instead",
            ));
        }
        for &i in indices {
            if i >= self.point_count() {
                return Err(Error::domain(format!(
                    "point index {i} out of range for {} dataset points",
                    self.point_count()
                )));
            }
        }
        let components = self
            .trees
            .iter()
            .zip(&self.point_paths)
            .map(|(tree, path)| {
                DiscreteMeasure::new(
                    tree,
                    indices.iter().map(|&i| path[i]).collect(),
                    masses.to_vec(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        EnsembleMeasure::from_components(components)
    }

    /// Attaches arbitrary weighted points by descending each tree's
    /// embeddings greedily from the root.
    pub fn attach_points(&self, points: &[Vec<f64>], masses: &[f64]) -> Result<EnsembleMeasure> {
        let components = self
            .trees
            .iter()
            .map(|tree| DiscreteMeasure::from_points(tree, points, masses))
            .collect::<Result<Vec<_>>>()?;
        EnsembleMeasure::from_components(components)
    }
}

/// One measure per ensemble tree, describing the same distribution seen
/// through each tree metric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleMeasure {
    components: Vec<DiscreteMeasure>,
}

impl EnsembleMeasure {
    pub fn from_components(components: Vec<DiscreteMeasure>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain(
                "ensemble measure needs at least one component",
            ));
        }
        Ok(EnsembleMeasure { components })
    }

    pub fn components(&self) -> &[DiscreteMeasure] {
        &self.components
    }
}

/// Grows `config.num_trees` trees in parallel, tree `t` seeded with
/// `config.seed + t`.
pub fn sample_ensemble(points: &[Vec<f64>], config: &SamplingConfig) -> Result<TreeEnsemble> {
    config.validate()?;
    check_points(points)?;
    let grown = (0..config.num_trees)
        .into_par_iter()
        .map(|t| sample_tree(points, config, config.seed.wrapping_add(t as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (trees, paths): (Vec<_>, Vec<_>) = grown.into_iter().unzip();
    TreeEnsemble::new(trees, paths)
}
