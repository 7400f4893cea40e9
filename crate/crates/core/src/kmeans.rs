//! Weighted k-means on tree metrics and the support-constrained barycenter.
//!
//! The squared tree distance `Σ_i ν_i d_T(z, x_i)²` is convex along every
//! path, so its minimizer (the center of mass) is found exactly: a
//! rerooting sweep evaluates the objective at every node in linear time,
//! and the sign of the one-sided derivatives at the best node locates an
//! interior minimum on an incident edge when there is one. k-means with
//! these centers, snapped back to nodes, reduces a measure with many
//! supports to at most κ of them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barycenter::{tw_barycenter, BarycenterResult};
use crate::distance::{l1_distance, tree_map};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, WeightedMeasureSet};
use crate::tree::{EdgeId, NodeId, Tree};

/// A neighbor of a node, for directional-derivative queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Along the edge to the parent.
    Parent,
    /// Along the edge to the given child.
    Child(NodeId),
}

/// Exact minimizer of the weighted squared-distance objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CenterLocation {
    /// The minimum is attained at a node.
    Node(NodeId),
    /// The minimum lies strictly inside an edge, `offset` away from the
    /// edge's upper (parent-side) endpoint.
    EdgeInterior { edge: EdgeId, offset: f64 },
}

/// Center of mass of a weighted node set: the exact location and the
/// nearest node to report when a node-valued center is required.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CenterOfMass {
    pub location: CenterLocation,
    pub snapped: NodeId,
}

impl CenterOfMass {
    /// Distance from the exact location to the snapped node.
    pub fn snap_distance(&self, tree: &Tree) -> f64 {
        match self.location {
            CenterLocation::Node(_) => 0.0,
            CenterLocation::EdgeInterior { edge, offset } => {
                let w = tree.edge_weight(edge);
                offset.min(w - offset)
            }
        }
    }
}

/// Per-support DP tables for the squared-distance objective, shared by
/// [`delta`] and [`center_of_mass`].
struct ComTables {
    /// Total mass (1 after normalization).
    total: f64,
    mass_below: Vec<f64>,
    /// `Σ_{i in subtree(v)} ν_i d(v, x_i)`.
    dist_below: Vec<f64>,
    /// `Σ_i ν_i d(v, x_i)` for every node v.
    s: Vec<f64>,
    /// `Σ_i ν_i d(v, x_i)²` for every node v.
    f: Vec<f64>,
}

fn com_tables(tree: &Tree, nodes: &[NodeId], masses: &[f64]) -> Result<ComTables> {
    if nodes.is_empty() || nodes.len() != masses.len() {
        return Err(Error::domain(
            "center of mass needs matching, non-empty node and mass slices",
        ));
    }
    let n = tree.node_count();
    let mut node_mass = vec![0.0; n];
    let mut total = 0.0;
    for (&v, &m) in nodes.iter().zip(masses) {
        tree.check_node(v)?;
        if !m.is_finite() || m < 0.0 {
            return Err(Error::domain(format!("invalid center-of-mass weight {m}")));
        }
        node_mass[v.0] += m;
        total += m;
    }
    if total <= 0.0 {
        return Err(Error::domain("center of mass of zero total mass"));
    }
    for m in node_mass.iter_mut() {
        *m /= total;
    }

    let mut mass_below = node_mass;
    let mut dist_below = vec![0.0; n];
    let mut q_below = vec![0.0; n];
    for &v in tree.bfs_order().iter().rev() {
        for &c in tree.children(v) {
            let w = tree.edge_weight(tree.node_edge(c).unwrap());
            mass_below[v.0] += mass_below[c.0];
            dist_below[v.0] += dist_below[c.0] + w * mass_below[c.0];
            q_below[v.0] += q_below[c.0] + 2.0 * w * dist_below[c.0] + w * w * mass_below[c.0];
        }
    }
    let mut s = vec![0.0; n];
    let mut f = vec![0.0; n];
    let root = tree.root();
    s[root.0] = dist_below[root.0];
    f[root.0] = q_below[root.0];
    for &v in tree.bfs_order() {
        for &c in tree.children(v) {
            let w = tree.edge_weight(tree.node_edge(c).unwrap());
            let below = dist_below[c.0] + w * mass_below[c.0];
            s[c.0] = s[v.0] + w * (1.0 - 2.0 * mass_below[c.0]);
            f[c.0] = f[v.0] + w * w + 2.0 * w * s[v.0] - 4.0 * w * below;
        }
    }
    Ok(ComTables {
        total: 1.0,
        mass_below,
        dist_below,
        s,
        f,
    })
}

impl ComTables {
    /// One-sided slope (half the directional derivative) of the objective
    /// at `node`, moving toward the given neighbor.
    fn delta(&self, tree: &Tree, node: NodeId, direction: Direction) -> Result<f64> {
        match direction {
            Direction::Parent => {
                if tree.parent(node).is_none() {
                    return Err(Error::domain(format!("node {node} has no parent")));
                }
                Ok(2.0 * self.dist_below[node.0] - self.s[node.0])
            }
            Direction::Child(c) => {
                tree.check_node(c)?;
                if tree.parent(c) != Some(node) {
                    return Err(Error::domain(format!("{c} is not a child of {node}")));
                }
                let w = tree.edge_weight(tree.node_edge(c).unwrap());
                Ok(self.s[node.0] - 2.0 * (self.dist_below[c.0] + w * self.mass_below[c.0]))
            }
        }
    }
}

/// One-sided slope of `z ↦ Σ_i ν_i d_T(z, x_i)²` at `node` toward a
/// neighbor, up to the constant factor 2. Negative means the objective
/// strictly decreases into that edge.
pub fn delta(
    tree: &Tree,
    measure: &DiscreteMeasure,
    node: NodeId,
    direction: Direction,
) -> Result<f64> {
    tree.check_node(node)?;
    let tables = com_tables(tree, measure.supports(), measure.weights())?;
    tables.delta(tree, node, direction)
}

/// Exact center of mass of a measure under the squared tree distance.
///
/// The best node is found by the rerooting sweep (ties to the lowest
/// node id); if some incident edge has a strictly negative slope the
/// minimum sits inside that edge at offset `−Δ / M` along it. Snapping
/// picks the nearer endpoint, resolving exact midpoints to the deeper
/// one.
pub fn center_of_mass(tree: &Tree, measure: &DiscreteMeasure) -> Result<CenterOfMass> {
    let tables = com_tables(tree, measure.supports(), measure.weights())?;
    center_from_tables(tree, &tables)
}

fn center_from_tables(tree: &Tree, tables: &ComTables) -> Result<CenterOfMass> {
    let mut best = tree.root();
    for node in 0..tree.node_count() {
        if tables.f[node] < tables.f[best.0] {
            best = NodeId(node);
        }
    }

    let mut steepest: Option<(Direction, f64)> = None;
    let mut consider = |dir: Direction, slope: f64| {
        if slope < 0.0 && steepest.is_none_or(|(_, s)| slope < s) {
            steepest = Some((dir, slope));
        }
    };
    for &c in tree.children(best) {
        consider(
            Direction::Child(c),
            tables.delta(tree, best, Direction::Child(c))?,
        );
    }
    if tree.parent(best).is_some() {
        consider(
            Direction::Parent,
            tables.delta(tree, best, Direction::Parent)?,
        );
    }

    let Some((direction, slope)) = steepest else {
        return Ok(CenterOfMass {
            location: CenterLocation::Node(best),
            snapped: best,
        });
    };
    // The objective is quadratic with curvature M along the edge, so the
    // interior minimum sits −slope/M past `best`.
    let along = -slope / tables.total;
    let (edge, offset) = match direction {
        Direction::Child(c) => (tree.node_edge(c).unwrap(), along),
        Direction::Parent => {
            let edge = tree.node_edge(best).unwrap();
            (edge, tree.edge_weight(edge) - along)
        }
    };
    let w = tree.edge_weight(edge);
    let offset = offset.clamp(0.0, w);
    if offset == 0.0 || offset == w {
        let snapped = if offset == 0.0 {
            tree.edge_parent(edge)
        } else {
            tree.edge_node(edge)
        };
        return Ok(CenterOfMass {
            location: CenterLocation::Node(snapped),
            snapped,
        });
    }
    let snapped = if offset < w - offset {
        tree.edge_parent(edge)
    } else {
        tree.edge_node(edge)
    };
    Ok(CenterOfMass {
        location: CenterLocation::EdgeInterior { edge, offset },
        snapped,
    })
}

/// Result of weighted k-means over nodes of a tree.
#[derive(Clone, Debug, Serialize)]
pub struct TreeClustering {
    /// Cluster index of each input node, in input order.
    pub assignments: Vec<usize>,
    /// Snapped center node of each cluster.
    pub centroids: Vec<NodeId>,
    /// Total input mass of each cluster.
    pub cluster_masses: Vec<f64>,
    /// Final `Σ_i m_i d_T(x_i, c_{a_i})²` with the snapped centroids.
    pub objective: f64,
    /// Completed assign/update rounds.
    pub iterations: usize,
    /// Objective after each update step.
    pub objective_trace: Vec<f64>,
    /// Per-iteration upper bound on the objective increase caused by
    /// snapping centers to nodes:
    /// `Σ_k mass_k (2 ·snap_k· diam + snap_k²)`.
    pub snap_bounds: Vec<f64>,
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_EXHAUSTIVE_SEEDINGS: usize = 32;

/// Weighted k-means of `(nodes, masses)` under the tree metric.
///
/// Duplicate nodes are merged up front. If `k` is at least the number of
/// distinct nodes every distinct node becomes its own cluster. Otherwise
/// each seeding is refined by Lloyd iterations with exact centers of mass
/// snapped to nodes, until the assignment repeats or 100 iterations
/// elapse. Clusters that lose all members are re-seeded with the point
/// farthest from its current center among clusters that can spare one.
///
/// Lloyd descent only finds a local optimum, so several seedings run and
/// the best final objective wins. When the tree admits at most 32
/// distinct k-subsets of nodes, every such subset seeds one run; this
/// makes the search exact there, because the global optimum is the
/// Voronoi partition of its own per-cluster best nodes and the run seeded
/// with exactly those nodes converges to it. (Seeding only from input
/// points — farthest-point or otherwise — provably misses the optimal
/// basin on some small inputs.) On larger trees, 10 farthest-point
/// seedings start from distinct input points drawn without replacement
/// from `seed`. The reported trace and iteration count belong to the
/// winning run.
pub fn tree_kmeans(
    tree: &Tree,
    nodes: &[NodeId],
    masses: &[f64],
    k: usize,
    seed: u64,
) -> Result<TreeClustering> {
    if nodes.is_empty() {
        return Err(Error::domain("k-means over an empty node set"));
    }
    if nodes.len() != masses.len() {
        return Err(Error::domain(format!(
            "{} nodes but {} masses",
            nodes.len(),
            masses.len()
        )));
    }
    if k == 0 {
        return Err(Error::domain("k-means needs k ≥ 1"));
    }
    for &v in nodes {
        tree.check_node(v)?;
    }
    for &m in masses {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::domain(format!("invalid k-means mass {m}")));
        }
    }

    // Merge duplicates; `merged[i]` is point i's index into the distinct set.
    let mut distinct: Vec<NodeId> = nodes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let merged: Vec<usize> = nodes
        .iter()
        .map(|v| distinct.binary_search(v).unwrap())
        .collect();
    let mut distinct_mass = vec![0.0; distinct.len()];
    for (i, &d) in merged.iter().enumerate() {
        distinct_mass[d] += masses[i];
    }
    let s = distinct.len();

    if k >= s {
        let assignments: Vec<usize> = merged;
        return Ok(TreeClustering {
            assignments,
            centroids: distinct,
            cluster_masses: distinct_mass,
            objective: 0.0,
            iterations: 0,
            objective_trace: Vec::new(),
            snap_bounds: Vec::new(),
        });
    }

    // Distances from each distinct point to every tree node: serves both
    // point-to-point seeding and point-to-centroid assignment.
    let dist: Vec<Vec<f64>> = distinct
        .iter()
        .map(|&v| tree.distances_from(v))
        .collect::<Result<_>>()?;
    let diameter = tree.diameter();

    let seedings: Vec<Vec<NodeId>> =
        match k_subsets(tree.node_count(), k, KMEANS_EXHAUSTIVE_SEEDINGS) {
            Some(all) => all
                .into_iter()
                .map(|subset| subset.into_iter().map(NodeId).collect())
                .collect(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut first_picks: Vec<usize> = (0..s).collect();
                first_picks.shuffle(&mut rng);
                first_picks.truncate(KMEANS_RESTARTS.min(s));
                first_picks
                    .into_iter()
                    .map(|first| {
                        fpc_seeding(&distinct, &dist, k, first)
                            .into_iter()
                            .map(|c| distinct[c])
                            .collect()
                    })
                    .collect()
            }
        };
    let mut best: Option<LloydRun> = None;
    for centers in seedings {
        let run = lloyd_from(
            tree,
            &distinct,
            &distinct_mass,
            &dist,
            diameter,
            k,
            &centers,
        )?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one seeding ran");

    let mut cluster_masses = vec![0.0; k];
    for i in 0..s {
        cluster_masses[run.assign[i]] += distinct_mass[i];
    }
    Ok(TreeClustering {
        assignments: merged.iter().map(|&d| run.assign[d]).collect(),
        centroids: run.centroids,
        cluster_masses,
        objective: run.objective,
        iterations: run.iterations,
        objective_trace: run.objective_trace,
        snap_bounds: run.snap_bounds,
    })
}

/// Result of one farthest-point-seeded Lloyd descent over the distinct
/// points.
struct LloydRun {
    assign: Vec<usize>,
    centroids: Vec<NodeId>,
    objective: f64,
    iterations: usize,
    objective_trace: Vec<f64>,
    snap_bounds: Vec<f64>,
}

/// All k-element subsets of `0..s` in lexicographic order, or `None` when
/// there are more than `cap` of them.
fn k_subsets(s: usize, k: usize, cap: usize) -> Option<Vec<Vec<usize>>> {
    let mut subsets = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        if subsets.len() == cap {
            return None;
        }
        subsets.push(current.clone());
        // Advance the rightmost index that still has room to move.
        let mut i = k;
        loop {
            if i == 0 {
                return Some(subsets);
            }
            i -= 1;
            if current[i] < s - (k - i) {
                current[i] += 1;
                for j in i + 1..k {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Farthest-point seeding over the distinct points, fully determined by
/// its first pick: each further center is the point farthest from the
/// chosen set (ties to the lowest index).
fn fpc_seeding(distinct: &[NodeId], dist: &[Vec<f64>], k: usize, first: usize) -> Vec<usize> {
    let s = distinct.len();
    let mut centers: Vec<usize> = vec![first];
    let mut nearest: Vec<f64> = (0..s).map(|i| dist[i][distinct[first].0]).collect();
    while centers.len() < k {
        let mut far = 0;
        for i in 1..s {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        centers.push(far);
        for i in 0..s {
            nearest[i] = nearest[i].min(dist[i][distinct[far].0]);
        }
    }
    centers
}

/// Runs one Lloyd descent from the given initial centroid nodes.
/// `dist[i]` holds the distances from distinct point `i` to every tree
/// node.
fn lloyd_from(
    tree: &Tree,
    distinct: &[NodeId],
    distinct_mass: &[f64],
    dist: &[Vec<f64>],
    diameter: f64,
    k: usize,
    centers: &[NodeId],
) -> Result<LloydRun> {
    let s = distinct.len();
    let mut centroids: Vec<NodeId> = centers.to_vec();

    let mut assign: Vec<usize> = vec![0; s];
    let mut previous: Option<Vec<usize>> = None;
    let mut objective = 0.0;
    let mut objective_trace = Vec::new();
    let mut snap_bounds = Vec::new();
    let mut iterations = 0;

    for _ in 0..KMEANS_MAX_ITERS {
        for i in 0..s {
            let mut best = 0;
            for j in 1..k {
                if dist[i][centroids[j].0] < dist[i][centroids[best].0] {
                    best = j;
                }
            }
            assign[i] = best;
        }

        // Give empty clusters the point farthest from its own center,
        // provided its donor cluster keeps at least one member.
        let mut sizes = vec![0usize; k];
        for &a in &assign {
            sizes[a] += 1;
        }
        for j in 0..k {
            if sizes[j] > 0 {
                continue;
            }
            let mut pick: Option<usize> = None;
            for i in 0..s {
                if sizes[assign[i]] < 2 {
                    continue;
                }
                if pick.is_none_or(|p| {
                    dist[i][centroids[assign[i]].0] > dist[p][centroids[assign[p]].0]
                }) {
                    pick = Some(i);
                }
            }
            if let Some(i) = pick {
                sizes[assign[i]] -= 1;
                assign[i] = j;
                sizes[j] = 1;
            }
        }

        if previous.as_ref() == Some(&assign) {
            break;
        }
        previous = Some(assign.clone());

        let mut snap_bound = 0.0;
        for (j, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..s).filter(|&i| assign[i] == j).collect();
            if members.is_empty() {
                continue;
            }
            let member_nodes: Vec<NodeId> = members.iter().map(|&i| distinct[i]).collect();
            let mut member_masses: Vec<f64> = members.iter().map(|&i| distinct_mass[i]).collect();
            let cluster_mass: f64 = member_masses.iter().sum();
            if cluster_mass <= 0.0 {
                member_masses = vec![1.0; members.len()];
            }
            let com = com_tables(tree, &member_nodes, &member_masses)
                .and_then(|t| center_from_tables(tree, &t))?;
            *centroid = com.snapped;
            let snap = com.snap_distance(tree);
            snap_bound += cluster_mass.max(0.0) * (2.0 * snap * diameter + snap * snap);
        }

        objective = (0..s)
            .map(|i| distinct_mass[i] * dist[i][centroids[assign[i]].0].powi(2))
            .sum();
        objective_trace.push(objective);
        snap_bounds.push(snap_bound);
        if snap_bound > 0.0 {
            log::debug!(
                "k-means iteration {iterations}: snapping centers may cost up to {snap_bound:.3e}"
            );
        }
        iterations += 1;
    }

    Ok(LloydRun {
        assign,
        centroids,
        objective,
        iterations,
        objective_trace,
        snap_bounds,
    })
}

/// Barycenter with at most `max_supports` support points.
///
/// Computes the unconstrained barycenter first and returns it untouched
/// when it already fits. Otherwise its supports are clustered by
/// [`tree_kmeans`] and each cluster's mass moves to its snapped center.
/// The objective is re-evaluated for the reduced measure.
pub fn constrained_tw_barycenter(
    tree: &Tree,
    set: &WeightedMeasureSet,
    max_supports: usize,
    seed: u64,
) -> Result<BarycenterResult> {
    if max_supports == 0 {
        return Err(Error::domain("support budget must be at least 1"));
    }
    let base = tw_barycenter(tree, set)?;
    if base.barycenter.support_count() <= max_supports {
        return Ok(base);
    }
    let clustering = tree_kmeans(
        tree,
        base.barycenter.supports(),
        base.barycenter.weights(),
        max_supports,
        seed,
    )?;
    let kept: Vec<usize> = (0..clustering.centroids.len())
        .filter(|&j| clustering.cluster_masses[j] > 0.0)
        .collect();
    let barycenter = DiscreteMeasure::new(
        tree,
        kept.iter().map(|&j| clustering.centroids[j]).collect(),
        kept.iter().map(|&j| clustering.cluster_masses[j]).collect(),
    )?;
    let edge_vector = tree_map(tree, &barycenter)?;
    let mut objective = 0.0;
    for (measure, &p) in set.measures().iter().zip(set.mixture_weights()) {
        objective += p * l1_distance(&edge_vector, &tree_map(tree, measure)?)?;
    }
    Ok(BarycenterResult {
        barycenter,
        objective,
        edge_vector,
        feasibility_adjustment: base.feasibility_adjustment,
    })
}
