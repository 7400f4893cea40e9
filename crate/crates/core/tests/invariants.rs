//! Randomized cross-module invariants.
//!
//! Each property here ties together at least two independent code paths —
//! the closed-form distance against the network-simplex oracle, the tree
//! mapping against a brute-force subtree scan, optimizers against direct
//! objective evaluation — so a bug in either side breaks the test.

use proptest::prelude::*;
use proptest::sample::Index;
use treebary::oracle::exact_ot;
use treebary::{
    adjusted_rand_index, center_of_mass, constrained_tw_barycenter, inverse_map, tree_kmeans,
    tree_map, tw, tw_barycenter, weighted_geometric_median, CenterLocation, DiscreteMeasure,
    NodeId, Tree, WeightedMeasureSet,
};

/// Random rooted tree on 2..=max_nodes nodes. The parent of node `i` is a
/// uniformly random earlier node, so every labeled rooted shape is
/// reachable; weights stay in `[0.1, 2)` to keep distances well scaled.
fn arb_tree(max_nodes: usize) -> impl Strategy<Value = Tree> {
    (2..=max_nodes).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<Index>(), n - 1),
            proptest::collection::vec(0.1f64..2.0, n),
        )
            .prop_map(move |(picks, weights)| {
                let mut parents: Vec<Option<usize>> = vec![None; n];
                for (i, pick) in picks.iter().enumerate() {
                    parents[i + 1] = Some(pick.index(i + 1));
                }
                Tree::from_parents(0, &parents, &weights, None).expect("parents are acyclic")
            })
    })
}

/// Raw material for a measure that works on any tree: node picks (mapped
/// into range later) plus unnormalized positive weights.
type RawMeasure = (Vec<Index>, Vec<f64>);

fn arb_raw_measure(max_supports: usize) -> impl Strategy<Value = RawMeasure> {
    (1..=max_supports).prop_flat_map(|s| {
        (
            proptest::collection::vec(any::<Index>(), s),
            proptest::collection::vec(0.01f64..1.0, s),
        )
    })
}

/// Instantiates raw material on a concrete tree. Duplicate picks are
/// merged by the constructor, so the support count may come out smaller.
fn materialize(tree: &Tree, raw: &RawMeasure) -> DiscreteMeasure {
    let supports: Vec<NodeId> = raw
        .0
        .iter()
        .map(|pick| NodeId(pick.index(tree.node_count())))
        .collect();
    DiscreteMeasure::new(tree, supports, raw.1.clone()).expect("weights are positive")
}

/// `Σ_i ν_i d(z, x_i)²` for a node-valued candidate center.
fn com_objective_at_node(tree: &Tree, measure: &DiscreteMeasure, z: NodeId) -> f64 {
    let dist = tree.distances_from(z).expect("valid node");
    measure.iter().map(|(x, m)| m * dist[x.0] * dist[x.0]).sum()
}

/// Same objective for a point inside an edge, `offset` from the upper
/// endpoint: every path leaves through one of the two endpoints.
fn com_objective_inside_edge(
    tree: &Tree,
    measure: &DiscreteMeasure,
    edge: treebary::EdgeId,
    offset: f64,
) -> f64 {
    let w = tree.edge_weight(edge);
    let from_upper = tree
        .distances_from(tree.edge_parent(edge))
        .expect("valid node");
    let from_deeper = tree
        .distances_from(tree.edge_node(edge))
        .expect("valid node");
    measure
        .iter()
        .map(|(x, m)| {
            let d = (offset + from_upper[x.0]).min(w - offset + from_deeper[x.0]);
            m * d * d
        })
        .sum()
}

proptest! {
    /// Mapping a measure to edge space and pulling it back reproduces the
    /// measure to round-off (division by the edge weight after the
    /// multiplication inside the map is not bit-exact).
    #[test]
    fn mapping_round_trips(tree in arb_tree(40), raw in arb_raw_measure(12)) {
        let mu = materialize(&tree, &raw);
        let vec = tree_map(&tree, &mu).unwrap();
        let back = inverse_map(&tree, &vec).unwrap();
        prop_assert!(back.approx_eq(&mu, 1e-12));
    }

    /// The fast mapping agrees with a brute-force subtree-mass scan.
    #[test]
    fn mapping_matches_subtree_masses(tree in arb_tree(32), raw in arb_raw_measure(10)) {
        let mu = materialize(&tree, &raw);
        let vec = tree_map(&tree, &mu).unwrap();
        for e in 0..tree.edge_count() {
            let edge = treebary::EdgeId(e);
            let mask = tree.subtree(tree.edge_node(edge)).unwrap();
            let inside: f64 = mu
                .iter()
                .filter(|(x, _)| mask.contains(*x))
                .map(|(_, m)| m)
                .sum();
            let expected = tree.edge_weight(edge) * inside;
            prop_assert!((vec.values()[e] - expected).abs() <= 1e-12);
        }
    }

    /// The closed-form distance equals the cost of an exact optimal
    /// transport plan between the two measures under the path metric.
    #[test]
    fn tw_matches_exact_transport(
        tree in arb_tree(16),
        raw_a in arb_raw_measure(8),
        raw_b in arb_raw_measure(8),
    ) {
        let mu = materialize(&tree, &raw_a);
        let nu = materialize(&tree, &raw_b);
        let cost: Vec<Vec<f64>> = mu
            .supports()
            .iter()
            .map(|&a| {
                let row = tree.distances_from(a).unwrap();
                nu.supports().iter().map(|&b| row[b.0]).collect()
            })
            .collect();
        let plan = exact_ot(&cost, mu.weights(), nu.weights()).unwrap();
        let closed = tw(&tree, &mu, &nu).unwrap();
        prop_assert!((closed - plan.cost).abs() <= 1e-8,
            "closed form {closed} vs transport {0}", plan.cost);
    }

    /// Identity of indiscernibles (on equal measures), exact symmetry, and
    /// the triangle inequality.
    #[test]
    fn tw_satisfies_metric_axioms(
        tree in arb_tree(32),
        raw_a in arb_raw_measure(8),
        raw_b in arb_raw_measure(8),
        raw_c in arb_raw_measure(8),
    ) {
        let a = materialize(&tree, &raw_a);
        let b = materialize(&tree, &raw_b);
        let c = materialize(&tree, &raw_c);
        prop_assert_eq!(tw(&tree, &a, &a).unwrap(), 0.0);
        let ab = tw(&tree, &a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, tw(&tree, &b, &a).unwrap());
        let ac = tw(&tree, &a, &c).unwrap();
        let cb = tw(&tree, &c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-9);
    }

    /// The weighted geometric median is an input value and minimizes the
    /// weighted absolute deviation over inputs, gaps between inputs, and
    /// points beyond the extremes.
    #[test]
    fn median_minimizes_weighted_deviation(
        pairs in proptest::collection::vec((-10.0f64..10.0, 0.01f64..1.0), 1..=20),
    ) {
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
        let med = weighted_geometric_median(&values, &weights).unwrap();
        prop_assert!(values.contains(&med));

        let objective = |z: f64| -> f64 {
            values.iter().zip(&weights).map(|(v, p)| p * (z - v).abs()).sum()
        };
        let at_med = objective(med);
        let mut probes = values.clone();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        probes.extend(sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        probes.push(sorted[0] - 1.0);
        probes.push(sorted[sorted.len() - 1] + 1.0);
        for z in probes {
            prop_assert!(at_med <= objective(z) + 1e-12 * (1.0 + at_med.abs()));
        }
    }

    /// The barycenter's reported objective is truthful and no input
    /// measure or independent random candidate does better.
    #[test]
    fn barycenter_dominates_inputs_and_probes(
        tree in arb_tree(40),
        raws in proptest::collection::vec(arb_raw_measure(8), 2..=6),
        probes in proptest::collection::vec(arb_raw_measure(8), 2),
    ) {
        let measures: Vec<DiscreteMeasure> =
            raws.iter().map(|raw| materialize(&tree, raw)).collect();
        let set = WeightedMeasureSet::uniform(measures.clone()).unwrap();
        let res = tw_barycenter(&tree, &set).unwrap();

        let objective = |candidate: &DiscreteMeasure| -> f64 {
            let p = 1.0 / measures.len() as f64;
            measures.iter().map(|m| p * tw(&tree, candidate, m).unwrap()).sum()
        };
        let reported = objective(&res.barycenter);
        prop_assert!((res.objective - reported).abs() <= 1e-12 * (1.0 + reported));
        for m in &measures {
            prop_assert!(res.objective <= objective(m) + 1e-9);
        }
        for raw in &probes {
            prop_assert!(res.objective <= objective(&materialize(&tree, raw)) + 1e-9);
        }
    }

    /// The exact center of mass beats every node and every probe point
    /// inside every edge, and its snapped node is never farther than half
    /// the containing edge.
    #[test]
    fn center_of_mass_dominates_probes(tree in arb_tree(24), raw in arb_raw_measure(8)) {
        let mu = materialize(&tree, &raw);
        let com = center_of_mass(&tree, &mu).unwrap();
        let best = match com.location {
            CenterLocation::Node(z) => com_objective_at_node(&tree, &mu, z),
            CenterLocation::EdgeInterior { edge, offset } => {
                let w = tree.edge_weight(edge);
                prop_assert!(offset > 0.0 && offset < w);
                prop_assert!(com.snap_distance(&tree) <= w / 2.0 + 1e-12);
                com_objective_inside_edge(&tree, &mu, edge, offset)
            }
        };
        let slack = 1e-9 * (1.0 + best.abs());
        for v in 0..tree.node_count() {
            prop_assert!(best <= com_objective_at_node(&tree, &mu, NodeId(v)) + slack);
        }
        for e in 0..tree.edge_count() {
            let edge = treebary::EdgeId(e);
            let w = tree.edge_weight(edge);
            for j in 1..10 {
                let offset = w * j as f64 / 10.0;
                prop_assert!(
                    best <= com_objective_inside_edge(&tree, &mu, edge, offset) + slack
                );
            }
        }
    }

    /// The support-constrained barycenter never exceeds its budget, never
    /// beats the unconstrained optimum, and is identical to it when the
    /// unconstrained solution already fits.
    #[test]
    fn constrained_barycenter_respects_budget(
        tree in arb_tree(40),
        raws in proptest::collection::vec(arb_raw_measure(8), 3),
        kappa in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let measures: Vec<DiscreteMeasure> =
            raws.iter().map(|raw| materialize(&tree, raw)).collect();
        let set = WeightedMeasureSet::uniform(measures).unwrap();
        let free = tw_barycenter(&tree, &set).unwrap();
        let capped = constrained_tw_barycenter(&tree, &set, kappa, seed).unwrap();
        prop_assert!(capped.barycenter.support_count() <= kappa);
        prop_assert!(capped.objective >= free.objective - 1e-12);
        if free.barycenter.support_count() <= kappa {
            prop_assert_eq!(capped.objective, free.objective);
            prop_assert!(capped.barycenter.approx_eq(&free.barycenter, 0.0));
        }
    }

    /// k-means output is internally consistent: indices in range, mass
    /// conserved, and the reported objective recomputable from the
    /// returned assignment and centroids.
    #[test]
    fn kmeans_reports_are_consistent(
        tree in arb_tree(24),
        raw in arb_raw_measure(10),
        k in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let mu = materialize(&tree, &raw);
        let res = tree_kmeans(&tree, mu.supports(), mu.weights(), k, seed).unwrap();
        prop_assert_eq!(res.assignments.len(), mu.support_count());
        prop_assert!(res.centroids.len() <= k.max(mu.support_count()));
        prop_assert_eq!(res.centroids.len(), res.cluster_masses.len());
        let mass: f64 = res.cluster_masses.iter().sum();
        prop_assert!((mass - 1.0).abs() <= 1e-9);

        let mut recomputed = 0.0;
        for ((&x, &m), &cluster) in mu.supports().iter().zip(mu.weights()).zip(&res.assignments) {
            prop_assert!(cluster < res.centroids.len());
            let d = tree.distance(x, res.centroids[cluster]).unwrap();
            recomputed += m * d * d;
        }
        prop_assert!((res.objective - recomputed).abs() <= 1e-9 * (1.0 + recomputed));
    }

    /// The adjusted Rand index is 1 exactly on equal partitions, is
    /// invariant under relabeling, symmetric, and never exceeds 1.
    #[test]
    fn rand_index_properties(labels in proptest::collection::vec(0usize..4, 1..40)) {
        prop_assert_eq!(adjusted_rand_index(&labels, &labels).unwrap(), 1.0);
        let relabeled: Vec<usize> = labels.iter().map(|&x| 3 - x).collect();
        prop_assert_eq!(adjusted_rand_index(&labels, &relabeled).unwrap(), 1.0);
        let shifted: Vec<usize> = labels.iter().map(|&x| (x + 1) % 4).collect();
        let ab = adjusted_rand_index(&labels, &shifted).unwrap();
        let ba = adjusted_rand_index(&shifted, &labels).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }
}
