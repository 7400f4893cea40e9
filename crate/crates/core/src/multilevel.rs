//! Joint local/global clustering of grouped data in tree-Wasserstein
//! geometry.
//!
//! Each data group `i` is summarized by a support-capped local measure
//! `G_i`, and the local measures are themselves clustered around `K`
//! global measures `Q_k`. Both levels optimize one objective,
//!
//! ```text
//! Σ_i d(G_i, P_i) + (λ/m) Σ_i min_k d(Q_k, G_i)
//! ```
//!
//! where `P_i` is group `i`'s empirical measure and `d` the averaged tree
//! distance over an ensemble. Alternating minimization solves it: assign
//! each `G_i` to its nearest `Q`, refresh `G_i` as a constrained
//! two-measure barycenter of `{P_i, Q_{j_i}}`, re-assign, then refresh
//! each `Q_k` as the unconstrained barycenter of its cluster. Every
//! update keeps the previous iterate when the candidate does not strictly
//! lower its share of the objective, so the recorded objective trace is
//! non-increasing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::barycenter::{ensemble_barycenter, EnsembleBarycenter};
use crate::distance::{l1_distance, tree_map, EdgeVector};
use crate::error::{Error, Result};
use crate::measure::WeightedMeasureSet;
use crate::sampling::{EnsembleMeasure, TreeEnsemble};

/// Parameters of the two-level clustering.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultilevelConfig {
    /// Per-group support budget for the local measures (`|G_i| ≤ local_k[i]`).
    pub local_k: Vec<usize>,
    /// Number of global measures (≥ 2).
    pub global_k: usize,
    /// Balance between the local fit and the global clustering term (> 0).
    pub lambda: f64,
    /// Maximum alternating-minimization iterations.
    pub max_iters: usize,
    /// Seed for initialization and constrained-barycenter reductions.
    pub seed: u64,
}

impl MultilevelConfig {
    /// Config with one shared support budget, λ = 1, and 50 iterations.
    pub fn uniform(num_groups: usize, local_k: usize, global_k: usize, seed: u64) -> Self {
        MultilevelConfig {
            local_k: vec![local_k; num_groups],
            global_k,
            lambda: 1.0,
            max_iters: 50,
            seed,
        }
    }

    fn validate(&self, num_groups: usize) -> Result<()> {
        if num_groups == 0 {
            return Err(Error::domain("clustering needs at least one group"));
        }
        if self.local_k.len() != num_groups {
            return Err(Error::domain(format!(
                "{} support budgets for {num_groups} groups",
                self.local_k.len()
            )));
        }
        if self.local_k.contains(&0) {
            return Err(Error::domain("every local support budget must be ≥ 1"));
        }
        if self.global_k < 2 {
            return Err(Error::domain(format!(
                "need at least 2 global clusters, got {}",
                self.global_k
            )));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::domain(format!(
                "balance weight must be positive and finite, got {}",
                self.lambda
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::domain("need at least one iteration"));
        }
        Ok(())
    }
}

/// Fitted two-level clustering.
#[derive(Clone, Debug, Serialize)]
pub struct MultilevelState {
    /// Support-capped local measure of each group.
    pub local_measures: Vec<EnsembleMeasure>,
    /// Global cluster measures.
    pub global_measures: Vec<EnsembleMeasure>,
    /// Index of each group's nearest global measure.
    pub group_assignment: Vec<usize>,
    /// Objective after initialization and after each iteration.
    pub objective_trace: Vec<f64>,
}

/// SplitMix-style derivation of independent stream seeds, so parallel
/// updates draw from disjoint deterministic streams.
fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_LOCAL_INIT: u64 = 1;
const TAG_GLOBAL_INIT: u64 = 2;
const TAG_LOCAL_UPDATE: u64 = 3;

/// A measure together with its per-tree edge vectors, so distance
/// evaluations inside the loop are l1 norms instead of repeated mapping.
#[derive(Clone)]
struct Cached {
    measure: EnsembleMeasure,
    maps: Vec<EdgeVector>,
}

fn cache_measure(ensemble: &TreeEnsemble, measure: EnsembleMeasure) -> Result<Cached> {
    if measure.components().len() != ensemble.tree_count() {
        return Err(Error::domain(format!(
            "measure has {} components but the ensemble has {} trees",
            measure.components().len(),
            ensemble.tree_count()
        )));
    }
    let maps = ensemble
        .trees()
        .iter()
        .zip(measure.components())
        .map(|(tree, component)| tree_map(tree, component))
        .collect::<Result<_>>()?;
    Ok(Cached { measure, maps })
}

fn cache_barycenter(result: &EnsembleBarycenter) -> Result<Cached> {
    let measure = EnsembleMeasure::from_components(
        result
            .per_tree()
            .iter()
            .map(|r| r.barycenter.clone())
            .collect(),
    )?;
    let maps = result
        .per_tree()
        .iter()
        .map(|r| r.edge_vector.clone())
        .collect();
    Ok(Cached { measure, maps })
}

/// Averaged tree distance from cached maps; arithmetic matches
/// [`crate::distance::tsw`] term for term.
fn tsw_maps(a: &[EdgeVector], b: &[EdgeVector]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += l1_distance(x, y)?;
    }
    Ok(total / a.len() as f64)
}

fn nearest_global(globals: &[Cached], local: &Cached) -> Result<(usize, f64)> {
    let mut best = (0usize, f64::INFINITY);
    for (k, q) in globals.iter().enumerate() {
        let d = tsw_maps(&q.maps, &local.maps)?;
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best)
}

fn objective_from_caches(
    locals: &[Cached],
    empirical: &[Cached],
    globals: &[Cached],
    lambda: f64,
) -> Result<f64> {
    let m = locals.len() as f64;
    let mut local_term = 0.0;
    for (g, p) in locals.iter().zip(empirical) {
        local_term += tsw_maps(&g.maps, &p.maps)?;
    }
    let mut global_term = 0.0;
    for g in locals {
        global_term += nearest_global(globals, g)?.1;
    }
    Ok(local_term + lambda / m * global_term)
}

fn empirical_caches(ensemble: &TreeEnsemble, groups: &[Vec<Vec<f64>>]) -> Result<Vec<Cached>> {
    groups
        .par_iter()
        .map(|points| {
            let measure = ensemble.attach_points(points, &vec![1.0; points.len()])?;
            cache_measure(ensemble, measure)
        })
        .collect()
}

/// Farthest-point seedings attempted by [`multilevel_fit`]; each runs to
/// completion and the one with the lowest final objective is returned.
const MULTILEVEL_RESTARTS: usize = 5;

/// Greedy k-center choice of `k` locals: after `first`, each pick
/// maximizes the distance to the chosen set (ties to the lowest index).
/// Picks wrap around when `k` exceeds the number of groups.
fn farthest_locals(dist: &[Vec<f64>], k: usize, first: usize) -> Vec<usize> {
    let m = dist.len();
    let mut picks = vec![first];
    let mut nearest = dist[first].clone();
    while picks.len() < k.min(m) {
        let mut far = 0usize;
        for i in 1..m {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        picks.push(far);
        for i in 0..m {
            nearest[i] = nearest[i].min(dist[far][i]);
        }
    }
    for extra in 0..k.saturating_sub(m) {
        picks.push(picks[extra % m]);
    }
    picks
}

/// Runs the alternating minimization until the assignment repeats and the
/// objective's relative improvement drops below 1e-6, or `max_iters`.
///
/// Local measures start as support-capped barycenters of their own group.
/// Global measures start as copies of local measures spread by greedy
/// k-center selection under the averaged tree distance; several seedings
/// (differing in the seeded first pick) run to completion and the one
/// with the lowest final objective wins, so a seeding that merges two
/// well-separated clusters does not decide the outcome. A global cluster
/// that loses all members is re-seeded with the local measure farthest
/// from its assigned global.
pub fn multilevel_fit(
    ensemble: &TreeEnsemble,
    groups: &[Vec<Vec<f64>>],
    cfg: &MultilevelConfig,
) -> Result<MultilevelState> {
    let m = groups.len();
    cfg.validate(m)?;
    let lambda = cfg.lambda;
    let empirical = empirical_caches(ensemble, groups)?;

    let locals: Vec<Cached> = (0..m)
        .into_par_iter()
        .map(|i| {
            let sets: Vec<WeightedMeasureSet> = empirical[i]
                .measure
                .components()
                .iter()
                .map(|c| WeightedMeasureSet::uniform(vec![c.clone()]))
                .collect::<Result<_>>()?;
            let bary = ensemble_barycenter(
                ensemble,
                &sets,
                Some(cfg.local_k[i]),
                mix_seed(cfg.seed, mix_seed(TAG_LOCAL_INIT, i as u64)),
            )?;
            cache_barycenter(&bary)
        })
        .collect::<Result<_>>()?;

    let mut local_dist = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = tsw_maps(&locals[i].maps, &locals[j].maps)?;
            local_dist[i][j] = d;
            local_dist[j][i] = d;
        }
    }
    let mut first_picks: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, TAG_GLOBAL_INIT));
    first_picks.shuffle(&mut rng);
    first_picks.truncate(MULTILEVEL_RESTARTS.min(m));

    let mut best: Option<FitRun> = None;
    for first in first_picks {
        let seeds = farthest_locals(&local_dist, cfg.global_k, first);
        let globals: Vec<Cached> = seeds.iter().map(|&i| locals[i].clone()).collect();
        let run = alternate(ensemble, cfg, &empirical, locals.clone(), globals, lambda)?;
        if best
            .as_ref()
            .is_none_or(|b| run.final_objective() < b.final_objective())
        {
            best = Some(run);
        }
    }
    let run = best.expect("at least one seeding ran");

    Ok(MultilevelState {
        local_measures: run.locals.into_iter().map(|c| c.measure).collect(),
        global_measures: run.globals.into_iter().map(|c| c.measure).collect(),
        group_assignment: run.assign,
        objective_trace: run.trace,
    })
}

/// Outcome of one seeding's alternating minimization.
struct FitRun {
    locals: Vec<Cached>,
    globals: Vec<Cached>,
    assign: Vec<usize>,
    trace: Vec<f64>,
}

impl FitRun {
    fn final_objective(&self) -> f64 {
        *self
            .trace
            .last()
            .expect("trace holds the initial objective")
    }
}

fn alternate(
    ensemble: &TreeEnsemble,
    cfg: &MultilevelConfig,
    empirical: &[Cached],
    mut locals: Vec<Cached>,
    mut globals: Vec<Cached>,
    lambda: f64,
) -> Result<FitRun> {
    let m = locals.len();
    let mut trace = vec![objective_from_caches(&locals, empirical, &globals, lambda)?];
    let mut assign = vec![0usize; m];
    let mut assign_dist = vec![0.0f64; m];
    let mut last_assign: Option<Vec<usize>> = None;
    let w_local = m as f64 / (m as f64 + lambda);
    let w_global = lambda / (m as f64 + lambda);

    for iter in 0..cfg.max_iters {
        for i in 0..m {
            let (k, d) = nearest_global(&globals, &locals[i])?;
            assign[i] = k;
            assign_dist[i] = d;
        }

        // Local refresh: constrained barycenter of the group's empirical
        // measure and its assigned global, kept only when it strictly
        // lowers the group's share of the objective.
        locals = (0..m)
            .into_par_iter()
            .map(|i| -> Result<Cached> {
                let q = &globals[assign[i]];
                let sets: Vec<WeightedMeasureSet> = empirical[i]
                    .measure
                    .components()
                    .iter()
                    .zip(q.measure.components())
                    .map(|(p, qc)| {
                        WeightedMeasureSet::new(
                            vec![p.clone(), qc.clone()],
                            vec![w_local, w_global],
                        )
                    })
                    .collect::<Result<_>>()?;
                let seed = mix_seed(
                    cfg.seed,
                    mix_seed(TAG_LOCAL_UPDATE, (iter as u64) << 32 | i as u64),
                );
                let bary = ensemble_barycenter(ensemble, &sets, Some(cfg.local_k[i]), seed)?;
                let candidate = cache_barycenter(&bary)?;
                let share = |g: &Cached| -> Result<f64> {
                    Ok(tsw_maps(&g.maps, &empirical[i].maps)?
                        + lambda / m as f64 * tsw_maps(&g.maps, &q.maps)?)
                };
                if share(&candidate)? < share(&locals[i])? {
                    Ok(candidate)
                } else {
                    Ok(locals[i].clone())
                }
            })
            .collect::<Result<_>>()?;

        for i in 0..m {
            let (k, d) = nearest_global(&globals, &locals[i])?;
            assign[i] = k;
            assign_dist[i] = d;
        }

        // Global refresh per cluster, guarded by the cluster's distance sum.
        let mut members = vec![Vec::new(); cfg.global_k];
        for i in 0..m {
            members[assign[i]].push(i);
        }
        let refreshed: Vec<Option<Cached>> = members
            .par_iter()
            .enumerate()
            .map(|(k, cluster)| -> Result<Option<Cached>> {
                if cluster.is_empty() {
                    return Ok(None);
                }
                let sets: Vec<WeightedMeasureSet> = (0..ensemble.tree_count())
                    .map(|t| {
                        WeightedMeasureSet::uniform(
                            cluster
                                .iter()
                                .map(|&i| locals[i].measure.components()[t].clone())
                                .collect(),
                        )
                    })
                    .collect::<Result<_>>()?;
                let bary = ensemble_barycenter(ensemble, &sets, None, 0)?;
                let candidate = cache_barycenter(&bary)?;
                let cluster_cost = |q: &Cached| -> Result<f64> {
                    let mut total = 0.0;
                    for &i in cluster {
                        total += tsw_maps(&q.maps, &locals[i].maps)?;
                    }
                    Ok(total)
                };
                if cluster_cost(&candidate)? < cluster_cost(&globals[k])? {
                    Ok(Some(candidate))
                } else {
                    Ok(Some(globals[k].clone()))
                }
            })
            .collect::<Result<_>>()?;
        let mut donors: Vec<usize> = (0..m).collect();
        donors.sort_by(|&a, &b| assign_dist[b].total_cmp(&assign_dist[a]).then(a.cmp(&b)));
        let mut next_donor = 0;
        for (k, refreshed_k) in refreshed.into_iter().enumerate() {
            match refreshed_k {
                Some(q) => globals[k] = q,
                None => {
                    let donor = donors[next_donor % m];
                    next_donor += 1;
                    log::debug!("global cluster {k} emptied; re-seeding from group {donor}");
                    globals[k] = locals[donor].clone();
                }
            }
        }

        let objective = objective_from_caches(&locals, empirical, &globals, lambda)?;
        let previous = *trace.last().expect("trace holds the initial objective");
        trace.push(objective);
        log::debug!("iteration {iter}: objective {objective:.6e}");

        let stable = last_assign.as_deref() == Some(assign.as_slice());
        last_assign = Some(assign.clone());
        let relative_drop = (previous - objective) / previous.abs().max(f64::MIN_POSITIVE);
        if stable && relative_drop.abs() < 1e-6 {
            break;
        }
    }

    Ok(FitRun {
        locals,
        globals,
        assign,
        trace,
    })
}

/// Evaluates the clustering objective on a state, reproducing the
/// arithmetic of [`multilevel_fit`]'s trace entries exactly.
pub fn multilevel_objective(
    ensemble: &TreeEnsemble,
    state: &MultilevelState,
    groups: &[Vec<Vec<f64>>],
    cfg: &MultilevelConfig,
) -> Result<f64> {
    cfg.validate(groups.len())?;
    if state.local_measures.len() != groups.len() {
        return Err(Error::domain(format!(
            "state has {} local measures for {} groups",
            state.local_measures.len(),
            groups.len()
        )));
    }
    let empirical = empirical_caches(ensemble, groups)?;
    let locals = state
        .local_measures
        .iter()
        .map(|measure| cache_measure(ensemble, measure.clone()))
        .collect::<Result<Vec<_>>>()?;
    let globals = state
        .global_measures
        .iter()
        .map(|measure| cache_measure(ensemble, measure.clone()))
        .collect::<Result<Vec<_>>>()?;
    objective_from_caches(&locals, &empirical, &globals, cfg.lambda)
}

/// Adjusted Rand index between two labelings of the same items: 1 for
/// identical partitions, approximately 0 for independent ones. When the
/// correction denominator vanishes (both partitions trivial) the
/// partitions are necessarily identical and the index is 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::domain(format!(
            "rand index needs two equal-length non-empty labelings, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let c2 = |x: u64| if x < 2 { 0.0 } else { (x * (x - 1) / 2) as f64 };
    let index: f64 = cells.values().map(|&x| c2(x)).sum();
    let row_pairs: f64 = rows.values().map(|&x| c2(x)).sum();
    let col_pairs: f64 = cols.values().map(|&x| c2(x)).sum();
    let total_pairs = c2(a.len() as u64);
    if total_pairs == 0.0 {
        return Ok(1.0);
    }
    let expected = row_pairs * col_pairs / total_pairs;
    let max_index = (row_pairs + col_pairs) / 2.0;
    if max_index - expected == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}
