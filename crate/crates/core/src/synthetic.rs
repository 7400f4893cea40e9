//! Deterministic generators for tests and benchmarks.
//!
//! Everything here is seeded; the same seed always reproduces the same
//! trees, measures, and data sets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::tree::{NodeId, Tree};
use crate::wasp::PosteriorShards;

/// Random rooted tree on `nodes` nodes: node 0 is the root and the parent
/// of node `i` is drawn uniformly from `0..i`, so node ids are already in
/// topological order. Edge weights are uniform in `weight_range`
/// (inclusive); with `embedding_dim = Some(d)` every node gets standard
/// normal coordinates in `R^d`.
pub fn random_tree<R: Rng>(
    nodes: usize,
    weight_range: (f64, f64),
    embedding_dim: Option<usize>,
    rng: &mut R,
) -> Result<Tree> {
    if nodes == 0 {
        return Err(Error::domain("tree must have at least one node"));
    }
    let (lo, hi) = weight_range;
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
        return Err(Error::domain(format!("invalid weight range [{lo}, {hi}]")));
    }
    let mut parents = vec![None; nodes];
    let mut weights = vec![0.0; nodes];
    for i in 1..nodes {
        parents[i] = Some(rng.random_range(0..i));
        weights[i] = rng.random_range(lo..=hi);
    }
    let embedding = embedding_dim.map(|d| {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (0..nodes)
            .map(|_| (0..d).map(|_| normal.sample(rng)).collect())
            .collect()
    });
    Tree::from_parents(0, &parents, &weights, embedding)
}

/// Random measure on `supports` distinct nodes of `tree`, with weights
/// uniform in `[0.01, 1]` before normalization (so no support is ever
/// vanishingly small).
pub fn random_measure<R: Rng>(
    tree: &Tree,
    supports: usize,
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    let n = tree.node_count();
    if supports == 0 || supports > n {
        return Err(Error::domain(format!(
            "cannot place {supports} distinct supports on {n} nodes"
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    for j in 0..supports {
        ids.swap(j, rng.random_range(j..n));
    }
    let mut chosen = ids[..supports].to_vec();
    chosen.sort_unstable();
    let supports_ids = chosen.into_iter().map(NodeId).collect();
    let weights: Vec<f64> = (0..supports)
        .map(|_| rng.random_range(0.01..=1.0))
        .collect();
    DiscreteMeasure::new(tree, supports_ids, weights)
}

/// Mixture layout for grouped two-dimensional data: a fixed number of
/// global clusters, each owning a few Gaussian component means.
#[derive(Clone, Debug)]
pub struct GmmDesign {
    /// `component_means[k]` are the mixture component means of cluster `k`.
    pub component_means: Vec<Vec<Vec<f64>>>,
    /// Standard deviation of points around their component mean.
    pub point_std: f64,
}

impl GmmDesign {
    pub fn cluster_count(&self) -> usize {
        self.component_means.len()
    }
}

/// Standard two-dimensional design: six cluster anchors equally spaced on
/// a circle of radius 10, three component means per cluster drawn as
/// anchor + N(0, 2^2 I), points scattered with standard deviation 0.8.
pub fn gmm_design_2d(seed: u64) -> GmmDesign {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, 2.0).expect("component spread");
    let clusters = 6;
    let component_means = (0..clusters)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / clusters as f64;
            let anchor = [10.0 * angle.cos(), 10.0 * angle.sin()];
            (0..3)
                .map(|_| {
                    anchor
                        .iter()
                        .map(|&a| a + spread.sample(&mut rng))
                        .collect()
                })
                .collect()
        })
        .collect();
    GmmDesign {
        component_means,
        point_std: 0.8,
    }
}

/// Point clouds per group paired with each group's ground-truth cluster
/// label.
pub type LabeledGroups = (Vec<Vec<Vec<f64>>>, Vec<usize>);

/// Draws grouped data from a [`GmmDesign`]: group `g` belongs to cluster
/// `g % clusters` (its ground-truth label) and each of its points picks a
/// component of that cluster uniformly, then adds N(0, point_std^2 I)
/// noise. Returns the groups and their labels.
pub fn gmm_groups(
    design: &GmmDesign,
    num_groups: usize,
    points_per_group: usize,
    seed: u64,
) -> Result<LabeledGroups> {
    if num_groups == 0 || points_per_group == 0 {
        return Err(Error::domain(
            "need at least one group with at least one point",
        ));
    }
    if design.cluster_count() == 0 {
        return Err(Error::domain("design has no clusters"));
    }
    if !design.point_std.is_finite() || design.point_std <= 0.0 {
        return Err(Error::domain(format!(
            "invalid point standard deviation {}",
            design.point_std
        )));
    }
    let noise = Normal::new(0.0, design.point_std).expect("validated above");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::with_capacity(num_groups);
    let mut labels = Vec::with_capacity(num_groups);
    for g in 0..num_groups {
        let label = g % design.cluster_count();
        let components = &design.component_means[label];
        let points = (0..points_per_group)
            .map(|_| {
                let mean = &components[rng.random_range(0..components.len())];
                mean.iter().map(|&m| m + noise.sample(&mut rng)).collect()
            })
            .collect();
        groups.push(points);
        labels.push(label);
    }
    Ok((groups, labels))
}

/// Conjugate normal-mean model: observations are N(theta, noise_std^2)
/// with a N(prior_mean, prior_std^2) prior on theta, so every posterior —
/// full or subset — is available in closed form and subset posteriors can
/// be sampled exactly.
#[derive(Clone, Copy, Debug)]
pub struct GaussianMeanModel {
    pub prior_mean: f64,
    pub prior_std: f64,
    pub noise_std: f64,
}

impl GaussianMeanModel {
    pub fn new(prior_mean: f64, prior_std: f64, noise_std: f64) -> Result<Self> {
        if !prior_mean.is_finite() {
            return Err(Error::domain(format!("invalid prior mean {prior_mean}")));
        }
        for (name, s) in [("prior", prior_std), ("noise", noise_std)] {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::domain(format!(
                    "{name} standard deviation must be positive, got {s}"
                )));
            }
        }
        Ok(GaussianMeanModel {
            prior_mean,
            prior_std,
            noise_std,
        })
    }

    /// Observations around a fixed true mean.
    pub fn generate_data<R: Rng>(&self, true_mean: f64, n: usize, rng: &mut R) -> Vec<f64> {
        let noise = Normal::new(true_mean, self.noise_std).expect("validated std");
        (0..n).map(|_| noise.sample(rng)).collect()
    }

    /// Mean and standard deviation of the posterior given all of `data`.
    pub fn posterior(&self, data: &[f64]) -> (f64, f64) {
        self.weighted_posterior(data, 1)
    }

    /// Mean and standard deviation of a subset posterior whose likelihood
    /// is raised to the power `boost`, which keeps the amount of
    /// likelihood information comparable to the full data set when the
    /// subset is one of `boost` equal shards.
    pub fn subset_posterior(&self, subset: &[f64], boost: usize) -> (f64, f64) {
        self.weighted_posterior(subset, boost)
    }

    fn weighted_posterior(&self, data: &[f64], boost: usize) -> (f64, f64) {
        let prior_precision = self.prior_std.powi(-2);
        let noise_precision = self.noise_std.powi(-2);
        let m = boost as f64;
        let precision = prior_precision + m * data.len() as f64 * noise_precision;
        let sum: f64 = data.iter().sum();
        let mean = (self.prior_mean * prior_precision + m * sum * noise_precision) / precision;
        (mean, precision.sqrt().recip())
    }

    /// Splits `data` into `num_shards` near-equal contiguous shards and
    /// draws `samples_per_shard` exact samples from each shard's
    /// likelihood-boosted posterior.
    pub fn sample_shards(
        &self,
        data: &[f64],
        num_shards: usize,
        samples_per_shard: usize,
        seed: u64,
    ) -> Result<PosteriorShards> {
        if num_shards == 0 || num_shards > data.len() {
            return Err(Error::domain(format!(
                "cannot split {} observations into {num_shards} shards",
                data.len()
            )));
        }
        if samples_per_shard == 0 {
            return Err(Error::domain("need at least one sample per shard"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = data.len() / num_shards;
        let extra = data.len() % num_shards;
        let mut shards = Vec::with_capacity(num_shards);
        let mut offset = 0;
        for i in 0..num_shards {
            let len = base + usize::from(i < extra);
            let (mean, std) = self.subset_posterior(&data[offset..offset + len], num_shards);
            offset += len;
            let posterior = Normal::new(mean, std).expect("positive posterior std");
            shards.push(
                (0..samples_per_shard)
                    .map(|_| vec![posterior.sample(&mut rng)])
                    .collect(),
            );
        }
        PosteriorShards::new(shards)
    }
}
