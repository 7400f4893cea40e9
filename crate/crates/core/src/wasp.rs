//! Divide-and-conquer posterior aggregation.
//!
//! Each machine posts an empirical measure of its posterior samples; the
//! aggregate posterior is the barycenter of those measures under the
//! averaged tree distance. Trees are grown over the pooled samples, each
//! shard's measure is attached at its samples' terminal nodes, and the
//! per-tree barycenters are exported as one weighted sample cloud (every
//! support contributes its node embedding with weight scaled by `1/k`).

use serde::Serialize;

use crate::barycenter::{ensemble_barycenter, EnsembleBarycenter};
use crate::error::{Error, Result};
use crate::measure::WeightedMeasureSet;
use crate::sampling::{sample_ensemble, SamplingConfig, TreeEnsemble};

/// Posterior samples from `m` machines: one matrix per shard, rows are
/// samples, columns are parameters.
#[derive(Clone, Debug)]
pub struct PosteriorShards {
    shards: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl PosteriorShards {
    /// Validates that every shard is non-empty and every sample shares
    /// one parameter dimension.
    pub fn new(shards: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::domain("need at least one posterior shard"));
        }
        let Some(first) = shards[0].first() else {
            return Err(Error::domain("shard 0 has no samples"));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::domain(
                "posterior samples need at least one parameter",
            ));
        }
        for (i, shard) in shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(Error::domain(format!("shard {i} has no samples")));
            }
            for sample in shard {
                if sample.len() != dim {
                    return Err(Error::domain(format!(
                        "shard {i} has a sample of dimension {}, expected {dim}",
                        sample.len()
                    )));
                }
                if sample.iter().any(|x| !x.is_finite()) {
                    return Err(Error::domain(format!(
                        "shard {i} contains a non-finite parameter value"
                    )));
                }
            }
        }
        Ok(PosteriorShards { shards, dim })
    }

    pub fn shards(&self) -> &[Vec<Vec<f64>>] {
        &self.shards
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    /// Parameter dimension shared by all samples.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_samples(&self) -> usize {
        self.shards.iter().map(Vec::len).sum()
    }

    /// All samples concatenated in shard order.
    pub fn pooled(&self) -> Vec<Vec<f64>> {
        self.shards.iter().flatten().cloned().collect()
    }
}

/// Aggregated posterior: the tree ensemble it was computed on, the
/// per-tree barycenters, and the flattened weighted-sample export.
#[derive(Clone, Debug)]
pub struct WaspResult {
    pub ensemble: TreeEnsemble,
    pub barycenter: EnsembleBarycenter,
    /// `(weight, parameter point)` pairs; weights sum to 1 across the
    /// whole export.
    pub weighted_samples: Vec<(f64, Vec<f64>)>,
}

impl WaspResult {
    /// Weighted mean and covariance of the exported samples.
    pub fn moments(&self) -> Result<PosteriorMoments> {
        posterior_moments(&self.weighted_samples)
    }
}

/// Aggregates subset posteriors into a barycenter posterior.
///
/// Grows `cfg.num_trees` trees over the pooled samples, attaches each
/// shard's uniform empirical measure, and computes the uniform-weight
/// barycenter per tree.
pub fn wasp_aggregate(shards: &PosteriorShards, cfg: &SamplingConfig) -> Result<WaspResult> {
    let pooled = shards.pooled();
    let ensemble = sample_ensemble(&pooled, cfg)?;
    let mut shard_measures = Vec::with_capacity(shards.shard_count());
    let mut offset = 0;
    for shard in shards.shards() {
        let indices: Vec<usize> = (offset..offset + shard.len()).collect();
        shard_measures.push(ensemble.attach_indices(&indices, &vec![1.0; shard.len()])?);
        offset += shard.len();
    }
    let sets: Vec<WeightedMeasureSet> = (0..ensemble.tree_count())
        .map(|t| {
            WeightedMeasureSet::uniform(
                shard_measures
                    .iter()
                    .map(|m| m.components()[t].clone())
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let barycenter = ensemble_barycenter(&ensemble, &sets, None, cfg.seed)?;
    let weighted_samples = barycenter.weighted_supports(&ensemble)?;
    Ok(WaspResult {
        ensemble,
        barycenter,
        weighted_samples,
    })
}

/// Weighted mean vector and covariance matrix of a sample export.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// First and second central moments of `(weight, point)` pairs. Weights
/// must be non-negative with positive total; the covariance is the
/// weighted population covariance (no small-sample correction).
pub fn posterior_moments(weighted_samples: &[(f64, Vec<f64>)]) -> Result<PosteriorMoments> {
    let Some((_, first)) = weighted_samples.first() else {
        return Err(Error::domain("moments of an empty sample export"));
    };
    let dim = first.len();
    let mut total = 0.0;
    for (w, x) in weighted_samples {
        if !w.is_finite() || *w < 0.0 {
            return Err(Error::domain(format!("invalid sample weight {w}")));
        }
        if x.len() != dim {
            return Err(Error::domain(format!(
                "sample of dimension {}, expected {dim}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite sample coordinate"));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::domain("total sample weight must be positive"));
    }

    let mut mean = vec![0.0; dim];
    for (w, x) in weighted_samples {
        for (m, &v) in mean.iter_mut().zip(x) {
            *m += w * v / total;
        }
    }
    let mut covariance = vec![vec![0.0; dim]; dim];
    for (w, x) in weighted_samples {
        for r in 0..dim {
            let dr = x[r] - mean[r];
            for c in 0..dim {
                covariance[r][c] += w * dr * (x[c] - mean[c]) / total;
            }
        }
    }
    Ok(PosteriorMoments { mean, covariance })
}
