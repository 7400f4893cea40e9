//! Optimal transport on tree metrics.
//!
//! The 1-Wasserstein distance between two probability measures supported on
//! the nodes of a rooted tree has a closed form: embed each measure as a
//! vector of edge-weighted subtree masses and take the l1 distance between
//! the two vectors. Everything in this crate builds on that embedding:
//!
//! * [`tree`] — rooted trees with non-negative edge lengths and the metric
//!   they induce;
//! * [`measure`] — discrete probability measures on tree nodes;
//! * [`distance`] — the embedding, its inverse, and the distance itself;
//! * [`barycenter`] — exact Wasserstein barycenters via per-edge weighted
//!   medians;
//! * [`kmeans`] — squared-distance centers of mass and k-means on a tree,
//!   used to cap barycenter support sizes;
//! * [`sampling`] — recursive farthest-point clustering that turns a point
//!   cloud into an ensemble of random tree metrics;
//! * [`multilevel`] — joint local/global clustering of grouped data under
//!   tree-Wasserstein geometry;
//! * [`wasp`] — aggregation of subset posteriors into a barycenter
//!   posterior;
//! * [`oracle`] — slow reference solvers (exact network-simplex style OT,
//!   entropic fixed-support barycenters) used to validate the fast paths;
//! * [`synthetic`] — generators for test and benchmark data;
//! * [`io`] — CSV/JSON readers and writers for the types above.

pub mod barycenter;
pub mod distance;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod measure;
pub mod multilevel;
pub mod oracle;
pub mod sampling;
pub mod synthetic;
pub mod tree;
pub mod wasp;

pub use barycenter::{
    ensemble_barycenter, tw_barycenter, weighted_geometric_median, BarycenterResult,
    EnsembleBarycenter,
};
pub use distance::{inverse_map, l1_distance, tree_map, tsw, tw, EdgeVector};
pub use error::{Error, Result};
pub use kmeans::{
    center_of_mass, constrained_tw_barycenter, delta, tree_kmeans, CenterLocation, CenterOfMass,
    Direction, TreeClustering,
};
pub use measure::{DiscreteMeasure, WeightedMeasureSet};
pub use multilevel::{
    adjusted_rand_index, multilevel_fit, multilevel_objective, MultilevelConfig, MultilevelState,
};
pub use sampling::{
    farthest_point_clustering, sample_ensemble, sample_tree, EnsembleMeasure, FpcResult,
    SamplingConfig, TreeEnsemble,
};
pub use tree::{EdgeId, NodeId, Tree, TreeBuilder};
pub use wasp::{posterior_moments, wasp_aggregate, PosteriorMoments, PosteriorShards, WaspResult};
