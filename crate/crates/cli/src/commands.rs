//! Implementations of the pipeline subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use treebary::io;
use treebary::wasp::PosteriorShards;
use treebary::{
    ensemble_barycenter, multilevel_fit, posterior_moments, sample_ensemble, wasp_aggregate,
    DiscreteMeasure, MultilevelConfig, SamplingConfig, TreeEnsemble, WeightedMeasureSet,
};

use crate::manifest::Manifest;
use crate::{resolve_seed, BarycenterArgs, MultilevelArgs, SampleTreeArgs, TreeFlags, WaspArgs};

impl TreeFlags {
    fn config(&self, seed: u64) -> anyhow::Result<SamplingConfig> {
        let config = SamplingConfig::new(self.kappa, self.depth, self.num_trees, seed)?
            .with_min_edge_weight(self.min_edge_weight)?;
        Ok(config)
    }
}

/// `<out>.manifest.json` for single-file outputs.
fn manifest_path_beside(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn create_parent_dirs(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    Ok(())
}

/// The `.csv` files of a directory in file-name order.
fn csv_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .collect::<std::io::Result<Vec<_>>>()
        .with_context(|| format!("reading directory {}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("{} contains no .csv files", dir.display());
    }
    Ok(files)
}

pub fn sample_tree(args: SampleTreeArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed)?;
    let config = args.tree.config(seed)?;
    let points = io::read_points_csv(&args.points)?;
    let ensemble = sample_ensemble(&points, &config)?;

    create_parent_dirs(&args.out)?;
    io::write_json(&args.out, &ensemble)?;

    let mut manifest = Manifest::new("sample-tree", serde_json::to_value(config)?, seed);
    manifest.add_input(&args.points)?;
    manifest.add_output(&args.out);
    manifest.write(&manifest_path_beside(&args.out))?;

    println!(
        "sampled {} trees over {} points into {}",
        ensemble.tree_count(),
        ensemble.point_count(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TreeBarycenterJson<'a> {
    tree: usize,
    barycenter: &'a DiscreteMeasure,
    objective: f64,
    feasibility_adjustment: f64,
}

#[derive(Serialize)]
struct BarycenterJson<'a> {
    mixture_coefficient: f64,
    per_tree: Vec<TreeBarycenterJson<'a>>,
}

pub fn barycenter(args: BarycenterArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed)?;
    let ensemble: TreeEnsemble = io::read_json(&args.ensemble)?;
    let dim = ensemble.trees()[0]
        .embedding_dim()
        .ok_or_else(|| anyhow::anyhow!("ensemble trees carry no embeddings"))?;

    let files = csv_files(&args.measures)?;
    let mut measures = Vec::with_capacity(files.len());
    for file in &files {
        let rows = io::read_numeric_csv(file)?;
        let (points, masses) = io::weighted_points(rows, dim)
            .with_context(|| format!("reading measure {}", file.display()))?;
        let measure = ensemble
            .attach_points(&points, &masses)
            .with_context(|| format!("attaching measure {}", file.display()))?;
        measures.push(measure);
    }

    let n = measures.len();
    let weights = match &args.weights {
        Some(w) => {
            if w.len() != n {
                bail!("{} weights given for {n} measure files", w.len());
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                bail!("weights must be finite and non-negative");
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                bail!("weights must not all be zero");
            }
            w.iter().map(|x| x / total).collect()
        }
        None => vec![1.0 / n as f64; n],
    };

    let sets = (0..ensemble.tree_count())
        .map(|t| {
            WeightedMeasureSet::new(
                measures.iter().map(|m| m.components()[t].clone()).collect(),
                weights.clone(),
            )
        })
        .collect::<treebary::Result<Vec<_>>>()?;
    let result = ensemble_barycenter(&ensemble, &sets, args.max_supports, seed)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating directory {}", args.out.display()))?;
    let barycenter_path = args.out.join("barycenter.json");
    let samples_path = args.out.join("weighted_samples.csv");
    let report = BarycenterJson {
        mixture_coefficient: result.mixture_coefficient(),
        per_tree: result
            .per_tree()
            .iter()
            .enumerate()
            .map(|(t, r)| TreeBarycenterJson {
                tree: t,
                barycenter: &r.barycenter,
                objective: r.objective,
                feasibility_adjustment: r.feasibility_adjustment,
            })
            .collect(),
    };
    io::write_json(&barycenter_path, &report)?;
    io::write_weighted_samples_csv(&samples_path, &result.weighted_supports(&ensemble)?)?;

    let config = json!({
        "weights": weights,
        "max_supports": args.max_supports,
        "measure_files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
    });
    let mut manifest = Manifest::new("barycenter", config, seed);
    manifest.add_input(&args.ensemble)?;
    for file in &files {
        manifest.add_input(file)?;
    }
    manifest.add_output(&barycenter_path);
    manifest.add_output(&samples_path);
    manifest.write(&args.out.join("manifest.json"))?;

    let mean_objective: f64 =
        result.per_tree().iter().map(|r| r.objective).sum::<f64>() / result.per_tree().len() as f64;
    println!(
        "barycenter of {n} measures on {} trees: mean per-tree objective {}",
        ensemble.tree_count(),
        io::format_float(mean_objective)
    );
    Ok(())
}

pub fn multilevel(args: MultilevelArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed)?;
    let files = csv_files(&args.groups)?;
    let mut groups = Vec::with_capacity(files.len());
    for file in &files {
        groups.push(io::read_points_csv(file)?);
    }
    let pooled: Vec<Vec<f64>> = groups.iter().flatten().cloned().collect();

    let sampling = args.tree.config(seed)?;
    let ensemble = sample_ensemble(&pooled, &sampling)?;
    let cfg = MultilevelConfig {
        local_k: vec![args.local_k; groups.len()],
        global_k: args.global_k,
        lambda: args.lambda,
        max_iters: args.max_iters,
        seed,
    };
    let state = multilevel_fit(&ensemble, &groups, &cfg)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating directory {}", args.out.display()))?;
    let ensemble_path = args.out.join("ensemble.json");
    let state_path = args.out.join("state.json");
    let assignments_path = args.out.join("assignments.csv");
    let trace_path = args.out.join("trace.csv");
    io::write_json(&ensemble_path, &ensemble)?;
    io::write_json(&state_path, &state)?;

    let mut assignments = String::from("group,cluster\n");
    for (g, c) in state.group_assignment.iter().enumerate() {
        assignments.push_str(&format!("{g},{c}\n"));
    }
    fs::write(&assignments_path, assignments)
        .with_context(|| format!("writing {}", assignments_path.display()))?;

    let mut trace = String::from("iteration,objective\n");
    for (i, value) in state.objective_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{}\n", io::format_float(*value)));
    }
    fs::write(&trace_path, trace).with_context(|| format!("writing {}", trace_path.display()))?;

    let config = json!({
        "sampling": serde_json::to_value(sampling)?,
        "local_k": args.local_k,
        "global_k": args.global_k,
        "lambda": args.lambda,
        "max_iters": args.max_iters,
        "group_files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
    });
    let mut manifest = Manifest::new("multilevel", config, seed);
    for file in &files {
        manifest.add_input(file)?;
    }
    for path in [&ensemble_path, &state_path, &assignments_path, &trace_path] {
        manifest.add_output(path);
    }
    manifest.write(&args.out.join("manifest.json"))?;

    println!(
        "clustered {} groups into {} global clusters in {} iterations; final objective {}",
        groups.len(),
        args.global_k,
        state.objective_trace.len().saturating_sub(1),
        io::format_float(*state.objective_trace.last().expect("non-empty trace"))
    );
    Ok(())
}

pub fn wasp(args: WaspArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed)?;
    let files = csv_files(&args.shards)?;
    let mut matrices = Vec::with_capacity(files.len());
    for file in &files {
        matrices.push(io::read_points_csv(file)?);
    }
    let shards = PosteriorShards::new(matrices)?;
    let config = args.tree.config(seed)?;
    let result = wasp_aggregate(&shards, &config)?;
    let moments = posterior_moments(&result.weighted_samples)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating directory {}", args.out.display()))?;
    let samples_path = args.out.join("weighted_samples.csv");
    let moments_path = args.out.join("moments.json");
    io::write_weighted_samples_csv(&samples_path, &result.weighted_samples)?;
    io::write_json(&moments_path, &moments)?;

    let config_json = json!({
        "sampling": serde_json::to_value(config)?,
        "shard_files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
    });
    let mut manifest = Manifest::new("wasp", config_json, seed);
    for file in &files {
        manifest.add_input(file)?;
    }
    manifest.add_output(&samples_path);
    manifest.add_output(&moments_path);
    manifest.write(&args.out.join("manifest.json"))?;

    println!(
        "aggregated {} shards ({} samples, dimension {}) into {} weighted samples",
        shards.shard_count(),
        shards.total_samples(),
        shards.dim(),
        result.weighted_samples.len()
    );
    Ok(())
}
