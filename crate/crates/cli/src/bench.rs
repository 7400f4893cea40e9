//! Benchmark suites: deterministic accuracy tables plus environmental
//! timing tables.
//!
//! Each suite writes `accuracy.csv` (fully determined by the seed) and
//! `timings.csv` (wall-clock measurements plus machine metadata), and a
//! manifest. Timings are inherently machine-dependent; accuracy files
//! reproduce byte for byte.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use treebary::io;
use treebary::oracle::{exact_ot, sinkhorn_barycenter};
use treebary::synthetic::{random_measure, random_tree};
use treebary::{tw, tw_barycenter, DiscreteMeasure, NodeId, Tree, WeightedMeasureSet};

use crate::manifest::Manifest;
use crate::{resolve_seed, BenchArgs, Suite};

pub fn run(args: BenchArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating directory {}", args.out.display()))?;
    let (name, timings) = match args.suite {
        Suite::TwVsOracle => ("tw-vs-oracle", tw_vs_oracle(seed, &args.out)?),
        Suite::BarycenterScaling => ("barycenter-scaling", barycenter_scaling(seed, &args.out)?),
        Suite::SinkhornCompare => ("sinkhorn-compare", sinkhorn_compare(seed, &args.out)?),
    };

    let timings_path = args.out.join("timings.csv");
    write_timings(&timings_path, name, &timings)?;

    let mut manifest = Manifest::new("bench", json!({ "suite": name }), seed);
    manifest.add_output(&args.out.join("accuracy.csv"));
    manifest.add_output(&timings_path);
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(())
}

/// Timing rows plus machine metadata. `value` cells hold either a float
/// or a short identifier, so this file is written by hand rather than
/// through the numeric CSV writer.
fn write_timings(path: &Path, suite: &str, entries: &[(String, f64)]) -> anyhow::Result<()> {
    let mut text = String::from("suite,label,value\n");
    for (label, value) in entries {
        text.push_str(&format!("{suite},{label},{}\n", io::format_float(*value)));
    }
    let cpus = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    text.push_str(&format!("{suite},cpus,{cpus}\n"));
    text.push_str(&format!("{suite},os,{}\n", std::env::consts::OS));
    text.push_str(&format!("{suite},arch,{}\n", std::env::consts::ARCH));
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Pairwise tree distances between the supports of two measures.
fn support_costs(
    tree: &Tree,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> treebary::Result<Vec<Vec<f64>>> {
    mu.supports()
        .iter()
        .map(|&a| {
            let d = tree.distances_from(a)?;
            Ok(nu.supports().iter().map(|&b| d[b.0]).collect())
        })
        .collect()
}

/// 200 random desk-scale instances: the closed-form tree distance must
/// match the exact transport cost.
fn tw_vs_oracle(seed: u64, out: &Path) -> anyhow::Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut max_diff = 0.0f64;
    let mut tw_seconds = 0.0;
    let mut oracle_seconds = 0.0;
    for instance in 0..200usize {
        let nodes = rng.random_range(2..=32);
        let tree = random_tree(nodes, (0.1, 2.0), None, &mut rng)?;
        let sa = rng.random_range(1..=nodes.min(12));
        let sb = rng.random_range(1..=nodes.min(12));
        let mu = random_measure(&tree, sa, &mut rng)?;
        let nu = random_measure(&tree, sb, &mut rng)?;

        let start = Instant::now();
        let closed_form = tw(&tree, &mu, &nu)?;
        tw_seconds += start.elapsed().as_secs_f64();

        let cost = support_costs(&tree, &mu, &nu)?;
        let start = Instant::now();
        let plan = exact_ot(&cost, mu.weights(), nu.weights())?;
        oracle_seconds += start.elapsed().as_secs_f64();

        let diff = (closed_form - plan.cost).abs();
        max_diff = max_diff.max(diff);
        rows.push(vec![
            instance as f64,
            nodes as f64,
            sa as f64,
            sb as f64,
            closed_form,
            plan.cost,
            diff,
        ]);
    }
    io::write_numeric_csv(
        &out.join("accuracy.csv"),
        Some("instance,nodes,supports_mu,supports_nu,tw,exact_cost,abs_diff"),
        &rows,
    )?;
    println!(
        "tw-vs-oracle: 200 instances, max |tw - exact| = {}",
        io::format_float(max_diff)
    );
    Ok(vec![
        ("tw_total_seconds".into(), tw_seconds),
        ("oracle_total_seconds".into(), oracle_seconds),
    ])
}

/// Barycenter wall time over growing input counts on one fixed tree.
fn barycenter_scaling(seed: u64, out: &Path) -> anyhow::Result<Vec<(String, f64)>> {
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &n in &[10usize, 100, 1000] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(n as u64));
        let tree = random_tree(200, (0.1, 2.0), None, &mut rng)?;
        let measures = (0..n)
            .map(|_| {
                let supports = rng.random_range(3..=20);
                random_measure(&tree, supports, &mut rng)
            })
            .collect::<treebary::Result<Vec<_>>>()?;
        let set = WeightedMeasureSet::uniform(measures)?;
        let start = Instant::now();
        let result = tw_barycenter(&tree, &set)?;
        let seconds = start.elapsed().as_secs_f64();
        rows.push(vec![
            n as f64,
            result.objective,
            result.feasibility_adjustment,
        ]);
        timings.push((format!("n={n}_seconds"), seconds));
    }
    io::write_numeric_csv(
        &out.join("accuracy.csv"),
        Some("measures,objective,feasibility_adjustment"),
        &rows,
    )?;
    println!(
        "barycenter-scaling: objectives {} / {} / {} for 10 / 100 / 1000 measures",
        io::format_float(rows[0][1]),
        io::format_float(rows[1][1]),
        io::format_float(rows[2][1])
    );
    Ok(timings)
}

/// Closed-form barycenter against a 100-sweep fixed-support entropic
/// barycenter on a matched instance (100 measures, 50 supports each).
fn sinkhorn_compare(seed: u64, out: &Path) -> anyhow::Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = random_tree(64, (0.1, 1.0), None, &mut rng)?;
    let measures = (0..100)
        .map(|_| random_measure(&tree, 50, &mut rng))
        .collect::<treebary::Result<Vec<_>>>()?;

    let set = WeightedMeasureSet::uniform(measures.clone())?;
    let start = Instant::now();
    let closed_form = tw_barycenter(&tree, &set)?;
    let tw_seconds = start.elapsed().as_secs_f64();

    // Fixed support = every tree node; costs are tree distances.
    let n = tree.node_count();
    let cost = (0..n)
        .map(|v| tree.distances_from(NodeId(v)))
        .collect::<treebary::Result<Vec<_>>>()?;
    let histograms: Vec<Vec<f64>> = measures
        .iter()
        .map(|m| {
            let mut h = vec![0.0; n];
            for (node, w) in m.iter() {
                h[node.0] += w;
            }
            h
        })
        .collect();
    let weights = vec![1.0 / measures.len() as f64; measures.len()];
    let mut off_diagonal: Vec<f64> = cost
        .iter()
        .flat_map(|row| row.iter().copied())
        .filter(|&c| c > 0.0)
        .collect();
    off_diagonal.sort_by(f64::total_cmp);
    let epsilon = 0.1 * off_diagonal[off_diagonal.len() / 2];

    let start = Instant::now();
    let entropic = sinkhorn_barycenter(&cost, &histograms, &weights, epsilon, 100)?;
    let sinkhorn_seconds = start.elapsed().as_secs_f64();

    // Score both outputs under the true (unregularized) objective.
    let supports: Vec<NodeId> = (0..n).map(NodeId).collect();
    let entropic_measure = DiscreteMeasure::new(&tree, supports, entropic.histogram.clone())?;
    let mut entropic_objective = 0.0;
    for (m, w) in measures.iter().zip(&weights) {
        entropic_objective += w * tw(&tree, &entropic_measure, m)?;
    }

    let text = format!(
        "method,objective,marginal_violation\ntw,{},{}\nsinkhorn,{},{}\n",
        io::format_float(closed_form.objective),
        io::format_float(0.0),
        io::format_float(entropic_objective),
        io::format_float(entropic.marginal_violation),
    );
    let accuracy_path = out.join("accuracy.csv");
    fs::write(&accuracy_path, text)
        .with_context(|| format!("writing {}", accuracy_path.display()))?;
    println!(
        "sinkhorn-compare: objective {} (closed form) vs {} (entropic, violation {})",
        io::format_float(closed_form.objective),
        io::format_float(entropic_objective),
        io::format_float(entropic.marginal_violation)
    );
    Ok(vec![
        ("tw_seconds".into(), tw_seconds),
        ("sinkhorn_seconds".into(), sinkhorn_seconds),
    ])
}
