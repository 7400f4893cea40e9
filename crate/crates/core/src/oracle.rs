//! Slow reference solvers used to validate the closed-form tree paths.
//!
//! [`exact_ot`] solves the discrete optimal-transport problem for an
//! arbitrary cost matrix with successive shortest augmenting paths and
//! returns primal plan and dual potentials, so callers can assert
//! marginal feasibility, strong duality, and complementary slackness.
//! [`sinkhorn_barycenter`] runs iterative Bregman projections for the
//! entropy-regularized fixed-support barycenter; it exists as a speed and
//! accuracy baseline, not as a production path.

use crate::error::{Error, Result};

/// Mass below which a supply, demand, or flow entry is treated as
/// exhausted during augmentation.
const FLOW_EPS: f64 = 1e-12;

/// Largest marginal size [`exact_ot`] accepts; the dense solver is meant
/// for validation, not scale.
pub const MAX_ATOMS: usize = 64;

/// Optimal coupling between two discrete measures.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    /// `matrix[i][j]` is the mass shipped from source atom `i` to target
    /// atom `j`.
    pub matrix: Vec<Vec<f64>>,
    /// Total shipping cost `Σ_{ij} matrix[i][j] · cost[i][j]`.
    pub cost: f64,
    /// Dual potentials `(u, v)` with `u_i + v_j ≤ cost[i][j]` everywhere
    /// and equality wherever `matrix[i][j] > 0`.
    pub potentials: (Vec<f64>, Vec<f64>),
}

fn check_marginal(name: &str, marginal: &[f64]) -> Result<()> {
    if marginal.is_empty() {
        return Err(Error::domain(format!("{name} marginal is empty")));
    }
    if marginal.len() > MAX_ATOMS {
        return Err(Error::domain(format!(
            "{name} marginal has {} atoms; the exact solver caps at {MAX_ATOMS}",
            marginal.len()
        )));
    }
    let mut total = 0.0;
    for &x in marginal {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::domain(format!("invalid {name} mass {x}")));
        }
        total += x;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "{name} marginal sums to {total}, expected 1 within 1e-9"
        )));
    }
    Ok(())
}

/// Exact optimal transport between `source` and `target` under `cost`
/// (row = source atom, column = target atom; entries must be finite and
/// non-negative).
///
/// Solves the transportation problem by successive shortest augmenting
/// paths on the residual graph, with node potentials keeping reduced
/// costs non-negative so each search is a multi-source Dijkstra. Runtime
/// is polynomial in the number of atoms but the solver is intentionally
/// capped at [`MAX_ATOMS`] per side.
pub fn exact_ot(cost: &[Vec<f64>], source: &[f64], target: &[f64]) -> Result<TransportPlan> {
    check_marginal("source", source)?;
    check_marginal("target", target)?;
    let m = source.len();
    let n = target.len();
    if cost.len() != m {
        return Err(Error::domain(format!(
            "cost matrix has {} rows, expected {m}",
            cost.len()
        )));
    }
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::domain(format!(
                "cost row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        for &c in row {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::domain(format!("invalid cost entry {c}")));
            }
        }
    }

    let mut supply = source.to_vec();
    let mut demand = target.to_vec();
    let mut flow = vec![vec![0.0; n]; m];
    // Potentials keep every residual arc's reduced cost non-negative:
    // forward i→j costs cost[i][j] + pi_s[i] − pi_t[j], backward j→i (on
    // positive flow) costs the negation.
    let mut pi_s = vec![0.0; m];
    let mut pi_t = vec![0.0; n];

    let max_augmentations = 16 * (m + n) * (m + n);
    for _ in 0..max_augmentations {
        if supply.iter().all(|&s| s <= FLOW_EPS) || demand.iter().all(|&d| d <= FLOW_EPS) {
            break;
        }

        // Multi-source Dijkstra over the residual graph, stopping at the
        // first finalized target that still wants mass.
        let mut dist_s = vec![f64::INFINITY; m];
        let mut dist_t = vec![f64::INFINITY; n];
        let mut done_s = vec![false; m];
        let mut done_t = vec![false; n];
        // prev_t[j] = source feeding j; prev_s[i] = target whose flow to i
        // is pushed back (None when i is an origin).
        let mut prev_t = vec![usize::MAX; n];
        let mut prev_s = vec![usize::MAX; m];
        for i in 0..m {
            if supply[i] > FLOW_EPS {
                dist_s[i] = 0.0;
            }
        }
        let mut sink = None;
        loop {
            let mut best: Option<(bool, usize, f64)> = None;
            for i in 0..m {
                if !done_s[i] && dist_s[i].is_finite() && best.is_none_or(|(_, _, d)| dist_s[i] < d)
                {
                    best = Some((true, i, dist_s[i]));
                }
            }
            for j in 0..n {
                if !done_t[j] && dist_t[j].is_finite() && best.is_none_or(|(_, _, d)| dist_t[j] < d)
                {
                    best = Some((false, j, dist_t[j]));
                }
            }
            let Some((is_source, x, _)) = best else {
                break;
            };
            if is_source {
                done_s[x] = true;
                for j in 0..n {
                    if done_t[j] {
                        continue;
                    }
                    let rc = (cost[x][j] + pi_s[x] - pi_t[j]).max(0.0);
                    if dist_s[x] + rc < dist_t[j] {
                        dist_t[j] = dist_s[x] + rc;
                        prev_t[j] = x;
                    }
                }
            } else {
                done_t[x] = true;
                if demand[x] > FLOW_EPS {
                    sink = Some(x);
                    break;
                }
                for i in 0..m {
                    if done_s[i] || flow[i][x] <= FLOW_EPS {
                        continue;
                    }
                    let rc = (pi_t[x] - pi_s[i] - cost[i][x]).max(0.0);
                    if dist_t[x] + rc < dist_s[i] {
                        dist_s[i] = dist_t[x] + rc;
                        prev_s[i] = x;
                    }
                }
            }
        }
        let Some(sink) = sink else {
            return Err(Error::Numeric(
                "transport search exhausted the residual graph before balancing; \
                 marginals are inconsistent beyond tolerance"
                    .to_string(),
            ));
        };

        // Standard potential update: clamp by the sink distance so
        // unreached nodes keep feasible reduced costs.
        let d_sink = dist_t[sink];
        for i in 0..m {
            pi_s[i] += dist_s[i].min(d_sink);
        }
        for j in 0..n {
            pi_t[j] += dist_t[j].min(d_sink);
        }

        // Walk the augmenting path back to an origin, collecting the
        // bottleneck.
        let mut bottleneck = demand[sink];
        let mut j = sink;
        let origin = loop {
            let i = prev_t[j];
            if prev_s[i] == usize::MAX {
                bottleneck = bottleneck.min(supply[i]);
                break i;
            }
            let back = prev_s[i];
            bottleneck = bottleneck.min(flow[i][back]);
            j = back;
        };
        let mut j = sink;
        loop {
            let i = prev_t[j];
            flow[i][j] += bottleneck;
            if i == origin && prev_s[i] == usize::MAX {
                break;
            }
            let back = prev_s[i];
            flow[i][back] -= bottleneck;
            j = back;
        }
        supply[origin] -= bottleneck;
        demand[sink] -= bottleneck;
    }

    if supply.iter().any(|&s| s > 1e-8) || demand.iter().any(|&d| d > 1e-8) {
        return Err(Error::Numeric(
            "transport solver hit its augmentation cap before shipping all mass".to_string(),
        ));
    }

    let mut total_cost = 0.0;
    for i in 0..m {
        for j in 0..n {
            total_cost += flow[i][j] * cost[i][j];
        }
    }
    let u: Vec<f64> = pi_s.iter().map(|&p| -p).collect();
    let v: Vec<f64> = pi_t.clone();
    Ok(TransportPlan {
        matrix: flow,
        cost: total_cost,
        potentials: (u, v),
    })
}

/// Entropy-regularized fixed-support barycenter.
#[derive(Clone, Debug)]
pub struct SinkhornBarycenter {
    /// Barycenter histogram over the shared support. Sums approximately
    /// (not exactly) to one; normalize before treating it as a measure.
    pub histogram: Vec<f64>,
    /// Bregman projection sweeps performed.
    pub iterations: usize,
    /// `max_i ‖row-marginal_i − histogram‖₁` at the final sweep, a
    /// convergence diagnostic.
    pub marginal_violation: f64,
}

/// Iterative Bregman projections for the entropic barycenter of
/// `histograms` (all over one shared support with pairwise costs `cost`),
/// with barycentric weights `weights` and regularization `epsilon`.
///
/// Runs exactly `iterations` sweeps. Underflow in the kernel or scaling
/// vectors surfaces as a numeric error suggesting a larger `epsilon`.
pub fn sinkhorn_barycenter(
    cost: &[Vec<f64>],
    histograms: &[Vec<f64>],
    weights: &[f64],
    epsilon: f64,
    iterations: usize,
) -> Result<SinkhornBarycenter> {
    let n = cost.len();
    if n == 0 {
        return Err(Error::domain(
            "entropic barycenter needs a non-empty support",
        ));
    }
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::domain(format!(
                "cost row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        for &c in row {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::domain(format!("invalid cost entry {c}")));
            }
        }
    }
    if histograms.is_empty() {
        return Err(Error::domain("entropic barycenter of no histograms"));
    }
    for (i, h) in histograms.iter().enumerate() {
        if h.len() != n {
            return Err(Error::domain(format!(
                "histogram {i} has {} entries, expected {n}",
                h.len()
            )));
        }
        let mut total = 0.0;
        for &x in h {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::domain(format!("invalid histogram mass {x}")));
            }
            total += x;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "histogram {i} sums to {total}, expected 1 within 1e-9"
            )));
        }
    }
    if weights.len() != histograms.len() {
        return Err(Error::domain(format!(
            "{} weights for {} histograms",
            weights.len(),
            histograms.len()
        )));
    }
    let wsum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) || (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::domain(
            "barycentric weights must be non-negative and sum to 1",
        ));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::domain(format!(
            "regularization must be positive and finite, got {epsilon}"
        )));
    }
    if iterations == 0 {
        return Err(Error::domain(
            "entropic barycenter needs at least one sweep",
        ));
    }

    let underflow = || {
        Error::Numeric("entropic solver underflowed; increase epsilon or rescale costs".to_string())
    };
    let kernel: Vec<Vec<f64>> = cost
        .iter()
        .map(|row| row.iter().map(|&c| (-c / epsilon).exp()).collect())
        .collect();
    // A row of all-zero kernel entries can never route mass anywhere.
    for row in &kernel {
        if row.iter().all(|&k| k == 0.0) {
            return Err(underflow());
        }
    }

    let matvec = |m: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
        m.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    };
    let matvec_t = |m: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (row, &xi) in m.iter().zip(x) {
            for (o, &k) in out.iter_mut().zip(row) {
                *o += k * xi;
            }
        }
        out
    };

    let k = histograms.len();
    let mut u = vec![vec![1.0; n]; k];
    let mut a = vec![1.0 / n as f64; n];
    let mut marginal_violation = f64::INFINITY;
    for _ in 0..iterations {
        let mut log_a = vec![0.0; n];
        let mut t = Vec::with_capacity(k);
        for i in 0..k {
            let ktu = matvec_t(&kernel, &u[i]);
            let v: Vec<f64> = histograms[i]
                .iter()
                .zip(&ktu)
                .map(|(&b, &d)| if b == 0.0 { 0.0 } else { b / d })
                .collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(underflow());
            }
            let ti = matvec(&kernel, &v);
            for (la, &x) in log_a.iter_mut().zip(&ti) {
                if x <= 0.0 || !x.is_finite() {
                    return Err(underflow());
                }
                *la += weights[i] * x.ln();
            }
            t.push(ti);
        }
        for (ai, &la) in a.iter_mut().zip(&log_a) {
            *ai = la.exp();
            if *ai <= 0.0 || !ai.is_finite() {
                return Err(underflow());
            }
        }
        marginal_violation = 0.0;
        for i in 0..k {
            let v: f64 = u[i]
                .iter()
                .zip(&t[i])
                .zip(&a)
                .map(|((&ui, &ti), &ai)| (ui * ti - ai).abs())
                .sum();
            marginal_violation = marginal_violation.max(v);
        }
        for i in 0..k {
            for ((ui, &ti), &ai) in u[i].iter_mut().zip(&t[i]).zip(&a) {
                *ui = ai / ti;
                if !ui.is_finite() {
                    return Err(underflow());
                }
            }
        }
    }
    Ok(SinkhornBarycenter {
        histogram: a,
        iterations,
        marginal_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_diagonal_keeps_mass_in_place() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let plan = exact_ot(&cost, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(plan.cost.abs() <= 1e-12);
        assert!((plan.matrix[0][0] - 0.5).abs() <= 1e-12);
        assert!((plan.matrix[1][1] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn two_by_two_instance_matches_the_hand_solution() {
        // cost = [[0, 2], [1, 0]]; maximizing the cheap 0→0 route gives
        // the plan [[0.1, 0.3], [0, 0.6]] with cost 0.6.
        let cost = vec![vec![0.0, 2.0], vec![1.0, 0.0]];
        let plan = exact_ot(&cost, &[0.4, 0.6], &[0.1, 0.9]).unwrap();
        assert!((plan.cost - 0.6).abs() <= 1e-12);
        assert!((plan.matrix[0][0] - 0.1).abs() <= 1e-12);
        assert!((plan.matrix[0][1] - 0.3).abs() <= 1e-12);
        assert!(plan.matrix[1][0].abs() <= 1e-12);
        assert!((plan.matrix[1][1] - 0.6).abs() <= 1e-12);
    }

    #[test]
    fn single_atom_marginals_force_the_plan() {
        let plan = exact_ot(&[vec![3.5]], &[1.0], &[1.0]).unwrap();
        assert!((plan.cost - 3.5).abs() <= 1e-12);
        assert!((plan.matrix[0][0] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn rejects_malformed_inputs() {
        assert!(exact_ot(&[], &[], &[]).is_err());
        assert!(exact_ot(&[vec![0.0]], &[0.5], &[1.0]).is_err());
        assert!(exact_ot(&[vec![0.0, 1.0]], &[1.0], &[1.0]).is_err());
        assert!(exact_ot(&[vec![-1.0]], &[1.0], &[1.0]).is_err());
        assert!(exact_ot(&[vec![f64::NAN]], &[1.0], &[1.0]).is_err());
        let big = vec![vec![0.0; MAX_ATOMS + 1]; MAX_ATOMS + 1];
        let marg = vec![1.0 / (MAX_ATOMS + 1) as f64; MAX_ATOMS + 1];
        assert!(exact_ot(&big, &marg, &marg).is_err());
    }

    fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    }

    #[test]
    fn random_instances_satisfy_primal_dual_optimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..30 {
            let m = rng.random_range(1..=8usize);
            let n = rng.random_range(1..=8usize);
            let cost: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.random_range(0.0..5.0)).collect())
                .collect();
            let a = random_simplex(&mut rng, m);
            let b = random_simplex(&mut rng, n);
            let plan = exact_ot(&cost, &a, &b).unwrap();

            for (mass, row) in a.iter().zip(&plan.matrix) {
                let row: f64 = row.iter().sum();
                assert!((row - mass).abs() <= 1e-9, "row marginal violated");
            }
            for (j, mass) in b.iter().enumerate() {
                let col: f64 = plan.matrix.iter().map(|row| row[j]).sum();
                assert!((col - mass).abs() <= 1e-9, "column marginal violated");
            }
            let (u, v) = &plan.potentials;
            let dual: f64 = u.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>()
                + v.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>();
            assert!((plan.cost - dual).abs() <= 1e-8, "duality gap");
            for i in 0..m {
                for j in 0..n {
                    assert!(u[i] + v[j] <= cost[i][j] + 1e-9, "dual infeasible");
                    if plan.matrix[i][j] > 1e-9 {
                        assert!(
                            (cost[i][j] - u[i] - v[j]).abs() <= 1e-7,
                            "complementary slackness violated"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn one_dimensional_transport_matches_the_cdf_formula() {
        // Atoms on a line with |x − y| cost: the optimal cost is the area
        // between the two CDFs.
        let xs = [0.0_f64, 1.0, 3.0];
        let ys = [0.5_f64, 2.0, 2.5];
        let a = [0.2, 0.5, 0.3];
        let b = [0.4, 0.4, 0.2];
        let cost: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| ys.iter().map(|&y| (x - y).abs()).collect())
            .collect();
        let plan = exact_ot(&cost, &a, &b).unwrap();

        let mut grid: Vec<f64> = xs.iter().chain(ys.iter()).copied().collect();
        grid.sort_by(f64::total_cmp);
        let cdf = |support: &[f64], mass: &[f64], z: f64| -> f64 {
            support
                .iter()
                .zip(mass)
                .filter(|&(&s, _)| s <= z)
                .map(|(_, &m)| m)
                .sum()
        };
        let mut expected = 0.0;
        for w in grid.windows(2) {
            expected += (cdf(&xs, &a, w[0]) - cdf(&ys, &b, w[0])).abs() * (w[1] - w[0]);
        }
        assert!((plan.cost - expected).abs() <= 1e-9);
    }

    #[test]
    fn symmetric_entropic_barycenter_balances_two_diracs() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let result = sinkhorn_barycenter(
            &cost,
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[0.5, 0.5],
            0.5,
            200,
        )
        .unwrap();
        assert_eq!(result.iterations, 200);
        assert!((result.histogram[0] - result.histogram[1]).abs() <= 1e-9);
        let total: f64 = result.histogram.iter().sum();
        assert!((total - 1.0).abs() <= 0.1);
        assert!(result.marginal_violation <= 1e-6);
    }

    #[test]
    fn identical_histograms_stay_near_themselves() {
        let cost = vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
        ];
        let b = vec![0.2, 0.5, 0.3];
        let result =
            sinkhorn_barycenter(&cost, &[b.clone(), b.clone()], &[0.5, 0.5], 0.05, 300).unwrap();
        let total: f64 = result.histogram.iter().sum();
        for (got, want) in result.histogram.iter().zip(&b) {
            assert!(
                (got / total - want).abs() <= 0.05,
                "entropic blur too large"
            );
        }
    }

    #[test]
    fn severe_underflow_is_reported_as_numeric() {
        let cost = vec![vec![0.0, 1.0e6], vec![1.0e6, 0.0]];
        let err = sinkhorn_barycenter(
            &cost,
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[0.5, 0.5],
            1e-3,
            50,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn sinkhorn_validates_inputs() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let b = vec![0.5, 0.5];
        assert!(sinkhorn_barycenter(&[], std::slice::from_ref(&b), &[1.0], 0.1, 10).is_err());
        assert!(sinkhorn_barycenter(&cost, &[], &[], 0.1, 10).is_err());
        assert!(sinkhorn_barycenter(&cost, &[vec![0.5]], &[1.0], 0.1, 10).is_err());
        assert!(sinkhorn_barycenter(&cost, std::slice::from_ref(&b), &[0.5], 0.1, 10).is_err());
        assert!(sinkhorn_barycenter(&cost, std::slice::from_ref(&b), &[1.0], 0.0, 10).is_err());
        assert!(sinkhorn_barycenter(&cost, std::slice::from_ref(&b), &[1.0], 0.1, 0).is_err());
        assert!(sinkhorn_barycenter(&cost, &[vec![0.9, 0.0]], &[1.0], 0.1, 10).is_err());
    }
}
