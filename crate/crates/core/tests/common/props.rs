//! Property checks shared by the proptest suites and the acceptance run.

use mitigate::eval::auc_roc;
use mitigate::graph::Adjacency;
use mitigate::model::{entropy_scores, hybrid_score, softmax_rows, znorm};
use mitigate::select::{
    entropy_weight, informativeness, kmedoids, masked_features, pairwise_distance, select_batch,
};
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::oracles::total_distance;

pub type Check = Result<(), TestCaseError>;

fn close(a: f64, b: f64, tol: f64, what: &str) -> Check {
    prop_assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
    Ok(())
}

fn spread(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::MIN, f64::max);
    let min = x.iter().cloned().fold(f64::MAX, f64::min);
    max - min
}

pub fn vec_strategy(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

pub fn pair_strategy(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(0.0f64..1.0, n),
        )
    })
}

/// Hybrid score is unchanged by positive affine maps of either input.
pub fn hybrid_affine_invariance(
    e: &[f64],
    p: &[f64],
    a: (f64, f64),
    b: (f64, f64),
    phi: f64,
) -> Check {
    prop_assume!(spread(e) > 1e-3 && spread(p) > 1e-3);
    let base = hybrid_score(e, p, phi);
    let e2: Vec<f64> = e.iter().map(|v| a.0 * v + a.1).collect();
    let p2: Vec<f64> = p.iter().map(|v| b.0 * v + b.1).collect();
    for (x, y) in base.iter().zip(hybrid_score(&e2, &p2, phi)) {
        close(*x, y, 1e-9, "hybrid")?;
    }
    Ok(())
}

/// Mean 0 and population std 1, or all zeros for constant input.
pub fn znorm_moments(x: &[f64]) -> Check {
    let z = znorm(x);
    prop_assert_eq!(z.len(), x.len());
    let n = x.len() as f64;
    if spread(x) == 0.0 {
        prop_assert!(z.iter().all(|&v| v == 0.0));
        return Ok(());
    }
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    close(mean, 0.0, 1e-9, "mean")?;
    close(var.sqrt(), 1.0, 1e-9, "std")
}

/// Entropy of every softmax row lies in `[0, ln C]`.
pub fn entropy_bounds(logits: &[f64], classes: usize) -> Check {
    let rows = logits.len() / classes;
    prop_assume!(rows > 0);
    let logits =
        Array2::from_shape_vec((rows, classes), logits[..rows * classes].to_vec()).unwrap();
    let e = entropy_scores(&softmax_rows(&logits));
    let max = (classes as f64).ln();
    for v in e {
        prop_assert!(
            (-1e-12..=max + 1e-12).contains(&v),
            "entropy {v} outside [0, {max}]"
        );
    }
    Ok(())
}

/// Info is the convex combination of z-scored entropy and the confidence
/// difference, so it lies between them elementwise.
pub fn info_interpolation(e: &[f64], d: &[f64], tau: f64, n_selected: usize) -> Check {
    let w = entropy_weight(tau, n_selected);
    prop_assert!((0.0..=1.0).contains(&w));
    let ze = znorm(e);
    let info = informativeness(e, d, tau, n_selected);
    for i in 0..e.len() {
        close(info[i], w * ze[i] + (1.0 - w) * d[i], 1e-12, "convex")?;
        let (lo, hi) = (ze[i].min(d[i]), ze[i].max(d[i]));
        prop_assert!(info[i] >= lo - 1e-12 && info[i] <= hi + 1e-12);
    }
    Ok(())
}

/// Medoids are distinct candidates, every point sits with its nearest
/// medoid, and the cost never increases. For `m = 1` the cost is the
/// brute-force optimum.
pub fn kmedoids_properties(points: &[(f64, f64)], m: usize, seed: u64) -> Check {
    let n = points.len();
    prop_assume!(m >= 1 && m <= n);
    let feats = Array2::from_shape_fn(
        (n, 2),
        |(i, j)| if j == 0 { points[i].0 } else { points[i].1 },
    );
    // offset ids so positions and node ids differ
    let mut padded = Array2::zeros((n + 3, 2));
    padded.slice_mut(ndarray::s![3.., ..]).assign(&feats);
    let ids: Vec<usize> = (3..n + 3).collect();
    let dist = pairwise_distance(&padded, &ids);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = kmedoids(&dist, m, &mut rng, 100).unwrap();

    prop_assert_eq!(c.medoids.len(), m);
    let mut sorted = c.medoids.clone();
    sorted.dedup();
    prop_assert_eq!(sorted.len(), m);
    prop_assert!(c.medoids.iter().all(|&k| k < n));
    for id in c.medoid_ids(&dist) {
        prop_assert!(ids.contains(&id));
    }
    for w in c.cost_history.windows(2) {
        prop_assert!(w[1] <= w[0], "cost rose: {:?}", c.cost_history);
    }
    let mut recomputed = 0.0;
    for i in 0..n {
        let assigned = dist.get(i, c.medoids[c.assignment[i]]);
        let nearest = c
            .medoids
            .iter()
            .map(|&k| dist.get(i, k))
            .fold(f64::MAX, f64::min);
        prop_assert!(assigned <= nearest);
        recomputed += assigned;
    }
    close(recomputed, c.cost, 1e-9, "cost")?;
    if m == 1 {
        let best = (0..n)
            .map(|k| total_distance(&dist, k))
            .fold(f64::MAX, f64::min);
        close(c.cost, best, 1e-9, "m=1 optimum")?;
    }
    Ok(())
}

/// With nonnegative embeddings, labeling one more node never increases the
/// norm of any neighbor's masked neighborhood term.
pub fn masking_monotone(
    n: usize,
    edges: &[(usize, usize)],
    h: &[f64],
    labeled: &[bool],
    extra: usize,
) -> Check {
    let dim = h.len() / n;
    prop_assume!(dim > 0);
    let h =
        Array2::from_shape_vec((n, dim), h[..n * dim].iter().map(|v| v.abs()).collect()).unwrap();
    let adj = Adjacency::from_edges(n, edges).unwrap();
    let extra = extra % n;
    let mut more = labeled.to_vec();
    more[extra] = true;
    let before = masked_features(&h, &adj, labeled, 0).h_hat - &h;
    let after = masked_features(&h, &adj, &more, 0).h_hat - &h;
    for &i in adj.neighbors(extra) {
        let nb = before.row(i).dot(&before.row(i)).sqrt();
        let na = after.row(i).dot(&after.row(i)).sqrt();
        prop_assert!(na <= nb + 1e-12, "node {i}: {na} > {nb}");
    }
    Ok(())
}

/// Selection is a size-`b` subset of the medoids dominating the rest.
pub fn select_batch_properties(info: &[f64], medoid_mask: &[bool], b: usize) -> Check {
    let medoids: Vec<usize> = (0..info.len()).filter(|&i| medoid_mask[i]).collect();
    prop_assume!(b >= 1 && b <= medoids.len());
    let chosen = select_batch(&medoids, info, b).unwrap();
    prop_assert_eq!(chosen.len(), b);
    prop_assert!(chosen.iter().all(|c| medoids.contains(c)));
    let low = chosen.iter().map(|&c| info[c]).fold(f64::MAX, f64::min);
    for m in medoids.iter().filter(|m| !chosen.contains(m)) {
        prop_assert!(info[*m] <= low);
    }
    Ok(())
}

/// AUC-ROC is invariant to strictly increasing maps and flips under negation.
pub fn auc_invariances(scores: &[f64], labels: &[bool]) -> Check {
    prop_assume!(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y));
    let base = auc_roc(scores, labels).unwrap();
    let mapped: Vec<f64> = scores.iter().map(|s| (s / 4.0).exp() * 3.0 + 1.0).collect();
    close(
        auc_roc(&mapped, labels).unwrap(),
        base,
        1e-12,
        "monotone map",
    )?;
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    close(
        auc_roc(&neg, labels).unwrap() + base,
        1.0,
        1e-12,
        "negation",
    )
}
