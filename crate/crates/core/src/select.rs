//! Query strategy: masked-aggregation distance features, K-Medoids
//! candidate generation and confidence-difference informativeness.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Adjacency;
use crate::model::znorm;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("{requested} clusters requested from {available} candidates")]
    TooManyClusters { requested: usize, available: usize },
    #[error("{requested} nodes requested from {available} medoids")]
    TooFewMedoids { requested: usize, available: usize },
    #[error("candidate set is empty")]
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Number of K-Medoids clusters.
    pub m: usize,
    /// Nodes queried per iteration.
    pub b: usize,
    pub tau: f64,
    pub max_medoid_iters: usize,
    /// Count the initial classification-labeled nodes in the decay exponent.
    pub exponent_includes_initial: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            m: 24,
            b: 4,
            tau: 0.9,
            max_medoid_iters: 100,
            exponent_includes_initial: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.b == 0 || self.m < self.b {
            return Err(format!("need m >= b >= 1, got m={} b={}", self.m, self.b));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        Ok(())
    }
}

/// Distance features `ĥ` for one selection round.
#[derive(Debug, Clone)]
pub struct DistanceFeatures {
    pub h_hat: Array2<f64>,
    pub iteration: usize,
}

/// `ĥ_i = Σ_{j ∈ N(i), j unlabeled} h_j / |N(i)| + h_i`. Labeled neighbors
/// are masked from the sum but still count in the denominator.
pub fn masked_features(
    h: &Array2<f64>,
    adjacency: &Adjacency,
    labeled: &[bool],
    iteration: usize,
) -> DistanceFeatures {
    let mut h_hat = h.clone();
    for i in 0..adjacency.n() {
        let neigh = adjacency.neighbors(i);
        if neigh.is_empty() {
            continue;
        }
        let scale = 1.0 / neigh.len() as f64;
        let mut row = h_hat.row_mut(i);
        for &j in neigh.iter().filter(|&&j| !labeled[j]) {
            row.scaled_add(scale, &h.row(j));
        }
    }
    DistanceFeatures { h_hat, iteration }
}

/// Dense symmetric distance matrix over a candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<usize>,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(ids: Vec<usize>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = ids.len();
        let mut data = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = f(ids[a], ids[b]);
                data[a * n + b] = d;
                data[b * n + a] = d;
            }
        }
        Self { ids, data }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Distance between candidates at positions `a` and `b`.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.ids.len() + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let n = self.ids.len();
        &self.data[a * n..(a + 1) * n]
    }
}

/// Euclidean distances between rows of `features` for the given node ids.
pub fn pairwise_distance(features: &Array2<f64>, ids: &[usize]) -> DistanceMatrix {
    let n = ids.len();
    let mut data = vec![0.0; n * n];
    let rows: Vec<_> = ids.iter().map(|&i| features.row(i)).collect();
    for a in 0..n {
        for b in (a + 1)..n {
            let d = rows[a]
                .iter()
                .zip(rows[b].iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            data[a * n + b] = d;
            data[b * n + a] = d;
        }
    }
    DistanceMatrix {
        ids: ids.to_vec(),
        data,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Medoid positions into the distance matrix, sorted.
    pub medoids: Vec<usize>,
    /// For every candidate, the index into `medoids` it belongs to.
    pub assignment: Vec<usize>,
    pub cost: f64,
    /// Cost after initialization and after every iteration.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
}

impl Clustering {
    pub fn medoid_ids(&self, dist: &DistanceMatrix) -> Vec<usize> {
        self.medoids.iter().map(|&m| dist.ids()[m]).collect()
    }
}

fn assign(dist: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut cost = 0.0;
    let assignment = (0..dist.len())
        .map(|i| {
            let row = dist.row(i);
            let mut best = 0;
            for (k, &m) in medoids.iter().enumerate().skip(1) {
                // ties go to the lower candidate position
                let (d, bd) = (row[m], row[medoids[best]]);
                if d < bd || (d == bd && m < medoids[best]) {
                    best = k;
                }
            }
            cost += row[medoids[best]];
            best
        })
        .collect();
    (assignment, cost)
}

/// Greedy farthest-point seeding from a random first medoid.
fn farthest_point_seeds<R: Rng>(dist: &DistanceMatrix, m: usize, rng: &mut R) -> Vec<usize> {
    let n = dist.len();
    let mut medoids = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = dist.row(medoids[0]).to_vec();
    while medoids.len() < m {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if medoids.contains(&i) {
                continue;
            }
            match best {
                Some(b) if nearest[b] >= nearest[i] => {}
                _ => best = Some(i),
            }
        }
        let next = best.expect("m <= n");
        medoids.push(next);
        for (i, near) in nearest.iter_mut().enumerate() {
            *near = near.min(dist.get(next, i));
        }
    }
    medoids
}

/// K-Medoids by alternating assignment and within-cluster medoid update.
/// Medoids are always actual candidates; the total cost never increases.
pub fn kmedoids<R: Rng>(
    dist: &DistanceMatrix,
    m: usize,
    rng: &mut R,
    max_iters: usize,
) -> Result<Clustering, SelectError> {
    let n = dist.len();
    if n == 0 {
        return Err(SelectError::NoCandidates);
    }
    if m == 0 || m > n {
        return Err(SelectError::TooManyClusters {
            requested: m,
            available: n,
        });
    }
    let mut medoids = farthest_point_seeds(dist, m, rng);
    let (mut assignment, mut cost) = assign(dist, &medoids);
    let mut history = vec![cost];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (i, &c) in assignment.iter().enumerate() {
            members[c].push(i);
        }
        let previous = medoids.clone();
        let mut changed = false;
        for (k, group) in members.iter().enumerate() {
            let current = medoids[k];
            let within = |cand: usize| group.iter().map(|&j| dist.get(cand, j)).sum::<f64>();
            let mut best = current;
            let mut best_cost = within(current);
            for &cand in group {
                let c = within(cand);
                if c < best_cost {
                    best = cand;
                    best_cost = c;
                }
            }
            if best != current {
                medoids[k] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let (next_assignment, next_cost) = assign(dist, &medoids);
        if next_cost > cost {
            // rounding only; keep the previous solution
            medoids = previous;
            break;
        }
        history.push(next_cost);
        let stable = next_cost == cost;
        assignment = next_assignment;
        cost = next_cost;
        if stable {
            break;
        }
    }
    // report medoids in ascending order, remapping assignments to match
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&k| medoids[k]);
    let mut rank = vec![0; m];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r;
    }
    Ok(Clustering {
        medoids: order.iter().map(|&k| medoids[k]).collect(),
        assignment: assignment.into_iter().map(|c| rank[c]).collect(),
        cost,
        cost_history: history,
        iterations,
    })
}

/// Z-scored classifier and predictor confidences `(c_N, c_A)`.
pub fn confidence(entropy: &[f64], anomaly: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (znorm(entropy), znorm(anomaly))
}

pub fn confidence_difference(c_classifier: &[f64], c_predictor: &[f64]) -> Vec<f64> {
    assert_eq!(c_classifier.len(), c_predictor.len());
    c_classifier
        .iter()
        .zip(c_predictor)
        .map(|(n, a)| (a - n).abs())
        .collect()
}

/// Weight of the entropy term after `n_selected` queries.
pub fn entropy_weight(tau: f64, n_selected: usize) -> f64 {
    tau.powi(n_selected as i32)
}

/// `τⁿ·znorm(e) + (1 − τⁿ)·d`.
pub fn informativeness(entropy: &[f64], diff: &[f64], tau: f64, n_selected: usize) -> Vec<f64> {
    assert_eq!(entropy.len(), diff.len());
    let w = entropy_weight(tau, n_selected);
    znorm(entropy)
        .into_iter()
        .zip(diff)
        .map(|(e, d)| w * e + (1.0 - w) * d)
        .collect()
}

/// Indices of the `b` highest values in `info` restricted to `ids`, ties by
/// lower id. Returned in descending score order.
pub fn top_by_score(ids: &[usize], info: &[f64], b: usize) -> Vec<usize> {
    let mut sorted = ids.to_vec();
    sorted.sort_by(|&x, &y| info[y].total_cmp(&info[x]).then(x.cmp(&y)));
    sorted.truncate(b);
    sorted
}

pub fn select_batch(medoids: &[usize], info: &[f64], b: usize) -> Result<Vec<usize>, SelectError> {
    if medoids.len() < b {
        return Err(SelectError::TooFewMedoids {
            requested: b,
            available: medoids.len(),
        });
    }
    Ok(top_by_score(medoids, info, b))
}
