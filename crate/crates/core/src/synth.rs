//! Stochastic block model graphs with class-correlated Gaussian features.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("probability {name}={value} outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("need 1 <= num_classes <= n, got n={n} num_classes={num_classes}")]
    Classes { n: usize, num_classes: usize },
    #[error("feature scale {name}={value} must be finite and non-negative")]
    Scale { name: &'static str, value: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub num_classes: usize,
    pub attr_dim: usize,
    /// Edge probability within a block.
    pub intra_p: f64,
    /// Edge probability across blocks.
    pub inter_p: f64,
    /// Standard deviation of the per-class feature centers.
    pub feature_signal: f64,
    /// Per-node Gaussian noise around the class center.
    pub feature_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 3000,
            num_classes: 6,
            attr_dim: 64,
            intra_p: 0.006,
            inter_p: 0.0003,
            feature_signal: 1.0,
            feature_noise: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, value) in [("intra_p", self.intra_p), ("inter_p", self.inter_p)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::Probability { name, value });
            }
        }
        if self.num_classes == 0 || self.num_classes > self.n {
            return Err(SynthError::Classes {
                n: self.n,
                num_classes: self.num_classes,
            });
        }
        for (name, value) in [
            ("feature_signal", self.feature_signal),
            ("feature_noise", self.feature_noise),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SynthError::Scale { name, value });
            }
        }
        Ok(())
    }

    /// Block of node `i`: contiguous, near-equal blocks.
    pub fn class_of(&self, i: usize) -> usize {
        i * self.num_classes / self.n
    }

    /// Mean and variance of the undirected edge count.
    pub fn edge_count_moments(&self) -> (f64, f64) {
        let mut sizes = vec![0usize; self.num_classes];
        for i in 0..self.n {
            sizes[self.class_of(i)] += 1;
        }
        let total_pairs = (self.n * (self.n - 1) / 2) as f64;
        let intra_pairs: f64 = sizes
            .iter()
            .map(|&s| (s * s.saturating_sub(1) / 2) as f64)
            .sum();
        let inter_pairs = total_pairs - intra_pairs;
        let mean = intra_pairs * self.intra_p + inter_pairs * self.inter_p;
        let var = intra_pairs * self.intra_p * (1.0 - self.intra_p)
            + inter_pairs * self.inter_p * (1.0 - self.inter_p);
        (mean, var)
    }
}

pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Graph, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let labels: Vec<usize> = (0..n).map(|i| spec.class_of(i)).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                spec.intra_p
            } else {
                spec.inter_p
            };
            if p > 0.0 && rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let centers = Array2::from_shape_simple_fn((spec.num_classes, spec.attr_dim), || {
        spec.feature_signal * std_normal.sample(&mut rng)
    });
    let mut features = Array2::zeros((n, spec.attr_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = centers[[labels[i], j]] + spec.feature_noise * std_normal.sample(&mut rng);
        }
    }

    Ok(Graph::new(
        &edges,
        features,
        labels.into_iter().map(Some).collect(),
        spec.num_classes,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, classes: usize, intra: f64, inter: f64) -> SyntheticSpec {
        SyntheticSpec {
            n,
            num_classes: classes,
            attr_dim: 4,
            intra_p: intra,
            inter_p: inter,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn labels_cover_all_classes() {
        let g = make_synthetic(&small(300, 3, 0.05, 0.01), 1).unwrap();
        assert_eq!(g.n(), 300);
        let mut seen: Vec<usize> = g.class_labels().iter().map(|c| c.unwrap()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn zero_probabilities_give_no_edges() {
        let g = make_synthetic(&small(100, 2, 0.0, 0.0), 0).unwrap();
        assert_eq!(g.adjacency().nnz(), 0);
    }

    #[test]
    fn edge_count_within_three_sigma() {
        let spec = small(400, 4, 0.05, 0.005);
        let (mean, var) = spec.edge_count_moments();
        for seed in 0..5 {
            let g = make_synthetic(&spec, seed).unwrap();
            let edges = (g.adjacency().nnz() / 2) as f64;
            assert!(
                (edges - mean).abs() <= 3.0 * var.sqrt(),
                "{edges} vs {mean}"
            );
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(
            make_synthetic(&small(10, 2, 1.5, 0.0), 0),
            Err(SynthError::Probability {
                name: "intra_p",
                ..
            })
        ));
        assert!(matches!(
            make_synthetic(&small(3, 5, 0.1, 0.1), 0),
            Err(SynthError::Classes { .. })
        ));
    }
}
