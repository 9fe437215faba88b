//! Synthetic anomaly injection: structural cliques and contextual
//! attribute swaps.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AnomalyKind, Graph, GraphError};

#[derive(Debug, Error)]
pub enum InjectError {
    #[error("clique size must be at least 2, got {0}")]
    CliqueSize(usize),
    #[error("candidate count must be at least 1")]
    NoCandidates,
    #[error("{requested} anomalies requested but only {available} nodes are eligible")]
    NotEnoughNodes { requested: usize, available: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct InjectionConfig {
    /// Clique size.
    pub p: usize,
    /// Number of cliques.
    pub q: usize,
    /// Candidates drawn per contextual target.
    pub k_cand: usize,
    pub n_contextual: usize,
    pub seed: u64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            p: 15,
            q: 5,
            k_cand: 50,
            n_contextual: 75,
            seed: 0,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self, n: usize) -> Result<(), InjectError> {
        if self.p < 2 {
            return Err(InjectError::CliqueSize(self.p));
        }
        if self.k_cand == 0 {
            return Err(InjectError::NoCandidates);
        }
        let requested = self.p * self.q + self.n_contextual;
        if requested > n {
            return Err(InjectError::NotEnoughNodes {
                requested,
                available: n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub structural_ids: Vec<usize>,
    pub contextual_ids: Vec<usize>,
    pub cliques: Vec<Vec<usize>>,
    pub added_edges: Vec<(usize, usize)>,
    /// `(target, source)`: the target's attributes were replaced by the source's.
    pub swapped_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct StructuralInjection {
    pub graph: Graph,
    pub cliques: Vec<Vec<usize>>,
    pub added_edges: Vec<(usize, usize)>,
}

impl StructuralInjection {
    pub fn node_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.cliques.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids
    }
}

#[derive(Debug, Clone)]
pub struct ContextualInjection {
    pub graph: Graph,
    pub targets: Vec<usize>,
    pub swapped_pairs: Vec<(usize, usize)>,
}

fn current_kinds(g: &Graph) -> Vec<Option<AnomalyKind>> {
    g.anomaly_kinds()
        .map(<[_]>::to_vec)
        .unwrap_or_else(|| vec![None; g.n()])
}

/// Picks `q` disjoint groups of `p` nodes uniformly at random and connects
/// each group into a clique.
pub fn inject_structural<R: Rng>(
    g: &Graph,
    p: usize,
    q: usize,
    rng: &mut R,
) -> Result<StructuralInjection, InjectError> {
    if p < 2 {
        return Err(InjectError::CliqueSize(p));
    }
    let kinds = current_kinds(g);
    let eligible: Vec<usize> = (0..g.n()).filter(|&v| kinds[v].is_none()).collect();
    let requested = p * q;
    if requested > eligible.len() {
        return Err(InjectError::NotEnoughNodes {
            requested,
            available: eligible.len(),
        });
    }
    let chosen: Vec<usize> = sample(rng, eligible.len(), requested)
        .into_iter()
        .map(|i| eligible[i])
        .collect();

    let mut kinds = kinds;
    let mut cliques = Vec::with_capacity(q);
    let mut added = Vec::new();
    for group in chosen.chunks(p) {
        let mut clique = group.to_vec();
        clique.sort_unstable();
        for (a, &u) in clique.iter().enumerate() {
            kinds[u] = Some(AnomalyKind::Structural);
            for &v in &clique[a + 1..] {
                if !g.adjacency().has_edge(u, v) {
                    added.push((u, v));
                }
            }
        }
        cliques.push(clique);
    }

    let mut out = g.clone();
    out.add_edges(&added)?;
    out.set_anomalies(kinds)?;
    Ok(StructuralInjection {
        graph: out,
        cliques,
        added_edges: added,
    })
}

/// For each of `count` targets drawn from nodes outside `exclude` (and not
/// already anomalous), draws `k_cand` other nodes and copies the attributes
/// of the one farthest away in Euclidean distance. Distances are taken on
/// the attributes as they were before this call; ties go to the lowest id.
pub fn inject_contextual<R: Rng>(
    g: &Graph,
    count: usize,
    k_cand: usize,
    rng: &mut R,
    exclude: &[usize],
) -> Result<ContextualInjection, InjectError> {
    if k_cand == 0 {
        return Err(InjectError::NoCandidates);
    }
    let n = g.n();
    let kinds = current_kinds(g);
    let excluded: BTreeSet<usize> = exclude.iter().copied().collect();
    let eligible: Vec<usize> = (0..n)
        .filter(|v| !excluded.contains(v) && kinds[*v].is_none())
        .collect();
    if count > eligible.len() {
        return Err(InjectError::NotEnoughNodes {
            requested: count,
            available: eligible.len(),
        });
    }
    if count > 0 && k_cand > n - 1 {
        return Err(InjectError::NotEnoughNodes {
            requested: k_cand,
            available: n - 1,
        });
    }

    let original = g.features().clone();
    let mut out = g.clone();
    let mut kinds = kinds;
    let mut targets = Vec::with_capacity(count);
    let mut swapped = Vec::with_capacity(count);
    for pick in sample(rng, eligible.len(), count) {
        let target = eligible[pick];
        let mut best: Option<(f64, usize)> = None;
        for idx in sample(rng, n - 1, k_cand) {
            // index into V \ {target}
            let cand = if idx >= target { idx + 1 } else { idx };
            let dist = original
                .row(target)
                .iter()
                .zip(original.row(cand))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = match best {
                Some((d, id)) if d > dist || (d == dist && id < cand) => Some((d, id)),
                _ => Some((dist, cand)),
            };
        }
        let (_, source) = best.expect("k_cand >= 1");
        out.features_mut()
            .row_mut(target)
            .assign(&original.row(source));
        kinds[target] = Some(AnomalyKind::Contextual);
        targets.push(target);
        swapped.push((target, source));
    }
    out.set_anomalies(kinds)?;
    Ok(ContextualInjection {
        graph: out,
        targets,
        swapped_pairs: swapped,
    })
}

/// Structural cliques first, then contextual anomalies on the remaining
/// nodes. Deterministic in `cfg.seed`.
pub fn inject_all(
    g: &Graph,
    cfg: &InjectionConfig,
) -> Result<(Graph, InjectionReport), InjectError> {
    cfg.validate(g.n())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let structural = inject_structural(g, cfg.p, cfg.q, &mut rng)?;
    let structural_ids = structural.node_ids();
    let contextual = inject_contextual(
        &structural.graph,
        cfg.n_contextual,
        cfg.k_cand,
        &mut rng,
        &structural_ids,
    )?;
    let mut contextual_ids = contextual.targets.clone();
    contextual_ids.sort_unstable();
    let report = InjectionReport {
        structural_ids,
        contextual_ids,
        cliques: structural.cliques,
        added_edges: structural.added_edges,
        swapped_pairs: contextual.swapped_pairs,
    };
    Ok((contextual.graph, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn blank(n: usize, k: usize) -> Graph {
        let feats = Array2::from_shape_fn((n, k), |(i, j)| (i * k + j) as f64);
        Graph::new(&[], feats, vec![None; n], 1).unwrap()
    }

    #[test]
    fn single_pair_clique_adds_one_edge() {
        let g = blank(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = inject_structural(&g, 2, 1, &mut rng).unwrap();
        assert_eq!(s.added_edges.len(), 1);
        assert_eq!(s.graph.adjacency().nnz(), 2);
        assert_eq!(s.graph.anomaly_count(), 2);
    }

    #[test]
    fn too_many_structural_nodes() {
        let g = blank(5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            inject_structural(&g, 3, 2, &mut rng),
            Err(InjectError::NotEnoughNodes { .. })
        ));
    }

    #[test]
    fn single_candidate_is_copied_exactly() {
        let g = blank(10, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = inject_contextual(&g, 3, 1, &mut rng, &[]).unwrap();
        for &(t, s) in &c.swapped_pairs {
            assert_ne!(t, s);
            assert_eq!(c.graph.features().row(t), g.features().row(s));
        }
    }

    #[test]
    fn identical_features_are_unchanged() {
        let g = Graph::new(&[], Array2::from_elem((6, 2), 1.5), vec![None; 6], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = inject_contextual(&g, 2, 3, &mut rng, &[]).unwrap();
        assert_eq!(c.graph.features(), g.features());
        assert_eq!(c.graph.anomaly_count(), 2);
    }

    #[test]
    fn chosen_source_is_farthest_candidate() {
        // replay the rng to recover the candidate sets
        let g = blank(40, 2);
        let seed = 9;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = inject_contextual(&g, 5, 6, &mut rng, &[]).unwrap();
        let mut replay = ChaCha8Rng::seed_from_u64(seed);
        let picks: Vec<usize> = sample(&mut replay, 40, 5).into_iter().collect();
        for (k, &pick) in picks.iter().enumerate() {
            let (target, source) = c.swapped_pairs[k];
            assert_eq!(target, pick);
            let cands: Vec<usize> = sample(&mut replay, 39, 6)
                .into_iter()
                .map(|i| if i >= target { i + 1 } else { i })
                .collect();
            let d = |v: usize| {
                let a = g.features().row(target);
                let b = g.features().row(v);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            };
            assert!(cands.contains(&source));
            for &other in &cands {
                assert!(d(source) >= d(other));
            }
        }
    }

    #[test]
    fn noop_config_leaves_graph_unchanged() {
        let g = blank(8, 2);
        let cfg = InjectionConfig {
            p: 2,
            q: 0,
            k_cand: 3,
            n_contextual: 0,
            seed: 0,
        };
        let (out, report) = inject_all(&g, &cfg).unwrap();
        assert_eq!(report, InjectionReport::default());
        assert_eq!(out.features(), g.features());
        assert_eq!(out.adjacency(), g.adjacency());
        assert_eq!(out.anomaly_count(), 0);
    }

    #[test]
    fn injection_is_seeded() {
        let g = blank(200, 4);
        let cfg = InjectionConfig {
            p: 5,
            q: 3,
            k_cand: 10,
            n_contextual: 15,
            seed: 21,
        };
        let (a, ra) = inject_all(&g, &cfg).unwrap();
        let (b, rb) = inject_all(&g, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.features(), b.features());
        assert_eq!(a.anomaly_count(), 30);
        let s: BTreeSet<_> = ra.structural_ids.iter().collect();
        assert!(ra.contextual_ids.iter().all(|v| !s.contains(v)));
    }

    #[test]
    fn invalid_configs() {
        let g = blank(10, 1);
        let mut cfg = InjectionConfig {
            p: 1,
            q: 1,
            k_cand: 1,
            n_contextual: 0,
            seed: 0,
        };
        assert!(matches!(
            inject_all(&g, &cfg),
            Err(InjectError::CliqueSize(1))
        ));
        cfg.p = 5;
        cfg.q = 2;
        cfg.n_contextual = 1;
        assert!(matches!(
            inject_all(&g, &cfg),
            Err(InjectError::NotEnoughNodes { .. })
        ));
    }
}
