//! Ranking metrics, baseline query strategies and ablation variants.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::active::{self, Ablation, RunConfig, RunError, RunResult, ScoreKind};
use crate::graph::{Graph, Splits};
use crate::select::top_by_score;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("AUC-ROC needs at least one positive and one negative label")]
    SingleClass,
    #[error("AUC-PR needs at least one positive label")]
    NoPositives,
    #[error("scores and labels differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("pool of {available} nodes cannot supply {requested}")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("contradictory variant: {0}")]
    Contradictory(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
    pub accuracy: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_len(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Length(scores.len(), labels.len()));
    }
    Ok(())
}

/// Mann-Whitney estimate of `P(score_pos > score_neg) + ½ P(tie)` using
/// mid-ranks for tied scores.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_len(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (1-based) share their mean
        let mid = (start + end + 1) as f64 / 2.0;
        let pos = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += mid * pos as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision over descending scores. Tied scores form a single
/// threshold step.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_len(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let pos = order[start..end].iter().filter(|&&i| labels[i]).count();
        tp += pos;
        seen += end - start;
        if pos > 0 {
            ap += (pos as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
        start = end;
    }
    Ok(ap)
}

/// Fraction of `ids` whose argmax class (lowest index on ties) matches the
/// label. Nodes without a label are skipped; `None` if nothing is left.
pub fn accuracy(z: &Array2<f64>, labels: &[Option<usize>], ids: &[usize]) -> Option<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for &i in ids {
        let Some(y) = labels[i] else { continue };
        let row = z.row(i);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        total += 1;
        if best == y {
            correct += 1;
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

/// Scores and labels over `ids`, plus classification accuracy over the
/// in-distribution subset of `ids`.
pub fn metric_report(
    scores: &[f64],
    anomaly: &[bool],
    z: &Array2<f64>,
    class_labels: &[Option<usize>],
    ids: &[usize],
) -> MetricReport {
    let labels: Vec<bool> = ids.iter().map(|&i| anomaly[i]).collect();
    let n_pos = labels.iter().filter(|&&y| y).count();
    let in_dist: Vec<usize> = ids.iter().copied().filter(|&i| !anomaly[i]).collect();
    MetricReport {
        auc_roc: auc_roc(scores, &labels).ok(),
        auc_pr: auc_pr(scores, &labels).ok(),
        accuracy: accuracy(z, class_labels, &in_dist),
        n_pos,
        n_neg: labels.len() - n_pos,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    MostPositive,
    PositiveDiverse,
    Diverse,
}

fn sq_dist(h: &Array2<f64>, a: usize, b: usize) -> f64 {
    h.row(a)
        .iter()
        .zip(h.row(b))
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Baseline query strategies over `pool`:
///
/// * `Random`: uniform sample.
/// * `MostPositive`: top-`b` anomaly scores.
/// * `PositiveDiverse`: among the top-`2b` anomaly scores, start from the
///   highest and repeatedly add the candidate farthest (in `h`) from the
///   nodes already picked.
/// * `Diverse`: k-means++ seeding in `h`; first pick uniform, later picks
///   with probability proportional to squared distance to the nearest pick.
pub fn baseline_query<R: Rng>(
    kind: BaselineKind,
    h: &Array2<f64>,
    anomaly: &[f64],
    pool: &[usize],
    b: usize,
    rng: &mut R,
) -> Result<Vec<usize>, EvalError> {
    if pool.len() < b {
        return Err(EvalError::PoolTooSmall {
            requested: b,
            available: pool.len(),
        });
    }
    if b == 0 {
        return Ok(Vec::new());
    }
    let picked = match kind {
        BaselineKind::Random => rand::seq::index::sample(rng, pool.len(), b)
            .into_iter()
            .map(|i| pool[i])
            .collect(),
        BaselineKind::MostPositive => top_by_score(pool, anomaly, b),
        BaselineKind::PositiveDiverse => {
            let candidates = top_by_score(pool, anomaly, (2 * b).min(pool.len()));
            let mut picked = vec![candidates[0]];
            let mut nearest: Vec<f64> = candidates
                .iter()
                .map(|&c| sq_dist(h, c, picked[0]))
                .collect();
            while picked.len() < b {
                // candidates are in descending score order, so the first
                // maximum wins ties
                let mut best: Option<usize> = None;
                for (k, &c) in candidates.iter().enumerate() {
                    if picked.contains(&c) {
                        continue;
                    }
                    match best {
                        Some(bk) if nearest[bk] >= nearest[k] => {}
                        _ => best = Some(k),
                    }
                }
                let next = candidates[best.expect("2b >= b candidates")];
                picked.push(next);
                for (k, &c) in candidates.iter().enumerate() {
                    nearest[k] = nearest[k].min(sq_dist(h, c, next));
                }
            }
            picked
        }
        BaselineKind::Diverse => {
            let first = pool[rng.gen_range(0..pool.len())];
            let mut picked = vec![first];
            let mut taken = vec![false; pool.len()];
            taken[pool.iter().position(|&v| v == first).expect("in pool")] = true;
            let mut nearest: Vec<f64> = pool.iter().map(|&v| sq_dist(h, v, first)).collect();
            while picked.len() < b {
                let total: f64 = nearest
                    .iter()
                    .zip(&taken)
                    .filter(|(_, &t)| !t)
                    .map(|(d, _)| d)
                    .sum();
                let free: Vec<usize> = (0..pool.len()).filter(|&k| !taken[k]).collect();
                let k = if total > 0.0 {
                    let mut target = rng.gen::<f64>() * total;
                    let mut chosen = *free.last().expect("pool larger than picks");
                    for &k in &free {
                        if nearest[k] <= 0.0 {
                            continue;
                        }
                        if target < nearest[k] {
                            chosen = k;
                            break;
                        }
                        target -= nearest[k];
                    }
                    if nearest[chosen] <= 0.0 {
                        // rounding fell off the end; take the last positive mass
                        chosen = *free
                            .iter()
                            .rev()
                            .find(|&&k| nearest[k] > 0.0)
                            .expect("total > 0");
                    }
                    chosen
                } else {
                    free[rng.gen_range(0..free.len())]
                };
                taken[k] = true;
                let next = pool[k];
                picked.push(next);
                for (j, &v) in pool.iter().enumerate() {
                    nearest[j] = nearest[j].min(sq_dist(h, v, next));
                }
            }
            picked
        }
    };
    Ok(picked)
}

/// An ablation flag set plus the final-score choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Variant {
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub score: ScoreKind,
}

impl Variant {
    pub const FULL: Variant = Variant {
        ablation: Ablation::NONE,
        score: ScoreKind::Hybrid,
    };

    pub fn validate(&self) -> Result<(), EvalError> {
        let a = &self.ablation;
        if a.no_entropy_score && a.no_confidence_difference {
            return Err(EvalError::Contradictory(
                "removing both the entropy score and the confidence difference leaves no informativeness",
            ));
        }
        Ok(())
    }

    /// Short label used in result files.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        let a = &self.ablation;
        for (flag, name) in [
            (a.no_uncertainty_loss, "no_uncertainty_loss"),
            (a.no_entropy_score, "no_entropy_score"),
            (a.no_confidence_difference, "no_confidence_difference"),
            (a.no_masked_aggregation, "no_masked_aggregation"),
            (a.no_clustering, "no_clustering"),
        ] {
            if flag {
                parts.push(name);
            }
        }
        match self.score {
            ScoreKind::Hybrid => {}
            ScoreKind::AnomalyOnly => parts.push("score_a"),
            ScoreKind::EntropyOnly => parts.push("score_e"),
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }

    /// The five single-component ablations.
    pub fn ablations() -> Vec<Variant> {
        let base = Ablation::NONE;
        [
            Ablation {
                no_uncertainty_loss: true,
                ..base
            },
            Ablation {
                no_entropy_score: true,
                ..base
            },
            Ablation {
                no_confidence_difference: true,
                ..base
            },
            Ablation {
                no_masked_aggregation: true,
                ..base
            },
            Ablation {
                no_clustering: true,
                ..base
            },
        ]
        .into_iter()
        .map(|ablation| Variant {
            ablation,
            score: ScoreKind::Hybrid,
        })
        .collect()
    }
}

/// Runs the active loop with `variant` applied on top of `cfg`.
pub fn run_variant(
    variant: Variant,
    g: &Graph,
    splits: &Splits,
    cfg: &RunConfig,
) -> Result<RunResult, RunError> {
    variant.validate()?;
    let mut cfg = cfg.clone();
    cfg.ablation = variant.ablation;
    cfg.score = variant.score;
    active::run(g, splits, &cfg)
}
