//! Brute-force reference implementations.

/// AUC-ROC by counting every (positive, negative) pair; ties count 1/2.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if !yi {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Average precision: walk distinct thresholds from high to low and sum
/// precision times the recall gained at each.
pub fn average_precision_walk(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&y| y).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, &y) in scores.iter().zip(labels) {
            if *s >= t {
                if y {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// Sum of distances from every point to `center`.
pub fn total_distance(dist: &mitigate::select::DistanceMatrix, center: usize) -> f64 {
    (0..dist.len()).map(|i| dist.get(center, i)).sum()
}
