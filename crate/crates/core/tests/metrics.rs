mod common;

use common::oracles::{auc_pairs, average_precision_walk};
use mitigate::eval::{auc_pr, auc_roc, EvalError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..=200);
    // coarse grids force ties on some instances
    let levels = [3, 10, 1000, 0][rng.gen_range(0..4)];
    let scores = (0..n)
        .map(|_| {
            if levels == 0 {
                rng.gen::<f64>()
            } else {
                rng.gen_range(0..levels) as f64
            }
        })
        .collect();
    let p = rng.gen_range(0.05..0.6);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
    labels[0] = true;
    labels[1] = false;
    (scores, labels)
}

#[test]
fn auc_roc_equals_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (s, y) = random_instance(&mut rng);
        assert_eq!(auc_roc(&s, &y).unwrap(), auc_pairs(&s, &y));
    }
}

#[test]
fn auc_pr_equals_threshold_walk() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let (s, y) = random_instance(&mut rng);
        let (a, b) = (auc_pr(&s, &y).unwrap(), average_precision_walk(&s, &y));
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn degenerate_inputs_are_errors() {
    assert!(matches!(
        auc_roc(&[0.1, 0.2], &[true, true]),
        Err(EvalError::SingleClass)
    ));
    assert!(auc_pr(&[0.1, 0.2], &[false, false]).is_err());
    assert!(matches!(
        auc_roc(&[0.1], &[true, false]),
        Err(EvalError::Length(1, 2))
    ));
}
