mod common;

use common::{max_gradient_error, tiny_problem};
use mitigate::model::{backward_and_step, evaluate_loss, ModelState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..6 {
        let p = tiny_problem(seed, 1);
        let err = max_gradient_error(&p, 1e-5, 1e-7);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn two_layer_gradients_match_finite_differences() {
    for seed in 0..4 {
        let p = tiny_problem(seed, 2);
        let err = max_gradient_error(&p, 1e-5, 1e-7);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn gradients_without_uncertainty_term() {
    let mut p = tiny_problem(3, 1);
    p.cfg.uncertainty_loss = false;
    assert!(max_gradient_error(&p, 1e-5, 1e-7) < 1e-4);
}

#[test]
fn fifty_adam_steps_reduce_the_loss() {
    let p = tiny_problem(1, 1);
    let targets = p.targets();
    let start = evaluate_loss(&p.input, &p.params, &targets, &p.cfg)
        .unwrap()
        .total;
    let mut state = ModelState::from_params(p.params.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        backward_and_step(&mut state, &p.input, &targets, &p.cfg, &mut rng).unwrap();
    }
    let end = evaluate_loss(&p.input, &state.params, &targets, &p.cfg)
        .unwrap()
        .total;
    assert!(end < start, "{start} -> {end}");
    assert_eq!(state.step_count(), 50);
    assert!(state.params.all_finite());
}
