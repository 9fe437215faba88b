#![allow(dead_code)]

pub mod oracles;
pub mod props;

use mitigate::graph::AnomalyKind;
use mitigate::inject::{inject_all, InjectionConfig};
use mitigate::model::{
    evaluate_loss, loss_and_gradients, GraphInput, LossTargets, Params, TrainConfig,
};
use mitigate::synth::{make_synthetic, SyntheticSpec};
use mitigate::{split_dataset, Graph, RunConfig, SelectionConfig, Splits};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A 10-node, 3-class graph with two labeled anomalies and random weights.
pub struct TinyProblem {
    pub graph: Graph,
    pub input: GraphInput,
    pub params: Params,
    pub class_labeled: Vec<(usize, usize)>,
    pub ad_labeled: Vec<(usize, bool)>,
    pub normal_ids: Vec<usize>,
    pub anomaly_ids: Vec<usize>,
    pub cfg: TrainConfig,
}

impl TinyProblem {
    pub fn targets(&self) -> LossTargets<'_> {
        LossTargets {
            class_labeled: &self.class_labeled,
            ad_labeled: &self.ad_labeled,
            normal_ids: &self.normal_ids,
            anomaly_ids: &self.anomaly_ids,
        }
    }
}

pub fn tiny_problem(seed: u64, layers: usize) -> TinyProblem {
    let n = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        // a ring keeps every node connected; extra chords are random
        edges.push((u, (u + 1) % n));
        for v in u + 2..n {
            if rng.gen_bool(0.25) {
                edges.push((u, v));
            }
        }
    }
    let features = Array2::from_shape_simple_fn((n, 5), || rng.sample::<f64, _>(StandardNormal));
    let labels = (0..n).map(|i| Some(i % 3)).collect();
    let mut graph = Graph::new(&edges, features, labels, 3).unwrap();
    let mut kinds = vec![None; n];
    kinds[8] = Some(AnomalyKind::Structural);
    kinds[9] = Some(AnomalyKind::Contextual);
    graph.set_anomalies(kinds).unwrap();

    let cfg = TrainConfig {
        hidden_dim: 6,
        encoder_layers: layers,
        ..TrainConfig::default()
    };
    let mut params = Params::init(5, cfg.hidden_dim, layers, 3, &mut rng);
    params.predictor_bias = rng.gen_range(-0.5..0.5);
    let input = GraphInput::new(&graph);
    let normal_ids: Vec<usize> = (0..6).collect();
    TinyProblem {
        class_labeled: normal_ids.iter().map(|&i| (i, i % 3)).collect(),
        ad_labeled: normal_ids
            .iter()
            .map(|&i| (i, false))
            .chain([(8, true), (9, true)])
            .collect(),
        anomaly_ids: vec![8, 9],
        normal_ids,
        graph,
        input,
        params,
        cfg,
    }
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter, with relative error
/// `|a - f| / max(|a|, |f|, floor)`.
pub fn max_gradient_error(problem: &TinyProblem, step: f64, floor: f64) -> f64 {
    let targets = problem.targets();
    let (_, grads) =
        loss_and_gradients(&problem.input, &problem.params, &targets, &problem.cfg).unwrap();
    let analytic: Vec<f64> = grads
        .slices()
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();
    let mut worst = 0.0f64;
    let mut flat = 0;
    let tensors = problem.params.slices().len();
    for t in 0..tensors {
        let len = problem.params.slices()[t].len();
        for k in 0..len {
            let mut plus = problem.params.clone();
            plus.slices_mut()[t][k] += step;
            let mut minus = problem.params.clone();
            minus.slices_mut()[t][k] -= step;
            let lp = evaluate_loss(&problem.input, &plus, &targets, &problem.cfg)
                .unwrap()
                .total;
            let lm = evaluate_loss(&problem.input, &minus, &targets, &problem.cfg)
                .unwrap()
                .total;
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic[flat];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
            flat += 1;
        }
    }
    worst
}

/// A few-hundred-node injected SBM with its splits, for loop tests.
pub fn small_dataset(seed: u64) -> (Graph, Splits) {
    let spec = SyntheticSpec {
        n: 400,
        num_classes: 4,
        attr_dim: 16,
        intra_p: 0.03,
        inter_p: 0.002,
        ..SyntheticSpec::default()
    };
    let g = make_synthetic(&spec, seed).unwrap();
    let inj = InjectionConfig {
        p: 6,
        q: 3,
        k_cand: 20,
        n_contextual: 18,
        seed,
    };
    let (g, _) = inject_all(&g, &inj).unwrap();
    let splits = split_dataset(&g, 5, 60, 100, seed).unwrap();
    (g, splits)
}

/// A short run configuration sized for [`small_dataset`].
pub fn small_run_config(seed: u64) -> RunConfig {
    RunConfig {
        train: TrainConfig {
            hidden_dim: 16,
            max_epochs: 40,
            patience: 10,
            ..TrainConfig::default()
        },
        selection: SelectionConfig {
            m: 8,
            b: 4,
            ..SelectionConfig::default()
        },
        budget: 16,
        seed,
        ..RunConfig::default()
    }
}
