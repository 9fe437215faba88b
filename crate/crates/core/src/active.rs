//! The active learning loop: train, score, select, query the oracle,
//! update the label sets, repeat until the budget is spent.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{baseline_query, metric_report, BaselineKind, EvalError, MetricReport};
use crate::graph::{Graph, Splits};
use crate::model::{
    backward_and_step, forward, znorm, GraphInput, LossReport, LossTargets, ModelError, ModelState,
    ScoreBundle, TrainConfig,
};
use crate::select::{
    informativeness, kmedoids, masked_features, pairwise_distance, select_batch, top_by_score,
    SelectError, SelectionConfig,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("graph has no anomaly ground truth to answer queries")]
    NoGroundTruth,
    #[error("oracle has no label for node {0}")]
    UnknownNode(usize),
    #[error("node {0} is not in the unlabeled pool")]
    NotInPool(usize),
    #[error("pool exhausted: {needed} nodes needed, {available} left")]
    PoolExhausted { needed: usize, available: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("debug dump: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Mitigate,
    Random,
    MostPositive,
    PositiveDiverse,
    Diverse,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Mitigate,
        Strategy::Random,
        Strategy::MostPositive,
        Strategy::PositiveDiverse,
        Strategy::Diverse,
    ];

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Strategy::Mitigate => None,
            Strategy::Random => Some(BaselineKind::Random),
            Strategy::MostPositive => Some(BaselineKind::MostPositive),
            Strategy::PositiveDiverse => Some(BaselineKind::PositiveDiverse),
            Strategy::Diverse => Some(BaselineKind::Diverse),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mitigate => "mitigate",
            Strategy::Random => "random",
            Strategy::MostPositive => "most_positive",
            Strategy::PositiveDiverse => "positive_diverse",
            Strategy::Diverse => "diverse",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

/// Components removed from the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub no_uncertainty_loss: bool,
    /// Informativeness is the confidence difference alone.
    pub no_entropy_score: bool,
    /// Informativeness is the z-scored entropy alone.
    pub no_confidence_difference: bool,
    /// Distances are taken on the raw embedding.
    pub no_masked_aggregation: bool,
    /// Top-`b` informativeness over the whole pool.
    pub no_clustering: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation {
        no_uncertainty_loss: false,
        no_entropy_score: false,
        no_confidence_difference: false,
        no_masked_aggregation: false,
        no_clustering: false,
    };
}

/// Which anomaly score the run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// `znorm(e) + φ·znorm(p)`
    #[default]
    Hybrid,
    /// `znorm(p)`
    AnomalyOnly,
    /// `znorm(e)`
    EntropyOnly,
}

impl ScoreKind {
    pub fn combine(self, entropy: &[f64], anomaly: &[f64], phi: f64) -> Vec<f64> {
        match self {
            ScoreKind::Hybrid => crate::model::hybrid_score(entropy, anomaly, phi),
            ScoreKind::AnomalyOnly => znorm(anomaly),
            ScoreKind::EntropyOnly => znorm(entropy),
        }
    }
}

/// Score whose validation AUC-ROC enters the early-stopping criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopScore {
    /// The run's reported score kind.
    #[default]
    Reported,
    /// The anomaly predictor output alone.
    Predictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub budget: usize,
    pub strategy: Strategy,
    pub ablation: Ablation,
    pub score: ScoreKind,
    pub early_stop: EarlyStopScore,
    /// Re-initialize the model before every training phase.
    pub cold_start: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            selection: SelectionConfig::default(),
            budget: 80,
            strategy: Strategy::Mitigate,
            ablation: Ablation::NONE,
            score: ScoreKind::Hybrid,
            early_stop: EarlyStopScore::Reported,
            cold_start: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        self.train.validate().map_err(RunError::Config)?;
        self.selection.validate().map_err(RunError::Config)?;
        if !self.budget.is_multiple_of(self.selection.b) {
            return Err(RunError::Config(format!(
                "budget {} is not a multiple of batch size {}",
                self.budget, self.selection.b
            )));
        }
        crate::eval::Variant {
            ablation: self.ablation,
            score: self.score,
        }
        .validate()?;
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.budget / self.selection.b
    }
}

/// Simulated annotator backed by injected ground truth.
#[derive(Debug, Clone)]
pub struct Oracle {
    truth: Vec<bool>,
}

impl Oracle {
    pub fn new(truth: Vec<bool>) -> Self {
        Self { truth }
    }

    pub fn from_graph(g: &Graph) -> Result<Self, RunError> {
        g.anomaly_labels()
            .map(Self::new)
            .ok_or(RunError::NoGroundTruth)
    }

    pub fn label(&self, ids: &[usize]) -> Result<Vec<bool>, RunError> {
        ids.iter()
            .map(|&i| self.truth.get(i).copied().ok_or(RunError::UnknownNode(i)))
            .collect()
    }

    pub fn truth(&self) -> &[bool] {
        &self.truth
    }
}

pub fn oracle_label(ids: &[usize], oracle: &Oracle) -> Result<Vec<bool>, RunError> {
    oracle.label(ids)
}

/// Labeled and unlabeled partitions across iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelState {
    class_labeled: Vec<(usize, usize)>,
    ad_labeled: Vec<(usize, bool)>,
    normal_ids: Vec<usize>,
    anomaly_ids: Vec<usize>,
    unlabeled_pool: Vec<usize>,
    labeled_mask: Vec<bool>,
    selected_count: usize,
}

impl LabelState {
    /// The initial classification-labeled nodes, all regarded as normal.
    pub fn new(g: &Graph, splits: &Splits) -> Result<Self, RunError> {
        let mut labeled_mask = vec![false; g.n()];
        let mut class_labeled = Vec::with_capacity(splits.initial_class_labeled.len());
        for &i in &splits.initial_class_labeled {
            let class = g.class_labels()[i].ok_or_else(|| {
                RunError::Config(format!("initial labeled node {i} has no class label"))
            })?;
            class_labeled.push((i, class));
            labeled_mask[i] = true;
        }
        let mut unlabeled_pool: Vec<usize> = splits
            .pool_ids
            .iter()
            .copied()
            .filter(|&i| !labeled_mask[i])
            .collect();
        unlabeled_pool.sort_unstable();
        Ok(Self {
            ad_labeled: splits
                .initial_class_labeled
                .iter()
                .map(|&i| (i, false))
                .collect(),
            normal_ids: splits.initial_class_labeled.clone(),
            anomaly_ids: Vec::new(),
            class_labeled,
            unlabeled_pool,
            labeled_mask,
            selected_count: 0,
        })
    }

    pub fn targets(&self) -> LossTargets<'_> {
        LossTargets {
            class_labeled: &self.class_labeled,
            ad_labeled: &self.ad_labeled,
            normal_ids: &self.normal_ids,
            anomaly_ids: &self.anomaly_ids,
        }
    }

    pub fn record(&mut self, ids: &[usize], labels: &[bool]) -> Result<(), RunError> {
        assert_eq!(ids.len(), labels.len());
        for &i in ids {
            if self.unlabeled_pool.binary_search(&i).is_err() {
                return Err(RunError::NotInPool(i));
            }
        }
        for (&i, &y) in ids.iter().zip(labels) {
            let pos = self
                .unlabeled_pool
                .binary_search(&i)
                .map_err(|_| RunError::NotInPool(i))?;
            self.unlabeled_pool.remove(pos);
            self.labeled_mask[i] = true;
            self.ad_labeled.push((i, y));
            if y {
                self.anomaly_ids.push(i);
            } else {
                self.normal_ids.push(i);
            }
        }
        self.selected_count += ids.len();
        Ok(())
    }

    pub fn class_labeled(&self) -> &[(usize, usize)] {
        &self.class_labeled
    }

    pub fn ad_labeled(&self) -> &[(usize, bool)] {
        &self.ad_labeled
    }

    pub fn normal_ids(&self) -> &[usize] {
        &self.normal_ids
    }

    pub fn anomaly_ids(&self) -> &[usize] {
        &self.anomaly_ids
    }

    pub fn unlabeled_pool(&self) -> &[usize] {
        &self.unlabeled_pool
    }

    pub fn labeled_mask(&self) -> &[bool] {
        &self.labeled_mask
    }

    /// Nodes queried from the oracle so far.
    pub fn selected_count(&self) -> usize {
        self.selected_count
    }
}

/// Tracks the best value seen and when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    waited: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: None,
            waited: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        if value > self.best {
            self.best = value;
            self.best_epoch = Some(epoch);
            self.waited = 0;
            return StopDecision::Improved;
        }
        self.waited += 1;
        if self.waited >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

/// Ground truth needed to score the validation split.
#[derive(Debug, Clone, Copy)]
pub struct ValidationSet<'a> {
    pub ids: &'a [usize],
    pub anomaly: &'a [bool],
    pub class_labels: &'a [Option<usize>],
}

impl ValidationSet<'_> {
    /// Validation AUC-ROC of `scores` (0.5 when undefined) plus accuracy on
    /// in-distribution validation nodes.
    pub fn criterion(&self, scores: &[f64], z: &ndarray::Array2<f64>) -> f64 {
        let subset: Vec<f64> = self.ids.iter().map(|&i| scores[i]).collect();
        let report = metric_report(&subset, self.anomaly, z, self.class_labels, self.ids);
        report.auc_roc.unwrap_or(0.5) + report.accuracy.unwrap_or(0.0)
    }

    pub fn report(&self, scores: &[f64], z: &ndarray::Array2<f64>) -> MetricReport {
        let subset: Vec<f64> = self.ids.iter().map(|&i| scores[i]).collect();
        metric_report(&subset, self.anomaly, z, self.class_labels, self.ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_criterion: f64,
    pub last_loss: Option<LossReport>,
}

fn stopping_scores(bundle: &ScoreBundle, cfg: &RunConfig) -> Vec<f64> {
    match cfg.early_stop {
        EarlyStopScore::Reported => {
            cfg.score
                .combine(&bundle.entropy, &bundle.anomaly, cfg.train.phi)
        }
        EarlyStopScore::Predictor => bundle.anomaly.clone(),
    }
}

/// Trains for up to `max_epochs`, evaluating the validation criterion after
/// every update, and restores the best state seen.
pub fn train_phase(
    state: &mut ModelState,
    input: &GraphInput,
    labels: &LabelState,
    cfg: &RunConfig,
    val: &ValidationSet<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<TrainSummary, RunError> {
    let mut train = cfg.train.clone();
    train.uncertainty_loss = train.uncertainty_loss && !cfg.ablation.no_uncertainty_loss;
    let targets = labels.targets();
    let mut stopper = EarlyStopping::new(train.patience);
    let mut best_state = state.clone();
    let mut epochs = 0;
    let mut last_loss = None;
    for epoch in 0..train.max_epochs {
        last_loss = Some(backward_and_step(state, input, &targets, &train, rng)?);
        epochs += 1;
        let fwd = forward(input, &state.params)?;
        let bundle = ScoreBundle::from_forward(fwd, train.phi);
        let value = val.criterion(&stopping_scores(&bundle, cfg), &bundle.z);
        match stopper.observe(epoch, value) {
            StopDecision::Improved => best_state = state.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    if stopper.best_epoch().is_some() {
        *state = best_state;
    }
    Ok(TrainSummary {
        epochs,
        best_epoch: stopper.best_epoch(),
        best_criterion: stopper.best(),
        last_loss,
    })
}

/// Outcome of one selection round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRecord {
    pub t: usize,
    pub selected: Vec<usize>,
    /// Informativeness of the selected nodes, MITIGATE only.
    pub info: Vec<f64>,
    pub entropy_z: Vec<f64>,
    pub conf_difference: Vec<f64>,
    pub medoids: Vec<usize>,
    /// `(node, medoid node)` for every clustered pool node.
    pub assignment: Vec<(usize, usize)>,
}

/// Raw selection without the bookkeeping, for any strategy.
pub fn query(
    bundle: &ScoreBundle,
    g: &Graph,
    labels: &LabelState,
    cfg: &RunConfig,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<QueryRecord, RunError> {
    let b = cfg.selection.b;
    let pool = labels.unlabeled_pool();
    if pool.len() < b {
        return Err(RunError::PoolExhausted {
            needed: b,
            available: pool.len(),
        });
    }
    if let Some(kind) = cfg.strategy.baseline() {
        let selected = baseline_query(kind, &bundle.h, &bundle.anomaly, pool, b, rng)?;
        return Ok(QueryRecord {
            t,
            selected,
            info: Vec::new(),
            entropy_z: Vec::new(),
            conf_difference: Vec::new(),
            medoids: Vec::new(),
            assignment: Vec::new(),
        });
    }

    let ablation = &cfg.ablation;
    let n_selected = if cfg.selection.exponent_includes_initial {
        labels.ad_labeled().len()
    } else {
        labels.selected_count()
    };
    let info = if ablation.no_entropy_score {
        bundle.conf_difference.clone()
    } else if ablation.no_confidence_difference {
        bundle.conf_classifier.clone()
    } else {
        informativeness(
            &bundle.entropy,
            &bundle.conf_difference,
            cfg.selection.tau,
            n_selected,
        )
    };

    let (selected, medoids, assignment) = if ablation.no_clustering {
        (top_by_score(pool, &info, b), Vec::new(), Vec::new())
    } else {
        let dist = if ablation.no_masked_aggregation {
            pairwise_distance(&bundle.h, pool)
        } else {
            let feats = masked_features(&bundle.h, g.adjacency(), labels.labeled_mask(), t);
            pairwise_distance(&feats.h_hat, pool)
        };
        let m = cfg.selection.m.min(pool.len());
        let clustering = kmedoids(&dist, m, rng, cfg.selection.max_medoid_iters)?;
        let medoids = clustering.medoid_ids(&dist);
        let assignment = dist
            .ids()
            .iter()
            .zip(&clustering.assignment)
            .map(|(&v, &c)| (v, medoids[c]))
            .collect();
        (select_batch(&medoids, &info, b)?, medoids, assignment)
    };

    Ok(QueryRecord {
        t,
        info: selected.iter().map(|&i| info[i]).collect(),
        entropy_z: selected
            .iter()
            .map(|&i| bundle.conf_classifier[i])
            .collect(),
        conf_difference: selected
            .iter()
            .map(|&i| bundle.conf_difference[i])
            .collect(),
        selected,
        medoids,
        assignment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Oracle queries spent before this round's training.
    pub budget_used: usize,
    pub selected: Vec<usize>,
    pub batch_anomalies: usize,
    /// Cumulative anomalies found, including this round.
    pub anomalies_found: usize,
    pub epochs: usize,
    pub val: MetricReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub strategy: Strategy,
    pub variant: String,
    pub config: RunConfig,
    pub per_iteration: Vec<IterationRecord>,
    pub anomalies_found: usize,
    pub final_val: MetricReport,
    pub final_test: MetricReport,
    pub final_scores: Vec<NodeScore>,
}

impl RunResult {
    pub fn selected(&self) -> Vec<usize> {
        self.per_iteration
            .iter()
            .flat_map(|r| r.selected.iter().copied())
            .collect()
    }

    /// Per-iteration metrics as CSV text.
    pub fn iterations_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out =
            String::from("t,budget_used,anomalies_found,val_auc_roc,val_auc_pr,val_acc\n");
        for r in &self.per_iteration {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.t,
                r.budget_used,
                r.anomalies_found,
                fmt(r.val.auc_roc),
                fmt(r.val.auc_pr),
                fmt(r.val.accuracy)
            ));
        }
        out
    }
}

/// Independent random streams derived from the run seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn run(g: &Graph, splits: &Splits, cfg: &RunConfig) -> Result<RunResult, RunError> {
    run_with_debug(g, splits, cfg, None)
}

/// The full loop. With `debug` set, one JSON line per selection round is
/// written to it.
pub fn run_with_debug(
    g: &Graph,
    splits: &Splits,
    cfg: &RunConfig,
    mut debug: Option<&mut dyn Write>,
) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let oracle = Oracle::from_graph(g)?;
    let input = GraphInput::new(g);
    let mut init_rng = stream(cfg.seed, 0);
    let mut train_rng = stream(cfg.seed, 1);
    let mut select_rng = stream(cfg.seed, 2);

    let mut state = ModelState::new(g.attr_dim(), g.num_classes(), &cfg.train, &mut init_rng);
    let mut labels = LabelState::new(g, splits)?;
    let val = ValidationSet {
        ids: &splits.val_ids,
        anomaly: oracle.truth(),
        class_labels: g.class_labels(),
    };

    let mut per_iteration = Vec::with_capacity(cfg.iterations());
    let mut found = 0;
    for t in 1..=cfg.iterations() {
        if cfg.cold_start {
            state = ModelState::new(g.attr_dim(), g.num_classes(), &cfg.train, &mut init_rng);
        }
        let budget_used = labels.selected_count();
        let summary = train_phase(&mut state, &input, &labels, cfg, &val, &mut train_rng)?;
        let bundle = ScoreBundle::from_forward(forward(&input, &state.params)?, cfg.train.phi);
        let val_report = val.report(
            &cfg.score
                .combine(&bundle.entropy, &bundle.anomaly, cfg.train.phi),
            &bundle.z,
        );

        let record = query(&bundle, g, &labels, cfg, t, &mut select_rng)?;
        let answers = oracle_label(&record.selected, &oracle)?;
        labels.record(&record.selected, &answers)?;
        let batch_anomalies = answers.iter().filter(|&&y| y).count();
        found += batch_anomalies;
        log::debug!(
            "t={t} epochs={} selected={:?} anomalies={batch_anomalies}",
            summary.epochs,
            record.selected
        );
        if let Some(w) = debug.as_deref_mut() {
            serde_json::to_writer(&mut *w, &record).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        per_iteration.push(IterationRecord {
            t,
            budget_used,
            selected: record.selected,
            batch_anomalies,
            anomalies_found: found,
            epochs: summary.epochs,
            val: val_report,
        });
    }

    if cfg.cold_start {
        state = ModelState::new(g.attr_dim(), g.num_classes(), &cfg.train, &mut init_rng);
    }
    train_phase(&mut state, &input, &labels, cfg, &val, &mut train_rng)?;
    let bundle = ScoreBundle::from_forward(forward(&input, &state.params)?, cfg.train.phi);
    let final_val = val.report(
        &cfg.score
            .combine(&bundle.entropy, &bundle.anomaly, cfg.train.phi),
        &bundle.z,
    );

    // test-time z-scores use test-node statistics only
    let test = &splits.test_ids;
    let e_test: Vec<f64> = test.iter().map(|&i| bundle.entropy[i]).collect();
    let p_test: Vec<f64> = test.iter().map(|&i| bundle.anomaly[i]).collect();
    let s_test = cfg.score.combine(&e_test, &p_test, cfg.train.phi);
    let final_test = metric_report(&s_test, oracle.truth(), &bundle.z, g.class_labels(), test);

    Ok(RunResult {
        seed: cfg.seed,
        strategy: cfg.strategy,
        variant: crate::eval::Variant {
            ablation: cfg.ablation,
            score: cfg.score,
        }
        .label(),
        config: cfg.clone(),
        per_iteration,
        anomalies_found: found,
        final_val,
        final_test,
        final_scores: test
            .iter()
            .zip(s_test)
            .map(|(&node, score)| NodeScore { node, score })
            .collect(),
    })
}
