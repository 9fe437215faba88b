//! Experiment runner: declarative config, dataset preparation, seeded runs
//! and aggregation into CSV tables.
//!
//! A config is a TOML file:
//!
//! ```toml
//! output_dir = "results/demo"
//! seeds = [0, 1, 2, 3, 4]
//! strategies = ["mitigate", "random", "most_positive"]
//! budget = 80
//!
//! [dataset.synthetic]        # or: [dataset] path = "data/citeseer"
//! n = 3000
//! num_classes = 6
//!
//! [injection]                # applied when the dataset has no anomalies.csv
//! p = 15
//! q = 5
//!
//! [train]
//! alpha = 0.5
//!
//! [selection]
//! m = 24
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::active::{
    run, Ablation, EarlyStopScore, RunConfig, RunError, RunResult, ScoreKind, Strategy,
};
use crate::eval::Variant;
use crate::graph::{load_graph, split_dataset, Graph, GraphError, Splits};
use crate::inject::{inject_all, InjectError, InjectionConfig};
use crate::model::TrainConfig;
use crate::select::SelectionConfig;
use crate::synth::{make_synthetic, SynthError, SyntheticSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Inject(#[from] InjectError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {total} runs failed; see log")]
    PartialFailure { failed: usize, total: usize },
}

impl ExperimentError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Run(RunError::Config(_)) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl Default for DatasetSource {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: Some(SyntheticSpec::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub injection: InjectionConfig,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub budget: usize,
    pub strategies: Vec<Strategy>,
    pub ablation: Ablation,
    pub score: ScoreKind,
    /// Additional MITIGATE variants run alongside the strategies.
    pub extra_variants: Vec<Variant>,
    pub early_stop: EarlyStopScore,
    pub cold_start: bool,
    pub per_class: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Seed for dataset synthesis, injection and splits.
    pub data_seed: u64,
    /// Regenerate dataset and splits from each run seed instead of `data_seed`.
    pub resample_data_per_seed: bool,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Write per-round selection dumps next to each run.
    pub debug_dump: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            dataset: DatasetSource::default(),
            injection: InjectionConfig::default(),
            train: run.train,
            selection: run.selection,
            budget: run.budget,
            strategies: vec![Strategy::Mitigate],
            ablation: Ablation::NONE,
            score: ScoreKind::Hybrid,
            extra_variants: Vec::new(),
            early_stop: EarlyStopScore::Reported,
            cold_start: false,
            per_class: 20,
            n_val: 500,
            n_test: 1000,
            data_seed: 0,
            resample_data_per_seed: false,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("results"),
            debug_dump: false,
        }
    }
}

/// One (strategy, variant) pair to run for every seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub strategy: Strategy,
    pub variant: Variant,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            ExperimentError::Config(msg) => {
                ExperimentError::Config(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let cfg = |m: String| ExperimentError::Config(m);
        if self.seeds.is_empty() {
            return Err(cfg("seeds must not be empty".into()));
        }
        if self.strategies.is_empty() {
            return Err(cfg("strategies must not be empty".into()));
        }
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(_), Some(_)) => {
                return Err(cfg(
                    "dataset: give either path or synthetic, not both".into()
                ))
            }
            (None, None) => {
                return Err(cfg("dataset: one of path or synthetic is required".into()))
            }
            _ => {}
        }
        if let Some(spec) = &self.dataset.synthetic {
            spec.validate()
                .map_err(|e| cfg(format!("dataset.synthetic: {e}")))?;
        }
        for job in self.jobs() {
            self.run_config(job, 0)
                .validate()
                .map_err(|e| cfg(e.to_string()))?;
        }
        Ok(())
    }

    pub fn jobs(&self) -> Vec<Job> {
        let main = Variant {
            ablation: self.ablation,
            score: self.score,
        };
        let mut jobs: Vec<Job> = self
            .strategies
            .iter()
            .map(|&strategy| Job {
                strategy,
                variant: main,
            })
            .collect();
        for &variant in &self.extra_variants {
            let job = Job {
                strategy: Strategy::Mitigate,
                variant,
            };
            if !jobs.contains(&job) {
                jobs.push(job);
            }
        }
        jobs
    }

    pub fn run_config(&self, job: Job, seed: u64) -> RunConfig {
        RunConfig {
            train: self.train.clone(),
            selection: self.selection.clone(),
            budget: self.budget,
            strategy: job.strategy,
            ablation: job.variant.ablation,
            score: job.variant.score,
            early_stop: self.early_stop,
            cold_start: self.cold_start,
            seed,
        }
    }

    fn data_seed_for(&self, run_seed: u64) -> u64 {
        if self.resample_data_per_seed {
            run_seed
        } else {
            self.data_seed
        }
    }
}

/// Loads or synthesizes the dataset, injects anomalies if it has none, and
/// splits it.
pub fn prepare_dataset(
    cfg: &ExperimentConfig,
    data_seed: u64,
) -> Result<(Graph, Splits), ExperimentError> {
    let mut graph = match (&cfg.dataset.path, &cfg.dataset.synthetic) {
        (Some(path), _) => load_graph(path)?,
        (None, Some(spec)) => make_synthetic(spec, data_seed)?,
        (None, None) => return Err(ExperimentError::Config("no dataset".into())),
    };
    if graph.anomaly_kinds().is_none() {
        let injection = InjectionConfig {
            seed: cfg.injection.seed ^ data_seed,
            ..cfg.injection.clone()
        };
        graph = inject_all(&graph, &injection)?.0;
    }
    let splits = split_dataset(&graph, cfg.per_class, cfg.n_val, cfg.n_test, data_seed)?;
    Ok((graph, splits))
}

pub fn run_file_stem(result: &RunResult) -> String {
    format!(
        "{}__{}__seed{}",
        result.strategy.name(),
        result.variant,
        result.seed
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: String,
    pub variant: String,
    pub n_runs: usize,
    pub auc_roc_mean: f64,
    pub auc_roc_std: f64,
    pub auc_pr_mean: f64,
    pub auc_pr_std: f64,
    pub accuracy_mean: f64,
    pub anomalies_found_mean: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups final test metrics by (strategy, variant), sorted by key.
pub fn aggregate(results: &[RunResult]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String), Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.strategy.name().to_string(), r.variant.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((strategy, variant), runs)| {
            let collect = |f: &dyn Fn(&RunResult) -> Option<f64>| -> Vec<f64> {
                runs.iter().filter_map(|r| f(r)).collect()
            };
            let (auc_roc_mean, auc_roc_std) = mean_std(&collect(&|r| r.final_test.auc_roc));
            let (auc_pr_mean, auc_pr_std) = mean_std(&collect(&|r| r.final_test.auc_pr));
            let (accuracy_mean, _) = mean_std(&collect(&|r| r.final_test.accuracy));
            let (anomalies_found_mean, _) = mean_std(&collect(&|r| Some(r.anomalies_found as f64)));
            AggregateRow {
                strategy,
                variant,
                n_runs: runs.len(),
                auc_roc_mean,
                auc_roc_std,
                auc_pr_mean,
                auc_pr_std,
                accuracy_mean,
                anomalies_found_mean,
            }
        })
        .collect()
}

/// Summary CSV with percentages formatted as `mean±std`.
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "strategy,variant,n_runs,auc_roc_mean,auc_roc_std,auc_pr_mean,auc_pr_std,accuracy_mean,anomalies_found_mean,auc_roc_pct,auc_pr_pct\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.2},{:.2}±{:.2},{:.2}±{:.2}\n",
            r.strategy,
            r.variant,
            r.n_runs,
            r.auc_roc_mean,
            r.auc_roc_std,
            r.auc_pr_mean,
            r.auc_pr_std,
            r.accuracy_mean,
            r.anomalies_found_mean,
            100.0 * r.auc_roc_mean,
            100.0 * r.auc_roc_std,
            100.0 * r.auc_pr_mean,
            100.0 * r.auc_pr_std,
        ));
    }
    out
}

/// Mean validation metrics against oracle queries spent, per
/// (strategy, variant). The last point of each curve is the final model.
pub fn budget_curve_csv(results: &[RunResult]) -> String {
    type Key = (String, String, usize);
    type Samples = (Vec<f64>, Vec<f64>, Vec<f64>);
    let mut acc: BTreeMap<Key, Samples> = BTreeMap::new();
    for r in results {
        let key = |budget| (r.strategy.name().to_string(), r.variant.clone(), budget);
        let points = r
            .per_iteration
            .iter()
            .map(|it| (it.budget_used, it.val))
            .chain(std::iter::once((r.config.budget, r.final_val)));
        for (budget, m) in points {
            let e = acc.entry(key(budget)).or_default();
            e.0.extend(m.auc_roc);
            e.1.extend(m.auc_pr);
            e.2.extend(m.accuracy);
        }
    }
    let mut out = String::from("strategy,variant,budget_used,val_auc_roc,val_auc_pr,val_acc\n");
    for ((s, v, b), (roc, pr, accv)) in acc {
        out.push_str(&format!(
            "{s},{v},{b},{:.6},{:.6},{:.6}\n",
            mean_std(&roc).0,
            mean_std(&pr).0,
            mean_std(&accv).0
        ));
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub results: Vec<RunResult>,
    pub failures: Vec<(Job, u64, String)>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs every job for every seed (in parallel), writing one JSON and one
/// iteration CSV per run, then `aggregate.csv` and `budget_curve.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    write(
        &out.join("config.toml"),
        &toml::to_string(cfg).map_err(|e| ExperimentError::Config(e.to_string()))?,
    )?;

    let mut data_seeds: Vec<u64> = cfg.seeds.iter().map(|&s| cfg.data_seed_for(s)).collect();
    data_seeds.sort_unstable();
    data_seeds.dedup();
    let datasets: BTreeMap<u64, (Graph, Splits)> = data_seeds
        .par_iter()
        .map(|&ds| prepare_dataset(cfg, ds).map(|d| (ds, d)))
        .collect::<Result<_, _>>()?;

    let tasks: Vec<(Job, u64)> = cfg
        .jobs()
        .into_iter()
        .flat_map(|job| cfg.seeds.iter().map(move |&seed| (job, seed)))
        .collect();
    let outcomes: Vec<Result<RunResult, (Job, u64, String)>> = tasks
        .par_iter()
        .map(|&(job, seed)| {
            let (graph, splits) = &datasets[&cfg.data_seed_for(seed)];
            let run_cfg = cfg.run_config(job, seed);
            let result = if cfg.debug_dump {
                let stem = format!(
                    "{}__{}__seed{}",
                    job.strategy.name(),
                    job.variant.label(),
                    seed
                );
                let path = runs_dir.join(format!("{stem}.selections.jsonl"));
                fs::File::create(&path)
                    .map_err(RunError::from)
                    .and_then(|mut f| {
                        crate::active::run_with_debug(graph, splits, &run_cfg, Some(&mut f))
                    })
            } else {
                run(graph, splits, &run_cfg)
            };
            let result = result.map_err(|e| (job, seed, e.to_string()))?;
            let stem = run_file_stem(&result);
            let json =
                serde_json::to_string_pretty(&result).map_err(|e| (job, seed, e.to_string()))?;
            write(&runs_dir.join(format!("{stem}.json")), &json)
                .map_err(|e| (job, seed, e.to_string()))?;
            write(
                &runs_dir.join(format!("{stem}.iterations.csv")),
                &result.iterations_csv(),
            )
            .map_err(|e| (job, seed, e.to_string()))?;
            log::info!(
                "{stem}: test AUC-ROC {:?} AUC-PR {:?}",
                result.final_test.auc_roc,
                result.final_test.auc_pr
            );
            Ok(result)
        })
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => {
                log::error!("{} seed {} failed: {}", f.0.strategy.name(), f.1, f.2);
                failures.push(f);
            }
        }
    }
    let rows = aggregate(&results);
    write(&out.join("aggregate.csv"), &aggregate_csv(&rows))?;
    write(&out.join("budget_curve.csv"), &budget_curve_csv(&results))?;
    Ok(ExperimentOutcome {
        results,
        failures,
        aggregate: rows,
    })
}

/// Reads every run JSON under the given directories (recursively).
pub fn collect_results(dirs: &[PathBuf]) -> Result<Vec<RunResult>, ExperimentError> {
    let mut files = Vec::new();
    let mut stack: Vec<PathBuf> = dirs.to_vec();
    while let Some(dir) = stack.pop() {
        if dir.is_file() {
            files.push(dir);
            continue;
        }
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "json") {
                files.push(path);
            }
        }
    }
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}
