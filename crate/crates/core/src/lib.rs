//! Multitask active learning for graph anomaly detection.
//!
//! A shared GCN encoder feeds a node classifier and an anomaly score
//! predictor. Each round, nodes are clustered on masked-aggregation
//! distance features and the medoids with the highest informativeness
//! (classifier entropy blended with cross-task confidence difference) are
//! sent to a simulated oracle.

pub mod active;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod inject;
pub mod model;
pub mod select;
pub mod synth;

pub use active::{run, LabelState, Oracle, RunConfig, RunError, RunResult, ScoreKind, Strategy};
pub use graph::{load_graph, normalize_adjacency, save_graph, split_dataset, Graph, Splits};
pub use inject::{inject_all, InjectionConfig, InjectionReport};
pub use model::{ModelState, ScoreBundle, TrainConfig};
pub use select::SelectionConfig;
