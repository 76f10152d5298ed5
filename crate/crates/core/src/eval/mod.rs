//! Ranking metrics, significance testing and the experiment runner.

mod experiment;
mod metrics;
mod report;
mod stats;

pub use experiment::{
    run_experiment, train_method, CellResult, CellSuccess, EmbeddingSource, ExperimentPlan, HyperGrid, Method,
    MethodParams, TrainedMethod,
};
pub use metrics::{evaluate, mean_metrics, mrr, ndcg_at_k, p_at_1, Metric, QueryMetrics, Qrels};
pub use report::{ExperimentReport, SignificanceRow};
pub use stats::{bonferroni_threshold, paired_t_test, TTest};
