//! Query-log analyses: selection coverage, per-group diversity, query
//! lengths, unigrams, query overlap and app-embedding projection.

mod distribution;
mod overlap;
mod projection;
pub mod svg;

pub use distribution::{
    app_coverage, query_length_stats, unigram_distribution, unique_apps_per, write_length_stats_csv, AppCoverage,
    DistributionReport, Grouping, LengthStats, COVERAGE_THRESHOLDS,
};
pub use overlap::{query_overlap_table, OverlapRow, OverlapScope, OverlapTable, OVERLAP_THRESHOLDS};
pub use projection::{
    pearson, project_embeddings, task_difficulty, write_projection_csv, write_task_difficulty_csv, ProjectedApp,
    TaskDifficulty,
};
