//! Tour quality metrics, the image pipeline end to end, and solver benchmarks.

pub mod bench;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use bench::{benchmark_solvers, heuristic_e0, time_median, BenchConfig, BenchReport, BenchRow};
pub use metrics::{compute_metrics, MetricsReport, Outcome, GAPS, LENGTH_TOL};
pub use pipeline::{
    departure_sweep, generalization_sweep, run_pipeline_eval, solved_instances, DepartureRow, DepartureSweep,
    FcnPredictor, GeneralizationSweep, OraclePassthrough, PipelineConfig, PipelineReport, Predictor, SampleRow,
    SweepRow, RESOLUTION_SAFE_N,
};
pub use report::{write_csv, write_json};
