//! Metrics, read-out ablation and throughput benchmarking.

pub mod ablation;
pub mod bench;
pub mod metrics;

pub use ablation::{ablate_readout, evaluate_videos, AblationRow, AblationTable, READOUT_STRATEGIES};
pub use bench::{bench_csv, bench_throughput, fitted_exponent, percentile, BenchOptions, BenchRow};
pub use metrics::{
    aggregate, relax_boundaries, relaxed_metrics, reports_csv, strict_metrics, AggregateReport,
    MeanStd, MetricReport, PhaseCounts,
};
