//! Streaming metrics, the daily-popularity baseline, synthetic data and
//! variant comparisons.

pub mod ablation;
pub mod metrics;
pub mod report;
pub mod synthetic;
pub mod timepop;

pub use ablation::{run_ablation, run_variants, Experiment, VariantRun};
pub use metrics::{diversity, hit_ratio, ndcg, novelty, EventMetrics, MetricReport, WindowMetrics};
pub use report::{long_csv, merge_reports, report_csv};
pub use synthetic::{generate_synthetic, SynthConfig, SyntheticData};
pub use timepop::TimePop;
