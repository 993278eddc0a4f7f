//! Accuracy and per-class reports, synthetic corpora with known answers,
//! and the ablation grid / chunk-size sweep harnesses.

mod ablation;
mod metrics;
mod synthetic;

pub use ablation::{
    chunk_size_sweep, normalize_sizes, run_ablation, AblationCell, AblationTable, SweepRow, SweepTable,
};
pub use metrics::{
    accuracy, config_fingerprint, evaluate, predict_conversations, split_accuracy, ClassMetrics, EvalReport,
};
pub use synthetic::{generate_synthetic, label_name, SyntheticRule, SyntheticSpec};
