//! Training, evaluation and the conditioning/fusion ablation.

mod ablation;
mod config;
mod evaluate;
mod trainer;

pub use ablation::{run_ablation, write_ablation_csv, AblationGrid, AblationRow};
pub use config::TrainConfig;
pub use evaluate::{check_disjoint, evaluate, BundleGenerator, ClipGenerator, EvalConfig};
pub use trainer::{train, write_loss_trace, TrainOutcome, Trainer};
