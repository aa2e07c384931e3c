//! Vision model, training objective, training loop, evaluation and ablation.

mod ablate;
mod config;
pub mod losses;
mod model;
mod train;

pub use ablate::{ablate, AblationReport, AblationRow, ABLATION_ROWS};
pub use config::{LossToggles, TrainConfig};
pub use model::{BoundModel, ModelDims, VisionModel, CHECKPOINT_MANIFEST};
pub use train::{evaluate, prepare_supervision, run_pipeline, train, EpochMetrics, PipelineOutput, TrainReport};
