//! Dataset model, on-disk format, synthetic generator, augmentation and batching.

mod augment;
mod batch;
mod dataset;
pub mod format;
mod synth;

pub use augment::{augment, AugmentKind, AugmentationConfig};
pub use batch::batch_indices;
pub use dataset::{DatasetParts, Domain, EmbeddingDataset, UnlabeledView};
pub use format::{load_dataset, save_dataset, validate_dataset_dir, ValidationSummary};
pub use synth::{gen_synthetic, givens_rotate, SynthConfig};
