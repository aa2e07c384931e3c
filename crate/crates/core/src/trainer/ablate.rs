use serde::{Deserialize, Serialize};

use crate::data::EmbeddingDataset;
use crate::error::Result;
use crate::pseudolabel::pseudo_label_accuracy;
use crate::trainer::train::{prepare_supervision, train};
use crate::trainer::{LossToggles, TrainConfig};
use crate::uncertainty::{weight_histogram, ReliabilityWeights};

/// The five toggle combinations, in report order.
pub const ABLATION_ROWS: [(&str, LossToggles); 5] = [
    ("none", LossToggles::NONE),
    (
        "hard_ctr",
        LossToggles {
            use_soft_ctr: false,
            use_hard_ctr: true,
            use_uncertainty: false,
        },
    ),
    (
        "soft_ctr",
        LossToggles {
            use_soft_ctr: true,
            use_hard_ctr: false,
            use_uncertainty: false,
        },
    ),
    (
        "uncertainty",
        LossToggles {
            use_soft_ctr: false,
            use_hard_ctr: false,
            use_uncertainty: true,
        },
    ),
    ("full", LossToggles::FULL),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub toggles: LossToggles,
    /// Percent, as in the usual results tables.
    pub target_accuracy: f64,
}

/// Ablation table. Contains no timing so repeated runs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: TrainConfig,
    pub pseudo_label_accuracy: Option<f64>,
    pub weight_auroc: Option<f64>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn accuracy(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.target_accuracy)
    }
}

/// Trains every row from the same seed with shared pseudo-labels and weights.
pub fn ablate(source: &EmbeddingDataset, target: &EmbeddingDataset, base: &TrainConfig) -> Result<AblationReport> {
    base.validate()?;
    let (pseudo, weights) = prepare_supervision(source, target, base)?;
    let ones = ReliabilityWeights::ones(target.len());
    let mut rows = Vec::with_capacity(ABLATION_ROWS.len());
    for (name, toggles) in ABLATION_ROWS {
        let cfg = base.with_toggles(toggles);
        let w = if toggles.use_uncertainty { &weights } else { &ones };
        let (_, report) = train(source, target, &pseudo, w, &cfg)?;
        rows.push(AblationRow {
            name: name.to_string(),
            toggles,
            target_accuracy: 100.0 * report.final_target_accuracy.unwrap_or(f64::NAN),
        });
    }
    let pseudo_label_accuracy = match target.labels() {
        Some(truth) => Some(pseudo_label_accuracy(&pseudo.labels, truth)?),
        None => None,
    };
    let weight_auroc = match target.corrupted_mask() {
        Some(mask) => weight_histogram(&weights, Some(mask))?.auroc,
        None => None,
    };
    Ok(AblationReport {
        config: base.with_toggles(LossToggles::FULL),
        pseudo_label_accuracy,
        weight_auroc,
        rows,
    })
}
