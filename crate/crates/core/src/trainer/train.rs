use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, EmbeddingDataset};
use crate::error::{Result, TrustError};
use crate::numerics::Graph;
use crate::pseudolabel::{generate_pseudo_labels, pseudo_label_accuracy, train_text_classifier, PseudoLabels};
use crate::seed::{derive_seed, stream};
use crate::trainer::losses::{total_loss, StepInputs, StepSelection, Teacher};
use crate::trainer::{ModelDims, TrainConfig, VisionModel};
use crate::uncertainty::{score_dataset, ReliabilityWeights};

/// Mean loss terms over the steps of one epoch, plus target accuracy after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub source_loss: f64,
    pub target_loss: f64,
    pub contrastive_loss: Option<f64>,
    pub target_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub initial_target_accuracy: Option<f64>,
    pub epochs: Vec<EpochMetrics>,
    pub final_target_accuracy: Option<f64>,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// Copy with the wall-clock field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> TrainReport {
        TrainReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Accuracy of `model` on a labelled dataset, without augmentation.
///
/// This is the only place target labels are read.
pub fn evaluate(model: &VisionModel, dataset: &EmbeddingDataset) -> Result<f64> {
    let labels = dataset.labels().ok_or(TrustError::MissingLabels)?;
    let predicted = model.predict(dataset.image())?;
    pseudo_label_accuracy(&predicted, labels)
}

fn accuracy_if_labelled(model: &VisionModel, dataset: &EmbeddingDataset) -> Result<Option<f64>> {
    match dataset.labels() {
        Some(_) => evaluate(model, dataset).map(Some),
        None => Ok(None),
    }
}

fn check_compatible(source: &EmbeddingDataset, target: &EmbeddingDataset, pseudo: &PseudoLabels, weights: &ReliabilityWeights) -> Result<()> {
    if source.dim_image() != target.dim_image() {
        return Err(TrustError::shape(
            "train",
            format!("source image dim {} vs target {}", source.dim_image(), target.dim_image()),
        ));
    }
    if source.num_classes() != target.num_classes() {
        return Err(TrustError::shape(
            "train",
            format!("source has {} classes, target {}", source.num_classes(), target.num_classes()),
        ));
    }
    if pseudo.labels.len() != target.len() || weights.len() != target.len() {
        return Err(TrustError::shape(
            "train",
            format!(
                "{} target samples, {} pseudo-labels, {} weights",
                target.len(),
                pseudo.labels.len(),
                weights.len()
            ),
        ));
    }
    if let Some(&bad) = pseudo.labels.iter().find(|&&y| y >= source.num_classes()) {
        return Err(TrustError::InvalidArgument(format!("pseudo-label {bad} out of range")));
    }
    Ok(())
}

/// Joint SGD on paired source/target minibatches.
///
/// Each epoch shuffles both domains independently; the domain with fewer
/// batches cycles so every step sees all loss terms. Weights are used as
/// given, so pass [`ReliabilityWeights::ones`] to disable reweighting.
pub fn train(
    source: &EmbeddingDataset,
    target: &EmbeddingDataset,
    pseudo: &PseudoLabels,
    weights: &ReliabilityWeights,
    cfg: &TrainConfig,
) -> Result<(VisionModel, TrainReport)> {
    cfg.validate()?;
    check_compatible(source, target, pseudo, weights)?;
    let started = Instant::now();
    let mut model = VisionModel::init(
        ModelDims {
            input: source.dim_image(),
            hidden: cfg.hidden,
            feature: cfg.feature_dim,
            classes: source.num_classes(),
        },
        cfg.seed,
    );
    let initial_target_accuracy = accuracy_if_labelled(&model, target)?;
    let target_view = target.unlabeled();

    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let e = epoch as u64;
        let src_batches = batch_indices(source.len(), cfg.batch_size, derive_seed(cfg.seed, &[stream::SOURCE_BATCHES]), e)?;
        let tgt_batches = batch_indices(target.len(), cfg.batch_size, derive_seed(cfg.seed, &[stream::TARGET_BATCHES]), e)?;
        let steps = src_batches.len().max(tgt_batches.len());
        let (mut src_sum, mut tgt_sum, mut ctr_sum) = (0.0, 0.0, 0.0);

        for step in 0..steps {
            let sel = StepSelection {
                source_idx: &src_batches[step % src_batches.len()],
                target_idx: &tgt_batches[step % tgt_batches.len()],
                pseudo_labels: &pseudo.labels,
                weights: &weights.w,
            };
            let step_seed = derive_seed(cfg.seed, &[stream::AUGMENT, e, step as u64]);
            let inputs = StepInputs::prepare(source, target_view, &sel, &cfg.augmentation, step_seed)?;

            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let losses = total_loss(&mut g, &bound, &inputs, cfg.toggles, cfg.tau, Teacher::StrongView)
                .map_err(|err| diverged(err, epoch, step, "forward"))?;
            let grads = g.backward(losses.total).map_err(|err| diverged(err, epoch, step, "backward"))?;
            let grads = bound.gradients(&g, &grads);
            model
                .sgd_step(&grads, cfg.lr)
                .map_err(|err| diverged(err, epoch, step, "update"))?;

            src_sum += g.scalar(losses.source);
            tgt_sum += g.scalar(losses.target);
            if let Some(c) = losses.contrastive {
                ctr_sum += g.scalar(c);
            }
        }
        let n = steps as f64;
        let metrics = EpochMetrics {
            epoch,
            source_loss: src_sum / n,
            target_loss: tgt_sum / n,
            contrastive_loss: (cfg.toggles.use_soft_ctr || cfg.toggles.use_hard_ctr).then_some(ctr_sum / n),
            target_accuracy: accuracy_if_labelled(&model, target)?,
        };
        for (term, v) in [("source", metrics.source_loss), ("target", metrics.target_loss)] {
            if !v.is_finite() {
                return Err(TrustError::Diverged {
                    epoch,
                    step: steps,
                    term: term.to_string(),
                });
            }
        }
        epochs.push(metrics);
    }

    let final_target_accuracy = accuracy_if_labelled(&model, target)?;
    Ok((
        model,
        TrainReport {
            config: cfg.clone(),
            initial_target_accuracy,
            epochs,
            final_target_accuracy,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    ))
}

fn diverged(err: TrustError, epoch: usize, step: usize, term: &str) -> TrustError {
    match err {
        TrustError::NonFinite { op } => TrustError::Diverged {
            epoch,
            step,
            term: format!("{term} ({op})"),
        },
        other => other,
    }
}

/// Everything the full pipeline produces.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub pseudo: PseudoLabels,
    pub weights: ReliabilityWeights,
    pub model: VisionModel,
    pub report: TrainReport,
}

/// Pseudo-labels, then reliability weights (all ones when reweighting is
/// off), then training.
pub fn run_pipeline(source: &EmbeddingDataset, target: &EmbeddingDataset, cfg: &TrainConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let (pseudo, weights) = prepare_supervision(source, target, cfg)?;
    let weights = if cfg.toggles.use_uncertainty {
        weights
    } else {
        ReliabilityWeights::ones(target.len())
    };
    let (model, report) = train(source, target, &pseudo, &weights, cfg)?;
    Ok(PipelineOutput {
        pseudo,
        weights,
        model,
        report,
    })
}

/// Caption pseudo-labels and CLIP reliability weights for the target set.
pub fn prepare_supervision(
    source: &EmbeddingDataset,
    target: &EmbeddingDataset,
    cfg: &TrainConfig,
) -> Result<(PseudoLabels, ReliabilityWeights)> {
    let fit = train_text_classifier(source, &cfg.text_classifier)?;
    let pseudo = generate_pseudo_labels(&fit.classifier, target.unlabeled())?;
    let weights = score_dataset(target.unlabeled(), cfg.scoring_batch_size.min(target.len()), cfg.gamma, cfg.seed)?;
    Ok((pseudo, weights))
}
