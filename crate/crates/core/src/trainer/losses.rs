//! Classification and contrastive terms of the training objective.

use crate::contrastive::{hard_contrastive_loss, soft_contrastive_loss, CaptionSimilarity, ContrastiveBatch};
use crate::data::{augment, AugmentKind, AugmentationConfig, EmbeddingDataset, UnlabeledView};
use crate::error::{Result, TrustError};
use crate::numerics::{Graph, Matrix, NodeId};
use crate::pseudolabel::mean_cross_entropy;
use crate::seed::derive_seed;
use crate::trainer::{BoundModel, LossToggles};

/// Augmented inputs and supervision for one training step.
#[derive(Clone, Debug)]
pub struct StepInputs {
    pub source_weak: Matrix,
    pub source_labels: Vec<usize>,
    pub target_weak: Matrix,
    pub target_strong: Matrix,
    pub pseudo_labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub caption_sim: CaptionSimilarity,
}

/// Sample lists and per-target-sample supervision for [`StepInputs::prepare`].
pub struct StepSelection<'a> {
    pub source_idx: &'a [usize],
    pub target_idx: &'a [usize],
    pub pseudo_labels: &'a [usize],
    pub weights: &'a [f64],
}

impl StepInputs {
    /// Gathers the batch rows, draws the weak/strong views with seeds derived
    /// from `seed`, and computes the caption similarity of the target batch.
    pub fn prepare(
        source: &EmbeddingDataset,
        target: UnlabeledView<'_>,
        sel: &StepSelection<'_>,
        aug: &AugmentationConfig,
        seed: u64,
    ) -> Result<StepInputs> {
        let labels = source.labels().ok_or(TrustError::MissingLabels)?;
        if sel.pseudo_labels.len() != target.len() || sel.weights.len() != target.len() {
            return Err(TrustError::shape(
                "step_inputs",
                format!(
                    "{} target samples, {} pseudo-labels, {} weights",
                    target.len(),
                    sel.pseudo_labels.len(),
                    sel.weights.len()
                ),
            ));
        }
        let xs = source.image().gather_rows(sel.source_idx)?;
        let xt = target.image().gather_rows(sel.target_idx)?;
        Ok(StepInputs {
            source_weak: augment(&xs, AugmentKind::Weak, aug, derive_seed(seed, &[0]))?,
            source_labels: sel.source_idx.iter().map(|&i| labels[i]).collect(),
            target_weak: augment(&xt, AugmentKind::Weak, aug, derive_seed(seed, &[1]))?,
            target_strong: augment(&xt, AugmentKind::Strong, aug, derive_seed(seed, &[2]))?,
            pseudo_labels: sel.target_idx.iter().map(|&i| sel.pseudo_labels[i]).collect(),
            weights: sel.target_idx.iter().map(|&i| sel.weights[i]).collect(),
            caption_sim: crate::contrastive::caption_similarity_matrix(&target.caption().gather_rows(sel.target_idx)?)?,
        })
    }
}

/// Source term: mean cross-entropy of `h(f(x_weak))` against labels.
pub fn source_cls_loss(g: &mut Graph, model: &BoundModel, x_weak: NodeId, labels: &[usize]) -> Result<NodeId> {
    let z = model.features(g, x_weak)?;
    let logits = model.classify(g, z)?;
    mean_cross_entropy(g, logits, labels)
}

/// Mean over rows of `w_i · CE(q_i, ỹ_i) + (1 − w_i) · CE(q_i, p_i)` where
/// `q = softmax(logits_weak)` and `p` is the (constant) teacher distribution.
pub fn reweighted_target_loss(
    g: &mut Graph,
    logits_weak: NodeId,
    teacher: NodeId,
    pseudo_labels: &[usize],
    weights: &[f64],
) -> Result<NodeId> {
    let (b, c) = g.value(logits_weak).shape();
    if g.value(teacher).shape() != (b, c) {
        return Err(TrustError::shape("target_cls_loss", "teacher shape differs from logits"));
    }
    if pseudo_labels.len() != b || weights.len() != b {
        return Err(TrustError::shape(
            "target_cls_loss",
            format!("{b} rows, {} pseudo-labels, {} weights", pseudo_labels.len(), weights.len()),
        ));
    }
    if b == 0 {
        return Err(TrustError::InvalidArgument("empty target batch".into()));
    }
    let mut hard = Matrix::zeros(b, c);
    let mut soft_scale = Matrix::zeros(b, c);
    for (i, (&y, &w)) in pseudo_labels.iter().zip(weights).enumerate() {
        if y >= c {
            return Err(TrustError::InvalidArgument(format!("pseudo-label {y} >= class count {c}")));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(TrustError::InvalidArgument(format!("weight {w} outside [0, 1]")));
        }
        hard.set(i, y, w);
        for k in 0..c {
            soft_scale.set(i, k, 1.0 - w);
        }
    }
    let hard = g.constant(hard);
    let soft_scale = g.constant(soft_scale);
    let soft = g.mul(teacher, soft_scale)?;
    let targets = g.add(hard, soft)?;
    let log_q = g.row_log_softmax(logits_weak)?;
    let picked = g.mul(targets, log_q)?;
    let total = g.sum(picked)?;
    g.scale(total, -1.0 / b as f64)
}

/// Where the soft target of the target term comes from.
#[derive(Clone, Copy, Debug)]
pub enum Teacher<'a> {
    /// `stop_gradient(softmax(h(f(x_strong))))` recorded on the graph.
    StrongView,
    /// Precomputed probabilities (used to check the non-stopped paths).
    Fixed(&'a Matrix),
}

/// Target term for one batch.
pub fn target_cls_loss(
    g: &mut Graph,
    model: &BoundModel,
    x_weak: NodeId,
    x_strong: NodeId,
    pseudo_labels: &[usize],
    weights: &[f64],
) -> Result<NodeId> {
    let z = model.features(g, x_weak)?;
    let logits = model.classify(g, z)?;
    let teacher = strong_teacher(g, model, x_strong)?;
    reweighted_target_loss(g, logits, teacher, pseudo_labels, weights)
}

fn strong_teacher(g: &mut Graph, model: &BoundModel, x_strong: NodeId) -> Result<NodeId> {
    let z = model.features(g, x_strong)?;
    let logits = model.classify(g, z)?;
    let probs = g.row_softmax(logits)?;
    Ok(g.stop_gradient(probs))
}

/// Loss nodes of one step.
#[derive(Clone, Copy, Debug)]
pub struct StepLosses {
    pub source: NodeId,
    pub target: NodeId,
    pub contrastive: Option<NodeId>,
    pub total: NodeId,
}

/// `L = L_source + L_target + L_ctr`, with the contrastive term chosen by
/// the toggles (soft, hard or absent). Weak-view target features are shared
/// between the target and contrastive terms.
pub fn total_loss(
    g: &mut Graph,
    model: &BoundModel,
    inputs: &StepInputs,
    toggles: LossToggles,
    tau: f64,
    teacher: Teacher<'_>,
) -> Result<StepLosses> {
    toggles.validate()?;
    let xs = g.constant(inputs.source_weak.clone());
    let source = source_cls_loss(g, model, xs, &inputs.source_labels)?;

    let xw = g.constant(inputs.target_weak.clone());
    let xst = g.constant(inputs.target_strong.clone());
    let z_weak = model.features(g, xw)?;
    let logits_weak = model.classify(g, z_weak)?;
    let needs_strong_features = toggles.use_soft_ctr || toggles.use_hard_ctr || matches!(teacher, Teacher::StrongView);
    let z_strong = if needs_strong_features {
        Some(model.features(g, xst)?)
    } else {
        None
    };
    let teacher_node = match teacher {
        Teacher::StrongView => {
            let logits_strong = model.classify(g, z_strong.expect("computed above"))?;
            let probs = g.row_softmax(logits_strong)?;
            g.stop_gradient(probs)
        }
        Teacher::Fixed(p) => g.constant(p.clone()),
    };
    let target = reweighted_target_loss(g, logits_weak, teacher_node, &inputs.pseudo_labels, &inputs.weights)?;

    let contrastive = if toggles.use_soft_ctr || toggles.use_hard_ctr {
        let batch = ContrastiveBatch::new(g, z_weak, z_strong.expect("computed above"), tau)?;
        Some(if toggles.use_soft_ctr {
            soft_contrastive_loss(g, &batch, &inputs.caption_sim)?
        } else {
            hard_contrastive_loss(g, &batch)?
        })
    } else {
        None
    };

    let cls = g.add(source, target)?;
    let total = match contrastive {
        Some(c) => g.add(cls, c)?,
        None => cls,
    };
    Ok(StepLosses {
        source,
        target,
        contrastive,
        total,
    })
}

/// Strong-view teacher probabilities of `model` evaluated outside any graph.
pub fn teacher_probabilities(model: &crate::trainer::VisionModel, x_strong: &Matrix) -> Result<Matrix> {
    Ok(model.logits(x_strong)?.row_softmax())
}
