//! Caption-based pseudo-labels: a linear softmax classifier trained on source
//! caption embeddings, frozen, then applied to target captions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::format::{read_embedding_file, read_labels_file, write_embedding_file, write_labels_file};
use crate::data::{EmbeddingDataset, UnlabeledView};
use crate::error::{Result, TrustError};
use crate::numerics::{Graph, Matrix, NodeId};

pub const PSEUDO_LABELS_FILE: &str = "pseudo_labels.lbl";
pub const PSEUDO_LOGITS_FILE: &str = "pseudo_logits.emb";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Recorded for provenance; full-batch descent from a zero start draws
    /// no randomness.
    pub seed: u64,
}

impl Default for TextClassifierConfig {
    fn default() -> Self {
        TextClassifierConfig {
            epochs: 200,
            lr: 0.5,
            seed: 0,
        }
    }
}

/// Linear softmax head over L2-normalised caption embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct TextClassifier {
    /// C × D_txt.
    weight: Matrix,
    /// 1 × C.
    bias: Matrix,
}

#[derive(Clone, Debug)]
pub struct TextClassifierFit {
    pub classifier: TextClassifier,
    /// Mean cross-entropy before each update, plus the final value.
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabels {
    pub labels: Vec<usize>,
    /// N × C classifier outputs.
    pub logits: Matrix,
}

fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}

/// Mean cross-entropy of `logits` against integer labels, as a graph node.
pub(crate) fn mean_cross_entropy(g: &mut Graph, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
    let (rows, cols) = g.value(logits).shape();
    if rows != labels.len() {
        return Err(TrustError::shape(
            "cross_entropy",
            format!("{rows} logit rows for {} labels", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
        return Err(TrustError::InvalidArgument(format!("label {bad} >= class count {cols}")));
    }
    let log_probs = g.row_log_softmax(logits)?;
    let targets = g.constant(one_hot(labels, cols));
    let picked = g.mul(log_probs, targets)?;
    let total = g.sum(picked)?;
    g.scale(total, -1.0 / rows as f64)
}

impl TextClassifier {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        TextClassifier {
            weight: Matrix::zeros(classes, dim),
            bias: Matrix::zeros(1, classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &Matrix {
        &self.bias
    }

    /// N × C logits for raw caption embeddings.
    pub fn logits(&self, captions: &Matrix) -> Result<Matrix> {
        if captions.cols() != self.dim() {
            return Err(TrustError::shape(
                "text_classifier",
                format!("caption width {} vs classifier width {}", captions.cols(), self.dim()),
            ));
        }
        captions
            .l2_normalize_rows()?
            .matmul(&self.weight.transpose())?
            .add_row(&self.bias)
    }

    fn loss_graph(&self, inputs: &Matrix, labels: &[usize]) -> Result<(Graph, NodeId, NodeId, NodeId)> {
        let mut g = Graph::new();
        let x = g.constant(inputs.clone());
        let w = g.param(self.weight.clone());
        let b = g.param(self.bias.clone());
        let wt = g.transpose(w)?;
        let xw = g.matmul(x, wt)?;
        let logits = g.add_row(xw, b)?;
        let loss = mean_cross_entropy(&mut g, logits, labels)?;
        Ok((g, loss, w, b))
    }
}

/// Full-batch gradient descent on mean cross-entropy over source captions.
pub fn train_text_classifier(source: &EmbeddingDataset, cfg: &TextClassifierConfig) -> Result<TextClassifierFit> {
    let labels = source.labels().ok_or(TrustError::MissingLabels)?;
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(TrustError::Config("text classifier lr must be positive".into()));
    }
    let classes = source.num_classes();
    let mut present = vec![false; classes];
    labels.iter().for_each(|&l| present[l] = true);
    let distinct = present.iter().filter(|&&p| p).count();
    if distinct < 2 {
        return Err(TrustError::Degenerate(format!(
            "source captions cover {distinct} class(es); need at least 2"
        )));
    }
    if let Some(missing) = present.iter().position(|&p| !p) {
        return Err(TrustError::Degenerate(format!("class {missing} has no source captions")));
    }

    let inputs = source.caption().l2_normalize_rows()?;
    let mut clf = TextClassifier::zeros(classes, source.dim_caption());
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (g, loss, w, b) = clf.loss_graph(&inputs, labels)?;
        history.push(g.scalar(loss));
        let grads = g.backward(loss)?;
        clf.weight = clf.weight.sub(&grads.get(w).expect("weight tracks grad").scale(cfg.lr))?;
        clf.bias = clf.bias.sub(&grads.get(b).expect("bias tracks grad").scale(cfg.lr))?;
    }
    let (g, loss, _, _) = clf.loss_graph(&inputs, labels)?;
    history.push(g.scalar(loss));
    Ok(TextClassifierFit {
        classifier: clf,
        loss_history: history,
    })
}

/// Row-argmax of the frozen classifier on target captions; ties go to the
/// smallest class id.
pub fn generate_pseudo_labels(clf: &TextClassifier, target: UnlabeledView<'_>) -> Result<PseudoLabels> {
    let logits = clf.logits(target.caption())?;
    Ok(PseudoLabels {
        labels: logits.row_argmax(),
        logits,
    })
}

/// Fraction of exact matches.
pub fn pseudo_label_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(TrustError::shape(
            "pseudo_label_accuracy",
            format!("{} predictions vs {} labels", predicted.len(), truth.len()),
        ));
    }
    if predicted.is_empty() {
        return Err(TrustError::InvalidArgument("accuracy of an empty label set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

pub fn save_pseudo_labels(dir: &Path, p: &PseudoLabels) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| TrustError::io(dir, e))?;
    write_labels_file(&dir.join(PSEUDO_LABELS_FILE), &p.labels)?;
    write_embedding_file(&dir.join(PSEUDO_LOGITS_FILE), &p.logits)
}

pub fn load_pseudo_labels(dir: &Path) -> Result<PseudoLabels> {
    let labels = read_labels_file(&dir.join(PSEUDO_LABELS_FILE))?;
    let logits = read_embedding_file(&dir.join(PSEUDO_LOGITS_FILE))?;
    if logits.rows() != labels.len() {
        return Err(TrustError::format(
            dir.join(PSEUDO_LOGITS_FILE),
            Some(8),
            format!("{} logit rows for {} pseudo-labels", logits.rows(), labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(TrustError::format(
            dir.join(PSEUDO_LABELS_FILE),
            None,
            format!("pseudo-label {bad} >= class count {}", logits.cols()),
        ));
    }
    Ok(PseudoLabels { labels, logits })
}
