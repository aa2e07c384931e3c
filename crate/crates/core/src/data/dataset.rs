use serde::{Deserialize, Serialize};

use crate::error::{Result, TrustError};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

/// Aligned per-sample embeddings for one domain.
///
/// Row `i` of every matrix describes the same sample. `labels` on a target
/// dataset are ground truth kept for evaluation; training code reaches target
/// data only through [`UnlabeledView`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    domain: Domain,
    num_classes: usize,
    image: Matrix,
    caption: Matrix,
    clip_img: Matrix,
    clip_txt: Matrix,
    labels: Option<Vec<usize>>,
    corrupted: Option<Vec<bool>>,
    seed: Option<u64>,
}

/// Builder-style inputs for [`EmbeddingDataset::new`].
#[derive(Clone, Debug)]
pub struct DatasetParts {
    pub domain: Domain,
    pub num_classes: usize,
    pub image: Matrix,
    pub caption: Matrix,
    pub clip_img: Matrix,
    pub clip_txt: Matrix,
    pub labels: Option<Vec<usize>>,
    pub corrupted: Option<Vec<bool>>,
    pub seed: Option<u64>,
}

impl EmbeddingDataset {
    pub fn new(parts: DatasetParts) -> Result<Self> {
        let n = parts.image.rows();
        for (name, m) in [
            ("caption", &parts.caption),
            ("clip_img", &parts.clip_img),
            ("clip_txt", &parts.clip_txt),
        ] {
            if m.rows() != n {
                return Err(TrustError::shape(
                    "dataset",
                    format!("{name} has {} rows, image has {n}", m.rows()),
                ));
            }
        }
        if parts.clip_img.cols() != parts.clip_txt.cols() {
            return Err(TrustError::shape(
                "dataset",
                format!(
                    "clip_img width {} differs from clip_txt width {}",
                    parts.clip_img.cols(),
                    parts.clip_txt.cols()
                ),
            ));
        }
        if parts.num_classes == 0 {
            return Err(TrustError::InvalidArgument("class count must be positive".into()));
        }
        if let Some(labels) = &parts.labels {
            if labels.len() != n {
                return Err(TrustError::shape(
                    "dataset",
                    format!("{} labels for {n} samples", labels.len()),
                ));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= parts.num_classes) {
                return Err(TrustError::InvalidArgument(format!(
                    "label {bad} outside [0, {})",
                    parts.num_classes
                )));
            }
        } else if parts.domain == Domain::Source {
            return Err(TrustError::MissingLabels);
        }
        if let Some(mask) = &parts.corrupted {
            if mask.len() != n {
                return Err(TrustError::shape(
                    "dataset",
                    format!("{} mask entries for {n} samples", mask.len()),
                ));
            }
        }
        Ok(EmbeddingDataset {
            domain: parts.domain,
            num_classes: parts.num_classes,
            image: parts.image,
            caption: parts.caption,
            clip_img: parts.clip_img,
            clip_txt: parts.clip_txt,
            labels: parts.labels,
            corrupted: parts.corrupted,
            seed: parts.seed,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.image.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image(&self) -> &Matrix {
        &self.image
    }

    pub fn caption(&self) -> &Matrix {
        &self.caption
    }

    pub fn clip_img(&self) -> &Matrix {
        &self.clip_img
    }

    pub fn clip_txt(&self) -> &Matrix {
        &self.clip_txt
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn corrupted_mask(&self) -> Option<&[bool]> {
        self.corrupted.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dim_image(&self) -> usize {
        self.image.cols()
    }

    pub fn dim_caption(&self) -> usize {
        self.caption.cols()
    }

    pub fn dim_clip(&self) -> usize {
        self.clip_img.cols()
    }

    /// Label-free view used by everything that trains on target data.
    pub fn unlabeled(&self) -> UnlabeledView<'_> {
        UnlabeledView { inner: self }
    }

    /// Copy with rows reordered by `order` (a permutation or any index list).
    pub fn select(&self, order: &[usize]) -> Result<EmbeddingDataset> {
        EmbeddingDataset::new(DatasetParts {
            domain: self.domain,
            num_classes: self.num_classes,
            image: self.image.gather_rows(order)?,
            caption: self.caption.gather_rows(order)?,
            clip_img: self.clip_img.gather_rows(order)?,
            clip_txt: self.clip_txt.gather_rows(order)?,
            labels: self.labels.as_ref().map(|l| order.iter().map(|&i| l[i]).collect()),
            corrupted: self.corrupted.as_ref().map(|m| order.iter().map(|&i| m[i]).collect()),
            seed: self.seed,
        })
    }
}

/// Target data without access to labels or the corruption mask.
#[derive(Clone, Copy, Debug)]
pub struct UnlabeledView<'a> {
    inner: &'a EmbeddingDataset,
}

impl<'a> UnlabeledView<'a> {
    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn image(&self) -> &'a Matrix {
        &self.inner.image
    }

    pub fn caption(&self) -> &'a Matrix {
        &self.inner.caption
    }

    pub fn clip_img(&self) -> &'a Matrix {
        &self.inner.clip_img
    }

    pub fn clip_txt(&self) -> &'a Matrix {
        &self.inner.clip_txt
    }
}
