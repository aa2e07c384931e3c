//! Reliability weights for caption pseudo-labels from frozen CLIP embeddings.
//!
//! Within a batch of image/caption pairs the scaled cosine matrix `S` is
//! row-softmaxed and its diagonal read off: `w_i` is how strongly image `i`
//! prefers its own caption over the other captions in the batch.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::format::{read_embedding_file, write_embedding_file};
use crate::data::UnlabeledView;
use crate::error::{Result, TrustError};
use crate::numerics::Matrix;
use crate::seed::{rng_for, stream};

pub const HISTOGRAM_BINS: usize = 50;

/// B×B scaled image-caption cosine similarities; entry (i, j) compares
/// image i with caption j.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    values: Matrix,
}

impl SimilarityMatrix {
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(TrustError::shape(
                "similarity_matrix",
                format!("{}x{} is not square", values.rows(), values.cols()),
            ));
        }
        Ok(SimilarityMatrix { values })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.values.rows()
    }
}

/// Per-sample weights plus the scoring batch each came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ReliabilityWeights {
    pub w: Vec<f64>,
    pub scoring_batch_id: Vec<usize>,
}

impl ReliabilityWeights {
    /// Weight 1 everywhere (reweighting disabled).
    pub fn ones(n: usize) -> Self {
        ReliabilityWeights {
            w: vec![1.0; n],
            scoring_batch_id: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `values[i][j] = scale · cos(clip_img[i], clip_txt[j])`.
pub fn clip_similarity(clip_img: &Matrix, clip_txt: &Matrix, scale: f64) -> Result<SimilarityMatrix> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(TrustError::InvalidArgument(format!("similarity scale {scale} must be > 0")));
    }
    if clip_img.shape() != clip_txt.shape() {
        return Err(TrustError::shape(
            "clip_similarity",
            format!("images {:?} vs captions {:?}", clip_img.shape(), clip_txt.shape()),
        ));
    }
    let img = clip_img.l2_normalize_rows()?;
    let txt = clip_txt.l2_normalize_rows()?;
    let cos = img.matmul(&txt.transpose())?;
    SimilarityMatrix::from_matrix(cos.map(|c| scale * c.clamp(-1.0, 1.0)))
}

/// Diagonal of the row-softmaxed similarity matrix.
pub fn reliability_weights(s: &SimilarityMatrix) -> Vec<f64> {
    let soft = s.values.row_softmax();
    (0..s.size()).map(|i| soft.get(i, i)).collect()
}

/// Scores every target sample once, in fixed seeded batches of
/// `batch_size`. When `batch_size` does not divide N the last batch is
/// filled by borrowing samples from the start of the permutation; borrowed
/// samples keep the weight from their own batch.
pub fn score_dataset(target: UnlabeledView<'_>, batch_size: usize, scale: f64, seed: u64) -> Result<ReliabilityWeights> {
    let n = target.len();
    if batch_size < 2 {
        return Err(TrustError::InvalidArgument(format!(
            "scoring batch size {batch_size} < 2"
        )));
    }
    if n < batch_size {
        return Err(TrustError::InvalidArgument(format!(
            "{n} target samples is fewer than the scoring batch size {batch_size}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[stream::SCORING]));

    let mut w = vec![0.0; n];
    let mut batch_id = vec![0; n];
    for (b, start) in (0..n).step_by(batch_size).enumerate() {
        let owned = (n - start).min(batch_size);
        let members: Vec<usize> = order[start..start + owned]
            .iter()
            .chain(order.iter().take(batch_size - owned))
            .copied()
            .collect();
        let s = clip_similarity(
            &target.clip_img().gather_rows(&members)?,
            &target.clip_txt().gather_rows(&members)?,
            scale,
        )?;
        for (&sample, weight) in members.iter().zip(reliability_weights(&s)).take(owned) {
            w[sample] = weight;
            batch_id[sample] = b;
        }
    }
    Ok(ReliabilityWeights {
        w,
        scoring_batch_id: batch_id,
    })
}

/// Area under the ROC curve of `scores` for separating `positive` samples
/// from the rest (Mann-Whitney, ties count one half). `None` when either
/// class is empty.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Average ranks over ties.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Clean-vs-corrupted weight distributions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightHistogram {
    pub bins: usize,
    /// Bin edges are `k / bins`; the last bin is closed on the right.
    pub clean: Vec<u64>,
    pub corrupted: Vec<u64>,
    pub n_clean: usize,
    pub n_corrupted: usize,
    pub mean_clean: Option<f64>,
    pub mean_corrupted: Option<f64>,
    /// AUROC of `w` as a score for "caption is clean".
    pub auroc: Option<f64>,
}

fn bin_of(w: f64) -> usize {
    ((w * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn weight_histogram(weights: &ReliabilityWeights, corrupted: Option<&[bool]>) -> Result<WeightHistogram> {
    let mask = corrupted.ok_or_else(|| {
        TrustError::InvalidArgument("weight histogram needs a corrupted-caption mask".into())
    })?;
    if mask.len() != weights.len() {
        return Err(TrustError::shape(
            "weight_histogram",
            format!("{} weights vs {} mask entries", weights.len(), mask.len()),
        ));
    }
    let mut clean = vec![0u64; HISTOGRAM_BINS];
    let mut dirty = vec![0u64; HISTOGRAM_BINS];
    let (mut sum_clean, mut sum_dirty) = (0.0, 0.0);
    for (&w, &c) in weights.w.iter().zip(mask) {
        if c {
            dirty[bin_of(w)] += 1;
            sum_dirty += w;
        } else {
            clean[bin_of(w)] += 1;
            sum_clean += w;
        }
    }
    let n_corrupted = mask.iter().filter(|&&c| c).count();
    let n_clean = mask.len() - n_corrupted;
    let is_clean: Vec<bool> = mask.iter().map(|&c| !c).collect();
    Ok(WeightHistogram {
        bins: HISTOGRAM_BINS,
        clean,
        corrupted: dirty,
        n_clean,
        n_corrupted,
        mean_clean: (n_clean > 0).then(|| sum_clean / n_clean as f64),
        mean_corrupted: (n_corrupted > 0).then(|| sum_dirty / n_corrupted as f64),
        auroc: auroc(&weights.w, &is_clean),
    })
}

/// Writes weights as an N×1 embedding file.
pub fn save_weights(path: &Path, weights: &ReliabilityWeights) -> Result<()> {
    write_embedding_file(path, &Matrix::column(&weights.w)?)
}

/// Reads an N×1 weight file. Batch provenance is not stored, so ids are 0.
pub fn load_weights(path: &Path) -> Result<ReliabilityWeights> {
    let m = read_embedding_file(path)?;
    if m.cols() != 1 {
        return Err(TrustError::format(path, Some(12), format!("weights file has {} columns, expected 1", m.cols())));
    }
    if let Some(bad) = m.as_slice().iter().find(|&&w| !(0.0..=1.0).contains(&w)) {
        return Err(TrustError::format(path, None, format!("weight {bad} outside [0, 1]")));
    }
    let n = m.rows();
    Ok(ReliabilityWeights {
        w: m.into_vec(),
        scoring_batch_id: vec![0; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SynthConfig};

    #[test]
    fn orthonormal_rows_give_identity() {
        let e = Matrix::identity(3);
        let s = clip_similarity(&e, &e, 1.0).unwrap();
        assert!(s.values().max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn scale_invariant_rows() {
        let img = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.3]]).unwrap();
        let txt = Matrix::from_rows(&[vec![0.2, 1.0], vec![1.0, -1.0]]).unwrap();
        let mut scaled = img.clone();
        for c in 0..2 {
            scaled.set(0, c, img.get(0, c) * 5.0);
        }
        let a = clip_similarity(&img, &txt, 3.0).unwrap();
        let b = clip_similarity(&scaled, &txt, 3.0).unwrap();
        assert!(a.values().max_abs_diff(b.values()) < 1e-14);
    }

    #[test]
    fn sixty_degrees() {
        let img = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]).unwrap();
        let s = clip_similarity(&img, &img, 10.0).unwrap();
        assert!((s.values().get(0, 1) - 5.0).abs() < 1e-12);
        assert!((s.values().get(1, 0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_rows_and_bad_scale() {
        let z = Matrix::zeros(2, 2);
        let e = Matrix::identity(2);
        assert!(clip_similarity(&z, &e, 1.0).is_err());
        assert!(clip_similarity(&e, &e, 0.0).is_err());
        assert!(clip_similarity(&e, &Matrix::identity(3), 1.0).is_err());
    }

    #[test]
    fn two_by_two_weights() {
        let s = SimilarityMatrix::from_matrix(Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()).unwrap();
        let w = reliability_weights(&s);
        let expect0 = 1.0 / (1.0 + (-0.8f64).exp());
        let expect1 = 1.0 / (1.0 + (-0.6f64).exp());
        assert!((w[0] - expect0).abs() < 1e-15);
        assert!((w[1] - expect1).abs() < 1e-15);
        assert!((w[0] - 0.6900).abs() < 5e-5 && (w[1] - 0.6457).abs() < 5e-5);
    }

    #[test]
    fn constant_matrix_gives_uniform() {
        let s = SimilarityMatrix::from_matrix(Matrix::filled(5, 5, 3.7)).unwrap();
        for w in reliability_weights(&s) {
            assert!((w - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_diagonal() {
        let mut m = Matrix::zeros(4, 4);
        for i in 0..4 {
            m.set(i, i, 100.0);
        }
        for w in reliability_weights(&SimilarityMatrix::from_matrix(m).unwrap()) {
            assert!((w - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn auroc_extremes() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]), Some(1.0));
        assert_eq!(auroc(&[0.1, 0.2, 0.9, 0.8], &[true, true, false, false]), Some(0.0));
        assert_eq!(auroc(&[0.5, 0.5, 0.5, 0.5], &[true, false, true, false]), Some(0.5));
        assert_eq!(auroc(&[0.5], &[true]), None);
    }

    #[test]
    fn auroc_matches_pair_count() {
        let scores = [0.3, 0.7, 0.7, 0.1, 0.9, 0.3, 0.5];
        let pos = [true, false, true, false, true, true, false];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                if pos[i] && !pos[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((auroc(&scores, &pos).unwrap() - wins / pairs).abs() < 1e-15);
    }

    #[test]
    fn scoring_covers_every_sample_once() {
        let cfg = SynthConfig {
            n_per_class: 7,
            ..Default::default()
        };
        let (_, target) = gen_synthetic(&cfg).unwrap();
        // 70 samples, batches of 16: four full batches plus one wrapped.
        let w = score_dataset(target.unlabeled(), 16, 10.0, 3).unwrap();
        assert_eq!(w.len(), 70);
        assert!(w.w.iter().all(|&x| x > 0.0 && x <= 1.0));
        let mut counts = [0usize; 5];
        w.scoring_batch_id.iter().for_each(|&b| counts[b] += 1);
        assert_eq!(counts, [16, 16, 16, 16, 6]);
        assert_eq!(w, score_dataset(target.unlabeled(), 16, 10.0, 3).unwrap());
    }

    #[test]
    fn tiny_scale_gives_uniform_weights() {
        let (_, target) = gen_synthetic(&SynthConfig::default()).unwrap();
        let w = score_dataset(target.unlabeled(), 20, 1e-9, 0).unwrap();
        assert!(w.w.iter().all(|&x| (x - 0.05).abs() < 1e-9));
    }

    #[test]
    fn scoring_rejects_small_targets() {
        let (_, target) = gen_synthetic(&SynthConfig {
            n_per_class: 1,
            ..Default::default()
        })
        .unwrap();
        assert!(score_dataset(target.unlabeled(), 64, 10.0, 0).is_err());
        assert!(score_dataset(target.unlabeled(), 1, 10.0, 0).is_err());
    }

    #[test]
    fn histogram_counts() {
        let w = ReliabilityWeights {
            w: vec![0.0, 0.5, 1.0, 0.99],
            scoring_batch_id: vec![0; 4],
        };
        let h = weight_histogram(&w, Some(&[true, false, false, true])).unwrap();
        assert_eq!(h.clean.iter().sum::<u64>(), 2);
        assert_eq!(h.corrupted.iter().sum::<u64>(), 2);
        assert_eq!(h.clean[25], 1);
        assert_eq!(h.clean[49], 1);
        assert_eq!(h.corrupted[0], 1);
        assert!(weight_histogram(&w, None).is_err());
    }

    #[test]
    fn weights_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.emb");
        let w = ReliabilityWeights {
            w: vec![0.25, 0.5, 0.75],
            scoring_batch_id: vec![0; 3],
        };
        save_weights(&p, &w).unwrap();
        assert_eq!(load_weights(&p).unwrap(), w);
    }
}
