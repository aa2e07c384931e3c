//! Hard (one positive per anchor) and caption-guided soft contrastive losses.
//!
//! Both losses take weak-view features `z` and strong-view features `z̄` for
//! the same B target samples. Rows are L2-normalised before any dot product.
//!
//! Hard:  `L = −Σ_i log[ exp(z_i·z̄_i/τ) / Σ_{j≠i} exp(z_i·z_j/τ) ]`
//!
//! Soft:  `L = −Σ_i log{ (1/B) Σ_p sim_ip exp(z_i·z̄_p/τ) / Σ_{j≠i} (1−sim_ij) exp(z_i·z_j/τ) }`
//!
//! With `sim = I` the soft loss equals the hard loss plus `B·log B`.

use serde::Serialize;

use crate::error::{Result, TrustError};
use crate::numerics::{cosine, Graph, Matrix, NodeId};

/// Clamped caption-caption cosine similarities for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionSimilarity {
    sim: Matrix,
}

impl CaptionSimilarity {
    /// Wraps a precomputed matrix after checking it is square, symmetric,
    /// in `[0, 1]` and has a unit diagonal.
    pub fn from_matrix(sim: Matrix) -> Result<Self> {
        let b = sim.rows();
        if sim.cols() != b {
            return Err(TrustError::shape("caption_similarity", format!("{}x{} is not square", b, sim.cols())));
        }
        for i in 0..b {
            if sim.get(i, i) != 1.0 {
                return Err(TrustError::InvalidArgument(format!("sim[{i}][{i}] must be 1")));
            }
            for j in 0..b {
                let v = sim.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(TrustError::InvalidArgument(format!("sim[{i}][{j}] = {v} outside [0, 1]")));
                }
                if v != sim.get(j, i) {
                    return Err(TrustError::InvalidArgument(format!("sim is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(CaptionSimilarity { sim })
    }

    pub fn identity(b: usize) -> Self {
        CaptionSimilarity { sim: Matrix::identity(b) }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.sim
    }

    pub fn size(&self) -> usize {
        self.sim.rows()
    }

    /// Same similarities with rows and columns reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let b = self.size();
        if perm.len() != b {
            return Err(TrustError::shape("caption_similarity", "permutation length"));
        }
        let mut out = Matrix::zeros(b, b);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                out.set(i, j, self.sim.get(pi, pj));
            }
        }
        Ok(CaptionSimilarity { sim: out })
    }
}

/// `sim[a][b] = max(0, cos(t_a, t_b))`, diagonal forced to 1.
pub fn caption_similarity_matrix(captions: &Matrix) -> Result<CaptionSimilarity> {
    if let Some(i) = captions.row_norms().iter().position(|&n| n == 0.0) {
        return Err(TrustError::Degenerate(format!("caption embedding {i} has zero norm")));
    }
    let b = captions.rows();
    let mut sim = Matrix::identity(b);
    for i in 0..b {
        for j in i + 1..b {
            let c = cosine(captions.row(i), captions.row(j)).expect("norms checked");
            let v = c.clamp(0.0, 1.0);
            sim.set(i, j, v);
            sim.set(j, i, v);
        }
    }
    Ok(CaptionSimilarity { sim })
}

/// Normalised weak/strong features of one target batch.
#[derive(Clone, Copy, Debug)]
pub struct ContrastiveBatch {
    pub z: NodeId,
    pub z_bar: NodeId,
    pub tau: f64,
    pub size: usize,
}

impl ContrastiveBatch {
    /// Records the row normalisation of raw feature nodes.
    pub fn new(g: &mut Graph, z_raw: NodeId, z_bar_raw: NodeId, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(TrustError::InvalidArgument(format!("temperature {tau} must be > 0")));
        }
        let (shape_a, shape_b) = (g.value(z_raw).shape(), g.value(z_bar_raw).shape());
        if shape_a != shape_b {
            return Err(TrustError::shape("contrastive_batch", format!("views {shape_a:?} vs {shape_b:?}")));
        }
        let z = g.l2_normalize_rows(z_raw)?;
        let z_bar = g.l2_normalize_rows(z_bar_raw)?;
        Ok(ContrastiveBatch {
            z,
            z_bar,
            tau,
            size: shape_a.0,
        })
    }

    fn check_size(&self) -> Result<()> {
        if self.size < 2 {
            return Err(TrustError::InvalidArgument(format!(
                "contrastive batch of {} has no negatives",
                self.size
            )));
        }
        Ok(())
    }

    /// `a · bᵀ / τ`.
    fn logits(&self, g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
        let bt = g.transpose(b)?;
        let dots = g.matmul(a, bt)?;
        g.scale(dots, 1.0 / self.tau)
    }
}

fn off_diagonal_ones(b: usize) -> Matrix {
    let mut m = Matrix::filled(b, b, 1.0);
    for i in 0..b {
        m.set(i, i, 0.0);
    }
    m
}

/// Hard contrastive loss; the positive is excluded from the denominator.
pub fn hard_contrastive_loss(g: &mut Graph, batch: &ContrastiveBatch) -> Result<NodeId> {
    batch.check_size()?;
    let pair = g.mul(batch.z, batch.z_bar)?;
    let pos_sum = g.sum(pair)?;
    let pos = g.scale(pos_sum, 1.0 / batch.tau)?;
    let self_logits = batch.logits(g, batch.z, batch.z)?;
    let neg = g.weighted_log_sum_exp(self_logits, &off_diagonal_ones(batch.size))?;
    let neg_sum = g.sum(neg)?;
    g.sub(neg_sum, pos)
}

/// Caption-guided soft contrastive loss.
pub fn soft_contrastive_loss(g: &mut Graph, batch: &ContrastiveBatch, sim: &CaptionSimilarity) -> Result<NodeId> {
    batch.check_size()?;
    let b = batch.size;
    if sim.size() != b {
        return Err(TrustError::shape(
            "soft_contrastive_loss",
            format!("similarity is {0}x{0}, batch is {b}", sim.size()),
        ));
    }
    let repel = sim.matrix().map(|s| 1.0 - s).hadamard(&off_diagonal_ones(b))?;
    if let Some(row) = (0..b).find(|&i| repel.row(i).iter().all(|&v| v == 0.0)) {
        return Err(TrustError::Degenerate(format!(
            "anchor {row} has no repulsion weight: every other caption in the batch is identical to its own"
        )));
    }
    let cross = batch.logits(g, batch.z, batch.z_bar)?;
    let attract = g.weighted_log_sum_exp(cross, sim.matrix())?;
    let attract_sum = g.sum(attract)?;
    let self_logits = batch.logits(g, batch.z, batch.z)?;
    let repulse = g.weighted_log_sum_exp(self_logits, &repel)?;
    let repulse_sum = g.sum(repulse)?;
    let diff = g.sub(repulse_sum, attract_sum)?;
    g.add_scalar(diff, b as f64 * (b as f64).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairWeight {
    pub a: usize,
    pub b: usize,
    pub positiveness: f64,
    pub negativeness: f64,
}

/// Attraction/repulsion strengths for every ordered pair.
pub fn pair_weights_report(sim: &CaptionSimilarity) -> Vec<PairWeight> {
    let n = sim.size();
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let s = sim.matrix().get(a, b);
            out.push(PairWeight {
                a,
                b,
                positiveness: s,
                negativeness: 1.0 - s,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_hard(z: &Matrix, zb: &Matrix, tau: f64) -> f64 {
        let mut g = Graph::new();
        let a = g.constant(z.clone());
        let b = g.constant(zb.clone());
        let batch = ContrastiveBatch::new(&mut g, a, b, tau).unwrap();
        let l = hard_contrastive_loss(&mut g, &batch).unwrap();
        g.scalar(l)
    }

    #[test]
    fn caption_similarity_cases() {
        let same = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let s = caption_similarity_matrix(&same).unwrap();
        assert!(s.matrix().max_abs_diff(&Matrix::filled(3, 3, 1.0)) < 1e-15);

        let s = caption_similarity_matrix(&Matrix::identity(3)).unwrap();
        assert_eq!(s.matrix(), &Matrix::identity(3));

        let deg45 = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let s = caption_similarity_matrix(&deg45).unwrap();
        assert!((s.matrix().get(0, 1) - 0.5f64.sqrt()).abs() < 1e-15);

        let opposite = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(caption_similarity_matrix(&opposite).unwrap().matrix().get(0, 1), 0.0);

        let zero = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(caption_similarity_matrix(&zero).is_err());
    }

    #[test]
    fn hard_loss_closed_form() {
        // z_0 = z̄_0 = e0, z_1 = z̄_1 = e1: each anchor contributes −log(e/1) = −1.
        let e = Matrix::identity(2);
        assert!((eval_hard(&e, &e, 1.0) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn hard_loss_needs_two_samples() {
        let mut g = Graph::new();
        let a = g.constant(Matrix::row_vector(&[1.0, 0.0]).unwrap());
        let batch = ContrastiveBatch::new(&mut g, a, a, 0.1).unwrap();
        assert!(hard_contrastive_loss(&mut g, &batch).is_err());
    }

    #[test]
    fn all_ones_similarity_is_degenerate() {
        let mut g = Graph::new();
        let a = g.constant(Matrix::identity(3));
        let batch = ContrastiveBatch::new(&mut g, a, a, 0.5).unwrap();
        let sim = CaptionSimilarity::from_matrix(Matrix::filled(3, 3, 1.0)).unwrap();
        match soft_contrastive_loss(&mut g, &batch, &sim) {
            Err(TrustError::Degenerate(msg)) => assert!(msg.contains("identical")),
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn pair_weights() {
        let sim = CaptionSimilarity::from_matrix(
            Matrix::from_rows(&[vec![1.0, 0.7], vec![0.7, 1.0]]).unwrap(),
        )
        .unwrap();
        let r = pair_weights_report(&sim);
        assert_eq!(r.len(), 4);
        assert_eq!((r[1].positiveness, r[1].negativeness), (0.7, 1.0 - 0.7));
        assert_eq!((r[0].positiveness, r[0].negativeness), (1.0, 0.0));
        let zero = CaptionSimilarity::identity(2);
        assert_eq!(pair_weights_report(&zero)[1].negativeness, 1.0);
        for p in r {
            assert!((p.positiveness + p.negativeness - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn from_matrix_validation() {
        assert!(CaptionSimilarity::from_matrix(Matrix::zeros(2, 2)).is_err());
        let asym = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).unwrap();
        assert!(CaptionSimilarity::from_matrix(asym).is_err());
        let neg = Matrix::from_rows(&[vec![1.0, -0.2], vec![-0.2, 1.0]]).unwrap();
        assert!(CaptionSimilarity::from_matrix(neg).is_err());
    }
}
