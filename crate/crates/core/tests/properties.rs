use proptest::prelude::*;

use trust_core::contrastive::{caption_similarity_matrix, hard_contrastive_loss, soft_contrastive_loss, ContrastiveBatch};
use trust_core::data::format::{decode_embedding, encode_embedding};
use trust_core::numerics::{Graph, Matrix};
use trust_core::uncertainty::{auroc, reliability_weights, SimilarityMatrix};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::new(rows, cols, v).unwrap())
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn losses(z: &Matrix, zb: &Matrix, captions: &Matrix) -> Option<(f64, f64)> {
    let sim = caption_similarity_matrix(captions).ok()?;
    let mut g = Graph::new();
    let (a, b) = (g.constant(z.clone()), g.constant(zb.clone()));
    let batch = ContrastiveBatch::new(&mut g, a, b, 0.2).ok()?;
    let hard = hard_contrastive_loss(&mut g, &batch).ok()?;
    let soft = soft_contrastive_loss(&mut g, &batch, &sim).ok()?;
    Some((g.scalar(hard), g.scalar(soft)))
}

proptest! {
    #[test]
    fn contrastive_losses_are_permutation_invariant(
        z in matrix(5, 4), zb in matrix(5, 4), caps in matrix(5, 3), perm in permutation(5)
    ) {
        let original = losses(&z, &zb, &caps);
        let permuted = losses(
            &z.gather_rows(&perm).unwrap(),
            &zb.gather_rows(&perm).unwrap(),
            &caps.gather_rows(&perm).unwrap(),
        );
        match (original, permuted) {
            (Some((h1, s1)), Some((h2, s2))) => {
                prop_assert!((h1 - h2).abs() <= 1e-9 * (1.0 + h1.abs()));
                prop_assert!((s1 - s2).abs() <= 1e-9 * (1.0 + s1.abs()));
            }
            (None, None) => {}
            other => prop_assert!(false, "inconsistent outcome {:?}", other),
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(s in matrix(6, 6)) {
        for r in s.row_softmax().row_sums().as_slice() {
            prop_assert!((r - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn weights_are_probabilities_and_follow_permutation(s in matrix(6, 6), perm in permutation(6)) {
        let w = reliability_weights(&SimilarityMatrix::from_matrix(s.clone()).unwrap());
        prop_assert!(w.iter().all(|&v| v > 0.0 && v < 1.0));
        let mut permuted = Matrix::zeros(6, 6);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                permuted.set(i, j, s.get(pi, pj));
            }
        }
        let wp = reliability_weights(&SimilarityMatrix::from_matrix(permuted).unwrap());
        for (i, &pi) in perm.iter().enumerate() {
            prop_assert!((wp[i] - w[pi]).abs() <= 1e-15);
        }
    }

    #[test]
    fn auroc_is_bounded_and_antisymmetric(
        scores in prop::collection::vec(0.0f64..1.0, 2..40), flags in prop::collection::vec(any::<bool>(), 40)
    ) {
        let positive = &flags[..scores.len()];
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        match (auroc(&scores, positive), auroc(&negated, positive)) {
            (Some(a), Some(b)) => {
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!((a + b - 1.0).abs() <= 1e-12);
            }
            (None, None) => prop_assert!(positive.iter().all(|&p| p) || positive.iter().all(|&p| !p)),
            other => prop_assert!(false, "inconsistent outcome {:?}", other),
        }
    }

    #[test]
    fn embedding_codec_round_trips_f32_values(values in prop::collection::vec(-1e6f32..1e6, 0..24), cols in 1usize..4) {
        let rows = values.len() / cols;
        let m = Matrix::new(rows, cols, values[..rows * cols].iter().map(|&v| f64::from(v)).collect()).unwrap();
        let path = std::path::Path::new("mem.emb");
        let back = decode_embedding(path, &encode_embedding(&m, path).unwrap()).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        prop_assert_eq!(back.as_slice(), m.as_slice());
    }
}
