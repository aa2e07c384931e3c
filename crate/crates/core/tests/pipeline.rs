use trust_core::data::{gen_synthetic, DatasetParts, Domain, EmbeddingDataset, SynthConfig};
use trust_core::numerics::cosine;
use trust_core::pseudolabel::{generate_pseudo_labels, train_text_classifier, TextClassifierConfig};
use trust_core::trainer::{evaluate, run_pipeline, train, LossToggles, ModelDims, TrainConfig, VisionModel};
use trust_core::uncertainty::{score_dataset, ReliabilityWeights};
use trust_core::TrustError;

fn small_synth(seed: u64) -> (EmbeddingDataset, EmbeddingDataset) {
    gen_synthetic(&SynthConfig {
        classes: 4,
        n_per_class: 16,
        dim_image: 12,
        dim_caption: 10,
        dim_clip: 8,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        epochs: 3,
        scoring_batch_size: 16,
        hidden: 16,
        feature_dim: 8,
        text_classifier: TextClassifierConfig {
            epochs: 50,
            ..TextClassifierConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn without_labels(ds: &EmbeddingDataset) -> EmbeddingDataset {
    EmbeddingDataset::new(DatasetParts {
        domain: ds.domain(),
        num_classes: ds.num_classes(),
        image: ds.image().clone(),
        caption: ds.caption().clone(),
        clip_img: ds.clip_img().clone(),
        clip_txt: ds.clip_txt().clone(),
        labels: None,
        corrupted: None,
        seed: ds.seed(),
    })
    .unwrap()
}

#[test]
fn zero_epochs_reports_only_the_initial_evaluation() {
    let (s, t) = small_synth(1);
    let cfg = TrainConfig {
        epochs: 0,
        ..quick_config()
    };
    let out = run_pipeline(&s, &t, &cfg).unwrap();
    assert!(out.report.epochs.is_empty());
    assert_eq!(out.report.initial_target_accuracy, out.report.final_target_accuracy);
}

#[test]
fn reports_are_reproducible() {
    let (s, t) = small_synth(2);
    let a = run_pipeline(&s, &t, &quick_config()).unwrap();
    let b = run_pipeline(&s, &t, &quick_config()).unwrap();
    assert_eq!(a.report.epochs.len(), 3);
    assert_eq!(a.report.without_timing(), b.report.without_timing());
    assert_eq!(
        serde_json::to_string(&a.report.without_timing()).unwrap(),
        serde_json::to_string(&b.report.without_timing()).unwrap()
    );
    assert_eq!(a.model, b.model);
}

#[test]
fn target_labels_do_not_influence_training() {
    let (s, t) = small_synth(3);
    let cfg = quick_config();
    let fit = train_text_classifier(&s, &cfg.text_classifier).unwrap();
    let pseudo = generate_pseudo_labels(&fit.classifier, t.unlabeled()).unwrap();
    let w = score_dataset(t.unlabeled(), 16, cfg.gamma, cfg.seed).unwrap();
    let (with_labels, report) = train(&s, &t, &pseudo, &w, &cfg).unwrap();
    let blind = without_labels(&t);
    let (without, blind_report) = train(&s, &blind, &pseudo, &w, &cfg).unwrap();
    assert_eq!(with_labels, without);
    assert!(report.final_target_accuracy.is_some());
    assert!(blind_report.final_target_accuracy.is_none());
    assert!(matches!(evaluate(&without, &blind), Err(TrustError::MissingLabels)));
}

#[test]
fn reweighting_off_uses_unit_weights() {
    let (s, t) = small_synth(4);
    let out = run_pipeline(&s, &t, &quick_config().with_toggles(LossToggles::NONE)).unwrap();
    assert_eq!(out.weights, ReliabilityWeights::ones(t.len()));
    let on = run_pipeline(&s, &t, &quick_config()).unwrap();
    assert!(on.weights.w.iter().all(|&w| w < 1.0));
}

#[test]
fn weights_are_fixed_before_training() {
    let (_, t) = small_synth(5);
    let a = score_dataset(t.unlabeled(), 16, 10.0, 9).unwrap();
    let b = score_dataset(t.unlabeled(), 16, 10.0, 9).unwrap();
    assert_eq!(a, b);
}

/// A random network sends whole class clusters to one class, so its hits
/// are binomial over the C clusters rather than the N samples. Averaging
/// many initialisations gives a stable chance-level estimate.
#[test]
fn random_models_are_at_chance() {
    let (_, t) = gen_synthetic(&SynthConfig {
        seed: 6,
        ..SynthConfig::default()
    })
    .unwrap();
    let inits = 40;
    let mean = (0..inits)
        .map(|seed| {
            let model = VisionModel::init(
                ModelDims {
                    input: t.dim_image(),
                    hidden: 64,
                    feature: 32,
                    classes: 10,
                },
                seed,
            );
            evaluate(&model, &t).unwrap()
        })
        .sum::<f64>()
        / inits as f64;
    let sigma = (0.1f64 * 0.9 / (10 * inits) as f64).sqrt();
    assert!((mean - 0.1).abs() <= 3.0 * sigma, "mean accuracy {mean}, 3 sigma {}", 3.0 * sigma);
}

#[test]
fn evaluation_ignores_sample_order() {
    let (s, t) = small_synth(7);
    let out = run_pipeline(&s, &t, &quick_config()).unwrap();
    let order: Vec<usize> = (0..t.len()).rev().collect();
    let shuffled = t.select(&order).unwrap();
    assert_eq!(evaluate(&out.model, &t).unwrap(), evaluate(&out.model, &shuffled).unwrap());
}

#[test]
fn incompatible_inputs_are_rejected() {
    let (s, t) = small_synth(8);
    let (_, other) = gen_synthetic(&SynthConfig {
        classes: 4,
        n_per_class: 16,
        dim_image: 13,
        dim_caption: 10,
        dim_clip: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    assert!(matches!(run_pipeline(&s, &other, &quick_config()), Err(TrustError::Shape { .. })));
    let both = LossToggles {
        use_soft_ctr: true,
        use_hard_ctr: true,
        use_uncertainty: false,
    };
    assert!(matches!(run_pipeline(&s, &t, &quick_config().with_toggles(both)), Err(TrustError::Config(_))));
}

#[test]
fn runaway_learning_rate_reports_divergence() {
    let (s, t) = small_synth(9);
    let cfg = TrainConfig {
        lr: 1e200,
        ..quick_config()
    };
    match run_pipeline(&s, &t, &cfg) {
        Err(TrustError::Diverged { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.report.final_target_accuracy)),
    }
}

#[test]
fn corruption_lowers_clip_agreement() {
    let mean_cos = |rho: f64| {
        let (_, t) = gen_synthetic(&SynthConfig {
            rho,
            seed: 10,
            ..SynthConfig::default()
        })
        .unwrap();
        (0..t.len())
            .map(|i| cosine(t.clip_img().row(i), t.clip_txt().row(i)).unwrap())
            .sum::<f64>()
            / t.len() as f64
    };
    assert!(mean_cos(0.0) > mean_cos(1.0));
}

#[test]
fn source_domain_is_labelled() {
    let (s, t) = small_synth(11);
    assert_eq!(s.domain(), Domain::Source);
    assert_eq!(t.domain(), Domain::Target);
    assert!(s.corrupted_mask().map_or(true, |m| m.iter().all(|&c| !c)));
}
