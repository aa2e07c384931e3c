#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use trust_core::contrastive::{
    caption_similarity_matrix, hard_contrastive_loss, soft_contrastive_loss, CaptionSimilarity, ContrastiveBatch,
};
use trust_core::numerics::{grad_check, GradCheckOptions, GradCheckReport, Matrix};
use trust_core::seed::rng_for;
use trust_core::trainer::losses::{
    reweighted_target_loss, source_cls_loss, teacher_probabilities, total_loss, StepInputs, Teacher,
};
use trust_core::trainer::{BoundModel, LossToggles, ModelDims, VisionModel};

pub const B: usize = 4;
pub const P: usize = 8;
pub const C: usize = 3;
pub const D_IN: usize = 5;
pub const HIDDEN: usize = 6;

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale
        })
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// One random gradient-check problem at B=4, P=8, C=3.
pub struct Instance {
    pub z: Matrix,
    pub z_bar: Matrix,
    pub sim: CaptionSimilarity,
    pub model: VisionModel,
    pub inputs: StepInputs,
    pub teacher: Matrix,
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = rng_for(seed, &[0xACCE]);
    let z = gaussian(&mut rng, B, P, 1.0);
    let z_bar = gaussian(&mut rng, B, P, 1.0);
    let captions = gaussian(&mut rng, B, 6, 1.0);
    let sim = caption_similarity_matrix(&captions).unwrap();
    let model = VisionModel::init(
        ModelDims {
            input: D_IN,
            hidden: HIDDEN,
            feature: P,
            classes: C,
        },
        seed,
    );
    let target_weak = gaussian(&mut rng, B, D_IN, 1.0);
    let target_strong = gaussian(&mut rng, B, D_IN, 1.0);
    let teacher = teacher_probabilities(&model, &target_strong).unwrap();
    let inputs = StepInputs {
        source_weak: gaussian(&mut rng, B, D_IN, 1.0),
        source_labels: (0..B).map(|_| rng.random_range(0..C)).collect(),
        target_weak,
        target_strong,
        pseudo_labels: (0..B).map(|_| rng.random_range(0..C)).collect(),
        weights: (0..B).map(|_| rng.random_range(0.0..1.0)).collect(),
        caption_sim: sim.clone(),
    };
    Instance {
        z,
        z_bar,
        sim,
        model,
        inputs,
        teacher,
    }
}

fn bound(ids: &[trust_core::numerics::NodeId]) -> BoundModel {
    BoundModel::from_ids(ids.try_into().expect("six parameters"))
}

/// Worst relative error of every differentiable loss on one instance.
pub fn check_all(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let inst = instance(seed);
    let opts = GradCheckOptions::default();
    let tau = 0.5;
    let params = inst.model.params().to_vec();
    let mut out = Vec::new();

    let features = [inst.z.clone(), inst.z_bar.clone()];
    out.push((
        "hard contrastive",
        grad_check(
            |g, ids| {
                let batch = ContrastiveBatch::new(g, ids[0], ids[1], tau)?;
                hard_contrastive_loss(g, &batch)
            },
            &features,
            &opts,
        )
        .unwrap(),
    ));
    out.push((
        "soft contrastive",
        grad_check(
            |g, ids| {
                let batch = ContrastiveBatch::new(g, ids[0], ids[1], tau)?;
                soft_contrastive_loss(g, &batch, &inst.sim)
            },
            &features,
            &opts,
        )
        .unwrap(),
    ));
    out.push((
        "source classification",
        grad_check(
            |g, ids| {
                let m = bound(ids);
                let x = g.constant(inst.inputs.source_weak.clone());
                source_cls_loss(g, &m, x, &inst.inputs.source_labels)
            },
            &params,
            &opts,
        )
        .unwrap(),
    ));
    out.push((
        "reweighted target",
        grad_check(
            |g, ids| {
                let m = bound(ids);
                let x = g.constant(inst.inputs.target_weak.clone());
                let z = m.features(g, x)?;
                let logits = m.classify(g, z)?;
                let teacher = g.constant(inst.teacher.clone());
                reweighted_target_loss(g, logits, teacher, &inst.inputs.pseudo_labels, &inst.inputs.weights)
            },
            &params,
            &opts,
        )
        .unwrap(),
    ));
    for (name, toggles) in [
        ("total (soft)", LossToggles::FULL),
        (
            "total (hard)",
            LossToggles {
                use_soft_ctr: false,
                use_hard_ctr: true,
                use_uncertainty: true,
            },
        ),
    ] {
        out.push((
            name,
            grad_check(
                |g, ids| {
                    let m = bound(ids);
                    Ok(total_loss(g, &m, &inst.inputs, toggles, tau, Teacher::Fixed(&inst.teacher))?.total)
                },
                &params,
                &opts,
            )
            .unwrap(),
        ));
    }
    out
}
