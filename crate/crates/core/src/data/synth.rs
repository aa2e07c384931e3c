//! Synthetic two-domain generator.
//!
//! Each class owns an image prototype, a caption prototype and a CLIP
//! prototype. Target images see a fixed rotation plus offset of the image
//! prototypes; a fraction `rho` of target captions (and their CLIP text
//! embeddings) describe a wrong class. All values are rounded to `f32` so a
//! generated dataset survives a save/load round trip unchanged.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetParts, Domain, EmbeddingDataset};
use crate::error::{Result, TrustError};
use crate::numerics::Matrix;
use crate::seed::{rng_for, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub n_per_class: usize,
    pub dim_image: usize,
    pub dim_caption: usize,
    pub dim_clip: usize,
    /// Givens rotation angle (radians) applied to target image prototypes.
    pub shift_angle: f64,
    /// Norm of the translation applied to target image embeddings.
    pub shift_offset: f64,
    pub noise_image: f64,
    pub noise_caption: f64,
    pub noise_clip: f64,
    /// Probability that a target caption names a wrong class.
    pub rho: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 10,
            n_per_class: 50,
            dim_image: 128,
            dim_caption: 128,
            dim_clip: 32,
            shift_angle: 0.8,
            shift_offset: 0.5,
            noise_image: 0.1,
            noise_caption: 0.1,
            noise_clip: 0.1,
            rho: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(TrustError::Config("classes must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(TrustError::Config(format!("rho {} outside [0, 1]", self.rho)));
        }
        for (name, d) in [
            ("dim_image", self.dim_image),
            ("dim_caption", self.dim_caption),
            ("dim_clip", self.dim_clip),
        ] {
            if d < self.classes {
                return Err(TrustError::Config(format!(
                    "{name} = {d} is smaller than the class count {}",
                    self.classes
                )));
            }
        }
        for (name, v) in [
            ("shift_angle", self.shift_angle),
            ("shift_offset", self.shift_offset),
            ("noise_image", self.noise_image),
            ("noise_caption", self.noise_caption),
            ("noise_clip", self.noise_clip),
        ] {
            if !v.is_finite() {
                return Err(TrustError::Config(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("shift_offset", self.shift_offset),
            ("noise_image", self.noise_image),
            ("noise_caption", self.noise_caption),
            ("noise_clip", self.noise_clip),
        ] {
            if v < 0.0 {
                return Err(TrustError::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * std
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, std: f64) -> Vec<f64> {
    (0..dim).map(|_| gaussian(rng, std)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Gaussian prototypes with per-coordinate std 1/sqrt(dim), so norms are near 1.
fn gaussian_prototypes(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let std = 1.0 / (dim as f64).sqrt();
    (0..count).map(|_| gaussian_vec(rng, dim, std)).collect()
}

/// Orthonormal prototypes via Gram-Schmidt on Gaussian draws (needs dim ≥ count).
fn orthonormal_prototypes(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian_vec(rng, dim, 1.0);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Applies Givens rotations by `angle` to the coordinate pairs
/// (0,1), (2,3), ... within the first min(dim, 8) coordinates.
pub fn givens_rotate(v: &[f64], angle: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    let (s, c) = angle.sin_cos();
    let limit = out.len().min(8);
    let mut k = 0;
    while k + 1 < limit {
        let (a, b) = (out[k], out[k + 1]);
        out[k] = c * a - s * b;
        out[k + 1] = s * a + c * b;
        k += 2;
    }
    out
}

fn quantize(v: f64) -> f64 {
    f64::from(v as f32)
}

struct Prototypes {
    image: Vec<Vec<f64>>,
    target_image: Vec<Vec<f64>>,
    caption: Vec<Vec<f64>>,
    clip: Vec<Vec<f64>>,
}

fn prototypes(cfg: &SynthConfig) -> Prototypes {
    let mut rng = rng_for(cfg.seed, &[stream::PROTOTYPES]);
    let image = gaussian_prototypes(&mut rng, cfg.classes, cfg.dim_image);
    let caption = gaussian_prototypes(&mut rng, cfg.classes, cfg.dim_caption);
    let clip = orthonormal_prototypes(&mut rng, cfg.classes, cfg.dim_clip);
    let mut offset = gaussian_vec(&mut rng, cfg.dim_image, 1.0);
    normalize(&mut offset);
    offset.iter_mut().for_each(|x| *x *= cfg.shift_offset);
    let target_image = image
        .iter()
        .map(|mu| {
            givens_rotate(mu, cfg.shift_angle)
                .into_iter()
                .zip(&offset)
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect();
    Prototypes {
        image,
        target_image,
        caption,
        clip,
    }
}

fn noisy_row(rng: &mut ChaCha8Rng, proto: &[f64], std: f64) -> Vec<f64> {
    proto.iter().map(|&p| quantize(p + gaussian(rng, std))).collect()
}

fn build_domain(
    cfg: &SynthConfig,
    protos: &Prototypes,
    domain: Domain,
) -> Result<EmbeddingDataset> {
    let n = cfg.classes * cfg.n_per_class;
    let (sample_stream, image_protos) = match domain {
        Domain::Source => (stream::SOURCE_SAMPLES, &protos.image),
        Domain::Target => (stream::TARGET_SAMPLES, &protos.target_image),
    };
    let mut rng = rng_for(cfg.seed, &[sample_stream]);
    // Corruption draws use their own stream so changing rho leaves every
    // other draw untouched.
    let mut corrupt_rng = rng_for(cfg.seed, &[stream::CORRUPTION]);

    let mut image = Vec::with_capacity(n * cfg.dim_image);
    let mut caption = Vec::with_capacity(n * cfg.dim_caption);
    let mut clip_img = Vec::with_capacity(n * cfg.dim_clip);
    let mut clip_txt = Vec::with_capacity(n * cfg.dim_clip);
    let mut labels = Vec::with_capacity(n);
    let mut corrupted = Vec::with_capacity(n);

    for class in 0..cfg.classes {
        for _ in 0..cfg.n_per_class {
            let caption_class = match domain {
                Domain::Source => class,
                Domain::Target => {
                    let flip = corrupt_rng.random::<f64>() < cfg.rho;
                    let wrong = corrupt_rng.random_range(0..cfg.classes - 1);
                    if flip {
                        if wrong >= class {
                            wrong + 1
                        } else {
                            wrong
                        }
                    } else {
                        class
                    }
                }
            };
            image.extend(noisy_row(&mut rng, &image_protos[class], cfg.noise_image));
            caption.extend(noisy_row(&mut rng, &protos.caption[caption_class], cfg.noise_caption));
            clip_img.extend(noisy_row(&mut rng, &protos.clip[class], cfg.noise_clip));
            clip_txt.extend(noisy_row(&mut rng, &protos.clip[caption_class], cfg.noise_clip));
            labels.push(class);
            corrupted.push(caption_class != class);
        }
    }

    EmbeddingDataset::new(DatasetParts {
        domain,
        num_classes: cfg.classes,
        image: Matrix::new(n, cfg.dim_image, image)?,
        caption: Matrix::new(n, cfg.dim_caption, caption)?,
        clip_img: Matrix::new(n, cfg.dim_clip, clip_img)?,
        clip_txt: Matrix::new(n, cfg.dim_clip, clip_txt)?,
        labels: Some(labels),
        corrupted: Some(corrupted),
        seed: Some(cfg.seed),
    })
}

/// Generates `(source, target)` datasets, fully determined by `cfg.seed`.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    cfg.validate()?;
    let protos = prototypes(cfg);
    let source = build_domain(cfg, &protos, Domain::Source)?;
    let target = build_domain(cfg, &protos, Domain::Target)?;
    Ok((source, target))
}
