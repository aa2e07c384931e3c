//! Embedding-space weak/strong augmentations.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrustError};
use crate::numerics::Matrix;
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentKind {
    Weak,
    Strong,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    /// Coordinate drop probability for the strong view.
    pub dropout_strong: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            sigma_weak: 0.01,
            sigma_strong: 0.1,
            dropout_strong: 0.2,
        }
    }
}

impl AugmentationConfig {
    /// No perturbation at all; both views equal the input.
    pub fn none() -> Self {
        AugmentationConfig {
            sigma_weak: 0.0,
            sigma_strong: 0.0,
            dropout_strong: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_weak >= 0.0 && self.sigma_weak.is_finite())
            || !(self.sigma_strong >= 0.0 && self.sigma_strong.is_finite())
        {
            return Err(TrustError::Config("augmentation sigmas must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_strong) {
            return Err(TrustError::Config(format!(
                "dropout_strong {} outside [0, 1)",
                self.dropout_strong
            )));
        }
        Ok(())
    }
}

/// Weak: `x + N(0, sigma_weak²)`. Strong: inverted dropout at
/// `dropout_strong`, then `+ N(0, sigma_strong²)`. Deterministic in `seed`.
pub fn augment(x: &Matrix, kind: AugmentKind, cfg: &AugmentationConfig, seed: u64) -> Result<Matrix> {
    cfg.validate()?;
    let mut rng = rng_for(seed, &[]);
    let (sigma, drop) = match kind {
        AugmentKind::Weak => (cfg.sigma_weak, 0.0),
        AugmentKind::Strong => (cfg.sigma_strong, cfg.dropout_strong),
    };
    let keep_scale = 1.0 / (1.0 - drop);
    let data = x
        .as_slice()
        .iter()
        .map(|&v| {
            let kept = if drop > 0.0 {
                if rng.random::<f64>() < drop {
                    0.0
                } else {
                    v * keep_scale
                }
            } else {
                v
            };
            if sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                kept + sigma * z
            } else {
                kept
            }
        })
        .collect();
    Matrix::new(x.rows(), x.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix {
        Matrix::new(3, 4, (0..12).map(|k| k as f64 * 0.1 - 0.4).collect()).unwrap()
    }

    #[test]
    fn zero_augmentation_is_identity() {
        let x = sample();
        for kind in [AugmentKind::Weak, AugmentKind::Strong] {
            assert_eq!(augment(&x, kind, &AugmentationConfig::none(), 3).unwrap(), x);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let x = sample();
        let cfg = AugmentationConfig::default();
        assert_eq!(
            augment(&x, AugmentKind::Strong, &cfg, 9).unwrap(),
            augment(&x, AugmentKind::Strong, &cfg, 9).unwrap()
        );
        assert_ne!(
            augment(&x, AugmentKind::Strong, &cfg, 9).unwrap(),
            augment(&x, AugmentKind::Strong, &cfg, 10).unwrap()
        );
    }

    #[test]
    fn dropout_rescale_preserves_mean() {
        // Per coordinate: mean 1, variance p/(1-p) + sigma² = 0.25 + 0.01.
        let cfg = AugmentationConfig {
            sigma_weak: 0.0,
            sigma_strong: 0.1,
            dropout_strong: 0.2,
        };
        let x = Matrix::filled(1, 1000, 1.0);
        let sd_of_mean = ((0.25 + 0.01) / 1000.0f64).sqrt();
        for seed in 0..20 {
            let y = augment(&x, AugmentKind::Strong, &cfg, seed).unwrap();
            let mean = y.sum() / 1000.0;
            assert!((mean - 1.0).abs() <= 3.5 * sd_of_mean, "seed {seed}: mean {mean}");
        }
    }

    #[test]
    fn weak_perturbs_less_than_strong() {
        let cfg = AugmentationConfig::default();
        let x = Matrix::filled(8, 32, 0.3);
        let dist = |kind| {
            (0..10)
                .map(|s| augment(&x, kind, &cfg, s).unwrap().sub(&x).unwrap().row_norms().iter().sum::<f64>())
                .sum::<f64>()
        };
        assert!(dist(AugmentKind::Weak) < dist(AugmentKind::Strong));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = AugmentationConfig {
            dropout_strong: 1.0,
            ..Default::default()
        };
        assert!(augment(&sample(), AugmentKind::Strong, &cfg, 0).is_err());
        let cfg = AugmentationConfig {
            sigma_weak: -1.0,
            ..Default::default()
        };
        assert!(augment(&sample(), AugmentKind::Weak, &cfg, 0).is_err());
    }
}
