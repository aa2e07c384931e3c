use serde::{Deserialize, Serialize};

use crate::data::AugmentationConfig;
use crate::error::{Result, TrustError};
use crate::pseudolabel::TextClassifierConfig;

/// Which optional loss components are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossToggles {
    pub use_soft_ctr: bool,
    pub use_hard_ctr: bool,
    pub use_uncertainty: bool,
}

impl LossToggles {
    pub const NONE: LossToggles = LossToggles {
        use_soft_ctr: false,
        use_hard_ctr: false,
        use_uncertainty: false,
    };
    pub const FULL: LossToggles = LossToggles {
        use_soft_ctr: true,
        use_hard_ctr: false,
        use_uncertainty: true,
    };

    pub fn validate(&self) -> Result<()> {
        if self.use_soft_ctr && self.use_hard_ctr {
            return Err(TrustError::Config(
                "soft and hard contrastive losses are mutually exclusive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
    /// Scale applied to CLIP cosines before the row softmax.
    pub gamma: f64,
    pub scoring_batch_size: usize,
    pub augmentation: AugmentationConfig,
    pub seed: u64,
    pub toggles: LossToggles,
    pub hidden: usize,
    pub feature_dim: usize,
    pub text_classifier: TextClassifierConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 200,
            lr: 0.05,
            tau: 0.1,
            gamma: 10.0,
            scoring_batch_size: 64,
            augmentation: AugmentationConfig::default(),
            seed: 0,
            toggles: LossToggles::FULL,
            hidden: 64,
            feature_dim: 32,
            text_classifier: TextClassifierConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.toggles.validate()?;
        self.augmentation.validate()?;
        if self.batch_size < 2 {
            return Err(TrustError::Config(format!("batch_size {} < 2", self.batch_size)));
        }
        if self.scoring_batch_size < 2 {
            return Err(TrustError::Config(format!(
                "scoring_batch_size {} < 2",
                self.scoring_batch_size
            )));
        }
        for (name, v) in [("lr", self.lr), ("tau", self.tau), ("gamma", self.gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrustError::Config(format!("{name} must be positive and finite")));
            }
        }
        if self.hidden == 0 || self.feature_dim == 0 {
            return Err(TrustError::Config("hidden and feature_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn with_toggles(&self, toggles: LossToggles) -> TrainConfig {
        TrainConfig {
            toggles,
            ..self.clone()
        }
    }
}
