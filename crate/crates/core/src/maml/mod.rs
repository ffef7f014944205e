//! Model-agnostic meta-learning with last-layer fast adaptation.
//!
//! The inner loop adapts only the linear head on a support meta-window with
//! mean MAE; the outer loop updates every parameter against the MAE of the
//! adapted model on the following meta-window.

mod augment;
mod inner;
mod meta_grad;
mod oracle;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptimizerKind;

pub use augment::meta_augment;
pub use inner::{inner_adapt, inner_adapt_steps, inner_loss_trace, AdaptedHead};
pub(crate) use inner::{adapt_on_features, support_features};
pub use meta_grad::{adapted_query_loss, task_meta_gradient, MetaGradient, TaskGradient};
pub use oracle::{correcting_factor, kernel, kernel_oracle_predict};
pub use trainer::{
    meta_train, validation_loss, write_log_csv, EpochLog, MetaLearner, MetaTrainOutcome, MetaTrainer, TaskOutcome,
    TrainerState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MamlConfig {
    /// Inner learning rate α.
    pub inner_lr: f64,
    /// Outer learning rate β.
    pub meta_lr: f64,
    pub inner_steps: usize,
    pub meta_batch_size: usize,
    /// Std of the Gaussian label noise added to support sets during training.
    pub noise_level: f64,
    pub meta_epochs: usize,
    /// Meta-epochs without validation improvement before stopping.
    pub patience: usize,
    /// Exact meta-gradient when `inner_steps == 1`; first-order otherwise.
    pub second_order: bool,
    pub optimizer: OptimizerKind,
}

impl Default for MamlConfig {
    fn default() -> Self {
        MamlConfig {
            inner_lr: 0.01,
            meta_lr: 0.0005,
            inner_steps: 1,
            meta_batch_size: 20,
            noise_level: 0.0,
            meta_epochs: 10_000,
            patience: 500,
            second_order: true,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl MamlConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.inner_lr) || !positive(self.meta_lr) {
            return Err(Error::Config("inner_lr and meta_lr must be positive".into()));
        }
        if self.inner_steps == 0 || self.meta_batch_size == 0 || self.meta_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "inner_steps, meta_batch_size, meta_epochs and patience must be at least 1".into(),
            ));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::Config("noise_level must be nonnegative".into()));
        }
        Ok(())
    }

    /// Gradient order used by the outer loop.
    pub fn meta_gradient(&self) -> MetaGradient {
        if self.second_order && self.inner_steps == 1 {
            MetaGradient::Exact
        } else {
            MetaGradient::FirstOrder
        }
    }
}
