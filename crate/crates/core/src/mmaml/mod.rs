//! Multimodal MAML: a variational recurrent autoencoder embeds the support
//! meta-window, a generator turns the embedding into FiLM parameters, and the
//! modulated head is adapted as in [`crate::maml`].

mod model;
mod modulation;
mod similarity;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maml::MamlConfig;

pub use model::{mmaml_adapt_and_predict, mmaml_meta_train, MmamlModel, MmamlPrediction};
pub use modulation::{kl_divergence, reconstruction_error, vae_loss, Encoding, ModulationNetwork};
pub use similarity::{embed, split_similarity, write_embeddings_csv, EmbeddingRow, SplitDistances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmamlConfig {
    pub maml: MamlConfig,
    /// Weight λ of the reconstruction + KL term.
    pub vrae_weight: f64,
    pub latent_dim: usize,
    /// Hidden size of the encoder and decoder LSTMs.
    pub hidden_size: usize,
    /// Sample `z` during meta-training; inference always uses `μ`.
    pub stochastic_encode: bool,
    /// Keep the modulation network fixed during meta-training.
    pub freeze_modulation: bool,
}

impl Default for MmamlConfig {
    fn default() -> Self {
        MmamlConfig {
            maml: MamlConfig::default(),
            vrae_weight: 0.001,
            latent_dim: 64,
            hidden_size: 128,
            stochastic_encode: true,
            freeze_modulation: false,
        }
    }
}

impl MmamlConfig {
    pub fn validate(&self) -> Result<()> {
        self.maml.validate()?;
        if !(self.vrae_weight >= 0.0 && self.vrae_weight.is_finite()) {
            return Err(Error::Config("vrae_weight must be nonnegative".into()));
        }
        if self.latent_dim == 0 || self.hidden_size == 0 {
            return Err(Error::Config("latent_dim and hidden_size must be at least 1".into()));
        }
        Ok(())
    }
}
