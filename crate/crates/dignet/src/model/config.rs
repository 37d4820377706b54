//! Model hyperparameters; every knob the checkpoint needs to rebuild the
//! network exactly.

use serde::{Deserialize, Serialize};

use crate::error::{DigError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum HeadKind {
    /// Cosine similarity against unit prototypes, scaled by `scale`.
    Prototype { scale: f64 },
    /// Plain affine layer over the pooled features.
    Affine,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub frames: usize,
    /// Side length the model sees; inputs are average-pooled down to this.
    pub input_hw: usize,
    pub stem_channels: usize,
    /// Output channels per alignment stage; each stage halves T, H, and W.
    /// The last entry is the embedding width.
    pub stage_channels: Vec<usize>,
    pub ray_k: usize,
    pub offset_clamp: f64,
    pub offset_hidden: usize,
    pub gk_hidden: usize,
    pub eta_init: f64,
    pub exponent_cap: f64,
    pub stg_layers: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub ffn_multiplier: usize,
    pub dropout: f64,
    pub num_classes: usize,
    pub head: HeadKind,
    /// Ablation switches.
    pub use_dada: bool,
    pub use_stg: bool,
    pub use_transformer: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 5,
            frames: 8,
            input_hw: 28,
            stem_channels: 32,
            stage_channels: vec![64, 128],
            ray_k: 2,
            offset_clamp: 8.0,
            offset_hidden: 32,
            gk_hidden: 16,
            eta_init: 0.05,
            exponent_cap: 20.0,
            stg_layers: 1,
            transformer_layers: 2,
            heads: 4,
            ffn_multiplier: 2,
            dropout: 0.1,
            num_classes: 13,
            head: HeadKind::Prototype { scale: 30.0 },
            use_dada: true,
            use_stg: true,
            use_transformer: true,
        }
    }
}

impl ModelConfig {
    /// Small config for unit tests and gradient checks.
    pub fn tiny() -> ModelConfig {
        ModelConfig {
            in_channels: 5,
            frames: 2,
            input_hw: 8,
            stem_channels: 4,
            stage_channels: vec![6, 8],
            offset_hidden: 4,
            gk_hidden: 4,
            stg_layers: 1,
            transformer_layers: 1,
            heads: 2,
            ffn_multiplier: 2,
            num_classes: 13,
            ..ModelConfig::default()
        }
    }

    /// Default for single-core harness runs: full 8-frame window, small
    /// channel widths, one transformer layer.
    pub fn desk() -> ModelConfig {
        ModelConfig {
            frames: 8,
            input_hw: 8,
            stem_channels: 6,
            stage_channels: vec![8, 12],
            offset_hidden: 6,
            gk_hidden: 6,
            stg_layers: 1,
            transformer_layers: 1,
            heads: 2,
            ..ModelConfig::default()
        }
    }

    pub fn embed_dim(&self) -> usize {
        *self.stage_channels.last().unwrap_or(&self.stem_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() {
            return Err(DigError::Config("at least one alignment stage is required".into()));
        }
        let down = 1usize << self.stage_channels.len();
        if self.input_hw % down != 0 {
            return Err(DigError::Config(format!(
                "input_hw {} must be divisible by the total stride {down}",
                self.input_hw
            )));
        }
        if self.use_transformer && self.embed_dim() % self.heads != 0 {
            return Err(DigError::Config(format!(
                "feature dim {} not divisible by {} heads",
                self.embed_dim(),
                self.heads
            )));
        }
        if self.ray_k < 1 {
            return Err(DigError::Config("ray_k must be >= 1".into()));
        }
        if self.exponent_cap > 20.0 {
            return Err(DigError::Config("exponent cap must be <= 20".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DigError::Config("dropout must be in [0,1)".into()));
        }
        Ok(())
    }
}
