use serde::{Deserialize, Serialize};

/// Architecture hyperparameters. No dropout or layer normalization; both are
/// deliberate extension points kept out for determinism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    /// Longest clip sequence the video position embedding covers.
    pub t_max: usize,
    /// Longest token sequence the text position embedding covers.
    pub max_text_len: usize,
    /// Hidden width of the fusion MLP; `None` means `d_model`.
    pub mlp_hidden: Option<usize>,
    pub dim_object: usize,
    pub dim_frame: usize,
    pub dim_motion: usize,
    pub use_pos_embed: bool,
    /// Amplitude of the sinusoidal position-embedding init.
    pub pos_init_scale: f64,
    /// Open-ended mode adds the cross-modal interaction block and switches
    /// scoring to the joint video/text decision.
    pub open_ended: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 512,
            heads: 8,
            t_max: 16,
            max_text_len: 64,
            mlp_hidden: None,
            dim_object: 2048,
            dim_frame: 2048,
            dim_motion: 2048,
            use_pos_embed: true,
            pos_init_scale: 1.0,
            open_ended: false,
        }
    }
}

impl ModelConfig {
    pub fn mlp_hidden(&self) -> usize {
        self.mlp_hidden.unwrap_or(self.d_model)
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(crate::error::CoreError::Config(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.d_model == 0 || self.t_max == 0 || self.max_text_len == 0 {
            return Err(crate::error::CoreError::Config(
                "d_model, t_max and max_text_len must be positive".into(),
            ));
        }
        Ok(())
    }
}
