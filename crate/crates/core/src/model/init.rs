//! Parameter initialization.

use super::ModelConfig;
use crate::params::ParamSet;
use crate::rng::{mix64, rng_from};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Sinusoidal table at the configured amplitude, trained like any other
/// parameter after initialization.
fn sinusoid_table(rows: usize, d: usize, scale: f64) -> Tensor {
    let mut data = Vec::with_capacity(rows * d);
    for pos in 0..rows {
        for j in 0..d {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            let v = if j % 2 == 0 { angle.sin() } else { angle.cos() };
            data.push((v * scale) as f32 as f64);
        }
    }
    Tensor::matrix(rows, d, data).expect("sinusoid table is valid")
}

fn linear(params: &mut ParamSet, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    params.insert(format!("{prefix}.w"), Tensor::xavier(fan_in, fan_out, rng));
    params.insert(format!("{prefix}.b"), Tensor::zeros(vec![1, fan_out]));
}

fn attention_block(params: &mut ParamSet, prefix: &str, d: usize, rng: &mut ChaCha8Rng) {
    for name in ["wq", "wk", "wv", "wo"] {
        params.insert(format!("{prefix}.{name}"), Tensor::xavier(d, d, rng));
    }
    for name in ["bq", "bk", "bv", "bo"] {
        params.insert(format!("{prefix}.{name}"), Tensor::zeros(vec![1, d]));
    }
}

/// Build the full parameter set for a config and vocabulary size. The
/// cross-modal block exists only in open-ended mode, and its output
/// projection starts at zero so the block is initially the identity.
pub fn init_params(cfg: &ModelConfig, vocab_size: usize, seed: u64) -> crate::error::Result<ParamSet> {
    cfg.validate()?;
    let mut rng = rng_from(mix64(seed, 0x1217));
    let d = cfg.d_model;
    let mut params = ParamSet::new();

    linear(&mut params, "video.proj.object", cfg.dim_object, d, &mut rng);
    linear(&mut params, "video.proj.frame", cfg.dim_frame, d, &mut rng);
    linear(&mut params, "video.proj.motion", cfg.dim_motion, d, &mut rng);
    linear(&mut params, "video.fuse.l1", 3 * d, cfg.mlp_hidden(), &mut rng);
    linear(&mut params, "video.fuse.l2", cfg.mlp_hidden(), d, &mut rng);
    attention_block(&mut params, "video.msa", d, &mut rng);
    params.insert("video.pos", sinusoid_table(cfg.t_max, d, cfg.pos_init_scale));

    params.insert(
        "text.embed",
        Tensor::randn(vocab_size, d, 0.1, &mut rng),
    );
    attention_block(&mut params, "text.msa", d, &mut rng);
    params.insert("text.pos", sinusoid_table(cfg.max_text_len, d, cfg.pos_init_scale));

    if cfg.open_ended {
        attention_block(&mut params, "ci", d, &mut rng);
        params.insert("ci.wo", Tensor::zeros(vec![d, d]));
    }

    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            heads: 2,
            t_max: 4,
            max_text_len: 8,
            dim_object: 6,
            dim_frame: 6,
            dim_motion: 6,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = small_cfg();
        let a = init_params(&cfg, 20, 5).unwrap();
        let b = init_params(&cfg, 20, 5).unwrap();
        for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let c = init_params(&cfg, 20, 6).unwrap();
        assert_ne!(
            a.get("video.msa.wq").unwrap().data(),
            c.get("video.msa.wq").unwrap().data()
        );
    }

    #[test]
    fn ci_block_only_in_open_ended_mode_with_zero_output() {
        let cfg = small_cfg();
        let mc = init_params(&cfg, 10, 1).unwrap();
        assert!(!mc.contains("ci.wq"));
        let oe_cfg = ModelConfig {
            open_ended: true,
            ..cfg
        };
        let oe = init_params(&oe_cfg, 10, 1).unwrap();
        assert!(oe.contains("ci.wq"));
        assert!(oe.get("ci.wo").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sinusoid_rows_differ_by_position() {
        let t = sinusoid_table(4, 8, 1.0);
        assert_ne!(
            &t.data()[0..8],
            &t.data()[8..16],
        );
    }

    #[test]
    fn invalid_head_split_is_config_error() {
        let cfg = ModelConfig {
            d_model: 10,
            heads: 4,
            ..small_cfg()
        };
        assert!(init_params(&cfg, 10, 1).is_err());
    }
}
