//! Desk-scale video question answering engine.
//!
//! The crate wires together a from-scratch reverse-mode autodiff core, a
//! multi-stream video encoder (object/frame/motion clip features fused by an
//! MLP and self-attention), a small trainable text encoder, action-centric
//! contrastive pretraining, temporal-confusion fine-tuning, and an
//! evaluation suite built around the true-temporality delta metric (accuracy
//! with the full video minus accuracy with only the middle clip). Feature
//! extraction backbones are out of scope: clip features are ingested from
//! ATMF files or produced by the synthetic temporality benchmark.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod harness;
pub mod losses;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod qparse;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{CoreError, Result};
