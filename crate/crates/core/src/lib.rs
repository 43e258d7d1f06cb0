//! Hierarchically-attentive recurrent networks for end-to-end visual
//! storytelling: an album encoder, a latent summary-photo selector and a
//! story generator, with training, decoding and evaluation.

pub mod error;
pub mod numerics;
pub mod data;
pub mod model;
pub mod recurrent;
pub mod training;
pub mod evaluation;
pub mod harness;

pub use error::{Error, Result};
