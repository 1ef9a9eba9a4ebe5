//! Desk-scale multi-modal image translation: style–structure disentanglement,
//! multi-scale structure guidance, and structure-conditioned latent diffusion,
//! built on a small reverse-mode autodiff tensor engine.

pub mod data;
pub mod diffusion;
pub mod error;
pub mod frequency;
pub mod losses;
pub mod networks;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
