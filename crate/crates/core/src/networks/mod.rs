//! Learned components: structure/style encoders, fusion and enhancement,
//! decoders, latent autoencoder, denoiser, and parameter persistence.

mod autoencoder;
mod blocks;
mod decoders;
mod denoiser;
mod model;
mod params;
mod structure;
mod style;

pub use autoencoder::Autoencoder;
pub use blocks::{Conv2dLayer, LinearLayer};
pub use decoders::{RecDecoder, SegDecoder};
pub use denoiser::Denoiser;
pub use model::{Model, ModelConfig};
pub use params::{load_checkpoint, save_checkpoint, ParamRegistry};
pub use structure::{hfib_forward, scale_channels, Mmsf, Msse, StructureEncoder};
pub use style::StyleEncoder;
