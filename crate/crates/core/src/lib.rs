//! Semantic binding of latent-space diffusion watermarks, simulated on
//! synthetic Gaussian latents.

pub mod channel;
pub mod code;
pub mod dft;
pub mod error;
pub mod experiment;
pub mod exec;
pub mod latent;
pub mod mask;
pub mod rng;
pub mod schemes;
pub mod semantic;
pub mod statistics;

pub use error::{Error, Result};
pub use exec::Execution;
pub use latent::{gaussian_latent, Latent, LatentShape};
pub use rng::{derive_stream, KeyBundle, RngStream};
pub use schemes::{DetectionResult, SchemeConfig, SchemeId, Watermarker};
