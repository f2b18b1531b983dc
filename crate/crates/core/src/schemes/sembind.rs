//! Semantically bound generation and verification.

use super::{DetectionResult, Watermarker};
use crate::code::{Message, SemanticCode};
use crate::error::Result;
use crate::latent::Latent;
use crate::mask::{bind, unbind, MaskCodec};
use crate::rng::RngStream;

/// `bind(wm_embed(msg), S(code))`.
pub fn sembind_generate(
    wm: &Watermarker,
    msg: Option<&Message>,
    code: &SemanticCode,
    codec: &MaskCodec,
    stream: &mut RngStream,
) -> Result<Latent> {
    let mask = codec.expand(code)?;
    let z = wm.embed(msg, stream)?;
    bind(&z, &mask)
}

/// Unbinds `z_hat` with the verifier's code, decodes, and applies `threshold`.
///
/// GSPP_LITE reports its payload only when the channel-0 gate accepts;
/// `bit_accuracy` is filled whenever a reference is given.
pub fn sembind_verify(
    wm: &Watermarker,
    z_hat: &Latent,
    code_hat: &SemanticCode,
    codec: &MaskCodec,
    reference: Option<&Message>,
    threshold: f64,
) -> Result<DetectionResult> {
    let mask = codec.expand(code_hat)?;
    let d = wm.decode(&unbind(z_hat, &mask)?, reference)?;
    let accepted = wm.scheme().accepts(d.score, threshold);
    let decoded = match wm.scheme() {
        super::SchemeId::GsppLite if !accepted => None,
        _ => d.decoded,
    };
    Ok(DetectionResult {
        score: d.score,
        threshold,
        accepted,
        decoded,
        bit_accuracy: d.bit_accuracy,
    })
}
