//! Lite latent watermarks and their semantically bound variants.
//!
//! | scheme      | payload | embedding                                             | score                        |
//! |-------------|---------|-------------------------------------------------------|------------------------------|
//! | `GS_LITE`   | k bits  | keyed sign per coordinate, Gaussian magnitude         | bit accuracy vs reference    |
//! | `PRC_LITE`  | none    | keyed sign codeword `c = 1 - 2κ`                      | sign agreement with `c`      |
//! | `TR_LITE`   | none    | fixed-magnitude rings in the spectrum of channel 0    | ring deviation (lower wins)  |
//! | `GSPP_LITE` | k bits  | PRC codeword on channel 0, GS payload on the rest     | PRC agreement on channel 0   |

mod gs;
mod sembind;
mod threshold;
mod tr;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::code::Message;
use crate::error::{Error, Result};
use crate::latent::{gaussian_latent, Latent, LatentShape};
use crate::rng::{derive_stream, KeyBundle, RngStream};

pub use sembind::{sembind_generate, sembind_verify};
pub use threshold::{bitwise_threshold, calibrate_threshold, null_latent};
pub use tr::RingMetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "gs")]
    GsLite,
    #[serde(rename = "prc")]
    PrcLite,
    #[serde(rename = "tr")]
    TrLite,
    #[serde(rename = "gspp")]
    GsppLite,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::TrLite,
        SchemeId::GsLite,
        SchemeId::PrcLite,
        SchemeId::GsppLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::GsLite => "gs",
            SchemeId::PrcLite => "prc",
            SchemeId::TrLite => "tr",
            SchemeId::GsppLite => "gspp",
        }
    }

    pub fn carries_message(self) -> bool {
        matches!(self, SchemeId::GsLite | SchemeId::GsppLite)
    }

    /// `true` when a low score means "watermarked".
    pub fn lower_is_better(self) -> bool {
        self == SchemeId::TrLite
    }

    /// Mask ratio used for the `-S` variant by default.
    pub fn default_sigma(self) -> f64 {
        match self {
            SchemeId::GsLite | SchemeId::TrLite => 1.0,
            SchemeId::PrcLite | SchemeId::GsppLite => 0.5,
        }
    }

    pub fn accepts(self, score: f64, threshold: f64) -> bool {
        if self.lower_is_better() {
            score <= threshold
        } else {
            score >= threshold
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gs" | "gs_lite" => Ok(SchemeId::GsLite),
            "prc" | "prc_lite" => Ok(SchemeId::PrcLite),
            "tr" | "tr_lite" => Ok(SchemeId::TrLite),
            "gspp" | "gs++" | "gspp_lite" => Ok(SchemeId::GsppLite),
            other => Err(Error::invalid("scheme", format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub shape: LatentShape,
    pub message_bits: usize,
    pub ring_radii: Vec<usize>,
    /// Ring coefficient magnitude; `None` uses `√(H·W)`, the RMS magnitude of a
    /// white-noise bin.
    pub ring_magnitude: Option<f64>,
    pub ring_metric: RingMetric,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            shape: LatentShape::default(),
            message_bits: 256,
            ring_radii: (10..=14).collect(),
            ring_magnitude: None,
            ring_metric: RingMetric::MeanAbs,
        }
    }
}

/// Output of [`Watermarker::decode`]. Acceptance is decided later against a
/// calibrated threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoding {
    pub score: f64,
    pub decoded: Option<Message>,
    pub bit_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    pub score: f64,
    pub threshold: f64,
    pub accepted: bool,
    pub decoded: Option<Message>,
    pub bit_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
enum Engine {
    Gs { keystream: Vec<bool> },
    Prc { codeword: Vec<bool> },
    Tr { rings: tr::RingPattern },
    Gspp { seed: Vec<bool>, payload: Vec<bool> },
}

/// One deployed scheme: the scheme, its key, and the key material derived from it.
#[derive(Debug, Clone)]
pub struct Watermarker {
    scheme: SchemeId,
    key: KeyBundle,
    cfg: SchemeConfig,
    engine: Engine,
}

fn keystream(key: &KeyBundle, len: usize) -> Vec<bool> {
    derive_stream(key, "wm", 0).bits(len)
}

impl Watermarker {
    pub fn new(scheme: SchemeId, key: &KeyBundle, cfg: SchemeConfig) -> Result<Self> {
        let shape = cfg.shape;
        if scheme.carries_message() && cfg.message_bits == 0 {
            return Err(Error::invalid("message_bits", "must be positive"));
        }
        let engine = match scheme {
            SchemeId::GsLite => Engine::Gs {
                keystream: keystream(key, shape.len()),
            },
            SchemeId::PrcLite => Engine::Prc {
                codeword: keystream(key, shape.len()),
            },
            SchemeId::TrLite => Engine::Tr {
                rings: tr::RingPattern::new(
                    key,
                    shape,
                    &cfg.ring_radii,
                    cfg.ring_magnitude,
                    cfg.ring_metric,
                )?,
            },
            SchemeId::GsppLite => {
                if shape.channels < 2 {
                    return Err(Error::invalid("shape", "GSPP_LITE needs at least two channels"));
                }
                Engine::Gspp {
                    seed: keystream(&key.derive("gspp-seed"), shape.plane()),
                    payload: keystream(&key.derive("gspp-payload"), shape.len() - shape.plane()),
                }
            }
        };
        Ok(Self {
            scheme,
            key: key.clone(),
            cfg,
            engine,
        })
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn key(&self) -> &KeyBundle {
        &self.key
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn shape(&self) -> LatentShape {
        self.cfg.shape
    }

    /// Count of independent `Bin(n, ½)` units behind the score of a bitwise scheme.
    pub fn score_units(&self) -> Option<u64> {
        match self.scheme {
            SchemeId::GsLite => Some(self.cfg.message_bits as u64),
            SchemeId::PrcLite => Some(self.cfg.shape.len() as u64),
            SchemeId::GsppLite => Some(self.cfg.shape.plane() as u64),
            SchemeId::TrLite => None,
        }
    }

    fn check_message(&self, msg: Option<&Message>) -> Result<()> {
        if self.scheme.carries_message() {
            match msg {
                None => return Err(Error::MissingMessage(self.scheme.name())),
                Some(m) if m.len() != self.cfg.message_bits => {
                    return Err(Error::DimensionMismatch {
                        expected: self.cfg.message_bits,
                        got: m.len(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Watermarked initial latent. Zero-bit schemes ignore `msg`.
    pub fn embed(&self, msg: Option<&Message>, stream: &mut RngStream) -> Result<Latent> {
        self.check_message(msg)?;
        let shape = self.cfg.shape;
        let mut z = gaussian_latent(stream, shape);
        match &self.engine {
            Engine::Gs { keystream } => {
                let mags = z.as_slice().to_vec();
                gs::embed_region(z.as_mut_slice(), msg.expect("checked"), keystream, &mags);
            }
            Engine::Prc { codeword } => sign_codeword(z.as_mut_slice(), codeword),
            Engine::Tr { rings } => rings.imprint(&mut z),
            Engine::Gspp { seed, payload } => {
                let plane = shape.plane();
                let (head, tail) = z.as_mut_slice().split_at_mut(plane);
                sign_codeword(head, seed);
                let mags = tail.to_vec();
                gs::embed_region(tail, msg.expect("checked"), payload, &mags);
            }
        }
        Ok(z)
    }

    /// Scores `z`. `reference` is the expected payload for GS/GSPP; GS_LITE
    /// cannot be scored without it.
    pub fn decode(&self, z: &Latent, reference: Option<&Message>) -> Result<Decoding> {
        z.ensure_shape(self.cfg.shape)?;
        if let Some(r) = reference {
            if self.scheme.carries_message() && r.len() != self.cfg.message_bits {
                return Err(Error::DimensionMismatch {
                    expected: self.cfg.message_bits,
                    got: r.len(),
                });
            }
        }
        let k = self.cfg.message_bits;
        Ok(match &self.engine {
            Engine::Gs { keystream } => {
                let reference = reference.ok_or(Error::MissingMessage(self.scheme.name()))?;
                let decoded = gs::decode_region(z.as_slice(), keystream, k);
                let acc = decoded.agreement(reference);
                Decoding {
                    score: acc,
                    decoded: Some(decoded),
                    bit_accuracy: Some(acc),
                }
            }
            Engine::Prc { codeword } => Decoding {
                score: sign_agreement(z.as_slice(), codeword),
                decoded: None,
                bit_accuracy: None,
            },
            Engine::Tr { rings } => Decoding {
                score: rings.distance(z),
                decoded: None,
                bit_accuracy: None,
            },
            Engine::Gspp { seed, payload } => {
                let plane = self.cfg.shape.plane();
                let (head, tail) = z.as_slice().split_at(plane);
                let decoded = gs::decode_region(tail, payload, k);
                Decoding {
                    score: sign_agreement(head, seed),
                    bit_accuracy: reference.map(|r| decoded.agreement(r)),
                    decoded: Some(decoded),
                }
            }
        })
    }

    pub fn ring_bin_count(&self) -> Option<usize> {
        match &self.engine {
            Engine::Tr { rings } => Some(rings.bin_count()),
            _ => None,
        }
    }
}

/// `z_i ← c_i·|z_i|` with `c_i = 1 - 2κ_i`.
fn sign_codeword(z: &mut [f64], kappa: &[bool]) {
    for (v, &k) in z.iter_mut().zip(kappa) {
        *v = if k { -v.abs() } else { v.abs() };
    }
}

/// `(1/n)·#{i : sign(z_i) = c_i}` with `sign(0) = +1`.
fn sign_agreement(z: &[f64], kappa: &[bool]) -> f64 {
    let hits = z.iter().zip(kappa).filter(|(&v, &k)| (v < 0.0) == k).count();
    hits as f64 / z.len() as f64
}

/// Watermarked latent for `scheme` under `key`.
pub fn wm_embed(
    scheme: SchemeId,
    msg: Option<&Message>,
    key: &KeyBundle,
    stream: &mut RngStream,
    cfg: &SchemeConfig,
) -> Result<Latent> {
    Watermarker::new(scheme, key, cfg.clone())?.embed(msg, stream)
}

/// Score of `z` for `scheme` under `key`; no threshold applied.
pub fn wm_decode(
    scheme: SchemeId,
    z: &Latent,
    key: &KeyBundle,
    reference: Option<&Message>,
    cfg: &SchemeConfig,
) -> Result<Decoding> {
    Watermarker::new(scheme, key, cfg.clone())?.decode(z, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::Bits;

    fn msg(seed: u64, k: usize) -> Message {
        Bits::new(derive_stream(&KeyBundle::from_seed(seed), "msg", 0).bits(k))
    }

    #[test]
    fn exact_roundtrip_all_schemes() {
        let key = KeyBundle::from_seed(10);
        let cfg = SchemeConfig::default();
        let m = msg(1, 256);
        for scheme in SchemeId::ALL {
            let wm = Watermarker::new(scheme, &key, cfg.clone()).unwrap();
            let z = wm.embed(Some(&m), &mut derive_stream(&key, "trial", 0)).unwrap();
            let d = wm.decode(&z, Some(&m)).unwrap();
            match scheme {
                SchemeId::GsLite | SchemeId::GsppLite => {
                    assert_eq!(d.bit_accuracy, Some(1.0));
                    assert_eq!(d.decoded.as_ref(), Some(&m));
                }
                SchemeId::PrcLite => assert_eq!(d.score, 1.0),
                SchemeId::TrLite => assert!(d.score < 1e-9, "ring deviation {}", d.score),
            }
            if scheme == SchemeId::GsppLite {
                assert_eq!(d.score, 1.0);
            }
        }
    }

    #[test]
    fn message_requirements() {
        let key = KeyBundle::from_seed(11);
        let cfg = SchemeConfig::default();
        let mut s = derive_stream(&key, "t", 0);
        assert!(matches!(
            wm_embed(SchemeId::GsLite, None, &key, &mut s, &cfg),
            Err(Error::MissingMessage("gs"))
        ));
        assert!(wm_embed(SchemeId::GsppLite, Some(&msg(1, 8)), &key, &mut s, &cfg).is_err());
        assert!(wm_embed(SchemeId::PrcLite, None, &key, &mut s, &cfg).is_ok());
        assert!(wm_embed(SchemeId::TrLite, None, &key, &mut s, &cfg).is_ok());
    }

    #[test]
    fn tr_rejects_small_shapes() {
        let key = KeyBundle::from_seed(1);
        let cfg = SchemeConfig {
            shape: LatentShape::new(4, 16, 16),
            ..SchemeConfig::default()
        };
        assert!(Watermarker::new(SchemeId::TrLite, &key, cfg).is_err());
    }

    #[test]
    fn decode_rejects_wrong_shape() {
        let key = KeyBundle::from_seed(1);
        let wm = Watermarker::new(SchemeId::PrcLite, &key, SchemeConfig::default()).unwrap();
        assert!(wm.decode(&Latent::zeros(LatentShape::new(1, 8, 8)), None).is_err());
    }

    #[test]
    fn gs_on_independent_latents_is_at_chance() {
        let key = KeyBundle::from_seed(12);
        let wm = Watermarker::new(SchemeId::GsLite, &key, SchemeConfig::default()).unwrap();
        let trials = 1000;
        let mean = (0..trials)
            .map(|t| {
                let z = gaussian_latent(&mut derive_stream(&key, "null", t), wm.shape());
                let reference = msg(t + 100, 256);
                wm.decode(&z, Some(&reference)).unwrap().bit_accuracy.unwrap()
            })
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 0.5).abs() < 0.015, "mean {mean}");
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in SchemeId::ALL {
            assert_eq!(s.name().parse::<SchemeId>().unwrap(), s);
        }
        assert!("dwt".parse::<SchemeId>().is_err());
    }
}
