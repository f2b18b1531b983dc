//! Synthetic stand-in for the trained masker: keyed per-prompt reference codes
//! with independent bit noise for same-prompt instances and for verifier-side
//! re-extraction.

use serde::{Deserialize, Serialize};

use crate::code::SemanticCode;
use crate::error::{Error, Result};
use crate::rng::{derive_stream, KeyBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub bits: usize,
    /// Per-bit flip probability between a prompt's reference and one of its
    /// generated instances. Two instances then differ on `2p(1-p)` of bits.
    pub p_intra: f64,
    /// Per-bit flip probability applied to an instance when the verifier
    /// re-extracts its code from a distorted copy.
    pub q_verify: f64,
}

impl OracleConfig {
    pub const DEFAULT_P_INTRA: f64 = 0.037;
    pub const DEFAULT_Q_VERIFY: f64 = 22.99 / 1024.0;

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::invalid("bits", "code length must be positive"));
        }
        for (name, p) in [("p_intra", self.p_intra), ("q_verify", self.q_verify)] {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::invalid(name, format!("{p} not in [0, 0.5]")));
            }
        }
        Ok(())
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            bits: 1024,
            p_intra: Self::DEFAULT_P_INTRA,
            q_verify: Self::DEFAULT_Q_VERIFY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Oracle {
    cfg: OracleConfig,
    key: KeyBundle,
}

impl Oracle {
    pub fn new(cfg: OracleConfig, key: &KeyBundle) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            key: key.clone(),
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    /// Uniform `B`-bit reference code of `prompt`.
    pub fn reference(&self, prompt: u64) -> SemanticCode {
        SemanticCode::new(derive_stream(&self.key, "oracle-ref", prompt).bits(self.cfg.bits))
    }

    /// Code of the `instance`-th image generated for `prompt`.
    pub fn instance(&self, prompt: u64, instance: u64) -> SemanticCode {
        let mut stream = derive_stream(&self.key, &format!("oracle-inst/{instance}"), prompt);
        flip_each(self.reference(prompt), self.cfg.p_intra, &mut stream)
    }

    /// `code` after verifier-side re-extraction noise; `draw` selects the noise.
    pub fn distort(&self, code: &SemanticCode, draw: u64) -> SemanticCode {
        let mut stream = derive_stream(&self.key, "oracle-dist", draw);
        flip_each(code.clone(), self.cfg.q_verify, &mut stream)
    }
}

fn flip_each(mut code: SemanticCode, p: f64, stream: &mut crate::rng::RngStream) -> SemanticCode {
    for i in 0..code.len() {
        if stream.next_bernoulli(p) {
            code.flip(i);
        }
    }
    code
}

/// Instance code for `(prompt, instance)` under a one-off oracle.
pub fn oracle_code(prompt: u64, instance: u64, cfg: OracleConfig, key: &KeyBundle) -> Result<SemanticCode> {
    Ok(Oracle::new(cfg, key)?.instance(prompt, instance))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_instance_is_reference() {
        let cfg = OracleConfig {
            p_intra: 0.0,
            ..OracleConfig::default()
        };
        let o = Oracle::new(cfg, &KeyBundle::from_seed(1)).unwrap();
        assert_eq!(o.instance(5, 3), o.reference(5));
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        let key = KeyBundle::from_seed(1);
        for (p, q) in [(0.6, 0.0), (0.0, -0.1), (f64::NAN, 0.0)] {
            let cfg = OracleConfig {
                bits: 8,
                p_intra: p,
                q_verify: q,
            };
            assert!(Oracle::new(cfg, &key).is_err());
        }
    }

    #[test]
    fn same_prompt_hamming_matches_binomial_mean() {
        let o = Oracle::new(OracleConfig::default(), &KeyBundle::from_seed(2)).unwrap();
        let p = OracleConfig::DEFAULT_P_INTRA;
        let n = 2000;
        let samples: Vec<f64> = (0..n)
            .map(|i| o.instance(i, 0).hamming(&o.instance(i, 1)) as f64)
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let d = 2.0 * p * (1.0 - p);
        let se = (1024.0 * d * (1.0 - d) / n as f64).sqrt();
        assert!((mean - 1024.0 * d).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn cross_prompt_hamming_is_half() {
        let o = Oracle::new(OracleConfig::default(), &KeyBundle::from_seed(3)).unwrap();
        let n = 10_000;
        let mean = (0..n)
            .map(|i| o.instance(2 * i, 0).hamming(&o.instance(2 * i + 1, 0)) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 512.0).abs() < 5.0, "mean {mean}");
        let se = (256.0 / n as f64).sqrt();
        assert!((mean - 512.0).abs() < 3.0 * se, "mean {mean}");
    }
}
