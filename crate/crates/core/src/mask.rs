//! Expansion of a semantic code into a keyed bipolar sign mask, and the
//! bind/unbind modulation.
//!
//! Construction, for a code `m ∈ {0,1}^B` and a latent with `L` coordinates:
//!
//! 1. tile: `t[i] = m[i mod B]` for `i < L`;
//! 2. select: keep `t[i]` for `i < L_σ = ⌊σ·L⌋`, zero the rest;
//! 3. permute: `t'[i] = t_σ[π(i)]` with `π` a keyed Fisher–Yates shuffle;
//! 4. map to signs: `S[i] = 1 - 2·t'[i]`.
//!
//! Selection happens before permutation, so for `σ < 1` the low-index code
//! bits cover more coordinates than the high-index ones.

use std::fmt::Write as _;

use crate::code::SemanticCode;
use crate::error::{Error, Result};
use crate::latent::{Latent, LatentShape};
use crate::rng::{derive_stream, KeyBundle};

pub const PERM_LABEL: &str = "perm";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub bits: usize,
    pub shape: LatentShape,
    pub sigma: f64,
    /// Stream index of the permutation key. `0` is the deployment-wide
    /// permutation; callers that refresh `K_perm` per message pass a distinct
    /// index.
    pub perm_index: u64,
}

impl MaskConfig {
    pub fn new(bits: usize, shape: LatentShape, sigma: f64) -> Result<Self> {
        let cfg = Self {
            bits,
            shape,
            sigma,
            perm_index: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::invalid("bits", "code length must be positive"));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::invalid("sigma", format!("{} not in [0, 1]", self.sigma)));
        }
        Ok(())
    }

    /// `L_σ = ⌊σ·L⌋`.
    pub fn selected_len(&self) -> usize {
        ((self.sigma * self.shape.len() as f64).floor() as usize).min(self.shape.len())
    }
}

/// `{-1,+1}`-valued tensor of latent shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMask {
    shape: LatentShape,
    negative: Vec<bool>,
}

impl SignMask {
    pub fn identity(shape: LatentShape) -> Self {
        Self {
            shape,
            negative: vec![false; shape.len()],
        }
    }

    pub fn from_signs(shape: LatentShape, signs: &[i8]) -> Result<Self> {
        if signs.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: shape.len(),
                got: signs.len(),
            });
        }
        let negative = signs
            .iter()
            .map(|&s| match s {
                1 => Ok(false),
                -1 => Ok(true),
                other => Err(Error::invalid("sign", format!("{other} is not ±1"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { shape, negative })
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn signs(&self) -> Vec<i8> {
        self.negative.iter().map(|&n| if n { -1 } else { 1 }).collect()
    }

    #[inline]
    pub fn is_negative(&self, i: usize) -> bool {
        self.negative[i]
    }

    pub fn negative_count(&self) -> usize {
        self.negative.iter().filter(|&&n| n).count()
    }

    /// Run-length encoding with a one-line header; see [`SignMask::from_rle`].
    ///
    /// ```text
    /// SBMASK 1 B=1024 sigma=0.5 shape=4x64x64 key=0123456789abcdef
    /// +3 -1 +5 …
    /// ```
    pub fn to_rle(&self, bits: usize, sigma: f64, key_fingerprint: u64) -> String {
        let mut out = format!(
            "SBMASK 1 B={bits} sigma={sigma} shape={} key={key_fingerprint:016x}\n",
            self.shape
        );
        let mut runs = Vec::new();
        let mut i = 0;
        while i < self.negative.len() {
            let neg = self.negative[i];
            let start = i;
            while i < self.negative.len() && self.negative[i] == neg {
                i += 1;
            }
            runs.push((neg, i - start));
        }
        for (k, (neg, len)) in runs.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}{}", if *neg { '-' } else { '+' }, len);
        }
        out.push('\n');
        out
    }

    pub fn from_rle(text: &str) -> Result<(RleHeader, SignMask)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty mask file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("SBMASK") || fields.next() != Some("1") {
            return Err(Error::Format("missing SBMASK 1 header".into()));
        }
        let mut bits = None;
        let mut sigma = None;
        let mut shape = None;
        let mut key = None;
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header field {f:?}")))?;
            let bad = |_| Error::Format(format!("bad value for {k}: {v:?}"));
            match k {
                "B" => bits = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "sigma" => sigma = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "shape" => shape = Some(v.parse::<LatentShape>().map_err(|e| bad(e.to_string()))?),
                "key" => key = Some(u64::from_str_radix(v, 16).map_err(|e| bad(e.to_string()))?),
                _ => return Err(Error::Format(format!("unknown header field {k}"))),
            }
        }
        let missing = |name: &str| Error::Format(format!("header lacks {name}"));
        let header = RleHeader {
            bits: bits.ok_or_else(|| missing("B"))?,
            sigma: sigma.ok_or_else(|| missing("sigma"))?,
            shape: shape.ok_or_else(|| missing("shape"))?,
            key_fingerprint: key.ok_or_else(|| missing("key"))?,
        };
        let mut negative = Vec::with_capacity(header.shape.len());
        for tok in lines.flat_map(str::split_whitespace) {
            let (neg, count) = match tok.split_at(1) {
                ("+", n) => (false, n),
                ("-", n) => (true, n),
                _ => return Err(Error::Format(format!("bad run {tok:?}"))),
            };
            let count: usize = count
                .parse()
                .map_err(|_| Error::Format(format!("bad run {tok:?}")))?;
            negative.extend(std::iter::repeat_n(neg, count));
        }
        if negative.len() != header.shape.len() {
            return Err(Error::DimensionMismatch {
                expected: header.shape.len(),
                got: negative.len(),
            });
        }
        let shape = header.shape;
        Ok((header, SignMask { shape, negative }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RleHeader {
    pub bits: usize,
    pub sigma: f64,
    pub shape: LatentShape,
    pub key_fingerprint: u64,
}

/// Fisher–Yates shuffle of `0..len`, descending `i` with partner
/// `j = next_below(i + 1)`, driven by `derive_stream(key, "perm", index)`.
pub fn keyed_permutation(key: &KeyBundle, len: usize, index: u64) -> Vec<u32> {
    let mut stream = derive_stream(key, PERM_LABEL, index);
    let mut perm: Vec<u32> = (0..len as u32).collect();
    for i in (1..len).rev() {
        let j = stream.next_below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Mask expansion with an explicit permutation (`perm[i] = π(i)`).
pub fn expand_mask_with(code: &SemanticCode, cfg: &MaskConfig, perm: &[u32]) -> Result<SignMask> {
    cfg.validate()?;
    if code.len() != cfg.bits {
        return Err(Error::DimensionMismatch {
            expected: cfg.bits,
            got: code.len(),
        });
    }
    let len = cfg.shape.len();
    if perm.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: perm.len(),
        });
    }
    let selected = cfg.selected_len();
    let bits = code.as_slice();
    let negative = perm
        .iter()
        .map(|&src| {
            let src = src as usize;
            src < selected && bits[src % cfg.bits]
        })
        .collect();
    Ok(SignMask {
        shape: cfg.shape,
        negative,
    })
}

/// Sign mask `S(code; σ, K_perm)`.
pub fn expand_mask(code: &SemanticCode, cfg: &MaskConfig, key: &KeyBundle) -> Result<SignMask> {
    let perm = keyed_permutation(key, cfg.shape.len(), cfg.perm_index);
    expand_mask_with(code, cfg, &perm)
}

/// A mask configuration with its permutation precomputed, for repeated use.
#[derive(Debug, Clone)]
pub struct MaskCodec {
    cfg: MaskConfig,
    perm: Vec<u32>,
}

impl MaskCodec {
    pub fn new(cfg: MaskConfig, key: &KeyBundle) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            perm: keyed_permutation(key, cfg.shape.len(), cfg.perm_index),
            cfg,
        })
    }

    pub fn config(&self) -> &MaskConfig {
        &self.cfg
    }

    pub fn permutation(&self) -> &[u32] {
        &self.perm
    }

    pub fn expand(&self, code: &SemanticCode) -> Result<SignMask> {
        expand_mask_with(code, &self.cfg, &self.perm)
    }
}

/// Elementwise `S ⊙ z`.
pub fn bind(z: &Latent, mask: &SignMask) -> Result<Latent> {
    z.ensure_shape(mask.shape)?;
    let mut out = z.clone();
    for (v, &neg) in out.as_mut_slice().iter_mut().zip(&mask.negative) {
        if neg {
            *v = -*v;
        }
    }
    Ok(out)
}

/// Removes the modulation applied by [`bind`]; the same product since `S² = 1`.
pub fn unbind(z: &Latent, mask: &SignMask) -> Result<Latent> {
    bind(z, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::Bits;
    use crate::latent::gaussian_latent;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn line(len: usize) -> LatentShape {
        LatentShape::new(1, 1, len)
    }

    fn identity(len: usize) -> Vec<u32> {
        (0..len as u32).collect()
    }

    #[test]
    fn tiling_full_ratio_identity_perm() {
        let code = Bits::from_01(&[1, 0, 1, 1]).unwrap();
        let cfg = MaskConfig::new(4, line(8), 1.0).unwrap();
        let s = expand_mask_with(&code, &cfg, &identity(8)).unwrap();
        assert_eq!(s.signs(), vec![-1, 1, -1, -1, -1, 1, -1, -1]);
    }

    #[test]
    fn half_ratio_identity_perm() {
        let code = Bits::from_01(&[1, 0, 1, 1]).unwrap();
        let cfg = MaskConfig::new(4, line(8), 0.5).unwrap();
        let s = expand_mask_with(&code, &cfg, &identity(8)).unwrap();
        assert_eq!(s.signs(), vec![-1, 1, -1, -1, 1, 1, 1, 1]);
    }

    #[test]
    fn half_ratio_keyed_perm_matches_swap_enumeration() {
        let key = KeyBundle::from_seed(2024);
        // Enumerate the swaps from the raw stream.
        let mut stream = derive_stream(&key, "perm", 0);
        let mut pi: Vec<usize> = (0..8).collect();
        let mut swaps = Vec::new();
        for i in (1..8).rev() {
            let j = stream.next_below(i as u64 + 1) as usize;
            swaps.push((i, j));
            pi.swap(i, j);
        }
        let code = Bits::from_01(&[1, 0, 1, 1]).unwrap();
        let cfg = MaskConfig::new(4, line(8), 0.5).unwrap();
        let s = expand_mask(&code, &cfg, &key).unwrap();
        // Selected tiled bits are [1,0,1,1,0,0,0,0]: output slot i is -1 iff π(i) ∈ {0,2,3}.
        let expected: Vec<i8> = pi
            .iter()
            .map(|&src| if [0, 2, 3].contains(&src) { -1 } else { 1 })
            .collect();
        assert_eq!(s.signs(), expected, "swaps {swaps:?}");
        assert_eq!(s.negative_count(), 3);
        // Frozen for cross-implementation bit-exactness.
        assert_eq!(pi, vec![0, 5, 4, 7, 3, 1, 6, 2]);
        assert_eq!(s.signs(), vec![-1, 1, 1, 1, -1, 1, 1, -1]);
    }

    #[test]
    fn zero_ratio_is_identity_mask() {
        let key = KeyBundle::from_seed(1);
        let code = Bits::new(derive_stream(&key, "c", 0).bits(64));
        let cfg = MaskConfig::new(64, LatentShape::new(2, 8, 8), 0.0).unwrap();
        assert_eq!(expand_mask(&code, &cfg, &key).unwrap(), SignMask::identity(cfg.shape));
    }

    #[test]
    fn rejects_wrong_code_length_and_sigma() {
        let key = KeyBundle::from_seed(1);
        let cfg = MaskConfig::new(4, line(8), 1.0).unwrap();
        assert!(expand_mask(&Bits::zeros(5), &cfg, &key).is_err());
        assert!(MaskConfig::new(4, line(8), 1.5).is_err());
        assert!(MaskConfig::new(4, line(8), -0.1).is_err());
    }

    #[test]
    fn bind_hand_product_and_mismatch() {
        let shape = line(2);
        let z = Latent::from_vec(shape, vec![2.0, -3.0]).unwrap();
        let s = SignMask::from_signs(shape, &[-1, 1]).unwrap();
        assert_eq!(bind(&z, &s).unwrap().as_slice(), &[-2.0, -3.0]);
        assert_eq!(bind(&z, &SignMask::identity(shape)).unwrap(), z);
        assert!(bind(&z, &SignMask::identity(line(3))).is_err());

        // Unbinding with S' flips exactly where S and S' disagree.
        let s2 = SignMask::from_signs(shape, &[1, 1]).unwrap();
        let out = unbind(&bind(&z, &s).unwrap(), &s2).unwrap();
        assert_eq!(out.as_slice(), &[-2.0, -3.0]);
    }

    #[test]
    fn rle_roundtrip() {
        let key = KeyBundle::from_seed(8);
        let code = Bits::new(derive_stream(&key, "c", 0).bits(16));
        let cfg = MaskConfig::new(16, LatentShape::new(2, 4, 4), 0.75).unwrap();
        let s = expand_mask(&code, &cfg, &key).unwrap();
        let text = s.to_rle(16, 0.75, key.fingerprint());
        let (h, back) = SignMask::from_rle(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(h.bits, 16);
        assert_eq!(h.sigma, 0.75);
        assert_eq!(h.key_fingerprint, key.fingerprint());
        assert!(SignMask::from_rle("SBMASK 1 B=4 sigma=1 shape=1x1x4 key=0\n+3\n").is_err());
    }

    #[test]
    fn independent_codes_flip_half_the_coordinates() {
        let key = KeyBundle::from_seed(77);
        let shape = LatentShape::default();
        let codec = MaskCodec::new(MaskConfig::new(1024, shape, 1.0).unwrap(), &key).unwrap();
        let trials = 50;
        let mut total = 0.0;
        for t in 0..trials {
            let mut s = derive_stream(&key, "codes", t);
            let a = codec.expand(&Bits::new(s.bits(1024))).unwrap();
            let b = codec.expand(&Bits::new(s.bits(1024))).unwrap();
            let flips = (0..shape.len()).filter(|&i| a.is_negative(i) != b.is_negative(i)).count();
            total += flips as f64 / shape.len() as f64;
        }
        let mean = total / trials as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean flipped fraction {mean}");
    }

    proptest! {
        #[test]
        fn involution_and_determinism(seed: u64, sigma in 0.0f64..=1.0) {
            let key = KeyBundle::from_seed(seed);
            let shape = LatentShape::new(2, 6, 5);
            let code = Bits::new(derive_stream(&key, "c", 0).bits(7));
            let cfg = MaskConfig::new(7, shape, sigma).unwrap();
            let s = expand_mask(&code, &cfg, &key).unwrap();
            prop_assert_eq!(&s, &expand_mask(&code, &cfg, &key).unwrap());
            let z = gaussian_latent(&mut RngStream::from_state(seed), shape);
            prop_assert_eq!(unbind(&bind(&z, &s).unwrap(), &s).unwrap(), z);
        }

        #[test]
        fn ratio_monotone_containment(seed: u64, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let key = KeyBundle::from_seed(seed);
            let shape = LatentShape::new(1, 9, 11);
            let code = Bits::new(derive_stream(&key, "c", 0).bits(13));
            let (lo, hi) = (a.min(b), a.max(b));
            let s_lo = expand_mask(&code, &MaskConfig::new(13, shape, lo).unwrap(), &key).unwrap();
            let s_hi = expand_mask(&code, &MaskConfig::new(13, shape, hi).unwrap(), &key).unwrap();
            for i in 0..shape.len() {
                prop_assert!(!s_lo.is_negative(i) || s_hi.is_negative(i));
            }
        }

        #[test]
        fn single_bit_flip_locality(seed: u64, sigma in 0.0f64..=1.0, bit in 0usize..13) {
            let key = KeyBundle::from_seed(seed);
            let shape = LatentShape::new(1, 9, 11);
            let cfg = MaskConfig::new(13, shape, sigma).unwrap();
            let code = Bits::new(derive_stream(&key, "c", 0).bits(13));
            let mut flipped = code.clone();
            flipped.flip(bit);
            let a = expand_mask(&code, &cfg, &key).unwrap();
            let b = expand_mask(&flipped, &cfg, &key).unwrap();
            let changed = (0..shape.len()).filter(|&i| a.is_negative(i) != b.is_negative(i)).count();
            let ls = cfg.selected_len();
            let expected = if ls > bit { (ls - bit).div_ceil(13) } else { 0 };
            prop_assert_eq!(changed, expected);
        }
    }
}
