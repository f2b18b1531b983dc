//! The hashing network `ℓ = Hash(Proj(Enc(e)))` with manual backpropagation.
//!
//! ```text
//! Enc : h1 = gelu(e·W0 + b0);   h2 = h1 + gelu(h1·W1 + b1)
//! Proj: p  = gelu(h2·W2 + b2);  z  = p / ‖p‖
//! Hash: u1 = z + gelu(z·W3 + b3); u2 = u1 + gelu(u1·W4 + b4); ℓ = u2·W5 + b5
//! ```
//!
//! Batches are matrices with one sample per row.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::code::SemanticCode;
use crate::error::{Error, Result};
use crate::rng::RngStream;

const MAGIC: &[u8; 4] = b"SBHN";
const FORMAT_VERSION: u32 = 1;

/// Layer indices: the first three belong to Enc+Proj, the rest to Hash.
pub const FEATURE_LAYERS: std::ops::Range<usize> = 0..3;
pub const HASH_LAYERS: std::ops::Range<usize> = 3..6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Widths {
    pub input: usize,
    pub hidden: usize,
    pub feature: usize,
    pub bits: usize,
}

impl Widths {
    /// Desk-scale widths `(d_e, H, D, B) = (64, 128, 256, 64)`.
    pub const DESK: Widths = Widths {
        input: 64,
        hidden: 128,
        feature: 256,
        bits: 64,
    };

    fn shapes(&self) -> [(usize, usize); 6] {
        let Widths {
            input: e,
            hidden: h,
            feature: d,
            bits: b,
        } = *self;
        [(e, h), (h, h), (h, d), (d, d), (d, d), (d, b)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn zeros(i: usize, o: usize) -> Self {
        Self {
            w: Array2::zeros((i, o)),
            b: Array1::zeros(o),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates `dW`, `db` into `grad` and returns `dx`.
    fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashNetworkParams {
    pub widths: Widths,
    pub layers: Vec<Linear>,
    /// Soft-sign sharpness used by [`HashNetworkParams::binary`].
    pub sharpness: f64,
    /// Highest training stage completed (0 = freshly initialized).
    pub trained_stage: u32,
}

pub struct FeatureCache {
    e: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    a3: Array2<f64>,
    norms: Array1<f64>,
    pub z: Array2<f64>,
}

pub struct HashCache {
    z: Array2<f64>,
    a4: Array2<f64>,
    u1: Array2<f64>,
    a5: Array2<f64>,
    u2: Array2<f64>,
    pub logits: Array2<f64>,
}

pub enum Mode {
    Logit,
    Binary,
}

pub enum Output {
    Logits(Array1<f64>),
    Binary { soft: Array1<f64>, code: SemanticCode },
}

impl HashNetworkParams {
    /// Gaussian initialization with variance `1/fan_in`; biases zero. Residual
    /// branches start at half that scale.
    pub fn init(widths: Widths, rng: &mut RngStream) -> Result<Self> {
        if [widths.input, widths.hidden, widths.feature, widths.bits].contains(&0) {
            return Err(Error::invalid("widths", format!("{widths:?} has a zero width")));
        }
        let layers = widths
            .shapes()
            .iter()
            .enumerate()
            .map(|(l, &(i, o))| {
                let residual = matches!(l, 1 | 3 | 4);
                let scale = (1.0 / i as f64).sqrt() * if residual { 0.5 } else { 1.0 };
                let w = Array2::from_shape_vec((i, o), rng.gaussian_vec(i * o)).expect("shape") * scale;
                Linear { w, b: Array1::zeros(o) }
            })
            .collect();
        Ok(Self {
            widths,
            layers,
            sharpness: 1.0,
            trained_stage: 0,
        })
    }

    pub fn zeros_like(&self) -> Vec<Linear> {
        self.widths.shapes().iter().map(|&(i, o)| Linear::zeros(i, o)).collect()
    }

    fn check_input(&self, cols: usize, expected: usize) -> Result<()> {
        if cols != expected {
            return Err(Error::DimensionMismatch { expected, got: cols });
        }
        Ok(())
    }

    /// `z = Proj(Enc(e))` for a batch.
    pub fn features(&self, e: ArrayView2<f64>) -> Result<FeatureCache> {
        self.check_input(e.ncols(), self.widths.input)?;
        let l = &self.layers;
        let e = e.to_owned();
        let a1 = l[0].forward(&e);
        let h1 = a1.mapv(gelu);
        let a2 = l[1].forward(&h1);
        let h2 = &h1 + &a2.mapv(gelu);
        let a3 = l[2].forward(&h2);
        let p = a3.mapv(gelu);
        let norms = p.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-12));
        let z = &p / &norms.view().insert_axis(Axis(1));
        Ok(FeatureCache {
            e,
            a1,
            h1,
            a2,
            h2,
            a3,
            norms,
            z,
        })
    }

    /// Backpropagates `dL/dz` into `grads[0..3]`.
    pub fn backward_features(&self, c: &FeatureCache, dz: &Array2<f64>, grads: &mut [Linear]) {
        let l = &self.layers;
        // z = p/‖p‖  ⇒  dp = (dz - z·(z·dz)) / ‖p‖
        let proj = (&c.z * dz).sum_axis(Axis(1)).insert_axis(Axis(1));
        let dp = (dz - &(&c.z * &proj)) / c.norms.view().insert_axis(Axis(1));
        let da3 = dp * c.a3.mapv(gelu_prime);
        let dh2 = l[2].backward(&c.h2, &da3, &mut grads[2]);
        let da2 = &dh2 * &c.a2.mapv(gelu_prime);
        let dh1 = dh2 + l[1].backward(&c.h1, &da2, &mut grads[1]);
        let da1 = dh1 * c.a1.mapv(gelu_prime);
        l[0].backward(&c.e, &da1, &mut grads[0]);
    }

    /// `ℓ = Hash(z)` for a batch of features.
    pub fn hash_logits(&self, z: ArrayView2<f64>) -> Result<HashCache> {
        self.check_input(z.ncols(), self.widths.feature)?;
        let l = &self.layers;
        let z = z.to_owned();
        let a4 = l[3].forward(&z);
        let u1 = &z + &a4.mapv(gelu);
        let a5 = l[4].forward(&u1);
        let u2 = &u1 + &a5.mapv(gelu);
        let logits = l[5].forward(&u2);
        Ok(HashCache {
            z,
            a4,
            u1,
            a5,
            u2,
            logits,
        })
    }

    /// Backpropagates `dL/dℓ` into `grads[3..6]` and returns `dL/dz`.
    pub fn backward_hash(&self, c: &HashCache, dlogits: &Array2<f64>, grads: &mut [Linear]) -> Array2<f64> {
        let l = &self.layers;
        let du2 = l[5].backward(&c.u2, dlogits, &mut grads[5]);
        let da5 = &du2 * &c.a5.mapv(gelu_prime);
        let du1 = du2 + l[4].backward(&c.u1, &da5, &mut grads[4]);
        let da4 = &du1 * &c.a4.mapv(gelu_prime);
        du1 + l[3].backward(&c.z, &da4, &mut grads[3])
    }

    /// Hash logits of a batch of embeddings.
    pub fn logits(&self, e: ArrayView2<f64>) -> Result<Array2<f64>> {
        let f = self.features(e)?;
        Ok(self.hash_logits(f.z.view())?.logits)
    }

    /// Soft codes `tanh(s·ℓ)` and binary codes for a batch, at sharpness `s`.
    pub fn binary(&self, e: ArrayView2<f64>, s: f64) -> Result<(Array2<f64>, Vec<SemanticCode>)> {
        let soft = self.logits(e)?.mapv(|v| (s * v).tanh());
        let codes = soft.axis_iter(Axis(0)).map(|r| binarize(r.as_slice().expect("row-major"))).collect();
        Ok((soft, codes))
    }

    /// Single-embedding forward pass in either mode, at the stored sharpness.
    pub fn forward(&self, e: &[f64], mode: Mode) -> Result<Output> {
        let batch = ArrayView2::from_shape((1, e.len()), e).expect("one row");
        match mode {
            Mode::Logit => Ok(Output::Logits(self.logits(batch)?.row(0).to_owned())),
            Mode::Binary => {
                let (soft, mut codes) = self.binary(batch, self.sharpness)?;
                Ok(Output::Binary {
                    soft: soft.row(0).to_owned(),
                    code: codes.pop().expect("one row"),
                })
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat binary form: magic, version, four widths, trained stage,
    /// sharpness, then every layer's `W` (row-major) and `b`; all
    /// little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let w = self.widths;
        for v in [w.input, w.hidden, w.feature, w.bits] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        out.write_all(&self.trained_stage.to_le_bytes())?;
        out.write_all(&self.sharpness.to_le_bytes())?;
        for layer in &self.layers {
            for v in layer.w.iter().chain(layer.b.iter()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a hash-network parameter file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = usize::try_from(read_u64(&mut input)?).map_err(|_| Error::Format("width overflow".into()))?;
        }
        let widths = Widths {
            input: dims[0],
            hidden: dims[1],
            feature: dims[2],
            bits: dims[3],
        };
        if dims.contains(&0) || dims.iter().any(|&d| d > 1 << 20) {
            return Err(Error::Format(format!("implausible widths {widths:?}")));
        }
        let trained_stage = read_u32(&mut input)?;
        let sharpness = read_f64(&mut input)?;
        let mut layers = Vec::with_capacity(6);
        for (i, o) in widths.shapes() {
            let mut w = Array2::zeros((i, o));
            for v in w.iter_mut() {
                *v = read_f64(&mut input)?;
            }
            let mut b = Array1::zeros(o);
            for v in b.iter_mut() {
                *v = read_f64(&mut input)?;
            }
            layers.push(Linear { w, b });
        }
        if input.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after parameters".into()));
        }
        if layers.iter().any(|l| l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite())) || !sharpness.is_finite() {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(Self {
            widths,
            layers,
            sharpness,
            trained_stage,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// `m = (sign(b) + 1)/2` with `sign(0) = +1`.
pub fn binarize(soft: &[f64]) -> SemanticCode {
    SemanticCode::new(soft.iter().map(|&v| v >= 0.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, KeyBundle};
    use proptest::prelude::*;

    const SMALL: Widths = Widths {
        input: 5,
        hidden: 7,
        feature: 6,
        bits: 4,
    };

    fn net(seed: u64) -> HashNetworkParams {
        HashNetworkParams::init(SMALL, &mut derive_stream(&KeyBundle::from_seed(seed), "init", 0)).unwrap()
    }

    fn batch(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let v = derive_stream(&KeyBundle::from_seed(seed), "batch", 0).gaussian_vec(n * d);
        Array2::from_shape_vec((n, d), v).unwrap()
    }

    #[test]
    fn binarize_examples() {
        let s = 12.0;
        let soft: Vec<f64> = [2.3, -0.1].iter().map(|v: &f64| (s * v).tanh()).collect();
        assert_eq!(binarize(&soft), SemanticCode::from_01(&[1, 0]).unwrap());
        assert_eq!(binarize(&[0.0, 0.0]), SemanticCode::from_01(&[1, 1]).unwrap());
    }

    #[test]
    fn features_are_unit_norm_and_soft_codes_bounded() {
        let p = net(1);
        let e = batch(9, SMALL.input, 2) * 10.0;
        let f = p.features(e.view()).unwrap();
        for r in f.z.axis_iter(Axis(0)) {
            assert!((r.dot(&r) - 1.0).abs() < 1e-12);
        }
        let (soft, codes) = p.binary(e.view(), 12.0).unwrap();
        assert!(soft.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(codes.len(), 9);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(net(1).logits(batch(2, 3, 0).view()).is_err());
        assert!(net(1).forward(&[0.0; 4], Mode::Logit).is_err());
    }

    /// Central differences of `Σ ℓ ⊙ R` with respect to every parameter.
    #[test]
    fn backprop_matches_finite_differences() {
        let p = net(3);
        let e = batch(4, SMALL.input, 4);
        let r = batch(4, SMALL.bits, 5);
        let rz = batch(4, SMALL.feature, 6);
        // objective: Σ ℓ⊙r + Σ z⊙rz touches both halves
        let objective = |q: &HashNetworkParams| {
            let f = q.features(e.view()).unwrap();
            let h = q.hash_logits(f.z.view()).unwrap();
            (&h.logits * &r).sum() + (&f.z * &rz).sum()
        };
        let mut grads = p.zeros_like();
        let f = p.features(e.view()).unwrap();
        let h = p.hash_logits(f.z.view()).unwrap();
        let dz = p.backward_hash(&h, &r, &mut grads) + &rz;
        p.backward_features(&f, &dz, &mut grads);

        let step = 1e-5;
        let mut num = Vec::new();
        let mut ana = Vec::new();
        for (li, g) in grads.iter().enumerate() {
            for (idx, _) in p.layers[li].w.indexed_iter() {
                let mut plus = p.clone();
                plus.layers[li].w[idx] += step;
                let mut minus = p.clone();
                minus.layers[li].w[idx] -= step;
                num.push((objective(&plus) - objective(&minus)) / (2.0 * step));
                ana.push(g.w[idx]);
            }
            for k in 0..p.layers[li].b.len() {
                let mut plus = p.clone();
                plus.layers[li].b[k] += step;
                let mut minus = p.clone();
                minus.layers[li].b[k] -= step;
                num.push((objective(&plus) - objective(&minus)) / (2.0 * step));
                ana.push(g.b[k]);
            }
        }
        let diff: f64 = num.iter().zip(&ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = num.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6, "relative error {}", diff / norm);
    }

    #[test]
    fn serialization_roundtrip_and_rejection() {
        let mut p = net(7);
        p.sharpness = 12.0;
        p.trained_stage = 2;
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 32 + 4 + 8 + 8 * p.param_count());
        assert_eq!(HashNetworkParams::read_from(buf.as_slice()).unwrap(), p);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(HashNetworkParams::read_from(bad.as_slice()).is_err());
        assert!(HashNetworkParams::read_from(&buf[..buf.len() - 1]).is_err());
        let mut long = buf;
        long.push(0);
        assert!(HashNetworkParams::read_from(long.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn sign_pattern_is_scale_free(l in prop::collection::vec(-5.0f64..5.0, 1..32), s in 0.01f64..50.0, t in 0.01f64..50.0) {
            prop_assume!(l.iter().all(|v| *v != 0.0));
            let a: Vec<f64> = l.iter().map(|v| (s * v).tanh()).collect();
            let b: Vec<f64> = l.iter().map(|v| (t * v).tanh()).collect();
            prop_assert_eq!(binarize(&a), binarize(&b));
        }
    }
}
