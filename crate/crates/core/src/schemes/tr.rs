//! Ring pattern on the centered spectrum of channel 0.

use num_complex::Complex64;

use crate::dft::Dft2;
use crate::error::{Error, Result};
use crate::latent::{Latent, LatentShape};
use crate::rng::{derive_stream, KeyBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingMetric {
    /// Mean of `|F - key|` over ring bins.
    MeanAbs,
    /// Root mean square of `|F - key|`.
    L2,
}

#[derive(Debug, Clone)]
struct RingBin {
    index: usize,
    partner: usize,
    value: Complex64,
}

#[derive(Debug, Clone)]
pub(crate) struct RingPattern {
    dft: Dft2,
    bins: Vec<RingBin>,
    metric: RingMetric,
}

impl RingPattern {
    pub(crate) fn new(
        key: &KeyBundle,
        shape: LatentShape,
        radii: &[usize],
        magnitude: Option<f64>,
        metric: RingMetric,
    ) -> Result<Self> {
        let max_r = radii.iter().copied().max().unwrap_or(0);
        if radii.is_empty() || 2 * (max_r + 1) >= shape.height.min(shape.width) {
            return Err(Error::invalid(
                "shape",
                format!("{shape} too small for ring radii {radii:?}"),
            ));
        }
        let dft = Dft2::new(shape.height, shape.width);
        let magnitude = magnitude.unwrap_or((shape.plane() as f64).sqrt());
        let mut stream = derive_stream(key, "tr", 0);
        let mut bins = Vec::new();
        for u in 0..shape.height {
            for v in 0..shape.width {
                let index = u * shape.width + v;
                let partner = dft.conjugate_index(u, v);
                let r = dft.radius(u, v).round() as usize;
                if partner > index && radii.contains(&r) {
                    let phase = std::f64::consts::TAU * stream.next_open01();
                    bins.push(RingBin {
                        index,
                        partner,
                        value: Complex64::from_polar(magnitude, phase),
                    });
                }
            }
        }
        Ok(Self { dft, bins, metric })
    }

    /// Overwrites the ring bins of channel 0 with the key pattern.
    pub(crate) fn imprint(&self, z: &mut Latent) {
        let mut spec = self.dft.forward_real(z.channel(0));
        for b in &self.bins {
            spec[b.index] = b.value;
            spec[b.partner] = b.value.conj();
        }
        let back = self.dft.inverse(&spec);
        for (slot, v) in z.channel_mut(0).iter_mut().zip(back) {
            *slot = v.re;
        }
    }

    /// Deviation of the ring bins from the key pattern; lower is more watermarked.
    pub(crate) fn distance(&self, z: &Latent) -> f64 {
        let spec = self.dft.forward_real(z.channel(0));
        let n = 2.0 * self.bins.len() as f64;
        match self.metric {
            RingMetric::MeanAbs => {
                self.bins
                    .iter()
                    .map(|b| (spec[b.index] - b.value).norm() + (spec[b.partner] - b.value.conj()).norm())
                    .sum::<f64>()
                    / n
            }
            RingMetric::L2 => (self
                .bins
                .iter()
                .map(|b| {
                    (spec[b.index] - b.value).norm_sqr() + (spec[b.partner] - b.value.conj()).norm_sqr()
                })
                .sum::<f64>()
                / n)
                .sqrt(),
        }
    }

    pub(crate) fn bin_count(&self) -> usize {
        2 * self.bins.len()
    }
}
