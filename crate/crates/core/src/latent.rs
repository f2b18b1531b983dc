use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// `C × H × W` latent geometry. Coordinates are flattened channel-major, then
/// row, then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for LatentShape {
    fn default() -> Self {
        Self::new(4, 64, 64)
    }
}

impl fmt::Display for LatentShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl std::str::FromStr for LatentShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('x').collect();
        let dims: Option<Vec<usize>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
        match dims.as_deref() {
            Some(&[c, h, w]) => Self::try_new(c, h, w),
            _ => Err(Error::invalid("shape", format!("expected CxHxW, got {s:?}"))),
        }
    }
}

impl LatentShape {
    /// # Panics
    /// If any dimension is zero.
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self::try_new(channels, height, width).expect("latent dimensions must be positive")
    }

    pub fn try_new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(
                "shape",
                format!("{channels}x{height}x{width} has a zero dimension"),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
        })
    }

    /// Total coordinate count `L = C·H·W`.
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.height + h) * self.width + w
    }

    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let plane = self.plane();
        (i / plane, (i % plane) / self.width, i % self.width)
    }
}

/// Real tensor holding an initial noise sample or an estimate of one.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    shape: LatentShape,
    values: Vec<f64>,
}

impl Latent {
    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: LatentShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: shape.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("latent", format!("non-finite value at {i}")));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.shape.plane();
        &self.values[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.shape.plane();
        &mut self.values[c * p..(c + 1) * p]
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.values[self.shape.index(c, h, w)]
    }

    pub(crate) fn ensure_shape(&self, shape: LatentShape) -> Result<()> {
        if self.shape != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_string(),
                got: self.shape.to_string(),
            });
        }
        Ok(())
    }
}

/// I.i.d. standard-normal latent drawn from `stream`.
pub fn gaussian_latent(stream: &mut RngStream, shape: LatentShape) -> Latent {
    Latent {
        shape,
        values: stream.gaussian_vec(shape.len()),
    }
}
