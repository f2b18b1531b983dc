use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-length bit string used for semantic codes and watermark payloads.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn from_01(values: &[u8]) -> Result<Self> {
        values
            .iter()
            .map(|&v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::invalid("bit", format!("{other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    /// Number of positions where `self` and `other` differ.
    ///
    /// # Panics
    /// If the lengths differ.
    pub fn hamming(&self, other: &Bits) -> usize {
        assert_eq!(self.len(), other.len(), "hamming distance of unequal lengths");
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// Fraction of matching positions.
    pub fn agreement(&self, other: &Bits) -> f64 {
        1.0 - self.hamming(other) as f64 / self.len() as f64
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        write!(f, "Bits({s})")
    }
}

/// `B`-bit code `m ∈ {0,1}^B` summarizing image semantics.
pub type SemanticCode = Bits;

/// `k`-bit watermark payload.
pub type Message = Bits;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_and_agreement() {
        let a = Bits::from_01(&[0, 0, 1, 1]).unwrap();
        let b = Bits::from_01(&[0, 1, 1, 0]).unwrap();
        assert_eq!(a.hamming(&b), 2);
        assert_eq!(a.agreement(&b), 0.5);
        assert!(Bits::from_01(&[2]).is_err());
    }
}
