//! Sign-keyed payload embedding shared by GS_LITE and the payload half of GSPP_LITE.
//!
//! Coordinate `i` of a region carries message bit `i mod k`. Its sign is
//! `+1` when `msg[i mod k] ⊕ κ_i = 0` and `-1` otherwise; the magnitude is
//! `|g_i|` for a fresh standard normal `g_i`.

use crate::code::Message;

pub(crate) fn embed_region(out: &mut [f64], msg: &Message, keystream: &[bool], magnitudes: &[f64]) {
    let k = msg.len();
    let bits = msg.as_slice();
    for (i, slot) in out.iter_mut().enumerate() {
        let flip = bits[i % k] ^ keystream[i];
        let m = magnitudes[i].abs();
        *slot = if flip { -m } else { m };
    }
}

/// Majority vote per message bit. A tied vote falls back to the sign of the
/// summed evidence `Σ z_i·(1 - 2κ_i)` (negative ⇒ bit 1), which keeps each
/// decoded bit a fair coin on unwatermarked input.
pub(crate) fn decode_region(z: &[f64], keystream: &[bool], k: usize) -> Message {
    let mut ones = vec![0usize; k];
    let mut total = vec![0usize; k];
    let mut evidence = vec![0.0f64; k];
    for (i, (&v, &kappa)) in z.iter().zip(keystream).enumerate() {
        let j = i % k;
        let bit = (v < 0.0) ^ kappa;
        ones[j] += bit as usize;
        total[j] += 1;
        evidence[j] += if kappa { -v } else { v };
    }
    Message::new(
        (0..k)
            .map(|j| {
                let twice = 2 * ones[j];
                if twice == total[j] {
                    evidence[j] < 0.0
                } else {
                    twice > total[j]
                }
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::Bits;

    #[test]
    fn hand_example() {
        let msg = Bits::from_01(&[1, 0]).unwrap();
        let kappa = [false, true, true, false];
        let mags = [0.5, 1.2, 0.3, 0.7];
        let mut out = [0.0; 4];
        embed_region(&mut out, &msg, &kappa, &mags);
        assert_eq!(out, [-0.5, -1.2, 0.3, 0.7]);
        assert_eq!(decode_region(&out, &kappa, 2), msg);
    }

    #[test]
    fn tie_uses_evidence() {
        // one vote each way; summed evidence decides
        let kappa = [false, false];
        assert!(!decode_region(&[2.0, -0.5], &kappa, 1).get(0));
        assert!(decode_region(&[0.5, -2.0], &kappa, 1).get(0));
    }
}
