//! Training objectives with hand-derived gradients.
//!
//! Every function returns the loss value and its gradient with respect to the
//! batch it consumes (rows are samples).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supervised contrastive loss over similarities `x_i·x_j·scale/τ`.
///
/// `L = -(1/N) Σ_i (1/|P(i)|) Σ_{p∈P(i)} log softmax_{a≠i}(s_i)[p]`.
fn contrastive(x: ArrayView2<f64>, labels: &[usize], tau: f64, scale: f64) -> Result<(f64, Array2<f64>)> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("{tau} must be positive")));
    }
    let positives: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && labels[j] == labels[i]).count())
        .collect();
    if let Some(anchor) = positives.iter().position(|&p| p == 0) {
        return Err(Error::EmptyPositives { anchor });
    }
    let c = scale / tau;
    let sim = x.dot(&x.t()) * c;
    let mut g = Array2::<f64>::zeros((n, n));
    let mut loss = 0.0;
    for i in 0..n {
        let row = sim.row(i);
        let max = (0..n).filter(|&a| a != i).map(|a| row[a]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..n).filter(|&a| a != i).map(|a| (row[a] - max).exp()).sum();
        let lse = max + z.ln();
        let inv_p = 1.0 / positives[i] as f64;
        for a in 0..n {
            if a == i {
                continue;
            }
            let soft = (row[a] - lse).exp();
            let pos = labels[a] == labels[i];
            if pos {
                loss -= inv_p * (row[a] - lse);
            }
            g[[i, a]] = (soft - if pos { inv_p } else { 0.0 }) / n as f64;
        }
    }
    let grad = (&g + &g.t()).dot(&x) * c;
    Ok((loss / n as f64, grad))
}

/// Stage-1 loss on ℓ2-normalized features.
pub fn sup_con_loss(z: ArrayView2<f64>, labels: &[usize], tau: f64) -> Result<(f64, Array2<f64>)> {
    contrastive(z, labels, tau, 1.0)
}

/// Code-space contrastive loss on similarities `b_i·b_j / B`.
pub fn hash_loss(b: ArrayView2<f64>, labels: &[usize], tau_h: f64) -> Result<(f64, Array2<f64>)> {
    let bits = b.ncols().max(1) as f64;
    contrastive(b, labels, tau_h, 1.0 / bits)
}

/// `mean(1 - |b|)` over all entries.
pub fn quantization_loss(b: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let count = b.len() as f64;
    let loss = b.iter().map(|v| 1.0 - v.abs()).sum::<f64>() / count;
    let grad = b.mapv(|v| if v < 0.0 { 1.0 / count } else { -1.0 / count });
    (loss, grad)
}

/// `(1/B) Σ_k μ_k²` with `μ_k` the batch mean of bit `k`.
pub fn balance_loss(b: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let (n, bits) = b.dim();
    let mu: Array1<f64> = b.mean_axis(Axis(0)).expect("non-empty batch");
    let loss = mu.dot(&mu) / bits as f64;
    let row = mu * (2.0 / (bits * n) as f64);
    let grad = Array2::from_shape_fn((n, bits), |(_, k)| row[k]);
    (loss, grad)
}

/// `‖C - I‖²_F` with `C` the unbiased batch covariance of the bits.
pub fn decorrelation_loss(b: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    let (n, bits) = b.dim();
    if n < 2 {
        return Err(Error::Insufficient("covariance needs at least 2 samples".into()));
    }
    let mu = b.mean_axis(Axis(0)).expect("non-empty batch");
    let xc = &b - &mu;
    let mut d = xc.t().dot(&xc) / (n - 1) as f64;
    d -= &Array2::eye(bits);
    let loss = d.iter().map(|v| v * v).sum();
    // columns of xc sum to zero, so the centering contributes nothing
    let grad = xc.dot(&d) * (4.0 / (n - 1) as f64);
    Ok((loss, grad))
}

/// `mean_i ‖b¹_i - b²_i‖₁`; returns gradients for both views.
pub fn consistency_loss(b1: ArrayView2<f64>, b2: ArrayView2<f64>) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if b1.dim() != b2.dim() {
        return Err(Error::DimensionMismatch {
            expected: b1.len(),
            got: b2.len(),
        });
    }
    let n = b1.nrows() as f64;
    let diff = &b1 - &b2;
    let loss = diff.iter().map(|v| v.abs()).sum::<f64>() / n;
    let g1 = diff.mapv(|v| v.signum() * f64::from(v != 0.0) / n);
    let g2 = -&g1;
    Ok((loss, g1, g2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub q: f64,
    pub bal: f64,
    pub dcr: f64,
    pub cons: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            q: 0.1,
            bal: 0.1,
            dcr: 0.1,
            cons: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossComponents {
    pub sup: f64,
    pub hash: f64,
    pub q: f64,
    pub bal: f64,
    pub dcr: f64,
    pub cons: f64,
    /// `hash + λ_q·q + λ_bal·bal + λ_dcr·dcr + λ_cons·cons`.
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub components: LossComponents,
    /// Gradient of `sup` with respect to `z`.
    pub grad_z: Array2<f64>,
    /// Gradients of `total` with respect to the two code views.
    pub grad_b1: Array2<f64>,
    pub grad_b2: Array2<f64>,
}

/// All six objectives on one batch: features `z`, two jittered code views
/// `b1`, `b2`. The regularizers other than consistency act on `b1`.
pub fn losses(
    z: ArrayView2<f64>,
    b1: ArrayView2<f64>,
    b2: ArrayView2<f64>,
    labels: &[usize],
    tau: f64,
    tau_h: f64,
    w: &LossWeights,
) -> Result<LossOutput> {
    let (sup, grad_z) = sup_con_loss(z, labels, tau)?;
    let (stage2, grad_b1, grad_b2) = stage2_objective(b1, b2, labels, tau_h, w)?;
    Ok(LossOutput {
        components: LossComponents { sup, ..stage2 },
        grad_z,
        grad_b1,
        grad_b2,
    })
}

/// Stage-2 composite objective and its gradients; `sup` is left at zero.
pub fn stage2_objective(
    b1: ArrayView2<f64>,
    b2: ArrayView2<f64>,
    labels: &[usize],
    tau_h: f64,
    w: &LossWeights,
) -> Result<(LossComponents, Array2<f64>, Array2<f64>)> {
    let (hash, gh) = hash_loss(b1, labels, tau_h)?;
    let (q, gq) = quantization_loss(b1);
    let (bal, gb) = balance_loss(b1);
    let (dcr, gd) = decorrelation_loss(b1)?;
    let (cons, gc1, gc2) = consistency_loss(b1, b2)?;
    let total = hash + w.q * q + w.bal * bal + w.dcr * dcr + w.cons * cons;
    let g1 = gh + gq * w.q + gb * w.bal + gd * w.dcr + gc1 * w.cons;
    let g2 = gc2 * w.cons;
    Ok((
        LossComponents {
            sup: 0.0,
            hash,
            q,
            bal,
            dcr,
            cons,
            total,
        },
        g1,
        g2,
    ))
}
