//! Two-stage training of the hashing network by clipped gradient descent.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::dataset::{pk_batches, synth_dataset, ClusterDataset};
use super::losses::{stage2_objective, sup_con_loss, LossWeights};
use super::network::{HashNetworkParams, Linear, Widths, FEATURE_LAYERS, HASH_LAYERS};
use crate::error::{Error, Result};
use crate::rng::{derive_stream, KeyBundle, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Prompts per batch (`P`).
    pub batch_prompts: usize,
    /// Views per prompt per batch (`K`).
    pub batch_views: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub lr1: f64,
    pub lr2: f64,
    /// Global gradient-norm cap.
    pub clip: f64,
    /// Stage-1 temperature before and after the midpoint epoch.
    pub tau_start: f64,
    pub tau_end: f64,
    pub tau_h: f64,
    pub weights: LossWeights,
    /// Std of the Gaussian jitter added to frozen features in stage 2.
    pub feature_jitter: f64,
    pub s_init: f64,
    pub s_gamma: f64,
    /// Stage-2 epochs (0-based) at which `s` is multiplied by `s_gamma`.
    pub s_milestones: Vec<usize>,
    /// Sharpness stored in the trained parameters for inference.
    pub s_infer: f64,
}

/// Desk-scale schedule. The loss weights are the full-scale defaults except `λ_dcr`:
/// a batch of `P` prompts has code covariance of rank below `P`, so with
/// `P < B` the full-weight term is minimized by constant bits and collapses
/// the code.
impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_prompts: 8,
            batch_views: 8,
            stage1_epochs: 60,
            stage2_epochs: 100,
            lr1: 0.05,
            lr2: 0.05,
            clip: 1.0,
            tau_start: 0.07,
            tau_end: 0.10,
            tau_h: 0.10,
            weights: LossWeights {
                dcr: 1e-4,
                ..LossWeights::default()
            },
            feature_jitter: 0.01,
            s_init: 1.0,
            s_gamma: 2.5,
            s_milestones: vec![20, 40, 70],
            s_infer: 12.0,
        }
    }
}

impl TrainConfig {
    pub fn tau_at(&self, epoch: usize) -> f64 {
        if 2 * epoch < self.stage1_epochs {
            self.tau_start
        } else {
            self.tau_end
        }
    }

    pub fn sharpness_at(&self, epoch: usize) -> f64 {
        let steps = self.s_milestones.iter().filter(|&&m| epoch >= m).count();
        self.s_init * self.s_gamma.powi(steps as i32)
    }

    fn validate(&self, dataset: &ClusterDataset) -> Result<()> {
        if dataset.prompts() < self.batch_prompts {
            return Err(Error::invalid(
                "batch_prompts",
                format!("{} prompts in the dataset, batch needs {}", dataset.prompts(), self.batch_prompts),
            ));
        }
        if self.batch_views < 2 {
            return Err(Error::invalid("batch_views", "need at least 2 views for positives"));
        }
        for (name, v) in [("lr1", self.lr1), ("lr2", self.lr2)] {
            if !(v >= 0.0) {
                return Err(Error::invalid(name, format!("{v} must be non-negative")));
            }
        }
        for (name, v) in [
            ("clip", self.clip),
            ("tau_start", self.tau_start),
            ("tau_end", self.tau_end),
            ("tau_h", self.tau_h),
            ("s_init", self.s_init),
            ("s_gamma", self.s_gamma),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    /// Objective on the full training set after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    /// Fraction of epochs (after the first) whose loss did not increase.
    pub fn non_increasing_fraction(&self) -> f64 {
        let l = &self.epoch_losses;
        if l.len() < 2 {
            return 1.0;
        }
        l.windows(2).filter(|w| w[1] <= w[0]).count() as f64 / (l.len() - 1) as f64
    }
}

fn apply(params: &mut HashNetworkParams, grads: &[Linear], range: std::ops::Range<usize>, lr: f64, clip: f64) {
    let norm = grads[range.clone()]
        .iter()
        .map(|g| g.w.iter().chain(g.b.iter()).map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let scale = if norm > clip { lr * clip / norm } else { lr };
    for l in range {
        params.layers[l].w.scaled_add(-scale, &grads[l].w);
        params.layers[l].b.scaled_add(-scale, &grads[l].b);
    }
}

fn jitter(z: &Array2<f64>, sigma: f64, rng: &mut RngStream) -> Array2<f64> {
    let noise = Array2::from_shape_vec(z.dim(), rng.gaussian_vec(z.len())).expect("shape");
    z + &(noise * sigma)
}

/// Stage-2 objective and `dL/dℓ` for both jittered views of features `z`.
fn stage2_step(
    params: &HashNetworkParams,
    z: &Array2<f64>,
    labels: &[usize],
    s: f64,
    cfg: &TrainConfig,
    rng: &mut RngStream,
    grads: Option<&mut [Linear]>,
) -> Result<f64> {
    let h1 = params.hash_logits(jitter(z, cfg.feature_jitter, rng).view())?;
    let h2 = params.hash_logits(jitter(z, cfg.feature_jitter, rng).view())?;
    let b1 = h1.logits.mapv(|v| (s * v).tanh());
    let b2 = h2.logits.mapv(|v| (s * v).tanh());
    let (c, g1, g2) = stage2_objective(b1.view(), b2.view(), labels, cfg.tau_h, &cfg.weights)?;
    if let Some(grads) = grads {
        // b = tanh(sℓ)  ⇒  dℓ = db · s(1 - b²)
        let d1 = g1 * b1.mapv(|b| s * (1.0 - b * b));
        let d2 = g2 * b2.mapv(|b| s * (1.0 - b * b));
        params.backward_hash(&h1, &d1, grads);
        params.backward_hash(&h2, &d2, grads);
    }
    Ok(c.total)
}

/// Runs one training stage and returns the updated parameters with the
/// per-epoch objective.
///
/// Stage 1 updates Enc+Proj under the supervised contrastive loss. Stage 2
/// freezes them and updates Hash under the composite objective; it requires
/// parameters that completed stage 1.
pub fn train_masker(
    dataset: &ClusterDataset,
    stage: u32,
    params: &HashNetworkParams,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(HashNetworkParams, TrainLog)> {
    cfg.validate(dataset)?;
    if dataset.dim() != params.widths.input {
        return Err(Error::DimensionMismatch {
            expected: params.widths.input,
            got: dataset.dim(),
        });
    }
    let mut p = params.clone();
    let mut log = TrainLog::default();
    match stage {
        1 => {
            for epoch in 0..cfg.stage1_epochs {
                let tau = cfg.tau_at(epoch);
                for batch in pk_batches(&dataset.labels, cfg.batch_prompts, cfg.batch_views, rng)? {
                    let (e, y) = dataset.select(&batch);
                    let f = p.features(e.view())?;
                    let (_, dz) = sup_con_loss(f.z.view(), &y, tau)?;
                    let mut grads = p.zeros_like();
                    p.backward_features(&f, &dz, &mut grads);
                    apply(&mut p, &grads, FEATURE_LAYERS, cfg.lr1, cfg.clip);
                }
                let z = p.features(dataset.views.view())?.z;
                log.epoch_losses.push(sup_con_loss(z.view(), &dataset.labels, tau)?.0);
            }
            p.trained_stage = p.trained_stage.max(1);
        }
        2 => {
            if p.trained_stage < 1 {
                return Err(Error::invalid("stage", "stage 2 needs stage-1 parameters"));
            }
            let z_all = p.features(dataset.views.view())?.z;
            // one fixed jitter draw for the per-epoch objective, so epochs compare
            let eval_rng = rng.clone();
            for epoch in 0..cfg.stage2_epochs {
                let s = cfg.sharpness_at(epoch);
                for batch in pk_batches(&dataset.labels, cfg.batch_prompts, cfg.batch_views, rng)? {
                    let z = z_all.select(Axis(0), &batch);
                    let y: Vec<usize> = batch.iter().map(|&i| dataset.labels[i]).collect();
                    let mut grads = p.zeros_like();
                    stage2_step(&p, &z, &y, s, cfg, rng, Some(&mut grads))?;
                    apply(&mut p, &grads, HASH_LAYERS, cfg.lr2, cfg.clip);
                }
                let total = stage2_step(&p, &z_all, &dataset.labels, s, cfg, &mut eval_rng.clone(), None)?;
                log.epoch_losses.push(total);
            }
            p.trained_stage = 2;
            p.sharpness = cfg.s_infer;
        }
        other => return Err(Error::invalid("stage", format!("{other} is not 1 or 2"))),
    }
    Ok((p, log))
}

/// Mean same-prompt and cross-prompt Hamming distances of the binary codes of
/// every view in `dataset`.
pub fn code_separation(params: &HashNetworkParams, dataset: &ClusterDataset) -> Result<(f64, f64)> {
    let (_, codes) = params.binary(dataset.views.view(), params.sharpness)?;
    let (mut intra, mut n_intra, mut cross, mut n_cross) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            let d = codes[i].hamming(&codes[j]);
            if dataset.labels[i] == dataset.labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                cross += d;
                n_cross += 1;
            }
        }
    }
    if n_intra == 0 || n_cross == 0 {
        return Err(Error::Insufficient("need two views of a prompt and two prompts".into()));
    }
    Ok((intra as f64 / n_intra as f64, cross as f64 / n_cross as f64))
}

/// Synthetic data and evaluation sizes for a desk-scale training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeskSetup {
    pub prompts: usize,
    pub views: usize,
    pub jitter: f64,
    pub eval_views: usize,
    pub widths: Widths,
}

impl Default for DeskSetup {
    fn default() -> Self {
        Self {
            prompts: 16,
            views: 8,
            jitter: 0.05,
            eval_views: 16,
            widths: Widths::DESK,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaskerRun {
    pub params: HashNetworkParams,
    pub stage1: TrainLog,
    pub stage2: TrainLog,
    /// Mean same-prompt Hamming distance on fresh views.
    pub intra: f64,
    /// Mean cross-prompt Hamming distance on fresh views.
    pub cross: f64,
}

/// Dataset synthesis, both training stages, and evaluation on fresh views of
/// the same prompts, all drawn from streams of `key`.
pub fn train_desk_masker(key: &KeyBundle, setup: &DeskSetup, cfg: &TrainConfig) -> Result<MaskerRun> {
    let data = synth_dataset(
        &mut derive_stream(key, "masker-data", 0),
        setup.prompts,
        setup.views,
        setup.widths.input,
        setup.jitter,
    )?;
    let init = HashNetworkParams::init(setup.widths, &mut derive_stream(key, "masker-init", 0))?;
    let (p1, stage1) = train_masker(&data, 1, &init, cfg, &mut derive_stream(key, "masker-train", 1))?;
    let (params, stage2) = train_masker(&data, 2, &p1, cfg, &mut derive_stream(key, "masker-train", 2))?;
    let fresh = data.fresh_views(&mut derive_stream(key, "masker-eval", 0), setup.eval_views);
    let (intra, cross) = code_separation(&params, &fresh)?;
    Ok(MaskerRun {
        params,
        stage1,
        stage2,
        intra,
        cross,
    })
}
