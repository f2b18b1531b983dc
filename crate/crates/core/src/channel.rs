//! Latent-level channels: generation→inversion error, image distortions, and
//! the two black-box forgeries.
//!
//! Every channel is `ẑ = α·z + √(1-α²)·ε` with fresh standard normal `ε`,
//! which keeps standard-normal marginals for Gaussian input at any `α`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::code::{Message, SemanticCode};
use crate::error::{Error, Result};
use crate::exec::{map_trials, Execution};
use crate::latent::Latent;
use crate::rng::{derive_stream, KeyBundle, RngStream};
use crate::schemes::{SchemeConfig, SchemeId, Watermarker};
use crate::semantic::Oracle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub name: String,
    pub alpha: f64,
}

impl ChannelConfig {
    pub fn new(name: impl Into<String>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            name: name.into(),
            alpha,
        })
    }

    pub fn identity() -> Self {
        Self {
            name: "none".into(),
            alpha: 1.0,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("{alpha} not in [0, 1]")));
    }
    Ok(())
}

/// `α·z + √(1-α²)·ε`. At `α = 1` the input is returned unchanged and no
/// randomness is drawn.
pub fn channel_apply(z: &Latent, alpha: f64, stream: &mut RngStream) -> Result<Latent> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(z.clone());
    }
    let beta = (1.0 - alpha * alpha).sqrt();
    let noise = stream.gaussian_vec(z.shape().len());
    let values = z.as_slice().iter().zip(noise).map(|(v, e)| alpha * v + beta * e).collect();
    Latent::from_vec(z.shape(), values)
}

/// Base-GS bit accuracies under each distortion (SDP robustness table), the
/// calibration targets for the channel strength.
pub const DISTORTION_TARGETS: [(&str, f64); 7] = [
    ("none", 1.0),
    ("jpeg", 0.9996),
    ("brightness", 0.9966),
    ("gaublur", 0.9966),
    ("gaunoise", 0.9989),
    ("medfilter", 0.9984),
    ("resize", 0.9999),
];

/// Targets at or below `0.5 + CHANCE_MARGIN` are indistinguishable from chance.
pub const CHANCE_MARGIN: f64 = 0.01;

/// Allowed gap between achieved and target accuracy.
pub const CALIBRATION_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationStatus {
    Calibrated,
    /// Best achievable accuracy misses the target by more than the tolerance.
    OutOfTolerance,
    /// Target at chance level or above 1.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationEntry {
    pub name: String,
    pub target: f64,
    pub alpha: Option<f64>,
    pub achieved: Option<f64>,
    pub status: CalibrationStatus,
}

/// Common-random-number trials for GS_LITE: trial `t` always uses the same
/// message, latent and channel noise, so accuracy is a deterministic,
/// essentially monotone function of `α`. Latents and noise are drawn once.
pub struct GsProbe {
    wm: Watermarker,
    samples: Vec<ProbeSample>,
    exec: Execution,
}

struct ProbeSample {
    msg: Message,
    z: Latent,
    noise: Vec<f64>,
}

impl GsProbe {
    pub fn new(key: &KeyBundle, cfg: &SchemeConfig, trials: usize, exec: Execution) -> Result<Self> {
        if trials == 0 {
            return Err(Error::invalid("trials", "calibration needs at least one trial"));
        }
        let wm = Watermarker::new(SchemeId::GsLite, &key.derive(SchemeId::GsLite.name()), cfg.clone())?;
        let samples = map_trials(trials, exec, |t| {
            let t = t as u64;
            let msg = trial_message(key, t, wm.config().message_bits);
            let z = wm.embed(Some(&msg), &mut derive_stream(key, "trial-noise", t))?;
            let noise = derive_stream(key, "trial-channel", t).gaussian_vec(z.shape().len());
            Ok(ProbeSample { msg, z, noise })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Self { wm, samples, exec })
    }

    /// Mean GS_LITE bit accuracy after a channel of strength `alpha`; equal to
    /// what [`channel_apply`] with the `trial-channel` streams would give.
    pub fn accuracy(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let beta = (1.0 - alpha * alpha).sqrt();
        let accs = map_trials(self.samples.len(), self.exec, |t| {
            let s = &self.samples[t];
            let z_hat = if alpha == 1.0 {
                s.z.clone()
            } else {
                let values = s.z.as_slice().iter().zip(&s.noise).map(|(v, e)| alpha * v + beta * e).collect();
                Latent::from_vec(s.z.shape(), values)?
            };
            Ok(self.wm.decode(&z_hat, Some(&s.msg))?.bit_accuracy.expect("GS reports accuracy"))
        });
        let accs = accs.into_iter().collect::<Result<Vec<f64>>>()?;
        Ok(accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Smallest `α` (to bisection precision) reaching `target` accuracy.
    pub fn calibrate(&self, name: &str, target: f64) -> Result<CalibrationEntry> {
        let entry = |alpha, achieved, status| CalibrationEntry {
            name: name.to_string(),
            target,
            alpha,
            achieved,
            status,
        };
        if !(target > 0.5 + CHANCE_MARGIN && target <= 1.0) {
            return Ok(entry(None, None, CalibrationStatus::Unreachable));
        }
        if target == 1.0 {
            return Ok(entry(Some(1.0), Some(self.accuracy(1.0)?), CalibrationStatus::Calibrated));
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.accuracy(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let achieved = self.accuracy(hi)?;
        let status = if (achieved - target).abs() <= CALIBRATION_TOLERANCE {
            CalibrationStatus::Calibrated
        } else {
            CalibrationStatus::OutOfTolerance
        };
        Ok(entry(Some(hi), Some(achieved), status))
    }
}

/// Calibrates one channel strength per named target.
pub fn calibrate_distortions(
    targets: &[(&str, f64)],
    key: &KeyBundle,
    cfg: &SchemeConfig,
    trials: usize,
    exec: Execution,
) -> Result<Vec<CalibrationEntry>> {
    let probe = GsProbe::new(key, cfg, trials, exec)?;
    targets.iter().map(|&(name, target)| probe.calibrate(name, target)).collect()
}

/// Payload of trial `t`.
pub fn trial_message(key: &KeyBundle, t: u64, bits: usize) -> Message {
    Message::new(derive_stream(key, "trial-msg", t).bits(bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Reprompt,
    Imprint,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Reprompt => "reprompt",
            AttackKind::Imprint => "imprint",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reprompt" => Ok(AttackKind::Reprompt),
            "imprint" => Ok(AttackKind::Imprint),
            other => Err(Error::invalid("attack", format!("unknown attack {other:?}"))),
        }
    }
}

/// Attacker fidelity levels standing in for 50/100/150 imprint steps.
pub const ATTACK_FIDELITIES: [f64; 3] = [0.95, 0.97, 0.99];

/// Prompt-id offsets keeping attacker prompts disjoint from trial prompts.
const FRESH_PROMPT_BASE: u64 = 1 << 40;
const COVER_PROMPT_BASE: u64 = 2 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Correlation of the attacker's latent estimate with the stolen latent.
    pub alpha_att: f64,
}

fn forge(z: &Latent, spec: &AttackSpec, stream: &mut RngStream) -> Result<Latent> {
    channel_apply(z, spec.alpha_att, stream)
}

/// Reuses a stolen latent to generate new content: the latent survives up to
/// the attacker's fidelity, the semantics are those of a fresh prompt.
pub fn forge_reprompt(
    z_w_sem: &Latent,
    spec: &AttackSpec,
    oracle: &Oracle,
    trial: u64,
    stream: &mut RngStream,
) -> Result<(Latent, SemanticCode)> {
    if spec.kind != AttackKind::Reprompt {
        return Err(Error::invalid("attack", "forge_reprompt needs a reprompt spec"));
    }
    Ok((forge(z_w_sem, spec, stream)?, oracle.instance(FRESH_PROMPT_BASE + trial, 0)))
}

/// Imprints a stolen latent onto a cover image: same latent model, with the
/// cover image's semantics.
pub fn forge_imprint(
    z_w_sem: &Latent,
    spec: &AttackSpec,
    oracle: &Oracle,
    trial: u64,
    stream: &mut RngStream,
) -> Result<(Latent, SemanticCode)> {
    if spec.kind != AttackKind::Imprint {
        return Err(Error::invalid("attack", "forge_imprint needs an imprint spec"));
    }
    Ok((forge(z_w_sem, spec, stream)?, oracle.instance(COVER_PROMPT_BASE + trial, 1)))
}

/// Dispatches on `spec.kind`.
pub fn forge_latent(
    z_w_sem: &Latent,
    spec: &AttackSpec,
    oracle: &Oracle,
    trial: u64,
    stream: &mut RngStream,
) -> Result<(Latent, SemanticCode)> {
    match spec.kind {
        AttackKind::Reprompt => forge_reprompt(z_w_sem, spec, oracle, trial, stream),
        AttackKind::Imprint => forge_imprint(z_w_sem, spec, oracle, trial, stream),
    }
}
