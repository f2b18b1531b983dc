//! Grid runner: embed → bind → (attack) → channel → verify, per cell and trial.
//!
//! All randomness comes from the master key of `seed`:
//! - trial streams `trial-msg`, `trial-noise`, `trial-attack` and
//!   `trial-channel`, indexed by trial, are shared by every cell, so cells that
//!   differ only in σ or α see the same latents (common random numbers);
//!   channel noise is drawn in the frame of the embedding mask, so it too is
//!   shared across σ;
//! - scheme deployments use `master.derive(scheme name)`;
//! - the semantic oracle uses `master.derive("oracle")`, and the TR null
//!   population uses `master.derive("null")`.

use serde::{Deserialize, Serialize};

use crate::channel::{channel_apply, forge_latent, trial_message, AttackKind, AttackSpec, ChannelConfig};
use crate::error::{Error, Result};
use crate::exec::{map_trials, Execution};
use crate::mask::{bind, unbind, MaskCodec, MaskConfig};
use crate::rng::{derive_stream, KeyBundle};
use crate::schemes::{calibrate_threshold, sembind_generate, sembind_verify, SchemeConfig, SchemeId, Watermarker};
use crate::semantic::{Oracle, OracleConfig};

/// A σ entry: a fixed ratio or the scheme's own default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    SchemeDefault,
    Value(f64),
}

impl Sigma {
    pub fn resolve(self, scheme: SchemeId) -> f64 {
        match self {
            Sigma::SchemeDefault => scheme.default_sigma(),
            Sigma::Value(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub schemes: Vec<SchemeId>,
    pub sigmas: Vec<Sigma>,
    /// Verifier-side channels (inversion error, distortions).
    pub channels: Vec<ChannelConfig>,
    pub attack: Option<AttackKind>,
    /// Attacker fidelities; only read when `attack` is set.
    pub attack_alphas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Target false-positive rate of the bitwise schemes.
    pub fpr: f64,
    /// TR_LITE uses an empirical quantile and cannot certify `fpr`.
    pub tr_fpr: f64,
    pub tr_null_trials: usize,
    pub scheme: SchemeConfig,
    pub oracle: OracleConfig,
    pub perm_index: u64,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            schemes: SchemeId::ALL.to_vec(),
            sigmas: vec![Sigma::SchemeDefault],
            channels: vec![ChannelConfig::identity()],
            attack: None,
            attack_alphas: Vec::new(),
            trials: 100,
            seed,
            fpr: 1e-6,
            tr_fpr: 1e-2,
            tr_null_trials: 1000,
            scheme: SchemeConfig::default(),
            oracle: OracleConfig::default(),
            perm_index: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "at least one scheme required"));
        }
        if self.sigmas.is_empty() {
            return Err(Error::invalid("sigmas", "at least one sigma required"));
        }
        for s in &self.sigmas {
            if let Sigma::Value(v) = s {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::invalid("sigmas", format!("sigma {v} not in [0, 1]")));
                }
            }
        }
        if self.channels.is_empty() {
            return Err(Error::invalid("channels", "at least one channel required"));
        }
        for c in &self.channels {
            if !(0.0..=1.0).contains(&c.alpha) {
                return Err(Error::invalid("channels", format!("channel {} alpha {} not in [0, 1]", c.name, c.alpha)));
            }
        }
        if self.attack.is_some() {
            if self.attack_alphas.is_empty() {
                return Err(Error::invalid("attack_alphas", "an attack needs at least one fidelity"));
            }
            for a in &self.attack_alphas {
                if !(0.0..=1.0).contains(a) {
                    return Err(Error::invalid("attack_alphas", format!("{a} not in [0, 1]")));
                }
            }
        }
        for (name, fpr) in [("fpr", self.fpr), ("tr_fpr", self.tr_fpr)] {
            if !(fpr > 0.0 && fpr <= 1.0) {
                return Err(Error::invalid(name, format!("{fpr} not in (0, 1]")));
            }
        }
        self.oracle.validate()
    }

    fn attack_levels(&self) -> Vec<Option<f64>> {
        match self.attack {
            None => vec![None],
            Some(_) => self.attack_alphas.iter().copied().map(Some).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scheme: SchemeId,
    pub sigma: f64,
    pub channel: String,
    pub channel_alpha: f64,
    pub attack: Option<AttackKind>,
    pub attack_alpha: Option<f64>,
    pub trial: u64,
    pub score: f64,
    pub threshold: f64,
    pub accepted: bool,
    pub bit_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scheme: SchemeId,
    pub sigma: f64,
    pub channel: String,
    pub channel_alpha: f64,
    pub attack: Option<AttackKind>,
    pub attack_alpha: Option<f64>,
    pub trials: usize,
    pub accepted: usize,
    pub threshold: f64,
    pub det_rate: Option<f64>,
    pub mean_bit_accuracy: Option<f64>,
    pub std_bit_accuracy: Option<f64>,
}

impl CellSummary {
    /// Aggregates rows of one cell, in trial order. Bit-accuracy statistics
    /// are `None` when no row carries one; the standard deviation is the
    /// population one.
    pub fn from_rows(rows: &[ReportRow], threshold: f64) -> Option<Self> {
        let first = rows.first()?;
        let accepted = rows.iter().filter(|r| r.accepted).count();
        let accs: Vec<f64> = rows.iter().filter_map(|r| r.bit_accuracy).collect();
        let mean = (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64);
        let std = mean.map(|m| (accs.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / accs.len() as f64).sqrt());
        Some(Self {
            scheme: first.scheme,
            sigma: first.sigma,
            channel: first.channel.clone(),
            channel_alpha: first.channel_alpha,
            attack: first.attack,
            attack_alpha: first.attack_alpha,
            trials: rows.len(),
            accepted,
            threshold,
            det_rate: Some(accepted as f64 / rows.len() as f64),
            mean_bit_accuracy: mean,
            std_bit_accuracy: std,
        })
    }

    fn empty(cell: &Cell, threshold: f64) -> Self {
        Self {
            scheme: cell.scheme,
            sigma: cell.sigma,
            channel: cell.channel.name.clone(),
            channel_alpha: cell.channel.alpha,
            attack: cell.attack.map(|a| a.kind),
            attack_alpha: cell.attack.map(|a| a.alpha_att),
            trials: 0,
            accepted: 0,
            threshold,
            det_rate: None,
            mean_bit_accuracy: None,
            std_bit_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone)]
struct Cell {
    scheme: SchemeId,
    sigma: f64,
    channel: ChannelConfig,
    attack: Option<AttackSpec>,
}

/// Per-scheme state shared by all cells of that scheme.
struct Deployment {
    wm: Watermarker,
    threshold: f64,
}

fn deploy(cfg: &ExperimentConfig, master: &KeyBundle, scheme: SchemeId, exec: Execution) -> Result<Deployment> {
    let wm = Watermarker::new(scheme, &master.derive(scheme.name()), cfg.scheme.clone())?;
    let fpr = if scheme == SchemeId::TrLite { cfg.tr_fpr } else { cfg.fpr };
    let threshold = calibrate_threshold(&wm, fpr, cfg.tr_null_trials, &master.derive("null"), exec)?;
    Ok(Deployment { wm, threshold })
}

/// Runs every cell in the order scheme → σ → channel → attack fidelity.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentReport> {
    cfg.validate()?;
    let master = KeyBundle::from_seed(cfg.seed);
    let oracle = Oracle::new(cfg.oracle, &master.derive("oracle"))?;
    let mut report = ExperimentReport {
        rows: Vec::new(),
        cells: Vec::new(),
    };
    for &scheme in &cfg.schemes {
        let dep = deploy(cfg, &master, scheme, exec)?;
        for sigma in &cfg.sigmas {
            let sigma = sigma.resolve(scheme);
            let mask_cfg = MaskConfig {
                perm_index: cfg.perm_index,
                ..MaskConfig::new(cfg.oracle.bits, cfg.scheme.shape, sigma)?
            };
            let codec = MaskCodec::new(mask_cfg, dep.wm.key())?;
            for channel in &cfg.channels {
                for alpha_att in cfg.attack_levels() {
                    let cell = Cell {
                        scheme,
                        sigma,
                        channel: channel.clone(),
                        attack: cfg.attack.zip(alpha_att).map(|(kind, alpha_att)| AttackSpec { kind, alpha_att }),
                    };
                    let rows = map_trials(cfg.trials, exec, |t| {
                        run_trial(&cell, &dep, &codec, &oracle, &master, t as u64)
                    })
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                    let summary =
                        CellSummary::from_rows(&rows, dep.threshold).unwrap_or_else(|| CellSummary::empty(&cell, dep.threshold));
                    report.cells.push(summary);
                    report.rows.extend(rows);
                }
            }
        }
    }
    Ok(report)
}

fn run_trial(
    cell: &Cell,
    dep: &Deployment,
    codec: &MaskCodec,
    oracle: &Oracle,
    master: &KeyBundle,
    t: u64,
) -> Result<ReportRow> {
    let wm = &dep.wm;
    let msg = wm
        .scheme()
        .carries_message()
        .then(|| trial_message(master, t, wm.config().message_bits));
    let code = oracle.instance(t, 0);
    let mask = codec.expand(&code)?;
    let z = sembind_generate(wm, msg.as_ref(), &code, codec, &mut derive_stream(master, "trial-noise", t))?;
    let (z, code_hat) = match &cell.attack {
        None => (z, oracle.distort(&code, t)),
        Some(spec) => forge_latent(&z, spec, oracle, t, &mut derive_stream(master, "trial-attack", t))?,
    };
    // The channel draws its noise as S⊙η. That is the same law as η, and it
    // leaves the noise seen after a correct unbind independent of σ.
    let noisy = channel_apply(&unbind(&z, &mask)?, cell.channel.alpha, &mut derive_stream(master, "trial-channel", t))?;
    let z_hat = bind(&noisy, &mask)?;
    let det = sembind_verify(wm, &z_hat, &code_hat, codec, msg.as_ref(), dep.threshold)?;
    Ok(ReportRow {
        scheme: cell.scheme,
        sigma: cell.sigma,
        channel: cell.channel.name.clone(),
        channel_alpha: cell.channel.alpha,
        attack: cell.attack.map(|a| a.kind),
        attack_alpha: cell.attack.map(|a| a.alpha_att),
        trial: t,
        score: det.score,
        threshold: det.threshold,
        accepted: det.accepted,
        bit_accuracy: det.bit_accuracy,
    })
}
