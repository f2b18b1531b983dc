//! Subcommand implementations. Each returns the files it wrote and a one-line
//! result for the terminal.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{Map, Value};

use sembind::channel::{
    AttackKind, CalibrationEntry, CalibrationStatus, ChannelConfig, GsProbe, ATTACK_FIDELITIES, DISTORTION_TARGETS,
};
use sembind::code::Bits;
use sembind::experiment::{run_experiment, CellSummary, ExperimentConfig, ExperimentReport, Sigma};
use sembind::mask::{bind, MaskCodec, MaskConfig, SignMask};
use sembind::schemes::{sembind_generate, RingMetric};
use sembind::semantic::{oracle_metrics, train_desk_masker, DeskSetup, MetricProtocol, MetricReport, Oracle, OracleConfig, TrainConfig};
use sembind::statistics::{binomial_tail, min_threshold, undetectability_suite, BatteryConfig, NormalityReport, SuiteMode};
use sembind::{derive_stream, gaussian_latent, Execution, KeyBundle, LatentShape, SchemeConfig, SchemeId, Watermarker};

use crate::config::RawConfig;
use crate::error::{HarnessError, Result};
use crate::report::{self, Format, CELL_HEADER, ROW_HEADER};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub format: Format,
    pub exec: Execution,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub message: String,
    pub files: Vec<PathBuf>,
}

const ALL_SCHEMES: &str = "tr, gs, prc, gspp";
const SWEEP_SIGMAS: &str = "0, 0.25, 0.5, 0.75, 1";

fn stem(raw: &RawConfig, command: &str) -> Result<String> {
    let name = raw.get("name").unwrap_or(command).to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(HarnessError::config(format!("field `name`: {name:?} is not a valid file stem")));
    }
    Ok(name)
}

pub fn scheme_config(raw: &RawConfig) -> Result<SchemeConfig> {
    let mut cfg = SchemeConfig::default();
    if let Some(shape) = raw.parsed_opt::<LatentShape>("shape")? {
        cfg.shape = shape;
    }
    cfg.message_bits = raw.parsed("message_bits", cfg.message_bits)?;
    cfg.ring_metric = match raw.get("ring_metric").unwrap_or("mean_abs") {
        "mean_abs" => RingMetric::MeanAbs,
        "l2" => RingMetric::L2,
        other => return Err(HarnessError::config(format!("field `ring_metric`: unknown metric {other:?}"))),
    };
    Ok(cfg)
}

pub fn oracle_config(raw: &RawConfig) -> Result<OracleConfig> {
    let d = OracleConfig::default();
    let cfg = OracleConfig {
        bits: raw.parsed("code_bits", d.bits)?,
        p_intra: raw.parsed("p_intra", d.p_intra)?,
        q_verify: raw.parsed("q_verify", d.q_verify)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// A channel entry is `none`, a distortion name (calibrated), or `name:alpha`.
enum ChannelRequest {
    Fixed(ChannelConfig),
    Calibrated { name: String, target: f64 },
}

fn channel_requests(raw: &RawConfig, default: &str) -> Result<Vec<ChannelRequest>> {
    raw.list("channels", default)
        .into_iter()
        .map(|item| {
            if let Some((name, alpha)) = item.split_once(':') {
                let alpha: f64 = alpha
                    .trim()
                    .parse()
                    .map_err(|_| HarnessError::config(format!("field `channels`: bad alpha in {item:?}")))?;
                return Ok(ChannelRequest::Fixed(ChannelConfig::new(name.trim(), alpha)?));
            }
            match DISTORTION_TARGETS.iter().find(|(n, _)| *n == item) {
                Some(&(name, 1.0)) => Ok(ChannelRequest::Fixed(ChannelConfig::new(name, 1.0)?)),
                Some(&(name, target)) => Ok(ChannelRequest::Calibrated {
                    name: name.into(),
                    target,
                }),
                None => Err(HarnessError::config(format!("field `channels`: unknown distortion {item:?}"))),
            }
        })
        .collect()
}

/// Resolves channel requests, calibrating named distortions against GS_LITE
/// with the experiment's own trial streams.
fn resolve_channels(
    requests: Vec<ChannelRequest>,
    master: &KeyBundle,
    scheme: &SchemeConfig,
    trials: usize,
    exec: Execution,
) -> Result<(Vec<ChannelConfig>, Vec<CalibrationEntry>)> {
    let needs_probe = requests.iter().any(|r| matches!(r, ChannelRequest::Calibrated { .. }));
    let probe = needs_probe.then(|| GsProbe::new(master, scheme, trials, exec)).transpose()?;
    let mut channels = Vec::new();
    let mut table = Vec::new();
    for r in requests {
        match r {
            ChannelRequest::Fixed(c) => channels.push(c),
            ChannelRequest::Calibrated { name, target } => {
                let entry = probe.as_ref().expect("probe built").calibrate(&name, target)?;
                let alpha = entry.alpha.ok_or_else(|| {
                    HarnessError::Invariant(format!("distortion {name} cannot be calibrated to {target}"))
                })?;
                channels.push(ChannelConfig::new(name, alpha)?);
                table.push(entry);
            }
        }
    }
    Ok((channels, table))
}

fn parse_sigmas(raw: &RawConfig, default: &str) -> Result<Vec<Sigma>> {
    raw.list("sigmas", default)
        .iter()
        .map(|s| match s.as_str() {
            "default" => Ok(Sigma::SchemeDefault),
            v => v
                .parse()
                .map(Sigma::Value)
                .map_err(|_| HarnessError::config(format!("field `sigmas`: cannot parse {v:?}"))),
        })
        .collect()
}

/// Grid settings shared by the experiment commands.
pub struct GridDefaults<'a> {
    pub sigmas: &'a str,
    pub channels: &'a str,
    pub attack: Option<AttackKind>,
}

/// Builds the experiment grid; distortion channels are calibrated here.
pub fn experiment_config(
    raw: &RawConfig,
    command: &str,
    defaults: &GridDefaults,
    exec: Execution,
) -> Result<(ExperimentConfig, Vec<CalibrationEntry>)> {
    let seed = raw.seed()?;
    let mut cfg = ExperimentConfig::new(stem(raw, command)?, seed);
    cfg.schemes = raw.parsed_list("schemes", ALL_SCHEMES)?;
    cfg.sigmas = parse_sigmas(raw, defaults.sigmas)?;
    cfg.trials = raw.parsed("trials", cfg.trials)?;
    cfg.fpr = raw.parsed("fpr", cfg.fpr)?;
    cfg.tr_fpr = raw.parsed("tr_fpr", cfg.tr_fpr)?;
    cfg.tr_null_trials = raw.parsed("tr_null_trials", cfg.tr_null_trials)?;
    cfg.perm_index = raw.parsed("perm_index", cfg.perm_index)?;
    cfg.scheme = scheme_config(raw)?;
    cfg.oracle = oracle_config(raw)?;
    cfg.attack = match raw.get("attack") {
        None => defaults.attack,
        Some("none") => None,
        Some(a) => Some(a.parse::<AttackKind>()?),
    };
    if cfg.attack.is_some() {
        let fid = ATTACK_FIDELITIES.map(|a| a.to_string()).join(",");
        cfg.attack_alphas = raw.parsed_list("attack_alphas", &fid)?;
    }
    let calibration_trials = raw.parsed("calibration_trials", 200usize)?;
    let requests = channel_requests(raw, defaults.channels)?;
    let (channels, table) =
        resolve_channels(requests, &KeyBundle::from_seed(seed), &cfg.scheme, calibration_trials, exec)?;
    cfg.channels = channels;
    cfg.validate()?;
    Ok((cfg, table))
}

fn write_experiment(
    report: &ExperimentReport,
    stem: &str,
    opts: &RunOptions,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    files.push(report::write_table(&opts.out_dir, &format!("{stem}.rows"), ROW_HEADER, &report.rows, opts.format)?);
    files.push(report::write_table(&opts.out_dir, &format!("{stem}.cells"), CELL_HEADER, &report.cells, opts.format)?);
    Ok(())
}

fn write_summary(
    command: &str,
    raw: &RawConfig,
    stem: &str,
    extra: Map<String, Value>,
    opts: &RunOptions,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let seed = raw.seed()?;
    let path = opts.out_dir.join(format!("{stem}.summary.json"));
    report::write_file(&path, &report::json_bytes(&report::summary(command, raw, seed, extra))?)?;
    files.push(path);
    Ok(())
}

fn experiment_extra(report: &ExperimentReport, calibration: &[CalibrationEntry]) -> Result<Map<String, Value>> {
    let mut m = Map::new();
    m.insert("rows".into(), report.rows.len().into());
    m.insert("cells".into(), report::to_value(&report.cells)?);
    if !calibration.is_empty() {
        m.insert("calibration".into(), report::to_value(&calibration)?);
    }
    Ok(m)
}

fn cells_line(cells: &[CellSummary]) -> String {
    let det: usize = cells.iter().map(|c| c.accepted).sum();
    let total: usize = cells.iter().map(|c| c.trials).sum();
    format!("{} cells, {det}/{total} accepted", cells.len())
}

/// `robustness` and `forge`: one grid, rows + cells + summary.
pub fn grid_command(command: &str, raw: &RawConfig, defaults: &GridDefaults, opts: &RunOptions) -> Result<Outcome> {
    let (cfg, calibration) = experiment_config(raw, command, defaults, opts.exec)?;
    let report = run_experiment(&cfg, opts.exec)?;
    let mut files = Vec::new();
    write_experiment(&report, &cfg.name, opts, &mut files)?;
    write_summary(command, raw, &cfg.name, experiment_extra(&report, &calibration)?, opts, &mut files)?;
    Ok(Outcome {
        message: format!("{command} {}: {}", cfg.name, cells_line(&report.cells)),
        files,
    })
}

pub const ROBUSTNESS: GridDefaults<'static> = GridDefaults {
    sigmas: "0, default",
    channels: "none, jpeg, brightness, gaublur, gaunoise, medfilter, resize",
    attack: None,
};

pub const FORGE: GridDefaults<'static> = GridDefaults {
    sigmas: "0, default",
    channels: "none",
    attack: Some(AttackKind::Imprint),
};

pub const SWEEP: GridDefaults<'static> = GridDefaults {
    sigmas: SWEEP_SIGMAS,
    channels: "jpeg",
    attack: Some(AttackKind::Imprint),
};

/// One metric along the σ axis of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub scheme: SchemeId,
    pub channel: String,
    pub attack_alpha: Option<f64>,
    pub metric: &'static str,
    pub sigmas: Vec<f64>,
    pub values: Vec<f64>,
    pub non_increasing: bool,
}

/// Groups cells by everything but σ and checks each metric is non-increasing
/// in σ. Benign cells contribute mean bit accuracy (when the scheme has a
/// payload); attack cells contribute acceptance rate.
pub fn sweep_series(cells: &[CellSummary]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for c in cells {
        let (metric, value) = match c.attack {
            Some(_) => ("forged_acceptance", c.det_rate),
            None => ("clean_accuracy", c.mean_bit_accuracy),
        };
        let Some(value) = value else { continue };
        let existing = out.iter_mut().find(|s| {
            s.scheme == c.scheme && s.channel == c.channel && s.attack_alpha == c.attack_alpha && s.metric == metric
        });
        let series = match existing {
            Some(s) => s,
            None => {
                out.push(Series {
                    scheme: c.scheme,
                    channel: c.channel.clone(),
                    attack_alpha: c.attack_alpha,
                    metric,
                    sigmas: Vec::new(),
                    values: Vec::new(),
                    non_increasing: true,
                });
                out.last_mut().expect("just pushed")
            }
        };
        series.sigmas.push(c.sigma);
        series.values.push(value);
    }
    for s in &mut out {
        let mut order: Vec<usize> = (0..s.sigmas.len()).collect();
        order.sort_by(|&a, &b| s.sigmas[a].total_cmp(&s.sigmas[b]));
        s.non_increasing = order.windows(2).all(|w| s.values[w[1]] <= s.values[w[0]]);
    }
    out
}

/// Runs the benign grid and the attack grid of a σ sweep; rows are benign
/// first, then attack.
pub fn run_sweep(raw: &RawConfig, opts: &RunOptions) -> Result<(ExperimentConfig, ExperimentReport, Vec<CalibrationEntry>)> {
    let (cfg, calibration) = experiment_config(raw, "sweep-sigma", &SWEEP, opts.exec)?;
    let benign = ExperimentConfig {
        attack: None,
        ..cfg.clone()
    };
    let mut report = run_experiment(&benign, opts.exec)?;
    if cfg.attack.is_some() {
        let forged = run_experiment(&cfg, opts.exec)?;
        report.rows.extend(forged.rows);
        report.cells.extend(forged.cells);
    }
    Ok((cfg, report, calibration))
}

pub fn sweep_command(raw: &RawConfig, opts: &RunOptions) -> Result<Outcome> {
    let (cfg, report, calibration) = run_sweep(raw, opts)?;
    let series = sweep_series(&report.cells);
    let monotone = series.iter().all(|s| s.non_increasing);
    let mut files = Vec::new();
    write_experiment(&report, &cfg.name, opts, &mut files)?;
    let mut extra = experiment_extra(&report, &calibration)?;
    extra.insert("series".into(), report::to_value(&series)?);
    extra.insert("monotone".into(), monotone.into());
    write_summary("sweep-sigma", raw, &cfg.name, extra, opts, &mut files)?;
    Ok(Outcome {
        message: format!(
            "sweep-sigma {}: {}, monotone: {}",
            cfg.name,
            cells_line(&report.cells),
            if monotone { "yes" } else { "no" }
        ),
        files,
    })
}

pub fn calibrate_command(raw: &RawConfig, opts: &RunOptions) -> Result<Outcome> {
    let seed = raw.seed()?;
    let name = stem(raw, "calibrate")?;
    let scheme = scheme_config(raw)?;
    let trials = raw.parsed("calibration_trials", 200usize)?;
    let wanted = raw.list("channels", &DISTORTION_TARGETS.map(|(n, _)| n).join(","));
    let targets = wanted
        .iter()
        .map(|w| {
            DISTORTION_TARGETS
                .iter()
                .copied()
                .find(|(n, _)| n == w)
                .ok_or_else(|| HarnessError::config(format!("field `channels`: unknown distortion {w:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let probe = GsProbe::new(&KeyBundle::from_seed(seed), &scheme, trials, opts.exec)?;
    let table = targets
        .iter()
        .map(|&(n, t)| probe.calibrate(n, t))
        .collect::<sembind::Result<Vec<_>>>()?;
    let mut files = vec![report::write_table(
        &opts.out_dir,
        &format!("{name}.calibration"),
        &["name", "target", "alpha", "achieved", "status"],
        &table,
        opts.format,
    )?];
    let flagged = table.iter().filter(|e| e.status != CalibrationStatus::Calibrated).count();
    let mut extra = Map::new();
    extra.insert("calibration".into(), report::to_value(&table)?);
    write_summary("calibrate", raw, &name, extra, opts, &mut files)?;
    Ok(Outcome {
        message: format!("calibrate {name}: {} distortions, {flagged} flagged", table.len()),
        files,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsResult {
    pub oracle: MetricReport,
    /// Mean Hamming distance between two independently keyed oracles' codes
    /// for the same prompt.
    pub cross_oracle_mean: f64,
}

pub fn compute_metrics(raw: &RawConfig, exec: Execution) -> Result<MetricsResult> {
    let master = KeyBundle::from_seed(raw.seed()?);
    let cfg = oracle_config(raw)?;
    let d = MetricProtocol::default();
    let protocol = MetricProtocol {
        prompts: raw.parsed("prompts", d.prompts)?,
        originals: raw.parsed("originals", d.originals)?,
        distortions: raw.parsed("distortions", d.distortions)?,
        cross: raw.parsed("cross", d.cross)?,
    };
    let oracle = Oracle::new(cfg, &master.derive("oracle"))?;
    let report = oracle_metrics(&oracle, protocol, exec)?;
    let a = Oracle::new(cfg, &master.derive("oracle-a"))?;
    let b = Oracle::new(cfg, &master.derive("oracle-b"))?;
    let n = protocol.prompts.max(1);
    let cross = (0..n as u64)
        .map(|p| a.instance(p, 0).hamming(&b.instance(p, 0)) as f64)
        .sum::<f64>()
        / n as f64;
    Ok(MetricsResult {
        oracle: report,
        cross_oracle_mean: cross,
    })
}

#[derive(Serialize)]
struct MetricRow<'a> {
    metric: &'a str,
    value: Option<f64>,
}

pub fn metrics_command(raw: &RawConfig, opts: &RunOptions) -> Result<Outcome> {
    let name = stem(raw, "metrics")?;
    let m = compute_metrics(raw, opts.exec)?;
    let o = &m.oracle;
    let rows = [
        MetricRow { metric: "intra_orig", value: Some(o.intra_orig) },
        MetricRow { metric: "ref_vs_dist", value: Some(o.ref_vs_dist) },
        MetricRow { metric: "all_pairs", value: Some(o.all_pairs) },
        MetricRow { metric: "bit_entropy", value: Some(o.bit_entropy) },
        MetricRow { metric: "cross_min", value: o.cross_min },
        MetricRow { metric: "cross_mean", value: o.cross_mean },
        MetricRow { metric: "cross_max", value: o.cross_max },
        MetricRow { metric: "cross_entropy", value: o.cross_entropy },
        MetricRow { metric: "cross_oracle_mean", value: Some(m.cross_oracle_mean) },
    ];
    let mut files = vec![report::write_table(
        &opts.out_dir,
        &format!("{name}.metrics"),
        &["metric", "value"],
        &rows,
        opts.format,
    )?];
    let mut extra = Map::new();
    extra.insert("metrics".into(), report::to_value(&m)?);
    write_summary("metrics", raw, &name, extra, opts, &mut files)?;
    Ok(Outcome {
        message: format!(
            "metrics {name}: intra-orig {:.2}, ref-vs-dist {:.2}, cross-oracle {:.2}",
            o.intra_orig, o.ref_vs_dist, m.cross_oracle_mean
        ),
        files,
    })
}

/// One generator of the undetectability battery and the verdict it should get.
#[derive(Debug, Clone, Serialize)]
pub struct BatteryCase {
    pub case: &'static str,
    pub expect_pass: bool,
    pub report: NormalityReport,
}

impl BatteryCase {
    pub fn as_expected(&self) -> bool {
        self.report.passed == self.expect_pass
    }
}

/// The battery cases behind the undetectability claims:
/// plain Gaussian, GS_LITE with per-sample keys, GS_LITE + SemBind with
/// independent per-sample codes, TR_LITE (fixed ring), and GS_LITE reusing one
/// key and message.
pub fn undetectability_cases(seed: u64, samples: usize, exec: Execution) -> Result<Vec<BatteryCase>> {
    let master = KeyBundle::from_seed(seed).derive("undetectability");
    let scheme = SchemeConfig::default();
    let shape = scheme.shape;
    let battery = BatteryConfig::default();
    let oracle = Oracle::new(OracleConfig::default(), &master.derive("oracle"))?;
    let msg = |i: usize| Bits::new(derive_stream(&master, "msg", i as u64).bits(scheme.message_bits));
    let gs_fixed = Watermarker::new(SchemeId::GsLite, &master.derive("gs-fixed"), scheme.clone())?;
    let fixed_msg = msg(0);
    let tr = Watermarker::new(SchemeId::TrLite, &master.derive("tr"), scheme.clone())?;

    let fresh_gs = |i: usize| -> sembind::Result<Watermarker> {
        Watermarker::new(SchemeId::GsLite, &master.derive(&format!("gs/{i}")), scheme.clone())
    };
    let must = |r: sembind::Result<sembind::Latent>| r.expect("generator inputs are validated");

    let mut cases = Vec::new();
    let mut run = |case, expect_pass, mode, gen: &(dyn Fn(usize) -> sembind::Latent + Sync)| -> Result<()> {
        let report = undetectability_suite(gen, samples, mode, &battery, exec)?;
        cases.push(BatteryCase {
            case,
            expect_pass,
            report,
        });
        Ok(())
    };
    run("gaussian", true, SuiteMode::Single, &|i| {
        gaussian_latent(&mut derive_stream(&master, "gaussian", i as u64), shape)
    })?;
    run("gs", true, SuiteMode::Single, &|i| {
        must(fresh_gs(i).and_then(|wm| wm.embed(Some(&msg(i)), &mut derive_stream(&master, "noise", i as u64))))
    })?;
    run("gs-sembind", true, SuiteMode::Single, &|i| {
        must(fresh_gs(i).and_then(|wm| {
            let codec = MaskCodec::new(MaskConfig::new(oracle.config().bits, shape, 1.0)?, wm.key())?;
            sembind_generate(&wm, Some(&msg(i)), &oracle.instance(i as u64, 0), &codec, &mut derive_stream(&master, "noise", i as u64))
        }))
    })?;
    run("tr", false, SuiteMode::Single, &|i| {
        must(tr.embed(None, &mut derive_stream(&master, "noise", i as u64)))
    })?;
    run("gs-reused-key", false, SuiteMode::Multi, &|i| {
        must(gs_fixed.embed(Some(&fixed_msg), &mut derive_stream(&master, "noise", i as u64)))
    })?;
    Ok(cases)
}

#[derive(Serialize)]
struct BatteryRow {
    case: &'static str,
    mode: SuiteMode,
    expect_pass: bool,
    passed: bool,
    n_samples: usize,
    n_values: usize,
    ks_statistic: f64,
    ks_p_value: f64,
    annulus_min_cv: f64,
    coord_mean_max_abs: Option<f64>,
}

pub fn undetectability_command(raw: &RawConfig, opts: &RunOptions) -> Result<Outcome> {
    let name = stem(raw, "undetectability")?;
    let samples = raw.parsed("samples", 64usize)?;
    let cases = undetectability_cases(raw.seed()?, samples, opts.exec)?;
    let rows: Vec<BatteryRow> = cases
        .iter()
        .map(|c| BatteryRow {
            case: c.case,
            mode: c.report.mode,
            expect_pass: c.expect_pass,
            passed: c.report.passed,
            n_samples: c.report.n_samples,
            n_values: c.report.n_values,
            ks_statistic: c.report.ks_statistic,
            ks_p_value: c.report.ks_p_value,
            annulus_min_cv: c.report.annulus_min_cv,
            coord_mean_max_abs: c.report.coord_mean_max_abs,
        })
        .collect();
    let header = [
        "case",
        "mode",
        "expect_pass",
        "passed",
        "n_samples",
        "n_values",
        "ks_statistic",
        "ks_p_value",
        "annulus_min_cv",
        "coord_mean_max_abs",
    ];
    let mut files = vec![report::write_table(&opts.out_dir, &format!("{name}.battery"), &header, &rows, opts.format)?];
    let expected = cases.iter().filter(|c| c.as_expected()).count();
    let mut extra = Map::new();
    extra.insert("cases".into(), report::to_value(&cases)?);
    write_summary("undetectability", raw, &name, extra, opts, &mut files)?;
    Ok(Outcome {
        message: format!("undetectability {name}: {expected}/{} cases as expected", cases.len()),
        files,
    })
}

#[derive(Serialize)]
struct LossRow {
    stage: u8,
    epoch: usize,
    loss: f64,
}

pub fn train_masker_command(raw: &RawConfig, opts: &RunOptions) -> Result<Outcome> {
    let name = stem(raw, "masker")?;
    let seed = raw.seed()?;
    let ds = DeskSetup::default();
    let setup = DeskSetup {
        prompts: raw.parsed("masker_prompts", ds.prompts)?,
        views: raw.parsed("masker_views", ds.views)?,
        ..ds
    };
    let dt = TrainConfig::default();
    let cfg = TrainConfig {
        stage1_epochs: raw.parsed("stage1_epochs", dt.stage1_epochs)?,
        stage2_epochs: raw.parsed("stage2_epochs", dt.stage2_epochs)?,
        ..dt
    };
    let run = train_desk_masker(&KeyBundle::from_seed(seed).derive("masker"), &setup, &cfg)?;
    let mut params = Vec::new();
    run.params.write_to(&mut params)?;
    let params_path = opts.out_dir.join(format!("{name}.params.bin"));
    report::write_file(&params_path, &params)?;
    let losses: Vec<LossRow> = [(1u8, &run.stage1), (2, &run.stage2)]
        .into_iter()
        .flat_map(|(stage, log)| {
            log.epoch_losses
                .iter()
                .enumerate()
                .map(move |(epoch, &loss)| LossRow { stage, epoch, loss })
        })
        .collect();
    let mut files = vec![
        params_path,
        report::write_table(&opts.out_dir, &format!("{name}.losses"), &["stage", "epoch", "loss"], &losses, opts.format)?,
    ];
    let bits = setup.widths.bits;
    let mut extra = Map::new();
    extra.insert("bits".into(), bits.into());
    extra.insert("intra".into(), run.intra.into());
    extra.insert("cross".into(), run.cross.into());
    extra.insert("param_count".into(), run.params.param_count().into());
    write_summary("train-masker", raw, &name, extra, opts, &mut files)?;
    Ok(Outcome {
        message: format!(
            "train-masker {name}: intra {:.3}/{bits}, cross {:.2}/{bits}",
            run.intra, run.cross
        ),
        files,
    })
}

/// The trivial examples of every module, checked end to end.
pub fn selftest_checks() -> Vec<(&'static str, bool)> {
    let key = KeyBundle::from_seed(1);
    let shape = LatentShape::default();
    let z = gaussian_latent(&mut derive_stream(&key, "z", 0), shape);
    let signs: Vec<i8> = derive_stream(&key, "s", 0)
        .bits(shape.len())
        .into_iter()
        .map(|b| if b { -1 } else { 1 })
        .collect();
    let involution = SignMask::from_signs(shape, &signs)
        .and_then(|m| bind(&bind(&z, &m)?, &m))
        .is_ok_and(|back| back == z);
    let identity = sembind::channel::channel_apply(&z, 1.0, &mut derive_stream(&key, "e", 0)).is_ok_and(|o| o == z);
    let sigma_zero = SchemeId::ALL.iter().all(|&s| {
        let check = || -> sembind::Result<bool> {
            let wm = Watermarker::new(s, &key.derive(s.name()), SchemeConfig::default())?;
            let msg = s.carries_message().then(|| Bits::new(derive_stream(&key, "m", 0).bits(256)));
            let codec = MaskCodec::new(MaskConfig::new(1024, shape, 0.0)?, wm.key())?;
            let code = Bits::new(derive_stream(&key, "c", 0).bits(1024));
            let bound = sembind_generate(&wm, msg.as_ref(), &code, &codec, &mut derive_stream(&key, "n", 0))?;
            Ok(bound == wm.embed(msg.as_ref(), &mut derive_stream(&key, "n", 0))?)
        };
        check().unwrap_or(false)
    });
    let empty_grid = run_experiment(
        &ExperimentConfig {
            trials: 0,
            tr_null_trials: 100,
            ..ExperimentConfig::new("selftest", 1)
        },
        Execution::Sequential,
    )
    .is_ok_and(|r| r.rows.is_empty());
    vec![
        ("binomial_tail(n, 0) = 1", binomial_tail(16, 0).is_ok_and(|p| p == 1.0)),
        ("binomial_tail(4, 4) = 1/16", binomial_tail(4, 4).is_ok_and(|p| p == 0.0625)),
        ("min_threshold(1, fpr = 1) = 0", min_threshold(1, 1.0).is_ok_and(|t| t == 0)),
        ("min_threshold(10, 0.05) = 9", min_threshold(10, 0.05).is_ok_and(|t| t == 9)),
        ("min_threshold(10, 2^-11) unreachable", min_threshold(10, 2f64.powi(-11)).is_err()),
        ("bind is an involution", involution),
        ("channel at alpha 1 is the identity", identity),
        ("sigma 0 equals the base scheme", sigma_zero),
        ("zero-trial grid is empty", empty_grid),
    ]
}

pub fn selftest_command() -> Result<Outcome> {
    let checks = selftest_checks();
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if !failed.is_empty() {
        return Err(HarnessError::Invariant(format!("selftest failed: {}", failed.join("; "))));
    }
    Ok(Outcome {
        message: format!("selftest: {} checks passed", checks.len()),
        files: Vec::new(),
    })
}
