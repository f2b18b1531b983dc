use ndarray::Array2;
use proptest::prelude::*;

use sembind::channel::{forge_imprint, trial_message, AttackKind, AttackSpec};
use sembind::code::Bits;
use sembind::experiment::{run_experiment, ExperimentConfig, Sigma};
use sembind::mask::{MaskCodec, MaskConfig};
use sembind::schemes::{sembind_generate, sembind_verify};
use sembind::semantic::{
    balance_loss, consistency_loss, decorrelation_loss, hash_loss, quantization_loss, sup_con_loss, Oracle,
    OracleConfig,
};
use sembind::statistics::{binomial_tail, ks_statistic, ks_two_sample, standard_normal_cdf};
use sembind::{derive_stream, Execution, KeyBundle, LatentShape, SchemeConfig, SchemeId, Watermarker};

fn bits(key: &KeyBundle, label: &str, i: u64, n: usize) -> Bits {
    Bits::new(derive_stream(key, label, i).bits(n))
}

fn scheme_strategy() -> impl Strategy<Value = SchemeId> {
    prop::sample::select(SchemeId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sigma_zero_is_the_base_scheme(seed: u64, scheme in scheme_strategy()) {
        let key = KeyBundle::from_seed(seed);
        let wm = Watermarker::new(scheme, &key.derive(scheme.name()), SchemeConfig::default()).unwrap();
        let msg = scheme.carries_message().then(|| bits(&key, "m", 0, 256));
        let codec = MaskCodec::new(MaskConfig::new(1024, LatentShape::default(), 0.0).unwrap(), wm.key()).unwrap();
        let z = sembind_generate(&wm, msg.as_ref(), &bits(&key, "c", 0, 1024), &codec, &mut derive_stream(&key, "n", 0)).unwrap();
        let base = wm.embed(msg.as_ref(), &mut derive_stream(&key, "n", 0)).unwrap();
        prop_assert_eq!(&z, &base);
        let det = sembind_verify(&wm, &z, &bits(&key, "c", 1, 1024), &codec, msg.as_ref(), 0.5).unwrap();
        let plain = wm.decode(&base, msg.as_ref()).unwrap();
        prop_assert_eq!(det.score.to_bits(), plain.score.to_bits());
        prop_assert_eq!(det.bit_accuracy, plain.bit_accuracy);
    }

    #[test]
    fn matched_codes_round_trip_exactly(seed: u64, scheme in scheme_strategy(), sigma in 0.0f64..=1.0) {
        prop_assume!(scheme != SchemeId::TrLite);
        let key = KeyBundle::from_seed(seed);
        let wm = Watermarker::new(scheme, &key.derive(scheme.name()), SchemeConfig::default()).unwrap();
        let msg = scheme.carries_message().then(|| bits(&key, "m", 0, 256));
        let codec = MaskCodec::new(MaskConfig::new(1024, LatentShape::default(), sigma).unwrap(), wm.key()).unwrap();
        let code = bits(&key, "c", 0, 1024);
        let z = sembind_generate(&wm, msg.as_ref(), &code, &codec, &mut derive_stream(&key, "n", 0)).unwrap();
        let det = sembind_verify(&wm, &z, &code, &codec, msg.as_ref(), 0.5).unwrap();
        prop_assert_eq!(det.bit_accuracy.unwrap_or(det.score), 1.0);
    }

    #[test]
    fn mismatch_flips_exactly_the_disagreeing_selected_coordinates(seed: u64, sigma in 0.0f64..=1.0, flips in 0usize..200) {
        let key = KeyBundle::from_seed(seed);
        let shape = LatentShape::default();
        let codec = MaskCodec::new(MaskConfig::new(1024, shape, sigma).unwrap(), &key).unwrap();
        let code = bits(&key, "c", 0, 1024);
        let mut other = code.clone();
        let mut s = derive_stream(&key, "f", 0);
        for _ in 0..flips {
            other.flip(s.next_below(1024) as usize);
        }
        let a = codec.expand(&code).unwrap();
        let b = codec.expand(&other).unwrap();
        let changed = (0..shape.len()).filter(|&i| a.is_negative(i) != b.is_negative(i)).count();
        let ls = codec.config().selected_len();
        let expected = (0..ls).filter(|&i| code.get(i % 1024) != other.get(i % 1024)).count();
        prop_assert_eq!(changed, expected);
    }

    #[test]
    fn tail_endpoints(n in 1u64..1000) {
        prop_assert_eq!(binomial_tail(n, 0).unwrap(), 1.0);
        prop_assert_eq!(binomial_tail(n, n).unwrap(), 2f64.powi(-(n as i32)));
    }

    #[test]
    fn ks_self_and_monotone_reparameterisation(seed: u64) {
        let x = derive_stream(&KeyBundle::from_seed(seed), "x", 0).gaussian_vec(500);
        prop_assert_eq!(ks_two_sample(&x, &x).unwrap().statistic, 0.0);
        let d = ks_statistic(&x, standard_normal_cdf);
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let d_exp = ks_statistic(&y, |v| standard_normal_cdf(v.ln()));
        prop_assert!((d - d_exp).abs() < 1e-12);
    }

    #[test]
    fn losses_non_negative_and_batch_order_free(seed: u64, shift in 1usize..8) {
        let mut s = derive_stream(&KeyBundle::from_seed(seed), "b", 0);
        let labels = [0usize, 0, 1, 1, 2, 2, 3, 3];
        let z = Array2::from_shape_vec((8, 6), s.gaussian_vec(48)).unwrap();
        let b1 = z.mapv(f64::tanh);
        let b2 = Array2::from_shape_vec((8, 6), s.gaussian_vec(48)).unwrap().mapv(f64::tanh);
        let sup = sup_con_loss(z.view(), &labels, 0.1).unwrap().0;
        let hash = hash_loss(b1.view(), &labels, 0.1).unwrap().0;
        for v in [
            sup,
            hash,
            quantization_loss(b1.view()).0,
            balance_loss(b1.view()).0,
            decorrelation_loss(b1.view()).unwrap().0,
            consistency_loss(b1.view(), b2.view()).unwrap().0,
        ] {
            prop_assert!(v >= 0.0);
        }
        let order: Vec<usize> = (0..8).map(|i| (i + shift) % 8).collect();
        let zp = z.select(ndarray::Axis(0), &order);
        let bp = b1.select(ndarray::Axis(0), &order);
        let lp: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        prop_assert!((sup_con_loss(zp.view(), &lp, 0.1).unwrap().0 - sup).abs() < 1e-12);
        prop_assert!((hash_loss(bp.view(), &lp, 0.1).unwrap().0 - hash).abs() < 1e-12);
    }
}

/// A forged latent verified under its own code behaves like verifying the
/// stolen latent with a mask from an independent code.
#[test]
fn attack_reduces_to_independent_code() {
    let key = KeyBundle::from_seed(31);
    let wm = Watermarker::new(SchemeId::GsLite, &key.derive("gs"), SchemeConfig::default()).unwrap();
    let codec = MaskCodec::new(MaskConfig::new(1024, LatentShape::default(), 1.0).unwrap(), wm.key()).unwrap();
    let oracle = Oracle::new(OracleConfig::default(), &key.derive("oracle")).unwrap();
    let spec = AttackSpec {
        kind: AttackKind::Imprint,
        alpha_att: 0.99,
    };
    let n = 300u64;
    let (mut forged, mut direct) = (Vec::new(), Vec::new());
    for t in 0..n {
        let msg = trial_message(&key, t, 256);
        let code = oracle.instance(t, 0);
        let z = sembind_generate(&wm, Some(&msg), &code, &codec, &mut derive_stream(&key, "noise", t)).unwrap();
        let (zf, cf) = forge_imprint(&z, &spec, &oracle, t, &mut derive_stream(&key, "attack", t)).unwrap();
        forged.push(sembind_verify(&wm, &zf, &cf, &codec, Some(&msg), 0.5).unwrap().bit_accuracy.unwrap());

        let msg2 = trial_message(&key, n + t, 256);
        let z2 = sembind_generate(&wm, Some(&msg2), &bits(&key, "own", t, 1024), &codec, &mut derive_stream(&key, "noise2", t)).unwrap();
        let indep = bits(&key, "indep", t, 1024);
        direct.push(sembind_verify(&wm, &z2, &indep, &codec, Some(&msg2), 0.5).unwrap().bit_accuracy.unwrap());
    }
    let ks = ks_two_sample(&forged, &direct).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
    let mean = forged.iter().sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 0.02, "forged mean {mean}");
}

/// Mask-mismatch algebra at δ = ½: decoded GS bits are at chance.
#[test]
fn independent_codes_decode_at_chance() {
    let key = KeyBundle::from_seed(32);
    let wm = Watermarker::new(SchemeId::GsLite, &key.derive("gs"), SchemeConfig::default()).unwrap();
    let codec = MaskCodec::new(MaskConfig::new(1024, LatentShape::default(), 1.0).unwrap(), wm.key()).unwrap();
    let n = 400u64;
    let mut correct = 0.0;
    for t in 0..n {
        let msg = trial_message(&key, t, 256);
        let z = sembind_generate(&wm, Some(&msg), &bits(&key, "c", t, 1024), &codec, &mut derive_stream(&key, "n", t)).unwrap();
        let det = sembind_verify(&wm, &z, &bits(&key, "c2", t, 1024), &codec, Some(&msg), 0.5).unwrap();
        correct += det.bit_accuracy.unwrap() * 256.0;
    }
    let total = (n * 256) as f64;
    let se = (0.25 / total).sqrt();
    // bits sharing code bits are positively correlated; widen by the design effect bound
    let rate = correct / total;
    assert!((rate - 0.5).abs() < 3.0 * se * 4.0, "rate {rate}");
}

/// Three-point σ sweep at the calibrated JPEG strength, 200 trials per point.
#[test]
fn three_point_sweep_is_monotone() {
    let key = KeyBundle::from_seed(2024);
    let probe = sembind::channel::GsProbe::new(&key, &SchemeConfig::default(), 200, Execution::default()).unwrap();
    let alpha = probe.calibrate("jpeg", 0.9996).unwrap().alpha.unwrap();
    let base = ExperimentConfig {
        schemes: vec![SchemeId::GsLite],
        sigmas: vec![Sigma::Value(0.0), Sigma::Value(0.5), Sigma::Value(1.0)],
        trials: 200,
        ..ExperimentConfig::new("sweep", 2024)
    };
    let clean = run_experiment(
        &ExperimentConfig {
            channels: vec![sembind::channel::ChannelConfig::new("jpeg", alpha).unwrap()],
            ..base.clone()
        },
        Execution::default(),
    )
    .unwrap();
    let forged = run_experiment(
        &ExperimentConfig {
            attack: Some(AttackKind::Imprint),
            attack_alphas: vec![0.99],
            ..base
        },
        Execution::default(),
    )
    .unwrap();
    let acc: Vec<f64> = clean.cells.iter().map(|c| c.mean_bit_accuracy.unwrap()).collect();
    let det: Vec<f64> = forged.cells.iter().map(|c| c.det_rate.unwrap()).collect();
    assert!(acc.windows(2).all(|w| w[1] <= w[0]), "{acc:?}");
    assert!(det.windows(2).all(|w| w[1] <= w[0]), "{det:?}");
}
