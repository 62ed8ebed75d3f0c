use nclass::alcla::{forward, AlClaParams, DecisionRule, DecoderBasis};
use nclass::baselines::{accuracy_report, svm_fit_epochs};
use nclass::detectors::{click_distribution_from, respond, DetectorModel, SampleSet};
use nclass::fockstats::{empirical_moments, photon_distribution_auto, Label, StateSpec};
use nclass::witnesses::{mandel_q, superindex};
use proptest::prelude::*;

fn label(b: bool) -> Label {
    if b {
        Label::Nonclassical
    } else {
        Label::Classical
    }
}

fn spec() -> impl Strategy<Value = StateSpec> {
    prop_oneof![
        (0.0..3.0f64).prop_map(|alpha| StateSpec::Coherent { alpha }),
        (0.05..2.0f64).prop_map(|nbar| StateSpec::Thermal { nbar }),
        (0.05..1.0f64).prop_map(|r| StateSpec::SqueezedVacuum { r }),
        (0.05..1.5f64).prop_map(|nbar| StateSpec::Spats { nbar }),
        (0.0..2.5f64, 0.0..2.5f64).prop_map(|(alpha1, alpha2)| StateSpec::MixedCoherent { alpha1, alpha2 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accuracy_total_is_class_weighted(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let preds: Vec<Label> = pairs.iter().map(|p| label(p.0)).collect();
        let labels: Vec<Label> = pairs.iter().map(|p| label(p.1)).collect();
        let r = accuracy_report(&preds, &labels).unwrap();
        let n = labels.len() as f64;
        let weighted = r.classical.unwrap_or(0.0) * r.n_classical as f64 / n
            + r.nonclassical.unwrap_or(0.0) * r.n_nonclassical as f64 / n;
        prop_assert!((r.total - weighted).abs() < 1e-12);
    }

    #[test]
    fn svm_predictions_ignore_feature_scale(
        rows in prop::collection::vec((prop::collection::vec(-3.0..3.0f64, 3), any::<bool>()), 6..20),
        scale in 0.01..100.0f64,
    ) {
        let labels: Vec<Label> = rows.iter().map(|r| label(r.1)).collect();
        prop_assume!(labels.contains(&Label::Classical) && labels.contains(&Label::Nonclassical));
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let a = svm_fit_epochs(&x, &labels, 1.0, 300).unwrap();
        let b = svm_fit_epochs(&xs, &labels, 1.0, 300).unwrap();
        for (r, rs) in x.iter().zip(&xs) {
            let (da, db) = (a.decision(r), b.decision(rs));
            prop_assert!((da - db).abs() < 1e-6 * (1.0 + da.abs()));
        }
    }

    #[test]
    fn detector_outputs_are_distributions(s in spec(), eta in 0.3..1.0f64, nu in 0.0..0.05f64, bins in 2usize..12) {
        let dist = photon_distribution_auto(&s).unwrap();
        for model in [DetectorModel::IdealPnr { cutoff: 29 }, DetectorModel::binned(eta, nu)] {
            let o = respond(&dist, &model).unwrap();
            prop_assert!((o.total() - 1.0).abs() < 1e-9);
            prop_assert!(o.probs.iter().all(|p| *p >= 0.0));
        }
        let c = click_distribution_from(&s, bins, eta, nu).unwrap();
        prop_assert_eq!(c.len(), bins + 1);
        prop_assert!((c.total() - 1.0).abs() < 1e-9);
        prop_assert!(c.probs.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn empirical_mandel_q_is_at_least_minus_one(values in prop::collection::vec(0u32..20, 2..80)) {
        prop_assume!(values.iter().any(|&v| v > 0));
        let m = empirical_moments(&SampleSet::single_mode(values), 0, 2).unwrap();
        prop_assert!(mandel_q(&m).unwrap().value >= -1.0 - 1e-12);
    }

    #[test]
    fn superindex_is_positional(digits in prop::collection::vec(0u32..5, 1..6)) {
        let c = superindex(&digits, 5).unwrap();
        let mut x = c;
        for &d in &digits {
            prop_assert_eq!((x % 5) as u32, d);
            x /= 5;
        }
        prop_assert_eq!(x, 0);
    }

    #[test]
    fn extracted_rule_reproduces_forward(
        d in 1usize..3,
        l in 1usize..4,
        seed in any::<u64>(),
        rows in prop::collection::vec(prop::collection::vec(0u32..5, 2), 1..30),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let basis = DecoderBasis::new(d, l);
        let mut p = AlClaParams::zeros(d, l);
        p.k.iter_mut().flatten().for_each(|v| *v = rng.random_range(-2.0..2.0));
        p.theta.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let rows: Vec<Vec<u32>> = rows.into_iter().map(|r| r[..d].to_vec()).collect();
        let s = SampleSet::from_rows(&rows, Label::Classical).unwrap();
        let f = forward(&s, &p, &basis).unwrap().f;
        let g = DecisionRule::extract(&p, &basis).evaluate_samples(&s);
        prop_assert!((f - g).abs() < 1e-9 * (1.0 + f.abs()), "{} vs {}", f, g);
    }
}
