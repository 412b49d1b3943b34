mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use iecsi::model::{validate_study, AnalysisConfig, AnalystAnnotation, Phase, Sentiment};
use iecsi::qualitative::cohen_kappa;
use iecsi::stats::dist::{normal_cdf, t_two_sided_p};
use iecsi::stats::{self, mann_whitney_u_distribution, wilcoxon_signed_rank_distribution};
use iecsi::storage;
use iecsi::synth::{self, SynthOptions};

fn likert(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((1i32..=7).prop_map(f64::from), n)
}

fn binomial(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_ignores_session_order(seed in 0u64..1000, corrupt in 0usize..4) {
        let mut study = synth::generate(&SynthOptions { participants: 4, seed, ..Default::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match corrupt {
            1 => study.sessions[0].responses_mut(Phase::Post)[0].value = 9,
            2 => study.sessions[1].responses_mut(Phase::Pre)[0].item_id = "nope".into(),
            3 => study.sessions[2].condition_id = "elsewhere".into(),
            _ => {}
        }
        let registry = study.registry();
        let before = validate_study(&study.design, &study.sessions, &registry);
        prop_assert_eq!(before.is_empty(), corrupt == 0);
        prop_assert_eq!(&before, &validate_study(&study.design, &study.sessions, &registry));
        study.sessions.shuffle(&mut rng);
        prop_assert_eq!(before, validate_study(&study.design, &study.sessions, &registry));
    }

    #[test]
    fn p_values_in_unit_interval(x in likert(2..=20), y in likert(2..=20), mu in 1.0f64..7.0) {
        let cfg = AnalysisConfig::default();
        let n = x.len().min(y.len());
        let (xs, ys) = (&x[..n], &y[..n]);
        let results = [
            stats::paired_t_test(xs, ys, 0.05),
            stats::wilcoxon_signed_rank(xs, ys, &cfg),
            stats::mann_whitney_u(&x, &y, &cfg),
            stats::one_sample_t_test(&x, mu, 0.05),
        ];
        for r in results.into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&r.p_value), "{:?}", r);
        }
    }

    #[test]
    fn paired_t_antisymmetric_and_deterministic(x in likert(3..=15), y in likert(3..=15)) {
        let n = x.len().min(y.len());
        let (xs, ys) = (&x[..n], &y[..n]);
        if let (Ok(a), Ok(b)) = (stats::paired_t_test(xs, ys, 0.05), stats::paired_t_test(ys, xs, 0.05)) {
            prop_assert_eq!(a.statistic, -b.statistic);
            prop_assert_eq!(a.p_value, b.p_value);
            let again = stats::paired_t_test(xs, ys, 0.05).unwrap();
            prop_assert_eq!(a.statistic.to_bits(), again.statistic.to_bits());
            prop_assert_eq!(a.p_value.to_bits(), again.p_value.to_bits());
        }
    }

    #[test]
    fn t_distribution_matches_statrs(t in -12.0f64..12.0, df in 1.0f64..200.0) {
        let reference = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs());
        let got = t_two_sided_p(t, df);
        prop_assert!((got - reference).abs() < 1e-9, "t={} df={}: {} vs {}", t, df, got, reference);
    }

    #[test]
    fn normal_cdf_symmetric_and_monotone(z in -8.0f64..8.0, dz in 0.0f64..1.0) {
        prop_assert!((normal_cdf(z) + normal_cdf(-z) - 1.0).abs() < 1e-15);
        prop_assert!(normal_cdf(z) <= normal_cdf(z + dz));
    }

    #[test]
    fn exact_distributions_are_complete(n in 1usize..=20, m in 1usize..=12, k in 1usize..=12) {
        let ranks: Vec<u64> = (1..=n as u64).map(|r| 2 * r).collect();
        let w: u128 = wilcoxon_signed_rank_distribution(&ranks).iter().sum();
        prop_assert_eq!(w, 1u128 << n);
        let u = mann_whitney_u_distribution(m, k);
        prop_assert_eq!(u.len(), m * k + 1);
        prop_assert_eq!(u.iter().sum::<u128>(), binomial((m + k) as u64, m as u64));
    }

    #[test]
    fn kappa_of_self_is_one(x in prop::collection::vec(0u8..4, 2..40)) {
        let distinct = x.iter().collect::<std::collections::BTreeSet<_>>().len();
        match cohen_kappa(&x, &x) {
            Ok(k) => { prop_assert!(distinct >= 2); prop_assert_eq!(k, 1.0); }
            Err(_) => prop_assert_eq!(distinct, 1),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bundles_round_trip(seed in 0u64..10_000, participants in 2usize..6, benchmark in any::<bool>(), labels in 0usize..6) {
        let mode = if benchmark { iecsi::StudyMode::BenchmarkOnly } else { iecsi::StudyMode::Comparative };
        let mut study = synth::generate(&SynthOptions { participants, mode, seed, effect: 0.5 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..labels {
            for annotator in ["a1", "a2"] {
                study.analyst_annotations.push(AnalystAnnotation {
                    condition_id: "conv".into(),
                    target: format!("PSSUQ/item/q{:02}", k + 1),
                    annotator_id: annotator.into(),
                    sentiment: [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive][rng.random_range(0..3)],
                });
            }
        }
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        storage::write_bundle(a.path(), &study).unwrap();
        let loaded = storage::load_study(a.path()).unwrap();
        prop_assert_eq!(&loaded, &study);
        storage::write_bundle(b.path(), &loaded).unwrap();
        prop_assert_eq!(common::read_tree(a.path()), common::read_tree(b.path()));
    }
}
