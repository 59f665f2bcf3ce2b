use pnml::experiments::{
    aggregate, default_sigma_grid, log_grid, run_double_descent, select_sigma_sq, threshold_curve, Learner, LinearSweep,
    SampleScore, SigmaPolicy, SweepSource,
};
use pnml::output::format_float;
use pnml_core::QuadConfig;
use proptest::prelude::*;

#[test]
fn selected_sigma_tracks_the_generating_noise() {
    let noise_var = 0.3;
    let grid = log_grid(0.03, 3.0, 21);
    let step = (grid[1] / grid[0]).ln();
    let source = LinearSweep {
        n_features: 5,
        noise_var,
        pool: 200,
        validation: 200,
        test: 1,
    };
    for learner in [Learner::Mn, Learner::Pnml] {
        let mean_log = (0..10)
            .map(|seed| {
                let view = source.view(200, seed).unwrap();
                select_sigma_sq(&view, &grid, learner, &QuadConfig::default()).unwrap().ln()
            })
            .sum::<f64>()
            / 10.0;
        assert!((mean_log - noise_var.ln()).abs() <= step, "{learner:?}: {}", mean_log.exp());
    }
}

#[test]
fn sweep_records_respect_the_bound_and_cover_both_regimes() {
    let source = LinearSweep {
        n_features: 8,
        noise_var: 0.25,
        pool: 40,
        validation: 20,
        test: 15,
    };
    let grid = [3, 6, 8, 12, 40];
    let records =
        run_double_descent(&source, &grid, &[0, 1], &SigmaPolicy::Fixed(0.25), &QuadConfig::default(), 2).unwrap();
    assert_eq!(records.len(), 10);
    for r in &records {
        assert!(r.mean_regret >= 0.0);
        assert!(r.mean_regret <= r.mean_regret_bound + 5e-3, "{r:?}");
        assert!(r.test_logloss_pnml.is_finite() && r.test_logloss_mn.is_finite());
    }
    let points = aggregate(&records);
    assert_eq!(points.iter().map(|p| p.n_train).collect::<Vec<_>>(), grid);
    assert!(points.iter().any(|p| p.m_over_n > 1.0) && points.iter().any(|p| p.m_over_n < 1.0));

    let single = run_double_descent(&source, &[8], &[4], &SigmaPolicy::Select(default_sigma_grid()), &QuadConfig::default(), 1)
        .unwrap();
    let p = &aggregate(&single)[0];
    assert_eq!((p.seeds, p.regret.1, p.pnml_logloss.1), (1, 0.0, 0.0));
    assert!(run_double_descent(&source, &[0], &[0], &SigmaPolicy::Fixed(1.0), &QuadConfig::default(), 1).is_err());
}

proptest! {
    #[test]
    fn threshold_curve_is_a_cdf(regrets in prop::collection::vec(0u8..6, 1..40), losses in prop::collection::vec(-3.0f64..3.0, 40)) {
        let scores: Vec<SampleScore> = regrets
            .iter()
            .zip(&losses)
            .map(|(&r, &l)| SampleScore { regret: r as f64 * 0.1, bound: 1.0, pnml_logloss: l, mn_logloss: -l })
            .collect();
        let c = threshold_curve(&scores);
        prop_assert!(c.thresholds.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.cdf_at.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*c.cdf_at.last().unwrap(), 1.0);
        let mean = scores.iter().map(|s| s.pnml_logloss).sum::<f64>() / scores.len() as f64;
        prop_assert!((c.pnml_logloss_at.last().unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn formatted_floats_keep_twelve_digits(x in prop::num::f64::NORMAL) {
        let back: f64 = format_float(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-11 * x.abs());
    }

    #[test]
    fn partitions_are_disjoint_and_exhaustive(n in 12usize..400, seed in any::<u64>()) {
        let p = pnml::data::partition(n, &pnml::data::SplitSpec::standard(seed)).unwrap();
        let mut all: Vec<usize> = p.train.iter().chain(&p.validation).chain(&p.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
