mod common;

use common::*;
use multitypical_core::estimate::{
    closed_form_kl_gaussian, estimate_entropy, estimate_kl, gaussian_entropy,
};
use multitypical_core::math::{self, log_sum_exp, lower_quantile, mean_and_stderr};
use multitypical_core::mixture::{
    max_cross_mode_log_ratio, min_mean_distance, random_base_distribution, uniform_in_ball,
    BaseDistributionConfig, ScaleConvention,
};
use multitypical_core::rng::{derive_seed, stream_rng, tag};
use multitypical_core::{Error, GaussianComponent, MixtureModel, SampleBatch};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn standard_normal_at_mode() {
    let m = single(0.0, 0.0);
    assert!((m.log_density(&[0.0]).unwrap() + HALF_LN_2PI).abs() < 1e-12);
}

#[test]
fn duplicate_components_collapse() {
    let m = MixtureModel::new(vec![g(0.0, 0.0), g(0.0, 0.0)], vec![0.0, 0.0]).unwrap();
    assert!((m.log_density(&[0.0]).unwrap() + HALF_LN_2PI).abs() < 1e-12);
}

#[test]
fn separated_pair_at_one_mode() {
    let m = pair(-10.0, 10.0);
    let expected = 0.5f64.ln() - HALF_LN_2PI;
    assert!((m.log_density(&[10.0]).unwrap() - expected).abs() < 1e-9);
    assert!((expected + 1.612_085_713_764_618).abs() < 1e-9);
}

#[test]
fn dimension_mismatch_rejected() {
    let m = MixtureModel::single(GaussianComponent::standard(3).unwrap());
    assert_eq!(
        m.log_density(&[0.0, 1.0]),
        Err(Error::DimensionMismatch {
            expected: 3,
            got: 2
        })
    );
    let mixed = vec![GaussianComponent::standard(2).unwrap(), g(0.0, 0.0)];
    assert!(MixtureModel::new(mixed, vec![0.0, 0.0]).is_err());
    let p = single(0.0, 0.0);
    assert!(estimate_kl(&p, &m, 1000, 0).is_err());
    assert!(
        closed_form_kl_gaussian(&g(0.0, 0.0), &GaussianComponent::standard(2).unwrap()).is_err()
    );
}

#[test]
fn invalid_components_rejected() {
    assert!(GaussianComponent::new(vec![f64::NAN], vec![0.0]).is_err());
    assert!(GaussianComponent::new(vec![0.0], vec![f64::INFINITY]).is_err());
    assert!(GaussianComponent::new(vec![0.0, 1.0], vec![0.0]).is_err());
    assert!(GaussianComponent::new(vec![], vec![]).is_err());
    assert!(MixtureModel::new(vec![], vec![]).is_err());
}

#[test]
fn weights_are_normalized() {
    let m = MixtureModel::new(vec![g(0.0, 0.0), g(1.0, 0.0)], vec![3.0, 5.0]).unwrap();
    let s: f64 = m.weights().iter().sum();
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn from_normalized_requires_normalized_weights() {
    let comps = vec![g(0.0, 0.0), g(1.0, 0.0)];
    assert!(MixtureModel::from_normalized(comps.clone(), vec![0.0, 0.0]).is_err());
    let lw = vec![0.25f64.ln(), 0.75f64.ln()];
    let m = MixtureModel::from_normalized(comps, lw.clone()).unwrap();
    assert_eq!(m.log_weights(), lw.as_slice());
}

#[test]
fn variance_is_positive() {
    for lv in [-700.0, -30.0, 0.0, 30.0, 700.0] {
        assert!(g(0.0, lv).variance()[0] > 0.0);
    }
}

#[test]
fn avg_nll_hand_values() {
    let m = single(0.0, 0.0);
    assert_eq!(
        m.avg_neg_log_density(&point(0.3)).unwrap(),
        -m.log_density(&[0.3]).unwrap()
    );
    let v = m.avg_neg_log_density(&points(1, vec![0.7; 7])).unwrap();
    assert!((v + m.log_density(&[0.7]).unwrap()).abs() < 1e-12);
    let v = m.avg_neg_log_density(&points(1, vec![0.0, 10.0])).unwrap();
    assert!((v - 25.918_938_533_204_67).abs() < 1e-9);
    assert_eq!(
        m.avg_neg_log_density(&SampleBatch::empty(1, "t", 0)),
        Err(Error::Empty("sample batch"))
    );
}

#[test]
fn sample_batch_contract() {
    assert!(SampleBatch::new(1, vec![], "t", 0).is_err());
    assert!(SampleBatch::new(2, vec![1.0, 2.0, 3.0], "t", 0).is_err());
    assert!(SampleBatch::new(1, vec![f64::NAN], "t", 0).is_err());
    let b = SampleBatch::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], "rows", 5).unwrap();
    assert_eq!(b.len(), 2);
    assert_eq!(b.row(1), &[3.0, 4.0]);
}

#[test]
fn far_points_stay_finite() {
    let m = MixtureModel::new(vec![g(-1.0, -3.0), g(1.0, -3.0)], vec![0.0, 0.0]).unwrap();
    let sd = (-1.5f64).exp();
    for x in [50.0 * sd + 1.0, -50.0 * sd - 1.0, 1e6, -1e12] {
        assert!(m.log_density(&[x]).unwrap().is_finite());
    }
    let wide =
        MixtureModel::single(GaussianComponent::new(vec![0.0; 100], vec![-6.0; 100]).unwrap());
    assert!(wide.log_density(&[50.0; 100]).unwrap().is_finite());
}

#[test]
fn log_sum_exp_survives_huge_offsets() {
    let v = log_sum_exp(&[-1000.0, -1000.0]);
    assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    assert!((log_sum_exp(&[1000.0, 0.0]) - 1000.0).abs() < 1e-12);
}

#[test]
fn math_constants_and_quantiles() {
    assert!((math::HALF_LN_2PI - 0.5 * (2.0 * core::f64::consts::PI).ln()).abs() < 1e-15);
    assert!((math::HALF_LN_2PI_E - math::HALF_LN_2PI - 0.5).abs() < 1e-15);
    let xs = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(lower_quantile(&xs, 1.0), 4.0);
    assert_eq!(lower_quantile(&xs, 0.5), 2.0);
    assert_eq!(lower_quantile(&xs, 0.0), 1.0);
}

#[test]
fn degenerate_categorical() {
    let m = MixtureModel::from_weights(vec![g(0.0, 0.0), g(50.0, 0.0)], &[1.0, 0.0]).unwrap();
    let (_, comps) = m.sample_with_components(10_000, 3).unwrap();
    assert!(comps.iter().all(|&c| c == 0));
}

#[test]
fn sampling_is_deterministic() {
    let m = MixtureModel::new(vec![g(0.0, 0.0), g(4.0, -1.0)], vec![0.0, 0.0]).unwrap();
    assert_eq!(m.sample(5000, 11).unwrap(), m.sample(5000, 11).unwrap());
    assert_ne!(m.sample(5000, 11).unwrap(), m.sample(5000, 12).unwrap());
    let long = m.sample(9000, 11).unwrap();
    let short = m.sample(5000, 11).unwrap();
    assert_eq!(long.slice(0, 5000).as_slice(), short.as_slice());
}

#[test]
fn streams_are_distinct_and_repeatable() {
    let a: u64 = stream_rng(7, 0).random();
    let b: u64 = stream_rng(7, 1).random();
    let a2: u64 = stream_rng(7, 0).random();
    assert_ne!(a, b);
    assert_eq!(a, a2);
    assert_ne!(derive_seed(1, tag::INIT), derive_seed(2, tag::INIT));
    assert_ne!(derive_seed(1, tag::INIT), derive_seed(1, tag::RESTART));
}

#[test]
fn gaussian_entropy_closed_form() {
    assert!((gaussian_entropy(&g(0.0, 0.0)) - H_STD_NORMAL).abs() < 1e-12);
    assert!((gaussian_entropy(&g(3.0, 2.0)) - 2.418_938_533_204_672_8).abs() < 1e-12);
    let c = GaussianComponent::standard(100).unwrap();
    assert!((gaussian_entropy(&c) - 141.893_853_320_467_3).abs() < 1e-9);
}

#[test]
fn kl_closed_form_hand_values() {
    assert_eq!(
        closed_form_kl_gaussian(&g(0.3, -0.7), &g(0.3, -0.7)).unwrap(),
        0.0
    );
    assert!((closed_form_kl_gaussian(&g(0.0, 0.0), &g(1.0, 0.0)).unwrap() - 0.5).abs() < 1e-15);
    let v = closed_form_kl_gaussian(&g(0.0, 0.0), &g(0.0, 2.0)).unwrap();
    assert!((v - 0.567_667_641_618_306_3).abs() < 1e-12);
}

#[test]
fn kl_closed_form_is_additive() {
    let a = GaussianComponent::new(vec![0.1, -2.0, 0.5], vec![0.2, -1.0, 0.0]).unwrap();
    let b = GaussianComponent::new(vec![1.0, 0.0, 0.5], vec![-0.3, 0.4, 1.0]).unwrap();
    let total = closed_form_kl_gaussian(&a, &b).unwrap();
    let sum: f64 = (0..3)
        .map(|i| {
            closed_form_kl_gaussian(
                &g(a.mean()[i], a.log_var()[i]),
                &g(b.mean()[i], b.log_var()[i]),
            )
            .unwrap()
        })
        .sum();
    assert!((total - sum).abs() < 1e-12);
}

#[test]
fn estimators_reject_small_sample_counts() {
    let m = single(0.0, 0.0);
    assert!(estimate_entropy(&m, 99, 0).is_err());
    assert!(estimate_kl(&m, &m, 10, 0).is_err());
}

#[test]
fn kl_of_identical_models_is_zero() {
    let m = pair(-1.0, 2.0);
    let est = estimate_kl(&m, &m, 1000, 5).unwrap();
    assert!(est.value.abs() <= 3.0 * est.std_error);
    assert!(!est.is_implausibly_negative());
}

#[test]
fn kl_estimates_match_hand_values() {
    let p = single(0.0, 0.0);
    let est = estimate_kl(&p, &single(1.0, 0.0), 200_000, 1).unwrap();
    assert!((est.value - 0.5).abs() < 4.0 * est.std_error, "{est:?}");
    let est = estimate_kl(&p, &single(0.0, 2.0), 200_000, 2).unwrap();
    let truth = 0.5 * ((-2.0f64).exp() - 1.0 + 2.0);
    assert!((est.value - truth).abs() < 4.0 * est.std_error, "{est:?}");
}

#[test]
fn entropy_estimate_matches_closed_form() {
    let c = GaussianComponent::new(vec![0.5, -1.0, 2.0], vec![0.3, -0.4, 1.2]).unwrap();
    let est = estimate_entropy(&MixtureModel::single(c.clone()), 1_000_000, 3).unwrap();
    assert!(
        (est.value - gaussian_entropy(&c)).abs() < 4.0 * est.std_error,
        "{est:?}"
    );
}

#[test]
fn separated_mixture_entropy_matches_quadrature() {
    let m = pair(-10.0, 10.0);
    let oracle = integrate(
        |x| {
            let l = m.log_density(&[x]).unwrap();
            -l.exp() * l
        },
        -30.0,
        30.0,
        1e-10,
    );
    assert!((oracle - (H_STD_NORMAL + 2f64.ln())).abs() < 1e-6);
    let est = estimate_entropy(&m, 1_000_000, 4).unwrap();
    assert!(
        (est.value - oracle).abs() < 4.0 * est.std_error,
        "{est:?} vs {oracle}"
    );
}

#[test]
fn entropy_std_error_shrinks_at_the_monte_carlo_rate() {
    let m = pair(-2.0, 3.0);
    let small = estimate_entropy(&m, 10_000, 8).unwrap();
    let large = estimate_entropy(&m, 1_000_000, 8).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!(ratio > 5.0 && ratio < 20.0, "ratio {ratio}");
}

#[test]
fn estimators_use_the_documented_draws() {
    let m = pair(-1.0, 1.5);
    let q = single(0.2, 0.4);
    let count = 10_000;
    let xs = m.sample(count, 21).unwrap();
    let nll = m.neg_log_densities(&xs).unwrap();
    let (value, std_error) = mean_and_stderr(&nll);
    let est = estimate_entropy(&m, count, 21).unwrap();
    assert_eq!((est.value, est.std_error), (value, std_error));

    let ratios: Vec<f64> = xs
        .rows()
        .map(|x| m.log_density(x).unwrap() - q.log_density(x).unwrap())
        .collect();
    let (value, std_error) = mean_and_stderr(&ratios);
    let est = estimate_kl(&m, &q, count, 21).unwrap();
    assert_eq!((est.value, est.std_error), (value, std_error));
}

#[test]
fn one_dimensional_density_integrates_to_one() {
    let m = MixtureModel::new(
        vec![g(-2.0, -1.0), g(0.5, 0.7), g(4.0, -2.5)],
        vec![0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()],
    )
    .unwrap();
    let z = integrate(|x| m.log_density(&[x]).unwrap().exp(), -40.0, 40.0, 1e-10);
    assert!((z - 1.0).abs() < 1e-6, "{z}");
}

#[test]
fn two_dimensional_density_integrates_to_one() {
    let m = MixtureModel::new(
        vec![
            GaussianComponent::new(vec![-1.0, 0.5], vec![-0.5, 0.3]).unwrap(),
            GaussianComponent::new(vec![2.0, -1.0], vec![0.2, -1.0]).unwrap(),
        ],
        vec![0.4f64.ln(), 0.6f64.ln()],
    )
    .unwrap();
    let z = integrate(
        |x| integrate(|y| m.log_density(&[x, y]).unwrap().exp(), -15.0, 15.0, 1e-9),
        -15.0,
        15.0,
        1e-8,
    );
    assert!((z - 1.0).abs() < 1e-6, "{z}");
}

#[test]
fn base_distribution_reference_ranges() {
    let m = random_base_distribution(&BaseDistributionConfig::reference(), 42).unwrap();
    assert_eq!((m.dim(), m.num_components()), (100, 20));
    for c in m.components() {
        let norm = c.mean().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 3.0);
        for v in c.variance() {
            assert!(v >= (-3.0f64).exp() - 1e-15 && v <= (-1.0f64).exp() + 1e-15);
        }
    }
    for w in m.weights() {
        assert!((w - 0.05).abs() < 1e-12);
    }
}

#[test]
fn stddev_convention_squares_the_scale() {
    let cfg = BaseDistributionConfig {
        convention: ScaleConvention::StdDev,
        ..BaseDistributionConfig::reference()
    };
    let m = random_base_distribution(&cfg, 1).unwrap();
    for c in m.components() {
        assert!(c.log_var().iter().all(|lv| (-6.0..=-2.0).contains(lv)));
    }
}

#[test]
fn base_distribution_is_deterministic() {
    let cfg = BaseDistributionConfig::reference();
    assert_eq!(
        random_base_distribution(&cfg, 9).unwrap(),
        random_base_distribution(&cfg, 9).unwrap()
    );
    let bad = BaseDistributionConfig {
        log_scale_low: 3.0,
        log_scale_high: 1.0,
        ..cfg
    };
    assert!(random_base_distribution(&bad, 0).is_err());
}

#[test]
fn one_dimensional_ball_is_uniform() {
    let count = 10_000;
    let mut rng = stream_rng(77, 0);
    let mut xs: Vec<f64> = (0..count)
        .map(|_| uniform_in_ball(1, 3.0, &mut rng)[0])
        .collect();
    xs.sort_by(f64::total_cmp);
    assert!(xs.iter().all(|x| x.abs() <= 3.0));
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = (x + 3.0) / 6.0;
            (cdf - i as f64 / count as f64)
                .abs()
                .max(((i + 1) as f64 / count as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov distribution
    assert!(ks < 1.628 / (count as f64).sqrt(), "KS statistic {ks}");
}

#[test]
fn component_frequencies_match_weights() {
    let weights = [0.5, 0.3, 0.15, 0.05];
    let comps = (0..4).map(|i| g(i as f64, 0.0)).collect();
    let m = MixtureModel::from_weights(comps, &weights).unwrap();
    let count = 100_000;
    let (_, which) = m.sample_with_components(count, 13).unwrap();
    let mut seen = [0usize; 4];
    for c in which {
        seen[c] += 1;
    }
    let chi2: f64 = seen
        .iter()
        .zip(weights)
        .map(|(&o, w)| {
            let e = w * count as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    // 0.1% critical value with 3 degrees of freedom
    assert!(chi2 < 16.27, "chi-square {chi2}");
}

#[test]
fn sample_moments_match_parameters() {
    let c = GaussianComponent::new(vec![1.0, -2.0, 0.0], vec![0.0, -1.5, 1.0]).unwrap();
    let m = MixtureModel::single(c.clone());
    let count = 1_000_000;
    let xs = m.sample(count, 17).unwrap();
    for i in 0..3 {
        let col: Vec<f64> = xs.rows().map(|r| r[i]).collect();
        let mean = col.iter().sum::<f64>() / count as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64;
        let sigma2 = c.variance()[i];
        let se_mean = (sigma2 / count as f64).sqrt();
        let se_var = sigma2 * (2.0 / count as f64).sqrt();
        assert!((mean - c.mean()[i]).abs() < 5.0 * se_mean, "mean {i}");
        assert!((var - sigma2).abs() < 5.0 * se_var, "variance {i}");
    }
}

#[test]
fn summary_statistics() {
    let m = pair(0.0, 3.0);
    assert!((min_mean_distance(&m).unwrap() - 3.0).abs() < 1e-12);
    assert!((max_cross_mode_log_ratio(&m).unwrap() + 4.5).abs() < 1e-12);
    let one = single(0.0, 0.0);
    assert_eq!(min_mean_distance(&one), None);
    assert_eq!(max_cross_mode_log_ratio(&one), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shorter_draws_are_prefixes(a in 1usize..10_000, extra in 0usize..10_000, seed: u64) {
        let m = MixtureModel::new(vec![g(0.0, 0.0), g(3.0, -1.0)], vec![0.0, 0.3]).unwrap();
        let short = m.sample(a, seed).unwrap();
        let long = m.sample(a + extra, seed).unwrap();
        let head = long.slice(0, a);
        prop_assert_eq!(head.as_slice(), short.as_slice());
    }

    #[test]
    fn log_density_is_finite_far_from_means(
        means in prop::collection::vec(-5.0f64..5.0, 1..5),
        lv in -6.0f64..3.0,
        x in prop::num::f64::NORMAL,
    ) {
        let comps = means.iter().map(|&m| g(m, lv)).collect::<Vec<_>>();
        let k = comps.len();
        let m = MixtureModel::new(comps, vec![0.0; k]).unwrap();
        let x = x.clamp(-1e150, 1e150);
        prop_assert!(m.log_density(&[x]).unwrap().is_finite());
    }
}
