#![allow(dead_code)]

use multitypical_core::estimate::{gaussian_entropy, EntropyEstimate};
use multitypical_core::typicality::{CalibratedModel, TypicalityConfig};
use multitypical_core::{GaussianComponent, MixtureModel, SampleBatch};

pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
pub const H_STD_NORMAL: f64 = 1.418_938_533_204_672_7;

pub fn g(mean: f64, log_var: f64) -> GaussianComponent {
    GaussianComponent::new(vec![mean], vec![log_var]).unwrap()
}

pub fn single(mean: f64, log_var: f64) -> MixtureModel {
    MixtureModel::single(g(mean, log_var))
}

pub fn pair(a: f64, b: f64) -> MixtureModel {
    MixtureModel::new(vec![g(a, 0.0), g(b, 0.0)], vec![0.0, 0.0]).unwrap()
}

pub fn point(x: f64) -> SampleBatch {
    SampleBatch::new(1, vec![x], "t", 0).unwrap()
}

pub fn points(dim: usize, data: Vec<f64>) -> SampleBatch {
    SampleBatch::new(dim, data, "t", 0).unwrap()
}

/// A single-Gaussian member with its exact entropy and a given epsilon.
pub fn exact_member(c: GaussianComponent, eps: f64) -> CalibratedModel {
    let h = gaussian_entropy(&c);
    calibrated(MixtureModel::single(c), h, eps)
}

pub fn calibrated(model: MixtureModel, h: f64, eps: f64) -> CalibratedModel {
    CalibratedModel {
        model,
        entropy: EntropyEstimate {
            value: h,
            std_error: 0.0,
            num_samples: 0,
            seed: 0,
        },
        config: TypicalityConfig::new(eps, 1, h).unwrap(),
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // split first so narrow peaks are not missed by the initial 3-point rule
    let pieces = 64;
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * w, a + (i + 1) as f64 * w);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}
