//! Numeric evaluation of the typicality-test bounds and small-scale
//! validation of the set-level statements behind them.
//!
//! The evaluators are pure functions of their inputs. The Monte-Carlo and
//! quadrature validators are deterministic given a seed.

use alloc::vec::Vec;

use crate::ensemble::Grid;
use crate::estimate::{closed_form_kl_gaussian, gaussian_entropy};
use crate::math;
use crate::mixture::{GaussianComponent, MixtureModel, SampleBatch};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

/// Below this sequence length the "n sufficiently large" premises are
/// reported as unmet.
pub const SMALL_N_WARNING: usize = 10;

/// Minimum trial count for [`validate_lemma0_mc`].
pub const MIN_LEMMA0_TRIALS: usize = 10_000;

fn check_common(n: usize, epsilon: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be finite and positive"));
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("bound inputs must be finite"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBound {
    pub value: f64,
    /// The bound is at least 1 and says nothing.
    pub vacuous: bool,
}

/// Type-II error bound `exp(-n(kl + h_alt - h_p - 3ε)) + 3ε` for one named
/// alternative.
pub fn theorem1_beta_bound(
    n: usize,
    epsilon: f64,
    kl_alt_p: f64,
    h_alt: f64,
    h_p: f64,
) -> Result<BetaBound> {
    check_common(n, epsilon)?;
    check_finite(&[kl_alt_p, h_alt, h_p])?;
    let value = math::exp(-(n as f64) * (kl_alt_p + h_alt - h_p - 3.0 * epsilon)) + 3.0 * epsilon;
    Ok(BetaBound {
        value,
        vacuous: value >= 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Check {
    /// `(1/(4ε)) ln((1-2ε) / ((K-1)/K + ε))`, independent of `n`.
    pub condition1_lhs: f64,
    pub condition1: bool,
    pub condition2: bool,
    /// `None` when the logarithm's argument is not positive.
    pub d_threshold: Option<f64>,
    pub small_n_warning: bool,
}

/// Sufficient conditions for the ground-truth typical set to meet every
/// member's typical set, given the members' divergences `d_k`.
pub fn theorem2_conditions(
    n: usize,
    epsilon: f64,
    num_members: usize,
    d_k: &[f64],
) -> Result<Theorem2Check> {
    check_common(n, epsilon)?;
    if epsilon >= 0.5 {
        return Err(Error::invalid("epsilon must lie in (0, 0.5)"));
    }
    if num_members == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    check_finite(d_k)?;
    let k = num_members as f64;
    let nf = n as f64;
    let lhs = math::ln((1.0 - 2.0 * epsilon) / ((k - 1.0) / k + epsilon)) / (4.0 * epsilon);
    let arg = (1.0 - 2.0 * epsilon) / epsilon * math::exp(-4.0 * nf * epsilon)
        - (k - 1.0) / (epsilon * k);
    let d_threshold = (arg > 0.0).then(|| math::ln(arg) / nf + 3.0 * epsilon);
    let condition2 = d_threshold.is_some_and(|t| d_k.iter().all(|&d| d < t));
    Ok(Theorem2Check {
        condition1_lhs: lhs,
        condition1: lhs > nf,
        condition2,
        d_threshold,
        small_n_warning: n < SMALL_N_WARNING,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3Check {
    pub holds: bool,
    /// Right-hand side of the divergence inequality; `None` when
    /// `r(1-ε)e^{-2nε} - 2ε ≤ 0` and the condition cannot hold.
    pub threshold: Option<f64>,
    pub small_n_warning: bool,
}

/// `kl_ab > h_b - h_a - 3ε + (1/n) ln(1 / (r(1-ε)e^{-2nε} - 2ε))`, the
/// condition under which `Vol(T_a ∩ T_b) / Vol(T_a) < r`.
pub fn theorem3_condition(
    n: usize,
    epsilon: f64,
    r: f64,
    kl_ab: f64,
    h_a: f64,
    h_b: f64,
) -> Result<Theorem3Check> {
    check_common(n, epsilon)?;
    check_finite(&[kl_ab, h_a, h_b])?;
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::invalid("r must lie in (0, 1]"));
    }
    let nf = n as f64;
    let inner = r * (1.0 - epsilon) * math::exp(-2.0 * nf * epsilon) - 2.0 * epsilon;
    let threshold = (inner > 0.0).then(|| h_b - h_a - 3.0 * epsilon - math::ln(inner) / nf);
    Ok(Theorem3Check {
        holds: threshold.is_some_and(|t| kl_ab > t),
        threshold,
        small_n_warning: n < SMALL_N_WARNING,
    })
}

/// `|(1/n) Σ ln(q_a(x_i) / q_b(x_i)) - kl|` over the rows of `xs`.
pub fn rel_entropy_typicality_score(
    q_a: &MixtureModel,
    q_b: &MixtureModel,
    xs: &SampleBatch,
    kl: f64,
) -> Result<f64> {
    if q_a.dim() != q_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: q_a.dim(),
            got: q_b.dim(),
        });
    }
    let la = q_a.neg_log_densities(xs)?;
    let lb = q_b.neg_log_densities(xs)?;
    let sum: f64 = la.iter().zip(&lb).map(|(a, b)| b - a).sum();
    Ok((sum / xs.len() as f64 - kl).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma0Check {
    /// Fraction of length-`n` sequences from `q_a` typical for `q_b`.
    pub estimated_prob: f64,
    pub std_error: f64,
    pub bound: f64,
    pub holds: bool,
    pub trials: usize,
}

/// Checks `q_a(T_b) < exp(-n(d + h_a - h_b - 3ε)) + 3ε` for single 1-D
/// Gaussians, with `d` the closed-form `D_KL(q_a ‖ q_b)` and `q_a` read as
/// the product measure on sequences.
pub fn validate_lemma0_mc(
    q_a: &GaussianComponent,
    q_b: &GaussianComponent,
    n: usize,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<Lemma0Check> {
    check_common(n, epsilon)?;
    if q_a.dim() != 1 || q_b.dim() != 1 {
        return Err(Error::invalid("lemma check expects 1-D components"));
    }
    if trials < MIN_LEMMA0_TRIALS {
        return Err(Error::invalid(alloc::format!(
            "lemma check needs at least {MIN_LEMMA0_TRIALS} trials, got {trials}"
        )));
    }
    let d = closed_form_kl_gaussian(q_a, q_b)?;
    let (h_a, h_b) = (gaussian_entropy(q_a), gaussian_entropy(q_b));
    let bound = math::exp(-(n as f64) * (d + h_a - h_b - 3.0 * epsilon)) + 3.0 * epsilon;

    let a = MixtureModel::single(q_a.clone());
    let mut hits = 0usize;
    let (mut sum, mut count) = (0.0, 0usize);
    a.for_each_sample_chunk(trials * n, seed, |rows, _| {
        for &x in rows {
            sum -= q_b.log_pdf_unchecked(&[x]);
            count += 1;
            if count == n {
                if (sum / n as f64 - h_b).abs() < epsilon {
                    hits += 1;
                }
                sum = 0.0;
                count = 0;
            }
        }
    });
    let p = hits as f64 / trials as f64;
    let se = math::binomial_stderr(p, trials);
    Ok(Lemma0Check {
        estimated_prob: p,
        std_error: se,
        bound,
        holds: p + 3.0 * se <= bound,
        trials,
    })
}

/// `Vol(T_a ∩ T_b) / Vol(T_a)` at `n = 1` by counting cells of a midpoint
/// grid over a box reaching 10 standard deviations past every mean (d ≤ 2).
pub fn estimate_volume_ratio(
    q_a: &MixtureModel,
    h_a: f64,
    q_b: &MixtureModel,
    h_b: f64,
    epsilon: f64,
    grid_resolution: usize,
) -> Result<f64> {
    check_common(1, epsilon)?;
    if q_a.dim() != q_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: q_a.dim(),
            got: q_b.dim(),
        });
    }
    if q_a.dim() > 2 {
        return Err(Error::invalid("volume ratio quadrature supports d <= 2"));
    }
    let grid = Grid::covering([q_a, q_b], 10.0, grid_resolution)?;
    let (mut in_a, mut in_both) = (0usize, 0usize);
    let mut scratch = Vec::new();
    grid.for_each_midpoint(|x| {
        if (-q_a.log_density_scratch(x, &mut scratch) - h_a).abs() < epsilon {
            in_a += 1;
            if (-q_b.log_density_scratch(x, &mut scratch) - h_b).abs() < epsilon {
                in_both += 1;
            }
        }
    })?;
    if in_a == 0 {
        return Err(Error::Resolution(
            "no grid cell falls inside T_a; raise the resolution".into(),
        ));
    }
    Ok(in_both as f64 / in_a as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeRatioEstimate {
    pub ratio: f64,
    /// Sequences drawn from `q_a` that landed in `T_a`.
    pub hits_a: usize,
    /// Kish effective sample size of the importance weights on `T_a`.
    pub effective_samples: f64,
}

/// Sequence-space `Vol(T_a ∩ T_b) / Vol(T_a)` for length-`n` sequences by
/// importance sampling: draws from the product `q_a^n`, weighted by
/// `1 / q_a(x^n)` on `T_a`. Inside `T_a` these weights vary by at most
/// `e^{2nε}`, so the estimator is well conditioned for small `nε`.
pub fn estimate_volume_ratio_mc(
    q_a: &MixtureModel,
    h_a: f64,
    q_b: &MixtureModel,
    h_b: f64,
    params: (usize, f64),
    trials: usize,
    seed: u64,
) -> Result<VolumeRatioEstimate> {
    let (n, epsilon) = params;
    check_common(n, epsilon)?;
    if q_a.dim() != q_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: q_a.dim(),
            got: q_b.dim(),
        });
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    let nf = n as f64;
    let mut scratch = Vec::new();
    let (mut sa, mut sb) = (0.0, 0.0);
    let (mut na, mut nb) = (0.0, 0.0);
    let (mut w_sum, mut w_sq) = (0.0, 0.0);
    let mut count = 0usize;
    let mut hits_a = 0usize;
    let draws = q_a.sample(trials * n, derive_seed(seed, tag::NULL))?;
    for x in draws.rows() {
        na += -q_a.log_density_scratch(x, &mut scratch);
        nb += -q_b.log_density_scratch(x, &mut scratch);
        count += 1;
        if count < n {
            continue;
        }
        if (na / nf - h_a).abs() < epsilon {
            hits_a += 1;
            // weight 1/q_a(x^n) = e^{na}; shift by n·h_a to stay in range
            let w = math::exp(na - nf * h_a);
            sa += w;
            w_sum += w;
            w_sq += w * w;
            if (nb / nf - h_b).abs() < epsilon {
                sb += w;
            }
        }
        na = 0.0;
        nb = 0.0;
        count = 0;
    }
    if hits_a == 0 {
        return Err(Error::Resolution(
            "no sampled sequence falls inside T_a; raise the trial count".into(),
        ));
    }
    Ok(VolumeRatioEstimate {
        ratio: sb / sa,
        hits_a,
        effective_samples: w_sum * w_sum / w_sq,
    })
}
