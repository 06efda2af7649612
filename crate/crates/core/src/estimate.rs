//! Monte-Carlo estimators of differential entropy and KL divergence, with
//! closed forms for single Gaussians.

use alloc::vec::Vec;

use crate::math::{self, HALF_LN_2PI_E};
use crate::mixture::{GaussianComponent, MixtureModel};
use crate::{Error, Result};

/// Minimum sample count accepted by the Monte-Carlo estimators.
pub const MIN_SAMPLES: usize = 100;

/// Default sample count for entropy estimates.
pub const DEFAULT_ENTROPY_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    /// nats
    pub value: f64,
    pub std_error: f64,
    pub num_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    /// nats
    pub value: f64,
    pub std_error: f64,
    pub num_samples: usize,
    pub seed: u64,
}

impl KlEstimate {
    /// A KL divergence is nonnegative; an estimate more than three standard
    /// errors below zero points at a bug or a broken model rather than noise.
    pub fn is_implausibly_negative(&self) -> bool {
        self.value < -3.0 * self.std_error
    }
}

/// Closed-form entropy `0.5 Σ_i (ln 2πe + log_var_i)`.
pub fn gaussian_entropy(component: &GaussianComponent) -> f64 {
    component
        .log_var()
        .iter()
        .map(|&lv| HALF_LN_2PI_E + 0.5 * lv)
        .sum()
}

/// Exact `D_KL(a ‖ b)` between diagonal Gaussians.
pub fn closed_form_kl_gaussian(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut kl = 0.0;
    for i in 0..a.dim() {
        let (la, lb) = (a.log_var()[i], b.log_var()[i]);
        let dm = a.mean()[i] - b.mean()[i];
        kl += (math::exp(la) + dm * dm) * math::exp(-lb) - 1.0 + lb - la;
    }
    Ok(0.5 * kl)
}

fn check_samples(num_samples: usize) -> Result<()> {
    if num_samples < MIN_SAMPLES {
        return Err(Error::invalid(alloc::format!(
            "Monte-Carlo estimates need at least {MIN_SAMPLES} samples, got {num_samples}"
        )));
    }
    Ok(())
}

/// `E_q[-ln q(x)]` as the sample mean over `num_samples` draws from `model`
/// (the same draws `model.sample(num_samples, seed)` returns).
pub fn estimate_entropy(
    model: &MixtureModel,
    num_samples: usize,
    seed: u64,
) -> Result<EntropyEstimate> {
    check_samples(num_samples)?;
    let mut values = Vec::with_capacity(num_samples);
    let mut scratch = Vec::with_capacity(model.num_components());
    model.for_each_sample_chunk(num_samples, seed, |rows, _| {
        for x in rows.chunks_exact(model.dim()) {
            values.push(-model.log_density_scratch(x, &mut scratch));
        }
    });
    let (value, std_error) = math::mean_and_stderr(&values);
    Ok(EntropyEstimate {
        value,
        std_error,
        num_samples,
        seed,
    })
}

/// `E_p[ln p(x) - ln q(x)]` over draws from `p`.
pub fn estimate_kl(
    p: &MixtureModel,
    q: &MixtureModel,
    num_samples: usize,
    seed: u64,
) -> Result<KlEstimate> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    check_samples(num_samples)?;
    let mut values = Vec::with_capacity(num_samples);
    let mut scratch = Vec::with_capacity(p.num_components().max(q.num_components()));
    p.for_each_sample_chunk(num_samples, seed, |rows, _| {
        for x in rows.chunks_exact(p.dim()) {
            let lp = p.log_density_scratch(x, &mut scratch);
            let lq = q.log_density_scratch(x, &mut scratch);
            values.push(lp - lq);
        }
    });
    let (value, std_error) = math::mean_and_stderr(&values);
    let est = KlEstimate {
        value,
        std_error,
        num_samples,
        seed,
    };
    if est.is_implausibly_negative() {
        log::warn!(
            "KL estimate {:.6} is more than 3 standard errors ({:.6}) below zero",
            est.value,
            est.std_error
        );
    }
    Ok(est)
}
