//! Typical-set scoring and the typicality goodness-of-fit test.
//!
//! A length-`n` sequence is typical for a density `q` with entropy `h` when
//! `|-(1/n) Σ ln q(x_i) - h| < ε`. The inequality is strict everywhere in this
//! crate.

use alloc::vec::Vec;

use crate::estimate::{estimate_entropy, EntropyEstimate};
use crate::math;
use crate::mixture::{MixtureModel, SampleBatch};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

/// Minimum number of sequences for [`calibrate_epsilon`].
pub const MIN_CALIBRATION_SEQUENCES: usize = 1000;

/// Default number of sequences for [`calibrate_epsilon`].
pub const DEFAULT_CALIBRATION_SEQUENCES: usize = 20_000;

/// One typical set `T_ε^(n)`: tolerance, sequence length, and the entropy the
/// test centers on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypicalityConfig {
    pub epsilon: f64,
    pub n: usize,
    pub entropy: f64,
    /// Standard error of `entropy` when it is a Monte-Carlo estimate.
    pub entropy_std_error: f64,
}

impl TypicalityConfig {
    pub fn new(epsilon: f64, n: usize, entropy: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive and finite"));
        }
        if n == 0 {
            return Err(Error::invalid("sequence length n must be at least 1"));
        }
        if !entropy.is_finite() {
            return Err(Error::invalid("entropy must be finite"));
        }
        Ok(Self {
            epsilon,
            n,
            entropy,
            entropy_std_error: 0.0,
        })
    }

    /// Strict membership on a precomputed score.
    #[inline]
    pub fn accepts(&self, score: f64) -> bool {
        score < self.epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub score: f64,
    pub accepted: bool,
    pub config: TypicalityConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    /// Fraction of null sequences rejected.
    pub alpha: f64,
    /// Fraction of alternative sequences accepted.
    pub beta: f64,
    pub trials: usize,
    pub alpha_stderr: f64,
    pub beta_stderr: f64,
}

/// `|avg_neg_log_density(model, xs) - entropy|`.
pub fn typicality_score(model: &MixtureModel, entropy: f64, xs: &SampleBatch) -> Result<f64> {
    Ok((model.avg_neg_log_density(xs)? - entropy).abs())
}

/// Accepts `xs` iff its score is strictly below `config.epsilon`.
pub fn is_typical(
    model: &MixtureModel,
    config: &TypicalityConfig,
    xs: &SampleBatch,
) -> Result<TestOutcome> {
    if xs.len() != config.n {
        return Err(Error::LengthMismatch {
            expected: config.n,
            got: xs.len(),
        });
    }
    let score = typicality_score(model, config.entropy, xs)?;
    Ok(TestOutcome {
        score,
        accepted: config.accepts(score),
        config: *config,
    })
}

/// Scores of consecutive length-`n` sequences of `nll` values (a trailing
/// partial sequence is dropped).
pub fn sequence_scores_from_nll(nll: &[f64], n: usize, entropy: f64) -> Vec<f64> {
    nll.chunks_exact(n)
        .map(|s| (s.iter().sum::<f64>() / n as f64 - entropy).abs())
        .collect()
}

/// Scores of the consecutive length-`n` sequences of `xs` under `model`.
pub fn sequence_scores(
    model: &MixtureModel,
    entropy: f64,
    xs: &SampleBatch,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("sequence length n must be at least 1"));
    }
    let nll = model.neg_log_densities(xs)?;
    Ok(sequence_scores_from_nll(&nll, n, entropy))
}

/// Scores of `count` fresh length-`n` sequences drawn from `model` (the
/// rows of `model.sample(count * n, seed)`), without materializing them.
pub fn own_sequence_scores(
    model: &MixtureModel,
    entropy: f64,
    n: usize,
    count: usize,
    seed: u64,
) -> Vec<f64> {
    let d = model.dim();
    let mut nll = Vec::with_capacity(count * n);
    let mut scratch = Vec::with_capacity(model.num_components());
    model.for_each_sample_chunk(count * n, seed, |rows, _| {
        for x in rows.chunks_exact(d) {
            nll.push(-model.log_density_scratch(x, &mut scratch));
        }
    });
    sequence_scores_from_nll(&nll, n, entropy)
}

/// Fraction of the length-`n` sequences of `xs` accepted by `config`.
pub fn acceptance_rate(
    model: &MixtureModel,
    config: &TypicalityConfig,
    xs: &SampleBatch,
) -> Result<f64> {
    let scores = sequence_scores(model, config.entropy, xs, config.n)?;
    if scores.is_empty() {
        return Err(Error::Empty("no complete sequence in batch"));
    }
    let hits = scores.iter().filter(|&&s| config.accepts(s)).count();
    Ok(hits as f64 / scores.len() as f64)
}

/// The `target_coverage` quantile (lower convention, see
/// [`math::lower_quantile`]) of the typicality scores of `num_sequences`
/// fresh length-`n` sequences drawn from `model` with `seed`.
pub fn calibrate_epsilon(
    model: &MixtureModel,
    entropy: f64,
    n: usize,
    target_coverage: f64,
    num_sequences: usize,
    seed: u64,
) -> Result<f64> {
    if !(target_coverage > 0.0 && target_coverage <= 1.0) {
        return Err(Error::invalid("target_coverage must lie in (0, 1]"));
    }
    if n == 0 {
        return Err(Error::invalid("sequence length n must be at least 1"));
    }
    if num_sequences < MIN_CALIBRATION_SEQUENCES {
        return Err(Error::invalid(alloc::format!(
            "calibration needs at least {MIN_CALIBRATION_SEQUENCES} sequences"
        )));
    }
    let mut scores = own_sequence_scores(model, entropy, n, num_sequences, seed);
    scores.sort_by(f64::total_cmp);
    let eps = math::lower_quantile(&scores, target_coverage);
    if eps > 0.0 {
        Ok(eps)
    } else {
        // a zero score can only come from a degenerate, perfectly
        // concentrated score distribution; keep epsilon positive
        Ok(f64::MIN_POSITIVE)
    }
}

/// How a [`CalibratedModel`] is built: entropy sample count, sequence length,
/// coverage target and calibration sequence count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSettings {
    pub entropy_samples: usize,
    pub n: usize,
    pub target_coverage: f64,
    pub num_sequences: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            entropy_samples: crate::estimate::DEFAULT_ENTROPY_SAMPLES,
            n: 1,
            target_coverage: 0.95,
            num_sequences: DEFAULT_CALIBRATION_SEQUENCES,
        }
    }
}

/// A model with its estimated entropy and its calibrated typical set.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedModel {
    pub model: MixtureModel,
    pub entropy: EntropyEstimate,
    pub config: TypicalityConfig,
}

impl CalibratedModel {
    /// Estimates the entropy from `derive_seed(seed, ENTROPY)` and calibrates
    /// epsilon on fresh draws from `derive_seed(seed, CALIBRATE)`.
    pub fn calibrate(
        model: MixtureModel,
        settings: &CalibrationSettings,
        seed: u64,
    ) -> Result<Self> {
        let entropy = estimate_entropy(
            &model,
            settings.entropy_samples,
            derive_seed(seed, tag::ENTROPY),
        )?;
        let epsilon = calibrate_epsilon(
            &model,
            entropy.value,
            settings.n,
            settings.target_coverage,
            settings.num_sequences,
            derive_seed(seed, tag::CALIBRATE),
        )?;
        let mut config = TypicalityConfig::new(epsilon, settings.n, entropy.value)?;
        config.entropy_std_error = entropy.std_error;
        Ok(Self {
            model,
            entropy,
            config,
        })
    }

    /// Typicality score of one point (the `n = 1` score, whatever `config.n`
    /// is).
    pub fn point_score(&self, x: &[f64]) -> Result<f64> {
        Ok((-self.model.log_density(x)? - self.config.entropy).abs())
    }

    pub fn test(&self, xs: &SampleBatch) -> Result<TestOutcome> {
        is_typical(&self.model, &self.config, xs)
    }

    pub fn acceptance_rate(&self, xs: &SampleBatch) -> Result<f64> {
        acceptance_rate(&self.model, &self.config, xs)
    }
}

/// Empirical α and β of the test defined by `(null_model, config)`: α from
/// `trials` sequences of the null model, β from `trials` sequences of
/// `alt_model`.
pub fn estimate_error_rates(
    null_model: &MixtureModel,
    config: &TypicalityConfig,
    alt_model: &MixtureModel,
    trials: usize,
    seed: u64,
) -> Result<ErrorRates> {
    if trials < 100 {
        return Err(Error::invalid(
            "error-rate estimation needs at least 100 trials",
        ));
    }
    if null_model.dim() != alt_model.dim() {
        return Err(Error::DimensionMismatch {
            expected: null_model.dim(),
            got: alt_model.dim(),
        });
    }
    let n = config.n;
    let null = null_model.sample(trials * n, derive_seed(seed, tag::NULL))?;
    let alt = alt_model.sample(trials * n, derive_seed(seed, tag::ALT))?;
    let alpha = 1.0 - acceptance_rate(null_model, config, &null)?;
    let beta = acceptance_rate(null_model, config, &alt)?;
    Ok(ErrorRates {
        alpha,
        beta,
        trials,
        alpha_stderr: math::binomial_stderr(alpha, trials),
        beta_stderr: math::binomial_stderr(beta, trials),
    })
}
