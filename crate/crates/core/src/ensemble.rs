//! Ensembles of learned densities and the multi-typical set.
//!
//! A sequence is multi-typical for `{q_1, …, q_K}` when it is typical for
//! every member. With one shared epsilon this is
//! `max_k |-(1/n) ln q_k(x^n) - h_k| < ε`; with per-member calibrated
//! epsilons it is the conjunction of the members' own tests.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::mixture::{BaseDistributionConfig, MixtureModel, SampleBatch};
use crate::rng::{derive_seed, tag};
use crate::training::{fit_mle_split, FittedModel, LearningCurve, TrainConfig};
use crate::typicality::{CalibratedModel, CalibrationSettings};
use crate::{Error, Result};

/// Which epsilon(s) define the multi-typical set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonMode {
    /// One epsilon for every member.
    Shared(f64),
    /// Each member's own calibrated epsilon.
    PerMember,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub num_members: usize,
    pub num_components: usize,
    pub init: BaseDistributionConfig,
    pub train: TrainConfig,
    pub calibration: CalibrationSettings,
}

/// One trained member with its training record.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub calibrated: CalibratedModel,
    pub curve: LearningCurve,
    pub restarts: usize,
    /// Seed the member's training run used.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberFailure {
    pub index: usize,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<CalibratedModel>,
    /// Members that failed to train; nonempty means the ensemble is partial.
    pub failures: Vec<MemberFailure>,
}

impl Ensemble {
    pub fn new(members: Vec<CalibratedModel>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("ensemble"))?;
        let (d, n) = (first.model.dim(), first.config.n);
        for m in &members {
            if m.model.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.model.dim(),
                });
            }
            if m.config.n != n {
                return Err(Error::invalid("ensemble members must share n"));
            }
        }
        Ok(Self {
            members,
            failures: Vec::new(),
        })
    }

    /// Calibrates each model with `settings`; member `k` uses
    /// `derive_seed(seed, MEMBER + k)`.
    pub fn calibrate(
        models: Vec<MixtureModel>,
        settings: &CalibrationSettings,
        seed: u64,
    ) -> Result<Self> {
        let members = models
            .into_iter()
            .enumerate()
            .map(|(k, m)| CalibratedModel::calibrate(m, settings, member_seed(seed, k)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].model.dim()
    }

    pub fn n(&self) -> usize {
        self.members[0].config.n
    }

    pub fn models(&self) -> impl Iterator<Item = &MixtureModel> {
        self.members.iter().map(|m| &m.model)
    }

    /// The ensemble with one more member.
    pub fn with_member(&self, member: CalibratedModel) -> Result<Self> {
        let mut members = self.members.clone();
        members.push(member);
        Self::new(members)
    }

    /// Per-member typicality scores of `xs`.
    pub fn member_scores(&self, xs: &SampleBatch) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        self.members
            .iter()
            .map(|m| crate::typicality::typicality_score(&m.model, m.config.entropy, xs))
            .collect()
    }
}

pub fn member_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, tag::MEMBER.wrapping_add(k as u64))
}

/// Trains and calibrates one ensemble member. Member `k` trains with
/// `member_seed(seed, k)`; data are shared across members.
pub fn train_member(
    train: &SampleBatch,
    test: &SampleBatch,
    cfg: &EnsembleConfig,
    k: usize,
    seed: u64,
) -> Result<Member> {
    let mseed = member_seed(seed, k);
    let tcfg = TrainConfig {
        seed: mseed,
        ..cfg.train.clone()
    };
    let FittedModel {
        model,
        curve,
        restarts,
    } = fit_mle_split(train, test, cfg.num_components, &cfg.init, &tcfg)?;
    let calibrated = CalibratedModel::calibrate(model, &cfg.calibration, mseed)?;
    Ok(Member {
        calibrated,
        curve,
        restarts,
        seed: mseed,
    })
}

/// Assembles member results, keeping failures on the side. Errors only if
/// every member failed.
pub fn assemble(results: Vec<Result<Member>>) -> Result<(Ensemble, Vec<Member>)> {
    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => members.push(m),
            Err(error) => {
                log::warn!("ensemble member {index} failed: {error}");
                failures.push(MemberFailure { index, error });
            }
        }
    }
    if members.is_empty() {
        return Err(failures
            .into_iter()
            .next()
            .map(|f| f.error)
            .unwrap_or(Error::Empty("ensemble")));
    }
    let mut ensemble = Ensemble::new(members.iter().map(|m| m.calibrated.clone()).collect())?;
    ensemble.failures = failures;
    Ok((ensemble, members))
}

/// `K` independent fits with derived seeds, each calibrated at the
/// configured coverage. Returns the ensemble and the per-member records.
pub fn train_ensemble(
    train: &SampleBatch,
    test: &SampleBatch,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<(Ensemble, Vec<Member>)> {
    if cfg.num_members == 0 {
        return Err(Error::invalid("ensemble needs at least one member"));
    }
    let results = (0..cfg.num_members)
        .map(|k| train_member(train, test, cfg, k, seed))
        .collect();
    assemble(results)
}

/// `max_k |-(1/n) ln q_k(x^n) - h_k|`.
pub fn multi_typicality_score(ensemble: &Ensemble, xs: &SampleBatch) -> Result<f64> {
    Ok(ensemble
        .member_scores(xs)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome {
    /// The max-over-members score.
    pub score: f64,
    pub accepted: bool,
    pub member_accepted: Vec<bool>,
}

/// Multi-typical test of one length-`n` sequence.
pub fn is_multi_typical(
    ensemble: &Ensemble,
    mode: EpsilonMode,
    xs: &SampleBatch,
) -> Result<EnsembleOutcome> {
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    if xs.len() != ensemble.n() {
        return Err(Error::LengthMismatch {
            expected: ensemble.n(),
            got: xs.len(),
        });
    }
    let scores = ensemble.member_scores(xs)?;
    let member_accepted: Vec<bool> = match mode {
        EpsilonMode::Shared(eps) => scores.iter().map(|&s| s < eps).collect(),
        EpsilonMode::PerMember => scores
            .iter()
            .zip(&ensemble.members)
            .map(|(&s, m)| m.config.accepts(s))
            .collect(),
    };
    let score = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let accepted = match mode {
        EpsilonMode::Shared(eps) => score < eps,
        EpsilonMode::PerMember => member_accepted.iter().all(|&a| a),
    };
    Ok(EnsembleOutcome {
        score,
        accepted,
        member_accepted,
    })
}

/// Pointwise (`n = 1`) multi-typical acceptance of every row of `xs`.
pub fn multi_typical_mask(
    ensemble: &Ensemble,
    mode: EpsilonMode,
    xs: &SampleBatch,
) -> Result<Vec<bool>> {
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let mut mask = vec![true; xs.len()];
    for m in &ensemble.members {
        let eps = match mode {
            EpsilonMode::Shared(e) => e,
            EpsilonMode::PerMember => m.config.epsilon,
        };
        let nll = m.model.neg_log_densities(xs)?;
        for (keep, v) in mask.iter_mut().zip(nll) {
            *keep &= (v - m.config.entropy).abs() < eps;
        }
    }
    Ok(mask)
}

/// Percentage table: entry `(i, j)` is the share of samples from
/// distribution `j` inside the typical set of distribution `i`; index 0 is
/// the ground truth, `1..=K` the members.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Row-major `(K+1) × (K+1)` percentages in `[0, 100]`.
    pub entries: Vec<f64>,
    pub samples_per_cell: usize,
}

impl IntersectionMatrix {
    pub fn size(&self) -> usize {
        self.row_labels.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.size() + col]
    }
}

/// Column `j` draws `samples_per_cell` sequences of length `n` from
/// distribution `j` with `derive_seed(seed, CELL + j)`; every row tests the
/// same draws.
pub fn intersection_matrix(
    ground_truth: &CalibratedModel,
    ensemble: &Ensemble,
    samples_per_cell: usize,
    seed: u64,
) -> Result<IntersectionMatrix> {
    if samples_per_cell < 100 {
        return Err(Error::invalid("samples_per_cell must be at least 100"));
    }
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    if ground_truth.config.n != ensemble.n() {
        return Err(Error::invalid("ground truth and ensemble must share n"));
    }
    let dists: Vec<&CalibratedModel> = core::iter::once(ground_truth)
        .chain(ensemble.members.iter())
        .collect();
    let labels: Vec<String> = (0..dists.len())
        .map(|i| {
            if i == 0 {
                "p".to_string()
            } else {
                alloc::format!("q{i}")
            }
        })
        .collect();
    let size = dists.len();
    let n = ground_truth.config.n;
    let mut entries = vec![0.0; size * size];
    for (j, col) in dists.iter().enumerate() {
        let xs = col.model.sample(
            samples_per_cell * n,
            derive_seed(seed, tag::CELL.wrapping_add(j as u64)),
        )?;
        for (i, row) in dists.iter().enumerate() {
            entries[i * size + j] = 100.0 * row.acceptance_rate(&xs)?;
        }
    }
    Ok(IntersectionMatrix {
        row_labels: labels.clone(),
        col_labels: labels,
        entries,
        samples_per_cell,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionReport {
    pub total_generated: usize,
    pub survivors: usize,
    pub survivor_fraction: f64,
    /// Share of survivors inside the ground-truth typical set.
    pub survivor_gt_typical_fraction: Option<f64>,
    /// Share of fresh ground-truth samples inside the multi-typical set.
    pub gt_multi_typical_fraction: Option<f64>,
}

/// How the ground-truth multi-typical fraction is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthCheck<'a> {
    pub model: &'a CalibratedModel,
    pub mode: EpsilonMode,
}

/// Draws `per_model_count` points from every member (member `k` from
/// `derive_seed(seed, MEMBER + k)`), pools them in member order and keeps
/// the points typical for every member at that member's epsilon
/// (pointwise, so the ensemble must have `n = 1`). With a ground truth, also
/// reports how many survivors are ground-truth typical and how many of
/// `per_model_count` fresh ground-truth points (drawn with
/// `derive_seed(seed, GROUND_TRUTH)`) are multi-typical under `check.mode`.
pub fn rejection_sample_multi_typical(
    ensemble: &Ensemble,
    per_model_count: usize,
    ground_truth: Option<GroundTruthCheck<'_>>,
    seed: u64,
) -> Result<(SampleBatch, RejectionReport)> {
    if per_model_count == 0 {
        return Err(Error::invalid("per_model_count must be at least 1"));
    }
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    if ensemble.n() != 1 {
        return Err(Error::invalid(
            "rejection sampling tests single points (n = 1)",
        ));
    }
    let mut pool = SampleBatch::empty(ensemble.dim(), "pool", seed);
    for (k, m) in ensemble.members.iter().enumerate() {
        pool.extend(&m.model.sample(per_model_count, member_seed(seed, k))?)?;
    }
    let mask = multi_typical_mask(ensemble, EpsilonMode::PerMember, &pool)?;
    let keep: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect();
    let survivors = pool.select(&keep).with_label("multi-typical survivors");
    let total = pool.len();

    let (survivor_gt, gt_multi) = match ground_truth {
        None => (None, None),
        Some(GroundTruthCheck { model: gt, mode }) => {
            let surv_gt = if survivors.is_empty() {
                None
            } else {
                Some(point_acceptance(gt, &survivors)?)
            };
            let gt_samples = gt
                .model
                .sample(per_model_count, derive_seed(seed, tag::GROUND_TRUTH))?;
            let gt_mask = multi_typical_mask(ensemble, mode, &gt_samples)?;
            let frac = gt_mask.iter().filter(|&&b| b).count() as f64 / gt_mask.len() as f64;
            (surv_gt, Some(frac))
        }
    };
    let report = RejectionReport {
        total_generated: total,
        survivors: survivors.len(),
        survivor_fraction: survivors.len() as f64 / total as f64,
        survivor_gt_typical_fraction: survivor_gt,
        gt_multi_typical_fraction: gt_multi,
    };
    Ok((survivors, report))
}

/// One epsilon for the multi-typical test: the `coverage` quantile of the
/// multi-typicality score over consecutive length-`n` sequences of held-out
/// null data. Trailing rows that do not fill a sequence are ignored.
pub fn calibrate_shared_epsilon(
    ensemble: &Ensemble,
    held_out: &SampleBatch,
    coverage: f64,
) -> Result<f64> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid("coverage must lie in (0, 1]"));
    }
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let n = ensemble.n();
    let sequences = held_out.len() / n;
    if sequences == 0 {
        return Err(Error::Empty("held-out sequences"));
    }
    let mut max_scores = vec![f64::NEG_INFINITY; sequences];
    for m in &ensemble.members {
        let nll = m.model.neg_log_densities(held_out)?;
        let scores =
            crate::typicality::sequence_scores_from_nll(&nll[..sequences * n], n, m.config.entropy);
        for (best, s) in max_scores.iter_mut().zip(scores) {
            *best = best.max(s);
        }
    }
    max_scores.sort_by(f64::total_cmp);
    Ok(math::lower_quantile(&max_scores, coverage))
}

/// Share of rows of `xs` that are pointwise typical for `m`.
pub fn point_acceptance(m: &CalibratedModel, xs: &SampleBatch) -> Result<f64> {
    let nll = m.model.neg_log_densities(xs)?;
    let hits = nll
        .iter()
        .filter(|&&v| m.config.accepts((v - m.config.entropy).abs()))
        .count();
    Ok(hits as f64 / nll.len() as f64)
}

/// `ln m̃(x) = ln q_k(x) + h_k` for the least typical member `k`, the one
/// whose `|ln q_k(x) + h_k|` is largest, ties to the lowest index. Then
/// `|ln m̃(x)| < ε` exactly when `x` is multi-typical with shared `ε`.
pub fn min_typicality_log_density(ensemble: &Ensemble, x: &[f64]) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let mut best = f64::NAN;
    let mut best_abs = f64::NEG_INFINITY;
    for m in &ensemble.members {
        let v = m.model.log_density(x)? + m.config.entropy;
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = v;
        }
    }
    Ok(best)
}

/// Midpoint grid over an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cells per axis.
    pub resolution: usize,
}

impl Grid {
    /// Box covering every component of `models` out to `width` standard
    /// deviations (largest per-coordinate standard deviation) from the means.
    pub fn covering<'a, I>(models: I, width: f64, resolution: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a MixtureModel>,
    {
        let mut lower: Vec<f64> = Vec::new();
        let mut upper: Vec<f64> = Vec::new();
        for m in models {
            if lower.is_empty() {
                lower = vec![f64::INFINITY; m.dim()];
                upper = vec![f64::NEG_INFINITY; m.dim()];
            }
            if m.dim() != lower.len() {
                return Err(Error::DimensionMismatch {
                    expected: lower.len(),
                    got: m.dim(),
                });
            }
            for c in m.components() {
                let sd = c
                    .log_var()
                    .iter()
                    .map(|&lv| math::exp(0.5 * lv))
                    .fold(0.0, f64::max);
                for i in 0..m.dim() {
                    lower[i] = lower[i].min(c.mean()[i] - width * sd);
                    upper[i] = upper[i].max(c.mean()[i] + width * sd);
                }
            }
        }
        if lower.is_empty() {
            return Err(Error::Empty("grid models"));
        }
        Ok(Self {
            lower,
            upper,
            resolution,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn refined(&self) -> Self {
        Self {
            resolution: self.resolution * 2,
            ..self.clone()
        }
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.upper[i] - self.lower[i]) / self.resolution as f64)
            .product()
    }

    /// Calls `f` on the midpoint of every cell (supports 1-D and 2-D).
    pub fn for_each_midpoint<F: FnMut(&[f64])>(&self, mut f: F) -> Result<()> {
        let r = self.resolution;
        if r == 0 {
            return Err(Error::Resolution("grid resolution must be positive".into()));
        }
        let step: Vec<f64> = (0..self.dim())
            .map(|i| (self.upper[i] - self.lower[i]) / r as f64)
            .collect();
        match self.dim() {
            1 => {
                for a in 0..r {
                    f(&[self.lower[0] + (a as f64 + 0.5) * step[0]]);
                }
            }
            2 => {
                for a in 0..r {
                    let x0 = self.lower[0] + (a as f64 + 0.5) * step[0];
                    for b in 0..r {
                        f(&[x0, self.lower[1] + (b as f64 + 0.5) * step[1]]);
                    }
                }
            }
            d => {
                return Err(Error::invalid(alloc::format!(
                    "grid quadrature supports d <= 2, got {d}"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationReport {
    /// `ln ∫ m̃`.
    pub log_z: f64,
    /// `E_m[-ln m]` for `m = m̃ / Z`.
    pub expected_nll_under_m: f64,
    /// `|Z_fine - Z_coarse| / Z_fine` between the grid and its refinement.
    pub relative_refinement_change: f64,
}

fn mtilde_moments(ensemble: &Ensemble, grid: &Grid) -> Result<(f64, f64)> {
    let dv = grid.cell_volume();
    // first pass: max log m̃ for a shifted sum
    let mut vals = Vec::new();
    let mut err = None;
    grid.for_each_midpoint(|x| match min_typicality_log_density(ensemble, x) {
        Ok(v) => vals.push(v),
        Err(e) => err = Some(e),
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut first = 0.0;
    for &v in &vals {
        let w = math::exp(v - max);
        z += w;
        first += w * v;
    }
    let log_z = max + math::ln(z * dv);
    // E_m[-ln m] = E_m[-ln m̃] + ln Z
    let expected = -first / z + log_z;
    Ok((log_z, expected))
}

/// `Z = ∫ m̃` and `E_m[-ln m]` by midpoint quadrature (d ≤ 2). Fails with a
/// resolution error when refining the grid moves `Z` by more than 1%.
pub fn check_mtilde_normalization(ensemble: &Ensemble, grid: &Grid) -> Result<NormalizationReport> {
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    if ensemble.dim() > 2 || grid.dim() != ensemble.dim() {
        return Err(Error::invalid(
            "normalization check needs d <= 2 and a matching grid",
        ));
    }
    let (coarse_log_z, _) = mtilde_moments(ensemble, grid)?;
    let (log_z, expected) = mtilde_moments(ensemble, &grid.refined())?;
    let rel = (1.0 - math::exp(coarse_log_z - log_z)).abs();
    if rel > 0.01 {
        return Err(Error::Resolution(alloc::format!(
            "Z changed by {:.3}% on refinement",
            100.0 * rel
        )));
    }
    Ok(NormalizationReport {
        log_z,
        expected_nll_under_m: expected,
        relative_refinement_change: rel,
    })
}
