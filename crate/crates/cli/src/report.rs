//! The `bounds-check` report: bound values, condition predicates and the
//! Monte-Carlo / grid validations for one pair of 1-D Gaussians.

use multitypical_core::bounds::{
    estimate_volume_ratio, estimate_volume_ratio_mc, theorem1_beta_bound, theorem2_conditions,
    theorem3_condition, validate_lemma0_mc,
};
use multitypical_core::estimate::{closed_form_kl_gaussian, gaussian_entropy};
use multitypical_core::{GaussianComponent, MixtureModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct BoundInputs {
    /// Sequence length.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Entropy of the null density (defaults to that of q_b).
    #[arg(long)]
    pub h_p: Option<f64>,
    /// Entropy of the alternative (defaults to that of q_a).
    #[arg(long)]
    pub h_alt: Option<f64>,
    /// D_KL(alternative ‖ null) (defaults to D_KL(q_a ‖ q_b)).
    #[arg(long)]
    pub kl_alt_p: Option<f64>,
    /// Ensemble size K.
    #[arg(long, default_value_t = 5)]
    pub members: usize,
    /// Comma-separated member divergences d_k.
    #[arg(long, value_delimiter = ',')]
    pub d_k: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub r: f64,
    /// D_KL(q_a ‖ q_b) (defaults to the closed form).
    #[arg(long)]
    pub kl_ab: Option<f64>,
    #[arg(long)]
    pub h_a: Option<f64>,
    #[arg(long)]
    pub h_b: Option<f64>,
    /// 1-D Gaussian q_a.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mean_a: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub log_var_a: f64,
    /// 1-D Gaussian q_b.
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub mean_b: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub log_var_b: f64,
    /// Monte-Carlo sequences for the probability and volume checks.
    #[arg(long, default_value_t = 20_000)]
    pub trials: usize,
    /// Cells of the n = 1 volume-ratio grid.
    #[arg(long, default_value_t = 20_000)]
    pub grid_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedInputs {
    pub n: usize,
    pub epsilon: f64,
    pub h_p: f64,
    pub h_alt: f64,
    pub kl_alt_p: f64,
    pub members: usize,
    pub d_k: Vec<f64>,
    pub r: f64,
    pub kl_ab: f64,
    pub h_a: f64,
    pub h_b: f64,
    pub q_a: [f64; 2],
    pub q_b: [f64; 2],
    pub trials: usize,
    pub grid_resolution: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Json {
    pub beta_bound: f64,
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Json {
    pub condition1_lhs: f64,
    pub condition1: bool,
    pub condition2: bool,
    /// `null` when undefined.
    pub d_threshold: Option<f64>,
    pub small_n_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Json {
    pub holds: bool,
    pub threshold: Option<f64>,
    pub small_n_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma0Json {
    pub estimated_prob: f64,
    pub std_error: f64,
    pub bound: f64,
    pub holds: bool,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeJson {
    /// `n = 1`, grid quadrature.
    pub grid_ratio: Option<f64>,
    /// Length-`n` sequences, importance sampling.
    pub sequence_ratio: Option<f64>,
    pub sequence_effective_samples: Option<f64>,
    pub below_r_grid: Option<bool>,
    pub below_r_sequence: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub inputs: ResolvedInputs,
    pub theorem1: Theorem1Json,
    pub theorem2: Theorem2Json,
    pub theorem3: Theorem3Json,
    pub lemma0: Lemma0Json,
    pub volume_ratio: VolumeJson,
}

pub fn bounds_report(args: &BoundInputs, seed: u64) -> anyhow::Result<BoundsReport> {
    let a = GaussianComponent::new(vec![args.mean_a], vec![args.log_var_a])?;
    let b = GaussianComponent::new(vec![args.mean_b], vec![args.log_var_b])?;
    let (ha, hb) = (gaussian_entropy(&a), gaussian_entropy(&b));
    let kl = closed_form_kl_gaussian(&a, &b)?;
    let inputs = ResolvedInputs {
        n: args.n,
        epsilon: args.epsilon,
        h_p: args.h_p.unwrap_or(hb),
        h_alt: args.h_alt.unwrap_or(ha),
        kl_alt_p: args.kl_alt_p.unwrap_or(kl),
        members: args.members,
        d_k: args.d_k.clone(),
        r: args.r,
        kl_ab: args.kl_ab.unwrap_or(kl),
        h_a: args.h_a.unwrap_or(ha),
        h_b: args.h_b.unwrap_or(hb),
        q_a: [args.mean_a, args.log_var_a],
        q_b: [args.mean_b, args.log_var_b],
        trials: args.trials,
        grid_resolution: args.grid_resolution,
        seed,
    };
    let i = &inputs;
    let t1 = theorem1_beta_bound(i.n, i.epsilon, i.kl_alt_p, i.h_alt, i.h_p)?;
    let t2 = theorem2_conditions(i.n, i.epsilon, i.members, &i.d_k)?;
    let t3 = theorem3_condition(i.n, i.epsilon, i.r, i.kl_ab, i.h_a, i.h_b)?;
    let l0 = validate_lemma0_mc(&a, &b, i.n, i.epsilon, i.trials, seed)?;

    let (ma, mb) = (MixtureModel::single(a), MixtureModel::single(b));
    let grid = estimate_volume_ratio(&ma, ha, &mb, hb, i.epsilon, i.grid_resolution).ok();
    let seq = estimate_volume_ratio_mc(&ma, ha, &mb, hb, (i.n, i.epsilon), i.trials, seed).ok();
    Ok(BoundsReport {
        theorem1: Theorem1Json {
            beta_bound: t1.value,
            vacuous: t1.vacuous,
        },
        theorem2: Theorem2Json {
            condition1_lhs: t2.condition1_lhs,
            condition1: t2.condition1,
            condition2: t2.condition2,
            d_threshold: t2.d_threshold,
            small_n_warning: t2.small_n_warning,
        },
        theorem3: Theorem3Json {
            holds: t3.holds,
            threshold: t3.threshold,
            small_n_warning: t3.small_n_warning,
        },
        lemma0: Lemma0Json {
            estimated_prob: l0.estimated_prob,
            std_error: l0.std_error,
            bound: l0.bound,
            holds: l0.holds,
            trials: l0.trials,
        },
        volume_ratio: VolumeJson {
            grid_ratio: grid,
            sequence_ratio: seq.map(|s| s.ratio),
            sequence_effective_samples: seq.map(|s| s.effective_samples),
            below_r_grid: grid.map(|g| g < i.r),
            below_r_sequence: seq.map(|s| s.ratio < i.r),
        },
        inputs,
    })
}
