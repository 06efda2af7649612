//! Experiment configuration: JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use multitypical_core::ensemble::EnsembleConfig;
use multitypical_core::mixture::{BaseDistributionConfig, ScaleConvention};
use multitypical_core::training::{TrainConfig, TrainMethod};
use multitypical_core::typicality::CalibrationSettings;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaConvention {
    /// `-ln σ²` is drawn from the range.
    Variance,
    /// `-ln σ` is drawn from the range.
    StdDev,
}

impl From<SigmaConvention> for ScaleConvention {
    fn from(c: SigmaConvention) -> Self {
        match c {
            SigmaConvention::Variance => ScaleConvention::Variance,
            SigmaConvention::StdDev => ScaleConvention::StdDev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gradient,
    Adam,
    Em,
}

impl From<Method> for TrainMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Gradient => TrainMethod::Gradient,
            Method::Adam => TrainMethod::Adam,
            Method::Em => TrainMethod::Em,
        }
    }
}

/// Epsilon used when asking how many ground-truth samples are multi-typical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GtEpsilon {
    /// One epsilon for every member, calibrated on held-out data.
    HeldOut,
    /// Each member's own calibrated epsilon.
    PerMember,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    /// Mixture components, in the ground truth and in every learned model.
    pub num_components: usize,
    /// Ensemble size.
    pub num_members: usize,
    pub radius: f64,
    pub log_var_range: [f64; 2],
    pub sigma_convention: SigmaConvention,
    pub train_n: usize,
    pub test_n: usize,
    pub samples_per_cell: usize,
    pub per_model_count: usize,
    pub target_coverage: f64,
    pub n: usize,
    pub entropy_samples: usize,
    pub calibration_sequences: usize,
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gt_epsilon: GtEpsilon,
    pub num_projections: usize,
    pub projection_samples: usize,
    pub seed: u64,
    /// Where outputs go; not part of the recorded experiment.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            num_components: 20,
            num_members: 5,
            radius: 3.0,
            log_var_range: [1.0, 3.0],
            sigma_convention: SigmaConvention::StdDev,
            train_n: 10_000,
            test_n: 2_000,
            samples_per_cell: 1_000,
            per_model_count: 1_000,
            target_coverage: 0.95,
            n: 1,
            entropy_samples: 100_000,
            calibration_sequences: 20_000,
            method: Method::Adam,
            epochs: 60,
            batch_size: 128,
            learning_rate: 3e-3,
            gt_epsilon: GtEpsilon::HeldOut,
            num_projections: 4,
            projection_samples: 1_000,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let counts = [
            ("dim", self.dim),
            ("num_components", self.num_components),
            ("num_members", self.num_members),
            ("train_n", self.train_n),
            ("test_n", self.test_n),
            ("samples_per_cell", self.samples_per_cell),
            ("per_model_count", self.per_model_count),
            ("n", self.n),
            ("entropy_samples", self.entropy_samples),
            ("calibration_sequences", self.calibration_sequences),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("projection_samples", self.projection_samples),
        ];
        for (name, v) in counts {
            if v == 0 {
                bail!("{name} must be positive");
            }
        }
        if !(self.target_coverage > 0.0 && self.target_coverage < 1.0) {
            bail!("target_coverage must lie in (0, 1)");
        }
        if self.dim < 2 && self.num_projections > 0 {
            bail!("projections need dim >= 2");
        }
        self.base().validate()?;
        self.train().validate()?;
        Ok(())
    }

    pub fn base(&self) -> BaseDistributionConfig {
        BaseDistributionConfig {
            dim: self.dim,
            num_components: self.num_components,
            radius: self.radius,
            log_scale_low: self.log_var_range[0],
            log_scale_high: self.log_var_range[1],
            convention: self.sigma_convention.into(),
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            method: self.method.into(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            test_fraction: self.test_n as f64 / (self.train_n + self.test_n) as f64,
        }
    }

    pub fn calibration(&self) -> CalibrationSettings {
        CalibrationSettings {
            entropy_samples: self.entropy_samples,
            n: self.n,
            target_coverage: self.target_coverage,
            num_sequences: self.calibration_sequences,
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            num_members: self.num_members,
            num_components: self.num_components,
            init: self.base(),
            train: self.train(),
            calibration: self.calibration(),
        }
    }
}

/// Flags that override individual config fields.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Mixture components (M).
    #[arg(long)]
    pub num_components: Option<usize>,
    /// Ensemble size (K).
    #[arg(long)]
    pub num_members: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub log_var_low: Option<f64>,
    #[arg(long)]
    pub log_var_high: Option<f64>,
    /// Which scale the log range applies to.
    #[arg(long, value_enum)]
    pub sigma_convention: Option<SigmaConvention>,
    #[arg(long)]
    pub train_n: Option<usize>,
    #[arg(long)]
    pub test_n: Option<usize>,
    #[arg(long)]
    pub samples_per_cell: Option<usize>,
    #[arg(long)]
    pub per_model_count: Option<usize>,
    #[arg(long)]
    pub target_coverage: Option<f64>,
    /// Sequence length of the typicality test.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub entropy_samples: Option<usize>,
    #[arg(long)]
    pub calibration_sequences: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub gt_epsilon: Option<GtEpsilon>,
    #[arg(long)]
    pub num_projections: Option<usize>,
    #[arg(long)]
    pub projection_samples: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        set!(
            seed,
            output_dir,
            dim,
            num_components,
            num_members,
            radius,
            sigma_convention,
            train_n,
            test_n,
            samples_per_cell,
            per_model_count,
            target_coverage,
            n,
            entropy_samples,
            calibration_sequences,
            method,
            epochs,
            batch_size,
            learning_rate,
            gt_epsilon,
            num_projections,
            projection_samples
        );
        if let Some(v) = self.log_var_low {
            c.log_var_range[0] = v;
        }
        if let Some(v) = self.log_var_high {
            c.log_var_range[1] = v;
        }
        c.validate()?;
        Ok(c)
    }
}
