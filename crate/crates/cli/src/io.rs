//! File formats: model JSON, calibration JSON and the CSV exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use multitypical_core::ensemble::{Ensemble, IntersectionMatrix, RejectionReport};
use multitypical_core::training::LearningCurve;
use multitypical_core::typicality::{CalibratedModel, TypicalityConfig};
use multitypical_core::{EntropyEstimate, GaussianComponent, MixtureModel};
use serde::{Deserialize, Serialize};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentJson {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub dim: usize,
    pub num_components: usize,
    pub log_weights: Vec<f64>,
    pub components: Vec<ComponentJson>,
    pub format_version: u32,
}

impl From<&MixtureModel> for ModelJson {
    fn from(m: &MixtureModel) -> Self {
        Self {
            dim: m.dim(),
            num_components: m.num_components(),
            log_weights: m.log_weights().to_vec(),
            components: m
                .components()
                .iter()
                .map(|c| ComponentJson {
                    mean: c.mean().to_vec(),
                    log_var: c.log_var().to_vec(),
                })
                .collect(),
            format_version: MODEL_FORMAT_VERSION,
        }
    }
}

impl ModelJson {
    pub fn into_model(self) -> anyhow::Result<MixtureModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            bail!("unsupported model format_version {}", self.format_version);
        }
        if self.components.len() != self.num_components {
            bail!(
                "num_components is {} but {} components are listed",
                self.num_components,
                self.components.len()
            );
        }
        let components = self
            .components
            .into_iter()
            .map(|c| GaussianComponent::new(c.mean, c.log_var))
            .collect::<Result<Vec<_>, _>>()?;
        if components.iter().any(|c| c.dim() != self.dim) {
            bail!("component dimension differs from dim = {}", self.dim);
        }
        Ok(MixtureModel::from_normalized(components, self.log_weights)?)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn save_model(path: &Path, model: &MixtureModel) -> anyhow::Result<()> {
    if model.log_weights().iter().any(|w| !w.is_finite()) {
        bail!("models with zero-weight components cannot be stored as JSON");
    }
    write_json(path, &ModelJson::from(model))
}

pub fn load_model(path: &Path) -> anyhow::Result<MixtureModel> {
    read_json::<ModelJson>(path)?.into_model()
}

/// A calibrated typical set without its model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationJson {
    pub label: String,
    pub model_file: String,
    pub entropy: f64,
    pub entropy_std_error: f64,
    pub entropy_samples: usize,
    pub entropy_seed: u64,
    pub epsilon: f64,
    pub n: usize,
}

impl CalibrationJson {
    pub fn new(label: &str, model_file: &str, m: &CalibratedModel) -> Self {
        Self {
            label: label.to_string(),
            model_file: model_file.to_string(),
            entropy: m.entropy.value,
            entropy_std_error: m.entropy.std_error,
            entropy_samples: m.entropy.num_samples,
            entropy_seed: m.entropy.seed,
            epsilon: m.config.epsilon,
            n: m.config.n,
        }
    }

    pub fn attach(&self, model: MixtureModel) -> anyhow::Result<CalibratedModel> {
        let mut config = TypicalityConfig::new(self.epsilon, self.n, self.entropy)?;
        config.entropy_std_error = self.entropy_std_error;
        Ok(CalibratedModel {
            model,
            entropy: EntropyEstimate {
                value: self.entropy,
                std_error: self.entropy_std_error,
                num_samples: self.entropy_samples,
                seed: self.entropy_seed,
            },
            config,
        })
    }

    /// Loads the model file relative to `dir` and attaches this calibration.
    pub fn load(&self, dir: &Path) -> anyhow::Result<CalibratedModel> {
        self.attach(load_model(&dir.join(&self.model_file))?)
    }
}

/// CSV writer with `\n` line endings.
fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> anyhow::Result<()> {
    let bytes = w.into_inner().context("flushing CSV")?;
    write_file(path, &bytes)
}

pub const CURVE_HEADER: [&str; 3] = ["epoch", "train_nll", "test_nll"];
pub const OUTCOME_HEADER: [&str; 4] = ["sequence_id", "score", "epsilon", "accepted"];
pub const MODE_WEIGHT_HEADER: [&str; 3] = ["model", "component", "weight"];
pub const NLL_HEADER: [&str; 2] = ["source", "nll"];
pub const PROJECTION_HEADER: [&str; 4] = ["basis", "source", "x", "y"];

pub fn write_learning_curve(path: &Path, curve: &LearningCurve) -> anyhow::Result<()> {
    let mut w = csv_writer();
    w.write_record(CURVE_HEADER)?;
    for (e, (tr, te)) in curve.train_nll.iter().zip(&curve.test_nll).enumerate() {
        w.write_record([e.to_string(), tr.to_string(), te.to_string()])?;
    }
    finish(path, w)
}

/// Rows `(score, epsilon, accepted)`, numbered from 0.
pub fn write_test_outcomes(path: &Path, outcomes: &[(f64, f64, bool)]) -> anyhow::Result<()> {
    let mut w = csv_writer();
    w.write_record(OUTCOME_HEADER)?;
    for (i, (score, eps, accepted)) in outcomes.iter().enumerate() {
        w.write_record([
            i.to_string(),
            score.to_string(),
            eps.to_string(),
            accepted.to_string(),
        ])?;
    }
    finish(path, w)
}

/// Table layout: one row per typical set, one column per sampling
/// distribution, percentages to one decimal.
pub fn write_intersection_matrix(path: &Path, m: &IntersectionMatrix) -> anyhow::Result<()> {
    let mut w = csv_writer();
    let mut header = vec!["typical_set".to_string()];
    header.extend(m.col_labels.iter().cloned());
    w.write_record(&header)?;
    for (i, label) in m.row_labels.iter().enumerate() {
        let mut row = vec![format!("T({label})")];
        row.extend((0..m.size()).map(|j| format!("{:.1}", m.get(i, j))));
        w.write_record(&row)?;
    }
    finish(path, w)
}

pub fn write_mode_weights(path: &Path, models: &[(String, &MixtureModel)]) -> anyhow::Result<()> {
    let mut w = csv_writer();
    w.write_record(MODE_WEIGHT_HEADER)?;
    for (label, m) in models {
        for (c, wt) in m.weights().iter().enumerate() {
            w.write_record([label.clone(), c.to_string(), wt.to_string()])?;
        }
    }
    finish(path, w)
}

pub fn write_nll_values(path: &Path, values: &[(String, Vec<f64>)]) -> anyhow::Result<()> {
    let mut w = csv_writer();
    w.write_record(NLL_HEADER)?;
    for (label, vs) in values {
        for v in vs {
            w.write_record([label.as_str(), &v.to_string()])?;
        }
    }
    finish(path, w)
}

/// Rows `(basis, source, x, y)`.
pub fn write_projections(path: &Path, rows: &[(usize, String, f64, f64)]) -> anyhow::Result<()> {
    let mut w = csv_writer();
    w.write_record(PROJECTION_HEADER)?;
    for (b, s, x, y) in rows {
        w.write_record([b.to_string(), s.clone(), x.to_string(), y.to_string()])?;
    }
    finish(path, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionJson {
    pub total_generated: usize,
    pub survivors: usize,
    pub survivor_fraction: f64,
    pub survivor_gt_typical_fraction: Option<f64>,
    pub gt_multi_typical_fraction: Option<f64>,
}

impl From<&RejectionReport> for RejectionJson {
    fn from(r: &RejectionReport) -> Self {
        Self {
            total_generated: r.total_generated,
            survivors: r.survivors,
            survivor_fraction: r.survivor_fraction,
            survivor_gt_typical_fraction: r.survivor_gt_typical_fraction,
            gt_multi_typical_fraction: r.gt_multi_typical_fraction,
        }
    }
}

/// Reads a CSV back as header plus string records (used by `export` and the
/// tests).
pub fn read_csv(path: &Path) -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Pretty JSON plus a newline on stdout.
pub fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// The members of `ensemble` paired with their labels `q1..qK`.
pub fn member_labels(ensemble: &Ensemble) -> Vec<String> {
    (1..=ensemble.len()).map(|k| format!("q{k}")).collect()
}
