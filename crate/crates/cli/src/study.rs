//! The mixture case study end to end: ground truth, training, the
//! intersection matrix, rejection sampling and figure-data exports.
//!
//! Every stage reads what earlier stages wrote to the output directory, so
//! the subcommands can run one at a time or all at once via [`run_study`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::info;
use multitypical_core::ensemble::{
    self, calibrate_shared_epsilon, intersection_matrix, member_seed,
    rejection_sample_multi_typical, Ensemble, EpsilonMode, GroundTruthCheck, IntersectionMatrix,
    Member, RejectionReport,
};
use multitypical_core::mixture::{
    max_cross_mode_log_ratio, min_mean_distance, random_base_distribution,
};
use multitypical_core::rng::{derive_seed, stream_rng, tag};
use multitypical_core::training::effective_mode_count;
use multitypical_core::typicality::CalibratedModel;
use multitypical_core::{MixtureModel, SampleBatch};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GtEpsilon};
use crate::io::{self, CalibrationJson, RejectionJson};

pub const BASE_MODEL: &str = "base_model.json";
pub const BASE_SUMMARY: &str = "base_summary.json";
pub const CALIBRATION: &str = "calibration.json";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const TABLE1: &str = "table1.csv";
pub const REJECTION: &str = "rejection.json";
pub const TEST_OUTCOMES: &str = "test_outcomes.csv";
pub const MODE_WEIGHTS: &str = "mode_weights.csv";
pub const NLL_VALUES: &str = "nll_histograms.csv";
pub const PROJECTIONS: &str = "projections.csv";
pub const PROJECTION_BASES: &str = "projection_bases.json";
pub const MANIFEST: &str = "manifest.json";

/// Threshold for counting a component as a used mode.
pub const MODE_WEIGHT_THRESHOLD: f64 = 0.01;

pub fn model_file(label: &str) -> String {
    format!("model_{label}.json")
}

pub fn curve_file(label: &str) -> String {
    format!("learning_curve_{label}.csv")
}

/// Every seed the study derives from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub base: u64,
    pub data_train: u64,
    pub data_test: u64,
    pub ensemble: u64,
    pub ground_truth_calibration: u64,
    pub cells: u64,
    pub rejection: u64,
    pub projection: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            base: derive_seed(master, tag::BASE),
            data_train: derive_seed(master, tag::DATA_TRAIN),
            data_test: derive_seed(master, tag::DATA_TEST),
            ensemble: derive_seed(master, tag::MEMBER),
            ground_truth_calibration: derive_seed(master, tag::GROUND_TRUTH),
            cells: derive_seed(master, tag::CELL),
            rejection: derive_seed(master, tag::REJECT),
            projection: derive_seed(master, tag::PROJECTION),
        }
    }
}

/// One written file, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub header: Option<Vec<String>>,
}

impl FileEntry {
    fn json(path: &str, kind: &str) -> Self {
        Self {
            path: path.to_string(),
            kind: kind.to_string(),
            header: None,
        }
    }

    fn csv(path: &str, kind: &str, header: &[&str]) -> Self {
        Self {
            path: path.to_string(),
            kind: kind.to_string(),
            header: Some(header.iter().map(|s| s.to_string()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSummary {
    pub dim: usize,
    pub num_components: usize,
    pub seed: u64,
    /// `None` for a single component.
    pub min_mean_distance: Option<f64>,
    /// Largest log density ratio of another mode's center to a component's
    /// own peak.
    pub max_cross_mode_log_ratio: Option<f64>,
    pub max_cross_mode_probability: Option<f64>,
}

pub fn out(cfg: &ExperimentConfig, file: &str) -> PathBuf {
    cfg.output_dir.join(file)
}

pub fn make_base(cfg: &ExperimentConfig) -> anyhow::Result<(MixtureModel, BaseSummary)> {
    let seeds = Seeds::new(cfg.seed);
    let model = random_base_distribution(&cfg.base(), seeds.base)?;
    let log_ratio = max_cross_mode_log_ratio(&model);
    let summary = BaseSummary {
        dim: model.dim(),
        num_components: model.num_components(),
        seed: seeds.base,
        min_mean_distance: min_mean_distance(&model),
        max_cross_mode_log_ratio: log_ratio,
        max_cross_mode_probability: log_ratio.map(f64::exp),
    };
    Ok((model, summary))
}

pub fn gen_base(cfg: &ExperimentConfig) -> anyhow::Result<Vec<FileEntry>> {
    let (model, summary) = make_base(cfg)?;
    io::save_model(&out(cfg, BASE_MODEL), &model)?;
    io::write_json(&out(cfg, BASE_SUMMARY), &summary)?;
    info!(
        "ground truth: min mean distance {:?}, max cross-mode log ratio {:?}",
        summary.min_mean_distance, summary.max_cross_mode_log_ratio
    );
    Ok(vec![
        FileEntry::json(BASE_MODEL, "ground-truth model"),
        FileEntry::json(BASE_SUMMARY, "ground-truth summary"),
    ])
}

pub fn load_base(cfg: &ExperimentConfig) -> anyhow::Result<MixtureModel> {
    let path = out(cfg, BASE_MODEL);
    if !path.exists() {
        bail!("{} not found; run gen-base first", path.display());
    }
    let model = io::load_model(&path)?;
    if model.dim() != cfg.dim || model.num_components() != cfg.num_components {
        bail!(
            "{} does not match the configured dim / num_components",
            path.display()
        );
    }
    Ok(model)
}

/// Training and held-out test data drawn from the ground truth.
pub fn data(
    cfg: &ExperimentConfig,
    base: &MixtureModel,
) -> anyhow::Result<(SampleBatch, SampleBatch)> {
    let seeds = Seeds::new(cfg.seed);
    let train = base
        .sample(cfg.train_n, seeds.data_train)?
        .with_label("train");
    let test = base.sample(cfg.test_n, seeds.data_test)?.with_label("test");
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureJson {
    pub index: usize,
    pub error: String,
}

/// Calibrated typical sets of the ground truth and of every trained member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub ground_truth: CalibrationJson,
    pub members: Vec<CalibrationJson>,
    /// One epsilon for the whole ensemble, calibrated on the held-out data.
    pub shared_epsilon: f64,
    pub partial: bool,
    pub failures: Vec<FailureJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub label: String,
    pub seed: u64,
    pub restarts: usize,
    pub final_train_nll: f64,
    pub final_test_nll: f64,
    pub effective_mode_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub members: Vec<MemberSummary>,
    pub failures: Vec<FailureJson>,
}

/// The trained and calibrated state every later stage starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub ground_truth: CalibratedModel,
    pub ensemble: Ensemble,
    pub labels: Vec<String>,
    pub shared_epsilon: f64,
}

impl Study {
    pub fn partial(&self) -> bool {
        self.ensemble.is_partial()
    }

    pub fn gt_mode(&self, cfg: &ExperimentConfig) -> EpsilonMode {
        match cfg.gt_epsilon {
            GtEpsilon::HeldOut => EpsilonMode::Shared(self.shared_epsilon),
            GtEpsilon::PerMember => EpsilonMode::PerMember,
        }
    }
}

/// Trains the ensemble on data from `base` and calibrates everything.
pub fn train_study(
    cfg: &ExperimentConfig,
    base: &MixtureModel,
) -> anyhow::Result<(Study, Vec<Member>, Vec<usize>)> {
    let seeds = Seeds::new(cfg.seed);
    let (train, test) = data(cfg, base)?;
    let ecfg = cfg.ensemble();
    let results = (0..cfg.num_members)
        .map(|k| {
            info!("training member {}/{}", k + 1, cfg.num_members);
            ensemble::train_member(&train, &test, &ecfg, k, seeds.ensemble)
        })
        .collect::<Vec<_>>();
    let indices: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_ok().then_some(i))
        .collect();
    let (ensemble, members) = ensemble::assemble(results)?;
    let ground_truth = CalibratedModel::calibrate(
        base.clone(),
        &cfg.calibration(),
        seeds.ground_truth_calibration,
    )?;
    let shared_epsilon = calibrate_shared_epsilon(&ensemble, &test, cfg.target_coverage)?;
    let labels = indices.iter().map(|i| format!("q{}", i + 1)).collect();
    Ok((
        Study {
            ground_truth,
            ensemble,
            labels,
            shared_epsilon,
        },
        members,
        indices,
    ))
}

fn failures_json(ensemble: &Ensemble) -> Vec<FailureJson> {
    ensemble
        .failures
        .iter()
        .map(|f| FailureJson {
            index: f.index,
            error: f.error.to_string(),
        })
        .collect()
}

pub fn train(cfg: &ExperimentConfig) -> anyhow::Result<(Study, Vec<FileEntry>)> {
    let base = load_base(cfg)?;
    let (study, members, _) = train_study(cfg, &base)?;
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for (label, member) in study.labels.iter().zip(&members) {
        let mf = model_file(label);
        let cf = curve_file(label);
        io::save_model(&out(cfg, &mf), &member.calibrated.model)?;
        io::write_learning_curve(&out(cfg, &cf), &member.curve)?;
        files.push(FileEntry::json(&mf, "learned model"));
        files.push(FileEntry::csv(&cf, "learning curve", &io::CURVE_HEADER));
        summaries.push(MemberSummary {
            label: label.clone(),
            seed: member.seed,
            restarts: member.restarts,
            final_train_nll: *member.curve.train_nll.last().unwrap_or(&f64::NAN),
            final_test_nll: *member.curve.test_nll.last().unwrap_or(&f64::NAN),
            effective_mode_count: effective_mode_count(
                &member.calibrated.model,
                MODE_WEIGHT_THRESHOLD,
            ),
        });
    }
    let calibration = CalibrationFile {
        ground_truth: CalibrationJson::new("p", BASE_MODEL, &study.ground_truth),
        members: study
            .labels
            .iter()
            .zip(&study.ensemble.members)
            .map(|(l, m)| CalibrationJson::new(l, &model_file(l), m))
            .collect(),
        shared_epsilon: study.shared_epsilon,
        partial: study.partial(),
        failures: failures_json(&study.ensemble),
    };
    io::write_json(&out(cfg, CALIBRATION), &calibration)?;
    io::write_json(
        &out(cfg, TRAIN_SUMMARY),
        &TrainSummary {
            members: summaries,
            failures: failures_json(&study.ensemble),
        },
    )?;
    files.push(FileEntry::json(CALIBRATION, "calibrated typical sets"));
    files.push(FileEntry::json(TRAIN_SUMMARY, "training summary"));
    Ok((study, files))
}

/// Rebuilds the trained state from the output directory.
pub fn load_study(cfg: &ExperimentConfig) -> anyhow::Result<Study> {
    let path = out(cfg, CALIBRATION);
    if !path.exists() {
        bail!("{} not found; run train first", path.display());
    }
    let cal: CalibrationFile = io::read_json(&path)?;
    let ground_truth = cal.ground_truth.load(&cfg.output_dir)?;
    let members = cal
        .members
        .iter()
        .map(|m| m.load(&cfg.output_dir))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut ensemble = Ensemble::new(members)?;
    ensemble.failures = cal
        .failures
        .iter()
        .map(|f| ensemble::MemberFailure {
            index: f.index,
            error: multitypical_core::Error::InvalidParameter(f.error.clone()),
        })
        .collect();
    Ok(Study {
        ground_truth,
        ensemble,
        labels: cal.members.iter().map(|m| m.label.clone()).collect(),
        shared_epsilon: cal.shared_epsilon,
    })
}

pub fn make_table1(cfg: &ExperimentConfig, study: &Study) -> anyhow::Result<IntersectionMatrix> {
    let seeds = Seeds::new(cfg.seed);
    let mut m = intersection_matrix(
        &study.ground_truth,
        &study.ensemble,
        cfg.samples_per_cell,
        seeds.cells,
    )?;
    let mut labels = vec!["p".to_string()];
    labels.extend(study.labels.iter().cloned());
    m.row_labels = labels.clone();
    m.col_labels = labels;
    Ok(m)
}

pub fn table1(cfg: &ExperimentConfig, study: &Study) -> anyhow::Result<Vec<FileEntry>> {
    let m = make_table1(cfg, study)?;
    io::write_intersection_matrix(&out(cfg, TABLE1), &m)?;
    let mut header = vec!["typical_set".to_string()];
    header.extend(m.col_labels.iter().cloned());
    Ok(vec![FileEntry {
        path: TABLE1.to_string(),
        kind: "intersection matrix".to_string(),
        header: Some(header),
    }])
}

pub fn make_rejection(
    cfg: &ExperimentConfig,
    study: &Study,
) -> anyhow::Result<(SampleBatch, RejectionReport)> {
    let seeds = Seeds::new(cfg.seed);
    let check = GroundTruthCheck {
        model: &study.ground_truth,
        mode: study.gt_mode(cfg),
    };
    Ok(rejection_sample_multi_typical(
        &study.ensemble,
        cfg.per_model_count,
        Some(check),
        seeds.rejection,
    )?)
}

/// Multi-typical test outcomes, under the shared epsilon, of the fresh
/// ground-truth points the rejection report scores.
pub fn ground_truth_outcomes(
    cfg: &ExperimentConfig,
    study: &Study,
) -> anyhow::Result<Vec<(f64, f64, bool)>> {
    let seeds = Seeds::new(cfg.seed);
    let xs = study.ground_truth.model.sample(
        cfg.per_model_count,
        derive_seed(seeds.rejection, tag::GROUND_TRUTH),
    )?;
    let eps = study.shared_epsilon;
    let mut best = vec![f64::NEG_INFINITY; xs.len()];
    for m in &study.ensemble.members {
        let nll = m.model.neg_log_densities(&xs)?;
        for (b, v) in best.iter_mut().zip(nll) {
            *b = b.max((v - m.config.entropy).abs());
        }
    }
    Ok(best.into_iter().map(|s| (s, eps, s < eps)).collect())
}

pub fn reject(
    cfg: &ExperimentConfig,
    study: &Study,
) -> anyhow::Result<(SampleBatch, RejectionReport, Vec<FileEntry>)> {
    let (survivors, report) = make_rejection(cfg, study)?;
    io::write_json(&out(cfg, REJECTION), &RejectionJson::from(&report))?;
    io::write_test_outcomes(
        &out(cfg, TEST_OUTCOMES),
        &ground_truth_outcomes(cfg, study)?,
    )?;
    info!(
        "rejection: {} of {} survive ({:.1}%)",
        report.survivors,
        report.total_generated,
        100.0 * report.survivor_fraction
    );
    Ok((
        survivors,
        report,
        vec![
            FileEntry::json(REJECTION, "rejection report"),
            FileEntry::csv(
                TEST_OUTCOMES,
                "ground-truth test outcomes",
                &io::OUTCOME_HEADER,
            ),
        ],
    ))
}

/// `count` random 2-D orthonormal bases of `R^dim`, basis `b` from stream
/// `b` of `seed` (Gram-Schmidt applied twice).
pub fn projection_bases(dim: usize, count: usize, seed: u64) -> Vec<[Vec<f64>; 2]> {
    (0..count)
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let mut draw =
                || -> Vec<f64> { (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect() };
            let mut u = draw();
            let mut v = draw();
            normalize(&mut u);
            for _ in 0..2 {
                let d = dot(&u, &v);
                for (vi, ui) in v.iter_mut().zip(&u) {
                    *vi -= d * ui;
                }
                normalize(&mut v);
            }
            [u, v]
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBases {
    pub seed: u64,
    /// `bases[b] = [u, v]`.
    pub bases: Vec<[Vec<f64>; 2]>,
}

/// Figure-data exports: mode weights, ground-truth NLL values of every
/// distribution's samples, and random 2-D projections.
pub fn export(
    cfg: &ExperimentConfig,
    study: &Study,
    survivors: Option<&SampleBatch>,
) -> anyhow::Result<Vec<FileEntry>> {
    let seeds = Seeds::new(cfg.seed);
    let mut files = Vec::new();

    let mut weighted = vec![("p".to_string(), &study.ground_truth.model)];
    weighted.extend(study.labels.iter().cloned().zip(study.ensemble.models()));
    io::write_mode_weights(&out(cfg, MODE_WEIGHTS), &weighted)?;
    files.push(FileEntry::csv(
        MODE_WEIGHTS,
        "mode weights",
        &io::MODE_WEIGHT_HEADER,
    ));

    // same draws as the intersection-matrix columns
    let mut nll = Vec::new();
    for (j, (label, model)) in weighted.iter().enumerate() {
        let xs = model.sample(
            cfg.samples_per_cell * cfg.n,
            derive_seed(seeds.cells, tag::CELL.wrapping_add(j as u64)),
        )?;
        nll.push((
            label.clone(),
            study.ground_truth.model.neg_log_densities(&xs)?,
        ));
    }
    io::write_nll_values(&out(cfg, NLL_VALUES), &nll)?;
    files.push(FileEntry::csv(
        NLL_VALUES,
        "ground-truth NLL values",
        &io::NLL_HEADER,
    ));

    if cfg.num_projections > 0 {
        let bases = projection_bases(cfg.dim, cfg.num_projections, seeds.projection);
        let mut sources = vec![(
            "p".to_string(),
            study.ground_truth.model.sample(
                cfg.projection_samples,
                derive_seed(seeds.projection, tag::GROUND_TRUTH),
            )?,
        )];
        for (k, (label, m)) in study.labels.iter().zip(study.ensemble.models()).enumerate() {
            sources.push((
                label.clone(),
                m.sample(cfg.projection_samples, member_seed(seeds.projection, k))?,
            ));
        }
        if let Some(s) = survivors {
            sources.push(("survivors".to_string(), s.clone()));
        }
        let mut rows = Vec::new();
        for (b, [u, v]) in bases.iter().enumerate() {
            for (label, xs) in &sources {
                for x in xs.rows() {
                    rows.push((b, label.clone(), dot(x, u), dot(x, v)));
                }
            }
        }
        io::write_projections(&out(cfg, PROJECTIONS), &rows)?;
        io::write_json(
            &out(cfg, PROJECTION_BASES),
            &ProjectionBases {
                seed: seeds.projection,
                bases,
            },
        )?;
        files.push(FileEntry::csv(
            PROJECTIONS,
            "random projections",
            &io::PROJECTION_HEADER,
        ));
        files.push(FileEntry::json(PROJECTION_BASES, "projection bases"));
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub partial: bool,
    pub failures: Vec<FailureJson>,
    pub base: BaseSummary,
    pub effective_mode_counts: Vec<usize>,
    pub shared_epsilon: f64,
    pub rejection: RejectionJson,
    pub files: Vec<FileEntry>,
}

/// Runs every stage and writes a manifest.
pub fn run_study(cfg: &ExperimentConfig) -> anyhow::Result<Manifest> {
    let mut files = gen_base(cfg)?;
    let base_summary: BaseSummary = io::read_json(&out(cfg, BASE_SUMMARY))?;
    let (study, f) = train(cfg)?;
    files.extend(f);
    files.extend(table1(cfg, &study)?);
    let (survivors, report, f) = reject(cfg, &study)?;
    files.extend(f);
    files.extend(export(cfg, &study, Some(&survivors))?);
    files.push(FileEntry::json(MANIFEST, "manifest"));
    let manifest = Manifest {
        format_version: 1,
        config: cfg.clone(),
        seeds: Seeds::new(cfg.seed),
        partial: study.partial(),
        failures: failures_json(&study.ensemble),
        base: base_summary,
        effective_mode_counts: study
            .ensemble
            .models()
            .map(|m| effective_mode_count(m, MODE_WEIGHT_THRESHOLD))
            .collect(),
        shared_epsilon: study.shared_epsilon,
        rejection: RejectionJson::from(&report),
        files,
    };
    io::write_json(&out(cfg, MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Checks that every file a manifest lists exists and that every CSV starts
/// with its documented header.
pub fn verify_manifest(dir: &Path, manifest: &Manifest) -> anyhow::Result<()> {
    for f in &manifest.files {
        let path = dir.join(&f.path);
        if !path.exists() {
            bail!("manifest lists missing file {}", f.path);
        }
        if let Some(h) = &f.header {
            let (header, _) = io::read_csv(&path).with_context(|| format!("reading {}", f.path))?;
            if &header != h {
                bail!("{} has header {:?}, expected {:?}", f.path, header, h);
            }
        }
    }
    Ok(())
}
