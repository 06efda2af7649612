//! Maximum-likelihood fitting of mixtures.
//!
//! Three update rules share one sufficient-statistics pass: exact EM, plain
//! gradient ascent and Adam, the latter two on the unconstrained parameters
//! (means, log-variances, softmax logits of the weights).

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::math;
use crate::mixture::{
    random_base_distribution, BaseDistributionConfig, GaussianComponent, MixtureModel, SampleBatch,
};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::{Error, Result};

/// Variance floor applied in the EM M-step.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// A component whose total responsibility falls below this is restarted.
pub const STARVED_RESPONSIBILITY: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMethod {
    /// Plain gradient ascent with a fixed learning rate.
    Gradient,
    /// Adam on mini-batches.
    Adam,
    /// Expectation-maximization over the full batch.
    Em,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: TrainMethod,
    pub epochs: usize,
    /// Mini-batch size for the gradient rules; EM always uses the full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Held-out fraction used by [`fit_mle`].
    pub test_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::adam()
    }
}

impl TrainConfig {
    pub fn gradient() -> Self {
        Self {
            method: TrainMethod::Gradient,
            epochs: 200,
            batch_size: usize::MAX,
            learning_rate: 0.05,
            seed: 0,
            test_fraction: 1.0 / 6.0,
        }
    }

    pub fn adam() -> Self {
        Self {
            method: TrainMethod::Adam,
            epochs: 60,
            batch_size: 128,
            learning_rate: 3e-3,
            seed: 0,
            test_fraction: 1.0 / 6.0,
        }
    }

    pub fn em() -> Self {
        Self {
            method: TrainMethod::Em,
            epochs: 200,
            batch_size: usize::MAX,
            learning_rate: 0.0,
            seed: 0,
            test_fraction: 1.0 / 6.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if self.method != TrainMethod::Em
            && (self.learning_rate.is_nan() || self.learning_rate <= 0.0)
        {
            return Err(Error::invalid(
                "learning_rate must be positive for gradient methods",
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Per-epoch average negative log-likelihoods. Entry 0 is the initial model,
/// entry `e` the model after `e` epochs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub train_nll: Vec<f64>,
    pub test_nll: Vec<f64>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.train_nll.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_nll.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: MixtureModel,
    pub curve: LearningCurve,
    /// Starved-component restarts performed by EM.
    pub restarts: usize,
}

/// Number of components whose weight exceeds `weight_threshold`.
pub fn effective_mode_count(model: &MixtureModel, weight_threshold: f64) -> usize {
    model
        .log_weights()
        .iter()
        .filter(|&&lw| math::exp(lw) > weight_threshold)
        .count()
}

/// Splits `data` into train/test by `test_fraction` (the tail is held out)
/// and fits a `num_components` mixture initialized from the random base
/// family.
pub fn fit_mle(
    data: &SampleBatch,
    num_components: usize,
    init: &BaseDistributionConfig,
    cfg: &TrainConfig,
) -> Result<FittedModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let n = data.len();
    let n_test = libm::round(n as f64 * cfg.test_fraction) as usize;
    let n_test = n_test.clamp(1, n.saturating_sub(1));
    if n < 2 {
        return Err(Error::invalid(
            "need at least 2 samples to split train/test",
        ));
    }
    let train = data.slice(0, n - n_test);
    let test = data.slice(n - n_test, n);
    fit_mle_split(&train, &test, num_components, init, cfg)
}

/// Fits on `train`, tracking NLL on `test`. The initial parameters are drawn
/// by [`random_base_distribution`] from `derive_seed(cfg.seed, INIT)`.
pub fn fit_mle_split(
    train: &SampleBatch,
    test: &SampleBatch,
    num_components: usize,
    init: &BaseDistributionConfig,
    cfg: &TrainConfig,
) -> Result<FittedModel> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("train or test data"));
    }
    if init.dim != train.dim() || test.dim() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: if init.dim != train.dim() {
                init.dim
            } else {
                test.dim()
            },
        });
    }
    let init_cfg = BaseDistributionConfig {
        num_components,
        ..init.clone()
    };
    let start = random_base_distribution(&init_cfg, derive_seed(cfg.seed, tag::INIT))?;
    fit_from(start, train, test, cfg)
}

/// Fits starting from an explicit model.
pub fn fit_from(
    start: MixtureModel,
    train: &SampleBatch,
    test: &SampleBatch,
    cfg: &TrainConfig,
) -> Result<FittedModel> {
    cfg.validate()?;
    let mut params = Params::from_model(&start);
    let mut curve = LearningCurve::default();
    let mut restarts = 0;
    let record = |params: &Params, curve: &mut LearningCurve, epoch: usize| -> Result<()> {
        let tr = params.avg_nll(train);
        let te = params.avg_nll(test);
        if !tr.is_finite() || !te.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        curve.train_nll.push(tr);
        curve.test_nll.push(te);
        Ok(())
    };
    record(&params, &mut curve, 0)?;

    let mut adam = AdamState::new(params.len());
    let restart_seed = derive_seed(cfg.seed, tag::RESTART);
    let shuffle_seed = derive_seed(cfg.seed, tag::SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stats = Stats::new(params.m, params.d);

    for epoch in 1..=cfg.epochs {
        match cfg.method {
            TrainMethod::Em => {
                stats.accumulate(&params, train.rows());
                let mut rng = stream_rng(restart_seed, epoch as u64);
                restarts += params.em_update(&stats, train, &mut rng);
            }
            TrainMethod::Gradient | TrainMethod::Adam => {
                let bs = cfg.batch_size.min(train.len());
                if bs < train.len() {
                    order.shuffle(&mut stream_rng(shuffle_seed, epoch as u64));
                }
                for batch in order.chunks(bs) {
                    stats.accumulate(&params, batch.iter().map(|&i| train.row(i)));
                    let grad = params.gradient(&stats);
                    match cfg.method {
                        TrainMethod::Adam => adam.step(&mut params, &grad, cfg.learning_rate),
                        _ => params.add_scaled(&grad, cfg.learning_rate),
                    }
                    params.refresh();
                    if !params.is_finite() {
                        return Err(Error::TrainingDiverged { epoch });
                    }
                }
            }
        }
        record(&params, &mut curve, epoch)?;
    }
    let model = params
        .to_model()
        .map_err(|_| Error::TrainingDiverged { epoch: cfg.epochs })?;
    Ok(FittedModel {
        model,
        curve,
        restarts,
    })
}

/// One exact EM update over all of `data`. Starved components are moved to
/// a random data point drawn from stream 0 of `seed`.
pub fn em_step(model: &MixtureModel, data: &SampleBatch, seed: u64) -> Result<MixtureModel> {
    Ok(em_step_counted(model, data, seed)?.0)
}

/// [`em_step`] that also reports how many components were restarted.
pub fn em_step_counted(
    model: &MixtureModel,
    data: &SampleBatch,
    seed: u64,
) -> Result<(MixtureModel, usize)> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: data.dim(),
        });
    }
    let mut params = Params::from_model(model);
    let mut stats = Stats::new(params.m, params.d);
    stats.accumulate(&params, data.rows());
    let restarts = params.em_update(&stats, data, &mut stream_rng(seed, 0));
    Ok((params.to_model()?, restarts))
}

/// Flat, unconstrained parameterization used during fitting.
#[derive(Debug, Clone)]
struct Params {
    m: usize,
    d: usize,
    mean: Vec<f64>,
    log_var: Vec<f64>,
    logits: Vec<f64>,
    // derived
    inv_var: Vec<f64>,
    log_norm: Vec<f64>,
    log_weights: Vec<f64>,
}

impl Params {
    fn from_model(model: &MixtureModel) -> Self {
        let m = model.num_components();
        let d = model.dim();
        let mut mean = Vec::with_capacity(m * d);
        let mut log_var = Vec::with_capacity(m * d);
        for c in model.components() {
            mean.extend_from_slice(c.mean());
            log_var.extend_from_slice(c.log_var());
        }
        let mut p = Self {
            m,
            d,
            mean,
            log_var,
            logits: model.log_weights().to_vec(),
            inv_var: vec![0.0; m * d],
            log_norm: vec![0.0; m],
            log_weights: vec![0.0; m],
        };
        p.refresh();
        p
    }

    fn len(&self) -> usize {
        2 * self.m * self.d + self.m
    }

    fn refresh(&mut self) {
        for (iv, &lv) in self.inv_var.iter_mut().zip(&self.log_var) {
            *iv = math::exp(-lv);
        }
        for j in 0..self.m {
            let lv = &self.log_var[j * self.d..(j + 1) * self.d];
            self.log_norm[j] = -lv.iter().map(|&v| math::HALF_LN_2PI + 0.5 * v).sum::<f64>();
        }
        self.log_weights.copy_from_slice(&self.logits);
        math::normalize_log_weights(&mut self.log_weights);
    }

    fn is_finite(&self) -> bool {
        self.mean
            .iter()
            .chain(&self.log_var)
            .chain(&self.log_weights)
            .all(|v| v.is_finite() || *v == f64::NEG_INFINITY)
            && self.log_var.iter().all(|v| v.is_finite())
    }

    fn log_terms(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for (j, o) in out.iter_mut().enumerate().take(self.m) {
            let mu = &self.mean[j * d..(j + 1) * d];
            let iv = &self.inv_var[j * d..(j + 1) * d];
            let mut q = 0.0;
            for i in 0..d {
                let diff = x[i] - mu[i];
                q += diff * diff * iv[i];
            }
            *o = self.log_weights[j] + self.log_norm[j] - 0.5 * q;
        }
    }

    fn avg_nll(&self, data: &SampleBatch) -> f64 {
        let mut terms = vec![0.0; self.m];
        let mut total = 0.0;
        for x in data.rows() {
            self.log_terms(x, &mut terms);
            total -= math::log_sum_exp(&terms);
        }
        total / data.len() as f64
    }

    /// Gradient of the mean log-likelihood of the accumulated batch, laid out
    /// as `[means, log-variances, logits]`.
    fn gradient(&self, s: &Stats) -> Vec<f64> {
        let (m, d) = (self.m, self.d);
        let n = s.count as f64;
        let mut g = vec![0.0; self.len()];
        let (gm, rest) = g.split_at_mut(m * d);
        let (gv, gl) = rest.split_at_mut(m * d);
        for (j, glj) in gl.iter_mut().enumerate() {
            let nk = s.resp[j];
            for i in 0..d {
                let k = j * d + i;
                let mu = self.mean[k];
                let iv = self.inv_var[k];
                gm[k] = (s.sum_x[k] - nk * mu) * iv / n;
                let sq = s.sum_xx[k] - 2.0 * mu * s.sum_x[k] + nk * mu * mu;
                gv[k] = 0.5 * (sq * iv - nk) / n;
            }
            *glj = nk / n - math::exp(self.log_weights[j]);
        }
        g
    }

    fn add_scaled(&mut self, step: &[f64], scale: f64) {
        let md = self.m * self.d;
        for (p, s) in self.mean.iter_mut().zip(&step[..md]) {
            *p += scale * s;
        }
        for (p, s) in self.log_var.iter_mut().zip(&step[md..2 * md]) {
            *p += scale * s;
        }
        for (p, s) in self.logits.iter_mut().zip(&step[2 * md..]) {
            *p += scale * s;
        }
    }

    /// Closed-form M-step. Returns the number of restarted components.
    fn em_update<R: Rng>(&mut self, s: &Stats, data: &SampleBatch, rng: &mut R) -> usize {
        let (m, d) = (self.m, self.d);
        let n = s.count as f64;
        let mut restarts = 0;
        let mut pooled_log_var: Option<Vec<f64>> = None;
        for j in 0..m {
            let nk = s.resp[j];
            if nk < STARVED_RESPONSIBILITY {
                let idx = rng.random_range(0..data.len());
                let lv = pooled_log_var.get_or_insert_with(|| pooled_log_variance(data));
                self.mean[j * d..(j + 1) * d].copy_from_slice(data.row(idx));
                self.log_var[j * d..(j + 1) * d].copy_from_slice(lv);
                self.logits[j] = -math::ln(m as f64);
                restarts += 1;
                log::info!(
                    "EM: component {j} starved (responsibility {nk:e}); restarted at row {idx}"
                );
                continue;
            }
            for i in 0..d {
                let k = j * d + i;
                let mu = s.sum_x[k] / nk;
                let var = (s.sum_xx[k] / nk - mu * mu).max(VARIANCE_FLOOR);
                self.mean[k] = mu;
                self.log_var[k] = math::ln(var);
            }
            self.logits[j] = math::ln(nk / n);
        }
        self.refresh();
        restarts
    }

    fn to_model(&self) -> Result<MixtureModel> {
        let d = self.d;
        let components = (0..self.m)
            .map(|j| {
                GaussianComponent::new(
                    self.mean[j * d..(j + 1) * d].to_vec(),
                    self.log_var[j * d..(j + 1) * d].to_vec(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureModel::new(components, self.logits.clone())
    }
}

fn pooled_log_variance(data: &SampleBatch) -> Vec<f64> {
    let d = data.dim();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for x in data.rows() {
        for i in 0..d {
            mean[i] += x[i];
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; d];
    for x in data.rows() {
        for i in 0..d {
            var[i] += (x[i] - mean[i]) * (x[i] - mean[i]);
        }
    }
    var.iter()
        .map(|v| math::ln((v / n).max(VARIANCE_FLOOR)))
        .collect()
}

/// Responsibility-weighted sufficient statistics of one batch.
struct Stats {
    d: usize,
    count: usize,
    resp: Vec<f64>,
    sum_x: Vec<f64>,
    sum_xx: Vec<f64>,
    terms: Vec<f64>,
}

impl Stats {
    fn new(m: usize, d: usize) -> Self {
        Self {
            d,
            count: 0,
            resp: vec![0.0; m],
            sum_x: vec![0.0; m * d],
            sum_xx: vec![0.0; m * d],
            terms: vec![0.0; m],
        }
    }

    fn accumulate<'a, I>(&mut self, params: &Params, rows: I)
    where
        I: Iterator<Item = &'a [f64]>,
    {
        self.count = 0;
        self.resp.iter_mut().for_each(|v| *v = 0.0);
        self.sum_x.iter_mut().for_each(|v| *v = 0.0);
        self.sum_xx.iter_mut().for_each(|v| *v = 0.0);
        let d = self.d;
        for x in rows {
            params.log_terms(x, &mut self.terms);
            let lse = math::log_sum_exp(&self.terms);
            for j in 0..self.terms.len() {
                let r = math::exp(self.terms[j] - lse);
                if r == 0.0 {
                    continue;
                }
                self.resp[j] += r;
                let sx = &mut self.sum_x[j * d..(j + 1) * d];
                let sxx = &mut self.sum_xx[j * d..(j + 1) * d];
                for i in 0..d {
                    let rx = r * x[i];
                    sx[i] += rx;
                    sxx[i] += rx * x[i];
                }
            }
            self.count += 1;
        }
    }
}

struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            t: 0,
        }
    }

    /// Ascent step along `grad`.
    fn step(&mut self, params: &mut Params, grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(Self::BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(Self::BETA2, self.t as f64);
        let mut step = vec![0.0; grad.len()];
        for (k, &g) in grad.iter().enumerate() {
            self.first[k] = Self::BETA1 * self.first[k] + (1.0 - Self::BETA1) * g;
            self.second[k] = Self::BETA2 * self.second[k] + (1.0 - Self::BETA2) * g * g;
            step[k] = (self.first[k] / c1) / (math::sqrt(self.second[k] / c2) + Self::EPS);
        }
        params.add_scaled(&step, lr);
    }
}
