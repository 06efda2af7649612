//! Diagonal-covariance Gaussian mixtures.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math::{self, HALF_LN_2PI};
use crate::rng::{stream_rng, StreamRng, CHUNK};
use crate::{Error, Result};

/// One axis-aligned Gaussian. Variances are stored as log-variances, so every
/// finite component is a valid density.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: Vec<f64>,
    log_var: Vec<f64>,
    inv_var: Vec<f64>,
    log_norm: f64,
}

impl GaussianComponent {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::Empty("component mean"));
        }
        if mean.len() != log_var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: log_var.len(),
            });
        }
        if mean.iter().chain(log_var.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("component parameters must be finite"));
        }
        let inv_var = log_var.iter().map(|&lv| math::exp(-lv)).collect();
        let log_norm = -log_var
            .iter()
            .map(|&lv| HALF_LN_2PI + 0.5 * lv)
            .sum::<f64>();
        Ok(Self {
            mean,
            log_var,
            inv_var,
            log_norm,
        })
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|&lv| math::exp(lv)).collect()
    }

    /// `ln N(x; mean, diag(exp(log_var)))` without a dimension check.
    #[inline]
    pub(crate) fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((&xi, &mi), &pi) in x.iter().zip(&self.mean).zip(&self.inv_var) {
            let d = xi - mi;
            q += d * d * pi;
        }
        self.log_norm - 0.5 * q
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.log_pdf_unchecked(x))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `p(x) = Σ_m π_m N(x; μ_m, Σ_m)` with log-weights normalized on
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    components: Vec<GaussianComponent>,
    log_weights: Vec<f64>,
}

fn check_parts(components: &[GaussianComponent], log_weights: &[f64]) -> Result<()> {
    let first = components
        .first()
        .ok_or(Error::Empty("mixture components"))?;
    for c in components {
        check_dim(first.dim(), c.dim())?;
    }
    if log_weights.len() != components.len() {
        return Err(Error::invalid(alloc::format!(
            "{} log-weights for {} components",
            log_weights.len(),
            components.len()
        )));
    }
    if log_weights
        .iter()
        .any(|w| w.is_nan() || *w == f64::INFINITY)
    {
        return Err(Error::invalid("log-weights must be finite or -inf"));
    }
    if !log_weights.iter().any(|w| w.is_finite()) {
        return Err(Error::invalid(
            "at least one mixture weight must be positive",
        ));
    }
    Ok(())
}

impl MixtureModel {
    /// Builds a mixture from unnormalized log-weights. Entries may be `-inf`
    /// (zero weight) as long as at least one is finite.
    pub fn new(components: Vec<GaussianComponent>, mut log_weights: Vec<f64>) -> Result<Self> {
        check_parts(&components, &log_weights)?;
        math::normalize_log_weights(&mut log_weights);
        Ok(Self {
            components,
            log_weights,
        })
    }

    /// Like [`MixtureModel::new`] but keeps `log_weights` bit for bit; they
    /// must already sum (in probability) to 1 within `1e-9`.
    pub fn from_normalized(
        components: Vec<GaussianComponent>,
        log_weights: Vec<f64>,
    ) -> Result<Self> {
        check_parts(&components, &log_weights)?;
        let z = math::log_sum_exp(&log_weights);
        if z.abs() > 1e-9 {
            return Err(Error::invalid(alloc::format!(
                "log-weights are not normalized (log-sum-exp = {z})"
            )));
        }
        Ok(Self {
            components,
            log_weights,
        })
    }

    /// Builds a mixture from nonnegative (unnormalized) weights.
    pub fn from_weights(components: Vec<GaussianComponent>, weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Self::new(components, weights.iter().map(|&w| math::ln(w)).collect())
    }

    pub fn single(component: GaussianComponent) -> Self {
        Self {
            components: vec![component],
            log_weights: vec![0.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|&w| math::exp(w)).collect()
    }

    /// `ln π_m + ln N(x; μ_m, Σ_m)` for every component, written to `out`.
    pub(crate) fn component_log_terms(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.components
                .iter()
                .zip(&self.log_weights)
                .map(|(c, &lw)| lw + c.log_pdf_unchecked(x)),
        );
    }

    #[inline]
    pub(crate) fn log_density_scratch(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        self.component_log_terms(x, scratch);
        math::log_sum_exp(scratch)
    }

    /// `ln p(x)` via the max-shifted log-sum-exp over components.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut scratch = Vec::with_capacity(self.num_components());
        Ok(self.log_density_scratch(x, &mut scratch))
    }

    /// Negative log-density of every row of `xs`.
    pub fn neg_log_densities(&self, xs: &SampleBatch) -> Result<Vec<f64>> {
        check_dim(self.dim(), xs.dim())?;
        let mut scratch = Vec::with_capacity(self.num_components());
        Ok(xs
            .rows()
            .map(|x| -self.log_density_scratch(x, &mut scratch))
            .collect())
    }

    /// `-(1/n) Σ_i ln p(x_i)` over the rows of `xs`.
    pub fn avg_neg_log_density(&self, xs: &SampleBatch) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::Empty("sample batch"));
        }
        let nll = self.neg_log_densities(xs)?;
        Ok(nll.iter().sum::<f64>() / nll.len() as f64)
    }

    /// Ancestral sample: categorical component draw, then a Gaussian draw.
    /// Row block `j` (of [`CHUNK`] rows) comes from stream `j` of `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<SampleBatch> {
        Ok(self.sample_with_components(count, seed)?.0)
    }

    /// Like [`sample`](Self::sample), also returning each row's component.
    pub fn sample_with_components(
        &self,
        count: usize,
        seed: u64,
    ) -> Result<(SampleBatch, Vec<usize>)> {
        if count == 0 {
            return Err(Error::Empty("sample count"));
        }
        let dim = self.dim();
        let mut data = Vec::with_capacity(count * dim);
        let mut labels = Vec::with_capacity(count);
        self.for_each_sample_chunk(count, seed, |rows, comps| {
            data.extend_from_slice(rows);
            labels.extend_from_slice(comps);
        });
        let batch = SampleBatch {
            dim,
            data,
            source_label: String::from("mixture"),
            seed,
        };
        Ok((batch, labels))
    }

    /// Streams `count` samples in [`CHUNK`]-row blocks without materializing
    /// them all. Produces exactly the rows [`sample`](Self::sample) returns.
    pub(crate) fn for_each_sample_chunk<F>(&self, count: usize, seed: u64, mut f: F)
    where
        F: FnMut(&[f64], &[usize]),
    {
        let dim = self.dim();
        let cumulative = self.cumulative_weights();
        let sds: Vec<Vec<f64>> = self
            .components
            .iter()
            .map(|c| c.log_var.iter().map(|&lv| math::exp(0.5 * lv)).collect())
            .collect();
        let mut rows = Vec::with_capacity(CHUNK * dim);
        let mut comps = Vec::with_capacity(CHUNK);
        let mut start = 0;
        let mut chunk = 0u64;
        while start < count {
            let len = CHUNK.min(count - start);
            let mut rng = stream_rng(seed, chunk);
            rows.clear();
            comps.clear();
            for _ in 0..len {
                let m = draw_categorical(&cumulative, &mut rng);
                let c = &self.components[m];
                for (&mu, &sd) in c.mean.iter().zip(&sds[m]) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    rows.push(mu + sd * z);
                }
                comps.push(m);
            }
            f(&rows, &comps);
            start += len;
            chunk += 1;
        }
    }

    fn cumulative_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.log_weights
            .iter()
            .map(|&lw| {
                acc += math::exp(lw);
                acc
            })
            .collect()
    }
}

fn draw_categorical(cumulative: &[f64], rng: &mut StreamRng) -> usize {
    let total = *cumulative.last().expect("nonempty");
    let u: f64 = rng.random::<f64>() * total;
    // first index whose cumulative weight exceeds u; zero-weight components
    // have cumulative equal to their predecessor and are never chosen
    let i = cumulative.partition_point(|&c| c <= u);
    if i < cumulative.len() {
        i
    } else {
        cumulative
            .iter()
            .rposition(|&c| c > 0.0 && c.is_finite())
            .unwrap_or(0)
    }
}

/// Row-major `count × dim` matrix of points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    dim: usize,
    data: Vec<f64>,
    pub source_label: String,
    pub seed: u64,
}

impl SampleBatch {
    pub fn new(dim: usize, data: Vec<f64>, source_label: &str, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::Empty("sample batch"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid("data length is not a multiple of dim"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample entries must be finite"));
        }
        Ok(Self {
            dim,
            data,
            source_label: source_label.to_string(),
            seed,
        })
    }

    /// A batch with zero rows, e.g. when rejection sampling keeps nothing.
    pub fn empty(dim: usize, source_label: &str, seed: u64) -> Self {
        Self {
            dim,
            data: Vec::new(),
            source_label: source_label.to_string(),
            seed,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], source_label: &str, seed: u64) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or(Error::Empty("sample batch"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(dim, data, source_label, seed)
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.source_label = label.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    /// Rows `start..end` as a new batch.
    pub fn slice(&self, start: usize, end: usize) -> SampleBatch {
        SampleBatch {
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            source_label: self.source_label.clone(),
            seed: self.seed,
        }
    }

    /// The listed rows, in the listed order.
    pub fn select(&self, indices: &[usize]) -> SampleBatch {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        SampleBatch {
            dim: self.dim,
            data,
            source_label: self.source_label.clone(),
            seed: self.seed,
        }
    }

    /// Appends the rows of `other`.
    pub fn extend(&mut self, other: &SampleBatch) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        self.data.extend_from_slice(&other.data);
        Ok(())
    }
}

/// How the random log-scale draws map onto the diagonal covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleConvention {
    /// `-ln σ²_i ~ U[low, high]`.
    #[default]
    Variance,
    /// `-ln σ_i ~ U[low, high]`, i.e. `ln σ²_i = -2u`.
    StdDev,
}

/// Parameters of the random base-distribution family.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDistributionConfig {
    pub dim: usize,
    pub num_components: usize,
    pub radius: f64,
    pub log_scale_low: f64,
    pub log_scale_high: f64,
    pub convention: ScaleConvention,
}

impl BaseDistributionConfig {
    /// 100-D, 20 components, radius-3 ball, negative log-variances in [1, 3].
    pub fn reference() -> Self {
        Self {
            dim: 100,
            num_components: 20,
            radius: 3.0,
            log_scale_low: 1.0,
            log_scale_high: 3.0,
            convention: ScaleConvention::Variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.num_components == 0 {
            return Err(Error::invalid("dim and num_components must be at least 1"));
        }
        if !self.radius.is_finite() || self.radius <= 0.0 {
            return Err(Error::invalid("radius must be positive"));
        }
        if !self.log_scale_low.is_finite()
            || !self.log_scale_high.is_finite()
            || self.log_scale_low > self.log_scale_high
        {
            return Err(Error::invalid("log-scale range must satisfy low <= high"));
        }
        Ok(())
    }
}

/// Uniform point in the `dim`-ball: a normalized Gaussian direction scaled by
/// `radius · U^{1/dim}`.
pub fn uniform_in_ball(dim: usize, radius: f64, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = math::sqrt(dir.iter().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            let u: f64 = rng.random();
            let r = radius * math::powf(u, 1.0 / dim as f64);
            return dir.into_iter().map(|v| v * r / norm).collect();
        }
    }
}

/// Draws a mixture from the random base family: means uniform in the ball,
/// per-coordinate log-scales uniform in the configured range (mapped through
/// the scale convention), equal weights. Uses stream 0 of `seed`.
pub fn random_base_distribution(cfg: &BaseDistributionConfig, seed: u64) -> Result<MixtureModel> {
    cfg.validate()?;
    let mut rng = stream_rng(seed, 0);
    let factor = match cfg.convention {
        ScaleConvention::Variance => 1.0,
        ScaleConvention::StdDev => 2.0,
    };
    let mut components = Vec::with_capacity(cfg.num_components);
    for _ in 0..cfg.num_components {
        let mean = uniform_in_ball(cfg.dim, cfg.radius, &mut rng);
        let log_var = (0..cfg.dim)
            .map(|_| {
                let u = cfg.log_scale_low
                    + rng.random::<f64>() * (cfg.log_scale_high - cfg.log_scale_low);
                -factor * u
            })
            .collect();
        components.push(GaussianComponent::new(mean, log_var)?);
    }
    let m = cfg.num_components as f64;
    MixtureModel::new(components, vec![-math::ln(m); cfg.num_components])
}

/// Smallest pairwise Euclidean distance between component means, `None` for
/// a single component.
pub fn min_mean_distance(model: &MixtureModel) -> Option<f64> {
    let cs = model.components();
    let mut best: Option<f64> = None;
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            let d2: f64 = cs[i]
                .mean()
                .iter()
                .zip(cs[j].mean())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = math::sqrt(d2);
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

/// Largest `ln N(μ_j; μ_i, Σ_i) - ln N(μ_i; μ_i, Σ_i)` over ordered pairs
/// `i ≠ j`: how probable one mode's center is under another component,
/// relative to that component's own peak. `None` for a single component.
pub fn max_cross_mode_log_ratio(model: &MixtureModel) -> Option<f64> {
    let cs = model.components();
    let mut best: Option<f64> = None;
    for (i, ci) in cs.iter().enumerate() {
        let peak = ci.log_pdf_unchecked(ci.mean());
        for (j, cj) in cs.iter().enumerate() {
            if i != j {
                let r = ci.log_pdf_unchecked(cj.mean()) - peak;
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
    }
    best
}
