//! Point and variance estimators of the population total.
//!
//! Covers the Horvitz-Thompson estimator, the difference estimator with a
//! fixed proxy, the GREG estimator with a sample-fitted working model, a
//! deliberately naive model-assisted estimator (model fitted on the sample
//! itself, no valid variance estimator), and the data-integration family:
//! the post-stratified form over a sample from U, the design-unbiased form
//! over a sample from B, and the model-assisted form that adds a
//! register-trained prediction model plus a design-weighted error
//! correction.
//!
//! Variance computations use the SRS closed forms in production; the
//! literal double-sum forms over the design covariance kernel are retained
//! as `dsum_*` for oracle equality checks.

use std::sync::atomic::{AtomicU64, Ordering};

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::accum::{kahan_sum, KahanSum};
use crate::design::{srs_second_order, FrameKind, Sample};
use crate::models::{FittedModel, ModelError, TrainingSet};
use crate::population::{fmt_f64, population_variance, Partition, Population};

/// Relative tolerance under which a negative double-sum variance estimate is
/// treated as rounding noise and clamped to zero.
pub const NEGATIVE_VARIANCE_TOLERANCE: f64 = 1e-9;

/// Count of clamped near-zero negative variance estimates, for diagnostics.
pub static NEGATIVE_VARIANCE_CLAMPS: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("variance estimation needs at least two sampled units, got {n}")]
    NeedsTwo { n: usize },
    #[error("model was trained on unit {id}, which lies outside the register subset")]
    TrainingLeak { id: u64 },
    #[error("negative variance estimate {value:e} exceeds the rounding tolerance")]
    NegativeVariance { value: f64 },
    #[error("confidence level must be inside (0, 1), got {level}")]
    BadLevel { level: f64 },
    #[error("variance must be nonnegative, got {value}")]
    NegativeVarianceInput { value: f64 },
    #[error("estimator needs a sample from the complement frame")]
    MissingSample,
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] crate::design::DesignError),
}

/// Why an estimate is absent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateStatus {
    Ok,
    SingularModel,
    InsufficientSample,
}

impl EstimateStatus {
    pub fn label(&self) -> &'static str {
        match self {
            EstimateStatus::Ok => "ok",
            EstimateStatus::SingularModel => "singular-model",
            EstimateStatus::InsufficientSample => "insufficient-sample",
        }
    }
}

/// Outcome of one estimator on one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateResult {
    point: Option<f64>,
    variance: Option<f64>,
    status: EstimateStatus,
}

impl EstimateResult {
    pub fn ok(point: f64) -> Self {
        Self {
            point: Some(point),
            variance: None,
            status: EstimateStatus::Ok,
        }
    }

    pub fn ok_with_variance(point: f64, variance: f64) -> Self {
        Self {
            point: Some(point),
            variance: Some(variance),
            status: EstimateStatus::Ok,
        }
    }

    pub fn singular_model() -> Self {
        Self {
            point: None,
            variance: None,
            status: EstimateStatus::SingularModel,
        }
    }

    pub fn insufficient_sample() -> Self {
        Self {
            point: None,
            variance: None,
            status: EstimateStatus::InsufficientSample,
        }
    }

    pub fn point(&self) -> Option<f64> {
        self.point
    }

    pub fn variance(&self) -> Option<f64> {
        self.variance
    }

    pub fn status(&self) -> EstimateStatus {
        self.status
    }

    pub fn is_ok(&self) -> bool {
        self.status == EstimateStatus::Ok
    }

    pub fn with_variance(mut self, variance: f64) -> Self {
        debug_assert!(self.is_ok(), "variance only attaches to ok estimates");
        self.variance = Some(variance);
        self
    }

    /// `strategy,n,point,var_est,status` CSV row; absent fields stay empty.
    pub fn csv_row(&self, strategy: &str, n: usize) -> String {
        format!(
            "{strategy},{n},{},{},{}",
            self.point.map(fmt_f64).unwrap_or_default(),
            self.variance.map(fmt_f64).unwrap_or_default(),
            self.status.label()
        )
    }
}

// --------------------------------------------------------------- HT

/// Horvitz-Thompson estimator `sum_s y_i / pi_i`.
pub fn ht_point(sample: &Sample, y_s: &[f64]) -> f64 {
    debug_assert_eq!(y_s.len(), sample.n());
    let pi = sample.pi();
    kahan_sum(y_s.iter().map(|&y| y / pi))
}

// ------------------------------------------------------- difference

/// Difference estimator with a proxy fixed before sampling:
/// `sum_U proxy + sum_s (y_i - proxy_i) / pi_i`.
pub fn difference_point(pop: &Population, sample: &Sample, proxy: &[f64]) -> f64 {
    debug_assert_eq!(sample.kind(), FrameKind::Population);
    debug_assert_eq!(proxy.len(), pop.len());
    let proxy_total = kahan_sum(proxy.iter().copied());
    let pi = sample.pi();
    let correction = kahan_sum(
        sample
            .rows()
            .iter()
            .map(|&r| (pop.y_at(r as usize) - proxy[r as usize]) / pi),
    );
    proxy_total + correction
}

/// True design variance of a difference-style estimator under SRS, from
/// full-frame residuals: the closed form `N^2 (1 - f) S_D^2 / n`.
pub fn difference_variance_true(
    frame_size: usize,
    n: usize,
    d_frame: &[f64],
) -> Result<f64, EstimatorError> {
    if d_frame.len() != frame_size {
        return Err(EstimatorError::LengthMismatch {
            what: "residuals",
            expected: frame_size,
            got: d_frame.len(),
        });
    }
    if n == frame_size {
        return Ok(0.0); // census: fixed membership, no design variance
    }
    if n < 2 {
        return Err(EstimatorError::NeedsTwo { n });
    }
    let s2 = population_variance(d_frame).expect("frame_size >= 2 here");
    let nn = frame_size as f64;
    let f = n as f64 / nn;
    Ok(nn * nn * (1.0 - f) * s2 / n as f64)
}

/// Unbiased variance estimator of a difference-style estimator under SRS,
/// from sampled residuals: the closed form `N^2 (1 - f) s_d^2 / n`.
pub fn difference_variance_estimate(sample: &Sample, d_s: &[f64]) -> Result<f64, EstimatorError> {
    if d_s.len() != sample.n() {
        return Err(EstimatorError::LengthMismatch {
            what: "residuals",
            expected: sample.n(),
            got: d_s.len(),
        });
    }
    if sample.is_census() {
        return Ok(0.0);
    }
    let n = sample.n();
    if n < 2 {
        return Err(EstimatorError::NeedsTwo { n });
    }
    let s2 = population_variance(d_s).expect("n >= 2 here");
    let nn = sample.frame_size() as f64;
    let f = n as f64 / nn;
    Ok(nn * nn * (1.0 - f) * s2 / n as f64)
}

// ------------------------------------------------ literal double sums

/// Literal double sum of the true design variance over the whole frame,
/// `sum_i sum_j delta_ij (D_i / pi_i)(D_j / pi_j)`. O(N^2); oracle use.
pub fn dsum_variance_true(
    frame_size: usize,
    n: usize,
    d_frame: &[f64],
) -> Result<f64, EstimatorError> {
    if d_frame.len() != frame_size {
        return Err(EstimatorError::LengthMismatch {
            what: "residuals",
            expected: frame_size,
            got: d_frame.len(),
        });
    }
    if n == frame_size {
        return Ok(0.0);
    }
    if n < 2 {
        return Err(EstimatorError::NeedsTwo { n });
    }
    let pi = n as f64 / frame_size as f64;
    let pi2 = srs_second_order(frame_size, n).expect("n >= 2");
    let mut acc = KahanSum::new();
    for (i, &di) in d_frame.iter().enumerate() {
        for (j, &dj) in d_frame.iter().enumerate() {
            let delta = if i == j {
                pi * (1.0 - pi)
            } else {
                pi2 - pi * pi
            };
            acc.add(delta * (di / pi) * (dj / pi));
        }
    }
    Ok(acc.value())
}

/// Literal double sum of the unbiased variance estimator over the sample,
/// `sum_s sum_s (delta_ij / pi_ij) (D_i / pi_i)(D_j / pi_j)`. O(n^2); oracle
/// use. Tiny negative results from rounding clamp to zero (counted in
/// [`NEGATIVE_VARIANCE_CLAMPS`]); anything below `-1e-9 * scale` errors,
/// since the SRS form is nonnegative and a large negative signals a bug.
pub fn dsum_variance_estimate(sample: &Sample, d_s: &[f64]) -> Result<f64, EstimatorError> {
    if d_s.len() != sample.n() {
        return Err(EstimatorError::LengthMismatch {
            what: "residuals",
            expected: sample.n(),
            got: d_s.len(),
        });
    }
    if sample.is_census() {
        return Ok(0.0);
    }
    let n = sample.n();
    if n < 2 {
        return Err(EstimatorError::NeedsTwo { n });
    }
    let pi = sample.pi();
    let pi2 = sample.pi2(false)?;
    let mut acc = KahanSum::new();
    let mut magnitude = KahanSum::new();
    for (i, &di) in d_s.iter().enumerate() {
        for (j, &dj) in d_s.iter().enumerate() {
            let weight = if i == j {
                1.0 - pi
            } else {
                (pi2 - pi * pi) / pi2
            };
            let term = weight * (di / pi) * (dj / pi);
            acc.add(term);
            magnitude.add(term.abs());
        }
    }
    let value = acc.value();
    if value < 0.0 {
        if value >= -NEGATIVE_VARIANCE_TOLERANCE * magnitude.value() {
            NEGATIVE_VARIANCE_CLAMPS.fetch_add(1, Ordering::Relaxed);
            return Ok(0.0);
        }
        return Err(EstimatorError::NegativeVariance { value });
    }
    Ok(value)
}

// ------------------------------------------------------------- GREG

/// Working-model specification for the GREG estimator: WLS with design
/// weights `1/pi_i`, unit working variances, optional intercept.
#[derive(Clone, Copy, Debug)]
pub struct WorkingModelSpec {
    pub intercept: bool,
}

impl Default for WorkingModelSpec {
    fn default() -> Self {
        Self { intercept: true }
    }
}

/// Fitted GREG ingredients retained for variance estimation.
#[derive(Clone, Debug)]
pub struct GregFit {
    /// Sample residuals `y_i - yhat_i`, in sample order.
    pub residuals: Vec<f64>,
    /// Calibration g-weights, in sample order.
    pub g_weights: Vec<f64>,
}

/// GREG outcome: the estimate plus, when the fit succeeded, the ingredients
/// for its variance estimator.
#[derive(Clone, Debug)]
pub struct GregOutcome {
    pub estimate: EstimateResult,
    pub fit: Option<GregFit>,
}

/// GREG estimator over the frame the sample was drawn from: fit WLS on the
/// sample with weights `1/pi_i`, then `sum_frame yhat + sum_s (y - yhat)/pi`.
/// A singular weighted design yields the `singular-model` status rather than
/// a pseudo-inverse fit.
pub fn greg_point(
    pop: &Population,
    frame_rows: &[u32],
    sample: &Sample,
    spec: &WorkingModelSpec,
) -> GregOutcome {
    debug_assert_eq!(frame_rows.len(), sample.frame_size());
    let pi = sample.pi();
    let train = match TrainingSet::from_population_rows(pop, sample.rows()) {
        Ok(t) => t,
        Err(_) => {
            return GregOutcome {
                estimate: EstimateResult::singular_model(),
                fit: None,
            }
        }
    };
    let weights = vec![1.0 / pi; sample.n()];
    let model = match crate::models::fit_wls(&train, &weights, spec.intercept) {
        Ok(m) => m,
        Err(ModelError::SingularFit { .. }) | Err(ModelError::TooFewRows { .. }) => {
            return GregOutcome {
                estimate: EstimateResult::singular_model(),
                fit: None,
            }
        }
        Err(_) => {
            return GregOutcome {
                estimate: EstimateResult::singular_model(),
                fit: None,
            }
        }
    };

    let predicted_total = kahan_sum(
        frame_rows
            .iter()
            .map(|&r| model.predict(pop.x_row(r as usize)).expect("dim")),
    );
    let residuals: Vec<f64> = sample
        .rows()
        .iter()
        .map(|&r| pop.y_at(r as usize) - model.predict(pop.x_row(r as usize)).expect("dim"))
        .collect();
    let correction = kahan_sum(residuals.iter().map(|&e| e / pi));
    let point = predicted_total + correction;

    let g_weights = match calibration_g_weights(pop, frame_rows, sample, spec) {
        Some(g) => g,
        None => {
            return GregOutcome {
                estimate: EstimateResult::singular_model(),
                fit: None,
            }
        }
    };
    GregOutcome {
        estimate: EstimateResult::ok(point),
        fit: Some(GregFit {
            residuals,
            g_weights,
        }),
    }
}

/// Standard calibration identity: `g_i = 1 + (t_x - t_x_ht)' T^-1 x_i` with
/// `T = sum_s x_i x_i' / pi_i`, design columns including the intercept.
fn calibration_g_weights(
    pop: &Population,
    frame_rows: &[u32],
    sample: &Sample,
    spec: &WorkingModelSpec,
) -> Option<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};

    let p = pop.aux_dim();
    let cols = p + usize::from(spec.intercept);
    let pi = sample.pi();
    let design_row = |r: u32| -> Vec<f64> {
        let mut v = Vec::with_capacity(cols);
        if spec.intercept {
            v.push(1.0);
        }
        v.extend_from_slice(pop.x_row(r as usize));
        v
    };

    // frame totals and HT totals of the design columns
    let mut t_x = vec![KahanSum::new(); cols];
    for &r in frame_rows {
        for (acc, v) in t_x.iter_mut().zip(design_row(r)) {
            acc.add(v);
        }
    }
    let mut t_x_ht = vec![KahanSum::new(); cols];
    for &r in sample.rows() {
        for (acc, v) in t_x_ht.iter_mut().zip(design_row(r)) {
            acc.add(v / pi);
        }
    }
    let gap = DVector::from_iterator(
        cols,
        t_x.iter().zip(&t_x_ht).map(|(a, b)| a.value() - b.value()),
    );

    let mut t_mat = DMatrix::zeros(cols, cols);
    for &r in sample.rows() {
        let x = design_row(r);
        for a in 0..cols {
            for b in 0..cols {
                t_mat[(a, b)] += x[a] * x[b] / pi;
            }
        }
    }
    let svd = t_mat.svd(true, true);
    let (mut smax, mut smin) = (0.0f64, f64::INFINITY);
    for &s in svd.singular_values.iter() {
        smax = smax.max(s);
        smin = smin.min(s);
    }
    if smin <= 0.0 || smax / smin > 1e14 {
        return None;
    }
    let lambda = svd.solve(&gap, 0.0).ok()?;

    Some(
        sample
            .rows()
            .iter()
            .map(|&r| {
                let x = design_row(r);
                1.0 + x.iter().zip(lambda.iter()).map(|(v, l)| v * l).sum::<f64>()
            })
            .collect(),
    )
}

/// g-weighted residual variance estimator for GREG; reduces to the plain
/// difference-estimator variance when all g-weights are 1.
pub fn greg_variance_estimate(sample: &Sample, fit: &GregFit) -> Result<f64, EstimatorError> {
    let weighted: Vec<f64> = fit
        .residuals
        .iter()
        .zip(&fit.g_weights)
        .map(|(&e, &g)| g * e)
        .collect();
    difference_variance_estimate(sample, &weighted)
}

// ------------------------------------------------- naive model-assisted

/// Deliberately naive model-assisted estimator: the model is fitted on the
/// sample itself, so the correction term reuses the data the model already
/// saw. Design-biased; no valid variance estimator exists, so
/// `variance` is always absent.
pub fn naive_model_assisted_point(
    pop: &Population,
    frame_rows: &[u32],
    sample: &Sample,
    params: &crate::models::ForestParams,
) -> Result<EstimateResult, EstimatorError> {
    debug_assert_eq!(frame_rows.len(), sample.frame_size());
    let train = TrainingSet::from_population_rows(pop, sample.rows())?;
    let model = crate::models::fit_forest(&train, params)?;
    let predicted_total = kahan_sum(
        frame_rows
            .iter()
            .map(|&r| model.predict(pop.x_row(r as usize)).expect("dim")),
    );
    let pi = sample.pi();
    let correction = kahan_sum(sample.rows().iter().map(|&r| {
        (pop.y_at(r as usize) - model.predict(pop.x_row(r as usize)).expect("dim")) / pi
    }));
    Ok(EstimateResult::ok(predicted_total + correction))
}

// --------------------------------------------------- data integration

/// Post-stratified data-integration estimator over a sample from U:
/// `t_A + N_B * (sum_s y (1-delta) / pi) / (sum_s (1-delta) / pi)`.
/// Design-consistent but not unbiased; undefined when no sampled unit falls
/// in B.
pub fn di_kt_point(pop: &Population, partition: &Partition, sample: &Sample) -> EstimateResult {
    debug_assert_eq!(sample.kind(), FrameKind::Population);
    let pi = sample.pi();
    let mut numerator = KahanSum::new();
    let mut denominator = KahanSum::new();
    for &r in sample.rows() {
        if !partition.in_a(r as usize) {
            numerator.add(pop.y_at(r as usize) / pi);
            denominator.add(1.0 / pi);
        }
    }
    if denominator.value() == 0.0 {
        return EstimateResult::insufficient_sample();
    }
    let t_a = partition.t_a(pop);
    let n_b = partition.n_b() as f64;
    EstimateResult::ok(t_a + n_b * numerator.value() / denominator.value())
}

/// Design-unbiased data-integration estimator over a sample from B:
/// `t_A + sum_{s_b} y_i / pi_iB`. When B is empty the register covers the
/// whole population and the total is known exactly.
pub fn di_ht_point(
    pop: &Population,
    partition: &Partition,
    sample_b: Option<&Sample>,
) -> Result<EstimateResult, EstimatorError> {
    let t_a = partition.t_a(pop);
    if partition.n_b() == 0 {
        return Ok(EstimateResult::ok_with_variance(t_a, 0.0));
    }
    let sample = sample_b.ok_or(EstimatorError::MissingSample)?;
    debug_assert_eq!(sample.kind(), FrameKind::Complement);
    debug_assert_eq!(sample.frame_size(), partition.n_b());
    let pi = sample.pi();
    let correction = kahan_sum(sample.rows().iter().map(|&r| pop.y_at(r as usize) / pi));
    Ok(EstimateResult::ok(t_a + correction))
}

/// Variance estimator for the B-frame data-integration estimator; the
/// register stratum contributes exactly zero.
pub fn di_ht_variance_estimate(sample_b: &Sample, y_s: &[f64]) -> Result<f64, EstimatorError> {
    difference_variance_estimate(sample_b, y_s)
}

// --------------------------------------------------------------- MADI

/// Precomputed ingredients of the model-assisted data-integration
/// estimator: the register total, the model total over B, and per-unit
/// predictions on B. Construction enforces the defining guardrail that the
/// model saw only register rows.
#[derive(Clone, Debug)]
pub struct MadiContext {
    t_a: f64,
    t_mu_b: f64,
    /// Predictions for B rows, indexed by population row; rows in A are
    /// never read.
    mu_by_row: Vec<f64>,
}

impl MadiContext {
    pub fn new(
        pop: &Population,
        partition: &Partition,
        model: &FittedModel,
    ) -> Result<Self, EstimatorError> {
        for &id in model.training_ids() {
            if !partition.id_in_a(pop, id) {
                return Err(EstimatorError::TrainingLeak { id });
            }
        }
        let mut mu_by_row = vec![0.0; pop.len()];
        let mut t_mu_b = KahanSum::new();
        for (row, slot) in mu_by_row.iter_mut().enumerate() {
            if !partition.in_a(row) {
                let mu = model.predict(pop.x_row(row))?;
                *slot = mu;
                t_mu_b.add(mu);
            }
        }
        Ok(Self {
            t_a: partition.t_a(pop),
            t_mu_b: t_mu_b.value(),
            mu_by_row,
        })
    }

    pub fn t_a(&self) -> f64 {
        self.t_a
    }

    pub fn model_total_b(&self) -> f64 {
        self.t_mu_b
    }

    /// Residuals `e_i = y_i - mu(x_i)` on the sampled B units, sample order.
    pub fn residuals(&self, pop: &Population, sample_b: &Sample) -> Vec<f64> {
        sample_b
            .rows()
            .iter()
            .map(|&r| pop.y_at(r as usize) - self.mu_by_row[r as usize])
            .collect()
    }

    /// `t_A + sum_B mu + sum_{s_b} e_i / pi_iB`.
    pub fn point(&self, pop: &Population, sample_b: &Sample) -> EstimateResult {
        debug_assert_eq!(sample_b.kind(), FrameKind::Complement);
        let pi = sample_b.pi();
        let correction = kahan_sum(
            sample_b
                .rows()
                .iter()
                .map(|&r| (pop.y_at(r as usize) - self.mu_by_row[r as usize]) / pi),
        );
        EstimateResult::ok(self.t_a + self.t_mu_b + correction)
    }
}

/// Model-assisted data-integration estimator in one call; prefer building a
/// [`MadiContext`] once when evaluating many samples.
pub fn madi_point(
    pop: &Population,
    partition: &Partition,
    sample_b: &Sample,
    model: &FittedModel,
) -> Result<EstimateResult, EstimatorError> {
    Ok(MadiContext::new(pop, partition, model)?.point(pop, sample_b))
}

/// Variance estimator for the model-assisted data-integration estimator;
/// structurally the difference-estimator variance on frame B with the model
/// residuals as D.
pub fn madi_variance_estimate(sample_b: &Sample, e_s: &[f64]) -> Result<f64, EstimatorError> {
    difference_variance_estimate(sample_b, e_s)
}

// ------------------------------------------------------------------ CI

/// Two-sided Student-t confidence interval
/// `point ± t_{n-1,(1+level)/2} * sqrt(variance)`.
pub fn confidence_interval(
    point: f64,
    variance: f64,
    n: usize,
    level: f64,
) -> Result<(f64, f64), EstimatorError> {
    if variance.is_nan() || variance < 0.0 {
        return Err(EstimatorError::NegativeVarianceInput { value: variance });
    }
    if n < 2 {
        return Err(EstimatorError::NeedsTwo { n });
    }
    if level.is_nan() || level <= 0.0 || level >= 1.0 {
        return Err(EstimatorError::BadLevel { level });
    }
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid t parameters");
    let quantile = dist.inverse_cdf(0.5 + level / 2.0);
    let half_width = quantile * variance.sqrt();
    Ok((point - half_width, point + half_width))
}
