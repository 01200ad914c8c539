//! Monte Carlo harness for whole sampling strategies.
//!
//! A strategy couples a design (SRS from U or from B) with an estimator.
//! For each grid size the harness draws M replicate samples on streams
//! derived from `(master, strategy, n, replicate)`, evaluates point,
//! variance and confidence interval per replicate, and aggregates bias,
//! MSE/RMSE, coverage and the count of replicates where no estimate exists.
//! Replicates may run on any number of threads; aggregates fold in
//! replicate order with compensated summation, so reports are bit-identical
//! regardless of parallelism.
//!
//! Enumeration mode replaces the M random draws with every possible sample
//! (equal design probability under SRS), which turns the harness itself
//! into an exactness oracle.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::accum::kahan_sum;
use crate::design::{
    draw_srs, Frame, FrameKind, Sample, SampleEnumeration, DEFAULT_ENUMERATION_CAP,
};
use crate::estimators::{
    confidence_interval, di_ht_point, di_ht_variance_estimate, difference_variance_estimate,
    greg_point, greg_variance_estimate, ht_point, madi_variance_estimate,
    naive_model_assisted_point, EstimateResult, EstimateStatus, EstimatorError, MadiContext,
    WorkingModelSpec,
};
use crate::models::{fit_forest, fit_ols, FittedModel, ForestParams, ModelError, TrainingSet};
use crate::population::{fmt_f64, population_variance, Partition, Population, PopulationError};
use crate::rng::{stream, StreamDomain};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("strategy {strategy} requires a partition")]
    MissingPartition { strategy: &'static str },
    #[error("strategy {strategy}: sample size {n} exceeds its frame of {frame} units")]
    GridTooLarge {
        strategy: &'static str,
        n: usize,
        frame: usize,
    },
    #[error("coefficient of variation is undefined for a zero total")]
    ZeroTotal,
    #[error("planning input must be positive: {what}")]
    BadPlanningInput { what: &'static str },
    #[error("census-level working-model fit is singular")]
    SingularCensusFit(#[source] ModelError),
    #[error(transparent)]
    Design(#[from] crate::design::DesignError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Population(#[from] PopulationError),
}

// ------------------------------------------------------------- strategies

/// A sampling strategy: design plus estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// SRS from U, Horvitz-Thompson estimator.
    SrsUHt,
    /// SRS from U, GREG estimator with the full auxiliary vector.
    SrsUGreg,
    /// SRS from U, naive forest-assisted estimator (model fit on the sample).
    SrsUNaiveRf,
    /// SRS from B, register total plus Horvitz-Thompson over B.
    SrsBDiHt,
    /// SRS from B, register total plus GREG over B.
    SrsBDiGreg,
    /// SRS from B, register total plus naive forest estimator over B.
    SrsBDiRf,
    /// SRS from B, model-assisted integration with an OLS model trained on A.
    SrsBMadiOls,
    /// SRS from B, model-assisted integration with a forest trained on A.
    SrsBMadiRf,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::SrsUHt,
        Strategy::SrsUGreg,
        Strategy::SrsUNaiveRf,
        Strategy::SrsBDiHt,
        Strategy::SrsBDiGreg,
        Strategy::SrsBDiRf,
        Strategy::SrsBMadiOls,
        Strategy::SrsBMadiRf,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Strategy::SrsUHt => "srs_u_ht",
            Strategy::SrsUGreg => "srs_u_greg",
            Strategy::SrsUNaiveRf => "srs_u_rf",
            Strategy::SrsBDiHt => "srs_b_di_ht",
            Strategy::SrsBDiGreg => "srs_b_di_greg",
            Strategy::SrsBDiRf => "srs_b_di_rf",
            Strategy::SrsBMadiOls => "srs_b_madi_ols",
            Strategy::SrsBMadiRf => "srs_b_madi_rf",
        }
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let wanted = text.trim().to_ascii_lowercase();
        Strategy::ALL
            .into_iter()
            .find(|s| s.id() == wanted)
            .ok_or_else(|| SimError::UnknownStrategy(text.to_string()))
    }

    /// Stable index used in stream derivation; never reorder.
    pub fn stream_index(&self) -> u64 {
        match self {
            Strategy::SrsUHt => 0,
            Strategy::SrsUGreg => 1,
            Strategy::SrsUNaiveRf => 2,
            Strategy::SrsBDiHt => 3,
            Strategy::SrsBDiGreg => 4,
            Strategy::SrsBDiRf => 5,
            Strategy::SrsBMadiOls => 6,
            Strategy::SrsBMadiRf => 7,
        }
    }

    pub fn frame_kind(&self) -> FrameKind {
        match self {
            Strategy::SrsUHt | Strategy::SrsUGreg | Strategy::SrsUNaiveRf => FrameKind::Population,
            _ => FrameKind::Complement,
        }
    }

    pub fn needs_partition(&self) -> bool {
        self.frame_kind() == FrameKind::Complement
    }

    /// Whether the strategy carries a valid design-based variance estimator.
    pub fn has_variance_estimator(&self) -> bool {
        !matches!(self, Strategy::SrsUNaiveRf | Strategy::SrsBDiRf)
    }
}

// ----------------------------------------------------------- configuration

/// Forest hyperparameters without a seed; seeds are derived per use.
#[derive(Clone, Copy, Debug)]
pub struct ForestShape {
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestShape {
    fn default() -> Self {
        let d = ForestParams::default();
        Self {
            n_trees: d.n_trees,
            mtry: d.mtry,
            min_leaf: d.min_leaf,
            max_depth: d.max_depth,
            bootstrap: d.bootstrap,
        }
    }
}

impl ForestShape {
    pub fn with_seed(&self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            mtry: self.mtry,
            min_leaf: self.min_leaf,
            max_depth: self.max_depth,
            bootstrap: self.bootstrap,
            seed,
        }
    }
}

/// Everything a grid run needs besides the data.
#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub strategies: Vec<Strategy>,
    /// Sample sizes n_k.
    pub grid: Vec<usize>,
    /// Replicates per (strategy, n) cell; ignored in enumeration mode.
    pub replicates: usize,
    pub master_seed: u64,
    /// Confidence level for coverage, e.g. 0.95.
    pub level: f64,
    /// Replace random replicates with every possible sample.
    pub enumeration: bool,
    pub enumeration_cap: u128,
    pub forest: ForestShape,
    /// Keep per-replicate rows for dumping.
    pub dump_replicates: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::SrsUHt],
            grid: vec![100],
            replicates: 1000,
            master_seed: 0,
            level: 0.95,
            enumeration: false,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            forest: ForestShape::default(),
            dump_replicates: false,
        }
    }
}

// ----------------------------------------------------------------- metrics

/// Monte Carlo bias `(1/M) sum (t_hat_m - t_y)`.
pub fn bias_metric(estimates: &[f64], t_y: f64) -> f64 {
    assert!(!estimates.is_empty());
    kahan_sum(estimates.iter().map(|&e| e - t_y)) / estimates.len() as f64
}

/// Monte Carlo mean squared error `(1/M) sum (t_hat_m - t_y)^2`.
pub fn mse_metric(estimates: &[f64], t_y: f64) -> f64 {
    assert!(!estimates.is_empty());
    kahan_sum(estimates.iter().map(|&e| (e - t_y) * (e - t_y))) / estimates.len() as f64
}

/// Fraction of intervals containing the true total.
pub fn coverage_metric(intervals: &[(f64, f64)], t_y: f64) -> f64 {
    assert!(!intervals.is_empty());
    let hits = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= t_y && t_y <= *hi)
        .count();
    hits as f64 / intervals.len() as f64
}

/// Coefficient of variation `sqrt(V) / total`.
pub fn theoretical_cv(variance: f64, total: f64) -> Result<f64, SimError> {
    if total == 0.0 {
        return Err(SimError::ZeroTotal);
    }
    if variance.is_nan() || variance < 0.0 {
        return Err(SimError::BadPlanningInput {
            what: "variance must be nonnegative",
        });
    }
    Ok(variance.sqrt() / total)
}

/// Theoretical SRS variance of a difference-style estimator at size n,
/// `N^2 (1 - n/N) S^2 / n`; the planner's inverse.
pub fn srs_variance_at(frame_size: usize, n: usize, s2: f64) -> f64 {
    let nn = frame_size as f64;
    nn * nn * (1.0 - n as f64 / nn) * s2 / n as f64
}

// ------------------------------------------------------------ sample sizes

/// Inputs of the sample-size planner.
#[derive(Clone, Copy, Debug)]
pub struct SampleSizeInputs {
    /// Frame size N (or N_B for the B-frame strategies).
    pub frame_size: usize,
    /// Planning variance S^2 of the relevant residuals.
    pub variance: f64,
    /// Planning total Y the CV is measured against.
    pub total: f64,
    /// Target coefficient of variation, e.g. 0.01.
    pub cv_target: f64,
}

/// Smallest n with theoretical CV at most the target:
/// `ceil(N^2 S^2 / ((Y cv)^2 + N S^2))`, clamped to `[2, N]`.
pub fn required_sample_size(inputs: &SampleSizeInputs) -> Result<usize, SimError> {
    if inputs.frame_size == 0 {
        return Err(SimError::BadPlanningInput { what: "frame size" });
    }
    if inputs.variance.is_nan() || inputs.variance < 0.0 {
        return Err(SimError::BadPlanningInput { what: "variance" });
    }
    if inputs.total.is_nan() || inputs.total <= 0.0 {
        return Err(SimError::BadPlanningInput { what: "total" });
    }
    if inputs.cv_target.is_nan() || inputs.cv_target <= 0.0 {
        return Err(SimError::BadPlanningInput { what: "cv target" });
    }
    let nn = inputs.frame_size as f64;
    let raw = nn * nn * inputs.variance
        / ((inputs.total * inputs.cv_target).powi(2) + nn * inputs.variance);
    let n = (raw.ceil() as usize).max(2);
    Ok(n.min(inputs.frame_size))
}

/// Planner for the plain expansion estimator over U.
pub fn sample_size_ht(pop: &Population, cv_target: f64) -> Result<usize, SimError> {
    let s2 = population_variance(pop.y())?;
    required_sample_size(&SampleSizeInputs {
        frame_size: pop.len(),
        variance: s2,
        total: pop.total_y(),
        cv_target,
    })
}

/// Planner for GREG over U: planning variance of census-fit residuals.
pub fn sample_size_greg(pop: &Population, cv_target: f64) -> Result<usize, SimError> {
    let s2 = census_residual_variance(pop)?;
    required_sample_size(&SampleSizeInputs {
        frame_size: pop.len(),
        variance: s2,
        total: pop.total_y(),
        cv_target,
    })
}

/// Which total the model-assisted planner's CV is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CvDenominator {
    /// The total over the complement frame B (the literal planning formula).
    ComplementTotal,
    /// The full population total.
    PopulationTotal,
}

impl CvDenominator {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        match text.trim().to_ascii_lowercase().as_str() {
            "yb" => Ok(CvDenominator::ComplementTotal),
            "y" => Ok(CvDenominator::PopulationTotal),
            other => Err(SimError::Config(format!(
                "cv denominator must be yb or y, got {other:?}"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CvDenominator::ComplementTotal => "yb",
            CvDenominator::PopulationTotal => "y",
        }
    }
}

/// Planner for the model-assisted integration strategy: residual variance
/// over B of a register-trained model, frame B, total per `denominator`.
pub fn sample_size_madi(
    pop: &Population,
    partition: &Partition,
    model: &FittedModel,
    cv_target: f64,
    denominator: CvDenominator,
) -> Result<usize, SimError> {
    let variances = planning_variances(pop, Some(partition), Some(model))?;
    let s2 = variances
        .s2_di_residual
        .expect("partition and model supplied");
    let t_b = kahan_sum(
        (0..pop.len())
            .filter(|&r| !partition.in_a(r))
            .map(|r| pop.y_at(r)),
    );
    let total = match denominator {
        CvDenominator::ComplementTotal => t_b,
        CvDenominator::PopulationTotal => pop.total_y(),
    };
    required_sample_size(&SampleSizeInputs {
        frame_size: partition.n_b(),
        variance: s2,
        total,
        cv_target,
    })
}

/// The three planning variances: S^2 of y over U, S^2 of census-OLS
/// residuals over U, and (when a partition and register-trained model are
/// supplied) S^2 over B of the model residuals.
#[derive(Clone, Copy, Debug)]
pub struct PlanningVariances {
    pub s2_y: f64,
    pub s2_greg_residual: f64,
    pub s2_di_residual: Option<f64>,
}

fn census_residual_variance(pop: &Population) -> Result<f64, SimError> {
    let rows: Vec<u32> = (0..pop.len() as u32).collect();
    let train = TrainingSet::from_population_rows(pop, &rows)?;
    let model = fit_ols(&train, true).map_err(SimError::SingularCensusFit)?;
    let residuals: Vec<f64> = (0..pop.len())
        .map(|r| pop.y_at(r) - model.predict(pop.x_row(r)).expect("dims match"))
        .collect();
    Ok(population_variance(&residuals)?)
}

pub fn planning_variances(
    pop: &Population,
    partition: Option<&Partition>,
    model: Option<&FittedModel>,
) -> Result<PlanningVariances, SimError> {
    let s2_y = population_variance(pop.y())?;
    let s2_greg_residual = census_residual_variance(pop)?;
    let s2_di_residual = match (partition, model) {
        (Some(part), Some(model)) => {
            // context construction enforces the train/estimate guardrail
            let _ctx = MadiContext::new(pop, part, model)?;
            let frame = Frame::complement(part);
            let residuals: Vec<f64> = frame
                .rows()
                .iter()
                .map(|&r| {
                    pop.y_at(r as usize) - model.predict(pop.x_row(r as usize)).expect("dims")
                })
                .collect();
            Some(population_variance(&residuals)?)
        }
        _ => None,
    };
    Ok(PlanningVariances {
        s2_y,
        s2_greg_residual,
        s2_di_residual,
    })
}

// ------------------------------------------------------------------- runs

/// Outcome of one replicate.
#[derive(Clone, Copy, Debug)]
pub struct Replicate {
    pub point: Option<f64>,
    pub variance: Option<f64>,
    pub covered: Option<bool>,
    pub status: EstimateStatus,
}

/// Aggregates of one (strategy, n) cell.
#[derive(Clone, Debug)]
pub struct CellReport {
    pub strategy: Strategy,
    pub n: usize,
    pub replicates: usize,
    pub na_count: usize,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_variance_estimate: Option<f64>,
}

/// Per-replicate dump row.
#[derive(Clone, Debug)]
pub struct ReplicateRow {
    pub strategy: Strategy,
    pub n: usize,
    pub replicate: usize,
    pub outcome: Replicate,
}

#[derive(Clone, Debug)]
pub struct SimulationReport {
    pub t_y: f64,
    pub cells: Vec<CellReport>,
    pub replicate_rows: Vec<ReplicateRow>,
}

impl SimulationReport {
    /// `strategy,n,M,na_count,bias,mse,rmse,coverage,mean_var_est`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,n,M,na_count,bias,mse,rmse,coverage,mean_var_est\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.strategy.id(),
                c.n,
                c.replicates,
                c.na_count,
                c.bias.map(fmt_f64).unwrap_or_default(),
                c.mse.map(fmt_f64).unwrap_or_default(),
                c.rmse.map(fmt_f64).unwrap_or_default(),
                c.coverage.map(fmt_f64).unwrap_or_default(),
                c.mean_variance_estimate.map(fmt_f64).unwrap_or_default(),
            ));
        }
        out
    }

    /// Long-format plot data `strategy,n,<metric>` for one metric column.
    pub fn plot_csv(&self, metric: &str) -> String {
        let mut out = format!("strategy,n,{metric}\n");
        for c in &self.cells {
            let value = match metric {
                "bias" => c.bias,
                "rmse" => c.rmse,
                "coverage" => c.coverage,
                _ => None,
            };
            if let Some(v) = value {
                out.push_str(&format!("{},{},{}\n", c.strategy.id(), c.n, fmt_f64(v)));
            }
        }
        out
    }

    /// `strategy,n,m,point,var_est,status` rows, when dumping was enabled.
    pub fn replicates_csv(&self) -> String {
        let mut out = String::from("strategy,n,m,point,var_est,status\n");
        for r in &self.replicate_rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.strategy.id(),
                r.n,
                r.replicate,
                r.outcome.point.map(fmt_f64).unwrap_or_default(),
                r.outcome.variance.map(fmt_f64).unwrap_or_default(),
                r.outcome.status.label(),
            ));
        }
        out
    }

    pub fn cell(&self, strategy: Strategy, n: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.n == n)
    }
}

struct StrategyRun<'a> {
    strategy: Strategy,
    frame: Frame,
    partition: Option<&'a Partition>,
    /// Register-trained model context for the integration strategies;
    /// `Err(status)` when the one-time fit failed.
    madi: Option<Result<MadiContext, EstimateStatus>>,
}

fn build_strategy_run<'a>(
    strategy: Strategy,
    config: &SimulationConfig,
    pop: &Population,
    partition: Option<&'a Partition>,
) -> Result<StrategyRun<'a>, SimError> {
    let frame = match strategy.frame_kind() {
        FrameKind::Population => Frame::population(pop),
        FrameKind::Complement => {
            let part = partition.ok_or(SimError::MissingPartition {
                strategy: strategy.id(),
            })?;
            Frame::complement(part)
        }
    };
    if frame.is_empty() {
        return Err(SimError::Config(format!(
            "strategy {}: its frame is empty",
            strategy.id()
        )));
    }

    let madi = match strategy {
        Strategy::SrsBMadiOls => {
            let part = partition.expect("checked above");
            let train = TrainingSet::from_register(pop, part)?;
            match fit_ols(&train, true) {
                Ok(model) => Some(Ok(MadiContext::new(pop, part, &model)?)),
                Err(ModelError::SingularFit { .. }) | Err(ModelError::TooFewRows { .. }) => {
                    Some(Err(EstimateStatus::SingularModel))
                }
                Err(e) => return Err(e.into()),
            }
        }
        Strategy::SrsBMadiRf => {
            let part = partition.expect("checked above");
            let train = TrainingSet::from_register(pop, part)?;
            let seed: u64 = stream(
                config.master_seed,
                StreamDomain::ModelFit,
                strategy.stream_index(),
                0,
                0,
            )
            .random();
            let model = fit_forest(&train, &config.forest.with_seed(seed))?;
            Some(Ok(MadiContext::new(pop, part, &model)?))
        }
        _ => None,
    };

    Ok(StrategyRun {
        strategy,
        frame,
        partition,
        madi,
    })
}

fn evaluate_replicate(
    run: &StrategyRun<'_>,
    config: &SimulationConfig,
    pop: &Population,
    t_y: f64,
    sample: &Sample,
    replicate: u64,
) -> Result<Replicate, SimError> {
    let n = sample.n();
    let estimate: EstimateResult = match run.strategy {
        Strategy::SrsUHt => {
            let y_s = sample.y_values(pop);
            let point = ht_point(sample, &y_s);
            let variance = difference_variance_estimate(sample, &y_s)?;
            EstimateResult::ok_with_variance(point, variance)
        }
        Strategy::SrsUGreg => {
            let out = greg_point(pop, run.frame.rows(), sample, &WorkingModelSpec::default());
            match out.fit {
                Some(fit) if out.estimate.is_ok() => {
                    let variance = greg_variance_estimate(sample, &fit)?;
                    out.estimate.with_variance(variance)
                }
                _ => out.estimate,
            }
        }
        Strategy::SrsUNaiveRf | Strategy::SrsBDiRf => {
            let seed: u64 = stream(
                config.master_seed,
                StreamDomain::ModelFit,
                run.strategy.stream_index(),
                n as u64,
                replicate,
            )
            .random();
            let params = config.forest.with_seed(seed);
            let out = naive_model_assisted_point(pop, run.frame.rows(), sample, &params)?;
            if run.strategy == Strategy::SrsBDiRf {
                let t_a = run.partition.expect("B design").t_a(pop);
                EstimateResult::ok(t_a + out.point().expect("naive point always exists"))
            } else {
                out
            }
        }
        Strategy::SrsBDiHt => {
            let part = run.partition.expect("B design");
            let est = di_ht_point(pop, part, Some(sample))?;
            let y_s = sample.y_values(pop);
            let variance = di_ht_variance_estimate(sample, &y_s)?;
            est.with_variance(variance)
        }
        Strategy::SrsBDiGreg => {
            let part = run.partition.expect("B design");
            let out = greg_point(pop, run.frame.rows(), sample, &WorkingModelSpec::default());
            match (out.estimate.point(), out.fit) {
                (Some(t_b_hat), Some(fit)) => {
                    let variance = greg_variance_estimate(sample, &fit)?;
                    EstimateResult::ok_with_variance(part.t_a(pop) + t_b_hat, variance)
                }
                _ => out.estimate,
            }
        }
        Strategy::SrsBMadiOls | Strategy::SrsBMadiRf => {
            match run
                .madi
                .as_ref()
                .expect("madi strategies precompute a model")
            {
                Ok(ctx) => {
                    let est = ctx.point(pop, sample);
                    let residuals = ctx.residuals(pop, sample);
                    let variance = madi_variance_estimate(sample, &residuals)?;
                    est.with_variance(variance)
                }
                Err(EstimateStatus::SingularModel) => EstimateResult::singular_model(),
                Err(_) => EstimateResult::insufficient_sample(),
            }
        }
    };

    let covered = match (estimate.point(), estimate.variance()) {
        // a census of one unit has exact variance 0 but no t quantile
        (Some(point), Some(variance)) if n >= 2 => {
            let (lo, hi) = confidence_interval(point, variance, n, config.level)?;
            Some(lo <= t_y && t_y <= hi)
        }
        _ => None,
    };
    Ok(Replicate {
        point: estimate.point(),
        variance: estimate.variance(),
        covered,
        status: estimate.status(),
    })
}

fn aggregate_cell(strategy: Strategy, n: usize, t_y: f64, outcomes: &[Replicate]) -> CellReport {
    let total = outcomes.len();
    let points: Vec<f64> = outcomes.iter().filter_map(|r| r.point).collect();
    let na_count = total - points.len();
    let (bias, mse, rmse) = if points.is_empty() {
        (None, None, None)
    } else {
        let b = bias_metric(&points, t_y);
        let m = mse_metric(&points, t_y);
        (Some(b), Some(m), Some(m.sqrt()))
    };
    let covered: Vec<bool> = outcomes.iter().filter_map(|r| r.covered).collect();
    let coverage = if covered.is_empty() {
        None
    } else {
        Some(covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64)
    };
    let variances: Vec<f64> = outcomes.iter().filter_map(|r| r.variance).collect();
    let mean_variance_estimate = if variances.is_empty() {
        None
    } else {
        Some(kahan_sum(variances.iter().copied()) / variances.len() as f64)
    };
    CellReport {
        strategy,
        n,
        replicates: total,
        na_count,
        bias,
        mse,
        rmse,
        coverage,
        mean_variance_estimate,
    }
}

fn validate(config: &SimulationConfig) -> Result<(), SimError> {
    if config.strategies.is_empty() {
        return Err(SimError::Config("at least one strategy is required".into()));
    }
    if config.grid.is_empty() {
        return Err(SimError::Config(
            "grid must contain at least one sample size".into(),
        ));
    }
    if !config.enumeration && config.replicates == 0 {
        return Err(SimError::Config("replicates must be at least 1".into()));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(SimError::Config(format!(
            "confidence level must be inside (0, 1), got {}",
            config.level
        )));
    }
    if config.strategies.iter().any(|s| s.has_variance_estimator()) {
        if let Some(&n) = config.grid.iter().find(|&&n| n < 2) {
            return Err(SimError::Config(format!(
                "grid size {n} < 2 cannot support variance estimation"
            )));
        }
    }
    if config.forest.n_trees == 0 || config.forest.min_leaf == 0 {
        return Err(SimError::Config(
            "forest shape: n_trees and min_leaf must be positive".into(),
        ));
    }
    Ok(())
}

/// Fit the register-trained model a strategy needs, if any. Used by the
/// one-shot estimation path and for model dumps; grid runs fit their own.
pub fn fit_strategy_model(
    strategy: Strategy,
    config: &SimulationConfig,
    pop: &Population,
    partition: Option<&Partition>,
) -> Result<Option<FittedModel>, SimError> {
    match strategy {
        Strategy::SrsBMadiOls => {
            let part = partition.ok_or(SimError::MissingPartition {
                strategy: strategy.id(),
            })?;
            let train = TrainingSet::from_register(pop, part)?;
            Ok(Some(fit_ols(&train, true)?))
        }
        Strategy::SrsBMadiRf => {
            let part = partition.ok_or(SimError::MissingPartition {
                strategy: strategy.id(),
            })?;
            let train = TrainingSet::from_register(pop, part)?;
            let seed: u64 = stream(
                config.master_seed,
                StreamDomain::ModelFit,
                strategy.stream_index(),
                0,
                0,
            )
            .random();
            Ok(Some(fit_forest(&train, &config.forest.with_seed(seed))?))
        }
        _ => Ok(None),
    }
}

/// A one-shot strategy evaluation on a supplied sample.
#[derive(Clone, Copy, Debug)]
pub struct SingleEstimate {
    pub result: EstimateResult,
    pub interval: Option<(f64, f64)>,
}

/// Evaluate one strategy on one sample, exactly as a grid replicate would.
pub fn estimate_once(
    strategy: Strategy,
    config: &SimulationConfig,
    pop: &Population,
    partition: Option<&Partition>,
    sample: &Sample,
) -> Result<SingleEstimate, SimError> {
    validate(config)?;
    let run = build_strategy_run(strategy, config, pop, partition)?;
    if sample.frame_size() != run.frame.len() {
        return Err(SimError::Config(format!(
            "sample was drawn from a frame of {} units but strategy {} uses {}",
            sample.frame_size(),
            strategy.id(),
            run.frame.len()
        )));
    }
    let outcome = evaluate_replicate(&run, config, pop, pop.total_y(), sample, 0)?;
    let interval = match (outcome.point, outcome.variance) {
        (Some(point), Some(variance)) if sample.n() >= 2 => Some(confidence_interval(
            point,
            variance,
            sample.n(),
            config.level,
        )?),
        _ => None,
    };
    let result = match (outcome.point, outcome.variance) {
        (Some(p), Some(v)) => EstimateResult::ok_with_variance(p, v),
        (Some(p), None) => EstimateResult::ok(p),
        (None, _) => match outcome.status {
            EstimateStatus::SingularModel => EstimateResult::singular_model(),
            _ => EstimateResult::insufficient_sample(),
        },
    };
    Ok(SingleEstimate { result, interval })
}

/// Run the full (strategy × grid) Monte Carlo study.
pub fn run_grid(
    config: &SimulationConfig,
    pop: &Population,
    partition: Option<&Partition>,
) -> Result<SimulationReport, SimError> {
    validate(config)?;
    let t_y = pop.total_y();
    let mut cells = Vec::new();
    let mut replicate_rows = Vec::new();

    for &strategy in &config.strategies {
        let run = build_strategy_run(strategy, config, pop, partition)?;
        for &n in &config.grid {
            if n > run.frame.len() {
                return Err(SimError::GridTooLarge {
                    strategy: strategy.id(),
                    n,
                    frame: run.frame.len(),
                });
            }
            let outcomes: Vec<Replicate> = if config.enumeration {
                let samples: Vec<Sample> =
                    SampleEnumeration::with_cap(&run.frame, n, config.enumeration_cap)?.collect();
                samples
                    .par_iter()
                    .enumerate()
                    .map(|(m, sample)| evaluate_replicate(&run, config, pop, t_y, sample, m as u64))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                (0..config.replicates)
                    .into_par_iter()
                    .map(|m| {
                        let mut rng = stream(
                            config.master_seed,
                            StreamDomain::Sampling,
                            strategy.stream_index(),
                            n as u64,
                            m as u64,
                        );
                        let sample = draw_srs(&run.frame, n, &mut rng)?;
                        evaluate_replicate(&run, config, pop, t_y, &sample, m as u64)
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            if config.dump_replicates {
                replicate_rows.extend(outcomes.iter().enumerate().map(|(m, &outcome)| {
                    ReplicateRow {
                        strategy,
                        n,
                        replicate: m,
                        outcome,
                    }
                }));
            }
            cells.push(aggregate_cell(strategy, n, t_y, &outcomes));
        }
    }
    Ok(SimulationReport {
        t_y,
        cells,
        replicate_rows,
    })
}
