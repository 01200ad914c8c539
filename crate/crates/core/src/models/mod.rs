//! Prediction models behind a single `fit -> predict` contract.
//!
//! Any model trained on the register subset can serve as the prediction
//! component of a data-integration estimator; the estimator stays unbiased
//! regardless of model quality. Built-ins: a zero model (reduces estimators
//! to their pure design-weighted forms), OLS/WLS linear regression, a CART
//! regression tree, and a bagged random forest.

mod forest;
mod linear;
mod tree;

pub use forest::{ForestParams, RandomForest};
pub use linear::{LinearModel, SINGULAR_CONDITION_LIMIT};
pub use tree::{RegressionTree, TreeParams};

use thiserror::Error;

use crate::population::{Partition, Population};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training needs at least {needed} rows for {cols} columns, got {got}")]
    TooFewRows {
        needed: usize,
        cols: usize,
        got: usize,
    },
    #[error("singular fit: condition number {condition:.3e} exceeds {limit:.0e}")]
    SingularFit { condition: f64, limit: f64 },
    #[error("weights must be strictly positive; weight[{index}] = {value}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("weights length {got} does not match training rows {expected}")]
    WeightsLengthMismatch { expected: usize, got: usize },
    #[error("invalid forest parameters: {reason}")]
    BadParams { reason: String },
}

/// Immutable design matrix plus targets, with unit-id provenance so
/// estimators can verify train/estimate separation.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    ids: Vec<u64>,
    /// Row-major `n × p`.
    x: Vec<f64>,
    y: Vec<f64>,
    p: usize,
}

impl TrainingSet {
    pub fn new(ids: Vec<u64>, x: Vec<f64>, y: Vec<f64>, p: usize) -> Result<Self, ModelError> {
        if y.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        assert_eq!(ids.len(), y.len(), "one id per training row");
        assert_eq!(x.len(), y.len() * p, "x must be n * p");
        Ok(Self { ids, x, y, p })
    }

    /// Rows of a population, by frame row index.
    pub fn from_population_rows(pop: &Population, rows: &[u32]) -> Result<Self, ModelError> {
        let p = pop.aux_dim();
        let mut ids = Vec::with_capacity(rows.len());
        let mut x = Vec::with_capacity(rows.len() * p);
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            let unit = pop.unit(r as usize);
            ids.push(unit.id);
            x.extend_from_slice(unit.x);
            y.push(unit.y);
        }
        Self::new(ids, x, y, p)
    }

    /// The register subset A of a partition as a training set.
    pub fn from_register(pop: &Population, partition: &Partition) -> Result<Self, ModelError> {
        Self::from_population_rows(pop, &partition.a_rows())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_row(&self, row: usize) -> &[f64] {
        &self.x[row * self.p..(row + 1) * self.p]
    }
}

#[derive(Clone, Debug)]
enum ModelKind {
    Zero,
    Linear(LinearModel),
    Tree(RegressionTree),
    Forest(RandomForest),
}

/// A fitted prediction model; pure and immutable after fitting.
#[derive(Clone, Debug)]
pub struct FittedModel {
    kind: ModelKind,
    input_dim: usize,
    /// Sorted ids of the training rows; empty for data-free models.
    training_ids: Vec<u64>,
}

impl FittedModel {
    fn new(kind: ModelKind, input_dim: usize, mut training_ids: Vec<u64>) -> Self {
        training_ids.sort_unstable();
        training_ids.dedup();
        Self {
            kind,
            input_dim,
            training_ids,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Sorted, deduplicated ids of the units the model saw during training.
    pub fn training_ids(&self) -> &[u64] {
        &self.training_ids
    }

    pub fn kind_label(&self) -> &'static str {
        match self.kind {
            ModelKind::Zero => "zero",
            ModelKind::Linear(_) => "linear",
            ModelKind::Tree(_) => "tree",
            ModelKind::Forest(_) => "forest",
        }
    }

    /// Predict at a single point.
    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(match &self.kind {
            ModelKind::Zero => 0.0,
            ModelKind::Linear(m) => m.predict(x),
            ModelKind::Tree(t) => t.predict(x),
            ModelKind::Forest(f) => f.predict(x),
        })
    }

    /// Dump the learned structure as JSON for inspection. Not a stable
    /// interchange format.
    pub fn to_json(&self) -> serde_json::Value {
        let learned = match &self.kind {
            ModelKind::Zero => serde_json::json!({}),
            ModelKind::Linear(m) => m.to_json(),
            ModelKind::Tree(t) => t.to_json(),
            ModelKind::Forest(f) => f.to_json(),
        };
        serde_json::json!({
            "kind": self.kind_label(),
            "input_dim": self.input_dim,
            "training_ids": self.training_ids,
            "learned": learned,
        })
    }
}

/// Model that predicts 0 everywhere; plugging it into a difference-style
/// estimator recovers the pure Horvitz-Thompson form.
pub fn fit_zero(p: usize) -> FittedModel {
    FittedModel::new(ModelKind::Zero, p, Vec::new())
}

/// Ordinary least squares.
pub fn fit_ols(train: &TrainingSet, intercept: bool) -> Result<FittedModel, ModelError> {
    let model = LinearModel::fit_ols(train, intercept)?;
    Ok(FittedModel::new(
        ModelKind::Linear(model),
        train.dim(),
        train.ids().to_vec(),
    ))
}

/// Weighted least squares minimizing `sum w_i (y_i - x_i' b)^2`.
pub fn fit_wls(
    train: &TrainingSet,
    weights: &[f64],
    intercept: bool,
) -> Result<FittedModel, ModelError> {
    let model = LinearModel::fit_wls(train, weights, intercept)?;
    Ok(FittedModel::new(
        ModelKind::Linear(model),
        train.dim(),
        train.ids().to_vec(),
    ))
}

/// CART regression tree grown on all features.
pub fn fit_tree(train: &TrainingSet, params: &TreeParams) -> Result<FittedModel, ModelError> {
    let tree = RegressionTree::fit(train, params)?;
    Ok(FittedModel::new(
        ModelKind::Tree(tree),
        train.dim(),
        train.ids().to_vec(),
    ))
}

/// Bagged random forest; deterministic for a fixed `params.seed`.
pub fn fit_forest(train: &TrainingSet, params: &ForestParams) -> Result<FittedModel, ModelError> {
    let forest = RandomForest::fit(train, params)?;
    Ok(FittedModel::new(
        ModelKind::Forest(forest),
        train.dim(),
        train.ids().to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_train() -> TrainingSet {
        // y = 2 x1 + 3 over five points
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x + 3.0).collect();
        TrainingSet::new(vec![1, 2, 3, 4, 5], xs.to_vec(), y, 1).unwrap()
    }

    #[test]
    fn zero_model_predicts_zero_and_checks_dim() {
        let m = fit_zero(3);
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(
            m.predict(&[1.0]),
            Err(ModelError::DimensionMismatch {
                expected: 3,
                got: 1
            })
        ));
        assert!(m.training_ids().is_empty());
    }

    #[test]
    fn ols_recovers_exact_line() {
        let m = fit_ols(&line_train(), true).unwrap();
        let at10 = m.predict(&[10.0]).unwrap();
        assert!((at10 - 23.0).abs() < 1e-6);
        for x in [0.0, 1.0, 2.0, 3.0, 4.0] {
            let fitted = m.predict(&[x]).unwrap();
            let truth = 2.0 * x + 3.0;
            assert!((fitted - truth).abs() <= 1e-8 * truth.abs().max(1.0));
        }
    }

    #[test]
    fn constant_y_gives_intercept_only() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let train = TrainingSet::new(vec![1, 2, 3, 4], xs.to_vec(), vec![5.0; 4], 1).unwrap();
        let m = fit_ols(&train, true).unwrap();
        assert!((m.predict(&[100.0]).unwrap() - 5.0).abs() < 1e-8);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x = vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0];
        let train = TrainingSet::new(vec![1, 2, 3, 4], x, vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert!(matches!(
            fit_ols(&train, true),
            Err(ModelError::SingularFit { .. })
        ));
    }

    #[test]
    fn wls_with_unit_weights_equals_ols() {
        let train = line_train();
        let ols = fit_ols(&train, true).unwrap();
        let wls = fit_wls(&train, &[1.0; 5], true).unwrap();
        for x in [0.5, 1.5, 7.0] {
            assert_eq!(ols.predict(&[x]).unwrap(), wls.predict(&[x]).unwrap());
        }
    }

    #[test]
    fn wls_dominant_weight_pins_that_point() {
        // four non-collinear points, huge weight on the last one
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let y = vec![0.0, 0.9, 2.2, 10.0];
        let train = TrainingSet::new(vec![1, 2, 3, 4], x, y.clone(), 1).unwrap();
        let m = fit_wls(&train, &[1.0, 1.0, 1.0, 1e6], true).unwrap();
        let fitted = m.predict(&[3.0]).unwrap();
        assert!((fitted - 10.0).abs() < 1e-4 * 10.0, "fitted {fitted}");
    }

    #[test]
    fn wls_exact_line_recovered_for_any_weights() {
        let train = line_train();
        let m = fit_wls(&train, &[0.1, 5.0, 2.0, 9.0, 0.3], true).unwrap();
        for x in [0.0, 4.0] {
            let truth = 2.0 * x + 3.0;
            assert!((m.predict(&[x]).unwrap() - truth).abs() < 1e-8 * truth.max(1.0));
        }
    }

    #[test]
    fn wls_rejects_nonpositive_weights() {
        let train = line_train();
        assert!(matches!(
            fit_wls(&train, &[1.0, 1.0, 0.0, 1.0, 1.0], true),
            Err(ModelError::NonPositiveWeight {
                index: 2,
                value: 0.0
            })
        ));
        assert!(matches!(
            fit_wls(&train, &[1.0, 1.0], true),
            Err(ModelError::WeightsLengthMismatch {
                expected: 5,
                got: 2
            })
        ));
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        // noisy data, two features plus intercept
        let n = 40;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = i as f64;
            let b = ((i * 7) % 11) as f64;
            x.push(a);
            x.push(b);
            y.push(1.5 + 0.7 * a - 0.3 * b + ((i * 13) % 5) as f64 * 0.21);
        }
        let train = TrainingSet::new((1..=n as u64).collect(), x, y.clone(), 2).unwrap();
        let m = fit_ols(&train, true).unwrap();
        let resid: Vec<f64> = (0..n)
            .map(|i| y[i] - m.predict(train.x_row(i)).unwrap())
            .collect();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        // intercept column
        let dot0: f64 = resid.iter().sum();
        assert!(dot0.abs() < 1e-6 * y_norm);
        for j in 0..2 {
            let dot: f64 = (0..n).map(|i| train.x_row(i)[j] * resid[i]).sum();
            assert!(dot.abs() < 1e-6 * y_norm, "column {j}: {dot}");
        }
    }
}
