//! Least-squares fitting via singular value decomposition.
//!
//! The SVD gives the estimated condition number for free, which is how a
//! singular (or numerically singular) design is detected and refused: no
//! silent pseudo-inverse fallback, since inverting tiny singular values
//! amplifies noise into the coefficients.

use nalgebra::{DMatrix, DVector};

use super::{ModelError, TrainingSet};

/// Condition-number threshold above which a fit is declared singular.
pub const SINGULAR_CONDITION_LIMIT: f64 = 1e12;

/// Fitted linear predictor `y = b0 + x' b` (intercept optional).
#[derive(Clone, Debug)]
pub struct LinearModel {
    intercept: f64,
    slopes: Vec<f64>,
    condition: f64,
}

impl LinearModel {
    pub fn fit_ols(train: &TrainingSet, intercept: bool) -> Result<Self, ModelError> {
        Self::fit_weighted(train, None, intercept)
    }

    pub fn fit_wls(
        train: &TrainingSet,
        weights: &[f64],
        intercept: bool,
    ) -> Result<Self, ModelError> {
        if weights.len() != train.len() {
            return Err(ModelError::WeightsLengthMismatch {
                expected: train.len(),
                got: weights.len(),
            });
        }
        for (index, &w) in weights.iter().enumerate() {
            if w.is_nan() || w <= 0.0 || !w.is_finite() {
                return Err(ModelError::NonPositiveWeight { index, value: w });
            }
        }
        Self::fit_weighted(train, Some(weights), intercept)
    }

    fn fit_weighted(
        train: &TrainingSet,
        weights: Option<&[f64]>,
        intercept: bool,
    ) -> Result<Self, ModelError> {
        let n = train.len();
        let p = train.dim();
        let cols = p + usize::from(intercept);
        if n < cols {
            return Err(ModelError::TooFewRows {
                needed: cols,
                cols,
                got: n,
            });
        }

        // Rows scaled by sqrt(w) turn WLS into OLS.
        let design = DMatrix::from_fn(n, cols, |i, j| {
            let s = weights.map(|w| w[i].sqrt()).unwrap_or(1.0);
            if intercept && j == 0 {
                s
            } else {
                let feature = if intercept { j - 1 } else { j };
                s * train.x_row(i)[feature]
            }
        });
        let target = DVector::from_fn(n, |i, _| {
            let s = weights.map(|w| w[i].sqrt()).unwrap_or(1.0);
            s * train.y()[i]
        });

        let svd = design.svd(true, true);
        let (mut smax, mut smin) = (0.0f64, f64::INFINITY);
        for &s in svd.singular_values.iter() {
            smax = smax.max(s);
            smin = smin.min(s);
        }
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if condition.is_nan() || condition > SINGULAR_CONDITION_LIMIT {
            return Err(ModelError::SingularFit {
                condition,
                limit: SINGULAR_CONDITION_LIMIT,
            });
        }
        let beta = svd
            .solve(&target, 0.0)
            .map_err(|_| ModelError::SingularFit {
                condition,
                limit: SINGULAR_CONDITION_LIMIT,
            })?;

        let (b0, slopes) = if intercept {
            (beta[0], beta.as_slice()[1..].to_vec())
        } else {
            (0.0, beta.as_slice().to_vec())
        };
        Ok(Self {
            intercept: b0,
            slopes,
            condition,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.slopes.len());
        let mut acc = self.intercept;
        for (b, v) in self.slopes.iter().zip(x) {
            acc += b * v;
        }
        acc
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Estimated condition number of the (weighted) design matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "intercept": self.intercept,
            "slopes": self.slopes,
            "condition": self.condition,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_of_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x + 3.0).collect();
        let train = TrainingSet::new(vec![1, 2, 3, 4, 5], xs.to_vec(), y, 1).unwrap();
        let m = LinearModel::fit_ols(&train, true).unwrap();
        assert!((m.intercept() - 3.0).abs() < 1e-8);
        assert!((m.slopes()[0] - 2.0).abs() < 1e-8);
        assert!(m.condition() < 100.0);
    }

    #[test]
    fn underdetermined_is_too_few_rows() {
        let train =
            TrainingSet::new(vec![1, 2], vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0], 2).unwrap();
        assert!(matches!(
            LinearModel::fit_ols(&train, true),
            Err(ModelError::TooFewRows { needed: 3, .. })
        ));
    }

    #[test]
    fn all_zero_column_is_singular() {
        let x = vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0];
        let train = TrainingSet::new(vec![1, 2, 3, 4], x, vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert!(matches!(
            LinearModel::fit_ols(&train, true),
            Err(ModelError::SingularFit { .. })
        ));
    }
}
