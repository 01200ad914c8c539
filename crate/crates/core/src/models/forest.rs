//! Bagged random forest over CART regression trees.
//!
//! Each tree owns an independent stream derived from `(seed, tree_index)`,
//! so the forest is deterministic for a fixed seed no matter how many
//! threads grow it. Prediction is the plain mean of the tree predictions.

use rayon::prelude::*;

use super::tree::{RegressionTree, TreeParams};
use super::{ModelError, TrainingSet};
use crate::rng::{stream, StreamDomain};
use rand::Rng;

/// Forest hyperparameters. Defaults follow standard regression-forest
/// practice: 100 trees, `mtry = max(1, p/3)`, leaves of at least 5 rows,
/// unbounded depth, bootstrap resampling on.
#[derive(Clone, Copy, Debug)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `max(1, p/3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| (p / 3).max(1))
    }
}

#[derive(Clone, Debug)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(train: &TrainingSet, params: &ForestParams) -> Result<Self, ModelError> {
        let p = train.dim();
        if params.n_trees == 0 {
            return Err(ModelError::BadParams {
                reason: "n_trees must be at least 1".into(),
            });
        }
        if let Some(mtry) = params.mtry {
            if mtry == 0 || mtry > p {
                return Err(ModelError::BadParams {
                    reason: format!("mtry {mtry} out of range 1..={p}"),
                });
            }
        }
        if params.min_leaf == 0 {
            return Err(ModelError::BadParams {
                reason: "min_leaf must be at least 1".into(),
            });
        }

        let mtry = params.resolved_mtry(p);
        let tree_params = TreeParams {
            min_leaf: params.min_leaf,
            max_depth: params.max_depth,
        };
        let n = train.len();
        let trees: Result<Vec<RegressionTree>, ModelError> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(params.seed, StreamDomain::TreeGrowth, t as u64, 0, 0);
                let mut rows: Vec<u32> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n) as u32).collect()
                } else {
                    (0..n as u32).collect()
                };
                RegressionTree::fit_on_rows(train, &mut rows, &tree_params, mtry, Some(rng))
            })
            .collect();
        Ok(Self { trees: trees? })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_trees": self.trees.len(),
            "trees": self.trees.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
        })
    }
}
