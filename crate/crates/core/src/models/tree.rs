//! CART-style regression tree.
//!
//! Splits maximize the reduction in sum of squared deviations; leaves
//! predict the training mean of their region. Split candidates are the
//! midpoints between consecutive distinct sorted values of each tried
//! feature. Features are always evaluated in ascending index order and a
//! candidate replaces the incumbent only on strictly larger gain, so gain
//! ties resolve to the lexicographically smallest (feature, threshold) and
//! tree growth is deterministic even under feature subsampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, TrainingSet};
use crate::accum::KahanSum;

/// Stopping rules for tree growth.
#[derive(Clone, Copy, Debug)]
pub struct TreeParams {
    /// Minimum rows in each child of a split.
    pub min_leaf: usize,
    /// Maximum split depth; `None` grows until other rules stop.
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            min_leaf: 1,
            max_depth: None,
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// A fitted regression tree.
#[derive(Clone, Debug)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    p: usize,
}

impl RegressionTree {
    /// Grow a tree on the full training set, trying every feature at every
    /// node.
    pub fn fit(train: &TrainingSet, params: &TreeParams) -> Result<Self, ModelError> {
        let mut rows: Vec<u32> = (0..train.len() as u32).collect();
        Self::fit_on_rows(train, &mut rows, params, train.dim(), None)
    }

    /// Grow a tree on the given rows (with repetitions allowed, as under
    /// bootstrap), trying `mtry` features per node drawn from `rng`.
    pub(crate) fn fit_on_rows(
        train: &TrainingSet,
        rows: &mut [u32],
        params: &TreeParams,
        mtry: usize,
        rng: Option<ChaCha8Rng>,
    ) -> Result<Self, ModelError> {
        if params.min_leaf == 0 {
            return Err(ModelError::BadParams {
                reason: "min_leaf must be at least 1".into(),
            });
        }
        if mtry == 0 || mtry > train.dim() {
            return Err(ModelError::BadParams {
                reason: format!("mtry {} out of range 1..={}", mtry, train.dim()),
            });
        }
        if rows.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let mut grower = Grower {
            train,
            params: *params,
            mtry,
            rng,
            nodes: Vec::new(),
            scratch: Vec::new(),
        };
        grower.grow(rows, 0);
        Ok(Self {
            nodes: grower.nodes,
            p: train.dim(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.p);
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { value } => serde_json::json!({ "leaf": value }),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => serde_json::json!({
                    "feature": feature,
                    "threshold": threshold,
                    "left": left,
                    "right": right,
                }),
            })
            .collect();
        serde_json::json!({ "nodes": nodes })
    }
}

struct Grower<'a> {
    train: &'a TrainingSet,
    params: TreeParams,
    mtry: usize,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
    scratch: Vec<u32>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [u32], depth: usize) -> u32 {
        let y = self.train.y();
        let count = rows.len();
        let mut sum = KahanSum::new();
        for &r in rows.iter() {
            sum.add(y[r as usize]);
        }
        let mean = sum.value() / count as f64;

        let me = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { value: mean });

        let zero_variance = rows.iter().all(|&r| y[r as usize] == y[rows[0] as usize]);
        let depth_capped = self.params.max_depth.is_some_and(|cap| depth >= cap);
        if count < 2 * self.params.min_leaf || zero_variance || depth_capped {
            return me;
        }

        let features = self.tried_features();
        let best = self.best_split(rows, &features);
        let Some(best) = best else {
            return me;
        };

        // stable partition by the split predicate
        self.scratch.clear();
        let x_of = |r: u32| self.train.x_row(r as usize)[best.feature];
        self.scratch
            .extend(rows.iter().copied().filter(|&r| x_of(r) <= best.threshold));
        let left_len = self.scratch.len();
        self.scratch
            .extend(rows.iter().copied().filter(|&r| x_of(r) > best.threshold));
        rows.copy_from_slice(&self.scratch);

        let (left_rows, right_rows) = rows.split_at_mut(left_len);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[me as usize] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        me
    }

    /// Feature indices tried at this node, ascending.
    fn tried_features(&mut self) -> Vec<usize> {
        let p = self.train.dim();
        if self.mtry >= p || self.rng.is_none() {
            return (0..p).collect();
        }
        let rng = self.rng.as_mut().expect("subsampling needs an rng");
        let mut all: Vec<usize> = (0..p).collect();
        for i in 0..self.mtry {
            let j = rng.random_range(i..p);
            all.swap(i, j);
        }
        all.truncate(self.mtry);
        all.sort_unstable();
        all
    }

    fn best_split(&self, rows: &[u32], features: &[usize]) -> Option<BestSplit> {
        let y = self.train.y();
        let count = rows.len();
        let min_leaf = self.params.min_leaf;

        // parent SSE via sums of y and y^2
        let (mut total, mut total_sq) = (KahanSum::new(), KahanSum::new());
        for &r in rows {
            let v = y[r as usize];
            total.add(v);
            total_sq.add(v * v);
        }
        let parent_sse = total_sq.value() - total.value() * total.value() / count as f64;

        let mut best: Option<BestSplit> = None;
        let mut order: Vec<u32> = Vec::with_capacity(count);
        for &feature in features {
            order.clear();
            order.extend_from_slice(rows);
            order.sort_unstable_by(|&a, &b| {
                let xa = self.train.x_row(a as usize)[feature];
                let xb = self.train.x_row(b as usize)[feature];
                xa.partial_cmp(&xb).expect("finite feature values")
            });

            let (mut left_sum, mut left_sq) = (KahanSum::new(), KahanSum::new());
            for k in 1..count {
                let prev = order[k - 1] as usize;
                let v = y[prev];
                left_sum.add(v);
                left_sq.add(v * v);

                if k < min_leaf || count - k < min_leaf {
                    continue;
                }
                let a = self.train.x_row(prev)[feature];
                let b = self.train.x_row(order[k] as usize)[feature];
                if a >= b {
                    continue; // not a distinct-value boundary
                }
                let ls = left_sum.value();
                let lq = left_sq.value();
                let rs = total.value() - ls;
                let rq = total_sq.value() - lq;
                let sse_left = lq - ls * ls / k as f64;
                let sse_right = rq - rs * rs / (count - k) as f64;
                let gain = parent_sse - sse_left - sse_right;
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a; // adjacent floats: keep the cut exact
                    }
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(x: Vec<f64>, y: Vec<f64>, p: usize) -> TrainingSet {
        let n = y.len();
        TrainingSet::new((1..=n as u64).collect(), x, y, p).unwrap()
    }

    #[test]
    fn constant_target_yields_single_leaf() {
        let t = train(vec![1.0, 2.0, 3.0, 4.0], vec![7.0; 4], 1);
        let tree = RegressionTree::fit(&t, &TreeParams::default()).unwrap();
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.predict(&[10.0]), 7.0);
    }

    #[test]
    fn step_function_is_learned_exactly() {
        // y jumps from 1 to 5 at x = 2.5
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = vec![1.0, 1.0, 1.0, 5.0, 5.0, 5.0];
        let t = train(xs.clone(), y.clone(), 1);
        let tree = RegressionTree::fit(&t, &TreeParams::default()).unwrap();
        for (x, target) in xs.iter().zip(&y) {
            assert_eq!(tree.predict(&[*x]), *target);
        }
        // first split sits strictly between the two sides of the jump
        let root = tree.to_json()["nodes"][0].clone();
        let thr = root["threshold"].as_f64().unwrap();
        assert!((2.0..3.0).contains(&thr), "threshold {thr}");
    }

    #[test]
    fn min_leaf_equal_to_n_gives_mean_leaf() {
        let t = train(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 6.0], 1);
        let params = TreeParams {
            min_leaf: 4,
            max_depth: None,
        };
        let tree = RegressionTree::fit(&t, &params).unwrap();
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.predict(&[0.0]), 3.0);
    }

    #[test]
    fn depth_cap_limits_growth() {
        let xs: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..16).map(|i| (i * i) as f64).collect();
        let t = train(xs, y, 1);
        let tree = RegressionTree::fit(
            &t,
            &TreeParams {
                min_leaf: 1,
                max_depth: Some(1),
            },
        )
        .unwrap();
        // one split, two leaves
        assert_eq!(tree.node_count(), 3);
    }

    #[test]
    fn predictions_stay_in_training_range() {
        let xs: Vec<f64> = (0..50).map(|i| (i % 13) as f64).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 7) % 23) as f64).collect();
        let t = train(xs, y.clone(), 1);
        let tree = RegressionTree::fit(&t, &TreeParams::default()).unwrap();
        let (lo, hi) = (
            y.iter().cloned().fold(f64::INFINITY, f64::min),
            y.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        for probe in 0..100 {
            let v = tree.predict(&[probe as f64 * 0.31]);
            assert!((lo..=hi).contains(&v));
        }
    }

    #[test]
    fn ties_in_gain_pick_lowest_feature() {
        // x1 and x2 are identical, so every split gain ties; feature 0 wins.
        let x = vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let y = vec![0.0, 0.0, 4.0, 4.0];
        let t = train(x, y, 2);
        let tree = RegressionTree::fit(&t, &TreeParams::default()).unwrap();
        let root = tree.to_json()["nodes"][0].clone();
        assert_eq!(root["feature"].as_u64().unwrap(), 0);
    }
}
