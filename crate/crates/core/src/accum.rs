//! Compensated summation.
//!
//! All frame- and sample-level sums in this crate go through [`KahanSum`]
//! (Neumaier's variant), so totals are stable to about 1e-12 relative even
//! when magnitudes vary wildly, and aggregation results do not depend on
//! how work was chunked as long as the element order is fixed.

/// Running compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator of values.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Arithmetic mean with compensated summation. Returns 0 for empty input.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    kahan_sum(values.iter().copied()) / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_ill_conditioned_sequence() {
        // 1 + 1e16 - 1e16 loses the 1 under naive summation.
        let v = [1.0, 1e16, -1e16];
        assert_eq!(kahan_sum(v.iter().copied()), 1.0);
    }

    #[test]
    fn matches_naive_sum_on_small_input() {
        let v = [1.5, 2.25, -0.75];
        assert_eq!(kahan_sum(v.iter().copied()), 3.0);
        assert_eq!(mean(&v), 1.0);
    }

    #[test]
    fn empty_mean_is_zero() {
        assert_eq!(mean(&[]), 0.0);
    }
}
