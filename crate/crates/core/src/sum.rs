//! Compensated summation.
//!
//! The weights `e^{-θ·x}` entering the additive measures span many orders of
//! magnitude once `‖θ‖` approaches the admissible boundary, and the expansion
//! residuals being measured are small differences of such sums, so every
//! reduction in this crate goes through [`NeumaierSum`].

use std::iter::Sum;
use std::ops::{Add, AddAssign};

/// Kahan summation with Neumaier's fix for addends larger than the running
/// total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub const fn new() -> Self {
        NeumaierSum { sum: 0.0, compensation: 0.0 }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl From<f64> for NeumaierSum {
    fn from(value: f64) -> Self {
        NeumaierSum { sum: value, compensation: 0.0 }
    }
}

impl AddAssign<f64> for NeumaierSum {
    #[inline]
    fn add_assign(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }
}

impl Add<f64> for NeumaierSum {
    type Output = NeumaierSum;

    fn add(mut self, x: f64) -> NeumaierSum {
        self += x;
        self
    }
}

impl AddAssign for NeumaierSum {
    fn add_assign(&mut self, other: NeumaierSum) {
        *self += other.sum;
        *self += other.compensation;
    }
}

impl Sum<f64> for NeumaierSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        iter.fold(NeumaierSum::new(), |acc, x| acc + x)
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(values: &[f64]) -> f64 {
    values.iter().copied().sum::<NeumaierSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancels_large_terms() {
        let s = NeumaierSum::new() + 1e200 + 0.1 + 0.2 + 0.3 + (-1e200);
        assert!((s.value() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn beats_naive_summation() {
        let values: Vec<f64> = std::iter::once(1.0).chain(std::iter::repeat(1e-16).take(10_000)).collect();
        let naive: f64 = values.iter().sum();
        assert_eq!(naive, 1.0);
        assert!((compensated_sum(&values) - (1.0 + 1e-12)).abs() < 1e-20);
    }

    #[test]
    fn merging_partials() {
        let mut a = NeumaierSum::from(1e16);
        a += 1.0;
        let mut b = NeumaierSum::from(-1e16);
        b += 1.0;
        a += b;
        assert_eq!(a.value(), 2.0);
    }
}
