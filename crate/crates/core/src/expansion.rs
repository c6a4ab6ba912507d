//! Asymptotic expansions of the additive measure in terms of the Hermite
//! martingale limits `M_∞^{(k,θ)}`.
//!
//! Half-spaces:
//!
//! `μ_s^θ((-∞, b√s]) ≈ Σ_{ℓ=0}^m (-1)^ℓ s^{-ℓ/2} Σ_{|k|=ℓ} D^kΦ_d(b)/k! · M_∞^{(k,θ)}`.
//!
//! Boxes, with `1 = (1, …, 1)`:
//!
//! `s^{d/2} μ_s^θ((a, b]) ≈ Σ_{ℓ=0}^m s^{-ℓ/2} Σ_{j=0}^ℓ (-1)^j Σ_{|k|=j} M_∞^{(k,θ)}/k!
//!     Σ_{|i|=ℓ-j} D^{k+i+1}Φ_d(0)/i! · ∫_{[a,b]} z^i dz`.
//!
//! The limits are estimated by the martingale values at the last snapshot
//! of the realization being studied.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::check_dim;
use crate::measures::{additive_box, additive_cdf, check_box, hermite_martingales, Scaling};
use crate::multi_index::MultiIndex;
use crate::sim::Trajectory;
use crate::specfun::cdf_derivative_d;
use crate::stats::ols_slope;
use crate::sum::NeumaierSum;
use crate::{Error, Result};

/// Estimates of `M_∞^{(k,θ)}` for every `|k| ≤ max_order`, all taken at
/// time `horizon`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitEstimates {
    pub dim: usize,
    pub max_order: u32,
    pub horizon: f64,
    pub values: BTreeMap<MultiIndex, f64>,
}

impl LimitEstimates {
    /// `M^{(0)} = w` and every other limit zero. With `w = 1` the
    /// expansions reduce to Taylor expansions of the Gaussian itself.
    pub fn degenerate(dim: usize, max_order: u32, w: f64) -> Self {
        let values = MultiIndex::up_to(dim, max_order)
            .into_iter()
            .map(|k| {
                let v = if k.is_zero() { w } else { 0.0 };
                (k, v)
            })
            .collect();
        LimitEstimates { dim, max_order, horizon: f64::INFINITY, values }
    }

    pub fn get(&self, k: &MultiIndex) -> Result<f64> {
        self.values.get(k).copied().ok_or_else(|| Error::MissingLimit(k.clone()))
    }

    /// The estimate of `W_∞(θ)`.
    pub fn w(&self) -> f64 {
        self.values.get(&MultiIndex::zeros(self.dim)).copied().unwrap_or(f64::NAN)
    }
}

/// `M_T^{(k,θ)}` at the last snapshot `T` for every `|k| ≤ max_order`.
pub fn estimate_limits(trajectory: &Trajectory, max_order: u32) -> Result<LimitEstimates> {
    let last = trajectory
        .snapshots
        .last()
        .ok_or_else(|| Error::DegenerateGrid("trajectory has no snapshots".into()))?;
    let d = trajectory.params.d;
    let ks = MultiIndex::up_to(d, max_order);
    let values = hermite_martingales(last, &trajectory.params, &ks)?;
    Ok(LimitEstimates { dim: d, max_order, horizon: last.time, values: ks.into_iter().zip(values).collect() })
}

fn check_s(s: f64) -> Result<()> {
    if s > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("s", format!("must be positive, got {s}")))
    }
}

/// The order-`ℓ` term `(-1)^ℓ s^{-ℓ/2} Σ_{|k|=ℓ} D^kΦ_d(b)/k! · M^{(k)}` of the
/// half-space expansion.
pub fn thm1_term(ell: u32, s: f64, b: &[f64], limits: &LimitEstimates) -> Result<f64> {
    check_s(s)?;
    check_dim(limits.dim, b.len())?;
    let mut inner = NeumaierSum::new();
    for k in MultiIndex::with_order(b.len(), ell) {
        let m = limits.get(&k)?;
        inner += cdf_derivative_d(&k, b)? / k.factorial() * m;
    }
    let sign = if ell % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * s.powf(-0.5 * f64::from(ell)) * inner.value())
}

/// Half-space partial sum through order `m`.
///
/// ```
/// use bbm_core::expansion::{thm1_partial_sum, LimitEstimates};
/// use bbm_core::specfun::std_normal_cdf;
/// let limits = LimitEstimates::degenerate(1, 2, 0.8);
/// let value = thm1_partial_sum(2, 9.0, &[0.5], &limits).unwrap();
/// assert!((value - 0.8 * std_normal_cdf(0.5)).abs() < 1e-15);
/// ```
pub fn thm1_partial_sum(m: u32, s: f64, b: &[f64], limits: &LimitEstimates) -> Result<f64> {
    let mut total = NeumaierSum::new();
    for ell in 0..=m {
        total += thm1_term(ell, s, b, limits)?;
    }
    Ok(total.value())
}

/// `∫_{[a,b]} Π_j z_j^{i_j} dz = Π_j (b_j^{i_j+1} - a_j^{i_j+1}) / (i_j + 1)`.
pub fn moment_integral(a: &[f64], b: &[f64], i: &MultiIndex) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    check_dim(a.len(), i.dim())?;
    check_box(a, b)?;
    Ok(a.iter()
        .zip(b)
        .zip(i.entries())
        .map(|((&a, &b), &ij)| {
            let p = ij as i32 + 1;
            (b.powi(p) - a.powi(p)) / f64::from(p)
        })
        .product())
}

/// One summand `(-1)^j M^{(k)}/k! · D^{k+i+1}Φ_d(0)/i! · ∫ z^i` of the
/// order-`ℓ` box term, without the `s^{-ℓ/2}` factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Thm2Summand {
    pub k: MultiIndex,
    pub i: MultiIndex,
    pub value: f64,
}

/// Every summand of the order-`ℓ` box term, in the order
/// `j = 0..=ℓ`, then `k`, then `i` lexicographically.
pub fn thm2_summands(ell: u32, a: &[f64], b: &[f64], limits: &LimitEstimates) -> Result<Vec<Thm2Summand>> {
    let d = a.len();
    check_dim(limits.dim, d)?;
    check_dim(d, b.len())?;
    check_box(a, b)?;
    let origin = vec![0.0; d];
    let ones = MultiIndex::ones(d);
    let mut out = Vec::new();
    for j in 0..=ell {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        for k in MultiIndex::with_order(d, j) {
            let m = limits.get(&k)?;
            for i in MultiIndex::with_order(d, ell - j) {
                let derivative = cdf_derivative_d(&k.add(&i)?.add(&ones)?, &origin)?;
                let value = sign * m / k.factorial() * derivative / i.factorial() * moment_integral(a, b, &i)?;
                out.push(Thm2Summand { k: k.clone(), i, value });
            }
        }
    }
    Ok(out)
}

/// The order-`ℓ` box term including `s^{-ℓ/2}`.
pub fn thm2_term(ell: u32, s: f64, a: &[f64], b: &[f64], limits: &LimitEstimates) -> Result<f64> {
    check_s(s)?;
    let sum: NeumaierSum = thm2_summands(ell, a, b, limits)?.iter().map(|t| t.value).sum();
    Ok(s.powf(-0.5 * f64::from(ell)) * sum.value())
}

/// Box partial sum through order `m`, approximating `s^{d/2} μ_s^θ((a, b])`.
pub fn thm2_partial_sum(m: u32, s: f64, a: &[f64], b: &[f64], limits: &LimitEstimates) -> Result<f64> {
    let mut total = NeumaierSum::new();
    for ell in 0..=m {
        total += thm2_term(ell, s, a, b, limits)?;
    }
    Ok(total.value())
}

/// The set whose additive measure is expanded.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// `(-∞, b√s]`.
    HalfSpace { b: Vec<f64> },
    /// `(a, b]`, measured as `s^{d/2} μ_s^θ((a, b])`.
    Box { a: Vec<f64>, b: Vec<f64> },
}

/// Residuals `r_ℓ(s) = measured(s) - partial_sum(ℓ, s)` on one realization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub order: u32,
    pub target: Target,
    pub seed: u64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub measured: Vec<f64>,
    /// `partial_sums[i][ℓ]` at `times[i]`.
    pub partial_sums: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    /// OLS slope of `log|r_ℓ|` against `log s`, per `ℓ`; `None` when fewer
    /// than two residuals are nonzero.
    pub slopes: Vec<Option<f64>>,
    pub limits: Vec<(String, f64)>,
}

impl ExpansionReport {
    pub fn residual(&self, time_index: usize, ell: u32) -> f64 {
        self.residuals[time_index][ell as usize]
    }

    /// Writes `s,ell,measured,partial_sum,residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,ell,measured,partial_sum,residual")?;
        for (i, s) in self.times.iter().enumerate() {
            for ell in 0..=self.order as usize {
                writeln!(
                    w,
                    "{s},{ell},{:.16e},{:.16e},{:.16e}",
                    self.measured[i], self.partial_sums[i][ell], self.residuals[i][ell]
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Measures the target at every snapshot, estimates the limits at the last
/// one and tabulates residuals of the partial sums of orders `0..=m`.
pub fn residual_report(trajectory: &Trajectory, m: u32, target: &Target) -> Result<ExpansionReport> {
    let params = &trajectory.params;
    params.check_admissible()?;
    let times = trajectory.times();
    if times.len() < 4 {
        return Err(Error::DegenerateGrid(format!("need at least 4 snapshot times, got {}", times.len())));
    }
    let limits = estimate_limits(trajectory, m)?;
    let d = params.d;
    let mut measured = Vec::with_capacity(times.len());
    let mut partial_sums = Vec::with_capacity(times.len());
    for snap in &trajectory.snapshots {
        let s = snap.time;
        let (value, sums) = match target {
            Target::HalfSpace { b } => {
                let value = additive_cdf(snap, params, b, Scaling::Scaled)?;
                let sums = cumulative((0..=m).map(|ell| thm1_term(ell, s, b, &limits)))?;
                (value, sums)
            }
            Target::Box { a, b } => {
                let value = s.powf(0.5 * d as f64) * additive_box(snap, params, a, b)?;
                let sums = cumulative((0..=m).map(|ell| thm2_term(ell, s, a, b, &limits)))?;
                (value, sums)
            }
        };
        measured.push(value);
        partial_sums.push(sums);
    }
    let residuals: Vec<Vec<f64>> = measured
        .iter()
        .zip(&partial_sums)
        .map(|(v, sums)| sums.iter().map(|p| v - p).collect())
        .collect();
    let log_s: Vec<f64> = times.iter().map(|s| s.ln()).collect();
    let slopes = (0..=m as usize)
        .map(|ell| {
            let (x, y): (Vec<f64>, Vec<f64>) = log_s
                .iter()
                .zip(&residuals)
                .filter(|(_, r)| r[ell] != 0.0 && r[ell].is_finite())
                .map(|(x, r)| (*x, r[ell].abs().ln()))
                .unzip();
            ols_slope(&x, &y)
        })
        .collect();
    Ok(ExpansionReport {
        order: m,
        target: target.clone(),
        seed: trajectory.seed,
        horizon: limits.horizon,
        times,
        measured,
        partial_sums,
        residuals,
        slopes,
        limits: limits.values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    })
}

fn cumulative(terms: impl Iterator<Item = Result<f64>>) -> Result<Vec<f64>> {
    let mut acc = NeumaierSum::new();
    terms
        .map(|t| {
            acc += t?;
            Ok(acc.value())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{cdf_d, std_normal_cdf, std_normal_pdf, FRAC_1_SQRT_2PI};

    fn limits_1d(m0: f64, m1: f64) -> LimitEstimates {
        let mut l = LimitEstimates::degenerate(1, 1, m0);
        l.values.insert(MultiIndex::new(vec![1]), m1);
        l
    }

    #[test]
    fn first_order_half_space_by_hand() {
        let l = limits_1d(1.3, -0.4);
        let (s, b) = (4.0, 0.6);
        let expected = std_normal_cdf(b) * 1.3 - 0.5 * std_normal_pdf(b) * -0.4;
        assert!((thm1_partial_sum(1, s, &[b], &l).unwrap() - expected).abs() < 1e-15);
        assert_eq!(thm1_partial_sum(0, s, &[b], &l).unwrap(), std_normal_cdf(b) * 1.3);
    }

    #[test]
    fn far_threshold_keeps_only_the_leading_limit() {
        let mut l = LimitEstimates::degenerate(2, 3, 0.9);
        for (i, v) in l.values.values_mut().enumerate() {
            *v += i as f64;
        }
        let w = l.w();
        assert_eq!(thm1_partial_sum(3, 5.0, &[1e9, 1e9], &l).unwrap(), w);
    }

    #[test]
    fn missing_limits_are_reported() {
        let l = LimitEstimates::degenerate(1, 1, 1.0);
        assert!(matches!(thm1_partial_sum(2, 1.0, &[0.0], &l), Err(Error::MissingLimit(_))));
        assert!(matches!(thm2_partial_sum(2, 1.0, &[0.0], &[1.0], &l), Err(Error::MissingLimit(_))));
    }

    #[test]
    fn moment_integral_examples() {
        assert_eq!(moment_integral(&[0.0], &[1.0], &MultiIndex::new(vec![0])).unwrap(), 1.0);
        assert!((moment_integral(&[0.0], &[2.0], &MultiIndex::new(vec![2])).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(moment_integral(&[-1.0, -1.0], &[1.0, 1.0], &MultiIndex::new(vec![1, 0])).unwrap(), 0.0);
        assert!(moment_integral(&[1.0], &[1.0], &MultiIndex::new(vec![0])).is_err());
    }

    #[test]
    fn leading_box_term() {
        let l = LimitEstimates::degenerate(2, 0, 1.7);
        let v = thm2_partial_sum(0, 3.0, &[-1.0, 0.0], &[0.5, 2.0], &l).unwrap();
        let expected = FRAC_1_SQRT_2PI.powi(2) * 1.5 * 2.0 * 1.7;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn symmetric_box_has_no_first_order_term() {
        let l = limits_1d(1.1, 0.6);
        let summands = thm2_summands(1, &[-0.8], &[0.8], &l).unwrap();
        assert_eq!(summands.len(), 2);
        assert!(summands.iter().all(|t| t.value == 0.0));
    }

    #[test]
    fn deterministic_half_space_expansion_converges_to_gaussian_cdf() {
        let l = LimitEstimates::degenerate(2, 4, 1.0);
        for b in [[-1.0, 0.5], [0.0, 0.0], [2.0, -0.3]] {
            let v = thm1_partial_sum(4, 50.0, &b, &l).unwrap();
            assert!((v - cdf_d(&b)).abs() < 1e-15);
        }
    }
}
