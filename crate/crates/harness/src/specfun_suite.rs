//! The deterministic special-function suite behind `bbm verify-specfun`.
//!
//! Every check compares the library against an independent evaluation from
//! `bbm-oracle` and reports the worst error over its grid.

use bbm_core::specfun::{
    cdf_derivative, hermite, hermite_bound, heat_poly, mehler_cdf, mehler_pdf, mehler_pdf_tail_bound,
    std_normal_cdf,
};
use bbm_core::MultiIndex;
use bbm_oracle as oracle;

use crate::manifest::Check;

/// Truncation order of the Mehler series in the suite.
pub const MEHLER_TERMS: usize = 60;

pub const MEHLER_RHOS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Allowance for floating-point rounding when comparing with a tail bound
/// that can be far below machine precision.
pub const ROUNDING: f64 = 1e-14;

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> + Clone {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

fn worst(values: impl Iterator<Item = f64>) -> f64 {
    // NaN must surface as a failure, so it wins over every finite value
    values.fold(0.0, |acc: f64, v| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v) })
}

fn mehler_grid() -> impl Iterator<Item = (f64, f64, f64)> {
    MEHLER_RHOS
        .into_iter()
        .flat_map(|rho| grid(-3.0, 3.0, 0.25).flat_map(move |b| grid(-3.0, 3.0, 0.25).map(move |x| (rho, b, x))))
}

pub fn hermite_recurrence() -> Check {
    let err = worst((0..=25).flat_map(|k| {
        grid(-4.0, 4.0, 0.125).map(move |x| {
            (hermite(k, x) - oracle::hermite_sum(k, x)).abs() / oracle::hermite_sum_abs(k, x).max(f64::MIN_POSITIVE)
        })
    }));
    Check::at_most("hermite_recurrence_vs_sum", err, 1e-10)
}

/// Largest `|H_k(x)| / (2√(k!) e^{x²/4})`; the bound holds when this is at
/// most one.
pub fn hermite_bound_ratio() -> Check {
    let ratio = worst((1..=20).flat_map(|k| grid(-6.0, 6.0, 0.01).map(move |x| hermite(k, x).abs() / hermite_bound(k, x))));
    Check::at_most("hermite_bound_ratio", ratio, 1.0)
}

pub fn heat_poly_scaling() -> Check {
    let err = worst((0..=20).flat_map(|k| {
        [0.01, 1.0, 100.0].into_iter().flat_map(move |t| {
            grid(-3.0, 3.0, 0.25).map(move |x| {
                let heat = heat_poly(k, x, t).unwrap_or(f64::NAN);
                let scaled = t.powf(0.5 * f64::from(k)) * hermite(k, x / t.sqrt());
                (heat - scaled).abs() / oracle::heat_poly_sum_abs(k, x, t).max(f64::MIN_POSITIVE)
            })
        })
    }));
    Check::at_most("heat_poly_vs_scaled_hermite", err, 1e-10)
}

pub fn heat_poly_at_origin_time() -> Check {
    let err = worst((0..=20).flat_map(|k| {
        grid(-3.0, 3.0, 0.25).map(move |x| {
            let power = x.powi(k as i32);
            (heat_poly(k, x, 0.0).unwrap_or(f64::NAN) - power).abs() / power.abs().max(1.0)
        })
    }));
    Check::at_most("heat_poly_at_t0_is_power", err, 1e-14)
}

/// `∂_t h + ½ ∂_xx h` by fourth-order central stencils, relative to the
/// absolute size of the polynomial's terms.
pub fn heat_poly_harmonic() -> Check {
    let h = 1e-2;
    let err = worst((0..=8).flat_map(|k| {
        [0.5, 1.0, 2.0].into_iter().flat_map(move |t| {
            grid(-2.0, 2.0, 0.25).map(move |x| {
                let f = |x: f64, t: f64| heat_poly(k, x, t).unwrap_or(f64::NAN);
                let dt = (-f(x, t + 2.0 * h) + 8.0 * f(x, t + h) - 8.0 * f(x, t - h) + f(x, t - 2.0 * h)) / (12.0 * h);
                let dxx = (-f(x + 2.0 * h, t) + 16.0 * f(x + h, t) - 30.0 * f(x, t) + 16.0 * f(x - h, t)
                    - f(x - 2.0 * h, t))
                    / (12.0 * h * h);
                (dt + 0.5 * dxx).abs() / (1.0 + oracle::heat_poly_sum_abs(k, x, t))
            })
        })
    }));
    Check::at_most("heat_poly_space_time_harmonic", err, 1e-6)
}

pub fn normal_cdf_accuracy() -> Check {
    let err = worst(grid(-8.0, 8.0, 0.05).map(|x| (std_normal_cdf(x) - oracle::normal_cdf_dd(oracle::Dd::from(x)).hi).abs()));
    Check::at_most("normal_cdf_abs_error", err, 1e-14)
}

/// Relative error against Richardson-extrapolated differences, with
/// `max(|exact|, 1e-3)` in the denominator so that zeros of `H_{k-1}` do
/// not turn rounding noise into a relative error.
pub fn cdf_derivative_vs_differences() -> Check {
    let err = worst((1..=6).flat_map(|k| {
        grid(-3.0, 3.0, 0.125).map(move |b| {
            let exact = cdf_derivative(k, b).unwrap_or(f64::NAN);
            (exact - oracle::cdf_derivative_fd(k, b, 1e-2)).abs() / exact.abs().max(1e-3)
        })
    }));
    Check::at_most("cdf_derivative_vs_finite_differences", err, 1e-6)
}

/// Largest excess of the Mehler CDF truncation error over its tail bound.
pub fn mehler_cdf_within_bound() -> Check {
    let excess = worst(mehler_grid().map(|(rho, b, x)| match mehler_cdf(rho, b, x, MEHLER_TERMS) {
        Ok(m) => (m.value - oracle::mehler_cdf_direct(rho, b, x)).abs() - m.tail_bound,
        Err(_) => f64::NAN,
    }));
    Check::at_most("mehler_cdf_error_minus_tail_bound", excess, ROUNDING)
}

/// Largest excess of the Mehler density truncation error over its tail
/// bound.
pub fn mehler_pdf_within_bound() -> Check {
    let excess = worst(mehler_grid().map(|(rho, b, x)| {
        let value = mehler_pdf(rho, b, x, MEHLER_TERMS).unwrap_or(f64::NAN);
        let bound = mehler_pdf_tail_bound(rho, b, x, MEHLER_TERMS).unwrap_or(f64::NAN);
        (value - oracle::mehler_pdf_direct(rho, b, x)).abs() - bound
    }));
    Check::at_most("mehler_pdf_error_minus_tail_bound", excess, 1e-8)
}

pub fn multi_index_counts() -> Check {
    let mismatches = (1..=4usize)
        .flat_map(|d| (0..=8u32).map(move |l| (d, l)))
        .filter(|&(d, l)| MultiIndex::with_order(d, l).len() != oracle::count_multi_indices(d as u32, l))
        .count();
    Check::at_most("multi_index_counts", mismatches as f64, 0.0)
}

/// The invariant suite run by `bbm verify-specfun`.
pub fn specfun_checks() -> Vec<Check> {
    vec![
        hermite_recurrence(),
        hermite_bound_ratio(),
        heat_poly_scaling(),
        heat_poly_at_origin_time(),
        heat_poly_harmonic(),
        normal_cdf_accuracy(),
        cdf_derivative_vs_differences(),
        mehler_cdf_within_bound(),
        mehler_pdf_within_bound(),
        multi_index_counts(),
    ]
}

/// Worst absolute distance of the truncated Mehler series from the direct
/// closed form, per `ρ`, for the CDF and the density.
///
/// These are stricter than the tail-bound checks: at `J = 60` the series
/// for `ρ` near one has not converged to `1e-8`, so callers should expect
/// failures at the largest `ρ`.
pub fn mehler_direct_checks(tolerance: f64) -> Vec<Check> {
    let mut out = Vec::new();
    for rho in MEHLER_RHOS {
        let points = || grid(-3.0, 3.0, 0.25).flat_map(|b| grid(-3.0, 3.0, 0.25).map(move |x| (b, x)));
        let cdf = worst(points().map(|(b, x)| {
            let v = mehler_cdf(rho, b, x, MEHLER_TERMS).map_or(f64::NAN, |m| m.value);
            (v - oracle::mehler_cdf_direct(rho, b, x)).abs()
        }));
        let pdf = worst(points().map(|(b, x)| {
            let v = mehler_pdf(rho, b, x, MEHLER_TERMS).unwrap_or(f64::NAN);
            (v - oracle::mehler_pdf_direct(rho, b, x)).abs()
        }));
        out.push(Check::at_most(format!("mehler_cdf_vs_direct[rho={rho}]"), cdf, tolerance));
        out.push(Check::at_most(format!("mehler_pdf_vs_direct[rho={rho}]"), pdf, tolerance));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_propagates_nan() {
        assert!(worst([1.0, f64::NAN, 2.0].into_iter()).is_nan());
        assert_eq!(worst([1.0, 3.0, 2.0].into_iter()), 3.0);
    }

    #[test]
    fn invariant_suite_passes() {
        for check in specfun_checks() {
            assert!(check.passed, "{check:?}");
        }
    }

    #[test]
    fn direct_comparison_converges_for_small_rho() {
        let checks = mehler_direct_checks(1e-8);
        for c in checks.iter().filter(|c| c.name.contains("rho=0.1]") || c.name.contains("rho=0.5]")) {
            assert!(c.passed, "{c:?}");
        }
    }
}
