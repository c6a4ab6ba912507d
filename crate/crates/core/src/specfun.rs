//! Hermite and heat polynomials, the standard Gaussian distribution and its
//! derivatives, and the Mehler-type Hermite series for a shifted, rescaled
//! Gaussian CDF and density.
//!
//! `H_k` is the probabilists' Hermite polynomial, `H_0 = 1`, `H_1 = x`,
//! `H_{k+1}(x) = x H_k(x) - k H_{k-1}(x)`. Heat polynomials are
//! `h_k(x, t) = t^{k/2} H_k(x/√t)`, taken in their polynomial form so that
//! `h_k(x, 0) = x^k`.

use crate::error::check_dim;
use crate::multi_index::MultiIndex;
use crate::{Error, Result};

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const EXACT_FACTORIALS: [u64; 21] = {
    let mut table = [1u64; 21];
    let mut i = 1;
    while i < 21 {
        table[i] = table[i - 1] * i as u64;
        i += 1;
    }
    table
};

/// `n!`. Exact for `n ≤ 20`, through `ln Γ(n+1)` beyond.
pub fn factorial(n: u32) -> f64 {
    match EXACT_FACTORIALS.get(n as usize) {
        Some(&f) => f as f64,
        None => ln_factorial(n).exp(),
    }
}

pub fn ln_factorial(n: u32) -> f64 {
    match EXACT_FACTORIALS.get(n as usize) {
        Some(&f) => (f as f64).ln(),
        None => libm::lgamma(f64::from(n) + 1.0),
    }
}

/// `H_k(x)` by the three-term recurrence.
///
/// ```
/// use bbm_core::specfun::hermite;
/// assert_eq!(hermite(2, 2.0), 3.0);
/// assert_eq!(hermite(3, 2.0), 2.0);
/// ```
pub fn hermite(k: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x * cur - f64::from(j) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[j] = H_j(x)` for `j < out.len()`.
pub fn hermite_table(x: f64, out: &mut [f64]) {
    heat_poly_table(x, 1.0, out);
}

/// Fills `out[j] = H_j(x) / √(j!)`. The normalized values stay `O(e^{x²/4})`
/// for every order, so high orders do not overflow.
pub fn normalized_hermite_table(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for j in 1..out.len().saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = (x * out[j] - jf.sqrt() * out[j - 1]) / (jf + 1.0).sqrt();
    }
}

/// The majorant `2 √(k!) e^{x²/4}` of `|H_k(x)|`.
pub fn hermite_bound(k: u32, x: f64) -> f64 {
    2.0 * (0.5 * ln_factorial(k) + 0.25 * x * x).exp()
}

/// `h_k(x, t) = t^{k/2} H_k(x/√t)`, with `h_k(x, 0) = x^k`.
///
/// ```
/// use bbm_core::specfun::heat_poly;
/// assert_eq!(heat_poly(2, 3.0, 4.0).unwrap(), 5.0);
/// assert_eq!(heat_poly(2, 0.0, 0.0).unwrap(), 0.0);
/// ```
pub fn heat_poly(k: u32, x: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("heat polynomial needs t >= 0, got {t}")));
    }
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return Ok(prev);
    }
    for j in 1..k {
        let next = x * cur - f64::from(j) * t * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Fills `out[j] = h_j(x, t)` by `h_{j+1} = x h_j - j t h_{j-1}`.
/// The caller guarantees `t ≥ 0`.
#[inline]
pub fn heat_poly_table(x: f64, t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for j in 1..out.len().saturating_sub(1) {
        out[j + 1] = x * out[j] - j as f64 * t * out[j - 1];
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `Φ_d(b) = Π_j Φ(b_j)`.
pub fn cdf_d(b: &[f64]) -> f64 {
    b.iter().map(|&x| std_normal_cdf(x)).product()
}

/// `d^k/db^k Φ(b) = (-1)^{k-1} H_{k-1}(b) φ(b)` for `k ≥ 1`.
pub fn cdf_derivative(k: u32, b: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "derivative order must be at least 1; use std_normal_cdf for k = 0"));
    }
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    Ok(sign * hermite(k - 1, b) * std_normal_pdf(b))
}

/// Mixed partial derivative `D^k Φ_d(b)`, a product of one-dimensional
/// derivatives (or `Φ` itself where `k_j = 0`).
pub fn cdf_derivative_d(k: &MultiIndex, b: &[f64]) -> Result<f64> {
    check_dim(k.dim(), b.len())?;
    Ok(k.entries()
        .iter()
        .zip(b)
        .map(|(&kj, &bj)| match kj {
            0 => std_normal_cdf(bj),
            _ => cdf_derivative(kj, bj).expect("order checked nonzero"),
        })
        .product())
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::invalid("rho", format!("must lie in [0, 1), got {rho}")))
    }
}

/// Truncated Mehler CDF series together with a bound on the discarded tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MehlerCdf {
    pub value: f64,
    pub tail_bound: f64,
}

/// `Φ(b) - φ(b) Σ_{k=1}^{terms} ρ^k/k! H_{k-1}(b) H_k(x)`, the truncation of
/// the Hermite expansion of `Φ((b - ρx)/√(1-ρ²))`.
///
/// Writing each term with normalized Hermite values gives
/// `ρ^k Ĥ_{k-1}(b) Ĥ_k(x) / √k`, and `|Ĥ_j| ≤ 2 e^{x²/4}` bounds the tail by
/// `4 φ(b) e^{(b²+x²)/4} ρ^{J+1} / ((1-ρ) √(J+1))`.
pub fn mehler_cdf(rho: f64, b: f64, x: f64, terms: usize) -> Result<MehlerCdf> {
    check_rho(rho)?;
    let mut hb = vec![0.0; terms.max(1)];
    let mut hx = vec![0.0; terms + 1];
    normalized_hermite_table(b, &mut hb);
    normalized_hermite_table(x, &mut hx);
    let mut series = crate::sum::NeumaierSum::new();
    let mut rho_k = 1.0;
    for k in 1..=terms {
        rho_k *= rho;
        series += rho_k * hb[k - 1] * hx[k] / (k as f64).sqrt();
    }
    let pdf_b = std_normal_pdf(b);
    let j1 = (terms + 1) as f64;
    let tail_bound =
        4.0 * pdf_b * (0.25 * (b * b + x * x)).exp() * rho.powf(j1) / ((1.0 - rho) * j1.sqrt());
    Ok(MehlerCdf { value: std_normal_cdf(b) - pdf_b * series.value(), tail_bound })
}

/// `φ(b) (1 + Σ_{k=1}^{terms} ρ^k/k! H_k(b) H_k(x))`, the truncation of the
/// Hermite expansion of `φ((b - ρx)/√(1-ρ²)) / √(1-ρ²)`.
pub fn mehler_pdf(rho: f64, b: f64, x: f64, terms: usize) -> Result<f64> {
    check_rho(rho)?;
    let mut hb = vec![0.0; terms + 1];
    let mut hx = vec![0.0; terms + 1];
    normalized_hermite_table(b, &mut hb);
    normalized_hermite_table(x, &mut hx);
    let mut series = crate::sum::NeumaierSum::from(1.0);
    let mut rho_k = 1.0;
    for k in 1..=terms {
        rho_k *= rho;
        series += rho_k * hb[k] * hx[k];
    }
    Ok(std_normal_pdf(b) * series.value())
}

/// Bound on the tail discarded by [`mehler_pdf`]:
/// `4 φ(b) e^{(b²+x²)/4} ρ^{J+1} / (1-ρ)`.
pub fn mehler_pdf_tail_bound(rho: f64, b: f64, x: f64, terms: usize) -> Result<f64> {
    check_rho(rho)?;
    Ok(4.0 * std_normal_pdf(b) * (0.25 * (b * b + x * x)).exp() * rho.powf((terms + 1) as f64)
        / (1.0 - rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite(0, 7.3), 1.0);
        assert_eq!(hermite(1, 0.0), 0.0);
        assert_eq!(hermite(2, 2.0), 3.0);
        assert_eq!(hermite(3, 2.0), 2.0);
    }

    #[test]
    fn heat_poly_examples() {
        assert_eq!(heat_poly(2, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(heat_poly(2, 3.0, 4.0).unwrap(), 5.0);
        assert_eq!(heat_poly(3, 2.0, 1.0).unwrap(), 2.0);
        assert_eq!(heat_poly(5, 1.5, 0.0).unwrap(), 1.5f64.powi(5));
        assert!(heat_poly(2, 1.0, -1e-3).is_err());
        assert!(heat_poly(2, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn tables_match_scalar_evaluation() {
        let mut h = [0.0; 12];
        hermite_table(1.3, &mut h);
        let mut hn = [0.0; 12];
        normalized_hermite_table(1.3, &mut hn);
        for (k, (&v, &vn)) in h.iter().zip(&hn).enumerate() {
            assert!(close(v, hermite(k as u32, 1.3), 1e-14));
            assert!(close(vn * factorial(k as u32).sqrt(), v, 1e-13));
        }
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(cdf_d(&[0.0, 0.0]), 0.25);
        assert!(close(std_normal_pdf(0.0), 0.398_942_280_401_432_7, 1e-16));
        assert!((std_normal_cdf(1.959_964) - 0.975).abs() < 1e-7);
        assert!((std_normal_cdf(-40.0)).abs() < 1e-300);
        assert_eq!(std_normal_cdf(40.0), 1.0);
    }

    #[test]
    fn cdf_derivative_examples() {
        assert!(close(cdf_derivative(1, 0.0).unwrap(), FRAC_1_SQRT_2PI, 1e-16));
        assert_eq!(cdf_derivative(2, 0.0).unwrap(), 0.0);
        assert_eq!(cdf_derivative(3, 1.0).unwrap(), 0.0);
        assert!(cdf_derivative(0, 1.0).is_err());
    }

    #[test]
    fn cdf_derivative_d_examples() {
        let zero = [0.0, 0.0];
        assert_eq!(cdf_derivative_d(&MultiIndex::new(vec![0, 0]), &zero).unwrap(), 0.25);
        let v = cdf_derivative_d(&MultiIndex::new(vec![1, 1]), &zero).unwrap();
        assert!(close(v, 1.0 / (2.0 * std::f64::consts::PI), 1e-15));
        assert_eq!(cdf_derivative_d(&MultiIndex::new(vec![2, 0]), &zero).unwrap(), 0.0);
        assert!(matches!(
            cdf_derivative_d(&MultiIndex::new(vec![1]), &zero),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn mehler_examples() {
        let m = mehler_cdf(0.0, 1.7, 5.0, 0).unwrap();
        assert_eq!(m.value, std_normal_cdf(1.7));
        assert_eq!(m.tail_bound, 0.0);
        assert_eq!(mehler_cdf(0.5, 0.0, 0.0, 40).unwrap().value, 0.5);
        let direct = std_normal_cdf(0.5 / 0.75f64.sqrt());
        assert!((direct - 0.718_149).abs() < 1e-6);
        assert!((mehler_cdf(0.5, 1.0, 1.0, 60).unwrap().value - direct).abs() < 1e-15);

        for (b, x) in [(0.3, -2.0), (1.0, 1.0)] {
            assert_eq!(mehler_pdf(0.0, b, x, 7).unwrap(), std_normal_pdf(b));
        }
        let v = mehler_pdf(0.5, 0.0, 0.0, 60).unwrap();
        assert!((v - 0.460_65).abs() < 1e-5);
        assert!(close(v, FRAC_1_SQRT_2PI / 0.75f64.sqrt(), 1e-14));
        let s = (1.0f64 - 0.09).sqrt();
        let lhs = std_normal_pdf((1.0 + 0.3) / s) / s;
        assert!(close(mehler_pdf(0.3, 1.0, -1.0, 60).unwrap(), lhs, 1e-14));
    }

    #[test]
    fn mehler_rejects_bad_rho() {
        for rho in [-0.1, 1.0, 1.5, f64::NAN] {
            assert!(mehler_cdf(rho, 0.0, 0.0, 5).is_err());
            assert!(mehler_pdf(rho, 0.0, 0.0, 5).is_err());
        }
    }

    #[test]
    fn factorial_switches_to_log_space() {
        assert_eq!(factorial(20), 2_432_902_008_176_640_000.0);
        let f21 = factorial(21);
        assert!((f21 / (21.0 * 2_432_902_008_176_640_000.0) - 1.0).abs() < 1e-14);
    }
}
