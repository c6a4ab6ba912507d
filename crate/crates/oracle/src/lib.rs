//! Reference computations for checking `bbm-core`.
//!
//! Everything here is computed by a route that does not share code with the
//! library under test: Hermite polynomials come from their explicit finite
//! sums, Gaussian derivatives from finite differences of the distribution
//! function evaluated in double-double arithmetic, and the Mehler-type series
//! are compared against their closed-form left-hand sides.

pub mod dd;

pub use dd::Dd;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `H_k(x)` from the explicit sum `Σ_j k!(-1)^j / (2^j j! (k-2j)!) x^(k-2j)`.
pub fn hermite_sum(k: u32, x: f64) -> f64 {
    heat_poly_sum(k, x, 1.0)
}

/// `t^(k/2) H_k(x/√t)` written as the polynomial `Σ_j c_j x^(k-2j) t^j`.
pub fn heat_poly_sum(k: u32, x: f64, t: f64) -> f64 {
    let kf = factorial(k);
    (0..=k / 2)
        .map(|j| {
            let c = kf / (2f64.powi(j as i32) * factorial(j) * factorial(k - 2 * j));
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * c * x.powi((k - 2 * j) as i32) * t.powi(j as i32)
        })
        .sum()
}

/// `Σ_j |c_j x^(k-2j) t^j|`, the natural scale for rounding errors in
/// `heat_poly_sum`.
pub fn heat_poly_sum_abs(k: u32, x: f64, t: f64) -> f64 {
    let kf = factorial(k);
    (0..=k / 2)
        .map(|j| {
            let c = kf / (2f64.powi(j as i32) * factorial(j) * factorial(k - 2 * j));
            c * x.abs().powi((k - 2 * j) as i32) * t.powi(j as i32)
        })
        .sum()
}

pub fn hermite_sum_abs(k: u32, x: f64) -> f64 {
    heat_poly_sum_abs(k, x, 1.0)
}

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Left side of the Mehler CDF identity, `Φ((b - ρx)/√(1-ρ²))`.
pub fn mehler_cdf_direct(rho: f64, b: f64, x: f64) -> f64 {
    normal_cdf((b - rho * x) / (1.0 - rho * rho).sqrt())
}

/// Left side of the Mehler density identity,
/// `φ((b - ρx)/√(1-ρ²)) / √(1-ρ²)`.
pub fn mehler_pdf_direct(rho: f64, b: f64, x: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    normal_pdf((b - rho * x) / s) / s
}

/// Standard normal CDF in double-double precision.
///
/// Uses the Taylor series `Φ(x) = 1/2 + φ(0) Σ_n (-1)^n x^(2n+1) / (2^n n! (2n+1))`.
/// The series alternates, so for `|x| ≤ 4` roughly three of the ~32 available
/// digits are lost to cancellation.
pub fn normal_cdf_dd(x: Dd) -> Dd {
    let half_x2 = (x * x).div_f64(2.0);
    // term_n = (-1)^n x^(2n+1) / (2^n n!)
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term = -(term * half_x2).div_f64(n);
        let contribution = term.div_f64(2.0 * n + 1.0);
        sum = sum + contribution;
        if contribution.hi.abs() <= 1e-34 * sum.hi.abs() && n > 2.0 * half_x2.hi {
            break;
        }
    }
    Dd::from(0.5) + Dd::FRAC_1_SQRT_2PI * sum
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Central finite difference of order `k` of `Φ` at `b` with step `h`,
/// `δ_h^k Φ(b) / h^k`, accumulated in double-double.
pub fn cdf_central_difference(k: u32, b: f64, h: f64) -> f64 {
    let h_dd = Dd::from(h);
    let mut acc = Dd::from(0.0);
    for i in 0..=k {
        // offset (k/2 - i)·h, exact in double-double
        let offset = h_dd.mul_f64(f64::from(k) / 2.0 - f64::from(i));
        let value = normal_cdf_dd(Dd::from(b) + offset);
        let c = binomial(k, i) * if i % 2 == 0 { 1.0 } else { -1.0 };
        acc = acc + value.mul_f64(c);
    }
    let mut scale = Dd::from(1.0);
    for _ in 0..k {
        scale = scale * h_dd;
    }
    (acc / scale).hi
}

/// `d^k Φ / db^k` by central differences at steps `h, h/2, h/4`, combined
/// with two levels of Richardson extrapolation (error `O(h^6)`).
pub fn cdf_derivative_fd(k: u32, b: f64, h: f64) -> f64 {
    let d1 = cdf_central_difference(k, b, h);
    let d2 = cdf_central_difference(k, b, h / 2.0);
    let d4 = cdf_central_difference(k, b, h / 4.0);
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

/// Number of multi-indices of dimension `d` with entries summing to `order`,
/// `C(order + d - 1, d - 1)`, by brute-force enumeration.
pub fn count_multi_indices(d: u32, order: u32) -> usize {
    fn go(remaining_dims: u32, remaining: u32) -> usize {
        if remaining_dims == 1 {
            return 1;
        }
        (0..=remaining).map(|j| go(remaining_dims - 1, remaining - j)).sum()
    }
    go(d, order)
}
