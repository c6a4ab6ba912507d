use bbm_core::specfun::*;
use bbm_core::MultiIndex;
use bbm_oracle as oracle;

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn recurrence_agrees_with_explicit_sum() {
    for k in 0..=25 {
        for x in grid(-4.0, 4.0, 0.25) {
            let sum = oracle::hermite_sum(k, x);
            let rec = hermite(k, x);
            let scale = oracle::hermite_sum_abs(k, x);
            assert!((rec - sum).abs() <= 1e-10 * scale, "k={k} x={x}: {rec} vs {sum}");
        }
    }
}

#[test]
fn table_matches_single_evaluations() {
    let mut table = [0.0; 30];
    hermite_table(1.7, &mut table);
    for (k, v) in table.iter().enumerate() {
        assert_eq!(*v, hermite(k as u32, 1.7));
    }
}

#[test]
fn hermite_bound_holds_on_grid() {
    for k in 1..=20 {
        for x in grid(-6.0, 6.0, 0.05) {
            assert!(hermite(k, x).abs() <= hermite_bound(k, x), "k={k} x={x}");
        }
    }
}

#[test]
fn heat_polynomial_matches_scaled_hermite() {
    for k in 0..=12 {
        for t in [0.01, 1.0, 100.0] {
            for x in grid(-3.0, 3.0, 0.5) {
                let heat = heat_poly(k, x, t).unwrap();
                let scaled = t.powf(0.5 * f64::from(k)) * hermite(k, x / t.sqrt());
                let sum = oracle::heat_poly_sum(k, x, t);
                let scale = oracle::heat_poly_sum_abs(k, x, t);
                assert!((heat - scaled).abs() <= 1e-10 * scale, "k={k} x={x} t={t}");
                assert!((heat - sum).abs() <= 1e-12 * scale, "k={k} x={x} t={t}");
            }
        }
    }
    for k in 0..6 {
        assert_eq!(heat_poly(k, 1.5, 0.0).unwrap(), 1.5f64.powi(k as i32));
    }
    assert!(heat_poly(2, 1.0, -1e-3).is_err());
    assert!(heat_poly(2, 1.0, f64::NAN).is_err());
}

#[test]
fn heat_polynomials_are_space_time_harmonic() {
    // fourth-order central stencils
    let h = 1e-2;
    for k in 0..=8 {
        for t in [0.5, 1.0, 2.0] {
            for x in grid(-2.0, 2.0, 0.5) {
                let f = |x: f64, t: f64| heat_poly(k, x, t).unwrap();
                let dt = (-f(x, t + 2.0 * h) + 8.0 * f(x, t + h) - 8.0 * f(x, t - h) + f(x, t - 2.0 * h)) / (12.0 * h);
                let dxx = (-f(x + 2.0 * h, t) + 16.0 * f(x + h, t) - 30.0 * f(x, t) + 16.0 * f(x - h, t)
                    - f(x - 2.0 * h, t))
                    / (12.0 * h * h);
                let scale = 1.0 + oracle::heat_poly_sum_abs(k, x, t);
                assert!((dt + 0.5 * dxx).abs() < 1e-6 * scale, "k={k} x={x} t={t}");
            }
        }
    }
}

#[test]
fn gaussian_reference_values() {
    assert_eq!(cdf_d(&[0.0, 0.0]), 0.25);
    assert!((std_normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    assert!((std_normal_cdf(1.959_964) - 0.975).abs() < 1e-7);
    for x in grid(-8.0, 8.0, 0.1) {
        let reference = oracle::normal_cdf_dd(oracle::Dd::from(x)).hi;
        assert!((std_normal_cdf(x) - reference).abs() <= 1e-14, "x={x}");
    }
}

#[test]
fn cdf_derivative_matches_richardson_differences() {
    for k in 1..=6 {
        for b in grid(-3.0, 3.0, 0.25) {
            let exact = cdf_derivative(k, b).unwrap();
            let fd = oracle::cdf_derivative_fd(k, b, 1e-2);
            let err = (exact - fd).abs() / exact.abs().max(1e-3);
            assert!(err < 1e-6, "k={k} b={b}: {exact} vs {fd} ({err:e})");
        }
    }
}

#[test]
fn multivariate_derivative_examples() {
    let zero = [0.0, 0.0];
    assert_eq!(cdf_derivative_d(&MultiIndex::zeros(2), &zero).unwrap(), 0.25);
    let v = cdf_derivative_d(&MultiIndex::new(vec![1, 1]), &zero).unwrap();
    assert!((v - 0.159_154_943_091_895_35).abs() < 1e-16);
    assert_eq!(cdf_derivative_d(&MultiIndex::new(vec![2, 0]), &zero).unwrap(), 0.0);
    assert!(cdf_derivative(0, 0.0).is_err());
}

const RHOS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Rounding allowance for comparing against bounds that can be far below
/// machine precision.
const ROUNDING: f64 = 1e-14;

#[test]
fn mehler_cdf_error_within_tail_bound() {
    for rho in RHOS {
        for b in grid(-3.0, 3.0, 0.5) {
            for x in grid(-3.0, 3.0, 0.5) {
                let m = mehler_cdf(rho, b, x, 60).unwrap();
                let direct = oracle::mehler_cdf_direct(rho, b, x);
                let err = (m.value - direct).abs();
                assert!(err <= m.tail_bound + ROUNDING, "ρ={rho} b={b} x={x}: {err:e} > {:e}", m.tail_bound);
            }
        }
    }
}

#[test]
fn mehler_pdf_error_within_tail_bound() {
    for rho in RHOS {
        for b in grid(-3.0, 3.0, 0.5) {
            for x in grid(-3.0, 3.0, 0.5) {
                let v = mehler_pdf(rho, b, x, 60).unwrap();
                let bound = mehler_pdf_tail_bound(rho, b, x, 60).unwrap();
                let err = (v - oracle::mehler_pdf_direct(rho, b, x)).abs();
                assert!(err <= bound + 1e-8, "ρ={rho} b={b} x={x}: {err:e} > {bound:e}");
            }
        }
    }
}

#[test]
fn mehler_pdf_direct_example() {
    let v = mehler_pdf(0.3, 1.0, -1.0, 60).unwrap();
    assert!(rel(v, oracle::mehler_pdf_direct(0.3, 1.0, -1.0)) < 1e-14);
}

#[test]
fn mehler_rejects_rho_outside_unit_interval() {
    for rho in [-0.1, 1.0, 1.5, f64::NAN] {
        assert!(mehler_cdf(rho, 0.0, 0.0, 10).is_err());
        assert!(mehler_pdf(rho, 0.0, 0.0, 10).is_err());
    }
}

#[test]
fn factorials_beyond_exact_range() {
    let exact21: f64 = (1..=21).map(f64::from).product();
    assert!(rel(factorial(21), exact21) < 1e-14);
    assert!(rel(ln_factorial(40), (1..=40).map(f64::from).map(f64::ln).sum()) < 1e-14);
}
