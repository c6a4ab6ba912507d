//! Small statistical toolkit for the Monte Carlo checks: running mean and
//! standard error, medians, log–log slopes and two goodness-of-fit tests.

use crate::sum::NeumaierSum;

/// Welford's running mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanSe {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanSe {
    pub fn new() -> Self {
        MeanSe::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al.'s pairwise combination.
    pub fn merge(&mut self, other: &MeanSe) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / n as f64;
        self.mean += delta * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// `(mean - target) / se`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.std_error()
    }
}

impl FromIterator<f64> for MeanSe {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanSe::new();
        iter.into_iter().for_each(|x| acc.push(x));
        acc
    }
}

/// Median of the finite values; `NaN` when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least-squares slope of `y` on `x`. `None` with fewer than two
/// points or a constant `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().copied().sum::<NeumaierSum>().value() / n as f64;
    let my = y[..n].iter().copied().sum::<NeumaierSum>().value() / n as f64;
    let sxy: NeumaierSum = (0..n).map(|i| (x[i] - mx) * (y[i] - my)).sum();
    let sxx: NeumaierSum = (0..n).map(|i| (x[i] - mx).powi(2)).sum();
    (sxx.value() > 0.0).then(|| sxy.value() / sxx.value())
}

/// Result of a goodness-of-fit test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test of `sample` against `cdf`, with
/// Stephens' finite-sample correction of the asymptotic distribution.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> TestResult {
    let mut u: Vec<f64> = sample.iter().map(|&x| cdf(x)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &ui)| {
            let i = i as f64;
            ((i + 1.0) / n - ui).max(ui - i / n)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    TestResult { statistic: d, p_value: kolmogorov_survival(lambda) }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = f64::from(j);
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u32 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Anderson–Darling test that `u` is uniform on `(0, 1)`. Apply the
/// hypothesized CDF first. The p-value uses Marsaglia and Marsaglia's
/// approximation of the limiting distribution, accurate for `n` in the
/// hundreds and above.
pub fn anderson_darling_uniform(u: &[f64]) -> TestResult {
    let mut u: Vec<f64> = u.iter().map(|x| x.clamp(1e-300, 1.0 - 1e-16)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len();
    let nf = n as f64;
    let s: NeumaierSum = (0..n)
        .map(|i| (2.0 * i as f64 + 1.0) * (u[i].ln() + (1.0 - u[n - 1 - i]).ln()))
        .sum();
    let a2 = -nf - s.value() / nf;
    TestResult { statistic: a2, p_value: 1.0 - adinf(a2) }
}

/// Limiting CDF of the Anderson–Darling statistic.
fn adinf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}
