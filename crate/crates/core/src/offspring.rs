//! Finite-support offspring laws and their size-biased versions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Offspring law `(p_0, …, p_K)`.
///
/// Any probability vector is accepted here, including critical and
/// subcritical ones; supercriticality is a requirement of the martingale
/// machinery and is checked by [`crate::ModelParams::check_admissible`].
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringLaw {
    probabilities: Vec<f64>,
    mean: f64,
    sampler: Sampler,
}

#[derive(Clone, Debug, PartialEq)]
enum Sampler {
    Constant(usize),
    Weighted(WeightedIndex<f64>),
}

impl Sampler {
    fn new(probabilities: &[f64]) -> Self {
        let support: Vec<usize> = (0..probabilities.len()).filter(|&k| probabilities[k] > 0.0).collect();
        if let [k] = support[..] {
            Sampler::Constant(k)
        } else {
            Sampler::Weighted(WeightedIndex::new(probabilities).expect("validated probability vector"))
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Sampler::Constant(k) => *k,
            Sampler::Weighted(w) => w.sample(rng),
        }
    }
}

fn validate(probabilities: &[f64]) -> Result<()> {
    if probabilities.is_empty() {
        return Err(Error::invalid("offspring", "empty probability vector"));
    }
    if let Some((k, p)) = probabilities.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::invalid("offspring", format!("p_{k} = {p} is not a probability")));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::invalid("offspring", format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

impl OffspringLaw {
    /// Law with `P(L = k) = probabilities[k]`.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        validate(&probabilities)?;
        let mean = probabilities.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let sampler = Sampler::new(&probabilities);
        Ok(OffspringLaw { probabilities, mean, sampler })
    }

    /// Law from `(k, p_k)` pairs; unlisted counts get probability zero and
    /// repeated counts accumulate.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let len = pairs.iter().map(|&(k, _)| k + 1).max().unwrap_or(0);
        let mut probabilities = vec![0.0; len];
        for &(k, p) in pairs {
            probabilities[k] += p;
        }
        OffspringLaw::new(probabilities)
    }

    /// `P(L = k) = 1`.
    pub fn point_mass(k: usize) -> Self {
        let mut probabilities = vec![0.0; k + 1];
        probabilities[k] = 1.0;
        OffspringLaw::new(probabilities).expect("point mass is a valid law")
    }

    /// Binary branching, `p_2 = 1`.
    pub fn binary() -> Self {
        OffspringLaw::point_mass(2)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Nonzero `(k, p_k)` pairs in increasing `k`.
    pub fn pairs(&self) -> Vec<(usize, f64)> {
        self.probabilities.iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect()
    }

    /// `μ = Σ k p_k`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E[L²]`.
    pub fn second_moment(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum()
    }

    pub fn max_offspring(&self) -> usize {
        self.probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn is_supercritical(&self) -> bool {
        self.mean > 1.0
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    /// The size-biased law `q_k = k p_k / μ`, the offspring law of the spine.
    ///
    /// ```
    /// use bbm_core::OffspringLaw;
    /// let law = OffspringLaw::from_pairs(&[(1, 0.5), (3, 0.5)]).unwrap();
    /// let q = law.size_biased().unwrap();
    /// assert_eq!(q.probabilities(), &[0.0, 0.25, 0.0, 0.75]);
    /// ```
    pub fn size_biased(&self) -> Result<SizeBiasedLaw> {
        if !(self.mean > 0.0) {
            return Err(Error::invalid("offspring", "size-biasing needs a positive mean"));
        }
        let probabilities: Vec<f64> =
            self.probabilities.iter().enumerate().map(|(k, p)| k as f64 * p / self.mean).collect();
        let sampler = Sampler::new(&probabilities);
        Ok(SizeBiasedLaw { probabilities, sampler })
    }

    /// `Σ_k k (ln k)^{1+λ} p_k`, the moment in the `L log L` condition.
    /// Always finite for a finite-support law.
    pub fn llogl_moment(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid("lambda", format!("must be >= 0, got {lambda}")));
        }
        Ok(self
            .probabilities
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, p)| {
                let k = k as f64;
                k * k.ln().powf(1.0 + lambda) * p
            })
            .sum())
    }
}

impl Default for OffspringLaw {
    fn default() -> Self {
        OffspringLaw::binary()
    }
}

/// Size-biased offspring law `q_k = k p_k / μ`; `q_0 = 0` always.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeBiasedLaw {
    probabilities: Vec<f64>,
    sampler: Sampler,
}

impl SizeBiasedLaw {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(k, q)| k as f64 * q).sum()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_invalid_vectors() {
        assert!(OffspringLaw::new(vec![]).is_err());
        assert!(OffspringLaw::new(vec![0.5, 0.6]).is_err());
        assert!(OffspringLaw::new(vec![-0.1, 1.1]).is_err());
        assert!(OffspringLaw::new(vec![f64::NAN, 1.0]).is_err());
        assert!(OffspringLaw::new(vec![0.25, 0.0, 0.0, 0.75 + 5e-13]).is_ok());
    }

    #[test]
    fn point_mass_always_returns_its_atom() {
        let law = OffspringLaw::binary();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| law.sample(&mut rng) == 2));
        assert_eq!(law.mean(), 2.0);
        assert!(law.is_supercritical());
    }

    #[test]
    fn size_biased_examples() {
        let law = OffspringLaw::binary();
        assert_eq!(law.size_biased().unwrap().probabilities(), &[0.0, 0.0, 1.0]);

        let law = OffspringLaw::from_pairs(&[(1, 0.5), (3, 0.5)]).unwrap();
        let q = law.size_biased().unwrap();
        assert_eq!(q.probabilities(), &[0.0, 0.25, 0.0, 0.75]);

        let law = OffspringLaw::from_pairs(&[(0, 0.2), (2, 0.3), (4, 0.5)]).unwrap();
        let q = law.size_biased().unwrap();
        assert_eq!(q.probabilities()[0], 0.0);
        assert!((q.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((q.mean() - law.second_moment() / law.mean()).abs() < 1e-12);

        assert!(OffspringLaw::point_mass(0).size_biased().is_err());
    }

    #[test]
    fn llogl_examples() {
        let two = OffspringLaw::binary();
        assert!((two.llogl_moment(1.0).unwrap() - 2.0 * 2f64.ln().powi(2)).abs() < 1e-15);
        assert!((two.llogl_moment(1.0).unwrap() - 0.960_91).abs() < 1e-5);
        assert!((two.llogl_moment(0.0).unwrap() - 1.386_29).abs() < 1e-5);
        assert_eq!(OffspringLaw::point_mass(1).llogl_moment(3.5).unwrap(), 0.0);
        assert!(two.llogl_moment(-1.0).is_err());
    }

    #[test]
    fn pairs_and_support() {
        let law = OffspringLaw::from_pairs(&[(3, 0.75), (0, 0.25)]).unwrap();
        assert_eq!(law.pairs(), vec![(0, 0.25), (3, 0.75)]);
        assert_eq!(law.max_offspring(), 3);
    }
}
