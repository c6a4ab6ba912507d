use bbm_core::stats::MeanSe;
use bbm_core::OffspringLaw;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const DRAWS: usize = 1_000_000;

fn counts(law: &OffspringLaw, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; law.probabilities().len()];
    for _ in 0..DRAWS {
        counts[law.sample(&mut rng)] += 1;
    }
    counts
}

fn chi_square_p_value(law: &OffspringLaw, counts: &[u64]) -> f64 {
    let support = law.pairs();
    let stat: f64 = support
        .iter()
        .map(|&(k, p)| {
            let expected = p * DRAWS as f64;
            (counts[k] as f64 - expected).powi(2) / expected
        })
        .sum();
    let dof = (support.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn chi_square_goodness_of_fit() {
    let laws = [
        OffspringLaw::from_pairs(&[(0, 0.25), (3, 0.75)]).unwrap(),
        OffspringLaw::from_pairs(&[(1, 0.5), (3, 0.5)]).unwrap(),
        OffspringLaw::new(vec![0.1, 0.2, 0.3, 0.0, 0.4]).unwrap(),
    ];
    for (i, law) in laws.iter().enumerate() {
        let c = counts(law, 100 + i as u64);
        let zero_mass: u64 = (0..c.len()).filter(|&k| law.probabilities()[k] == 0.0).map(|k| c[k]).sum();
        assert_eq!(zero_mass, 0);
        let p = chi_square_p_value(law, &c);
        assert!(p > 1e-3, "law {i}: p = {p}");
    }
}

#[test]
fn frequencies_within_binomial_interval() {
    let law = OffspringLaw::from_pairs(&[(0, 0.25), (3, 0.75)]).unwrap();
    let c = counts(&law, 7);
    for (k, p) in [(0, 0.25), (3, 0.75)] {
        let freq = c[k] as f64 / DRAWS as f64;
        let sigma = (p * (1.0 - p) / DRAWS as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * sigma, "k={k}: {freq}");
    }
}

#[test]
fn sample_mean_matches_law_mean() {
    let law = OffspringLaw::from_pairs(&[(1, 0.5), (3, 0.5)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let acc: MeanSe = (0..DRAWS).map(|_| law.sample(&mut rng) as f64).collect();
    assert!(acc.z_score(2.0).abs() < 3.0, "{}", acc.mean());
}

#[test]
fn size_biased_sampling_matches_weights() {
    let law = OffspringLaw::from_pairs(&[(0, 0.2), (1, 0.3), (4, 0.5)]).unwrap();
    let q = law.size_biased().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut c = [0u64; 5];
    for _ in 0..DRAWS {
        c[q.sample(&mut rng)] += 1;
    }
    assert_eq!(c[0], 0);
    for k in [1, 4] {
        let p = q.probabilities()[k];
        let sigma = (p * (1.0 - p) / DRAWS as f64).sqrt();
        assert!((c[k] as f64 / DRAWS as f64 - p).abs() < 3.0 * sigma);
    }
}
