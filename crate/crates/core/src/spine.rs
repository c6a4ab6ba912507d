//! The spine decomposition under the tilted measure and the many-to-one
//! formula
//!
//! `E Σ_{u∈N(t)} h(X_u(t)) = e^{ct} E[e^{θ·X_ξ(t)} h(X_ξ(t))]`,
//!
//! where `c = β(μ-1) + ‖θ‖²/2` and the spine `X_ξ(t)` is a standard
//! Brownian motion with drift `-θ`. The spine branches at rate `βμ` and has
//! size-biased offspring.
//!
//! The right side is computed by quadrature against the Gaussian law of
//! `X_ξ(t) = √t Z - θt` and compared with a forward Monte Carlo estimate of
//! the left side.

use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLegendre};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::check_dim;
use crate::rng::{child_id, splitmix64, StreamKey, ROOT_ID};
use crate::sim::{simulate, ModelParams, Snapshot};
use crate::specfun::std_normal_pdf;
use crate::stats::MeanSe;
use crate::sum::NeumaierSum;
use crate::{Error, Result};

/// The spine's branching times on `[0, t]`, the offspring counts at those
/// times and its positions at each branching time followed by `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinePath {
    pub t: f64,
    pub dim: usize,
    pub branch_times: Vec<f64>,
    pub offspring_counts: Vec<usize>,
    /// `(branch_times.len() + 1) × d`, row by row.
    pub positions: Vec<f64>,
}

impl SpinePath {
    pub fn endpoint(&self) -> &[f64] {
        &self.positions[self.positions.len() - self.dim..]
    }

    /// Spine position at the `i`-th branching time.
    pub fn position_at_branch(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("t", format!("must be positive and finite, got {t}")))
    }
}

/// Samples the spine on `[0, t]`: a Poisson(`βμt`) number of uniform
/// branching times, independent size-biased offspring counts, and
/// Brownian motion with drift `-θ` observed at the branching times and `t`.
pub fn sample_spine<R: Rng + ?Sized>(params: &ModelParams, t: f64, rng: &mut R) -> Result<SpinePath> {
    check_time(t)?;
    let d = params.d;
    let sized = params.law.size_biased()?;
    let rate = params.beta * params.law.mean() * t;
    let n = Poisson::new(rate).map_err(|e| Error::invalid("rate", e.to_string()))?.sample(rng) as usize;
    let mut branch_times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * t).collect();
    branch_times.sort_by(f64::total_cmp);
    let offspring_counts = (0..n).map(|_| sized.sample(rng)).collect();

    let mut positions = Vec::with_capacity((n + 1) * d);
    let mut x = vec![0.0; d];
    let mut last = 0.0;
    for &time in branch_times.iter().chain(std::iter::once(&t)) {
        let dt = time - last;
        let sd = dt.sqrt();
        for (xj, th) in x.iter_mut().zip(&params.theta) {
            let z: f64 = StandardNormal.sample(rng);
            *xj += sd * z - th * dt;
        }
        positions.extend_from_slice(&x);
        last = time;
    }
    Ok(SpinePath { t, dim: d, branch_times, offspring_counts, positions })
}

/// A spine together with the population it carries at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpineTree {
    pub spine: SpinePath,
    /// All particles alive at `t`; the spine particle comes first.
    pub population: Snapshot,
}

/// Samples the whole tree seen under the tilted measure: the spine, plus
/// an independent ordinary branching Brownian motion started from each of
/// the `L̂ - 1` siblings born at every spine branching time. Meant for
/// inspection; the quantitative checks use position-only functionals.
pub fn sample_spine_tree(params: &ModelParams, t: f64, seed: u64) -> Result<SpineTree> {
    let key = StreamKey::new(seed);
    let spine = sample_spine(params, t, &mut key.auxiliary(0))?;
    let d = params.d;
    let mut population = Snapshot::single(t, spine.endpoint().to_vec());
    for (i, (&tau, &count)) in spine.branch_times.iter().zip(&spine.offspring_counts).enumerate() {
        let origin = spine.position_at_branch(i);
        let remaining = t - tau;
        for sibling in 1..count {
            let sub_seed = splitmix64(seed ^ child_id(i as u64, sibling));
            let branch_id = child_id(child_id(ROOT_ID, i), sibling);
            if remaining <= 0.0 {
                population.ids.push(branch_id);
                population.positions.extend_from_slice(origin);
                continue;
            }
            let sub = simulate(params, &[remaining], sub_seed, 1)?;
            let snap = &sub.snapshots[0];
            for p in snap.iter() {
                population.ids.push(branch_id ^ p.id.rotate_left(1));
                population.positions.extend(p.position.iter().zip(origin).map(|(x, o)| x + o));
            }
        }
    }
    debug_assert_eq!(population.positions.len(), population.ids.len() * d);
    Ok(SpineTree { spine, population })
}

/// A function of the time-`t` position of a particle.
pub trait Functional: Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// Points along `axis` where the function may jump. Quadrature splits
    /// its domain there.
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Functional for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// The built-in functionals used by [`verify_many_to_one`].
#[derive(Clone, Debug, PartialEq)]
pub enum SuiteFunctional {
    /// `h ≡ 1`.
    One,
    /// `1{x ≤ b}` coordinatewise.
    Orthant { b: Vec<f64> },
    /// `x_axis^power`.
    Monomial { axis: usize, power: u32 },
    /// `e^{-θ·x}`; the forward sum is `e^{ct} W_t(θ)`.
    Tilt { theta: Vec<f64> },
}

impl SuiteFunctional {
    /// The suite `{1, 1{x ≤ b}, x_1, …, x_1^4, e^{-θ·x}}`.
    pub fn standard_suite(params: &ModelParams, b: &[f64]) -> Vec<SuiteFunctional> {
        let mut suite = vec![SuiteFunctional::One, SuiteFunctional::Orthant { b: b.to_vec() }];
        suite.extend((1..=4).map(|power| SuiteFunctional::Monomial { axis: 0, power }));
        suite.push(SuiteFunctional::Tilt { theta: params.theta.clone() });
        suite
    }

    pub fn name(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        match self {
            SuiteFunctional::One => "one".into(),
            SuiteFunctional::Orthant { b } => format!("orthant[{}]", join(b)),
            SuiteFunctional::Monomial { axis, power } => format!("x{}^{power}", axis + 1),
            SuiteFunctional::Tilt { theta } => format!("tilt[{}]", join(theta)),
        }
    }
}

impl Functional for SuiteFunctional {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            SuiteFunctional::One => 1.0,
            SuiteFunctional::Orthant { b } => {
                if x.iter().zip(b).all(|(x, b)| x <= b) {
                    1.0
                } else {
                    0.0
                }
            }
            SuiteFunctional::Monomial { axis, power } => x[*axis].powi(*power as i32),
            SuiteFunctional::Tilt { theta } => (-theta.iter().zip(x).map(|(t, x)| t * x).sum::<f64>()).exp(),
        }
    }

    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        match self {
            SuiteFunctional::Orthant { b } => vec![b[axis]],
            _ => Vec::new(),
        }
    }
}

/// Quadrature settings for [`many_to_one_rhs`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureOptions {
    /// Nodes per axis for Gauss–Hermite, and per panel for Gauss–Legendre.
    pub nodes: usize,
    /// Half-width, in standard deviations, of the truncated domain used
    /// when the functional has breakpoints.
    pub half_width: f64,
    /// Spine samples for the Monte Carlo fallback above three dimensions.
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { nodes: 64, half_width: 12.0, mc_samples: 1_000_000, mc_seed: 0x5eed }
    }
}

/// Right side of the many-to-one formula, with a standard error that is
/// zero for quadrature and positive for the Monte Carlo fallback.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhsValue {
    pub value: f64,
    pub std_error: f64,
}

/// `e^{ct} E[e^{θ·X} h(X)]` with `X = √t Z - θt`, `Z` standard normal in
/// `R^d`.
///
/// ```
/// use bbm_core::sim::{estimate_population, ModelParams};
/// use bbm_core::spine::{many_to_one_rhs, QuadratureOptions, SuiteFunctional};
/// let params = ModelParams::binary(1).with_theta(vec![0.7]).unwrap();
/// let rhs = many_to_one_rhs(&params, 2.0, &SuiteFunctional::One, &QuadratureOptions::default()).unwrap();
/// assert!((rhs.value / estimate_population(&params, 2.0) - 1.0).abs() < 1e-12);
/// ```
pub fn many_to_one_rhs(
    params: &ModelParams,
    t: f64,
    h: &dyn Functional,
    options: &QuadratureOptions,
) -> Result<RhsValue> {
    check_time(t)?;
    let d = params.d;
    let c = params.normalization_rate();
    let integrand = |z: &[f64], x: &mut [f64]| {
        let mut dot = 0.0;
        for j in 0..d {
            x[j] = t.sqrt() * z[j] - params.theta[j] * t;
            dot += params.theta[j] * x[j];
        }
        (c * t + dot).exp() * h.eval(x)
    };

    if d > 3 {
        let key = StreamKey::new(options.mc_seed);
        let mut rng = key.auxiliary(1);
        let mut acc = MeanSe::new();
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        for _ in 0..options.mc_samples {
            for zj in z.iter_mut() {
                *zj = StandardNormal.sample(&mut rng);
            }
            acc.push(integrand(&z, &mut x));
        }
        return Ok(RhsValue { value: acc.mean(), std_error: acc.std_error() });
    }

    let nodes = NonZeroUsize::new(options.nodes).ok_or_else(|| Error::invalid("nodes", "must be positive"))?;
    let rules: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|j| {
            let cuts = h.breakpoints(j);
            if cuts.is_empty() {
                hermite_rule(nodes)
            } else {
                let scale = t.sqrt();
                let cuts: Vec<f64> = cuts.iter().map(|b| (b + params.theta[j] * t) / scale).collect();
                let center = params.theta[j] * scale;
                legendre_rule(nodes, center - options.half_width, center + options.half_width, &cuts)
            }
        })
        .collect();

    let mut total = NeumaierSum::new();
    let mut index = vec![0usize; d];
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    'outer: loop {
        let mut weight = 1.0;
        for j in 0..d {
            let (node, w) = rules[j][index[j]];
            z[j] = node;
            weight *= w;
        }
        total += weight * integrand(&z, &mut x);
        for j in 0..d {
            index[j] += 1;
            if index[j] < rules[j].len() {
                continue 'outer;
            }
            index[j] = 0;
        }
        break;
    }
    Ok(RhsValue { value: total.value(), std_error: 0.0 })
}

/// Gauss–Hermite nodes and weights for the standard normal measure.
fn hermite_rule(nodes: NonZeroUsize) -> Vec<(f64, f64)> {
    let rule = GaussHermite::new(nodes);
    let norm = std::f64::consts::PI.sqrt().recip();
    rule.iter().map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w * norm)).collect()
}

/// Composite Gauss–Legendre rule for `φ(z) dz` on `[lo, hi]`, with panel
/// boundaries at every cut inside the interval.
fn legendre_rule(nodes: NonZeroUsize, lo: f64, hi: f64, cuts: &[f64]) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(nodes);
    let mut edges = vec![lo];
    edges.extend(cuts.iter().copied().filter(|c| *c > lo && *c < hi));
    edges.push(hi);
    edges.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for &(x, wt) in rule.iter() {
            let z = mid + half * x;
            out.push((z, half * wt * std_normal_pdf(z)));
        }
    }
    out
}

/// One line of the many-to-one verification.
#[derive(Clone, Debug, PartialEq)]
pub struct ManyToOneRow {
    pub functional: String,
    pub t: f64,
    pub theta: Vec<f64>,
    pub forward_mean: f64,
    pub forward_se: f64,
    pub quadrature: f64,
    pub quadrature_se: f64,
    pub z_score: f64,
}

/// Forward-simulates `seeds` trajectories to time `t` and compares the
/// sample mean of `Σ_u h(X_u(t))` with the many-to-one right side for every
/// functional in `suite`. Seeds are `base_seed, base_seed + 1, …`.
pub fn verify_many_to_one(
    params: &ModelParams,
    t: f64,
    suite: &[SuiteFunctional],
    base_seed: u64,
    seeds: usize,
    options: &QuadratureOptions,
) -> Result<Vec<ManyToOneRow>> {
    check_time(t)?;
    for h in suite {
        if let SuiteFunctional::Orthant { b } | SuiteFunctional::Tilt { theta: b } = h {
            check_dim(params.d, b.len())?;
        }
    }
    let per_seed: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let traj = simulate(params, &[t], base_seed.wrapping_add(i as u64), 1)?;
            let snap = &traj.snapshots[0];
            Ok(suite
                .iter()
                .map(|h| snap.iter().map(|p| h.eval(p.position)).sum::<NeumaierSum>().value())
                .collect())
        })
        .collect::<Result<_>>()?;

    suite
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let forward: MeanSe = per_seed.iter().map(|v| v[i]).collect();
            let rhs = many_to_one_rhs(params, t, h, options)?;
            let se = forward.std_error().hypot(rhs.std_error);
            let diff = forward.mean() - rhs.value;
            Ok(ManyToOneRow {
                functional: h.name(),
                t,
                theta: params.theta.clone(),
                forward_mean: forward.mean(),
                forward_se: forward.std_error(),
                quadrature: rhs.value,
                quadrature_se: rhs.std_error,
                z_score: if diff == 0.0 { 0.0 } else { diff / se },
            })
        })
        .collect()
}

/// Writes `functional,t,theta,forward_mean,forward_se,quadrature,zscore`.
pub fn write_many_to_one_csv<W: Write>(mut w: W, rows: &[ManyToOneRow]) -> Result<()> {
    writeln!(w, "functional,t,theta,forward_mean,forward_se,quadrature,zscore")?;
    for r in rows {
        let theta = r.theta.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        writeln!(
            w,
            "{},{},{theta},{:.16e},{:.16e},{:.16e},{:.6}",
            r.functional, r.t, r.forward_mean, r.forward_se, r.quadrature, r.z_score
        )?;
    }
    w.flush()?;
    Ok(())
}
