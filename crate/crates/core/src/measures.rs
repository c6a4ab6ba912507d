//! The additive measure, the additive martingale and the Hermite
//! martingales evaluated on a snapshot.
//!
//! With `c = β(μ-1) + ‖θ‖²/2`, the additive measure at time `s` places
//! weight `e^{-cs} e^{-θ·X_u(s)}` at the recentered position `X_u(s) + θs`
//! of every particle. Its total mass is `W_s(θ)`. The Hermite martingale
//! weights each particle by an extra product of heat polynomials:
//!
//! `M_t^{(k,θ)} = e^{-ct} Σ_u e^{-θ·X_u(t)} Π_j h_{k_j}(X_u(t)_j + θ_j t, t)`.
//!
//! Reductions split the particle array into fixed-size chunks, sum each
//! chunk with compensation and combine the chunk sums in order, so results
//! do not depend on how many threads rayon uses.

use std::io::Write;

use rayon::prelude::*;

use crate::error::check_dim;
use crate::multi_index::MultiIndex;
use crate::sim::{ModelParams, Snapshot, Trajectory};
use crate::specfun::heat_poly_table;
use crate::sum::NeumaierSum;
use crate::{Error, Result};

const CHUNK: usize = 4096;
const PARALLEL_THRESHOLD: usize = 4 * CHUNK;

/// How a half-space threshold relates to the snapshot time `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    /// Threshold `b√s`, the central-limit scale.
    Scaled,
    /// Threshold `b` as given.
    Fixed,
}

/// Sums `f(position, out)` over the particles, one compensated accumulator
/// per output slot.
fn reduce<F>(snapshot: &Snapshot, slots: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let d = snapshot.dim;
    let chunk = |positions: &[f64]| {
        let mut acc = vec![NeumaierSum::new(); slots];
        let mut scratch = vec![0.0; slots];
        for x in positions.chunks_exact(d) {
            f(x, &mut scratch);
            for (a, &v) in acc.iter_mut().zip(&scratch) {
                *a += v;
            }
        }
        acc
    };
    let partials: Vec<Vec<NeumaierSum>> = if snapshot.len() >= PARALLEL_THRESHOLD {
        snapshot.positions.par_chunks(CHUNK * d).map(chunk).collect()
    } else {
        snapshot.positions.chunks(CHUNK * d).map(chunk).collect()
    };
    let mut total = vec![NeumaierSum::new(); slots];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total.iter().map(NeumaierSum::value).collect()
}

/// Log of the particle weight: `-cs - θ·x`.
#[inline]
fn log_weight(params: &ModelParams, s: f64, x: &[f64]) -> f64 {
    let dot: f64 = params.theta.iter().zip(x).map(|(t, x)| t * x).sum();
    -params.normalization_rate() * s - dot
}

fn check_snapshot(snapshot: &Snapshot, params: &ModelParams) -> Result<()> {
    check_dim(params.d, snapshot.dim)
}

fn check_positive_time(s: f64) -> Result<()> {
    if s > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("s", format!("snapshot time must be positive, got {s}")))
    }
}

/// `W_s(θ)`, the total mass of the additive measure. Zero for an extinct
/// population.
pub fn additive_martingale(snapshot: &Snapshot, params: &ModelParams) -> f64 {
    assert_eq!(snapshot.dim, params.d, "snapshot and parameters disagree on dimension");
    let s = snapshot.time;
    reduce(snapshot, 1, |x, out| out[0] = log_weight(params, s, x).exp())[0]
}

/// `μ_s^θ((-∞, b_s])` with `b_s = b√s` or `b_s = b`.
///
/// ```
/// use bbm_core::measures::{additive_cdf, additive_martingale, Scaling};
/// use bbm_core::sim::{ModelParams, Snapshot};
/// let params = ModelParams::binary(1);
/// let snap = Snapshot::single(2.0, vec![0.0]);
/// let half = additive_cdf(&snap, &params, &[0.0], Scaling::Scaled).unwrap();
/// assert_eq!(half, (-2.0f64).exp());
/// let all = additive_cdf(&snap, &params, &[1e9], Scaling::Fixed).unwrap();
/// assert_eq!(all, additive_martingale(&snap, &params));
/// ```
pub fn additive_cdf(snapshot: &Snapshot, params: &ModelParams, b: &[f64], scaling: Scaling) -> Result<f64> {
    check_snapshot(snapshot, params)?;
    check_dim(params.d, b.len())?;
    let s = snapshot.time;
    check_positive_time(s)?;
    let factor = match scaling {
        Scaling::Scaled => s.sqrt(),
        Scaling::Fixed => 1.0,
    };
    let threshold: Vec<f64> = b.iter().map(|b| b * factor).collect();
    Ok(reduce(snapshot, 1, |x, out| {
        let inside = x.iter().zip(&params.theta).zip(&threshold).all(|((x, t), b)| x + t * s <= *b);
        out[0] = if inside { log_weight(params, s, x).exp() } else { 0.0 };
    })[0])
}

/// `μ_s^θ((a, b])` for the half-open box `Π_j (a_j, b_j]`; multiply by
/// `s^{d/2}` for the local-limit normalization.
pub fn additive_box(snapshot: &Snapshot, params: &ModelParams, a: &[f64], b: &[f64]) -> Result<f64> {
    check_snapshot(snapshot, params)?;
    check_dim(params.d, a.len())?;
    check_dim(params.d, b.len())?;
    check_box(a, b)?;
    let s = snapshot.time;
    check_positive_time(s)?;
    Ok(reduce(snapshot, 1, |x, out| {
        let inside = x
            .iter()
            .zip(&params.theta)
            .zip(a.iter().zip(b))
            .all(|((x, t), (a, b))| {
                let y = x + t * s;
                *a < y && y <= *b
            });
        out[0] = if inside { log_weight(params, s, x).exp() } else { 0.0 };
    })[0])
}

pub(crate) fn check_box(a: &[f64], b: &[f64]) -> Result<()> {
    match a.iter().zip(b).position(|(a, b)| !(a < b)) {
        None => Ok(()),
        Some(j) => Err(Error::invalid("box", format!("need a_{j} < b_{j}, got {} and {}", a[j], b[j]))),
    }
}

/// `M_t^{(k,θ)}` on a snapshot; `k = 0` gives `W_t(θ)`. Also defined at
/// `t = 0`, where the heat polynomials reduce to monomials.
pub fn hermite_martingale(snapshot: &Snapshot, params: &ModelParams, k: &MultiIndex) -> Result<f64> {
    Ok(hermite_martingales(snapshot, params, std::slice::from_ref(k))?[0])
}

/// Several Hermite martingales in a single pass over the particles.
pub fn hermite_martingales(snapshot: &Snapshot, params: &ModelParams, ks: &[MultiIndex]) -> Result<Vec<f64>> {
    check_snapshot(snapshot, params)?;
    for k in ks {
        check_dim(params.d, k.dim())?;
    }
    let t = snapshot.time;
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("snapshot time must be non-negative, got {t}")));
    }
    let d = params.d;
    let rows = ks.iter().flat_map(|k| k.entries()).copied().max().unwrap_or(0) as usize + 1;
    Ok(reduce(snapshot, ks.len(), |x, out| {
        // table[j * rows + n] = h_n(x_j + θ_j t, t)
        let mut table = [0.0; 64];
        let mut heap;
        let table: &mut [f64] = if d * rows <= table.len() {
            &mut table[..d * rows]
        } else {
            heap = vec![0.0; d * rows];
            &mut heap
        };
        for j in 0..d {
            heat_poly_table(x[j] + params.theta[j] * t, t, &mut table[j * rows..(j + 1) * rows]);
        }
        let w = log_weight(params, t, x).exp();
        for (o, k) in out.iter_mut().zip(ks) {
            let mut v = w;
            for (j, &kj) in k.entries().iter().enumerate() {
                v *= table[j * rows + kj as usize];
            }
            *o = v;
        }
    }))
}

/// Values of one martingale along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleSeries {
    pub k: MultiIndex,
    pub theta: Vec<f64>,
    /// `(time, value)` at each snapshot.
    pub samples: Vec<(f64, f64)>,
}

impl MartingaleSeries {
    pub fn last(&self) -> Option<(f64, f64)> {
        self.samples.last().copied()
    }

    /// Largest `|M_{t_{i+1}} - M_{t_i}|` over the last `gaps` grid gaps, an
    /// empirical Cauchy criterion for convergence.
    pub fn recent_increment(&self, gaps: usize) -> f64 {
        let n = self.samples.len();
        self.samples[n.saturating_sub(gaps + 1)..]
            .windows(2)
            .map(|w| (w[1].1 - w[0].1).abs())
            .fold(0.0, f64::max)
    }
}

/// One series per multi-index, evaluated at every snapshot of the
/// trajectory.
pub fn martingale_series(trajectory: &Trajectory, ks: &[MultiIndex]) -> Result<Vec<MartingaleSeries>> {
    let params = &trajectory.params;
    let mut series: Vec<MartingaleSeries> = ks
        .iter()
        .map(|k| MartingaleSeries { k: k.clone(), theta: params.theta.clone(), samples: Vec::new() })
        .collect();
    for snapshot in &trajectory.snapshots {
        let values = hermite_martingales(snapshot, params, ks)?;
        for (s, v) in series.iter_mut().zip(values) {
            s.samples.push((snapshot.time, v));
        }
    }
    Ok(series)
}

/// Writes `time,k_multiindex,theta,value` rows; `k` and `θ` are
/// `;`-separated.
pub fn write_martingale_csv<W: Write>(mut w: W, series: &[MartingaleSeries]) -> Result<()> {
    writeln!(w, "time,k_multiindex,theta,value")?;
    for s in series {
        let theta = s.theta.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
        for (time, value) in &s.samples {
            writeln!(w, "{time},{},{theta},{value:.16e}", s.k)?;
        }
    }
    w.flush()?;
    Ok(())
}
