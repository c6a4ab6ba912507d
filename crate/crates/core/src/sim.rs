//! Event-driven simulation of branching Brownian motion.
//!
//! Positions are only materialized at branching times and observation times.
//! Brownian increments over those intervals are exactly Gaussian, so there
//! is no discretization error. The schedule is processed one segment
//! `(t_{i-1}, t_i]` at a time: every particle alive at `t_{i-1}` draws a fresh
//! exponential residual lifetime (exact by memorylessness) and its subtree
//! is grown until `t_i`. Each particle's draws come from a stream keyed by
//! its genealogical id and the segment index, and the particle array is cut
//! into fixed-size chunks. The resulting [`Trajectory`] is bit-identical for
//! every worker count.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::error::check_dim;
use crate::offspring::OffspringLaw;
use crate::rng::{child_id, StreamKey, ROOT_ID};
use crate::{Error, Result};

/// Default bound on the number of particles alive at an observation time.
pub const DEFAULT_POPULATION_CAP: usize = 5_000_000;

/// Particles per work item. Fixed so that output order does not depend on
/// the number of workers.
const CHUNK: usize = 1024;

/// Model parameters: dimension, branching rate, offspring law and the drift
/// parameter `θ` used by the weighted statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    pub beta: f64,
    pub law: OffspringLaw,
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn new(d: usize, beta: f64, law: OffspringLaw, theta: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta", format!("branching rate must be positive, got {beta}")));
        }
        check_dim(d, theta.len())?;
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("theta", "entries must be finite"));
        }
        Ok(ModelParams { d, beta, law, theta })
    }

    /// Unit-rate binary branching in dimension `d` with `θ = 0`.
    pub fn binary(d: usize) -> Self {
        ModelParams::new(d.max(1), 1.0, OffspringLaw::binary(), vec![0.0; d.max(1)]).expect("valid defaults")
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        check_dim(self.d, theta.len())?;
        self.theta = theta;
        ModelParams::new(self.d, self.beta, self.law, self.theta)
    }

    /// Malthusian growth rate `β(μ - 1)`.
    pub fn growth_rate(&self) -> f64 {
        self.beta * (self.law.mean() - 1.0)
    }

    pub fn theta_norm_sq(&self) -> f64 {
        self.theta.iter().map(|t| t * t).sum()
    }

    /// Exponent `β(μ - 1) + ‖θ‖²/2` of the normalization `e^{-(…)t}`.
    pub fn normalization_rate(&self) -> f64 {
        self.growth_rate() + 0.5 * self.theta_norm_sq()
    }

    /// `√(2β(μ - 1))`, the radius of the region where the additive
    /// martingale has a nondegenerate limit (zero when `μ ≤ 1`).
    pub fn admissible_radius(&self) -> f64 {
        (2.0 * self.growth_rate()).max(0.0).sqrt()
    }

    /// Requires a supercritical law and `‖θ‖ < √(2β(μ - 1))`.
    pub fn check_admissible(&self) -> Result<()> {
        if !self.law.is_supercritical() {
            return Err(Error::invalid(
                "offspring",
                format!("mean offspring {} must exceed 1", self.law.mean()),
            ));
        }
        let norm = self.theta_norm_sq().sqrt();
        let radius = self.admissible_radius();
        if norm < radius {
            Ok(())
        } else {
            Err(Error::invalid("theta", format!("‖θ‖ = {norm} must be below √(2β(μ-1)) = {radius}")))
        }
    }
}

/// Borrowed view of one particle in a [`Snapshot`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle<'a> {
    pub id: u64,
    pub position: &'a [f64],
}

/// Alive population at one observation time, stored as a structure of
/// arrays: `positions` holds `n × d` coordinates row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub dim: usize,
    pub ids: Vec<u64>,
    pub positions: Vec<f64>,
}

impl Snapshot {
    /// A single particle at `position`.
    pub fn single(time: f64, position: Vec<f64>) -> Self {
        Snapshot { time, dim: position.len(), ids: vec![ROOT_ID], positions: position }
    }

    pub fn from_positions(time: f64, dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 {
            return Err(Error::invalid("positions", format!("length {} is not a multiple of d = {dim}", positions.len())));
        }
        let ids = (0..(positions.len() / dim) as u64).collect();
        Ok(Snapshot { time, dim, ids, positions })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = Particle<'_>> + '_ {
        self.ids
            .iter()
            .zip(self.positions.chunks_exact(self.dim))
            .map(|(&id, position)| Particle { id, position })
    }

    /// Writes the header `t=<time> d=<dim> n=<count>` followed by one
    /// `id,x_1,…,x_d` row per particle, coordinates with 17 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t={} d={} n={}", self.time, self.dim, self.len())?;
        for p in self.iter() {
            write!(w, "{}", p.id)?;
            for x in p.position {
                write!(w, ",{x:.16e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Snapshot> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Snapshot("missing header".into()))??;
        let (time, dim, n) = parse_header(&header)?;
        let mut ids = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n * dim);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let bad = |what: &str| Error::Snapshot(format!("row {}: {what}", lineno + 1));
            let id = fields.next().and_then(|f| f.parse::<u64>().ok()).ok_or_else(|| bad("bad id"))?;
            ids.push(id);
            let before = positions.len();
            for f in fields {
                positions.push(f.parse::<f64>().map_err(|_| bad("bad coordinate"))?);
            }
            if positions.len() - before != dim {
                return Err(bad("wrong number of coordinates"));
            }
        }
        if ids.len() != n {
            return Err(Error::Snapshot(format!("header says n={n}, found {} rows", ids.len())));
        }
        Ok(Snapshot { time, dim, ids, positions })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Snapshot> {
        Snapshot::read_csv(BufReader::new(File::open(path)?))
    }
}

fn parse_header(header: &str) -> Result<(f64, usize, usize)> {
    let bad = || Error::Snapshot(format!("malformed header `{header}`"));
    let mut time = None;
    let mut dim = None;
    let mut n = None;
    for field in header.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(bad)?;
        match key {
            "t" => time = value.parse::<f64>().ok(),
            "d" => dim = value.parse::<usize>().ok(),
            "n" => n = value.parse::<usize>().ok(),
            _ => return Err(bad()),
        }
    }
    match (time, dim, n) {
        (Some(t), Some(d), Some(n)) if d > 0 => Ok((t, d, n)),
        _ => Err(bad()),
    }
}

/// A completed particle lifetime, harvested when
/// [`SimOptions::record_lifetimes`] is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lifetime {
    pub birth: f64,
    pub death: f64,
}

/// One realization observed on a schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
    /// Lifetimes that ended before the last observation time, in a
    /// deterministic order. Empty unless requested.
    pub lifetimes: Vec<Lifetime>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    /// Worker threads; the output does not depend on this value.
    pub workers: usize,
    /// Maximum population at any observation time.
    pub cap: usize,
    pub record_lifetimes: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { workers: 1, cap: DEFAULT_POPULATION_CAP, record_lifetimes: false }
    }
}

/// Expected population `e^{β(μ-1)t}`.
pub fn estimate_population(params: &ModelParams, t: f64) -> f64 {
    (params.growth_rate() * t).exp()
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidSchedule("schedule is empty".into()));
    }
    if let Some(t) = schedule.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidSchedule(format!("time {t} is not a positive finite number")));
    }
    if let Some(w) = schedule.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSchedule(format!("times must increase strictly, found {} then {}", w[0], w[1])));
    }
    Ok(())
}

/// Simulates one trajectory from a single particle at the origin with the
/// default population cap.
///
/// ```
/// use bbm_core::sim::{simulate, ModelParams};
/// let params = ModelParams::binary(2);
/// let one = simulate(&params, &[0.5, 1.0], 3, 1).unwrap();
/// let four = simulate(&params, &[0.5, 1.0], 3, 4).unwrap();
/// assert_eq!(one, four);
/// ```
pub fn simulate(params: &ModelParams, schedule: &[f64], seed: u64, workers: usize) -> Result<Trajectory> {
    simulate_with(params, schedule, seed, &SimOptions { workers, ..SimOptions::default() })
}

pub fn simulate_with(params: &ModelParams, schedule: &[f64], seed: u64, options: &SimOptions) -> Result<Trajectory> {
    validate_schedule(schedule)?;
    if options.workers == 0 {
        return Err(Error::invalid("workers", "worker budget must be at least 1"));
    }
    let pool = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| Error::invalid("workers", e.to_string()))?,
        )
    } else {
        None
    };

    let d = params.d;
    let key = StreamKey::new(seed);
    let lifetime = Exp::new(params.beta).expect("beta validated positive");
    let root_ids = [ROOT_ID];
    let root_positions = vec![0.0; d];
    let mut births = vec![0.0];
    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(schedule.len());
    let mut lifetimes = Vec::new();
    let mut t_prev = 0.0;

    for (segment, &t_next) in schedule.iter().enumerate() {
        let (ids, positions) = match snapshots.last() {
            Some(s) => (&s.ids[..], &s.positions[..]),
            None => (&root_ids[..], &root_positions[..]),
        };
        let ctx = Segment {
            params,
            key: &key,
            lifetime,
            segment: segment as u32,
            start: t_prev,
            end: t_next,
            cap: options.cap,
            record_lifetimes: options.record_lifetimes,
        };
        let ranges: Vec<(usize, usize)> =
            (0..ids.len()).step_by(CHUNK).map(|lo| (lo, (lo + CHUNK).min(ids.len()))).collect();
        let run = |&(lo, hi): &(usize, usize)| {
            ctx.evolve(&ids[lo..hi], &positions[lo * d..hi * d], &births[lo..hi])
        };
        let outputs: Vec<ChunkOutput> = match &pool {
            Some(pool) => pool.install(|| ranges.par_iter().map(run).collect()),
            None => ranges.iter().map(run).collect(),
        };

        let total: usize = outputs.iter().map(|o| o.ids.len()).sum();
        if total > options.cap || outputs.iter().any(|o| o.overflow) {
            let partial = Trajectory { params: params.clone(), seed, snapshots, lifetimes };
            return Err(Error::PopulationCapExceeded { cap: options.cap, time: t_next, partial: Box::new(partial) });
        }

        let mut next = Snapshot {
            time: t_next,
            dim: d,
            ids: Vec::with_capacity(total),
            positions: Vec::with_capacity(total * d),
        };
        let mut next_births = Vec::with_capacity(total);
        for out in outputs {
            next.ids.extend_from_slice(&out.ids);
            next.positions.extend_from_slice(&out.positions);
            next_births.extend_from_slice(&out.births);
            lifetimes.extend_from_slice(&out.lifetimes);
        }
        births = next_births;
        snapshots.push(next);
        t_prev = t_next;
    }

    Ok(Trajectory { params: params.clone(), seed, snapshots, lifetimes })
}

struct Segment<'a> {
    params: &'a ModelParams,
    key: &'a StreamKey,
    lifetime: Exp<f64>,
    segment: u32,
    start: f64,
    end: f64,
    cap: usize,
    record_lifetimes: bool,
}

#[derive(Default)]
struct ChunkOutput {
    ids: Vec<u64>,
    positions: Vec<f64>,
    births: Vec<f64>,
    lifetimes: Vec<Lifetime>,
    overflow: bool,
}

struct Pending {
    id: u64,
    start: f64,
    birth: f64,
}

impl Segment<'_> {
    /// Grows the subtrees of a chunk of particles from `start` to `end`.
    fn evolve(&self, ids: &[u64], positions: &[f64], births: &[f64]) -> ChunkOutput {
        let d = self.params.d;
        let mut out = ChunkOutput {
            ids: Vec::with_capacity(ids.len()),
            positions: Vec::with_capacity(positions.len()),
            births: Vec::with_capacity(ids.len()),
            ..ChunkOutput::default()
        };
        let mut stack: Vec<Pending> = Vec::new();
        let mut stack_positions: Vec<f64> = Vec::new();
        let mut x = vec![0.0; d];

        for i in 0..ids.len() {
            stack.push(Pending { id: ids[i], start: self.start, birth: births[i] });
            stack_positions.extend_from_slice(&positions[i * d..(i + 1) * d]);

            while let Some(p) = stack.pop() {
                let base = stack_positions.len() - d;
                x.copy_from_slice(&stack_positions[base..]);
                stack_positions.truncate(base);

                let mut rng = self.key.stream(p.id, self.segment);
                let death = p.start + self.lifetime.sample(&mut rng);
                if death < self.end {
                    advance(&mut x, death - p.start, &mut rng);
                    if self.record_lifetimes {
                        out.lifetimes.push(Lifetime { birth: p.birth, death });
                    }
                    let children = self.params.law.sample(&mut rng);
                    // pushed in reverse so that child 0 is processed first
                    for c in (0..children).rev() {
                        stack.push(Pending { id: child_id(p.id, c), start: death, birth: death });
                        stack_positions.extend_from_slice(&x);
                    }
                    if out.ids.len() + stack.len() > self.cap {
                        out.overflow = true;
                        return out;
                    }
                } else {
                    advance(&mut x, self.end - p.start, &mut rng);
                    out.ids.push(p.id);
                    out.positions.extend_from_slice(&x);
                    out.births.push(p.birth);
                }
            }
        }
        out
    }
}

#[inline]
fn advance<R: Rng>(x: &mut [f64], dt: f64, rng: &mut R) {
    let sd = dt.sqrt();
    for xi in x.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *xi += sd * z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_validation() {
        assert!(validate_schedule(&[]).is_err());
        assert!(validate_schedule(&[0.0, 1.0]).is_err());
        assert!(validate_schedule(&[1.0, 1.0]).is_err());
        assert!(validate_schedule(&[2.0, 1.0]).is_err());
        assert!(validate_schedule(&[1.0, f64::INFINITY]).is_err());
        assert!(validate_schedule(&[0.5, 1.0, 3.0]).is_ok());
    }

    #[test]
    fn population_estimates() {
        assert_eq!(estimate_population(&ModelParams::binary(1), 0.0), 1.0);
        let e14 = estimate_population(&ModelParams::binary(1), 14.0);
        assert!((e14 / 14f64.exp() - 1.0).abs() < 1e-15);
        assert!((e14 - 1.203e6).abs() < 1e3);
        let law = OffspringLaw::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap();
        let params = ModelParams::new(1, 2.0, law, vec![0.0]).unwrap();
        assert!((estimate_population(&params, 3.0) - 3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let law = OffspringLaw::binary();
        assert!(ModelParams::new(0, 1.0, law.clone(), vec![]).is_err());
        assert!(ModelParams::new(1, 0.0, law.clone(), vec![0.0]).is_err());
        assert!(ModelParams::new(2, 1.0, law.clone(), vec![0.0]).is_err());
        let p = ModelParams::new(2, 1.0, law, vec![1.0, 1.1]).unwrap();
        assert!(p.check_admissible().is_err());
        let p = p.with_theta(vec![1.0, 0.0]).unwrap();
        assert!(p.check_admissible().is_ok());
        let critical = ModelParams::new(1, 1.0, OffspringLaw::point_mass(1), vec![0.0]).unwrap();
        assert!(critical.check_admissible().is_err());
    }

    #[test]
    fn single_child_law_keeps_one_particle() {
        let params = ModelParams::new(3, 1.0, OffspringLaw::point_mass(1), vec![0.0; 3]).unwrap();
        let traj = simulate(&params, &[0.5, 1.0, 4.0], 11, 1).unwrap();
        for s in &traj.snapshots {
            assert_eq!(s.len(), 1);
            assert!(s.positions.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn pure_death_law() {
        let params = ModelParams::new(1, 1.0, OffspringLaw::point_mass(0), vec![0.0]).unwrap();
        let traj = simulate(&params, &[50.0, 60.0], 5, 1).unwrap();
        assert!(traj.snapshots.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn cap_returns_partial_trajectory() {
        let params = ModelParams::binary(1);
        let err = simulate_with(&params, &[1.0, 12.0], 2, &SimOptions { cap: 5000, ..SimOptions::default() })
            .unwrap_err();
        match err {
            Error::PopulationCapExceeded { cap, time, partial } => {
                assert_eq!(cap, 5000);
                assert_eq!(time, 12.0);
                assert_eq!(partial.snapshots.len(), 1);
                assert_eq!(partial.snapshots[0].time, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let params = ModelParams::binary(2).with_theta(vec![0.3, -0.2]).unwrap();
        let schedule = [1.0, 3.0, 9.0];
        let reference = simulate(&params, &schedule, 99, 1).unwrap();
        assert!(reference.snapshots[2].len() > CHUNK, "needs several chunks");
        for workers in [2, 3, 8] {
            assert_eq!(simulate(&params, &schedule, 99, workers).unwrap(), reference);
        }
        assert_ne!(simulate(&params, &schedule, 100, 1).unwrap(), reference);
    }

    #[test]
    fn ids_unique_within_snapshots() {
        let law = OffspringLaw::from_pairs(&[(0, 0.1), (1, 0.2), (3, 0.7)]).unwrap();
        let params = ModelParams::new(1, 1.0, law, vec![0.0]).unwrap();
        let traj = simulate(&params, &[2.0, 4.0], 17, 1).unwrap();
        for s in &traj.snapshots {
            let mut ids = s.ids.clone();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), s.len());
        }
    }

    #[test]
    fn snapshot_csv_round_trip_is_exact() {
        let params = ModelParams::binary(2);
        let traj = simulate(&params, &[2.5], 4, 1).unwrap();
        let snap = &traj.snapshots[0];
        let mut buf = Vec::new();
        snap.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("t=2.5 d=2 n={}\n", snap.len())));
        let back = Snapshot::read_csv(&buf[..]).unwrap();
        assert_eq!(&back, snap);
    }

    #[test]
    fn malformed_snapshot_files() {
        for text in ["", "t=1 d=1\n", "t=1 d=1 n=2\n5,0.0\n", "t=1 d=2 n=1\n5,0.0\n", "t=1 d=1 n=1\nx,0.0\n"] {
            assert!(Snapshot::read_csv(text.as_bytes()).is_err(), "{text:?}");
        }
    }
}
