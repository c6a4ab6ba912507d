//! Mode dispatch: simulate the seeds, write per-seed and ensemble outputs,
//! evaluate the mode's checks and finish with the manifest.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bbm_core::expansion::{residual_report, ExpansionReport, Target};
use bbm_core::measures::{additive_martingale, martingale_series, write_martingale_csv};
use bbm_core::sim::{simulate_with, SimOptions, Trajectory};
use bbm_core::spine::{verify_many_to_one, write_many_to_one_csv, QuadratureOptions, SuiteFunctional};
use bbm_core::stats::{median, MeanSe};
use bbm_core::{ModelParams, MultiIndex};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, Mode, Seeds};
use crate::error::RunError;
use crate::manifest::{peak_rss_bytes, write_checks, Check, OutputFile, RunManifest, SeedStatus};
use crate::specfun_suite::specfun_checks;

/// Where outputs go, plus command-line overrides of the config's options.
#[derive(Clone, Debug, Default)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub cap: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.manifest.exit_code
    }
}

/// Validates `config` for `mode`, runs it and writes the manifest.
///
/// Configuration errors are reported before anything is written. Any later
/// error still produces a manifest recording the per-seed status, and is
/// then returned.
pub fn run(mode: Mode, config: &ExperimentConfig, ctx: &RunContext) -> Result<RunOutcome, RunError> {
    let mut config = config.clone();
    if ctx.workers.is_some() {
        config.options.workers = ctx.workers;
    }
    if ctx.cap.is_some() {
        config.options.cap = ctx.cap;
    }
    let params = config.validate(mode)?;
    config.mode = Some(mode);
    fs::create_dir_all(&ctx.out_dir).map_err(RunError::io(&ctx.out_dir))?;

    let start = Instant::now();
    let mut rec = Recorder {
        out_dir: ctx.out_dir.clone(),
        workers: config.workers(),
        cap: config.cap(),
        files: Vec::new(),
        checks: Vec::new(),
        seeds: Vec::new(),
    };
    let result = match mode {
        Mode::Simulate => run_simulate(&config, &params, &mut rec),
        Mode::VerifySpecfun => run_specfun(&mut rec),
        Mode::VerifyManyToOne => run_many_to_one(&config, &params, &mut rec),
        Mode::Martingales => run_martingales(&config, &params, &mut rec),
        Mode::ExpansionThm1 | Mode::ExpansionThm2 => run_expansion(mode, &config, &params, &mut rec),
        Mode::MomentGrowth => run_moment_growth(&config, &params, &mut rec),
    }
    .and_then(|()| rec.write_checks(mode));

    let outputs = rec.files.iter().map(|p| OutputFile::digest(&rec.out_dir, p)).collect::<Result<Vec<_>, _>>();
    let (outputs, result) = match (outputs, result) {
        (Ok(outputs), result) => (outputs, result),
        (Err(e), Ok(())) => (Vec::new(), Err(e)),
        (Err(_), Err(e)) => (Vec::new(), Err(e)),
    };
    let checks_pass = rec.checks.iter().all(|c| c.passed);
    let exit_code = match &result {
        Err(e) => e.exit_code(),
        Ok(()) if checks_pass => 0,
        Ok(()) => 1,
    };
    let manifest = RunManifest {
        tool: "bbm".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode: mode.name().into(),
        config,
        workers: rec.workers,
        cap: rec.cap,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        peak_rss_bytes: peak_rss_bytes(),
        seeds: rec.seeds,
        outputs,
        checks: rec.checks,
        passed: result.is_ok() && checks_pass,
        error: result.as_ref().err().map(|e| e.to_string()),
        exit_code,
    };
    let manifest_path = manifest.write_atomic(&ctx.out_dir)?;
    result.map(|()| RunOutcome { manifest, manifest_path })
}

struct Recorder {
    out_dir: PathBuf,
    workers: usize,
    cap: usize,
    files: Vec<PathBuf>,
    checks: Vec<Check>,
    seeds: Vec<SeedStatus>,
}

impl Recorder {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn sim_options(&self, workers: usize) -> SimOptions {
        SimOptions { workers, cap: self.cap, record_lifetimes: false }
    }

    /// Runs `job(seed, workers)` for every seed. With several seeds the
    /// seeds are spread over the worker pool and each simulation is
    /// single-threaded; a lone seed gets every worker. Results, statuses and
    /// files are recorded in seed order, and the first failing seed in that
    /// order decides the returned error.
    fn for_each_seed<T, F>(&mut self, seeds: &[u64], job: F) -> Result<Vec<T>, RunError>
    where
        T: Send,
        F: Fn(u64, usize) -> Result<(T, Vec<PathBuf>), RunError> + Sync,
    {
        let results: Vec<Result<(T, Vec<PathBuf>), RunError>> = if seeds.len() == 1 {
            vec![job(seeds[0], self.workers)]
        } else {
            self.pool()?.install(|| seeds.par_iter().map(|&seed| job(seed, 1)).collect())
        };
        let mut values = Vec::with_capacity(results.len());
        let mut first_error = None;
        for (&seed, result) in seeds.iter().zip(results) {
            let status = match result {
                Ok((value, files)) => {
                    values.push(value);
                    self.files.extend(files);
                    "ok".to_string()
                }
                Err(e) => {
                    let status = format!("error: {e}");
                    first_error.get_or_insert(e);
                    status
                }
            };
            self.seeds.push(SeedStatus { seed: seed.to_string(), status });
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(values),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, RunError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| RunError::config("options.workers", e))
    }

    fn write_checks(&mut self, mode: Mode) -> Result<(), RunError> {
        if self.checks.is_empty() {
            return Ok(());
        }
        let (name, column) = match mode {
            Mode::VerifySpecfun => ("specfun.csv", "max_error"),
            _ => ("checks.csv", "value"),
        };
        let path = self.path(name);
        let file = File::create(&path).map_err(RunError::io(&path))?;
        write_checks(BufWriter::new(file), column, &self.checks).map_err(RunError::io(&path))?;
        self.files.push(path);
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(RunError::io(path))
}

fn simulate_seed(params: &ModelParams, schedule: &[f64], seed: u64, options: &SimOptions) -> Result<Trajectory, RunError> {
    simulate_with(params, schedule, seed, options).map_err(|e| RunError::from_seed(seed, e))
}

fn run_simulate(config: &ExperimentConfig, params: &ModelParams, rec: &mut Recorder) -> Result<(), RunError> {
    let schedule = config.schedule();
    let out_dir = rec.out_dir.clone();
    let base = rec.sim_options(1);
    rec.for_each_seed(&config.seeds.expand(), |seed, workers| {
        let options = SimOptions { workers, ..base.clone() };
        let traj = simulate_seed(params, &schedule, seed, &options)?;
        let mut files = Vec::new();
        for (i, snap) in traj.snapshots.iter().enumerate() {
            let path = out_dir.join(format!("snapshot_s{seed}_{i:03}.csv"));
            snap.save(&path).map_err(|e| RunError::from_seed(seed, e))?;
            files.push(path);
        }
        Ok(((), files))
    })?;
    Ok(())
}

fn run_specfun(rec: &mut Recorder) -> Result<(), RunError> {
    rec.checks = specfun_checks();
    Ok(())
}

fn run_many_to_one(config: &ExperimentConfig, params: &ModelParams, rec: &mut Recorder) -> Result<(), RunError> {
    let Seeds::Range { base, count } = config.seeds else {
        return Err(RunError::config("seeds", "verify-many-to-one takes the `{base, count}` form"));
    };
    let t = config.options.t.expect("validated").0;
    let b = config.options.b.clone().unwrap_or_else(|| vec![0.0; params.d]);
    let suite = SuiteFunctional::standard_suite(params, &b);
    let quadrature = QuadratureOptions { nodes: config.options.nodes.unwrap_or(64), ..QuadratureOptions::default() };
    let rows = rec.pool()?.install(|| verify_many_to_one(params, t, &suite, base.0, count, &quadrature));
    let range = format!("{}..={}", base.0, base.0.wrapping_add(count.saturating_sub(1) as u64));
    let rows = match rows {
        Ok(rows) => {
            rec.seeds.push(SeedStatus { seed: range, status: "ok".into() });
            rows
        }
        Err(e) => {
            rec.seeds.push(SeedStatus { seed: range, status: format!("error: {e}") });
            return Err(match e {
                bbm_core::Error::PopulationCapExceeded { cap, time, partial } => {
                    RunError::PopulationCap { seed: partial.seed, cap, time }
                }
                e => e.into(),
            });
        }
    };
    let path = rec.path("many_to_one.csv");
    write_many_to_one_csv(create(&path)?, &rows)?;
    rec.files.push(path);
    for row in &rows {
        rec.checks.push(Check::below(format!("abs_zscore[{}]", row.functional), row.z_score.abs(), 3.0));
    }
    Ok(())
}

fn run_martingales(config: &ExperimentConfig, params: &ModelParams, rec: &mut Recorder) -> Result<(), RunError> {
    let schedule = config.schedule();
    let ks = MultiIndex::up_to(params.d, config.options.max_order.unwrap_or(2));
    let out_dir = rec.out_dir.clone();
    let base = rec.sim_options(1);
    let seeds = config.seeds.expand();
    // per seed: values[time][k] and the recent Cauchy increment per k
    let per_seed = rec.for_each_seed(&seeds, |seed, workers| {
        let options = SimOptions { workers, ..base.clone() };
        let traj = simulate_seed(params, &schedule, seed, &options)?;
        let series = martingale_series(&traj, &ks).map_err(|e| RunError::from_seed(seed, e))?;
        drop(traj);
        let path = out_dir.join(format!("martingales_s{seed}.csv"));
        write_martingale_csv(create(&path)?, &series)?;
        let values: Vec<Vec<f64>> =
            (0..schedule.len()).map(|ti| series.iter().map(|s| s.samples[ti].1).collect()).collect();
        let cauchy: Vec<f64> = series
            .iter()
            .map(|s| s.recent_increment(3) / s.last().map_or(1.0, |(_, v)| v.abs().max(1.0)))
            .collect();
        Ok(((values, cauchy), vec![path]))
    })?;

    let path = rec.path("martingales_summary.csv");
    let mut lines = String::from("time,k_multiindex,mean,std_error,zscore\n");
    for (ti, time) in schedule.iter().enumerate() {
        for (ki, k) in ks.iter().enumerate() {
            let acc: MeanSe = per_seed.iter().map(|(v, _)| v[ti][ki]).collect();
            let target = if k.is_zero() { 1.0 } else { 0.0 };
            let z = acc.z_score(target);
            lines.push_str(&format!("{time},{k},{:.16e},{:.16e},{z:.6}\n", acc.mean(), acc.std_error()));
            if per_seed.len() > 1 {
                rec.checks.push(Check::below(format!("abs_zscore[t={time};k={k}]"), z.abs(), 3.0));
            }
        }
    }
    fs::write(&path, lines).map_err(RunError::io(&path))?;
    rec.files.push(path);

    if let Some(tol) = config.options.cauchy_tol {
        for (ki, k) in ks.iter().enumerate() {
            let worst = per_seed.iter().map(|(_, c)| c[ki]).fold(0.0, f64::max);
            rec.checks.push(Check::below(format!("cauchy_increment[k={k}]"), worst, tol));
        }
    }
    Ok(())
}

fn run_expansion(mode: Mode, config: &ExperimentConfig, params: &ModelParams, rec: &mut Recorder) -> Result<(), RunError> {
    let schedule = config.schedule();
    let m = config.options.m.expect("validated");
    let b = config.options.b.clone().expect("validated");
    let target = match mode {
        Mode::ExpansionThm1 => Target::HalfSpace { b },
        _ => Target::Box { a: config.options.a.clone().expect("validated"), b },
    };
    let out_dir = rec.out_dir.clone();
    let base = rec.sim_options(1);
    let params_echo = &config.params;
    let reports: Vec<ExpansionReport> = rec.for_each_seed(&config.seeds.expand(), |seed, workers| {
        let options = SimOptions { workers, ..base.clone() };
        let traj = simulate_seed(params, &schedule, seed, &options)?;
        let report = residual_report(&traj, m, &target).map_err(|e| RunError::from_seed(seed, e))?;
        drop(traj);
        let csv = out_dir.join(format!("expansion_s{seed}.csv"));
        report.write_csv(create(&csv)?)?;
        let slopes: serde_json::Map<String, serde_json::Value> =
            report.slopes.iter().enumerate().map(|(ell, s)| (format!("r{ell}"), json!(s))).collect();
        let limits: serde_json::Map<String, serde_json::Value> =
            report.limits.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let summary = json!({
            "slopes": slopes,
            "horizon": report.horizon,
            "seed": seed.to_string(),
            "params": params_echo,
            "order": m,
            "target": report.target,
            "times": report.times,
            "limits": limits,
        });
        let path = out_dir.join(format!("expansion_s{seed}.json"));
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        fs::write(&path, text).map_err(RunError::io(&path))?;
        Ok((report, vec![csv, path]))
    })?;

    let path = rec.path("expansion_summary.csv");
    let mut lines = String::from("s,ell,median_abs_residual,seeds\n");
    let medians: Vec<Vec<f64>> = (0..schedule.len())
        .map(|i| {
            (0..=m)
                .map(|ell| median(&reports.iter().map(|r| r.residual(i, ell).abs()).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    for (i, s) in schedule.iter().enumerate() {
        for (ell, med) in medians[i].iter().enumerate() {
            lines.push_str(&format!("{s},{ell},{med:.16e},{}\n", reports.len()));
        }
    }
    fs::write(&path, lines).map_err(RunError::io(&path))?;
    rec.files.push(path);

    let last = schedule.len() - 1;
    match mode {
        Mode::ExpansionThm1 => {
            let decreasing =
                reports.iter().filter(|r| r.residual(last, 0).abs() < r.residual(0, 0).abs()).count();
            rec.checks.push(Check::at_least("r0_decreasing_fraction", decreasing as f64 / reports.len() as f64, 0.75));
            if m >= 1 {
                rec.checks.push(Check::at_most("median_r1_over_median_r0_at_last_s", medians[last][1] / medians[last][0], 1.0));
            }
        }
        _ => {
            let worst_step = medians.windows(2).map(|w| w[1][0] / w[0][0]).fold(0.0, f64::max);
            rec.checks.push(Check::below("median_r0_largest_step_ratio", worst_step, 1.0));
        }
    }
    Ok(())
}

/// `(w + 1) log^{1+λ}(w + 1)`.
pub fn moment_functional(w: f64, lambda: f64) -> f64 {
    (w + 1.0) * (w + 1.0).ln().powf(1.0 + lambda)
}

fn run_moment_growth(config: &ExperimentConfig, params: &ModelParams, rec: &mut Recorder) -> Result<(), RunError> {
    let schedule = config.schedule();
    let lambda = config.options.lambda.expect("validated");
    let base = rec.sim_options(1);
    let per_seed = rec.for_each_seed(&config.seeds.expand(), |seed, workers| {
        let options = SimOptions { workers, ..base.clone() };
        let traj = simulate_seed(params, &schedule, seed, &options)?;
        let values: Vec<f64> =
            traj.snapshots.iter().map(|s| moment_functional(additive_martingale(s, params), lambda)).collect();
        Ok((values, Vec::new()))
    })?;

    let path = rec.path("moment_growth.csv");
    let mut lines = String::from("t,estimate,std_error,ratio\n");
    let mut ratios = Vec::with_capacity(schedule.len());
    for (i, t) in schedule.iter().enumerate() {
        let acc: MeanSe = per_seed.iter().map(|v| v[i]).collect();
        let ratio = acc.mean() / (t + 1.0);
        ratios.push(ratio);
        lines.push_str(&format!("{t},{:.16e},{:.16e},{ratio:.16e}\n", acc.mean(), acc.std_error()));
    }
    fs::write(&path, lines).map_err(RunError::io(&path))?;
    rec.files.push(path);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    rec.checks.push(Check::below("ratio_max_over_min", max / min, 10.0));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_functional_at_unit_mass() {
        let two_log2 = 2.0 * std::f64::consts::LN_2;
        assert!((moment_functional(1.0, 1.0) - 2.0 * std::f64::consts::LN_2.powi(2)).abs() < 1e-15);
        assert!((moment_functional(1.0, 0.0) - two_log2).abs() < 1e-15);
        assert_eq!(moment_functional(0.0, 3.0), 0.0);
    }
}
