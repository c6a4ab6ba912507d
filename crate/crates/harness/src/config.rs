//! Experiment configuration: one JSON document per run.
//!
//! Seeds and schedule times are written as decimal strings so that they
//! survive any JSON tooling bit-for-bit; other numbers are plain JSON
//! numbers.
//!
//! ```json
//! {
//!   "mode": "expansion-thm1",
//!   "params": { "d": 1, "beta": 1.0, "offspring": [[2, 1.0]], "theta": [0.0] },
//!   "schedule": ["6", "8", "10", "12"],
//!   "seeds": { "base": "1", "count": 50 },
//!   "options": { "b": [0.0], "m": 1 }
//! }
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use bbm_core::sim::{estimate_population, validate_schedule, DEFAULT_POPULATION_CAP};
use bbm_core::{ModelParams, OffspringLaw};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::RunError;

/// Largest expansion order accepted.
pub const MAX_ORDER: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    VerifySpecfun,
    VerifyManyToOne,
    Martingales,
    ExpansionThm1,
    ExpansionThm2,
    MomentGrowth,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::VerifySpecfun => "verify-specfun",
            Mode::VerifyManyToOne => "verify-many-to-one",
            Mode::Martingales => "martingales",
            Mode::ExpansionThm1 => "expansion-thm1",
            Mode::ExpansionThm2 => "expansion-thm2",
            Mode::MomentGrowth => "moment-growth",
        }
    }

    fn simulates(self) -> bool {
        !matches!(self, Mode::VerifySpecfun)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A number carried as a decimal string. Parsing is correctly rounded and
/// formatting is shortest-round-trip, so string → value → string is stable.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Decimal<T>(pub T);

impl<T: fmt::Display> Serialize for Decimal<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&self.0)
    }
}

impl<'de, T> Deserialize<'de> for Decimal<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct DecimalVisitor<T>(std::marker::PhantomData<T>);

        impl<T> Visitor<'_> for DecimalVisitor<T>
        where
            T: FromStr,
            T::Err: fmt::Display,
        {
            type Value = Decimal<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal string")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                v.trim().parse::<T>().map(Decimal).map_err(|e| E::custom(format!("`{v}`: {e}")))
            }
        }

        deserializer.deserialize_str(DecimalVisitor(std::marker::PhantomData))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub d: usize,
    #[serde(default = "one")]
    pub beta: f64,
    /// `(k, p_k)` pairs.
    #[serde(default = "binary")]
    pub offspring: Vec<(usize, f64)>,
    /// Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn binary() -> Vec<(usize, f64)> {
    vec![(2, 1.0)]
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig { d: 1, beta: 1.0, offspring: binary(), theta: None }
    }
}

impl ParamsConfig {
    pub fn build(&self) -> Result<ModelParams, RunError> {
        let law = OffspringLaw::from_pairs(&self.offspring).map_err(|e| RunError::config("params.offspring", e))?;
        let theta = self.theta.clone().unwrap_or_else(|| vec![0.0; self.d]);
        ModelParams::new(self.d, self.beta, law, theta).map_err(|e| RunError::config("params", e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List { list: Vec<Decimal<u64>> },
    Range { base: Decimal<u64>, count: usize },
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Range { base: Decimal(1), count: 1 }
    }
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::List { list } => list.iter().map(|s| s.0).collect(),
            Seeds::Range { base, count } => (0..*count as u64).map(|i| base.0.wrapping_add(i)).collect(),
        }
    }
}

/// Options read by some modes only; unused ones are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeOptions {
    /// Half-space threshold, or upper box corner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// Lower box corner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    /// Expansion order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    /// Largest `|k|` of the Hermite martingales to tabulate (default 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<u32>,
    /// Exponent in the `(W+1) log^{1+λ}(W+1)` moment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Observation time of the many-to-one check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Decimal<f64>>,
    /// Quadrature nodes per axis (default 64).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// Tolerance of the empirical Cauchy check on martingale increments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cauchy_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must agree with the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub schedule: Vec<Decimal<f64>>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub options: ModeOptions,
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        ExperimentConfig {
            mode: Some(mode),
            params: ParamsConfig::default(),
            schedule: Vec::new(),
            seeds: Seeds::default(),
            options: ModeOptions::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::config("config", e))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::config("config", format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn schedule(&self) -> Vec<f64> {
        self.schedule.iter().map(|t| t.0).collect()
    }

    pub fn cap(&self) -> usize {
        self.options.cap.unwrap_or(DEFAULT_POPULATION_CAP)
    }

    pub fn workers(&self) -> usize {
        self.options.workers.unwrap_or(1)
    }

    /// Checks every invariant that can be checked before running, reporting
    /// the first offending field.
    pub fn validate(&self, mode: Mode) -> Result<ModelParams, RunError> {
        if let Some(declared) = self.mode {
            if declared != mode {
                return Err(RunError::config("mode", format!("config is for `{declared}`, not `{mode}`")));
            }
        }
        let params = self.params.build()?;
        if mode == Mode::VerifySpecfun {
            return Ok(params);
        }
        params.check_admissible().map_err(|e| RunError::config("params.theta", e))?;
        if self.workers() == 0 {
            return Err(RunError::config("options.workers", "must be at least 1"));
        }
        if self.seeds.expand().is_empty() {
            return Err(RunError::config("seeds", "no seeds given"));
        }
        if let Some(m) = self.options.m {
            if m > MAX_ORDER {
                return Err(RunError::config("options.m", format!("order {m} exceeds {MAX_ORDER}")));
            }
        }

        let horizon = match mode {
            Mode::VerifyManyToOne => {
                let t = self.options.t.ok_or_else(|| RunError::config("options.t", "required"))?.0;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(RunError::config("options.t", format!("must be positive, got {t}")));
                }
                t
            }
            _ => {
                let schedule = self.schedule();
                validate_schedule(&schedule).map_err(|e| RunError::config("schedule", e))?;
                *schedule.last().expect("validated non-empty")
            }
        };
        if mode.simulates() {
            let expected = estimate_population(&params, horizon);
            if expected > self.cap() as f64 {
                return Err(RunError::config(
                    "schedule",
                    format!("expected population {expected:.3e} at t = {horizon} exceeds the cap {}", self.cap()),
                ));
            }
        }

        let d = params.d;
        let vector = |name: &'static str, v: &Option<Vec<f64>>| -> Result<Vec<f64>, RunError> {
            let v = v.clone().ok_or_else(|| RunError::config(name, "required"))?;
            if v.len() != d {
                return Err(RunError::config(name, format!("expected {d} entries, found {}", v.len())));
            }
            Ok(v)
        };
        match mode {
            Mode::ExpansionThm1 | Mode::ExpansionThm2 => {
                if self.schedule.len() < 4 {
                    return Err(RunError::config("schedule", "expansions need at least 4 times"));
                }
                if self.options.m.is_none() {
                    return Err(RunError::config("options.m", "required"));
                }
                let b = vector("options.b", &self.options.b)?;
                if mode == Mode::ExpansionThm2 {
                    let a = vector("options.a", &self.options.a)?;
                    if let Some(j) = (0..d).find(|&j| !(a[j] < b[j])) {
                        return Err(RunError::config("options.a", format!("a[{j}] must be below b[{j}]")));
                    }
                }
            }
            Mode::VerifyManyToOne => {
                if self.options.b.is_some() {
                    vector("options.b", &self.options.b)?;
                }
            }
            Mode::MomentGrowth => {
                let lambda = self.options.lambda.ok_or_else(|| RunError::config("options.lambda", "required"))?;
                if !(lambda >= 0.0) {
                    return Err(RunError::config("options.lambda", format!("must be >= 0, got {lambda}")));
                }
            }
            Mode::Martingales => {
                if self.options.max_order.unwrap_or(2) > 8 {
                    return Err(RunError::config("options.max_order", "at most 8"));
                }
            }
            Mode::Simulate | Mode::VerifySpecfun => {}
        }
        Ok(params)
    }
}
