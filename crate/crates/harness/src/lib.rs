//! Experiment runner for the branching Brownian motion toolkit.
//!
//! A run takes an [`ExperimentConfig`], fans its seeds across a worker pool,
//! writes CSV and JSON outputs into one directory and finishes with a
//! [`RunManifest`] carrying SHA-256 digests of everything it wrote. The
//! `bbm` binary is a thin command-line layer over [`run`].
//!
//! ```no_run
//! use bbm_harness::{run, ExperimentConfig, Mode, RunContext};
//! let config = ExperimentConfig::from_json(r#"{
//!     "params": { "d": 1 },
//!     "schedule": ["1", "2"],
//!     "seeds": { "list": ["7"] }
//! }"#).unwrap();
//! let ctx = RunContext { out_dir: "out".into(), ..RunContext::default() };
//! let outcome = run(Mode::Simulate, &config, &ctx).unwrap();
//! assert_eq!(outcome.manifest.outputs.len(), 2);
//! ```

pub mod config;
mod error;
pub mod manifest;
mod run;
pub mod specfun_suite;

pub use config::{ExperimentConfig, Mode};
pub use error::RunError;
pub use manifest::{Check, RunManifest};
pub use run::{moment_functional, run, RunContext, RunOutcome};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book {}
