//! Branching Brownian motion in `R^d`: an exact event-driven simulator, the
//! additive measures and Hermite martingales evaluated on its snapshots, the
//! spine change of measure, and the asymptotic expansions of the additive
//! measure built from the martingale limits.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doc-tests of this crate.
//!
//! ```
//! use bbm_core::{measures, sim::{simulate, ModelParams}};
//!
//! let params = ModelParams::binary(1);
//! let trajectory = simulate(&params, &[1.0, 2.0], 7, 1).unwrap();
//! let w = measures::additive_martingale(&trajectory.snapshots[1], &params);
//! assert!(w > 0.0);
//! ```

mod error;
pub mod expansion;
pub mod measures;
pub mod multi_index;
pub mod offspring;
pub mod rng;
pub mod sim;
pub mod specfun;
pub mod spine;
pub mod stats;
pub mod sum;

pub use error::{Error, Result};
pub use multi_index::MultiIndex;
pub use offspring::{OffspringLaw, SizeBiasedLaw};
pub use sim::{ModelParams, Snapshot, Trajectory};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hermite.md")]
    mod hermite {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/spine.md")]
    mod spine {}
    #[doc = include_str!("../../../book/src/expansions.md")]
    mod expansions {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
