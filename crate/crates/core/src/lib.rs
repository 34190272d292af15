//! Coverage control for agents on the unit interval in a nonuniform field.
//!
//! Two distributed control laws drive n agents towards the configuration
//! that minimizes the worst-case rho-distance to the nearest agent:
//!
//! * [`static_law`]: every agent moves to a weighted median of its
//!   neighbours. Mass gaps then evolve linearly, and the rate is governed by
//!   the spectrum computed in [`spectral`]. Convergence takes O(n^2 log)
//!   rounds.
//! * [`lifted`]: agents carry two mass variables, diffuse them along a
//!   lifted nonreversible Markov chain, and pass a movement token left to
//!   right. Convergence takes O(n log) rounds.
//!
//! [`harness`] runs experiments, sweeps and scaling fits on top of both.

pub mod density;
pub mod error;
pub mod harness;
pub mod lifted;
pub mod rng;
pub mod spectral;
pub mod static_law;

pub use density::{AgentConfiguration, DensityField, DensitySpec};
pub use error::{CoverageError, Result};
pub use harness::{ExperimentTrace, InitMode, Law, StopFired, StopRule, SweepTable};
pub use lifted::{ChainVariant, DynamicParams, DynamicState, LiftedChain, MovementRule};
pub use spectral::TridiagonalSystem;
pub use static_law::GapVector;
