//! Multiple successor maps arbitrated by online nonparametric inference over
//! clustered reward functions, together with the baselines, task environments
//! and analysis routines used to evaluate them.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`], [`rng`] and [`config`] hold the shared vocabulary.
//! * [`sr`] implements tabular successor maps and their TD learning.
//! * [`crfilter`] turns rewards into convolved-reward observations and runs
//!   the particle filter over reward contexts.
//! * [`replay`] holds per-context replay memories.
//! * [`envs`] provides the grid, puddle, continuous, foraging and Y-maze tasks.
//! * [`neural`] provides successor networks for the continuous maze.
//! * [`agents`] assembles all of the above into the agent zoo.
//! * [`analysis`] and [`harness`] run experiments and compute statistics.
//! * [`oracle`] holds analytic cross-checks of the learning rules.

pub mod agents;
pub mod analysis;
pub mod config;
pub mod crfilter;
pub mod domain;
pub mod envs;
pub mod error;
pub mod harness;
pub mod neural;
pub mod oracle;
pub mod replay;
pub mod rng;
pub mod sr;

pub use config::{AgentKind, OffsetMode, Profile, RunConfig, UpdatePolicy};
pub use domain::{one_hot, Action, Transition};
pub use error::{BsrError, Result};
