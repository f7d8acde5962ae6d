//! Approximate consensus of multi-agent networks under stochastic topology.
//!
//! Agents run a local voting protocol with a nonvanishing step size while
//! their links switch at random and their measurements of each other are
//! noisy and delayed. The crate provides:
//!
//! * [`graph`]: weighted digraphs, Laplacians and spectral consensus certificates,
//! * [`topology`]: the random link/weight/delay/noise model and its averaged matrix,
//! * [`consensus`]: the closed-loop stochastic simulator,
//! * [`averaged`]: the deterministic averaged models, ε-consensus times and
//!   the explicit approximation constants,
//! * [`load_balancing`]: the queue/productivity application,
//! * [`harness`]: scenario files, replication, sweeps and CSV artifacts.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaged;
pub mod consensus;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod load_balancing;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
