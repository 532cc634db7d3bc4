//! Joint-differentially-private sparse linear contextual bandits.
//!
//! The crate is layered bottom-up:
//!
//! * [`math`]: dense vectors, design matrices, clipping, L1-ball projection
//!   and support utilities.
//! * [`noise`]: hierarchical, counter-based random streams with Laplace and
//!   Gaussian samplers.
//! * [`peeling`]: the (ε, δ)-DP top-s selection mechanism.
//! * [`niht`]: noisy iterative hard thresholding, a private sparse
//!   least-squares estimator built on peeling.
//! * [`bandit`]: the sparse linear contextual bandit simulator.
//! * [`policy`]: the episodic FLIPHAT policy (doubling, forgetting, refits).
//! * [`ledger`]: structural privacy accounting for a policy run.

pub mod bandit;
pub mod error;
pub mod ledger;
pub mod math;
pub mod niht;
pub mod noise;
pub mod peeling;
pub mod policy;

pub use error::{Error, Result};
