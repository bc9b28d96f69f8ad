//! Sparse linear contextual bandits built around a doubly robust Lasso
//! policy.
//!
//! The crate provides:
//!
//! - [`lasso`]: an L1-penalized least-squares solver (cyclic coordinate
//!   descent with soft thresholding), shared by every learning policy;
//! - [`env`]: a synthetic environment with correlated contexts, a sparse
//!   true parameter, and Gaussian reward noise;
//! - [`policy`]: the doubly robust Lasso bandit, which averages contexts
//!   over arms and trains a single estimator on importance-corrected
//!   pseudo-rewards from every round;
//! - [`baselines`]: an inverse-propensity-only pseudo-reward, a
//!   forced-sampling Lasso bandit on the stacked per-arm parameterization,
//!   and trivial uniform / greedy / oracle reference policies;
//! - [`diagnostics`]: compatibility-constant estimation, estimation-error
//!   tracking against its theoretical envelope, and streaming variance;
//! - [`harness`]: seeded replication runs, quantile aggregation, and CSV
//!   artifacts behind the `drlasso` command-line binary.

pub mod baselines;
pub mod diagnostics;
pub mod env;
pub mod harness;
pub mod lasso;
pub mod policy;
pub mod seeds;
