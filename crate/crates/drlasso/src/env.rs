//! Synthetic sparse linear bandit environment.
//!
//! Each round presents `N` context vectors in `R^d` whose features are
//! equicorrelated across arms: feature `j` of the arms is a joint Gaussian
//! vector with unit variances and pairwise covariance `rho2`. Expected
//! rewards are linear in a sparse parameter `beta` (exactly `s0` nonzero
//! entries), and realized rewards add i.i.d. Gaussian noise. The arm index
//! space is zero-based throughout.
//!
//! Defaults deliberately leave contexts and parameter unnormalized (their
//! norms routinely exceed 1); opt-in flags rescale them onto the unit ball
//! for experiments that want the bounded-norm regime instead.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment shape and distributional parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    /// Number of arms `N`.
    pub n_arms: usize,
    /// Context dimension `d`.
    pub dim: usize,
    /// Number of nonzero entries `s0` of the true parameter.
    pub sparsity: usize,
    /// Cross-arm covariance `rho2` of each feature (the correlation, since
    /// variances are 1). Must lie in `[0, 1]`.
    pub cross_arm_correlation: f64,
    /// Standard deviation of the additive reward noise.
    pub noise_sd: f64,
    /// Stream seed used when the environment is driven standalone; the
    /// harness overrides it per replication.
    pub seed: u64,
    /// Rescale every context row onto the unit L2 ball (divide by
    /// `max(1, norm)`).
    pub normalize_contexts: bool,
    /// Rescale the true parameter onto the unit L2 ball.
    pub normalize_beta: bool,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            n_arms: 20,
            dim: 100,
            sparsity: 5,
            cross_arm_correlation: 0.7,
            noise_sd: 0.05,
            seed: 0,
            normalize_contexts: false,
            normalize_beta: false,
        }
    }
}

/// Configuration rejection, naming the offending field.
#[derive(Debug, Error)]
#[error("invalid environment config: {field} {message}")]
pub struct EnvConfigError {
    pub field: &'static str,
    pub message: String,
}

impl EnvironmentConfig {
    /// Checks the cross-field invariants not expressible in the types.
    pub fn validate(&self) -> Result<(), EnvConfigError> {
        let fail = |field, message: String| Err(EnvConfigError { field, message });
        if self.n_arms == 0 {
            return fail("n_arms", "must be at least 1".into());
        }
        if self.dim == 0 {
            return fail("dim", "must be at least 1".into());
        }
        if self.sparsity > self.dim {
            return fail(
                "sparsity",
                format!("must be at most dim ({} > {})", self.sparsity, self.dim),
            );
        }
        let rho2 = self.cross_arm_correlation;
        if !(0.0..=1.0).contains(&rho2) || rho2.is_nan() {
            return fail(
                "cross_arm_correlation",
                format!("must lie in [0, 1], got {rho2}"),
            );
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return fail(
                "noise_sd",
                format!("must be finite and nonnegative, got {}", self.noise_sd),
            );
        }
        Ok(())
    }
}

/// One round's contexts: row `i` is arm `i`'s feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    data: Vec<f64>,
    n_arms: usize,
    dim: usize,
}

impl ContextSet {
    /// Wraps a row-major `n_arms x dim` matrix. Panics if the buffer does
    /// not match the shape or contains non-finite entries; contexts are
    /// produced internally, so a violation is a construction bug.
    pub fn new(data: Vec<f64>, n_arms: usize, dim: usize) -> Self {
        assert!(n_arms > 0 && dim > 0, "context set must be non-empty");
        assert_eq!(data.len(), n_arms * dim, "shape mismatch");
        assert!(
            data.iter().all(|v| v.is_finite()),
            "contexts must be finite"
        );
        ContextSet { data, n_arms, dim }
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Arm `i`'s context row.
    pub fn arm(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The across-arms average context `mean_i b_i`.
    pub fn average(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.dim];
        for i in 0..self.n_arms {
            for (a, &x) in avg.iter_mut().zip(self.arm(i)) {
                *a += x;
            }
        }
        let scale = 1.0 / self.n_arms as f64;
        avg.iter_mut().for_each(|a| *a *= scale);
        avg
    }

    /// Flat row-major view of all rows.
    pub fn rows_flat(&self) -> &[f64] {
        &self.data
    }
}

/// The environment's sparse linear parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParameter {
    /// Dense coefficient vector of length `dim`.
    pub beta: Vec<f64>,
    /// Sorted indices of the nonzero coefficients.
    pub support: Vec<usize>,
}

/// Draws the true parameter: a support of `sparsity` coordinates chosen
/// uniformly without replacement, each loaded with an independent
/// uniform value in `(0, 1]` (zero draws are nudged to keep the support
/// size exact), then optionally rescaled onto the unit ball.
pub fn sample_beta(config: &EnvironmentConfig, rng: &mut impl Rng) -> TrueParameter {
    let mut support = rand::seq::index::sample(rng, config.dim, config.sparsity).into_vec();
    support.sort_unstable();
    let mut beta = vec![0.0; config.dim];
    for &j in &support {
        // 1 - U is uniform on (0, 1]: the support stays exactly s0-sized.
        beta[j] = 1.0 - rng.random::<f64>();
    }
    if config.normalize_beta {
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > 1.0 {
            beta.iter_mut().for_each(|b| *b /= norm);
        }
    }
    TrueParameter { beta, support }
}

/// Draws one round of contexts. Feature `j` across the arms is the
/// Gaussian vector `b_{ij} = rho * z_j + sqrt(1 - rho^2) * e_{ij}` with a
/// shared `z_j` and independent `e_{ij}`, giving unit variances and exact
/// pairwise covariance `rho2 = rho^2`. A fixed draw order (per feature:
/// the shared term, then every arm's private term) keeps streams aligned
/// across configurations.
pub fn sample_context_set(config: &EnvironmentConfig, rng: &mut impl Rng) -> ContextSet {
    let (n, d) = (config.n_arms, config.dim);
    let rho = config.cross_arm_correlation.sqrt();
    let private_scale = (1.0 - config.cross_arm_correlation).sqrt();
    let mut data = vec![0.0; n * d];
    for j in 0..d {
        let shared: f64 = rng.sample(rand_distr::StandardNormal);
        for i in 0..n {
            let private: f64 = rng.sample(rand_distr::StandardNormal);
            data[i * d + j] = rho * shared + private_scale * private;
        }
    }
    if config.normalize_contexts {
        for i in 0..n {
            let row = &mut data[i * d..(i + 1) * d];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    ContextSet::new(data, n, d)
}

/// Draws the full reward vector `r_i = b_i' beta + noise`. The harness is
/// responsible for revealing only the chosen arm's entry to policies.
pub fn realize_rewards(
    contexts: &ContextSet,
    beta: &TrueParameter,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    (0..contexts.n_arms())
        .map(|i| {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            expected_reward(contexts, &beta.beta, i) + noise_sd * noise
        })
        .collect()
}

/// Expected reward `b_i' beta` of one arm.
pub fn expected_reward(contexts: &ContextSet, beta: &[f64], arm: usize) -> f64 {
    contexts
        .arm(arm)
        .iter()
        .zip(beta)
        .map(|(x, b)| x * b)
        .sum()
}

/// The argmax arm by expected reward and its value; exact ties resolve to
/// the lowest index.
pub fn best_arm(contexts: &ContextSet, beta: &TrueParameter) -> (usize, f64) {
    let mut best = (0, expected_reward(contexts, &beta.beta, 0));
    for i in 1..contexts.n_arms() {
        let value = expected_reward(contexts, &beta.beta, i);
        if value > best.1 {
            best = (i, value);
        }
    }
    best
}
