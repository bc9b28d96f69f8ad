//! The doubly robust Lasso bandit policy.
//!
//! The policy plays a short uniform warm-up phase, then gates each round
//! with a Bernoulli exploration coin whose rate decays like
//! `sqrt((ln t + ln d) / t)`: on exploration rounds the arm is uniform, on
//! exploitation rounds it is the greedy argmax under the current estimate.
//! The chosen arm's propensity is known exactly by construction, which
//! lets the policy convert each round's single observed reward into a
//! pseudo-reward for the across-arms *average* context,
//!
//! ```text
//! r_hat(t) = bbar(t)' beta_hat(t-1)
//!          + (1/N) * (r_a(t) - b_a(t)' beta_hat(t-1)) / propensity_a(t)
//! ```
//!
//! whose conditional expectation is `bbar(t)' beta` regardless of the
//! accuracy of `beta_hat` (the doubly robust property). Training on
//! `(bbar, r_hat)` pairs uses every round — there is no per-arm sample
//! splitting — so a single Lasso estimator sees `t` samples at round `t`.
//! Stored pseudo-rewards are clamped to `[-M, M]` to keep rare
//! small-propensity spikes from destabilizing early fits; an
//! inverse-propensity-only variant (no model term, no clamp) is available
//! as a contrast, sharing the identical selection path.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::ipw_pseudo_reward;
use crate::env::ContextSet;
use crate::lasso::{fit_lasso_with, LassoError, LassoProblem, SolverSettings};

/// Hyperparameters of the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrPolicyConfig {
    /// Exploration scale: the round-`t` exploration probability is
    /// `min(1, lambda1 * sqrt((ln t + ln d) / t))`. Zero disables
    /// exploration entirely (pure greedy).
    pub lambda1: f64,
    /// Regularization scale: the round-`t` Lasso penalty is
    /// `lambda2 * sqrt((ln t + ln d) / t)`.
    pub lambda2: f64,
    /// Length of the initial uniform phase.
    pub zt: usize,
    /// Clamp `M` applied to stored pseudo-rewards.
    pub truncation_bound: f64,
    /// Refit the estimator every this many rounds (1 = every round;
    /// larger values are purely a speed knob).
    pub refit_every: usize,
}

impl Default for DrPolicyConfig {
    /// Defaults from a pilot tuning grid on the reference setting
    /// (N=20, d=100, s0=5, correlation 0.7, T=2000): the pseudo-reward
    /// targets are heavy-tailed, so the penalty scale that works best
    /// sits well above what raw-reward regression would use.
    fn default() -> Self {
        DrPolicyConfig {
            lambda1: 0.5,
            lambda2: 1.5,
            zt: 20,
            truncation_bound: 10.0,
            refit_every: 1,
        }
    }
}

impl DrPolicyConfig {
    /// Checks hyperparameter ranges, naming the offending field.
    pub fn validate(&self) -> Result<(), PolicyError> {
        let fail = |field, message: String| Err(PolicyError::Config { field, message });
        if !self.lambda1.is_finite() || self.lambda1 < 0.0 {
            return fail("lambda1", format!("must be >= 0, got {}", self.lambda1));
        }
        if !self.lambda2.is_finite() || self.lambda2 <= 0.0 {
            return fail("lambda2", format!("must be > 0, got {}", self.lambda2));
        }
        if !self.truncation_bound.is_finite() || self.truncation_bound <= 0.0 {
            return fail(
                "truncation_bound",
                format!("must be > 0, got {}", self.truncation_bound),
            );
        }
        if self.refit_every == 0 {
            return fail("refit_every", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Policy-level errors.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy config: {field} {message}")]
    Config { field: &'static str, message: String },
    #[error("estimator refit failed: {0}")]
    Solver(#[from] LassoError),
    #[error("checkpoint is malformed: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

/// One selection: the chosen arm (zero-based), the probability with which
/// exactly this arm was chosen given the history, and whether the round
/// was exploratory (the Bernoulli gate fired, or the uniform phase).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmDecision {
    pub arm: usize,
    pub propensity: f64,
    pub explored: bool,
}

/// One training example: the across-arms average context and its
/// pseudo-reward. Samples built by [`pseudo_reward`] satisfy
/// `|pseudo_reward| <= truncation_bound`; the inverse-propensity variant
/// deliberately stores unclamped values.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample {
    pub avg_context: Vec<f64>,
    pub pseudo_reward: f64,
}

/// Which pseudo-reward the policy trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoRewardKind {
    /// Model term plus propensity-weighted correction, clamped.
    DoublyRobust,
    /// Propensity-weighted observed reward only, unclamped.
    InversePropensity,
}

/// Learner state: the estimate, the pseudo-sample store (kept as a
/// regression problem so refits reuse its accumulated statistics), and
/// the round counter.
#[derive(Debug, Clone)]
pub struct PolicyState {
    /// Current estimate; the zero vector before the first refit.
    pub beta_hat: Vec<f64>,
    /// Completed rounds.
    pub round: usize,
    data: LassoProblem,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DRLB";
const CHECKPOINT_VERSION: u32 = 1;

impl PolicyState {
    pub fn new(dim: usize) -> Self {
        PolicyState {
            beta_hat: vec![0.0; dim],
            round: 0,
            data: LassoProblem::new(dim, 0.0).expect("dim >= 1"),
        }
    }

    pub fn dim(&self) -> usize {
        self.beta_hat.len()
    }

    /// Number of stored pseudo-samples (equals `round`).
    pub fn store_len(&self) -> usize {
        self.data.num_samples()
    }

    /// Reconstructs the `idx`-th stored pseudo-sample.
    pub fn pseudo_sample(&self, idx: usize) -> PseudoSample {
        let sample = self.data.sample(idx);
        PseudoSample {
            avg_context: sample.features,
            pseudo_reward: sample.target,
        }
    }

    /// Writes the state as a flat little-endian binary checkpoint:
    /// magic `DRLB`, format version (u32), dim (u64), round (u64), the
    /// estimate (dim f64), the store length (u64), then each stored
    /// sample as dim+1 f64. Floats round-trip bit-exactly.
    pub fn save_to<W: Write>(&self, writer: &mut W) -> Result<(), PolicyError> {
        writer.write_all(CHECKPOINT_MAGIC)?;
        writer.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        writer.write_all(&(self.dim() as u64).to_le_bytes())?;
        writer.write_all(&(self.round as u64).to_le_bytes())?;
        for &b in &self.beta_hat {
            writer.write_all(&b.to_le_bytes())?;
        }
        writer.write_all(&(self.store_len() as u64).to_le_bytes())?;
        for idx in 0..self.store_len() {
            let sample = self.pseudo_sample(idx);
            for &x in &sample.avg_context {
                writer.write_all(&x.to_le_bytes())?;
            }
            writer.write_all(&sample.pseudo_reward.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a checkpoint written by [`PolicyState::save_to`].
    pub fn load_from<R: Read>(reader: &mut R) -> Result<Self, PolicyError> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(PolicyError::Checkpoint("bad magic bytes".into()));
        }
        let version = read_u32(reader)?;
        if version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let dim = read_u64(reader)? as usize;
        if dim == 0 {
            return Err(PolicyError::Checkpoint("dim must be positive".into()));
        }
        let round = read_u64(reader)? as usize;
        let mut beta_hat = vec![0.0; dim];
        for b in beta_hat.iter_mut() {
            *b = read_f64(reader)?;
        }
        let store_len = read_u64(reader)? as usize;
        if store_len != round {
            return Err(PolicyError::Checkpoint(format!(
                "store length {store_len} does not match round {round}"
            )));
        }
        let mut data = LassoProblem::new(dim, 0.0).expect("dim >= 1");
        let mut features = vec![0.0; dim];
        for _ in 0..store_len {
            for x in features.iter_mut() {
                *x = read_f64(reader)?;
            }
            let target = read_f64(reader)?;
            data.push_sample(&features, target)
                .map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        }
        Ok(PolicyState {
            beta_hat,
            round,
            data,
        })
    }
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32, PolicyError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(reader: &mut R) -> Result<u64, PolicyError> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(reader: &mut R) -> Result<f64, PolicyError> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// The exploration and regularization rates at round `t` with ambient
/// dimension `d`: `min(1, lambda1 * w)` and `lambda2 * w` with
/// `w = sqrt((ln t + ln d) / t)` (natural logarithms).
///
/// Panics if `t` or `d` is zero.
pub fn schedule_rates(t: usize, d: usize, config: &DrPolicyConfig) -> (f64, f64) {
    assert!(t >= 1, "schedule is defined for rounds t >= 1");
    assert!(d >= 1, "dimension must be positive");
    let w = (((t as f64).ln() + (d as f64).ln()) / t as f64).sqrt();
    ((config.lambda1 * w).min(1.0), config.lambda2 * w)
}

/// The theory-faithful uniform-phase length:
/// `ceil(max(3 ln d, ln(T^2 / delta_prime)) / c^2)` with
/// `c = min(0.5, phi1^2 / (256 s0))`, where `phi1` lower-bounds the
/// compatibility constant. Conservative by design; in practice the phase
/// length is treated as a tuning parameter.
pub fn default_zt(d: usize, horizon: usize, s0: usize, phi1: f64, delta_prime: f64) -> usize {
    assert!(d >= 1 && horizon >= 1 && s0 >= 1);
    assert!(phi1 > 0.0, "compatibility lower bound must be positive");
    assert!(
        (0.0..1.0).contains(&delta_prime) && delta_prime > 0.0,
        "delta_prime must lie in (0, 1)"
    );
    let c = (phi1 * phi1 / (256.0 * s0 as f64)).min(0.5);
    let first = 3.0 * (d as f64).ln() / (c * c);
    let second = ((horizon as f64).powi(2) / delta_prime).ln() / (c * c);
    first.max(second).ceil() as usize
}

/// Raw (pre-truncation) doubly robust pseudo-reward for the average
/// context, given the previous estimate.
pub fn dr_pseudo_reward_raw(
    contexts: &ContextSet,
    decision: &ArmDecision,
    observed_reward: f64,
    beta_prev: &[f64],
) -> f64 {
    assert!(
        decision.propensity > 0.0,
        "propensity must be positive (selection guarantees this)"
    );
    let n = contexts.n_arms() as f64;
    let avg = contexts.average();
    let model_term: f64 = avg.iter().zip(beta_prev).map(|(x, b)| x * b).sum();
    let chosen_pred: f64 = contexts
        .arm(decision.arm)
        .iter()
        .zip(beta_prev)
        .map(|(x, b)| x * b)
        .sum();
    model_term + (observed_reward - chosen_pred) / (n * decision.propensity)
}

/// The stored doubly robust pseudo-sample: the average context paired
/// with the raw pseudo-reward clamped to `[-M, M]`.
pub fn pseudo_reward(
    contexts: &ContextSet,
    decision: &ArmDecision,
    observed_reward: f64,
    beta_prev: &[f64],
    config: &DrPolicyConfig,
) -> PseudoSample {
    let raw = dr_pseudo_reward_raw(contexts, decision, observed_reward, beta_prev);
    let bound = config.truncation_bound;
    PseudoSample {
        avg_context: contexts.average(),
        pseudo_reward: raw.clamp(-bound, bound),
    }
}

/// A contextual bandit policy as the harness drives it: choose an arm,
/// then observe the chosen arm's reward. `t` is the one-based round
/// index, passed for cross-checking against internal counters.
pub trait BanditPolicy {
    fn name(&self) -> &str;
    fn select(&mut self, t: usize, contexts: &ContextSet, rng: &mut ChaCha12Rng) -> ArmDecision;
    fn observe(
        &mut self,
        t: usize,
        contexts: &ContextSet,
        decision: &ArmDecision,
        reward: f64,
    ) -> Result<(), PolicyError>;
    /// The current parameter estimate, for policies that maintain one.
    fn beta_hat(&self) -> Option<&[f64]> {
        None
    }
}

/// The doubly robust Lasso bandit (or its inverse-propensity variant).
#[derive(Debug, Clone)]
pub struct DrLassoBandit {
    config: DrPolicyConfig,
    estimator: PseudoRewardKind,
    state: PolicyState,
    solver: SolverSettings,
}

impl DrLassoBandit {
    /// Builds the doubly robust policy for contexts of dimension `dim`.
    pub fn new(dim: usize, config: DrPolicyConfig) -> Result<Self, PolicyError> {
        Self::with_estimator(dim, config, PseudoRewardKind::DoublyRobust)
    }

    /// Builds the policy with an explicit pseudo-reward strategy.
    pub fn with_estimator(
        dim: usize,
        config: DrPolicyConfig,
        estimator: PseudoRewardKind,
    ) -> Result<Self, PolicyError> {
        config.validate()?;
        Ok(DrLassoBandit {
            config,
            estimator,
            state: PolicyState::new(dim),
            solver: SolverSettings::default(),
        })
    }

    /// The pure greedy ablation: no uniform phase, no exploration coin.
    /// Every round picks the argmax under the current estimate (so every
    /// propensity is 1), and learning proceeds through the same
    /// pseudo-reward pipeline.
    pub fn greedy(dim: usize, mut config: DrPolicyConfig) -> Result<Self, PolicyError> {
        config.lambda1 = 0.0;
        config.zt = 0;
        Self::new(dim, config)
    }

    /// Restores a policy around a checkpointed state.
    pub fn from_state(
        state: PolicyState,
        config: DrPolicyConfig,
        estimator: PseudoRewardKind,
    ) -> Result<Self, PolicyError> {
        config.validate()?;
        Ok(DrLassoBandit {
            config,
            estimator,
            state,
            solver: SolverSettings::default(),
        })
    }

    pub fn config(&self) -> &DrPolicyConfig {
        &self.config
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn estimator(&self) -> PseudoRewardKind {
        self.estimator
    }

    /// Overrides the solver's stopping rule (looser tolerances trade
    /// stationarity slack for speed on hard instances).
    pub fn set_solver_settings(&mut self, settings: SolverSettings) {
        self.solver = settings;
    }

    /// The greedy arm under the current estimate (lowest index on ties).
    fn greedy_arm(&self, contexts: &ContextSet) -> usize {
        let mut best = (0, score(contexts, 0, &self.state.beta_hat));
        for i in 1..contexts.n_arms() {
            let value = score(contexts, i, &self.state.beta_hat);
            if value > best.1 {
                best = (i, value);
            }
        }
        best.0
    }

    /// Chooses the arm for round `state.round + 1`.
    ///
    /// During the uniform phase the arm is uniform with propensity `1/N`.
    /// Afterwards an exploration coin with the scheduled rate decides
    /// between a uniform pick and the greedy argmax; either way the
    /// returned propensity is the exact conditional probability of the
    /// arm that was actually chosen.
    pub fn select_arm(&self, contexts: &ContextSet, rng: &mut impl Rng) -> ArmDecision {
        let t = self.state.round + 1;
        let n = contexts.n_arms();
        assert!(n >= 1, "context set is never empty");
        let decision = if t <= self.config.zt {
            ArmDecision {
                arm: rng.random_range(0..n),
                propensity: 1.0 / n as f64,
                explored: true,
            }
        } else {
            let (rate, _) = schedule_rates(t, self.state.dim(), &self.config);
            let explored = rate > 0.0 && rng.random_bool(rate);
            let greedy = self.greedy_arm(contexts);
            let arm = if explored {
                rng.random_range(0..n)
            } else {
                greedy
            };
            let indicator = if arm == greedy { 1.0 } else { 0.0 };
            ArmDecision {
                arm,
                propensity: rate / n as f64 + (1.0 - rate) * indicator,
                explored,
            }
        };
        assert!(
            decision.propensity > 0.0 && decision.propensity <= 1.0,
            "propensity {} outside (0, 1]",
            decision.propensity
        );
        decision
    }

    /// Builds the training sample for this round under the configured
    /// pseudo-reward strategy, using the pre-update estimate.
    pub fn make_sample(
        &self,
        contexts: &ContextSet,
        decision: &ArmDecision,
        observed_reward: f64,
    ) -> PseudoSample {
        match self.estimator {
            PseudoRewardKind::DoublyRobust => pseudo_reward(
                contexts,
                decision,
                observed_reward,
                &self.state.beta_hat,
                &self.config,
            ),
            PseudoRewardKind::InversePropensity => PseudoSample {
                avg_context: contexts.average(),
                pseudo_reward: ipw_pseudo_reward(contexts, decision, observed_reward),
            },
        }
    }

    /// Appends a sample and, on refit rounds, re-estimates the parameter
    /// with the scheduled penalty, warm-starting from the previous
    /// estimate. Solver failures propagate.
    pub fn update_estimate(&mut self, sample: PseudoSample) -> Result<(), PolicyError> {
        let t = self.state.round + 1;
        self.state
            .data
            .push_sample(&sample.avg_context, sample.pseudo_reward)?;
        self.state.round = t;
        if t.is_multiple_of(self.config.refit_every) {
            let (_, regularization) = schedule_rates(t, self.state.dim(), &self.config);
            self.state.data.set_penalty(regularization)?;
            let warm = std::mem::take(&mut self.state.beta_hat);
            let solution = fit_lasso_with(&self.state.data, Some(&warm), &self.solver)?;
            self.state.beta_hat = solution.beta_hat;
        }
        Ok(())
    }
}

fn score(contexts: &ContextSet, arm: usize, beta: &[f64]) -> f64 {
    contexts
        .arm(arm)
        .iter()
        .zip(beta)
        .map(|(x, b)| x * b)
        .sum()
}

impl BanditPolicy for DrLassoBandit {
    fn name(&self) -> &str {
        match self.estimator {
            _ if self.config.lambda1 == 0.0 && self.config.zt == 0 => "greedy",
            PseudoRewardKind::DoublyRobust => "dr",
            PseudoRewardKind::InversePropensity => "dr_ipw",
        }
    }

    fn select(&mut self, t: usize, contexts: &ContextSet, rng: &mut ChaCha12Rng) -> ArmDecision {
        assert_eq!(t, self.state.round + 1, "round counter out of step");
        self.select_arm(contexts, rng)
    }

    fn observe(
        &mut self,
        t: usize,
        contexts: &ContextSet,
        decision: &ArmDecision,
        reward: f64,
    ) -> Result<(), PolicyError> {
        assert_eq!(t, self.state.round + 1, "round counter out of step");
        let sample = self.make_sample(contexts, decision, reward);
        self.update_estimate(sample)
    }

    fn beta_hat(&self) -> Option<&[f64]> {
        Some(&self.state.beta_hat)
    }
}
