//! Comparison policies.
//!
//! Three kinds of baseline live here: the inverse-propensity-weighted
//! pseudo-reward (a drop-in alternative to the doubly robust one,
//! sharing the identical arm-selection loop so variance comparisons are
//! controlled), the forced-sampling Lasso bandit run on a block
//! embedding of the context set (each arm learns its own parameter of
//! length `N*d`), and the trivial uniform/greedy/oracle controls.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::env::ContextSet;
use crate::lasso::{fit_lasso_with, LassoProblem, SolverSettings};
use crate::policy::{ArmDecision, BanditPolicy, PolicyError};
use serde::{Deserialize, Serialize};

/// Inverse-propensity-weighted pseudo-reward for the average context:
/// `observed_reward / (N * propensity)`, never truncated — its growing
/// variance under a decaying exploration rate is the point of the
/// comparison.
pub fn ipw_pseudo_reward(
    contexts: &ContextSet,
    decision: &ArmDecision,
    observed_reward: f64,
) -> f64 {
    assert!(
        decision.propensity > 0.0,
        "propensity must be positive (selection guarantees this)"
    );
    observed_reward / (contexts.n_arms() as f64 * decision.propensity)
}

/// The context set flattened to a single vector of length `N*d`:
/// arm 0's row, then arm 1's, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockContext {
    pub embedded: Vec<f64>,
}

/// Concatenates the arms' context rows. With the arm-`i` block parameter
/// (zero everywhere except `beta` in block `i`), the embedded inner
/// product reproduces `b_i' beta` exactly.
pub fn embed_block_context(contexts: &ContextSet) -> BlockContext {
    BlockContext {
        embedded: contexts.rows_flat().to_vec(),
    }
}

/// Forced-sampling schedule of the Lasso bandit: returns the arm that
/// round `t` (one-based) is reserved for, if any. Arm `i` (zero-based)
/// owns rounds `(2^n - 1) * N * q + j` for every `n >= 0` and
/// `j in {q*i + 1, ..., q*(i+1)}`, so each arm is force-pulled `q` times
/// per block and blocks thin out geometrically — `O(log T)` forced pulls
/// per arm overall.
pub fn forced_arm(t: usize, n_arms: usize, q: usize) -> Option<usize> {
    assert!(t >= 1 && n_arms >= 1 && q >= 1);
    let block = n_arms * q;
    let mut base = 0usize; // (2^n - 1) * N * q
    loop {
        let offset = t - base;
        if offset <= block {
            return Some((offset - 1) / q);
        }
        base = 2 * base + block;
        if base >= t {
            return None;
        }
    }
}

/// Tuning parameters of the forced-sampling Lasso bandit. All four are
/// exposed because the algorithm is compared in tuned form; the defaults
/// come from a small pilot grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoBanditConfig {
    /// Forced pulls per arm per schedule block.
    pub q: usize,
    /// Candidate-set margin: arms within `h/2` of the best forced-sample
    /// prediction survive to the all-sample comparison.
    pub h: f64,
    /// Fixed penalty of the forced-sample estimators.
    pub lambda1: f64,
    /// Scale of the all-sample estimators' decaying penalty
    /// `lambda2 * sqrt((ln t + ln(N*d)) / t)`.
    pub lambda2: f64,
}

impl Default for LassoBanditConfig {
    /// Defaults from a pilot tuning grid at N=10, d=100, s0=5,
    /// correlation 0.7, T=1000; regret was flat across the grid's top
    /// candidates, and these penalties keep every fit in the solver's
    /// reliably convergent regime at all tested arm counts.
    fn default() -> Self {
        LassoBanditConfig {
            q: 1,
            h: 5.0,
            lambda1: 0.5,
            lambda2: 0.5,
        }
    }
}

impl LassoBanditConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let fail = |field, message: String| Err(PolicyError::Config { field, message });
        if self.q == 0 {
            return fail("q", "must be at least 1".into());
        }
        if !self.h.is_finite() || self.h <= 0.0 {
            return fail("h", format!("must be > 0, got {}", self.h));
        }
        if !self.lambda1.is_finite() || self.lambda1 <= 0.0 {
            return fail("lambda1", format!("must be > 0, got {}", self.lambda1));
        }
        if !self.lambda2.is_finite() || self.lambda2 <= 0.0 {
            return fail("lambda2", format!("must be > 0, got {}", self.lambda2));
        }
        Ok(())
    }
}

/// One arm's pair of estimators over the embedded (`N*d`-dimensional)
/// context: the forced-sample one (fixed penalty, refit lazily when its
/// prediction is next needed) and the all-sample one (decaying penalty,
/// refit whenever the arm is pulled).
#[derive(Debug, Clone)]
struct ArmEstimators {
    forced: LassoProblem,
    forced_beta: Vec<f64>,
    forced_dirty: bool,
    all: LassoProblem,
    all_beta: Vec<f64>,
}

impl ArmEstimators {
    fn new(block_dim: usize) -> Self {
        ArmEstimators {
            forced: LassoProblem::new(block_dim, 0.0).expect("dim >= 1"),
            forced_beta: vec![0.0; block_dim],
            forced_dirty: false,
            all: LassoProblem::new(block_dim, 0.0).expect("dim >= 1"),
            all_beta: vec![0.0; block_dim],
        }
    }
}

/// The forced-sampling Lasso bandit on the block embedding.
///
/// Forced rounds pull the scheduled arm; free rounds pre-select the
/// candidate arms whose forced-sample predictions sit within `h/2` of
/// the best, then play the all-sample argmax among them. Both estimator
/// families are plain Lasso fits on the embedded contexts of the rounds
/// the arm was pulled. Selection is deterministic given the history, so
/// every decision carries propensity 1.
#[derive(Debug, Clone)]
pub struct LassoBandit {
    config: LassoBanditConfig,
    n_arms: usize,
    block_dim: usize,
    arms: Vec<ArmEstimators>,
    round: usize,
    solver: SolverSettings,
}

impl LassoBandit {
    pub fn new(n_arms: usize, dim: usize, config: LassoBanditConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        assert!(n_arms >= 1 && dim >= 1);
        let block_dim = n_arms * dim;
        Ok(LassoBandit {
            config,
            n_arms,
            block_dim,
            arms: (0..n_arms).map(|_| ArmEstimators::new(block_dim)).collect(),
            round: 0,
            // The block design is `N*d`-wide while early-round stores hold
            // a handful of samples, so pairs of near-collinear columns can
            // keep cyclic descent trading mass between twins long after
            // the fit stopped changing its predictions (the twins enter
            // every score through the same inner product). Reference
            // implementations of this baseline therefore stop on stalled
            // progress and keep the iterate; these settings reproduce
            // that: a short sweep budget and no stationarity bar (descent
            // is monotone, so the stall point is the best iterate seen,
            // and its actual residual is still reported per fit).
            solver: SolverSettings {
                sweep_tol: 1e-5,
                max_sweeps: 1_000,
                kkt_tol: f64::INFINITY,
            },
        })
    }

    pub fn config(&self) -> &LassoBanditConfig {
        &self.config
    }

    /// Forced-sample store sizes per arm (schedule bookkeeping).
    pub fn forced_counts(&self) -> Vec<usize> {
        self.arms.iter().map(|a| a.forced.num_samples()).collect()
    }

    /// Refits every stale forced-sample estimator. Called from `absorb`
    /// whenever the upcoming round is free, so `step` never has to solve
    /// anything and selection stays infallible.
    fn refresh_forced_estimates(&mut self) -> Result<(), PolicyError> {
        for arm in self.arms.iter_mut() {
            if arm.forced_dirty && !arm.forced.is_empty() {
                arm.forced.set_penalty(self.config.lambda1)?;
                let warm = std::mem::take(&mut arm.forced_beta);
                let solution = fit_lasso_with(&arm.forced, Some(&warm), &self.solver)?;
                arm.forced_beta = solution.beta_hat;
                arm.forced_dirty = false;
            }
        }
        Ok(())
    }

    fn step(&self, t: usize, contexts: &ContextSet) -> ArmDecision {
        assert_eq!(t, self.round + 1, "round counter out of step");
        assert_eq!(contexts.n_arms(), self.n_arms, "arm count changed");
        if let Some(arm) = forced_arm(t, self.n_arms, self.config.q) {
            return ArmDecision {
                arm,
                propensity: 1.0,
                explored: true,
            };
        }
        let x = contexts.rows_flat();
        let forced_scores: Vec<f64> = self
            .arms
            .iter()
            .map(|arm| dot(x, &arm.forced_beta))
            .collect();
        let best_forced = forced_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let threshold = best_forced - self.config.h / 2.0;
        let mut choice: Option<(usize, f64)> = None;
        for (i, arm) in self.arms.iter().enumerate() {
            if forced_scores[i] >= threshold {
                let value = dot(x, &arm.all_beta);
                if choice.is_none_or(|(_, best)| value > best) {
                    choice = Some((i, value));
                }
            }
        }
        let (arm, _) = choice.expect("candidate set contains the forced argmax");
        ArmDecision {
            arm,
            propensity: 1.0,
            explored: false,
        }
    }

    fn absorb(
        &mut self,
        t: usize,
        contexts: &ContextSet,
        decision: &ArmDecision,
        reward: f64,
    ) -> Result<(), PolicyError> {
        assert_eq!(t, self.round + 1, "round counter out of step");
        let x = contexts.rows_flat();
        if let Some(scheduled) = forced_arm(t, self.n_arms, self.config.q) {
            assert_eq!(
                decision.arm, scheduled,
                "forced round must play the scheduled arm"
            );
            let arm = &mut self.arms[scheduled];
            arm.forced.push_sample(x, reward)?;
            arm.forced_dirty = true;
        }
        let arm = &mut self.arms[decision.arm];
        arm.all.push_sample(x, reward)?;
        let penalty = self.config.lambda2
            * (((t as f64).ln() + (self.block_dim as f64).ln()) / t as f64).sqrt();
        arm.all.set_penalty(penalty)?;
        let warm = std::mem::take(&mut arm.all_beta);
        let solution = fit_lasso_with(&arm.all, Some(&warm), &self.solver)?;
        arm.all_beta = solution.beta_hat;
        if forced_arm(t + 1, self.n_arms, self.config.q).is_none() {
            self.refresh_forced_estimates()?;
        }
        self.round = t;
        Ok(())
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl BanditPolicy for LassoBandit {
    fn name(&self) -> &str {
        "lasso_bandit"
    }

    fn select(&mut self, t: usize, contexts: &ContextSet, _rng: &mut ChaCha12Rng) -> ArmDecision {
        self.step(t, contexts)
    }

    fn observe(
        &mut self,
        t: usize,
        contexts: &ContextSet,
        decision: &ArmDecision,
        reward: f64,
    ) -> Result<(), PolicyError> {
        self.absorb(t, contexts, decision, reward)
    }
}

/// The trivial controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Uniform,
    Greedy,
    Oracle,
}

/// One selection by a trivial control policy. `beta_ref` is the current
/// estimate for `Greedy`, the true parameter for `Oracle`, and ignored
/// for `Uniform`. Greedy and oracle are deterministic argmaxes (lowest
/// index wins ties), so their propensity is 1.
pub fn baseline_select(
    kind: BaselineKind,
    contexts: &ContextSet,
    beta_ref: &[f64],
    rng: &mut impl Rng,
) -> ArmDecision {
    let n = contexts.n_arms();
    match kind {
        BaselineKind::Uniform => ArmDecision {
            arm: rng.random_range(0..n),
            propensity: 1.0 / n as f64,
            explored: true,
        },
        BaselineKind::Greedy | BaselineKind::Oracle => {
            let mut best = (0, dot(contexts.arm(0), beta_ref));
            for i in 1..n {
                let value = dot(contexts.arm(i), beta_ref);
                if value > best.1 {
                    best = (i, value);
                }
            }
            ArmDecision {
                arm: best.0,
                propensity: 1.0,
                explored: false,
            }
        }
    }
}

/// Plays every arm with probability `1/N`, learns nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl BanditPolicy for UniformPolicy {
    fn name(&self) -> &str {
        "uniform"
    }

    fn select(&mut self, _t: usize, contexts: &ContextSet, rng: &mut ChaCha12Rng) -> ArmDecision {
        baseline_select(BaselineKind::Uniform, contexts, &[], rng)
    }

    fn observe(
        &mut self,
        _t: usize,
        _contexts: &ContextSet,
        _decision: &ArmDecision,
        _reward: f64,
    ) -> Result<(), PolicyError> {
        Ok(())
    }
}

/// Plays the argmax under the true parameter: per-round regret zero.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    beta: Vec<f64>,
}

impl OraclePolicy {
    pub fn new(beta: Vec<f64>) -> Self {
        OraclePolicy { beta }
    }
}

impl BanditPolicy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn select(&mut self, _t: usize, contexts: &ContextSet, rng: &mut ChaCha12Rng) -> ArmDecision {
        baseline_select(BaselineKind::Oracle, contexts, &self.beta, rng)
    }

    fn observe(
        &mut self,
        _t: usize,
        _contexts: &ContextSet,
        _decision: &ArmDecision,
        _reward: f64,
    ) -> Result<(), PolicyError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        best_arm, expected_reward, sample_beta, sample_context_set, EnvironmentConfig,
    };
    use crate::policy::{DrLassoBandit, DrPolicyConfig, PseudoRewardKind};
    use crate::seeds::{stream_rng, StreamPurpose};

    fn env_config(n_arms: usize, dim: usize) -> EnvironmentConfig {
        EnvironmentConfig {
            n_arms,
            dim,
            sparsity: dim.min(3),
            cross_arm_correlation: 0.3,
            noise_sd: 0.0,
            ..EnvironmentConfig::default()
        }
    }

    #[test]
    fn ipw_weight_cancels_at_uniform_propensity() {
        let contexts = crate::env::ContextSet::new(vec![1.0; 8], 4, 2);
        let d = ArmDecision {
            arm: 2,
            propensity: 0.25,
            explored: true,
        };
        assert_eq!(ipw_pseudo_reward(&contexts, &d, 0.7), 0.7);
        assert_eq!(ipw_pseudo_reward(&contexts, &d, 0.0), 0.0);
    }

    #[test]
    #[should_panic(expected = "propensity must be positive")]
    fn ipw_rejects_nonpositive_propensity() {
        let contexts = crate::env::ContextSet::new(vec![1.0; 4], 2, 2);
        let d = ArmDecision {
            arm: 0,
            propensity: 0.0,
            explored: false,
        };
        ipw_pseudo_reward(&contexts, &d, 1.0);
    }

    #[test]
    fn ipw_is_unbiased_over_the_selection_draw() {
        let env_cfg = EnvironmentConfig {
            noise_sd: 0.05,
            ..env_config(8, 6)
        };
        let mut setup_rng = stream_rng(101, 0, StreamPurpose::Contexts);
        let beta = sample_beta(&env_cfg, &mut setup_rng);
        let contexts = sample_context_set(&env_cfg, &mut setup_rng);
        let mut policy = DrLassoBandit::with_estimator(
            6,
            DrPolicyConfig {
                lambda1: 1.0,
                ..DrPolicyConfig::default()
            },
            PseudoRewardKind::InversePropensity,
        )
        .unwrap();
        // Fix the schedule position past the uniform phase.
        let mut warm_rng = stream_rng(102, 0, StreamPurpose::Policy);
        for t in 1..=60 {
            let d = policy.select(t, &contexts, &mut warm_rng);
            policy.observe(t, &contexts, &d, 0.0).unwrap();
        }
        let avg = contexts.average();
        let truth: f64 = avg.iter().zip(&beta.beta).map(|(x, b)| x * b).sum();
        let mut rng = stream_rng(103, 0, StreamPurpose::Policy);
        let mut noise_rng = stream_rng(103, 0, StreamPurpose::Noise);
        let draws = 100_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..draws {
            let d = policy.select_arm(&contexts, &mut rng);
            let rewards = crate::env::realize_rewards(&contexts, &beta, 0.05, &mut noise_rng);
            let value = ipw_pseudo_reward(&contexts, &d, rewards[d.arm]);
            sum += value;
            sumsq += value * value;
        }
        let mean = sum / draws as f64;
        let var = (sumsq - sum * sum / draws as f64) / (draws as f64 - 1.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - truth).abs() < 3.0 * se,
            "mean {mean} vs truth {truth} (se {se})"
        );
    }

    #[test]
    fn block_embedding_concatenates_rows() {
        let contexts = crate::env::ContextSet::new(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        let block = embed_block_context(&contexts);
        assert_eq!(block.embedded, vec![1.0, 0.0, 0.0, 1.0]);
        // L2 norm of the embedding equals the Frobenius norm of the set.
        let frob: f64 = contexts.rows_flat().iter().map(|x| x * x).sum::<f64>().sqrt();
        let l2: f64 = block.embedded.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_eq!(frob, l2);
    }

    #[test]
    fn block_embedding_preserves_per_arm_inner_products() {
        for (n, d) in [(1usize, 3usize), (2, 2), (3, 4), (5, 5)] {
            let env_cfg = env_config(n, d);
            let mut rng = stream_rng(7, (n * 10 + d) as u64, StreamPurpose::Contexts);
            let beta = sample_beta(&env_cfg, &mut rng);
            let contexts = sample_context_set(&env_cfg, &mut rng);
            let block = embed_block_context(&contexts);
            for i in 0..n {
                let mut block_param = vec![0.0; n * d];
                block_param[i * d..(i + 1) * d].copy_from_slice(&beta.beta);
                let via_embedding = dot(&block.embedded, &block_param);
                let direct = expected_reward(&contexts, &beta.beta, i);
                assert!((via_embedding - direct).abs() < 1e-15);
            }
            if n == 1 {
                assert_eq!(block.embedded, contexts.rows_flat());
            }
        }
    }

    #[test]
    fn forced_schedule_matches_direct_enumeration() {
        // Independent oracle: arm i owns t = (2^n - 1)*N*q + j with
        // j in {q*i+1, ..., q*(i+1)}, enumerated directly.
        for (n_arms, q) in [(5usize, 1usize), (3, 2), (4, 3)] {
            let mut expected = vec![None; 400];
            let block = n_arms * q;
            let mut base = 0usize;
            while base < expected.len() {
                for j in 1..=block {
                    let t = base + j;
                    if t <= expected.len() {
                        expected[t - 1] = Some((j - 1) / q);
                    }
                }
                base = 2 * base + block;
            }
            for t in 1..=expected.len() {
                assert_eq!(
                    forced_arm(t, n_arms, q),
                    expected[t - 1],
                    "t={t}, N={n_arms}, q={q}"
                );
            }
        }
    }

    #[test]
    fn forced_stores_accumulate_the_scheduled_counts() {
        let env_cfg = env_config(5, 3);
        let mut ctx_rng = stream_rng(11, 0, StreamPurpose::Contexts);
        let mut rng = stream_rng(11, 0, StreamPurpose::Policy);
        let mut policy = LassoBandit::new(5, 3, LassoBanditConfig::default()).unwrap();
        let mut expected = vec![0usize; 5];
        for t in 1..=200 {
            if let Some(arm) = forced_arm(t, 5, 1) {
                expected[arm] += 1;
            }
            let contexts = sample_context_set(&env_cfg, &mut ctx_rng);
            let d = policy.select(t, &contexts, &mut rng);
            if let Some(arm) = forced_arm(t, 5, 1) {
                assert_eq!(d.arm, arm, "forced round plays the scheduled arm");
                assert!(d.explored);
            }
            assert_eq!(d.propensity, 1.0);
            let reward = expected_reward(&contexts, &[0.5, 0.2, 0.0], d.arm);
            policy.observe(t, &contexts, &d, reward).unwrap();
        }
        assert_eq!(policy.forced_counts(), expected);
        // Six schedule blocks of one pull per arm fit inside T = 200.
        assert_eq!(expected, vec![6; 5]);
    }

    #[test]
    fn planted_parameter_noiseless_free_rounds_pick_the_best_arm() {
        let env_cfg = env_config(3, 4);
        let mut ctx_rng = stream_rng(23, 0, StreamPurpose::Contexts);
        let mut rng = stream_rng(23, 0, StreamPurpose::Policy);
        let mut beta_rng = stream_rng(24, 0, StreamPurpose::Beta);
        let beta = sample_beta(&env_cfg, &mut beta_rng);
        let mut policy = LassoBandit::new(
            3,
            4,
            LassoBanditConfig {
                q: 2,
                h: 5.0,
                // Tiny penalties: the 12-dimensional noiseless fit should
                // recover the block parameter nearly exactly.
                lambda1: 0.05,
                lambda2: 0.05,
            },
        )
        .unwrap();
        for t in 1..=100 {
            let contexts = sample_context_set(&env_cfg, &mut ctx_rng);
            let d = policy.select(t, &contexts, &mut rng);
            let reward = expected_reward(&contexts, &beta.beta, d.arm);
            policy.observe(t, &contexts, &d, reward).unwrap();
        }
        // Rounds 101..=105 are free (the next forced block starts at 187):
        // with noiseless rewards the trained policy picks the true best arm.
        for t in 101..=105 {
            assert_eq!(forced_arm(t, 3, 2), None);
            let contexts = sample_context_set(&env_cfg, &mut ctx_rng);
            let d = policy.select(t, &contexts, &mut rng);
            let (oracle, _) = best_arm(&contexts, &beta);
            assert_eq!(d.arm, oracle, "t={t}");
            let reward = expected_reward(&contexts, &beta.beta, d.arm);
            policy.observe(t, &contexts, &d, reward).unwrap();
        }
    }

    #[test]
    fn lasso_bandit_config_validation_names_fields() {
        let defaults = LassoBanditConfig::default();
        let cfg = LassoBanditConfig { q: 0, ..defaults };
        assert!(cfg.validate().is_err());
        let cfg = LassoBanditConfig { h: 0.0, ..defaults };
        match cfg.validate() {
            Err(PolicyError::Config { field, .. }) => assert_eq!(field, "h"),
            other => panic!("expected config error, got {other:?}"),
        }
        let cfg = LassoBanditConfig {
            lambda1: -1.0,
            ..defaults
        };
        assert!(cfg.validate().is_err());
        let cfg = LassoBanditConfig {
            lambda2: f64::NAN,
            ..defaults
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn uniform_baseline_has_uniform_propensity() {
        let env_cfg = env_config(8, 3);
        let mut ctx_rng = stream_rng(31, 0, StreamPurpose::Contexts);
        let contexts = sample_context_set(&env_cfg, &mut ctx_rng);
        let mut rng = stream_rng(31, 0, StreamPurpose::Policy);
        let mut counts = vec![0usize; 8];
        for _ in 0..40_000 {
            let d = baseline_select(BaselineKind::Uniform, &contexts, &[], &mut rng);
            assert_eq!(d.propensity, 0.125);
            assert!(d.explored);
            counts[d.arm] += 1;
        }
        let se = (0.125 * 0.875 / 40_000.0f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / 40_000.0;
            assert!((freq - 0.125).abs() < 4.0 * se, "freq {freq}");
        }
    }

    #[test]
    fn oracle_baseline_has_zero_per_round_regret() {
        let env_cfg = env_config(6, 5);
        let mut ctx_rng = stream_rng(37, 0, StreamPurpose::Contexts);
        let mut beta_rng = stream_rng(37, 0, StreamPurpose::Beta);
        let beta = sample_beta(&env_cfg, &mut beta_rng);
        let mut policy = OraclePolicy::new(beta.beta.clone());
        let mut rng = stream_rng(37, 0, StreamPurpose::Policy);
        for t in 1..=50 {
            let contexts = sample_context_set(&env_cfg, &mut ctx_rng);
            let d = policy.select(t, &contexts, &mut rng);
            let (oracle, best_value) = best_arm(&contexts, &beta);
            assert_eq!(d.arm, oracle);
            assert_eq!(d.propensity, 1.0);
            let regret = best_value - expected_reward(&contexts, &beta.beta, d.arm);
            assert_eq!(regret, 0.0);
            policy.observe(t, &contexts, &d, best_value).unwrap();
        }
    }

    #[test]
    fn greedy_baseline_locksteps_with_the_zero_exploration_policy() {
        // The greedy control is the doubly robust policy with the
        // exploration rate and uniform phase both switched off; with
        // identical seeds the two construction paths coincide round by
        // round, and the stateless selector agrees with the policy's
        // internal argmax at every step.
        let env_cfg = EnvironmentConfig {
            noise_sd: 0.05,
            ..env_config(5, 8)
        };
        let mut ctx_rng_a = stream_rng(41, 0, StreamPurpose::Contexts);
        let mut ctx_rng_b = stream_rng(41, 0, StreamPurpose::Contexts);
        let mut noise_rng_a = stream_rng(41, 0, StreamPurpose::Noise);
        let mut noise_rng_b = stream_rng(41, 0, StreamPurpose::Noise);
        let mut rng_a = stream_rng(41, 0, StreamPurpose::Policy);
        let mut rng_b = stream_rng(41, 0, StreamPurpose::Policy);
        let mut beta_rng = stream_rng(41, 0, StreamPurpose::Beta);
        let beta = sample_beta(&env_cfg, &mut beta_rng);

        let base = DrPolicyConfig {
            lambda1: 1.0,
            lambda2: 0.5,
            zt: 20,
            ..DrPolicyConfig::default()
        };
        let mut via_constructor = DrLassoBandit::greedy(8, base).unwrap();
        let mut via_config = DrLassoBandit::new(
            8,
            DrPolicyConfig {
                lambda1: 0.0,
                zt: 0,
                ..base
            },
        )
        .unwrap();
        for t in 1..=60 {
            let contexts_a = sample_context_set(&env_cfg, &mut ctx_rng_a);
            let contexts_b = sample_context_set(&env_cfg, &mut ctx_rng_b);
            let stateless = baseline_select(
                BaselineKind::Greedy,
                &contexts_a,
                via_constructor.beta_hat().unwrap(),
                &mut rng_a,
            );
            let da = via_constructor.select(t, &contexts_a, &mut rng_a);
            let db = via_config.select(t, &contexts_b, &mut rng_b);
            assert_eq!(da, db, "t={t}");
            assert_eq!(da.arm, stateless.arm, "t={t}");
            assert_eq!(da.propensity, 1.0);
            let ra = crate::env::realize_rewards(&contexts_a, &beta, 0.05, &mut noise_rng_a);
            let rb = crate::env::realize_rewards(&contexts_b, &beta, 0.05, &mut noise_rng_b);
            via_constructor
                .observe(t, &contexts_a, &da, ra[da.arm])
                .unwrap();
            via_config.observe(t, &contexts_b, &db, rb[db.arm]).unwrap();
            assert_eq!(
                via_constructor.beta_hat().unwrap(),
                via_config.beta_hat().unwrap()
            );
        }
    }
}
