//! Experiment orchestration: configuration, seeded replications, regret
//! accounting, quantile aggregation, and CSV emission.
//!
//! A replication is a fully deterministic function of the configuration
//! and `(master_seed, replication_index)`: contexts, rewards, the true
//! parameter, and the policy's own randomness each come from a named
//! sub-stream, so any replication can be reproduced in isolation. The
//! harness enforces bandit feedback at its boundary — a policy is shown
//! the realized reward of the arm it chose and nothing else — and
//! computes regret from expected rewards (the true parameter), not
//! realized ones, so the curves carry no reward noise.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{LassoBandit, LassoBanditConfig, OraclePolicy, UniformPolicy};
use crate::diagnostics::{BoundParams, GramAccumulator, VarianceTracker};
use crate::env::{
    best_arm, expected_reward, realize_rewards, sample_beta, sample_context_set, EnvConfigError,
    EnvironmentConfig, TrueParameter,
};
use crate::policy::{BanditPolicy, DrLassoBandit, DrPolicyConfig, PolicyError, PseudoRewardKind};
use crate::seeds::{stream_rng, StreamPurpose};
use thiserror::Error;

/// Harness-level errors.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid experiment config: {field} {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Env(#[from] EnvConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("I/O failure at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn config_err(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Which policy an experiment runs, with its parameters. The greedy
/// policy shares the doubly robust learning pipeline with exploration
/// switched off, so its parameter block is the same (the exploration
/// fields are forced to zero at construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PolicySpec {
    Dr {
        #[serde(default)]
        params: DrPolicyConfig,
    },
    DrIpw {
        #[serde(default)]
        params: DrPolicyConfig,
    },
    LassoBandit {
        #[serde(default)]
        params: LassoBanditConfig,
    },
    Uniform,
    Greedy {
        #[serde(default)]
        params: DrPolicyConfig,
    },
    Oracle,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::Dr {
            params: DrPolicyConfig::default(),
        }
    }
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Dr { .. } => "dr",
            PolicySpec::DrIpw { .. } => "dr_ipw",
            PolicySpec::LassoBandit { .. } => "lasso_bandit",
            PolicySpec::Uniform => "uniform",
            PolicySpec::Greedy { .. } => "greedy",
            PolicySpec::Oracle => "oracle",
        }
    }

    fn validate(&self) -> Result<(), PolicyError> {
        match self {
            PolicySpec::Dr { params } | PolicySpec::DrIpw { params } => params.validate(),
            PolicySpec::Greedy { params } => {
                // Exploration fields are overridden at construction; only
                // the learning parameters need to hold.
                let mut effective = *params;
                effective.lambda1 = 0.0;
                effective.validate()
            }
            PolicySpec::LassoBandit { params } => params.validate(),
            PolicySpec::Uniform | PolicySpec::Oracle => Ok(()),
        }
    }

    fn build(
        &self,
        env: &EnvironmentConfig,
        beta: &TrueParameter,
    ) -> Result<PolicyInstance, PolicyError> {
        Ok(match self {
            PolicySpec::Dr { params } => {
                PolicyInstance::Dr(DrLassoBandit::new(env.dim, *params)?)
            }
            PolicySpec::DrIpw { params } => PolicyInstance::Dr(DrLassoBandit::with_estimator(
                env.dim,
                *params,
                PseudoRewardKind::InversePropensity,
            )?),
            PolicySpec::LassoBandit { params } => {
                PolicyInstance::LassoBandit(LassoBandit::new(env.n_arms, env.dim, *params)?)
            }
            PolicySpec::Uniform => PolicyInstance::Uniform(UniformPolicy),
            PolicySpec::Greedy { params } => {
                PolicyInstance::Dr(DrLassoBandit::greedy(env.dim, *params)?)
            }
            PolicySpec::Oracle => PolicyInstance::Oracle(OraclePolicy::new(beta.beta.clone())),
        })
    }
}

/// A constructed policy, dispatched without trait objects so the
/// diagnostics pass can reach policy-specific state.
pub(crate) enum PolicyInstance {
    Dr(DrLassoBandit),
    LassoBandit(LassoBandit),
    Uniform(UniformPolicy),
    Oracle(OraclePolicy),
    /// Test double: behaves like the uniform policy but fails its
    /// observe call at the given round, to exercise the abort path.
    #[cfg(test)]
    FailAt(usize, UniformPolicy),
}

impl PolicyInstance {
    fn as_policy(&mut self) -> &mut dyn BanditPolicy {
        match self {
            PolicyInstance::Dr(p) => p,
            PolicyInstance::LassoBandit(p) => p,
            PolicyInstance::Uniform(p) => p,
            PolicyInstance::Oracle(p) => p,
            #[cfg(test)]
            PolicyInstance::FailAt(_, p) => p,
        }
    }

    fn name(&mut self) -> String {
        self.as_policy().name().to_string()
    }

    fn select(
        &mut self,
        t: usize,
        contexts: &crate::env::ContextSet,
        rng: &mut rand_chacha::ChaCha12Rng,
    ) -> crate::policy::ArmDecision {
        self.as_policy().select(t, contexts, rng)
    }

    fn observe(
        &mut self,
        t: usize,
        contexts: &crate::env::ContextSet,
        decision: &crate::policy::ArmDecision,
        reward: f64,
    ) -> Result<(), PolicyError> {
        #[cfg(test)]
        if let PolicyInstance::FailAt(fail_t, _) = self {
            if t >= *fail_t {
                return Err(PolicyError::Config {
                    field: "test",
                    message: "injected failure".into(),
                });
            }
        }
        self.as_policy().observe(t, contexts, decision, reward)
    }

    fn dr_ref(&self) -> Option<&DrLassoBandit> {
        match self {
            PolicyInstance::Dr(p) => Some(p),
            _ => None,
        }
    }
}

/// Everything one experiment needs: the environment, the policy and its
/// parameters, the horizon, and the replication/seed/output plumbing.
///
/// The environment's own `seed` field is ignored here: the harness
/// derives every random stream from `(master_seed, replication)` so
/// that replications are independent and reproducible in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub policy: PolicySpec,
    pub horizon: usize,
    pub replications: usize,
    pub master_seed: u64,
    /// Rounds at which diagnostics are evaluated and regret quantiles
    /// reported. Empty means the default: powers of two up to the
    /// horizon, plus the horizon itself.
    pub checkpoints: Vec<usize>,
    pub output_path: String,
    /// Draw one true parameter and reuse it across replications,
    /// instead of redrawing per replication (the default). With the
    /// default, curves aggregate over problem instances as well as
    /// reward noise.
    pub fix_beta_across_replications: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            environment: EnvironmentConfig::default(),
            policy: PolicySpec::default(),
            horizon: 2000,
            replications: 10,
            master_seed: 0,
            checkpoints: Vec::new(),
            output_path: "results".to_string(),
            fix_beta_across_replications: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.environment.validate()?;
        self.policy.validate()?;
        if self.horizon == 0 {
            return Err(config_err("horizon", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(config_err("replications", "must be at least 1"));
        }
        if let Some(&bad) = self
            .checkpoints
            .iter()
            .find(|&&c| c == 0 || c > self.horizon)
        {
            return Err(config_err(
                "checkpoints",
                format!("value {bad} outside [1, {}]", self.horizon),
            ));
        }
        Ok(())
    }

    /// The checkpoint rounds in increasing order: the configured list
    /// (sorted, deduplicated) or, when none is given, powers of two up
    /// to the horizon plus the horizon itself.
    pub fn effective_checkpoints(&self) -> Vec<usize> {
        let mut points = if self.checkpoints.is_empty() {
            let mut points = Vec::new();
            let mut p = 1usize;
            while p <= self.horizon {
                points.push(p);
                match p.checked_mul(2) {
                    Some(next) => p = next,
                    None => break,
                }
            }
            points.push(self.horizon);
            points
        } else {
            self.checkpoints.clone()
        };
        points.sort_unstable();
        points.dedup();
        points
    }
}

/// Parses an experiment config from a JSON document. Unspecified fields
/// take the documented defaults; unknown keys and out-of-range values
/// are rejected with the offending key named.
pub fn load_config(source: &str) -> Result<ExperimentConfig, HarnessError> {
    let config: ExperimentConfig = serde_json::from_str(source)?;
    config.validate()?;
    Ok(config)
}

/// One played round, as written to the records CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub replication: usize,
    pub t: usize,
    pub policy: String,
    pub arm: usize,
    pub propensity: f64,
    pub explored: bool,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
}

/// One diagnostic observation, tagged by type; written to the
/// companion diagnostics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRecord {
    pub replication: usize,
    pub t: usize,
    pub record: &'static str,
    pub value: f64,
}

/// The complete output of one replication. `abort` is set when the
/// policy failed mid-run; the records up to the failure are kept and a
/// tagged diagnostic row marks the abort round.
#[derive(Debug)]
pub struct ReplicationOutput {
    pub replication: usize,
    pub records: Vec<RoundRecord>,
    pub diagnostics: Vec<DiagnosticRecord>,
    pub abort: Option<String>,
}

/// Runs one fully seeded replication: per round, sample a context set,
/// let the policy choose, reveal only the chosen arm's realized reward,
/// and account regret against the oracle arm under the true parameter.
pub fn run_replication(
    config: &ExperimentConfig,
    replication: usize,
) -> Result<ReplicationOutput, HarnessError> {
    config.validate()?;
    let beta = replication_beta(config, replication);
    let mut policy = config.policy.build(&config.environment, &beta)?;
    Ok(run_rounds(config, replication, &beta, &mut policy))
}

/// The true parameter for a replication: redrawn per replication by
/// default, or shared (replication 0's draw) when the config fixes it.
fn replication_beta(config: &ExperimentConfig, replication: usize) -> TrueParameter {
    let beta_replication = if config.fix_beta_across_replications {
        0
    } else {
        replication as u64
    };
    let mut beta_rng = stream_rng(config.master_seed, beta_replication, StreamPurpose::Beta);
    sample_beta(&config.environment, &mut beta_rng)
}

fn run_rounds(
    config: &ExperimentConfig,
    replication: usize,
    beta: &TrueParameter,
    policy: &mut PolicyInstance,
) -> ReplicationOutput {
    let env = &config.environment;
    let mut ctx_rng = stream_rng(config.master_seed, replication as u64, StreamPurpose::Contexts);
    let mut noise_rng = stream_rng(config.master_seed, replication as u64, StreamPurpose::Noise);
    let mut policy_rng = stream_rng(config.master_seed, replication as u64, StreamPurpose::Policy);

    let checkpoints = config.effective_checkpoints();
    let bound_params = BoundParams {
        s0: env.sparsity.max(1),
        d: env.dim,
        ..BoundParams::default()
    };
    let policy_name = policy.name();
    let mut records = Vec::with_capacity(config.horizon);
    let mut diagnostics = Vec::new();
    let mut gram = GramAccumulator::new(env.dim);
    let mut cum_regret = 0.0;
    let mut abort = None;

    for t in 1..=config.horizon {
        let contexts = sample_context_set(env, &mut ctx_rng);
        gram.accumulate(&contexts.average())
            .expect("dimensions fixed per run");
        let decision = policy.select(t, &contexts, &mut policy_rng);
        let rewards = realize_rewards(&contexts, beta, env.noise_sd, &mut noise_rng);
        // Bandit feedback boundary: the policy sees only this value.
        let observed = rewards[decision.arm];
        if let Err(error) = policy.observe(t, &contexts, &decision, observed) {
            diagnostics.push(DiagnosticRecord {
                replication,
                t,
                record: "abort",
                value: t as f64,
            });
            abort = Some(format!("replication {replication} aborted at t={t}: {error}"));
            break;
        }
        let (_, best_value) = best_arm(&contexts, beta);
        let regret = best_value - expected_reward(&contexts, &beta.beta, decision.arm);
        debug_assert!(regret >= 0.0);
        cum_regret += regret;
        records.push(RoundRecord {
            replication,
            t,
            policy: policy_name.clone(),
            arm: decision.arm,
            propensity: decision.propensity,
            explored: decision.explored,
            reward: observed,
            regret,
            cum_regret,
        });
        if checkpoints.binary_search(&t).is_ok() {
            diagnostics.push(DiagnosticRecord {
                replication,
                t,
                record: "gram_trace",
                value: gram.trace(),
            });
            if let Some(dr) = policy.dr_ref() {
                let (l1_error, bound) = crate::diagnostics::l1_error_and_bound(
                    dr.beta_hat().expect("dr policies expose an estimate"),
                    &beta.beta,
                    t,
                    &bound_params,
                );
                let mut tracker = VarianceTracker::new();
                for idx in 0..dr.state().store_len() {
                    tracker.update(dr.state().pseudo_sample(idx).pseudo_reward);
                }
                diagnostics.extend([
                    DiagnosticRecord {
                        replication,
                        t,
                        record: "l1_error",
                        value: l1_error,
                    },
                    DiagnosticRecord {
                        replication,
                        t,
                        record: "l1_bound",
                        value: bound,
                    },
                    DiagnosticRecord {
                        replication,
                        t,
                        record: "pseudo_reward_std",
                        value: tracker.std_dev(),
                    },
                ]);
            }
        }
    }

    ReplicationOutput {
        replication,
        records,
        diagnostics,
        abort,
    }
}

/// Quantile with linear interpolation between order statistics:
/// at position `h = (n-1)p`, interpolate between the floor and ceiling
/// order statistics. `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty set");
    assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1]");
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "input not sorted");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-checkpoint quartiles of cumulative regret across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve {
    pub checkpoints: Vec<usize>,
    pub q1: Vec<f64>,
    pub median: Vec<f64>,
    pub q3: Vec<f64>,
}

/// Aggregates cumulative regret across replications at the given
/// checkpoints. All replications must cover the same horizon.
pub fn aggregate_quantiles(
    outputs: &[ReplicationOutput],
    checkpoints: &[usize],
) -> Result<QuantileCurve, HarnessError> {
    if outputs.is_empty() {
        return Err(config_err("replications", "need at least one replication"));
    }
    let horizon = outputs[0].records.len();
    if let Some(odd) = outputs.iter().find(|o| o.records.len() != horizon) {
        return Err(config_err(
            "horizon",
            format!(
                "replication {} has {} rounds, expected {horizon}",
                odd.replication,
                odd.records.len()
            ),
        ));
    }
    let mut curve = QuantileCurve {
        checkpoints: Vec::with_capacity(checkpoints.len()),
        q1: Vec::with_capacity(checkpoints.len()),
        median: Vec::with_capacity(checkpoints.len()),
        q3: Vec::with_capacity(checkpoints.len()),
    };
    for &c in checkpoints {
        if c == 0 || c > horizon {
            return Err(config_err(
                "checkpoints",
                format!("value {c} outside [1, {horizon}]"),
            ));
        }
        let mut values: Vec<f64> = outputs
            .iter()
            .map(|o| {
                let record = &o.records[c - 1];
                debug_assert_eq!(record.t, c);
                record.cum_regret
            })
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("regret is never NaN"));
        curve.checkpoints.push(c);
        curve.q1.push(quantile(&values, 0.25));
        curve.median.push(quantile(&values, 0.5));
        curve.q3.push(quantile(&values, 0.75));
    }
    Ok(curve)
}

/// An experiment's complete in-memory result.
#[derive(Debug)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub outputs: Vec<ReplicationOutput>,
    /// Present when every replication completed.
    pub curve: Option<QuantileCurve>,
}

impl ExperimentRun {
    pub fn first_abort(&self) -> Option<&str> {
        self.outputs
            .iter()
            .find_map(|o| o.abort.as_deref())
    }
}

/// Runs every replication sequentially (replications are independent;
/// on this single-core target sequential execution is also the fastest
/// deterministic order) and aggregates the quantile curve when all of
/// them complete.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun, HarnessError> {
    config.validate()?;
    let mut outputs = Vec::with_capacity(config.replications);
    for replication in 0..config.replications {
        outputs.push(run_replication(config, replication)?);
    }
    let curve = if outputs.iter().all(|o| o.abort.is_none()) {
        Some(aggregate_quantiles(
            &outputs,
            &config.effective_checkpoints(),
        )?)
    } else {
        None
    };
    Ok(ExperimentRun {
        config: config.clone(),
        outputs,
        curve,
    })
}

/// Formats a float with 10 significant digits, locale-free.
fn fmt_sig(x: f64) -> String {
    format!("{x:.9e}")
}

/// A short, filename-safe description of the experiment's setting:
/// environment shape, horizon, and the policy's tuning parameters (so
/// grid runs over tuning candidates never collide on filenames).
pub fn setting_label(config: &ExperimentConfig) -> String {
    let e = &config.environment;
    let mut label = format!(
        "N{}_d{}_s{}_rho{}_sd{}_T{}",
        e.n_arms, e.dim, e.sparsity, e.cross_arm_correlation, e.noise_sd, config.horizon
    );
    match &config.policy {
        PolicySpec::Dr { params } | PolicySpec::DrIpw { params } => {
            let _ = write!(
                label,
                "_l1{}_l2{}_zt{}",
                params.lambda1, params.lambda2, params.zt
            );
        }
        PolicySpec::Greedy { params } => {
            let _ = write!(label, "_l2{}", params.lambda2);
        }
        PolicySpec::LassoBandit { params } => {
            let _ = write!(
                label,
                "_q{}_h{}_l1{}_l2{}",
                params.q, params.h, params.lambda1, params.lambda2
            );
        }
        PolicySpec::Uniform | PolicySpec::Oracle => {}
    }
    label
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes round records as CSV with the fixed header. Floats carry 10
/// significant digits; no timestamps or other nondeterminism.
pub fn write_rounds_csv(path: &Path, records: &[RoundRecord]) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str("replication,t,policy,arm,propensity,explored,reward,regret,cum_regret\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.replication,
            r.t,
            r.policy,
            r.arm,
            fmt_sig(r.propensity),
            r.explored,
            fmt_sig(r.reward),
            fmt_sig(r.regret),
            fmt_sig(r.cum_regret)
        );
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads back a rounds CSV written by [`write_rounds_csv`].
pub fn read_rounds_csv(path: &Path) -> Result<Vec<RoundRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "replication,t,policy,arm,propensity,explored,reward,regret,cum_regret" {
        return Err(config_err("csv", format!("unexpected header: {header}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(config_err("csv", format!("row {i} has {} fields", fields.len())));
        }
        let parse_f = |s: &str| -> Result<f64, HarnessError> {
            s.parse()
                .map_err(|_| config_err("csv", format!("bad float {s:?} in row {i}")))
        };
        let parse_u = |s: &str| -> Result<usize, HarnessError> {
            s.parse()
                .map_err(|_| config_err("csv", format!("bad integer {s:?} in row {i}")))
        };
        records.push(RoundRecord {
            replication: parse_u(fields[0])?,
            t: parse_u(fields[1])?,
            policy: fields[2].to_string(),
            arm: parse_u(fields[3])?,
            propensity: parse_f(fields[4])?,
            explored: fields[5] == "true",
            reward: parse_f(fields[6])?,
            regret: parse_f(fields[7])?,
            cum_regret: parse_f(fields[8])?,
        });
    }
    Ok(records)
}

fn write_quantiles_csv(path: &Path, curve: &QuantileCurve) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str("t,q1,median,q3\n");
    for i in 0..curve.checkpoints.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            curve.checkpoints[i],
            fmt_sig(curve.q1[i]),
            fmt_sig(curve.median[i]),
            fmt_sig(curve.q3[i])
        );
    }
    fs::write(path, out).map_err(io_err(path))
}

fn write_diagnostics_csv(
    path: &Path,
    diagnostics: &[DiagnosticRecord],
) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str("replication,t,record,value\n");
    for d in diagnostics {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            d.replication,
            d.t,
            d.record,
            fmt_sig(d.value)
        );
    }
    fs::write(path, out).map_err(io_err(path))
}

/// One line of the cross-setting summary: final cumulative-regret
/// quartiles of a finished experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub setting: String,
    pub horizon: usize,
    pub final_q1: f64,
    pub final_median: f64,
    pub final_q3: f64,
}

/// Files written for one experiment.
#[derive(Debug)]
pub struct WrittenFiles {
    pub rounds: PathBuf,
    pub quantiles: Option<PathBuf>,
    pub diagnostics: PathBuf,
}

/// Writes an experiment's records, quantile curve, and diagnostics into
/// `out_dir` under `{policy}_{setting}` filenames, returning the paths
/// and the summary row (when every replication completed).
pub fn write_experiment(
    run: &ExperimentRun,
    out_dir: &Path,
) -> Result<(WrittenFiles, Option<SummaryRow>), HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let policy = run.config.policy.name();
    let base = format!("{policy}_{}", setting_label(&run.config));

    let all_records: Vec<RoundRecord> = run
        .outputs
        .iter()
        .flat_map(|o| o.records.iter().cloned())
        .collect();
    let rounds_path = out_dir.join(format!("{base}.csv"));
    write_rounds_csv(&rounds_path, &all_records)?;

    let all_diagnostics: Vec<DiagnosticRecord> = run
        .outputs
        .iter()
        .flat_map(|o| o.diagnostics.iter().cloned())
        .collect();
    let diagnostics_path = out_dir.join(format!("{base}_diagnostics.csv"));
    write_diagnostics_csv(&diagnostics_path, &all_diagnostics)?;

    let mut quantiles_path = None;
    let mut summary = None;
    if let Some(curve) = &run.curve {
        let path = out_dir.join(format!("{base}_quantiles.csv"));
        write_quantiles_csv(&path, curve)?;
        quantiles_path = Some(path);

        let mut finals: Vec<f64> = run
            .outputs
            .iter()
            .map(|o| o.records.last().expect("nonempty replication").cum_regret)
            .collect();
        finals.sort_by(|a, b| a.partial_cmp(b).expect("regret is never NaN"));
        summary = Some(SummaryRow {
            policy: policy.to_string(),
            setting: setting_label(&run.config),
            horizon: run.config.horizon,
            final_q1: quantile(&finals, 0.25),
            final_median: quantile(&finals, 0.5),
            final_q3: quantile(&finals, 0.75),
        });
    }
    Ok((
        WrittenFiles {
            rounds: rounds_path,
            quantiles: quantiles_path,
            diagnostics: diagnostics_path,
        },
        summary,
    ))
}

/// Writes the cross-setting summary CSV.
pub fn write_summary(rows: &[SummaryRow], out_dir: &Path) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join("summary.csv");
    let mut out = String::new();
    out.push_str("policy,setting,T,final_q1,final_median,final_q3\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.policy,
            row.setting,
            row.horizon,
            fmt_sig(row.final_q1),
            fmt_sig(row.final_median),
            fmt_sig(row.final_q3)
        );
    }
    let mut file = fs::File::create(&path).map_err(io_err(&path))?;
    file.write_all(out.as_bytes()).map_err(io_err(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(policy: PolicySpec) -> ExperimentConfig {
        ExperimentConfig {
            environment: EnvironmentConfig {
                n_arms: 5,
                dim: 8,
                sparsity: 3,
                cross_arm_correlation: 0.3,
                noise_sd: 0.05,
                ..EnvironmentConfig::default()
            },
            policy,
            horizon: 40,
            replications: 3,
            master_seed: 7,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn empty_document_takes_documented_defaults() {
        let config = load_config("{}").unwrap();
        assert_eq!(config.environment.dim, 100);
        assert_eq!(config.environment.sparsity, 5);
        assert_eq!(config.environment.noise_sd, 0.05);
        assert_eq!(config.replications, 10);
        assert_eq!(config.policy.name(), "dr");
        assert_eq!(config.horizon, 2000);
    }

    #[test]
    fn out_of_range_correlation_names_the_field() {
        let err = load_config(r#"{"environment": {"cross_arm_correlation": 1.5}}"#)
            .unwrap_err();
        assert!(
            err.to_string().contains("cross_arm_correlation"),
            "error was: {err}"
        );
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = load_config(r#"{"horizzon": 10}"#).unwrap_err();
        assert!(err.to_string().contains("horizzon"), "error was: {err}");
        let err = load_config(r#"{"environment": {"dimension": 5}}"#).unwrap_err();
        assert!(err.to_string().contains("dimension"), "error was: {err}");
    }

    #[test]
    fn checkpoints_outside_horizon_are_rejected() {
        let err = load_config(r#"{"horizon": 10, "checkpoints": [1, 11]}"#).unwrap_err();
        assert!(err.to_string().contains("checkpoints"), "error was: {err}");
    }

    #[test]
    fn config_round_trips_through_serialization() {
        let doc = r#"{
            "environment": {"n_arms": 7, "dim": 30, "sparsity": 4},
            "policy": {"name": "lasso_bandit", "params": {"q": 2}},
            "horizon": 500,
            "master_seed": 99
        }"#;
        let config = load_config(doc).unwrap();
        let serialized = serde_json::to_string(&config).unwrap();
        let reloaded = load_config(&serialized).unwrap();
        assert_eq!(config, reloaded);
    }

    #[test]
    fn default_checkpoints_are_powers_of_two_plus_horizon() {
        let config = ExperimentConfig {
            horizon: 100,
            ..ExperimentConfig::default()
        };
        assert_eq!(
            config.effective_checkpoints(),
            vec![1, 2, 4, 8, 16, 32, 64, 100]
        );
        let explicit = ExperimentConfig {
            horizon: 100,
            checkpoints: vec![50, 10, 50, 100],
            ..ExperimentConfig::default()
        };
        assert_eq!(explicit.effective_checkpoints(), vec![10, 50, 100]);
    }

    #[test]
    fn oracle_policy_has_zero_cumulative_regret() {
        let config = small_config(PolicySpec::Oracle);
        let output = run_replication(&config, 0).unwrap();
        assert!(output.abort.is_none());
        assert_eq!(output.records.len(), 40);
        for r in &output.records {
            assert_eq!(r.regret, 0.0);
            assert_eq!(r.cum_regret, 0.0);
            assert_eq!(r.policy, "oracle");
        }
    }

    #[test]
    fn identical_seeds_give_identical_records() {
        let config = small_config(PolicySpec::default());
        let a = run_replication(&config, 1).unwrap();
        let b = run_replication(&config, 1).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.diagnostics, b.diagnostics);
        // A different replication index diverges.
        let c = run_replication(&config, 2).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn cumulative_regret_is_nondecreasing_and_prefix_summed() {
        let config = small_config(PolicySpec::default());
        let output = run_replication(&config, 0).unwrap();
        let mut cum = 0.0;
        for r in &output.records {
            assert!(r.regret >= 0.0);
            cum += r.regret;
            assert_eq!(r.cum_regret, cum);
        }
    }

    #[test]
    fn uniform_regret_matches_monte_carlo_gap() {
        // Mean per-round regret of uniform play equals the expected gap
        // E[max_i b_i'beta - b_U'beta], estimated here by independent
        // Monte Carlo on fresh context draws for the same parameter.
        let config = ExperimentConfig {
            environment: EnvironmentConfig {
                n_arms: 10,
                dim: 20,
                sparsity: 5,
                cross_arm_correlation: 0.3,
                noise_sd: 0.05,
                ..EnvironmentConfig::default()
            },
            policy: PolicySpec::Uniform,
            horizon: 10_000,
            replications: 1,
            master_seed: 13,
            ..ExperimentConfig::default()
        };
        let output = run_replication(&config, 0).unwrap();
        let n = output.records.len() as f64;
        let run_mean: f64 = output.records.iter().map(|r| r.regret).sum::<f64>() / n;
        let run_var: f64 = output
            .records
            .iter()
            .map(|r| (r.regret - run_mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);

        let beta = replication_beta(&config, 0);
        let mut mc_rng = stream_rng(999, 0, StreamPurpose::Contexts);
        let mut pick_rng = stream_rng(999, 0, StreamPurpose::Policy);
        let draws = 20_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        use rand::Rng as _;
        for _ in 0..draws {
            let contexts = sample_context_set(&config.environment, &mut mc_rng);
            let (_, best_value) = best_arm(&contexts, &beta);
            let arm = pick_rng.random_range(0..config.environment.n_arms);
            let gap = best_value - expected_reward(&contexts, &beta.beta, arm);
            sum += gap;
            sumsq += gap * gap;
        }
        let mc_mean = sum / draws as f64;
        let mc_var = (sumsq - sum * sum / draws as f64) / (draws as f64 - 1.0);
        let se = (run_var / n + mc_var / draws as f64).sqrt();
        assert!(
            (run_mean - mc_mean).abs() < 3.0 * se,
            "run {run_mean} vs mc {mc_mean} (se {se})"
        );
    }

    #[test]
    fn quantile_interpolation_matches_hand_values() {
        let v: Vec<f64> = (1..=9).map(|x| x as f64).collect();
        assert_eq!(quantile(&v, 0.5), 5.0);
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.75), 3.25);
        let single = [4.2];
        assert_eq!(quantile(&single, 0.25), 4.2);
        assert_eq!(quantile(&single, 0.5), 4.2);
        assert_eq!(quantile(&single, 0.75), 4.2);
    }

    #[test]
    fn aggregation_orders_quartiles_and_rejects_mismatched_horizons() {
        let config = small_config(PolicySpec::default());
        let run = run_experiment(&config).unwrap();
        let curve = run.curve.as_ref().unwrap();
        for i in 0..curve.checkpoints.len() {
            assert!(curve.q1[i] <= curve.median[i]);
            assert!(curve.median[i] <= curve.q3[i]);
        }
        // Single replication: Q1 = median = Q3.
        let single = aggregate_quantiles(&run.outputs[..1], &[10, 40]).unwrap();
        assert_eq!(single.q1, single.median);
        assert_eq!(single.median, single.q3);
        // Mismatched horizons error out.
        let mut short = run_replication(&config, 0).unwrap();
        short.records.truncate(20);
        let full = run_replication(&config, 1).unwrap();
        let err = aggregate_quantiles(&[short, full], &[10]).unwrap_err();
        assert!(err.to_string().contains("horizon"), "error was: {err}");
    }

    #[test]
    fn csv_round_trips_to_ten_significant_digits() {
        let config = small_config(PolicySpec::default());
        let run = run_experiment(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (files, summary) = write_experiment(&run, dir.path()).unwrap();
        assert!(summary.is_some());
        let recovered = read_rounds_csv(&files.rounds).unwrap();
        let originals: Vec<RoundRecord> = run
            .outputs
            .iter()
            .flat_map(|o| o.records.iter().cloned())
            .collect();
        assert_eq!(recovered.len(), originals.len());
        for (a, b) in recovered.iter().zip(&originals) {
            assert_eq!((a.replication, a.t, a.arm), (b.replication, b.t, b.arm));
            assert_eq!(a.policy, b.policy);
            assert_eq!(a.explored, b.explored);
            for (got, want) in [
                (a.propensity, b.propensity),
                (a.reward, b.reward),
                (a.regret, b.regret),
                (a.cum_regret, b.cum_regret),
            ] {
                let tolerance = 1e-9 * want.abs().max(1e-300);
                assert!((got - want).abs() <= tolerance, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn cum_regret_column_is_a_prefix_sum_in_the_file() {
        let config = small_config(PolicySpec::default());
        let run = run_experiment(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (files, _) = write_experiment(&run, dir.path()).unwrap();
        let records = read_rounds_csv(&files.rounds).unwrap();
        let mut cum = std::collections::HashMap::new();
        for r in &records {
            let entry = cum.entry(r.replication).or_insert(0.0);
            *entry += r.regret;
            assert!(
                (r.cum_regret - *entry).abs() <= 1e-6 * entry.abs().max(1.0),
                "cum {} vs prefix {entry}",
                r.cum_regret
            );
        }
    }

    #[test]
    fn empty_record_set_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_rounds_csv(&path, &[]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "replication,t,policy,arm,propensity,explored,reward,regret,cum_regret\n"
        );
        assert!(read_rounds_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn policy_failure_aborts_with_a_diagnostic_record() {
        let config = small_config(PolicySpec::Uniform);
        let beta = replication_beta(&config, 0);
        let mut policy = PolicyInstance::FailAt(15, UniformPolicy);
        let output = run_rounds(&config, 0, &beta, &mut policy);
        assert!(output.abort.is_some());
        assert_eq!(output.records.len(), 14);
        let abort_row = output
            .diagnostics
            .iter()
            .find(|d| d.record == "abort")
            .expect("abort diagnostic present");
        assert_eq!(abort_row.t, 15);
    }

    #[test]
    fn diagnostics_rows_appear_at_checkpoints() {
        let config = ExperimentConfig {
            checkpoints: vec![8, 16, 40],
            ..small_config(PolicySpec::default())
        };
        let output = run_replication(&config, 0).unwrap();
        let at = |t: usize, tag: &str| {
            output
                .diagnostics
                .iter()
                .any(|d| d.t == t && d.record == tag)
        };
        for t in [8, 16, 40] {
            assert!(at(t, "gram_trace"));
            assert!(at(t, "l1_error"));
            assert!(at(t, "l1_bound"));
            assert!(at(t, "pseudo_reward_std"));
        }
        assert_eq!(
            output.diagnostics.iter().filter(|d| d.record == "gram_trace").count(),
            3
        );
    }

    #[test]
    fn fixed_beta_reuses_one_parameter_across_replications() {
        let mut config = small_config(PolicySpec::Oracle);
        config.fix_beta_across_replications = true;
        let a = replication_beta(&config, 0);
        let b = replication_beta(&config, 5);
        assert_eq!(a.beta, b.beta);
        config.fix_beta_across_replications = false;
        let c = replication_beta(&config, 5);
        assert_ne!(a.beta, c.beta);
    }

    #[test]
    fn setting_labels_distinguish_tuning_candidates() {
        let a = small_config(PolicySpec::Dr {
            params: DrPolicyConfig {
                lambda1: 0.5,
                ..DrPolicyConfig::default()
            },
        });
        let b = small_config(PolicySpec::Dr {
            params: DrPolicyConfig {
                lambda1: 1.0,
                ..DrPolicyConfig::default()
            },
        });
        assert_ne!(setting_label(&a), setting_label(&b));
    }

    #[test]
    fn byte_identical_output_across_repeated_runs() {
        let config = small_config(PolicySpec::default());
        let dir = tempfile::tempdir().unwrap();
        let run1 = run_experiment(&config).unwrap();
        let (files1, _) = write_experiment(&run1, &dir.path().join("a")).unwrap();
        let run2 = run_experiment(&config).unwrap();
        let (files2, _) = write_experiment(&run2, &dir.path().join("b")).unwrap();
        let bytes1 = fs::read(&files1.rounds).unwrap();
        let bytes2 = fs::read(&files2.rounds).unwrap();
        assert_eq!(bytes1, bytes2);
        let d1 = fs::read(&files1.diagnostics).unwrap();
        let d2 = fs::read(&files2.diagnostics).unwrap();
        assert_eq!(d1, d2);
    }
}
