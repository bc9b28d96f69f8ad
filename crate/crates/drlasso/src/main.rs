//! Experiment runner CLI: loads an optional JSON config, applies flag
//! overrides, expands comma-separated flag values into a grid of runs,
//! and writes per-run CSVs plus a cross-run summary.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use drlasso::baselines::LassoBanditConfig;
use drlasso::harness::{
    load_config, run_experiment, setting_label, write_experiment, write_summary,
    ExperimentConfig, HarnessError, PolicySpec, SummaryRow,
};
use drlasso::policy::DrPolicyConfig;

/// Sparse linear contextual bandit experiments: doubly robust Lasso
/// bandit, baselines, and a correlated synthetic environment.
///
/// Flags override config-file values. Comma-separated values for --N,
/// --rho2, --algo, --lambda1, --lambda2, and --zt expand into a grid of
/// runs sharing one output directory and summary.
#[derive(Debug, Parser)]
#[command(name = "drlasso", version)]
struct Cli {
    /// JSON experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Horizon (rounds per replication).
    #[arg(long = "T")]
    horizon: Option<usize>,

    /// Number of arms; comma-separated list runs a grid.
    #[arg(long = "N", value_delimiter = ',')]
    n_arms: Option<Vec<usize>>,

    /// Context dimension.
    #[arg(long)]
    d: Option<usize>,

    /// Sparsity of the true parameter.
    #[arg(long)]
    s0: Option<usize>,

    /// Cross-arm correlation (rho squared); list runs a grid.
    #[arg(long, value_delimiter = ',')]
    rho2: Option<Vec<f64>>,

    /// Reward noise standard deviation.
    #[arg(long = "noise-sd")]
    noise_sd: Option<f64>,

    /// Policy: dr, dr_ipw, lasso_bandit, uniform, greedy, oracle;
    /// list runs a grid.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<String>>,

    /// Exploration scale (dr family) or forced-sample penalty
    /// (lasso_bandit); list runs a tuning grid.
    #[arg(long, value_delimiter = ',')]
    lambda1: Option<Vec<f64>>,

    /// Regularization scale; list runs a tuning grid.
    #[arg(long, value_delimiter = ',')]
    lambda2: Option<Vec<f64>>,

    /// Uniform-phase length (dr family); list runs a tuning grid.
    #[arg(long, value_delimiter = ',')]
    zt: Option<Vec<usize>>,

    /// Number of replications.
    #[arg(long)]
    reps: Option<usize>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::FAILURE
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let mut base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            load_config(&text)?
        }
        None => ExperimentConfig::default(),
    };

    // Scalar overrides.
    if let Some(horizon) = cli.horizon {
        base.horizon = horizon;
    }
    if let Some(d) = cli.d {
        base.environment.dim = d;
    }
    if let Some(s0) = cli.s0 {
        base.environment.sparsity = s0;
    }
    if let Some(noise_sd) = cli.noise_sd {
        base.environment.noise_sd = noise_sd;
    }
    if let Some(reps) = cli.reps {
        base.replications = reps;
    }
    if let Some(seed) = cli.seed {
        base.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        base.output_path = out.display().to_string();
    }

    // Grid axes; a missing flag keeps the config's single value.
    let algos: Vec<PolicySpec> = match &cli.algo {
        Some(names) => names
            .iter()
            .map(|name| spec_for(name, &base.policy))
            .collect::<Result<_, _>>()?,
        None => vec![base.policy.clone()],
    };
    let n_list = cli
        .n_arms
        .clone()
        .unwrap_or_else(|| vec![base.environment.n_arms]);
    let rho_list = cli
        .rho2
        .clone()
        .unwrap_or_else(|| vec![base.environment.cross_arm_correlation]);
    let lambda1_opts = optional_axis(&cli.lambda1);
    let lambda2_opts = optional_axis(&cli.lambda2);
    let zt_opts = optional_axis(&cli.zt);

    let out_dir = PathBuf::from(&base.output_path);
    let mut summary_rows: Vec<SummaryRow> = Vec::new();
    let mut aborts: Vec<String> = Vec::new();

    for algo in &algos {
        let tuning: Vec<(Option<f64>, Option<f64>, Option<usize>)> = if algo.takes_tuning() {
            let mut combos = Vec::new();
            for &l1 in &lambda1_opts {
                for &l2 in &lambda2_opts {
                    for &zt in &zt_opts {
                        combos.push((l1, l2, zt));
                    }
                }
            }
            combos
        } else {
            vec![(None, None, None)]
        };
        for &n in &n_list {
            for &rho in &rho_list {
                for &(l1, l2, zt) in &tuning {
                    let mut config = base.clone();
                    config.environment.n_arms = n;
                    config.environment.cross_arm_correlation = rho;
                    config.policy = apply_tuning(algo.clone(), l1, l2, zt);
                    config.validate()?;

                    let run = run_experiment(&config)?;
                    let (files, summary) = write_experiment(&run, &out_dir)?;
                    println!(
                        "{} {}: wrote {}",
                        config.policy.name(),
                        setting_label(&config),
                        files.rounds.display()
                    );
                    if let Some(abort) = run.first_abort() {
                        eprintln!("warning: {abort}");
                        aborts.push(abort.to_string());
                    }
                    if let Some(row) = summary {
                        summary_rows.push(row);
                    }
                }
            }
        }
    }

    let summary_path = write_summary(&summary_rows, &out_dir)?;
    println!("summary: {}", summary_path.display());

    if aborts.is_empty() {
        Ok(())
    } else {
        Err(config_err(
            "replication",
            format!("{} replication(s) aborted; see diagnostics files", aborts.len()),
        ))
    }
}

/// A tuning flag's grid axis: the provided candidates, or a single
/// "keep the config value" entry when the flag is absent.
fn optional_axis<T: Copy>(flag: &Option<Vec<T>>) -> Vec<Option<T>> {
    match flag {
        Some(values) => values.iter().copied().map(Some).collect(),
        None => vec![None],
    }
}

trait TakesTuning {
    fn takes_tuning(&self) -> bool;
}

impl TakesTuning for PolicySpec {
    fn takes_tuning(&self) -> bool {
        !matches!(self, PolicySpec::Uniform | PolicySpec::Oracle)
    }
}

/// Builds the policy spec for an --algo name, inheriting the base
/// config's parameter block when the families match.
fn spec_for(name: &str, base: &PolicySpec) -> Result<PolicySpec, HarnessError> {
    let dr_params = match base {
        PolicySpec::Dr { params } | PolicySpec::DrIpw { params } | PolicySpec::Greedy { params } => {
            *params
        }
        _ => DrPolicyConfig::default(),
    };
    let lb_params = match base {
        PolicySpec::LassoBandit { params } => *params,
        _ => LassoBanditConfig::default(),
    };
    Ok(match name {
        "dr" => PolicySpec::Dr { params: dr_params },
        "dr_ipw" => PolicySpec::DrIpw { params: dr_params },
        "greedy" => PolicySpec::Greedy { params: dr_params },
        "lasso_bandit" => PolicySpec::LassoBandit { params: lb_params },
        "uniform" => PolicySpec::Uniform,
        "oracle" => PolicySpec::Oracle,
        other => {
            return Err(config_err(
                "algo",
                format!(
                    "must be one of dr, dr_ipw, lasso_bandit, uniform, greedy, oracle (got {other:?})"
                ),
            ))
        }
    })
}

/// Applies tuning-grid values to the fields each policy family exposes.
fn apply_tuning(
    spec: PolicySpec,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    zt: Option<usize>,
) -> PolicySpec {
    match spec {
        PolicySpec::Dr { mut params } => {
            override_dr(&mut params, lambda1, lambda2, zt);
            PolicySpec::Dr { params }
        }
        PolicySpec::DrIpw { mut params } => {
            override_dr(&mut params, lambda1, lambda2, zt);
            PolicySpec::DrIpw { params }
        }
        PolicySpec::Greedy { mut params } => {
            // Exploration settings are forced off at construction; only
            // the learning-rate override applies.
            if let Some(l2) = lambda2 {
                params.lambda2 = l2;
            }
            PolicySpec::Greedy { params }
        }
        PolicySpec::LassoBandit { mut params } => {
            if let Some(l1) = lambda1 {
                params.lambda1 = l1;
            }
            if let Some(l2) = lambda2 {
                params.lambda2 = l2;
            }
            PolicySpec::LassoBandit { params }
        }
        other => other,
    }
}

fn override_dr(
    params: &mut DrPolicyConfig,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    zt: Option<usize>,
) {
    if let Some(l1) = lambda1 {
        params.lambda1 = l1;
    }
    if let Some(l2) = lambda2 {
        params.lambda2 = l2;
    }
    if let Some(z) = zt {
        params.zt = z;
    }
}
