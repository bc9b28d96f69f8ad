//! L1-penalized least squares via cyclic coordinate descent.
//!
//! The solver minimizes the sample-averaged objective
//!
//! ```text
//! f(beta) = (1/t) * sum_tau (y_tau - x_tau' beta)^2 + penalty * ||beta||_1
//! ```
//!
//! with no intercept and no feature standardization: callers own the scale
//! of their features. Coordinate `j` is updated in closed form by soft
//! thresholding the partial-residual correlation, cycling `j = 1..d` in a
//! fixed order so results are deterministic for identical inputs.
//!
//! Two internal strategies share the same math: a Gram-matrix path that
//! reuses accumulated `X'X` statistics (cheap when the same problem is
//! refit many times as samples stream in, as the bandit policies do), and
//! a residual path that works directly on the stored columns (memory-safe
//! for very wide designs where a Gram matrix would not fit). The path is
//! chosen by dimension only, so it is deterministic.

use thiserror::Error;

/// Widest design for which the incremental Gram/X'y cache is maintained.
/// Above this, fits fall back to the residual path (the Gram matrix would
/// cost `dim^2` memory, which is wasteful for wide, sample-poor designs).
const GRAM_CACHE_MAX_DIM: usize = 256;

/// One regression observation: features `x` and target `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub features: Vec<f64>,
    pub target: f64,
}

/// Stopping rule and tolerances for the coordinate-descent loop.
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    /// A full sweep whose largest coefficient change is at most this is a
    /// convergence candidate.
    pub sweep_tol: f64,
    /// Hard cap on coordinate sweeps before giving up.
    pub max_sweeps: usize,
    /// Stationarity residual the returned solution must satisfy.
    pub kkt_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            sweep_tol: 1e-7,
            max_sweeps: 10_000,
            kkt_tol: 1e-6,
        }
    }
}

/// Errors from problem assembly or the solver.
#[derive(Debug, Error)]
pub enum LassoError {
    #[error("penalty must be finite and nonnegative, got {0}")]
    InvalidPenalty(f64),
    #[error("feature dimension must be at least 1")]
    ZeroDim,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample {index} contains a non-finite value")]
    NonFiniteSample { index: usize },
    #[error("cannot fit a problem with no samples")]
    EmptyProblem,
    #[error(
        "coordinate descent did not converge: {sweeps} sweeps, KKT residual {kkt_residual:.3e}"
    )]
    NonConvergence {
        /// Last iterate, for diagnosis or as a warm start after loosening
        /// the settings.
        beta: Vec<f64>,
        kkt_residual: f64,
        sweeps: usize,
    },
}

/// Column-major design matrix that grows by rows. Each column is a
/// contiguous slice (coordinate descent walks columns), and capacity
/// doubles on overflow so row pushes are amortized O(dim).
#[derive(Debug, Clone)]
struct ColMatrix {
    data: Vec<f64>,
    dim: usize,
    rows: usize,
    cap_rows: usize,
}

impl ColMatrix {
    fn new(dim: usize) -> Self {
        ColMatrix {
            data: Vec::new(),
            dim,
            rows: 0,
            cap_rows: 0,
        }
    }

    fn col(&self, j: usize) -> &[f64] {
        let start = j * self.cap_rows;
        &self.data[start..start + self.rows]
    }

    fn entry(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.cap_rows + row]
    }

    fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        if self.rows == self.cap_rows {
            let new_cap = (self.cap_rows * 2).max(8);
            let mut data = vec![0.0; new_cap * self.dim];
            for j in 0..self.dim {
                let src = j * self.cap_rows;
                let dst = j * new_cap;
                data[dst..dst + self.rows]
                    .copy_from_slice(&self.data[src..src + self.rows]);
            }
            self.data = data;
            self.cap_rows = new_cap;
        }
        for (j, &v) in row.iter().enumerate() {
            self.data[j * self.cap_rows + self.rows] = v;
        }
        self.rows += 1;
    }
}

/// A penalized regression problem: a growing design matrix, its targets,
/// and the current L1 penalty. Samples are append-only so the problem can
/// serve as the policies' training store; for narrow designs the Gram
/// statistics `X'X` and `X'y` are kept incrementally to make repeated
/// refits cheap.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    design: ColMatrix,
    targets: Vec<f64>,
    penalty: f64,
    /// Row-major `dim x dim` accumulation of `x x'`, if cached.
    gram: Option<Vec<f64>>,
    /// Accumulation of `y * x`.
    xty: Vec<f64>,
}

impl LassoProblem {
    /// Creates an empty problem of fixed dimension.
    pub fn new(dim: usize, penalty: f64) -> Result<Self, LassoError> {
        if dim == 0 {
            return Err(LassoError::ZeroDim);
        }
        check_penalty(penalty)?;
        let gram = (dim <= GRAM_CACHE_MAX_DIM).then(|| vec![0.0; dim * dim]);
        Ok(LassoProblem {
            design: ColMatrix::new(dim),
            targets: Vec::new(),
            penalty,
            gram,
            xty: vec![0.0; dim],
        })
    }

    /// Builds a problem from a batch of samples.
    pub fn from_samples(
        samples: &[RegressionSample],
        penalty: f64,
    ) -> Result<Self, LassoError> {
        let dim = samples.first().map_or(0, |s| s.features.len());
        let mut problem = LassoProblem::new(dim, penalty)?;
        for sample in samples {
            problem.push_sample(&sample.features, sample.target)?;
        }
        Ok(problem)
    }

    /// Appends one observation, updating the cached statistics.
    pub fn push_sample(&mut self, features: &[f64], target: f64) -> Result<(), LassoError> {
        let dim = self.dim();
        if features.len() != dim {
            return Err(LassoError::DimensionMismatch {
                expected: dim,
                got: features.len(),
            });
        }
        if !target.is_finite() || features.iter().any(|v| !v.is_finite()) {
            return Err(LassoError::NonFiniteSample {
                index: self.num_samples(),
            });
        }
        self.design.push_row(features);
        self.targets.push(target);
        if let Some(gram) = self.gram.as_mut() {
            for (i, &xi) in features.iter().enumerate() {
                if xi != 0.0 {
                    let row = &mut gram[i * dim..(i + 1) * dim];
                    for (j, &xj) in features.iter().enumerate() {
                        row[j] += xi * xj;
                    }
                }
            }
        }
        for (j, &xj) in features.iter().enumerate() {
            self.xty[j] += target * xj;
        }
        Ok(())
    }

    /// Replaces the L1 penalty (the data and statistics are unchanged, so
    /// this is how a decaying-penalty schedule reuses one problem).
    pub fn set_penalty(&mut self, penalty: f64) -> Result<(), LassoError> {
        check_penalty(penalty)?;
        self.penalty = penalty;
        Ok(())
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn dim(&self) -> usize {
        self.design.dim
    }

    pub fn num_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Reconstructs the `idx`-th stored observation.
    pub fn sample(&self, idx: usize) -> RegressionSample {
        let features = (0..self.dim()).map(|j| self.design.entry(idx, j)).collect();
        RegressionSample {
            features,
            target: self.targets[idx],
        }
    }

    /// Value of the penalized objective at `beta`.
    pub fn objective(&self, beta: &[f64]) -> f64 {
        let t = self.num_samples() as f64;
        let mut sse = 0.0;
        for (row, &y) in self.targets.iter().enumerate() {
            let mut pred = 0.0;
            for (j, &b) in beta.iter().enumerate() {
                if b != 0.0 {
                    pred += self.design.entry(row, j) * b;
                }
            }
            sse += (y - pred) * (y - pred);
        }
        sse / t + self.penalty * beta.iter().map(|b| b.abs()).sum::<f64>()
    }
}

fn check_penalty(penalty: f64) -> Result<(), LassoError> {
    if !penalty.is_finite() || penalty < 0.0 {
        return Err(LassoError::InvalidPenalty(penalty));
    }
    Ok(())
}

/// A converged fit: the estimate, the number of coordinate sweeps spent,
/// and the stationarity residual actually achieved (at most the
/// configured `kkt_tol`).
#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub beta_hat: Vec<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
}

/// Soft-thresholding operator `sign(z) * max(|z| - gamma, 0)`, the
/// closed-form minimizer of `(b - z)^2 / 2 + gamma * |b|`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    z.signum() * (z.abs() - gamma).max(0.0)
}

/// Fits the problem with default [`SolverSettings`].
pub fn fit_lasso(
    problem: &LassoProblem,
    warm_start: Option<&[f64]>,
) -> Result<LassoSolution, LassoError> {
    fit_lasso_with(problem, warm_start, &SolverSettings::default())
}

/// Fits the problem, optionally warm-starting from a previous estimate.
///
/// Returns [`LassoError::NonConvergence`] (carrying the last iterate) if
/// the sweep cap is exhausted before the solution is stationary.
pub fn fit_lasso_with(
    problem: &LassoProblem,
    warm_start: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<LassoSolution, LassoError> {
    if problem.is_empty() {
        return Err(LassoError::EmptyProblem);
    }
    let dim = problem.dim();
    let mut beta = match warm_start {
        Some(w) if w.len() != dim => {
            return Err(LassoError::DimensionMismatch {
                expected: dim,
                got: w.len(),
            })
        }
        Some(w) => w.to_vec(),
        None => vec![0.0; dim],
    };
    let (sweeps, kkt_residual) = if problem.gram.is_some() {
        solve_gram(problem, &mut beta, settings)
    } else {
        solve_residual(problem, &mut beta, settings)
    }?;
    Ok(LassoSolution {
        beta_hat: beta,
        sweeps,
        kkt_residual,
    })
}

/// Maximum coordinatewise violation of the stationarity conditions of the
/// objective at `beta`: with `g_j` the gradient of the smooth part,
/// active coordinates contribute `|g_j + penalty * sign(beta_j)|` and
/// inactive ones `max(0, |g_j| - penalty)`.
pub fn kkt_residual(problem: &LassoProblem, beta: &[f64]) -> Result<f64, LassoError> {
    if beta.len() != problem.dim() {
        return Err(LassoError::DimensionMismatch {
            expected: problem.dim(),
            got: beta.len(),
        });
    }
    if problem.is_empty() {
        return Err(LassoError::EmptyProblem);
    }
    let residual = full_residual(problem, beta);
    let t = problem.num_samples() as f64;
    let mut worst: f64 = 0.0;
    for (j, &beta_j) in beta.iter().enumerate() {
        let g = -2.0 / t * dot(problem.design.col(j), &residual);
        worst = worst.max(kkt_term(g, beta_j, problem.penalty));
    }
    Ok(worst)
}

fn kkt_term(gradient: f64, beta_j: f64, penalty: f64) -> f64 {
    if beta_j != 0.0 {
        (gradient + penalty * beta_j.signum()).abs()
    } else {
        (gradient.abs() - penalty).max(0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn full_residual(problem: &LassoProblem, beta: &[f64]) -> Vec<f64> {
    let mut residual = problem.targets.clone();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (r, &x) in residual.iter_mut().zip(problem.design.col(j)) {
                *r -= b * x;
            }
        }
    }
    residual
}

/// Coordinate descent against the cached Gram statistics. Maintains
/// `s = X'X beta` so each coordinate update costs O(dim).
fn solve_gram(
    problem: &LassoProblem,
    beta: &mut [f64],
    settings: &SolverSettings,
) -> Result<(usize, f64), LassoError> {
    let dim = problem.dim();
    let t = problem.num_samples() as f64;
    let gram = problem.gram.as_deref().expect("gram path requires cache");
    let half_penalty = problem.penalty / 2.0;

    let mut s = vec![0.0; dim];
    for (k, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (sj, &g) in s.iter_mut().zip(&gram[k * dim..(k + 1) * dim]) {
                *sj += b * g;
            }
        }
    }

    let update = |j: usize, beta: &mut [f64], s: &mut [f64]| -> f64 {
        let gjj = gram[j * dim + j];
        let old = beta[j];
        let new = if gjj <= 0.0 {
            0.0 // all-zero column: the penalty makes 0 optimal
        } else {
            let a_j = gjj / t;
            let c_j = (problem.xty[j] - s[j]) / t + a_j * old;
            soft_threshold(c_j, half_penalty) / a_j
        };
        let delta = new - old;
        if delta != 0.0 {
            beta[j] = new;
            for (sk, &g) in s.iter_mut().zip(&gram[j * dim..(j + 1) * dim]) {
                *sk += delta * g;
            }
        }
        delta.abs()
    };

    let mut sweeps = 0;
    loop {
        // Full pass over every coordinate.
        let mut max_delta: f64 = 0.0;
        for j in 0..dim {
            max_delta = max_delta.max(update(j, beta, &mut s));
        }
        sweeps += 1;
        if max_delta <= settings.sweep_tol {
            // Recompute s to shed incremental drift before judging.
            for (k, sk) in s.iter_mut().enumerate() {
                *sk = dot(&gram[k * dim..(k + 1) * dim], beta);
            }
            let kkt = (0..dim)
                .map(|j| {
                    let g = -2.0 / t * (problem.xty[j] - s[j]);
                    kkt_term(g, beta[j], problem.penalty)
                })
                .fold(0.0, f64::max);
            if kkt <= settings.kkt_tol {
                return Ok((sweeps, kkt));
            }
        }
        if sweeps >= settings.max_sweeps {
            // The sweep budget is spent; the iterate may still certify
            // (near-collinear coordinates can keep per-sweep changes
            // above the tolerance long after stationarity is reached).
            let kkt = kkt_residual(problem, beta).unwrap_or(f64::INFINITY);
            if kkt <= settings.kkt_tol {
                return Ok((sweeps, kkt));
            }
            return Err(nonconvergence(problem, beta, sweeps));
        }
        // Cheap inner sweeps over the active set until it stabilizes.
        let active: Vec<usize> = (0..dim).filter(|&j| beta[j] != 0.0).collect();
        if active.len() < dim {
            while sweeps < settings.max_sweeps {
                let mut inner_delta: f64 = 0.0;
                for &j in &active {
                    inner_delta = inner_delta.max(update(j, beta, &mut s));
                }
                sweeps += 1;
                if inner_delta <= settings.sweep_tol {
                    break;
                }
            }
        }
    }
}

/// Coordinate descent against the stored columns, maintaining the full
/// residual vector. Used for designs too wide for a Gram cache.
fn solve_residual(
    problem: &LassoProblem,
    beta: &mut [f64],
    settings: &SolverSettings,
) -> Result<(usize, f64), LassoError> {
    let dim = problem.dim();
    let t = problem.num_samples() as f64;
    let half_penalty = problem.penalty / 2.0;
    let col_scale: Vec<f64> = (0..dim)
        .map(|j| dot(problem.design.col(j), problem.design.col(j)) / t)
        .collect();

    let mut residual = full_residual(problem, beta);

    let update = |j: usize, beta: &mut [f64], residual: &mut [f64]| -> f64 {
        let a_j = col_scale[j];
        let old = beta[j];
        let new = if a_j <= 0.0 {
            0.0
        } else {
            let c_j = dot(problem.design.col(j), residual) / t + a_j * old;
            soft_threshold(c_j, half_penalty) / a_j
        };
        let delta = new - old;
        if delta != 0.0 {
            beta[j] = new;
            for (r, &x) in residual.iter_mut().zip(problem.design.col(j)) {
                *r -= delta * x;
            }
        }
        delta.abs()
    };

    let mut sweeps = 0;
    loop {
        let mut max_delta: f64 = 0.0;
        for j in 0..dim {
            max_delta = max_delta.max(update(j, beta, &mut residual));
        }
        sweeps += 1;
        if max_delta <= settings.sweep_tol {
            residual = full_residual(problem, beta);
            let kkt = (0..dim)
                .map(|j| {
                    let g = -2.0 / t * dot(problem.design.col(j), &residual);
                    kkt_term(g, beta[j], problem.penalty)
                })
                .fold(0.0, f64::max);
            if kkt <= settings.kkt_tol {
                return Ok((sweeps, kkt));
            }
        }
        if sweeps >= settings.max_sweeps {
            let kkt = kkt_residual(problem, beta).unwrap_or(f64::INFINITY);
            if kkt <= settings.kkt_tol {
                return Ok((sweeps, kkt));
            }
            return Err(nonconvergence(problem, beta, sweeps));
        }
        let active: Vec<usize> = (0..dim).filter(|&j| beta[j] != 0.0).collect();
        if active.len() < dim {
            while sweeps < settings.max_sweeps {
                let mut inner_delta: f64 = 0.0;
                for &j in &active {
                    inner_delta = inner_delta.max(update(j, beta, &mut residual));
                }
                sweeps += 1;
                if inner_delta <= settings.sweep_tol {
                    break;
                }
            }
        }
    }
}

fn nonconvergence(problem: &LassoProblem, beta: &[f64], sweeps: usize) -> LassoError {
    let kkt = kkt_residual(problem, beta).unwrap_or(f64::INFINITY);
    LassoError::NonConvergence {
        beta: beta.to_vec(),
        kkt_residual: kkt,
        sweeps,
    }
}
