//! Runtime verification of the statistical machinery: the empirical
//! Gram matrix of average contexts, a randomized estimate of the
//! compatibility constant, the L1 estimation error against its
//! theoretical envelope, and streaming variance tracking for
//! pseudo-reward dispersion comparisons.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Diagnostics-level errors.
#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("support set is empty")]
    EmptySupport,
    #[error("support index {index} out of range for dimension {dim}")]
    SupportOutOfRange { index: usize, dim: usize },
    #[error("dense cone search supports dimension <= {max}, got {dim}")]
    DimensionTooLarge { dim: usize, max: usize },
}

/// Running sum of outer products of average contexts. The normalized
/// matrix `sum_outer / count` is the empirical Gram matrix; it is
/// symmetric by construction and positive semidefinite as an average
/// of rank-one terms.
#[derive(Debug, Clone)]
pub struct GramAccumulator {
    sum_outer: Vec<f64>,
    dim: usize,
    count: usize,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        GramAccumulator {
            sum_outer: vec![0.0; dim * dim],
            dim,
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one vector's outer product.
    pub fn accumulate(&mut self, avg_context: &[f64]) -> Result<(), DiagnosticsError> {
        if avg_context.len() != self.dim {
            return Err(DiagnosticsError::DimensionMismatch {
                expected: self.dim,
                got: avg_context.len(),
            });
        }
        for (i, &vi) in avg_context.iter().enumerate() {
            let row = &mut self.sum_outer[i * self.dim..(i + 1) * self.dim];
            for (entry, &vj) in row.iter_mut().zip(avg_context) {
                *entry += vi * vj;
            }
        }
        self.count += 1;
        Ok(())
    }

    /// The normalized Gram matrix `sum_outer / count`, row-major.
    ///
    /// Panics if nothing has been accumulated.
    pub fn normalized(&self) -> Vec<f64> {
        assert!(self.count > 0, "no samples accumulated");
        let scale = 1.0 / self.count as f64;
        self.sum_outer.iter().map(|x| x * scale).collect()
    }

    /// Trace of the normalized Gram matrix; equals the average squared
    /// L2 norm of the accumulated vectors.
    pub fn trace(&self) -> f64 {
        assert!(self.count > 0, "no samples accumulated");
        (0..self.dim)
            .map(|i| self.sum_outer[i * self.dim + i])
            .sum::<f64>()
            / self.count as f64
    }
}

/// Result of the randomized compatibility search. `phi_hat` is an
/// *upper* estimate of the true constant (the true value is an infimum
/// over a cone; sampling plus local descent can only overshoot it), so
/// it is reported together with the evaluation count and never as
/// certified.
#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    pub phi_hat: f64,
    pub samples_used: usize,
    pub support: Vec<usize>,
}

const COMPATIBILITY_MAX_DIM: usize = 32;

/// Estimates the compatibility constant of a symmetric PSD `matrix`
/// (row-major, `dim x dim`) over `support`: the square root of the
/// minimum of `|I| * v' M v` over directions in the cone
/// `{ ||v_I||_1 = 1, ||v_{I^c}||_1 <= 3 }`, located by random cone
/// sampling followed by projected perturbation descent from the best
/// sample. Dense search only scales to small dimensions.
pub fn estimate_compatibility(
    matrix: &[f64],
    dim: usize,
    support: &[usize],
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<CompatibilityReport, DiagnosticsError> {
    if matrix.len() != dim * dim {
        return Err(DiagnosticsError::DimensionMismatch {
            expected: dim * dim,
            got: matrix.len(),
        });
    }
    if dim > COMPATIBILITY_MAX_DIM {
        return Err(DiagnosticsError::DimensionTooLarge {
            dim,
            max: COMPATIBILITY_MAX_DIM,
        });
    }
    if support.is_empty() {
        return Err(DiagnosticsError::EmptySupport);
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= dim) {
        return Err(DiagnosticsError::SupportOutOfRange { index: bad, dim });
    }
    assert!(n_samples >= 1, "need at least one sample");

    let mut in_support = vec![false; dim];
    for &i in support {
        in_support[i] = true;
    }
    let support_size = support.len() as f64;
    let objective = |v: &[f64]| support_size * quadratic_form(matrix, dim, v);

    // Phase 1: random cone directions. A quarter of the budget stays on
    // the support subspace (off-support mass often hurts, and the pure
    // directions anchor the search); the rest spreads off-support mass
    // uniformly over [0, 3].
    let mut best_v = vec![0.0; dim];
    let mut best_val = f64::INFINITY;
    let mut evaluations = 0usize;
    let mut v = vec![0.0; dim];
    for sample in 0..n_samples {
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = if in_support[j] || sample % 4 != 0 {
                rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
        }
        let off_mass = if sample % 4 == 0 {
            0.0
        } else {
            rng.random_range(0.0..3.0)
        };
        project_to_cone(&mut v, &in_support, off_mass);
        let val = objective(&v);
        evaluations += 1;
        if val < best_val {
            best_val = val;
            best_v.copy_from_slice(&v);
        }
    }

    // Phase 2: projected perturbation descent from the best sample.
    let mut step = 0.25;
    let mut failures = 0usize;
    while step > 1e-7 {
        for (j, slot) in v.iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            *slot = best_v[j] + step * noise;
        }
        let off_mass: f64 = v
            .iter()
            .enumerate()
            .filter(|(j, _)| !in_support[*j])
            .map(|(_, x)| x.abs())
            .sum();
        project_to_cone(&mut v, &in_support, off_mass.min(3.0));
        let val = objective(&v);
        evaluations += 1;
        if val < best_val {
            best_val = val;
            best_v.copy_from_slice(&v);
            failures = 0;
        } else {
            failures += 1;
            if failures >= 30 {
                step *= 0.5;
                failures = 0;
            }
        }
    }

    let phi_hat = best_val.max(0.0).sqrt();
    Ok(CompatibilityReport {
        phi_hat,
        samples_used: evaluations,
        support: support.to_vec(),
    })
}

/// Rescales `v` so that `||v_I||_1 = 1` and the off-support block has
/// L1 mass exactly `off_mass` (zeroing it when there is nothing to
/// scale). Degenerate all-zero support blocks reset to uniform.
fn project_to_cone(v: &mut [f64], in_support: &[bool], off_mass: f64) {
    debug_assert!((0.0..=3.0).contains(&off_mass));
    let support_l1: f64 = v
        .iter()
        .zip(in_support)
        .filter(|(_, &m)| m)
        .map(|(x, _)| x.abs())
        .sum();
    let support_count = in_support.iter().filter(|&&m| m).count();
    if support_l1 < 1e-12 {
        for (x, &m) in v.iter_mut().zip(in_support) {
            if m {
                *x = 1.0 / support_count as f64;
            }
        }
    } else {
        for (x, &m) in v.iter_mut().zip(in_support) {
            if m {
                *x /= support_l1;
            }
        }
    }
    let off_l1: f64 = v
        .iter()
        .zip(in_support)
        .filter(|(_, &m)| !m)
        .map(|(x, _)| x.abs())
        .sum();
    if off_l1 < 1e-12 {
        for (x, &m) in v.iter_mut().zip(in_support) {
            if !m {
                *x = 0.0;
            }
        }
    } else {
        let scale = off_mass / off_l1;
        for (x, &m) in v.iter_mut().zip(in_support) {
            if !m {
                *x *= scale;
            }
        }
    }
}

fn quadratic_form(matrix: &[f64], dim: usize, v: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = &matrix[i * dim..(i + 1) * dim];
        let mut inner = 0.0;
        for (&m, &vj) in row.iter().zip(v) {
            inner += m * vj;
        }
        total += vi * inner;
    }
    total
}

/// Inputs of the L1-error envelope.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    /// Sparsity of the true parameter.
    pub s0: usize,
    /// Ambient dimension.
    pub d: usize,
    /// Lower bound on the compatibility constant.
    pub phi1: f64,
    /// Scale of the pseudo-reward dispersion (not observable; defaults
    /// to 1, with the empirical pseudo-reward standard deviation
    /// reported separately as its data-driven stand-in).
    pub r_tilde: f64,
    /// Overall failure probability.
    pub delta: f64,
    /// Share of the failure probability spent on the warm-up phase.
    pub delta_prime: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            s0: 5,
            d: 100,
            phi1: 1.0,
            r_tilde: 1.0,
            delta: 0.1,
            delta_prime: 0.01,
        }
    }
}

impl BoundParams {
    fn validate(&self) {
        assert!(self.s0 >= 1 && self.d >= 1);
        assert!(self.phi1 > 0.0 && self.phi1.is_finite());
        assert!(self.r_tilde > 0.0 && self.r_tilde.is_finite());
        assert!(
            0.0 < self.delta_prime && self.delta_prime < self.delta && self.delta < 1.0,
            "need 0 < delta_prime < delta < 1"
        );
    }
}

/// The L1 estimation error `sum_j |beta_hat_j - beta_j|` and its
/// theoretical envelope
/// `(sqrt(128)/phi1^2) * s0 * r_tilde * sqrt(ln(e d t^2/(delta-delta')) / t)`.
pub fn l1_error_and_bound(
    beta_hat: &[f64],
    beta_true: &[f64],
    t: usize,
    params: &BoundParams,
) -> (f64, f64) {
    assert_eq!(beta_hat.len(), beta_true.len(), "dimension mismatch");
    assert!(t >= 1, "round index must be positive");
    params.validate();
    let error: f64 = beta_hat
        .iter()
        .zip(beta_true)
        .map(|(a, b)| (a - b).abs())
        .sum();
    let inner = (std::f64::consts::E * params.d as f64 * (t as f64).powi(2)
        / (params.delta - params.delta_prime))
        .ln();
    let bound = 128.0f64.sqrt() / (params.phi1 * params.phi1)
        * params.s0 as f64
        * params.r_tilde
        * (inner / t as f64).sqrt();
    (error, bound)
}

/// One checkpoint of the error trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub t: usize,
    pub l1_error: f64,
    pub bound: f64,
}

/// Per-checkpoint L1 errors alongside their envelope. The envelope's
/// constants are not observable at runtime, so downstream checks use
/// the trace's *shape* (decay across checkpoints), not the literal
/// inequality.
#[derive(Debug, Clone, Default)]
pub struct ErrorTrace {
    pub records: Vec<ErrorRecord>,
}

impl ErrorTrace {
    pub fn push(&mut self, t: usize, beta_hat: &[f64], beta_true: &[f64], params: &BoundParams) {
        let (l1_error, bound) = l1_error_and_bound(beta_hat, beta_true, t, params);
        self.records.push(ErrorRecord { t, l1_error, bound });
    }
}

/// Streaming mean and unbiased sample variance (Welford's update).
#[derive(Debug, Clone, Copy, Default)]
pub struct VarianceTracker {
    count: usize,
    mean: f64,
    m2: f64,
}

impl VarianceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, value: f64) {
        assert!(value.is_finite(), "tracker values must be finite");
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero until two values have been seen.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}
