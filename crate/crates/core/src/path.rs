//! Regularization paths and the centroid-level summaries computed along them.

use alloc::vec::Vec;

use crate::admm::{admm_solve, AdmmConfig};
use crate::error::{Error, Result};
use crate::fista::{solve, SolveResult, SolverConfig};
use crate::kernel::SimilarityKernel;
use crate::linalg::{symmetric_eigen, symmetric_eigenvalues, Matrix};
use crate::linearized::{linearized_solve, LinearizedConfig};

/// Which solver computes each path entry. The `lambda` inside each
/// configuration is ignored; the path supplies it.
#[derive(Clone, Debug)]
pub enum SolverChoice {
    Fista(SolverConfig),
    Admm { alpha: f64, cfg: AdmmConfig },
    Linearized(LinearizedConfig),
}

impl SolverChoice {
    pub fn id(&self) -> &'static str {
        match self {
            SolverChoice::Fista(_) => "fista",
            SolverChoice::Admm { .. } => "admm",
            SolverChoice::Linearized(_) => "linearized",
        }
    }

    /// Solves at one `λ`.
    pub fn run(&self, kernel: &SimilarityKernel, lambda: f64, warm: Option<&Matrix>) -> Result<SolveResult> {
        match self {
            SolverChoice::Fista(cfg) => solve(kernel, &SolverConfig { lambda, ..*cfg }, warm),
            SolverChoice::Admm { alpha, cfg } => admm_solve(kernel, lambda, *alpha, cfg, warm).map(|r| r.result),
            SolverChoice::Linearized(cfg) => linearized_solve(kernel, lambda, cfg, warm),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PathEntry {
    pub lambda: f64,
    /// Solution at `lambda`; on failure, the warm start that was attempted.
    pub pi: Matrix,
    pub primal_value: f64,
    pub duality_gap: f64,
    /// `NaN` when the entry failed or the rank is undefined.
    pub effective_rank: f64,
    /// Seconds spent on this entry, as measured by the caller's clock.
    pub wall_time: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub error: Option<Error>,
}

impl PathEntry {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct RegularizationPath {
    pub entries: Vec<PathEntry>,
    pub kernel_fingerprint: u64,
    pub solver_id: &'static str,
}

impl RegularizationPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lambda).collect()
    }
}

/// `count` points spaced evenly in `log λ` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() || count == 0 {
        return Err(Error::InvalidParameter("log grid needs 0 < lo <= hi and count >= 1"));
    }
    if count == 1 {
        return Ok(alloc::vec![lo]);
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    let mut grid: Vec<f64> = (0..count).map(|i| libm::exp(a + (b - a) * i as f64 / (count - 1) as f64)).collect();
    grid[0] = lo;
    grid[count - 1] = hi;
    Ok(grid)
}

/// 40 log-spaced values over `[1e-3, 40]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-3, 40.0, 40).expect("valid constants")
}

/// `λ` large enough to reach consensus on connected kernels.
pub const CONSENSUS_SENTINEL: f64 = 1e4;

/// `lambdas` with [`CONSENSUS_SENTINEL`] appended unless already covered.
pub fn with_consensus_sentinel(lambdas: &[f64]) -> Vec<f64> {
    let mut out = lambdas.to_vec();
    if out.last().map_or(true, |&l| l < CONSENSUS_SENTINEL) {
        out.push(CONSENSUS_SENTINEL);
    }
    out
}

fn validate_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter("lambdas must be finite and nonnegative"));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("lambdas must be strictly increasing"));
    }
    Ok(())
}

/// [`compute_path_timed`] without timing (`wall_time` is 0).
pub fn compute_path(kernel: &SimilarityKernel, lambdas: &[f64], solver: &SolverChoice) -> Result<RegularizationPath> {
    compute_path_timed(kernel, lambdas, solver, || 0.0)
}

/// Solves at each `λ` in increasing order, warm-starting from the previous
/// successful solution. A failed entry is recorded and the path continues.
///
/// `clock` returns seconds from any fixed origin.
pub fn compute_path_timed(
    kernel: &SimilarityKernel,
    lambdas: &[f64],
    solver: &SolverChoice,
    mut clock: impl FnMut() -> f64,
) -> Result<RegularizationPath> {
    validate_lambdas(lambdas)?;
    let mut entries = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Matrix> = None;
    for &lambda in lambdas {
        let start = clock();
        let outcome = solver.run(kernel, lambda, warm.as_ref());
        let entry = match outcome {
            Ok(res) => {
                let effective_rank = centroid_similarity(&res.pi, kernel)
                    .and_then(|d| effective_rank(&d))
                    .unwrap_or(f64::NAN);
                warm = Some(res.pi.clone());
                PathEntry {
                    lambda,
                    primal_value: res.primal_value,
                    duality_gap: res.duality_gap,
                    effective_rank,
                    wall_time: clock() - start,
                    converged: res.converged,
                    outer_iterations: res.outer_iterations,
                    inner_iterations: res.inner_iterations,
                    error: None,
                    pi: res.pi,
                }
            }
            Err(e) => {
                log::warn!("path entry at lambda {lambda} failed: {e}");
                PathEntry {
                    lambda,
                    pi: warm.clone().unwrap_or_else(|| Matrix::identity(kernel.n())),
                    primal_value: f64::NAN,
                    duality_gap: f64::NAN,
                    effective_rank: f64::NAN,
                    wall_time: clock() - start,
                    converged: false,
                    outer_iterations: 0,
                    inner_iterations: 0,
                    error: Some(e),
                }
            }
        };
        entries.push(entry);
    }
    Ok(RegularizationPath { entries, kernel_fingerprint: kernel.fingerprint(), solver_id: solver.id() })
}

/// `D_π = πᵀ K π`: inner products between the embedded centroids `Φπ_i`.
pub fn centroid_similarity(pi: &Matrix, kernel: &SimilarityKernel) -> Result<Matrix> {
    let n = kernel.n();
    if pi.rows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: pi.rows() });
    }
    let k_pi = kernel.mul_dense(pi)?;
    let d = pi.transpose().matmul(&k_pi)?;
    // Symmetrize away rounding.
    let m = d.rows();
    Ok(Matrix::from_fn(m, m, |i, j| 0.5 * (d[(i, j)] + d[(j, i)])))
}

/// Coordinates of the embedded centroids: row `i` of the result is a point
/// `x_i` with `x_i · x_j = (D_π)_ij`, so Euclidean distances between rows are
/// the feature-space distances `‖Φπ_i − Φπ_j‖`. Negative eigenvalues from
/// rounding are dropped.
pub fn centroid_embedding(pi: &Matrix, kernel: &SimilarityKernel) -> Result<Matrix> {
    let d = centroid_similarity(pi, kernel)?;
    let eig = symmetric_eigen(&d, true)?;
    let vectors = eig.vectors.expect("requested");
    let n = d.rows();
    let scales: Vec<f64> = eig.values.iter().map(|v| libm::sqrt(v.max(0.0))).collect();
    Ok(Matrix::from_fn(n, n, |i, k| vectors[(i, k)] * scales[k]))
}

/// Squared distances `D_ii + D_jj − 2 D_ij` from a similarity (Gram) matrix,
/// clamped at zero.
pub fn squared_distances_from_similarity(d: &Matrix) -> Result<Matrix> {
    if !d.is_square() {
        return Err(Error::DimensionMismatch { expected: d.rows(), found: d.cols() });
    }
    let n = d.rows();
    Ok(Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (d[(i, i)] + d[(j, j)] - 2.0 * d[(i, j)]).max(0.0) }))
}

/// Eigenvalues more negative than this (relative to the largest magnitude,
/// floored at 1) make [`effective_rank`] fail.
pub const INDEFINITE_TOLERANCE: f64 = 1e-8;

/// Exponential of the Shannon entropy of the normalized eigenvalues of a
/// symmetric PSD matrix.
pub fn effective_rank(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
    }
    if !m.is_finite() {
        return Err(Error::NonFiniteIterate);
    }
    let eig = symmetric_eigenvalues(m)?;
    effective_rank_of_spectrum(&eig)
}

/// [`effective_rank`] from a precomputed spectrum.
pub fn effective_rank_of_spectrum(eigenvalues: &[f64]) -> Result<f64> {
    let scale = eigenvalues.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -INDEFINITE_TOLERANCE * scale {
        return Err(Error::IndefiniteInput { min_eigenvalue: min });
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let entropy: f64 = eigenvalues
        .iter()
        .map(|v| v.max(0.0) / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * libm::log(p))
        .sum();
    Ok(libm::exp(entropy).clamp(1.0, eigenvalues.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_examples() {
        assert!((effective_rank_of_spectrum(&[2.0; 5]).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(effective_rank_of_spectrum(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((effective_rank_of_spectrum(&[0.75, 0.25]).unwrap() - 1.7548).abs() < 1e-4);
        assert_eq!(effective_rank_of_spectrum(&[0.0, 0.0]), Err(Error::ZeroMatrix));
        assert!(matches!(effective_rank_of_spectrum(&[1.0, -0.5]), Err(Error::IndefiniteInput { .. })));
    }

    #[test]
    fn embedding_reproduces_gram() {
        let k = SimilarityKernel::from_dense(&Matrix::from_rows(&[&[2.0, 0.5, 0.0], &[0.5, 1.0, 0.2], &[0.0, 0.2, 1.5]]).unwrap())
            .unwrap();
        let pi = Matrix::from_rows(&[&[0.6, 0.4, 0.0], &[0.4, 0.5, 0.1], &[0.0, 0.1, 0.9]]).unwrap();
        let x = centroid_embedding(&pi, &k).unwrap();
        let gram = x.matmul(&x.transpose()).unwrap();
        assert!(gram.max_abs_diff(&centroid_similarity(&pi, &k).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn grid_endpoints() {
        let g = default_grid();
        assert_eq!(g.len(), 40);
        assert_eq!((g[0], g[39]), (1e-3, 40.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_unsorted_lambdas() {
        let k = SimilarityKernel::from_dense(&Matrix::identity(2)).unwrap();
        let solver = SolverChoice::Fista(SolverConfig::default());
        assert!(compute_path(&k, &[1.0, 0.5], &solver).is_err());
    }
}
