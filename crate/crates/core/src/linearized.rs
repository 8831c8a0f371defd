//! Linearized projected-gradient solver for large graphs.
//!
//! This solver targets a smooth variant of the clustering objective, with a
//! squared graph penalty and a plain stochastic constraint:
//!
//! ```text
//! G(π) = Tr(πᵀKπ − 2Kπ) + λ Σ_{i≠j} K_ij ‖Φπ_i − Φπ_j‖²
//!      = Tr(πᵀKπ − 2Kπ) + 2λ ⟨πᵀKπ, L⟩,   L = Diag(K̃1) − K̃,  K̃ = K − diag(K)
//! ```
//!
//! Each outer step linearizes `G` at the current iterate, takes a gradient step
//! on the update `x` restricted to the Frobenius ball of radius `δ`, and
//! projects `π + x` back onto the stochastic matrices. It approximates the main
//! objective (same limits at `λ = 0` and `λ → ∞`) and does not share its
//! minimiser.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fista::{spectral_norm, SolveResult};
use crate::kernel::SimilarityKernel;
use crate::linalg::Matrix;
use crate::projection::{project_frobenius_ball, project_stochastic, StochasticConvention};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedConfig {
    /// Trust-region radius on each update, in Frobenius norm.
    pub delta: f64,
    /// Gradient step; `None` picks `1 / (2σ(K)(1 + 2λ max_i (K̃1)_i))`.
    pub eta: Option<f64>,
    /// Gradient steps on `x` per linearization.
    pub inner_max_iter: usize,
    pub inner_tol: f64,
    pub outer_max_iter: usize,
    /// Stop once `‖π_t − π_{t−1}‖_F` falls to this.
    pub outer_tol: f64,
    pub convention: StochasticConvention,
}

impl Default for LinearizedConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            eta: None,
            inner_max_iter: 1,
            inner_tol: 1e-12,
            outer_max_iter: 1_000,
            outer_tol: 1e-9,
            convention: StochasticConvention::Rows,
        }
    }
}

impl LinearizedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter("delta must be positive"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::InvalidParameter("eta must be positive"));
            }
        }
        if self.inner_max_iter == 0 || self.outer_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration caps must be at least 1"));
        }
        if !(self.inner_tol > 0.0) || !(self.outer_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive"));
        }
        Ok(())
    }
}

/// `M ↦ M L` with `L = Diag(K̃1) − K̃`, using only the stored edges.
fn times_laplacian(m: &Matrix, kernel: &SimilarityKernel) -> Matrix {
    let n = kernel.n();
    let degrees = kernel.offdiag_degrees();
    let mut out = Matrix::zeros(n, n);
    for r in 0..n {
        let row = m.row(r);
        let dst = out.row_mut(r);
        for (d, (&v, &deg)) in dst.iter_mut().zip(row.iter().zip(&degrees)) {
            *d = deg * v;
        }
        for e in kernel.edges() {
            dst[e.j] -= e.weight * row[e.i];
            dst[e.i] -= e.weight * row[e.j];
        }
    }
    out
}

fn check_square(pi: &Matrix, n: usize) -> Result<()> {
    if pi.rows() != n || pi.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: if pi.rows() != n { pi.rows() } else { pi.cols() } });
    }
    Ok(())
}

/// `G(π)` above.
pub fn linearized_objective(pi: &Matrix, kernel: &SimilarityKernel, lambda: f64) -> Result<f64> {
    check_square(pi, kernel.n())?;
    let k_pi = kernel.mul_dense(pi)?;
    Ok(objective_from(pi, &k_pi, kernel, lambda))
}

fn objective_from(pi: &Matrix, k_pi: &Matrix, kernel: &SimilarityKernel, lambda: f64) -> f64 {
    let n = kernel.n();
    // Tr(πᵀKπ) = ⟨π, Kπ⟩ and Tr(Kπ) = ⟨K, π⟩.
    let quad = pi.frobenius_dot(k_pi).unwrap_or(f64::NAN);
    let mut lin = 0.0;
    for i in 0..n {
        lin += kernel.diagonal()[i] * pi[(i, i)];
    }
    for e in kernel.edges() {
        lin += e.weight * (pi[(e.i, e.j)] + pi[(e.j, e.i)]);
    }
    if lambda == 0.0 {
        return quad - 2.0 * lin;
    }
    // Σ_{i≠j} K_ij (π_i − π_j)ᵀ K (π_i − π_j) over columns, twice per edge.
    let mut pen = 0.0;
    for e in kernel.edges() {
        let mut s = 0.0;
        for r in 0..n {
            let (a, b) = (pi[(r, e.i)] - pi[(r, e.j)], k_pi[(r, e.i)] - k_pi[(r, e.j)]);
            s += a * b;
        }
        pen += 2.0 * e.weight * s;
    }
    quad - 2.0 * lin + lambda * pen
}

/// Gradient of `G` at `π`: `2Kπ − 2K + 4λ Kπ (Diag(K̃1) − K̃)`.
///
/// The linearization of `G` around `π` has this as its constant gradient in
/// the update `x`.
pub fn linearized_gradient(pi: &Matrix, kernel: &SimilarityKernel, lambda: f64) -> Result<Matrix> {
    check_square(pi, kernel.n())?;
    let k_pi = kernel.mul_dense(pi)?;
    Ok(gradient_from(&k_pi, kernel, lambda))
}

fn gradient_from(k_pi: &Matrix, kernel: &SimilarityKernel, lambda: f64) -> Matrix {
    let mut g = k_pi.scaled(2.0);
    for i in 0..kernel.n() {
        g.row_mut(i)[i] -= 2.0 * kernel.diagonal()[i];
    }
    for e in kernel.edges() {
        g.row_mut(e.i)[e.j] -= 2.0 * e.weight;
        g.row_mut(e.j)[e.i] -= 2.0 * e.weight;
    }
    if lambda > 0.0 {
        let pen = times_laplacian(k_pi, kernel);
        g.axpy(4.0 * lambda, &pen).expect("same shape");
    }
    g
}

/// Default step size for a kernel and `λ`.
pub fn default_eta(kernel: &SimilarityKernel, lambda: f64) -> Result<f64> {
    let sigma = spectral_norm(kernel)?;
    let max_degree = kernel.offdiag_degrees().into_iter().fold(0.0_f64, f64::max);
    Ok(1.0 / (2.0 * sigma.max(f64::MIN_POSITIVE) * (1.0 + 2.0 * lambda * max_degree)))
}

/// Runs the linearization scheme from `warm_start` (default `I`).
///
/// The returned `SolveResult` reports `G` as both primal and dual value; the
/// duality gap is not defined for this solver and is left at zero.
pub fn linearized_solve(
    kernel: &SimilarityKernel,
    lambda: f64,
    cfg: &LinearizedConfig,
    warm_start: Option<&Matrix>,
) -> Result<SolveResult> {
    cfg.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter("lambda must be finite and nonnegative"));
    }
    let n = kernel.n();
    let mut pi = match warm_start {
        Some(w) => {
            check_square(w, n)?;
            project_stochastic(w, cfg.convention)
        }
        None => Matrix::identity(n),
    };
    let eta = match cfg.eta {
        Some(eta) => eta,
        None => default_eta(kernel, lambda)?,
    };

    let mut k_pi = kernel.mul_dense(&pi)?;
    let mut trace = Vec::new();
    trace.push(objective_from(&pi, &k_pi, kernel, lambda));
    let mut converged = false;
    let mut outer = 0;
    let mut inner_total = 0;

    for it in 1..=cfg.outer_max_iter {
        outer = it;
        let g = gradient_from(&k_pi, kernel, lambda);
        let mut x = Matrix::zeros(n, n);
        for _ in 0..cfg.inner_max_iter {
            inner_total += 1;
            let mut step = x.clone();
            step.axpy(-eta, &g)?;
            let next = project_frobenius_ball(&step, cfg.delta)?;
            let moved = next.distance(&x)?;
            x = next;
            if moved <= cfg.inner_tol {
                break;
            }
        }
        let next = project_stochastic(&pi.add(&x)?, cfg.convention);
        if !next.is_finite() {
            return Err(Error::NonFiniteIterate);
        }
        let change = next.distance(&pi)?;
        pi = next;
        k_pi = kernel.mul_dense(&pi)?;
        let value = objective_from(&pi, &k_pi, kernel, lambda);
        trace.push(value);
        log::trace!("linearized {it}: change {change:.3e} objective {value:.10}");
        if change <= cfg.outer_tol {
            converged = true;
            break;
        }
    }

    let primal_value = *trace.last().expect("nonempty");
    Ok(SolveResult {
        pi,
        primal_value,
        dual_value: primal_value,
        duality_gap: 0.0,
        inner_iterations: inner_total,
        outer_iterations: outer,
        converged,
        lipschitz_doublings: 0,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_kernel() -> SimilarityKernel {
        SimilarityKernel::from_dense(&Matrix::from_rows(&[&[1.0, 0.5], &[0.5, 1.0]]).unwrap()).unwrap()
    }

    #[test]
    fn identity_is_stationary_without_penalty() {
        let k = pair_kernel();
        let g = linearized_gradient(&Matrix::identity(2), &k, 0.0).unwrap();
        assert!(g.frobenius_norm() < 1e-15);
    }

    #[test]
    fn hand_gradient_two_nodes() {
        // Kπ = K at π = I; L = [[.5,-.5],[-.5,.5]]; K L = [[.25,-.25],[-.25,.25]].
        let k = pair_kernel();
        let g = linearized_gradient(&Matrix::identity(2), &k, 1.0).unwrap();
        let expected = Matrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap();
        assert!(g.max_abs_diff(&expected).unwrap() < 1e-14);
    }

    #[test]
    fn hand_objective_two_nodes() {
        // π = I: Tr(K) − 2Tr(K) = −2; penalty 2·0.5·(e1−e2)ᵀK(e1−e2) = 1.
        let k = pair_kernel();
        let v = linearized_objective(&Matrix::identity(2), &k, 1.0).unwrap();
        assert!((v - (-2.0 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_radius() {
        let cfg = LinearizedConfig { delta: 0.0, ..LinearizedConfig::default() };
        assert!(linearized_solve(&pair_kernel(), 1.0, &cfg, None).is_err());
    }
}
