//! ADMM on the split `Z_ij = π_i − π_j`.
//!
//! With `ℓ₁` weight `a = 1 − α` and group weight `1 − a = α`, the solver
//! minimises
//!
//! ```text
//! ½ Tr(πᵀKπ − 2Kπ) + μ Σ_{(i,j)} K_ij (a ‖Z_ij‖₁ + (1 − a) ‖Z_ij‖₂)
//!     s.t. Z = π δ,  π ∈ Δ_N
//! ```
//!
//! with `μ = λ/2`, which is half the objective of [`crate::fista`] and has the
//! same minimiser. The augmented Lagrangian with scaled duals `U` and penalty
//! `ρ` is minimised alternately over `π` (accelerated projected gradient),
//! then `Z` (per-pair elastic-net shrinkage), followed by
//! `U ← U + πδ − Z`.
//!
//! Pairs are the kernel's edges by default. [`PairSet::AllPairs`] keeps a
//! split variable for every `i < j`, zero-weight pairs included.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fista::{next_momentum, primal_objective, SolveResult};
use crate::kernel::{differences_into, scatter_into, EdgeBlocks, SimilarityKernel};
use crate::linalg::{norm2, Matrix};
use crate::projection::{project_doubly_stochastic_warm, BirkhoffPotentials, ProjectionConfig};

/// Largest `N` accepted by [`PairSet::AllPairs`].
pub const ALL_PAIRS_MAX_N: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PairSet {
    #[default]
    Edges,
    AllPairs,
}

/// Rule for the `Z` update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ZUpdate {
    /// Shrinkage using the previous block norm in the group term; its fixed
    /// point is the exact proximal map, but blocks whose exact map is zero
    /// only decay geometrically.
    Sequential,
    /// Exact proximal map: soft-threshold, then group shrinkage.
    #[default]
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    /// Stop when both primal and dual residuals (Frobenius) are below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Budget of the inner accelerated gradient solve for `π`.
    pub inner_max_iter: usize,
    pub inner_tol: f64,
    pub pairs: PairSet,
    pub z_update: ZUpdate,
    pub projection: ProjectionConfig,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tol: 1e-7,
            max_iter: 20_000,
            inner_max_iter: 200,
            inner_tol: 1e-10,
            pairs: PairSet::Edges,
            z_update: ZUpdate::Exact,
            projection: ProjectionConfig::default(),
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidParameter("rho must be positive"));
        }
        if !(self.tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive"));
        }
        if self.max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration caps must be at least 1"));
        }
        self.projection.validate()
    }
}

/// ADMM iterate. `pairs` lists `(i, j, K_ij)` for every split block.
#[derive(Clone, Debug)]
pub struct AdmmState {
    pub pi: Matrix,
    pub z: EdgeBlocks,
    pub u: EdgeBlocks,
    pub rho: f64,
    pub iter: usize,
    pairs: Vec<(usize, usize, f64)>,
}

impl AdmmState {
    /// `π = pi0`, `Z = π δ`, `U = 0`.
    pub fn new(kernel: &SimilarityKernel, pi0: Matrix, rho: f64, pairs: PairSet) -> Result<Self> {
        let n = kernel.n();
        if pi0.rows() != n || pi0.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: pi0.rows() });
        }
        let pairs = pair_list(kernel, pairs)?;
        let mut z = EdgeBlocks::zeros(n, pairs.len());
        differences_into(&pi0.transpose(), unit(&pairs), &mut z);
        let u = EdgeBlocks::zeros(n, pairs.len());
        Ok(Self { pi: pi0, z, u, rho, iter: 0, pairs })
    }

    /// `(i, j, K_ij)` for each split block, in block order.
    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }
}

fn pair_list(kernel: &SimilarityKernel, set: PairSet) -> Result<Vec<(usize, usize, f64)>> {
    let n = kernel.n();
    Ok(match set {
        PairSet::Edges => kernel.edges().iter().map(|e| (e.i, e.j, e.weight)).collect(),
        PairSet::AllPairs => {
            if n > ALL_PAIRS_MAX_N {
                return Err(Error::InvalidParameter("all-pairs mode is limited to small N"));
            }
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (i, j, kernel.get(i, j))).collect()
        }
    })
}

fn unit(pairs: &[(usize, usize, f64)]) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    pairs.iter().map(|&(i, j, _)| (i, j, 1.0))
}

/// `sign(x) · max(|x| − θ, 0)` elementwise.
pub fn soft_threshold(x: &[f64], theta: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    soft_threshold_in_place(&mut out, theta);
    out
}

fn soft_threshold_in_place(x: &mut [f64], theta: f64) {
    for v in x {
        *v = if *v > theta {
            *v - theta
        } else if *v < -theta {
            *v + theta
        } else {
            0.0
        };
    }
}

/// `‖K‖_F² + 4ρ²n³`, square-rooted: step constant of the `π` subproblem.
pub fn pi_step_constant(kernel: &SimilarityKernel, rho: f64) -> f64 {
    let n = kernel.n() as f64;
    let fro_sq: f64 = kernel.diagonal().iter().map(|d| d * d).sum::<f64>()
        + 2.0 * kernel.edges().iter().map(|e| e.weight * e.weight).sum::<f64>();
    libm::sqrt(fro_sq + 4.0 * rho * rho * n * n * n)
}

/// `π`-subproblem objective
/// `½ Tr(πᵀKπ − 2Kπ) + (ρ/2) ‖πδ − Z + U‖²` for the state's `Z`, `U`.
pub fn pi_subproblem_objective(pi: &Matrix, state: &AdmmState, kernel: &SimilarityKernel) -> Result<f64> {
    let k_pi = kernel.mul_dense(pi)?;
    let smooth = 0.5 * (pi.frobenius_dot(&k_pi)? - 2.0 * k_pi.trace());
    let mut d = EdgeBlocks::zeros(kernel.n(), state.pairs.len());
    differences_into(&pi.transpose(), unit(&state.pairs), &mut d);
    let coupling: f64 = d
        .as_slice()
        .iter()
        .zip(state.z.as_slice())
        .zip(state.u.as_slice())
        .map(|((a, z), u)| (a - z + u) * (a - z + u))
        .sum();
    Ok(smooth + 0.5 * state.rho * coupling)
}

/// Gradient of [`pi_subproblem_objective`]: `Kπ − K + ρ (πδ + U − Z) δᵀ`.
pub fn pi_gradient(pi: &Matrix, state: &AdmmState, kernel: &SimilarityKernel) -> Result<Matrix> {
    let mut scratch = EdgeBlocks::zeros(kernel.n(), state.pairs.len());
    Ok(pi_gradient_t(&pi.transpose(), state, kernel, &mut scratch)?.transpose())
}

/// Transposed gradient for a transposed argument.
fn pi_gradient_t(pi_t: &Matrix, state: &AdmmState, kernel: &SimilarityKernel, scratch: &mut EdgeBlocks) -> Result<Matrix> {
    let mut g = kernel.right_mul_dense(pi_t)?;
    for i in 0..kernel.n() {
        g[(i, i)] -= kernel.diagonal()[i];
        for (j, w) in kernel.neighbors(i) {
            g[(i, j)] -= w;
        }
    }
    differences_into(pi_t, unit(&state.pairs), scratch);
    for ((d, z), u) in scratch.as_mut_slice().iter_mut().zip(state.z.as_slice()).zip(state.u.as_slice()) {
        *d = state.rho * (*d - z + u);
    }
    scatter_into(scratch, unit(&state.pairs), &mut g);
    Ok(g)
}

/// Inner accelerated projected gradient on the `π` subproblem, warm-started
/// at `state.pi`. Returns the new `π` and the iteration count.
pub fn admm_update_pi(state: &AdmmState, kernel: &SimilarityKernel, cfg: &AdmmConfig) -> Result<Matrix> {
    let mut pot = BirkhoffPotentials::default();
    Ok(update_pi_t(&state.pi.transpose(), state, kernel, cfg, &mut pot)?.0.transpose())
}

fn update_pi_t(
    start_t: &Matrix,
    state: &AdmmState,
    kernel: &SimilarityKernel,
    cfg: &AdmmConfig,
    pot: &mut BirkhoffPotentials,
) -> Result<(Matrix, usize)> {
    let l = pi_step_constant(kernel, state.rho);
    let mut scratch = EdgeBlocks::zeros(kernel.n(), state.pairs.len());
    let mut x = start_t.clone();
    let mut y = start_t.clone();
    let mut t = 1.0;
    for k in 1..=cfg.inner_max_iter {
        let g = pi_gradient_t(&y, state, kernel, &mut scratch)?;
        let mut step = y;
        step.axpy(-1.0 / l, &g)?;
        let x_new = project_doubly_stochastic_warm(&step, &cfg.projection, pot)?.matrix;
        if !x_new.is_finite() {
            return Err(Error::NonFiniteIterate);
        }
        let t_next = next_momentum(t);
        let beta = (t - 1.0) / t_next;
        let change = x_new.distance(&x)?;
        y = x_new.clone();
        for ((yv, &xn), &xo) in y.as_mut_slice().iter_mut().zip(x_new.as_slice()).zip(x.as_slice()) {
            *yv = xn + beta * (xn - xo);
        }
        x = x_new;
        t = t_next;
        if change <= cfg.inner_tol * x.frobenius_norm().max(1.0) {
            return Ok((x, k));
        }
    }
    Ok((x, cfg.inner_max_iter))
}

/// `Z` update at the current `π` and `U`, in the main `(λ, α)` convention.
pub fn admm_update_z(state: &AdmmState, lambda: f64, alpha: f64, rule: ZUpdate) -> EdgeBlocks {
    let mut d = EdgeBlocks::zeros(state.z.n(), state.pairs.len());
    differences_into(&state.pi.transpose(), unit(&state.pairs), &mut d);
    let mut z = state.z.clone();
    update_z_into(&d, state, lambda, alpha, rule, &mut z);
    z
}

/// Writes the `Z` update into `out` (which holds the previous `Z` on entry).
fn update_z_into(d: &EdgeBlocks, state: &AdmmState, lambda: f64, alpha: f64, rule: ZUpdate, out: &mut EdgeBlocks) {
    let mu = 0.5 * lambda;
    let l1 = 1.0 - alpha;
    let rho = state.rho;
    for (e, &(_, _, w)) in state.pairs.iter().enumerate() {
        let lam_e = mu * w;
        let prev_norm = norm2(out.block(e));
        let block = out.block_mut(e);
        for ((b, dv), uv) in block.iter_mut().zip(d.block(e)).zip(state.u.block(e)) {
            *b = dv + uv;
        }
        match rule {
            ZUpdate::Sequential => {
                if prev_norm < 1e-12 || alpha == 0.0 {
                    soft_threshold_in_place(block, l1 * lam_e / rho);
                } else {
                    let g = alpha * lam_e;
                    let shrink = 1.0 + g / (rho * prev_norm);
                    let theta = l1 * lam_e * prev_norm / (rho * prev_norm + g);
                    block.iter_mut().for_each(|b| *b /= shrink);
                    soft_threshold_in_place(block, theta);
                }
            }
            ZUpdate::Exact => {
                soft_threshold_in_place(block, l1 * lam_e / rho);
                let nrm = norm2(block);
                let keep = if nrm > 0.0 { (1.0 - alpha * lam_e / (rho * nrm)).max(0.0) } else { 0.0 };
                block.iter_mut().for_each(|b| *b *= keep);
            }
        }
    }
}

/// ADMM result with its final residuals.
#[derive(Clone, Debug)]
pub struct AdmmResult {
    pub result: SolveResult,
    /// `‖πδ − Z‖_F` at the last iteration.
    pub primal_residual: f64,
    /// `ρ ‖(Z⁺ − Z) δᵀ‖_F` at the last iteration.
    pub dual_residual: f64,
}

/// Solves for `π(λ)` in the `(λ, α)` convention of [`crate::fista`].
pub fn admm_solve(
    kernel: &SimilarityKernel,
    lambda: f64,
    alpha: f64,
    cfg: &AdmmConfig,
    warm_start: Option<&Matrix>,
) -> Result<AdmmResult> {
    cfg.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter("lambda must be finite and nonnegative"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter("alpha must lie in [0, 1]"));
    }
    let n = kernel.n();
    let pi0 = warm_start.cloned().unwrap_or_else(|| Matrix::identity(n));
    let mut state = AdmmState::new(kernel, pi0, cfg.rho, cfg.pairs)?;
    let mut pot = BirkhoffPotentials::default();
    let mut pi_t = state.pi.transpose();
    let mut d = EdgeBlocks::zeros(n, state.pairs.len());
    let mut z_new = state.z.clone();
    let mut dz_scatter = Matrix::zeros(n, n);
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    let mut inner_total = 0;
    let mut converged = false;
    let mut trace = Vec::new();

    for it in 1..=cfg.max_iter {
        state.iter = it;
        let (next, inner) = update_pi_t(&pi_t, &state, kernel, cfg, &mut pot)?;
        pi_t = next;
        inner_total += inner;

        differences_into(&pi_t, unit(&state.pairs), &mut d);
        z_new.as_mut_slice().copy_from_slice(state.z.as_slice());
        update_z_into(&d, &state, lambda, alpha, cfg.z_update, &mut z_new);

        // Residuals, then U ← U + πδ − Z.
        let mut r_sq = 0.0;
        for ((u, dv), zv) in state.u.as_mut_slice().iter_mut().zip(d.as_slice()).zip(z_new.as_slice()) {
            let r = dv - zv;
            *u += r;
            r_sq += r * r;
        }
        let mut dz = z_new.clone();
        for (a, b) in dz.as_mut_slice().iter_mut().zip(state.z.as_slice()) {
            *a -= b;
        }
        dz_scatter.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        scatter_into(&dz, unit(&state.pairs), &mut dz_scatter);
        r_norm = libm::sqrt(r_sq);
        s_norm = cfg.rho * dz_scatter.frobenius_norm();
        core::mem::swap(&mut state.z, &mut z_new);

        if !(r_norm.is_finite() && s_norm.is_finite()) {
            return Err(Error::NonFiniteIterate);
        }
        if it % 64 == 0 {
            state.pi = pi_t.transpose();
            trace.push(primal_objective(&state.pi, kernel, lambda, alpha)?);
        }
        if r_norm <= cfg.tol && s_norm <= cfg.tol {
            converged = true;
            break;
        }
    }

    state.pi = pi_t.transpose();
    let primal_value = primal_objective(&state.pi, kernel, lambda, alpha)?;
    Ok(AdmmResult {
        result: SolveResult {
            pi: state.pi,
            primal_value,
            dual_value: primal_value,
            duality_gap: 0.0,
            inner_iterations: inner_total,
            outer_iterations: state.iter,
            converged,
            lipschitz_doublings: 0,
            objective_trace: trace,
        },
        primal_residual: r_norm,
        dual_residual: s_norm,
    })
}

/// `δ δᵀ` for the difference operator over all ordered pairs `(i, j)`,
/// built explicitly.
pub fn delta_gram(n: usize) -> Matrix {
    // δ is n × n²: column (i, j) is e_i − e_j.
    let delta = Matrix::from_fn(n, n * n, |row, col| {
        let (i, j) = (col / n.max(1), col % n.max(1));
        f64::from(u8::from(row == i)) - f64::from(u8::from(row == j))
    });
    delta.matmul(&delta.transpose()).unwrap_or_else(|_| Matrix::zeros(n, n))
}
