//! Dual FISTA solver for the kernelised convex clustering objective.
//!
//! The problem
//!
//! ```text
//! minimise  Tr(πᵀKπ − 2Kπ) + λ (α ‖πδ_K‖₂,₁ + (1−α) ‖πδ_K‖₁)   over π ∈ Δ_N
//! ```
//!
//! is solved with two nested loops:
//!
//! * the outer loop is proximal gradient on the smooth part. With
//!   `σ = σ_max(K)` each step is a denoising problem
//!   `π ← D(π − (Kπ − K)/σ, λ/(2σ))`;
//! * the inner loop solves the denoising problem
//!   `min ½‖π − Y‖² + λ_eff Pen(π)` by FISTA ascent on its dual over edge
//!   blocks `p ∈ 𝒫` (unit ℓ₂ balls) and `q ∈ 𝒬` (unit cubes). The primal
//!   iterate is recovered as `Π_Δ(Y − λ_eff (α p + (1−α) q) δ_Kᵀ)`.
//!
//! All edge-shaped work happens on the transposed centroid matrix so that
//! columns of `π` are contiguous. `Π_Δ` commutes with transposition.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{differences_into, lipschitz_constant, weighted_pairs, EdgeBlocks, SimilarityKernel};
use crate::linalg::{power_iteration, Matrix};
use crate::projection::{
    project_doubly_stochastic, project_doubly_stochastic_warm, BirkhoffPotentials, ProjectionConfig,
};

trait Square {
    fn sq(self) -> f64;
}

impl Square for f64 {
    #[inline]
    fn sq(self) -> f64 {
        self * self
    }
}

/// Iterations used to estimate `σ_max(K)`.
pub const POWER_ITERATIONS: usize = 50;
/// Multiplicative margin on the power-iteration estimate, which approaches
/// `σ_max` from below.
const SIGMA_MARGIN: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LoopMode {
    /// Outer proximal gradient with an inner dual FISTA solve per step.
    #[default]
    TwoLoop,
    /// One dual FISTA step per outer gradient step, as in a single merged
    /// loop. Kept for comparison; it has no convergence guarantee.
    SingleLoop,
}

/// Which dual pair recovers the primal iterate when the inner loop stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DualRecovery {
    /// The projected iterates `(p, q)`.
    #[default]
    Projected,
    /// The momentum companions `(r, s)`.
    Momentum,
}

/// Outer proximal-gradient scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OuterScheme {
    /// Monotone accelerated steps: extrapolate, but only accept a new
    /// iterate when it does not increase the objective.
    #[default]
    Monotone,
    /// Plain proximal gradient steps.
    Plain,
}

/// Stopping rule of the inner denoising loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InnerStop {
    /// Denoising duality gap at the recovery pair, relative to
    /// `max(1, |primal|)`, checked every few iterations.
    #[default]
    DualityGap,
    /// Relative change of consecutive primal iterates. With dual iterates
    /// carried across outer steps this can fire before the subproblem is
    /// solved.
    PrimalChange,
}

/// How the dual state carries over between outer iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DualCarry {
    /// Keep `(p, q)` from the previous inner solve, restart momentum.
    #[default]
    KeepIterates,
    /// Start every inner solve from `p = q = 0`.
    Reset,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Weight of the ℓ₂,₁ (group) part of the penalty; `1 − alpha` weights ℓ₁.
    pub alpha: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub outer_tol: f64,
    /// Secondary outer stop: relative objective decrease over the last
    /// `OBJECTIVE_WINDOW` outer steps at most this. Zero disables it.
    pub objective_tol: f64,
    pub outer_max_iter: usize,
    pub projection: ProjectionConfig,
    pub loop_mode: LoopMode,
    pub recovery: DualRecovery,
    pub dual_carry: DualCarry,
    pub outer_scheme: OuterScheme,
    pub inner_stop: InnerStop,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            alpha: 0.95,
            inner_tol: 1e-7,
            inner_max_iter: 5_000,
            outer_tol: 1e-6,
            objective_tol: 1e-11,
            outer_max_iter: 500,
            projection: ProjectionConfig::default(),
            loop_mode: LoopMode::default(),
            recovery: DualRecovery::default(),
            dual_carry: DualCarry::default(),
            outer_scheme: OuterScheme::default(),
            inner_stop: InnerStop::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64, alpha: f64) -> Self {
        Self { lambda, alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter("alpha must lie in [0, 1]"));
        }
        if !(self.inner_tol > 0.0) || !(self.outer_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive"));
        }
        if !(self.objective_tol >= 0.0) {
            return Err(Error::InvalidParameter("objective_tol must be nonnegative"));
        }
        if self.inner_max_iter == 0 || self.outer_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration caps must be at least 1"));
        }
        self.projection.validate()
    }
}

/// Outcome of a solve.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub pi: Matrix,
    /// Full objective at `pi`.
    pub primal_value: f64,
    /// Dual value of the last denoising subproblem, in the ½-scaled form
    /// `min_{π∈Δ} ½‖π − Y‖² + λ_eff ⟨(αp + (1−α)q), πδ_K⟩`.
    pub dual_value: f64,
    /// Denoising primal at `pi` minus `dual_value`; nonnegative by weak
    /// duality up to projection error. Zero for solvers without a dual.
    pub duality_gap: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Times the dual step constant was doubled after a sampled Lipschitz
    /// violation.
    pub lipschitz_doublings: usize,
    /// Objective at the accepted iterate after each outer iteration.
    pub objective_trace: Vec<f64>,
}

/// Dual FISTA state for the denoising problem.
#[derive(Clone, Debug)]
pub struct DualState {
    pub p: EdgeBlocks,
    pub q: EdgeBlocks,
    pub r: EdgeBlocks,
    pub s: EdgeBlocks,
    pub t: f64,
    pub iter: usize,
}

impl DualState {
    pub fn zeros(kernel: &SimilarityKernel) -> Self {
        let z = EdgeBlocks::zeros_like(kernel);
        Self { p: z.clone(), q: z.clone(), r: z.clone(), s: z, t: 1.0, iter: 0 }
    }

    /// Keeps `(p, q)` and restarts momentum at them.
    pub fn restart_momentum(&mut self) {
        self.r.as_mut_slice().copy_from_slice(self.p.as_slice());
        self.s.as_mut_slice().copy_from_slice(self.q.as_slice());
        self.t = 1.0;
        self.iter = 0;
    }

    /// Largest block ℓ₂ norm of `p` and largest `|q|` entry.
    pub fn feasibility(&self) -> (f64, f64) {
        let p = self.p.blocks().map(crate::linalg::norm2).fold(0.0, f64::max);
        let q = self.q.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (p, q)
    }
}

/// `t_{k+1} = (1 + √(1 + 4 t_k²)) / 2`.
#[inline]
pub fn next_momentum(t: f64) -> f64 {
    (1.0 + libm::sqrt(1.0 + 4.0 * t * t)) / 2.0
}

/// `α ‖πδ_K‖₂,₁ + (1−α) ‖πδ_K‖₁`.
pub fn penalty(pi: &Matrix, kernel: &SimilarityKernel, alpha: f64) -> Result<f64> {
    let d = crate::kernel::apply_difference(pi, kernel)?;
    Ok(alpha * d.l21_norm() + (1.0 - alpha) * d.l1_norm())
}

/// `Tr(πᵀKπ − 2Kπ)`.
pub fn smooth_objective(pi: &Matrix, kernel: &SimilarityKernel) -> Result<f64> {
    let k_pi = kernel.mul_dense(pi)?;
    Ok(pi.frobenius_dot(&k_pi)? - 2.0 * k_pi.trace())
}

/// `Tr(πᵀKπ − 2Kπ) + λ (α ‖πδ_K‖₂,₁ + (1−α) ‖πδ_K‖₁)`.
pub fn primal_objective(pi: &Matrix, kernel: &SimilarityKernel, lambda: f64, alpha: f64) -> Result<f64> {
    let smooth = smooth_objective(pi, kernel)?;
    if lambda == 0.0 {
        return Ok(smooth);
    }
    Ok(smooth + lambda * penalty(pi, kernel, alpha)?)
}

/// `W = Y − λ (α p + (1−α) q) δ_Kᵀ`, computed in transposed form.
fn dual_target_t(
    target_t: &Matrix,
    p: &EdgeBlocks,
    q: &EdgeBlocks,
    kernel: &SimilarityKernel,
    lambda: f64,
    alpha: f64,
    out_t: &mut Matrix,
) {
    out_t.as_mut_slice().copy_from_slice(target_t.as_slice());
    let (a, b) = (lambda * alpha, lambda * (1.0 - alpha));
    for (e, edge) in kernel.edges().iter().enumerate() {
        let (pb, qb) = (p.block(e), q.block(e));
        let (wa, wb) = (edge.weight * a, edge.weight * b);
        for ((o, x), y) in out_t.row_mut(edge.i).iter_mut().zip(pb).zip(qb) {
            *o -= wa * x + wb * y;
        }
        for ((o, x), y) in out_t.row_mut(edge.j).iter_mut().zip(pb).zip(qb) {
            *o += wa * x + wb * y;
        }
    }
}

fn check_dual_shape(state_p: &EdgeBlocks, state_q: &EdgeBlocks, kernel: &SimilarityKernel) -> Result<()> {
    for b in [state_p, state_q] {
        if b.n() != kernel.n() || b.len() != kernel.edge_count() {
            return Err(Error::DimensionMismatch { expected: kernel.edge_count(), found: b.len() });
        }
    }
    Ok(())
}

/// Dual objective `h(p, q) = ‖Π_{Δ^C}(W)‖² − ‖W‖²` with
/// `W = target − λ (α p + (1−α) q) δ_Kᵀ` and `Π_{Δ^C} = Id − Π_Δ`.
///
/// This is twice the ½-scaled denoising dual minus `‖target‖²`.
pub fn dual_objective(
    p: &EdgeBlocks,
    q: &EdgeBlocks,
    kernel: &SimilarityKernel,
    lambda: f64,
    alpha: f64,
    target: &Matrix,
    projection: &ProjectionConfig,
) -> Result<f64> {
    check_dual_shape(p, q, kernel)?;
    if target.rows() != kernel.n() || !target.is_square() {
        return Err(Error::DimensionMismatch { expected: kernel.n(), found: target.rows() });
    }
    let target_t = target.transpose();
    let mut w_t = Matrix::zeros(kernel.n(), kernel.n());
    dual_target_t(&target_t, p, q, kernel, lambda, alpha, &mut w_t);
    let proj = project_doubly_stochastic(&w_t, projection)?.matrix;
    let w_norm_sq = w_t.frobenius_dot(&w_t)?;
    let dist_sq = w_t.distance(&proj)?.sq();
    Ok(dist_sq - w_norm_sq)
}

/// Gradient of [`dual_objective`]:
/// `(2λα Π_Δ(W) δ_K, 2λ(1−α) Π_Δ(W) δ_K)`.
pub fn dual_gradient(
    p: &EdgeBlocks,
    q: &EdgeBlocks,
    kernel: &SimilarityKernel,
    lambda: f64,
    alpha: f64,
    target: &Matrix,
    projection: &ProjectionConfig,
) -> Result<(EdgeBlocks, EdgeBlocks)> {
    check_dual_shape(p, q, kernel)?;
    let target_t = target.transpose();
    let mut w_t = Matrix::zeros(kernel.n(), kernel.n());
    dual_target_t(&target_t, p, q, kernel, lambda, alpha, &mut w_t);
    let pi_t = project_doubly_stochastic(&w_t, projection)?.matrix;
    let mut g = EdgeBlocks::zeros_like(kernel);
    differences_into(&pi_t, weighted_pairs(kernel), &mut g);
    let mut gp = g.clone();
    gp.as_mut_slice().iter_mut().for_each(|x| *x *= 2.0 * lambda * alpha);
    g.as_mut_slice().iter_mut().for_each(|x| *x *= 2.0 * lambda * (1.0 - alpha));
    Ok((gp, g))
}

/// Result of one denoising solve.
#[derive(Clone, Debug)]
pub struct Denoised {
    pub pi: Matrix,
    pub state: DualState,
    pub iterations: usize,
    pub converged: bool,
    /// `½‖π − Y‖² + λ_eff Pen(π)` at the returned `π`.
    pub primal_value: f64,
    /// ½-scaled dual value at the recovery pair.
    pub dual_value: f64,
    pub lipschitz_doublings: usize,
}

/// Scratch buffers for the inner loop, reused across outer iterations.
struct Workspace {
    grad: EdgeBlocks,
    snap_g: EdgeBlocks,
    snap_r: EdgeBlocks,
    snap_s: EdgeBlocks,
    tmp: Vec<f64>,
    w_t: Matrix,
    potentials: BirkhoffPotentials,
}

impl Workspace {
    fn new(kernel: &SimilarityKernel) -> Self {
        let z = EdgeBlocks::zeros_like(kernel);
        let n = kernel.n();
        Self {
            grad: z.clone(),
            snap_g: z.clone(),
            snap_r: z.clone(),
            snap_s: z,
            tmp: alloc::vec![0.0; n],
            w_t: Matrix::zeros(n, n),
            potentials: BirkhoffPotentials::default(),
        }
    }
}

/// Iterations between duality-gap evaluations in the inner loop.
const GAP_CHECK_EVERY: usize = 8;

/// Iterations between sampled Lipschitz checks.
const OBJECTIVE_WINDOW: usize = 20;
const LIPSCHITZ_SAMPLE_EVERY: usize = 16;

/// One projected ascent step with momentum, fused per edge block:
/// `(p, q) ← (Π_𝒫, Π_𝒬)[(r, s) + step · π δ_K]`, then
/// `(r, s) ← new + β (new − old)`.
fn dual_step(
    pi_t: &Matrix,
    kernel: &SimilarityKernel,
    state: &mut DualState,
    step_p: f64,
    step_q: f64,
    beta: f64,
    tmp: &mut [f64],
) {
    for (e, edge) in kernel.edges().iter().enumerate() {
        let (ri, rj, w) = (pi_t.row(edge.i), pi_t.row(edge.j), edge.weight);
        let q = state.q.block_mut(e);
        let s = state.s.block_mut(e);
        let r = state.r.block(e);
        let mut norm_sq = 0.0;
        for k in 0..ri.len() {
            let g = w * (ri[k] - rj[k]);
            let q_new = (s[k] + step_q * g).clamp(-1.0, 1.0);
            s[k] = q_new + beta * (q_new - q[k]);
            q[k] = q_new;
            let p_cand = r[k] + step_p * g;
            tmp[k] = p_cand;
            norm_sq += p_cand * p_cand;
        }
        let scale = 1.0 / libm::sqrt(norm_sq).max(1.0);
        let p = state.p.block_mut(e);
        let r = state.r.block_mut(e);
        for k in 0..tmp.len() {
            let p_new = tmp[k] * scale;
            r[k] = p_new + beta * (p_new - p[k]);
            p[k] = p_new;
        }
    }
}

/// Solves `min_{π∈Δ_N} ½‖π − target‖² + λ_eff (α‖πδ_K‖₂,₁ + (1−α)‖πδ_K‖₁)`
/// by FISTA on the dual, starting from `p = q = 0`.
pub fn denoise(
    target: &Matrix,
    lambda_eff: f64,
    alpha: f64,
    kernel: &SimilarityKernel,
    cfg: &SolverConfig,
) -> Result<Denoised> {
    if target.rows() != kernel.n() || !target.is_square() {
        return Err(Error::DimensionMismatch { expected: kernel.n(), found: target.rows() });
    }
    if !target.is_finite() {
        return Err(Error::NonFiniteIterate);
    }
    if !(lambda_eff >= 0.0) {
        return Err(Error::InvalidParameter("lambda must be nonnegative"));
    }
    let mut ws = Workspace::new(kernel);
    let mut state = DualState::zeros(kernel);
    let mut scale = 1.0;
    let out = denoise_t(&target.transpose(), lambda_eff, alpha, kernel, cfg, &mut state, &mut ws, &mut scale)?;
    Ok(Denoised {
        pi: out.pi.transpose(),
        state,
        iterations: out.iterations,
        converged: out.converged,
        primal_value: out.primal_value,
        dual_value: out.dual_value,
        lipschitz_doublings: out.lipschitz_doublings,
    })
}

/// [`Denoised`] without the dual state, which stays with the caller.
struct InnerOutcome {
    pi: Matrix,
    iterations: usize,
    converged: bool,
    primal_value: f64,
    dual_value: f64,
    lipschitz_doublings: usize,
}

/// Primal point recovered from the dual state, with both objective values.
struct Recovered {
    pi_t: Matrix,
    primal: f64,
    dual: f64,
}

/// `π = Π_Δ(Y − λ(α p + (1−α) q) δᵀ)` from the configured dual pair, with
/// `½‖π − Y‖² + λ Pen(π)` and the ½-scaled dual value
/// `½(‖W − Π(W)‖² − ‖W‖² + ‖Y‖²)`.
fn recover(
    target_t: &Matrix,
    lambda: f64,
    alpha: f64,
    kernel: &SimilarityKernel,
    cfg: &SolverConfig,
    state: &DualState,
    ws: &mut Workspace,
) -> Result<Recovered> {
    let (rp, rq) = match cfg.recovery {
        DualRecovery::Projected => (&state.p, &state.q),
        DualRecovery::Momentum => (&state.r, &state.s),
    };
    dual_target_t(target_t, rp, rq, kernel, lambda, alpha, &mut ws.w_t);
    let pi_t = project_doubly_stochastic_warm(&ws.w_t, &cfg.projection, &mut ws.potentials)?.matrix;
    if !pi_t.is_finite() {
        return Err(Error::NonFiniteIterate);
    }
    let dual = 0.5 * (ws.w_t.distance(&pi_t)?.sq() - ws.w_t.frobenius_dot(&ws.w_t)? + target_t.frobenius_dot(target_t)?);
    differences_into(&pi_t, weighted_pairs(kernel), &mut ws.grad);
    let pen = alpha * ws.grad.l21_norm() + (1.0 - alpha) * ws.grad.l1_norm();
    let primal = 0.5 * pi_t.distance(target_t)?.sq() + lambda * pen;
    Ok(Recovered { pi_t, primal, dual })
}

/// Inner loop in transposed coordinates. `state` carries the starting dual
/// point in and the final one out; `lipschitz_scale` multiplies the step
/// constant and persists across calls.
#[allow(clippy::too_many_arguments)]
fn denoise_t(
    target_t: &Matrix,
    lambda: f64,
    alpha: f64,
    kernel: &SimilarityKernel,
    cfg: &SolverConfig,
    state: &mut DualState,
    ws: &mut Workspace,
    lipschitz_scale: &mut f64,
) -> Result<InnerOutcome> {
    let base_l = lipschitz_constant(kernel, lambda, alpha);
    if lambda == 0.0 || kernel.edge_count() == 0 || base_l == 0.0 {
        let proj = project_doubly_stochastic_warm(target_t, &cfg.projection, &mut ws.potentials)?;
        let primal = 0.5 * proj.matrix.distance(target_t)?.sq();
        return Ok(InnerOutcome {
            pi: proj.matrix,
            iterations: 0,
            converged: proj.converged,
            primal_value: primal,
            dual_value: primal,
            lipschitz_doublings: 0,
        });
    }

    let mix_norm = libm::sqrt(alpha * alpha + (1.0 - alpha) * (1.0 - alpha));
    let mut doublings = 0;
    let mut pi_prev: Option<Matrix> = None;
    let mut last_eval: Option<(usize, Recovered)> = None;
    let mut converged = false;
    let mut iterations = 0;
    state.restart_momentum();

    for k in 0..cfg.inner_max_iter {
        iterations = k + 1;
        let l = base_l * *lipschitz_scale;

        // π_k = Π_Δ(Y − λ(α r + (1−α) s) δᵀ)
        dual_target_t(target_t, &state.r, &state.s, kernel, lambda, alpha, &mut ws.w_t);
        let pi_t = project_doubly_stochastic_warm(&ws.w_t, &cfg.projection, &mut ws.potentials)?.matrix;
        if !pi_t.is_finite() {
            return Err(Error::NonFiniteIterate);
        }

        // Sampled Lipschitz check between two consecutive momentum points.
        match k % LIPSCHITZ_SAMPLE_EVERY {
            0 => {
                differences_into(&pi_t, weighted_pairs(kernel), &mut ws.snap_g);
                ws.snap_r.as_mut_slice().copy_from_slice(state.r.as_slice());
                ws.snap_s.as_mut_slice().copy_from_slice(state.s.as_slice());
            }
            1 => {
                differences_into(&pi_t, weighted_pairs(kernel), &mut ws.grad);
                let dg = ws.grad.distance(&ws.snap_g) * 2.0 * lambda * mix_norm;
                let dr = libm::sqrt(state.r.distance(&ws.snap_r).sq() + state.s.distance(&ws.snap_s).sq());
                if dg > l * dr * (1.0 + 1e-6) + 1e-12 {
                    *lipschitz_scale *= 2.0;
                    doublings += 1;
                }
            }
            _ => {}
        }

        let t_next = next_momentum(state.t);
        let beta = (state.t - 1.0) / t_next;
        let l = base_l * *lipschitz_scale;
        dual_step(&pi_t, kernel, state, 2.0 * lambda * alpha / l, 2.0 * lambda * (1.0 - alpha) / l, beta, &mut ws.tmp);
        state.t = t_next;
        state.iter += 1;

        match cfg.inner_stop {
            InnerStop::PrimalChange => {
                if let Some(prev) = pi_prev.as_ref() {
                    let change = pi_t.distance(prev)?;
                    if change <= cfg.inner_tol * prev.frobenius_norm().max(1.0) {
                        converged = true;
                        break;
                    }
                }
                pi_prev = Some(pi_t);
            }
            InnerStop::DualityGap => {
                if (k + 1) % GAP_CHECK_EVERY == 0 {
                    let eval = recover(target_t, lambda, alpha, kernel, cfg, state, ws)?;
                    let done = eval.primal - eval.dual <= cfg.inner_tol * eval.primal.abs().max(1.0);
                    last_eval = Some((state.iter, eval));
                    if done {
                        converged = true;
                        break;
                    }
                }
            }
        }
    }

    let eval = match last_eval {
        Some((at, eval)) if at == state.iter => eval,
        _ => recover(target_t, lambda, alpha, kernel, cfg, state, ws)?,
    };
    let (pi_t, primal_value, dual_value) = (eval.pi_t, eval.primal, eval.dual);

    Ok(InnerOutcome { pi: pi_t, iterations, converged, primal_value, dual_value, lipschitz_doublings: doublings })
}

/// Largest eigenvalue of `K`, used as the outer step constant.
pub fn spectral_norm(kernel: &SimilarityKernel) -> Result<f64> {
    let sigma = power_iteration(&kernel.to_dense(), POWER_ITERATIONS, 1e-10)?;
    Ok(sigma * SIGMA_MARGIN)
}

/// Computes `π(λ)` for one `λ`, starting from `warm_start` (default `I`).
pub fn solve(kernel: &SimilarityKernel, cfg: &SolverConfig, warm_start: Option<&Matrix>) -> Result<SolveResult> {
    cfg.validate()?;
    let n = kernel.n();
    let pi0 = match warm_start {
        Some(w) if w.rows() != n || w.cols() != n => {
            return Err(Error::DimensionMismatch { expected: n, found: w.rows() });
        }
        Some(w) => w.clone(),
        None => Matrix::identity(n),
    };
    if n == 0 {
        return Ok(SolveResult {
            pi: pi0,
            primal_value: 0.0,
            dual_value: 0.0,
            duality_gap: 0.0,
            inner_iterations: 0,
            outer_iterations: 0,
            converged: true,
            lipschitz_doublings: 0,
            objective_trace: Vec::new(),
        });
    }
    let sigma = spectral_norm(kernel)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter("kernel has no positive eigenvalue"));
    }
    match cfg.loop_mode {
        LoopMode::TwoLoop => solve_two_loop(kernel, cfg, pi0, sigma),
        LoopMode::SingleLoop => solve_single_loop(kernel, cfg, pi0, sigma),
    }
}

/// `Y = π − (Kπ − K)/σ` in transposed form: `πᵀ − (πᵀK − K)/σ`.
fn gradient_target_t(kernel: &SimilarityKernel, pi_t: &Matrix, sigma: f64) -> Result<Matrix> {
    let pk = kernel.right_mul_dense(pi_t)?;
    let mut y_t = pi_t.clone();
    let inv = 1.0 / sigma;
    for (y, kp) in y_t.as_mut_slice().iter_mut().zip(pk.as_slice()) {
        *y -= inv * kp;
    }
    for i in 0..kernel.n() {
        y_t[(i, i)] += inv * kernel.diagonal()[i];
        for (j, w) in kernel.neighbors(i) {
            y_t[(i, j)] += inv * w;
        }
    }
    Ok(y_t)
}

/// Full objective evaluated on `πᵀ`.
fn objective_t(kernel: &SimilarityKernel, pi_t: &Matrix, lambda: f64, alpha: f64, scratch: &mut EdgeBlocks) -> Result<f64> {
    let pk = kernel.right_mul_dense(pi_t)?;
    let smooth = pi_t.frobenius_dot(&pk)? - 2.0 * pk.trace();
    if lambda == 0.0 {
        return Ok(smooth);
    }
    differences_into(pi_t, weighted_pairs(kernel), scratch);
    Ok(smooth + lambda * (alpha * scratch.l21_norm() + (1.0 - alpha) * scratch.l1_norm()))
}

fn solve_two_loop(kernel: &SimilarityKernel, cfg: &SolverConfig, pi0: Matrix, sigma: f64) -> Result<SolveResult> {
    let lambda_eff = cfg.lambda / (2.0 * sigma);
    let mut ws = Workspace::new(kernel);
    let mut scratch = EdgeBlocks::zeros_like(kernel);
    let mut state = DualState::zeros(kernel);
    let mut scale = 1.0;
    // x: accepted iterate, y: extrapolated point fed to the gradient step.
    let mut x_t = pi0.transpose();
    let mut y_t = x_t.clone();
    let mut f_x = objective_t(kernel, &x_t, cfg.lambda, cfg.alpha, &mut scratch)?;
    let mut t = 1.0;
    let mut inner_total = 0;
    let mut doublings = 0;
    let mut converged = false;
    let mut outer = 0;
    let mut last: Option<InnerOutcome> = None;
    let mut trace = Vec::new();

    for it in 1..=cfg.outer_max_iter {
        outer = it;
        let target_t = gradient_target_t(kernel, &y_t, sigma)?;
        if cfg.dual_carry == DualCarry::Reset {
            state = DualState::zeros(kernel);
        }
        let den = denoise_t(&target_t, lambda_eff, cfg.alpha, kernel, cfg, &mut state, &mut ws, &mut scale)?;
        inner_total += den.iterations;
        doublings += den.lipschitz_doublings;
        let z_t = &den.pi;
        let change = z_t.distance(&y_t)?;
        if !change.is_finite() {
            return Err(Error::NonFiniteIterate);
        }
        let f_z = objective_t(kernel, z_t, cfg.lambda, cfg.alpha, &mut scratch)?;

        match cfg.outer_scheme {
            OuterScheme::Plain => {
                x_t = z_t.clone();
                y_t = z_t.clone();
                f_x = f_z;
            }
            OuterScheme::Monotone => {
                let accept = f_z <= f_x;
                let t_next = next_momentum(t);
                let (a, b) = (t / t_next, (t - 1.0) / t_next);
                // y = x_new + a (z − x_new) + b (x_new − x_old)
                let x_new = if accept { z_t.clone() } else { x_t.clone() };
                for ((y, (&xn, &xo)), &z) in y_t
                    .as_mut_slice()
                    .iter_mut()
                    .zip(x_new.as_slice().iter().zip(x_t.as_slice()))
                    .zip(z_t.as_slice())
                {
                    *y = xn + a * (z - xn) + b * (xn - xo);
                }
                x_t = x_new;
                if accept {
                    f_x = f_z;
                }
                t = t_next;
            }
        }
        trace.push(f_x);
        log::debug!(
            "outer {it}: inner {} change {change:.3e} objective {f_x:.10} gap {:.2e}",
            den.iterations,
            den.primal_value - den.dual_value
        );
        last = Some(den);
        if change <= cfg.outer_tol || stagnated(&trace, cfg.objective_tol) {
            converged = true;
            break;
        }
    }

    let pi = x_t.transpose();
    let primal_value = primal_objective(&pi, kernel, cfg.lambda, cfg.alpha)?;
    let (dual_value, duality_gap) = last.map_or((primal_value, 0.0), |d| (d.dual_value, d.primal_value - d.dual_value));
    Ok(SolveResult {
        pi,
        primal_value,
        dual_value,
        duality_gap,
        inner_iterations: inner_total,
        outer_iterations: outer,
        converged,
        lipschitz_doublings: doublings,
        objective_trace: trace,
    })
}

fn stagnated(trace: &[f64], tol: f64) -> bool {
    if tol <= 0.0 || trace.len() <= OBJECTIVE_WINDOW {
        return false;
    }
    let now = trace[trace.len() - 1];
    let then = trace[trace.len() - 1 - OBJECTIVE_WINDOW];
    then - now <= tol * now.abs().max(1.0)
}

fn solve_single_loop(kernel: &SimilarityKernel, cfg: &SolverConfig, pi0: Matrix, sigma: f64) -> Result<SolveResult> {
    let lambda = cfg.lambda / (2.0 * sigma);
    let alpha = cfg.alpha;
    let l = lipschitz_constant(kernel, lambda, alpha);
    let mut ws = Workspace::new(kernel);
    let mut state = DualState::zeros(kernel);
    let mut pi_t = pi0.transpose();
    let mut converged = false;
    let mut iterations = 0;
    let step_p = if l > 0.0 { 2.0 * lambda * alpha / l } else { 0.0 };
    let step_q = if l > 0.0 { 2.0 * lambda * (1.0 - alpha) / l } else { 0.0 };
    let max_iter = cfg.outer_max_iter.saturating_mul(cfg.inner_max_iter).min(1_000_000);

    for k in 1..=max_iter {
        iterations = k;
        let y_t = gradient_target_t(kernel, &pi_t, sigma)?;
        dual_target_t(&y_t, &state.r, &state.s, kernel, lambda, alpha, &mut ws.w_t);
        let next = project_doubly_stochastic_warm(&ws.w_t, &cfg.projection, &mut ws.potentials)?.matrix;
        if !next.is_finite() {
            return Err(Error::NonFiniteIterate);
        }
        let t_next = next_momentum(state.t);
        let beta = (state.t - 1.0) / t_next;
        let (p_old, q_old) = (state.p.clone(), state.q.clone());
        dual_step(&next, kernel, &mut state, step_p, step_q, beta, &mut ws.tmp);
        state.t = t_next;
        let change = next.distance(&pi_t)?;
        let dual_change = libm::sqrt(state.p.distance(&p_old).sq() + state.q.distance(&q_old).sq());
        pi_t = next;
        // A still-moving dual can leave π unchanged for a step, e.g. at the start.
        if change <= cfg.outer_tol && dual_change <= cfg.outer_tol {
            converged = true;
            break;
        }
    }
    let pi = pi_t.transpose();
    let primal_value = primal_objective(&pi, kernel, cfg.lambda, cfg.alpha)?;
    Ok(SolveResult {
        pi,
        primal_value,
        dual_value: primal_value,
        duality_gap: 0.0,
        inner_iterations: iterations,
        outer_iterations: iterations,
        converged,
        lipschitz_doublings: 0,
        objective_trace: Vec::new(),
    })
}

/// Dual feasibility of a state, for callers checking the invariants.
pub fn dual_feasible(state: &DualState, slack: f64) -> bool {
    let (p, q) = state.feasibility();
    p <= 1.0 + slack && q <= 1.0 + slack
}

#[doc(hidden)]
pub fn momentum_sequence(len: usize) -> Vec<f64> {
    let mut t = 1.0;
    (0..len)
        .map(|_| {
            let cur = t;
            t = next_momentum(t);
            cur
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::two_hop_kernel;

    fn kernel_2x2() -> SimilarityKernel {
        SimilarityKernel::from_edge_list(2, &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, 0.5)]).unwrap()
    }

    #[test]
    fn primal_at_identity_without_edges() {
        let k = SimilarityKernel::from_edge_list(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let v = primal_objective(&Matrix::identity(3), &k, 7.0, 0.3).unwrap();
        assert!((v + 3.0).abs() < 1e-15);
    }

    #[test]
    fn primal_hand_evaluation() {
        let v = primal_objective(&Matrix::identity(2), &kernel_2x2(), 1.0, 1.0).unwrap();
        assert!((v - (-2.0 + libm::sqrt(2.0) / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn consensus_has_zero_penalty() {
        let a = SimilarityKernel::from_edge_list(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let k = two_hop_kernel(&a, 0.1).unwrap();
        let c = Matrix::consensus(4);
        assert_eq!(penalty(&c, &k, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn dual_at_zero_with_feasible_target() {
        let k = kernel_2x2();
        let target = Matrix::from_rows(&[[0.3, 0.7], [0.7, 0.3]]).unwrap();
        let z = EdgeBlocks::zeros_like(&k);
        let h = dual_objective(&z, &z, &k, 2.0, 0.5, &target, &ProjectionConfig::default()).unwrap();
        assert!((h + target.frobenius_dot(&target).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn dual_ignores_state_at_zero_lambda() {
        let k = kernel_2x2();
        let target = Matrix::from_rows(&[[1.3, -0.2], [0.1, 0.9]]).unwrap();
        let z = EdgeBlocks::zeros_like(&k);
        let p = EdgeBlocks::from_vec(2, 1, alloc::vec![0.6, -0.8]).unwrap();
        let cfg = ProjectionConfig::default();
        let a = dual_objective(&z, &z, &k, 0.0, 0.5, &target, &cfg).unwrap();
        let b = dual_objective(&p, &p, &k, 0.0, 0.5, &target, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn denoise_at_zero_lambda_projects() {
        let k = kernel_2x2();
        let d = denoise(&Matrix::identity(2), 0.0, 0.5, &k, &SolverConfig::default()).unwrap();
        assert!(d.pi.max_abs_diff(&Matrix::identity(2)).unwrap() < 1e-12);
    }

    #[test]
    fn momentum_is_increasing() {
        let t = momentum_sequence(200);
        for (k, w) in t.windows(2).enumerate() {
            assert!(w[1] > w[0]);
            assert!(w[0] >= (k as f64 + 1.0) / 2.0);
        }
    }

    #[test]
    fn zero_lambda_returns_identity() {
        let a = SimilarityKernel::from_edge_list(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let k = two_hop_kernel(&a, 0.1).unwrap();
        let res = solve(&k, &SolverConfig::with_lambda(0.0, 0.95), None).unwrap();
        assert!(res.pi.distance(&Matrix::identity(4)).unwrap() < 1e-9);
        assert!(res.converged);
    }

    #[test]
    fn rejects_bad_config() {
        let k = kernel_2x2();
        assert!(solve(&k, &SolverConfig::with_lambda(-1.0, 0.5), None).is_err());
        assert!(solve(&k, &SolverConfig::with_lambda(1.0, 1.5), None).is_err());
        assert!(solve(&k, &SolverConfig::with_lambda(1.0, 0.5), Some(&Matrix::identity(3))).is_err());
    }
}
