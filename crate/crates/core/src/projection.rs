//! Euclidean projections used by the solvers.
//!
//! The doubly stochastic projection has the form
//! `P = max(0, Y − u 1ᵀ − 1 vᵀ)` for row and column potentials `(u, v)`
//! that make every marginal equal to one. The default method finds the
//! potentials by a semismooth Newton iteration on the (convex, piecewise
//! quadratic) dual and can be warm-started from the previous call's
//! potentials, which is what the solvers do across iterations.
//!
//! The fixed-point scheme alternating the affine projection onto
//! `{P 1 = 1, 1ᵀ P = 1ᵀ}` with clamping to `P ≥ 0` is also available.
//! Plain alternation lands on *a* point of the Birkhoff polytope but not the
//! nearest one; [`BirkhoffMethod::Dykstra`] carries the correction term that
//! makes it converge to the projection.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::EdgeBlocks;
use crate::linalg::{norm2, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BirkhoffMethod {
    /// Semismooth Newton on the dual potentials (exact projection).
    Newton,
    /// Affine projection + clamp with Dykstra correction (exact projection).
    Dykstra,
    /// Affine projection + clamp without correction.
    Alternating,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionConfig {
    /// Fixed-point methods stop once successive iterates differ by at most
    /// `tol` (Frobenius) and every row and column sum is within `tol` of
    /// one; Newton stops on the marginal condition alone.
    pub tol: f64,
    /// Iteration cap. Newton uses at most `min(max_iter, 200)` steps and
    /// falls back to Dykstra if it has not converged.
    pub max_iter: usize,
    pub method: BirkhoffMethod,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 10_000, method: BirkhoffMethod::Newton }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("projection tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("projection max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Result of an iterative projection.
#[derive(Clone, Debug)]
pub struct Projected {
    pub matrix: Matrix,
    pub iterations: usize,
    /// `false` when `max_iter` was hit; `matrix` is then the last iterate.
    pub converged: bool,
}

/// In-place projection onto `{P 1 = 1, 1ᵀ P = 1ᵀ}`:
/// `P + (1/n + s/n² − r_i/n) − c_j/n` with row sums `r`, column sums `c`
/// and total `s`.
fn affine_step(p: &mut Matrix, row_sums: &mut [f64], col_sums: &mut [f64]) {
    let n = p.rows();
    let inv_n = 1.0 / n as f64;
    row_sums.iter_mut().for_each(|x| *x = 0.0);
    col_sums.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..n {
        let row = p.row(i);
        let mut r = 0.0;
        for (c, &x) in col_sums.iter_mut().zip(row) {
            r += x;
            *c += x;
        }
        row_sums[i] = r;
    }
    let total: f64 = row_sums.iter().sum();
    let base = inv_n + total * inv_n * inv_n;
    for i in 0..n {
        let shift = base - row_sums[i] * inv_n;
        for (x, &c) in p.row_mut(i).iter_mut().zip(col_sums.iter()) {
            *x += shift - c * inv_n;
        }
    }
}

fn max_marginal_violation(p: &Matrix) -> f64 {
    let rows = p.row_sums();
    let cols = p.col_sums();
    rows.iter().chain(cols.iter()).fold(0.0, |m, s| f64::max(m, (s - 1.0).abs()))
}

/// Projection onto the doubly stochastic matrices `Δ_N`.
pub fn project_doubly_stochastic(y: &Matrix, cfg: &ProjectionConfig) -> Result<Projected> {
    project_doubly_stochastic_warm(y, cfg, &mut BirkhoffPotentials::default())
}

/// Row and column potentials `(u, v)` with `P = max(0, Y − u1ᵀ − 1vᵀ)`.
///
/// An empty value means "no warm start".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BirkhoffPotentials {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// [`project_doubly_stochastic`] starting from (and updating) `potentials`.
/// Fixed-point methods ignore the potentials.
pub fn project_doubly_stochastic_warm(
    y: &Matrix,
    cfg: &ProjectionConfig,
    potentials: &mut BirkhoffPotentials,
) -> Result<Projected> {
    if !y.is_square() {
        return Err(Error::DimensionMismatch { expected: y.rows(), found: y.cols() });
    }
    cfg.validate()?;
    if !y.is_finite() {
        return Err(Error::NonFiniteIterate);
    }
    let n = y.rows();
    if n == 0 {
        return Ok(Projected { matrix: y.clone(), iterations: 0, converged: true });
    }
    if cfg.method == BirkhoffMethod::Newton {
        let out = newton_projection(y, cfg, potentials);
        if out.converged {
            return Ok(out);
        }
        potentials.u.clear();
        potentials.v.clear();
        let fallback = ProjectionConfig { method: BirkhoffMethod::Dykstra, ..*cfg };
        let mut res = fixed_point_projection(y, &fallback)?;
        res.iterations += out.iterations;
        return Ok(res);
    }
    fixed_point_projection(y, cfg)
}

/// Marginals and the active pattern of `max(0, Y − u1ᵀ − 1vᵀ)`.
struct DualPoint {
    p: Matrix,
    row: Vec<f64>,
    col: Vec<f64>,
    // Active columns of each row, CSR layout.
    row_ptr: Vec<usize>,
    active: Vec<usize>,
}

impl DualPoint {
    fn new(n: usize) -> Self {
        Self {
            p: Matrix::zeros(n, n),
            row: alloc::vec![0.0; n],
            col: alloc::vec![0.0; n],
            row_ptr: alloc::vec![0; n + 1],
            active: Vec::new(),
        }
    }

    /// Fills `p` and the marginals; returns `½‖P‖² + Σu + Σv`.
    fn evaluate(&mut self, y: &Matrix, u: &[f64], v: &[f64], track_active: bool) -> f64 {
        let n = y.rows();
        self.col.iter_mut().for_each(|c| *c = 0.0);
        self.active.clear();
        let mut half_sq = 0.0;
        for i in 0..n {
            let mut r = 0.0;
            let ui = u[i];
            for (j, ((out, &yv), &vj)) in self.p.row_mut(i).iter_mut().zip(y.row(i)).zip(v).enumerate() {
                let z = yv - ui - vj;
                if z > 0.0 {
                    *out = z;
                    r += z;
                    half_sq += z * z;
                    self.col[j] += z;
                    if track_active {
                        self.active.push(j);
                    }
                } else {
                    *out = 0.0;
                }
            }
            self.row[i] = r;
            self.row_ptr[i + 1] = self.active.len();
        }
        0.5 * half_sq + u.iter().sum::<f64>() + v.iter().sum::<f64>()
    }

    fn residual(&self) -> f64 {
        let sq: f64 = self.row.iter().chain(&self.col).map(|s| (s - 1.0) * (s - 1.0)).sum();
        libm::sqrt(sq)
    }

    fn violation(&self) -> f64 {
        self.row.iter().chain(&self.col).fold(0.0, |m, s| f64::max(m, (s - 1.0).abs()))
    }
}

fn newton_projection(y: &Matrix, cfg: &ProjectionConfig, pot: &mut BirkhoffPotentials) -> Projected {
    let n = y.rows();
    if pot.u.len() != n || pot.v.len() != n {
        // Cold start: rows exactly on the simplex, columns free.
        pot.v = alloc::vec![0.0; n];
        pot.u = (0..n).map(|i| simplex_threshold(y.row(i))).collect();
    }
    let max_steps = cfg.max_iter.min(200);
    let mut cur = DualPoint::new(n);
    let mut trial = DualPoint::new(n);
    let mut f = cur.evaluate(y, &pot.u, &pot.v, true);
    let mut grad = alloc::vec![0.0; 2 * n];
    let mut dir = alloc::vec![0.0; 2 * n];
    let mut cg = CgBuffers::new(2 * n);
    let mut u_trial = alloc::vec![0.0; n];
    let mut v_trial = alloc::vec![0.0; n];

    for step in 0..=max_steps {
        if !f.is_finite() {
            break;
        }
        if cur.violation() <= cfg.tol {
            return Projected { matrix: cur.p, iterations: step, converged: true };
        }
        if step == max_steps {
            break;
        }
        for i in 0..n {
            grad[i] = 1.0 - cur.row[i];
            grad[n + i] = 1.0 - cur.col[i];
        }
        let gnorm = norm2(&grad);
        let mu = gnorm.min(1.0) * 1e-2 + 1e-12;
        solve_newton_system(&cur, &grad, mu, &mut dir, &mut cg);
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                u_trial[i] = pot.u[i] + t * dir[i];
                v_trial[i] = pot.v[i] + t * dir[n + i];
            }
            let ft = trial.evaluate(y, &u_trial, &v_trial, true);
            // Near the solution the decrease in f drops below its rounding
            // error; fall back to requiring a smaller residual there.
            let flat = (ft - f).abs() <= 1e-13 * (f.abs() + 1.0);
            if ft <= f + 1e-4 * t * slope || (flat && trial.residual() < (1.0 - 1e-4 * t) * gnorm) {
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        core::mem::swap(&mut cur, &mut trial);
        pot.u.copy_from_slice(&u_trial);
        pot.v.copy_from_slice(&v_trial);
    }
    Projected { matrix: cur.p, iterations: max_steps, converged: false }
}

struct CgBuffers {
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    hp: Vec<f64>,
    diag: Vec<f64>,
}

impl CgBuffers {
    fn new(m: usize) -> Self {
        let z = alloc::vec![0.0; m];
        Self { r: z.clone(), z: z.clone(), p: z.clone(), hp: z.clone(), diag: z }
    }
}

/// `(H + μI) x` with `H = [[diag(row counts), M], [Mᵀ, diag(col counts)]]`
/// and `M` the active pattern. Rows or columns with no active entry get a
/// unit diagonal so the system stays well scaled.
fn hessian_apply(pt: &DualPoint, mu: f64, x: &[f64], out: &mut [f64]) {
    let n = pt.row.len();
    let (xu, xv) = x.split_at(n);
    let (ou, ov) = out.split_at_mut(n);
    ov.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..n {
        let cols = &pt.active[pt.row_ptr[i]..pt.row_ptr[i + 1]];
        let mut s = 0.0;
        for &j in cols {
            s += xv[j];
            ov[j] += xu[i];
        }
        let cnt = cols.len() as f64;
        ou[i] = (if cols.is_empty() { 1.0 } else { cnt }) * xu[i] + s + mu * xu[i];
    }
    let mut col_cnt = alloc::vec![0usize; n];
    for &j in &pt.active {
        col_cnt[j] += 1;
    }
    for j in 0..n {
        let c = col_cnt[j];
        ov[j] += (if c == 0 { 1.0 } else { c as f64 }) * xv[j] + mu * xv[j];
    }
}

/// Preconditioned conjugate gradients for `(H + μI) d = −g`.
fn solve_newton_system(pt: &DualPoint, grad: &[f64], mu: f64, d: &mut [f64], cg: &mut CgBuffers) {
    let n = pt.row.len();
    let m = 2 * n;
    for i in 0..n {
        let c = (pt.row_ptr[i + 1] - pt.row_ptr[i]) as f64;
        cg.diag[i] = if c == 0.0 { 1.0 } else { c } + mu;
    }
    cg.diag[n..].iter_mut().for_each(|x| *x = 0.0);
    for &j in &pt.active {
        cg.diag[n + j] += 1.0;
    }
    for x in &mut cg.diag[n..] {
        *x = if *x == 0.0 { 1.0 } else { *x } + mu;
    }
    d.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..m {
        cg.r[i] = -grad[i];
        cg.z[i] = cg.r[i] / cg.diag[i];
        cg.p[i] = cg.z[i];
    }
    let target = norm2(grad) * f64::min(0.1, norm2(grad)).max(1e-12);
    let mut rz: f64 = cg.r.iter().zip(&cg.z).map(|(a, b)| a * b).sum();
    for _ in 0..m.min(200) {
        if norm2(&cg.r) <= target {
            break;
        }
        hessian_apply(pt, mu, &cg.p, &mut cg.hp);
        let php: f64 = cg.p.iter().zip(&cg.hp).map(|(a, b)| a * b).sum();
        if !(php > 0.0) {
            break;
        }
        let a = rz / php;
        for i in 0..m {
            d[i] += a * cg.p[i];
            cg.r[i] -= a * cg.hp[i];
            cg.z[i] = cg.r[i] / cg.diag[i];
        }
        let rz_next: f64 = cg.r.iter().zip(&cg.z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..m {
            cg.p[i] = cg.z[i] + beta * cg.p[i];
        }
    }
}

/// `τ` with `Σ max(0, x_j − τ) = 1`.
fn simplex_threshold(x: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    tau
}

fn fixed_point_projection(y: &Matrix, cfg: &ProjectionConfig) -> Result<Projected> {
    let n = y.rows();
    let mut p = y.clone();
    let mut next = y.clone();
    let mut correction = Matrix::zeros(n, n);
    let mut row_sums = alloc::vec![0.0; n];
    let mut col_sums = alloc::vec![0.0; n];
    let dykstra = cfg.method == BirkhoffMethod::Dykstra;

    for it in 1..=cfg.max_iter {
        next.as_mut_slice().copy_from_slice(p.as_slice());
        affine_step(&mut next, &mut row_sums, &mut col_sums);
        let mut change = 0.0;
        let pairs = next.as_mut_slice().iter_mut().zip(p.as_slice());
        if dykstra {
            for ((a, &prev), c) in pairs.zip(correction.as_mut_slice()) {
                let shifted = *a + *c;
                let clamped = shifted.max(0.0);
                *c = shifted - clamped;
                *a = clamped;
                change += (clamped - prev) * (clamped - prev);
            }
        } else {
            for (a, &prev) in pairs {
                *a = a.max(0.0);
                change += (*a - prev) * (*a - prev);
            }
        }
        core::mem::swap(&mut p, &mut next);
        if !change.is_finite() {
            return Err(Error::NonFiniteIterate);
        }
        if libm::sqrt(change) <= cfg.tol && max_marginal_violation(&p) <= cfg.tol {
            return Ok(Projected { matrix: p, iterations: it, converged: true });
        }
    }
    Ok(Projected { matrix: p, iterations: cfg.max_iter, converged: false })
}

/// Scales every block into the unit ℓ₂ ball: `p_e / max(1, ‖p_e‖₂)`.
pub fn project_l2_ball_blocks(p: &mut EdgeBlocks) {
    for block in p.blocks_mut() {
        let norm = norm2(block);
        if norm > 1.0 {
            block.iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// Clamps every entry to `[−1, 1]`.
pub fn project_linf_cube_blocks(q: &mut EdgeBlocks) {
    q.as_mut_slice().iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
}

/// Euclidean projection of `v` onto the probability simplex, in place.
pub fn project_simplex(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let theta = simplex_threshold(v);
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

/// Which marginal of a stochastic matrix is constrained to one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StochasticConvention {
    /// Every row lies on the simplex (`π 1 = 1`).
    #[default]
    Rows,
    /// Every column lies on the simplex (`1ᵀ π = 1ᵀ`).
    Columns,
}

/// Projects each row of `y` onto the probability simplex.
pub fn project_row_stochastic(y: &Matrix) -> Matrix {
    let mut out = y.clone();
    for i in 0..out.rows() {
        project_simplex(out.row_mut(i));
    }
    out
}

pub fn project_stochastic(y: &Matrix, convention: StochasticConvention) -> Matrix {
    match convention {
        StochasticConvention::Rows => project_row_stochastic(y),
        StochasticConvention::Columns => project_row_stochastic(&y.transpose()).transpose(),
    }
}

/// `x` if `‖x‖_F ≤ radius`, else `x · radius / ‖x‖_F`.
pub fn project_frobenius_ball(x: &Matrix, radius: f64) -> Result<Matrix> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("ball radius must be positive"));
    }
    let norm = x.frobenius_norm();
    Ok(if norm <= radius { x.clone() } else { x.scaled(radius / norm) })
}
