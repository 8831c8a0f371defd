//! Property battery behind the `verify` subcommand.

use graphcoalesce_core::admm::delta_gram;
use graphcoalesce_core::fista::dual_gradient;
use graphcoalesce_core::linalg::symmetric_eigenvalues;
use graphcoalesce_core::projection::{
    project_doubly_stochastic, project_l2_ball_blocks, project_linf_cube_blocks, ProjectionConfig,
};
use graphcoalesce_core::rng::stream;
use graphcoalesce_core::{
    apply_difference, apply_difference_adjoint, lipschitz_constant, EdgeBlocks, Matrix, SimilarityKernel,
};
use rand::Rng;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Largest kernel the dense checks accept.
pub const MAX_VERIFY_N: usize = 64;

#[derive(Clone, Debug, Serialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> PropertyCheck {
    PropertyCheck { name, passed, detail }
}

fn uniform(rng: &mut impl Rng, scale: f64) -> f64 {
    (rng.random::<f64>() * 2.0 - 1.0) * scale
}

/// Symmetric, diagonally dominant kernel with a connected random support.
pub fn random_kernel(n: usize, seed: u64) -> Result<SimilarityKernel> {
    let mut rng = stream(seed, "verify.kernel/v1");
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || rng.random::<f64>() < 0.4 {
                let w = 0.1 + rng.random::<f64>();
                m[(i, j)] = w;
                m[(j, i)] = w;
            }
        }
    }
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = s + 0.1;
    }
    Ok(SimilarityKernel::from_dense(&m)?)
}

fn random_blocks(rng: &mut impl Rng, kernel: &SimilarityKernel, scale: f64) -> EdgeBlocks {
    let data = (0..kernel.n() * kernel.edge_count()).map(|_| uniform(rng, scale)).collect();
    EdgeBlocks::from_vec(kernel.n(), kernel.edge_count(), data).expect("sized to the kernel")
}

fn pair_distance(a: &(EdgeBlocks, EdgeBlocks), b: &(EdgeBlocks, EdgeBlocks)) -> f64 {
    (a.0.distance(&b.0).powi(2) + a.1.distance(&b.1).powi(2)).sqrt()
}

fn dual_norms(rng: &mut impl Rng) -> PropertyCheck {
    let mut worst = f64::NEG_INFINITY;
    let mut attained = true;
    let mut vectors: Vec<Vec<f64>> = vec![vec![3.0, 4.0]];
    vectors.extend((0..100).map(|_| {
        let dim = rng.random_range(1..8);
        (0..dim).map(|_| uniform(rng, 2.0)).collect()
    }));
    for x in &vectors {
        let dim = x.len();
        let l2 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let l1 = x.iter().map(|v| v.abs()).sum::<f64>();
        let dot = |b: &EdgeBlocks| b.as_slice().iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        for _ in 0..200 {
            let raw: Vec<f64> = (0..dim).map(|_| uniform(rng, 2.0)).collect();
            let mut p = EdgeBlocks::from_vec(dim, 1, raw).expect("one block");
            let mut q = p.clone();
            project_l2_ball_blocks(&mut p);
            project_linf_cube_blocks(&mut q);
            worst = worst.max(dot(&p) - l2).max(dot(&q) - l1);
        }
        if l2 > 0.0 {
            let p_star: f64 = x.iter().map(|v| v / l2 * v).sum();
            let q_star: f64 = x.iter().map(|v| v.signum() * v).sum();
            attained &= (p_star - l2).abs() <= 1e-12 * l2.max(1.0) && (q_star - l1).abs() <= 1e-12 * l1.max(1.0);
        }
    }
    check(
        "dual-norm identities",
        worst <= 1e-9 && attained,
        format!("{} vectors, worst sampled excess {worst:.3e}, closed-form maximisers attained: {attained}", vectors.len()),
    )
}

fn delta_identity() -> PropertyCheck {
    let bad: Vec<usize> = (1..=8)
        .filter(|&n| {
            let expected = Matrix::from_fn(n, n, |a, b| if a == b { 2.0 * n as f64 - 2.0 } else { -2.0 });
            delta_gram(n) != expected
        })
        .collect();
    check("delta gram identity", bad.is_empty(), format!("n = 1..8, mismatches at {bad:?}"))
}

fn adjoint(kernel: &SimilarityKernel, rng: &mut impl Rng) -> Result<PropertyCheck> {
    let n = kernel.n();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let pi = Matrix::from_fn(n, n, |_, _| uniform(rng, 1.0));
        let d = random_blocks(rng, kernel, 1.0);
        let lhs = apply_difference(&pi, kernel)?.dot(&d);
        let rhs = pi.frobenius_dot(&apply_difference_adjoint(&d, kernel)?)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    Ok(check("difference adjoint", worst <= 1e-10, format!("20 pairs, worst relative gap {worst:.3e}")))
}

fn kernel_psd(kernel: &SimilarityKernel) -> Result<PropertyCheck> {
    let eig = symmetric_eigenvalues(&kernel.to_dense())?;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(check("kernel positive semidefinite", min >= -1e-10 * max.max(1.0), format!("smallest eigenvalue {min:.6e}")))
}

fn lipschitz(kernel: &SimilarityKernel, rng: &mut impl Rng, projection: &ProjectionConfig) -> Result<PropertyCheck> {
    let n = kernel.n();
    let mut violations = 0;
    let mut worst = 0.0f64;
    let samples = 200;
    for _ in 0..samples {
        let lambda = 0.05 + rng.random::<f64>() * 2.0;
        let alpha = rng.random::<f64>();
        let target = Matrix::from_fn(n, n, |_, _| uniform(rng, 1.0));
        let l = lipschitz_constant(kernel, lambda, alpha);
        let a = (random_blocks(rng, kernel, 1.0), random_blocks(rng, kernel, 1.0));
        let b = (random_blocks(rng, kernel, 1.0), random_blocks(rng, kernel, 1.0));
        let ga = dual_gradient(&a.0, &a.1, kernel, lambda, alpha, &target, projection)?;
        let gb = dual_gradient(&b.0, &b.1, kernel, lambda, alpha, &target, projection)?;
        let dist = pair_distance(&a, &b);
        let ratio = pair_distance(&ga, &gb) / (l * dist);
        worst = worst.max(ratio);
        if ratio > 1.0 {
            violations += 1;
        }
    }
    Ok(check(
        "dual gradient Lipschitz bound",
        violations == 0,
        format!("{samples} pairs, {violations} violations, worst ratio {worst:.4}"),
    ))
}

fn projection_properties(n: usize, rng: &mut impl Rng, projection: &ProjectionConfig) -> Result<Vec<PropertyCheck>> {
    let (mut idem, mut expand, mut feas) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..100 {
        let y = Matrix::from_fn(n, n, |_, _| uniform(rng, 2.0));
        let z = Matrix::from_fn(n, n, |_, _| uniform(rng, 2.0));
        let py = project_doubly_stochastic(&y, projection)?.matrix;
        let pz = project_doubly_stochastic(&z, projection)?.matrix;
        let ppy = project_doubly_stochastic(&py, projection)?.matrix;
        idem = idem.max(ppy.distance(&py)?);
        expand = expand.max(py.distance(&pz)? - y.distance(&z)?);
        let sums = py.row_sums().into_iter().chain(py.col_sums()).fold(0.0f64, |m, s| m.max((s - 1.0).abs()));
        feas = feas.max(sums).max(-py.min_entry());
    }
    let tol = 1e-7;
    Ok(vec![
        check("projection feasibility", feas <= tol, format!("100 inputs, worst violation {feas:.3e}")),
        check("projection idempotence", idem <= tol, format!("100 inputs, worst ‖P(P(y)) − P(y)‖ {idem:.3e}")),
        check("projection non-expansive", expand <= tol, format!("100 pairs, worst expansion {expand:.3e}")),
    ])
}

/// Runs every property on `kernel` with randomness from `seed`.
pub fn run_battery(kernel: &SimilarityKernel, seed: u64) -> Result<Vec<PropertyCheck>> {
    if kernel.n() == 0 || kernel.n() > MAX_VERIFY_N {
        return Err(CliError::Invalid(format!("verify needs 1 <= n <= {MAX_VERIFY_N}, got {}", kernel.n())));
    }
    let projection = ProjectionConfig { tol: 1e-12, ..ProjectionConfig::default() };
    let mut rng = stream(seed, "verify.battery/v1");
    let mut out = vec![dual_norms(&mut rng), delta_identity(), kernel_psd(kernel)?, adjoint(kernel, &mut rng)?];
    out.push(lipschitz(kernel, &mut rng, &projection)?);
    out.extend(projection_properties(kernel.n(), &mut rng, &projection)?);
    Ok(out)
}
