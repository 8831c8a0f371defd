mod common;

use common::{random_blocks, random_doubly_stochastic, random_kernel, random_matrix, rng};
use graphcoalesce_core::admm::delta_gram;
use graphcoalesce_core::fista::{denoise, dual_gradient, dual_objective, primal_objective, SolverConfig};
use graphcoalesce_core::projection::{project_l2_ball_blocks, project_linf_cube_blocks, ProjectionConfig};
use graphcoalesce_core::{apply_difference, lipschitz_constant, EdgeBlocks, Matrix};
use rand::Rng;

fn exact() -> ProjectionConfig {
    ProjectionConfig { tol: 1e-13, ..ProjectionConfig::default() }
}

fn distance_pair(a: &(EdgeBlocks, EdgeBlocks), b: &(EdgeBlocks, EdgeBlocks)) -> f64 {
    (a.0.distance(&b.0).powi(2) + a.1.distance(&b.1).powi(2)).sqrt()
}

#[test]
fn sampled_lipschitz_bound_holds() {
    let mut r = rng(41);
    let mut violations = 0;
    for _ in 0..5 {
        let k = random_kernel(&mut r, 10, 0.5);
        let target = random_matrix(&mut r, 10, 10);
        for _ in 0..200 {
            let lambda = 0.05 + r.random::<f64>() * 2.0;
            let alpha = r.random::<f64>();
            let l = lipschitz_constant(&k, lambda, alpha);
            let a = (random_blocks(&mut r, &k, 1.0), random_blocks(&mut r, &k, 1.0));
            let b = (random_blocks(&mut r, &k, 1.0), random_blocks(&mut r, &k, 1.0));
            let ga = dual_gradient(&a.0, &a.1, &k, lambda, alpha, &target, &exact()).unwrap();
            let gb = dual_gradient(&b.0, &b.1, &k, lambda, alpha, &target, &exact()).unwrap();
            if distance_pair(&ga, &gb) > l * distance_pair(&a, &b) {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn dual_gradient_matches_finite_differences() {
    let mut r = rng(42);
    let k = random_kernel(&mut r, 4, 0.3);
    let target = random_matrix(&mut r, 4, 4);
    let (lambda, alpha) = (0.7, 0.4);
    let mut p = random_blocks(&mut r, &k, 0.5);
    let mut q = random_blocks(&mut r, &k, 0.5);
    let (gp, gq) = dual_gradient(&p, &q, &k, lambda, alpha, &target, &exact()).unwrap();
    let h = 1e-6;
    for idx in 0..p.as_slice().len() {
        for which in 0..2 {
            let v = if which == 0 { &mut p } else { &mut q };
            v.as_mut_slice()[idx] += h;
            let up = dual_objective(&p, &q, &k, lambda, alpha, &target, &exact()).unwrap();
            let v = if which == 0 { &mut p } else { &mut q };
            v.as_mut_slice()[idx] -= 2.0 * h;
            let down = dual_objective(&p, &q, &k, lambda, alpha, &target, &exact()).unwrap();
            let v = if which == 0 { &mut p } else { &mut q };
            v.as_mut_slice()[idx] += h;
            let g = if which == 0 { gp.as_slice()[idx] } else { gq.as_slice()[idx] };
            assert!(((up - down) / (2.0 * h) - g).abs() < 1e-5 * g.abs().max(1.0));
        }
    }
}

#[test]
fn dual_is_state_independent_at_zero_lambda() {
    let mut r = rng(43);
    let k = random_kernel(&mut r, 5, 0.3);
    let target = random_matrix(&mut r, 5, 5);
    let z = EdgeBlocks::zeros_like(&k);
    let base = dual_objective(&z, &z, &k, 0.0, 0.5, &target, &exact()).unwrap();
    for _ in 0..5 {
        let (p, q) = (random_blocks(&mut r, &k, 3.0), random_blocks(&mut r, &k, 3.0));
        assert_eq!(dual_objective(&p, &q, &k, 0.0, 0.5, &target, &exact()).unwrap(), base);
    }
}

/// `½(h(p,q) + ‖Y‖²) ≤ ½‖π − Y‖² + λ(α‖πδ‖₂,₁ + (1−α)‖πδ‖₁)` for any feasible
/// `(p, q)` and any doubly stochastic `π`.
#[test]
fn weak_duality_on_random_feasible_points() {
    let mut r = rng(44);
    for n in 3..7 {
        let k = random_kernel(&mut r, n, 0.3);
        let target = random_matrix(&mut r, n, n);
        let (lambda, alpha) = (0.3, 0.6);
        let cfg = SolverConfig::with_lambda(lambda, alpha);
        let best = denoise(&target, lambda, alpha, &k, &cfg).unwrap().pi;
        let mut candidates: Vec<Matrix> = (0..10).map(|_| random_doubly_stochastic(&mut r, n)).collect();
        candidates.push(best);
        for _ in 0..20 {
            let mut p = random_blocks(&mut r, &k, 2.0);
            let mut q = random_blocks(&mut r, &k, 2.0);
            project_l2_ball_blocks(&mut p);
            project_linf_cube_blocks(&mut q);
            let h = dual_objective(&p, &q, &k, lambda, alpha, &target, &exact()).unwrap();
            let dual = 0.5 * (h + target.frobenius_norm().powi(2));
            for pi in &candidates {
                let d = apply_difference(pi, &k).unwrap();
                let primal = 0.5 * pi.distance(&target).unwrap().powi(2) + lambda * (alpha * d.l21_norm() + (1.0 - alpha) * d.l1_norm());
                assert!(dual <= primal + 1e-9, "{dual} > {primal}");
            }
        }
    }
}

#[test]
fn dual_norm_identities() {
    let mut r = rng(45);
    for _ in 0..100 {
        let dim = r.random_range(1..8);
        let x: Vec<f64> = (0..dim).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
        let l2 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let l1 = x.iter().map(|v| v.abs()).sum::<f64>();
        let wrap = |v: Vec<f64>| EdgeBlocks::from_vec(dim, 1, v).unwrap();
        let (mut best_p, mut best_q) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for _ in 0..500 {
            let mut p = wrap((0..dim).map(|_| r.random::<f64>() * 4.0 - 2.0).collect());
            let mut q = p.clone();
            project_l2_ball_blocks(&mut p);
            project_linf_cube_blocks(&mut q);
            let dot = |b: &EdgeBlocks| b.as_slice().iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            best_p = best_p.max(dot(&p));
            best_q = best_q.max(dot(&q));
        }
        assert!(best_p <= l2 + 1e-9 && best_q <= l1 + 1e-9);
        // Closed-form maximisers x/‖x‖₂ and sign(x).
        let p_star: f64 = x.iter().map(|v| v / l2 * v).sum();
        let q_star: f64 = x.iter().map(|v| v.signum() * v).sum();
        assert!((p_star - l2).abs() < 1e-12 && (q_star - l1).abs() < 1e-12);
    }
}

#[test]
fn delta_gram_identity() {
    for n in 1..=8 {
        // δ over all ordered pairs, built entry by entry.
        let mut delta = vec![vec![0.0; n * n]; n];
        for i in 0..n {
            for j in 0..n {
                delta[i][i * n + j] += 1.0;
                delta[j][i * n + j] -= 1.0;
            }
        }
        let explicit = Matrix::from_fn(n, n, |a, b| (0..n * n).map(|c| delta[a][c] * delta[b][c]).sum());
        let formula = Matrix::from_fn(n, n, |a, b| if a == b { 2.0 * n as f64 - 2.0 } else { -2.0 });
        assert_eq!(explicit, formula, "n {n}");
        assert_eq!(delta_gram(n), formula, "n {n}");
    }
}

#[test]
fn consensus_carries_no_penalty_for_any_lambda() {
    let mut r = rng(46);
    let k = random_kernel(&mut r, 6, 0.3);
    let c = Matrix::consensus(6);
    let smooth = primal_objective(&c, &k, 0.0, 0.5).unwrap();
    assert_eq!(primal_objective(&c, &k, 123.0, 0.5).unwrap(), smooth);
}
