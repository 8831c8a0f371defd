mod common;

use common::{random_adjacency, random_blocks, random_kernel, random_matrix, rng};
use graphcoalesce_core::linalg::symmetric_eigenvalues;
use graphcoalesce_core::{apply_difference, apply_difference_adjoint, two_hop_kernel, Matrix, PsdMargin, SimilarityKernel};

#[test]
fn adjoint_identity() {
    let mut r = rng(31);
    for n in 2..12 {
        let k = random_kernel(&mut r, n, 0.4);
        let pi = random_matrix(&mut r, n, n);
        let d = random_blocks(&mut r, &k, 1.0);
        let lhs = apply_difference(&pi, &k).unwrap().dot(&d);
        let rhs = pi.frobenius_dot(&apply_difference_adjoint(&d, &k).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "n {n}: {lhs} vs {rhs}");
    }
}

#[test]
fn difference_norm_identity() {
    let mut r = rng(32);
    for n in 2..10 {
        let k = random_kernel(&mut r, n, 0.3);
        let pi = random_matrix(&mut r, n, n);
        let lhs = apply_difference(&pi, &k).unwrap().norm().powi(2);
        let mut rhs = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let col: f64 = (0..n).map(|r| (pi[(r, i)] - pi[(r, j)]).powi(2)).sum();
                rhs += k.get(i, j).powi(2) * col;
            }
        }
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }
}

#[test]
fn two_hop_is_strictly_positive_definite() {
    let mut r = rng(33);
    for n in [3, 5, 8, 13, 20] {
        let adj = random_adjacency(&mut r, n, 0.2);
        let gamma = 0.05;
        let k = two_hop_kernel(&adj, gamma).unwrap();
        let dense = k.to_dense();
        assert!(dense.is_symmetric(0.0));
        let min = symmetric_eigenvalues(&dense).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        assert!(min >= gamma - 1e-12, "n {n}: {min}");
        assert!(matches!(k.psd_margin(), PsdMargin::AtLeast(m) if m >= gamma - 1e-15));
    }
}

#[test]
fn two_hop_matches_dense_formula() {
    let mut r = rng(34);
    let adj = random_adjacency(&mut r, 9, 0.3);
    let a = adj.to_dense();
    let a2 = a.matmul(&a).unwrap();
    let d: Vec<f64> = a2.row_sums();
    let expected = Matrix::from_fn(9, 9, |i, j| a2[(i, j)] / (d[i] * d[j]).sqrt() + if i == j { 0.2 } else { 0.0 });
    let k = two_hop_kernel(&adj, 0.2).unwrap();
    assert!(k.to_dense().max_abs_diff(&expected).unwrap() < 1e-14);
}

#[test]
fn dense_round_trip_and_fingerprint() {
    let mut r = rng(35);
    let k = random_kernel(&mut r, 7, 0.5);
    let back = SimilarityKernel::from_dense(&k.to_dense()).unwrap();
    assert_eq!(back.fingerprint(), k.fingerprint());
    assert_ne!(k.regularized(0.1).fingerprint(), k.fingerprint());
}
