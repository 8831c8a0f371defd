mod common;

use common::{random_dense_kernel, random_doubly_stochastic, random_kernel, random_matrix, rng};
use graphcoalesce_core::admm::AdmmConfig;
use graphcoalesce_core::fista::SolverConfig;
use graphcoalesce_core::linearized::LinearizedConfig;
use graphcoalesce_core::metrics::{
    cluster_scores, clustering_accuracy, extract_clusters_by_fusion, homogeneity_completeness, kmeans, lloyd,
    silhouette,
};
use graphcoalesce_core::path::{
    centroid_embedding, centroid_similarity, compute_path, effective_rank, log_grid, squared_distances_from_similarity,
    with_consensus_sentinel, SolverChoice, CONSENSUS_SENTINEL,
};
use graphcoalesce_core::synth::{generate_fractal_graph, FractalGraphSpec};
use graphcoalesce_core::{two_hop_kernel, Error, Matrix, SimilarityKernel};
use rand::Rng;

fn cholesky(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let s: f64 = (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum();
        l[(j, j)] = (a[(j, j)] - s).sqrt();
        for i in (j + 1)..n {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
        }
    }
    l
}

fn diag_matrix(values: &[f64]) -> Matrix {
    Matrix::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
}

#[test]
fn effective_rank_examples() {
    assert!((effective_rank(&diag_matrix(&[3.0; 6])).unwrap() - 6.0).abs() < 1e-12);
    assert!((effective_rank(&diag_matrix(&[1.0, 0.0, 0.0, 0.0])).unwrap() - 1.0).abs() < 1e-12);
    let er = effective_rank(&diag_matrix(&[0.75, 0.25])).unwrap();
    let hand = (-0.75f64 * 0.75f64.ln() - 0.25 * 0.25f64.ln()).exp();
    assert!((er - hand).abs() < 1e-12 && (er - 1.7548).abs() < 1e-4);
    assert_eq!(effective_rank(&Matrix::zeros(3, 3)), Err(Error::ZeroMatrix));
    assert!(matches!(effective_rank(&diag_matrix(&[1.0, -0.1])), Err(Error::IndefiniteInput { .. })));
    // Rounding-level negativity is tolerated.
    assert!(effective_rank(&diag_matrix(&[1.0, -1e-12])).is_ok());
}

#[test]
fn effective_rank_of_uniform_spectrum_is_the_rank() {
    let mut r = rng(100);
    for rank in 1..=5 {
        // Orthogonal projector of the given rank, rotated by a random orthonormal basis.
        let q = orthonormal(&random_matrix(&mut r, 6, 6));
        let p = Matrix::from_fn(6, 6, |i, j| (0..rank).map(|k| q[(i, k)] * q[(j, k)]).sum());
        assert!((effective_rank(&p).unwrap() - rank as f64).abs() < 1e-8);
    }
}

fn orthonormal(a: &Matrix) -> Matrix {
    // Modified Gram-Schmidt on columns.
    let n = a.rows();
    let mut q = a.clone();
    for j in 0..n {
        for k in 0..j {
            let d: f64 = (0..n).map(|i| q[(i, j)] * q[(i, k)]).sum();
            for i in 0..n {
                q[(i, j)] -= d * q[(i, k)];
            }
        }
        let nrm: f64 = (0..n).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
        for i in 0..n {
            q[(i, j)] /= nrm;
        }
    }
    q
}

#[test]
fn effective_rank_stays_within_bounds() {
    let mut r = rng(101);
    for n in 1..=9 {
        let k = random_dense_kernel(&mut r, n, 0.5);
        let er = effective_rank(&k).unwrap();
        assert!((1.0..=n as f64 + 1e-12).contains(&er));
    }
}

#[test]
fn centroid_similarity_examples() {
    let mut r = rng(102);
    let dense = random_dense_kernel(&mut r, 5, 0.3);
    let k = SimilarityKernel::from_dense(&dense).unwrap();
    let at_identity = centroid_similarity(&Matrix::identity(5), &k).unwrap();
    assert!(at_identity.max_abs_diff(&dense).unwrap() < 1e-14);
    let total: f64 = dense.as_slice().iter().sum();
    let at_consensus = centroid_similarity(&Matrix::consensus(5), &k).unwrap();
    assert!(at_consensus.as_slice().iter().all(|v| (v - total / 25.0).abs() < 1e-13));
}

#[test]
fn centroid_similarity_matches_explicit_features() {
    let mut r = rng(103);
    for n in 1..=10 {
        let dense = random_dense_kernel(&mut r, n, 0.4);
        let k = SimilarityKernel::from_dense(&dense).unwrap();
        // K = L Lᵀ, so Φ = Lᵀ has Gram matrix K.
        let phi = cholesky(&dense).transpose();
        let pi = random_doubly_stochastic(&mut r, n);
        let features = phi.matmul(&pi).unwrap();
        let oracle = features.transpose().matmul(&features).unwrap();
        let d = centroid_similarity(&pi, &k).unwrap();
        assert!(d.max_abs_diff(&oracle).unwrap() < 1e-8, "n = {n}");
        assert!(d.is_symmetric(0.0));
        let min = graphcoalesce_core::linalg::symmetric_eigenvalues(&d).unwrap()[0];
        assert!(min >= -1e-10);
        let emb = centroid_embedding(&pi, &k).unwrap();
        assert!(emb.matmul(&emb.transpose()).unwrap().max_abs_diff(&oracle).unwrap() < 1e-8);

        let sq = squared_distances_from_similarity(&d).unwrap();
        for i in 0..n {
            for j in 0..n {
                let diff: f64 = (0..n).map(|f| (features[(f, i)] - features[(f, j)]).powi(2)).sum();
                assert!((sq[(i, j)] - diff).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn fusion_examples() {
    let id = extract_clusters_by_fusion(&Matrix::identity(5), 0.5).unwrap();
    assert_eq!(id.k, 5);
    assert_eq!(id.labels, vec![0, 1, 2, 3, 4]);
    for eps in [0.0, 1e-9, 3.0] {
        assert_eq!(extract_clusters_by_fusion(&Matrix::consensus(5), eps).unwrap().k, 1);
    }
    // Columns {0, 2} and {1, 3} are identical.
    let h = 0.5;
    let pi = Matrix::from_rows(&[[h, 0.0, h, 0.0], [0.0, h, 0.0, h], [h, 0.0, h, 0.0], [0.0, h, 0.0, h]]).unwrap();
    let two = extract_clusters_by_fusion(&pi, 1e-9).unwrap();
    assert_eq!((two.k, two.labels.clone()), (2, vec![0, 1, 0, 1]));
    assert!(extract_clusters_by_fusion(&pi, -1.0).is_err());
}

#[test]
fn fusion_is_monotone_in_epsilon() {
    let mut r = rng(104);
    for _ in 0..30 {
        let pi = random_doubly_stochastic(&mut r, 8);
        let mut eps: Vec<f64> = (0..5).map(|_| r.random::<f64>() * 0.8).collect();
        eps.sort_by(f64::total_cmp);
        for w in eps.windows(2) {
            let fine = extract_clusters_by_fusion(&pi, w[0]).unwrap();
            let coarse = extract_clusters_by_fusion(&pi, w[1]).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    if fine.labels[i] == fine.labels[j] {
                        assert_eq!(coarse.labels[i], coarse.labels[j]);
                    }
                }
            }
        }
    }
}

#[test]
fn kmeans_examples() {
    let pts = Matrix::from_rows(&[[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.0, 10.1]]).unwrap();
    let two = kmeans(&pts, 2, 1, 3).unwrap();
    assert_eq!(two.labels, vec![0, 0, 1, 1]);
    assert!(!two.degenerate);

    let all = kmeans(&pts, 4, 1, 3).unwrap();
    assert_eq!(all.k, 4);
    assert!(all.inertia.unwrap().abs() < 1e-15);

    let one = kmeans(&pts, 1, 1, 3).unwrap();
    assert_eq!(one.labels, vec![0; 4]);
    let mean = [5.025, 5.025];
    let expect: f64 = (0..4).map(|i| (pts[(i, 0)] - mean[0]).powi(2) + (pts[(i, 1)] - mean[1]).powi(2)).sum();
    assert!((one.inertia.unwrap() - expect).abs() < 1e-9);

    assert!(kmeans(&pts, 5, 1, 3).is_err());
    assert!(kmeans(&pts, 2, 1, 0).is_err());
}

#[test]
fn kmeans_flags_too_few_distinct_points() {
    let pts = Matrix::from_rows(&[[1.0], [1.0], [2.0], [2.0]]).unwrap();
    let res = kmeans(&pts, 3, 0, 2).unwrap();
    assert!(res.degenerate);
    assert_eq!((res.k, res.labels), (2, vec![0, 0, 1, 1]));
}

#[test]
fn kmeans_is_deterministic_per_seed() {
    let mut r = rng(105);
    let pts = random_matrix(&mut r, 40, 3);
    let a = kmeans(&pts, 5, 9, 4).unwrap();
    let b = kmeans(&pts, 5, 9, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lloyd_inertia_never_increases() {
    let mut r = rng(106);
    for _ in 0..20 {
        let pts = random_matrix(&mut r, 50, 4);
        let init = Matrix::from_fn(6, 4, |i, j| pts[(i * 7, j)]);
        let run = lloyd(&pts, &init, 300).unwrap();
        assert!(run.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", run.inertia_trace);
    }
}

fn brute_force_accuracy(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    // Best injective map from predicted clusters to classes, both 0..k.
    fn rec(c: usize, k: usize, used: &mut Vec<bool>, map: &mut Vec<usize>, pred: &[usize], truth: &[usize], best: &mut usize) {
        if c == k {
            let hits = pred.iter().zip(truth).filter(|(p, t)| map[**p] == **t).count();
            *best = (*best).max(hits);
            return;
        }
        for t in 0..k {
            if !used[t] {
                used[t] = true;
                map[c] = t;
                rec(c + 1, k, used, map, pred, truth, best);
                used[t] = false;
            }
        }
    }
    let mut best = 0;
    rec(0, k, &mut vec![false; k], &mut vec![0; k], pred, truth, &mut best);
    best as f64 / pred.len() as f64
}

#[test]
fn score_examples() {
    let truth = [0, 0, 1, 1, 2, 2];
    let q = cluster_scores(&truth, &truth, None).unwrap();
    assert_eq!((q.accuracy, q.homogeneity, q.completeness, q.silhouette), (1.0, 1.0, 1.0, None));

    let q = cluster_scores(&[0, 0, 0, 0], &[0, 0, 1, 1], None).unwrap();
    assert!((q.accuracy - 0.5).abs() < 1e-15);
    assert!(q.homogeneity.abs() < 1e-15 && (q.completeness - 1.0).abs() < 1e-15);

    assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
    assert_eq!(brute_force_accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1], 2), 0.5);
    assert!(matches!(cluster_scores(&[0, 1], &[0], None), Err(Error::LengthMismatch { .. })));
}

#[test]
fn matching_accuracy_agrees_with_brute_force() {
    let mut r = rng(107);
    for _ in 0..200 {
        let k = 2 + r.random_range(0..4);
        let n = 5 + r.random_range(0..20);
        let mut truth: Vec<usize> = (0..k).collect();
        let mut pred: Vec<usize> = (0..k).collect();
        truth.extend((k..n).map(|_| r.random_range(0..k)));
        pred.extend((k..n).map(|_| r.random_range(0..k)));
        let got = clustering_accuracy(&pred, &truth).unwrap();
        assert!((got - brute_force_accuracy(&pred, &truth, k)).abs() < 1e-12);
    }
}

#[test]
fn homogeneity_and_completeness_swap_roles() {
    let mut r = rng(108);
    for _ in 0..50 {
        let a: Vec<usize> = (0..30).map(|_| r.random_range(0..4)).collect();
        let b: Vec<usize> = (0..30).map(|_| r.random_range(0..3)).collect();
        let (h, c) = homogeneity_completeness(&a, &b).unwrap();
        let (h2, c2) = homogeneity_completeness(&b, &a).unwrap();
        assert!((h - c2).abs() < 1e-12 && (c - h2).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&h) && (0.0..=1.0).contains(&c));
    }
}

fn naive_silhouette(labels: &[usize], pts: &Matrix) -> f64 {
    let n = labels.len();
    let dist = |i: usize, j: usize| -> f64 { (0..pts.cols()).map(|f| (pts[(i, f)] - pts[(j, f)]).powi(2)).sum::<f64>().sqrt() };
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let size = labels.iter().filter(|&&l| l == labels[i]).count();
        if size == 1 {
            continue;
        }
        let mean_to = |c: usize| {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c && j != i).collect();
            members.iter().map(|&j| dist(i, j)).sum::<f64>() / members.len() as f64
        };
        let a = mean_to(labels[i]);
        let b = (0..k).filter(|&c| c != labels[i] && labels.contains(&c)).map(mean_to).fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[test]
fn silhouette_matches_direct_definition() {
    let mut r = rng(109);
    for _ in 0..30 {
        let pts = random_matrix(&mut r, 15, 3);
        let mut labels: Vec<usize> = vec![0, 1, 2];
        labels.extend((3..15).map(|_| r.random_range(0..3)));
        let got = silhouette(&labels, &pts).unwrap().unwrap();
        assert!((got - naive_silhouette(&labels, &pts)).abs() < 1e-12);
    }
    let pts = random_matrix(&mut r, 4, 2);
    assert_eq!(silhouette(&[0, 0, 0, 0], &pts).unwrap(), None);
    assert_eq!(silhouette(&[0, 1, 2, 3], &pts).unwrap(), None);
}

#[test]
fn path_limits() {
    let mut r = rng(110);
    let k = random_kernel(&mut r, 6, 0.3);
    let fista = SolverChoice::Fista(SolverConfig::with_lambda(0.0, 0.95));
    let zero = compute_path(&k, &[0.0], &fista).unwrap();
    assert_eq!(zero.entries.len(), 1);
    assert!(zero.entries[0].pi.distance(&Matrix::identity(6)).unwrap() < 1e-9);
    let big = compute_path(&k, &[1e6], &fista).unwrap();
    assert!(big.entries[0].pi.distance(&Matrix::consensus(6)).unwrap() <= 1e-3);
}

#[test]
fn path_endpoints_and_feasibility() {
    let mut r = rng(111);
    let lambdas = with_consensus_sentinel(&[1e-8, 0.01, 0.1, 1.0]);
    assert_eq!(*lambdas.last().unwrap(), CONSENSUS_SENTINEL);
    for solver in [
        SolverChoice::Fista(SolverConfig::with_lambda(0.0, 0.95)),
        SolverChoice::Admm { alpha: 0.95, cfg: AdmmConfig::default() },
    ] {
        let k = random_kernel(&mut r, 7, 0.4);
        assert!(k.is_connected());
        let path = compute_path(&k, &lambdas, &solver).unwrap();
        assert_eq!(path.lambdas(), lambdas);
        assert_eq!(path.kernel_fingerprint, k.fingerprint());
        assert_eq!(path.solver_id, solver.id());
        let first = &path.entries[0];
        assert!(first.pi.distance(&Matrix::identity(7)).unwrap() <= 1e-3);
        let last = path.entries.last().unwrap();
        assert!(last.pi.distance(&Matrix::consensus(7)).unwrap() <= 1e-3);
        for e in &path.entries {
            assert!(!e.failed());
            assert!((1.0..=7.0).contains(&e.effective_rank));
            for s in e.pi.row_sums().into_iter().chain(e.pi.col_sums()) {
                assert!((s - 1.0).abs() < 1e-6);
            }
            assert!(e.pi.min_entry() >= -1e-9);
        }
        assert!(last.effective_rank < first.effective_rank);
    }
}

#[test]
fn failed_entries_are_recorded_and_the_path_continues() {
    let k = random_kernel(&mut rng(112), 4, 0.3);
    let broken = SolverChoice::Linearized(LinearizedConfig { delta: -1.0, ..LinearizedConfig::default() });
    let path = compute_path(&k, &[0.1, 0.2, 0.3], &broken).unwrap();
    assert_eq!(path.entries.len(), 3);
    assert!(path.entries.iter().all(|e| e.failed() && e.effective_rank.is_nan()));
    assert!(compute_path(&k, &[0.2, 0.1], &broken).is_err());
    assert!(compute_path(&k, &[-1.0], &broken).is_err());
}

#[test]
fn effective_rank_declines_along_a_small_fractal_path() {
    let spec = FractalGraphSpec { n_meta: 2, n_super: 3, n_leaf: 4, p_meta: 1.0, p_super: 1.0, ..FractalGraphSpec::default() };
    let g = generate_fractal_graph(&spec).unwrap();
    assert!(g.adjacency.is_connected());
    let base = two_hop_kernel(&g.adjacency, 0.0).unwrap();
    let k = base.regularized(0.01);
    let grid = log_grid(1e-3, 40.0, 8).unwrap();
    let path = compute_path(&k, &grid, &SolverChoice::Fista(SolverConfig::with_lambda(0.0, 0.95))).unwrap();
    let ers: Vec<f64> = path.entries.iter().map(|e| e.effective_rank).collect();
    assert!(ers[ers.len() - 1] <= 0.1 * ers[0], "{ers:?}");
}
