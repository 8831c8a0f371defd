#![allow(dead_code)]

use graphcoalesce_core::{Matrix, SimilarityKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric, diagonally dominant (hence positive definite) similarity matrix
/// with a random sparsity pattern; every node keeps its chain neighbour so the
/// graph stays connected.
pub fn random_dense_kernel(rng: &mut ChaCha8Rng, n: usize, drop: f64) -> Matrix {
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || rng.random::<f64>() >= drop {
                let w = 0.1 + rng.random::<f64>();
                k[(i, j)] = w;
                k[(j, i)] = w;
            }
        }
    }
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| k[(i, j)]).sum();
        k[(i, i)] = s + 0.1 + rng.random::<f64>();
    }
    k
}

pub fn random_kernel(rng: &mut ChaCha8Rng, n: usize, drop: f64) -> SimilarityKernel {
    SimilarityKernel::from_dense(&random_dense_kernel(rng, n, drop)).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Exact Euclidean projection of `v` onto the probability simplex by bisection
/// on the threshold (independent of the sort-based library routine).
pub fn simplex_bisect(v: &[f64]) -> Vec<f64> {
    let (mut lo, mut hi) = (v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0, v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = v.iter().map(|&x| (x - mid).max(0.0)).sum();
        if s > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

pub fn fused_columns(pi: &Matrix, a: usize, b: usize) -> f64 {
    (0..pi.rows()).map(|r| (pi[(r, a)] - pi[(r, b)]).powi(2)).sum::<f64>().sqrt()
}

/// Least-squares solve of a small dense system by normal equations with
/// Gaussian elimination and partial pivoting.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (a.len(), a[0].len());
    let mut g = vec![vec![0.0; n + 1]; n];
    for r in 0..n {
        for c in 0..n {
            g[r][c] = (0..m).map(|k| a[k][r] * a[k][c]).sum();
        }
        g[r][n] = (0..m).map(|k| a[k][r] * b[k]).sum();
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| g[x][col].abs().partial_cmp(&g[y][col].abs()).unwrap())?;
        if g[piv][col].abs() < 1e-12 {
            return None;
        }
        g.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = g[r][col] / g[col][col];
                for c in col..=n {
                    g[r][c] -= f * g[col][c];
                }
            }
        }
    }
    Some((0..n).map(|r| g[r][n] / g[r][r]).collect())
}

/// Exact Euclidean projection onto the doubly stochastic matrices for tiny
/// `n`, by enumerating supports and checking the KKT conditions
/// `P = max(0, Y − u1ᵀ − 1vᵀ)` with unit row and column sums.
pub fn birkhoff_qp_oracle(y: &Matrix) -> Matrix {
    let n = y.rows();
    assert!(n <= 4);
    let cells = n * n;
    for mask in 1u32..(1u32 << cells) {
        let inside = |i: usize, j: usize| mask & (1 << (i * n + j)) != 0;
        if (0..n).any(|i| (0..n).all(|j| !inside(i, j))) || (0..n).any(|j| (0..n).all(|i| !inside(i, j))) {
            continue;
        }
        // Unknowns u_0..u_{n-1}, v_0..v_{n-2}; v_{n-1} = 0 fixes the gauge.
        let unknowns = 2 * n - 1;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..n {
            let mut row = vec![0.0; unknowns];
            let mut rhs = -1.0;
            for j in (0..n).filter(|&j| inside(i, j)) {
                rhs += y[(i, j)];
                row[i] += 1.0;
                if j < n - 1 {
                    row[n + j] += 1.0;
                }
            }
            a.push(row);
            b.push(rhs);
        }
        for j in 0..n {
            let mut row = vec![0.0; unknowns];
            let mut rhs = -1.0;
            for i in (0..n).filter(|&i| inside(i, j)) {
                rhs += y[(i, j)];
                row[i] += 1.0;
                if j < n - 1 {
                    row[n + j] += 1.0;
                }
            }
            a.push(row);
            b.push(rhs);
        }
        let Some(sol) = solve_dense(&a, &b) else { continue };
        let u = &sol[..n];
        let v = |j: usize| if j < n - 1 { sol[n + j] } else { 0.0 };
        let p = Matrix::from_fn(n, n, |i, j| if inside(i, j) { y[(i, j)] - u[i] - v(j) } else { 0.0 });
        let kkt = (0..n).all(|i| {
            (0..n).all(|j| {
                let s = y[(i, j)] - u[i] - v(j);
                if inside(i, j) { s >= -1e-12 } else { s <= 1e-12 }
            })
        });
        let sums_ok = p.row_sums().iter().chain(p.col_sums().iter()).all(|s| (s - 1.0).abs() < 1e-10);
        if kkt && sums_ok {
            return p;
        }
    }
    panic!("no KKT point found");
}

/// Random unweighted graph on `n` nodes containing a spanning path.
pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> SimilarityKernel {
    let mut rows = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || rng.random::<f64>() < p {
                rows.push((i, j, 1.0));
            }
        }
    }
    SimilarityKernel::from_edge_list(n, &rows).unwrap()
}

/// Random doubly stochastic matrix: a convex combination of permutations.
pub fn random_doubly_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut out = Matrix::zeros(n, n);
    let weights: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        for (i, &j) in perm.iter().enumerate() {
            out[(i, j)] += w / total;
        }
    }
    out
}

pub fn random_blocks(rng: &mut ChaCha8Rng, kernel: &SimilarityKernel, scale: f64) -> graphcoalesce_core::EdgeBlocks {
    let n = kernel.n();
    let m = kernel.edge_count();
    let data = (0..n * m).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect();
    graphcoalesce_core::EdgeBlocks::from_vec(n, m, data).unwrap()
}

pub struct OracleRecord {
    pub kind: String,
    pub name: String,
    pub kernel: Matrix,
    pub lambda: f64,
    pub alpha: f64,
    pub value: f64,
    pub pi: Matrix,
    pub target: Option<Matrix>,
}

fn matrix_from_json(v: &serde_json::Value) -> Matrix {
    let rows: Vec<Vec<f64>> = v.as_array().unwrap().iter().map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Conic-solver optima cached by `fixtures/generate_qp_oracle.py`.
pub fn qp_oracle() -> Vec<OracleRecord> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/qp_oracle.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json.as_array()
        .unwrap()
        .iter()
        .map(|r| OracleRecord {
            kind: r["kind"].as_str().unwrap().to_string(),
            name: r["name"].as_str().unwrap().to_string(),
            kernel: matrix_from_json(&r["kernel"]),
            lambda: r["lambda"].as_f64().unwrap(),
            alpha: r["alpha"].as_f64().unwrap(),
            value: r["value"].as_f64().unwrap(),
            pi: matrix_from_json(&r["pi"]),
            target: r.get("target").map(matrix_from_json),
        })
        .collect()
}
