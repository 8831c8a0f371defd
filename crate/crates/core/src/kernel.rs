//! Similarity kernels and the kernel-weighted pairwise-difference operator.
//!
//! A [`SimilarityKernel`] stores a sparse symmetric nonnegative matrix `K`
//! together with the canonical list of its off-diagonal support
//! (`i < j`, `K_ij ≠ 0`). That edge list indexes every edge-shaped quantity
//! in the crate: difference images, dual variables and ADMM splits.
//!
//! For a centroid matrix `π` (columns are centroids) the difference operator
//! produces one block per edge,
//!
//! ```text
//! block(i, j) = K_ij · (π_i − π_j)   ∈ R^N
//! ```
//!
//! and its adjoint scatters `K_ij · d_ij` back onto column `i` and
//! `−K_ij · d_ij` onto column `j`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// One undirected edge of the kernel support, `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// What is known about the smallest eigenvalue of the kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PsdMargin {
    Unverified,
    /// Smallest eigenvalue is known to be at least this value.
    AtLeast(f64),
}

/// Sparse symmetric nonnegative similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityKernel {
    n: usize,
    diag: Vec<f64>,
    edges: Vec<Edge>,
    // CSR view over the full symmetric off-diagonal pattern.
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    psd_margin: PsdMargin,
}

impl SimilarityKernel {
    /// Builds a kernel from `(u, v, w)` triples on `n` nodes.
    ///
    /// A pair may be listed once, or in both orientations with the same
    /// weight. `u == v` sets the diagonal. Zero weights are dropped from the
    /// edge support.
    pub fn from_edge_list(n: usize, rows: &[(usize, usize, f64)]) -> Result<Self> {
        let mut seen: Vec<(usize, usize, f64, bool)> = Vec::with_capacity(rows.len());
        for &(u, v, w) in rows {
            for idx in [u, v] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if !w.is_finite() {
                return Err(Error::NonFiniteWeight { u, v });
            }
            if u != v && w < 0.0 {
                return Err(Error::NegativeWeight { u, v });
            }
            let (a, b) = if u <= v { (u, v) } else { (v, u) };
            seen.push((a, b, w, u <= v));
        }
        seen.sort_by_key(|x| (x.0, x.1));

        let mut diag = vec![0.0; n];
        let mut edges = Vec::new();
        let mut k = 0;
        while k < seen.len() {
            let (a, b, w, forward) = seen[k];
            let mut end = k + 1;
            while end < seen.len() && (seen[end].0, seen[end].1) == (a, b) {
                end += 1;
            }
            match end - k {
                1 => {}
                2 => {
                    let (_, _, w2, forward2) = seen[k + 1];
                    // Accept only the mirrored listing of an off-diagonal pair.
                    if a == b || forward == forward2 || w != w2 {
                        return Err(Error::AsymmetricDuplicate { u: a, v: b });
                    }
                }
                _ => return Err(Error::AsymmetricDuplicate { u: a, v: b }),
            }
            if a == b {
                diag[a] = w;
            } else if w != 0.0 {
                edges.push(Edge { i: a, j: b, weight: w });
            }
            k = end;
        }
        Ok(Self::assemble(n, diag, edges, PsdMargin::Unverified))
    }

    /// Builds a kernel from a dense matrix, which must be symmetric up to
    /// `1e-12` relative to its largest entry and have a nonnegative
    /// off-diagonal. The upper triangle is stored.
    pub fn from_dense(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        if !m.is_finite() {
            return Err(Error::NonFiniteWeight { u: 0, v: 0 });
        }
        let n = m.rows();
        let scale = m.as_slice().iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        if !m.is_symmetric(1e-12 * scale) {
            return Err(Error::NonSymmetricInput);
        }
        let diag = (0..n).map(|i| m[(i, i)]).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = m[(i, j)];
                if w < 0.0 {
                    return Err(Error::NegativeWeight { u: i, v: j });
                }
                if w != 0.0 {
                    edges.push(Edge { i, j, weight: w });
                }
            }
        }
        Ok(Self::assemble(n, diag, edges, PsdMargin::Unverified))
    }

    fn assemble(n: usize, diag: Vec<f64>, edges: Vec<Edge>, psd_margin: PsdMargin) -> Self {
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + degree[i];
        }
        let mut fill = row_ptr.clone();
        let mut cols = vec![0usize; row_ptr[n]];
        let mut vals = vec![0.0; row_ptr[n]];
        // Edges are sorted by (i, j), so each CSR row comes out sorted too.
        for e in &edges {
            cols[fill[e.i]] = e.j;
            vals[fill[e.i]] = e.weight;
            fill[e.i] += 1;
        }
        for e in &edges {
            cols[fill[e.j]] = e.i;
            vals[fill[e.j]] = e.weight;
            fill[e.j] += 1;
        }
        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            let mut row: Vec<(usize, f64)> = cols[lo..hi].iter().copied().zip(vals[lo..hi].iter().copied()).collect();
            row.sort_by_key(|&(c, _)| c);
            for (k, (c, v)) in row.into_iter().enumerate() {
                cols[lo + k] = c;
                vals[lo + k] = v;
            }
        }
        Self { n, diag, edges, row_ptr, cols, vals, psd_margin }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Canonical edge list: sorted, `i < j`, nonzero weights only.
    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    pub fn psd_margin(&self) -> PsdMargin {
        self.psd_margin
    }

    /// Records an externally verified bound on the smallest eigenvalue.
    pub fn with_psd_margin(mut self, margin: PsdMargin) -> Self {
        self.psd_margin = margin;
        self
    }

    /// Off-diagonal neighbours of `i` with their weights, sorted by index.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[lo..hi].binary_search(&j) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = self.diag[i];
            for (j, w) in self.neighbors(i) {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// `K · M` for a dense `M` with `n` rows.
    pub fn mul_dense(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: m.rows() });
        }
        let mut out = Matrix::zeros(self.n, m.cols());
        for i in 0..self.n {
            let d = self.diag[i];
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let out_row = out.row_mut(i);
            if d != 0.0 {
                for (o, x) in out_row.iter_mut().zip(m.row(i)) {
                    *o += d * x;
                }
            }
            for k in lo..hi {
                let w = self.vals[k];
                for (o, x) in out_row.iter_mut().zip(m.row(self.cols[k])) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// `M · K` for a dense `M` with `n` columns.
    pub fn right_mul_dense(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: m.cols() });
        }
        let mut out = Matrix::zeros(m.rows(), self.n);
        for r in 0..m.rows() {
            let src = m.row(r);
            let dst = out.row_mut(r);
            for (k, &x) in src.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                dst[k] += x * self.diag[k];
                for p in self.row_ptr[k]..self.row_ptr[k + 1] {
                    dst[self.cols[p]] += x * self.vals[p];
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    /// Squared ℓ₂ norm of column `i`, diagonal included.
    pub fn column_norm_sq(&self, i: usize) -> f64 {
        self.diag[i] * self.diag[i] + self.neighbors(i).map(|(_, w)| w * w).sum::<f64>()
    }

    pub fn max_column_norm_sq(&self) -> f64 {
        (0..self.n).map(|i| self.column_norm_sq(i)).fold(0.0, f64::max)
    }

    /// Off-diagonal row sums `(K̃ 1)_i` with `K̃ = K − diag(K)`.
    pub fn offdiag_degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.neighbors(i).map(|(_, w)| w).sum()).collect()
    }

    /// `K + γ I`; a nonnegative shift raises the recorded PSD margin by γ.
    pub fn regularized(&self, gamma: f64) -> Self {
        let mut k = self.clone();
        k.diag.iter_mut().for_each(|d| *d += gamma);
        k.psd_margin = match self.psd_margin {
            PsdMargin::AtLeast(m) => PsdMargin::AtLeast(m + gamma),
            PsdMargin::Unverified => PsdMargin::Unverified,
        };
        k
    }

    /// Default ridge `1e-6 · trace(K) / N`.
    pub fn default_gamma(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            1e-6 * self.trace() / self.n as f64
        }
    }

    /// Whether the off-diagonal support forms a single connected component.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for (j, _) in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }

    /// FNV-1a hash over the node count and every stored entry.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(self.n as u64);
        for d in &self.diag {
            feed(d.to_bits());
        }
        for e in &self.edges {
            feed(e.i as u64);
            feed(e.j as u64);
            feed(e.weight.to_bits());
        }
        h
    }
}

/// Regularised two-hop kernel `D^{-1/2} A² D^{-1/2} + γ I` with
/// `D = Diag(A² 1)`.
///
/// `A²` is positive semidefinite, so the result has smallest eigenvalue at
/// least `γ`, which is recorded as the PSD margin.
pub fn two_hop_kernel(adjacency: &SimilarityKernel, gamma: f64) -> Result<SimilarityKernel> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter("gamma must be finite and nonnegative"));
    }
    let n = adjacency.n();
    // Row i of A² accumulated densely, then sparsified.
    let mut dense_row = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut a2_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let row_of = |i: usize| {
        let d = adjacency.diag[i];
        core::iter::once((i, d)).filter(|&(_, w)| w != 0.0).chain(adjacency.neighbors(i))
    };
    for i in 0..n {
        for (j, a_ij) in row_of(i) {
            for (k, a_jk) in row_of(j) {
                if dense_row[k] == 0.0 {
                    touched.push(k);
                }
                dense_row[k] += a_ij * a_jk;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let row: Vec<(usize, f64)> = touched.iter().map(|&k| (k, dense_row[k])).filter(|&(_, v)| v != 0.0).collect();
        for &k in &touched {
            dense_row[k] = 0.0;
        }
        touched.clear();
        a2_rows.push(row);
    }
    let degree: Vec<f64> = a2_rows.iter().map(|r| r.iter().map(|&(_, v)| v).sum()).collect();
    for (node, &d) in degree.iter().enumerate() {
        if !(d > 0.0) {
            return Err(Error::IsolatedNode { node });
        }
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| 1.0 / libm::sqrt(d)).collect();
    let mut diag = vec![gamma; n];
    let mut edges = Vec::new();
    for (i, row) in a2_rows.iter().enumerate() {
        for &(k, v) in row {
            let w = inv_sqrt[i] * v * inv_sqrt[k];
            if k == i {
                diag[i] += w;
            } else if k > i {
                edges.push(Edge { i, j: k, weight: w });
            }
        }
    }
    Ok(SimilarityKernel::assemble(n, diag, edges, PsdMargin::AtLeast(gamma)))
}

/// Edge-indexed stack of `N`-vectors, one block per kernel edge.
///
/// Used for difference images `π δ_K`, the dual variables of the FISTA
/// solver and the split variables of ADMM.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeBlocks {
    n: usize,
    count: usize,
    data: Vec<f64>,
}

/// Output of [`apply_difference`]: block `e` is `K_e (π_i − π_j)`.
pub type DifferenceImage = EdgeBlocks;

impl EdgeBlocks {
    pub fn zeros(n: usize, count: usize) -> Self {
        Self { n, count, data: vec![0.0; n * count] }
    }

    pub fn zeros_like(kernel: &SimilarityKernel) -> Self {
        Self::zeros(kernel.n(), kernel.edge_count())
    }

    pub fn from_vec(n: usize, count: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * count {
            return Err(Error::DimensionMismatch { expected: n * count, found: data.len() });
        }
        Ok(Self { n, count, data })
    }

    /// Block dimension.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of blocks.
    #[inline]
    pub fn len(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn block(&self, e: usize) -> &[f64] {
        &self.data[e * self.n..(e + 1) * self.n]
    }

    #[inline]
    pub fn block_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.data[e * self.n..(e + 1) * self.n]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n.max(1)).take(self.count)
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        let count = self.count;
        self.data.chunks_exact_mut(self.n.max(1)).take(count)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &EdgeBlocks) -> bool {
        self.n == other.n && self.count == other.count
    }

    pub fn dot(&self, other: &EdgeBlocks) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn distance(&self, other: &EdgeBlocks) -> f64 {
        libm::sqrt(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Sum of block ℓ₂ norms (the ℓ₂,₁ norm).
    pub fn l21_norm(&self) -> f64 {
        self.blocks().map(crate::linalg::norm2).sum()
    }

    /// Sum of absolute entries (the ℓ₁ norm).
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }
}

fn check_square(pi: &Matrix, n: usize) -> Result<()> {
    if pi.rows() != n || pi.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: if pi.rows() != n { pi.rows() } else { pi.cols() } });
    }
    Ok(())
}

/// Writes `w · (π_i − π_j)` for each `(i, j, w)` into consecutive blocks.
/// `pi_t` is `πᵀ`, so columns of `π` are contiguous rows.
pub(crate) fn differences_into(pi_t: &Matrix, pairs: impl Iterator<Item = (usize, usize, f64)>, out: &mut EdgeBlocks) {
    for ((i, j, w), block) in pairs.zip(out.blocks_mut()) {
        for ((b, a), c) in block.iter_mut().zip(pi_t.row(i)).zip(pi_t.row(j)) {
            *b = w * (a - c);
        }
    }
}

/// Accumulates `Σ w · d_e (e_i − e_j)ᵀ` into `out_t`, the transpose of the
/// `N × N` result.
pub(crate) fn scatter_into(d: &EdgeBlocks, pairs: impl Iterator<Item = (usize, usize, f64)>, out_t: &mut Matrix) {
    for ((i, j, w), block) in pairs.zip(d.blocks()) {
        for (o, b) in out_t.row_mut(i).iter_mut().zip(block) {
            *o += w * b;
        }
        for (o, b) in out_t.row_mut(j).iter_mut().zip(block) {
            *o -= w * b;
        }
    }
}

pub(crate) fn weighted_pairs(kernel: &SimilarityKernel) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    kernel.edges().iter().map(|e| (e.i, e.j, e.weight))
}

/// `π δ_K`: one block `K_ij (π_i − π_j)` per kernel edge.
pub fn apply_difference(pi: &Matrix, kernel: &SimilarityKernel) -> Result<DifferenceImage> {
    check_square(pi, kernel.n())?;
    let mut out = EdgeBlocks::zeros_like(kernel);
    differences_into(&pi.transpose(), weighted_pairs(kernel), &mut out);
    Ok(out)
}

/// `d δ_Kᵀ`: adjoint of [`apply_difference`], as a dense `N × N` matrix.
pub fn apply_difference_adjoint(d: &DifferenceImage, kernel: &SimilarityKernel) -> Result<Matrix> {
    if d.n() != kernel.n() || d.len() != kernel.edge_count() {
        return Err(Error::DimensionMismatch { expected: kernel.edge_count(), found: d.len() });
    }
    let n = kernel.n();
    let mut out_t = Matrix::zeros(n, n);
    scatter_into(d, weighted_pairs(kernel), &mut out_t);
    Ok(out_t.transpose())
}

/// Lipschitz constant used for the dual ascent step:
/// `16 λ² max(α², (1−α)²) · max_i ‖K_i‖²`, diagonal included in the
/// column norms.
pub fn lipschitz_constant(kernel: &SimilarityKernel, lambda: f64, alpha: f64) -> f64 {
    let mix = f64::max(alpha * alpha, (1.0 - alpha) * (1.0 - alpha));
    16.0 * lambda * lambda * mix * kernel.max_column_norm_sq()
}
