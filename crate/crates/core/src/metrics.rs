//! Cluster extraction from centroid matrices and clustering quality scores.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterMethod {
    Fusion,
    KMeans,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterQuality {
    pub accuracy: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    /// `None` without points, or when there is one cluster or only singletons.
    pub silhouette: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster of each item, numbered `0..k` in order of first appearance.
    pub labels: Vec<usize>,
    pub k: usize,
    pub method: ClusterMethod,
    /// Set when k-means was asked for more clusters than distinct points.
    pub degenerate: bool,
    /// k-means objective (sum of squared distances to centres).
    pub inertia: Option<f64>,
    pub quality: Option<ClusterQuality>,
}

impl ClusterAssignment {
    pub fn with_quality(mut self, truth: &[usize], points: Option<&Matrix>) -> Result<Self> {
        self.quality = Some(cluster_scores(&self.labels, truth, points)?);
        Ok(self)
    }
}

/// Renumbers labels `0..k` by first appearance; returns `k`.
fn canonicalize(labels: &mut [usize]) -> usize {
    let mut map: Vec<(usize, usize)> = Vec::new();
    for l in labels.iter_mut() {
        let id = match map.iter().find(|(old, _)| old == l) {
            Some(&(_, new)) => new,
            None => {
                map.push((*l, map.len()));
                map.len() - 1
            }
        };
        *l = id;
    }
    map.len()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Default fusion threshold `1e-6 · √N`.
pub fn default_fusion_epsilon(n: usize) -> f64 {
    1e-6 * libm::sqrt(n as f64)
}

/// Connected components of the graph joining items `i, j` whose centroids
/// (columns of `pi`) lie within `epsilon` of each other.
pub fn extract_clusters_by_fusion(pi: &Matrix, epsilon: f64) -> Result<ClusterAssignment> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter("epsilon must be nonnegative"));
    }
    let points = pi.transpose();
    let n = points.rows();
    let eps2 = epsilon * epsilon;
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if squared_distance(points.row(i), points.row(j)) <= eps2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut labels: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let k = canonicalize(&mut labels);
    Ok(ClusterAssignment { labels, k, method: ClusterMethod::Fusion, degenerate: false, inertia: None, quality: None })
}

/// One run of Lloyd's algorithm.
#[derive(Clone, Debug)]
pub struct LloydRun {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = squared_distance(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd iterations from the given centres until assignments stop changing.
/// An emptied cluster is re-seeded at the point farthest from its centre.
pub fn lloyd(points: &Matrix, init: &Matrix, max_iter: usize) -> Result<LloydRun> {
    if init.cols() != points.cols() {
        return Err(Error::DimensionMismatch { expected: points.cols(), found: init.cols() });
    }
    let (n, dim, k) = (points.rows(), points.cols(), init.rows());
    let mut centers = init.clone();
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(points.row(i), &centers);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dist[i] = d;
            inertia += d;
        }
        trace.push(inertia);
        if !changed {
            break;
        }
        let mut counts = vec![0usize; k];
        let mut sums = Matrix::zeros(k, dim);
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, &x) in sums.row_mut(labels[i]).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                let far = (0..n).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                centers.row_mut(c).copy_from_slice(points.row(far));
                dist[far] = 0.0;
            }
        }
    }
    Ok(LloydRun { labels, centers, inertia_trace: trace })
}

fn kmeans_plus_plus(points: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = points.rows();
    let mut centers = Matrix::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(squared_distance(points.row(i), points.row(pick)));
        }
    }
    centers
}

const LLOYD_MAX_ITER: usize = 300;

/// k-means on the rows of `points`: best of `restarts` k-means++ runs.
/// Deterministic for a given `seed`.
///
/// With fewer than `k` distinct points, returns the grouping of identical
/// points with `degenerate` set.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter("k must lie in 1..=N"));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be at least 1"));
    }
    if !points.is_finite() {
        return Err(Error::NonFiniteIterate);
    }
    let exact = extract_rows_exact(points);
    if exact.k < k {
        log::warn!("k-means asked for {k} clusters but only {} distinct points", exact.k);
        return Ok(ClusterAssignment { degenerate: true, method: ClusterMethod::KMeans, inertia: Some(0.0), ..exact });
    }
    let mut rng = stream(seed, "kmeans.init/v1");
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts {
        let init = kmeans_plus_plus(points, k, &mut rng);
        let run = lloyd(points, &init, LLOYD_MAX_ITER)?;
        let inertia = *run.inertia_trace.last().expect("at least one step");
        if best.as_ref().map_or(true, |(b, _)| inertia < *b) {
            best = Some((inertia, run.labels));
        }
    }
    let (inertia, mut labels) = best.expect("restarts >= 1");
    let k = canonicalize(&mut labels);
    Ok(ClusterAssignment { labels, k, method: ClusterMethod::KMeans, degenerate: false, inertia: Some(inertia), quality: None })
}

/// Groups exactly identical rows.
fn extract_rows_exact(points: &Matrix) -> ClusterAssignment {
    let n = points.rows();
    let mut labels = vec![0; n];
    for i in 0..n {
        labels[i] = (0..i).find(|&j| points.row(j) == points.row(i)).map_or(i, |j| labels[j]);
    }
    let k = canonicalize(&mut labels);
    ClusterAssignment { labels, k, method: ClusterMethod::KMeans, degenerate: false, inertia: None, quality: None }
}

fn contingency(pred: &[usize], truth: &[usize]) -> (Vec<Vec<usize>>, usize, usize) {
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kt]; kp];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p][t] += 1;
    }
    (table, kp, kt)
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method,
/// O(n³)); returns the optimal total.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> f64 {
    let n = weights.len();
    if n == 0 {
        return 0.0;
    }
    // Minimise the negated weights with row/column potentials.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| weights[owner[j] - 1][j - 1]).sum()
}

/// Fraction of items whose cluster maps to their class. The map is the best
/// one-to-one matching when the cluster and class counts agree, and each
/// cluster's majority class otherwise.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    if pred.is_empty() {
        return Ok(1.0);
    }
    let (table, kp, kt) = contingency(pred, truth);
    let used_pred = table.iter().filter(|r| r.iter().any(|&c| c > 0)).count();
    let used_truth = (0..kt).filter(|&t| table.iter().any(|r| r[t] > 0)).count();
    let hits = if used_pred == used_truth {
        let m = kp.max(kt);
        let w: Vec<Vec<f64>> =
            (0..m).map(|p| (0..m).map(|t| if p < kp && t < kt { table[p][t] as f64 } else { 0.0 }).collect()).collect();
        max_weight_matching(&w)
    } else {
        table.iter().map(|r| r.iter().copied().max().unwrap_or(0) as f64).sum()
    };
    Ok(hits / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| c as f64 / n).map(|p| -p * libm::log(p)).sum()
}

/// `(homogeneity, completeness)` of `pred` against `truth`.
pub fn homogeneity_completeness(pred: &[usize], truth: &[usize]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    let n = pred.len() as f64;
    if pred.is_empty() {
        return Ok((1.0, 1.0));
    }
    let (table, _, kt) = contingency(pred, truth);
    let h_truth = entropy((0..kt).map(|t| table.iter().map(|r| r[t]).sum()), n);
    let h_pred = entropy(table.iter().map(|r| r.iter().sum()), n);
    let h_joint = entropy(table.iter().flatten().copied(), n);
    // H(C|K) = H(C,K) − H(K), H(K|C) = H(C,K) − H(C).
    let homogeneity = if h_truth == 0.0 { 1.0 } else { 1.0 - (h_joint - h_pred) / h_truth };
    let completeness = if h_pred == 0.0 { 1.0 } else { 1.0 - (h_joint - h_truth) / h_pred };
    Ok((homogeneity.clamp(0.0, 1.0), completeness.clamp(0.0, 1.0)))
}

/// Mean silhouette coefficient with Euclidean distances between rows of
/// `points`. Items alone in their cluster score 0. `None` with fewer than two
/// clusters or when every cluster is a singleton.
pub fn silhouette(labels: &[usize], points: &Matrix) -> Result<Option<f64>> {
    let n = labels.len();
    if points.rows() != n {
        return Err(Error::LengthMismatch { left: n, right: points.rows() });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if nonempty < 2 || nonempty == n {
        return Ok(None);
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += libm::sqrt(squared_distance(points.row(i), points.row(j)));
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(Some(total / n as f64))
}

/// Accuracy, homogeneity, completeness, and (with `points`) silhouette.
pub fn cluster_scores(pred: &[usize], truth: &[usize], points: Option<&Matrix>) -> Result<ClusterQuality> {
    let accuracy = clustering_accuracy(pred, truth)?;
    let (homogeneity, completeness) = homogeneity_completeness(pred, truth)?;
    let silhouette = match points {
        Some(p) => silhouette(pred, p)?,
        None => None,
    };
    Ok(ClusterQuality { accuracy, homogeneity, completeness, silhouette })
}
