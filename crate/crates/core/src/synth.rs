//! Two-level synthetic graph: cliques grouped into communities.
//!
//! `n_meta` communities each hold `n_super` complete cliques of `n_leaf`
//! nodes. The same construction links blocks at both levels: an Erdős–Rényi
//! draw decides which pairs of cliques (within a community, probability
//! `p_super`) and which pairs of communities (probability `p_meta`) are
//! adjacent, and each drawn pair is realised by independent leaf-to-leaf
//! edges with probability `p_cross_super` or `p_cross_meta`.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fista::SolverConfig;
use crate::kernel::{two_hop_kernel, SimilarityKernel};
use crate::metrics::{cluster_scores, kmeans, ClusterQuality};
use crate::path::{centroid_embedding, compute_path_timed, RegularizationPath, SolverChoice};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractalGraphSpec {
    pub n_meta: usize,
    pub n_super: usize,
    pub n_leaf: usize,
    /// Chance that two communities are linked.
    pub p_meta: f64,
    /// Chance that two cliques of one community are linked.
    pub p_super: f64,
    /// Leaf-level edge density on a linked clique pair.
    pub p_cross_super: f64,
    /// Leaf-level edge density on a linked community pair.
    pub p_cross_meta: f64,
    pub seed: u64,
}

impl Default for FractalGraphSpec {
    fn default() -> Self {
        Self { n_meta: 4, n_super: 7, n_leaf: 7, p_meta: 0.5, p_super: 1.0, p_cross_super: 0.15, p_cross_meta: 0.05, seed: 0 }
    }
}

impl FractalGraphSpec {
    pub fn node_count(&self) -> usize {
        self.n_meta * self.n_super * self.n_leaf
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_meta == 0 || self.n_super == 0 || self.n_leaf == 0 {
            return Err(Error::InvalidParameter("block counts must be positive"));
        }
        for p in [self.p_meta, self.p_super, self.p_cross_super, self.p_cross_meta] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter("probabilities must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Generated graph with its two ground-truth partitions.
#[derive(Clone, Debug)]
pub struct FractalGraph {
    pub adjacency: SimilarityKernel,
    /// Clique index per node.
    pub labels_fine: Vec<usize>,
    /// Community index per node; equals `labels_fine[i] / n_super`.
    pub labels_coarse: Vec<usize>,
}

pub fn generate_fractal_graph(spec: &FractalGraphSpec) -> Result<FractalGraph> {
    spec.validate()?;
    let n = spec.node_count();
    let labels_fine: Vec<usize> = (0..n).map(|i| i / spec.n_leaf).collect();
    let labels_coarse: Vec<usize> = labels_fine.iter().map(|f| f / spec.n_super).collect();
    let mut rows = Vec::new();

    for c in 0..spec.n_meta * spec.n_super {
        let base = c * spec.n_leaf;
        for i in base..base + spec.n_leaf {
            for j in i + 1..base + spec.n_leaf {
                rows.push((i, j, 1.0));
            }
        }
    }

    let mut draw = stream(spec.seed, "synth.super/v1");
    let mut within = stream(spec.seed, "synth.within/v1");
    for m in 0..spec.n_meta {
        for a in 0..spec.n_super {
            for b in a + 1..spec.n_super {
                if draw.random::<f64>() >= spec.p_super {
                    continue;
                }
                let (sa, sb) = ((m * spec.n_super + a) * spec.n_leaf, (m * spec.n_super + b) * spec.n_leaf);
                for i in sa..sa + spec.n_leaf {
                    for j in sb..sb + spec.n_leaf {
                        if within.random::<f64>() < spec.p_cross_super {
                            rows.push((i, j, 1.0));
                        }
                    }
                }
            }
        }
    }

    let mut meta = stream(spec.seed, "synth.meta/v1");
    let mut across = stream(spec.seed, "synth.across/v1");
    let block = spec.n_super * spec.n_leaf;
    for a in 0..spec.n_meta {
        for b in a + 1..spec.n_meta {
            if meta.random::<f64>() >= spec.p_meta {
                continue;
            }
            for i in a * block..(a + 1) * block {
                for j in b * block..(b + 1) * block {
                    if across.random::<f64>() < spec.p_cross_meta {
                        rows.push((i, j, 1.0));
                    }
                }
            }
        }
    }

    Ok(FractalGraph { adjacency: SimilarityKernel::from_edge_list(n, &rows)?, labels_fine, labels_coarse })
}

/// `λ` values of the published table.
pub const TABLE_LAMBDAS: [f64; 5] = [0.001, 0.1, 0.5, 1.0, 40.0];

/// FISTA with a fixed work budget per `λ`, sized so that a five-seed run on
/// the default graph takes minutes on one core. Warm starts along the path
/// carry most of the progress.
pub fn benchmark_solver(alpha: f64) -> SolverChoice {
    SolverChoice::Fista(SolverConfig { outer_max_iter: 20, inner_max_iter: 60, ..SolverConfig::with_lambda(0.0, alpha) })
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    /// Graph parameters; `seed` is replaced per run.
    pub graph: FractalGraphSpec,
    pub lambdas: Vec<f64>,
    pub solver: SolverChoice,
    pub kmeans_restarts: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            graph: FractalGraphSpec::default(),
            lambdas: TABLE_LAMBDAS.to_vec(),
            solver: benchmark_solver(0.95),
            kmeans_restarts: 10,
        }
    }
}

/// Scores at one `λ` for one graph.
#[derive(Clone, Debug)]
pub struct SeedRow {
    pub lambda: f64,
    pub effective_rank: f64,
    /// k-means with one cluster per clique, scored against the clique labels.
    pub fine: ClusterQuality,
    /// k-means with one cluster per community, scored against those labels.
    pub coarse: ClusterQuality,
    pub converged: bool,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct SeedReport {
    pub seed: u64,
    pub rows: Vec<SeedRow>,
    pub path: RegularizationPath,
    pub graph: FractalGraph,
}

/// Generates the graph for `seed`, builds its regularized two-hop kernel,
/// solves the path and clusters the embedded centroids at every `λ`.
///
/// k-means runs on coordinates of the centroids `Φπ_i` (see
/// [`centroid_embedding`]); silhouettes are measured on the rows of `π`.
pub fn evaluate_seed(cfg: &BenchmarkConfig, seed: u64, clock: impl FnMut() -> f64) -> Result<SeedReport> {
    let graph = generate_fractal_graph(&FractalGraphSpec { seed, ..cfg.graph })?;
    let base = two_hop_kernel(&graph.adjacency, 0.0)?;
    let kernel = base.regularized(base.default_gamma());
    let path = compute_path_timed(&kernel, &cfg.lambdas, &cfg.solver, clock)?;
    let (k_fine, k_coarse) = (cfg.graph.n_meta * cfg.graph.n_super, cfg.graph.n_meta);
    let mut rows = Vec::with_capacity(path.entries.len());
    for entry in &path.entries {
        if let Some(e) = &entry.error {
            return Err(e.clone());
        }
        let points = centroid_embedding(&entry.pi, &kernel)?;
        let fine = kmeans(&points, k_fine, seed, cfg.kmeans_restarts)?;
        let coarse = kmeans(&points, k_coarse, seed, cfg.kmeans_restarts)?;
        rows.push(SeedRow {
            lambda: entry.lambda,
            effective_rank: entry.effective_rank,
            fine: cluster_scores(&fine.labels, &graph.labels_fine, Some(&entry.pi))?,
            coarse: cluster_scores(&coarse.labels, &graph.labels_coarse, Some(&entry.pi))?,
            converged: entry.converged,
            wall_time: entry.wall_time,
        });
    }
    Ok(SeedReport { seed, rows, path, graph })
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for one value).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, std: libm::sqrt(var) }
    }
}

/// One line of the benchmark table, aggregated over seeds.
#[derive(Clone, Debug)]
pub struct TableRow {
    pub lambda: f64,
    pub effective_rank: Summary,
    pub fine_accuracy: Summary,
    pub fine_completeness: Summary,
    pub fine_homogeneity: Summary,
    pub fine_silhouette: Summary,
    pub coarse_accuracy: Summary,
    pub coarse_completeness: Summary,
    pub coarse_homogeneity: Summary,
    pub coarse_silhouette: Summary,
    pub seeds: usize,
}

/// Aggregates per-seed rows by `λ`. All reports must share the same grid.
/// Missing silhouettes are skipped.
pub fn summarize(reports: &[SeedReport]) -> Result<Vec<TableRow>> {
    let Some(first) = reports.first() else {
        return Ok(Vec::new());
    };
    let lambdas: Vec<f64> = first.rows.iter().map(|r| r.lambda).collect();
    if reports.iter().any(|r| r.rows.iter().map(|x| x.lambda).ne(lambdas.iter().copied())) {
        return Err(Error::InvalidParameter("reports use different lambda grids"));
    }
    let col = |i: usize, f: &dyn Fn(&SeedRow) -> Option<f64>| -> Summary {
        let v: Vec<f64> = reports.iter().filter_map(|r| f(&r.rows[i])).collect();
        Summary::of(&v)
    };
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| TableRow {
            lambda,
            effective_rank: col(i, &|r| Some(r.effective_rank)),
            fine_accuracy: col(i, &|r| Some(r.fine.accuracy)),
            fine_completeness: col(i, &|r| Some(r.fine.completeness)),
            fine_homogeneity: col(i, &|r| Some(r.fine.homogeneity)),
            fine_silhouette: col(i, &|r| r.fine.silhouette),
            coarse_accuracy: col(i, &|r| Some(r.coarse.accuracy)),
            coarse_completeness: col(i, &|r| Some(r.coarse.completeness)),
            coarse_homogeneity: col(i, &|r| Some(r.coarse.homogeneity)),
            coarse_silhouette: col(i, &|r| r.coarse.silhouette),
            seeds: reports.len(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_graph_shape() {
        let g = generate_fractal_graph(&FractalGraphSpec::default()).unwrap();
        assert_eq!(g.adjacency.n(), 196);
        for i in 0..196 {
            assert!(g.adjacency.neighbors(i).count() >= 6);
            assert_eq!(g.labels_coarse[i], g.labels_fine[i] / 7);
        }
        assert!(g.adjacency.diagonal().iter().all(|&d| d == 0.0));
        assert!(g.adjacency.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn disjoint_cliques_without_cross_edges() {
        let spec = FractalGraphSpec { p_meta: 0.0, p_cross_super: 0.0, ..Default::default() };
        let g = generate_fractal_graph(&spec).unwrap();
        assert_eq!(g.adjacency.edge_count(), 28 * 21);
        assert!(g.adjacency.edges().iter().all(|e| g.labels_fine[e.i] == g.labels_fine[e.j]));
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(Summary::of(&[4.0]).std, 0.0);
        assert!(Summary::of(&[]).mean.is_nan());
    }

    #[test]
    fn seed_determinism() {
        let a = generate_fractal_graph(&FractalGraphSpec { seed: 3, ..Default::default() }).unwrap();
        let b = generate_fractal_graph(&FractalGraphSpec { seed: 3, ..Default::default() }).unwrap();
        let c = generate_fractal_graph(&FractalGraphSpec { seed: 4, ..Default::default() }).unwrap();
        assert_eq!(a.adjacency, b.adjacency);
        assert_ne!(a.adjacency, c.adjacency);
    }
}
