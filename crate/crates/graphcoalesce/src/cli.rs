//! Argument parsing and subcommand dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphcoalesce_core::admm::AdmmConfig;
use graphcoalesce_core::fista::SolverConfig;
use graphcoalesce_core::linalg::symmetric_eigenvalues;
use graphcoalesce_core::linearized::LinearizedConfig;
use graphcoalesce_core::metrics::{cluster_scores, default_fusion_epsilon, extract_clusters_by_fusion, kmeans};
use graphcoalesce_core::path::{centroid_embedding, centroid_similarity, default_grid, effective_rank, log_grid, with_consensus_sentinel, SolverChoice};
use graphcoalesce_core::synth::{BenchmarkConfig, FractalGraphSpec};
use graphcoalesce_core::{two_hop_kernel, SimilarityKernel};
use serde::Serialize;

use crate::bench::{run_benchmark, table_csv, table_records, table_text};
use crate::error::{CliError, Result};
use crate::io::{format_float, read_edge_list, read_kernel_csv, read_labels, read_matrix_csv, write_json_atomic, write_matrix_csv, write_text};
use crate::paths::{run_path, run_path_parallel, write_path};
use crate::verify::{random_kernel, run_battery};

#[derive(Debug, Parser)]
#[command(name = "graphcoalesce", version, about = "Convex hierarchical clustering on similarity graphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Fista,
    Admm,
    Linearized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn nonnegative(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and nonnegative"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and positive"))
    }
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Weight of the group (ℓ₂) part of the penalty; the ℓ₁ part gets 1 − alpha.
    #[arg(long, global = true, default_value_t = 0.95, value_parser = unit_interval)]
    pub alpha: f64,
    /// Diagonal ridge added to the kernel [default: 1e-6 · trace(K) / N].
    #[arg(long, global = true, value_parser = nonnegative)]
    pub gamma: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = SolverKind::Fista)]
    pub solver: SolverKind,
    /// ADMM penalty parameter.
    #[arg(long, global = true, default_value_t = 1.0, value_parser = positive)]
    pub rho: f64,
    /// Outer stopping tolerance of the selected solver.
    #[arg(long, global = true, value_parser = positive)]
    pub tol: Option<f64>,
    /// Outer iteration cap of the selected solver.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads [default: all cores for bench, 1 elsewhere].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Where a similarity or adjacency matrix comes from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct InputArgs {
    /// Whitespace-separated `u v [w]` lines, 0-based node ids.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Dense header-less CSV matrix.
    #[arg(long)]
    pub dense: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NodesArg {
    /// Node count for edge lists (default: one past the largest id).
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Builds the regularized two-hop kernel of an adjacency matrix.
    Kernel {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        nodes: NodesArg,
        /// Output CSV (stdout when omitted).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Solves at one λ and writes π.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        nodes: NodesArg,
        #[arg(long, value_parser = nonnegative)]
        lambda: f64,
        /// π as CSV.
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the diagnostics as JSON here.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Solves along a λ grid and writes one π per λ plus a manifest.
    Path {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        nodes: NodesArg,
        /// Comma-separated increasing λ values.
        #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
        lambdas: Option<Vec<f64>>,
        /// Log grid as `lo,hi,count` [default: 1e-3,40,40].
        #[arg(long, value_delimiter = ',', num_args = 1)]
        grid: Option<Vec<f64>>,
        /// Append a consensus-scale λ to the grid.
        #[arg(long)]
        sentinel: bool,
        /// Solve every λ independently from the identity across threads.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Runs the synthetic multi-seed benchmark table.
    Bench {
        /// Number of graphs, seeded `--seed`, `--seed + 1`, ...
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = FractalGraphSpec::default().n_meta)]
        n_meta: usize,
        #[arg(long, default_value_t = FractalGraphSpec::default().n_super)]
        n_super: usize,
        #[arg(long, default_value_t = FractalGraphSpec::default().n_leaf)]
        n_leaf: usize,
        #[arg(long, default_value_t = FractalGraphSpec::default().p_meta, value_parser = unit_interval)]
        p_meta: f64,
        /// Probability that two super nodes of one community are linked.
        #[arg(long, default_value_t = FractalGraphSpec::default().p_super, value_parser = unit_interval)]
        p_super: f64,
        #[arg(long, default_value_t = FractalGraphSpec::default().p_cross_super, value_parser = unit_interval)]
        p_cross_super: f64,
        #[arg(long, default_value_t = FractalGraphSpec::default().p_cross_meta, value_parser = unit_interval)]
        p_cross_meta: f64,
        /// Comma-separated λ values [default: 0.001,0.1,0.5,1,40].
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Table output (stdout when omitted).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Checks solver invariants on a kernel or a random one.
    Verify {
        #[command(flatten)]
        input: VerifyInput,
        #[command(flatten)]
        nodes: NodesArg,
    },
    /// Clusters π and scores the result against known labels.
    Metrics {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        nodes: NodesArg,
        #[arg(long)]
        pi: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Number of k-means clusters; fusion of near-identical columns when omitted.
        #[arg(long)]
        k: Option<usize>,
        /// Fusion threshold [default: 1e-3 / sqrt(N)].
        #[arg(long, value_parser = positive)]
        epsilon: Option<f64>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct VerifyInput {
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub dense: Option<PathBuf>,
    /// Random kernel on this many nodes.
    #[arg(long)]
    pub random: Option<usize>,
}

fn read_input(edges: &Option<PathBuf>, dense: &Option<PathBuf>, nodes: Option<usize>) -> Result<SimilarityKernel> {
    match (edges, dense) {
        (Some(p), None) => read_edge_list(p, nodes),
        (None, Some(p)) => read_kernel_csv(p),
        _ => Err(CliError::Invalid("exactly one of --edges and --dense is required".into())),
    }
}

/// Kernel for solving: the given matrix plus the ridge, checked for PSD.
fn load_kernel(g: &GlobalArgs, input: &InputArgs, nodes: &NodesArg) -> Result<(SimilarityKernel, f64)> {
    let k = read_input(&input.edges, &input.dense, nodes.nodes)?;
    if k.n() == 0 {
        return Err(CliError::Invalid("kernel is empty".into()));
    }
    let gamma = g.gamma.unwrap_or_else(|| k.default_gamma());
    let k = k.regularized(gamma);
    let eig = symmetric_eigenvalues(&k.to_dense())?;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = eig.iter().copied().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    if min < -1e-10 * scale {
        return Err(CliError::Invalid(format!("kernel is not positive semidefinite (smallest eigenvalue {min:e}); raise --gamma")));
    }
    Ok((k, gamma))
}

fn solver_choice(g: &GlobalArgs) -> SolverChoice {
    match g.solver {
        SolverKind::Fista => {
            let mut cfg = SolverConfig::with_lambda(0.0, g.alpha);
            if let Some(t) = g.tol {
                cfg.outer_tol = t;
            }
            if let Some(m) = g.max_iter {
                cfg.outer_max_iter = m;
            }
            SolverChoice::Fista(cfg)
        }
        SolverKind::Admm => {
            let mut cfg = AdmmConfig { rho: g.rho, ..AdmmConfig::default() };
            if let Some(t) = g.tol {
                cfg.tol = t;
            }
            if let Some(m) = g.max_iter {
                cfg.max_iter = m;
            }
            SolverChoice::Admm { alpha: g.alpha, cfg }
        }
        SolverKind::Linearized => {
            let mut cfg = LinearizedConfig::default();
            if let Some(t) = g.tol {
                cfg.outer_tol = t;
            }
            if let Some(m) = g.max_iter {
                cfg.outer_max_iter = m;
            }
            SolverChoice::Linearized(cfg)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn threads(g: &GlobalArgs, default: usize) -> Result<usize> {
    match g.threads {
        Some(0) => Err(CliError::Invalid("--threads must be at least 1".into())),
        Some(t) => Ok(t),
        None => Ok(default),
    }
}

#[derive(Debug, Serialize)]
struct SolveDiagnostics {
    solver: &'static str,
    n: usize,
    lambda: f64,
    alpha: f64,
    gamma: f64,
    primal_value: f64,
    duality_gap: f64,
    outer_iterations: usize,
    inner_iterations: usize,
    converged: bool,
    effective_rank: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    n: usize,
    k: usize,
    method: &'static str,
    effective_rank: Option<f64>,
    degenerate: bool,
    accuracy: Option<f64>,
    homogeneity: Option<f64>,
    completeness: Option<f64>,
    silhouette: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// Runs the parsed command; the caller maps errors to exit codes.
pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Kernel { input, nodes, out } => {
            let adj = read_input(&input.edges, &input.dense, nodes.nodes)?;
            let base = two_hop_kernel(&adj, 0.0)?;
            let gamma = g.gamma.unwrap_or_else(|| base.default_gamma());
            log::info!("two-hop kernel on {} nodes, gamma {gamma:e}", base.n());
            let dense = base.regularized(gamma).to_dense();
            match g.format {
                Format::Csv => emit(out.as_deref(), &crate::io::matrix_csv(&dense)),
                Format::Json => {
                    let rows: Vec<Vec<f64>> = (0..dense.rows()).map(|i| dense.row(i).to_vec()).collect();
                    emit(out.as_deref(), &json_line(&rows)?)
                }
            }
        }
        Command::Solve { input, nodes, lambda, out, diagnostics } => {
            let (k, gamma) = load_kernel(g, input, nodes)?;
            let choice = solver_choice(g);
            let r = choice.run(&k, *lambda, None)?;
            write_matrix_csv(out, &r.pi)?;
            let er = centroid_similarity(&r.pi, &k).and_then(|d| effective_rank(&d)).ok();
            let diag = SolveDiagnostics {
                solver: choice.id(),
                n: k.n(),
                lambda: *lambda,
                alpha: g.alpha,
                gamma,
                primal_value: r.primal_value,
                duality_gap: r.duality_gap,
                outer_iterations: r.outer_iterations,
                inner_iterations: r.inner_iterations,
                converged: r.converged,
                effective_rank: er,
            };
            if let Some(p) = diagnostics {
                write_json_atomic(p, &diag)?;
            }
            let text = match g.format {
                Format::Json => json_line(&diag)?,
                Format::Csv => format!(
                    "solver,n,lambda,alpha,primal_value,duality_gap,outer_iterations,inner_iterations,converged,effective_rank\n{},{},{},{},{},{},{},{},{},{}\n",
                    diag.solver,
                    diag.n,
                    format_float(diag.lambda),
                    format_float(diag.alpha),
                    format_float(diag.primal_value),
                    format_float(diag.duality_gap),
                    diag.outer_iterations,
                    diag.inner_iterations,
                    diag.converged,
                    opt(diag.effective_rank)
                ),
            };
            emit(None, &text)?;
            if !r.converged {
                return Err(CliError::Failed(format!("{} did not converge within its iteration budget", diag.solver)));
            }
            Ok(())
        }
        Command::Path { input, nodes, lambdas, grid, sentinel, parallel, out_dir } => {
            let (k, _) = load_kernel(g, input, nodes)?;
            let mut grid_values = match (lambdas, grid) {
                (Some(l), _) => l.clone(),
                (None, Some(spec)) => match spec.as_slice() {
                    &[lo, hi, count] if count >= 1.0 && count.fract() == 0.0 => log_grid(lo, hi, count as usize)?,
                    _ => return Err(CliError::Invalid("--grid expects lo,hi,count".into())),
                },
                (None, None) => default_grid(),
            };
            if *sentinel {
                grid_values = with_consensus_sentinel(&grid_values);
            }
            let choice = solver_choice(g);
            let path = if *parallel {
                run_path_parallel(&k, &grid_values, &choice, threads(g, std::thread::available_parallelism().map_or(1, |n| n.get()))?)?
            } else {
                run_path(&k, &grid_values, &choice)?
            };
            let manifest = write_path(out_dir, &path, k.n(), g.alpha)?;
            let text = match g.format {
                Format::Json => json_line(&manifest)?,
                Format::Csv => {
                    let mut s = String::from("lambda,effective_rank,primal_value,converged,failed\n");
                    for e in &manifest.entries {
                        s.push_str(&format!(
                            "{},{},{},{},{}\n",
                            format_float(e.lambda),
                            opt(e.effective_rank),
                            opt(e.primal_value),
                            e.converged,
                            e.failed
                        ));
                    }
                    s
                }
            };
            emit(None, &text)?;
            let failed = manifest.entries.iter().filter(|e| e.failed).count();
            if failed > 0 {
                return Err(CliError::Failed(format!("{failed} path entries failed; see the manifest")));
            }
            Ok(())
        }
        Command::Bench { seeds, n_meta, n_super, n_leaf, p_meta, p_super, p_cross_super, p_cross_meta, lambdas, out } => {
            if *seeds == 0 {
                return Err(CliError::Invalid("--seeds must be at least 1".into()));
            }
            let mut cfg = BenchmarkConfig {
                graph: FractalGraphSpec {
                    n_meta: *n_meta,
                    n_super: *n_super,
                    n_leaf: *n_leaf,
                    p_meta: *p_meta,
                    p_super: *p_super,
                    p_cross_super: *p_cross_super,
                    p_cross_meta: *p_cross_meta,
                    seed: g.seed,
                },
                ..BenchmarkConfig::default()
            };
            cfg.graph.validate()?;
            if let Some(l) = lambdas {
                cfg.lambdas = l.clone();
            }
            if g.solver != SolverKind::Fista || g.tol.is_some() || g.max_iter.is_some() {
                cfg.solver = solver_choice(g);
            } else {
                cfg.solver = graphcoalesce_core::synth::benchmark_solver(g.alpha);
            }
            let seed_list: Vec<u64> = (0..*seeds).map(|s| g.seed + s).collect();
            let workers = threads(g, std::thread::available_parallelism().map_or(1, |n| n.get()))?;
            let run = run_benchmark(&cfg, &seed_list, workers)?;
            let (kf, kc) = (n_meta * n_super, *n_meta);
            log::info!("benchmark finished in {:.1}s\n{}", run.wall_time, table_text(&run.table, kf, kc));
            let text = match g.format {
                Format::Csv => table_csv(&run.table, kf, kc),
                Format::Json => json_line(&table_records(&run.table, kf, kc))?,
            };
            emit(out.as_deref(), &text)
        }
        Command::Verify { input, nodes } => {
            let k = match input.random {
                Some(n) => random_kernel(n, g.seed)?,
                None => read_input(&input.edges, &input.dense, nodes.nodes)?,
            };
            let checks = run_battery(&k, g.seed)?;
            let text = match g.format {
                Format::Json => json_line(&checks)?,
                Format::Csv => checks
                    .iter()
                    .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
                    .collect(),
            };
            emit(None, &text)?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Failed(format!("failed properties: {}", failed.join(", "))))
            }
        }
        Command::Metrics { input, nodes, pi, labels, k, epsilon } => {
            let (kernel, _) = load_kernel(g, input, nodes)?;
            let pi = read_matrix_csv(pi)?;
            if pi.rows() != kernel.n() || pi.cols() != kernel.n() {
                return Err(CliError::Invalid(format!("pi is {}×{} but the kernel has {} nodes", pi.rows(), pi.cols(), kernel.n())));
            }
            let truth = labels.as_deref().map(read_labels).transpose()?;
            if let Some(t) = &truth {
                if t.len() != kernel.n() {
                    return Err(CliError::Invalid(format!("{} labels for {} nodes", t.len(), kernel.n())));
                }
            }
            let (assignment, method) = match k {
                Some(k) => (kmeans(&centroid_embedding(&pi, &kernel)?, *k, g.seed, 10)?, "kmeans"),
                None => (extract_clusters_by_fusion(&pi, epsilon.unwrap_or_else(|| default_fusion_epsilon(kernel.n())))?, "fusion"),
            };
            let quality = truth.as_deref().map(|t| cluster_scores(&assignment.labels, t, Some(&pi))).transpose()?;
            let report = MetricsReport {
                n: kernel.n(),
                k: assignment.k,
                method,
                effective_rank: centroid_similarity(&pi, &kernel).and_then(|d| effective_rank(&d)).ok(),
                degenerate: assignment.degenerate,
                accuracy: quality.map(|q| q.accuracy),
                homogeneity: quality.map(|q| q.homogeneity),
                completeness: quality.map(|q| q.completeness),
                silhouette: quality.and_then(|q| q.silhouette),
            };
            let text = match g.format {
                Format::Json => json_line(&report)?,
                Format::Csv => format!(
                    "n,k,method,effective_rank,degenerate,accuracy,homogeneity,completeness,silhouette\n{},{},{},{},{},{},{},{},{}\n",
                    report.n,
                    report.k,
                    report.method,
                    opt(report.effective_rank),
                    report.degenerate,
                    opt(report.accuracy),
                    opt(report.homogeneity),
                    opt(report.completeness),
                    opt(report.silhouette)
                ),
            };
            emit(None, &text)
        }
    }
}
