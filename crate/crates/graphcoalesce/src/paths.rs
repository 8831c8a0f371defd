//! Path driver with timing, a cold-start parallel mode, and the on-disk
//! manifest.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use graphcoalesce_core::path::{compute_path_timed, PathEntry, RegularizationPath, SolverChoice};
use graphcoalesce_core::SimilarityKernel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{write_json_atomic, write_matrix_csv};

/// Sequential path with warm starts, timed by a monotonic clock.
pub fn run_path(kernel: &SimilarityKernel, lambdas: &[f64], solver: &SolverChoice) -> Result<RegularizationPath> {
    let start = Instant::now();
    Ok(compute_path_timed(kernel, lambdas, solver, || start.elapsed().as_secs_f64())?)
}

/// Every `λ` solved from the identity, spread over `threads` workers. Results
/// do not depend on the thread count.
pub fn run_path_parallel(
    kernel: &SimilarityKernel,
    lambdas: &[f64],
    solver: &SolverChoice,
    threads: usize,
) -> Result<RegularizationPath> {
    if lambdas.windows(2).any(|w| w[1] <= w[0]) || lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(CliError::Invalid("lambdas must be finite, nonnegative and strictly increasing".into()));
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<PathEntry>>> = Mutex::new(vec![None; lambdas.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(lambdas.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&lambda) = lambdas.get(i) else { break };
                let start = Instant::now();
                let one = compute_path_timed(kernel, &[lambda], solver, || start.elapsed().as_secs_f64())
                    .expect("single validated lambda");
                let entry = one.entries.into_iter().next().expect("one entry");
                slots.lock().expect("no poisoned workers")[i] = Some(entry);
            });
        }
    });
    let entries = slots.into_inner().expect("no poisoned workers").into_iter().map(|e| e.expect("filled")).collect();
    Ok(RegularizationPath { entries, kernel_fingerprint: kernel.fingerprint(), solver_id: solver.id() })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub lambda: f64,
    pub primal_value: Option<f64>,
    pub duality_gap: Option<f64>,
    pub effective_rank: Option<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// File name of π, relative to the manifest.
    pub pi_file: Option<String>,
    pub failed: bool,
    pub error: Option<String>,
}

/// Deterministic description of a computed path; timings are excluded so a
/// rerun reproduces it byte for byte.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub solver: String,
    pub kernel_fingerprint: String,
    pub n: usize,
    pub alpha: f64,
    pub entries: Vec<ManifestEntry>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Writes `pi_XXXX.csv` per successful entry, then `manifest.json` last.
pub fn write_path(dir: &Path, path: &RegularizationPath, n: usize, alpha: f64) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut entries = Vec::with_capacity(path.entries.len());
    for (i, e) in path.entries.iter().enumerate() {
        let pi_file = if e.failed() {
            None
        } else {
            let name = format!("pi_{i:04}.csv");
            write_matrix_csv(&dir.join(&name), &e.pi)?;
            Some(name)
        };
        entries.push(ManifestEntry {
            lambda: e.lambda,
            primal_value: finite(e.primal_value),
            duality_gap: finite(e.duality_gap),
            effective_rank: finite(e.effective_rank),
            converged: e.converged,
            outer_iterations: e.outer_iterations,
            inner_iterations: e.inner_iterations,
            pi_file,
            failed: e.failed(),
            error: e.error.as_ref().map(|err| err.to_string()),
        });
    }
    let manifest = Manifest {
        solver: path.solver_id.to_string(),
        kernel_fingerprint: format!("{:016x}", path.kernel_fingerprint),
        n,
        alpha,
        entries,
    };
    write_json_atomic(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
