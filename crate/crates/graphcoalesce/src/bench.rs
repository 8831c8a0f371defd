//! Multi-seed benchmark on synthetic graphs and its table output.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use graphcoalesce_core::synth::{evaluate_seed, summarize, BenchmarkConfig, SeedReport, Summary, TableRow};
use serde::Serialize;

use crate::error::Result;
use crate::io::format_float;

#[derive(Debug)]
pub struct BenchmarkRun {
    /// In seed order.
    pub reports: Vec<SeedReport>,
    pub table: Vec<TableRow>,
    pub wall_time: f64,
}

/// Evaluates every seed, `threads` at a time, and aggregates per `λ`.
pub fn run_benchmark(cfg: &BenchmarkConfig, seeds: &[u64], threads: usize) -> Result<BenchmarkRun> {
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<graphcoalesce_core::Result<SeedReport>>>> = Mutex::new(seeds.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(seeds.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let t0 = Instant::now();
                let report = evaluate_seed(cfg, seed, || t0.elapsed().as_secs_f64());
                log::info!("seed {seed} finished in {:.1}s", t0.elapsed().as_secs_f64());
                slots.lock().expect("no poisoned workers")[i] = Some(report);
            });
        }
    });
    let reports = slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("filled"))
        .collect::<graphcoalesce_core::Result<Vec<_>>>()?;
    let table = summarize(&reports)?;
    Ok(BenchmarkRun { reports, table, wall_time: start.elapsed().as_secs_f64() })
}

/// Flat record of one table row; `fine`/`coarse` columns carry the cluster
/// counts in their names in the CSV output.
#[derive(Clone, Debug, Serialize)]
pub struct TableRecord {
    pub lambda: f64,
    pub seeds: usize,
    pub er: f64,
    pub er_std: f64,
    pub k_fine: usize,
    pub acc_fine: f64,
    pub acc_fine_std: f64,
    pub completeness_fine: f64,
    pub homogeneity_fine: f64,
    pub silhouette_fine: f64,
    pub k_coarse: usize,
    pub acc_coarse: f64,
    pub acc_coarse_std: f64,
    pub completeness_coarse: f64,
    pub homogeneity_coarse: f64,
    pub silhouette_coarse: f64,
}

pub fn table_records(table: &[TableRow], k_fine: usize, k_coarse: usize) -> Vec<TableRecord> {
    table
        .iter()
        .map(|r| TableRecord {
            lambda: r.lambda,
            seeds: r.seeds,
            er: r.effective_rank.mean,
            er_std: r.effective_rank.std,
            k_fine,
            acc_fine: r.fine_accuracy.mean,
            acc_fine_std: r.fine_accuracy.std,
            completeness_fine: r.fine_completeness.mean,
            homogeneity_fine: r.fine_homogeneity.mean,
            silhouette_fine: r.fine_silhouette.mean,
            k_coarse,
            acc_coarse: r.coarse_accuracy.mean,
            acc_coarse_std: r.coarse_accuracy.std,
            completeness_coarse: r.coarse_completeness.mean,
            homogeneity_coarse: r.coarse_homogeneity.mean,
            silhouette_coarse: r.coarse_silhouette.mean,
        })
        .collect()
}

/// Table CSV: `lambda, er, er_std`, then per cluster count `k` the columns
/// `acc_k, acc_k_std, completeness_k, homogeneity_k, silhouette_k`.
pub fn table_csv(table: &[TableRow], k_fine: usize, k_coarse: usize) -> String {
    let mut header = vec!["lambda".to_string(), "er".into(), "er_std".into()];
    for k in [k_fine, k_coarse] {
        for col in ["acc", "acc_std", "completeness", "homogeneity", "silhouette"] {
            header.push(match col.strip_suffix("_std") {
                Some(base) => format!("{base}_{k}_std"),
                None => format!("{col}_{k}"),
            });
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in table {
        let block = |acc: Summary, comp: Summary, hom: Summary, sil: Summary| {
            [acc.mean, acc.std, comp.mean, hom.mean, sil.mean].map(format_float).join(",")
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_float(r.lambda),
            format_float(r.effective_rank.mean),
            format_float(r.effective_rank.std),
            block(r.fine_accuracy, r.fine_completeness, r.fine_homogeneity, r.fine_silhouette),
            block(r.coarse_accuracy, r.coarse_completeness, r.coarse_homogeneity, r.coarse_silhouette),
        ));
    }
    out
}

/// Human-readable `mean ± std` rendering in the published layout.
pub fn table_text(table: &[TableRow], k_fine: usize, k_coarse: usize) -> String {
    let mut out = format!(
        "{:>8}  {:>14}  {:>14}  {:>14}  {:>8}  {:>8}\n",
        "lambda",
        "eff. rank",
        format!("acc ({k_fine})"),
        format!("acc ({k_coarse})"),
        format!("comp {k_fine}"),
        format!("sil {k_fine}")
    );
    for r in table {
        out.push_str(&format!(
            "{:>8}  {:>6.2} ± {:<5.2}  {:>6.3} ± {:<5.3}  {:>6.3} ± {:<5.3}  {:>8.3}  {:>8.3}\n",
            r.lambda,
            r.effective_rank.mean,
            r.effective_rank.std,
            r.fine_accuracy.mean,
            r.fine_accuracy.std,
            r.coarse_accuracy.mean,
            r.coarse_accuracy.std,
            r.fine_completeness.mean,
            r.fine_silhouette.mean,
        ));
    }
    out
}
