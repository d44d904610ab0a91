//! Tabular text output. Every number is printed with `{}` so the decimal
//! form round-trips exactly and downstream diffing is byte-stable.

use std::fmt::Write;

use crate::analysis::{ConcentrationReport, VarianceReport};
use crate::engine::{GramResult, GraphEmbedding};
use crate::tape::GDistribution;

/// One row per graph: id then the embedding coordinates. The header carries
/// the provenance digest all rows share.
pub fn embeddings_table(embeddings: &[GraphEmbedding]) -> String {
    let mut out = String::new();
    if let Some(first) = embeddings.first() {
        let _ = writeln!(out, "# provenance={:016x}", first.provenance.digest());
        let dims: Vec<String> = (0..first.phi.len()).map(|k| format!("phi_{k}")).collect();
        let _ = writeln!(out, "graph_id\t{}", dims.join("\t"));
    }
    for e in embeddings {
        let cols: Vec<String> = e.phi.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}\t{}", e.graph_index, cols.join("\t"));
    }
    out
}

/// Square matrix with graph ids on both the header row and the first column.
pub fn gram_table(ids: &[String], gram: &[Vec<f64>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "graph_id\t{}", ids.join("\t"));
    for (id, row) in ids.iter().zip(gram) {
        let cols: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}\t{}", id, cols.join("\t"));
    }
    out
}

pub fn gram_result_table(ids: &[String], result: &GramResult) -> String {
    gram_table(ids, &result.gram)
}

pub struct MseRow {
    pub walks_per_vertex: usize,
    pub mse: f64,
    /// `None` marks the degenerate single-trial case.
    pub standard_error: Option<f64>,
    pub trials: usize,
}

pub fn mse_table(rows: &[MseRow]) -> String {
    let mut out = String::from("walks\tmse\tstandard_error\ttrials\n");
    for row in rows {
        let se = match row.standard_error {
            Some(se) => se.to_string(),
            None => "-".to_string(),
        };
        let _ = writeln!(out, "{}\t{}\t{}\t{}", row.walks_per_vertex, row.mse, se, row.trials);
    }
    out
}

fn distribution_name(d: GDistribution) -> &'static str {
    match d {
        GDistribution::Rademacher => "rademacher",
        GDistribution::Gaussian => "gaussian",
    }
}

pub fn variance_table(reports: &[VarianceReport]) -> String {
    let mut out = String::from("distribution\tsample_mean\tsample_variance\ttrials\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            distribution_name(r.distribution),
            r.sample_mean,
            r.sample_variance,
            r.trials
        );
    }
    out
}

pub fn concentration_table(report: &ConcentrationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# c1={} c2={} k={}", report.c1, report.c2, report.k_const);
    let _ = writeln!(
        out,
        "# trials={} center={} center_se={}",
        report.trials, report.center, report.center_se
    );
    out.push_str("epsilon\tbound\tempirical_tail\n");
    for ((eps, bound), tail) in report
        .epsilons
        .iter()
        .zip(&report.bound)
        .zip(&report.empirical_tail)
    {
        let _ = writeln!(out, "{eps}\t{bound}\t{tail}");
    }
    out
}

/// Benchmark cell: a time, or the reason the method was cut off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BenchOutcome {
    Seconds(f64),
    OutOfMemoryGuard,
    OutOfRuntime,
}

impl BenchOutcome {
    fn cell(&self) -> String {
        match self {
            BenchOutcome::Seconds(s) => s.to_string(),
            BenchOutcome::OutOfMemoryGuard => "OOM".to_string(),
            BenchOutcome::OutOfRuntime => "ORT".to_string(),
        }
    }
}

pub struct BenchRow {
    pub n: usize,
    pub method: String,
    pub outcome: BenchOutcome,
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut out = String::from("n\tmethod\tseconds\n");
    for row in rows {
        let _ = writeln!(out, "{}\t{}\t{}", row.n, row.method, row.outcome.cell());
    }
    out
}
