//! Report emission: versioned JSON documents, flat CSV tables and the run
//! manifest. Field order is fixed by the report structs, and floats print in
//! shortest-roundtrip form, so identical results produce byte-identical
//! files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::experiments::{
    AblationReport, OosReport, OptimizeReport, TuneReport, TurnoverReport,
};
use super::ExperimentConfig;

/// Output format selection for `emit_report`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Both,
}

/// Any experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Report {
    Ablation(AblationReport),
    Oos(OosReport),
    Turnover(TurnoverReport),
    Optimize(OptimizeReport),
    Tune(TuneReport),
}

impl Report {
    pub fn experiment_name(&self) -> &str {
        match self {
            Report::Ablation(r) => &r.experiment,
            Report::Oos(r) => &r.experiment,
            Report::Turnover(r) => &r.experiment,
            Report::Optimize(r) => &r.experiment,
            Report::Tune(r) => &r.experiment,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Flat CSV rows. Columns per experiment are documented in the README;
    /// nested structures (archives, extra comparisons) live in the JSON only.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Ablation(r) => {
                out.push_str("method,mean_variance,mean_sharpe,variance_reduction_pct,wilcoxon_stat_vs_euclidean,wilcoxon_p_vs_euclidean\n");
                for row in &r.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        row.method,
                        row.mean_variance,
                        row.mean_sharpe,
                        row.variance_reduction_pct,
                        opt(row.wilcoxon_stat_vs_euclidean),
                        opt(row.wilcoxon_p_vs_euclidean),
                    );
                }
            }
            Report::Oos(r) => {
                out.push_str("boundary,method,mean_insample_sharpe,mean_realized_sharpe,spearman_rho,wilcoxon_stat_vs_euclidean,wilcoxon_p_vs_euclidean\n");
                for split in &r.splits {
                    for row in &split.rows {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{},{},{}",
                            split.boundary,
                            row.method,
                            row.mean_insample_sharpe,
                            row.mean_realized_sharpe,
                            opt(row.spearman_rho),
                            opt(row.wilcoxon_stat_vs_euclidean),
                            opt(row.wilcoxon_p_vs_euclidean),
                        );
                    }
                }
            }
            Report::Turnover(r) => {
                out.push_str("method,mean_turnover,mean_cost_bps,gross_sharpe,net_sharpe\n");
                for row in &r.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        row.method, row.mean_turnover, row.mean_cost_bps, row.gross_sharpe, row.net_sharpe,
                    );
                }
            }
            Report::Optimize(r) => {
                out.push_str("method,rep,seed,best_sharpe,best_return,hypervolume,archive_size\n");
                for run in &r.runs {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        run.method,
                        run.rep,
                        run.seed,
                        run.best_sharpe,
                        run.best_return,
                        run.hypervolume,
                        run.archive_size,
                    );
                }
            }
            Report::Tune(r) => {
                out.push_str("lambda,gamma,mean_insample_sharpe\n");
                for cell in &r.cells {
                    let _ = writeln!(out, "{},{},{}", cell.lambda, cell.gamma, cell.mean_insample_sharpe);
                }
            }
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Everything needed to re-run an experiment bit-identically on the same
/// data: the resolved config, the input fingerprint and the pinned timestamp
/// label used in output filenames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub experiment: String,
    pub timestamp: String,
    pub data_fingerprint: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        experiment: &str,
        timestamp: &str,
        data_fingerprint: &str,
        config: ExperimentConfig,
    ) -> Self {
        Self {
            schema_version: 1,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: experiment.to_string(),
            timestamp: timestamp.to_string(),
            data_fingerprint: data_fingerprint.to_string(),
            config,
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Write `<out_dir>/<experiment>-<timestamp>.{json,csv}` per the requested
/// format. Returns the written paths.
pub fn emit_report(
    report: &Report,
    format: ReportFormat,
    out_dir: &Path,
    timestamp: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let stem = format!("{}-{}", report.experiment_name(), timestamp);
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let path = out_dir.join(format!("{stem}.json"));
        std::fs::write(&path, report.to_json()?)?;
        written.push(path);
    }
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        let path = out_dir.join(format!("{stem}.csv"));
        std::fs::write(&path, report.to_csv())?;
        written.push(path);
    }
    Ok(written)
}

/// UTC timestamp label for output filenames.
pub fn timestamp_now() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string()
}
