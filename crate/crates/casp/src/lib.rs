//! Covariance-aware repair operators for cardinality-constrained portfolio
//! optimization.
//!
//! The crate provides:
//! * projection kernels onto the box-constrained simplex — Euclidean (by
//!   threshold bisection) and covariance-metric (by an active-set QP);
//! * seven repair methods composing a selection rule with a projection rule;
//! * a multi-objective grey wolf optimizer maintaining a Pareto archive over
//!   (variance, return, ESG);
//! * market-data ingestion, shrinkage covariance estimation and synthetic
//!   market generation;
//! * evaluation metrics (Sharpe, tracking error, turnover, hypervolume) and
//!   nonparametric tests (Wilcoxon signed-rank, Spearman);
//! * an experiment harness behind the `casp` CLI.

pub mod error;
pub mod evaluation;
pub mod harness;
pub mod linalg;
pub mod market;
pub mod mogwo;
pub mod projection;
pub mod repair;

pub use error::{Error, Result};
pub use market::{EsgInputs, MarketModel, PriceHistory, ReturnPanel, TemporalSplit};
pub use mogwo::{MogwoConfig, Objectives, ParetoArchive, RunLog, Wolf};
pub use projection::{
    is_feasible, project_omega, project_simplex_box, Candidate, ConstraintSet, Feasibility,
    Portfolio, QpReport,
};
pub use repair::{
    repair, repair_batch, select_top_k, selection_scores, MethodName, ProjectionKind,
    ProjectionRule, RaParams, RepairMethod, SelectionKind, SelectionRule,
};
