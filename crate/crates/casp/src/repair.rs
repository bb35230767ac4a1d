//! Repair operators mapping raw metaheuristic candidates onto the feasible
//! region. Every operator is two-stage: a selection rule picks the K active
//! assets from scores over the full universe, then a projection rule places
//! weights on the selected simplex. The seven named methods differ only in
//! which selection and projection they compose.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::projection::{
    project_simplex_box_with_iters, solve_box_simplex_qp, Candidate, ConstraintSet, Portfolio,
    QpReport,
};

/// Budget tolerance handed to the projection kernels.
pub const PROJECTION_TOL: f64 = 1e-10;

/// How stage 1 scores assets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionKind {
    /// |z_i|
    Abs,
    /// |z_i| / σ_i
    VolNorm,
    /// |z_i| / σ_i²
    MinVar,
    /// (μ_i − r_f) / σ_i, independent of the candidate
    Sharpe,
    /// |z_i|·(1 + λ·μ̃_i) / σ_i with μ̃ min-max normalized
    ReturnBoosted,
}

/// Stage-1 selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    pub kind: SelectionKind,
    /// Return-awareness λ ≥ 0; used by `ReturnBoosted` only.
    pub lambda: f64,
    /// Annual risk-free rate; used by `Sharpe` only.
    pub risk_free: f64,
}

/// How stage 2 places weights on the selected simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionKind {
    /// Euclidean projection via threshold bisection.
    Euclidean,
    /// Covariance-metric projection minimizing (w−z)ᵀΩ_S(w−z).
    OmegaMetric,
    /// Covariance-metric projection with a −γ·μ̃ᵀw return bias.
    ReturnRegularized,
}

/// Stage-2 projection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRule {
    pub kind: ProjectionKind,
    /// Return bias γ ≥ 0; used by `ReturnRegularized` only.
    pub gamma: f64,
}

/// Return-aware hyperparameters (λ, γ). Defaults follow the tuned values
/// λ = 1.2, γ = 0.35.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaParams {
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for RaParams {
    fn default() -> Self {
        Self { lambda: 1.2, gamma: 0.35 }
    }
}

/// The seven named repair methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodName {
    Euclidean,
    VolnormEuc,
    MinvarEuc,
    SharpeEuc,
    CaspBasic,
    CaspRetsel,
    RaCasp,
}

impl MethodName {
    pub const ALL: [MethodName; 7] = [
        MethodName::Euclidean,
        MethodName::VolnormEuc,
        MethodName::MinvarEuc,
        MethodName::SharpeEuc,
        MethodName::CaspBasic,
        MethodName::CaspRetsel,
        MethodName::RaCasp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Euclidean => "euclidean",
            MethodName::VolnormEuc => "volnorm-euc",
            MethodName::MinvarEuc => "minvar-euc",
            MethodName::SharpeEuc => "sharpe-euc",
            MethodName::CaspBasic => "casp-basic",
            MethodName::CaspRetsel => "casp-retsel",
            MethodName::RaCasp => "ra-casp",
        }
    }
}

impl std::fmt::Display for MethodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MethodName::Euclidean),
            "volnorm-euc" => Ok(MethodName::VolnormEuc),
            "minvar-euc" => Ok(MethodName::MinvarEuc),
            "sharpe-euc" => Ok(MethodName::SharpeEuc),
            "casp-basic" => Ok(MethodName::CaspBasic),
            "casp-retsel" => Ok(MethodName::CaspRetsel),
            "ra-casp" => Ok(MethodName::RaCasp),
            other => Err(Error::Config(format!(
                "unknown method `{other}`; expected one of euclidean, volnorm-euc, minvar-euc, sharpe-euc, casp-basic, casp-retsel, ra-casp"
            ))),
        }
    }
}

impl TryFrom<String> for MethodName {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodName> for String {
    fn from(m: MethodName) -> String {
        m.as_str().to_string()
    }
}

/// A named method bound to its selection and projection rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairMethod {
    pub name: MethodName,
    pub selection: SelectionRule,
    pub projection: ProjectionRule,
}

impl RepairMethod {
    /// Bind a named preset. `ra` supplies (λ, γ) for the return-aware
    /// variants; `risk_free` feeds the Sharpe selection rule.
    pub fn preset(name: MethodName, ra: RaParams, risk_free: f64) -> Self {
        let sel = |kind, lambda| SelectionRule { kind, lambda, risk_free };
        let proj = |kind, gamma| ProjectionRule { kind, gamma };
        let (selection, projection) = match name {
            MethodName::Euclidean => (sel(SelectionKind::Abs, 0.0), proj(ProjectionKind::Euclidean, 0.0)),
            MethodName::VolnormEuc => (sel(SelectionKind::VolNorm, 0.0), proj(ProjectionKind::Euclidean, 0.0)),
            MethodName::MinvarEuc => (sel(SelectionKind::MinVar, 0.0), proj(ProjectionKind::Euclidean, 0.0)),
            MethodName::SharpeEuc => (sel(SelectionKind::Sharpe, 0.0), proj(ProjectionKind::Euclidean, 0.0)),
            MethodName::CaspBasic => (sel(SelectionKind::VolNorm, 0.0), proj(ProjectionKind::OmegaMetric, 0.0)),
            MethodName::CaspRetsel => (
                sel(SelectionKind::ReturnBoosted, ra.lambda),
                proj(ProjectionKind::OmegaMetric, 0.0),
            ),
            MethodName::RaCasp => (
                sel(SelectionKind::ReturnBoosted, ra.lambda),
                proj(ProjectionKind::ReturnRegularized, ra.gamma),
            ),
        };
        Self { name, selection, projection }
    }
}

/// Min-max normalization of expected returns to [0, 1]. When all entries are
/// equal the normalization is undefined; every asset then gets 0.5, which
/// turns the return boost into a uniform factor.
pub fn normalize_mu(mu: &[f64]) -> Vec<f64> {
    let lo = mu.iter().cloned().fold(f64::MAX, f64::min);
    let hi = mu.iter().cloned().fold(f64::MIN, f64::max);
    let range = hi - lo;
    if range <= 0.0 || !range.is_finite() {
        return vec![0.5; mu.len()];
    }
    mu.iter().map(|&m| (m - lo) / range).collect()
}

/// Stage-1 scores for every asset in the universe.
pub fn selection_scores(z: &Candidate, model: &MarketModel, rule: &SelectionRule) -> Result<Vec<f64>> {
    let n = model.n_assets();
    if z.len() != n {
        return Err(Error::InvalidArgument(format!(
            "candidate has {} entries, universe has {n}",
            z.len()
        )));
    }
    let sigma: Vec<f64> = (0..n).map(|i| model.omega[[i, i]].sqrt()).collect();
    let scores = match rule.kind {
        SelectionKind::Abs => z.z.iter().map(|v| v.abs()).collect(),
        SelectionKind::VolNorm => z.z.iter().zip(&sigma).map(|(v, s)| v.abs() / s).collect(),
        SelectionKind::MinVar => (0..n).map(|i| z.z[i].abs() / model.omega[[i, i]]).collect(),
        SelectionKind::Sharpe => (0..n)
            .map(|i| (model.mu[i] - rule.risk_free) / sigma[i])
            .collect(),
        SelectionKind::ReturnBoosted => {
            let mu_tilde = normalize_mu(model.mu.as_slice().expect("contiguous"));
            (0..n)
                .map(|i| z.z[i].abs() * (1.0 + rule.lambda * mu_tilde[i]) / sigma[i])
                .collect()
        }
    };
    Ok(scores)
}

/// Indices of the k highest scores, ties broken by lower index, sorted
/// ascending.
pub fn select_top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "k={k} exceeds universe size {}",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut top: Vec<usize> = idx.into_iter().take(k).collect();
    top.sort_unstable();
    Ok(top)
}

/// Repair one candidate: select the active set, then project onto its
/// simplex under the method's metric. Inactive assets get weight zero.
pub fn repair(
    z: &Candidate,
    model: &MarketModel,
    constraints: &ConstraintSet,
    method: &RepairMethod,
) -> Result<(Portfolio, QpReport)> {
    let n = model.n_assets();
    if z.len() != n {
        return Err(Error::InvalidArgument(format!(
            "candidate has {} entries, universe has {n}",
            z.len()
        )));
    }
    let c = ConstraintSet::new(constraints.k, constraints.lower, constraints.upper)?;
    if c.k > n {
        return Err(Error::InvalidArgument(format!(
            "cardinality k={} exceeds universe size {n}",
            c.k
        )));
    }

    let scores = selection_scores(z, model, &method.selection)?;
    let degenerate = scores.iter().all(|&s| s == 0.0);
    let active = if degenerate {
        (0..c.k).collect::<Vec<usize>>()
    } else {
        select_top_k(&scores, c.k)?
    };

    let z_s: Vec<f64> = active.iter().map(|&i| z.z[i]).collect();
    let (weights, mut report) = match method.projection.kind {
        ProjectionKind::Euclidean => {
            let (w, iters) = project_simplex_box_with_iters(&z_s, c.lower, c.upper, PROJECTION_TOL)?;
            let obj = 0.5
                * w.iter()
                    .zip(&z_s)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            let sum: f64 = w.iter().sum();
            let report = QpReport {
                objective_value: obj,
                iterations: iters,
                regularized: false,
                kkt_residual: (sum - 1.0).abs(),
                degenerate_selection: false,
            };
            (w, report)
        }
        ProjectionKind::OmegaMetric => {
            let omega_s = model.omega_sub(&active);
            solve_box_simplex_qp(&omega_s, &z_s, None, c.lower, c.upper, PROJECTION_TOL)?
        }
        ProjectionKind::ReturnRegularized => {
            let omega_s = model.omega_sub(&active);
            let mu_tilde = normalize_mu(model.mu.as_slice().expect("contiguous"));
            let lin: Vec<f64> = active
                .iter()
                .map(|&i| -method.projection.gamma * mu_tilde[i])
                .collect();
            solve_box_simplex_qp(&omega_s, &z_s, Some(&lin), c.lower, c.upper, PROJECTION_TOL)?
        }
    };
    report.degenerate_selection = degenerate;

    Ok((Portfolio::new(active, weights)?, report))
}

/// Elementwise [`repair`] over a batch, order preserved, errors collected per
/// element. Runs data-parallel; results are identical to a sequential loop.
pub fn repair_batch(
    zs: &[Candidate],
    model: &MarketModel,
    constraints: &ConstraintSet,
    method: &RepairMethod,
) -> Vec<Result<(Portfolio, QpReport)>> {
    zs.par_iter()
        .map(|z| repair(z, model, constraints, method))
        .collect()
}
