//! Portfolio metrics (Sharpe, tracking error, turnover, transaction costs),
//! Pareto-front quality (exact 3-D hypervolume) and nonparametric statistics
//! (Wilcoxon signed-rank, Spearman rank correlation).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market::{MarketModel, ReturnPanel};
use crate::mogwo::Objectives;
use crate::projection::Portfolio;

/// Per-portfolio performance summary used in harness reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfStats {
    /// Annualized portfolio variance wᵀΩw.
    pub variance: f64,
    /// In-sample Sharpe (μᵀw − r_f)/√(wᵀΩw).
    pub sharpe: f64,
    /// Sharpe computed from a held-out return panel, when available.
    pub realized_sharpe: Option<f64>,
    /// One-way turnover Σ|Δw|/2 against a previous portfolio, when available.
    pub turnover: Option<f64>,
    /// Turnover × cost rate, in basis points.
    pub cost_bps: Option<f64>,
}

impl PerfStats {
    /// Gather the summary for one portfolio. `held_out` adds the realized
    /// Sharpe; `previous` adds turnover and cost at `cost_rate_bps`.
    pub fn collect(
        p: &Portfolio,
        model: &MarketModel,
        r_f: f64,
        annualization: f64,
        held_out: Option<&ReturnPanel>,
        previous: Option<&Portfolio>,
        cost_rate_bps: f64,
    ) -> Result<Self> {
        let w = p.to_dense(model.n_assets());
        let variance = linalg::quad_form(&model.omega, &w);
        let sharpe = sharpe_insample(p, model, r_f)?;
        let realized_sharpe = match held_out {
            Some(panel) => Some(sharpe_realized(p, panel, r_f, annualization)?),
            None => None,
        };
        let (turnover, cost_bps) = match previous {
            Some(prev) => {
                let w_old = prev.to_dense(model.n_assets());
                let (t, c) = turnover_cost(&w_old, &w, cost_rate_bps)?;
                (Some(t), Some(c))
            }
            None => (None, None),
        };
        Ok(Self { variance, sharpe, realized_sharpe, turnover, cost_bps })
    }
}

/// Result of a two-sided nonparametric test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Signed-rank sum W⁺ − W⁻.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n_effective: usize,
}

/// In-sample Sharpe ratio (μᵀw − r_f)/√(wᵀΩw) on the dense embedding of `p`.
pub fn sharpe_insample(p: &Portfolio, model: &MarketModel, r_f: f64) -> Result<f64> {
    let w = p.to_dense(model.n_assets());
    let variance = linalg::quad_form(&model.omega, &w);
    if variance <= 0.0 {
        return Err(Error::UndefinedMetric("zero portfolio variance".into()));
    }
    let ret: f64 = w.iter().zip(model.mu.iter()).map(|(wi, mi)| wi * mi).sum();
    Ok((ret - r_f) / variance.sqrt())
}

/// Realized Sharpe from a held-out panel: annualized mean of daily portfolio
/// log returns minus r_f, over the annualized standard deviation. Mean and
/// variance use the same estimators as the model fit (ddof = 1), so a
/// single-asset portfolio evaluated on its own training panel reproduces the
/// in-sample value.
pub fn sharpe_realized(
    p: &Portfolio,
    panel: &ReturnPanel,
    r_f: f64,
    annualization: f64,
) -> Result<f64> {
    let t = panel.n_obs();
    if t < 2 {
        return Err(Error::InsufficientData(
            "realized Sharpe needs at least 2 observations".into(),
        ));
    }
    let n = panel.asset_ids.len();
    let w = p.to_dense(n);
    let series: Vec<f64> = (0..t)
        .map(|row| (0..n).map(|j| w[j] * panel.returns[[row, j]]).sum())
        .collect();
    let mean: f64 = series.iter().sum::<f64>() / t as f64;
    let var: f64 =
        series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t as f64 - 1.0);
    if var <= 0.0 {
        return Err(Error::UndefinedMetric("zero realized variance".into()));
    }
    Ok((annualization * mean - r_f) / (annualization * var).sqrt())
}

/// Squared tracking error (w1 − w2)ᵀΩ(w1 − w2): the variance of the return
/// difference between the two portfolios under covariance Ω.
pub fn tracking_error_sq(w1: &[f64], w2: &[f64], omega: &ndarray::Array2<f64>) -> Result<f64> {
    if w1.len() != w2.len() || omega.nrows() != w1.len() {
        return Err(Error::InvalidArgument("tracking error dimension mismatch".into()));
    }
    let diff: Vec<f64> = w1.iter().zip(w2).map(|(a, b)| a - b).collect();
    Ok(linalg::quad_form(omega, &diff))
}

/// One-way turnover Σ|Δw|/2 over the union of active sets, plus its cost at
/// `cost_rate_bps` basis points per unit of turnover.
pub fn turnover_cost(w_old: &[f64], w_new: &[f64], cost_rate_bps: f64) -> Result<(f64, f64)> {
    if w_old.len() != w_new.len() {
        return Err(Error::InvalidArgument("turnover dimension mismatch".into()));
    }
    let turnover: f64 = w_old
        .iter()
        .zip(w_new)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0;
    Ok((turnover, turnover * cost_rate_bps))
}

/// Exact hypervolume result plus the number of points that failed to
/// dominate the reference and were excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypervolume {
    pub value: f64,
    pub excluded: usize,
}

/// Exact 3-D hypervolume of `front` against `reference`, with the
/// tri-objective orientation (min variance, max return, max ESG) mapped to
/// minimization. Points that do not strictly dominate the reference are
/// excluded and counted. Computed by a dimension sweep: sort on one
/// coordinate and integrate 2-D union areas slab by slab.
pub fn hypervolume(front: &[Objectives], reference: &Objectives) -> Hypervolume {
    let mapped: Vec<[f64; 3]> = front.iter().map(to_min_space).collect();
    let r = to_min_space(reference);

    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(mapped.len());
    let mut excluded = 0usize;
    for p in mapped {
        if p[0] < r[0] && p[1] < r[1] && p[2] < r[2] {
            pts.push(p);
        } else {
            excluded += 1;
        }
    }
    if pts.is_empty() {
        return Hypervolume { value: 0.0, excluded };
    }

    // Sweep along the third coordinate.
    pts.sort_by(|a, b| a[2].partial_cmp(&b[2]).unwrap());
    let mut value = 0.0;
    let mut active: Vec<[f64; 2]> = Vec::new();
    let mut i = 0;
    while i < pts.len() {
        let z = pts[i][2];
        while i < pts.len() && pts[i][2] == z {
            active.push([pts[i][0], pts[i][1]]);
            i += 1;
        }
        let next_z = if i < pts.len() { pts[i][2] } else { r[2] };
        value += union_area_2d(&active, r[0], r[1]) * (next_z - z);
    }
    Hypervolume { value, excluded }
}

fn to_min_space(o: &Objectives) -> [f64; 3] {
    [o.variance, -o.ret, -o.esg]
}

/// Area of the union of rectangles [x_i, rx] × [y_i, ry] for minimization
/// points strictly inside the reference.
fn union_area_2d(points: &[[f64; 2]], rx: f64, ry: f64) -> f64 {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    // Keep the 2-D non-dominated staircase: y strictly decreasing as x grows.
    let mut stair: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for p in pts {
        if stair.last().is_none_or(|l| p[1] < l[1]) {
            stair.push(p);
        }
    }
    let mut area = 0.0;
    let mut prev_y = ry;
    for p in &stair {
        area += (rx - p[0]) * (prev_y - p[1]);
        prev_y = p[1];
    }
    area
}

/// Wilcoxon regime switch: exact distribution at or below this effective n,
/// normal approximation above.
pub const WILCOXON_EXACT_LIMIT: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped, ties mid-ranked. Exact sign-enumeration distribution for
/// n ≤ 25, normal approximation with continuity and tie corrections above.
pub fn wilcoxon_signed_rank(paired_a: &[f64], paired_b: &[f64]) -> Result<TestResult> {
    if paired_a.len() != paired_b.len() {
        return Err(Error::InvalidArgument("paired samples differ in length".into()));
    }
    let diffs: Vec<f64> = paired_a
        .iter()
        .zip(paired_b)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "Wilcoxon needs at least 5 nonzero differences, got {n}"
        )));
    }

    let ranks = midranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<f64>>());
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = n as f64 * (n as f64 + 1.0) / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus - w_minus;

    let p_value = if n <= WILCOXON_EXACT_LIMIT {
        wilcoxon_exact_p(&ranks, w_plus)
    } else {
        wilcoxon_normal_p(&ranks, w_plus)
    };

    Ok(TestResult { statistic, p_value, n_effective: n })
}

/// Exact two-sided p-value by dynamic programming over all 2ⁿ sign
/// assignments. Mid-ranks are doubled so every achievable rank sum is an
/// integer.
fn wilcoxon_exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let mut counts = vec![0u64; max_sum + 1];
    counts[0] = 1;
    for &d in &doubled {
        for s in (d..=max_sum).rev() {
            counts[s] += counts[s - d];
        }
    }
    let total: f64 = (1u64 << n) as f64;
    let w2 = (2.0 * w_plus).round() as usize;
    let below: u64 = counts[..=w2.min(max_sum)].iter().sum();
    let above: u64 = counts[w2.min(max_sum)..].iter().sum();
    let p = 2.0 * (below.min(above) as f64 / total);
    p.min(1.0)
}

/// Normal approximation with continuity correction and tie correction.
fn wilcoxon_normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    // Tie correction: subtract Σ(t³ − t)/48 over groups of tied ranks.
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let delta = w_plus - mean;
    let z = (delta - 0.5 * delta.signum()) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0)
}

/// Mid-ranks (1-based) with ties sharing their average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of mid-ranked values.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("samples differ in length".into()));
    }
    if a.len() < 3 {
        return Err(Error::InsufficientData("Spearman needs at least 3 pairs".into()));
    }
    let ra = midranks(a);
    let rb = midranks(b);
    pearson(&ra, &rb)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::UndefinedMetric("constant input has no rank correlation".into()));
    }
    Ok(cov / (va * vb).sqrt())
}
