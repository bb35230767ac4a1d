//! The four studies plus the (λ, γ) grid-search utility. Each `run_*`
//! function is a pure function of its configuration: identical configs
//! produce identical reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    self, hypervolume, sharpe_insample, sharpe_realized, turnover_cost, wilcoxon_signed_rank,
};
use crate::market::{self, MarketModel};
use crate::mogwo::{self, ArchiveMember, MogwoConfig, Objectives};
use crate::projection::{Candidate, ConstraintSet};
use crate::repair::{repair_batch, MethodName, RaParams, RepairMethod};

use super::{child_seed, draw_candidates, prepare_market, ExperimentConfig};

const SCHEMA_VERSION: u32 = 1;

/// A paired two-sided Wilcoxon comparison between two methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub method_a: MethodName,
    pub method_b: MethodName,
    pub metric: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub n_effective: usize,
}

fn compare_paired(
    method_a: MethodName,
    method_b: MethodName,
    metric: &str,
    a: &[f64],
    b: &[f64],
) -> Result<PairedComparison> {
    match wilcoxon_signed_rank(a, b) {
        Ok(t) => Ok(PairedComparison {
            method_a,
            method_b,
            metric: metric.to_string(),
            statistic: Some(t.statistic),
            p_value: Some(t.p_value),
            n_effective: t.n_effective,
        }),
        // All-zero differences: the comparison is degenerate, not fatal.
        Err(Error::InsufficientData(_)) => Ok(PairedComparison {
            method_a,
            method_b,
            metric: metric.to_string(),
            statistic: None,
            p_value: None,
            n_effective: 0,
        }),
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: MethodName,
    pub mean_variance: f64,
    pub mean_sharpe: f64,
    /// Percent variance reduction relative to the `euclidean` baseline.
    pub variance_reduction_pct: f64,
    pub wilcoxon_stat_vs_euclidean: Option<f64>,
    pub wilcoxon_p_vs_euclidean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub n_candidates: usize,
    pub n_assets: usize,
    pub constraints: ConstraintSet,
    pub data_fingerprint: String,
    pub rows: Vec<AblationRow>,
    /// Additional pairwise tests beyond the baseline columns
    /// (covariance-metric projection vs its selection-matched baseline).
    pub extra_comparisons: Vec<PairedComparison>,
}

/// Repair `n_candidates` random candidates with every method and compare
/// portfolio variance and in-sample Sharpe against the Euclidean baseline.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let prepared = prepare_market(cfg)?;
    let model = &prepared.model;
    let n = model.n_assets();
    let candidates = draw_candidates(child_seed(cfg.seed, "ablation", "", 0), cfg.n_candidates, n);
    let methods = cfg.methods_with_baseline();

    let mut variances: Vec<(MethodName, Vec<f64>)> = Vec::new();
    let mut sharpes: Vec<(MethodName, Vec<f64>)> = Vec::new();
    for &name in &methods {
        let (v, s) = repair_and_score(&candidates, model, &cfg.constraints, name, cfg)?;
        variances.push((name, v));
        sharpes.push((name, s));
    }

    let base_var = &variances
        .iter()
        .find(|(m, _)| *m == MethodName::Euclidean)
        .expect("baseline guaranteed")
        .1
        .clone();
    let base_mean = mean(base_var);

    let mut rows = Vec::new();
    for ((name, vars), (_, shs)) in variances.iter().zip(&sharpes) {
        let mean_variance = mean(vars);
        let reduction = if base_mean != 0.0 {
            (base_mean - mean_variance) / base_mean * 100.0
        } else {
            0.0
        };
        let (stat, p) = if *name == MethodName::Euclidean {
            (None, None)
        } else {
            let cmp = compare_paired(*name, MethodName::Euclidean, "variance", vars, base_var)?;
            (cmp.statistic, cmp.p_value)
        };
        rows.push(AblationRow {
            method: *name,
            mean_variance,
            mean_sharpe: mean(shs),
            variance_reduction_pct: reduction,
            wilcoxon_stat_vs_euclidean: stat,
            wilcoxon_p_vs_euclidean: p,
        });
    }

    // Attribution of projection geometry beyond selection: the covariance
    // metric vs its selection-matched Euclidean baseline.
    let mut extra_comparisons = Vec::new();
    let casp = variances.iter().find(|(m, _)| *m == MethodName::CaspBasic);
    let volnorm = variances.iter().find(|(m, _)| *m == MethodName::VolnormEuc);
    if let (Some((_, a)), Some((_, b))) = (casp, volnorm) {
        extra_comparisons.push(compare_paired(
            MethodName::CaspBasic,
            MethodName::VolnormEuc,
            "variance",
            a,
            b,
        )?);
    }

    Ok(AblationReport {
        schema_version: SCHEMA_VERSION,
        experiment: "ablation".into(),
        seed: cfg.seed,
        n_candidates: cfg.n_candidates,
        n_assets: n,
        constraints: cfg.constraints,
        data_fingerprint: prepared.fingerprint,
        rows,
        extra_comparisons,
    })
}

fn repair_and_score(
    candidates: &[Candidate],
    model: &MarketModel,
    constraints: &ConstraintSet,
    name: MethodName,
    cfg: &ExperimentConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let method = RepairMethod::preset(name, cfg.ra, cfg.r_f);
    let repaired = repair_batch(candidates, model, constraints, &method);
    let mut variances = Vec::with_capacity(candidates.len());
    let mut sharpes = Vec::with_capacity(candidates.len());
    for result in repaired {
        let (portfolio, _) = result?;
        let o = mogwo::evaluate(&portfolio, model);
        variances.push(o.variance);
        sharpes.push(sharpe_insample(&portfolio, model, cfg.r_f)?);
    }
    Ok((variances, sharpes))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// Out-of-sample
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosRow {
    pub method: MethodName,
    pub mean_insample_sharpe: f64,
    pub mean_realized_sharpe: f64,
    /// Spearman rank correlation between in-sample and realized Sharpe
    /// across candidates; None when either side is constant.
    pub spearman_rho: Option<f64>,
    pub wilcoxon_stat_vs_euclidean: Option<f64>,
    pub wilcoxon_p_vs_euclidean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosSplit {
    pub boundary: chrono::NaiveDate,
    pub train_obs: usize,
    pub test_obs: usize,
    pub rows: Vec<OosRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub n_candidates: usize,
    pub data_fingerprint: String,
    pub splits: Vec<OosSplit>,
}

/// Walk-forward study: for each boundary, fit on the training segment,
/// repair candidates under the training model, then score realized Sharpe on
/// the held-out segment.
pub fn run_oos(cfg: &ExperimentConfig) -> Result<OosReport> {
    cfg.validate()?;
    if cfg.split_boundaries.is_empty() {
        return Err(Error::Config("oos needs at least one split boundary".into()));
    }
    let prepared = prepare_market(cfg)?;
    let methods = cfg.methods_with_baseline();

    let mut splits = Vec::new();
    for (split_idx, &boundary) in cfg.split_boundaries.iter().enumerate() {
        let split = market::split_temporal(&prepared.prices, boundary)?;
        let model_train = market::estimate_model(
            &split.train,
            cfg.shrinkage,
            cfg.annualization,
            &prepared.esg_inputs,
        )?;
        let n = model_train.n_assets();
        let candidates = draw_candidates(
            child_seed(cfg.seed, "oos", "", split_idx as u64),
            cfg.n_candidates,
            n,
        );

        let mut per_method: Vec<(MethodName, Vec<f64>, Vec<f64>)> = Vec::new();
        for &name in &methods {
            let method = RepairMethod::preset(name, cfg.ra, cfg.r_f);
            let repaired = repair_batch(&candidates, &model_train, &cfg.constraints, &method);
            let mut insample = Vec::with_capacity(candidates.len());
            let mut realized = Vec::with_capacity(candidates.len());
            for result in repaired {
                let (portfolio, _) = result?;
                insample.push(sharpe_insample(&portfolio, &model_train, cfg.r_f)?);
                realized.push(sharpe_realized(&portfolio, &split.test, cfg.r_f, cfg.annualization)?);
            }
            per_method.push((name, insample, realized));
        }

        let base_realized = per_method
            .iter()
            .find(|(m, _, _)| *m == MethodName::Euclidean)
            .expect("baseline guaranteed")
            .2
            .clone();

        let mut rows = Vec::new();
        for (name, insample, realized) in &per_method {
            let rho = match evaluation::spearman_rho(insample, realized) {
                Ok(r) => Some(r),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            let (stat, p) = if *name == MethodName::Euclidean {
                (None, None)
            } else {
                let cmp = compare_paired(
                    *name,
                    MethodName::Euclidean,
                    "realized_sharpe",
                    realized,
                    &base_realized,
                )?;
                (cmp.statistic, cmp.p_value)
            };
            rows.push(OosRow {
                method: *name,
                mean_insample_sharpe: mean(insample),
                mean_realized_sharpe: mean(realized),
                spearman_rho: rho,
                wilcoxon_stat_vs_euclidean: stat,
                wilcoxon_p_vs_euclidean: p,
            });
        }

        splits.push(OosSplit {
            boundary,
            train_obs: split.train.n_obs(),
            test_obs: split.test.n_obs(),
            rows,
        });
    }

    Ok(OosReport {
        schema_version: SCHEMA_VERSION,
        experiment: "oos".into(),
        seed: cfg.seed,
        n_candidates: cfg.n_candidates,
        data_fingerprint: prepared.fingerprint,
        splits,
    })
}

// ---------------------------------------------------------------------------
// Turnover
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnoverRow {
    pub method: MethodName,
    pub mean_turnover: f64,
    pub mean_cost_bps: f64,
    pub gross_sharpe: f64,
    pub net_sharpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnoverReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub rebalance_events: usize,
    pub cost_rate_bps: f64,
    pub rebalances_per_year: f64,
    pub perturbation_sigma: f64,
    pub data_fingerprint: String,
    /// The net-Sharpe construction is a proxy; the exact formula used is
    /// recorded so the column can be reinterpreted.
    pub net_sharpe_formula: String,
    pub rows: Vec<TurnoverRow>,
}

/// Simulated rebalancing: each event pairs a repaired candidate `z` with the
/// repair of `z + δ`, δ ~ N(0, σ²) per coordinate. Reports one-way turnover,
/// its cost and a net-Sharpe proxy per method.
pub fn run_turnover(cfg: &ExperimentConfig) -> Result<TurnoverReport> {
    cfg.validate()?;
    let prepared = prepare_market(cfg)?;
    let model = &prepared.model;
    let n = model.n_assets();

    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, "turnover", "", 0));
    let normal = Normal::new(0.0, cfg.perturbation_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("bad perturbation sigma: {e}")))?;
    let mut olds = Vec::with_capacity(cfg.rebalance_events);
    let mut news = Vec::with_capacity(cfg.rebalance_events);
    for _ in 0..cfg.rebalance_events {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        let z: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        // Relative perturbation keeps the shock meaningful at portfolio scale.
        let z_new: Vec<f64> = z
            .iter()
            .map(|a| a * (1.0 + normal.sample(&mut rng)))
            .collect();
        olds.push(Candidate::new(z)?);
        news.push(Candidate::new(z_new)?);
    }

    let methods = cfg.methods_with_baseline();
    let mut rows = Vec::new();
    for &name in &methods {
        let method = RepairMethod::preset(name, cfg.ra, cfg.r_f);
        let old_ports = repair_batch(&olds, model, &cfg.constraints, &method);
        let new_ports = repair_batch(&news, model, &cfg.constraints, &method);

        let mut turnovers = Vec::with_capacity(cfg.rebalance_events);
        let mut costs = Vec::with_capacity(cfg.rebalance_events);
        let mut sharpes = Vec::with_capacity(cfg.rebalance_events);
        let mut vols = Vec::with_capacity(cfg.rebalance_events);
        for (old_r, new_r) in old_ports.into_iter().zip(new_ports) {
            let (old_p, _) = old_r?;
            let (new_p, _) = new_r?;
            let w_old = old_p.to_dense(n);
            let w_new = new_p.to_dense(n);
            let (t, c) = turnover_cost(&w_old, &w_new, cfg.cost_rate_bps)?;
            turnovers.push(t);
            costs.push(c);
            sharpes.push(sharpe_insample(&new_p, model, cfg.r_f)?);
            vols.push(mogwo::evaluate(&new_p, model).variance.sqrt());
        }

        let gross = mean(&sharpes);
        let mean_cost_bps = mean(&costs);
        let sigma_p = mean(&vols);
        // Annualized cost drag in Sharpe units:
        // (cost per rebalance as a fraction) × rebalances per year / σ_p.
        let drag = if sigma_p > 0.0 {
            (mean_cost_bps / 10_000.0) * cfg.rebalances_per_year / sigma_p
        } else {
            0.0
        };
        rows.push(TurnoverRow {
            method: name,
            mean_turnover: mean(&turnovers),
            mean_cost_bps,
            gross_sharpe: gross,
            net_sharpe: gross - drag,
        });
    }

    Ok(TurnoverReport {
        schema_version: SCHEMA_VERSION,
        experiment: "turnover".into(),
        seed: cfg.seed,
        rebalance_events: cfg.rebalance_events,
        cost_rate_bps: cfg.cost_rate_bps,
        rebalances_per_year: cfg.rebalances_per_year,
        perturbation_sigma: cfg.perturbation_sigma,
        data_fingerprint: prepared.fingerprint,
        net_sharpe_formula:
            "net = gross_sharpe - (mean_cost_bps/1e4) * rebalances_per_year / mean(sqrt(variance))"
                .into(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRun {
    pub method: MethodName,
    pub rep: usize,
    pub seed: u64,
    pub best_sharpe: f64,
    pub best_return: f64,
    pub hypervolume: f64,
    pub archive_size: usize,
    /// Archive members excluded from the hypervolume for not dominating the
    /// reference point.
    pub hv_excluded: usize,
    /// Serialized archive: every member with portfolio and objectives.
    pub archive: Vec<ArchiveMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeAggregate {
    pub method: MethodName,
    pub mean_best_sharpe: f64,
    pub max_best_sharpe: f64,
    /// Mean over runs of each run's best return.
    pub mean_best_return: f64,
    /// Best return over all runs.
    pub best_return_overall: f64,
    pub mean_hypervolume: f64,
    pub wilcoxon_stat_vs_euclidean: Option<f64>,
    pub wilcoxon_p_vs_euclidean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub repeats: usize,
    pub population: usize,
    pub iterations: usize,
    pub archive_capacity: usize,
    pub data_fingerprint: String,
    /// Hypervolume reference: nadir of all compared fronts offset outward by
    /// 5% of each objective's range.
    pub hv_reference: Objectives,
    pub runs: Vec<OptimizeRun>,
    pub aggregates: Vec<OptimizeAggregate>,
}

/// The optimize study's report plus the per-run iteration logs (one JSONL
/// document per run, named `runlog-<method>-<rep>`).
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub report: OptimizeReport,
    pub runlogs: Vec<(String, String)>,
}

/// Run the optimizer `repeats` times per method with derived seeds; report
/// best Sharpe, best return and hypervolume per run plus per-method
/// aggregates. The hypervolume reference is fixed after all runs finish.
pub fn run_optimize(cfg: &ExperimentConfig) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let prepared = prepare_market(cfg)?;
    let model = &prepared.model;
    let methods = cfg.methods_with_baseline();

    struct RawRun {
        method: MethodName,
        rep: usize,
        seed: u64,
        archive: Vec<ArchiveMember>,
        runlog: String,
    }

    let jobs: Vec<(MethodName, usize)> = methods
        .iter()
        .flat_map(|&m| (0..cfg.repeats).map(move |rep| (m, rep)))
        .collect();

    let raw: Vec<RawRun> = jobs
        .par_iter()
        .map(|&(name, rep)| -> Result<RawRun> {
            let seed = child_seed(cfg.seed, "optimize", name.as_str(), rep as u64);
            let method = RepairMethod::preset(name, cfg.ra, cfg.r_f);
            let mogwo_cfg = MogwoConfig {
                population: cfg.population,
                iterations: cfg.iterations,
                archive_capacity: cfg.archive_capacity,
                seed,
                grid_divisions: cfg.grid_divisions,
            };
            let (archive, log) = mogwo::optimize(model, &cfg.constraints, &method, &mogwo_cfg, cfg.r_f)?;
            Ok(RawRun {
                method: name,
                rep,
                seed,
                archive: archive.members,
                runlog: log.to_jsonl()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // Reference point: nadir of the union of all fronts, pushed out by 5% of
    // each objective's range.
    let all: Vec<&Objectives> = raw.iter().flat_map(|r| r.archive.iter().map(|m| &m.objectives)).collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("optimization produced no archive members".into()));
    }
    let hv_reference = nadir_reference(&all);

    let mut runs = Vec::with_capacity(raw.len());
    let mut runlogs = Vec::with_capacity(raw.len());
    for r in raw {
        let objectives: Vec<Objectives> = r.archive.iter().map(|m| m.objectives).collect();
        let hv = hypervolume(&objectives, &hv_reference);
        let best_sharpe = objectives
            .iter()
            .filter(|o| o.variance > 0.0)
            .map(|o| (o.ret - cfg.r_f) / o.variance.sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        let best_return = objectives.iter().map(|o| o.ret).fold(f64::NEG_INFINITY, f64::max);
        runlogs.push((format!("runlog-{}-{}", r.method, r.rep), r.runlog));
        runs.push(OptimizeRun {
            method: r.method,
            rep: r.rep,
            seed: r.seed,
            best_sharpe,
            best_return,
            hypervolume: hv.value,
            archive_size: r.archive.len(),
            hv_excluded: hv.excluded,
            archive: r.archive,
        });
    }

    let base_sharpes: Vec<f64> = runs
        .iter()
        .filter(|r| r.method == MethodName::Euclidean)
        .map(|r| r.best_sharpe)
        .collect();

    let mut aggregates = Vec::new();
    for &name in &methods {
        let sharpes: Vec<f64> = runs
            .iter()
            .filter(|r| r.method == name)
            .map(|r| r.best_sharpe)
            .collect();
        let returns: Vec<f64> = runs
            .iter()
            .filter(|r| r.method == name)
            .map(|r| r.best_return)
            .collect();
        let hvs: Vec<f64> = runs
            .iter()
            .filter(|r| r.method == name)
            .map(|r| r.hypervolume)
            .collect();
        let (stat, p) = if name == MethodName::Euclidean || sharpes.len() != base_sharpes.len() {
            (None, None)
        } else {
            let cmp = compare_paired(name, MethodName::Euclidean, "best_sharpe", &sharpes, &base_sharpes)?;
            (cmp.statistic, cmp.p_value)
        };
        aggregates.push(OptimizeAggregate {
            method: name,
            mean_best_sharpe: mean(&sharpes),
            max_best_sharpe: sharpes.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean_best_return: mean(&returns),
            best_return_overall: returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean_hypervolume: mean(&hvs),
            wilcoxon_stat_vs_euclidean: stat,
            wilcoxon_p_vs_euclidean: p,
        });
    }

    Ok(OptimizeOutcome {
        report: OptimizeReport {
            schema_version: SCHEMA_VERSION,
            experiment: "optimize".into(),
            seed: cfg.seed,
            repeats: cfg.repeats,
            population: cfg.population,
            iterations: cfg.iterations,
            archive_capacity: cfg.archive_capacity,
            data_fingerprint: prepared.fingerprint,
            hv_reference,
            runs,
            aggregates,
        },
        runlogs,
    })
}

/// Nadir of the union offset outward by 5% of each objective's range (with a
/// tiny floor so zero-range objectives still dominate the reference).
pub fn nadir_reference(all: &[&Objectives]) -> Objectives {
    let minmax = |f: fn(&Objectives) -> f64| -> (f64, f64) {
        let lo = all.iter().map(|o| f(o)).fold(f64::MAX, f64::min);
        let hi = all.iter().map(|o| f(o)).fold(f64::MIN, f64::max);
        (lo, hi)
    };
    let (var_lo, var_hi) = minmax(|o| o.variance);
    let (ret_lo, ret_hi) = minmax(|o| o.ret);
    let (esg_lo, esg_hi) = minmax(|o| o.esg);
    let pad = |range: f64| (0.05 * range).max(1e-9);
    Objectives {
        variance: var_hi + pad(var_hi - var_lo),
        ret: ret_lo - pad(ret_hi - ret_lo),
        esg: esg_lo - pad(esg_hi - esg_lo),
    }
}

// ---------------------------------------------------------------------------
// (λ, γ) grid search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneCell {
    pub lambda: f64,
    pub gamma: f64,
    pub mean_insample_sharpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub n_candidates: usize,
    pub data_fingerprint: String,
    /// Boundary whose training segment the sweep used; None = full panel.
    pub train_boundary: Option<chrono::NaiveDate>,
    pub cells: Vec<TuneCell>,
    pub best_lambda: f64,
    pub best_gamma: f64,
}

const TUNE_LAMBDAS: [f64; 5] = [0.4, 0.6, 0.8, 1.0, 1.2];
const TUNE_GAMMAS: [f64; 5] = [0.15, 0.20, 0.25, 0.30, 0.35];

/// Sweep the 5×5 (λ, γ) grid with the return-aware method on the training
/// split, selecting the cell with the highest mean in-sample Sharpe.
pub fn run_tune(cfg: &ExperimentConfig) -> Result<TuneReport> {
    cfg.validate()?;
    let prepared = prepare_market(cfg)?;

    let (model, train_boundary) = match cfg.split_boundaries.first() {
        Some(&boundary) => {
            let split = market::split_temporal(&prepared.prices, boundary)?;
            let model = market::estimate_model(
                &split.train,
                cfg.shrinkage,
                cfg.annualization,
                &prepared.esg_inputs,
            )?;
            (model, Some(boundary))
        }
        None => (prepared.model.clone(), None),
    };

    let n = model.n_assets();
    let candidates = draw_candidates(child_seed(cfg.seed, "tune", "", 0), cfg.n_candidates, n);

    let mut cells = Vec::with_capacity(25);
    let mut best = (TUNE_LAMBDAS[0], TUNE_GAMMAS[0], f64::NEG_INFINITY);
    for &lambda in &TUNE_LAMBDAS {
        for &gamma in &TUNE_GAMMAS {
            let method = RepairMethod::preset(
                MethodName::RaCasp,
                RaParams { lambda, gamma },
                cfg.r_f,
            );
            let repaired = repair_batch(&candidates, &model, &cfg.constraints, &method);
            let mut sharpes = Vec::with_capacity(candidates.len());
            for result in repaired {
                let (portfolio, _) = result?;
                sharpes.push(sharpe_insample(&portfolio, &model, cfg.r_f)?);
            }
            let score = mean(&sharpes);
            if score > best.2 {
                best = (lambda, gamma, score);
            }
            cells.push(TuneCell { lambda, gamma, mean_insample_sharpe: score });
        }
    }

    Ok(TuneReport {
        schema_version: SCHEMA_VERSION,
        experiment: "tune".into(),
        seed: cfg.seed,
        n_candidates: cfg.n_candidates,
        data_fingerprint: prepared.fingerprint,
        train_boundary,
        cells,
        best_lambda: best.0,
        best_gamma: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::DataSource;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic { seed: 11, n_assets: 12, n_factors: 3, horizon: 200 },
            constraints: ConstraintSet { k: 4, lower: 0.02, upper: 0.4 },
            methods: vec![MethodName::Euclidean, MethodName::VolnormEuc, MethodName::CaspBasic],
            n_candidates: 60,
            seed: 3,
            split_boundaries: vec![chrono::NaiveDate::from_ymd_opt(2020, 6, 1).unwrap()],
            population: 6,
            iterations: 4,
            archive_capacity: 10,
            repeats: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn ablation_self_comparison_is_zero() {
        let mut cfg = small_cfg();
        cfg.methods = vec![MethodName::Euclidean];
        let report = run_ablation(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].variance_reduction_pct, 0.0);
        assert!(report.rows[0].wilcoxon_p_vs_euclidean.is_none());
    }

    #[test]
    fn ablation_is_deterministic() {
        let cfg = small_cfg();
        let a = run_ablation(&cfg).unwrap();
        let b = run_ablation(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ablation_includes_attribution_comparison() {
        let cfg = small_cfg();
        let report = run_ablation(&cfg).unwrap();
        assert_eq!(report.extra_comparisons.len(), 1);
        assert_eq!(report.extra_comparisons[0].method_a, MethodName::CaspBasic);
    }

    #[test]
    fn oos_produces_bounded_correlations() {
        let cfg = small_cfg();
        let report = run_oos(&cfg).unwrap();
        assert_eq!(report.splits.len(), 1);
        for row in &report.splits[0].rows {
            if let Some(rho) = row.spearman_rho {
                assert!((-1.0..=1.0).contains(&rho), "rho out of range: {rho}");
            }
            assert!(row.mean_realized_sharpe.is_finite());
        }
    }

    #[test]
    fn oos_requires_boundary() {
        let mut cfg = small_cfg();
        cfg.split_boundaries.clear();
        assert!(matches!(run_oos(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn turnover_zero_cost_rate_means_net_equals_gross() {
        let mut cfg = small_cfg();
        cfg.cost_rate_bps = 0.0;
        cfg.rebalance_events = 10;
        let report = run_turnover(&cfg).unwrap();
        for row in &report.rows {
            assert_eq!(row.mean_cost_bps, 0.0);
            assert_eq!(row.net_sharpe, row.gross_sharpe);
        }
    }

    #[test]
    fn turnover_identical_candidates_zero() {
        // With σ = 0 the perturbed candidate equals the original, so every
        // method produces zero turnover.
        let mut cfg = small_cfg();
        cfg.perturbation_sigma = 0.0;
        cfg.rebalance_events = 5;
        let report = run_turnover(&cfg).unwrap();
        for row in &report.rows {
            assert!(row.mean_turnover.abs() < 1e-12, "{:?}", row);
        }
    }

    #[test]
    fn optimize_zero_iterations_reports_initial_population() {
        let mut cfg = small_cfg();
        cfg.iterations = 0;
        cfg.repeats = 1;
        let outcome = run_optimize(&cfg).unwrap();
        for run in &outcome.report.runs {
            assert!(run.archive_size >= 1);
        }
        // One runlog entry (initialization only) per run.
        for (_, jsonl) in &outcome.runlogs {
            assert_eq!(jsonl.lines().count(), 1);
        }
    }

    #[test]
    fn optimize_hypervolume_recomputable_from_archives() {
        let cfg = small_cfg();
        let outcome = run_optimize(&cfg).unwrap();
        let report = &outcome.report;
        for run in &report.runs {
            let objectives: Vec<Objectives> = run.archive.iter().map(|m| m.objectives).collect();
            let hv = hypervolume(&objectives, &report.hv_reference);
            assert!(
                (hv.value - run.hypervolume).abs() <= 1e-9,
                "recomputed {} vs reported {}",
                hv.value,
                run.hypervolume
            );
        }
    }

    #[test]
    fn tune_selects_grid_cell() {
        let mut cfg = small_cfg();
        cfg.n_candidates = 30;
        let report = run_tune(&cfg).unwrap();
        assert_eq!(report.cells.len(), 25);
        assert!(TUNE_LAMBDAS.contains(&report.best_lambda));
        assert!(TUNE_GAMMAS.contains(&report.best_gamma));
        let best_score = report
            .cells
            .iter()
            .map(|c| c.mean_insample_sharpe)
            .fold(f64::NEG_INFINITY, f64::max);
        let selected = report
            .cells
            .iter()
            .find(|c| c.lambda == report.best_lambda && c.gamma == report.best_gamma)
            .unwrap();
        assert_eq!(selected.mean_insample_sharpe, best_score);
    }
}
