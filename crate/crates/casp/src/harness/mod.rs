//! Experiment harness: configuration, seed derivation, data preparation,
//! the four studies (ablation, out-of-sample, turnover, optimization) and
//! report emission.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::PathBuf;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market::{self, EsgInputs, MarketModel, PriceHistory, ReturnPanel};
use crate::projection::{Candidate, ConstraintSet};
use crate::repair::{MethodName, RaParams};

pub use experiments::{
    run_ablation, run_oos, run_optimize, run_tune, run_turnover, AblationReport, OosReport,
    OptimizeOutcome, OptimizeReport, TuneReport, TurnoverReport,
};
pub use report::{emit_report, Report, ReportFormat, RunManifest};

/// Where the harness gets its prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        esg_path: Option<PathBuf>,
    },
    Synthetic {
        seed: u64,
        n_assets: usize,
        n_factors: usize,
        horizon: usize,
    },
}

/// Full experiment configuration. The flat key=value file format in
/// [`config`] mirrors these field names; the manifest embeds the struct as
/// JSON so a run can be reproduced bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub constraints: ConstraintSet,
    pub methods: Vec<MethodName>,
    pub n_candidates: usize,
    pub seed: u64,
    pub split_boundaries: Vec<NaiveDate>,
    pub r_f: f64,
    pub cost_rate_bps: f64,
    pub shrinkage: f64,
    pub annualization: f64,
    pub population: usize,
    pub iterations: usize,
    pub archive_capacity: usize,
    pub grid_divisions: usize,
    pub repeats: usize,
    pub ra: RaParams,
    pub rebalance_events: usize,
    pub rebalances_per_year: f64,
    pub perturbation_sigma: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic {
                seed: 7,
                n_assets: 30,
                n_factors: 5,
                horizon: 756,
            },
            constraints: ConstraintSet { k: 15, lower: 0.02, upper: 0.15 },
            methods: MethodName::ALL.to_vec(),
            n_candidates: 500,
            seed: 42,
            split_boundaries: vec![
                NaiveDate::from_ymd_opt(2021, 7, 1).unwrap(),
                NaiveDate::from_ymd_opt(2022, 1, 3).unwrap(),
            ],
            r_f: 0.045,
            cost_rate_bps: 10.0,
            shrinkage: 0.10,
            annualization: 252.0,
            population: 50,
            iterations: 100,
            archive_capacity: 30,
            grid_divisions: 10,
            repeats: 15,
            ra: RaParams::default(),
            rebalance_events: 50,
            rebalances_per_year: 12.0,
            perturbation_sigma: 0.15,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods list must be nonempty".into()));
        }
        if self.n_candidates < 1 {
            return Err(Error::Config("n_candidates must be ≥ 1".into()));
        }
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be ≥ 1".into()));
        }
        if self.rebalance_events < 1 {
            return Err(Error::Config("rebalance_events must be ≥ 1".into()));
        }
        ConstraintSet::new(self.constraints.k, self.constraints.lower, self.constraints.upper)
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return Err(Error::Config("shrinkage must be in [0, 1]".into()));
        }
        if self.annualization <= 0.0 {
            return Err(Error::Config("annualization must be > 0".into()));
        }
        if self.perturbation_sigma < 0.0 {
            return Err(Error::Config("perturbation_sigma must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Methods to run, with the `euclidean` baseline guaranteed present (it
    /// anchors every comparative column) and duplicates removed.
    pub fn methods_with_baseline(&self) -> Vec<MethodName> {
        let mut out = Vec::new();
        if !self.methods.contains(&MethodName::Euclidean) {
            out.push(MethodName::Euclidean);
        }
        for m in &self.methods {
            if !out.contains(m) {
                out.push(*m);
            }
        }
        out
    }
}

/// Deterministic 64-bit child seed (FNV-1a over the master seed, experiment
/// name, method name and repetition index). Adding a method never perturbs
/// another method's stream.
pub fn child_seed(master: u64, experiment: &str, method: &str, rep: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let eat = |h: u64, bytes: &[u8]| -> u64 {
        let mut h = h;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        h
    };
    h = eat(h, &master.to_le_bytes());
    h = eat(h, experiment.as_bytes());
    h = eat(h, &[0xff]);
    h = eat(h, method.as_bytes());
    h = eat(h, &[0xfe]);
    h = eat(h, &rep.to_le_bytes());
    h
}

/// Loaded or generated market data plus the fitted model and a content
/// fingerprint for the manifest.
#[derive(Debug, Clone)]
pub struct PreparedMarket {
    pub prices: PriceHistory,
    pub panel: ReturnPanel,
    pub model: MarketModel,
    pub esg_inputs: EsgInputs,
    pub fingerprint: String,
    pub dropped_rows: usize,
}

/// Resolve the configured data source, fit the model on the full panel and
/// fingerprint the inputs.
pub fn prepare_market(cfg: &ExperimentConfig) -> Result<PreparedMarket> {
    let (prices, esg_inputs, fingerprint, dropped_rows) = match &cfg.data {
        DataSource::Csv { path, esg_path } => {
            let bytes = std::fs::read(path)?;
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            let (prices, dropped) = market::load_prices(path)?;
            let esg = match esg_path {
                Some(p) => {
                    let esg_bytes = std::fs::read(p)?;
                    hasher.update(&esg_bytes);
                    market::load_esg(p, &prices.asset_ids)?
                }
                None => EsgInputs::neutral(prices.n_assets()),
            };
            let fp = format!("sha256:{}", hex::encode(hasher.finalize()));
            (prices, esg, fp, dropped)
        }
        DataSource::Synthetic { seed, n_assets, n_factors, horizon } => {
            let prices = market::synth_market(*n_assets, *n_factors, *seed, *horizon)?;
            let esg = synth_esg(*n_assets, child_seed(*seed, "esg", "", 0));
            let fp = format!("synthetic:seed={seed},n_assets={n_assets},n_factors={n_factors},horizon={horizon}");
            (prices, esg, fp, 0)
        }
    };
    let panel = market::compute_returns(&prices)?;
    let model = market::estimate_model(&panel, cfg.shrinkage, cfg.annualization, &esg_inputs)?;
    Ok(PreparedMarket { prices, panel, model, esg_inputs, fingerprint, dropped_rows })
}

/// Deterministic ESG inputs for synthetic universes: integer governance risk
/// uniform on [0, 10], sector proxy uniform on [30, 90].
pub fn synth_esg(n_assets: usize, seed: u64) -> EsgInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let overall_risk: Vec<u8> = (0..n_assets).map(|_| rng.random_range(0..=10u8)).collect();
    let sector_proxy: Vec<f64> = (0..n_assets).map(|_| rng.random_range(30.0..90.0)).collect();
    EsgInputs::new(overall_risk, sector_proxy).expect("ranges valid by construction")
}

/// `count` random portfolio-scale candidates from a dedicated child stream:
/// uniform draws on [0, 1]^n scaled to unit sum. The scaling matters — it
/// puts candidates where metaheuristic positions actually live (budget-
/// feasible but violating cardinality and box constraints), which is the
/// regime where the covariance-metric projection behaves as intended.
pub fn draw_candidates(seed: u64, count: usize, n: usize) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let sum: f64 = raw.iter().sum();
            let z = if sum > 0.0 {
                raw.iter().map(|v| v / sum).collect()
            } else {
                raw
            };
            Candidate::new(z).expect("uniform draws are finite")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn child_seed_is_stable_and_sensitive() {
        let a = child_seed(42, "ablation", "", 0);
        let b = child_seed(42, "ablation", "", 0);
        assert_eq!(a, b);
        assert_ne!(a, child_seed(42, "oos", "", 0));
        assert_ne!(a, child_seed(43, "ablation", "", 0));
        assert_ne!(
            child_seed(42, "optimize", "casp-basic", 1),
            child_seed(42, "optimize", "casp-basic", 2)
        );
        assert_ne!(
            child_seed(42, "optimize", "casp-basic", 1),
            child_seed(42, "optimize", "euclidean", 1)
        );
    }

    #[test]
    fn default_config_validates() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn baseline_always_included() {
        let cfg = ExperimentConfig {
            methods: vec![MethodName::CaspBasic],
            ..ExperimentConfig::default()
        };
        let methods = cfg.methods_with_baseline();
        assert_eq!(methods[0], MethodName::Euclidean);
        assert!(methods.contains(&MethodName::CaspBasic));
    }

    #[test]
    fn prepared_synthetic_market_is_deterministic() {
        let cfg = ExperimentConfig::default();
        let a = prepare_market(&cfg).unwrap();
        let b = prepare_market(&cfg).unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        assert!(a
            .model
            .omega
            .iter()
            .zip(b.model.omega.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn candidates_deterministic_per_seed() {
        let a = draw_candidates(9, 5, 4);
        let b = draw_candidates(9, 5, 4);
        assert_eq!(a, b);
        let c = draw_candidates(10, 5, 4);
        assert_ne!(a, c);
    }
}
