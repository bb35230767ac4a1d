//! Flat key=value configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment; lists are
//! comma-separated. Keys mirror [`ExperimentConfig`](super::ExperimentConfig)
//! field names. Unknown keys are rejected so typos fail loudly.
//!
//! ```text
//! data = synthetic            # or a path to a price CSV
//! synthetic_seed = 7
//! n_assets = 30
//! n_factors = 5
//! horizon = 756
//! k = 15
//! lower = 0.02
//! upper = 0.15
//! methods = euclidean,volnorm-euc,casp-basic,ra-casp
//! n_candidates = 500
//! seed = 42
//! split_boundaries = 2021-07-01,2022-01-03
//! r_f = 0.045
//! cost_rate_bps = 10
//! shrinkage = 0.10
//! annualization = 252
//! population = 50
//! iterations = 100
//! archive_capacity = 30
//! grid_divisions = 10
//! repeats = 15
//! lambda = 1.2
//! gamma = 0.35
//! rebalance_events = 50
//! rebalances_per_year = 12
//! perturbation_sigma = 0.15
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::repair::MethodName;

use super::{DataSource, ExperimentConfig};

/// Parse a flat config file, applying defaults for absent keys.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Parse flat key=value text into a config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut data_kind: Option<String> = None;
    let mut esg_path: Option<PathBuf> = None;
    let mut synthetic_seed: Option<u64> = None;
    let mut n_assets: Option<usize> = None;
    let mut n_factors: Option<usize> = None;
    let mut horizon: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("line {}: bad {what}: `{value}`", lineno + 1));

        match key {
            "data" => data_kind = Some(value.to_string()),
            "esg" => esg_path = Some(PathBuf::from(value)),
            "synthetic_seed" => synthetic_seed = Some(value.parse().map_err(|_| bad("integer"))?),
            "n_assets" => n_assets = Some(value.parse().map_err(|_| bad("integer"))?),
            "n_factors" => n_factors = Some(value.parse().map_err(|_| bad("integer"))?),
            "horizon" => horizon = Some(value.parse().map_err(|_| bad("integer"))?),
            "k" => cfg.constraints.k = value.parse().map_err(|_| bad("integer"))?,
            "lower" => cfg.constraints.lower = value.parse().map_err(|_| bad("number"))?,
            "upper" => cfg.constraints.upper = value.parse().map_err(|_| bad("number"))?,
            "methods" => {
                cfg.methods = value
                    .split(',')
                    .map(|m| m.trim().parse::<MethodName>())
                    .collect::<Result<Vec<_>>>()?;
            }
            "n_candidates" => cfg.n_candidates = value.parse().map_err(|_| bad("integer"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
            "split_boundaries" => {
                cfg.split_boundaries = value
                    .split(',')
                    .map(|d| {
                        NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                            .map_err(|_| bad("ISO date list"))
                    })
                    .collect::<Result<Vec<_>>>()?;
            }
            "r_f" => cfg.r_f = value.parse().map_err(|_| bad("number"))?,
            "cost_rate_bps" => cfg.cost_rate_bps = value.parse().map_err(|_| bad("number"))?,
            "shrinkage" => cfg.shrinkage = value.parse().map_err(|_| bad("number"))?,
            "annualization" => cfg.annualization = value.parse().map_err(|_| bad("number"))?,
            "population" => cfg.population = value.parse().map_err(|_| bad("integer"))?,
            "iterations" => cfg.iterations = value.parse().map_err(|_| bad("integer"))?,
            "archive_capacity" => cfg.archive_capacity = value.parse().map_err(|_| bad("integer"))?,
            "grid_divisions" => cfg.grid_divisions = value.parse().map_err(|_| bad("integer"))?,
            "repeats" => cfg.repeats = value.parse().map_err(|_| bad("integer"))?,
            "lambda" => cfg.ra.lambda = value.parse().map_err(|_| bad("number"))?,
            "gamma" => cfg.ra.gamma = value.parse().map_err(|_| bad("number"))?,
            "rebalance_events" => cfg.rebalance_events = value.parse().map_err(|_| bad("integer"))?,
            "rebalances_per_year" => {
                cfg.rebalances_per_year = value.parse().map_err(|_| bad("number"))?
            }
            "perturbation_sigma" => {
                cfg.perturbation_sigma = value.parse().map_err(|_| bad("number"))?
            }
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{other}`",
                    lineno + 1
                )))
            }
        }
    }

    cfg.data = match data_kind.as_deref() {
        None | Some("synthetic") => {
            let default = match ExperimentConfig::default().data {
                DataSource::Synthetic { seed, n_assets, n_factors, horizon } => {
                    (seed, n_assets, n_factors, horizon)
                }
                _ => unreachable!(),
            };
            DataSource::Synthetic {
                seed: synthetic_seed.unwrap_or(default.0),
                n_assets: n_assets.unwrap_or(default.1),
                n_factors: n_factors.unwrap_or(default.2),
                horizon: horizon.unwrap_or(default.3),
            }
        }
        Some(path) => DataSource::Csv { path: PathBuf::from(path), esg_path },
    };

    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn parses_full_document() {
        let text = "\
data = synthetic
synthetic_seed = 11
n_assets = 20
n_factors = 3
horizon = 400
k = 8
lower = 0.02
upper = 0.25
methods = euclidean, casp-basic
n_candidates = 100
seed = 5
split_boundaries = 2021-01-04
r_f = 0.03
cost_rate_bps = 5
shrinkage = 0.2
annualization = 252
population = 10
iterations = 20
archive_capacity = 12
grid_divisions = 8
repeats = 3
lambda = 0.8
gamma = 0.2
rebalance_events = 10
rebalances_per_year = 4
perturbation_sigma = 0.1
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.constraints.k, 8);
        assert_eq!(cfg.methods, vec![MethodName::Euclidean, MethodName::CaspBasic]);
        assert_eq!(cfg.ra.lambda, 0.8);
        match cfg.data {
            DataSource::Synthetic { seed, n_assets, .. } => {
                assert_eq!(seed, 11);
                assert_eq!(n_assets, 20);
            }
            _ => panic!("expected synthetic"),
        }
    }

    #[test]
    fn csv_path_data_source() {
        let cfg = parse_config("data = prices.csv\nesg = esg.csv\n").unwrap();
        match cfg.data {
            DataSource::Csv { path, esg_path } => {
                assert_eq!(path, PathBuf::from("prices.csv"));
                assert_eq!(esg_path, Some(PathBuf::from("esg.csv")));
            }
            _ => panic!("expected csv"),
        }
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = parse_config("# heading\n\nseed = 9 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(parse_config("sede = 9\n"), Err(Error::Config(_))));
    }

    #[test]
    fn bad_method_rejected() {
        assert!(parse_config("methods = euclidean, casper\n").is_err());
    }

    #[test]
    fn invalid_constraints_rejected() {
        assert!(parse_config("k = 2\nlower = 0.6\n").is_err());
    }
}
