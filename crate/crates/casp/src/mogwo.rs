//! Multi-Objective Grey Wolf Optimizer over (variance, return, ESG), with
//! the repair operator applied to every candidate position before
//! evaluation and a hypergrid-maintained Pareto archive.
//!
//! Randomness comes from `ChaCha8Rng` seeded with the configured seed; all
//! draws happen in a fixed order, so runs are bit-identical across platforms
//! for the same inputs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market::MarketModel;
use crate::projection::{Candidate, ConstraintSet, Portfolio};
use crate::repair::{repair, RepairMethod};

/// Position clamp applied after every GWO update to avoid drift.
const POSITION_CLAMP: (f64, f64) = (-1.0, 2.0);

/// Tri-objective values: minimize variance, maximize return and ESG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    /// wᵀΩw, per-year variance.
    pub variance: f64,
    /// μᵀw, per-year fraction.
    pub ret: f64,
    /// eᵀw, score units.
    pub esg: f64,
}

/// One search agent: raw position, its repaired portfolio and the objectives
/// of that portfolio (never of the raw position).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wolf {
    pub position: Vec<f64>,
    pub portfolio: Portfolio,
    pub objectives: Objectives,
}

/// Optimizer parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MogwoConfig {
    pub population: usize,
    pub iterations: usize,
    pub archive_capacity: usize,
    pub seed: u64,
    /// Hypergrid divisions per objective for diversity maintenance.
    pub grid_divisions: usize,
}

impl Default for MogwoConfig {
    fn default() -> Self {
        Self {
            population: 50,
            iterations: 100,
            archive_capacity: 30,
            seed: 0,
            grid_divisions: 10,
        }
    }
}

impl MogwoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 1 || self.archive_capacity < 1 || self.grid_divisions < 1 {
            return Err(Error::Config(
                "population, archive_capacity and grid_divisions must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Objective values of the dense embedding of `p`.
pub fn evaluate(p: &Portfolio, model: &MarketModel) -> Objectives {
    let w = p.to_dense(model.n_assets());
    Objectives {
        variance: linalg::quad_form(&model.omega, &w),
        ret: w.iter().zip(model.mu.iter()).map(|(a, b)| a * b).sum(),
        esg: w.iter().zip(model.esg.iter()).map(|(a, b)| a * b).sum(),
    }
}

/// Pareto dominance: `a` dominates `b` iff it is no worse in every objective
/// (≤ variance, ≥ return, ≥ ESG) and strictly better in at least one.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    let no_worse = a.variance <= b.variance && a.ret >= b.ret && a.esg >= b.esg;
    let strictly = a.variance < b.variance || a.ret > b.ret || a.esg > b.esg;
    no_worse && strictly
}

/// An archive member: portfolio plus objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMember {
    pub portfolio: Portfolio,
    pub objectives: Objectives,
}

/// Bounded set of mutually non-dominated solutions with hypergrid diversity
/// maintenance: candidates dominated by a member are rejected, members
/// dominated by a candidate are evicted, and capacity overflow evicts from
/// the most crowded grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub members: Vec<ArchiveMember>,
    pub capacity: usize,
    pub grid_divisions: usize,
}

impl ParetoArchive {
    pub fn new(capacity: usize, grid_divisions: usize) -> Self {
        Self {
            members: Vec::new(),
            capacity: capacity.max(1),
            grid_divisions: grid_divisions.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Insert a candidate, preserving mutual non-domination and capacity.
    /// The rng drives crowding eviction and must be the run's seeded stream.
    pub fn insert(&mut self, candidate: ArchiveMember, rng: &mut ChaCha8Rng) {
        if self
            .members
            .iter()
            .any(|m| dominates(&m.objectives, &candidate.objectives))
        {
            return;
        }
        self.members
            .retain(|m| !dominates(&candidate.objectives, &m.objectives));
        self.members.push(candidate);
        if self.members.len() > self.capacity {
            self.evict_from_densest(rng);
        }
    }

    /// Hypergrid cell index per member under the current adaptive bounds.
    fn grid_cells(&self) -> Vec<(usize, usize, usize)> {
        let axis = |f: fn(&Objectives) -> f64| -> (f64, f64) {
            let lo = self
                .members
                .iter()
                .map(|m| f(&m.objectives))
                .fold(f64::MAX, f64::min);
            let hi = self
                .members
                .iter()
                .map(|m| f(&m.objectives))
                .fold(f64::MIN, f64::max);
            (lo, hi)
        };
        let bounds = [
            axis(|o| o.variance),
            axis(|o| o.ret),
            axis(|o| o.esg),
        ];
        let div = self.grid_divisions;
        let index = |v: f64, (lo, hi): (f64, f64)| -> usize {
            let range = hi - lo;
            if range <= 0.0 {
                return 0;
            }
            (((v - lo) / range * div as f64) as usize).min(div - 1)
        };
        self.members
            .iter()
            .map(|m| {
                (
                    index(m.objectives.variance, bounds[0]),
                    index(m.objectives.ret, bounds[1]),
                    index(m.objectives.esg, bounds[2]),
                )
            })
            .collect()
    }

    /// Member indices grouped by occupied cell, in deterministic cell order.
    fn occupancy(&self) -> BTreeMap<(usize, usize, usize), Vec<usize>> {
        let mut map: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, cell) in self.grid_cells().into_iter().enumerate() {
            map.entry(cell).or_default().push(i);
        }
        map
    }

    fn evict_from_densest(&mut self, rng: &mut ChaCha8Rng) {
        let occ = self.occupancy();
        let densest = occ
            .iter()
            .max_by_key(|(_, v)| v.len())
            .map(|(_, v)| v.clone())
            .expect("non-empty archive");
        let victim = densest[rng.random_range(0..densest.len())];
        self.members.remove(victim);
    }

    /// Roulette selection weighted by inverse cell density, excluding the
    /// listed member indices. Returns a member index.
    fn select_leader(&self, rng: &mut ChaCha8Rng, exclude: &[usize]) -> Option<usize> {
        let occ = self.occupancy();
        let mut cells: Vec<(f64, Vec<usize>)> = Vec::new();
        for members in occ.values() {
            let remaining: Vec<usize> = members
                .iter()
                .cloned()
                .filter(|i| !exclude.contains(i))
                .collect();
            if !remaining.is_empty() {
                cells.push((1.0 / members.len() as f64, remaining));
            }
        }
        if cells.is_empty() {
            return None;
        }
        let total: f64 = cells.iter().map(|(w, _)| w).sum();
        let mut x = rng.random::<f64>() * total;
        for (w, members) in &cells {
            x -= w;
            if x <= 0.0 {
                return Some(members[rng.random_range(0..members.len())]);
            }
        }
        let last = &cells.last().expect("non-empty").1;
        Some(last[rng.random_range(0..last.len())])
    }

    /// Re-scan all pairs for mutual non-domination (test hook).
    pub fn is_mutually_nondominated(&self) -> bool {
        for (i, a) in self.members.iter().enumerate() {
            for (j, b) in self.members.iter().enumerate() {
                if i != j && dominates(&a.objectives, &b.objectives) {
                    return false;
                }
            }
        }
        true
    }
}

/// One per-iteration record of the optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub iter: usize,
    pub archive_size: usize,
    pub best_sharpe: f64,
    pub min_variance: f64,
    pub max_return: f64,
}

/// Per-iteration trace, serializable as JSON lines.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub entries: Vec<RunLogEntry>,
}

impl RunLog {
    /// One JSON object per line, in iteration order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Run the optimizer: canonical GWO position updates with three leaders
/// drawn from the archive by inverse-density roulette, every position
/// repaired before evaluation, archive maintained after each wolf in index
/// order. Deterministic for a fixed seed.
pub fn optimize(
    model: &MarketModel,
    constraints: &ConstraintSet,
    method: &RepairMethod,
    config: &MogwoConfig,
    risk_free: f64,
) -> Result<(ParetoArchive, RunLog)> {
    config.validate()?;
    let n = model.n_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archive = ParetoArchive::new(config.archive_capacity, config.grid_divisions);
    let mut log = RunLog::default();

    // Initialization: positions uniform in [0, 1]^N, repaired immediately.
    let mut positions: Vec<Vec<f64>> = (0..config.population)
        .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut wolves = repair_population(&positions, model, constraints, method)?;
    for wolf in &wolves {
        archive.insert(
            ArchiveMember {
                portfolio: wolf.portfolio.clone(),
                objectives: wolf.objectives,
            },
            &mut rng,
        );
    }
    log.entries.push(log_entry(0, &archive, risk_free));

    for iter in 1..=config.iterations {
        let a = 2.0 * (1.0 - (iter as f64 - 1.0) / config.iterations as f64);

        // Leader positions are the dense embeddings of archive members.
        let mut new_positions: Vec<Vec<f64>> = Vec::with_capacity(config.population);
        for wolf in &wolves {
            let leaders = pick_leaders(&archive, &mut rng);
            let mut next = vec![0.0; n];
            for leader_idx in leaders {
                let leader = archive.members[leader_idx].portfolio.to_dense(n);
                for d in 0..n {
                    let r1 = rng.random::<f64>();
                    let r2 = rng.random::<f64>();
                    let coef_a = 2.0 * a * r1 - a;
                    let coef_c = 2.0 * r2;
                    let dist = (coef_c * leader[d] - wolf.position[d]).abs();
                    next[d] += (leader[d] - coef_a * dist) / 3.0;
                }
            }
            for v in next.iter_mut() {
                *v = v.clamp(POSITION_CLAMP.0, POSITION_CLAMP.1);
            }
            new_positions.push(next);
        }

        positions = new_positions;
        wolves = repair_population(&positions, model, constraints, method)?;
        for wolf in &wolves {
            archive.insert(
                ArchiveMember {
                    portfolio: wolf.portfolio.clone(),
                    objectives: wolf.objectives,
                },
                &mut rng,
            );
        }
        log.entries.push(log_entry(iter, &archive, risk_free));
    }

    Ok((archive, log))
}

/// Three archive leaders, distinct when the archive has at least three
/// members, reused otherwise.
fn pick_leaders(archive: &ParetoArchive, rng: &mut ChaCha8Rng) -> [usize; 3] {
    let mut chosen: Vec<usize> = Vec::with_capacity(3);
    for _ in 0..3 {
        let exclude: &[usize] = if archive.len() >= 3 { &chosen } else { &[] };
        let idx = archive
            .select_leader(rng, exclude)
            .expect("archive never empty after initialization");
        chosen.push(idx);
    }
    [chosen[0], chosen[1], chosen[2]]
}

fn repair_population(
    positions: &[Vec<f64>],
    model: &MarketModel,
    constraints: &ConstraintSet,
    method: &RepairMethod,
) -> Result<Vec<Wolf>> {
    positions
        .par_iter()
        .map(|pos| {
            let candidate = Candidate::new(pos.clone())?;
            let (portfolio, _) = repair(&candidate, model, constraints, method)?;
            let objectives = evaluate(&portfolio, model);
            Ok(Wolf {
                position: pos.clone(),
                portfolio,
                objectives,
            })
        })
        .collect()
}

fn log_entry(iter: usize, archive: &ParetoArchive, risk_free: f64) -> RunLogEntry {
    let mut best_sharpe = f64::NEG_INFINITY;
    let mut min_variance = f64::INFINITY;
    let mut max_return = f64::NEG_INFINITY;
    for m in &archive.members {
        let o = &m.objectives;
        min_variance = min_variance.min(o.variance);
        max_return = max_return.max(o.ret);
        if o.variance > 0.0 {
            best_sharpe = best_sharpe.max((o.ret - risk_free) / o.variance.sqrt());
        }
    }
    RunLogEntry {
        iter,
        archive_size: archive.len(),
        best_sharpe,
        min_variance,
        max_return,
    }
}
