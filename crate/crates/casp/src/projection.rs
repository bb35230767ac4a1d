//! Projection kernels for the box-constrained simplex
//! `{w : Σ w_i = 1, ℓ ≤ w_i ≤ u}`.
//!
//! Two kernels are provided:
//! * [`project_simplex_box`] — Euclidean projection via bisection on the
//!   clipping threshold.
//! * [`project_omega`] — projection under the covariance-induced metric
//!   `(w − z)ᵀ Ω (w − z)`, solved as a convex QP by a primal active-set
//!   method specialized to one equality constraint plus box bounds.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance used when snapping weights that land within round-off of a bound.
const BOUND_SNAP: f64 = 1e-12;

/// Budget tolerance used by the feasibility predicate.
pub const BUDGET_TOL: f64 = 1e-8;

/// Box tolerance used by the feasibility predicate.
pub const BOX_TOL: f64 = 1e-10;

/// Cardinality limit and per-asset weight bounds defining the feasible region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Maximum number of active assets.
    pub k: usize,
    /// Per-asset weight floor on active assets.
    pub lower: f64,
    /// Per-asset weight cap on active assets.
    pub upper: f64,
}

impl ConstraintSet {
    /// Validate `0 ≤ ℓ ≤ u ≤ 1`, `k ≥ 1` and `k·ℓ ≤ 1 ≤ k·u` (otherwise the
    /// active-set simplex is empty).
    pub fn new(k: usize, lower: f64, upper: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InfeasibleConstraints("cardinality k must be ≥ 1".into()));
        }
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(Error::InfeasibleConstraints("bounds must be finite".into()));
        }
        if lower < 0.0 || upper > 1.0 || lower > upper {
            return Err(Error::InfeasibleConstraints(format!(
                "bounds must satisfy 0 ≤ ℓ ≤ u ≤ 1, got ℓ={lower}, u={upper}"
            )));
        }
        let kf = k as f64;
        if kf * lower > 1.0 + 1e-12 || kf * upper < 1.0 - 1e-12 {
            return Err(Error::InfeasibleConstraints(format!(
                "empty simplex: need k·ℓ ≤ 1 ≤ k·u, got k={k}, ℓ={lower}, u={upper}"
            )));
        }
        Ok(Self { k, lower, upper })
    }
}

/// Raw metaheuristic position: any sign, any sum, finite entries only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub z: Vec<f64>,
}

impl Candidate {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("candidate contains non-finite entries".into()));
        }
        Ok(Self { z })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// A feasible solution: the active index set and the weights carried on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    /// Active asset indices, distinct and sorted ascending.
    pub active: Vec<usize>,
    /// Weights aligned with `active`.
    pub weights: Vec<f64>,
}

impl Portfolio {
    pub fn new(active: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if active.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "active set and weight vector must have equal length".into(),
            ));
        }
        if active.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "active indices must be distinct and sorted ascending".into(),
            ));
        }
        Ok(Self { active, weights })
    }

    /// Dense weight vector over the full universe of `n` assets.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &w) in self.active.iter().zip(&self.weights) {
            out[i] = w;
        }
        out
    }
}

/// Diagnostics from a projection call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpReport {
    /// Achieved value of the projection objective ½(w−z)ᵀM(w−z), where M is
    /// the metric of the projection that produced the report (identity for
    /// the Euclidean kernel, Ω_S for the covariance-metric kernel).
    pub objective_value: f64,
    /// Solver iterations (bisection steps or active-set iterations).
    pub iterations: usize,
    /// Whether the metric needed an εI ridge to reach the eigenvalue floor.
    pub regularized: bool,
    /// Max violation across budget, bounds, stationarity and complementarity.
    pub kkt_residual: f64,
    /// Set by the repair operator when every selection score was zero and the
    /// fallback lowest-index active set was used.
    pub degenerate_selection: bool,
}

/// A single named constraint violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Budget { sum: f64 },
    Cardinality { active: usize, k: usize },
    Box { index: usize, weight: f64 },
    IndexOrder,
    IndexRange { index: usize, universe: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Budget { sum } => write!(f, "budget: weights sum to {sum}"),
            Violation::Cardinality { active, k } => {
                write!(f, "cardinality: {active} active assets exceed k={k}")
            }
            Violation::Box { index, weight } => {
                write!(f, "box: weight {weight} at index {index} outside bounds")
            }
            Violation::IndexOrder => write!(f, "active indices not distinct/sorted"),
            Violation::IndexRange { index, universe } => {
                write!(f, "index {index} outside universe of size {universe}")
            }
        }
    }
}

/// Outcome of the feasibility predicate: `ok` plus the list of failed constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Check budget, cardinality and box constraints for `p` against `c` on a
/// universe of `n` assets. Budget is checked within 1e-8, bounds within 1e-10.
pub fn is_feasible(p: &Portfolio, c: &ConstraintSet, n: usize) -> Feasibility {
    let mut violations = Vec::new();

    if p.active.windows(2).any(|w| w[0] >= w[1]) {
        violations.push(Violation::IndexOrder);
    }
    for &i in &p.active {
        if i >= n {
            violations.push(Violation::IndexRange { index: i, universe: n });
        }
    }
    if p.active.len() > c.k {
        violations.push(Violation::Cardinality { active: p.active.len(), k: c.k });
    }
    let sum: f64 = p.weights.iter().sum();
    if (sum - 1.0).abs() > BUDGET_TOL {
        violations.push(Violation::Budget { sum });
    }
    for (&i, &w) in p.active.iter().zip(&p.weights) {
        if w < c.lower - BOX_TOL || w > c.upper + BOX_TOL {
            violations.push(Violation::Box { index: i, weight: w });
        }
    }

    Feasibility { ok: violations.is_empty(), violations }
}

/// Euclidean projection of `z` onto `{w : Σ w_i = 1, ℓ ≤ w_i ≤ u}` by
/// bisection on the threshold τ in `w_i = clip(z_i − τ, ℓ, u)`.
///
/// The map τ ↦ Σ clip(z_i − τ) is non-increasing and brackets 1 on
/// `[min(z) − u, max(z) − ℓ]`; bisection stops when the bracket is below
/// 1e-12 or the budget error is below `tol`.
pub fn project_simplex_box(z: &[f64], lower: f64, upper: f64, tol: f64) -> Result<Vec<f64>> {
    let (w, _iters) = project_simplex_box_with_iters(z, lower, upper, tol)?;
    Ok(w)
}

pub(crate) fn project_simplex_box_with_iters(
    z: &[f64],
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<(Vec<f64>, usize)> {
    let k = z.len();
    let c = ConstraintSet::new(k.max(1), lower, upper)?;
    if k == 0 {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be > 0".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("input contains non-finite entries".into()));
    }
    let kf = k as f64;
    // Degenerate boxes admit exactly one point.
    if (kf * c.lower - 1.0).abs() <= 1e-12 {
        return Ok((vec![c.lower; k], 0));
    }
    if (kf * c.upper - 1.0).abs() <= 1e-12 {
        return Ok((vec![c.upper; k], 0));
    }

    let clip_sum = |tau: f64| -> f64 {
        z.iter().map(|&zi| (zi - tau).clamp(c.lower, c.upper)).sum()
    };

    let zmin = z.iter().cloned().fold(f64::MAX, f64::min);
    let zmax = z.iter().cloned().fold(f64::MIN, f64::max);
    let mut lo = zmin - c.upper; // sum here is k·u ≥ 1
    let mut hi = zmax - c.lower; // sum here is k·ℓ ≤ 1

    let mut iters = 0;
    let mut tau = 0.5 * (lo + hi);
    while hi - lo > 1e-12 {
        iters += 1;
        tau = 0.5 * (lo + hi);
        let s = clip_sum(tau);
        if (s - 1.0).abs() < tol {
            break;
        }
        if s > 1.0 {
            lo = tau;
        } else {
            hi = tau;
        }
    }

    let mut w: Vec<f64> = z.iter().map(|&zi| (zi - tau).clamp(c.lower, c.upper)).collect();
    snap_bounds(&mut w, c.lower, c.upper);
    Ok((w, iters))
}

/// Snap entries within round-off of a bound onto the bound exactly.
fn snap_bounds(w: &mut [f64], lower: f64, upper: f64) {
    for v in w.iter_mut() {
        if (*v - lower).abs() < BOUND_SNAP {
            *v = lower;
        } else if (*v - upper).abs() < BOUND_SNAP {
            *v = upper;
        }
    }
}

/// Projection of `z` under the metric `½(w−z)ᵀΩ(w−z)` onto the
/// box-constrained simplex. `Ω` is symmetrized first and ridged with εI when
/// its smallest eigenvalue is below 1e-8, which sets the `regularized` flag
/// in the report.
pub fn project_omega(
    z: &[f64],
    omega: &Array2<f64>,
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<(Vec<f64>, QpReport)> {
    solve_box_simplex_qp(omega, z, None, lower, upper, tol)
}

/// [`project_omega`] taking the metric as a k×k row-major flat buffer,
/// for callers without a matrix type (the C ABI in particular).
pub fn project_omega_flat(
    z: &[f64],
    omega_row_major: &[f64],
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<(Vec<f64>, QpReport)> {
    let k = z.len();
    if omega_row_major.len() != k * k {
        return Err(Error::InvalidArgument(format!(
            "metric must hold {}×{} entries, got {}",
            k,
            k,
            omega_row_major.len()
        )));
    }
    let omega = Array2::from_shape_vec((k, k), omega_row_major.to_vec())
        .map_err(|e| Error::InvalidArgument(format!("bad metric shape: {e}")))?;
    project_omega(z, &omega, lower, upper, tol)
}

/// Minimum eigenvalue floor applied to the QP metric.
const EIG_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum BoundState {
    Free,
    AtLower,
    AtUpper,
}

/// Solve `min ½(w−z)ᵀQ(w−z) + linᵀw  s.t. Σw = 1, ℓ ≤ w ≤ u` with a primal
/// active-set method. The optional `lin` term carries the return-regularized
/// variant; `None` gives the pure metric projection.
///
/// The reported `objective_value` is the quadratic part ½(w−z)ᵀQ(w−z).
pub(crate) fn solve_box_simplex_qp(
    q_in: &Array2<f64>,
    z: &[f64],
    lin: Option<&[f64]>,
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<(Vec<f64>, QpReport)> {
    let k = z.len();
    if q_in.nrows() != k || q_in.ncols() != k {
        return Err(Error::InvalidArgument(format!(
            "metric must be {k}×{k}, got {}×{}",
            q_in.nrows(),
            q_in.ncols()
        )));
    }
    if let Some(l) = lin {
        if l.len() != k {
            return Err(Error::InvalidArgument("linear term length mismatch".into()));
        }
    }
    let c = ConstraintSet::new(k, lower, upper)?;
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be > 0".into()));
    }

    let mut q = linalg::symmetrize(q_in);
    let eig = linalg::sym_eigenvalues(&q);
    let min_eig = eig[0];
    let max_eig = eig[eig.len() - 1];
    let mut regularized = false;
    if min_eig < EIG_FLOOR {
        let ridge = EIG_FLOOR - min_eig;
        for i in 0..k {
            q[[i, i]] += ridge;
        }
        regularized = true;
    }

    let lin_vec = lin.map(|l| l.to_vec()).unwrap_or_else(|| vec![0.0; k]);

    // Degenerate box: single feasible point.
    if c.upper - c.lower < 1e-15 {
        let w = vec![c.lower; k];
        let report = make_report(&q, z, &lin_vec, &w, &c, 0, regularized);
        return Ok((w, report));
    }

    // Feasible warm start from the Euclidean kernel.
    let (mut w, _) = project_simplex_box_with_iters(z, c.lower, c.upper, tol.min(1e-10))?;
    let mut state: Vec<BoundState> = w
        .iter()
        .map(|&wi| {
            if wi <= c.lower {
                BoundState::AtLower
            } else if wi >= c.upper {
                BoundState::AtUpper
            } else {
                BoundState::Free
            }
        })
        .collect();

    let gradient = |w: &[f64]| -> Vec<f64> {
        let mut g = linalg::mat_vec(&q, w);
        let qz = linalg::mat_vec(&q, z);
        for i in 0..k {
            g[i] = g[i] - qz[i] + lin_vec[i];
        }
        g
    };

    let max_iter = 50 * k.max(1);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let free: Vec<usize> =
            (0..k).filter(|&i| state[i] == BoundState::Free).collect();

        if free.is_empty() {
            // All at bounds; from a feasible point the budget already holds.
            if !release_worst(&q, z, &lin_vec, &w, &mut state, tol) {
                converged = true;
                break;
            }
            continue;
        }

        // Equality-constrained subproblem on the free set:
        //   [Q_FF  1] [w_F]   [ (Qz)_F − Q_FB w_B − lin_F ]
        //   [1ᵀ    0] [ ν ] = [ 1 − Σ_B w_B               ]
        let nf = free.len();
        let mut kkt = Array2::zeros((nf + 1, nf + 1));
        let mut rhs = vec![0.0; nf + 1];
        let qz = linalg::mat_vec(&q, z);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[[a, b]] = q[[i, j]];
            }
            kkt[[a, nf]] = 1.0;
            kkt[[nf, a]] = 1.0;
            let mut cross = 0.0;
            for j in 0..k {
                if state[j] != BoundState::Free {
                    cross += q[[i, j]] * w[j];
                }
            }
            rhs[a] = qz[i] - cross - lin_vec[i];
        }
        let fixed_sum: f64 = (0..k)
            .filter(|&j| state[j] != BoundState::Free)
            .map(|j| w[j])
            .sum();
        rhs[nf] = 1.0 - fixed_sum;

        let sol = linalg::solve_dense(&kkt, &rhs)?;

        // Step toward the subproblem optimum, stopping at the first bound hit.
        let mut step = 1.0;
        let mut blocking: Option<(usize, BoundState)> = None;
        let mut max_move = 0.0f64;
        for (a, &i) in free.iter().enumerate() {
            let p = sol[a] - w[i];
            max_move = max_move.max(p.abs());
            if p > 1e-15 {
                let room = (c.upper - w[i]) / p;
                if room < step {
                    step = room;
                    blocking = Some((i, BoundState::AtUpper));
                }
            } else if p < -1e-15 {
                let room = (c.lower - w[i]) / p;
                if room < step {
                    step = room;
                    blocking = Some((i, BoundState::AtLower));
                }
            }
        }

        if max_move <= 1e-13 {
            // At the subproblem optimum; check bound multipliers.
            if !release_worst(&q, z, &lin_vec, &w, &mut state, tol) {
                converged = true;
                break;
            }
            continue;
        }

        for (a, &i) in free.iter().enumerate() {
            w[i] += step * (sol[a] - w[i]);
        }
        if let Some((i, bound)) = blocking {
            w[i] = match bound {
                BoundState::AtLower => c.lower,
                BoundState::AtUpper => c.upper,
                BoundState::Free => unreachable!(),
            };
            state[i] = bound;
        }
        snap_bounds(&mut w, c.lower, c.upper);
        for i in 0..k {
            if state[i] == BoundState::Free {
                if w[i] == c.lower {
                    state[i] = BoundState::AtLower;
                } else if w[i] == c.upper {
                    state[i] = BoundState::AtUpper;
                }
            }
        }
    }

    if !converged {
        // Projected-gradient fallback with step 1/λmax.
        let lmax = max_eig.max(EIG_FLOOR);
        let step = 1.0 / lmax;
        let mut best = w.clone();
        let mut best_resid = kkt_residual(&q, z, &lin_vec, &w, &c);
        for _ in 0..20_000 {
            iterations += 1;
            let g = gradient(&w);
            let moved: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            w = project_simplex_box(&moved, c.lower, c.upper, tol.min(1e-10))?;
            let resid = kkt_residual(&q, z, &lin_vec, &w, &c);
            if resid < best_resid {
                best_resid = resid;
                best = w.clone();
            }
            if resid <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                iterations,
                residual: best_resid,
                best,
            });
        }
        w = best;
    }

    snap_bounds(&mut w, c.lower, c.upper);
    let report = make_report(&q, z, &lin_vec, &w, &c, iterations, regularized);
    if report.kkt_residual > tol.max(1e-7) {
        return Err(Error::Convergence {
            iterations,
            residual: report.kkt_residual,
            best: w,
        });
    }
    Ok((w, report))
}

fn make_report(
    q: &Array2<f64>,
    z: &[f64],
    lin: &[f64],
    w: &[f64],
    c: &ConstraintSet,
    iterations: usize,
    regularized: bool,
) -> QpReport {
    let diff: Vec<f64> = w.iter().zip(z).map(|(a, b)| a - b).collect();
    let objective_value = 0.5 * linalg::quad_form(q, &diff);
    QpReport {
        objective_value,
        iterations,
        regularized,
        kkt_residual: kkt_residual(q, z, lin, w, c),
        degenerate_selection: false,
    }
}

/// Max KKT violation: budget error, bound violations, stationarity on free
/// coordinates and complementarity sign conditions at active bounds. The
/// equality multiplier ν is recovered from the free coordinates when any
/// exist, otherwise from the feasible interval the bounds imply.
fn kkt_residual(q: &Array2<f64>, z: &[f64], lin: &[f64], w: &[f64], c: &ConstraintSet) -> f64 {
    let k = w.len();
    let mut g = linalg::mat_vec(q, w);
    let qz = linalg::mat_vec(q, z);
    for i in 0..k {
        g[i] = g[i] - qz[i] + lin[i];
    }

    let interior: Vec<usize> = (0..k)
        .filter(|&i| w[i] > c.lower + BOX_TOL && w[i] < c.upper - BOX_TOL)
        .collect();
    let nu = if !interior.is_empty() {
        -interior.iter().map(|&i| g[i]).sum::<f64>() / interior.len() as f64
    } else {
        // ν must satisfy ν ≥ −g_i at lower bounds and ν ≤ −g_i at upper bounds.
        let lo = (0..k)
            .filter(|&i| w[i] <= c.lower + BOX_TOL)
            .map(|i| -g[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = (0..k)
            .filter(|&i| w[i] >= c.upper - BOX_TOL)
            .map(|i| -g[i])
            .fold(f64::INFINITY, f64::min);
        if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            0.0
        }
    };

    let mut resid = (w.iter().sum::<f64>() - 1.0).abs();
    for i in 0..k {
        resid = resid.max(c.lower - w[i]).max(w[i] - c.upper);
        let s = g[i] + nu;
        if w[i] <= c.lower + BOX_TOL {
            resid = resid.max(-s); // multiplier at a floor must be ≥ 0
        } else if w[i] >= c.upper - BOX_TOL {
            resid = resid.max(s); // multiplier at a cap must be ≥ 0
        } else {
            resid = resid.max(s.abs());
        }
    }
    resid.max(0.0)
}

/// Release the bound with the most negative multiplier. Returns false when
/// all multipliers are acceptable (KKT holds).
fn release_worst(
    q: &Array2<f64>,
    z: &[f64],
    lin: &[f64],
    w: &[f64],
    state: &mut [BoundState],
    tol: f64,
) -> bool {
    let k = w.len();
    let mut g = linalg::mat_vec(q, w);
    let qz = linalg::mat_vec(q, z);
    for i in 0..k {
        g[i] = g[i] - qz[i] + lin[i];
    }
    let free: Vec<usize> = (0..k).filter(|&i| state[i] == BoundState::Free).collect();
    let nu = if !free.is_empty() {
        -free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64
    } else {
        let lo = (0..k)
            .filter(|&i| state[i] == BoundState::AtLower)
            .map(|i| -g[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = (0..k)
            .filter(|&i| state[i] == BoundState::AtUpper)
            .map(|i| -g[i])
            .fold(f64::INFINITY, f64::min);
        if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo
        } else {
            hi
        }
    };

    let mut worst = -tol.max(1e-12);
    let mut worst_idx = None;
    for i in 0..k {
        let mult = match state[i] {
            BoundState::AtLower => g[i] + nu,
            BoundState::AtUpper => -(g[i] + nu),
            BoundState::Free => continue,
        };
        if mult < worst {
            worst = mult;
            worst_idx = Some(i);
        }
    }
    match worst_idx {
        Some(i) => {
            state[i] = BoundState::Free;
            true
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force grid minimizer of a k≤3 objective over the box-constrained
    /// simplex. For k=3 the scan refines coarse-to-fine, which is exact up to
    /// the final resolution because the objectives here are convex.
    pub(crate) fn grid_minimize<F: Fn(&[f64]) -> f64>(
        k: usize,
        lower: f64,
        upper: f64,
        resolution: f64,
        f: F,
    ) -> (Vec<f64>, f64, f64) {
        assert!(k == 2 || k == 3, "oracle supports k=2 and k=3 only");
        match k {
            2 => grid_minimize_2(lower, upper, resolution, &f),
            _ => grid_minimize_3(lower, upper, resolution, &f),
        }
    }

    /// 1-D scan over w = (t, 1−t). Returns (argmin, min, one-cell objective gap).
    fn grid_minimize_2<F: Fn(&[f64]) -> f64>(
        lower: f64,
        upper: f64,
        resolution: f64,
        f: &F,
    ) -> (Vec<f64>, f64, f64) {
        let t_lo = lower.max(1.0 - upper);
        let t_hi = upper.min(1.0 - lower);
        let steps = ((t_hi - t_lo) / resolution).ceil() as usize;
        let mut best = (vec![t_lo, 1.0 - t_lo], f(&[t_lo, 1.0 - t_lo]));
        let mut values = Vec::with_capacity(steps + 1);
        values.push(best.1);
        for s in 1..=steps {
            let t = (t_lo + s as f64 * resolution).min(t_hi);
            let w = vec![t, 1.0 - t];
            let v = f(&w);
            values.push(v);
            if v < best.1 {
                best = (w, v);
            }
        }
        let arg = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let mut cell_gap = 0.0f64;
        if arg > 0 {
            cell_gap = cell_gap.max(values[arg - 1] - values[arg]);
        }
        if arg + 1 < values.len() {
            cell_gap = cell_gap.max(values[arg + 1] - values[arg]);
        }
        (best.0, best.1, cell_gap)
    }

    /// 2-D scan over (w1, w2) with w3 = 1 − w1 − w2, refined coarse-to-fine
    /// down to `resolution`.
    fn grid_minimize_3<F: Fn(&[f64]) -> f64>(
        lower: f64,
        upper: f64,
        resolution: f64,
        f: &F,
    ) -> (Vec<f64>, f64, f64) {
        let scan = |lo1: f64, hi1: f64, lo2: f64, hi2: f64, res: f64| -> (Vec<f64>, f64) {
            let mut best: Option<(Vec<f64>, f64)> = None;
            let n1 = ((hi1 - lo1) / res).ceil() as usize;
            let n2 = ((hi2 - lo2) / res).ceil() as usize;
            for i in 0..=n1 {
                let w1 = (lo1 + i as f64 * res).min(hi1);
                for j in 0..=n2 {
                    let w2 = (lo2 + j as f64 * res).min(hi2);
                    let w3 = 1.0 - w1 - w2;
                    if w3 < lower - 1e-12 || w3 > upper + 1e-12 {
                        continue;
                    }
                    let w = vec![w1, w2, w3];
                    let v = f(&w);
                    if best.as_ref().is_none_or(|b| v < b.1) {
                        best = Some((w, v));
                    }
                }
            }
            best.expect("non-empty feasible grid")
        };

        let mut res = ((upper - lower) / 40.0).max(resolution);
        let (mut arg, mut val) = scan(lower, upper, lower, upper, res);
        while res > resolution {
            let next = (res / 10.0).max(resolution);
            let lo1 = (arg[0] - 2.0 * res).max(lower);
            let hi1 = (arg[0] + 2.0 * res).min(upper);
            let lo2 = (arg[1] - 2.0 * res).max(lower);
            let hi2 = (arg[1] + 2.0 * res).min(upper);
            let (a, v) = scan(lo1, hi1, lo2, hi2, next);
            if v < val {
                arg = a;
                val = v;
            }
            res = next;
        }

        // One-cell objective variation at the grid minimum.
        let mut cell_gap = 0.0f64;
        for d1 in [-1.0, 0.0, 1.0] {
            for d2 in [-1.0, 0.0, 1.0] {
                let w1 = (arg[0] + d1 * resolution).clamp(lower, upper);
                let w2 = (arg[1] + d2 * resolution).clamp(lower, upper);
                let w3 = 1.0 - w1 - w2;
                if w3 < lower - 1e-12 || w3 > upper + 1e-12 {
                    continue;
                }
                cell_gap = cell_gap.max(f(&[w1, w2, w3]) - val);
            }
        }
        (arg, val, cell_gap)
    }

    fn euclid_obj(w: &[f64], z: &[f64]) -> f64 {
        w.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[test]
    fn simplex_feasible_point_unchanged() {
        let w = project_simplex_box(&[0.5, 0.5], 0.0, 1.0, 1e-10).unwrap();
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn simplex_clips_to_endpoint() {
        let w = project_simplex_box(&[10.0, 0.0], 0.0, 1.0, 1e-10).unwrap();
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(w[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn simplex_matches_grid_oracle_on_fixture() {
        let z = [0.8, 0.6, 0.2];
        let w = project_simplex_box(&z, 0.0, 1.0, 1e-10).unwrap();
        let (_, oracle_val, cell_gap) =
            grid_minimize(3, 0.0, 1.0, 1e-4, |w| euclid_obj(w, &z));
        let got = euclid_obj(&w, &z);
        assert!(got <= oracle_val + 1e-9, "projection beaten by grid: {got} vs {oracle_val}");
        assert!(oracle_val - got <= cell_gap + 1e-12);
        // Analytic solution: shift by mean excess (0.8+0.6+0.2-1)/3 = 0.2.
        assert_relative_eq!(w[0], 0.6, epsilon = 1e-8);
        assert_relative_eq!(w[1], 0.4, epsilon = 1e-8);
        assert_relative_eq!(w[2], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn simplex_rejects_empty_box() {
        assert!(project_simplex_box(&[0.1, 0.2], 0.0, 0.4, 1e-10).is_err());
        assert!(project_simplex_box(&[0.1, 0.2], 0.6, 1.0, 1e-10).is_err());
    }

    #[test]
    fn simplex_degenerate_box_single_point() {
        let w = project_simplex_box(&[9.0, -3.0], 0.5, 0.5, 1e-10).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn omega_identity_reduces_to_euclidean() {
        let z = [0.9, -0.3, 0.7];
        let eye = Array2::eye(3);
        let (w_omega, _) = project_omega(&z, &eye, 0.0, 1.0, 1e-10).unwrap();
        let w_euc = project_simplex_box(&z, 0.0, 1.0, 1e-10).unwrap();
        for (a, b) in w_omega.iter().zip(&w_euc) {
            assert!((a - b).abs() < 1e-6, "identity metric must match Euclidean");
        }
    }

    #[test]
    fn omega_feasible_point_is_fixed() {
        let z = [0.4, 0.6];
        let omega = array![[0.04, 0.01], [0.01, 0.09]];
        let (w, report) = project_omega(&z, &omega, 0.0, 1.0, 1e-10).unwrap();
        assert_relative_eq!(w[0], 0.4, epsilon = 1e-8);
        assert_relative_eq!(w[1], 0.6, epsilon = 1e-8);
        assert!(report.objective_value < 1e-15);
    }

    #[test]
    fn omega_matches_line_scan_fixture() {
        // min ½(w−z)ᵀΩ(w−z) over w=(t,1−t), t∈[0,1].
        let z = [0.9, 0.4];
        let omega = array![[0.04, 0.03], [0.03, 0.09]];
        let (w, report) = project_omega(&z, &omega, 0.0, 1.0, 1e-10).unwrap();
        let obj = |w: &[f64]| {
            let d = [w[0] - z[0], w[1] - z[1]];
            0.5 * linalg::quad_form(&omega, &d)
        };
        let (arg, val, _) = grid_minimize(2, 0.0, 1.0, 1e-6, obj);
        assert!(report.objective_value <= val + 1e-12);
        assert!((w[0] - arg[0]).abs() < 1e-4, "argmin mismatch: {w:?} vs {arg:?}");
        assert!(report.kkt_residual <= 1e-8);
    }

    #[test]
    fn omega_regularizes_singular_metric() {
        // Rank-1 metric triggers the eigenvalue floor.
        let omega = array![[0.04, 0.04], [0.04, 0.04]];
        let (_, report) = project_omega(&[0.9, 0.4], &omega, 0.0, 1.0, 1e-10).unwrap();
        assert!(report.regularized);
    }

    #[test]
    fn omega_objective_never_worse_than_euclidean_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let k = 3;
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..3.0)).collect();
            let omega = random_spd(&mut rng, k);
            let (w_omega, rep) = project_omega(&z, &omega, 0.0, 1.0, 1e-10).unwrap();
            let w_euc = project_simplex_box(&z, 0.0, 1.0, 1e-10).unwrap();
            let d_omega: Vec<f64> = w_omega.iter().zip(&z).map(|(a, b)| a - b).collect();
            let d_euc: Vec<f64> = w_euc.iter().zip(&z).map(|(a, b)| a - b).collect();
            let f_omega = 0.5 * linalg::quad_form(&omega, &d_omega);
            let f_euc = 0.5 * linalg::quad_form(&omega, &d_euc);
            assert!(
                f_omega <= f_euc + 1e-9,
                "Ω-minimizer beaten in Ω-distance: {f_omega} vs {f_euc} (resid {})",
                rep.kkt_residual
            );
        }
    }

    pub(crate) fn random_spd(rng: &mut ChaCha8Rng, k: usize) -> Array2<f64> {
        let mut a = Array2::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                a[[i, j]] = rng.random_range(-0.3..0.3);
            }
        }
        let mut spd = Array2::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a[[i, l]] * a[[j, l]];
                }
                spd[[i, j]] = acc;
            }
            spd[[i, i]] += rng.random_range(0.005..0.05);
        }
        spd
    }

    #[test]
    fn feasibility_reports_named_violations() {
        let c = ConstraintSet::new(2, 0.02, 0.8).unwrap();
        let good = Portfolio::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
        assert!(is_feasible(&good, &c, 2).ok);

        let bad_budget = Portfolio::new(vec![0, 1], vec![0.5, 0.49]).unwrap();
        let f = is_feasible(&bad_budget, &c, 2);
        assert!(!f.ok);
        assert!(matches!(f.violations[0], Violation::Budget { .. }));

        let bad_card = Portfolio::new(vec![0, 1, 2], vec![0.4, 0.3, 0.3]).unwrap();
        let f = is_feasible(&bad_card, &c, 3);
        assert!(!f.ok);
        assert!(f
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Cardinality { .. })));
    }

    #[test]
    fn constraint_set_validation() {
        assert!(ConstraintSet::new(0, 0.0, 1.0).is_err());
        assert!(ConstraintSet::new(2, 0.6, 1.0).is_err()); // 2·0.6 > 1
        assert!(ConstraintSet::new(3, 0.0, 0.2).is_err()); // 3·0.2 < 1
        assert!(ConstraintSet::new(3, 0.02, 0.5).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn simplex_output_always_feasible(
            z in proptest::collection::vec(-10.0f64..10.0, 2..10),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = z.len() as f64;
            let lower = rng.random_range(0.0..(0.9 / k));
            let upper = rng.random_range((1.05 / k)..1.0);
            let w = project_simplex_box(&z, lower, upper, 1e-10).unwrap();
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-8);
            for &wi in &w {
                prop_assert!(wi >= lower - 1e-10 && wi <= upper + 1e-10);
            }
        }

        #[test]
        fn simplex_idempotent(z in proptest::collection::vec(-5.0f64..5.0, 2..8)) {
            let w1 = project_simplex_box(&z, 0.0, 1.0, 1e-10).unwrap();
            let w2 = project_simplex_box(&w1, 0.0, 1.0, 1e-10).unwrap();
            for (a, b) in w1.iter().zip(&w2) {
                prop_assert!((a - b).abs() <= 2e-10);
            }
        }

        #[test]
        fn simplex_translation_invariant(
            z in proptest::collection::vec(-3.0f64..3.0, 2..8),
            shift in -5.0f64..5.0,
        ) {
            let w1 = project_simplex_box(&z, 0.0, 1.0, 1e-12).unwrap();
            let zs: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let w2 = project_simplex_box(&zs, 0.0, 1.0, 1e-12).unwrap();
            for (a, b) in w1.iter().zip(&w2) {
                prop_assert!((a - b).abs() <= 1e-7);
            }
        }

        #[test]
        fn omega_output_always_feasible(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.random_range(2..6usize);
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-50.0..50.0)).collect();
            let omega = random_spd(&mut rng, k);
            let (w, _) = project_omega(&z, &omega, 0.0, 1.0, 1e-10).unwrap();
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-8);
            for &wi in &w {
                prop_assert!((-1e-10..=1.0 + 1e-10).contains(&wi));
            }
        }

        #[test]
        fn omega_idempotent(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(977));
            let k = rng.random_range(2..5usize);
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let omega = random_spd(&mut rng, k);
            let (w1, _) = project_omega(&z, &omega, 0.0, 1.0, 1e-10).unwrap();
            let (w2, _) = project_omega(&w1, &omega, 0.0, 1.0, 1e-10).unwrap();
            for (a, b) in w1.iter().zip(&w2) {
                prop_assert!((a - b).abs() <= 1e-7);
            }
        }

        #[test]
        fn omega_scaling_metric_matches_euclidean(
            scale in 0.01f64..100.0,
            seed in 0u64..200,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(31));
            let k = 4usize;
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let eye: Array2<f64> = Array2::eye(k) * scale;
            let (w_omega, _) = project_omega(&z, &eye, 0.0, 1.0, 1e-10).unwrap();
            let w_euc = project_simplex_box(&z, 0.0, 1.0, 1e-10).unwrap();
            for (a, b) in w_omega.iter().zip(&w_euc) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
