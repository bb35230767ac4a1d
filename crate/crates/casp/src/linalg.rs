//! Small dense linear-algebra helpers used by the projection kernels and
//! the covariance estimator. Problem sizes here are desk scale (K up to a
//! few dozen, N up to a few hundred), so plain cyclic Jacobi and Gaussian
//! elimination are simple and more than fast enough.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
///
/// Returns the eigenvalues sorted ascending. The input is not required to be
/// exactly symmetric; it is symmetrized first.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a[[0, 0]]];
    }

    let mut m = symmetrize(a);
    let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = 1e-14 * norm.max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable choice of the smaller rotation angle.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let aip = m[[i, p]];
                    let aiq = m[[i, q]];
                    m[[i, p]] = c * aip - s * aiq;
                    m[[i, q]] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = m[[p, i]];
                    let aqi = m[[q, i]];
                    m[[p, i]] = c * api - s * aqi;
                    m[[q, i]] = s * api + c * aqi;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// Condition number of a symmetric positive semidefinite matrix
/// (ratio of largest to smallest eigenvalue magnitude).
pub fn condition_number(a: &Array2<f64>) -> f64 {
    let eig = sym_eigenvalues(a);
    if eig.is_empty() {
        return 1.0;
    }
    let max = eig.iter().cloned().fold(f64::MIN, f64::max).abs();
    let min = eig.iter().cloned().fold(f64::MAX, f64::min).abs();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// (A + Aᵀ) / 2
pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    out
}

/// xᵀ A y for dense slices.
pub fn bilinear(x: &[f64], a: &Array2<f64>, y: &[f64]) -> f64 {
    let n = x.len();
    debug_assert_eq!(a.nrows(), n);
    debug_assert_eq!(a.ncols(), y.len());
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..y.len() {
            row += a[[i, j]] * y[j];
        }
        acc += x[i] * row;
    }
    acc
}

/// xᵀ A x
pub fn quad_form(a: &Array2<f64>, x: &[f64]) -> f64 {
    bilinear(x, a, x)
}

/// A x into a fresh vector.
pub fn mat_vec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let m = a.ncols();
    debug_assert_eq!(m, x.len());
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..m {
            acc += a[[i, j]] * x[j];
        }
        out[i] = acc;
    }
    out
}

/// Solve A x = b by Gaussian elimination with partial pivoting.
/// Consumes copies of the inputs; A must be square and nonsingular.
pub fn solve_dense(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::InvalidArgument("solve_dense: shape mismatch".into()));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();

    for col in 0..n {
        let mut pivot = col;
        let mut best = m[[col, col]].abs();
        for row in (col + 1)..n {
            let v = m[[row, col]].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return Err(Error::InvalidArgument("solve_dense: singular matrix".into()));
        }
        if pivot != col {
            for j in 0..n {
                let tmp = m[[col, j]];
                m[[col, j]] = m[[pivot, j]];
                m[[pivot, j]] = tmp;
            }
            x.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let f = m[[row, col]] / m[[col, col]];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[[row, j]] -= f * m[[col, j]];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in (col + 1)..n {
            acc -= m[[col, j]] * x[j];
        }
        x[col] = acc / m[[col, col]];
    }
    Ok(x)
}

/// Column means of a (rows × cols) matrix.
pub fn column_means(a: &Array2<f64>) -> Array1<f64> {
    let t = a.nrows() as f64;
    let mut out = Array1::zeros(a.ncols());
    for j in 0..a.ncols() {
        let mut acc = 0.0;
        for i in 0..a.nrows() {
            acc += a[[i, j]];
        }
        out[j] = acc / t;
    }
    out
}

/// Unbiased (ddof = 1) sample covariance of the columns of a (T × N) matrix.
pub fn sample_covariance(a: &Array2<f64>) -> Result<Array2<f64>> {
    let t = a.nrows();
    let n = a.ncols();
    if t < 2 {
        return Err(Error::InsufficientData(format!(
            "sample covariance needs at least 2 observations, got {t}"
        )));
    }
    let means = column_means(a);
    let mut cov = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for row in 0..t {
                acc += (a[[row, i]] - means[i]) * (a[[row, j]] - means[j]);
            }
            let v = acc / (t as f64 - 1.0);
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok(cov)
}
