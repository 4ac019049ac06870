//! Column-pivoted QR least squares with rank detection.
//!
//! All estimators route through [`lstsq`]; no explicit normal-equation
//! inversion anywhere. Rank is decided by comparing pivoted R diagonals
//! against `PIVOT_TOL * max |R_ii|`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const PIVOT_TOL: f64 = 1e-10;

/// Outcome of a full-rank least-squares solve.
pub struct LstSq {
    pub coef: DVector<f64>,
    /// (X'X)^-1, reconstructed from the R factor.
    pub xtx_inv: DMatrix<f64>,
    pub rank: usize,
}

/// Solves min ||y - X b|| via column-pivoted Householder QR.
///
/// Returns `Error::RankDeficient` naming the dependent columns when the
/// numerical rank falls short of the column count. `labels` must have one
/// entry per column of `x`.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>, labels: &[String]) -> Result<LstSq> {
    let n = x.nrows();
    let k = x.ncols();
    assert_eq!(labels.len(), k, "one label per column");
    if n < k {
        return Err(Error::InvalidDesign(format!(
            "{} rows < {} columns",
            n, k
        )));
    }

    let mut a = x.clone();
    let mut q_t_y = y.clone();
    let mut perm: Vec<usize> = (0..k).collect();

    // squared norms of the trailing parts of each column
    let mut col_norms: Vec<f64> = (0..k).map(|j| a.column(j).norm_squared()).collect();

    let mut r_diag_max = 0.0f64;
    let mut rank = k;

    for j in 0..k {
        // pivot: largest remaining column norm
        let (pivot, _) = col_norms[j..]
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        let pivot = pivot + j;
        if pivot != j {
            a.swap_columns(j, pivot);
            col_norms.swap(j, pivot);
            perm.swap(j, pivot);
        }

        // Householder reflector for column j, rows j..n
        let mut v = DVector::zeros(n - j);
        for i in j..n {
            v[i - j] = a[(i, j)];
        }
        let alpha = -v[0].signum() * v.norm();
        if j == 0 {
            r_diag_max = alpha.abs();
        }
        if alpha.abs() <= PIVOT_TOL * r_diag_max.max(1e-300) {
            rank = j;
            break;
        }
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > 0.0 {
            // apply I - 2vv'/v'v to trailing columns and to y
            for c in j..k {
                let mut dot = 0.0;
                for i in j..n {
                    dot += v[i - j] * a[(i, c)];
                }
                let s = 2.0 * dot / vnorm2;
                for i in j..n {
                    a[(i, c)] -= s * v[i - j];
                }
            }
            let mut dot = 0.0;
            for i in j..n {
                dot += v[i - j] * q_t_y[i];
            }
            let s = 2.0 * dot / vnorm2;
            for i in j..n {
                q_t_y[i] -= s * v[i - j];
            }
        }
        a[(j, j)] = alpha;
        r_diag_max = r_diag_max.max(alpha.abs());

        for c in (j + 1)..k {
            col_norms[c] -= a[(j, c)] * a[(j, c)];
            if col_norms[c] < 0.0 {
                // guard against cancellation drift
                col_norms[c] = a.column(c).rows(j + 1, n - j - 1).norm_squared();
            }
        }
    }

    if rank == k {
        // re-check trailing diagonals against the tolerance
        for j in 0..k {
            if a[(j, j)].abs() <= PIVOT_TOL * r_diag_max {
                rank = j;
                break;
            }
        }
    }

    if rank < k {
        let mut cols: Vec<String> = perm[rank..].iter().map(|&j| labels[j].clone()).collect();
        cols.sort();
        return Err(Error::RankDeficient { columns: cols });
    }

    // back-substitute R b_perm = Q'y (first k rows)
    let mut b_perm = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut s = q_t_y[i];
        for c in (i + 1)..k {
            s -= a[(i, c)] * b_perm[c];
        }
        b_perm[i] = s / a[(i, i)];
    }

    // R^{-1} by back substitution on the identity
    let mut r_inv = DMatrix::zeros(k, k);
    for col in 0..k {
        let mut e = DVector::zeros(k);
        e[col] = 1.0;
        for i in (0..=col).rev() {
            let mut s = e[i];
            for c in (i + 1)..k {
                s -= a[(i, c)] * r_inv[(c, col)];
            }
            r_inv[(i, col)] = s / a[(i, i)];
        }
    }

    // (X'X)^-1 = P R^-1 R^-T P'
    let m = &r_inv * r_inv.transpose();
    let mut xtx_inv = DMatrix::zeros(k, k);
    let mut coef = DVector::zeros(k);
    for i in 0..k {
        coef[perm[i]] = b_perm[i];
        for j in 0..k {
            xtx_inv[(perm[i], perm[j])] = m[(i, j)];
        }
    }

    Ok(LstSq {
        coef,
        xtx_inv,
        rank,
    })
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via eigendecomposition,
/// dropping eigenvalues below `tol * max_eigenvalue`. Returns the inverse and a
/// flag marking whether any eigenvalue was dropped.
pub fn sym_pinv(m: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, bool) {
    let sym = nalgebra::SymmetricEigen::new(m.clone());
    let max_ev = sym
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let cutoff = tol * max_ev.max(1e-300);
    let mut dropped = false;
    let k = m.nrows();
    let mut inv = DMatrix::zeros(k, k);
    for (idx, &ev) in sym.eigenvalues.iter().enumerate() {
        if ev > cutoff {
            let v = sym.eigenvectors.column(idx);
            inv += v * v.transpose() / ev;
        } else {
            dropped = true;
        }
    }
    (inv, dropped)
}
