//! Gaussian elimination with partial pivoting restricted to the band of a
//! square matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Lower and upper bandwidth of the nonzero pattern.
pub fn bandwidths(a: &DMatrix<Complex64>) -> (usize, usize) {
    let (mut kl, mut ku) = (0, 0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)] != Complex64::new(0.0, 0.0) {
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
    }
    (kl, ku)
}

pub struct BandedSolution {
    pub x: DVector<Complex64>,
    /// `min |pivot| / max |pivot|`; zero when the matrix is singular.
    pub pivot_ratio: f64,
}

/// Solves `a x = b`. Returns `None` on an exactly zero pivot.
pub fn solve(mut a: DMatrix<Complex64>, mut b: DVector<Complex64>) -> Option<BandedSolution> {
    let n = a.nrows();
    assert!(a.is_square() && b.len() == n);
    let (kl, ku) = bandwidths(&a);
    let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);

    for k in 0..n {
        let last_row = (k + kl).min(n - 1);
        let col_end = (k + kl + ku + 1).min(n);
        let p = (k..=last_row)
            .max_by(|&i, &j| a[(i, k)].norm().total_cmp(&a[(j, k)].norm()))
            .unwrap();
        let piv = a[(p, k)].norm();
        if piv == 0.0 {
            return None;
        }
        pmin = pmin.min(piv);
        pmax = pmax.max(piv);
        if p != k {
            for j in k..col_end {
                a.swap((k, j), (p, j));
            }
            b.swap_rows(k, p);
        }
        let pivot = a[(k, k)];
        for i in k + 1..=last_row {
            let factor = a[(i, k)] / pivot;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k..col_end {
                let akj = a[(k, j)];
                a[(i, j)] -= factor * akj;
            }
            let bk = b[k];
            b[i] -= factor * bk;
        }
    }

    let mut x = DVector::zeros(n);
    for k in (0..n).rev() {
        let col_end = (k + kl + ku + 1).min(n);
        let mut s = b[k];
        for j in k + 1..col_end {
            s -= a[(k, j)] * x[j];
        }
        x[k] = s / a[(k, k)];
    }
    Some(BandedSolution {
        x,
        pivot_ratio: pmin / pmax,
    })
}
