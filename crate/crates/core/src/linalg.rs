//! Small dense linear algebra over generic scalars.

use nalgebra::DMatrix;

use crate::dual::Real;

/// Solves `a · x = b` in place (`a` row-major `n×n`, overwritten) by
/// Gaussian elimination with partial pivoting on the primal parts.
/// Returns `None` for a numerically singular matrix.
pub fn solve_in_place<S: Real>(a: &mut [S], b: &mut [S], n: usize) -> Option<()> {
    let scale = a.iter().map(|v| v.re().abs()).fold(0.0, f64::max).max(1e-300);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].re().abs().total_cmp(&a[j * n + col].re().abs()))?;
        if a[piv * n + col].re().abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            for k in col..n {
                let t = a[col * n + k];
                a[r * n + k] = a[r * n + k] - f * t;
            }
            let t = b[col];
            b[r] = b[r] - f * t;
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s = s - a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Some(())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Singular values, sorted descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}
