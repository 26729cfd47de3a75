//! SVD-based helpers: numeric rank, null spaces and least-norm solves.

use nalgebra::{DMatrix, DVector};

/// Result of a least-norm least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: DVector<f64>,
    pub rank: usize,
    /// Max-abs of `A x − b`.
    pub residual: f64,
}

fn padded(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() >= a.ncols() {
        a.clone()
    } else {
        // zero rows keep the row space but give a full right-singular basis
        let mut p = DMatrix::zeros(a.ncols(), a.ncols());
        p.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
        p
    }
}

/// Singular values sorted descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numeric_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn nullspace(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = padded(a).svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| !(svd.singular_values[k] > rel_tol * smax) || smax == 0.0)
        .collect();
    let mut out = DMatrix::zeros(n, cols.len());
    for (c, &k) in cols.iter().enumerate() {
        for r in 0..n {
            out[(r, c)] = vt[(k, r)];
        }
    }
    if cols.is_empty() || cols.len() == n || smax == 0.0 {
        return out;
    }
    // remove the row-space components the SVD leaves behind, then re-orthonormalize
    let full = a.clone().svd(true, true);
    let eps = rel_tol * smax;
    for _ in 0..2 {
        let r = a * &out;
        out -= full.solve(&r, eps).expect("U and V computed");
    }
    out.qr().q()
}

/// Least-norm solution of `A x ≈ b`, discarding singular values below `rel_tol · σ_max`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> LeastSquares {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return LeastSquares { x: DVector::zeros(n), rank: 0, residual: b.amax() };
    }
    // tall systems are reduced to their triangular factor first
    let (svd, qt) = if a.nrows() > n {
        let qr = a.clone().qr();
        (qr.r().svd(true, true), Some(qr.q().transpose()))
    } else {
        (a.clone().svd(true, true), None)
    };
    let solve = |rhs: &DVector<f64>, eps: f64| -> DVector<f64> {
        let rhs = match &qt {
            Some(q) => q * rhs,
            None => rhs.clone(),
        };
        svd.solve(&rhs, eps).expect("U and V computed")
    };
    let smax = svd.singular_values.max();
    let eps = rel_tol * smax;
    let rank = svd.singular_values.iter().filter(|&&v| v > eps).count();
    if smax == 0.0 {
        return LeastSquares { x: DVector::zeros(n), rank, residual: b.amax() };
    }
    let mut x = solve(b, eps);
    // iterative refinement; the SVD alone can leave residuals far above round-off
    for _ in 0..3 {
        let r = b - a * &x;
        x += solve(&r, eps);
    }
    let residual = (a * &x - b).amax();
    LeastSquares { x, rank, residual }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = nullspace(&a, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).amax() < 1e-14);
        assert!((ns.transpose() * &ns - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn least_norm_solution() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let ls = least_squares(&a, &b, 1e-12);
        assert_eq!(ls.rank, 1);
        assert!((ls.x[0] - 1.0).abs() < 1e-14 && (ls.x[1] - 1.0).abs() < 1e-14);
        assert!(ls.residual < 1e-14);
    }

    #[test]
    fn rank_of_rank_one_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        assert_eq!(numeric_rank(&m, 1e-12), 1);
    }
}
