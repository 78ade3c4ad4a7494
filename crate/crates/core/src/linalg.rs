//! Thin helpers over `faer` for the dense kernels used across the crate.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
pub fn symmetric_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| LabError::Eigensolver(format!("{e:?}")))?;
    let values: Vec<f64> = (0..a.nrows()).map(|i| evd.S()[i]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Eigensolver("non-finite eigenvalue".into()));
    }
    Ok((values, evd.U().to_owned()))
}

/// Computes `M^T x` (or `M x`) for a real matrix `M` and a batch of complex
/// columns, by splitting real and imaginary parts into one real product.
pub fn real_times_complex(m: MatRef<'_, f64>, transpose: bool, cols: &[&[C64]]) -> Vec<Vec<C64>> {
    let rows_in = if transpose { m.nrows() } else { m.ncols() };
    let rows_out = if transpose { m.ncols() } else { m.nrows() };
    let k = cols.len();
    let mut x = Mat::<f64>::zeros(rows_in, 2 * k);
    for (c, col) in cols.iter().enumerate() {
        assert_eq!(col.len(), rows_in, "column length mismatch");
        for (i, v) in col.iter().enumerate() {
            x[(i, 2 * c)] = v.re;
            x[(i, 2 * c + 1)] = v.im;
        }
    }
    let y: Mat<f64> = if transpose {
        m.transpose() * &x
    } else {
        m * &x
    };
    (0..k)
        .map(|c| {
            (0..rows_out)
                .map(|i| C64::new(y[(i, 2 * c)], y[(i, 2 * c + 1)]))
                .collect()
        })
        .collect()
}

/// `M^T x` (or `M x`) for real `M` and a real vector.
pub fn real_matvec(m: MatRef<'_, f64>, transpose: bool, x: &[f64]) -> Vec<f64> {
    let col = faer::ColRef::from_slice(x);
    let y: faer::Col<f64> = if transpose {
        m.transpose() * col
    } else {
        m * col
    };
    (0..y.nrows()).map(|i| y[i]).collect()
}

/// Solves the dense complex system `a x = b` by partially pivoted LU.
/// Returns an error when the solution is not finite or the residual is large.
pub fn solve_complex(a: &Mat<C64>, b: &[C64], what: &str) -> Result<Vec<C64>> {
    let n = a.nrows();
    let lu = a.partial_piv_lu();
    let mut rhs = Mat::<C64>::zeros(n, 1);
    for (i, v) in b.iter().enumerate() {
        rhs[(i, 0)] = *v;
    }
    let x = lu.solve(&rhs);
    let out: Vec<C64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(LabError::SingularSystem(what.to_string()));
    }
    let r = a * &x;
    let bnorm = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let rnorm = (0..n)
        .map(|i| (r[(i, 0)] - b[i]).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if rnorm > 1e-6 * bnorm {
        return Err(LabError::SingularSystem(format!(
            "{what} (relative residual {:.3e})",
            rnorm / bnorm
        )));
    }
    Ok(out)
}

/// Solves the dense real system `a x = b`.
pub fn solve_real(a: &Mat<f64>, b: &[f64], what: &str) -> Result<Vec<f64>> {
    let n = a.nrows();
    let lu = a.partial_piv_lu();
    let mut rhs = Mat::<f64>::zeros(n, 1);
    for (i, v) in b.iter().enumerate() {
        rhs[(i, 0)] = *v;
    }
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(LabError::SingularSystem(what.to_string()));
    }
    Ok(out)
}

/// Largest singular value of a complex matrix through the smaller Gram matrix.
pub fn largest_singular_value(b: &Mat<C64>) -> Result<f64> {
    if b.nrows() == 0 || b.ncols() == 0 {
        return Ok(0.0);
    }
    let gram: Mat<C64> = if b.nrows() <= b.ncols() {
        b * b.adjoint()
    } else {
        b.adjoint() * b
    };
    let vals = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LabError::Eigensolver(format!("{e:?}")))?;
    Ok(vals.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Solves a 2x2 real system; `None` when singular.
pub fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        (b[0] * a[1][1] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

/// 2-norm condition number of a 2x2 real matrix.
pub fn condition2(a: [[f64; 2]; 2]) -> f64 {
    let (p, q, r, s) = (a[0][0], a[0][1], a[1][0], a[1][1]);
    let fro2 = p * p + q * q + r * r + s * s;
    let det = (p * s - q * r).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((fro2 + disc) / 2.0).sqrt();
    let smin = det / smax;
    smax / smin
}
