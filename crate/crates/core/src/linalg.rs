//! Dense helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails when any pivot is non-positive.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::NotPositiveDefinite(format!(
            "{}x{} matrix is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite entry".into()));
    }
    let asym = (a - a.transpose()).abs().max();
    if asym > 1e-9 * a.abs().max().max(1.0) {
        return Err(Error::NotPositiveDefinite(format!("asymmetric by {asym:e}")));
    }
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("pivot {j} is {pivot:e}")));
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `L^T x = b` in place for lower-triangular `L`.
pub fn backward_substitute_transpose(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `y = L z` for lower-triangular `L`.
pub fn lower_mul(l: &DMatrix<f64>, z: &[f64], out: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..=i {
            s += l[(i, k)] * z[k];
        }
        out[i] = s;
    }
}

/// Sample mean and (n - 1)-normalized covariance of row-major points.
pub fn mean_and_covariance<'a, I>(points: I, dim: usize) -> (DVector<f64>, DMatrix<f64>, usize)
where
    I: IntoIterator<Item = &'a [f64]> + Clone,
{
    let mut mean = DVector::<f64>::zeros(dim);
    let mut n = 0usize;
    for p in points.clone() {
        for d in 0..dim {
            mean[d] += p[d];
        }
        n += 1;
    }
    if n == 0 {
        return (mean, DMatrix::zeros(dim, dim), 0);
    }
    mean /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for p in points {
        for i in 0..dim {
            let di = p[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    for i in 0..dim {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov, n)
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = cholesky_lower(a)?;
    let n = a.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        forward_substitute(&l, &mut col);
        backward_substitute_transpose(&l, &mut col);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(symmetrize(inv))
}

pub fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]);
        let l = cholesky_lower(&a).unwrap();
        assert!((&l * l.transpose() - &a).abs().max() < 1e-12);
        let inv = spd_inverse(&a).unwrap();
        assert!((&inv * &a - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_lower(&a), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn triangular_solves() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = cholesky_lower(&a).unwrap();
        let mut b = vec![1.0, -1.0];
        forward_substitute(&l, &mut b);
        backward_substitute_transpose(&l, &mut b);
        let x = DVector::from_vec(b);
        assert!((&a * x - DVector::from_vec(vec![1.0, -1.0])).abs().max() < 1e-12);
    }
}
