//! Small dense least-squares helpers used by the coefficient proposals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Diagonal jitter, relative to the mean diagonal, tried once when the
/// normal equations are not numerically positive definite.
pub const RIDGE_JITTER: f64 = 1e-8;

/// Solves `gram * beta = rhs` for a symmetric positive semi-definite `gram`.
pub fn solve_normal_equations(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let dim = gram.nrows();
    if dim == 0 {
        return Ok(DVector::zeros(0));
    }
    if let Some(ch) = gram.clone().cholesky() {
        let sol = ch.solve(rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return Ok(sol);
        }
    }
    let scale = (gram.trace() / dim as f64).max(1.0);
    let mut jittered = gram;
    for i in 0..dim {
        jittered[(i, i)] += RIDGE_JITTER * scale;
    }
    let ch = jittered.cholesky().ok_or(Error::Singular { dim })?;
    let sol = ch.solve(rhs);
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(Error::Singular { dim })
    }
}

/// Ordinary least squares of `response` on the columns of `design`.
pub fn least_squares(design: &DMatrix<f64>, response: &[f64]) -> Result<DVector<f64>> {
    if design.nrows() != response.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, response has {}",
            design.nrows(),
            response.len()
        )));
    }
    let y = DVector::from_column_slice(response);
    solve_normal_equations(design.tr_mul(design), &design.tr_mul(&y))
}

/// Gram matrix of column vectors.
pub fn gram_of(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let d = cols.len();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v = dot(&cols[i], &cols[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

pub fn cross_of(cols: &[Vec<f64>], r: &[f64]) -> DVector<f64> {
    DVector::from_iterator(cols.len(), cols.iter().map(|c| dot(c, r)))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||r - sum_c coef[c] * cols[c]||^2`.
pub fn residual_ss(r: &[f64], cols: &[Vec<f64>], coef: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..r.len() {
        let mut f = r[i];
        for (c, col) in cols.iter().enumerate() {
            f -= coef[c] * col[i];
        }
        acc += f * f;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_coefficients() {
        let x = DMatrix::from_fn(10, 3, |i, j| ((i + 1) as f64).powi(j as i32));
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = &x * &beta;
        let fit = least_squares(&x, y.as_slice()).unwrap();
        assert!((fit - beta).amax() < 1e-8);
    }

    #[test]
    fn duplicated_column_falls_back_to_ridge() {
        let x = DMatrix::from_fn(6, 2, |i, _| i as f64 + 1.0);
        let y: Vec<f64> = (0..6).map(|i| 2.0 * (i as f64 + 1.0)).collect();
        let fit = least_squares(&x, &y).unwrap();
        assert!((fit[0] + fit[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn non_finite_system_is_singular() {
        let mut x = DMatrix::zeros(4, 2);
        x[(0, 0)] = f64::NAN;
        assert!(matches!(least_squares(&x, &[1.0; 4]), Err(Error::Singular { .. })));
    }
}
