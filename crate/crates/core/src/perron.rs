//! Perron eigenpairs of small nonnegative primitive matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Perron {
    pub lambda: f64,
    /// Left eigenvector, positive, scaled so that `left . right = 1`.
    pub left: Vec<f64>,
    /// Right eigenvector, positive, unit 1-norm.
    pub right: Vec<f64>,
    /// Larger of the two relative eigen-equation residuals.
    pub residual: f64,
}

const MAX_ITER: usize = 20_000;

fn apply(b: &[f64], k: usize, x: &[f64], transpose: bool, out: &mut [f64]) {
    for i in 0..k {
        let mut s = 0.0;
        for j in 0..k {
            s += if transpose { b[j * k + i] } else { b[i * k + j] } * x[j];
        }
        out[i] = s;
    }
}

fn residual(b: &[f64], k: usize, x: &[f64], lambda: f64, transpose: bool) -> f64 {
    let mut bx = vec![0.0; k];
    apply(b, k, x, transpose, &mut bx);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) * lambda.abs();
    bx.iter()
        .zip(x)
        .map(|(a, v)| (a - lambda * v).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Power iteration normalized in the 1-norm.
fn power(b: &[f64], k: usize, transpose: bool, tol: f64) -> Option<(f64, Vec<f64>)> {
    let mut x = vec![1.0 / k as f64; k];
    let mut y = vec![0.0; k];
    for _ in 0..MAX_ITER {
        apply(b, k, &x, transpose, &mut y);
        let lambda: f64 = y.iter().sum();
        if !(lambda > 0.0) || !lambda.is_finite() {
            return None;
        }
        y.iter_mut().for_each(|v| *v /= lambda);
        std::mem::swap(&mut x, &mut y);
        if residual(b, k, &x, lambda, transpose) <= tol {
            return Some((lambda, x));
        }
    }
    None
}

/// Dense fallback: largest real eigenvalue from the Schur form, then two
/// steps of inverse iteration for the vector.
fn dense(b: &[f64], k: usize, transpose: bool) -> Option<(f64, Vec<f64>)> {
    let m = DMatrix::from_fn(k, k, |i, j| if transpose { b[j * k + i] } else { b[i * k + j] });
    let lambda = m
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * z.norm().max(1.0))
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lambda > 0.0) {
        return None;
    }
    let shifted = &m - DMatrix::identity(k, k) * (lambda * (1.0 + 1e-12));
    let lu = shifted.lu();
    let mut x = nalgebra::DVector::from_element(k, 1.0);
    for _ in 0..3 {
        x = lu.solve(&x)?;
        let s: f64 = x.iter().sum();
        x /= s;
    }
    let v: Vec<f64> = x.iter().copied().collect();
    v.iter().all(|&e| e > 0.0).then_some((lambda, v))
}

fn solve_side(b: &[f64], k: usize, transpose: bool, tol: f64) -> Result<(f64, Vec<f64>)> {
    if let Some(r) = power(b, k, transpose, tol) {
        return Ok(r);
    }
    if k <= 64 {
        if let Some((lambda, v)) = dense(b, k, transpose) {
            let res = residual(b, k, &v, lambda, transpose);
            if res <= tol * 10.0 {
                return Ok((lambda, v));
            }
            return Err(Error::NonConvergence {
                what: "Perron eigen-solve (dense fallback)".into(),
                residual: res,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "Perron eigen-solve".into(),
        residual: f64::NAN,
    })
}

/// Perron root with left and right eigenvectors of a nonnegative
/// primitive `k x k` row-major matrix.
pub fn perron(b: &[f64], k: usize, tol: f64) -> Result<Perron> {
    let (_, right) = solve_side(b, k, false, tol)?;
    let (_, mut left) = solve_side(b, k, true, tol)?;
    let mut br = vec![0.0; k];
    apply(b, k, &right, false, &mut br);
    let ubv: f64 = left.iter().zip(&br).map(|(u, v)| u * v).sum();
    let uv: f64 = left.iter().zip(&right).map(|(u, v)| u * v).sum();
    let lambda = ubv / uv;
    left.iter_mut().for_each(|u| *u /= uv);
    let res = residual(b, k, &right, lambda, false).max(residual(b, k, &left, lambda, true));
    if left.iter().chain(&right).any(|&x| !(x > 0.0)) {
        return Err(Error::NonConvergence {
            what: "Perron vectors not positive".into(),
            residual: res,
        });
    }
    Ok(Perron {
        lambda,
        left,
        right,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_mean_root() {
        let p = perron(&[1.0, 1.0, 1.0, 0.0], 2, 1e-13).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p.lambda - phi).abs() < 1e-14);
        let uv: f64 = p.left.iter().zip(&p.right).map(|(a, b)| a * b).sum();
        assert!((uv - 1.0).abs() < 1e-14);
        assert!(p.residual < 1e-12);
    }

    #[test]
    fn slow_power_iteration_still_solves() {
        // second eigenvalue very close to the first in modulus
        let eps = 1e-9;
        let b = [1.0, eps, eps, 1.0 - 1e-7];
        let p = perron(&b, 2, 1e-13).unwrap();
        // (a + d)/2 + sqrt(((a - d)/2)^2 + bc), without cancellation
        let half_gap: f64 = 0.5e-7;
        let exact = (2.0 - 1e-7) / 2.0 + (half_gap * half_gap + eps * eps).sqrt();
        assert!((p.lambda - exact).abs() < 1e-12);
    }
}
