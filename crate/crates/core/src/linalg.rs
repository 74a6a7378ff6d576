//! Dense row-major matrices and Cholesky factorization.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize) -> Self {
        DenseMatrix { rows, data: vec![0.0; rows * rows] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.rows + j]
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.rows + j] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.rows + j] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.rows;
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *o = acc;
        }
        out
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(&self.mul_vec(x), x)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m: f64, v| m.max(math::abs(*v)))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                m = m.max(math::abs(self.get(i, j) - self.get(j, i)));
            }
        }
        m
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm2(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Lower-triangular factor L with A = L L^T.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows;
        let mut l = DenseMatrix::zeros(n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                let v = l.get(j, k);
                d -= v * v;
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { min_eigenvalue: d });
            }
            let djj = math::sqrt(d);
            l.set(j, j, djj);
            for i in (j + 1)..n {
                let mut v = a.get(i, j);
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    v -= l.data[ri + k] * l.data[rj + k];
                }
                l.set(i, j, v / djj);
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut v = y[i];
            for k in 0..i {
                v -= self.l.get(i, k) * y[k];
            }
            y[i] = v / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= self.l.get(k, i) * y[k];
            }
            y[i] = v / self.l.get(i, i);
        }
        y
    }
}

/// Extreme eigenvalues of the pencil (A, B) with B SPD, by power iteration on
/// B^{-1} A and on its inverse. Returns (min, max).
pub fn pencil_extremes(a: &DenseMatrix, b: &DenseMatrix, iters: usize) -> Result<(f64, f64)> {
    let ca = Cholesky::factor(a)?;
    let cb = Cholesky::factor(b)?;
    let n = a.rows;
    let rayleigh = |x: &[f64]| a.quad_form(x) / b.quad_form(x);
    let mut x = vec![1.0; n];
    for (i, v) in x.iter_mut().enumerate() {
        *v += 0.1 * ((i * 7 % 11) as f64);
    }
    let mut y = x.clone();
    for _ in 0..iters {
        let z = cb.solve(&a.mul_vec(&x));
        let s = norm2(&z);
        x = z.into_iter().map(|v| v / s).collect();
        let z = ca.solve(&b.mul_vec(&y));
        let s = norm2(&z);
        y = z.into_iter().map(|v| v / s).collect();
    }
    Ok((rayleigh(&y), rayleigh(&x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves() {
        let mut a = DenseMatrix::zeros(3);
        let vals = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        a.data.copy_from_slice(&vals);
        let c = Cholesky::factor(&a).unwrap();
        let x = c.solve(&[1.0, 2.0, 3.0]);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
        a.set(2, 2, -1.0);
        assert!(Cholesky::factor(&a).is_err());
    }
}
