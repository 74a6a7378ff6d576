//! Uniform P1 meshes of an interval with homogeneous exterior data.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::algebra::Dimension;
use crate::error::{Error, Result};
use crate::kernel::SmoothProbe;
use crate::math;
use crate::quadrature::GaussLegendre;

/// Uniform mesh of (lo, hi) with N elements. Degrees of freedom are the
/// N - 1 interior nodes; functions vanish outside (lo, hi).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub n: Dimension,
    pub lo: f64,
    pub hi: f64,
    pub elements: usize,
}

impl Mesh {
    pub fn new(n: Dimension, lo: f64, hi: f64, elements: usize) -> Result<Self> {
        if n.get() != 1 {
            // tensor meshes are not provided; all solvers run in 1D
            return Err(Error::UnsupportedDimension(n.get()));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain { what: "domain length", value: hi - lo });
        }
        if elements < 2 {
            return Err(Error::Domain { what: "elements", value: elements as f64 });
        }
        Ok(Mesh { n, lo, hi, elements })
    }

    pub fn interval(lo: f64, hi: f64, elements: usize) -> Result<Self> {
        Self::new(Dimension::ONE, lo, hi, elements)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.elements as f64
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        if k == self.elements {
            self.hi
        } else {
            self.lo + self.h() * k as f64
        }
    }

    pub fn dofs(&self) -> usize {
        self.elements - 1
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..self.elements).map(|k| self.node(k)).collect()
    }

    pub fn all_nodes(&self) -> Vec<f64> {
        (0..=self.elements).map(|k| self.node(k)).collect()
    }

    /// Interior dof of a node index.
    #[inline]
    pub fn dof(&self, node: usize) -> Option<usize> {
        if node >= 1 && node < self.elements {
            Some(node - 1)
        } else {
            None
        }
    }

    /// Nodal (lumped) quadrature weights of the interior nodes.
    pub fn lumped_weights(&self) -> Vec<f64> {
        alloc::vec![self.h(); self.dofs()]
    }

    /// Nodal interpolant of a function.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> DiscreteFunction {
        DiscreteFunction { mesh: self.clone(), coeffs: self.interior_nodes().into_iter().map(f).collect() }
    }
}

/// Continuous P1 function with zero extension.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    pub mesh: Mesh,
    pub coeffs: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(mesh: Mesh, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.dofs() {
            return Err(Error::DimensionMismatch { expected: mesh.dofs(), found: coeffs.len() });
        }
        Ok(DiscreteFunction { mesh, coeffs })
    }

    pub fn zero(mesh: &Mesh) -> Self {
        DiscreteFunction { mesh: mesh.clone(), coeffs: alloc::vec![0.0; mesh.dofs()] }
    }

    /// Value at a node index, including the boundary zeros.
    #[inline]
    pub fn node_value(&self, k: usize) -> f64 {
        self.mesh.dof(k).map_or(0.0, |d| self.coeffs[d])
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_p1(&self.mesh, &self.coeffs, x)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m: f64, v| m.max(math::abs(*v)))
    }

    /// Exact L2 norm of the piecewise linear function.
    pub fn l2_norm(&self) -> f64 {
        let h = self.mesh.h();
        let mut acc = 0.0;
        for e in 0..self.mesh.elements {
            let (a, b) = (self.node_value(e), self.node_value(e + 1));
            acc += h / 3.0 * (a * a + a * b + b * b);
        }
        math::sqrt(acc)
    }

    pub fn l2_distance(&self, other: &DiscreteFunction) -> Result<f64> {
        if self.mesh != other.mesh {
            return Err(Error::Precondition("functions live on different meshes"));
        }
        let diff: Vec<f64> = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(DiscreteFunction { mesh: self.mesh.clone(), coeffs: diff }.l2_norm())
    }

    /// L2 distance to a function given pointwise, by Gauss quadrature on each element.
    pub fn l2_error(&self, exact: impl Fn(f64) -> f64) -> f64 {
        let gl = GaussLegendre::new(10);
        let mut acc = 0.0;
        for e in 0..self.mesh.elements {
            acc += gl.integrate(self.mesh.node(e), self.mesh.node(e + 1), |x| {
                let d = self.eval(x) - exact(x);
                d * d
            });
        }
        math::sqrt(acc)
    }

    pub fn scaled(&self, c: f64) -> DiscreteFunction {
        DiscreteFunction { mesh: self.mesh.clone(), coeffs: self.coeffs.iter().map(|v| c * v).collect() }
    }

    /// Wraps the function as a probe; derivatives jump at the nodes.
    pub fn to_probe(&self) -> SmoothProbe {
        let mesh = Arc::new(self.mesh.clone());
        let coeffs: Arc<Vec<f64>> = Arc::new(self.coeffs.clone());
        let (m1, c1) = (mesh.clone(), coeffs.clone());
        let (m2, c2) = (mesh.clone(), coeffs.clone());
        let h = mesh.h();
        let mut slope: f64 = 0.0;
        for e in 0..mesh.elements {
            slope = slope.max(math::abs(self.node_value(e + 1) - self.node_value(e)) / h);
        }
        SmoothProbe {
            n: Dimension::ONE,
            value: Arc::new(move |x| eval_p1(&m1, &c1, x[0])),
            gradient: Arc::new(move |x, out| out[0] = slope_p1(&m2, &c2, x[0])),
            support_radius: math::abs(mesh.lo).max(math::abs(mesh.hi)),
            c2_norm: self.max_abs().max(slope),
            kinks: mesh.all_nodes(),
            resolution: Some(h),
        }
    }
}

fn locate(mesh: &Mesh, x: f64) -> Option<(usize, f64)> {
    if !(x > mesh.lo && x < mesh.hi) {
        return None;
    }
    let h = mesh.h();
    let t = (x - mesh.lo) / h;
    let e = (math::floor(t) as usize).min(mesh.elements - 1);
    Some((e, t - e as f64))
}

fn eval_p1(mesh: &Mesh, c: &[f64], x: f64) -> f64 {
    let Some((e, t)) = locate(mesh, x) else {
        return 0.0;
    };
    let left = mesh.dof(e).map_or(0.0, |d| c[d]);
    let right = mesh.dof(e + 1).map_or(0.0, |d| c[d]);
    left * (1.0 - t) + right * t
}

fn slope_p1(mesh: &Mesh, c: &[f64], x: f64) -> f64 {
    let Some((e, _)) = locate(mesh, x) else {
        return 0.0;
    };
    let left = mesh.dof(e).map_or(0.0, |d| c[d]);
    let right = mesh.dof(e + 1).map_or(0.0, |d| c[d]);
    (right - left) / mesh.h()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_norms() {
        let m = Mesh::interval(-1.0, 1.0, 4).unwrap();
        let u = DiscreteFunction::new(m.clone(), alloc::vec![0.0, 1.0, 0.0]).unwrap();
        // hat of half-width 0.5: L2^2 = 2 * 0.5 / 3
        assert!((u.l2_norm() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(u.eval(0.0), 1.0);
        assert_eq!(u.eval(0.25), 0.5);
        assert_eq!(u.eval(1.5), 0.0);
        assert!(Mesh::new(Dimension::TWO, 0.0, 1.0, 4).is_err());
    }
}
