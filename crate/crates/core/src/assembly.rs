//! Stiffness matrices of the nonlocal form on 1D P1 meshes.
//!
//! S_ij = (1/2) int int (phi_i(x) - phi_i(z)) (phi_j(x) - phi_j(z)) K(x, z) dx dz
//! is split into element pairs inside the domain plus the exterior term
//! int phi_i phi_j kappa with kappa(x) = int_{outside} K_sym(x, z) dz.

use alloc::vec::Vec;

use crate::algebra::Dimension;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::DenseMatrix;
use crate::math;
use crate::mesh::{DiscreteFunction, Mesh};
use crate::quadrature::{power_tail, GaussLegendre};
use crate::spectral::{MatrixFieldA, MatrixFieldM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Gauss order of the primary assembly; the certificate compares against order + 4.
    pub order: usize,
    /// Largest accepted entry difference relative to the largest entry.
    pub tol: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { order: 8, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    pub matrix: DenseMatrix,
    pub order: usize,
    /// Largest entry difference between the two quadrature orders.
    pub cert_error: f64,
    /// The exterior integrals are exact in r up to the horizon.
    pub tail_radius: f64,
}

impl StiffnessMatrix {
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.matrix.quad_form(u)
    }
}

pub fn assemble_stiffness(k: &KernelSpec, mesh: &Mesh) -> Result<StiffnessMatrix> {
    assemble_stiffness_with(k, mesh, &AssemblyOptions::default())
}

pub fn assemble_stiffness_with(k: &KernelSpec, mesh: &Mesh, opts: &AssemblyOptions) -> Result<StiffnessMatrix> {
    if k.n != mesh.n {
        return Err(Error::DimensionMismatch { expected: mesh.n.get(), found: k.n.get() });
    }
    let coarse = assemble_once(k, mesh, opts.order);
    let fine = assemble_once(k, mesh, opts.order + 4);
    let mut diff: f64 = 0.0;
    for (a, b) in coarse.data.iter().zip(&fine.data) {
        let d = math::abs(a - b);
        diff = if d.is_nan() { f64::NAN } else { diff.max(d) };
        if diff.is_nan() {
            break;
        }
    }
    let scale = fine.max_abs().max(f64::MIN_POSITIVE);
    if !(diff <= opts.tol * scale) {
        return Err(Error::AssemblyTolerance { achieved: diff / scale, requested: opts.tol });
    }
    Ok(StiffnessMatrix { matrix: fine, order: opts.order + 4, cert_error: diff, tail_radius: k.rho })
}

struct Ctx<'a> {
    k: &'a KernelSpec,
    p: f64,
    gl: GaussLegendre,
}

impl Ctx<'_> {
    /// K_sym(x, z) |x - z|^p / c.
    #[inline]
    fn mu(&self, x: f64, z: f64) -> f64 {
        let m1 = self.k.m.eval(&[z], &[x - z]).get(0, 0);
        let m2 = self.k.m.eval(&[x], &[z - x]).get(0, 0);
        0.5 * (math::pow(math::abs(m1), -self.p) + math::pow(math::abs(m2), -self.p))
    }

    /// K_sym(x, z) with the horizon.
    #[inline]
    fn ks(&self, x: f64, z: f64) -> f64 {
        let r = math::abs(x - z);
        if r >= self.k.rho {
            return 0.0;
        }
        self.k.c * self.mu(x, z) * math::pow(r, -self.p)
    }

    /// int_{outside (lo, hi)} K_sym(x, z) dz.
    fn kappa(&self, x: f64, lo: f64, hi: f64) -> f64 {
        let s = self.k.s;
        let rho = self.k.rho;
        let left = power_tail(&self.gl, s, x - lo, rho, 2, |r| self.mu(x, x - r));
        let right = power_tail(&self.gl, s, hi - x, rho, 2, |r| self.mu(x, x + r));
        self.k.c * (left + right)
    }
}

fn add_local(s: &mut DenseMatrix, mesh: &Mesh, nodes: &[usize], local: &[[f64; 4]; 4]) {
    for (a, &na) in nodes.iter().enumerate() {
        let Some(i) = mesh.dof(na) else { continue };
        for (b, &nb) in nodes.iter().enumerate() {
            let Some(j) = mesh.dof(nb) else { continue };
            s.add_to(i, j, local[a][b]);
        }
    }
}

fn assemble_once(k: &KernelSpec, mesh: &Mesh, q: usize) -> DenseMatrix {
    let ctx = Ctx { k, p: k.exponent(), gl: GaussLegendre::new(q) };
    let ne = mesh.elements;
    let h = mesh.h();
    let mut s = DenseMatrix::zeros(mesh.dofs());
    let rho = k.rho;
    let sexp = k.s;
    let c = k.c;

    // identical pairs
    for e in 0..ne {
        let (x0, x1) = (mesh.node(e), mesh.node(e + 1));
        let big_r = h.min(rho);
        let mubar = |r: f64| -> f64 {
            let mut acc = 0.0;
            for (z, w) in ctx.gl.mapped(x0, x1 - r) {
                acc += w * ctx.mu(z + r, z);
            }
            for (z, w) in ctx.gl.mapped(x0 + r, x1) {
                acc += w * ctx.mu(z - r, z);
            }
            acc / (2.0 * (h - r))
        };
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        power_weights(&ctx.gl, 1.0 - 2.0 * sexp, big_r, |r, w| p1 += w * mubar(r));
        power_weights(&ctx.gl, 2.0 - 2.0 * sexp, big_r, |r, w| p2 += w * mubar(r));
        let integral = 2.0 * c * (h * p1 - p2);
        let g = [-1.0, 1.0];
        let mut local = [[0.0; 4]; 4];
        for a in 0..2 {
            for b in 0..2 {
                local[a][b] = 0.5 * g[a] * g[b] * integral / (h * h);
            }
        }
        add_local(&mut s, mesh, &[e, e + 1], &local);
    }

    // touching pairs: x = p - xi in the left element, z = p + eta in the right one
    for e in 0..ne.saturating_sub(1) {
        let pnode = mesh.node(e + 1);
        let mut local = [[0.0; 4]; 4];
        let pw = 2.0 - 2.0 * sexp;
        let r1 = h.min(0.5 * rho);
        let mut add = |xi: f64, w: f64, vmax: f64| {
            // both triangles at radius xi of the larger leg
            for (v, wv) in ctx.gl.mapped(0.0, vmax) {
                let base = w * wv * math::pow(1.0 + v, -ctx.p);
                let m1 = ctx.mu(pnode - xi, pnode + v * xi);
                let d1 = [1.0, v - 1.0, -v];
                let m2 = ctx.mu(pnode - v * xi, pnode + xi);
                let d2 = [v, 1.0 - v, -1.0];
                for a in 0..3 {
                    for b in 0..3 {
                        local[a][b] += base * (m1 * d1[a] * d1[b] + m2 * d2[a] * d2[b]);
                    }
                }
            }
        };
        power_weights(&ctx.gl, pw, r1, |xi, w| add(xi, w, 1.0));
        if 0.5 * rho < h {
            let top = h.min(rho);
            for (xi, w) in ctx.gl.mapped(0.5 * rho, top) {
                let vmax = (rho / xi - 1.0).min(1.0);
                if vmax > 0.0 {
                    add(xi, w * math::pow(xi, pw), vmax);
                }
            }
        }
        for row in local.iter_mut() {
            for v in row.iter_mut() {
                *v *= c / (h * h);
            }
        }
        add_local(&mut s, mesh, &[e, e + 1, e + 2], &local);
    }

    // separated pairs
    for e in 0..ne {
        let (x0, x1) = (mesh.node(e), mesh.node(e + 1));
        for f in (e + 2)..ne {
            let (z0, z1) = (mesh.node(f), mesh.node(f + 1));
            if z0 - x1 >= rho {
                break;
            }
            let mut local = [[0.0; 4]; 4];
            let breaks = [z0 - rho, z1 - rho];
            let mut outer = |x: f64, wx: f64| {
                let top = z1.min(x + rho);
                if top <= z0 {
                    return;
                }
                let d = [(x1 - x) / h, (x - x0) / h];
                for (z, wz) in ctx.gl.mapped(z0, top) {
                    let kv = wx * wz * ctx.ks(x, z);
                    let v = [d[0], d[1], -(z1 - z) / h, -(z - z0) / h];
                    for a in 0..4 {
                        for b in 0..4 {
                            local[a][b] += kv * v[a] * v[b];
                        }
                    }
                }
            };
            split_points(&ctx.gl, x0, x1, &breaks, &mut outer);
            add_local(&mut s, mesh, &[e, e + 1, f, f + 1], &local);
        }
    }

    // exterior interaction
    let (lo, hi) = (mesh.lo, mesh.hi);
    let kinks = [lo + rho, hi - rho];
    for e in 0..ne {
        let (x0, x1) = (mesh.node(e), mesh.node(e + 1));
        let mut local = [[0.0; 4]; 4];
        let mut body = |x: f64, w: f64| {
            let kv = w * ctx.kappa(x, lo, hi);
            let d = [(x1 - x) / h, (x - x0) / h];
            for a in 0..2 {
                for b in 0..2 {
                    local[a][b] += kv * d[a] * d[b];
                }
            }
        };
        if e == 0 || e == ne - 1 {
            // geometric grading toward the boundary point
            let toward_lo = e == 0;
            // stop at len ~ 1e-10 h; the remainder is O((len/h)^2 len^{1-2s})
            let mut len = h;
            for _ in 0..34 {
                let (a, b) = if toward_lo { (x0 + 0.5 * len, x0 + len) } else { (x1 - len, x1 - 0.5 * len) };
                split_points(&ctx.gl, a, b, &kinks, &mut body);
                len *= 0.5;
            }
        } else {
            split_points(&ctx.gl, x0, x1, &kinks, &mut body);
        }
        add_local(&mut s, mesh, &[e, e + 1], &local);
    }
    s
}

/// Visits Gauss points of [a, b] split at the given points.
fn split_points(gl: &GaussLegendre, a: f64, b: f64, breaks: &[f64], mut f: impl FnMut(f64, f64)) {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    let mut lo = a;
    for t in pts.into_iter().chain(core::iter::once(b)) {
        for (x, w) in gl.mapped(lo, t) {
            f(x, w);
        }
        lo = t;
    }
}

/// Points and weights for int_0^R r^alpha g(r) dr (exact for constant g).
fn power_weights(gl: &GaussLegendre, alpha: f64, big_r: f64, mut f: impl FnMut(f64, f64)) {
    if !(big_r > 0.0) {
        return;
    }
    let k = alpha + 1.0;
    let scale = math::pow(big_r, k) / k;
    for (tau, w) in gl.mapped(0.0, 1.0) {
        f(big_r * math::pow(tau, 1.0 / k), scale * w);
    }
}

/// Gagliardo seminorm of a discrete function with the c_ns normalization:
/// sqrt(2 <S u, u>) for the isotropic kernel without horizon.
pub fn gagliardo_seminorm(u: &DiscreteFunction, s: f64) -> Result<f64> {
    let k = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, s)?;
    let st = assemble_stiffness(&k, &u.mesh)?;
    Ok(gagliardo_from_stiffness(&st, &u.coeffs))
}

pub fn gagliardo_from_stiffness(st: &StiffnessMatrix, coeffs: &[f64]) -> f64 {
    math::sqrt((2.0 * st.energy(coeffs)).max(0.0))
}

/// P1 stiffness of the local form int A u' v' with A at element midpoints.
pub fn local_stiffness(a: &MatrixFieldA, mesh: &Mesh) -> Result<DenseMatrix> {
    if a.n != mesh.n {
        return Err(Error::DimensionMismatch { expected: mesh.n.get(), found: a.n.get() });
    }
    let h = mesh.h();
    let mut t = DenseMatrix::zeros(mesh.dofs());
    for e in 0..mesh.elements {
        let mid = 0.5 * (mesh.node(e) + mesh.node(e + 1));
        let coef = a.eval(&[mid]).get(0, 0) / h;
        let g = [-1.0, 1.0];
        let mut local = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                local[i][j] = coef * g[i] * g[j];
            }
        }
        add_local(&mut t, mesh, &[e, e + 1], &local);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_kernel(s: f64) -> KernelSpec {
        KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, s).unwrap()
    }

    #[test]
    fn symmetric_and_positive() {
        let mesh = Mesh::interval(-1.0, 1.0, 16).unwrap();
        for &s in &[0.2, 0.5, 0.9] {
            let st = assemble_stiffness(&identity_kernel(s), &mesh).unwrap();
            assert!(st.matrix.max_asymmetry() < 1e-12 * st.matrix.max_abs());
            let ones = alloc::vec![1.0; mesh.dofs()];
            assert!(st.energy(&ones) > 0.0);
            assert!(crate::linalg::Cholesky::factor(&st.matrix).is_ok());
        }
    }

    #[test]
    fn finite_on_fine_meshes() {
        let mesh = Mesh::interval(-1.0, 1.0, 256).unwrap();
        let st = assemble_stiffness(&identity_kernel(0.5), &mesh).unwrap();
        assert!(st.matrix.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn seminorm_scales() {
        let mesh = Mesh::interval(-1.0, 1.0, 8).unwrap();
        let u = mesh.interpolate(|x| 1.0 - x * x);
        let a = gagliardo_seminorm(&u, 0.3).unwrap();
        let b = gagliardo_seminorm(&u.scaled(-2.5), 0.3).unwrap();
        assert!((b - 2.5 * a).abs() < 1e-12 * b);
        assert_eq!(gagliardo_seminorm(&DiscreteFunction::zero(&mesh), 0.3).unwrap(), 0.0);
    }
}
