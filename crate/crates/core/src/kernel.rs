//! Kernel evaluation, pointwise operator and kernel-level diagnostics.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::algebra::{c_ns, eigh_sym, Dimension, Mat, SymMatrix};
use crate::error::{Error, Result};
use crate::math;
use crate::quadrature::{log_composite, power_tail, GaussLegendre};
use crate::spectral::{sphere_rule, MatrixFieldM, SphereRule};

/// K(x, z) = c chi(|x - z| < rho) / |M(z, x - z)(x - z)|^{n+2s}.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub m: MatrixFieldM,
    /// Horizon; `f64::INFINITY` for no cutoff.
    pub rho: f64,
    pub s: f64,
    pub n: Dimension,
    pub c: f64,
    /// Measured almost-symmetry integral at the origin, if computed.
    pub c_sharp: Option<f64>,
}

impl KernelSpec {
    pub fn new(m: MatrixFieldM, rho: f64, s: f64) -> Result<Self> {
        let c = c_ns(m.n, s)?;
        if !(rho > 0.0) {
            return Err(Error::Domain { what: "rho", value: rho });
        }
        Ok(KernelSpec { n: m.n, m, rho, s, c, c_sharp: None })
    }

    /// Stores the almost-symmetry integral at the origin as metadata.
    pub fn with_measured_c_sharp(mut self) -> Self {
        let z = [0.0; 3];
        self.c_sharp = Some(almost_symmetry_integral(&self, &z[..self.n.get()]));
        self
    }

    #[inline]
    pub fn exponent(&self) -> f64 {
        self.n.get() as f64 + 2.0 * self.s
    }

    /// Kernel without the diagonal check; `y = x - z`.
    #[inline]
    pub fn eval_offset(&self, z: &[f64], y: &[f64]) -> f64 {
        let r = math::norm(y);
        if r >= self.rho {
            return 0.0;
        }
        let m = self.m.eval(z, y);
        self.c / math::pow(m.apply_norm(y), self.exponent())
    }

    /// c_ns / alpha^{n+2s} and c_ns / beta^{n+2s}.
    pub fn bound_constants(&self) -> (f64, f64) {
        let p = self.exponent();
        (self.c / math::pow(self.m.alpha, p), self.c / math::pow(self.m.beta, p))
    }
}

pub fn kernel_eval(k: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    let n = k.n.get();
    if x.len() != n || z.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.len().min(z.len()) });
    }
    let mut y = [0.0; 3];
    for i in 0..n {
        y[i] = x[i] - z[i];
    }
    if math::norm(&y[..n]) == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(k.eval_offset(z, &y[..n]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBoundsReport {
    pub c_low: f64,
    pub c_high: f64,
    /// Largest relative amount by which K |x - z|^{n+2s} leaves [c_low, c_high].
    pub bound_violation: f64,
    /// Largest |K(x,z) - K(z,x)| / max(K(x,z), K(z,x)).
    pub symmetry_gap: f64,
    pub samples: usize,
}

/// Samples are flat pairs (x, z).
pub fn kernel_bounds_check(k: &KernelSpec, samples: &[f64]) -> KernelBoundsReport {
    let n = k.n.get();
    let (lo, hi) = k.bound_constants();
    let p = k.exponent();
    let mut viol: f64 = 0.0;
    let mut sym: f64 = 0.0;
    let mut count = 0;
    for pair in samples.chunks_exact(2 * n) {
        let (x, z) = pair.split_at(n);
        let (Ok(kxz), Ok(kzx)) = (kernel_eval(k, x, z), kernel_eval(k, z, x)) else {
            continue;
        };
        count += 1;
        let mut y = [0.0; 3];
        for i in 0..n {
            y[i] = x[i] - z[i];
        }
        let r = math::norm(&y[..n]);
        if r < k.rho {
            let scaled = kxz * math::pow(r, p);
            viol = viol.max((lo - scaled) / lo).max((scaled - hi) / hi);
        }
        let big = kxz.max(kzx);
        if big > 0.0 {
            sym = sym.max(math::abs(kxz - kzx) / big);
        }
    }
    KernelBoundsReport { c_low: lo, c_high: hi, bound_violation: viol.max(0.0), symmetry_gap: sym, samples: count }
}

fn rule_for(n: Dimension) -> SphereRule {
    sphere_rule(n, if n.get() == 3 { 1 } else { 2 }).expect("supported dimension")
}

/// Integral over B_1 (cut at rho) of |y| |K(x, x+y) - K(x, x-y)|.
pub fn almost_symmetry_integral(k: &KernelSpec, x: &[f64]) -> f64 {
    let n = k.n.get();
    if k.m.constant.is_some() {
        return 0.0;
    }
    let rule = rule_for(k.n);
    let gl = GaussLegendre::new(16);
    let big_r = k.rho.min(1.0);
    let p = k.exponent();
    // |y| |K+ - K-| r^{n-1} = c r^{-2s} |k+(r,psi) - k-(r,psi)|, graded toward 0
    let inner = |r: f64| -> f64 {
        let mut acc = 0.0;
        let mut zp = [0.0; 3];
        let mut zm = [0.0; 3];
        let mut yp = [0.0; 3];
        let mut ym = [0.0; 3];
        for (psi, w) in rule.iter() {
            for i in 0..n {
                zp[i] = x[i] + r * psi[i];
                zm[i] = x[i] - r * psi[i];
                yp[i] = -psi[i];
                ym[i] = psi[i];
            }
            // K(x, x+y) = c / |M(x+y, -y) y|^p
            let kp = 1.0 / math::pow(k.m.eval(&zp[..n], &scaled(&yp, r, n)[..n]).apply_norm(&psi[..n]), p);
            let km = 1.0 / math::pow(k.m.eval(&zm[..n], &scaled(&ym, r, n)[..n]).apply_norm(&psi[..n]), p);
            acc += w * math::abs(kp - km);
        }
        k.c * math::pow(r, -2.0 * k.s) * acc
    };
    graded(&gl, big_r, 48, inner)
}

#[inline]
fn scaled(v: &[f64; 3], r: f64, n: usize) -> [f64; 3] {
    let mut o = [0.0; 3];
    for i in 0..n {
        o[i] = r * v[i];
    }
    o
}

/// Integral over (0, R] on geometric pieces [R 2^{-k-1}, R 2^{-k}], k < levels.
fn graded(gl: &GaussLegendre, big_r: f64, levels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut hi = big_r;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        acc += gl.integrate(lo, hi, &mut f);
        hi = lo;
    }
    acc
}

/// Explicit almost-symmetry bound for a Lipschitz modulation:
/// c p 2 sqrt(2) C_M omega / ((2 - 2s) beta^{p+1}).
pub fn almost_symmetry_bound(k: &KernelSpec) -> Option<f64> {
    let cm = k.m.lipschitz?;
    let p = k.exponent();
    Some(k.c * p * 2.0 * math::sqrt(2.0) * cm * k.n.omega() / ((2.0 - 2.0 * k.s) * math::pow(k.m.beta, p + 1.0)))
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A compactly supported (or numerically negligible outside its radius)
/// C^2 test function with gradient.
#[derive(Clone)]
pub struct SmoothProbe {
    pub n: Dimension,
    pub value: ScalarFn,
    pub gradient: GradFn,
    /// Outside the ball of this radius around the origin the function is 0
    /// (or below 1e-8 for the Gaussian).
    pub support_radius: f64,
    /// Bound on max(|u|, |Du|, |D^2 u|).
    pub c2_norm: f64,
    /// Points along x_1 where derivatives may jump (1D only).
    pub kinks: Vec<f64>,
    /// Smallest spacing of the kink set, if any.
    pub resolution: Option<f64>,
}

impl core::fmt::Debug for SmoothProbe {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SmoothProbe")
            .field("n", &self.n)
            .field("support_radius", &self.support_radius)
            .field("c2_norm", &self.c2_norm)
            .finish()
    }
}

impl SmoothProbe {
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn translated(&self, tau: &[f64]) -> SmoothProbe {
        let n = self.n.get();
        let mut t = [0.0; 3];
        t[..n].copy_from_slice(&tau[..n]);
        let v = self.value.clone();
        let g = self.gradient.clone();
        let shift = move |x: &[f64]| {
            let mut z = [0.0; 3];
            for i in 0..n {
                z[i] = x[i] - t[i];
            }
            z
        };
        let mut norm_t = 0.0;
        for ti in &t[..n] {
            norm_t += ti * ti;
        }
        SmoothProbe {
            n: self.n,
            value: Arc::new(move |x| v(&shift(x)[..n])),
            gradient: Arc::new(move |x, out| g(&shift(x)[..n], out)),
            support_radius: self.support_radius + math::sqrt(norm_t),
            c2_norm: self.c2_norm,
            kinks: self.kinks.iter().map(|k| k + t[0]).collect(),
            resolution: self.resolution,
        }
    }

    pub fn scaled(&self, c: f64) -> SmoothProbe {
        let v = self.value.clone();
        let g = self.gradient.clone();
        SmoothProbe {
            n: self.n,
            value: Arc::new(move |x| c * v(x)),
            gradient: Arc::new(move |x, out| {
                g(x, out);
                for o in out.iter_mut() {
                    *o *= c;
                }
            }),
            support_radius: self.support_radius,
            c2_norm: math::abs(c) * self.c2_norm,
            kinks: self.kinks.clone(),
            resolution: self.resolution,
        }
    }
}

/// Built-in probes.
pub mod probes {
    use super::*;

    /// exp(-|x|^2); treated as supported in the ball of radius 4.5.
    pub fn gaussian(n: Dimension) -> SmoothProbe {
        let d = n.get();
        SmoothProbe {
            n,
            value: Arc::new(move |x| math::exp(-sq(x, d))),
            gradient: Arc::new(move |x, out| {
                let e = math::exp(-sq(x, d));
                for i in 0..d {
                    out[i] = -2.0 * x[i] * e;
                }
            }),
            support_radius: 4.5,
            c2_norm: 2.0,
            kinks: Vec::new(),
            resolution: None,
        }
    }

    /// (1 - |x|^2)_+^4.
    pub fn polynomial_bump(n: Dimension) -> SmoothProbe {
        let d = n.get();
        SmoothProbe {
            n,
            value: Arc::new(move |x| {
                let t = 1.0 - sq(x, d);
                if t > 0.0 {
                    t * t * t * t
                } else {
                    0.0
                }
            }),
            gradient: Arc::new(move |x, out| {
                let t = 1.0 - sq(x, d);
                let f = if t > 0.0 { -8.0 * t * t * t } else { 0.0 };
                for i in 0..d {
                    out[i] = f * x[i];
                }
            }),
            support_radius: 1.0,
            c2_norm: 8.0,
            kinks: Vec::new(),
            resolution: None,
        }
    }

    /// x_1 (1 - |x|^2)_+^4, odd in x_1.
    pub fn odd_bump(n: Dimension) -> SmoothProbe {
        let d = n.get();
        SmoothProbe {
            n,
            value: Arc::new(move |x| {
                let t = 1.0 - sq(x, d);
                if t > 0.0 {
                    x[0] * t * t * t * t
                } else {
                    0.0
                }
            }),
            gradient: Arc::new(move |x, out| {
                let t = 1.0 - sq(x, d);
                if t > 0.0 {
                    let t3 = t * t * t;
                    for i in 0..d {
                        out[i] = -8.0 * t3 * x[0] * x[i];
                    }
                    out[0] += t3 * t;
                } else {
                    for o in out.iter_mut().take(d) {
                        *o = 0.0;
                    }
                }
            }),
            support_radius: 1.0,
            c2_norm: 16.0,
            kinks: Vec::new(),
            resolution: None,
        }
    }

    pub fn zero(n: Dimension) -> SmoothProbe {
        SmoothProbe {
            n,
            value: Arc::new(|_| 0.0),
            gradient: Arc::new(|_, out| out.iter_mut().for_each(|o| *o = 0.0)),
            support_radius: 1.0,
            c2_norm: 0.0,
            kinks: Vec::new(),
            resolution: None,
        }
    }

    pub const NAMES: [&str; 3] = ["gaussian", "polynomial-bump", "odd-bump"];

    pub fn by_name(name: &str, n: Dimension) -> Option<SmoothProbe> {
        match name {
            "gaussian" => Some(gaussian(n)),
            "polynomial-bump" => Some(polynomial_bump(n)),
            "odd-bump" => Some(odd_bump(n)),
            _ => None,
        }
    }

    #[inline]
    fn sq(x: &[f64], d: usize) -> f64 {
        let mut a = 0.0;
        for xi in &x[..d] {
            a += xi * xi;
        }
        a
    }
}

/// Radial integral of r^{-1-2s} F(r) over (0, b] when F(r) ~ r^m near 0:
/// the piece below eps uses F(r)/r^m ~ a + b r fitted at eps and 2 eps.
pub(crate) fn singular_radial(
    gl: &GaussLegendre,
    s: f64,
    m: f64,
    eps: f64,
    b: f64,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let eps = eps.min(0.25 * b);
    let f1 = f(eps) / math::pow(eps, m);
    let f2 = f(2.0 * eps) / math::pow(2.0 * eps, m);
    let slope = (f2 - f1) / eps;
    let a0 = f1 - slope * eps;
    let e1 = m - 2.0 * s;
    let near = a0 * math::pow(eps, e1) / e1 + slope * math::pow(eps, e1 + 1.0) / (e1 + 1.0);
    let mid = log_composite(gl, eps, b, 0.5, |r| math::pow(r, -1.0 - 2.0 * s) * f(r));
    near + mid
}

/// Pointwise value of P.V. int (u(x) - u(z)) K(x, z) dz.
pub fn apply_pointwise(k: &KernelSpec, u: &SmoothProbe, x: &[f64]) -> Result<f64> {
    let n = k.n.get();
    if x.len() != n || u.n != k.n {
        return Err(Error::DimensionMismatch { expected: n, found: x.len() });
    }
    let symmetrized = k.s >= 0.5;
    if symmetrized && k.m.lipschitz.is_none() {
        return Err(Error::Precondition("pointwise evaluation for s >= 1/2 needs a Lipschitz modulation"));
    }
    let rule = rule_for(k.n);
    let gl = GaussLegendre::new(12);
    let p = k.exponent();
    let ux = u.value(x);
    let big_r = k.rho.min(1.0);

    // k(x, z) scaled: K(x, x + r psi) = c r^{-p} kp(r, psi) with kp = |M(x + r psi, -r psi) psi|^{-p}
    let kfac = |r: f64, psi: &[f64], sign: f64| -> f64 {
        let mut z = [0.0; 3];
        let mut y = [0.0; 3];
        for i in 0..n {
            z[i] = x[i] + sign * r * psi[i];
            y[i] = -sign * r * psi[i];
        }
        1.0 / math::pow(k.m.eval(&z[..n], &y[..n]).apply_norm(&psi[..n]), p)
    };
    let shift = |r: f64, psi: &[f64], sign: f64| -> f64 {
        let mut z = [0.0; 3];
        for i in 0..n {
            z[i] = x[i] + sign * r * psi[i];
        }
        u.value(&z[..n])
    };

    let eps = {
        let mut e: f64 = 1e-3;
        if let Some(h) = u.resolution {
            e = e.min(0.125 * h);
        }
        e.min(0.125 * big_r)
    };

    let near = if symmetrized {
        let f = |r: f64| -> f64 {
            let mut acc = 0.0;
            for (psi, w) in rule.iter() {
                let up = shift(r, psi, 1.0);
                let um = shift(r, psi, -1.0);
                let kp = kfac(r, psi, 1.0);
                let km = kfac(r, psi, -1.0);
                acc += w * ((ux - up) * (kp - km) + (2.0 * ux - up - um) * km);
            }
            acc
        };
        0.5 * k.c * singular_radial(&gl, k.s, 2.0, eps, big_r, f)
    } else {
        let f = |r: f64| -> f64 {
            let mut acc = 0.0;
            for (psi, w) in rule.iter() {
                acc += w * (ux - shift(r, psi, 1.0)) * kfac(r, psi, 1.0);
            }
            acc
        };
        // F ~ r in general (r^2 when the odd part cancels)
        k.c * singular_radial(&gl, k.s, 1.0, eps, big_r, f)
    };

    let far = if k.rho > big_r {
        let f = |r: f64| -> f64 {
            let mut acc = 0.0;
            for (psi, w) in rule.iter() {
                acc += w * (ux - shift(r, psi, 1.0)) * kfac(r, psi, 1.0);
            }
            acc
        };
        let r_out = (math::norm(x) + u.support_radius).max(big_r).min(k.rho);
        let mid = log_composite(&gl, big_r, r_out, 0.25, |r| math::pow(r, -1.0 - 2.0 * k.s) * f(r));
        let tail = power_tail(&gl, k.s, r_out, k.rho, 8, f);
        k.c * (mid + tail)
    } else {
        0.0
    };
    Ok(near + far)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationReport {
    /// sup of ||Ly|^{-p} - |Ny|^{-p}| |y|^p / ||L - N||.
    pub sup_ratio: f64,
    /// Mean value bound p / beta^{p+1}.
    pub bound: f64,
}

fn singular_range(m: &Mat) -> (f64, f64) {
    let sp = eigh_sym(&SymMatrix::symmetrize(&m.transpose().mul(m)));
    let v = sp.values();
    (math::sqrt(v[0].max(0.0)), math::sqrt(v[v.len() - 1].max(0.0)))
}

/// Ratio probe for the kernel perturbation estimate. `ys` is flat, n per point.
pub fn perturbation_estimate_check(
    l: &Mat,
    nm: &Mat,
    ys: &[f64],
    s: f64,
    alpha: f64,
    beta: f64,
) -> Result<PerturbationReport> {
    let n = l.n();
    if nm.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: nm.n() });
    }
    let tol = 1e-12 * alpha.max(1.0);
    for m in [l, nm] {
        let (lo, hi) = singular_range(m);
        if lo < beta - tol || hi > alpha + tol {
            return Err(Error::Precondition("matrices must satisfy beta <= |M xi| <= alpha on the sphere"));
        }
    }
    let p = n as f64 + 2.0 * s;
    let bound = p / math::pow(beta, p + 1.0);
    let gap = crate::algebra::operator_norm(&l.sub(nm));
    if gap == 0.0 {
        return Ok(PerturbationReport { sup_ratio: 0.0, bound });
    }
    let mut sup: f64 = 0.0;
    for y in ys.chunks_exact(n) {
        let r = math::norm(y);
        if r == 0.0 {
            continue;
        }
        let a = math::pow(l.apply_norm(y) / r, -p);
        let b = math::pow(nm.apply_norm(y) / r, -p);
        sup = sup.max(math::abs(a - b) / gap);
    }
    Ok(PerturbationReport { sup_ratio: sup, bound })
}

/// Smooth Lipschitz test modulation (1 + 0.1 sin(x_1 + y_1 / 2)) Id, which
/// satisfies the structural identity; Lipschitz constant 0.1 sqrt(1.25).
pub fn sin_modulated_field(n: Dimension) -> MatrixFieldM {
    MatrixFieldM::new(n, 1.1, 0.9, move |x: &[f64], y: &[f64]| {
        Mat::scaled_identity(n, 1.0 + 0.1 * math::sin(x[0] + 0.5 * y[0]))
    })
    .expect("bounds")
    .with_lipschitz(0.1 * math::sqrt(1.25))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::gamma;

    #[test]
    fn kernel_examples() {
        let d1 = Dimension::ONE;
        let k = KernelSpec::new(MatrixFieldM::identity(d1), f64::INFINITY, 0.5).unwrap();
        let v = kernel_eval(&k, &[0.0], &[1.0]).unwrap();
        assert!((v - 1.0 / math::PI).abs() < 1e-15);
        assert_eq!(kernel_eval(&k, &[0.3], &[0.3]), Err(Error::Singularity));
        let kc = KernelSpec::new(MatrixFieldM::identity(d1), 0.5, 0.5).unwrap();
        assert_eq!(kernel_eval(&kc, &[0.0], &[0.7]).unwrap(), 0.0);
        let k2 = KernelSpec::new(MatrixFieldM::constant(Mat::scaled_identity(d1, 2.0)).unwrap(), f64::INFINITY, 0.5)
            .unwrap();
        let v = kernel_eval(&k2, &[0.0], &[1.0]).unwrap();
        assert!((v - 1.0 / (4.0 * math::PI)).abs() < 1e-15);
    }

    #[test]
    fn identity_bounds_are_tight() {
        let k = KernelSpec::new(MatrixFieldM::identity(Dimension::TWO), f64::INFINITY, 0.4).unwrap();
        let rep = kernel_bounds_check(&k, &[0.0, 0.0, 1.0, 0.5, 0.2, 0.1, -0.3, 2.0]);
        assert_eq!(rep.c_low, rep.c_high);
        assert!(rep.bound_violation < 1e-14 && rep.symmetry_gap < 1e-15);
    }

    #[test]
    fn pointwise_gaussian_matches_fourier() {
        let d1 = Dimension::ONE;
        for &s in &[0.3, 0.5, 0.7] {
            let k = KernelSpec::new(MatrixFieldM::identity(d1), f64::INFINITY, s).unwrap();
            let v = apply_pointwise(&k, &probes::gaussian(d1), &[0.0]).unwrap();
            let exact = math::pow(4.0, s) * gamma(s + 0.5).unwrap() / math::PI.sqrt();
            assert!((v / exact - 1.0).abs() < 1e-5, "s={s} v={v} exact={exact}");
        }
    }

    #[test]
    fn pointwise_odd_and_zero() {
        let d1 = Dimension::ONE;
        let k = KernelSpec::new(MatrixFieldM::identity(d1), f64::INFINITY, 0.6).unwrap();
        assert!(apply_pointwise(&k, &probes::odd_bump(d1), &[0.0]).unwrap().abs() < 1e-12);
        assert_eq!(apply_pointwise(&k, &probes::zero(d1), &[0.4]).unwrap(), 0.0);
        let nolip = MatrixFieldM::new(d1, 1.0, 1.0, |_: &[f64], _: &[f64]| Mat::identity(Dimension::ONE)).unwrap();
        let k = KernelSpec::new(nolip, f64::INFINITY, 0.6).unwrap();
        assert!(matches!(apply_pointwise(&k, &probes::gaussian(d1), &[0.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn perturbation_scalar_limit() {
        let d1 = Dimension::ONE;
        let l = Mat::identity(d1);
        let delta = 1e-6;
        let nm = Mat::scaled_identity(d1, 1.0 + delta);
        let rep = perturbation_estimate_check(&l, &nm, &[0.5, -2.0], 0.5, 2.0, 0.5).unwrap();
        assert!((rep.sup_ratio - 2.0).abs() < 1e-4);
        let rep = perturbation_estimate_check(&l, &l, &[1.0], 0.5, 2.0, 0.5).unwrap();
        assert_eq!(rep.sup_ratio, 0.0);
    }

    #[test]
    fn constant_field_has_no_asymmetry() {
        let k = KernelSpec::new(MatrixFieldM::identity(Dimension::TWO), f64::INFINITY, 0.4).unwrap();
        assert_eq!(almost_symmetry_integral(&k, &[0.1, 0.2]), 0.0);
    }
}
