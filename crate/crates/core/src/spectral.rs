//! Correspondence between elliptic matrix fields A and kernel modulations M.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::algebra::{eigh_sym, gamma, operator_norm, Dimension, Mat, SymMatrix};
use crate::error::{Error, Result};
use crate::math;
use crate::quadrature::GaussLegendre;

pub type AEval = Arc<dyn Fn(&[f64]) -> SymMatrix + Send + Sync>;
pub type HEval = Arc<dyn Fn(&[f64]) -> SymMatrix + Send + Sync>;
pub type MEval = Arc<dyn Fn(&[f64], &[f64]) -> Mat + Send + Sync>;

/// x -> A(x), symmetric with eigenvalues in [lower, upper].
#[derive(Clone)]
pub struct MatrixFieldA {
    pub n: Dimension,
    pub eval: AEval,
    pub lower: f64,
    pub upper: f64,
    /// Set when the field does not depend on x.
    pub constant: Option<SymMatrix>,
    /// Jump locations along x_1 (1D quadrature splits there).
    pub breakpoints: Vec<f64>,
}

impl core::fmt::Debug for MatrixFieldA {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("MatrixFieldA")
            .field("n", &self.n)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("constant", &self.constant)
            .finish()
    }
}

impl MatrixFieldA {
    pub fn new(
        n: Dimension,
        lower: f64,
        upper: f64,
        f: impl Fn(&[f64]) -> SymMatrix + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lower > 0.0 && upper >= lower && upper.is_finite()) {
            return Err(Error::Domain { what: "ellipticity bounds", value: lower });
        }
        Ok(MatrixFieldA { n, eval: Arc::new(f), lower, upper, constant: None, breakpoints: Vec::new() })
    }

    /// Constant field; the bounds are the extreme eigenvalues.
    pub fn constant(a: SymMatrix) -> Result<Self> {
        let sp = eigh_sym(&a);
        let v = sp.values();
        if !(v[0] > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: v[0] });
        }
        let (lo, hi) = (v[0], v[v.len() - 1]);
        Ok(MatrixFieldA {
            n: a.dim(),
            eval: Arc::new(move |_| a),
            lower: lo,
            upper: hi,
            constant: Some(a),
            breakpoints: Vec::new(),
        })
    }

    pub fn with_breakpoints(mut self, b: Vec<f64>) -> Self {
        self.breakpoints = b;
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> SymMatrix {
        (self.eval)(x)
    }
}

/// y -> H(y), even, positive semidefinite, H(0) = 0, norm at most `bound`.
#[derive(Clone)]
pub struct HPerturbation {
    pub eval: HEval,
    pub bound: f64,
    /// Limit of H(t psi) as t grows, when it exists and is direction independent.
    pub far: Option<SymMatrix>,
    pub is_zero: bool,
}

impl HPerturbation {
    pub fn zero(n: Dimension) -> Self {
        let z = SymMatrix::zeros(n);
        HPerturbation { eval: Arc::new(move |_| z), bound: 0.0, far: Some(z), is_zero: true }
    }

    pub fn new(bound: f64, far: Option<SymMatrix>, f: impl Fn(&[f64]) -> SymMatrix + Send + Sync + 'static) -> Self {
        HPerturbation { eval: Arc::new(f), bound, far, is_zero: false }
    }
}

/// (x, y) -> M(x, y) with ellipticity bounds beta |xi| <= |M xi| <= alpha |xi|.
#[derive(Clone)]
pub struct MatrixFieldM {
    pub n: Dimension,
    pub eval: MEval,
    pub alpha: f64,
    pub beta: f64,
    /// Lipschitz constant of (x, y) -> M(x, y) in the operator norm.
    pub lipschitz: Option<f64>,
    /// (x, psi) -> lim_t M(x - t psi, t psi).
    pub far_field: Option<MEval>,
    pub constant: Option<Mat>,
}

impl core::fmt::Debug for MatrixFieldM {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("MatrixFieldM")
            .field("n", &self.n)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("lipschitz", &self.lipschitz)
            .field("constant", &self.constant)
            .finish()
    }
}

impl MatrixFieldM {
    pub fn new(
        n: Dimension,
        alpha: f64,
        beta: f64,
        f: impl Fn(&[f64], &[f64]) -> Mat + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(beta > 0.0 && alpha >= beta && alpha.is_finite()) {
            return Err(Error::Domain { what: "ellipticity bounds alpha/beta", value: beta });
        }
        Ok(MatrixFieldM { n, eval: Arc::new(f), alpha, beta, lipschitz: None, far_field: None, constant: None })
    }

    /// Constant modulation; alpha and beta are its extreme singular values.
    pub fn constant(m: Mat) -> Result<Self> {
        let n = m.dim();
        let ata = SymMatrix::symmetrize(&m.transpose().mul(&m));
        let sv = eigh_sym(&ata);
        let v = sv.values();
        let beta = math::sqrt(v[0].max(0.0));
        let alpha = math::sqrt(v[v.len() - 1]);
        if !(beta > 0.0) {
            return Err(Error::Singular);
        }
        let mut out = MatrixFieldM::new(n, alpha, beta, move |_, _| m)?;
        out.lipschitz = Some(0.0);
        out.far_field = Some(Arc::new(move |_, _| m));
        out.constant = Some(m);
        Ok(out)
    }

    pub fn identity(n: Dimension) -> Self {
        Self::constant(Mat::identity(n)).expect("identity is elliptic")
    }

    pub fn with_lipschitz(mut self, c: f64) -> Self {
        self.lipschitz = Some(c);
        self
    }

    pub fn with_far_field(mut self, f: impl Fn(&[f64], &[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.far_field = Some(Arc::new(f));
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Mat {
        (self.eval)(x, y)
    }
}

/// sigma_i = sqrt(lambda_bar^{1/(n+2)} / lambda_i), lambda_bar the product.
pub fn sigma_from_lambda(lambda: &[f64]) -> Result<Vec<f64>> {
    let n = Dimension::new(lambda.len())?.get();
    let mut prod = 1.0;
    for &l in lambda {
        if !(l > 0.0) {
            return Err(Error::Domain { what: "eigenvalue", value: l });
        }
        prod *= l;
    }
    let top = math::pow(prod, 1.0 / (n as f64 + 2.0));
    Ok(lambda.iter().map(|l| math::sqrt(top / l)).collect())
}

/// Bounds on sigma given eigenvalue bounds [lo, hi].
pub fn sigma_bounds(n: Dimension, lo: f64, hi: f64) -> (f64, f64) {
    let e = n.get() as f64 / (2.0 * (n.get() as f64 + 2.0));
    (math::pow(lo, e) / math::sqrt(hi), math::pow(hi, e) / math::sqrt(lo))
}

/// N_A = O diag(sigma) O^T.
pub fn build_n(a: &SymMatrix) -> Result<SymMatrix> {
    let sp = eigh_sym(a);
    let v = sp.values();
    if !(v[0] > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: v[0] });
    }
    let sigma = sigma_from_lambda(v)?;
    Ok(sp.reassemble(&sigma))
}

/// Exact value of the sphere integral of phi_i^2 (sum sigma_k^2 phi_k^2)^{-(n+2)/2}.
pub fn hyperellipsoid_integral(sigma: &[f64], i: usize) -> Result<f64> {
    let n = Dimension::new(sigma.len())?.get();
    if i >= n {
        return Err(Error::DimensionMismatch { expected: n, found: i });
    }
    let mut prod = 1.0;
    for &s in sigma {
        if !(s > 0.0) {
            return Err(Error::Domain { what: "sigma", value: s });
        }
        prod *= s;
    }
    let nf = n as f64;
    let ve = math::pow(math::PI, nf / 2.0) / (gamma((nf + 2.0) / 2.0)? * prod);
    Ok(ve / (sigma[i] * sigma[i]))
}

/// Quadrature on the unit sphere S^{n-1}. Nodes are stored flat, n per node.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub n: Dimension,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn node(&self, k: usize) -> &[f64] {
        let n = self.n.get();
        &self.nodes[k * n..(k + 1) * n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |k| (self.node(k), self.weights[k]))
    }
}

pub fn sphere_rule(n: Dimension, level: u32) -> Result<SphereRule> {
    if level < 1 {
        return Err(Error::Domain { what: "sphere rule level", value: level as f64 });
    }
    Ok(sphere_rule_sized(n, 1usize << level))
}

/// Rule with resolution multiplier m (level = log2 m).
pub(crate) fn sphere_rule_sized(n: Dimension, m: usize) -> SphereRule {
    match n.get() {
        1 => SphereRule { n, nodes: vec![-1.0, 1.0], weights: vec![1.0, 1.0] },
        2 => {
            let k = 64 * m;
            let mut nodes = Vec::with_capacity(2 * k);
            for j in 0..k {
                let t = 2.0 * math::PI * j as f64 / k as f64;
                nodes.push(math::cos(t));
                nodes.push(math::sin(t));
            }
            SphereRule { n, nodes, weights: vec![2.0 * math::PI / k as f64; k] }
        }
        _ => {
            let gl = GaussLegendre::new(16 * m);
            let kphi = 32 * m;
            let mut nodes = Vec::with_capacity(3 * gl.len() * kphi);
            let mut weights = Vec::with_capacity(gl.len() * kphi);
            for (t, wt) in gl.nodes.iter().zip(&gl.weights) {
                let st = math::sqrt((1.0 - t * t).max(0.0));
                for j in 0..kphi {
                    let p = 2.0 * math::PI * j as f64 / kphi as f64;
                    nodes.push(st * math::cos(p));
                    nodes.push(st * math::sin(p));
                    nodes.push(*t);
                    weights.push(wt * 2.0 * math::PI / kphi as f64);
                }
            }
            SphereRule { n, nodes, weights }
        }
    }
}

/// A_ij = (n / omega) sum_q w_q psi_i psi_j / |N psi|^{n+2}.
pub fn recover_a(nm: &SymMatrix, rule: &SphereRule) -> Result<SymMatrix> {
    recover_a_general(nm.mat(), rule)
}

/// Same formula for an arbitrary (not necessarily symmetric) modulation.
pub fn recover_a_general(nm: &Mat, rule: &SphereRule) -> Result<SymMatrix> {
    let n = nm.dim();
    if rule.n != n {
        return Err(Error::DimensionMismatch { expected: n.get(), found: rule.n.get() });
    }
    if math::abs(nm.det()) < 1e-300 {
        return Err(Error::Singular);
    }
    let p = n.get() as f64 + 2.0;
    let mut acc = [[0.0; 3]; 3];
    for (psi, w) in rule.iter() {
        let r = nm.apply_norm(psi);
        if !(r > 0.0) {
            return Err(Error::Singular);
        }
        let f = w / math::pow(r, p);
        for i in 0..n.get() {
            for j in i..n.get() {
                acc[i][j] += f * psi[i] * psi[j];
            }
        }
    }
    let c = n.get() as f64 / n.omega();
    Ok(SymMatrix::from_fn(n, |i, j| c * acc[i][j]))
}

/// Checks A on a 5^n grid of [-2, 2]^n against its declared bounds.
fn validate_a(a: &MatrixFieldA) -> Result<()> {
    let n = a.n.get();
    let total = 5usize.pow(n as u32);
    let mut x = [0.0; 3];
    for idx in 0..total {
        let mut r = idx;
        for xi in x.iter_mut().take(n) {
            *xi = -2.0 + (r % 5) as f64;
            r /= 5;
        }
        let m = a.eval(&x[..n]);
        if m.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.n() });
        }
        let sp = eigh_sym(&m);
        for &l in sp.values() {
            let slack = 1e-12 * a.upper.max(1.0);
            if l < a.lower - slack || l > a.upper + slack {
                return Err(Error::NotElliptic { eigenvalue: l, lower: a.lower, upper: a.upper });
            }
        }
    }
    Ok(())
}

fn clamped_n(a: &SymMatrix, lo: f64, hi: f64) -> SymMatrix {
    let sp = eigh_sym(a);
    let n = a.n();
    let mut l = [0.0; 3];
    for k in 0..n {
        l[k] = sp.eigenvalues[k].clamp(lo, hi);
    }
    let sigma = sigma_from_lambda(&l[..n]).expect("clamped eigenvalues are positive");
    sp.reassemble(&sigma)
}

/// M(x, y) = (N_{A(x)} + N_{A(x+y)}) / 2 + H(y).
pub fn build_m_field(a: &MatrixFieldA, h: &HPerturbation) -> Result<MatrixFieldM> {
    validate_a(a)?;
    let n = a.n;
    let z = [0.0; 3];
    let h0 = (h.eval)(&z[..n.get()]);
    if h0.mat().max_abs() != 0.0 {
        return Err(Error::Precondition("H(0) must vanish"));
    }
    let (lo, hi) = (a.lower, a.upper);
    let (s_lo, s_hi) = sigma_bounds(n, lo, hi);
    let beta = s_lo;
    let alpha = s_hi + h.bound;

    if let Some(ac) = a.constant {
        let nc = *clamped_n(&ac, lo, hi).mat();
        if h.is_zero {
            let mut m = MatrixFieldM::new(n, alpha, beta, move |_, _| nc)?;
            m.lipschitz = Some(0.0);
            m.far_field = Some(Arc::new(move |_, _| nc));
            m.constant = Some(nc);
            return Ok(m);
        }
        let he = h.eval.clone();
        let mut m = MatrixFieldM::new(n, alpha, beta, move |_, y| nc.add(he(y).mat()))?;
        if let Some(hf) = h.far {
            let limit = nc.add(hf.mat());
            m.far_field = Some(Arc::new(move |_, _| limit));
        }
        return Ok(m);
    }

    let ae = a.eval.clone();
    let he = h.eval.clone();
    let hz = h.is_zero;
    let dim = n.get();
    let m = MatrixFieldM::new(n, alpha, beta, move |x, y| {
        let mut xy = [0.0; 3];
        for k in 0..dim {
            xy[k] = x[k] + y[k];
        }
        let n1 = clamped_n(&ae(x), lo, hi);
        let n2 = clamped_n(&ae(&xy[..dim]), lo, hi);
        let avg = n1.mat().add(n2.mat()).scale(0.5);
        if hz {
            avg
        } else {
            avg.add(he(y).mat())
        }
    })?;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralReport {
    /// Largest violation of beta |xi| <= |M(x-y, y) xi| <= alpha |xi| (relative to |xi|).
    pub ellipticity_violation: f64,
    /// Largest operator norm of M(x-y, y) - M(x, -y).
    pub structural_violation: f64,
    pub samples: usize,
}

/// Samples are flat triples (x, y, xi), each block of length n.
pub fn check_structural(m: &MatrixFieldM, samples: &[f64]) -> StructuralReport {
    let n = m.n.get();
    let mut ell: f64 = 0.0;
    let mut st: f64 = 0.0;
    let mut count = 0;
    for chunk in samples.chunks_exact(3 * n) {
        let (x, rest) = chunk.split_at(n);
        let (y, xi) = rest.split_at(n);
        let mut xmy = [0.0; 3];
        let mut my = [0.0; 3];
        for k in 0..n {
            xmy[k] = x[k] - y[k];
            my[k] = -y[k];
        }
        let a = m.eval(&xmy[..n], y);
        let b = m.eval(x, &my[..n]);
        let xin = math::norm(xi);
        if xin > 0.0 {
            let v = a.apply_norm(xi) / xin;
            ell = ell.max(m.beta - v).max(v - m.alpha);
        }
        st = st.max(operator_norm(&a.sub(&b)));
        count += 1;
    }
    StructuralReport { ellipticity_violation: ell.max(0.0), structural_violation: st, samples: count }
}

/// Normalized radial profile (1 - t^2)^2 on [0, 1].
#[inline]
fn bump(t: f64) -> f64 {
    let u = 1.0 - t * t;
    if u > 0.0 {
        u * u
    } else {
        0.0
    }
}

/// Mass of (1 - |x|^2)_+^2 over R^n.
pub fn bump_mass(n: Dimension) -> f64 {
    match n.get() {
        1 => 16.0 / 15.0,
        2 => math::PI / 3.0,
        _ => 32.0 * math::PI / 105.0,
    }
}

/// Entrywise convolution with the bump of radius 1/ell.
pub fn mollify_a_field(a: &MatrixFieldA, ell: f64) -> Result<MatrixFieldA> {
    if !(ell >= 1.0) {
        return Err(Error::Domain { what: "smoothing index", value: ell });
    }
    if a.constant.is_some() {
        return Ok(a.clone());
    }
    let eps = 1.0 / ell;
    let n = a.n;
    let dim = n.get();
    let ae = a.eval.clone();
    let breaks = a.breakpoints.clone();
    let gl = GaussLegendre::new(10);
    let f: AEval = if dim == 1 {
        Arc::new(move |x: &[f64]| {
            // split the window at jumps of A so each piece is integrated smoothly
            let lo = x[0] - eps;
            let hi = x[0] + eps;
            let mut pts: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
            pts.sort_by(|p, q| p.partial_cmp(q).unwrap_or(core::cmp::Ordering::Equal));
            let mut acc = 0.0;
            let mut wsum = 0.0;
            let mut left = lo;
            for right in pts.into_iter().chain(core::iter::once(hi)) {
                for (z, w) in gl.mapped(left, right) {
                    let wt = w * bump((x[0] - z) / eps);
                    acc += wt * ae(&[z]).get(0, 0);
                    wsum += wt;
                }
                left = right;
            }
            SymMatrix::scaled_identity(Dimension::ONE, acc / wsum)
        })
    } else {
        let rule = sphere_rule_sized(n, 1);
        Arc::new(move |x: &[f64]| {
            let mut acc = [[0.0; 3]; 3];
            let mut wsum = 0.0;
            let mut z = [0.0; 3];
            for (r, wr) in gl.mapped(0.0, eps) {
                let radial = wr * math::pow(r, dim as f64 - 1.0) * bump(r / eps);
                for (psi, wp) in rule.iter() {
                    for k in 0..dim {
                        z[k] = x[k] - r * psi[k];
                    }
                    let m = ae(&z[..dim]);
                    let wt = radial * wp;
                    for i in 0..dim {
                        for j in i..dim {
                            acc[i][j] += wt * m.get(i, j);
                        }
                    }
                    wsum += wt;
                }
            }
            SymMatrix::from_fn(n, |i, j| acc[i][j] / wsum)
        })
    };
    Ok(MatrixFieldA { n, eval: f, lower: a.lower, upper: a.upper, constant: None, breakpoints: Vec::new() })
}

/// Built-in fields.
pub mod catalogue {
    use super::*;

    pub fn identity(n: Dimension) -> MatrixFieldA {
        MatrixFieldA::constant(SymMatrix::identity(n)).expect("identity")
    }

    /// diag(2, 0.5) in 2D, diag(2, 0.5, 1) in 3D, 2 in 1D.
    pub fn anisotropic_diag(n: Dimension) -> MatrixFieldA {
        let d: &[f64] = match n.get() {
            1 => &[2.0],
            2 => &[2.0, 0.5],
            _ => &[2.0, 0.5, 1.0],
        };
        MatrixFieldA::constant(SymMatrix::diag(d).expect("diag")).expect("elliptic")
    }

    /// Eigenvalues (2, 0.5) rotated by the angle x_1 in the (e1, e2) plane.
    /// In 1D the scalar 1.25 + 0.75 sin(x).
    pub fn rotating_field(n: Dimension) -> MatrixFieldA {
        let f = move |x: &[f64]| -> SymMatrix {
            if n.get() == 1 {
                return SymMatrix::scaled_identity(n, 1.25 + 0.75 * math::sin(x[0]));
            }
            let (c, s) = (math::cos(x[0]), math::sin(x[0]));
            let (l1, l2) = (2.0, 0.5);
            SymMatrix::from_fn(n, |i, j| match (i, j) {
                (0, 0) => c * c * l1 + s * s * l2,
                (0, 1) => c * s * (l1 - l2),
                (1, 1) => s * s * l1 + c * c * l2,
                (2, 2) => 1.0,
                _ => 0.0,
            })
        };
        MatrixFieldA::new(n, 0.5, 2.0, f).expect("bounds")
    }

    /// Id for x_1 < 0 and 2 Id for x_1 >= 0.
    pub fn step_field(n: Dimension) -> MatrixFieldA {
        MatrixFieldA::new(n, 1.0, 2.0, move |x: &[f64]| {
            SymMatrix::scaled_identity(n, if x[0] < 0.0 { 1.0 } else { 2.0 })
        })
        .expect("bounds")
        .with_breakpoints(vec![0.0])
    }

    pub fn by_name(name: &str, n: Dimension) -> Option<MatrixFieldA> {
        match name {
            "identity" => Some(identity(n)),
            "anisotropic-diag" => Some(anisotropic_diag(n)),
            "rotating-field" => Some(rotating_field(n)),
            "step-field" => Some(step_field(n)),
            _ => None,
        }
    }

    pub const NAMES: [&str; 4] = ["identity", "anisotropic-diag", "rotating-field", "step-field"];
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_from_lambda(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        let s = sigma_from_lambda(&[2.0, 0.5]).unwrap();
        assert!(close(s[0], 0.5f64.sqrt(), 1e-15) && close(s[1], 2f64.sqrt(), 1e-15));
        let s = sigma_from_lambda(&[1.0, 2.0, 4.0]).unwrap();
        assert!(close(s[0], 1.231_144_413, 1e-8));
        assert!(sigma_from_lambda(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn build_n_examples() {
        let id = SymMatrix::identity(Dimension::TWO);
        assert!(build_n(&id).unwrap().sub(&id).mat().max_abs() < 1e-15);
        let d = build_n(&SymMatrix::diag(&[2.0, 0.5]).unwrap()).unwrap();
        assert!(close(d.get(0, 0), 0.5f64.sqrt(), 1e-14) && close(d.get(1, 1), 2f64.sqrt(), 1e-14));
        let r = SymMatrix::new(Mat::from_rows(&[&[1.25, 0.75], &[0.75, 1.25]]).unwrap()).unwrap();
        let nr = build_n(&r).unwrap();
        assert!(close(nr.get(0, 0), 1.060_660_17, 1e-8));
        assert!(close(nr.get(0, 1), -0.353_553_39, 1e-8));
        assert!(build_n(&SymMatrix::diag(&[1.0, -1.0]).unwrap()).is_err());
    }

    #[test]
    fn hyperellipsoid_examples() {
        let pi = math::PI;
        assert!(close(hyperellipsoid_integral(&[1.0, 1.0], 0).unwrap(), pi, 1e-14));
        assert!(close(hyperellipsoid_integral(&[1.0, 2.0], 0).unwrap(), pi / 2.0, 1e-14));
        assert!(close(hyperellipsoid_integral(&[1.0, 2.0], 1).unwrap(), pi / 8.0, 1e-14));
    }

    #[test]
    fn sphere_rule_examples() {
        let r = sphere_rule(Dimension::ONE, 3).unwrap();
        assert_eq!(r.nodes, vec![-1.0, 1.0]);
        let r = sphere_rule(Dimension::TWO, 1).unwrap();
        assert_eq!(r.len(), 128);
        assert!(r.weights.iter().all(|&w| w == 2.0 * math::PI / 128.0));
        let v: f64 = r.iter().map(|(p, w)| w * p[0] * p[0]).sum();
        assert!(close(v, math::PI, 1e-12));
        let r3 = sphere_rule(Dimension::THREE, 1).unwrap();
        let total: f64 = r3.weights.iter().sum();
        assert!(close(total, 4.0 * math::PI, 1e-10));
        assert!(sphere_rule(Dimension::TWO, 0).is_err());
    }

    #[test]
    fn recover_examples() {
        for n in 1..=3 {
            let d = Dimension::new(n).unwrap();
            let r = sphere_rule(d, 1).unwrap();
            let a = recover_a(&SymMatrix::identity(d), &r).unwrap();
            assert!(a.sub(&SymMatrix::identity(d)).mat().max_abs() < 1e-12, "n={n}");
        }
        let r = sphere_rule(Dimension::TWO, 1).unwrap();
        let nm = SymMatrix::diag(&[0.5f64.sqrt(), 2f64.sqrt()]).unwrap();
        let a = recover_a(&nm, &r).unwrap();
        assert!(close(a.get(0, 0), 2.0, 1e-10) && close(a.get(1, 1), 0.5, 1e-10));
        assert!(a.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn build_m_examples() {
        let d2 = Dimension::TWO;
        let m = build_m_field(&catalogue::identity(d2), &HPerturbation::zero(d2)).unwrap();
        assert_eq!(m.eval(&[0.3, 0.1], &[1.0, 2.0]), Mat::identity(d2));
        let m = build_m_field(&catalogue::anisotropic_diag(d2), &HPerturbation::zero(d2)).unwrap();
        let v = m.eval(&[5.0, -1.0], &[0.2, 0.7]);
        assert!(close(v.get(0, 0), 0.5f64.sqrt(), 1e-14) && close(v.get(1, 1), 2f64.sqrt(), 1e-14));
        let h = HPerturbation::new(1.0, Some(SymMatrix::identity(d2)), move |y: &[f64]| {
            SymMatrix::scaled_identity(d2, (y[0] * y[0] + y[1] * y[1]).min(1.0))
        });
        let m = build_m_field(&catalogue::identity(d2), &h).unwrap();
        assert_eq!(m.eval(&[1.0, 1.0], &[0.0, 0.0]), Mat::identity(d2));
        let v = m.eval(&[1.0, 1.0], &[0.3, 0.4]);
        assert!(close(v.get(0, 0), 1.25, 1e-14));
    }

    #[test]
    fn structural_counterexample() {
        let d2 = Dimension::TWO;
        let m = MatrixFieldM::new(d2, 3.0, 0.1, |x: &[f64], _y: &[f64]| {
            Mat::from_fn(Dimension::TWO, |i, j| match (i, j) {
                (0, 0) | (1, 1) => 1.0,
                (0, 1) => x[0],
                _ => 0.0,
            })
        })
        .unwrap();
        let rep = check_structural(&m, &[0.5, 0.0, 0.3, 0.0, 1.0, 0.0]);
        assert!(rep.structural_violation > 0.1);
        let id = MatrixFieldM::identity(d2);
        let rep = check_structural(&id, &[0.5, 0.0, 0.3, 0.0, 1.0, 0.0]);
        assert_eq!((rep.ellipticity_violation, rep.structural_violation), (0.0, 0.0));
    }

    #[test]
    fn mollify_step() {
        let a = catalogue::step_field(Dimension::ONE);
        let m = mollify_a_field(&a, 4.0).unwrap();
        assert!(close(m.eval(&[-0.3]).get(0, 0), 1.0, 1e-14));
        assert!(close(m.eval(&[0.3]).get(0, 0), 2.0, 1e-14));
        assert!(close(m.eval(&[0.0]).get(0, 0), 1.5, 1e-12));
        let mid = m.eval(&[0.1]).get(0, 0);
        assert!(mid > 1.5 && mid < 2.0);
        let c = catalogue::anisotropic_diag(Dimension::TWO);
        let mc = mollify_a_field(&c, 3.0).unwrap();
        assert_eq!(mc.eval(&[0.2, 0.1]), c.eval(&[0.0, 0.0]));
    }
}
