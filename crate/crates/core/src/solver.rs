//! Semilinear nonlocal Dirichlet problem L u + a h(u) = f by truncation of the
//! data and convex minimization, plus the local P1 solver of the limit problem.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{assemble_stiffness_with, local_stiffness, AssemblyOptions, StiffnessMatrix};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{dot, norm2, Cholesky, DenseMatrix};
use crate::math;
use crate::mesh::{DiscreteFunction, Mesh};
use crate::quadrature::GaussLegendre;
use crate::spectral::MatrixFieldA;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Odd, continuous, strictly increasing h with its inverse on (-gamma, gamma)
/// and primitive H(t) = int_0^t h.
#[derive(Clone)]
pub struct Nonlinearity {
    pub name: &'static str,
    pub h: RealFn,
    pub h_inverse: RealFn,
    pub derivative: Option<RealFn>,
    pub primitive: RealFn,
    /// lim h(t) as t grows; `f64::INFINITY` when unbounded.
    pub gamma: f64,
}

impl core::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Nonlinearity").field("name", &self.name).field("gamma", &self.gamma).finish()
    }
}

impl Nonlinearity {
    pub fn identity() -> Self {
        Nonlinearity {
            name: "identity",
            h: Arc::new(|t| t),
            h_inverse: Arc::new(|t| t),
            derivative: Some(Arc::new(|_| 1.0)),
            primitive: Arc::new(|t| 0.5 * t * t),
            gamma: f64::INFINITY,
        }
    }

    pub fn cubic() -> Self {
        Nonlinearity {
            name: "cubic",
            h: Arc::new(|t| t * t * t),
            h_inverse: Arc::new(math::cbrt),
            derivative: Some(Arc::new(|t| 3.0 * t * t)),
            primitive: Arc::new(|t| 0.25 * t * t * t * t),
            gamma: f64::INFINITY,
        }
    }

    /// arctan, saturating at pi/2.
    pub fn atan() -> Self {
        Nonlinearity {
            name: "atan",
            h: Arc::new(math::atan),
            h_inverse: Arc::new(math::tan),
            derivative: Some(Arc::new(|t| 1.0 / (1.0 + t * t))),
            primitive: Arc::new(|t| t * math::atan(t) - 0.5 * math::ln1p(t * t)),
            gamma: 0.5 * math::PI,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(Self::identity()),
            "cubic" => Some(Self::cubic()),
            "atan" => Some(Self::atan()),
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 3] = ["identity", "cubic", "atan"];

    #[inline]
    pub fn h(&self, t: f64) -> f64 {
        (self.h)(t)
    }

    /// h'(t), analytic when available, else a central difference.
    pub fn dh(&self, t: f64) -> f64 {
        match &self.derivative {
            Some(d) => d(t),
            None => {
                let e = 1e-6 * (1.0 + math::abs(t));
                (self.h(t + e) - self.h(t - e)) / (2.0 * e)
            }
        }
    }
}

/// Data of the problem: weight a >= 0, right-hand side f with |f| <= Q a.
#[derive(Clone)]
pub struct ProblemData {
    pub a: RealFn,
    pub f: RealFn,
    pub q: f64,
    pub nonlinearity: Nonlinearity,
    /// Skips the domination requirement and the truncation loop.
    pub linear: bool,
}

impl core::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemData")
            .field("q", &self.q)
            .field("nonlinearity", &self.nonlinearity)
            .field("linear", &self.linear)
            .finish()
    }
}

impl ProblemData {
    pub fn new(
        a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        q: f64,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        if !(q > 0.0 && q < nonlinearity.gamma) {
            return Err(Error::Domain { what: "Q", value: q });
        }
        Ok(ProblemData { a: Arc::new(a), f: Arc::new(f), q, nonlinearity, linear: false })
    }

    /// Linear mode: h = identity is not enforced, domination is not required.
    pub fn linear(
        a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ProblemData {
            a: Arc::new(a),
            f: Arc::new(f),
            q: f64::NAN,
            nonlinearity: Nonlinearity::identity(),
            linear: true,
        }
    }

    /// Checks a >= 0 and |f| <= Q a at the given points.
    pub fn check_domination(&self, points: &[f64]) -> Result<()> {
        for &x in points {
            let a = (self.a)(x);
            if !(a >= 0.0) {
                return Err(Error::Domain { what: "a", value: a });
            }
            if self.linear {
                continue;
            }
            let f = (self.f)(x);
            let bound = self.q * a;
            if math::abs(f) > bound * (1.0 + 1e-12) {
                return Err(Error::Domination { position: x, f: math::abs(f), bound });
            }
        }
        Ok(())
    }
}

/// G_k(t): zero on [-k, k], shifted identity outside.
pub fn cutoff_g(t: f64, k: f64) -> f64 {
    if t > k {
        t - k
    } else if t < -k {
        t + k
    } else {
        0.0
    }
}

/// (f_j, a_j) = (f / (1 + |f|/j), a / (1 + Q a / j)) for one sample.
#[inline]
pub fn truncate_pair(f: f64, a: f64, q: f64, j: f64) -> (f64, f64) {
    (f / (1.0 + math::abs(f) / j), a / (1.0 + q * a / j))
}

/// Truncated samples of f and a.
pub fn truncate_data(f: &[f64], a: &[f64], q: f64, j: f64) -> (Vec<f64>, Vec<f64>) {
    f.iter().zip(a).map(|(&fv, &av)| truncate_pair(fv, av, q, j)).unzip()
}

/// J(u) = (1/2)<S u, u> + sum w eta H(u) - sum w zeta u.
pub fn energy_j(s: &DenseMatrix, u: &[f64], eta: &[f64], zeta: &[f64], w: &[f64], nl: &Nonlinearity) -> f64 {
    let mut acc = 0.5 * s.quad_form(u);
    for i in 0..u.len() {
        acc += w[i] * (eta[i] * (nl.primitive)(u[i]) - zeta[i] * u[i]);
    }
    acc
}

/// S u + w eta h(u) - w zeta.
pub fn gradient_j(s: &DenseMatrix, u: &[f64], eta: &[f64], zeta: &[f64], w: &[f64], nl: &Nonlinearity) -> Vec<f64> {
    let mut g = s.mul_vec(u);
    for i in 0..u.len() {
        g[i] += w[i] * (eta[i] * nl.h(u[i]) - zeta[i]);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop when |grad J| <= tol (1 + |w zeta|).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-11, max_iter: 200 }
    }
}

/// Damped Newton with Armijo backtracking on the strictly convex J.
/// Returns the minimizer and the number of Newton steps.
pub fn minimize_j(
    s: &DenseMatrix,
    eta: &[f64],
    zeta: &[f64],
    w: &[f64],
    nl: &Nonlinearity,
    opts: &NewtonOptions,
    start: Option<&[f64]>,
) -> Result<(Vec<f64>, usize)> {
    let n = s.rows;
    if eta.len() != n || zeta.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: eta.len() });
    }
    if eta.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::Precondition("eta must be non-negative"));
    }
    let wz: Vec<f64> = w.iter().zip(zeta).map(|(a, b)| a * b).collect();
    let target = opts.tol * (1.0 + norm2(&wz));
    let mut u = match start {
        Some(u0) if u0.len() == n => u0.to_vec(),
        _ => vec![0.0; n],
    };
    let mut g = gradient_j(s, &u, eta, zeta, w, nl);
    let mut gn = norm2(&g);
    for it in 0..opts.max_iter {
        if gn <= target {
            return Ok((u, it));
        }
        let mut hess = s.clone();
        let mut finite = true;
        for i in 0..n {
            let d = nl.dh(u[i]);
            finite &= d.is_finite();
            hess.add_to(i, i, w[i] * eta[i] * d);
        }
        let dir: Vec<f64> = match (finite, Cholesky::factor(&hess)) {
            (true, Ok(ch)) => ch.solve(&g).into_iter().map(|v| -v).collect(),
            _ => g.iter().map(|v| -v).collect(),
        };
        let j0 = energy_j(s, &u, eta, zeta, w, nl);
        let slope = dot(&g, &dir);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let jt = energy_j(s, &trial, eta, zeta, w, nl);
            let gt = gradient_j(s, &trial, eta, zeta, w, nl);
            let gtn = norm2(&gt);
            // near the minimizer J stalls at rounding level; a smaller gradient is then the test
            if jt <= j0 + 1e-4 * t * slope || (t == 1.0 && gtn < 0.5 * gn) {
                u = trial;
                g = gt;
                gn = gtn;
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                return Err(Error::LineSearch { iteration: it, grad_norm: gn, iterate: u });
            }
        }
    }
    if gn <= target {
        return Ok((u, opts.max_iter));
    }
    Err(Error::NonConvergence { what: "Newton", iterations: opts.max_iter, residual: gn })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub assembly: AssemblyOptions,
    pub newton: NewtonOptions,
    /// Outer loop stops when |u_{2j} - u_j|_{L2} <= tol_outer (1 + |f|_{L1}).
    pub tol_outer: f64,
    /// Largest exponent m in j = 2^m.
    pub max_doublings: u32,
    /// Starting iterate for the first Newton solve.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            assembly: AssemblyOptions::default(),
            newton: NewtonOptions::default(),
            tol_outer: 1e-7,
            max_doublings: 48,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub n: usize,
    pub s: f64,
    pub rho: f64,
    pub elements: usize,
    pub q: f64,
    pub norm_inf: f64,
    /// h^{-1}(Q); NaN in linear mode.
    pub bound_inf: f64,
    /// Kernel energy 2<S u, u> (local problem: <T u, u>).
    pub energy: f64,
    pub bound_energy: f64,
    pub outer_iters: usize,
    pub newton_iters: usize,
    pub cert_error: f64,
    pub linear: bool,
}

impl SolverReport {
    /// Slack 1e-6 + 5% of the bound.
    pub fn slack(bound: f64) -> f64 {
        1e-6 + 0.05 * bound
    }

    pub fn linf_ok(&self) -> bool {
        self.linear || self.norm_inf <= self.bound_inf + Self::slack(self.bound_inf)
    }

    pub fn energy_ok(&self) -> bool {
        self.linear || self.energy <= self.bound_energy + Self::slack(self.bound_energy)
    }

    pub fn bounds_hold(&self) -> bool {
        self.linf_ok() && self.energy_ok()
    }
}

fn l1_norm(mesh: &Mesh, f: &RealFn) -> f64 {
    let gl = GaussLegendre::new(8);
    let mut acc = 0.0;
    for e in 0..mesh.elements {
        acc += gl.integrate(mesh.node(e), mesh.node(e + 1), |x| math::abs(f(x)));
    }
    acc
}

/// Domination is checked at nodes, midpoints and the Gauss points of the L1 norms.
/// Nodes and Gauss points, where the data enter the discrete problem.
pub fn sample_points(mesh: &Mesh) -> Vec<f64> {
    let gl = GaussLegendre::new(8);
    let mut pts = mesh.all_nodes();
    for e in 0..mesh.elements {
        pts.extend(gl.mapped(mesh.node(e), mesh.node(e + 1)).map(|(x, _)| x));
    }
    pts
}

struct Meta {
    n: usize,
    s: f64,
    rho: f64,
    cert_error: f64,
    local: bool,
}

pub fn solve_semilinear(
    k: &KernelSpec,
    mesh: &Mesh,
    data: &ProblemData,
    opts: &SolverOptions,
) -> Result<(DiscreteFunction, SolverReport)> {
    data.check_domination(&sample_points(mesh))?;
    let st = assemble_stiffness_with(k, mesh, &opts.assembly)?;
    solve_with_stiffness(k, &st, mesh, data, opts)
}

/// Same as `solve_semilinear` with a previously assembled matrix.
pub fn solve_with_stiffness(
    k: &KernelSpec,
    st: &StiffnessMatrix,
    mesh: &Mesh,
    data: &ProblemData,
    opts: &SolverOptions,
) -> Result<(DiscreteFunction, SolverReport)> {
    let meta = Meta { n: k.n.get(), s: k.s, rho: k.rho, cert_error: st.cert_error, local: false };
    run_outer(&st.matrix, mesh, data, opts, meta)
}

pub fn solve_local_fem(
    a: &MatrixFieldA,
    mesh: &Mesh,
    data: &ProblemData,
    opts: &SolverOptions,
) -> Result<(DiscreteFunction, SolverReport)> {
    data.check_domination(&sample_points(mesh))?;
    let t = local_stiffness(a, mesh)?;
    let meta = Meta { n: a.n.get(), s: 1.0, rho: 0.0, cert_error: 0.0, local: true };
    run_outer(&t, mesh, data, opts, meta)
}

fn run_outer(
    s: &DenseMatrix,
    mesh: &Mesh,
    data: &ProblemData,
    opts: &SolverOptions,
    meta: Meta,
) -> Result<(DiscreteFunction, SolverReport)> {
    let nodes = mesh.interior_nodes();
    let w = mesh.lumped_weights();
    let a: Vec<f64> = nodes.iter().map(|&x| (data.a)(x)).collect();
    let f: Vec<f64> = nodes.iter().map(|&x| (data.f)(x)).collect();
    let nl = &data.nonlinearity;
    let f_l1 = l1_norm(mesh, &data.f);
    let a_l1 = l1_norm(mesh, &data.a);

    let mut newton_total = 0;
    let mut outer = 0;
    let u = if data.linear {
        let (u, it) = minimize_j(s, &a, &f, &w, nl, &opts.newton, opts.initial.as_deref())?;
        newton_total += it;
        u
    } else {
        let tol = opts.tol_outer * (1.0 + f_l1);
        let mut prev: Option<DiscreteFunction> = None;
        let mut start = opts.initial.clone();
        let mut found = None;
        let mut last_gap = f64::INFINITY;
        for m in 0..=opts.max_doublings {
            let j = math::pow(2.0, m as f64);
            let (fj, aj) = truncate_data(&f, &a, data.q, j);
            let (u, it) = minimize_j(s, &aj, &fj, &w, nl, &opts.newton, start.as_deref())?;
            newton_total += it;
            outer += 1;
            let cur = DiscreteFunction { mesh: mesh.clone(), coeffs: u };
            if let Some(p) = &prev {
                last_gap = cur.l2_distance(p)?;
                if last_gap <= tol {
                    found = Some(cur.coeffs);
                    break;
                }
            }
            start = Some(cur.coeffs.clone());
            prev = Some(cur);
        }
        match found {
            Some(u) => u,
            None => {
                return Err(Error::NonConvergence {
                    what: "truncation loop",
                    iterations: outer,
                    residual: last_gap,
                })
            }
        }
    };
    let sol = DiscreteFunction { mesh: mesh.clone(), coeffs: u };
    let quad = s.quad_form(&sol.coeffs);
    let (bound_inf, bound_energy) = if data.linear {
        (f64::NAN, f64::NAN)
    } else {
        let k = (nl.h_inverse)(data.q);
        let b = k * (f_l1 + data.q * a_l1);
        (k, if meta.local { b } else { 2.0 * b })
    };
    let report = SolverReport {
        n: meta.n,
        s: meta.s,
        rho: meta.rho,
        elements: mesh.elements,
        q: data.q,
        norm_inf: sol.max_abs(),
        bound_inf,
        energy: if meta.local { quad } else { 2.0 * quad },
        bound_energy,
        outer_iters: outer,
        newton_iters: newton_total,
        cert_error: meta.cert_error,
        linear: data.linear,
    };
    Ok((sol, report))
}
