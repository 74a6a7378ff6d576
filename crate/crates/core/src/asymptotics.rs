//! Limits in s of the nonlocal form and of the solutions: s -> 1 against the
//! local form, s -> 0 against the mass term, solution sweeps and the
//! mollified-coefficient double limit.

use alloc::vec;
use alloc::vec::Vec;

use crate::algebra::{gamma, Dimension, Mat};
use crate::assembly::gagliardo_seminorm;
use crate::error::{Error, Result};
use crate::kernel::{singular_radial, KernelSpec, SmoothProbe};
use crate::math;
use crate::mesh::{DiscreteFunction, Mesh};
use crate::quadrature::{log_composite, power_tail, GaussLegendre};
use crate::solver::{solve_local_fem, solve_semilinear, ProblemData, SolverOptions, SolverReport};
use crate::spectral::{
    build_m_field, mollify_a_field, recover_a_general, sphere_rule, sphere_rule_sized, HPerturbation, MatrixFieldA,
    MatrixFieldM, SphereRule,
};

pub const S1_GRID: [f64; 5] = [0.7, 0.8, 0.9, 0.95, 0.99];
pub const S0_GRID: [f64; 4] = [0.2, 0.1, 0.05, 0.01];
pub const SWEEP_GRID: [f64; 4] = [0.6, 0.75, 0.9, 0.95];

/// Panel width of the x-quadrature; products of Gaussians need no more than
/// this for 1e-6 relative accuracy in several dimensions.
fn x_panel(n: usize) -> f64 {
    if n == 1 {
        1.0
    } else {
        1.5
    }
}

fn direction_rule(n: Dimension) -> SphereRule {
    sphere_rule_sized(n, 1)
}

/// Per-coordinate breakpoints of the x-integration for the shift y.
fn breakpoints(r_supp: f64, y: f64, kinks: &[f64]) -> Vec<f64> {
    let mut b = vec![-r_supp, r_supp, y - r_supp, y + r_supp];
    for &k in kinks {
        b.push(k);
        b.push(k + y);
    }
    b.sort_by(|p, q| p.partial_cmp(q).unwrap_or(core::cmp::Ordering::Equal));
    b.dedup_by(|a, b| math::abs(*a - *b) < 1e-14);
    b
}

/// Gauss nodes over [a, b] split into panels no wider than `width`.
fn panel_nodes(gl: &GaussLegendre, a: f64, b: f64, width: f64, out: &mut Vec<(f64, f64)>) {
    let panels = (math::ceil((b - a) / width) as usize).max(1);
    let w = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + w * p as f64;
        out.extend(gl.mapped(lo, lo + w));
    }
}

/// Integral over R^n of g(x, x - y) when g vanishes outside the union of the
/// cube [-R, R]^n and its translate by y. Disjoint translates are integrated
/// in their own coordinates so that huge shifts do not round x - y away.
fn shifted_box_integral(
    n: usize,
    gl: &GaussLegendre,
    r_supp: f64,
    y: &[f64],
    kinks: &[f64],
    mut g: impl FnMut(&[f64], &[f64]) -> f64,
) -> f64 {
    let disjoint = (0..n).any(|i| math::abs(y[i]) >= 2.0 * r_supp);
    if disjoint {
        let shifted = |sign: f64| -> Vec<f64> {
            let mut k = kinks.to_vec();
            k.extend(kinks.iter().map(|v| v + sign * y[0]));
            k
        };
        let mut other = [0.0; 3];
        let first = box_integral(n, gl, r_supp, &shifted(1.0), |x| {
            for i in 0..n {
                other[i] = x[i] - y[i];
            }
            g(x, &other[..n])
        });
        let second = box_integral(n, gl, r_supp, &shifted(-1.0), |z| {
            for i in 0..n {
                other[i] = z[i] + y[i];
            }
            g(&other[..n], z)
        });
        return first + second;
    }
    let bps: Vec<Vec<f64>> =
        (0..n).map(|i| breakpoints(r_supp, y[i], if n == 1 { kinks } else { &[] })).collect();
    let inside = |mid: &[f64]| {
        let a = (0..n).all(|i| math::abs(mid[i]) < r_supp);
        let b = (0..n).all(|i| math::abs(mid[i] - y[i]) < r_supp);
        a || b
    };
    let counts: Vec<usize> = bps.iter().map(|b| b.len() - 1).collect();
    let mut idx = vec![0usize; n];
    let mut acc = 0.0;
    let mut nodes: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    let mut mid = [0.0; 3];
    let mut x = [0.0; 3];
    let mut z = [0.0; 3];
    let mut gx = |x: &[f64]| {
        for i in 0..n {
            z[i] = x[i] - y[i];
        }
        g(x, &z[..n])
    };
    loop {
        for i in 0..n {
            mid[i] = 0.5 * (bps[i][idx[i]] + bps[i][idx[i] + 1]);
        }
        if inside(&mid[..n]) {
            for i in 0..n {
                nodes[i].clear();
                panel_nodes(gl, bps[i][idx[i]], bps[i][idx[i] + 1], x_panel(n), &mut nodes[i]);
            }
            acc += tensor_sum(n, &nodes, &mut x, &mut gx);
        }
        // next cell
        let mut d = 0;
        loop {
            if d == n {
                return acc;
            }
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn tensor_sum(n: usize, nodes: &[Vec<(f64, f64)>], x: &mut [f64; 3], g: &mut impl FnMut(&[f64]) -> f64) -> f64 {
    match n {
        1 => nodes[0].iter().map(|&(a, w)| w * g(&[a])).sum(),
        2 => {
            let mut acc = 0.0;
            for &(a, wa) in &nodes[0] {
                x[0] = a;
                for &(b, wb) in &nodes[1] {
                    x[1] = b;
                    acc += wa * wb * g(&x[..2]);
                }
            }
            acc
        }
        _ => {
            let mut acc = 0.0;
            for &(a, wa) in &nodes[0] {
                x[0] = a;
                for &(b, wb) in &nodes[1] {
                    x[1] = b;
                    for &(c, wc) in &nodes[2] {
                        x[2] = c;
                        acc += wa * wb * wc * g(&x[..3]);
                    }
                }
            }
            acc
        }
    }
}

/// Gauss quadrature over the cube [-R, R]^n (split at kinks in 1D).
fn box_integral(n: usize, gl: &GaussLegendre, r_supp: f64, kinks: &[f64], mut g: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut b: Vec<f64> = vec![-r_supp, r_supp];
    if n == 1 {
        b.extend(kinks.iter().copied().filter(|k| math::abs(*k) < r_supp));
    }
    b.sort_by(|p, q| p.partial_cmp(q).unwrap_or(core::cmp::Ordering::Equal));
    b.dedup_by(|a, b| math::abs(*a - *b) < 1e-14);
    let mut line = Vec::new();
    for w in b.windows(2) {
        panel_nodes(gl, w[0], w[1], x_panel(n), &mut line);
    }
    let nodes = vec![line; n];
    let mut x = [0.0; 3];
    tensor_sum(n, &nodes, &mut x, &mut g)
}

fn merged_kinks(u: &SmoothProbe, phi: &SmoothProbe) -> Vec<f64> {
    let mut k = u.kinks.clone();
    k.extend_from_slice(&phi.kinks);
    k.sort_by(|p, q| p.partial_cmp(q).unwrap_or(core::cmp::Ordering::Equal));
    k.dedup_by(|a, b| math::abs(*a - *b) < 1e-14);
    k
}

fn check_pair(n: Dimension, u: &SmoothProbe, phi: &SmoothProbe) -> Result<f64> {
    for p in [u, phi] {
        if p.n != n {
            return Err(Error::DimensionMismatch { expected: n.get(), found: p.n.get() });
        }
        if !p.support_radius.is_finite() {
            return Err(Error::Precondition("probes need bounded support"));
        }
    }
    Ok(u.support_radius.max(phi.support_radius))
}

/// (c/2) int int_{|y| < rho} (u(x) - u(x-y)) (phi(x) - phi(x-y)) / |M(x-y, y) y|^{n+2s} dx dy.
pub fn fractional_form(u: &SmoothProbe, phi: &SmoothProbe, k: &KernelSpec) -> Result<f64> {
    let n = k.n.get();
    let r_supp = check_pair(k.n, u, phi)?;
    let kinks = merged_kinks(u, phi);
    let resolution = match (u.resolution, phi.resolution) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let gl_x = GaussLegendre::new(if resolution.is_some() { 4 } else { 8 });
    let gl_r = GaussLegendre::new(if n == 1 { 12 } else { 8 });
    let rule = direction_rule(k.n);
    let p = k.exponent();

    let radial = |psi: &[f64], r: f64| -> f64 {
        let mut y = [0.0; 3];
        for i in 0..n {
            y[i] = r * psi[i];
        }
        let y = &y[..n];
        let cfac = k.m.constant.as_ref().map(|m| math::pow(m.apply_norm(psi), -p));
        shifted_box_integral(n, &gl_x, r_supp, y, &kinks, |x, z| {
            let du = u.value(x) - u.value(z);
            if du == 0.0 {
                return 0.0;
            }
            let dphi = phi.value(x) - phi.value(z);
            let kf = match cfac {
                Some(c) => c,
                None => math::pow(k.m.eval(z, y).apply_norm(psi), -p),
            };
            du * dphi * kf
        })
    };

    let r_out = 2.0 * r_supp + 1.0;
    let b = k.rho.min(r_out);
    let mut eps: f64 = 1e-3;
    if let Some(h) = resolution {
        eps = eps.min(0.125 * h);
    }
    // F(r, psi) = F(r, -psi) when M does not depend on x
    let even = k.m.constant.is_some();
    let mut acc = 0.0;
    for (psi, w) in rule.iter() {
        let w = if even {
            match psi.iter().find(|v| math::abs(**v) > 1e-12) {
                Some(v) if *v < 0.0 => continue,
                _ => 2.0 * w,
            }
        } else {
            w
        };
        let near = singular_radial(&gl_r, k.s, 2.0, eps, b, |r| radial(psi, r));
        let tail = if k.rho > r_out { power_tail(&gl_r, k.s, r_out, k.rho, 8, |r| radial(psi, r)) } else { 0.0 };
        acc += w * (near + tail);
    }
    Ok(0.5 * k.c * acc)
}

/// sum_ij int A_ij d_i u d_j phi dx.
pub fn local_form(u: &SmoothProbe, phi: &SmoothProbe, a: &MatrixFieldA) -> Result<f64> {
    let n = a.n.get();
    let r_supp = check_pair(a.n, u, phi)?;
    let mut kinks = merged_kinks(u, phi);
    if n == 1 {
        kinks.extend_from_slice(&a.breakpoints);
    }
    let gl = GaussLegendre::new(8);
    let mut gu = [0.0; 3];
    let mut gp = [0.0; 3];
    Ok(box_integral(n, &gl, r_supp, &kinks, |x| {
        (u.gradient)(x, &mut gu[..n]);
        (phi.gradient)(x, &mut gp[..n]);
        let am = a.eval(x);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += am.get(i, j) * gu[i] * gp[j];
            }
        }
        acc
    }))
}

/// Local coefficient field attached to M: A(x) from M(x, 0) through the sphere formula.
pub fn limit_a_field(m: &MatrixFieldM) -> Result<MatrixFieldA> {
    let n = m.n;
    let level = if n.get() == 3 { 1 } else { 2 };
    let rule = sphere_rule(n, level)?;
    if let Some(c) = m.constant {
        return MatrixFieldA::constant(recover_a_general(&c, &rule)?);
    }
    let e = n.get() as f64 + 2.0;
    let lower = math::pow(m.alpha, -e);
    let upper = math::pow(m.beta, -e);
    let me = m.eval.clone();
    let zero = [0.0; 3];
    MatrixFieldA::new(n, lower, upper, move |x| {
        let mx = me(x, &zero[..n.get()]);
        recover_a_general(&mx, &rule).expect("elliptic modulation")
    })
}

/// Which limit a report tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    /// s -> 1, target the local form.
    One,
    /// s -> 0 without horizon, target the mass term.
    ZeroInfinite,
    /// s -> 0 with finite horizon, target 0; relative errors use the largest |B_s| on the grid.
    ZeroFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormLimitReport {
    pub kind: LimitKind,
    /// Strictly increasing.
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    pub target: f64,
    pub abs_err: Vec<f64>,
    pub rel_err: Vec<f64>,
    /// Errors shrink monotonically toward the limit end of the grid.
    pub monotone: bool,
}

impl FormLimitReport {
    /// Report from (s, B_s) pairs in any order.
    pub fn from_pairs(kind: LimitKind, mut pairs: Vec<(f64, f64)>, target: f64) -> Result<Self> {
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
        if pairs.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Precondition("s grid must not repeat values"));
        }
        let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let values: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let abs_err: Vec<f64> = values.iter().map(|v| math::abs(v - target)).collect();
        let scale = match kind {
            LimitKind::ZeroFinite => values.iter().fold(0.0, |m: f64, v| m.max(math::abs(*v))),
            _ => math::abs(target),
        };
        let rel_err: Vec<f64> = abs_err.iter().map(|e| if scale > 0.0 { e / scale } else { *e }).collect();
        let monotone = match kind {
            LimitKind::One => abs_err.windows(2).all(|w| w[1] < w[0]),
            _ => abs_err.windows(2).all(|w| w[0] < w[1]),
        };
        Ok(FormLimitReport { kind, s, values, target, abs_err, rel_err, monotone })
    }

    /// Relative error at the end of the grid closest to the limit.
    pub fn final_rel_error(&self) -> f64 {
        match self.kind {
            LimitKind::One => *self.rel_err.last().unwrap_or(&f64::NAN),
            _ => *self.rel_err.first().unwrap_or(&f64::NAN),
        }
    }

    /// Relative error at the end of the grid farthest from the limit.
    pub fn initial_rel_error(&self) -> f64 {
        match self.kind {
            LimitKind::One => *self.rel_err.first().unwrap_or(&f64::NAN),
            _ => *self.rel_err.last().unwrap_or(&f64::NAN),
        }
    }
}

fn form_values(u: &SmoothProbe, phi: &SmoothProbe, m: &MatrixFieldM, rho: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&s| {
            let k = KernelSpec::new(m.clone(), rho, s)?;
            Ok((s, fractional_form(u, phi, &k)?))
        })
        .collect()
}

pub fn form_limit_s1(
    u: &SmoothProbe,
    phi: &SmoothProbe,
    m: &MatrixFieldM,
    rho: f64,
    grid: &[f64],
) -> Result<FormLimitReport> {
    let target = local_form(u, phi, &limit_a_field(m)?)?;
    FormLimitReport::from_pairs(LimitKind::One, form_values(u, phi, m, rho, grid)?, target)
}

/// (1/omega) int u phi(x) int_S |M_inf(x, psi) psi|^{-n} dpsi dx.
pub fn mass_target(u: &SmoothProbe, phi: &SmoothProbe, m: &MatrixFieldM) -> Result<f64> {
    let n = m.n.get();
    let far = m.far_field.clone().ok_or(Error::Precondition("no far-field limit of M available"))?;
    let r_supp = check_pair(m.n, u, phi)?;
    let rule = direction_rule(m.n);
    let gl = GaussLegendre::new(8);
    let kinks = merged_kinks(u, phi);
    let omega = m.n.omega();
    let nf = n as f64;
    let weight = |x: &[f64]| -> f64 {
        rule.iter().map(|(psi, w)| w * math::pow(far(x, psi).apply_norm(psi), -nf)).sum::<f64>()
    };
    let constant_weight = m.constant.map(|_| weight(&[0.0; 3][..n]));
    Ok(box_integral(n, &gl, r_supp, &kinks, |x| {
        let uv = u.value(x) * phi.value(x);
        if uv == 0.0 {
            return 0.0;
        }
        uv * constant_weight.unwrap_or_else(|| weight(x))
    }) / omega)
}

pub fn form_limit_s0(
    u: &SmoothProbe,
    phi: &SmoothProbe,
    m: &MatrixFieldM,
    rho: f64,
    grid: &[f64],
) -> Result<FormLimitReport> {
    let (kind, target) = if rho.is_finite() {
        (LimitKind::ZeroFinite, 0.0)
    } else {
        (LimitKind::ZeroInfinite, mass_target(u, phi, m)?)
    };
    FormLimitReport::from_pairs(kind, form_values(u, phi, m, rho, grid)?, target)
}

/// Solutions u_s of the nonlocal problems compared to the local solution u_1.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub s: Vec<f64>,
    /// |u_s - u_1|_{L2}.
    pub l2_dist: Vec<f64>,
    /// max over nodes of |u_s - u_1|.
    pub max_diff: Vec<f64>,
    pub linf: Vec<f64>,
    pub bound_inf: Vec<f64>,
    pub reports: Vec<SolverReport>,
    pub local: SolverReport,
}

/// Outcome of a monotonicity test with a noise allowance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Strict,
    /// One adjacent pair inverted by less than the allowance.
    Noisy,
    Broken,
}

pub fn decreasing_trend(v: &[f64], allowance: f64) -> Trend {
    let mut inversions = 0;
    for w in v.windows(2) {
        if !(w[1] < w[0]) {
            if w[1] - w[0] < allowance {
                inversions += 1;
            } else {
                return Trend::Broken;
            }
        }
    }
    match inversions {
        0 => Trend::Strict,
        1 => Trend::Noisy,
        _ => Trend::Broken,
    }
}

impl SweepReport {
    pub fn from_members(
        reference: &DiscreteFunction,
        local: SolverReport,
        members: Vec<(f64, DiscreteFunction, SolverReport)>,
    ) -> Result<Self> {
        let mut out = SweepReport {
            s: Vec::new(),
            l2_dist: Vec::new(),
            max_diff: Vec::new(),
            linf: Vec::new(),
            bound_inf: Vec::new(),
            reports: Vec::new(),
            local,
        };
        for (s, u, rep) in members {
            out.s.push(s);
            out.l2_dist.push(u.l2_distance(reference)?);
            let md = u.coeffs.iter().zip(&reference.coeffs).fold(0.0, |m: f64, (a, b)| m.max(math::abs(a - b)));
            out.max_diff.push(md);
            out.linf.push(rep.norm_inf);
            out.bound_inf.push(rep.bound_inf);
            out.reports.push(rep);
        }
        Ok(out)
    }

    pub fn all_bounds_hold(&self) -> bool {
        self.local.bounds_hold() && self.reports.iter().all(|r| r.bounds_hold())
    }

    pub fn trend(&self) -> Trend {
        decreasing_trend(&self.l2_dist, 1e-6)
    }
}

/// Modulation of the kernel family attached to A (no perturbation).
pub fn modulation_for(a: &MatrixFieldA) -> Result<MatrixFieldM> {
    build_m_field(a, &HPerturbation::zero(a.n))
}

/// One member of a sweep: the nonlocal solution at s.
pub fn sweep_member(
    m: &MatrixFieldM,
    rho: f64,
    s: f64,
    mesh: &Mesh,
    data: &ProblemData,
    opts: &SolverOptions,
) -> Result<(DiscreteFunction, SolverReport)> {
    let k = KernelSpec::new(m.clone(), rho, s)?;
    solve_semilinear(&k, mesh, data, opts)
}

pub fn sweep_s(
    a: &MatrixFieldA,
    rho: f64,
    mesh: &Mesh,
    data: &ProblemData,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<SweepReport> {
    let (u1, local) = solve_local_fem(a, mesh, data, opts)?;
    let m = modulation_for(a)?;
    sweep_against(&m, rho, mesh, data, grid, opts, &u1, local)
}

#[allow(clippy::too_many_arguments)]
fn sweep_against(
    m: &MatrixFieldM,
    rho: f64,
    mesh: &Mesh,
    data: &ProblemData,
    grid: &[f64],
    opts: &SolverOptions,
    reference: &DiscreteFunction,
    local: SolverReport,
) -> Result<SweepReport> {
    let mut members = Vec::with_capacity(grid.len());
    for &s in grid {
        let (u, rep) = sweep_member(m, rho, s, mesh, data, opts)?;
        members.push((s, u, rep));
    }
    SweepReport::from_members(reference, local, members)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingReport {
    pub ells: Vec<f64>,
    /// Row l: sweep with the field mollified at scale 1/ell, distances to the rough u_1.
    pub rows: Vec<SweepReport>,
    /// |u_{1,ell} - u_1|_{L2}.
    pub outer: Vec<f64>,
    pub rough: SolverReport,
}

impl SmoothingReport {
    pub fn all_bounds_hold(&self) -> bool {
        self.rough.bounds_hold() && self.rows.iter().all(|r| r.all_bounds_hold())
    }
}

pub fn smoothing_sweep(
    a: &MatrixFieldA,
    ells: &[f64],
    grid: &[f64],
    rho: f64,
    mesh: &Mesh,
    data: &ProblemData,
    opts: &SolverOptions,
) -> Result<SmoothingReport> {
    let (u1, rough) = solve_local_fem(a, mesh, data, opts)?;
    let mut rows = Vec::with_capacity(ells.len());
    let mut outer = Vec::with_capacity(ells.len());
    for &ell in ells {
        let al = mollify_a_field(a, ell)?;
        let (u1l, local) = solve_local_fem(&al, mesh, data, opts)?;
        outer.push(u1l.l2_distance(&u1)?);
        let m = modulation_for(&al)?;
        rows.push(sweep_against(&m, rho, mesh, data, grid, opts, &u1, local)?);
    }
    Ok(SmoothingReport { ells: ells.to_vec(), rows, outer, rough })
}

/// Normalized transform of the bump (1 - t^2)^2 on [-1, 1].
pub fn bump_transform(k: f64) -> f64 {
    let a = math::abs(k);
    if a < 0.2 {
        let k2 = a * a;
        // moments of the bump: 1/7, 1/21, 5/231, 5/429
        let k4 = k2 * k2;
        return 1.0 - k2 / 14.0 + k4 / 504.0 - k4 * k2 / 33264.0 + k4 * k4 / 3459456.0;
    }
    15.0 * ((3.0 - a * a) * math::sin(a) - 3.0 * a * math::cos(a)) / math::pow(a, 5.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedReport {
    pub s: f64,
    /// [u]_s from the Fourier representation.
    pub seminorm: f64,
    /// [u]_s from the assembled stiffness matrix.
    pub assembled: f64,
    pub eps: Vec<f64>,
    /// [u_eps]_s.
    pub mollified: Vec<f64>,
}

impl MollifiedReport {
    pub fn all_contract(&self, tol: f64) -> bool {
        self.mollified.iter().all(|v| *v <= self.seminorm + tol)
    }
}

/// [u_eps]_s for u_eps = eta_eps * u, with [v]_s^2 = (2/pi) int_0^inf xi^{2s} |v^(xi)|^2 dxi.
pub fn mollified_seminorm_check(u: &DiscreteFunction, eps: &[f64], s: f64) -> Result<MollifiedReport> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain { what: "s", value: s });
    }
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Domain { what: "mollification radius", value: eps.iter().cloned().fold(f64::NAN, f64::min) });
    }
    let mesh = &u.mesh;
    let h = mesh.h();
    let x0 = mesh.node(1);
    let c = &u.coeffs;
    let len = mesh.hi - mesh.lo;
    let two_s = 2.0 * s;
    let gl = GaussLegendre::new(12);
    let width = 0.25 * math::PI / len;
    let t_max = 800.0 / h;

    // integrand without the bump factor: 2 xi^{2s} h^2 sinc^4(xi h/2) |sum u_i e^{i xi x_i}|^2 / pi
    let base = |xi: f64| -> f64 {
        let (sr, si) = (math::cos(xi * h), math::sin(xi * h));
        let (mut er, mut ei) = (math::cos(xi * x0), math::sin(xi * x0));
        let (mut vr, mut vi) = (0.0, 0.0);
        for &ci in c {
            vr += ci * er;
            vi += ci * ei;
            let t = er * sr - ei * si;
            ei = er * si + ei * sr;
            er = t;
        }
        let half = 0.5 * xi * h;
        let sinc = if half < 1e-4 { 1.0 - half * half / 6.0 } else { math::sin(half) / half };
        let s2 = sinc * sinc;
        2.0 * h * h * s2 * s2 * (vr * vr + vi * vi) / math::PI
    };

    let mut plain = 0.0;
    let mut moll = vec![0.0; eps.len()];
    let mut add = |xi: f64, w: f64, weight_xi: f64| {
        let b = base(xi) * w * weight_xi;
        plain += b;
        for (m, e) in moll.iter_mut().zip(eps) {
            let t = bump_transform(e * xi);
            *m += b * t * t;
        }
    };
    // first panel with the xi^{2s} weight handled exactly
    let k1 = two_s + 1.0;
    let scale = math::pow(width, k1) / k1;
    for (tau, w) in gl.mapped(0.0, 1.0) {
        add(width * math::pow(tau, 1.0 / k1), scale * w, 1.0);
    }
    let panels = math::ceil((t_max - width) / width) as usize;
    for p in 0..panels {
        let a = width * (p + 1) as f64;
        for (xi, w) in gl.mapped(a, a + width) {
            add(xi, w, math::pow(xi, two_s));
        }
    }
    let t_end = width * (panels + 1) as f64;

    // tail: sin^4(xi h/2) |V|^2 replaced by its mean
    let mut mean = 0.0;
    for i in 0..c.len() {
        mean += 0.375 * c[i] * c[i];
        if i + 1 < c.len() {
            mean -= 0.5 * c[i] * c[i + 1];
        }
        if i + 2 < c.len() {
            mean += 0.125 * c[i] * c[i + 2];
        }
    }
    let amp = 32.0 * mean / (h * h * math::PI);
    plain += amp * math::pow(t_end, two_s - 3.0) / (3.0 - two_s);
    for (m, e) in moll.iter_mut().zip(eps) {
        let g = log_composite(&gl, t_end, 1e6 * t_end, 0.25, |xi| {
            let t = bump_transform(e * xi);
            math::pow(xi, two_s - 4.0) * t * t
        });
        *m += amp * g;
    }
    Ok(MollifiedReport {
        s,
        seminorm: math::sqrt(plain.max(0.0)),
        assembled: gagliardo_seminorm(u, s)?,
        eps: eps.to_vec(),
        mollified: moll.into_iter().map(|v| math::sqrt(v.max(0.0))).collect(),
    })
}

/// Closed-form references.
pub mod reference {
    use super::*;

    /// Solution of the fractional torsion problem on (-1, 1) with unit right-hand side.
    pub fn getoor_torsion(s: f64, x: f64) -> f64 {
        let t = 1.0 - x * x;
        if t <= 0.0 {
            return 0.0;
        }
        let g = gamma(0.5 + s).unwrap_or(f64::NAN) * gamma(1.0 + s).unwrap_or(f64::NAN);
        math::pow(2.0, -2.0 * s) * math::sqrt(math::PI) / g * math::pow(t, s)
    }

    /// -u'' + u = 0.4 on (-1, 1), u(+-1) = 0.
    pub fn cosh_benchmark(x: f64) -> f64 {
        0.4 * (1.0 - math::cosh(x) / math::cosh(1.0))
    }

    /// (-Delta)^s applied to exp(-x^2), evaluated at 0.
    pub fn gaussian_fractional_laplacian_at_zero(s: f64) -> f64 {
        math::pow(4.0, s) * gamma(s + 0.5).unwrap_or(f64::NAN) / math::sqrt(math::PI)
    }

    /// int (u')^2 for u = exp(-x^2).
    pub fn gaussian_dirichlet_1d() -> f64 {
        math::sqrt(0.5 * math::PI)
    }

    /// Constant modulation diag(d).
    pub fn diagonal_modulation(d: &[f64]) -> Result<MatrixFieldM> {
        MatrixFieldM::constant(Mat::diag(d)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::probes;
    use crate::spectral::catalogue;

    #[test]
    fn bump_transform_against_quadrature() {
        let gl = GaussLegendre::new(40);
        for &k in &[0.05, 0.19, 0.2, 0.21, 1.0, 5.0] {
            let q = gl.integrate(-1.0, 1.0, |t| (1.0 - t * t) * (1.0 - t * t) * math::cos(k * t)) * 15.0 / 16.0;
            assert!((bump_transform(k) - q).abs() < 1e-11, "k={k}");
        }
        assert_eq!(bump_transform(0.0), 1.0);
    }

    #[test]
    fn local_form_gaussian() {
        let g = probes::gaussian(Dimension::ONE);
        let id = catalogue::identity(Dimension::ONE);
        let v = local_form(&g, &g, &id).unwrap();
        assert!((v - reference::gaussian_dirichlet_1d()).abs() < 1e-9);
        let two = MatrixFieldA::constant(crate::SymMatrix::scaled_identity(Dimension::ONE, 2.0)).unwrap();
        assert!((local_form(&g, &g, &two).unwrap() - 2.0 * v).abs() < 1e-12);
    }

    #[test]
    fn zero_probe_form() {
        let g = probes::gaussian(Dimension::ONE);
        let z = probes::zero(Dimension::ONE);
        let k = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, 0.5).unwrap();
        assert_eq!(fractional_form(&z, &g, &k).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_form_closed_form() {
        // (c/2) int int (u(x)-u(y))^2 |x-y|^{-1-2s} = int |xi|^{2s} |u^|^2 = 2^{s-1/2} Gamma(s+1/2)
        let g = probes::gaussian(Dimension::ONE);
        for &s in &[0.1, 0.5, 0.9] {
            let k = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, s).unwrap();
            let v = fractional_form(&g, &g, &k).unwrap();
            let exact = math::pow(2.0, s - 0.5) * gamma(s + 0.5).unwrap();
            assert!(((v - exact) / exact).abs() < 1e-4, "s={s} v={v} exact={exact}");
        }
    }
}
