//! Seeded invariant suite behind `nldiv verify`.

use std::f64::consts::PI;

use nldiv_core::algebra::eigenvalue_lipschitz_gap;
use nldiv_core::asymptotics::{mollified_seminorm_check, reference};
use nldiv_core::assembly::assemble_stiffness;
use nldiv_core::kernel::{kernel_bounds_check, KernelSpec};
use nldiv_core::linalg::norm2;
use nldiv_core::mesh::{DiscreteFunction, Mesh};
use nldiv_core::solver::{
    cutoff_g, energy_j, gradient_j, solve_semilinear, truncate_pair, Nonlinearity, ProblemData, SolverOptions,
};
use nldiv_core::spectral::{
    build_m_field, build_n, catalogue, check_structural, hyperellipsoid_integral, recover_a, sphere_rule, HPerturbation,
    MatrixFieldM,
};
use nldiv_core::{c_ns, operator_norm, Dimension, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::experiments::{random_spd, Outcome, Result};
use crate::table::{Cell, Table};

/// One row of the suite: the measured quantity must not exceed the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold }
    }

    pub fn pass(&self) -> bool {
        self.value <= self.threshold
    }
}

/// Worst deviation of c_ns from its limits at s = 1e-4 and s = 1 - 1e-4.
pub fn constant_limit_errors(n: Dimension) -> Result<(f64, f64)> {
    let omega = n.omega();
    let s0 = 1e-4;
    let s1 = 1.0 - 1e-4;
    let e0 = (c_ns(n, s0)? / s0 - 2.0 / omega).abs();
    let e1 = (c_ns(n, s1)? / (1.0 - s1) - 4.0 * n.get() as f64 / omega).abs();
    Ok((e0, e1))
}

/// Largest relative gap between the closed-form sphere integrals and a dense quadrature.
pub fn hyperellipsoid_gap(rng: &mut ChaCha8Rng, n: Dimension, cases: usize) -> Result<f64> {
    let rule = sphere_rule(n, 3)?;
    let d = n.get();
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let sigma: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..=2.0)).collect();
        for i in 0..d {
            let exact = hyperellipsoid_integral(&sigma, i)?;
            let quad: f64 = rule
                .iter()
                .map(|(p, w)| {
                    let q: f64 = (0..d).map(|k| sigma[k] * sigma[k] * p[k] * p[k]).sum();
                    w * p[i] * p[i] * q.powf(-(d as f64 + 2.0) / 2.0)
                })
                .sum();
            worst = worst.max(((quad - exact) / exact).abs());
        }
    }
    Ok(worst)
}

/// Largest |recover_a(build_n(A)) - A| over random SPD A with spectrum in [0.5, 2].
pub fn round_trip_gap(rng: &mut ChaCha8Rng, n: Dimension, cases: usize) -> Result<f64> {
    let rule = sphere_rule(n, 3)?;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let a = random_spd(rng, n, 0.5, 2.0);
        let back = recover_a(&build_n(&a)?, &rule)?;
        worst = worst.max(operator_norm(back.sub(&a).mat()));
    }
    Ok(worst)
}

#[allow(clippy::needless_range_loop)]
fn random_sym(rng: &mut ChaCha8Rng, n: Dimension, amp: f64) -> SymMatrix {
    let d = n.get();
    let mut e = [[0.0; 3]; 3];
    for i in 0..d {
        for j in i..d {
            let v = rng.random_range(-amp..=amp);
            e[i][j] = v;
            e[j][i] = v;
        }
    }
    SymMatrix::from_fn(n, |i, j| e[i][j])
}

pub fn eigen_lipschitz(rng: &mut ChaCha8Rng, cases: usize) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for c in 0..cases {
        let n = if c % 2 == 0 { Dimension::TWO } else { Dimension::THREE };
        let a = random_sym(rng, n, 2.0);
        let amp = rng.random_range(0.0..0.5);
        let p = random_sym(rng, n, amp);
        let g = eigenvalue_lipschitz_gap(&a, &a.add(&p))?;
        worst = worst.max(g.max_eigen_gap - g.norm_gap);
    }
    Ok(worst.max(0.0))
}

/// Sign, monotonicity, Lipschitz and shrinkage of G_k.
pub fn cutoff_identities(rng: &mut ChaCha8Rng, cases: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let t = rng.random_range(-50.0..50.0);
        let r = rng.random_range(-50.0..50.0);
        let k = rng.random_range(0.0..20.0);
        let (gt, gr) = (cutoff_g(t, k), cutoff_g(r, k));
        let round = 4.0 * f64::EPSILON * (t.abs() + r.abs() + k);
        worst = worst.max((t * gt - t.abs() * gt.abs()).abs());
        if t <= r {
            worst = worst.max(gt - gr);
        }
        worst = worst.max((gt - gr).abs() - (t - r).abs() - round);
        worst = worst.max(gt.abs() - (t.abs() - k).max(0.0));
    }
    worst.max(0.0)
}

/// |f_j| <= j, a_j <= j / Q, |f_j| <= Q a_j, and monotone approach as j doubles.
pub fn truncation_identities(rng: &mut ChaCha8Rng, cases: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let a = rng.random_range(0.0..1e6);
        let q = rng.random_range(1e-3..10.0);
        let f = rng.random_range(-1.0..=1.0) * q * a;
        let j = 2f64.powi(rng.random_range(0..40));
        let (fj, aj) = truncate_pair(f, a, q, j);
        let (f2, a2) = truncate_pair(f, a, q, 2.0 * j);
        worst = worst
            .max((fj.abs() - j) / j)
            .max((aj - j / q) / (j / q) - 1e-15)
            .max((fj.abs() - q * aj) / j - 1e-12)
            .max((f2 - f).abs() - (fj - f).abs() * (1.0 + 1e-15))
            .max((a2 - a).abs() - (aj - a).abs() * (1.0 + 1e-15));
    }
    worst.max(0.0)
}

fn even_perturbation(n: Dimension) -> HPerturbation {
    let d = n.get();
    let base = SymMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.3 });
    let bound = 0.1 * operator_norm(base.mat());
    HPerturbation::new(bound, Some(base.scale(0.1)), move |y: &[f64]| {
        let r2: f64 = y[..d].iter().map(|v| v * v).sum();
        base.scale(0.1 * r2 / (1.0 + r2))
    })
}

fn built_fields() -> Result<Vec<MatrixFieldM>> {
    let mut out = Vec::new();
    for n in [Dimension::ONE, Dimension::TWO, Dimension::THREE] {
        for name in ["identity", "anisotropic-diag", "rotating-field"] {
            let a = catalogue::by_name(name, n).expect("catalogue name");
            out.push(build_m_field(&a, &HPerturbation::zero(n))?);
            out.push(build_m_field(&a, &even_perturbation(n))?);
        }
    }
    Ok(out)
}

/// (structural, ellipticity, kernel bound, kernel symmetry) worst cases over the built fields.
pub fn field_checks(rng: &mut ChaCha8Rng, samples: usize) -> Result<[f64; 4]> {
    let mut w = [0.0f64; 4];
    for m in built_fields()? {
        let n = m.n.get();
        let tr: Vec<f64> = (0..3 * n * samples).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rep = check_structural(&m, &tr);
        w[0] = w[0].max(rep.structural_violation);
        w[1] = w[1].max(rep.ellipticity_violation);
        for (rho, s) in [(f64::INFINITY, 0.3), (1.5, 0.8)] {
            let k = KernelSpec::new(m.clone(), rho, s)?;
            let pairs: Vec<f64> = (0..2 * n * samples).map(|_| rng.random_range(-2.0..2.0)).collect();
            let kb = kernel_bounds_check(&k, &pairs);
            w[2] = w[2].max(kb.bound_violation);
            w[3] = w[3].max(kb.symmetry_gap);
        }
    }
    Ok(w)
}

/// Worst central-difference mismatch of grad J relative to 1 + |grad J|.
pub fn gradient_check(rng: &mut ChaCha8Rng, cases: usize) -> Result<f64> {
    let mesh = Mesh::interval(-1.0, 1.0, 8)?;
    let mats = [0.3, 0.5, 0.8]
        .iter()
        .map(|&s| {
            let k = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, s)?;
            Ok(assemble_stiffness(&k, &mesh)?.matrix)
        })
        .collect::<Result<Vec<_>>>()?;
    let w = mesh.lumped_weights();
    let nd = mesh.dofs();
    let nls = [Nonlinearity::identity(), Nonlinearity::cubic(), Nonlinearity::atan()];
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let s = &mats[case % 3];
        let nl = &nls[(case / 3) % 3];
        let u: Vec<f64> = (0..nd).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eta: Vec<f64> = (0..nd).map(|_| rng.random_range(0.0..3.0)).collect();
        let zeta: Vec<f64> = (0..nd).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = gradient_j(s, &u, &eta, &zeta, &w, nl);
        let step = 1e-6;
        for i in 0..nd {
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[i] += step;
            dn[i] -= step;
            let fd = (energy_j(s, &up, &eta, &zeta, &w, nl) - energy_j(s, &dn, &eta, &zeta, &w, nl)) / (2.0 * step);
            worst = worst.max((fd - g[i]).abs() / (1.0 + norm2(&g)));
        }
    }
    Ok(worst)
}

/// A random dominated instance on (-1, 1): s from {0.3, 0.5, 0.7}, a catalogue nonlinearity,
/// a = a0 (1 + b sin(k x + p)) and f = c Q a cos(m x), |c| <= 1.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub s: f64,
    pub data: ProblemData,
    pub label: String,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> RandomInstance {
    let s = [0.3, 0.5, 0.7][rng.random_range(0..3)];
    let name = Nonlinearity::NAMES[rng.random_range(0..3)];
    let nl = Nonlinearity::by_name(name).expect("catalogue name");
    let q = if nl.gamma.is_finite() { rng.random_range(0.1..0.95) * nl.gamma } else { rng.random_range(0.1..3.0) };
    let a0 = rng.random_range(0.2..3.0);
    let b = rng.random_range(0.0..0.9);
    let k = rng.random_range(0.5..6.0);
    let p = rng.random_range(0.0..2.0 * PI);
    let c = rng.random_range(-1.0..=1.0);
    let m = rng.random_range(0.0..5.0);
    let a = move |x: f64| a0 * (1.0 + b * (k * x + p).sin());
    let f = move |x: f64| c * q * a(x) * (m * x).cos();
    let label = format!("s={s} h={name} Q={q:.3} a0={a0:.3} c={c:.3}");
    RandomInstance { s, data: ProblemData::new(a, f, q, nl).expect("Q below gamma"), label }
}

/// Bound ratios of the solution and the L2 change after a perturbed restart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceResult {
    /// |u|_inf / (bound + slack); at most 1 when the bound holds.
    pub linf_ratio: f64,
    pub energy_ratio: f64,
    pub restart_gap: f64,
}

pub fn run_instance(inst: &RandomInstance, mesh: &Mesh, opts: &SolverOptions, rng: &mut ChaCha8Rng) -> Result<InstanceResult> {
    let k = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, inst.s)?;
    let (u, rep) = solve_semilinear(&k, mesh, &inst.data, opts)?;
    let slack = |b: f64| b + nldiv_core::solver::SolverReport::slack(b);
    let start: Vec<f64> = u.coeffs.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    let (v, _) = solve_semilinear(&k, mesh, &inst.data, &SolverOptions { initial: Some(start), ..opts.clone() })?;
    Ok(InstanceResult {
        linf_ratio: rep.norm_inf / slack(rep.bound_inf),
        energy_ratio: rep.energy / slack(rep.bound_energy),
        restart_gap: u.l2_distance(&v)?,
    })
}

/// L2 error of the linear solve against the torsion closed form.
pub fn getoor_error(s: f64, elements: usize) -> Result<f64> {
    let mesh = Mesh::interval(-1.0, 1.0, elements)?;
    let k = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, s)?;
    let data = ProblemData::linear(|_| 0.0, |_| 1.0);
    let (u, _) = solve_semilinear(&k, &mesh, &data, &SolverOptions::default())?;
    Ok(u.l2_error(|x| reference::getoor_torsion(s, x)))
}

pub fn mollified_excess(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mesh = Mesh::interval(-1.0, 1.0, 32)?;
    let h = mesh.h();
    let coeffs: Vec<f64> = (0..mesh.dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = DiscreteFunction::new(mesh, coeffs)?;
    let mut worst = f64::NEG_INFINITY;
    for s in [0.2, 0.5, 0.8] {
        let r = mollified_seminorm_check(&u, &[h / 2.0, h / 8.0], s)?;
        for m in &r.mollified {
            worst = worst.max((m - r.seminorm) / r.seminorm);
        }
    }
    Ok(worst.max(0.0))
}

type Job = fn(&mut ChaCha8Rng) -> Result<Vec<Check>>;

fn jobs() -> Vec<Job> {
    vec![
        |_| {
            let mut out = Vec::new();
            for n in [Dimension::ONE, Dimension::TWO, Dimension::THREE] {
                let (e0, e1) = constant_limit_errors(n)?;
                out.push(Check::new(format!("c_ns_limit_s0_n{}", n.get()), e0, 1e-3));
                out.push(Check::new(format!("c_ns_limit_s1_n{}", n.get()), e1, 1e-3));
            }
            Ok(out)
        },
        |rng| {
            Ok(vec![
                Check::new("hyperellipsoid_n2", hyperellipsoid_gap(rng, Dimension::TWO, 10)?, 1e-8),
                Check::new("hyperellipsoid_n3", hyperellipsoid_gap(rng, Dimension::THREE, 10)?, 1e-8),
            ])
        },
        |rng| {
            Ok(vec![
                Check::new("round_trip_n2", round_trip_gap(rng, Dimension::TWO, 20)?, 1e-6),
                Check::new("round_trip_n3", round_trip_gap(rng, Dimension::THREE, 20)?, 1e-6),
            ])
        },
        |rng| Ok(vec![Check::new("eigenvalue_lipschitz", eigen_lipschitz(rng, 2000)?, 1e-10)]),
        |rng| Ok(vec![Check::new("cutoff_identities", cutoff_identities(rng, 10_000), 1e-12)]),
        |rng| Ok(vec![Check::new("truncation_identities", truncation_identities(rng, 10_000), 0.0)]),
        |rng| {
            let w = field_checks(rng, 500)?;
            Ok(vec![
                Check::new("structural_identity", w[0], 1e-10),
                Check::new("ellipticity", w[1], 1e-10),
                Check::new("kernel_bounds", w[2], 1e-12),
                Check::new("kernel_symmetry", w[3], 1e-12),
            ])
        },
        |rng| Ok(vec![Check::new("gradient_j", gradient_check(rng, 200)?, 1e-6)]),
        |rng| {
            let mesh = Mesh::interval(-1.0, 1.0, 32)?;
            let opts = SolverOptions::default();
            let mut out = Vec::new();
            for i in 0..3 {
                let inst = random_instance(rng);
                let r = run_instance(&inst, &mesh, &opts, rng)?;
                out.push(Check::new(format!("solve_{i}_linf_ratio"), r.linf_ratio, 1.0));
                out.push(Check::new(format!("solve_{i}_energy_ratio"), r.energy_ratio, 1.0));
                out.push(Check::new(format!("solve_{i}_restart_gap"), r.restart_gap, 1e-8));
            }
            Ok(out)
        },
        |_| Ok(vec![Check::new("getoor_l2_n64_s0.5", getoor_error(0.5, 64)?, 2e-2)]),
        |rng| Ok(vec![Check::new("mollified_contraction", mollified_excess(rng)?, 1e-8)]),
    ]
}

/// Each job draws from its own stream, so results do not depend on scheduling.
pub fn run_checks(seed: u64) -> Result<Vec<Check>> {
    let per_job = jobs()
        .into_par_iter()
        .enumerate()
        .map(|(i, job)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            job(&mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

pub fn run_suite(cfg: &ExperimentConfig) -> Result<Outcome> {
    let checks = run_checks(cfg.seed)?;
    let mut table = Table::new(&["check", "value", "threshold", "pass"]);
    let mut failures = Vec::new();
    for c in &checks {
        table.push(vec![c.name.as_str().into(), c.value.into(), Cell::F(c.threshold), c.pass().into()])?;
        if !c.pass() {
            failures.push(format!("{}: {:e} > {:e}", c.name, c.value, c.threshold));
        }
    }
    Ok(Outcome { table, failures })
}
