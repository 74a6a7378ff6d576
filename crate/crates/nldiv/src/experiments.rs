//! One function per experiment kind: run it, tabulate, collect failed assertions.

use nldiv_core::asymptotics::{
    fractional_form, limit_a_field, local_form, mass_target, reference, smoothing_sweep, sweep_member,
    FormLimitReport, LimitKind, SweepReport, Trend,
};
use nldiv_core::assembly::AssemblyOptions;
use nldiv_core::kernel::{kernel_bounds_check, probes, KernelSpec, SmoothProbe};
use nldiv_core::solver::{solve_local_fem, solve_semilinear, NewtonOptions, SolverOptions, SolverReport};
use nldiv_core::spectral::{build_m_field, build_n, check_structural, recover_a, sphere_rule, MatrixFieldM};
use nldiv_core::{c_ns, operator_norm, Dimension, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::table::{Cell, Table};

pub type Result<T> = anyhow::Result<T>;

/// Table plus the assertions that failed while producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub failures: Vec<String>,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Outcome { table, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    let t = &cfg.tolerances;
    SolverOptions {
        assembly: AssemblyOptions { order: t.order, tol: t.assembly },
        newton: NewtonOptions { tol: t.newton, ..NewtonOptions::default() },
        tol_outer: t.outer,
        ..SolverOptions::default()
    }
}

/// The modulation used by an experiment: an explicit constant M, or the field built from A and H.
pub fn modulation(cfg: &ExperimentConfig) -> Result<MatrixFieldM> {
    if let Some(m) = cfg.explicit_modulation() {
        return Ok(MatrixFieldM::constant(m)?);
    }
    Ok(build_m_field(&cfg.a_field(), &cfg.perturbation_field())?)
}

fn probe(cfg: &ExperimentConfig) -> SmoothProbe {
    probes::by_name(&cfg.probe, cfg.dimension()).expect("validated probe")
}

pub fn run(kind: Experiment, cfg: &ExperimentConfig) -> Result<Outcome> {
    match kind {
        Experiment::Constants => constants(cfg),
        Experiment::RecoverA => recover(cfg),
        Experiment::BuildM => build_m(cfg),
        Experiment::Solve => solve(cfg),
        Experiment::SweepS => sweep(cfg),
        Experiment::Limits => limits(cfg),
        Experiment::Verify => crate::verify::run_suite(cfg),
    }
}

pub fn constants(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.dimension();
    let omega = n.omega();
    let mut out = Outcome::new(Table::new(&["n", "s", "c_ns", "c_over_s", "c_over_one_minus_s", "limit_s0", "limit_s1"]));
    let grid = cfg.s_grid.clone().unwrap_or_else(|| vec![cfg.s]);
    for s in grid {
        let c = c_ns(n, s)?;
        out.check(c > 0.0 && c.is_finite(), format!("c_ns({}, {s}) not positive", n.get()));
        out.table.push(vec![
            n.get().into(),
            s.into(),
            c.into(),
            (c / s).into(),
            (c / (1.0 - s)).into(),
            (2.0 / omega).into(),
            (4.0 * n.get() as f64 / omega).into(),
        ])?;
    }
    Ok(out)
}

/// A at the origin, N_A, and the recovered A.
pub fn recover(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.dimension();
    let a = cfg.a_field().eval(&[0.0; 3][..n.get()]);
    let nm = build_n(&a)?;
    let back = recover_a(&nm, &sphere_rule(n, 3)?)?;
    let err = operator_norm(back.sub(&a).mat());
    let mut out = Outcome::new(Table::new(&["i", "j", "a", "n_a", "recovered", "abs_err"]));
    for i in 0..n.get() {
        for j in 0..n.get() {
            let (x, y) = (a.get(i, j), back.get(i, j));
            out.table.push(vec![i.into(), j.into(), x.into(), nm.get(i, j).into(), y.into(), (y - x).abs().into()])?;
        }
    }
    out.check(err <= 1e-6, format!("round trip error {err:e} > 1e-6"));
    Ok(out)
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, amp: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-amp..amp)).collect()
}

/// Structural identity of the built field and kernel bounds at the configured s and horizon.
pub fn build_m(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.dimension().get();
    let m = modulation(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = 2000;
    let rep = check_structural(&m, &uniform(&mut rng, 3 * n * samples, 3.0));
    let k = KernelSpec::new(m.clone(), cfg.rho, cfg.s)?;
    let kb = kernel_bounds_check(&k, &uniform(&mut rng, 2 * n * samples, 2.0));
    let mut out = Outcome::new(Table::new(&[
        "n",
        "s",
        "rho",
        "alpha",
        "beta",
        "c_low",
        "c_high",
        "structural_violation",
        "ellipticity_violation",
        "bound_violation",
        "symmetry_gap",
        "samples",
    ]));
    out.table.push(vec![
        n.into(),
        cfg.s.into(),
        Cell::Param(cfg.rho),
        m.alpha.into(),
        m.beta.into(),
        kb.c_low.into(),
        kb.c_high.into(),
        rep.structural_violation.into(),
        rep.ellipticity_violation.into(),
        kb.bound_violation.into(),
        kb.symmetry_gap.into(),
        rep.samples.into(),
    ])?;
    out.check(rep.structural_violation <= 1e-10, format!("structural violation {:e}", rep.structural_violation));
    out.check(rep.ellipticity_violation <= 1e-10, format!("ellipticity violation {:e}", rep.ellipticity_violation));
    out.check(kb.bound_violation <= 1e-12, format!("kernel bound violation {:e}", kb.bound_violation));
    out.check(kb.symmetry_gap <= 1e-12, format!("kernel symmetry gap {:e}", kb.symmetry_gap));
    Ok(out)
}

fn report_cells(r: &SolverReport) -> Vec<Cell> {
    vec![
        r.n.into(),
        r.s.into(),
        Cell::Param(r.rho),
        r.elements.into(),
        Cell::Param(r.q),
        r.norm_inf.into(),
        r.bound_inf.into(),
        r.energy.into(),
        r.bound_energy.into(),
        r.outer_iters.into(),
        r.newton_iters.into(),
        Cell::Param(r.cert_error),
        r.bounds_hold().into(),
    ]
}

const REPORT_COLUMNS: [&str; 13] = [
    "n",
    "s",
    "rho",
    "N",
    "Q",
    "norm_inf",
    "bound_inf",
    "energy",
    "bound_energy",
    "outer_iters",
    "newton_iters",
    "cert_error",
    "bounds_hold",
];

fn bound_failures(out: &mut Outcome, label: &str, r: &SolverReport) {
    out.check(r.linf_ok(), format!("{label}: |u|_inf = {} exceeds {}", r.norm_inf, r.bound_inf));
    out.check(r.energy_ok(), format!("{label}: energy {} exceeds {}", r.energy, r.bound_energy));
}

/// Nodal solution at the configured s; the report is repeated on every row.
pub fn solve(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh();
    let data = cfg.problem_data();
    let k = KernelSpec::new(modulation(cfg)?, cfg.rho, cfg.s)?;
    let (u, rep) = solve_semilinear(&k, &mesh, &data, &solver_options(cfg))?;
    let mut header = vec!["x", "u"];
    header.extend(REPORT_COLUMNS);
    let mut out = Outcome::new(Table::new(&header));
    for (i, x) in mesh.all_nodes().into_iter().enumerate() {
        let mut row: Vec<Cell> = vec![x.into(), u.node_value(i).into()];
        row.extend(report_cells(&rep));
        out.table.push(row)?;
    }
    bound_failures(&mut out, &format!("s = {}", cfg.s), &rep);
    Ok(out)
}

/// Data of the cosh benchmark: A = Id, a = 1, f = 0.4, Q = 0.4, h = identity.
fn is_cosh_benchmark(cfg: &ExperimentConfig) -> bool {
    let d = &cfg.data;
    cfg.field == "identity"
        && cfg.matrix.is_none()
        && cfg.eigenvalues.is_none()
        && cfg.modulation.is_none()
        && cfg.perturbation == 0.0
        && cfg.domain == [-1.0, 1.0]
        && d.a == 1.0
        && d.f == 0.4
        && d.a_profile == "constant"
        && d.f_profile == "constant"
        && d.h == "identity"
        && !d.linear
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh();
    let data = cfg.problem_data();
    let opts = solver_options(cfg);
    let a = cfg.a_field();
    let grid = cfg.grid(Experiment::SweepS);
    let (u1, local) = solve_local_fem(&a, &mesh, &data, &opts)?;
    let m = modulation(cfg)?;
    let members = grid
        .par_iter()
        .map(|&s| sweep_member(&m, cfg.rho, s, &mesh, &data, &opts).map(|(u, r)| (s, u, r)))
        .collect::<nldiv_core::Result<Vec<_>>>()?;
    let rep = SweepReport::from_members(&u1, local.clone(), members)?;

    let mut header = vec!["l2_dist", "max_diff"];
    header.extend(REPORT_COLUMNS);
    let mut out = Outcome::new(Table::new(&header));
    for (i, r) in rep.reports.iter().enumerate() {
        let mut row: Vec<Cell> = vec![rep.l2_dist[i].into(), rep.max_diff[i].into()];
        row.extend(report_cells(r));
        out.table.push(row)?;
        bound_failures(&mut out, &format!("s = {}", rep.s[i]), r);
    }
    let mut row: Vec<Cell> = vec![0.0.into(), 0.0.into()];
    row.extend(report_cells(&local));
    out.table.push(row)?;
    bound_failures(&mut out, "local", &local);

    let forced = cfg.data.f != 0.0;
    let increasing = rep.s.windows(2).all(|w| w[1] > w[0]);
    if forced && increasing {
        out.check(rep.trend() == Trend::Strict, format!("distance to u_1 not strictly decreasing: {:?}", rep.l2_dist));
    }
    if is_cosh_benchmark(cfg) && cfg.data.q == 0.4 {
        let err = u1.l2_error(reference::cosh_benchmark);
        out.check(err <= 1e-3, format!("u_1 misses the cosh closed form by {err:e}"));
    }
    Ok(out)
}

const LIMIT_COLUMNS: [&str; 7] = ["experiment", "s", "ell", "value", "target", "abs_err", "rel_err"];

fn push_form_rows(table: &mut Table, label: &str, r: &FormLimitReport) -> Result<()> {
    for i in 0..r.s.len() {
        table.push(vec![
            label.into(),
            r.s[i].into(),
            0.0.into(),
            r.values[i].into(),
            r.target.into(),
            r.abs_err[i].into(),
            r.rel_err[i].into(),
        ])?;
    }
    Ok(())
}

fn form_pairs(u: &SmoothProbe, m: &MatrixFieldM, rho: f64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.par_iter()
        .map(|&s| {
            let k = KernelSpec::new(m.clone(), rho, s)?;
            Ok((s, fractional_form(u, u, &k)?))
        })
        .collect()
}

/// Form limits s -> 1 and s -> 0 and the smoothing double limit, as one long table.
pub fn limits(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new(Table::new(&LIMIT_COLUMNS));
    let u = probe(cfg);
    let m = modulation(cfg)?;
    for kind in &cfg.limits {
        match kind.as_str() {
            "s1" => {
                let target = local_form(&u, &u, &limit_a_field(&m)?)?;
                let pairs = form_pairs(&u, &m, cfg.rho, &cfg.grid(Experiment::Limits))?;
                let r = FormLimitReport::from_pairs(LimitKind::One, pairs, target)?;
                push_form_rows(&mut out.table, "s1", &r)?;
                out.check(r.monotone, format!("s1: errors not decreasing toward s = 1: {:?}", r.rel_err));
                out.check(r.final_rel_error() <= 0.02, format!("s1: final relative error {:e} > 2%", r.final_rel_error()));
            }
            "s0" => {
                let (lk, target) = if cfg.rho.is_finite() {
                    (LimitKind::ZeroFinite, 0.0)
                } else {
                    (LimitKind::ZeroInfinite, mass_target(&u, &u, &m)?)
                };
                let r = FormLimitReport::from_pairs(lk, form_pairs(&u, &m, cfg.rho, &cfg.s0_grid)?, target)?;
                push_form_rows(&mut out.table, "s0", &r)?;
                let e = r.final_rel_error();
                out.check(e <= 0.02, format!("s0: final relative error {e:e} > 2%"));
            }
            _ => smoothing_rows(cfg, &mut out)?,
        }
    }
    Ok(out)
}

fn smoothing_rows(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let mesh = cfg.mesh();
    let data = cfg.problem_data();
    let grid = cfg.grid(Experiment::Limits);
    let r = smoothing_sweep(&cfg.a_field(), &cfg.ells, &grid, cfg.rho, &mesh, &data, &solver_options(cfg))?;
    let scale = r.rough.norm_inf.max(f64::MIN_POSITIVE);
    for (row, &ell) in r.rows.iter().zip(&r.ells) {
        for (s, d) in row.s.iter().zip(&row.l2_dist) {
            out.table.push(vec!["smoothing".into(), (*s).into(), ell.into(), (*d).into(), 0.0.into(), (*d).into(), (d / scale).into()])?;
        }
    }
    for (&ell, &d) in r.ells.iter().zip(&r.outer) {
        out.table.push(vec!["smoothing".into(), 1.0.into(), ell.into(), d.into(), 0.0.into(), d.into(), (d / scale).into()])?;
    }
    out.check(r.all_bounds_hold(), "smoothing: a solution violates its bounds");
    Ok(())
}

/// Eigenvalues of a random SPD matrix drawn uniformly in [lo, hi] with a random rotation.
pub fn random_spd(rng: &mut ChaCha8Rng, n: Dimension, lo: f64, hi: f64) -> SymMatrix {
    let d = n.get();
    let mut a = SymMatrix::from_fn(n, |_, _| 0.0);
    let mut g = [[0.0; 3]; 3];
    for row in g.iter_mut().take(d) {
        for v in row.iter_mut().take(d) {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let q = nldiv_core::eigh_sym(&SymMatrix::from_fn(n, |i, j| g[i][j] + g[j][i])).vectors;
    let lambda: Vec<f64> = (0..d).map(|_| rng.random_range(lo..=hi)).collect();
    for (k, l) in lambda.iter().enumerate() {
        let col: Vec<f64> = (0..d).map(|i| q.get(i, k)).collect();
        a = a.add(&SymMatrix::from_fn(n, |i, j| l * col[i] * col[j]));
    }
    a
}
