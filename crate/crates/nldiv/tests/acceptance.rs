//! Acceptance criteria 1 to 11, one summary line each.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use nldiv::config::{Experiment, ExperimentConfig};
use nldiv::experiments;
use nldiv::verify::*;
use nldiv_core::asymptotics::{form_limit_s0, form_limit_s1, S0_GRID, S1_GRID};
use nldiv_core::kernel::probes;
use nldiv_core::mesh::Mesh;
use nldiv_core::solver::SolverOptions;
use nldiv_core::spectral::MatrixFieldM;
use nldiv_core::{Dimension, Mat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = anyhow::Result<(bool, String)>;

struct Criterion {
    id: usize,
    title: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn c1() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [Dimension::ONE, Dimension::TWO, Dimension::THREE] {
        let (e0, e1) = constant_limit_errors(n)?;
        worst = worst.max(e0).max(e1);
    }
    Ok((worst <= 1e-3, format!("worst deviation {worst:.3e}")))
}

fn c2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g2 = hyperellipsoid_gap(&mut rng, Dimension::TWO, 50)?;
    let g3 = hyperellipsoid_gap(&mut rng, Dimension::THREE, 50)?;
    Ok((g2.max(g3) <= 1e-8, format!("relative gap n=2 {g2:.2e}, n=3 {g3:.2e}")))
}

fn c3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g2 = round_trip_gap(&mut rng, Dimension::TWO, 200)?;
    let g3 = round_trip_gap(&mut rng, Dimension::THREE, 200)?;
    Ok((g2.max(g3) <= 1e-6, format!("round trip n=2 {g2:.2e}, n=3 {g3:.2e}")))
}

fn batch() -> anyhow::Result<Vec<(String, InstanceResult)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mesh = Mesh::interval(-1.0, 1.0, 128)?;
    let opts = SolverOptions::default();
    (0..25)
        .map(|_| {
            let inst = random_instance(&mut rng);
            Ok((inst.label.clone(), run_instance(&inst, &mesh, &opts, &mut rng)?))
        })
        .collect()
}

thread_local! {
    static BATCH: std::cell::RefCell<Option<Vec<(String, InstanceResult)>>> = const { std::cell::RefCell::new(None) };
}

fn cached_batch() -> anyhow::Result<Vec<(String, InstanceResult)>> {
    if let Some(b) = BATCH.with(|b| b.borrow().clone()) {
        return Ok(b);
    }
    let b = batch()?;
    BATCH.with(|c| *c.borrow_mut() = Some(b.clone()));
    Ok(b)
}

fn c4() -> Outcome {
    let b = cached_batch()?;
    let linf = b.iter().map(|r| r.1.linf_ratio).fold(0.0, f64::max);
    let energy = b.iter().map(|r| r.1.energy_ratio).fold(0.0, f64::max);
    let bad: Vec<&str> = b.iter().filter(|r| r.1.linf_ratio > 1.0 || r.1.energy_ratio > 1.0).map(|r| r.0.as_str()).collect();
    Ok((bad.is_empty(), format!("25 instances, max |u|_inf/bound {linf:.3}, max energy/bound {energy:.3}, violations {bad:?}")))
}

fn c5() -> Outcome {
    let b = cached_batch()?;
    let gap = b.iter().map(|r| r.1.restart_gap).fold(0.0, f64::max);
    Ok((gap <= 1e-8, format!("max L2 change after perturbed restart {gap:.2e} (restarts timed with criterion 4)")))
}

fn c6() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [0.25, 0.5, 0.75] {
        let errs = [32, 64, 128, 256].iter().map(|&n| getoor_error(s, n)).collect::<anyhow::Result<Vec<_>>>()?;
        ok &= errs.windows(2).all(|w| w[1] < w[0]);
        if s == 0.5 {
            ok &= errs[3] <= 2e-2;
        }
        parts.push(format!("s={s}: {:.2e}..{:.2e}", errs[0], errs[3]));
    }
    Ok((ok, parts.join(", ")))
}

fn c7() -> Outcome {
    let rot = Mat::from_rows(&[&[1.2, 0.3], &[0.3, 0.8]])?;
    let cases = [
        ("n=1 Id", MatrixFieldM::identity(Dimension::ONE)),
        ("n=1 M=1.5", MatrixFieldM::constant(Mat::diag(&[1.5])?)?),
        ("n=2 Id", MatrixFieldM::identity(Dimension::TWO)),
        ("n=2 aniso", MatrixFieldM::constant(rot)?),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, m) in cases {
        let g = probes::gaussian(m.n);
        let r = form_limit_s1(&g, &g, &m, f64::INFINITY, &S1_GRID)?;
        ok &= r.monotone && r.final_rel_error() <= 0.02;
        parts.push(format!("{label} {:.2}%{}", 100.0 * r.final_rel_error(), if r.monotone { "" } else { " (not monotone)" }));
    }
    Ok((ok, format!("rel. error at s=0.99: {}", parts.join(", "))))
}

fn c8() -> Outcome {
    let g = probes::gaussian(Dimension::ONE);
    let m = MatrixFieldM::identity(Dimension::ONE);
    let inf = form_limit_s0(&g, &g, &m, f64::INFINITY, &S0_GRID)?;
    let fin = form_limit_s0(&g, &g, &m, 1.0, &S0_GRID)?;
    let (ei, ef) = (inf.final_rel_error(), fin.final_rel_error());
    Ok((
        ei <= 0.02 && ef <= 0.02,
        format!("rho=inf: {:.2}% from mass target; rho=1: B_0.01 / B_0.2 = {:.2}%", 100.0 * ei, 100.0 * ef),
    ))
}

fn c9() -> Outcome {
    let cfg = ExperimentConfig { deterministic: true, ..ExperimentConfig::default() };
    cfg.validate(Experiment::SweepS)?;
    let out = experiments::sweep(&cfg)?;
    let col = out.table.column("l2_dist").expect("distance column");
    let d: Vec<f64> = out.table.rows[..4]
        .iter()
        .map(|r| match r[col] {
            nldiv::table::Cell::F(v) => v,
            _ => f64::NAN,
        })
        .collect();
    let strict = d.windows(2).all(|w| w[1] < w[0]);
    Ok((strict && out.passed(), format!("|u_s - u_1| = {d:.4?}; assertions {:?}", out.failures)))
}

fn c10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cut = cutoff_identities(&mut rng, 100_000);
    let tr = truncation_identities(&mut rng, 100_000);
    let eig = eigen_lipschitz(&mut rng, 20_000)?;
    let f = field_checks(&mut rng, 10_000)?;
    let grad = gradient_check(&mut rng, 10_000)?;
    let ok = cut <= 1e-12 && tr <= 0.0 && eig <= 1e-10 && f[0] <= 1e-10 && f[1] <= 1e-10 && f[2] <= 1e-12 && f[3] <= 1e-12 && grad <= 1e-6;
    Ok((
        ok,
        format!(
            "G_k {cut:.1e}, truncation {tr:.1e}, eigen {eig:.1e}, structural {:.1e}, kernel bounds {:.1e}, symmetry {:.1e}, grad J {grad:.1e}",
            f[0], f[2], f[3]
        ),
    ))
}

fn c11() -> Outcome {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_nldiv"))
            .args(["verify", "--deterministic", "--seed", "7"])
            .env_remove("NLDIV_THREADS")
            .output()
    };
    let (a, b) = (run()?, run()?);
    let same = a.stdout == b.stdout && !a.stdout.is_empty();
    let ok = same && a.status.success() && b.status.success();
    Ok((ok, format!("{} bytes, identical: {same}, exit {:?}/{:?}", a.stdout.len(), a.status.code(), b.status.code())))
}

#[test]
fn acceptance_criteria() {
    let criteria = [
        Criterion { id: 1, title: "constant limits", budget: Duration::from_secs(1), run: c1 },
        Criterion { id: 2, title: "sphere integral oracle", budget: Duration::from_secs(10), run: c2 },
        Criterion { id: 3, title: "spectral round trip", budget: Duration::from_secs(30), run: c3 },
        Criterion { id: 4, title: "L-infinity and energy bounds", budget: Duration::from_secs(300), run: c4 },
        Criterion { id: 5, title: "uniqueness under restart", budget: Duration::from_secs(300), run: c5 },
        Criterion { id: 6, title: "torsion benchmark", budget: Duration::from_secs(180), run: c6 },
        Criterion { id: 7, title: "form limit s -> 1", budget: Duration::from_secs(120), run: c7 },
        Criterion { id: 8, title: "form limit s -> 0", budget: Duration::from_secs(120), run: c8 },
        Criterion { id: 9, title: "solution sweep in s", budget: Duration::from_secs(300), run: c9 },
        Criterion { id: 10, title: "property suites", budget: Duration::from_secs(120), run: c10 },
        Criterion { id: 11, title: "deterministic output", budget: Duration::from_secs(60), run: c11 },
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    let _ = writeln!(err);
    for c in &criteria {
        let start = Instant::now();
        let res = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match res {
            Ok((ok, d)) => (ok && elapsed <= c.budget, d),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let line = format!(
            "criterion {:>2} {} {}: {} [{:.2} s, budget {} s]",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.title,
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        let _ = writeln!(err, "{line}");
        if !ok {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
