//! Randomized property suites over the cutoff, truncation, spectra, kernels,
//! built modulations and the energy functional.

use std::sync::Arc;

use nldiv_core::algebra::eigenvalue_lipschitz_gap;
use nldiv_core::assembly::assemble_stiffness;
use nldiv_core::asymptotics::fractional_form;
use nldiv_core::kernel::{kernel_bounds_check, KernelSpec, SmoothProbe};
use nldiv_core::linalg::{norm2, DenseMatrix};
use nldiv_core::mesh::{DiscreteFunction, Mesh};
use nldiv_core::solver::{cutoff_g, energy_j, gradient_j, truncate_pair, Nonlinearity};
use nldiv_core::spectral::{build_m_field, catalogue, check_structural, HPerturbation, MatrixFieldM};
use nldiv_core::{operator_norm, Dimension, Mat, SymMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(100_000))]

    #[test]
    fn cutoff_sign_monotone_lipschitz(t in -50.0f64..50.0, r in -50.0f64..50.0, k in 0.0f64..20.0) {
        let (gt, gr) = (cutoff_g(t, k), cutoff_g(r, k));
        prop_assert_eq!(t * gt, t.abs() * gt.abs());
        if t <= r {
            prop_assert!(gt <= gr);
        }
        prop_assert!((gt - gr).abs() <= (t - r).abs() + 4.0 * f64::EPSILON * (t.abs() + r.abs() + k));
        prop_assert!(gt.abs() <= (t.abs() - k).max(0.0) + 1e-15);
    }

    #[test]
    fn truncation_bounds(a in 0.0f64..1e6, frac in -1.0f64..=1.0, q in 1e-3f64..10.0, m in 0u32..40) {
        let f = frac * q * a;
        let j = 2f64.powi(m as i32);
        let (fj, aj) = truncate_pair(f, a, q, j);
        prop_assert!(fj.abs() <= j);
        prop_assert!(aj <= j / q * (1.0 + 1e-15));
        prop_assert!(fj.abs() <= q * aj * (1.0 + 1e-12) + 1e-300);
        // as j doubles the truncated data move toward the original
        let (f2, a2) = truncate_pair(f, a, q, 2.0 * j);
        prop_assert!((f2 - f).abs() <= (fj - f).abs() * (1.0 + 1e-15));
        prop_assert!((a2 - a).abs() <= (aj - a).abs() * (1.0 + 1e-15));
    }
}

#[allow(clippy::needless_range_loop)]
fn random_sym(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> SymMatrix {
    let mut e = [[0.0; 3]; 3];
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-amp..=amp);
            e[i][j] = v;
            e[j][i] = v;
        }
    }
    SymMatrix::from_fn(Dimension::new(n).unwrap(), |i, j| e[i][j])
}

#[test]
fn eigenvalue_lipschitz_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20_000 {
        let n = 2 + case % 2;
        let a = random_sym(&mut rng, n, 2.0);
        let mut p = random_sym(&mut rng, n, 1.0);
        let norm = operator_norm(p.mat());
        if norm > 0.0 {
            p = p.scale(rng.random_range(0.0..0.5) / norm);
        }
        let g = eigenvalue_lipschitz_gap(&a, &a.add(&p)).unwrap();
        assert!(g.max_eigen_gap <= g.norm_gap + 1e-10, "case {case}: {g:?}");
        let sp = nldiv_core::eigh_sym(&a);
        assert!((operator_norm(&sp.vectors) - 1.0).abs() < 1e-10);
    }
}

/// H(y) = 0.1 |y|^2 / (1 + |y|^2) times a fixed symmetric matrix: even, H(0) = 0.
fn even_perturbation(n: Dimension) -> HPerturbation {
    let d = n.get();
    let base = SymMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.3 });
    let bound = 0.1 * operator_norm(base.mat());
    HPerturbation::new(bound, Some(base.scale(0.1)), move |y: &[f64]| {
        let r2: f64 = y[..d].iter().map(|v| v * v).sum();
        base.scale(0.1 * r2 / (1.0 + r2))
    })
}

fn built_fields() -> Vec<MatrixFieldM> {
    let mut out = Vec::new();
    for n in [Dimension::ONE, Dimension::TWO, Dimension::THREE] {
        for name in ["identity", "anisotropic-diag", "rotating-field"] {
            let a = catalogue::by_name(name, n).unwrap();
            out.push(build_m_field(&a, &HPerturbation::zero(n)).unwrap());
            out.push(build_m_field(&a, &even_perturbation(n)).unwrap());
        }
    }
    out
}

#[test]
fn built_fields_are_structural_and_kernels_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for m in built_fields() {
        let n = m.n.get();
        let triples: Vec<f64> = (0..3 * n * 10_000).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rep = check_structural(&m, &triples);
        assert_eq!(rep.samples, 10_000);
        assert!(rep.structural_violation <= 1e-10, "{rep:?}");
        assert!(rep.ellipticity_violation <= 1e-10, "{rep:?}");
        for &(rho, s) in &[(f64::INFINITY, 0.3), (1.5, 0.8)] {
            let k = KernelSpec::new(m.clone(), rho, s).unwrap();
            let pairs: Vec<f64> = (0..2 * n * 10_000).map(|_| rng.random_range(-2.0..2.0)).collect();
            let kb = kernel_bounds_check(&k, &pairs);
            assert_eq!(kb.samples, 10_000);
            assert!(kb.bound_violation <= 1e-12, "{kb:?}");
            assert!(kb.symmetry_gap <= 1e-12, "{kb:?}");
        }
    }
}

#[test]
fn asymmetric_field_is_flagged() {
    let m = MatrixFieldM::new(Dimension::TWO, 3.0, 0.2, |x, _| {
        Mat::from_rows(&[&[1.0, x[0]], &[0.0, 1.0]]).unwrap()
    })
    .unwrap();
    let samples = [0.5, 0.2, 0.3, -0.1, 1.0, 0.0];
    assert!(check_structural(&m, &samples).structural_violation > 0.1);
}

#[test]
fn gradient_of_j_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mesh = Mesh::interval(-1.0, 1.0, 8).unwrap();
    let mats: Vec<DenseMatrix> = [0.3, 0.5, 0.8]
        .iter()
        .map(|&s| {
            let k = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, s).unwrap();
            assemble_stiffness(&k, &mesh).unwrap().matrix
        })
        .collect();
    let w = mesh.lumped_weights();
    let nd = mesh.dofs();
    let nls = [Nonlinearity::identity(), Nonlinearity::cubic(), Nonlinearity::atan()];
    for case in 0..10_000 {
        let s = &mats[case % 3];
        let nl = &nls[(case / 3) % 3];
        let u: Vec<f64> = (0..nd).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eta: Vec<f64> = (0..nd).map(|_| rng.random_range(0.0..3.0)).collect();
        let zeta: Vec<f64> = (0..nd).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = gradient_j(s, &u, &eta, &zeta, &w, nl);
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..nd {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += step;
            dn[i] -= step;
            let fd = (energy_j(s, &up, &eta, &zeta, &w, nl) - energy_j(s, &dn, &eta, &zeta, &w, nl)) / (2.0 * step);
            worst = worst.max((fd - g[i]).abs());
        }
        assert!(worst <= 1e-6 * (1.0 + norm2(&g)), "case {case}: {worst}");
    }
}

/// G_k applied to a P1 function, with kinks at the nodes and at the level crossings.
fn cutoff_probe(u: &DiscreteFunction, k: f64) -> SmoothProbe {
    let base = u.to_probe();
    let mesh = &u.mesh;
    let mut kinks = base.kinks.clone();
    for e in 0..mesh.elements {
        let (a, b) = (u.node_value(e), u.node_value(e + 1));
        for level in [-k, k] {
            if (a - level) * (b - level) < 0.0 {
                let t = (level - a) / (b - a);
                kinks.push(mesh.node(e) + t * mesh.h());
            }
        }
    }
    kinks.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let res = kinks.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 1e-12).fold(f64::INFINITY, f64::min);
    let (v, g) = (base.value.clone(), base.gradient.clone());
    let v2 = v.clone();
    SmoothProbe {
        n: Dimension::ONE,
        value: Arc::new(move |x| cutoff_g(v(x), k)),
        gradient: Arc::new(move |x, out| {
            g(x, out);
            if v2(x).abs() <= k {
                out[0] = 0.0;
            }
        }),
        support_radius: base.support_radius,
        c2_norm: base.c2_norm,
        kinks,
        resolution: Some(res.min(mesh.h())),
    }
}

#[test]
fn cutoff_does_not_increase_the_seminorm() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mesh = Mesh::interval(-1.0, 1.0, 8).unwrap();
    for case in 0..40 {
        let s = [0.25, 0.5, 0.75][case % 3];
        let kspec = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, s).unwrap();
        let coeffs: Vec<f64> = (0..mesh.dofs()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u = DiscreteFunction::new(mesh.clone(), coeffs).unwrap();
        let k = rng.random_range(0.0..1.5);
        let pu = u.to_probe();
        let pg = cutoff_probe(&u, k);
        let full = fractional_form(&pu, &pu, &kspec).unwrap();
        let cut = fractional_form(&pg, &pg, &kspec).unwrap();
        assert!(cut <= full * (1.0 + 1e-6), "case {case}: {cut} > {full}");
    }
}
