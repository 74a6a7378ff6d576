//! Limits in s of forms and solutions on small configurations.

use nldiv_core::assembly::assemble_stiffness;
use nldiv_core::asymptotics::*;
use nldiv_core::kernel::{probes, KernelSpec};
use nldiv_core::mesh::{DiscreteFunction, Mesh};
use nldiv_core::solver::{Nonlinearity, ProblemData, SolverOptions};
use nldiv_core::spectral::{build_n, catalogue, recover_a, sphere_rule, MatrixFieldA, MatrixFieldM};
use nldiv_core::{Dimension, Mat, SymMatrix};

const SQRT_HALF_PI: f64 = 1.2533141373155003;

fn id1() -> MatrixFieldM {
    MatrixFieldM::identity(Dimension::ONE)
}

#[test]
fn mass_target_examples() {
    let g = probes::gaussian(Dimension::ONE);
    let t = mass_target(&g, &g, &id1()).unwrap();
    assert!((t - SQRT_HALF_PI).abs() < 1e-9);
    let two = MatrixFieldM::constant(Mat::diag(&[2.0]).unwrap()).unwrap();
    let t2 = mass_target(&g, &g, &two).unwrap();
    assert!((t2 - 0.5 * SQRT_HALF_PI).abs() < 1e-9);
}

#[test]
fn missing_far_field_is_an_error() {
    let g = probes::gaussian(Dimension::ONE);
    let m = MatrixFieldM::new(Dimension::ONE, 2.0, 1.0, |x, _| Mat::diag(&[1.5 + 0.5 * x[0].sin()]).unwrap()).unwrap();
    assert!(form_limit_s0(&g, &g, &m, f64::INFINITY, &[0.1]).is_err());
    assert!(form_limit_s0(&g, &g, &m, 1.0, &[0.2, 0.1]).is_ok());
}

#[test]
fn scaling_of_the_modulation() {
    // |2 y|^{-1-2s} = 2^{-1-2s} |y|^{-1-2s}
    let g = probes::gaussian(Dimension::ONE);
    let two = MatrixFieldM::constant(Mat::diag(&[2.0]).unwrap()).unwrap();
    for &s in &[0.05, 0.4, 0.9] {
        let a = fractional_form(&g, &g, &KernelSpec::new(id1(), f64::INFINITY, s).unwrap()).unwrap();
        let b = fractional_form(&g, &g, &KernelSpec::new(two.clone(), f64::INFINITY, s).unwrap()).unwrap();
        assert!((b / a - 2f64.powf(-1.0 - 2.0 * s)).abs() < 1e-9, "s={s}");
    }
}

#[test]
fn s1_limit_gaussian_1d() {
    let g = probes::gaussian(Dimension::ONE);
    let r = form_limit_s1(&g, &g, &id1(), f64::INFINITY, &S1_GRID).unwrap();
    assert!((r.target - SQRT_HALF_PI).abs() < 1e-9);
    assert!(r.monotone);
    assert!(r.final_rel_error() <= 0.02);
    assert!(r.final_rel_error() < r.initial_rel_error());
}

#[test]
fn finite_horizon_has_the_same_s1_limit() {
    // the far field carries a factor c_{n,s} = O(1 - s)
    let g = probes::gaussian(Dimension::ONE);
    let inf = form_limit_s1(&g, &g, &id1(), f64::INFINITY, &S1_GRID).unwrap();
    let half = form_limit_s1(&g, &g, &id1(), 0.5, &S1_GRID).unwrap();
    assert!(half.monotone);
    let gaps: Vec<f64> = inf.values.iter().zip(&half.values).map(|(a, b)| (a - b).abs() / a).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[gaps.len() - 1] < 0.03);
}

#[test]
fn discrete_probe_matches_stiffness_energy() {
    let mesh = Mesh::interval(-1.0, 1.0, 16).unwrap();
    let u = mesh.interpolate(|x| (1.0 - x * x) * (1.0 + 0.5 * x));
    for &s in &[0.3, 0.7] {
        let k = KernelSpec::new(id1(), f64::INFINITY, s).unwrap();
        let st = assemble_stiffness(&k, &mesh).unwrap();
        let direct = st.energy(&u.coeffs);
        let probe = u.to_probe();
        let form = fractional_form(&probe, &probe, &k).unwrap();
        assert!(((form - direct) / direct).abs() < 1e-3, "s={s} form={form} direct={direct}");
    }
}

#[test]
fn local_form_of_recovered_field() {
    let g = probes::gaussian(Dimension::TWO);
    let a = SymMatrix::from_upper(&Mat::from_rows(&[&[1.5, 0.3], &[0.3, 0.7]]).unwrap());
    let rule = sphere_rule(Dimension::TWO, 3).unwrap();
    let back = recover_a(&build_n(&a).unwrap(), &rule).unwrap();
    let v1 = local_form(&g, &g, &MatrixFieldA::constant(a).unwrap()).unwrap();
    let v2 = local_form(&g, &g, &MatrixFieldA::constant(back).unwrap()).unwrap();
    assert!((v1 - v2).abs() < 1e-6 * v1.abs());
    // local target of M = N_A is A itself
    let m = MatrixFieldM::constant(*build_n(&a).unwrap().mat()).unwrap();
    let v3 = local_form(&g, &g, &limit_a_field(&m).unwrap()).unwrap();
    assert!((v1 - v3).abs() < 1e-6 * v1.abs());
}

#[test]
fn zero_forcing_sweep_is_flat() {
    let mesh = Mesh::interval(-1.0, 1.0, 16).unwrap();
    let data = ProblemData::new(|_| 1.0, |_| 0.0, 0.4, Nonlinearity::identity()).unwrap();
    let r = sweep_s(&catalogue::identity(Dimension::ONE), f64::INFINITY, &mesh, &data, &[0.6, 0.9], &SolverOptions::default())
        .unwrap();
    assert!(r.l2_dist.iter().all(|d| *d == 0.0));
    assert!(r.all_bounds_hold());
}

#[test]
fn smoothing_of_a_constant_field_is_inert() {
    let mesh = Mesh::interval(-1.0, 1.0, 16).unwrap();
    let data = ProblemData::new(|_| 1.0, |_| 0.4, 0.4, Nonlinearity::identity()).unwrap();
    let r = smoothing_sweep(
        &catalogue::anisotropic_diag(Dimension::ONE),
        &[2.0, 4.0],
        &[0.75, 0.9],
        f64::INFINITY,
        &mesh,
        &data,
        &SolverOptions::default(),
    )
    .unwrap();
    for (a, b) in r.rows[0].l2_dist.iter().zip(&r.rows[1].l2_dist) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!(r.outer.iter().all(|d| *d < 1e-12));
    assert!(r.all_bounds_hold());
}

#[test]
fn smoothing_a_step_field_approaches_the_rough_solution() {
    let mesh = Mesh::interval(-1.0, 1.0, 32).unwrap();
    let data = ProblemData::new(|_| 1.0, |_| 0.4, 0.4, Nonlinearity::atan()).unwrap();
    let r = smoothing_sweep(
        &catalogue::step_field(Dimension::ONE),
        &[2.0, 4.0, 8.0],
        &[0.9],
        f64::INFINITY,
        &mesh,
        &data,
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(r.outer.windows(2).all(|w| w[1] < w[0]), "{:?}", r.outer);
    let bound = (data.nonlinearity.h_inverse)(0.4);
    for row in &r.rows {
        assert!(row.linf.iter().all(|v| *v <= bound + 1e-6 + 0.05 * bound));
    }
}

#[test]
fn mollification_contracts_the_seminorm() {
    let mesh = Mesh::interval(-1.0, 1.0, 32).unwrap();
    let h = mesh.h();
    let eps = [h / 2.0, h / 4.0, h / 8.0, h / 16.0];
    let zero = DiscreteFunction::zero(&mesh);
    let r = mollified_seminorm_check(&zero, &eps, 0.4).unwrap();
    assert_eq!(r.seminorm, 0.0);
    assert!(r.mollified.iter().all(|v| *v == 0.0));

    let coeffs: Vec<f64> = (0..mesh.dofs()).map(|i| ((i * 7919 % 13) as f64 - 6.0) / 6.0).collect();
    let u = DiscreteFunction::new(mesh.clone(), coeffs).unwrap();
    for &s in &[0.2, 0.5, 0.8] {
        let r = mollified_seminorm_check(&u, &eps, s).unwrap();
        assert!(((r.seminorm - r.assembled) / r.assembled).abs() < 1e-6, "s={s}");
        assert!(r.all_contract(1e-8));
        // eps decreasing: values increase toward [u]
        assert!(r.mollified.windows(2).all(|w| w[1] > w[0]));
    }

    let plateau = mesh.interpolate(|x| if x.abs() < 0.999 { 1.0 } else { 0.0 });
    let r = mollified_seminorm_check(&plateau, &[h / 2.0], 0.5).unwrap();
    assert!(r.mollified[0] < r.seminorm);
}
