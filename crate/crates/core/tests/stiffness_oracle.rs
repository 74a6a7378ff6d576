//! Stiffness entries of the isotropic kernel against a Fourier-side oracle.
//!
//! For P1 hats on a uniform grid, S_ij = (h^2/pi)(2/h)^{2s+1} int_0^inf t^{2s} sinc^4(t) cos(2kt) dt
//! with k = |i - j|.

use nldiv_core::assembly::assemble_stiffness;
use nldiv_core::kernel::KernelSpec;
use nldiv_core::mesh::Mesh;
use nldiv_core::quadrature::GaussLegendre;
use nldiv_core::spectral::MatrixFieldM;
use nldiv_core::Dimension;

fn fourier_entry(h: f64, s: f64, k: usize) -> f64 {
    let gl = GaussLegendre::new(20);
    let big_t = 4000.0;
    let panel = std::f64::consts::PI / (2.0 * (k as f64 + 2.0));
    let panels = (big_t / panel).ceil() as usize;
    let big_t = panel * panels as f64;
    let f = |t: f64| {
        let sinc = if t < 1e-8 { 1.0 - t * t / 6.0 } else { t.sin() / t };
        t.powf(2.0 * s) * sinc.powi(4) * (2.0 * k as f64 * t).cos()
    };
    // t^{2s} is not smooth at 0: grade the first panel geometrically
    let mut body = gl.composite(panel, big_t, panels - 1, f);
    let mut hi = panel;
    for _ in 0..60 {
        body += gl.integrate(0.5 * hi, hi, f);
        hi *= 0.5;
    }
    // mean value of sin^4(t) cos(2kt) over a period
    let mean = match k {
        0 => 3.0 / 8.0,
        1 => -0.25,
        2 => 1.0 / 16.0,
        _ => 0.0,
    };
    let tail = mean * big_t.powf(2.0 * s - 3.0) / (3.0 - 2.0 * s);
    (h * h / std::f64::consts::PI) * (2.0 / h).powf(2.0 * s + 1.0) * (body + tail)
}

#[test]
fn isotropic_entries_match_fourier() {
    let mesh = Mesh::interval(-1.0, 1.0, 16).unwrap();
    let h = mesh.h();
    for &s in &[0.25, 0.5, 0.75, 0.95] {
        let k = KernelSpec::new(MatrixFieldM::identity(Dimension::ONE), f64::INFINITY, s).unwrap();
        let st = assemble_stiffness(&k, &mesh).unwrap();
        let scale = st.matrix.max_abs();
        for d in 0..6 {
            let oracle = fourier_entry(h, s, d);
            let got = st.matrix.get(7, 7 + d);
            assert!(
                (got - oracle).abs() < 1e-6 * scale,
                "s={s} k={d} got={got} oracle={oracle}"
            );
        }
    }
}
