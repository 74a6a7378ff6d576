//! Gauss-Legendre rules and a few composite helpers.

use alloc::vec::Vec;

use crate::math;

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on P_q, started from the Chebyshev-like guess.
    pub fn new(q: usize) -> Self {
        assert!(q >= 1, "rule needs at least one node");
        let mut nodes = alloc::vec![0.0; q];
        let mut weights = alloc::vec![0.0; q];
        let qf = q as f64;
        for i in 0..q.div_ceil(2) {
            let mut x = math::cos(math::PI * (i as f64 + 0.75) / (qf + 0.5));
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(q, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if math::abs(dx) < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(q, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[q - 1 - i] = x;
            weights[i] = w;
            weights[q - 1 - i] = w;
        }
        if q % 2 == 1 {
            nodes[q / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.mapped(a, b) {
            acc += w * f(x);
        }
        acc
    }

    /// Composite rule with `panels` equal sub-intervals.
    pub fn composite(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for k in 0..panels {
            let lo = a + h * k as f64;
            acc += self.integrate(lo, lo + h, &mut f);
        }
        acc
    }

    /// Integrates over [a, b] split at the given interior breakpoints.
    pub fn split(&self, a: f64, b: f64, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
        pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
        let mut acc = 0.0;
        let mut lo = a;
        for t in pts.into_iter().chain(core::iter::once(b)) {
            if t > lo {
                acc += self.integrate(lo, t, &mut f);
            }
            lo = t;
        }
        acc
    }
}

/// (P_q(x), P_q'(x)) by the three-term recurrence.
fn legendre(q: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integral of f(r) over [a, b] (0 < a < b) in the variable t = ln r, with
/// panels of width at most `width` in t.
pub fn log_composite(rule: &GaussLegendre, a: f64, b: f64, width: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let (ta, tb) = (math::ln(a), math::ln(b));
    let panels = (math::ceil((tb - ta) / width) as usize).max(1);
    rule.composite(ta, tb, panels, |t| {
        let r = math::exp(t);
        r * f(r)
    })
}

/// Integral of r^{-1-2s} g(r) over [lo, hi] with lo > 0 and hi possibly
/// infinite, via w = r^{-2s}.
pub fn power_tail(rule: &GaussLegendre, s: f64, lo: f64, hi: f64, panels: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let two_s = 2.0 * s;
    let w_hi = math::pow(lo, -two_s);
    let w_lo = if hi.is_finite() { math::pow(hi, -two_s) } else { 0.0 };
    let inv = -1.0 / two_s;
    rule.composite(w_lo, w_hi, panels, |w| g(math::pow(w, inv))) / two_s
}

/// Integral of r^{alpha} g(r) over [0, R] (alpha > -1) via r = R tau^{1/(alpha+1)};
/// exact whenever g is constant.
pub fn power_weight(rule: &GaussLegendre, alpha: f64, big_r: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
    if !(big_r > 0.0) {
        return 0.0;
    }
    let k = alpha + 1.0;
    let scale = math::pow(big_r, k) / k;
    scale * rule.integrate(0.0, 1.0, |tau| g(big_r * math::pow(tau, 1.0 / k)))
}
