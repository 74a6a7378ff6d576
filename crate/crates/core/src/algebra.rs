//! Special functions, the normalizing constant and small dense symmetric
//! linear algebra for n <= 3.

use crate::error::{Error, Result};
use crate::math;

/// Spatial dimension, restricted to 1, 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dimension(usize);

impl Dimension {
    pub const ONE: Dimension = Dimension(1);
    pub const TWO: Dimension = Dimension(2);
    pub const THREE: Dimension = Dimension(3);

    pub fn new(n: usize) -> Result<Self> {
        if (1..=3).contains(&n) {
            Ok(Dimension(n))
        } else {
            Err(Error::UnsupportedDimension(n))
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    /// Measure of the unit sphere S^{n-1}. For n = 1 this is the counting
    /// measure of {-1, +1}.
    pub fn omega(self) -> f64 {
        match self.0 {
            1 => 2.0,
            2 => 2.0 * math::PI,
            _ => 4.0 * math::PI,
        }
    }

    /// Volume of the unit ball, omega / n.
    pub fn ball_volume(self) -> f64 {
        self.omega() / self.0 as f64
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return math::PI / (math::sin(math::PI * x) * lanczos(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    math::sqrt(2.0 * math::PI) * math::exp((x + 0.5) * math::ln(t) - t) * acc
}

/// Euler Gamma function for positive arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain { what: "gamma argument", value: x });
    }
    Ok(lanczos(x))
}

/// The normalizing constant c_{n,s}.
pub fn c_ns(n: Dimension, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain { what: "s", value: s });
    }
    let nf = n.get() as f64;
    let num = math::pow(2.0, 2.0 * s) * gamma((nf + 2.0 * s) / 2.0)? * s * (1.0 - s);
    let den = math::pow(math::PI, nf / 2.0) * gamma(2.0 - s)?;
    Ok(num / den)
}

/// Dense square matrix of size n <= 3, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat {
    n: usize,
    e: [[f64; 3]; 3],
}

impl Mat {
    pub fn zeros(n: Dimension) -> Self {
        Mat { n: n.get(), e: [[0.0; 3]; 3] }
    }

    pub fn identity(n: Dimension) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: Dimension, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n.get() {
            m.e[i][i] = c;
        }
        m
    }

    pub fn from_fn(n: Dimension, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n.get() {
            for j in 0..n.get() {
                m.e[i][j] = f(i, j);
            }
        }
        m
    }

    /// Build from row slices; every row must have length n.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = Dimension::new(rows.len())?;
        for r in rows {
            if r.len() != n.get() {
                return Err(Error::DimensionMismatch { expected: n.get(), found: r.len() });
            }
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn diag(d: &[f64]) -> Result<Self> {
        let n = Dimension::new(d.len())?;
        Ok(Self::from_fn(n, |i, j| if i == j { d[i] } else { 0.0 }))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> Dimension {
        Dimension(self.n)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.e[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.e[i][j] = v;
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.dim(), |i, j| self.e[j][i])
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        let n = self.n;
        Mat::from_fn(self.dim(), |i, j| {
            let mut acc = 0.0;
            for k in 0..n {
                acc += self.e[i][k] * other.e[k][j];
            }
            acc
        })
    }

    pub fn add(&self, other: &Mat) -> Mat {
        Mat::from_fn(self.dim(), |i, j| self.e[i][j] + other.e[i][j])
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        Mat::from_fn(self.dim(), |i, j| self.e[i][j] - other.e[i][j])
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat::from_fn(self.dim(), |i, j| c * self.e[i][j])
    }

    /// Matrix-vector product into a fixed buffer; only the first n entries matter.
    #[inline]
    pub fn apply(&self, v: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for (j, x) in v.iter().enumerate().take(self.n) {
                acc += self.e[i][j] * x;
            }
            *o = acc;
        }
        out
    }

    /// |M v| for a vector of length n.
    #[inline]
    pub fn apply_norm(&self, v: &[f64]) -> f64 {
        let w = self.apply(v);
        math::norm(&w[..self.n])
    }

    pub fn det(&self) -> f64 {
        let e = &self.e;
        match self.n {
            1 => e[0][0],
            2 => e[0][0] * e[1][1] - e[0][1] * e[1][0],
            _ => {
                e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
                    - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
                    + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0])
            }
        }
    }

    pub fn frobenius(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += self.e[i][j] * self.e[i][j];
            }
        }
        math::sqrt(acc)
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(math::abs(self.e[i][j]));
            }
        }
        m
    }
}

/// Symmetric matrix. Only constructors that guarantee exact symmetry exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Accepts a matrix only if it is exactly symmetric.
    pub fn new(m: Mat) -> Result<Self> {
        for i in 0..m.n {
            for j in 0..i {
                if m.e[i][j] != m.e[j][i] {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Mirrors the upper triangle into the lower one.
    pub fn from_upper(m: &Mat) -> Self {
        SymMatrix(Mat::from_fn(m.dim(), |i, j| if i <= j { m.e[i][j] } else { m.e[j][i] }))
    }

    /// Averages m and its transpose.
    pub fn symmetrize(m: &Mat) -> Self {
        let a = Mat::from_fn(m.dim(), |i, j| 0.5 * (m.e[i][j] + m.e[j][i]));
        // averaging is exactly symmetric in floating point (a+b == b+a)
        SymMatrix(a)
    }

    pub fn from_fn(n: Dimension, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n.get() {
            for j in i..n.get() {
                let v = f(i, j);
                m.e[i][j] = v;
                m.e[j][i] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(n: Dimension) -> Self {
        SymMatrix(Mat::identity(n))
    }

    pub fn scaled_identity(n: Dimension, c: f64) -> Self {
        SymMatrix(Mat::scaled_identity(n, c))
    }

    pub fn diag(d: &[f64]) -> Result<Self> {
        Ok(SymMatrix(Mat::diag(d)?))
    }

    pub fn zeros(n: Dimension) -> Self {
        SymMatrix(Mat::zeros(n))
    }

    #[inline]
    pub fn mat(&self) -> &Mat {
        &self.0
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn dim(&self) -> Dimension {
        self.0.dim()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.e[i][j]
    }

    pub fn add(&self, o: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.add(&o.0))
    }

    pub fn sub(&self, o: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.sub(&o.0))
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(self.0.scale(c))
    }
}

/// Eigen-decomposition A = O diag(lambda) O^T with ascending eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: [f64; 3],
    /// Eigenvectors stored as columns.
    pub vectors: Mat,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.vectors.n
    }

    pub fn values(&self) -> &[f64] {
        &self.eigenvalues[..self.vectors.n]
    }

    /// O diag(d) O^T for arbitrary diagonal entries d.
    pub fn reassemble(&self, d: &[f64]) -> SymMatrix {
        let o = &self.vectors;
        let n = o.n;
        SymMatrix::from_fn(o.dim(), |i, j| {
            let mut acc = 0.0;
            for k in 0..n {
                acc += o.e[i][k] * d[k] * o.e[j][k];
            }
            acc
        })
    }
}

/// Cyclic Jacobi eigen-solver.
pub fn eigh_sym(a: &SymMatrix) -> Spectrum {
    let n = a.n();
    let mut m = a.0.e;
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += m[i][i] * m[i][i];
            for j in 0..n {
                if i != j {
                    off += m[i][j] * m[i][j];
                }
            }
        }
        if off == 0.0 || off <= 1e-34 * diag {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = {
                    let sgn = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sgn / (math::abs(theta) + math::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for row in m.iter_mut().take(n) {
                    let mkp = row[p];
                    let mkq = row[q];
                    row[p] = c * mkp - s * mkq;
                    row[q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut().take(n) {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2];
    let lam = [m[0][0], m[1][1], m[2][2]];
    order[..n].sort_by(|&i, &j| lam[i].partial_cmp(&lam[j]).unwrap_or(core::cmp::Ordering::Equal));
    let mut eigenvalues = [0.0; 3];
    let mut vectors = Mat::zeros(Dimension(n));
    for (col, &src) in order.iter().enumerate().take(n) {
        eigenvalues[col] = lam[src];
        // sign convention: first non-negligible component positive
        let mut sign = 1.0;
        for row in v.iter().take(n) {
            if math::abs(row[src]) > 1e-12 {
                sign = if row[src] > 0.0 { 1.0 } else { -1.0 };
                break;
            }
        }
        for (row, vrow) in v.iter().enumerate().take(n) {
            vectors.e[row][col] = sign * vrow[src];
        }
    }
    Spectrum { eigenvalues, vectors }
}

/// Largest singular value.
pub fn operator_norm(a: &Mat) -> f64 {
    let ata = SymMatrix::symmetrize(&a.transpose().mul(a));
    let sp = eigh_sym(&ata);
    math::sqrt(sp.values()[a.n - 1].max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzGap {
    pub max_eigen_gap: f64,
    pub norm_gap: f64,
}

/// Compares sorted eigenvalue differences with the operator norm of A - B.
pub fn eigenvalue_lipschitz_gap(a: &SymMatrix, b: &SymMatrix) -> Result<LipschitzGap> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), found: b.n() });
    }
    let la = eigh_sym(a);
    let lb = eigh_sym(b);
    let mut gap: f64 = 0.0;
    for (x, y) in la.values().iter().zip(lb.values()) {
        gap = gap.max(math::abs(x - y));
    }
    Ok(LipschitzGap { max_eigen_gap: gap, norm_gap: operator_norm(&a.0.sub(&b.0)) })
}
