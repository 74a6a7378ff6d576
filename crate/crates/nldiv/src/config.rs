//! Experiment configuration: TOML schema, defaults and validation.

use std::fmt;
use std::path::Path;

use nldiv_core::asymptotics::{S0_GRID, S1_GRID, SWEEP_GRID};
use nldiv_core::kernel::probes;
use nldiv_core::mesh::Mesh;
use nldiv_core::solver::{sample_points, Nonlinearity, ProblemData};
use nldiv_core::spectral::{catalogue, HPerturbation, MatrixFieldA};
use nldiv_core::{eigh_sym, Dimension, Error as CoreError, Mat, SymMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown key `{key}` (line {line})")]
    UnknownKey { key: String, line: usize },
    #[error("`{key}` = {value} is out of range: expected {expected}")]
    Range { key: String, value: String, expected: String },
    #[error("`{key}` = \"{value}\" is not a known name (one of: {known})")]
    UnknownName { key: String, value: String, known: String },
    #[error("domination violated at x = {x}: |f| = {f} exceeds Q a = {bound}; data must satisfy |f| <= Q a with 0 < Q < gamma")]
    Domination { x: f64, f: f64, bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Constants,
    RecoverA,
    BuildM,
    Solve,
    SweepS,
    Limits,
    Verify,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::Constants => "constants",
            Experiment::RecoverA => "recover-a",
            Experiment::BuildM => "build-m",
            Experiment::Solve => "solve",
            Experiment::SweepS => "sweep-s",
            Experiment::Limits => "limits",
            Experiment::Verify => "verify",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Amplitude of the weight a.
    pub a: f64,
    pub a_profile: String,
    /// Amplitude of the right-hand side f.
    pub f: f64,
    pub f_profile: String,
    pub q: f64,
    pub h: String,
    /// Linear problem: no domination requirement, no truncation loop.
    pub linear: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            a: 1.0,
            a_profile: "constant".into(),
            f: 0.4,
            f_profile: "constant".into(),
            q: 0.4,
            h: "identity".into(),
            linear: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub assembly: f64,
    pub order: usize,
    pub newton: f64,
    pub outer: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { assembly: 1e-6, order: 8, newton: 1e-11, outer: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub n: usize,
    pub domain: [f64; 2],
    pub elements: usize,
    pub s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_grid: Option<Vec<f64>>,
    pub s0_grid: Vec<f64>,
    pub rho: f64,
    pub field: String,
    /// Amplitude c of the even perturbation H(y) = c |y|^2 / (1 + |y|^2) Id.
    pub perturbation: f64,
    /// Constant A given entrywise; replaces `field`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Constant A = R diag(eigenvalues) R^T; replaces `field`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    /// Angles of R: one for n = 2, z-y-z Euler angles for n = 3.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<f64>>,
    /// Constant modulation M used as is, bypassing the construction from A.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modulation: Option<Vec<Vec<f64>>>,
    pub probe: String,
    pub ells: Vec<f64>,
    pub limits: Vec<String>,
    pub seed: u64,
    pub deterministic: bool,
    pub data: DataConfig,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: SCHEMA_VERSION,
            experiment: None,
            n: 1,
            domain: [-1.0, 1.0],
            elements: 128,
            s: 0.5,
            s_grid: None,
            s0_grid: S0_GRID.to_vec(),
            rho: f64::INFINITY,
            field: "identity".into(),
            perturbation: 0.0,
            matrix: None,
            eigenvalues: None,
            rotation: None,
            modulation: None,
            probe: "gaussian".into(),
            ells: vec![2.0, 4.0, 8.0],
            limits: vec!["s1".into(), "s0".into()],
            seed: 0,
            deterministic: false,
            data: DataConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "schema",
    "experiment",
    "n",
    "domain",
    "elements",
    "s",
    "s_grid",
    "s0_grid",
    "rho",
    "field",
    "perturbation",
    "matrix",
    "eigenvalues",
    "rotation",
    "modulation",
    "probe",
    "ells",
    "limits",
    "seed",
    "deterministic",
    "data",
    "tolerances",
];
const DATA_KEYS: &[&str] = &["a", "a_profile", "f", "f_profile", "q", "h", "linear"];
const TOL_KEYS: &[&str] = &["assembly", "order", "newton", "outer"];
pub const PROFILES: &[&str] = &["constant", "bump", "sine", "cosine"];
pub const LIMIT_KINDS: &[&str] = &["s1", "s0", "smoothing"];

/// 1-based line of `key` inside `[section]` (top level when None); 0 if not found.
fn line_of(src: &str, section: Option<&str>, key: &str) -> usize {
    let mut current: Option<String> = None;
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[') {
            current = Some(h.trim_end_matches(']').trim().to_string());
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some(rest) = t.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return i + 1;
            }
        }
    }
    0
}

fn check_keys(src: &str, table: &toml::Table) -> Result<(), ConfigError> {
    for (k, v) in table {
        if !TOP_KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey { key: k.clone(), line: line_of(src, None, k) });
        }
        let nested = match k.as_str() {
            "data" => Some(DATA_KEYS),
            "tolerances" => Some(TOL_KEYS),
            _ => None,
        };
        if let (Some(keys), Some(sub)) = (nested, v.as_table()) {
            for sk in sub.keys() {
                if !keys.contains(&sk.as_str()) {
                    return Err(ConfigError::UnknownKey {
                        key: format!("{k}.{sk}"),
                        line: line_of(src, Some(k), sk),
                    });
                }
            }
        }
    }
    Ok(())
}

fn range(key: &str, value: impl fmt::Display, expected: &str) -> ConfigError {
    ConfigError::Range { key: key.into(), value: value.to_string(), expected: expected.into() }
}

fn name_error(key: &str, value: &str, known: &[&str]) -> ConfigError {
    ConfigError::UnknownName { key: key.into(), value: value.into(), known: known.join(", ") }
}

fn check_s(key: &str, s: f64) -> Result<(), ConfigError> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(range(key, s, "a value in the open interval (0, 1)"))
    }
}

/// Parses TOML text without validation against an experiment.
pub fn parse(src: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: toml::Table = src.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    check_keys(src, &table)?;
    toml::from_str(src).map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let src = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse(&src)
}

fn square(rows: &[Vec<f64>]) -> Option<Mat> {
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Mat::from_rows(&refs).ok()
}

fn rotation_matrix(n: Dimension, angles: &[f64]) -> Option<Mat> {
    let rz = |t: f64| Mat::from_rows(&[&[t.cos(), -t.sin(), 0.0], &[t.sin(), t.cos(), 0.0], &[0.0, 0.0, 1.0]]);
    let ry = |t: f64| Mat::from_rows(&[&[t.cos(), 0.0, t.sin()], &[0.0, 1.0, 0.0], &[-t.sin(), 0.0, t.cos()]]);
    match (n.get(), angles) {
        (1, []) => Some(Mat::identity(n)),
        (2, []) => Some(Mat::identity(n)),
        (2, [t]) => Mat::from_rows(&[&[t.cos(), -t.sin()], &[t.sin(), t.cos()]]).ok(),
        (3, []) => Some(Mat::identity(n)),
        (3, [a, b, c]) => Some(rz(*a).ok()?.mul(&ry(*b).ok()?).mul(&rz(*c).ok()?)),
        _ => None,
    }
}

fn profile(name: &str, lo: f64, hi: f64) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
    let kind = PROFILES.iter().position(|p| *p == name).unwrap_or(0);
    move |x: f64| {
        let t = (2.0 * x - lo - hi) / (hi - lo);
        match kind {
            0 => 1.0,
            1 => {
                let u = (1.0 - t * t).max(0.0);
                u * u
            }
            2 => (std::f64::consts::PI * t).sin(),
            _ => (0.5 * std::f64::consts::PI * t).cos(),
        }
    }
}

impl ExperimentConfig {
    pub fn dimension(&self) -> Dimension {
        Dimension::new(self.n).expect("validated dimension")
    }

    /// s grid of the experiment, falling back to the default grid of its kind.
    pub fn grid(&self, kind: Experiment) -> Vec<f64> {
        match (&self.s_grid, kind) {
            (Some(g), _) => g.clone(),
            (None, Experiment::SweepS) => SWEEP_GRID.to_vec(),
            (None, Experiment::Limits) => S1_GRID.to_vec(),
            (None, _) => vec![self.s],
        }
    }

    pub fn mesh(&self) -> Mesh {
        Mesh::interval(self.domain[0], self.domain[1], self.elements).expect("validated mesh")
    }

    pub fn a_field(&self) -> MatrixFieldA {
        match self.constant_a() {
            Some(a) => MatrixFieldA::constant(a).expect("validated matrix"),
            None => catalogue::by_name(&self.field, self.dimension()).expect("validated field"),
        }
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        Nonlinearity::by_name(&self.data.h).expect("validated nonlinearity")
    }

    pub fn perturbation_field(&self) -> HPerturbation {
        let n = self.dimension();
        if self.perturbation == 0.0 {
            return HPerturbation::zero(n);
        }
        let c = self.perturbation;
        HPerturbation::new(c, Some(SymMatrix::scaled_identity(n, c)), move |y: &[f64]| {
            let r2: f64 = y.iter().map(|v| v * v).sum();
            SymMatrix::scaled_identity(n, c * r2 / (1.0 + r2))
        })
    }

    /// Constant A from `matrix` or from `eigenvalues` and `rotation`.
    pub fn constant_a(&self) -> Option<SymMatrix> {
        if let Some(rows) = &self.matrix {
            return SymMatrix::new(square(rows)?).ok();
        }
        let lambda = self.eigenvalues.as_ref()?;
        let n = Dimension::new(lambda.len()).ok()?;
        let r = rotation_matrix(n, self.rotation.as_deref().unwrap_or(&[]))?;
        let d = Mat::diag(lambda).ok()?;
        Some(SymMatrix::symmetrize(&r.mul(&d).mul(&r.transpose())))
    }

    pub fn explicit_modulation(&self) -> Option<Mat> {
        square(self.modulation.as_ref()?)
    }

    pub fn problem_data(&self) -> ProblemData {
        let (lo, hi) = (self.domain[0], self.domain[1]);
        let (pa, pf) = (profile(&self.data.a_profile, lo, hi), profile(&self.data.f_profile, lo, hi));
        let (ca, cf) = (self.data.a, self.data.f);
        let a = move |x: f64| ca * pa(x);
        let f = move |x: f64| cf * pf(x);
        if self.data.linear {
            ProblemData::linear(a, f)
        } else {
            ProblemData::new(a, f, self.data.q, self.nonlinearity()).expect("validated Q")
        }
    }

    /// Range and catalogue checks, plus domination for the experiments that solve.
    pub fn validate(&self, kind: Experiment) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(range("schema", self.schema, &format!("schema version {SCHEMA_VERSION}")));
        }
        if let Some(e) = self.experiment {
            if e != kind {
                return Err(range("experiment", e, &format!("\"{kind}\" for this subcommand")));
            }
        }
        if !(1..=3).contains(&self.n) {
            return Err(range("n", self.n, "1, 2 or 3"));
        }
        check_s("s", self.s)?;
        if let Some(g) = &self.s_grid {
            if g.is_empty() {
                return Err(range("s_grid", "[]", "a non-empty list"));
            }
            for &s in g {
                check_s("s_grid", s)?;
            }
        }
        for &s in &self.s0_grid {
            check_s("s0_grid", s)?;
        }
        if self.rho.is_nan() || self.rho <= 0.0 {
            return Err(range("rho", self.rho, "a positive horizon (inf for none)"));
        }
        let [lo, hi] = self.domain;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(range("domain", format!("[{lo}, {hi}]"), "[lo, hi] with lo < hi"));
        }
        if self.elements < 2 || self.elements > 4096 {
            return Err(range("elements", self.elements, "an integer in [2, 4096]"));
        }
        if !(self.perturbation >= 0.0 && self.perturbation <= 10.0) {
            return Err(range("perturbation", self.perturbation, "a value in [0, 10]"));
        }
        if catalogue::by_name(&self.field, Dimension::ONE).is_none() {
            return Err(name_error("field", &self.field, &catalogue::NAMES));
        }
        if probes::by_name(&self.probe, Dimension::ONE).is_none() {
            return Err(name_error("probe", &self.probe, &probes::NAMES));
        }
        for &e in &self.ells {
            if !(e >= 1.0 && e.is_finite()) {
                return Err(range("ells", e, "smoothing indices >= 1"));
            }
        }
        for l in &self.limits {
            if !LIMIT_KINDS.contains(&l.as_str()) {
                return Err(name_error("limits", l, LIMIT_KINDS));
            }
        }
        let t = &self.tolerances;
        for (key, v) in [("tolerances.assembly", t.assembly), ("tolerances.newton", t.newton), ("tolerances.outer", t.outer)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(range(key, v, "a value in (0, 1)"));
            }
        }
        if !(2..=40).contains(&t.order) {
            return Err(range("tolerances.order", t.order, "an integer in [2, 40]"));
        }
        self.validate_matrices()?;
        self.validate_data(kind)
    }

    fn validate_matrices(&self) -> Result<(), ConfigError> {
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == self.n && rows.iter().all(|r| r.len() == self.n);
        if self.matrix.is_some() && self.eigenvalues.is_some() {
            return Err(range("eigenvalues", "given", "either `matrix` or `eigenvalues`, not both"));
        }
        if let Some(rows) = &self.matrix {
            let spd = shape_ok(rows) && self.constant_a().is_some_and(|m| eigh_sym(&m).values()[0] > 0.0);
            if !spd {
                return Err(range("matrix", format!("{rows:?}"), "a symmetric positive definite n x n matrix"));
            }
        }
        if let Some(l) = &self.eigenvalues {
            if l.len() != self.n || l.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(range("eigenvalues", format!("{l:?}"), "n positive eigenvalues"));
            }
        }
        if let Some(r) = &self.rotation {
            let want = match self.n {
                2 => 1,
                3 => 3,
                _ => 0,
            };
            if self.eigenvalues.is_none() || r.len() != want || r.iter().any(|v| !v.is_finite()) {
                return Err(range("rotation", format!("{r:?}"), "angles with `eigenvalues`: one for n = 2, three for n = 3"));
            }
        }
        if let Some(rows) = &self.modulation {
            let ok = shape_ok(rows) && self.explicit_modulation().is_some_and(|m| m.det().abs() > 1e-12);
            if !ok {
                return Err(range("modulation", format!("{rows:?}"), "a nonsingular n x n matrix"));
            }
        }
        Ok(())
    }

    fn validate_data(&self, kind: Experiment) -> Result<(), ConfigError> {
        let d = &self.data;
        for (key, p) in [("data.a_profile", &d.a_profile), ("data.f_profile", &d.f_profile)] {
            if !PROFILES.contains(&p.as_str()) {
                return Err(name_error(key, p, PROFILES));
            }
        }
        let Some(nl) = Nonlinearity::by_name(&d.h) else {
            return Err(name_error("data.h", &d.h, &Nonlinearity::NAMES));
        };
        if !(d.a >= 0.0 && d.a.is_finite()) {
            return Err(range("data.a", d.a, "a non-negative amplitude"));
        }
        if !d.f.is_finite() {
            return Err(range("data.f", d.f, "a finite amplitude"));
        }
        if !d.linear && !(d.q > 0.0 && d.q < nl.gamma) {
            return Err(range("data.q", d.q, &format!("0 < Q < gamma = {} for h = {}", nl.gamma, nl.name)));
        }
        let solves = matches!(kind, Experiment::Solve | Experiment::SweepS)
            || (kind == Experiment::Limits && self.limits.iter().any(|l| l == "smoothing"));
        if solves {
            if self.n != 1 {
                return Err(range("n", self.n, "1 (the solvers run on intervals)"));
            }
            if !d.linear {
                self.check_domination()?;
            }
        }
        Ok(())
    }

    fn check_domination(&self) -> Result<(), ConfigError> {
        match self.problem_data().check_domination(&sample_points(&self.mesh())) {
            Err(CoreError::Domination { position, f, bound }) => Err(ConfigError::Domination { x: position, f, bound }),
            Err(CoreError::Domain { value, .. }) => Err(range("data.a", value, "a non-negative weight")),
            _ => Ok(()),
        }
    }

    /// Hex prefix of the SHA-256 of the resolved configuration and experiment kind.
    pub fn hash(&self, kind: Experiment) -> String {
        let body = toml::to_string(self).unwrap_or_default();
        let mut h = Sha256::new();
        h.update(kind.to_string().as_bytes());
        h.update(b"\n");
        h.update(body.as_bytes());
        hex::encode(h.finalize())[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse("schema = 1\nn = 1\n").unwrap();
        assert_eq!(c.elements, 128);
        assert_eq!(c.data.q, 0.4);
        c.validate(Experiment::Solve).unwrap();
    }

    #[test]
    fn distinct_error_kinds() {
        let e = parse("schema = 1\nfoo = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { ref key, line: 2 } if key == "foo"), "{e}");
        let e = parse("[data]\nq = 0.4\nqq = 1\n").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { ref key, line: 3 } if key == "data.qq"), "{e}");
        let c = parse("s = 1.0\n").unwrap();
        let e = c.validate(Experiment::Solve).unwrap_err();
        assert!(matches!(e, ConfigError::Range { ref key, .. } if key == "s"), "{e}");
        let c = parse("[data]\nf = 0.6\nq = 0.4\na = 1.0\n").unwrap();
        let e = c.validate(Experiment::Solve).unwrap_err();
        assert!(matches!(e, ConfigError::Domination { .. }), "{e}");
        // the same data are fine where nothing is solved
        c.validate(Experiment::Constants).unwrap();
    }

    #[test]
    fn constant_fields() {
        let c = parse("n = 2\neigenvalues = [2.0, 0.5]\nrotation = [0.7]\n").unwrap();
        c.validate(Experiment::RecoverA).unwrap();
        let a = c.constant_a().unwrap();
        assert!((a.get(0, 0) + a.get(1, 1) - 2.5).abs() < 1e-14);
        assert!((a.mat().det() - 1.0).abs() < 1e-14);
        let c = parse("n = 2\nmatrix = [[1.0, 0.0], [0.0, 1.0]]\neigenvalues = [1.0, 1.0]\n").unwrap();
        assert!(matches!(c.validate(Experiment::RecoverA), Err(ConfigError::Range { ref key, .. }) if key == "eigenvalues"));
        let c = parse("n = 2\nmatrix = [[1.0, 2.0], [2.0, 1.0]]\n").unwrap();
        assert!(matches!(c.validate(Experiment::RecoverA), Err(ConfigError::Range { ref key, .. }) if key == "matrix"));
        let c = parse("n = 3\neigenvalues = [1.0, 1.0, 2.0]\nrotation = [0.1]\n").unwrap();
        assert!(matches!(c.validate(Experiment::RecoverA), Err(ConfigError::Range { ref key, .. }) if key == "rotation"));
        let c = parse("n = 2\nmodulation = [[1.0, 2.0], [0.5, 1.0]]\n").unwrap();
        assert!(matches!(c.validate(Experiment::Limits), Err(ConfigError::Range { ref key, .. }) if key == "modulation"));
        let c = parse("probe = \"box\"\n").unwrap();
        assert!(matches!(c.validate(Experiment::Limits), Err(ConfigError::UnknownName { .. })));
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse("s = 0.3\n").unwrap();
        let b = parse("s = 0.30000000000000004\n").unwrap();
        assert_eq!(a.hash(Experiment::Solve), a.clone().hash(Experiment::Solve));
        assert_ne!(a.hash(Experiment::Solve), b.hash(Experiment::Solve));
        assert_ne!(a.hash(Experiment::Solve), a.hash(Experiment::SweepS));
    }
}
