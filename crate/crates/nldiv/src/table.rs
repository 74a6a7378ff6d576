//! CSV result tables and atomic output.

use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    /// A computed float; must be finite.
    F(f64),
    /// A configuration float, may be `inf` (horizon).
    Param(f64),
    I(i64),
    S(String),
    B(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// 17 significant digits, round-trips every f64.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) | Cell::Param(v) => fmt_float(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("row has {found} cells, header has {expected}")]
    Width { expected: usize, found: usize },
    #[error("non-finite value in column `{column}`")]
    NonFinite { column: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<(), TableError> {
        if row.len() != self.header.len() {
            return Err(TableError::Width { expected: self.header.len(), found: row.len() });
        }
        for (c, name) in row.iter().zip(&self.header) {
            if let Cell::F(v) = c {
                if !v.is_finite() {
                    return Err(TableError::NonFinite { column: name.clone() });
                }
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Adds a leading column holding the same value on every row.
    pub fn prepend_column(&mut self, name: &str, value: Cell) {
        self.header.insert(0, name.to_string());
        for r in &mut self.rows {
            r.insert(0, value.clone());
        }
    }

    pub fn append_column(&mut self, name: &str, value: Cell) {
        self.header.push(name.to_string());
        for r in &mut self.rows {
            r.push(value.clone());
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, TableError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()?;
        w.into_inner().map_err(|e| TableError::Io(e.into_error()))
    }
}

/// Writes next to the target and renames, so a failed run leaves no partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TableError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| TableError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn rejects_non_finite_results() {
        let mut t = Table::new(&["rho", "value"]);
        t.push(vec![Cell::Param(f64::INFINITY), 1.0.into()]).unwrap();
        assert!(matches!(t.push(vec![Cell::Param(1.0), f64::NAN.into()]), Err(TableError::NonFinite { .. })));
        assert!(matches!(t.push(vec![1.0.into()]), Err(TableError::Width { .. })));
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "rho,value\ninf,1.0000000000000000e0\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"a\n").unwrap();
        write_atomic(&p, b"b\n").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"b\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
