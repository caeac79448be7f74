//! Optical materials: constant or tabulated complex refractive indices.
//!
//! A material is either a constant index `n + ik`, a dispersion table
//! interpolated linearly in wavelength, or the ideal-mirror sentinel used
//! by analytic limit tests. The permittivity is always derived as
//! `(n + ik)^2` *after* interpolation. Tables are ingested from CSV and
//! validated on load; out-of-range queries are errors, never
//! extrapolations.

use std::fmt;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("failed to read dispersion file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("dispersion file {path}, line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid dispersion table: {0}")]
    Validation(String),
    #[error("wavelength {wavelength} nm outside tabulated range [{min}, {max}] nm")]
    OutOfRange {
        wavelength: f64,
        min: f64,
        max: f64,
    },
    #[error("material '{name}' has no refractive index (ideal mirror sentinel)")]
    NoIndex { name: String },
    #[error("invalid constant index (n = {n}, k = {k}): require n > 0 and k >= 0")]
    InvalidConstant { n: f64, k: f64 },
}

/// One `(wavelength, n, k)` sample of a dispersion table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionRow {
    pub wavelength_nm: f64,
    pub n: f64,
    pub k: f64,
}

/// Tabulated complex index, strictly increasing in wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    rows: Vec<DispersionRow>,
    /// Free-text provenance (file path and any `#` header comments).
    pub source: String,
}

impl DispersionTable {
    /// Validate and wrap a list of rows.
    pub fn new(rows: Vec<DispersionRow>, source: impl Into<String>) -> Result<Self, MaterialError> {
        if rows.len() < 2 {
            return Err(MaterialError::Validation(format!(
                "need at least 2 rows, got {}",
                rows.len()
            )));
        }
        for pair in rows.windows(2) {
            if !(pair[1].wavelength_nm > pair[0].wavelength_nm) {
                return Err(MaterialError::Validation(format!(
                    "wavelengths must be strictly increasing ({} nm followed by {} nm)",
                    pair[0].wavelength_nm, pair[1].wavelength_nm
                )));
            }
        }
        for row in &rows {
            if !(row.wavelength_nm.is_finite() && row.wavelength_nm > 0.0) {
                return Err(MaterialError::Validation(format!(
                    "non-physical wavelength {} nm",
                    row.wavelength_nm
                )));
            }
            if !(row.n.is_finite() && row.n > 0.0) {
                return Err(MaterialError::Validation(format!(
                    "n must be positive and finite, got {} at {} nm",
                    row.n, row.wavelength_nm
                )));
            }
            if !(row.k.is_finite() && row.k >= 0.0) {
                return Err(MaterialError::Validation(format!(
                    "k must be non-negative and finite, got {} at {} nm",
                    row.k, row.wavelength_nm
                )));
            }
        }
        Ok(DispersionTable {
            rows,
            source: source.into(),
        })
    }

    pub fn rows(&self) -> &[DispersionRow] {
        &self.rows
    }

    pub fn wavelength_range(&self) -> (f64, f64) {
        (
            self.rows[0].wavelength_nm,
            self.rows[self.rows.len() - 1].wavelength_nm,
        )
    }

    /// Piecewise-linear interpolation of n and k separately. Exact (bit for
    /// bit) at table nodes.
    pub fn index_at(&self, wavelength_nm: f64) -> Result<Complex64, MaterialError> {
        let (lo, hi) = self.wavelength_range();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(MaterialError::OutOfRange {
                wavelength: wavelength_nm,
                min: lo,
                max: hi,
            });
        }
        // First row with wavelength >= query.
        let idx = self
            .rows
            .partition_point(|r| r.wavelength_nm < wavelength_nm);
        let upper = &self.rows[idx.min(self.rows.len() - 1)];
        if upper.wavelength_nm == wavelength_nm {
            return Ok(Complex64::new(upper.n, upper.k));
        }
        let lower = &self.rows[idx - 1];
        let t = (wavelength_nm - lower.wavelength_nm) / (upper.wavelength_nm - lower.wavelength_nm);
        Ok(Complex64::new(
            lower.n + t * (upper.n - lower.n),
            lower.k + t * (upper.k - lower.k),
        ))
    }
}

/// Load a dispersion table from the CSV format:
/// header `wavelength_nm,n,k`, one row per sample, `#` comment lines allowed.
pub fn load_dispersion_table(path: impl AsRef<Path>) -> Result<DispersionTable, MaterialError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| MaterialError::Io {
        path: path_str.clone(),
        source,
    })?;
    parse_dispersion_csv(&text, &path_str)
}

/// Parse the dispersion CSV format from a string. `origin` is used in
/// error messages and recorded as provenance.
pub fn parse_dispersion_csv(text: &str, origin: &str) -> Result<DispersionTable, MaterialError> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    let mut provenance = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            provenance.push(comment.trim().to_string());
            continue;
        }
        if !header_seen {
            let normalized: String = line.chars().filter(|c| !c.is_whitespace()).collect();
            if normalized != "wavelength_nm,n,k" {
                return Err(MaterialError::Parse {
                    path: origin.to_string(),
                    line: lineno + 1,
                    message: format!("expected header 'wavelength_nm,n,k', got '{line}'"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(MaterialError::Parse {
                path: origin.to_string(),
                line: lineno + 1,
                message: format!("expected 3 comma-separated fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64, MaterialError> {
            s.parse::<f64>().map_err(|_| MaterialError::Parse {
                path: origin.to_string(),
                line: lineno + 1,
                message: format!("cannot parse {what} '{s}' as a number"),
            })
        };
        rows.push(DispersionRow {
            wavelength_nm: parse(fields[0], "wavelength")?,
            n: parse(fields[1], "n")?,
            k: parse(fields[2], "k")?,
        });
    }
    if !header_seen {
        return Err(MaterialError::Parse {
            path: origin.to_string(),
            line: 1,
            message: "missing 'wavelength_nm,n,k' header".to_string(),
        });
    }
    let source = if provenance.is_empty() {
        origin.to_string()
    } else {
        format!("{} ({})", origin, provenance.join(" | "))
    };
    DispersionTable::new(rows, source)
}

/// How a material's index depends on wavelength.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexModel {
    ConstantIndex { n: f64, k: f64 },
    Tabulated(DispersionTable),
    /// Perfect reflector used for analytic limit tests. Has no refractive
    /// index; the stratified solver special-cases it.
    IdealMirror,
}

/// A named optical material. Immutable after construction; cheap to clone
/// and safe to share across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalMaterial {
    pub name: String,
    pub model: IndexModel,
}

impl OpticalMaterial {
    pub fn constant(name: impl Into<String>, n: f64, k: f64) -> Result<Self, MaterialError> {
        if !(n.is_finite() && n > 0.0 && k.is_finite() && k >= 0.0) {
            return Err(MaterialError::InvalidConstant { n, k });
        }
        Ok(OpticalMaterial {
            name: name.into(),
            model: IndexModel::ConstantIndex { n, k },
        })
    }

    pub fn tabulated(name: impl Into<String>, table: DispersionTable) -> Self {
        OpticalMaterial {
            name: name.into(),
            model: IndexModel::Tabulated(table),
        }
    }

    pub fn ideal_mirror() -> Self {
        OpticalMaterial {
            name: "ideal mirror".to_string(),
            model: IndexModel::IdealMirror,
        }
    }

    pub fn is_ideal_mirror(&self) -> bool {
        matches!(self.model, IndexModel::IdealMirror)
    }

    /// True if the material has no absorption at any wavelength it covers.
    pub fn is_lossless(&self) -> bool {
        match &self.model {
            IndexModel::ConstantIndex { k, .. } => *k == 0.0,
            IndexModel::Tabulated(table) => table.rows().iter().all(|r| r.k == 0.0),
            IndexModel::IdealMirror => false,
        }
    }

    /// Complex refractive index `n + ik` at the given vacuum wavelength.
    pub fn complex_index(&self, wavelength_nm: f64) -> Result<Complex64, MaterialError> {
        match &self.model {
            IndexModel::ConstantIndex { n, k } => Ok(Complex64::new(*n, *k)),
            IndexModel::Tabulated(table) => table.index_at(wavelength_nm),
            IndexModel::IdealMirror => Err(MaterialError::NoIndex {
                name: self.name.clone(),
            }),
        }
    }

    /// Relative permittivity `(n + ik)^2` at the given vacuum wavelength.
    pub fn permittivity(&self, wavelength_nm: f64) -> Result<Complex64, MaterialError> {
        let index = self.complex_index(wavelength_nm)?;
        Ok(index * index)
    }
}

impl fmt::Display for OpticalMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.model {
            IndexModel::ConstantIndex { n, k } => write!(f, "{} (n = {n}, k = {k})", self.name),
            IndexModel::Tabulated(t) => {
                let (lo, hi) = t.wavelength_range();
                write!(f, "{} (tabulated, {lo:.0}-{hi:.0} nm)", self.name)
            }
            IndexModel::IdealMirror => write!(f, "{} (perfect reflector)", self.name),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(f64, f64, f64)]) -> DispersionTable {
        DispersionTable::new(
            rows.iter()
                .map(|&(w, n, k)| DispersionRow {
                    wavelength_nm: w,
                    n,
                    k,
                })
                .collect(),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let text = "# provenance note\nwavelength_nm,n,k\n500,0.05,3.1\n600,0.06,3.7\n";
        let t = parse_dispersion_csv(text, "inline").unwrap();
        assert_eq!(t.rows().len(), 2);
        assert_eq!(t.rows()[0].wavelength_nm, 500.0);
        assert_eq!(t.rows()[1].k, 3.7);
        assert!(t.source.contains("provenance note"));
    }

    #[test]
    fn unsorted_rows_rejected() {
        let text = "wavelength_nm,n,k\n600,0.06,3.7\n500,0.05,3.1\n";
        let err = parse_dispersion_csv(text, "inline").unwrap_err();
        assert!(matches!(err, MaterialError::Validation(_)), "{err}");
    }

    #[test]
    fn negative_k_rejected() {
        let text = "wavelength_nm,n,k\n500,0.05,-0.1\n600,0.06,3.7\n";
        let err = parse_dispersion_csv(text, "inline").unwrap_err();
        assert!(matches!(err, MaterialError::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "wavelength_nm,n,k\n500,abc,3.1\n";
        match parse_dispersion_csv(text, "inline").unwrap_err() {
            MaterialError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn constant_index_ignores_wavelength() {
        let diamond = OpticalMaterial::constant("diamond", 2.41, 0.0).unwrap();
        for lam in [400.0, 700.0, 1000.0] {
            assert_eq!(
                diamond.complex_index(lam).unwrap(),
                Complex64::new(2.41, 0.0)
            );
        }
        let air = OpticalMaterial::constant("air", 1.0, 0.0).unwrap();
        assert_eq!(air.complex_index(532.0).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn linear_midpoint() {
        let t = table(&[(600.0, 1.0, 2.0), (700.0, 2.0, 4.0)]);
        let v = t.index_at(650.0).unwrap();
        assert!((v.re - 1.5).abs() < 1e-15);
        assert!((v.im - 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_at_nodes() {
        let t = table(&[(600.0, 1.25, 2.5), (653.7, 2.125, 4.875), (700.0, 2.0, 4.0)]);
        for row in t.rows() {
            let v = t.index_at(row.wavelength_nm).unwrap();
            assert_eq!(v.re, row.n);
            assert_eq!(v.im, row.k);
        }
    }

    #[test]
    fn out_of_range_is_error() {
        let t = table(&[(600.0, 1.0, 2.0), (700.0, 2.0, 4.0)]);
        assert!(matches!(
            t.index_at(599.9),
            Err(MaterialError::OutOfRange { .. })
        ));
        assert!(matches!(
            t.index_at(700.1),
            Err(MaterialError::OutOfRange { .. })
        ));
    }

    #[test]
    fn ideal_mirror_has_no_index() {
        let m = OpticalMaterial::ideal_mirror();
        assert!(matches!(
            m.complex_index(700.0),
            Err(MaterialError::NoIndex { .. })
        ));
    }

    #[test]
    fn sweep_is_continuous() {
        let t = table(&[(500.0, 1.0, 0.5), (600.0, 3.0, 0.0), (700.0, 2.0, 1.0)]);
        // Local slope bound: max |dn/dlambda| = 2/100, |dk/dlambda| = 1/100.
        let step = 0.1;
        let mut lam = 500.0;
        let mut prev = t.index_at(lam).unwrap();
        while lam + step <= 700.0 {
            lam += step;
            let cur = t.index_at(lam).unwrap();
            assert!((cur.re - prev.re).abs() <= 0.02 * step + 1e-12);
            assert!((cur.im - prev.im).abs() <= 0.01 * step + 1e-12);
            prev = cur;
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn interpolation_stays_within_bracket(q in 0.0f64..1.0) {
                let t = table(&[(500.0, 1.0, 0.2), (610.0, 2.5, 0.9)]);
                let lam = 500.0 + q * 110.0;
                let v = t.index_at(lam).unwrap();
                prop_assert!(v.re >= 1.0 - 1e-12 && v.re <= 2.5 + 1e-12);
                prop_assert!(v.im >= 0.2 - 1e-12 && v.im <= 0.9 + 1e-12);
            }
        }
    }
}
