//! Measured-spectra pipeline: ingestion, unit-counts normalization,
//! enhancement extraction, fringe detection and mirror-offset fitting.
//!
//! Distance-scanned spectra are normalized per mirror position to unit
//! spectral counts, which cancels pump-interference intensity changes
//! (any per-position multiplicative factor drops out), and then divided
//! by the unit-normalized reference spectrum taken without the mirror.
//! The smallest physical gap is estimated by aligning the measured
//! fringe maxima against model maxima as a function of a rigid distance
//! offset.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::collection::{
    CollectionError, EnhancementMap, MapMetadata, NormalizationMode,
};
use crate::quadrature::trapezoid;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("spectrum{} has zero (or negative) integral and cannot be normalized", d_nm.map(|d| format!(" at d = {d} nm")).unwrap_or_default())]
    ZeroSpectrum { d_nm: Option<f64> },
    #[error("wavelength grids incompatible: {0}")]
    GridMismatch(String),
    #[error("reference spectrum is zero at lambda = {lambda} nm")]
    ZeroReference { lambda: f64 },
    #[error("column has {len} samples; need at least 7 for fringe detection")]
    ColumnTooShort { len: usize },
    #[error("wavelength {lambda} nm is not on the map grid")]
    WavelengthNotOnGrid { lambda: f64 },
    #[error("no usable fringe maxima in the {which} map")]
    NoFringes { which: &'static str },
    #[error("smoothing window must be odd and >= 3, got {0}")]
    BadWindow(usize),
    #[error("model generation failed: {0}")]
    ModelGeneration(String),
    #[error("invalid spectrum: {0}")]
    BadSpectrum(String),
    #[error(transparent)]
    Map(#[from] CollectionError),
}

/// A single emission spectrum sampled on an ascending wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    lambda_nm: Vec<f64>,
    counts: Vec<f64>,
}

impl SpectrumRecord {
    pub fn new(lambda_nm: Vec<f64>, counts: Vec<f64>) -> Result<Self, PipelineError> {
        if lambda_nm.len() != counts.len() {
            return Err(PipelineError::BadSpectrum(format!(
                "{} wavelengths but {} counts",
                lambda_nm.len(),
                counts.len()
            )));
        }
        if lambda_nm.len() < 2 {
            return Err(PipelineError::BadSpectrum(
                "need at least 2 samples".to_string(),
            ));
        }
        for pair in lambda_nm.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(PipelineError::BadSpectrum(format!(
                    "wavelengths must be strictly ascending ({} then {})",
                    pair[0], pair[1]
                )));
            }
        }
        for (&l, &c) in lambda_nm.iter().zip(&counts) {
            if !c.is_finite() || c < 0.0 {
                return Err(PipelineError::BadSpectrum(format!(
                    "count {c} at {l} nm must be finite and non-negative"
                )));
            }
        }
        Ok(SpectrumRecord { lambda_nm, counts })
    }

    pub fn lambda_nm(&self) -> &[f64] {
        &self.lambda_nm
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn wavelength_range(&self) -> (f64, f64) {
        (self.lambda_nm[0], self.lambda_nm[self.lambda_nm.len() - 1])
    }

    /// Trapezoidal integral over the wavelength grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.lambda_nm, &self.counts)
    }

    /// Linear interpolation of counts; clamps at the grid ends (callers
    /// check coverage first).
    pub fn sample_at(&self, wavelength_nm: f64) -> f64 {
        let xs = &self.lambda_nm;
        if wavelength_nm <= xs[0] {
            return self.counts[0];
        }
        if wavelength_nm >= xs[xs.len() - 1] {
            return self.counts[xs.len() - 1];
        }
        let idx = xs.partition_point(|&x| x < wavelength_nm);
        if xs[idx] == wavelength_nm {
            return self.counts[idx];
        }
        let t = (wavelength_nm - xs[idx - 1]) / (xs[idx] - xs[idx - 1]);
        self.counts[idx - 1] + t * (self.counts[idx] - self.counts[idx - 1])
    }
}

/// Normalize to unit spectral counts (trapezoidal integral = 1).
pub fn normalize_spectrum(s: &SpectrumRecord) -> Result<SpectrumRecord, PipelineError> {
    let integral = s.integral();
    if !(integral > 0.0) {
        return Err(PipelineError::ZeroSpectrum { d_nm: None });
    }
    Ok(SpectrumRecord {
        lambda_nm: s.lambda_nm.clone(),
        counts: s.counts.iter().map(|c| c / integral).collect(),
    })
}

/// Distance-scanned spectra on a common wavelength grid.
#[derive(Debug, Clone)]
pub struct ScanDataset {
    d_positions_nm: Vec<f64>,
    spectra: Vec<SpectrumRecord>,
}

impl ScanDataset {
    pub fn new(
        d_positions_nm: Vec<f64>,
        spectra: Vec<SpectrumRecord>,
    ) -> Result<Self, PipelineError> {
        if d_positions_nm.len() != spectra.len() {
            return Err(PipelineError::GridMismatch(format!(
                "{} positions but {} spectra",
                d_positions_nm.len(),
                spectra.len()
            )));
        }
        if spectra.is_empty() {
            return Err(PipelineError::GridMismatch("empty scan".to_string()));
        }
        for pair in d_positions_nm.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(PipelineError::GridMismatch(format!(
                    "positions must be strictly increasing ({} then {})",
                    pair[0], pair[1]
                )));
            }
        }
        let grid = spectra[0].lambda_nm().to_vec();
        for s in &spectra[1..] {
            if s.lambda_nm() != grid.as_slice() {
                return Err(PipelineError::GridMismatch(
                    "all scan spectra must share one wavelength grid".to_string(),
                ));
            }
        }
        Ok(ScanDataset {
            d_positions_nm,
            spectra,
        })
    }

    pub fn d_positions_nm(&self) -> &[f64] {
        &self.d_positions_nm
    }

    pub fn spectra(&self) -> &[SpectrumRecord] {
        &self.spectra
    }

    pub fn lambda_nm(&self) -> &[f64] {
        self.spectra[0].lambda_nm()
    }
}

/// Per-position enhancement `E = S_0(d, lambda) / S_ref,0(lambda)` from
/// unit-normalized spectra. A reference on a different grid is resampled
/// linearly (recorded in the map metadata); it must cover the scan grid.
pub fn enhancement_from_scan(
    scan: &ScanDataset,
    reference: &SpectrumRecord,
) -> Result<EnhancementMap, PipelineError> {
    let grid = scan.lambda_nm();
    let (ref_min, ref_max) = reference.wavelength_range();
    if ref_min > grid[0] || ref_max < grid[grid.len() - 1] {
        return Err(PipelineError::GridMismatch(format!(
            "reference covers [{ref_min}, {ref_max}] nm but the scan needs [{}, {}] nm",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    let resampled = reference.lambda_nm() != grid;
    let ref_on_grid = SpectrumRecord::new(
        grid.to_vec(),
        grid.iter().map(|&l| reference.sample_at(l)).collect(),
    )?;
    let ref_unit = normalize_spectrum(&ref_on_grid)?;
    for (&l, &c) in grid.iter().zip(ref_unit.counts()) {
        if c <= 0.0 {
            return Err(PipelineError::ZeroReference { lambda: l });
        }
    }

    let mut values = Vec::with_capacity(scan.spectra.len() * grid.len());
    for (&d, spectrum) in scan.d_positions_nm.iter().zip(&scan.spectra) {
        let unit = normalize_spectrum(spectrum).map_err(|e| match e {
            PipelineError::ZeroSpectrum { .. } => PipelineError::ZeroSpectrum { d_nm: Some(d) },
            other => other,
        })?;
        for (s0, r0) in unit.counts().iter().zip(ref_unit.counts()) {
            values.push(s0 / r0);
        }
    }

    let metadata = MapMetadata {
        geometry: None,
        weights: None,
        emitter_depth_nm: None,
        materials: if resampled {
            "measured scan (reference resampled linearly onto the scan grid)".to_string()
        } else {
            "measured scan".to_string()
        },
        normalization: NormalizationMode::PerDistanceUnitCounts,
    };
    Ok(EnhancementMap::new(
        scan.d_positions_nm.clone(),
        grid.to_vec(),
        values,
        metadata,
    )?)
}

pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;
pub const DEFAULT_PROMINENCE: f64 = 0.05;

/// Quadratic Savitzky-Golay smoothing with mirrored ends.
fn savitzky_smooth(column: &[f64], window: usize) -> Result<Vec<f64>, PipelineError> {
    if window < 3 || window % 2 == 0 {
        return Err(PipelineError::BadWindow(window));
    }
    let half = window / 2;
    let m = window as f64;
    let denom = m * (m * m - 4.0) / 3.0;
    let coeffs: Vec<f64> = (-(half as isize)..=half as isize)
        .map(|i| {
            let i = i as f64;
            ((3.0 * m * m - 7.0 - 20.0 * i * i) / 4.0) / denom
        })
        .collect();
    let n = column.len();
    let reflect = |idx: isize| -> f64 {
        let j = if idx < 0 {
            (-idx) as usize
        } else if idx as usize >= n {
            2 * (n - 1) - idx as usize
        } else {
            idx as usize
        };
        column[j]
    };
    Ok((0..n)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(c, w)| w * reflect(i as isize + c as isize - half as isize))
                .sum()
        })
        .collect())
}

/// Indices of local maxima with at least the requested prominence.
fn prominent_maxima(y: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = y.len();
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        if y[i] > y[i - 1] && y[i] > y[i + 1] {
            peaks.push(i);
        }
    }
    peaks
        .into_iter()
        .filter(|&p| {
            // Walk outward to the first strictly higher sample (or edge);
            // the prominence is the drop to the higher of the two valley
            // minima inside that span.
            let mut left_min = y[p];
            let mut j = p;
            while j > 0 {
                j -= 1;
                if y[j] > y[p] {
                    break;
                }
                left_min = left_min.min(y[j]);
            }
            let mut right_min = y[p];
            let mut j = p;
            while j + 1 < n {
                j += 1;
                if y[j] > y[p] {
                    break;
                }
                right_min = right_min.min(y[j]);
            }
            y[p] - left_min.max(right_min) >= min_prominence
        })
        .collect()
}

/// Mirror positions of the enhancement maxima along one wavelength
/// column, after light smoothing. Maxima below the prominence threshold
/// are discarded.
pub fn fringe_maxima(
    map: &EnhancementMap,
    wavelength_nm: f64,
) -> Result<Vec<f64>, PipelineError> {
    fringe_maxima_with(
        map,
        wavelength_nm,
        DEFAULT_SMOOTHING_WINDOW,
        DEFAULT_PROMINENCE,
    )
}

pub fn fringe_maxima_with(
    map: &EnhancementMap,
    wavelength_nm: f64,
    window: usize,
    min_prominence: f64,
) -> Result<Vec<f64>, PipelineError> {
    let lambda_idx = map
        .lambda_index(wavelength_nm)
        .ok_or(PipelineError::WavelengthNotOnGrid {
            lambda: wavelength_nm,
        })?;
    let column = map.distance_cut(lambda_idx);
    if column.len() < 7 {
        return Err(PipelineError::ColumnTooShort { len: column.len() });
    }
    let smooth = savitzky_smooth(&column, window)?;
    Ok(prominent_maxima(&smooth, min_prominence)
        .into_iter()
        .map(|i| map.d_grid[i])
        .collect())
}

/// Result of the rigid-offset fringe alignment.
#[derive(Debug, Clone, Copy)]
pub struct D0Estimate {
    /// Best-fit smallest mirror distance, nm.
    pub d0_nm: f64,
    /// RMS residual of matched fringe positions at the best offset, nm.
    pub rms_residual_nm: f64,
    pub measured_maxima: usize,
    pub model_maxima: usize,
    /// Set when the residual exceeds [`POOR_FIT_RMS_NM`]; reported, not
    /// fatal.
    pub poor_fit: bool,
}

/// RMS residual above which a fit is flagged as poor (half a fringe
/// quarter at 700 nm).
pub const POOR_FIT_RMS_NM: f64 = 100.0;

pub const D0_SEARCH_MAX_NM: f64 = 2000.0;
pub const D0_SEARCH_STEP_NM: f64 = 5.0;

/// Estimate the smallest physical mirror distance by sliding model
/// fringe maxima over the measured ones. `model_generator(offset)` must
/// produce a model map whose first grid position corresponds to a
/// physical gap of `measured_position + offset`.
pub fn estimate_d0<F>(
    measured: &EnhancementMap,
    mut model_generator: F,
    wavelength_nm: f64,
) -> Result<D0Estimate, PipelineError>
where
    F: FnMut(f64) -> Result<EnhancementMap, PipelineError>,
{
    let measured_maxima = fringe_maxima(measured, wavelength_nm)?;
    if measured_maxima.is_empty() {
        return Err(PipelineError::NoFringes { which: "measured" });
    }

    let mut best: Option<(f64, f64, usize)> = None;
    let steps = (D0_SEARCH_MAX_NM / D0_SEARCH_STEP_NM).round() as usize;
    for i in 0..=steps {
        let offset = i as f64 * D0_SEARCH_STEP_NM;
        let model = model_generator(offset)?;
        let model_maxima = fringe_maxima(&model, wavelength_nm)?;
        if model_maxima.is_empty() {
            return Err(PipelineError::NoFringes { which: "model" });
        }
        let mut sum_sq = 0.0;
        for &m in &measured_maxima {
            let nearest = model_maxima
                .iter()
                .map(|&x| (x - m).abs())
                .fold(f64::INFINITY, f64::min);
            sum_sq += nearest * nearest;
        }
        let better = match best {
            None => true,
            Some((_, best_sum, _)) => sum_sq < best_sum,
        };
        if better {
            best = Some((offset, sum_sq, model_maxima.len()));
        }
    }

    let (d0_nm, sum_sq, model_count) = best.expect("at least one offset evaluated");
    let rms = (sum_sq / measured_maxima.len() as f64).sqrt();
    Ok(D0Estimate {
        d0_nm,
        rms_residual_nm: rms,
        measured_maxima: measured_maxima.len(),
        model_maxima: model_count,
        poor_fit: rms > POOR_FIT_RMS_NM,
    })
}

// ---------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------

/// Read a scan dataset:
/// first row `# lambda_nm: l1,l2,...`, then one `d_nm,c1,c2,...` row per
/// mirror position.
pub fn read_scan_csv(path: impl AsRef<Path>) -> Result<ScanDataset, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scan_csv(&text, &path.display().to_string())
}

pub fn parse_scan_csv(text: &str, origin: &str) -> Result<ScanDataset, PipelineError> {
    let mut lambda: Option<Vec<f64>> = None;
    let mut positions = Vec::new();
    let mut spectra = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(grid) = rest.strip_prefix("lambda_nm:") {
                let parsed = parse_number_list(grid, origin, lineno + 1)?;
                lambda = Some(parsed);
            }
            continue;
        }
        let grid = lambda.as_ref().ok_or_else(|| PipelineError::Format {
            path: origin.to_string(),
            line: lineno + 1,
            message: "data row before the '# lambda_nm:' header".to_string(),
        })?;
        let fields = parse_number_list(line, origin, lineno + 1)?;
        if fields.len() != grid.len() + 1 {
            return Err(PipelineError::Format {
                path: origin.to_string(),
                line: lineno + 1,
                message: format!(
                    "expected d plus {} counts, got {} fields",
                    grid.len(),
                    fields.len()
                ),
            });
        }
        positions.push(fields[0]);
        spectra.push(SpectrumRecord::new(grid.clone(), fields[1..].to_vec())?);
    }
    if lambda.is_none() {
        return Err(PipelineError::Format {
            path: origin.to_string(),
            line: 1,
            message: "missing '# lambda_nm:' header".to_string(),
        });
    }
    ScanDataset::new(positions, spectra)
}

/// Read a single spectrum stored in the scan format (one data row; the
/// leading d field is ignored and may be omitted).
pub fn read_spectrum_csv(path: impl AsRef<Path>) -> Result<SpectrumRecord, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_spectrum_csv(&text, &path.display().to_string())
}

pub fn parse_spectrum_csv(text: &str, origin: &str) -> Result<SpectrumRecord, PipelineError> {
    let mut lambda: Option<Vec<f64>> = None;
    let mut spectrum: Option<SpectrumRecord> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(grid) = rest.strip_prefix("lambda_nm:") {
                lambda = Some(parse_number_list(grid, origin, lineno + 1)?);
            }
            continue;
        }
        let grid = lambda.as_ref().ok_or_else(|| PipelineError::Format {
            path: origin.to_string(),
            line: lineno + 1,
            message: "data row before the '# lambda_nm:' header".to_string(),
        })?;
        if spectrum.is_some() {
            return Err(PipelineError::Format {
                path: origin.to_string(),
                line: lineno + 1,
                message: "expected a single data row in a spectrum file".to_string(),
            });
        }
        let fields = parse_number_list(line, origin, lineno + 1)?;
        let counts = if fields.len() == grid.len() + 1 {
            fields[1..].to_vec()
        } else if fields.len() == grid.len() {
            fields
        } else {
            return Err(PipelineError::Format {
                path: origin.to_string(),
                line: lineno + 1,
                message: format!(
                    "expected {} counts (optionally preceded by d), got {} fields",
                    grid.len(),
                    fields.len()
                ),
            });
        };
        spectrum = Some(SpectrumRecord::new(grid.clone(), counts)?);
    }
    spectrum.ok_or_else(|| PipelineError::Format {
        path: origin.to_string(),
        line: 1,
        message: "no spectrum data found".to_string(),
    })
}

fn parse_number_list(text: &str, origin: &str, line: usize) -> Result<Vec<f64>, PipelineError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|_| PipelineError::Format {
                path: origin.to_string(),
                line,
                message: format!("cannot parse '{s}' as a number"),
            })
        })
        .collect()
}

/// Write a scan dataset in the format read by [`read_scan_csv`].
pub fn format_scan_csv(scan: &ScanDataset, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("# lambda_nm: ");
    out.push_str(&join_numbers(scan.lambda_nm()));
    out.push('\n');
    for (d, s) in scan.d_positions_nm().iter().zip(scan.spectra()) {
        out.push_str(&format!("{d},{}\n", join_numbers(s.counts())));
    }
    out
}

/// Write a single spectrum in the scan format (leading d written as 0).
pub fn format_spectrum_csv(spectrum: &SpectrumRecord, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("# lambda_nm: ");
    out.push_str(&join_numbers(spectrum.lambda_nm()));
    out.push('\n');
    out.push_str(&format!("0,{}\n", join_numbers(spectrum.counts())));
    out
}

fn join_numbers(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collection::{MapMetadata, NormalizationMode};

    fn flat_spectrum() -> SpectrumRecord {
        let lambda: Vec<f64> = (0..=360).map(|i| 540.0 + i as f64).collect();
        let counts = vec![7.0; lambda.len()];
        SpectrumRecord::new(lambda, counts).unwrap()
    }

    #[test]
    fn flat_spectrum_normalizes_to_inverse_span() {
        let unit = normalize_spectrum(&flat_spectrum()).unwrap();
        for &c in unit.counts() {
            assert!((c - 1.0 / 360.0).abs() < 1e-15);
        }
        assert!((unit.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_is_idempotent() {
        let once = normalize_spectrum(&flat_spectrum()).unwrap();
        let twice = normalize_spectrum(&once).unwrap();
        for (a, b) in once.counts().iter().zip(twice.counts()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_trapezoid_by_hand() {
        let s = SpectrumRecord::new(vec![600.0, 700.0], vec![2.0, 0.0]).unwrap();
        assert!((s.integral() - 100.0).abs() < 1e-12);
        let unit = normalize_spectrum(&s).unwrap();
        assert!((unit.counts()[0] - 0.02).abs() < 1e-15);
        assert_eq!(unit.counts()[1], 0.0);
    }

    #[test]
    fn zero_spectrum_is_an_error() {
        let s = SpectrumRecord::new(vec![600.0, 700.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            normalize_spectrum(&s),
            Err(PipelineError::ZeroSpectrum { d_nm: None })
        ));
    }

    fn cosine_scan(scale_per_row: &[f64]) -> (ScanDataset, SpectrumRecord) {
        // S(d, lambda) = ref(lambda) * (1 + 0.4 cos(2 pi d / 400)) * scale(d)
        let lambda: Vec<f64> = (0..=36).map(|i| 540.0 + 10.0 * i as f64).collect();
        let reference: Vec<f64> = lambda
            .iter()
            .map(|l| 1.0 + ((l - 690.0) / 120.0f64).powi(2).min(1.0))
            .collect();
        let positions: Vec<f64> = (0..scale_per_row.len()).map(|i| 500.0 + 10.0 * i as f64).collect();
        let spectra: Vec<SpectrumRecord> = positions
            .iter()
            .zip(scale_per_row)
            .map(|(&d, &scale)| {
                let mod_factor = 1.0 + 0.4 * (2.0 * std::f64::consts::PI * d / 400.0).cos();
                SpectrumRecord::new(
                    lambda.clone(),
                    reference.iter().map(|r| r * mod_factor * scale).collect(),
                )
                .unwrap()
            })
            .collect();
        (
            ScanDataset::new(positions, spectra).unwrap(),
            SpectrumRecord::new(lambda, reference).unwrap(),
        )
    }

    #[test]
    fn scan_equal_to_reference_gives_unit_map() {
        let (scan, reference) = cosine_scan(&[1.0; 5]);
        // Wavelength-independent modulation cancels in the unit-counts
        // normalization, so every cell is exactly 1.
        let map = enhancement_from_scan(&scan, &reference).unwrap();
        for &v in map.values() {
            assert!((v - 1.0).abs() < 1e-12, "v = {v}");
        }
    }

    #[test]
    fn per_distance_scaling_cancels() {
        let (scan_a, reference) = cosine_scan(&[1.0; 6]);
        let scales = [0.3, 2.0, 1.7, 0.9, 5.0, 0.01];
        let (scan_b, _) = cosine_scan(&scales);
        let map_a = enhancement_from_scan(&scan_a, &reference).unwrap();
        let map_b = enhancement_from_scan(&scan_b, &reference).unwrap();
        for (a, b) in map_a.values().iter().zip(map_b.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_row_names_the_distance() {
        let lambda = vec![600.0, 700.0];
        let spectra = vec![
            SpectrumRecord::new(lambda.clone(), vec![1.0, 2.0]).unwrap(),
            SpectrumRecord::new(lambda.clone(), vec![0.0, 0.0]).unwrap(),
        ];
        let scan = ScanDataset::new(vec![500.0, 510.0], spectra).unwrap();
        let reference = SpectrumRecord::new(lambda, vec![1.0, 1.0]).unwrap();
        match enhancement_from_scan(&scan, &reference).unwrap_err() {
            PipelineError::ZeroSpectrum { d_nm: Some(d) } => assert_eq!(d, 510.0),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn reference_resampling_is_recorded() {
        let (scan, _) = cosine_scan(&[1.0; 5]);
        let coarse_lambda: Vec<f64> = (0..=10).map(|i| 530.0 + 40.0 * i as f64).collect();
        let reference =
            SpectrumRecord::new(coarse_lambda.clone(), vec![2.0; coarse_lambda.len()]).unwrap();
        let map = enhancement_from_scan(&scan, &reference).unwrap();
        assert!(map.metadata.materials.contains("resampled"));
    }

    #[test]
    fn reference_not_covering_grid_is_grid_mismatch() {
        let (scan, _) = cosine_scan(&[1.0; 5]);
        let reference = SpectrumRecord::new(vec![600.0, 700.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            enhancement_from_scan(&scan, &reference),
            Err(PipelineError::GridMismatch(_))
        ));
    }

    fn column_map(d_grid: Vec<f64>, column: Vec<f64>) -> crate::collection::EnhancementMap {
        crate::collection::EnhancementMap::new(
            d_grid,
            vec![700.0],
            column,
            MapMetadata {
                geometry: None,
                weights: None,
                emitter_depth_nm: None,
                materials: "synthetic".to_string(),
                normalization: NormalizationMode::Raw,
            },
        )
        .unwrap()
    }

    #[test]
    fn cosine_maxima_land_on_half_wavelengths() {
        // E(d) = 1 + 0.5 cos(2 k d) peaks at d = m * lambda / 2.
        let lambda = 700.0;
        let k = 2.0 * std::f64::consts::PI / lambda;
        let d_grid: Vec<f64> = (0..=2000).map(|i| 500.0 + 10.0 * i as f64).collect();
        let column: Vec<f64> = d_grid.iter().map(|d| 1.0 + 0.5 * (2.0 * k * d).cos()).collect();
        let map = column_map(d_grid, column);
        let maxima = fringe_maxima(&map, lambda).unwrap();
        assert!(maxima.len() >= 55, "found {}", maxima.len());
        for m in &maxima {
            let nearest = (m / (lambda / 2.0)).round() * lambda / 2.0;
            assert!(
                (m - nearest).abs() <= 10.0 + 1e-9,
                "maximum at {m} vs expected {nearest}"
            );
        }
    }

    #[test]
    fn monotone_column_has_no_maxima() {
        let d_grid: Vec<f64> = (0..=200).map(|i| 500.0 + 10.0 * i as f64).collect();
        let column: Vec<f64> = d_grid.iter().map(|d| 1.0 + d / 10_000.0).collect();
        let map = column_map(d_grid, column);
        assert!(fringe_maxima(&map, 700.0).unwrap().is_empty());
    }

    #[test]
    fn low_prominence_wiggles_are_discarded() {
        let d_grid: Vec<f64> = (0..=500).map(|i| 500.0 + 10.0 * i as f64).collect();
        let column: Vec<f64> = d_grid
            .iter()
            .map(|d| 1.0 + 0.01 * (2.0 * std::f64::consts::PI * d / 350.0).cos())
            .collect();
        let map = column_map(d_grid, column);
        assert!(fringe_maxima(&map, 700.0).unwrap().is_empty());
    }

    #[test]
    fn short_column_is_an_error() {
        let d_grid: Vec<f64> = (0..5).map(|i| 500.0 + 10.0 * i as f64).collect();
        let map = column_map(d_grid, vec![1.0, 1.2, 1.1, 1.3, 1.05]);
        assert!(matches!(
            fringe_maxima(&map, 700.0),
            Err(PipelineError::ColumnTooShort { len: 5 })
        ));
    }

    #[test]
    fn off_grid_wavelength_is_an_error() {
        let d_grid: Vec<f64> = (0..=10).map(|i| 500.0 + 10.0 * i as f64).collect();
        let map = column_map(d_grid, vec![1.0; 11]);
        assert!(matches!(
            fringe_maxima(&map, 650.0),
            Err(PipelineError::WavelengthNotOnGrid { .. })
        ));
    }

    fn cosine_offset_map(offset: f64) -> crate::collection::EnhancementMap {
        // Fringes under a slow signed beat envelope, like an NA-cone
        // integrated interference pattern. A pure cosine would leave the
        // offset ambiguous modulo half a wavelength; the beat nodes pin
        // the absolute position.
        let lambda = 700.0;
        let k = 2.0 * std::f64::consts::PI / lambda;
        let d_grid: Vec<f64> = (0..=2000).map(|i| 10.0 * i as f64).collect();
        let column: Vec<f64> = d_grid
            .iter()
            .map(|d| {
                let x = d + offset;
                let beat = (std::f64::consts::PI * x / 5500.0).cos();
                1.0 + 0.5 * beat * (2.0 * k * x).cos()
            })
            .collect();
        column_map(d_grid, column)
    }

    #[test]
    fn d0_recovered_on_shifted_cosine() {
        let measured = cosine_offset_map(500.0);
        let est = estimate_d0(&measured, |o| Ok(cosine_offset_map(o)), 700.0).unwrap();
        assert!((est.d0_nm - 500.0).abs() <= 5.0, "d0 = {}", est.d0_nm);
        assert!(est.rms_residual_nm <= 5.0);
        assert!(!est.poor_fit);
    }

    #[test]
    fn featureless_measurement_has_no_fringes() {
        let d_grid: Vec<f64> = (0..=100).map(|i| 10.0 * i as f64).collect();
        let map = column_map(d_grid, (0..=100).map(|i| 1.0 + i as f64 * 1e-4).collect());
        let err = estimate_d0(&map, |o| Ok(cosine_offset_map(o)), 700.0).unwrap_err();
        assert!(matches!(err, PipelineError::NoFringes { which: "measured" }));
    }

    #[test]
    fn scan_csv_round_trip() {
        let (scan, _) = cosine_scan(&[1.0, 2.0, 0.5]);
        let text = format_scan_csv(&scan, &["synthetic".to_string()]);
        let parsed = parse_scan_csv(&text, "inline").unwrap();
        assert_eq!(parsed.d_positions_nm(), scan.d_positions_nm());
        assert_eq!(parsed.lambda_nm(), scan.lambda_nm());
        for (a, b) in parsed.spectra().iter().zip(scan.spectra()) {
            assert_eq!(a.counts(), b.counts());
        }
    }

    #[test]
    fn truncated_scan_row_names_line() {
        let text = "# lambda_nm: 600,700,800\n500,1.0,2.0,3.0\n510,1.0,2.0\n";
        match parse_scan_csv(text, "inline").unwrap_err() {
            PipelineError::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn scan_without_header_is_rejected() {
        let text = "500,1.0,2.0\n";
        assert!(matches!(
            parse_scan_csv(text, "inline"),
            Err(PipelineError::Format { line: 1, .. })
        ));
    }

    #[test]
    fn spectrum_accepts_optional_distance_field() {
        let with_d = "# lambda_nm: 600,700\n0,1.5,2.5\n";
        let without_d = "# lambda_nm: 600,700\n1.5,2.5\n";
        let a = parse_spectrum_csv(with_d, "inline").unwrap();
        let b = parse_spectrum_csv(without_d, "inline").unwrap();
        assert_eq!(a.counts(), b.counts());
    }

    #[test]
    fn spectrum_round_trip() {
        let s = SpectrumRecord::new(vec![600.0, 650.0, 700.0], vec![0.5, 2.25, 1.0]).unwrap();
        let text = format_spectrum_csv(&s, &[]);
        let parsed = parse_spectrum_csv(&text, "inline").unwrap();
        assert_eq!(parsed.lambda_nm(), s.lambda_nm());
        assert_eq!(parsed.counts(), s.counts());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_scale_invariant(c in 1e-6f64..1e6) {
                let s = flat_spectrum();
                let scaled = SpectrumRecord::new(
                    s.lambda_nm().to_vec(),
                    s.counts().iter().map(|x| x * c).collect(),
                ).unwrap();
                let a = normalize_spectrum(&s).unwrap();
                let b = normalize_spectrum(&scaled).unwrap();
                for (x, y) in a.counts().iter().zip(b.counts()) {
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }
    }
}
