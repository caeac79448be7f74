//! Collected power within an objective's numerical aperture and the
//! mirror-distance / wavelength enhancement maps built from it.
//!
//! The detected power is the downward far-field pattern integrated over
//! the acceptance cone `theta <= arcsin(NA / n_host)` inside the host.
//! Enhancement is that power normalized to the same emitter with the
//! mirror removed (gap medium continued to infinity), so a stack that
//! is all gap gives exactly 1.

use rayon::prelude::*;
use thiserror::Error;

use crate::dipole::{densities_at, DipoleError, EmitterEnvironment, GapTemplate, OrientationWeights};
use crate::materials::MaterialError;
use crate::pipeline::SpectrumRecord;
use crate::quadrature::{integrate, trapezoid, QuadConfig, QuadratureError};
use crate::stratified::{interface_reflection, Polarization, StratifiedError};
use num_complex::Complex64;

#[derive(Debug, Error)]
pub enum CollectionError {
    #[error(transparent)]
    Dipole(#[from] DipoleError),
    #[error(transparent)]
    Stratified(#[from] StratifiedError),
    #[error("quadrature failure in {context}: {source}")]
    Quadrature {
        context: &'static str,
        source: QuadratureError,
    },
    #[error("reference (no-mirror) collected power {reference:e} underflows; geometry is pathological")]
    DivisionDegenerate { reference: f64 },
    #[error("invalid collection geometry: {0}")]
    BadGeometry(String),
    #[error("invalid grid: {0}")]
    GridError(String),
    #[error("map value at (d = {d} nm, lambda = {lambda} nm) must be finite and positive, got {value}")]
    NonPositiveValue { d: f64, lambda: f64, value: f64 },
    #[error("failure at map cell (d = {d} nm, lambda = {lambda} nm): {source}")]
    Cell {
        d: f64,
        lambda: f64,
        #[source]
        source: Box<CollectionError>,
    },
    #[error("reference spectrum [{ref_min}, {ref_max}] nm does not cover the map grid [{grid_min}, {grid_max}] nm")]
    Coverage {
        ref_min: f64,
        ref_max: f64,
        grid_min: f64,
        grid_max: f64,
    },
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
}

impl From<MaterialError> for CollectionError {
    fn from(e: MaterialError) -> Self {
        CollectionError::Stratified(StratifiedError::Material(e))
    }
}

/// Objective geometry for far-field collection through the bottom facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectionGeometry {
    /// NA of the objective, in air: 0 < NA <= 1.
    pub numerical_aperture: f64,
    /// Weight p/s channels by the host-to-air Fresnel power transmittance
    /// of the bottom facet.
    pub include_bottom_transmission: bool,
    /// Host index defining the acceptance half-angle arcsin(NA / n_host).
    pub host_index: f64,
}

impl CollectionGeometry {
    pub fn new(
        numerical_aperture: f64,
        host_index: f64,
        include_bottom_transmission: bool,
    ) -> Result<Self, CollectionError> {
        if !(numerical_aperture > 0.0 && numerical_aperture <= 1.0) {
            return Err(CollectionError::BadGeometry(format!(
                "numerical aperture must be in (0, 1], got {numerical_aperture}"
            )));
        }
        if !(host_index >= 1.0 && host_index.is_finite()) {
            return Err(CollectionError::BadGeometry(format!(
                "host index must be >= 1, got {host_index}"
            )));
        }
        if numerical_aperture > host_index {
            return Err(CollectionError::BadGeometry(format!(
                "NA {numerical_aperture} exceeds host index {host_index}"
            )));
        }
        Ok(CollectionGeometry {
            numerical_aperture,
            include_bottom_transmission,
            host_index,
        })
    }

    /// Acceptance half-angle inside the host, rad.
    pub fn half_angle(&self) -> f64 {
        (self.numerical_aperture / self.host_index).asin()
    }
}

/// How the map values are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationMode {
    /// Plain ratio of collected powers, mirror over no-mirror.
    Raw,
    /// Each mirror-distance column rescaled so its reference-spectrum
    /// weighted mean is 1, emulating per-distance unit-counts
    /// normalization of measured spectra.
    PerDistanceUnitCounts,
}

impl NormalizationMode {
    pub fn label(&self) -> &'static str {
        match self {
            NormalizationMode::Raw => "raw",
            NormalizationMode::PerDistanceUnitCounts => "per-distance-unit-counts",
        }
    }
}

/// Provenance carried alongside a map.
#[derive(Debug, Clone)]
pub struct MapMetadata {
    pub geometry: Option<CollectionGeometry>,
    pub weights: Option<OrientationWeights>,
    pub emitter_depth_nm: Option<f64>,
    /// Free-text description of the stack or data source.
    pub materials: String,
    pub normalization: NormalizationMode,
}

/// Enhancement values on a (mirror distance) x (wavelength) grid,
/// row-major over distances.
#[derive(Debug, Clone)]
pub struct EnhancementMap {
    pub d_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    values: Vec<f64>,
    pub metadata: MapMetadata,
}

fn check_ascending(name: &str, grid: &[f64]) -> Result<(), CollectionError> {
    if grid.is_empty() {
        return Err(CollectionError::GridError(format!("{name} grid is empty")));
    }
    for pair in grid.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(CollectionError::GridError(format!(
                "{name} grid must be strictly ascending ({} then {})",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

impl EnhancementMap {
    pub fn new(
        d_grid: Vec<f64>,
        lambda_grid: Vec<f64>,
        values: Vec<f64>,
        metadata: MapMetadata,
    ) -> Result<Self, CollectionError> {
        check_ascending("d", &d_grid)?;
        check_ascending("lambda", &lambda_grid)?;
        if values.len() != d_grid.len() * lambda_grid.len() {
            return Err(CollectionError::GridError(format!(
                "value count {} does not match {} x {}",
                values.len(),
                d_grid.len(),
                lambda_grid.len()
            )));
        }
        for (idx, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                let (i, j) = (idx / lambda_grid.len(), idx % lambda_grid.len());
                return Err(CollectionError::NonPositiveValue {
                    d: d_grid[i],
                    lambda: lambda_grid[j],
                    value: v,
                });
            }
        }
        Ok(EnhancementMap {
            d_grid,
            lambda_grid,
            values,
            metadata,
        })
    }

    pub fn value(&self, d_idx: usize, lambda_idx: usize) -> f64 {
        self.values[d_idx * self.lambda_grid.len() + lambda_idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of an exact grid wavelength, if present.
    pub fn lambda_index(&self, wavelength_nm: f64) -> Option<usize> {
        self.lambda_grid
            .iter()
            .position(|&l| (l - wavelength_nm).abs() < 1e-9)
    }

    /// E(d) along one wavelength column.
    pub fn distance_cut(&self, lambda_idx: usize) -> Vec<f64> {
        (0..self.d_grid.len())
            .map(|i| self.value(i, lambda_idx))
            .collect()
    }
}

const COLLECTION_QUAD: QuadConfig = QuadConfig {
    rel_tol: 1e-8,
    abs_tol: 1e-14,
    max_intervals: 32_768,
    initial_intervals: 1,
};

/// Power collected within the NA cone, in units of the bulk-host total
/// emission of one emitter.
pub fn collected_power(
    env: &EmitterEnvironment,
    wavelength_nm: f64,
    geom: &CollectionGeometry,
) -> Result<f64, CollectionError> {
    collected_power_with(env, wavelength_nm, geom, &COLLECTION_QUAD)
}

pub fn collected_power_with(
    env: &EmitterEnvironment,
    wavelength_nm: f64,
    geom: &CollectionGeometry,
    quad: &QuadConfig,
) -> Result<f64, CollectionError> {
    let stack = env.upward_stack.resolve(wavelength_nm)?;
    let k1 = stack.vacuum_wavenumber() * stack.incidence_index();
    let n_host = stack.incidence_index();
    let eps_host = Complex64::new(n_host * n_host, 0.0);
    let k0 = stack.vacuum_wavenumber();
    let z0 = env.depth_nm;
    let weights = env.weights;
    let theta_max = geom.half_angle();
    let transmission = geom.include_bottom_transmission;
    let quad = &quad.seeded_for_phase_span(
        stack.phase_span(0.0, theta_max.sin()) + 2.0 * k1 * z0 * (1.0 - theta_max.cos()),
    );

    let result = integrate(
        |theta| {
            let dens = match densities_at(&stack, k1, z0, theta) {
                Ok(d) => d,
                Err(_) => return f64::NAN,
            };
            let (t_s, t_p) = if transmission {
                match bottom_transmittance(n_host, eps_host, k0, theta) {
                    Ok(t) => t,
                    Err(_) => return f64::NAN,
                }
            } else {
                (1.0, 1.0)
            };
            let weighted = weights.perpendicular * dens.perp_p * t_p
                + weights.parallel * (dens.par_p * t_p + dens.par_s * t_s);
            2.0 * std::f64::consts::PI * weighted * theta.sin()
        },
        0.0,
        theta_max,
        quad,
    )
    .map_err(|source| CollectionError::Quadrature {
        context: "NA cone integration",
        source,
    })?;
    Ok(result.value)
}

/// Fresnel power transmittance (s, p) of the bottom host-to-air facet at
/// internal angle theta.
fn bottom_transmittance(
    n_host: f64,
    eps_host: Complex64,
    k0: f64,
    theta: f64,
) -> Result<(f64, f64), StratifiedError> {
    let (sin_t, cos_t) = theta.sin_cos();
    let kz1 = Complex64::new(k0 * n_host * cos_t, 0.0);
    let arg = 1.0 - n_host * n_host * sin_t * sin_t;
    // Inside the NA cone the external angle always exists (NA <= 1).
    let kz2 = Complex64::new(k0 * arg.max(0.0).sqrt(), 0.0);
    let eps_air = Complex64::new(1.0, 0.0);
    let r_s = interface_reflection(Polarization::S, kz1, kz2, eps_host, eps_air)?;
    let r_p = interface_reflection(Polarization::P, kz1, kz2, eps_host, eps_air)?;
    Ok((1.0 - r_s.norm_sqr(), 1.0 - r_p.norm_sqr()))
}

/// Collected power with the mirror present over collected power with the
/// mirror removed.
pub fn enhancement(
    env_with_mirror: &EmitterEnvironment,
    wavelength_nm: f64,
    geom: &CollectionGeometry,
) -> Result<f64, CollectionError> {
    let with_mirror = collected_power(env_with_mirror, wavelength_nm, geom)?;
    let reference_env = env_with_mirror.without_mirror();
    let reference = collected_power(&reference_env, wavelength_nm, geom)?;
    if !(reference > 1e-12) {
        return Err(CollectionError::DivisionDegenerate { reference });
    }
    Ok(with_mirror / reference)
}

/// Element-wise enhancement over a (d, lambda) grid. Cells are evaluated
/// in parallel on the current rayon pool; every cell is pure and written
/// to its own slot, so the output is identical for any worker count.
pub fn enhancement_map(
    d_grid: &[f64],
    lambda_grid: &[f64],
    geom: &CollectionGeometry,
    template: &GapTemplate,
) -> Result<EnhancementMap, CollectionError> {
    check_ascending("d", d_grid)?;
    check_ascending("lambda", lambda_grid)?;

    let reference_env = template.reference();
    let references: Vec<f64> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            collected_power(&reference_env, lambda, geom).map_err(|e| CollectionError::Cell {
                d: f64::NAN,
                lambda,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let n_lambda = lambda_grid.len();
    let values: Vec<f64> = (0..d_grid.len() * n_lambda)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n_lambda, idx % n_lambda);
            let d = d_grid[i];
            let lambda = lambda_grid[j];
            let env = template.at(d);
            let power = collected_power(&env, lambda, geom).map_err(|e| CollectionError::Cell {
                d,
                lambda,
                source: Box::new(e),
            })?;
            let reference = references[j];
            if !(reference > 1e-12) {
                return Err(CollectionError::Cell {
                    d,
                    lambda,
                    source: Box::new(CollectionError::DivisionDegenerate { reference }),
                });
            }
            Ok(power / reference)
        })
        .collect::<Result<_, _>>()?;

    let base = template.base();
    let metadata = MapMetadata {
        geometry: Some(*geom),
        weights: Some(base.weights),
        emitter_depth_nm: Some(base.depth_nm),
        materials: describe_stack(base),
        normalization: NormalizationMode::Raw,
    };
    EnhancementMap::new(d_grid.to_vec(), lambda_grid.to_vec(), values, metadata)
}

fn describe_stack(env: &EmitterEnvironment) -> String {
    let mut parts = vec![env.host.name.clone()];
    for (i, layer) in env.upward_stack.layers.iter().enumerate() {
        if i == 0 {
            parts.push(format!("{}(adjustable gap)", layer.material.name));
        } else {
            parts.push(format!("{}({} nm)", layer.material.name, layer.thickness_nm));
        }
    }
    parts.push(env.upward_stack.exit.name.clone());
    parts.join(" | ")
}

/// Rescale each mirror-distance row so that its reference-weighted mean
/// is one, emulating the per-distance unit-counts normalization applied
/// to measured spectra. The reference spectrum is resampled onto the map
/// grid and renormalized to unit integral there, which makes the
/// operation exactly idempotent.
pub fn normalized_model_enhancement(
    map: &EnhancementMap,
    reference_spectrum: &SpectrumRecord,
) -> Result<EnhancementMap, CollectionError> {
    let grid = &map.lambda_grid;
    let (ref_min, ref_max) = reference_spectrum.wavelength_range();
    let (grid_min, grid_max) = (grid[0], grid[grid.len() - 1]);
    if ref_min > grid_min || ref_max < grid_max {
        return Err(CollectionError::Coverage {
            ref_min,
            ref_max,
            grid_min,
            grid_max,
        });
    }

    let mut weights: Vec<f64> = grid
        .iter()
        .map(|&l| reference_spectrum.sample_at(l))
        .collect();
    let norm = trapezoid(grid, &weights);
    if !(norm > 0.0) {
        return Err(CollectionError::GridError(
            "reference spectrum integrates to zero on the map grid".to_string(),
        ));
    }
    for w in &mut weights {
        *w /= norm;
    }

    let n_lambda = grid.len();
    let mut values = Vec::with_capacity(map.values().len());
    for i in 0..map.d_grid.len() {
        let row = &map.values()[i * n_lambda..(i + 1) * n_lambda];
        let weighted: Vec<f64> = row.iter().zip(&weights).map(|(e, w)| e * w).collect();
        let mean = trapezoid(grid, &weighted);
        for &e in row {
            values.push(e / mean);
        }
    }

    let metadata = MapMetadata {
        normalization: NormalizationMode::PerDistanceUnitCounts,
        ..map.metadata.clone()
    };
    EnhancementMap::new(map.d_grid.clone(), grid.clone(), values, metadata)
}

// ---------------------------------------------------------------------
// Map file format: `#` metadata comments, then the wavelength grid as
// the first row (empty corner cell), then one `d,E,E,...` row per
// mirror distance.
// ---------------------------------------------------------------------

/// Render a map as CSV. `extra_comments` go first, then the metadata
/// block, then the data.
pub fn format_map_csv(map: &EnhancementMap, extra_comments: &[String]) -> String {
    let mut out = String::new();
    for c in extra_comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    let meta = &map.metadata;
    if let Some(g) = &meta.geometry {
        out.push_str(&format!("# na: {}\n", g.numerical_aperture));
        out.push_str(&format!("# host_index: {}\n", g.host_index));
        out.push_str(&format!(
            "# bottom_transmission: {}\n",
            g.include_bottom_transmission
        ));
    }
    if let Some(w) = &meta.weights {
        out.push_str(&format!(
            "# weights: parallel = {}, perpendicular = {}\n",
            w.parallel, w.perpendicular
        ));
    }
    if let Some(z0) = meta.emitter_depth_nm {
        out.push_str(&format!("# emitter_depth_nm: {z0}\n"));
    }
    out.push_str(&format!("# materials: {}\n", meta.materials));
    out.push_str(&format!("# normalization: {}\n", meta.normalization.label()));

    out.push(',');
    out.push_str(
        &map.lambda_grid
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    let n_lambda = map.lambda_grid.len();
    for (i, &d) in map.d_grid.iter().enumerate() {
        out.push_str(&d.to_string());
        for j in 0..n_lambda {
            out.push(',');
            out.push_str(&map.value(i, j).to_string());
        }
        out.push('\n');
    }
    out
}

/// Read a map written by [`format_map_csv`].
pub fn read_map_csv(path: impl AsRef<std::path::Path>) -> Result<EnhancementMap, CollectionError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CollectionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_map_csv(&text, &path.display().to_string())
}

pub fn parse_map_csv(text: &str, origin: &str) -> Result<EnhancementMap, CollectionError> {
    let mut lambda: Option<Vec<f64>> = None;
    let mut d_grid = Vec::new();
    let mut values = Vec::new();
    let mut normalization = NormalizationMode::Raw;
    let mut materials = format!("loaded from {origin}");

    let parse_row = |line: &str, lineno: usize| -> Result<Vec<f64>, CollectionError> {
        line.split(',')
            .map(str::trim)
            .map(|s| {
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>().map_err(|_| CollectionError::Format {
                        path: origin.to_string(),
                        line: lineno,
                        message: format!("cannot parse '{s}' as a number"),
                    })
                }
            })
            .collect()
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(mode) = rest.strip_prefix("normalization:") {
                let mode = mode.trim();
                if mode == NormalizationMode::PerDistanceUnitCounts.label() {
                    normalization = NormalizationMode::PerDistanceUnitCounts;
                }
            } else if let Some(m) = rest.strip_prefix("materials:") {
                materials = m.trim().to_string();
            }
            continue;
        }
        let fields = parse_row(line, lineno + 1)?;
        match &lambda {
            None => {
                // Header row: empty corner cell then the wavelength grid.
                if fields.len() < 2 || !fields[0].is_nan() {
                    return Err(CollectionError::Format {
                        path: origin.to_string(),
                        line: lineno + 1,
                        message: "expected header row ',lambda1,lambda2,...'".to_string(),
                    });
                }
                lambda = Some(fields[1..].to_vec());
            }
            Some(grid) => {
                if fields.len() != grid.len() + 1 {
                    return Err(CollectionError::Format {
                        path: origin.to_string(),
                        line: lineno + 1,
                        message: format!(
                            "expected d plus {} values, got {}",
                            grid.len(),
                            fields.len()
                        ),
                    });
                }
                if fields.iter().any(|f| f.is_nan()) {
                    return Err(CollectionError::Format {
                        path: origin.to_string(),
                        line: lineno + 1,
                        message: "empty field in data row".to_string(),
                    });
                }
                d_grid.push(fields[0]);
                values.extend_from_slice(&fields[1..]);
            }
        }
    }
    let lambda = lambda.ok_or_else(|| CollectionError::Format {
        path: origin.to_string(),
        line: 1,
        message: "missing wavelength header row".to_string(),
    })?;
    EnhancementMap::new(
        d_grid,
        lambda,
        values,
        MapMetadata {
            geometry: None,
            weights: None,
            emitter_depth_nm: None,
            materials,
            normalization,
        },
    )
}

pub const DEFAULT_PUMP_WAVELENGTH_NM: f64 = 532.0;

/// Normal-incidence standing-wave intensity of the pump at the emitter
/// plane: `|1 + r(u=0) exp(2 i k1 z0)|^2`. Diagnostic only; the
/// per-distance unit-counts normalization removes pump interference from
/// every enhancement, so this factor is never applied to maps.
pub fn pump_modulation(
    env: &EmitterEnvironment,
    pump_wavelength_nm: f64,
) -> Result<f64, CollectionError> {
    let stack = env.upward_stack.resolve(pump_wavelength_nm)?;
    let k1 = stack.vacuum_wavenumber() * stack.incidence_index();
    let r = stack.reflection(Polarization::S, 0.0)?;
    let phase = Complex64::from_polar(1.0, 2.0 * k1 * env.depth_nm);
    Ok((Complex64::new(1.0, 0.0) + r * phase).norm_sqr())
}
