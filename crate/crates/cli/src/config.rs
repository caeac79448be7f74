//! Run configuration: a single TOML file resolving materials, stack
//! geometry, emitter, collection and grids.
//!
//! Paths inside the file (dispersion tables, reference spectra) are
//! resolved relative to the config file's directory. The resolved
//! configuration is fingerprinted (SHA-256 over the canonical
//! re-serialization plus every ingested table) and the digest is echoed
//! into every output file header.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use drexhage::collection::{CollectionGeometry, NormalizationMode};
use drexhage::dipole::{EmitterEnvironment, GapTemplate, OrientationWeights};
use drexhage::materials::OpticalMaterial;
use drexhage::pipeline::{read_spectrum_csv, SpectrumRecord};
use drexhage::stratified::{Layer, LayerStack};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub materials: BTreeMap<String, MaterialSpec>,
    pub stack: StackSpec,
    pub emitter: EmitterSpec,
    pub collection: CollectionSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub run: RunSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    /// Constant refractive index (with optional `k`).
    pub n: Option<f64>,
    #[serde(default)]
    pub k: Option<f64>,
    /// Path to a dispersion CSV, relative to the config file.
    pub table: Option<String>,
    /// Perfect-reflector sentinel for limit studies.
    #[serde(default)]
    pub ideal_mirror: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    pub host: String,
    /// Material filling the adjustable gap (the first upward layer).
    pub gap: String,
    /// Fixed layers between the gap and the exit half-space.
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
    pub exit: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub material: String,
    pub thickness_nm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub depth_nm: f64,
    #[serde(default)]
    pub weights: WeightsSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    /// "reported" (0.659 / 0.341) or "geometric" (2/3 / 1/3).
    Named(String),
    Explicit { parallel: f64, perpendicular: f64 },
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec::Named("reported".to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionSpec {
    pub na: f64,
    /// Defaults to the host's constant index.
    pub host_index: Option<f64>,
    #[serde(default)]
    pub bottom_transmission: bool,
    /// "raw" or "per-distance-unit-counts".
    #[serde(default = "default_normalization")]
    pub normalization: String,
    /// Reference emission spectrum, needed for the per-distance mode.
    pub reference: Option<String>,
}

fn default_normalization() -> String {
    "raw".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub lambda_step_nm: f64,
    pub d_min_nm: f64,
    pub d_max_nm: f64,
    pub d_step_nm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out_dir")]
    pub directory: String,
    #[serde(default)]
    pub images: bool,
}

fn default_out_dir() -> String {
    "out".to_string()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            directory: default_out_dir(),
            images: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Worker threads for grid evaluation; 0 means all cores.
    #[serde(default)]
    pub workers: usize,
}

/// Evenly spaced grid from a (min, max, step) triple.
pub fn build_grid(min: f64, max: f64, step: f64, field: &str) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::config(format!("{field}: step must be positive")));
    }
    if !(max >= min) {
        return Err(CliError::config(format!("{field}: max must be >= min")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

/// Everything a command needs, resolved from the config file.
pub struct ResolvedConfig {
    pub template: GapTemplate,
    pub geometry: CollectionGeometry,
    pub lambda_grid: Vec<f64>,
    pub d_grid: Vec<f64>,
    pub normalization: NormalizationMode,
    pub reference_spectrum: Option<SpectrumRecord>,
    pub out_dir: PathBuf,
    pub images: bool,
    pub workers: usize,
    pub fingerprint: String,
    pub materials: BTreeMap<String, OpticalMaterial>,
}

pub fn load(path: &Path) -> Result<ResolvedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig =
        toml::from_str(&text).map_err(|e| CliError::config(format!("config parse error: {e}")))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    resolve(&cfg, base_dir)
}

pub fn resolve(cfg: &RunConfig, base_dir: &Path) -> Result<ResolvedConfig, CliError> {
    let mut hasher = Sha256::new();
    let canonical = toml::to_string(cfg)
        .map_err(|e| CliError::config(format!("config re-serialization failed: {e}")))?;
    hasher.update(canonical.as_bytes());

    let mut materials = BTreeMap::new();
    for (name, spec) in &cfg.materials {
        let material = resolve_material(name, spec, base_dir, &mut hasher)?;
        materials.insert(name.clone(), material);
    }

    let lookup = |field: &str, name: &str| -> Result<OpticalMaterial, CliError> {
        materials.get(name).cloned().ok_or_else(|| {
            CliError::config(format!(
                "{field}: material '{name}' is not defined in [materials]"
            ))
        })
    };

    let host = lookup("stack.host", &cfg.stack.host)?;
    let gap = lookup("stack.gap", &cfg.stack.gap)?;
    let exit = lookup("stack.exit", &cfg.stack.exit)?;
    // Placeholder thickness; map generation varies the gap per cell.
    let mut layers = vec![Layer::new(gap, 1.0)
        .map_err(|e| CliError::config(format!("stack.gap: {e}")))?];
    for (i, l) in cfg.stack.layers.iter().enumerate() {
        let material = lookup(&format!("stack.layers[{i}].material"), &l.material)?;
        layers.push(
            Layer::new(material, l.thickness_nm)
                .map_err(|e| CliError::config(format!("stack.layers[{i}]: {e}")))?,
        );
    }
    let stack = LayerStack::new(host.clone(), layers, exit)
        .map_err(|e| CliError::config(format!("stack: {e}")))?;

    let weights = resolve_weights(&cfg.emitter.weights)?;
    let env = EmitterEnvironment::new(host.clone(), cfg.emitter.depth_nm, stack, host.clone(), weights)
        .map_err(|e| CliError::config(format!("emitter: {e}")))?;
    let template =
        GapTemplate::new(env).map_err(|e| CliError::config(format!("stack.gap: {e}")))?;

    let host_index = match cfg.collection.host_index {
        Some(n) => n,
        None => host
            .complex_index(cfg.grid.lambda_min_nm)
            .map_err(|e| {
                CliError::config(format!(
                    "collection.host_index: cannot derive from host material: {e}"
                ))
            })?
            .re,
    };
    let geometry = CollectionGeometry::new(cfg.collection.na, host_index, cfg.collection.bottom_transmission)
        .map_err(|e| CliError::config(format!("collection: {e}")))?;

    let normalization = match cfg.collection.normalization.as_str() {
        "raw" => NormalizationMode::Raw,
        "per-distance-unit-counts" => NormalizationMode::PerDistanceUnitCounts,
        other => {
            return Err(CliError::config(format!(
                "collection.normalization: unknown mode '{other}' (use 'raw' or 'per-distance-unit-counts')"
            )))
        }
    };
    let reference_spectrum = match (&cfg.collection.reference, normalization) {
        (Some(rel), _) => {
            let full = base_dir.join(rel);
            let bytes = std::fs::read(&full).map_err(|e| {
                CliError::config(format!(
                    "collection.reference: cannot read {}: {e}",
                    full.display()
                ))
            })?;
            hasher.update(&bytes);
            Some(read_spectrum_csv(&full).map_err(|e| {
                CliError::config(format!("collection.reference: {e}"))
            })?)
        }
        (None, NormalizationMode::PerDistanceUnitCounts) => {
            return Err(CliError::config(
                "collection.reference: required when normalization is 'per-distance-unit-counts'"
                    .to_string(),
            ))
        }
        (None, NormalizationMode::Raw) => None,
    };

    let lambda_grid = build_grid(
        cfg.grid.lambda_min_nm,
        cfg.grid.lambda_max_nm,
        cfg.grid.lambda_step_nm,
        "grid.lambda",
    )?;
    let d_grid = build_grid(cfg.grid.d_min_nm, cfg.grid.d_max_nm, cfg.grid.d_step_nm, "grid.d")?;

    Ok(ResolvedConfig {
        template,
        geometry,
        lambda_grid,
        d_grid,
        normalization,
        reference_spectrum,
        out_dir: PathBuf::from(&cfg.output.directory),
        images: cfg.output.images,
        workers: cfg.run.workers,
        fingerprint: format!("{:x}", hasher.finalize()),
        materials,
    })
}

fn resolve_material(
    name: &str,
    spec: &MaterialSpec,
    base_dir: &Path,
    hasher: &mut Sha256,
) -> Result<OpticalMaterial, CliError> {
    let field = format!("materials.{name}");
    if spec.ideal_mirror {
        if spec.n.is_some() || spec.table.is_some() {
            return Err(CliError::config(format!(
                "{field}: ideal_mirror excludes n/table"
            )));
        }
        return Ok(OpticalMaterial::ideal_mirror());
    }
    match (&spec.n, &spec.table) {
        (Some(n), None) => OpticalMaterial::constant(name, *n, spec.k.unwrap_or(0.0))
            .map_err(|e| CliError::config(format!("{field}: {e}"))),
        (None, Some(rel)) => {
            let full = base_dir.join(rel);
            let bytes = std::fs::read(&full).map_err(|e| {
                CliError::config(format!("{field}.table: cannot read {}: {e}", full.display()))
            })?;
            hasher.update(&bytes);
            let table = drexhage::materials::load_dispersion_table(&full)
                .map_err(|e| CliError::config(format!("{field}.table: {e}")))?;
            Ok(OpticalMaterial::tabulated(name, table))
        }
        (Some(_), Some(_)) => Err(CliError::config(format!(
            "{field}: give either a constant index or a table, not both"
        ))),
        (None, None) => Err(CliError::config(format!(
            "{field}: needs n, table, or ideal_mirror"
        ))),
    }
}

fn resolve_weights(spec: &WeightsSpec) -> Result<OrientationWeights, CliError> {
    match spec {
        WeightsSpec::Named(name) => match name.as_str() {
            "reported" => Ok(OrientationWeights::reported()),
            "geometric" => OrientationWeights::geometric_100()
                .map_err(|e| CliError::config(format!("emitter.weights: {e}"))),
            other => Err(CliError::config(format!(
                "emitter.weights: unknown preset '{other}' (use 'reported' or 'geometric')"
            ))),
        },
        WeightsSpec::Explicit {
            parallel,
            perpendicular,
        } => OrientationWeights::new(*parallel, *perpendicular)
            .map_err(|e| CliError::config(format!("emitter.weights: {e}"))),
    }
}
