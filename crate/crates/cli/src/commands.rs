//! The six subcommands: map, pattern, purcell, enhance, fit-d0,
//! materials.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use drexhage::collection::{
    collected_power, enhancement_map, format_map_csv, normalized_model_enhancement, read_map_csv,
    EnhancementMap, NormalizationMode,
};
use drexhage::dipole::{angular_pattern, format_pattern_csv, total_decay};
use drexhage::pipeline::{
    enhancement_from_scan, estimate_d0, read_scan_csv, read_spectrum_csv, PipelineError,
};
use drexhage::quadrature::trapezoid;

use crate::config::{self, ResolvedConfig};
use crate::{render, CliError};

/// Options shared by every subcommand.
pub struct GlobalOpts {
    pub config: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub images: bool,
}

struct Session {
    cfg: ResolvedConfig,
    out_dir: PathBuf,
    images: bool,
    pool: rayon::ThreadPool,
}

fn open_session(opts: &GlobalOpts) -> Result<Session, CliError> {
    let cfg = config::load(&opts.config)?;
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::config(format!("cannot create output dir {}: {e}", out_dir.display()))
    })?;
    let workers = opts.workers.unwrap_or(cfg.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    let images = opts.images || cfg.images;
    Ok(Session {
        cfg,
        out_dir,
        images,
        pool,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn standard_comments(session: &Session, command: &str) -> Vec<String> {
    vec![
        format!("generator: drexhage {command}"),
        format!("config_sha256: {}", session.cfg.fingerprint),
    ]
}

/// Full (d, lambda) enhancement map to CSV (and optional heatmap PNG).
pub fn cmd_map(opts: &GlobalOpts) -> Result<(), CliError> {
    let session = open_session(opts)?;
    let cfg = &session.cfg;
    let mut map = session.pool.install(|| {
        enhancement_map(&cfg.d_grid, &cfg.lambda_grid, &cfg.geometry, &cfg.template)
    })?;
    if cfg.normalization == NormalizationMode::PerDistanceUnitCounts {
        let reference = cfg
            .reference_spectrum
            .as_ref()
            .expect("validated during config resolution");
        map = normalized_model_enhancement(&map, reference)?;
    }
    let csv_path = session.out_dir.join("enhancement_map.csv");
    write_text(
        &csv_path,
        &format_map_csv(&map, &standard_comments(&session, "map")),
    )?;
    println!(
        "wrote {} ({} distances x {} wavelengths)",
        csv_path.display(),
        map.d_grid.len(),
        map.lambda_grid.len()
    );
    if session.images {
        let png = session.out_dir.join("enhancement_map.png");
        render::save_map_png(&map, &png)?;
        println!("wrote {}", png.display());
    }
    Ok(())
}

/// Angular pattern at one (d, lambda) with the NA cone annotated.
pub fn cmd_pattern(opts: &GlobalOpts, d_nm: f64, lambda_nm: f64) -> Result<(), CliError> {
    let session = open_session(opts)?;
    let cfg = &session.cfg;
    let env = cfg.template.at(d_nm);

    let n_samples = 901;
    let top = std::f64::consts::FRAC_PI_2 * (1.0 - 1e-9);
    let theta_grid: Vec<f64> = (0..n_samples)
        .map(|i| top * i as f64 / (n_samples - 1) as f64)
        .collect();
    let pattern = angular_pattern(&env, lambda_nm, &theta_grid)?;

    // Cone fraction of the downward power, from the sampled pattern.
    let weights = env.weights;
    let theta_max = cfg.geometry.half_angle();
    let integrand: Vec<f64> = pattern
        .theta_samples
        .iter()
        .zip(&pattern.densities)
        .map(|(t, dens)| 2.0 * std::f64::consts::PI * dens.weighted(&weights) * t.sin())
        .collect();
    let total_down = trapezoid(&pattern.theta_samples, &integrand);
    let inside: Vec<(f64, f64)> = pattern
        .theta_samples
        .iter()
        .zip(&integrand)
        .take_while(|(t, _)| **t <= theta_max)
        .map(|(t, v)| (*t, *v))
        .collect();
    let cone_down = trapezoid(
        &inside.iter().map(|p| p.0).collect::<Vec<_>>(),
        &inside.iter().map(|p| p.1).collect::<Vec<_>>(),
    );
    let fraction = cone_down / total_down;

    let mut comments = standard_comments(&session, "pattern");
    comments.push(format!("d_nm: {d_nm}"));
    comments.push(format!("lambda_nm: {lambda_nm}"));
    comments.push(format!("na: {}", cfg.geometry.numerical_aperture));
    comments.push(format!("theta_max_rad: {theta_max}"));
    comments.push(format!("na_cone_fraction: {fraction}"));

    let name = format!("pattern_d{d_nm}_lambda{lambda_nm}");
    let csv_path = session.out_dir.join(format!("{name}.csv"));
    write_text(&csv_path, &format_pattern_csv(&pattern, &comments))?;
    println!(
        "wrote {} (NA-cone fraction of downward power: {fraction:.6})",
        csv_path.display()
    );
    if session.images {
        let png = session.out_dir.join(format!("{name}.png"));
        render::save_pattern_png(&pattern, &weights, theta_max, &png)?;
        println!("wrote {}", png.display());
    }
    Ok(())
}

/// Decay-rate budget swept over d at fixed lambda, or over lambda at
/// fixed d.
pub fn cmd_purcell(
    opts: &GlobalOpts,
    lambda_nm: Option<f64>,
    d_nm: Option<f64>,
) -> Result<(), CliError> {
    let session = open_session(opts)?;
    let cfg = &session.cfg;
    let (sweep_name, sweep, fixed_desc): (&str, Vec<f64>, String) = match (lambda_nm, d_nm) {
        (Some(l), None) => ("d_nm", cfg.d_grid.clone(), format!("lambda_nm: {l}")),
        (None, Some(d)) => ("lambda_nm", cfg.lambda_grid.clone(), format!("d_nm: {d}")),
        _ => {
            return Err(CliError::config(
                "purcell: give exactly one of --lambda or --d".to_string(),
            ))
        }
    };

    let rows: Vec<(f64, drexhage::DecayRates)> = session.pool.install(|| {
        sweep
            .par_iter()
            .map(|&x| {
                let (env, lambda) = match (lambda_nm, d_nm) {
                    (Some(l), None) => (cfg.template.at(x), l),
                    (None, Some(d)) => (cfg.template.at(d), x),
                    _ => unreachable!(),
                };
                total_decay(&env, lambda)
                    .map(|r| (x, r))
                    .map_err(|e| CliError::numeric(format!("at {sweep_name} = {x}: {e}")))
            })
            .collect::<Result<_, _>>()
    })?;

    let mut out = String::new();
    for c in standard_comments(&session, "purcell") {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str(&format!("# {fixed_desc}\n"));
    out.push_str(&format!(
        "{sweep_name},total,radiative_down,radiative_up,nonradiative\n"
    ));
    for (x, r) in &rows {
        out.push_str(&format!(
            "{x},{},{},{},{}\n",
            r.total, r.radiative_down, r.radiative_up, r.nonradiative
        ));
    }
    let csv_path = session.out_dir.join("purcell.csv");
    write_text(&csv_path, &out)?;
    println!("wrote {} ({} rows)", csv_path.display(), rows.len());
    Ok(())
}

/// Measured-scan enhancement map.
pub fn cmd_enhance(opts: &GlobalOpts, scan: &Path, reference: &Path) -> Result<(), CliError> {
    let session = open_session(opts)?;
    let scan_data = read_scan_csv(scan)?;
    let reference_data = read_spectrum_csv(reference)?;
    let map = enhancement_from_scan(&scan_data, &reference_data)?;

    let mut comments = standard_comments(&session, "enhance");
    comments.push(format!("scan_sha256: {}", file_digest(scan)?));
    comments.push(format!("reference_sha256: {}", file_digest(reference)?));
    let csv_path = session.out_dir.join("measured_enhancement.csv");
    write_text(&csv_path, &format_map_csv(&map, &comments))?;
    println!(
        "wrote {} ({} distances x {} wavelengths)",
        csv_path.display(),
        map.d_grid.len(),
        map.lambda_grid.len()
    );
    if session.images {
        let png = session.out_dir.join("measured_enhancement.png");
        render::save_map_png(&map, &png)?;
        println!("wrote {}", png.display());
    }
    Ok(())
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Estimate the smallest physical mirror distance by fringe alignment
/// of a measured map against the configured model.
pub fn cmd_fit_d0(opts: &GlobalOpts, measured_path: &Path, lambda_nm: f64) -> Result<(), CliError> {
    let session = open_session(opts)?;
    let cfg = &session.cfg;
    let measured = read_map_csv(measured_path)?;

    let lambda_idx = measured.lambda_index(lambda_nm).ok_or_else(|| {
        CliError::config(format!(
            "wavelength {lambda_nm} nm is not a column of {}",
            measured_path.display()
        ))
    })?;

    let reference_power = session.pool.install(|| {
        collected_power(&cfg.template.reference(), lambda_nm, &cfg.geometry)
    })?;
    if !(reference_power > 1e-12) {
        return Err(CliError::numeric(format!(
            "reference collected power underflows ({reference_power:e})"
        )));
    }

    // Model enhancement per physical gap, memoized: offsets revisit the
    // same gap values whenever the measured grid step is a multiple of
    // the 5 nm search step.
    let cache: std::sync::Mutex<HashMap<u64, f64>> = std::sync::Mutex::new(HashMap::new());
    let positions = measured.d_grid.clone();
    let metadata = drexhage::MapMetadata {
        geometry: Some(cfg.geometry),
        weights: Some(cfg.template.base().weights),
        emitter_depth_nm: Some(cfg.template.base().depth_nm),
        materials: "model".to_string(),
        normalization: NormalizationMode::Raw,
    };
    let generator = |offset: f64| -> Result<EnhancementMap, PipelineError> {
        let gaps: Vec<f64> = positions.iter().map(|p| p + offset).collect();
        let missing: Vec<f64> = {
            let cache = cache.lock().unwrap();
            gaps.iter()
                .cloned()
                .filter(|g| !cache.contains_key(&g.to_bits()))
                .collect()
        };
        if !missing.is_empty() {
            let computed: Vec<(f64, f64)> = session
                .pool
                .install(|| {
                    missing
                        .par_iter()
                        .map(|&g| {
                            collected_power(&cfg.template.at(g), lambda_nm, &cfg.geometry)
                                .map(|p| (g, p / reference_power))
                        })
                        .collect::<Result<_, _>>()
                })
                .map_err(|e: drexhage::CollectionError| {
                    PipelineError::ModelGeneration(e.to_string())
                })?;
            let mut cache = cache.lock().unwrap();
            for (g, e) in computed {
                cache.insert(g.to_bits(), e);
            }
        }
        let cache = cache.lock().unwrap();
        let values: Vec<f64> = gaps.iter().map(|g| cache[&g.to_bits()]).collect();
        EnhancementMap::new(positions.clone(), vec![lambda_nm], values, metadata.clone())
            .map_err(|e| PipelineError::ModelGeneration(e.to_string()))
    };

    // The generator produces a single-wavelength model map; fringe
    // alignment happens on that column against the measured column.
    let measured_column = EnhancementMap::new(
        measured.d_grid.clone(),
        vec![lambda_nm],
        measured.distance_cut(lambda_idx),
        measured.metadata.clone(),
    )?;

    let estimate = match estimate_d0(&measured_column, generator, lambda_nm) {
        Ok(est) => est,
        Err(PipelineError::NoFringes { which }) => {
            let diag_path = session.out_dir.join("d0_diagnostic.csv");
            let mut diag = String::from("# no usable fringes; measured column for inspection\n");
            diag.push_str("d_nm,enhancement\n");
            for (d, v) in measured
                .d_grid
                .iter()
                .zip(measured.distance_cut(lambda_idx))
            {
                diag.push_str(&format!("{d},{v}\n"));
            }
            write_text(&diag_path, &diag)?;
            eprintln!("diagnostic column written to {}", diag_path.display());
            return Err(CliError::analysis(format!(
                "no usable fringe maxima in the {which} map"
            )));
        }
        Err(other) => return Err(other.into()),
    };

    let mut report = String::new();
    report.push_str(&format!("config_sha256: {}\n", cfg.fingerprint));
    report.push_str(&format!("measured map: {}\n", measured_path.display()));
    report.push_str(&format!("wavelength: {lambda_nm} nm\n"));
    report.push_str(&format!(
        "estimated smallest mirror distance d0: {} nm\n",
        estimate.d0_nm
    ));
    report.push_str(&format!(
        "rms fringe residual: {:.2} nm\n",
        estimate.rms_residual_nm
    ));
    report.push_str(&format!(
        "fringe maxima: measured {}, model {}\n",
        estimate.measured_maxima, estimate.model_maxima
    ));
    report.push_str(&format!(
        "fit quality: {}\n",
        if estimate.poor_fit {
            "POOR (residual above threshold)"
        } else {
            "ok"
        }
    ));
    let report_path = session.out_dir.join("d0_report.txt");
    write_text(&report_path, &report)?;

    let mut line = String::new();
    for c in standard_comments(&session, "fit-d0") {
        line.push_str(&format!("# {c}\n"));
    }
    line.push_str("lambda_nm,d0_nm,rms_residual_nm,measured_maxima,model_maxima,poor_fit\n");
    line.push_str(&format!(
        "{lambda_nm},{},{},{},{},{}\n",
        estimate.d0_nm,
        estimate.rms_residual_nm,
        estimate.measured_maxima,
        estimate.model_maxima,
        estimate.poor_fit
    ));
    let csv_path = session.out_dir.join("d0_fit.csv");
    write_text(&csv_path, &line)?;

    println!(
        "d0 = {} nm (rms residual {:.2} nm, {} measured / {} model maxima{})",
        estimate.d0_nm,
        estimate.rms_residual_nm,
        estimate.measured_maxima,
        estimate.model_maxima,
        if estimate.poor_fit { ", POOR FIT" } else { "" }
    );
    println!("wrote {} and {}", report_path.display(), csv_path.display());
    Ok(())
}

/// Print resolved complex indices at the requested wavelengths.
pub fn cmd_materials(opts: &GlobalOpts, lambdas: &[f64]) -> Result<(), CliError> {
    let session = open_session(opts)?;
    if lambdas.is_empty() {
        return Err(CliError::config(
            "materials: give at least one --lambda".to_string(),
        ));
    }
    println!("config_sha256: {}", session.cfg.fingerprint);
    for (name, material) in &session.cfg.materials {
        println!("{name}: {material}");
        for &lambda in lambdas {
            match material.complex_index(lambda) {
                Ok(index) => println!(
                    "  lambda = {lambda} nm: n = {}, k = {}",
                    index.re, index.im
                ),
                Err(e) => println!("  lambda = {lambda} nm: {e}"),
            }
        }
    }
    Ok(())
}
