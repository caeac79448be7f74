//! PNG rendering: the enhancement heatmap and a polar pattern plot.
//!
//! Images are a convenience layer over the CSV outputs; nothing
//! downstream depends on pixels.

use std::path::Path;

use image::{Rgb, RgbImage};

use drexhage::collection::EnhancementMap;
use drexhage::dipole::{AngularPattern, OrientationWeights};

use crate::CliError;

// Viridis anchors, evenly spaced on [0, 1].
const VIRIDIS: [[u8; 3]; 16] = [
    [68, 1, 84],
    [72, 26, 108],
    [71, 47, 125],
    [65, 68, 135],
    [57, 86, 140],
    [49, 104, 142],
    [42, 120, 142],
    [35, 136, 142],
    [31, 152, 139],
    [34, 168, 132],
    [53, 183, 121],
    [84, 197, 104],
    [122, 209, 81],
    [165, 219, 54],
    [210, 226, 27],
    [253, 231, 37],
];

fn viridis(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - i as f64;
    let lerp = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
    Rgb([
        lerp(VIRIDIS[i][0], VIRIDIS[i + 1][0]),
        lerp(VIRIDIS[i][1], VIRIDIS[i + 1][1]),
        lerp(VIRIDIS[i][2], VIRIDIS[i + 1][2]),
    ])
}

/// Heatmap with wavelength horizontal and mirror distance vertical
/// (largest distance at the top), one pixel per grid cell.
pub fn save_map_png(map: &EnhancementMap, path: &Path) -> Result<(), CliError> {
    let width = map.lambda_grid.len() as u32;
    let height = map.d_grid.len() as u32;
    let (min, max) = map
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = (max - min).max(f64::MIN_POSITIVE);
    let mut img = RgbImage::new(width, height);
    for (i, _) in map.d_grid.iter().enumerate() {
        let row = height as usize - 1 - i;
        for j in 0..width as usize {
            let t = (map.value(i, j) - min) / span;
            img.put_pixel(j as u32, row as u32, viridis(t));
        }
    }
    img.save(path)
        .map_err(|e| CliError::config(format!("cannot write image {}: {e}", path.display())))
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = a.0 + t * (b.0 - a.0);
        let y = a.1 + t * (b.1 - a.1);
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Polar plot of the downward pattern (orientation-weighted total plus
/// the three channels), mirrored about the surface normal, with the NA
/// cone marked.
pub fn save_pattern_png(
    pattern: &AngularPattern,
    weights: &OrientationWeights,
    cone_half_angle: f64,
    path: &Path,
) -> Result<(), CliError> {
    let size = 900u32;
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    let cx = size as f64 / 2.0;
    let cy = 40.0;
    let radius = size as f64 - 90.0;

    let max_total = pattern
        .densities
        .iter()
        .map(|d| d.weighted(weights))
        .fold(f64::MIN_POSITIVE, f64::max);

    // Radial grid rings at quarters of the maximum.
    let grey = Rgb([210, 210, 210]);
    for ring in 1..=4 {
        let r = radius * ring as f64 / 4.0;
        let mut prev: Option<(f64, f64)> = None;
        let mut a = -std::f64::consts::FRAC_PI_2;
        while a <= std::f64::consts::FRAC_PI_2 + 1e-9 {
            let p = (cx + r * a.sin(), cy + r * a.cos());
            if let Some(q) = prev {
                draw_line(&mut img, q, p, grey);
            }
            prev = Some(p);
            a += 0.01;
        }
    }
    // NA cone boundary.
    let cone = Rgb([120, 120, 120]);
    for sign in [-1.0, 1.0] {
        let end = (
            cx + radius * (sign * cone_half_angle).sin(),
            cy + radius * cone_half_angle.cos(),
        );
        draw_line(&mut img, (cx, cy), end, cone);
    }

    let channels: [(&str, Box<dyn Fn(&drexhage::PatternDensities) -> f64>, Rgb<u8>); 4] = [
        ("total", Box::new(|d| d.weighted(weights)), Rgb([0, 0, 0])),
        ("perp_p", Box::new(|d| d.perp_p), Rgb([200, 40, 40])),
        ("par_p", Box::new(|d| d.par_p), Rgb([40, 150, 60])),
        ("par_s", Box::new(|d| d.par_s), Rgb([40, 70, 200])),
    ];
    for (_, value, color) in &channels {
        for sign in [-1.0, 1.0] {
            let mut prev: Option<(f64, f64)> = None;
            for (theta, dens) in pattern.theta_samples.iter().zip(&pattern.densities) {
                let r = radius * value(dens) / max_total;
                let p = (cx + r * (sign * theta).sin(), cy + r * theta.cos());
                if let Some(q) = prev {
                    draw_line(&mut img, q, p, *color);
                }
                prev = Some(p);
            }
        }
    }

    img.save(path)
        .map_err(|e| CliError::config(format!("cannot write image {}: {e}", path.display())))
}
