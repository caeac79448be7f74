//! Decay rates and far-field angular power of dipoles near a planar stack.
//!
//! The emitter sits a depth `z0` below the top surface of a lossless host
//! half-space; above the surface lies an arbitrary layer stack (gap plus
//! mirror), below is host material continued to infinity. Everything is
//! normalized to the bulk-host rate, so a trivial stack gives exactly 1.
//!
//! Rates follow the plane-wave expansion over the dimensionless in-plane
//! wavevector `u` (normalized to the host wavenumber `k1`), with
//! `l = sqrt(1 - u^2)`, `Im(l) >= 0`:
//!
//! ```text
//! G_perp/G0 = 1 + (3/2) Re INT_0^inf (u^3/l) r_p exp(2 i k1 z0 l) du
//! G_par /G0 = 1 + (3/4) Re INT_0^inf (u/l) [r_s - l^2 r_p] exp(2 i k1 z0 l) du
//! ```
//!
//! The radiative segment `u < 1` is mapped with `u = sin(s)` and the
//! evanescent tail with `v = sqrt(u^2 - 1)`, both of which remove the
//! `1/l` endpoint singularity. The relative sign between the `r_s` and
//! `r_p` terms is tied to the stratified module's mirror convention
//! (`r_S = -1`, `r_P = +1`) and guarded by image-dipole limit tests: a
//! parallel dipole pressed against an ideal mirror is cancelled by its
//! image, a perpendicular one doubled.

use num_complex::Complex64;
use thiserror::Error;

use crate::materials::OpticalMaterial;
use crate::quadrature::{integrate, QuadConfig, QuadratureError};
use crate::stratified::{LayerStack, Polarization, ResolvedStack, StratifiedError};

#[derive(Debug, Error)]
pub enum DipoleError {
    #[error(transparent)]
    Stratified(#[from] StratifiedError),
    #[error("quadrature failure in {context}: {source}")]
    Quadrature {
        context: &'static str,
        source: QuadratureError,
    },
    #[error("orientation axis list is empty")]
    EmptyAxisList,
    #[error("axis ({0}, {1}, {2}) is not a unit vector")]
    NonUnitAxis(f64, f64, f64),
    #[error("orientation weights ({parallel}, {perpendicular}) do not sum to 1")]
    BadWeights { parallel: f64, perpendicular: f64 },
    #[error("emitter depth must be positive, got {0} nm")]
    BadDepth(f64),
    #[error("host material '{0}' must be lossless")]
    LossyHost(String),
    #[error("upward stack incidence must match the host material")]
    StackHostMismatch,
    #[error("downward half-space must be the host material itself")]
    DownwardNotHost,
    #[error("polar angle {0} rad outside [0, pi/2)")]
    BadPolarAngle(f64),
    #[error("environment has no adjustable gap layer")]
    NoGapLayer,
}

fn quad_err(context: &'static str) -> impl FnOnce(QuadratureError) -> DipoleError {
    move |source| DipoleError::Quadrature { context, source }
}

/// Relative strength of the in-plane and out-of-plane dipole components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationWeights {
    pub parallel: f64,
    pub perpendicular: f64,
}

impl OrientationWeights {
    pub fn new(parallel: f64, perpendicular: f64) -> Result<Self, DipoleError> {
        let ok = (0.0..=1.0).contains(&parallel)
            && (0.0..=1.0).contains(&perpendicular)
            && (parallel + perpendicular - 1.0).abs() <= 1e-12;
        if !ok {
            return Err(DipoleError::BadWeights {
                parallel,
                perpendicular,
            });
        }
        Ok(OrientationWeights {
            parallel,
            perpendicular,
        })
    }

    /// Ensemble-averaged weights for the four defect axes under a (100)
    /// surface as reported with the reference emission data.
    pub fn reported() -> Self {
        OrientationWeights {
            parallel: 0.659,
            perpendicular: 0.341,
        }
    }

    /// Purely geometric average over the four <111> axes under a (100)
    /// surface: exactly (2/3, 1/3).
    pub fn geometric_100() -> Result<Self, DipoleError> {
        let s = 1.0 / 3.0f64.sqrt();
        orientation_weights(
            &[
                [s, s, s],
                [-s, -s, s],
                [-s, s, -s],
                [s, -s, -s],
            ],
            [0.0, 0.0, 1.0],
        )
    }
}

/// Average the per-axis dipole tensor `(I - a a^T)/2` over the given unit
/// axes and project onto the surface normal.
pub fn orientation_weights(
    nv_axes: &[[f64; 3]],
    surface_normal: [f64; 3],
) -> Result<OrientationWeights, DipoleError> {
    if nv_axes.is_empty() {
        return Err(DipoleError::EmptyAxisList);
    }
    let check_unit = |v: [f64; 3]| -> Result<(), DipoleError> {
        let norm2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if (norm2 - 1.0).abs() > 1e-9 {
            return Err(DipoleError::NonUnitAxis(v[0], v[1], v[2]));
        }
        Ok(())
    };
    check_unit(surface_normal)?;
    let mut perpendicular = 0.0;
    for axis in nv_axes {
        check_unit(*axis)?;
        let along = axis[0] * surface_normal[0]
            + axis[1] * surface_normal[1]
            + axis[2] * surface_normal[2];
        perpendicular += (1.0 - along * along) / 2.0;
    }
    perpendicular /= nv_axes.len() as f64;
    Ok(OrientationWeights {
        parallel: 1.0 - perpendicular,
        perpendicular,
    })
}

/// Emitter buried in a lossless host half-space facing a layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterEnvironment {
    pub host: OpticalMaterial,
    /// Emitter depth below the top surface, nm.
    pub depth_nm: f64,
    /// Stack seen looking up from the emitter (gap, mirror, ...).
    pub upward_stack: LayerStack,
    /// Semi-infinite medium below the emitter; must be the host itself.
    pub downward_half_space: OpticalMaterial,
    pub weights: OrientationWeights,
}

impl EmitterEnvironment {
    pub fn new(
        host: OpticalMaterial,
        depth_nm: f64,
        upward_stack: LayerStack,
        downward_half_space: OpticalMaterial,
        weights: OrientationWeights,
    ) -> Result<Self, DipoleError> {
        if !(depth_nm.is_finite() && depth_nm > 0.0) {
            return Err(DipoleError::BadDepth(depth_nm));
        }
        if !host.is_lossless() {
            return Err(DipoleError::LossyHost(host.name.clone()));
        }
        if upward_stack.incidence.model != host.model {
            return Err(DipoleError::StackHostMismatch);
        }
        if downward_half_space.model != host.model {
            return Err(DipoleError::DownwardNotHost);
        }
        Ok(EmitterEnvironment {
            host,
            depth_nm,
            upward_stack,
            downward_half_space,
            weights,
        })
    }

    /// The same emitter with everything above the gap removed: the first
    /// stack layer becomes the semi-infinite exit. An environment with no
    /// layers is returned unchanged.
    pub fn without_mirror(&self) -> Self {
        let mut env = self.clone();
        if let Some(first) = self.upward_stack.layers.first() {
            env.upward_stack = LayerStack {
                incidence: self.upward_stack.incidence.clone(),
                layers: Vec::new(),
                exit: first.material.clone(),
            };
        }
        env
    }

    /// Host wavenumber `k1 = 2 pi n_host / lambda` in rad/nm.
    pub fn host_wavenumber(&self, wavelength_nm: f64) -> Result<f64, DipoleError> {
        let n = self
            .host
            .complex_index(wavelength_nm)
            .map_err(StratifiedError::from)?;
        Ok(2.0 * std::f64::consts::PI * n.re / wavelength_nm)
    }

    fn resolve_upward(&self, wavelength_nm: f64) -> Result<ResolvedEmitter, DipoleError> {
        let stack = self.upward_stack.resolve(wavelength_nm)?;
        let k1 = stack.vacuum_wavenumber() * stack.incidence_index();
        Ok(ResolvedEmitter {
            stack,
            k1,
            z0: self.depth_nm,
        })
    }
}

/// An environment whose first upward layer is the adjustable mirror gap.
#[derive(Debug, Clone)]
pub struct GapTemplate {
    base: EmitterEnvironment,
}

impl GapTemplate {
    pub fn new(base: EmitterEnvironment) -> Result<Self, DipoleError> {
        if base.upward_stack.layers.is_empty() {
            return Err(DipoleError::NoGapLayer);
        }
        Ok(GapTemplate { base })
    }

    /// Environment with the gap set to `gap_nm`.
    pub fn at(&self, gap_nm: f64) -> EmitterEnvironment {
        let mut env = self.base.clone();
        env.upward_stack.layers[0].thickness_nm = gap_nm;
        env
    }

    /// Mirror-removed reference environment (gap medium continued to
    /// infinity).
    pub fn reference(&self) -> EmitterEnvironment {
        self.base.without_mirror()
    }

    pub fn base(&self) -> &EmitterEnvironment {
        &self.base
    }
}

struct ResolvedEmitter {
    stack: ResolvedStack,
    k1: f64,
    z0: f64,
}

impl ResolvedEmitter {
    /// Cutoff of the evanescent tail: beyond this the source term
    /// `exp(-2 k1 z0 v)` is below 1e-12.
    fn evanescent_cutoff(&self) -> f64 {
        let scale = 2.0 * self.k1 * self.z0;
        (27.631_021_115_928_55 / scale).max(1.0)
    }

    /// Seed the decaying tail with order-unity-wide panels so narrow
    /// surface-wave features near u = 1 are not skipped.
    fn evanescent_quad(&self, quad: &QuadConfig) -> QuadConfig {
        QuadConfig {
            initial_intervals: ((self.evanescent_cutoff() / 4.0).ceil() as usize).clamp(1, 64),
            ..*quad
        }
    }
}

/// Normalized decay-rate budget of one emitter configuration.
#[derive(Debug, Clone, Copy)]
pub struct DecayRates {
    /// Total rate relative to bulk host.
    pub total: f64,
    /// Far-field power radiated into the lower (host) half-space.
    pub radiative_down: f64,
    /// Far-field power transmitted through the stack into the exit
    /// half-space; zero when the exit is absorbing or an ideal mirror.
    pub radiative_up: f64,
    /// Remainder: absorption in the stack plus near-field quenching.
    pub nonradiative: f64,
}

/// Far-field power density per unit solid angle, split by dipole
/// orientation and polarization, sampled on a polar-angle grid measured
/// from the downward surface normal inside the host.
#[derive(Debug, Clone)]
pub struct AngularPattern {
    pub theta_samples: Vec<f64>,
    pub densities: Vec<PatternDensities>,
}

/// Power per unit solid angle for the three far-field channels;
/// a homogeneous medium integrates to 1 per dipole class over the full
/// sphere.
#[derive(Debug, Clone, Copy)]
pub struct PatternDensities {
    pub perp_p: f64,
    pub par_p: f64,
    pub par_s: f64,
}

impl PatternDensities {
    pub fn weighted(&self, weights: &OrientationWeights) -> f64 {
        weights.perpendicular * self.perp_p + weights.parallel * (self.par_p + self.par_s)
    }
}

/// Render a sampled pattern as CSV: `#` comments, then a
/// `theta_rad,perp_p,par_p,par_s` header and one row per sample.
pub fn format_pattern_csv(pattern: &AngularPattern, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("theta_rad,perp_p,par_p,par_s\n");
    for (theta, d) in pattern.theta_samples.iter().zip(&pattern.densities) {
        out.push_str(&format!("{theta},{},{},{}\n", d.perp_p, d.par_p, d.par_s));
    }
    out
}

/// Normalized decay rate of a dipole perpendicular to the interface.
pub fn decay_rate_perpendicular(
    env: &EmitterEnvironment,
    wavelength_nm: f64,
) -> Result<f64, DipoleError> {
    decay_rate_perpendicular_with(env, wavelength_nm, &QuadConfig::default())
}

pub fn decay_rate_perpendicular_with(
    env: &EmitterEnvironment,
    wavelength_nm: f64,
    quad: &QuadConfig,
) -> Result<f64, DipoleError> {
    let res = env.resolve_upward(wavelength_nm)?;
    let phase = 2.0 * res.k1 * res.z0;
    let prop_quad = quad.seeded_for_phase_span(res.stack.phase_span(0.0, 1.0) + phase);
    let evan_quad = res.evanescent_quad(quad);

    let propagating = integrate(
        |s| {
            let (sin_s, cos_s) = s.sin_cos();
            let r_p = res.stack.reflection(Polarization::P, sin_s).unwrap_or(Complex64::new(f64::NAN, 0.0));
            let osc = Complex64::from_polar(1.0, phase * cos_s);
            1.5 * sin_s * sin_s * sin_s * (r_p * osc).re
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        &prop_quad,
    )
    .map_err(quad_err("perpendicular decay, radiative segment"))?;

    let evanescent = integrate(
        |v| {
            let u = (1.0 + v * v).sqrt();
            let r_p = res.stack.reflection(Polarization::P, u).unwrap_or(Complex64::new(f64::NAN, 0.0));
            1.5 * (1.0 + v * v) * r_p.im * (-phase * v).exp()
        },
        0.0,
        res.evanescent_cutoff(),
        &evan_quad,
    )
    .map_err(quad_err("perpendicular decay, evanescent segment"))?;

    Ok(1.0 + propagating.value + evanescent.value)
}

/// Normalized decay rate of a dipole parallel to the interface.
pub fn decay_rate_parallel(
    env: &EmitterEnvironment,
    wavelength_nm: f64,
) -> Result<f64, DipoleError> {
    decay_rate_parallel_with(env, wavelength_nm, &QuadConfig::default())
}

pub fn decay_rate_parallel_with(
    env: &EmitterEnvironment,
    wavelength_nm: f64,
    quad: &QuadConfig,
) -> Result<f64, DipoleError> {
    let res = env.resolve_upward(wavelength_nm)?;
    let phase = 2.0 * res.k1 * res.z0;
    let prop_quad = quad.seeded_for_phase_span(res.stack.phase_span(0.0, 1.0) + phase);
    let evan_quad = res.evanescent_quad(quad);

    let propagating = integrate(
        |s| {
            let (sin_s, cos_s) = s.sin_cos();
            let (r_s, r_p) = match (
                res.stack.reflection(Polarization::S, sin_s),
                res.stack.reflection(Polarization::P, sin_s),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return f64::NAN,
            };
            let osc = Complex64::from_polar(1.0, phase * cos_s);
            0.75 * sin_s * ((r_s - cos_s * cos_s * r_p) * osc).re
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        &prop_quad,
    )
    .map_err(quad_err("parallel decay, radiative segment"))?;

    let evanescent = integrate(
        |v| {
            let u = (1.0 + v * v).sqrt();
            let (r_s, r_p) = match (
                res.stack.reflection(Polarization::S, u),
                res.stack.reflection(Polarization::P, u),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return f64::NAN,
            };
            0.75 * (r_s + v * v * r_p).im * (-phase * v).exp()
        },
        0.0,
        res.evanescent_cutoff(),
        &evan_quad,
    )
    .map_err(quad_err("parallel decay, evanescent segment"))?;

    Ok(1.0 + propagating.value + evanescent.value)
}

/// Far-field densities at one angle; shared by the sampled pattern and
/// the collection integrals.
pub(crate) fn densities_at(
    stack: &ResolvedStack,
    k1: f64,
    z0: f64,
    theta: f64,
) -> Result<PatternDensities, StratifiedError> {
    let (sin_t, cos_t) = theta.sin_cos();
    let r_s = stack.reflection(Polarization::S, sin_t)?;
    let r_p = stack.reflection(Polarization::P, sin_t)?;
    let osc = Complex64::from_polar(1.0, 2.0 * k1 * z0 * cos_t);
    let one = Complex64::new(1.0, 0.0);
    let c = 3.0 / (16.0 * std::f64::consts::PI);
    Ok(PatternDensities {
        perp_p: 2.0 * c * sin_t * sin_t * (one + r_p * osc).norm_sqr(),
        par_p: c * cos_t * cos_t * (one - r_p * osc).norm_sqr(),
        par_s: c * (one + r_s * osc).norm_sqr(),
    })
}

/// Downward far-field pattern on the given polar-angle grid.
pub fn angular_pattern(
    env: &EmitterEnvironment,
    wavelength_nm: f64,
    theta_grid: &[f64],
) -> Result<AngularPattern, DipoleError> {
    for &theta in theta_grid {
        if !(theta >= 0.0 && theta < std::f64::consts::FRAC_PI_2) {
            return Err(DipoleError::BadPolarAngle(theta));
        }
    }
    let res = env.resolve_upward(wavelength_nm)?;
    let densities = theta_grid
        .iter()
        .map(|&theta| densities_at(&res.stack, res.k1, res.z0, theta))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AngularPattern {
        theta_samples: theta_grid.to_vec(),
        densities,
    })
}

/// Downward radiated power per dipole class, from the far-field pattern.
fn radiated_down(
    res: &ResolvedEmitter,
    quad: &QuadConfig,
) -> Result<(f64, f64), DipoleError> {
    let quad = &quad.seeded_for_phase_span(
        res.stack.phase_span(0.0, 1.0) + 2.0 * res.k1 * res.z0,
    );
    let perp = integrate(
        |theta| {
            let (sin_t, cos_t) = theta.sin_cos();
            let r_p = match res.stack.reflection(Polarization::P, sin_t) {
                Ok(r) => r,
                Err(_) => return f64::NAN,
            };
            let osc = Complex64::from_polar(1.0, 2.0 * res.k1 * res.z0 * cos_t);
            0.75 * sin_t * sin_t * sin_t * (Complex64::new(1.0, 0.0) + r_p * osc).norm_sqr()
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        quad,
    )
    .map_err(quad_err("downward radiation, perpendicular dipole"))?;

    let par = integrate(
        |theta| {
            let (sin_t, cos_t) = theta.sin_cos();
            let (r_s, r_p) = match (
                res.stack.reflection(Polarization::S, sin_t),
                res.stack.reflection(Polarization::P, sin_t),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return f64::NAN,
            };
            let osc = Complex64::from_polar(1.0, 2.0 * res.k1 * res.z0 * cos_t);
            let one = Complex64::new(1.0, 0.0);
            0.375
                * sin_t
                * (cos_t * cos_t * (one - r_p * osc).norm_sqr() + (one + r_s * osc).norm_sqr())
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        quad,
    )
    .map_err(quad_err("downward radiation, parallel dipole"))?;

    Ok((perp.value, par.value))
}

/// Power transmitted through the stack into a lossless exit half-space,
/// per dipole class. Returns (perp, par); both zero for an absorbing exit
/// or an ideal mirror.
fn radiated_up(res: &ResolvedEmitter, quad: &QuadConfig) -> Result<(f64, f64), DipoleError> {
    let eps_exit = match res.stack.exit_permittivity() {
        Some(e) if e.im == 0.0 && e.re > 0.0 => e.re,
        _ => return Ok((0.0, 0.0)),
    };
    let n1 = res.stack.incidence_index();
    let eps1 = n1 * n1;
    let u_exit = eps_exit.sqrt() / n1;

    // Flux weights: Re(kz_exit)/k1 for S, scaled by eps1/eps_exit for P
    // (H-field amplitude convention).
    let m_of = |u: f64| -> f64 {
        let arg = eps_exit / eps1 - u * u;
        if arg > 0.0 {
            arg.sqrt()
        } else {
            0.0
        }
    };
    // Propagating segment mapped with u = sin(s): the 1/(1 - u^2)
    // endpoint factor of the s channel reduces to 1/cos(s), which the
    // vanishing flux (kz_exit or |t|^2) cancels.
    let seg_a_end = u_exit.min(1.0).asin();
    let quad_a = &quad.seeded_for_phase_span(
        res.stack.phase_span(0.0, seg_a_end.sin()) + 2.0 * res.k1 * res.z0,
    );
    let perp_a = integrate(
        |s| {
            let (sin_s, cos_s) = s.sin_cos();
            let tp2 = match res.stack.coefficients(Polarization::P, sin_s) {
                Ok((_, t)) => t.norm_sqr(),
                Err(_) => return f64::NAN,
            };
            let m = m_of(sin_s);
            0.75 * sin_s * sin_s * sin_s * (m * eps1 / eps_exit) * tp2 / cos_s
        },
        0.0,
        seg_a_end,
        quad_a,
    )
    .map_err(quad_err("upward radiation, perpendicular dipole"))?;

    let par_a = integrate(
        |s| {
            let (sin_s, cos_s) = s.sin_cos();
            let (ts2, tp2) = match (
                res.stack.coefficients(Polarization::S, sin_s),
                res.stack.coefficients(Polarization::P, sin_s),
            ) {
                (Ok((_, ts)), Ok((_, tp))) => (ts.norm_sqr(), tp.norm_sqr()),
                _ => return f64::NAN,
            };
            let m = m_of(sin_s);
            0.375 * sin_s * ((m * eps1 / eps_exit) * tp2 * cos_s + m * ts2 / cos_s)
        },
        0.0,
        seg_a_end,
        quad_a,
    )
    .map_err(quad_err("upward radiation, parallel dipole"))?;

    let mut perp = perp_a.value;
    let mut par = par_a.value;

    // Tunneling segment: host-evanescent waves that propagate in a denser
    // exit medium.
    if u_exit > 1.0 {
        let v_max = (u_exit * u_exit - 1.0).sqrt();
        let phase = 2.0 * res.k1 * res.z0;
        let perp_b = integrate(
            |v| {
                let u = (1.0 + v * v).sqrt();
                let tp2 = match res.stack.coefficients(Polarization::P, u) {
                    Ok((_, t)) => t.norm_sqr(),
                    Err(_) => return f64::NAN,
                };
                let m = m_of(u);
                0.75 * (1.0 + v * v) * (m * eps1 / eps_exit) * tp2 / v * (-phase * v).exp()
            },
            0.0,
            v_max,
            quad,
        )
        .map_err(quad_err("upward radiation, perpendicular tunneling"))?;
        let par_b = integrate(
            |v| {
                let u = (1.0 + v * v).sqrt();
                let (ts2, tp2) = match (
                    res.stack.coefficients(Polarization::S, u),
                    res.stack.coefficients(Polarization::P, u),
                ) {
                    (Ok((_, ts)), Ok((_, tp))) => (ts.norm_sqr(), tp.norm_sqr()),
                    _ => return f64::NAN,
                };
                let m = m_of(u);
                0.375 * (v * (m * eps1 / eps_exit) * tp2 + m * ts2 / v) * (-phase * v).exp()
            },
            0.0,
            v_max,
            quad,
        )
        .map_err(quad_err("upward radiation, parallel tunneling"))?;
        perp += perp_b.value;
        par += par_b.value;
    }

    Ok((perp, par))
}

/// Orientation-weighted decay budget: total rate from the wavevector
/// integrals, radiative parts from independent far-field integrals, and
/// the nonradiative remainder.
pub fn total_decay(env: &EmitterEnvironment, wavelength_nm: f64) -> Result<DecayRates, DipoleError> {
    total_decay_with(env, wavelength_nm, &QuadConfig::default())
}

pub fn total_decay_with(
    env: &EmitterEnvironment,
    wavelength_nm: f64,
    quad: &QuadConfig,
) -> Result<DecayRates, DipoleError> {
    let perp = decay_rate_perpendicular_with(env, wavelength_nm, quad)?;
    let par = decay_rate_parallel_with(env, wavelength_nm, quad)?;
    let res = env.resolve_upward(wavelength_nm)?;
    let (down_perp, down_par) = radiated_down(&res, quad)?;
    let (up_perp, up_par) = radiated_up(&res, quad)?;

    let w = &env.weights;
    let total = w.parallel * par + w.perpendicular * perp;
    let radiative_down = w.parallel * down_par + w.perpendicular * down_perp;
    let radiative_up = w.parallel * up_par + w.perpendicular * up_perp;
    Ok(DecayRates {
        total,
        radiative_down,
        radiative_up,
        nonradiative: total - radiative_down - radiative_up,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::load_dispersion_table;
    use crate::stratified::Layer;

    fn diamond() -> OpticalMaterial {
        OpticalMaterial::constant("diamond", 2.41, 0.0).unwrap()
    }

    fn air() -> OpticalMaterial {
        OpticalMaterial::constant("air", 1.0, 0.0).unwrap()
    }

    fn silver() -> OpticalMaterial {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ag_johnson_christy.csv");
        OpticalMaterial::tabulated("silver", load_dispersion_table(path).unwrap())
    }

    /// Diamond host, 8 nm implantation depth, air gap d, silver mirror.
    fn mirror_env(gap_nm: f64) -> EmitterEnvironment {
        let stack = LayerStack::new(
            diamond(),
            vec![Layer::new(air(), gap_nm).unwrap()],
            silver(),
        )
        .unwrap();
        EmitterEnvironment::new(diamond(), 8.0, stack, diamond(), OrientationWeights::reported())
            .unwrap()
    }

    fn homogeneous_env() -> EmitterEnvironment {
        let stack = LayerStack::new(diamond(), vec![], diamond()).unwrap();
        EmitterEnvironment::new(diamond(), 8.0, stack, diamond(), OrientationWeights::reported())
            .unwrap()
    }

    #[test]
    fn homogeneous_rates_are_unity() {
        let env = homogeneous_env();
        let perp = decay_rate_perpendicular(&env, 700.0).unwrap();
        let par = decay_rate_parallel(&env, 700.0).unwrap();
        assert!((perp - 1.0).abs() < 1e-9, "perp = {perp}");
        assert!((par - 1.0).abs() < 1e-9, "par = {par}");
    }

    #[test]
    fn ideal_mirror_image_dipole_limits() {
        // Mirror pressed against the emitter: k1 (z0 + d) = 1e-3. The gap
        // is host material so the mirror is the only interface.
        let lambda = 700.0;
        let k1 = 2.0 * std::f64::consts::PI * 2.41 / lambda;
        let h = 1e-3 / k1;
        let stack = LayerStack::new(
            diamond(),
            vec![Layer::new(diamond(), h / 2.0).unwrap()],
            OpticalMaterial::ideal_mirror(),
        )
        .unwrap();
        let env = EmitterEnvironment::new(
            diamond(),
            h / 2.0,
            stack,
            diamond(),
            OrientationWeights::reported(),
        )
        .unwrap();
        let perp = decay_rate_perpendicular(&env, lambda).unwrap();
        let par = decay_rate_parallel(&env, lambda).unwrap();
        assert!((perp - 2.0).abs() < 1e-2, "perp = {perp}");
        assert!(par.abs() <= 1e-2, "par = {par}");
    }

    #[test]
    fn ideal_mirror_analytic_curve() {
        // Perfect mirror at height h in the host medium has the closed
        // forms (a = 2 k1 h):
        //   perp: 1 + 3 (sin a / a^3 - cos a / a^2)
        //   par:  1 - (3/2) (sin a / a + cos a / a^2 - sin a / a^3)
        let lambda = 700.0;
        let k1 = 2.0 * std::f64::consts::PI * 2.41 / lambda;
        for h_nm in [30.0, 120.0, 333.0, 1010.0] {
            let stack = LayerStack::new(
                diamond(),
                vec![Layer::new(diamond(), h_nm / 2.0).unwrap()],
                OpticalMaterial::ideal_mirror(),
            )
            .unwrap();
            let env = EmitterEnvironment::new(
                diamond(),
                h_nm / 2.0,
                stack,
                diamond(),
                OrientationWeights::reported(),
            )
            .unwrap();
            let a = 2.0 * k1 * h_nm;
            let perp_expect = 1.0 + 3.0 * (a.sin() / (a * a * a) - a.cos() / (a * a));
            let par_expect =
                1.0 - 1.5 * (a.sin() / a + a.cos() / (a * a) - a.sin() / (a * a * a));
            let perp = decay_rate_perpendicular(&env, lambda).unwrap();
            let par = decay_rate_parallel(&env, lambda).unwrap();
            assert!((perp - perp_expect).abs() < 1e-7, "h = {h_nm}: {perp} vs {perp_expect}");
            assert!((par - par_expect).abs() < 1e-7, "h = {h_nm}: {par} vs {par_expect}");
        }
    }

    #[test]
    fn distant_mirror_approaches_bare_interface() {
        let lambda = 700.0;
        let env_far = mirror_env(20_000.0);
        let env_bare = env_far.without_mirror();
        let par_far = decay_rate_parallel(&env_far, lambda).unwrap();
        let par_bare = decay_rate_parallel(&env_bare, lambda).unwrap();
        assert!(
            (par_far - par_bare).abs() / par_bare < 0.01,
            "far {par_far} vs bare {par_bare}"
        );
    }

    /// Independent dense-trapezoid evaluation of the decay integrals,
    /// written directly from the wavevector expansion using only the
    /// public reflection API.
    fn trapezoid_oracle(env: &EmitterEnvironment, lambda: f64) -> (f64, f64) {
        let resolved = env.upward_stack.resolve(lambda).unwrap();
        let k1 = resolved.vacuum_wavenumber() * resolved.incidence_index();
        let z0 = env.depth_nm;
        let phase = 2.0 * k1 * z0;

        // Radiative segment, u = sin(s).
        let n_prop = 50_000;
        let h = std::f64::consts::FRAC_PI_2 / n_prop as f64;
        let mut perp = 0.0;
        let mut par = 0.0;
        for i in 0..=n_prop {
            let s = i as f64 * h;
            let w = if i == 0 || i == n_prop { 0.5 } else { 1.0 };
            let (sin_s, cos_s) = s.sin_cos();
            let r_p = resolved.reflection(Polarization::P, sin_s).unwrap();
            let r_s = resolved.reflection(Polarization::S, sin_s).unwrap();
            let osc = Complex64::from_polar(1.0, phase * cos_s);
            perp += w * 1.5 * sin_s.powi(3) * (r_p * osc).re;
            par += w * 0.75 * sin_s * ((r_s - cos_s * cos_s * r_p) * osc).re;
        }
        perp *= h;
        par *= h;

        // Evanescent tail, u = sqrt(1 + v^2).
        let v_max = (27.631_021_115_928_55 / phase).max(1.0);
        let n_evan = 100_000;
        let hv = v_max / n_evan as f64;
        let mut perp_e = 0.0;
        let mut par_e = 0.0;
        for i in 0..=n_evan {
            let v = i as f64 * hv;
            let w = if i == 0 || i == n_evan { 0.5 } else { 1.0 };
            let u = (1.0 + v * v).sqrt();
            let r_p = resolved.reflection(Polarization::P, u).unwrap();
            let r_s = resolved.reflection(Polarization::S, u).unwrap();
            let damp = (-phase * v).exp();
            perp_e += w * 1.5 * (1.0 + v * v) * r_p.im * damp;
            par_e += w * 0.75 * (r_s + v * v * r_p).im * damp;
        }
        perp_e *= hv;
        par_e *= hv;

        (1.0 + perp + perp_e, 1.0 + par + par_e)
    }

    #[test]
    fn adaptive_rates_match_trapezoid_oracle() {
        let lambda = 700.0;
        let env = mirror_env(1000.0);
        let perp = decay_rate_perpendicular(&env, lambda).unwrap();
        let par = decay_rate_parallel(&env, lambda).unwrap();
        let (perp_oracle, par_oracle) = trapezoid_oracle(&env, lambda);
        assert!(
            (perp - perp_oracle).abs() < 1e-6,
            "perp {perp} vs oracle {perp_oracle}"
        );
        assert!(
            (par - par_oracle).abs() < 1e-6,
            "par {par} vs oracle {par_oracle}"
        );
        // Regression pins from the first verified run; an independent
        // implementation of the same expansion agrees to the quadrature
        // tolerance.
        assert!((perp - 0.098472980627606).abs() < 1e-8, "perp = {perp:.15}");
        assert!((par - 1.025741410055178).abs() < 1e-8, "par = {par:.15}");
    }

    #[test]
    fn total_decay_homogeneous_budget() {
        let env = homogeneous_env();
        let rates = total_decay(&env, 700.0).unwrap();
        assert!((rates.total - 1.0).abs() < 1e-9);
        assert!(rates.nonradiative.abs() < 1e-6, "nonrad = {}", rates.nonradiative);
        assert!((rates.radiative_down - 0.5).abs() < 1e-6);
        assert!((rates.radiative_up - 0.5).abs() < 1e-6);
    }

    #[test]
    fn mirror_configuration_purcell_band() {
        // Total weighted rate stays within the reported band (plus model
        // tolerance) once the mirror is beyond 100 nm.
        for d in [130.0, 350.0, 1000.0, 3000.0] {
            let env = mirror_env(d);
            let rates = total_decay(&env, 700.0).unwrap();
            assert!(
                rates.total > 0.63 && rates.total < 0.80,
                "total = {} at d = {d}",
                rates.total
            );
        }
    }

    #[test]
    fn close_mirror_quenches() {
        // Nonradiative share grows monotonically as the metal approaches;
        // the emitter sits in high-index diamond behind a low-index air
        // gap, so the absolute share stays modest (percent level).
        let shares: Vec<f64> = [1000.0, 130.0, 50.0, 20.0, 10.0]
            .iter()
            .map(|&d| {
                let r = total_decay(&mirror_env(d), 700.0).unwrap();
                r.nonradiative / r.total
            })
            .collect();
        for pair in shares.windows(2) {
            assert!(pair[1] > pair[0], "shares not monotone: {shares:?}");
        }
        assert!(
            shares[3] > 5.0 * shares[0],
            "20 nm share {} should dwarf the 1 um share {}",
            shares[3],
            shares[0]
        );
    }

    #[test]
    fn energy_conservation_lossless_stack() {
        // Replace silver by a lossless dielectric: the wavevector-integral
        // total must match the sum of the two independent far-field
        // integrals.
        let glass = OpticalMaterial::constant("dielectric", 2.0, 0.0).unwrap();
        for (d, lambda) in [(150.0, 700.0), (700.0, 620.0), (2500.0, 850.0)] {
            let stack = LayerStack::new(
                diamond(),
                vec![Layer::new(air(), d).unwrap()],
                glass.clone(),
            )
            .unwrap();
            let env = EmitterEnvironment::new(
                diamond(),
                8.0,
                stack,
                diamond(),
                OrientationWeights::reported(),
            )
            .unwrap();
            let rates = total_decay(&env, lambda).unwrap();
            let gap = (rates.total - rates.radiative_down - rates.radiative_up).abs();
            assert!(gap <= 1e-4, "imbalance {gap} at d = {d}, lambda = {lambda}");
        }
    }

    #[test]
    fn energy_conservation_with_tunneling_exit() {
        // Exit denser than the host: host-evanescent waves tunnel through
        // the gap and radiate. Conservation must still hold.
        let dense = OpticalMaterial::constant("dense", 3.0, 0.0).unwrap();
        let stack = LayerStack::new(
            diamond(),
            vec![Layer::new(air(), 60.0).unwrap()],
            dense,
        )
        .unwrap();
        let env = EmitterEnvironment::new(
            diamond(),
            8.0,
            stack,
            diamond(),
            OrientationWeights::reported(),
        )
        .unwrap();
        let rates = total_decay(&env, 700.0).unwrap();
        let gap = (rates.total - rates.radiative_down - rates.radiative_up).abs();
        assert!(gap <= 1e-4, "imbalance {gap}");
        assert!(rates.radiative_up > 0.0);
    }

    #[test]
    fn quadrature_robustness() {
        let env = mirror_env(800.0);
        let lambda = 700.0;
        let coarse = QuadConfig::default();
        let fine = QuadConfig {
            rel_tol: coarse.rel_tol / 2.0,
            abs_tol: coarse.abs_tol / 2.0,
            max_intervals: coarse.max_intervals * 2,
            initial_intervals: coarse.initial_intervals,
        };
        let p1 = decay_rate_perpendicular_with(&env, lambda, &coarse).unwrap();
        let p2 = decay_rate_perpendicular_with(&env, lambda, &fine).unwrap();
        assert!((p1 - p2).abs() / p2.abs() < 1e-6);
        let q1 = decay_rate_parallel_with(&env, lambda, &coarse).unwrap();
        let q2 = decay_rate_parallel_with(&env, lambda, &fine).unwrap();
        assert!((q1 - q2).abs() / q2.abs() < 1e-6);
    }

    #[test]
    fn homogeneous_pattern_is_bare_dipole() {
        let env = homogeneous_env();
        let thetas: Vec<f64> = (0..90).map(|i| i as f64 * 0.017).collect();
        let pattern = angular_pattern(&env, 700.0, &thetas).unwrap();
        let c = 3.0 / (8.0 * std::f64::consts::PI);
        for (theta, d) in pattern.theta_samples.iter().zip(&pattern.densities) {
            let sin2 = theta.sin() * theta.sin();
            assert!((d.perp_p - c * sin2).abs() < 1e-12);
            assert!(d.par_p >= 0.0 && d.par_s >= 0.0);
        }
        // Zero on axis for the perpendicular dipole.
        assert!(pattern.densities[0].perp_p.abs() < 1e-15);
    }

    #[test]
    fn contact_mirror_cancels_parallel_pattern() {
        let lambda = 700.0;
        let k1 = 2.0 * std::f64::consts::PI * 2.41 / lambda;
        let h = 1e-4 / k1;
        let stack = LayerStack::new(
            diamond(),
            vec![Layer::new(diamond(), h / 2.0).unwrap()],
            OpticalMaterial::ideal_mirror(),
        )
        .unwrap();
        let env = EmitterEnvironment::new(
            diamond(),
            h / 2.0,
            stack,
            diamond(),
            OrientationWeights::reported(),
        )
        .unwrap();
        let thetas = [0.0, 0.4, 0.9, 1.3];
        let pattern = angular_pattern(&env, lambda, &thetas).unwrap();
        for d in &pattern.densities {
            assert!(d.par_p < 1e-6, "par_p = {}", d.par_p);
            assert!(d.par_s < 1e-6, "par_s = {}", d.par_s);
        }
    }

    #[test]
    fn pattern_rejects_bad_angles() {
        let env = homogeneous_env();
        let err = angular_pattern(&env, 700.0, &[std::f64::consts::FRAC_PI_2]).unwrap_err();
        assert!(matches!(err, DipoleError::BadPolarAngle(_)));
    }

    #[test]
    fn single_axis_along_normal() {
        let w = orientation_weights(&[[0.0, 0.0, 1.0]], [0.0, 0.0, 1.0]).unwrap();
        assert!((w.parallel - 1.0).abs() < 1e-15);
        assert!(w.perpendicular.abs() < 1e-15);
    }

    #[test]
    fn four_111_axes_give_thirds() {
        let w = OrientationWeights::geometric_100().unwrap();
        assert!((w.parallel - 2.0 / 3.0).abs() <= 1e-12, "par = {}", w.parallel);
        assert!((w.perpendicular - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn reported_weights_accepted_as_override() {
        let w = OrientationWeights::new(0.659, 0.341).unwrap();
        assert_eq!(w.parallel, 0.659);
        assert_eq!(w.perpendicular, 0.341);
    }

    #[test]
    fn empty_axis_list_is_error() {
        assert!(matches!(
            orientation_weights(&[], [0.0, 0.0, 1.0]),
            Err(DipoleError::EmptyAxisList)
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weights_always_close(
                ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0,
                bx in -1.0f64..1.0, by in -1.0f64..1.0, bz in 0.1f64..1.0,
            ) {
                let norm = |v: [f64; 3]| {
                    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    [v[0] / n, v[1] / n, v[2] / n]
                };
                let axes = [norm([ax, ay, az]), norm([bx, by, bz])];
                let w = orientation_weights(&axes, [0.0, 0.0, 1.0]).unwrap();
                prop_assert!((w.parallel + w.perpendicular - 1.0).abs() <= 1e-12);
                prop_assert!(w.parallel >= 0.0 && w.perpendicular >= 0.0);
            }
        }
    }
}

