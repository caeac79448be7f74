//! Reflection and transmission of planar layer stacks at arbitrary
//! (including evanescent) in-plane wavevectors.
//!
//! The in-plane wavevector is expressed as the dimensionless
//! `u = k_parallel / (k0 * n_incidence)`, so `u < 1` is propagating and
//! `u > 1` evanescent in the incidence half-space. Stacks are combined
//! bottom-up with the Airy recursion
//! `r_j = (rho_j + r_{j+1} phi_{j+1}) / (1 + rho_j r_{j+1} phi_{j+1})`,
//! which stays bounded for strongly evanescent layers because every
//! propagation factor satisfies `|phi| <= 1`.
//!
//! Sign convention: an ideal mirror gives `r_S = -1` and `r_P = +1` at
//! normal incidence. For p polarization this is the H-field convention;
//! the matching transmission amplitudes returned by
//! [`ResolvedStack::coefficients`] are therefore H-field amplitudes for P
//! and E-field amplitudes for S, and the power flux weights are
//! `Re(kz)` for S and `Re(kz/eps)` for P.

use num_complex::Complex64;
use thiserror::Error;

use crate::materials::{MaterialError, OpticalMaterial};

#[derive(Debug, Error)]
pub enum StratifiedError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("degenerate interface: vanishing denominator at u = {u}")]
    DegenerateInterface { u: f64 },
    #[error("incidence half-space '{name}' must be lossless (k = 0)")]
    LossyIncidence { name: String },
    #[error("incidence half-space cannot be an ideal mirror")]
    MirrorIncidence,
    #[error("layer thickness must be finite and positive, got {thickness} nm")]
    BadThickness { thickness: f64 },
}

/// Field polarization relative to the plane of incidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    S,
    P,
}

/// A finite-thickness planar layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub material: OpticalMaterial,
    pub thickness_nm: f64,
}

impl Layer {
    pub fn new(material: OpticalMaterial, thickness_nm: f64) -> Result<Self, StratifiedError> {
        if !(thickness_nm.is_finite() && thickness_nm > 0.0) {
            return Err(StratifiedError::BadThickness {
                thickness: thickness_nm,
            });
        }
        Ok(Layer {
            material,
            thickness_nm,
        })
    }
}

/// Ordered planar layers between two half-spaces, seen from the
/// (lossless) incidence side.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub incidence: OpticalMaterial,
    pub layers: Vec<Layer>,
    pub exit: OpticalMaterial,
}

impl LayerStack {
    pub fn new(
        incidence: OpticalMaterial,
        layers: Vec<Layer>,
        exit: OpticalMaterial,
    ) -> Result<Self, StratifiedError> {
        if incidence.is_ideal_mirror() {
            return Err(StratifiedError::MirrorIncidence);
        }
        if !incidence.is_lossless() {
            return Err(StratifiedError::LossyIncidence {
                name: incidence.name.clone(),
            });
        }
        Ok(LayerStack {
            incidence,
            layers,
            exit,
        })
    }

    /// Complex reflection coefficient seen from the incidence half-space.
    pub fn reflection(
        &self,
        pol: Polarization,
        u: f64,
        wavelength_nm: f64,
    ) -> Result<Complex64, StratifiedError> {
        Ok(self.resolve(wavelength_nm)?.reflection(pol, u)?)
    }

    /// Resolve all material indices at one wavelength for fast repeated
    /// evaluation over u.
    pub fn resolve(&self, wavelength_nm: f64) -> Result<ResolvedStack, StratifiedError> {
        let n_in = self.incidence.complex_index(wavelength_nm)?;
        let eps_in = n_in * n_in;
        let k0 = 2.0 * std::f64::consts::PI / wavelength_nm;

        let mut media = Vec::with_capacity(self.layers.len());
        let mut exit = None;
        for layer in &self.layers {
            if layer.material.is_ideal_mirror() {
                // A perfect reflector terminates the stack; anything below
                // it can never be reached.
                exit = Some(ResolvedExit::IdealMirror);
                break;
            }
            media.push(ResolvedLayer {
                eps: layer.material.permittivity(wavelength_nm)?,
                thickness_nm: layer.thickness_nm,
            });
        }
        let exit = match exit {
            Some(e) => e,
            None => {
                if self.exit.is_ideal_mirror() {
                    ResolvedExit::IdealMirror
                } else {
                    ResolvedExit::Medium(self.exit.permittivity(wavelength_nm)?)
                }
            }
        };
        Ok(ResolvedStack {
            k0,
            n_in: n_in.re,
            eps_in: eps_in.re,
            layers: media,
            exit,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct ResolvedLayer {
    eps: Complex64,
    thickness_nm: f64,
}

#[derive(Debug, Clone, Copy)]
enum ResolvedExit {
    Medium(Complex64),
    IdealMirror,
}

/// A stack with all permittivities fixed at one wavelength.
#[derive(Debug, Clone)]
pub struct ResolvedStack {
    k0: f64,
    n_in: f64,
    eps_in: f64,
    layers: Vec<ResolvedLayer>,
    exit: ResolvedExit,
}

impl ResolvedStack {
    pub fn vacuum_wavenumber(&self) -> f64 {
        self.k0
    }

    pub fn incidence_index(&self) -> f64 {
        self.n_in
    }

    /// Exit half-space permittivity, or None for the ideal mirror.
    pub fn exit_permittivity(&self) -> Option<Complex64> {
        match self.exit {
            ResolvedExit::Medium(eps) => Some(eps),
            ResolvedExit::IdealMirror => None,
        }
    }

    pub fn reflection(&self, pol: Polarization, u: f64) -> Result<Complex64, StratifiedError> {
        Ok(self.coefficients(pol, u)?.0)
    }

    /// Total round-trip propagation phase accumulated across the finite
    /// layers at in-plane wavevector u. Used by integrators to choose how
    /// finely an oscillatory u-scan must be seeded.
    pub fn round_trip_phase(&self, u: f64) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                let kz = longitudinal_wavenumber(l.eps, self.k0, u, self.n_in);
                2.0 * kz.re.abs() * l.thickness_nm
            })
            .sum()
    }

    /// Largest round-trip phase variation over `[u_lo, u_hi]`, estimated
    /// from the endpoints and midpoint.
    pub fn phase_span(&self, u_lo: f64, u_hi: f64) -> f64 {
        let samples = [
            self.round_trip_phase(u_lo),
            self.round_trip_phase(0.5 * (u_lo + u_hi)),
            self.round_trip_phase(u_hi),
        ];
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Reflection and transmission amplitudes `(r, t)` seen from the
    /// incidence half-space. `t` maps the incident amplitude at the first
    /// interface to the transmitted amplitude entering the exit half-space
    /// (E-field amplitude for S, H-field amplitude for P); it is 0 for an
    /// ideal mirror.
    pub fn coefficients(
        &self,
        pol: Polarization,
        u: f64,
    ) -> Result<(Complex64, Complex64), StratifiedError> {
        let kz_in = longitudinal_wavenumber(Complex64::new(self.eps_in, 0.0), self.k0, u, self.n_in);

        let kz: Vec<Complex64> = self
            .layers
            .iter()
            .map(|l| longitudinal_wavenumber(l.eps, self.k0, u, self.n_in))
            .collect();

        let (last_kz, last_eps) = match self.layers.last() {
            Some(l) => (kz[kz.len() - 1], l.eps),
            None => (kz_in, Complex64::new(self.eps_in, 0.0)),
        };

        let (mut r, mut t) = match self.exit {
            ResolvedExit::IdealMirror => (perfect_mirror_reflection(pol), Complex64::new(0.0, 0.0)),
            ResolvedExit::Medium(eps_exit) => {
                let kz_exit =
                    longitudinal_wavenumber(eps_exit, self.k0, u, self.n_in);
                let rho = interface_reflection(pol, last_kz, kz_exit, last_eps, eps_exit)
                    .map_err(|_| StratifiedError::DegenerateInterface { u })?;
                (rho, Complex64::new(1.0, 0.0) + rho)
            }
        };

        // Wrap layers from the deepest up to the first interface.
        for j in (0..self.layers.len()).rev() {
            let (upper_kz, upper_eps) = if j == 0 {
                (kz_in, Complex64::new(self.eps_in, 0.0))
            } else {
                (kz[j - 1], self.layers[j - 1].eps)
            };
            let phase = Complex64::new(0.0, 1.0) * kz[j] * self.layers[j].thickness_nm;
            let one_way = phase.exp();
            let round_trip = one_way * one_way;
            let rho = interface_reflection(pol, upper_kz, kz[j], upper_eps, self.layers[j].eps)
                .map_err(|_| StratifiedError::DegenerateInterface { u })?;
            let denom = Complex64::new(1.0, 0.0) + rho * r * round_trip;
            if denom.norm() == 0.0 {
                return Err(StratifiedError::DegenerateInterface { u });
            }
            t = (Complex64::new(1.0, 0.0) + rho) * one_way * t / denom;
            r = (rho + r * round_trip) / denom;
        }
        Ok((r, t))
    }
}

/// Longitudinal wavenumber `kz = k0 sqrt(eps - (n1 u)^2)` with the branch
/// fixed to `Im(kz) >= 0`, and `Re(kz) >= 0` on the real axis.
pub fn longitudinal_wavenumber(permittivity: Complex64, k0: f64, u: f64, n1: f64) -> Complex64 {
    let transverse = n1 * u;
    let arg = permittivity - transverse * transverse;
    let mut root = arg.sqrt();
    if root.im < 0.0 || (root.im == 0.0 && root.re < 0.0) {
        root = -root;
    }
    k0 * root
}

/// Reflection at the ideal mirror in this codebase's convention.
pub fn perfect_mirror_reflection(pol: Polarization) -> Complex64 {
    match pol {
        Polarization::S => Complex64::new(-1.0, 0.0),
        Polarization::P => Complex64::new(1.0, 0.0),
    }
}

/// Single-interface Fresnel reflection from medium 1 into medium 2.
///
/// S: `(kz1 - kz2)/(kz1 + kz2)`; P: `(eps2 kz1 - eps1 kz2)/(eps2 kz1 + eps1 kz2)`.
pub fn interface_reflection(
    pol: Polarization,
    kz1: Complex64,
    kz2: Complex64,
    eps1: Complex64,
    eps2: Complex64,
) -> Result<Complex64, StratifiedError> {
    let (num, den) = match pol {
        Polarization::S => (kz1 - kz2, kz1 + kz2),
        Polarization::P => (eps2 * kz1 - eps1 * kz2, eps2 * kz1 + eps1 * kz2),
    };
    if den.norm() == 0.0 {
        return Err(StratifiedError::DegenerateInterface { u: f64::NAN });
    }
    Ok(num / den)
}
