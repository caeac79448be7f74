//! Classical-dipole emission near planar stratified media.
//!
//! Models an ensemble of point dipoles buried a few nanometres below the
//! surface of a high-index host (diamond) facing an adjustable planar
//! mirror across an air gap. Provides:
//!
//! - [`materials`]: constant and tabulated complex refractive indices
//!   with CSV ingestion and linear interpolation;
//! - [`stratified`]: s/p reflection and transmission of planar layer
//!   stacks at arbitrary, including evanescent, in-plane wavevectors;
//! - [`dipole`]: normalized decay rates (Purcell factors), far-field
//!   angular power densities, and dipole-orientation averaging;
//! - [`collection`]: NA-limited collected power, mirror-distance versus
//!   wavelength enhancement maps, and the pump standing-wave diagnostic;
//! - [`pipeline`]: measured-spectra ingestion, unit-counts
//!   normalization, fringe detection, and minimum-gap estimation;
//! - [`quadrature`]: the adaptive Gauss-Kronrod integrator driving all
//!   of the above.
//!
//! All quantities are normalized to the bulk-host emission rate, so a
//! homogeneous environment yields decay rates of exactly 1 and an
//! absent mirror yields enhancement 1.

pub mod collection;
pub mod dipole;
pub mod materials;
pub mod pipeline;
pub mod quadrature;
pub mod stratified;

pub use collection::{
    collected_power, enhancement, enhancement_map, normalized_model_enhancement, pump_modulation,
    CollectionError, CollectionGeometry, EnhancementMap, MapMetadata, NormalizationMode,
};
pub use dipole::{
    angular_pattern, decay_rate_parallel, decay_rate_perpendicular, orientation_weights,
    total_decay, AngularPattern, DecayRates, DipoleError, EmitterEnvironment, GapTemplate,
    OrientationWeights, PatternDensities,
};
pub use materials::{
    load_dispersion_table, DispersionRow, DispersionTable, IndexModel, MaterialError,
    OpticalMaterial,
};
pub use pipeline::{
    enhancement_from_scan, estimate_d0, fringe_maxima, normalize_spectrum, D0Estimate,
    PipelineError, ScanDataset, SpectrumRecord,
};
pub use quadrature::{QuadConfig, QuadratureError};
pub use stratified::{
    interface_reflection, longitudinal_wavenumber, Layer, LayerStack, Polarization, ResolvedStack,
    StratifiedError,
};
