//! Adaptive one-dimensional quadrature on finite intervals.
//!
//! Globally adaptive bisection driven by a 21-point Gauss–Kronrod rule
//! (10-point Gauss embedded), the classic QUADPACK scheme. The interval
//! with the largest error estimate is split until the summed estimate
//! meets the requested tolerance. Integrands here are smooth except for
//! oscillation (mirror phases) and isolated sharp features (surface-wave
//! resonances), which is exactly what this rule is good at.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Quadrature failure: the tolerance could not be met or the integrand
/// produced a non-finite value.
#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature did not reach tolerance {requested:e} within {max_intervals} intervals (error estimate {achieved:e})")]
    ToleranceNotMet {
        requested: f64,
        achieved: f64,
        max_intervals: usize,
    },
    #[error("integrand returned a non-finite value near x = {x}")]
    NonFiniteIntegrand { x: f64 },
    #[error("invalid integration interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Conservative absolute error estimate.
    pub error: f64,
    pub evaluations: usize,
}

/// Tolerances and limits for one adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
    /// Number of equal panels seeded before refinement. A rapidly
    /// oscillating integrand must start with panels no wider than about
    /// one half-period: a single panel spanning many cycles can fool the
    /// Gauss-vs-Kronrod error estimate into accidental agreement.
    pub initial_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_intervals: 4096,
            initial_intervals: 1,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadConfig {
            rel_tol,
            ..Self::default()
        }
    }

    /// Same tolerances with enough seed panels to keep each initial
    /// panel under ~2 radians of the given total phase span.
    pub fn seeded_for_phase_span(&self, phase_span: f64) -> Self {
        let panels = (phase_span.abs() / 2.0).ceil() as usize + 1;
        QuadConfig {
            initial_intervals: panels.clamp(1, self.max_intervals / 4).max(1),
            ..*self
        }
    }
}

// Kronrod abscissae for the 21-point rule (positive half, descending),
// QUADPACK dqk21 values.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

// Kronrod weights matching XGK.
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Weights of the embedded 10-point Gauss rule (applied at XGK[1,3,5,7,9]).
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One Gauss–Kronrod pass over [a, b]. Returns (integral, error estimate).
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(centre);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFiniteIntegrand { x: centre });
    }

    let mut resk = WGK[10] * fc;
    let mut resg = 0.0;
    let mut resabs = WGK[10] * fc.abs();
    let mut fv = [0.0f64; 21];
    fv[20] = fc;

    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = f(centre - x);
        let f2 = f(centre + x);
        if !f1.is_finite() {
            return Err(QuadratureError::NonFiniteIntegrand { x: centre - x });
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFiniteIntegrand { x: centre + x });
        }
        fv[j] = f1;
        fv[10 + j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }

    let reskh = resk * 0.5;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv[j] - reskh).abs() + (fv[10 + j] - reskh).abs());
    }

    let result = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (1.0f64).min((200.0 * err / resasc).powf(1.5));
    }
    let uflow_guard = f64::MIN_POSITIVE / (50.0 * f64::EPSILON);
    if resabs > uflow_guard {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((result, err))
}

/// Composite trapezoid over sampled data. Panics if the lengths differ;
/// returns 0 for fewer than two samples.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "trapezoid needs matching sample lists");
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

#[derive(Debug)]
struct Interval {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    seq: usize,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.seq == other.seq
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest error first; the sequence number breaks ties so the heap
        // order (and therefore the refinement history) is deterministic.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Integrate `f` over [a, b] to the requested tolerance.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult, QuadratureError> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadratureError::BadInterval { a, b });
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }

    let seeds = cfg.initial_intervals.clamp(1, cfg.max_intervals).min(
        // Never seed below floating-point resolution.
        (((b - a) / (f64::EPSILON * (a.abs() + b.abs() + 1.0))) as usize).max(1),
    );
    let mut evaluations = 0;
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let mut total_value = 0.0;
    let mut total_error = 0.0;
    let width = (b - a) / seeds as f64;
    for i in 0..seeds {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == seeds { b } else { a + (i + 1) as f64 * width };
        let (v, e) = gk21(&f, lo, hi)?;
        evaluations += 21;
        total_value += v;
        total_error += e;
        heap.push(Interval {
            a: lo,
            b: hi,
            value: v,
            error: e,
            seq,
        });
        seq += 1;
    }

    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total_value.abs());
        if total_error <= tol {
            break;
        }
        if heap.len() >= cfg.max_intervals {
            return Err(QuadratureError::ToleranceNotMet {
                requested: tol,
                achieved: total_error,
                max_intervals: cfg.max_intervals,
            });
        }
        let worst = heap.pop().expect("heap cannot be empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at floating-point resolution; cannot refine further.
            return Err(QuadratureError::ToleranceNotMet {
                requested: tol,
                achieved: total_error,
                max_intervals: cfg.max_intervals,
            });
        }
        let (lv, le) = gk21(&f, worst.a, mid)?;
        let (rv, re) = gk21(&f, mid, worst.b)?;
        evaluations += 42;
        total_value += lv + rv - worst.value;
        total_error += le + re - worst.error;
        seq += 1;
        heap.push(Interval {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
            seq,
        });
        seq += 1;
        heap.push(Interval {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
            seq,
        });
    }

    // Recompute the total in a position-ordered pass; the incremental sum
    // above accumulates cancellation noise over many refinements.
    let mut parts: Vec<(f64, f64, f64)> = heap.iter().map(|iv| (iv.a, iv.value, iv.error)).collect();
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let value = parts.iter().map(|p| p.1).sum();
    let error = parts.iter().map(|p| p.2).sum();

    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x * x, 0.0, 1.0, &QuadConfig::default()).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-14, "got {}", r.value);
        assert_eq!(r.evaluations, 21);
    }

    #[test]
    fn sine_over_half_period() {
        let r = integrate(f64::sin, 0.0, std::f64::consts::PI, &QuadConfig::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_integrand_converges() {
        // 100 half-periods; exact value 0, so the relative tolerance has
        // no scale to bite on and the absolute one decides.
        let r = integrate(
            |x| (50.0 * x).sin(),
            0.0,
            4.0 * std::f64::consts::PI,
            &QuadConfig {
                rel_tol: 1e-8,
                abs_tol: 1e-10,
                max_intervals: 4096,
                initial_intervals: 1,
            },
        )
        .unwrap();
        assert!(r.value.abs() < 1e-10, "got {}", r.value);
    }

    #[test]
    fn endpoint_square_root_feature() {
        // d/dx of asin: integrable without ever sampling the endpoints since
        // Kronrod nodes are interior.
        let r = integrate(
            |x| 1.0 / (1.0 - x * x).sqrt(),
            0.0,
            1.0 - 1e-12,
            &QuadConfig {
                rel_tol: 1e-9,
                abs_tol: 0.0,
                max_intervals: 10_000,
                initial_intervals: 1,
            },
        )
        .unwrap();
        assert!((r.value - std::f64::consts::FRAC_PI_2).abs() < 1e-5);
    }

    #[test]
    fn empty_interval_is_zero() {
        let r = integrate(|x| x, 2.0, 2.0, &QuadConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let err = integrate(|x| 1.0 / x, -1.0, 1.0, &QuadConfig::default());
        assert!(matches!(
            err,
            Err(QuadratureError::NonFiniteIntegrand { .. })
                | Err(QuadratureError::ToleranceNotMet { .. })
        ));
    }

    #[test]
    fn budget_exhaustion_reported() {
        let err = integrate(
            |x| (1e6 * x).sin(),
            0.0,
            1.0,
            &QuadConfig {
                rel_tol: 1e-12,
                abs_tol: 0.0,
                max_intervals: 8,
                initial_intervals: 1,
            },
        );
        assert!(matches!(err, Err(QuadratureError::ToleranceNotMet { .. })));
    }
}
