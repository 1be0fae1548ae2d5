//! Adaptive Gauss–Kronrod quadrature on finite and semi-infinite ranges,
//! plus fixed Gauss–Legendre rules for precomputed mixture tables.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Tolerances and limits shared by every quadrature in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-9,
            abs_floor: 1e-300,
            max_panels: 1 << 14,
        }
    }
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, abs_floor: f64, max_panels: usize) -> Result<Self> {
        let spec = QuadratureSpec {
            rel_tol,
            abs_floor,
            max_panels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_rel_tol(self, rel_tol: f64) -> Self {
        QuadratureSpec { rel_tol, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-3) {
            return Err(Error::domain("rel_tol", self.rel_tol, "(0, 1e-3)"));
        }
        if !(self.abs_floor >= 0.0) {
            return Err(Error::domain("abs_floor", self.abs_floor, "[0, inf)"));
        }
        if self.max_panels == 0 {
            return Err(Error::domain("max_panels", 0.0, "[1, inf)"));
        }
        Ok(())
    }
}

/// Result of a converged quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

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

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_703_699_250,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], ...
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One 21-point Kronrod panel: (integral, error estimate).
pub fn gauss_kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (1.0f64).min((200.0 * err / res_asc).powf(1.5));
    }
    let round = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && round > err {
        err = round;
    }
    (result, err)
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive bisection on `[a, b]`.
///
/// Stops once the summed error estimate falls below
/// `max(rel_tol * |I|, abs_floor, extra_abs)`.
pub fn adaptive<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    adaptive_with_floor(f, a, b, spec, 0.0)
}

pub(crate) fn adaptive_with_floor<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
    extra_abs: f64,
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            panels: 0,
        });
    }
    let (v, e) = gauss_kronrod21(f, a, b);
    let mut total = v;
    let mut total_err = e;
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
    });
    let mut panels = 1;
    loop {
        let tol = (spec.rel_tol * total.abs())
            .max(spec.abs_floor)
            .max(extra_abs);
        if total_err <= tol {
            break;
        }
        if !total.is_finite() {
            return Err(Error::Accuracy {
                estimate: total,
                error_bound: total_err,
            });
        }
        if panels >= spec.max_panels {
            return Err(Error::Accuracy {
                estimate: total,
                error_bound: total_err,
            });
        }
        let seg = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) {
            // Interval cannot be split further in floating point.
            return Err(Error::Accuracy {
                estimate: total,
                error_bound: total_err,
            });
        }
        let (v1, e1) = gauss_kronrod21(f, seg.a, mid);
        let (v2, e2) = gauss_kronrod21(f, mid, seg.b);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
        panels += 1;
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let mut value = 0.0;
    let mut error = 0.0;
    for s in heap.iter() {
        value += s.value;
        error += s.error;
    }
    Ok(Estimate {
        value,
        error,
        panels,
    })
}

/// Adaptive quadrature over a list of consecutive breakpoints.
pub fn adaptive_pieces<F: FnMut(f64) -> f64>(
    f: &mut F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    adaptive_pieces_with_floor(f, points, spec, 0.0)
}

/// As [`adaptive_pieces`]; every piece may stop once its error is below a
/// share of the rough total, so pieces that are tiny compared with the
/// whole do not have to be resolved to their own relative tolerance.
pub(crate) fn adaptive_pieces_with_floor<F: FnMut(f64) -> f64>(
    f: &mut F,
    points: &[f64],
    spec: &QuadratureSpec,
    extra_abs: f64,
) -> Result<Estimate> {
    let mut out = Estimate {
        value: 0.0,
        error: 0.0,
        panels: 0,
    };
    let pieces = points.len().saturating_sub(1).max(1) as f64;
    let rough: f64 = points
        .windows(2)
        .map(|w| gauss_kronrod21(f, w[0], w[1]).0.abs())
        .sum();
    let floor = (spec.rel_tol * rough / pieces).max(extra_abs);
    for w in points.windows(2) {
        let e = adaptive_with_floor(f, w[0], w[1], spec, floor)?;
        out.value += e.value;
        out.error += e.error;
        out.panels += e.panels;
    }
    Ok(out)
}

/// `∫_a^∞ f` by panels of geometrically growing width starting at `width`.
///
/// Exits once two consecutive panels each contribute less than
/// `rel_tol` times the accumulated value.
pub fn semi_infinite<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    width: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    semi_infinite_with_floor(f, a, width, spec, 0.0)
}

pub(crate) fn semi_infinite_with_floor<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    width: f64,
    spec: &QuadratureSpec,
    extra_abs: f64,
) -> Result<Estimate> {
    const MAX_GEOMETRIC: usize = 400;
    let mut lo = a;
    let mut w = width;
    let mut out = Estimate {
        value: 0.0,
        error: 0.0,
        panels: 0,
    };
    let mut quiet = 0;
    for step in 0..MAX_GEOMETRIC {
        let hi = lo + w;
        if !hi.is_finite() {
            break;
        }
        let floor = (spec.rel_tol * out.value.abs() * 0.1).max(extra_abs);
        let e = adaptive_with_floor(f, lo, hi, spec, floor)?;
        out.value += e.value;
        out.error += e.error;
        out.panels += e.panels;
        if out.panels > spec.max_panels {
            return Err(Error::Accuracy {
                estimate: out.value,
                error_bound: out.error,
            });
        }
        let small = if out.value == 0.0 {
            step > 60
        } else {
            e.value.abs() <= spec.rel_tol * out.value.abs() || e.value.abs() <= extra_abs
        };
        if small {
            quiet += 1;
            if quiet >= 2 {
                return Ok(out);
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        w *= 2.0;
    }
    Err(Error::Accuracy {
        estimate: out.value,
        error_bound: out.error.max(out.value.abs()),
    })
}

/// `∫_{-∞}^{∞} f` split at sorted `breaks`, with tails growing from `width`.
pub fn whole_line<F: FnMut(f64) -> f64>(
    f: &mut F,
    breaks: &[f64],
    width: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    let (lo, hi) = match (breaks.first(), breaks.last()) {
        (Some(&l), Some(&h)) => (l, h),
        _ => (0.0, 0.0),
    };
    let mut inner = if breaks.len() > 1 {
        adaptive_pieces(f, breaks, spec)?
    } else {
        Estimate {
            value: 0.0,
            error: 0.0,
            panels: 0,
        }
    };
    let right = semi_infinite(f, hi, width, spec)?;
    let mut g = |x: f64| f(-x);
    let left = semi_infinite(&mut g, -lo, width, spec)?;
    inner.value += right.value + left.value;
    inner.error += right.error + left.error;
    inner.panels += right.panels + left.panels;
    Ok(inner)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((-x, w));
        if 2 * i + 1 != n {
            out.push((x, w));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
