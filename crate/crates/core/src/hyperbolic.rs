//! The Poisson semigroup on H³: bound and asymptotic shapes, the critical
//! region, Busemann and quotient estimates, spherical transforms and the
//! radial/non-radial L¹ dichotomy.
//!
//! Curvature is -1, so ρ = 1, m_α = 2, m_{2α} = 0 and n = 3.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

#[allow(unused_imports)]
use num_traits::Float;

use crate::convergence::{ExperimentReport, InitialDatum};
use crate::error::{Error, Result};
use crate::manifolds::{busemann, ln_sinh, ln_sinh_shift, offset_distance, polar, ManifoldModel, Point};
use crate::quad::{self, QuadratureSpec};
use crate::special_fn::ln_gamma_pos;
use crate::subordination::{ln_poisson_h3, ln_poisson_h3_shift, ln_poisson_h3_weighted};

/// The annulus t^{2-ε} ≤ d(x, o) ≤ t^{2+ε}.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CriticalRegion {
    pub t: f64,
    pub epsilon: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl CriticalRegion {
    pub fn new(t: f64, epsilon: f64) -> Result<Self> {
        if !(t > 1.0) || !t.is_finite() {
            return Err(Error::domain("t", t, "(1, inf)"));
        }
        if !(epsilon > 0.0 && epsilon < 2.0) {
            return Err(Error::domain("epsilon", epsilon, "(0,2)"));
        }
        Ok(CriticalRegion {
            t,
            epsilon,
            r_min: t.powf(2.0 - epsilon),
            r_max: t.powf(2.0 + epsilon),
        })
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.r_min && r <= self.r_max
    }

    /// `n` log-spaced radii spanning the region.
    pub fn log_grid(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.r_min.ln(), self.r_max.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n.max(2) - 1) as f64).exp())
            .collect()
    }
}

fn check_h3(m: &ManifoldModel) -> Result<()> {
    if !m.is_hyperbolic() {
        return Err(Error::Unsupported("this operation is specific to H³"));
    }
    Ok(())
}

/// γ(s) = Γ(s + m_α/2) Γ(s/2 + ρ/2) / (Γ(s + 1) Γ(s/2 + m_α/4)).
pub fn gamma_ratio(s: f64, m: &ManifoldModel) -> Result<f64> {
    check_h3(m)?;
    if !(s >= 0.0) {
        return Err(Error::domain("s", s, "[0, inf)"));
    }
    let ma = m.m_alpha as f64;
    let ln = (ln_gamma_pos(s + 0.5 * ma) - ln_gamma_pos(s + 1.0))
        + (ln_gamma_pos(0.5 * s + 0.5 * m.rho) - ln_gamma_pos(0.5 * s + 0.25 * ma));
    Ok(ln.exp())
}

/// ln of t(1 + r)(t² + r²)^{-5/4} e^{-r-√(t²+r²)}.
pub fn ln_bound_shape(t: f64, r: f64) -> f64 {
    let z = t.hypot(r);
    t.ln() + r.ln_1p() - 1.25 * (z * z).ln() - r - z
}

/// p_t(r) divided by the two-sided bound shape.
pub fn bound_shape_ratio(t: f64, r: f64) -> f64 {
    (ln_poisson_h3(t, r) - ln_bound_shape(t, r)).exp()
}

/// p_t(r) / [γ · t r (t² + r²)^{-5/4} e^{-r-√(t²+r²)}], with γ ≡ 1 on H³.
pub fn asymptotic_shape_ratio(t: f64, r: f64) -> f64 {
    let z = t.hypot(r);
    let ln_shape = t.ln() + r.ln() - 1.25 * (z * z).ln() - r - z;
    (ln_poisson_h3(t, r) - ln_shape).exp()
}

/// Limit of [`asymptotic_shape_ratio`] implied by the Bessel closed form.
pub fn asymptotic_constant_closed() -> f64 {
    1.0 / (2f64.sqrt() * PI.powf(1.5))
}

/// Prefactor 2^{m_{2α}} π^{-n/2} ρ^{3/2} of the published asymptotic display.
pub fn asymptotic_constant_published() -> f64 {
    PI.powf(-1.5)
}

/// (r + s) / (√(t² + r²) + √(t² + s²)).
pub fn exp_factor_ratio(t: f64, r: f64, s: f64) -> f64 {
    (r + s) / (t.hypot(r) + t.hypot(s))
}

/// Masses of p_t below, inside and above the critical region.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionMass {
    pub inside: f64,
    pub below: f64,
    pub above: f64,
}

impl RegionMass {
    pub fn total(&self) -> f64 {
        self.inside + self.below + self.above
    }
}

fn geometric_breaks(a: f64, b: f64, ratio: f64) -> Vec<f64> {
    let mut v = alloc::vec![a];
    let mut x = if a > 0.0 { a * ratio } else { 1.0 };
    while x < b {
        if x > a {
            v.push(x);
        }
        x *= ratio;
    }
    v.push(b);
    v
}

pub fn critical_region_mass(t: f64, epsilon: f64, spec: &QuadratureSpec) -> Result<RegionMass> {
    if !(t >= 2.0) {
        return Err(Error::domain("t", t, "[2, inf)"));
    }
    let region = CriticalRegion::new(t, epsilon)?;
    spec.validate()?;
    let mut f = |r: f64| {
        if r == 0.0 {
            0.0
        } else {
            ln_poisson_h3_weighted(t, r).exp()
        }
    };
    let mut below_pts = geometric_breaks(0.0, region.r_min, 4.0);
    below_pts.insert(1, region.r_min.min(1.0) * 0.5);
    below_pts.dedup();
    let below = quad::adaptive_pieces(&mut f, &below_pts, spec)?.value;
    let inside_pts = geometric_breaks(region.r_min, region.r_max, 4.0);
    let inside = quad::adaptive_pieces(&mut f, &inside_pts, spec)?.value;
    let above = quad::semi_infinite(&mut f, region.r_max, region.r_max, spec)?.value;
    Ok(RegionMass {
        inside,
        below,
        above,
    })
}

fn unit(b: [f64; 3]) -> Result<[f64; 3]> {
    let n = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::domain("direction norm", n, "(0, inf)"));
    }
    Ok([b[0] / n, b[1] / n, b[2] / n])
}

fn cos_to(y: &Point, b: [f64; 3]) -> (f64, f64) {
    let (rho, dir) = polar(y);
    (rho, dir[0] * b[0] + dir[1] * b[1] + dir[2] * b[2])
}

/// (d(x, o) − d(x, y)) − τ_b(y) for x at distance r = t² towards b.
///
/// Evaluated through e^{d-r}(1 + e^{-2d}) = C − S + e^{-2r}(C + S), with
/// C = cosh ρ and S = sinh ρ cos∠(y, b), so that the result keeps full
/// relative accuracy however small it is.
pub fn busemann_gap(t: f64, epsilon: f64, y: &Point, b: [f64; 3]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain("t", t, "(0, inf)"));
    }
    if !(epsilon > 0.0 && epsilon < 2.0) {
        return Err(Error::domain("epsilon", epsilon, "(0,2)"));
    }
    let b = unit(b)?;
    ManifoldModel::hyperbolic3().check_point(y)?;
    let (rho, cosang) = cos_to(y, b);
    if rho == 0.0 {
        return Ok(0.0);
    }
    let r = t * t;
    let (c, s) = (rho.cosh(), rho.sinh() * cosang);
    let eps = (-2.0 * r).exp();
    let d = r + offset_distance(r, rho, cosang);
    Ok(-(eps * (c + s) / (c - s)).ln_1p() + (-2.0 * d).exp().ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuotientSample {
    pub measured: f64,
    pub predicted: f64,
    /// Set when either kernel value is not representable; the sample should
    /// be skipped.
    pub underflow: bool,
}

/// p_t(x, y)/p_t(x, o) against e^{2τ_b(y)} for x at distance r towards b.
pub fn kernel_quotient(t: f64, r: f64, y: &Point, b: [f64; 3]) -> Result<QuotientSample> {
    if !(t > 0.0) {
        return Err(Error::domain("t", t, "(0, inf)"));
    }
    if !(r > 0.0) {
        return Err(Error::domain("r", r, "(0, inf)"));
    }
    let b = unit(b)?;
    let predicted = (2.0 * busemann(y, b)?).exp();
    let (rho, cosang) = cos_to(y, b);
    if rho == 0.0 {
        return Ok(QuotientSample {
            measured: 1.0,
            predicted: 1.0,
            underflow: false,
        });
    }
    let delta = offset_distance(r, rho, cosang);
    let underflow = ln_poisson_h3(t, r + delta).exp() == 0.0 || ln_poisson_h3(t, r).exp() == 0.0;
    Ok(QuotientSample {
        measured: ln_poisson_h3_shift(t, r, delta).exp(),
        predicted,
        underflow,
    })
}

/// Ball-model radius tanh(ρ/2) of a point at hyperbolic distance ρ.
fn ball_radius(y: &Point) -> Result<f64> {
    ManifoldModel::hyperbolic3().check_point(y)?;
    Ok(y.norm())
}

// e^{2τ_b(y)} with a = |y| and u = cos∠(y, b).
fn boundary_poisson(a: f64, u: f64) -> f64 {
    let q = (1.0 - a * a) / (1.0 + a * a - 2.0 * a * u);
    q * q
}

/// (1/4π) ∫_{S²} |e^{2τ_b(y)} − 1| dσ(b), reduced to the polar angle.
pub fn deficiency(y: &Point, spec: &QuadratureSpec) -> Result<f64> {
    let a = ball_radius(y)?;
    if a == 0.0 {
        return Ok(0.0);
    }
    let mut f = |u: f64| (boundary_poisson(a, u) - 1.0).abs();
    // the integrand changes sign at u = a
    Ok(0.5 * quad::adaptive_pieces(&mut f, &[-1.0, a, 1.0], spec)?.value)
}

/// (1/4π) ∫_{S²} e^{2τ_b(y)} dσ(b); equal to 1 for every y.
pub fn boundary_mean(y: &Point, spec: &QuadratureSpec) -> Result<f64> {
    let a = ball_radius(y)?;
    let mut f = |u: f64| boundary_poisson(a, u);
    Ok(0.5 * quad::adaptive_pieces(&mut f, &[-1.0, a, 1.0], spec)?.value)
}

/// `n` nearly uniform unit vectors (Fibonacci lattice).
pub fn sphere_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rad = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [rad * phi.cos(), rad * phi.sin(), z]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralParam {
    /// φ_λ(r) = sin(λr)/(λ sinh r)
    Real(f64),
    /// λ = iμ: φ(r) = sinh(μr)/(μ sinh r); μ = ±ρ gives φ ≡ 1.
    Imaginary(f64),
}

/// Spherical function φ_λ(r) on H³.
pub fn spherical_function(lambda: SpectralParam, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let ratio = |num: f64, l: f64| num / (l * r.sinh());
    match lambda {
        SpectralParam::Real(l) if l != 0.0 => ratio((l * r).sin(), l),
        SpectralParam::Imaginary(m) if m != 0.0 => {
            if m.abs() == 1.0 {
                1.0
            } else {
                ratio((m * r).sinh(), m)
            }
        }
        _ => r / r.sinh(),
    }
}

/// ∫ f(r) φ_λ(r) 4π sinh² r dr for radial data about the origin.
pub fn spherical_transform_h3(f: &InitialDatum, lambda: SpectralParam) -> Result<f64> {
    check_h3(f.model())?;
    if !f.is_radial() {
        return Err(Error::Unsupported("the spherical transform needs radial data"));
    }
    let mut v: f64 = f.masses().iter().map(|m| m.weight).sum();
    if let Some(b) = f.bump() {
        let spec = QuadratureSpec::default().with_rel_tol(1e-12);
        let mut g = |r: f64| {
            if r == 0.0 {
                0.0
            } else {
                b.at(r) * spherical_function(lambda, r) * f.model().ln_density(r).exp()
            }
        };
        // one piece per half wave of φ_λ
        let waves = match lambda {
            SpectralParam::Real(l) => (l.abs() * b.radius / PI).ceil() as usize,
            SpectralParam::Imaginary(_) => 1,
        };
        let n = 4 * waves.max(1);
        let pts: Vec<f64> = (0..=n).map(|i| b.radius * i as f64 / n as f64).collect();
        v += quad::adaptive_pieces(&mut g, &pts, &spec)?.value;
    }
    Ok(v)
}

// Masses arranged on one line through the origin.
struct AxialData {
    /// (weight, distance from o, +1 along the axis or -1 against it)
    masses: Vec<(f64, f64, f64)>,
}

fn axial_data(f: &InitialDatum) -> Result<AxialData> {
    if let Some(b) = f.bump() {
        if b.center.norm() != 0.0 {
            return Err(Error::Unsupported("off-centre bumps on H³ have no axial symmetry"));
        }
    }
    let mut axis: Option<[f64; 3]> = None;
    let mut masses = Vec::new();
    for m in f.masses() {
        let (rho, dir) = polar(&m.location);
        if rho == 0.0 {
            masses.push((m.weight, 0.0, 1.0));
            continue;
        }
        let sign = match axis {
            None => {
                axis = Some(dir);
                1.0
            }
            Some(a) => {
                let c = a[0] * dir[0] + a[1] * dir[1] + a[2] * dir[2];
                if (c.abs() - 1.0).abs() > 1e-12 {
                    return Err(Error::Unsupported(
                        "L¹ gaps on H³ need the point masses on one line through the origin",
                    ));
                }
                c.signum()
            }
        };
        masses.push((m.weight, rho, sign));
    }
    Ok(AxialData { masses })
}

/// (1/ p_t(r)) × spherical average of p_t(d(x, ·)) over |y| = s, |x| = r.
fn sphere_ratio(t: f64, r: f64, s: f64, spec: &QuadratureSpec) -> Result<f64> {
    if s == 0.0 {
        return Ok(1.0);
    }
    if r == 0.0 {
        return Ok(ln_poisson_h3_shift(t, 0.0, s).exp());
    }
    // integrate in δ = d − r so that large r loses nothing
    let norm = LN_2 + ln_sinh(s);
    let mut f = |delta: f64| {
        (ln_poisson_h3_shift(t, r, delta) + ln_sinh_shift(r, delta) - norm).exp()
    };
    let lower = if r >= s { -s } else { s - 2.0 * r };
    Ok(quad::adaptive(&mut f, lower, s, spec)?.value)
}

/// ‖e^{-t√-Δ} f − M p_t(·, o)‖_{L¹(H³)} for data with axial symmetry.
pub fn l1_gap(f: &InitialDatum, t: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_h3(f.model())?;
    if !(t > 0.0) {
        return Err(Error::domain("t", t, "(0, inf)"));
    }
    spec.validate()?;
    let data = axial_data(f)?;
    let mass = f.mass();
    if f.bump().is_none() && data.masses.iter().all(|m| m.1 == 0.0) {
        return Ok(0.0);
    }
    let inner_spec = spec.with_rel_tol(1e-10);
    let outer_spec = spec.with_rel_tol(spec.rel_tol.max(1e-7));
    let off_axis: Vec<(f64, f64, f64)> =
        data.masses.iter().cloned().filter(|m| m.1 > 0.0).collect();
    let at_origin: f64 = data.masses.iter().filter(|m| m.1 == 0.0).map(|m| m.0).sum();
    let mut failure: Option<Error> = None;

    // (𝒦_t f − M p_t)(x)/p_t(r) for x = (r, u)
    let mut inner = |r: f64| -> f64 {
        let mut radial = at_origin - mass;
        if let Some(b) = f.bump() {
            let mut g = |s: f64| {
                if s == 0.0 {
                    return 0.0;
                }
                match sphere_ratio(t, r, s, &inner_spec) {
                    Ok(q) => b.at(s) * q * 4.0 * PI * (2.0 * ln_sinh(s)).exp(),
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            };
            let pts: Vec<f64> = if r > 0.0 && r < b.radius {
                alloc::vec![0.0, r, b.radius]
            } else {
                alloc::vec![0.0, b.radius]
            };
            match quad::adaptive_pieces(&mut g, &pts, &inner_spec) {
                Ok(e) => radial += e.value,
                Err(e) => failure = Some(e),
            }
        }
        if off_axis.is_empty() {
            return radial.abs();
        }
        let bracket = |u: f64| {
            let mut v = radial;
            for &(w, rho, sign) in &off_axis {
                let delta = offset_distance(r, rho, sign * u);
                v += w * ln_poisson_h3_shift(t, r, delta).exp();
            }
            v
        };
        // split at the sign changes of the bracket
        let mut pts = alloc::vec![-1.0];
        const SCAN: usize = 48;
        let mut prev = bracket(-1.0);
        for i in 1..=SCAN {
            let u = -1.0 + 2.0 * i as f64 / SCAN as f64;
            let cur = bracket(u);
            if prev.signum() != cur.signum() && prev != 0.0 && cur != 0.0 {
                let (mut lo, mut hi) = (u - 2.0 / SCAN as f64, u);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if bracket(mid).signum() == prev.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                pts.push(0.5 * (lo + hi));
            }
            prev = cur;
        }
        pts.push(1.0);
        let mut g = |u: f64| bracket(u).abs();
        match quad::adaptive_pieces(&mut g, &pts, &inner_spec) {
            Ok(e) => 0.5 * e.value,
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    let mut outer = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let w = ln_poisson_h3_weighted(t, r).exp();
        if w == 0.0 {
            0.0
        } else {
            w * inner(r)
        }
    };
    let mut marks: Vec<f64> = data.masses.iter().map(|m| m.1).filter(|&r| r > 0.0).collect();
    if let Some(b) = f.bump() {
        marks.push(b.radius);
    }
    marks.extend([t.max(1.0), t * t]);
    marks.sort_by(|a, b| a.total_cmp(b));
    marks.dedup();
    let mut pts = alloc::vec![0.0];
    for m in marks {
        let last = *pts.last().unwrap_or(&0.0);
        pts.extend(geometric_breaks(last, m, 4.0).into_iter().skip(1));
    }
    pts.dedup();
    let top = *pts.last().unwrap_or(&1.0);
    let mid = quad::adaptive_pieces(&mut outer, &pts, &outer_spec)?.value;
    let tail = quad::semi_infinite(&mut outer, top, top, &outer_spec)?.value;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(mid + tail)
}

/// L¹ gaps over a time list, with the dichotomy flags filled in.
pub fn l1_gap_trajectory(
    f: &InitialDatum,
    times: &[f64],
    spec: &QuadratureSpec,
) -> Result<ExperimentReport> {
    check_h3(f.model())?;
    if f.support_radius(&Point::origin(3))? > 2.0 {
        return Err(Error::Unsupported("data must lie within distance 2 of the origin"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("times", 0.0, "a strictly increasing list"));
    }
    let mut rep = ExperimentReport {
        family: "hyp-poisson".to_string(),
        ..Default::default()
    };
    rep.params.insert("mass".to_string(), f.mass());
    for &t in times {
        rep.times.push(t);
        rep.l1_values.push(l1_gap(f, t, spec)?);
        rep.weighted_sup_values.push(None);
    }
    rep.note("weighted sup distances are not part of the H³ statement");
    let last = rep.l1_values.last().copied().unwrap_or(0.0);
    if f.is_radial() {
        let first = rep.l1_values.first().copied().unwrap_or(0.0);
        let decreasing = rep.l1_values.windows(2).all(|w| w[1] <= w[0]);
        rep.flags.insert("decreasing".to_string(), decreasing);
        rep.flags.insert("final_le_quarter_initial".to_string(), last <= 0.25 * first);
    } else if let [m] = f.masses() {
        if f.bump().is_none() {
            let def = deficiency(&m.location, spec)? * m.weight.abs();
            rep.params.insert("deficiency".to_string(), def);
            let stays = rep
                .times
                .iter()
                .zip(&rep.l1_values)
                .filter(|(t, _)| **t >= 10.0)
                .all(|(_, v)| *v >= 0.5 * def);
            rep.flags.insert("stays_above_half_deficiency".to_string(), stays);
            rep.flags.insert(
                "final_within_15pct_of_deficiency".to_string(),
                ((last - def) / def).abs() <= 0.15,
            );
        }
    }
    rep.fit_l1();
    Ok(rep)
}
