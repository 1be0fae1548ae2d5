//! Long-time convergence of 𝒦_t f towards M ψ_t(·, x₀): operator
//! application, L¹ and weighted sup distances, class 𝒫_γ checks, rate fits
//! and the prescribed-rate construction.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::hyperbolic;
use crate::manifolds::{ln_sinh, ManifoldModel, ModelKind, Point};
use crate::quad::{self, QuadratureSpec};
use crate::subordination::{FamilyId, Kernel, KernelFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Profile {
    Indicator,
    /// height · (1 + cos(π s / R)) / 2
    CosineTaper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bump {
    pub radius: f64,
    pub height: f64,
    pub center: Point,
    pub profile: Profile,
}

impl Bump {
    /// Profile value at distance `s` from the centre.
    pub fn at(&self, s: f64) -> f64 {
        if s > self.radius {
            return 0.0;
        }
        match self.profile {
            Profile::Indicator => self.height,
            Profile::CosineTaper => 0.5 * self.height * (1.0 + (PI * s / self.radius).cos()),
        }
    }

    fn integral(&self, model: &ManifoldModel) -> Result<f64> {
        match self.profile {
            Profile::Indicator => Ok(self.height * model.volume(self.radius)),
            Profile::CosineTaper => {
                let spec = QuadratureSpec::default().with_rel_tol(1e-13);
                let mut f = |s: f64| {
                    if s == 0.0 {
                        0.0
                    } else {
                        self.at(s) * model.ln_density(s).exp()
                    }
                };
                Ok(quad::adaptive(&mut f, 0.0, self.radius, &spec)?.value)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointMass {
    pub weight: f64,
    pub location: Point,
}

/// Point masses plus an optional radial bump; M is fixed at construction.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitialDatum {
    masses: Vec<PointMass>,
    bump: Option<Bump>,
    mass: f64,
    model: ManifoldModel,
}

impl InitialDatum {
    pub fn new(model: ManifoldModel, masses: Vec<PointMass>, bump: Option<Bump>) -> Result<Self> {
        if masses.is_empty() && bump.is_none() {
            return Err(Error::Unsupported("initial datum needs a point mass or a bump"));
        }
        for m in &masses {
            model.check_point(&m.location)?;
            if !m.weight.is_finite() {
                return Err(Error::domain("weight", m.weight, "a finite real"));
            }
        }
        let mut mass: f64 = masses.iter().map(|m| m.weight).sum();
        if let Some(b) = &bump {
            model.check_point(&b.center)?;
            if !(b.radius > 0.0) {
                return Err(Error::domain("bump radius", b.radius, "(0, inf)"));
            }
            mass += b.integral(&model)?;
        }
        Ok(InitialDatum {
            masses,
            bump,
            mass,
            model,
        })
    }

    pub fn dirac(model: ManifoldModel, location: Point, weight: f64) -> Result<Self> {
        Self::new(model, alloc::vec![PointMass { weight, location }], None)
    }

    /// Bump about the origin scaled to carry `mass`.
    pub fn radial_bump(
        model: ManifoldModel,
        radius: f64,
        profile: Profile,
        mass: f64,
    ) -> Result<Self> {
        let mut b = Bump {
            radius,
            height: 1.0,
            center: Point::origin(model.dim),
            profile,
        };
        if !(radius > 0.0) {
            return Err(Error::domain("bump radius", radius, "(0, inf)"));
        }
        b.height = mass / b.integral(&model)?;
        Self::new(model, Vec::new(), Some(b))
    }

    pub fn masses(&self) -> &[PointMass] {
        &self.masses
    }

    pub fn bump(&self) -> Option<&Bump> {
        self.bump.as_ref()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    /// Largest distance from `x0` to the support.
    pub fn support_radius(&self, x0: &Point) -> Result<f64> {
        let mut r: f64 = 0.0;
        for m in &self.masses {
            r = r.max(self.model.distance(x0, &m.location)?);
        }
        if let Some(b) = &self.bump {
            r = r.max(self.model.distance(x0, &b.center)? + b.radius);
        }
        Ok(r)
    }

    /// Only masses at the origin and bumps about it.
    pub fn is_radial(&self) -> bool {
        self.masses.iter().all(|m| m.location.norm() == 0.0)
            && self.bump.as_ref().is_none_or(|b| b.center.norm() == 0.0)
    }
}

fn same_model(kernel: &Kernel, f: &InitialDatum) -> Result<()> {
    if kernel.model() != f.model() {
        return Err(Error::Unsupported("kernel family and datum live on different models"));
    }
    Ok(())
}

/// Average of ψ_t(d(x, ·)) over the sphere of radius `s` about a point at
/// distance `rho` from x.
fn sphere_average(kernel: &Kernel, t: f64, rho: f64, s: f64, spec: &QuadratureSpec) -> Result<f64> {
    let model = kernel.model();
    if rho == 0.0 || s == 0.0 {
        return Ok(kernel.at(t, rho + s));
    }
    let lo = (rho - s).abs();
    let hi = rho + s;
    match model.kind {
        ModelKind::Euclidean(1) => Ok(0.5 * (kernel.at(t, lo) + kernel.at(t, hi))),
        ModelKind::Euclidean(2) => {
            let mut f = |th: f64| kernel.at(t, (rho * rho + s * s - 2.0 * rho * s * th.cos()).max(0.0).sqrt());
            Ok(quad::adaptive(&mut f, 0.0, PI, spec)?.value / PI)
        }
        ModelKind::Euclidean(_) => {
            let mut f = |d: f64| kernel.at(t, d) * d;
            Ok(quad::adaptive(&mut f, lo, hi, spec)?.value / (2.0 * rho * s))
        }
        ModelKind::HyperbolicBall3 => {
            // ∫ ψ(d) sinh d dd / (2 sinh ρ sinh s), assembled in log form
            let norm = core::f64::consts::LN_2 + ln_sinh(rho) + ln_sinh(s);
            let mut f = |d: f64| {
                if d == 0.0 {
                    0.0
                } else {
                    (kernel.ln_at(t, d) + ln_sinh(d) - norm).exp()
                }
            };
            Ok(quad::adaptive(&mut f, lo, hi, spec)?.value)
        }
    }
}

fn bump_term(
    kernel: &Kernel,
    t: f64,
    b: &Bump,
    x: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let model = kernel.model();
    let rho = model.distance(x, &b.center)?;
    if let ModelKind::Euclidean(1) = model.kind {
        let c = b.center.coords()[0];
        let xc = x.coords()[0];
        let mut g = |y: f64| b.at((y - c).abs()) * kernel.at(t, (xc - y).abs());
        let mut pts = alloc::vec![c - b.radius, c, c + b.radius];
        if xc > c - b.radius && xc < c + b.radius && xc != c {
            pts.push(xc);
        }
        pts.sort_by(|a, b| a.total_cmp(b));
        return Ok(quad::adaptive_pieces(&mut g, &pts, spec)?.value);
    }
    let mut g = |s: f64| -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        let avg = sphere_average(kernel, t, rho, s, spec).unwrap_or(f64::NAN);
        b.at(s) * avg * model.ln_density(s).exp()
    };
    let mut pts = alloc::vec![0.0, b.radius];
    if rho > 0.0 && rho < b.radius {
        pts.insert(1, rho);
    }
    let v = quad::adaptive_pieces(&mut g, &pts, spec)?.value;
    if v.is_nan() {
        return Err(Error::Accuracy {
            estimate: v,
            error_bound: f64::INFINITY,
        });
    }
    Ok(v)
}

/// 𝒦_t f(x) = ∫ ψ_t(x, y) f(y) dμ(y).
pub fn apply_operator(kernel: &Kernel, t: f64, f: &InitialDatum, x: &Point) -> Result<f64> {
    apply_operator_with(kernel, t, f, x, &QuadratureSpec::default())
}

pub fn apply_operator_with(
    kernel: &Kernel,
    t: f64,
    f: &InitialDatum,
    x: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    same_model(kernel, f)?;
    let mut v = 0.0;
    for m in &f.masses {
        v += m.weight * kernel.eval(t, x, &m.location)?;
    }
    if let Some(b) = &f.bump {
        v += bump_term(kernel, t, b, x, spec)?;
    }
    Ok(v)
}

/// ‖𝒦_t f − M ψ_t(·, x₀)‖_{L¹}.
///
/// Implemented on ℝ¹ (whole-line quadrature with the data's kinks as
/// breakpoints) and on H³ with the Poisson kernel (delegated to the
/// hyperbolic module). Other combinations are reported as unsupported.
pub fn l1_distance(
    kernel: &Kernel,
    t: f64,
    f: &InitialDatum,
    x0: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    same_model(kernel, f)?;
    if is_single_dirac_at(f, x0) {
        return Ok(0.0);
    }
    match kernel.model().kind {
        ModelKind::Euclidean(1) => line_norm(kernel, t, f, x0, spec, |g| g.abs()),
        ModelKind::HyperbolicBall3 if matches!(kernel.family().id, FamilyId::HypPoisson) => {
            if x0.norm() != 0.0 {
                return Err(Error::Unsupported("H³ gaps are measured against the origin"));
            }
            hyperbolic::l1_gap(f, t, spec)
        }
        _ => Err(Error::Unsupported(
            "L¹ distances are implemented on ℝ¹ and for the Poisson kernel on H³",
        )),
    }
}

fn is_single_dirac_at(f: &InitialDatum, x0: &Point) -> bool {
    f.bump.is_none() && f.masses.iter().all(|m| m.location == *x0)
}

// ∫_ℝ h(𝒦_t f − M ψ_t(· − x₀)) with breakpoints at every kink.
fn line_norm<H: Fn(f64) -> f64>(
    kernel: &Kernel,
    t: f64,
    f: &InitialDatum,
    x0: &Point,
    spec: &QuadratureSpec,
    h: H,
) -> Result<f64> {
    let a = x0.coords()[0];
    let mass = f.mass;
    let bump_spec = spec.with_rel_tol(spec.rel_tol.max(1e-11));
    let mut failure = None;
    let mut g = |x: f64| {
        let mut v = -mass * kernel.at(t, (x - a).abs());
        for m in &f.masses {
            v += m.weight * kernel.at(t, (x - m.location.coords()[0]).abs());
        }
        if let Some(b) = &f.bump {
            match bump_term(kernel, t, b, &Point::on_axis(1, x), &bump_spec) {
                Ok(w) => v += w,
                Err(e) => failure = Some(e),
            }
        }
        h(v)
    };
    let mut pts: Vec<f64> = alloc::vec![a];
    pts.extend(f.masses.iter().map(|m| m.location.coords()[0]));
    if let Some(b) = &f.bump {
        let c = b.center.coords()[0];
        pts.extend([c - b.radius, c, c + b.radius]);
    }
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    let mut all = Vec::with_capacity(2 * pts.len());
    for w in pts.windows(2) {
        all.push(w[0]);
        all.push(0.5 * (w[0] + w[1]));
    }
    all.push(*pts.last().unwrap_or(&a));
    let scale = kernel.family().length_scale(t);
    let lo = all[0];
    let hi = *all.last().unwrap_or(&lo);
    // one rough pass sets the absolute floor: near x₀ the difference can be
    // many orders below its tails
    let mut rough = quad::gauss_kronrod21(&mut g, hi, hi + scale).0.abs()
        + quad::gauss_kronrod21(&mut g, lo - scale, lo).0.abs();
    for w in all.windows(2) {
        rough += quad::gauss_kronrod21(&mut g, w[0], w[1]).0.abs();
    }
    // differences far out lose digits to rounding in ψ itself
    let mut gross = mass.abs() + f.masses.iter().map(|m| m.weight.abs()).sum::<f64>();
    if let Some(b) = &f.bump {
        gross += 2.0 * b.radius * b.height.abs();
    }
    let floor = (0.01 * spec.rel_tol * rough).max(16.0 * f64::EPSILON * gross);
    let mid = if all.len() > 1 {
        quad::adaptive_pieces_with_floor(&mut g, &all, spec, floor)?.value
    } else {
        0.0
    };
    let right = quad::semi_infinite_with_floor(&mut g, hi, scale, spec, floor)?.value;
    let mut g_left = |x: f64| g(2.0 * lo - x);
    let left = quad::semi_infinite_with_floor(&mut g_left, lo, scale, spec, floor)?.value;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(mid + right + left)
}

/// ‖(𝒦_t f − M ψ_t(·, x₀))·V(t^{1/γ})^{1/2}‖_{L²} on ℝ¹; the p = 2 case of the
/// interpolation between the L¹ and weighted sup statements.
pub fn l2_weighted_distance(
    kernel: &Kernel,
    t: f64,
    f: &InitialDatum,
    x0: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    same_model(kernel, f)?;
    if !matches!(kernel.model().kind, ModelKind::Euclidean(1)) {
        return Err(Error::Unsupported("the L² interpolation check runs on ℝ¹"));
    }
    if is_single_dirac_at(f, x0) {
        return Ok(0.0);
    }
    let v = kernel.model().volume(kernel.family().length_scale(t));
    Ok((v * line_norm(kernel, t, f, x0, spec, |g| g * g)?).sqrt())
}

/// Line grid through x₀ along the first axis, used for weighted sup norms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SupGrid {
    /// Half-width in units of t^{1/γ}, added to the data's support radius.
    pub radius_factor: f64,
    /// Spacing in units of t^{1/γ}.
    pub resolution: f64,
}

impl Default for SupGrid {
    fn default() -> Self {
        SupGrid {
            radius_factor: 4.0,
            resolution: 0.01,
        }
    }
}

/// max over the grid of |𝒦_t f − M ψ_t(·, x₀)| · V(x, t^{1/γ}).
pub fn weighted_sup_distance(
    kernel: &Kernel,
    t: f64,
    f: &InitialDatum,
    x0: &Point,
    grid: &SupGrid,
) -> Result<f64> {
    same_model(kernel, f)?;
    if !(grid.radius_factor > 0.0 && grid.resolution > 0.0) {
        return Err(Error::domain("grid spacing", grid.resolution, "(0, inf)"));
    }
    if is_single_dirac_at(f, x0) {
        return Ok(0.0);
    }
    let model = kernel.model();
    let scale = kernel.family().length_scale(t);
    let radius = grid.radius_factor * scale + f.support_radius(x0)?;
    let step = grid.resolution * scale;
    let n = (radius / step).ceil() as i64;
    if n > 2_000_000 {
        return Err(Error::domain("grid points", n as f64, "at most 2e6 per side"));
    }
    let weight = model.volume(scale);
    let c = x0.raw();
    let dim = model.dim;
    let mut best: f64 = 0.0;
    let mut probe = |x: &Point| -> Result<()> {
        let v = apply_operator(kernel, t, f, x)? - f.mass * kernel.eval(t, x, x0)?;
        best = best.max(v.abs() * weight);
        Ok(())
    };
    let point = |off: f64| -> Result<Point> {
        let mut p = c;
        p[0] += off;
        if model.is_hyperbolic() {
            // walk along the geodesic diameter through the origin
            let r = (c[0].atanh() * 2.0 + off) * 0.5;
            p[0] = r.tanh();
        }
        Point::new(&p[..dim])
    };
    for i in -n..=n {
        probe(&point(i as f64 * step)?)?;
    }
    // the data locations are the likeliest extremisers
    for m in &f.masses {
        probe(&m.location)?;
    }
    Ok(best)
}

/// Least-squares slope of ln(value) against ln(time).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub used: usize,
    pub note: String,
}

/// Slope fit over at least four usable (strictly positive, distinct-time)
/// pairs.
pub fn estimate_rate(times: &[f64], values: &[f64]) -> Result<RateFit> {
    let (xs, ys, note) = usable_pairs(times, values)?;
    if xs.len() < 4 {
        return Err(Error::domain(
            "usable (time, value) pairs",
            xs.len() as f64,
            "at least 4",
        ));
    }
    let mut fit = ols(&xs, &ys);
    fit.note = note;
    Ok(fit)
}

/// The same fit without the four-point minimum (needs two points).
pub fn fit_loglog(times: &[f64], values: &[f64]) -> Result<RateFit> {
    let (xs, ys, note) = usable_pairs(times, values)?;
    if xs.len() < 2 {
        return Err(Error::domain("usable (time, value) pairs", xs.len() as f64, "at least 2"));
    }
    let mut fit = ols(&xs, &ys);
    fit.note = note;
    Ok(fit)
}

fn usable_pairs(times: &[f64], values: &[f64]) -> Result<(Vec<f64>, Vec<f64>, String)> {
    if times.len() != values.len() {
        return Err(Error::domain("value count", values.len() as f64, "the time count"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    for (&t, &v) in times.iter().zip(values) {
        let tie = xs.iter().any(|&x: &f64| x == t.ln());
        if t > 0.0 && v > 0.0 && t.is_finite() && v.is_finite() && !tie {
            xs.push(t.ln());
            ys.push(v.ln());
        } else {
            dropped += 1;
        }
    }
    let note = if dropped > 0 {
        alloc::format!("{dropped} pair(s) excluded (non-positive value or repeated time)")
    } else {
        String::new()
    };
    Ok((xs, ys, note))
}

fn ols(xs: &[f64], ys: &[f64]) -> RateFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let stderr = if xs.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - my - slope * (x - mx);
                r * r
            })
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    RateFit {
        slope,
        stderr,
        used: xs.len(),
        note: String::new(),
    }
}

/// Outcome of one long-time experiment; lists are indexed by `times`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentReport {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub times: Vec<f64>,
    pub l1_values: Vec<f64>,
    /// `None` where the weighted sup statement does not apply.
    pub weighted_sup_values: Vec<Option<f64>>,
    pub fitted_slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub flags: BTreeMap<String, bool>,
    pub oracle_notes: String,
}

impl ExperimentReport {
    pub fn for_family(fam: &KernelFamily) -> Self {
        let mut params = BTreeMap::new();
        match fam.id {
            FamilyId::Extension { sigma } => {
                params.insert("sigma".to_string(), sigma);
            }
            FamilyId::FracHeat { alpha } => {
                params.insert("alpha".to_string(), alpha);
            }
            _ => {}
        }
        params.insert("gamma".to_string(), fam.gamma);
        ExperimentReport {
            family: fam.name().to_string(),
            params,
            ..Default::default()
        }
    }

    /// Fills the slope from the L¹ column when at least four times are present.
    pub fn fit_l1(&mut self) {
        if let Ok(fit) = estimate_rate(&self.times, &self.l1_values) {
            self.fitted_slope = Some(fit.slope);
            self.slope_stderr = Some(fit.stderr);
            if !fit.note.is_empty() {
                self.note(&fit.note);
            }
        }
    }

    pub fn note(&mut self, text: &str) {
        if !self.oracle_notes.is_empty() {
            self.oracle_notes.push_str("; ");
        }
        self.oracle_notes.push_str(text);
    }

    pub fn passed(&self) -> bool {
        self.flags.values().all(|&f| f)
    }
}

/// L¹ and weighted sup distances over a time list, with the L¹ slope fitted.
pub fn convergence_experiment(
    kernel: &Kernel,
    times: &[f64],
    f: &InitialDatum,
    x0: &Point,
    spec: &QuadratureSpec,
    grid: &SupGrid,
) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::for_family(kernel.family());
    for &t in times {
        rep.times.push(t);
        rep.l1_values.push(l1_distance(kernel, t, f, x0, spec)?);
        rep.weighted_sup_values.push(Some(weighted_sup_distance(kernel, t, f, x0, grid)?));
    }
    rep.fit_l1();
    Ok(rep)
}

/// Grid on which the class axioms are checked.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PClassGrid {
    pub times: Vec<f64>,
    /// Base-point shift used for the Hölder transfer.
    pub xi: f64,
    /// Points x satisfy d(x, x₀) ≤ reach · t^{1/γ}.
    pub reach: f64,
    /// Log-spaced offsets per side.
    pub points: usize,
}

impl Default for PClassGrid {
    fn default() -> Self {
        PClassGrid {
            times: alloc::vec![10.0, 100.0, 1000.0],
            xi: 1.0,
            reach: 3.0,
            points: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AxiomResult {
    pub pass: bool,
    /// Fitted constant (or exponent for the Hölder transfer).
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PClassReport {
    pub family: String,
    pub gamma: f64,
    pub theta_gamma: f64,
    pub positivity_symmetry: AxiomResult,
    pub normalization: AxiomResult,
    pub quotient: AxiomResult,
    pub hoelder: AxiomResult,
    /// Largest relative Hölder difference at each time.
    pub hoelder_sup: Vec<f64>,
}

impl PClassReport {
    pub fn all_pass(&self) -> bool {
        self.positivity_symmetry.pass
            && self.normalization.pass
            && self.quotient.pass
            && self.hoelder.pass
    }
}

fn offsets(scale: f64, grid: &PClassGrid) -> Vec<f64> {
    let n = grid.points.max(2);
    let lo = (1e-3f64).ln();
    let hi = grid.reach.ln();
    let mut v = alloc::vec![0.0];
    for i in 0..n {
        let s = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp() * scale;
        v.push(s);
        v.push(-s);
    }
    v
}

/// Verifies (P1)–(P4) on ℝⁿ along a line through x₀ = 0. Failures are
/// reported in the result, never raised.
pub fn check_p_class(kernel: &Kernel, grid: &PClassGrid) -> Result<PClassReport> {
    let fam = *kernel.family();
    if !fam.model.is_euclidean() {
        return Err(Error::Unsupported("class checks need a Li–Yau (Euclidean) model"));
    }
    if grid.times.len() < 2 {
        return Err(Error::domain("time count", grid.times.len() as f64, "at least 2"));
    }
    let dim = fam.model.dim;
    let on_line = |s: f64| Point::on_axis(dim, s);
    let x0 = Point::origin(dim);
    let spec = QuadratureSpec::default();

    // (P1)
    let mut p1 = true;
    for &t in &grid.times {
        let l = fam.length_scale(t);
        for &a in &offsets(l, grid) {
            let x = on_line(a);
            let y = on_line(0.37 * l - 0.5 * a);
            let u = kernel.eval(t, &x, &y)?;
            let v = kernel.eval(t, &y, &x)?;
            p1 &= u > 0.0 && u == v && kernel.eval(t, &x, &x0)? > 0.0;
        }
    }
    let positivity_symmetry = AxiomResult {
        pass: p1,
        value: 0.0,
        detail: "positive and symmetric on the grid".to_string(),
    };

    // (P2)
    let mut worst_mass: f64 = 0.0;
    let mut sup_lo = f64::INFINITY;
    let mut sup_hi: f64 = 0.0;
    for &t in &grid.times {
        let m = kernel.total_mass(t, &spec)?;
        worst_mass = worst_mass.max((m - 1.0).abs());
        let l = fam.length_scale(t);
        let mut sup: f64 = 0.0;
        for &a in &offsets(l, grid) {
            sup = sup.max(kernel.at(t, a.abs()));
        }
        let c = sup * fam.model.volume(l);
        sup_lo = sup_lo.min(c);
        sup_hi = sup_hi.max(c);
    }
    let normalization = AxiomResult {
        pass: worst_mass < 1e-6 && sup_lo > 0.0 && sup_hi / sup_lo < 2.0,
        value: sup_hi,
        detail: alloc::format!(
            "max |mass - 1| = {worst_mass:.3e}; sup·V in [{sup_lo:.6}, {sup_hi:.6}]"
        ),
    };

    // (P3): y with d(x₀, y) ≤ t^{1/γ}, x within reach·t^{1/γ}
    let mut q_per_t = Vec::new();
    for &t in &grid.times {
        let l = fam.length_scale(t);
        let mut q: f64 = 0.0;
        for &frac in &[0.25, 0.5, 1.0] {
            let y = on_line(frac * l);
            for &a in &offsets(l, grid) {
                let x = on_line(a);
                q = q.max(kernel.eval(t, &x, &y)? / kernel.eval(t, &x, &x0)?);
            }
        }
        q_per_t.push(q);
    }
    let q_max = q_per_t.iter().cloned().fold(0.0, f64::max);
    let q_min = q_per_t.iter().cloned().fold(f64::INFINITY, f64::min);
    let quotient = AxiomResult {
        pass: q_max.is_finite() && q_max / q_min < 1.5,
        value: q_max,
        detail: alloc::format!("sup quotient per time: {q_per_t:?}"),
    };

    // (P4): fixed shift ξ, relative difference against t
    let y = on_line(grid.xi);
    let mut sups = Vec::new();
    for &t in &grid.times {
        let l = fam.length_scale(t);
        let mut d: f64 = 0.0;
        for &a in &offsets(l, grid) {
            let x = on_line(a);
            let p = kernel.eval(t, &x, &x0)?;
            d = d.max((p - kernel.eval(t, &x, &y)?).abs() / p);
        }
        sups.push(d);
    }
    let fit = fit_loglog(&grid.times, &sups)?;
    let theta = fam.theta_gamma();
    let hoelder = AxiomResult {
        pass: (fit.slope + theta).abs() <= 0.2,
        value: fit.slope,
        detail: alloc::format!(
            "relative difference ~ t^{:.4} (target -{theta:.4}); C = {:.4}",
            fit.slope,
            sups.iter()
                .zip(&grid.times)
                .map(|(s, t)| s * t.powf(theta))
                .fold(0.0, f64::max)
        ),
    };

    Ok(PClassReport {
        family: fam.name().to_string(),
        gamma: fam.gamma,
        theta_gamma: theta,
        positivity_symmetry,
        normalization,
        quotient,
        hoelder,
        hoelder_sup: sups,
    })
}

/// Constants used by the prescribed-rate construction.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateConstants {
    /// Volume comparison V(R)/V(r) ≤ C (R/r)^{ν′}.
    pub c_volume: f64,
    pub nu_prime: f64,
    /// Upper envelope: ψ_1(s) ≤ C₂ ψ_1(0) (1 + s)^{-ν′-α}.
    pub c2: f64,
    /// Lower sup constant: ψ_t(0) V(t^{1/α}) ≥ c₁.
    pub c1: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateStep {
    pub k: usize,
    pub m_k: f64,
    pub ln_t: f64,
    /// ln of the distance from x₀ to the k-th mass.
    pub ln_r: f64,
    pub phi_t: f64,
    /// |w(t_k, x₀) − M P_{t_k}(x₀, x₀)| · V(x₀, t_k^{1/α})
    pub lhs: f64,
    /// c₁ k φ(t_k)
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrescribedRate {
    pub alpha: f64,
    pub epsilon: f64,
    pub constants: RateConstants,
    pub steps: Vec<RateStep>,
}

impl PrescribedRate {
    pub fn all_hold(&self) -> bool {
        self.steps.iter().all(|s| s.holds)
    }
}

/// Largest t the construction may use.
pub const T_OVERFLOW_GUARD: f64 = 1e300;

/// Builds w = Σ m_k δ_{y_k} so that the weighted sup gap at t_k is at least
/// c₁ k φ(t_k), and verifies the inequality at every k.
///
/// Everything is evaluated through the scaling P_t(r) = t^{-n/α} P_1(r t^{-1/α}),
/// so t_k and r_k are handled as logarithms.
pub fn prescribed_rate_construct(
    phi: &dyn Fn(f64) -> f64,
    k_max: usize,
    kernel: &Kernel,
    x0: &Point,
) -> Result<PrescribedRate> {
    let fam = *kernel.family();
    let alpha = match fam.id {
        FamilyId::FracHeat { alpha } => alpha,
        _ => return Err(Error::Unsupported("the prescribed-rate construction uses P_t^α")),
    };
    if fam.model.kind != ModelKind::Euclidean(1) {
        return Err(Error::Unsupported("the prescribed-rate construction runs on ℝ¹"));
    }
    fam.model.check_point(x0)?;
    if !(1..=8).contains(&k_max) {
        return Err(Error::domain("k_max", k_max as f64, "{1, ..., 8}"));
    }
    let constants = fit_rate_constants(kernel, alpha)?;
    // first s with C₂ (1 + s)^{-ν′-α} < 1/(2 C) is beyond the far-field cut
    let s_far = (2.0 * constants.c_volume * constants.c2).powf(1.0 / (constants.nu_prime + alpha))
        * 1.01;
    let ln_guard = T_OVERFLOW_GUARD.ln();
    let epsilon = 0.5;
    let mut steps: Vec<RateStep> = Vec::new();
    let mut ln_t_prev = f64::NEG_INFINITY;
    let mut ln_r_prev = f64::NEG_INFINITY;
    for k in 1..=k_max {
        let m_k = epsilon * 0.5f64.powi(k as i32);
        let target = m_k / (2.0 * k as f64);
        // t_k must also make the earlier masses near: r_{k-1} ≤ 0.1 t_k^{1/α}
        let ln_floor = (alpha * (ln_r_prev + 10f64.ln())).max(ln_t_prev + 1e-9).max(0.0);
        let ok = |lt: f64| {
            let v = phi(lt.exp());
            v.is_finite() && v <= target
        };
        let mut hi = ln_floor.max(1.0);
        while !ok(hi) {
            hi *= 2.0;
            if hi > ln_guard {
                if ok(ln_guard) {
                    hi = ln_guard;
                    break;
                }
                return Err(Error::Infeasible {
                    step: k,
                    reason: "phi does not reach m_k/(2k) below the overflow guard on t",
                });
            }
        }
        let mut lo = ln_floor;
        if ok(lo) {
            hi = lo;
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-12 * hi.abs().max(1.0) {
                    break;
                }
            }
        }
        let ln_t = hi;
        let ln_r = ln_t / alpha + s_far.ln();
        steps.push(RateStep {
            k,
            m_k,
            ln_t,
            ln_r,
            phi_t: phi(ln_t.exp()),
            lhs: 0.0,
            rhs: 0.0,
            holds: false,
        });
        ln_t_prev = ln_t;
        ln_r_prev = ln_r;
    }
    // verification at every t_k against all masses
    let p0 = kernel.at(1.0, 0.0);
    let masses: Vec<(f64, f64)> = steps.iter().map(|s| (s.m_k, s.ln_r)).collect();
    for s in steps.iter_mut() {
        let ln_l = s.ln_t / alpha;
        let mut gap = 0.0;
        for &(m, ln_r) in &masses {
            let ln_ratio = ln_r - ln_l;
            let rel = if ln_ratio > 300.0 {
                0.0
            } else {
                kernel.at(1.0, ln_ratio.exp()) / p0
            };
            gap += m * (1.0 - rel);
        }
        // ψ_t(0) V(t^{1/α}) = 2 P_1(0) on ℝ¹
        s.lhs = gap * 2.0 * p0;
        s.rhs = constants.c1 * s.k as f64 * s.phi_t;
        s.holds = s.lhs >= s.rhs;
    }
    Ok(PrescribedRate {
        alpha,
        epsilon,
        constants,
        steps,
    })
}

fn fit_rate_constants(kernel: &Kernel, alpha: f64) -> Result<RateConstants> {
    let nu_prime = kernel.model().nu_prime;
    let p0 = kernel.at(1.0, 0.0);
    let mut c2: f64 = 0.0;
    for i in 0..=400 {
        let s = (1e-3f64).ln() + (1e9f64 / 1e-3).ln() * i as f64 / 400.0;
        let s = s.exp();
        c2 = c2.max(kernel.at(1.0, s) / p0 * (1.0 + s).powf(nu_prime + alpha));
    }
    // the lower sup constant is scale invariant; fit it over t anyway
    let mut c1 = f64::INFINITY;
    for &t in &[1.0, 10.0, 100.0] {
        let l = t.powf(1.0 / alpha);
        c1 = c1.min(kernel.at(t, 0.0) * kernel.model().volume(l));
    }
    Ok(RateConstants {
        c_volume: 1.0,
        nu_prime,
        c2,
        c1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> ManifoldModel {
        ManifoldModel::euclidean(1).unwrap()
    }

    fn kern(fam: KernelFamily) -> Kernel {
        Kernel::new(fam).unwrap()
    }

    fn poisson1() -> Kernel {
        kern(KernelFamily::frac_heat(1.0, line()).unwrap())
    }

    #[test]
    fn operator_on_diracs() {
        let k = poisson1();
        let f = InitialDatum::new(
            line(),
            alloc::vec![
                PointMass { weight: 0.5, location: Point::on_axis(1, 0.0) },
                PointMass { weight: 0.5, location: Point::on_axis(1, 1.0) },
            ],
            None,
        )
        .unwrap();
        let v = apply_operator(&k, 1.0, &f, &Point::origin(1)).unwrap();
        assert!((v - 0.238_732_414_637_843).abs() < 1e-9);
        let g = InitialDatum::dirac(line(), Point::on_axis(1, 2.5), 1.0).unwrap();
        let x = Point::on_axis(1, -0.5);
        assert_eq!(apply_operator(&k, 3.0, &g, &x).unwrap(), k.at(3.0, 3.0));
    }

    #[test]
    fn datum_validation_and_mass() {
        assert!(InitialDatum::new(line(), Vec::new(), None).is_err());
        let h = ManifoldModel::hyperbolic3();
        let b = InitialDatum::radial_bump(h, 1.0, Profile::CosineTaper, 2.0).unwrap();
        assert!((b.mass() - 2.0).abs() < 1e-12);
        let bump = *b.bump().unwrap();
        let direct = InitialDatum::new(h, Vec::new(), Some(bump)).unwrap();
        assert!((direct.mass() - 2.0).abs() < 1e-12);
        assert!(b.is_radial());
        let bad = PointMass { weight: 1.0, location: Point::origin(2) };
        assert!(InitialDatum::new(line(), alloc::vec![bad], None).is_err());
    }

    #[test]
    fn operator_conserves_mass() {
        let spec = QuadratureSpec::default().with_rel_tol(1e-8);
        let k = kern(KernelFamily::extension(0.5, line()).unwrap());
        let f = InitialDatum::new(
            line(),
            alloc::vec![PointMass { weight: 0.3, location: Point::on_axis(1, 2.0) }],
            Some(Bump {
                radius: 1.0,
                height: 0.7,
                center: Point::on_axis(1, -1.0),
                profile: Profile::CosineTaper,
            }),
        )
        .unwrap();
        let mut g = |x: f64| apply_operator(&k, 1.0, &f, &Point::on_axis(1, x)).unwrap();
        let total = quad::whole_line(&mut g, &[-2.0, -1.0, 0.0, 2.0], 1.0, &spec).unwrap().value;
        assert!((total - f.mass()).abs() < 1e-6, "{total} vs {}", f.mass());
    }

    #[test]
    fn sphere_averages_match_brute_force() {
        let spec = QuadratureSpec::default();
        for m in [ManifoldModel::euclidean(3).unwrap(), ManifoldModel::hyperbolic3()] {
            let k = kern(KernelFamily::heat(m));
            let (rho, s) = (0.8, 0.5);
            let avg = sphere_average(&k, 0.4, rho, s, &spec).unwrap();
            // midpoint rule over the polar angle
            let n = 20_000;
            let mut acc = 0.0;
            for i in 0..n {
                let th = PI * (i as f64 + 0.5) / n as f64;
                let d = if m.is_hyperbolic() {
                    (rho.cosh() * s.cosh() - rho.sinh() * s.sinh() * th.cos()).acosh()
                } else {
                    (rho * rho + s * s - 2.0 * rho * s * th.cos()).sqrt()
                };
                acc += k.at(0.4, d) * th.sin();
            }
            let brute = 0.5 * acc * PI / n as f64;
            assert!(((avg - brute) / brute).abs() < 1e-7, "{:?}", m.kind);
        }
    }

    #[test]
    fn l1_single_dirac_identity() {
        // symmetric unimodal kernel: ‖ψ(· − 1) − ψ‖₁ = 2 ∫_{-1/2}^{1/2} ψ
        let spec = QuadratureSpec::default();
        let k = poisson1();
        let f = InitialDatum::dirac(line(), Point::on_axis(1, 1.0), 1.0).unwrap();
        for &t in &[0.3, 10.0, 1e3] {
            let v = l1_distance(&k, t, &f, &Point::origin(1), &spec).unwrap();
            let want = 4.0 / PI * (0.5 / t).atan();
            assert!(((v - want) / want).abs() < 1e-7, "t={t}: {v} vs {want}");
        }
        let g = InitialDatum::dirac(line(), Point::origin(1), 1.0).unwrap();
        assert_eq!(l1_distance(&k, 1.0, &g, &Point::origin(1), &spec).unwrap(), 0.0);
    }

    #[test]
    fn l1_swap_symmetry_and_scope() {
        let spec = QuadratureSpec::default();
        let k = kern(KernelFamily::frac_heat(1.5, line()).unwrap());
        let a = InitialDatum::dirac(line(), Point::on_axis(1, 1.0), 1.0).unwrap();
        let b = InitialDatum::dirac(line(), Point::origin(1), 1.0).unwrap();
        let u = l1_distance(&k, 5.0, &a, &Point::origin(1), &spec).unwrap();
        let v = l1_distance(&k, 5.0, &b, &Point::on_axis(1, 1.0), &spec).unwrap();
        assert!(((u - v) / u).abs() < 1e-9);
        let m2 = ManifoldModel::euclidean(2).unwrap();
        let k2 = kern(KernelFamily::heat(m2));
        let d2 = InitialDatum::dirac(m2, Point::on_axis(2, 1.0), 1.0).unwrap();
        assert!(matches!(
            l1_distance(&k2, 1.0, &d2, &Point::origin(2), &spec),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn interpolation_inequality() {
        let spec = QuadratureSpec::default();
        let k = poisson1();
        let f = InitialDatum::dirac(line(), Point::on_axis(1, 1.0), 1.0).unwrap();
        let x0 = Point::origin(1);
        for &t in &[1e2, 1e3] {
            let l1 = l1_distance(&k, t, &f, &x0, &spec).unwrap();
            let sup = weighted_sup_distance(&k, t, &f, &x0, &SupGrid::default()).unwrap();
            let l2 = l2_weighted_distance(&k, t, &f, &x0, &spec).unwrap();
            assert!(l2 <= (l1 * sup).sqrt() * (1.0 + 1e-6), "t={t}");
        }
    }

    #[test]
    fn weighted_sup_grid_refinement() {
        let k = poisson1();
        let f = InitialDatum::dirac(line(), Point::on_axis(1, 1.0), 1.0).unwrap();
        let x0 = Point::origin(1);
        let coarse = weighted_sup_distance(&k, 100.0, &f, &x0, &SupGrid::default()).unwrap();
        let fine = SupGrid { radius_factor: 4.0, resolution: 0.002 };
        let fine = weighted_sup_distance(&k, 100.0, &f, &x0, &fine).unwrap();
        assert!(((coarse - fine) / fine).abs() < 0.01);
        let zero = InitialDatum::dirac(line(), x0, 2.0).unwrap();
        assert_eq!(weighted_sup_distance(&k, 100.0, &zero, &x0, &SupGrid::default()).unwrap(), 0.0);
    }

    #[test]
    fn rate_fits() {
        let t: Vec<f64> = (0..8).map(|i| 10f64.powf(2.0 + 0.25 * i as f64)).collect();
        let exact: Vec<f64> = t.iter().map(|t| 1.0 / t).collect();
        let fit = estimate_rate(&t, &exact).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12 && fit.stderr < 1e-12);
        // several periods of the log-periodic perturbation
        let wide: Vec<f64> = (0..33).map(|i| 10f64.powf(0.25 * i as f64)).collect();
        let wiggle: Vec<f64> = wide.iter().map(|t| (1.0 + 0.1 * t.ln().sin()) / t).collect();
        assert!((estimate_rate(&wide, &wiggle).unwrap().slope + 1.0).abs() < 0.05);
        let flat = [3.0; 8];
        assert_eq!(estimate_rate(&t, &flat).unwrap().slope, 0.0);
        assert!(estimate_rate(&t[..3], &exact[..3]).is_err());
        let mut with_zero = exact.clone();
        with_zero[0] = 0.0;
        let fit = estimate_rate(&t, &with_zero).unwrap();
        assert_eq!(fit.used, 7);
        assert!(!fit.note.is_empty());
        assert!((fit_loglog(&t[..3], &exact[..3]).unwrap().slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn heat_is_in_the_class() {
        let r = check_p_class(&kern(KernelFamily::heat(line())), &PClassGrid::default()).unwrap();
        assert!(r.all_pass(), "{r:#?}");
    }

    #[test]
    fn prescribed_rate_fast_phi() {
        let k = poisson1();
        let phi = |t: f64| t.powi(-10);
        let c = prescribed_rate_construct(&phi, 5, &k, &Point::origin(1)).unwrap();
        assert!(c.all_hold());
        assert!(c.steps.windows(2).all(|w| w[0].ln_t < w[1].ln_t));
        assert!(c.steps.last().unwrap().ln_t < 1e6f64.ln());
        assert!((c.constants.c2 - 2.0).abs() < 1e-3);
        assert!((c.constants.c1 - 2.0 / PI).abs() < 1e-9);
    }

    #[test]
    fn prescribed_rate_infeasible_step_is_named() {
        let k = poisson1();
        let phi = |t: f64| 1.0 / t.ln();
        match prescribed_rate_construct(&phi, 6, &k, &Point::origin(1)) {
            Err(Error::Infeasible { step, .. }) => assert_eq!(step, 6),
            other => panic!("{other:?}"),
        }
    }
}
