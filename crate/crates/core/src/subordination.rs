//! Kernels obtained by subordinating the heat kernel: the extension kernel
//! Q_t^σ, the fractional heat kernel P_t^α and the Poisson kernel on H³.
//!
//! Both subordinated families are written as a heat kernel averaged over a
//! random time `u = τ(t)·S`, where S has a law that does not depend on t:
//!
//! * extension: τ = t²/4 and 1/S is Gamma(σ, 1) distributed,
//! * fractional heat: τ = t^{2/α} and S has the unit one-sided α/2-stable law.
//!
//! Integration runs over `w = ln S`, where both laws are smooth and unimodal.
//! [`extension_kernel`] and [`fractional_heat_kernel`] integrate adaptively on
//! every call; [`Kernel`] tabulates the law once on a fixed Gauss–Legendre
//! grid and is the fast path used by the experiments.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::manifolds::{ln_d_over_sinh, ln_sinh_excess, ln_sinh_shift, ManifoldModel, ModelKind, Point};
use crate::quad::{self, QuadratureSpec};
use crate::special_fn::{self, check_alpha, k_scaled_unchecked, ln_gamma_pos};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FamilyId {
    Heat,
    Extension { sigma: f64 },
    FracHeat { alpha: f64 },
    HypPoisson,
}

/// A kernel family of class 𝒫_γ on a given model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelFamily {
    pub id: FamilyId,
    pub gamma: f64,
    pub model: ManifoldModel,
}

impl KernelFamily {
    pub fn heat(model: ManifoldModel) -> Self {
        KernelFamily {
            id: FamilyId::Heat,
            gamma: 2.0,
            model,
        }
    }

    pub fn extension(sigma: f64, model: ManifoldModel) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(KernelFamily {
            id: FamilyId::Extension { sigma },
            gamma: 1.0,
            model,
        })
    }

    pub fn frac_heat(alpha: f64, model: ManifoldModel) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(KernelFamily {
            id: FamilyId::FracHeat { alpha },
            gamma: alpha,
            model,
        })
    }

    pub fn hyp_poisson() -> Self {
        KernelFamily {
            id: FamilyId::HypPoisson,
            gamma: 1.0,
            model: ManifoldModel::hyperbolic3(),
        }
    }

    pub fn param(&self) -> Option<f64> {
        match self.id {
            FamilyId::Extension { sigma } => Some(sigma),
            FamilyId::FracHeat { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Hölder transfer exponent θ_γ = θ/γ.
    pub fn theta_gamma(&self) -> f64 {
        self.model.hoelder_theta / self.gamma
    }

    /// Natural length scale t^{1/γ}.
    pub fn length_scale(&self, t: f64) -> f64 {
        t.powf(1.0 / self.gamma)
    }

    pub fn name(&self) -> &'static str {
        match self.id {
            FamilyId::Heat => "heat",
            FamilyId::Extension { .. } => "extension",
            FamilyId::FracHeat { .. } => "frac-heat",
            FamilyId::HypPoisson => "hyp-poisson",
        }
    }

    fn law(&self) -> Option<MixingLaw> {
        match self.id {
            FamilyId::Extension { sigma } => Some(MixingLaw::inverse_gamma(sigma)),
            FamilyId::FracHeat { alpha } => Some(MixingLaw::stable(alpha)),
            _ => None,
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::domain("sigma", sigma, "(0,1)"));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain("t", t, "(0, inf)"));
    }
    Ok(())
}

/// Law of `w = ln S` for the random heat time `τ(t)·S`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum MixingLaw {
    InverseGamma { sigma: f64, ln_gamma: f64 },
    Stable { beta: f64 },
}

impl MixingLaw {
    fn inverse_gamma(sigma: f64) -> Self {
        MixingLaw::InverseGamma {
            sigma,
            ln_gamma: ln_gamma_pos(sigma),
        }
    }

    fn stable(alpha: f64) -> Self {
        MixingLaw::Stable { beta: 0.5 * alpha }
    }

    fn time_scale(&self, t: f64) -> f64 {
        match *self {
            MixingLaw::InverseGamma { .. } => 0.25 * t * t,
            MixingLaw::Stable { beta } => t.powf(1.0 / beta),
        }
    }

    fn ln_density(&self, w: f64) -> Option<f64> {
        match *self {
            MixingLaw::InverseGamma { sigma, ln_gamma } => {
                let e = -w.exp().recip();
                let v = -sigma * w + e - ln_gamma;
                if v < -745.0 {
                    None
                } else {
                    Some(v)
                }
            }
            MixingLaw::Stable { beta } => {
                special_fn::ln_unit_stable_density(beta, w.exp()).map(|l| l + w)
            }
        }
    }

    /// Rough location of the mode of w.
    fn mode(&self) -> f64 {
        match *self {
            MixingLaw::InverseGamma { sigma, .. } => -sigma.ln(),
            MixingLaw::Stable { beta } => {
                let a0 = beta.powf(beta / (1.0 - beta)) * (1.0 - beta);
                ((1.0 - beta) / beta) * a0.ln()
            }
        }
    }

    /// Below this w the density is under the double range.
    fn lower_cut(&self) -> f64 {
        match *self {
            MixingLaw::InverseGamma { .. } => -(800f64.ln()),
            MixingLaw::Stable { beta } => {
                let a0 = beta.powf(beta / (1.0 - beta)) * (1.0 - beta);
                -((1.0 - beta) / beta) * (800.0 / a0).ln()
            }
        }
    }

    fn panel_width(&self) -> f64 {
        match *self {
            MixingLaw::InverseGamma { .. } => 0.5,
            MixingLaw::Stable { beta } => 0.5 * ((1.0 - beta) / beta).min(1.0),
        }
    }

    /// Asymptotic expansion of the Euclidean kernel for a = d²/(4τ) → ∞.
    fn euclidean_tail(&self, n: usize, tau: f64, a: f64) -> f64 {
        let half_n = 0.5 * n as f64;
        let pre = (4.0 * PI * tau).powf(-half_n);
        match *self {
            MixingLaw::InverseGamma { sigma, ln_gamma } => {
                pre * (ln_gamma_pos(half_n + sigma) - ln_gamma - (half_n + sigma) * (1.0 + a).ln())
                    .exp()
            }
            MixingLaw::Stable { beta } => {
                let la = a.ln();
                let mut sum = 0.0;
                let mut last = f64::INFINITY;
                for k in 1..200 {
                    let kf = k as f64;
                    let mag = (ln_gamma_pos(kf * beta + 1.0) - ln_gamma_pos(kf + 1.0)
                        + ln_gamma_pos(half_n + kf * beta)
                        - (half_n + kf * beta) * la)
                        .exp();
                    if mag > last {
                        break;
                    }
                    last = mag;
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sum += sign * mag * (kf * PI * beta).sin();
                    if mag < 1e-18 * sum.abs() {
                        break;
                    }
                }
                pre * sum / PI
            }
        }
    }
}

const TABLE_TOP: f64 = 120.0;
const TAIL_SWITCH: f64 = 60.0;

/// Heat kernel mixed over a precomputed Gauss–Legendre table of the time law.
#[derive(Debug, Clone)]
struct MixtureRule {
    nodes: Vec<f64>,
    ln_weights: Vec<f64>,
    mode: f64,
}

impl MixtureRule {
    fn build(law: &MixingLaw) -> Self {
        let gl = quad::gauss_legendre(16);
        let h = law.panel_width();
        let lo = law.lower_cut();
        let panels = ((TABLE_TOP - lo) / h).ceil() as usize;
        let mut nodes = Vec::with_capacity(panels * gl.len());
        let mut ln_weights = Vec::with_capacity(panels * gl.len());
        let mut best = (f64::NEG_INFINITY, 0.0);
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for &(x, wt) in &gl {
                let w = a + 0.5 * h * (x + 1.0);
                if let Some(ld) = law.ln_density(w) {
                    if ld > best.0 {
                        best = (ld, w);
                    }
                    nodes.push(w);
                    ln_weights.push((0.5 * h * wt).ln() + ld);
                }
            }
        }
        MixtureRule {
            nodes,
            ln_weights,
            mode: best.1,
        }
    }

    fn total_weight(&self) -> f64 {
        self.ln_weights.iter().map(|l| l.exp()).sum()
    }

    /// ln Σ_i weight_i · h(τ e^{w_i}, d), accumulated with a running maximum
    /// so that the sum stays meaningful far below the double range.
    fn ln_mix(&self, model: &ManifoldModel, tau: f64, d: f64) -> f64 {
        let ln_tau = tau.ln();
        let (half_n, geo) = match model.kind {
            ModelKind::Euclidean(n) => (0.5 * n as f64, None),
            ModelKind::HyperbolicBall3 => (1.5, Some(ln_d_over_sinh(d))),
        };
        let d2 = 0.25 * d * d;
        let ln_4pi = (4.0 * PI).ln();
        let mut start = 0;
        let mut peak = self.mode;
        if d > 0.0 {
            // exp(-d²/(4τ e^w)) is negligible against the peak below this w;
            // on H³ the peak term itself is only about exp(-2d)
            let w_star = (d2 / tau).ln();
            let slack = if geo.is_some() { 800.0 + 3.0 * d } else { 800.0 };
            start = self.nodes.partition_point(|&w| w < w_star - slack.ln());
            peak = peak.max(w_star);
        }
        let mut top = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for i in start..self.nodes.len() {
            let w = self.nodes[i];
            let ln_u = ln_tau + w;
            let u = ln_u.exp();
            let mut l = self.ln_weights[i] - half_n * (ln_4pi + ln_u) - d2 / u;
            if let Some(g) = geo {
                l += g - u;
            }
            if l > top {
                acc = acc * (top - l).exp() + 1.0;
                top = l;
            } else {
                let r = (l - top).exp();
                acc += r;
                if w > peak + 2.0 && r < 1e-18 * acc {
                    break;
                }
            }
        }
        top + acc.ln()
    }
}

/// Beyond this distance the H³ integrand in w is a spike of width d^{-1/2}
/// that the fixed table cannot resolve.
const H3_SADDLE_SWITCH: f64 = 100.0;

// On H³ the exponent -u - d²/(4u) = -d - (u - d/2)²/u peaks at u = d/2 with
// relative width d^{-1/2}; integrate in δ = ln(2u/d) about that peak.
fn ln_mix_h3_saddle(law: &MixingLaw, tau: f64, d: f64, weighted: bool) -> f64 {
    let half = 0.5 * d;
    let wc = (half / tau).ln();
    let l = |delta: f64| {
        let em = delta.exp_m1();
        law.ln_density(wc + delta).unwrap_or(f64::NEG_INFINITY)
            - 1.5 * delta
            - half * em * em / (1.0 + em)
    };
    // with the weight 4π sinh² d the factor e^{-2d} cancels analytically
    let geo = if weighted {
        (4.0 * PI).ln() + d.ln() + ln_sinh_excess(d)
    } else {
        ln_d_over_sinh(d) - d
    };
    let base = geo - 1.5 * (4.0 * PI * half).ln();
    let top = l(0.0);
    let width = 40.0 / d.sqrt();
    let spec = QuadratureSpec::default();
    let mut f = |delta: f64| (l(delta) - top).exp();
    let v = match quad::adaptive(&mut f, -width, width, &spec) {
        Ok(e) => e.value,
        Err(Error::Accuracy { estimate, .. }) => estimate,
        Err(_) => 0.0,
    };
    if v > 0.0 {
        base + top + v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Evaluator for a kernel family; subordinated families carry their table.
#[derive(Debug, Clone)]
pub struct Kernel {
    family: KernelFamily,
    law: Option<MixingLaw>,
    rule: Option<MixtureRule>,
}

impl Kernel {
    pub fn new(family: KernelFamily) -> Result<Self> {
        if matches!(family.id, FamilyId::HypPoisson) && !family.model.is_hyperbolic() {
            return Err(Error::Unsupported("the Poisson family lives on H³"));
        }
        let law = family.law();
        let rule = law.as_ref().map(MixtureRule::build);
        Ok(Kernel { family, law, rule })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.family.model
    }

    /// Mass of the tabulated time law (1 up to table truncation).
    pub fn table_mass(&self) -> Option<f64> {
        self.rule.as_ref().map(|r| r.total_weight())
    }

    /// ψ_t as a function of the geodesic distance.
    pub fn at(&self, t: f64, d: f64) -> f64 {
        self.ln_at(t, d).exp()
    }

    /// ln ψ_t(d); finite well past the point where ψ_t itself underflows.
    pub fn ln_at(&self, t: f64, d: f64) -> f64 {
        let model = &self.family.model;
        match (self.family.id, &self.law, &self.rule) {
            (FamilyId::Heat, _, _) => model.ln_heat_at(t, d),
            (FamilyId::HypPoisson, _, _) => ln_poisson_h3(t, d),
            (_, Some(law), Some(rule)) => {
                let tau = law.time_scale(t);
                if let ModelKind::Euclidean(n) = model.kind {
                    let a = d * d / (4.0 * tau);
                    if a > 0.0 && a.ln() > TAIL_SWITCH {
                        return law.euclidean_tail(n, tau, a).ln();
                    }
                }
                if model.is_hyperbolic() && d > H3_SADDLE_SWITCH {
                    return ln_mix_h3_saddle(law, tau, d, false);
                }
                rule.ln_mix(model, tau, d)
            }
            _ => unreachable!("subordinated families always carry a table"),
        }
    }

    /// ln(ψ_t(d) · radial density at d), without cancellation on H³.
    pub fn ln_weighted_at(&self, t: f64, d: f64) -> f64 {
        let model = &self.family.model;
        if model.is_hyperbolic() {
            match (self.family.id, &self.law) {
                (FamilyId::HypPoisson, _) => return ln_poisson_h3_weighted(t, d),
                (FamilyId::Heat, _) => {}
                (_, Some(law)) if d > H3_SADDLE_SWITCH => {
                    return ln_mix_h3_saddle(law, law.time_scale(t), d, true)
                }
                _ => {}
            }
        }
        if d == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_at(t, d) + model.ln_density(d)
    }

    /// ∫ ψ_t(o, ·) dμ over the whole space (1 up to quadrature error).
    pub fn total_mass(&self, t: f64, quad_spec: &QuadratureSpec) -> Result<f64> {
        check_t(t)?;
        quad_spec.validate()?;
        let scale = self.family.length_scale(t).min(1.0);
        let mut f = |r: f64| self.ln_weighted_at(t, r).exp();
        quad::semi_infinite(&mut f, 0.0, scale, quad_spec).map(|e| e.value)
    }

    pub fn eval(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        check_t(t)?;
        let d = self.family.model.distance(x, y)?;
        Ok(self.at(t, d))
    }
}

fn mix_adaptive(
    law: &MixingLaw,
    model: &ManifoldModel,
    t: f64,
    d: f64,
    quad_spec: &QuadratureSpec,
) -> Result<f64> {
    quad_spec.validate()?;
    let tau = law.time_scale(t);
    let ln_tau = tau.ln();
    let mut f = |w: f64| match law.ln_density(w) {
        Some(ld) => (ld + model.ln_heat_at((ln_tau + w).exp(), d)).exp(),
        None => 0.0,
    };
    let mode = law.mode();
    let mut breaks: Vec<f64> = Vec::with_capacity(3);
    breaks.push(law.lower_cut().max(mode - 30.0));
    breaks.push(mode);
    if d > 0.0 {
        let w_star = (d * d / (4.0 * tau)).ln();
        if w_star > mode {
            breaks.push(w_star);
        } else if w_star > breaks[0] {
            breaks.insert(1, w_star);
        }
    }
    // left of the lower cut the law is exactly negligible
    let inner = quad::adaptive_pieces(&mut f, &breaks, quad_spec)?;
    let top = *breaks.last().unwrap_or(&0.0);
    let tail = quad::semi_infinite_with_floor(
        &mut f,
        top,
        1.0,
        quad_spec,
        quad_spec.rel_tol * inner.value.abs() * 1e-3,
    )?;
    Ok(inner.value + tail.value)
}

/// Q_t^σ(x, y) by adaptive quadrature of the subordination integral after the
/// substitution u = t²/(4v).
pub fn extension_kernel(
    sigma: f64,
    t: f64,
    m: &ManifoldModel,
    x: &Point,
    y: &Point,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_sigma(sigma)?;
    check_t(t)?;
    let d = m.distance(x, y)?;
    mix_adaptive(&MixingLaw::inverse_gamma(sigma), m, t, d, quad)
}

/// P_t^α(x, y) = ∫ h_u(x, y) η_t^α(u) du by adaptive quadrature in ln u.
pub fn fractional_heat_kernel(
    alpha: f64,
    t: f64,
    m: &ManifoldModel,
    x: &Point,
    y: &Point,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_t(t)?;
    let d = m.distance(x, y)?;
    mix_adaptive(&MixingLaw::stable(alpha), m, t, d, quad)
}

/// Closed-form extension kernel on ℝⁿ:
/// Γ(σ+n/2)/Γ(σ) · π^{-n/2} · t^{2σ} (t² + d²)^{-(σ+n/2)}.
pub fn extension_kernel_euclidean_closed(sigma: f64, n: usize, t: f64, d: f64) -> f64 {
    let h = 0.5 * n as f64;
    (ln_gamma_pos(sigma + h) - ln_gamma_pos(sigma)).exp()
        * PI.powf(-h)
        * t.powf(2.0 * sigma)
        * (t * t + d * d).powf(-(sigma + h))
}

/// Spectral multiplier of a radial Fourier multiplier family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Multiplier {
    /// (tλ)^σ K_σ(tλ) 2^{1-σ}/Γ(σ)
    Extension { sigma: f64 },
    /// exp(-t λ^α); α = 2 gives the heat kernel at time t.
    Power { alpha: f64 },
}

impl Multiplier {
    pub fn eval(&self, t: f64, lambda: f64) -> f64 {
        match *self {
            Multiplier::Extension { sigma } => {
                let z = t * lambda;
                if z == 0.0 {
                    return 1.0;
                }
                if z > 740.0 {
                    return 0.0;
                }
                let ln = sigma * z.ln() + k_scaled_unchecked(sigma, z).ln() - z
                    + (1.0 - sigma) * core::f64::consts::LN_2
                    - ln_gamma_pos(sigma);
                ln.exp()
            }
            Multiplier::Power { alpha } => (-t * lambda.powf(alpha)).exp(),
        }
    }

    fn scale(&self, t: f64) -> f64 {
        match *self {
            Multiplier::Extension { .. } => 1.0 / t,
            Multiplier::Power { alpha } => t.powf(-1.0 / alpha),
        }
    }
}

/// Radial Fourier inversion of a multiplier on ℝⁿ, evaluated at distance s.
pub fn spectral_inversion(
    n: usize,
    mult: Multiplier,
    t: f64,
    s: f64,
    quad_spec: &QuadratureSpec,
) -> Result<f64> {
    check_t(t)?;
    if !(1..=3).contains(&n) {
        return Err(Error::domain("dimension", n as f64, "{1, 2, 3}"));
    }
    if !(s >= 0.0) {
        return Err(Error::domain("distance", s, "[0, inf)"));
    }
    if let Multiplier::Power { alpha } = mult {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::domain("alpha", alpha, "(0,2]"));
        }
    }
    quad_spec.validate()?;
    let m = |l: f64| mult.eval(t, l);
    let scale = mult.scale(t);
    let (pre, kernel): (f64, &dyn Fn(f64) -> f64) = match (n, s == 0.0) {
        (1, true) => (1.0 / PI, &|_l: f64| 1.0),
        (1, false) => (1.0 / PI, &|l: f64| (l * s).cos()),
        (2, _) => (0.5 / PI, &|l: f64| l * special_fn::bessel_j0(l * s)),
        (_, true) => (0.5 / (PI * PI), &|l: f64| l * l),
        (_, false) => (0.5 / (PI * PI * s), &|l: f64| l * (l * s).sin()),
    };
    let mut f = |l: f64| kernel(l) * m(l);
    if s == 0.0 {
        let e = quad::semi_infinite(&mut f, 0.0, scale, quad_spec)?;
        return Ok(pre * e.value);
    }
    oscillatory(&mut f, PI / s, scale, quad_spec).map(|v| pre * v)
}

// Half-period panels; the multiplier decays monotonically, so the partial
// sums alternate around the limit and the mean of the last two is used.
fn oscillatory<F: FnMut(f64) -> f64>(
    f: &mut F,
    half_period: f64,
    scale: f64,
    quad_spec: &QuadratureSpec,
) -> Result<f64> {
    const MAX_PANELS: usize = 400_000;
    let mut sum = 0.0;
    let mut prev_sum = 0.0;
    let mut quiet = 0;
    let panel_spec = quad_spec.with_rel_tol(quad_spec.rel_tol.min(1e-10));
    let mut lo = 0.0;
    let mut k = 0;
    while k < MAX_PANELS {
        let hi = lo + half_period;
        let e = quad::adaptive_with_floor(f, lo, hi, &panel_spec, 1e-300)?;
        prev_sum = sum;
        sum += e.value;
        if hi > 4.0 * scale && e.value.abs() <= 1e-3 * quad_spec.rel_tol * sum.abs() {
            quiet += 1;
            if quiet >= 3 {
                return Ok(0.5 * (sum + prev_sum));
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        k += 1;
    }
    Err(Error::Accuracy {
        estimate: 0.5 * (sum + prev_sum),
        error_bound: (sum - prev_sum).abs(),
    })
}

/// Kernel value at distance s from the spectral side (Euclidean models only).
pub fn spectral_oracle(
    n: usize,
    fam: &KernelFamily,
    t: f64,
    s: f64,
    quad_spec: &QuadratureSpec,
) -> Result<f64> {
    let mult = match fam.id {
        FamilyId::Extension { sigma } => Multiplier::Extension { sigma },
        FamilyId::FracHeat { alpha } => Multiplier::Power { alpha },
        _ => {
            return Err(Error::Unsupported(
                "spectral oracle covers the extension and fractional heat families",
            ))
        }
    };
    spectral_inversion(n, mult, t, s, quad_spec)
}

/// Two-sided envelope shape of a kernel on a Li–Yau model.
pub fn kernel_envelope(fam: &KernelFamily, t: f64, s: f64) -> Result<f64> {
    check_t(t)?;
    if !fam.model.is_euclidean() {
        return Err(Error::Unsupported("kernel envelopes need a Li–Yau (Euclidean) model"));
    }
    let m = &fam.model;
    Ok(match fam.id {
        FamilyId::Extension { sigma } => {
            (t / (t + s)).powf(2.0 * sigma) / m.volume(t + s)
        }
        FamilyId::FracHeat { alpha } => {
            let l = t.powf(1.0 / alpha);
            t / (l + s).powf(alpha) / m.volume(l + s)
        }
        FamilyId::Heat => (-s * s / (4.0 * t)).exp() / m.volume(t.sqrt()),
        FamilyId::HypPoisson => {
            return Err(Error::Unsupported(
                "the hyperbolic Poisson envelope is provided by the hyperbolic module",
            ))
        }
    })
}

/// Poisson kernel e^{-t√-Δ} on H³:
/// (r / sinh r) · t K₂(√(t²+r²)) / (2π² (t²+r²)).
pub fn poisson_kernel_h3_closed(t: f64, r: f64) -> Result<f64> {
    check_t(t)?;
    if !(r >= 0.0) {
        return Err(Error::domain("r", r, "[0, inf)"));
    }
    Ok(ln_poisson_h3(t, r).exp())
}

/// ln p_t(r) on H³.
pub fn ln_poisson_h3(t: f64, r: f64) -> f64 {
    let z = t.hypot(r);
    ln_d_over_sinh(r) + t.ln() + k_scaled_unchecked(2.0, z).ln() - z
        - (2.0 * PI * PI).ln()
        - 2.0 * z.ln()
}

/// ln p_t(r + δ) − ln p_t(r), accurate for small δ at any r.
pub fn ln_poisson_h3_shift(t: f64, r: f64, delta: f64) -> f64 {
    let r2 = r + delta;
    if r < 1.0 || r2 < 1.0 {
        return ln_poisson_h3(t, r2) - ln_poisson_h3(t, r);
    }
    let (z, z2) = (t.hypot(r), t.hypot(r2));
    let dz2 = delta * (2.0 * r + delta);
    (delta / r).ln_1p() - ln_sinh_shift(r, delta)
        + (k_scaled_unchecked(2.0, z2).ln() - k_scaled_unchecked(2.0, z).ln())
        - dz2 / (z + z2)
        - (dz2 / (z * z)).ln_1p()
}

/// ln(p_t(r) · 4π sinh² r), arranged so that r and √(t²+r²) never cancel.
pub fn ln_poisson_h3_weighted(t: f64, r: f64) -> f64 {
    if r == 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = t.hypot(r);
    let r_minus_z = -t * t / (r + z);
    let sinh_excess = ln_sinh_excess(r);
    (4.0 * PI).ln() + r.ln() + sinh_excess + r_minus_z + t.ln() + k_scaled_unchecked(2.0, z).ln()
        - (2.0 * PI * PI).ln()
        - 2.0 * z.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn e(n: usize) -> ManifoldModel {
        ManifoldModel::euclidean(n).unwrap()
    }

    fn cauchy(t: f64, s: f64) -> f64 {
        t / (PI * (t * t + s * s))
    }

    #[test]
    fn family_invariants() {
        assert!(KernelFamily::extension(1.0, e(1)).is_err());
        assert!(KernelFamily::frac_heat(2.0, e(1)).is_err());
        assert_eq!(KernelFamily::frac_heat(1.5, e(1)).unwrap().gamma, 1.5);
        assert_eq!(KernelFamily::extension(0.3, e(2)).unwrap().gamma, 1.0);
        assert_eq!(KernelFamily::heat(e(1)).theta_gamma(), 0.5);
        let mut f = KernelFamily::hyp_poisson();
        f.model = e(1);
        assert!(Kernel::new(f).is_err());
    }

    #[test]
    fn adaptive_routes_match_cauchy() {
        let q = QuadratureSpec::default();
        let m = e(1);
        let o = Point::origin(1);
        for &t in &[1.0, 10.0] {
            for &s in &[0.0, 1.0, 5.0, 20.0] {
                let y = Point::on_axis(1, s);
                let ext = extension_kernel(0.5, t, &m, &o, &y, &q).unwrap();
                let fh = fractional_heat_kernel(1.0, t, &m, &o, &y, &q).unwrap();
                assert!(rel(ext, cauchy(t, s)) < 1e-8, "ext t={t} s={s}: {ext}");
                assert!(rel(fh, cauchy(t, s)) < 1e-8, "fh t={t} s={s}: {fh}");
            }
        }
    }

    #[test]
    fn tables_match_closed_forms() {
        for n in 1..=3 {
            for &sigma in &[0.25, 0.5, 0.75] {
                let k = Kernel::new(KernelFamily::extension(sigma, e(n)).unwrap()).unwrap();
                for &t in &[0.3, 1.0, 25.0] {
                    for &s in &[0.0, 0.7, 4.0, 1e3, 1e9, 1e20] {
                        let want = extension_kernel_euclidean_closed(sigma, n, t, s);
                        assert!(rel(k.at(t, s), want) < 1e-9, "n={n} σ={sigma} t={t} s={s}");
                    }
                }
            }
        }
        let k = Kernel::new(KernelFamily::frac_heat(1.0, e(1)).unwrap()).unwrap();
        for &t in &[0.1, 1.0, 1e2, 1e4] {
            for &s in &[0.0, 0.5, 3.0, 1e3, 1e8, 1e30] {
                assert!(rel(k.at(t, s), cauchy(t, s)) < 1e-9, "t={t} s={s}");
            }
        }
    }

    #[test]
    fn table_is_normalised() {
        for fam in [
            KernelFamily::extension(0.5, e(1)).unwrap(),
            KernelFamily::frac_heat(0.5, e(1)).unwrap(),
            KernelFamily::frac_heat(1.5, e(1)).unwrap(),
        ] {
            let mass = Kernel::new(fam).unwrap().table_mass().unwrap();
            // the σ and α/2 power tails beyond the table top are ≲ 1e-12
            assert!((mass - 1.0).abs() < 1e-10, "{:?}: {mass}", fam.id);
        }
    }

    #[test]
    fn table_agrees_with_adaptive_for_general_alpha() {
        let q = QuadratureSpec::default();
        let o = Point::origin(1);
        for &alpha in &[0.5, 1.5] {
            let k = Kernel::new(KernelFamily::frac_heat(alpha, e(1)).unwrap()).unwrap();
            for &s in &[0.0, 0.8, 7.0] {
                let y = Point::on_axis(1, s);
                let a = fractional_heat_kernel(alpha, 2.0, &e(1), &o, &y, &q).unwrap();
                assert!(rel(k.at(2.0, s), a) < 1e-8, "α={alpha} s={s}");
            }
        }
    }

    #[test]
    fn spectral_inversions() {
        let q = QuadratureSpec::default();
        // Gaussian pair
        for n in 1..=3 {
            for &s in &[0.0, 0.5, 2.0] {
                let v = spectral_inversion(n, Multiplier::Power { alpha: 2.0 }, 0.7, s, &q).unwrap();
                assert!(rel(v, e(n).heat_at(0.7, s)) < 1e-8, "n={n} s={s}");
            }
        }
        // extension σ = 1/2 multiplier is exp(-tλ)
        for &l in &[0.01, 0.5, 3.0, 40.0] {
            let m = Multiplier::Extension { sigma: 0.5 }.eval(2.0, l);
            assert!(rel(m, (-2.0 * l).exp()) < 1e-12);
        }
        let fam = KernelFamily::frac_heat(1.0, e(1)).unwrap();
        assert!(rel(spectral_oracle(1, &fam, 1.0, 0.0, &q).unwrap(), 1.0 / PI) < 1e-10);
    }

    #[test]
    fn dual_method_agreement() {
        let q = QuadratureSpec::default();
        for n in 1..=3 {
            for fam in [
                KernelFamily::extension(0.25, e(n)).unwrap(),
                KernelFamily::extension(0.5, e(n)).unwrap(),
                KernelFamily::frac_heat(0.5, e(n)).unwrap(),
                KernelFamily::frac_heat(1.5, e(n)).unwrap(),
            ] {
                let k = Kernel::new(fam).unwrap();
                for &t in &[1.0, 3.0] {
                    for &s in &[0.0, 1.0, 5.0] {
                        let spec = spectral_oracle(n, &fam, t, s, &q).unwrap();
                        assert!(
                            rel(k.at(t, s), spec) < 1e-6,
                            "n={n} {:?} t={t} s={s}: {} vs {spec}",
                            fam.id,
                            k.at(t, s)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn h3_poisson_closed_form_vs_subordination() {
        let h = ManifoldModel::hyperbolic3();
        let k = Kernel::new(KernelFamily::frac_heat(1.0, h).unwrap()).unwrap();
        for &t in &[1.0, 5.0] {
            for &r in &[0.0, 1.0, 10.0] {
                let c = poisson_kernel_h3_closed(t, r).unwrap();
                assert!(rel(k.at(t, r), c) < 1e-8, "t={t} r={r}");
            }
        }
        let r0 = poisson_kernel_h3_closed(3.0, 0.0).unwrap();
        let k2 = special_fn::bessel_k(2.0, 3.0).unwrap().value;
        assert!(rel(r0, 3.0 * k2 / (2.0 * PI * PI * 9.0)) < 1e-13);
    }

    #[test]
    fn h3_weighted_log_is_consistent() {
        let h = ManifoldModel::hyperbolic3();
        for &(t, r) in &[(1.0, 0.5), (5.0, 3.0), (20.0, 300.0)] {
            let a = ln_poisson_h3_weighted(t, r);
            let b = ln_poisson_h3(t, r) + h.ln_density(r);
            assert!((a - b).abs() < 1e-11, "t={t} r={r}");
        }
        assert!(ln_poisson_h3_weighted(20.0, 1e20).is_finite());
    }

    #[test]
    fn h3_shift_matches_direct_difference() {
        for &(t, r, d) in &[(2.0, 0.3, 0.7), (5.0, 3.0, -1.5), (10.0, 40.0, 0.8), (20.0, 300.0, -0.9)] {
            let direct = ln_poisson_h3(t, r + d) - ln_poisson_h3(t, r);
            assert!((ln_poisson_h3_shift(t, r, d) - direct).abs() < 1e-10 * (1.0 + direct.abs()));
        }
        // far out the direct difference is rounding noise; additivity still holds
        let (t, r) = (3.0, 1e12);
        let whole = ln_poisson_h3_shift(t, r, 0.75);
        let split = ln_poisson_h3_shift(t, r, 0.25) + ln_poisson_h3_shift(t, r + 0.25, 0.5);
        assert!((whole - split).abs() < 1e-12);
        assert!((whole + 2.0 * 0.75).abs() < 1e-9);
    }

    #[test]
    fn envelope_errors_and_shapes() {
        assert!(kernel_envelope(&KernelFamily::hyp_poisson(), 1.0, 0.0).is_err());
        let fam = KernelFamily::frac_heat(1.0, e(1)).unwrap();
        let a = kernel_envelope(&fam, 2.0, 1e4).unwrap();
        let b = kernel_envelope(&fam, 2.0, 2e4).unwrap();
        assert!(((a / b).log2() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn normalisation_on_every_model() {
        let q = QuadratureSpec::default().with_rel_tol(1e-9);
        let models = [e(1), e(2), e(3), ManifoldModel::hyperbolic3()];
        for m in models {
            for fam in [
                KernelFamily::extension(0.5, m).unwrap(),
                KernelFamily::frac_heat(0.5, m).unwrap(),
                KernelFamily::frac_heat(1.5, m).unwrap(),
            ] {
                let k = Kernel::new(fam).unwrap();
                for &t in &[0.5, 1.0, 10.0] {
                    let mass = k.total_mass(t, &q).unwrap();
                    assert!((mass - 1.0).abs() < 1e-6, "{:?} {:?} t={t}: {mass}", m.kind, fam.id);
                }
            }
        }
    }

    #[test]
    fn radially_decreasing() {
        for fam in [
            KernelFamily::extension(0.25, e(2)).unwrap(),
            KernelFamily::frac_heat(0.5, e(1)).unwrap(),
            KernelFamily::frac_heat(1.5, e(3)).unwrap(),
        ] {
            let k = Kernel::new(fam).unwrap();
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let s = 1e-3 * 1.15f64.powi(i);
                let v = k.at(1.0, s);
                assert!(v <= prev, "{:?} s={s}", fam.id);
                prev = v;
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn symmetric_and_positive(
                a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
                t in 0.1f64..20.0, sigma in 0.05f64..0.95,
            ) {
                let m = e(3);
                let x = Point::new(&[a, b, c]).unwrap();
                let y = Point::new(&[c, a, b]).unwrap();
                let k = Kernel::new(KernelFamily::extension(sigma, m).unwrap()).unwrap();
                let v = k.eval(t, &x, &y).unwrap();
                prop_assert!(v > 0.0);
                prop_assert_eq!(v, k.eval(t, &y, &x).unwrap());
                let want = extension_kernel_euclidean_closed(sigma, 3, t, m.distance(&x, &y).unwrap());
                prop_assert!(rel(v, want) < 1e-9);
            }

            #[test]
            fn h3_closed_form_positive_and_decreasing(t in 0.1f64..50.0, r in 0.0f64..100.0) {
                let a = poisson_kernel_h3_closed(t, r).unwrap();
                let b = poisson_kernel_h3_closed(t, r + 0.5).unwrap();
                prop_assert!(a > 0.0 && b < a);
            }
        }
    }
}
