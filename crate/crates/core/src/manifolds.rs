//! Model geometries: ℝⁿ for n ∈ {1, 2, 3} and hyperbolic 3-space in the
//! Poincaré ball.
//!
//! Both models are homogeneous, so every radial quantity is a function of the
//! geodesic distance alone. Radial integrals use the convention
//! `∫ g dμ = ∫_0^∞ g(r) radial_density(r) dr`, with the whole angular measure
//! folded into the density.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::quad::{self, Estimate, QuadratureSpec};

/// A point given by 1 to 3 coordinates. For the ball model the coordinates
/// must have Euclidean norm below 1.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    coords: [f64; 3],
    dim: usize,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > 3 {
            return Err(Error::domain(
                "point dimension",
                coords.len() as f64,
                "{1, 2, 3}",
            ));
        }
        let mut c = [0.0; 3];
        for (dst, &src) in c.iter_mut().zip(coords) {
            if !src.is_finite() {
                return Err(Error::domain("coordinate", src, "finite reals"));
            }
            *dst = src;
        }
        Ok(Point {
            coords: c,
            dim: coords.len(),
        })
    }

    pub fn origin(dim: usize) -> Self {
        Point {
            coords: [0.0; 3],
            dim: dim.clamp(1, 3),
        }
    }

    /// Point on the first axis.
    pub fn on_axis(dim: usize, x: f64) -> Self {
        let mut p = Point::origin(dim);
        p.coords[0] = x;
        p
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> f64 {
        norm3(&self.coords)
    }

    pub(crate) fn raw(&self) -> [f64; 3] {
        self.coords
    }
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn diff_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelKind {
    Euclidean(usize),
    HyperbolicBall3,
}

/// A concrete geometry together with the exponents that enter the kernel
/// estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ManifoldModel {
    pub kind: ModelKind,
    pub dim: usize,
    /// Half the sum of positive roots; 0 on ℝⁿ, 1 on H³.
    pub rho: f64,
    pub m_alpha: u32,
    pub m_2alpha: u32,
    /// Lower volume-comparison exponent ν′.
    pub nu_prime: f64,
    /// Upper volume-comparison exponent ν.
    pub nu: f64,
    pub hoelder_theta: f64,
}

impl ManifoldModel {
    pub fn euclidean(n: usize) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::domain("Euclidean dimension", n as f64, "{1, 2, 3}"));
        }
        Ok(ManifoldModel {
            kind: ModelKind::Euclidean(n),
            dim: n,
            rho: 0.0,
            m_alpha: 0,
            m_2alpha: 0,
            nu_prime: n as f64,
            nu: n as f64,
            hoelder_theta: 1.0,
        })
    }

    pub fn hyperbolic3() -> Self {
        ManifoldModel {
            kind: ModelKind::HyperbolicBall3,
            dim: 3,
            rho: 1.0,
            m_alpha: 2,
            m_2alpha: 0,
            nu_prime: 3.0,
            nu: 3.0,
            hoelder_theta: 1.0,
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, ModelKind::Euclidean(_))
    }

    pub fn is_hyperbolic(&self) -> bool {
        matches!(self.kind, ModelKind::HyperbolicBall3)
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::domain(
                "point dimension",
                x.dim() as f64,
                "the model dimension",
            ));
        }
        if self.is_hyperbolic() && !(x.norm() < 1.0) {
            return Err(Error::domain("ball-model norm", x.norm(), "[0, 1)"));
        }
        Ok(())
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        let (a, b) = (x.raw(), y.raw());
        Ok(match self.kind {
            ModelKind::Euclidean(_) => diff_sq(&a, &b).sqrt(),
            ModelKind::HyperbolicBall3 => {
                let num = diff_sq(&a, &b);
                let den = (1.0 - norm3(&a).powi(2)) * (1.0 - norm3(&b).powi(2));
                // cosh d - 1 = 2 sinh²(d/2) = 2|x-y|²/den
                2.0 * (num / den).sqrt().asinh()
            }
        })
    }

    /// Volume of the unit ball ω_n.
    pub fn unit_ball_volume(&self) -> f64 {
        match self.dim {
            1 => 2.0,
            2 => PI,
            _ => 4.0 * PI / 3.0,
        }
    }

    /// V(x, r); both models are homogeneous so `x` only fixes the model.
    pub fn ball_volume(&self, _x: &Point, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain("radius", r, "(0, inf)"));
        }
        Ok(self.volume(r))
    }

    pub(crate) fn volume(&self, r: f64) -> f64 {
        match self.kind {
            ModelKind::Euclidean(n) => self.unit_ball_volume() * r.powi(n as i32),
            ModelKind::HyperbolicBall3 => {
                if r < 1e-3 {
                    // sinh 2r - 2r = (2r)³/6 + (2r)⁵/120 + ...
                    let x = 2.0 * r;
                    PI * (x.powi(3) / 6.0 + x.powi(5) / 120.0 + x.powi(7) / 5040.0)
                } else {
                    PI * ((2.0 * r).sinh() - 2.0 * r)
                }
            }
        }
    }

    pub fn radial_density(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain("radius", r, "(0, inf)"));
        }
        Ok(self.ln_density(r).exp())
    }

    /// ln of the radial density; finite for every r > 0.
    pub fn ln_density(&self, r: f64) -> f64 {
        match self.kind {
            ModelKind::Euclidean(n) => {
                (n as f64 * self.unit_ball_volume()).ln() + (n as f64 - 1.0) * r.ln()
            }
            ModelKind::HyperbolicBall3 => (4.0 * PI).ln() + 2.0 * ln_sinh(r),
        }
    }

    /// Heat kernel h_t(x, y).
    pub fn heat_kernel(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain("t", t, "(0, inf)"));
        }
        let d = self.distance(x, y)?;
        Ok(self.heat_at(t, d))
    }

    /// Heat kernel as a function of the distance.
    pub fn heat_at(&self, t: f64, d: f64) -> f64 {
        self.ln_heat_at(t, d).exp()
    }

    pub fn ln_heat_at(&self, t: f64, d: f64) -> f64 {
        match self.kind {
            ModelKind::Euclidean(n) => {
                -0.5 * n as f64 * (4.0 * PI * t).ln() - d * d / (4.0 * t)
            }
            ModelKind::HyperbolicBall3 => {
                -1.5 * (4.0 * PI * t).ln() + ln_d_over_sinh(d) - t - d * d / (4.0 * t)
            }
        }
    }

    /// `∫ g dμ` for a radial `g`, starting with unit-width panels.
    pub fn integrate_radial<G: FnMut(f64) -> f64>(
        &self,
        g: G,
        quad: &QuadratureSpec,
    ) -> Result<Estimate> {
        self.integrate_radial_scaled(g, 1.0, quad)
    }

    /// As [`Self::integrate_radial`] with the first panel width set to `scale`.
    pub fn integrate_radial_scaled<G: FnMut(f64) -> f64>(
        &self,
        mut g: G,
        scale: f64,
        quad: &QuadratureSpec,
    ) -> Result<Estimate> {
        quad.validate()?;
        let mut f = |r: f64| {
            let v = g(r);
            if v == 0.0 {
                0.0
            } else {
                v.signum() * (v.abs().ln() + self.ln_density(r)).exp()
            }
        };
        quad::semi_infinite(&mut f, 0.0, scale, quad)
    }

    /// Radial integration of `exp(ln_g(r))`; the density is combined in log
    /// space so that neither factor has to be representable on its own.
    pub fn integrate_radial_ln<G: FnMut(f64) -> f64>(
        &self,
        mut ln_g: G,
        scale: f64,
        quad: &QuadratureSpec,
    ) -> Result<Estimate> {
        quad.validate()?;
        let mut f = |r: f64| (ln_g(r) + self.ln_density(r)).exp();
        quad::semi_infinite(&mut f, 0.0, scale, quad)
    }
}

/// ln sinh r − r, exact even where r itself swamps the difference.
pub fn ln_sinh_excess(r: f64) -> f64 {
    if r > 20.0 {
        -core::f64::consts::LN_2 + (-(-2.0 * r).exp()).ln_1p()
    } else {
        ln_sinh(r) - r
    }
}

/// ln sinh(r + δ) − ln sinh r without cancelling the two logarithms.
pub fn ln_sinh_shift(r: f64, delta: f64) -> f64 {
    let r2 = r + delta;
    if r > 20.0 && r2 > 20.0 {
        delta + (ln_sinh_excess(r2) - ln_sinh_excess(r))
    } else {
        ln_sinh(r2) - ln_sinh(r)
    }
}

/// ln sinh r, valid for all r > 0.
pub fn ln_sinh(r: f64) -> f64 {
    if r > 20.0 {
        r - core::f64::consts::LN_2 + (-(-2.0 * r).exp()).ln_1p()
    } else {
        r.sinh().ln()
    }
}

/// ln(d / sinh d) with the removable singularity at 0.
pub fn ln_d_over_sinh(d: f64) -> f64 {
    if d < 1e-4 {
        -d * d / 6.0
    } else {
        d.ln() - ln_sinh(d)
    }
}

/// Busemann function τ_b(y) = ln((1 - |y|²)/|y - b|²) for a boundary
/// direction b.
pub fn busemann(y: &Point, b: [f64; 3]) -> Result<f64> {
    let nb = norm3(&b);
    if (nb - 1.0).abs() > 1e-12 {
        return Err(Error::domain("boundary direction norm", nb, "{1}"));
    }
    let yr = y.raw();
    let ny = norm3(&yr);
    if !(ny < 1.0) {
        return Err(Error::domain("ball-model norm", ny, "[0, 1)"));
    }
    Ok(((1.0 - ny * ny) / diff_sq(&yr, &b)).ln())
}

/// Geodesic polar data of a ball-model point: hyperbolic radius and unit
/// direction (the first axis for the origin).
pub fn polar(y: &Point) -> (f64, [f64; 3]) {
    let c = y.raw();
    let n = norm3(&c);
    if n == 0.0 {
        return (0.0, [1.0, 0.0, 0.0]);
    }
    (2.0 * n.atanh(), [c[0] / n, c[1] / n, c[2] / n])
}

/// Ball-model point at hyperbolic distance `r` from the origin along `dir`.
pub fn ball_point(r: f64, dir: [f64; 3]) -> Result<Point> {
    let n = norm3(&dir);
    let a = (0.5 * r).tanh();
    if !(a < 1.0) {
        return Err(Error::domain("hyperbolic radius", r, "a representable ball point"));
    }
    Point::new(&[a * dir[0] / n, a * dir[1] / n, a * dir[2] / n])
}

/// `d(x, y) - r` on H³ for |x| = r, |y| = ρ and cos∠(x, y) = `cos_angle`.
///
/// Works for any r, including radii whose ball-model coordinates round to the
/// boundary.
pub fn offset_distance(r: f64, rho: f64, cos_angle: f64) -> f64 {
    if r <= 300.0 {
        // cosh d - 1 = 2 sinh²((r-ρ)/2) + sinh r sinh ρ (1 - cos)
        let s = (0.5 * (r - rho)).sinh();
        let x = 2.0 * s * s + r.sinh() * rho.sinh() * (1.0 - cos_angle);
        return 2.0 * (0.5 * x).sqrt().asinh() - r;
    }
    let (c, s) = (rho.cosh(), rho.sinh() * cos_angle);
    // e^{d-r}(1 + e^{-2d}) = C - S + e^{-2r}(C + S); e^{-2d} is far below
    // the rounding level here.
    let eps = (-2.0 * r).exp();
    (c - s).ln() + (eps * (c + s) / (c - s)).ln_1p()
}
