//! Initial data u₀ = ρc₁ + ρ²c₂ + v₀, u₁ = ρd₁ + v₁ in terms of the evolved
//! ψ = r u₀ and Π = r u₁. The expansion factors are switched on only for
//! r ≥ 2 so that the data stay regular at the center.

use crate::angular::{mode_index, AngularField, SphereGrid};
use crate::error::{Error, Result};
use crate::geometry::MetricModel;
use std::sync::Arc;

/// C^∞ bump exp(−1/(1−y²)) on (−1, 1), normalized to 1 at y = 0.
pub fn bump(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - y * y)).exp()
    }
}

pub fn bump_derivative(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - y * y;
        bump(y) * (-2.0 * y / (q * q))
    }
}

/// Smooth switch from 0 (r ≤ 1) to 1 (r ≥ 2) used for the far-field data.
pub fn far_switch(r: f64) -> f64 {
    if r <= 1.0 {
        0.0
    } else if r >= 2.0 {
        1.0
    } else {
        let a = bump_tail(r - 1.0);
        let b = bump_tail(2.0 - r);
        a / (a + b)
    }
}

fn bump_tail(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

fn far_switch_derivative(r: f64) -> f64 {
    let h = 1e-5;
    (far_switch(r + h) - far_switch(r - h)) / (2.0 * h)
}

/// Radial shapes of the compactly supported residual data.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// rφ = F(t − r) − F(t + r) at t = h(r) with F(x) = A·bump((x − c)/w):
    /// a flat-space solution restricted to the initial slice.
    FlatPulse { amplitude: f64, center: f64, width: f64 },
    /// φ₀ = A·bump((r − c)/w), φ₁ = 0.
    Bump { amplitude: f64, center: f64, width: f64 },
    /// φ₀ = 0, φ₁ = A·bump((r − c)/w).
    VelocityBump { amplitude: f64, center: f64, width: f64 },
    /// φ₀ = A·exp(−((r − c)/w)²), φ₁ = 0.
    Gaussian { amplitude: f64, center: f64, width: f64 },
}

impl Shape {
    /// (ψ₀, ∂_rψ₀, Π₀) at radius r on the slice t_* = 0.
    pub fn eval(&self, metric: &MetricModel, r: f64) -> (f64, f64, f64) {
        if !r.is_finite() {
            return (0.0, 0.0, 0.0);
        }
        match *self {
            Shape::FlatPulse { amplitude, center, width } => {
                let h = metric.height_at(r);
                let dh = metric.dheight(r);
                let f = |x: f64| amplitude * bump((x - center) / width);
                let df = |x: f64| amplitude * bump_derivative((x - center) / width) / width;
                let (xm, xp) = (h - r, h + r);
                let psi = f(xm) - f(xp);
                let dpsi = df(xm) * (dh - 1.0) - df(xp) * (dh + 1.0);
                let pi = df(xm) - df(xp);
                (psi, dpsi, pi)
            }
            Shape::Bump { amplitude, center, width } => {
                let y = (r - center) / width;
                let u = amplitude * bump(y);
                let du = amplitude * bump_derivative(y) / width;
                (r * u, u + r * du, 0.0)
            }
            Shape::VelocityBump { amplitude, center, width } => {
                let y = (r - center) / width;
                (0.0, 0.0, r * amplitude * bump(y))
            }
            Shape::Gaussian { amplitude, center, width } => {
                let y = (r - center) / width;
                let u = amplitude * (-y * y).exp();
                let du = -2.0 * y / width * u;
                (r * u, u + r * du, 0.0)
            }
        }
    }

    /// Radius beyond which the residual vanishes (infinity if not compact).
    pub fn support_radius(&self, metric: &MetricModel) -> f64 {
        match *self {
            Shape::FlatPulse { center, width, .. } => {
                // F(h + r) = 0 once h(r) + r ≥ c + w; F(h − r) = 0 once h(r) − r ≤ c − w.
                let hi = center + width;
                let lo = center - width;
                let mut r = 0.0;
                while r < 1e4 {
                    let h = metric.height_at(r);
                    if h + r >= hi && h - r <= lo {
                        return r;
                    }
                    r += 1e-3;
                }
                f64::INFINITY
            }
            Shape::Bump { center, width, .. } | Shape::VelocityBump { center, width, .. } => center + width,
            Shape::Gaussian { .. } => f64::INFINITY,
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Shape::FlatPulse { amplitude, .. }
            | Shape::Bump { amplitude, .. }
            | Shape::VelocityBump { amplitude, .. }
            | Shape::Gaussian { amplitude, .. } => amplitude,
        }
    }

    pub fn with_amplitude(&self, a: f64) -> Shape {
        match *self {
            Shape::FlatPulse { center, width, .. } => Shape::FlatPulse { amplitude: a, center, width },
            Shape::Bump { center, width, .. } => Shape::Bump { amplitude: a, center, width },
            Shape::VelocityBump { center, width, .. } => Shape::VelocityBump { amplitude: a, center, width },
            Shape::Gaussian { center, width, .. } => Shape::Gaussian { amplitude: a, center, width },
        }
    }
}

/// A residual piece v₀, v₁ carried by one real harmonic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModeShape {
    pub l: usize,
    pub m: i64,
    #[serde(flatten)]
    pub shape: Shape,
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub c1: AngularField,
    pub c2: AngularField,
    pub d1: AngularField,
    pub residual: Vec<ModeShape>,
}

impl InitialData {
    pub fn compact(grid: &Arc<SphereGrid>, residual: Vec<ModeShape>) -> Self {
        InitialData {
            c1: AngularField::zeros(grid),
            c2: AngularField::zeros(grid),
            d1: AngularField::zeros(grid),
            residual,
        }
    }

    pub fn spherical(grid: &Arc<SphereGrid>, shape: Shape) -> Self {
        Self::compact(grid, vec![ModeShape { l: 0, m: 0, shape }])
    }

    pub fn is_compact(&self) -> bool {
        self.c1.max_abs() == 0.0 && self.c2.max_abs() == 0.0 && self.d1.max_abs() == 0.0
    }

    /// Spherically symmetric (ψ₀, ∂_rψ₀, Π₀) at r, holding actual field values.
    pub fn eval_spherical(&self, metric: &MetricModel, r: f64) -> Result<(f64, f64, f64)> {
        for f in [&self.c1, &self.c2, &self.d1] {
            if !f.is_constant(1e-12) {
                return Err(Error::Precondition("spherical data need constant angular factors".into()));
            }
        }
        let mut out = self.far_terms(r, self.c1.average(), self.c2.average(), self.d1.average());
        for ms in &self.residual {
            if ms.l != 0 {
                return Err(Error::Precondition("spherical data may only carry l = 0 residuals".into()));
            }
            let (a, b, c) = ms.shape.eval(metric, r);
            out.0 += a;
            out.1 += b;
            out.2 += c;
        }
        Ok(out)
    }

    /// Harmonic coefficients of (ψ₀, ∂_rψ₀, Π₀) for the real harmonic (l, m).
    pub fn eval_mode(&self, metric: &MetricModel, r: f64, l: usize, m: i64) -> (f64, f64, f64) {
        let idx = mode_index(l, m);
        let c1 = self.c1.coeffs().get(idx).copied().unwrap_or(0.0);
        let c2 = self.c2.coeffs().get(idx).copied().unwrap_or(0.0);
        let d1 = self.d1.coeffs().get(idx).copied().unwrap_or(0.0);
        let mut out = self.far_terms(r, c1, c2, d1);
        for ms in self.residual.iter().filter(|ms| ms.l == l && ms.m == m) {
            let (a, b, c) = ms.shape.eval(metric, r);
            out.0 += a;
            out.1 += b;
            out.2 += c;
        }
        out
    }

    fn far_terms(&self, r: f64, c1: f64, c2: f64, d1: f64) -> (f64, f64, f64) {
        if !r.is_finite() {
            return (c1, 0.0, d1);
        }
        let chi = far_switch(r);
        if chi == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let dchi = far_switch_derivative(r);
        let psi = chi * (c1 + c2 / r);
        let dpsi = dchi * (c1 + c2 / r) - chi * c2 / (r * r);
        (psi, dpsi, chi * d1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_smooth_and_normalized() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        let h = 1e-6;
        for &y in &[-0.7, 0.1, 0.5] {
            let fd = (bump(y + h) - bump(y - h)) / (2.0 * h);
            assert!((fd - bump_derivative(y)).abs() < 1e-8);
        }
    }

    #[test]
    fn flat_pulse_support() {
        let metric = crate::geometry::build_metric(
            crate::geometry::MetricKind::MinkowskiHyperboloidal,
            0.0,
            crate::geometry::Height::hyperboloidal(2.0),
        )
        .unwrap();
        let s = Shape::FlatPulse { amplitude: 1.0, center: 0.8, width: 1.5 };
        let r0 = s.support_radius(&metric);
        assert!(r0 > 1.0 && r0 < 3.0, "{r0}");
        for &r in &[r0 + 0.01, r0 + 1.0, 50.0] {
            let (a, b, c) = s.eval(&metric, r);
            assert_eq!((a, b, c), (0.0, 0.0, 0.0));
        }
        // ψ₀′ consistent with finite differences
        let h = 1e-6;
        for &r in &[0.3, 1.1] {
            let fd = (s.eval(&metric, r + h).0 - s.eval(&metric, r - h).0) / (2.0 * h);
            assert!((fd - s.eval(&metric, r).1).abs() < 1e-6);
        }
    }

    #[test]
    fn far_terms_regular() {
        let g = SphereGrid::new(0);
        let mut d = InitialData::compact(&g, vec![]);
        d.c1 = AngularField::constant(&g, 2.0);
        let m = MetricModel::flat();
        assert_eq!(d.eval_spherical(&m, 0.5).unwrap().0, 0.0);
        assert_eq!(d.eval_spherical(&m, f64::INFINITY).unwrap().0, 2.0);
        assert_eq!(d.eval_spherical(&m, 3.0).unwrap().0, 2.0);
    }
}
