//! Stationary, spherically symmetric, asymptotically flat backgrounds in
//! hyperboloidal coordinates (t_*, r, ω), and the pieces of the wave
//! operator split □ = □̂(0) − g^00 ∂²_{t_*} − 2ρ ∂_{t_*} Q.
//!
//! All models have |g|^{1/2} = r² sin θ and dual metric
//! g^{00} ∂_{t_*}² + 2 g^{0r} ∂_{t_*}∂_r + G ∂_r² + r⁻² g_{S²}⁻¹.

use std::fmt;
use std::sync::Arc;

use crate::angular::{AngularField, SphereGrid};
use crate::error::{Error, Result};
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    MinkowskiHyperboloidal,
    MassDeformed,
    NormalForm,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MetricKind::MinkowskiHyperboloidal => "minkowski_hyperboloidal",
            MetricKind::MassDeformed => "mass_deformed",
            MetricKind::NormalForm => "normal_form",
        };
        f.write_str(s)
    }
}

/// Slicing height, t_* = t − h(r).
#[derive(Clone)]
pub enum Height {
    /// h(r) = √(S² + r²) − S. `scale = 1` is the default slicing.
    Hyperboloidal { scale: f64 },
    /// Arbitrary h′(r) on a flat background. Profiles only; evolution
    /// needs the closed-form hyperboloidal family.
    Custom { name: String, dh: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl Default for Height {
    fn default() -> Self {
        Height::Hyperboloidal { scale: 1.0 }
    }
}

impl fmt::Debug for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl Height {
    pub fn hyperboloidal(scale: f64) -> Self {
        Height::Hyperboloidal { scale }
    }

    pub fn scale(&self) -> Option<f64> {
        match self {
            Height::Hyperboloidal { scale } => Some(*scale),
            Height::Custom { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Height::Hyperboloidal { scale } => format!("h(r) = sqrt({scale}^2 + r^2) - {scale}"),
            Height::Custom { name, .. } => format!("custom: {name}"),
        }
    }
}

/// (k − 1)/ρ², evaluated without cancellation.
fn k_minus_one_over_rho2(s: f64, rho: f64) -> f64 {
    let q = (1.0 + s * s * rho * rho).sqrt();
    -s * s / (q * (1.0 + q))
}

/// r k′(r)/ρ², which tends to S² at scri.
fn rdk_over_rho2(s: f64, rho: f64) -> f64 {
    s * s / (1.0 + s * s * rho * rho).powf(1.5)
}

#[derive(Debug, Clone)]
pub struct MetricModel {
    pub kind: MetricKind,
    pub mass: f64,
    pub height: Height,
    /// Core radius r_c of the mass-deformed profile F = 1 − 2m r²/(r³ + r_c³).
    pub core_radius: f64,
    /// ρ² coefficient of g^00 for the normal-form family.
    pub normal_gtilde: f64,
}

pub const DEFAULT_CORE_FACTOR: f64 = 4.0;

/// Build and validate a background.
pub fn build_metric(kind: MetricKind, mass: f64, height: Height) -> Result<MetricModel> {
    build_metric_with_core(kind, mass, height, DEFAULT_CORE_FACTOR * mass)
}

pub fn build_metric_with_core(kind: MetricKind, mass: f64, height: Height, core_radius: f64) -> Result<MetricModel> {
    if !(mass >= 0.0) || !mass.is_finite() {
        return Err(Error::InvalidParameter(format!("mass must be >= 0, got {mass}")));
    }
    if let Height::Hyperboloidal { scale } = height {
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!("height scale must be > 0, got {scale}")));
        }
    }
    match kind {
        MetricKind::MinkowskiHyperboloidal if mass != 0.0 => {
            return Err(Error::InvalidParameter("minkowski_hyperboloidal requires mass 0".into()));
        }
        MetricKind::MassDeformed => {
            if matches!(height, Height::Custom { .. }) {
                return Err(Error::Unsupported("mass_deformed needs the hyperboloidal height family".into()));
            }
            if mass > 0.0 && !(core_radius > 0.0) {
                return Err(Error::InvalidParameter("core radius must be > 0".into()));
            }
        }
        _ => {}
    }
    let model = MetricModel { kind, mass, height, core_radius, normal_gtilde: -1.0 };
    for i in 1..4000 {
        let s = i as f64 / 4000.0;
        let r = 2.0 * s / (1.0 - s);
        let v = model.g00(r);
        if !(v < 0.0) {
            return Err(Error::NotTimelike { r, value: v });
        }
        if model.kind == MetricKind::MassDeformed && model.f_r(r) <= 0.0 {
            return Err(Error::InvalidParameter(format!("profile has a horizon near r = {r}")));
        }
    }
    Ok(model)
}

/// Tortoise coordinate r + 2m log(r − 2m).
pub fn tortoise(r: f64, m: f64) -> Result<f64> {
    if m < 0.0 {
        return Err(Error::Domain(format!("mass must be >= 0, got {m}")));
    }
    if m == 0.0 {
        return Ok(r);
    }
    if r <= 2.0 * m {
        return Err(Error::Domain(format!("tortoise needs r > 2m, got r = {r}, m = {m}")));
    }
    Ok(r + 2.0 * m * (r - 2.0 * m).ln())
}

impl MetricModel {
    pub fn flat() -> Self {
        build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::default()).expect("flat metric")
    }

    pub fn scale(&self) -> f64 {
        self.height.scale().unwrap_or(1.0)
    }

    fn f_r(&self, r: f64) -> f64 {
        match self.kind {
            MetricKind::MassDeformed if self.mass > 0.0 => {
                let rc3 = self.core_radius.powi(3);
                1.0 - 2.0 * self.mass * r * r / (r * r * r + rc3)
            }
            MetricKind::NormalForm => 1.0 - 2.0 * self.mass / r,
            _ => 1.0,
        }
    }

    fn f_rho(&self, rho: f64) -> f64 {
        match self.kind {
            MetricKind::MassDeformed if self.mass > 0.0 => {
                let rc3 = self.core_radius.powi(3);
                1.0 - 2.0 * self.mass * rho / (1.0 + rc3 * rho.powi(3))
            }
            MetricKind::NormalForm => 1.0 - 2.0 * self.mass * rho,
            _ => 1.0,
        }
    }

    /// h′(r).
    pub fn dheight(&self, r: f64) -> f64 {
        match &self.height {
            Height::Custom { dh, .. } => dh(r),
            Height::Hyperboloidal { scale } => {
                let k = r / (scale * scale + r * r).sqrt();
                k / self.f_r(r)
            }
        }
    }

    /// h(r), in closed form when available.
    pub fn height_at(&self, r: f64) -> f64 {
        match (&self.height, self.kind) {
            (Height::Hyperboloidal { scale }, MetricKind::MinkowskiHyperboloidal) => {
                r * r / ((scale * scale + r * r).sqrt() + scale)
            }
            (Height::Hyperboloidal { scale }, MetricKind::MassDeformed) if self.mass == 0.0 => {
                r * r / ((scale * scale + r * r).sqrt() + scale)
            }
            _ => quadrature::integrate(|x| self.dheight(x), 0.0, r, 1e-13, 1e-12).0,
        }
    }

    /// g^{t_* t_*}(r, ω).
    pub fn g00(&self, r: f64) -> f64 {
        match (&self.height, self.kind) {
            (_, MetricKind::NormalForm) => self.normal_gtilde / (r * r),
            (Height::Custom { dh, .. }, _) => {
                let d = dh(r);
                -1.0 + d * d
            }
            (Height::Hyperboloidal { scale }, _) => {
                let s2 = scale * scale;
                -s2 / ((s2 + r * r) * self.f_r(r))
            }
        }
    }

    /// g^{t_* r}.
    pub fn g0r(&self, r: f64) -> f64 {
        match (&self.height, self.kind) {
            (_, MetricKind::NormalForm) => -1.0,
            (Height::Custom { dh, .. }, _) => -dh(r),
            (Height::Hyperboloidal { scale }, _) => -r / (scale * scale + r * r).sqrt(),
        }
    }

    /// ∂_r g^{t_* r}.
    pub fn dg0r(&self, r: f64) -> f64 {
        match (&self.height, self.kind) {
            (_, MetricKind::NormalForm) => 0.0,
            (Height::Custom { dh, .. }, _) => {
                let e = 1e-5 * (1.0 + r);
                -(dh(r + e) - dh((r - e).max(0.0))) / (r + e - (r - e).max(0.0))
            }
            (Height::Hyperboloidal { scale }, _) => -scale * scale / (scale * scale + r * r).powf(1.5),
        }
    }

    /// g^{rr} = G(r).
    pub fn grr(&self, r: f64) -> f64 {
        self.f_r(r)
    }

    pub fn g00_profile(&self, r: f64, _omega: (f64, f64)) -> f64 {
        self.g00(r)
    }

    pub fn g0x_profile(&self, r: f64, _omega: (f64, f64)) -> f64 {
        self.g0r(r)
    }

    pub fn gxx_profile(&self, r: f64, _omega: (f64, f64)) -> f64 {
        self.grr(r)
    }

    /// |dg_X| = sqrt_det · dr dω.
    pub fn sqrt_det(&self, r: f64, _omega: (f64, f64)) -> f64 {
        r * r
    }

    /// ρ⁻² g^00 as a function of ρ (finite at ρ = 0).
    pub fn g00_over_rho2(&self, rho: f64) -> f64 {
        match (&self.height, self.kind) {
            (_, MetricKind::NormalForm) => self.normal_gtilde,
            (Height::Custom { dh, .. }, _) => {
                let d = dh(1.0 / rho);
                (-1.0 + d * d) / (rho * rho)
            }
            (Height::Hyperboloidal { scale }, _) => {
                let s2 = scale * scale;
                -s2 / ((1.0 + s2 * rho * rho) * self.f_rho(rho))
            }
        }
    }

    /// G as a function of ρ.
    pub fn grr_rho(&self, rho: f64) -> f64 {
        self.f_rho(rho)
    }

    /// ρ ∂_ρ G.
    pub fn rho_dgrr_rho(&self, rho: f64) -> f64 {
        match self.kind {
            MetricKind::MassDeformed if self.mass > 0.0 => {
                let rc3 = self.core_radius.powi(3);
                let q = 1.0 + rc3 * rho.powi(3);
                -2.0 * self.mass * rho * (1.0 - 2.0 * rc3 * rho.powi(3)) / (q * q)
            }
            MetricKind::NormalForm => -2.0 * self.mass * rho,
            _ => 0.0,
        }
    }

    /// G′(r)/ρ² in ρ form (finite at scri, → 2m).
    pub fn dgrr_over_rho2(&self, rho: f64) -> f64 {
        match self.kind {
            MetricKind::MassDeformed if self.mass > 0.0 => {
                let rc3 = self.core_radius.powi(3);
                let q = 1.0 + rc3 * rho.powi(3);
                2.0 * self.mass * (1.0 - 2.0 * rc3 * rho.powi(3)) / (q * q)
            }
            MetricKind::NormalForm => 2.0 * self.mass,
            _ => 0.0,
        }
    }

    /// G′(r).
    pub fn dgrr_r(&self, r: f64) -> f64 {
        match self.kind {
            MetricKind::MassDeformed if self.mass > 0.0 => {
                let rc3 = self.core_radius.powi(3);
                let q = r * r * r + rc3;
                2.0 * self.mass * r * (r * r * r - 2.0 * rc3) / (q * q)
            }
            MetricKind::NormalForm => 2.0 * self.mass / (r * r),
            _ => 0.0,
        }
    }

    /// Expansion data g̃ = lim ρ⁻² g^00 and g₃ = ρ³ coefficient of g^00.
    pub fn expansion(&self) -> (f64, f64) {
        match (&self.height, self.kind) {
            (_, MetricKind::NormalForm) => (self.normal_gtilde, 0.0),
            (Height::Hyperboloidal { scale }, _) => {
                let s2 = scale * scale;
                (-s2, -2.0 * self.mass * s2)
            }
            (Height::Custom { .. }, _) => {
                // Richardson extrapolation of ρ⁻²g^00 to ρ = 0.
                let f = |rho: f64| self.g00_over_rho2(rho);
                let h = 1e-3;
                let g0 = (4.0 * f(h / 2.0) - f(h)) / 3.0;
                let g3 = (f(h) - g0) / h;
                (g0, g3)
            }
        }
    }
}

/// A radial × angular profile on a log-uniform ρ grid (ρ ascending).
#[derive(Debug, Clone)]
pub struct Profile {
    pub rho: Vec<f64>,
    pub values: Vec<AngularField>,
}

impl Profile {
    pub fn log_grid(
        rho_min: f64,
        rho_max: f64,
        n: usize,
        grid: &Arc<SphereGrid>,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Self {
        let (a, b) = (rho_min.ln(), rho_max.ln());
        let rho: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
        let values = rho.iter().map(|&r| AngularField::from_fn(grid, |th, ph| f(r, th, ph))).collect();
        Profile { rho, values }
    }

    pub fn radial(rho: Vec<f64>, grid: &Arc<SphereGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = rho.iter().map(|&r| AngularField::constant(grid, f(r))).collect();
        Profile { rho, values }
    }

    fn log_step(&self) -> Result<f64> {
        if self.rho.len() < 7 {
            return Err(Error::Shape("profile needs at least 7 radial points".into()));
        }
        let h = (self.rho[1] / self.rho[0]).ln();
        for w in self.rho.windows(2) {
            if ((w[1] / w[0]).ln() - h).abs() > 1e-9 * h.abs() {
                return Err(Error::Shape("profile grid is not log-uniform".into()));
            }
        }
        Ok(h)
    }

    fn map_nodes(&self, f: impl Fn(usize, usize) -> f64) -> Profile {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| AngularField { grid: v.grid.clone(), values: (0..v.values.len()).map(|k| f(j, k)).collect() })
            .collect();
        Profile { rho: self.rho.clone(), values }
    }

    /// ρ∂_ρ by fourth-order differences in log ρ.
    pub fn rho_d(&self) -> Result<Profile> {
        let h = self.log_step()?;
        let n = self.rho.len();
        Ok(self.map_nodes(|j, k| {
            let u = |i: usize| self.values[i].values[k];
            let (c, base): ([f64; 5], usize) = match j {
                0 => ([-25.0, 48.0, -36.0, 16.0, -3.0], 0),
                1 => ([-3.0, -10.0, 18.0, -6.0, 1.0], 0),
                j if j == n - 2 => ([-1.0, 6.0, -18.0, 10.0, 3.0], n - 5),
                j if j == n - 1 => ([3.0, -16.0, 36.0, -48.0, 25.0], n - 5),
                j => ([1.0, -8.0, 0.0, 8.0, -1.0], j - 2),
            };
            (0..5).map(|i| c[i] * u(base + i)).sum::<f64>() / (12.0 * h)
        }))
    }

    /// (ρ∂_ρ)² by fourth-order differences in log ρ.
    pub fn rho_d2(&self) -> Result<Profile> {
        let h = self.log_step()?;
        let n = self.rho.len();
        Ok(self.map_nodes(|j, k| {
            let u = |i: usize| self.values[i].values[k];
            let (c, base): (&[f64], usize) = match j {
                0 => (&[45.0, -154.0, 214.0, -156.0, 61.0, -10.0], 0),
                1 => (&[10.0, -15.0, -4.0, 14.0, -6.0, 1.0], 0),
                j if j == n - 2 => (&[1.0, -6.0, 14.0, -4.0, -15.0, 10.0], n - 6),
                j if j == n - 1 => (&[-10.0, 61.0, -156.0, 214.0, -154.0, 45.0], n - 6),
                j => (&[-1.0, 16.0, -30.0, 16.0, -1.0], j - 2),
            };
            c.iter().enumerate().map(|(i, ci)| ci * u(base + i)).sum::<f64>() / (12.0 * h * h)
        }))
    }

    pub fn laplacian(&self) -> Profile {
        Profile { rho: self.rho.clone(), values: self.values.iter().map(|v| v.laplacian()).collect() }
    }

    pub fn combine(&self, other: &Profile, f: impl Fn(f64, f64, f64) -> f64) -> Profile {
        self.map_nodes(|j, k| f(self.rho[j], self.values[j].values[k], other.values[j].values[k]))
    }

    pub fn scale_by(&self, f: impl Fn(f64) -> f64) -> Profile {
        self.map_nodes(|j, k| f(self.rho[j]) * self.values[j].values[k])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.max_abs()).fold(0.0, f64::max)
    }
}

/// The pieces of □ in the split □̂(0), g^00, Q, with L₀ = −(ρ∂_ρ)² + ρ∂_ρ + Δ_ω
/// and L₁ = 2m(ρ∂_ρ)².
#[derive(Debug, Clone)]
pub struct OperatorDecomposition {
    pub mass: f64,
    pub gtilde: AngularField,
    pub g3: AngularField,
    pub metric: MetricModel,
}

impl OperatorDecomposition {
    pub fn new(metric: &MetricModel, grid: &Arc<SphereGrid>) -> Self {
        let (gt, g3) = metric.expansion();
        OperatorDecomposition {
            mass: metric.mass,
            gtilde: AngularField::constant(grid, gt),
            g3: AngularField::constant(grid, g3),
            metric: metric.clone(),
        }
    }

    /// Coefficient of ρ∂_ρ² in L₁.
    pub fn l1_coefficient(&self) -> f64 {
        2.0 * self.mass
    }

    pub fn box0_action(&self, u: &Profile) -> Result<Profile> {
        apply_box_zero(self, u)
    }

    /// Q̃ = ρ⁻²(Q − Q₀), Q₀ = ρ∂_ρ − 1.
    pub fn qtilde_action(&self, u: &Profile) -> Result<Profile> {
        if self.metric.kind == MetricKind::NormalForm {
            return Ok(u.scale_by(|_| 0.0));
        }
        let s = self.metric.scale();
        let du = u.rho_d()?;
        Ok(du.combine(u, |rho, d, v| {
            let km1 = k_minus_one_over_rho2(s, rho);
            km1 * d - km1 * v - 0.5 * rdk_over_rho2(s, rho) * v
        }))
    }

    /// Q̃₁ = ρ⁻¹ ∘ Q̃ ∘ ρ.
    pub fn qtilde1_action(&self, u: &Profile) -> Result<Profile> {
        let ru = u.scale_by(|rho| rho);
        Ok(self.qtilde_action(&ru)?.scale_by(|rho| 1.0 / rho))
    }

    /// Q̃₁ at ρ = 0 on functions of ω alone: multiplication by this field.
    pub fn qtilde1_at_scri(&self) -> AngularField {
        let v = if self.metric.kind == MetricKind::NormalForm {
            0.0
        } else {
            let s = self.metric.scale();
            -0.5 * rdk_over_rho2(s, 0.0)
        };
        AngularField::constant(&self.gtilde.grid, v)
    }

    /// L₂ = ρ⁻²(ρ⁻²□̂(0) − L₀ − ρL₁).
    pub fn l2_action(&self, u: &Profile) -> Result<Profile> {
        if self.metric.kind == MetricKind::NormalForm {
            return Ok(u.scale_by(|_| 0.0));
        }
        let d1 = u.rho_d()?;
        let d2 = u.rho_d2()?;
        let m = self.mass;
        let metric = &self.metric;
        // ρ⁻²□̂(0)u − L₀u − ρL₁u = (1 − G − 2mρ) D²u + (G − DG − 1) Du
        let a = d2.combine(&d1, |rho, d2v, d1v| {
            let g = metric.grr_rho(rho);
            let dg = metric.rho_dgrr_rho(rho);
            ((1.0 - g - 2.0 * m * rho) * d2v + (g - dg - 1.0) * d1v) / (rho * rho)
        });
        Ok(a)
    }
}

/// □̂(0)u = ρ²(−G(ρ∂_ρ)²u + (G − ρ∂_ρG)ρ∂_ρu + Δ_ω u).
pub fn apply_box_zero(decomp: &OperatorDecomposition, u: &Profile) -> Result<Profile> {
    let d1 = u.rho_d()?;
    let d2 = u.rho_d2()?;
    let lap = u.laplacian();
    let metric = &decomp.metric;
    let out = u.map_nodes(|j, k| {
        let rho = u.rho[j];
        let g = metric.grr_rho(rho);
        let dg = metric.rho_dgrr_rho(rho);
        rho * rho * (-g * d2.values[j].values[k] + (g - dg) * d1.values[j].values[k] + lap.values[j].values[k])
    });
    Ok(out)
}

fn tail_exponent(g: &dyn Fn(f64) -> f64) -> Option<f64> {
    let pts = [1e3, 1e4, 1e5];
    let vals: Vec<f64> = pts.iter().map(|&r| g(r).abs()).collect();
    if vals.iter().all(|v| *v == 0.0) {
        return None;
    }
    if vals.iter().any(|v| *v == 0.0) {
        return None;
    }
    // decay exponent in ρ = 1/r from the two outer samples
    Some((vals[1] / vals[2]).ln() / (pts[2] / pts[1]).ln())
}

/// ∫_X g |dg_X| for a closure g(r, θ, φ).
pub fn volume_integral(
    metric: &MetricModel,
    grid: &Arc<SphereGrid>,
    g: impl Fn(f64, f64, f64) -> f64,
) -> Result<f64> {
    let mut total = 0.0;
    for node in 0..grid.len() {
        let (th, ph) = grid.node(node);
        let radial = |r: f64| g(r, th, ph);
        if let Some(e) = tail_exponent(&radial) {
            if e < 3.5 {
                return Err(Error::NonIntegrable(format!("integrand decays like rho^{e:.2} (< 3.5)")));
            }
        }
        let f = |r: f64| num_complex::Complex64::new(radial(r) * metric.sqrt_det(r, (th, ph)), 0.0);
        let v = quadrature::integrate_complex_semi_infinite(f, 0.0, &[1.0, 3.0, 10.0, 30.0], 1e-14, 1e-12);
        total += grid.weights[node] * v.value.re;
    }
    Ok(total)
}

/// ∫_X g |dg_X| for spherically symmetric samples on the uniform s-grid
/// r = 2s/(1−s), including s = 1 where `g r² dr/ds` is taken as its limit
/// from the supplied samples.
pub fn volume_integral_sampled(s: &[f64], g: &[f64]) -> Result<f64> {
    let n = s.len();
    if n < 9 || n != g.len() {
        return Err(Error::Shape("need at least 9 matching samples".into()));
    }
    // tail exponent from samples near scri
    let rho_at = |i: usize| (1.0 - s[i]) / (2.0 * s[i]);
    let (i1, i2) = (n - 2, n - 5);
    if g[i1] != 0.0 && g[i2] != 0.0 {
        let e = (g[i2].abs() / g[i1].abs()).ln() / (rho_at(i2) / rho_at(i1)).ln();
        if e < 3.5 && g[i2].abs() > 1e-300 {
            return Err(Error::NonIntegrable(format!("sampled integrand decays like rho^{e:.2}")));
        }
    }
    let mut y: Vec<f64> = (0..n)
        .map(|i| {
            let si = s[i];
            if si >= 1.0 {
                f64::NAN
            } else {
                let r = 2.0 * si / (1.0 - si);
                let drds = 2.0 / ((1.0 - si) * (1.0 - si));
                g[i] * r * r * drds
            }
        })
        .collect();
    if y[n - 1].is_nan() {
        // quadratic extrapolation of the regular integrand to s = 1
        y[n - 1] = 3.0 * y[n - 2] - 3.0 * y[n - 3] + y[n - 4];
    }
    Ok(4.0 * std::f64::consts::PI * quadrature::trapezoid(s, &y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_g00_closed_form() {
        let m = MetricModel::flat();
        for &r in &[0.0, 0.3, 1.0, 7.0, 1e3] {
            assert!((m.g00(r) + 1.0 / (1.0 + r * r)).abs() < 1e-15);
            let d = m.dheight(r);
            assert!((m.g00(r) - (-1.0 + d * d)).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_gtilde_is_minus_one() {
        let m = MetricModel::flat();
        let (gt, g3) = m.expansion();
        assert_eq!(gt, -1.0);
        assert_eq!(g3, 0.0);
        assert!((m.g00_over_rho2(1e-6) + 1.0).abs() < 1e-11);
    }

    #[test]
    fn normal_form_l1() {
        let m = build_metric(MetricKind::NormalForm, 1.0, Height::default()).unwrap();
        let d = OperatorDecomposition::new(&m, &SphereGrid::new(2));
        assert_eq!(d.l1_coefficient(), 2.0);
    }

    #[test]
    fn tortoise_values() {
        assert_eq!(tortoise(3.0, 0.0).unwrap(), 3.0);
        assert!((tortoise(4.0, 1.0).unwrap() - 5.386294).abs() < 1e-6);
        assert!((tortoise(2.5, 1.0).unwrap() - 1.113706).abs() < 1e-6);
        assert!(tortoise(2.0, 1.0).is_err());
    }

    #[test]
    fn custom_height_must_be_timelike() {
        let h = Height::Custom { name: "steep".into(), dh: Arc::new(|r: f64| 1.2 * r / (1.0 + r)) };
        assert!(matches!(
            build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, h),
            Err(Error::NotTimelike { .. })
        ));
        assert!(build_metric(MetricKind::MassDeformed, -1.0, Height::default()).is_err());
    }

    #[test]
    fn mass_deformed_expansion() {
        let m = build_metric(MetricKind::MassDeformed, 0.5, Height::hyperboloidal(2.0)).unwrap();
        let (gt, g3) = m.expansion();
        assert_eq!(gt, -4.0);
        assert_eq!(g3, -4.0);
        for &rho in &[1e-2, 5e-3, 2.5e-3] {
            let rem = (m.g00_over_rho2(rho) - gt) / rho - g3;
            assert!(rem.abs() < 50.0 * rho, "{rem}");
        }
        // G − (1 − 2mρ) is O(ρ⁴)
        for &rho in &[0.1, 0.05, 0.025] {
            let d = (m.grr_rho(rho) - (1.0 - 2.0 * 0.5 * rho)) / rho.powi(2);
            assert!(d.abs() < 40.0 * rho * rho);
        }
        // r-form and ρ-form agree
        for &r in &[0.5, 2.0, 9.0] {
            assert!((m.grr(r) - m.grr_rho(1.0 / r)).abs() < 1e-14);
            assert!((m.g00(r) - m.g00_over_rho2(1.0 / r) / (r * r)).abs() < 1e-14);
            assert!((m.dgrr_r(r) * r - (-m.rho_dgrr_rho(1.0 / r))).abs() < 1e-13);
        }
    }

    fn normal(m: f64) -> OperatorDecomposition {
        let metric = build_metric(MetricKind::NormalForm, m, Height::default()).unwrap();
        OperatorDecomposition::new(&metric, &SphereGrid::new(3))
    }

    #[test]
    fn box_zero_examples() {
        let d = normal(0.0);
        let g = SphereGrid::new(3);
        let u = Profile::log_grid(1e-3, 0.5, 2000, &g, |rho, _, _| rho);
        let b = apply_box_zero(&d, &u).unwrap();
        for (j, v) in b.values.iter().enumerate() {
            assert!(v.max_abs() < 1e-8 * u.rho[j].powi(3));
        }

        let u2 = Profile::log_grid(1e-3, 0.5, 2000, &g, |rho, _, _| rho * rho);
        let b2 = apply_box_zero(&d, &u2).unwrap();
        for (j, v) in b2.values.iter().enumerate() {
            let rho = u2.rho[j];
            let want = -2.0 * rho.powi(4);
            assert!((v.values[0] - want).abs() < 1e-7 * rho.powi(4), "{j}");
        }

        let y1 = AngularField::ylm(&g, 1, 0);
        let u3 = Profile::log_grid(1e-3, 0.5, 2000, &g, |rho, th, _| rho * (3.0 / (4.0 * PI)).sqrt() * th.cos());
        let b3 = apply_box_zero(&d, &u3).unwrap();
        for (j, v) in b3.values.iter().enumerate() {
            let rho = u3.rho[j];
            for (a, y) in v.values.iter().zip(&y1.values) {
                assert!((a - 2.0 * rho.powi(3) * y).abs() < 1e-8 * rho.powi(3));
            }
        }
    }

    #[test]
    fn box_zero_of_constant() {
        let g = SphereGrid::new(1);
        let u = Profile::log_grid(1e-3, 0.5, 200, &g, |_, _, _| 1.0);
        assert_eq!(apply_box_zero(&normal(0.0), &u).unwrap().max_abs(), 0.0);
        let b = apply_box_zero(&normal(1.0), &u).unwrap();
        for (j, v) in b.values.iter().enumerate() {
            assert!(v.max_abs() <= 1e-9 * u.rho[j].powi(3));
        }
    }

    #[test]
    fn normal_form_q_and_l2_vanish() {
        let d = normal(1.0);
        let g = SphereGrid::new(1);
        let u = Profile::log_grid(1e-3, 0.5, 50, &g, |rho, _, _| rho.sin());
        assert_eq!(d.qtilde_action(&u).unwrap().max_abs(), 0.0);
        assert_eq!(d.l2_action(&u).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn flat_qtilde1_at_scri() {
        let g = SphereGrid::new(1);
        let d = OperatorDecomposition::new(&MetricModel::flat(), &g);
        assert!((d.qtilde1_at_scri().values[0] + 0.5).abs() < 1e-15);
        let u = Profile::log_grid(1e-5, 0.1, 300, &g, |_, _, _| 1.0);
        let q = d.qtilde1_action(&u).unwrap();
        assert!((q.values[0].values[0] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn volume_integrals() {
        let m = MetricModel::flat();
        let g = SphereGrid::new(2);
        let v = volume_integral(&m, &g, |r, _, _| (-r * r).exp()).unwrap();
        assert!((v - PI.powf(1.5)).abs() < 1e-9);
        assert_eq!(volume_integral(&m, &g, |_, _, _| 0.0).unwrap(), 0.0);
        assert!(matches!(
            volume_integral(&m, &g, |r, _, _| r.powi(-3)),
            Err(Error::NonIntegrable(_))
        ));
    }

    #[test]
    fn sampled_volume_integral() {
        let n = 4000;
        let s: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let g: Vec<f64> = s
            .iter()
            .map(|&s| if s < 1.0 { (-(2.0 * s / (1.0 - s)).powi(2)).exp() } else { 0.0 })
            .collect();
        let v = volume_integral_sampled(&s, &g).unwrap();
        assert!((v - PI.powf(1.5)).abs() < 1e-6, "{v}");
    }
}
