//! The forcing obtained by cutting the solution off in time, its zero-frequency
//! transform f̂₀ and the leading tail constants c₀ (p = 3) and d_X (p ≥ 4).

use std::f64::consts::PI;
use std::io::Write;

use crate::angular::AngularField;
use crate::error::{Error, Result};
use crate::evolution::{ProblemSpec, Trajectory};
use crate::fitting::{cumulative_integral, lstsq};
use crate::geometry::{MetricModel, OperatorDecomposition};
use crate::quadrature::gauss_legendre;
use crate::radiation::{node_series, rad2_from_recursion, time_derivative, RadiationSeries, TimeField};

/// Smooth switch χ with χ = 0 for t ≤ t0 and χ = 1 for t ≥ t1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CutoffSpec {
    pub t0: f64,
    pub t1: f64,
}

impl CutoffSpec {
    pub fn new(t0: f64, t1: f64) -> Result<Self> {
        if !(t0 > 0.0 && t1 > t0) {
            return Err(Error::InvalidParameter(format!("cutoff needs 0 < t0 < t1, got ({t0}, {t1})")));
        }
        Ok(CutoffSpec { t0, t1 })
    }

    fn x(&self, t: f64) -> f64 {
        ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0)
    }

    pub fn chi(&self, t: f64) -> f64 {
        let x = self.x(t);
        x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3))
    }

    pub fn dchi(&self, t: f64) -> f64 {
        let x = self.x(t);
        140.0 * x.powi(3) * (1.0 - x).powi(3) / (self.t1 - self.t0)
    }

    pub fn ddchi(&self, t: f64) -> f64 {
        let x = self.x(t);
        let l = self.t1 - self.t0;
        420.0 * x * x * (1.0 - x).powi(2) * (1.0 - 2.0 * x) / (l * l)
    }

    /// Gauss–Legendre nodes and weights on [t0, t1].
    fn nodes(&self) -> Vec<(f64, f64)> {
        let (x, w) = gauss_legendre(48);
        let h = 0.5 * (self.t1 - self.t0);
        x.iter().zip(&w).map(|(x, w)| (self.t0 + h * (x + 1.0), h * w)).collect()
    }
}

impl std::fmt::Display for CutoffSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.t0, self.t1)
    }
}

impl std::str::FromStr for CutoffSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once(':').ok_or_else(|| Error::InvalidParameter(format!("cutoff '{s}' is not t0:t1")))?;
        let p = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad cutoff '{s}'")));
        CutoffSpec::new(p(a)?, p(b)?)
    }
}

/// Six-point Lagrange weights for evaluating samples at `t`.
fn interp_weights(times: &[f64], t: f64) -> Result<(usize, Vec<f64>)> {
    let n = times.len();
    if n < 6 || t < times[0] || t > times[n - 1] {
        return Err(Error::Precondition(format!("samples do not cover t_* = {t}")));
    }
    let k = times.partition_point(|x| *x <= t);
    let start = k.saturating_sub(3).min(n - 6);
    let xs = &times[start..start + 6];
    Ok((start, crate::fitting::fornberg(t, xs, 0)))
}

fn interp(times: &[f64], y: &[f64], t: f64) -> Result<f64> {
    let (s, w) = interp_weights(times, t)?;
    Ok(w.iter().zip(&y[s..s + 6]).map(|(a, b)| a * b).sum())
}

/// ∫ weight(t)·y(t) dt over the cutoff window, with y interpolated.
fn window_integral(c: &CutoffSpec, times: &[f64], y: &[f64], weight: impl Fn(f64) -> f64) -> Result<f64> {
    let mut acc = 0.0;
    for (t, w) in c.nodes() {
        acc += w * weight(t) * interp(times, y, t)?;
    }
    Ok(acc)
}

/// ∫₀^∞ χ·g with χ from the cutoff (or χ ≡ 1), plus a power-law estimate of
/// the part beyond the last sample. Returns (value, tail estimate).
fn chi_integral_to_infinity(c: Option<&CutoffSpec>, times: &[f64], g: &[f64]) -> Result<(f64, f64)> {
    let start = c.map_or(0.0, |c| c.t1);
    let mut acc = match c {
        Some(c) => window_integral(c, times, g, |t| c.chi(t))?,
        None => 0.0,
    };
    let i0 = times.partition_point(|t| *t < start);
    if times.get(i0).copied() != Some(start) && i0 > 0 {
        // piece from `start` to the first sample after it
        let (a, b) = (start, times[i0]);
        let (x, w) = gauss_legendre(8);
        for (x, w) in x.iter().zip(&w) {
            let t = a + 0.5 * (b - a) * (x + 1.0);
            acc += 0.5 * (b - a) * w * interp(times, g, t)?;
        }
    }
    if times.len() - i0 >= 5 {
        acc += *cumulative_integral(&times[i0..], &g[i0..]).last().unwrap();
    }
    let tail = power_tail(times, g);
    Ok((acc + tail, tail))
}

/// ∫_T^∞ of a fitted C t^{-q} through the last samples.
fn power_tail(times: &[f64], g: &[f64]) -> f64 {
    let n = times.len();
    if n < 8 {
        return 0.0;
    }
    let (ta, tb) = (times[n - 8], times[n - 1]);
    let (ga, gb) = (g[n - 8], g[n - 1]);
    if ga == 0.0 || gb == 0.0 || ga.signum() != gb.signum() {
        return 0.0;
    }
    let q = (ga / gb).ln() / (tb / ta).ln();
    if q <= 1.0 {
        return f64::INFINITY * gb.signum();
    }
    gb * tb / (q - 1.0)
}

fn per_node(grid_len: usize, f: impl Fn(usize) -> Result<f64>) -> Result<Vec<f64>> {
    (0..grid_len).map(f).collect()
}

/// c(ω) = ∫(χa₀R₁³ − 2χ′R₂ − χ′g̃∂_tR₁) dt_*. Pass `a0 = None` for p ≥ 4.
pub fn c_angular(
    series: &RadiationSeries,
    gtilde: &AngularField,
    cutoff: &CutoffSpec,
    a0: Option<TimeField<'_>>,
) -> Result<AngularField> {
    let t = &series.times;
    let r2 = series.rad2()?;
    let dr1 = time_derivative(t, &series.rad1);
    let grid = series.grid().clone();
    let a0s: Option<Vec<AngularField>> = a0.map(|a| t.iter().map(|&tk| a(tk)).collect());
    let values = per_node(grid.len(), |n| {
        let r1 = node_series(&series.rad1, n);
        let r2n = node_series(r2, n);
        let d1n = node_series(&dr1, n);
        let g = gtilde.values[n];
        let lin = window_integral(cutoff, t, &r2n, |x| -2.0 * cutoff.dchi(x))?
            + window_integral(cutoff, t, &d1n, |x| -g * cutoff.dchi(x))?;
        let nl = match &a0s {
            Some(a) => {
                let cubic: Vec<f64> = r1.iter().zip(node_series(a, n)).map(|(r, a)| a * r * r * r).collect();
                chi_integral_to_infinity(Some(cutoff), t, &cubic)?.0
            }
            None => 0.0,
        };
        Ok(lin + nl)
    })?;
    Ok(AngularField { grid, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct C0Result {
    pub value: f64,
    /// Size of the estimated contribution beyond the last sample.
    pub truncation: f64,
    /// (cutoff, sphere average of c(ω)) for each alternate cutoff.
    pub alternates: Vec<(CutoffSpec, f64)>,
}

impl C0Result {
    /// Largest relative spread between the alternates.
    pub fn cutoff_spread(&self) -> f64 {
        let v: Vec<f64> = self.alternates.iter().map(|a| a.1).collect();
        if v.len() < 2 {
            return 0.0;
        }
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo.abs().max(hi.abs())
    }
}

/// c₀ = (1/4π)∫_{S²}(∫₀^∞a₀R₁³dt − 2c₂ − g̃d₁)dω, plus the sphere averages of
/// c(ω) for each given cutoff. Fails if the truncation estimate exceeds
/// `tolerance`·|c₀|.
pub fn c0(
    rad1: &RadiationSeries,
    a0: TimeField<'_>,
    c2: &AngularField,
    d1: &AngularField,
    gtilde: &AngularField,
    cutoffs: &[CutoffSpec],
    tolerance: f64,
) -> Result<C0Result> {
    let t = &rad1.times;
    let grid = rad1.grid().clone();
    let a0s: Vec<AngularField> = t.iter().map(|&tk| a0(tk)).collect();
    let mut trunc: f64 = 0.0;
    let mut inner = vec![0.0; grid.len()];
    for (n, slot) in inner.iter_mut().enumerate() {
        let r1 = node_series(&rad1.rad1, n);
        let g: Vec<f64> = r1.iter().zip(node_series(&a0s, n)).map(|(r, a)| a * r * r * r).collect();
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        if t[0] != 0.0 {
            return Err(Error::Precondition("rad1 must start at t_* = 0".into()));
        }
        let (v, tail) = chi_integral_to_infinity(None, t, &g)?;
        *slot = v;
        trunc = trunc.max(tail.abs());
    }
    let field = AngularField { grid: grid.clone(), values: inner };
    let total = field
        .zip_with(c2, |a, c| a - 2.0 * c)
        .zip_with(&gtilde.zip_with(d1, |g, d| g * d), |a, b| a - b);
    let value = total.average();
    if !trunc.is_finite() || trunc > tolerance * value.abs() {
        let t_end = *t.last().unwrap();
        let required = if trunc.is_finite() && value != 0.0 { t_end * (trunc / (tolerance * value.abs())).sqrt() } else { f64::INFINITY };
        return Err(Error::Truncation { estimate: trunc, tolerance: tolerance * value.abs(), required_t: required });
    }
    let mut alternates = Vec::new();
    if !cutoffs.is_empty() {
        let with2 = match &rad1.rad2 {
            Some(_) => rad1.clone(),
            None => rad2_from_recursion(rad1, c2, d1, gtilde, a0)?,
        };
        for c in cutoffs {
            let ca = c_angular(&with2, gtilde, c, Some(a0))?;
            alternates.push((*c, ca.average()));
        }
    }
    Ok(C0Result { value, truncation: trunc, alternates })
}

/// d(ω) = ∫(χF_p − 4χ′R₃ − 2χ′Q̃₁R₁ − χ′g̃∂_tR₂ − χ′g₃∂_tR₁) dt_*,
/// F_p = b₀R₁⁴ for p = 4 and 0 for p ≥ 5.
pub fn d_angular(
    series: &RadiationSeries,
    decomp: &OperatorDecomposition,
    b0: TimeField<'_>,
    p: u32,
    cutoff: &CutoffSpec,
) -> Result<AngularField> {
    if p < 4 {
        return Err(Error::Unsupported(format!("d(omega) is defined for p >= 4, got {p}")));
    }
    let t = &series.times;
    let r2 = series.rad2()?;
    let r3 = series.rad3()?;
    let dr1 = time_derivative(t, &series.rad1);
    let dr2 = time_derivative(t, r2);
    let q1 = decomp.qtilde1_at_scri();
    let grid = series.grid().clone();
    let b0s: Vec<AngularField> = t.iter().map(|&tk| b0(tk)).collect();
    let values = per_node(grid.len(), |n| {
        let r1n = node_series(&series.rad1, n);
        let (g, g3, q) = (decomp.gtilde.values[n], decomp.g3.values[n], q1.values[n]);
        let mut v = window_integral(cutoff, t, &node_series(r3, n), |x| -4.0 * cutoff.dchi(x))?;
        v += window_integral(cutoff, t, &r1n, |x| -2.0 * q * cutoff.dchi(x))?;
        v += window_integral(cutoff, t, &node_series(&dr2, n), |x| -g * cutoff.dchi(x))?;
        v += window_integral(cutoff, t, &node_series(&dr1, n), |x| -g3 * cutoff.dchi(x))?;
        if p == 4 {
            let fp: Vec<f64> = r1n.iter().zip(node_series(&b0s, n)).map(|(r, b)| b * r.powi(4)).collect();
            v += chi_integral_to_infinity(Some(cutoff), t, &fp)?.0;
        }
        Ok(v)
    })?;
    Ok(AngularField { grid, values })
}

/// Sphere average (1/4π)∫g dω.
pub fn sphere_average(g: &AngularField) -> f64 {
    g.average()
}

/// c̃ = Σ_{k≥1} c_k/(k(k+1)): the solution of Δ_ω c̃ = c. Fails if the mean of
/// c exceeds `tolerance` in absolute value.
pub fn tilde_c(c: &AngularField, tolerance: f64) -> Result<AngularField> {
    let mean = c.average();
    if mean.abs() > tolerance {
        return Err(Error::Precondition(format!("c has nonzero mean {mean:.3e} (tolerance {tolerance:.1e})")));
    }
    let mut coeffs = c.coeffs();
    for (idx, v) in coeffs.iter_mut().enumerate() {
        let (l, _) = crate::angular::mode_of_index(idx);
        *v = if l == 0 { 0.0 } else { *v / (l * (l + 1)) as f64 };
    }
    Ok(AngularField::from_coeffs(&c.grid, &coeffs))
}

/// f̂₀ on the s-grid together with its ρ³, ρ⁴ expansion near scri.
#[derive(Debug, Clone)]
pub struct ForcingProfile {
    pub s: Vec<f64>,
    /// One field per s-grid point; zero at scri where f̂₀ = O(ρ³).
    pub fhat0: Vec<AngularField>,
    pub c_fit: AngularField,
    pub d_fit: AngularField,
    pub fit_residual_norm: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub truncation: f64,
    pub cutoff: CutoffSpec,
}

impl ForcingProfile {
    pub fn rho(&self) -> Vec<f64> {
        self.s.iter().map(|&s| if s == 0.0 { f64::INFINITY } else { (1.0 - s) / (2.0 * s) }).collect()
    }
}

/// f = χaφ^p − 2χ′(ρQ + g^00∂_{t_*})φ − χ″g^00φ integrated over t_* at every
/// grid point, from the trajectory snapshots.
pub fn assemble_forcing(traj: &Trajectory, spec: &ProblemSpec, cutoff: &CutoffSpec, tolerance: f64) -> Result<ForcingProfile> {
    let snaps = &traj.snapshots;
    if snaps.len() < 6 {
        return Err(Error::Precondition("trajectory has too few snapshots for the forcing".into()));
    }
    let times: Vec<f64> = snaps.iter().map(|s| s.t_star).collect();
    if times[0] > cutoff.t0 || *times.last().unwrap() < cutoff.t1 + 1.0 {
        return Err(Error::Precondition(format!(
            "snapshots [{}, {}] do not cover the cutoff window {cutoff} with margin",
            times[0],
            times.last().unwrap()
        )));
    }
    let n = traj.n;
    let ds = traj.ds();
    let s: Vec<f64> = traj.s_grid();
    let metric = &spec.metric;
    let nm = traj.modes.len();
    let p = spec.power as i32;
    // linear part: combine interpolated snapshots at the window nodes
    let mut fhat = vec![vec![0.0; n + 1]; nm];
    let nodes = cutoff.nodes();
    for &(t, w) in &nodes {
        let (start, iw) = interp_weights(&times, t)?;
        let (dc, ddc) = (cutoff.dchi(t), cutoff.ddchi(t));
        for m in 0..nm {
            let mut psi = vec![0.0; n + 1];
            let mut pi = vec![0.0; n + 1];
            for (j, c) in iw.iter().enumerate() {
                let st = &snaps[start + j];
                for i in 0..=n {
                    psi[i] += c * st.psi[m][i];
                    pi[i] += c * st.pi[m][i];
                }
            }
            let dpsi = s_derivative(&psi, ds);
            for i in 1..n {
                let r = 2.0 * s[i] / (1.0 - s[i]);
                let sr = 0.5 * (1.0 - s[i]).powi(2);
                let g0r = metric.g0r(r);
                let g00 = metric.g00(r);
                let rho_q = g0r * dpsi[i] * sr / r + metric.dg0r(r) * psi[i] / (2.0 * r);
                let f = -2.0 * dc * (rho_q + g00 * pi[i] / r) - ddc * g00 * psi[i] / r;
                fhat[m][i] += w * f;
            }
        }
    }
    // nonlinear part χaφ^p, spherical runs only
    let mut truncation: f64 = 0.0;
    if let Some(a) = &spec.nonlin_coeff {
        if !traj.spherical {
            return Err(Error::Unsupported("nonlinear forcing needs a spherical run".into()));
        }
        for i in 1..n {
            let r = 2.0 * s[i] / (1.0 - s[i]);
            let g: Vec<f64> = snaps
                .iter()
                .map(|st| {
                    let phi = st.psi[0][i] / r;
                    a.eval(st.t_star, r, 0.0, 0.0) * phi.powi(p)
                })
                .collect();
            let (v, tail) = chi_integral_to_infinity(Some(cutoff), &times, &g)?;
            fhat[0][i] += v;
            if v != 0.0 {
                truncation = truncation.max((tail / v).abs());
            }
        }
        if truncation > tolerance {
            let t_end = *times.last().unwrap();
            return Err(Error::Truncation {
                estimate: truncation,
                tolerance,
                required_t: t_end * (truncation / tolerance).sqrt(),
            });
        }
    }
    let fhat0: Vec<AngularField> = (0..=n)
        .map(|i| {
            let v: Vec<f64> = (0..nm).map(|m| fhat[m][i]).collect();
            traj.to_nodal(&v)
        })
        .collect();
    let (c_fit, d_fit, res, rho_min, rho_max) = fit_rho34(&s, &fhat0)?;
    Ok(ForcingProfile { s, fhat0, c_fit, d_fit, fit_residual_norm: res, rho_min, rho_max, truncation, cutoff: *cutoff })
}

fn s_derivative(u: &[f64], ds: f64) -> Vec<f64> {
    let n = u.len() - 1;
    (0..=n)
        .map(|i| {
            if i >= 2 && i + 2 <= n {
                (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) / (12.0 * ds)
            } else if i < 2 {
                (-25.0 * u[i] + 48.0 * u[i + 1] - 36.0 * u[i + 2] + 16.0 * u[i + 3] - 3.0 * u[i + 4]) / (12.0 * ds)
            } else {
                (25.0 * u[i] - 48.0 * u[i - 1] + 36.0 * u[i - 2] - 16.0 * u[i - 3] + 3.0 * u[i - 4]) / (12.0 * ds)
            }
        })
        .collect()
}

/// Least squares of f̂₀ against {ρ³, ρ⁴} weighted by ρ⁻³ on [ρ_min, ρ_max].
/// ρ_max starts at 0.1 and is halved while that moves the fitted ρ³
/// coefficient; ρ_min sits at the start of the plateau of the residual.
fn fit_rho34(s: &[f64], fhat0: &[AngularField]) -> Result<(AngularField, AngularField, f64, f64, f64)> {
    let n = s.len() - 1;
    let rho: Vec<f64> = s.iter().map(|&x| if x == 0.0 { f64::INFINITY } else { (1.0 - x) / (2.0 * x) }).collect();
    let grid = fhat0[0].grid.clone();
    let fit = |idx: &[usize], node: usize| -> Result<(f64, f64, f64)> {
        let design: Vec<Vec<f64>> = idx.iter().map(|&i| vec![rho[i].powi(3), rho[i].powi(4)]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| fhat0[i].values[node]).collect();
        let w: Vec<f64> = idx.iter().map(|&i| rho[i].powi(-3)).collect();
        let f = lstsq(&design, &y, Some(&w))?;
        Ok((f.coef[0], f.coef[1], f.residual / (idx.len() as f64).sqrt()))
    };
    let window = |rho_max: f64, skip: usize| -> Vec<usize> { (1..=n - skip).filter(|&i| rho[i] <= rho_max).collect() };
    // upper end
    let mut levels: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut rho_max = 0.1;
    while window(rho_max, 1).len() >= 12 {
        let idx = window(rho_max, 1);
        let cs = (0..grid.len()).map(|node| fit(&idx, node).map(|f| f.0)).collect::<Result<Vec<_>>>()?;
        levels.push((rho_max, cs));
        rho_max *= 0.5;
    }
    if levels.is_empty() {
        return Err(Error::Fit("too few grid points with rho <= 0.1".into()));
    }
    let rho_max = if levels.len() < 2 {
        levels[0].0
    } else {
        let change = |j: usize| -> f64 {
            levels[j].1.iter().zip(&levels[j + 1].1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let j = (0..levels.len() - 1).min_by(|&a, &b| change(a).total_cmp(&change(b))).unwrap();
        levels[j + 1].0
    };
    // lower end
    let mut candidates = vec![];
    let mut k = 1usize;
    while window(rho_max, k).len() >= 8 {
        candidates.push(k);
        k *= 2;
    }
    let mut res: Vec<f64> = Vec::new();
    for &k in &candidates {
        let idx = window(rho_max, k);
        let mut worst: f64 = 0.0;
        for node in 0..grid.len() {
            worst = worst.max(fit(&idx, node)?.2);
        }
        res.push(worst);
    }
    let best = res.iter().cloned().fold(f64::INFINITY, f64::min);
    let pick = res.iter().position(|r| *r <= 2.0 * best + 1e-300).unwrap_or(0);
    let skip = candidates[pick];
    let idx = window(rho_max, skip);
    let mut c = vec![0.0; grid.len()];
    let mut d = vec![0.0; grid.len()];
    let mut resid: f64 = 0.0;
    for node in 0..grid.len() {
        let (a, b, r) = fit(&idx, node)?;
        c[node] = a;
        d[node] = b;
        resid = resid.max(r);
    }
    Ok((AngularField { grid: grid.clone(), values: c }, AngularField { grid, values: d }, resid, rho[n - skip], rho_max))
}

/// d_X = (m/π)∫_X(f̂₀ − □̂(0)(c̃ρ))|dg_X| − (1/2π)∫_{S²}d dω. The volume
/// term is skipped for m = 0.
pub fn dx(
    forcing: &ForcingProfile,
    c_tilde: &AngularField,
    d: &AngularField,
    metric: &MetricModel,
    decomp: &OperatorDecomposition,
) -> Result<f64> {
    let m = decomp.mass;
    let surface = -(1.0 / (2.0 * PI)) * d.integral();
    if m == 0.0 {
        return Ok(surface);
    }
    let rho = forcing.rho();
    let lap = c_tilde.laplacian();
    let grid = &c_tilde.grid;
    let mut volume = 0.0;
    for node in 0..grid.len() {
        let g: Vec<f64> = (0..forcing.s.len())
            .map(|i| {
                let r = rho[i];
                if !r.is_finite() {
                    return forcing.fhat0[i].values[node];
                }
                let box0 = r.powi(3) * (lap.values[node] - metric.rho_dgrr_rho(r) * c_tilde.values[node]);
                forcing.fhat0[i].values[node] - box0
            })
            .collect();
        let v = crate::geometry::volume_integral_sampled(&forcing.s, &g)?;
        volume += grid.weights[node] * v / (4.0 * PI);
    }
    Ok(m / PI * volume + surface)
}

/// Scale against which the mean of c(ω) is judged: ∫|χ′|(|2R₂| + |g̃∂_tR₁|).
pub fn c_scale(series: &RadiationSeries, gtilde: &AngularField, cutoff: &CutoffSpec) -> Result<f64> {
    let t = &series.times;
    let r2 = series.rad2()?;
    let dr1 = time_derivative(t, &series.rad1);
    let mut worst: f64 = 0.0;
    for n in 0..series.grid().len() {
        let y: Vec<f64> = node_series(r2, n)
            .iter()
            .zip(node_series(&dr1, n))
            .map(|(a, b)| 2.0 * a.abs() + (gtilde.values[n] * b).abs())
            .collect();
        worst = worst.max(window_integral(cutoff, t, &y, |x| cutoff.dchi(x).abs())?);
    }
    Ok(worst)
}

/// CSV of nodal c(ω), d(ω), c̃(ω): theta_index, phi_index, c, d, c_tilde.
pub fn write_coefficients_csv(
    c: &AngularField,
    d: Option<&AngularField>,
    c_tilde: Option<&AngularField>,
    w: impl Write,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["theta_index", "phi_index", "c", "d", "c_tilde"])?;
    let fmt = crate::evolution::io::fmt;
    let np = c.grid.n_phi;
    for node in 0..c.grid.len() {
        let opt = |f: Option<&AngularField>| f.map_or(String::new(), |f| fmt(f.values[node]));
        out.write_record(&[(node / np).to_string(), (node % np).to_string(), fmt(c.values[node]), opt(d), opt(c_tilde)])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::SphereGrid;
    use crate::geometry::MetricKind;

    fn times(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    #[test]
    fn cutoff_profile() {
        let c = CutoffSpec::new(0.5, 1.0).unwrap();
        assert_eq!(c.chi(0.4), 0.0);
        assert_eq!(c.chi(1.2), 1.0);
        let total: f64 = c.nodes().iter().map(|(t, w)| w * c.dchi(*t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let h = 1e-6;
        for &t in &[0.6, 0.75, 0.93] {
            assert!(((c.chi(t + h) - c.chi(t - h)) / (2.0 * h) - c.dchi(t)).abs() < 1e-6);
            assert!(((c.dchi(t + h) - c.dchi(t - h)) / (2.0 * h) - c.ddchi(t)).abs() < 1e-5);
        }
        assert!(CutoffSpec::new(1.0, 1.0).is_err());
        assert_eq!("2:4".parse::<CutoffSpec>().unwrap(), CutoffSpec { t0: 2.0, t1: 4.0 });
    }

    #[test]
    fn c_of_constant_rad2() {
        let g = SphereGrid::new(1);
        let mut s = RadiationSeries::from_fn(&g, times(5.0, 500), |_, _, _| 0.0).unwrap();
        s.rad2 = Some(vec![AngularField::constant(&g, 0.3); s.len()]);
        let c = c_angular(&s, &AngularField::constant(&g, -1.0), &CutoffSpec::new(2.0, 4.0).unwrap(), None).unwrap();
        assert!(c.values.iter().all(|v| (v + 0.6).abs() < 1e-12));
    }

    #[test]
    fn c0_examples() {
        let g = SphereGrid::new(0);
        let z = AngularField::zeros(&g);
        let s = RadiationSeries::from_fn(&g, times(40.0, 8000), |t, _, _| (-t).exp()).unwrap();
        let one = |_t: f64| AngularField::constant(&g, 1.0);
        let r = c0(&s, &one, &z, &z, &AngularField::constant(&g, -1.0), &[], 1e-3).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-9, "{}", r.value);
        let zero_a = |_t: f64| AngularField::zeros(&g);
        let r = c0(&s, &zero_a, &AngularField::constant(&g, 0.25), &z, &z, &[], 1e-3).unwrap();
        assert!((r.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn c0_routes_agree_for_exponential_rad1() {
        let g = SphereGrid::new(0);
        let z = AngularField::zeros(&g);
        let s = RadiationSeries::from_fn(&g, times(40.0, 8000), |t, _, _| (-t).exp()).unwrap();
        let one = |_t: f64| AngularField::constant(&g, 1.0);
        let cuts = [CutoffSpec::new(0.5, 1.0).unwrap(), CutoffSpec::new(2.0, 4.0).unwrap()];
        let r = c0(&s, &one, &z, &z, &AngularField::constant(&g, -1.0), &cuts, 1e-3).unwrap();
        for (_, alt) in &r.alternates {
            assert!((alt - r.value).abs() < 1e-3 * r.value.abs(), "{alt} vs {}", r.value);
        }
    }

    #[test]
    fn tilde_c_inverts_laplacian() {
        let g = SphereGrid::new(3);
        let y1 = AngularField::ylm(&g, 1, 0);
        let y2 = AngularField::ylm(&g, 2, 1);
        let t1 = tilde_c(&y1, 1e-10).unwrap();
        let t2 = tilde_c(&y2, 1e-10).unwrap();
        assert!(t1.zip_with(&y1, |a, b| a - b / 2.0).max_abs() < 1e-13);
        assert!(t2.zip_with(&y2, |a, b| a - b / 6.0).max_abs() < 1e-13);
        assert!(matches!(tilde_c(&AngularField::constant(&g, 1.0), 1e-10), Err(Error::Precondition(_))));
    }

    #[test]
    fn dx_examples() {
        let g = SphereGrid::new(0);
        let flat = MetricModel::flat();
        let decomp = OperatorDecomposition::new(&flat, &g);
        let n = 4000;
        let s: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let cut = CutoffSpec::new(1.0, 2.0).unwrap();
        let zeros = vec![AngularField::zeros(&g); n + 1];
        let prof = |fhat0: Vec<AngularField>| ForcingProfile {
            s: s.clone(),
            fhat0,
            c_fit: AngularField::zeros(&g),
            d_fit: AngularField::zeros(&g),
            fit_residual_norm: 0.0,
            rho_min: 0.0,
            rho_max: 0.1,
            truncation: 0.0,
            cutoff: cut,
        };
        let z = AngularField::zeros(&g);
        let d0 = AngularField::constant(&g, 0.4);
        assert!((dx(&prof(zeros.clone()), &z, &d0, &flat, &decomp).unwrap() + 0.8).abs() < 1e-14);
        assert_eq!(dx(&prof(zeros), &z, &z, &flat, &decomp).unwrap(), 0.0);
        // m = 1 with a Gaussian remainder
        let mut normal = MetricModel::flat();
        normal.kind = MetricKind::NormalForm;
        normal.mass = 1.0;
        let dn = OperatorDecomposition::new(&normal, &g);
        let gauss: Vec<AngularField> = s
            .iter()
            .map(|&x| {
                let r = if x < 1.0 { 2.0 * x / (1.0 - x) } else { f64::INFINITY };
                AngularField::constant(&g, (-r * r).exp())
            })
            .collect();
        let v = dx(&prof(gauss), &z, &z, &normal, &dn).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-5, "{v}");
    }
}
