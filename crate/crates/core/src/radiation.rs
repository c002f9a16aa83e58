//! Radiation fields at null infinity: R₁ read off the scri trace, R₂ and R₃
//! from their transport recursions, and a direct fit of R₂ from the
//! near-scri samples for cross-checks.

use std::io::Write;
use std::sync::Arc;

use crate::angular::{mode_of_index, AngularField, SphereGrid};
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::fitting::{cumulative_integral, derivative, derivative_with, lstsq};
use crate::geometry::OperatorDecomposition;

/// Angular data that depends on t_* (a₀, b₀).
pub type TimeField<'a> = &'a dyn Fn(f64) -> AngularField;

#[derive(Debug, Clone)]
pub struct RadiationSeries {
    pub times: Vec<f64>,
    pub rad1: Vec<AngularField>,
    pub rad2: Option<Vec<AngularField>>,
    pub rad3: Option<Vec<AngularField>>,
    /// Per-sample estimate of the scri extraction error of rad1.
    pub rad1_error: Option<Vec<f64>>,
    pub provenance: Vec<String>,
    pub warnings: Vec<String>,
}

impl RadiationSeries {
    pub fn new(times: Vec<f64>, rad1: Vec<AngularField>, provenance: &str) -> Result<Self> {
        if times.len() != rad1.len() {
            return Err(Error::Shape("times and rad1 lengths differ".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("times must be strictly increasing".into()));
        }
        Ok(RadiationSeries {
            times,
            rad1,
            rad2: None,
            rad3: None,
            rad1_error: None,
            provenance: vec![provenance.to_string()],
            warnings: vec![],
        })
    }

    /// Sample a closure R₁(t, θ, φ) on the given grid.
    pub fn from_fn(grid: &Arc<SphereGrid>, times: Vec<f64>, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let rad1 = times.iter().map(|&t| AngularField::from_fn(grid, |th, ph| f(t, th, ph))).collect();
        Self::new(times, rad1, "synthetic")
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.rad1[0].grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn rad2(&self) -> Result<&[AngularField]> {
        self.rad2.as_deref().ok_or_else(|| Error::Precondition("rad2 not computed".into()))
    }

    pub fn rad3(&self) -> Result<&[AngularField]> {
        self.rad3.as_deref().ok_or_else(|| Error::Precondition("rad3 not computed".into()))
    }
}

/// Time series at one angular node.
pub fn node_series(fields: &[AngularField], node: usize) -> Vec<f64> {
    fields.iter().map(|f| f.values[node]).collect()
}

/// Inverse of [`node_series`] over all nodes.
pub fn from_node_series(grid: &Arc<SphereGrid>, series: &[Vec<f64>]) -> Vec<AngularField> {
    let nt = series.first().map_or(0, |s| s.len());
    (0..nt)
        .map(|k| AngularField { grid: grid.clone(), values: series.iter().map(|s| s[k]).collect() })
        .collect()
}

/// ∂_{t_*} of a field series.
pub fn time_derivative(times: &[f64], fields: &[AngularField]) -> Vec<AngularField> {
    let grid = &fields[0].grid;
    let per_node: Vec<Vec<f64>> = (0..grid.len()).map(|n| derivative(times, &node_series(fields, n))).collect();
    from_node_series(grid, &per_node)
}

/// ∫₀^{t_*} of a field series (the series must start at t_* = 0).
pub fn time_integral(times: &[f64], fields: &[AngularField]) -> Vec<AngularField> {
    let grid = &fields[0].grid;
    let per_node: Vec<Vec<f64>> =
        (0..grid.len()).map(|n| cumulative_integral(times, &node_series(fields, n))).collect();
    from_node_series(grid, &per_node)
}

/// Relative disagreement of the 5-point and 3-point derivatives, used to
/// flag a cadence too coarse for the recursions.
fn differentiation_error(times: &[f64], fields: &[AngularField]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for n in 0..fields[0].grid.len() {
        let y = node_series(fields, n);
        let d5 = derivative(times, &y);
        let d3 = derivative_with(times, &y, 3);
        for (a, b) in d5.iter().zip(&d3) {
            worst = worst.max((a - b).abs());
            scale = scale.max(a.abs());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

const DIFF_WARN: f64 = 1e-3;

/// R₁(t_*, ω) = Φ(t_*, s = 1, ω) with an extraction error estimate from
/// polynomial extrapolation of the interior samples next to scri.
pub fn extract_rad1(traj: &Trajectory) -> Result<RadiationSeries> {
    if traj.times.is_empty() {
        return Err(Error::Precondition("trajectory has no scri trace".into()));
    }
    let rad1 = (0..traj.times.len()).map(|k| traj.scri_nodal(k)).collect();
    let mut series = RadiationSeries::new(traj.times.clone(), rad1, "scri trace Phi(s=1)")?;
    let kmax = traj.near_scri[0].first().map_or(0, |v| v.len().saturating_sub(1));
    if kmax >= 5 {
        let ds = traj.ds();
        let ks = [1usize, 2, 3, 4, 5];
        let rho: Vec<f64> = ks.iter().map(|&k| rho_at(k, ds)).collect();
        let w = crate::fitting::fornberg(0.0, &rho, 0);
        let err = traj
            .near_scri
            .iter()
            .map(|modes| {
                modes
                    .iter()
                    .map(|v| {
                        let extrap: f64 = ks.iter().zip(&w).map(|(&k, c)| c * v[k]).sum();
                        (extrap - v[0]).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        series.rad1_error = Some(err);
    }
    Ok(series)
}

fn rho_at(k: usize, ds: f64) -> f64 {
    let s = 1.0 - k as f64 * ds;
    (1.0 - s) / (2.0 * s)
}

fn check_origin(series: &RadiationSeries) -> Result<()> {
    if series.times.first().copied() != Some(0.0) {
        return Err(Error::Precondition("series must start at t_* = 0 for the recursions".into()));
    }
    if series.len() < 5 {
        return Err(Error::Precondition("need at least 5 samples".into()));
    }
    Ok(())
}

/// R₂ = c₂ + ½g̃(d₁ − ∂_tR₁) + ½∫₀^{t_*}(Δ_ωR₁ − a₀R₁³).
///
/// The a₀ term is the cubic nonlinearity; pass a zero field for p ≥ 4.
pub fn rad2_from_recursion(
    rad1: &RadiationSeries,
    c2: &AngularField,
    d1: &AngularField,
    gtilde: &AngularField,
    a0: TimeField<'_>,
) -> Result<RadiationSeries> {
    check_origin(rad1)?;
    let t = &rad1.times;
    let dr1 = time_derivative(t, &rad1.rad1);
    let integrand: Vec<AngularField> = t
        .iter()
        .zip(&rad1.rad1)
        .map(|(&tk, r1)| {
            let a = a0(tk);
            r1.laplacian().zip_with(&r1.zip_with(&a, |r, a| a * r * r * r), |l, n| l - n)
        })
        .collect();
    let integral = time_integral(t, &integrand);
    let rad2 = (0..t.len())
        .map(|k| {
            let local = d1.zip_with(&dr1[k], |d, dr| d - dr).zip_with(gtilde, |x, g| 0.5 * g * x);
            c2.zip_with(&local, |a, b| a + b).zip_with(&integral[k], |a, b| a + 0.5 * b)
        })
        .collect();
    let mut out = rad1.clone();
    let err = differentiation_error(t, &rad1.rad1);
    if err > DIFF_WARN {
        out.warnings.push(format!("rad2: time step coarse for differentiation (relative error {err:.1e})"));
    }
    out.rad2 = Some(rad2);
    out.provenance.push("rad2 from second-order transport recursion".into());
    Ok(out)
}

/// R₃ = −½Q̃₁R₁ − ¼g₃∂_tR₁ − ¼g̃∂_tR₂ + ¼∫₀^{t_*}((Δ_ω − 2)R₂ + 2mR₁ − F_p),
/// with F_p = b₀R₁⁴ for p = 4 and 0 for p ≥ 5.
pub fn rad3_from_recursion(
    series: &RadiationSeries,
    decomp: &OperatorDecomposition,
    b0: TimeField<'_>,
    p: u32,
) -> Result<RadiationSeries> {
    if p < 4 {
        return Err(Error::Unsupported(format!("the third radiation field recursion needs p >= 4, got {p}")));
    }
    check_origin(series)?;
    let t = &series.times;
    let r1 = &series.rad1;
    let r2 = series.rad2()?;
    let dr1 = time_derivative(t, r1);
    let dr2 = time_derivative(t, r2);
    let m = decomp.mass;
    let q1 = decomp.qtilde1_at_scri();
    let integrand: Vec<AngularField> = (0..t.len())
        .map(|k| {
            let lap = r2[k].laplacian().zip_with(&r2[k], |l, v| l - 2.0 * v);
            let fp = if p == 4 { r1[k].zip_with(&b0(t[k]), |r, b| b * r.powi(4)) } else { r1[k].scale(0.0) };
            lap.zip_with(&r1[k], |l, v| l + 2.0 * m * v).zip_with(&fp, |a, f| a - f)
        })
        .collect();
    let integral = time_integral(t, &integrand);
    let rad3 = (0..t.len())
        .map(|k| {
            let mut v = q1.zip_with(&r1[k], |q, r| -0.5 * q * r);
            v = v.zip_with(&decomp.g3.zip_with(&dr1[k], |g, d| g * d), |a, b| a - 0.25 * b);
            v = v.zip_with(&decomp.gtilde.zip_with(&dr2[k], |g, d| g * d), |a, b| a - 0.25 * b);
            v.zip_with(&integral[k], |a, b| a + 0.25 * b)
        })
        .collect();
    let mut out = series.clone();
    out.rad3 = Some(rad3);
    out.provenance.push("rad3 from third-order transport recursion".into());
    Ok(out)
}

/// R₂ fitted directly from Φ near scri: Φ(ρ) − R₁ ≈ R₂ρ + e₂ρ² + e₃ρ³ over the
/// recorded samples s = 1 − kΔs.
#[derive(Debug, Clone)]
pub struct DirectRad2 {
    pub times: Vec<f64>,
    pub rad2: Vec<AngularField>,
    /// Error bar per sample: fit standard error plus the changes under a
    /// quadratic model, a quartic model and a half-width stencil. Late in a
    /// run the expansion in ρ converges only for ρ ≲ 2/t, so the model
    /// changes grow and the bar widens.
    pub error: Vec<f64>,
}

pub fn fit_rad2_direct(traj: &Trajectory, kmax: usize) -> Result<DirectRad2> {
    let avail = traj.near_scri.first().and_then(|m| m.first()).map_or(0, |v| v.len());
    let kmax = kmax.min(avail.saturating_sub(1));
    if kmax < 6 {
        return Err(Error::Precondition("need at least 6 near-scri samples for the rho^2 fit".into()));
    }
    let ds = traj.ds();
    let rho: Vec<f64> = (1..=kmax).map(|k| rho_at(k, ds)).collect();
    let design3: Vec<Vec<f64>> = rho.iter().map(|&r| vec![r, r * r, r * r * r]).collect();
    let design2: Vec<Vec<f64>> = rho.iter().map(|&r| vec![r, r * r]).collect();
    let design4: Vec<Vec<f64>> = rho.iter().map(|&r| vec![r, r * r, r * r * r, r.powi(4)]).collect();
    let half = kmax / 2;
    let mut rad2 = Vec::with_capacity(traj.times.len());
    let mut error = Vec::with_capacity(traj.times.len());
    for modes in &traj.near_scri {
        let mut coef = Vec::with_capacity(modes.len());
        let mut err: f64 = 0.0;
        for v in modes {
            let y: Vec<f64> = (1..=kmax).map(|k| v[k] - v[0]).collect();
            let f3 = lstsq(&design3, &y, None)?;
            let f2 = lstsq(&design2, &y, None)?;
            let f4 = lstsq(&design4, &y, None)?;
            let fh = lstsq(&design3[..half], &y[..half], None)?;
            let c = f3.coef[0];
            coef.push(c);
            err = err.max(f3.stderr[0] + (c - f2.coef[0]).abs() + (c - f4.coef[0]).abs() + (c - fh.coef[0]).abs());
        }
        rad2.push(traj.to_nodal(&coef));
        error.push(err);
    }
    Ok(DirectRad2 { times: traj.times.clone(), rad2, error })
}

/// Harmonic-coefficient CSV: t_star, ell, m, rad1_lm, rad2_lm, rad3_lm.
pub fn write_radiation_csv(series: &RadiationSeries, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_star", "ell", "m", "rad1_lm", "rad2_lm", "rad3_lm"])?;
    let fmt = crate::evolution::io::fmt;
    for k in 0..series.len() {
        let c1 = series.rad1[k].coeffs();
        let c2 = series.rad2.as_ref().map(|r| r[k].coeffs());
        let c3 = series.rad3.as_ref().map(|r| r[k].coeffs());
        for (idx, v) in c1.iter().enumerate() {
            let (l, m) = mode_of_index(idx);
            let opt = |c: &Option<Vec<f64>>| c.as_ref().map_or(String::new(), |c| fmt(c[idx]));
            out.write_record(&[fmt(series.times[k]), l.to_string(), m.to_string(), fmt(*v), opt(&c2), opt(&c3)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Nodal CSV: t_star, theta_index, phi_index, rad1, rad2, rad3.
pub fn write_radiation_nodal_csv(series: &RadiationSeries, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_star", "theta_index", "phi_index", "rad1", "rad2", "rad3"])?;
    let fmt = crate::evolution::io::fmt;
    let np = series.grid().n_phi;
    for k in 0..series.len() {
        for node in 0..series.grid().len() {
            let opt = |r: &Option<Vec<AngularField>>| r.as_ref().map_or(String::new(), |r| fmt(r[k].values[node]));
            out.write_record(&[
                fmt(series.times[k]),
                (node / np).to_string(),
                (node % np).to_string(),
                fmt(series.rad1[k].values[node]),
                opt(&series.rad2),
                opt(&series.rad3),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read back a harmonic-coefficient CSV written by [`write_radiation_csv`].
pub fn read_radiation_csv(grid: &Arc<SphereGrid>, r: impl std::io::Read) -> Result<RadiationSeries> {
    let mut rdr = csv::Reader::from_reader(r);
    let nm = grid.n_modes();
    let mut times: Vec<f64> = Vec::new();
    let mut cols: [Vec<Vec<f64>>; 3] = [vec![], vec![], vec![]];
    let mut present = [true; 3];
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::Format(format!("bad number '{s}'")))
            }
        };
        let t = num(0)?.ok_or_else(|| Error::Format("missing t_star".into()))?;
        let l: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format("bad ell".into()))?;
        let m: i64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format("bad m".into()))?;
        if times.last() != Some(&t) {
            times.push(t);
            for c in cols.iter_mut() {
                c.push(vec![0.0; nm]);
            }
        }
        let idx = crate::angular::mode_index(l, m);
        if idx >= nm {
            return Err(Error::Format(format!("mode ({l},{m}) beyond grid lmax")));
        }
        for j in 0..3 {
            match num(3 + j)? {
                Some(v) => cols[j].last_mut().unwrap()[idx] = v,
                None => present[j] = false,
            }
        }
    }
    let build = |c: &Vec<Vec<f64>>| c.iter().map(|v| AngularField::from_coeffs(grid, v)).collect::<Vec<_>>();
    let mut s = RadiationSeries::new(times, build(&cols[0]), "radiation csv")?;
    if present[1] {
        s.rad2 = Some(build(&cols[1]));
    }
    if present[2] {
        s.rad3 = Some(build(&cols[2]));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MetricKind, MetricModel};

    fn times(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    fn zero(grid: &Arc<SphereGrid>) -> AngularField {
        AngularField::zeros(grid)
    }

    #[test]
    fn rad2_constant_data() {
        let g = SphereGrid::new(2);
        let s = RadiationSeries::from_fn(&g, times(5.0, 200), |_, _, _| 0.0).unwrap();
        let k = AngularField::constant(&g, 0.7);
        let z = zero(&g);
        let r = rad2_from_recursion(&s, &k, &z, &AngularField::constant(&g, -1.0), &|_| zero(&g)).unwrap();
        assert!(r.rad2().unwrap().iter().all(|f| (f.values[0] - 0.7).abs() < 1e-15));
    }

    #[test]
    fn rad2_dipole_example() {
        let g = SphereGrid::new(2);
        let s = RadiationSeries::from_fn(&g, times(6.0, 600), |t, th, _| (-t).exp() * th.cos()).unwrap();
        let z = zero(&g);
        let r = rad2_from_recursion(&s, &z, &z, &AngularField::constant(&g, -1.0), &|_| zero(&g)).unwrap();
        let mut worst: f64 = 0.0;
        for (k, &t) in s.times.iter().enumerate() {
            let exact = AngularField::from_fn(&g, |th, _| (1.0 - 1.5 * (-t).exp()) * th.cos());
            worst = worst.max(r.rad2().unwrap()[k].zip_with(&exact, |a, b| a - b).max_abs());
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn rad3_quartic_example() {
        let g = SphereGrid::new(0);
        let mut s = RadiationSeries::from_fn(&g, times(4.0, 800), |t, _, _| (-t).exp()).unwrap();
        s.rad2 = Some(vec![zero(&g); s.len()]);
        let mut normal = MetricModel::flat();
        normal.kind = MetricKind::NormalForm;
        normal.mass = 0.0;
        let mut decomp = OperatorDecomposition::new(&normal, &g);
        decomp.gtilde = zero(&g);
        let r = rad3_from_recursion(&s, &decomp, &|_| AngularField::constant(&g, 1.0), 4).unwrap();
        for (k, &t) in s.times.iter().enumerate() {
            let exact = -(1.0 - (-4.0 * t).exp()) / 16.0;
            assert!((r.rad3().unwrap()[k].values[0] - exact).abs() < 1e-9);
        }
        assert!(matches!(rad3_from_recursion(&s, &decomp, &|_| zero(&g), 3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn csv_round_trip() {
        let g = SphereGrid::new(1);
        let mut s = RadiationSeries::from_fn(&g, times(1.0, 10), |t, th, _| t * th.cos() + 0.5).unwrap();
        s.rad2 = Some(s.rad1.iter().map(|f| f.scale(2.0)).collect());
        let mut buf = Vec::new();
        write_radiation_csv(&s, &mut buf).unwrap();
        let back = read_radiation_csv(&g, buf.as_slice()).unwrap();
        assert_eq!(back.times, s.times);
        assert!(back.rad3.is_none());
        for k in 0..s.len() {
            assert!(back.rad2().unwrap()[k].zip_with(&s.rad2().unwrap()[k], |a, b| a - b).max_abs() < 1e-14);
        }
    }
}
