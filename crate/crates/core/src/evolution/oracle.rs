//! Exact spherical solutions of the free wave equation on flat space, used as
//! the reference for convergence checks and for the radiation field.
//!
//! Every regular spherical solution has rφ = F(t − r) − F(t + r). The profile
//! F′ is read off the data on the slice t = h(r):
//! F′(h − r) = ((h′ + 1)Π₀ − ψ₀′)/2 and F′(h + r) = ((h′ − 1)Π₀ − ψ₀′)/2.

use super::{ProblemSpec, Shape, Symmetry};
use crate::error::{Error, Result};
use crate::evolution::data::{bump, bump_derivative};
use crate::geometry::{MetricKind, MetricModel};

#[derive(Debug, Clone)]
enum Profile {
    Pulse { amplitude: f64, center: f64, width: f64 },
    Table { x: Vec<f64>, f: Vec<f64>, df: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct FlatOracle {
    scale: f64,
    profile: Profile,
}

impl FlatOracle {
    /// F(x).
    pub fn f(&self, x: f64) -> f64 {
        match &self.profile {
            Profile::Pulse { amplitude, center, width } => amplitude * bump((x - center) / width),
            Profile::Table { x: xs, f, df } => hermite(xs, f, df, x),
        }
    }

    /// F′(x).
    pub fn df(&self, x: f64) -> f64 {
        match &self.profile {
            Profile::Pulse { amplitude, center, width } => amplitude * bump_derivative((x - center) / width) / width,
            Profile::Table { x: xs, f, df } => hermite_derivative(xs, f, df, x),
        }
    }

    fn f_inf(&self) -> f64 {
        match &self.profile {
            Profile::Pulse { .. } => 0.0,
            Profile::Table { f, .. } => *f.last().unwrap(),
        }
    }

    fn t_of(&self, t_star: f64, r: f64) -> f64 {
        let s = self.scale;
        t_star + r * r / ((s * s + r * r).sqrt() + s)
    }

    /// ψ = rφ at (t_*, r); r may be +∞.
    pub fn psi(&self, t_star: f64, r: f64) -> f64 {
        if !r.is_finite() {
            return self.rad1(t_star);
        }
        let t = self.t_of(t_star, r);
        self.f(t - r) - self.f(t + r)
    }

    /// ∂_{t_*}ψ.
    pub fn pi(&self, t_star: f64, r: f64) -> f64 {
        if !r.is_finite() {
            return self.df(t_star - self.scale);
        }
        let t = self.t_of(t_star, r);
        self.df(t - r) - self.df(t + r)
    }

    pub fn phi(&self, t_star: f64, r: f64) -> f64 {
        if r == 0.0 {
            return -2.0 * self.df(t_star);
        }
        self.psi(t_star, r) / r
    }

    /// Radiation field lim rφ along t_* = const.
    pub fn rad1(&self, t_star: f64) -> f64 {
        self.f(t_star - self.scale) - self.f_inf()
    }
}

fn locate(xs: &[f64], x: f64) -> Option<usize> {
    if x < xs[0] || x > *xs.last().unwrap() {
        return None;
    }
    let k = xs.partition_point(|v| *v <= x);
    Some(k.clamp(1, xs.len() - 1) - 1)
}

fn hermite(xs: &[f64], f: &[f64], df: &[f64], x: f64) -> f64 {
    let Some(k) = locate(xs, x) else {
        return if x < xs[0] { f[0] } else { *f.last().unwrap() };
    };
    let h = xs[k + 1] - xs[k];
    let t = (x - xs[k]) / h;
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * f[k]
        + (t3 - 2.0 * t2 + t) * h * df[k]
        + (-2.0 * t3 + 3.0 * t2) * f[k + 1]
        + (t3 - t2) * h * df[k + 1]
}

fn hermite_derivative(xs: &[f64], f: &[f64], df: &[f64], x: f64) -> f64 {
    let Some(k) = locate(xs, x) else {
        return 0.0;
    };
    let h = xs[k + 1] - xs[k];
    let t = (x - xs[k]) / h;
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * f[k] + (-6.0 * t2 + 6.0 * t) * f[k + 1]) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * df[k]
        + (3.0 * t2 - 2.0 * t) * df[k + 1]
}

/// Exact solution for a linear, spherical, flat problem with compact data.
pub fn flat_exact_oracle(spec: &ProblemSpec) -> Result<FlatOracle> {
    let metric = &spec.metric;
    let flat = metric.kind == MetricKind::MinkowskiHyperboloidal
        || (metric.kind == MetricKind::MassDeformed && metric.mass == 0.0);
    if !flat || metric.height.scale().is_none() {
        return Err(Error::Unsupported("the exact oracle needs flat space with the hyperboloidal height".into()));
    }
    if !spec.is_linear() || spec.symmetry != Symmetry::Spherical {
        return Err(Error::Unsupported("the exact oracle covers linear spherical runs only".into()));
    }
    if !spec.data.is_compact() {
        return Err(Error::Unsupported("the exact oracle needs compactly supported data".into()));
    }
    let scale = metric.scale();
    if let [one] = spec.data.residual.as_slice() {
        if let Shape::FlatPulse { amplitude, center, width } = one.shape {
            return Ok(FlatOracle { scale, profile: Profile::Pulse { amplitude, center, width } });
        }
    }
    let r_max = spec
        .data
        .residual
        .iter()
        .map(|m| m.shape.support_radius(metric))
        .fold(0.0, f64::max);
    if !r_max.is_finite() {
        return Err(Error::Unsupported("the exact oracle needs compactly supported data".into()));
    }
    tabulate(metric, spec, r_max + 0.5, scale)
}

fn tabulate(metric: &MetricModel, spec: &ProblemSpec, r_max: f64, scale: f64) -> Result<FlatOracle> {
    let n = 8000;
    // branch ξ = h − r runs from 0 down to ξ(r_max); branch η = h + r up to η(r_max)
    let mut xi = Vec::with_capacity(n + 1);
    let mut eta = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let r = r_max * j as f64 / n as f64;
        let (_, dpsi, pi) = spec.data.eval_spherical(metric, r)?;
        let h = metric.height_at(r);
        let dh = metric.dheight(r);
        xi.push((h - r, 0.5 * ((dh + 1.0) * pi - dpsi), dh - 1.0));
        eta.push((h + r, 0.5 * ((dh - 1.0) * pi - dpsi), dh + 1.0));
    }
    // F along each branch by Simpson in r, F(0) = 0
    let integrate = |branch: &[(f64, f64, f64)]| -> Vec<f64> {
        let dr = r_max / n as f64;
        let g: Vec<f64> = branch.iter().map(|(_, fp, dx)| fp * dx).collect();
        let mut out = vec![0.0; branch.len()];
        for j in 1..branch.len() {
            // trapezoid with end corrections from the centered slope of g
            let gm = |k: usize| -> f64 {
                if k == 0 {
                    (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * dr)
                } else if k == branch.len() - 1 {
                    (3.0 * g[k] - 4.0 * g[k - 1] + g[k - 2]) / (2.0 * dr)
                } else {
                    (g[k + 1] - g[k - 1]) / (2.0 * dr)
                }
            };
            out[j] = out[j - 1] + 0.5 * dr * (g[j - 1] + g[j]) + dr * dr / 12.0 * (gm(j - 1) - gm(j));
        }
        out
    };
    let f_xi = integrate(&xi);
    let f_eta = integrate(&eta);
    let mut x = Vec::with_capacity(2 * n + 1);
    let mut f = Vec::with_capacity(2 * n + 1);
    let mut df = Vec::with_capacity(2 * n + 1);
    for j in (1..=n).rev() {
        x.push(xi[j].0);
        f.push(f_xi[j]);
        df.push(xi[j].1);
    }
    for j in 0..=n {
        x.push(eta[j].0);
        f.push(f_eta[j]);
        df.push(eta[j].1);
    }
    Ok(FlatOracle { scale, profile: Profile::Table { x, f, df } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::SphereGrid;
    use crate::evolution::{Discretization, InitialData, ProblemSpec};
    use crate::geometry::{build_metric, Height};

    fn spec(shape: Shape) -> ProblemSpec {
        ProblemSpec {
            metric: build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(2.0)).unwrap(),
            power: 3,
            nonlin_coeff: None,
            data: InitialData::spherical(&SphereGrid::new(0), shape),
            symmetry: Symmetry::Spherical,
            discretization: Discretization::default(),
            source: None,
        }
    }

    #[test]
    fn oracle_reproduces_initial_data() {
        let shape = Shape::Bump { amplitude: 1.0, center: 1.5, width: 1.0 };
        let sp = spec(shape);
        let o = flat_exact_oracle(&sp).unwrap();
        for &r in &[0.2, 1.0, 1.7, 2.4, 4.0] {
            let (psi, _, pi) = shape.eval(&sp.metric, r);
            assert!((o.psi(0.0, r) - psi).abs() < 1e-8, "r={r}");
            assert!((o.pi(0.0, r) - pi).abs() < 1e-6, "r={r}");
        }
    }

    #[test]
    fn tabulated_matches_pulse() {
        let shape = Shape::FlatPulse { amplitude: 0.7, center: 0.8, width: 1.5 };
        let sp = spec(shape);
        let exact = flat_exact_oracle(&sp).unwrap();
        let table = tabulate(&sp.metric, &sp, 4.0, 2.0).unwrap();
        for &(t, r) in &[(0.5, 0.3), (2.0, 1.0), (3.0, 10.0), (1.0, f64::INFINITY)] {
            assert!((exact.psi(t, r) - table.psi(t, r)).abs() < 1e-8, "t={t} r={r}");
        }
    }
}
