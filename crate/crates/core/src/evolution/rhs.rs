//! Method-of-lines right-hand side for ψ = rφ on the uniform s-grid,
//! r = 2s/(1 − s).
//!
//! With W = −g^00 and G = g^rr the spherically reduced equation is
//!
//!   W Π_t = 2g^0r Π_r + g^0r′ Π + Gψ_rr + G′ψ_r − (G′/r + ℓ(ℓ+1)/r²)ψ + a r^{1−p} ψ^p,
//!   ψ_t = Π.
//!
//! Every coefficient is written in terms of ρ-regular quantities for r ≥ 1 so
//! that the update stays finite at s = 1, where it reduces to outgoing
//! transport.

use std::sync::Arc;

use super::NonlinearCoefficient;
use crate::error::{Error, Result};
use crate::geometry::{Height, MetricKind, MetricModel};

/// Additive forcing in the Π equation: fn(t, mode, out).
pub type SourceFn = Arc<dyn Fn(f64, usize, &mut [f64]) + Send + Sync>;

/// Pointwise coefficients of the continuum Π equation at one grid point.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointCoefficients {
    pub pi_s: f64,
    pub pi: f64,
    pub psi_ss: f64,
    pub psi_s: f64,
    /// ψ coefficient without the angular part.
    pub psi: f64,
    /// Multiplies ℓ(ℓ+1) in the ψ coefficient.
    pub angular: f64,
    /// a φ^p r / W written as factor · a · ψ^p.
    pub nonlinear: f64,
}

pub fn point_coefficients(metric: &MetricModel, s: f64, p: u32) -> PointCoefficients {
    let scale = metric.scale();
    let s2 = scale * scale;
    if s <= 0.0 {
        return PointCoefficients::default();
    }
    let om = 1.0 - s;
    if s < 1.0 / 3.0 {
        let r = 2.0 * s / om;
        let w = -metric.g00(r);
        let g0r = metric.g0r(r);
        let dg0r = -s2 / (s2 + r * r).powf(1.5);
        let g = metric.grr(r);
        let dg = metric.dgrr_r(r);
        let sr = 0.5 * om * om;
        let srr = -0.5 * om * om * om;
        PointCoefficients {
            pi_s: 2.0 * g0r * sr / w,
            pi: dg0r / w,
            psi_ss: g * sr * sr / w,
            psi_s: (g * srr + dg * sr) / w,
            psi: -(dg / r) / w,
            angular: -1.0 / (r * r * w),
            nonlinear: r.powi(1 - p as i32) / w,
        }
    } else {
        let rho = om / (2.0 * s);
        let ws = -metric.g00_over_rho2(rho);
        let q = 1.0 + s2 * rho * rho;
        let g0r = -1.0 / q.sqrt();
        let dg0r_scaled = -s2 / q.powf(1.5);
        let g = metric.grr_rho(rho);
        let dg_scaled = metric.dgrr_over_rho2(rho);
        PointCoefficients {
            pi_s: 4.0 * s * s * g0r / ws,
            pi: dg0r_scaled * rho / ws,
            psi_ss: g * s * s * om * om / ws,
            psi_s: (-2.0 * g * s * s * om + 0.5 * dg_scaled * om * om) / ws,
            psi: -(dg_scaled * rho) / ws,
            angular: -1.0 / ws,
            nonlinear: rho.powi(p as i32 - 3) / ws,
        }
    }
}

/// Lagrange weights on the nodes 0..k at x (in units of the node spacing).
fn lagrange_weights<const K: usize>(x: f64) -> [f64; K] {
    let mut w = [0.0; K];
    for (j, wj) in w.iter_mut().enumerate() {
        let mut v = 1.0;
        for m in 0..K {
            if m != j {
                v *= (x - m as f64) / (j as f64 - m as f64);
            }
        }
        *wj = v;
    }
    w
}

const GHOSTS: usize = 3;
const GHOST_STENCIL: usize = 8;

pub struct SemiDiscreteRhs {
    pub n: usize,
    pub ds: f64,
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub power: u32,
    pub modes: Vec<(usize, i64)>,
    pub dissipation: f64,
    coeffs: Vec<PointCoefficients>,
    c_pi_s: Vec<f64>,
    c_pi: Vec<f64>,
    c_psi_ss: Vec<f64>,
    c_psi_s: Vec<f64>,
    c_psi: Vec<f64>,
    c_ang: Vec<f64>,
    ko: f64,
    ghost: [[f64; GHOST_STENCIL]; GHOSTS],
    nonlinear: Option<(NonlinearCoefficient, Vec<f64>)>,
    static_nonlinear: Option<Vec<f64>>,
    source: Option<SourceFn>,
}

/// Scratch buffers reused across evaluations.
pub struct Workspace {
    ext_psi: Vec<f64>,
    ext_pi: Vec<f64>,
    src: Vec<f64>,
}

impl SemiDiscreteRhs {
    pub fn new(
        metric: &MetricModel,
        n: usize,
        power: u32,
        modes: Vec<(usize, i64)>,
        dissipation: f64,
        nonlinear: Option<NonlinearCoefficient>,
        source: Option<SourceFn>,
    ) -> Result<Self> {
        if metric.kind == MetricKind::NormalForm {
            return Err(Error::Unsupported("normal_form models are operator fixtures and cannot be evolved".into()));
        }
        if !matches!(metric.height, Height::Hyperboloidal { .. }) {
            return Err(Error::Unsupported("evolution needs the hyperboloidal height family".into()));
        }
        if n < 16 {
            return Err(Error::InvalidParameter(format!("need at least 16 intervals, got {n}")));
        }
        let ds = 1.0 / n as f64;
        let s: Vec<f64> = (0..=n).map(|i| i as f64 * ds).collect();
        let r: Vec<f64> = s.iter().map(|&s| if s < 1.0 { 2.0 * s / (1.0 - s) } else { f64::INFINITY }).collect();
        let coeffs: Vec<PointCoefficients> = s.iter().map(|&s| point_coefficients(metric, s, power)).collect();
        let d1 = 1.0 / (12.0 * ds);
        let d2 = 1.0 / (12.0 * ds * ds);
        let mut ghost = [[0.0; GHOST_STENCIL]; GHOSTS];
        for (k, g) in ghost.iter_mut().enumerate() {
            let kk = (k + 1) as f64;
            // r(−kΔs) = −r(s′) with s′ = kΔs/(1 + 2kΔs)
            let sp = kk * ds / (1.0 + 2.0 * kk * ds);
            *g = lagrange_weights::<GHOST_STENCIL>(sp / ds);
        }
        let static_nonlinear = match &nonlinear {
            Some(a) if a.time_independent => Some(
                (0..=n)
                    .map(|i| if i == 0 { 0.0 } else { a.eval(0.0, r[i], 0.0, 0.0) * coeffs[i].nonlinear })
                    .collect(),
            ),
            _ => None,
        };
        let nl_factor: Vec<f64> = coeffs.iter().map(|c| c.nonlinear).collect();
        Ok(SemiDiscreteRhs {
            n,
            ds,
            c_pi_s: coeffs.iter().map(|c| c.pi_s * d1).collect(),
            c_pi: coeffs.iter().map(|c| c.pi).collect(),
            c_psi_ss: coeffs.iter().map(|c| c.psi_ss * d2).collect(),
            c_psi_s: coeffs.iter().map(|c| c.psi_s * d1).collect(),
            c_psi: coeffs.iter().map(|c| c.psi).collect(),
            c_ang: coeffs.iter().map(|c| c.angular).collect(),
            coeffs,
            s,
            r,
            power,
            modes,
            dissipation,
            ko: dissipation / (64.0 * ds),
            ghost,
            nonlinear: nonlinear.map(|a| (a, nl_factor)),
            static_nonlinear,
            source,
        })
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            ext_psi: vec![0.0; self.n + 1 + GHOSTS],
            ext_pi: vec![0.0; self.n + 1 + GHOSTS],
            src: vec![0.0; self.n + 1],
        }
    }

    pub fn point(&self, i: usize) -> PointCoefficients {
        self.coeffs[i]
    }

    /// Ghost value at s = −kΔs (k = 1..3) from interior values, with the
    /// parity (−1)^{ℓ+1} of ψ_ℓ in r.
    fn fill_ext(&self, l: usize, u: &[f64], ext: &mut [f64]) {
        ext[GHOSTS..].copy_from_slice(u);
        let sign = if l % 2 == 0 { -1.0 } else { 1.0 };
        for k in 0..GHOSTS {
            let w = &self.ghost[k];
            let v: f64 = w.iter().zip(u).map(|(w, u)| w * u).sum();
            ext[GHOSTS - 1 - k] = sign * v;
        }
    }

    /// Evaluate (ψ_t, Π_t) for every mode. `psi[m]`, `pi[m]` are length n+1.
    pub fn eval(
        &self,
        t: f64,
        psi: &[Vec<f64>],
        pi: &[Vec<f64>],
        dpsi: &mut [Vec<f64>],
        dpi: &mut [Vec<f64>],
        ws: &mut Workspace,
    ) {
        for (mi, &(l, _)) in self.modes.iter().enumerate() {
            self.eval_mode(l, &psi[mi], &pi[mi], &mut dpsi[mi], &mut dpi[mi], ws);
            if let Some(src) = &self.source {
                ws.src.iter_mut().for_each(|v| *v = 0.0);
                src(t, mi, &mut ws.src);
                for (d, s) in dpi[mi].iter_mut().zip(&ws.src).skip(1) {
                    *d += s;
                }
            }
        }
        if let Some((a, factor)) = &self.nonlinear {
            let p = self.power as i32;
            for (mi, _) in self.modes.iter().enumerate() {
                let (u, d) = (&psi[mi], &mut dpi[mi]);
                match &self.static_nonlinear {
                    Some(c) => {
                        for i in 1..=self.n {
                            d[i] += c[i] * u[i].powi(p);
                        }
                    }
                    None => {
                        for i in 1..=self.n {
                            d[i] += a.eval(t, self.r[i], 0.0, 0.0) * factor[i] * u[i].powi(p);
                        }
                    }
                }
            }
        }
    }

    fn eval_mode(&self, l: usize, psi: &[f64], pi: &[f64], dpsi: &mut [f64], dpi: &mut [f64], ws: &mut Workspace) {
        let n = self.n;
        let ll = (l * (l + 1)) as f64;
        self.fill_ext(l, psi, &mut ws.ext_psi);
        self.fill_ext(l, pi, &mut ws.ext_pi);
        let ko = self.ko;
        // interior points i = 1..=n−3, ext index j = i + 3
        let len = n - 3;
        {
            let e = &ws.ext_psi;
            let f = &ws.ext_pi;
            let (em3, em2, em1, e0, ep1, ep2, ep3) = (
                &e[1..1 + len],
                &e[2..2 + len],
                &e[3..3 + len],
                &e[4..4 + len],
                &e[5..5 + len],
                &e[6..6 + len],
                &e[7..7 + len],
            );
            let (fm3, fm2, fm1, f0, fp1, fp2, fp3) = (
                &f[1..1 + len],
                &f[2..2 + len],
                &f[3..3 + len],
                &f[4..4 + len],
                &f[5..5 + len],
                &f[6..6 + len],
                &f[7..7 + len],
            );
            let c_pi_s = &self.c_pi_s[1..1 + len];
            let c_pi = &self.c_pi[1..1 + len];
            let c_ss = &self.c_psi_ss[1..1 + len];
            let c_s = &self.c_psi_s[1..1 + len];
            let c_0 = &self.c_psi[1..1 + len];
            let c_a = &self.c_ang[1..1 + len];
            let out_psi = &mut dpsi[1..1 + len];
            let out_pi = &mut dpi[1..1 + len];
            for k in 0..len {
                let d1p = em2[k] - 8.0 * em1[k] + 8.0 * ep1[k] - ep2[k];
                let d2p = -em2[k] + 16.0 * em1[k] - 30.0 * e0[k] + 16.0 * ep1[k] - ep2[k];
                let d1q = fm2[k] - 8.0 * fm1[k] + 8.0 * fp1[k] - fp2[k];
                let kop = em3[k] - 6.0 * em2[k] + 15.0 * em1[k] - 20.0 * e0[k] + 15.0 * ep1[k] - 6.0 * ep2[k] + ep3[k];
                let koq = fm3[k] - 6.0 * fm2[k] + 15.0 * fm1[k] - 20.0 * f0[k] + 15.0 * fp1[k] - 6.0 * fp2[k] + fp3[k];
                out_psi[k] = f0[k] + ko * kop;
                out_pi[k] = c_pi_s[k] * d1q
                    + c_pi[k] * f0[k]
                    + c_ss[k] * d2p
                    + c_s[k] * d1p
                    + (c_0[k] + ll * c_a[k]) * e0[k]
                    + ko * koq;
            }
        }
        // s = 0: ψ vanishes identically
        dpsi[0] = 0.0;
        dpi[0] = 0.0;
        // near scri: centered at n−2, off-centered at n−1, one-sided at n
        let u = psi;
        let v = pi;
        for i in (n - 2)..=n {
            let (d1p, d2p, d1q) = match n - i {
                2 => (
                    u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2],
                    -u[i - 2] + 16.0 * u[i - 1] - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2],
                    v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2],
                ),
                1 => (
                    -u[i - 3] + 6.0 * u[i - 2] - 18.0 * u[i - 1] + 10.0 * u[i] + 3.0 * u[i + 1],
                    u[i - 4] - 6.0 * u[i - 3] + 14.0 * u[i - 2] - 4.0 * u[i - 1] - 15.0 * u[i] + 10.0 * u[i + 1],
                    -v[i - 3] + 6.0 * v[i - 2] - 18.0 * v[i - 1] + 10.0 * v[i] + 3.0 * v[i + 1],
                ),
                _ => (
                    3.0 * u[i - 4] - 16.0 * u[i - 3] + 36.0 * u[i - 2] - 48.0 * u[i - 1] + 25.0 * u[i],
                    -10.0 * u[i - 5] + 61.0 * u[i - 4] - 156.0 * u[i - 3] + 214.0 * u[i - 2] - 154.0 * u[i - 1]
                        + 45.0 * u[i],
                    3.0 * v[i - 4] - 16.0 * v[i - 3] + 36.0 * v[i - 2] - 48.0 * v[i - 1] + 25.0 * v[i],
                ),
            };
            dpsi[i] = v[i];
            dpi[i] = self.c_pi_s[i] * d1q
                + self.c_pi[i] * v[i]
                + self.c_psi_ss[i] * d2p
                + self.c_psi_s[i] * d1p
                + (self.c_psi[i] + ll * self.c_ang[i]) * u[i];
        }
    }

    /// The continuum Π_t from exact derivatives in s (linear part only).
    pub fn continuum_pi_rate(&self, i: usize, l: usize, psi: f64, psi_s: f64, psi_ss: f64, pi: f64, pi_s: f64) -> f64 {
        let c = &self.coeffs[i];
        c.pi_s * pi_s + c.pi * pi + c.psi_ss * psi_ss + c.psi_s * psi_s + (c.psi + (l * (l + 1)) as f64 * c.angular) * psi
    }

    /// Largest characteristic speed |ds/dt_*| on the grid.
    pub fn max_speed(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    return 0.5;
                }
                // roots of λ² + pi_s λ − psi_ss = 0
                let b = c.pi_s;
                let disc = (b * b + 4.0 * c.psi_ss).max(0.0).sqrt();
                0.5 * (b.abs() + disc)
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_metric, Height, MetricKind};

    fn flat(scale: f64) -> MetricModel {
        build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(scale)).unwrap()
    }

    #[test]
    fn coefficient_forms_agree_at_switch() {
        for metric in [
            flat(1.0),
            flat(2.0),
            build_metric(MetricKind::MassDeformed, 0.3, Height::hyperboloidal(2.0)).unwrap(),
        ] {
            let a = point_coefficients(&metric, 1.0 / 3.0 - 1e-12, 3);
            let b = point_coefficients(&metric, 1.0 / 3.0, 3);
            for (x, y) in [
                (a.pi_s, b.pi_s),
                (a.pi, b.pi),
                (a.psi_ss, b.psi_ss),
                (a.psi_s, b.psi_s),
                (a.psi, b.psi),
                (a.angular, b.angular),
                (a.nonlinear, b.nonlinear),
            ] {
                assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn scri_speed() {
        for (scale, v) in [(1.0, 4.0), (2.0, 1.0)] {
            let c = point_coefficients(&flat(scale), 1.0, 3);
            assert!((c.pi_s + v).abs() < 1e-14);
            assert_eq!(c.psi_ss, 0.0);
        }
        let rhs = SemiDiscreteRhs::new(&flat(2.0), 64, 3, vec![(0, 0)], 0.0, None, None).unwrap();
        assert!((rhs.max_speed() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normal_form_rejected() {
        let m = build_metric(MetricKind::NormalForm, 1.0, Height::default()).unwrap();
        assert!(SemiDiscreteRhs::new(&m, 64, 3, vec![(0, 0)], 0.0, None, None).is_err());
    }

    #[test]
    fn zero_state_has_zero_rate() {
        let rhs = SemiDiscreteRhs::new(
            &flat(2.0),
            64,
            3,
            vec![(0, 0)],
            0.02,
            Some(NonlinearCoefficient::constant(1.0)),
            None,
        )
        .unwrap();
        let mut ws = rhs.workspace();
        let z = vec![vec![0.0; 65]];
        let mut a = vec![vec![1.0; 65]];
        let mut b = vec![vec![1.0; 65]];
        rhs.eval(0.0, &z, &z, &mut a, &mut b, &mut ws);
        assert!(a[0].iter().chain(&b[0]).all(|v| *v == 0.0));
    }

    /// ψ = r/√(1+r²) is odd in r and smooth in s up to scri.
    fn manufactured(s: f64) -> (f64, f64, f64) {
        // in s: ψ = 2s / sqrt((1−s)² + 4s²)
        let q = (1.0 - s).powi(2) + 4.0 * s * s;
        let dq = -2.0 * (1.0 - s) + 8.0 * s;
        let ddq = 10.0;
        let psi = 2.0 * s / q.sqrt();
        let dpsi = 2.0 / q.sqrt() - s * dq / q.powf(1.5);
        let ddpsi = -dq / q.powf(1.5) - (dq + s * ddq) / q.powf(1.5) + 1.5 * s * dq * dq / q.powf(2.5);
        (psi, dpsi, ddpsi)
    }

    #[test]
    fn spatial_operator_is_fourth_order() {
        let metric = build_metric(MetricKind::MassDeformed, 0.2, Height::hyperboloidal(2.0)).unwrap();
        let err = |n: usize| {
            let rhs = SemiDiscreteRhs::new(&metric, n, 3, vec![(0, 0), (1, 0)], 0.0, None, None).unwrap();
            let mut ws = rhs.workspace();
            let mut worst: f64 = 0.0;
            for &(l, _) in &[(0usize, 0i64)] {
                let psi: Vec<f64> = rhs.s.iter().map(|&s| manufactured(s).0).collect();
                let pi: Vec<f64> = rhs.s.iter().map(|&s| 0.5 * manufactured(s).0).collect();
                let mut dpsi = vec![vec![0.0; n + 1]; 2];
                let mut dpi = vec![vec![0.0; n + 1]; 2];
                rhs.eval(0.0, &[psi.clone(), psi.clone()], &[pi.clone(), pi.clone()], &mut dpsi, &mut dpi, &mut ws);
                for i in 1..=n {
                    let (u, du, ddu) = manufactured(rhs.s[i]);
                    let want = rhs.continuum_pi_rate(i, l, u, du, ddu, 0.5 * u, 0.5 * du);
                    worst = worst.max((dpi[0][i] - want).abs());
                }
            }
            worst
        };
        let (e1, e2, e3) = (err(100), err(200), err(400));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 > 3.5 && o2 > 3.5, "orders {o1} {o2} errors {e1} {e2} {e3}");
    }
}
