//! Model objects of the low-energy analysis, evaluated numerically: the
//! regular-singular ODE (ρ∂_ρ − 1)u = f, the transition-face model solution
//! ũ_mod, the leading profile at I⁺ and the inverse Fourier transforms of
//! σᵏ log(σ + i0).

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::angular::AngularField;
use crate::error::{Error, Result};
use crate::fitting::{derivative_with, lstsq};
use crate::quadrature::{cumulative_corrected, filon, integrate_complex_semi_infinite};

/// Samples of a function of ρ on a grid strictly decreasing in ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct LogGridFunction {
    pub rho: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Spherical-harmonic index (ℓ, m) when the samples belong to one mode.
    pub mode: Option<(usize, i64)>,
}

impl LogGridFunction {
    pub fn new(rho: Vec<f64>, values: Vec<Complex64>, mode: Option<(usize, i64)>) -> Result<Self> {
        if rho.len() != values.len() {
            return Err(Error::Shape(format!("{} radii for {} values", rho.len(), values.len())));
        }
        if rho.len() < 8 {
            return Err(Error::InvalidParameter("a log grid needs at least 8 samples".into()));
        }
        if rho.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Domain("grid radii must be positive and finite".into()));
        }
        if rho.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Domain("grid must be strictly decreasing in rho".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("non-finite sample".into()));
        }
        Ok(Self { rho, values, mode })
    }

    /// `n` samples log-spaced from `rho_max` down to `rho_min`.
    pub fn log_spaced(rho_max: f64, rho_min: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        if !(rho_min > 0.0 && rho_max > rho_min) || n < 2 {
            return Err(Error::InvalidParameter(format!("bad log grid [{rho_min}, {rho_max}] x {n}")));
        }
        let (a, b) = (rho_max.ln(), rho_min.ln());
        let rho: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
        let values = rho.iter().map(|&r| f(r)).collect();
        Self::new(rho, values, None)
    }

    pub fn real(rho_max: f64, rho_min: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::log_spaced(rho_max, rho_min, n, |r| Complex64::new(f(r), 0.0))
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// s = −log ρ, increasing.
    pub fn s(&self) -> Vec<f64> {
        self.rho.iter().map(|r| -r.ln()).collect()
    }

    fn map_parts(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Complex64> {
        let re: Vec<f64> = self.values.iter().map(|v| v.re).collect();
        let im: Vec<f64> = self.values.iter().map(|v| v.im).collect();
        f(&re).into_iter().zip(f(&im)).map(|(a, b)| Complex64::new(a, b)).collect()
    }

    /// Exponent of the decay at the small-ρ end, from a log-log fit over the
    /// last tenth of the grid. `None` when the tail vanishes identically.
    pub fn tail_exponent(&self) -> Option<f64> {
        let n = self.len();
        let k = (n / 10).max(6).min(n);
        let pts: Vec<(f64, f64)> = (n - k..n)
            .filter(|&i| self.values[i].norm() > 0.0)
            .map(|i| (self.rho[i].ln(), self.values[i].norm().ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let design: Vec<Vec<f64>> = pts.iter().map(|(x, _)| vec![1.0, *x]).collect();
        let y: Vec<f64> = pts.iter().map(|(_, y)| *y).collect();
        lstsq(&design, &y, None).ok().map(|f| f.coef[1])
    }

    /// The discrete b-operator (ρ∂_ρ − 1) applied to the samples.
    pub fn apply_bode(&self) -> Vec<Complex64> {
        let s = self.s();
        let d = self.map_parts(|y| derivative_with(&s, y, 7));
        d.iter().zip(&self.values).map(|(ds, u)| -ds - u).collect()
    }
}

const TAIL_SLACK: f64 = 0.05;

fn checked_tail(f: &LogGridFunction, alpha: f64) -> Result<Option<f64>> {
    match f.tail_exponent() {
        None => Ok(None),
        Some(e) if e >= alpha - TAIL_SLACK => Ok(Some(e)),
        Some(e) => Err(Error::Precondition(format!("f decays like rho^{e:.3}, slower than rho^{alpha}"))),
    }
}

/// The decaying solution of (ρ∂_ρ − 1)u = f,
/// u(s) = e^{−s}∫_s^∞ e^t f(t) dt in s = −log ρ.
///
/// Beyond the smallest sample f is continued as a pure power with the
/// measured tail exponent.
pub fn solve_bode(f: &LogGridFunction, alpha: f64) -> Result<LogGridFunction> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must exceed 1")));
    }
    let Some(e) = checked_tail(f, alpha)? else {
        return Ok(LogGridFunction { values: vec![Complex64::new(0.0, 0.0); f.len()], ..f.clone() });
    };
    let s = f.s();
    let n = s.len();
    // g(t) = e^t f(t) = f/ρ
    // accumulate from the small-ρ end so each partial integral keeps full precision
    let back: Vec<f64> = s.iter().rev().map(|x| -x).collect();
    let g = LogGridFunction {
        values: f.values.iter().zip(&f.rho).rev().map(|(v, r)| v / r).collect(),
        ..f.clone()
    };
    let cum = g.map_parts(|y| {
        let dy = derivative_with(&back, y, 7);
        cumulative_corrected(&back, y, &dy)
    });
    let tail = g.values[0] / (e - 1.0);
    let values = (0..n).map(|i| f.rho[i] * (cum[n - 1 - i] + tail)).collect();
    Ok(LogGridFunction { rho: f.rho.clone(), values, mode: f.mode })
}

/// The Mellin value ∫₀^∞ ρ⁻² f dρ. The samples are taken to vanish above
/// the largest grid radius; below the smallest they continue as a power.
///
/// For a solution u ∈ A^β, β < 1, of (ρ∂_ρ − 1)u = f the ρ¹ coefficient of u
/// is minus this value.
pub fn bode_leading(f: &LogGridFunction) -> Result<Complex64> {
    let e = match f.tail_exponent() {
        None => None,
        Some(e) if e > 1.0 + TAIL_SLACK => Some(e),
        Some(e) => {
            return Err(Error::NonIntegrable(format!("rho^-2 f ~ rho^{:.3} is not integrable at 0", e - 2.0)));
        }
    };
    let s = f.s();
    let n = s.len();
    let g = LogGridFunction { values: f.values.iter().zip(&f.rho).map(|(v, r)| v / r).collect(), ..f.clone() };
    let cum = g.map_parts(|y| {
        let dy = derivative_with(&s, y, 7);
        cumulative_corrected(&s, y, &dy)
    });
    let tail = e.map_or(Complex64::new(0.0, 0.0), |e| g.values[n - 1] / (e - 1.0));
    Ok(cum[n - 1] + tail)
}

/// ρ¹ coefficient of u from a fit u ≈ aρ + bρ^α over the smallest radii.
pub fn rho1_coefficient(u: &LogGridFunction, alpha: f64) -> Result<Complex64> {
    let n = u.len();
    let k = (n / 10).max(8).min(n);
    let design: Vec<Vec<f64>> = u.rho[n - k..].iter().map(|r| vec![*r, r.powf(alpha)]).collect();
    let part = |y: Vec<f64>| lstsq(&design, &y, None).map(|f| f.coef[0]);
    let re = part(u.values[n - k..].iter().map(|v| v.re).collect())?;
    let im = part(u.values[n - k..].iter().map(|v| v.im).collect())?;
    Ok(Complex64::new(re, im))
}

fn umod_kernel(rhat: f64, sign: f64) -> Complex64 {
    let i = Complex64::new(0.0, sign);
    let mut splits = [1.0, 0.5 / rhat, 5.0 / rhat, 40.0 / rhat];
    splits.sort_by(f64::total_cmp);
    integrate_complex_semi_infinite(
        |t| Complex64::new((-2.0 * t * rhat).exp(), 0.0) / (t - i),
        0.0,
        &splits,
        1e-300,
        1e-12,
    )
    .value
}

/// ∂_r̂(r̂ ũ_mod) = ∫₀^∞ e^{−2tr̂}(t − i)⁻¹ dt, r̂ = 1/ρ̂.
pub fn umod_derivative(rhat: f64) -> Result<Complex64> {
    if !(rhat > 0.0) || !rhat.is_finite() {
        return Err(Error::Domain(format!("rhat = {rhat} must be positive")));
    }
    Ok(umod_kernel(rhat, 1.0))
}

/// Same integral with (t + i)⁻¹; the complex conjugate of `umod_derivative`.
pub fn umod_derivative_conjugate(rhat: f64) -> Result<Complex64> {
    if !(rhat > 0.0) || !rhat.is_finite() {
        return Err(Error::Domain(format!("rhat = {rhat} must be positive")));
    }
    Ok(umod_kernel(rhat, -1.0))
}

/// ũ_mod(r̂) = r̂⁻¹ ∫₀^r̂ ∂(r̂ũ_mod) for the source f̃ ≡ 1. The r̂ integral
/// of the kernel is done in closed form under the t integral:
/// r̂ũ_mod = ∫₀^∞ (1 − e^{−2tr̂}) / (2t(t − i)) dt.
pub fn umod_profile(rhat: f64) -> Result<Complex64> {
    if !(rhat > 0.0) || !rhat.is_finite() {
        return Err(Error::Domain(format!("rhat = {rhat} must be positive")));
    }
    let i = Complex64::new(0.0, 1.0);
    let mut splits = [1.0, 0.5 / rhat, 5.0 / rhat, 40.0 / rhat];
    splits.sort_by(f64::total_cmp);
    let total = integrate_complex_semi_infinite(
        |t| {
            let w = if t > 0.0 { -(-2.0 * t * rhat).exp_m1() / (2.0 * t) } else { rhat };
            Complex64::new(w, 0.0) / (t - i)
        },
        0.0,
        &splits,
        1e-300,
        1e-12,
    );
    Ok(total.value / rhat)
}

/// Fit window in r̂ = 1/ρ̂ for the log ρ̂ coefficient.
pub const UMOD_FIT_WINDOW: (f64, f64) = (1e-4, 1e-2);
const UMOD_FIT_RESIDUAL: f64 = 1e-6;

/// Log coefficient of ũ_mod for f̃ ≡ 1, fitted once.
pub fn umod_unit_log_coefficient() -> Result<f64> {
    static CACHE: OnceLock<std::result::Result<f64, String>> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            let (a, b) = UMOD_FIT_WINDOW;
            let n = 25;
            let mut design = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for j in 0..n {
                let r = (a.ln() + (b / a).ln() * j as f64 / (n - 1) as f64).exp();
                let u = umod_profile(r).map_err(|e| e.to_string())?;
                let l = r.ln();
                // log ρ̂ = −log r̂
                design.push(vec![-l, 1.0, r, r * r * l, r * r]);
                y.push(u.re);
            }
            let fit = lstsq(&design, &y, None).map_err(|e| e.to_string())?;
            let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if fit.residual > UMOD_FIT_RESIDUAL * scale {
                return Err(format!("log fit residual {:e} above threshold", fit.residual));
            }
            Ok(fit.coef[0])
        })
        .clone()
        .map_err(Error::Fit)
}

/// Coefficient of log ρ̂ in the zero-face expansion of the model solution
/// with source ρ̂² f̃. Only the spherical mean of f̃ contributes.
pub fn umod_log_coefficient(ftilde: &AngularField) -> Result<f64> {
    Ok(umod_unit_log_coefficient()? * ftilde.average())
}

/// Leading term at I⁺: 2c₀ t_*⁻² · v/(v + 2) with v = ρ t_*.
pub fn iplus_profile(c0: f64, v: f64, t_star: f64) -> Result<f64> {
    if !(v >= 0.0) || !(t_star > 0.0) {
        return Err(Error::Domain(format!("need v >= 0 and t_* > 0, got v = {v}, t_* = {t_star}")));
    }
    let shape = if v.is_infinite() { 1.0 } else { v / (v + 2.0) };
    Ok(2.0 * c0 * shape / (t_star * t_star))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// d_k = e^{−iπk/2}(−1)ᵏ k!, the published closed form for
/// ℱ⁻¹(σᵏ log(σ + i0)) = d_k t^{−k−1} modulo smooth terms.
pub fn tail_kernel(k: u32) -> Result<Complex64> {
    if k == 0 {
        return Err(Error::InvalidParameter("tail_kernel is defined for k >= 1".into()));
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok(Complex64::from_polar(sign * factorial(k), -std::f64::consts::FRAC_PI_2 * k as f64))
}

/// The same coefficient obtained by wrapping the inverse transform around
/// the branch cut of log(σ + i0) on the negative imaginary axis:
/// −(−i)ᵏ k!. Valid for k ≥ 0.
pub fn tail_kernel_branch_cut(k: u32) -> Complex64 {
    -Complex64::new(0.0, -1.0).powu(k) * factorial(k)
}

/// Cutoff applied to σᵏ log(σ + i0) before the oscillatory quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regulator {
    /// Even smooth bump, ≡ 1 on (−½, ½), supported in (−1, 1).
    Bump,
    /// exp(−(εσ)²); equal to 1 to second order at σ = 0.
    Gaussian { eps: f64 },
}

impl Regulator {
    pub fn eval(&self, sigma: f64) -> f64 {
        match *self {
            Regulator::Bump => 1.0 - smooth_step(2.0 * sigma.abs() - 1.0),
            Regulator::Gaussian { eps } => (-(eps * sigma).powi(2)).exp(),
        }
    }

    fn half_width(&self) -> f64 {
        match *self {
            Regulator::Bump => 1.0,
            Regulator::Gaussian { eps } => 7.0 / eps,
        }
    }
}

impl Default for Regulator {
    fn default() -> Self {
        Regulator::Gaussian { eps: 0.5 }
    }
}

fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

/// (2π)⁻¹∫ e^{−iσt} ψ(σ) σᵏ log(σ + i0) dσ by Filon panels, graded
/// geometrically towards the logarithmic point σ = 0.
pub fn tail_kernel_numeric(k: u32, t: f64, reg: Regulator) -> Complex64 {
    let l = reg.half_width();
    let mut edges: Vec<f64> = vec![1e-14];
    while *edges.last().unwrap() < 0.05 {
        let x = edges.last().unwrap() * 1.5;
        edges.push(x.min(0.05));
    }
    let mut x = 0.05;
    while x < l {
        x = (x + 0.05).min(l);
        edges.push(x);
    }
    let g = |sigma: f64| {
        let lg = Complex64::new(sigma.abs().ln(), if sigma < 0.0 { std::f64::consts::PI } else { 0.0 });
        lg * sigma.powi(k as i32) * reg.eval(sigma)
    };
    let mut total = Complex64::new(0.0, 0.0);
    for w in edges.windows(2) {
        total += filon(g, w[0], w[1], -t, 4);
        total += filon(g, -w[1], -w[0], -t, 4);
    }
    total / (2.0 * std::f64::consts::PI)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCheck {
    pub k: u32,
    pub t: f64,
    pub formula: Complex64,
    /// t^{k+1} times the numerical inverse transform.
    pub numeric: Complex64,
    pub branch_cut: Complex64,
    /// |numeric − formula| / |formula|.
    pub rel_err: f64,
}

pub fn check_tail_kernel(k: u32, t: f64, reg: Regulator) -> Result<KernelCheck> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    let formula = tail_kernel(k)?;
    let numeric = tail_kernel_numeric(k, t, reg) * t.powi(k as i32 + 1);
    Ok(KernelCheck {
        k,
        t,
        formula,
        numeric,
        branch_cut: tail_kernel_branch_cut(k),
        rel_err: (numeric - formula).norm() / formula.norm(),
    })
}
