//! Late-time power-law fits, tail verdicts and the profile check along I⁺.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::asymptotic_kernels::iplus_profile;
use crate::error::{Error, Result};
use crate::evolution::io::fmt;
use crate::evolution::Trajectory;
use crate::fitting::lstsq;

/// Smallest admissible t_b / t_a.
pub const MIN_WINDOW_RATIO: f64 = 5.0;
const SUBWINDOWS: usize = 9;
/// Exponent drift between window halves above which a fit is flagged.
pub const DRIFT_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Probe radius; +∞ for the radiation field.
    pub probe: f64,
    /// Fit window [t_a, t_b].
    pub t_a: f64,
    pub t_b: f64,
    /// φ ≈ amplitude · t^{−exponent}; the amplitude carries the sign of φ.
    pub exponent: f64,
    pub amplitude: f64,
    pub exponent_err: f64,
    pub amplitude_err: f64,
    /// RMS residual of log|φ|.
    pub goodness: f64,
    /// Exponent of the later half of the window minus that of the earlier half.
    pub drift: f64,
    pub non_power_law: bool,
    /// The requested window start was moved past a zero crossing.
    pub shifted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinnedFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
}

fn in_window(t: &[f64], y: &[f64], w: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    t.iter().zip(y).filter(|(t, _)| **t >= w.0 && **t <= w.1).map(|(a, b)| (*a, *b)).unzip()
}

/// Weights making every sample count by the stretch of log t it covers.
fn log_weights(t: &[f64]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|i| {
            let a = t[i.saturating_sub(1)].ln();
            let b = t[(i + 1).min(n - 1)].ln();
            (0.5 * (b - a)).max(1e-300).sqrt()
        })
        .collect()
}

fn loglog(t: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if t.len() < 4 {
        return Err(Error::Fit(format!("{} samples in fit window", t.len())));
    }
    let design: Vec<Vec<f64>> = t.iter().map(|t| vec![1.0, t.ln()]).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let w = log_weights(t);
    let fit = lstsq(&design, &ly, Some(&w))?;
    let wsum: f64 = w.iter().map(|w| w * w).sum();
    Ok((-fit.coef[1], fit.coef[0].exp(), fit.residual / wsum.sqrt()))
}

fn subwindows(w: (f64, f64)) -> Vec<(f64, f64)> {
    // windows spanning half the log range, sliding across it
    let (a, b) = (w.0.ln(), w.1.ln());
    let len = 0.5 * (b - a);
    (0..SUBWINDOWS)
        .map(|j| {
            let lo = a + (b - a - len) * j as f64 / (SUBWINDOWS - 1) as f64;
            (lo.exp(), (lo + len).exp())
        })
        .collect()
}

fn spread(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1).max(1) as f64).sqrt()
}

/// Moves the window start past the last sign change of y; refuses tails that
/// change sign more than once inside the window.
fn sign_definite_window(t: &[f64], y: &[f64], w: (f64, f64)) -> Result<((f64, f64), bool)> {
    let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= w.0 && t[i] <= w.1).collect();
    let crossings: Vec<usize> = idx.windows(2).filter(|p| y[p[0]] * y[p[1]] <= 0.0).map(|p| p[1]).collect();
    match crossings.len() {
        0 => Ok((w, false)),
        1 => {
            let start = t[crossings[0]];
            if w.1 / start < MIN_WINDOW_RATIO {
                Err(Error::Fit(format!(
                    "zero crossing at t = {start:.4}; remaining window [{start:.4}, {:.4}] is shorter than a factor {MIN_WINDOW_RATIO}",
                    w.1
                )))
            } else {
                Ok(((start, w.1), true))
            }
        }
        k => Err(Error::Fit(format!("oscillatory tail: {k} zero crossings in [{}, {}]", w.0, w.1))),
    }
}

/// Log-log regression of |φ| against t over `window`, with errors from the
/// scatter over sliding subwindows.
pub fn fit_power_law(t: &[f64], phi: &[f64], window: (f64, f64), probe: f64) -> Result<TailFit> {
    if t.len() != phi.len() {
        return Err(Error::Shape("time and value series differ in length".into()));
    }
    if !(window.0 > 0.0) || window.1 / window.0 < MIN_WINDOW_RATIO {
        return Err(Error::InvalidParameter(format!(
            "fit window [{}, {}] must have t_b/t_a >= {MIN_WINDOW_RATIO}",
            window.0, window.1
        )));
    }
    let (window, shifted) = sign_definite_window(t, phi, window)?;
    let (tw, yw) = in_window(t, phi, window);
    if yw.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::Fit("series vanishes or is not finite inside the window".into()));
    }
    let sign = yw[0].signum();
    let (exponent, amp, goodness) = loglog(&tw, &yw)?;
    let mut es = Vec::new();
    let mut amps = Vec::new();
    for sw in subwindows(window) {
        let (a, b) = in_window(t, phi, sw);
        if let Ok((e, m, _)) = loglog(&a, &b) {
            es.push(e);
            amps.push(m);
        }
    }
    if es.len() < 2 {
        return Err(Error::Fit("too few samples for subwindow errors".into()));
    }
    let mid = (window.0 * window.1).sqrt();
    let (ta, ya) = in_window(t, phi, (window.0, mid));
    let (tb, yb) = in_window(t, phi, (mid, window.1));
    let drift = loglog(&tb, &yb)?.0 - loglog(&ta, &ya)?.0;
    Ok(TailFit {
        probe,
        t_a: window.0,
        t_b: window.1,
        exponent,
        amplitude: sign * amp,
        exponent_err: spread(&es),
        amplitude_err: spread(&amps),
        goodness,
        drift,
        non_power_law: drift.abs() > DRIFT_LIMIT,
        shifted,
    })
}

/// Amplitude with the exponent held fixed: the log-weighted mean of
/// φ·t^{exponent}.
pub fn fit_pinned(t: &[f64], phi: &[f64], window: (f64, f64), exponent: f64) -> Result<PinnedFit> {
    let mean = |w: (f64, f64)| -> Option<f64> {
        let (tw, yw) = in_window(t, phi, w);
        if tw.len() < 2 {
            return None;
        }
        let wt: Vec<f64> = log_weights(&tw).iter().map(|w| w * w).collect();
        let total: f64 = wt.iter().sum();
        Some(tw.iter().zip(&yw).zip(&wt).map(|((t, y), w)| w * y * t.powf(exponent)).sum::<f64>() / total)
    };
    let amplitude = mean(window).ok_or_else(|| Error::Fit("empty fit window".into()))?;
    let subs: Vec<f64> = subwindows(window).into_iter().filter_map(mean).collect();
    Ok(PinnedFit { exponent, amplitude, amplitude_err: if subs.len() > 1 { spread(&subs) } else { 0.0 } })
}

/// Acceptance band for amplitude / (2·coefficient).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub exponent: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Tolerances {
    pub fn symmetric(exponent: f64, amplitude: f64) -> Self {
        Self { exponent, ratio_min: 1.0 - amplitude, ratio_max: 1.0 + amplitude }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { exponent: 0.1, ratio_min: 0.8, ratio_max: 1.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceVerdict {
    pub expected_exponent: f64,
    pub exponent: f64,
    pub exponent_ok: bool,
    /// |free amplitude| / |2·coefficient|.
    pub ratio_free: f64,
    /// |pinned amplitude| / |2·coefficient|; the value the band is applied to.
    pub ratio_pinned: f64,
    /// Signed pinned ratio amplitude / (2·coefficient).
    pub ratio_signed: f64,
    pub magnitude_ok: bool,
    pub sign_ok: bool,
    /// The prediction vanishes while the measured amplitude does not.
    pub indeterminate: bool,
    pub tol_exponent: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub pass: bool,
}

/// The expected tail exponent: 2 for cubic, 3 for quartic and higher powers.
pub fn expected_exponent(p: u32) -> f64 {
    if p == 3 {
        2.0
    } else {
        3.0
    }
}

pub fn price_verdict(
    fit: &TailFit,
    pinned: Option<&PinnedFit>,
    predicted_coefficient: f64,
    p: u32,
    tol: &Tolerances,
) -> PriceVerdict {
    let expected = expected_exponent(p);
    let exponent_ok = (fit.exponent - expected).abs() <= tol.exponent;
    let amp_pinned = pinned.map_or(fit.amplitude, |p| p.amplitude);
    let target = 2.0 * predicted_coefficient;
    let indeterminate = target == 0.0 || target.abs() < 1e-12 * amp_pinned.abs();
    let (ratio_free, ratio_pinned, ratio_signed) = if indeterminate {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (fit.amplitude.abs() / target.abs(), amp_pinned.abs() / target.abs(), amp_pinned / target)
    };
    let magnitude_ok = !indeterminate && (tol.ratio_min..=tol.ratio_max).contains(&ratio_pinned);
    let sign_ok = !indeterminate && amp_pinned.signum() == target.signum();
    PriceVerdict {
        expected_exponent: expected,
        exponent: fit.exponent,
        exponent_ok,
        ratio_free,
        ratio_pinned,
        ratio_signed,
        magnitude_ok,
        sign_ok,
        indeterminate,
        tol_exponent: tol.exponent,
        ratio_min: tol.ratio_min,
        ratio_max: tol.ratio_max,
        pass: exponent_ok && magnitude_ok && sign_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub sup_error: f64,
    /// (t_*, v) where the sup is attained.
    pub worst_t: f64,
    pub worst_v: f64,
    pub samples: usize,
    pub t_min: f64,
    /// Range of v actually sampled.
    pub v_lo: f64,
    pub v_hi: f64,
}

/// sup |φ t²/(2c₀) − v/(v + 2)| over samples (t_*, v, φ).
pub fn profile_sup_error(samples: &[(f64, f64, f64)], c0: f64) -> Result<(f64, (f64, f64))> {
    if c0 == 0.0 {
        return Err(Error::InvalidParameter("c0 = 0 leaves the profile undefined".into()));
    }
    let mut best = (0.0, (f64::NAN, f64::NAN));
    for &(t, v, phi) in samples {
        let shape = iplus_profile(c0, v, t)? * t * t / (2.0 * c0);
        let e = (phi * t * t / (2.0 * c0) - shape).abs();
        if e > best.0 || best.1 .0.is_nan() {
            best = (e, (t, v));
        }
    }
    Ok(best)
}

/// Sphere-averaged φ with its (t_*, v) location: every snapshot with
/// t_* ≥ `t_min` at each grid point with v = t_*/r in `v_range`, plus the
/// probe series.
pub fn profile_samples(traj: &Trajectory, t_min: f64, v_range: (f64, f64)) -> Vec<(f64, f64, f64)> {
    let mut samples = Vec::new();
    let s = traj.s_grid();
    for snap in traj.snapshots.iter().filter(|st| st.t_star >= t_min) {
        let t = snap.t_star;
        for (i, &si) in s.iter().enumerate().take(traj.n).skip(1) {
            let r = 2.0 * si / (1.0 - si);
            let v = t / r;
            if v < v_range.0 || v > v_range.1 {
                continue;
            }
            let modes: Vec<f64> = snap.psi.iter().map(|m| m[i]).collect();
            samples.push((t, v, traj.to_nodal(&modes).average() / r));
        }
    }
    for p in &traj.probes {
        for (k, &t) in traj.times.iter().enumerate() {
            let v = t / p.r;
            if t >= t_min && v >= v_range.0 && v <= v_range.1 {
                samples.push((t, v, traj.to_nodal(&p.phi[k]).average()));
            }
        }
    }
    samples
}

/// Sup error of the profile over [`profile_samples`].
pub fn profile_check(traj: &Trajectory, c0: f64, t_min: f64, v_range: (f64, f64)) -> Result<ProfileReport> {
    let samples = profile_samples(traj, t_min, v_range);
    let lo = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    // both ends of the v range must be reached to within 25%
    if samples.is_empty() || lo > 1.25 * v_range.0 || hi < v_range.1 / 1.25 {
        return Err(Error::Precondition(format!(
            "insufficient probe coverage: sampled v in [{lo:.3}, {hi:.3}] at t_* >= {t_min}, need [{}, {}]",
            v_range.0, v_range.1
        )));
    }
    let (sup_error, worst) = profile_sup_error(&samples, c0)?;
    Ok(ProfileReport {
        sup_error,
        worst_t: worst.0,
        worst_v: worst.1,
        samples: samples.len(),
        t_min,
        v_lo: lo,
        v_hi: hi,
    })
}

/// A single judged quantity with the band it was judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
    /// Informational checks do not enter the overall verdict.
    pub informational: bool,
}

impl Check {
    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, lo, hi, pass: value >= lo && value <= hi, informational: false }
    }

    pub fn info(name: &str, value: f64) -> Self {
        Self { name: name.into(), value, lo: f64::NEG_INFINITY, hi: f64::INFINITY, pass: true, informational: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub spec_hash: String,
    pub power: u32,
    /// "c0", "dX" or "none" for linear runs.
    pub coefficient_name: String,
    pub coefficient: f64,
    pub coefficient_err: f64,
    pub fits: Vec<TailFit>,
    pub pinned: Vec<PinnedFit>,
    pub verdicts: Vec<PriceVerdict>,
    pub profile: Option<ProfileReport>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl AsymptoticReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().filter(|c| !c.informational).all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run {}", self.spec_hash);
        let _ = writeln!(s, "power {}", self.power);
        let _ = writeln!(s, "{} = {} +- {}", self.coefficient_name, fmt(self.coefficient), fmt(self.coefficient_err));
        for (f, p) in self.fits.iter().zip(&self.pinned) {
            let _ = writeln!(
                s,
                "probe r={} window [{}, {}]: exponent {:.4} +- {:.4}, amplitude {} +- {}, pinned {} +- {}{}{}",
                f.probe,
                fmt(f.t_a),
                fmt(f.t_b),
                f.exponent,
                f.exponent_err,
                fmt(f.amplitude),
                fmt(f.amplitude_err),
                fmt(p.amplitude),
                fmt(p.amplitude_err),
                if f.shifted { " (window shifted)" } else { "" },
                if f.non_power_law { " (not a power law)" } else { "" },
            );
        }
        for (f, v) in self.fits.iter().zip(&self.verdicts) {
            let _ = writeln!(
                s,
                "verdict r={}: exponent {:.4} vs {} (tol {}), ratio free {:.4} pinned {:.4} signed {:.4} in [{}, {}], sign {}, {}{}",
                f.probe,
                v.exponent,
                v.expected_exponent,
                v.tol_exponent,
                v.ratio_free,
                v.ratio_pinned,
                v.ratio_signed,
                v.ratio_min,
                v.ratio_max,
                if v.sign_ok { "agrees" } else { "disagrees" },
                if v.pass { "pass" } else { "fail" },
                if v.indeterminate { " (indeterminate)" } else { "" },
            );
        }
        if let Some(p) = &self.profile {
            let _ = writeln!(
                s,
                "profile: sup error {:.4e} at t={:.1} v={:.3} over {} samples",
                p.sup_error, p.worst_t, p.worst_v, p.samples
            );
        }
        for c in &self.checks {
            let tag = if c.informational {
                "info"
            } else if c.pass {
                "pass"
            } else {
                "FAIL"
            };
            let _ = writeln!(s, "check {}: {} in [{}, {}] {tag}", c.name, fmt(c.value), fmt(c.lo), fmt(c.hi));
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(s, "overall {}", if self.pass() { "pass" } else { "fail" });
        s
    }

    /// One row per check: name, value, lo, hi, pass, informational.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        write_rows(&self.checks, w)
    }
}

/// Serializes rows with a header line; floats use the shortest round-trip form.
pub fn write_rows<T: Serialize>(rows: &[T], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<T: serde::de::DeserializeOwned>(r: impl std::io::Read) -> Result<Vec<T>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(Error::from)).collect()
}
