//! Time evolution of □_g φ = a φ^p on the compactified hyperboloidal grid.
//!
//! The evolved unknown is Φ = rφ (called `psi` in code) together with
//! Π = ∂_{t_*}Φ. In spherical runs the single mode holds field values; in
//! banded linear runs each mode holds the real-harmonic coefficient.

pub mod data;
pub mod io;
pub mod oracle;
pub mod rhs;

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::angular::{mode_index, AngularField, SphereGrid};
use crate::error::{Error, Result};
use crate::geometry::MetricModel;

pub use data::{InitialData, ModeShape, Shape};
pub use oracle::{flat_exact_oracle, FlatOracle};
pub use rhs::{SemiDiscreteRhs, SourceFn, Workspace};

/// Coefficient a(t_*, r, ω) of the nonlinearity. `r` may be +∞ (scri).
#[derive(Clone)]
pub struct NonlinearCoefficient {
    f: Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>,
    pub time_independent: bool,
    pub angular_constant: bool,
    pub description: String,
}

impl std::fmt::Debug for NonlinearCoefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "NonlinearCoefficient({})", self.description)
    }
}

impl NonlinearCoefficient {
    pub fn constant(a: f64) -> Self {
        NonlinearCoefficient {
            f: Arc::new(move |_, _, _, _| a),
            time_independent: true,
            angular_constant: true,
            description: format!("{a}"),
        }
    }

    pub fn new(
        description: impl Into<String>,
        time_independent: bool,
        angular_constant: bool,
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        NonlinearCoefficient { f: Arc::new(f), time_independent, angular_constant, description: description.into() }
    }

    pub fn eval(&self, t: f64, r: f64, theta: f64, phi: f64) -> f64 {
        (self.f)(t, r, theta, phi)
    }

    /// a₀(t_*, ω): the value at scri.
    pub fn a0(&self, t: f64, grid: &Arc<SphereGrid>) -> AngularField {
        AngularField::from_fn(grid, |th, ph| self.eval(t, f64::INFINITY, th, ph))
    }

    /// Estimates of C_k = sup |∂_t^k a| ⟨t⟩^k, k = 0, 1, 2, on sample radii and
    /// log-spaced times. Fails when the weighted derivatives keep growing.
    pub fn check_symbol_bounds(&self) -> Result<[f64; 3]> {
        let radii = [0.0, 1.0, 10.0, 1e3, f64::INFINITY];
        let mut early = [0.0f64; 3];
        let mut late = [0.0f64; 3];
        for j in 0..60 {
            let t = 10f64.powf(-1.0 + 6.0 * j as f64 / 59.0);
            let h = 1e-3 * (1.0 + t);
            for &r in &radii {
                let f = |t: f64| self.eval(t, r, 0.7, 0.3);
                let (fm, f0, fp) = (f(t - h), f(t), f(t + h));
                let jt = (1.0 + t * t).sqrt();
                let d = [f0.abs(), ((fp - fm) / (2.0 * h)).abs() * jt, ((fp - 2.0 * f0 + fm) / (h * h)).abs() * jt * jt];
                let slot = if t < 1e3 { &mut early } else { &mut late };
                for k in 0..3 {
                    if !d[k].is_finite() {
                        return Err(Error::Precondition(format!("coefficient derivative {k} not finite at t = {t}")));
                    }
                    slot[k] = slot[k].max(d[k]);
                }
            }
        }
        for k in 0..3 {
            if late[k] > 10.0 * early[k] + 1e-9 {
                return Err(Error::Precondition(format!(
                    "coefficient violates the symbol bound at order {k}: {:.3e} late vs {:.3e} early",
                    late[k], early[k]
                )));
            }
        }
        Ok([early[0].max(late[0]), early[1].max(late[1]), early[2].max(late[2])])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lmax")]
pub enum Symmetry {
    Spherical,
    Banded(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Discretization {
    /// Number of s-intervals; the grid has n + 1 points.
    pub n: usize,
    /// Courant number: dt = cfl · Δs / max(1, v_max).
    pub cfl: f64,
    /// Kreiss–Oliger strength.
    pub dissipation: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization { n: 400, cfl: 0.5, dissipation: 0.02 }
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub metric: MetricModel,
    pub power: u32,
    pub nonlin_coeff: Option<NonlinearCoefficient>,
    pub data: InitialData,
    pub symmetry: Symmetry,
    pub discretization: Discretization,
    /// Manufactured forcing added to the Π equation (tests only).
    pub source: Option<SourceFn>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.describe())
    }
}

impl ProblemSpec {
    pub fn angular(&self) -> &Arc<SphereGrid> {
        &self.data.c1.grid
    }

    pub fn is_linear(&self) -> bool {
        self.nonlin_coeff.is_none()
    }

    pub fn modes(&self) -> Vec<(usize, i64)> {
        match self.symmetry {
            Symmetry::Spherical => vec![(0, 0)],
            Symmetry::Banded(lmax) => {
                let mut v = Vec::new();
                for l in 0..=lmax {
                    for m in -(l as i64)..=(l as i64) {
                        v.push((l, m));
                    }
                }
                v
            }
        }
    }

    /// Human-readable, stable description used for hashing.
    pub fn describe(&self) -> String {
        format!(
            "metric={} mass={} core={} height=[{}] p={} a={} symmetry={:?} n={} cfl={} ko={} c1={:?} c2={:?} d1={:?} residual={:?}",
            self.metric.kind,
            self.metric.mass,
            self.metric.core_radius,
            self.metric.height.describe(),
            self.power,
            self.nonlin_coeff.as_ref().map(|a| a.description.clone()).unwrap_or_else(|| "0".into()),
            self.symmetry,
            self.discretization.n,
            self.discretization.cfl,
            self.discretization.dissipation,
            self.data.c1.coeffs(),
            self.data.c2.coeffs(),
            self.data.d1.coeffs(),
            self.data.residual,
        )
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.describe().as_bytes()))
    }
}

/// Validate the problem and build its semi-discrete right-hand side.
pub fn derive_system(spec: &ProblemSpec) -> Result<SemiDiscreteRhs> {
    if spec.power < 2 {
        return Err(Error::InvalidParameter(format!("power must be >= 2, got {}", spec.power)));
    }
    if let Symmetry::Banded(lmax) = spec.symmetry {
        if spec.nonlin_coeff.is_some() {
            return Err(Error::Unsupported("nonlinear runs need spherical symmetry".into()));
        }
        if lmax > spec.angular().lmax {
            return Err(Error::InvalidParameter(format!(
                "banded lmax {lmax} exceeds the angular grid lmax {}",
                spec.angular().lmax
            )));
        }
    }
    if spec.symmetry == Symmetry::Spherical {
        for f in [&spec.data.c1, &spec.data.c2, &spec.data.d1] {
            if !f.is_constant(1e-12) {
                return Err(Error::Precondition("spherical runs need constant angular data".into()));
            }
        }
        if let Some(a) = &spec.nonlin_coeff {
            if !a.angular_constant {
                return Err(Error::Precondition("spherical runs need an ω-independent coefficient".into()));
            }
        }
    }
    if spec.discretization.cfl <= 0.0 {
        return Err(Error::InvalidParameter("cfl must be positive".into()));
    }
    SemiDiscreteRhs::new(
        &spec.metric,
        spec.discretization.n,
        spec.power,
        spec.modes(),
        spec.discretization.dissipation,
        spec.nonlin_coeff.clone(),
        spec.source.clone(),
    )
}

/// One slice of the evolution: Φ = rφ and Π = ∂_{t_*}Φ per mode on the s-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub t_star: f64,
    pub psi: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
}

impl EvolutionState {
    pub fn initial(spec: &ProblemSpec, rhs: &SemiDiscreteRhs) -> Result<Self> {
        let modes = spec.modes();
        let mut psi = vec![vec![0.0; rhs.n + 1]; modes.len()];
        let mut pi = vec![vec![0.0; rhs.n + 1]; modes.len()];
        for (mi, &(l, m)) in modes.iter().enumerate() {
            for i in 1..=rhs.n {
                let r = rhs.r[i];
                let (a, _, b) = if spec.symmetry == Symmetry::Spherical {
                    spec.data.eval_spherical(&spec.metric, r)?
                } else {
                    spec.data.eval_mode(&spec.metric, r, l, m)
                };
                psi[mi][i] = a;
                pi[mi][i] = b;
            }
        }
        Ok(EvolutionState { t_star: 0.0, psi, pi })
    }

    pub fn zeros(n_modes: usize, n: usize) -> Self {
        EvolutionState { t_star: 0.0, psi: vec![vec![0.0; n + 1]; n_modes], pi: vec![vec![0.0; n + 1]; n_modes] }
    }

    pub fn is_finite(&self) -> bool {
        self.psi.iter().chain(&self.pi).all(|v| v.iter().all(|x| x.is_finite() && x.abs() < 1e150))
    }
}

/// Classical RK4 with reusable buffers.
pub struct Stepper {
    ws: Workspace,
    k: [(Vec<Vec<f64>>, Vec<Vec<f64>>); 4],
    tmp: (Vec<Vec<f64>>, Vec<Vec<f64>>),
}

impl Stepper {
    pub fn new(rhs: &SemiDiscreteRhs) -> Self {
        let z = || (vec![vec![0.0; rhs.n + 1]; rhs.modes.len()], vec![vec![0.0; rhs.n + 1]; rhs.modes.len()]);
        Stepper { ws: rhs.workspace(), k: [z(), z(), z(), z()], tmp: z() }
    }

    pub fn step(&mut self, state: &mut EvolutionState, rhs: &SemiDiscreteRhs, dt: f64) {
        let t = state.t_star;
        let stage_t = [t, t + 0.5 * dt, t + 0.5 * dt, t + dt];
        let stage_c = [0.0, 0.5 * dt, 0.5 * dt, dt];
        for st in 0..4 {
            if st == 0 {
                let (kp, kq) = &mut self.k[0];
                rhs.eval(stage_t[0], &state.psi, &state.pi, kp, kq, &mut self.ws);
            } else {
                let c = stage_c[st];
                {
                    let (prev_p, prev_q) = &self.k[st - 1];
                    let (tp, tq) = &mut self.tmp;
                    for m in 0..state.psi.len() {
                        axpy(&mut tp[m], &state.psi[m], c, &prev_p[m]);
                        axpy(&mut tq[m], &state.pi[m], c, &prev_q[m]);
                    }
                }
                let (tp, tq) = &self.tmp;
                let (kp, kq) = &mut self.k[st];
                rhs.eval(stage_t[st], tp, tq, kp, kq, &mut self.ws);
            }
        }
        let w = dt / 6.0;
        for m in 0..state.psi.len() {
            combine(&mut state.psi[m], w, &self.k[0].0[m], &self.k[1].0[m], &self.k[2].0[m], &self.k[3].0[m]);
            combine(&mut state.pi[m], w, &self.k[0].1[m], &self.k[1].1[m], &self.k[2].1[m], &self.k[3].1[m]);
        }
        state.t_star = t + dt;
    }
}

fn axpy(out: &mut [f64], y: &[f64], c: f64, k: &[f64]) {
    for ((o, y), k) in out.iter_mut().zip(y).zip(k) {
        *o = y + c * k;
    }
}

fn combine(y: &mut [f64], w: f64, k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]) {
    for ((((y, a), b), c), d) in y.iter_mut().zip(k1).zip(k2).zip(k3).zip(k4) {
        *y += w * (a + 2.0 * b + 2.0 * c + d);
    }
}

/// Single RK4 step. Detects non-finite output.
pub fn step(state: &EvolutionState, rhs: &SemiDiscreteRhs, dt: f64) -> Result<EvolutionState> {
    let mut s = state.clone();
    Stepper::new(rhs).step(&mut s, rhs, dt);
    if !s.is_finite() {
        return Err(Error::Blowup { t_star: s.t_star });
    }
    Ok(s)
}

/// Output times: uniform spacing `dense_dt` up to `dense_until`, then
/// geometric growth by `ratio`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Cadence {
    pub dense_dt: f64,
    pub dense_until: f64,
    pub ratio: f64,
}

impl Cadence {
    /// Sorted unique step indices (always including 0 and the last step).
    pub fn steps(&self, dt: f64, n_steps: usize) -> Vec<usize> {
        let mut out = vec![0usize];
        let mut t = 0.0;
        let t_final = dt * n_steps as f64;
        loop {
            t = if t < self.dense_until { t + self.dense_dt } else { t * self.ratio };
            if t >= t_final {
                break;
            }
            let k = (t / dt).round() as usize;
            if k > *out.last().unwrap() {
                out.push(k);
            }
        }
        if *out.last().unwrap() != n_steps {
            out.push(n_steps);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OutputPlan {
    /// Scri trace, probes and monitors.
    pub trace: Cadence,
    /// Full-grid snapshots (needed for the forcing assembly).
    pub snapshots: Option<Cadence>,
    pub probes: Vec<f64>,
    /// Number of grid points next to scri recorded with the trace.
    pub near_scri: usize,
}

impl Default for OutputPlan {
    fn default() -> Self {
        OutputPlan {
            trace: Cadence { dense_dt: 0.0025, dense_until: 40.0, ratio: 1.002 },
            snapshots: Some(Cadence { dense_dt: 0.05, dense_until: 20.0, ratio: 1.01 }),
            probes: vec![1.0, 5.0, 20.0],
            near_scri: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub r: f64,
    /// [time][mode] φ values (or coefficients).
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Blowup { t_star: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub dt: f64,
    pub power: u32,
    pub monitor_power: f64,
    pub modes: Vec<(usize, i64)>,
    pub spherical: bool,
    pub angular: Arc<SphereGrid>,
    pub spec_hash: String,
    pub times: Vec<f64>,
    /// [time][mode] Φ at s = 1.
    pub scri: Vec<Vec<f64>>,
    /// [time][mode][k] Φ at s = 1 − kΔs, k = 0..near_scri.
    pub near_scri: Vec<Vec<Vec<f64>>>,
    pub probes: Vec<ProbeSeries>,
    pub energy: Vec<f64>,
    pub bound: Vec<f64>,
    pub snapshots: Vec<EvolutionState>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn s_grid(&self) -> Vec<f64> {
        (0..=self.n).map(|i| i as f64 / self.n as f64).collect()
    }

    pub fn ds(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Mode values to a nodal field on the sphere.
    pub fn to_nodal(&self, mode_values: &[f64]) -> AngularField {
        if self.spherical {
            return AngularField::constant(&self.angular, mode_values[0]);
        }
        let mut c = vec![0.0; self.angular.n_modes()];
        for (v, &(l, m)) in mode_values.iter().zip(&self.modes) {
            c[mode_index(l, m)] = *v;
        }
        AngularField::from_coeffs(&self.angular, &c)
    }

    pub fn scri_nodal(&self, k: usize) -> AngularField {
        self.to_nodal(&self.scri[k])
    }

    pub fn probe(&self, r: f64) -> Option<&ProbeSeries> {
        self.probes.iter().find(|p| (p.r - r).abs() < 1e-12 * (1.0 + r))
    }

    /// φ at a probe as a spherically averaged series (mode 0 value for spherical runs).
    pub fn probe_series(&self, r: f64) -> Option<Vec<f64>> {
        let p = self.probe(r)?;
        Some(p.phi.iter().map(|v| self.to_nodal(v).average()).collect())
    }

    pub fn probe_derivative_series(&self, r: f64) -> Option<Vec<f64>> {
        let p = self.probe(r)?;
        Some(p.dphi.iter().map(|v| self.to_nodal(v).average()).collect())
    }
}

/// Evolution stopped early; the trajectory up to the failure is retained.
#[derive(Debug)]
pub struct EvolutionFailure {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

impl std::fmt::Display for EvolutionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (partial trajectory to t_* = {:.3})", self.error, self.partial.times.last().copied().unwrap_or(0.0))
    }
}

impl std::error::Error for EvolutionFailure {}

/// Time step used by [`evolve`]: dt = cfl·Δs/max(1, v_max).
pub fn time_step(spec: &ProblemSpec, rhs: &SemiDiscreteRhs) -> f64 {
    spec.discretization.cfl * rhs.ds / rhs.max_speed().max(1.0)
}

fn lagrange_interpolate(s: &[f64], u: &[f64], x: f64, order: usize) -> f64 {
    let n = s.len() - 1;
    let ds = s[1] - s[0];
    let c = (x / ds).floor() as isize - (order as isize / 2 - 1);
    let start = c.clamp(0, (n + 1 - order) as isize) as usize;
    let mut v = 0.0;
    for j in start..start + order {
        let mut w = 1.0;
        for m in start..start + order {
            if m != j {
                w *= (x - s[m]) / (s[j] - s[m]);
            }
        }
        v += w * u[j];
    }
    v
}

struct Recorder<'a> {
    rhs: &'a SemiDiscreteRhs,
    spec: &'a ProblemSpec,
    traj: Trajectory,
    near: usize,
    probe_s: Vec<f64>,
}

impl<'a> Recorder<'a> {
    fn record(&mut self, st: &EvolutionState) {
        let n = self.rhs.n;
        self.traj.times.push(st.t_star);
        self.traj.scri.push(st.psi.iter().map(|u| u[n]).collect());
        self.traj.near_scri.push(st.psi.iter().map(|u| (0..=self.near).map(|k| u[n - k]).collect()).collect());
        for (p, &sp) in self.traj.probes.iter_mut().zip(&self.probe_s) {
            let r = p.r;
            p.phi.push(st.psi.iter().map(|u| lagrange_interpolate(&self.rhs.s, u, sp, 6) / r).collect());
            p.dphi.push(st.pi.iter().map(|u| lagrange_interpolate(&self.rhs.s, u, sp, 6) / r).collect());
        }
        self.traj.energy.push(energy(&self.spec.metric, self.rhs, st));
        self.traj.bound.push(bound_ratio(self.rhs, st, self.traj.monitor_power));
    }
}

/// Hyperboloidal energy Σ_modes ∫ ½(WΠ² + Gψ_r² + (G′/r + ℓ(ℓ+1)/r²)ψ²) dr,
/// evaluated in s with the r → ∞ limits taken in closed form.
pub fn energy(metric: &MetricModel, rhs: &SemiDiscreteRhs, st: &EvolutionState) -> f64 {
    let n = rhs.n;
    let ds = rhs.ds;
    let weights: Vec<(f64, f64, f64, f64)> = (0..=n)
        .map(|i| {
            let s = rhs.s[i];
            if i == 0 {
                // r = 0: W = 1, dr/ds = 2, G = 1, G′/r → G″(0)
                return (2.0, 0.5, 0.0, 0.0);
            }
            if i == n {
                let ws = -metric.g00_over_rho2(0.0);
                return (ws / 2.0, 0.0, 0.0, 0.5);
            }
            let r = rhs.r[i];
            let sr = 0.5 * (1.0 - s) * (1.0 - s);
            let w = -metric.g00(r);
            let g = metric.grr(r);
            let rho = 1.0 / r;
            let dg_term = metric.dgrr_over_rho2(rho) * (1.0 - s) / (4.0 * s * s * s);
            (w / sr, g * sr, dg_term, 1.0 / (2.0 * s * s))
        })
        .collect();
    let mut total = 0.0;
    for (mi, &(l, _)) in rhs.modes.iter().enumerate() {
        let u = &st.psi[mi];
        let v = &st.pi[mi];
        let ll = (l * (l + 1)) as f64;
        let dens: Vec<f64> = (0..=n)
            .map(|i| {
                let du = if i >= 2 && i + 2 <= n {
                    (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) / (12.0 * ds)
                } else if i < 2 {
                    (-25.0 * u[i] + 48.0 * u[i + 1] - 36.0 * u[i + 2] + 16.0 * u[i + 3] - 3.0 * u[i + 4]) / (12.0 * ds)
                } else {
                    (25.0 * u[i] - 48.0 * u[i - 1] + 36.0 * u[i - 2] - 16.0 * u[i - 3] + 3.0 * u[i - 4]) / (12.0 * ds)
                };
                let (wv, gu, pot, ang) = weights[i];
                let ang = if i == 0 { 0.0 } else { ll * ang };
                0.5 * (wv * v[i] * v[i] + gu * du * du + (pot + ang) * u[i] * u[i])
            })
            .collect();
        total += crate::quadrature::trapezoid(&rhs.s, &dens);
    }
    total
}

/// sup_x |φ| ⟨t + 2r⟩ ⟨t⟩^q over the grid (mode magnitudes summed).
pub fn bound_ratio(rhs: &SemiDiscreteRhs, st: &EvolutionState, q: f64) -> f64 {
    let t = st.t_star;
    let jt = (1.0 + t * t).sqrt().powf(q);
    let mut best: f64 = 0.0;
    for i in 1..=rhs.n {
        let mag: f64 = st.psi.iter().map(|u| u[i].abs()).sum();
        let r = rhs.r[i];
        let w = if r.is_finite() {
            let x = t + 2.0 * r;
            (1.0 + x * x).sqrt() / r
        } else {
            2.0
        };
        best = best.max(mag * w);
    }
    best * jt
}

/// Evolve to `t_final`, recording per `plan`.
pub fn evolve(spec: &ProblemSpec, t_final: f64, plan: &OutputPlan) -> std::result::Result<Trajectory, EvolutionFailure> {
    let empty = |e: Error| EvolutionFailure {
        error: e,
        partial: Box::new(Trajectory {
            n: spec.discretization.n,
            dt: 0.0,
            power: spec.power,
            monitor_power: 0.0,
            modes: spec.modes(),
            spherical: spec.symmetry == Symmetry::Spherical,
            angular: spec.angular().clone(),
            spec_hash: spec.hash(),
            times: vec![],
            scri: vec![],
            near_scri: vec![],
            probes: vec![],
            energy: vec![],
            bound: vec![],
            snapshots: vec![],
            status: RunStatus::Completed,
        }),
    };
    if !(t_final > 0.0) {
        return Err(empty(Error::InvalidParameter(format!("t_final must be > 0, got {t_final}"))));
    }
    let rhs = derive_system(spec).map_err(empty)?;
    let mut state = EvolutionState::initial(spec, &rhs).map_err(empty)?;
    let dt0 = time_step(spec, &rhs);
    let n_steps = (t_final / dt0).ceil() as usize;
    let dt = t_final / n_steps as f64;
    let trace_steps = plan.trace.steps(dt, n_steps);
    let snap_steps = plan.snapshots.map(|c| c.steps(dt, n_steps)).unwrap_or_default();
    let near = plan.near_scri.min(rhs.n - 1);
    let q = if spec.is_linear() { 0.0 } else { (spec.power as f64 - 2.0).min(2.0) };
    let traj = Trajectory {
        n: rhs.n,
        dt,
        power: spec.power,
        monitor_power: q,
        modes: rhs.modes.clone(),
        spherical: spec.symmetry == Symmetry::Spherical,
        angular: spec.angular().clone(),
        spec_hash: spec.hash(),
        times: Vec::with_capacity(trace_steps.len()),
        scri: Vec::with_capacity(trace_steps.len()),
        near_scri: Vec::with_capacity(trace_steps.len()),
        probes: plan.probes.iter().map(|&r| ProbeSeries { r, phi: vec![], dphi: vec![] }).collect(),
        energy: vec![],
        bound: vec![],
        snapshots: vec![],
        status: RunStatus::Completed,
    };
    let probe_s = plan.probes.iter().map(|&r| r / (r + 2.0)).collect();
    let mut rec = Recorder { rhs: &rhs, spec, traj, near, probe_s };
    let mut stepper = Stepper::new(&rhs);
    let (mut ti, mut si) = (0usize, 0usize);
    for k in 0..=n_steps {
        if k > 0 {
            stepper.step(&mut state, &rhs, dt);
            state.t_star = k as f64 * dt;
            if !state.is_finite() {
                rec.traj.status = RunStatus::Blowup { t_star: state.t_star };
                return Err(EvolutionFailure {
                    error: Error::Blowup { t_star: state.t_star },
                    partial: Box::new(rec.traj),
                });
            }
        }
        if ti < trace_steps.len() && trace_steps[ti] == k {
            rec.record(&state);
            ti += 1;
        }
        if si < snap_steps.len() && snap_steps[si] == k {
            rec.traj.snapshots.push(state.clone());
            si += 1;
        }
    }
    Ok(rec.traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_metric, Height, MetricKind};

    fn flat2() -> MetricModel {
        build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(2.0)).unwrap()
    }

    fn spec(n: usize, shape: Shape, a: Option<f64>) -> ProblemSpec {
        let g = SphereGrid::new(0);
        ProblemSpec {
            metric: flat2(),
            power: 3,
            nonlin_coeff: a.map(NonlinearCoefficient::constant),
            data: InitialData::spherical(&g, shape),
            symmetry: Symmetry::Spherical,
            discretization: Discretization { n, cfl: 0.5, dissipation: 0.02 },
            source: None,
        }
    }

    #[test]
    fn cadence_steps_are_sorted_and_bounded() {
        let c = Cadence { dense_dt: 0.1, dense_until: 1.0, ratio: 1.5 };
        let s = c.steps(0.01, 1000);
        assert_eq!(s[0], 0);
        assert_eq!(*s.last().unwrap(), 1000);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn zero_state_stays_zero() {
        let sp = spec(64, Shape::Bump { amplitude: 0.0, center: 1.0, width: 0.5 }, Some(1.0));
        let rhs = derive_system(&sp).unwrap();
        let z = EvolutionState::zeros(1, 64);
        let s1 = step(&z, &rhs, 0.01).unwrap();
        assert!(s1.psi[0].iter().chain(&s1.pi[0]).all(|v| *v == 0.0));
    }

    #[test]
    fn trajectory_head_is_initial_data() {
        let shape = Shape::Bump { amplitude: 0.3, center: 1.0, width: 0.8 };
        let sp = spec(64, shape, None);
        let plan = OutputPlan { probes: vec![1.0], ..OutputPlan::default() };
        let tr = evolve(&sp, 0.1, &plan).unwrap();
        let st = &tr.snapshots[0];
        assert_eq!(st.t_star, 0.0);
        for i in 1..64 {
            let r = 2.0 * (i as f64 / 64.0) / (1.0 - i as f64 / 64.0);
            let (psi, _, pi) = shape.eval(&sp.metric, r);
            assert_eq!(st.psi[0][i], psi);
            assert_eq!(st.pi[0][i], pi);
        }
    }

    #[test]
    fn banded_nonlinear_rejected() {
        let mut sp = spec(64, Shape::Bump { amplitude: 0.1, center: 1.0, width: 0.5 }, Some(1.0));
        sp.data = InitialData::compact(&SphereGrid::new(2), vec![]);
        sp.symmetry = Symmetry::Banded(2);
        assert!(matches!(derive_system(&sp), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        // manufactured: the discrete system with source f(t) = e^{−t}(w − L_h w)
        // has the exact solution ψ = e^{−t} w.
        let n = 64;
        let base = spec(n, Shape::Bump { amplitude: 0.0, center: 1.0, width: 0.5 }, None);
        let rhs0 = derive_system(&base).unwrap();
        let w: Vec<f64> = rhs0.s.iter().map(|&s| 2.0 * s / ((1.0 - s).powi(2) + 4.0 * s * s).sqrt()).collect();
        let mut ws = rhs0.workspace();
        let mut lw_p = vec![vec![0.0; n + 1]];
        let mut lw_q = vec![vec![0.0; n + 1]];
        // L applied to (ψ, Π) = (w, −w): ψ-rate should be −w (exact), Π-rate should be w
        let negw: Vec<f64> = w.iter().map(|v| -v).collect();
        rhs0.eval(0.0, &[w.clone()], &[negw.clone()], &mut lw_p, &mut lw_q, &mut ws);
        let psi_defect: Vec<f64> = lw_p[0].iter().zip(&negw).map(|(a, b)| a - b).collect();
        let pi_defect: Vec<f64> = w.iter().zip(&lw_q[0]).map(|(a, b)| a - b).collect();
        // KO acts on ψ too; put its defect into the manufactured solution by
        // disabling dissipation for this check.
        assert!(psi_defect.iter().skip(1).all(|d| d.abs() < 1e-3));
        let mut sp = base.clone();
        sp.discretization.dissipation = 0.0;
        let rhs_nd = derive_system(&sp).unwrap();
        let mut ws2 = rhs_nd.workspace();
        rhs_nd.eval(0.0, &[w.clone()], &[negw.clone()], &mut lw_p, &mut lw_q, &mut ws2);
        let g: Vec<f64> = w.iter().zip(&lw_q[0]).map(|(a, b)| a - b).collect();
        let _ = pi_defect;
        let g = Arc::new(g);
        let gg = g.clone();
        sp.source = Some(Arc::new(move |t: f64, _m: usize, out: &mut [f64]| {
            let e = (-t).exp();
            for (o, v) in out.iter_mut().zip(gg.iter()) {
                *o += e * v;
            }
        }));
        let rhs = derive_system(&sp).unwrap();
        let err = |dt: f64| {
            let st = EvolutionState { t_star: 0.0, psi: vec![w.clone()], pi: vec![negw.clone()] };
            let s1 = step(&st, &rhs, dt).unwrap();
            let e = (-dt).exp();
            s1.psi[0].iter().zip(&w).map(|(a, b)| (a - e * b).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        assert!(e1 < 1e-13, "{e1}");
        let order = (e1 / e2).log2();
        assert!(order > 4.0 || e1 < 1e-15, "order {order} ({e1}, {e2})");
    }
}
