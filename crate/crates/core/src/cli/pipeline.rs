//! Run directories and pipeline stages. Each stage reads the files written
//! by earlier stages, writes its own, and records both in `manifest.toml`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use super::plot::{LinePlot, Series};
use crate::angular::AngularField;
use crate::coefficients::{
    assemble_forcing, c0, c_angular, c_scale, d_angular, dx, tilde_c, write_coefficients_csv, CutoffSpec,
};
use crate::error::{Error, Result};
use crate::evolution::io::{read_binary, write_binary, write_scri_csv, write_trajectory_csv};
use crate::evolution::{evolve, ProblemSpec, RunStatus, Trajectory};
use crate::geometry::OperatorDecomposition;
use crate::radiation::{
    extract_rad1, rad2_from_recursion, rad3_from_recursion, read_radiation_csv, write_radiation_csv, RadiationSeries,
};
use crate::tailfit::{
    expected_exponent, fit_pinned, fit_power_law, price_verdict, profile_check, profile_samples, read_rows, write_rows,
    AsymptoticReport, Check, PinnedFit, PriceVerdict, ProfileReport, TailFit,
};

pub const MANIFEST: &str = "manifest.toml";
pub const CONFIG: &str = "config.toml";
pub const TRAJECTORY: &str = "trajectory.bin";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const SCRI_CSV: &str = "scri.csv";
pub const RADIATION: &str = "radiation.csv";
pub const COEFFICIENTS: &str = "coefficients.csv";
pub const COEFFICIENTS_NODAL: &str = "coefficients_nodal.csv";
pub const FITS: &str = "fits.csv";
pub const PINNED: &str = "pinned.csv";
pub const VERDICTS: &str = "verdicts.csv";
pub const PROFILE: &str = "profile.csv";
pub const PROFILE_SAMPLES: &str = "profile_samples.csv";
pub const CHECKS: &str = "checks.csv";
pub const NOTES: &str = "notes.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const TAIL_SVG: &str = "tail.svg";
pub const PROFILE_SVG: &str = "profile.svg";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output root: the flag, then `TAILSLAB_OUT`, then `./runs`.
pub fn out_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os("TAILSLAB_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs")),
    }
}

/// `<stem>-<first 12 hex digits of the config hash>`.
pub fn run_name(stem: &str, text: &str) -> String {
    format!("{stem}-{}", &sha256_hex(text.as_bytes())[..12])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub stage: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config_sha256: String,
    pub spec_hash: String,
    pub metric: String,
    pub n: usize,
    pub cfl: f64,
    pub power: u32,
    pub linear: bool,
    pub data: String,
    pub config: String,
    #[serde(default)]
    pub stages: Vec<StageRecord>,
    #[serde(default)]
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    fn new(cfg: &Config, text: &str, spec: &ProblemSpec) -> Self {
        RunManifest {
            code_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(text.as_bytes()),
            spec_hash: spec.hash(),
            metric: format!("{:?} mass {}", spec.metric.kind, spec.metric.mass),
            n: cfg.grid.n,
            cfl: cfg.grid.cfl,
            power: cfg.nonlinearity.power,
            linear: cfg.is_linear(),
            data: format!(
                "{} amplitude {} center {} width {} (l, m) = ({}, {})",
                cfg.data.shape, cfg.data.amplitude, cfg.data.center, cfg.data.width, cfg.data.l, cfg.data.m
            ),
            config: text.into(),
            stages: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// An open run directory.
pub struct Run {
    pub dir: PathBuf,
    pub config: Config,
    pub manifest: RunManifest,
}

impl Run {
    /// Creates (or resets) `root/name` for the given config text.
    pub fn create(root: &Path, name: &str, text: &str) -> Result<Run> {
        let config = Config::parse(text)?;
        let spec = config.problem()?;
        let dir = root.join(name);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(CONFIG), text)?;
        let mut run = Run { dir, manifest: RunManifest::new(&config, text, &spec), config };
        run.record_file("init", CONFIG)?;
        run.save()?;
        Ok(run)
    }

    pub fn open(dir: &Path) -> Result<Run> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|_| Error::MissingArtifact(format!("{} (not a run directory)", path.display())))?;
        let manifest: RunManifest = toml::from_str(&text).map_err(|e| Error::Format(format!("{MANIFEST}: {e}")))?;
        let config = Config::parse(&manifest.config)?;
        Ok(Run { dir: dir.to_path_buf(), config, manifest })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn save(&self) -> Result<()> {
        let text = toml::to_string(&self.manifest).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(())
    }

    fn record_file(&mut self, stage: &str, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name))?;
        let rec = FileRecord { path: name.into(), stage: stage.into(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) };
        match self.manifest.files.iter_mut().find(|f| f.path == name) {
            Some(f) => *f = rec,
            None => self.manifest.files.push(rec),
        }
        Ok(())
    }

    fn write(&mut self, stage: &str, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.path(name), bytes)?;
        self.record_file(stage, name)
    }

    fn write_rows<T: Serialize>(&mut self, stage: &str, name: &str, rows: &[T]) -> Result<()> {
        let mut buf = Vec::new();
        write_rows(rows, &mut buf)?;
        self.write(stage, name, &buf)
    }

    /// Opens an upstream artifact, naming the stage that produces it when absent.
    fn require(&self, name: &str, producer: &str) -> Result<fs::File> {
        fs::File::open(self.path(name)).map_err(|_| {
            Error::MissingArtifact(format!("{name} in {}; run `{producer}` first", self.dir.display()))
        })
    }

    fn read_rows<T: serde::de::DeserializeOwned>(&self, name: &str, producer: &str) -> Result<Vec<T>> {
        read_rows(self.require(name, producer)?)
    }

    fn finish<T>(&mut self, stage: &str, result: Result<T>) -> Result<T> {
        let rec = StageRecord {
            name: stage.into(),
            ok: result.is_ok(),
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        match self.manifest.stages.iter_mut().find(|s| s.name == stage) {
            Some(s) => *s = rec,
            None => self.manifest.stages.push(rec),
        }
        self.save()?;
        result
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        read_binary(std::io::BufReader::new(self.require(TRAJECTORY, "simulate")?))
    }

    pub fn radiation_series(&self) -> Result<RadiationSeries> {
        let spec = self.config.problem()?;
        read_radiation_csv(spec.angular(), self.require(RADIATION, "radiation")?)
    }

    pub fn coefficients(&self) -> Result<Vec<CoefficientRow>> {
        self.read_rows(COEFFICIENTS, "coeffs")
    }
}

/// Evolves the configured problem. A blowup still writes the partial
/// trajectory before the error is returned.
pub fn simulate(run: &mut Run) -> Result<Trajectory> {
    let r = simulate_inner(run);
    run.finish("simulate", r)
}

fn simulate_inner(run: &mut Run) -> Result<Trajectory> {
    let spec = run.config.problem()?;
    let (traj, err) = match evolve(&spec, run.config.evolution.t_final, &run.config.output_plan()) {
        Ok(t) => (t, None),
        Err(f) => (*f.partial, Some(f.error)),
    };
    let mut bin = Vec::new();
    write_binary(&traj, &mut bin)?;
    run.write("simulate", TRAJECTORY, &bin)?;
    let mut csv = Vec::new();
    write_trajectory_csv(&traj, &mut csv)?;
    run.write("simulate", TRAJECTORY_CSV, &csv)?;
    let mut csv = Vec::new();
    write_scri_csv(&traj, &mut csv)?;
    run.write("simulate", SCRI_CSV, &csv)?;
    match err {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

fn nonlinear_a0(spec: &ProblemSpec) -> impl Fn(f64) -> AngularField + '_ {
    move |t| match &spec.nonlin_coeff {
        Some(a) => a.a0(t, spec.angular()),
        None => AngularField::zeros(spec.angular()),
    }
}

/// Radiation fields R₁, R₂ and, for p ≥ 4, R₃.
pub fn radiation(run: &mut Run) -> Result<RadiationSeries> {
    let r = radiation_inner(run);
    run.finish("radiation", r)
}

fn radiation_inner(run: &mut Run) -> Result<RadiationSeries> {
    let traj = run.trajectory()?;
    if let RunStatus::Blowup { t_star } = traj.status {
        return Err(Error::Blowup { t_star });
    }
    let spec = run.config.problem()?;
    let decomp = OperatorDecomposition::new(&spec.metric, spec.angular());
    let a = nonlinear_a0(&spec);
    let zero = |_t: f64| AngularField::zeros(spec.angular());
    let p = spec.power;
    let cubic: &dyn Fn(f64) -> AngularField = if p == 3 { &a } else { &zero };
    let r1 = extract_rad1(&traj)?;
    let mut series = rad2_from_recursion(&r1, &spec.data.c2, &spec.data.d1, &decomp.gtilde, cubic)?;
    if p >= 4 {
        series = rad3_from_recursion(&series, &decomp, &a, p)?;
        if spec.data.c2.max_abs() > 0.0 || spec.data.d1.max_abs() > 0.0 {
            series.warnings.push("rad3 recursion assumes compactly supported data; c2 or d1 is nonzero".into());
        }
    }
    let mut buf = Vec::new();
    write_radiation_csv(&series, &mut buf)?;
    run.write("radiation", RADIATION, &buf)?;
    Ok(series)
}

/// One row of `coefficients.csv`. `cutoff` is empty for cutoff-free values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub cutoff: String,
    pub value: f64,
    /// Size the value is judged against (c̄ rows); 0 otherwise.
    pub scale: f64,
    pub truncation: f64,
}

/// c₀ (p = 3) or c̄ and d_X (p ≥ 4) for each cutoff. Linear runs have no
/// coefficient and write an empty table.
pub fn coeffs(run: &mut Run, cutoffs: &[CutoffSpec]) -> Result<Vec<CoefficientRow>> {
    let r = coeffs_inner(run, cutoffs);
    run.finish("coeffs", r)
}

fn coeffs_inner(run: &mut Run, cutoffs: &[CutoffSpec]) -> Result<Vec<CoefficientRow>> {
    let cutoffs = if cutoffs.is_empty() { run.config.cutoffs()? } else { cutoffs.to_vec() };
    if cutoffs.is_empty() {
        return Err(Error::InvalidParameter("at least one cutoff window is needed".into()));
    }
    let series = run.radiation_series()?;
    let spec = run.config.problem()?;
    let decomp = OperatorDecomposition::new(&spec.metric, spec.angular());
    let tol = run.config.cutoff.tolerance;
    let a = nonlinear_a0(&spec);
    let p = spec.power;
    let mut rows = Vec::new();
    let row = |name: &str, cut: Option<&CutoffSpec>, value: f64, scale: f64, truncation: f64| CoefficientRow {
        name: name.into(),
        cutoff: cut.map_or(String::new(), |c| c.to_string()),
        value,
        scale,
        truncation,
    };
    let mut nodal = Vec::new();
    if spec.is_linear() {
        // nothing to compute
    } else if p == 3 {
        let r = c0(&series, &a, &spec.data.c2, &spec.data.d1, &decomp.gtilde, &cutoffs, tol)?;
        rows.push(row("c0", None, r.value, 0.0, r.truncation));
        for (c, v) in &r.alternates {
            rows.push(row("c0_cutoff", Some(c), *v, 0.0, 0.0));
        }
        let c = c_angular(&series, &decomp.gtilde, &cutoffs[0], Some(&a))?;
        write_coefficients_csv(&c, None, None, &mut nodal)?;
    } else {
        let traj = run.trajectory()?;
        for (i, cut) in cutoffs.iter().enumerate() {
            let c = c_angular(&series, &decomp.gtilde, cut, None)?;
            let scale = c_scale(&series, &decomp.gtilde, cut)?;
            let d = d_angular(&series, &decomp, &a, p, cut)?;
            let forcing = assemble_forcing(&traj, &spec, cut, tol)?;
            // the mean of c is judged by the fit stage, not here
            let ct = tilde_c(&c, f64::INFINITY)?;
            let value = dx(&forcing, &ct, &d, &spec.metric, &decomp)?;
            rows.push(row("c_bar", Some(cut), c.average(), scale, 0.0));
            rows.push(row("dX", Some(cut), value, 0.0, forcing.truncation));
            if i == 0 {
                write_coefficients_csv(&c, Some(&d), Some(&ct), &mut nodal)?;
            }
        }
    }
    run.write_rows("coeffs", COEFFICIENTS, &rows)?;
    if !nodal.is_empty() {
        run.write("coeffs", COEFFICIENTS_NODAL, &nodal)?;
    }
    Ok(rows)
}

/// The coefficient the tail is compared with: (name, value, error).
pub fn primary_coefficient(rows: &[CoefficientRow], power: u32, linear: bool) -> Result<(String, f64, f64)> {
    if linear {
        return Ok(("none".into(), 0.0, 0.0));
    }
    let missing = |n: &str| Error::MissingArtifact(format!("{n} row in {COEFFICIENTS}"));
    if power == 3 {
        let c = rows.iter().find(|r| r.name == "c0").ok_or_else(|| missing("c0"))?;
        let spread = rows.iter().filter(|r| r.name == "c0_cutoff").map(|r| (r.value - c.value).abs()).fold(0.0, f64::max);
        Ok(("c0".into(), c.value, c.truncation + spread))
    } else {
        let d: Vec<f64> = rows.iter().filter(|r| r.name == "dX").map(|r| r.value).collect();
        let first = *d.first().ok_or_else(|| missing("dX"))?;
        Ok(("dX".into(), first, d.iter().map(|v| (v - first).abs()).fold(0.0, f64::max)))
    }
}

fn relative_spread(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let m = lo.abs().max(hi.abs());
    Some(if m == 0.0 { 0.0 } else { (hi - lo) / m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NoteRow {
    note: String,
}

/// (t_*, v, t_*²φ/(2c₀), v/(v + 2)) at the last snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub t_star: f64,
    pub v: f64,
    pub scaled: f64,
    pub model: f64,
}

/// One row of `trajectory.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub t_star: f64,
    pub probe_id: usize,
    pub r: f64,
    pub phi: f64,
    pub dphi_dt: f64,
}

fn probe_tag(r: f64) -> String {
    format!("r{r}")
}

/// Tail fits, verdicts and the run's checks; ends by writing the report.
pub fn fit(run: &mut Run) -> Result<AsymptoticReport> {
    let r = fit_inner(run);
    run.finish("fit", r)?;
    report(run)
}

fn fit_inner(run: &mut Run) -> Result<()> {
    let traj = run.trajectory()?;
    let rows = run.coefficients()?;
    let cfg = run.config.clone();
    let p = cfg.nonlinearity.power;
    let linear = cfg.is_linear();
    let (_, coef, _) = primary_coefficient(&rows, p, linear)?;
    let tol = cfg.tolerances();
    let window = cfg.fit_window();
    let expected = expected_exponent(p);
    let t_final = traj.times.last().copied().unwrap_or(0.0);
    let (mut fits, mut pinned, mut verdicts, mut checks, mut notes) = (vec![], vec![], vec![], vec![], vec![]);
    let mut profile: Vec<ProfileReport> = Vec::new();
    let mut samples: Vec<ProfileSample> = Vec::new();

    if linear {
        let late = traj
            .probes
            .iter()
            .flat_map(|pr| {
                traj.times.iter().zip(&pr.phi).filter(|(t, _)| **t >= 0.5 * t_final).map(|(_, m)| traj.to_nodal(m).max_abs())
            })
            .fold(0.0, f64::max);
        let mut c = Check::within("no_tail", late, 0.0, cfg.fit.noise_floor);
        c.informational = true;
        checks.push(c);
        notes.push(format!("linear run: largest |phi| at probes over the second half is {late:.3e}"));
    } else {
        for pr in &traj.probes {
            let tag = probe_tag(pr.r);
            let phi = traj.probe_series(pr.r).unwrap_or_default();
            match fit_power_law(&traj.times, &phi, window, pr.r) {
                Ok(f) => {
                    let pin = fit_pinned(&traj.times, &phi, (f.t_a, f.t_b), expected)?;
                    let v = price_verdict(&f, Some(&pin), coef, p, &tol);
                    checks.push(Check::within(
                        &format!("exponent_{tag}"),
                        f.exponent,
                        expected - tol.exponent,
                        expected + tol.exponent,
                    ));
                    checks.push(Check::within(&format!("ratio_{tag}"), v.ratio_signed, tol.ratio_min, tol.ratio_max));
                    if f.non_power_law {
                        notes.push(format!("{tag}: exponent drifts by {:.3} across the window", f.drift));
                    }
                    if f.shifted {
                        notes.push(format!("{tag}: window start moved to t = {} past a zero crossing", f.t_a));
                    }
                    if v.indeterminate {
                        notes.push(format!("{tag}: predicted coefficient is zero; the amplitude check is indeterminate"));
                    }
                    fits.push(f);
                    pinned.push(pin);
                    verdicts.push(v);
                }
                Err(e) => {
                    notes.push(format!("{tag}: {e}"));
                    checks.push(Check::within(&format!("fit_{tag}"), f64::NAN, 0.0, 0.0));
                }
            }
        }
        if p == 3 {
            let alts: Vec<f64> = rows.iter().filter(|r| r.name == "c0_cutoff").map(|r| r.value).collect();
            if let Some(s) = relative_spread(&alts) {
                checks.push(Check::within("c0_cutoff_spread", s, 0.0, cfg.fit.cutoff_agreement));
            }
            let tc = cfg.fit.rad1_check_time;
            if tc <= t_final {
                let series = run.radiation_series()?;
                let k = series.times.partition_point(|t| *t < tc).clamp(1, series.len() - 1);
                let (t0, t1) = (series.times[k - 1], series.times[k]);
                let w = (tc - t0) / (t1 - t0);
                let r1 = (1.0 - w) * series.rad1[k - 1].average() + w * series.rad1[k].average();
                let rt = cfg.fit.rad1_tolerance;
                checks.push(Check::within("rad1_limit", tc * r1 / coef, 1.0 - rt, 1.0 + rt));
            } else {
                notes.push(format!("rad1 check time {tc} lies beyond the end of the run"));
            }
            let v_range = (cfg.fit.profile_v_min, cfg.fit.profile_v_max);
            match profile_check(&traj, coef, cfg.fit.profile_t_min, v_range) {
                Ok(rep) => {
                    checks.push(Check::within("profile_sup", rep.sup_error, 0.0, cfg.fit.profile_tolerance));
                    profile.push(rep);
                    let all = profile_samples(&traj, cfg.fit.profile_t_min, v_range);
                    let last = traj.snapshots.last().map(|s| s.t_star).unwrap_or(f64::NAN);
                    samples = all
                        .iter()
                        .filter(|s| s.0 == last)
                        .map(|&(t, v, phi)| ProfileSample {
                            t_star: t,
                            v,
                            scaled: phi * t * t / (2.0 * coef),
                            model: v / (v + 2.0),
                        })
                        .collect();
                    samples.sort_by(|a, b| a.v.total_cmp(&b.v));
                }
                Err(e) => {
                    notes.push(format!("profile: {e}"));
                    checks.push(Check::within("profile_sup", f64::NAN, 0.0, cfg.fit.profile_tolerance));
                }
            }
        } else {
            if let Some(r) = rows.iter().find(|r| r.name == "c_bar") {
                let rel = if r.scale > 0.0 { r.value.abs() / r.scale } else { r.value.abs() };
                checks.push(Check::within("c_bar", rel, 0.0, cfg.fit.c_bar_tolerance));
            }
            let d: Vec<f64> = rows.iter().filter(|r| r.name == "dX").map(|r| r.value).collect();
            if let Some(s) = relative_spread(&d) {
                checks.push(Check::info("dX_cutoff_spread", s));
            }
        }
        let late: Vec<f64> =
            traj.times.iter().zip(&traj.bound).filter(|(t, _)| **t >= 0.5 * t_final).map(|(_, b)| *b).collect();
        if !late.is_empty() {
            let hi = late.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = late.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.push(Check::within("monitor_ratio", hi / lo, 1.0, cfg.fit.monitor_ratio));
        }
    }
    let notes: Vec<NoteRow> = notes.into_iter().map(|note| NoteRow { note }).collect();
    run.write_rows("fit", FITS, &fits)?;
    run.write_rows("fit", PINNED, &pinned)?;
    run.write_rows("fit", VERDICTS, &verdicts)?;
    run.write_rows("fit", PROFILE, &profile)?;
    run.write_rows("fit", PROFILE_SAMPLES, &samples)?;
    run.write_rows("fit", CHECKS, &checks)?;
    run.write_rows("fit", NOTES, &notes)?;
    Ok(())
}

/// Rebuilds the report from the stored CSVs and writes report.txt,
/// report.csv and the SVG charts.
pub fn report(run: &mut Run) -> Result<AsymptoticReport> {
    let r = report_inner(run);
    run.finish("report", r)
}

pub fn load_report(run: &Run) -> Result<AsymptoticReport> {
    let m = &run.manifest;
    let rows = run.coefficients()?;
    let (coefficient_name, coefficient, coefficient_err) = primary_coefficient(&rows, m.power, m.linear)?;
    let notes: Vec<NoteRow> = run.read_rows(NOTES, "fit")?;
    let profile: Vec<ProfileReport> = run.read_rows(PROFILE, "fit")?;
    Ok(AsymptoticReport {
        spec_hash: m.spec_hash.clone(),
        power: m.power,
        coefficient_name,
        coefficient,
        coefficient_err,
        fits: run.read_rows::<TailFit>(FITS, "fit")?,
        pinned: run.read_rows::<PinnedFit>(PINNED, "fit")?,
        verdicts: run.read_rows::<PriceVerdict>(VERDICTS, "fit")?,
        profile: profile.into_iter().next(),
        checks: run.read_rows::<Check>(CHECKS, "fit")?,
        notes: notes.into_iter().map(|n| n.note).collect(),
    })
}

fn report_inner(run: &mut Run) -> Result<AsymptoticReport> {
    let rep = load_report(run)?;
    run.write("report", REPORT_TXT, rep.to_text().as_bytes())?;
    let mut buf = Vec::new();
    rep.write_csv(&mut buf)?;
    run.write("report", REPORT_CSV, &buf)?;
    let probes: Vec<ProbeRow> = run.read_rows(TRAJECTORY_CSV, "simulate")?;
    run.write("report", TAIL_SVG, tail_plot(&rep, &probes).to_svg().as_bytes())?;
    let samples: Vec<ProfileSample> = run.read_rows(PROFILE_SAMPLES, "fit")?;
    if !samples.is_empty() {
        run.write("report", PROFILE_SVG, profile_plot(&samples).to_svg().as_bytes())?;
    }
    Ok(rep)
}

fn tail_plot(rep: &AsymptoticReport, probes: &[ProbeRow]) -> LinePlot {
    let mut ids: Vec<(usize, f64)> = probes.iter().map(|p| (p.probe_id, p.r)).collect();
    ids.sort_by(|a, b| a.0.cmp(&b.0));
    ids.dedup();
    let mut series: Vec<Series> = ids
        .iter()
        .map(|&(id, r)| {
            let pts = probes.iter().filter(|p| p.probe_id == id && p.t_star > 0.0).map(|p| (p.t_star, p.phi.abs())).collect();
            Series::new(&format!("|phi| at r = {r}"), pts)
        })
        .collect();
    if let Some(f) = rep.fits.first() {
        let e = expected_exponent(rep.power);
        let amp = 2.0 * rep.coefficient.abs();
        if amp > 0.0 {
            let pts = (0..=40).map(|i| f.t_a * (f.t_b / f.t_a).powf(i as f64 / 40.0)).map(|t| (t, amp * t.powf(-e))).collect();
            series.push(Series::new(&format!("2|{}| t^-{e}", rep.coefficient_name), pts).dashed());
        }
    }
    LinePlot {
        title: format!("late-time tail, p = {}", rep.power),
        x_label: "t_*".into(),
        y_label: "|phi|".into(),
        log_x: true,
        log_y: true,
        series,
    }
}

fn profile_plot(samples: &[ProfileSample]) -> LinePlot {
    let t = samples[0].t_star;
    LinePlot {
        title: format!("profile along scri at t_* = {t:.0}"),
        x_label: "v = t_*/r".into(),
        y_label: "t_*^2 phi / (2 c0)".into(),
        log_x: true,
        log_y: false,
        series: vec![
            Series::new("measured", samples.iter().map(|s| (s.v, s.scaled)).collect()),
            Series::new("v/(v+2)", samples.iter().map(|s| (s.v, s.model)).collect()).dashed(),
        ],
    }
}

/// Every stage in order on a fresh run directory.
pub fn run_pipeline(root: &Path, name: &str, text: &str, cutoffs: &[CutoffSpec]) -> Result<(PathBuf, AsymptoticReport)> {
    let mut run = Run::create(root, name, text)?;
    simulate(&mut run)?;
    radiation(&mut run)?;
    coeffs(&mut run, cutoffs)?;
    let rep = fit(&mut run)?;
    Ok((run.dir, rep))
}

/// [`run_pipeline`] for a config file, naming the run after the file stem.
pub fn run_config_file(root: &Path, config: &Path) -> Result<(PathBuf, AsymptoticReport)> {
    let (_, text) = Config::load(config)?;
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    run_pipeline(root, &run_name(stem, &text), &text, &[])
}
