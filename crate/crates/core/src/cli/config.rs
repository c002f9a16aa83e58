//! Run configuration: TOML with sections [metric], [grid], [evolution],
//! [nonlinearity], [data], [cutoff] and [fit]. Every key is optional; the
//! defaults are listed in `configs/defaults.toml`.

use serde::{Deserialize, Serialize};

use crate::angular::SphereGrid;
use crate::coefficients::CutoffSpec;
use crate::error::{Error, Result};
use crate::evolution::{
    Cadence, Discretization, InitialData, ModeShape, NonlinearCoefficient, OutputPlan, ProblemSpec, Shape, Symmetry,
};
use crate::geometry::{build_metric, build_metric_with_core, Height, MetricKind};
use crate::tailfit::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    pub kind: MetricKind,
    pub mass: f64,
    /// S in h(r) = √(S² + r²) − S.
    pub scale: f64,
    pub core_radius: Option<f64>,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self { kind: MetricKind::MinkowskiHyperboloidal, mass: 0.0, scale: 2.0, core_radius: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub cfl: f64,
    pub dissipation: f64,
    /// 0 for spherical runs; otherwise the band limit of the mode expansion.
    pub lmax: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let d = Discretization::default();
        Self { n: d.n, cfl: d.cfl, dissipation: d.dissipation, lmax: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub t_final: f64,
    pub probes: Vec<f64>,
    pub near_scri: usize,
    pub trace_dense_dt: f64,
    pub trace_dense_until: f64,
    pub trace_ratio: f64,
    pub snapshots: bool,
    pub snapshot_dense_dt: f64,
    pub snapshot_dense_until: f64,
    pub snapshot_ratio: f64,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let p = OutputPlan::default();
        let s = p.snapshots.expect("default snapshots");
        Self {
            t_final: 2000.0,
            probes: p.probes,
            near_scri: p.near_scri,
            trace_dense_dt: p.trace.dense_dt,
            trace_dense_until: p.trace.dense_until,
            trace_ratio: p.trace.ratio,
            snapshots: true,
            snapshot_dense_dt: s.dense_dt,
            snapshot_dense_until: s.dense_until,
            snapshot_ratio: s.ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearitySection {
    pub enabled: bool,
    pub power: u32,
    /// Constant coefficient a in □φ = aφ^p; a = 1 is focusing.
    pub a: f64,
}

impl Default for NonlinearitySection {
    fn default() -> Self {
        Self { enabled: true, power: 3, a: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// flat_pulse, bump, velocity_bump or gaussian.
    pub shape: String,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub l: usize,
    pub m: i64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { shape: "flat_pulse".into(), amplitude: 0.3, center: 0.8, width: 1.5, l: 0, m: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffSection {
    /// Windows "t0:t1" of the switch χ; the first one is primary.
    pub windows: Vec<String>,
    /// Allowed relative size of the integral tail beyond T_final.
    pub tolerance: f64,
}

impl Default for CutoffSection {
    fn default() -> Self {
        Self { windows: vec!["0.5:1".into(), "2:4".into()], tolerance: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Window start; defaults to t_final / 10.
    pub t_a: Option<f64>,
    /// Window end; defaults to t_final.
    pub t_b: Option<f64>,
    pub tol_exponent: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub cutoff_agreement: f64,
    pub c_bar_tolerance: f64,
    pub profile_t_min: f64,
    pub profile_v_min: f64,
    pub profile_v_max: f64,
    pub profile_tolerance: f64,
    pub rad1_check_time: f64,
    pub rad1_tolerance: f64,
    pub monitor_ratio: f64,
    pub noise_floor: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            t_a: None,
            t_b: None,
            tol_exponent: 0.1,
            ratio_min: 0.8,
            ratio_max: 1.25,
            cutoff_agreement: 0.01,
            c_bar_tolerance: 1e-3,
            profile_t_min: 100.0,
            profile_v_min: 0.5,
            profile_v_max: 5.0,
            profile_tolerance: 0.1,
            rad1_check_time: 500.0,
            rad1_tolerance: 0.1,
            monitor_ratio: 3.0,
            noise_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub metric: MetricSection,
    pub grid: GridSection,
    pub evolution: EvolutionSection,
    pub nonlinearity: NonlinearitySection,
    pub data: DataSection,
    pub cutoff: CutoffSection,
    pub fit: FitSection,
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, or 0 when the key is absent (a default).
pub fn line_of(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            current = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        } else if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    0
}

/// `section.key` for the assignment on a 1-based line, if there is one.
fn key_at_line(text: &str, line: usize) -> Option<String> {
    let mut section = String::new();
    for (i, l) in text.lines().enumerate().take(line) {
        let l = l.trim();
        if l.starts_with('[') {
            section = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        } else if i + 1 == line {
            let (k, _) = l.split_once('=')?;
            return Some(if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) });
        }
    }
    (!section.is_empty()).then_some(section)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |sp| line_at(text, sp.start));
            let key = key_at_line(text, line).unwrap_or_default();
            Error::Config { key, line, message: e.message().trim().to_string() }
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    fn validate(&self, text: &str) -> Result<()> {
        let bad = |section: &str, key: &str, message: String| Error::Config {
            key: format!("{section}.{key}"),
            line: line_of(text, section, key),
            message,
        };
        let positive = |section: &str, key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(section, key, format!("must be positive, got {v}")))
            }
        };
        positive("metric", "scale", self.metric.scale)?;
        if !(self.metric.mass >= 0.0) {
            return Err(bad("metric", "mass", format!("must be >= 0, got {}", self.metric.mass)));
        }
        if self.grid.n < 16 {
            return Err(bad("grid", "n", format!("need at least 16 intervals, got {}", self.grid.n)));
        }
        positive("grid", "cfl", self.grid.cfl)?;
        if !(self.grid.dissipation >= 0.0) {
            return Err(bad("grid", "dissipation", "must be >= 0".into()));
        }
        positive("evolution", "t_final", self.evolution.t_final)?;
        positive("evolution", "trace_dense_dt", self.evolution.trace_dense_dt)?;
        positive("evolution", "snapshot_dense_dt", self.evolution.snapshot_dense_dt)?;
        for (k, v) in [("trace_ratio", self.evolution.trace_ratio), ("snapshot_ratio", self.evolution.snapshot_ratio)] {
            if !(v > 1.0) {
                return Err(bad("evolution", k, format!("must exceed 1, got {v}")));
            }
        }
        if self.evolution.probes.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(bad("evolution", "probes", "probe radii must be positive and finite".into()));
        }
        if self.nonlinearity.enabled && self.nonlinearity.power < 2 {
            return Err(bad("nonlinearity", "power", format!("must be >= 2, got {}", self.nonlinearity.power)));
        }
        if self.shape().is_err() {
            return Err(bad("data", "shape", format!("unknown shape `{}`", self.data.shape)));
        }
        positive("data", "width", self.data.width)?;
        if self.data.l > self.grid.lmax || self.data.m.unsigned_abs() as usize > self.data.l {
            return Err(bad("data", "l", format!("mode ({}, {}) outside lmax = {}", self.data.l, self.data.m, self.grid.lmax)));
        }
        if self.cutoff.windows.is_empty() {
            return Err(bad("cutoff", "windows", "need at least one window".into()));
        }
        for w in &self.cutoff.windows {
            w.parse::<CutoffSpec>().map_err(|e| bad("cutoff", "windows", e.to_string()))?;
        }
        positive("cutoff", "tolerance", self.cutoff.tolerance)?;
        let (ta, tb) = self.fit_window();
        if !(ta > 0.0) || tb / ta < crate::tailfit::MIN_WINDOW_RATIO || tb > self.evolution.t_final {
            return Err(bad("fit", "t_a", format!("window [{ta}, {tb}] must satisfy t_b/t_a >= 5 and t_b <= t_final")));
        }
        if !(self.fit.ratio_min < self.fit.ratio_max) {
            return Err(bad("fit", "ratio_min", "ratio_min must be below ratio_max".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<Shape> {
        let (amplitude, center, width) = (self.data.amplitude, self.data.center, self.data.width);
        Ok(match self.data.shape.as_str() {
            "flat_pulse" => Shape::FlatPulse { amplitude, center, width },
            "bump" => Shape::Bump { amplitude, center, width },
            "velocity_bump" => Shape::VelocityBump { amplitude, center, width },
            "gaussian" => Shape::Gaussian { amplitude, center, width },
            other => return Err(Error::InvalidParameter(format!("unknown data shape `{other}`"))),
        })
    }

    pub fn fit_window(&self) -> (f64, f64) {
        let t = self.evolution.t_final;
        (self.fit.t_a.unwrap_or(t / 10.0), self.fit.t_b.unwrap_or(t))
    }

    pub fn cutoffs(&self) -> Result<Vec<CutoffSpec>> {
        self.cutoff.windows.iter().map(|w| w.parse()).collect()
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { exponent: self.fit.tol_exponent, ratio_min: self.fit.ratio_min, ratio_max: self.fit.ratio_max }
    }

    pub fn is_linear(&self) -> bool {
        !self.nonlinearity.enabled || self.nonlinearity.a == 0.0
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let m = &self.metric;
        let height = Height::hyperboloidal(m.scale);
        let metric = match m.core_radius {
            Some(rc) => build_metric_with_core(m.kind, m.mass, height, rc)?,
            None => build_metric(m.kind, m.mass, height)?,
        };
        let grid = SphereGrid::new(self.grid.lmax);
        let shape = self.shape()?;
        let data = InitialData::compact(&grid, vec![ModeShape { l: self.data.l, m: self.data.m, shape }]);
        let symmetry = if self.grid.lmax == 0 { Symmetry::Spherical } else { Symmetry::Banded(self.grid.lmax) };
        Ok(ProblemSpec {
            metric,
            power: self.nonlinearity.power,
            nonlin_coeff: (!self.is_linear()).then(|| NonlinearCoefficient::constant(self.nonlinearity.a)),
            data,
            symmetry,
            discretization: Discretization { n: self.grid.n, cfl: self.grid.cfl, dissipation: self.grid.dissipation },
            source: None,
        })
    }

    pub fn output_plan(&self) -> OutputPlan {
        let e = &self.evolution;
        OutputPlan {
            trace: Cadence { dense_dt: e.trace_dense_dt, dense_until: e.trace_dense_until, ratio: e.trace_ratio },
            snapshots: e.snapshots.then_some(Cadence {
                dense_dt: e.snapshot_dense_dt,
                dense_until: e.snapshot_dense_until,
                ratio: e.snapshot_ratio,
            }),
            probes: e.probes.clone(),
            near_scri: e.near_scri,
        }
    }
}

/// Sets `section.key` in a config text to a TOML literal and returns the
/// validated new text.
pub fn override_key(text: &str, dotted: &str, literal: &str) -> Result<String> {
    let out = set_key(text, dotted, literal)?;
    Config::parse(&out)?;
    Ok(out)
}

/// [`override_key`] without validation, for applying several keys in turn.
pub fn set_key(text: &str, dotted: &str, literal: &str) -> Result<String> {
    let (section, key) = dotted
        .split_once('.')
        .ok_or_else(|| Error::Config { key: dotted.into(), line: 0, message: "expected section.key".into() })?;
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config {
        key: dotted.into(),
        line: e.span().map_or(0, |s| line_at(text, s.start)),
        message: e.message().to_string(),
    })?;
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {literal}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(literal.to_string()));
    let sec = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| Error::Config { key: section.into(), line: 0, message: "not a section".into() })?;
    sec.insert(key.to_string(), value);
    toml::to_string(&table).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn bundled_defaults_file_matches() {
        let text = include_str!("../../configs/defaults.toml");
        assert_eq!(Config::parse(text).unwrap(), Config::default());
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = "[grid]\nn = 800\n\n[data]\namplitud = 0.2\n";
        match Config::parse(text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "data.amplitud");
                assert_eq!(line, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_error_names_key_and_line() {
        let text = "[grid]\nn = \"many\"\n";
        match Config::parse(text) {
            Err(Error::Config { key, line, .. }) => assert_eq!((key.as_str(), line), ("grid.n", 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_error_names_key_and_line() {
        let text = "[metric]\nscale = 2.0\n[evolution]\nt_final = 100.0\ntrace_ratio = 0.9\n";
        match Config::parse(text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "evolution.trace_ratio");
                assert_eq!(line, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn override_changes_one_key() {
        let out = override_key("[grid]\nn = 400\n", "grid.n", "800").unwrap();
        let cfg = Config::parse(&out).unwrap();
        assert_eq!(cfg.grid.n, 800);
        let out = override_key(&out, "data.shape", "bump").unwrap();
        assert_eq!(Config::parse(&out).unwrap().data.shape, "bump");
        assert!(override_key(&out, "grid.n", "3").is_err());
    }
}
