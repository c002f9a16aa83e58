//! Trajectory persistence: probe and scri CSVs plus a little-endian binary
//! file holding the full run history.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvolutionState, ProbeSeries, RunStatus, Trajectory};
use crate::angular::SphereGrid;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 9] = b"TAILSLAB1";

/// Probe CSV: t_star, probe_id, r, phi, dphi_dt (sphere averages).
pub fn write_trajectory_csv(traj: &Trajectory, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_star", "probe_id", "r", "phi", "dphi_dt"])?;
    for (k, &t) in traj.times.iter().enumerate() {
        for (id, p) in traj.probes.iter().enumerate() {
            let phi = traj.to_nodal(&p.phi[k]).average();
            let dphi = traj.to_nodal(&p.dphi[k]).average();
            out.write_record(&[fmt(t), id.to_string(), fmt(p.r), fmt(phi), fmt(dphi)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Scri CSV: t_star, theta_index, phi_index, rad1_raw at the angular nodes.
pub fn write_scri_csv(traj: &Trajectory, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_star", "theta_index", "phi_index", "rad1_raw"])?;
    let np = traj.angular.n_phi;
    for (k, &t) in traj.times.iter().enumerate() {
        let field = traj.scri_nodal(k);
        for (node, v) in field.values.iter().enumerate() {
            out.write_record(&[fmt(t), (node / np).to_string(), (node % np).to_string(), fmt(*v)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Shortest round-trip decimal form, so rewriting a CSV is byte-stable.
pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    n: usize,
    dt: f64,
    power: u32,
    monitor_power: f64,
    modes: Vec<(usize, i64)>,
    spherical: bool,
    lmax: usize,
    n_theta: usize,
    n_phi: usize,
    spec_hash: String,
    status: RunStatus,
    n_times: usize,
    near_scri: usize,
    probes: Vec<f64>,
    n_snapshots: usize,
}

fn put(buf: &mut Vec<u8>, xs: impl IntoIterator<Item = f64>) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn write_binary(traj: &Trajectory, mut w: impl Write) -> Result<()> {
    let near = traj.near_scri.first().and_then(|v| v.first()).map_or(0, |v| v.len());
    let header = Header {
        n: traj.n,
        dt: traj.dt,
        power: traj.power,
        monitor_power: traj.monitor_power,
        modes: traj.modes.clone(),
        spherical: traj.spherical,
        lmax: traj.angular.lmax,
        n_theta: traj.angular.n_theta,
        n_phi: traj.angular.n_phi,
        spec_hash: traj.spec_hash.clone(),
        status: traj.status.clone(),
        n_times: traj.times.len(),
        near_scri: near,
        probes: traj.probes.iter().map(|p| p.r).collect(),
        n_snapshots: traj.snapshots.len(),
    };
    let text = toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    put(&mut buf, traj.times.iter().copied());
    put(&mut buf, traj.scri.iter().flatten().copied());
    put(&mut buf, traj.near_scri.iter().flatten().flatten().copied());
    for p in &traj.probes {
        put(&mut buf, p.phi.iter().flatten().copied());
        put(&mut buf, p.dphi.iter().flatten().copied());
    }
    put(&mut buf, traj.energy.iter().copied());
    put(&mut buf, traj.bound.iter().copied());
    for s in &traj.snapshots {
        put(&mut buf, [s.t_star]);
        put(&mut buf, s.psi.iter().flatten().copied());
        put(&mut buf, s.pi.iter().flatten().copied());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        let end = self.pos + 8 * n;
        if end > self.data.len() {
            return Err(Error::Format("truncated trajectory file".into()));
        }
        let v = self.data[self.pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos = end;
        Ok(v)
    }

    fn rows(&mut self, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
        let flat = self.take(rows * cols)?;
        Ok(if cols == 0 { vec![vec![]; rows] } else { flat.chunks(cols).map(|c| c.to_vec()).collect() })
    }
}

pub fn read_binary(mut r: impl Read) -> Result<Trajectory> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() < 17 || &data[..9] != MAGIC {
        return Err(Error::Format("not a TAILSLAB1 trajectory".into()));
    }
    let len = u64::from_le_bytes(data[9..17].try_into().unwrap()) as usize;
    let text = data
        .get(17..17 + len)
        .and_then(|b| std::str::from_utf8(b).ok())
        .ok_or_else(|| Error::Format("bad trajectory header".into()))?;
    let h: Header = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let mut c = Cursor { data: &data, pos: 17 + len };
    let nm = h.modes.len();
    let times = c.take(h.n_times)?;
    let scri = c.rows(h.n_times, nm)?;
    let near_flat = c.rows(h.n_times * nm, h.near_scri)?;
    let near_scri = if nm == 0 { vec![vec![]; h.n_times] } else { near_flat.chunks(nm).map(|c| c.to_vec()).collect() };
    let mut probes = Vec::new();
    for &pr in &h.probes {
        let phi = c.rows(h.n_times, nm)?;
        let dphi = c.rows(h.n_times, nm)?;
        probes.push(ProbeSeries { r: pr, phi, dphi });
    }
    let energy = c.take(h.n_times)?;
    let bound = c.take(h.n_times)?;
    let mut snapshots = Vec::with_capacity(h.n_snapshots);
    for _ in 0..h.n_snapshots {
        let t_star = c.take(1)?[0];
        let psi = c.rows(nm, h.n + 1)?;
        let pi = c.rows(nm, h.n + 1)?;
        snapshots.push(EvolutionState { t_star, psi, pi });
    }
    if c.pos != data.len() {
        return Err(Error::Format("trailing bytes in trajectory file".into()));
    }
    Ok(Trajectory {
        n: h.n,
        dt: h.dt,
        power: h.power,
        monitor_power: h.monitor_power,
        modes: h.modes,
        spherical: h.spherical,
        angular: SphereGrid::with_nodes(h.lmax, h.n_theta, h.n_phi)?,
        spec_hash: h.spec_hash,
        times,
        scri,
        near_scri,
        probes,
        energy,
        bound,
        snapshots,
        status: h.status,
    })
}

pub fn save(traj: &Trajectory, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_binary(traj, std::io::BufWriter::new(f))
}

pub fn load(path: &Path) -> Result<Trajectory> {
    let f = std::fs::File::open(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    read_binary(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::*;
    use crate::geometry::{build_metric, Height, MetricKind};

    #[test]
    fn binary_round_trip_is_exact() {
        let g = SphereGrid::new(0);
        let spec = ProblemSpec {
            metric: build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(2.0)).unwrap(),
            power: 3,
            nonlin_coeff: Some(NonlinearCoefficient::constant(1.0)),
            data: InitialData::spherical(&g, Shape::FlatPulse { amplitude: 0.1, center: 0.8, width: 1.5 }),
            symmetry: Symmetry::Spherical,
            discretization: Discretization { n: 40, cfl: 0.5, dissipation: 0.02 },
            source: None,
        };
        let tr = evolve(&spec, 1.0, &OutputPlan::default()).unwrap();
        let mut buf = Vec::new();
        write_binary(&tr, &mut buf).unwrap();
        assert_eq!(&buf[..9], MAGIC);
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.scri, tr.scri);
        assert_eq!(back.near_scri, tr.near_scri);
        assert_eq!(back.snapshots, tr.snapshots);
        assert_eq!(back.probes, tr.probes);
        assert_eq!(back.spec_hash, tr.spec_hash);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_scri_csv(&tr, &mut a).unwrap();
        write_scri_csv(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(read_binary(&b"NOTATRAJECTORY......."[..]), Err(Error::Format(_))));
    }
}
