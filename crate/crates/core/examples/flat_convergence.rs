//! Free waves on flat space against the exact d'Alembert solution: the error
//! shrinks under refinement and compact data leave nothing behind.

use tailslab::angular::SphereGrid;
use tailslab::evolution::{
    evolve, flat_exact_oracle, Discretization, InitialData, OutputPlan, ProblemSpec, Shape, Symmetry,
};
use tailslab::geometry::{build_metric, Height, MetricKind};

fn main() -> tailslab::Result<()> {
    let grid = SphereGrid::new(0);
    let mut previous: Option<f64> = None;
    for n in [100, 200, 400] {
        let spec = ProblemSpec {
            metric: build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(2.0))?,
            power: 3,
            nonlin_coeff: None,
            data: InitialData::spherical(&grid, Shape::Bump { amplitude: 1.0, center: 1.0, width: 0.8 }),
            symmetry: Symmetry::Spherical,
            discretization: Discretization { n, cfl: 0.5, dissipation: 0.0 },
            source: None,
        };
        let plan = OutputPlan { snapshots: None, ..OutputPlan::default() };
        let traj = evolve(&spec, 20.0, &plan).map_err(|f| f.error)?;
        let oracle = flat_exact_oracle(&spec)?;
        let mut err: f64 = 0.0;
        for (k, &t) in traj.times.iter().enumerate() {
            err = err.max((traj.scri[k][0] - oracle.rad1(t)).abs());
            for p in &traj.probes {
                err = err.max((traj.to_nodal(&p.phi[k]).average() - oracle.phi(t, p.r)).abs());
            }
        }
        let order = previous.map(|e| format!("{:.2}", (e / err).log2())).unwrap_or_default();
        let late = traj.probes[0].phi.last().map(|m| traj.to_nodal(m).average()).unwrap_or(0.0);
        println!("n = {n:4}  max error {err:.3e}  order {order:>5}  phi(r=1, t=20) = {late:.2e}");
        previous = Some(err);
    }
    Ok(())
}
