//! Second radiation field of a cubic run: the transport recursion against a
//! direct fit of the rho^2 coefficient near scri.

use tailslab::angular::{AngularField, SphereGrid};
use tailslab::evolution::{
    evolve, Discretization, InitialData, NonlinearCoefficient, OutputPlan, ProblemSpec, Shape, Symmetry,
};
use tailslab::geometry::{build_metric, Height, MetricKind, OperatorDecomposition};
use tailslab::radiation::{extract_rad1, fit_rad2_direct, rad2_from_recursion};

fn main() -> tailslab::Result<()> {
    let grid = SphereGrid::new(0);
    let spec = ProblemSpec {
        metric: build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(2.0))?,
        power: 3,
        nonlin_coeff: Some(NonlinearCoefficient::constant(1.0)),
        data: InitialData::spherical(&grid, Shape::FlatPulse { amplitude: 0.3, center: 0.8, width: 1.5 }),
        symmetry: Symmetry::Spherical,
        discretization: Discretization { n: 800, cfl: 0.5, dissipation: 0.02 },
        source: None,
    };
    let plan = OutputPlan { snapshots: None, ..OutputPlan::default() };
    let traj = evolve(&spec, 40.0, &plan).map_err(|f| f.error)?;
    let decomp = OperatorDecomposition::new(&spec.metric, &grid);
    let a0 = |_t: f64| AngularField::constant(&grid, 1.0);
    let rad1 = extract_rad1(&traj)?;
    let series = rad2_from_recursion(&rad1, &spec.data.c2, &spec.data.d1, &decomp.gtilde, &a0)?;
    let direct = fit_rad2_direct(&traj, 24)?;
    let rad2 = series.rad2()?;
    println!("{:>8} {:>14} {:>14} {:>14} {:>10}", "t_*", "R1", "R2 recursion", "R2 direct", "error bar");
    for t in [1.0, 2.0, 5.0, 10.0, 20.0, 40.0] {
        let k = traj.times.partition_point(|s| *s < t).min(traj.times.len() - 1);
        println!(
            "{:>8.2} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.2e}",
            traj.times[k],
            series.rad1[k].average(),
            rad2[k].average(),
            direct.rad2[k].average(),
            direct.error[k]
        );
    }
    Ok(())
}
