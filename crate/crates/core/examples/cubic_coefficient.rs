//! c0 for a small cubic pulse, checked across cutoff windows, and t_* R1
//! approaching it.

use tailslab::angular::{AngularField, SphereGrid};
use tailslab::coefficients::{c0, CutoffSpec};
use tailslab::evolution::{
    evolve, Discretization, InitialData, NonlinearCoefficient, OutputPlan, ProblemSpec, Shape, Symmetry,
};
use tailslab::geometry::{build_metric, Height, MetricKind, OperatorDecomposition};
use tailslab::radiation::extract_rad1;

fn main() -> tailslab::Result<()> {
    let grid = SphereGrid::new(0);
    let spec = ProblemSpec {
        metric: build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(2.0))?,
        power: 3,
        nonlin_coeff: Some(NonlinearCoefficient::constant(1.0)),
        data: InitialData::spherical(&grid, Shape::FlatPulse { amplitude: 0.3, center: 0.8, width: 1.5 }),
        symmetry: Symmetry::Spherical,
        discretization: Discretization { n: 400, cfl: 0.5, dissipation: 0.02 },
        source: None,
    };
    let plan = OutputPlan { snapshots: None, ..OutputPlan::default() };
    let traj = evolve(&spec, 400.0, &plan).map_err(|f| f.error)?;
    let decomp = OperatorDecomposition::new(&spec.metric, &grid);
    let rad1 = extract_rad1(&traj)?;
    let a0 = |_t: f64| AngularField::constant(&grid, 1.0);
    let cutoffs: Vec<CutoffSpec> = ["0.5:1", "2:4", "8:12"].iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    let r = c0(&rad1, &a0, &spec.data.c2, &spec.data.d1, &decomp.gtilde, &cutoffs, 1e-2)?;
    println!("c0 = {:.10e}  (truncation {:.1e})", r.value, r.truncation);
    for (c, v) in &r.alternates {
        println!("  cutoff {c:>7}: {v:.10e}");
    }
    println!("relative spread across cutoffs {:.2e}", r.cutoff_spread());
    for t in [50.0, 100.0, 200.0, 400.0] {
        let k = rad1.times.partition_point(|s| *s < t).min(rad1.len() - 1);
        println!("t_* R1 at t_* = {:>5.0}: {:.6e}", rad1.times[k], rad1.times[k] * rad1.rad1[k].average());
    }
    Ok(())
}
