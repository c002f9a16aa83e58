//! c(omega), its mean and d_X for a small quartic pulse, per cutoff window.

use tailslab::angular::{AngularField, SphereGrid};
use tailslab::coefficients::{assemble_forcing, c_angular, c_scale, d_angular, dx, tilde_c, CutoffSpec};
use tailslab::evolution::{
    evolve, Discretization, InitialData, NonlinearCoefficient, OutputPlan, ProblemSpec, Shape, Symmetry,
};
use tailslab::geometry::{build_metric, Height, MetricKind, OperatorDecomposition};
use tailslab::radiation::{extract_rad1, rad2_from_recursion, rad3_from_recursion};

fn main() -> tailslab::Result<()> {
    let grid = SphereGrid::new(0);
    let spec = ProblemSpec {
        metric: build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(2.0))?,
        power: 4,
        nonlin_coeff: Some(NonlinearCoefficient::constant(1.0)),
        data: InitialData::spherical(&grid, Shape::FlatPulse { amplitude: 0.3, center: 0.8, width: 1.5 }),
        symmetry: Symmetry::Spherical,
        discretization: Discretization { n: 400, cfl: 0.5, dissipation: 0.02 },
        source: None,
    };
    let traj = evolve(&spec, 200.0, &OutputPlan::default()).map_err(|f| f.error)?;
    let decomp = OperatorDecomposition::new(&spec.metric, &grid);
    let zero = |_t: f64| AngularField::zeros(&grid);
    let one = |_t: f64| AngularField::constant(&grid, 1.0);
    let rad1 = extract_rad1(&traj)?;
    let series = rad2_from_recursion(&rad1, &spec.data.c2, &spec.data.d1, &decomp.gtilde, &zero)?;
    let series = rad3_from_recursion(&series, &decomp, &one, 4)?;
    for w in ["0.5:1", "2:4", "8:12"] {
        let cut: CutoffSpec = w.parse()?;
        let c = c_angular(&series, &decomp.gtilde, &cut, None)?;
        let scale = c_scale(&series, &decomp.gtilde, &cut)?;
        let d = d_angular(&series, &decomp, &one, 4, &cut)?;
        let forcing = assemble_forcing(&traj, &spec, &cut, 1e-2)?;
        let d_x = dx(&forcing, &tilde_c(&c, f64::INFINITY)?, &d, &spec.metric, &decomp)?;
        println!("cutoff {w:>6}: mean c = {:+.3e} (scale {scale:.3e})  d_X = {d_x:+.6e}", c.average());
    }
    Ok(())
}
