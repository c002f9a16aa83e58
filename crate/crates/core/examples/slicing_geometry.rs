//! Inverse metric of the hyperboloidal slicing and the operator split at scri
//! for the three metric models.

use tailslab::angular::SphereGrid;
use tailslab::geometry::{build_metric, Height, MetricKind, OperatorDecomposition};

fn main() -> tailslab::Result<()> {
    let grid = SphereGrid::new(0);
    for (kind, mass) in [
        (MetricKind::MinkowskiHyperboloidal, 0.0),
        (MetricKind::MassDeformed, 0.1),
        (MetricKind::NormalForm, 0.1),
    ] {
        let metric = build_metric(kind, mass, Height::hyperboloidal(2.0))?;
        let decomp = OperatorDecomposition::new(&metric, &grid);
        println!("{kind:?}, m = {mass}: g-tilde at scri = {:.6}", decomp.gtilde.average());
        println!("  {:>8} {:>12} {:>12} {:>12}", "r", "g^00", "g^0r", "g^rr");
        for r in [0.5, 1.0, 2.0, 10.0, 100.0, 1e4] {
            println!("  {r:>8} {:>12.6} {:>12.6} {:>12.6}", metric.g00(r), metric.g0r(r), metric.grr(r));
        }
    }
    Ok(())
}
