use std::sync::{Arc, OnceLock};

use tailslab::angular::{AngularField, SphereGrid};
use tailslab::coefficients::{c0, CutoffSpec};
use tailslab::evolution::io::write_binary;
use tailslab::evolution::{
    evolve, flat_exact_oracle, Discretization, InitialData, NonlinearCoefficient, OutputPlan, ProblemSpec, Shape,
    Symmetry, Trajectory,
};
use tailslab::geometry::{build_metric, Height, MetricKind, OperatorDecomposition};
use tailslab::radiation::{extract_rad1, fit_rad2_direct, rad2_from_recursion};

fn spec(n: usize, power: u32, nonlinear: bool, shape: Shape, dissipation: f64) -> ProblemSpec {
    let grid = SphereGrid::new(0);
    ProblemSpec {
        metric: build_metric(MetricKind::MinkowskiHyperboloidal, 0.0, Height::hyperboloidal(2.0)).unwrap(),
        power,
        nonlin_coeff: nonlinear.then(|| NonlinearCoefficient::constant(1.0)),
        data: InitialData::spherical(&grid, shape),
        symmetry: Symmetry::Spherical,
        discretization: Discretization { n, cfl: 0.5, dissipation },
        source: None,
    }
}

fn flat_pulse() -> Shape {
    Shape::FlatPulse { amplitude: 0.3, center: 0.8, width: 1.5 }
}

fn no_snapshots() -> OutputPlan {
    OutputPlan { snapshots: None, ..OutputPlan::default() }
}

/// Cubic run shared by the radiation and coefficient tests.
fn cubic() -> &'static (ProblemSpec, Trajectory) {
    static RUN: OnceLock<(ProblemSpec, Trajectory)> = OnceLock::new();
    RUN.get_or_init(|| {
        let s = spec(400, 3, true, flat_pulse(), 0.02);
        let t = evolve(&s, 400.0, &no_snapshots()).unwrap();
        (s, t)
    })
}

fn linear_error(n: usize) -> f64 {
    let s = spec(n, 3, false, Shape::Bump { amplitude: 1.0, center: 1.0, width: 0.8 }, 0.0);
    let traj = evolve(&s, 20.0, &no_snapshots()).unwrap();
    let oracle = flat_exact_oracle(&s).unwrap();
    let mut err: f64 = 0.0;
    for (k, &t) in traj.times.iter().enumerate() {
        err = err.max((traj.scri[k][0] - oracle.rad1(t)).abs());
        for p in &traj.probes {
            err = err.max((traj.to_nodal(&p.phi[k]).average() - oracle.phi(t, p.r)).abs());
        }
    }
    err
}

#[test]
fn linear_error_converges_at_second_order_or_better() {
    let e: Vec<f64> = [200, 400, 800].iter().map(|&n| linear_error(n)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..=4.5).contains(&order), "errors {e:?}");
    }
}

#[test]
fn linear_energy_leaves_through_scri() {
    let s = spec(400, 3, false, Shape::Bump { amplitude: 1.0, center: 1.0, width: 0.8 }, 0.02);
    let traj = evolve(&s, 30.0, &no_snapshots()).unwrap();
    let e0 = traj.energy[0];
    for (k, w) in traj.energy.windows(2).enumerate() {
        if traj.times[k] >= 3.0 {
            assert!(w[1] <= w[0] + 1e-8 * e0, "t = {}: {} -> {}", traj.times[k], w[0], w[1]);
        }
    }
    assert!(*traj.energy.last().unwrap() < 1e-6 * e0);
}

#[test]
fn identical_specs_give_identical_trajectories() {
    let s = spec(200, 3, true, flat_pulse(), 0.02);
    let bytes = |t: &Trajectory| {
        let mut b = Vec::new();
        write_binary(t, &mut b).unwrap();
        b
    };
    let a = evolve(&s, 100.0, &OutputPlan::default()).unwrap();
    let b = evolve(&s, 100.0, &OutputPlan::default()).unwrap();
    assert!(bytes(&a) == bytes(&b));
}

#[test]
fn decay_monitor_stays_bounded() {
    let (_, traj) = cubic();
    let t_end = *traj.times.last().unwrap();
    let late: Vec<f64> = traj.times.iter().zip(&traj.bound).filter(|(t, _)| **t >= 0.5 * t_end).map(|(_, b)| *b).collect();
    let hi = late.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = late.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi / lo < 3.0, "{hi} / {lo}");
    let all = traj.bound.iter().cloned().fold(0.0, f64::max);
    assert!(all.is_finite());
}

#[test]
fn recursion_matches_direct_rad2_fit() {
    let s = spec(1600, 3, true, flat_pulse(), 0.02);
    let traj = evolve(&s, 40.0, &no_snapshots()).unwrap();
    let g = s.angular().clone();
    let decomp = OperatorDecomposition::new(&s.metric, &g);
    let one = |_t: f64| AngularField::constant(&g, 1.0);
    let rad1 = extract_rad1(&traj).unwrap();
    let series = rad2_from_recursion(&rad1, &s.data.c2, &s.data.d1, &decomp.gtilde, &one).unwrap();
    let direct = fit_rad2_direct(&traj, 24).unwrap();
    let rec = series.rad2().unwrap();
    // differences below double precision of the largest R2 are not resolved
    let floor = 1e-13 * rec.iter().map(|r| r.max_abs()).fold(0.0, f64::max);
    let bad: Vec<(f64, f64, f64)> = (0..traj.times.len())
        .map(|k| (traj.times[k], (rec[k].average() - direct.rad2[k].average()).abs(), direct.error[k]))
        .filter(|(_, d, e)| *d > *e + floor)
        .collect();
    assert!(bad.is_empty(), "{} of {} samples outside the error bar: {bad:?}", bad.len(), traj.times.len());
}

#[test]
fn rescaled_rad1_settles_on_c0() {
    let (s, traj) = cubic();
    let g: Arc<SphereGrid> = s.angular().clone();
    let decomp = OperatorDecomposition::new(&s.metric, &g);
    let one = |_t: f64| AngularField::constant(&g, 1.0);
    let rad1 = extract_rad1(traj).unwrap();
    let value = c0(&rad1, &one, &s.data.c2, &s.data.d1, &decomp.gtilde, &[], 1e-2).unwrap().value;
    let dev: Vec<f64> = [50.0, 100.0, 200.0, 400.0]
        .iter()
        .map(|&t| {
            let k = rad1.times.partition_point(|x| *x < t).min(rad1.len() - 1);
            (rad1.times[k] * rad1.rad1[k].average() / value - 1.0).abs()
        })
        .collect();
    assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
    assert!(dev[3] < 0.01, "{dev:?}");
}

#[test]
fn c0_does_not_depend_on_the_cutoff() {
    let (s, traj) = cubic();
    let g = s.angular().clone();
    let decomp = OperatorDecomposition::new(&s.metric, &g);
    let one = |_t: f64| AngularField::constant(&g, 1.0);
    let rad1 = extract_rad1(traj).unwrap();
    let cuts: Vec<CutoffSpec> = ["0.5:1", "2:4", "8:12"].iter().map(|c| c.parse().unwrap()).collect();
    let r = c0(&rad1, &one, &s.data.c2, &s.data.d1, &decomp.gtilde, &cuts, 1e-2).unwrap();
    assert!(r.cutoff_spread() < 0.01, "{:?}", r.alternates);
    for (_, v) in &r.alternates {
        assert!((v - r.value).abs() <= 1e-3 * r.value.abs());
    }
}
