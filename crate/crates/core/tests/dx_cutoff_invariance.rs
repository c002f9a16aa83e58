//! d_X computed with different switch windows must agree, since the tail
//! amplitude it predicts does not know about the window.

use tailslab::cli::config::set_key;
use tailslab::cli::pipeline::{coeffs, radiation, run_name, simulate, Run};
use tailslab::coefficients::CutoffSpec;

#[test]
fn dx_does_not_depend_on_the_cutoff() {
    let mut text = String::from("[nonlinearity]\npower = 4\n");
    for (k, v) in [("grid.n", "400"), ("evolution.t_final", "400.0"), ("fit.t_a", "40.0"), ("fit.t_b", "400.0")] {
        text = set_key(&text, k, v).unwrap();
    }
    let tmp = tempfile::TempDir::new().unwrap();
    let mut run = Run::create(tmp.path(), &run_name("p4", &text), &text).unwrap();
    simulate(&mut run).unwrap();
    radiation(&mut run).unwrap();
    let cuts: Vec<CutoffSpec> = ["0.5:1", "2:4", "8:12"].iter().map(|c| c.parse().unwrap()).collect();
    let rows = coeffs(&mut run, &cuts).unwrap();
    let dx: Vec<(String, f64)> = rows.iter().filter(|r| r.name == "dX").map(|r| (r.cutoff.clone(), r.value)).collect();
    assert_eq!(dx.len(), 3);
    let tol = run.config.fit.cutoff_agreement;
    for (cut, v) in &dx[1..] {
        let rel = (v - dx[0].1).abs() / dx[0].1.abs();
        assert!(rel <= tol, "d_X [{cut}] = {v:e} vs [{}] = {:e}: relative difference {rel:.3e} > {tol}", dx[0].0, dx[0].1);
    }
}
