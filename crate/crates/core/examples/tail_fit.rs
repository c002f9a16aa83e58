//! Power-law fits on a synthetic tail with a subleading correction, and the
//! verdict against a predicted coefficient.

use tailslab::tailfit::{fit_pinned, fit_power_law, price_verdict, Tolerances};

fn main() -> tailslab::Result<()> {
    let c0 = 0.04;
    let t: Vec<f64> = (0..2000).map(|i| 10.0 * 1.003f64.powi(i)).filter(|t| *t <= 4000.0).collect();
    let phi: Vec<f64> = t.iter().map(|t| 2.0 * c0 / (t * t) * (1.0 + 5.0 / t)).collect();
    for window in [(20.0, 200.0), (200.0, 2000.0), (400.0, 4000.0)] {
        let fit = fit_power_law(&t, &phi, window, 1.0)?;
        let pinned = fit_pinned(&t, &phi, window, 2.0)?;
        let v = price_verdict(&fit, Some(&pinned), c0, 3, &Tolerances::default());
        println!(
            "[{:>5}, {:>5}] exponent {:.4} +- {:.4}  ratio free {:.4} pinned {:.4}  {}",
            window.0,
            window.1,
            fit.exponent,
            fit.exponent_err,
            v.ratio_free,
            v.ratio_pinned,
            if v.pass { "pass" } else { "fail" }
        );
    }
    Ok(())
}
