//! The d_k kernel table, the b-ODE cases and the log coefficient of the
//! model solution, as printed by `tailslab kernels`.

use tailslab::asymptotic_kernels::{umod_derivative, umod_profile, Regulator};
use tailslab::cli::kernel_table;

fn main() -> tailslab::Result<()> {
    let (table, pass) = kernel_table(&[0, 1, 2, 3, 4], 40.0, Regulator::default())?;
    print!("{table}");
    println!("all rows within 2%: {pass}");
    println!("{:>10} {:>26} {:>14}", "r-hat", "d(r u)/dr", "r u");
    for r in [1e-4, 1e-2, 1.0, 10.0] {
        let k = umod_derivative(r)?;
        println!("{r:>10.0e} {:>+12.6}{:>+12.6}i {:>+14.6}", k.re, k.im, umod_profile(r)?.re);
    }
    Ok(())
}
