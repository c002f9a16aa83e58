//! The full pipeline on a short cubic run with two inner probes, written to a
//! temporary directory.
//! Pass a directory as the first argument to keep the artifacts.

use tailslab::cli::config::{set_key, Config};
use tailslab::cli::pipeline::{run_name, run_pipeline};

fn main() -> tailslab::Result<()> {
    let root = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tailslab-example"));
    let mut text = include_str!("../configs/p3_small_flat.toml").to_string();
    for (key, value) in [("grid.n", "400"), ("evolution.t_final", "400.0"), ("fit.t_a", "40.0"), ("fit.t_b", "400.0"), ("evolution.probes", "[1.0, 5.0]"), ("fit.rad1_check_time", "200.0")] {
        text = set_key(&text, key, value)?;
    }
    Config::parse(&text)?;
    let (dir, report) = run_pipeline(&root, &run_name("example", &text), &text, &[])?;
    print!("{}", report.to_text());
    println!("artifacts in {}", dir.display());
    Ok(())
}
