//! Command-line front end: `tailslab <subcommand>`.
//!
//! Exit status is 0 when every judged check passes, 2 when a verdict fails
//! and 1 on errors.

pub mod config;
pub mod pipeline;
pub mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::asymptotic_kernels::{
    bode_leading, check_tail_kernel, solve_bode, tail_kernel_branch_cut, umod_unit_log_coefficient,
    LogGridFunction, Regulator,
};
use crate::coefficients::CutoffSpec;
use crate::error::{Error, Result};
use config::{set_key, Config};
use pipeline::{out_root, run_name, run_pipeline, Run};

#[derive(Debug, Parser)]
#[command(name = "tailslab", version, about = "Late-time tails of semilinear waves on hyperboloidal slices")]
pub struct Cli {
    /// Output root for run directories (default: $TAILSLAB_OUT, then ./runs).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Runs are deterministic; accepted for compatibility.
    #[arg(long, global = true)]
    pub seedless: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunTarget {
    /// Run directory created by `simulate` or `run`.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Parameter sweep `section.key=v1,v2,...`; repeat to sweep a product.
    #[arg(long, value_name = "KEY=V1,V2")]
    pub sweep: Vec<String>,
    /// Concurrent runs in a sweep.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a run directory and evolve the configured problem.
    Simulate(ConfigArgs),
    /// Extract the radiation fields of a run.
    Radiation(RunTarget),
    /// Compute c0 (p = 3) or c-bar and d_X (p >= 4).
    Coeffs {
        #[command(flatten)]
        target: RunTarget,
        /// Cutoff window t0:t1; repeat for several. Defaults to the config.
        #[arg(long = "cutoff")]
        cutoffs: Vec<CutoffSpec>,
    },
    /// Fit the tails and judge them; also writes the report.
    Fit(RunTarget),
    /// Regenerate report.txt, report.csv and plots from stored CSVs.
    Report(RunTarget),
    /// Every stage in sequence.
    Run(ConfigArgs),
    /// Self-checks of the asymptotic kernels.
    Kernels {
        #[arg(long, num_args = 1.., default_values_t = [1u32, 2, 3])]
        k: Vec<u32>,
        #[arg(long, default_value_t = 40.0)]
        t: f64,
        /// Use the compactly supported regulator instead of the Gaussian.
        #[arg(long)]
        bump: bool,
    },
}

/// Whether the judged checks passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let root = out_root(cli.out.as_deref());
    match &cli.command {
        Command::Simulate(a) => {
            for (name, text) in variants(a)? {
                let mut run = Run::create(&root, &name, &text)?;
                let traj = pipeline::simulate(&mut run)?;
                println!("{}: {} samples to t_* = {}", run.dir.display(), traj.times.len(), traj.times.last().unwrap_or(&0.0));
            }
            Ok(Outcome::Pass)
        }
        Command::Radiation(t) => {
            let mut run = Run::open(&t.run)?;
            let s = pipeline::radiation(&mut run)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: {} radiation samples", run.dir.display(), s.len());
            Ok(Outcome::Pass)
        }
        Command::Coeffs { target, cutoffs } => {
            let mut run = Run::open(&target.run)?;
            let rows = pipeline::coeffs(&mut run, cutoffs)?;
            for r in &rows {
                let cut = if r.cutoff.is_empty() { String::new() } else { format!(" [{}]", r.cutoff) };
                println!("{}{cut} = {:e}", r.name, r.value);
            }
            let per_cut: Vec<f64> =
                rows.iter().filter(|r| r.name == "c0_cutoff" || r.name == "dX").map(|r| r.value).collect();
            if per_cut.len() >= 2 {
                let (a, b) = (per_cut[0], per_cut[1]);
                println!("relative difference {:.3e}", (a - b).abs() / a.abs().max(b.abs()));
            }
            if rows.is_empty() {
                println!("linear run: no coefficient");
            }
            Ok(Outcome::Pass)
        }
        Command::Fit(t) => {
            let mut run = Run::open(&t.run)?;
            let rep = pipeline::fit(&mut run)?;
            print!("{}", rep.to_text());
            Ok(Outcome::from_pass(rep.pass()))
        }
        Command::Report(t) => {
            let mut run = Run::open(&t.run)?;
            let rep = pipeline::report(&mut run)?;
            print!("{}", rep.to_text());
            Ok(Outcome::from_pass(rep.pass()))
        }
        Command::Run(a) => sweep(&root, a),
        Command::Kernels { k, t, bump } => {
            let reg = if *bump { Regulator::Bump } else { Regulator::default() };
            let (text, pass) = kernel_table(k, *t, reg)?;
            print!("{text}");
            Ok(Outcome::from_pass(pass))
        }
    }
}

/// (run name, config text) for every point of the sweep product.
fn variants(a: &ConfigArgs) -> Result<Vec<(String, String)>> {
    let (_, text) = Config::load(&a.config)?;
    let stem = a.config.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
    let mut texts = vec![text];
    for s in &a.sweep {
        let (key, values) = s.split_once('=').ok_or_else(|| Error::InvalidParameter(format!("sweep `{s}`: expected key=v1,v2")))?;
        let mut next = Vec::new();
        for t in &texts {
            for v in values.split(',').filter(|v| !v.is_empty()) {
                next.push(set_key(t, key, v.trim())?);
            }
        }
        texts = next;
    }
    for t in &texts {
        Config::parse(t)?;
    }
    Ok(texts.into_iter().map(|t| (run_name(&stem, &t), t)).collect())
}

fn sweep(root: &Path, a: &ConfigArgs) -> Result<Outcome> {
    let jobs = variants(a)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, String, Result<bool>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..a.jobs.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((name, text)) = jobs.get(i) else { break };
                let r = run_pipeline(root, name, text, &[]).map(|(_, rep)| {
                    if jobs.len() == 1 {
                        print!("{}", rep.to_text());
                    }
                    rep.pass()
                });
                results.lock().unwrap().push((i, name.clone(), r));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|r| r.0);
    let mut outcome = Outcome::Pass;
    let mut first_err = None;
    for (_, name, r) in results {
        match r {
            Ok(pass) => {
                println!("{} {}", root.join(&name).display(), if pass { "pass" } else { "fail" });
                if !pass {
                    outcome = Outcome::Fail;
                }
            }
            Err(e) => {
                eprintln!("{}: {e}", root.join(&name).display());
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

/// The kernel table plus the b-ODE and log-coefficient checks. The bool is
/// true when every row agrees with its target within 2%.
pub fn kernel_table(ks: &[u32], t: f64, reg: Regulator) -> Result<(String, bool)> {
    use std::fmt::Write as _;
    let mut s = String::new();
    let mut pass = true;
    let _ = writeln!(s, "tail kernels at t = {t} ({reg:?})");
    let _ = writeln!(s, "{:>3} {:>24} {:>24} {:>24} {:>10}  status", "k", "formula d_k", "t^(k+1) x numeric", "branch cut", "rel err");
    let c = |z: num_complex::Complex64| format!("{:+.5}{:+.5}i", z.re, z.im);
    for &k in ks {
        let numeric = crate::asymptotic_kernels::tail_kernel_numeric(k, t, reg) * t.powi(k as i32 + 1);
        let cut = tail_kernel_branch_cut(k);
        match check_tail_kernel(k, t, reg) {
            Ok(ch) => {
                let ok = ch.rel_err <= 0.02;
                pass &= ok;
                let _ = writeln!(
                    s,
                    "{k:>3} {:>24} {:>24} {:>24} {:>10.3e}  {}",
                    c(ch.formula),
                    c(ch.numeric),
                    c(ch.branch_cut),
                    ch.rel_err,
                    status(ok)
                );
            }
            Err(_) => {
                let e = (numeric - cut).norm() / cut.norm();
                let _ = writeln!(s, "{k:>3} {:>24} {:>24} {:>24} {:>10.3e}  vs branch cut", "undefined", c(numeric), c(cut), e);
            }
        }
    }
    let _ = writeln!(s, "b-ODE (rho d_rho - 1)u = f");
    let solves: [(&str, f64, f64); 3] = [("rho^2", 2.0, 1.0), ("rho^3", 3.0, 0.5), ("rho^2.5", 2.5, 1.0 / 1.5)];
    for (label, alpha, want) in solves {
        let g = LogGridFunction::real(1.0, 1e-6, 2000, |r| r.powf(alpha))?;
        let u = solve_bode(&g, alpha)?;
        let err = u
            .rho
            .iter()
            .zip(&u.values)
            .map(|(r, v)| (v.re / r.powf(alpha) - want).abs() / want)
            .fold(0.0, f64::max);
        let ok = err <= 1e-8;
        pass &= ok;
        let _ = writeln!(s, "  solve f = {label:<12} u = {want:.6} f  max rel err {err:.2e}  {}", status(ok));
    }
    let leads: [(&str, f64, f64, Box<dyn Fn(f64) -> f64>); 2] = [
        ("rho^2 e^-rho", 60.0, 1.0, Box::new(|r: f64| r * r * (-r).exp())),
        ("rho^3 on (0,1]", 1.0, 0.5, Box::new(|r: f64| r.powi(3))),
    ];
    for (label, rho_max, want, f) in leads {
        let g = LogGridFunction::real(rho_max, 1e-6, 4000, f)?;
        let got = bode_leading(&g)?.re;
        let ok = (got - want).abs() <= 1e-8;
        pass &= ok;
        let _ = writeln!(s, "  leading f = {label:<15} g = {got:.10} (expected {want})  {}", status(ok));
    }
    let l = umod_unit_log_coefficient()?;
    let ok = (l - 1.0).abs() <= 0.02;
    pass &= ok;
    let _ = writeln!(s, "log coefficient of the model solution for f = 1: {l:.6}  {}", status(ok));
    Ok((s, pass))
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
