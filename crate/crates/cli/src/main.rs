//! Command-line runner for the benchmark studies.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use polyhho::bench::{run_cavity, run_kovasznay, run_robustness, CavityConfig, StudyConfig};
use polyhho::forms::Mode;
use polyhho::mesh::Family;
use polyhho::solver::{Config, Potential};

#[derive(Parser)]
#[command(name = "polyhho", version, about = "Pressure-robust HHO Navier-Stokes benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kovasznay flow convergence study.
    Kovasznay {
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Rigid rotation with the irrotational force lambda grad(x^3).
    Robustness {
        #[command(flatten)]
        study: StudyArgs,
        /// Force scaling [default: config value, else 1e6].
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Lid-driven cavity with centerline profiles.
    Cavity {
        #[command(flatten)]
        common: CommonArgs,
        /// Reynolds number [default: 1/nu from the config, else 1000].
        #[arg(long)]
        re: Option<f64>,
        /// Force scaling [default: config value, else 0].
        #[arg(long)]
        lambda: Option<f64>,
        /// Cells per direction.
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Sample points per centerline.
        #[arg(long, default_value_t = 101)]
        samples: usize,
    },
    /// Runs the operator invariant checks on small meshes of every family.
    Proptest {
        /// Random samples per check.
        #[arg(long, default_value_t = 20)]
        cases: usize,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Solver configuration file with key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "cartesian")]
    family: Family,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Cells per direction on the coarsest level.
    #[arg(long, default_value_t = 10)]
    base: usize,
}

impl CommonArgs {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => Config::default(),
        };
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(mode) = self.mode {
            cfg.solver.mode = mode;
        }
        if let Some(m) = self.max_iter {
            cfg.solver.max_iter = m;
        }
        Ok(cfg)
    }
}

impl StudyArgs {
    fn study(&self) -> Result<StudyConfig> {
        let cfg = self.common.config()?;
        Ok(StudyConfig { k: cfg.k, family: self.common.family, levels: self.levels, base_n: self.base, solver: cfg.solver })
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Kovasznay { study } => {
            let report = run_kovasznay(&study.study()?)?;
            report.write(&study.common.out)?;
            println!("# {}\n{}", report.metadata(), report.to_csv());
            Ok(!report.any_nonconverged())
        }
        Command::Robustness { study, lambda } => {
            let lambda = lambda.or(study.common.config()?.lambda).unwrap_or(1e6);
            let report = run_robustness(&study.study()?, lambda)?;
            report.write(&study.common.out)?;
            println!("# {}\n{}", report.metadata(), report.to_csv());
            Ok(!report.any_nonconverged())
        }
        Command::Cavity { common, re, lambda, n, samples } => {
            let cfg = common.config()?;
            let re = re.or(cfg.nu.map(|nu| 1.0 / nu)).unwrap_or(1000.0);
            let lambda = lambda.or(cfg.lambda).unwrap_or(0.0);
            let psi = cfg.psi.unwrap_or(Potential::Cubic);
            let cc = CavityConfig { reynolds: re, lambda, psi, k: cfg.k, family: common.family, n, samples, solver: cfg.solver };
            let result = run_cavity(&cc)?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join(format!("cavity_re{re}_lambda{lambda:e}_{}.dat", cc.solver.mode));
            std::fs::write(&path, result.to_dat(&cc))?;
            let st = &result.solution.state;
            println!(
                "cavity Re={re} lambda={lambda:e} mode={}: {:?} after {} iterations, residual {:.3e}, profiles in {}",
                cc.solver.mode,
                st.status,
                st.iterations,
                st.final_residual(),
                path.display()
            );
            Ok(st.acceptable())
        }
        Command::Proptest { cases } => {
            let failures = polyhho::checks::run_all(cases)?;
            for line in &failures.lines {
                println!("{line}");
            }
            anyhow::ensure!(failures.failed == 0, "{} invariant checks failed", failures.failed);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: the nonlinear solver did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
