//! Convergence, robustness and cavity studies with CSV and plot-data output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;

use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::forms::{error_norms, Mode, DATA_DEGREE_EXTRA};
use crate::mesh::{Family, Vec2};
use crate::problems::{Cavity, Kovasznay, Rotation};
use crate::solver::{ptc_newton_solve, NewtonPTCState, Potential, Problem, SolveStatus, SolverConfig};

/// Header of the report CSV.
pub const CSV_HEADER: &str = "level,N_dof,h,err_energy,eoc_energy,err_u_l2,eoc_u,err_p_l2,eoc_p,iters,seconds";

/// Estimated orders of convergence between successive levels; `None` for the
/// first level and wherever an error or mesh size is not positive.
pub fn compute_eoc(errors: &[f64], h: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; errors.len().min(h.len())];
    for i in 1..out.len() {
        let (e0, e1, h0, h1) = (errors[i - 1], errors[i], h[i - 1], h[i]);
        if e0 > 0.0 && e1 > 0.0 && h0 > 0.0 && h1 > 0.0 && h0 != h1 {
            out[i] = Some((e0 / e1).ln() / (h0 / h1).ln());
        }
    }
    out
}

/// Formats an EOC value, with `--` for undefined entries.
pub fn format_eoc(eoc: Option<f64>) -> String {
    eoc.map_or_else(|| "--".to_string(), |v| format!("{v:.3}"))
}

/// One refinement level of a study.
#[derive(Debug, Clone)]
pub struct LevelRow {
    pub level: usize,
    pub n_dof: usize,
    /// Size of the statically condensed system.
    pub n_condensed: usize,
    pub h: f64,
    pub err_energy: f64,
    pub err_u_l2: f64,
    pub err_p_l2: f64,
    pub iters: usize,
    pub seconds: f64,
    pub status: SolveStatus,
}

/// Result table of a study with its metadata.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub name: String,
    pub k: usize,
    pub nu: f64,
    pub lambda: f64,
    pub family: Family,
    pub mode: Mode,
    pub version: String,
    pub rows: Vec<LevelRow>,
}

impl ExperimentReport {
    fn new(name: &str, k: usize, nu: f64, lambda: f64, family: Family, mode: Mode) -> Self {
        ExperimentReport {
            name: name.to_string(),
            k,
            nu,
            lambda,
            family,
            mode,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rows: Vec::new(),
        }
    }

    fn column(&self, f: impl Fn(&LevelRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn eoc_energy(&self) -> Vec<Option<f64>> {
        compute_eoc(&self.column(|r| r.err_energy), &self.column(|r| r.h))
    }

    pub fn eoc_u(&self) -> Vec<Option<f64>> {
        compute_eoc(&self.column(|r| r.err_u_l2), &self.column(|r| r.h))
    }

    pub fn eoc_p(&self) -> Vec<Option<f64>> {
        compute_eoc(&self.column(|r| r.err_p_l2), &self.column(|r| r.h))
    }

    /// True when some level neither converged nor stalled at round-off.
    pub fn any_nonconverged(&self) -> bool {
        self.rows.iter().any(|r| !matches!(r.status, SolveStatus::Converged | SolveStatus::Stagnated))
    }

    pub fn metadata(&self) -> String {
        format!(
            "study={} k={} nu={} lambda={:e} family={} mode={} version={}",
            self.name, self.k, self.nu, self.lambda, self.family, self.mode, self.version
        )
    }

    pub fn to_csv(&self) -> String {
        let (ee, eu, ep) = (self.eoc_energy(), self.eoc_u(), self.eoc_p());
        let mut s = format!("{CSV_HEADER}\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{:.6e},{:.6e},{},{:.6e},{},{:.6e},{},{},{:.3}",
                r.level,
                r.n_dof,
                r.h,
                r.err_energy,
                format_eoc(ee[i]),
                r.err_u_l2,
                format_eoc(eu[i]),
                r.err_p_l2,
                format_eoc(ep[i]),
                r.iters,
                r.seconds
            );
        }
        s
    }

    /// Whitespace-separated table for gnuplot.
    pub fn to_dat(&self) -> String {
        let mut s = format!("# {}\n# level N_dof N_condensed h err_energy err_u_l2 err_p_l2 iters status\n", self.metadata());
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{} {} {} {:.6e} {:.6e} {:.6e} {:.6e} {} {:?}",
                r.level,
                r.n_dof,
                r.n_condensed,
                r.h,
                r.err_energy,
                r.err_u_l2,
                r.err_p_l2,
                r.iters,
                r.status
            );
        }
        s
    }

    /// Writes `<name>.csv` and `<name>.dat` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.csv", self.name)), self.to_csv())?;
        fs::write(dir.join(format!("{}.dat", self.name)), self.to_dat())?;
        Ok(())
    }
}

/// Settings shared by the refinement studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub k: usize,
    pub family: Family,
    pub levels: usize,
    /// Cells per direction on the first level; doubled at every level.
    pub base_n: usize,
    pub solver: SolverConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { k: 1, family: Family::Cartesian, levels: 4, base_n: 10, solver: SolverConfig::default() }
    }
}

impl StudyConfig {
    pub fn resolution(&self, level: usize) -> usize {
        self.base_n << (level - 1)
    }
}

/// Solution of one level together with its discretization.
pub struct LevelSolution {
    pub disc: Discretization,
    pub state: NewtonPTCState,
    pub n_condensed: usize,
    pub seconds: f64,
}

/// Solves `problem` on a discretization.
pub fn solve_level(disc: Discretization, problem: &Problem, solver: &SolverConfig) -> Result<LevelSolution> {
    let start = Instant::now();
    let state = ptc_newton_solve(&disc, problem, solver)?;
    let seconds = start.elapsed().as_secs_f64();
    let n_condensed = state.condensed_size;
    Ok(LevelSolution { disc, state, n_condensed, seconds })
}

/// Closed-form size of the condensed system with Dirichlet data on the whole
/// boundary.
pub fn condensed_size(disc: &Discretization) -> usize {
    disc.mesh.num_interior_faces() * disc.n_face_block() + disc.mesh.num_cells() + 1
}

#[allow(clippy::too_many_arguments)]
fn study(
    name: &str,
    cfg: &StudyConfig,
    nu: f64,
    lambda: f64,
    problem: &Problem,
    rect: crate::mesh::Rect,
    velocity: impl Fn(&Vec2) -> Vec2 + Sync,
    pressure: impl Fn(&Vec2) -> f64 + Sync,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(name, cfg.k, nu, lambda, cfg.family, cfg.solver.mode);
    let degree = 2 * cfg.k + DATA_DEGREE_EXTRA;
    for level in 1..=cfg.levels {
        let mesh = cfg.family.generate(cfg.resolution(level), rect)?;
        let disc = Discretization::new(mesh, cfg.k)?;
        let sol = solve_level(disc, problem, &cfg.solver)?;
        let d = &sol.disc;
        let ui = d.interpolate(&velocity, degree);
        let pi = d.project_pressure(&pressure, degree);
        let e = error_norms(d, nu, &sol.state.u, &sol.state.p, &ui, &pi);
        if !sol.state.acceptable() {
            log::warn!("{name} level {level}: {:?} after {} iterations", sol.state.status, sol.state.iterations);
        }
        report.rows.push(LevelRow {
            level,
            n_dof: d.n_dof_reported(),
            n_condensed: sol.n_condensed,
            h: d.mesh.h(),
            err_energy: e.energy,
            err_u_l2: e.l2_velocity,
            err_p_l2: e.l2_pressure,
            iters: sol.state.iterations,
            seconds: sol.seconds,
            status: sol.state.status,
        });
    }
    Ok(report)
}

/// Kovasznay convergence study.
pub fn run_kovasznay(cfg: &StudyConfig) -> Result<ExperimentReport> {
    let kov = Kovasznay::default();
    study("kovasznay", cfg, kov.nu, 0.0, &kov.problem(), kov.domain(), |p| kov.velocity(p), |p| kov.pressure(p))
}

/// Rigid rotation with a large irrotational force.
pub fn run_robustness(cfg: &StudyConfig, lambda: f64) -> Result<ExperimentReport> {
    let rot = Rotation { lambda };
    study("robustness", cfg, Rotation::NU, lambda, &rot.problem(), rot.domain(), Rotation::velocity, |p| rot.pressure(p))
}

/// Settings of a cavity run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityConfig {
    pub reynolds: f64,
    pub lambda: f64,
    pub psi: Potential,
    pub k: usize,
    pub family: Family,
    pub n: usize,
    /// Points per centerline.
    pub samples: usize,
    pub solver: SolverConfig,
}

impl Default for CavityConfig {
    fn default() -> Self {
        CavityConfig { reynolds: 1000.0, lambda: 0.0, psi: Potential::Cubic, k: 1, family: Family::Cartesian, n: 16, samples: 101, solver: SolverConfig::default() }
    }
}

/// Centerline velocity profiles of a cavity run.
pub struct CavityResult {
    pub solution: LevelSolution,
    /// `(y, u_1(1/2, y))`.
    pub vertical: Vec<(f64, f64)>,
    /// `(x, u_2(x, 1/2))`.
    pub horizontal: Vec<(f64, f64)>,
}

impl CavityResult {
    /// Whitespace-separated profiles for gnuplot.
    pub fn to_dat(&self, cfg: &CavityConfig) -> String {
        let mut s = format!(
            "# cavity Re={} lambda={:e} psi={} k={} family={} n={} mode={} iters={} status={:?}\n# s u1(0.5,s) u2(s,0.5)\n",
            cfg.reynolds, cfg.lambda, cfg.psi, cfg.k, cfg.family, cfg.n, cfg.solver.mode, self.solution.state.iterations, self.solution.state.status
        );
        for ((y, u1), (_, u2)) in self.vertical.iter().zip(&self.horizontal) {
            let _ = writeln!(s, "{y:.6} {u1:.10e} {u2:.10e}");
        }
        s
    }
}

/// Cell velocity of `u` at `p`.
pub fn cell_velocity(disc: &Discretization, u: &DVector<f64>, p: &Vec2) -> Result<Vec2> {
    let (c, _) = disc.mesh.locate(p).ok_or_else(|| Error::Config(format!("point ({}, {}) outside the mesh", p.x, p.y)))?;
    Ok(disc.ops[c].eval_cell(&disc.gather(c, u), p))
}

/// Lid-driven cavity run with centerline profiles.
pub fn run_cavity(cfg: &CavityConfig) -> Result<CavityResult> {
    if cfg.samples < 2 {
        return Err(Error::Config("at least two samples per centerline are required".into()));
    }
    let cav = Cavity { reynolds: cfg.reynolds, lambda: cfg.lambda, psi: cfg.psi };
    let mesh = cfg.family.generate(cfg.n, cav.domain())?;
    let disc = Discretization::new(mesh, cfg.k)?;
    let solution = solve_level(disc, &cav.problem(), &cfg.solver)?;
    let d = &solution.disc;
    let s: Vec<f64> = (0..cfg.samples).map(|i| i as f64 / (cfg.samples - 1) as f64).collect();
    let vertical = s.iter().map(|&y| Ok((y, cell_velocity(d, &solution.state.u, &Vec2::new(0.5, y))?.x))).collect::<Result<_>>()?;
    let horizontal = s.iter().map(|&x| Ok((x, cell_velocity(d, &solution.state.u, &Vec2::new(x, 0.5))?.y))).collect::<Result<_>>()?;
    Ok(CavityResult { solution, vertical, horizontal })
}
