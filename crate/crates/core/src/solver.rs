//! Pseudo-transient continuation Newton solver with static condensation.
//!
//! Unknowns are the hybrid velocity `u`, the cell pressure `p` and a scalar
//! multiplier `mu` enforcing zero pressure mean. The residuals are
//!
//! ```text
//! F_u  = nu A u + T(u) + B^T p - l
//! F_p  = B u + m mu
//! F_mu = m^T p
//! ```
//!
//! with `m` the mean functional. Boundary face velocities are fixed to the
//! projection of the Dirichlet datum and never updated.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::SegmentBasis;
use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::forms::{body_force_local, convection_linearization, Mode, DATA_DEGREE_EXTRA};
use crate::mesh::Vec2;
use crate::sparse::{LowRankUpdatedLu, SparseMatrix};

/// Nonlinear solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Initial pseudo-time step; `f64::INFINITY` gives plain Newton.
    pub dt0: f64,
    pub dt_max: f64,
    /// Threshold on the Euclidean norm of the momentum residual.
    pub stop_tol: f64,
    pub max_iter: usize,
    /// Residual growth over the best value seen that flags divergence.
    pub divergence_factor: f64,
    pub mode: Mode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { dt0: 1e-2, dt_max: 1e12, stop_tol: 1e-11, max_iter: 200, divergence_factor: 1e4, mode: Mode::Robust }
    }
}

/// Scalar potential of an irrotational forcing `lambda grad psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Potential {
    /// `psi = (x^3 + y^3) / 3`.
    Cubic,
    /// `psi = x^3`.
    CubeX,
}

impl Potential {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "poly:cubic" => Ok(Potential::Cubic),
            "poly:x3" => Ok(Potential::CubeX),
            other => Err(Error::Config(format!("unknown potential '{other}' (expected poly:cubic or poly:x3)"))),
        }
    }

    pub fn value(&self, p: &Vec2) -> f64 {
        match self {
            Potential::Cubic => (p.x.powi(3) + p.y.powi(3)) / 3.0,
            Potential::CubeX => p.x.powi(3),
        }
    }

    pub fn gradient(&self, p: &Vec2) -> Vec2 {
        match self {
            Potential::Cubic => Vec2::new(p.x * p.x, p.y * p.y),
            Potential::CubeX => Vec2::new(3.0 * p.x * p.x, 0.0),
        }
    }

    pub fn degree(&self) -> usize {
        3
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Potential::Cubic => "poly:cubic",
            Potential::CubeX => "poly:x3",
        })
    }
}

/// Run configuration read from `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub k: usize,
    /// Viscosity; `None` keeps the problem default.
    pub nu: Option<f64>,
    /// Force scaling; `None` keeps the run default.
    pub lambda: Option<f64>,
    pub psi: Option<Potential>,
    pub solver: SolverConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config { k: 1, nu: None, lambda: None, psi: None, solver: SolverConfig::default() }
    }
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
        }
        match key {
            "k" => self.k = num(key, value)?,
            "nu" => self.nu = Some(num(key, value)?),
            "dt0" => self.solver.dt0 = if value == "inf" { f64::INFINITY } else { num(key, value)? },
            "stop_tol" => self.solver.stop_tol = num(key, value)?,
            "max_iter" => self.solver.max_iter = num(key, value)?,
            "mode" => self.solver.mode = value.parse()?,
            "lambda" => self.lambda = Some(num(key, value)?),
            "psi" => self.psi = Some(Potential::parse(value)?),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        if self.solver.dt0.is_nan() || self.solver.dt0 <= 0.0 {
            return Err(Error::Config("dt0 must be positive".into()));
        }
        Ok(())
    }
}

type Field = Box<dyn Fn(&Vec2) -> Vec2 + Send + Sync>;

/// Data of a steady incompressible flow problem with Dirichlet conditions.
pub struct Problem {
    pub nu: f64,
    pub force: Field,
    pub dirichlet: Field,
    /// Whether the convective term is present.
    pub convective: bool,
}

impl Problem {
    pub fn new(nu: f64, force: impl Fn(&Vec2) -> Vec2 + Send + Sync + 'static, dirichlet: impl Fn(&Vec2) -> Vec2 + Send + Sync + 'static) -> Self {
        Problem { nu, force: Box::new(force), dirichlet: Box::new(dirichlet), convective: true }
    }

    pub fn stokes(mut self) -> Self {
        self.convective = false;
        self
    }
}

/// Sets boundary face velocities to the face projection of `g`.
pub fn apply_dirichlet(disc: &Discretization, u: &mut DVector<f64>, g: &(dyn Fn(&Vec2) -> Vec2 + Sync)) {
    let mesh = &disc.mesh;
    let mk = disc.k + 1;
    let degree = 2 * disc.k + DATA_DEGREE_EXTRA;
    for f in mesh.boundary_faces() {
        let basis = SegmentBasis::on_face(mesh, f, disc.k);
        let gx = basis.project(degree, |p| g(p).x);
        let gy = basis.project(degree, |p| g(p).y);
        let o = disc.face_offset(f);
        for j in 0..mk {
            u[o + j] = gx[j];
            u[o + mk + j] = gy[j];
        }
    }
}

/// Converged or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Residual grew past the divergence factor over the best value.
    Diverged,
    /// Residual stalled at a floating-point floor above `stop_tol` after a
    /// reduction by at least `STAGNATION_REDUCTION`.
    Stagnated,
    MaxIterations,
}

/// Relative reduction below which a stalled residual counts as round-off.
pub const STAGNATION_REDUCTION: f64 = 1e-12;
/// Iterations without a new best residual before stalling is reported.
pub const STAGNATION_WINDOW: usize = 5;

/// Residual norms recorded before each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRecord {
    pub momentum: f64,
    pub mass: f64,
    pub dt: f64,
}

/// State of the pseudo-transient Newton iteration.
#[derive(Debug, Clone)]
pub struct NewtonPTCState {
    pub u: DVector<f64>,
    pub p: DVector<f64>,
    pub mu: f64,
    pub dt: f64,
    pub history: Vec<ResidualRecord>,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Size of the condensed linear systems.
    pub condensed_size: usize,
}

impl NewtonPTCState {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Converged, or stalled at round-off level.
    pub fn acceptable(&self) -> bool {
        matches!(self.status, SolveStatus::Converged | SolveStatus::Stagnated)
    }

    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::INFINITY, |r| r.momentum)
    }
}

/// Nonlinear residual and Newton matrices of the discrete problem.
pub struct Residual<'a> {
    pub disc: &'a Discretization,
    pub problem: &'a Problem,
    pub mode: Mode,
    /// Local body-force vectors.
    load: Vec<DVector<f64>>,
    free: Vec<bool>,
    /// Mean functional weight `sqrt|T|` per cell.
    mean: Vec<f64>,
}

/// Per-cell local Newton data in the ordering `[velocity | pressure]`.
struct CellSystem {
    jac: DMatrix<f64>,
    res: DVector<f64>,
}

/// Residual vectors of the three equations.
#[derive(Debug, Clone)]
pub struct ResidualVectors {
    pub momentum: DVector<f64>,
    pub mass: DVector<f64>,
    pub mean: f64,
}

impl<'a> Residual<'a> {
    pub fn new(disc: &'a Discretization, problem: &'a Problem, mode: Mode) -> Self {
        let load = (0..disc.mesh.num_cells()).into_par_iter().map(|c| body_force_local(disc, c, &problem.force, mode)).collect();
        let free = disc.boundary_mask().into_iter().map(|b| !b).collect();
        let mean = disc.mesh.cells.iter().map(|c| c.area.sqrt()).collect();
        Residual { disc, problem, mode, load, free, mean }
    }

    /// True for velocity unknowns that are not fixed by boundary data.
    pub fn free(&self) -> &[bool] {
        &self.free
    }

    fn cell_system(&self, c: usize, u: &DVector<f64>, p: &DVector<f64>) -> CellSystem {
        let d = self.disc;
        let ops = &d.ops[c];
        let n = ops.n_dofs();
        let nk = d.nk();
        let ul = d.gather(c, u);
        let pl = d.pressure_block(c, p);
        let nu = self.problem.nu;
        let mut jac = DMatrix::zeros(n + nk, n + nk);
        jac.view_mut((0, 0), (n, n)).copy_from(&(&ops.viscous * nu));
        let mut ru = &ops.viscous * &ul * nu - &self.load[c] - ops.div.transpose() * &pl;
        if self.problem.convective {
            let (tr, tj) = convection_linearization(d, c, &ul, self.mode);
            ru += tr;
            let mut v = jac.view_mut((0, 0), (n, n));
            v += tj;
        }
        jac.view_mut((0, n), (n, nk)).copy_from(&(-ops.div.transpose()));
        jac.view_mut((n, 0), (nk, n)).copy_from(&(-&ops.div));
        let rp = -(&ops.div * &ul);
        let mut res = DVector::zeros(n + nk);
        res.rows_mut(0, n).copy_from(&ru);
        res.rows_mut(n, nk).copy_from(&rp);
        CellSystem { jac, res }
    }

    fn cell_systems(&self, u: &DVector<f64>, p: &DVector<f64>, inv_dt: f64) -> Vec<CellSystem> {
        let ncb = self.disc.n_cell_block();
        (0..self.disc.mesh.num_cells())
            .into_par_iter()
            .map(|c| {
                let mut sys = self.cell_system(c, u, p);
                for i in 0..ncb {
                    sys.jac[(i, i)] += inv_dt;
                }
                sys
            })
            .collect()
    }

    fn gather_residual(&self, locals: &[CellSystem], p: &DVector<f64>, mu: f64) -> ResidualVectors {
        let d = self.disc;
        let nk = d.nk();
        let mut fu = DVector::zeros(d.n_velocity());
        let mut fp = DVector::zeros(d.n_pressure());
        for (c, sys) in locals.iter().enumerate() {
            let idx = d.local_to_global(c);
            for (l, &g) in idx.iter().enumerate() {
                fu[g] += sys.res[l];
            }
            for i in 0..nk {
                fp[c * nk + i] = sys.res[idx.len() + i];
            }
            fp[c * nk] += self.mean[c] * mu;
        }
        for (g, &free) in self.free.iter().enumerate() {
            if !free {
                fu[g] = 0.0;
            }
        }
        let fm = (0..d.mesh.num_cells()).map(|c| self.mean[c] * p[c * nk]).sum();
        ResidualVectors { momentum: fu, mass: fp, mean: fm }
    }

    /// Residual of the three equations at `(u, p, mu)`.
    pub fn evaluate(&self, u: &DVector<f64>, p: &DVector<f64>, mu: f64) -> ResidualVectors {
        self.gather_residual(&self.cell_systems(u, p, 0.0), p, mu)
    }

    /// Uncondensed Newton matrix over `[free velocity | pressure | mu]` and
    /// the right-hand side `-F`.
    pub fn full_system(&self, u: &DVector<f64>, p: &DVector<f64>, mu: f64, inv_dt: f64) -> Result<(SparseMatrix, DVector<f64>, Vec<usize>)> {
        let d = self.disc;
        let nk = d.nk();
        let mut index = vec![usize::MAX; d.n_velocity()];
        let mut velocity = Vec::new();
        for (g, &free) in self.free.iter().enumerate() {
            if free {
                index[g] = velocity.len();
                velocity.push(g);
            }
        }
        let nv = velocity.len();
        let n = nv + d.n_pressure() + 1;
        let locals = self.cell_systems(u, p, inv_dt);
        let mut trips = Vec::new();
        for (c, sys) in locals.iter().enumerate() {
            let mut map: Vec<usize> = d.local_to_global(c).into_iter().map(|g| index[g]).collect();
            map.extend((0..nk).map(|i| nv + c * nk + i));
            for (j, &gj) in map.iter().enumerate() {
                for (i, &gi) in map.iter().enumerate() {
                    if gi != usize::MAX && gj != usize::MAX && sys.jac[(i, j)] != 0.0 {
                        trips.push((gi, gj, sys.jac[(i, j)]));
                    }
                }
            }
            trips.push((nv + c * nk, n - 1, self.mean[c]));
            trips.push((n - 1, nv + c * nk, self.mean[c]));
        }
        let r = self.gather_residual(&locals, p, mu);
        let mut rhs = DVector::zeros(n);
        for (i, &g) in velocity.iter().enumerate() {
            rhs[i] = -r.momentum[g];
        }
        rhs.rows_mut(nv, d.n_pressure()).copy_from(&(-&r.mass));
        rhs[n - 1] = -r.mean;
        Ok((SparseMatrix::from_triplets(n, n, trips)?, rhs, velocity))
    }

    /// Newton update from the statically condensed system.
    pub fn condensed_step(&self, u: &DVector<f64>, p: &DVector<f64>, mu: f64, inv_dt: f64) -> Result<NewtonUpdate> {
        self.condensed_step_with(u, p, mu, |_| inv_dt)
    }

    /// Newton update where the inverse pseudo-time step is chosen from the
    /// residual at the current state.
    pub fn condensed_step_with(&self, u: &DVector<f64>, p: &DVector<f64>, mu: f64, inv_dt: impl FnOnce(&ResidualVectors) -> f64) -> Result<NewtonUpdate> {
        let d = self.disc;
        let nk = d.nk();
        let ncell = d.mesh.num_cells();
        let ncb = d.n_cell_block();
        // retained numbering: free face dofs, then one pressure per cell, then mu
        let mut index = vec![usize::MAX; d.n_velocity()];
        let mut nr = 0;
        for (g, &free) in self.free.iter().enumerate() {
            if free && g >= d.face_offset(0) {
                index[g] = nr;
                nr += 1;
            }
        }
        let n_faces_free = nr;
        let n = n_faces_free + ncell + 1;

        let mut locals = self.cell_systems(u, p, 0.0);
        let res = self.gather_residual(&locals, p, mu);
        let inv_dt = inv_dt(&res);
        let blocks: Vec<Result<CondensedCell>> = locals
            .par_iter_mut()
            .enumerate()
            .map(|(c, sys)| {
                for i in 0..ncb {
                    sys.jac[(i, i)] += inv_dt;
                }
                let idx = d.local_to_global(c);
                let nl = idx.len();
                let interior: Vec<usize> = (0..ncb).chain(nl + 1..nl + nk).collect();
                let retained: Vec<usize> = (ncb..nl).filter(|&l| index[idx[l]] != usize::MAX).chain([nl]).collect();
                let global: Vec<usize> = retained.iter().map(|&l| if l == nl { n_faces_free + c } else { index[idx[l]] }).collect();
                let kii = sys.jac.select_rows(&interior).select_columns(&interior);
                let kir = sys.jac.select_rows(&interior).select_columns(&retained);
                let kri = sys.jac.select_rows(&retained).select_columns(&interior);
                let krr = sys.jac.select_rows(&retained).select_columns(&retained);
                let fi = sys.res.select_rows(&interior);
                let fr = sys.res.select_rows(&retained);
                let lu = kii.lu();
                let x = lu.solve(&kir).ok_or(Error::SingularCellBlock(c))?;
                let y = lu.solve(&fi).ok_or(Error::SingularCellBlock(c))?;
                if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
                    return Err(Error::SingularCellBlock(c));
                }
                let schur = krr - &kri * &x;
                let rhs = -fr + &kri * &y;
                Ok(CondensedCell { interior, retained, global, x, y, schur, rhs })
            })
            .collect();
        let blocks: Vec<CondensedCell> = blocks.into_iter().collect::<Result<_>>()?;

        let mut trips = Vec::new();
        let mut rhs = DVector::zeros(n);
        for (c, b) in blocks.iter().enumerate() {
            for (j, &gj) in b.global.iter().enumerate() {
                for (i, &gi) in b.global.iter().enumerate() {
                    if b.schur[(i, j)] != 0.0 {
                        trips.push((gi, gj, b.schur[(i, j)]));
                    }
                }
                rhs[gj] += b.rhs[j];
            }
            // the mean functional couples to every cell; only the first cell
            // enters the sparse matrix, the rest is a rank-two update
            if c == 0 {
                trips.push((n_faces_free, n - 1, self.mean[0]));
                trips.push((n - 1, n_faces_free, self.mean[0]));
            }
            // the multiplier term of the mass residual is not part of the local system
            rhs[n_faces_free + c] -= self.mean[c] * mu;
        }
        rhs[n - 1] = -res.mean;
        let matrix = SparseMatrix::from_triplets(n, n, trips)?;
        let mut border = DVector::zeros(n);
        for c in 1..ncell {
            border[n_faces_free + c] = self.mean[c];
        }
        let mut last = DVector::zeros(n);
        last[n - 1] = 1.0;
        let solver = LowRankUpdatedLu::new(matrix.lu()?, vec![border.clone(), last.clone()], vec![last, border])?;
        let sol = solver.solve(&rhs)?;

        let mut du = DVector::zeros(d.n_velocity());
        let mut dp = DVector::zeros(d.n_pressure());
        for (g, &r) in index.iter().enumerate() {
            if r != usize::MAX {
                du[g] = sol[r];
            }
        }
        for (c, b) in blocks.iter().enumerate() {
            let dr = DVector::from_iterator(b.global.len(), b.global.iter().map(|&g| sol[g]));
            let di = -(&b.y + &b.x * dr);
            let nl = d.ops[c].n_dofs();
            for (i, &l) in b.interior.iter().enumerate() {
                if l < nl {
                    du[d.cell_offset(c) + l] = di[i];
                } else {
                    dp[c * nk + l - nl] = di[i];
                }
            }
            dp[c * nk] = sol[n_faces_free + c];
        }
        Ok(NewtonUpdate { du, dp, dmu: sol[n - 1], retained: n, residual: res })
    }
}

struct CondensedCell {
    interior: Vec<usize>,
    #[allow(dead_code)]
    retained: Vec<usize>,
    global: Vec<usize>,
    /// `K_II^{-1} K_IR`.
    x: DMatrix<f64>,
    /// `K_II^{-1} F_I`.
    y: DVector<f64>,
    schur: DMatrix<f64>,
    rhs: DVector<f64>,
}

/// Newton increment and the residual it was computed from.
#[derive(Debug, Clone)]
pub struct NewtonUpdate {
    pub du: DVector<f64>,
    pub dp: DVector<f64>,
    pub dmu: f64,
    /// Size of the condensed system.
    pub retained: usize,
    pub residual: ResidualVectors,
}

/// Solves the discrete problem by pseudo-transient continuation with the
/// SER time-step update, starting from zero with the Dirichlet lift.
pub fn ptc_newton_solve(disc: &Discretization, problem: &Problem, config: &SolverConfig) -> Result<NewtonPTCState> {
    let mut u = DVector::zeros(disc.n_velocity());
    apply_dirichlet(disc, &mut u, &problem.dirichlet);
    let p = DVector::zeros(disc.n_pressure());
    ptc_newton_solve_from(disc, problem, config, u, p)
}

/// Same as [`ptc_newton_solve`] from a given initial state; boundary face
/// velocities of `u` are kept.
pub fn ptc_newton_solve_from(disc: &Discretization, problem: &Problem, config: &SolverConfig, mut u: DVector<f64>, mut p: DVector<f64>) -> Result<NewtonPTCState> {
    let res = Residual::new(disc, problem, config.mode);
    let mut mu = 0.0;
    let mut dt = config.dt0;
    let mut history: Vec<ResidualRecord> = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut condensed_size;
    log::info!(
        "ptc newton: mode={} dt0={:e} dt_max={:e} mass term on cell dofs, stop_tol={:e}",
        config.mode, config.dt0, config.dt_max, config.stop_tol
    );
    loop {
        let mut record = ResidualRecord { momentum: 0.0, mass: 0.0, dt };
        let step = res.condensed_step_with(&u, &p, mu, |r| {
            let rm = r.momentum.norm();
            // SER: scale the step by the residual reduction of the last update
            if let Some(prev) = history.last() {
                if dt.is_finite() {
                    dt = (dt * prev.momentum / rm).clamp(config.dt0, config.dt_max.max(config.dt0));
                }
            }
            record = ResidualRecord { momentum: rm, mass: (r.mass.norm_squared() + r.mean.powi(2)).sqrt(), dt };
            if dt.is_finite() { 1.0 / dt } else { 0.0 }
        })?;
        let rm = record.momentum;
        condensed_size = step.retained;
        history.push(record);
        log::debug!("iter {iterations}: |F_u| = {rm:.3e}, |F_p| = {:.3e}, dt = {dt:.3e}", record.mass);
        if rm < config.stop_tol {
            status = SolveStatus::Converged;
            break;
        }
        if !rm.is_finite() || rm > config.divergence_factor * best {
            status = SolveStatus::Diverged;
            break;
        }
        if rm < best {
            best = rm;
            since_best = 0;
        } else {
            since_best += 1;
        }
        let initial = history[0].momentum;
        if since_best >= STAGNATION_WINDOW && best <= STAGNATION_REDUCTION * initial {
            status = SolveStatus::Stagnated;
            break;
        }
        if iterations >= config.max_iter {
            break;
        }
        u += &step.du;
        p += &step.dp;
        mu += step.dmu;
        iterations += 1;
    }
    Ok(NewtonPTCState { u, p, mu, dt, history, iterations, status, condensed_size })
}
