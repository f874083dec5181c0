//! Global viscous, coupling, body-force and convective forms, and error norms.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::mesh::{SimplexEdge, Vec2};
use crate::quadrature::{face_points, simplex_points};
use crate::sparse::SparseMatrix;

/// Extra quadrature degree used for non-polynomial data.
pub const DATA_DEGREE_EXTRA: usize = 6;

/// Velocity test functions used by the body force and the convective term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Divergence-preserving reconstruction `R_h`.
    #[default]
    Robust,
    /// Cell unknowns `v_T`, as in the original HHO scheme.
    Classic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Robust => "robust",
            Mode::Classic => "classic",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "robust" => Ok(Mode::Robust),
            "classic" => Ok(Mode::Classic),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected robust or classic)"))),
        }
    }
}

fn scatter_square(disc: &Discretization, locals: Vec<DMatrix<f64>>) -> Result<SparseMatrix> {
    let mut trips = Vec::new();
    for (c, loc) in locals.into_iter().enumerate() {
        let idx = disc.local_to_global(c);
        for (j, &gj) in idx.iter().enumerate() {
            for (i, &gi) in idx.iter().enumerate() {
                let v = loc[(i, j)];
                if v != 0.0 {
                    trips.push((gi, gj, v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(disc.n_velocity(), disc.n_velocity(), trips)
}

/// Viscous matrix `A = sum_T (G_T^T G_T + S_T)` (without the viscosity).
pub fn assemble_viscous(disc: &Discretization) -> Result<SparseMatrix> {
    scatter_square(disc, disc.ops.iter().map(|o| o.viscous.clone()).collect())
}

/// Coupling matrix with `q^T B v = b_h(v, q) = -sum_T int_T D_T v q`.
pub fn assemble_coupling(disc: &Discretization) -> Result<SparseMatrix> {
    let nk = disc.nk();
    let mut trips = Vec::new();
    for (c, ops) in disc.ops.iter().enumerate() {
        let idx = disc.local_to_global(c);
        for i in 0..nk {
            for (j, &g) in idx.iter().enumerate() {
                let v = ops.div[(i, j)];
                if v != 0.0 {
                    trips.push((c * nk + i, g, -v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(disc.n_pressure(), disc.n_velocity(), trips)
}

/// Velocity test functions of cell `c` at `p` (in simplex `s`) as a
/// `2 x n_local` matrix.
pub fn test_functions(disc: &Discretization, c: usize, s: usize, p: &Vec2, mode: Mode) -> DMatrix<f64> {
    match mode {
        Mode::Robust => disc.recs[c].eval_matrix(s, p),
        Mode::Classic => {
            let ops = &disc.ops[c];
            let l = ops.layout;
            let v = ops.basis.eval(p);
            let mut m = DMatrix::zeros(2, l.len());
            for j in 0..l.nk {
                m[(0, l.cell(0, j))] = v[j];
                m[(1, l.cell(1, j))] = v[j];
            }
            m
        }
    }
}

/// Local body-force vector `int_T f . R_T v` of cell `c`.
pub fn body_force_local(disc: &Discretization, c: usize, f: &(impl Fn(&Vec2) -> Vec2 + Sync), mode: Mode) -> DVector<f64> {
    let mesh = &disc.mesh;
    let n = disc.ops[c].n_dofs();
    let degree = 2 * (disc.k + 1) + DATA_DEGREE_EXTRA;
    let mut out = DVector::zeros(n);
    for (s, simplex) in mesh.cells[c].subtri.simplices.iter().enumerate() {
        for (p, w) in simplex_points(mesh, simplex, degree).iter() {
            let r = test_functions(disc, c, s, p, mode);
            let fv = f(p) * w;
            for j in 0..n {
                out[j] += r[(0, j)] * fv.x + r[(1, j)] * fv.y;
            }
        }
    }
    out
}

/// Global body-force vector `l_h(f, .)`.
pub fn assemble_body_force(disc: &Discretization, f: impl Fn(&Vec2) -> Vec2 + Sync, mode: Mode) -> DVector<f64> {
    let locals: Vec<DVector<f64>> =
        (0..disc.mesh.num_cells()).into_par_iter().map(|c| body_force_local(disc, c, &f, mode)).collect();
    let mut out = DVector::zeros(disc.n_velocity());
    for (c, loc) in locals.iter().enumerate() {
        for (l, g) in disc.local_to_global(c).into_iter().enumerate() {
            out[g] += loc[l];
        }
    }
    out
}

/// Quadrature node of the convective term: weight, test-function matrix and
/// the linear functional giving the antisymmetric gradient kernel.
struct ConvectionNode {
    weight: f64,
    r: DMatrix<f64>,
    kernel: DVector<f64>,
}

fn convection_nodes(disc: &Discretization, c: usize, mode: Mode) -> Vec<ConvectionNode> {
    let mesh = &disc.mesh;
    let ops = &disc.ops[c];
    let l = ops.layout;
    let n = l.len();
    let cell = &mesh.cells[c];
    let degree = 4 * disc.k + 4;
    let nb = ops.basis.dim();
    let (mut v, mut dx, mut dy) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
    let mut nodes = Vec::new();
    for (s, simplex) in cell.subtri.simplices.iter().enumerate() {
        // cell term: kernel d w_1 / dy - d w_2 / dx
        for (p, w) in simplex_points(mesh, simplex, degree).iter() {
            ops.basis.grad_into(p, &mut dx, &mut dy);
            let mut kernel = DVector::zeros(n);
            for j in 0..l.nk {
                kernel[l.cell(0, j)] = dy[j];
                kernel[l.cell(1, j)] = -dx[j];
            }
            nodes.push(ConvectionNode { weight: w, r: test_functions(disc, c, s, p, mode), kernel });
        }
        // face terms: kernel d_1 n_2 - d_2 n_1 with d = w_F - w_T
        for e in simplex.edges {
            let SimplexEdge::Boundary(lf) = e else { continue };
            let nrm = cell.outward_normal(mesh, lf);
            for (p, w) in face_points(mesh, cell.faces[lf], degree).iter() {
                ops.basis.eval_into(p, &mut v);
                let psi = ops.face_bases[lf].eval(p);
                let mut kernel = DVector::zeros(n);
                for j in 0..l.mk() {
                    kernel[l.face(lf, 0, j)] += psi[j] * nrm.y;
                    kernel[l.face(lf, 1, j)] -= psi[j] * nrm.x;
                }
                for j in 0..l.nk {
                    kernel[l.cell(0, j)] -= v[j] * nrm.y;
                    kernel[l.cell(1, j)] += v[j] * nrm.x;
                }
                nodes.push(ConvectionNode { weight: w, r: test_functions(disc, c, s, p, mode), kernel });
            }
        }
    }
    nodes
}

/// `R^T J R` with `J` the quarter-turn `[[0, 1], [-1, 0]]`.
fn skew_outer(r: &DMatrix<f64>, scale: f64, out: &mut DMatrix<f64>) {
    let n = r.ncols();
    for j in 0..n {
        let (r1j, r2j) = (r[(0, j)], r[(1, j)]);
        if r1j == 0.0 && r2j == 0.0 {
            continue;
        }
        for i in 0..n {
            out[(i, j)] += scale * (r[(0, i)] * r2j - r[(1, i)] * r1j);
        }
    }
}

/// Local convective matrix: `t_T(w, v, z) = z^T C(w) v`.
pub fn convection_matrix(disc: &Discretization, c: usize, w: &DVector<f64>, mode: Mode) -> DMatrix<f64> {
    let n = disc.ops[c].n_dofs();
    let mut m = DMatrix::zeros(n, n);
    for node in convection_nodes(disc, c, mode) {
        let kappa = node.kernel.dot(w);
        skew_outer(&node.r, node.weight * kappa, &mut m);
    }
    m
}

/// Local residual `t_T(u, u, .)` and its Jacobian with respect to `u`.
pub fn convection_linearization(disc: &Discretization, c: usize, u: &DVector<f64>, mode: Mode) -> (DVector<f64>, DMatrix<f64>) {
    let n = disc.ops[c].n_dofs();
    let mut jac = DMatrix::zeros(n, n);
    let mut res = DVector::zeros(n);
    for node in convection_nodes(disc, c, mode) {
        let kappa = node.kernel.dot(u);
        skew_outer(&node.r, node.weight * kappa, &mut jac);
        // R^T J R u, then the rank-one derivative in the first slot
        let ru = &node.r * u;
        let jru = [ru[1], -ru[0]];
        let mut g = DVector::zeros(n);
        for i in 0..n {
            g[i] = node.weight * (node.r[(0, i)] * jru[0] + node.r[(1, i)] * jru[1]);
        }
        res.axpy(kappa, &g, 1.0);
        jac.ger(1.0, &g, &node.kernel, 1.0);
    }
    (res, jac)
}

/// Global `t_h(w, v, z)`.
pub fn trilinear_apply(disc: &Discretization, w: &DVector<f64>, v: &DVector<f64>, z: &DVector<f64>, mode: Mode) -> f64 {
    (0..disc.mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let (wl, vl, zl) = (disc.gather(c, w), disc.gather(c, v), disc.gather(c, z));
            zl.dot(&(convection_matrix(disc, c, &wl, mode) * vl))
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Global residual vector `t_h(u, u, .)`.
pub fn trilinear_residual(disc: &Discretization, u: &DVector<f64>, mode: Mode) -> DVector<f64> {
    let locals: Vec<DVector<f64>> = (0..disc.mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let ul = disc.gather(c, u);
            convection_matrix(disc, c, &ul, mode) * ul
        })
        .collect();
    let mut out = DVector::zeros(disc.n_velocity());
    for (c, loc) in locals.iter().enumerate() {
        for (l, g) in disc.local_to_global(c).into_iter().enumerate() {
            out[g] += loc[l];
        }
    }
    out
}

/// Action of the Jacobian of `u -> t_h(u, u, .)` at `u` on `du`.
pub fn trilinear_jacobian_apply(disc: &Discretization, u: &DVector<f64>, du: &DVector<f64>, mode: Mode) -> DVector<f64> {
    let locals: Vec<DVector<f64>> = (0..disc.mesh.num_cells())
        .into_par_iter()
        .map(|c| convection_linearization(disc, c, &disc.gather(c, u), mode).1 * disc.gather(c, du))
        .collect();
    let mut out = DVector::zeros(disc.n_velocity());
    for (c, loc) in locals.iter().enumerate() {
        for (l, g) in disc.local_to_global(c).into_iter().enumerate() {
            out[g] += loc[l];
        }
    }
    out
}

/// Discretization error measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// `(nu a_h(e, e))^{1/2}` with `e = u_h - I_h u`.
    pub energy: f64,
    /// L2 norm of the cell part of `e`.
    pub l2_velocity: f64,
    /// L2 norm of `p_h - pi_h p`, both shifted to zero mean.
    pub l2_pressure: f64,
}

/// Errors of `(u_h, p_h)` against the interpolate `u_i` and projection `p_i`
/// of the exact solution.
pub fn error_norms(disc: &Discretization, nu: f64, u_h: &DVector<f64>, p_h: &DVector<f64>, u_i: &DVector<f64>, p_i: &DVector<f64>) -> ErrorNorms {
    let e = u_h - u_i;
    let mut energy = 0.0;
    let mut l2u = 0.0;
    for c in 0..disc.mesh.num_cells() {
        let el = disc.gather(c, &e);
        energy += el.dot(&(&disc.ops[c].viscous * &el));
        l2u += el.rows(0, disc.n_cell_block()).norm_squared();
    }
    let mut ep = p_h.clone();
    disc.normalize_pressure(&mut ep);
    let mut pi = p_i.clone();
    disc.normalize_pressure(&mut pi);
    ErrorNorms { energy: (nu * energy.max(0.0)).sqrt(), l2_velocity: l2u.sqrt(), l2_pressure: (ep - pi).norm() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_cartesian, gen_hexagonal, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Classic".parse::<Mode>().unwrap(), Mode::Classic);
        assert!("fancy".parse::<Mode>().is_err());
        assert_eq!(Mode::Robust.to_string(), "robust");
    }

    #[test]
    fn viscous_matrix_is_symmetric_with_constant_kernel() {
        let d = Discretization::new(gen_hexagonal(3, Rect::unit()).unwrap(), 1).unwrap();
        let a = assemble_viscous(&d).unwrap().to_dense();
        assert!((&a - a.transpose()).amax() <= 1e-13 * a.amax());
        let ones = d.interpolate(|_| Vec2::new(1.0, 2.0), 4);
        assert!((&a * ones).amax() < 1e-11);
    }

    #[test]
    fn coupling_of_position_field() {
        let d = Discretization::new(gen_cartesian(3, Rect::unit()).unwrap(), 1).unwrap();
        let b = assemble_coupling(&d).unwrap();
        let v = d.interpolate(|p| *p, 4);
        let one = d.project_pressure(|_| 1.0, 2);
        assert!((one.dot(&b.mul_vec(&v)) + 2.0).abs() < 1e-12);
        let c = d.interpolate(|_| Vec2::new(0.3, -1.0), 2);
        assert!(b.mul_vec(&c).amax() < 1e-12);
    }

    #[test]
    fn trilinear_form_is_antisymmetric() {
        let d = Discretization::new(gen_hexagonal(3, Rect::unit()).unwrap(), 1).unwrap();
        for mode in [Mode::Robust, Mode::Classic] {
            let (w, v, z) = (random(d.n_velocity(), 1), random(d.n_velocity(), 2), random(d.n_velocity(), 3));
            let a = trilinear_apply(&d, &w, &v, &z, mode);
            let b = trilinear_apply(&d, &w, &z, &v, mode);
            assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0));
            assert!(trilinear_apply(&d, &w, &v, &v, mode).abs() < 1e-12);
            assert_eq!(trilinear_apply(&d, &DVector::zeros(d.n_velocity()), &v, &z, mode), 0.0);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let d = Discretization::new(gen_cartesian(2, Rect::unit()).unwrap(), 1).unwrap();
        let u = random(d.n_velocity(), 4);
        let du = random(d.n_velocity(), 5);
        let jdu = trilinear_jacobian_apply(&d, &u, &du, Mode::Robust);
        // the residual is quadratic, so central differences are exact
        let h = 0.5;
        let fd = (trilinear_residual(&d, &(&u + &du * h), Mode::Robust) - trilinear_residual(&d, &(&u - &du * h), Mode::Robust)) / (2.0 * h);
        assert!((fd - &jdu).amax() < 1e-12 * jdu.amax().max(1.0));
    }

    #[test]
    fn error_norms_vanish_at_interpolate() {
        let d = Discretization::new(gen_cartesian(2, Rect::unit()).unwrap(), 1).unwrap();
        let u = d.interpolate(|p| Vec2::new(p.y.sin(), p.x * p.x), 8);
        let p = d.project_pressure(|x| x.x.exp(), 8);
        let e = error_norms(&d, 1.0, &u, &p, &u, &p);
        assert_eq!((e.energy, e.l2_velocity, e.l2_pressure), (0.0, 0.0, 0.0));
        let shifted = d.project_pressure(|x| x.x.exp() + 3.0, 8);
        assert!(error_norms(&d, 1.0, &u, &shifted, &u, &p).l2_pressure < 1e-13);
    }

    #[test]
    fn body_force_of_zero_is_zero() {
        let d = Discretization::new(gen_cartesian(2, Rect::unit()).unwrap(), 0).unwrap();
        assert_eq!(assemble_body_force(&d, |_| Vec2::zeros(), Mode::Robust).amax(), 0.0);
    }
}
