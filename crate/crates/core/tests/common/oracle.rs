//! Independent reconstruction solve: the full local mixed system assembled in
//! a broken monomial `RT_k` basis, with normal continuity imposed as
//! constraints, and solved in the least-norm sense through an SVD.

use nalgebra::{DMatrix, DVector};
use polyhho::discretization::Discretization;
use polyhho::hho::LocalOperators;
use polyhho::mesh::{Family, PolyMesh, Rect, SimplexEdge, Vec2};
use polyhho::quadrature::{segment_points, triangle_points};
use polyhho::rt::CellReconstruction;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative singular value threshold of the rank decisions.
const RANK_TOL: f64 = 1e-10;

fn exponents(k: usize) -> Vec<(i32, i32)> {
    (0..=k as i32).flat_map(|d| (0..=d).map(move |b| (d - b, b))).collect()
}

fn mono(e: (i32, i32), x: &Vec2) -> f64 {
    x.x.powi(e.0) * x.y.powi(e.1)
}

fn mono_grad(e: (i32, i32), x: &Vec2) -> Vec2 {
    let dx = if e.0 > 0 { e.0 as f64 * x.x.powi(e.0 - 1) * x.y.powi(e.1) } else { 0.0 };
    let dy = if e.1 > 0 { e.1 as f64 * x.x.powi(e.0) * x.y.powi(e.1 - 1) } else { 0.0 };
    Vec2::new(dx, dy)
}

/// `RT_k = P_k^2 + x P_k^hom` on every simplex of a cell, without continuity,
/// in monomials of the scaled coordinate `(x - center) / scale`.
struct BrokenRT {
    k: usize,
    center: Vec2,
    scale: f64,
    per_simplex: usize,
}

impl BrokenRT {
    fn scaled(&self, p: &Vec2) -> Vec2 {
        (p - self.center) / self.scale
    }

    /// Values and divergences of the basis of one simplex.
    fn local(&self, p: &Vec2) -> (Vec<Vec2>, Vec<f64>) {
        let x = self.scaled(p);
        let mut vals = Vec::with_capacity(self.per_simplex);
        let mut divs = Vec::with_capacity(self.per_simplex);
        for e in exponents(self.k) {
            let (m, g) = (mono(e, &x), mono_grad(e, &x));
            vals.push(Vec2::new(m, 0.0));
            divs.push(g.x / self.scale);
            vals.push(Vec2::new(0.0, m));
            divs.push(g.y / self.scale);
        }
        for e in exponents(self.k).into_iter().filter(|e| (e.0 + e.1) as usize == self.k) {
            let m = mono(e, &x);
            vals.push(x * m);
            divs.push((self.k + 2) as f64 * m / self.scale);
        }
        (vals, divs)
    }
}

/// Edge moments `int_e (w . n) q_j` of the broken basis of simplex `s` against
/// `q_j = (2t - 1)^j`, added with factor `sign` into rows `row0..row0 + k + 1`.
#[allow(clippy::too_many_arguments)]
fn add_edge_moments(rt: &BrokenRT, a: Vec2, b: Vec2, n: Vec2, s: usize, sign: f64, rows: &mut DMatrix<f64>, row0: usize) {
    let d = b - a;
    for (p, w) in segment_points(&a, &b, 2 * rt.k + 2).iter() {
        let t = (p - a).dot(&d) / d.norm_squared();
        let (vals, _) = rt.local(p);
        for j in 0..=rt.k {
            let q = (2.0 * t - 1.0).powi(j as i32);
            for (i, v) in vals.iter().enumerate() {
                rows[(row0 + j, s * rt.per_simplex + i)] += sign * w * q * v.dot(&n);
            }
        }
    }
}

/// Full SVD `a = U diag(s) V^T`, singular values in decreasing order.
struct Svd {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
}

impl Svd {
    fn new(a: &DMatrix<f64>) -> Self {
        let m = faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
        let svd = m.svd().expect("SVD converges");
        let (u, v) = (svd.U(), svd.V());
        Svd {
            u: DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
            s: svd.S().column_vector().iter().copied().collect(),
            v: DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
        }
    }

    fn rank(&self) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&s| s > RANK_TOL * smax).count()
    }

    /// Minimum-norm least-squares solution.
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.v.nrows());
        for i in 0..self.rank() {
            x += self.v.column(i) * (self.u.column(i).dot(b) / self.s[i]);
        }
        x
    }
}

/// Basis of the null space of `a`, from the right singular vectors.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = Svd::new(a);
    let r = svd.rank();
    svd.v.columns(r, a.ncols() - r).into_owned()
}

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, Copy)]
pub struct OracleComparison {
    /// `||R_oracle - R||_{L2(T)} / ||R||_{L2(T)}`.
    pub relative_difference: f64,
    /// Relative residual of the least-norm solve.
    pub residual: f64,
    /// Dimension of the zero-normal-trace test space found by the oracle.
    pub test_space_dim: usize,
}

/// Solves the full mixed system of one cell for the local dofs `dofs` and
/// compares with the reconstruction `rec`.
pub fn compare(mesh: &PolyMesh, ops: &LocalOperators, rec: &CellReconstruction, dofs: &DVector<f64>) -> OracleComparison {
    let k = ops.k();
    let cell = &mesh.cells[ops.cell];
    let st = &cell.subtri;
    let ns = st.simplices.len();
    let rt = BrokenRT { k, center: cell.centroid, scale: cell.diameter, per_simplex: (k + 1) * (k + 3) };
    let nr = ns * rt.per_simplex;
    let mk = k + 1;
    let pk = exponents(k);
    let nk = pk.len();
    let koszul = if k >= 2 { exponents(k - 2) } else { Vec::new() };
    let nz = koszul.len();
    let apex = st.common_point(mesh);
    let qdeg = 2 * k + 4;

    // normal continuity across interior edges
    let mut conf = DMatrix::zeros(st.interior_edges.len() * mk, nr);
    for (ie, e) in st.interior_edges.iter().enumerate() {
        let (a, b) = (mesh.vertices[e.vertices[0]], mesh.vertices[e.vertices[1]]);
        add_edge_moments(&rt, a, b, e.normal, e.simplices[0], 1.0, &mut conf, ie * mk);
        add_edge_moments(&rt, a, b, e.normal, e.simplices[1], -1.0, &mut conf, ie * mk);
    }

    // prescribed normal traces on the cell boundary
    let nf = cell.num_faces();
    let mut bnd = DMatrix::zeros(nf * mk, nr);
    let mut g = DVector::zeros(nf * mk);
    for (si, s) in st.simplices.iter().enumerate() {
        for (i, e) in s.edges.iter().enumerate() {
            let SimplexEdge::Boundary(lf) = *e else { continue };
            let (a, b) = s.edge_points(mesh, i);
            let n = cell.outward_normal(mesh, lf);
            add_edge_moments(&rt, a, b, n, si, 1.0, &mut bnd, lf * mk);
            let d = b - a;
            for (p, w) in segment_points(&a, &b, 2 * k + 2).iter() {
                let t = (p - a).dot(&d) / d.norm_squared();
                let vn = ops.eval_face(dofs, lf, p).dot(&n);
                for j in 0..mk {
                    g[lf * mk + j] += w * vn * (2.0 * t - 1.0).powi(j as i32);
                }
            }
        }
    }

    // divergence, Koszul moments and mass, simplex by simplex
    let mut div = DMatrix::zeros(ns * nk, nr);
    let mut div_rhs = DVector::zeros(ns * nk);
    let mut kz = DMatrix::zeros(nz, nr);
    let mut kz_rhs = DVector::zeros(nz);
    let mut mass = DMatrix::zeros(nr, nr);
    let mut mass_rhs = DVector::zeros(nr);
    for (si, s) in st.simplices.iter().enumerate() {
        let off = si * rt.per_simplex;
        for (p, w) in triangle_points(&s.points(mesh), qdeg).iter() {
            let (vals, divs) = rt.local(p);
            let x = rt.scaled(p);
            let vt = ops.eval_cell(dofs, p);
            let dv = ops.eval_divergence(dofs, p);
            let r = p - apex;
            let zs: Vec<Vec2> = koszul.iter().map(|&e| Vec2::new(-r.y, r.x) * mono(e, &x)).collect();
            for (a, &e) in pk.iter().enumerate() {
                let m = mono(e, &x);
                div_rhs[si * nk + a] += w * dv * m;
                for i in 0..rt.per_simplex {
                    div[(si * nk + a, off + i)] += w * divs[i] * m;
                }
            }
            for (z, zv) in zs.iter().enumerate() {
                kz_rhs[z] += w * vt.dot(zv);
                for i in 0..rt.per_simplex {
                    kz[(z, off + i)] += w * vals[i].dot(zv);
                }
            }
            for i in 0..rt.per_simplex {
                mass_rhs[off + i] += w * vals[i].dot(&vt);
                for j in 0..rt.per_simplex {
                    mass[(off + i, off + j)] += w * vals[i].dot(&vals[j]);
                }
            }
        }
    }

    // test space: conforming fields with zero normal trace on the boundary
    let mut traces = DMatrix::zeros(conf.nrows() + bnd.nrows(), nr);
    traces.rows_mut(0, conf.nrows()).copy_from(&conf);
    traces.rows_mut(conf.nrows(), bnd.nrows()).copy_from(&bnd);
    let test = null_space(&traces);
    let n0 = test.ncols();

    let npsi = ns * nk;
    let ncols = nr + npsi + nz;
    let blocks = [conf.nrows(), bnd.nrows(), div.nrows(), nz, n0];
    let nrows: usize = blocks.iter().sum();
    let mut sys = DMatrix::zeros(nrows, ncols);
    let mut rhs = DVector::zeros(nrows);
    let mut row = 0;
    sys.view_mut((row, 0), conf.shape()).copy_from(&conf);
    row += conf.nrows();
    sys.view_mut((row, 0), bnd.shape()).copy_from(&bnd);
    rhs.rows_mut(row, bnd.nrows()).copy_from(&g);
    row += bnd.nrows();
    sys.view_mut((row, 0), div.shape()).copy_from(&div);
    rhs.rows_mut(row, div.nrows()).copy_from(&div_rhs);
    row += div.nrows();
    sys.view_mut((row, 0), kz.shape()).copy_from(&kz);
    rhs.rows_mut(row, nz).copy_from(&kz_rhs);
    row += nz;
    let tt = test.transpose();
    sys.view_mut((row, 0), (n0, nr)).copy_from(&(&tt * &mass));
    sys.view_mut((row, nr), (n0, npsi)).copy_from(&(&div * &test).transpose());
    if nz > 0 {
        sys.view_mut((row, nr + npsi), (n0, nz)).copy_from(&(&kz * &test).transpose());
    }
    rhs.rows_mut(row, n0).copy_from(&(&tt * &mass_rhs));

    let sol = Svd::new(&sys).solve(&rhs);
    let residual = (&sys * &sol - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);

    let coeffs = rec.apply(dofs);
    let (mut diff, mut norm) = (0.0, 0.0);
    for (si, s) in st.simplices.iter().enumerate() {
        let off = si * rt.per_simplex;
        for (p, w) in triangle_points(&s.points(mesh), qdeg).iter() {
            let (vals, _) = rt.local(p);
            let r: Vec2 = vals.iter().enumerate().map(|(i, v)| v * sol[off + i]).sum();
            let (rl, _) = rec.space.eval(&coeffs, si, p);
            diff += w * (r - rl).norm_squared();
            norm += w * rl.norm_squared();
        }
    }
    OracleComparison { relative_difference: (diff / norm.max(f64::MIN_POSITIVE)).sqrt(), residual, test_space_dim: n0 }
}

/// Worst comparison over `cells` random cells per family and `k` in `0..=2`,
/// with two random dof vectors per cell.
pub fn sweep(cells: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_diff, mut worst_res) = (0.0f64, 0.0f64);
    for family in [Family::Cartesian, Family::Hexagonal, Family::Kershaw] {
        let mesh = family.generate(4, Rect::unit()).expect("mesh");
        for k in 0..=2 {
            let d = Discretization::new(mesh.clone(), k).expect("discretization");
            for c in sample(&mut rng, d.mesh.num_cells(), cells.min(d.mesh.num_cells())) {
                let ops = &d.ops[c];
                for _ in 0..2 {
                    let dofs = DVector::from_fn(ops.n_dofs(), |_, _| rng.gen_range(-1.0..1.0));
                    let cmp = compare(&d.mesh, ops, &d.recs[c], &dofs);
                    worst_diff = worst_diff.max(cmp.relative_difference);
                    worst_res = worst_res.max(cmp.residual);
                }
            }
        }
    }
    (worst_diff, worst_res)
}
