//! Raviart-Thomas spaces on cell subtriangulations and the
//! divergence-preserving velocity reconstruction.
//!
//! On each simplex the space `RT_k = P^k^2 + x P^k` is spanned by the nodal
//! basis dual to edge-normal moments (against the Legendre basis of each edge,
//! oriented from the lower to the higher vertex index) and interior moments
//! against `P^{k-1}^2`. Cell-level dofs are ordered as boundary-edge moments
//! (one block per cell face, normal `n_TF`), interior-edge moments (normal of
//! the [`InteriorEdge`]), then interior moments simplex by simplex.
//!
//! [`InteriorEdge`]: crate::mesh::InteriorEdge

use nalgebra::{DMatrix, DVector};

use crate::basis::{dim_p2, dim_p2_signed, koszul_basis, ScaledBasis, SegmentBasis};
use crate::error::{Error, Result};
use crate::hho::LocalOperators;
use crate::mesh::{PolyMesh, SimplexEdge, Vec2};
use crate::quadrature::{segment_points, triangle_points};

/// Relative residual accepted for the local mixed solve.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-10;

/// `RT_k` on one triangle, as a nodal basis over the raw monomial basis.
#[derive(Debug, Clone)]
pub struct SimplexRT {
    pub k: usize,
    pub points: [Vec2; 3],
    pub center: Vec2,
    pub scale: f64,
    /// Outward unit normals of the three edges.
    pub normals: [Vec2; 3],
    pub edge_bases: [SegmentBasis; 3],
    /// Orthonormal `P^{k-1}` basis for the interior moments.
    pub interior_basis: Option<ScaledBasis>,
    /// Column `i` holds the raw coefficients of nodal function `i`.
    coeffs: DMatrix<f64>,
    /// Condition number of the dof-functional matrix.
    pub vandermonde_condition: f64,
}

/// Dimension of `RT_k` on a triangle.
pub const fn rt_dim(k: usize) -> usize {
    (k + 1) * (k + 3)
}

impl SimplexRT {
    /// `vertex_ids` fix the orientation of the edge bases.
    pub fn new(points: [Vec2; 3], vertex_ids: [usize; 3], k: usize) -> Result<Self, String> {
        let center = (points[0] + points[1] + points[2]) / 3.0;
        let scale = (0..3).map(|i| (points[(i + 1) % 3] - points[i]).norm()).fold(0.0, f64::max);
        let normals = std::array::from_fn(|i| {
            let t = (points[(i + 1) % 3] - points[i]).normalize();
            Vec2::new(t.y, -t.x)
        });
        let edge_bases = std::array::from_fn(|i| {
            let (a, b) = (i, (i + 1) % 3);
            if vertex_ids[a] < vertex_ids[b] {
                SegmentBasis::new(points[a], points[b], k)
            } else {
                SegmentBasis::new(points[b], points[a], k)
            }
        });
        let interior_basis = if k >= 1 {
            Some(ScaledBasis::on_triangle(&points, k - 1).map_err(|e| e.to_string())?)
        } else {
            None
        };
        let n = rt_dim(k);
        let mut rt = SimplexRT {
            k,
            points,
            center,
            scale,
            normals,
            edge_bases,
            interior_basis,
            coeffs: DMatrix::identity(n, n),
            vandermonde_condition: 1.0,
        };
        let v = rt.functionals_of_raw();
        let sv = v.clone().singular_values();
        let cond = sv.max() / sv.min();
        if !cond.is_finite() || cond > 1e12 {
            return Err(format!("RT dof functionals not unisolvent (condition {cond:.3e})"));
        }
        rt.coeffs = v.try_inverse().ok_or("singular RT dof matrix")?;
        rt.vandermonde_condition = cond;
        Ok(rt)
    }

    pub fn dim(&self) -> usize {
        rt_dim(self.k)
    }

    /// Raw basis values and divergences at `p`.
    fn raw(&self, p: &Vec2, vals: &mut [Vec2], divs: &mut [f64]) {
        let k = self.k;
        let s = (p - self.center) / self.scale;
        let nk = dim_p2(k);
        let mut idx = 0;
        for c in 0..2 {
            for d in 0..=k {
                for b in 0..=d {
                    let a = d - b;
                    let m = s.x.powi(a as i32) * s.y.powi(b as i32);
                    let mut e = Vec2::zeros();
                    e[c] = m;
                    vals[idx] = e;
                    // derivative of s_x^a s_y^b along direction c
                    let deriv = match (c, a, b) {
                        (0, a, b) if a > 0 => a as f64 * s.x.powi(a as i32 - 1) * s.y.powi(b as i32),
                        (1, a, b) if b > 0 => b as f64 * s.x.powi(a as i32) * s.y.powi(b as i32 - 1),
                        _ => 0.0,
                    };
                    divs[idx] = deriv / self.scale;
                    idx += 1;
                }
            }
        }
        debug_assert_eq!(idx, 2 * nk);
        for b in 0..=k {
            let a = k - b;
            let m = s.x.powi(a as i32) * s.y.powi(b as i32);
            vals[idx] = s * m;
            divs[idx] = (k + 2) as f64 * m / self.scale;
            idx += 1;
        }
    }

    /// Matrix of dof functionals applied to the raw basis.
    fn functionals_of_raw(&self) -> DMatrix<f64> {
        let n = self.dim();
        let k = self.k;
        let mut v = DMatrix::zeros(n, n);
        let (mut vals, mut divs) = (vec![Vec2::zeros(); n], vec![0.0; n]);
        let mut psi = vec![0.0; k + 1];
        for e in 0..3 {
            let eb = &self.edge_bases[e];
            for (p, w) in segment_points(&eb.a, &eb.b, 2 * k + 1).iter() {
                self.raw(p, &mut vals, &mut divs);
                eb.eval_into(p, &mut psi);
                for j in 0..=k {
                    for r in 0..n {
                        v[(e * (k + 1) + j, r)] += w * psi[j] * vals[r].dot(&self.normals[e]);
                    }
                }
            }
        }
        if let Some(ib) = &self.interior_basis {
            let nm = ib.dim();
            let mut q = vec![0.0; nm];
            for (p, w) in triangle_points(&self.points, 2 * k).iter() {
                self.raw(p, &mut vals, &mut divs);
                ib.eval_into(p, &mut q);
                for c in 0..2 {
                    for m in 0..nm {
                        for r in 0..n {
                            v[(3 * (k + 1) + c * nm + m, r)] += w * q[m] * vals[r][c];
                        }
                    }
                }
            }
        }
        v
    }

    /// Nodal basis values and divergences at `p`.
    pub fn eval(&self, p: &Vec2, vals: &mut [Vec2], divs: &mut [f64]) {
        let n = self.dim();
        let (mut rv, mut rd) = (vec![Vec2::zeros(); n], vec![0.0; n]);
        self.raw(p, &mut rv, &mut rd);
        for i in 0..n {
            let col = self.coeffs.column(i);
            let (mut v, mut d) = (Vec2::zeros(), 0.0);
            for r in 0..n {
                v += rv[r] * col[r];
                d += rd[r] * col[r];
            }
            vals[i] = v;
            divs[i] = d;
        }
    }

    /// Local index of edge moment `j` on edge `e`.
    pub fn edge_dof(&self, e: usize, j: usize) -> usize {
        e * (self.k + 1) + j
    }
}

/// `RT_k` on the subtriangulation of a cell, with normal continuity across
/// interior edges.
#[derive(Debug, Clone)]
pub struct RTSpace {
    pub cell: usize,
    pub k: usize,
    pub simplices: Vec<SimplexRT>,
    /// Per simplex, per local dof: cell-level dof and orientation sign.
    pub dof_map: Vec<Vec<(usize, f64)>>,
    pub n_boundary: usize,
    pub n_interior_edges: usize,
    pub n_moments: usize,
}

impl RTSpace {
    pub fn new(mesh: &PolyMesh, cell: usize, k: usize) -> Result<Self> {
        let c = &mesh.cells[cell];
        let st = &c.subtri;
        let mk = k + 1;
        let nm = 2 * dim_p2_signed(k as isize - 1);
        let n_boundary = c.num_faces() * mk;
        let n_interior_edges = st.interior_edges.len() * mk;
        let mut simplices = Vec::with_capacity(st.simplices.len());
        let mut dof_map = Vec::with_capacity(st.simplices.len());
        for (si, s) in st.simplices.iter().enumerate() {
            let rt = SimplexRT::new(s.points(mesh), s.vertices, k)
                .map_err(|reason| Error::DegenerateCell { cell, reason: format!("simplex {si}: {reason}") })?;
            let mut map = Vec::with_capacity(rt.dim());
            for e in s.edges {
                for j in 0..mk {
                    map.push(match e {
                        SimplexEdge::Boundary(lf) => (lf * mk + j, 1.0),
                        SimplexEdge::Interior(ie) => {
                            let sign = if st.interior_edges[ie].simplices[0] == si { 1.0 } else { -1.0 };
                            (n_boundary + ie * mk + j, sign)
                        }
                    });
                }
            }
            for m in 0..nm {
                map.push((n_boundary + n_interior_edges + si * nm + m, 1.0));
            }
            simplices.push(rt);
            dof_map.push(map);
        }
        Ok(RTSpace { cell, k, simplices, dof_map, n_boundary, n_interior_edges, n_moments: nm * st.simplices.len() })
    }

    pub fn dim(&self) -> usize {
        self.n_boundary + self.n_interior_edges + self.n_moments
    }

    /// Values and divergences of all cell-level basis functions at `p` in
    /// simplex `s`; functions supported elsewhere are zero.
    pub fn basis_at(&self, s: usize, p: &Vec2) -> (Vec<Vec2>, Vec<f64>) {
        let rt = &self.simplices[s];
        let n = rt.dim();
        let (mut lv, mut ld) = (vec![Vec2::zeros(); n], vec![0.0; n]);
        rt.eval(p, &mut lv, &mut ld);
        let mut vals = vec![Vec2::zeros(); self.dim()];
        let mut divs = vec![0.0; self.dim()];
        for (i, &(g, sign)) in self.dof_map[s].iter().enumerate() {
            vals[g] += lv[i] * sign;
            divs[g] += ld[i] * sign;
        }
        (vals, divs)
    }

    /// Field value and divergence at `p` in simplex `s`.
    pub fn eval(&self, coeffs: &DVector<f64>, s: usize, p: &Vec2) -> (Vec2, f64) {
        let rt = &self.simplices[s];
        let n = rt.dim();
        let (mut lv, mut ld) = (vec![Vec2::zeros(); n], vec![0.0; n]);
        rt.eval(p, &mut lv, &mut ld);
        let (mut v, mut d) = (Vec2::zeros(), 0.0);
        for (i, &(g, sign)) in self.dof_map[s].iter().enumerate() {
            v += lv[i] * (sign * coeffs[g]);
            d += ld[i] * sign * coeffs[g];
        }
        (v, d)
    }

    /// Boundary lifting: coefficients prescribing `v_F . n_TF` on every
    /// boundary edge and zero elsewhere, as a `dim x n_hho` matrix.
    ///
    /// The face and edge Legendre bases coincide, so the edge moments are the
    /// normal components of the face coefficients.
    pub fn boundary_lifting(&self, mesh: &PolyMesh, ops: &LocalOperators) -> DMatrix<f64> {
        let l = ops.layout;
        let cell = &mesh.cells[self.cell];
        let mut lift = DMatrix::zeros(self.dim(), l.len());
        for lf in 0..l.nf {
            let n = cell.outward_normal(mesh, lf);
            for j in 0..=self.k {
                lift[(lf * (self.k + 1) + j, l.face(lf, 0, j))] = n.x;
                lift[(lf * (self.k + 1) + j, l.face(lf, 1, j))] = n.y;
            }
        }
        lift
    }
}

/// Reconstruction operator of one cell.
#[derive(Debug, Clone)]
pub struct CellReconstruction {
    pub space: RTSpace,
    /// `dim RT x n_hho`: maps local hybrid dofs to cell-level RT coefficients.
    pub matrix: DMatrix<f64>,
    /// Relative residual of the mixed system reached by the solve.
    pub residual: f64,
}

impl CellReconstruction {
    pub fn apply(&self, dofs: &DVector<f64>) -> DVector<f64> {
        &self.matrix * dofs
    }

    /// Reconstructed velocity at `p` in simplex `s`, as a `2 x n_hho` matrix
    /// acting on local dofs.
    pub fn eval_matrix(&self, s: usize, p: &Vec2) -> DMatrix<f64> {
        let rt = &self.space.simplices[s];
        let n = rt.dim();
        let (mut lv, mut ld) = (vec![Vec2::zeros(); n], vec![0.0; n]);
        rt.eval(p, &mut lv, &mut ld);
        let cols = self.matrix.ncols();
        let mut out = DMatrix::zeros(2, cols);
        for (i, &(g, sign)) in self.space.dof_map[s].iter().enumerate() {
            let row = self.matrix.row(g);
            for j in 0..cols {
                let r = sign * row[j];
                out[(0, j)] += lv[i].x * r;
                out[(1, j)] += lv[i].y * r;
            }
        }
        out
    }
}

/// Pieces of the mixed system, assembled once per cell.
struct MixedSystem {
    /// Mass matrix of the RT space.
    mass: DMatrix<f64>,
    /// `int_tau (div w) phi` for every simplex basis function `phi`.
    div: DMatrix<f64>,
    /// `int_tau (D v) phi`.
    div_rhs: DMatrix<f64>,
    /// `int w . xi` for Koszul generators `xi`.
    koszul: DMatrix<f64>,
    /// `int v_T . xi`.
    koszul_rhs: DMatrix<f64>,
    /// `int w . v_T`.
    mass_rhs: DMatrix<f64>,
    /// Rows of the zero-mean piecewise `P^k` basis in terms of the simplex bases.
    zero_mean: DMatrix<f64>,
}

fn assemble_mixed(mesh: &PolyMesh, ops: &LocalOperators, space: &RTSpace) -> Result<MixedSystem> {
    let k = space.k;
    let l = ops.layout;
    let cell = &mesh.cells[space.cell];
    let st = &cell.subtri;
    let nrt = space.dim();
    let nh = l.len();
    let nk = dim_p2(k);
    let ns = st.simplices.len();
    let kz = koszul_basis(st.common_point(mesh), k as isize - 1);
    let nz = kz.dim();
    let nb = ops.basis.dim();

    let mut mass = DMatrix::zeros(nrt, nrt);
    let mut div = DMatrix::zeros(ns * nk, nrt);
    let mut cell_proj = DMatrix::zeros(ns * nk, nk);
    let mut koszul = DMatrix::zeros(nz, nrt);
    let mut koszul_rhs = DMatrix::zeros(nz, nh);
    let mut mass_rhs = DMatrix::zeros(nrt, nh);
    let mut zv = vec![Vec2::zeros(); nz];
    let mut cv = vec![0.0; nb];
    for (si, s) in st.simplices.iter().enumerate() {
        let sb = ScaledBasis::on_triangle(&s.points(mesh), k)?;
        let mut phi = vec![0.0; nk];
        for (p, w) in triangle_points(&s.points(mesh), 2 * k + 2).iter() {
            let (vals, divs) = space.basis_at(si, p);
            sb.eval_into(p, &mut phi);
            ops.basis.eval_into(p, &mut cv);
            kz.eval_into(p, &cv, &mut zv);
            let nz_idx: Vec<usize> = (0..nrt).filter(|&i| vals[i] != Vec2::zeros() || divs[i] != 0.0).collect();
            for &i in &nz_idx {
                for &j in &nz_idx {
                    mass[(i, j)] += w * vals[i].dot(&vals[j]);
                }
                for a in 0..nk {
                    div[(si * nk + a, i)] += w * divs[i] * phi[a];
                }
                for m in 0..nz {
                    koszul[(m, i)] += w * vals[i].dot(&zv[m]);
                }
                for c in 0..2 {
                    for j in 0..l.nk {
                        mass_rhs[(i, l.cell(c, j))] += w * vals[i][c] * cv[j];
                    }
                }
            }
            for a in 0..nk {
                for j in 0..l.nk {
                    cell_proj[(si * nk + a, j)] += w * phi[a] * cv[j];
                }
            }
            for m in 0..nz {
                for c in 0..2 {
                    for j in 0..l.nk {
                        koszul_rhs[(m, l.cell(c, j))] += w * zv[m][c] * cv[j];
                    }
                }
            }
        }
    }
    let div_rhs = cell_proj * &ops.div;

    // zero-mean piecewise P^k: non-constant simplex functions, plus simplex
    // constants (but the first) shifted by their mean over the cell
    let mut zero_mean = DMatrix::zeros(ns * nk - 1, ns * nk);
    let mut row = 0;
    for si in 0..ns {
        for a in 1..nk {
            zero_mean[(row, si * nk + a)] = 1.0;
            row += 1;
        }
    }
    let sq: Vec<f64> = st.simplices.iter().map(|s| s.area.sqrt()).collect();
    for si in 1..ns {
        zero_mean[(row, si * nk)] += 1.0;
        for (sj, &r) in sq.iter().enumerate() {
            // the cell constant 1 is sum_j sqrt|tau_j| phi_j0
            zero_mean[(row, sj * nk)] -= sq[si] / cell.area * r;
        }
        row += 1;
    }
    Ok(MixedSystem { mass, div, div_rhs, koszul, koszul_rhs, mass_rhs, zero_mean })
}

/// Builds the reconstruction matrix of one cell: boundary lifting plus the
/// solution of the reduced mixed problem on the zero-normal-trace subspace.
pub fn reconstruction_map(mesh: &PolyMesh, ops: &LocalOperators) -> Result<CellReconstruction> {
    let space = RTSpace::new(mesh, ops.cell, ops.k())?;
    let sys = assemble_mixed(mesh, ops, &space)?;
    let lift = space.boundary_lifting(mesh, ops);
    let nrt = space.dim();
    let nh = ops.n_dofs();
    let i0 = space.n_boundary;
    let n0 = nrt - i0;
    let b = &sys.zero_mean * &sys.div;
    let b_rhs = &sys.zero_mean * (&sys.div_rhs - &sys.div * &lift);
    let npsi = b.nrows();
    let nz = sys.koszul.nrows();
    let n = n0 + npsi + nz;

    let mut kkt = DMatrix::zeros(n, n);
    kkt.view_mut((0, 0), (n0, n0)).copy_from(&sys.mass.view((i0, i0), (n0, n0)));
    let b0 = b.columns(i0, n0);
    kkt.view_mut((n0, 0), (npsi, n0)).copy_from(&b0);
    kkt.view_mut((0, n0), (n0, npsi)).copy_from(&b0.transpose());
    let c0 = sys.koszul.columns(i0, n0);
    kkt.view_mut((n0 + npsi, 0), (nz, n0)).copy_from(&c0);
    kkt.view_mut((0, n0 + npsi), (n0, nz)).copy_from(&c0.transpose());

    let mut rhs = DMatrix::zeros(n, nh);
    let m_rhs = &sys.mass_rhs - &sys.mass * &lift;
    rhs.rows_mut(0, n0).copy_from(&m_rhs.rows(i0, n0));
    rhs.rows_mut(n0, npsi).copy_from(&b_rhs);
    rhs.rows_mut(n0 + npsi, nz).copy_from(&(&sys.koszul_rhs - &sys.koszul * &lift));

    let condition = || {
        let sv = kkt.clone().singular_values();
        sv.max() / sv.min()
    };
    let sol = kkt.clone().lu().solve(&rhs).filter(|x| x.iter().all(|v| v.is_finite()));
    let Some(sol) = sol else {
        return Err(Error::SingularMixedProblem { cell: ops.cell, condition: condition() });
    };
    let residual = (&kkt * &sol - &rhs).norm() / (kkt.norm() * sol.norm() + rhs.norm()).max(f64::MIN_POSITIVE);

    let mut matrix = lift;
    let mut v0 = matrix.rows_mut(i0, n0);
    v0 += sol.rows(0, n0);

    // divergence constraint against the full piecewise P^k space
    let div_res = (&sys.div * &matrix - &sys.div_rhs).norm()
        / (sys.div.norm() * matrix.norm() + sys.div_rhs.norm()).max(f64::MIN_POSITIVE);
    let residual = residual.max(div_res);
    if residual > RECONSTRUCTION_TOLERANCE {
        let cond = condition();
        log::error!("cell {}: reconstruction residual {residual:.3e}, condition {cond:.3e}", ops.cell);
        return Err(Error::ReconstructionResidual { cell: ops.cell, residual });
    }
    Ok(CellReconstruction { space, matrix, residual })
}

/// Builds the reconstruction of every cell in parallel.
pub fn build_reconstructions(mesh: &PolyMesh, ops: &[LocalOperators]) -> Result<Vec<CellReconstruction>> {
    use rayon::prelude::*;
    ops.par_iter().map(|o| reconstruction_map(mesh, o)).collect()
}

/// Globally patched reconstruction: per-cell RT coefficients.
#[derive(Debug, Clone)]
pub struct RTField<'a> {
    pub mesh: &'a PolyMesh,
    pub recs: &'a [CellReconstruction],
    pub coeffs: Vec<DVector<f64>>,
}

impl RTField<'_> {
    /// Value and divergence at `p` in simplex `s` of cell `c`.
    pub fn eval_in(&self, c: usize, s: usize, p: &Vec2) -> (Vec2, f64) {
        self.recs[c].space.eval(&self.coeffs[c], s, p)
    }

    /// Value at `p`, located by search; `None` outside the mesh.
    pub fn eval(&self, p: &Vec2) -> Option<Vec2> {
        let (c, s) = self.mesh.locate(p)?;
        Some(self.eval_in(c, s, p).0)
    }

    pub fn divergence(&self, p: &Vec2) -> Option<f64> {
        let (c, s) = self.mesh.locate(p)?;
        Some(self.eval_in(c, s, p).1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, gen_cartesian, gen_hexagonal, Rect};
    use crate::quadrature::simplex_points;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Fixed vector polynomial of total degree `k` with all monomials present.
    fn random_poly(k: usize, p: &Vec2) -> Vec2 {
        let mut v = Vec2::zeros();
        for d in 0..=k as i32 {
            for b in 0..=d {
                let m = p.x.powi(d - b) * p.y.powi(b);
                v += Vec2::new(0.7 - 0.3 * b as f64, 0.2 * d as f64 - 0.5) * m;
            }
        }
        v
    }

    #[test]
    fn dimensions() {
        let m = gen_cartesian(1, Rect::unit()).unwrap();
        let s = RTSpace::new(&m, 0, 0).unwrap();
        assert_eq!(s.dim(), 5);
        let tri = build_mesh(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)], vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(RTSpace::new(&tri, 0, 1).unwrap().dim(), 8);
    }

    #[test]
    fn nodal_basis_is_dual_to_functionals() {
        let rt = SimplexRT::new([Vec2::new(0.1, 0.2), Vec2::new(1.3, 0.4), Vec2::new(0.5, 1.1)], [4, 2, 9], 2).unwrap();
        let n = rt.dim();
        // edge functional e=1, j=0 applied to all nodal functions
        let eb = &rt.edge_bases[1];
        let mut acc = vec![0.0; n];
        let (mut v, mut d) = (vec![Vec2::zeros(); n], vec![0.0; n]);
        for (p, w) in segment_points(&eb.a, &eb.b, 6).iter() {
            rt.eval(p, &mut v, &mut d);
            let psi = eb.eval(p);
            for i in 0..n {
                acc[i] += w * psi[0] * v[i].dot(&rt.normals[1]);
            }
        }
        for (i, a) in acc.iter().enumerate() {
            let expect = if i == rt.edge_dof(1, 0) { 1.0 } else { 0.0 };
            assert!((a - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let rt = SimplexRT::new([Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.2), Vec2::new(0.3, 0.9)], [0, 1, 2], 2).unwrap();
        let n = rt.dim();
        let p = Vec2::new(0.4, 0.3);
        let h = 1e-6;
        let (mut v0, mut v1, mut d) = (vec![Vec2::zeros(); n], vec![Vec2::zeros(); n], vec![0.0; n]);
        let mut div = vec![0.0; n];
        rt.eval(&p, &mut v0, &mut div);
        let mut fd = vec![0.0; n];
        rt.eval(&(p + Vec2::new(h, 0.0)), &mut v1, &mut d);
        rt.eval(&(p - Vec2::new(h, 0.0)), &mut v0, &mut d);
        for i in 0..n {
            fd[i] += (v1[i].x - v0[i].x) / (2.0 * h);
        }
        rt.eval(&(p + Vec2::new(0.0, h)), &mut v1, &mut d);
        rt.eval(&(p - Vec2::new(0.0, h)), &mut v0, &mut d);
        for i in 0..n {
            fd[i] += (v1[i].y - v0[i].y) / (2.0 * h);
            assert!((fd[i] - div[i]).abs() < 1e-5 * (1.0 + div[i].abs()));
        }
    }

    #[test]
    fn interior_edge_normal_is_continuous() {
        let m = gen_hexagonal(2, Rect::unit()).unwrap();
        let c = (0..m.num_cells()).max_by_key(|&c| m.cells[c].num_faces()).unwrap();
        let space = RTSpace::new(&m, c, 2).unwrap();
        let coeffs = random(space.dim(), 3);
        for e in &m.cells[c].subtri.interior_edges {
            let (a, b) = (m.vertices[e.vertices[0]], m.vertices[e.vertices[1]]);
            for t in [0.1, 0.5, 0.77] {
                let p = a + (b - a) * t;
                let (v1, _) = space.eval(&coeffs, e.simplices[0], &p);
                let (v2, _) = space.eval(&coeffs, e.simplices[1], &p);
                assert!((v1 - v2).dot(&e.normal).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn lifting_of_normal_face_value_is_edge_function() {
        let m = gen_cartesian(1, Rect::unit()).unwrap();
        let ops = LocalOperators::new(&m, 0, 0).unwrap();
        let space = RTSpace::new(&m, 0, 0).unwrap();
        let n = m.cells[0].outward_normal(&m, 1);
        let mut dofs = ops.interpolate(&m, |_| n, 2);
        for j in 0..dofs.len() {
            if !(ops.layout.face(1, 0, 0)..=ops.layout.face(1, 1, 0)).contains(&j) {
                dofs[j] = 0.0;
            }
        }
        let coeffs = space.boundary_lifting(&m, &ops) * dofs;
        for (i, c) in coeffs.iter().enumerate() {
            let expect = if i == 1 { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-14, "{coeffs}");
        }
    }

    #[test]
    fn reconstruction_reproduces_polynomials() {
        let m = gen_hexagonal(3, Rect::unit()).unwrap();
        for k in 0..=3 {
            for c in [0, 4, 9] {
                let ops = LocalOperators::new(&m, c, k).unwrap();
                let rec = reconstruction_map(&m, &ops).unwrap();
                let w = |p: &Vec2| random_poly(k, p);
                let dofs = ops.interpolate(&m, w, 2 * k + 2);
                let coeffs = rec.apply(&dofs);
                for (si, s) in m.cells[c].subtri.simplices.iter().enumerate() {
                    for p in simplex_points(&m, s, 3).points {
                        assert!((rec.space.eval(&coeffs, si, &p).0 - w(&p)).norm() < 1e-11, "k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn divergence_is_preserved_pointwise() {
        let m = gen_hexagonal(3, Rect::unit()).unwrap();
        for k in 0..=2 {
            let ops = LocalOperators::new(&m, 5, k).unwrap();
            let rec = reconstruction_map(&m, &ops).unwrap();
            let dofs = random(ops.n_dofs(), k as u64);
            let coeffs = rec.apply(&dofs);
            for (si, s) in m.cells[5].subtri.simplices.iter().enumerate() {
                for p in simplex_points(&m, s, 2 * k + 2).points {
                    let d = rec.space.eval(&coeffs, si, &p).1;
                    assert!((d - ops.eval_divergence(&dofs, &p)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_dofs_give_zero() {
        let m = gen_hexagonal(2, Rect::unit()).unwrap();
        let ops = LocalOperators::new(&m, 2, 1).unwrap();
        let rec = reconstruction_map(&m, &ops).unwrap();
        assert_eq!(rec.apply(&DVector::zeros(ops.n_dofs())).amax(), 0.0);
    }
}
