//! Local hybrid spaces and operators: interpolation, discrete divergence,
//! gradient reconstructions, potential reconstruction and stabilization.
//!
//! Local dof vectors are laid out as
//! `[v_T,1 | v_T,2 | v_F0,1 | v_F0,2 | v_F1,1 | ...]`, where cell blocks hold
//! `dim P^k` coefficients in the orthonormal cell basis and face blocks hold
//! `k + 1` coefficients in the Legendre basis of the face (global orientation).

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::basis::{dim_p2, ScaledBasis, SegmentBasis};
use crate::error::{Error, Result};
use crate::mesh::{PolyMesh, SimplexEdge, Vec2};
use crate::quadrature::{cell_points, face_points, simplex_points};

/// Local hybrid dofs of one cell, laid out as described in the module docs.
pub type LocalDofs = DVector<f64>;

/// Index arithmetic for local dof vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalLayout {
    pub k: usize,
    pub nk: usize,
    pub nf: usize,
}

impl LocalLayout {
    pub fn new(k: usize, nf: usize) -> Self {
        LocalLayout { k, nk: dim_p2(k), nf }
    }

    pub fn mk(&self) -> usize {
        self.k + 1
    }

    pub fn n_cell(&self) -> usize {
        2 * self.nk
    }

    pub fn n_face(&self) -> usize {
        2 * (self.k + 1)
    }

    pub fn len(&self) -> usize {
        self.n_cell() + self.nf * self.n_face()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, comp: usize, i: usize) -> usize {
        comp * self.nk + i
    }

    pub fn face(&self, lf: usize, comp: usize, j: usize) -> usize {
        self.n_cell() + lf * self.n_face() + comp * self.mk() + j
    }

    /// Vector index of entry `s` of a scalar dof vector `[cell | faces]`.
    fn scatter(&self, comp: usize, s: usize) -> usize {
        if s < self.nk {
            self.cell(comp, s)
        } else {
            let r = s - self.nk;
            self.face(r / self.mk(), comp, r % self.mk())
        }
    }

    fn n_scalar(&self) -> usize {
        self.nk + self.nf * self.mk()
    }
}

/// Piecewise gradient reconstruction on one simplex of the subtriangulation.
#[derive(Debug, Clone)]
pub struct SimplexGradient {
    pub simplex: usize,
    pub basis: ScaledBasis,
    /// Rows `(2a + b) * dim + i` hold the coefficient of basis function `i`
    /// in the `(a, b)` entry of the gradient.
    pub matrix: DMatrix<f64>,
}

impl SimplexGradient {
    pub fn eval(&self, dofs: &DVector<f64>, p: &Vec2) -> Matrix2<f64> {
        let n = self.basis.dim();
        let v = self.basis.eval(p);
        let coeffs = &self.matrix * dofs;
        let mut g = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                g[(a, b)] = (0..n).map(|i| coeffs[(2 * a + b) * n + i] * v[i]).sum();
            }
        }
        g
    }
}

/// Operators of one cell; built once and reused across Newton iterations.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub cell: usize,
    pub layout: LocalLayout,
    /// Orthonormal basis of degree `k + 1`; its first `dim P^k` functions
    /// span the cell unknowns.
    pub basis: ScaledBasis,
    pub face_bases: Vec<SegmentBasis>,
    /// Discrete divergence, `dim P^k x n`.
    pub div: DMatrix<f64>,
    /// Gradient of degree `k`, `4 dim P^k x n`, rows `(2a + b) * nk + i`.
    pub grad: DMatrix<f64>,
    /// Potential of degree `k + 1` per component, `2 dim P^{k+1} x n`.
    pub potential: DMatrix<f64>,
    /// Stabilization, `n x n`.
    pub stab: DMatrix<f64>,
    /// Scaled face residuals `h_F^{-1/2} delta_TF`, `2(k + 1) x n` per face;
    /// `stab` is the sum of their Gram matrices.
    pub stab_faces: Vec<DMatrix<f64>>,
    /// Local viscous matrix `grad^T grad + stab`.
    pub viscous: DMatrix<f64>,
}

impl LocalOperators {
    pub fn new(mesh: &PolyMesh, cell: usize, k: usize) -> Result<Self> {
        let c = &mesh.cells[cell];
        let layout = LocalLayout::new(k, c.num_faces());
        let basis = ScaledBasis::on_cell(mesh, cell, k + 1)?;
        let face_bases: Vec<SegmentBasis> = c.faces.iter().map(|&f| SegmentBasis::on_face(mesh, f, k)).collect();
        let mut ops = LocalOperators {
            cell,
            layout,
            basis,
            face_bases,
            div: DMatrix::zeros(0, 0),
            grad: DMatrix::zeros(0, 0),
            potential: DMatrix::zeros(0, 0),
            stab: DMatrix::zeros(0, 0),
            stab_faces: Vec::new(),
            viscous: DMatrix::zeros(0, 0),
        };
        ops.div = ops.build_divergence(mesh);
        ops.grad = ops.build_gradient(mesh);
        let ps = ops.build_potential_scalar(mesh)?;
        ops.potential = ops.scatter_rows(&ps);
        ops.stab_faces = ops.build_stabilization(mesh, &ps);
        let n = ops.layout.len();
        ops.stab = ops.stab_faces.iter().fold(DMatrix::zeros(n, n), |acc, d| acc + d.transpose() * d);
        ops.viscous = ops.grad.transpose() * &ops.grad + &ops.stab;
        Ok(ops)
    }

    pub fn n_dofs(&self) -> usize {
        self.layout.len()
    }

    pub fn k(&self) -> usize {
        self.layout.k
    }

    fn build_divergence(&self, mesh: &PolyMesh) -> DMatrix<f64> {
        let l = self.layout;
        let (k, nk) = (l.k, l.nk);
        let nb = self.basis.dim();
        let mut d = DMatrix::zeros(nk, l.len());
        let (mut v, mut dx, mut dy) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
        for (p, w) in cell_points(mesh, self.cell, 2 * k + 1).iter() {
            self.basis.eval_into(p, &mut v);
            self.basis.grad_into(p, &mut dx, &mut dy);
            for i in 0..nk {
                for j in 0..nk {
                    d[(i, l.cell(0, j))] -= w * v[j] * dx[i];
                    d[(i, l.cell(1, j))] -= w * v[j] * dy[i];
                }
            }
        }
        let cell = &mesh.cells[self.cell];
        let mut psi = vec![0.0; k + 1];
        for lf in 0..l.nf {
            let n = cell.outward_normal(mesh, lf);
            for (p, w) in face_points(mesh, cell.faces[lf], 2 * k + 1).iter() {
                self.basis.eval_into(p, &mut v);
                self.face_bases[lf].eval_into(p, &mut psi);
                for i in 0..nk {
                    for j in 0..=k {
                        d[(i, l.face(lf, 0, j))] += w * psi[j] * n.x * v[i];
                        d[(i, l.face(lf, 1, j))] += w * psi[j] * n.y * v[i];
                    }
                }
            }
        }
        d
    }

    fn build_gradient(&self, mesh: &PolyMesh) -> DMatrix<f64> {
        let l = self.layout;
        let (k, nk) = (l.k, l.nk);
        let nb = self.basis.dim();
        let mut g = DMatrix::zeros(4 * nk, l.len());
        let (mut v, mut dx, mut dy) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
        for (p, w) in cell_points(mesh, self.cell, 2 * k + 1).iter() {
            self.basis.eval_into(p, &mut v);
            self.basis.grad_into(p, &mut dx, &mut dy);
            for a in 0..2 {
                for (b, db) in [&dx, &dy].into_iter().enumerate() {
                    for i in 0..nk {
                        for j in 0..nk {
                            g[((2 * a + b) * nk + i, l.cell(a, j))] += w * db[j] * v[i];
                        }
                    }
                }
            }
        }
        let cell = &mesh.cells[self.cell];
        let mut psi = vec![0.0; k + 1];
        for lf in 0..l.nf {
            let n = cell.outward_normal(mesh, lf);
            for (p, w) in face_points(mesh, cell.faces[lf], 2 * k + 1).iter() {
                self.basis.eval_into(p, &mut v);
                self.face_bases[lf].eval_into(p, &mut psi);
                for a in 0..2 {
                    for b in 0..2 {
                        for i in 0..nk {
                            let t = w * n[b] * v[i];
                            for j in 0..=k {
                                g[((2 * a + b) * nk + i, l.face(lf, a, j))] += t * psi[j];
                            }
                            for j in 0..nk {
                                g[((2 * a + b) * nk + i, l.cell(a, j))] -= t * v[j];
                            }
                        }
                    }
                }
            }
        }
        g
    }

    /// Scalar potential `dim P^{k+1} x n_scalar`: stiffness solve with the
    /// mean fixed to the mean of the cell unknown.
    fn build_potential_scalar(&self, mesh: &PolyMesh) -> Result<DMatrix<f64>> {
        let l = self.layout;
        let (k, nk, mk) = (l.k, l.nk, l.mk());
        let nb = self.basis.dim();
        let ns = l.n_scalar();
        let mut stiff = DMatrix::zeros(nb, nb);
        let mut rhs = DMatrix::zeros(nb, ns);
        let (mut v, mut dx, mut dy) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
        for (p, w) in cell_points(mesh, self.cell, 2 * k + 2).iter() {
            self.basis.grad_into(p, &mut dx, &mut dy);
            for i in 0..nb {
                for j in 0..nb {
                    stiff[(i, j)] += w * (dx[i] * dx[j] + dy[i] * dy[j]);
                }
                for j in 0..nk {
                    rhs[(i, j)] += w * (dx[i] * dx[j] + dy[i] * dy[j]);
                }
            }
        }
        let cell = &mesh.cells[self.cell];
        let mut psi = vec![0.0; mk];
        for lf in 0..l.nf {
            let n = cell.outward_normal(mesh, lf);
            for (p, w) in face_points(mesh, cell.faces[lf], 2 * k + 2).iter() {
                self.basis.eval_into(p, &mut v);
                self.basis.grad_into(p, &mut dx, &mut dy);
                self.face_bases[lf].eval_into(p, &mut psi);
                for i in 0..nb {
                    let dn = w * (dx[i] * n.x + dy[i] * n.y);
                    for j in 0..mk {
                        rhs[(i, nk + lf * mk + j)] += dn * psi[j];
                    }
                    for j in 0..nk {
                        rhs[(i, j)] -= dn * v[j];
                    }
                }
            }
        }
        let mut pot = DMatrix::zeros(nb, ns);
        pot[(0, 0)] = 1.0;
        if nb > 1 {
            let kk = stiff.view((1, 1), (nb - 1, nb - 1)).into_owned();
            let rr = rhs.rows(1, nb - 1).into_owned();
            let chol = kk.cholesky().ok_or_else(|| Error::DegenerateCell {
                cell: self.cell,
                reason: "singular stiffness in potential reconstruction".into(),
            })?;
            pot.rows_mut(1, nb - 1).copy_from(&chol.solve(&rr));
        }
        Ok(pot)
    }

    fn scatter_rows(&self, scalar: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.layout;
        let r = scalar.nrows();
        let mut out = DMatrix::zeros(2 * r, l.len());
        for comp in 0..2 {
            for s in 0..l.n_scalar() {
                let col = l.scatter(comp, s);
                for i in 0..r {
                    out[(comp * r + i, col)] = scalar[(i, s)];
                }
            }
        }
        out
    }

    fn build_stabilization(&self, mesh: &PolyMesh, pot: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let l = self.layout;
        let (k, nk, mk) = (l.k, l.nk, l.mk());
        let nb = self.basis.dim();
        let ns = l.n_scalar();
        let cell = &mesh.cells[self.cell];
        let mut v = vec![0.0; nb];
        let mut psi = vec![0.0; mk];
        // cell part of pi_T^k(v_T - p v)
        let mut cell_minus_pot = -pot.rows(0, nk).into_owned();
        for i in 0..nk {
            cell_minus_pot[(i, i)] += 1.0;
        }
        let mut out = Vec::with_capacity(l.nf);
        for lf in 0..l.nf {
            // trace projection of the cell basis onto the face basis
            let mut proj = DMatrix::zeros(mk, nb);
            for (p, w) in face_points(mesh, cell.faces[lf], 2 * k + 2).iter() {
                self.basis.eval_into(p, &mut v);
                self.face_bases[lf].eval_into(p, &mut psi);
                for i in 0..mk {
                    for j in 0..nb {
                        proj[(i, j)] += w * psi[i] * v[j];
                    }
                }
            }
            let mut delta = -(&proj * pot) - proj.columns(0, nk) * &cell_minus_pot;
            for j in 0..mk {
                delta[(j, nk + lf * mk + j)] += 1.0;
            }
            delta /= mesh.faces[cell.faces[lf]].length.sqrt();
            let mut d = DMatrix::zeros(2 * mk, l.len());
            for comp in 0..2 {
                for s in 0..ns {
                    let col = l.scatter(comp, s);
                    for j in 0..mk {
                        d[(comp * mk + j, col)] = delta[(j, s)];
                    }
                }
            }
            out.push(d);
        }
        out
    }

    /// Cell velocity `v_T` at `p`.
    pub fn eval_cell(&self, dofs: &DVector<f64>, p: &Vec2) -> Vec2 {
        let l = self.layout;
        let v = self.basis.eval(p);
        let mut out = Vec2::zeros();
        for c in 0..2 {
            out[c] = (0..l.nk).map(|i| dofs[l.cell(c, i)] * v[i]).sum();
        }
        out
    }

    /// Gradient of the cell velocity at `p`, entry `(a, b)` = `d v_a / d x_b`.
    pub fn grad_cell(&self, dofs: &DVector<f64>, p: &Vec2) -> Matrix2<f64> {
        let l = self.layout;
        let nb = self.basis.dim();
        let (mut dx, mut dy) = (vec![0.0; nb], vec![0.0; nb]);
        self.basis.grad_into(p, &mut dx, &mut dy);
        let mut g = Matrix2::zeros();
        for a in 0..2 {
            for i in 0..l.nk {
                g[(a, 0)] += dofs[l.cell(a, i)] * dx[i];
                g[(a, 1)] += dofs[l.cell(a, i)] * dy[i];
            }
        }
        g
    }

    /// Face velocity `v_F` of local face `lf` at `p`.
    pub fn eval_face(&self, dofs: &DVector<f64>, lf: usize, p: &Vec2) -> Vec2 {
        let l = self.layout;
        let psi = self.face_bases[lf].eval(p);
        let mut out = Vec2::zeros();
        for c in 0..2 {
            out[c] = (0..l.mk()).map(|j| dofs[l.face(lf, c, j)] * psi[j]).sum();
        }
        out
    }

    /// Discrete divergence at `p`.
    pub fn eval_divergence(&self, dofs: &DVector<f64>, p: &Vec2) -> f64 {
        let d = &self.div * dofs;
        let v = self.basis.eval(p);
        (0..self.layout.nk).map(|i| d[i] * v[i]).sum()
    }

    /// Potential reconstruction at `p`.
    pub fn eval_potential(&self, dofs: &DVector<f64>, p: &Vec2) -> Vec2 {
        let nb = self.basis.dim();
        let c = &self.potential * dofs;
        let v = self.basis.eval(p);
        Vec2::new((0..nb).map(|i| c[i] * v[i]).sum(), (0..nb).map(|i| c[nb + i] * v[i]).sum())
    }

    /// Cell gradient of degree `k` at `p`.
    pub fn eval_gradient(&self, dofs: &DVector<f64>, p: &Vec2) -> Matrix2<f64> {
        let nk = self.layout.nk;
        let c = &self.grad * dofs;
        let v = self.basis.eval(p);
        Matrix2::from_fn(|a, b| (0..nk).map(|i| c[(2 * a + b) * nk + i] * v[i]).sum())
    }

    /// Interpolates a vector field with rules of degree `degree`.
    pub fn interpolate(&self, mesh: &PolyMesh, f: impl Fn(&Vec2) -> Vec2, degree: usize) -> LocalDofs {
        let l = self.layout;
        let cell = &mesh.cells[self.cell];
        let mut dofs = DVector::zeros(l.len());
        let mut v = vec![0.0; self.basis.dim()];
        for (p, w) in cell_points(mesh, self.cell, degree).iter() {
            self.basis.eval_into(p, &mut v);
            let fv = f(p) * w;
            for i in 0..l.nk {
                dofs[l.cell(0, i)] += fv.x * v[i];
                dofs[l.cell(1, i)] += fv.y * v[i];
            }
        }
        let mut psi = vec![0.0; l.mk()];
        for lf in 0..l.nf {
            for (p, w) in face_points(mesh, cell.faces[lf], degree).iter() {
                self.face_bases[lf].eval_into(p, &mut psi);
                let fv = f(p) * w;
                for j in 0..l.mk() {
                    dofs[l.face(lf, 0, j)] += fv.x * psi[j];
                    dofs[l.face(lf, 1, j)] += fv.y * psi[j];
                }
            }
        }
        dofs
    }

    /// Squared discrete H1 seminorm `|grad v_T|^2 + sum_F h_F^-1 |v_F - v_T|_F^2`.
    pub fn seminorm_sq(&self, mesh: &PolyMesh, dofs: &DVector<f64>) -> f64 {
        let k = self.k();
        let cell = &mesh.cells[self.cell];
        let mut s: f64 = cell_points(mesh, self.cell, 2 * k)
            .iter()
            .map(|(p, w)| w * self.grad_cell(dofs, p).norm_squared())
            .sum();
        for lf in 0..self.layout.nf {
            let hf = mesh.faces[cell.faces[lf]].length;
            s += face_points(mesh, cell.faces[lf], 2 * k)
                .iter()
                .map(|(p, w)| w * (self.eval_face(dofs, lf, p) - self.eval_cell(dofs, p)).norm_squared())
                .sum::<f64>()
                / hf;
        }
        s
    }

    /// Squared boundary seminorm `sum_F h_F^-1 |v_F - v_T|_F^2`.
    pub fn boundary_seminorm_sq(&self, mesh: &PolyMesh, dofs: &DVector<f64>) -> f64 {
        let k = self.k();
        let cell = &mesh.cells[self.cell];
        (0..self.layout.nf)
            .map(|lf| {
                let hf = mesh.faces[cell.faces[lf]].length;
                face_points(mesh, cell.faces[lf], 2 * k)
                    .iter()
                    .map(|(p, w)| w * (self.eval_face(dofs, lf, p) - self.eval_cell(dofs, p)).norm_squared())
                    .sum::<f64>()
                    / hf
            })
            .sum()
    }

    /// Stabilization value `s_T(v, v)`.
    pub fn stabilization_value(&self, dofs: &DVector<f64>) -> f64 {
        self.stab_faces.iter().map(|d| (d * dofs).norm_squared()).sum()
    }

    /// Piecewise gradient of degree `l` on the subtriangulation.
    pub fn gradient_submesh(&self, mesh: &PolyMesh, l: usize) -> Result<Vec<SimplexGradient>> {
        let lay = self.layout;
        let (k, nk) = (lay.k, lay.nk);
        let cell = &mesh.cells[self.cell];
        let nb = self.basis.dim();
        let mut out = Vec::with_capacity(cell.subtri.simplices.len());
        for (si, simplex) in cell.subtri.simplices.iter().enumerate() {
            let sb = ScaledBasis::on_triangle(&simplex.points(mesh), l)?;
            let ns = sb.dim();
            let mut g = DMatrix::zeros(4 * ns, lay.len());
            let mut t = vec![0.0; ns];
            let (mut v, mut dx, mut dy) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
            for (p, w) in simplex_points(mesh, simplex, l + k).iter() {
                sb.eval_into(p, &mut t);
                self.basis.grad_into(p, &mut dx, &mut dy);
                for a in 0..2 {
                    for (b, db) in [&dx, &dy].into_iter().enumerate() {
                        for i in 0..ns {
                            for j in 0..nk {
                                g[((2 * a + b) * ns + i, lay.cell(a, j))] += w * db[j] * t[i];
                            }
                        }
                    }
                }
            }
            let mut psi = vec![0.0; k + 1];
            for e in simplex.edges {
                let SimplexEdge::Boundary(lf) = e else { continue };
                let n = cell.outward_normal(mesh, lf);
                for (p, w) in face_points(mesh, cell.faces[lf], l + k).iter() {
                    sb.eval_into(p, &mut t);
                    self.basis.eval_into(p, &mut v);
                    self.face_bases[lf].eval_into(p, &mut psi);
                    for a in 0..2 {
                        for b in 0..2 {
                            for i in 0..ns {
                                let c = w * n[b] * t[i];
                                for j in 0..=k {
                                    g[((2 * a + b) * ns + i, lay.face(lf, a, j))] += c * psi[j];
                                }
                                for j in 0..nk {
                                    g[((2 * a + b) * ns + i, lay.cell(a, j))] -= c * v[j];
                                }
                            }
                        }
                    }
                }
            }
            out.push(SimplexGradient { simplex: si, basis: sb, matrix: g });
        }
        Ok(out)
    }
}

/// Builds the operators of every cell in parallel.
pub fn build_local_operators(mesh: &PolyMesh, k: usize) -> Result<Vec<LocalOperators>> {
    use rayon::prelude::*;
    (0..mesh.num_cells()).into_par_iter().map(|c| LocalOperators::new(mesh, c, k)).collect()
}
