//! Scaled polynomial bases, L2 projections and the Koszul complement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::{rot90, PolyMesh, Vec2};
use crate::quadrature::{segment_points, triangle_points, QuadPoints};

/// Dimension of the bivariate polynomials of total degree at most `degree`.
pub const fn dim_p2(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Same as [`dim_p2`] but zero for negative degrees.
pub fn dim_p2_signed(degree: isize) -> usize {
    if degree < 0 {
        0
    } else {
        dim_p2(degree as usize)
    }
}

fn powers(degree: usize) -> Vec<(i32, i32)> {
    let mut p = Vec::with_capacity(dim_p2(degree));
    for d in 0..=degree as i32 {
        for b in 0..=d {
            p.push((d - b, b));
        }
    }
    p
}

/// L2-orthonormal basis of P^l on a planar support, built from monomials in
/// `(x - center) / scale`.
///
/// The triangular change of basis keeps the hierarchy: the first
/// `dim_p2(m)` functions span P^m for every `m <= l`, and the first function
/// is the constant `1 / sqrt(|X|)`.
#[derive(Debug, Clone)]
pub struct ScaledBasis {
    pub center: Vec2,
    pub scale: f64,
    pub degree: usize,
    powers: Vec<(i32, i32)>,
    /// Row `i` holds the monomial coefficients of basis function `i`.
    coeffs: DMatrix<f64>,
}

fn orthonormalizer(gram: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    let chol = gram.cholesky().ok_or_else(|| Error::SingularGram(what.to_string()))?;
    let l = chol.l();
    let inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::SingularGram(what.to_string()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularGram(what.to_string()));
    }
    Ok(inv)
}

impl ScaledBasis {
    /// Builds the basis on the union of `triangles`.
    pub fn new(triangles: &[[Vec2; 3]], center: Vec2, scale: f64, degree: usize) -> Result<Self> {
        let n = dim_p2(degree);
        let mut basis = ScaledBasis { center, scale, degree, powers: powers(degree), coeffs: DMatrix::identity(n, n) };
        let qp = {
            let mut q = QuadPoints::default();
            for t in triangles {
                let tq = triangle_points(t, 2 * degree);
                q.points.extend(tq.points);
                q.weights.extend(tq.weights);
            }
            q
        };
        if qp.integrate(|_| 1.0) <= 0.0 {
            return Err(Error::SingularGram("support with zero measure".into()));
        }
        // two passes of Cholesky orthonormalization
        for pass in 0..2 {
            let gram = basis.gram(&qp);
            let inv = orthonormalizer(gram, &format!("degree-{degree} support (pass {pass})"))?;
            basis.coeffs = &inv * &basis.coeffs;
        }
        Ok(basis)
    }

    /// Basis on a mesh cell, centred at the centroid and scaled by the diameter.
    pub fn on_cell(mesh: &PolyMesh, cell: usize, degree: usize) -> Result<Self> {
        let c = &mesh.cells[cell];
        let tris: Vec<[Vec2; 3]> = c.subtri.simplices.iter().map(|s| s.points(mesh)).collect();
        Self::new(&tris, c.centroid, c.diameter, degree)
    }

    pub fn on_triangle(tri: &[Vec2; 3], degree: usize) -> Result<Self> {
        let center = (tri[0] + tri[1] + tri[2]) / 3.0;
        let diam = (tri[1] - tri[0]).norm().max((tri[2] - tri[1]).norm()).max((tri[0] - tri[2]).norm());
        Self::new(std::slice::from_ref(tri), center, diam, degree)
    }

    pub fn dim(&self) -> usize {
        self.powers.len()
    }

    fn gram(&self, qp: &QuadPoints) -> DMatrix<f64> {
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        let mut v = vec![0.0; n];
        for (p, w) in qp.iter() {
            self.eval_into(p, &mut v);
            for i in 0..n {
                for j in 0..=i {
                    g[(i, j)] += w * v[i] * v[j];
                }
            }
        }
        g.fill_upper_triangle_with_lower_triangle();
        g
    }

    fn monomials(&self, p: &Vec2, out: &mut [f64]) {
        let s = (p - self.center) / self.scale;
        let deg = self.degree as i32;
        let mut xp = [1.0; 32];
        let mut yp = [1.0; 32];
        for d in 1..=deg as usize {
            xp[d] = xp[d - 1] * s.x;
            yp[d] = yp[d - 1] * s.y;
        }
        for (o, &(a, b)) in out.iter_mut().zip(&self.powers) {
            *o = xp[a as usize] * yp[b as usize];
        }
    }

    /// Values of all basis functions at `p`.
    pub fn eval_into(&self, p: &Vec2, out: &mut [f64]) {
        let n = self.dim();
        let mut m = [0.0; 600];
        self.monomials(p, &mut m[..n]);
        for (i, o) in out[..n].iter_mut().enumerate() {
            let row = self.coeffs.row(i);
            *o = (0..=i).map(|j| row[j] * m[j]).sum();
        }
    }

    pub fn eval(&self, p: &Vec2) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.eval_into(p, &mut v);
        v
    }

    /// Gradients of all basis functions at `p`, written as `(dx, dy)` slices.
    pub fn grad_into(&self, p: &Vec2, dx: &mut [f64], dy: &mut [f64]) {
        let n = self.dim();
        let s = (p - self.center) / self.scale;
        let deg = self.degree;
        let mut xp = [1.0; 32];
        let mut yp = [1.0; 32];
        for d in 1..=deg {
            xp[d] = xp[d - 1] * s.x;
            yp[d] = yp[d - 1] * s.y;
        }
        let mut mx = [0.0; 600];
        let mut my = [0.0; 600];
        for (j, &(a, b)) in self.powers.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            mx[j] = if a > 0 { a as f64 * xp[a - 1] * yp[b] / self.scale } else { 0.0 };
            my[j] = if b > 0 { b as f64 * xp[a] * yp[b - 1] / self.scale } else { 0.0 };
        }
        for i in 0..n {
            let row = self.coeffs.row(i);
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..=i {
                gx += row[j] * mx[j];
                gy += row[j] * my[j];
            }
            dx[i] = gx;
            dy[i] = gy;
        }
    }

    /// Second derivatives `(dxx, dxy, dyy)` of all basis functions at `p`.
    pub fn hessian_into(&self, p: &Vec2, dxx: &mut [f64], dxy: &mut [f64], dyy: &mut [f64]) {
        let s = (p - self.center) / self.scale;
        let h2 = self.scale * self.scale;
        let pw = |x: f64, e: usize| x.powi(e as i32);
        for i in 0..self.dim() {
            let row = self.coeffs.row(i);
            let (mut a_xx, mut a_xy, mut a_yy) = (0.0, 0.0, 0.0);
            for (j, &(a, b)) in self.powers.iter().enumerate().take(i + 1) {
                let (a, b) = (a as usize, b as usize);
                if a > 1 {
                    a_xx += row[j] * (a * (a - 1)) as f64 * pw(s.x, a - 2) * pw(s.y, b);
                }
                if a > 0 && b > 0 {
                    a_xy += row[j] * (a * b) as f64 * pw(s.x, a - 1) * pw(s.y, b - 1);
                }
                if b > 1 {
                    a_yy += row[j] * (b * (b - 1)) as f64 * pw(s.x, a) * pw(s.y, b - 2);
                }
            }
            dxx[i] = a_xx / h2;
            dxy[i] = a_xy / h2;
            dyy[i] = a_yy / h2;
        }
    }

    /// Coefficients of a polynomial expressed in the basis, given as a
    /// closure; exact when `f` lies in the span and the rule is exact.
    pub fn project(&self, qp: &QuadPoints, f: impl Fn(&Vec2) -> f64) -> DVector<f64> {
        l2_project(self, qp, f)
    }
}

/// L2-orthogonal projection onto an orthonormal basis, with `qp` a rule on the
/// basis support.
pub fn l2_project(basis: &ScaledBasis, qp: &QuadPoints, f: impl Fn(&Vec2) -> f64) -> DVector<f64> {
    let n = basis.dim();
    let mut c = DVector::zeros(n);
    let mut v = vec![0.0; n];
    for (p, w) in qp.iter() {
        basis.eval_into(p, &mut v);
        let fw = f(p) * w;
        for i in 0..n {
            c[i] += fw * v[i];
        }
    }
    c
}

/// Evaluates `sum_i coeffs[i] * phi_i(p)` using the leading basis functions.
pub fn eval_expansion(basis: &ScaledBasis, coeffs: &[f64], p: &Vec2) -> f64 {
    let v = basis.eval(p);
    coeffs.iter().zip(&v).map(|(c, b)| c * b).sum()
}

/// Orthonormal Legendre basis on a segment, parametrized from `a` to `b`.
#[derive(Debug, Clone)]
pub struct SegmentBasis {
    pub a: Vec2,
    pub b: Vec2,
    pub degree: usize,
    length: f64,
}

impl SegmentBasis {
    pub fn new(a: Vec2, b: Vec2, degree: usize) -> Self {
        SegmentBasis { a, b, degree, length: (b - a).norm() }
    }

    pub fn on_face(mesh: &PolyMesh, face: usize, degree: usize) -> Self {
        let f = &mesh.faces[face];
        Self::new(mesh.vertices[f.vertices[0]], mesh.vertices[f.vertices[1]], degree)
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Values at the point with parameter `t` in `[0, 1]`.
    pub fn eval_param_into(&self, t: f64, out: &mut [f64]) {
        let x = 2.0 * t - 1.0;
        let (mut p0, mut p1) = (1.0, x);
        for (j, o) in out.iter_mut().enumerate().take(self.degree + 1) {
            let pj = match j {
                0 => 1.0,
                1 => x,
                _ => {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                    p2
                }
            };
            *o = pj * ((2 * j + 1) as f64 / self.length).sqrt();
        }
    }

    /// Values at a point on the segment.
    pub fn eval_into(&self, p: &Vec2, out: &mut [f64]) {
        let d = self.b - self.a;
        let t = (p - self.a).dot(&d) / d.norm_squared();
        self.eval_param_into(t, out);
    }

    pub fn eval(&self, p: &Vec2) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.eval_into(p, &mut v);
        v
    }

    pub fn quadrature(&self, degree: usize) -> QuadPoints {
        segment_points(&self.a, &self.b, degree)
    }

    pub fn project(&self, degree: usize, f: impl Fn(&Vec2) -> f64) -> DVector<f64> {
        let qp = self.quadrature(degree);
        let mut c = DVector::zeros(self.dim());
        let mut v = vec![0.0; self.dim()];
        for (p, w) in qp.iter() {
            self.eval_into(p, &mut v);
            let fw = f(p) * w;
            for i in 0..self.dim() {
                c[i] += fw * v[i];
            }
        }
        c
    }
}

/// Generators `(x - x_T)^perp m` of the Koszul complement G^{c,k}(T), with
/// `m` ranging over the first `dim P^{k-1}` functions of a cell basis.
#[derive(Debug, Clone)]
pub struct KoszulBasis {
    pub apex: Vec2,
    pub degree: isize,
    dim: usize,
}

impl KoszulBasis {
    /// Empty for `k <= 0`.
    pub fn new(apex: Vec2, k: isize) -> Self {
        KoszulBasis { apex, degree: k, dim: if k >= 1 { dim_p2_signed(k - 1) } else { 0 } }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the generators at `p`, using `cell_values` (values of a cell
    /// basis of degree at least `k - 1` at `p`).
    pub fn eval_into(&self, p: &Vec2, cell_values: &[f64], out: &mut [Vec2]) {
        let r = rot90(&(p - self.apex));
        for (o, &m) in out.iter_mut().zip(&cell_values[..self.dim]) {
            *o = r * m;
        }
    }
}

pub fn koszul_basis(apex: Vec2, k: isize) -> KoszulBasis {
    KoszulBasis::new(apex, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_cartesian, gen_hexagonal, Rect};
    use crate::quadrature::cell_points;

    fn unit_square_basis(deg: usize) -> (PolyMesh, ScaledBasis) {
        let m = gen_cartesian(1, Rect::unit()).unwrap();
        let b = ScaledBasis::on_cell(&m, 0, deg).unwrap();
        (m, b)
    }

    #[test]
    fn dimensions() {
        assert_eq!(dim_p2(0), 1);
        assert_eq!(dim_p2(3), 10);
        assert_eq!(dim_p2_signed(-1), 0);
        let (_, b) = unit_square_basis(4);
        assert_eq!(b.dim(), 15);
    }

    #[test]
    fn basis_is_orthonormal_under_a_finer_rule() {
        let m = gen_hexagonal(4, Rect::unit()).unwrap();
        for c in [0, 5, 11] {
            let b = ScaledBasis::on_cell(&m, c, 4).unwrap();
            let qp = cell_points(&m, c, 12);
            let n = b.dim();
            let mut g = DMatrix::<f64>::zeros(n, n);
            for (p, w) in qp.iter() {
                let v = b.eval(p);
                g += DMatrix::from_fn(n, n, |i, j| w * v[i] * v[j]);
            }
            let cond = {
                let s = g.clone().symmetric_eigenvalues();
                s.max() / s.min()
            };
            assert!((g - DMatrix::identity(n, n)).amax() < 1e-12);
            assert!(cond <= 1e3);
        }
    }

    #[test]
    fn first_function_is_normalized_constant() {
        let m = gen_hexagonal(3, Rect::unit()).unwrap();
        let b = ScaledBasis::on_cell(&m, 4, 2).unwrap();
        let area = m.cells[4].area;
        let v = b.eval(&m.cells[4].centroid);
        assert!((v[0] - 1.0 / area.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mean_of_x_on_unit_square() {
        let (m, b) = unit_square_basis(0);
        let qp = cell_points(&m, 0, 2);
        let c = l2_project(&b, &qp, |p| p.x);
        assert!((eval_expansion(&b, c.as_slice(), &Vec2::new(0.3, 0.9)) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn projector_fixes_polynomials() {
        let m = gen_hexagonal(3, Rect::unit()).unwrap();
        let b = ScaledBasis::on_cell(&m, 7, 3).unwrap();
        let qp = cell_points(&m, 7, 6);
        let f = |p: &Vec2| 1.0 - 2.0 * p.x + p.x * p.y * p.y + 3.0 * p.y.powi(3);
        let c = l2_project(&b, &qp, f);
        for p in &qp.points {
            assert!((eval_expansion(&b, c.as_slice(), p) - f(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (_, b) = unit_square_basis(3);
        let p = Vec2::new(0.31, 0.77);
        let n = b.dim();
        let (mut dx, mut dy) = (vec![0.0; n], vec![0.0; n]);
        b.grad_into(&p, &mut dx, &mut dy);
        let e = 1e-6;
        let fx: Vec<f64> = b.eval(&(p + Vec2::new(e, 0.0))).iter().zip(b.eval(&(p - Vec2::new(e, 0.0)))).map(|(a, c)| (a - c) / (2.0 * e)).collect();
        let fy: Vec<f64> = b.eval(&(p + Vec2::new(0.0, e))).iter().zip(b.eval(&(p - Vec2::new(0.0, e)))).map(|(a, c)| (a - c) / (2.0 * e)).collect();
        for i in 0..n {
            assert!((dx[i] - fx[i]).abs() < 1e-7);
            assert!((dy[i] - fy[i]).abs() < 1e-7);
        }
        let (mut xx, mut xy, mut yy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        b.hessian_into(&p, &mut xx, &mut xy, &mut yy);
        let (mut gx1, mut gy1, mut gx0, mut gy0) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        b.grad_into(&(p + Vec2::new(e, 0.0)), &mut gx1, &mut gy1);
        b.grad_into(&(p - Vec2::new(e, 0.0)), &mut gx0, &mut gy0);
        for i in 0..n {
            assert!((xx[i] - (gx1[i] - gx0[i]) / (2.0 * e)).abs() < 1e-6);
            assert!((xy[i] - (gy1[i] - gy0[i]) / (2.0 * e)).abs() < 1e-6);
        }
    }

    #[test]
    fn segment_basis_orthonormal() {
        let s = SegmentBasis::new(Vec2::new(0.2, 0.1), Vec2::new(0.9, 0.6), 5);
        let qp = s.quadrature(10);
        let n = s.dim();
        let mut g = DMatrix::<f64>::zeros(n, n);
        for (p, w) in qp.iter() {
            let v = s.eval(p);
            g += DMatrix::from_fn(n, n, |i, j| w * v[i] * v[j]);
        }
        assert!((g - DMatrix::identity(n, n)).amax() < 1e-13);
    }

    #[test]
    fn koszul_dimensions() {
        let a = Vec2::zeros();
        assert_eq!(koszul_basis(a, -1).dim(), 0);
        assert_eq!(koszul_basis(a, 0).dim(), 0);
        assert_eq!(koszul_basis(a, 1).dim(), 1);
        assert_eq!(koszul_basis(a, 2).dim(), 3);
        for k in 1..6usize {
            let count = (k + 1) * (k + 2) + 1 - (k + 2) * (k + 3) / 2;
            assert_eq!(koszul_basis(a, k as isize).dim(), count);
        }
    }

    #[test]
    fn koszul_degree_one_is_rotated_position() {
        let (m, b) = unit_square_basis(1);
        let kz = koszul_basis(Vec2::zeros(), 1);
        let p = Vec2::new(0.25, 0.5);
        let mut out = [Vec2::zeros()];
        kz.eval_into(&p, &b.eval(&p), &mut out);
        // P^0 generator is the normalized constant 1/sqrt(|T|) = 1
        assert!((out[0] - Vec2::new(-0.5, 0.25)).norm() < 1e-14);
        let _ = m;
    }
}
