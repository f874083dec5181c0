//! Randomized operator invariant checks on small meshes of every family.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::dim_p2;
use crate::discretization::Discretization;
use crate::error::Result;
use crate::forms::{assemble_body_force, assemble_coupling, trilinear_apply, Mode};
use crate::mesh::{Family, Rect, Vec2};
use crate::quadrature::{cell_points, simplex_points};

/// Cells per direction of the check meshes.
pub const CHECK_RESOLUTION: usize = 4;

/// Vector polynomial with random coefficients in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct RandomPoly {
    pub degree: usize,
    /// Coefficients of `x^(d - b) y^b`, ordered by total degree `d`.
    pub coeffs: Vec<Vec2>,
}

impl RandomPoly {
    pub fn new(degree: usize, rng: &mut impl Rng) -> Self {
        let coeffs = (0..dim_p2(degree)).map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        RandomPoly { degree, coeffs }
    }

    fn terms(&self) -> impl Iterator<Item = (i32, i32, &Vec2)> {
        (0..=self.degree as i32).flat_map(|d| (0..=d).map(move |b| (d - b, b))).zip(&self.coeffs).map(|((a, b), c)| (a, b, c))
    }

    pub fn eval(&self, p: &Vec2) -> Vec2 {
        self.terms().map(|(a, b, c)| c * (p.x.powi(a) * p.y.powi(b))).sum()
    }

    pub fn divergence(&self, p: &Vec2) -> f64 {
        self.terms()
            .map(|(a, b, c)| {
                let dx = if a > 0 { a as f64 * p.x.powi(a - 1) * p.y.powi(b) } else { 0.0 };
                let dy = if b > 0 { b as f64 * p.x.powi(a) * p.y.powi(b - 1) } else { 0.0 };
                c.x * dx + c.y * dy
            })
            .sum()
    }

    /// Scalar part `x`-component, used as a potential; returns value and gradient.
    pub fn scalar(&self, p: &Vec2) -> (f64, Vec2) {
        let mut v = 0.0;
        let mut g = Vec2::zeros();
        for (a, b, c) in self.terms() {
            v += c.x * p.x.powi(a) * p.y.powi(b);
            if a > 0 {
                g.x += c.x * a as f64 * p.x.powi(a - 1) * p.y.powi(b);
            }
            if b > 0 {
                g.y += c.x * b as f64 * p.x.powi(a) * p.y.powi(b - 1);
            }
        }
        (v, g)
    }
}

/// Tolerances of the checks.
pub mod tol {
    pub const COMMUTATION: f64 = 1e-11;
    pub const DIVERGENCE: f64 = 1e-10;
    pub const CONSISTENCY: f64 = 1e-10;
    pub const EXACTNESS: f64 = 1e-11;
    pub const NON_DISSIPATIVITY: f64 = 1e-12;
    pub const INVARIANCE: f64 = 1e-11;
}

/// `max |D_T I v - pi_T div v|` over cells and random fields of degree `k + 2`.
pub fn commutation_error(d: &Discretization, cases: usize, rng: &mut impl Rng) -> f64 {
    let k = d.k;
    let nk = d.nk();
    let degree = 2 * k + 4;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let v = RandomPoly::new(k + 2, rng);
        for (c, ops) in d.ops.iter().enumerate() {
            let dofs = ops.interpolate(&d.mesh, |p| v.eval(p), degree);
            let dv = &ops.div * &dofs;
            let mut proj = DVector::zeros(nk);
            let mut phi = vec![0.0; ops.basis.dim()];
            for (p, w) in cell_points(&d.mesh, c, degree).iter() {
                ops.basis.eval_into(p, &mut phi);
                let g = v.divergence(p) * w;
                for i in 0..nk {
                    proj[i] += g * phi[i];
                }
            }
            worst = worst.max((dv - proj).amax());
        }
    }
    worst
}

fn random_local(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// `max |div R v - D v|` at quadrature points for random local dofs.
pub fn divergence_error(d: &Discretization, cases: usize, rng: &mut impl Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for (c, ops) in d.ops.iter().enumerate() {
        let rec = &d.recs[c];
        for _ in 0..cases {
            let dofs = random_local(ops.n_dofs(), rng);
            let coeffs = rec.apply(&dofs);
            for (s, simplex) in d.mesh.cells[c].subtri.simplices.iter().enumerate() {
                for (p, _) in simplex_points(&d.mesh, simplex, 2 * d.k + 2).iter() {
                    let div = rec.space.eval(&coeffs, s, p).1;
                    worst = worst.max((div - ops.eval_divergence(&dofs, p)).abs());
                }
            }
        }
    }
    worst
}

/// `max ||pi_T^{k-1} (R v - v_T)||` for random local dofs; zero for `k = 0`.
pub fn consistency_error(d: &Discretization, cases: usize, rng: &mut impl Rng) -> f64 {
    if d.k == 0 {
        return 0.0;
    }
    let m = dim_p2(d.k - 1);
    let mut worst: f64 = 0.0;
    for (c, ops) in d.ops.iter().enumerate() {
        let rec = &d.recs[c];
        let mut phi = vec![0.0; ops.basis.dim()];
        for _ in 0..cases {
            let dofs = random_local(ops.n_dofs(), rng);
            let coeffs = rec.apply(&dofs);
            let mut proj = DVector::<f64>::zeros(2 * m);
            for (s, simplex) in d.mesh.cells[c].subtri.simplices.iter().enumerate() {
                for (p, w) in simplex_points(&d.mesh, simplex, 2 * d.k + 2).iter() {
                    let diff = (rec.space.eval(&coeffs, s, p).0 - ops.eval_cell(&dofs, p)) * w;
                    ops.basis.eval_into(p, &mut phi);
                    for i in 0..m {
                        proj[i] += diff.x * phi[i];
                        proj[m + i] += diff.y * phi[i];
                    }
                }
            }
            worst = worst.max(proj.norm());
        }
    }
    worst
}

/// `max |R I w - w|` at quadrature points for random `w` in `P^k`.
pub fn exactness_error(d: &Discretization, cases: usize, rng: &mut impl Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let w = RandomPoly::new(d.k, rng);
        for (c, ops) in d.ops.iter().enumerate() {
            let dofs = ops.interpolate(&d.mesh, |p| w.eval(p), 2 * d.k + 2);
            let coeffs = d.recs[c].apply(&dofs);
            for (s, simplex) in d.mesh.cells[c].subtri.simplices.iter().enumerate() {
                for (p, _) in simplex_points(&d.mesh, simplex, 2 * d.k + 2).iter() {
                    worst = worst.max((d.recs[c].space.eval(&coeffs, s, p).0 - w.eval(p)).amax());
                }
            }
        }
    }
    worst
}

/// `max |t_h(w, v, v)| / (|w| |v|^2)` for random global vectors.
pub fn non_dissipativity_error(d: &Discretization, cases: usize, mode: Mode, rng: &mut impl Rng) -> f64 {
    let n = d.n_velocity();
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (w, v) = (random_local(n, rng), random_local(n, rng));
        let t = trilinear_apply(d, &w, &v, &v, mode);
        worst = worst.max(t.abs() / (w.norm() * v.norm_squared()));
    }
    worst
}

/// `max |l_h(grad psi, v) - b_h(v, pi psi)|` over boundary-free velocity
/// basis vectors, for random `psi` of degree up to `k + 3`.
pub fn invariance_error(d: &Discretization, cases: usize, rng: &mut impl Rng) -> f64 {
    let b = assemble_coupling(d).expect("coupling assembly");
    let mask = d.boundary_mask();
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let psi = RandomPoly::new(1 + i % (d.k + 3), rng);
        let load = assemble_body_force(d, |p| psi.scalar(p).1, Mode::Robust);
        let pp = d.project_pressure(|p| psi.scalar(p).0, 2 * d.k + 6);
        let r = load - b.transpose_mul_vec(&pp);
        for (g, &bnd) in mask.iter().enumerate() {
            if !bnd {
                worst = worst.max(r[g].abs());
            }
        }
    }
    worst
}

/// Outcome of one check on one mesh.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub family: Family,
    pub k: usize,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} k={} {}: {:.3e} (tolerance {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.k,
            self.family,
            self.value,
            self.tolerance
        )
    }
}

/// Runs every check with `cases` random samples for `k` in `0..=2` on one
/// mesh per family.
pub fn run_checks(cases: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for family in [Family::Cartesian, Family::Hexagonal, Family::Kershaw] {
        let mesh = family.generate(CHECK_RESOLUTION, Rect::unit())?;
        for k in 0..=2 {
            let d = Discretization::new(mesh.clone(), k)?;
            let mut push = |name, value, tolerance| out.push(CheckResult { name, family, k, value, tolerance });
            push("commutation", commutation_error(&d, cases, &mut rng), tol::COMMUTATION);
            push("divergence", divergence_error(&d, cases, &mut rng), tol::DIVERGENCE);
            if k >= 1 {
                push("consistency", consistency_error(&d, cases, &mut rng), tol::CONSISTENCY);
            }
            push("exactness", exactness_error(&d, cases, &mut rng), tol::EXACTNESS);
            push("non-dissipativity", non_dissipativity_error(&d, cases, Mode::Robust, &mut rng), tol::NON_DISSIPATIVITY);
            push("invariance", invariance_error(&d, cases.max(k + 3), &mut rng), tol::INVARIANCE);
        }
    }
    Ok(out)
}

/// Summary of [`run_checks`] as printable lines.
pub struct CheckReport {
    pub lines: Vec<String>,
    pub failed: usize,
}

pub fn run_all(cases: usize) -> Result<CheckReport> {
    let results = run_checks(cases, 2024)?;
    Ok(CheckReport { lines: results.iter().map(CheckResult::line).collect(), failed: results.iter().filter(|r| !r.passed()).count() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::gen_hexagonal;

    #[test]
    fn random_poly_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = RandomPoly::new(3, &mut rng);
        let p = Vec2::new(0.3, 0.7);
        let h = 1e-6;
        let fd = |e: Vec2| (q.eval(&(p + e * h)) - q.eval(&(p - e * h))) / (2.0 * h);
        let div = fd(Vec2::new(1.0, 0.0)).x + fd(Vec2::new(0.0, 1.0)).y;
        assert!((div - q.divergence(&p)).abs() < 1e-8);
        let g = q.scalar(&p).1;
        assert!((g.x - fd(Vec2::new(1.0, 0.0)).x).abs() < 1e-8 && (g.y - fd(Vec2::new(0.0, 1.0)).x).abs() < 1e-8);
    }

    #[test]
    fn checks_pass_on_a_hexagonal_mesh() {
        let d = Discretization::new(gen_hexagonal(3, Rect::unit()).unwrap(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(commutation_error(&d, 3, &mut rng) <= tol::COMMUTATION);
        assert!(divergence_error(&d, 3, &mut rng) <= tol::DIVERGENCE);
        assert!(consistency_error(&d, 3, &mut rng) <= tol::CONSISTENCY);
        assert!(exactness_error(&d, 3, &mut rng) <= tol::EXACTNESS);
        assert!(non_dissipativity_error(&d, 3, Mode::Classic, &mut rng) <= tol::NON_DISSIPATIVITY);
        assert!(invariance_error(&d, 4, &mut rng) <= tol::INVARIANCE);
    }
}
