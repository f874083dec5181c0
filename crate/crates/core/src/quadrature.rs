//! Gauss rules on segments and collapsed Gauss rules on triangles.
//!
//! Triangle rules come from the Duffy map of a tensor Gauss-Legendre rule, so
//! every degree is available with positive weights and interior points.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::mesh::{PolyMesh, Simplex, Vec2};

/// Rule on the reference segment `[0, 1]` or triangle `{(0,0), (1,0), (0,1)}`.
#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Reference coordinates; segments use only the first entry.
    pub points: Vec<[f64; 2]>,
    /// Weights summing to the reference measure (1 or 1/2).
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Legendre polynomial P_n and its derivative at z
    let legendre = |z: f64| {
        let (mut p1, mut p2) = (1.0, 0.0);
        for j in 1..=n {
            let p3 = p2;
            p2 = p1;
            p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
        }
        (p1, n as f64 * (z * p1 - p2) / (z * z - 1.0))
    };
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(z);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn build_segment(degree: usize) -> QuadRule {
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    QuadRule {
        points: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0]).collect(),
        weights: w.iter().map(|&t| 0.5 * t).collect(),
        exactness_degree: 2 * n - 1,
    }
}

fn build_triangle(degree: usize) -> QuadRule {
    // the Duffy Jacobian adds one degree in the collapsed direction
    let n = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (x[i] + 1.0);
        for j in 0..n {
            let v = 0.5 * (x[j] + 1.0);
            points.push([u, v * (1.0 - u)]);
            weights.push(0.25 * w[i] * w[j] * (1.0 - u));
        }
    }
    QuadRule { points, weights, exactness_degree: (2 * n - 2).max(degree) }
}

type Cache = Mutex<HashMap<usize, Arc<QuadRule>>>;

fn cached(cache: &'static OnceLock<Cache>, degree: usize, build: fn(usize) -> QuadRule) -> Arc<QuadRule> {
    let m = cache.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = m.lock().unwrap_or_else(|e| e.into_inner());
    guard.entry(degree).or_insert_with(|| Arc::new(build(degree))).clone()
}

/// Rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn segment_quadrature(degree: usize) -> Arc<QuadRule> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    cached(&CACHE, degree, build_segment)
}

/// Rule on the reference triangle exact for polynomials of degree `degree`.
pub fn triangle_quadrature(degree: usize) -> Arc<QuadRule> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    cached(&CACHE, degree, build_triangle)
}

/// Physical quadrature nodes and weights.
#[derive(Debug, Clone, Default)]
pub struct QuadPoints {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
}

impl QuadPoints {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec2, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(&Vec2) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * f(p)).sum()
    }
}

pub fn simplex_points(mesh: &PolyMesh, simplex: &Simplex, degree: usize) -> QuadPoints {
    triangle_points(&simplex.points(mesh), degree)
}

pub fn triangle_points(tri: &[Vec2; 3], degree: usize) -> QuadPoints {
    let rule = triangle_quadrature(degree);
    let [a, b, c] = *tri;
    let jac = crate::mesh::cross3(&a, &b, &c).abs();
    QuadPoints {
        points: rule.points.iter().map(|p| a + (b - a) * p[0] + (c - a) * p[1]).collect(),
        weights: rule.weights.iter().map(|w| w * jac).collect(),
    }
}

pub fn segment_points(a: &Vec2, b: &Vec2, degree: usize) -> QuadPoints {
    let rule = segment_quadrature(degree);
    let len = (b - a).norm();
    QuadPoints {
        points: rule.points.iter().map(|p| a + (b - a) * p[0]).collect(),
        weights: rule.weights.iter().map(|w| w * len).collect(),
    }
}

/// Cell rule assembled from the simplices of its subtriangulation.
pub fn cell_points(mesh: &PolyMesh, cell: usize, degree: usize) -> QuadPoints {
    let mut qp = QuadPoints::default();
    for s in &mesh.cells[cell].subtri.simplices {
        let sp = simplex_points(mesh, s, degree);
        qp.points.extend(sp.points);
        qp.weights.extend(sp.weights);
    }
    qp
}

pub fn face_points(mesh: &PolyMesh, face: usize, degree: usize) -> QuadPoints {
    let f = &mesh.faces[face];
    segment_points(&mesh.vertices[f.vertices[0]], &mesh.vertices[f.vertices[1]], degree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn reference_triangle_measures() {
        let r = triangle_quadrature(0);
        assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        let r = triangle_quadrature(2);
        let xy: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0] * p[1]).sum();
        assert!((xy - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn segment_x8() {
        let r = segment_quadrature(8);
        let v: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(8)).sum();
        assert!((v - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_rules_exact_for_all_monomials() {
        for d in 0..=24usize {
            let r = triangle_quadrature(d);
            assert!(r.exactness_degree >= d);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for a in 0..=d as u32 {
                let b = d as u32 - a;
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let v: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                assert!(((v - exact) / exact).abs() < 1e-13, "deg {d} x^{a} y^{b}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn segment_rules_exact() {
        for d in 0..=30usize {
            let r = segment_quadrature(d);
            assert!(r.exactness_degree >= d);
            let v: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(d as i32)).sum();
            assert!((v * (d as f64 + 1.0) - 1.0).abs() < 1e-13, "degree {d}");
        }
    }

    #[test]
    fn physical_triangle_area() {
        let tri = [Vec2::new(1.0, 1.0), Vec2::new(3.0, 1.5), Vec2::new(0.5, 4.0)];
        let q = triangle_points(&tri, 3);
        let area = 0.5 * crate::mesh::cross3(&tri[0], &tri[1], &tri[2]);
        assert!((q.integrate(|_| 1.0) - area).abs() < 1e-13);
        // centroid from first moments
        let cx = q.integrate(|p| p.x) / area;
        assert!((cx - 1.5).abs() < 1e-13);
    }

    #[test]
    fn rules_are_cached() {
        assert!(Arc::ptr_eq(&triangle_quadrature(7), &triangle_quadrature(7)));
    }
}
