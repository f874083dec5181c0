//! Polygonal meshes with a per-cell fan subtriangulation.
//!
//! Faces are stored once with a global orientation running from the lower to
//! the higher vertex index. The outward normal of a cell at one of its faces is
//! the global face normal multiplied by the cell's face sign.

mod generators;
mod io;
mod subtri;

use std::collections::HashMap;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub use generators::{gen_cartesian, gen_hexagonal, gen_kershaw, Family, Rect, DEFAULT_KERSHAW_DISTORTION};
pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};
pub use subtri::{subtriangulate, InteriorEdge, Simplex, SimplexEdge, SubTriangulation};

pub type Vec2 = Vector2<f64>;

/// Counterclockwise rotation by a quarter turn.
#[inline]
pub fn rot90(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Twice the signed area of the triangle `(a, b, c)`.
#[inline]
pub fn cross3(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Endpoints, lower global index first.
    pub vertices: [usize; 2],
    /// First incident cell and, for interior faces, the second one.
    pub cells: (usize, Option<usize>),
    pub length: f64,
    pub midpoint: Vec2,
    /// Unit tangent from `vertices[0]` to `vertices[1]`.
    pub tangent: Vec2,
    /// Unit normal, the tangent rotated clockwise.
    pub normal: Vec2,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }

    /// Point at parameter `s` in `[0, 1]` along the global orientation.
    pub fn point_at(&self, s: f64, mesh: &PolyMesh) -> Vec2 {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        a + (b - a) * s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Vertex loop, counterclockwise.
    pub vertices: Vec<usize>,
    /// `faces[i]` joins `vertices[i]` and `vertices[i + 1]`.
    pub faces: Vec<usize>,
    /// +1 when the global face normal points out of this cell.
    pub face_signs: Vec<f64>,
    pub area: f64,
    pub centroid: Vec2,
    pub diameter: f64,
    pub subtri: SubTriangulation,
}

impl Cell {
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Outward unit normal on local face `i`.
    pub fn outward_normal(&self, mesh: &PolyMesh, i: usize) -> Vec2 {
        mesh.faces[self.faces[i]].normal * self.face_signs[i]
    }

    /// Position of global face `face` in this cell's face list.
    pub fn local_face(&self, face: usize) -> Option<usize> {
        self.faces.iter().position(|&f| f == face)
    }
}

/// Immutable polygonal mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMesh {
    pub vertices: Vec<Vec2>,
    pub cells: Vec<Cell>,
    pub faces: Vec<Face>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    /// Largest number of simplices in a cell subtriangulation.
    pub n_submesh: usize,
    /// Largest number of faces of a cell.
    pub n_faces: usize,
    /// Smallest inradius-to-diameter ratio over all simplices.
    pub min_shape_ratio: f64,
}

fn polygon_area_centroid(pts: &[Vec2]) -> (f64, Vec2) {
    let n = pts.len();
    let mut a2 = 0.0;
    let mut c = Vec2::zeros();
    let o = pts[0];
    for i in 0..n {
        let p = pts[i] - o;
        let q = pts[(i + 1) % n] - o;
        let cr = p.x * q.y - p.y * q.x;
        a2 += cr;
        c += (p + q) * cr;
    }
    let area = 0.5 * a2;
    if a2.abs() > 0.0 {
        (area, o + c / (3.0 * a2))
    } else {
        (area, o)
    }
}

fn diameter(pts: &[Vec2]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            d = d.max((p - q).norm());
        }
    }
    d
}

fn segments_cross(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let d1 = cross3(a, b, c);
    let d2 = cross3(a, b, d);
    let d3 = cross3(c, d, a);
    let d4 = cross3(c, d, b);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

fn is_simple(pts: &[Vec2]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(&pts[i], &pts[(i + 1) % n], &pts[j], &pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Builds a mesh from vertex coordinates and cell vertex loops.
///
/// Clockwise loops are reversed. Zero-area loops, loops with repeated vertices
/// and self-intersecting loops are rejected, as are edges shared by more than
/// two cells or traversed twice in the same direction.
pub fn build_mesh(vertices: Vec<Vec2>, cell_loops: Vec<Vec<usize>>) -> Result<PolyMesh> {
    if cell_loops.is_empty() {
        return Err(Error::InvalidMesh("mesh has no cells".into()));
    }
    let nv = vertices.len();
    let mut loops = Vec::with_capacity(cell_loops.len());
    for (c, mut lp) in cell_loops.into_iter().enumerate() {
        if lp.len() < 3 {
            return Err(Error::DegenerateCell { cell: c, reason: format!("{} vertices", lp.len()) });
        }
        if let Some(&bad) = lp.iter().find(|&&v| v >= nv) {
            return Err(Error::InvalidMesh(format!("cell {c} references vertex {bad} of {nv}")));
        }
        let mut sorted = lp.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DegenerateCell { cell: c, reason: "repeated vertex".into() });
        }
        let pts: Vec<Vec2> = lp.iter().map(|&v| vertices[v]).collect();
        let (area, _) = polygon_area_centroid(&pts);
        let scale = diameter(&pts);
        if area.abs() <= 1e-14 * scale * scale {
            return Err(Error::DegenerateCell { cell: c, reason: "zero area".into() });
        }
        if !is_simple(&pts) {
            return Err(Error::DegenerateCell { cell: c, reason: "self-intersecting loop".into() });
        }
        if area < 0.0 {
            lp.reverse();
        }
        loops.push(lp);
    }

    let mut faces: Vec<Face> = Vec::new();
    let mut face_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cells = Vec::with_capacity(loops.len());
    for (c, lp) in loops.iter().enumerate() {
        let n = lp.len();
        let mut cfaces = Vec::with_capacity(n);
        let mut signs = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (lp[i], lp[(i + 1) % n]);
            let key = (a.min(b), a.max(b));
            // the loop is CCW, so the outward normal of a -> b is the tangent rotated clockwise
            let sign = if a < b { 1.0 } else { -1.0 };
            let f = match face_of.get(&key) {
                Some(&f) => {
                    let face = &mut faces[f];
                    if face.cells.1.is_some() {
                        return Err(Error::NonManifoldEdge(key.0, key.1));
                    }
                    let first = face.cells.0;
                    let first_sign = cells_sign(&loops[first], key);
                    if first_sign == sign {
                        return Err(Error::InvalidMesh(format!(
                            "edge ({}, {}) traversed in the same direction by cells {first} and {c}",
                            key.0, key.1
                        )));
                    }
                    face.cells.1 = Some(c);
                    f
                }
                None => {
                    let p = vertices[key.0];
                    let q = vertices[key.1];
                    let d = q - p;
                    let length = d.norm();
                    let tangent = d / length;
                    faces.push(Face {
                        vertices: [key.0, key.1],
                        cells: (c, None),
                        length,
                        midpoint: (p + q) * 0.5,
                        tangent,
                        normal: Vec2::new(tangent.y, -tangent.x),
                    });
                    face_of.insert(key, faces.len() - 1);
                    faces.len() - 1
                }
            };
            cfaces.push(f);
            signs.push(sign);
        }
        let pts: Vec<Vec2> = lp.iter().map(|&v| vertices[v]).collect();
        let (area, centroid) = polygon_area_centroid(&pts);
        cells.push(Cell {
            vertices: lp.clone(),
            faces: cfaces,
            face_signs: signs,
            area,
            centroid,
            diameter: diameter(&pts),
            subtri: SubTriangulation::default(),
        });
    }

    let mut mesh = PolyMesh { vertices, cells, faces };
    for c in 0..mesh.cells.len() {
        let st = subtriangulate(&mesh, c)?;
        mesh.cells[c].subtri = st;
    }
    Ok(mesh)
}

fn cells_sign(lp: &[usize], key: (usize, usize)) -> f64 {
    let n = lp.len();
    for i in 0..n {
        let (a, b) = (lp[i], lp[(i + 1) % n]);
        if (a.min(b), a.max(b)) == key {
            return if a < b { 1.0 } else { -1.0 };
        }
    }
    unreachable!("edge not in loop")
}

impl PolyMesh {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Mesh size, the largest cell diameter.
    pub fn h(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    pub fn cell_points(&self, c: usize) -> Vec<Vec2> {
        self.cells[c].vertices.iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.faces.iter().enumerate().filter(|(_, f)| f.is_boundary()).map(|(i, _)| i)
    }

    pub fn num_interior_faces(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    /// Axis-aligned bounding box of the vertex set.
    pub fn bounding_box(&self) -> Rect {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Rect { min: lo, max: hi }
    }

    /// Cell and simplex containing `p`, if any.
    pub fn locate(&self, p: &Vec2) -> Option<(usize, usize)> {
        let tol = 1e-12;
        for (c, cell) in self.cells.iter().enumerate() {
            for (s, simplex) in cell.subtri.simplices.iter().enumerate() {
                let [a, b, d] = simplex.points(self);
                let area = cross3(&a, &b, &d);
                let l0 = cross3(&b, &d, p) / area;
                let l1 = cross3(&d, &a, p) / area;
                let l2 = cross3(&a, &b, p) / area;
                if l0 >= -tol && l1 >= -tol && l2 >= -tol {
                    return Some((c, s));
                }
            }
        }
        None
    }

    pub fn regularity_report(&self) -> RegularityReport {
        let mut rep = RegularityReport { n_submesh: 0, n_faces: 0, min_shape_ratio: f64::INFINITY };
        for cell in &self.cells {
            rep.n_submesh = rep.n_submesh.max(cell.subtri.simplices.len());
            rep.n_faces = rep.n_faces.max(cell.faces.len());
            for s in &cell.subtri.simplices {
                let [a, b, c] = s.points(self);
                let area = 0.5 * cross3(&a, &b, &c);
                let perim = (b - a).norm() + (c - b).norm() + (a - c).norm();
                let inradius = 2.0 * area / perim;
                let diam = diameter(&[a, b, c]);
                rep.min_shape_ratio = rep.min_shape_ratio.min(inradius / diam);
            }
        }
        rep
    }
}
