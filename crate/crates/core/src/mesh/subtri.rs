use crate::error::{Error, Result};

use super::{cross3, PolyMesh, Vec2};

/// Where an edge of a simplex lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexEdge {
    /// On the cell boundary; the payload is the local face index.
    Boundary(usize),
    /// Inside the cell; the payload indexes `SubTriangulation::interior_edges`.
    Interior(usize),
}

/// Triangle of a cell subtriangulation, vertices counterclockwise.
///
/// Edge `i` joins `vertices[i]` and `vertices[(i + 1) % 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    pub vertices: [usize; 3],
    pub edges: [SimplexEdge; 3],
    pub area: f64,
    pub diameter: f64,
    pub centroid: Vec2,
}

impl Simplex {
    pub fn points(&self, mesh: &PolyMesh) -> [Vec2; 3] {
        self.vertices.map(|v| mesh.vertices[v])
    }

    /// Endpoints of edge `i`.
    pub fn edge_points(&self, mesh: &PolyMesh, i: usize) -> (Vec2, Vec2) {
        (mesh.vertices[self.vertices[i]], mesh.vertices[self.vertices[(i + 1) % 3]])
    }

    /// Outward unit normal on edge `i`.
    pub fn outward_normal(&self, mesh: &PolyMesh, i: usize) -> Vec2 {
        let (a, b) = self.edge_points(mesh, i);
        let t = (b - a).normalize();
        Vec2::new(t.y, -t.x)
    }

    /// Point from barycentric coordinates relative to `vertices`.
    pub fn map(&self, mesh: &PolyMesh, l1: f64, l2: f64) -> Vec2 {
        let [a, b, c] = self.points(mesh);
        a + (b - a) * l1 + (c - a) * l2
    }
}

/// Edge shared by two simplices of the same cell.
///
/// Oriented from the lower to the higher vertex index; `normal` is the tangent
/// rotated clockwise and points out of `simplices[0]` and into `simplices[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub vertices: [usize; 2],
    pub simplices: [usize; 2],
    pub normal: Vec2,
    pub length: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubTriangulation {
    /// Global index of the vertex shared by all simplices.
    pub common_vertex: usize,
    pub simplices: Vec<Simplex>,
    pub interior_edges: Vec<InteriorEdge>,
}

impl SubTriangulation {
    pub fn common_point(&self, mesh: &PolyMesh) -> Vec2 {
        mesh.vertices[self.common_vertex]
    }
}

fn fan_is_valid(pts: &[Vec2], apex: usize, area: f64) -> bool {
    let n = pts.len();
    let tol = 1e-12 * area;
    (1..n - 1).all(|j| cross3(&pts[apex], &pts[(apex + j) % n], &pts[(apex + j + 1) % n]) > tol)
}

/// Fan subtriangulation of cell `c` from one of its vertices.
///
/// Vertices are tried in increasing global index; the first one from which
/// every fan triangle has positive area becomes the common vertex. For convex
/// cells this is the lowest-index vertex. No interior nodes are introduced, so
/// every boundary edge of the fan is a whole face of the cell.
pub fn subtriangulate(mesh: &PolyMesh, c: usize) -> Result<SubTriangulation> {
    let cell = &mesh.cells[c];
    let lp = &cell.vertices;
    let n = lp.len();
    let pts: Vec<Vec2> = lp.iter().map(|&v| mesh.vertices[v]).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| lp[i]);
    let apex = order
        .into_iter()
        .find(|&i| fan_is_valid(&pts, i, cell.area))
        .ok_or(Error::NotStarShaped(c))?;

    let nsimp = n - 2;
    let mut simplices = Vec::with_capacity(nsimp);
    let mut interior_edges = Vec::with_capacity(nsimp.saturating_sub(1));
    for j in 1..=nsimp {
        let i1 = (apex + j) % n;
        let i2 = (apex + j + 1) % n;
        let verts = [lp[apex], lp[i1], lp[i2]];
        // edge 0: apex -> w_j, edge 1: w_j -> w_{j+1}, edge 2: w_{j+1} -> apex
        let e0 = if j == 1 { SimplexEdge::Boundary(apex) } else { SimplexEdge::Interior(j - 2) };
        let e1 = SimplexEdge::Boundary(i1);
        let e2 = if j == nsimp { SimplexEdge::Boundary((apex + n - 1) % n) } else { SimplexEdge::Interior(j - 1) };
        let [a, b, d] = [pts[apex], pts[i1], pts[i2]];
        let diam = (b - a).norm().max((d - b).norm()).max((a - d).norm());
        simplices.push(Simplex {
            vertices: verts,
            edges: [e0, e1, e2],
            area: 0.5 * cross3(&a, &b, &d),
            diameter: diam,
            centroid: (a + b + d) / 3.0,
        });
        if j < nsimp {
            // edge apex -- w_{j+1}, shared by simplices j-1 and j (0-based)
            let (va, vb) = (lp[apex], lp[i2]);
            let lo = va.min(vb);
            let hi = va.max(vb);
            let t = mesh.vertices[hi] - mesh.vertices[lo];
            let length = t.norm();
            let normal = Vec2::new(t.y, -t.x) / length;
            // simplex j-1 traverses this edge as w_{j+1} -> apex (its edge 2)
            let out_first = {
                let (p, q) = (pts[i2], pts[apex]);
                let tt = q - p;
                Vec2::new(tt.y, -tt.x) / length
            };
            let simplices_pair = if out_first.dot(&normal) > 0.0 { [j - 1, j] } else { [j, j - 1] };
            interior_edges.push(InteriorEdge { vertices: [lo, hi], simplices: simplices_pair, normal, length });
        }
    }
    Ok(SubTriangulation { common_vertex: lp[apex], simplices, interior_edges })
}
