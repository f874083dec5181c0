use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{build_mesh, PolyMesh, Vec2};

pub const DEFAULT_KERSHAW_DISTORTION: f64 = 0.3;

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { min: Vec2::new(x0, y0), max: Vec2::new(x1, y1) }
    }

    pub fn unit() -> Self {
        Rect::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        let d = self.max - self.min;
        d.x * d.y
    }

    /// Maps a point of the unit square into the rectangle.
    pub fn map(&self, x: f64, y: f64) -> Vec2 {
        let d = self.max - self.min;
        Vec2::new(self.min.x + d.x * x, self.min.y + d.y * y)
    }
}

/// Mesh families used by the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Cartesian,
    Hexagonal,
    Kershaw,
}

impl Family {
    pub fn generate(self, n: usize, rect: Rect) -> Result<PolyMesh> {
        match self {
            Family::Cartesian => gen_cartesian(n, rect),
            Family::Hexagonal => gen_hexagonal(n, rect),
            Family::Kershaw => gen_kershaw(n, DEFAULT_KERSHAW_DISTORTION, rect),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Cartesian => "cartesian",
            Family::Hexagonal => "hexagonal",
            Family::Kershaw => "kershaw",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cartesian" => Ok(Family::Cartesian),
            "hexagonal" => Ok(Family::Hexagonal),
            "kershaw" => Ok(Family::Kershaw),
            other => Err(Error::Config(format!("unknown mesh family '{other}'"))),
        }
    }
}

fn grid_loops(n: usize) -> Vec<Vec<usize>> {
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut loops = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            loops.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    loops
}

/// `n x n` uniform quadrilateral grid.
pub fn gen_cartesian(n: usize, rect: Rect) -> Result<PolyMesh> {
    gen_kershaw(n, 0.0, rect)
}

/// `n x n` grid whose vertical lines are bent into a layered zigzag.
///
/// Horizontal grid lines stay straight, so every cell is a trapezoid and
/// remains convex for any distortion in `[0, 1)`. A zero distortion gives the
/// Cartesian grid exactly.
pub fn gen_kershaw(n: usize, distortion: f64, rect: Rect) -> Result<PolyMesh> {
    if n == 0 {
        return Err(Error::Config("mesh resolution must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&distortion) {
        return Err(Error::Config(format!("Kershaw distortion {distortion} outside [0, 1)")));
    }
    let mut verts = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        let eta = j as f64 / n as f64;
        // zigzag in [-1/4, 1/4] with two teeth over the height
        let zig = {
            let s = (2.0 * eta).fract();
            let tooth = if s <= 0.5 { s } else { 1.0 - s };
            let tooth = if j == n { 0.0 } else { tooth };
            tooth - 0.25
        };
        for i in 0..=n {
            let xi = i as f64 / n as f64;
            let bump = 4.0 * xi * (1.0 - xi);
            let x = if distortion == 0.0 { xi } else { xi + distortion * bump * zig };
            verts.push(rect.map(x, eta));
        }
    }
    build_mesh(verts, grid_loops(n))
}

fn clip_halfplane(poly: &[Vec2], inside: impl Fn(&Vec2) -> f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let n = poly.len();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let (dp, dq) = (inside(&p), inside(&q));
        if dp >= 0.0 {
            out.push(p);
        }
        if (dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0) {
            let t = dp / (dp - dq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

fn cleanup(poly: Vec<Vec2>, tol: f64) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = Vec::with_capacity(poly.len());
    for p in poly {
        if pts.last().is_none_or(|l| (l - p).norm() > tol) {
            pts.push(p);
        }
    }
    while pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() <= tol {
        pts.pop();
    }
    // drop vertices with a straight angle, which only appear on clipped boundary edges
    loop {
        let n = pts.len();
        if n < 3 {
            return pts;
        }
        let pos = (0..n).position(|i| {
            let a = pts[(i + n - 1) % n];
            let b = pts[i];
            let c = pts[(i + 1) % n];
            super::cross3(&a, &b, &c).abs() <= tol * (c - a).norm()
        });
        match pos {
            Some(i) => {
                pts.remove(i);
            }
            None => return pts,
        }
    }
}

/// Honeycomb of pointy-top hexagons clipped to `rect`.
///
/// `n` hexagon columns span the width; the number of rows is chosen so the
/// cells are as close to regular as the aspect ratio allows. Rows alternate
/// by half a column, so cells along the left and right sides are half
/// hexagons (quadrilaterals or pentagons) and those along the bottom and top
/// are cut through their centres.
pub fn gen_hexagonal(n: usize, rect: Rect) -> Result<PolyMesh> {
    if n == 0 {
        return Err(Error::Config("mesh resolution must be at least 1".into()));
    }
    let w = 1.0 / n as f64;
    let rows = ((2.0 * n as f64) / 3f64.sqrt()).round().max(1.0) as usize;
    let s = 1.0 / rows as f64;
    // half height of the hexagon; vertical centre spacing is 1.5 * a
    let a = s / 1.5;
    let tol = 1e-10 * w.min(s);

    let mut key_of: HashMap<(i64, i64), usize> = HashMap::new();
    let mut verts: Vec<Vec2> = Vec::new();
    let mut loops = Vec::new();
    for r in 0..=rows {
        let cy = r as f64 * s;
        let shift = if r % 2 == 0 { 0.0 } else { 0.5 * w };
        for c in -1..=(n as i64 + 1) {
            let cx = c as f64 * w + shift;
            let hex: Vec<Vec2> = [(0.0, -a), (0.5 * w, -0.5 * a), (0.5 * w, 0.5 * a), (0.0, a), (-0.5 * w, 0.5 * a), (-0.5 * w, -0.5 * a)]
                .iter()
                .map(|&(dx, dy)| Vec2::new(cx + dx, cy + dy))
                .collect();
            let mut poly = hex;
            poly = clip_halfplane(&poly, |p| p.x);
            poly = clip_halfplane(&poly, |p| 1.0 - p.x);
            poly = clip_halfplane(&poly, |p| p.y);
            poly = clip_halfplane(&poly, |p| 1.0 - p.y);
            let poly = cleanup(poly, tol);
            if poly.len() < 3 {
                continue;
            }
            let area: f64 = {
                let m = poly.len();
                0.5 * (0..m).map(|i| poly[i].x * poly[(i + 1) % m].y - poly[(i + 1) % m].x * poly[i].y).sum::<f64>()
            };
            if area <= 1e-8 * w * s {
                continue;
            }
            let lp = poly
                .iter()
                .map(|p| {
                    let key = ((p.x / tol).round() as i64, (p.y / tol).round() as i64);
                    *key_of.entry(key).or_insert_with(|| {
                        verts.push(*p);
                        verts.len() - 1
                    })
                })
                .collect();
            loops.push(lp);
        }
    }
    let verts = verts.into_iter().map(|p| rect.map(p.x, p.y)).collect();
    build_mesh(verts, loops)
}
