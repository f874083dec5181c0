//! Global dof numbering and per-cell operator caches.
//!
//! Velocity unknowns are numbered cell blocks first (`2 dim P^k` per cell),
//! then face blocks (`2 (k + 1)` per face). Pressure unknowns are `dim P^k`
//! coefficients per cell in the orthonormal cell basis.

use nalgebra::DVector;

use crate::basis::dim_p2;
use crate::error::Result;
use crate::hho::{build_local_operators, LocalOperators};
use crate::mesh::{PolyMesh, Vec2};
use crate::quadrature::cell_points;
use crate::rt::{build_reconstructions, CellReconstruction, RTField};

/// Mesh together with every local operator at polynomial degree `k`.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: PolyMesh,
    pub k: usize,
    pub ops: Vec<LocalOperators>,
    pub recs: Vec<CellReconstruction>,
}

impl Discretization {
    pub fn new(mesh: PolyMesh, k: usize) -> Result<Self> {
        let ops = build_local_operators(&mesh, k)?;
        let recs = build_reconstructions(&mesh, &ops)?;
        Ok(Discretization { mesh, k, ops, recs })
    }

    pub fn nk(&self) -> usize {
        dim_p2(self.k)
    }

    pub fn n_cell_block(&self) -> usize {
        2 * self.nk()
    }

    pub fn n_face_block(&self) -> usize {
        2 * (self.k + 1)
    }

    pub fn n_velocity(&self) -> usize {
        self.mesh.num_cells() * self.n_cell_block() + self.mesh.num_faces() * self.n_face_block()
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.num_cells() * self.nk()
    }

    pub fn cell_offset(&self, c: usize) -> usize {
        c * self.n_cell_block()
    }

    pub fn face_offset(&self, f: usize) -> usize {
        self.mesh.num_cells() * self.n_cell_block() + f * self.n_face_block()
    }

    /// Unknown count reported in benchmark tables: all face velocity dofs and
    /// one pressure dof per cell.
    pub fn n_dof_reported(&self) -> usize {
        self.mesh.num_faces() * self.n_face_block() + self.mesh.num_cells()
    }

    /// Global velocity index of every local dof of cell `c`.
    pub fn local_to_global(&self, c: usize) -> Vec<usize> {
        let cell = &self.mesh.cells[c];
        let mut idx: Vec<usize> = (0..self.n_cell_block()).map(|i| self.cell_offset(c) + i).collect();
        for &f in &cell.faces {
            idx.extend((0..self.n_face_block()).map(|i| self.face_offset(f) + i));
        }
        idx
    }

    pub fn gather(&self, c: usize, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.ops[c].n_dofs(), self.local_to_global(c).into_iter().map(|g| u[g]))
    }

    /// Cell pressure block of cell `c`.
    pub fn pressure_block(&self, c: usize, p: &DVector<f64>) -> DVector<f64> {
        p.rows(c * self.nk(), self.nk()).into_owned()
    }

    /// Global interpolate of a velocity field, rules of degree `degree`.
    pub fn interpolate(&self, f: impl Fn(&Vec2) -> Vec2 + Sync, degree: usize) -> DVector<f64> {
        use rayon::prelude::*;
        let locals: Vec<DVector<f64>> =
            self.ops.par_iter().map(|o| o.interpolate(&self.mesh, &f, degree)).collect();
        let mut u = DVector::zeros(self.n_velocity());
        for (c, loc) in locals.iter().enumerate() {
            for (l, g) in self.local_to_global(c).into_iter().enumerate() {
                u[g] = loc[l];
            }
        }
        u
    }

    /// Cellwise L2 projection of a scalar field.
    pub fn project_pressure(&self, f: impl Fn(&Vec2) -> f64 + Sync, degree: usize) -> DVector<f64> {
        let nk = self.nk();
        let mut p = DVector::zeros(self.n_pressure());
        for (c, ops) in self.ops.iter().enumerate() {
            let mut v = vec![0.0; ops.basis.dim()];
            for (x, w) in cell_points(&self.mesh, c, degree).iter() {
                ops.basis.eval_into(x, &mut v);
                let fw = f(x) * w;
                for i in 0..nk {
                    p[c * nk + i] += fw * v[i];
                }
            }
        }
        p
    }

    /// Mean value of a discrete pressure over the domain.
    pub fn pressure_mean(&self, p: &DVector<f64>) -> f64 {
        let nk = self.nk();
        let int: f64 = self.mesh.cells.iter().enumerate().map(|(c, cell)| cell.area.sqrt() * p[c * nk]).sum();
        int / self.mesh.total_area()
    }

    /// Shifts a discrete pressure to zero mean.
    pub fn normalize_pressure(&self, p: &mut DVector<f64>) {
        let mean = self.pressure_mean(p);
        let nk = self.nk();
        for (c, cell) in self.mesh.cells.iter().enumerate() {
            p[c * nk] -= mean * cell.area.sqrt();
        }
    }

    /// Patched reconstruction `R_h u`.
    pub fn reconstruction(&self, u: &DVector<f64>) -> RTField<'_> {
        use rayon::prelude::*;
        let coeffs = (0..self.mesh.num_cells()).into_par_iter().map(|c| self.recs[c].apply(&self.gather(c, u))).collect();
        RTField { mesh: &self.mesh, recs: &self.recs, coeffs }
    }

    /// Discrete H1 seminorm over the mesh.
    pub fn seminorm_1h(&self, u: &DVector<f64>) -> f64 {
        (0..self.mesh.num_cells()).map(|c| self.ops[c].seminorm_sq(&self.mesh, &self.gather(c, u))).sum::<f64>().sqrt()
    }

    /// True for face velocity indices on the domain boundary.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_velocity()];
        for f in self.mesh.boundary_faces() {
            let o = self.face_offset(f);
            mask[o..o + self.n_face_block()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}
