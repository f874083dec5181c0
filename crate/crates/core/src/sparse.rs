//! Thin wrapper over the faer sparse matrix and LU factorization.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse column matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    /// Sums duplicate entries. Triplets are sorted by `(col, row)` first with
    /// a stable sort, so the summation order, and hence the result, only
    /// depends on the input order of duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.sort_by_key(|&(r, c, _)| (c, r));
        let mut merged: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match merged.last_mut() {
                Some(t) if t.row == r && t.col == c => t.val += v,
                _ => merged.push(Triplet::new(r, c, v)),
            }
        }
        let inner = SparseColMat::try_new_from_triplets(nrows, ncols, &merged)
            .map_err(|e| Error::Factorization(format!("sparse assembly: {e:?}")))?;
        Ok(SparseMatrix { inner })
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.inner.val().len()
    }

    /// Iterates over stored `(row, col, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let sym = self.inner.symbolic();
        let (cp, ri, val) = (sym.col_ptr(), sym.row_idx(), self.inner.val());
        (0..self.ncols()).flat_map(move |c| (cp[c]..cp[c + 1]).map(move |i| (ri[i], c, val[i])))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows());
        for (r, c, v) in self.entries() {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.ncols());
        for (r, c, v) in self.entries() {
            y[c] += v * x[r];
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for (r, c, v) in self.entries() {
            d[(r, c)] += v;
        }
        d
    }

    /// Sparse LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<SparseLu> {
        let lu = self.inner.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(SparseLu { lu, n: self.nrows() })
    }

    /// Solves `A x = b`, failing on a singular or non-finite result.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu()?.solve(b)
    }
}

pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        let x = DVector::from_fn(self.n, |i, _| rhs[(i, 0)]);
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Factorization("non-finite solution (singular matrix)".into()))
        }
    }
}

/// Solver for `A + U V^T` with `U`, `V` of a few columns, reusing a sparse
/// factorization of `A` (Woodbury identity).
pub struct LowRankUpdatedLu {
    lu: SparseLu,
    /// `A^{-1} U`.
    z: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
    capacitance: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LowRankUpdatedLu {
    pub fn new(lu: SparseLu, u: Vec<DVector<f64>>, v: Vec<DVector<f64>>) -> Result<Self> {
        let z: Vec<DVector<f64>> = u.iter().map(|ui| lu.solve(ui)).collect::<Result<_>>()?;
        let r = u.len();
        let cap = DMatrix::from_fn(r, r, |i, j| f64::from(u8::from(i == j)) + v[i].dot(&z[j]));
        let capacitance = cap.lu();
        if !capacitance.is_invertible() {
            return Err(Error::Factorization("singular low-rank update".into()));
        }
        Ok(LowRankUpdatedLu { lu, z, v, capacitance })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut y = self.lu.solve(b)?;
        let rhs = DVector::from_iterator(self.v.len(), self.v.iter().map(|vi| vi.dot(&y)));
        let c = self.capacitance.solve(&rhs).ok_or_else(|| Error::Factorization("singular low-rank update".into()))?;
        for (zi, ci) in self.z.iter().zip(c.iter()) {
            y.axpy(-ci, zi, 1.0);
        }
        Ok(y)
    }
}
