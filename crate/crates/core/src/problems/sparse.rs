use nalgebra::{DMatrix, DVector};

use crate::error::invalid;
use crate::Result;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists. Columns within a row must be
    /// strictly increasing and below `ncols`.
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, row) in rows.iter().enumerate() {
            for (k, &(c, v)) in row.iter().enumerate() {
                if c >= ncols {
                    return Err(invalid(format!("row {r}: column {c} out of range {ncols}")));
                }
                if k > 0 && row[k - 1].0 >= c {
                    return Err(invalid(format!("row {r}: columns not strictly increasing")));
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != 0.0).map(|j| (j, m[(i, j)])).collect())
            .collect();
        Self::from_rows(m.ncols(), &rows).expect("dense rows are well formed")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).map(|(j, a)| a * v[j]).sum()
    }

    /// `out += alpha * row_i`.
    pub fn row_axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        for (j, a) in self.row(i) {
            out[j] += alpha * a;
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row(i).map(|(_, a)| a * a).sum()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = idx.iter().map(|&i| self.row(i).collect()).collect();
        Self::from_rows(self.ncols, &rows).expect("rows copied from a valid matrix")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `Av`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.nrows, |i, _| self.row_dot(i, v.as_slice()))
    }
}
