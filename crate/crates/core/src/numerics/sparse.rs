use rayon::prelude::*;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::shape(
                    "csr",
                    format!("entry ({r},{c}) outside {rows}x{cols}"),
                ));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Keeps every nonzero entry of `dense`.
    pub fn from_dense(dense: &Matrix) -> Self {
        let mut indptr = Vec::with_capacity(dense.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..dense.rows() {
            for (j, &v) in dense.row(i).iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            rows: dense.rows(),
            cols: dense.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets = (0..self.rows)
            .flat_map(|i| self.row_entries(i).map(move |(j, v)| (j, i, v)))
            .collect::<Vec<_>>();
        CsrMatrix::from_triplets(self.cols, self.rows, triplets)
            .expect("transposed coordinates are in range")
    }

    /// Returns a copy whose stored values are replaced by `f(row, col, value)`.
    pub fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.values[p] = f(i, self.indices[p], self.values[p]);
            }
        }
        out
    }

    /// Sparse-dense product `self · b`. Each output row accumulates in column-index order.
    pub fn spmm(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows() {
            return Err(Error::shape(
                "spmm",
                format!(
                    "{}x{} (sparse) · {}x{}",
                    self.rows,
                    self.cols,
                    b.rows(),
                    b.cols()
                ),
            ));
        }
        let m = b.cols();
        let mut out = Matrix::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        out.as_mut_slice()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, out_row)| {
                for (j, v) in self.row_entries(i) {
                    for (o, &x) in out_row.iter_mut().zip(b.row(j)) {
                        *o += v * x;
                    }
                }
            });
        Ok(out)
    }

    /// `selfᵀ · b`.
    pub fn spmm_t(&self, b: &Matrix) -> Result<Matrix> {
        if self.rows != b.rows() {
            return Err(Error::shape(
                "spmm_t",
                format!(
                    "({}x{} sparse)ᵀ · {}x{}",
                    self.rows,
                    self.cols,
                    b.rows(),
                    b.cols()
                ),
            ));
        }
        let m = b.cols();
        let mut out = Matrix::zeros(self.cols, m);
        for i in 0..self.rows {
            let b_row = b.row(i);
            for (j, v) in self.row_entries(i) {
                for (o, &x) in out.row_mut(j).iter_mut().zip(b_row) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }
}
