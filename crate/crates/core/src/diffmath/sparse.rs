use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compressed sparse rows with a strictly positive coefficient per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    coef: Vec<T>,
}

impl<T: Scalar> SparseAdjacency<T> {
    /// Build from per-row `(column, coefficient)` lists. Columns within a
    /// row are sorted; duplicates are a contract error.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut coef = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Contract(format!("duplicate entry ({i}, {})", w[0].0)));
                }
            }
            for (j, c) in row {
                if j >= n_cols {
                    return Err(Error::Contract(format!("column {j} out of range {n_cols}")));
                }
                if !(c > T::zero()) {
                    return Err(Error::Contract(format!("non-positive coefficient at ({i}, {j})")));
                }
                col_idx.push(j);
                coef.push(c);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseAdjacency {
            n_rows: row_ptr.len() - 1,
            n_cols,
            row_ptr,
            col_idx,
            coef,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// `(column, coefficient)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.coef[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        let cols = &self.col_idx[span.clone()];
        cols.binary_search(&j).ok().map(|k| self.coef[span.start + k])
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n_cols];
        for i in 0..self.n_rows {
            for (j, c) in self.row(i) {
                rows[j].push((i, c));
            }
        }
        Self::from_rows(self.n_rows, rows).expect("transpose of a valid matrix is valid")
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, c) in self.row(i) {
                t.set(i, j, c);
            }
        }
        t
    }

    /// Row `i` of the result is `Σ_j c_ij · dense_j`.
    pub fn spmm(&self, dense: &Tensor<T>) -> Result<Tensor<T>> {
        if dense.rows() != self.n_cols {
            return Err(Error::Contract(format!(
                "spmm: {}x{} sparse times {:?}",
                self.n_rows,
                self.n_cols,
                dense.shape()
            )));
        }
        let d = dense.cols();
        let mut out = Tensor::zeros(self.n_rows, d);
        for i in 0..self.n_rows {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            let orow = out.row_mut(i);
            for k in span {
                let c = self.coef[k];
                let src = dense.row(self.col_idx[k]);
                for (o, &v) in orow.iter_mut().zip(src) {
                    *o += c * v;
                }
            }
        }
        Ok(out)
    }

    /// `acc += selfᵀ · grad`, the adjoint of [`spmm`](Self::spmm).
    pub(crate) fn spmm_t_acc(&self, grad: &Tensor<T>, acc: &mut Tensor<T>) {
        for i in 0..self.n_rows {
            let g = grad.row(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.coef[k];
                for (a, &v) in acc.row_mut(self.col_idx[k]).iter_mut().zip(g) {
                    *a += c * v;
                }
            }
        }
    }
}
