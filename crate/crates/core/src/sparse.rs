//! Compressed sparse row storage used for masks, residuals and Laplacians.

use ndarray::{Array2, ArrayView2};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate coordinates are summed.
    ///
    /// Panics if a coordinate is out of bounds.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (start, end) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[start..end], &self.values[start..end])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Same sparsity pattern with new values, one per stored entry in row-major order.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.nnz());
        CsrMatrix {
            values,
            ..self.clone()
        }
    }

    pub fn transpose(&self) -> Self {
        CsrMatrix::from_triplets(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v)))
    }

    /// Entrywise sum; the shapes must agree.
    pub fn add(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.shape(), other.shape());
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.iter().chain(other.iter()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// `self · rhs` for a dense right-hand side with `ncols` rows.
    pub fn mul_dense(&self, rhs: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(rhs.nrows(), self.ncols);
        let mut out = Array2::zeros((self.nrows, rhs.ncols()));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut out_row = out.row_mut(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out_row.scaled_add(v, &rhs.row(j));
            }
        }
        out
    }

    /// `selfᵀ · rhs` without forming the transpose; `rhs` has `nrows` rows.
    pub fn transpose_mul_dense(&self, rhs: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(rhs.nrows(), self.nrows);
        let mut out = Array2::zeros((self.ncols, rhs.ncols()));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let rhs_row = rhs.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out.row_mut(j).scaled_add(v, &rhs_row);
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for (i, j, v) in self.iter() {
            out[[i, j]] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, 3.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(0).0, &[0, 2]);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn mul_dense_matches_dense_product() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let rhs = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(m.mul_dense(rhs.view()), m.to_dense().dot(&rhs));
    }

    #[test]
    fn transpose_mul_matches_dense() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let rhs = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(m.transpose_mul_dense(rhs.view()), m.to_dense().t().dot(&rhs));
    }

    #[test]
    fn transpose_roundtrip() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 1, 1.0), (1, 2, 2.0)]);
        assert_eq!(m.transpose().transpose(), m);
        assert_eq!(m.transpose().get(2, 1), 2.0);
    }
}
