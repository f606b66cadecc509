//! Sparse vectors and a compressed-sparse-row matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted-index sparse vector. Indices are strictly increasing and below
/// `dim`; zero values are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(indices: Vec<u32>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Config("sparse vector index/value length mismatch".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "sparse vector indices must be strictly increasing".into(),
            ));
        }
        if indices.last().is_some_and(|&i| i as usize >= dim) {
            return Err(Error::Config("sparse vector index out of range".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sparse vector values must be finite".into()));
        }
        let (indices, values) = indices.into_iter().zip(values).filter(|(_, v)| *v != 0.0).unzip();
        Ok(SparseVector { indices, values, dim })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        SparseVector {
            indices,
            values,
            dim: dense.len(),
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn view(&self) -> RowView<'_> {
        RowView {
            indices: &self.indices,
            values: &self.values,
            dim: self.dim,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        self.view().to_dense()
    }
}

/// Borrowed sparse row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowView<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
    pub dim: usize,
}

impl<'a> RowView<'a> {
    pub fn get(&self, col: usize) -> f64 {
        match self.indices.binary_search(&(col as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.indices
            .iter()
            .map(|&i| i as usize)
            .zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn to_owned(&self) -> SparseVector {
        SparseVector {
            indices: self.indices.to_vec(),
            values: self.values.to_vec(),
            dim: self.dim,
        }
    }
}

/// Row-major sparse matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    n_cols: usize,
}

impl CsrMatrix {
    pub fn empty(n_cols: usize) -> Self {
        CsrMatrix {
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            n_cols,
        }
    }

    pub fn from_rows(rows: &[SparseVector], n_cols: usize) -> Result<Self> {
        let mut m = Self::empty(n_cols);
        for r in rows {
            m.push_row(r.view())?;
        }
        Ok(m)
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::empty(n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged dense input");
            m.push_row(SparseVector::from_dense(r).view()).expect("dims match");
        }
        m
    }

    pub fn push_row(&mut self, row: RowView<'_>) -> Result<()> {
        if row.dim != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                actual: row.dim,
            });
        }
        self.indices.extend_from_slice(row.indices);
        self.values.extend_from_slice(row.values);
        self.indptr.push(self.indices.len());
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        RowView {
            indices: &self.indices[s..e],
            values: &self.values[s..e],
            dim: self.n_cols,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = RowView<'_>> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, rows: &[usize]) -> CsrMatrix {
        let mut m = Self::empty(self.n_cols);
        for &r in rows {
            m.push_row(self.row(r)).expect("same width");
        }
        m
    }

    /// Same matrix with `extra` all-zero columns appended.
    pub fn pad_columns(&self, extra: usize) -> CsrMatrix {
        let mut m = self.clone();
        m.n_cols += extra;
        m
    }

    /// Coordinate-format text, one `row col value` line per nonzero.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for (r, row) in self.rows().enumerate() {
            for (c, v) in row.iter() {
                out.push_str(&format!("{r} {c} {v:e}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates() {
        assert!(SparseVector::new(vec![1, 0], vec![1.0, 2.0], 3).is_err());
        assert!(SparseVector::new(vec![3], vec![1.0], 3).is_err());
        assert!(SparseVector::new(vec![0], vec![f64::NAN], 3).is_err());
        let v = SparseVector::new(vec![0, 2], vec![0.0, 2.0], 3).unwrap();
        assert_eq!(v.indices(), &[2]);
        assert_eq!(v.view().get(2), 2.0);
        assert_eq!(v.view().get(1), 0.0);
    }

    #[test]
    fn csr_round_trip() {
        let dense = vec![vec![1.0, 0.0, 2.0], vec![0.0, 0.0, 0.0], vec![0.0, 3.0, 0.0]];
        let m = CsrMatrix::from_dense(&dense);
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.nnz(), 3);
        for (i, r) in dense.iter().enumerate() {
            assert_eq!(&m.row(i).to_dense(), r);
        }
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.row(0).to_dense(), dense[2]);
        assert_eq!(m.to_coordinate_text().lines().count(), 3);
        let wrong = SparseVector::zeros(4);
        assert!(CsrMatrix::empty(3).push_row(wrong.view()).is_err());
    }
}
