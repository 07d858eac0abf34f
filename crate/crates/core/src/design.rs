//! Design matrices: dense row-major arrays or compressed sparse rows.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != n_rows + 1 || indptr[0] != 0 || *indptr.last().unwrap() != values.len() {
            return Err(Error::InvalidParameter("malformed CSR row pointer".into()));
        }
        if indices.len() != values.len() {
            return Err(Error::InvalidParameter("CSR index/value length mismatch".into()));
        }
        if indptr.windows(2).any(|w| w[0] > w[1]) || indices.iter().any(|&j| j >= n_cols) {
            return Err(Error::InvalidParameter("CSR structure out of bounds".into()));
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }
}

/// Feature matrix with one example per row.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Dense(Array2<f64>),
    Sparse(CsrMatrix),
}

impl Design {
    pub fn n_rows(&self) -> usize {
        match self {
            Design::Dense(a) => a.nrows(),
            Design::Sparse(s) => s.n_rows,
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            Design::Dense(a) => a.ncols(),
            Design::Sparse(s) => s.n_cols,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Design::Dense(a) => a.clone(),
            Design::Sparse(s) => s.to_dense(),
        }
    }

    /// `out = X w`.
    pub fn matvec_into(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.n_cols());
        debug_assert_eq!(out.len(), self.n_rows());
        match self {
            Design::Dense(a) => {
                for (o, row) in out.iter_mut().zip(a.rows()) {
                    *o = row.iter().zip(w).map(|(x, y)| x * y).sum();
                }
            }
            Design::Sparse(s) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = s.row(i).map(|(j, v)| v * w[j]).sum();
                }
            }
        }
    }

    /// `out = X^T r`.
    pub fn t_matvec_into(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.n_rows());
        debug_assert_eq!(out.len(), self.n_cols());
        out.fill(0.0);
        match self {
            Design::Dense(a) => {
                for (row, &ri) in a.rows().into_iter().zip(r) {
                    if ri == 0.0 {
                        continue;
                    }
                    for (o, x) in out.iter_mut().zip(row) {
                        *o += x * ri;
                    }
                }
            }
            Design::Sparse(s) => {
                for (i, &ri) in r.iter().enumerate() {
                    for (j, v) in s.row(i) {
                        out[j] += v * ri;
                    }
                }
            }
        }
    }

    pub fn matvec(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        self.matvec_into(w, &mut out);
        out
    }

    pub fn t_matvec(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols()];
        self.t_matvec_into(r, &mut out);
        out
    }

    /// `X^T X` as a dense `d x d` matrix.
    pub fn gram(&self) -> Array2<f64> {
        match self {
            Design::Dense(a) => a.t().dot(a),
            Design::Sparse(s) => {
                let mut g = Array2::zeros((s.n_cols, s.n_cols));
                for i in 0..s.n_rows {
                    let row: Vec<(usize, f64)> = s.row(i).collect();
                    for &(a, va) in &row {
                        for &(b, vb) in &row {
                            g[[a, b]] += va * vb;
                        }
                    }
                }
                g
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Design::Dense(a) => a.iter().all(|&x| x == 0.0),
            Design::Sparse(s) => s.values.iter().all(|&x| x == 0.0),
        }
    }

    /// Rows selected by `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Design {
        match self {
            Design::Dense(a) => Design::Dense(a.select(ndarray::Axis(0), rows)),
            Design::Sparse(s) => {
                let mut indptr = Vec::with_capacity(rows.len() + 1);
                let mut indices = Vec::new();
                let mut values = Vec::new();
                indptr.push(0);
                for &i in rows {
                    for (j, v) in s.row(i) {
                        indices.push(j);
                        values.push(v);
                    }
                    indptr.push(values.len());
                }
                Design::Sparse(CsrMatrix {
                    n_rows: rows.len(),
                    n_cols: s.n_cols,
                    indptr,
                    indices,
                    values,
                })
            }
        }
    }

    pub(crate) fn first_non_finite(&self) -> Option<(usize, usize)> {
        match self {
            Design::Dense(a) => a
                .indexed_iter()
                .find(|(_, v)| !v.is_finite())
                .map(|(ij, _)| ij),
            Design::Sparse(s) => (0..s.n_rows)
                .find_map(|i| s.row(i).find(|(_, v)| !v.is_finite()).map(|(j, _)| (i, j))),
        }
    }
}
