//! Minimal dense row-major matrix used by the model forward/backward passes.

use crate::{Error, Result};

/// A dense `rows x cols` matrix of f64 in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from equal-length rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in &rows {
            if row.len() != cols {
                return Err(Error::ShapeMismatch {
                    what: "matrix row",
                    got: row.len(),
                    expected: cols,
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: n,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// A new matrix holding the given subset of this matrix's rows.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }
}

/// out = a (n x k) * w (k x m) + bias (m), where `w` is a flat row-major slice.
pub fn affine(a: &Matrix, w: &[f64], bias: &[f64], m: usize) -> Matrix {
    let (n, k) = (a.rows(), a.cols());
    debug_assert_eq!(w.len(), k * m);
    debug_assert_eq!(bias.len(), m);
    let mut out = Matrix::zeros(n, m);
    for r in 0..n {
        let ar = a.row(r);
        let or = out.row_mut(r);
        or.copy_from_slice(bias);
        for (i, &ai) in ar.iter().enumerate().take(k) {
            let wrow = &w[i * m..(i + 1) * m];
            for (o, &wv) in or.iter_mut().zip(wrow) {
                *o += ai * wv;
            }
        }
    }
    out
}

/// dw = a^T (k x n) * g (n x m), accumulated into a flat row-major slice.
pub fn grad_weights(a: &Matrix, g: &Matrix, dw: &mut [f64]) {
    let (n, k, m) = (a.rows(), a.cols(), g.cols());
    debug_assert_eq!(g.rows(), n);
    debug_assert_eq!(dw.len(), k * m);
    for r in 0..n {
        let ar = a.row(r);
        let gr = g.row(r);
        for (i, &ai) in ar.iter().enumerate().take(k) {
            let drow = &mut dw[i * m..(i + 1) * m];
            for (d, &gv) in drow.iter_mut().zip(gr) {
                *d += ai * gv;
            }
        }
    }
}

/// db = column sums of g (n x m).
pub fn grad_bias(g: &Matrix, db: &mut [f64]) {
    debug_assert_eq!(db.len(), g.cols());
    for r in 0..g.rows() {
        for (d, &gv) in db.iter_mut().zip(g.row(r)) {
            *d += gv;
        }
    }
}

/// da = g (n x m) * w^T (m x k), where `w` is flat row-major (k x m).
pub fn backprop_inputs(g: &Matrix, w: &[f64], k: usize) -> Matrix {
    let (n, m) = (g.rows(), g.cols());
    debug_assert_eq!(w.len(), k * m);
    let mut out = Matrix::zeros(n, k);
    for r in 0..n {
        let gr = g.row(r);
        let or = out.row_mut(r);
        for (i, o) in or.iter_mut().enumerate() {
            let wrow = &w[i * m..(i + 1) * m];
            *o = gr.iter().zip(wrow).map(|(gv, wv)| gv * wv).sum();
        }
    }
    out
}
