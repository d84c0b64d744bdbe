//! Dense row-major matrices sized for MLP panels.
//!
//! A `Matrix` with `cols > 1` is a batch: one sample per column. All kernels
//! accumulate in a fixed order (ascending input index per output element), so
//! a batched forward is bit-identical to the same samples run one column at a
//! time.

/// Row-major dense matrix; `data[r * cols + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    /// Single-column matrix from a slice.
    pub fn column_vector(v: &[f64]) -> Self {
        Matrix { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// Column-major assembly: `columns[c]` becomes column `c`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        assert!(cols > 0, "from_columns needs at least one column");
        let rows = columns[0].len();
        let mut m = Matrix::zeros(rows, cols);
        for (c, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "ragged columns");
            for r in 0..rows {
                m.data[r * cols + c] = col[r];
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out = W · x + b ⊗ 1ᵀ` where `w` is `[out_dim × in_dim]` row-major.
pub fn linear_into(w: &[f64], b: &[f64], in_dim: usize, out_dim: usize, x: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(x.rows, in_dim);
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(b.len(), out_dim);
    let n = x.cols;
    out.rows = out_dim;
    out.cols = n;
    out.data.clear();
    out.data.resize(out_dim * n, 0.0);
    for o in 0..out_dim {
        let row = &mut out.data[o * n..(o + 1) * n];
        row.fill(b[o]);
        let wrow = &w[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            let wi = wrow[i];
            let xrow = &x.data[i * n..(i + 1) * n];
            for c in 0..n {
                row[c] += wi * xrow[c];
            }
        }
    }
}

/// `dw += g · xᵀ` (outer-product accumulation over the batch).
pub fn accumulate_outer(dw: &mut [f64], g: &Matrix, x: &Matrix) {
    let n = g.cols;
    debug_assert_eq!(x.cols, n);
    let (out_dim, in_dim) = (g.rows, x.rows);
    debug_assert_eq!(dw.len(), out_dim * in_dim);
    for o in 0..out_dim {
        let grow = &g.data[o * n..(o + 1) * n];
        let drow = &mut dw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            let xrow = &x.data[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for c in 0..n {
                acc += grow[c] * xrow[c];
            }
            drow[i] += acc;
        }
    }
}

/// `dx += Wᵀ · g`.
pub fn accumulate_transposed(w: &[f64], in_dim: usize, out_dim: usize, g: &Matrix, dx: &mut Matrix) {
    let n = g.cols;
    debug_assert_eq!(dx.rows, in_dim);
    debug_assert_eq!(dx.cols, n);
    for o in 0..out_dim {
        let grow = &g.data[o * n..(o + 1) * n];
        let wrow = &w[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            let wi = wrow[i];
            let drow = &mut dx.data[i * n..(i + 1) * n];
            for c in 0..n {
                drow[c] += wi * grow[c];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_hand_product() {
        // W = [[1,2],[3,4],[5,6]], b = [1,0,-1], x = [[1],[2]]
        let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = vec![1.0, 0.0, -1.0];
        let x = Matrix::column_vector(&[1.0, 2.0]);
        let mut out = Matrix::zeros(0, 0);
        linear_into(&w, &b, 2, 3, &x, &mut out);
        assert_eq!(out.data, vec![6.0, 11.0, 16.0]);
    }

    #[test]
    fn batched_columns_match_single_columns() {
        let w = vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.75];
        let b = vec![0.1, -0.2];
        let cols = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.25]];
        let batch = Matrix::from_columns(&cols);
        let mut out = Matrix::zeros(0, 0);
        linear_into(&w, &b, 3, 2, &batch, &mut out);
        for (c, col) in cols.iter().enumerate() {
            let x = Matrix::column_vector(col);
            let mut single = Matrix::zeros(0, 0);
            linear_into(&w, &b, 3, 2, &x, &mut single);
            assert_eq!(single.column(0), out.column(c));
        }
    }

    #[test]
    fn outer_accumulation_is_g_x_transpose() {
        let g = Matrix::from_vec(2, 1, vec![1.0, -2.0]);
        let x = Matrix::from_vec(3, 1, vec![3.0, 5.0, 7.0]);
        let mut dw = vec![0.0; 6];
        accumulate_outer(&mut dw, &g, &x);
        assert_eq!(dw, vec![3.0, 5.0, 7.0, -6.0, -10.0, -14.0]);
    }
}
