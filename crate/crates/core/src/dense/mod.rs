//! Dense double-precision kernels.
//!
//! Everything here is an unblocked reference implementation except the
//! general product, which goes through `matrixmultiply`.

pub mod flops;
mod lu;
mod qr;

use std::ops::{Index, IndexMut, Range};

use crate::error::{dims, invalid, Result};

pub use lu::{plu_factor, solve_lower, solve_plu, solve_upper, PluFactors};
pub use qr::{id_compress, id_compress_rows, lq_factor, InterpolativeDecomposition, LqFactors};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            let row = &self.row(i)[..self.cols.min(8)];
            writeln!(f, "  {row:?}")?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dims(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Contiguous block `rows x cols`.
    pub fn block(&self, rows: Range<usize>, cols: Range<usize>) -> Matrix {
        assert!(rows.end <= self.rows && cols.end <= self.cols, "block out of range");
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (k, i) in rows.enumerate() {
            out.row_mut(k).copy_from_slice(&self.row(i)[cols.clone()]);
        }
        out
    }

    pub fn row_block(&self, rows: Range<usize>) -> Matrix {
        self.block(rows, 0..self.cols)
    }

    pub fn col_block(&self, cols: Range<usize>) -> Matrix {
        self.block(0..self.rows, cols)
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Matrix) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "block out of range");
        for i in 0..b.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + b.cols].copy_from_slice(b.row(i));
        }
    }

    pub fn add_block(&mut self, r0: usize, c0: usize, b: &Matrix) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "block out of range");
        for i in 0..b.rows {
            let dst = (r0 + i) * self.cols + c0;
            for (d, s) in self.data[dst..dst + b.cols].iter_mut().zip(b.row(i)) {
                *d += s;
            }
        }
    }

    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Matrix {
        assert_eq!(top.cols, bottom.cols, "vstack column mismatch");
        let mut data = Vec::with_capacity(top.data.len() + bottom.data.len());
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Matrix { rows: top.rows + bottom.rows, cols: top.cols, data }
    }

    pub fn hstack(left: &Matrix, right: &Matrix) -> Matrix {
        assert_eq!(left.rows, right.rows, "hstack row mismatch");
        let mut out = Matrix::zeros(left.rows, left.cols + right.cols);
        out.set_block(0, 0, left);
        out.set_block(0, left.cols, right);
        out
    }

    /// Block-diagonal `[a 0; 0 b]`.
    pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows + b.rows, a.cols + b.cols);
        out.set_block(0, 0, a);
        out.set_block(a.rows, a.cols, b);
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        flops::add(2 * self.data.len() as u64);
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Appends the columns of `other` on the right.
    pub fn append_cols(&mut self, other: &Matrix) {
        if self.cols == 0 && self.rows == 0 {
            *self = other.clone();
            return;
        }
        *self = Matrix::hstack(self, other);
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Whether an operand enters a product as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

fn op_shape(a: &Matrix, op: Op) -> (usize, usize) {
    match op {
        Op::N => (a.rows, a.cols),
        Op::T => (a.cols, a.rows),
    }
}

/// Row and column strides of `op(a)` over `a`'s row-major storage.
fn op_strides(a: &Matrix, op: Op) -> (isize, isize) {
    match op {
        Op::N => (a.cols as isize, 1),
        Op::T => (1, a.cols as isize),
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`
pub fn gemm(alpha: f64, a: &Matrix, ta: Op, b: &Matrix, tb: Op, beta: f64, c: &mut Matrix) -> Result<()> {
    let (m, k) = op_shape(a, ta);
    let (k2, n) = op_shape(b, tb);
    if k != k2 || c.rows != m || c.cols != n {
        return Err(invalid(format!(
            "gemm shapes {m}x{k} * {k2}x{n} into {}x{}",
            c.rows, c.cols
        )));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        c.scale(beta);
        return Ok(());
    }
    let (rsa, csa) = op_strides(a, ta);
    let (rsb, csb) = op_strides(b, tb);
    // SAFETY: shapes and strides were checked above against the owning
    // buffers, and `c` does not alias `a` or `b` (it is borrowed mutably).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    flops::add(2 * (m * n * k) as u64);
    Ok(())
}

/// `op(a) * op(b)`
pub fn matmul(a: &Matrix, ta: Op, b: &Matrix, tb: Op) -> Result<Matrix> {
    let (m, k) = op_shape(a, ta);
    let (k2, n) = op_shape(b, tb);
    if k != k2 {
        return Err(invalid(format!("cannot multiply {m}x{k} by {k2}x{n}")));
    }
    let mut c = Matrix::zeros(m, n);
    gemm(1.0, a, ta, b, tb, 0.0, &mut c)?;
    Ok(c)
}

/// Plain `a * b`, panicking on a shape mismatch. For internal use where the
/// shapes are guaranteed by construction.
pub(crate) fn mul(a: &Matrix, b: &Matrix) -> Matrix {
    matmul(a, Op::N, b, Op::N).expect("internal shape mismatch")
}

pub(crate) fn mul_op(a: &Matrix, ta: Op, b: &Matrix, tb: Op) -> Matrix {
    matmul(a, ta, b, tb).expect("internal shape mismatch")
}
