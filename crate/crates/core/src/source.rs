//! Matrix-free access to the operator being compressed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::{matmul, Matrix, Op};
use crate::error::{dims, Error, Result};

/// What compression needs from `A`: products with blocks of vectors and
/// selected entries.
pub trait MatrixSource {
    fn n(&self) -> usize;

    /// `A X`. Panics if `X` does not have `n` rows.
    fn multiply(&self, x: &Matrix) -> Matrix;

    /// `Aᵀ X`. Panics if `X` does not have `n` rows.
    fn multiply_transpose(&self, x: &Matrix) -> Matrix;

    /// `A(rows, cols)`.
    fn extract(&self, rows: &[usize], cols: &[usize]) -> Matrix;

    fn to_dense(&self) -> Matrix {
        let all: Vec<usize> = (0..self.n()).collect();
        self.extract(&all, &all)
    }
}

impl<S: MatrixSource + ?Sized> MatrixSource for &S {
    fn n(&self) -> usize {
        (**self).n()
    }

    fn multiply(&self, x: &Matrix) -> Matrix {
        (**self).multiply(x)
    }

    fn multiply_transpose(&self, x: &Matrix) -> Matrix {
        (**self).multiply_transpose(x)
    }

    fn extract(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        (**self).extract(rows, cols)
    }
}

/// An explicitly stored square matrix.
#[derive(Debug, Clone)]
pub struct DenseSource {
    a: Matrix,
}

impl DenseSource {
    pub fn new(a: Matrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(dims(format!("source must be square, got {}x{}", a.rows(), a.cols())));
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn into_matrix(self) -> Matrix {
        self.a
    }
}

impl MatrixSource for DenseSource {
    fn n(&self) -> usize {
        self.a.rows()
    }

    fn multiply(&self, x: &Matrix) -> Matrix {
        matmul(&self.a, Op::N, x, Op::N).expect("operand has n rows")
    }

    fn multiply_transpose(&self, x: &Matrix) -> Matrix {
        matmul(&self.a, Op::T, x, Op::N).expect("operand has n rows")
    }

    fn extract(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        self.a.select(rows, cols)
    }

    fn to_dense(&self) -> Matrix {
        self.a.clone()
    }
}

/// Probes `probes` random unit vectors and checks that `multiply`,
/// `multiply_transpose` and `extract` describe the same matrix.
pub fn check_consistency<S: MatrixSource + ?Sized>(source: &S, probes: usize, seed: u64) -> Result<()> {
    let n = source.n();
    if n == 0 {
        return Ok(());
    }
    let all: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        let i = rng.random_range(0..n);
        let mut e = Matrix::zeros(n, 1);
        e[(i, 0)] = 1.0;

        let col = source.multiply(&e);
        let want = source.extract(&all, &[i]);
        compare(&col, &want, i, "column")?;

        let row = source.multiply_transpose(&e);
        let want = source.extract(&[i], &all).transpose();
        compare(&row, &want, i, "row")?;
    }
    Ok(())
}

fn compare(got: &Matrix, want: &Matrix, i: usize, what: &str) -> Result<()> {
    if got.shape() != want.shape() {
        return Err(Error::ContractViolation(format!(
            "{what} {i}: product has shape {:?}, extraction {:?}",
            got.shape(),
            want.shape()
        )));
    }
    let err = got.sub(want).norm_fro();
    let scale = want.norm_fro().max(1.0);
    if !(err <= 1e-12 * scale) {
        return Err(Error::ContractViolation(format!(
            "{what} {i}: product and extraction differ by {err:e}"
        )));
    }
    Ok(())
}
