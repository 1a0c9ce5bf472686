//! Fast products with an HSS form, and a power iteration that runs on any
//! linear operator.

use serde::Serialize;

use crate::compress::generate_random;
use crate::dense::{gemm, mul, Matrix, Op};
use crate::error::{dims, Result};
use crate::hss::HssForm;
use crate::source::{DenseSource, MatrixSource};

/// `A X` for the matrix represented by `h`, via one upward and one downward
/// sweep over the tree.
pub fn hss_matvec(h: &HssForm, x: &Matrix) -> Result<Matrix> {
    let tree = h.tree();
    let n = tree.n();
    if x.rows() != n {
        return Err(dims(format!("HSS form of order {n} applied to {} rows", x.rows())));
    }
    let k = x.cols();
    let order = tree.postorder();

    let mut y: Vec<Option<Matrix>> = vec![None; tree.len()];
    for &id in &order {
        if tree.is_root(id) {
            continue;
        }
        let input = match tree.children(id) {
            None => x.row_block(tree.interval(id)),
            Some((c1, c2)) => Matrix::vstack(
                y[c1].as_ref().expect("child visited"),
                y[c2].as_ref().expect("child visited"),
            ),
        };
        y[id] = Some(h.v(id).apply_transpose(&input));
    }

    let mut b = Matrix::zeros(n, k);
    let mut z: Vec<Option<Matrix>> = vec![None; tree.len()];
    z[tree.root()] = Some(Matrix::zeros(0, k));
    for &id in order.iter().rev() {
        let zt = z[id].take().expect("parent visited");
        // U z, or zero at the root
        let uz = if tree.is_root(id) { None } else { Some(h.u(id).apply(&zt)) };
        match tree.children(id) {
            None => {
                let iv = tree.interval(id);
                let mut out = mul(h.d(id), &x.row_block(iv.clone()));
                if let Some(uz) = uz {
                    out.axpy(1.0, &uz);
                }
                b.set_block(iv.start, 0, &out);
            }
            Some((c1, c2)) => {
                let mut z1 = mul(h.b12(id), y[c2].as_ref().expect("upward sweep"));
                let mut z2 = mul(h.b21(id), y[c1].as_ref().expect("upward sweep"));
                if let Some(uz) = uz {
                    let r1 = z1.rows();
                    z1.axpy(1.0, &uz.row_block(0..r1));
                    z2.axpy(1.0, &uz.row_block(r1..uz.rows()));
                }
                z[c1] = Some(z1);
                z[c2] = Some(z2);
            }
        }
    }
    Ok(b)
}

/// A square operator that can be applied to blocks of vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Matrix) -> Matrix;
}

impl LinearOperator for HssForm {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        hss_matvec(self, x).expect("operand has n rows")
    }
}

impl LinearOperator for DenseSource {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        self.multiply(x)
    }
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        mul(self, x)
    }
}

/// Wraps any [`MatrixSource`] as an operator.
pub struct SourceOperator<'a, S: MatrixSource + ?Sized>(pub &'a S);

impl<S: MatrixSource + ?Sized> LinearOperator for SourceOperator<'_, S> {
    fn dim(&self) -> usize {
        self.0.n()
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        self.0.multiply(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerResult {
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Normalized power iteration with Rayleigh-quotient estimates, started from
/// a seeded Gaussian vector. Stops once two successive estimates agree to
/// `tol` relative; `iterations` counts products after the initial one.
pub fn power_method<A: LinearOperator + ?Sized>(op: &A, tol: f64, max_iters: usize, seed: u64) -> PowerResult {
    let n = op.dim();
    if n == 0 {
        return PowerResult { eigenvalue: 0.0, iterations: 0, converged: true };
    }
    let mut v = generate_random(n, 1, seed, 0);
    normalize(&mut v);
    let mut w = op.apply(&v);
    let mut lambda = dot(&v, &w);
    for k in 1..=max_iters {
        v = w;
        if normalize(&mut v) == 0.0 {
            return PowerResult { eigenvalue: 0.0, iterations: k, converged: true };
        }
        w = op.apply(&v);
        let next = dot(&v, &w);
        let done = (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if done {
            return PowerResult { eigenvalue: lambda, iterations: k, converged: true };
        }
    }
    PowerResult { eigenvalue: lambda, iterations: max_iters, converged: false }
}

fn normalize(v: &mut Matrix) -> f64 {
    let nrm = v.norm_fro();
    if nrm > 0.0 {
        v.scale(1.0 / nrm);
    }
    nrm
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    let mut out = Matrix::zeros(1, 1);
    gemm(1.0, a, Op::T, b, Op::N, 0.0, &mut out).expect("vectors of equal length");
    out[(0, 0)]
}
