//! LU with partial pivoting and triangular solves.

use super::{flops, Matrix};
use crate::error::{dims, Error, Result};

/// `P D = L U`, with `L` unit lower and `U` upper stored packed in `lu`.
#[derive(Debug, Clone)]
pub struct PluFactors {
    lu: Matrix,
    /// Row `i` of `P D` is row `perm[i]` of `D`.
    perm: Vec<usize>,
}

impl PluFactors {
    pub fn n(&self) -> usize {
        self.lu.rows()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn l(&self) -> Matrix {
        let n = self.n();
        Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.lu[(i, j)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn u(&self) -> Matrix {
        let n = self.n();
        Matrix::from_fn(n, n, |i, j| if j >= i { self.lu[(i, j)] } else { 0.0 })
    }

    pub fn bytes(&self) -> usize {
        8 * (self.lu.rows() * self.lu.cols() + self.perm.len())
    }
}

pub fn plu_factor(d: &Matrix) -> Result<PluFactors> {
    let n = d.rows();
    if d.cols() != n {
        return Err(dims(format!("LU needs a square matrix, got {}x{}", n, d.cols())));
    }
    let threshold = 1e-14 * d.norm_inf();
    let mut lu = d.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= threshold || best == 0.0 {
            return Err(Error::SingularMatrix { step: k, pivot: best });
        }
        if p != k {
            let (top, bottom) = lu.data_mut().split_at_mut(p * n);
            top[k * n..(k + 1) * n].swap_with_slice(&mut bottom[..n]);
            perm.swap(k, p);
        }
        let pivot = lu[(k, k)];
        let (top, bottom) = lu.data_mut().split_at_mut((k + 1) * n);
        let prow = &top[k * n..];
        for i in 0..n - k - 1 {
            let row = &mut bottom[i * n..(i + 1) * n];
            let f = row[k] / pivot;
            row[k] = f;
            if f != 0.0 {
                for j in k + 1..n {
                    row[j] -= f * prow[j];
                }
            }
        }
        flops::add(2 * ((n - k - 1) * (n - k - 1)) as u64 + (n - k - 1) as u64);
    }
    Ok(PluFactors { lu, perm })
}

pub fn solve_plu(f: &PluFactors, b: &Matrix) -> Result<Matrix> {
    let n = f.n();
    if b.rows() != n {
        return Err(dims(format!("LU of order {n} applied to {} rows", b.rows())));
    }
    let mut x = b.select_rows(&f.perm);
    let k = x.cols();
    // Forward with unit L.
    for i in 0..n {
        for j in 0..i {
            let l = f.lu[(i, j)];
            if l != 0.0 {
                for c in 0..k {
                    let v = x[(j, c)];
                    x[(i, c)] -= l * v;
                }
            }
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            let u = f.lu[(i, j)];
            if u != 0.0 {
                for c in 0..k {
                    let v = x[(j, c)];
                    x[(i, c)] -= u * v;
                }
            }
        }
        let d = f.lu[(i, i)];
        for c in 0..k {
            x[(i, c)] /= d;
        }
    }
    flops::add(2 * (n * n * k) as u64);
    Ok(x)
}

/// Solves `L X = B` with `L` square lower triangular (non-unit diagonal).
pub fn solve_lower(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = l.rows();
    if l.cols() != n || b.rows() != n {
        return Err(dims(format!(
            "lower solve with {}x{} factor and {} rows",
            n,
            l.cols(),
            b.rows()
        )));
    }
    let mut x = b.clone();
    let k = x.cols();
    for i in 0..n {
        for j in 0..i {
            let v = l[(i, j)];
            if v != 0.0 {
                for c in 0..k {
                    let xj = x[(j, c)];
                    x[(i, c)] -= v * xj;
                }
            }
        }
        let d = l[(i, i)];
        if d == 0.0 {
            return Err(Error::SingularMatrix { step: i, pivot: 0.0 });
        }
        for c in 0..k {
            x[(i, c)] /= d;
        }
    }
    flops::add((n * n * k) as u64);
    Ok(x)
}

/// Solves `U X = B` with `U` square upper triangular.
pub fn solve_upper(u: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = u.rows();
    if u.cols() != n || b.rows() != n {
        return Err(dims(format!(
            "upper solve with {}x{} factor and {} rows",
            n,
            u.cols(),
            b.rows()
        )));
    }
    let mut x = b.clone();
    let k = x.cols();
    for i in (0..n).rev() {
        for j in i + 1..n {
            let v = u[(i, j)];
            if v != 0.0 {
                for c in 0..k {
                    let xj = x[(j, c)];
                    x[(i, c)] -= v * xj;
                }
            }
        }
        let d = u[(i, i)];
        if d == 0.0 {
            return Err(Error::SingularMatrix { step: i, pivot: 0.0 });
        }
        for c in 0..k {
            x[(i, c)] /= d;
        }
    }
    flops::add((n * n * k) as u64);
    Ok(x)
}
