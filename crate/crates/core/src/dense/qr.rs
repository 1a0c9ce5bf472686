//! Householder QR with column pivoting, the interpolative decomposition built
//! on it, and LQ.
//!
//! Both factorizations work on a buffer where every column of the matrix being
//! factored is a contiguous slice. For the row-oriented entry points that is
//! exactly the row-major storage of the caller's matrix, so nothing is
//! transposed.

use super::{flops, Matrix};
use crate::error::{invalid, Result};

/// `Y ≈ Y(:, J) X` where `X = [I T] Π⁻¹`.
#[derive(Debug, Clone)]
pub struct InterpolativeDecomposition {
    /// Interpolation coefficients, `rank x m`.
    pub x: Matrix,
    /// Selected columns, in pivot order.
    pub j: Vec<usize>,
    pub rank: usize,
    /// Full column permutation; `pivots[..rank] == j`.
    pub pivots: Vec<usize>,
    /// `T = R11⁻¹ R12`, `rank x (m - rank)`.
    pub coefficients: Matrix,
}

/// Result of [`lq_factor`]: `W = [L 0] Q`.
#[derive(Debug, Clone)]
pub struct LqFactors {
    /// `rows(W) x min(rows(W), cols(W))`, nonnegative diagonal.
    pub l: Matrix,
    /// Square orthogonal, `cols(W) x cols(W)`.
    pub q: Matrix,
}

impl LqFactors {
    /// First `rows(L)` rows of `Q`.
    pub fn q_top(&self) -> Matrix {
        self.q.row_block(0..self.l.rows().min(self.q.rows()))
    }

    pub fn q_bottom(&self) -> Matrix {
        self.q.row_block(self.l.rows().min(self.q.rows())..self.q.rows())
    }
}

fn norm2(x: &[f64]) -> f64 {
    // Scaled to avoid overflow on large entries.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

/// Builds a reflector `H = I - tau v vᵀ` with `H x = beta e1`. On return
/// `x[0] = beta` and `x[1..]` holds `v[1..]` (`v[0] = 1`).
fn householder(x: &mut [f64]) -> f64 {
    let alpha = x[0];
    let xnorm = norm2(&x[1..]);
    if xnorm == 0.0 {
        return 0.0;
    }
    let beta = -alpha.signum() * alpha.hypot(xnorm);
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    flops::add(3 * x.len() as u64);
    tau
}

/// Applies the reflector stored in `v` (with implicit leading one) to `y`.
fn apply_reflector(v: &[f64], tau: f64, y: &mut [f64]) {
    if tau == 0.0 {
        return;
    }
    let mut w = y[0];
    for (a, b) in v[1..].iter().zip(&y[1..]) {
        w += a * b;
    }
    w *= tau;
    y[0] -= w;
    for (a, b) in v[1..].iter().zip(&mut y[1..]) {
        *b -= w * a;
    }
    flops::add(4 * y.len() as u64);
}

/// Column-pivoted QR on `m` contiguous columns of length `p`. Stops at the
/// first step whose pivot column norm is `<= eps * |R00|`, or after
/// `max_rank` steps. Returns the rank and the column permutation; `R` is left
/// in the upper triangle of the buffer.
fn pivoted_qr(buf: &mut [f64], p: usize, m: usize, eps: f64, max_rank: usize) -> (usize, Vec<usize>) {
    let mut piv: Vec<usize> = (0..m).collect();
    let mut vn1: Vec<f64> = (0..m).map(|c| norm2(&buf[c * p..(c + 1) * p])).collect();
    let mut vn2 = vn1.clone();
    flops::add(2 * (p * m) as u64);
    let tol3z = f64::EPSILON.sqrt();
    let steps = p.min(m).min(max_rank);
    let mut r00 = 0.0;
    let mut rank = 0;
    for i in 0..steps {
        // Lowest index wins ties.
        let mut best = i;
        for c in i + 1..m {
            if vn1[c] > vn1[best] {
                best = c;
            }
        }
        if best != i {
            let (a, b) = buf.split_at_mut(best * p);
            a[i * p..(i + 1) * p].swap_with_slice(&mut b[..p]);
            piv.swap(i, best);
            vn1.swap(i, best);
            vn2.swap(i, best);
        }
        let col_norm = norm2(&buf[i * p + i..(i + 1) * p]);
        if i == 0 {
            r00 = col_norm;
            if r00 == 0.0 {
                break;
            }
        } else if col_norm <= eps * r00 {
            break;
        }
        let (head, tail) = buf.split_at_mut((i + 1) * p);
        let v = &mut head[i * p + i..];
        let tau = householder(v);
        let v = &head[i * p + i..];
        for c in i + 1..m {
            let off = (c - i - 1) * p;
            let col = &mut tail[off..off + p];
            apply_reflector(v, tau, &mut col[i..]);
            if vn1[c] != 0.0 {
                let ratio = col[i].abs() / vn1[c];
                let temp = (1.0 - ratio * ratio).max(0.0);
                let temp2 = temp * (vn1[c] / vn2[c]).powi(2);
                if temp2 <= tol3z {
                    vn1[c] = norm2(&col[i + 1..]);
                    vn2[c] = vn1[c];
                } else {
                    vn1[c] *= temp.sqrt();
                }
            }
        }
        rank = i + 1;
    }
    (rank, piv)
}

/// ID over the rows of `s`: `s ≈ Xᵀ s(J, :)`, i.e. the interpolative
/// decomposition of `sᵀ` without forming it.
pub fn id_compress_rows(s: &Matrix, eps: f64, max_rank: Option<usize>) -> Result<InterpolativeDecomposition> {
    if !s.is_finite() {
        return Err(invalid("non-finite entries in ID input"));
    }
    if !(eps >= 0.0) {
        return Err(invalid(format!("eps must be nonnegative, got {eps}")));
    }
    let m = s.rows();
    let p = s.cols();
    let mut buf = s.data().to_vec();
    let (k, piv) = pivoted_qr(&mut buf, p, m, eps, max_rank.unwrap_or(usize::MAX));

    // T = R11⁻¹ R12 by back substitution, one column of R12 at a time.
    let mut t = Matrix::zeros(k, m - k);
    let mut col = vec![0.0; k];
    for c in k..m {
        let rc = &buf[c * p..c * p + k];
        col.copy_from_slice(rc);
        for i in (0..k).rev() {
            let mut v = col[i];
            for l in i + 1..k {
                v -= buf[l * p + i] * col[l];
            }
            col[i] = v / buf[i * p + i];
        }
        for i in 0..k {
            t[(i, c - k)] = col[i];
        }
    }
    flops::add((k * k * (m - k)) as u64);

    let mut x = Matrix::zeros(k, m);
    for i in 0..k {
        x[(i, piv[i])] = 1.0;
    }
    for c in k..m {
        for i in 0..k {
            x[(i, piv[c])] = t[(i, c - k)];
        }
    }
    Ok(InterpolativeDecomposition { x, j: piv[..k].to_vec(), rank: k, pivots: piv, coefficients: t })
}

/// Column ID: `y ≈ y(:, J) X`.
///
/// With `k` the returned rank, the discarded part is the trailing block of the
/// pivoted triangular factor, whose columns all have norm at most
/// `eps * |R00|`; hence `‖Y − Y(:,J)X‖_F ≤ sqrt(m − k) · eps · ‖Y‖_2`.
pub fn id_compress(y: &Matrix, eps: f64, max_rank: Option<usize>) -> Result<InterpolativeDecomposition> {
    id_compress_rows(&y.transpose(), eps, max_rank)
}

/// `W = [L 0] Q` via Householder QR of `Wᵀ`.
pub fn lq_factor(w: &Matrix) -> LqFactors {
    let p = w.rows();
    let q = w.cols();
    let kk = p.min(q);
    // Column i of Wᵀ is row i of W: contiguous in row-major storage.
    let mut buf = w.data().to_vec();
    let mut taus = vec![0.0; kk];
    for i in 0..kk {
        let (head, tail) = buf.split_at_mut((i + 1) * q);
        taus[i] = householder(&mut head[i * q + i..]);
        let v = &head[i * q + i..];
        for c in i + 1..p {
            let off = (c - i - 1) * q;
            apply_reflector(v, taus[i], &mut tail[off + i..off + q]);
        }
    }

    // Accumulate Q̂ = H0 H1 ... column by column (column-major).
    let mut qhat = vec![0.0; q * q];
    for c in 0..q {
        qhat[c * q + c] = 1.0;
    }
    for i in (0..kk).rev() {
        let v = &buf[i * q + i..(i + 1) * q];
        for c in i..q {
            apply_reflector(v, taus[i], &mut qhat[c * q + i..(c + 1) * q]);
        }
    }

    let mut l = Matrix::zeros(p, kk);
    for j in 0..p {
        for i in 0..=j.min(kk.saturating_sub(1)) {
            if i < kk {
                l[(j, i)] = buf[j * q + i];
            }
        }
    }
    // Column-major Q̂ read row-major is Q̂ᵀ = Q.
    let mut qm = Matrix::from_vec(q, q, qhat).expect("square buffer");
    for i in 0..kk {
        if l[(i, i)] < 0.0 {
            for j in 0..p {
                l[(j, i)] = -l[(j, i)];
            }
            for v in qm.row_mut(i) {
                *v = -*v;
            }
        }
    }
    LqFactors { l, q: qm }
}
