//! Deterministic test matrices: two Toeplitz families, exact HSS matrices
//! with prescribed ranks, and a plain binary matrix file format.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::dense::{flops, mul, Matrix};
use crate::error::{dims, invalid, Error, Result};
use crate::source::{DenseSource, MatrixSource};
use crate::tree::{build_comb_tree, ClusterTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToeplitzKind {
    /// `a_ii = n²`, `a_ij = i − j`.
    Simple,
    /// `a_ii = π²/6`, `a_ij = (−1)^(i−j) / ((i−j)² h²)` with grid spacing `h`.
    QChem { spacing: f64 },
}

/// A Toeplitz matrix given by its diagonals; products go through a
/// circulant embedding of order `2n`.
pub struct ToeplitzSource {
    n: usize,
    kind: ToeplitzKind,
    /// `t[n - 1 + k]` is the value on diagonal `k = i − j`.
    t: Vec<f64>,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ToeplitzSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzSource").field("n", &self.n).field("kind", &self.kind).finish()
    }
}

pub fn toeplitz_simple(n: usize) -> Result<ToeplitzSource> {
    ToeplitzSource::new(n, ToeplitzKind::Simple)
}

pub fn toeplitz_qchem(n: usize, spacing: f64) -> Result<ToeplitzSource> {
    ToeplitzSource::new(n, ToeplitzKind::QChem { spacing })
}

impl ToeplitzSource {
    pub fn new(n: usize, kind: ToeplitzKind) -> Result<Self> {
        if n == 0 {
            return Err(invalid("matrix order must be positive"));
        }
        if let ToeplitzKind::QChem { spacing } = kind {
            if !(spacing.is_finite() && spacing > 0.0) {
                return Err(invalid(format!("grid spacing must be positive, got {spacing}")));
            }
        }
        let t: Vec<f64> = (0..2 * n - 1).map(|p| diagonal(kind, n, p as i64 - (n as i64 - 1))).collect();
        let m = 2 * n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        // first column of the circulant
        let mut spectrum = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..n {
            spectrum[k].re = t[n - 1 + k];
        }
        for k in 1..n {
            spectrum[m - k].re = t[n - 1 - k];
        }
        forward.process(&mut spectrum);
        Ok(Self { n, kind, t, spectrum, forward, inverse })
    }

    pub fn kind(&self) -> ToeplitzKind {
        self.kind
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.t[self.n - 1 + i - j]
    }

    fn product(&self, x: &Matrix, transpose: bool) -> Matrix {
        let n = self.n;
        assert_eq!(x.rows(), n, "operand has n rows");
        let m = 2 * n;
        let mut out = Matrix::zeros(n, x.cols());
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for c in 0..x.cols() {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(if i < n { x[(i, c)] } else { 0.0 }, 0.0);
            }
            self.forward.process(&mut buf);
            for (b, s) in buf.iter_mut().zip(&self.spectrum) {
                // the transposed circulant has the conjugate spectrum
                *b *= if transpose { s.conj() } else { *s };
            }
            self.inverse.process(&mut buf);
            for i in 0..n {
                out[(i, c)] = buf[i].re / m as f64;
            }
        }
        let fft = 5.0 * m as f64 * (m as f64).log2();
        flops::add((x.cols() as f64 * (2.0 * fft + 6.0 * m as f64)) as u64);
        out
    }
}

fn diagonal(kind: ToeplitzKind, n: usize, k: i64) -> f64 {
    match kind {
        ToeplitzKind::Simple => {
            if k == 0 {
                (n as f64) * (n as f64)
            } else {
                k as f64
            }
        }
        ToeplitzKind::QChem { spacing } => {
            if k == 0 {
                std::f64::consts::PI.powi(2) / 6.0
            } else {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / ((k * k) as f64 * spacing * spacing)
            }
        }
    }
}

impl MatrixSource for ToeplitzSource {
    fn n(&self) -> usize {
        self.n
    }

    fn multiply(&self, x: &Matrix) -> Matrix {
        self.product(x, false)
    }

    fn multiply_transpose(&self, x: &Matrix) -> Matrix {
        self.product(x, true)
    }

    fn extract(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let off = self.n as i64 - 1;
        Matrix::from_fn(rows.len(), cols.len(), |a, b| {
            self.t[(off + rows[a] as i64 - cols[b] as i64) as usize]
        })
    }
}

/// Generators of an exactly HSS matrix, with plain (non-interpolative)
/// bases. Entry `id` is `None` where the generator does not exist.
#[derive(Debug, Clone)]
pub struct HssGroundTruth {
    pub tree: ClusterTree,
    /// Rank of `U_τ` and `V_τ`, by node id; zero at the root.
    pub ranks: Vec<usize>,
    pub d: Vec<Option<Matrix>>,
    pub u: Vec<Option<Matrix>>,
    pub v: Vec<Option<Matrix>>,
    pub b12: Vec<Option<Matrix>>,
    pub b21: Vec<Option<Matrix>>,
}

impl HssGroundTruth {
    /// Largest generator rank, which is the exact HSS rank of the matrix.
    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(0)
    }

    /// Dense matrix with these generators.
    pub fn assemble(&self) -> Matrix {
        let tree = &self.tree;
        let n = tree.n();
        let mut a = Matrix::zeros(n, n);
        let mut ubig: Vec<Option<Matrix>> = vec![None; tree.len()];
        let mut vbig: Vec<Option<Matrix>> = vec![None; tree.len()];
        for id in tree.postorder() {
            let (u, v) = match tree.children(id) {
                None => {
                    let lo = tree.node(id).lo;
                    a.set_block(lo, lo, self.d[id].as_ref().expect("leaf D"));
                    (Matrix::identity(tree.size(id)), Matrix::identity(tree.size(id)))
                }
                Some((c1, c2)) => {
                    let (l1, l2) = (tree.node(c1).lo, tree.node(c2).lo);
                    let u1 = ubig[c1].take().expect("child processed");
                    let u2 = ubig[c2].take().expect("child processed");
                    let v1 = vbig[c1].take().expect("child processed");
                    let v2 = vbig[c2].take().expect("child processed");
                    let a12 = mul(&mul(&u1, self.b12[id].as_ref().expect("B12")), &v2.transpose());
                    let a21 = mul(&mul(&u2, self.b21[id].as_ref().expect("B21")), &v1.transpose());
                    a.set_block(l1, l2, &a12);
                    a.set_block(l2, l1, &a21);
                    (Matrix::block_diag(&u1, &u2), Matrix::block_diag(&v1, &v2))
                }
            };
            if !tree.is_root(id) {
                ubig[id] = Some(mul(&u, self.u[id].as_ref().expect("U")));
                vbig[id] = Some(mul(&v, self.v[id].as_ref().expect("V")));
            }
        }
        a
    }
}

/// A dense matrix built from random HSS generators, with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticHss {
    pub source: DenseSource,
    pub truth: HssGroundTruth,
}

impl MatrixSource for SyntheticHss {
    fn n(&self) -> usize {
        self.source.n()
    }

    fn multiply(&self, x: &Matrix) -> Matrix {
        self.source.multiply(x)
    }

    fn multiply_transpose(&self, x: &Matrix) -> Matrix {
        self.source.multiply_transpose(x)
    }

    fn extract(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        self.source.extract(rows, cols)
    }

    fn to_dense(&self) -> Matrix {
        self.source.matrix().clone()
    }
}

/// Diagonal shift added to every leaf block by [`synthetic_hss`].
pub const DEFAULT_SHIFT: f64 = 4.0;

/// Exact HSS matrix of rank `r` on `tree`: every non-root node gets rank
/// `min(r, |I_τ|, r_ν1 + r_ν2)`.
pub fn synthetic_hss(tree: &ClusterTree, r: usize, seed: u64) -> Result<SyntheticHss> {
    let mut ranks = vec![0; tree.len()];
    for id in tree.postorder() {
        if tree.is_root(id) {
            continue;
        }
        let cap = match tree.children(id) {
            None => tree.size(id),
            Some((a, b)) => ranks[a] + ranks[b],
        };
        ranks[id] = r.min(cap);
    }
    synthetic_hss_with_ranks(tree, &ranks, seed, DEFAULT_SHIFT)
}

/// Exact HSS matrix with the rank of every non-root node given by
/// `ranks[id]`. Leaf bases are Gaussian scaled by `1/√m`, transfer matrices
/// and `B` by `1/√r`, and leaf `D` is a scaled Gaussian plus `shift · I`.
pub fn synthetic_hss_with_ranks(tree: &ClusterTree, ranks: &[usize], seed: u64, shift: f64) -> Result<SyntheticHss> {
    if ranks.len() != tree.len() {
        return Err(dims(format!("{} ranks for {} nodes", ranks.len(), tree.len())));
    }
    let mut ranks = ranks.to_vec();
    ranks[tree.root()] = 0;
    for id in tree.postorder() {
        if tree.is_root(id) {
            continue;
        }
        let cap = match tree.children(id) {
            None => tree.size(id),
            Some((a, b)) => ranks[a] + ranks[b],
        };
        if ranks[id] > cap {
            return Err(invalid(format!("rank {} at node {id} exceeds the possible {cap}", ranks[id])));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |rows: usize, cols: usize, scale: f64| {
        Matrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    };
    let inv_sqrt = |k: usize| if k == 0 { 1.0 } else { 1.0 / (k as f64).sqrt() };
    let len = tree.len();
    let mut truth = HssGroundTruth {
        tree: tree.clone(),
        ranks: ranks.clone(),
        d: vec![None; len],
        u: vec![None; len],
        v: vec![None; len],
        b12: vec![None; len],
        b21: vec![None; len],
    };
    for id in tree.postorder() {
        let rows = match tree.children(id) {
            None => {
                let m = tree.size(id);
                let mut d = gauss(m, m, inv_sqrt(m));
                for i in 0..m {
                    d[(i, i)] += shift;
                }
                truth.d[id] = Some(d);
                m
            }
            Some((c1, c2)) => {
                let (r1, r2) = (ranks[c1], ranks[c2]);
                truth.b12[id] = Some(gauss(r1, r2, inv_sqrt(r1.max(r2))));
                truth.b21[id] = Some(gauss(r2, r1, inv_sqrt(r1.max(r2))));
                r1 + r2
            }
        };
        if !tree.is_root(id) {
            let scale = inv_sqrt(rows);
            truth.u[id] = Some(gauss(rows, ranks[id], scale));
            truth.v[id] = Some(gauss(rows, ranks[id], scale));
        }
    }
    let source = DenseSource::new(truth.assemble())?;
    Ok(SyntheticHss { source, truth })
}

/// Per-node ranks for a comb tree from [`build_comb_tree`]: the deepest pair
/// of leaves gets `level_ranks[0]`, and at every step up both the grown
/// subtree and its new right sibling get the next entry.
pub fn comb_ranks(tree: &ClusterTree, level_ranks: &[usize]) -> Result<Vec<usize>> {
    let mut ranks = vec![0; tree.len()];
    let mut spine = Vec::new();
    let mut id = tree.root();
    while let Some((left, right)) = tree.children(id) {
        spine.push((left, right));
        id = left;
    }
    if spine.len() != level_ranks.len() {
        return Err(invalid(format!(
            "comb with {} levels needs {} ranks, got {}",
            spine.len(),
            spine.len(),
            level_ranks.len()
        )));
    }
    for (&(left, right), &r) in spine.iter().rev().zip(level_ranks) {
        ranks[left] = r;
        ranks[right] = r;
    }
    Ok(ranks)
}

/// Comb-structured matrix: prescribed-rank off-diagonal blocks along the
/// comb, full-rank dense leaf blocks everywhere else.
pub fn comb_matrix(n: usize, leaf_sizes: &[usize], level_ranks: &[usize], seed: u64) -> Result<SyntheticHss> {
    let tree = build_comb_tree(n, leaf_sizes)?;
    let ranks = comb_ranks(&tree, level_ranks)?;
    synthetic_hss_with_ranks(&tree, &ranks, seed, DEFAULT_SHIFT)
}

/// Leaf sizes `n/8, n/8, n/4, n/2` (remainder on the last) and level ranks
/// 70, 60, 40 for the comb experiment.
pub fn comb_demo_layout(n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 8 * 70 {
        return Err(invalid(format!("comb layout needs n >= 560, got {n}")));
    }
    let a = n / 8;
    let b = n / 4;
    Ok((vec![a, a, b, n - 2 * a - b], vec![70, 60, 40]))
}

const FILE_MAGIC: &[u8; 8] = b"STRUDNS1";

/// Bytes of a dense matrix file: magic, `u64` rows and cols, row-major `f64`s.
pub fn encode_matrix(a: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * a.data().len());
    out.extend_from_slice(FILE_MAGIC);
    out.extend_from_slice(&(a.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(a.cols() as u64).to_le_bytes());
    for v in a.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    let bad = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 24 {
        return Err(bad("matrix file shorter than its header"));
    }
    if &bytes[..8] != FILE_MAGIC {
        return Err(bad("bad magic, not a dense matrix file"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(8), word(16));
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| b.checked_add(24))
        .ok_or_else(|| bad("matrix dimensions overflow"))?;
    if expected != bytes.len() as u64 {
        return Err(Error::Format(format!("expected {expected} bytes, file has {}", bytes.len())));
    }
    let data = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Matrix::from_vec(rows as usize, cols as usize, data)
}

pub fn save_matrix_file(path: impl AsRef<Path>, a: &Matrix) -> Result<()> {
    Ok(fs::write(path, encode_matrix(a))?)
}

/// Loads a square matrix file as a source.
pub fn load_matrix_file(path: impl AsRef<Path>) -> Result<DenseSource> {
    DenseSource::new(decode_matrix(&fs::read(path)?)?)
}
