//! The HSS representation: generators per tree node, consistency checks,
//! dense reconstruction and storage accounting.

mod io;

pub use io::{load_hss, read_hss, save_hss, write_hss};

use crate::dense::{id_compress_rows, mul, InterpolativeDecomposition, Matrix};
use crate::error::{Error, Result};
use crate::source::MatrixSource;
use crate::tree::ClusterTree;

/// `Π [I; E]`: row `perm[k]` of the expanded basis is row `k` of `[I; E]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutedBasis {
    perm: Vec<usize>,
    e: Matrix,
}

impl PermutedBasis {
    pub fn new(perm: Vec<usize>, e: Matrix) -> Result<Self> {
        let rank = e.cols();
        if perm.len() != rank + e.rows() {
            return Err(Error::CorruptForm(format!(
                "permutation of length {} for a basis with {} rows",
                perm.len(),
                rank + e.rows()
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::CorruptForm("basis permutation is not a permutation".into()));
            }
        }
        Ok(Self { perm, e })
    }

    /// The basis selected by a row ID: `U = Xᵀ`.
    pub fn from_id(id: &InterpolativeDecomposition) -> Self {
        Self { perm: id.pivots.clone(), e: id.coefficients.transpose() }
    }

    /// Rank-0 basis with `rows` rows.
    pub fn empty(rows: usize) -> Self {
        Self { perm: (0..rows).collect(), e: Matrix::zeros(rows, 0) }
    }

    pub fn rows(&self) -> usize {
        self.perm.len()
    }

    pub fn rank(&self) -> usize {
        self.e.cols()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn expand(&self) -> Matrix {
        let r = self.rank();
        let mut u = Matrix::zeros(self.rows(), r);
        for k in 0..r {
            u[(self.perm[k], k)] = 1.0;
        }
        for k in 0..self.e.rows() {
            u.row_mut(self.perm[r + k]).copy_from_slice(self.e.row(k));
        }
        u
    }

    /// `U x`
    pub fn apply(&self, x: &Matrix) -> Matrix {
        let r = self.rank();
        assert_eq!(x.rows(), r, "basis applied to wrong row count");
        let mut y = Matrix::zeros(self.rows(), x.cols());
        for k in 0..r {
            y.row_mut(self.perm[k]).copy_from_slice(x.row(k));
        }
        if self.e.rows() > 0 && r > 0 {
            let ex = mul(&self.e, x);
            for k in 0..self.e.rows() {
                y.row_mut(self.perm[r + k]).copy_from_slice(ex.row(k));
            }
        }
        y
    }

    /// `Uᵀ y`
    pub fn apply_transpose(&self, y: &Matrix) -> Matrix {
        let r = self.rank();
        assert_eq!(y.rows(), self.rows(), "basis transpose applied to wrong row count");
        let mut out = y.select_rows(&self.perm[..r]);
        if self.e.rows() > 0 && r > 0 {
            let bottom = y.select_rows(&self.perm[r..]);
            crate::dense::gemm(1.0, &self.e, crate::dense::Op::T, &bottom, crate::dense::Op::N, 1.0, &mut out)
                .expect("shapes fixed by the basis");
        }
        out
    }

    /// `Ω b = [−E I; I 0] Πᵀ b`: the top `rows − rank` rows annihilate the
    /// basis, the bottom `rank` rows keep the selected rows.
    pub fn apply_omega(&self, b: &Matrix) -> Matrix {
        let r = self.rank();
        assert_eq!(b.rows(), self.rows(), "omega applied to wrong row count");
        let top = b.select_rows(&self.perm[..r]);
        let mut bottom = b.select_rows(&self.perm[r..]);
        if r > 0 && self.e.rows() > 0 {
            crate::dense::gemm(-1.0, &self.e, crate::dense::Op::N, &top, crate::dense::Op::N, 1.0, &mut bottom)
                .expect("shapes fixed by the basis");
        }
        Matrix::vstack(&bottom, &top)
    }

    /// Dense `Ω`, for tests.
    pub fn omega_dense(&self) -> Matrix {
        self.apply_omega(&Matrix::identity(self.rows()))
    }

    /// Stored entries and indices, 8 bytes each.
    pub fn bytes(&self) -> usize {
        8 * (self.e.rows() * self.e.cols() + self.perm.len())
    }
}

/// Generators attached to one tree node. Which fields are present depends on
/// the node's position: `d` at leaves, `u`/`v` everywhere but the root, `b12`
/// and `b21` at non-leaves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HssNode {
    pub d: Option<Matrix>,
    pub u: Option<PermutedBasis>,
    pub v: Option<PermutedBasis>,
    pub b12: Option<Matrix>,
    pub b21: Option<Matrix>,
    /// Global row indices selected by the row ID (`I^r`).
    pub row_skel: Vec<usize>,
    /// Global column indices selected by the column ID (`I^c`).
    pub col_skel: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct HssForm {
    tree: ClusterTree,
    nodes: Vec<HssNode>,
    eps: f64,
    d_used: usize,
}

fn corrupt(msg: String) -> Error {
    Error::CorruptForm(msg)
}

impl HssForm {
    pub fn from_parts(tree: ClusterTree, nodes: Vec<HssNode>, eps: f64, d_used: usize) -> Result<Self> {
        let form = Self { tree, nodes, eps, d_used };
        form.validate()?;
        Ok(form)
    }

    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    pub fn n(&self) -> usize {
        self.tree.n()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn d_used(&self) -> usize {
        self.d_used
    }

    pub fn nodes(&self) -> &[HssNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &HssNode {
        &self.nodes[id]
    }

    pub fn d(&self, id: usize) -> &Matrix {
        self.nodes[id].d.as_ref().expect("D is stored at leaves")
    }

    pub fn u(&self, id: usize) -> &PermutedBasis {
        self.nodes[id].u.as_ref().expect("U is stored below the root")
    }

    pub fn v(&self, id: usize) -> &PermutedBasis {
        self.nodes[id].v.as_ref().expect("V is stored below the root")
    }

    pub fn b12(&self, id: usize) -> &Matrix {
        self.nodes[id].b12.as_ref().expect("B is stored at non-leaves")
    }

    pub fn b21(&self, id: usize) -> &Matrix {
        self.nodes[id].b21.as_ref().expect("B is stored at non-leaves")
    }

    /// `(rank U, rank V)` of a non-root node; `(0, 0)` at the root.
    pub fn ranks(&self, id: usize) -> (usize, usize) {
        if self.tree.is_root(id) {
            (0, 0)
        } else {
            (self.u(id).rank(), self.v(id).rank())
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::tree::validate_tree(&self.tree).map_err(|v| corrupt(format!("tree: {v}")))?;
        if self.nodes.len() != self.tree.len() {
            return Err(corrupt(format!(
                "{} node records for a tree of {} nodes",
                self.nodes.len(),
                self.tree.len()
            )));
        }
        for id in self.tree.postorder() {
            let node = &self.nodes[id];
            let size = self.tree.size(id);
            let is_root = self.tree.is_root(id);
            let children = self.tree.children(id);

            match (&node.d, children) {
                (Some(d), None) => {
                    if d.shape() != (size, size) {
                        return Err(corrupt(format!("leaf {id}: D is {:?}, interval {size}", d.shape())));
                    }
                }
                (None, None) => return Err(corrupt(format!("leaf {id} has no D"))),
                (Some(_), Some(_)) => return Err(corrupt(format!("non-leaf {id} stores D"))),
                (None, Some(_)) => {}
            }

            if let Some((c1, c2)) = children {
                let (Some(b12), Some(b21)) = (&node.b12, &node.b21) else {
                    return Err(corrupt(format!("non-leaf {id} lacks B blocks")));
                };
                let (u1, v1) = self.ranks_checked(c1)?;
                let (u2, v2) = self.ranks_checked(c2)?;
                if b12.shape() != (u1, v2) || b21.shape() != (u2, v1) {
                    return Err(corrupt(format!(
                        "non-leaf {id}: B12 {:?} / B21 {:?} against child ranks ({u1},{v1}),({u2},{v2})",
                        b12.shape(),
                        b21.shape()
                    )));
                }
            } else if node.b12.is_some() || node.b21.is_some() {
                return Err(corrupt(format!("leaf {id} stores B blocks")));
            }

            if is_root {
                if node.u.is_some() || node.v.is_some() {
                    return Err(corrupt("root stores U/V".into()));
                }
                continue;
            }
            let (Some(u), Some(v)) = (&node.u, &node.v) else {
                return Err(corrupt(format!("node {id} lacks U/V")));
            };
            let (rows_u, rows_v) = match children {
                None => (size, size),
                Some((c1, c2)) => {
                    let (u1, v1) = self.ranks_checked(c1)?;
                    let (u2, v2) = self.ranks_checked(c2)?;
                    (u1 + u2, v1 + v2)
                }
            };
            if u.rows() != rows_u || v.rows() != rows_v {
                return Err(corrupt(format!(
                    "node {id}: U has {} rows (want {rows_u}), V has {} rows (want {rows_v})",
                    u.rows(),
                    v.rows()
                )));
            }
            let iv = self.tree.interval(id);
            if node.row_skel.len() != u.rank() || node.col_skel.len() != v.rank() {
                return Err(corrupt(format!("node {id}: skeleton sizes do not match ranks")));
            }
            if node.row_skel.iter().chain(&node.col_skel).any(|i| !iv.contains(i)) {
                return Err(corrupt(format!("node {id}: skeleton index outside its interval")));
            }
        }
        Ok(())
    }

    fn ranks_checked(&self, id: usize) -> Result<(usize, usize)> {
        match (&self.nodes[id].u, &self.nodes[id].v) {
            (Some(u), Some(v)) => Ok((u.rank(), v.rank())),
            _ => Err(corrupt(format!("node {id} lacks U/V"))),
        }
    }

    /// Largest rank of any `U` or `V` generator.
    pub fn max_rank(&self) -> usize {
        hss_max_rank(self)
    }

    /// Per-node `(node, rank U, rank V)` in postorder, root excluded.
    pub fn node_ranks(&self) -> Vec<(usize, usize, usize)> {
        self.tree
            .postorder()
            .into_iter()
            .filter(|&id| !self.tree.is_root(id))
            .map(|id| {
                let (r, c) = self.ranks(id);
                (id, r, c)
            })
            .collect()
    }
}

/// Max over nodes of `max(rank U, rank V)`.
pub fn hss_max_rank(h: &HssForm) -> usize {
    h.node_ranks().iter().map(|&(_, r, c)| r.max(c)).max().unwrap_or(0)
}

/// Storage of the generators with 8-byte reals and 8-byte indices: `D`, `B`,
/// the `E` blocks and the basis permutations.
pub fn factor_bytes(h: &HssForm) -> usize {
    let mat = |m: &Option<Matrix>| m.as_ref().map_or(0, |m| 8 * m.rows() * m.cols());
    let basis = |b: &Option<PermutedBasis>| b.as_ref().map_or(0, PermutedBasis::bytes);
    h.nodes
        .iter()
        .map(|n| mat(&n.d) + mat(&n.b12) + mat(&n.b21) + basis(&n.u) + basis(&n.v))
        .sum()
}

/// Extra memory relative to a dense solver, as a fraction of the structured
/// solver's own footprint. The structured footprint is the input matrix plus
/// the generators, the factors and auxiliary buffers (random vectors,
/// samples).
pub fn memory_overhead(h_bytes: usize, ulv_bytes: usize, aux_bytes: usize, dense_bytes: usize) -> f64 {
    let sca = dense_bytes as f64;
    let str_ = sca + (h_bytes + ulv_bytes + aux_bytes) as f64;
    if str_ == 0.0 {
        return 0.0;
    }
    (str_ - sca) / str_
}

/// The same difference relative to the dense footprint instead.
pub fn memory_overhead_vs_dense(h_bytes: usize, ulv_bytes: usize, aux_bytes: usize, dense_bytes: usize) -> f64 {
    let sca = dense_bytes as f64;
    let str_ = sca + (h_bytes + ulv_bytes + aux_bytes) as f64;
    if sca == 0.0 {
        return 0.0;
    }
    (str_ - sca) / sca
}

/// Assembles the dense matrix represented by `h`. Intended for tests: the
/// expanded bases are built recursively here and nowhere else.
pub fn reconstruct_dense(h: &HssForm) -> Result<Matrix> {
    h.validate()?;
    let tree = h.tree();
    let n = tree.n();
    let mut a = Matrix::zeros(n, n);
    let mut ubig: Vec<Option<Matrix>> = vec![None; tree.len()];
    let mut vbig: Vec<Option<Matrix>> = vec![None; tree.len()];
    for id in tree.postorder() {
        let lo = tree.node(id).lo;
        match tree.children(id) {
            None => {
                a.set_block(lo, lo, h.d(id));
                if !tree.is_root(id) {
                    ubig[id] = Some(h.u(id).expand());
                    vbig[id] = Some(h.v(id).expand());
                }
            }
            Some((c1, c2)) => {
                let (l1, l2) = (tree.node(c1).lo, tree.node(c2).lo);
                let u1 = ubig[c1].take().expect("child processed");
                let u2 = ubig[c2].take().expect("child processed");
                let v1 = vbig[c1].take().expect("child processed");
                let v2 = vbig[c2].take().expect("child processed");
                let a12 = mul(&mul(&u1, h.b12(id)), &v2.transpose());
                let a21 = mul(&mul(&u2, h.b21(id)), &v1.transpose());
                a.set_block(l1, l2, &a12);
                a.set_block(l2, l1, &a21);
                if !tree.is_root(id) {
                    ubig[id] = Some(mul(&Matrix::block_diag(&u1, &u2), &h.u(id).expand()));
                    vbig[id] = Some(mul(&Matrix::block_diag(&v1, &v2), &h.v(id).expand()));
                }
            }
        }
    }
    Ok(a)
}

/// Default limit on the matrix order for [`hankel_rank_oracle`].
pub const HANKEL_DENSE_CAP: usize = 4096;

/// Epsilon-ranks `(row, column)` of the off-diagonal strips
/// `A(I_τ, I_0 \ I_τ)` and `A(I_0 \ I_τ, I_τ)`, from dense blocks.
pub fn hankel_ranks<S: MatrixSource + ?Sized>(
    source: &S,
    tree: &ClusterTree,
    node: usize,
    eps: f64,
    cap: usize,
) -> Result<(usize, usize)> {
    let n = source.n();
    if n > cap {
        return Err(Error::Refused(format!("dense Hankel blocks for n = {n} exceed the cap {cap}")));
    }
    let iv = tree.interval(node);
    let inside: Vec<usize> = iv.clone().collect();
    let outside: Vec<usize> = (0..n).filter(|i| !iv.contains(i)).collect();
    if outside.is_empty() {
        return Ok((0, 0));
    }
    let row_strip = source.extract(&inside, &outside);
    let col_strip = source.extract(&outside, &inside);
    let r = id_compress_rows(&row_strip, eps, None)?.rank;
    let c = id_compress_rows(&col_strip.transpose(), eps, None)?.rank;
    Ok((r, c))
}

/// Row Hankel rank of `node`, with the default dense cap.
pub fn hankel_rank_oracle<S: MatrixSource + ?Sized>(source: &S, tree: &ClusterTree, node: usize, eps: f64) -> Result<usize> {
    Ok(hankel_ranks(source, tree, node, eps, HANKEL_DENSE_CAP)?.0)
}
