//! Randomized HSS compression with adaptive sampling.
//!
//! The tree is traversed in postorder. Each node builds local samples from the
//! global samples `S^r = A R^r`, `S^c = Aᵀ R^c` (leaves) or from its children's
//! reduced samples (non-leaves), and compresses them with a row ID. When a
//! node cannot certify its rank with the current number of samples `d`, the
//! sweep stops, `d` grows by `delta_d` and the postorder restarts. Nodes that
//! were already compressed keep their generators and only fold in the new
//! sample columns.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dense::{flops, gemm, id_compress_rows, Matrix, Op};
use crate::error::{dims, invalid, Error, Result};
use crate::hss::{factor_bytes, HssForm, HssNode, PermutedBasis};
use crate::source::{check_consistency, MatrixSource};
use crate::tree::ClusterTree;

/// Offsets the seed of the column-side random matrix.
const COLUMN_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SamplingConfig {
    /// Initial number of random vectors.
    pub d0: usize,
    /// Vectors added on every restart.
    pub delta_d: usize,
    /// Oversampling used by [`SamplingConfig::for_rank`].
    pub oversampling: usize,
    /// A node is accepted once `d - rank >= gap`.
    pub gap: usize,
    pub max_d: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { d0: 32, delta_d: 32, oversampling: 10, gap: 10, max_d: 4096, seed: 0 }
    }
}

impl SamplingConfig {
    /// Starts with `d0 = rank + oversampling`, enough to avoid restarts when
    /// `rank` bounds the HSS rank.
    pub fn for_rank(rank: usize) -> Self {
        let base = Self::default();
        Self { d0: rank + base.oversampling, max_d: base.max_d.max(rank + base.oversampling), ..base }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d0 == 0 || self.delta_d == 0 || self.gap == 0 {
            return Err(invalid("d0, delta_d and gap must be at least 1"));
        }
        if self.max_d < self.d0 {
            return Err(invalid(format!("max_d = {} is below d0 = {}", self.max_d, self.d0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeState {
    Untouched,
    PartiallyCompressed,
    Compressed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeRank {
    pub node: usize,
    pub row_rank: usize,
    pub col_rank: usize,
}

/// One ID attempt at a node. `col_rank` is absent when the row side already
/// failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Attempt {
    pub node: usize,
    pub d: usize,
    pub row_rank: usize,
    pub col_rank: Option<usize>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    /// Sample count of every sweep that ended in a restart.
    pub restarts: Vec<usize>,
    pub d_final: usize,
    pub node_ranks: Vec<NodeRank>,
    pub max_rank: usize,
    pub flops: u64,
    /// Wall-clock seconds; left empty unless the caller measures it.
    pub seconds: Option<f64>,
    pub bytes: usize,
    pub attempts: Vec<Attempt>,
}

impl CompressionReport {
    pub fn restart_count(&self) -> usize {
        self.restarts.len()
    }
}

/// `n x d` standard normal matrix whose column `j` is the global column
/// `offset + j` of the stream identified by `seed`. Extending a draw therefore
/// reproduces exactly the columns a larger draw would have produced.
pub fn generate_random(n: usize, d: usize, seed: u64, offset: usize) -> Matrix {
    let mut m = Matrix::zeros(n, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 0..d {
        rng.set_stream((offset + j) as u64);
        rng.set_word_pos(0);
        for i in 0..n {
            m[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    m
}

#[derive(Debug, Clone)]
struct Work {
    state: NodeState,
    /// Sample columns folded into this node so far.
    cols: usize,
    s_loc_r: Matrix,
    s_loc_c: Matrix,
    s_r: Matrix,
    s_c: Matrix,
    r_r: Matrix,
    r_c: Matrix,
    d: Option<Matrix>,
    b12: Option<Matrix>,
    b21: Option<Matrix>,
    u: Option<PermutedBasis>,
    v: Option<PermutedBasis>,
    row_skel: Vec<usize>,
    col_skel: Vec<usize>,
}

impl Default for Work {
    fn default() -> Self {
        let empty = Matrix::zeros(0, 0);
        Self {
            state: NodeState::Untouched,
            cols: 0,
            s_loc_r: empty.clone(),
            s_loc_c: empty.clone(),
            s_r: empty.clone(),
            s_c: empty.clone(),
            r_r: empty.clone(),
            r_c: empty,
            d: None,
            b12: None,
            b21: None,
            u: None,
            v: None,
            row_skel: Vec::new(),
            col_skel: Vec::new(),
        }
    }
}

/// Appends columns, treating a `0 x 0` matrix as empty.
fn append(dst: &mut Matrix, new: Matrix) {
    if dst.cols() == 0 {
        *dst = new;
    } else {
        dst.append_cols(&new);
    }
}

/// `s - b r`
fn minus_product(s: &Matrix, b: &Matrix, tb: Op, r: &Matrix) -> Matrix {
    let mut out = s.clone();
    gemm(-1.0, b, tb, r, Op::N, 1.0, &mut out).expect("sample shapes are consistent");
    out
}

/// Leaf local samples `S(I, :) - D R(I, :)`; `td` selects `D` or `Dᵀ`.
pub(crate) fn leaf_local_sample(s: &Matrix, d: &Matrix, td: Op, r: &Matrix) -> Matrix {
    minus_product(s, d, td, r)
}

struct Compressor<'a, S: MatrixSource + ?Sized> {
    source: &'a S,
    tree: &'a ClusterTree,
    eps: f64,
    gap: usize,
    order: Vec<usize>,
    d: usize,
    rr: Matrix,
    rc: Matrix,
    sr: Matrix,
    sc: Matrix,
    work: Vec<Work>,
    attempts: Vec<Attempt>,
}

enum Outcome {
    Done,
    Failed,
}

impl<S: MatrixSource + ?Sized> Compressor<'_, S> {
    /// Runs one postorder sweep; returns the node that failed, if any.
    fn sweep(&mut self) -> Result<Option<usize>> {
        for k in 0..self.order.len() {
            let id = self.order[k];
            if let Outcome::Failed = self.process(id)? {
                return Ok(Some(id));
            }
        }
        Ok(None)
    }

    fn extract(&mut self, id: usize) {
        let tree = self.tree;
        match tree.children(id) {
            None => {
                let idx: Vec<usize> = tree.interval(id).collect();
                self.work[id].d = Some(self.source.extract(&idx, &idx));
            }
            Some((c1, c2)) => {
                let b12 = self.source.extract(&self.work[c1].row_skel, &self.work[c2].col_skel);
                let b21 = self.source.extract(&self.work[c2].row_skel, &self.work[c1].col_skel);
                self.work[id].b12 = Some(b12);
                self.work[id].b21 = Some(b21);
            }
        }
    }

    /// Local row and column samples restricted to sample columns `lo..d`.
    fn local_samples(&self, id: usize, lo: usize) -> (Matrix, Matrix) {
        let d = self.d;
        let w = &self.work[id];
        match self.tree.children(id) {
            None => {
                let iv = self.tree.interval(id);
                let dm = w.d.as_ref().expect("leaf D extracted");
                let sr = leaf_local_sample(
                    &self.sr.block(iv.clone(), lo..d),
                    dm,
                    Op::N,
                    &self.rr.block(iv.clone(), lo..d),
                );
                let sc = leaf_local_sample(
                    &self.sc.block(iv.clone(), lo..d),
                    dm,
                    Op::T,
                    &self.rc.block(iv, lo..d),
                );
                (sr, sc)
            }
            Some((c1, c2)) => {
                let (w1, w2) = (&self.work[c1], &self.work[c2]);
                let b12 = w.b12.as_ref().expect("B extracted");
                let b21 = w.b21.as_ref().expect("B extracted");
                let cols = |m: &Matrix| m.col_block(lo..d);
                let sr = Matrix::vstack(
                    &minus_product(&cols(&w1.s_r), b12, Op::N, &cols(&w2.r_r)),
                    &minus_product(&cols(&w2.s_r), b21, Op::N, &cols(&w1.r_r)),
                );
                let sc = Matrix::vstack(
                    &minus_product(&cols(&w1.s_c), b21, Op::T, &cols(&w2.r_c)),
                    &minus_product(&cols(&w2.s_c), b12, Op::T, &cols(&w1.r_c)),
                );
                (sr, sc)
            }
        }
    }

    /// Random vectors seen by this node (`R(I, :)` or the stacked children's
    /// reduced ones), restricted to columns `lo..d`.
    fn stacked_randoms(&self, id: usize, lo: usize) -> (Matrix, Matrix) {
        let d = self.d;
        match self.tree.children(id) {
            None => {
                let iv = self.tree.interval(id);
                (self.rr.block(iv.clone(), lo..d), self.rc.block(iv, lo..d))
            }
            Some((c1, c2)) => {
                let (w1, w2) = (&self.work[c1], &self.work[c2]);
                (
                    Matrix::vstack(&w1.r_r.col_block(lo..d), &w2.r_r.col_block(lo..d)),
                    Matrix::vstack(&w1.r_c.col_block(lo..d), &w2.r_c.col_block(lo..d)),
                )
            }
        }
    }

    fn process(&mut self, id: usize) -> Result<Outcome> {
        let d = self.d;
        let state = self.work[id].state;
        if state == NodeState::Compressed && self.work[id].cols == d {
            return Ok(Outcome::Done);
        }
        if self.tree.is_root(id) {
            // Only the coupling blocks (or the whole matrix for a lone leaf).
            if state != NodeState::Compressed {
                self.extract(id);
            }
            let w = &mut self.work[id];
            w.state = NodeState::Compressed;
            w.cols = d;
            return Ok(Outcome::Done);
        }
        if state == NodeState::Untouched {
            self.extract(id);
        }
        let lo = if state == NodeState::Untouched { 0 } else { self.work[id].cols };
        let (new_r, new_c) = self.local_samples(id, lo);

        if state == NodeState::Compressed {
            let (rr, rc) = self.stacked_randoms(id, lo);
            let w = &mut self.work[id];
            let u = w.u.as_ref().expect("compressed node has U");
            let v = w.v.as_ref().expect("compressed node has V");
            let sr_new = new_r.select_rows(&u.perm()[..u.rank()]);
            let sc_new = new_c.select_rows(&v.perm()[..v.rank()]);
            let rr_new = v.apply_transpose(&rr);
            let rc_new = u.apply_transpose(&rc);
            append(&mut w.s_r, sr_new);
            append(&mut w.s_c, sc_new);
            append(&mut w.r_r, rr_new);
            append(&mut w.r_c, rc_new);
            w.cols = d;
            return Ok(Outcome::Done);
        }

        {
            let w = &mut self.work[id];
            if state == NodeState::Untouched {
                w.s_loc_r = new_r;
                w.s_loc_c = new_c;
            } else {
                append(&mut w.s_loc_r, new_r);
                append(&mut w.s_loc_c, new_c);
            }
            w.cols = d;
        }

        let w = &self.work[id];
        let idr = id_compress_rows(&w.s_loc_r, self.eps, None)?;
        if !self.certified(idr.rank, w.s_loc_r.rows()) {
            self.attempts.push(Attempt { node: id, d, row_rank: idr.rank, col_rank: None, accepted: false });
            self.work[id].state = NodeState::PartiallyCompressed;
            return Ok(Outcome::Failed);
        }
        let idc = id_compress_rows(&w.s_loc_c, self.eps, None)?;
        let accepted = self.certified(idc.rank, w.s_loc_c.rows());
        self.attempts.push(Attempt { node: id, d, row_rank: idr.rank, col_rank: Some(idc.rank), accepted });
        if !accepted {
            self.work[id].state = NodeState::PartiallyCompressed;
            return Ok(Outcome::Failed);
        }

        let u = PermutedBasis::from_id(&idr);
        let v = PermutedBasis::from_id(&idc);
        let (rr, rc) = self.stacked_randoms(id, 0);
        let (row_skel, col_skel) = match self.tree.children(id) {
            None => {
                let base = self.tree.node(id).lo;
                (idr.j.iter().map(|&j| base + j).collect(), idc.j.iter().map(|&j| base + j).collect())
            }
            Some((c1, c2)) => {
                let rows: Vec<usize> = self.work[c1].row_skel.iter().chain(&self.work[c2].row_skel).copied().collect();
                let cols: Vec<usize> = self.work[c1].col_skel.iter().chain(&self.work[c2].col_skel).copied().collect();
                (idr.j.iter().map(|&j| rows[j]).collect(), idc.j.iter().map(|&j| cols[j]).collect())
            }
        };
        let w = &mut self.work[id];
        w.s_r = w.s_loc_r.select_rows(&idr.j);
        w.s_c = w.s_loc_c.select_rows(&idc.j);
        w.r_r = v.apply_transpose(&rr);
        w.r_c = u.apply_transpose(&rc);
        w.s_loc_r = Matrix::zeros(0, 0);
        w.s_loc_c = Matrix::zeros(0, 0);
        w.u = Some(u);
        w.v = Some(v);
        w.row_skel = row_skel;
        w.col_skel = col_skel;
        w.state = NodeState::Compressed;
        Ok(Outcome::Done)
    }

    /// A rank is trusted when enough samples exceed it, when the samples are
    /// exactly zero, or when it already equals the number of rows.
    fn certified(&self, rank: usize, rows: usize) -> bool {
        rank == 0 || rank == rows || self.d.saturating_sub(rank) >= self.gap
    }

    fn grow(&mut self, d_new: usize, seed: u64) {
        let n = self.tree.n();
        let d = self.d;
        let rr = generate_random(n, d_new - d, seed, d);
        let rc = generate_random(n, d_new - d, seed ^ COLUMN_SEED_SALT, d);
        let sr = self.source.multiply(&rr);
        let sc = self.source.multiply_transpose(&rc);
        self.rr.append_cols(&rr);
        self.rc.append_cols(&rc);
        self.sr.append_cols(&sr);
        self.sc.append_cols(&sc);
        self.d = d_new;
    }

    fn states(&self) -> Vec<NodeState> {
        self.work.iter().map(|w| w.state).collect()
    }

    fn report(&self, restarts: Vec<usize>, flops: u64, bytes: usize) -> CompressionReport {
        let node_ranks: Vec<NodeRank> = self
            .order
            .iter()
            .filter(|&&id| !self.tree.is_root(id) && self.work[id].state == NodeState::Compressed)
            .map(|&id| NodeRank {
                node: id,
                row_rank: self.work[id].u.as_ref().map_or(0, |u| u.rank()),
                col_rank: self.work[id].v.as_ref().map_or(0, |v| v.rank()),
            })
            .collect();
        let max_rank = node_ranks.iter().map(|r| r.row_rank.max(r.col_rank)).max().unwrap_or(0);
        CompressionReport {
            restarts,
            d_final: self.d,
            node_ranks,
            max_rank,
            flops,
            seconds: None,
            bytes,
            attempts: self.attempts.clone(),
        }
    }
}

/// Whether `states`, listed by node id, has the shape a serial restart must
/// leave behind: along `order`, a run of compressed nodes, then exactly one
/// partially compressed node, then untouched nodes only.
pub fn serial_states_consistent(order: &[usize], states: &[NodeState]) -> bool {
    let seq: Vec<NodeState> = order.iter().map(|&id| states[id]).collect();
    let first_partial = seq.iter().position(|&s| s == NodeState::PartiallyCompressed);
    match first_partial {
        None => false,
        Some(p) => {
            seq[..p].iter().all(|&s| s == NodeState::Compressed)
                && seq[p + 1..].iter().all(|&s| s == NodeState::Untouched)
        }
    }
}

/// Compresses `source` into HSS form along `tree` with relative tolerance
/// `eps`.
pub fn compress<S: MatrixSource + ?Sized>(
    source: &S,
    tree: &ClusterTree,
    eps: f64,
    cfg: &SamplingConfig,
) -> Result<(HssForm, CompressionReport)> {
    cfg.validate()?;
    if !(eps >= 0.0) {
        return Err(invalid(format!("eps must be nonnegative, got {eps}")));
    }
    if source.n() != tree.n() {
        return Err(dims(format!("source of order {} with a tree over {}", source.n(), tree.n())));
    }
    crate::tree::validate_tree(tree).map_err(|v| invalid(format!("invalid cluster tree: {v}")))?;
    check_consistency(source, 3, cfg.seed.wrapping_add(1))?;

    let start = flops::count();
    let n = tree.n();
    let d0 = cfg.d0;
    let rr = generate_random(n, d0, cfg.seed, 0);
    let rc = generate_random(n, d0, cfg.seed ^ COLUMN_SEED_SALT, 0);
    let sr = source.multiply(&rr);
    let sc = source.multiply_transpose(&rc);
    let mut c = Compressor {
        source,
        tree,
        eps,
        gap: cfg.gap,
        order: tree.postorder(),
        d: d0,
        rr,
        rc,
        sr,
        sc,
        work: vec![Work::default(); tree.len()],
        attempts: Vec::new(),
    };

    let mut restarts = Vec::new();
    while let Some(failed) = c.sweep()? {
        assert!(
            serial_states_consistent(&c.order, &c.states()),
            "serial restart invariant violated at node {failed}"
        );
        restarts.push(c.d);
        if c.d >= cfg.max_d {
            let used = flops::count().wrapping_sub(start);
            let report = c.report(restarts, used, 0);
            return Err(Error::RankBudgetExhausted { max_d: cfg.max_d, node: failed, report: Box::new(report) });
        }
        let d_new = (c.d + cfg.delta_d).min(cfg.max_d);
        c.grow(d_new, cfg.seed);
    }

    let used = flops::count().wrapping_sub(start);
    let nodes: Vec<HssNode> = c
        .work
        .iter()
        .map(|w| HssNode {
            d: w.d.clone(),
            u: w.u.clone(),
            v: w.v.clone(),
            b12: w.b12.clone(),
            b21: w.b21.clone(),
            row_skel: w.row_skel.clone(),
            col_skel: w.col_skel.clone(),
        })
        .collect();
    let form = HssForm::from_parts(tree.clone(), nodes, eps, c.d)?;
    let bytes = factor_bytes(&form);
    let report = c.report(restarts, used, bytes);
    Ok((form, report))
}
