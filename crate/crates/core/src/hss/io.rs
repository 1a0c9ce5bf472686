//! Binary container for [`HssForm`].
//!
//! Layout, all integers `u64` and all reals `f64`, little-endian:
//!
//! ```text
//! "HSSF0001" n node_count eps d_used
//! node_count x { lo hi child_count child_ids... }          tree, by node id
//! node_count x { id flags [D] [U] [V] [B12] [B21] row_skel col_skel }   postorder
//! ```
//!
//! `flags` is a single byte with bits D=1, U=2, V=4, B12=8, B21=16. A matrix
//! is `rows cols data`; a basis is `rows rank perm E-data`; an index list is
//! `len items`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{HssForm, HssNode, PermutedBasis};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::tree::{ClusterNode, ClusterTree};

const MAGIC: &[u8; 8] = b"HSSF0001";

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u64(&mut self, v: usize) -> Result<()> {
        Ok(self.0.write_all(&(v as u64).to_le_bytes())?)
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }

    fn matrix(&mut self, m: &Matrix) -> Result<()> {
        self.u64(m.rows())?;
        self.u64(m.cols())?;
        for &v in m.data() {
            self.f64(v)?;
        }
        Ok(())
    }

    fn basis(&mut self, b: &PermutedBasis) -> Result<()> {
        self.u64(b.rows())?;
        self.u64(b.rank())?;
        self.indices(b.perm())?;
        for &v in b.e().data() {
            self.f64(v)?;
        }
        Ok(())
    }

    fn indices(&mut self, idx: &[usize]) -> Result<()> {
        self.u64(idx.len())?;
        for &i in idx {
            self.u64(i)?;
        }
        Ok(())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => format_err("truncated HSS container"),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.bytes()?);
        usize::try_from(v).map_err(|_| format_err("integer out of range"))
    }

    /// A length that must not exceed `limit`, to refuse absurd allocations.
    fn len(&mut self, limit: usize) -> Result<usize> {
        let v = self.u64()?;
        if v > limit {
            return Err(format_err(format!("length {v} exceeds {limit}")));
        }
        Ok(v)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn matrix(&mut self, limit: usize) -> Result<Matrix> {
        let rows = self.len(limit)?;
        let cols = self.len(limit)?;
        let data = (0..rows * cols).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, data)
    }

    fn basis(&mut self, limit: usize) -> Result<PermutedBasis> {
        let rows = self.len(limit)?;
        let rank = self.len(rows)?;
        let perm = self.indices(limit)?;
        let data = (0..(rows - rank) * rank).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        PermutedBasis::new(perm, Matrix::from_vec(rows - rank, rank, data)?)
    }

    fn indices(&mut self, limit: usize) -> Result<Vec<usize>> {
        let len = self.len(limit)?;
        (0..len).map(|_| self.u64()).collect()
    }
}

pub fn write_hss<W: Write>(h: &HssForm, w: W) -> Result<()> {
    let mut out = Out(w);
    out.0.write_all(MAGIC)?;
    let tree = h.tree();
    out.u64(tree.n())?;
    out.u64(tree.len())?;
    out.f64(h.eps())?;
    out.u64(h.d_used())?;
    for node in tree.nodes() {
        out.u64(node.lo)?;
        out.u64(node.hi)?;
        out.indices(&node.children)?;
    }
    for id in tree.postorder() {
        let node = h.node(id);
        out.u64(id)?;
        let flags = [node.d.is_some(), node.u.is_some(), node.v.is_some(), node.b12.is_some(), node.b21.is_some()]
            .iter()
            .enumerate()
            .fold(0u8, |f, (bit, &set)| if set { f | (1 << bit) } else { f });
        out.0.write_all(&[flags])?;
        if let Some(d) = &node.d {
            out.matrix(d)?;
        }
        if let Some(u) = &node.u {
            out.basis(u)?;
        }
        if let Some(v) = &node.v {
            out.basis(v)?;
        }
        if let Some(b) = &node.b12 {
            out.matrix(b)?;
        }
        if let Some(b) = &node.b21 {
            out.matrix(b)?;
        }
        out.indices(&node.row_skel)?;
        out.indices(&node.col_skel)?;
    }
    out.0.flush()?;
    Ok(())
}

pub fn read_hss<R: Read>(r: R) -> Result<HssForm> {
    let mut inp = In(r);
    let magic: [u8; 8] = inp.bytes()?;
    if &magic != MAGIC {
        return Err(format_err("bad magic, not an HSS container"));
    }
    let n = inp.u64()?;
    let count = inp.len(2 * n.max(1))?;
    let eps = inp.f64()?;
    let d_used = inp.u64()?;
    let mut raw = Vec::with_capacity(count);
    for _ in 0..count {
        let lo = inp.u64()?;
        let hi = inp.u64()?;
        let children = inp.indices(2)?;
        raw.push(ClusterNode { lo, hi, children, parent: None });
    }
    let tree = ClusterTree::from_nodes(n, raw).map_err(|e| format_err(e.to_string()))?;
    let mut nodes = vec![HssNode::default(); count];
    let mut seen = vec![false; count];
    for _ in 0..count {
        let id = inp.u64()?;
        if id >= count || std::mem::replace(&mut seen[id], true) {
            return Err(format_err(format!("bad or repeated node record {id}")));
        }
        let [flags] = inp.bytes::<1>()?;
        let node = &mut nodes[id];
        if flags & 1 != 0 {
            node.d = Some(inp.matrix(n)?);
        }
        if flags & 2 != 0 {
            node.u = Some(inp.basis(n)?);
        }
        if flags & 4 != 0 {
            node.v = Some(inp.basis(n)?);
        }
        if flags & 8 != 0 {
            node.b12 = Some(inp.matrix(n)?);
        }
        if flags & 16 != 0 {
            node.b21 = Some(inp.matrix(n)?);
        }
        node.row_skel = inp.indices(n)?;
        node.col_skel = inp.indices(n)?;
    }
    HssForm::from_parts(tree, nodes, eps, d_used)
}

pub fn save_hss(path: impl AsRef<Path>, h: &HssForm) -> Result<()> {
    write_hss(h, BufWriter::new(File::create(path)?))
}

pub fn load_hss(path: impl AsRef<Path>) -> Result<HssForm> {
    read_hss(BufReader::new(File::open(path)?))
}
