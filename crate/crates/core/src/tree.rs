//! Cluster trees: hierarchical partitions of `[0, n)` into contiguous
//! intervals. Every HSS algorithm in the crate is a traversal of one of these.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One node of a [`ClusterTree`]. `children` is either empty or holds exactly
/// two ids for a valid tree; the raw representation allows other lengths so
/// that malformed inputs can be described and rejected by [`validate_tree`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub lo: usize,
    pub hi: usize,
    #[serde(default)]
    pub children: Vec<usize>,
    #[serde(skip)]
    pub parent: Option<usize>,
}

impl ClusterNode {
    pub fn leaf(lo: usize, hi: usize) -> Self {
        Self { lo, hi, children: Vec::new(), parent: None }
    }

    pub fn interval(&self) -> Range<usize> {
        self.lo..self.hi
    }

    pub fn len(&self) -> usize {
        self.hi.saturating_sub(self.lo)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTree {
    n: usize,
    root: usize,
    nodes: Vec<ClusterNode>,
}

/// First broken invariant found by [`validate_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeViolation {
    Empty,
    RootInterval { lo: usize, hi: usize, n: usize },
    NonBinary { node: usize, children: usize },
    ChildOutOfRange { node: usize, child: usize },
    ChildrenOverlap { node: usize },
    ChildrenNotContiguous { node: usize },
    ChildrenOutOfOrder { node: usize },
    UnionMismatch { node: usize },
    EmptyLeaf { node: usize },
    Unreachable { node: usize },
    SharedChild { node: usize },
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "tree has no nodes"),
            Self::RootInterval { lo, hi, n } => {
                write!(f, "root interval [{lo}, {hi}) is not [0, {n})")
            }
            Self::NonBinary { node, children } => {
                write!(f, "non-binary node {node} ({children} children)")
            }
            Self::ChildOutOfRange { node, child } => {
                write!(f, "node {node} references missing child {child}")
            }
            Self::ChildrenOverlap { node } => write!(f, "children overlap at node {node}"),
            Self::ChildrenNotContiguous { node } => {
                write!(f, "children of node {node} leave a gap")
            }
            Self::ChildrenOutOfOrder { node } => {
                write!(f, "children of node {node} are out of order")
            }
            Self::UnionMismatch { node } => {
                write!(f, "children of node {node} do not cover its interval")
            }
            Self::EmptyLeaf { node } => write!(f, "leaf {node} has an empty interval"),
            Self::Unreachable { node } => write!(f, "node {node} is unreachable from the root"),
            Self::SharedChild { node } => write!(f, "node {node} has more than one parent"),
        }
    }
}

impl std::error::Error for TreeViolation {}

impl ClusterTree {
    /// Builds a tree from raw node records without checking any invariant.
    /// The root is the first node that no other node lists as a child.
    pub fn new_unchecked(n: usize, mut nodes: Vec<ClusterNode>) -> Self {
        for node in nodes.iter_mut() {
            node.parent = None;
        }
        let count = nodes.len();
        for id in 0..count {
            let children = nodes[id].children.clone();
            for c in children {
                if c < count && nodes[c].parent.is_none() {
                    nodes[c].parent = Some(id);
                }
            }
        }
        let mut is_child = vec![false; count];
        for node in &nodes {
            for &c in &node.children {
                if c < count {
                    is_child[c] = true;
                }
            }
        }
        let root = is_child.iter().position(|&c| !c).unwrap_or(0);
        Self { n, root, nodes }
    }

    /// Builds and validates a tree from raw node records.
    pub fn from_nodes(n: usize, nodes: Vec<ClusterNode>) -> Result<Self> {
        let tree = Self::new_unchecked(n, nodes);
        validate_tree(&tree).map_err(|v| invalid(format!("invalid cluster tree: {v}")))?;
        Ok(tree)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &ClusterNode {
        &self.nodes[id]
    }

    pub fn interval(&self, id: usize) -> Range<usize> {
        self.nodes[id].interval()
    }

    pub fn size(&self, id: usize) -> usize {
        self.nodes[id].len()
    }

    pub fn children(&self, id: usize) -> Option<(usize, usize)> {
        match self.nodes[id].children.as_slice() {
            [a, b] => Some((*a, *b)),
            _ => None,
        }
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].children.is_empty()
    }

    pub fn is_root(&self, id: usize) -> bool {
        id == self.root
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.postorder().into_iter().filter(|&id| self.is_leaf(id)).collect()
    }

    /// Children before parents, left subtree before right subtree.
    pub fn postorder(&self) -> Vec<usize> {
        postorder(self)
    }

    /// Postorder of the subtree rooted at `id`.
    pub fn subtree_postorder(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        // (node, children already pushed)
        let mut stack = vec![(id, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded || self.is_leaf(node) {
                out.push(node);
            } else {
                stack.push((node, true));
                for &c in self.nodes[node].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// Number of edges from `id` up to the root.
    pub fn depth(&self, id: usize) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            d += 1;
            cur = p;
        }
        d
    }

    /// Number of levels (a single leaf has one level).
    pub fn levels(&self) -> usize {
        (0..self.len()).map(|id| self.depth(id)).max().map_or(0, |d| d + 1)
    }

    /// Top-down heap labels (root 0, children of `i` are `2i+1` and `2i+2`),
    /// indexed by node id. Defined for every binary tree, but only dense
    /// (`0..len`) for complete trees.
    pub fn heap_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.len()];
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, label)) = stack.pop() {
            labels[id] = label;
            if let Some((a, b)) = self.children(id) {
                stack.push((a, 2 * label + 1));
                stack.push((b, 2 * label + 2));
            }
        }
        labels
    }

    /// Mirrors the tree: every pair of children is swapped and intervals are
    /// reflected so that ordering invariants still hold.
    pub fn mirrored(&self) -> Self {
        let n = self.n;
        let nodes = self
            .nodes
            .iter()
            .map(|node| ClusterNode {
                lo: n - node.hi,
                hi: n - node.lo,
                children: node.children.iter().rev().copied().collect(),
                parent: None,
            })
            .collect();
        Self::new_unchecked(n, nodes)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(TreeDocument { n: self.n, nodes: self.nodes.clone() })
            .expect("tree serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: TreeDocument = serde_json::from_value(value.clone())
            .map_err(|e| Error::Format(format!("tree document: {e}")))?;
        Self::from_nodes(doc.n, doc.nodes)
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    n: usize,
    nodes: Vec<ClusterNode>,
}

/// Splits every interval longer than `leaf_size` at `(lo + hi) / 2`.
/// Node ids are assigned in preorder.
pub fn build_balanced_tree(n: usize, leaf_size: usize) -> Result<ClusterTree> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if leaf_size == 0 {
        return Err(invalid("leaf_size must be at least 1"));
    }
    fn split(nodes: &mut Vec<ClusterNode>, lo: usize, hi: usize, leaf_size: usize) -> usize {
        let id = nodes.len();
        nodes.push(ClusterNode::leaf(lo, hi));
        if hi - lo > leaf_size {
            let mid = (lo + hi) / 2;
            let a = split(nodes, lo, mid, leaf_size);
            let b = split(nodes, mid, hi, leaf_size);
            nodes[id].children = vec![a, b];
        }
        id
    }
    let mut nodes = Vec::new();
    split(&mut nodes, 0, n, leaf_size);
    Ok(ClusterTree::new_unchecked(n, nodes))
}

/// Comb-shaped tree: `leaf_sizes[0]` and `leaf_sizes[1]` form the deepest
/// sibling pair, and at every level above the existing subtree becomes the
/// left child of a new node whose right child is the next leaf. Only left
/// children recurse.
pub fn build_comb_tree(n: usize, leaf_sizes: &[usize]) -> Result<ClusterTree> {
    if leaf_sizes.is_empty() {
        return Err(invalid("leaf_sizes must not be empty"));
    }
    if leaf_sizes.contains(&0) {
        return Err(invalid("leaf sizes must be positive"));
    }
    let total: usize = leaf_sizes.iter().sum();
    if total != n {
        return Err(invalid(format!("leaf sizes sum to {total}, expected n = {n}")));
    }
    let mut nodes = vec![ClusterNode::leaf(0, leaf_sizes[0])];
    let mut top = 0;
    let mut hi = leaf_sizes[0];
    for &size in &leaf_sizes[1..] {
        let leaf = nodes.len();
        nodes.push(ClusterNode::leaf(hi, hi + size));
        hi += size;
        let parent = nodes.len();
        nodes.push(ClusterNode { lo: 0, hi, children: vec![top, leaf], parent: None });
        top = parent;
    }
    Ok(ClusterTree::new_unchecked(n, nodes))
}

/// Comb tree whose recursing sibling is on the right: the first leaf in
/// `leaf_sizes` sits at the far right of `[0, n)`.
pub fn build_comb_tree_mirrored(n: usize, leaf_sizes: &[usize]) -> Result<ClusterTree> {
    Ok(build_comb_tree(n, leaf_sizes)?.mirrored())
}

pub fn postorder(tree: &ClusterTree) -> Vec<usize> {
    if tree.is_empty() {
        return Vec::new();
    }
    tree.subtree_postorder(tree.root())
}

/// Checks every structural invariant and reports the first violation.
pub fn validate_tree(tree: &ClusterTree) -> std::result::Result<(), TreeViolation> {
    let nodes = tree.nodes();
    if nodes.is_empty() {
        return Err(TreeViolation::Empty);
    }
    let root = &nodes[tree.root()];
    if root.lo != 0 || root.hi != tree.n() {
        return Err(TreeViolation::RootInterval { lo: root.lo, hi: root.hi, n: tree.n() });
    }
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![tree.root()];
    seen[tree.root()] = true;
    while let Some(id) = stack.pop() {
        let node = &nodes[id];
        match node.children.as_slice() {
            [] => {
                if node.is_empty() {
                    return Err(TreeViolation::EmptyLeaf { node: id });
                }
            }
            &[a, b] => {
                for c in [a, b] {
                    if c >= nodes.len() {
                        return Err(TreeViolation::ChildOutOfRange { node: id, child: c });
                    }
                }
                let (l, r) = (&nodes[a], &nodes[b]);
                if l.lo >= r.hi || r.lo >= l.hi {
                    // disjoint; fall through to the ordering checks
                } else {
                    return Err(TreeViolation::ChildrenOverlap { node: id });
                }
                if l.lo > r.lo {
                    return Err(TreeViolation::ChildrenOutOfOrder { node: id });
                }
                if l.hi != r.lo {
                    return Err(TreeViolation::ChildrenNotContiguous { node: id });
                }
                if l.lo != node.lo || r.hi != node.hi {
                    return Err(TreeViolation::UnionMismatch { node: id });
                }
                for c in [a, b] {
                    if seen[c] {
                        return Err(TreeViolation::SharedChild { node: c });
                    }
                    seen[c] = true;
                    stack.push(c);
                }
            }
            other => {
                return Err(TreeViolation::NonBinary { node: id, children: other.len() });
            }
        }
    }
    if let Some(id) = seen.iter().position(|&s| !s) {
        return Err(TreeViolation::Unreachable { node: id });
    }
    Ok(())
}
