//! Planning tools for a distributed run: proportional mapping of tree nodes
//! to process ranges, 2D grid shapes, and the asymptotic communication model.
//! Nothing here executes communication.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::tree::ClusterTree;

/// Most square `Pr x Pc` grid with `Pr = ⌊√P⌋`, `Pc = ⌊P/Pr⌋`; the leftover
/// processes are idle.
pub fn grid_shape(p: usize) -> (usize, usize, usize) {
    if p == 0 {
        return (0, 0, 0);
    }
    let mut pr = (p as f64).sqrt() as usize;
    // guard the float square root at exact squares
    while (pr + 1) * (pr + 1) <= p {
        pr += 1;
    }
    while pr * pr > p {
        pr -= 1;
    }
    let pc = p / pr;
    (pr, pc, p - pr * pc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodePlan {
    pub node: usize,
    /// Half-open process range.
    pub first: usize,
    pub last: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub idle: usize,
}

impl NodePlan {
    pub fn procs(&self) -> usize {
        self.last - self.first
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MappingPlan {
    pub p: usize,
    /// Indexed by node id.
    pub nodes: Vec<NodePlan>,
}

impl MappingPlan {
    pub fn node(&self, id: usize) -> &NodePlan {
        &self.nodes[id]
    }
}

/// How sibling subtrees are weighed against each other.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    /// Interval length of each subtree.
    Interval,
    /// Caller-supplied weight of the subtree rooted at each node, by id.
    PerNode(Vec<f64>),
    /// When the left sibling has children, the right sibling gets this
    /// fraction of the parent's processes; pairs of leaves fall back to
    /// interval weights.
    RightFraction(f64),
}

/// Rounds half away from zero, treating values within `1e-9` of a half as
/// ties so that rescaled weights give the same split.
fn round_half_away(x: f64) -> usize {
    let floor = x.floor();
    let up = x - floor >= 0.5 - 1e-9;
    (floor as usize) + usize::from(up)
}

fn split(p: usize, w1: f64, w2: f64) -> usize {
    let left = round_half_away(p as f64 * w1 / (w1 + w2));
    left.clamp(1, p - 1)
}

/// Assigns process ranges top-down, splitting each node's processes between
/// its children in proportion to their weights.
pub fn proportional_map(tree: &ClusterTree, p: usize, weights: &Weights) -> Result<MappingPlan> {
    if p == 0 {
        return Err(invalid("at least one process is required"));
    }
    match weights {
        Weights::PerNode(w) => {
            if w.len() != tree.len() {
                return Err(invalid(format!("{} weights for {} nodes", w.len(), tree.len())));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("weights must be finite and nonnegative"));
            }
        }
        Weights::RightFraction(f) => {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(invalid(format!("right fraction must lie in (0, 1), got {f}")));
            }
        }
        Weights::Interval => {}
    }
    let mut nodes: Vec<Option<NodePlan>> = vec![None; tree.len()];
    let mut stack = vec![(tree.root(), 0usize, p)];
    while let Some((id, first, count)) = stack.pop() {
        let (grid_rows, grid_cols, idle) = grid_shape(count);
        nodes[id] = Some(NodePlan { node: id, first, last: first + count, grid_rows, grid_cols, idle });
        let Some((c1, c2)) = tree.children(id) else { continue };
        if count == 1 {
            stack.push((c1, first, 1));
            stack.push((c2, first, 1));
            continue;
        }
        let interval = (tree.size(c1) as f64, tree.size(c2) as f64);
        let (w1, w2) = match weights {
            Weights::Interval => interval,
            Weights::PerNode(w) => {
                if w[c1] + w[c2] > 0.0 {
                    (w[c1], w[c2])
                } else {
                    interval
                }
            }
            Weights::RightFraction(f) => {
                if tree.is_leaf(c1) {
                    interval
                } else {
                    (1.0 - f, *f)
                }
            }
        };
        let left = split(count, w1, w2);
        stack.push((c1, first, left));
        stack.push((c2, first + left, count - left));
    }
    Ok(MappingPlan { p, nodes: nodes.into_iter().map(|n| n.expect("every node reached")).collect() })
}

/// Per-node subtree cost `Σ rank² · |I|` over the subtree, with `ranks`
/// indexed by node id.
pub fn rank_weights(tree: &ClusterTree, ranks: &[usize]) -> Vec<f64> {
    let mut w = vec![0.0; tree.len()];
    for id in tree.postorder() {
        let own = (ranks[id] as f64).powi(2) * tree.size(id) as f64;
        w[id] = own + tree.children(id).map_or(0.0, |(a, b)| w[a] + w[b]);
    }
    w
}

/// Re-plans with rank-informed subtree weights. If every rank is zero the
/// interval weights are kept.
pub fn remap_with_ranks(tree: &ClusterTree, plan: &MappingPlan, ranks: &[usize]) -> Result<MappingPlan> {
    if ranks.len() != tree.len() {
        return Err(invalid(format!("{} ranks for {} nodes", ranks.len(), tree.len())));
    }
    proportional_map(tree, plan.p, &Weights::PerNode(rank_weights(tree, ranks)))
}

/// Tasks executed by process `proc`: the postorder of the largest subtree it
/// owns alone, followed by the path from there to the root. A process that
/// never owns a subtree alone follows the path from the deepest node it
/// shares.
pub fn process_traversal(tree: &ClusterTree, plan: &MappingPlan, proc: usize) -> Vec<usize> {
    let mut id = tree.root();
    loop {
        let np = plan.node(id);
        if np.procs() == 1 {
            break;
        }
        match tree.children(id) {
            Some((c1, c2)) => {
                id = if (plan.node(c1).first..plan.node(c1).last).contains(&proc) { c1 } else { c2 };
            }
            None => break,
        }
    }
    let mut out = if plan.node(id).procs() == 1 { tree.subtree_postorder(id) } else { vec![id] };
    let mut cur = id;
    while let Some(parent) = tree.parent(cur) {
        out.push(parent);
        cur = parent;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommCost {
    pub messages: f64,
    pub words: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommKind {
    DenseLu,
    HssNonrandomized,
    HssRandomized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommTerm {
    pub name: &'static str,
    pub messages: f64,
    pub words: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommBreakdown {
    pub kind: CommKind,
    pub total: CommCost,
    pub terms: Vec<CommTerm>,
}

/// Leading-order communication cost along the critical path, with every
/// hidden constant set to one and logarithms in base two.
pub fn comm_model(kind: CommKind, n: f64, p: f64, r: f64) -> CommBreakdown {
    let lg = p.log2();
    let sq = p.sqrt();
    let terms = match kind {
        CommKind::DenseLu => vec![CommTerm { name: "lu", messages: n * lg, words: n * n * lg / sq }],
        CommKind::HssNonrandomized => vec![
            CommTerm { name: "dist", messages: p, words: n * n / p },
            CommTerm { name: "row", messages: r * lg * lg, words: r * n },
            CommTerm { name: "column", messages: 0.0, words: r * r * lg },
        ],
        CommKind::HssRandomized => vec![
            CommTerm { name: "dist", messages: p * lg, words: n * n / p },
            CommTerm { name: "gemm", messages: r * lg, words: r * n / sq },
            CommTerm { name: "tree", messages: r * lg * lg, words: r * r },
        ],
    };
    let total = CommCost {
        messages: terms.iter().map(|t| t.messages).sum(),
        words: terms.iter().map(|t| t.words).sum(),
    };
    CommBreakdown { kind, total, terms }
}

/// Exact message and word counts of the initial redistribution along a
/// complete tree: at level `i`, every process receives one block of order
/// `n/2^i` shared by `p/2^i` processes and sends to the `2^i − 1` others.
pub fn distribution_cost_exact(n: usize, p: usize) -> Result<CommCost> {
    if p == 0 || !p.is_power_of_two() {
        return Err(invalid(format!("p = {p} is not a power of two")));
    }
    let levels = p.trailing_zeros();
    let (nf, pf) = (n as f64, p as f64);
    let mut cost = CommCost { messages: 0.0, words: 0.0 };
    for i in 1..=levels {
        let two_i = f64::from(1u32 << i);
        let block = (nf / two_i).powi(2);
        cost.messages += pf + (two_i - 1.0) * pf / two_i;
        cost.words += block / (pf / two_i) + (two_i - 1.0) * block / pf;
    }
    Ok(cost)
}
