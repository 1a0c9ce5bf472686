//! ULV-like factorization of an HSS form, the matching solve, and iterative
//! refinement against the original operator.
//!
//! At every non-root node `τ` with row basis `U = Π[I; E]` of rank `r`, the
//! transform `Ω = [−E I; I 0] Πᵀ` zeroes the top `m − r` rows of `U`. Those
//! rows of `Ω D` are compressed by an LQ factorization and eliminated; the
//! `r x r` remainder `D̃` is passed to the parent. The root solves its reduced
//! system with pivoted LU.

use serde::Serialize;

use crate::dense::{lq_factor, mul, mul_op, plu_factor, solve_lower, solve_plu, Matrix, Op, PluFactors};
use crate::error::{dims, Result};
use crate::hss::{HssForm, PermutedBasis};
use crate::source::MatrixSource;
use crate::tree::ClusterTree;

/// Factors kept at a non-root node.
#[derive(Debug, Clone)]
pub struct UlvNode {
    /// Row basis of the HSS form; defines `Ω`.
    pub u: PermutedBasis,
    /// Column basis, needed for the `z` recurrence at non-leaves.
    pub v: PermutedBasis,
    /// `Ω D`, `m x m`; the top `m − r` rows are `W_t`, the rest `W_b`.
    pub w: Matrix,
    /// `W_t = [L 0] Q`, `L` square of order `m − r`.
    pub l: Matrix,
    pub q: Matrix,
    /// `Q V̂`, `m x rank(V)`.
    pub v_tilde: Matrix,
    /// `W_b Q_bᵀ`, `r x r`.
    pub d_tilde: Matrix,
    /// `W_b Q_tᵀ`, cached for the solve.
    pub wq_t: Matrix,
}

impl UlvNode {
    /// Eliminated rows, `m − r`.
    pub fn top(&self) -> usize {
        self.u.rows() - self.u.rank()
    }

    pub fn rank(&self) -> usize {
        self.u.rank()
    }

    fn v_tilde_top(&self) -> Matrix {
        self.v_tilde.row_block(0..self.top())
    }

    fn v_tilde_bottom(&self) -> Matrix {
        self.v_tilde.row_block(self.top()..self.v_tilde.rows())
    }

    fn bytes(&self) -> usize {
        let m = |a: &Matrix| 8 * a.rows() * a.cols();
        m(&self.w) + m(&self.l) + m(&self.q) + m(&self.v_tilde) + m(&self.d_tilde) + m(&self.wq_t)
    }
}

#[derive(Debug, Clone)]
pub struct UlvFactors {
    tree: ClusterTree,
    nodes: Vec<Option<UlvNode>>,
    b12: Vec<Option<Matrix>>,
    b21: Vec<Option<Matrix>>,
    root: PluFactors,
}

impl UlvFactors {
    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    pub fn node(&self, id: usize) -> Option<&UlvNode> {
        self.nodes[id].as_ref()
    }

    pub fn root(&self) -> &PluFactors {
        &self.root
    }

    /// Order of the reduced root system.
    pub fn root_size(&self) -> usize {
        self.root.n()
    }

    pub fn bytes(&self) -> usize {
        self.nodes.iter().flatten().map(UlvNode::bytes).sum::<usize>() + self.root.bytes()
    }
}

pub fn ulv_factor(h: &HssForm) -> Result<UlvFactors> {
    h.validate()?;
    let tree = h.tree().clone();
    let mut nodes: Vec<Option<UlvNode>> = vec![None; tree.len()];
    let mut b12 = vec![None; tree.len()];
    let mut b21 = vec![None; tree.len()];
    let mut root = None;
    for id in tree.postorder() {
        let (d, v_hat) = match tree.children(id) {
            None => (h.d(id).clone(), (!tree.is_root(id)).then(|| h.v(id).expand())),
            Some((c1, c2)) => {
                let n1 = nodes[c1].as_ref().expect("child factored");
                let n2 = nodes[c2].as_ref().expect("child factored");
                let (v1b, v2b) = (n1.v_tilde_bottom(), n2.v_tilde_bottom());
                let mut d = Matrix::zeros(n1.rank() + n2.rank(), n1.rank() + n2.rank());
                d.set_block(0, 0, &n1.d_tilde);
                d.set_block(0, n1.rank(), &mul_op(h.b12(id), Op::N, &v2b, Op::T));
                d.set_block(n1.rank(), 0, &mul_op(h.b21(id), Op::N, &v1b, Op::T));
                d.set_block(n1.rank(), n1.rank(), &n2.d_tilde);
                b12[id] = Some(h.b12(id).clone());
                b21[id] = Some(h.b21(id).clone());
                let v_hat = (!tree.is_root(id)).then(|| mul(&Matrix::block_diag(&v1b, &v2b), &h.v(id).expand()));
                (d, v_hat)
            }
        };
        match v_hat {
            None => root = Some(plu_factor(&d)?),
            Some(v_hat) => {
                let u = h.u(id).clone();
                let m = u.rows();
                let top = m - u.rank();
                let w = u.apply_omega(&d);
                let lq = lq_factor(&w.row_block(0..top));
                let q = lq.q;
                let l = lq.l;
                let (q_t, q_b) = (q.row_block(0..top), q.row_block(top..m));
                let w_b = w.row_block(top..m);
                let v_tilde = mul(&q, &v_hat);
                let d_tilde = mul_op(&w_b, Op::N, &q_b, Op::T);
                let wq_t = mul_op(&w_b, Op::N, &q_t, Op::T);
                nodes[id] = Some(UlvNode { u, v: h.v(id).clone(), w, l, q, v_tilde, d_tilde, wq_t });
            }
        }
    }
    Ok(UlvFactors { tree, nodes, b12, b21, root: root.expect("root visited") })
}

pub fn ulv_solve(f: &UlvFactors, b: &Matrix) -> Result<Matrix> {
    let tree = &f.tree;
    let n = tree.n();
    if b.rows() != n {
        return Err(dims(format!("system of order {n} with {} right-hand-side rows", b.rows())));
    }
    let k = b.cols();
    let order = tree.postorder();
    let mut bt: Vec<Option<Matrix>> = vec![None; tree.len()];
    let mut y: Vec<Option<Matrix>> = vec![None; tree.len()];
    let mut z: Vec<Option<Matrix>> = vec![None; tree.len()];
    let mut x: Vec<Option<Matrix>> = vec![None; tree.len()];

    for &id in &order {
        let rhs = match tree.children(id) {
            None => b.row_block(tree.interval(id)),
            Some((c1, c2)) => {
                let (n1, n2) = (f.node(c1).expect("non-root child"), f.node(c2).expect("non-root child"));
                let b12 = f.b12[id].as_ref().expect("non-leaf B");
                let b21 = f.b21[id].as_ref().expect("non-leaf B");
                let (y1, y2) = (y[c1].as_ref().expect("visited"), y[c2].as_ref().expect("visited"));
                let (z1, z2) = (z[c1].as_ref().expect("visited"), z[c2].as_ref().expect("visited"));
                let bt1 = bt[c1].take().expect("visited");
                let bt2 = bt[c2].take().expect("visited");
                let mut top = bt1.row_block(n1.top()..bt1.rows());
                top.axpy(-1.0, &mul(&n1.wq_t, y1));
                top.axpy(-1.0, &mul(b12, z2));
                let mut bottom = bt2.row_block(n2.top()..bt2.rows());
                bottom.axpy(-1.0, &mul(b21, z1));
                bottom.axpy(-1.0, &mul(&n2.wq_t, y2));
                Matrix::vstack(&top, &bottom)
            }
        };
        match f.node(id) {
            None => x[id] = Some(solve_plu(&f.root, &rhs)?),
            Some(node) => {
                let btil = node.u.apply_omega(&rhs);
                let yt = solve_lower(&node.l, &btil.row_block(0..node.top()))?;
                let mut zt = mul_op(&node.v_tilde_top(), Op::T, &yt, Op::N);
                if let Some((c1, c2)) = tree.children(id) {
                    let stacked = Matrix::vstack(z[c1].as_ref().expect("visited"), z[c2].as_ref().expect("visited"));
                    zt.axpy(1.0, &node.v.apply_transpose(&stacked));
                }
                bt[id] = Some(btil);
                y[id] = Some(yt);
                z[id] = Some(zt);
            }
        }
    }

    let mut out = Matrix::zeros(n, k);
    for &id in order.iter().rev() {
        let xt = x[id].take().expect("parent visited");
        match tree.children(id) {
            None => out.set_block(tree.node(id).lo, 0, &xt),
            Some((c1, c2)) => {
                let n1 = f.node(c1).expect("non-root child");
                let r1 = n1.rank();
                assert_eq!(xt.rows(), r1 + f.node(c2).expect("non-root child").rank(), "split sizes");
                for (c, part) in [(c1, xt.row_block(0..r1)), (c2, xt.row_block(r1..xt.rows()))] {
                    let node = f.node(c).expect("non-root child");
                    let stacked = Matrix::vstack(y[c].as_ref().expect("visited"), &part);
                    x[c] = Some(mul_op(&node.q, Op::T, &stacked, Op::N));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    #[serde(skip)]
    pub x: Matrix,
    /// `‖b − A x‖ / ‖b‖` after the direct solve and after each correction.
    pub history: Vec<f64>,
    /// Corrections applied.
    pub iterations: usize,
    pub converged: bool,
    /// Stopped because the residual failed to decrease three times in a row.
    pub stagnated: bool,
}

impl Refinement {
    /// Relative residual of `x`, the smallest in `history`.
    pub fn residual(&self) -> f64 {
        self.history.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Refines `ulv_solve(f, b)` with residuals computed by `source`, stopping
/// once `‖r‖/‖b‖ <= tol`, after `max_iters` corrections, or after three
/// consecutive corrections that do not reduce the residual. The returned
/// solution is the best iterate seen.
pub fn iterative_refinement<S: MatrixSource + ?Sized>(
    source: &S,
    f: &UlvFactors,
    b: &Matrix,
    tol: f64,
    max_iters: usize,
) -> Result<Refinement> {
    let bnorm = b.norm_fro();
    let rel = |r: &Matrix| if bnorm == 0.0 { r.norm_fro() } else { r.norm_fro() / bnorm };
    let mut x = ulv_solve(f, b)?;
    let mut r = b.sub(&source.multiply(&x));
    let mut res = rel(&r);
    let mut history = vec![res];
    let mut best = (res, x.clone());
    let mut flat = 0;
    let mut iterations = 0;
    let mut stagnated = false;
    while res > tol && iterations < max_iters {
        let dx = ulv_solve(f, &r)?;
        x.axpy(1.0, &dx);
        r = b.sub(&source.multiply(&x));
        let next = rel(&r);
        iterations += 1;
        history.push(next);
        if next >= res {
            flat += 1;
        } else {
            flat = 0;
        }
        res = next;
        if res < best.0 {
            best = (res, x.clone());
        }
        if flat >= 3 {
            stagnated = true;
            break;
        }
    }
    let converged = best.0 <= tol;
    Ok(Refinement { x: best.1, history, iterations, converged, stagnated })
}
