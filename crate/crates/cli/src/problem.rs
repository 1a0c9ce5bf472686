use anyhow::{bail, Context, Result};
use hss::generators::{comb_demo_layout, load_matrix_file, synthetic_hss, toeplitz_qchem, toeplitz_simple};
use hss::mapping::Weights;
use hss::tree::{build_balanced_tree, build_comb_tree};
use hss::{ClusterTree, MatrixSource, SamplingConfig};
use serde_json::{json, Value};

use crate::{MatrixKind, ProblemArgs, SamplingArgs, TreeKind};

pub struct Problem {
    pub source: Box<dyn MatrixSource>,
    pub tree: ClusterTree,
    pub describe: Value,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.source.n()
    }
}

fn kind_name(k: MatrixKind) -> &'static str {
    match k {
        MatrixKind::ToeplitzSimple => "toeplitz-simple",
        MatrixKind::ToeplitzQchem => "toeplitz-qchem",
        MatrixKind::Synthetic => "synthetic",
        MatrixKind::File => "file",
    }
}

fn build_tree(a: &ProblemArgs, n: usize) -> Result<ClusterTree> {
    Ok(match a.tree {
        TreeKind::Binary => build_balanced_tree(n, a.leaf_size)?,
        TreeKind::Comb => {
            let sizes = match &a.leaf_sizes {
                Some(s) => s.clone(),
                None => comb_demo_layout(n).context("no --leaf-sizes given")?.0,
            };
            let total: usize = sizes.iter().sum();
            if total != n {
                bail!("--leaf-sizes sum to {total} but n = {n}");
            }
            build_comb_tree(n, &sizes)?
        }
    })
}

pub fn build(a: &ProblemArgs, seed: u64) -> Result<Problem> {
    if a.leaf_sizes.is_some() && a.tree != TreeKind::Comb {
        bail!("--leaf-sizes requires --tree comb");
    }
    let (source, tree): (Box<dyn MatrixSource>, ClusterTree) = match a.matrix {
        MatrixKind::ToeplitzSimple => (Box::new(toeplitz_simple(a.n)?), build_tree(a, a.n)?),
        MatrixKind::ToeplitzQchem => (Box::new(toeplitz_qchem(a.n, a.spacing)?), build_tree(a, a.n)?),
        MatrixKind::Synthetic => {
            let tree = build_tree(a, a.n)?;
            (Box::new(synthetic_hss(&tree, a.rank, seed)?), tree)
        }
        MatrixKind::File => {
            let path = a.path.as_ref().context("--matrix file needs --path")?;
            let src = load_matrix_file(path).with_context(|| format!("reading {}", path.display()))?;
            let n = src.n();
            (Box::new(src), build_tree(a, n)?)
        }
    };
    let n = source.n();
    let mut describe = json!({ "kind": kind_name(a.matrix), "n": n });
    match a.matrix {
        MatrixKind::Synthetic => describe["rank"] = json!(a.rank),
        MatrixKind::ToeplitzQchem => describe["spacing"] = json!(a.spacing),
        _ => {}
    }
    Ok(Problem { source, tree, describe })
}

pub fn tree_report(tree: &ClusterTree, kind: &str) -> Value {
    let leaves: Vec<usize> = tree.leaves().iter().map(|&id| tree.size(id)).collect();
    json!({
        "kind": kind,
        "nodes": tree.len(),
        "levels": tree.levels(),
        "leaf_sizes": leaves,
    })
}

pub fn tree_kind(a: &ProblemArgs) -> &'static str {
    match a.tree {
        TreeKind::Binary => "binary",
        TreeKind::Comb => "comb",
    }
}

pub fn sampling(a: &SamplingArgs) -> Result<SamplingConfig> {
    if !(a.eps.is_finite() && a.eps >= 0.0) {
        bail!("--eps must be a nonnegative number");
    }
    let cfg = SamplingConfig { d0: a.d0, delta_d: a.delta_d, gap: a.gap, max_d: a.max_d, seed: a.seed, ..Default::default() };
    cfg.validate()?;
    Ok(cfg)
}

pub enum WeightsArg {
    Uniform,
    Right(f64),
    Ranks,
}

impl WeightsArg {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "ranks" => Ok(Self::Ranks),
            _ => match s.strip_prefix("right:") {
                Some(f) => {
                    let f: f64 = f.parse().with_context(|| format!("bad fraction in --weights {s}"))?;
                    if !(f > 0.0 && f < 1.0) {
                        bail!("--weights right fraction must lie in (0, 1)");
                    }
                    Ok(Self::Right(f))
                }
                None => bail!("--weights must be uniform, right:<fraction> or ranks, got {s}"),
            },
        }
    }

    /// The mapping weights when no ranks are involved.
    pub fn static_weights(&self) -> Option<Weights> {
        match self {
            Self::Uniform => Some(Weights::Interval),
            Self::Right(f) => Some(Weights::RightFraction(*f)),
            Self::Ranks => None,
        }
    }
}
