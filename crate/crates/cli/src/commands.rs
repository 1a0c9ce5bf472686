use std::time::Instant;

use anyhow::{bail, Context, Result};
use hss::compress::generate_random;
use hss::dense::{flops, plu_factor, solve_plu};
use hss::generators::{comb_demo_layout, comb_matrix};
use hss::hss::{factor_bytes, memory_overhead, memory_overhead_vs_dense, reconstruct_dense, save_hss};
use hss::mapping::{
    comm_model as model, distribution_cost_exact, process_traversal, proportional_map, remap_with_ranks, CommKind,
    MappingPlan, Weights,
};
use hss::matvec::{hss_matvec, power_method, SourceOperator};
use hss::tree::build_balanced_tree;
use hss::ulv::iterative_refinement;
use hss::{compress as hss_compress, ulv_factor, ulv_solve, ClusterTree, CompressionReport, HssForm, SamplingConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::problem::{self, tree_kind, tree_report, Problem, WeightsArg};
use crate::{
    CombArgs, CommArgs, CommKindArg, CompressArgs, MapArgs, MatvecArgs, OutputArgs, PowerArgs, SamplingArgs, SolveArgs,
};

/// Salt separating right-hand sides from the compression's random vectors.
const RHS_SALT: u64 = 0x5eed_0f0f_1234_abcd;

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
    pass: bool,
}

fn at_most(name: &'static str, value: f64, limit: f64) -> Check {
    Check { name, value, limit, pass: value <= limit }
}

fn at_least(name: &'static str, value: f64, limit: f64) -> Check {
    Check { name, value, limit, pass: value >= limit }
}

fn timed<T>(on: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    (out, on.then(|| start.elapsed().as_secs_f64()))
}

fn emit(command: &str, mut body: Value, checks: Vec<Check>, out: &OutputArgs) -> Result<bool> {
    let pass = checks.iter().all(|c| c.pass);
    body["schema"] = json!(1);
    body["command"] = json!(command);
    body["checks"] = serde_json::to_value(&checks)?;
    body["pass"] = json!(pass);
    let text = serde_json::to_string_pretty(&body)? + "\n";
    print!("{text}");
    if let Some(path) = &out.json {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(pass)
}

fn sampling_report(eps: f64, cfg: &SamplingConfig) -> Value {
    json!({
        "eps": eps,
        "d0": cfg.d0,
        "delta_d": cfg.delta_d,
        "gap": cfg.gap,
        "max_d": cfg.max_d,
        "seed": cfg.seed,
    })
}

fn compression_report(rep: &CompressionReport) -> Value {
    json!({
        "max_rank": rep.max_rank,
        "restarts": rep.restarts,
        "restart_count": rep.restart_count(),
        "d_final": rep.d_final,
        "flops": rep.flops,
        "bytes": rep.bytes,
        "factors_mb": rep.bytes as f64 / 1e6,
        "seconds": rep.seconds,
        "node_ranks": rep.node_ranks,
    })
}

struct Compressed {
    problem: Problem,
    h: HssForm,
    rep: CompressionReport,
    cfg: SamplingConfig,
    eps: f64,
}

fn compress_problem(p: &crate::ProblemArgs, s: &SamplingArgs, timings: bool) -> Result<Compressed> {
    let cfg = problem::sampling(s)?;
    let problem = problem::build(p, s.seed)?;
    let (res, secs) = timed(timings, || hss_compress(problem.source.as_ref(), &problem.tree, s.eps, &cfg));
    let (h, mut rep) = res?;
    rep.seconds = secs;
    Ok(Compressed { problem, h, rep, cfg, eps: s.eps })
}

fn base_report(c: &Compressed, p: &crate::ProblemArgs) -> Value {
    json!({
        "matrix": c.problem.describe,
        "tree": tree_report(&c.problem.tree, tree_kind(p)),
        "sampling": sampling_report(c.eps, &c.cfg),
        "compression": compression_report(&c.rep),
    })
}

fn rel_diff(a: &hss::Matrix, b: &hss::Matrix) -> f64 {
    let scale = b.norm_fro();
    let d = a.sub(b).norm_fro();
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

pub fn compress(a: &CompressArgs) -> Result<bool> {
    let c = compress_problem(&a.problem, &a.sampling, a.output.timings)?;
    let mut body = base_report(&c, &a.problem);
    let mut checks = Vec::new();
    if a.compare_dense {
        let dense = c.problem.source.to_dense();
        let err = rel_diff(&reconstruct_dense(&c.h)?, &dense);
        body["reconstruction_error"] = json!(err);
        checks.push(at_most("reconstruction_error", err, 100.0 * c.eps));
    }
    if let Some(path) = &a.save {
        save_hss(path, &c.h).with_context(|| format!("saving {}", path.display()))?;
        body["saved"] = json!(path.display().to_string());
    }
    emit("compress", body, checks, &a.output)
}

pub fn solve(a: &SolveArgs) -> Result<bool> {
    if a.rhs == 0 {
        bail!("--rhs must be at least 1");
    }
    let c = compress_problem(&a.problem, &a.sampling, a.output.timings)?;
    let n = c.problem.n();
    let src = c.problem.source.as_ref();

    let ((f, factor_flops), factor_secs) = timed(a.output.timings, || flops::measure(|| ulv_factor(&c.h)));
    let f = f?;
    let b = generate_random(n, a.rhs, a.sampling.seed ^ RHS_SALT, 0);
    let ((x0, solve_flops), solve_secs) = timed(a.output.timings, || flops::measure(|| ulv_solve(&f, &b)));
    let x0 = x0?;
    let (ir, ir_secs) = timed(a.output.timings, || iterative_refinement(src, &f, &b, a.ir_tol, a.ir_max_iters));
    let ir = ir?;

    let h_bytes = factor_bytes(&c.h);
    let ulv_bytes = f.bytes();
    // R and S on both the row and the column side
    let aux_bytes = 4 * 8 * n * c.rep.d_final;
    let dense_bytes = 8 * n * n + 8 * n;

    let mut body = base_report(&c, &a.problem);
    body["factorization"] = json!({
        "flops": factor_flops,
        "bytes": ulv_bytes,
        "factors_mb": ulv_bytes as f64 / 1e6,
        "root_size": f.root_size(),
        "seconds": factor_secs,
    });
    body["solve"] = json!({
        "rhs": a.rhs,
        "flops": solve_flops,
        "direct_residual": rel_diff(&src.multiply(&x0), &b),
        "seconds": solve_secs,
    });
    body["refinement"] = json!({
        "tol": a.ir_tol,
        "history": ir.history,
        "iterations": ir.iterations,
        "converged": ir.converged,
        "stagnated": ir.stagnated,
        "seconds": ir_secs,
    });
    body["ir_residual"] = json!(ir.residual());
    body["memory"] = json!({
        "hss_bytes": h_bytes,
        "ulv_bytes": ulv_bytes,
        "aux_bytes": aux_bytes,
        "dense_bytes": dense_bytes,
        "overhead": memory_overhead(h_bytes, ulv_bytes, aux_bytes, dense_bytes),
        "overhead_vs_dense": memory_overhead_vs_dense(h_bytes, ulv_bytes, aux_bytes, dense_bytes),
    });
    let mut checks = vec![at_most("ir_residual", ir.residual(), a.ir_tol)];
    if a.compare_dense {
        let dense = src.to_dense();
        let ((xd, dense_flops), dense_secs) = timed(a.output.timings, || {
            flops::measure(|| plu_factor(&dense).and_then(|lu| solve_plu(&lu, &b)))
        });
        let xd = xd?;
        let agreement = rel_diff(&ir.x, &xd);
        body["dense"] = json!({ "flops": dense_flops, "seconds": dense_secs, "agreement": agreement });
        checks.push(at_most("dense_agreement", agreement, 1e-8));
    }
    emit("solve", body, checks, &a.output)
}

pub fn matvec_bench(a: &MatvecArgs) -> Result<bool> {
    if a.rhs == 0 {
        bail!("--rhs must be at least 1");
    }
    let c = compress_problem(&a.problem, &a.sampling, a.output.timings)?;
    let n = c.problem.n();
    let x = generate_random(n, a.rhs, a.sampling.seed ^ RHS_SALT, 0);
    let ((y, hss_flops), hss_secs) = timed(a.output.timings, || flops::measure(|| hss_matvec(&c.h, &x)));
    let y = y?;
    let (want, ref_secs) = timed(a.output.timings, || c.problem.source.multiply(&x));
    let err = rel_diff(&y, &want);
    let mut body = base_report(&c, &a.problem);
    body["matvec"] = json!({
        "rhs": a.rhs,
        "hss_flops": hss_flops,
        "dense_flops": 2 * n * n * a.rhs,
        "relative_error": err,
        "hss_seconds": hss_secs,
        "reference_seconds": ref_secs,
    });
    let checks = vec![at_most("matvec_error", err, 100.0 * c.eps)];
    emit("matvec-bench", body, checks, &a.output)
}

pub fn power(a: &PowerArgs) -> Result<bool> {
    let c = compress_problem(&a.problem, &a.sampling, a.output.timings)?;
    let seed = a.sampling.seed ^ RHS_SALT;
    let ((hp, hss_flops), hss_secs) =
        timed(a.output.timings, || flops::measure(|| power_method(&c.h, a.power_tol, a.power_max_iters, seed)));
    let ((rp, ref_flops), ref_secs) = if a.compare_dense {
        let dense = c.problem.source.to_dense();
        timed(a.output.timings, || flops::measure(|| power_method(&dense, a.power_tol, a.power_max_iters, seed)))
    } else {
        let op = SourceOperator(c.problem.source.as_ref());
        timed(a.output.timings, || flops::measure(|| power_method(&op, a.power_tol, a.power_max_iters, seed)))
    };
    let agreement = (hp.eigenvalue - rp.eigenvalue).abs() / rp.eigenvalue.abs().max(f64::MIN_POSITIVE);
    let it_gap = (hp.iterations as f64 - rp.iterations as f64).abs();
    let mut body = base_report(&c, &a.problem);
    body["power"] = json!({
        "tol": a.power_tol,
        "hss": { "eigenvalue": hp.eigenvalue, "iterations": hp.iterations, "converged": hp.converged,
                 "flops": hss_flops, "seconds": hss_secs },
        "reference": { "path": if a.compare_dense { "dense" } else { "source" },
                       "eigenvalue": rp.eigenvalue, "iterations": rp.iterations, "converged": rp.converged,
                       "flops": ref_flops, "seconds": ref_secs },
        "agreement": agreement,
    });
    let checks = vec![
        at_least("hss_converged", f64::from(u8::from(hp.converged)), 1.0),
        at_least("reference_converged", f64::from(u8::from(rp.converged)), 1.0),
        at_most("eigenvalue_agreement", agreement, c.eps.max(1e-12)),
        at_most("iteration_gap", it_gap, 1.0),
    ];
    emit("power", body, checks, &a.output)
}

fn plan_report(tree: &ClusterTree, plan: &MappingPlan, traversals: bool) -> Value {
    let labels = tree.heap_labels();
    let nodes: Vec<Value> = tree
        .postorder()
        .into_iter()
        .map(|id| {
            let np = plan.node(id);
            let iv = tree.interval(id);
            json!({
                "id": id,
                "label": labels[id],
                "interval": [iv.start, iv.end],
                "procs": [np.first, np.last],
                "count": np.procs(),
                "grid": [np.grid_rows, np.grid_cols],
                "idle": np.idle,
            })
        })
        .collect();
    let mut out = json!({ "p": plan.p, "nodes": nodes });
    if traversals {
        let t: Vec<Vec<usize>> = (0..plan.p).map(|q| process_traversal(tree, plan, q)).collect();
        out["traversals"] = json!(t);
    }
    out
}

fn root_split(tree: &ClusterTree, plan: &MappingPlan) -> Value {
    match tree.children(tree.root()) {
        Some((l, r)) => json!([plan.node(l).procs(), plan.node(r).procs()]),
        None => json!([plan.p]),
    }
}

fn node_max_ranks(h: &HssForm) -> Vec<usize> {
    let mut ranks = vec![0; h.tree().len()];
    for (id, r, c) in h.node_ranks() {
        ranks[id] = r.max(c);
    }
    ranks
}

pub fn map_plan(a: &MapArgs) -> Result<bool> {
    if a.p == 0 {
        bail!("--p must be at least 1");
    }
    let weights = WeightsArg::parse(&a.weights)?;
    let mut body = json!({ "weights": a.weights });
    let (tree, plan) = match weights.static_weights() {
        Some(w) => {
            let problem = problem::build(&a.problem, a.sampling.seed)?;
            body["matrix"] = problem.describe.clone();
            let plan = proportional_map(&problem.tree, a.p, &w)?;
            (problem.tree, plan)
        }
        None => {
            let c = compress_problem(&a.problem, &a.sampling, a.output.timings)?;
            body["matrix"] = c.problem.describe.clone();
            body["compression"] = compression_report(&c.rep);
            let tree = c.problem.tree;
            let base = proportional_map(&tree, a.p, &Weights::Interval)?;
            let plan = remap_with_ranks(&tree, &base, &node_max_ranks(&c.h))?;
            (tree, plan)
        }
    };
    body["tree"] = tree_report(&tree, tree_kind(&a.problem));
    body["root_split"] = root_split(&tree, &plan);
    body["plan"] = plan_report(&tree, &plan, a.p <= 64);
    emit("map-plan", body, Vec::new(), &a.output)
}

pub fn comm_model(a: &CommArgs) -> Result<bool> {
    if !(a.n >= 1.0 && a.p >= 1.0 && a.r >= 0.0) {
        bail!("--n and --p must be at least 1 and --r nonnegative");
    }
    let kind = match a.kind {
        CommKindArg::DenseLu => CommKind::DenseLu,
        CommKindArg::Nonrandomized => CommKind::HssNonrandomized,
        CommKindArg::Randomized => CommKind::HssRandomized,
    };
    let m = model(kind, a.n, a.p, a.r);
    let mut body = json!({
        "note": "leading-order terms with unit constants and base-2 logarithms; comparative only",
        "n": a.n,
        "p": a.p,
        "r": a.r,
        "model": m,
    });
    let (n, p) = (a.n as usize, a.p as usize);
    if a.n.fract() == 0.0 && a.p.fract() == 0.0 && p.is_power_of_two() {
        body["distribution_exact"] = json!(distribution_cost_exact(n, p)?);
    }
    emit("comm-model", body, Vec::new(), &a.output)
}

pub fn comb_demo(a: &CombArgs) -> Result<bool> {
    if a.p < 2 {
        bail!("--p must be at least 2");
    }
    let weights = WeightsArg::parse(&a.weights)?;
    let (sizes, levels) = comb_demo_layout(a.n)?;
    let cfg = SamplingConfig { d0: a.d0, delta_d: a.delta_d, gap: a.gap, max_d: a.max_d, seed: a.seed, ..Default::default() };
    cfg.validate()?;
    let (m, gen_secs) = timed(a.output.timings, || comb_matrix(a.n, &sizes, &levels, a.seed));
    let m = m?;
    let comb_tree = m.truth.tree.clone();
    let binary_tree = build_balanced_tree(a.n, sizes[0])?;

    let run = |tree: &ClusterTree| -> Result<(HssForm, CompressionReport)> {
        let (res, secs) = timed(a.output.timings, || hss_compress(&m, tree, a.eps, &cfg));
        let (h, mut rep) = res?;
        rep.seconds = secs;
        Ok((h, rep))
    };
    let (_, bin_rep) = run(&binary_tree)?;
    let (comb_h, comb_rep) = run(&comb_tree)?;

    let bin_plan = proportional_map(&binary_tree, a.p, &Weights::Interval)?;
    let comb_plan = proportional_map(&comb_tree, a.p, &Weights::Interval)?;
    let weighted_plan = match weights.static_weights() {
        Some(w) => proportional_map(&comb_tree, a.p, &w)?,
        None => remap_with_ranks(&comb_tree, &comb_plan, &node_max_ranks(&comb_h))?,
    };

    let row = |name: &str, tree: &ClusterTree, rep: &CompressionReport, plan: &MappingPlan, w: &str| {
        json!({
            "name": name,
            "tree": tree_report(tree, if name == "binary" { "binary" } else { "comb" }),
            "weights": w,
            "max_rank": rep.max_rank,
            "restarts": rep.restarts,
            "d_final": rep.d_final,
            "flops": rep.flops,
            "bytes": rep.bytes,
            "seconds": rep.seconds,
            "root_split": root_split(tree, plan),
        })
    };
    let rows = vec![
        row("binary", &binary_tree, &bin_rep, &bin_plan, "uniform"),
        row("comb", &comb_tree, &comb_rep, &comb_plan, "uniform"),
        row("comb_weighted", &comb_tree, &comb_rep, &weighted_plan, &a.weights),
    ];
    let ratio = bin_rep.max_rank as f64 / comb_rep.max_rank.max(1) as f64;
    let body = json!({
        "n": a.n,
        "p": a.p,
        "leaf_sizes": sizes,
        "prescribed_ranks": levels,
        "sampling": sampling_report(a.eps, &cfg),
        "generation_seconds": gen_secs,
        "rows": rows,
        "rank_ratio": ratio,
    });
    let top = levels[0] as f64;
    let checks = vec![
        at_least("comb_max_rank_low", comb_rep.max_rank as f64, top),
        at_most("comb_max_rank_high", comb_rep.max_rank as f64, top + 10.0),
        at_least("rank_ratio", ratio, 10.0),
    ];
    emit("comb-demo", body, checks, &a.output)
}
