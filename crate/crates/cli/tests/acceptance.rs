//! Acceptance suite. Runs every criterion at its pinned tolerance and prints
//! one line per criterion; exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use hss::compress::generate_random;
use hss::dense::{plu_factor, solve_plu, Matrix};
use hss::generators::{comb_demo_layout, comb_matrix, synthetic_hss, toeplitz_qchem, toeplitz_simple, SyntheticHss};
use hss::hss::{hankel_rank_oracle, reconstruct_dense};
use hss::mapping::{distribution_cost_exact, proportional_map, Weights};
use hss::matvec::{hss_matvec, power_method};
use hss::tree::{build_balanced_tree, build_comb_tree};
use hss::ulv::iterative_refinement;
use hss::{compress, ulv_factor, ulv_solve, HssForm, MatrixSource, SamplingConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).norm_fro() / b.norm_fro()
}

/// The seeded synthetic suite: 50 exact HSS matrices, orders 256/512/1024,
/// ranks 1..=32, leaf size 64.
fn suite() -> impl Iterator<Item = (usize, usize, usize, SyntheticHss)> {
    (0..50).map(|k| {
        let n = [256, 512, 1024][k % 3];
        let r = 1 + (k * 13) % 32;
        let tree = build_balanced_tree(n, 64).unwrap();
        (k, n, r, synthetic_hss(&tree, r, k as u64).unwrap())
    })
}

fn compress_synthetic(m: &SyntheticHss, eps: f64) -> Result<HssForm, String> {
    compress(m, &m.truth.tree, eps, &SamplingConfig::default()).map(|(h, _)| h).map_err(|e| e.to_string())
}

fn reconstruction_accuracy() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, _, _, m) in suite() {
        let a = m.source.matrix();
        for eps in [1e-4, 1e-8, 1e-12] {
            let h = compress_synthetic(&m, eps)?;
            let ratio = rel(&reconstruct_dense(&h).unwrap(), a) / eps;
            worst = worst.max(ratio);
            ensure(ratio <= 100.0, || format!("matrix {k}, eps {eps:e}: error {:.3e} x eps", ratio))?;
        }
    }
    Ok(format!("150 compressions, worst error {worst:.2} x eps (limit 100)"))
}

fn exact_rank_recovery() -> Outcome {
    for seed in 0..20u64 {
        let r = [5, 8, 12, 16, 20][seed as usize % 5];
        let tree = build_balanced_tree(512, 64).unwrap();
        let m = synthetic_hss(&tree, r, 100 + seed).unwrap();
        ensure(m.truth.max_rank() == r, || format!("seed {seed}: construction rank {}", m.truth.max_rank()))?;
        for id in tree.postorder().into_iter().filter(|&id| !tree.is_root(id)) {
            let oracle = hankel_rank_oracle(&m, &tree, id, 1e-10).unwrap();
            ensure(oracle == m.truth.ranks[id], || format!("seed {seed}, node {id}: oracle rank {oracle}"))?;
        }
        let h = compress_synthetic(&m, 1e-10)?;
        ensure(h.max_rank() == r, || format!("seed {seed}: compressed max rank {} for prescribed {r}", h.max_rank()))?;
    }
    Ok("20 seeds, compressed max rank equals the prescribed and oracle rank".into())
}

fn solve_equivalence() -> Outcome {
    let (mut worst_agree, mut worst_res, mut most_steps): (f64, f64, usize) = (0.0, 0.0, 0);
    for (k, n, _, m) in suite() {
        let h = compress_synthetic(&m, 1e-12)?;
        let f = ulv_factor(&h).map_err(|e| e.to_string())?;
        let b = generate_random(n, 1, 1000 + k as u64, 0);
        let x = ulv_solve(&f, &b).unwrap();
        let lu = plu_factor(m.source.matrix()).unwrap();
        let xd = solve_plu(&lu, &b).unwrap();
        let agree = rel(&x, &xd);
        ensure(agree <= 1e-8, || format!("matrix {k}: ULV and dense solutions differ by {agree:.3e}"))?;
        let ir = iterative_refinement(&m, &f, &b, 1e-10, 2).unwrap();
        ensure(ir.converged, || format!("matrix {k}: residual {:.3e} after 2 refinement steps", ir.residual()))?;
        worst_agree = worst_agree.max(agree);
        worst_res = worst_res.max(ir.residual());
        most_steps = most_steps.max(ir.iterations);
    }
    Ok(format!(
        "50 systems, worst agreement {worst_agree:.2e}, worst residual {worst_res:.2e}, at most {most_steps} refinement steps"
    ))
}

fn simple_toeplitz() -> Outcome {
    let n = 1024;
    let s = toeplitz_simple(n).unwrap();
    let tree = build_balanced_tree(n, 64).unwrap();
    let (h, rep) = compress(&s, &tree, 1e-8, &SamplingConfig::default()).map_err(|e| e.to_string())?;
    ensure(rep.max_rank <= 8, || format!("max rank {}", rep.max_rank))?;
    let (l, r) = tree.children(tree.root()).unwrap();
    for id in [l, r, tree.leaves()[0]] {
        let oracle = hankel_rank_oracle(&s, &tree, id, 1e-8).unwrap();
        ensure(oracle <= 8, || format!("oracle rank {oracle} at node {id}"))?;
    }
    let f = ulv_factor(&h).map_err(|e| e.to_string())?;
    let b = generate_random(n, 1, 4, 0);
    let ir = iterative_refinement(&s, &f, &b, 1e-10, 3).unwrap();
    ensure(ir.converged, || format!("residual {:.3e} after {} steps", ir.residual(), ir.iterations))?;
    Ok(format!("max rank {}, residual {:.2e} after {} refinement steps", rep.max_rank, ir.residual(), ir.iterations))
}

fn comb_experiment() -> Outcome {
    let n = 4000;
    let (sizes, levels) = comb_demo_layout(n).unwrap();
    let m = comb_matrix(n, &sizes, &levels, 0).unwrap();
    let cfg = SamplingConfig { d0: 128, delta_d: 128, ..Default::default() };
    let comb_tree = build_comb_tree(n, &sizes).unwrap();
    let deepest = comb_tree.leaves()[0];
    let oracle = hankel_rank_oracle(&m, &comb_tree, deepest, 1e-10).unwrap();
    ensure(oracle == 70, || format!("oracle rank {oracle} at the deepest comb leaf"))?;
    let (_, comb_rep) = compress(&m, &comb_tree, 1e-10, &cfg).map_err(|e| e.to_string())?;
    let binary = build_balanced_tree(n, 500).unwrap();
    let (_, bin_rep) = compress(&m, &binary, 1e-10, &cfg).map_err(|e| e.to_string())?;
    let (c, b) = (comb_rep.max_rank, bin_rep.max_rank);
    ensure((70..=80).contains(&c), || format!("comb max rank {c}"))?;
    ensure(b == 1000, || format!("binary max rank {b}"))?;
    ensure(b >= 10 * c, || format!("ratio {b}/{c}"))?;
    Ok(format!("comb max rank {c}, binary max rank {b}, ratio {:.1}", b as f64 / c as f64))
}

fn power_method_agreement() -> Outcome {
    let n = 2048;
    let q = toeplitz_qchem(n, 1.0).unwrap();
    let tree = build_balanced_tree(n, 64).unwrap();
    let (h, rep) = compress(&q, &tree, 1e-6, &SamplingConfig::default()).map_err(|e| e.to_string())?;
    let dense = q.to_dense();
    let hp = power_method(&h, 1e-5, 10_000, 1);
    let dp = power_method(&dense, 1e-5, 10_000, 1);
    ensure(hp.converged && dp.converged, || "power iteration did not converge".into())?;
    let agree = (hp.eigenvalue - dp.eigenvalue).abs() / dp.eigenvalue.abs();
    ensure(agree <= 1e-6, || format!("eigenvalues differ by {agree:.3e}"))?;
    ensure(hp.iterations.abs_diff(dp.iterations) <= 1, || format!("{} vs {} iterations", hp.iterations, dp.iterations))?;
    Ok(format!(
        "max rank {}, eigenvalue {:.8} vs {:.8} (rel {agree:.2e}), {} vs {} iterations",
        rep.max_rank, hp.eigenvalue, dp.eigenvalue, hp.iterations, dp.iterations
    ))
}

fn adaptive_sampling() -> Outcome {
    let r_star = 20;
    let gap = 4;
    let tree = build_balanced_tree(512, 64).unwrap();
    let m = synthetic_hss(&tree, r_star, 77).unwrap();
    let oracle = tree.postorder().into_iter().filter(|&id| !tree.is_root(id)).map(|id| {
        hankel_rank_oracle(&m, &tree, id, 1e-8).unwrap()
    });
    let oracle = oracle.max().unwrap();
    ensure(oracle == r_star, || format!("oracle rank {oracle}"))?;
    let a = m.source.matrix();
    let mut traces = Vec::new();
    for (d0, delta_d) in [(8, 8), (24, 8), (32, 8), (4, 16)] {
        let cfg = SamplingConfig { d0, delta_d, gap, ..Default::default() };
        let (h, rep) = compress(&m, &tree, 1e-8, &cfg).map_err(|e| e.to_string())?;
        let expected = (r_star + gap).saturating_sub(d0).div_ceil(delta_d);
        ensure(rep.restart_count() == expected, || {
            format!("d0 {d0}, delta {delta_d}: {} restarts {:?}, expected {expected}", rep.restart_count(), rep.restarts)
        })?;
        let err = rel(&reconstruct_dense(&h).unwrap(), a);
        ensure(err <= 100.0 * 1e-8, || format!("d0 {d0}: reconstruction error {err:.3e}"))?;
        traces.push(format!("d0={d0}: {:?}", rep.restarts));
    }
    Ok(format!("restarts at {}", traces.join(", ")))
}

fn mapping_fidelity() -> Outcome {
    let tree = build_balanced_tree(8, 1).unwrap();
    let plan = proportional_map(&tree, 9, &Weights::Interval).unwrap();
    let root = plan.node(tree.root());
    ensure((root.grid_rows, root.grid_cols) == (3, 3), || format!("root grid {:?}", (root.grid_rows, root.grid_cols)))?;
    let (l, _) = tree.children(tree.root()).unwrap();
    let left = plan.node(l);
    ensure(
        (left.procs(), left.grid_rows, left.grid_cols, left.idle) == (5, 2, 2, 1),
        || format!("left child {left:?}"),
    )?;
    let (sizes, _) = comb_demo_layout(4000).unwrap();
    let comb = build_comb_tree(4000, &sizes).unwrap();
    let plan = proportional_map(&comb, 64, &Weights::RightFraction(0.75)).unwrap();
    let (l, r) = comb.children(comb.root()).unwrap();
    let split = (plan.node(l).procs(), plan.node(r).procs());
    ensure(split == (16, 48), || format!("root split {split:?}"))?;
    Ok("p=9: root 3x3, left child 5 procs on 2x2 with 1 idle; p=64 right 0.75: 16/48".into())
}

fn communication_model() -> Outcome {
    let c = distribution_cost_exact(16, 4).unwrap();
    ensure((c.messages, c.words) == (13.0, 76.0), || format!("(16, 4) gives {c:?}"))?;
    let n = 1024usize;
    let (mut lo, mut hi): (f64, f64) = (f64::INFINITY, 0.0);
    for k in 1..=10 {
        let p = 1usize << k;
        let c = distribution_cost_exact(n, p).unwrap();
        let ratio = c.messages / (p as f64 * k as f64);
        ensure((1.0..=2.0).contains(&ratio), || format!("p = {p}: message ratio {ratio}"))?;
        let bound = 2.0 * (n * n) as f64 / p as f64;
        ensure(c.words <= bound, || format!("p = {p}: {} words above {bound}", c.words))?;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok(format!("(16, 4) = (13, 76); message ratio in [{lo:.3}, {hi:.3}] for p = 2..1024"))
}

fn matvec_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, n, _, m) in suite() {
        let eps = 1e-8;
        let h = compress_synthetic(&m, eps)?;
        let x = generate_random(n, 3, 500 + k as u64, 0);
        let want = m.multiply(&x);
        let err = rel(&hss_matvec(&h, &x).unwrap(), &want);
        ensure(err <= 100.0 * eps, || format!("matrix {k}: relative error {err:.3e}"))?;
        worst = worst.max(err / eps);
        if n <= 256 {
            let full = hss_matvec(&h, &Matrix::identity(n)).unwrap();
            let diff = full.sub(&reconstruct_dense(&h).unwrap()).max_abs();
            ensure(diff <= 1e-12, || format!("matrix {k}: matvec of identity off by {diff:.3e}"))?;
        }
    }
    Ok(format!("50 matrices, worst error {worst:.2} x eps; identity products match reconstruction"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let path = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_hss"))
            .args(["solve", "--matrix", "synthetic", "--n", "512", "--rank", "12", "--eps", "1e-10"])
            .args(["--seed", "7", "--rhs", "2", "--compare-dense", "--json"])
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("exit status {}", out.status))?;
        Ok((out.stdout, std::fs::read(&path).map_err(|e| e.to_string())?))
    };
    let (a, fa) = run("a.json")?;
    let (b, fb) = run("b.json")?;
    ensure(a == b && fa == fb && a == fa, || "reports differ between runs".into())?;
    Ok(format!("two solve runs gave identical {}-byte reports", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("reconstruction accuracy", reconstruction_accuracy),
        ("exact-rank recovery", exact_rank_recovery),
        ("solve oracle equivalence", solve_equivalence),
        ("simple Toeplitz solve", simple_toeplitz),
        ("comb experiment", comb_experiment),
        ("power method", power_method_agreement),
        ("adaptive sampling restarts", adaptive_sampling),
        ("mapping fidelity", mapping_fidelity),
        ("communication model", communication_model),
        ("matvec equivalence", matvec_equivalence),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| f == &label || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {label:>2} PASS  {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {label:>2} FAIL  {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
