use std::io::Cursor;

use hss::compress::{generate_random, serial_states_consistent, NodeState};
use hss::dense::{flops, matmul, plu_factor, solve_plu, Matrix, Op};
use hss::generators::{synthetic_hss, toeplitz_qchem};
use hss::hss::{hankel_ranks, read_hss, reconstruct_dense, write_hss, HANKEL_DENSE_CAP};
use hss::matvec::hss_matvec;
use hss::tree::build_balanced_tree;
use hss::ulv::iterative_refinement;
use hss::{compress, ulv_factor, ulv_solve, DenseSource, Error, MatrixSource, SamplingConfig};
use proptest::prelude::*;

fn kernel(n: usize, scale: f64) -> DenseSource {
    let a = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0
        } else {
            1.0 / (1.0 + scale * (i as f64 - j as f64).abs())
        }
    });
    DenseSource::new(a).unwrap()
}

#[test]
fn randomized_ranks_track_the_oracle() {
    for (n, leaf, scale, eps) in [(256, 32, 1.0, 1e-8), (512, 64, 0.5, 1e-6), (1024, 128, 2.0, 1e-10)] {
        let src = kernel(n, scale);
        let tree = build_balanced_tree(n, leaf).unwrap();
        let (h, rep) = compress(&src, &tree, eps, &SamplingConfig::default()).unwrap();
        for (id, r, c) in h.node_ranks() {
            let (or, oc) = hankel_ranks(&src, &tree, id, eps, HANKEL_DENSE_CAP).unwrap();
            assert!(r + 5 >= or && r <= or + 5, "n {n} node {id}: row rank {r}, oracle {or}");
            assert!(c + 5 >= oc && c <= oc + 5, "n {n} node {id}: col rank {c}, oracle {oc}");
        }
        let err = reconstruct_dense(&h).unwrap().sub(src.matrix()).norm_fro();
        assert!(err <= 100.0 * eps * src.matrix().norm_fro(), "n {n}: error {err:e}");
        assert!(rep.d_final >= rep.max_rank + 10);
    }
}

#[test]
fn no_restarts_when_d0_covers_the_rank() {
    let tree = build_balanced_tree(512, 64).unwrap();
    let m = synthetic_hss(&tree, 12, 3).unwrap();
    let cfg = SamplingConfig { d0: 12 + 10, ..Default::default() };
    let (_, rep) = compress(&m, &tree, 1e-10, &cfg).unwrap();
    assert!(rep.restarts.is_empty());
    assert_eq!(rep.max_rank, 12);
}

#[test]
fn flops_scale_with_sampling_cost() {
    // dominated by the two dense products A R and Aᵀ R
    for n in [512, 1024] {
        let tree = build_balanced_tree(n, 64).unwrap();
        let m = synthetic_hss(&tree, 10, 1).unwrap();
        let (_, rep) = compress(&m, &tree, 1e-10, &SamplingConfig::default()).unwrap();
        let estimate = 4.0 * (n * n) as f64 * rep.d_final as f64;
        let ratio = rep.flops as f64 / estimate;
        assert!((0.5..=2.0).contains(&ratio), "n {n}: {} flops vs estimate {estimate}", rep.flops);
    }
}

#[test]
fn full_rank_leaves_store_empty_e() {
    let n = 64;
    let a = generate_random(n, n, 5, 0);
    let src = DenseSource::new(a).unwrap();
    let tree = build_balanced_tree(n, 8).unwrap();
    let (h, _) = compress(&src, &tree, 1e-12, &SamplingConfig::for_rank(64)).unwrap();
    for id in tree.leaves() {
        let u = h.u(id);
        assert_eq!(u.rank(), 8);
        assert_eq!(u.e().rows(), 0);
    }
    let err = reconstruct_dense(&h).unwrap().sub(src.matrix()).norm_fro();
    assert!(err <= 1e-10 * src.matrix().norm_fro());
}

#[test]
fn serial_states_follow_postorder() {
    use NodeState::*;
    let tree = build_balanced_tree(4, 1).unwrap();
    let order = tree.postorder();
    let mut states = vec![Untouched; tree.len()];
    // a restart always leaves exactly one partially compressed node
    assert!(!serial_states_consistent(&order, &states));
    states[order[0]] = Compressed;
    states[order[1]] = PartiallyCompressed;
    assert!(serial_states_consistent(&order, &states));
    states[order[3]] = Compressed;
    assert!(!serial_states_consistent(&order, &states));
    states[order[3]] = PartiallyCompressed;
    assert!(!serial_states_consistent(&order, &states));
}

#[test]
fn container_roundtrip_and_truncation() {
    let tree = build_balanced_tree(200, 25).unwrap();
    let m = synthetic_hss(&tree, 6, 11).unwrap();
    let (h, _) = compress(&m, &tree, 1e-10, &SamplingConfig::default()).unwrap();
    let mut bytes = Vec::new();
    write_hss(&h, &mut bytes).unwrap();
    assert_eq!(&bytes[..8], b"HSSF0001");
    let back = read_hss(Cursor::new(&bytes)).unwrap();
    assert_eq!(reconstruct_dense(&back).unwrap(), reconstruct_dense(&h).unwrap());
    assert_eq!(back.max_rank(), h.max_rank());
    for cut in [0, 7, 8, 40, bytes.len() / 2, bytes.len() - 1] {
        let r = read_hss(Cursor::new(&bytes[..cut]));
        assert!(matches!(r, Err(Error::Format(_))), "cut at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_hss(Cursor::new(&bad)), Err(Error::Format(_))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("form.hssf");
    hss::hss::save_hss(&path, &h).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(hss::hss::load_hss(&path).unwrap().n(), 200);
}

#[test]
fn ulv_one_level_structure() {
    let n = 96;
    let tree = build_balanced_tree(n, 48).unwrap();
    let m = synthetic_hss(&tree, 7, 2).unwrap();
    let (h, _) = compress(&m, &tree, 1e-12, &SamplingConfig::default()).unwrap();
    let f = ulv_factor(&h).unwrap();
    let (c1, c2) = tree.children(tree.root()).unwrap();
    assert_eq!(f.root_size(), h.u(c1).rank() + h.u(c2).rank());
    for id in [c1, c2] {
        let node = f.node(id).unwrap();
        let u = h.u(id);
        // Ω U = [0; I]
        let ou = u.apply_omega(&u.expand());
        let top = node.top();
        assert!(ou.row_block(0..top).max_abs() <= 1e-12);
        assert!(ou.row_block(top..u.rows()).sub(&Matrix::identity(u.rank())).max_abs() <= 1e-12);
        // Ω applied without forming Ω agrees with the dense Ω
        let dense = matmul(&u.omega_dense(), Op::N, h.d(id), Op::N).unwrap();
        assert!(node.w.sub(&dense).max_abs() <= 1e-12);
        // W_t = [L 0] Q
        let mut l0 = Matrix::zeros(top, u.rows());
        l0.set_block(0, 0, &node.l);
        let wt = matmul(&l0, Op::N, &node.q, Op::N).unwrap();
        assert!(wt.sub(&node.w.row_block(0..top)).max_abs() <= 1e-12 * node.w.max_abs());
    }
    let b = generate_random(n, 2, 8, 0);
    let x = ulv_solve(&f, &b).unwrap();
    let xd = solve_plu(&plu_factor(m.source.matrix()).unwrap(), &b).unwrap();
    assert!(x.sub(&xd).norm_fro() <= 1e-10 * xd.norm_fro());
}

#[test]
fn ulv_matches_dense_lu_on_many_seeds() {
    for seed in 0..50u64 {
        let n = [128, 256, 512][seed as usize % 3];
        let tree = build_balanced_tree(n, 32).unwrap();
        let m = synthetic_hss(&tree, 4 + seed as usize % 12, seed).unwrap();
        let (h, _) = compress(&m, &tree, 1e-12, &SamplingConfig::default()).unwrap();
        let f = ulv_factor(&h).unwrap();
        let b = generate_random(n, 1, seed, 3);
        let x = ulv_solve(&f, &b).unwrap();
        let xd = solve_plu(&plu_factor(m.source.matrix()).unwrap(), &b).unwrap();
        assert!(x.sub(&xd).norm_fro() <= 1e-8 * xd.norm_fro(), "seed {seed}");
    }
}

#[test]
fn refinement_decreases_until_converged() {
    let n = 512;
    let tree = build_balanced_tree(n, 64).unwrap();
    let m = synthetic_hss(&tree, 10, 5).unwrap();
    // coarse compression of an exact HSS matrix leaves a useful preconditioner
    let (h, _) = compress(&m, &tree, 1e-4, &SamplingConfig::default()).unwrap();
    let f = ulv_factor(&h).unwrap();
    let b = generate_random(n, 1, 9, 0);
    let ir = iterative_refinement(&m, &f, &b, 1e-12, 25).unwrap();
    assert!(ir.converged, "history {:?}", ir.history);
    assert!(ir.history.windows(2).all(|w| w[1] <= w[0]), "history {:?}", ir.history);
    assert_eq!(ir.history.len(), ir.iterations + 1);
}

#[test]
fn refinement_flags_a_poor_factorization() {
    let n = 1024;
    let q = toeplitz_qchem(n, 1.0).unwrap();
    let tree = build_balanced_tree(n, 64).unwrap();
    let (h, _) = compress(&q, &tree, 1e-2, &SamplingConfig::default()).unwrap();
    let f = ulv_factor(&h).unwrap();
    let b = generate_random(n, 1, 2, 0);
    let ir = iterative_refinement(&q, &f, &b, 1e-10, 50).unwrap();
    assert!(!ir.converged, "history {:?}", ir.history);
    assert!(ir.residual() <= ir.history[0]);
}

#[test]
fn matvec_of_identity_is_the_reconstruction() {
    for seed in 0..5u64 {
        let n = 256;
        let tree = build_balanced_tree(n, 32).unwrap();
        let m = synthetic_hss(&tree, 9, seed).unwrap();
        let (h, _) = compress(&m, &tree, 1e-8, &SamplingConfig::default()).unwrap();
        let full = hss_matvec(&h, &Matrix::identity(n)).unwrap();
        assert!(full.sub(&reconstruct_dense(&h).unwrap()).max_abs() <= 1e-12);
    }
}

#[test]
fn compression_is_deterministic() {
    let tree = build_balanced_tree(300, 40).unwrap();
    let m = synthetic_hss(&tree, 8, 4).unwrap();
    let cfg = SamplingConfig { d0: 4, delta_d: 4, gap: 3, ..Default::default() };
    let (h1, r1) = compress(&m, &tree, 1e-9, &cfg).unwrap();
    let (h2, r2) = compress(&m, &tree, 1e-9, &cfg).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(reconstruct_dense(&h1).unwrap(), reconstruct_dense(&h2).unwrap());
    let (_, r) = flops::measure(|| ());
    assert_eq!(r, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matvec_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, k in 1usize..4) {
        let n = 128;
        let tree = build_balanced_tree(n, 16).unwrap();
        let m = synthetic_hss(&tree, 5, seed).unwrap();
        let (h, _) = compress(&m, &tree, 1e-10, &SamplingConfig::default()).unwrap();
        let x = generate_random(n, k, seed, 0);
        let y = generate_random(n, k, seed, 10);
        let mut combo = x.clone();
        combo.scale(alpha);
        combo.axpy(beta, &y);
        let lhs = hss_matvec(&h, &combo).unwrap();
        let mut rhs = hss_matvec(&h, &x).unwrap();
        rhs.scale(alpha);
        rhs.axpy(beta, &hss_matvec(&h, &y).unwrap());
        prop_assert!(lhs.sub(&rhs).norm_fro() <= 1e-12 * (1.0 + rhs.norm_fro()));
        let want = m.multiply(&x);
        prop_assert!(hss_matvec(&h, &x).unwrap().sub(&want).norm_fro() <= 100.0 * 1e-10 * want.norm_fro());
    }

    #[test]
    fn random_stream_extends(seed in any::<u64>(), n in 1usize..40, d1 in 0usize..10, d2 in 0usize..10) {
        let whole = generate_random(n, d1 + d2, seed, 0);
        let a = generate_random(n, d1, seed, 0);
        let b = generate_random(n, d2, seed, d1);
        prop_assert_eq!(whole.col_block(0..d1), a);
        prop_assert_eq!(whole.col_block(d1..d1 + d2), b);
    }

    #[test]
    fn compression_meets_tolerance(seed in any::<u64>(), r in 0usize..20, exp in 4i32..12) {
        let eps = 10f64.powi(-exp);
        let tree = build_balanced_tree(256, 32).unwrap();
        let m = synthetic_hss(&tree, r, seed).unwrap();
        let (h, rep) = compress(&m, &tree, eps, &SamplingConfig::default()).unwrap();
        let a = m.source.matrix();
        prop_assert!(reconstruct_dense(&h).unwrap().sub(a).norm_fro() <= 100.0 * eps * a.norm_fro());
        prop_assert!(rep.max_rank <= r);
    }
}
