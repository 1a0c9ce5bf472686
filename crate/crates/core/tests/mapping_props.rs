use hss::mapping::{
    comm_model, distribution_cost_exact, grid_shape, process_traversal, proportional_map, rank_weights,
    remap_with_ranks, CommKind, Weights,
};
use hss::tree::{build_balanced_tree, build_comb_tree, ClusterTree};
use proptest::prelude::*;

fn check_plan_sums(tree: &ClusterTree, p: usize, w: &Weights) -> Result<(), TestCaseError> {
    let plan = proportional_map(tree, p, w).unwrap();
    let root = plan.node(tree.root());
    prop_assert_eq!((root.first, root.last), (0, p));
    for id in 0..tree.len() {
        let np = plan.node(id);
        let (pr, pc, idle) = grid_shape(np.procs());
        prop_assert_eq!((np.grid_rows, np.grid_cols, np.idle), (pr, pc, idle));
        if let Some((a, b)) = tree.children(id) {
            let (na, nb) = (plan.node(a), plan.node(b));
            if np.procs() >= 2 {
                prop_assert_eq!(na.procs() + nb.procs(), np.procs());
                prop_assert!(na.procs() >= 1 && nb.procs() >= 1);
                prop_assert_eq!((na.first, nb.last, na.last), (np.first, np.last, nb.first));
            } else {
                prop_assert_eq!((na.first, na.last, nb.first, nb.last), (np.first, np.last, np.first, np.last));
            }
        }
    }
    Ok(())
}

proptest! {
    #[test]
    fn process_counts_are_conserved(n in 1usize..2000, leaf in 1usize..200, p in 1usize..300, f in 0.05f64..0.95) {
        let tree = build_balanced_tree(n, leaf).unwrap();
        check_plan_sums(&tree, p, &Weights::Interval)?;
        check_plan_sums(&tree, p, &Weights::RightFraction(f))?;
    }

    #[test]
    fn comb_counts_are_conserved(sizes in prop::collection::vec(1usize..100, 1..7), p in 1usize..128) {
        let n = sizes.iter().sum();
        let tree = build_comb_tree(n, &sizes).unwrap();
        check_plan_sums(&tree, p, &Weights::RightFraction(0.75))?;
    }

    #[test]
    fn weights_are_scale_invariant(n in 2usize..1000, leaf in 1usize..100, p in 1usize..100, c in 0.001f64..1000.0, seed in any::<u64>()) {
        let tree = build_balanced_tree(n, leaf).unwrap();
        let ranks: Vec<usize> = (0..tree.len()).map(|i| ((seed >> (i % 60)) as usize ^ i) % 17).collect();
        let w = rank_weights(&tree, &ranks);
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        let a = proportional_map(&tree, p, &Weights::PerNode(w)).unwrap();
        let b = proportional_map(&tree, p, &Weights::PerNode(scaled)).unwrap();
        prop_assert_eq!(&a, &b);
        let base = proportional_map(&tree, p, &Weights::Interval).unwrap();
        prop_assert_eq!(remap_with_ranks(&tree, &base, &ranks).unwrap(), a);
    }

    #[test]
    fn traversals_are_subtree_then_path(n in 1usize..600, leaf in 1usize..40, p in 1usize..40) {
        let tree = build_balanced_tree(n, leaf).unwrap();
        let plan = proportional_map(&tree, p, &Weights::Interval).unwrap();
        // maximal single-process subtrees: single-process nodes whose parent has more
        let mut owner_count = vec![0; p];
        for id in 0..tree.len() {
            let np = plan.node(id);
            let parent_shared = tree.parent(id).is_none_or(|q| plan.node(q).procs() > 1);
            if np.procs() == 1 && parent_shared {
                owner_count[np.first] += 1;
            }
        }
        for q in 0..p {
            prop_assert!(owner_count[q] <= 1);
            let t = process_traversal(&tree, &plan, q);
            prop_assert_eq!(*t.last().unwrap(), tree.root());
            if owner_count[q] == 1 {
                let sub = (0..tree.len())
                    .find(|&id| {
                        let np = plan.node(id);
                        np.procs() == 1 && np.first == q && tree.parent(id).is_none_or(|x| plan.node(x).procs() > 1)
                    })
                    .unwrap();
                let mut want = tree.subtree_postorder(sub);
                let mut cur = sub;
                while let Some(par) = tree.parent(cur) {
                    want.push(par);
                    cur = par;
                }
                prop_assert_eq!(t, want);
            }
            // every task in the traversal involves process q
            for id in process_traversal(&tree, &plan, q) {
                let np = plan.node(id);
                prop_assert!(np.first <= q && q < np.last);
            }
        }
    }
}

#[test]
fn distribution_bounds() {
    for n in [16usize, 1024, 1 << 12] {
        for k in 1..=10 {
            let p = 1usize << k;
            let c = distribution_cost_exact(n, p).unwrap();
            let ratio = c.messages / (p * k) as f64;
            assert!((1.0..=2.0).contains(&ratio), "p {p}: {ratio}");
            assert!(c.words <= 2.0 * (n * n) as f64 / p as f64);
        }
    }
    let c = distribution_cost_exact(1 << 10, 1 << 6).unwrap();
    assert!(c.messages <= 768.0);
}

#[test]
fn model_terms_add_up() {
    for kind in [CommKind::DenseLu, CommKind::HssNonrandomized, CommKind::HssRandomized] {
        let m = comm_model(kind, 5000.0, 256.0, 50.0);
        let msgs: f64 = m.terms.iter().map(|t| t.messages).sum();
        let words: f64 = m.terms.iter().map(|t| t.words).sum();
        assert_eq!((msgs, words), (m.total.messages, m.total.words));
    }
    let r = comm_model(CommKind::HssRandomized, 1e4, 64.0, 100.0);
    let words: Vec<f64> = r.terms.iter().map(|t| t.words).collect();
    assert_eq!(words, vec![1e8 / 64.0, 100.0 * 1e4 / 8.0, 1e4]);
    let msgs: Vec<f64> = r.terms.iter().map(|t| t.messages).collect();
    assert_eq!(msgs, vec![64.0 * 6.0, 600.0, 3600.0]);
    let nr = comm_model(CommKind::HssNonrandomized, 1e4, 64.0, 100.0);
    assert_eq!(nr.total.messages, 64.0 + 100.0 * 36.0);
    assert_eq!(nr.total.words, 1e8 / 64.0 + 1e6 + 1e4 * 6.0);
}
