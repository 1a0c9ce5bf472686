use hss::compress::generate_random;
use hss::dense::{id_compress, id_compress_rows, lq_factor, matmul, plu_factor, solve_plu, Matrix, Op};
use proptest::prelude::*;

fn low_rank(m: usize, n: usize, k: usize, seed: u64) -> Matrix {
    let a = generate_random(m, k, seed, 0);
    let b = generate_random(k, n, seed, 1000);
    matmul(&a, Op::N, &b, Op::N).unwrap()
}

fn naive(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn id_recovers_exact_rank(m in 2usize..40, n in 2usize..40, k in 1usize..40, seed in any::<u64>()) {
        let k = k.min(m).min(n);
        let y = low_rank(m, n, k, seed);
        let id = id_compress(&y, 1e-12, None).unwrap();
        prop_assert_eq!(id.rank, k);
        let approx = matmul(&y.select(&(0..m).collect::<Vec<_>>(), &id.j), Op::N, &id.x, Op::N).unwrap();
        prop_assert!(y.sub(&approx).norm_fro() <= 1e-10 * y.norm_fro());
    }

    #[test]
    fn id_rank_is_monotone_in_eps(m in 2usize..30, n in 2usize..30, seed in any::<u64>(), e1 in -14.0f64..-1.0, e2 in -14.0f64..-1.0) {
        // geometrically decaying spectrum so that eps matters
        let mut y = generate_random(m, n, seed, 0);
        for j in 0..n {
            for i in 0..m {
                y[(i, j)] *= 0.3f64.powi(j as i32);
            }
        }
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let r_lo = id_compress(&y, 10f64.powf(lo), None).unwrap().rank;
        let r_hi = id_compress(&y, 10f64.powf(hi), None).unwrap().rank;
        prop_assert!(r_lo >= r_hi);
    }

    #[test]
    fn id_is_deterministic(m in 1usize..20, n in 1usize..20, seed in any::<u64>()) {
        let y = generate_random(m, n, seed, 0);
        let a = id_compress(&y, 1e-8, None).unwrap();
        let b = id_compress(&y, 1e-8, None).unwrap();
        prop_assert_eq!(a.j, b.j);
        prop_assert_eq!(a.x, b.x);
    }

    #[test]
    fn row_id_selects_rows(m in 2usize..30, n in 2usize..30, k in 1usize..10, seed in any::<u64>()) {
        let k = k.min(m).min(n);
        let s = low_rank(m, n, k, seed);
        let id = id_compress_rows(&s, 1e-12, None).unwrap();
        prop_assert_eq!(id.rank, k);
        // S ≈ Xᵀ S(J, :)
        let approx = matmul(&id.x, Op::T, &s.select_rows(&id.j), Op::N).unwrap();
        prop_assert!(s.sub(&approx).norm_fro() <= 1e-10 * s.norm_fro());
    }

    #[test]
    fn lq_reconstructs(m in 1usize..25, n in 1usize..25, k in 0usize..25, seed in any::<u64>()) {
        let w = if k == 0 || k >= m.min(n) { generate_random(m, n, seed, 0) } else { low_rank(m, n, k, seed) };
        let lq = lq_factor(&w);
        let q = &lq.q;
        prop_assert_eq!(q.shape(), (n, n));
        let qqt = matmul(q, Op::N, q, Op::T).unwrap();
        prop_assert!(qqt.sub(&Matrix::identity(n)).norm_fro() <= 1e-12 * (n as f64).max(1.0));
        let mut l0 = Matrix::zeros(m, n);
        l0.set_block(0, 0, &lq.l);
        let back = matmul(&l0, Op::N, q, Op::N).unwrap();
        prop_assert!(w.sub(&back).norm_fro() <= 1e-12 * w.norm_fro().max(1.0));
        for i in 0..lq.l.rows().min(lq.l.cols()) {
            prop_assert!(lq.l[(i, i)] >= 0.0);
        }
    }

    #[test]
    fn gemm_matches_naive(m in 0usize..12, k in 0usize..12, n in 0usize..12, seed in any::<u64>()) {
        let a = generate_random(m, k, seed, 0);
        let b = generate_random(k, n, seed, 50);
        let want = naive(&a, &b);
        prop_assert!(matmul(&a, Op::N, &b, Op::N).unwrap().sub(&want).max_abs() <= 1e-12);
        let at = a.transpose();
        let bt = b.transpose();
        prop_assert!(matmul(&at, Op::T, &bt, Op::T).unwrap().sub(&want).max_abs() <= 1e-12);
    }

    #[test]
    fn plu_solves(n in 1usize..30, seed in any::<u64>()) {
        let mut a = generate_random(n, n, seed, 0);
        for i in 0..n {
            a[(i, i)] += n as f64;
        }
        let b = generate_random(n, 2, seed, 99);
        let x = solve_plu(&plu_factor(&a).unwrap(), &b).unwrap();
        let r = matmul(&a, Op::N, &x, Op::N).unwrap().sub(&b);
        prop_assert!(r.norm_fro() <= 1e-12 * b.norm_fro() * n as f64);
    }
}
