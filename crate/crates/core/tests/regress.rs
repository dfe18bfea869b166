use proptest::prelude::*;
use sketch_nla::matrix::{norm1, norm2, DenseMatrix};
use sketch_nla::regress::*;
use sketch_nla::rng::{normal, seeded};

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut r = seeded(seed, 1000);
    DenseMatrix::from_fn(rows, cols, |_, _| normal(&mut r))
}

fn gvec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = seeded(seed, 1001);
    (0..n).map(|_| normal(&mut r)).collect()
}

/// Gaussian elimination with partial pivoting on a small square system.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, p);
        rhs.swap(c, p);
        for i in c + 1..n {
            let f = m[i][c] / m[c][c];
            for j in c..n {
                m[i][j] -= f * m[c][j];
            }
            rhs[i] -= f * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[i][i];
    }
    Some(x)
}

fn normal_equations(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let g = a.t_matmul(a).unwrap();
    let m = (0..g.rows()).map(|i| g.row(i).to_vec()).collect();
    gauss_solve(m, a.t_matvec(b).unwrap()).unwrap()
}

/// Optimal ℓ1 cost by enumerating every d-subset of rows and interpolating it.
fn vertex_oracle(a: &DenseMatrix, b: &[f64]) -> f64 {
    let (n, d) = a.shape();
    assert_eq!(d, 3);
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = vec![a.row(i).to_vec(), a.row(j).to_vec(), a.row(k).to_vec()];
                if let Some(x) = gauss_solve(m, vec![b[i], b[j], b[k]]) {
                    best = best.min(l1_cost(a, b, &x));
                }
            }
        }
    }
    best
}

#[test]
fn exact_l2_examples() {
    let x = solve_l2_exact(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
    for (p, q) in x.iter().zip([1.0, 2.0, 3.0]) {
        assert!((p - q).abs() < 1e-14);
    }
    let x = solve_l2_exact(&DenseMatrix::from_rows(&[&[1.0], &[1.0]]), &[0.0, 2.0]).unwrap();
    assert!((x[0] - 1.0).abs() < 1e-14);
    let a = gaussian(40, 5, 1);
    let b = gvec(40, 2);
    let x = solve_l2_exact(&a, &b).unwrap();
    let oracle = normal_equations(&a, &b);
    assert!(x.iter().zip(&oracle).all(|(p, q)| (p - q).abs() <= 1e-8 * (1.0 + q.abs())));
}

#[test]
fn sketch_solve_consistent_system_is_exact() {
    let a = gaussian(500, 4, 3);
    let b = a.matvec(&[1.0, -2.0, 0.5, 3.0]).unwrap();
    let x = sketch_solve_l2(&a, &b, 0.5, 7).unwrap();
    assert!(l2_cost(&a, &b, &x) <= 0.5 * norm2(&b) * 1e-6);
}

#[test]
fn sketch_solve_identity_recovers_b() {
    let b = [3.0, -1.0, 2.0];
    // Seeds whose hash keeps the three columns apart give a full-rank sketch.
    let x = (0..20).find_map(|s| sketch_solve_l2(&DenseMatrix::identity(3), &b, 0.5, s).ok()).unwrap();
    assert!(x.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-12));
}

#[test]
fn sketch_solve_cost_ratio() {
    let mut good = 0;
    for s in 0..20 {
        let a = gaussian(2000, 5, 100 + s);
        let b = gvec(2000, 200 + s);
        let opt = l2_cost(&a, &b, &solve_l2_exact(&a, &b).unwrap());
        let x = sketch_solve_l2(&a, &b, 0.5, s).unwrap();
        if l2_cost(&a, &b, &x) <= 1.5 * opt {
            good += 1;
        }
    }
    assert!(good >= 19, "{good}/20");
}

#[test]
fn constrained_unconstrained_reduction() {
    let a = gaussian(300, 3, 4);
    let b = gvec(300, 5);
    let x1 = sketch_solve_l2(&a, &b, 0.5, 9).unwrap();
    let x2 = sketch_solve_l2_constrained(&a, &b, 0.5, 9, |sa, sb| solve_l2_exact(sa, sb)).unwrap();
    assert!(x1.iter().zip(&x2).all(|(p, q)| (p - q).abs() < 1e-10));
}

#[test]
fn constrained_to_a_line_matches_grid_search() {
    let a = gaussian(100, 2, 6);
    let b = gvec(100, 7);
    let line = |sa: &DenseMatrix, sb: &[f64]| -> sketch_nla::Result<Vec<f64>> {
        let c = sa.col(0);
        Ok(vec![c.iter().zip(sb).map(|(p, q)| p * q).sum::<f64>() / c.iter().map(|p| p * p).sum::<f64>(), 0.0])
    };
    let x = sketch_solve_l2_constrained(&a, &b, 0.5, 1, line).unwrap();
    let best = (-4000..=4000)
        .map(|i| l2_cost(&a, &b, &[i as f64 * 1e-3, 0.0]))
        .fold(f64::INFINITY, f64::min);
    assert!(l2_cost(&a, &b, &x) <= 1.5 * best);
}

/// Nonnegative least squares in two variables by KKT case enumeration.
fn nnls2(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let mut cands = vec![vec![0.0, 0.0]];
    if let Ok(x) = solve_l2_exact(a, b) {
        if x.iter().all(|&v| v >= 0.0) {
            cands.push(x);
        }
    }
    for j in 0..2 {
        let c = a.col(j);
        let t = c.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / c.iter().map(|p| p * p).sum::<f64>();
        let mut x = vec![0.0, 0.0];
        x[j] = t.max(0.0);
        cands.push(x);
    }
    cands.into_iter().min_by(|p, q| l2_cost(a, b, p).total_cmp(&l2_cost(a, b, q))).unwrap()
}

#[test]
fn constrained_nonnegative_matches_kkt_oracle() {
    let a = gaussian(200, 2, 8);
    let b: Vec<f64> = a.matvec(&[1.5, -2.0]).unwrap().iter().zip(gvec(200, 9)).map(|(p, q)| p + 0.3 * q).collect();
    let x = sketch_solve_l2_constrained(&a, &b, 0.5, 2, |sa, sb| Ok(nnls2(sa, sb))).unwrap();
    assert!(x.iter().all(|&v| v >= 0.0));
    let opt = l2_cost(&a, &b, &nnls2(&a, &b));
    assert!(l2_cost(&a, &b, &x) <= 1.5 * opt);
}

#[test]
fn preconditioned_orthonormal_identity_converges_in_one_step() {
    let q = sketch_nla::matrix::qr(&gaussian(60, 4, 10)).unwrap().q;
    let b = gvec(60, 11);
    let it = iterate_preconditioned(&q, &b, &DenseMatrix::identity(4), vec![0.0; 4], 1).unwrap();
    let exact = q.t_matvec(&b).unwrap();
    assert!(it[1].iter().zip(&exact).all(|(p, r)| (p - r).abs() < 1e-14));
}

#[test]
fn preconditioned_reaches_machine_precision() {
    let a = gaussian(1000, 8, 12);
    let b = gvec(1000, 13);
    let xs = solve_l2_exact(&a, &b).unwrap();
    let t = precond_solve_l2(&a, &b, 1e-10, 3).unwrap();
    assert!(t.cond <= 9.0 && t.kappa <= 9.0, "cond {}", t.cond);
    assert!(residual_gap(&a, &t.x, &t.iterates[0], &xs) <= 1e-8);
    let opt = l2_cost(&a, &b, &xs);
    assert!(t.residuals[1..].iter().all(|&r| r >= opt * (1.0 - 1e-12)));
    assert!(t.residuals.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    // Contraction of ‖A(x − x*)‖ per step.
    for w in t.iterates.windows(2) {
        let e = |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(&xs).map(|(p, q)| p - q).collect();
            norm2(&a.matvec(&d).unwrap())
        };
        if e(&w[0]) > 1e-12 * opt {
            assert!(e(&w[1]) <= 1.6 * e(&w[0]));
        }
    }
}

#[test]
fn l1_small_examples() {
    let s = solve_l1_small(&DenseMatrix::from_rows(&[&[1.0], &[1.0], &[1.0]]), &[0.0, 0.0, 10.0], 1e-10).unwrap();
    assert!(s.x[0].abs() < 1e-9 && (s.cost - 10.0).abs() < 1e-9);
    let s = solve_l1_small(&DenseMatrix::identity(2), &[3.0, -4.0], 1e-10).unwrap();
    assert!((s.x[0] - 3.0).abs() < 1e-12 && (s.x[1] + 4.0).abs() < 1e-12 && s.cost < 1e-12);
}

#[test]
fn l1_small_matches_vertex_enumeration() {
    for seed in 0..5 {
        let a = gaussian(50, 3, 300 + seed);
        let mut b = gvec(50, 400 + seed);
        b[seed as usize] += 20.0;
        let s = solve_l1_small(&a, &b, 1e-10).unwrap();
        let opt = vertex_oracle(&a, &b);
        assert!((s.cost - opt).abs() <= 1e-4, "seed {seed}: {} vs {}", s.cost, opt);
    }
}

#[test]
fn wcb_identity_is_auerbach() {
    let w = wcb_from_sketch(&DenseMatrix::identity(3), L1Embedding::Cauchy, 1);
    // A 3x3 identity admits no sketch with fewer rows than columns; any basis of R^3 works.
    let w = w.unwrap();
    let u = w.basis(&DenseMatrix::identity(3));
    assert!(w.alpha > 0.0 && u.rows() == 3);
}

#[test]
fn wcb_cauchy_alpha_and_beta() {
    let mut ok = 0;
    for s in 0..100 {
        let a = gaussian(400, 3, 500 + s);
        let w = wcb_from_sketch(&a, L1Embedding::Cauchy, s).unwrap();
        let u = w.basis(&a);
        let direct: f64 = (0..3).map(|j| norm1(&u.col(j))).sum();
        assert!((direct - w.alpha).abs() <= 1e-9 * direct);
        if w.alpha <= w.alpha_bound && w.beta_certified() {
            ok += 1;
        }
    }
    assert!(ok >= 90, "{ok}/100");
}

#[test]
fn wcb_exponential_builds() {
    let a = gaussian(400, 3, 9);
    let w = wcb_from_sketch(&a, L1Embedding::ExpCountSketch, 4).unwrap();
    assert!(w.alpha.is_finite() && w.beta > 0.0);
}

#[test]
fn l1_shares_track_exact_row_norms() {
    let mut a = gaussian(300, 3, 21);
    a.row_mut(7).iter_mut().for_each(|v| *v *= 200.0);
    let w = wcb_from_sketch(&a, L1Embedding::Cauchy, 2).unwrap();
    let est = l1_row_shares(&a, &w, 3).unwrap();
    let exact = exact_row_shares(&w.basis(&a));
    let ratio = est[7] / exact[7];
    assert!(ratio >= 1.0 / (4.0 * 3f64.sqrt()) && ratio <= 4.0 * 3f64.sqrt(), "{ratio}");
}

#[test]
fn l1_shares_uniform_for_identity_basis() {
    let a = DenseMatrix::identity(4);
    let w = WellConditionedBasis { rinv: DenseMatrix::identity(4), alpha: 4.0, beta: 1.0, alpha_bound: 4.0, sketch_rows: 4 };
    let est = l1_row_shares(&a, &w, 5).unwrap();
    assert!(est.iter().all(|&p| p >= 0.25 / 2.0 && p <= 0.25 * 2.0), "{est:?}");
}

#[test]
fn l1_sketched_consistent_system() {
    let a = gaussian(600, 3, 30);
    let b = a.matvec(&[1.0, 2.0, -1.0]).unwrap();
    let r = solve_l1_sketched(&a, &b, 0.5, L1Embedding::Cauchy, 1).unwrap();
    assert!(r.cost <= 0.5 * norm1(&b) * 1e-6);
}

#[test]
fn l1_sketched_scaling_equivariance() {
    let a = gaussian(800, 3, 31);
    let b = gvec(800, 32);
    let r1 = solve_l1_sketched(&a, &b, 0.5, L1Embedding::Cauchy, 5).unwrap();
    let r4 = solve_l1_sketched(&a.scale(4.0), &b.iter().map(|v| 4.0 * v).collect::<Vec<_>>(), 0.5, L1Embedding::Cauchy, 5)
        .unwrap();
    assert_eq!(r4.cost, 4.0 * r1.cost);
}

#[test]
fn l1_robust_to_outliers_where_l2_is_not() {
    let a = gaussian(1000, 3, 33);
    let mut b = a.matvec(&[1.0, -1.0, 2.0]).unwrap();
    let noise = gvec(1000, 34);
    b.iter_mut().zip(&noise).for_each(|(v, e)| *v += 0.1 * e);
    for i in (0..1000).step_by(100) {
        b[i] += 1e6;
    }
    let opt = solve_l1_small(&a, &b, 1e-10).unwrap().cost;
    let l1 = solve_l1_sketched(&a, &b, 0.5, L1Embedding::Cauchy, 2).unwrap();
    let l2x = solve_l2_exact(&a, &b).unwrap();
    assert!(l1.cost <= 1.5 * opt);
    let err = |x: &[f64]| norm2(&x.iter().zip([1.0, -1.0, 2.0]).map(|(p, q)| p - q).collect::<Vec<_>>());
    assert!(err(&l1.x) < 0.1 && err(&l2x) > 10.0, "{} {}", err(&l1.x), err(&l2x));
}

#[test]
fn l1_sampling_unbiased() {
    let a = gaussian(200, 2, 35);
    let w = wcb_from_sketch(&a, L1Embedding::Cauchy, 1).unwrap();
    let p = l1_sampling_probs(&a, &w, 0.9, 2).unwrap();
    let x = [0.7, -1.3];
    let ax = a.matvec(&x).unwrap();
    let truth = norm1(&ax);
    // E[Σ_i keep_i |a_i x| / p_i] = Σ_i |a_i x| exactly.
    let expect: f64 = ax.iter().zip(&p).map(|(v, pi)| if *pi > 0.0 { pi * v.abs() / pi } else { 0.0 }).sum();
    assert!((expect - truth).abs() <= 1e-9 * truth);
    let mut g = seeded(9, 9);
    let trials = 20000;
    let mut acc = 0.0;
    for _ in 0..trials {
        for (v, pi) in ax.iter().zip(&p) {
            if rand::Rng::random::<f64>(&mut g) < *pi {
                acc += v.abs() / pi;
            }
        }
    }
    assert!((acc / trials as f64 - truth).abs() <= 0.01 * truth);
}

#[test]
fn hyperplane_exact_fit() {
    let mut r = seeded(1, 2);
    let pts = DenseMatrix::from_fn(30, 2, |i, _| i as f64 + 0.0 * normal(&mut r));
    let f = l1_hyperplane_fit(&pts, 0.5, false, 1).unwrap();
    assert!(f.cost < 1e-9);
    assert!((f.w[0] + f.w[1]).abs() < 1e-9);
}

#[test]
fn hyperplane_noisy_line_matches_oracle() {
    let mut r = seeded(3, 4);
    let pts = DenseMatrix::from_fn(200, 2, |_, _| 0.0);
    let mut pts = pts;
    for i in 0..200 {
        let t = normal(&mut r);
        let e = normal(&mut r).signum() * (-rand::Rng::random::<f64>(&mut r).max(1e-300).ln()) * 0.05;
        pts[(i, 0)] = t;
        pts[(i, 1)] = 2.0 * t + e;
    }
    let f = l1_hyperplane_fit(&pts, 0.5, false, 6).unwrap();
    let best = (0..2)
        .map(|j| {
            let o = 1 - j;
            let target: Vec<f64> = pts.col(j).iter().map(|v| -v).collect();
            solve_l1_small(&pts.select_cols(&[o]), &target, 1e-10).unwrap().cost
        })
        .fold(f64::INFINITY, f64::min);
    assert!(f.cost <= 1.5 * best, "{} vs {}", f.cost, best);
}

#[test]
fn hyperplane_affine_translation_invariance() {
    let mut r = seeded(5, 6);
    let mut pts = DenseMatrix::zeros(150, 3);
    for i in 0..150 {
        let (u, v) = (normal(&mut r), normal(&mut r));
        pts[(i, 0)] = u;
        pts[(i, 1)] = v;
        pts[(i, 2)] = 0.5 * u - v + 0.1 * normal(&mut r);
    }
    let shift = [3.0, -2.0, 7.0];
    let moved = DenseMatrix::from_fn(150, 3, |i, j| pts[(i, j)] + shift[j]);
    let f0 = l1_hyperplane_fit(&pts, 0.5, true, 8).unwrap();
    let f1 = l1_hyperplane_fit(&moved, 0.5, true, 8).unwrap();
    assert!((f0.cost - f1.cost).abs() <= 1e-8 * (1.0 + f0.cost), "{} vs {}", f0.cost, f1.cost);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_l2_normal_equations(n in 5usize..60, d in 1usize..5, seed in any::<u64>()) {
        prop_assume!(n >= d);
        let a = gaussian(n, d, seed);
        let b = gvec(n, seed ^ 3);
        let x = solve_l2_exact(&a, &b).unwrap();
        let r: Vec<f64> = a.matvec(&x).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
        prop_assert!(norm2(&a.t_matvec(&r).unwrap()) <= 1e-8 * a.frobenius_norm() * norm2(&b));
    }

    #[test]
    fn l1_small_never_worse_than_least_squares(n in 4usize..40, seed in any::<u64>()) {
        let a = gaussian(n, 2, seed);
        let b = gvec(n, seed ^ 5);
        let s = solve_l1_small(&a, &b, 1e-10).unwrap();
        let l2x = solve_l2_exact(&a, &b).unwrap();
        prop_assert!(s.cost <= l1_cost(&a, &b, &l2x) * (1.0 + 1e-12));
        prop_assert!((s.cost - l1_cost(&a, &b, &s.x)).abs() <= 1e-9 * (1.0 + s.cost));
    }
}
