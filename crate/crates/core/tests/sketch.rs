use proptest::prelude::*;
use sketch_nla::matrix::{norm2, qr, svd::singular_values, DenseMatrix, SparseMatrix};
use sketch_nla::rng::{normal, seeded};
use sketch_nla::sketch::*;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut r = seeded(seed, 1000);
    DenseMatrix::from_fn(rows, cols, |_, _| normal(&mut r))
}

fn unit(n: usize, seed: u64) -> Vec<f64> {
    let mut r = seeded(seed, 1001);
    let v: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let s = norm2(&v);
    v.into_iter().map(|x| x / s).collect()
}

fn identity_sketch(n: usize) -> SketchOperator {
    SketchOperator {
        kind: SketchKind::Gaussian,
        out_dim: n,
        in_dim: n,
        seed: 0,
        payload: Payload::Dense(DenseMatrix::identity(n)),
        wasteful: false,
    }
}

/// Sylvester construction with ±1 entries.
fn hadamard(n: usize) -> DenseMatrix {
    let mut h = DenseMatrix::from_rows(&[&[1.0]]);
    while h.rows() < n {
        let top = h.hstack(&h).unwrap();
        let bot = h.hstack(&h.scale(-1.0)).unwrap();
        h = top.vstack(&bot).unwrap();
    }
    h
}

#[test]
fn sparse_embedding_shape_matches_displayed_example() {
    let s = make_sketch(SketchKind::SparseEmbedding, 4, 5, 17).unwrap();
    let m = s.to_dense();
    assert_eq!(m.shape(), (4, 5));
    for j in 0..5 {
        let nz: Vec<f64> = m.col(j).into_iter().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert_eq!(nz[0].abs(), 1.0);
    }
}

#[test]
fn sparse_embedding_on_identity_places_signed_units() {
    let s = make_sparse_embedding(7, 12, 1, 3).unwrap();
    let Payload::Hashed { rows, values } = &s.payload else { panic!("sparse payload") };
    let m = s.apply(&DenseMatrix::identity(12)).unwrap();
    for i in 0..12 {
        for r in 0..7 {
            let want = if r == rows[i][0] { values[i][0] } else { 0.0 };
            assert_eq!(m[(r, i)], want);
        }
    }
}

#[test]
fn sparse_embedding_with_several_nonzeros() {
    let s = make_sparse_embedding(8, 20, 3, 5).unwrap();
    let m = s.to_dense();
    for j in 0..20 {
        let col = m.col(j);
        assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 3);
        assert!((norm2(&col) - 1.0).abs() < 1e-15);
    }
    assert!(make_sparse_embedding(40, 20, 1, 5).unwrap().wasteful);
}

#[test]
fn gaussian_one_by_one_scales_by_a_normal_draw() {
    let s = make_sketch(SketchKind::Gaussian, 1, 1, 9).unwrap();
    let g = s.to_dense()[(0, 0)];
    assert_eq!(s.apply_vec(&[2.5]).unwrap(), vec![2.5 * g]);
}

#[test]
fn entry_distributions() {
    let s = make_sketch(SketchKind::Sign, 16, 30, 1).unwrap().to_dense();
    assert!(s.data().iter().all(|v| (v.abs() - 0.25).abs() < 1e-15));
    let g = make_sketch(SketchKind::Gaussian, 100, 200, 2).unwrap().to_dense();
    let var = g.data().iter().map(|v| v * v).sum::<f64>() / 20000.0;
    assert!((var * 100.0 - 1.0).abs() < 0.05, "{var}");
    let e = make_sketch(SketchKind::ExpReciprocalDiag, 50, 50, 3).unwrap();
    assert!(matches!(&e.payload, Payload::Diag(d) if d.iter().all(|v| *v > 0.0)));
    assert!(make_sketch(SketchKind::ExpReciprocalDiag, 40, 50, 3).is_err());
}

#[test]
fn srht_pads_and_samples_in_range() {
    let s = make_sketch(SketchKind::Srht, 6, 11, 4).unwrap();
    let Payload::Srht { n_pad, sampled, .. } = &s.payload else { panic!("srht payload") };
    assert_eq!(*n_pad, 16);
    assert_eq!(sampled.len(), 6);
    assert!(sampled.iter().all(|&i| i < 16));
    let mut u = sampled.clone();
    u.sort();
    u.dedup();
    assert_eq!(u.len(), 6);
    assert!(make_sketch(SketchKind::Srht, 17, 11, 4).is_err());
}

#[test]
fn srht_matches_explicit_hadamard_2x2() {
    let s = make_sketch(SketchKind::Srht, 2, 2, 8).unwrap();
    let Payload::Srht { signs, sampled, .. } = &s.payload else { panic!("srht payload") };
    let h = hadamard(2);
    let dx = [signs[0] * 1.0, signs[1] * 0.0];
    let full = h.matvec(&dx).unwrap();
    let y = s.apply_vec(&[1.0, 0.0]).unwrap();
    for (k, &i) in sampled.iter().enumerate() {
        assert!((y[k] - full[i] / 2f64.sqrt()).abs() < 1e-15);
    }
}

#[test]
fn srht_full_sample_is_orthogonal() {
    for n in [2usize, 4, 8, 16, 32, 64] {
        let s = make_sketch(SketchKind::Srht, n, n, n as u64).unwrap();
        let m = s.to_dense();
        let g = m.t_matmul(&m).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-12);
            }
        }
        // Against the explicit (1/√n) H D.
        let Payload::Srht { signs, sampled, .. } = &s.payload else { panic!() };
        let hd = hadamard(n).scale_cols(signs).scale(1.0 / (n as f64).sqrt());
        let picked = hd.select_rows(sampled);
        assert!(picked.sub(&m).unwrap().frobenius_norm() < 1e-12);
    }
}

#[test]
fn gaussian_norm_concentration() {
    let x = unit(1000, 5);
    let ok = (0..100)
        .filter(|&s| {
            let y = make_sketch(SketchKind::Gaussian, 400, 1000, s).unwrap().apply_vec(&x).unwrap();
            (0.8..=1.2).contains(&norm2(&y).powi(2))
        })
        .count();
    assert!(ok >= 95, "{ok}");
}

#[test]
fn identity_sketch_has_zero_distortion() {
    let a = gaussian(20, 3, 1);
    let r = verify_embedding(&identity_sketch(20), &a, 1e-12).unwrap();
    assert!(r.distortion < 1e-12 && r.norm_distortion < 1e-12);
}

#[test]
fn verify_embedding_agrees_with_direct_gram() {
    let a = gaussian(60, 3, 2);
    let s = make_sketch(SketchKind::Gaussian, 30, 60, 3).unwrap();
    let rep = verify_embedding(&s, &a, 1e-12).unwrap();
    // Oracle: eigenvalues of QᵀSᵀSQ with Q from an independent QR.
    let q = qr(&a).unwrap().q;
    let sq = s.apply(&q).unwrap();
    let ev = sketch_nla::matrix::sym_eigvals(&sq.t_matmul(&sq).unwrap()).unwrap();
    let direct = ev.iter().fold(0.0f64, |m, l| m.max((l - 1.0).abs()));
    assert!((rep.distortion - direct).abs() < 1e-10);
}

#[test]
fn gaussian_embedding_with_many_rows() {
    let ok = (0..100)
        .filter(|&s| {
            let a = gaussian(500, 4, 100 + s);
            let op = make_sketch(SketchKind::Gaussian, 400, 500, s).unwrap();
            verify_embedding(&op, &a, 1e-12).unwrap().distortion <= 0.5
        })
        .count();
    assert!(ok >= 99, "{ok}");
}

#[test]
fn sparse_embedding_contract() {
    let (d, delta, eps) = (6usize, 0.1, 0.5);
    let r = ((d * d) as f64 / (delta * eps * eps)).ceil() as usize;
    let ok = (0..100)
        .filter(|&s| {
            let a = gaussian(2000, d, 300 + s);
            let op = make_sparse_embedding(r, 2000, 1, s).unwrap();
            verify_embedding(&op, &a, 1e-12).unwrap().distortion <= eps
        })
        .count();
    assert!(ok >= 90, "{ok}");
}

#[test]
fn approx_matmul_identity_is_exact() {
    let a = gaussian(10, 3, 1);
    let b = gaussian(10, 2, 2);
    let c = approx_matmul(&identity_sketch(10), &a, &b).unwrap();
    assert!(c.sub(&a.t_matmul(&b).unwrap()).unwrap().frobenius_norm() < 1e-13);
}

#[test]
fn approx_matmul_unit_vectors() {
    let e = DenseMatrix::from_fn(100, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let r = (2.0f64 / (0.25 * 0.1)).ceil() as usize;
    let ok = (0..100)
        .filter(|&s| {
            let c = approx_matmul(&make_sparse_embedding(r, 100, 1, s).unwrap(), &e, &e).unwrap();
            (c[(0, 0)] - 1.0).abs() <= 1.5
        })
        .count();
    assert!(ok >= 90);
}

#[test]
fn approx_matmul_failure_rate() {
    let a = gaussian(200, 3, 3);
    let b = gaussian(200, 2, 4);
    let exact = a.t_matmul(&b).unwrap();
    let (eps, delta) = (0.5, 0.1);
    let r = (2.0f64 / (eps * eps * delta)).ceil() as usize;
    let bound = 3.0 * eps * a.frobenius_norm() * b.frobenius_norm();
    let bad = (0..500)
        .filter(|&s| {
            let c = approx_matmul(&make_sparse_embedding(r, 200, 1, s).unwrap(), &a, &b).unwrap();
            c.sub(&exact).unwrap().frobenius_norm() > bound
        })
        .count();
    assert!(bad as f64 / 500.0 <= delta, "{bad}");
}

#[test]
fn jl_moments() {
    let x = unit(200, 6);
    let id = jl_moment_estimate(|_, v| Ok(v.to_vec()), &x, 2, 100).unwrap();
    assert!(id < 1e-24);
    let r = (2.0f64 / (0.25 * 0.1)).ceil() as usize;
    let sparse = jl_moment_estimate(|s, v| make_sparse_embedding(r, 200, 1, s)?.apply_vec(v), &x, 2, 400).unwrap();
    assert!(sparse <= 2.0 * 0.025, "{sparse}");
    let gauss = jl_moment_estimate(|s, v| make_sketch(SketchKind::Gaussian, 50, 200, s)?.apply_vec(v), &x, 2, 400).unwrap();
    assert!((gauss - 0.04).abs() <= 0.02, "{gauss}");
    assert!(jl_moment_estimate(|_, v| Ok(v.to_vec()), &x, 3, 100).is_err());
}

#[test]
fn boost_accepts_identity_family() {
    let q = qr(&gaussian(12, 3, 7)).unwrap().q;
    let ops = vec![identity_sketch(12), identity_sketch(12), identity_sketch(12)];
    let b = boost_with(&q, 0.5, ops).unwrap();
    assert_eq!(b.chosen, 0);
}

#[test]
fn boost_returns_certified_embeddings() {
    for s in 0..100 {
        let a = gaussian(300, 4, 900 + s);
        let b = boost_embedding(&a, 0.5, 0.01, s).unwrap();
        let rep = verify_embedding(&b.operator, &a, 1e-12).unwrap();
        assert!(rep.distortion <= 0.5, "seed {s}: {}", rep.distortion);
    }
}

#[test]
fn boost_cross_check_agrees_on_random_directions() {
    let a = gaussian(300, 4, 11);
    let b1 = boost_embedding(&a, 0.5, 0.01, 1).unwrap();
    let b2 = boost_embedding(&a, 0.5, 0.01, 2).unwrap();
    let mut g = seeded(3, 3);
    for _ in 0..50 {
        let x: Vec<f64> = (0..4).map(|_| normal(&mut g)).collect();
        let n1 = norm2(&b1.sketched.matvec(&x).unwrap()).powi(2);
        let n2 = norm2(&b2.sketched.matvec(&x).unwrap()).powi(2);
        assert!((n1 / n2 - 1.0).abs() <= 1.0, "{n1} {n2}");
    }
}

#[test]
fn sparse_input_matches_dense() {
    let a = gaussian(40, 3, 12);
    let sp = SparseMatrix::from_dense(&a);
    for kind in [SketchKind::Gaussian, SketchKind::SparseEmbedding, SketchKind::Srht, SketchKind::Sign] {
        let s = make_sketch(kind, 16, 40, 5).unwrap();
        let d = s.apply(&a).unwrap().sub(&s.apply_sparse(&sp).unwrap()).unwrap().frobenius_norm();
        assert!(d < 1e-12, "{kind}");
    }
}

#[test]
fn empirical_failure_rates_over_300_trials() {
    let (d, delta, eps, trials) = (4usize, 0.1, 0.5, 300);
    let allowed = delta + 3.0 * (delta / trials as f64).sqrt();
    let a = gaussian(1024, d, 13);
    let basis = qr(&a).unwrap().q;
    let sparse_r = ((d * d) as f64 / (delta * eps * eps)).ceil() as usize;
    let gauss_r = 100 * d;
    for (kind, r) in [(SketchKind::SparseEmbedding, sparse_r), (SketchKind::Gaussian, gauss_r), (SketchKind::Srht, gauss_r)] {
        let bad = (0..trials as u64)
            .filter(|&s| {
                let op = make_sketch(kind, r, 1024, s).unwrap();
                embedding_report_for_basis(&op, &basis).unwrap().distortion > eps
            })
            .count();
        assert!(bad as f64 / trials as f64 <= allowed, "{kind}: {bad}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn deterministic(kind in prop::sample::select(vec![
        SketchKind::Gaussian, SketchKind::SparseEmbedding, SketchKind::Srht, SketchKind::Sign, SketchKind::Cauchy,
    ]), n in 1usize..40, seed in any::<u64>()) {
        let r = (n / 2).max(1);
        let s1 = make_sketch(kind, r, n, seed).unwrap();
        let s2 = make_sketch(kind, r, n, seed).unwrap();
        prop_assert_eq!(&s1, &s2);
        let a = gaussian(n, 2, seed);
        let (x, y) = (s1.apply(&a).unwrap(), s2.apply(&a).unwrap());
        prop_assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn sparse_embedding_is_exactly_linear(n in 1usize..50, r in 1usize..20, seed in any::<u64>()) {
        let s = make_sparse_embedding(r, n, 1, seed).unwrap();
        // Integer-valued inputs keep every sum exact.
        let mut g = seeded(seed, 2);
        let a = DenseMatrix::from_fn(n, 3, |_, _| (normal(&mut g) * 100.0).round());
        let b = DenseMatrix::from_fn(n, 3, |_, _| (normal(&mut g) * 100.0).round());
        let lhs = s.apply(&a.add(&b).unwrap()).unwrap();
        let rhs = s.apply(&a).unwrap().add(&s.apply(&b).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn apply_agrees_with_dense_form(kind in prop::sample::select(vec![
        SketchKind::Gaussian, SketchKind::SparseEmbedding, SketchKind::Srht,
    ]), n in 2usize..30, seed in any::<u64>()) {
        let r = (n / 2).max(1);
        let s = make_sketch(kind, r, n, seed).unwrap();
        let a = gaussian(n, 3, seed ^ 1);
        let fast = s.apply(&a).unwrap();
        let slow = s.to_dense().matmul(&a).unwrap();
        prop_assert!(fast.sub(&slow).unwrap().frobenius_norm() <= 1e-12 * (1.0 + slow.frobenius_norm()));
    }

    #[test]
    fn distortion_matches_singular_values(n in 8usize..40, seed in any::<u64>()) {
        let a = gaussian(n, 2, seed);
        let s = make_sketch(SketchKind::Gaussian, n, n, seed ^ 9).unwrap();
        let rep = verify_embedding(&s, &a, 1e-12).unwrap();
        let sv = singular_values(&s.apply(&qr(&a).unwrap().q).unwrap()).unwrap();
        let want = sv.iter().fold(0.0f64, |m, x| m.max((x * x - 1.0).abs()));
        prop_assert!((rep.distortion - want).abs() <= 1e-9);
    }
}
