use rand::Rng;
use serde::{Deserialize, Serialize};

use super::check_problem;
use crate::rng::with_reseed;
use crate::constants::{
    BETA_PROBES, CAUCHY_ROWS, CAUCHY_SCALE, EXP_ROWS, EXP_SCALE, L1_GAUSSIAN_WIDTH, L1_SAMPLES,
};
use crate::error::{Error, Result};
use crate::matrix::qr::solve_upper;
use crate::matrix::svd::{pinv_default, svd};
use crate::matrix::{default_rank_tol, norm1, qr, DenseMatrix};
use crate::rng;
use crate::sketch::{make_sketch, make_sparse_embedding, SketchKind};

pub fn l1_cost(a: &DenseMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.matvec(x).expect("x matches columns");
    ax.iter().zip(b).map(|(p, q)| (p - q).abs()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum L1Embedding {
    Cauchy,
    /// Sparse embedding composed with a diagonal of reciprocal exponentials.
    ExpCountSketch,
}

impl std::str::FromStr for L1Embedding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cauchy" => Ok(L1Embedding::Cauchy),
            "exp" | "exponential" => Ok(L1Embedding::ExpCountSketch),
            other => Err(Error::InvalidArgument(format!("unknown ℓ1 embedding `{other}`"))),
        }
    }
}

/// `U = A R⁻¹`, held implicitly through `rinv`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WellConditionedBasis {
    pub rinv: DenseMatrix,
    /// `Σ_j ‖U e_j‖₁`.
    pub alpha: f64,
    /// Largest `‖x‖_∞ / ‖U x‖₁` over the probe vectors.
    pub beta: f64,
    /// The bound on `alpha` implied by the embedding's distortion.
    pub alpha_bound: f64,
    pub sketch_rows: usize,
}

impl WellConditionedBasis {
    pub fn beta_certified(&self) -> bool {
        self.beta <= 1.0 + 1e-12
    }

    pub fn basis(&self, a: &DenseMatrix) -> DenseMatrix {
        a.matmul(&self.rinv).expect("basis built for this matrix")
    }
}

fn ln1(x: f64) -> f64 {
    x.ln().max(1.0)
}

/// Well-conditioned basis from QR of a contracting ℓ1 embedding `SA`.
pub fn wcb_from_sketch(a: &DenseMatrix, kind: L1Embedding, seed: u64) -> Result<WellConditionedBasis> {
    let (n, d) = a.shape();
    if d == 0 || n < d {
        return Err(Error::Dimension(format!("basis needs n >= d >= 1, got {n}x{d}")));
    }
    let df = d as f64;
    with_reseed(seed, |s| {
        let (sa, r, kappa) = match kind {
            L1Embedding::Cauchy => {
                let r = ((CAUCHY_ROWS * df * ln1(df)).ceil() as usize).max(d + 1);
                let rd = (r * d) as f64;
                let c = CAUCHY_SCALE * df * rd.ln().max(1.0);
                let sa = make_sketch(SketchKind::Cauchy, r, n, s)?.apply(a)?.scale(1.0 / (r as f64 * c));
                (sa, r, 4.0 * c)
            }
            L1Embedding::ExpCountSketch => {
                let r = ((EXP_ROWS * df * ln1(df).powi(2)).ceil() as usize).max(d + 1);
                let diag = make_sketch(SketchKind::ExpReciprocalDiag, n, n, rng::derive(s, 1))?;
                let cs = make_sparse_embedding(r, n, 1, rng::derive(s, 2))?;
                let c = EXP_SCALE * df * ln1(df);
                let sa = cs.apply(&diag.apply(a)?)?.scale(1.0 / c);
                (sa, r, c * df * ln1(df).powf(1.5))
            }
        };
        let f = qr(&sa)?;
        let rinv = if f.rank_deficient { reduced_rinv(a, &sa)? } else { f.r_inverse()? };
        let k = rinv.cols();
        let u = a.matmul(&rinv)?;
        let alpha = (0..k).map(|j| norm1(&u.col(j))).sum();
        let mut g = rng::seeded(s, 31);
        let mut beta: f64 = 0.0;
        for p in 0..BETA_PROBES + k {
            let x: Vec<f64> = if p < k {
                (0..k).map(|i| if i == p { 1.0 } else { 0.0 }).collect()
            } else {
                (0..k).map(|_| rng::normal(&mut g)).collect()
            };
            let inf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            beta = beta.max(inf / norm1(&u.matvec(&x)?));
        }
        Ok(WellConditionedBasis { rinv, alpha, beta, alpha_bound: kappa * (r as f64).sqrt() * k as f64, sketch_rows: r })
    })
}

/// `V_k Σ_k⁻¹` from the SVD of `SA`, for an `A` without full column rank.
/// Fails when the sketch lost rank that `A` has.
fn reduced_rinv(a: &DenseMatrix, sa: &DenseMatrix) -> Result<DenseMatrix> {
    let f = svd(sa, default_rank_tol(sa.rows(), sa.cols()))?;
    let k = f.rank();
    if k == 0 || k < svd(a, default_rank_tol(a.rows(), a.cols()))?.rank() {
        return Err(Error::RankDeficient(format!("{}x{} ℓ1 sketch", sa.rows(), sa.cols())));
    }
    let inv: Vec<f64> = f.sigma[..k].iter().map(|s| 1.0 / s).collect();
    Ok(f.v().select_cols(&(0..k).collect::<Vec<_>>()).scale_cols(&inv))
}

/// Estimated `‖U_i‖₁` shares, normalised to sum to one, via `A (R⁻¹ G)` with Gaussian `G`.
pub fn l1_row_shares(a: &DenseMatrix, basis: &WellConditionedBasis, seed: u64) -> Result<Vec<f64>> {
    let n = a.rows();
    let k = basis.rinv.cols();
    let t = ((L1_GAUSSIAN_WIDTH * (n.max(2) as f64).ln()).ceil() as usize).max(1);
    let mut g = rng::seeded(seed, 37);
    let sd = 1.0 / (t as f64).sqrt();
    let gm = DenseMatrix::from_fn(k, t, |_, _| sd * rng::normal(&mut g));
    let w = a.matmul(&basis.rinv.matmul(&gm)?)?;
    let norms: Vec<f64> = (0..n).map(|i| norm1(w.row(i))).collect();
    let total: f64 = norms.iter().sum();
    if total == 0.0 {
        return Err(Error::RankDeficient("all estimated row norms are zero".into()));
    }
    Ok(norms.into_iter().map(|v| v / total).collect())
}

/// Expected sample count `r = C ε⁻² d^{2.5} / ζ` with `ζ = 1/(4d)`.
pub fn l1_sample_target(d: usize, eps: f64) -> f64 {
    let df = d as f64;
    L1_SAMPLES * df.powf(2.5) * 4.0 * df / (eps * eps)
}

/// `p_i = min(1, r · share_i)`.
pub fn l1_sampling_probs(a: &DenseMatrix, basis: &WellConditionedBasis, eps: f64, seed: u64) -> Result<Vec<f64>> {
    let r = l1_sample_target(a.cols(), eps);
    Ok(l1_row_shares(a, basis, seed)?.into_iter().map(|s| (r * s).min(1.0)).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct L1Solution {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn weighted_lstsq(a: &DenseMatrix, b: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let aw = a.scale_rows(&sw);
    let bw: Vec<f64> = b.iter().zip(&sw).map(|(p, q)| p * q).collect();
    let f = qr(&aw)?;
    if f.rank_deficient {
        return pinv_default(&aw)?.matvec(&bw);
    }
    solve_upper(&f.r, &f.q.t_matvec(&bw)?)
}

fn huber(r: &[f64], mu: f64) -> f64 {
    r.iter()
        .map(|v| {
            let a = v.abs();
            if a < mu {
                a * a / (2.0 * mu) + mu / 2.0
            } else {
                a
            }
        })
        .sum()
}

fn residual(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    a.matvec(x).expect("dims").iter().zip(b).map(|(p, q)| p - q).collect()
}

/// Least absolute deviations: smoothed IRLS followed by exact vertex refinement.
pub fn solve_l1_small(a: &DenseMatrix, b: &[f64], tol: f64) -> Result<L1Solution> {
    check_problem(a, b)?;
    let n = a.rows();
    let scale = norm1(b) / n as f64;
    if scale == 0.0 {
        return Ok(L1Solution { x: vec![0.0; a.cols()], cost: 0.0, iterations: 0, converged: true });
    }
    let mut x = pinv_default(a)?.matvec(b)?;
    let mut r = residual(a, b, &x);
    let mut best = (norm1(&r), x.clone());
    let mut mu = scale;
    let mu_min = scale * tol.max(1e-14) * 1e-3;
    let mut iterations = 0;
    let mut converged = true;
    while mu >= mu_min {
        let mut f = huber(&r, mu);
        let mut settled = false;
        for _ in 0..100 {
            iterations += 1;
            let w: Vec<f64> = r.iter().map(|v| 1.0 / v.abs().max(mu)).collect();
            let xn = weighted_lstsq(a, b, &w)?;
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let xt: Vec<f64> = x.iter().zip(&xn).map(|(p, q)| p + step * (q - p)).collect();
                let rt = residual(a, b, &xt);
                let ft = huber(&rt, mu);
                if ft <= f {
                    accepted = Some((xt, rt, ft));
                    break;
                }
                step *= 0.5;
            }
            let Some((xt, rt, ft)) = accepted else {
                settled = true;
                break;
            };
            let gain = f - ft;
            x = xt;
            r = rt;
            f = ft;
            let c = norm1(&r);
            if c < best.0 {
                best = (c, x.clone());
            }
            if gain <= 1e-13 * f {
                settled = true;
                break;
            }
        }
        converged &= settled;
        mu /= 10.0;
    }
    let (cost, x) = vertex_refine(a, b, best.1)?;
    Ok(L1Solution { x, cost, iterations, converged })
}

/// Moves to a vertex interpolating `d` rows, then pivots until no edge descends.
fn vertex_refine(a: &DenseMatrix, b: &[f64], x0: Vec<f64>) -> Result<(f64, Vec<f64>)> {
    let (n, d) = a.shape();
    let start_cost = l1_cost(a, b, &x0);
    let r0 = residual(a, b, &x0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| r0[i].abs().total_cmp(&r0[j].abs()));
    let Some(mut basis) = independent_rows(a, &order, d) else {
        return Ok((start_cost, x0));
    };
    let Some(mut x) = solve_rows(a, b, &basis) else {
        return Ok((start_cost, x0));
    };
    let mut cost = l1_cost(a, b, &x);
    for _ in 0..10 * n + 100 {
        let ab = a.select_rows(&basis);
        let Ok(binv) = crate::matrix::svd::pinv_default(&ab) else { break };
        let r = residual(a, b, &x);
        let in_basis = |i: usize| basis.contains(&i);
        let tiny = 1e-12 * b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut g = vec![0.0; d];
        for i in (0..n).filter(|&i| !in_basis(i)) {
            if r[i].abs() > tiny {
                crate::matrix::axpy(r[i].signum(), a.row(i), &mut g);
            }
        }
        // A_Bᵀ λ = g.
        let lambda = binv.t_matvec(&g)?;
        let mut moved = false;
        let mut cand: Vec<usize> = (0..d).filter(|&j| lambda[j].abs() > 1.0 + 1e-10).collect();
        cand.sort_by(|&p, &q| lambda[q].abs().total_cmp(&lambda[p].abs()));
        for j in cand {
            let s = -lambda[j].signum();
            let dir: Vec<f64> = binv.col(j).iter().map(|v| s * v).collect();
            let ad = a.matvec(&dir)?;
            // Slope at 0+ and breakpoints along the ray.
            let mut slope = 0.0;
            let mut mass = 0.0;
            let mut breaks = Vec::new();
            for i in 0..n {
                if ad[i].abs() <= 1e-14 * norm1(a.row(i)).max(1e-300) {
                    continue;
                }
                mass += ad[i].abs();
                if r[i].abs() <= tiny {
                    slope += ad[i].abs();
                } else {
                    slope += r[i].signum() * ad[i];
                    let t = -r[i] / ad[i];
                    if t > 0.0 {
                        breaks.push((t, i));
                    }
                }
            }
            if slope >= -1e-12 * mass {
                continue;
            }
            breaks.sort_by(|p, q| p.0.total_cmp(&q.0));
            let mut entering = None;
            for &(t, i) in &breaks {
                slope += 2.0 * ad[i].abs();
                if slope >= 0.0 {
                    entering = Some((t, i));
                    break;
                }
            }
            let Some((_, i)) = entering else { continue };
            let mut nb = basis.clone();
            nb[j] = i;
            if let Some(xn) = solve_rows(a, b, &nb) {
                let cn = l1_cost(a, b, &xn);
                if cn < cost {
                    basis = nb;
                    x = xn;
                    cost = cn;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            break;
        }
    }
    if cost <= start_cost {
        Ok((cost, x))
    } else {
        Ok((start_cost, x0))
    }
}

fn independent_rows(a: &DenseMatrix, order: &[usize], d: usize) -> Option<Vec<usize>> {
    let mut chosen: Vec<usize> = Vec::with_capacity(d);
    for &i in order {
        let mut trial = chosen.clone();
        trial.push(i);
        let m = a.select_rows(&trial);
        let s = svd(&m, default_rank_tol(m.rows(), m.cols())).ok()?;
        if s.rank() == trial.len() {
            chosen = trial;
            if chosen.len() == d {
                return Some(chosen);
            }
        }
    }
    None
}

fn solve_rows(a: &DenseMatrix, b: &[f64], rows: &[usize]) -> Option<Vec<f64>> {
    let m = a.select_rows(rows);
    let f = qr(&m).ok()?;
    if f.rank_deficient {
        return None;
    }
    let rhs: Vec<f64> = rows.iter().map(|&i| b[i]).collect();
    solve_upper(&f.r, &f.q.t_matvec(&rhs).ok()?).ok()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct L1SketchResult {
    pub x: Vec<f64>,
    /// Cost on the full instance.
    pub cost: f64,
    pub sampled_rows: usize,
    pub expected_rows: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Bernoulli row sample of `[A b]` with `1/p_i` rescaling, then the small solver.
pub fn solve_l1_sketched(a: &DenseMatrix, b: &[f64], eps: f64, kind: L1Embedding, seed: u64) -> Result<L1SketchResult> {
    check_problem(a, b)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let d = a.cols();
    let m = a.hstack(&DenseMatrix::column_vector(b))?;
    let (rows, weights, basis) = l1_row_sample(&m, eps, kind, seed, d)?;
    let sa = a.select_rows(&rows).scale_rows(&weights);
    let sb: Vec<f64> = rows.iter().zip(&weights).map(|(&i, w)| b[i] * w).collect();
    let sol = solve_l1_small(&sa, &sb, 1e-10)?;
    Ok(L1SketchResult {
        cost: l1_cost(a, b, &sol.x),
        x: sol.x,
        sampled_rows: rows.len(),
        expected_rows: l1_sample_target(m.cols(), eps),
        alpha: basis.alpha,
        beta: basis.beta,
    })
}

/// Sampled row indices of `m` with weights `1/p_i`; requires at least `min_rows` rows.
fn l1_row_sample(
    m: &DenseMatrix,
    eps: f64,
    kind: L1Embedding,
    seed: u64,
    min_rows: usize,
) -> Result<(Vec<usize>, Vec<f64>, WellConditionedBasis)> {
    with_reseed(seed, |s| {
        let basis = wcb_from_sketch(m, kind, s)?;
        let p = l1_sampling_probs(m, &basis, eps, s)?;
        let mut g = rng::seeded(s, 41);
        let mut rows = Vec::new();
        let mut weights = Vec::new();
        for (i, &pi) in p.iter().enumerate() {
            let u: f64 = g.random();
            if pi > 0.0 && u < pi {
                rows.push(i);
                weights.push(1.0 / pi);
            }
        }
        let sampled = m.select_rows(&rows).scale_rows(&weights);
        if rows.len() < min_rows || svd(&sampled, default_rank_tol(rows.len().max(1), m.cols()))?.rank() < min_rows {
            return Err(Error::RankDeficient(format!("only {} rows sampled", rows.len())));
        }
        Ok((rows, weights, basis))
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperplaneFit {
    /// Coordinate whose coefficient is fixed to one.
    pub coord: usize,
    /// Normal vector, `w[coord] = 1`.
    pub w: Vec<f64>,
    /// Affine offset (zero unless fitted with the constant column).
    pub offset: f64,
    /// `Σ_i |⟨p_i, w⟩ + offset|` over all points.
    pub cost: f64,
}

/// Best ℓ1 hyperplane `⟨w, p⟩ + offset = 0` over the choice of normalised coordinate.
pub fn l1_hyperplane_fit(points: &DenseMatrix, eps: f64, affine: bool, seed: u64) -> Result<HyperplaneFit> {
    let (n, d) = points.shape();
    if d < 2 || n <= d {
        return Err(Error::Dimension(format!("hyperplane fit needs n > d >= 2, got {n}x{d}")));
    }
    let m = if affine { points.hstack(&DenseMatrix::from_fn(n, 1, |_, _| 1.0))? } else { points.clone() };
    let dm = m.cols();
    let (rows, weights, _) = l1_row_sample(&m, eps, L1Embedding::Cauchy, seed, dm - 1)?;
    let pm = m.select_rows(&rows).scale_rows(&weights);
    let mut best: Option<HyperplaneFit> = None;
    for j in 0..d {
        let others: Vec<usize> = (0..dm).filter(|&c| c != j).collect();
        let design = pm.select_cols(&others);
        let target: Vec<f64> = pm.col(j).iter().map(|v| -v).collect();
        let sol = solve_l1_small(&design, &target, 1e-10)?;
        let mut full = vec![0.0; dm];
        full[j] = 1.0;
        for (c, v) in others.iter().zip(&sol.x) {
            full[*c] = *v;
        }
        let cost = norm1(&m.matvec(&full)?);
        if best.as_ref().is_none_or(|b| cost < b.cost) {
            let offset = if affine { full[d] } else { 0.0 };
            full.truncate(d);
            best = Some(HyperplaneFit { coord: j, w: full, offset, cost });
        }
    }
    Ok(best.expect("d >= 2 candidates"))
}

/// `‖x‖₁` share of each row of `U`, exact.
pub fn exact_row_shares(u: &DenseMatrix) -> Vec<f64> {
    let w: Vec<f64> = (0..u.rows()).map(|i| norm1(u.row(i))).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|v| v / t).collect()
}
