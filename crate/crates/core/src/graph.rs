//! Graph Laplacians, effective-resistance sparsification and the artificial-basis chain
//! `K(ℓ) = K + γ(ℓ) I`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constants::SPARSIFIER_SAMPLES;
use crate::error::{Error, Result};
use crate::gen::EdgeList;
use crate::leverage::{leverage_exact, rand_sampling};
use crate::matrix::{sym_eig, sym_eigvals, DenseMatrix, SparseMatrix};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    n: usize,
    edges: EdgeList,
}

impl WeightedGraph {
    /// Edges are stored with `u < v`; self-loops, duplicates and non-positive weights are rejected.
    pub fn new(n: usize, edges: EdgeList) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!("edge ({u}, {v}) outside {n} vertices")));
            }
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop at {u}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("edge ({u}, {v}) has weight {w}")));
            }
            let (a, b) = (u.min(v), u.max(v));
            if !seen.insert((a, b)) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({a}, {b})")));
            }
            out.push((a, b, w));
        }
        Ok(Self { n, edges: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    fn check(&self) -> Result<()> {
        if self.n < 2 || self.edges.is_empty() {
            return Err(Error::InvalidArgument(format!("graph with {} vertices and no edges", self.n)));
        }
        Ok(())
    }

    /// Connected components as sorted vertex lists.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(u, v, _) in &self.edges {
            let (a, b) = (find(&mut parent, u), find(&mut parent, v));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups = std::collections::BTreeMap::<usize, Vec<usize>>::new();
        for x in 0..self.n {
            let r = find(&mut parent, x);
            groups.entry(r).or_default().push(x);
        }
        groups.into_values().collect()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Whitespace-separated `u v w` lines, 0-based; `#` starts a comment.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut n = 0;
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: String| Error::Parse { line: ln + 1, msg };
            if f.len() != 3 {
                return Err(bad(format!("expected `u v w`, got {} fields", f.len())));
            }
            let u: usize = f[0].parse().map_err(|_| bad(format!("bad vertex `{}`", f[0])))?;
            let v: usize = f[1].parse().map_err(|_| bad(format!("bad vertex `{}`", f[1])))?;
            let w: f64 = f[2].parse().map_err(|_| bad(format!("bad weight `{}`", f[2])))?;
            n = n.max(u + 1).max(v + 1);
            edges.push((u, v, w));
        }
        Self::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(u, v, w) in &self.edges {
            let _ = writeln!(out, "{u} {v} {w:e}");
        }
        out
    }
}

/// `B`: one row per edge with `√w` at `u` and `−√w` at `v`.
pub fn incidence(g: &WeightedGraph) -> Result<SparseMatrix> {
    g.check()?;
    let t = g
        .edges
        .iter()
        .enumerate()
        .flat_map(|(e, &(u, v, w))| [(e, u, w.sqrt()), (e, v, -w.sqrt())])
        .collect();
    SparseMatrix::from_triplets(g.edges.len(), g.n, t)
}

/// `K = BᵀB`, assembled edge by edge.
pub fn laplacian(g: &WeightedGraph) -> Result<SparseMatrix> {
    g.check()?;
    let mut t = Vec::with_capacity(4 * g.edges.len());
    for &(u, v, w) in &g.edges {
        t.extend([(u, u, w), (v, v, w), (u, v, -w), (v, u, -w)]);
    }
    SparseMatrix::from_triplets(g.n, g.n, t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sparsifier {
    pub graph: WeightedGraph,
    /// Samples drawn across all components.
    pub samples: usize,
    /// `max |μ − 1|` over the generalized eigenvalues `μ` of `(K̃, K)` on range(K).
    pub eps_certified: f64,
}

/// Number of edge samples `⌈C n ln n / ε²⌉`.
pub fn sparsifier_samples(n: usize, eps: f64) -> usize {
    (SPARSIFIER_SAMPLES * n as f64 * (n.max(2) as f64).ln() / (eps * eps)).ceil() as usize
}

/// Leverage-score sampling of edges, one component at a time; duplicate samples are merged.
pub fn spectral_sparsify(g: &WeightedGraph, eps: f64, seed: u64) -> Result<Sparsifier> {
    g.check()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let mut comp_of = vec![0usize; g.n];
    let comps = g.components();
    for (c, vs) in comps.iter().enumerate() {
        for &v in vs {
            comp_of[v] = c;
        }
    }
    let mut edges = Vec::new();
    let mut samples = 0;
    for (c, vs) in comps.iter().enumerate() {
        let local: Vec<(usize, usize, f64)> = g.edges.iter().copied().filter(|e| comp_of[e.0] == c).collect();
        if local.is_empty() {
            continue;
        }
        let pos = |x: usize| vs.binary_search(&x).expect("vertex in its component");
        let sub = WeightedGraph::new(vs.len(), local.iter().map(|&(u, v, w)| (pos(u), pos(v), w)).collect())?;
        let lev = leverage_exact(&incidence(&sub)?.to_dense())?;
        let s = sparsifier_samples(vs.len(), eps);
        samples += s;
        let plan = rand_sampling(&lev, s, rng::derive(seed, c as u64))?;
        let (idx, sc) = plan.merged();
        for (&e, &f) in idx.iter().zip(&sc) {
            let (u, v, w) = local[e];
            edges.push((u, v, w * f * f));
        }
    }
    edges.sort_by_key(|e| (e.0, e.1));
    let graph = WeightedGraph::new(g.n, edges)?;
    let eps_certified = certify(&laplacian(g)?.to_dense(), &laplacian(&graph)?.to_dense())?;
    Ok(Sparsifier { graph, samples, eps_certified })
}

/// Generalized eigenvalues of `(k_tilde, k)` restricted to range(K), ascending.
pub fn generalized_eigs_on_range(k: &DenseMatrix, k_tilde: &DenseMatrix) -> Result<Vec<f64>> {
    let e = sym_eig(k)?;
    let top = e.values.last().copied().unwrap_or(0.0).max(0.0);
    let tol = 1e-10 * top * k.rows() as f64;
    let keep: Vec<usize> = (0..e.values.len()).filter(|&i| e.values[i] > tol).collect();
    if keep.is_empty() {
        return Err(Error::RankDeficient("Laplacian is zero".into()));
    }
    let inv_sqrt: Vec<f64> = keep.iter().map(|&i| 1.0 / e.values[i].sqrt()).collect();
    let w = e.vectors.select_cols(&keep).scale_cols(&inv_sqrt);
    let m = w.t_matmul(&k_tilde.matmul(&w)?)?;
    let sym = DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    sym_eigvals(&sym)
}

fn certify(k: &DenseMatrix, k_tilde: &DenseMatrix) -> Result<f64> {
    Ok(generalized_eigs_on_range(k, k_tilde)?.iter().map(|mu| (mu - 1.0).abs()).fold(0.0, f64::max))
}

/// Smallest eigenvalue of `hi − lo`, divided by `scale`; non-negative iff `lo ⪯ hi`.
fn psd_margin(lo: &DenseMatrix, hi: &DenseMatrix, scale: f64) -> Result<f64> {
    Ok(sym_eigvals(&hi.sub(lo)?)?[0] / scale)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainLevel {
    pub level: usize,
    pub gamma: f64,
    /// Normalised margins of the two sides of the condition checked at this level
    /// (third condition at level 0, second at 1..d); both must be ≥ −slack.
    pub lower_margin: f64,
    pub upper_margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecursiveChain {
    pub lambda_u: f64,
    pub lambda_l: f64,
    pub depth: usize,
    pub levels: Vec<ChainLevel>,
    /// Range of the generalized eigenvalues of `(K(d), K)` on range(K); must lie in `[1, 2]`.
    pub top_ratio: (f64, f64),
}

pub const CHAIN_SLACK: f64 = 1e-8;

/// Builds and verifies `K(ℓ) = K + γ(ℓ) I`, `γ(ℓ) = λ_u / 2^ℓ`, `ℓ = 0..d`.
///
/// For a connected graph with weights in `[w_min, w_max]`, `λ_u = 2 n w_max` and `λ_ℓ = 8 w_min / n²`.
pub fn recursive_chain(g: &WeightedGraph) -> Result<RecursiveChain> {
    g.check()?;
    if !g.is_connected() {
        return Err(Error::InvalidArgument("the chain needs a connected graph".into()));
    }
    let n = g.n as f64;
    let wmax = g.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let wmin = g.edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
    let lambda_u = 2.0 * n * wmax;
    let lambda_l = 8.0 * wmin / (n * n);
    let depth = (lambda_u / lambda_l).log2().ceil().max(0.0) as usize;
    let k = laplacian(g)?.to_dense();
    let id = DenseMatrix::identity(g.n);
    let kl = |gamma: f64| k.add(&id.scale(gamma));
    let gamma = |l: usize| lambda_u / 2f64.powi(l as i32);
    let scale = lambda_u;
    let fail = |what: String| Err(Error::InvalidArgument(format!("chain condition violated: {what}")));

    let mut levels = Vec::with_capacity(depth + 1);
    let k0 = kl(gamma(0))?;
    let two_g0 = id.scale(2.0 * gamma(0));
    let (lo, hi) = (psd_margin(&k0, &two_g0, scale)?, psd_margin(&two_g0, &k0.scale(2.0), scale)?);
    if lo < -CHAIN_SLACK || hi < -CHAIN_SLACK {
        return fail(format!("K(0) ⪯ 2γ(0)I ⪯ 2K(0) margins {lo:e}, {hi:e}"));
    }
    levels.push(ChainLevel { level: 0, gamma: gamma(0), lower_margin: lo, upper_margin: hi });
    let mut prev = k0;
    for l in 1..=depth {
        let cur = kl(gamma(l))?;
        let (lo, hi) = (psd_margin(&cur, &prev, scale)?, psd_margin(&prev, &cur.scale(2.0), scale)?);
        if lo < -CHAIN_SLACK || hi < -CHAIN_SLACK {
            return fail(format!("K({l}) ⪯ K({}) ⪯ 2K({l}) margins {lo:e}, {hi:e}", l - 1));
        }
        levels.push(ChainLevel { level: l, gamma: gamma(l), lower_margin: lo, upper_margin: hi });
        prev = cur;
    }
    let mu = generalized_eigs_on_range(&k, &prev)?;
    let top_ratio = (mu[0], *mu.last().expect("non-empty range"));
    if top_ratio.0 < 1.0 - CHAIN_SLACK || top_ratio.1 > 2.0 + CHAIN_SLACK {
        return fail(format!("K ⪯_R K(d) ⪯_R 2K with ratios {top_ratio:?}"));
    }
    Ok(RecursiveChain { lambda_u, lambda_l, depth, levels, top_ratio })
}
