//! Executes a resolved [`ExperimentSpec`]: seeds run in parallel, the report is assembled in seed order.

use std::collections::BTreeMap;
use std::fs;
use std::str::FromStr;

use anyhow::{anyhow, bail, ensure, Context};
use rayon::prelude::*;
use serde_json::json;

use sketch_nla::analysis::{attack_query_count, jl_attack, schatten_estimate, schatten_exact};
use sketch_nla::cur::cur_decompose;
use sketch_nla::distributed::{adaptive_compress, random_shares, ProtocolParams};
use sketch_nla::gen::{complete_graph, erdos_renyi, gaussian_matrix, planted_rank};
use sketch_nla::graph::{laplacian, recursive_chain, spectral_sparsify, WeightedGraph};
use sketch_nla::lowrank::{frobenius_lowrank, project_residual_norm, spectral_lowrank_power, ResidualNorm};
use sketch_nla::matrix::mm::{self, MmMatrix};
use sketch_nla::matrix::svd::singular_values;
use sketch_nla::regress::{
    l1_cost, l2_cost, precond_solve_l2, residual_gap, sketch_solve_l2, solve_l1_sketched, solve_l1_small, solve_l2_exact,
    L1Embedding,
};
use sketch_nla::sketch::{make_sketch, verify_embedding, SketchKind};
use sketch_nla::DenseMatrix;

use crate::report::{trials_csv, write_atomic, Aggregate, Quantiles, Report, Trial};
use crate::spec::{Command, ExperimentSpec, GraphFamily, Source};

/// Columns of the per-trial CSV for each command, after the leading `seed`.
pub fn columns(cmd: Command, mode: Option<&str>) -> &'static [&'static str] {
    match (cmd, mode) {
        (Command::Gen, _) => &[],
        (Command::EmbedVerify, _) => &["distortion", "norm_distortion"],
        (Command::RegressL2, Some("precond")) => &["cond", "residual_gap", "iterations"],
        (Command::RegressL2, _) => &["cost_ratio"],
        (Command::RegressL1, _) => &["cost_ratio", "sampled_rows"],
        (Command::Lowrank, _) => &["ratio"],
        (Command::Cur, _) => &["ratio", "c", "r", "rank_u"],
        (Command::Distributed, _) => &["ratio", "words"],
        (Command::Sparsify, _) => &["eps_certified", "edges", "samples"],
        (Command::Schatten, _) => &["estimate", "rel_error"],
        (Command::AttackJl, _) => &["ratio", "queries"],
    }
}

pub fn load_matrix(src: &Source) -> anyhow::Result<DenseMatrix> {
    Ok(match src {
        Source::File { path } => mm::mm_read(path).with_context(|| format!("reading {}", path.display()))?.to_dense(),
        &Source::PlantedRank { n, d, k, strength, noise, seed } => planted_rank(n, d, k, strength, noise, seed)?,
        &Source::RandomGaussian { n, d, seed } => gaussian_matrix(n, d, seed),
        other => bail!("expected a matrix source, got {other:?}"),
    })
}

fn load_vector(src: &Source, n: usize) -> anyhow::Result<Vec<f64>> {
    let m = load_matrix(src)?;
    let v = match m.shape() {
        (_, 1) => m.col(0),
        (1, _) => m.row(0).to_vec(),
        (r, c) => bail!("right-hand side must be a vector, got {r}x{c}"),
    };
    ensure!(v.len() == n, "right-hand side has {} entries, A has {n} rows", v.len());
    Ok(v)
}

pub fn load_graph(src: &Source) -> anyhow::Result<WeightedGraph> {
    Ok(match src {
        Source::EdgeList { path } => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            WeightedGraph::parse_edge_list(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        &Source::Graph { family, n, p, seed } => match family {
            GraphFamily::Complete => WeightedGraph::new(n, complete_graph(n))?,
            GraphFamily::ErdosRenyi => WeightedGraph::new(n, erdos_renyi(n, p, seed))?,
        },
        other => bail!("expected a graph source, got {other:?}"),
    })
}

fn run_seeds(seeds: &[u64], f: impl Fn(u64) -> anyhow::Result<Vec<f64>> + Sync) -> anyhow::Result<Vec<Trial>> {
    seeds
        .par_iter()
        .map(|&seed| f(seed).map(|values| Trial { seed, values }).with_context(|| format!("seed {seed}")))
        .collect()
}

fn column(trials: &[Trial], i: usize) -> Vec<f64> {
    trials.iter().map(|t| t.values[i]).collect()
}

fn count(trials: &[Trial], pred: impl Fn(&[f64]) -> bool) -> usize {
    trials.iter().filter(|t| pred(&t.values)).count()
}

/// `⌈pct · total / 100⌉`.
fn required(total: usize, pct: usize) -> usize {
    (total * pct).div_ceil(100)
}

fn aggregate(contract: String, passed: usize, required: usize, trials: &[Trial], cols: &[&str]) -> Aggregate {
    let quantiles = cols
        .iter()
        .enumerate()
        .filter_map(|(i, c)| Quantiles::of(&column(trials, i)).map(|q| (c.to_string(), q)))
        .collect();
    Aggregate {
        contract,
        passed,
        required,
        total: trials.len(),
        pass: passed >= required,
        quantiles,
        extra: BTreeMap::new(),
    }
}

fn param<T: Copy>(v: Option<T>, name: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| anyhow!("missing parameter `{name}`"))
}

fn input(spec: &ExperimentSpec) -> anyhow::Result<&Source> {
    spec.input.as_ref().ok_or_else(|| anyhow!("{} needs an input", spec.command))
}

/// Runs the experiment and writes every requested output file. Returns the report.
pub fn execute(spec: &ExperimentSpec) -> anyhow::Result<Report> {
    let seeds = spec.seeds.seeds();
    let mode = spec.params.mode.as_deref();
    let cols = columns(spec.command, mode);
    let p = &spec.params;
    let (trials, agg) = match spec.command {
        Command::Gen => gen(spec)?,
        Command::EmbedVerify => {
            let a = load_matrix(input(spec)?)?;
            let (n, d) = a.shape();
            let (eps, delta) = (param(p.eps, "eps")?, param(p.delta, "delta")?);
            let kind = SketchKind::from_str(p.sketch.as_deref().unwrap_or("sparse"))?;
            let rows = match (p.rows, kind) {
                (Some(r), _) => r,
                (None, SketchKind::SparseEmbedding) => ((d * d) as f64 / (delta * eps * eps)).ceil() as usize,
                (None, _) => (4.0 * d as f64 / (eps * eps)).ceil() as usize,
            };
            let trials = run_seeds(&seeds, |s| {
                let rep = verify_embedding(&make_sketch(kind, rows, n, s)?, &a, 1e-12)?;
                Ok(vec![rep.distortion, rep.norm_distortion])
            })?;
            let ok = count(&trials, |v| v[0] <= eps);
            let need = trials.len() - ((delta * trials.len() as f64).floor() as usize);
            let mut agg =
                aggregate(format!("fraction with max|sigma^2 - 1| > {eps} is at most {delta}"), ok, need, &trials, cols);
            agg.extra.insert("rows".into(), json!(rows));
            agg.extra.insert("sketch".into(), json!(kind.to_string()));
            (trials, agg)
        }
        Command::RegressL2 => {
            let a = load_matrix(input(spec)?)?;
            let b = load_vector(spec.rhs.as_ref().ok_or_else(|| anyhow!("regress-l2 needs a right-hand side"))?, a.rows())?;
            let eps = param(p.eps, "eps")?;
            let xs = solve_l2_exact(&a, &b)?;
            if mode == Some("precond") {
                let trials = run_seeds(&seeds, |s| {
                    let t = precond_solve_l2(&a, &b, eps, s)?;
                    Ok(vec![t.cond, residual_gap(&a, &t.x, &t.iterates[0], &xs), t.iterations as f64])
                })?;
                let ok = count(&trials, |v| v[0] <= 9.0 && v[1] <= eps);
                let agg = aggregate(format!("kappa(AR) <= 9 and residual gap <= {eps:e} on every seed"), ok, trials.len(), &trials, cols);
                (trials, agg)
            } else {
                let opt = l2_cost(&a, &b, &xs);
                let trials = run_seeds(&seeds, |s| Ok(vec![l2_cost(&a, &b, &sketch_solve_l2(&a, &b, eps, s)?) / opt]))?;
                let ok = count(&trials, |v| v[0] <= 1.0 + eps);
                let agg = aggregate(format!("cost ratio <= {} in at least 95% of seeds", 1.0 + eps), ok, required(trials.len(), 95), &trials, cols);
                (trials, agg)
            }
        }
        Command::RegressL1 => {
            let a = load_matrix(input(spec)?)?;
            let b = load_vector(spec.rhs.as_ref().ok_or_else(|| anyhow!("regress-l1 needs a right-hand side"))?, a.rows())?;
            let eps = param(p.eps, "eps")?;
            let kind = L1Embedding::from_str(p.sketch.as_deref().unwrap_or("cauchy"))?;
            let full = solve_l1_small(&a, &b, 1e-10)?;
            let opt = l1_cost(&a, &b, &full.x);
            let trials = run_seeds(&seeds, |s| {
                let r = solve_l1_sketched(&a, &b, eps, kind, s)?;
                Ok(vec![l1_cost(&a, &b, &r.x) / opt, r.sampled_rows as f64])
            })?;
            let ok = count(&trials, |v| v[0] <= 1.0 + eps);
            let agg = aggregate(format!("cost ratio <= {} in at least 90% of seeds", 1.0 + eps), ok, required(trials.len(), 90), &trials, cols);
            (trials, agg)
        }
        Command::Lowrank => {
            let a = load_matrix(input(spec)?)?;
            let (k, eps) = (param(p.k, "k")?, param(p.eps, "eps")?);
            let sv = singular_values(&a)?;
            ensure!(k < sv.len(), "k = {k} must be below min(n, d) = {}", sv.len());
            if mode == Some("spectral") {
                let opt = sv[k];
                let trials = run_seeds(&seeds, |s| {
                    let z = spectral_lowrank_power(&a, k, eps, s)?.z;
                    Ok(vec![project_residual_norm(&a, &z, ResidualNorm::Spectral)? / opt])
                })?;
                let ok = count(&trials, |v| v[0] <= 1.0 + eps);
                let agg = aggregate(
                    format!("spectral residual <= {} sigma_(k+1) in at least 80% of seeds", 1.0 + eps),
                    ok,
                    required(trials.len(), 80),
                    &trials,
                    cols,
                );
                (trials, agg)
            } else {
                let opt = sv[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
                let trials = run_seeds(&seeds, |s| Ok(vec![frobenius_lowrank(&a, k, eps, s)?.frobenius_residual(&a)? / opt]))?;
                let ok = count(&trials, |v| v[0] <= 1.0 + eps);
                let agg = aggregate(
                    format!("Frobenius residual <= {} ||A - A_k||_F in at least 90% of seeds", 1.0 + eps),
                    ok,
                    required(trials.len(), 90),
                    &trials,
                    cols,
                );
                (trials, agg)
            }
        }
        Command::Cur => {
            let a = load_matrix(input(spec)?)?;
            let (k, eps) = (param(p.k, "k")?, param(p.eps, "eps")?);
            let sv = singular_values(&a)?;
            ensure!(k < sv.len(), "k = {k} must be below min(n, d) = {}", sv.len());
            let opt = sv[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
            let trials = run_seeds(&seeds, |s| {
                let cur = cur_decompose(&a, k, eps, s)?;
                let su = singular_values(&cur.u)?;
                let rank = su.iter().filter(|&&x| x > 1e-10 * su[0]).count();
                Ok(vec![cur.frobenius_residual(&a)? / opt, cur.c.cols() as f64, cur.r.rows() as f64, rank as f64])
            })?;
            let ok = count(&trials, |v| v[0] <= 1.0 + eps);
            let rank_ok = count(&trials, |v| v[3] == k as f64);
            let mut agg = aggregate(
                format!("||A - CUR||_F <= {} ||A - A_k||_F in at least 80% of seeds and rank(U) = {k} always", 1.0 + eps),
                ok,
                required(trials.len(), 80),
                &trials,
                cols,
            );
            agg.pass &= rank_ok == trials.len();
            agg.extra.insert("rank_ok".into(), json!(rank_ok));
            (trials, agg)
        }
        Command::Distributed => distributed(spec, &seeds, cols)?,
        Command::Sparsify => sparsify(spec, &seeds, cols)?,
        Command::Schatten => {
            let a = load_matrix(input(spec)?)?;
            let (pp, eps) = (param(p.p, "p")?, param(p.eps, "eps")?);
            let target = schatten_exact(&a, pp)?;
            ensure!(target > 0.0, "the input has zero Schatten norm");
            let trials = run_seeds(&seeds, |s| {
                let e = schatten_estimate(&a, pp, eps, s)?.estimate;
                Ok(vec![e, (e - target).abs() / target])
            })?;
            let ok = count(&trials, |v| v[1] <= eps);
            let mut agg = aggregate(
                format!("|estimate - ||A||_{pp}^{pp}| <= {eps} ||A||_{pp}^{pp} in at least 90% of seeds"),
                ok,
                required(trials.len(), 90),
                &trials,
                cols,
            );
            agg.extra.insert("exact".into(), json!(target));
            (trials, agg)
        }
        Command::AttackJl => {
            let k = param(p.k, "k")?;
            let n = p.n.unwrap_or(2 * k);
            let expect = attack_query_count(k);
            let trials = run_seeds(&seeds, |s| {
                let sk = make_sketch(SketchKind::Gaussian, k, n, s)?.to_dense();
                let mut calls = 0usize;
                let mut oracle = |x: &[f64]| {
                    calls += 1;
                    sk.matvec(x).expect("length n").iter().map(|v| v * v).sum()
                };
                let res = jl_attack(&mut oracle, k, n)?;
                let sv = sk.matvec(&res.v)?;
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                Ok(vec![norm(&sv) / (norm(&res.v) * sk.frobenius_norm()), calls as f64])
            })?;
            let ok = count(&trials, |v| v[0] <= 1e-8 && v[1] == expect as f64);
            let mut agg = aggregate(
                format!("||Sv|| <= 1e-8 ||v|| ||S||_F with exactly {expect} queries on every seed"),
                ok,
                trials.len(),
                &trials,
                cols,
            );
            agg.extra.insert("n".into(), json!(n));
            (trials, agg)
        }
    };

    let report = Report::new(spec.clone(), cols, &trials, agg);
    if let Some(path) = &spec.outputs.csv {
        write_atomic(path, trials_csv(cols, &trials).as_bytes())?;
    }
    if let Some(path) = &spec.outputs.report {
        write_atomic(path, report.to_json().as_bytes())?;
    }
    Ok(report)
}

fn gen(spec: &ExperimentSpec) -> anyhow::Result<(Vec<Trial>, Aggregate)> {
    let src = input(spec)?;
    let out = spec.outputs.artifact.as_ref().ok_or_else(|| anyhow!("gen needs --out"))?;
    let mut extra = BTreeMap::new();
    match src {
        Source::Graph { .. } | Source::EdgeList { .. } => {
            let g = load_graph(src)?;
            write_atomic(out, g.to_edge_list().as_bytes())?;
            extra.insert("vertices".into(), json!(g.n()));
            extra.insert("edges".into(), json!(g.edges().len()));
        }
        _ => {
            let a = load_matrix(src)?;
            write_atomic(out, mm::format(&MmMatrix::Dense(a.clone())).as_bytes())?;
            extra.insert("shape".into(), json!([a.rows(), a.cols()]));
            extra.insert("frobenius".into(), json!(a.frobenius_norm()));
        }
    }
    let agg = Aggregate {
        contract: format!("wrote {}", out.display()),
        passed: 0,
        required: 0,
        total: 0,
        pass: true,
        quantiles: BTreeMap::new(),
        extra,
    };
    Ok((Vec::new(), agg))
}

fn distributed(spec: &ExperimentSpec, seeds: &[u64], cols: &[&str]) -> anyhow::Result<(Vec<Trial>, Aggregate)> {
    let sc = spec.params.scenario.as_ref().ok_or_else(|| anyhow!("distributed needs a scenario"))?;
    let integer_safe = spec.params.integer_safe.unwrap_or(false);
    let a = load_matrix(&sc.generator)?;
    ensure!(a.shape() == (sc.n, sc.d), "generator gives {:?}, scenario says {}x{}", a.shape(), sc.n, sc.d);
    ensure!(sc.k < sc.n.min(sc.d), "k = {} must be below min(n, d)", sc.k);
    let shares = random_shares(&a, sc.s, sc.seed)?;
    let opt = singular_values(&a)?[sc.k..].iter().map(|s| s * s).sum::<f64>().sqrt();
    let (sf, df, kf) = (sc.s as f64, sc.d as f64, sc.k as f64);
    let bound = 10.0 * (sf * df * kf / sc.eps + sf * kf * kf / sc.eps.powi(4));
    let params = |seed| ProtocolParams { k: sc.k, eps: sc.eps, seed, integer_safe };
    let trials = run_seeds(seeds, |s| {
        let run = adaptive_compress(&shares, params(s))?;
        Ok(vec![run.combined()?.frobenius_residual(&a)? / opt, run.ledger.total_words as f64])
    })?;
    if let Some(path) = &spec.outputs.artifact {
        let run = adaptive_compress(&shares, params(seeds[0]))?;
        write_atomic(path, run.ledger.to_csv().as_bytes())?;
    }
    let ok = count(&trials, |v| v[0] <= 1.0 + sc.eps);
    let within = count(&trials, |v| v[1] <= bound);
    let mut agg = aggregate(
        format!("reconstruction ratio <= {} in at least 80% of seeds and ledger <= {bound} words always", 1.0 + sc.eps),
        ok,
        required(trials.len(), 80),
        &trials,
        cols,
    );
    agg.pass &= within == trials.len();
    agg.extra.insert("word_bound".into(), json!(bound));
    agg.extra.insert("within_bound".into(), json!(within));
    Ok((trials, agg))
}

fn sparsify(spec: &ExperimentSpec, seeds: &[u64], cols: &[&str]) -> anyhow::Result<(Vec<Trial>, Aggregate)> {
    let g = load_graph(input(spec)?)?;
    let eps = param(spec.params.eps, "eps")?;
    let trials = run_seeds(seeds, |s| {
        let sp = spectral_sparsify(&g, eps, s)?;
        Ok(vec![sp.eps_certified, sp.graph.edges().len() as f64, sp.samples as f64])
    })?;
    if spec.outputs.artifact.is_some() || spec.outputs.laplacian.is_some() {
        let sp = spectral_sparsify(&g, eps, seeds[0])?;
        if let Some(path) = &spec.outputs.artifact {
            write_atomic(path, sp.graph.to_edge_list().as_bytes())?;
        }
        if let Some(path) = &spec.outputs.laplacian {
            write_atomic(path, mm::format(&MmMatrix::Sparse(laplacian(&sp.graph)?)).as_bytes())?;
        }
    }
    let ok = count(&trials, |v| v[0] <= eps);
    let mut agg = aggregate(
        format!("certified generalized-eigenvalue deviation <= {eps} in at least 90% of seeds"),
        ok,
        required(trials.len(), 90),
        &trials,
        cols,
    );
    agg.extra.insert("vertices".into(), json!(g.n()));
    agg.extra.insert("edges".into(), json!(g.edges().len()));
    if spec.params.chain == Some(true) {
        match recursive_chain(&g) {
            Ok(c) => {
                agg.extra.insert("chain_depth".into(), json!(c.depth));
                agg.extra.insert("chain_top_ratio".into(), json!([c.top_ratio.0, c.top_ratio.1]));
                agg.extra.insert("chain_ok".into(), json!(true));
            }
            Err(e) => {
                agg.extra.insert("chain_ok".into(), json!(false));
                agg.extra.insert("chain_error".into(), json!(e.to_string()));
                agg.pass = false;
            }
        }
    }
    Ok((trials, agg))
}
