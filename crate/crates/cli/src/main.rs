use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use sketch_nla_cli::run::execute;
use sketch_nla_cli::spec::{Command, ExperimentSpec, GraphFamily, Scenario, SeedRange, Source};

#[derive(Parser)]
#[command(name = "sketch-nla", version, about = "Randomized linear algebra experiments with machine-checkable reports")]
#[command(after_help = "Every command except gen prints its JSON report to stdout unless --report is given.\n\
Exit status: 0 when the aggregate contract holds, 1 when it does not, 2 on errors.\n\
SKETCH_NLA_THREADS caps the number of seeds run in parallel.")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a generated matrix (Matrix Market) or graph (edge list).
    Gen(GenArgs),
    /// Check the subspace-embedding distortion of a sketch on the column space of A.
    #[command(after_help = "CSV columns: seed,distortion,norm_distortion")]
    EmbedVerify(EmbedArgs),
    /// Least squares by sketch-and-solve, or to machine precision with a sketched preconditioner.
    #[command(after_help = "CSV columns: seed,cost_ratio (sketch mode); seed,cond,residual_gap,iterations (--precond)")]
    RegressL2(L2Args),
    /// Least absolute deviations on a sampled subproblem.
    #[command(after_help = "CSV columns: seed,cost_ratio,sampled_rows")]
    RegressL1(L1Args),
    /// Rank-k approximation in Frobenius or spectral norm.
    #[command(after_help = "CSV columns: seed,ratio")]
    Lowrank(LowrankArgs),
    /// CUR decomposition with rank-k core.
    #[command(after_help = "CSV columns: seed,ratio,c,r,rank_u")]
    Cur(CurArgs),
    /// Simulated distributed low-rank protocol with a communication ledger.
    #[command(after_help = "CSV columns: seed,ratio,words\nLedger CSV columns: from,to,round,words,tag")]
    Distributed(DistArgs),
    /// Spectral sparsification of a weighted graph.
    #[command(after_help = "CSV columns: seed,eps_certified,edges,samples")]
    Sparsify(SparsifyArgs),
    /// Multi-pass Schatten-norm estimate.
    #[command(after_help = "CSV columns: seed,estimate,rel_error")]
    Schatten(SchattenArgs),
    /// Adaptive attack on a Gaussian JL norm sketch.
    #[command(after_help = "CSV columns: seed,ratio,queries")]
    AttackJl(AttackArgs),
    /// Re-run the experiment recorded in a report.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct Common {
    /// Inclusive seed range `a..b`, or a single seed.
    #[arg(long, default_value = "0..19")]
    seeds: SeedRange,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-trial CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// Matrix Market input.
    #[arg(long = "in", value_name = "FILE", conflicts_with_all = ["planted_rank", "gaussian"])]
    input: Option<PathBuf>,
    /// Generate a planted rank-K matrix instead.
    #[arg(long, value_name = "K", conflicts_with = "gaussian")]
    planted_rank: Option<usize>,
    /// Generate a standard Gaussian matrix instead.
    #[arg(long)]
    gaussian: bool,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    /// Generator seed.
    #[arg(long = "gen-seed", alias = "seed", default_value_t = 0)]
    gen_seed: u64,
}

impl MatrixArgs {
    fn source(&self) -> anyhow::Result<Source> {
        Ok(match (&self.input, self.planted_rank, self.gaussian) {
            (Some(path), _, _) => Source::File { path: path.clone() },
            (None, Some(k), _) => Source::PlantedRank {
                n: self.n,
                d: self.d,
                k,
                strength: self.strength,
                noise: self.noise,
                seed: self.gen_seed,
            },
            (None, None, true) => Source::RandomGaussian { n: self.n, d: self.d, seed: self.gen_seed },
            (None, None, false) => bail!("give --in FILE, --planted-rank K or --gaussian"),
        })
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    /// Generate a graph: `complete` or `er`.
    #[arg(long, conflicts_with_all = ["input", "planted_rank", "gaussian"])]
    graph: Option<GraphFamily>,
    /// Edge probability for `--graph er`.
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    common: Common,
    /// gaussian, sparse, srht, sign.
    #[arg(long, default_value = "sparse")]
    sketch: String,
    /// Sketch rows; defaults to d²/(δε²) for sparse and 4d/ε² otherwise.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
}

#[derive(Args)]
struct RhsArgs {
    /// Right-hand side as a Matrix Market vector; a Gaussian vector when absent.
    #[arg(long = "b", value_name = "FILE")]
    b: Option<PathBuf>,
    /// Seed of the generated right-hand side.
    #[arg(long, default_value_t = 1)]
    b_seed: u64,
}

impl RhsArgs {
    fn source(&self, n: usize) -> Source {
        match &self.b {
            Some(path) => Source::File { path: path.clone() },
            None => Source::RandomGaussian { n, d: 1, seed: self.b_seed },
        }
    }
}

#[derive(Args)]
struct L2Args {
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    rhs: RhsArgs,
    #[command(flatten)]
    common: Common,
    /// Accuracy: cost factor 1+ε for sketch-and-solve, residual gap for --precond (default 1e-10).
    #[arg(long)]
    eps: Option<f64>,
    /// Iterate with a sketched preconditioner instead of solving the sketched problem.
    #[arg(long)]
    precond: bool,
}

#[derive(Args)]
struct L1Args {
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    rhs: RhsArgs,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// cauchy or exp.
    #[arg(long, default_value = "cauchy")]
    embedding: String,
}

#[derive(Args)]
struct LowrankArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Use the power method and compare against σ_(k+1).
    #[arg(long)]
    spectral: bool,
}

#[derive(Args)]
struct CurArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
}

#[derive(Args)]
struct DistArgs {
    /// Scenario JSON `{s, n, d, k, eps, seed, generator}`; overrides the flags below.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    common: Common,
    /// Number of servers.
    #[arg(long, default_value_t = 3)]
    s: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Seed of the split into shares.
    #[arg(long, default_value_t = 0)]
    share_seed: u64,
    /// Broadcast SA instead of the projection U.
    #[arg(long)]
    integer_safe: bool,
    /// Ledger CSV of the first seed's run.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct SparsifyArgs {
    /// Edge list `u v w`, 0-based.
    #[arg(long = "edges", value_name = "FILE", conflicts_with = "graph")]
    edges: Option<PathBuf>,
    /// Generated graph: `complete` or `er`.
    #[arg(long)]
    graph: Option<GraphFamily>,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    #[arg(long = "gen-seed", default_value_t = 0)]
    gen_seed: u64,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Also build and verify the chain K + γI on the input graph.
    #[arg(long)]
    chain: bool,
    /// Edge list of the first seed's sparsifier.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Matrix Market Laplacian of the first seed's sparsifier.
    #[arg(long)]
    laplacian: Option<PathBuf>,
}

#[derive(Args)]
struct SchattenArgs {
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    p: u32,
    #[arg(long, default_value_t = 0.3)]
    eps: f64,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: Common,
    /// Sketch rows.
    #[arg(long)]
    k: usize,
    /// Sketch columns; 2k when absent.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    /// A report written by any command.
    report: PathBuf,
}

fn with_common(cmd: Command, c: &Common) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(cmd, c.seeds);
    spec.outputs.report = c.report.clone();
    spec.outputs.csv = c.csv.clone();
    spec
}

fn graph_source(family: GraphFamily, n: usize, p: f64, seed: u64) -> Source {
    Source::Graph { family, n, p, seed }
}

fn resolve(cmd: Cmd) -> anyhow::Result<ExperimentSpec> {
    Ok(match cmd {
        Cmd::Gen(a) => {
            let mut spec = ExperimentSpec::new(Command::Gen, SeedRange { first: 0, last: 0 });
            spec.input = Some(match a.graph {
                Some(f) => graph_source(f, a.matrix.n, a.p, a.matrix.gen_seed),
                None => a.matrix.source()?,
            });
            spec.outputs.artifact = Some(a.out);
            spec.outputs.report = a.report;
            spec
        }
        Cmd::EmbedVerify(a) => {
            let mut spec = with_common(Command::EmbedVerify, &a.common);
            spec.input = Some(a.matrix.source()?);
            spec.params.sketch = Some(a.sketch);
            spec.params.rows = a.rows;
            spec.params.eps = Some(a.eps);
            spec.params.delta = Some(a.delta);
            spec
        }
        Cmd::RegressL2(a) => {
            let mut spec = with_common(Command::RegressL2, &a.common);
            let input = a.matrix.source()?;
            let n = rows_of(&input)?;
            spec.input = Some(input);
            spec.rhs = Some(a.rhs.source(n));
            spec.params.mode = Some(if a.precond { "precond" } else { "sketch" }.into());
            spec.params.eps = Some(a.eps.unwrap_or(if a.precond { 1e-10 } else { 0.5 }));
            spec
        }
        Cmd::RegressL1(a) => {
            let mut spec = with_common(Command::RegressL1, &a.common);
            let input = a.matrix.source()?;
            let n = rows_of(&input)?;
            spec.input = Some(input);
            spec.rhs = Some(a.rhs.source(n));
            spec.params.eps = Some(a.eps);
            spec.params.sketch = Some(a.embedding);
            spec
        }
        Cmd::Lowrank(a) => {
            let mut spec = with_common(Command::Lowrank, &a.common);
            spec.input = Some(a.matrix.source()?);
            spec.params.k = Some(a.k);
            spec.params.eps = Some(a.eps);
            spec.params.mode = Some(if a.spectral { "spectral" } else { "frobenius" }.into());
            spec
        }
        Cmd::Cur(a) => {
            let mut spec = with_common(Command::Cur, &a.common);
            spec.input = Some(a.matrix.source()?);
            spec.params.k = Some(a.k);
            spec.params.eps = Some(a.eps);
            spec
        }
        Cmd::Distributed(a) => {
            let mut spec = with_common(Command::Distributed, &a.common);
            let scenario = match &a.scenario {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?
                }
                None => Scenario {
                    s: a.s,
                    n: a.matrix.n,
                    d: a.matrix.d,
                    k: a.k,
                    eps: a.eps,
                    seed: a.share_seed,
                    generator: a.matrix.source()?,
                },
            };
            spec.params.scenario = Some(scenario);
            spec.params.integer_safe = Some(a.integer_safe);
            spec.outputs.artifact = a.ledger;
            spec
        }
        Cmd::Sparsify(a) => {
            let mut spec = with_common(Command::Sparsify, &a.common);
            spec.input = Some(match (a.edges, a.graph) {
                (Some(path), _) => Source::EdgeList { path },
                (None, Some(f)) => graph_source(f, a.n, a.p, a.gen_seed),
                (None, None) => bail!("give --edges FILE or --graph complete|er"),
            });
            spec.params.eps = Some(a.eps);
            spec.params.chain = Some(a.chain);
            spec.outputs.artifact = a.out;
            spec.outputs.laplacian = a.laplacian;
            spec
        }
        Cmd::Schatten(a) => {
            let mut spec = with_common(Command::Schatten, &a.common);
            spec.input = Some(a.matrix.source()?);
            spec.params.p = Some(a.p);
            spec.params.eps = Some(a.eps);
            spec
        }
        Cmd::AttackJl(a) => {
            let mut spec = with_common(Command::AttackJl, &a.common);
            spec.params.k = Some(a.k);
            spec.params.n = Some(a.n.unwrap_or(2 * a.k));
            spec
        }
        Cmd::Replay(a) => {
            let text = fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
            let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.report.display()))?;
            let schema = v.get("schema").and_then(|s| s.as_u64());
            if schema != Some(u64::from(sketch_nla_cli::report::SCHEMA)) {
                bail!("{} has schema {schema:?}, expected {}", a.report.display(), sketch_nla_cli::report::SCHEMA);
            }
            let spec = v.get("spec").context("report has no spec")?;
            ExperimentSpec::from_json(&spec.to_string())?
        }
    })
}

/// Row count of a matrix source, reading the file header when needed.
fn rows_of(src: &Source) -> anyhow::Result<usize> {
    Ok(match src {
        Source::PlantedRank { n, .. } | Source::RandomGaussian { n, .. } => *n,
        _ => sketch_nla_cli::run::load_matrix(src)?.rows(),
    })
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("SKETCH_NLA_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().with_context(|| format!("SKETCH_NLA_THREADS = `{v}` is not a count"))?;
    if n == 0 {
        bail!("SKETCH_NLA_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| resolve(cli.cmd)).and_then(|spec| {
        let report = execute(&spec)?;
        if spec.outputs.report.is_none() && spec.command != Command::Gen {
            print!("{}", report.to_json());
        }
        Ok(report)
    });
    match result {
        Ok(r) if r.aggregate.pass => ExitCode::SUCCESS,
        Ok(r) => {
            let a = &r.aggregate;
            eprintln!("contract not met: {} ({} of {} passed, {} required)", a.contract, a.passed, a.total, a.required);
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
