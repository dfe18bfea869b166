use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sketch_nla::gen::planted_rank;
use sketch_nla::matrix::mm;
use sketch_nla_cli::report::Quantiles;
use sketch_nla_cli::spec::{Command as Cmd, ExperimentSpec, GraphFamily, Scenario, SeedRange, Source};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sketch-nla"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).env_remove("SKETCH_NLA_THREADS").output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn spec_round_trips_through_canonical_json() {
    let mut spec = ExperimentSpec::new(Cmd::Distributed, "3..12".parse().unwrap());
    spec.params.scenario = Some(Scenario {
        s: 4,
        n: 50,
        d: 10,
        k: 2,
        eps: 0.5,
        seed: 9,
        generator: Source::PlantedRank { n: 50, d: 10, k: 2, strength: 1.0, noise: 0.01, seed: 1 },
    });
    spec.params.integer_safe = Some(true);
    spec.outputs.report = Some("r.json".into());
    let text = spec.to_canonical_json();
    let back = ExperimentSpec::from_json(&text).unwrap();
    assert_eq!(back, spec);
    assert_eq!(back.to_canonical_json(), text);

    let mut g = ExperimentSpec::new(Cmd::Sparsify, "0".parse().unwrap());
    g.input = Some(Source::Graph { family: GraphFamily::ErdosRenyi, n: 20, p: 0.3, seed: 2 });
    assert_eq!(ExperimentSpec::from_json(&g.to_canonical_json()).unwrap(), g);
    assert!(ExperimentSpec::from_json(r#"{"command":"cur","params":{},"seeds":"0..1","outputs":{},"bogus":1}"#).is_err());
}

#[test]
fn seed_ranges() {
    let r: SeedRange = "0..99".parse().unwrap();
    assert_eq!(r.seeds().len(), 100);
    assert_eq!("7".parse::<SeedRange>().unwrap().seeds(), vec![7]);
    assert_eq!("2..=4".parse::<SeedRange>().unwrap().seeds(), vec![2, 3, 4]);
    assert!("5..4".parse::<SeedRange>().is_err());
    assert!("a..4".parse::<SeedRange>().is_err());
    assert_eq!(r.to_string(), "0..99");
}

#[test]
fn nearest_rank_quantiles() {
    let q = Quantiles::of(&[5.0, 1.0, 4.0, 2.0, 3.0, 6.0, 7.0, 8.0, 9.0, 10.0]).unwrap();
    assert_eq!((q.min, q.p10, q.p50, q.p90, q.max), (1.0, 1.0, 5.0, 9.0, 10.0));
    assert!(Quantiles::of(&[]).is_none());
}

#[test]
fn gen_is_reproducible_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen", "--planted-rank", "5", "--n", "60", "--d", "30", "--noise", "0.01", "--seed", "4"];
    assert!(run(dir.path(), &[&args[..], &["--out", "a.mtx"]].concat()).status.success());
    assert!(run(dir.path(), &[&args[..], &["--out", "b.mtx"]].concat()).status.success());
    let a = fs::read(dir.path().join("a.mtx")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.mtx")).unwrap());
    let m = mm::mm_read(dir.path().join("a.mtx")).unwrap().to_dense();
    assert_eq!(m, planted_rank(60, 30, 5, 1.0, 0.01, 4).unwrap());

    assert!(run(dir.path(), &["gen", "--planted-rank", "5", "--n", "60", "--d", "30", "--seed", "5", "--out", "c.mtx"])
        .status
        .success());
    assert_ne!(a, fs::read(dir.path().join("c.mtx")).unwrap());
}

#[test]
fn regress_l2_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["gen", "--gaussian", "--n", "500", "--d", "5", "--seed", "1", "--out", "A.mtx"]).status.success());
    assert!(run(p, &["gen", "--gaussian", "--n", "500", "--d", "1", "--seed", "2", "--out", "b.mtx"]).status.success());
    let out = run(p, &["regress-l2", "--in", "A.mtx", "--b", "b.mtx", "--eps", "0.5", "--seeds", "0..99", "--report", "r.json", "--csv", "r.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&p.join("r.json"));
    assert_eq!(r["schema"], 1);
    assert_eq!(r["seeds"].as_array().unwrap().len(), 100);
    assert_eq!(r["spec"]["params"]["eps"], 0.5);
    assert_eq!(r["spec"]["seeds"], "0..99");
    let agg = &r["aggregate"];
    assert_eq!(agg["pass"], true);
    assert_eq!(agg["required"], 95);
    assert!(agg["quantiles"]["cost_ratio"]["p50"].as_f64().unwrap() >= 1.0 - 1e-12);
    let csv = fs::read_to_string(p.join("r.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("seed,cost_ratio"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn cur_reports_counts_and_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["gen", "--planted-rank", "4", "--n", "60", "--d", "60", "--noise", "0.01", "--out", "A.mtx"]).status.success());
    let out = run(p, &["cur", "--in", "A.mtx", "--k", "4", "--eps", "0.5", "--seeds", "0..9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    for t in r["trials"].as_array().unwrap() {
        assert!(t["c"].as_f64().unwrap() >= 1.0 && t["r"].as_f64().unwrap() >= 1.0);
        assert_eq!(t["rank_u"], 4.0);
    }
    assert_eq!(r["columns"], serde_json::json!(["ratio", "c", "r", "rank_u"]));
}

#[test]
fn contract_violation_exits_nonzero_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    // Odd p: the probes see eigenvalues ±σ and average to zero.
    let out = run(dir.path(), &["schatten", "--planted-rank", "3", "--n", "10", "--d", "10", "--p", "1", "--seeds", "0..9", "--report", "s.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("contract not met"));
    assert_eq!(json(&dir.path().join("s.json"))["aggregate"]["pass"], false);

    let out = run(dir.path(), &["schatten", "--planted-rank", "3", "--n", "10", "--d", "10", "--p", "2", "--seeds", "0..9"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_input_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["cur", "--in", "missing.mtx", "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.mtx"));
    assert_ne!(run(dir.path(), &["cur", "--k", "2", "--frobnicate"]).status.code(), Some(0));
    assert_ne!(run(dir.path(), &["transmogrify"]).status.code(), Some(0));
    fs::write(dir.path().join("bad.mtx"), "%%MatrixMarket matrix array real general\n2 2\n1\n2\n").unwrap();
    let out = run(dir.path(), &["lowrank", "--in", "bad.mtx", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("g.txt"), "0 1 1\n1 1 2\n").unwrap();
    let out = run(dir.path(), &["sparsify", "--edges", "g.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("self-loop"));
}

#[test]
fn replay_reproduces_report_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = run(p, &["lowrank", "--planted-rank", "3", "--n", "80", "--d", "40", "--k", "3", "--seeds", "0..7", "--report", "r.json", "--csv", "r.csv"]);
    assert!(out.status.success());
    let first = fs::read(p.join("r.json")).unwrap();
    let csv = fs::read(p.join("r.csv")).unwrap();
    fs::remove_file(p.join("r.json")).unwrap();
    fs::write(p.join("copy.json"), &first).unwrap();
    assert!(run(p, &["replay", "copy.json"]).status.success());
    assert_eq!(fs::read(p.join("r.json")).unwrap(), first);
    assert_eq!(fs::read(p.join("r.csv")).unwrap(), csv);
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["attack-jl", "--k", "7", "--seeds", "0..15"];
    let one = bin().current_dir(dir.path()).args(args).env("SKETCH_NLA_THREADS", "1").output().unwrap();
    let three = bin().current_dir(dir.path()).args(args).env("SKETCH_NLA_THREADS", "3").output().unwrap();
    assert!(one.status.success() && three.status.success());
    assert_eq!(one.stdout, three.stdout);
    let bad = bin().current_dir(dir.path()).args(args).env("SKETCH_NLA_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn distributed_scenario_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let scenario = r#"{"s": 3, "n": 120, "d": 30, "k": 4, "ε": 0.5, "seed": 7,
        "generator": {"kind": "planted_rank", "n": 120, "d": 30, "k": 4, "strength": 1.0, "noise": 0.05, "seed": 3}}"#;
    fs::write(p.join("sc.json"), scenario).unwrap();
    let out = run(p, &["distributed", "--scenario", "sc.json", "--seeds", "0..9", "--ledger", "ledger.csv", "--report", "r.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&p.join("r.json"));
    assert_eq!(r["spec"]["params"]["scenario"]["s"], 3);
    let ledger = fs::read_to_string(p.join("ledger.csv")).unwrap();
    let mut lines = ledger.lines();
    assert_eq!(lines.next(), Some("from,to,round,words,tag"));
    let words: f64 = lines.map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap()).sum();
    assert_eq!(words, r["trials"][0]["words"].as_f64().unwrap());

    fs::write(p.join("bad.json"), r#"{"s": 3, "n": 10}"#).unwrap();
    assert_eq!(run(p, &["distributed", "--scenario", "bad.json"]).status.code(), Some(2));
}

#[test]
fn sparsify_edge_list_and_laplacian() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["gen", "--graph", "complete", "--n", "20", "--out", "k20.txt"]).status.success());
    let out = run(p, &["sparsify", "--edges", "k20.txt", "--seeds", "0..9", "--chain", "--out", "sp.txt", "--laplacian", "L.mtx"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["aggregate"]["extra"]["chain_ok"], true);
    assert_eq!(r["aggregate"]["extra"]["edges"], 190);
    let l = mm::mm_read(p.join("L.mtx")).unwrap().to_dense();
    assert_eq!(l.shape(), (20, 20));
    for i in 0..20 {
        assert!(l.row(i).iter().sum::<f64>().abs() < 1e-9);
    }
    let text = fs::read_to_string(p.join("sp.txt")).unwrap();
    let kept = sketch_nla::graph::WeightedGraph::parse_edge_list(&text).unwrap();
    assert_eq!(kept.edges().len() as f64, r["trials"][0]["edges"].as_f64().unwrap());
}

#[test]
fn unwritable_report_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["attack-jl", "--k", "3", "--seeds", "0", "--report", "no/such/dir/r.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("no").exists());
}
