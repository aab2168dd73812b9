use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ndpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndpp")).args(args).env_remove("NDPP_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ndpp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, tag: &str, n: &str, m: &str, seed: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    simulate_s(dir, tag, n, m, "3", seed)
}

fn simulate_s(dir: &Path, tag: &str, n: &str, m: &str, s: &str, seed: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let edges = dir.join(format!("{tag}_edges.txt"));
    let params = dir.join(format!("{tag}_params.json"));
    ok(&["simulate", "--n", n, "--d", "3", "--m", m, "--s", s, "--latent", "uniform", "--seed", seed,
        "--out-edges", p(&edges), "--out-params", p(&params)]);
    (edges, params)
}

#[test]
fn simulate_is_rerun_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (e1, p1) = simulate(dir.path(), "a", "100", "2000", "1");
    let (e2, p2) = simulate(dir.path(), "b", "100", "2000", "1");
    let text = fs::read_to_string(&e1).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2000);
    assert_eq!(text, fs::read_to_string(&e2).unwrap());
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a_edges.txt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["flags"]["m"], 2000);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.txt");
    let prm = dir.path().join("p.json");
    let out = ndpp(&["simulate", "--n", "10", "--m", "0", "--out-edges", p(&e), "--out-params", p(&prm)]);
    assert_eq!(out.status.code(), Some(2));
    let out = ndpp(&["simulate", "--n", "10", "--d", "4", "--m", "5", "--latent", "vmf",
        "--out-edges", p(&e), "--out-params", p(&prm)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(ndpp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_edges_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ndpp(&["fit", "--edges", p(&dir.path().join("nope.txt")), "--out-model", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
}

#[test]
fn fit_align_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (edges, truth) = simulate_s(d, "t", "25", "600", "1", "3");
    let model = d.join("model.json");
    let stdout = ok(&["fit", "--edges", p(&edges), "--d", "3", "--starts", "2", "--epochs", "300", "--lr", "0.05",
        "--seed", "5", "--out-model", p(&model)]);
    assert!(stdout.contains("log-likelihood per edge"));

    let align = d.join("align.csv");
    ok(&["align", "--model", p(&model), "--truth", p(&truth), "--m", "600", "--s", "3", "--out-report", p(&align)]);
    let csv = fs::read_to_string(&align).unwrap();
    assert!(csv.starts_with("metric,value,seed,m,d,s\n"));
    for metric in ["V", "B", "gamma", "C", "L", "marginal", "conditional"] {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{metric},"))), "{metric} missing");
    }

    let test = d.join("test.txt");
    ok(&["sample", "--model", p(&truth), "--m", "50", "--seed", "9", "--out-edges", p(&test)]);
    let r1 = d.join("r1.csv");
    let r2 = d.join("r2.csv");
    for r in [&r1, &r2] {
        ok(&["eval", "--model", p(&model), "--test-edges", p(&test), "--metric", "both", "--seed", "4",
            "--dataset", "synthetic", "--out-report", p(r)]);
    }
    let report = fs::read_to_string(&r1).unwrap();
    assert_eq!(report, fs::read_to_string(&r2).unwrap());
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("dataset,repeat,metric,value"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().map(|r| r[2]).collect::<Vec<_>>(), vec!["auc", "mpr"]);
    for r in &rows {
        let v: f64 = r[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    let curve = fs::read_to_string(d.join("r1.curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 102);
}

#[test]
fn symmetric_fit_writes_null_skew() {
    let dir = tempfile::tempdir().unwrap();
    let (edges, _) = simulate(dir.path(), "s", "8", "300", "2");
    let model = dir.path().join("dpp.json");
    ok(&["fit", "--edges", p(&edges), "--symmetric", "--starts", "1", "--epochs", "100", "--out-model", p(&model)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(v["gamma"], 0.0);
    assert!(v["C_upper"].is_null());
}

#[test]
fn eval_rejects_foreign_node_universe() {
    let dir = tempfile::tempdir().unwrap();
    let (_, small) = simulate(dir.path(), "small", "6", "20", "1");
    let (big_edges, _) = simulate(dir.path(), "big", "9", "20", "1");
    let out = ndpp(&["eval", "--model", p(&small), "--test-edges", p(&big_edges),
        "--out-report", p(&dir.path().join("r.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("node"));
}

#[test]
fn split_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    let mut text = String::new();
    for k in 0..40u64 {
        text.push_str(&format!("{} {} {}\n", 100 + k % 7, 200 + k % 5, 300 + k % 3));
    }
    text.push_str("42\n");
    fs::write(&raw, text).unwrap();
    let stdout = ok(&["summarize", "--edges", p(&raw)]);
    assert!(stdout.contains("nodes 15") && stdout.contains("edges 40"), "{stdout}");

    let out = dir.path().join("splits");
    ok(&["split", "--edges", p(&raw), "--repeats", "2", "--seed", "3", "--out-dir", p(&out)]);
    for r in 0..2 {
        let train = fs::read_to_string(out.join(format!("train_{r}.txt"))).unwrap();
        let test = fs::read_to_string(out.join(format!("test_{r}.txt"))).unwrap();
        assert!(train.starts_with("# nodes: 15\n") && test.starts_with("# nodes: 15\n"));
        assert_eq!(train.lines().count() - 1, 32);
        assert_eq!(test.lines().count() - 1, 8);
    }
    assert!(out.join("edges.txt.manifest.json").exists());
}

#[test]
fn size_histograms_shift_with_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sizes.csv");
    ok(&["experiment", "sizes", "--n", "40", "--m", "300", "--s-values", "1,4,7", "--seed", "2", "--out", p(&out)]);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("s,size,count\n"));
    let mut means = Vec::new();
    for s in ["1", "4", "7"] {
        let (mut total, mut weighted) = (0.0, 0.0);
        for l in csv.lines().skip(1).filter(|l| l.split(',').next() == Some(s)) {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            total += f[2];
            weighted += f[1] * f[2];
        }
        assert_eq!(total, 300.0);
        means.push(weighted / total);
    }
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
}

#[test]
fn cv_picks_a_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let (edges, _) = simulate(dir.path(), "cv", "8", "200", "4");
    let out = dir.path().join("cv.json");
    let stdout = ok(&["cv", "--edges", p(&edges), "--dims", "2,3", "--folds", "2", "--starts", "1", "--epochs", "50",
        "--out", p(&out)]);
    assert!(stdout.contains("chosen d = "));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!([2, 3].contains(&v["chosen"].as_u64().unwrap()));
    assert_eq!(v["scores"].as_array().unwrap().len(), 2);
}

#[test]
fn recovery_experiment_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rec.csv");
    ok(&["experiment", "recovery", "--n", "6", "--ms", "50,100", "--replicates", "1", "--starts", "1",
        "--epochs", "30", "--compare", "--out", p(&out)]);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("model,replicate,metric,value,seed,m,d,s\n"));
    assert!(csv.lines().any(|l| l.starts_with("ndpp,0,L,")));
    assert!(csv.lines().any(|l| l.starts_with("dpp,0,loglik,")));
}

#[test]
fn threads_flag_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let (_, truth) = simulate(dir.path(), "th", "10", "30", "8");
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    ok(&["--threads", "1", "sample", "--model", p(&truth), "--m", "200", "--seed", "1", "--out-edges", p(&a)]);
    ok(&["--threads", "2", "sample", "--model", p(&truth), "--m", "200", "--seed", "1", "--out-edges", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.txt");
    ok(&["sample", "--model", p(&truth), "--m", "20", "--experimental-printed-sampler", "--out-edges", p(&c)]);
    assert_eq!(fs::read_to_string(&c).unwrap().lines().count(), 21);
    assert_eq!(ndpp(&["--threads", "0", "summarize", "--edges", p(&a)]).status.code(), Some(2));
}
