use std::path::Path;
use std::process::{Command, Output};

fn vecchia(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vecchia")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = vecchia(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn synth_dag_fit_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--n-axis", "33", "--alpha", "1.5", "--tau", "10", "--seed", "4", "--out", "data.csv", "--truth", "truth.csv"]);
    assert_eq!(header(&dir.join("data.csv")), "x1,y");
    assert_eq!(std::fs::read_to_string(dir.join("data.csv")).unwrap().lines().count(), 34);

    ok(dir, &["dag", "build", "--input", "data.csv", "--method", "grid", "--order", "1", "--out", "dag.json"]);
    let dag: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("dag.json")).unwrap()).unwrap();
    for field in ["dimension", "gamma", "order_l", "m", "construction", "nodes"] {
        assert!(dag.get(field).is_some(), "missing {field}");
    }

    let fit = ["fit", "--data", "data.csv", "--dag", "dag.json", "--alpha", "1.5", "--tau", "10", "--iters", "120", "--burn", "20", "--seed", "9"];
    ok(dir, &[&fit[..], &["--out", "a.csv", "--summary", "summary.csv"]].concat());
    ok(dir, &[&fit[..], &["--out", "b.csv"]].concat());
    let a = std::fs::read_to_string(dir.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(dir.join("b.csv")).unwrap(), "seeded fits differ");
    assert!(a.starts_with("iter,sigma2,tau,f_0,"));
    assert_eq!(a.lines().count(), 101);
    assert_eq!(header(&dir.join("summary.csv")), "node_index,x1,post_mean,q025,q975");

    std::fs::write(dir.join("test.csv"), "x1\n0.1\n0.5\n0.9\n").unwrap();
    ok(dir, &["predict", "--dag", "dag.json", "--chain", "a.csv", "--test", "test.csv", "--alpha", "1.5", "--tau", "10", "--out", "pred.csv"]);
    let pred = std::fs::read_to_string(dir.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().next().unwrap(), "point,mean,variance");
    for line in pred.lines().skip(1) {
        let variance: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(variance > 0.0 && variance < 1.0);
    }
}

#[test]
fn every_dag_method_builds() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let points: String = (0..40).map(|i| format!("{},{}\n", (i as f64 * 0.37).fract(), (i as f64 * 0.61).fract())).collect();
    std::fs::write(dir.join("pts.csv"), format!("x1,x2\n{points}")).unwrap();
    ok(dir, &["dag", "build", "--input", "pts.csv", "--method", "nngp", "--parents", "4", "--out", "nn.json"]);
    ok(dir, &["dag", "build", "--input", "pts.csv", "--method", "general", "--order", "1", "--out", "gen.json"]);
    let out = vecchia(dir, &["dag", "build", "--input", "pts.csv", "--method", "grid", "--out", "grid.json"]);
    assert_eq!(out.status.code(), Some(2), "scattered points are not a lattice");
}

#[test]
fn diagnose_checks_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--n-axis", "65", "--alpha", "1.5", "--seed", "1", "--out", "data.csv"]);
    ok(dir, &["dag", "build", "--input", "data.csv", "--method", "grid", "--order", "1", "--out", "dag.json"]);

    ok(dir, &["diagnose", "--check", "transition-measure", "--alpha", "1.5", "--out", "tm.csv"]);
    let tm = std::fs::read_to_string(dir.join("tm.csv")).unwrap();
    let row: Vec<f64> = tm.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 2.0);
    assert!((row[1] - 0.5).abs() < 1e-12);
    assert!(row[2] < 1.0);

    ok(dir, &["diagnose", "--check", "vartheta", "--dag", "dag.json", "--out", "vt.csv"]);
    assert!(std::fs::read_to_string(dir.join("vt.csv")).unwrap().ends_with(",1.0\n"));

    ok(dir, &["diagnose", "--check", "variance-decay", "--dag", "dag.json", "--alpha", "1.5", "--out", "vd.csv"]);
    assert!(header(&dir.join("vd.csv")).starts_with("layer,count,min,median,max"));

    let stdout = ok(dir, &["diagnose", "--check", "flat-limit", "--alpha", "2.5", "--out", "fl.csv"]);
    let slope: f64 = stdout.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(slope > 0.5, "flat-limit slope {slope}");
}

#[test]
fn bench_and_experiment_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["bench", "--n-axis", "17,33", "--alpha", "1.5", "--seed", "2", "--repeats", "1", "--out", "bench.csv"]);
    assert_eq!(header(&dir.join("bench.csv")), "n,m,build_ms,density_ms,log_density,truth_interpolated");

    std::fs::write(
        dir.join("exp.toml"),
        r#"
dimension = 1
n_list = [9, 17]
seeds = [1, 2]
sigma_noise = 0.1

[truth]
alpha_true = 1.5
tau_true = 10.0
s_true = 1.0
seed = 3

[mcmc]
n_iter = 30
burn_in = 10

[[methods]]
dag = "norming"
kernel = { alpha = 1.5, tau = 10.0, s = 1.0 }

[[methods]]
dag = "nngp"
parent_count = 3
kernel = { alpha = 1.5, tau = 10.0, s = 1.0 }
"#,
    )
    .unwrap();
    ok(dir, &["experiment", "--config", "exp.toml", "--outputs", "out"]);
    let results = std::fs::read_to_string(dir.join("out/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2);
    assert!(dir.join("out/manifest.json").exists());
}

#[test]
fn exit_codes_separate_configuration_from_numerics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(vecchia(dir, &["synth", "--n-axis", "9", "--alpha", "1.5", "--out", "d.csv"]).status.code(), Some(2));
    assert_eq!(vecchia(dir, &["fit", "--data", "missing.csv", "--dag", "x.json", "--alpha", "1", "--seed", "1", "--out", "c.csv"]).status.code(), Some(2));
    assert_eq!(vecchia(dir, &["diagnose", "--check", "transition-measure", "--alpha", "2.5", "--out", "t.csv"]).status.code(), Some(2));
    std::fs::write(dir.join("bad.toml"), "dimension = 1\nn_list = [17, 9]\n").unwrap();
    assert_eq!(vecchia(dir, &["experiment", "--config", "bad.toml"]).status.code(), Some(2));

    // a chain without draws
    ok(dir, &["synth", "--n-axis", "9", "--alpha", "1.5", "--seed", "1", "--out", "d.csv"]);
    ok(dir, &["dag", "build", "--input", "d.csv", "--method", "grid", "--out", "dag.json"]);
    std::fs::write(dir.join("c.csv"), "iter,sigma2,tau\n").unwrap();
    assert_eq!(
        vecchia(dir, &["predict", "--dag", "dag.json", "--chain", "c.csv", "--test", "d.csv", "--alpha", "1.5", "--out", "p.csv"]).status.code(),
        Some(3)
    );
}
