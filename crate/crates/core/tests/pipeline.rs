//! End-to-end runs through file formats, DAG builders and the sampler.

use std::sync::Arc;

use vecchia::dagbuild::{build_general_dag, build_grid_dag, build_maximin_nngp_dag, GeneralOptions};
use vecchia::experiment::{generate_synthetic, read_results_csv, run_experiment, unit_grid, ExperimentConfig};
use vecchia::inference::{run_gibbs, McmcConfig, PriorSpec};
use vecchia::io::{read_data_csv, read_trace_csv, write_points_csv, write_summary_csv, write_trace_csv};
use vecchia::{LayeredDag, MaternConfig, PointSet, VecchiaFactor};

#[test]
fn dag_json_round_trips_for_every_builder() {
    let grid = unit_grid(2, 9).unwrap();
    let scattered = PointSet::from_points(
        &(0..30).map(|i| [(i as f64 * 0.377).fract(), (i as f64 * 0.619).fract()]).collect::<Vec<_>>(),
    )
    .unwrap();
    let dags = [
        build_grid_dag(&grid, 1, false).unwrap(),
        build_grid_dag(&grid, 1, true).unwrap(),
        build_general_dag(&scattered, 1, GeneralOptions::default()).unwrap(),
        build_maximin_nngp_dag(&scattered, 5, Some(11)).unwrap(),
    ];
    let tmp = tempfile::tempdir().unwrap();
    for (k, dag) in dags.iter().enumerate() {
        let path = tmp.path().join(format!("dag{k}.json"));
        dag.save(&path).unwrap();
        let back = LayeredDag::load(&path).unwrap();
        assert_eq!(&back, dag);
        assert_eq!(back.to_json().unwrap(), std::fs::read_to_string(&path).unwrap());
    }
}

#[test]
fn tampered_dag_json_is_rejected() {
    let dag = build_grid_dag(&unit_grid(1, 9).unwrap(), 1, false).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&dag.to_json().unwrap()).unwrap();
    value["nodes"][3]["parents"] = serde_json::json!([5]);
    assert!(LayeredDag::from_json(&value.to_string()).is_err());
}

#[test]
fn fit_through_files_recovers_the_truth() {
    let config = ExperimentConfig::from_toml(
        r#"
dimension = 1
n_list = [65]
seeds = [1]
sigma_noise = 0.1

[truth]
alpha_true = 1.5
tau_true = 10.0
s_true = 1.0
seed = 21

[[methods]]
dag = "norming"
kernel = { alpha = 1.5, tau = 10.0, s = 1.0 }
"#,
    )
    .unwrap();
    let data = generate_synthetic(&config, 65, 1).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let data_path = tmp.path().join("data.csv");
    write_points_csv(&data_path, &data.points, Some(&data.y)).unwrap();
    let dataset = read_data_csv(&data_path).unwrap();
    assert_eq!(dataset.y, data.y);

    let dag = Arc::new(build_grid_dag(&dataset.points, 1, false).unwrap());
    let cfg = MaternConfig::new(1.5, 10.0, 1.0).unwrap();
    let mcmc = McmcConfig { n_iter: 1500, burn_in: 300, seed: 8, ..McmcConfig::default() };
    // a weak noise prior; with b0 = 1 and 65 points the prior dominates the noise estimate
    let priors = PriorSpec { b0: 1e-3, ..PriorSpec::default() };
    let out = run_gibbs(&dataset, dag.clone(), cfg, priors, mcmc).unwrap();

    let trace_path = tmp.path().join("chain.csv");
    write_trace_csv(&trace_path, &out.trace).unwrap();
    let trace = read_trace_csv(&trace_path).unwrap();
    assert_eq!(trace.latent.len(), 1200);
    assert_eq!(trace.sigma2, out.trace.sigma2);
    write_summary_csv(&tmp.path().join("summary.csv"), &dag.points(), &out.summary).unwrap();

    // posterior mean in DAG order compared with the truth at the same nodes
    let truth_at = |p: &[f64]| {
        let k = (p[0] * 64.0).round() as usize;
        data.f0[k]
    };
    let rmse = ((0..dag.len()).map(|i| (out.summary.mean[i] - truth_at(dag.point(i))).powi(2)).sum::<f64>()
        / dag.len() as f64)
        .sqrt();
    assert!(rmse < 0.1, "posterior mean rmse {rmse}");
    let sigma2 = trace.sigma2.iter().sum::<f64>() / trace.sigma2.len() as f64;
    assert!((0.004..0.025).contains(&sigma2), "noise variance estimate {sigma2}");
    let covered = (0..dag.len())
        .filter(|&i| (out.summary.q025[i]..=out.summary.q975[i]).contains(&truth_at(dag.point(i))))
        .count();
    assert!(covered as f64 >= 0.8 * dag.len() as f64, "{covered} of {} nodes covered", dag.len());
}

#[test]
fn rough_truth_study_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
dimension = 1
n_list = [17, 33]
seeds = [1]
sigma_noise = 0.1
outputs = "{}"

[truth]
alpha_true = 0.5
tau_true = 10.0
s_true = 1.0
seed = 5

[mcmc]
n_iter = 200
burn_in = 50

[[methods]]
name = "Norming1"
dag = "norming"
parent_count = 1
kernel = {{ alpha = 0.5, tau = 10.0, s = 1.0 }}

[[methods]]
name = "Norming2"
dag = "norming"
parent_count = 2
kernel = {{ alpha = 0.5, tau = 10.0, s = 1.0 }}

[[methods]]
name = "Maximin"
dag = "nngp"
kernel = {{ alpha = 0.5, tau = 10.0, s = 1.0 }}
"#,
        tmp.path().join("rough").display()
    );
    let config = ExperimentConfig::from_toml(&text).unwrap();
    let rows = run_experiment(&config).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.error.is_none()), "{rows:?}");
    let labels: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(labels, ["Norming1", "Norming2", "Maximin", "Norming1", "Norming2", "Maximin"]);
    assert_eq!(read_results_csv(&tmp.path().join("rough/results.csv")).unwrap().len(), 6);

    // order-zero corner sets give every node a single parent
    let points = unit_grid(1, 17).unwrap();
    let dag = Arc::new(build_grid_dag(&points, 0, false).unwrap());
    assert!(dag.nodes.iter().all(|n| n.parents.len() <= 1));
    let factor = VecchiaFactor::build(dag, MaternConfig::new(0.5, 10.0, 1.0).unwrap(), false).unwrap();
    assert!(factor.variances().iter().all(|&d| d > 0.0 && d <= 1.0));
}
