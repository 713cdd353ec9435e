//! `vecchia` command line tool.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vecchia::dagbuild::{build_general_dag, build_grid_dag, build_maximin_nngp_dag, default_parent_count, GeneralOptions};
use vecchia::diagnostics::{estimate_vartheta, flat_limit_error, transition_measure_sup, variance_decay_profile};
use vecchia::experiment::{bench_density, generate_synthetic, run_experiment, ExperimentConfig, TruthSpec};
use vecchia::inference::{run_gibbs, McmcConfig, PriorSpec, TauPrior};
use vecchia::io::{read_data_csv, read_points_csv, read_trace_csv, write_points_csv, write_summary_csv, write_trace_csv};
use vecchia::polymath::monomial_count;
use vecchia::{LayeredDag, MaternConfig, PointSet, Result, VecchiaError, VecchiaFactor};

#[derive(Parser)]
#[command(name = "vecchia", version, about = "Vecchia approximations of Matérn Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// DAG construction.
    #[command(subcommand)]
    Dag(DagCommand),
    /// Gibbs sampling of the posterior for noisy observations.
    Fit(FitArgs),
    /// Predictive moments at new locations from a stored chain.
    Predict(PredictArgs),
    /// Numerical checks of the approximation theory.
    Diagnose(DiagnoseArgs),
    /// Times factor construction and log-density evaluation on lattices.
    Bench(BenchArgs),
    /// Runs an experiment described by a TOML file.
    Experiment(ExperimentArgs),
    /// Draws a synthetic regression dataset on a lattice.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum DagCommand {
    /// Builds a DAG from a point file and writes it as JSON.
    Build(DagBuildArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DagKind {
    Grid,
    General,
    Nngp,
}

#[derive(Args)]
struct DagBuildArgs {
    /// CSV with columns x1..xd.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: DagKind,
    /// Polynomial order of the parent sets (grid and general).
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Neighbour count for nngp; defaults to round(2 ln n).
    #[arg(long)]
    parents: Option<usize>,
    /// Pad coarse grid layers with exterior nodes.
    #[arg(long)]
    augment: bool,
    /// Random tie-breaking in the maximin ordering.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
}

impl KernelArgs {
    fn config(&self) -> Result<MaternConfig> {
        MaternConfig::new(self.alpha, self.tau, self.s)
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV with columns x1..xd, y.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dag: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    burn: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long)]
    seed: u64,
    /// Sample tau under the power-exponential hyperprior.
    #[arg(long)]
    adapt_tau: bool,
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    #[arg(long, default_value_t = 1.0)]
    b0: f64,
    /// Hold the noise variance at this value.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Trace CSV.
    #[arg(long)]
    out: PathBuf,
    /// Pointwise posterior summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    dag: PathBuf,
    /// Trace CSV written by `fit`.
    #[arg(long)]
    chain: PathBuf,
    /// CSV with columns x1..xd.
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Polynomial order of the prediction parent sets; defaults to floor(alpha).
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    FlatLimit,
    VarianceDecay,
    Vartheta,
    TransitionMeasure,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, value_enum)]
    check: Check,
    /// DAG for variance-decay and vartheta.
    #[arg(long)]
    dag: Option<PathBuf>,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Dimension of the flat-limit point set.
    #[arg(long, default_value_t = 1)]
    dimension: usize,
    /// Grid resolution of the transition measure.
    #[arg(long, default_value_t = 4096)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1)]
    dimension: usize,
    /// Lattice points per axis, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n_axis: Vec<usize>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML configuration; seeds are listed in the file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory of the configuration.
    #[arg(long)]
    outputs: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    dimension: usize,
    /// Lattice points per axis.
    #[arg(long)]
    n_axis: usize,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 0.1)]
    sigma_noise: f64,
    #[arg(long)]
    seed: u64,
    /// Data CSV with columns x1..xd, y.
    #[arg(long)]
    out: PathBuf,
    /// Noise-free truth in the same layout.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Dag(DagCommand::Build(args)) => dag_build(args),
        Command::Fit(args) => fit(args),
        Command::Predict(args) => predict(args),
        Command::Diagnose(args) => diagnose(args),
        Command::Bench(args) => bench(args),
        Command::Experiment(args) => experiment(args),
        Command::Synth(args) => synth(args),
    }
}

fn dag_build(args: DagBuildArgs) -> Result<()> {
    let (points, _) = read_points_csv(&args.input)?;
    let dag = match args.method {
        DagKind::Grid => build_grid_dag(&points, args.order, args.augment)?,
        DagKind::General => {
            let opts = GeneralOptions { seed: args.seed, ..GeneralOptions::default() };
            build_general_dag(&points, args.order, opts)?
        }
        DagKind::Nngp => {
            let m = args.parents.unwrap_or_else(|| default_parent_count(points.len()));
            build_maximin_nngp_dag(&points, m, args.seed)?
        }
    };
    dag.save(&args.out)?;
    println!("{} nodes, {} layers, m = {}, i0 = {}", dag.len(), dag.num_layers(), dag.m, dag.i0);
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let data = read_data_csv(&args.data)?;
    let dag = Arc::new(LayeredDag::load(&args.dag)?);
    let cfg = args.kernel.config()?;
    let priors = PriorSpec {
        a0: args.a0,
        b0: args.b0,
        tau_prior: if args.adapt_tau {
            TauPrior::PowerExponential { alpha: cfg.alpha, d: dag.dimension, n: data.y.len() }
        } else {
            TauPrior::Fixed
        },
        fixed_sigma2: args.sigma2,
    };
    let mcmc = McmcConfig { n_iter: args.iters, burn_in: args.burn, thin: args.thin, seed: args.seed, ..McmcConfig::default() };
    let out = run_gibbs(&data, dag.clone(), cfg, priors, mcmc)?;
    write_trace_csv(&args.out, &out.trace)?;
    if let Some(path) = &args.summary {
        write_summary_csv(path, &dag.points(), &out.summary)?;
    }
    let sigma2_mean = out.trace.sigma2.iter().sum::<f64>() / out.trace.sigma2.len() as f64;
    println!(
        "{} draws, mean sigma^2 = {sigma2_mean:.4e}, mean CG iterations = {:.1}",
        out.trace.latent.len(),
        out.summary.cg_iters_mean
    );
    if let Some(rate) = out.summary.acceptance_rate {
        println!("tau acceptance rate = {rate:.3}");
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    point: usize,
    mean: f64,
    variance: f64,
}

/// Averages the per-draw predictive moments: the mean of the means, and the
/// conditional variance plus the spread of the means across draws.
fn predict(args: PredictArgs) -> Result<()> {
    let dag = Arc::new(LayeredDag::load(&args.dag)?);
    let trace = read_trace_csv(&args.chain)?;
    if trace.latent.is_empty() {
        return Err(VecchiaError::EmptyTrace);
    }
    let (test, _) = read_points_csv(&args.test)?;
    let cfg = args.kernel.config()?;
    let l = args.order.unwrap_or_else(|| cfg.floor_alpha());
    let factor = VecchiaFactor::build(dag, cfg, false)?;
    let k = trace.latent.len() as f64;
    let mut sum = vec![0.0; test.len()];
    let mut sum_sq = vec![0.0; test.len()];
    let mut variance = vec![0.0; test.len()];
    for z in &trace.latent {
        for (j, p) in factor.predict(&test, z, l)?.into_iter().enumerate() {
            sum[j] += p.mean;
            sum_sq[j] += p.mean * p.mean;
            variance[j] = p.variance;
        }
    }
    let mut w = csv::Writer::from_path(&args.out)?;
    for j in 0..test.len() {
        let mean = sum[j] / k;
        let spread = (sum_sq[j] / k - mean * mean).max(0.0);
        w.serialize(PredictionRow { point: j, mean, variance: variance[j] + spread })?;
    }
    w.flush()?;
    println!("{} predictions from {} draws", test.len(), trace.latent.len());
    Ok(())
}

#[derive(Serialize)]
struct FlatLimitRow {
    nu: f64,
    error: f64,
}

#[derive(Serialize)]
struct VarthetaRow {
    nodes: usize,
    layers: usize,
    m: usize,
    vartheta: f64,
}

#[derive(Serialize)]
struct TransitionRow {
    m: usize,
    at_half: f64,
    sup: f64,
    argmax: f64,
}

/// Principal lattice `{k / l : |k| <= l}`, unisolvent for polynomials of order `l`.
fn principal_lattice(d: usize, l: usize) -> Result<PointSet> {
    let mut points: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..d {
        points = points
            .iter()
            .flat_map(|p| (0..=l).map(move |k| [p.as_slice(), &[k]].concat()))
            .filter(|p| p.iter().sum::<usize>() <= l)
            .collect();
    }
    points.sort_by_key(|p| (p.iter().sum::<usize>(), p.clone()));
    debug_assert_eq!(points.len(), monomial_count(d, l));
    let scale = l.max(1) as f64;
    PointSet::new(d, points.iter().flatten().map(|&k| k as f64 / scale).collect())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let load_dag = || -> Result<LayeredDag> {
        let path = args.dag.as_ref().ok_or_else(|| VecchiaError::Config("this check needs --dag".into()))?;
        LayeredDag::load(path)
    };
    let mut w = csv::Writer::from_path(&args.out)?;
    match args.check {
        Check::FlatLimit => {
            let cfg = MaternConfig::new(args.alpha, 1.0, 1.0)?;
            let a = principal_lattice(args.dimension, cfg.floor_alpha())?;
            let x = vec![1.0 / 3.0; args.dimension];
            // below about 1e-2 rounding in the kriging solve swamps the error
            let nus = [0.2, 0.1, 0.05, 0.025, 0.0125];
            let curve = flat_limit_error(&a, &x, args.alpha, &nus)?;
            for &(nu, error) in &curve.points {
                w.serialize(FlatLimitRow { nu, error })?;
            }
            match curve.slope {
                Some(slope) => println!("log-log slope {slope:.3}"),
                None => println!("error vanishes at some nu"),
            }
        }
        Check::VarianceDecay => {
            let cfg = MaternConfig::new(args.alpha, args.tau, args.s)?;
            let factor = VecchiaFactor::build(Arc::new(load_dag()?), cfg, false)?;
            let profile = variance_decay_profile(&factor);
            for layer in &profile.layers {
                w.serialize(layer)?;
            }
            println!("{} layers", profile.layers.len());
        }
        Check::Vartheta => {
            let dag = load_dag()?;
            let vartheta = estimate_vartheta(&dag)?;
            w.serialize(VarthetaRow { nodes: dag.len(), layers: dag.num_layers(), m: dag.m, vartheta })?;
            println!("vartheta = {vartheta:.6}");
        }
        Check::TransitionMeasure => {
            let tm = transition_measure_sup(args.alpha, args.resolution)?;
            w.serialize(TransitionRow { m: 2 * tm.b.len(), at_half: tm.at_half, sup: tm.sup, argmax: tm.argmax })?;
            println!("sup = {:.6} at xi = {:.6}", tm.sup, tm.argmax);
        }
    }
    w.flush()?;
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let rows = bench_density(args.dimension, &args.n_axis, args.kernel.config()?, args.order, args.seed, args.repeats)?;
    let mut w = csv::Writer::from_path(&args.out)?;
    for row in &rows {
        w.serialize(row)?;
        println!("n = {:>8}  build {:>10.3} ms  density {:>10.3} ms", row.n, row.build_ms, row.density_ms);
    }
    w.flush()?;
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(dir) = args.outputs {
        config.outputs = dir;
    }
    let rows = run_experiment(&config)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} rows ({failed} failed) written to {}", rows.len(), config.outputs.display());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    if args.sigma_noise.is_nan() || args.sigma_noise <= 0.0 {
        return Err(VecchiaError::Config("sigma_noise must be positive".into()));
    }
    let cfg = args.kernel.config()?;
    let config = ExperimentConfig {
        dimension: args.dimension,
        n_list: vec![args.n_axis],
        methods: Vec::new(),
        truth: TruthSpec::Matern { alpha_true: cfg.alpha, tau_true: cfg.tau, s_true: cfg.s, seed: args.seed },
        sigma_noise: args.sigma_noise,
        mcmc: McmcConfig::default(),
        noise_prior: Default::default(),
        seeds: vec![args.seed],
        w2: false,
        outputs: PathBuf::new(),
        threads: None,
    };
    let data = generate_synthetic(&config, args.n_axis, args.seed)?;
    write_points_csv(&args.out, &data.points, Some(&data.y))?;
    if let Some(path) = &args.truth {
        write_points_csv(path, &data.points, Some(&data.f0))?;
    }
    println!("{} points written to {}", data.points.len(), args.out.display());
    Ok(())
}
