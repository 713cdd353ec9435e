//! Synthetic regression experiments and density-evaluation benchmarks.
//!
//! An [`ExperimentConfig`] (TOML) lists design sizes, DAG methods with their
//! kernels, a truth specification and seeds. [`run_experiment`] evaluates
//! every `(method, n, seed)` combination on a worker pool and writes one
//! [`ResultRow`] per combination, in configuration order, plus a JSON
//! manifest next to the CSV.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dagbuild::{
    build_general_dag, build_grid_dag, build_maximin_nngp_dag, default_parent_count, detect_lattice,
    GeneralOptions, Lattice, LayeredDag,
};
use crate::diagnostics::gaussian_w2_sq;
use crate::error::{Result, VecchiaError};
use crate::factor::{VecchiaFactor, DENSE_CAP};
use crate::inference::{run_gibbs, Dataset, McmcConfig, PriorSpec, TauPrior};
use crate::kernel::{cov_matrix_sym, MaternConfig};
use crate::polymath::{monomial_count, order_for_count, PointSet};

/// Largest design for which the truth is drawn exactly.
pub const TRUTH_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DagMethod {
    /// Layered norming DAG with corner parent sets on the lattice.
    Norming,
    /// Maximin-ordered nearest-neighbour DAG.
    Nngp,
    /// Maximin-ordered layered DAG with singular-value-gated parents.
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub dag: DagMethod,
    pub kernel: MaternConfig,
    /// Parent set size. For `norming` and `general` it must be a complete
    /// polynomial dimension; for `nngp` it defaults to `round(2 ln n)`.
    #[serde(default)]
    pub parent_count: Option<usize>,
    /// Pad coarse layers of the norming DAG with exterior nodes.
    #[serde(default)]
    pub augment: bool,
    /// Sample `tau` under the power-exponential hyperprior.
    #[serde(default)]
    pub adapt_tau: bool,
}

impl MethodSpec {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            match self.dag {
                DagMethod::Norming => "norming",
                DagMethod::Nngp => "nngp",
                DagMethod::General => "general",
            }
            .to_string()
        })
    }

    /// Polynomial order of the corner or gated parent sets.
    pub fn order(&self, d: usize) -> Result<usize> {
        match self.parent_count {
            None => Ok(self.kernel.floor_alpha()),
            Some(m) => order_for_count(d, m).ok_or_else(|| {
                VecchiaError::Config(format!(
                    "method {}: parent_count {m} is not a polynomial dimension in d = {d}",
                    self.label()
                ))
            }),
        }
    }

    /// Builds this method's DAG on `points`.
    pub fn build_dag(&self, points: &PointSet) -> Result<LayeredDag> {
        let d = points.dim();
        match self.dag {
            DagMethod::Norming => build_grid_dag(points, self.order(d)?, self.augment),
            DagMethod::General => build_general_dag(points, self.order(d)?, GeneralOptions::default()),
            DagMethod::Nngp => {
                let m = self.parent_count.unwrap_or_else(|| default_parent_count(points.len()));
                build_maximin_nngp_dag(points, m, None)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthSpec {
    /// Sample path of a Matérn process.
    Matern { alpha_true: f64, tau_true: f64, s_true: f64, seed: u64 },
    /// Function values on a lattice (`x1..xd, y`), interpolated multilinearly.
    File { file: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisePrior {
    pub a0: f64,
    pub b0: f64,
    /// Holds `sigma^2` fixed instead of sampling it.
    pub fixed_sigma2: Option<f64>,
}

impl Default for NoisePrior {
    fn default() -> Self {
        NoisePrior { a0: 1.0, b0: 1.0, fixed_sigma2: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    /// Lattice points per axis; the design has `n^d` points.
    pub n_list: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    pub truth: TruthSpec,
    pub sigma_noise: f64,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub noise_prior: NoisePrior,
    pub seeds: Vec<u64>,
    /// Also compute the squared 2-Wasserstein distance between the Vecchia
    /// prior and its mother process on the design.
    #[serde(default)]
    pub w2: bool,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_outputs() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| VecchiaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file. A relative `truth.file` is resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let TruthSpec::File { file } = &mut cfg.truth {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VecchiaError::Config(m));
        if self.dimension == 0 {
            return bad("dimension must be positive".into());
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return bad("n_list entries must be at least 2".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_list must be strictly ascending".into());
        }
        if !(self.sigma_noise > 0.0) {
            return bad("sigma_noise must be positive".into());
        }
        if self.methods.is_empty() || self.seeds.is_empty() {
            return bad("methods and seeds must be non-empty".into());
        }
        for m in &self.methods {
            MaternConfig::new(m.kernel.alpha, m.kernel.tau, m.kernel.s)?;
            if m.dag != DagMethod::Nngp {
                m.order(self.dimension)?;
            }
        }
        if let TruthSpec::Matern { alpha_true, tau_true, s_true, .. } = self.truth {
            MaternConfig::new(alpha_true, tau_true, s_true)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One `(method, n, seed)` evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub n: usize,
    pub seed: u64,
    /// Root mean square difference between posterior mean and truth over the
    /// design points.
    pub l2_error: Option<f64>,
    pub w2sq: Option<f64>,
    pub runtime_ms: f64,
    pub cg_iters_mean: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub error: Option<String>,
}

/// Locations, noiseless truth and noisy responses.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub points: PointSet,
    pub f0: Vec<f64>,
    pub y: Vec<f64>,
}

/// The `n_axis^d` lattice `{0, 1/(n_axis - 1), ..., 1}^d` in row-major order
/// (last coordinate fastest).
pub fn unit_grid(d: usize, n_axis: usize) -> Result<PointSet> {
    if n_axis < 2 || d == 0 {
        return Err(VecchiaError::InvalidInput("grid needs d >= 1 and at least 2 points per axis".into()));
    }
    let total = n_axis
        .checked_pow(d as u32)
        .ok_or_else(|| VecchiaError::InvalidInput("grid size overflows".into()))?;
    let step = 1.0 / (n_axis - 1) as f64;
    let mut coords = Vec::with_capacity(total * d);
    for k in 0..total {
        let mut rem = k;
        let mut p = vec![0.0; d];
        for h in (0..d).rev() {
            p[h] = (rem % n_axis) as f64 * step;
            rem /= n_axis;
        }
        coords.extend(p);
    }
    PointSet::new(d, coords)
}

/// Draws from `N(0, K)` through a dense Cholesky factor. Diagonal jitter
/// grows from `1e-12` to `1e-6` times the largest variance until the factor
/// exists.
pub fn sample_dense_gp<R: Rng + ?Sized>(points: &PointSet, cfg: &MaternConfig, rng: &mut R) -> Result<Vec<f64>> {
    let n = points.len();
    if n > TRUTH_CAP {
        return Err(VecchiaError::CapExceeded { size: n, cap: TRUTH_CAP });
    }
    let k = cov_matrix_sym(points, cfg);
    let scale = cfg.s * cfg.s;
    let mut jitter = 0.0;
    let chol = loop {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            break c;
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
        if jitter > 1e-6 * scale {
            return Err(VecchiaError::NotPsd(-jitter));
        }
    };
    let w = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((chol.l() * w).iter().copied().collect())
}

/// Values on a lattice, evaluated anywhere in its box by multilinear
/// interpolation.
#[derive(Clone, Debug)]
pub struct LatticeFunction {
    lattice: Lattice,
    /// Row-major values indexed by lattice position.
    values: Vec<f64>,
}

impl LatticeFunction {
    pub fn new(points: &PointSet, values: &[f64]) -> Result<Self> {
        if points.len() != values.len() {
            return Err(VecchiaError::InvalidInput("points and values differ in length".into()));
        }
        let lattice = detect_lattice(points)?;
        let mut grid = vec![0.0; values.len()];
        for (idx, &v) in lattice.index.iter().zip(values) {
            grid[flat_index(idx, lattice.n_axis)] = v;
        }
        Ok(LatticeFunction { lattice, values: grid })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let lat = &self.lattice;
        let d = lat.lo.len();
        let last = (lat.n_axis - 1) as f64;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for h in 0..d {
            let t = ((x[h] - lat.lo[h]) / (lat.hi[h] - lat.lo[h]) * last).clamp(0.0, last);
            let k = (t.floor() as usize).min(lat.n_axis - 2);
            base[h] = k;
            frac[h] = t - k as f64;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for h in 0..d {
                let up = (corner >> h) & 1;
                idx[h] = base[h] + up;
                w *= if up == 1 { frac[h] } else { 1.0 - frac[h] };
            }
            if w != 0.0 {
                acc += w * self.values[flat_index(&idx, lat.n_axis)];
            }
        }
        acc
    }
}

fn flat_index(idx: &[usize], n_axis: usize) -> usize {
    idx.iter().fold(0, |acc, &k| acc * n_axis + k)
}

fn dataset_rng(truth_seed: u64, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(truth_seed);
    rng.set_stream(seed);
    rng
}

/// Design lattice with `n_axis` points per axis, truth and noisy responses.
/// Deterministic in `(config.truth, n_axis, seed)`.
pub fn generate_synthetic(config: &ExperimentConfig, n_axis: usize, seed: u64) -> Result<SyntheticData> {
    let points = unit_grid(config.dimension, n_axis)?;
    let (f0, mut rng) = match &config.truth {
        TruthSpec::Matern { alpha_true, tau_true, s_true, seed: truth_seed } => {
            let cfg = MaternConfig::new(*alpha_true, *tau_true, *s_true)?;
            let mut rng = dataset_rng(*truth_seed, seed);
            (sample_dense_gp(&points, &cfg, &mut rng)?, rng)
        }
        TruthSpec::File { file } => {
            let f = load_truth_file(file)?;
            (points.iter().map(|p| f.eval(p)).collect(), dataset_rng(0, seed))
        }
    };
    let y = f0
        .iter()
        .map(|v| v + config.sigma_noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(SyntheticData { points, f0, y })
}

fn load_truth_file(path: &Path) -> Result<LatticeFunction> {
    let (pts, vals) = crate::io::read_points_csv(path)?;
    let vals = vals.ok_or_else(|| VecchiaError::Config(format!("{}: truth file needs a y column", path.display())))?;
    LatticeFunction::new(&pts, &vals)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Squared 2-Wasserstein distance between the zero-mean Vecchia prior on the
/// observed nodes of `factor` and the mother process on the same nodes.
pub fn prior_w2_sq(factor: &VecchiaFactor) -> Result<f64> {
    let dag = factor.dag();
    let obs = dag.observed_indices();
    let full = factor.dense_vecchia_cov(DENSE_CAP)?;
    let vecchia = DMatrix::from_fn(obs.len(), obs.len(), |a, b| full[(obs[a], obs[b])]);
    let mother = cov_matrix_sym(&dag.points().subset(&obs), factor.config());
    let zeros = vec![0.0; obs.len()];
    gaussian_w2_sq(&zeros, &vecchia, &zeros, &mother)
}

fn evaluate(config: &ExperimentConfig, method: &MethodSpec, data: &SyntheticData, seed: u64) -> Result<ResultRow> {
    let start = Instant::now();
    let dag = Arc::new(method.build_dag(&data.points)?);
    let n = data.points.len();
    let priors = PriorSpec {
        a0: config.noise_prior.a0,
        b0: config.noise_prior.b0,
        tau_prior: if method.adapt_tau {
            TauPrior::PowerExponential { alpha: method.kernel.alpha, d: config.dimension, n }
        } else {
            TauPrior::Fixed
        },
        fixed_sigma2: config.noise_prior.fixed_sigma2,
    };
    let mcmc = McmcConfig { seed, ..config.mcmc };
    let dataset = Dataset::new(data.points.clone(), data.y.clone())?;
    let out = run_gibbs(&dataset, dag.clone(), method.kernel, priors, mcmc)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;

    let key = |p: &[f64]| p.iter().map(|c| c.to_bits()).collect::<Vec<u64>>();
    let node_of: HashMap<Vec<u64>, usize> =
        dag.observed_indices().into_iter().map(|i| (key(dag.point(i)), i)).collect();
    let post_mean: Vec<f64> = data.points.iter().map(|p| out.summary.mean[node_of[&key(p)]]).collect();

    let w2sq = if config.w2 {
        let factor = VecchiaFactor::build(dag, method.kernel, false)?;
        Some(prior_w2_sq(&factor)?)
    } else {
        None
    };
    Ok(ResultRow {
        method: method.label(),
        n,
        seed,
        l2_error: Some(rmse(&post_mean, &data.f0)),
        w2sq,
        runtime_ms: runtime_ms.max(f64::MIN_POSITIVE),
        cg_iters_mean: Some(out.summary.cg_iters_mean),
        acceptance_rate: out.summary.acceptance_rate,
        error: None,
    })
}

/// Writes rows in job order regardless of completion order.
struct OrderedAppender {
    writer: csv::Writer<File>,
    next: usize,
    pending: BTreeMap<usize, ResultRow>,
}

impl OrderedAppender {
    fn push(&mut self, k: usize, row: ResultRow) -> Result<()> {
        self.pending.insert(k, row);
        while let Some(row) = self.pending.remove(&self.next) {
            self.writer.serialize(&row)?;
            self.writer.flush()?;
            self.next += 1;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub library_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub failed_rows: usize,
    /// The truth was interpolated from a coarser lattice rather than sampled
    /// on the design itself.
    pub truth_interpolated: bool,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

/// Runs every `(method, n, seed)` combination and writes `results.csv` and
/// `manifest.json` into `config.outputs`. Failures become rows with the
/// `error` column set; the run continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    std::fs::create_dir_all(&config.outputs)?;
    let csv_path = config.outputs.join("results.csv");
    let appender = Mutex::new(OrderedAppender {
        writer: csv::Writer::from_path(&csv_path)?,
        next: 0,
        pending: BTreeMap::new(),
    });

    let mut jobs = Vec::new();
    for &n_axis in &config.n_list {
        for &seed in &config.seeds {
            for method in &config.methods {
                jobs.push((n_axis, seed, method));
            }
        }
    }
    let work = |(k, &(n_axis, seed, method)): (usize, &(usize, u64, &MethodSpec))| -> Result<ResultRow> {
        let row = generate_synthetic(config, n_axis, seed)
            .and_then(|data| evaluate(config, method, &data, seed))
            .unwrap_or_else(|e| ResultRow {
                method: method.label(),
                n: n_axis.pow(config.dimension as u32),
                seed,
                l2_error: None,
                w2sq: None,
                runtime_ms: f64::MIN_POSITIVE,
                cg_iters_mean: None,
                acceptance_rate: None,
                error: Some(e.to_string()),
            });
        appender.lock().expect("appender lock").push(k, row.clone())?;
        Ok(row)
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| VecchiaError::Config(e.to_string()))?;
    let rows: Vec<ResultRow> = pool.install(|| jobs.par_iter().enumerate().map(work).collect::<Result<_>>())?;

    let manifest = Manifest {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        config: config.clone(),
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| r.error.is_some()).count(),
        truth_interpolated: matches!(config.truth, TruthSpec::File { .. }),
    };
    write_manifest(&config.outputs.join("manifest.json"), &manifest)?;
    Ok(rows)
}

/// Reads a results file written by [`run_experiment`].
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(VecchiaError::from)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub build_ms: f64,
    pub density_ms: f64,
    pub log_density: f64,
    pub truth_interpolated: bool,
}

/// Times factor construction plus one log-density evaluation of the grid DAG
/// of order `l` on `n_axis^d` lattices. No sampling takes place. Each timing
/// is the minimum over `repeats`. Designs above [`TRUTH_CAP`] evaluate the
/// density at a truth drawn on the largest listed lattice within the cap and
/// interpolated to the finer lattice.
pub fn bench_density(
    d: usize,
    n_axis_list: &[usize],
    cfg: MaternConfig,
    l: usize,
    seed: u64,
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    let repeats = repeats.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coarse: Option<LatticeFunction> = None;
    let mut rows = Vec::with_capacity(n_axis_list.len());
    for &n_axis in n_axis_list {
        let points = unit_grid(d, n_axis)?;
        let n = points.len();
        let (z, interpolated) = if n <= TRUTH_CAP {
            let z = sample_dense_gp(&points, &cfg, &mut rng)?;
            coarse = Some(LatticeFunction::new(&points, &z)?);
            (z, false)
        } else {
            let f = match &coarse {
                Some(f) => f.clone(),
                None => {
                    let side = (TRUTH_CAP as f64).powf(1.0 / d as f64).floor() as usize;
                    let base = unit_grid(d, side.max(2))?;
                    let z = sample_dense_gp(&base, &cfg, &mut rng)?;
                    LatticeFunction::new(&base, &z)?
                }
            };
            (points.iter().map(|p| f.eval(p)).collect(), true)
        };
        let dag = Arc::new(build_grid_dag(&points, l, false)?);
        let z = lattice_to_dag_order(&points, &z, &dag);
        let mut build_ms = f64::INFINITY;
        let mut density_ms = f64::INFINITY;
        let mut log_density = 0.0;
        for _ in 0..repeats {
            let t0 = Instant::now();
            let factor = VecchiaFactor::build(dag.clone(), cfg, false)?;
            let t1 = Instant::now();
            log_density = factor.log_prior_density(&z);
            let t2 = Instant::now();
            build_ms = build_ms.min((t1 - t0).as_secs_f64() * 1e3);
            density_ms = density_ms.min((t2 - t0).as_secs_f64() * 1e3);
        }
        rows.push(BenchRow {
            n,
            m: monomial_count(d, l),
            build_ms,
            density_ms,
            log_density,
            truth_interpolated: interpolated,
        });
    }
    Ok(rows)
}

/// Reorders values given at `points` to the node order of `dag`.
fn lattice_to_dag_order(points: &PointSet, values: &[f64], dag: &LayeredDag) -> Vec<f64> {
    let key = |p: &[f64]| p.iter().map(|c| c.to_bits()).collect::<Vec<u64>>();
    let value_at: HashMap<Vec<u64>, f64> = points.iter().map(key).zip(values.iter().copied()).collect();
    (0..dag.len()).map(|i| value_at[&key(dag.point(i))]).collect()
}
