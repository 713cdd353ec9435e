//! Gibbs sampler for `Y = f + eps`, `eps ~ N(0, sigma^2 I)`, with a Vecchia
//! prior on the latent field `f`.
//!
//! One sweep draws `sigma^2` from its inverse-gamma full conditional, then
//! draws `f` exactly by solving `(Phi + M / sigma^2) f = M Y / sigma^2 + L w1 + M w2 / sigma`
//! with conjugate gradients, where `M` masks observed nodes and `L L^T = Phi`.
//! Every `tau_every` sweeps the time scale `tau` takes a random-walk
//! Metropolis-Hastings step on `ln tau`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cg::{cg_solve_from, PosteriorOperator, Preconditioner};
use super::summary::{posterior_summary, ChainSummary};
use crate::dagbuild::LayeredDag;
use crate::error::{Result, VecchiaError};
use crate::factor::VecchiaFactor;
use crate::kernel::MaternConfig;
use crate::polymath::PointSet;

/// Observed locations and responses.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: PointSet,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(points: PointSet, y: Vec<f64>) -> Result<Self> {
        if points.len() != y.len() {
            return Err(VecchiaError::InvalidInput(format!(
                "{} locations but {} responses",
                points.len(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(VecchiaError::InvalidInput("non-finite response".into()));
        }
        Ok(Dataset { points, y })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauPrior {
    /// `tau` stays at the kernel's value.
    Fixed,
    /// `log p(tau) = -n^{d/(2 alpha + d)} tau^{2 alpha d/(2 alpha + d)} / 2` on `[1, inf)`.
    PowerExponential { alpha: f64, d: usize, n: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub a0: f64,
    pub b0: f64,
    pub tau_prior: TauPrior,
    /// Holds `sigma^2` at this value instead of sampling it.
    #[serde(default)]
    pub fixed_sigma2: Option<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { a0: 1.0, b0: 1.0, tau_prior: TauPrior::Fixed, fixed_sigma2: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub tau_every: usize,
    pub proposal_sd: f64,
    pub seed: u64,
    pub cg_tol: f64,
    /// Defaults to ten times the number of nodes; rounding keeps CG from
    /// reaching a `1e-10` residual within exactly `n` steps.
    pub cg_max_iter: Option<usize>,
    /// Defaults to the prior preconditioner: with only a diagonal, CG stalls
    /// once the finest conditional variances make `Phi` badly conditioned.
    pub preconditioner: Preconditioner,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 2000,
            burn_in: 500,
            thin: 1,
            tau_every: 10,
            proposal_sd: 0.1,
            seed: 0,
            cg_tol: 1e-10,
            cg_max_iter: None,
            preconditioner: Preconditioner::Prior,
        }
    }
}

/// `(shape, rate)` of the inverse-gamma full conditional of `sigma^2`.
pub fn sigma2_full_conditional(a0: f64, b0: f64, residuals: &[f64]) -> (f64, f64) {
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    (a0 + 0.5 * residuals.len() as f64, b0 + 0.5 * ss)
}

/// Unnormalised log density of the power-exponential scale prior.
pub fn tau_log_hyperprior(tau: f64, alpha: f64, d: usize, n: usize) -> Result<f64> {
    if !(tau >= 1.0) {
        return Err(VecchiaError::OutOfSupport(tau));
    }
    let d = d as f64;
    let denom = 2.0 * alpha + d;
    Ok(-0.5 * (n as f64).powf(d / denom) * tau.powf(2.0 * alpha * d / denom))
}

/// Metropolis-Hastings acceptance for a symmetric proposal.
pub fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

#[derive(Clone, Debug)]
pub struct GibbsState {
    pub f: Vec<f64>,
    pub sigma2: f64,
    pub tau: f64,
    pub iter: usize,
    pub rng: ChaCha8Rng,
}

/// Post burn-in, thinned draws.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub iters: Vec<usize>,
    pub sigma2: Vec<f64>,
    pub tau: Vec<f64>,
    /// Latent values in DAG order, one vector per recorded draw.
    pub latent: Vec<Vec<f64>>,
}

pub struct GibbsOutput {
    pub summary: ChainSummary,
    pub trace: Trace,
}

pub struct GibbsSampler {
    factor: VecchiaFactor,
    y: Vec<f64>,
    observed: Vec<bool>,
    n_obs: usize,
    priors: PriorSpec,
    mcmc: McmcConfig,
    jitter: bool,
    pub state: GibbsState,
    tau_proposals: usize,
    tau_accepts: usize,
    cg_iterations: Vec<usize>,
}

impl GibbsSampler {
    /// Aligns the data with the DAG's observed nodes and builds the initial
    /// factor. The chain starts from `f = 0`.
    pub fn new(
        data: &Dataset,
        dag: Arc<LayeredDag>,
        cfg: MaternConfig,
        priors: PriorSpec,
        mcmc: McmcConfig,
    ) -> Result<Self> {
        if !(priors.a0 > 0.0 && priors.b0 > 0.0) {
            return Err(VecchiaError::InvalidInput("a0 and b0 must be positive".into()));
        }
        if mcmc.n_iter <= mcmc.burn_in {
            return Err(VecchiaError::InvalidInput("n_iter must exceed burn_in".into()));
        }
        if mcmc.thin == 0 || mcmc.tau_every == 0 {
            return Err(VecchiaError::InvalidInput("thin and tau_every must be positive".into()));
        }
        if let Some(s2) = priors.fixed_sigma2 {
            if !(s2 > 0.0) {
                return Err(VecchiaError::InvalidInput("fixed sigma^2 must be positive".into()));
            }
        }
        if let TauPrior::PowerExponential { .. } = priors.tau_prior {
            if cfg.tau < 1.0 {
                return Err(VecchiaError::OutOfSupport(cfg.tau));
            }
        }
        let n = dag.len();
        let observed_idx = dag.observed_indices();
        if observed_idx.len() != data.y.len() {
            return Err(VecchiaError::InvalidInput(format!(
                "DAG has {} observed nodes but the data has {} rows",
                observed_idx.len(),
                data.y.len()
            )));
        }
        let lookup: HashMap<Vec<u64>, usize> = observed_idx
            .iter()
            .map(|&i| (dag.point(i).iter().map(|c| c.to_bits()).collect(), i))
            .collect();
        let mut y = vec![0.0; n];
        let mut observed = vec![false; n];
        for (p, &v) in data.points.iter().zip(&data.y) {
            let key: Vec<u64> = p.iter().map(|c| c.to_bits()).collect();
            let i = *lookup.get(&key).ok_or_else(|| {
                VecchiaError::InvalidInput(format!("data location {p:?} is not a DAG node"))
            })?;
            if observed[i] {
                return Err(VecchiaError::InvalidInput(format!("data location {p:?} is repeated")));
            }
            y[i] = v;
            observed[i] = true;
        }
        let jitter = false;
        let factor = VecchiaFactor::build(dag, cfg, jitter)?;
        let state = GibbsState {
            f: vec![0.0; n],
            sigma2: priors.fixed_sigma2.unwrap_or(1.0),
            tau: cfg.tau,
            iter: 0,
            rng: ChaCha8Rng::seed_from_u64(mcmc.seed),
        };
        Ok(GibbsSampler {
            factor,
            y,
            observed,
            n_obs: data.y.len(),
            priors,
            mcmc,
            jitter,
            state,
            tau_proposals: 0,
            tau_accepts: 0,
            cg_iterations: Vec::new(),
        })
    }

    pub fn factor(&self) -> &VecchiaFactor {
        &self.factor
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.tau_proposals > 0).then(|| self.tau_accepts as f64 / self.tau_proposals as f64)
    }

    pub fn cg_iters_mean(&self) -> f64 {
        if self.cg_iterations.is_empty() {
            0.0
        } else {
            self.cg_iterations.iter().sum::<usize>() as f64 / self.cg_iterations.len() as f64
        }
    }

    /// One full sweep.
    pub fn step(&mut self) -> Result<()> {
        self.state.iter += 1;
        self.update_sigma2();
        self.update_latent()?;
        if !matches!(self.priors.tau_prior, TauPrior::Fixed) && self.state.iter.is_multiple_of(self.mcmc.tau_every) {
            self.update_tau()?;
        }
        Ok(())
    }

    fn update_sigma2(&mut self) {
        if let Some(s2) = self.priors.fixed_sigma2 {
            self.state.sigma2 = s2;
            return;
        }
        let residuals: Vec<f64> = (0..self.y.len())
            .filter(|&i| self.observed[i])
            .map(|i| self.y[i] - self.state.f[i])
            .collect();
        debug_assert_eq!(residuals.len(), self.n_obs);
        let (shape, rate) = sigma2_full_conditional(self.priors.a0, self.priors.b0, &residuals);
        let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
        self.state.sigma2 = 1.0 / g.sample(&mut self.state.rng);
    }

    fn update_latent(&mut self) -> Result<()> {
        let n = self.factor.len();
        let sigma2 = self.state.sigma2;
        let sigma = sigma2.sqrt();
        let rng = &mut self.state.rng;
        let w1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let w2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut rhs = self.factor.apply_sqrt_precision(&w1);
        for i in 0..n {
            if self.observed[i] {
                rhs[i] += self.y[i] / sigma2 + w2[i] / sigma;
            }
        }
        let op = PosteriorOperator { factor: &self.factor, observed: &self.observed, inv_sigma2: 1.0 / sigma2 };
        let max_iter = self.mcmc.cg_max_iter.unwrap_or(10 * n);
        let res = cg_solve_from(&op, &rhs, &self.state.f, self.mcmc.cg_tol, max_iter, self.mcmc.preconditioner)?;
        self.cg_iterations.push(res.iterations);
        self.state.f = res.x;
        Ok(())
    }

    fn log_tau_target(&self, tau: f64, factor: &VecchiaFactor) -> Result<f64> {
        let prior = match self.priors.tau_prior {
            TauPrior::Fixed => 0.0,
            TauPrior::PowerExponential { alpha, d, n } => tau_log_hyperprior(tau, alpha, d, n)?,
        };
        // density of ln tau carries the Jacobian term ln tau
        Ok(prior + tau.ln() + factor.log_prior_density(&self.state.f))
    }

    fn update_tau(&mut self) -> Result<()> {
        self.tau_proposals += 1;
        let eps: f64 = self.state.rng.sample(StandardNormal);
        let proposal = self.state.tau * (self.mcmc.proposal_sd * eps).exp();
        let current = self.log_tau_target(self.state.tau, &self.factor)?;
        let cfg = self.factor.config().with_tau(proposal)?;
        let candidate = match VecchiaFactor::build(self.factor.dag().clone(), cfg, self.jitter) {
            Ok(f) => f,
            Err(VecchiaError::NearSingularParents { .. }) => return Ok(()),
            Err(e) => return Err(e),
        };
        let proposed = match self.log_tau_target(proposal, &candidate) {
            Ok(v) => v,
            Err(VecchiaError::OutOfSupport(_)) => return Ok(()),
            Err(e) => return Err(e),
        };
        if mh_accept(proposed - current, &mut self.state.rng) {
            self.tau_accepts += 1;
            self.state.tau = proposal;
            self.factor = candidate;
        }
        Ok(())
    }

    /// Runs all sweeps and keeps the thinned post burn-in draws.
    pub fn run(&mut self) -> Result<Trace> {
        let mut trace = Trace::default();
        while self.state.iter < self.mcmc.n_iter {
            self.step()?;
            let it = self.state.iter;
            if it > self.mcmc.burn_in && (it - self.mcmc.burn_in).is_multiple_of(self.mcmc.thin) {
                trace.iters.push(it);
                trace.sigma2.push(self.state.sigma2);
                trace.tau.push(self.state.tau);
                trace.latent.push(self.state.f.clone());
            }
        }
        Ok(trace)
    }
}

/// Builds a sampler, runs it and summarises the latent draws.
pub fn run_gibbs(
    data: &Dataset,
    dag: Arc<LayeredDag>,
    cfg: MaternConfig,
    priors: PriorSpec,
    mcmc: McmcConfig,
) -> Result<GibbsOutput> {
    let mut sampler = GibbsSampler::new(data, dag, cfg, priors, mcmc)?;
    let trace = sampler.run()?;
    let (mean, q025, q975) = posterior_summary(&trace.latent)?;
    let summary = ChainSummary {
        mean,
        q025,
        q975,
        sigma2_trace: trace.sigma2.clone(),
        tau_trace: trace.tau.clone(),
        cg_iters_mean: sampler.cg_iters_mean(),
        acceptance_rate: sampler.acceptance_rate(),
    };
    Ok(GibbsOutput { summary, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dagbuild::{build_grid_dag, Construction, DagNode};
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma2_conditional_examples() {
        assert_eq!(sigma2_full_conditional(1.0, 1.0, &[0.0, 0.0, 0.0]), (2.5, 1.0));
        assert_eq!(sigma2_full_conditional(1.0, 1.0, &[1.0, 1.0]), (2.0, 2.0));
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Gamma::new(3.0, 1.0 / 2.0).unwrap();
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| 1.0 / g.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // IG(3, 2) has mean 1 and variance 1
        let se = (1.0f64 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn hyperprior_examples() {
        assert_abs_diff_eq!(tau_log_hyperprior(4.0, 0.5, 1, 1).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tau_log_hyperprior(1.0, 0.5, 1, 1).unwrap(), -0.5, epsilon = 1e-15);
        assert_eq!(tau_log_hyperprior(0.5, 0.5, 1, 1), Err(VecchiaError::OutOfSupport(0.5)));
    }

    #[test]
    fn constant_target_always_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| mh_accept(0.0, &mut rng)));
        let accepted = (0..20_000).filter(|_| mh_accept((0.25f64).ln(), &mut rng)).count();
        assert!((accepted as f64 / 20_000.0 - 0.25).abs() < 0.02);
    }

    fn single_node() -> Arc<LayeredDag> {
        let nodes = vec![DagNode { coords: vec![0.5], layer: 0, parents: vec![], augmented: false }];
        Arc::new(LayeredDag::new(1, 2.0, 0, 1, Construction::General, nodes).unwrap())
    }

    #[test]
    fn one_node_conjugate_posterior() {
        let data = Dataset::new(PointSet::from_scalars(&[0.5]).unwrap(), vec![0.0]).unwrap();
        let cfg = MaternConfig::new(0.5, 1.0, 1.0).unwrap();
        let priors = PriorSpec { fixed_sigma2: Some(1.0), ..PriorSpec::default() };
        let mcmc = McmcConfig { n_iter: 10_100, burn_in: 100, seed: 9, ..McmcConfig::default() };
        let out = run_gibbs(&data, single_node(), cfg, priors, mcmc).unwrap();
        let draws: Vec<f64> = out.trace.latent.iter().map(|v| v[0]).collect();
        assert_eq!(draws.len(), 10_000);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // exact posterior N(0, 1/2); draws are independent
        assert!(mean.abs() < 3.0 * (0.5 / n).sqrt(), "mean {mean}");
        assert!((var - 0.5).abs() < 3.0 * 0.5 * (2.0 / (n - 1.0)).sqrt(), "var {var}");
    }

    #[test]
    fn seeded_runs_are_identical() {
        let pts = PointSet::from_scalars(&(0..17).map(|k| k as f64 / 16.0).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = pts.iter().map(|p| (6.0 * p[0]).sin()).collect();
        let data = Dataset::new(pts.clone(), y).unwrap();
        let dag = Arc::new(build_grid_dag(&pts, 1, false).unwrap());
        let cfg = MaternConfig::new(1.5, 3.0, 1.0).unwrap();
        let priors = PriorSpec { tau_prior: TauPrior::PowerExponential { alpha: 1.5, d: 1, n: 17 }, ..PriorSpec::default() };
        let mcmc = McmcConfig { n_iter: 60, burn_in: 10, seed: 42, ..McmcConfig::default() };
        let a = run_gibbs(&data, dag.clone(), cfg, priors, mcmc).unwrap();
        let b = run_gibbs(&data, dag, cfg, priors, mcmc).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(a.summary.acceptance_rate.is_some());
        assert!(a.trace.tau.iter().all(|&t| t >= 1.0));
    }

    #[test]
    fn rejects_misaligned_data() {
        let data = Dataset::new(PointSet::from_scalars(&[0.4]).unwrap(), vec![0.0]).unwrap();
        let cfg = MaternConfig::new(0.5, 1.0, 1.0).unwrap();
        assert!(GibbsSampler::new(&data, single_node(), cfg, PriorSpec::default(), McmcConfig::default()).is_err());
    }
}
