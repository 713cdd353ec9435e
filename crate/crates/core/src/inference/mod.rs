//! Posterior inference for Gaussian-noise regression under a Vecchia prior.

mod cg;
mod gibbs;
mod summary;

pub use cg::{cg_solve, cg_solve_from, CgResult, DenseOperator, LinearOperator, PosteriorOperator, Preconditioner};
pub use gibbs::{
    mh_accept, run_gibbs, sigma2_full_conditional, tau_log_hyperprior, Dataset, GibbsOutput, GibbsSampler,
    GibbsState, McmcConfig, PriorSpec, TauPrior, Trace,
};
pub use summary::{posterior_summary, quantile, ChainSummary};
