//! Vecchia approximations of Matérn Gaussian processes built on layered
//! norming DAGs.
//!
//! The crate is organised bottom-up: [`polymath`] supplies multivariate
//! polynomial interpolation, [`dagbuild`] constructs parent structures,
//! [`kernel`] evaluates the Matérn covariance, [`factor`] assembles the sparse
//! precision factor, [`inference`] runs the Gibbs sampler, [`diagnostics`]
//! measures the approximation numerically and [`experiment`] drives synthetic
//! studies.

// Negated comparisons such as `!(x > 0.0)` are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dagbuild;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod polymath;

pub use error::{Result, VecchiaError};
pub use dagbuild::{Construction, LayeredDag};
pub use factor::{Prediction, VecchiaFactor};
pub use kernel::{ConditionalMoments, MaternConfig};
pub use polymath::{Cube, MultiIndex, NormingConstant, NormingReport, PointSet};
