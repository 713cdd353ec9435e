//! Matérn covariance with time and space rescaling.
//!
//! The base correlation is `K(r) = 2^(1-alpha) / Gamma(alpha) * r^alpha * K_alpha(r)`,
//! normalised so that `K(0) = 1`. The rescaled covariance between `x` and `y` is
//! `s^2 K(tau |x - y|)`.

mod bessel;

pub use bessel::bessel_k;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, VecchiaError};
use crate::polymath::{dist2, PointSet};

/// Largest regularity accepted by [`MaternConfig::new`].
pub const MAX_ALPHA: f64 = 20.0;

/// Relative diagonal jitter added to parent covariances when enabled.
pub const JITTER: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternConfig {
    pub alpha: f64,
    pub tau: f64,
    pub s: f64,
}

impl MaternConfig {
    pub fn new(alpha: f64, tau: f64, s: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= MAX_ALPHA) {
            return Err(VecchiaError::UnsupportedAlpha(alpha));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(VecchiaError::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(VecchiaError::InvalidInput(format!("s must be positive, got {s}")));
        }
        Ok(MaternConfig { alpha, tau, s })
    }

    /// Same kernel with a different time scale.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        MaternConfig::new(self.alpha, tau, self.s)
    }

    /// Largest integer strictly below `alpha`.
    pub fn floor_alpha(&self) -> usize {
        floor_alpha(self.alpha)
    }

    /// `s^2 K(tau |x1 - x2|)`.
    pub fn cov(&self, x1: &[f64], x2: &[f64]) -> f64 {
        self.s * self.s * matern_correlation(self.alpha, self.tau * dist2(x1, x2))
    }
}

/// Largest integer strictly below `alpha`, so `floor_alpha(2.0) == 1`.
pub fn floor_alpha(alpha: f64) -> usize {
    (alpha.ceil() as usize).saturating_sub(1)
}

/// Unit-variance Matérn correlation at distance `r`.
pub fn matern_correlation(alpha: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let twice = 2.0 * alpha;
    if (twice - twice.round()).abs() < 1e-12 && (twice.round() as i64) % 2 == 1 {
        half_integer_correlation((alpha - 0.5).round() as usize, r)
    } else {
        bessel_correlation(alpha, r)
    }
}

/// Closed form for `alpha = p + 1/2`:
/// `e^{-r} p!/(2p)! sum_{i=0}^p (p+i)! / (i! (p-i)!) (2r)^(p-i)`.
pub fn half_integer_correlation(p: usize, r: f64) -> f64 {
    // coefficients p! (p+i)! / ((2p)! i! (p-i)!), built by ratios to avoid overflow
    let mut coef = 1.0; // i = p term: p! (2p)! / ((2p)! p! 0!) = 1
    let mut sum = 0.0;
    let two_r = 2.0 * r;
    let mut pow = 1.0;
    for i in (0..=p).rev() {
        sum += coef * pow;
        if i == 0 {
            break;
        }
        // ratio of term i-1 to term i: i / ((p+i) (p-i+1))
        coef *= i as f64 / ((p + i) * (p - i + 1)) as f64;
        pow *= two_r;
    }
    (-r).exp() * sum
}

/// General-order Matérn correlation through the numerical Bessel function.
pub fn bessel_correlation(alpha: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    if r > 700.0 {
        return 0.0;
    }
    // r^alpha K_alpha(r) overflows for very small r and large alpha; the
    // leading expansion 1 - r^2 / (4 (alpha - 1)) is then exact to rounding.
    if alpha * (2.0 / r).ln() > 600.0 {
        return if alpha > 1.0 { 1.0 - r * r / (4.0 * (alpha - 1.0)) } else { 1.0 };
    }
    let log_pref = (1.0 - alpha) * std::f64::consts::LN_2 - ln_gamma(alpha) + alpha * r.ln();
    (log_pref.exp() * bessel_k(alpha, r)).min(1.0)
}

/// Covariance matrix `K_{A,B}`.
pub fn cov_matrix(a: &PointSet, b: &PointSet, cfg: &MaternConfig) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| cfg.cov(a.point(i), b.point(j)))
}

/// Symmetric covariance matrix `K_{A,A}`, computing each pair once.
pub fn cov_matrix_sym(a: &PointSet, cfg: &MaternConfig) -> DMatrix<f64> {
    let n = a.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = cfg.s * cfg.s;
        for j in 0..i {
            let v = cfg.cov(a.point(i), a.point(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Kriging weights and conditional variance of a node given its parents.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMoments {
    pub weights: Vec<f64>,
    pub variance: f64,
}

/// Moments of `Z_x | Z_pa`: weights `K_{pa,pa}^{-1} K_{pa,x}` and variance
/// `s^2 - K_{x,pa} K_{pa,pa}^{-1} K_{pa,x}`, clamped to `[0, s^2]`.
///
/// With `jitter` set, `1e-10 s^2` is added to the parent diagonal before
/// factorisation; otherwise a failed Cholesky factorisation is reported as
/// [`VecchiaError::NearSingularParents`] with node index 0, which callers
/// replace by the real index.
pub fn conditional_moments(
    x: &[f64],
    pa: &PointSet,
    cfg: &MaternConfig,
    jitter: bool,
) -> Result<ConditionalMoments> {
    let s2 = cfg.s * cfg.s;
    if pa.is_empty() {
        return Ok(ConditionalMoments { weights: Vec::new(), variance: s2 });
    }
    let mut kpp = cov_matrix_sym(pa, cfg);
    if jitter {
        for i in 0..pa.len() {
            kpp[(i, i)] += JITTER * s2;
        }
    }
    let kpx = DVector::from_iterator(pa.len(), pa.iter().map(|p| cfg.cov(p, x)));
    let chol = kpp
        .cholesky()
        .ok_or(VecchiaError::NearSingularParents { node: 0 })?;
    let weights = chol.solve(&kpx);
    let explained = kpx.dot(&weights);
    let variance = (s2 - explained).clamp(0.0, s2);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(VecchiaError::NearSingularParents { node: 0 });
    }
    Ok(ConditionalMoments { weights: weights.iter().copied().collect(), variance })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn cfg(alpha: f64) -> MaternConfig {
        MaternConfig::new(alpha, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_distance_gives_s2() {
        let c = MaternConfig::new(1.7, 3.0, 2.5).unwrap();
        assert_eq!(c.cov(&[0.3, 0.1], &[0.3, 0.1]), 6.25);
    }

    #[test]
    fn half_integer_examples() {
        let e1 = (-1.0f64).exp();
        assert_relative_eq!(cfg(0.5).cov(&[0.0], &[1.0]), e1, max_relative = 1e-15);
        assert_relative_eq!(cfg(1.5).cov(&[0.0], &[1.0]), 2.0 * e1, max_relative = 1e-15);
        // alpha = 5/2: (1 + r + r^2/3) e^{-r}
        let r: f64 = 0.8;
        assert_relative_eq!(
            half_integer_correlation(2, r),
            (1.0 + r + r * r / 3.0) * (-r).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn closed_forms_agree_with_bessel() {
        for p in 0..3 {
            let alpha = p as f64 + 0.5;
            for i in 0..200 {
                let r = 1e-6 * (30.0f64 / 1e-6).powf(i as f64 / 199.0);
                assert_relative_eq!(
                    half_integer_correlation(p, r),
                    bessel_correlation(alpha, r),
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn general_order_reference_values() {
        // Computed with mpmath at 30 significant digits.
        let cases = [
            (1.25, 0.3, 0.946_722_464_809_064_106),
            (0.7, 2.5, 0.122_085_049_490_038_212),
            (3.3, 1e-6, 0.999_999_999_999_891_304),
            (3.3, 5.0, 0.150_103_467_075_238_415),
            (15.2, 10.0, 0.189_968_309_940_325_11),
        ];
        for (alpha, r, want) in cases {
            assert_relative_eq!(matern_correlation(alpha, r), want, max_relative = 1e-9);
        }
    }

    #[test]
    fn floor_alpha_is_strict() {
        assert_eq!(floor_alpha(2.0), 1);
        assert_eq!(floor_alpha(1.5), 1);
        assert_eq!(floor_alpha(0.5), 0);
        assert_eq!(floor_alpha(1.0), 0);
        assert_eq!(floor_alpha(3.25), 3);
    }

    #[test]
    fn rejects_large_alpha() {
        assert_eq!(MaternConfig::new(20.5, 1.0, 1.0), Err(VecchiaError::UnsupportedAlpha(20.5)));
        assert!(MaternConfig::new(0.0, 1.0, 1.0).is_err());
        assert!(MaternConfig::new(1.5, -1.0, 1.0).is_err());
    }

    #[test]
    fn cov_matrix_example() {
        let a = PointSet::from_scalars(&[0.0, 1.0]).unwrap();
        let k = cov_matrix(&a, &a, &cfg(0.5));
        let e1 = (-1.0f64).exp();
        assert_relative_eq!(k, DMatrix::from_row_slice(2, 2, &[1.0, e1, e1, 1.0]), max_relative = 1e-15);
        assert_eq!(cov_matrix_sym(&a, &cfg(0.5)), k);
    }

    #[test]
    fn conditional_moment_examples() {
        let pa = PointSet::from_scalars(&[0.4]).unwrap();
        let m = conditional_moments(&[0.4], &pa, &cfg(1.5), false).unwrap();
        assert_abs_diff_eq!(m.weights[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.variance, 0.0, epsilon = 1e-14);

        let h: f64 = 0.3;
        let pa = PointSet::from_scalars(&[0.0]).unwrap();
        let m = conditional_moments(&[h], &pa, &cfg(0.5), false).unwrap();
        assert_relative_eq!(m.weights[0], (-h).exp(), max_relative = 1e-14);
        assert_relative_eq!(m.variance, 1.0 - (-2.0 * h).exp(), max_relative = 1e-12);

        let m = conditional_moments(&[0.2], &PointSet::empty(1), &cfg(0.5), false).unwrap();
        assert!(m.weights.is_empty());
        assert_eq!(m.variance, 1.0);
    }

    #[test]
    fn flat_limit_weights() {
        let nu = 1e-3;
        let pa = PointSet::from_scalars(&[0.0, nu]).unwrap();
        let m = conditional_moments(&[0.5 * nu], &pa, &cfg(1.5), false).unwrap();
        assert_abs_diff_eq!(m.weights[0], 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(m.weights[1], 0.5, epsilon = 1e-4);
    }

    #[test]
    fn rescaling_consistency() {
        let pa = PointSet::from_scalars(&[0.0, 0.5, 1.1]).unwrap();
        let c1 = MaternConfig::new(1.5, 2.0, 1.0).unwrap();
        let c2 = MaternConfig::new(1.5, 1.0, 3.0).unwrap();
        let m1 = conditional_moments(&[0.7], &pa, &c1, false).unwrap();
        let m2 = conditional_moments(&[1.4], &pa.scaled(2.0), &c2, false).unwrap();
        for (a, b) in m1.weights.iter().zip(&m2.weights) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        assert_relative_eq!(m2.variance, 9.0 * m1.variance, max_relative = 1e-10);
    }

    #[test]
    fn duplicate_parents_are_singular() {
        let pa = PointSet::from_scalars(&[0.1, 0.1]).unwrap();
        assert_eq!(
            conditional_moments(&[0.3], &pa, &cfg(1.5), false),
            Err(VecchiaError::NearSingularParents { node: 0 })
        );
        assert!(conditional_moments(&[0.3], &pa, &cfg(1.5), true).is_ok());
    }
}
