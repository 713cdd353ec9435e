//! Numerical checks of the approximation theory: flat limits of kriging
//! weights, layer-wise conditional variance decay, the norm of recursive
//! polynomial interpolation, Gaussian Wasserstein distances and the
//! one-dimensional transition measure.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::dagbuild::LayeredDag;
use crate::error::{Result, VecchiaError};
use crate::factor::VecchiaFactor;
use crate::kernel::{conditional_moments, floor_alpha, MaternConfig};
use crate::polymath::{
    interp_weights, monomial_count, monomial_vector, multi_index_sequence, order_for_count, PointSet,
};

/// Largest DAG accepted by [`estimate_vartheta`].
pub const VARTHETA_CAP: usize = 4096;

/// Eigenvalues down to this value are treated as rounding noise and clamped.
pub const PSD_TOL: f64 = -1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlatLimitCurve {
    /// `(nu, ||kriging weights - polynomial weights||_1)` pairs.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `ln error` against `ln nu`; `None` when some
    /// error is exactly zero.
    pub slope: Option<f64>,
}

/// Gap between Matérn kriging weights on the shrunken set `nu A` at `nu x`
/// and the polynomial interpolation weights of order `floor(alpha)` on `A`.
pub fn flat_limit_error(a: &PointSet, x: &[f64], alpha: f64, nus: &[f64]) -> Result<FlatLimitCurve> {
    let cfg = MaternConfig::new(alpha, 1.0, 1.0)?;
    let l = floor_alpha(alpha);
    if a.len() != monomial_count(a.dim(), l) {
        return Err(VecchiaError::InvalidInput(format!(
            "flat limit for alpha = {alpha} needs {} points",
            monomial_count(a.dim(), l)
        )));
    }
    let poly = interp_weights(a, x)?;
    let mut points = Vec::with_capacity(nus.len());
    for &nu in nus {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(VecchiaError::InvalidInput(format!("nu must lie in (0, 1), got {nu}")));
        }
        let xs: Vec<f64> = x.iter().map(|v| v * nu).collect();
        let cm = conditional_moments(&xs, &a.scaled(nu), &cfg, false).map_err(|_| {
            VecchiaError::SingularSystem { min_singular: 0.0 }
        })?;
        let err: f64 = cm.weights.iter().zip(&poly).map(|(g, p)| (g - p).abs()).sum();
        points.push((nu, err));
    }
    let slope = if points.len() >= 2 && points.iter().all(|&(_, e)| e > 0.0) {
        let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
        Some(fit_slope(&xs, &ys))
    } else {
        None
    };
    Ok(FlatLimitCurve { points, slope })
}

/// Ordinary least-squares slope.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerDecay {
    pub layer: usize,
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// `s^2 tau^(2 alpha) gamma^(-2 alpha j)`.
    pub reference: f64,
    pub ratio_min: f64,
    pub ratio_median: f64,
    pub ratio_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayProfile {
    pub layers: Vec<LayerDecay>,
}

impl DecayProfile {
    /// Largest over smallest node ratio across layers `from_layer..`.
    pub fn ratio_spread(&self, from_layer: usize) -> f64 {
        let sel = self.layers.iter().filter(|l| l.layer >= from_layer);
        let hi = sel.clone().map(|l| l.ratio_max).fold(f64::NEG_INFINITY, f64::max);
        let lo = sel.map(|l| l.ratio_min).fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Conditional variances grouped by layer and compared with the geometric
/// reference `s^2 tau^(2 alpha) gamma^(-2 alpha j)`.
pub fn variance_decay_profile(factor: &VecchiaFactor) -> DecayProfile {
    let dag = factor.dag();
    let cfg = factor.config();
    let mut by_layer: Vec<Vec<f64>> = vec![Vec::new(); dag.num_layers()];
    for i in 0..dag.len() {
        by_layer[dag.layer(i)].push(factor.variance(i));
    }
    let layers = by_layer
        .into_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(j, mut v)| {
            v.sort_by(f64::total_cmp);
            let reference = cfg.s * cfg.s
                * cfg.tau.powf(2.0 * cfg.alpha)
                * dag.gamma.powf(-2.0 * cfg.alpha * j as f64);
            let (min, med, max) = (v[0], median(&v), v[v.len() - 1]);
            LayerDecay {
                layer: j,
                count: v.len(),
                min,
                median: med,
                max,
                reference,
                ratio_min: min / reference,
                ratio_median: med / reference,
                ratio_max: max / reference,
            }
        })
        .collect();
    DecayProfile { layers }
}

/// Interpolation weights of `x` on `pa`. Parent sets whose size is not a
/// complete polynomial dimension use minimum-norm weights for the largest
/// complete order they contain.
fn layer_weights(pa: &PointSet, x: &[f64]) -> Result<Vec<f64>> {
    let d = pa.dim();
    if order_for_count(d, pa.len()).is_some() {
        return interp_weights(pa, x);
    }
    let mut l = 0;
    while monomial_count(d, l + 1) <= pa.len() {
        l += 1;
    }
    let idx = multi_index_sequence(d, monomial_count(d, l));
    let mut v = DMatrix::zeros(idx.len(), pa.len());
    for (j, p) in pa.iter().enumerate() {
        v.set_column(j, &monomial_vector(p, &idx));
    }
    let pinv = v
        .pseudo_inverse(1e-12)
        .map_err(|_| VecchiaError::SingularSystem { min_singular: 0.0 })?;
    Ok((pinv * monomial_vector(x, &idx)).iter().copied().collect())
}

/// Largest sup-norm operator norm of the composed layer-to-layer polynomial
/// interpolation maps over all windows of consecutive layers.
///
/// For each starting layer the values of every later node are expanded as
/// linear combinations of nodes in layers `<= start`; the maximum absolute
/// row sum over those expansions is the operator norm of the corresponding
/// composition.
pub fn estimate_vartheta(dag: &LayeredDag) -> Result<f64> {
    let n = dag.len();
    if n > VARTHETA_CAP {
        return Err(VecchiaError::CapExceeded { size: n, cap: VARTHETA_CAP });
    }
    if n == 0 {
        return Ok(1.0);
    }
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let pa = dag.parent_points(i);
        weights.push(if pa.is_empty() { Vec::new() } else { layer_weights(&pa, dag.point(i))? });
    }
    let num_layers = dag.num_layers();
    let mut best: f64 = 1.0;
    for start in 0..num_layers {
        let base: Vec<usize> = (0..n).filter(|&i| dag.layer(i) <= start).collect();
        let mut col = vec![usize::MAX; n];
        for (c, &i) in base.iter().enumerate() {
            col[i] = c;
        }
        let width = base.len();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
        for i in 0..n {
            if col[i] != usize::MAX {
                let mut r = vec![0.0; width];
                r[col[i]] = 1.0;
                rows[i] = Some(r);
                continue;
            }
            if dag.parents(i).is_empty() {
                continue;
            }
            let mut r = vec![0.0; width];
            let mut complete = true;
            for (&p, &w) in dag.parents(i).iter().zip(&weights[i]) {
                match &rows[p] {
                    Some(rp) => {
                        for (a, b) in r.iter_mut().zip(rp) {
                            *a += w * b;
                        }
                    }
                    None => complete = false,
                }
            }
            if complete {
                best = best.max(r.iter().map(|v| v.abs()).sum());
                rows[i] = Some(r);
            }
        }
    }
    Ok(best)
}

/// Squared 2-Wasserstein distance between `N(mean1, cov1)` and `N(mean2, cov2)`:
/// `|m1 - m2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2})`.
pub fn gaussian_w2_sq(mean1: &[f64], cov1: &DMatrix<f64>, mean2: &[f64], cov2: &DMatrix<f64>) -> Result<f64> {
    let n = mean1.len();
    if mean2.len() != n || cov1.shape() != (n, n) || cov2.shape() != (n, n) {
        return Err(VecchiaError::InvalidInput("mean and covariance sizes disagree".into()));
    }
    let mean_term: f64 = mean1.iter().zip(mean2).map(|(a, b)| (a - b) * (a - b)).sum();
    let root2 = psd_sqrt(cov2)?;
    let middle = &root2 * cov1 * &root2;
    let middle = (&middle + middle.transpose()) * 0.5;
    let cross = psd_eigenvalues(&middle)?.iter().map(|l| l.sqrt()).sum::<f64>();
    let w2 = mean_term + cov1.trace() + cov2.trace() - 2.0 * cross;
    Ok(w2.max(0.0))
}

fn psd_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    clamp_eigenvalues(eig.eigenvalues)
}

fn clamp_eigenvalues(mut ev: DVector<f64>) -> Result<DVector<f64>> {
    for v in ev.iter_mut() {
        if *v < PSD_TOL {
            return Err(VecchiaError::NotPsd(*v));
        }
        *v = v.max(0.0);
    }
    Ok(ev)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = clamp_eigenvalues(eig.eigenvalues)?;
    let v = eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * vals[j].sqrt());
    Ok(&scaled * v.transpose())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionMeasure {
    /// Symmetric interpolation weights `b_1..b_{m/2}`.
    pub b: Vec<f64>,
    /// Kernel mass at `xi = 1/2`.
    pub at_half: f64,
    /// Supremum over the evaluation grid.
    pub sup: f64,
    pub argmax: f64,
}

/// Total mass `K(xi) = 1/2 sum_{2 xi2 = xi} (|xi2| / |xi|) |psi(xi2)|` of the
/// transition kernel of one-dimensional dyadic polynomial interpolation, where
/// `psi(xi) = 1 + 2 sum_j b_j cos(2 pi (2j - 1) xi)` and `|.|` is the distance
/// to 0 on the unit torus. Evaluated on `xi = k / resolution`, `0 < k < resolution`.
pub fn transition_measure_sup(alpha: f64, resolution: usize) -> Result<TransitionMeasure> {
    let m = floor_alpha(alpha) + 1;
    if m % 2 == 1 {
        return Err(VecchiaError::UnsupportedOrder(m));
    }
    if m > 8 {
        return Err(VecchiaError::InvalidInput(format!("order m = {m} exceeds 8")));
    }
    if resolution < 1024 {
        return Err(VecchiaError::InvalidInput("resolution must be at least 1024".into()));
    }
    let half = (m / 2) as i64;
    let nodes: Vec<f64> = (-half + 1..=half).map(|k| k as f64).collect();
    let w = interp_weights(&PointSet::from_scalars(&nodes)?, &[0.5])?;
    let b: Vec<f64> = (1..=m / 2).map(|j| w[m / 2 - 1 + j]).collect();
    let psi = |xi: f64| -> f64 {
        1.0 + 2.0
            * b.iter()
                .enumerate()
                .map(|(j, bj)| bj * (2.0 * std::f64::consts::PI * (2 * j + 1) as f64 * xi).cos())
                .sum::<f64>()
    };
    let torus = |xi: f64| xi.min(1.0 - xi);
    let kernel = |xi: f64| -> f64 {
        let norm = torus(xi);
        [0.5 * xi, 0.5 * xi + 0.5]
            .iter()
            .map(|&x2| torus(x2) / norm * psi(x2).abs())
            .sum::<f64>()
            * 0.5
    };
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = 0.0;
    for k in 1..resolution {
        let xi = k as f64 / resolution as f64;
        let v = kernel(xi);
        if v > sup {
            sup = v;
            argmax = xi;
        }
    }
    let at_half = kernel(0.5);
    Ok(TransitionMeasure { b, at_half, sup, argmax })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dagbuild::{build_grid_dag, Construction, DagNode};
    use approx::assert_abs_diff_eq;

    #[test]
    fn flat_limit_zero_at_nodes() {
        let a = PointSet::from_scalars(&[0.0, 1.0]).unwrap();
        let c = flat_limit_error(&a, &[1.0], 1.5, &[0.2, 0.1, 0.05]).unwrap();
        assert!(c.points.iter().all(|&(_, e)| e < 1e-12));
        assert_eq!(c.slope, None);
    }

    #[test]
    fn flat_limit_shrinks() {
        let a = PointSet::from_scalars(&[0.0, 1.0]).unwrap();
        let c = flat_limit_error(&a, &[0.5], 1.5, &[0.2, 0.05]).unwrap();
        assert!(c.points[1].1 < c.points[0].1);
    }

    #[test]
    fn w2_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_abs_diff_eq!(gaussian_w2_sq(&[1.0, 2.0], &i2, &[1.0, 2.0], &i2).unwrap(), 0.0, epsilon = 1e-12);
        let one = DMatrix::from_element(1, 1, 1.0);
        let four = DMatrix::from_element(1, 1, 4.0);
        assert_abs_diff_eq!(gaussian_w2_sq(&[0.0], &one, &[1.0], &four).unwrap(), 2.0, epsilon = 1e-12);
        let bad = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(gaussian_w2_sq(&[0.0], &bad, &[0.0], &one), Err(VecchiaError::NotPsd(_))));
    }

    #[test]
    fn w2_symmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 0.5]);
        let ab = gaussian_w2_sq(&[0.1, 0.0], &a, &[0.0, 0.4], &b).unwrap();
        let ba = gaussian_w2_sq(&[0.0, 0.4], &b, &[0.1, 0.0], &a).unwrap();
        assert_abs_diff_eq!(ab, ba, epsilon = 1e-12);
    }

    #[test]
    fn vartheta_examples() {
        let nodes = vec![
            DagNode { coords: vec![0.0], layer: 0, parents: vec![], augmented: false },
            DagNode { coords: vec![1.0], layer: 0, parents: vec![], augmented: false },
        ];
        let dag = LayeredDag::new(1, 2.0, 1, 2, Construction::Grid, nodes).unwrap();
        assert_eq!(estimate_vartheta(&dag).unwrap(), 1.0);

        let pts = PointSet::from_scalars(&(0..33).map(|k| k as f64 / 32.0).collect::<Vec<_>>()).unwrap();
        let dag = build_grid_dag(&pts, 1, false).unwrap();
        assert_abs_diff_eq!(estimate_vartheta(&dag).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transition_measure_examples() {
        let t = transition_measure_sup(1.5, 4096).unwrap();
        assert_abs_diff_eq!(t.b[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(t.at_half, 0.5, epsilon = 1e-12);
        assert!(t.sup < 1.0);
        assert_eq!(transition_measure_sup(2.5, 4096), Err(VecchiaError::UnsupportedOrder(3)));
    }

    #[test]
    fn decay_profile_root_layer() {
        let pts = PointSet::from_scalars(&(0..17).map(|k| k as f64 / 16.0).collect::<Vec<_>>()).unwrap();
        let dag = std::sync::Arc::new(build_grid_dag(&pts, 1, false).unwrap());
        let c = MaternConfig::new(1.5, 1.0, 2.0).unwrap();
        let f = VecchiaFactor::build(dag, c, false).unwrap();
        let p = variance_decay_profile(&f);
        assert_eq!(p.layers[0].min, 4.0);
        assert_eq!(p.layers[0].max, 4.0);
    }
}
