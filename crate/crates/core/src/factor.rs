//! Sparse Cholesky-type factor of the Vecchia precision matrix.
//!
//! Node `i` stores kriging weights `a_i` on its parents and a conditional
//! variance `d_i`. With `B = I - A` (unit lower triangular in DAG order) and
//! `D = diag(d)`, the precision is `Phi = B^T D^{-1} B`. `B` and `D` are never
//! assembled; every operation walks the parent lists.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dagbuild::LayeredDag;
use crate::error::{Result, VecchiaError};
use crate::kernel::{conditional_moments, MaternConfig};
use crate::polymath::{corner_set, dist2, monomial_count, PointSet};

/// Default size limit for dense oracles.
pub const DENSE_CAP: usize = 2048;

#[derive(Clone, Debug)]
pub struct VecchiaFactor {
    dag: Arc<LayeredDag>,
    cfg: MaternConfig,
    weights: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

/// Predictive mean and variance at a new location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl VecchiaFactor {
    /// Computes the conditional moments of every node in parallel.
    pub fn build(dag: Arc<LayeredDag>, cfg: MaternConfig, jitter: bool) -> Result<Self> {
        let moments: Vec<(Vec<f64>, f64)> = (0..dag.len())
            .into_par_iter()
            .map(|i| {
                let cm = conditional_moments(dag.point(i), &dag.parent_points(i), &cfg, jitter)
                    .map_err(|e| match e {
                        VecchiaError::NearSingularParents { .. } => VecchiaError::NearSingularParents { node: i },
                        other => other,
                    })?;
                if !(cm.variance > 0.0) {
                    return Err(VecchiaError::NearSingularParents { node: i });
                }
                Ok((cm.weights, cm.variance))
            })
            .collect::<Result<_>>()?;
        let (weights, variances) = moments.into_iter().unzip();
        Ok(VecchiaFactor { dag, cfg, weights, variances })
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    pub fn dag(&self) -> &Arc<LayeredDag> {
        &self.dag
    }

    pub fn config(&self) -> &MaternConfig {
        &self.cfg
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.variances[i]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn check_len(&self, v: &[f64]) {
        assert_eq!(v.len(), self.len(), "vector length does not match the factor");
    }

    /// `B z`: the residuals `z_i - a_i . z_pa(i)`.
    pub fn apply_b(&self, z: &[f64]) -> Vec<f64> {
        self.check_len(z);
        (0..self.len())
            .map(|i| {
                let pred: f64 = self.dag.parents(i).iter().zip(&self.weights[i]).map(|(&p, a)| a * z[p]).sum();
                z[i] - pred
            })
            .collect()
    }

    /// `B^T u`.
    pub fn apply_bt(&self, u: &[f64]) -> Vec<f64> {
        self.check_len(u);
        let mut out = u.to_vec();
        for (k, (&uk, weights)) in u.iter().zip(&self.weights).enumerate() {
            for (&p, a) in self.dag.parents(k).iter().zip(weights) {
                out[p] -= a * uk;
            }
        }
        out
    }

    /// `Phi v = B^T D^{-1} B v`.
    pub fn apply_precision(&self, v: &[f64]) -> Vec<f64> {
        let mut u = self.apply_b(v);
        for (ui, d) in u.iter_mut().zip(&self.variances) {
            *ui /= d;
        }
        self.apply_bt(&u)
    }

    /// `L w` with `L = B^T D^{-1/2}`, so that `L L^T = Phi`.
    pub fn apply_sqrt_precision(&self, w: &[f64]) -> Vec<f64> {
        self.check_len(w);
        let scaled: Vec<f64> = w.iter().zip(&self.variances).map(|(x, d)| x / d.sqrt()).collect();
        self.apply_bt(&scaled)
    }

    /// `B^{-1} u` by forward substitution.
    pub fn solve_b(&self, u: &[f64]) -> Vec<f64> {
        self.check_len(u);
        let mut z = vec![0.0; self.len()];
        for i in 0..self.len() {
            let pred: f64 = self.dag.parents(i).iter().zip(&self.weights[i]).map(|(&p, a)| a * z[p]).sum();
            z[i] = u[i] + pred;
        }
        z
    }

    /// `B^{-T} v` by backward substitution.
    pub fn solve_bt(&self, v: &[f64]) -> Vec<f64> {
        self.check_len(v);
        let mut x = v.to_vec();
        for i in (0..self.len()).rev() {
            let xi = x[i];
            for (&p, a) in self.dag.parents(i).iter().zip(&self.weights[i]) {
                x[p] += a * xi;
            }
        }
        x
    }

    /// `Phi^{-1} v = B^{-1} D B^{-T} v`, the implied prior covariance applied
    /// to a vector.
    pub fn apply_covariance(&self, v: &[f64]) -> Vec<f64> {
        let mut u = self.solve_bt(v);
        for (ui, d) in u.iter_mut().zip(&self.variances) {
            *ui *= d;
        }
        self.solve_b(&u)
    }

    /// Diagonal of `Phi`.
    pub fn precision_diagonal(&self) -> Vec<f64> {
        let mut diag: Vec<f64> = self.variances.iter().map(|d| 1.0 / d).collect();
        for k in 0..self.len() {
            for (&p, a) in self.dag.parents(k).iter().zip(&self.weights[k]) {
                diag[p] += a * a / self.variances[k];
            }
        }
        diag
    }

    /// `sum_i -ln(2 pi d_i)/2 - e_i^2 / (2 d_i)` with `e = B z`.
    pub fn log_prior_density(&self, z: &[f64]) -> f64 {
        self.apply_b(z)
            .iter()
            .zip(&self.variances)
            .map(|(e, d)| -0.5 * (2.0 * PI * d).ln() - e * e / (2.0 * d))
            .sum()
    }

    /// `f^T Phi f = sum_i e_i^2 / d_i`.
    pub fn rkhs_norm_sq(&self, f: &[f64]) -> f64 {
        self.apply_b(f).iter().zip(&self.variances).map(|(e, d)| e * e / d).sum()
    }

    /// Sequential draw `z_i = a_i . z_pa(i) + sqrt(d_i) w_i` from given noise.
    pub fn sample_prior_from_noise(&self, w: &[f64]) -> Vec<f64> {
        self.check_len(w);
        let mut z = vec![0.0; self.len()];
        for i in 0..self.len() {
            let pred: f64 = self.dag.parents(i).iter().zip(&self.weights[i]).map(|(&p, a)| a * z[p]).sum();
            z[i] = pred + self.variances[i].sqrt() * w[i];
        }
        z
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let w: Vec<f64> = (0..self.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.sample_prior_from_noise(&w)
    }

    /// Dense `B`.
    pub fn dense_b(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut b = DMatrix::identity(n, n);
        for i in 0..n {
            for (&p, a) in self.dag.parents(i).iter().zip(&self.weights[i]) {
                b[(i, p)] -= a;
            }
        }
        b
    }

    /// Dense `Phi`, for oracles.
    pub fn dense_precision(&self, cap: usize) -> Result<DMatrix<f64>> {
        if self.len() > cap {
            return Err(VecchiaError::CapExceeded { size: self.len(), cap });
        }
        let b = self.dense_b();
        let dinv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.len(),
            self.variances.iter().map(|d| 1.0 / d),
        ));
        Ok(b.transpose() * dinv * b)
    }

    /// Implied covariance `B^{-1} D B^{-T}`, accumulated row by row from the
    /// sequential definition in `O(n^2 m)`.
    pub fn dense_vecchia_cov(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.len();
        if n > cap {
            return Err(VecchiaError::CapExceeded { size: n, cap });
        }
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            let pa = self.dag.parents(i);
            let a = &self.weights[i];
            for j in 0..i {
                let v: f64 = pa.iter().zip(a).map(|(&p, w)| w * k[(p, j)]).sum();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            let v: f64 = pa.iter().zip(a).map(|(&p, w)| w * k[(p, i)]).sum();
            k[(i, i)] = v + self.variances[i];
        }
        Ok(k)
    }

    /// Predictive moments at `test` given latent values `z` on the DAG nodes.
    ///
    /// Each test point conditions on the corner set of order `l` built from the
    /// coordinate pools of the observed training nodes. When a corner point is
    /// not a training node (scattered training data), the `m` nearest observed
    /// nodes are used instead. Test points are conditionally independent.
    pub fn predict(&self, test: &PointSet, z: &[f64], l: usize) -> Result<Vec<Prediction>> {
        self.check_len(z);
        let d = self.dag.dimension;
        if test.dim() != d {
            return Err(VecchiaError::InvalidInput("test points have the wrong dimension".into()));
        }
        let observed = self.dag.observed_indices();
        let m = monomial_count(d, l);
        if observed.len() < m {
            return Err(VecchiaError::InvalidInput(format!(
                "prediction of order {l} needs {m} training nodes, have {}",
                observed.len()
            )));
        }
        let lookup: HashMap<Vec<u64>, usize> = observed
            .iter()
            .map(|&i| (self.dag.point(i).iter().map(|c| c.to_bits()).collect(), i))
            .collect();
        let pools: Vec<Vec<f64>> = (0..d)
            .map(|h| {
                let mut v: Vec<f64> = observed.iter().map(|&i| self.dag.point(i)[h]).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        let points: Vec<&[f64]> = test.iter().collect();
        points
            .par_iter()
            .map(|x| {
                let parents = self.prediction_parents(x, &pools, &lookup, &observed, l, m);
                let mut pa = PointSet::empty(d);
                for &p in &parents {
                    pa.push(self.dag.point(p));
                }
                let cm = conditional_moments(x, &pa, &self.cfg, false)?;
                let mean = parents.iter().zip(&cm.weights).map(|(&p, w)| w * z[p]).sum();
                Ok(Prediction { mean, variance: cm.variance })
            })
            .collect()
    }

    fn prediction_parents(
        &self,
        x: &[f64],
        pools: &[Vec<f64>],
        lookup: &HashMap<Vec<u64>, usize>,
        observed: &[usize],
        l: usize,
        m: usize,
    ) -> Vec<usize> {
        if let Ok(corner) = corner_set(x, pools, l) {
            let found: Option<Vec<usize>> = corner
                .iter()
                .map(|c| lookup.get(&c.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).copied())
                .collect();
            if let Some(p) = found {
                return p;
            }
        }
        let mut by_dist: Vec<(f64, usize)> = observed.iter().map(|&i| (dist2(self.dag.point(i), x), i)).collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        by_dist.into_iter().take(m).map(|(_, i)| i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dagbuild::{build_full_conditioning_dag, Construction, DagNode};
    use crate::kernel::cov_matrix;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(alpha: f64) -> MaternConfig {
        MaternConfig::new(alpha, 1.0, 1.0).unwrap()
    }

    fn two_node(h: f64) -> Arc<LayeredDag> {
        let nodes = vec![
            DagNode { coords: vec![0.0], layer: 0, parents: vec![], augmented: false },
            DagNode { coords: vec![h], layer: 1, parents: vec![0], augmented: false },
        ];
        Arc::new(LayeredDag::new(1, 2.0, 0, 1, Construction::General, nodes).unwrap())
    }

    #[test]
    fn single_parent_closed_form() {
        let h = 0.4;
        let f = VecchiaFactor::build(two_node(h), cfg(0.5), false).unwrap();
        assert!(f.weights(0).is_empty());
        assert_eq!(f.variance(0), 1.0);
        assert_relative_eq!(f.weights(1)[0], (-h).exp(), max_relative = 1e-14);
        assert_relative_eq!(f.variance(1), 1.0 - (-2.0 * h).exp(), max_relative = 1e-12);
    }

    #[test]
    fn one_node_identities() {
        let nodes = vec![DagNode { coords: vec![0.3], layer: 0, parents: vec![], augmented: false }];
        let dag = Arc::new(LayeredDag::new(1, 2.0, 0, 1, Construction::General, nodes).unwrap());
        let c = MaternConfig::new(1.5, 1.0, 2.0).unwrap();
        let f = VecchiaFactor::build(dag, c, false).unwrap();
        assert_abs_diff_eq!(f.apply_precision(&[3.0])[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(f.apply_sqrt_precision(&[3.0])[0], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.rkhs_norm_sq(&[2.0]), 1.0, epsilon = 1e-15);
        assert_eq!(f.dense_vecchia_cov(DENSE_CAP).unwrap()[(0, 0)], 4.0);
    }

    #[test]
    fn log_density_single_node() {
        let f = VecchiaFactor::build(two_node(0.3), cfg(0.5), false).unwrap();
        let dag = Arc::new(LayeredDag::new(1, 2.0, 0, 1, Construction::General, vec![f.dag().nodes[0].clone()]).unwrap());
        let f1 = VecchiaFactor::build(dag, cfg(0.5), false).unwrap();
        assert_abs_diff_eq!(f1.log_prior_density(&[0.0]), -0.918_938_533_204_672_7, epsilon = 1e-15);
    }

    #[test]
    fn full_conditioning_is_exact() {
        let pts = PointSet::from_scalars(&[0.1, 0.9, 0.45, 0.2, 0.7, 0.33, 0.05, 0.6]).unwrap();
        let dag = Arc::new(build_full_conditioning_dag(&pts).unwrap());
        let c = MaternConfig::new(1.5, 3.0, 1.3).unwrap();
        let f = VecchiaFactor::build(dag, c, false).unwrap();
        let k = f.dense_vecchia_cov(DENSE_CAP).unwrap();
        let truth = cov_matrix(&pts, &pts, &c);
        assert!((k - truth).abs().max() < 1e-10);
    }

    #[test]
    fn precision_inverts_covariance() {
        let pts = PointSet::from_scalars(&(0..32).map(|k| (k as f64 * 0.618).fract()).collect::<Vec<_>>()).unwrap();
        let dag = Arc::new(crate::dagbuild::build_maximin_nngp_dag(&pts, 3, None).unwrap());
        let f = VecchiaFactor::build(dag, MaternConfig::new(1.5, 5.0, 1.0).unwrap(), false).unwrap();
        let phi = f.dense_precision(DENSE_CAP).unwrap();
        let k = f.dense_vecchia_cov(DENSE_CAP).unwrap();
        let eye = DMatrix::<f64>::identity(32, 32);
        assert!((&phi * &k - eye).abs().max() < 1e-8);
        let diag = f.precision_diagonal();
        for i in 0..32 {
            assert_relative_eq!(diag[i], phi[(i, i)], max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_noise_gives_zero_sample() {
        let f = VecchiaFactor::build(two_node(0.3), cfg(1.5), false).unwrap();
        assert_eq!(f.sample_prior_from_noise(&[0.0, 0.0]), vec![0.0, 0.0]);
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(f.sample_prior(&mut r1), f.sample_prior(&mut r2));
    }

    #[test]
    fn cap_is_enforced() {
        let f = VecchiaFactor::build(two_node(0.3), cfg(1.5), false).unwrap();
        assert_eq!(f.dense_vecchia_cov(1), Err(VecchiaError::CapExceeded { size: 2, cap: 1 }));
    }

    #[test]
    fn duplicate_parent_location_is_reported() {
        let nodes = vec![
            DagNode { coords: vec![0.0], layer: 0, parents: vec![], augmented: false },
            DagNode { coords: vec![0.0], layer: 1, parents: vec![0], augmented: false },
        ];
        let dag = Arc::new(LayeredDag::new(1, 2.0, 0, 1, Construction::General, nodes).unwrap());
        assert_eq!(
            VecchiaFactor::build(dag, cfg(1.5), false).unwrap_err(),
            VecchiaError::NearSingularParents { node: 1 }
        );
    }

    #[test]
    fn prediction_examples() {
        let pts = PointSet::from_scalars(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let dag = Arc::new(crate::dagbuild::build_grid_dag(&pts, 1, false).unwrap());
        let f = VecchiaFactor::build(dag.clone(), cfg(0.5), false).unwrap();
        let z: Vec<f64> = (0..5).map(|i| i as f64 - 1.5).collect();

        let at = PointSet::from_scalars(&[0.25]).unwrap();
        let p = f.predict(&at, &z, 0).unwrap()[0];
        let node = (0..5).find(|&i| dag.point(i)[0] == 0.25).unwrap();
        assert_abs_diff_eq!(p.mean, z[node], epsilon = 1e-12);
        assert_abs_diff_eq!(p.variance, 0.0, epsilon = 1e-12);

        let h = 0.05;
        let at = PointSet::from_scalars(&[0.5 + h]).unwrap();
        let p = f.predict(&at, &z, 0).unwrap()[0];
        let node = (0..5).find(|&i| dag.point(i)[0] == 0.5).unwrap();
        assert_relative_eq!(p.mean, (-h).exp() * z[node], max_relative = 1e-12);
        assert_relative_eq!(p.variance, 1.0 - (-2.0 * h).exp(), max_relative = 1e-10);
    }

    #[test]
    fn prediction_flat_limit() {
        let nu = 1e-3;
        let pts = PointSet::from_scalars(&[0.0, nu]).unwrap();
        let dag = Arc::new(crate::dagbuild::build_grid_dag(&pts, 1, false).unwrap());
        let f = VecchiaFactor::build(dag, cfg(1.5), false).unwrap();
        let z = [1.0, 3.0];
        let p = f.predict(&PointSet::from_scalars(&[0.5 * nu]).unwrap(), &z, 1).unwrap()[0];
        assert_abs_diff_eq!(p.mean, 2.0, epsilon = 1e-3);
    }
}
