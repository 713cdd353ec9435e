//! Measured layered and norming conditions of a DAG.

use std::collections::HashMap;

use serde::Serialize;

use super::LayeredDag;
use crate::polymath::{dist_inf, norming_constant_with, order_for_count, Cube, NormingConstant, NormingOptions, PointSet};

/// Settings for [`validate_dag`].
#[derive(Clone, Copy, Debug)]
pub struct ValidationOptions {
    /// Largest acceptable norming constant.
    pub norming_bound: f64,
    /// Search-grid points per dimension for each parent set.
    pub resolution: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { norming_bound: 1e3, resolution: 65 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DagValidation {
    /// Norming constant of each node's parent set over the smallest cube
    /// holding the node and its parents; `None` when the parent count is not
    /// a complete polynomial-space dimension.
    pub node_norming: Vec<Option<NormingConstant>>,
    /// Minimum sup-norm separation among nodes of layers `0..=j`.
    pub layer_separation: Vec<f64>,
    /// `min_j separation_j * gamma^j`.
    pub separation_constant: f64,
    pub layered_ok: bool,
    pub norming_ok: bool,
    /// Largest parent-set norming constant.
    pub norming_estimate: NormingConstant,
}

/// Measures both structural conditions: geometric separation of the layers
/// together with parents from strictly earlier layers, and bounded norming
/// constants of full-size parent sets.
pub fn validate_dag(dag: &LayeredDag, opts: ValidationOptions) -> DagValidation {
    let n = dag.len();
    let d = dag.dimension;
    let num_layers = dag.num_layers();

    let mut layer_separation = vec![f64::INFINITY; num_layers];
    for i in 0..n {
        let li = dag.layer(i);
        let mut nearest = f64::INFINITY;
        for k in 0..i {
            if dag.layer(k) <= li {
                nearest = nearest.min(dist_inf(dag.point(i), dag.point(k)));
            }
        }
        layer_separation[li] = layer_separation[li].min(nearest);
    }
    for j in 1..num_layers {
        layer_separation[j] = layer_separation[j].min(layer_separation[j - 1]);
    }
    let separation_constant = layer_separation
        .iter()
        .enumerate()
        .map(|(j, s)| s * dag.gamma.powi(j as i32))
        .fold(f64::INFINITY, f64::min);
    let parents_earlier = (0..n).all(|i| {
        dag.layer(i) == 0 || dag.parents(i).iter().all(|&p| dag.layer(p) < dag.layer(i))
    });
    let layered_ok = separation_constant > 0.0 && parents_earlier;

    let mut cache: HashMap<Vec<i64>, NormingConstant> = HashMap::new();
    let order = order_for_count(d, dag.m);
    let mut node_norming = Vec::with_capacity(n);
    for i in 0..n {
        let pa = dag.parents(i);
        let value = match order {
            Some(l) if pa.len() == dag.m && !pa.is_empty() => {
                let pts = dag.parent_points(i);
                let mut all = pts.clone();
                all.push(dag.point(i));
                let cube = Cube::enclosing(all.iter()).expect("non-empty");
                let key = shape_key(&pts, &cube);
                let v = *cache.entry(key).or_insert_with(|| {
                    let nopts = NormingOptions { resolution: opts.resolution, refine: false };
                    norming_constant_with(&pts, &cube, l, nopts)
                        .map(|r| r.norming_constant)
                        .unwrap_or(NormingConstant::Infinite)
                });
                Some(v)
            }
            _ => None,
        };
        node_norming.push(value);
    }
    let norming_estimate = node_norming
        .iter()
        .flatten()
        .fold(NormingConstant::Finite(1.0), |acc, v| match (acc, v) {
            (NormingConstant::Finite(a), NormingConstant::Finite(b)) => NormingConstant::Finite(a.max(*b)),
            _ => NormingConstant::Infinite,
        });
    let norming_ok = norming_estimate.is_finite() && norming_estimate.value() <= opts.norming_bound;

    DagValidation {
        node_norming,
        layer_separation,
        separation_constant,
        layered_ok,
        norming_ok,
        norming_estimate,
    }
}

// Parent positions relative to the cube, quantised, as a cache key.
fn shape_key(pts: &PointSet, cube: &Cube) -> Vec<i64> {
    let side = if cube.side > 0.0 { cube.side } else { 1.0 };
    pts.iter()
        .flat_map(|p| {
            p.iter()
                .zip(&cube.corner)
                .map(move |(x, c)| ((x - c) / side * 1e9).round() as i64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{build_general_dag, build_grid_dag, GeneralOptions};
    use super::*;

    #[test]
    fn five_point_grid() {
        let p = PointSet::from_scalars(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let dag = build_grid_dag(&p, 1, false).unwrap();
        let v = validate_dag(&dag, ValidationOptions::default());
        for (i, c) in v.node_norming.iter().enumerate() {
            match c {
                Some(c) => assert!((c.value() - 1.0).abs() < 1e-12, "node {i}"),
                None => assert!(dag.parents(i).is_empty()),
            }
        }
        assert!((v.layer_separation[1] - 0.5).abs() < 1e-15);
        assert!(v.layered_ok && v.norming_ok);
    }

    #[test]
    fn collinear_fallback_is_flagged() {
        // points on the diagonal and one just off it, which is ordered last
        let mut pts: Vec<[f64; 2]> = (0..17).map(|k| [k as f64 / 16.0; 2]).collect();
        pts.push([0.03, 0.02]);
        let p = PointSet::from_points(&pts).unwrap();
        let dag = build_general_dag(&p, 1, GeneralOptions::default()).unwrap();
        let v = validate_dag(&dag, ValidationOptions::default());
        assert!(!v.norming_ok);
        assert_eq!(v.norming_estimate, NormingConstant::Infinite);
    }
}
