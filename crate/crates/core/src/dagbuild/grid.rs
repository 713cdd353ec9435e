//! Layered norming DAGs on tensor lattices.
//!
//! With `r` the largest integer such that `n_axis >= 2^r + 1`, the lattice is
//! relabelled by integer coordinates `t in [0, 2^r]^d` (through an evenly
//! spaced index subset when `n_axis - 1` is not a power of two). Node `t`
//! belongs to the first layer `j` for which every `t[h]` is a multiple of
//! `2^(r-j)`, so layers `0..=j` together form the `(2^j + 1)^d` sub-lattice.
//! Lattice points outside the subset form one residual layer `r + 1`.

use std::collections::{BTreeSet, HashMap};

use super::{Construction, DagNode, LayeredDag};
use crate::error::{Result, VecchiaError};
use crate::polymath::{cmp_points, corner_set, monomial_count, PointSet};

const GAMMA: f64 = 2.0;

/// A point set recognised as a full tensor lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    /// Points per axis.
    pub n_axis: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Integer lattice index of every input point.
    pub index: Vec<Vec<usize>>,
}

impl Lattice {
    /// Coordinate of integer position `k` (possibly fractional or outside the
    /// lattice) along axis `h`.
    pub fn coordinate(&self, h: usize, k: f64) -> f64 {
        self.lo[h] + k * (self.hi[h] - self.lo[h]) / (self.n_axis - 1) as f64
    }
}

/// Recognises an equally spaced `n_axis^d` lattice (any axis-aligned box).
pub fn detect_lattice(points: &PointSet) -> Result<Lattice> {
    let d = points.dim();
    let n = points.len();
    if n < 2 {
        return Err(VecchiaError::NotAGrid("need at least two points".into()));
    }
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut n_axis = 0;
    for h in 0..d {
        let mut vals: Vec<f64> = points.iter().map(|p| p[h]).collect();
        vals.sort_by(f64::total_cmp);
        let (a, b) = (vals[0], vals[n - 1]);
        if !(b > a) {
            return Err(VecchiaError::NotAGrid(format!("axis {h} is degenerate")));
        }
        let tol = 1e-9 * (b - a);
        vals.dedup_by(|x, y| (*x - *y).abs() <= tol);
        if h == 0 {
            n_axis = vals.len();
        } else if vals.len() != n_axis {
            return Err(VecchiaError::NotAGrid(format!(
                "axis {h} has {} distinct values, axis 0 has {n_axis}",
                vals.len()
            )));
        }
        let step = (b - a) / (n_axis - 1) as f64;
        for (k, v) in vals.iter().enumerate() {
            if (v - (a + step * k as f64)).abs() > 1e-7 * (b - a) {
                return Err(VecchiaError::NotAGrid(format!("axis {h} is not equally spaced")));
            }
        }
        lo[h] = a;
        hi[h] = b;
    }
    if n_axis.checked_pow(d as u32) != Some(n) {
        return Err(VecchiaError::NotAGrid(format!(
            "{n} points cannot fill a {n_axis}^{d} lattice"
        )));
    }
    let mut index = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::with_capacity(n);
    for p in points.iter() {
        let idx: Vec<usize> = (0..d)
            .map(|h| ((p[h] - lo[h]) / (hi[h] - lo[h]) * (n_axis - 1) as f64).round() as usize)
            .collect();
        if !seen.insert(idx.clone()) {
            return Err(VecchiaError::NotAGrid("repeated lattice position".into()));
        }
        index.push(idx);
    }
    Ok(Lattice { n_axis, lo, hi, index })
}

/// First layer whose nodes receive corner parent sets: the smallest positive
/// `j` with `2^(j-1) + 1 >= l + 1`.
pub fn first_corner_layer(l: usize) -> usize {
    let mut j = 1;
    while (1usize << (j - 1)) + 1 < l + 1 {
        j += 1;
    }
    j
}

struct Proto {
    coords: Vec<f64>,
    /// Integer coordinates in `[0, 2^r]` units; `None` for residual nodes.
    hat: Option<Vec<i64>>,
    /// Lattice index for data nodes.
    grid: Option<Vec<usize>>,
    layer: usize,
    augmented: bool,
}

/// Builds the layered norming DAG on a lattice. With `augment` set, coarse
/// layers are padded with exterior lattice points (flagged as augmented) so
/// that interior corner sets see no boundary.
pub fn build_grid_dag(grid: &PointSet, l: usize, augment: bool) -> Result<LayeredDag> {
    let d = grid.dim();
    let lat = detect_lattice(grid)?;
    let n_axis = lat.n_axis;
    let mut r = 0u32;
    while (1usize << (r + 1)) < n_axis {
        r += 1;
    }
    let span = 1i64 << r;
    // evenly spaced subset of lattice indices standing in for the dyadic grid
    let subset: Vec<usize> = (0..=span)
        .map(|k| (k as f64 * (n_axis - 1) as f64 / span as f64).round() as usize)
        .collect();
    let mut hat_of_index: Vec<Option<i64>> = vec![None; n_axis];
    for (k, &i) in subset.iter().enumerate() {
        hat_of_index[i] = Some(k as i64);
    }
    let hat_coordinate = |h: usize, t: i64| -> f64 {
        if t < 0 {
            lat.coordinate(h, t as f64 * (n_axis - 1) as f64 / span as f64)
        } else if t > span {
            lat.coordinate(h, (n_axis - 1) as f64 + (t - span) as f64 * (n_axis - 1) as f64 / span as f64)
        } else {
            lat.coordinate(h, subset[t as usize] as f64)
        }
    };

    let mut protos: Vec<Proto> = Vec::with_capacity(grid.len());
    for (p, idx) in grid.iter().zip(&lat.index) {
        let hat: Option<Vec<i64>> = idx.iter().map(|&i| hat_of_index[i]).collect();
        let layer = match &hat {
            Some(t) => dyadic_layer(t, r),
            None => r as usize + 1,
        };
        protos.push(Proto {
            coords: p.to_vec(),
            hat,
            grid: Some(idx.clone()),
            layer,
            augmented: false,
        });
    }

    let j0 = first_corner_layer(l);
    if augment && r >= 1 {
        let c_l = (l + 1) as i64;
        let mut taken: std::collections::HashSet<Vec<i64>> =
            protos.iter().filter_map(|p| p.hat.clone()).collect();
        for j in j0.max(1)..r as usize {
            let step = 1i64 << (r as usize - j);
            let ext = 4 * c_l * step;
            let ticks: Vec<i64> = ((-ext).div_euclid(step)..=(span + ext).div_euclid(step))
                .map(|k| k * step)
                .collect();
            let mut t = vec![0usize; d];
            loop {
                let hat: Vec<i64> = t.iter().map(|&k| ticks[k]).collect();
                if !taken.contains(&hat) {
                    let coords = (0..d).map(|h| hat_coordinate(h, hat[h])).collect();
                    taken.insert(hat.clone());
                    protos.push(Proto { coords, hat: Some(hat), grid: None, layer: j, augmented: true });
                }
                if !advance(&mut t, ticks.len()) {
                    break;
                }
            }
        }
    }

    protos.sort_by(|a, b| a.layer.cmp(&b.layer).then_with(|| cmp_points(&a.coords, &b.coords)));
    let by_hat: HashMap<Vec<i64>, usize> = protos
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.hat.clone().map(|h| (h, i)))
        .collect();

    let m = monomial_count(d, l);
    let mut nodes: Vec<DagNode> = Vec::with_capacity(protos.len());
    let mut pools: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); d];
    let mut layer_start = 0;
    let mut i = 0;
    while i < protos.len() {
        let layer = protos[i].layer;
        let end = protos[i..].iter().position(|p| p.layer != layer).map_or(protos.len(), |k| i + k);
        // pools hold coordinates of every node in earlier layers
        for p in &protos[layer_start..i] {
            if let Some(h) = &p.hat {
                for (pool, &t) in pools.iter_mut().zip(h) {
                    pool.insert(t);
                }
            }
        }
        layer_start = i;
        for p in &protos[i..end] {
            let parents = if layer == 0 {
                Vec::new()
            } else if layer < j0 {
                (0..i).collect()
            } else if let Some(hat) = &p.hat {
                let target: Vec<f64> = hat.iter().map(|&t| t as f64).collect();
                let pool_vals: Vec<Vec<f64>> =
                    pools.iter().map(|s| s.iter().map(|&t| t as f64).collect()).collect();
                corner_parents(&target, &pool_vals, l, |c| {
                    let key: Vec<i64> = c.iter().map(|&v| v as i64).collect();
                    by_hat.get(&key).copied()
                })?
                .unwrap_or_else(|| (0..i).collect())
            } else {
                // residual lattice points: pools are the dyadic subset of indices
                let grid_idx = p.grid.as_ref().expect("residual nodes are data nodes");
                let target: Vec<f64> = grid_idx.iter().map(|&g| g as f64).collect();
                let pool_vals: Vec<Vec<f64>> =
                    vec![subset.iter().map(|&g| g as f64).collect(); d];
                corner_parents(&target, &pool_vals, l, |c| {
                    let key: Option<Vec<i64>> =
                        c.iter().map(|&v| hat_of_index[v as usize]).collect();
                    key.and_then(|k| by_hat.get(&k).copied())
                })?
                .unwrap_or_else(|| (0..i).collect())
            };
            nodes.push(DagNode {
                coords: p.coords.clone(),
                layer,
                parents,
                augmented: p.augmented,
            });
        }
        i = end;
    }

    let construction = if augment { Construction::GridAugmented } else { Construction::Grid };
    LayeredDag::new(d, GAMMA, l, m, construction, nodes)
}

/// Corner-set parents looked up through `find`; `None` when a pool is too small.
fn corner_parents(
    target: &[f64],
    pools: &[Vec<f64>],
    l: usize,
    find: impl Fn(&[f64]) -> Option<usize>,
) -> Result<Option<Vec<usize>>> {
    let corner = match corner_set(target, pools, l) {
        Ok(c) => c,
        Err(VecchiaError::PoolTooSmall { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    corner
        .iter()
        .map(|c| {
            find(c).ok_or_else(|| {
                VecchiaError::NotAGrid(format!("corner point {c:?} is missing from the lattice"))
            })
        })
        .collect::<Result<Vec<usize>>>()
        .map(Some)
}

fn dyadic_layer(t: &[i64], r: u32) -> usize {
    (0..=r as usize)
        .find(|&j| {
            let step = 1i64 << (r as usize - j);
            t.iter().all(|&x| x.rem_euclid(step) == 0)
        })
        .expect("layer r accepts every integer point")
}

fn advance(idx: &mut [usize], res: usize) -> bool {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < res {
            return true;
        }
        *slot = 0;
    }
    false
}
