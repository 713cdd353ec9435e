//! DAGs on scattered points: maximin ordering, singular-value gated parent
//! selection, and the nearest-neighbour baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{order_below_count, Construction, DagNode, LayeredDag};
use crate::error::{Result, VecchiaError};
use crate::polymath::{dist2, dist_inf, monomial_count, scaled_min_singular, PointSet};

/// Settings for [`build_general_dag`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneralOptions {
    pub gamma: f64,
    pub c_s_init: f64,
    pub eps_tol: f64,
    /// `None` starts the ordering at index 0; `Some(seed)` draws the start.
    pub seed: Option<u64>,
}

impl Default for GeneralOptions {
    fn default() -> Self {
        GeneralOptions { gamma: 2.0, c_s_init: 1.0, eps_tol: 1e-6, seed: None }
    }
}

/// Greedy maximin ordering under the sup-norm.
///
/// Returns the permutation (original indices in visiting order) and, for each
/// visited point, its distance to all previously visited points (infinite for
/// the first). Ties go to the lowest original index.
pub fn maximin_order(points: &PointSet, seed: Option<u64>) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = points.len();
    if n == 0 {
        return Err(VecchiaError::InvalidInput("maximin ordering needs at least one point".into()));
    }
    points.ensure_distinct()?;
    let first = match seed {
        None => 0,
        Some(s) => ChaCha8Rng::seed_from_u64(s).random_range(0..n),
    };
    let mut order = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut min_dist = vec![f64::INFINITY; n];
    let mut next = first;
    let mut next_dist = f64::INFINITY;
    for _ in 0..n {
        order.push(next);
        dists.push(next_dist);
        visited[next] = true;
        let p = points.point(next);
        let mut best = None;
        let mut best_dist = f64::NEG_INFINITY;
        for i in 0..n {
            if visited[i] {
                continue;
            }
            let d = dist_inf(points.point(i), p);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best_dist {
                best_dist = min_dist[i];
                best = Some(i);
            }
        }
        match best {
            Some(b) => {
                next = b;
                next_dist = best_dist;
            }
            None => break,
        }
    }
    Ok((order, dists))
}

/// Layer of a point at distance `dist` from its predecessors: the `j` with
/// `dist in (gamma^-(j+1), gamma^-j]`, and 0 for distances above 1.
fn layer_of(dist: f64, gamma: f64) -> usize {
    let mut j = 0;
    while dist <= gamma.powi(-(j as i32 + 1)) && j < 1000 {
        j += 1;
    }
    j
}

/// Candidates sorted by Euclidean distance to `x`, ties to the lower index.
fn sorted_by_distance(points: &PointSet, order: &[usize], candidates: &[usize], x: &[f64]) -> Vec<usize> {
    let mut c: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&k| (dist2(points.point(order[k]), x), k))
        .collect();
    c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    c.into_iter().map(|(_, k)| k).collect()
}

/// Layered DAG for points in general position.
///
/// Points are maximin ordered and layered by their ordering distance. Parents
/// of a node are drawn from earlier layers in order of increasing distance;
/// a candidate is accepted when the rescaled Vandermonde matrix of the parent
/// set so far keeps its smallest singular value above `c_S`. The threshold is
/// halved until `eps_tol`, after which nearest neighbours fill the set.
pub fn build_general_dag(points: &PointSet, l: usize, opts: GeneralOptions) -> Result<LayeredDag> {
    if !(opts.gamma > 1.0) {
        return Err(VecchiaError::InvalidInput("gamma must exceed 1".into()));
    }
    if !(opts.c_s_init > opts.eps_tol && opts.eps_tol > 0.0) {
        return Err(VecchiaError::InvalidInput("need c_s_init > eps_tol > 0".into()));
    }
    let d = points.dim();
    let m = monomial_count(d, l);
    let (order, dists) = maximin_order(points, opts.seed)?;
    let layers: Vec<usize> = dists.iter().map(|&r| layer_of(r, opts.gamma)).collect();

    let mut nodes = Vec::with_capacity(order.len());
    let mut fallback = Vec::new();
    let mut earlier_end = 0;
    for (i, &orig) in order.iter().enumerate() {
        let layer = layers[i];
        while layers[earlier_end] < layer {
            earlier_end += 1;
        }
        let x = points.point(orig);
        let candidates: Vec<usize> = (0..earlier_end).collect();
        let parents = if candidates.len() <= m {
            candidates
        } else {
            let sorted = sorted_by_distance(points, &order, &candidates, x);
            let (chosen, filled) = gated_parents(points, &order, &sorted, x, layer, l, m, opts);
            if filled {
                fallback.push(i);
            }
            chosen
        };
        nodes.push(DagNode { coords: x.to_vec(), layer, parents, augmented: false });
    }
    let mut dag = LayeredDag::new(d, opts.gamma, l, m, Construction::General, nodes)?;
    dag.fallback_nodes = fallback;
    Ok(dag)
}

#[allow(clippy::too_many_arguments)]
fn gated_parents(
    points: &PointSet,
    order: &[usize],
    sorted: &[usize],
    x: &[f64],
    layer: usize,
    l: usize,
    m: usize,
    opts: GeneralOptions,
) -> (Vec<usize>, bool) {
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let mut pa = PointSet::empty(points.dim());
    let mut used = vec![false; sorted.len()];
    let mut c_s = opts.c_s_init;
    while c_s > opts.eps_tol && chosen.len() < m {
        for (k, &cand) in sorted.iter().enumerate() {
            if used[k] {
                continue;
            }
            let w = points.point(order[cand]);
            if scaled_min_singular(&pa, w, x, layer, opts.gamma, l) >= c_s {
                used[k] = true;
                chosen.push(cand);
                pa.push(w);
                if chosen.len() == m {
                    break;
                }
            }
        }
        c_s /= 2.0;
    }
    let filled = chosen.len() < m;
    for (k, &cand) in sorted.iter().enumerate() {
        if chosen.len() == m {
            break;
        }
        if !used[k] {
            used[k] = true;
            chosen.push(cand);
        }
    }
    (chosen, filled)
}

/// Nearest-neighbour Gaussian process DAG: maximin order, parents are the
/// `parent_count` closest earlier points. Layers use `gamma = 2` thresholds
/// and are informational only.
pub fn build_maximin_nngp_dag(points: &PointSet, parent_count: usize, seed: Option<u64>) -> Result<LayeredDag> {
    if parent_count == 0 {
        return Err(VecchiaError::InvalidInput("parent_count must be at least 1".into()));
    }
    let d = points.dim();
    let (order, dists) = maximin_order(points, seed)?;
    let mut nodes = Vec::with_capacity(order.len());
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(order.len());
    for (i, &orig) in order.iter().enumerate() {
        let x = points.point(orig);
        buf.clear();
        buf.extend((0..i).map(|k| (dist2(points.point(order[k]), x), k)));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if buf.len() > parent_count {
            buf.select_nth_unstable_by(parent_count - 1, cmp);
            buf.truncate(parent_count);
        }
        buf.sort_by(cmp);
        nodes.push(DagNode {
            coords: x.to_vec(),
            layer: layer_of(dists[i], 2.0),
            parents: buf.iter().map(|&(_, k)| k).collect(),
            augmented: false,
        });
    }
    LayeredDag::new(d, 2.0, order_below_count(d, parent_count), parent_count, Construction::MaximinNngp, nodes)
}

/// Closest integer to `2 ln n`, the usual neighbour count for the baseline.
pub fn default_parent_count(n: usize) -> usize {
    ((2.0 * (n as f64).ln()).round() as usize).max(1)
}
