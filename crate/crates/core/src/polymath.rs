//! Multivariate polynomial machinery: graded multi-index ordering, Vandermonde
//! matrices, interpolation weights, norming constants and corner sets.
//!
//! Monomials are ordered first by total degree and then lexicographically on
//! the exponent vector, so for `d = 2` the sequence starts
//! `1, x[2], x[1], x[2]^2, x[1] x[2], x[1]^2, ...`.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VecchiaError};

/// Relative singular-value threshold below which a Vandermonde system is
/// declared singular.
pub const SINGULAR_RTOL: f64 = 1e-10;

/// Default per-dimension resolution of the norming-constant search grid.
pub const NORMING_GRID_RESOLUTION: usize = 513;

/// Upper bound on the number of search-grid points in high dimension.
const MAX_SEARCH_POINTS: usize = 1 << 21;

/// Exponent vector of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    /// Evaluates `x^k = prod_h x[h]^k[h]`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&k, &xh)| acc * xh.powi(k as i32))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Dimension of the space of polynomials of total order `l` in `d` variables.
pub fn monomial_count(d: usize, l: usize) -> usize {
    binomial(l + d, l)
}

/// Inverse of [`monomial_count`]: the order `l` with `C(l+d, l) == m`, if any.
pub fn order_for_count(d: usize, m: usize) -> Option<usize> {
    (0..=m).find(|&l| monomial_count(d, l) == m)
}

/// The first `count` multi-indices in dimension `d` under the graded
/// lexicographic ordering.
pub fn multi_index_sequence(d: usize, count: usize) -> Vec<MultiIndex> {
    assert!(d >= 1, "dimension must be positive");
    let mut out = Vec::with_capacity(count);
    let mut degree = 0;
    while out.len() < count {
        let mut buf = vec![0usize; d];
        push_compositions(degree, 0, &mut buf, &mut out, count);
        degree += 1;
    }
    out
}

// Compositions of `remaining` into the tail of `buf`, ascending lexicographically.
fn push_compositions(
    remaining: usize,
    pos: usize,
    buf: &mut Vec<usize>,
    out: &mut Vec<MultiIndex>,
    count: usize,
) {
    if out.len() >= count {
        return;
    }
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(MultiIndex(buf.clone()));
        return;
    }
    for k in 0..=remaining {
        buf[pos] = k;
        push_compositions(remaining - k, pos + 1, buf, out, count);
        if out.len() >= count {
            return;
        }
    }
}

/// Finite point cloud in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(VecchiaError::InvalidInput("dimension must be positive".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(VecchiaError::InvalidInput(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(VecchiaError::InvalidInput(format!("non-finite coordinate {bad}")));
        }
        Ok(PointSet { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        PointSet { dim, coords: Vec::new() }
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.as_ref().len())
            .ok_or_else(|| VecchiaError::InvalidInput("empty point list".into()))?;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(VecchiaError::InvalidInput("ragged point list".into()));
            }
            coords.extend_from_slice(p);
        }
        PointSet::new(dim, coords)
    }

    /// One-dimensional point set from scalar locations.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        PointSet::new(1, xs.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    pub fn subset(&self, idx: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        PointSet { dim: self.dim, coords }
    }

    /// Every coordinate multiplied by `t`.
    pub fn scaled(&self, t: f64) -> PointSet {
        PointSet {
            dim: self.dim,
            coords: self.coords.iter().map(|c| c * t).collect(),
        }
    }

    /// First pair of identical points, found by sorting.
    pub fn first_duplicate(&self) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| cmp_points(self.point(a), self.point(b)).then(a.cmp(&b)));
        order.windows(2).find_map(|w| {
            (self.point(w[0]) == self.point(w[1])).then(|| (w[0].min(w[1]), w[0].max(w[1])))
        })
    }

    pub fn ensure_distinct(&self) -> Result<()> {
        match self.first_duplicate() {
            Some((a, b)) => Err(VecchiaError::DuplicatePoints(a, b)),
            None => Ok(()),
        }
    }
}

pub(crate) fn cmp_points(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

pub(crate) fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Axis-aligned cube `corner + [0, side]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub corner: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn new(corner: Vec<f64>, side: f64) -> Self {
        Cube { corner, side }
    }

    pub fn unit(d: usize) -> Self {
        Cube { corner: vec![0.0; d], side: 1.0 }
    }

    /// Smallest cube (anchored at the coordinate-wise minimum) containing all points.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Option<Self> {
        let mut lo: Option<Vec<f64>> = None;
        let mut hi: Vec<f64> = Vec::new();
        for p in points {
            match lo.as_mut() {
                None => {
                    lo = Some(p.to_vec());
                    hi = p.to_vec();
                }
                Some(lo) => {
                    for h in 0..p.len() {
                        lo[h] = lo[h].min(p[h]);
                        hi[h] = hi[h].max(p[h]);
                    }
                }
            }
        }
        let lo = lo?;
        let side = lo.iter().zip(&hi).fold(0.0f64, |m, (a, b)| m.max(b - a));
        Some(Cube { corner: lo, side })
    }

    pub fn scaled(&self, t: f64) -> Cube {
        Cube {
            corner: self.corner.iter().map(|c| c * t).collect(),
            side: self.side * t,
        }
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.iter()
            .zip(&self.corner)
            .all(|(x, c)| *x >= c - tol && *x <= c + self.side + tol)
    }
}

/// Monomial vector `v_x` for the given exponent list.
pub fn monomial_vector(x: &[f64], indices: &[MultiIndex]) -> DVector<f64> {
    DVector::from_iterator(indices.len(), indices.iter().map(|k| k.monomial(x)))
}

/// Vandermonde matrix with `m` monomial rows and one column per point of `a`.
pub fn vandermonde(a: &PointSet, m: usize) -> DMatrix<f64> {
    let indices = multi_index_sequence(a.dim(), m);
    vandermonde_with(a.iter(), a.len(), &indices)
}

fn vandermonde_with<'a>(
    points: impl Iterator<Item = &'a [f64]>,
    n: usize,
    indices: &[MultiIndex],
) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(indices.len(), n);
    for (j, p) in points.enumerate() {
        for (i, k) in indices.iter().enumerate() {
            v[(i, j)] = k.monomial(p);
        }
    }
    v
}

pub(crate) fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

pub(crate) fn min_singular(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).min()
}

// Centre and scale so that the points span roughly [-1/2, 1/2]^d. Interpolation
// weights are invariant under this map since it preserves the polynomial space.
struct AffineFrame {
    center: Vec<f64>,
    scale: f64,
}

impl AffineFrame {
    fn for_points(a: &PointSet) -> Self {
        let cube = Cube::enclosing(a.iter()).expect("non-empty point set");
        let scale = if cube.side > 0.0 { cube.side } else { 1.0 };
        let center = cube.corner.iter().map(|c| c + 0.5 * cube.side).collect();
        AffineFrame { center, scale }
    }

    fn map(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .map(|(xi, c)| (xi - c) / self.scale)
            .collect()
    }
}

/// Inverse Vandermonde of a unisolvent set, expressed in a normalised frame.
struct InterpolationBasis {
    frame: AffineFrame,
    indices: Vec<MultiIndex>,
    inverse: DMatrix<f64>,
}

impl InterpolationBasis {
    fn new(a: &PointSet) -> Result<Self> {
        let m = a.len();
        let d = a.dim();
        if m == 0 {
            return Err(VecchiaError::InvalidInput("empty interpolation set".into()));
        }
        if order_for_count(d, m).is_none() {
            return Err(VecchiaError::InvalidInput(format!(
                "{m} points do not match the size of any complete polynomial space in dimension {d}"
            )));
        }
        let frame = AffineFrame::for_points(a);
        let indices = multi_index_sequence(d, m);
        let mapped: Vec<Vec<f64>> = a.iter().map(|p| frame.map(p)).collect();
        let v = vandermonde_with(mapped.iter().map(|p| p.as_slice()), m, &indices);
        let sv = singular_values(&v);
        let (smin, smax) = (sv.min(), sv.max());
        if !(smin > SINGULAR_RTOL * smax) {
            return Err(VecchiaError::SingularSystem { min_singular: smin });
        }
        let inverse = v
            .lu()
            .try_inverse()
            .ok_or(VecchiaError::SingularSystem { min_singular: smin })?;
        Ok(InterpolationBasis { frame, indices, inverse })
    }

    fn weights(&self, x: &[f64]) -> DVector<f64> {
        let vx = monomial_vector(&self.frame.map(x), &self.indices);
        &self.inverse * vx
    }

    fn lebesgue(&self, x: &[f64]) -> f64 {
        self.weights(x).iter().map(|w| w.abs()).sum()
    }
}

/// Weights `w = V_A^{-1} v_x`, so that the interpolant through `(A, y)`
/// evaluates to `w . y` at `x`.
pub fn interp_weights(a: &PointSet, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.dim() {
        return Err(VecchiaError::InvalidInput("dimension mismatch".into()));
    }
    let basis = InterpolationBasis::new(a)?;
    Ok(basis.weights(x).iter().copied().collect())
}

/// Norming constant that may be infinite for non-unisolvent sets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormingConstant {
    Finite(f64),
    Infinite,
}

impl NormingConstant {
    pub fn value(&self) -> f64 {
        match self {
            NormingConstant::Finite(v) => *v,
            NormingConstant::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, NormingConstant::Finite(_))
    }
}

impl Serialize for NormingConstant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormingConstant::Finite(v) => s.serialize_f64(*v),
            NormingConstant::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for NormingConstant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(NormingConstant::Finite(v)),
            Raw::Str(s) if s == "infinite" => Ok(NormingConstant::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad norming constant {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormingReport {
    pub norming_constant: NormingConstant,
    pub min_singular_value: f64,
    pub cube: Cube,
}

/// Search settings for [`norming_constant_with`].
#[derive(Clone, Copy, Debug)]
pub struct NormingOptions {
    /// Grid points per dimension.
    pub resolution: usize,
    /// Run one local refinement pass around the best grid point.
    pub refine: bool,
}

impl Default for NormingOptions {
    fn default() -> Self {
        NormingOptions { resolution: NORMING_GRID_RESOLUTION, refine: true }
    }
}

/// `sup_{x in cube} ||V_A^{-1} v_x||_1`, approximated on a uniform grid.
///
/// The grid value is a lower bound on the true supremum; with the default
/// 513 points per dimension plus one refinement pass it is typically exact to
/// better than `1e-6` for low orders.
pub fn norming_constant(a: &PointSet, cube: &Cube, l: usize) -> Result<NormingReport> {
    norming_constant_with(a, cube, l, NormingOptions::default())
}

pub fn norming_constant_with(
    a: &PointSet,
    cube: &Cube,
    l: usize,
    opts: NormingOptions,
) -> Result<NormingReport> {
    let d = a.dim();
    let m = monomial_count(d, l);
    if a.len() != m {
        return Err(VecchiaError::InvalidInput(format!(
            "norming set for order {l} in dimension {d} needs {m} points, got {}",
            a.len()
        )));
    }
    if cube.corner.len() != d || !(cube.side >= 0.0) {
        return Err(VecchiaError::InvalidInput("cube does not match point dimension".into()));
    }
    let raw_smin = min_singular(&vandermonde(a, m));
    let basis = match InterpolationBasis::new(a) {
        Ok(b) => b,
        Err(VecchiaError::SingularSystem { .. }) => {
            return Ok(NormingReport {
                norming_constant: NormingConstant::Infinite,
                min_singular_value: raw_smin,
                cube: cube.clone(),
            })
        }
        Err(e) => return Err(e),
    };

    let res = search_resolution(opts.resolution, d);
    let (mut best, mut arg) = grid_max(&basis, &cube.corner, cube.side, res);
    if opts.refine && res > 1 && cube.side > 0.0 {
        let h = cube.side / (res - 1) as f64;
        let lo: Vec<f64> = arg.iter().map(|x| x - h).collect();
        let local_res = search_resolution(33, d);
        let (v, p) = grid_max_clipped(&basis, &lo, 2.0 * h, local_res, cube);
        if v > best {
            best = v;
            arg = p;
        }
    }
    let _ = arg;
    Ok(NormingReport {
        norming_constant: NormingConstant::Finite(best),
        min_singular_value: raw_smin,
        cube: cube.clone(),
    })
}

fn search_resolution(requested: usize, d: usize) -> usize {
    let cap = (MAX_SEARCH_POINTS as f64).powf(1.0 / d as f64).floor() as usize;
    requested.min(cap.max(2)).max(2)
}

fn grid_max(basis: &InterpolationBasis, corner: &[f64], side: f64, res: usize) -> (f64, Vec<f64>) {
    let d = corner.len();
    let mut best = f64::NEG_INFINITY;
    let mut arg = corner.to_vec();
    let mut idx = vec![0usize; d];
    let mut x = corner.to_vec();
    let step = if res > 1 { side / (res - 1) as f64 } else { 0.0 };
    loop {
        for h in 0..d {
            x[h] = corner[h] + step * idx[h] as f64;
        }
        let v = basis.lebesgue(&x);
        if v > best {
            best = v;
            arg.copy_from_slice(&x);
        }
        if !advance(&mut idx, res) {
            break;
        }
    }
    (best, arg)
}

fn grid_max_clipped(
    basis: &InterpolationBasis,
    corner: &[f64],
    side: f64,
    res: usize,
    bounds: &Cube,
) -> (f64, Vec<f64>) {
    let d = corner.len();
    let mut best = f64::NEG_INFINITY;
    let mut arg = corner.to_vec();
    let mut idx = vec![0usize; d];
    let mut x = corner.to_vec();
    let step = side / (res - 1) as f64;
    loop {
        for h in 0..d {
            let lo = bounds.corner[h];
            x[h] = (corner[h] + step * idx[h] as f64).clamp(lo, lo + bounds.side);
        }
        let v = basis.lebesgue(&x);
        if v > best {
            best = v;
            arg.copy_from_slice(&x);
        }
        if !advance(&mut idx, res) {
            break;
        }
    }
    (best, arg)
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

/// One-dimensional norming constant through the Lagrange basis,
/// `sup_x sum_j |prod_{i != j} (x - w_i) / (w_j - w_i)|` on `[lo, hi]`.
///
/// The Lebesgue function is a polynomial between consecutive breakpoints, so
/// each piece is sampled and then refined by golden-section search.
pub fn lagrange_norming_constant(nodes: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if nodes.is_empty() || !(hi >= lo) {
        return Err(VecchiaError::InvalidInput("need nodes and a non-empty interval".into()));
    }
    for (i, a) in nodes.iter().enumerate() {
        if nodes[i + 1..].iter().any(|b| b == a) {
            return Err(VecchiaError::SingularSystem { min_singular: 0.0 });
        }
    }
    let lebesgue = |x: f64| -> f64 {
        nodes
            .iter()
            .enumerate()
            .map(|(j, wj)| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != j)
                    .fold(1.0, |acc, (_, wi)| acc * (x - wi) / (wj - wi))
                    .abs()
            })
            .sum()
    };
    let mut breaks: Vec<f64> = nodes.iter().copied().filter(|&w| w > lo && w < hi).collect();
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut best = breaks.iter().map(|&b| lebesgue(b)).fold(f64::NEG_INFINITY, f64::max);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        const SAMPLES: usize = 64;
        let h = (b - a) / SAMPLES as f64;
        let (mut k_best, mut v_best) = (0, f64::NEG_INFINITY);
        for k in 0..=SAMPLES {
            let v = lebesgue(a + h * k as f64);
            if v > v_best {
                k_best = k;
                v_best = v;
            }
        }
        let lo_k = (a + h * k_best.saturating_sub(1) as f64).max(a);
        let hi_k = (a + h * (k_best + 1) as f64).min(b);
        best = best.max(v_best).max(golden_max(&lebesgue, lo_k, hi_k));
    }
    Ok(best)
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Smallest singular value of `Gamma [v_{w - center} ...]` over the columns
/// `pa ∪ {candidate}`, with `Gamma = diag(gamma^{j |k_(i)|})`.
pub fn scaled_min_singular(
    pa: &PointSet,
    candidate: &[f64],
    center: &[f64],
    layer: usize,
    gamma: f64,
    l: usize,
) -> f64 {
    let d = center.len();
    let m = monomial_count(d, l);
    let indices = multi_index_sequence(d, m);
    let cols = pa.len() + 1;
    let mut mat = DMatrix::zeros(m, cols);
    let scale = gamma.powi(layer as i32);
    let mut shifted = vec![0.0; d];
    for (j, w) in pa.iter().chain(std::iter::once(candidate)).enumerate() {
        for h in 0..d {
            shifted[h] = w[h] - center[h];
        }
        for (i, k) in indices.iter().enumerate() {
            mat[(i, j)] = scale.powi(k.degree() as i32) * k.monomial(&shifted);
        }
    }
    min_singular(&mat)
}

/// Sorts a coordinate pool by distance to `target`, ties toward the smaller
/// value, after removing duplicates.
pub fn rank_pool(target: f64, pool: &[f64]) -> Vec<f64> {
    let mut ranked: Vec<f64> = pool.to_vec();
    ranked.sort_by(f64::total_cmp);
    ranked.dedup();
    ranked.sort_by(|a, b| {
        (a - target)
            .abs()
            .total_cmp(&(b - target).abs())
            .then(a.total_cmp(b))
    });
    ranked
}

/// Corner set of `target`: products of per-coordinate ranked pool values whose
/// rank offsets sum to at most `l`. Points come out in multi-index order.
pub fn corner_set(target: &[f64], pools: &[Vec<f64>], l: usize) -> Result<PointSet> {
    let d = target.len();
    if pools.len() != d {
        return Err(VecchiaError::InvalidInput("one coordinate pool per dimension required".into()));
    }
    let ranked: Vec<Vec<f64>> = pools
        .iter()
        .zip(target)
        .map(|(p, &t)| rank_pool(t, p))
        .collect();
    for (h, r) in ranked.iter().enumerate() {
        if r.len() < l + 1 {
            return Err(VecchiaError::PoolTooSmall { dim: h, available: r.len(), required: l + 1 });
        }
    }
    let offsets = multi_index_sequence(d, monomial_count(d, l));
    let mut out = PointSet::empty(d);
    let mut p = vec![0.0; d];
    for k in &offsets {
        for h in 0..d {
            p[h] = ranked[h][k.0[h]];
        }
        out.push(&p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mi(v: &[usize]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn multi_index_examples() {
        assert_eq!(multi_index_sequence(1, 3), vec![mi(&[0]), mi(&[1]), mi(&[2])]);
        assert_eq!(
            multi_index_sequence(2, 3),
            vec![mi(&[0, 0]), mi(&[0, 1]), mi(&[1, 0])]
        );
        assert_eq!(
            multi_index_sequence(2, 6),
            vec![
                mi(&[0, 0]),
                mi(&[0, 1]),
                mi(&[1, 0]),
                mi(&[0, 2]),
                mi(&[1, 1]),
                mi(&[2, 0])
            ]
        );
    }

    #[test]
    fn vandermonde_examples() {
        let a = PointSet::from_scalars(&[0.3, 0.7]).unwrap();
        assert_eq!(vandermonde(&a, 2), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.3, 0.7]));

        let a = PointSet::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(vandermonde(&a, 3), expected);

        let a = PointSet::from_scalars(&[0.0, 0.5, 1.0]).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 0.0, 0.5, 1.0, 0.0, 0.25, 1.0]);
        assert_eq!(vandermonde(&a, 3), expected);
    }

    #[test]
    fn interp_weight_examples() {
        let a = PointSet::from_scalars(&[0.0, 1.0]).unwrap();
        let w = interp_weights(&a, &[0.5]).unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-14);

        // 1 - x and x evaluated at 2
        let w = interp_weights(&a, &[2.0]).unwrap();
        assert_abs_diff_eq!(w[0], -1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(w[1], 2.0, epsilon = 1e-13);

        // barycentric coordinates of (0.5, 0.5) in the unit triangle
        let a = PointSet::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let w = interp_weights(&a, &[0.5, 0.5]).unwrap();
        for (got, want) in w.iter().zip([0.0, 0.5, 0.5]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-13);
        }
    }

    #[test]
    fn interp_weights_singular() {
        let a = PointSet::from_points(&[[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            interp_weights(&a, &[0.2, 0.1]),
            Err(VecchiaError::SingularSystem { .. })
        ));
    }

    #[test]
    fn interp_weights_rejects_incomplete_sizes() {
        let a = PointSet::from_points(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(matches!(interp_weights(&a, &[0.2, 0.1]), Err(VecchiaError::InvalidInput(_))));
    }

    #[test]
    fn norming_constant_examples() {
        let a = PointSet::from_scalars(&[0.0, 1.0]).unwrap();
        let r = norming_constant(&a, &Cube::unit(1), 1).unwrap();
        assert_abs_diff_eq!(r.norming_constant.value(), 1.0, epsilon = 1e-12);

        let a = PointSet::from_scalars(&[0.0, 0.5, 1.0]).unwrap();
        let r = norming_constant(&a, &Cube::unit(1), 2).unwrap();
        assert_abs_diff_eq!(r.norming_constant.value(), 1.25, epsilon = 1e-10);

        let a = PointSet::from_points(&[[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]).unwrap();
        let r = norming_constant(&a, &Cube::unit(2), 1).unwrap();
        assert_eq!(r.norming_constant, NormingConstant::Infinite);
        assert!(r.min_singular_value < 1e-10);
    }

    #[test]
    fn lagrange_closed_form_examples() {
        assert_abs_diff_eq!(lagrange_norming_constant(&[0.0, 1.0], 0.0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            lagrange_norming_constant(&[0.0, 0.5, 1.0], 0.0, 1.0).unwrap(),
            1.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn norming_report_json() {
        let a = PointSet::from_points(&[[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]).unwrap();
        let r = norming_constant(&a, &Cube::unit(2), 1).unwrap();
        let js = serde_json::to_value(&r).unwrap();
        assert_eq!(js["norming_constant"], "infinite");
        let back: NormingReport = serde_json::from_value(js).unwrap();
        assert_eq!(back.norming_constant, NormingConstant::Infinite);
    }

    #[test]
    fn scaled_min_singular_examples() {
        let pa = PointSet::from_scalars(&[0.0]).unwrap();
        let s = scaled_min_singular(&pa, &[1.0], &[0.5], 1, 2.0, 1);
        assert_abs_diff_eq!(s, 2f64.sqrt(), epsilon = 1e-12);

        let s = scaled_min_singular(&PointSet::empty(1), &[0.0], &[0.0], 3, 2.0, 1);
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);

        let pa = PointSet::from_scalars(&[0.25]).unwrap();
        let s = scaled_min_singular(&pa, &[0.25], &[0.5], 1, 2.0, 1);
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn corner_set_examples() {
        let c = corner_set(&[0.25], &[vec![0.0, 0.5, 1.0]], 1).unwrap();
        assert_eq!(c.coords(), &[0.0, 0.5]);

        let pool = vec![0.0, 0.5, 1.0];
        let c = corner_set(&[0.25, 0.25], &[pool.clone(), pool], 1).unwrap();
        assert_eq!(c.coords(), &[0.0, 0.0, 0.0, 0.5, 0.5, 0.0]);

        let c = corner_set(&[0.5], &[vec![0.0, 1.0]], 1).unwrap();
        assert_eq!(c.coords(), &[0.0, 1.0]);

        assert!(matches!(
            corner_set(&[0.5], &[vec![0.0, 1.0]], 2),
            Err(VecchiaError::PoolTooSmall { dim: 0, available: 2, required: 3 })
        ));
    }

    #[test]
    fn duplicate_detection() {
        let p = PointSet::from_scalars(&[0.1, 0.4, 0.1]).unwrap();
        assert_eq!(p.first_duplicate(), Some((0, 2)));
        assert!(PointSet::from_scalars(&[0.0, 0.4, 1.0]).unwrap().ensure_distinct().is_ok());
    }
}
