//! Layered DAG construction.
//!
//! Every builder returns a [`LayeredDag`]: nodes in topological order, each with
//! a layer label and a list of strictly earlier parent indices. Grid inputs go
//! through [`build_grid_dag`], scattered inputs through [`build_general_dag`]
//! and the nearest-neighbour baseline through [`build_maximin_nngp_dag`].

mod general;
mod grid;
mod validate;

pub use general::{
    build_general_dag, build_maximin_nngp_dag, default_parent_count, maximin_order, GeneralOptions,
};
pub use grid::{build_grid_dag, detect_lattice, first_corner_layer, Lattice};
pub use validate::{validate_dag, DagValidation, ValidationOptions};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VecchiaError};
use crate::polymath::{monomial_count, PointSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Grid,
    GridAugmented,
    General,
    MaximinNngp,
}

impl Construction {
    pub fn name(&self) -> &'static str {
        match self {
            Construction::Grid => "grid",
            Construction::GridAugmented => "grid-augmented",
            Construction::General => "general",
            Construction::MaximinNngp => "maximin-nngp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagNode {
    pub coords: Vec<f64>,
    pub layer: usize,
    pub parents: Vec<usize>,
    #[serde(default)]
    pub augmented: bool,
}

/// Directed acyclic graph over a point set, stored in topological order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredDag {
    pub dimension: usize,
    pub gamma: f64,
    pub order_l: usize,
    /// Target parent-set cardinality.
    pub m: usize,
    pub construction: Construction,
    /// First index from which every node has exactly `m` parents.
    pub i0: usize,
    pub nodes: Vec<DagNode>,
    /// Nodes whose parent sets were completed by nearest neighbours after the
    /// singular-value search gave up.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fallback_nodes: Vec<usize>,
}

impl LayeredDag {
    pub fn new(
        dimension: usize,
        gamma: f64,
        order_l: usize,
        m: usize,
        construction: Construction,
        nodes: Vec<DagNode>,
    ) -> Result<Self> {
        let i0 = first_full_index(&nodes, m);
        let dag = LayeredDag {
            dimension,
            gamma,
            order_l,
            m,
            construction,
            i0,
            nodes,
            fallback_nodes: Vec::new(),
        };
        dag.check()?;
        Ok(dag)
    }

    /// Checks dimensions, parent ordering and duplicate-free parent lists.
    pub fn check(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(VecchiaError::InvalidInput("DAG dimension must be positive".into()));
        }
        if !(self.gamma > 1.0) {
            return Err(VecchiaError::InvalidInput(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.coords.len() != self.dimension {
                return Err(VecchiaError::InvalidInput(format!("node {i} has wrong dimension")));
            }
            if node.coords.iter().any(|c| !c.is_finite()) {
                return Err(VecchiaError::InvalidInput(format!("node {i} has non-finite coordinates")));
            }
            for (k, &p) in node.parents.iter().enumerate() {
                if p >= i {
                    return Err(VecchiaError::InvalidInput(format!(
                        "node {i} lists parent {p}, which does not precede it"
                    )));
                }
                if node.parents[..k].contains(&p) {
                    return Err(VecchiaError::InvalidInput(format!("node {i} repeats parent {p}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.nodes[i].coords
    }

    pub fn layer(&self, i: usize) -> usize {
        self.nodes[i].layer
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.nodes[i].parents
    }

    pub fn is_augmented(&self, i: usize) -> bool {
        self.nodes[i].augmented
    }

    pub fn num_layers(&self) -> usize {
        self.nodes.iter().map(|n| n.layer + 1).max().unwrap_or(0)
    }

    pub fn points(&self) -> PointSet {
        let coords = self.nodes.iter().flat_map(|n| n.coords.iter().copied()).collect();
        PointSet::new(self.dimension, coords).expect("validated coordinates")
    }

    /// Parent coordinates of node `i`.
    pub fn parent_points(&self, i: usize) -> PointSet {
        let mut out = PointSet::empty(self.dimension);
        for &p in self.parents(i) {
            out.push(self.point(p));
        }
        out
    }

    /// Indices of nodes that carry observations, in DAG order.
    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.nodes[i].augmented).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dag: LayeredDag = serde_json::from_str(s)?;
        dag.check()?;
        if dag.i0 != first_full_index(&dag.nodes, dag.m) {
            return Err(VecchiaError::InvalidInput("recorded i0 disagrees with the parent lists".into()));
        }
        Ok(dag)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        LayeredDag::from_json(&std::fs::read_to_string(path)?)
    }
}

/// DAG in which every node conditions on all of its predecessors, so the
/// Vecchia factor reproduces the mother covariance exactly.
pub fn build_full_conditioning_dag(points: &PointSet) -> Result<LayeredDag> {
    let d = points.dim();
    let n = points.len();
    let nodes = points
        .iter()
        .enumerate()
        .map(|(i, p)| DagNode { coords: p.to_vec(), layer: i, parents: (0..i).collect(), augmented: false })
        .collect();
    let m = n.saturating_sub(1);
    LayeredDag::new(d, 2.0, order_below_count(d, m.max(1)), m, Construction::General, nodes)
}

fn first_full_index(nodes: &[DagNode], m: usize) -> usize {
    let mut i0 = nodes.len();
    while i0 > 0 && nodes[i0 - 1].parents.len() == m {
        i0 -= 1;
    }
    i0
}

/// The polynomial order whose monomial count is the largest not exceeding `m`.
pub(crate) fn order_below_count(d: usize, m: usize) -> usize {
    let mut l = 0;
    while monomial_count(d, l + 1) <= m {
        l += 1;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(x: f64, layer: usize, parents: Vec<usize>) -> DagNode {
        DagNode { coords: vec![x], layer, parents, augmented: false }
    }

    #[test]
    fn rejects_forward_parents() {
        let nodes = vec![node(0.0, 0, vec![1]), node(1.0, 0, vec![])];
        assert!(LayeredDag::new(1, 2.0, 1, 2, Construction::Grid, nodes).is_err());
    }

    #[test]
    fn records_i0() {
        let nodes = vec![
            node(0.0, 0, vec![]),
            node(1.0, 0, vec![]),
            node(0.5, 1, vec![0, 1]),
            node(0.25, 2, vec![0, 2]),
        ];
        let dag = LayeredDag::new(1, 2.0, 1, 2, Construction::Grid, nodes).unwrap();
        assert_eq!(dag.i0, 2);
        assert_eq!(dag.num_layers(), 3);
    }

    #[test]
    fn json_round_trip() {
        let nodes = vec![node(0.0, 0, vec![]), node(1.0, 0, vec![]), node(0.5, 1, vec![0, 1])];
        let dag = LayeredDag::new(1, 2.0, 1, 2, Construction::GridAugmented, nodes).unwrap();
        let js = dag.to_json().unwrap();
        assert!(js.contains("\"grid-augmented\""));
        assert_eq!(LayeredDag::from_json(&js).unwrap(), dag);
    }

    #[test]
    fn order_below_count_examples() {
        assert_eq!(order_below_count(1, 12), 11);
        assert_eq!(order_below_count(2, 12), 3);
        assert_eq!(order_below_count(2, 3), 1);
    }
}
