//! Weighted sensor graph `G = (V, E, W)` and per-node feature matrices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SensorId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: SensorId,
    pub to: SensorId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorGraph {
    nodes: Vec<SensorId>,
    edges: Vec<Edge>,
    adjacency: Array2<f64>,
}

impl SensorGraph {
    /// Builds a graph from a dense adjacency matrix; edges are the non-zero
    /// off-diagonal entries.
    pub fn from_adjacency(nodes: Vec<SensorId>, adjacency: Array2<f64>) -> Result<Self> {
        let n = nodes.len();
        if adjacency.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "adjacency is {:?} but there are {n} nodes",
                adjacency.dim()
            )));
        }
        let edges = adjacency
            .indexed_iter()
            .filter(|&((i, j), &w)| i != j && w != 0.0)
            .map(|((i, j), &w)| Edge {
                from: nodes[i].clone(),
                to: nodes[j].clone(),
                weight: w,
            })
            .collect();
        Ok(SensorGraph {
            nodes,
            edges,
            adjacency,
        })
    }

    pub fn nodes(&self) -> &[SensorId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Sub-graph over the given nodes, in the given order.
    pub fn select(&self, nodes: &[SensorId]) -> Result<SensorGraph> {
        let idx: Vec<usize> = nodes
            .iter()
            .map(|s| {
                self.nodes
                    .iter()
                    .position(|n| n == s)
                    .ok_or_else(|| Error::UnknownSensor(s.clone()))
            })
            .collect::<Result<_>>()?;
        let adj = Array2::from_shape_fn((idx.len(), idx.len()), |(i, j)| self.adjacency[[idx[i], idx[j]]]);
        SensorGraph::from_adjacency(nodes.to_vec(), adj)
    }
}

/// Node features at one time step: one row per graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, feature_names: Vec<String>, graph: &SensorGraph) -> Result<Self> {
        if values.nrows() != graph.num_nodes() || values.ncols() != feature_names.len() {
            return Err(Error::Shape(format!(
                "feature matrix {:?} does not match {} nodes x {} features",
                values.dim(),
                graph.num_nodes(),
                feature_names.len()
            )));
        }
        Ok(FeatureMatrix {
            values,
            feature_names,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }
}
