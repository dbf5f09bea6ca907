//! Matching nodes between edge lists and parameter files by label.

use std::collections::HashMap;

use anyhow::{bail, Result};
use dyadnet::{DirectedGraph, ModelParams};
use ndarray::Array2;

fn param_labels(p: &ModelParams) -> Vec<String> {
    match &p.node_labels {
        Some(l) => l.clone(),
        None => (0..p.n_nodes()).map(|i| i.to_string()).collect(),
    }
}

fn graph_labels(g: &DirectedGraph) -> Vec<String> {
    (0..g.n_nodes()).map(|i| g.label(i)).collect()
}

/// Re-indexes `g` so that node `i` is row `i` of `p`. Nodes of `p` missing
/// from the edge list become isolated.
pub fn graph_onto_params(g: &DirectedGraph, p: &ModelParams) -> Result<DirectedGraph> {
    let target = param_labels(p);
    let source = graph_labels(g);
    if source == target {
        return Ok(g.clone());
    }
    let index: HashMap<&str, usize> = target.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut map = Vec::with_capacity(source.len());
    for label in &source {
        match index.get(label.as_str()) {
            Some(&i) => map.push(i),
            None => bail!(usage(format!("node {label:?} of the edge list is not in the parameters"))),
        }
    }
    let edges = g.edges().map(|(i, j)| (map[i], map[j]));
    Ok(DirectedGraph::from_edges(target.len(), edges)?.with_labels(target)?)
}

/// Rows of `inferred`'s memberships reordered to the node order of `truth`;
/// nodes without inferred rows get zero rows.
pub fn memberships_onto(truth: &ModelParams, inferred: &ModelParams) -> Result<(Array2<f64>, Array2<f64>)> {
    if truth.n_communities() != inferred.n_communities() {
        bail!(usage(format!(
            "true parameters have K = {}, inferred K = {}",
            truth.n_communities(),
            inferred.n_communities()
        )));
    }
    let target = param_labels(truth);
    let source = param_labels(inferred);
    if source == target {
        return Ok((inferred.u.clone(), inferred.v.clone()));
    }
    let index: HashMap<&str, usize> = source.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let unknown = source.iter().find(|l| !target.contains(l));
    if let Some(l) = unknown {
        bail!(usage(format!("inferred node {l:?} is not in the true parameters")));
    }
    let k = truth.n_communities();
    let pick = |m: &Array2<f64>| {
        Array2::from_shape_fn((target.len(), k), |(i, c)| match index.get(target[i].as_str()) {
            Some(&s) => m[[s, c]],
            None => 0.0,
        })
    };
    Ok((pick(&inferred.u), pick(&inferred.v)))
}

/// Marks an error as a usage or validation problem (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> Usage {
    Usage(msg.into())
}
