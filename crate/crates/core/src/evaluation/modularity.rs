//! Directed overlapping modularity with belonging coefficients built from
//! soft memberships.

use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

/// How two node-community belongings combine into a link belonging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Max,
    Product,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [Aggregation::Mean, Aggregation::Max, Aggregation::Product];

    #[inline]
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            Aggregation::Mean => 0.5 * (a + b),
            Aggregation::Max => a.max(b),
            Aggregation::Product => a * b,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
            Aggregation::Product => "product",
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            "product" => Ok(Aggregation::Product),
            other => Err(Error::InvalidArgument(format!(
                "unknown aggregation {other:?} (expected mean, max or product)"
            ))),
        }
    }
}

/// `Q = (1/M) Σ_c [Σ_{(i,j)∈E} β_ijc − (Σ_i β^out_ic k_i^out)(Σ_j β^in_jc k_j^in) / M]`.
///
/// The link belonging `β_ijc` is `F(ũ_ic, ũ_jc)` scaled so that it sums to
/// one over communities (zero when `F` vanishes everywhere), with `ũ` the
/// memberships scaled to sum to one per row. `β^out_ic = mean_j β_ijc` and
/// `β^in_jc = mean_i β_ijc`. Nodes with an all-zero row are removed first.
pub fn overlapping_modularity(
    g: &DirectedGraph,
    memberships: &Array2<f64>,
    aggregation: Aggregation,
) -> Result<f64> {
    let (n, k) = memberships.dim();
    if n != g.n_nodes() {
        return Err(Error::Dimension(format!(
            "{n} membership rows for {} nodes",
            g.n_nodes()
        )));
    }
    if let Some(x) = memberships.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidArgument(format!("invalid membership {x}")));
    }
    let sums: Vec<f64> = memberships.rows().into_iter().map(|r| r.sum()).collect();
    let keep: Vec<bool> = sums.iter().map(|&s| s > 0.0).collect();
    let sub = g.induced_subgraph(&keep);
    if sub.n_edges() == 0 {
        return Ok(0.0);
    }
    let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    let nk = kept.len();
    let m = sub.n_edges() as f64;
    let tilde = Array2::from_shape_fn((nk, k), |(a, c)| memberships[[kept[a], c]] / sums[kept[a]]);
    let k_out = sub.out_degrees();
    let k_in = sub.in_degrees();

    let mut beta = vec![0.0; k];
    let link = |i: usize, j: usize, beta: &mut [f64]| {
        let mut total = 0.0;
        for c in 0..k {
            beta[c] = aggregation.combine(tilde[[i, c]], tilde[[j, c]]);
            total += beta[c];
        }
        for b in beta.iter_mut() {
            *b = if total > 0.0 { *b / total } else { 0.0 };
        }
    };

    let mut edge_term = 0.0;
    for (i, j) in sub.edges() {
        link(i, j, &mut beta);
        edge_term += beta.iter().sum::<f64>();
    }
    let mut out_mass = vec![0.0; k];
    let mut in_mass = vec![0.0; k];
    let mut beta_out = vec![0.0; k];
    let mut beta_in = vec![0.0; k];
    for i in 0..nk {
        beta_out.fill(0.0);
        beta_in.fill(0.0);
        for j in 0..nk {
            link(i, j, &mut beta);
            for c in 0..k {
                beta_out[c] += beta[c];
            }
            link(j, i, &mut beta);
            for c in 0..k {
                beta_in[c] += beta[c];
            }
        }
        for c in 0..k {
            out_mass[c] += beta_out[c] / nk as f64 * k_out[i] as f64;
            in_mass[c] += beta_in[c] / nk as f64 * k_in[i] as f64;
        }
    }
    let null_term: f64 = (0..k).map(|c| out_mass[c] * in_mass[c] / m).sum();
    Ok((edge_term - null_term) / m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_cliques() -> DirectedGraph {
        let mut edges = Vec::new();
        for block in [0..4, 4..8] {
            for i in block.clone() {
                for j in block.clone() {
                    if i != j {
                        edges.push((i, j));
                    }
                }
            }
        }
        DirectedGraph::from_edges(8, edges).unwrap()
    }

    #[test]
    fn disconnected_cliques_are_modular() {
        let g = two_cliques();
        let u = Array2::from_shape_fn((8, 2), |(i, c)| f64::from(u8::from(i / 4 == c)));
        for agg in Aggregation::ALL {
            let q = overlapping_modularity(&g, &u, agg).unwrap();
            assert!(q > 0.0, "{agg:?}: {q}");
        }
        // β^out = 3/4 in the own block and 1/4 elsewhere, so Q = 1 - 2·12²/24²
        for agg in [Aggregation::Mean, Aggregation::Max] {
            let q = overlapping_modularity(&g, &u, agg).unwrap();
            assert!((q - 0.5).abs() < 1e-12);
        }
        // β^out = 1/2 in the own block, so Q = 1 - 2·6²/24²
        let q = overlapping_modularity(&g, &u, Aggregation::Product).unwrap();
        assert!((q - 0.875).abs() < 1e-12);
    }

    #[test]
    fn zero_rows_are_dropped() {
        let g = two_cliques();
        let mut u = Array2::from_shape_fn((9, 2), |(i, c)| f64::from(u8::from(i / 4 == c)));
        u.row_mut(8).fill(0.0);
        let g9 = DirectedGraph::from_edges(9, g.edges().chain([(8, 0)])).unwrap();
        let a = overlapping_modularity(&g9, &u, Aggregation::Mean).unwrap();
        let b = overlapping_modularity(&g, &u.slice(ndarray::s![..8, ..]).to_owned(), Aggregation::Mean).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_graph_is_zero() {
        let g = DirectedGraph::empty(3);
        let u = Array2::ones((3, 2));
        assert_eq!(overlapping_modularity(&g, &u, Aggregation::Max).unwrap(), 0.0);
    }

    #[test]
    fn parses_names() {
        for agg in Aggregation::ALL {
            assert_eq!(agg.name().parse::<Aggregation>().unwrap(), agg);
        }
        assert!("median".parse::<Aggregation>().is_err());
    }

    proptest! {
        #[test]
        fn single_community_is_exactly_zero(
            (n, edges) in (2usize..25).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..80))),
            scale in 0.1f64..10.0,
        ) {
            let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
            let g = DirectedGraph::from_edges(n, edges).unwrap();
            let u = Array2::from_elem((n, 1), scale);
            for agg in Aggregation::ALL {
                prop_assert_eq!(overlapping_modularity(&g, &u, agg).unwrap(), 0.0);
            }
        }
    }
}
