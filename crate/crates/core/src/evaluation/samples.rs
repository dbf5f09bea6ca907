//! Topological comparison between an observed network and networks sampled
//! from fitted parameters.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::sample_graph;
use crate::graph::{graph_stats, DirectedGraph, GraphStats};
use crate::model::ModelParams;
use crate::rng::{derive_seed, Stream};

/// One statistic: the observed value and its spread over samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub statistic: String,
    pub observed: f64,
    pub sample_mean: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for one sample.
    pub sample_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComparison {
    pub observed: GraphStats,
    pub samples: Vec<GraphStats>,
    pub rows: Vec<StatRow>,
}

impl SampleComparison {
    /// CSV with columns `statistic, observed, sample_mean, sample_std`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn row(&self, statistic: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.statistic == statistic)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

fn columns(s: &GraphStats) -> [(&'static str, f64); 5] {
    [
        ("N", s.n_nodes as f64),
        ("M", s.n_edges as f64),
        ("avg_degree", s.avg_degree),
        ("reciprocity", s.reciprocity),
        ("clustering", s.clustering),
    ]
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Draws `n_samples` networks from `params` and summarizes each after
/// removing isolated nodes. Sample `s` uses a seed derived from `(seed, s)`.
pub fn compare_samples(
    observed: &DirectedGraph,
    params: &ModelParams,
    n_samples: usize,
    seed: u64,
) -> Result<SampleComparison> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if observed.n_nodes() != params.n_nodes() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, parameters {}",
            observed.n_nodes(),
            params.n_nodes()
        )));
    }
    let samples: Vec<GraphStats> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let g = sample_graph(params, derive_seed(seed, Stream::Sample, s as u64));
            graph_stats(&g.drop_isolated())
        })
        .collect();
    let observed = graph_stats(&observed.drop_isolated());
    let rows = columns(&observed)
        .iter()
        .enumerate()
        .map(|(c, &(name, value))| {
            let values: Vec<f64> = samples.iter().map(|s| columns(s)[c].1).collect();
            let (sample_mean, sample_std) = mean_std(&values);
            StatRow {
                statistic: name.to_string(),
                observed: value,
                sample_mean,
                sample_std,
            }
        })
        .collect();
    Ok(SampleComparison {
        observed,
        samples,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn table_shape_and_determinism() {
        let n = 40;
        let p = ModelParams::new(Array2::ones((n, 1)), Array2::ones((n, 1)), Array2::from_elem((1, 1), 0.1), 20.0).unwrap();
        let g = sample_graph(&p, 3);
        let a = compare_samples(&g, &p, 5, 11).unwrap();
        let b = compare_samples(&g, &p, 5, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 5);
        let names: Vec<_> = a.rows.iter().map(|r| r.statistic.as_str()).collect();
        assert_eq!(names, ["N", "M", "avg_degree", "reciprocity", "clustering"]);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("statistic,observed,sample_mean,sample_std\n"));
        assert_eq!(text.lines().count(), 6);
        assert!(compare_samples(&g, &p, 0, 1).is_err());
    }

    #[test]
    fn isolated_nodes_are_dropped() {
        let g = DirectedGraph::from_edges(4, [(0, 1)]).unwrap();
        let p = ModelParams::new(Array2::zeros((4, 1)), Array2::zeros((4, 1)), Array2::ones((1, 1)), 1.0).unwrap();
        let c = compare_samples(&g, &p, 2, 0).unwrap();
        assert_eq!(c.observed.n_nodes, 2);
        assert!(c.samples.iter().all(|s| s.n_nodes == 0));
    }
}
