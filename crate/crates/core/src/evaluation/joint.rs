//! Joint-label classification of dyads into 00, 01, 10, 11.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::model::{DyadState, ModelParams};

/// Label frequencies of a set of dyads, indexed by [`DyadState::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts(pub [u64; 4]);

impl LabelCounts {
    /// Labels of the listed dyads `(i, j)`, read as `(A_ij, A_ji)`.
    pub fn from_dyads(g: &DirectedGraph, dyads: &[(usize, usize)]) -> Self {
        let mut c = [0; 4];
        for &(i, j) in dyads {
            c[observed_state(g, i, j).index()] += 1;
        }
        Self(c)
    }

    /// Labels of every dyad `{i, j}`, `i < j`.
    pub fn whole_graph(g: &DirectedGraph) -> Self {
        let n = g.n_nodes() as u64;
        let mut c = [0; 4];
        for (i, j) in g.edges() {
            if g.has_edge(j, i) {
                if i < j {
                    c[DyadState::Mutual.index()] += 1;
                }
            } else if i < j {
                c[DyadState::Forward.index()] += 1;
            } else {
                c[DyadState::Backward.index()] += 1;
            }
        }
        c[0] = n * n.saturating_sub(1) / 2 - c[1] - c[2] - c[3];
        Self(c)
    }

    pub fn add(&mut self, state: DyadState) {
        self.0[state.index()] += 1;
    }
}

/// Observed label `(A_ij, A_ji)`.
pub fn observed_state(g: &DirectedGraph, i: usize, j: usize) -> DyadState {
    DyadState::from_entries(g.has_edge(i, j), g.has_edge(j, i))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Accuracy of a uniform random guess among the admissible labels.
    pub rp: f64,
    /// Accuracy of always predicting the most frequent training label.
    pub mrf: f64,
    pub mrf_label: DyadState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointClassificationReport {
    pub exclude_empty: bool,
    pub n_evaluated: usize,
    pub accuracy: f64,
    /// `confusion[predicted][true]`, labels ordered 00, 01, 10, 11.
    pub confusion: [[u64; 4]; 4],
    /// Row-normalized diagonal; absent when a label is never predicted.
    pub precision: [Option<f64>; 4],
    /// Column-normalized diagonal; absent when a label never occurs.
    pub recall: [Option<f64>; 4],
    pub baselines: Baselines,
}

/// Scores predicted against true labels. With `exclude_empty`, pairs whose
/// true label is 00 are dropped and the baselines only consider 01, 10, 11.
pub fn classify(
    predicted: &[DyadState],
    truth: &[DyadState],
    training: &LabelCounts,
    exclude_empty: bool,
) -> Result<JointClassificationReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let first = usize::from(exclude_empty);
    let mut confusion = [[0u64; 4]; 4];
    for (&p, &t) in predicted.iter().zip(truth) {
        if exclude_empty && t == DyadState::Empty {
            continue;
        }
        confusion[p.index()][t.index()] += 1;
    }
    let n: u64 = confusion.iter().flatten().sum();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let correct: u64 = (0..4).map(|l| confusion[l][l]).sum();
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = std::array::from_fn(|l| ratio(confusion[l][l], confusion[l].iter().sum()));
    let recall = std::array::from_fn(|l| ratio(confusion[l][l], (0..4).map(|p| confusion[p][l]).sum()));

    let mut mrf_label = first;
    for l in first + 1..4 {
        if training.0[l] > training.0[mrf_label] {
            mrf_label = l;
        }
    }
    let true_of_mrf: u64 = (0..4).map(|p| confusion[p][mrf_label]).sum();
    Ok(JointClassificationReport {
        exclude_empty,
        n_evaluated: n as usize,
        accuracy: correct as f64 / n as f64,
        confusion,
        precision,
        recall,
        baselines: Baselines {
            rp: 1.0 / (4 - first) as f64,
            mrf: true_of_mrf as f64 / n as f64,
            mrf_label: DyadState::ALL[mrf_label],
        },
    })
}

/// Predicts each dyad `(i, j)` by the most probable joint label and scores it
/// against the observed `(A_ij, A_ji)`.
pub fn joint_classify(
    g: &DirectedGraph,
    params: &ModelParams,
    dyads: &[(usize, usize)],
    training: &LabelCounts,
    exclude_empty: bool,
) -> Result<JointClassificationReport> {
    if g.n_nodes() != params.n_nodes() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, parameters {}",
            g.n_nodes(),
            params.n_nodes()
        )));
    }
    let rates = params.rate_table();
    let mut predicted = Vec::with_capacity(dyads.len());
    let mut truth = Vec::with_capacity(dyads.len());
    for &(i, j) in dyads {
        let dist = crate::model::DyadDistribution::from_rates(rates.rate(i, j), rates.rate(j, i), params.eta);
        predicted.push(dist.argmax(exclude_empty));
        truth.push(observed_state(g, i, j));
    }
    classify(&predicted, &truth, training, exclude_empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn state(x: u8) -> DyadState {
        DyadState::ALL[x as usize % 4]
    }

    #[test]
    fn exact_parameters_classify_perfectly() {
        let g = DirectedGraph::from_edges(4, [(0, 1), (1, 0), (2, 3), (1, 2)]).unwrap();
        let n = 4;
        // one community per node, affinity huge on edges and tiny elsewhere
        let u = Array2::eye(n);
        let w = Array2::from_shape_fn((n, n), |(a, b)| if g.has_edge(a, b) { 1e6 } else { 1e-9 });
        let p = ModelParams::new(u.clone(), u, w, 1.0).unwrap();
        let dyads: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let r = joint_classify(&g, &p, &dyads, &LabelCounts::whole_graph(&g), false).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    assert_eq!(r.confusion[a][b], 0);
                }
            }
        }
    }

    #[test]
    fn baselines() {
        let truth = [DyadState::Forward, DyadState::Mutual, DyadState::Empty, DyadState::Mutual];
        let training = LabelCounts([100, 3, 1, 5]);
        let r = classify(&truth, &truth, &training, true).unwrap();
        assert_eq!(r.n_evaluated, 3);
        assert!((r.baselines.rp - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.baselines.mrf_label, DyadState::Mutual);
        assert!((r.baselines.mrf - 2.0 / 3.0).abs() < 1e-15);
        let r = classify(&truth, &truth, &training, false).unwrap();
        assert_eq!(r.baselines.rp, 0.25);
        assert_eq!(r.baselines.mrf_label, DyadState::Empty);
    }

    #[test]
    fn whole_graph_counts_match_listing() {
        let g = DirectedGraph::from_edges(5, [(0, 1), (1, 0), (3, 2), (1, 4), (4, 0)]).unwrap();
        let dyads: Vec<_> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect();
        assert_eq!(LabelCounts::whole_graph(&g), LabelCounts::from_dyads(&g, &dyads));
        assert_eq!(LabelCounts::whole_graph(&g).0, [6, 2, 1, 1]);
    }

    #[test]
    fn empty_set_is_an_error() {
        let t = [DyadState::Empty];
        assert!(classify(&t, &t, &LabelCounts::default(), true).is_err());
        assert!(classify(&[], &[], &LabelCounts::default(), false).is_err());
    }

    proptest! {
        #[test]
        fn report_matches_recount(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..60), exclude in any::<bool>()) {
            let predicted: Vec<_> = pairs.iter().map(|p| state(p.0)).collect();
            let truth: Vec<_> = pairs.iter().map(|p| state(p.1)).collect();
            let kept: Vec<_> = pairs.iter().filter(|p| !(exclude && p.1 == 0)).collect();
            prop_assume!(!kept.is_empty());
            let r = classify(&predicted, &truth, &LabelCounts([1, 2, 3, 4]), exclude).unwrap();
            let hits = kept.iter().filter(|p| p.0 == p.1).count();
            prop_assert_eq!(r.n_evaluated, kept.len());
            prop_assert_eq!(r.accuracy, hits as f64 / kept.len() as f64);
            let total: u64 = r.confusion.iter().flatten().sum();
            prop_assert_eq!(total as usize, kept.len());
            for l in 0..4 {
                let as_pred = kept.iter().filter(|p| p.0 as usize == l).count();
                let as_true = kept.iter().filter(|p| p.1 as usize == l).count();
                let diag = kept.iter().filter(|p| p.0 as usize == l && p.1 as usize == l).count();
                prop_assert_eq!(r.precision[l], (as_pred > 0).then(|| diag as f64 / as_pred as f64));
                prop_assert_eq!(r.recall[l], (as_true > 0).then(|| diag as f64 / as_true as f64));
            }
        }
    }
}
