//! Whole-network reconstruction from fitted parameters.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{
    classify, csv_error, observed_state, prediction_report, score_dyads, EntryScores, JointClassificationReport,
    LabelCounts, PredictionReport, ScoreKind,
};
use crate::graph::DirectedGraph;
use crate::model::{DyadDistribution, DyadState, ModelParams};

/// Default display threshold for exported entries.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

/// One exported entry `source -> target`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportEdge {
    pub source: String,
    pub target: String,
    pub marginal_score: f64,
    pub conditional_score: f64,
    /// Most probable joint label of the dyad read as `(A_source,target, A_target,source)`.
    pub joint_label: DyadState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub threshold: f64,
    pub marginal: PredictionReport,
    pub conditional: PredictionReport,
    /// Four-label classification of every dyad.
    pub joint: JointClassificationReport,
    /// Entries whose marginal or conditional score exceeds the threshold.
    pub export: Vec<ExportEdge>,
    /// Scores of every ordered off-diagonal entry.
    #[serde(skip)]
    pub scores: EntryScores,
}

impl ReconstructionReport {
    pub fn losses(&self, kind: ScoreKind) -> &PredictionReport {
        match kind {
            ScoreKind::Marginal => &self.marginal,
            ScoreKind::Conditional => &self.conditional,
        }
    }

    /// CSV with columns `source, target, marginal_score, conditional_score, joint_label`.
    pub fn write_export_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "target", "marginal_score", "conditional_score", "joint_label"])
            .map_err(csv_error)?;
        for e in &self.export {
            w.write_record([
                e.source.as_str(),
                e.target.as_str(),
                &e.marginal_score.to_string(),
                &e.conditional_score.to_string(),
                e.joint_label.code(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores every entry of `g` under `params` in both modes, classifies every
/// dyad among the four joint labels, and keeps entries scoring above
/// `threshold` for export.
pub fn reconstruct(g: &DirectedGraph, params: &ModelParams, threshold: f64) -> Result<ReconstructionReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let n = g.n_nodes();
    if n != params.n_nodes() {
        return Err(Error::Dimension(format!(
            "graph has {n} nodes, parameters {}",
            params.n_nodes()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two nodes".into()));
    }
    let dyads: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let scores = score_dyads(g, params, &dyads);
    let marginal = prediction_report(ScoreKind::Marginal, &scores.marginal, &scores.labels)?;
    let conditional = prediction_report(ScoreKind::Conditional, &scores.conditional, &scores.labels)?;

    let rates = params.rate_table();
    let mut predicted = Vec::with_capacity(dyads.len());
    let mut truth = Vec::with_capacity(dyads.len());
    for &(i, j) in &dyads {
        predicted.push(DyadDistribution::from_rates(rates.rate(i, j), rates.rate(j, i), params.eta).argmax(false));
        truth.push(observed_state(g, i, j));
    }
    let joint = classify(&predicted, &truth, &LabelCounts::whole_graph(g), false)?;

    let mut export = Vec::new();
    for (e, &(i, j)) in scores.entries.iter().enumerate() {
        let (m, c) = (scores.marginal[e], scores.conditional[e]);
        if m > threshold || c > threshold {
            let dyad = predicted[e / 2];
            let joint_label = if i < j { dyad } else { flip(dyad) };
            export.push(ExportEdge {
                source: g.label(i),
                target: g.label(j),
                marginal_score: m,
                conditional_score: c,
                joint_label,
            });
        }
    }
    Ok(ReconstructionReport {
        threshold,
        marginal,
        conditional,
        joint,
        export,
        scores,
    })
}

fn flip(s: DyadState) -> DyadState {
    let (a, b) = s.entries();
    DyadState::from_entries(b, a)
}
