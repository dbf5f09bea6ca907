//! Edge-prediction scores: AUC and reconstruction losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::model::{conditional_mean, marginal_mean, ModelParams};

/// Probabilities are clipped to `[CLIP, 1 - CLIP]` before taking logs.
pub const CLIP: f64 = 1e-12;

/// Which expectation produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// `E[A_ij]`.
    Marginal,
    /// `E[A_ij | A_ji]` with the observed opposite entry.
    Conditional,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 2] = [ScoreKind::Marginal, ScoreKind::Conditional];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Marginal => "marginal",
            ScoreKind::Conditional => "conditional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub log_loss: f64,
    pub l1_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub score_kind: ScoreKind,
    /// Absent when the labels hold a single class.
    pub auc: Option<f64>,
    pub log_loss: f64,
    pub l1_loss: f64,
    pub n_entries: usize,
    pub n_positive: usize,
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Area under the ROC curve via the Mann–Whitney statistic with average ranks,
/// so tied scores count one half. `None` without both classes.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives keeps everything integral
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1..=end share the average (start + 1 + end) / 2
        let positives = order[start..end].iter().filter(|&&e| labels[e]).count() as u128;
        twice_rank_sum += positives * (start + 1 + end) as u128;
        start = end;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(Some(twice_u as f64 / (2 * p * q) as f64))
}

/// Mean binary cross-entropy and mean absolute error over the given entries.
pub fn losses(probabilities: &[f64], labels: &[bool]) -> Result<Losses> {
    check_lengths(probabilities, labels)?;
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut log_sum = 0.0;
    let mut l1_sum = 0.0;
    for (&p, &y) in probabilities.iter().zip(labels) {
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("probability {p}")));
        }
        let clipped = p.clamp(CLIP, 1.0 - CLIP);
        if y {
            log_sum -= clipped.ln();
            l1_sum += 1.0 - p.clamp(0.0, 1.0);
        } else {
            log_sum -= (1.0 - clipped).ln();
            l1_sum += p.clamp(0.0, 1.0);
        }
    }
    let n = labels.len() as f64;
    Ok(Losses {
        log_loss: log_sum / n,
        l1_loss: l1_sum / n,
    })
}

/// AUC and both losses for one score vector.
pub fn prediction_report(kind: ScoreKind, scores: &[f64], labels: &[bool]) -> Result<PredictionReport> {
    let auc = auc(scores, labels)?;
    let l = losses(scores, labels)?;
    Ok(PredictionReport {
        score_kind: kind,
        auc,
        log_loss: l.log_loss,
        l1_loss: l.l1_loss,
        n_entries: labels.len(),
        n_positive: labels.iter().filter(|&&y| y).count(),
    })
}

/// Entry-level scores of a set of dyads. Both ordered entries of each dyad
/// appear, `(i, j)` followed by `(j, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryScores {
    pub entries: Vec<(usize, usize)>,
    pub labels: Vec<bool>,
    pub marginal: Vec<f64>,
    pub conditional: Vec<f64>,
}

impl EntryScores {
    pub fn scores(&self, kind: ScoreKind) -> &[f64] {
        match kind {
            ScoreKind::Marginal => &self.marginal,
            ScoreKind::Conditional => &self.conditional,
        }
    }
}

/// Marginal and conditional scores of every entry in `dyads`.
pub fn score_dyads(g: &DirectedGraph, params: &ModelParams, dyads: &[(usize, usize)]) -> EntryScores {
    let rates = params.rate_table();
    let eta = params.eta;
    let mut out = EntryScores {
        entries: Vec::with_capacity(2 * dyads.len()),
        labels: Vec::with_capacity(2 * dyads.len()),
        marginal: Vec::with_capacity(2 * dyads.len()),
        conditional: Vec::with_capacity(2 * dyads.len()),
    };
    for &(i, j) in dyads {
        let (l_ij, l_ji) = (rates.rate(i, j), rates.rate(j, i));
        let (a_ij, a_ji) = (g.has_edge(i, j), g.has_edge(j, i));
        for (e, l_fwd, l_bwd, a_fwd, a_bwd) in [((i, j), l_ij, l_ji, a_ij, a_ji), ((j, i), l_ji, l_ij, a_ji, a_ij)] {
            out.entries.push(e);
            out.labels.push(a_fwd);
            out.marginal.push(marginal_mean(l_fwd, l_bwd, eta));
            out.conditional.push(conditional_mean(l_fwd, eta, a_bwd));
        }
    }
    out
}
