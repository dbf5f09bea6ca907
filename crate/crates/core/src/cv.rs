//! K-fold cross-validation with a symmetric dyad mask.
//!
//! Each fold hides both entries of its dyads from training, fits the model on
//! the remaining dyads and scores the hidden entries by the marginal
//! expectation, the conditional expectation given the observed opposite
//! entry, and the most probable joint label.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{
    joint_classify, mean_std, prediction_report, score_dyads, JointClassificationReport, LabelCounts, PredictionReport,
    ScoreKind,
};
use crate::graph::DirectedGraph;
use crate::inference::{fit, FitConfig};
use crate::mask::{DyadMask, HeldOut};
use crate::rng::{derive_seed, Stream};

/// Symmetric random partition of the dyads into `n_folds` groups.
pub fn make_mask(n_nodes: usize, n_folds: usize, seed: u64) -> Result<DyadMask> {
    DyadMask::random(n_nodes, n_folds, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub final_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_test_dyads: usize,
    pub fit: FitSummary,
    pub marginal: PredictionReport,
    pub conditional: PredictionReport,
    /// Accuracy over dyads with at least one edge, labels 01, 10, 11.
    /// Absent when the fold holds no such dyad.
    pub joint_nonempty: Option<JointClassificationReport>,
    /// All four labels.
    pub joint_all: JointClassificationReport,
}

/// Mean and sample standard deviation of one metric over folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub score_kind: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    /// Folds where the metric was defined.
    pub n_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CVReport {
    pub k: usize,
    pub n_folds: usize,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub aggregate: Vec<MetricSummary>,
    /// Set when the report is the winner of a K sweep.
    pub chosen_k: Option<usize>,
}

/// Flat `(fold, score_kind, metric, value)` rows; absent values are skipped.
fn fold_rows(f: &FoldReport) -> Vec<(&'static str, &'static str, f64)> {
    let mut rows = Vec::new();
    for p in [&f.marginal, &f.conditional] {
        let kind = p.score_kind.name();
        if let Some(a) = p.auc {
            rows.push((kind, "auc", a));
        }
        rows.push((kind, "log_loss", p.log_loss));
        rows.push((kind, "l1_loss", p.l1_loss));
    }
    for (kind, j) in [("joint_nonempty", f.joint_nonempty.as_ref()), ("joint_all", Some(&f.joint_all))] {
        if let Some(j) = j {
            rows.push((kind, "accuracy", j.accuracy));
            rows.push((kind, "rp", j.baselines.rp));
            rows.push((kind, "mrf", j.baselines.mrf));
        }
    }
    rows
}

fn aggregate(folds: &[FoldReport]) -> Vec<MetricSummary> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for f in folds {
        for (kind, metric, v) in fold_rows(f) {
            match keys.iter().position(|&k| k == (kind, metric)) {
                Some(p) => values[p].push(v),
                None => {
                    keys.push((kind, metric));
                    values.push(vec![v]);
                }
            }
        }
    }
    keys.into_iter()
        .zip(values)
        .map(|((kind, metric), v)| {
            let (mean, std) = mean_std(&v);
            MetricSummary {
                score_kind: kind.to_string(),
                metric: metric.to_string(),
                mean,
                std,
                n_folds: v.len(),
            }
        })
        .collect()
}

impl CVReport {
    /// Aggregate of `(score_kind, metric)`, e.g. `("conditional", "auc")`.
    pub fn summary(&self, score_kind: &str, metric: &str) -> Option<&MetricSummary> {
        self.aggregate
            .iter()
            .find(|m| m.score_kind == score_kind && m.metric == metric)
    }

    pub fn mean(&self, score_kind: &str, metric: &str) -> Option<f64> {
        self.summary(score_kind, metric).map(|m| m.mean)
    }

    /// CSV with columns `fold, score_kind, metric, value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(std::iter::once(self), out, false)
    }
}

fn write_rows<'a, W: Write>(reports: impl Iterator<Item = &'a CVReport>, out: W, with_k: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = crate::evaluation::csv_error;
    if with_k {
        w.write_record(["k", "fold", "score_kind", "metric", "value"]).map_err(csv_err)?;
    } else {
        w.write_record(["fold", "score_kind", "metric", "value"]).map_err(csv_err)?;
    }
    for r in reports {
        for f in &r.folds {
            for (kind, metric, v) in fold_rows(f) {
                let mut rec = Vec::with_capacity(5);
                if with_k {
                    rec.push(r.k.to_string());
                }
                rec.extend([f.fold.to_string(), kind.to_string(), metric.to_string(), v.to_string()]);
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn run_fold(g: &DirectedGraph, config: &FitConfig, mask: &DyadMask, fold: usize, seed: u64) -> Result<FoldReport> {
    let held: HeldOut<'_> = mask.hold_out(fold);
    let fold_config = FitConfig {
        seed: derive_seed(seed, Stream::Fold, fold as u64),
        ..config.clone()
    };
    let result = fit(g, &fold_config, Some(held))?;
    let params = &result.params;
    let test = mask.dyads_in(fold);
    let scores = score_dyads(g, params, &test);
    let marginal = prediction_report(ScoreKind::Marginal, &scores.marginal, &scores.labels)?;
    let conditional = prediction_report(ScoreKind::Conditional, &scores.conditional, &scores.labels)?;
    if marginal.auc.is_none() {
        log::warn!("fold {fold}: held-out entries are single-class; AUC undefined");
    }
    let test_counts = LabelCounts::from_dyads(g, &test);
    let mut training = LabelCounts::whole_graph(g);
    for l in 0..4 {
        training.0[l] -= test_counts.0[l];
    }
    let joint_nonempty = match joint_classify(g, params, &test, &training, true) {
        Ok(r) => Some(r),
        Err(Error::EmptyInput) => {
            log::warn!("fold {fold}: no held-out dyad carries an edge");
            None
        }
        Err(e) => return Err(e),
    };
    let joint_all = joint_classify(g, params, &test, &training, false)?;
    Ok(FoldReport {
        fold,
        n_test_dyads: test.len(),
        fit: FitSummary {
            final_loglik: result.final_loglik,
            iterations: result.iterations,
            converged: result.converged,
            restart_index: result.restart_index,
            eta: params.eta,
        },
        marginal,
        conditional,
        joint_nonempty,
        joint_all,
    })
}

/// Cross-validates `config` over `n_folds` folds. The mask comes from `seed`
/// and fold `f` fits with a seed derived from `(seed, f)`; folds run in
/// parallel.
pub fn run_cv(g: &DirectedGraph, config: &FitConfig, n_folds: usize, seed: u64) -> Result<CVReport> {
    config.validate()?;
    if g.n_edges() == 0 {
        return Err(Error::EmptyInput);
    }
    let mask = make_mask(g.n_nodes(), n_folds, seed)?;
    run_cv_with_mask(g, config, &mask, seed)
}

/// Same as [`run_cv`] with a caller-supplied mask.
pub fn run_cv_with_mask(g: &DirectedGraph, config: &FitConfig, mask: &DyadMask, seed: u64) -> Result<CVReport> {
    if mask.n_nodes() != g.n_nodes() {
        return Err(Error::Dimension("mask and graph sizes differ".into()));
    }
    let folds: Vec<FoldReport> = (0..mask.n_folds())
        .into_par_iter()
        .map(|f| run_fold(g, config, mask, f, seed))
        .collect::<Result<_>>()?;
    Ok(CVReport {
        k: config.k,
        n_folds: mask.n_folds(),
        seed,
        aggregate: aggregate(&folds),
        folds,
        chosen_k: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSweepReport {
    /// K with the highest mean conditional AUC; ties go to the smaller K.
    pub chosen_k: usize,
    pub reports: Vec<CVReport>,
}

impl KSweepReport {
    /// CSV with columns `k, fold, score_kind, metric, value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(self.reports.iter(), out, true)
    }
}

/// Runs [`run_cv`] for every K in `ks` on the same mask and picks the K with
/// the best mean conditional AUC.
pub fn k_sweep(g: &DirectedGraph, base: &FitConfig, ks: &[usize], n_folds: usize, seed: u64) -> Result<KSweepReport> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument("empty K list".into()));
    }
    let mut reports = ks
        .iter()
        .map(|&k| run_cv(g, &FitConfig { k, ..base.clone() }, n_folds, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut chosen: Option<(usize, f64)> = None;
    for r in &reports {
        let auc = r.mean("conditional", "auc").unwrap_or(f64::NEG_INFINITY);
        let better = match chosen {
            None => true,
            Some((k, best)) => auc > best || (auc == best && r.k < k),
        };
        if better {
            chosen = Some((r.k, auc));
        }
    }
    let chosen_k = chosen.expect("nonempty").0;
    for r in &mut reports {
        if r.k == chosen_k {
            r.chosen_k = Some(chosen_k);
        }
    }
    Ok(KSweepReport { chosen_k, reports })
}
