//! Closed-form mathematics of the joint-dyad model.
//!
//! A dyad `{i, j}` takes one of four states `(A_ij, A_ji)`. With community
//! rates `λ_ij = Σ_kq u_ik v_jq w_kq` and pair interaction `η`, the cell
//! probabilities are
//!
//! ```text
//! p00 = 1/Z   p01 = λ_ji/Z   p10 = λ_ij/Z   p11 = η λ_ij λ_ji / Z
//! Z   = 1 + λ_ij + λ_ji + η λ_ij λ_ji
//! ```
//!
//! `η = 1` makes the two directions independent; `η > 1` favours mutual
//! edges and `η < 1` suppresses them.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::mask::HeldOut;

/// Latent parameters `(u, v, w, η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Out-going memberships, N×K.
    pub u: Array2<f64>,
    /// In-coming memberships, N×K.
    pub v: Array2<f64>,
    /// Community affinity, K×K.
    pub w: Array2<f64>,
    /// Pair interaction.
    pub eta: f64,
    pub node_labels: Option<Vec<String>>,
}

impl ModelParams {
    /// Validates shapes, nonnegativity and `eta > 0`.
    pub fn new(u: Array2<f64>, v: Array2<f64>, w: Array2<f64>, eta: f64) -> Result<Self> {
        let p = Self {
            u,
            v,
            w,
            eta,
            node_labels: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = self.u.dim();
        if self.v.dim() != (n, k) {
            return Err(Error::Dimension(format!(
                "u is {n}x{k} but v is {:?}",
                self.v.dim()
            )));
        }
        if self.w.dim() != (k, k) {
            return Err(Error::Dimension(format!(
                "w must be {k}x{k}, got {:?}",
                self.w.dim()
            )));
        }
        if k == 0 {
            return Err(Error::Dimension("K must be at least 1".into()));
        }
        for (name, m) in [("u", &self.u), ("v", &self.v), ("w", &self.w)] {
            if let Some(x) = m.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} has invalid entry {x}"
                )));
            }
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if let Some(labels) = &self.node_labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_communities(&self) -> usize {
        self.u.ncols()
    }

    /// `λ_ij = Σ_kq u_ik v_jq w_kq`.
    pub fn lambda(&self, i: usize, j: usize) -> f64 {
        lambda_rate(self, i, j)
    }

    /// Precomputes `(w v^T)^T` so each `λ_ij` costs O(K).
    pub fn rate_table(&self) -> RateTable {
        RateTable::new(self)
    }

    /// Joint distribution of the dyad `{i, j}` ordered as `(A_ij, A_ji)`.
    pub fn dyad(&self, i: usize, j: usize) -> DyadDistribution {
        DyadDistribution::from_rates(self.lambda(i, j), self.lambda(j, i), self.eta)
    }

    /// Same parameters with every rate multiplied by `factor`.
    pub fn scale_rates(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.w.mapv_inplace(|x| x * factor);
        out
    }

    pub fn to_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &ParamsFile::from(self))?;
        Ok(())
    }

    pub fn from_json<R: Read>(input: R) -> Result<Self> {
        let file: ParamsFile = serde_json::from_reader(input)?;
        file.try_into()
    }
}

/// On-disk form of [`ModelParams`].
#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    eta: f64,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    #[serde(default)]
    node_labels: Vec<String>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(name: &str, data: Vec<Vec<f64>>, nrows: usize, ncols: usize) -> Result<Array2<f64>> {
    if data.len() != nrows || data.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "{name} must be {nrows}x{ncols}"
        )));
    }
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((nrows, ncols), flat).expect("shape checked"))
}

impl From<&ModelParams> for ParamsFile {
    fn from(p: &ModelParams) -> Self {
        Self {
            n: p.n_nodes(),
            k: p.n_communities(),
            eta: p.eta,
            u: rows(&p.u),
            v: rows(&p.v),
            w: rows(&p.w),
            node_labels: p.node_labels.clone().unwrap_or_default(),
        }
    }
}

impl TryFrom<ParamsFile> for ModelParams {
    type Error = Error;

    fn try_from(f: ParamsFile) -> Result<Self> {
        let u = matrix("u", f.u, f.n, f.k)?;
        let v = matrix("v", f.v, f.n, f.k)?;
        let w = matrix("w", f.w, f.k, f.k)?;
        let mut p = ModelParams::new(u, v, w, f.eta)?;
        if !f.node_labels.is_empty() {
            p.node_labels = Some(f.node_labels);
            p.validate()?;
        }
        Ok(p)
    }
}

/// Row cache for fast rate evaluation: `λ_ij = u_i · wv_j` with
/// `wv_jk = Σ_q w_kq v_jq`.
#[derive(Debug, Clone)]
pub struct RateTable {
    k: usize,
    u: Vec<f64>,
    wv: Vec<f64>,
}

impl RateTable {
    pub fn new(p: &ModelParams) -> Self {
        let (n, k) = p.u.dim();
        let mut wv = vec![0.0; n * k];
        for j in 0..n {
            for a in 0..k {
                let mut s = 0.0;
                for q in 0..k {
                    s += p.w[[a, q]] * p.v[[j, q]];
                }
                wv[j * k + a] = s;
            }
        }
        Self {
            k,
            u: p.u.iter().copied().collect(),
            wv,
        }
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let k = self.k;
        dot(&self.u[i * k..(i + 1) * k], &self.wv[j * k..(j + 1) * k])
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `λ_ij = Σ_kq u_ik v_jq w_kq`, O(K²).
pub fn lambda_rate(p: &ModelParams, i: usize, j: usize) -> f64 {
    let k = p.n_communities();
    let mut s = 0.0;
    for a in 0..k {
        let ua = p.u[[i, a]];
        if ua == 0.0 {
            continue;
        }
        for b in 0..k {
            s += ua * p.v[[j, b]] * p.w[[a, b]];
        }
    }
    s
}

/// The four cell probabilities of one dyad, ordered as `(A_ij, A_ji)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadDistribution {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
    /// Normalizer; `p00 = 1/z`. Infinite when the rates overflow.
    pub z: f64,
}

/// Joint label of a dyad `(A_ij, A_ji)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DyadState {
    #[serde(rename = "00")]
    Empty,
    /// Only `j -> i`.
    #[serde(rename = "01")]
    Backward,
    /// Only `i -> j`.
    #[serde(rename = "10")]
    Forward,
    #[serde(rename = "11")]
    Mutual,
}

impl DyadState {
    pub const ALL: [DyadState; 4] = [
        DyadState::Empty,
        DyadState::Backward,
        DyadState::Forward,
        DyadState::Mutual,
    ];

    pub fn from_entries(a_ij: bool, a_ji: bool) -> Self {
        match (a_ij, a_ji) {
            (false, false) => Self::Empty,
            (false, true) => Self::Backward,
            (true, false) => Self::Forward,
            (true, true) => Self::Mutual,
        }
    }

    /// Index in the fixed order 00, 01, 10, 11.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn entries(self) -> (bool, bool) {
        match self {
            Self::Empty => (false, false),
            Self::Backward => (false, true),
            Self::Forward => (true, false),
            Self::Mutual => (true, true),
        }
    }

    pub fn code(self) -> &'static str {
        ["00", "01", "10", "11"][self.index()]
    }
}

impl DyadDistribution {
    /// Validating constructor.
    pub fn new(lambda_ij: f64, lambda_ji: f64, eta: f64) -> Result<Self> {
        if !(lambda_ij.is_finite() && lambda_ji.is_finite() && eta.is_finite()) {
            return Err(Error::NonFinite(format!(
                "rates ({lambda_ij}, {lambda_ji}), eta {eta}"
            )));
        }
        if lambda_ij < 0.0 || lambda_ji < 0.0 || eta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rates must be >= 0 and eta > 0, got ({lambda_ij}, {lambda_ji}), {eta}"
            )));
        }
        Ok(Self::from_rates(lambda_ij, lambda_ji, eta))
    }

    /// Unchecked constructor for inputs already known to be valid.
    #[inline]
    pub fn from_rates(lambda_ij: f64, lambda_ji: f64, eta: f64) -> Self {
        let joint = eta * lambda_ij * lambda_ji;
        let z = lambda_ij + lambda_ji + joint + 1.0;
        if z.is_finite() {
            return Self {
                p00: 1.0 / z,
                p01: lambda_ji / z,
                p10: lambda_ij / z,
                p11: joint / z,
                z,
            };
        }
        // Overflowed: rescale by the largest term in log space.
        let logs = [
            0.0,
            lambda_ji.ln(),
            lambda_ij.ln(),
            eta.ln() + lambda_ij.ln() + lambda_ji.ln(),
        ];
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled = logs.map(|l| (l - top).exp());
        let total: f64 = scaled.iter().sum();
        Self {
            p00: scaled[0] / total,
            p01: scaled[1] / total,
            p10: scaled[2] / total,
            p11: scaled[3] / total,
            z: f64::INFINITY,
        }
    }

    pub fn probs(&self) -> [f64; 4] {
        [self.p00, self.p01, self.p10, self.p11]
    }

    pub fn prob(&self, state: DyadState) -> f64 {
        self.probs()[state.index()]
    }

    /// `P(A_ij = 1)`.
    pub fn marginal_ij(&self) -> f64 {
        self.p10 + self.p11
    }

    /// `P(A_ji = 1)`.
    pub fn marginal_ji(&self) -> f64 {
        self.p01 + self.p11
    }

    /// Natural parameters `(f_ij, f_ji, J)`: log-odds of each direction
    /// against the empty state and the log cross-product ratio.
    pub fn natural_parameters(&self) -> (f64, f64, f64) {
        (
            (self.p10 / self.p00).ln(),
            (self.p01 / self.p00).ln(),
            (self.p11 * self.p00 / (self.p10 * self.p01)).ln(),
        )
    }

    /// Most probable state; earlier states win ties.
    pub fn argmax(&self, exclude_empty: bool) -> DyadState {
        let probs = self.probs();
        let start = usize::from(exclude_empty);
        let mut best = start;
        for s in start + 1..4 {
            if probs[s] > probs[best] {
                best = s;
            }
        }
        DyadState::ALL[best]
    }

    /// State reached by inverse-CDF with a uniform draw in `[0, 1)`, walking
    /// the states in the order 00, 01, 10, 11.
    pub fn state_at(&self, uniform: f64) -> DyadState {
        let mut acc = 0.0;
        for (s, p) in DyadState::ALL.iter().zip(self.probs()) {
            acc += p;
            if uniform < acc {
                return *s;
            }
        }
        // rounding left a sliver above the cumulative total
        DyadState::ALL
            .iter()
            .rev()
            .copied()
            .find(|s| self.prob(*s) > 0.0)
            .unwrap_or(DyadState::Empty)
    }
}

/// Cell probabilities of a dyad, with input validation.
pub fn dyad_distribution(lambda_ij: f64, lambda_ji: f64, eta: f64) -> Result<DyadDistribution> {
    DyadDistribution::new(lambda_ij, lambda_ji, eta)
}

/// `E[A_ij] = (λ_ij + η λ_ij λ_ji) / Z`.
pub fn marginal_mean(lambda_ij: f64, lambda_ji: f64, eta: f64) -> f64 {
    let joint = eta * lambda_ij * lambda_ji;
    let z = lambda_ij + lambda_ji + joint + 1.0;
    if z.is_finite() {
        (lambda_ij + joint) / z
    } else {
        DyadDistribution::from_rates(lambda_ij, lambda_ji, eta).marginal_ij()
    }
}

/// `E[A_ij | A_ji] = η^{A_ji} λ_ij / (η^{A_ji} λ_ij + 1)`.
pub fn conditional_mean(lambda_ij: f64, eta: f64, a_ji: bool) -> f64 {
    let x = if a_ji { eta * lambda_ij } else { lambda_ij };
    if x.is_finite() {
        x / (x + 1.0)
    } else {
        1.0
    }
}

/// First and second moments of a dyad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadMoments {
    pub mean_ij: f64,
    pub mean_ji: f64,
    pub var_ij: f64,
    pub var_ji: f64,
    pub cov: f64,
}

/// Means, variances and covariance from the closed forms.
pub fn dyad_moments(lambda_ij: f64, lambda_ji: f64, eta: f64) -> DyadMoments {
    let z = lambda_ij + lambda_ji + eta * lambda_ij * lambda_ji + 1.0;
    let z2 = z * z;
    DyadMoments {
        mean_ij: marginal_mean(lambda_ij, lambda_ji, eta),
        mean_ji: marginal_mean(lambda_ji, lambda_ij, eta),
        var_ij: lambda_ij * (1.0 + eta * lambda_ji) * (1.0 + lambda_ji) / z2,
        var_ji: lambda_ji * (1.0 + eta * lambda_ij) * (1.0 + lambda_ij) / z2,
        cov: (eta - 1.0) * lambda_ij * lambda_ji / z2,
    }
}

fn check_graph(g: &DirectedGraph, p: &ModelParams) -> Result<()> {
    if g.n_nodes() != p.n_nodes() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, parameters {}",
            g.n_nodes(),
            p.n_nodes()
        )));
    }
    Ok(())
}

/// Log-likelihood over the training dyads.
///
/// Returns `-inf` when an observed edge has zero rate.
pub fn log_likelihood(
    g: &DirectedGraph,
    p: &ModelParams,
    mask: Option<HeldOut<'_>>,
) -> Result<f64> {
    check_graph(g, p)?;
    let rates = p.rate_table();
    let n = g.n_nodes();
    let log_eta = p.eta.ln();
    let mut edge_term = 0.0;
    let mut mutual = 0usize;
    for (i, j) in g.edges() {
        if !crate::mask::is_training(mask, i, j) {
            continue;
        }
        edge_term += rates.rate(i, j).ln();
        if i < j && g.has_edge(j, i) {
            mutual += 1;
        }
    }
    let mut log_z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if !crate::mask::is_training(mask, i, j) {
                continue;
            }
            log_z += log_normalizer(rates.rate(i, j), rates.rate(j, i), p.eta);
        }
    }
    Ok(edge_term + mutual as f64 * log_eta - log_z)
}

/// `ln Z` computed without forming `Z` when it would overflow.
#[inline]
pub(crate) fn log_normalizer(l_ij: f64, l_ji: f64, eta: f64) -> f64 {
    let s = l_ij + l_ji + eta * l_ij * l_ji;
    if s.is_finite() {
        s.ln_1p()
    } else {
        let logs = [0.0, l_ij.ln(), l_ji.ln(), eta.ln() + l_ij.ln() + l_ji.ln()];
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
    }
}

/// Derivative of the log-likelihood with respect to `η`.
pub fn eta_gradient(g: &DirectedGraph, p: &ModelParams, mask: Option<HeldOut<'_>>) -> Result<f64> {
    check_graph(g, p)?;
    let rates = p.rate_table();
    let n = g.n_nodes();
    let mut mutual = 0usize;
    let mut pressure = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if !crate::mask::is_training(mask, i, j) {
                continue;
            }
            if g.has_edge(i, j) && g.has_edge(j, i) {
                mutual += 1;
            }
            let (a, b) = (rates.rate(i, j), rates.rate(j, i));
            pressure += a * b / (a + b + p.eta * a * b + 1.0);
        }
    }
    Ok(mutual as f64 / p.eta - pressure)
}
