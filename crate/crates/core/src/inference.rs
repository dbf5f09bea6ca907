//! Expectation-maximization for the joint-dyad model.
//!
//! One iteration computes the responsibilities of every observed training
//! edge, then updates `u`, `v`, `w` and `η` in that order. Each block reads
//! the freshest values of the blocks updated before it; the denominators of
//! `u`, `v` and `w` use the incoming `η`, and `η` takes one fixed-point step
//! with the incoming `η` on the right-hand side.
//!
//! Numerators only touch observed edges (O(M K²)). Denominators run over all
//! training dyads; with the `w v` / `u w` row caches each dyad costs O(K),
//! so an iteration is O(M K² + N² K).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::mask::HeldOut;
use crate::model::{dot, ModelParams};
use crate::rng::{substream, Stream};

mod kernel;

use kernel::{mode, Columns, Sweep};

/// Lower bound applied to the `η` update.
pub const ETA_FLOOR: f64 = 1e-12;

/// Slack allowed when checking that the log-likelihood does not decrease.
pub const MONOTONICITY_SLACK: f64 = 1e-8;

/// EM settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Absolute change in log-likelihood below which the fit has converged.
    pub tol: f64,
    /// Iterations between convergence checks.
    pub check_every: usize,
    pub n_restarts: usize,
    pub seed: u64,
    /// Pins `η` (1 gives the independent-dyad model).
    pub eta_fixed: Option<f64>,
    /// Upper end of the uniform initial memberships.
    pub init_scale: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 2,
            max_iter: 1000,
            tol: 1e-4,
            check_every: 10,
            n_restarts: 10,
            seed: 0,
            eta_fixed: None,
            init_scale: 1.0,
        }
    }
}

impl FitConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.check_every < 1 {
            return Err(Error::InvalidArgument("check_every must be at least 1".into()));
        }
        if self.n_restarts < 1 {
            return Err(Error::InvalidArgument("need at least one restart".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "init_scale must be > 0, got {}",
                self.init_scale
            )));
        }
        if let Some(eta) = self.eta_fixed {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidArgument(format!("fixed eta must be > 0, got {eta}")));
            }
        }
        Ok(())
    }
}

/// Outcome of [`fit`]. The JSON form carries everything except the
/// parameters, which are written separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    #[serde(skip)]
    pub params: ModelParams,
    pub final_loglik: f64,
    /// Log-likelihood of the initial parameters followed by one entry per
    /// iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub restart_index: usize,
    pub converged: bool,
    /// Iterations where the log-likelihood fell by more than
    /// [`MONOTONICITY_SLACK`].
    pub monotonicity_violations: usize,
}

/// Variational weights `ρ_ijkq` of the observed training edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    edges: Vec<(usize, usize)>,
    /// K×K block per edge, row-major in `(k, q)`.
    weights: Vec<f64>,
}

impl Responsibilities {
    pub fn n_communities(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `ρ` of the `e`-th stored edge as a row-major K×K block.
    pub fn block(&self, e: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.weights[e * kk..(e + 1) * kk]
    }
}

/// Random starting point: memberships uniform on `(0, init_scale)`, a
/// diagonal-dominant affinity and `η` uniform on `(0.5, 5)`.
pub fn initialize<R: Rng + ?Sized>(
    config: &FitConfig,
    n_nodes: usize,
    rng: &mut R,
) -> Result<ModelParams> {
    config.validate()?;
    let k = config.k;
    let s = config.init_scale;
    let u = ndarray::Array2::from_shape_fn((n_nodes, k), |_| rng.random::<f64>() * s);
    let v = ndarray::Array2::from_shape_fn((n_nodes, k), |_| rng.random::<f64>() * s);
    let w = ndarray::Array2::from_shape_fn((k, k), |(a, b)| {
        let x = rng.random::<f64>() * s;
        if a == b {
            x
        } else {
            0.1 * x
        }
    });
    let eta = rng.random_range(0.5..5.0);
    let eta = config.eta_fixed.unwrap_or(eta);
    ModelParams::new(u, v, w, eta)
}

/// Responsibilities for every training edge.
pub fn e_step(
    g: &DirectedGraph,
    params: &ModelParams,
    mask: Option<HeldOut<'_>>,
) -> Result<Responsibilities> {
    check_dims(g, params)?;
    let k = params.n_communities();
    let theta = Theta::from_params(params);
    let edges = training_edges(g, mask);
    let mut weights = Vec::with_capacity(edges.len() * k * k);
    let mut block = vec![0.0; k * k];
    for &(i, j) in &edges {
        let total = theta.edge_block(i, j, &mut block);
        if !(total > 0.0) {
            return Err(Error::DegenerateEdge { src: i, dst: j });
        }
        weights.extend(block.iter().map(|x| x / total));
    }
    Ok(Responsibilities { k, edges, weights })
}

/// One M-step from precomputed responsibilities, with a free `η`.
pub fn m_step(
    g: &DirectedGraph,
    params: &ModelParams,
    rho: &Responsibilities,
    mask: Option<HeldOut<'_>>,
) -> Result<ModelParams> {
    m_step_with(g, params, rho, mask, None)
}

/// One M-step; `eta_fixed` pins `η` instead of updating it.
pub fn m_step_with(
    g: &DirectedGraph,
    params: &ModelParams,
    rho: &Responsibilities,
    mask: Option<HeldOut<'_>>,
    eta_fixed: Option<f64>,
) -> Result<ModelParams> {
    check_dims(g, params)?;
    if rho.k != params.n_communities() {
        return Err(Error::Dimension(format!(
            "responsibilities have K={}, parameters K={}",
            rho.k,
            params.n_communities()
        )));
    }
    let mut theta = Theta::from_params(params);
    let numerators = Numerators::from_responsibilities(rho, theta.n);
    let train = Training::new(theta.n, mask);
    let mutual = mutual_training_dyads(g, mask);
    let upass = theta.u_pass(train);
    theta.finish_m_step(&numerators, &upass, train, mutual, eta_fixed);
    Ok(theta.into_params(params))
}

/// Fits the model with `config.n_restarts` random starts and keeps the one
/// with the highest final log-likelihood. Held-out dyads never enter any sum.
pub fn fit(
    g: &DirectedGraph,
    config: &FitConfig,
    mask: Option<HeldOut<'_>>,
) -> Result<FitResult> {
    config.validate()?;
    if let Some(m) = mask {
        if m.mask().n_nodes() != g.n_nodes() {
            return Err(Error::Dimension("mask and graph sizes differ".into()));
        }
    }
    let edges = training_edges(g, mask);
    if edges.is_empty() {
        return Err(Error::InvalidArgument("no observed edges to train on".into()));
    }
    let mutual = mutual_training_dyads(g, mask);

    let outcomes: Vec<Result<FitResult>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, Stream::Init, r as u64);
            let init = initialize(config, g.n_nodes(), &mut rng)?;
            let mut result = run_em(&edges, mutual, init, config, mask)?;
            result.restart_index = r;
            log::debug!(
                "restart {r}: loglik {:.6} after {} iterations (converged: {})",
                result.final_loglik,
                result.iterations,
                result.converged
            );
            Ok(result)
        })
        .collect();

    let mut best: Option<FitResult> = None;
    let mut failures = 0;
    for outcome in outcomes {
        match outcome {
            Ok(res) => {
                let better = match &best {
                    None => true,
                    Some(b) => res.final_loglik > b.final_loglik,
                };
                if better {
                    best = Some(res);
                }
            }
            Err(e) => {
                log::warn!("restart failed: {e}");
                failures += 1;
            }
        }
    }
    let mut best = best.ok_or(Error::AllRestartsFailed(failures))?;
    best.params.node_labels = g.labels().map(<[String]>::to_vec);
    Ok(best)
}

/// EM from a given starting point (single restart).
pub fn fit_from(
    g: &DirectedGraph,
    init: ModelParams,
    config: &FitConfig,
    mask: Option<HeldOut<'_>>,
) -> Result<FitResult> {
    config.validate()?;
    check_dims(g, &init)?;
    let edges = training_edges(g, mask);
    let mutual = mutual_training_dyads(g, mask);
    run_em(&edges, mutual, init, config, mask)
}

fn run_em(
    edges: &[(usize, usize)],
    mutual: usize,
    init: ModelParams,
    config: &FitConfig,
    mask: Option<HeldOut<'_>>,
) -> Result<FitResult> {
    let mut theta = Theta::from_params(&init);
    if let Some(eta) = config.eta_fixed {
        theta.eta = eta;
    }
    let train = Training::new(theta.n, mask);
    let mut trace: Vec<f64> = Vec::new();
    let mut violations = 0;
    let mut checkpoint: Option<f64> = None;
    let mut converged = false;
    let mut iter = 0;

    loop {
        // E-step and the first denominator pass both read the current
        // parameters, so together they also give its log-likelihood.
        let numerators = Numerators::from_params(&theta, edges)?;
        let upass = theta.u_pass(train);
        let loglik = numerators.edge_term + mutual as f64 * theta.eta.ln() - upass.log_z;
        if let Some(&prev) = trace.last() {
            if loglik < prev - MONOTONICITY_SLACK {
                violations += 1;
                log::warn!(
                    "log-likelihood decreased by {:.3e} at iteration {iter}",
                    prev - loglik
                );
            }
        }
        trace.push(loglik);

        if iter % config.check_every == 0 {
            if let Some(prev) = checkpoint {
                if (loglik - prev).abs() < config.tol {
                    converged = true;
                    break;
                }
            }
            checkpoint = Some(loglik);
        }
        if iter == config.max_iter {
            break;
        }

        theta.finish_m_step(&numerators, &upass, train, mutual, config.eta_fixed);
        iter += 1;
    }

    let final_loglik = *trace.last().expect("trace has the initial entry");
    Ok(FitResult {
        params: theta.into_params(&init),
        final_loglik,
        loglik_trace: trace,
        iterations: iter,
        restart_index: 0,
        converged,
        monotonicity_violations: violations,
    })
}

fn check_dims(g: &DirectedGraph, p: &ModelParams) -> Result<()> {
    if g.n_nodes() != p.n_nodes() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, parameters {}",
            g.n_nodes(),
            p.n_nodes()
        )));
    }
    Ok(())
}

fn training_edges(g: &DirectedGraph, mask: Option<HeldOut<'_>>) -> Vec<(usize, usize)> {
    g.edges()
        .filter(|&(i, j)| crate::mask::is_training(mask, i, j))
        .collect()
}

fn mutual_training_dyads(g: &DirectedGraph, mask: Option<HeldOut<'_>>) -> usize {
    g.edges()
        .filter(|&(i, j)| i < j && g.has_edge(j, i) && crate::mask::is_training(mask, i, j))
        .count()
}

/// Which dyads take part in the sums.
#[derive(Clone, Copy)]
struct Training<'a> {
    n: usize,
    held: Option<HeldOut<'a>>,
}

impl<'a> Training<'a> {
    fn new(n: usize, held: Option<HeldOut<'a>>) -> Self {
        Self { n, held }
    }

    fn sweep<const MODE: u8>(&self, x: &Columns, y: &Columns, eta: f64) -> Sweep {
        let (n, held) = (self.n, self.held);
        match x.k() {
            1 => kernel::sweep::<1, MODE>(n, x, y, eta, held),
            2 => kernel::sweep::<2, MODE>(n, x, y, eta, held),
            3 => kernel::sweep::<3, MODE>(n, x, y, eta, held),
            4 => kernel::sweep::<4, MODE>(n, x, y, eta, held),
            _ => kernel::sweep::<0, MODE>(n, x, y, eta, held),
        }
    }
}

/// Flat row-major working copy of the parameters.
struct Theta {
    n: usize,
    k: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    eta: f64,
}

/// Sums over observed edges of the responsibilities, per block.
struct Numerators {
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    /// `Σ ln λ_ij` over the training edges.
    edge_term: f64,
}

struct UPass {
    den: Vec<f64>,
    /// `Σ ln Z` over training dyads.
    log_z: f64,
}

impl Numerators {
    fn zeros(n: usize, k: usize) -> Self {
        Self {
            u: vec![0.0; n * k],
            v: vec![0.0; n * k],
            w: vec![0.0; k * k],
            edge_term: 0.0,
        }
    }

    fn from_params(theta: &Theta, edges: &[(usize, usize)]) -> Result<Self> {
        let k = theta.k;
        let mut out = Self::zeros(theta.n, k);
        let mut block = vec![0.0; k * k];
        for &(i, j) in edges {
            let total = theta.edge_block(i, j, &mut block);
            if !(total > 0.0) {
                return Err(Error::DegenerateEdge { src: i, dst: j });
            }
            let inv = 1.0 / total;
            out.accumulate(i, j, k, block.iter().map(|x| x * inv));
            out.edge_term += total.ln();
        }
        Ok(out)
    }

    fn from_responsibilities(rho: &Responsibilities, n: usize) -> Self {
        let k = rho.k;
        let mut out = Self::zeros(n, k);
        for (e, &(i, j)) in rho.edges.iter().enumerate() {
            out.accumulate(i, j, k, rho.block(e).iter().copied());
        }
        out
    }

    #[inline]
    fn accumulate(&mut self, i: usize, j: usize, k: usize, block: impl Iterator<Item = f64>) {
        for (idx, r) in block.enumerate() {
            let (a, b) = (idx / k, idx % k);
            self.u[i * k + a] += r;
            self.v[j * k + b] += r;
            self.w[idx] += r;
        }
    }
}

impl Theta {
    fn from_params(p: &ModelParams) -> Self {
        let (n, k) = p.u.dim();
        Self {
            n,
            k,
            u: p.u.iter().copied().collect(),
            v: p.v.iter().copied().collect(),
            w: p.w.iter().copied().collect(),
            eta: p.eta,
        }
    }

    fn into_params(self, template: &ModelParams) -> ModelParams {
        let (n, k) = (self.n, self.k);
        ModelParams {
            u: ndarray::Array2::from_shape_vec((n, k), self.u).expect("shape"),
            v: ndarray::Array2::from_shape_vec((n, k), self.v).expect("shape"),
            w: ndarray::Array2::from_shape_vec((k, k), self.w).expect("shape"),
            eta: self.eta,
            node_labels: template.node_labels.clone(),
        }
    }

    /// Fills `block[k*K + q] = u_ik v_jq w_kq` and returns its sum `λ_ij`.
    #[inline]
    fn edge_block(&self, i: usize, j: usize, block: &mut [f64]) -> f64 {
        let k = self.k;
        let ui = &self.u[i * k..(i + 1) * k];
        let vj = &self.v[j * k..(j + 1) * k];
        let mut total = 0.0;
        for a in 0..k {
            for b in 0..k {
                let x = ui[a] * vj[b] * self.w[a * k + b];
                block[a * k + b] = x;
                total += x;
            }
        }
        total
    }

    /// `wv_jk = Σ_q w_kq v_jq`, so that `λ_ij = u_i · wv_j`.
    fn wv(&self) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; self.n * k];
        for j in 0..self.n {
            for a in 0..k {
                out[j * k + a] = dot(&self.w[a * k..(a + 1) * k], &self.v[j * k..(j + 1) * k]);
            }
        }
        out
    }

    /// `uw_iq = Σ_k u_ik w_kq`, so that `λ_ij = uw_i · v_j`.
    fn uw(&self) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; self.n * k];
        for i in 0..self.n {
            for a in 0..k {
                let x = self.u[i * k + a];
                for b in 0..k {
                    out[i * k + b] += x * self.w[a * k + b];
                }
            }
        }
        out
    }

    fn columns(&self, rows: &[f64]) -> Columns {
        Columns::from_rows(rows, self.n, self.k)
    }

    /// Denominators of the `u` update together with `Σ ln Z`.
    ///
    /// For dyad `{i, j}` the weight of `i` is `c_ij = (1 + η λ_ji) / Z`; the
    /// `u_i` denominator collects `c_ij · wv_j`.
    fn u_pass(&self, train: Training<'_>) -> UPass {
        let sweep = train.sweep::<{ mode::SOURCE_LOG }>(&self.columns(&self.u), &self.columns(&self.wv()), self.eta);
        UPass {
            den: sweep.out.to_rows(self.n),
            log_z: sweep.log_z,
        }
    }

    /// Completes an M-step after the `u` pass: updates `u`, `v`, `w`, then `η`.
    fn finish_m_step(
        &mut self,
        num: &Numerators,
        upass: &UPass,
        train: Training<'_>,
        mutual: usize,
        eta_fixed: Option<f64>,
    ) {
        divide_into(&mut self.u, &num.u, &upass.den, "u");
        let den_v = self.v_pass(train);
        divide_into(&mut self.v, &num.v, &den_v, "v");
        let den_w = self.w_pass(train);
        divide_into(&mut self.w, &num.w, &den_w, "w");
        self.eta = match eta_fixed {
            Some(eta) => eta,
            None => self.eta_step(train, mutual),
        };
    }

    /// Denominators of the `v` update: the `v_j` denominator collects
    /// `c_ij · uw_i` over dyads `{i, j}`.
    fn v_pass(&self, train: Training<'_>) -> Vec<f64> {
        let sweep = train.sweep::<{ mode::TARGET }>(&self.columns(&self.uw()), &self.columns(&self.v), self.eta);
        sweep.out.to_rows(self.n)
    }

    /// Denominators of the `w` update: `Σ_ij u_ik v_jq c_ij`.
    fn w_pass(&self, train: Training<'_>) -> Vec<f64> {
        let k = self.k;
        // t_iq = Σ_j c_ij v_jq
        let sweep = train.sweep::<{ mode::SOURCE }>(&self.columns(&self.uw()), &self.columns(&self.v), self.eta);
        let t = sweep.out.to_rows(self.n);
        let mut den = vec![0.0; k * k];
        for i in 0..self.n {
            for a in 0..k {
                let x = self.u[i * k + a];
                for b in 0..k {
                    den[a * k + b] += x * t[i * k + b];
                }
            }
        }
        den
    }

    /// One fixed-point step `η ← Σ A_ij A_ji / Σ λ_ij λ_ji / Z`.
    fn eta_step(&self, train: Training<'_>, mutual: usize) -> f64 {
        if mutual == 0 {
            return ETA_FLOOR;
        }
        let sweep = train.sweep::<{ mode::PRESSURE }>(&self.columns(&self.u), &self.columns(&self.wv()), self.eta);
        if sweep.pressure > 0.0 {
            (mutual as f64 / sweep.pressure).max(ETA_FLOOR)
        } else {
            log::warn!("no dyad supports both directions; eta left at {}", self.eta);
            self.eta
        }
    }
}

fn divide_into(target: &mut [f64], num: &[f64], den: &[f64], block: &str) {
    let mut detached = 0;
    for ((t, &nu), &de) in target.iter_mut().zip(num).zip(den) {
        if de > 0.0 {
            *t = nu / de;
        } else {
            *t = 0.0;
            detached += 1;
        }
    }
    if detached > 0 {
        log::debug!("{detached} entries of {block} have zero denominator; set to 0");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::DyadMask;
    use crate::model::log_likelihood;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, p: f64, seed: u64) -> DirectedGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        DirectedGraph::from_edges(n, edges).unwrap()
    }

    fn random_params(n: usize, k: usize, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = FitConfig {
            k,
            ..FitConfig::default()
        };
        initialize(&cfg, n, &mut rng).unwrap()
    }

    /// Direct transcription of the update formulas with O(N² K²) loops.
    fn reference_m_step(g: &DirectedGraph, p: &ModelParams) -> ModelParams {
        let n = p.n_nodes();
        let k = p.n_communities();
        let a = |i: usize, j: usize| g.entry(i, j) as f64;
        let rho = |p: &ModelParams, i: usize, j: usize, c: usize, q: usize| {
            p.u[[i, c]] * p.v[[j, q]] * p.w[[c, q]] / p.lambda(i, j)
        };
        let z = |p: &ModelParams, i: usize, j: usize| {
            let (x, y) = (p.lambda(i, j), p.lambda(j, i));
            x + y + p.eta * x * y + 1.0
        };
        let old = p.clone();
        let mut cur = p.clone();
        for i in 0..n {
            for c in 0..k {
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    if a(i, j) > 0.0 {
                        for q in 0..k {
                            num += rho(&old, i, j, c, q);
                        }
                    }
                    let s: f64 = (0..k).map(|q| old.v[[j, q]] * old.w[[c, q]]).sum();
                    den += s * (1.0 + old.eta * old.lambda(j, i)) / z(&old, i, j);
                }
                cur.u[[i, c]] = num / den;
            }
        }
        let after_u = cur.clone();
        for i in 0..n {
            for c in 0..k {
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    if a(j, i) > 0.0 {
                        for q in 0..k {
                            num += rho(&old, j, i, q, c);
                        }
                    }
                    let s: f64 = (0..k).map(|q| after_u.u[[j, q]] * after_u.w[[q, c]]).sum();
                    den += s * (1.0 + after_u.eta * after_u.lambda(i, j)) / z(&after_u, i, j);
                }
                cur.v[[i, c]] = num / den;
            }
        }
        let after_v = cur.clone();
        for c in 0..k {
            for q in 0..k {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        if a(i, j) > 0.0 {
                            num += rho(&old, i, j, c, q);
                        }
                        den += after_v.u[[i, c]] * after_v.v[[j, q]]
                            * (1.0 + after_v.eta * after_v.lambda(j, i))
                            / z(&after_v, i, j);
                    }
                }
                cur.w[[c, q]] = num / den;
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                num += a(i, j) * a(j, i);
                den += cur.lambda(i, j) * cur.lambda(j, i) / z(&cur, i, j);
            }
        }
        cur.eta = num / den;
        cur
    }

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn uniform_parameters_give_uniform_responsibilities() {
        let g = random_graph(8, 0.3, 1);
        let k = 3;
        let p = ModelParams::new(
            Array2::from_elem((8, k), 0.4),
            Array2::from_elem((8, k), 0.7),
            Array2::ones((k, k)),
            2.0,
        )
        .unwrap();
        let rho = e_step(&g, &p, None).unwrap();
        assert_eq!(rho.len(), g.n_edges());
        for e in 0..rho.len() {
            for x in rho.block(e) {
                assert!((x - 1.0 / 9.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_community_responsibility_is_one() {
        let g = random_graph(6, 0.4, 2);
        let rho = e_step(&g, &random_params(6, 1, 3), None).unwrap();
        assert!(rho.weights.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn responsibilities_match_direct_normalization() {
        let g = random_graph(7, 0.4, 5);
        let p = random_params(7, 2, 6);
        let rho = e_step(&g, &p, None).unwrap();
        for (e, &(i, j)) in rho.edges().iter().enumerate() {
            let mut cells = [0.0; 4];
            for c in 0..2 {
                for q in 0..2 {
                    cells[c * 2 + q] = p.u[[i, c]] * p.v[[j, q]] * p.w[[c, q]];
                }
            }
            let total: f64 = cells.iter().sum();
            let block = rho.block(e);
            let sum: f64 = block.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for (x, y) in block.iter().zip(cells) {
                assert!((x - y / total).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn e_step_reports_degenerate_edge() {
        let g = DirectedGraph::from_edges(2, [(0, 1)]).unwrap();
        let p = ModelParams::new(
            Array2::zeros((2, 1)),
            Array2::ones((2, 1)),
            Array2::ones((1, 1)),
            1.0,
        )
        .unwrap();
        assert!(matches!(
            e_step(&g, &p, None),
            Err(Error::DegenerateEdge { src: 0, dst: 1 })
        ));
    }

    #[test]
    fn m_step_matches_direct_formulas() {
        let g = random_graph(6, 0.4, 11);
        assert!(g.mutual_dyads() > 0);
        let p = random_params(6, 2, 12);
        let rho = e_step(&g, &p, None).unwrap();
        let fast = m_step(&g, &p, &rho, None).unwrap();
        let slow = reference_m_step(&g, &p);
        assert_close(&fast.u, &slow.u, 1e-10);
        assert_close(&fast.v, &slow.v, 1e-10);
        assert_close(&fast.w, &slow.w, 1e-10);
        assert!((fast.eta - slow.eta).abs() < 1e-10 * slow.eta);
    }

    #[test]
    fn eta_clamps_to_floor_without_mutual_edges() {
        let g = DirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let p = random_params(4, 2, 1);
        let rho = e_step(&g, &p, None).unwrap();
        assert_eq!(m_step(&g, &p, &rho, None).unwrap().eta, ETA_FLOOR);
    }

    #[test]
    fn symmetric_complete_graph_keeps_exchange_symmetry() {
        let n = 5;
        let edges = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
        let g = DirectedGraph::from_edges(n, edges).unwrap();
        let mut p = random_params(n, 1, 4);
        p.w[[0, 0]] = 1.0;
        let rho = e_step(&g, &p, None).unwrap();
        let next = m_step(&g, &p, &rho, None).unwrap();
        // after one step every node sees the same neighbourhood, so the
        // spread of u must shrink
        let spread = |m: &Array2<f64>| {
            let col: Vec<f64> = m.column(0).to_vec();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            col.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max)
        };
        assert!(spread(&next.u) < spread(&p.u));
    }

    #[test]
    fn fused_likelihood_matches_model_likelihood() {
        let g = random_graph(12, 0.25, 21);
        let p = random_params(12, 3, 22);
        let theta = Theta::from_params(&p);
        let edges = training_edges(&g, None);
        let num = Numerators::from_params(&theta, &edges).unwrap();
        let up = theta.u_pass(Training::new(12, None));
        let fused = num.edge_term + g.mutual_dyads() as f64 * p.eta.ln() - up.log_z;
        let direct = log_likelihood(&g, &p, None).unwrap();
        assert!((fused - direct).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn masked_pass_skips_held_out_dyads() {
        let g = random_graph(10, 0.3, 31);
        let p = random_params(10, 2, 32);
        let mask = DyadMask::random(10, 5, 33).unwrap();
        let held = mask.hold_out(2);
        let theta = Theta::from_params(&p);
        let edges = training_edges(&g, Some(held));
        let num = Numerators::from_params(&theta, &edges).unwrap();
        let up = theta.u_pass(Training::new(10, Some(held)));
        let fused = num.edge_term
            + mutual_training_dyads(&g, Some(held)) as f64 * p.eta.ln()
            - up.log_z;
        let direct = log_likelihood(&g, &p, Some(held)).unwrap();
        assert!((fused - direct).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn initialize_is_deterministic() {
        let cfg = FitConfig::with_k(2);
        let a = initialize(&cfg, 4, &mut substream(5, Stream::Init, 0)).unwrap();
        let b = initialize(&cfg, 4, &mut substream(5, Stream::Init, 0)).unwrap();
        assert_eq!(a, b);
        for ((x, y), (i, j)) in a.w.iter().zip(b.w.iter()).zip([(0, 0), (0, 1), (1, 0), (1, 1)]) {
            assert_eq!(x.to_bits(), y.to_bits());
            if i != j {
                assert!(*x < 0.1);
            }
        }
        assert!((0.5..5.0).contains(&a.eta));
    }

    #[test]
    fn initialize_rejects_zero_scale() {
        let cfg = FitConfig {
            init_scale: 0.0,
            ..FitConfig::default()
        };
        assert!(initialize(&cfg, 4, &mut substream(1, Stream::Init, 0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::with_k(0).validate().is_err());
        assert!(FitConfig {
            tol: 0.0,
            ..FitConfig::default()
        }
        .validate()
        .is_err());
        assert!(FitConfig {
            n_restarts: 0,
            ..FitConfig::default()
        }
        .validate()
        .is_err());
        assert!(FitConfig {
            eta_fixed: Some(-1.0),
            ..FitConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn fit_on_small_graph_is_monotone() {
        let g = random_graph(30, 0.15, 41);
        let cfg = FitConfig {
            k: 2,
            n_restarts: 3,
            seed: 1,
            ..FitConfig::default()
        };
        let res = fit(&g, &cfg, None).unwrap();
        assert_eq!(res.monotonicity_violations, 0);
        for w in res.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - MONOTONICITY_SLACK);
        }
        let direct = log_likelihood(&g, &res.params, None).unwrap();
        assert!((direct - res.final_loglik).abs() < 1e-9 * direct.abs());
    }

    #[test]
    fn single_community_fit_is_monotone() {
        let g = random_graph(25, 0.2, 42);
        let cfg = FitConfig {
            k: 1,
            n_restarts: 2,
            ..FitConfig::default()
        };
        let res = fit(&g, &cfg, None).unwrap();
        assert_eq!(res.monotonicity_violations, 0);
        assert_eq!(res.params.n_communities(), 1);
    }

    #[test]
    fn fit_rejects_graph_without_edges() {
        let g = DirectedGraph::empty(5);
        assert!(fit(&g, &FitConfig::default(), None).is_err());
    }
}
