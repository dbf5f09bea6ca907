//! Planted-structure benchmark networks.
//!
//! Memberships start as equal-size hard blocks; a fraction of nodes is then
//! given mixed memberships drawn from a symmetric Dirichlet. The affinity is
//! assortative with diagonal `p1 = <k> K / N` and off-diagonal `p2 = ratio·p1`.
//! All rates are finally multiplied by a constant `ζ` chosen so that the
//! expected number of edges equals `N <k> / 2`, and every dyad is drawn from
//! its exact joint distribution.

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{reciprocity, DirectedGraph};
use crate::model::{DyadDistribution, DyadState, ModelParams};
use crate::rng::{substream, Stream};

/// Relative bracket width at which the `ζ` bisection stops.
const ZETA_RTOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n_nodes: usize,
    pub k: usize,
    /// Target average total degree `2M/N`.
    pub avg_degree: f64,
    pub eta: f64,
    #[serde(default = "defaults::overlap_fraction")]
    pub overlap_fraction: f64,
    #[serde(default = "defaults::dirichlet_alpha")]
    pub dirichlet_alpha: f64,
    /// Off-diagonal to diagonal affinity ratio.
    #[serde(default = "defaults::assortativity_ratio")]
    pub assortativity_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn overlap_fraction() -> f64 {
        0.2
    }
    pub fn dirichlet_alpha() -> f64 {
        0.1
    }
    pub fn assortativity_ratio() -> f64 {
        0.1
    }
}

impl BenchmarkConfig {
    pub fn new(n_nodes: usize, k: usize, avg_degree: f64, eta: f64, seed: u64) -> Self {
        Self {
            n_nodes,
            k,
            avg_degree,
            eta,
            overlap_fraction: defaults::overlap_fraction(),
            dirichlet_alpha: defaults::dirichlet_alpha(),
            assortativity_ratio: defaults::assortativity_ratio(),
            seed,
        }
    }

    /// `N <k> / 2`.
    pub fn expected_edges(&self) -> f64 {
        self.n_nodes as f64 * self.avg_degree / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.n_nodes));
        }
        if self.k < 1 || self.k > self.n_nodes {
            return bad(format!("K must be in 1..={}, got {}", self.n_nodes, self.k));
        }
        if !(self.avg_degree > 0.0 && self.avg_degree.is_finite()) {
            return bad(format!("average degree must be > 0, got {}", self.avg_degree));
        }
        let pairs = (self.n_nodes * (self.n_nodes - 1)) as f64;
        if self.expected_edges() >= pairs {
            return bad(format!(
                "expected edges {} must be below the {} ordered pairs",
                self.expected_edges(),
                pairs
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return bad(format!("overlap fraction must be in [0, 1], got {}", self.overlap_fraction));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return bad(format!("Dirichlet alpha must be > 0, got {}", self.dirichlet_alpha));
        }
        if !(self.assortativity_ratio > 0.0 && self.assortativity_ratio <= 1.0) {
            return bad(format!(
                "assortativity ratio must be in (0, 1], got {}",
                self.assortativity_ratio
            ));
        }
        Ok(())
    }
}

/// A sampled benchmark network with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub graph: DirectedGraph,
    /// Ground truth with `ζ` already folded into `w`.
    pub true_params: ModelParams,
    pub zeta: f64,
    pub expected_edges: f64,
}

impl PlantedInstance {
    pub fn manifest(&self, config: &BenchmarkConfig) -> InstanceManifest {
        InstanceManifest {
            config: config.clone(),
            zeta: self.zeta,
            expected_edges: self.expected_edges,
            realized_edges: self.graph.n_edges(),
            realized_reciprocity: reciprocity(&self.graph),
        }
    }
}

/// Summary written next to a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceManifest {
    pub config: BenchmarkConfig,
    pub zeta: f64,
    pub expected_edges: f64,
    pub realized_edges: usize,
    pub realized_reciprocity: f64,
}

/// Block index of each node: contiguous blocks, the first `N mod K` blocks
/// one node larger.
pub fn block_assignment(n_nodes: usize, k: usize) -> Vec<usize> {
    let base = n_nodes / k;
    let extra = n_nodes % k;
    let mut out = Vec::with_capacity(n_nodes);
    for b in 0..k {
        let size = base + usize::from(b < extra);
        out.extend(std::iter::repeat_n(b, size));
    }
    out
}

/// Planted memberships and affinity before sparsity rescaling (`u = v`).
pub fn synthesize_params<R: Rng + ?Sized>(config: &BenchmarkConfig, rng: &mut R) -> Result<ModelParams> {
    config.validate()?;
    let (n, k) = (config.n_nodes, config.k);
    let blocks = block_assignment(n, k);
    let mut u = Array2::zeros((n, k));
    for (i, &b) in blocks.iter().enumerate() {
        u[[i, b]] = 1.0;
    }

    let n_overlap = (config.overlap_fraction * n as f64).round() as usize;
    if n_overlap > 0 {
        let gamma = Gamma::new(config.dirichlet_alpha, 1.0)
            .map_err(|e| Error::InvalidArgument(format!("Dirichlet alpha: {e}")))?;
        let mut chosen = sample_indices(rng, n, n_overlap).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            let row = loop {
                let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
                let total: f64 = draws.iter().sum();
                // tiny alphas can underflow every component to zero
                if total > 0.0 && total.is_finite() {
                    break draws.into_iter().map(|x| x / total).collect::<Vec<_>>();
                }
            };
            for (c, x) in row.into_iter().enumerate() {
                u[[i, c]] = x;
            }
        }
    }

    let p1 = config.avg_degree * k as f64 / n as f64;
    let p2 = config.assortativity_ratio * p1;
    let w = Array2::from_shape_fn((k, k), |(a, b)| if a == b { p1 } else { p2 });
    ModelParams::new(u.clone(), u, w, config.eta)
}

/// Unordered rate pairs `(λ_ij, λ_ji)` for `i < j`.
fn rate_pairs(params: &ModelParams) -> Vec<(f64, f64)> {
    let n = params.n_nodes();
    let rates = params.rate_table();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((rates.rate(i, j), rates.rate(j, i)));
        }
    }
    out
}

fn expected_edges_of(pairs: &[(f64, f64)], eta: f64, zeta: f64) -> f64 {
    pairs
        .iter()
        .map(|&(x, y)| {
            let (a, b) = (zeta * x, zeta * y);
            let joint = eta * a * b;
            let z = 1.0 + a + b + joint;
            if z.is_finite() {
                (a + b + 2.0 * joint) / z
            } else {
                let d = DyadDistribution::from_rates(a, b, eta);
                d.marginal_ij() + d.marginal_ji()
            }
        })
        .sum()
}

/// Expected number of edges when every rate is multiplied by `zeta`.
pub fn expected_edges(params: &ModelParams, zeta: f64) -> f64 {
    expected_edges_of(&rate_pairs(params), params.eta, zeta)
}

/// Finds `ζ > 0` whose rescaled rates have `target_edges` expected edges.
///
/// The expected count is strictly increasing in `ζ`; the root is bracketed by
/// geometric growth or shrinkage from `ζ = 1` and then bisected.
pub fn solve_zeta(params: &ModelParams, target_edges: f64) -> Result<f64> {
    let n = params.n_nodes();
    let pairs_total = (n * n.saturating_sub(1)) as f64;
    if !(target_edges > 0.0 && target_edges < pairs_total) {
        return Err(Error::InvalidArgument(format!(
            "target {target_edges} must lie in (0, {pairs_total})"
        )));
    }
    let pairs = rate_pairs(params);
    if pairs.iter().all(|&(a, b)| a == 0.0 && b == 0.0) {
        return Err(Error::UnreachableTarget(target_edges));
    }
    let eta = params.eta;
    let f = |z: f64| expected_edges_of(&pairs, eta, z);

    let (mut lo, mut hi) = (1.0, 1.0);
    if f(1.0) < target_edges {
        while f(hi) < target_edges {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() || hi > 1e300 {
                return Err(Error::UnreachableTarget(target_edges));
            }
        }
    } else {
        while f(lo) >= target_edges {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::UnreachableTarget(target_edges));
            }
        }
    }
    while hi - lo > ZETA_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target_edges {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let zeta = 0.5 * (lo + hi);
    log::debug!("zeta {zeta:.6e}: expected edges {:.6}", f(zeta));
    Ok(zeta)
}

/// One joint draw for a dyad by inverse CDF over the states 00, 01, 10, 11.
pub fn sample_dyad<R: Rng + ?Sized>(dist: &DyadDistribution, rng: &mut R) -> DyadState {
    dist.state_at(rng.random::<f64>())
}

/// Samples every dyad independently from its joint distribution.
///
/// Row `i` (dyads `{i, j}`, `j > i`) draws from its own stream keyed by
/// `(seed, i)`, so the result does not depend on thread scheduling.
pub fn sample_graph(params: &ModelParams, seed: u64) -> DirectedGraph {
    let n = params.n_nodes();
    let rates = params.rate_table();
    let eta = params.eta;
    let rows: Vec<Vec<(usize, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Stream::DyadRow, i as u64);
            let mut edges = Vec::new();
            for j in i + 1..n {
                let dist = DyadDistribution::from_rates(rates.rate(i, j), rates.rate(j, i), eta);
                let (a_ij, a_ji) = sample_dyad(&dist, &mut rng).entries();
                if a_ij {
                    edges.push((i, j));
                }
                if a_ji {
                    edges.push((j, i));
                }
            }
            edges
        })
        .collect();
    let mut g = DirectedGraph::from_edges(n, rows.into_iter().flatten()).expect("sampled edges are valid");
    if let Some(labels) = &params.node_labels {
        g = g.with_labels(labels.clone()).expect("label count matches");
    }
    g
}

/// Full benchmark: planted parameters, `ζ` for `N <k> / 2` expected edges,
/// `ζ` folded into `w`, then one sampled network.
pub fn generate_benchmark(config: &BenchmarkConfig) -> Result<PlantedInstance> {
    let mut rng = substream(config.seed, Stream::Membership, 0);
    let raw = synthesize_params(config, &mut rng)?;
    let target = config.expected_edges();
    let zeta = solve_zeta(&raw, target)?;
    let true_params = raw.scale_rates(zeta);
    let graph = sample_graph(&true_params, config.seed);
    Ok(PlantedInstance {
        graph,
        true_params,
        zeta,
        expected_edges: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn homogeneous(n: usize, lambda: f64, eta: f64) -> ModelParams {
        ModelParams::new(
            Array2::ones((n, 1)),
            Array2::ones((n, 1)),
            Array2::from_elem((1, 1), lambda),
            eta,
        )
        .unwrap()
    }

    #[test]
    fn unmixed_partition_has_equal_blocks() {
        let mut cfg = BenchmarkConfig::new(10, 2, 2.0, 1.0, 0);
        cfg.overlap_fraction = 0.0;
        let p = synthesize_params(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for row in p.u.rows() {
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(row.sum(), 1.0);
        }
        assert_eq!(p.u.column(0).sum(), 5.0);
        assert_eq!(p.u.column(1).sum(), 5.0);
        assert_eq!(p.u, p.v);
    }

    #[test]
    fn remainder_spreads_over_first_blocks() {
        assert_eq!(block_assignment(7, 3), vec![0, 0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn concentrated_dirichlet_gives_near_uniform_rows() {
        let mut cfg = BenchmarkConfig::new(50, 4, 2.0, 1.0, 0);
        cfg.overlap_fraction = 1.0;
        cfg.dirichlet_alpha = 1e6;
        let p = synthesize_params(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for x in p.u.iter() {
            assert!((x - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn overlap_fraction_sets_mixed_row_count() {
        let cfg = BenchmarkConfig::new(100, 2, 5.0, 1.0, 0);
        let p = synthesize_params(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mixed = p
            .u
            .rows()
            .into_iter()
            .filter(|r| r.iter().all(|&x| x < 1.0))
            .count();
        // a Dirichlet(0.1) row may still be numerically one-hot
        assert!(mixed <= 20 && mixed >= 15, "{mixed}");
        for r in p.u.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affinity_probabilities() {
        let cfg = BenchmarkConfig::new(1000, 2, 20.0, 1.0, 0);
        let p = synthesize_params(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!((p.w[[0, 0]] - 0.04).abs() < 1e-15);
        assert!((p.w[[1, 1]] - 0.04).abs() < 1e-15);
        assert!((p.w[[0, 1]] - 0.004).abs() < 1e-15);
        assert!((p.w[[1, 0]] - 0.004).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(BenchmarkConfig::new(3, 4, 1.0, 1.0, 0).validate().is_err());
        assert!(BenchmarkConfig::new(10, 2, 20.0, 1.0, 0).validate().is_err());
        assert!(BenchmarkConfig::new(10, 2, 2.0, 0.0, 0).validate().is_err());
        assert!(BenchmarkConfig::new(10, 2, 2.0, 1.0, 0).validate().is_ok());
    }

    #[test]
    fn zeta_homogeneous_closed_form() {
        // N(N-1) ζλ/(ζλ+1) = 3 with N = 3, λ = 1 gives ζ = 1
        let p = homogeneous(3, 1.0, 1.0);
        let zeta = solve_zeta(&p, 3.0).unwrap();
        assert!((zeta - 1.0).abs() < 1e-10);
        // general inversion: ζ = t / (λ (N(N-1) - t))
        let p = homogeneous(10, 0.3, 1.0);
        let t = 17.0;
        let exact = t / (0.3 * (90.0 - t));
        assert!((solve_zeta(&p, t).unwrap() - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn zeta_shrinks_with_target() {
        let p = homogeneous(10, 1.0, 5.0);
        let small = solve_zeta(&p, 1e-6).unwrap();
        let smaller = solve_zeta(&p, 1e-9).unwrap();
        assert!(smaller < small && small < 1e-5);
    }

    #[test]
    fn zeta_residual_on_random_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ModelParams::new(
            Array2::from_shape_fn((50, 3), |_| rng.random::<f64>()),
            Array2::from_shape_fn((50, 3), |_| rng.random::<f64>()),
            Array2::from_shape_fn((3, 3), |_| rng.random::<f64>()),
            100.0,
        )
        .unwrap();
        let zeta = solve_zeta(&p, 200.0).unwrap();
        let got = expected_edges(&p, zeta);
        assert!((got - 200.0).abs() / 200.0 < 1e-6);
        // folding into w is the same as scaling every rate
        let folded = p.scale_rates(zeta);
        assert!((expected_edges(&folded, 1.0) - got).abs() < 1e-9 * got);
        for (i, j) in [(0, 1), (7, 3), (49, 0)] {
            let a = folded.lambda(i, j);
            let b = zeta * p.lambda(i, j);
            assert!((a - b).abs() <= 1e-14 * b);
        }
    }

    #[test]
    fn zeta_errors() {
        let zero = homogeneous(5, 0.0, 1.0);
        assert!(matches!(solve_zeta(&zero, 3.0), Err(Error::UnreachableTarget(_))));
        let p = homogeneous(5, 1.0, 1.0);
        assert!(solve_zeta(&p, 0.0).is_err());
        assert!(solve_zeta(&p, 20.0).is_err());
    }

    #[test]
    fn zero_rates_sample_empty_graph() {
        let p = homogeneous(20, 0.0, 3.0);
        for seed in 0..3 {
            assert_eq!(sample_graph(&p, seed).n_edges(), 0);
        }
    }

    #[test]
    fn huge_eta_gives_mutual_edges() {
        // 142 nodes give 10011 dyads
        let p = homogeneous(142, 0.05, 1e6);
        let g = sample_graph(&p, 3);
        assert!(reciprocity(&g) > 0.99);
    }

    #[test]
    fn benchmark_is_deterministic() {
        let cfg = BenchmarkConfig::new(200, 2, 10.0, 50.0, 17);
        let a = generate_benchmark(&cfg).unwrap();
        let b = generate_benchmark(&cfg).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.true_params, b.true_params);
        assert_eq!(a.zeta, b.zeta);
        let c = generate_benchmark(&BenchmarkConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn sampling_is_thread_count_independent() {
        let cfg = BenchmarkConfig::new(150, 2, 8.0, 20.0, 5);
        let inst = generate_benchmark(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let parallel = pool.install(|| sample_graph(&inst.true_params, 5));
        assert_eq!(parallel, inst.graph);
    }
}
