use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Subcommand, ValueEnum};
use dyadnet::cv::{k_sweep, run_cv};
use dyadnet::evaluation::{compare_samples, cosine_similarity, overlapping_modularity, Aggregation};
use dyadnet::generator::{generate_benchmark, BenchmarkConfig, InstanceManifest};
use dyadnet::rng::{derive_seed, Stream};
use dyadnet::{
    fit, graph_stats, parse_edge_list, reconstruct, sample_graph, write_edge_list, DirectedGraph, FitConfig,
    ModelParams,
};
use serde::Serialize;
use serde_json::json;

use crate::align::{graph_onto_params, memberships_onto, usage, Usage};
use crate::output::Sink;
use crate::{Cli, Command};

#[derive(Args, Debug, Serialize)]
pub struct GenerateArgs {
    /// Number of nodes
    #[arg(short = 'N', long = "nodes", required_unless_present = "config")]
    pub n_nodes: Option<usize>,
    /// Number of communities
    #[arg(short = 'K', long = "communities", default_value_t = 2)]
    pub k: usize,
    /// Target average total degree
    #[arg(long, default_value_t = 20.0)]
    pub avg_degree: f64,
    /// Pair interaction of the planted model
    #[arg(long, conflicts_with = "eta_list", required_unless_present_any = ["eta_list", "config"])]
    pub eta: Option<f64>,
    /// Sweep over several interaction values
    #[arg(long, value_delimiter = ',')]
    pub eta_list: Option<Vec<f64>>,
    /// Instances per interaction value in sweep mode
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    /// Fraction of nodes with mixed memberships
    #[arg(long, default_value_t = 0.2)]
    pub overlap: f64,
    /// Dirichlet concentration of mixed memberships
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Off-diagonal to diagonal affinity ratio
    #[arg(long, default_value_t = 0.1)]
    pub assortativity: f64,
    /// Benchmark configuration as JSON; flags given explicitly are ignored
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitFlags {
    /// Random restarts; the best final log-likelihood wins
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Convergence threshold on the log-likelihood change
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Iterations between convergence checks
    #[arg(long, default_value_t = 10)]
    pub check_every: usize,
    /// Keep the pair interaction fixed (1 gives independent directions)
    #[arg(long)]
    pub eta_fixed: Option<f64>,
    /// Upper end of the uniform initial memberships
    #[arg(long, default_value_t = 1.0)]
    pub init_scale: f64,
    /// Read each input line as an undirected edge
    #[arg(long)]
    pub undirected: bool,
}

impl FitFlags {
    fn config(&self, k: usize, seed: u64) -> FitConfig {
        FitConfig {
            k,
            max_iter: self.max_iter,
            tol: self.tol,
            check_every: self.check_every,
            n_restarts: self.restarts,
            seed,
            eta_fixed: self.eta_fixed,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// Edge list, one "source target" pair per line
    pub graph: PathBuf,
    /// Number of communities
    #[arg(short = 'K', long = "communities")]
    pub k: usize,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("model").required(true).args(["k", "k_list"])))]
pub struct CvArgs {
    pub graph: PathBuf,
    #[arg(short = 'K', long = "communities")]
    pub k: Option<usize>,
    /// Select K among these by conditional AUC
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    /// Fitted parameters (JSON)
    pub params: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub n_samples: usize,
    /// Observed edge list to compare the samples against
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub undirected: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct ReconstructArgs {
    pub graph: PathBuf,
    pub params: PathBuf,
    /// Export entries whose marginal or conditional score exceeds this
    #[arg(long, default_value_t = dyadnet::reconstruct::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub undirected: bool,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum EvalCommand {
    /// Cosine similarity between true and inferred memberships
    Cs {
        #[arg(long = "true")]
        truth: PathBuf,
        #[arg(long)]
        inferred: PathBuf,
    },
    /// Overlapping modularity of fitted memberships
    Modularity {
        graph: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value_t = AggregationArg::All)]
        aggregation: AggregationArg,
        #[arg(long, value_enum, default_value_t = Membership::U)]
        membership: Membership,
        #[arg(long)]
        undirected: bool,
    },
    /// Nodes, edges, average degree, reciprocity and clustering
    Stats {
        graph: PathBuf,
        #[arg(long)]
        undirected: bool,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationArg {
    Mean,
    Max,
    Product,
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    U,
    V,
}

pub fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let sink = Sink::new(&common.output_dir, common.csv_only)?;
    match &cli.command {
        Command::Generate(a) => generate(a, common.seed, sink),
        Command::Fit(a) => fit_cmd(a, common.seed, sink),
        Command::Cv(a) => cv_cmd(a, common.seed, sink),
        Command::Sample(a) => sample_cmd(a, common.seed, sink),
        Command::Reconstruct(a) => reconstruct_cmd(a, sink),
        Command::Eval(e) => eval_cmd(e, sink),
    }
}

/// 2 for usage and validation problems, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<dyadnet::Error>() {
            return match err {
                dyadnet::Error::Parse { .. }
                | dyadnet::Error::EmptyInput
                | dyadnet::Error::InvalidArgument(_)
                | dyadnet::Error::Dimension(_)
                | dyadnet::Error::Json(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            bail!(usage(format!("{}: no such file", path.display())))
        }
        Err(e) => Err(e).with_context(|| format!("opening {}", path.display())),
    }
}

fn read_graph(path: &Path, undirected: bool) -> Result<DirectedGraph> {
    let parsed = parse_edge_list(open(path)?, !undirected).with_context(|| format!("reading {}", path.display()))?;
    if parsed.duplicates_dropped > 0 {
        log::warn!("{}: dropped {} duplicate edge(s)", path.display(), parsed.duplicates_dropped);
    }
    log::info!(
        "{}: {} nodes, {} edges",
        path.display(),
        parsed.graph.n_nodes(),
        parsed.graph.n_edges()
    );
    Ok(parsed.graph)
}

fn read_params(path: &Path) -> Result<ModelParams> {
    ModelParams::from_json(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn edges_writer(g: &DirectedGraph) -> impl FnOnce(&mut dyn Write) -> Result<()> + '_ {
    move |out| Ok(write_edge_list(g, out)?)
}

fn params_writer(p: &ModelParams) -> impl FnOnce(&mut dyn Write) -> Result<()> + '_ {
    move |out| {
        p.to_json(&mut *out)?;
        writeln!(out)?;
        Ok(())
    }
}

fn generate(a: &GenerateArgs, seed: u64, mut sink: Sink) -> Result<()> {
    let base = match &a.config {
        Some(path) => {
            let cfg: BenchmarkConfig =
                serde_json::from_reader(open(path)?).with_context(|| format!("reading {}", path.display()))?;
            cfg
        }
        None => BenchmarkConfig {
            n_nodes: a.n_nodes.expect("required by clap"),
            k: a.k,
            avg_degree: a.avg_degree,
            eta: a.eta.unwrap_or(1.0),
            overlap_fraction: a.overlap,
            dirichlet_alpha: a.alpha,
            assortativity_ratio: a.assortativity,
            seed,
        },
    };
    let inputs: Vec<PathBuf> = a.config.iter().cloned().collect();

    let Some(etas) = &a.eta_list else {
        let config = BenchmarkConfig {
            eta: a.eta.unwrap_or(base.eta),
            ..base
        };
        config.validate()?;
        let inst = generate_benchmark(&config)?;
        log::info!(
            "sampled {} edges (expected {:.1}), reciprocity {:.3}",
            inst.graph.n_edges(),
            inst.expected_edges,
            dyadnet::reciprocity(&inst.graph)
        );
        sink.primary("graph.edges", edges_writer(&inst.graph))?;
        sink.file("true_params.json", params_writer(&inst.true_params))?;
        let manifest = inst.manifest(&config);
        return sink.finish(
            "generate",
            json!({ "args": a, "instances": [manifest] }),
            json!({ "seed": config.seed }),
            inputs,
        );
    };

    if etas.is_empty() || a.replicas == 0 {
        bail!(usage("sweep needs at least one eta and one replica"));
    }
    #[derive(Serialize)]
    struct Row {
        eta: f64,
        replica: usize,
        seed: u64,
        zeta: f64,
        expected_edges: f64,
        realized_edges: usize,
        realized_reciprocity: f64,
        path: String,
    }
    let mut manifests: Vec<InstanceManifest> = Vec::new();
    let mut rows = Vec::new();
    for (e, &eta) in etas.iter().enumerate() {
        for r in 0..a.replicas {
            let index = (e * a.replicas + r) as u64;
            let config = BenchmarkConfig {
                eta,
                seed: derive_seed(base.seed, Stream::Replica, index),
                ..base.clone()
            };
            config.validate()?;
            let inst = generate_benchmark(&config)?;
            let dir = format!("eta_{eta}/rep_{r}");
            sink.file(&format!("{dir}/graph.edges"), edges_writer(&inst.graph))?;
            sink.file(&format!("{dir}/true_params.json"), params_writer(&inst.true_params))?;
            let m = inst.manifest(&config);
            rows.push(Row {
                eta,
                replica: r,
                seed: config.seed,
                zeta: m.zeta,
                expected_edges: m.expected_edges,
                realized_edges: m.realized_edges,
                realized_reciprocity: m.realized_reciprocity,
                path: dir,
            });
            manifests.push(m);
        }
    }
    log::info!("generated {} instances", rows.len());
    sink.primary("instances.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    })?;
    sink.finish(
        "generate",
        json!({ "args": a, "instances": manifests }),
        json!({ "seed": base.seed, "instance_seeds": rows.iter().map(|r| r.seed).collect::<Vec<_>>() }),
        inputs,
    )
}

fn memberships_csv(p: &ModelParams) -> impl FnOnce(&mut dyn Write) -> Result<()> + '_ {
    move |out| {
        let k = p.n_communities();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node".to_string()];
        header.extend((0..k).map(|c| format!("u_{c}")));
        header.extend((0..k).map(|c| format!("v_{c}")));
        w.write_record(&header)?;
        for i in 0..p.n_nodes() {
            let mut rec = vec![p.node_labels.as_ref().map_or_else(|| i.to_string(), |l| l[i].clone())];
            rec.extend(p.u.row(i).iter().map(|x| x.to_string()));
            rec.extend(p.v.row(i).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fit_cmd(a: &FitArgs, seed: u64, mut sink: Sink) -> Result<()> {
    let config = a.fit.config(a.k, seed);
    config.validate()?;
    let g = read_graph(&a.graph, a.fit.undirected)?;
    let result = fit(&g, &config, None)?;
    log::info!(
        "restart {} won: loglik {:.4}, {} iterations, converged {}, eta {:.4}",
        result.restart_index,
        result.final_loglik,
        result.iterations,
        result.converged,
        result.params.eta
    );
    if !result.converged {
        log::warn!("best restart stopped at max_iter without converging");
    }
    sink.file("params.json", params_writer(&result.params))?;
    sink.json("fit.json", &result)?;
    sink.primary("memberships.csv", memberships_csv(&result.params))?;
    sink.finish(
        "fit",
        json!({ "args": a, "fit_config": config }),
        json!({ "seed": seed }),
        vec![a.graph.clone()],
    )
}

fn cv_cmd(a: &CvArgs, seed: u64, mut sink: Sink) -> Result<()> {
    let g = read_graph(&a.graph, a.fit.undirected)?;
    let base = a.fit.config(a.k.unwrap_or(1), seed);
    match &a.k_list {
        Some(ks) => {
            for &k in ks {
                FitConfig { k, ..base.clone() }.validate()?;
            }
            let sweep = k_sweep(&g, &base, ks, a.folds, seed)?;
            for r in &sweep.reports {
                log::info!(
                    "K={}: conditional AUC {:.4}, marginal AUC {:.4}",
                    r.k,
                    r.mean("conditional", "auc").unwrap_or(f64::NAN),
                    r.mean("marginal", "auc").unwrap_or(f64::NAN)
                );
            }
            log::info!("chosen K = {}", sweep.chosen_k);
            sink.json("cv.json", &sweep)?;
            sink.primary("cv.csv", |out| Ok(sweep.write_csv(out)?))?;
        }
        None => {
            base.validate()?;
            let report = run_cv(&g, &base, a.folds, seed)?;
            log::info!(
                "conditional AUC {:.4}, marginal AUC {:.4}",
                report.mean("conditional", "auc").unwrap_or(f64::NAN),
                report.mean("marginal", "auc").unwrap_or(f64::NAN)
            );
            sink.json("cv.json", &report)?;
            sink.primary("cv.csv", |out| Ok(report.write_csv(out)?))?;
        }
    }
    sink.finish(
        "cv",
        json!({ "args": a, "fit_config": base }),
        json!({ "seed": seed, "fold_seeds": (0..a.folds).map(|f| derive_seed(seed, Stream::Fold, f as u64)).collect::<Vec<_>>() }),
        vec![a.graph.clone()],
    )
}

fn sample_cmd(a: &SampleArgs, seed: u64, mut sink: Sink) -> Result<()> {
    if a.n_samples == 0 {
        bail!(usage("--n-samples must be at least 1"));
    }
    let params = read_params(&a.params)?;
    let seeds: Vec<u64> = (0..a.n_samples)
        .map(|s| derive_seed(seed, Stream::Sample, s as u64))
        .collect();
    let mut inputs = vec![a.params.clone()];
    let mut stats = Vec::new();
    for (s, &sample_seed) in seeds.iter().enumerate() {
        let g = sample_graph(&params, sample_seed);
        stats.push(graph_stats(&g.drop_isolated()));
        sink.file(&format!("samples/sample_{s}.edges"), edges_writer(&g))?;
    }
    match &a.compare {
        Some(path) => {
            inputs.push(path.clone());
            let observed = graph_onto_params(&read_graph(path, a.undirected)?, &params)?;
            let cmp = compare_samples(&observed, &params, a.n_samples, seed)?;
            for row in &cmp.rows {
                log::info!(
                    "{}: observed {:.4}, samples {:.4} ± {:.4}",
                    row.statistic,
                    row.observed,
                    row.sample_mean,
                    row.sample_std
                );
            }
            sink.json("compare.json", &cmp)?;
            sink.primary("compare.csv", |out| Ok(cmp.write_csv(out)?))?;
        }
        None => {
            sink.primary("samples.csv", |out| {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["sample", "N", "M", "avg_degree", "reciprocity", "clustering"])?;
                for (s, st) in stats.iter().enumerate() {
                    w.write_record([
                        s.to_string(),
                        st.n_nodes.to_string(),
                        st.n_edges.to_string(),
                        st.avg_degree.to_string(),
                        st.reciprocity.to_string(),
                        st.clustering.to_string(),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
    }
    sink.finish("sample", json!({ "args": a }), json!({ "seed": seed, "sample_seeds": seeds }), inputs)
}

fn reconstruct_cmd(a: &ReconstructArgs, mut sink: Sink) -> Result<()> {
    let params = read_params(&a.params)?;
    let g = graph_onto_params(&read_graph(&a.graph, a.undirected)?, &params)?;
    let report = reconstruct(&g, &params, a.threshold)?;
    for p in [&report.marginal, &report.conditional] {
        log::info!(
            "{}: log loss {:.4}, L1 loss {:.4}",
            p.score_kind.name(),
            p.log_loss,
            p.l1_loss
        );
    }
    log::info!("joint-label accuracy {:.4}", report.joint.accuracy);
    sink.json("reconstruction.json", &report)?;
    sink.primary("reconstruction.csv", |out| Ok(report.write_export_csv(out)?))?;
    sink.finish(
        "reconstruct",
        json!({ "args": a }),
        json!(null),
        vec![a.graph.clone(), a.params.clone()],
    )
}

fn metric_table(rows: Vec<(String, f64)>) -> impl FnOnce(&mut dyn Write) -> Result<()> {
    move |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        for (name, value) in rows {
            w.write_record([name, value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn eval_cmd(e: &EvalCommand, mut sink: Sink) -> Result<()> {
    match e {
        EvalCommand::Cs { truth, inferred } => {
            let t = read_params(truth)?;
            let f = read_params(inferred)?;
            let (u, v) = memberships_onto(&t, &f)?;
            let report = cosine_similarity(&t.u, &t.v, &u, &v)?;
            log::info!("cosine similarity {:.4}", report.cosine_similarity);
            sink.json("cs.json", &report)?;
            sink.primary("cs.csv", metric_table(vec![("cosine_similarity".into(), report.cosine_similarity)]))?;
            sink.finish("eval cs", json!({ "args": e }), json!(null), vec![truth.clone(), inferred.clone()])
        }
        EvalCommand::Modularity {
            graph,
            params,
            aggregation,
            membership,
            undirected,
        } => {
            let p = read_params(params)?;
            let g = graph_onto_params(&read_graph(graph, *undirected)?, &p)?;
            let m = match membership {
                Membership::U => &p.u,
                Membership::V => &p.v,
            };
            let aggs: Vec<Aggregation> = match aggregation {
                AggregationArg::Mean => vec![Aggregation::Mean],
                AggregationArg::Max => vec![Aggregation::Max],
                AggregationArg::Product => vec![Aggregation::Product],
                AggregationArg::All => Aggregation::ALL.to_vec(),
            };
            let mut values = Vec::new();
            for agg in aggs {
                let q = overlapping_modularity(&g, m, agg)?;
                log::info!("modularity ({}): {q:.4}", agg.name());
                values.push((agg.name().to_string(), q));
            }
            let by_name: serde_json::Map<String, serde_json::Value> =
                values.iter().map(|(n, q)| (n.clone(), json!(q))).collect();
            sink.json("modularity.json", &by_name)?;
            sink.primary("modularity.csv", metric_table(values))?;
            sink.finish("eval modularity", json!({ "args": e }), json!(null), vec![graph.clone(), params.clone()])
        }
        EvalCommand::Stats { graph, undirected } => {
            let g = read_graph(graph, *undirected)?;
            let s = graph_stats(&g);
            sink.json("stats.json", &s)?;
            sink.primary(
                "stats.csv",
                metric_table(vec![
                    ("N".into(), s.n_nodes as f64),
                    ("M".into(), s.n_edges as f64),
                    ("avg_degree".into(), s.avg_degree),
                    ("reciprocity".into(), s.reciprocity),
                    ("clustering".into(), s.clustering),
                ]),
            )?;
            sink.finish("eval stats", json!({ "args": e }), json!(null), vec![graph.clone()])
        }
    }
}
