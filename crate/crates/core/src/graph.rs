//! Sparse directed binary graphs: construction, edge-list I/O and the
//! structural statistics reported for observed and sampled networks.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed, unweighted graph without self-loops or repeated edges.
///
/// Adjacency is stored as sorted out-neighbour lists, so edge iteration order
/// is deterministic (row-major by source, then target).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n_nodes: usize,
    out_adj: Vec<Vec<usize>>,
    n_edges: usize,
    labels: Option<Vec<String>>,
}

impl DirectedGraph {
    /// Builds a graph from ordered pairs. Duplicates collapse; self-loops and
    /// out-of-range indices are rejected.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut out_adj = vec![Vec::new(); n_nodes];
        for (i, j) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {n_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop on node {i}")));
            }
            out_adj[i].push(j);
        }
        let mut n_edges = 0;
        for row in &mut out_adj {
            row.sort_unstable();
            row.dedup();
            n_edges += row.len();
        }
        Ok(Self {
            n_nodes,
            out_adj,
            n_edges,
            labels: None,
        })
    }

    /// Graph with `n_nodes` nodes and no edges.
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            out_adj: vec![Vec::new(); n_nodes],
            n_edges: 0,
            labels: None,
        }
    }

    /// Attaches external node labels (one per node, in index order).
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_nodes {
            return Err(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n_nodes
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// External label of node `i`, or its index when the graph is unlabeled.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    /// Sorted out-neighbours of `i`.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.out_adj[i].binary_search(&j).is_ok()
    }

    /// Adjacency entry as 0/1.
    pub fn entry(&self, i: usize, j: usize) -> u8 {
        u8::from(self.has_edge(i, j))
    }

    /// All ordered edges, grouped by source in increasing order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&j| (i, j)))
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.out_adj.iter().map(Vec::len).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for (_, j) in self.edges() {
            deg[j] += 1;
        }
        deg
    }

    /// Number of unordered pairs connected in both directions.
    pub fn mutual_dyads(&self) -> usize {
        self.edges()
            .filter(|&(i, j)| i < j && self.has_edge(j, i))
            .count()
    }

    /// Subgraph induced by the nodes with `keep[i]`, reindexed densely in
    /// the original order. Labels are carried over.
    pub fn induced_subgraph(&self, keep: &[bool]) -> Self {
        let mut new_index = vec![usize::MAX; self.n_nodes];
        let mut n = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                new_index[i] = n;
                n += 1;
            }
        }
        let edges = self
            .edges()
            .filter(|&(i, j)| keep[i] && keep[j])
            .map(|(i, j)| (new_index[i], new_index[j]));
        let mut sub = Self::from_edges(n, edges).expect("reindexed edges are valid");
        if let Some(labels) = &self.labels {
            sub.labels = Some(
                labels
                    .iter()
                    .zip(keep)
                    .filter(|(_, &k)| k)
                    .map(|(l, _)| l.clone())
                    .collect(),
            );
        }
        sub
    }

    /// Removes nodes with neither in- nor out-edges.
    pub fn drop_isolated(&self) -> Self {
        let mut keep: Vec<bool> = self.out_adj.iter().map(|r| !r.is_empty()).collect();
        for (_, j) in self.edges() {
            keep[j] = true;
        }
        self.induced_subgraph(&keep)
    }

    /// Sorted neighbour sets of the undirected projection.
    fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = self.out_adj.clone();
        for (i, j) in self.edges() {
            nbrs[j].push(i);
        }
        for row in &mut nbrs {
            row.sort_unstable();
            row.dedup();
        }
        nbrs
    }
}

/// Result of reading an edge list.
#[derive(Debug, Clone)]
pub struct ParsedEdgeList {
    pub graph: DirectedGraph,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Reads "source target" lines. Lines starting with `#` and blank lines are
/// skipped. Labels are assigned dense indices in order of first appearance.
/// With `directed == false` each line adds both directions.
pub fn parse_edge_list<R: BufRead>(reader: R, directed: bool) -> Result<ParsedEdgeList> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut pairs = Vec::new();
    let mut self_loops = 0;

    let mut intern = |tok: &str, labels: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(tok) {
            return i;
        }
        let i = labels.len();
        index.insert(tok.to_string(), i);
        labels.push(tok.to_string());
        i
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 2 tokens, found {}", tokens.len()),
            });
        }
        let i = intern(tokens[0], &mut labels);
        let j = intern(tokens[1], &mut labels);
        if i == j {
            self_loops += 1;
            continue;
        }
        pairs.push((i, j));
        if !directed {
            pairs.push((j, i));
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop(s)");
    }
    let raw = pairs.len();
    let graph = DirectedGraph::from_edges(labels.len(), pairs)?.with_labels(labels)?;
    let duplicates_dropped = raw - graph.n_edges();
    Ok(ParsedEdgeList {
        graph,
        self_loops_dropped: self_loops,
        duplicates_dropped,
    })
}

/// Writes one "source target" line per edge using the graph's labels.
pub fn write_edge_list<W: Write>(graph: &DirectedGraph, mut out: W) -> Result<()> {
    for (i, j) in graph.edges() {
        writeln!(out, "{} {}", graph.label(i), graph.label(j))?;
    }
    Ok(())
}

/// Fraction of ordered edges whose reverse edge is also present.
pub fn reciprocity(g: &DirectedGraph) -> f64 {
    if g.n_edges() == 0 {
        return 0.0;
    }
    let reciprocated = g.edges().filter(|&(i, j)| g.has_edge(j, i)).count();
    reciprocated as f64 / g.n_edges() as f64
}

/// Mean local clustering coefficient of the undirected projection (an edge
/// is present when either direction exists). Nodes of degree < 2 count as 0.
pub fn clustering_coefficient(g: &DirectedGraph) -> f64 {
    if g.n_nodes() == 0 {
        return 0.0;
    }
    let nbrs = g.undirected_neighbors();
    let total: f64 = nbrs
        .iter()
        .map(|ni| {
            let d = ni.len();
            if d < 2 {
                return 0.0;
            }
            // each link among neighbours is seen twice
            let mut links = 0usize;
            for &a in ni {
                links += sorted_intersection_len(ni, &nbrs[a]);
            }
            links as f64 / (d * (d - 1)) as f64
        })
        .sum();
    total / g.n_nodes() as f64
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut x, mut y, mut n) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                x += 1;
                y += 1;
            }
        }
    }
    n
}

/// Summary statistics of a directed graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    /// Total degree 2M/N.
    pub avg_degree: f64,
    pub reciprocity: f64,
    pub clustering: f64,
}

pub fn graph_stats(g: &DirectedGraph) -> GraphStats {
    let n = g.n_nodes();
    let m = g.n_edges();
    GraphStats {
        n_nodes: n,
        n_edges: m,
        avg_degree: if n == 0 { 0.0 } else { 2.0 * m as f64 / n as f64 },
        reciprocity: reciprocity(g),
        clustering: clustering_coefficient(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ParsedEdgeList {
        parse_edge_list(text.as_bytes(), true).unwrap()
    }

    #[test]
    fn parses_labels_in_first_appearance_order() {
        let p = parse("a b\nb a\na c");
        assert_eq!(p.graph.n_nodes(), 3);
        assert_eq!(p.graph.n_edges(), 3);
        let edges: Vec<_> = p.graph.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 0)]);
        assert_eq!(p.graph.labels().unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn self_loops_are_dropped_and_counted() {
        let p = parse("a a\na b");
        assert_eq!(p.graph.n_nodes(), 2);
        assert_eq!(p.graph.n_edges(), 1);
        assert_eq!(p.self_loops_dropped, 1);
    }

    #[test]
    fn duplicates_collapse() {
        let p = parse("x y\nx y");
        assert_eq!(p.graph.n_nodes(), 2);
        assert_eq!(p.graph.n_edges(), 1);
        assert_eq!(p.duplicates_dropped, 1);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let p = parse("# header\n\na b\n  # indented comment\nb c\n");
        assert_eq!(p.graph.n_edges(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_edge_list("a b\nb c d\n".as_bytes(), true).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_edge_list("# nothing\n".as_bytes(), true),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn undirected_format_adds_both_directions() {
        let p = parse_edge_list("a b\n".as_bytes(), false).unwrap();
        assert_eq!(p.graph.n_edges(), 2);
        assert_eq!(reciprocity(&p.graph), 1.0);
    }

    #[test]
    fn reciprocity_examples() {
        let g = DirectedGraph::from_edges(4, [(1, 2), (2, 1), (1, 3)]).unwrap();
        assert!((reciprocity(&g) - 2.0 / 3.0).abs() < 1e-15);
        let cycle = DirectedGraph::from_edges(4, [(1, 2), (2, 3), (3, 1)]).unwrap();
        assert_eq!(reciprocity(&cycle), 0.0);
        assert_eq!(reciprocity(&DirectedGraph::empty(3)), 0.0);
    }

    #[test]
    fn stats_of_empty_graph() {
        let s = graph_stats(&DirectedGraph::empty(4));
        assert_eq!(s.n_nodes, 4);
        assert_eq!(s.n_edges, 0);
        assert_eq!(s.avg_degree, 0.0);
        assert_eq!(s.reciprocity, 0.0);
        assert_eq!(s.clustering, 0.0);
    }

    #[test]
    fn stats_of_complete_triangle() {
        let edges = [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)];
        let s = graph_stats(&DirectedGraph::from_edges(3, edges).unwrap());
        assert_eq!(s.n_edges, 6);
        assert_eq!(s.reciprocity, 1.0);
        assert_eq!(s.clustering, 1.0);
        assert_eq!(s.avg_degree, 4.0);
    }

    #[test]
    fn average_degree_counts_both_endpoints() {
        // 19 nodes and 103 edges give 10.84
        let mut edges = Vec::new();
        'outer: for i in 0..19 {
            for j in 0..19 {
                if i != j {
                    edges.push((i, j));
                    if edges.len() == 103 {
                        break 'outer;
                    }
                }
            }
        }
        let s = graph_stats(&DirectedGraph::from_edges(19, edges).unwrap());
        assert!((s.avg_degree - 10.842105263157894).abs() < 1e-12);
        assert_eq!(format!("{:.2}", s.avg_degree), "10.84");
    }

    #[test]
    fn clustering_on_path_and_star() {
        // path a-b-c: centre has two unconnected neighbours
        let path = DirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(clustering_coefficient(&path), 0.0);
        // triangle with one pendant: nodes 0,1 have cc 1, node 2 has 1/3
        let g = DirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
        let expected = (1.0 + 1.0 + 1.0 / 3.0 + 0.0) / 4.0;
        assert!((clustering_coefficient(&g) - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_edges() {
        assert!(DirectedGraph::from_edges(2, [(0, 0)]).is_err());
        assert!(DirectedGraph::from_edges(2, [(0, 2)]).is_err());
    }

    #[test]
    fn drop_isolated_keeps_labels() {
        let g = DirectedGraph::from_edges(4, [(0, 2)])
            .unwrap()
            .with_labels(vec!["a".into(), "b".into(), "c".into(), "d".into()])
            .unwrap();
        let h = g.drop_isolated();
        assert_eq!(h.n_nodes(), 2);
        assert_eq!(h.labels().unwrap(), ["a", "c"]);
        assert!(h.has_edge(0, 1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn edge_set() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
            (2usize..12).prop_flat_map(|n| {
                let pairs = proptest::collection::vec((0..n, 0..n), 0..40)
                    .prop_map(|v| v.into_iter().filter(|(i, j)| i != j).collect());
                (Just(n), pairs)
            })
        }

        proptest! {
            #[test]
            fn write_then_parse_round_trips((n, edges) in edge_set()) {
                let g = DirectedGraph::from_edges(n, edges).unwrap();
                prop_assume!(g.n_edges() > 0);
                let g = g.drop_isolated();
                let labels: Vec<String> = (0..g.n_nodes()).map(|i| format!("n{i}")).collect();
                let g = g.with_labels(labels).unwrap();
                let mut buf = Vec::new();
                write_edge_list(&g, &mut buf).unwrap();
                let back = parse_edge_list(buf.as_slice(), true).unwrap().graph;
                let mut a: Vec<(String, String)> =
                    g.edges().map(|(i, j)| (g.label(i), g.label(j))).collect();
                let mut b: Vec<(String, String)> =
                    back.edges().map(|(i, j)| (back.label(i), back.label(j))).collect();
                a.sort();
                b.sort();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn reciprocity_is_bounded_and_relabel_invariant(
                (n, edges) in edge_set(),
                shift in 0usize..11,
            ) {
                let g = DirectedGraph::from_edges(n, edges.clone()).unwrap();
                let r = reciprocity(&g);
                prop_assert!((0.0..=1.0).contains(&r));
                let perm = |i: usize| (i + shift) % n;
                let h = DirectedGraph::from_edges(n, edges.iter().map(|&(i, j)| (perm(i), perm(j)))).unwrap();
                prop_assert_eq!(r, reciprocity(&h));
                let sym = DirectedGraph::from_edges(
                    n,
                    edges.iter().flat_map(|&(i, j)| [(i, j), (j, i)]),
                ).unwrap();
                if sym.n_edges() > 0 {
                    prop_assert_eq!(reciprocity(&sym), 1.0);
                }
            }
        }
    }
}
