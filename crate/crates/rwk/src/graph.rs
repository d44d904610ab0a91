//! Sparse undirected graphs with integer vertex labels, seeded generators,
//! and explicit direct-product construction for the exact oracles.

use serde::{Deserialize, Serialize};

use crate::tape::{self};
use crate::{Error, Result};

/// Immutable undirected graph in compressed sparse row form.
///
/// Vertices are `0..n`, labels are `1..=n_labels`. Unlabelled graphs carry
/// `n_labels = 1` with every label equal to 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    labels: Vec<u32>,
    n_labels: u32,
    degrees: Vec<u32>,
}

impl Graph {
    /// Build from an edge list, validating the representation invariants:
    /// ids in range, no self-loops, no duplicate edges, labels inside the
    /// declared alphabet.
    pub fn from_edges(
        n: usize,
        edges: &[(u32, u32)],
        labels: Option<Vec<u32>>,
        n_labels: Option<u32>,
    ) -> Result<Graph> {
        let mut normalized = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u as usize >= n {
                return Err(Error::VertexOutOfRange { id: u as usize, n });
            }
            if v as usize >= n {
                return Err(Error::VertexOutOfRange { id: v as usize, n });
            }
            if u == v {
                return Err(Error::SelfLoop { vertex: u });
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        for pair in normalized.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::DuplicateEdge {
                    u: pair[0].0,
                    v: pair[0].1,
                });
            }
        }

        let labels = match labels {
            Some(l) => {
                if l.len() != n {
                    return Err(Error::LabelArrayLength { expected: n, got: l.len() });
                }
                l
            }
            None => vec![1; n],
        };
        let max_label = labels.iter().copied().max().unwrap_or(1).max(1);
        let n_labels = n_labels.unwrap_or(max_label);
        if n_labels == 0 {
            return Err(Error::EmptyAlphabet);
        }
        for (v, &label) in labels.iter().enumerate() {
            if label == 0 || label > n_labels {
                return Err(Error::LabelOutOfRange { vertex: v, label, n_labels });
            }
        }

        let mut degrees = vec![0u32; n];
        for &(u, v) in &normalized {
            degrees[u as usize] += 1;
            degrees[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        for v in 0..n {
            offsets.push(offsets[v] + degrees[v] as usize);
        }
        let mut cursor = offsets.clone();
        let mut neighbors = vec![0u32; 2 * normalized.len()];
        for &(u, v) in &normalized {
            neighbors[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            neighbors[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        // insertion over sorted unique pairs leaves each row sorted
        let graph = Graph { offsets, neighbors, labels, n_labels, degrees };
        debug_assert!(graph.rows_sorted());
        Ok(graph)
    }

    fn rows_sorted(&self) -> bool {
        (0..self.n()).all(|v| self.neighbors(v as u32).windows(2).all(|w| w[0] < w[1]))
    }

    /// Construct directly from already-valid CSR parts. Internal use for the
    /// product construction, which produces sorted duplicate-free rows by
    /// design.
    pub(crate) fn from_csr_unchecked(
        offsets: Vec<usize>,
        neighbors: Vec<u32>,
        labels: Vec<u32>,
        n_labels: u32,
    ) -> Graph {
        let n = offsets.len() - 1;
        let degrees = (0..n).map(|v| (offsets[v + 1] - offsets[v]) as u32).collect();
        let graph = Graph { offsets, neighbors, labels, n_labels, degrees };
        debug_assert!(graph.rows_sorted());
        graph
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.neighbors[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    pub fn degree(&self, v: u32) -> u32 {
        self.degrees[v as usize]
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn max_degree(&self) -> u32 {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    pub fn label(&self, v: u32) -> u32 {
        self.labels[v as usize]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_labels(&self) -> u32 {
        self.n_labels
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in self.neighbors(v) {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    /// Same structure with the label alphabet widened to `n_labels`.
    pub fn with_alphabet(&self, n_labels: u32) -> Result<Graph> {
        if n_labels == 0 {
            return Err(Error::EmptyAlphabet);
        }
        for (v, &label) in self.labels.iter().enumerate() {
            if label > n_labels {
                return Err(Error::LabelOutOfRange { vertex: v, label, n_labels });
            }
        }
        let mut g = self.clone();
        g.n_labels = n_labels;
        Ok(g)
    }

    /// Same structure with labels erased (all 1, alphabet size 1).
    pub fn unlabelled(&self) -> Graph {
        let mut g = self.clone();
        g.labels = vec![1; g.n()];
        g.n_labels = 1;
        g
    }

    pub fn to_doc(&self) -> GraphDoc {
        let mut edges = Vec::with_capacity(self.edge_count());
        for v in 0..self.n() as u32 {
            for &u in self.neighbors(v) {
                if v < u {
                    edges.push([v, u]);
                }
            }
        }
        GraphDoc {
            n: self.n(),
            edges,
            labels: Some(self.labels.clone()),
            n_labels: Some(self.n_labels),
        }
    }
}

/// On-disk form of a graph: field order irrelevant, absent labels mean an
/// unlabelled graph. A dataset file is a JSON array of these documents.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct GraphDoc {
    pub n: usize,
    pub edges: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_labels: Option<u32>,
}

/// Validate and canonicalize a parsed document.
pub fn parse_graph(doc: &GraphDoc) -> Result<Graph> {
    let edges: Vec<(u32, u32)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
    Graph::from_edges(doc.n, &edges, doc.labels.clone(), doc.n_labels)
}

/// Erdos-Renyi graph: every unordered pair is an edge independently with
/// probability `p`, deterministically from `seed`. With `require_connected`
/// the draw is repeated (up to [`CONNECTIVITY_RETRIES`] times) until the
/// result is connected.
pub fn erdos_renyi(n: usize, p: f64, seed: u64, require_connected: bool) -> Result<Graph> {
    if n == 0 {
        return Err(Error::EmptyGraphRequest);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidProbability { name: "p", value: p });
    }
    for attempt in 0..CONNECTIVITY_RETRIES {
        let mut edges = Vec::new();
        for i in 0..n as u64 {
            let row = tape::er_edge_row_key(seed, attempt, i);
            for j in (i + 1)..n as u64 {
                if row.push(j).uniform() < p {
                    edges.push((i as u32, j as u32));
                }
            }
        }
        let graph = Graph::from_edges(n, &edges, None, None)?;
        if !require_connected || graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(Error::ConnectivityRetriesExhausted { attempts: CONNECTIVITY_RETRIES })
}

/// Resample budget for `require_connected`.
pub const CONNECTIVITY_RETRIES: u64 = 1000;

/// Assign uniform random labels from `{1..=n_labels}`, deterministically from
/// `seed` and the graph's dataset position.
pub fn random_labels(graph: &Graph, n_labels: u32, seed: u64, graph_index: u64) -> Result<Graph> {
    if n_labels == 0 {
        return Err(Error::EmptyAlphabet);
    }
    let labels = (0..graph.n() as u64)
        .map(|v| 1 + (tape::label_draw(seed, graph_index, v) % n_labels as u64) as u32)
        .collect();
    let mut g = graph.clone();
    g.labels = labels;
    g.n_labels = n_labels;
    Ok(g)
}

/// Per-graph factors of the start and end measures. The product-graph
/// measures are `flat(v1 (x) v2)` restricted to label-matching pairs, so each
/// graph carries one factor for `v` and one for `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureVector {
    v_factor: Vec<f64>,
    w_factor: Vec<f64>,
}

impl MeasureVector {
    pub fn new(v_factor: Vec<f64>, w_factor: Vec<f64>) -> Result<MeasureVector> {
        for f in [&v_factor, &w_factor] {
            for (i, &x) in f.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::InvalidWeight { index: i, value: x });
                }
            }
        }
        if v_factor.len() != w_factor.len() {
            return Err(Error::MeasureLength {
                expected: v_factor.len(),
                got: w_factor.len(),
            });
        }
        Ok(MeasureVector { v_factor, w_factor })
    }

    pub fn len(&self) -> usize {
        self.v_factor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_factor.is_empty()
    }

    pub fn v(&self) -> &[f64] {
        &self.v_factor
    }

    pub fn w(&self) -> &[f64] {
        &self.w_factor
    }

    /// L1 norms of the two factors (used by the concentration constant).
    pub fn l1_norms(&self) -> (f64, f64) {
        (
            self.v_factor.iter().sum::<f64>(),
            self.w_factor.iter().sum::<f64>(),
        )
    }
}

/// How to fill both measure factors of a graph.
#[derive(Clone, Debug)]
pub enum MeasureKind {
    /// Each entry `1/n`.
    Uniform,
    /// Each entry `1`.
    Ones,
    /// Caller-provided weights, used for both factors.
    Custom(Vec<f64>),
}

pub fn factorized_measure(graph: &Graph, kind: MeasureKind) -> Result<MeasureVector> {
    let n = graph.n();
    let factor = match kind {
        MeasureKind::Uniform => vec![1.0 / n as f64; n],
        MeasureKind::Ones => vec![1.0; n],
        MeasureKind::Custom(weights) => {
            if weights.len() != n {
                return Err(Error::MeasureLength { expected: n, got: weights.len() });
            }
            weights
        }
    };
    MeasureVector::new(factor.clone(), factor)
}

/// A materialized direct product graph, with the stable map from product
/// vertex index back to the originating pair.
#[derive(Clone, Debug)]
pub struct ProductGraph {
    pub graph: Graph,
    /// `pairs[i] = (u1, u2)` for product vertex `i`.
    pub pairs: Vec<(u32, u32)>,
}

impl ProductGraph {
    /// Assemble the product-graph measure `flat(m1 (x) m2)` restricted to the
    /// label-matching vertex pairs.
    pub fn measure(&self, m1: &MeasureVector, m2: &MeasureVector) -> Result<MeasureVector> {
        if m1.len() != 0 && self.pairs.iter().any(|&(u, _)| u as usize >= m1.len()) {
            return Err(Error::MeasureLength { expected: m1.len(), got: m1.len() });
        }
        let v = self
            .pairs
            .iter()
            .map(|&(u1, u2)| m1.v()[u1 as usize] * m2.v()[u2 as usize])
            .collect();
        let w = self
            .pairs
            .iter()
            .map(|&(u1, u2)| m1.w()[u1 as usize] * m2.w()[u2 as usize])
            .collect();
        MeasureVector::new(v, w)
    }
}

/// Size guard for product materialization. The estimator itself never builds
/// the product; only the oracles do, and they refuse past these limits.
#[derive(Clone, Copy, Debug)]
pub struct ProductCaps {
    pub max_vertices: usize,
    pub max_edges: usize,
}

impl Default for ProductCaps {
    fn default() -> Self {
        ProductCaps { max_vertices: 1 << 22, max_edges: 1 << 26 }
    }
}

impl ProductCaps {
    pub fn unbounded() -> Self {
        ProductCaps { max_vertices: usize::MAX, max_edges: usize::MAX }
    }
}

/// Direct product: vertices are label-matching pairs, edges require an edge
/// in both factors. An empty product is valid output.
pub fn direct_product(g1: &Graph, g2: &Graph) -> ProductGraph {
    direct_product_capped(g1, g2, ProductCaps::unbounded())
        .expect("unbounded product cannot exceed caps")
}

/// Direct product with a size guard; errors before allocating past the caps.
pub fn direct_product_capped(g1: &Graph, g2: &Graph, caps: ProductCaps) -> Result<ProductGraph> {
    let alphabet = g1.n_labels().max(g2.n_labels()) as usize;
    // bucket g2's vertices per label; rank of a vertex inside its bucket
    let mut bucket2: Vec<Vec<u32>> = vec![Vec::new(); alphabet + 1];
    let mut rank2 = vec![0u32; g2.n()];
    for v in 0..g2.n() as u32 {
        let l = g2.label(v) as usize;
        rank2[v as usize] = bucket2[l].len() as u32;
        bucket2[l].push(v);
    }

    // product vertex index = base[u1] + rank2[u2], valid when labels match
    let mut base = vec![0usize; g1.n() + 1];
    for u1 in 0..g1.n() {
        let l = g1.label(u1 as u32) as usize;
        base[u1 + 1] = base[u1] + bucket2[l].len();
    }
    let n_product = base[g1.n()];
    if n_product > caps.max_vertices {
        return Err(Error::ProductTooLarge {
            vertices: n_product,
            edges: 0,
            max_vertices: caps.max_vertices,
            max_edges: caps.max_edges,
        });
    }

    let mut pairs = Vec::with_capacity(n_product);
    let mut labels = Vec::with_capacity(n_product);
    for u1 in 0..g1.n() as u32 {
        let l = g1.label(u1);
        for &u2 in &bucket2[l as usize] {
            pairs.push((u1, u2));
            labels.push(l);
        }
    }

    let mut offsets = Vec::with_capacity(n_product + 1);
    offsets.push(0usize);
    let mut neighbors = Vec::new();
    for &(u1, u2) in &pairs {
        for &v1 in g1.neighbors(u1) {
            let l = g1.label(v1);
            for &v2 in g2.neighbors(u2) {
                if g2.label(v2) == l {
                    neighbors.push((base[v1 as usize] + rank2[v2 as usize] as usize) as u32);
                }
            }
        }
        if neighbors.len() > caps.max_edges.saturating_mul(2) {
            return Err(Error::ProductTooLarge {
                vertices: n_product,
                edges: neighbors.len() / 2,
                max_vertices: caps.max_vertices,
                max_edges: caps.max_edges,
            });
        }
        offsets.push(neighbors.len());
    }

    let n_labels = g1.n_labels().max(g2.n_labels()).max(1);
    let graph = Graph::from_csr_unchecked(offsets, neighbors, labels, n_labels);
    Ok(ProductGraph { graph, pairs })
}
