//! The walk-based kernel estimator.
//!
//! Each graph is embedded into `d_G` coordinates. Coordinate `k` is the
//! product of two scalars, `(v^T C) . (D^T w)`, where `C` and `D` are
//! feature matrices built from random walks modulated by shared sign tapes.
//! Dot products of two graphs' embeddings estimate their kernel without the
//! product graph ever being formed: the step signs filter, in expectation,
//! for equal-length walk pairs, and the label signs for matching label
//! sequences.
//!
//! Walk recipe, per walker `w` and start vertex: the load starts at 1 and is
//! multiplied by `z(label(start), 0, w)`. At step `l` the walker deposits
//! `g(l, w) * load * sqrt(f_l)` into (row = start, column = anchor index)
//! whenever the current vertex is an anchor; the walk itself continues past
//! non-anchor vertices. It ends when the termination draw `t(l, w)` falls
//! below `p_halt`, when the current vertex has no neighbors, or at the
//! scheme truncation (where every further deposit would carry `sqrt(f) = 0`).
//! Otherwise it hops to a uniformly random neighbor, multiplying the load by
//! `degree / sqrt(1 - p_halt)` and by the label sign of the next vertex.
//!
//! Termination draws are shared between the graphs of a dataset within a
//! (role, block); neighbor picks are independent per graph. That coupling is
//! what makes the per-hop importance weight exact for the surviving
//! equal-length terms.

use rayon::prelude::*;
use std::time::Instant;

use crate::coeffs::CoefficientScheme;
use crate::graph::{Graph, MeasureVector};
use crate::tape::{derive_seed, GDistribution, RandomTape, Role, SharingMode, StreamKey};
use crate::{Error, Result};

/// Anchor selection: deposit columns are either all vertices or a uniform
/// without-replacement sample of `r` of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorPolicy {
    All,
    Count(usize),
}

impl AnchorPolicy {
    fn resolve(&self, n: usize) -> Result<usize> {
        match *self {
            AnchorPolicy::All => Ok(n),
            AnchorPolicy::Count(r) => {
                if r == 0 || r > n {
                    Err(Error::AnchorCount { r, n })
                } else {
                    Ok(r)
                }
            }
        }
    }
}

/// Storage layout for sampled feature matrices. Sparse mode records only the
/// touched (row, column) cells, which keeps the all-anchors variant linear in
/// the number of vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Storage {
    Dense,
    Sparse,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkConfig {
    /// Walks per start vertex (`m`).
    pub walks_per_vertex: usize,
    /// Per-step geometric termination probability, in (0, 1).
    pub p_halt: f64,
    pub anchors: AnchorPolicy,
    /// Embedding dimension (`d_G`): number of independent tape blocks.
    pub embedding_dim: usize,
    /// Deposit cap; must equal the scheme truncation.
    pub truncation: usize,
    pub storage: Storage,
    pub g_distribution: GDistribution,
    pub sharing: SharingMode,
}

impl WalkConfig {
    /// Defaults used throughout: all anchors, dense-free sparse storage,
    /// Rademacher signs drawn per walker.
    pub fn new(walks_per_vertex: usize, p_halt: f64, embedding_dim: usize, truncation: usize) -> WalkConfig {
        WalkConfig {
            walks_per_vertex,
            p_halt,
            anchors: AnchorPolicy::All,
            embedding_dim,
            truncation,
            storage: Storage::Sparse,
            g_distribution: GDistribution::Rademacher,
            sharing: SharingMode::PerWalker,
        }
    }

    fn validate(&self, scheme: &CoefficientScheme) -> Result<()> {
        if self.walks_per_vertex == 0 {
            return Err(Error::NoWalkers);
        }
        if !(self.p_halt > 0.0 && self.p_halt < 1.0) {
            return Err(Error::InvalidProbability { name: "p_halt", value: self.p_halt });
        }
        if self.embedding_dim == 0 {
            return Err(Error::EmbeddingDim);
        }
        if self.truncation != scheme.truncation() {
            return Err(Error::TruncationMismatch {
                scheme: scheme.truncation(),
                config: self.truncation,
            });
        }
        Ok(())
    }
}

/// The three independent seed families of a sampling run. Sign tapes, walk
/// randomness (termination and neighbor picks), and anchor draws can be
/// varied independently; ordinary use derives all three from one master seed.
#[derive(Clone, Copy, Debug)]
pub struct TapeSeeds {
    pub gz_seed: u64,
    pub walk_seed: u64,
    pub anchor_seed: u64,
}

impl TapeSeeds {
    pub fn from_master(master: u64) -> TapeSeeds {
        TapeSeeds {
            gz_seed: derive_seed(master, 0x67),
            walk_seed: derive_seed(master, 0x71),
            anchor_seed: derive_seed(master, 0xa3),
        }
    }
}

/// Everything a dot product's validity depends on. Embeddings may only be
/// compared when their provenance is identical.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub seed_digest: u64,
    pub scheme_digest: u64,
    pub walks_per_vertex: usize,
    pub p_halt: f64,
    pub anchors: AnchorPolicy,
    pub embedding_dim: usize,
    pub n_labels: u32,
    pub sharing: SharingMode,
    pub g_distribution: GDistribution,
}

impl Provenance {
    fn new(seeds: &TapeSeeds, scheme: &CoefficientScheme, cfg: &WalkConfig, n_labels: u32) -> Provenance {
        let seed_digest = StreamKey::new(seeds.gz_seed, 0x9d)
            .push(seeds.walk_seed)
            .push(seeds.anchor_seed)
            .value();
        Provenance {
            seed_digest,
            scheme_digest: scheme.digest(),
            walks_per_vertex: cfg.walks_per_vertex,
            p_halt: cfg.p_halt,
            anchors: cfg.anchors,
            embedding_dim: cfg.embedding_dim,
            n_labels,
            sharing: cfg.sharing,
            g_distribution: cfg.g_distribution,
        }
    }

    /// Compact digest for file headers.
    pub fn digest(&self) -> u64 {
        let anchors = match self.anchors {
            AnchorPolicy::All => u64::MAX,
            AnchorPolicy::Count(r) => r as u64,
        };
        StreamKey::new(self.seed_digest, 0x70)
            .push(self.scheme_digest)
            .push(self.walks_per_vertex as u64)
            .push(self.p_halt.to_bits())
            .push(anchors)
            .push(self.embedding_dim as u64)
            .push(self.n_labels as u64)
            .push(match self.sharing {
                SharingMode::PerWalker => 0,
                SharingMode::SharedAcrossWalkers => 1,
            })
            .push(match self.g_distribution {
                GDistribution::Rademacher => 0,
                GDistribution::Gaussian => 1,
            })
            .value()
    }
}

/// A graph's embedding: coordinate `k` is `(v^T C_k)(D_k^T w) / sqrt(d_G)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphEmbedding {
    pub phi: Vec<f64>,
    pub provenance: Provenance,
    /// Dataset position; walk streams are independent only across distinct
    /// indices, so dot products require the indices to differ.
    pub graph_index: u64,
}

/// Ordered anchor list with constant-time membership lookup. The list is
/// shared by the C and D copies of a (graph, block): the estimator pairs
/// column j of C with column j of D, so both must refer to the same vertex.
struct AnchorSet {
    list: Vec<u32>,
    col_of: Vec<i32>,
}

impl AnchorSet {
    fn sample(anchor_seed: u64, block: u32, n: usize, policy: AnchorPolicy) -> Result<AnchorSet> {
        let r = policy.resolve(n)?;
        let list: Vec<u32> = if r == n {
            (0..n as u32).collect()
        } else {
            // partial Fisher-Yates over the vertex ids
            let mut ids: Vec<u32> = (0..n as u32).collect();
            for i in 0..r {
                let remaining = (n - i) as u64;
                let j = i + (crate::tape::anchor_draw(anchor_seed, block, i as u64) % remaining) as usize;
                ids.swap(i, j);
            }
            ids.truncate(r);
            ids
        };
        let mut col_of = vec![-1i32; n];
        for (col, &v) in list.iter().enumerate() {
            col_of[v as usize] = col as i32;
        }
        Ok(AnchorSet { list, col_of })
    }

    fn r(&self) -> usize {
        self.list.len()
    }
}

fn matrix_scale(n: usize, r: usize, cfg: &WalkConfig) -> f64 {
    let m = cfg.walks_per_vertex as f64;
    match cfg.sharing {
        SharingMode::PerWalker => (n as f64 / (m * r as f64)).sqrt(),
        SharingMode::SharedAcrossWalkers => (n as f64 / r as f64).sqrt() / m,
    }
}

/// Small upsert buffer for one walk's deposits: walks are short, anchors hit
/// few columns, so a linear scan beats a map.
#[derive(Default)]
struct DepositBuffer {
    entries: Vec<(u32, f64)>,
}

impl DepositBuffer {
    fn clear(&mut self) {
        self.entries.clear();
    }

    #[inline]
    fn add(&mut self, col: u32, value: f64) {
        for e in self.entries.iter_mut() {
            if e.0 == col {
                e.1 += value;
                return;
            }
        }
        self.entries.push((col, value));
    }

    fn nonzero_count(&self) -> u64 {
        self.entries.iter().filter(|e| e.1 != 0.0).count() as u64
    }
}

/// One walker's walk out of `start`, feeding each deposit to `sink` in step
/// order.
#[inline]
fn walk_deposits<F: FnMut(u32, f64)>(
    graph: &Graph,
    sqrt_f: &[f64],
    cfg: &WalkConfig,
    tape: &RandomTape,
    graph_seed: u64,
    col_of: &[i32],
    start: u32,
    w: usize,
    mut sink: F,
) {
    let use_labels = graph.n_labels() > 1;
    let inv_sqrt_keep = 1.0 / (1.0 - cfg.p_halt).sqrt();
    let mut load = 1.0;
    let mut current = start;
    let mut l = 0usize;
    if use_labels {
        load *= tape.z(graph.label(current), 0, w);
    }
    loop {
        let col = col_of[current as usize];
        if col >= 0 {
            sink(col as u32, tape.g(l, w) * load * sqrt_f[l]);
        }
        if tape.t(l, w) < cfg.p_halt {
            break;
        }
        let degree = graph.degree(current);
        if degree == 0 || l == cfg.truncation {
            break;
        }
        let pick = tape.neighbor(graph_seed, start, w, l) % degree as u64;
        let next = graph.neighbors(current)[pick as usize];
        load *= degree as f64 * inv_sqrt_keep;
        current = next;
        l += 1;
        if use_labels {
            load *= tape.z(graph.label(current), l, w);
        }
    }
}

enum MatrixStorage {
    Dense(Vec<f64>),
    /// (row, col, value) triplets, sorted by (row, col).
    Sparse(Vec<(u32, u32, f64)>),
}

/// An `N x r` feature matrix: the walker deposits of one (role, block),
/// summed over walkers and scaled. Row = start vertex, column = anchor.
pub struct FeatureMatrix {
    storage: MatrixStorage,
    n: usize,
    r: usize,
    anchors: Vec<u32>,
    role: Role,
    block: u32,
    nnz: u64,
}

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn anchors(&self) -> &[u32] {
        &self.anchors
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn block(&self) -> u32 {
        self.block
    }

    /// Number of stored nonzero deposit cells, counted per walker before the
    /// walker sum (the sparse-mode cost statistic).
    pub fn nnz(&self) -> u64 {
        self.nnz
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        match &self.storage {
            MatrixStorage::Dense(m) => m[row * self.r + col],
            MatrixStorage::Sparse(t) => {
                match t.binary_search_by(|probe| (probe.0, probe.1).cmp(&(row as u32, col as u32))) {
                    Ok(i) => t[i].2,
                    Err(_) => 0.0,
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            MatrixStorage::Dense(m) => m.clone(),
            MatrixStorage::Sparse(t) => {
                let mut dense = vec![0.0; self.n * self.r];
                for &(row, col, v) in t {
                    dense[row as usize * self.r + col as usize] = v;
                }
                dense
            }
        }
    }

    /// `weights^T X`, summed in row order.
    pub fn left_product(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.r];
        match &self.storage {
            MatrixStorage::Dense(m) => {
                for row in 0..self.n {
                    let wr = weights[row];
                    for col in 0..self.r {
                        out[col] += wr * m[row * self.r + col];
                    }
                }
            }
            MatrixStorage::Sparse(t) => {
                for &(row, col, v) in t {
                    out[col as usize] += weights[row as usize] * v;
                }
            }
        }
        out
    }

    /// `X^T weights` is the same as [`Self::left_product`]; alias for D-side
    /// readability.
    pub fn right_product(&self, weights: &[f64]) -> Vec<f64> {
        self.left_product(weights)
    }
}

/// Sample one feature matrix per the walk recipe. `anchor_seed` identifies
/// the graph: it seeds the anchor draw and the neighbor streams, so distinct
/// graphs must pass distinct values while the C and D copies of one graph
/// must pass the same one.
pub fn sample_feature_matrix(
    graph: &Graph,
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    tape: &RandomTape,
    anchor_seed: u64,
) -> Result<FeatureMatrix> {
    cfg.validate(scheme)?;
    let n = graph.n();
    let anchors = AnchorSet::sample(anchor_seed, tape.block(), n, cfg.anchors)?;
    let r = anchors.r();
    let scale = matrix_scale(n, r, cfg);
    let sqrt_f = scheme.sqrt_f();

    // Rows are independent: row `start` only receives deposits from walks
    // started at `start`. Chunked so the reduction order is fixed for any
    // thread count.
    let chunk = 256usize;
    let starts: Vec<u32> = (0..n as u32).collect();
    let per_chunk: Result<Vec<(Vec<RowOut>, u64)>> = starts
        .par_chunks(chunk)
        .map(|chunk_starts| {
            let mut rows = Vec::with_capacity(chunk_starts.len());
            let mut nnz = 0u64;
            let mut walker_buf = DepositBuffer::default();
            for &start in chunk_starts {
                let mut row = DepositBuffer::default();
                for w in 0..cfg.walks_per_vertex {
                    walker_buf.clear();
                    walk_deposits(
                        graph, &sqrt_f, cfg, tape, anchor_seed, &anchors.col_of, start, w,
                        |col, dep| walker_buf.add(col, dep),
                    );
                    nnz += walker_buf.nonzero_count();
                    for &(col, v) in &walker_buf.entries {
                        row.add(col, v);
                    }
                }
                rows.push(RowOut { start, entries: row.entries });
            }
            Ok((rows, nnz))
        })
        .collect();
    let per_chunk = per_chunk?;

    let nnz = per_chunk.iter().map(|c| c.1).sum();
    let storage = match cfg.storage {
        Storage::Dense => {
            let mut m = vec![0.0; n * r];
            for (rows, _) in &per_chunk {
                for row in rows {
                    for &(col, v) in &row.entries {
                        m[row.start as usize * r + col as usize] = v * scale;
                    }
                }
            }
            MatrixStorage::Dense(m)
        }
        Storage::Sparse => {
            let mut triplets = Vec::new();
            for (rows, _) in &per_chunk {
                for row in rows {
                    for &(col, v) in &row.entries {
                        if v != 0.0 {
                            triplets.push((row.start, col, v * scale));
                        }
                    }
                }
            }
            triplets.sort_unstable_by_key(|&(row, col, _)| (row, col));
            MatrixStorage::Sparse(triplets)
        }
    };

    Ok(FeatureMatrix {
        storage,
        n,
        r,
        anchors: anchors.list,
        role: tape.role(),
        block: tape.block(),
        nnz,
    })
}

struct RowOut {
    start: u32,
    entries: Vec<(u32, f64)>,
}

/// Start vertices advanced together by [`block_side`]. The walks of a strip
/// move in lockstep, one step per round, so each round's hop-target gathers
/// form one tight loop of independent loads; on graphs much larger than
/// cache the misses then overlap instead of serializing walk by walk.
const WALK_STRIP: usize = 128;

/// Flat front of in-flight walks. `start` keys the neighbor stream and the
/// deposit row; the measure weight is folded into the initial load.
#[derive(Default)]
struct WalkFront {
    start: Vec<u32>,
    walker: Vec<u32>,
    current: Vec<u32>,
    load: Vec<f64>,
    pick: Vec<u32>,
    next: Vec<u32>,
}

impl WalkFront {
    fn clear(&mut self) {
        self.start.clear();
        self.walker.clear();
        self.current.clear();
        self.load.clear();
        self.pick.clear();
        self.next.clear();
    }
}

/// Streamed `weights^T X` for one (role, block): deposits are folded into an
/// r-length accumulator as they are generated, so the matrix itself is never
/// materialized. Peak memory is O(r + strip) however many walks run.
fn block_side(
    graph: &Graph,
    weights: &[f64],
    sqrt_f: &[f64],
    cfg: &WalkConfig,
    tape: &RandomTape,
    graph_seed: u64,
    anchors: &AnchorSet,
    deadline: Option<Instant>,
) -> Result<Vec<f64>> {
    let n = graph.n();
    let r = anchors.r();
    let m = cfg.walks_per_vertex;
    let use_labels = graph.n_labels() > 1;
    let inv_sqrt_keep = 1.0 / (1.0 - cfg.p_halt).sqrt();
    let col_of = &anchors.col_of;
    let mut acc = vec![0.0; r];
    let mut front = WalkFront::default();
    let mut survivors = WalkFront::default();

    for strip in (0..n as u32).step_by(WALK_STRIP) {
        if let Some(d) = deadline {
            if Instant::now() > d {
                return Err(Error::TimeBudgetExceeded);
            }
        }
        front.clear();
        let strip_end = (strip + WALK_STRIP as u32).min(n as u32);
        for start in strip..strip_end {
            let weight = weights[start as usize];
            if weight == 0.0 {
                // deposits from this row cannot contribute
                continue;
            }
            let start_label = if use_labels { graph.label(start) } else { 0 };
            for w in 0..m {
                front.start.push(start);
                front.walker.push(w as u32);
                front.current.push(start);
                let z = if use_labels { tape.z(start_label, 0, w) } else { 1.0 };
                front.load.push(weight * z);
            }
        }

        let mut l = 0usize;
        while !front.walker.is_empty() {
            // deposit, terminate, and draw the neighbor pick; nothing here
            // touches the adjacency array
            survivors.clear();
            for i in 0..front.walker.len() {
                let w = front.walker[i] as usize;
                let current = front.current[i];
                let load = front.load[i];
                let col = col_of[current as usize];
                if col >= 0 {
                    acc[col as usize] += tape.g(l, w) * load * sqrt_f[l];
                }
                if tape.t(l, w) < cfg.p_halt {
                    continue;
                }
                let degree = graph.degree(current);
                if degree == 0 || l == cfg.truncation {
                    continue;
                }
                let start = front.start[i];
                survivors.start.push(start);
                survivors.walker.push(w as u32);
                survivors.current.push(current);
                survivors.load.push(load * degree as f64 * inv_sqrt_keep);
                survivors
                    .pick
                    .push((tape.neighbor(graph_seed, start, w, l) % degree as u64) as u32);
            }

            // gather all hop targets back to back
            survivors.next.clear();
            for i in 0..survivors.walker.len() {
                let row = graph.neighbors(survivors.current[i]);
                survivors.next.push(row[survivors.pick[i] as usize]);
            }

            front.clear();
            l += 1;
            for i in 0..survivors.walker.len() {
                let w = survivors.walker[i];
                let next = survivors.next[i];
                let mut load = survivors.load[i];
                if use_labels {
                    load *= tape.z(graph.label(next), l, w as usize);
                }
                front.start.push(survivors.start[i]);
                front.walker.push(w);
                front.current.push(next);
                front.load.push(load);
            }
        }
    }
    let scale = matrix_scale(n, r, cfg);
    for a in acc.iter_mut() {
        *a *= scale;
    }
    Ok(acc)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Embed with explicit seed families. `graph_index` is the graph's dataset
/// position: sign and termination tapes are shared across indices, neighbor
/// picks and anchors are not.
pub fn embed_graph_with_seeds(
    graph: &Graph,
    measures: &MeasureVector,
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    seeds: &TapeSeeds,
    graph_index: u64,
) -> Result<GraphEmbedding> {
    embed_graph_budgeted(graph, measures, scheme, cfg, seeds, graph_index, None)
}

pub(crate) fn embed_graph_budgeted(
    graph: &Graph,
    measures: &MeasureVector,
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    seeds: &TapeSeeds,
    graph_index: u64,
    deadline: Option<Instant>,
) -> Result<GraphEmbedding> {
    cfg.validate(scheme)?;
    if measures.len() != graph.n() {
        return Err(Error::MeasureLength { expected: graph.n(), got: measures.len() });
    }
    let sqrt_f = scheme.sqrt_f();
    let graph_seed = derive_seed(seeds.anchor_seed, graph_index);

    let blocks: Result<Vec<f64>> = (0..cfg.embedding_dim as u32)
        .into_par_iter()
        .map(|block| -> Result<f64> {
            let anchors = AnchorSet::sample(graph_seed, block, graph.n(), cfg.anchors)?;
            let tape_c = RandomTape::split(
                seeds.gz_seed, seeds.walk_seed, Role::C, block, cfg.g_distribution, cfg.sharing,
            );
            let u = block_side(graph, measures.v(), &sqrt_f, cfg, &tape_c, graph_seed, &anchors, deadline)?;
            let tape_d = RandomTape::split(
                seeds.gz_seed, seeds.walk_seed, Role::D, block, cfg.g_distribution, cfg.sharing,
            );
            let q = block_side(graph, measures.w(), &sqrt_f, cfg, &tape_d, graph_seed, &anchors, deadline)?;
            Ok(dot(&u, &q))
        })
        .collect();

    let inv_sqrt_dim = 1.0 / (cfg.embedding_dim as f64).sqrt();
    let phi = blocks?.into_iter().map(|b| b * inv_sqrt_dim).collect();
    Ok(GraphEmbedding {
        phi,
        provenance: Provenance::new(seeds, scheme, cfg, graph.n_labels()),
        graph_index,
    })
}

/// Embed one graph from a master seed. See [`embed_graph_with_seeds`] for
/// the meaning of `graph_index`.
pub fn embed_graph(
    graph: &Graph,
    measures: &MeasureVector,
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    master_seed: u64,
    graph_index: u64,
) -> Result<GraphEmbedding> {
    embed_graph_with_seeds(graph, measures, scheme, cfg, &TapeSeeds::from_master(master_seed), graph_index)
}

/// Embed a whole dataset under one shared tape family.
pub fn embed_dataset(
    graphs: &[Graph],
    measures: &[MeasureVector],
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    master_seed: u64,
) -> Result<Vec<GraphEmbedding>> {
    embed_dataset_budgeted(graphs, measures, scheme, cfg, master_seed, None)
}

pub fn embed_dataset_budgeted(
    graphs: &[Graph],
    measures: &[MeasureVector],
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    master_seed: u64,
    deadline: Option<Instant>,
) -> Result<Vec<GraphEmbedding>> {
    if graphs.len() != measures.len() {
        return Err(Error::MeasureLength { expected: graphs.len(), got: measures.len() });
    }
    let seeds = TapeSeeds::from_master(master_seed);
    graphs
        .par_iter()
        .zip(measures.par_iter())
        .enumerate()
        .map(|(i, (g, m))| embed_graph_budgeted(g, m, scheme, cfg, &seeds, i as u64, deadline))
        .collect()
}

/// Kernel estimate from two embeddings: their dot product. The embeddings
/// must share provenance and come from distinct graph indices (walks are
/// only independent across indices).
pub fn estimate_from_embeddings(a: &GraphEmbedding, b: &GraphEmbedding) -> Result<f64> {
    if a.provenance != b.provenance {
        return Err(Error::ProvenanceMismatch);
    }
    if a.graph_index == b.graph_index {
        return Err(Error::DuplicateGraphIndex { index: a.graph_index });
    }
    Ok(dot(&a.phi, &b.phi))
}

/// One-call pairwise estimate: embeds the two graphs at indices 0 and 1
/// under the master seed and dots the results. Equal to the corresponding
/// embedding dot product bit for bit.
pub fn pair_estimate(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    master_seed: u64,
) -> Result<f64> {
    let seeds = TapeSeeds::from_master(master_seed);
    pair_estimate_with_seeds(g1, g2, m1, m2, scheme, cfg, &seeds)
}

/// Pairwise estimate with explicit seed families (the concentration study
/// holds the sign seeds fixed while varying the walk seeds).
pub fn pair_estimate_with_seeds(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    seeds: &TapeSeeds,
) -> Result<f64> {
    let e1 = embed_graph_with_seeds(g1, m1, scheme, cfg, seeds, 0)?;
    let e2 = embed_graph_with_seeds(g2, m2, scheme, cfg, seeds, 1)?;
    estimate_from_embeddings(&e1, &e2)
}

/// Row-stacked embeddings and their Gramian.
pub struct GramResult {
    /// `N_G x d_G` design matrix, one row per graph.
    pub design_matrix: Vec<Vec<f64>>,
    /// `N_G x N_G` Gram matrix; symmetric by construction (computed once and
    /// mirrored).
    pub gram: Vec<Vec<f64>>,
}

pub fn gram_matrix(embeddings: &[GraphEmbedding]) -> Result<GramResult> {
    if let Some(first) = embeddings.first() {
        for e in &embeddings[1..] {
            if e.provenance != first.provenance {
                return Err(Error::ProvenanceMismatch);
            }
        }
    }
    let n = embeddings.len();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let value = dot(&embeddings[i].phi, &embeddings[j].phi);
            gram[i][j] = value;
            gram[j][i] = value;
        }
    }
    Ok(GramResult {
        design_matrix: embeddings.iter().map(|e| e.phi.clone()).collect(),
        gram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientScheme;
    use crate::graph::{erdos_renyi, factorized_measure, Graph, MeasureKind};
    use crate::tape::make_tape;

    fn delta_scheme(t: usize) -> CoefficientScheme {
        let mut mu = vec![0.0; t + 1];
        mu[0] = 1.0;
        CoefficientScheme::from_mu(mu).unwrap()
    }

    fn single_vertex(label: u32, n_labels: u32) -> Graph {
        Graph::from_edges(1, &[], Some(vec![label]), Some(n_labels)).unwrap()
    }

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)], None, None).unwrap()
    }

    #[test]
    fn config_validation() {
        let scheme = CoefficientScheme::exponential(0.4, 10).unwrap();
        let mut cfg = WalkConfig::new(1, 0.5, 1, 10);
        cfg.walks_per_vertex = 0;
        assert!(matches!(cfg.validate(&scheme), Err(Error::NoWalkers)));
        let cfg = WalkConfig::new(1, 1.0, 1, 10);
        assert!(matches!(cfg.validate(&scheme), Err(Error::InvalidProbability { .. })));
        let cfg = WalkConfig::new(1, 0.5, 1, 9);
        assert!(matches!(cfg.validate(&scheme), Err(Error::TruncationMismatch { .. })));
    }

    #[test]
    fn single_vertex_matrix_is_a_sign() {
        let g = single_vertex(1, 1);
        let scheme = delta_scheme(4);
        let cfg = WalkConfig::new(1, 0.5, 1, 4);
        for seed in 0..20 {
            let tape = make_tape(seed, Role::C, 0, GDistribution::Rademacher, SharingMode::PerWalker);
            let x = sample_feature_matrix(&g, &scheme, &cfg, &tape, 7).unwrap();
            assert_eq!((x.n(), x.r()), (1, 1));
            let v = x.value(0, 0);
            assert!(v == 1.0 || v == -1.0, "got {v}");
        }
    }

    #[test]
    fn delta_scheme_deposits_only_at_start() {
        // With f = (1, 0, ...) and one walker, every anchored row holds a
        // single nonzero at its own column with magnitude sqrt(N/r);
        // unanchored rows are all zero.
        let g = erdos_renyi(6, 0.5, 3, false).unwrap();
        let scheme = delta_scheme(6);
        let mut cfg = WalkConfig::new(1, 0.5, 1, 6);
        cfg.anchors = AnchorPolicy::Count(3);
        let tape = make_tape(5, Role::D, 2, GDistribution::Rademacher, SharingMode::PerWalker);
        let x = sample_feature_matrix(&g, &scheme, &cfg, &tape, 99).unwrap();
        let expected = (6.0f64 / 3.0).sqrt();
        let mut anchor_col = vec![None; 6];
        for (col, &v) in x.anchors().iter().enumerate() {
            anchor_col[v as usize] = Some(col);
        }
        for row in 0..6 {
            for col in 0..3 {
                let v = x.value(row, col);
                if anchor_col[row] == Some(col) {
                    assert!((v.abs() - expected).abs() < 1e-15, "row {row}: {v}");
                } else {
                    assert_eq!(v, 0.0, "row {row} col {col}");
                }
            }
        }
    }

    #[test]
    fn dense_and_sparse_storage_agree() {
        let g = path3();
        let scheme = CoefficientScheme::exponential(0.4, 40).unwrap();
        let mut cfg = WalkConfig::new(200, 0.5, 1, 40);
        let tape = make_tape(11, Role::C, 0, GDistribution::Rademacher, SharingMode::PerWalker);
        cfg.storage = Storage::Dense;
        let dense = sample_feature_matrix(&g, &scheme, &cfg, &tape, 4).unwrap();
        cfg.storage = Storage::Sparse;
        let sparse = sample_feature_matrix(&g, &scheme, &cfg, &tape, 4).unwrap();
        assert_eq!(dense.to_dense(), sparse.to_dense());
        assert_eq!(dense.nnz(), sparse.nnz());
        assert!(dense.nnz() > 0);
    }

    #[test]
    fn feature_matrix_is_deterministic() {
        let g = erdos_renyi(8, 0.4, 1, false).unwrap();
        let scheme = CoefficientScheme::exponential(0.4, 20).unwrap();
        let cfg = WalkConfig::new(7, 0.4, 1, 20);
        let tape = make_tape(42, Role::C, 1, GDistribution::Rademacher, SharingMode::PerWalker);
        let a = sample_feature_matrix(&g, &scheme, &cfg, &tape, 13).unwrap();
        let b = sample_feature_matrix(&g, &scheme, &cfg, &tape, 13).unwrap();
        assert_eq!(a.to_dense(), b.to_dense());
    }

    #[test]
    fn streamed_side_matches_matrix_product() {
        let g = erdos_renyi(10, 0.4, 9, false).unwrap();
        let measures = factorized_measure(&g, MeasureKind::Uniform).unwrap();
        let scheme = CoefficientScheme::exponential(0.4, 30).unwrap();
        let mut cfg = WalkConfig::new(20, 0.5, 1, 30);
        cfg.anchors = AnchorPolicy::Count(5);
        let seeds = TapeSeeds::from_master(77);
        let graph_seed = derive_seed(seeds.anchor_seed, 0);
        let anchors = AnchorSet::sample(graph_seed, 0, g.n(), cfg.anchors).unwrap();
        let tape = RandomTape::split(
            seeds.gz_seed, seeds.walk_seed, Role::C, 0, cfg.g_distribution, cfg.sharing,
        );
        let streamed =
            block_side(&g, measures.v(), &scheme.sqrt_f(), &cfg, &tape, graph_seed, &anchors, None)
                .unwrap();
        let matrix = sample_feature_matrix(&g, &scheme, &cfg, &tape, graph_seed).unwrap();
        assert_eq!(matrix.anchors(), &anchors.list[..]);
        let via_matrix = matrix.left_product(measures.v());
        for (a, b) in streamed.iter().zip(&via_matrix) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn embedding_shape_and_determinism() {
        let g = erdos_renyi(6, 0.5, 2, false).unwrap();
        let m = factorized_measure(&g, MeasureKind::Uniform).unwrap();
        let scheme = CoefficientScheme::exponential(0.4, 20).unwrap();
        let cfg = WalkConfig::new(5, 0.5, 7, 20);
        let e = embed_graph(&g, &m, &scheme, &cfg, 3, 0).unwrap();
        assert_eq!(e.phi.len(), 7);
        let again = embed_graph(&g, &m, &scheme, &cfg, 3, 0).unwrap();
        assert_eq!(e.phi, again.phi);
    }

    #[test]
    fn single_block_pair_matches_embedding_dot_bitwise() {
        let g1 = erdos_renyi(6, 0.5, 4, false).unwrap();
        let g2 = erdos_renyi(5, 0.6, 5, false).unwrap();
        let m1 = factorized_measure(&g1, MeasureKind::Uniform).unwrap();
        let m2 = factorized_measure(&g2, MeasureKind::Uniform).unwrap();
        let scheme = CoefficientScheme::exponential(0.4, 20).unwrap();
        let cfg = WalkConfig::new(8, 0.5, 1, 20);
        for seed in 0..10 {
            let direct = pair_estimate(&g1, &g2, &m1, &m2, &scheme, &cfg, seed).unwrap();
            let e1 = embed_graph(&g1, &m1, &scheme, &cfg, seed, 0).unwrap();
            let e2 = embed_graph(&g2, &m2, &scheme, &cfg, seed, 1).unwrap();
            assert_eq!(direct, estimate_from_embeddings(&e1, &e2).unwrap());
        }
    }

    #[test]
    fn identical_single_vertex_graphs_estimate_exactly_one() {
        // g^2 = 1 identically for Rademacher signs, so the estimate carries
        // no randomness at all.
        let g = single_vertex(1, 1);
        let m = factorized_measure(&g, MeasureKind::Ones).unwrap();
        let scheme = delta_scheme(2);
        let cfg = WalkConfig::new(1, 0.5, 1, 2);
        for seed in 0..50 {
            let est = pair_estimate(&g, &g, &m, &m, &scheme, &cfg, seed).unwrap();
            assert_eq!(est, 1.0);
        }
    }

    #[test]
    fn different_label_single_vertices_are_signs_with_zero_mean() {
        let g1 = single_vertex(1, 2);
        let g2 = single_vertex(2, 2);
        let m = factorized_measure(&g1, MeasureKind::Ones).unwrap();
        let scheme = delta_scheme(2);
        let cfg = WalkConfig::new(1, 0.5, 1, 2);
        let trials = 10_000u64;
        let mut sum = 0.0;
        for seed in 0..trials {
            let est = pair_estimate(&g1, &g2, &m, &m, &scheme, &cfg, seed).unwrap();
            assert!(est == 1.0 || est == -1.0, "got {est}");
            sum += est;
        }
        let mean = sum / trials as f64;
        assert!(mean.abs() < 3.0 / (trials as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn provenance_and_index_guards() {
        let g = erdos_renyi(4, 0.5, 8, false).unwrap();
        let m = factorized_measure(&g, MeasureKind::Uniform).unwrap();
        let scheme = CoefficientScheme::exponential(0.4, 10).unwrap();
        let cfg = WalkConfig::new(2, 0.5, 2, 10);
        let a = embed_graph(&g, &m, &scheme, &cfg, 1, 0).unwrap();
        let b = embed_graph(&g, &m, &scheme, &cfg, 2, 1).unwrap();
        assert!(matches!(estimate_from_embeddings(&a, &b), Err(Error::ProvenanceMismatch)));
        let c = embed_graph(&g, &m, &scheme, &cfg, 1, 0).unwrap();
        assert!(matches!(
            estimate_from_embeddings(&a, &c),
            Err(Error::DuplicateGraphIndex { .. })
        ));
    }

    #[test]
    fn gram_of_one_embedding_is_squared_norm() {
        let g = erdos_renyi(5, 0.5, 3, false).unwrap();
        let m = factorized_measure(&g, MeasureKind::Uniform).unwrap();
        let scheme = CoefficientScheme::exponential(0.4, 10).unwrap();
        let cfg = WalkConfig::new(3, 0.5, 4, 10);
        let e = embed_graph(&g, &m, &scheme, &cfg, 6, 0).unwrap();
        let norm_sq: f64 = e.phi.iter().map(|x| x * x).sum();
        let gram = gram_matrix(std::slice::from_ref(&e)).unwrap();
        assert_eq!(gram.gram.len(), 1);
        assert_eq!(gram.gram[0][0], norm_sq);
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let graphs: Vec<Graph> = (0..4).map(|s| erdos_renyi(5, 0.5, 50 + s, false).unwrap()).collect();
        let measures: Vec<_> = graphs
            .iter()
            .map(|g| factorized_measure(g, MeasureKind::Uniform).unwrap())
            .collect();
        let scheme = CoefficientScheme::exponential(0.4, 10).unwrap();
        let cfg = WalkConfig::new(3, 0.5, 4, 10);
        let embeddings = embed_dataset(&graphs, &measures, &scheme, &cfg, 9).unwrap();
        let gram = gram_matrix(&embeddings).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(gram.gram[i][j], gram.gram[j][i]);
            }
        }
    }

    #[test]
    fn embeddings_identical_across_thread_counts() {
        let graphs: Vec<Graph> = (0..3).map(|s| erdos_renyi(12, 0.3, 70 + s, false).unwrap()).collect();
        let measures: Vec<_> = graphs
            .iter()
            .map(|g| factorized_measure(g, MeasureKind::Uniform).unwrap())
            .collect();
        let scheme = CoefficientScheme::exponential(0.4, 20).unwrap();
        let cfg = WalkConfig::new(6, 0.5, 4, 20);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| embed_dataset(&graphs, &measures, &scheme, &cfg, 31).unwrap())
        };
        let single = run(1);
        let eight = run(8);
        for (a, b) in single.iter().zip(&eight) {
            assert_eq!(a.phi, b.phi);
        }
    }

    #[test]
    fn anchor_sets_are_valid_samples() {
        for block in 0..4 {
            let a = AnchorSet::sample(123, block, 10, AnchorPolicy::Count(4)).unwrap();
            assert_eq!(a.r(), 4);
            let mut sorted = a.list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 4);
            assert!(sorted.iter().all(|&v| v < 10));
        }
        let all = AnchorSet::sample(1, 0, 5, AnchorPolicy::All).unwrap();
        assert_eq!(all.list, vec![0, 1, 2, 3, 4]);
        assert!(AnchorSet::sample(1, 0, 5, AnchorPolicy::Count(6)).is_err());
        assert!(AnchorSet::sample(1, 0, 5, AnchorPolicy::Count(0)).is_err());
    }
}
