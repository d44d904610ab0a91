//! Unbiased, linear-time Monte Carlo estimation of general random walk graph
//! kernels.
//!
//! The estimator embeds each graph into a low-dimensional vector by sampling
//! random walks with shared sign tapes; dot products of embeddings estimate
//! the kernel without ever materializing the direct product graph. Exact
//! series, conjugate-gradient, and fixed-point oracles on the materialized
//! product serve as ground truth and as runtime baselines, and an analysis
//! module checks the estimator's concentration and variance properties.
//!
//! Modules:
//! - [`graph`]: sparse undirected graphs, generators, direct products
//! - [`coeffs`]: kernel coefficient sequences and their deconvolution
//! - [`tape`]: deterministic keyed random streams
//! - [`engine`]: the walk sampler, feature matrices, embeddings, Gram matrix
//! - [`oracle`]: exact and classical baseline computations
//! - [`analysis`]: concentration and variance studies
//! - [`dataset`], [`report`]: file formats and tabular output

pub mod analysis;
pub mod coeffs;
pub mod dataset;
pub mod engine;
pub mod graph;
pub mod oracle;
pub mod report;
pub mod tape;

pub use coeffs::{convergence_constant, deconvolve, CoefficientScheme, SchemeKind};
pub use engine::{
    embed_dataset, embed_graph, estimate_from_embeddings, gram_matrix, pair_estimate,
    sample_feature_matrix, AnchorPolicy, FeatureMatrix, GramResult, GraphEmbedding, Provenance,
    Storage, TapeSeeds, WalkConfig,
};
pub use graph::{
    direct_product, direct_product_capped, erdos_renyi, factorized_measure, parse_graph, Graph,
    GraphDoc, MeasureKind, MeasureVector, ProductCaps, ProductGraph,
};
pub use oracle::{
    cg_geometric, exact_rwk, fixed_point_geometric, naive_product_grf, OracleConfig,
};
pub use tape::{derive_seed, make_tape, GDistribution, RandomTape, Role, SharingMode};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vertex id {id} out of range for n = {n}")]
    VertexOutOfRange { id: usize, n: usize },
    #[error("self-loop at vertex {vertex}")]
    SelfLoop { vertex: u32 },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: u32, v: u32 },
    #[error("label array has length {got}, expected {expected}")]
    LabelArrayLength { expected: usize, got: usize },
    #[error("vertex {vertex} has label {label} outside alphabet 1..={n_labels}")]
    LabelOutOfRange { vertex: usize, label: u32, n_labels: u32 },
    #[error("label alphabet must be nonempty")]
    EmptyAlphabet,
    #[error("graph must have at least one vertex")]
    EmptyGraphRequest,
    #[error("{name} = {value} is outside its valid range")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("no connected graph found in {attempts} resamples")]
    ConnectivityRetriesExhausted { attempts: u64 },
    #[error("weight {value} at index {index} is negative or not finite")]
    InvalidWeight { index: usize, value: f64 },
    #[error("measure length {got} does not match vertex count {expected}")]
    MeasureLength { expected: usize, got: usize },
    #[error(
        "product graph too large: {vertices} vertices / {edges} edges exceeds caps \
         ({max_vertices} vertices, {max_edges} edges)"
    )]
    ProductTooLarge { vertices: usize, edges: usize, max_vertices: usize, max_edges: usize },
    #[error("leading coefficient mu_0 = {mu0} must be positive")]
    NonpositiveLeadingCoefficient { mu0: f64 },
    #[error("deconvolution produced negative coefficient {value} at index {index}")]
    NegativeModulation { index: usize, value: f64 },
    #[error("rate lambda = {lambda} must be positive")]
    NonpositiveRate { lambda: f64 },
    #[error("coefficient sequence needs at least one term")]
    TruncationTooSmall,
    #[error("series diverges under truncation heuristic (tail term ratio {ratio})")]
    DivergentSeries { ratio: f64 },
    #[error("walks per vertex must be at least 1")]
    NoWalkers,
    #[error("embedding dimension must be at least 1")]
    EmbeddingDim,
    #[error("scheme truncation {scheme} does not match config truncation {config}")]
    TruncationMismatch { scheme: usize, config: usize },
    #[error("anchor count {r} invalid for a graph with {n} vertices")]
    AnchorCount { r: usize, n: usize },
    #[error("embeddings have different provenance and cannot be compared")]
    ProvenanceMismatch,
    #[error("embeddings share graph index {index}; their walks are not independent")]
    DuplicateGraphIndex { index: u64 },
    #[error("time budget exceeded")]
    TimeBudgetExceeded,
    #[error("tolerance {value} must be positive")]
    InvalidTolerance { value: f64 },
    #[error("iteration cap must be at least 1")]
    InvalidIterationCap,
    #[error("iteration cap {iterations} reached with residual {residual}")]
    IterationLimit { iterations: usize, residual: f64 },
    #[error("this study requires sign tapes shared across walkers")]
    SharedTapesRequired,
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("invalid scheme spec: {0}")]
    InvalidSchemeSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
