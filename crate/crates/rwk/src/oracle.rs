//! Ground-truth and classical baseline estimators on the materialized
//! product graph. These are the slow, trusted references the walk estimator
//! is checked against, and the baselines the benchmark times out against.

use std::time::Instant;

use crate::graph::{direct_product_capped, Graph, MeasureVector, ProductCaps, ProductGraph};
use crate::tape::StreamKey;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    /// Series truncation for the power-sum oracle.
    pub truncation: usize,
    /// Residual threshold for the iterative solvers.
    pub tolerance: f64,
    /// Iteration cap for the iterative solvers.
    pub max_iterations: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { truncation: 40, tolerance: 1e-6, max_iterations: 150_000 }
    }
}

impl OracleConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidTolerance { value: self.tolerance });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidIterationCap);
        }
        Ok(())
    }
}

/// Sparse matvec with the product adjacency: `y = A x`.
fn adjacency_apply(graph: &Graph, x: &[f64], y: &mut [f64]) {
    for p in 0..graph.n() as u32 {
        let mut acc = 0.0;
        for &q in graph.neighbors(p) {
            acc += x[q as usize];
        }
        y[p as usize] = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_deadline(deadline: Option<Instant>) -> Result<()> {
    if let Some(d) = deadline {
        if Instant::now() > d {
            return Err(Error::TimeBudgetExceeded);
        }
    }
    Ok(())
}

/// Exact truncated kernel `sum_{i=0..T} mu_i v^T A^i w` on the materialized
/// label-aware product graph, by iterated sparse matvecs. An empty product
/// graph yields 0.
pub fn exact_rwk(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    mu: &[f64],
    truncation: usize,
) -> Result<f64> {
    exact_rwk_guarded(g1, g2, m1, m2, mu, truncation, ProductCaps::unbounded(), None)
}

pub fn exact_rwk_guarded(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    mu: &[f64],
    truncation: usize,
    caps: ProductCaps,
    deadline: Option<Instant>,
) -> Result<f64> {
    if mu.len() <= truncation {
        return Err(Error::TruncationMismatch { scheme: mu.len().saturating_sub(1), config: truncation });
    }
    let product = direct_product_capped(g1, g2, caps)?;
    if product.graph.n() == 0 {
        return Ok(0.0);
    }
    let measure = product.measure(m1, m2)?;
    let v = measure.v();
    let mut front = measure.w().to_vec();
    let mut next = vec![0.0; front.len()];
    let mut acc = mu[0] * dot(v, &front);
    for &mu_i in mu.iter().take(truncation + 1).skip(1) {
        check_deadline(deadline)?;
        adjacency_apply(&product.graph, &front, &mut next);
        std::mem::swap(&mut front, &mut next);
        acc += mu_i * dot(v, &front);
    }
    Ok(acc)
}

/// Geometric kernel `v^T (I - lambda A)^{-1} w` by conjugate gradient on the
/// product graph. Stops when the residual 2-norm falls to
/// `tolerance * ||w||`; exceeding the iteration cap is an error carrying the
/// residual achieved.
pub fn cg_geometric(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    lambda: f64,
    cfg: &OracleConfig,
) -> Result<f64> {
    cg_geometric_guarded(g1, g2, m1, m2, lambda, cfg, ProductCaps::unbounded(), None)
}

pub fn cg_geometric_guarded(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    lambda: f64,
    cfg: &OracleConfig,
    caps: ProductCaps,
    deadline: Option<Instant>,
) -> Result<f64> {
    cfg.validate()?;
    let product = direct_product_capped(g1, g2, caps)?;
    if product.graph.n() == 0 {
        return Ok(0.0);
    }
    let measure = product.measure(m1, m2)?;
    let v = measure.v();
    let w = measure.w();
    let n = w.len();
    let w_norm = dot(w, w).sqrt();
    if w_norm == 0.0 {
        return Ok(0.0);
    }

    // system matvec: y = (I - lambda A) x
    let mut scratch = vec![0.0; n];
    let system = |x: &[f64], y: &mut [f64], scratch: &mut [f64]| {
        adjacency_apply(&product.graph, x, scratch);
        for i in 0..n {
            y[i] = x[i] - lambda * scratch[i];
        }
    };

    let mut x = vec![0.0; n];
    let mut residual = w.to_vec();
    let mut direction = residual.clone();
    let mut applied = vec![0.0; n];
    let mut rr = dot(&residual, &residual);
    for _ in 0..cfg.max_iterations {
        if rr.sqrt() <= cfg.tolerance * w_norm {
            return Ok(dot(v, &x));
        }
        check_deadline(deadline)?;
        system(&direction, &mut applied, &mut scratch);
        let alpha = rr / dot(&direction, &applied);
        for i in 0..n {
            x[i] += alpha * direction[i];
            residual[i] -= alpha * applied[i];
        }
        let rr_next = dot(&residual, &residual);
        let beta = rr_next / rr;
        for i in 0..n {
            direction[i] = residual[i] + beta * direction[i];
        }
        rr = rr_next;
    }
    if rr.sqrt() <= cfg.tolerance * w_norm {
        return Ok(dot(v, &x));
    }
    Err(Error::IterationLimit {
        iterations: cfg.max_iterations,
        residual: rr.sqrt() / w_norm,
    })
}

/// Geometric kernel by fixed-point iteration `x <- w + lambda A x`, stopping
/// when the max-norm change of the iterate falls to `tolerance`.
pub fn fixed_point_geometric(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    lambda: f64,
    cfg: &OracleConfig,
) -> Result<f64> {
    fixed_point_geometric_guarded(g1, g2, m1, m2, lambda, cfg, ProductCaps::unbounded(), None)
}

pub fn fixed_point_geometric_guarded(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    lambda: f64,
    cfg: &OracleConfig,
    caps: ProductCaps,
    deadline: Option<Instant>,
) -> Result<f64> {
    cfg.validate()?;
    let product = direct_product_capped(g1, g2, caps)?;
    if product.graph.n() == 0 {
        return Ok(0.0);
    }
    let measure = product.measure(m1, m2)?;
    let v = measure.v();
    let w = measure.w();
    let n = w.len();
    let mut x = w.to_vec();
    let mut ax = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_iterations {
        check_deadline(deadline)?;
        adjacency_apply(&product.graph, &x, &mut ax);
        change = 0.0;
        for i in 0..n {
            let next = w[i] + lambda * ax[i];
            change = change.max((next - x[i]).abs());
            x[i] = next;
        }
        if change <= cfg.tolerance {
            return Ok(dot(v, &x));
        }
    }
    Err(Error::IterationLimit { iterations: cfg.max_iterations, residual: change })
}

const TAG_NAIVE_T: u64 = 0x30;
const TAG_NAIVE_NEIGHBOR: u64 = 0x31;
const TAG_NAIVE_ANCHOR: u64 = 0x32;

/// Plain walk features computed directly on the materialized product graph:
/// the quadratic-cost estimator the factorized sampler improves on. Returns
/// `(v^T C)(D^T w)` with `C`, `D` built from independent walks over a shared
/// anchor list. Expected cost is O(N1 N2 r).
pub fn naive_product_grf(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    f: &[f64],
    walks_per_vertex: usize,
    anchor_count: Option<usize>,
    p_halt: f64,
    seed: u64,
) -> Result<f64> {
    naive_product_grf_guarded(
        g1, g2, m1, m2, f, walks_per_vertex, anchor_count, p_halt, seed,
        ProductCaps::unbounded(), None,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn naive_product_grf_guarded(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    f: &[f64],
    walks_per_vertex: usize,
    anchor_count: Option<usize>,
    p_halt: f64,
    seed: u64,
    caps: ProductCaps,
    deadline: Option<Instant>,
) -> Result<f64> {
    if walks_per_vertex == 0 {
        return Err(Error::NoWalkers);
    }
    if !(p_halt > 0.0 && p_halt < 1.0) {
        return Err(Error::InvalidProbability { name: "p_halt", value: p_halt });
    }
    let product = direct_product_capped(g1, g2, caps)?;
    let n = product.graph.n();
    if n == 0 {
        return Ok(0.0);
    }
    let measure = product.measure(m1, m2)?;

    let r = match anchor_count {
        None => n,
        Some(r) if r >= 1 && r <= n => r,
        Some(r) => return Err(Error::AnchorCount { r, n }),
    };
    let mut col_of = vec![-1i32; n];
    let anchors: Vec<u32> = if r == n {
        (0..n as u32).collect()
    } else {
        let mut ids: Vec<u32> = (0..n as u32).collect();
        for i in 0..r {
            let draw = StreamKey::new(seed, TAG_NAIVE_ANCHOR).push(i as u64).value();
            let j = i + (draw % (n - i) as u64) as usize;
            ids.swap(i, j);
        }
        ids.truncate(r);
        ids
    };
    for (col, &vtx) in anchors.iter().enumerate() {
        col_of[vtx as usize] = col as i32;
    }

    let truncation = f.len() - 1;
    let scale = (n as f64 / r as f64).sqrt() / walks_per_vertex as f64;
    let side = |role: u64, weights: &[f64]| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; r];
        for start in 0..n as u32 {
            if start % 1024 == 0 {
                check_deadline(deadline)?;
            }
            let weight = weights[start as usize];
            for w in 0..walks_per_vertex {
                let mut load = 1.0;
                let mut current = start;
                let mut l = 0usize;
                loop {
                    let col = col_of[current as usize];
                    if col >= 0 {
                        acc[col as usize] += weight * f[l] * load;
                    }
                    let t = StreamKey::new(seed, TAG_NAIVE_T)
                        .push(role)
                        .push(start as u64)
                        .push(w as u64)
                        .push(l as u64)
                        .uniform();
                    if t < p_halt {
                        break;
                    }
                    let degree = product.graph.degree(current);
                    if degree == 0 || l == truncation {
                        break;
                    }
                    let pick = StreamKey::new(seed, TAG_NAIVE_NEIGHBOR)
                        .push(role)
                        .push(start as u64)
                        .push(w as u64)
                        .push(l as u64)
                        .value() % degree as u64;
                    let next = product.graph.neighbors(current)[pick as usize];
                    load *= degree as f64 / (1.0 - p_halt);
                    current = next;
                    l += 1;
                }
            }
        }
        for a in acc.iter_mut() {
            *a *= scale;
        }
        Ok(acc)
    };

    let u = side(0xc, measure.v())?;
    let q = side(0xd, measure.w())?;
    Ok(dot(&u, &q))
}

/// Closed form for the K2/K2 geometric check: the product of two single
/// edges is two disjoint edges, where the uniform-measure kernel is
/// `1 / (4 (1 - lambda))`.
pub fn k2_pair_geometric_closed_form(lambda: f64) -> f64 {
    1.0 / (4.0 * (1.0 - lambda))
}

/// Measures and graph pair used around the tests: `(K2, K2)` with uniform
/// factors.
#[cfg(test)]
pub(crate) fn k2_pair() -> (Graph, Graph, MeasureVector, MeasureVector) {
    use crate::graph::{factorized_measure, MeasureKind};
    let k2 = Graph::from_edges(2, &[(0, 1)], None, None).unwrap();
    let m = factorized_measure(&k2, MeasureKind::Uniform).unwrap();
    (k2.clone(), k2, m.clone(), m)
}

/// The product graph the walk estimator never builds, exposed for reporting.
pub fn materialize_product(g1: &Graph, g2: &Graph, caps: ProductCaps) -> Result<ProductGraph> {
    direct_product_capped(g1, g2, caps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientScheme;
    use crate::graph::{erdos_renyi, factorized_measure, random_labels, MeasureKind};
    use crate::tape::derive_seed;

    #[test]
    fn delta_mu_on_single_vertices() {
        let g = Graph::from_edges(1, &[], None, None).unwrap();
        let m = factorized_measure(&g, MeasureKind::Ones).unwrap();
        let k = exact_rwk(&g, &g, &m, &m, &[1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn disjoint_alphabets_give_zero() {
        let g1 = Graph::from_edges(2, &[(0, 1)], Some(vec![1, 1]), Some(2)).unwrap();
        let g2 = Graph::from_edges(2, &[(0, 1)], Some(vec![2, 2]), Some(2)).unwrap();
        let m = factorized_measure(&g1, MeasureKind::Uniform).unwrap();
        assert_eq!(exact_rwk(&g1, &g2, &m, &m, &[1.0, 0.5], 1).unwrap(), 0.0);
        let cfg = OracleConfig::default();
        assert_eq!(cg_geometric(&g1, &g2, &m, &m, 0.1, &cfg).unwrap(), 0.0);
        assert_eq!(fixed_point_geometric(&g1, &g2, &m, &m, 0.1, &cfg).unwrap(), 0.0);
        assert_eq!(
            naive_product_grf(&g1, &g2, &m, &m, &[1.0, 0.0], 3, None, 0.5, 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn k2_pair_series_matches_closed_form() {
        let (g1, g2, m1, m2) = k2_pair();
        let scheme = CoefficientScheme::geometric(0.1, 40).unwrap();
        let k = exact_rwk(&g1, &g2, &m1, &m2, scheme.mu(), 40).unwrap();
        let want = k2_pair_geometric_closed_form(0.1);
        assert!((want - 0.2777777777777778).abs() < 1e-15);
        assert!((k - want).abs() < 1e-7, "series {k} vs closed form {want}");
    }

    #[test]
    fn cg_identity_system_at_lambda_zero() {
        let (g1, g2, m1, m2) = k2_pair();
        let cfg = OracleConfig { tolerance: 1e-12, ..OracleConfig::default() };
        let k = cg_geometric(&g1, &g2, &m1, &m2, 0.0, &cfg).unwrap();
        assert!((k - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cg_matches_closed_form_on_k2_pair() {
        let (g1, g2, m1, m2) = k2_pair();
        let cfg = OracleConfig { tolerance: 1e-10, ..OracleConfig::default() };
        let k = cg_geometric(&g1, &g2, &m1, &m2, 0.1, &cfg).unwrap();
        assert!((k - k2_pair_geometric_closed_form(0.1)).abs() < 1e-8);
    }

    #[test]
    fn fixed_point_converges_immediately_at_lambda_zero() {
        let (g1, g2, m1, m2) = k2_pair();
        let cfg = OracleConfig { max_iterations: 1, ..OracleConfig::default() };
        let k = fixed_point_geometric(&g1, &g2, &m1, &m2, 0.0, &cfg).unwrap();
        assert!((k - 0.25).abs() < 1e-12);
    }

    #[test]
    fn solvers_agree_with_deep_series_on_random_pairs() {
        for trial in 0..5u64 {
            let g1 = erdos_renyi(8, 0.4, derive_seed(500, trial), false).unwrap();
            let g2 = erdos_renyi(8, 0.5, derive_seed(600, trial), false).unwrap();
            let m1 = factorized_measure(&g1, MeasureKind::Uniform).unwrap();
            let m2 = factorized_measure(&g2, MeasureKind::Uniform).unwrap();
            let d_max = g1.max_degree().max(g2.max_degree()) as f64;
            let lambda = 1.0 / (d_max * d_max);
            let scheme = CoefficientScheme::geometric(lambda, 200).unwrap();
            let series = exact_rwk(&g1, &g2, &m1, &m2, scheme.mu(), 200).unwrap();
            let cfg = OracleConfig { tolerance: 1e-10, ..OracleConfig::default() };
            let cg = cg_geometric(&g1, &g2, &m1, &m2, lambda, &cfg).unwrap();
            let fp = fixed_point_geometric(&g1, &g2, &m1, &m2, lambda, &cfg).unwrap();
            assert!((series - cg).abs() < 1e-6, "trial {trial}: series {series} cg {cg}");
            assert!((cg - fp).abs() < 1e-6, "trial {trial}: cg {cg} fp {fp}");
        }
    }

    #[test]
    fn exact_rwk_symmetric_and_permutation_invariant() {
        let g1 = random_labels(&erdos_renyi(6, 0.5, 70, false).unwrap(), 2, 5, 0).unwrap();
        let g2 = random_labels(&erdos_renyi(5, 0.5, 71, false).unwrap(), 2, 5, 1).unwrap();
        let m1 = factorized_measure(&g1, MeasureKind::Uniform).unwrap();
        let m2 = factorized_measure(&g2, MeasureKind::Uniform).unwrap();
        let mu = CoefficientScheme::exponential(0.3, 30).unwrap();
        let a = exact_rwk(&g1, &g2, &m1, &m2, mu.mu(), 30).unwrap();
        let b = exact_rwk(&g2, &g1, &m2, &m1, mu.mu(), 30).unwrap();
        assert!((a - b).abs() < 1e-12);

        // permute g1's ids by reversal, carrying labels and measures along
        let n = g1.n() as u32;
        let mut edges = Vec::new();
        for v in 0..n {
            for &u in g1.neighbors(v) {
                if v < u {
                    edges.push((n - 1 - v, n - 1 - u));
                }
            }
        }
        let labels: Vec<u32> = (0..n).map(|v| g1.label(n - 1 - v)).collect();
        let permuted = Graph::from_edges(n as usize, &edges, Some(labels), Some(2)).unwrap();
        let c = exact_rwk(&permuted, &g2, &m1, &m2, mu.mu(), 30).unwrap();
        // uniform measure is permutation invariant
        assert!((a - c).abs() < 1e-12);
    }

    #[test]
    fn exact_rwk_monotone_in_truncation() {
        let (g1, g2, m1, m2) = k2_pair();
        let scheme = CoefficientScheme::geometric(0.3, 30).unwrap();
        let mut last = 0.0;
        for t in 0..=30 {
            let k = exact_rwk(&g1, &g2, &m1, &m2, &scheme.mu()[..=t], t).unwrap();
            assert!(k >= last - 1e-15, "t={t}: {k} < {last}");
            last = k;
        }
    }

    #[test]
    fn naive_grf_delta_mu_is_deterministic_dot() {
        let g1 = erdos_renyi(4, 0.5, 4, false).unwrap();
        let g2 = erdos_renyi(3, 0.8, 5, false).unwrap();
        let m1 = factorized_measure(&g1, MeasureKind::Uniform).unwrap();
        let m2 = factorized_measure(&g2, MeasureKind::Uniform).unwrap();
        let want = exact_rwk(&g1, &g2, &m1, &m2, &[1.0, 0.0], 1).unwrap();
        for seed in 0..5 {
            let got =
                naive_product_grf(&g1, &g2, &m1, &m2, &[1.0, 0.0], 1, None, 0.5, seed).unwrap();
            assert!((got - want).abs() < 1e-12, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn naive_grf_is_unbiased_on_k2_pair() {
        let (g1, g2, m1, m2) = k2_pair();
        let scheme = CoefficientScheme::geometric(0.1, 40).unwrap();
        let trials = 10_000u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for seed in 0..trials {
            let est =
                naive_product_grf(&g1, &g2, &m1, &m2, scheme.f(), 2, None, 0.5, seed).unwrap();
            sum += est;
            sum_sq += est * est;
        }
        let mean = sum / trials as f64;
        let var = (sum_sq - sum * sum / trials as f64) / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        let want = k2_pair_geometric_closed_form(0.1);
        assert!(
            (mean - want).abs() <= 3.0 * se,
            "mean {mean} vs {want} (se {se})"
        );
    }

    #[test]
    fn iteration_cap_reports_residual() {
        // non-uniform weights keep w off the Krylov shortcut of regular graphs
        let g = erdos_renyi(8, 0.4, 2, false).unwrap();
        let weights: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let m = factorized_measure(&g, MeasureKind::Custom(weights)).unwrap();
        let cfg = OracleConfig { max_iterations: 1, tolerance: 1e-14, ..OracleConfig::default() };
        let err = cg_geometric(&g, &g, &m, &m, 0.05, &cfg);
        assert!(matches!(err, Err(Error::IterationLimit { .. })));
    }

    #[test]
    fn caps_propagate() {
        let g = erdos_renyi(40, 0.3, 2, false).unwrap();
        let m = factorized_measure(&g, MeasureKind::Uniform).unwrap();
        let caps = ProductCaps { max_vertices: 10, max_edges: usize::MAX };
        let err = exact_rwk_guarded(&g, &g, &m, &m, &[1.0, 0.1], 1, caps, None);
        assert!(matches!(err, Err(Error::ProductTooLarge { .. })));
    }
}
