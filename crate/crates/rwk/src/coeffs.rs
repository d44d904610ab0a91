//! Kernel coefficient sequences and their square-root factorization.
//!
//! A kernel is written as a power series in the product-graph adjacency
//! matrix with coefficients `mu_0..mu_T`. The walk sampler needs the
//! discrete deconvolution `f` of `mu` (`sum_p f_p f_{k-p} = mu_k`); each walk
//! deposit carries `sqrt(f_l)` so that products of two independent feature
//! copies reconstruct `mu` in expectation.

use crate::graph::Graph;
use crate::tape::StreamKey;
use crate::{Error, Result};

/// How far below zero a deconvolved coefficient may fall before the sequence
/// is rejected as unrepresentable under the nonnegativity restriction.
const NEGATIVITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchemeKind {
    Geometric { lambda: f64 },
    Exponential { lambda: f64 },
    Custom,
}

/// A truncated coefficient sequence together with its deconvolution.
///
/// Only schemes with nonnegative `f` are representable; complex-valued
/// factorizations are rejected at construction time.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientScheme {
    kind: SchemeKind,
    mu: Vec<f64>,
    f: Vec<f64>,
}

impl CoefficientScheme {
    /// Build from an explicit `mu` sequence by running the deconvolution.
    pub fn from_mu(mu: Vec<f64>) -> Result<CoefficientScheme> {
        let f = deconvolve(&mu)?;
        Ok(CoefficientScheme { kind: SchemeKind::Custom, mu, f })
    }

    /// Geometric kernel `mu_k = lambda^k`, whose deconvolution is
    /// `f_k = lambda^k * binomial(2k, k) / 4^k`.
    pub fn geometric(lambda: f64, truncation: usize) -> Result<CoefficientScheme> {
        if !(lambda > 0.0) {
            return Err(Error::NonpositiveRate { lambda });
        }
        if truncation < 1 {
            return Err(Error::TruncationTooSmall);
        }
        let mut mu = Vec::with_capacity(truncation + 1);
        let mut f = Vec::with_capacity(truncation + 1);
        mu.push(1.0);
        f.push(1.0);
        for k in 1..=truncation {
            mu.push(mu[k - 1] * lambda);
            f.push(f[k - 1] * lambda * (2.0 * k as f64 - 1.0) / (2.0 * k as f64));
        }
        Ok(CoefficientScheme { kind: SchemeKind::Geometric { lambda }, mu, f })
    }

    /// Exponential kernel `mu_k = lambda^k / k!`, whose deconvolution is
    /// `f_k = lambda^k / (2^k k!)`.
    pub fn exponential(lambda: f64, truncation: usize) -> Result<CoefficientScheme> {
        if !(lambda > 0.0) {
            return Err(Error::NonpositiveRate { lambda });
        }
        if truncation < 1 {
            return Err(Error::TruncationTooSmall);
        }
        let mut mu = Vec::with_capacity(truncation + 1);
        let mut f = Vec::with_capacity(truncation + 1);
        mu.push(1.0);
        f.push(1.0);
        for k in 1..=truncation {
            mu.push(mu[k - 1] * lambda / k as f64);
            f.push(f[k - 1] * lambda / (2.0 * k as f64));
        }
        Ok(CoefficientScheme { kind: SchemeKind::Exponential { lambda }, mu, f })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn truncation(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn sqrt_f(&self) -> Vec<f64> {
        self.f.iter().map(|x| x.sqrt()).collect()
    }

    /// Stable digest of the scheme contents, used in embedding provenance.
    pub fn digest(&self) -> u64 {
        let tag = match self.kind {
            SchemeKind::Geometric { .. } => 1u64,
            SchemeKind::Exponential { .. } => 2,
            SchemeKind::Custom => 3,
        };
        let mut key = StreamKey::new(0x5eed_c0ef, tag).push(self.truncation() as u64);
        for &m in &self.mu {
            key = key.push(m.to_bits());
        }
        key.value()
    }
}

/// Square-root deconvolution of a coefficient sequence: returns `f` with
/// `sum_{p=0..k} f_p f_{k-p} = mu_k` for all `k`, choosing the positive root
/// `f_0 = sqrt(mu_0)`.
pub fn deconvolve(mu: &[f64]) -> Result<Vec<f64>> {
    let first = *mu.first().ok_or(Error::TruncationTooSmall)?;
    if !(first > 0.0) {
        return Err(Error::NonpositiveLeadingCoefficient { mu0: first });
    }
    let mut f = Vec::with_capacity(mu.len());
    f.push(first.sqrt());
    for k in 1..mu.len() {
        let mut cross = 0.0;
        for p in 1..k {
            cross += f[p] * f[k - p];
        }
        let fk = (mu[k] - cross) / (2.0 * f[0]);
        if fk < -NEGATIVITY_SLACK {
            return Err(Error::NegativeModulation { index: k, value: fk });
        }
        f.push(fk.max(0.0));
    }
    Ok(f)
}

/// Convolution `f * f`, the inverse of [`deconvolve`]. Test oracle for the
/// factorization identity.
pub fn reconvolve(f: &[f64]) -> Vec<f64> {
    (0..f.len())
        .map(|k| (0..=k).map(|p| f[p] * f[k - p]).sum())
        .collect()
}

/// Parse a scheme spec string: `geometric:<lambda>`, `exponential:<lambda>`,
/// or `custom:<path>` where the file holds whitespace-separated `mu`
/// coefficients (truncated or padded to `truncation + 1` terms is the
/// caller's concern; the file length wins for custom schemes).
pub fn parse_scheme(spec: &str, truncation: usize) -> Result<CoefficientScheme> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidSchemeSpec(format!("`{spec}` has no `:`")))?;
    match kind {
        "geometric" | "exponential" => {
            let lambda: f64 = arg
                .parse()
                .map_err(|_| Error::InvalidSchemeSpec(format!("bad rate `{arg}`")))?;
            if kind == "geometric" {
                CoefficientScheme::geometric(lambda, truncation)
            } else {
                CoefficientScheme::exponential(lambda, truncation)
            }
        }
        "custom" => {
            let mu = crate::dataset::load_mu_file(std::path::Path::new(arg))?;
            CoefficientScheme::from_mu(mu)
        }
        other => Err(Error::InvalidSchemeSpec(format!("unknown scheme kind `{other}`"))),
    }
}

/// Tail window length for the divergence heuristic.
const DIVERGENCE_WINDOW: usize = 5;

/// Convergence constant of the concentration bound:
/// `c(G) = sum_l sqrt(|f_l|) * (max_degree / sqrt(1 - p_halt))^l`.
///
/// The series is evaluated at the scheme's truncation; divergence is flagged
/// heuristically when every one of the last [`DIVERGENCE_WINDOW`] consecutive
/// term ratios is at least 1.
pub fn convergence_constant(
    graph: &Graph,
    scheme: &CoefficientScheme,
    p_halt: f64,
) -> Result<f64> {
    if !(p_halt > 0.0 && p_halt < 1.0) {
        return Err(Error::InvalidProbability { name: "p_halt", value: p_halt });
    }
    let rho = graph.max_degree() as f64 / (1.0 - p_halt).sqrt();
    let terms: Vec<f64> = scheme
        .f()
        .iter()
        .enumerate()
        .map(|(l, &fl)| fl.abs().sqrt() * rho.powi(l as i32))
        .collect();

    let ratios: Vec<f64> = terms
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let window = ratios.len().min(DIVERGENCE_WINDOW);
    if window == DIVERGENCE_WINDOW && ratios[ratios.len() - window..].iter().all(|&r| r >= 1.0) {
        let last = ratios[ratios.len() - 1];
        return Err(Error::DivergentSeries { ratio: last });
    }
    Ok(terms.iter().sum())
}
