//! Quantitative checks of the estimator's theory: the McDiarmid-style
//! concentration bound for shared sign tapes, and the variance comparison
//! between Rademacher and Gaussian step signs.

use rayon::prelude::*;

use crate::coeffs::{convergence_constant, CoefficientScheme};
use crate::engine::{pair_estimate, pair_estimate_with_seeds, TapeSeeds, WalkConfig};
use crate::graph::{Graph, MeasureVector};
use crate::tape::{derive_seed, GDistribution, SharingMode};
use crate::{Error, Result};

/// Bounded-difference constant of the shared-tape estimator:
/// `k = 2 (4(2m-1)/m^2 + 4(2m-1)^2/m^4) c(G1)^2 c(G2)^2 |v1| |w1| |v2| |w2|`
/// with L1 norms of the measure factors.
pub fn mcdiarmid_constant(
    walks_per_vertex: usize,
    g1: &Graph,
    g2: &Graph,
    scheme: &CoefficientScheme,
    p_halt: f64,
    m1: &MeasureVector,
    m2: &MeasureVector,
) -> Result<f64> {
    if walks_per_vertex == 0 {
        return Err(Error::NoWalkers);
    }
    let c1 = convergence_constant(g1, scheme, p_halt)?;
    let c2 = convergence_constant(g2, scheme, p_halt)?;
    let m = walks_per_vertex as f64;
    let per_walk = 4.0 * (2.0 * m - 1.0) / (m * m) + 4.0 * (2.0 * m - 1.0).powi(2) / m.powi(4);
    let (v1, w1) = m1.l1_norms();
    let (v2, w2) = m2.l1_norms();
    Ok(2.0 * per_walk * c1 * c1 * c2 * c2 * v1 * w1 * v2 * w2)
}

/// Theoretical tail bound at deviation `epsilon`, clipped to 1.
pub fn concentration_bound(epsilon: f64, walks_per_vertex: usize, k_const: f64) -> f64 {
    let m = walks_per_vertex as f64;
    (2.0 * (-2.0 * epsilon * epsilon / (m * k_const * k_const)).exp()).min(1.0)
}

#[derive(Clone, Debug)]
pub struct ConcentrationReport {
    pub c1: f64,
    pub c2: f64,
    pub k_const: f64,
    pub epsilons: Vec<f64>,
    pub bound: Vec<f64>,
    pub empirical_tail: Vec<f64>,
    pub trials: usize,
    /// Pilot estimate of the conditional mean and its standard error.
    pub center: f64,
    pub center_se: f64,
}

/// Size of the pilot run that estimates the conditional mean, as a multiple
/// of `trials`.
const PILOT_FACTOR: usize = 10;

/// Empirical check of the shared-tape concentration bound. One draw of the
/// sign tapes is held fixed across all trials (as the bound conditions on);
/// each trial resamples only the walks and termination draws. The
/// conditional mean is estimated from a pilot run 10x the size of the study,
/// and a two-standard-error cushion on that estimate keeps centering error
/// from producing spurious exceedances.
pub fn concentration_study(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    trials: usize,
    epsilons: &[f64],
    seed: u64,
) -> Result<ConcentrationReport> {
    if cfg.sharing != SharingMode::SharedAcrossWalkers {
        return Err(Error::SharedTapesRequired);
    }
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let k_const = mcdiarmid_constant(cfg.walks_per_vertex, g1, g2, scheme, cfg.p_halt, m1, m2)?;
    let c1 = convergence_constant(g1, scheme, cfg.p_halt)?;
    let c2 = convergence_constant(g2, scheme, cfg.p_halt)?;

    let mut cfg = *cfg;
    cfg.embedding_dim = 1;
    let gz_seed = derive_seed(seed, 0x0261);
    let anchor_seed = derive_seed(seed, 0x0262);
    let trial_root = derive_seed(seed, 0x0263);
    let pilot_root = derive_seed(seed, 0x0264);

    let run = |root: u64, count: usize| -> Result<Vec<f64>> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let seeds = TapeSeeds {
                    gz_seed,
                    walk_seed: derive_seed(root, i as u64),
                    anchor_seed,
                };
                pair_estimate_with_seeds(g1, g2, m1, m2, scheme, &cfg, &seeds)
            })
            .collect()
    };

    let pilot = run(pilot_root, PILOT_FACTOR * trials)?;
    let pilot_n = pilot.len() as f64;
    let center = pilot.iter().sum::<f64>() / pilot_n;
    let pilot_var =
        pilot.iter().map(|x| (x - center) * (x - center)).sum::<f64>() / (pilot_n - 1.0);
    let center_se = (pilot_var / pilot_n).sqrt();

    let estimates = run(trial_root, trials)?;
    let cushion = 2.0 * center_se;
    let mut bound = Vec::with_capacity(epsilons.len());
    let mut empirical_tail = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        bound.push(concentration_bound(eps, cfg.walks_per_vertex, k_const));
        let exceed = estimates
            .iter()
            .filter(|&&x| (x - center).abs() >= eps + cushion)
            .count();
        empirical_tail.push(exceed as f64 / trials as f64);
    }

    Ok(ConcentrationReport {
        c1,
        c2,
        k_const,
        epsilons: epsilons.to_vec(),
        bound,
        empirical_tail,
        trials,
        center,
        center_se,
    })
}

#[derive(Clone, Debug)]
pub struct VarianceReport {
    pub distribution: GDistribution,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub trials: usize,
}

/// Sample mean and variance of independent single-block estimates under the
/// given step-sign distribution. Label signs stay Rademacher either way.
pub fn variance_study(
    g1: &Graph,
    g2: &Graph,
    m1: &MeasureVector,
    m2: &MeasureVector,
    scheme: &CoefficientScheme,
    cfg: &WalkConfig,
    distribution: GDistribution,
    trials: usize,
    seed: u64,
) -> Result<VarianceReport> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let mut cfg = *cfg;
    cfg.embedding_dim = 1;
    cfg.g_distribution = distribution;
    let estimates: Result<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| pair_estimate(g1, g2, m1, m2, scheme, &cfg, derive_seed(seed, i as u64)))
        .collect();
    let estimates = estimates?;
    let n = trials as f64;
    let sample_mean = estimates.iter().sum::<f64>() / n;
    let sample_variance = if trials > 1 {
        estimates.iter().map(|x| (x - sample_mean) * (x - sample_mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(VarianceReport { distribution, sample_mean, sample_variance, trials })
}
