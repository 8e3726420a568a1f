//! Error norms, posterior contraction, ill-posedness profiles and the
//! information-complexity characterization of Gibbs posteriors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, SieveCoefficients};
use crate::design::{Design, IllPosedness};
use crate::error::{Error, Result};
use crate::moments::EmpiricalMoments;
use crate::posterior::{PosteriorForm, PosteriorResult};
use crate::stats::{self, replication_rng};

/// Gaussian draws used by [`contraction_mass`] for exact posteriors.
pub const CONTRACTION_DRAWS: usize = 100_000;

/// Stream tag for ill-posedness profile replications.
pub const STUDY_ILLPOSEDNESS: u64 = 3;

/// `‖ĝ - g₀‖_{L²}` by Parseval: the in-sieve coefficient error plus the
/// truncation tail of `g₀`.
pub fn l2_error(b_est: &SieveCoefficients, design: &Design) -> f64 {
    let truth = design.true_coeffs();
    let inside: f64 = b_est
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, b)| (b - truth.get(i).copied().unwrap_or(0.0)).powi(2))
        .sum();
    let tail: f64 = truth.iter().skip(b_est.dim()).map(|b| b * b).sum();
    (inside + tail).sqrt()
}

/// Posterior mass outside the ball `‖b - center‖ ≤ radius`.
///
/// Exact Gaussian posteriors are integrated with [`CONTRACTION_DRAWS`] Monte
/// Carlo draws from `rng`; sampled posteriors use their own draws.
pub fn contraction_mass<R: Rng + ?Sized>(
    pr: &PosteriorResult,
    center: &SieveCoefficients,
    radius: f64,
    rng: &mut R,
) -> Result<f64> {
    if center.level() != pr.level() {
        return Err(Error::Dimension {
            expected: 1 << pr.level(),
            got: center.dim(),
        });
    }
    if !(radius >= 0.0) {
        return Err(Error::Config(format!(
            "radius must be nonnegative, got {radius}"
        )));
    }
    let owned;
    let draws = match &pr.form {
        PosteriorForm::ExactGaussian(law) => {
            owned = law.sample(CONTRACTION_DRAWS, rng);
            &owned
        }
        PosteriorForm::Mcmc(m) => &m.draws,
    };
    let r2 = radius * radius;
    let c = center.as_slice();
    let outside = draws
        .row_iter()
        .filter(|row| {
            let d2: f64 = row.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
            d2 > r2
        })
        .count();
    Ok(outside as f64 / draws.nrows() as f64)
}

/// Radius `M (2^{-Js} + τ_J⁻¹ √(2^J / n))` of the contraction ball.
pub fn contraction_radius(multiplier: f64, level: u32, smoothness: f64, tau: f64, n: usize) -> f64 {
    let d = (1u64 << level) as f64;
    multiplier * (d.powf(-smoothness) + (d / n as f64).sqrt() / tau)
}

/// Exponent of the minimax rate `n^{-s/(2r+2s+1)}` in the mildly ill-posed
/// case. The severely ill-posed rate `(log n)^{-s}` has no power-law
/// exponent, so `None` is returned there.
pub fn theoretical_exponent(kind: IllPosedness, smoothness: f64) -> Option<f64> {
    match kind {
        IllPosedness::Mild { r } => Some(-smoothness / (2.0 * r + 2.0 * smoothness + 1.0)),
        IllPosedness::Severe { .. } => None,
    }
}

/// Minimax rate `ε_{n,s,r}`.
pub fn minimax_rate(n: usize, kind: IllPosedness, smoothness: f64) -> f64 {
    let n = n as f64;
    match kind {
        IllPosedness::Mild { r } => n.powf(-smoothness / (2.0 * r + 2.0 * smoothness + 1.0)),
        IllPosedness::Severe { .. } => n.ln().powf(-smoothness),
    }
}

fn check_simplex(name: &str, w: &[f64]) -> Result<()> {
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Data(format!(
            "{name} weights must be nonnegative and finite"
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!("{name} weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Empirical information complexity of a candidate distribution on finitely
/// many atoms: expected loss plus `η⁻¹ KL(candidate ‖ prior)`.
pub fn info_complexity(losses: &[f64], prior: &[f64], candidate: &[f64], eta: f64) -> Result<f64> {
    let k = losses.len();
    for len in [prior.len(), candidate.len()] {
        if len != k {
            return Err(Error::Dimension {
                expected: k,
                got: len,
            });
        }
    }
    if !(eta > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {eta}"
        )));
    }
    check_simplex("prior", prior)?;
    check_simplex("candidate", candidate)?;
    let mut loss = 0.0;
    let mut kl = 0.0;
    for i in 0..k {
        let q = candidate[i];
        if q == 0.0 {
            continue;
        }
        if prior[i] == 0.0 {
            return Err(Error::AbsoluteContinuity { atom: i, mass: q });
        }
        loss += q * losses[i];
        kl += q * (q / prior[i]).ln();
    }
    Ok(loss + kl / eta)
}

/// Gibbs weights `∝ prior_k exp(-η loss_k)`, computed in log space.
pub fn gibbs_weights(losses: &[f64], prior: &[f64], eta: f64) -> Result<Vec<f64>> {
    if prior.len() != losses.len() {
        return Err(Error::Dimension {
            expected: losses.len(),
            got: prior.len(),
        });
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be nonnegative, got {eta}"
        )));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Data("losses must be finite".into()));
    }
    check_simplex("prior", prior)?;
    if eta == 0.0 {
        return Ok(prior.to_vec());
    }
    let logs: Vec<f64> = losses
        .iter()
        .zip(prior)
        .map(|(l, p)| {
            if *p > 0.0 {
                p.ln() - eta * l
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|v| v / total).collect())
}

/// One `(n, J)` cell of an ill-posedness profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllposednessRow {
    pub n: usize,
    pub level: u32,
    pub tau: f64,
    pub median_tau_hat: f64,
    pub iqr_tau_hat: f64,
    /// Fraction of replications with `τ̂_J < τ_J / 2`.
    pub margin_failure_rate: f64,
    /// Set when the margin fails in more than 20% of replications.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllposednessProfile {
    pub replications: usize,
    pub rows: Vec<IllposednessRow>,
}

/// Compares the empirical `τ̂_J` against `τ_J` over a grid of sample sizes
/// and levels. One fresh sample per `(n, replication)` serves every level.
pub fn illposedness_profile(
    design: &Design,
    basis: &Basis,
    sample_sizes: &[usize],
    levels: &[u32],
    replications: usize,
    seed: u64,
) -> Result<IllposednessProfile> {
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let taus: Vec<f64> = levels
        .iter()
        .map(|&j| design.true_tau(j))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..sample_sizes.len())
        .flat_map(|i| (0..replications).map(move |r| (i, r)))
        .collect();
    let tau_hats: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let mut rng = replication_rng(seed, STUDY_ILLPOSEDNESS, i, r);
            let sample = design.sample(sample_sizes[i], &mut rng);
            levels
                .iter()
                .map(|&j| EmpiricalMoments::from_sample(&sample, basis, j).map(|em| em.tau_hat()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(sample_sizes.len() * levels.len());
    for (i, &n) in sample_sizes.iter().enumerate() {
        for (k, &level) in levels.iter().enumerate() {
            let vals: Vec<f64> = (0..replications)
                .map(|r| tau_hats[i * replications + r][k])
                .collect();
            let tau = taus[k];
            let fails = vals.iter().filter(|v| **v < tau / 2.0).count();
            let rate = fails as f64 / replications as f64;
            rows.push(IllposednessRow {
                n,
                level,
                tau,
                median_tau_hat: stats::median(&vals),
                iqr_tau_hat: stats::iqr(&vals),
                margin_failure_rate: rate,
                flagged: rate > 0.2,
            });
        }
    }
    Ok(IllposednessProfile { replications, rows })
}

/// One sample size in a rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub level: u32,
    pub median_error: f64,
    pub iqr_error: f64,
    pub tau: f64,
    pub median_tau_hat: f64,
    /// `τ̂ ≥ τ/2` failed in more than 20% of replications.
    pub margin_flag: bool,
    pub contraction_radius: f64,
    pub median_contraction_mass: f64,
}

/// Log-log regression of median `L²` error on `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub replications: usize,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub slope_se: f64,
    pub theoretical_slope: Option<f64>,
    /// Smallest `n`, when it was left out of the regression for a failed
    /// ill-posedness margin.
    pub dropped_n: Option<usize>,
}

impl RateReport {
    /// Fits the slope over `points`, dropping the first point when its
    /// margin flag is set and at least three points remain.
    pub fn from_points(
        points: Vec<RatePoint>,
        replications: usize,
        theoretical_slope: Option<f64>,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config(
                "rate study needs at least two sample sizes".into(),
            ));
        }
        if points.windows(2).any(|w| w[1].n <= w[0].n) {
            return Err(Error::Config(
                "rate study sample sizes must increase".into(),
            ));
        }
        let dropped_n = (points[0].margin_flag && points.len() > 3).then(|| points[0].n);
        let used = &points[usize::from(dropped_n.is_some())..];
        let lx: Vec<f64> = used.iter().map(|p| (p.n as f64).ln()).collect();
        let ly: Vec<f64> = used.iter().map(|p| p.median_error.ln()).collect();
        let fit = stats::fit_line(&lx, &ly);
        Ok(Self {
            replications,
            points,
            slope: fit.slope,
            slope_se: fit.slope_se,
            theoretical_slope,
            dropped_n,
        })
    }
}
