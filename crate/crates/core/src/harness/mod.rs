//! Experiment orchestration: fitting, the rate, BvM and ill-posedness
//! studies, and report persistence.
//!
//! Every study is a pure function of its configuration. Replication `r` at
//! grid point `i` draws from [`replication_rng`]`(seed, study, i, r)`, runs in
//! parallel, and results are reduced in `(n, r)` order.

pub mod cli;
pub mod config;
pub mod io;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, contraction_mass, contraction_radius, l2_error, theoretical_exponent,
    IllposednessProfile, RatePoint, RateReport,
};
use crate::basis::Basis;
use crate::design::{AssumptionReport, Design, Sample};
use crate::error::{Error, Result};
use crate::moments::EmpiricalMoments;
use crate::posterior::{
    bvm_approx, exact_posterior, gaussian_kl, mde, quasi_bayes, rwm_sample, ChainDiagnostics,
    GaussianLaw, PosteriorForm, PosteriorResult,
};
use crate::priors::{Prior, PriorFamily};
use crate::stats::{self, replication_rng};

pub use config::{choose_level, ExperimentConfig, StudyGrid};
pub use io::{load_csv, save_report, write_sample_csv, Tabular};

/// Stream tag for the single sample behind `simulate` and synthetic `fit`.
pub const STUDY_SAMPLE: u64 = 0;
pub const STUDY_RATE: u64 = 1;
pub const STUDY_BVM: u64 = 2;

/// Two-sided 95% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

/// Quasi-posterior for `config.prior`: closed form for Gaussian priors,
/// random-walk Metropolis otherwise.
pub fn posterior_for(
    em: &EmpiricalMoments,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<PosteriorResult> {
    let prior = Prior::new(config.prior, em.level())?;
    match config.prior {
        PriorFamily::GaussianProduct { .. } => exact_posterior(em, &prior, config.eta),
        _ => {
            let mut sampler = config.sampler.clone();
            sampler.eta = config.eta;
            sampler.seed = seed;
            rwm_sample(em, &prior, &sampler)
        }
    }
}

/// Mean and covariance of a posterior, exact or from its draws.
fn posterior_moments(pr: &PosteriorResult) -> Result<GaussianLaw> {
    match &pr.form {
        PosteriorForm::ExactGaussian(law) => Ok(law.clone()),
        PosteriorForm::Mcmc(m) => {
            let n = m.draws.nrows() as f64;
            let mean = m.draws.row_mean().transpose();
            let centred =
                &m.draws - nalgebra::DMatrix::from_fn(m.draws.nrows(), mean.len(), |_, j| mean[j]);
            let mut cov = centred.transpose() * &centred / (n - 1.0);
            cov = (&cov + cov.transpose()) * 0.5;
            GaussianLaw::new(mean, cov)
        }
    }
}

/// Ground-truth comparison attached to fits of synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTruth {
    pub coeffs: Vec<f64>,
    pub tau: f64,
    pub l2_error_qb: f64,
    pub l2_error_mde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub level: u32,
    pub basis: crate::basis::BasisKind,
    pub prior: PriorFamily,
    pub eta: f64,
    pub seed: u64,
    pub em_fingerprint: String,
    pub tau_hat: f64,
    pub qb: Vec<f64>,
    pub mde: Vec<f64>,
    pub mde_rank: usize,
    /// Quasi-posterior mean and covariance.
    pub posterior: GaussianLaw,
    /// Gaussian limit `N(b̂, n⁻¹ Φ̂_WX⁻¹ Φ̂_WW Φ̂_WX⁻ᵀ)`.
    pub bvm: GaussianLaw,
    /// Marginal 95% credible bounds.
    pub credible_lower: Vec<f64>,
    pub credible_upper: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<ChainDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<FitTruth>,
}

/// Moments, posterior, quasi-Bayes and minimum-distance estimates and the
/// BvM law for one data set. Truth is reported when `config` has a design.
pub fn run_fit(config: &ExperimentConfig, data: &Sample) -> Result<FitReport> {
    let design = config.design.as_ref().map(|d| d.build()).transpose()?;
    let level = config.level_for(data.len(), design.as_ref())?;
    let basis = Basis::new(config.basis);
    let em = EmpiricalMoments::from_sample(data, &basis, level)?;
    let pr = posterior_for(&em, config, config.seed)?;
    let qb = quasi_bayes(&pr);
    let mde_est = mde(&em);
    let bvm = bvm_approx(&em)?;
    let posterior = posterior_moments(&pr)?;

    let d = em.dim();
    let (credible_lower, credible_upper): (Vec<f64>, Vec<f64>) = match &pr.form {
        PosteriorForm::ExactGaussian(law) => (0..d)
            .map(|k| {
                let h = Z_975 * law.marginal_sd(k);
                (law.mean()[k] - h, law.mean()[k] + h)
            })
            .unzip(),
        PosteriorForm::Mcmc(m) => (0..d)
            .map(|k| {
                let col = m.column(k);
                (stats::quantile(&col, 0.025), stats::quantile(&col, 0.975))
            })
            .unzip(),
    };

    let truth = match &design {
        Some(design) => Some(FitTruth {
            coeffs: design.truncated_coeffs(level)?.as_slice().to_vec(),
            tau: design.true_tau(level)?,
            l2_error_qb: l2_error(&qb, design),
            l2_error_mde: l2_error(&mde_est.coeffs, design),
        }),
        None => None,
    };

    Ok(FitReport {
        n: data.len(),
        level,
        basis: config.basis,
        prior: config.prior,
        eta: config.eta,
        seed: config.seed,
        em_fingerprint: em.fingerprint(),
        tau_hat: em.tau_hat(),
        qb: qb.as_slice().to_vec(),
        mde: mde_est.coeffs.as_slice().to_vec(),
        mde_rank: mde_est.rank,
        posterior,
        bvm,
        credible_lower,
        credible_upper,
        diagnostics: pr.mcmc().map(|m| m.diagnostics.clone()),
        truth,
    })
}

impl Tabular for FitReport {
    fn header(&self) -> Vec<String> {
        let mut h = [
            "index",
            "qb",
            "mde",
            "posterior_sd",
            "lower",
            "upper",
            "bvm_sd",
        ]
        .map(String::from)
        .to_vec();
        if self.truth.is_some() {
            h.push("truth".into());
        }
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        (0..self.qb.len())
            .map(|k| {
                let mut row = vec![
                    k.to_string(),
                    self.qb[k].to_string(),
                    self.mde[k].to_string(),
                    self.posterior.marginal_sd(k).to_string(),
                    self.credible_lower[k].to_string(),
                    self.credible_upper[k].to_string(),
                    self.bvm.marginal_sd(k).to_string(),
                ];
                if let Some(t) = &self.truth {
                    row.push(t.coeffs[k].to_string());
                }
                row
            })
            .collect()
    }
}

/// Sample drawn by `simulate` and by `fit` on a synthetic design.
pub fn simulate_sample(config: &ExperimentConfig, design: &Design) -> Result<(Sample, usize)> {
    let n = config
        .n
        .ok_or_else(|| Error::Config("set `n`, the sample size to simulate".into()))?;
    if n == 0 {
        return Err(Error::Config("`n` must be positive".into()));
    }
    let mut rng = replication_rng(config.seed, STUDY_SAMPLE, 0, 0);
    Ok(design.sample_with_proposals(n, &mut rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub seed: u64,
    pub proposals: usize,
    pub acceptance_rate: f64,
    pub density_bound: f64,
    pub true_coeffs: Vec<f64>,
    pub assumptions: AssumptionReport,
}

/// Draws the configured sample and checks the design's assumptions.
pub fn run_simulate(config: &ExperimentConfig) -> Result<(SimulationReport, Sample)> {
    let design = config.build_design()?;
    let (sample, proposals) = simulate_sample(config, &design)?;
    let max_level = (usize::BITS - 1 - (design.modes() + 1).leading_zeros()).min(config.j_cap);
    let report = SimulationReport {
        n: sample.len(),
        seed: config.seed,
        proposals,
        acceptance_rate: sample.len() as f64 / proposals as f64,
        density_bound: design.density_bound(),
        true_coeffs: design.true_coeffs().to_vec(),
        assumptions: design.validate_assumptions(max_level),
    };
    Ok((report, sample))
}

impl Tabular for SimulationReport {
    fn header(&self) -> Vec<String> {
        ["assumption", "passed", "detail"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.assumptions
            .checks
            .iter()
            .map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()])
            .collect()
    }
}

fn replication_jobs(grid: &StudyGrid) -> Vec<(usize, usize)> {
    (0..grid.n_values.len())
        .flat_map(|i| (0..grid.replications).map(move |r| (i, r)))
        .collect()
}

struct RateOutcome {
    error: f64,
    tau_hat: f64,
    mass: f64,
}

/// Median `L²` error of the quasi-Bayes estimate across the `n` grid, its
/// log-log slope, and posterior mass outside the contraction ball.
pub fn run_rate_study(config: &ExperimentConfig) -> Result<RateReport> {
    let design = config.build_design()?;
    let grid = config.study_grid()?;
    let basis = Basis::new(config.basis);
    let levels: Vec<u32> = grid
        .n_values
        .iter()
        .map(|&n| config.level_for(n, Some(&design)))
        .collect::<Result<_>>()?;
    let taus: Vec<f64> = levels
        .iter()
        .map(|&j| design.true_tau(j))
        .collect::<Result<_>>()?;
    let radii: Vec<f64> = grid
        .n_values
        .iter()
        .zip(&levels)
        .zip(&taus)
        .map(|((&n, &j), &tau)| {
            contraction_radius(
                config.contraction_multiplier,
                j,
                design.smoothness(),
                tau,
                n,
            )
        })
        .collect();

    let outcomes: Vec<RateOutcome> = replication_jobs(grid)
        .par_iter()
        .map(|&(i, r)| {
            let mut rng = replication_rng(config.seed, STUDY_RATE, i, r);
            let sample = design.sample(grid.n_values[i], &mut rng);
            let em = EmpiricalMoments::from_sample(&sample, &basis, levels[i])?;
            let pr = posterior_for(&em, config, rng.random())?;
            let center = design.truncated_coeffs(levels[i])?;
            Ok(RateOutcome {
                error: l2_error(&quasi_bayes(&pr), &design),
                tau_hat: em.tau_hat(),
                mass: contraction_mass(&pr, &center, radii[i], &mut rng)?,
            })
        })
        .collect::<Result<_>>()?;

    let reps = grid.replications;
    let points = grid
        .n_values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let chunk = &outcomes[i * reps..(i + 1) * reps];
            let errors: Vec<f64> = chunk.iter().map(|o| o.error).collect();
            let tau_hats: Vec<f64> = chunk.iter().map(|o| o.tau_hat).collect();
            let masses: Vec<f64> = chunk.iter().map(|o| o.mass).collect();
            let fails = tau_hats.iter().filter(|t| **t < taus[i] / 2.0).count();
            RatePoint {
                n,
                level: levels[i],
                median_error: stats::median(&errors),
                iqr_error: stats::iqr(&errors),
                tau: taus[i],
                median_tau_hat: stats::median(&tau_hats),
                margin_flag: fails as f64 / reps as f64 > 0.2,
                contraction_radius: radii[i],
                median_contraction_mass: stats::median(&masses),
            }
        })
        .collect();
    RateReport::from_points(
        points,
        reps,
        theoretical_exponent(design.kind(), design.smoothness()),
    )
}

impl Tabular for RateReport {
    fn header(&self) -> Vec<String> {
        [
            "n",
            "level",
            "median_error",
            "iqr_error",
            "tau",
            "median_tau_hat",
            "margin_flag",
            "contraction_radius",
            "median_contraction_mass",
        ]
        .map(String::from)
        .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .map(|p| {
                vec![
                    p.n.to_string(),
                    p.level.to_string(),
                    p.median_error.to_string(),
                    p.iqr_error.to_string(),
                    p.tau.to_string(),
                    p.median_tau_hat.to_string(),
                    p.margin_flag.to_string(),
                    p.contraction_radius.to_string(),
                    p.median_contraction_mass.to_string(),
                ]
            })
            .collect()
    }
}

/// Discrepancy between the quasi-posterior and its Gaussian limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BvmMetric {
    /// `KL(posterior ‖ limit)` for closed-form posteriors.
    Kl,
    /// Largest per-coordinate Kolmogorov–Smirnov distance of the draws.
    Ks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvmPoint {
    pub n: usize,
    pub level: u32,
    pub median: f64,
    pub iqr: f64,
    /// Median Pinsker bound on total variation (KL metric only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_tv_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvmReport {
    pub metric: BvmMetric,
    pub replications: usize,
    pub points: Vec<BvmPoint>,
    /// Medians never increase along the `n` grid.
    pub nonincreasing: bool,
    /// Median at the smallest `n` over the median at the largest.
    pub first_to_last_ratio: f64,
}

/// Distance between the quasi-posterior and the BvM law across the `n` grid.
pub fn run_bvm_study(config: &ExperimentConfig) -> Result<BvmReport> {
    let design = config.build_design()?;
    let grid = config.study_grid()?;
    let basis = Basis::new(config.basis);
    let metric = match config.prior {
        PriorFamily::GaussianProduct { .. } => BvmMetric::Kl,
        _ => BvmMetric::Ks,
    };
    let levels: Vec<u32> = grid
        .n_values
        .iter()
        .map(|&n| config.level_for(n, Some(&design)))
        .collect::<Result<_>>()?;

    let outcomes: Vec<(f64, f64)> = replication_jobs(grid)
        .par_iter()
        .map(|&(i, r)| {
            let mut rng = replication_rng(config.seed, STUDY_BVM, i, r);
            let sample = design.sample(grid.n_values[i], &mut rng);
            let em = EmpiricalMoments::from_sample(&sample, &basis, levels[i])?;
            let pr = posterior_for(&em, config, rng.random())?;
            let limit = bvm_approx(&em)?;
            match &pr.form {
                PosteriorForm::ExactGaussian(law) => {
                    let kl = gaussian_kl(law, &limit)?;
                    Ok((kl.kl, kl.tv_bound))
                }
                PosteriorForm::Mcmc(m) => {
                    let ks = (0..em.dim())
                        .map(|k| stats::ks_statistic(&m.column(k), |x| limit.marginal_cdf(k, x)))
                        .fold(0.0, f64::max);
                    Ok((ks, f64::NAN))
                }
            }
        })
        .collect::<Result<_>>()?;

    let reps = grid.replications;
    let points: Vec<BvmPoint> = grid
        .n_values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let chunk = &outcomes[i * reps..(i + 1) * reps];
            let values: Vec<f64> = chunk.iter().map(|o| o.0).collect();
            let tv: Vec<f64> = chunk.iter().map(|o| o.1).collect();
            BvmPoint {
                n,
                level: levels[i],
                median: stats::median(&values),
                iqr: stats::iqr(&values),
                median_tv_bound: (metric == BvmMetric::Kl).then(|| stats::median(&tv)),
            }
        })
        .collect();
    let nonincreasing = points.windows(2).all(|w| w[1].median <= w[0].median);
    let first_to_last_ratio = points[0].median / points[points.len() - 1].median;
    Ok(BvmReport {
        metric,
        replications: reps,
        points,
        nonincreasing,
        first_to_last_ratio,
    })
}

impl Tabular for BvmReport {
    fn header(&self) -> Vec<String> {
        let metric = match self.metric {
            BvmMetric::Kl => "kl",
            BvmMetric::Ks => "ks",
        };
        vec![
            "n".into(),
            "level".into(),
            format!("median_{metric}"),
            format!("iqr_{metric}"),
            "median_tv_bound".into(),
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .map(|p| {
                vec![
                    p.n.to_string(),
                    p.level.to_string(),
                    p.median.to_string(),
                    p.iqr.to_string(),
                    p.median_tv_bound.map(|v| v.to_string()).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

/// Ill-posedness profile over the study grid. Levels default to every `J`
/// with `2^J ≤ L + 1`, capped at `j_cap`.
pub fn run_illposedness(config: &ExperimentConfig) -> Result<IllposednessProfile> {
    let design = config.build_design()?;
    let grid = config.study_grid()?;
    let levels: Vec<u32> = if grid.levels.is_empty() {
        let max = (usize::BITS - 1 - (design.modes() + 1).leading_zeros()).min(config.j_cap);
        (0..=max).collect()
    } else {
        grid.levels.clone()
    };
    analysis::illposedness_profile(
        &design,
        &Basis::new(config.basis),
        &grid.n_values,
        &levels,
        grid.replications,
        config.seed,
    )
}

impl Tabular for IllposednessProfile {
    fn header(&self) -> Vec<String> {
        [
            "n",
            "level",
            "tau",
            "median_tau_hat",
            "iqr_tau_hat",
            "margin_failure_rate",
            "flagged",
        ]
        .map(String::from)
        .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.level.to_string(),
                    r.tau.to_string(),
                    r.median_tau_hat.to_string(),
                    r.iqr_tau_hat.to_string(),
                    r.margin_failure_rate.to_string(),
                    r.flagged.to_string(),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignSpec;

    fn base() -> ExperimentConfig {
        let mut c =
            ExperimentConfig::synthetic(DesignSpec::mild(1.0, 2.0, 20, 0.1).with_errors(0.1, 0.15));
        c.n = Some(2000);
        c.seed = 5;
        c
    }

    #[test]
    fn noiseless_in_sieve_fit_is_exact() {
        let mut config = base();
        config.design = Some(DesignSpec::mild(1.0, 2.0, 3, 0.1));
        config.level = Some(2);
        let design = config.build_design().unwrap();
        let (sample, _) = simulate_sample(&config, &design).unwrap();
        let report = run_fit(&config, &sample).unwrap();
        assert!(report.truth.unwrap().l2_error_mde < 1e-6);
    }

    #[test]
    fn flat_prior_fit_matches_mde() {
        let mut config = base();
        config.prior = PriorFamily::GaussianProduct { sigma: 1e6 };
        let design = config.build_design().unwrap();
        let (sample, _) = simulate_sample(&config, &design).unwrap();
        let report = run_fit(&config, &sample).unwrap();
        for (q, m) in report.qb.iter().zip(&report.mde) {
            assert!((q - m).abs() <= 1e-3 * m.abs().max(1e-3), "{q} vs {m}");
        }
        assert_eq!(run_fit(&config, &sample).unwrap(), report);
    }

    #[test]
    fn sampled_fit_reports_diagnostics() {
        let mut config = base();
        config.level = Some(1);
        config.prior = PriorFamily::LaplaceProduct { lambda: 1.0 };
        config.sampler.n_draws = 4000;
        config.sampler.burn_in = 1000;
        let design = config.build_design().unwrap();
        let (sample, _) = simulate_sample(&config, &design).unwrap();
        let report = run_fit(&config, &sample).unwrap();
        let diag = report.diagnostics.as_ref().unwrap();
        assert!(diag.acceptance_rate > 0.1 && diag.acceptance_rate < 0.5);
        for k in 0..2 {
            assert!(
                report.credible_lower[k] < report.qb[k] && report.qb[k] < report.credible_upper[k]
            );
        }
    }

    #[test]
    fn real_data_needs_explicit_level() {
        let mut config = base();
        config.design = None;
        let sample = Sample::new(
            vec![1.0; 4],
            vec![0.1, 0.4, 0.6, 0.9],
            vec![0.2, 0.3, 0.7, 0.8],
        )
        .unwrap();
        assert!(matches!(run_fit(&config, &sample), Err(Error::Config(_))));
    }

    #[test]
    fn small_studies_are_deterministic() {
        let mut config = base();
        config.study = Some(StudyGrid {
            n_values: vec![300, 600, 1200],
            replications: 4,
            levels: vec![],
        });
        let a = run_rate_study(&config).unwrap();
        assert_eq!(a.points.len(), 3);
        assert_eq!(a.theoretical_slope, Some(-2.0 / 7.0));
        assert_eq!(run_rate_study(&config).unwrap(), a);
        let b = run_bvm_study(&config).unwrap();
        assert_eq!(b.metric, BvmMetric::Kl);
        assert_eq!(run_bvm_study(&config).unwrap(), b);
        let p = run_illposedness(&config).unwrap();
        assert_eq!(p.rows.len(), 3 * 5);
    }

    #[test]
    fn flat_prior_kl_vanishes() {
        // σ → ∞ recovers the Gaussian limit exactly
        let mut config = base();
        config.level = Some(2);
        let design = config.build_design().unwrap();
        let (sample, _) = simulate_sample(&config, &design).unwrap();
        let em = EmpiricalMoments::from_sample(&sample, &Basis::cosine(), 2).unwrap();
        let limit = bvm_approx(&em).unwrap();
        let kls: Vec<f64> = [1.0, 10.0, 100.0, 1000.0]
            .iter()
            .map(|&sigma| {
                let law =
                    crate::posterior::conjugate_posterior(&em, &Prior::gaussian(sigma, 2).unwrap())
                        .unwrap();
                gaussian_kl(&law, &limit).unwrap().kl
            })
            .collect();
        assert!(kls.windows(2).all(|w| w[1] < w[0] / 50.0), "{kls:?}");
    }
}
