//! The quasi-posterior on sieve coefficients.
//!
//! The target density is `exp(2η · quasi_loglik(b)) π(b)`; the default
//! temperature `η = 1/2` recovers `exp(-(n/2) Eₙ[m̂²]) π(b)`. Because the log
//! quasi-likelihood is quadratic in `b`, a Gaussian product prior gives a
//! Gaussian posterior in closed form. Every other family is sampled with
//! random-walk Metropolis.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SieveCoefficients;
use crate::error::{Error, Result};
use crate::moments::{pinv_with_rank, symmetrize, EmpiricalMoments, DEFAULT_PINV_TOL};
use crate::priors::{Prior, PriorFamily};
use crate::stats;

/// Benchmark temperature.
pub const DEFAULT_ETA: f64 = 0.5;

/// `tau_hat` below this makes the plug-in BvM covariance unusable.
pub const DEFAULT_BVM_TAU_TOL: f64 = 1e-8;

/// Multivariate normal law with a validated covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct GaussianLaw {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<RawGaussian> for GaussianLaw {
    type Error = Error;

    fn try_from(raw: RawGaussian) -> Result<Self> {
        let d = raw.mean.len();
        if raw.covariance.len() != d || raw.covariance.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: raw.covariance.len(),
            });
        }
        let cov = DMatrix::from_fn(d, d, |i, j| raw.covariance[i][j]);
        GaussianLaw::new(DVector::from_vec(raw.mean), cov)
    }
}

impl From<GaussianLaw> for RawGaussian {
    fn from(law: GaussianLaw) -> Self {
        RawGaussian {
            mean: law.mean.as_slice().to_vec(),
            covariance: law
                .covariance
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

impl GaussianLaw {
    /// Requires a square covariance matching the mean, symmetric to `1e-12`
    /// (relative to its largest entry) and positive definite.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::Dimension {
                expected: d,
                got: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite Gaussian parameter".into()));
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        if (&covariance - covariance.transpose()).amax() > 1e-12 * scale.max(1.0) {
            return Err(Error::Data("covariance is not symmetric".into()));
        }
        if Cholesky::new(covariance.clone()).is_none() {
            return Err(Error::Data("covariance is not positive definite".into()));
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn marginal_sd(&self, k: usize) -> f64 {
        self.covariance[(k, k)].sqrt()
    }

    /// Marginal CDF of coordinate `k`.
    pub fn marginal_cdf(&self, k: usize, x: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        Normal::new(self.mean[k], self.marginal_sd(k))
            .expect("validated variance")
            .cdf(x)
    }

    /// Independent draws, one per row.
    pub fn sample<R: Rng + ?Sized>(&self, draws: usize, rng: &mut R) -> DMatrix<f64> {
        let l = self.cholesky_factor();
        let d = self.dim();
        let mut out = DMatrix::zeros(draws, d);
        let mut z = DVector::zeros(d);
        for i in 0..draws {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = &self.mean + &l * &z;
            out.row_mut(i).copy_from(&x.transpose());
        }
        out
    }

    fn cholesky_factor(&self) -> DMatrix<f64> {
        Cholesky::new(self.covariance.clone())
            .expect("validated positive definite")
            .l()
    }
}

/// KL divergence between two Gaussians with the Pinsker bound on total
/// variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlDivergence {
    pub kl: f64,
    /// `√(KL / 2)`, an upper bound on the total-variation distance.
    pub tv_bound: f64,
}

/// `KL(p ‖ q)` in closed form.
pub fn gaussian_kl(p: &GaussianLaw, q: &GaussianLaw) -> Result<KlDivergence> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: q.dim(),
        });
    }
    let chol_q = Cholesky::new(q.covariance.clone()).expect("validated");
    let chol_p = Cholesky::new(p.covariance.clone()).expect("validated");
    let log_det = |c: &Cholesky<f64, Dyn>| -> f64 {
        2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    };
    let trace = chol_q.solve(&p.covariance).trace();
    let diff = &q.mean - &p.mean;
    let maha = diff.dot(&chol_q.solve(&diff));
    let kl = (0.5 * (trace + maha - d as f64 + log_det(&chol_q) - log_det(&chol_p))).max(0.0);
    Ok(KlDivergence {
        kl,
        tv_bound: (kl / 2.0).sqrt(),
    })
}

/// Random-walk Metropolis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Retained draws across all chains, after burn-in and thinning.
    pub n_draws: usize,
    /// Adaptation iterations per chain, discarded.
    pub burn_in: usize,
    pub target_accept: f64,
    /// Starting point; defaults to the minimum-distance estimate when it lies
    /// in the prior support, else the origin.
    pub init: Option<Vec<f64>>,
    pub seed: u64,
    pub chains: usize,
    pub thin: usize,
    /// Temperature `η`.
    pub eta: f64,
    /// Shape proposals by the Cholesky factor of the target's curvature.
    pub precondition: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_draws: 20_000,
            burn_in: 5_000,
            target_accept: 0.234,
            init: None,
            seed: 0,
            chains: 1,
            thin: 1,
            eta: DEFAULT_ETA,
            precondition: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Post-burn-in acceptance rate pooled over chains.
    pub acceptance_rate: f64,
    /// Frozen step size per chain.
    pub step_sizes: Vec<f64>,
    /// Effective sample size per coordinate.
    pub ess: Vec<f64>,
    pub chains: usize,
    pub burn_in: usize,
    pub thin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcDraws {
    /// One draw per row.
    pub draws: DMatrix<f64>,
    pub diagnostics: ChainDiagnostics,
}

impl McmcDraws {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.column(k).iter().copied().collect()
    }

    /// Monte Carlo standard error of each coordinate mean.
    pub fn mean_standard_errors(&self) -> Vec<f64> {
        (0..self.draws.ncols())
            .map(|k| stats::std_dev(&self.column(k)) / self.diagnostics.ess[k].sqrt())
            .collect()
    }

    /// Writes the draws as CSV with header `b1,…,bd`, one row per draw.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.draws.ncols()).map(|k| format!("b{k}")).collect();
        w.write_record(&header)?;
        for row in self.draws.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorForm {
    ExactGaussian(GaussianLaw),
    Mcmc(McmcDraws),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prior: PriorFamily,
    pub level: u32,
    pub em_fingerprint: String,
    pub seed: Option<u64>,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorResult {
    pub form: PosteriorForm,
    pub provenance: Provenance,
}

impl PosteriorResult {
    pub fn level(&self) -> u32 {
        self.provenance.level
    }

    pub fn gaussian(&self) -> Option<&GaussianLaw> {
        match &self.form {
            PosteriorForm::ExactGaussian(law) => Some(law),
            PosteriorForm::Mcmc(_) => None,
        }
    }

    pub fn mcmc(&self) -> Option<&McmcDraws> {
        match &self.form {
            PosteriorForm::Mcmc(m) => Some(m),
            PosteriorForm::ExactGaussian(_) => None,
        }
    }
}

fn check_prior(em: &EmpiricalMoments, prior: &Prior) -> Result<()> {
    if prior.level() != em.level() {
        return Err(Error::Dimension {
            expected: em.dim(),
            got: prior.dim(),
        });
    }
    Ok(())
}

/// Closed-form quasi-posterior under a Gaussian product prior at `η = 1/2`.
pub fn conjugate_posterior(em: &EmpiricalMoments, prior: &Prior) -> Result<GaussianLaw> {
    conjugate_posterior_tempered(em, prior, DEFAULT_ETA)
}

/// Precision `2η n Aᵀ M⁻ A + σ⁻² I`, mean `P⁻¹ 2η n Aᵀ M⁻ c`.
pub fn conjugate_posterior_tempered(
    em: &EmpiricalMoments,
    prior: &Prior,
    eta: f64,
) -> Result<GaussianLaw> {
    check_prior(em, prior)?;
    let sigma = match prior.family() {
        PriorFamily::GaussianProduct { sigma } => sigma,
        other => return Err(Error::UnsupportedFamily(other.name().to_string())),
    };
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {eta}"
        )));
    }
    let d = em.dim();
    let scale = 2.0 * eta;
    let mut precision = em.information() * scale;
    for k in 0..d {
        precision[(k, k)] += 1.0 / (sigma * sigma);
    }
    let rhs = em.phi_wx().tr_mul(&(em.ww_inverse() * em.c())) * (scale * em.n() as f64);
    let chol = Cholesky::new(precision).ok_or(Error::IllConditioned {
        tau_hat: em.tau_hat(),
    })?;
    let mean = chol.solve(&rhs);
    let mut covariance = chol.inverse();
    symmetrize(&mut covariance);
    GaussianLaw::new(mean, covariance)
}

/// Maximum quasi-likelihood (sieve minimum-distance) estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdeEstimate {
    pub coeffs: SieveCoefficients,
    pub rank: usize,
}

impl MdeEstimate {
    /// `false` means `Φ̂_WX` was singular and `coeffs` is the minimum-norm
    /// maximizer.
    pub fn full_rank(&self) -> bool {
        self.rank == self.coeffs.dim()
    }
}

/// `b̂ = Φ̂_WX⁺ c`.
pub fn mde(em: &EmpiricalMoments) -> MdeEstimate {
    let (inv, rank) = pinv_with_rank(em.phi_wx(), DEFAULT_PINV_TOL);
    let coeffs = SieveCoefficients::new(em.level(), inv * em.c()).expect("finite moments");
    MdeEstimate { coeffs, rank }
}

/// Plug-in Bernstein–von Mises law `N(b̂, n⁻¹ A⁻¹ M A⁻ᵀ)`.
pub fn bvm_approx(em: &EmpiricalMoments) -> Result<GaussianLaw> {
    bvm_approx_with_tol(em, DEFAULT_BVM_TAU_TOL)
}

pub fn bvm_approx_with_tol(em: &EmpiricalMoments, tau_tol: f64) -> Result<GaussianLaw> {
    let tau_hat = em.tau_hat();
    if !(tau_hat > tau_tol) {
        return Err(Error::IllConditioned { tau_hat });
    }
    let b_hat = mde(em).coeffs.into_inner();
    sandwich_law(b_hat, em.phi_wx(), em.phi_ww(), em.n(), tau_hat)
}

/// BvM law with population `Φ_WX`, `Φ_WW` (known on synthetic designs)
/// around a given centre.
pub fn bvm_approx_population(
    center: &SieveCoefficients,
    phi_wx: &DMatrix<f64>,
    phi_ww: &DMatrix<f64>,
    n: usize,
) -> Result<GaussianLaw> {
    let tau = phi_wx.singular_values().min();
    if !(tau > DEFAULT_BVM_TAU_TOL) {
        return Err(Error::IllConditioned { tau_hat: tau });
    }
    sandwich_law(center.coeffs().clone(), phi_wx, phi_ww, n, tau)
}

fn sandwich_law(
    mean: DVector<f64>,
    phi_wx: &DMatrix<f64>,
    phi_ww: &DMatrix<f64>,
    n: usize,
    tau: f64,
) -> Result<GaussianLaw> {
    let a_inv = phi_wx
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { tau_hat: tau })?;
    let mut cov = &a_inv * phi_ww * a_inv.transpose() / n as f64;
    symmetrize(&mut cov);
    GaussianLaw::new(mean, cov).map_err(|_| Error::IllConditioned { tau_hat: tau })
}

/// Quasi-Bayes estimate: the posterior mean.
pub fn quasi_bayes(pr: &PosteriorResult) -> SieveCoefficients {
    let mean = match &pr.form {
        PosteriorForm::ExactGaussian(law) => law.mean().clone(),
        PosteriorForm::Mcmc(m) => m.draws.row_mean().transpose(),
    };
    SieveCoefficients::new(pr.level(), mean).expect("finite posterior mean")
}

/// Wraps a conjugate law with its provenance.
pub fn exact_posterior(em: &EmpiricalMoments, prior: &Prior, eta: f64) -> Result<PosteriorResult> {
    let law = conjugate_posterior_tempered(em, prior, eta)?;
    Ok(PosteriorResult {
        form: PosteriorForm::ExactGaussian(law),
        provenance: Provenance {
            prior: prior.family(),
            level: em.level(),
            em_fingerprint: em.fingerprint(),
            seed: None,
            eta,
        },
    })
}

/// Random-walk Metropolis on the quasi-posterior.
///
/// Proposals are `b + h L⁻ᵀ z` with `z` standard normal, where `L Lᵀ` is the
/// curvature of the log target (quasi-likelihood information plus the
/// Gaussian prior precision when there is one). The scalar step `h` follows
/// a Robbins–Monro recursion toward `target_accept` during burn-in and is
/// frozen afterwards. Chains run in parallel on one shared set of moments.
pub fn rwm_sample(
    em: &EmpiricalMoments,
    prior: &Prior,
    config: &SamplerConfig,
) -> Result<PosteriorResult> {
    check_prior(em, prior)?;
    if config.chains == 0 || config.thin == 0 || config.n_draws == 0 {
        return Err(Error::Config(
            "sampler needs positive chains, thin and n_draws".into(),
        ));
    }
    if !(config.target_accept > 0.0 && config.target_accept < 1.0) {
        return Err(Error::Config(format!(
            "target acceptance must lie in (0, 1), got {}",
            config.target_accept
        )));
    }
    if !(config.eta > 0.0 && config.eta.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {}",
            config.eta
        )));
    }
    let d = em.dim();
    let init = match &config.init {
        Some(v) => {
            if v.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: v.len(),
                });
            }
            let v = DVector::from_column_slice(v);
            if !prior.in_support(&v) {
                return Err(Error::Initialization);
            }
            v
        }
        None => {
            let b_hat = mde(em).coeffs.into_inner();
            if prior.in_support(&b_hat) {
                b_hat
            } else {
                DVector::zeros(d)
            }
        }
    };

    let scale = 2.0 * config.eta;
    let shape = if config.precondition {
        proposal_shape(em, prior, scale)
    } else {
        None
    };
    let shape = shape.unwrap_or_else(|| DMatrix::identity(d, d));

    let per_chain: Vec<usize> = (0..config.chains)
        .map(|k| config.n_draws / config.chains + usize::from(k < config.n_draws % config.chains))
        .collect();

    let runs: Vec<Result<ChainRun>> = per_chain
        .par_iter()
        .enumerate()
        .map(|(k, &keep)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            run_chain(
                em,
                prior,
                config,
                scale,
                &shape,
                init.clone(),
                keep,
                &mut rng,
            )
        })
        .collect();

    let mut rows = Vec::with_capacity(config.n_draws * d);
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut step_sizes = Vec::with_capacity(config.chains);
    for run in runs {
        let run = run?;
        rows.extend(run.draws);
        accepted += run.accepted;
        proposed += run.proposed;
        step_sizes.push(run.step);
    }
    let draws = DMatrix::from_row_slice(config.n_draws, d, &rows);
    let ess = (0..d)
        .map(|k| {
            let col: Vec<f64> = draws.column(k).iter().copied().collect();
            // per-chain ESS summed, so chain boundaries do not inflate correlations
            let mut start = 0;
            per_chain
                .iter()
                .map(|&len| {
                    let e = stats::effective_sample_size(&col[start..start + len]);
                    start += len;
                    e
                })
                .sum()
        })
        .collect();
    Ok(PosteriorResult {
        form: PosteriorForm::Mcmc(McmcDraws {
            draws,
            diagnostics: ChainDiagnostics {
                acceptance_rate: accepted as f64 / proposed.max(1) as f64,
                step_sizes,
                ess,
                chains: config.chains,
                burn_in: config.burn_in,
                thin: config.thin,
            },
        }),
        provenance: Provenance {
            prior: prior.family(),
            level: em.level(),
            em_fingerprint: em.fingerprint(),
            seed: Some(config.seed),
            eta: config.eta,
        },
    })
}

/// `L⁻ᵀ` for the curvature `H = L Lᵀ`, or `None` when `H` is singular.
fn proposal_shape(em: &EmpiricalMoments, prior: &Prior, scale: f64) -> Option<DMatrix<f64>> {
    let mut h = em.information() * scale;
    if let PriorFamily::GaussianProduct { sigma } = prior.family() {
        for k in 0..h.nrows() {
            h[(k, k)] += 1.0 / (sigma * sigma);
        }
    }
    let l = Cholesky::new(h)?.l();
    l.transpose().try_inverse()
}

struct ChainRun {
    draws: Vec<f64>,
    accepted: usize,
    proposed: usize,
    step: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_chain(
    em: &EmpiricalMoments,
    prior: &Prior,
    config: &SamplerConfig,
    scale: f64,
    shape: &DMatrix<f64>,
    init: DVector<f64>,
    keep: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ChainRun> {
    let d = init.len();
    let log_target = |b: &DVector<f64>| -> f64 {
        let lp = prior.log_density_vec(b);
        if lp == f64::NEG_INFINITY {
            lp
        } else {
            scale * em.quasi_loglik_vec(b) + lp
        }
    };
    let mut current = init;
    let mut current_lt = log_target(&current);
    let mut log_step = (2.38 / (d as f64).sqrt()).ln();
    let mut z = DVector::zeros(d);

    let mut step = |current: &mut DVector<f64>, current_lt: &mut f64, h: f64| -> bool {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let proposal = &*current + shape * &z * h;
        let lt = log_target(&proposal);
        let u: f64 = rng.random();
        if lt > f64::NEG_INFINITY && u.ln() < lt - *current_lt {
            *current = proposal;
            *current_lt = lt;
            true
        } else {
            false
        }
    };

    let mut burn_accepts = 0;
    for t in 0..config.burn_in {
        let accepted = step(&mut current, &mut current_lt, log_step.exp());
        burn_accepts += usize::from(accepted);
        let gain = (t as f64 + 1.0).powf(-0.6);
        log_step += gain * (f64::from(u8::from(accepted)) - config.target_accept);
    }
    if config.burn_in > 0 && burn_accepts == 0 {
        return Err(Error::StuckChain {
            burn_in: config.burn_in,
        });
    }

    let h = log_step.exp();
    let mut draws = Vec::with_capacity(keep * d);
    let mut accepted = 0;
    let mut proposed = 0;
    while draws.len() < keep * d {
        for _ in 0..config.thin {
            accepted += usize::from(step(&mut current, &mut current_lt, h));
            proposed += 1;
        }
        draws.extend(current.iter());
    }
    Ok(ChainRun {
        draws,
        accepted,
        proposed,
        step: h,
    })
}
