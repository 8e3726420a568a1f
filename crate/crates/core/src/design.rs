//! Synthetic NPIV data-generating processes with a known operator.
//!
//! The joint density of `(X, W)` on the unit square is
//!
//! ```text
//! f(x, w) = 1 + Σ_{l=1}^{L} ρ_l φ_{l+1}(x) φ_{l+1}(w)
//! ```
//!
//! in the cosine basis. Both marginals are uniform, so the conditional
//! expectation operator `K g(w) = E[g(X) | W = w]` is diagonal:
//! `K φ_1 = φ_1`, `K φ_{l+1} = ρ_l φ_{l+1}`. The structural error
//!
//! ```text
//! U = ρ_U Σ_{l ∈ S} (φ_{l+1}(X) - ρ_l φ_{l+1}(W)) + σ_e ε
//! ```
//!
//! satisfies `E[U | W] = 0` while staying correlated with `X`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{self, SieveCoefficients};
use crate::error::{Error, Result};
use crate::stats::fit_line;

/// Upper limit on `Σ 2 ρ_l = M_f - 1`; keeps the density within `[0.1, 1.9]`.
pub const MAX_SPECTRAL_MASS: f64 = 0.9;

/// Decay class of the operator spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IllPosedness {
    /// `ρ_l = a l^{-r}`.
    Mild { r: f64 },
    /// `ρ_l = a exp(-c l)`.
    Severe { c: f64 },
}

fn default_endogenous_modes() -> Vec<usize> {
    vec![1, 2]
}

/// Serializable description of a [`Design`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    #[serde(flatten)]
    pub kind: IllPosedness,
    /// Spectrum scale `a`.
    pub scale: f64,
    /// Number of operator modes `L`.
    #[serde(rename = "L")]
    pub modes: usize,
    /// Smoothness `s` of the structural function.
    pub s: f64,
    #[serde(rename = "rho_U", default)]
    pub rho_u: f64,
    #[serde(default)]
    pub sigma_e: f64,
    /// Indices `l` in `S` (1-based operator modes) carrying endogeneity.
    #[serde(default = "default_endogenous_modes")]
    pub endogenous_modes: Vec<usize>,
    /// Optional default seed for `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DesignSpec {
    pub fn mild(r: f64, s: f64, modes: usize, scale: f64) -> Self {
        Self::with_kind(IllPosedness::Mild { r }, s, modes, scale)
    }

    pub fn severe(c: f64, s: f64, modes: usize, scale: f64) -> Self {
        Self::with_kind(IllPosedness::Severe { c }, s, modes, scale)
    }

    fn with_kind(kind: IllPosedness, s: f64, modes: usize, scale: f64) -> Self {
        Self {
            kind,
            scale,
            modes,
            s,
            rho_u: 0.0,
            sigma_e: 0.0,
            endogenous_modes: default_endogenous_modes(),
            seed: None,
        }
    }

    pub fn with_errors(mut self, rho_u: f64, sigma_e: f64) -> Self {
        self.rho_u = rho_u;
        self.sigma_e = sigma_e;
        self
    }

    pub fn build(&self) -> Result<Design> {
        Design::build(self)
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    kind: IllPosedness,
    smoothness: f64,
    spectrum: Vec<f64>,
    true_coeffs: Vec<f64>,
    rho_u: f64,
    sigma_e: f64,
    endogenous_modes: Vec<usize>,
    density_bound: f64,
}

impl Design {
    pub fn build(spec: &DesignSpec) -> Result<Self> {
        let a = spec.scale;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Config(format!(
                "spectrum scale must be positive, got {a}"
            )));
        }
        if spec.modes == 0 {
            return Err(Error::Config(
                "design needs at least one operator mode".into(),
            ));
        }
        if !(spec.s > 0.5) {
            return Err(Error::Config(format!(
                "smoothness must exceed 1/2, got {}",
                spec.s
            )));
        }
        let spectrum: Vec<f64> = match spec.kind {
            IllPosedness::Mild { r } if r > 0.0 => {
                (1..=spec.modes).map(|l| a * (l as f64).powf(-r)).collect()
            }
            IllPosedness::Severe { c } if c > 0.0 => (1..=spec.modes)
                .map(|l| a * (-c * l as f64).exp())
                .collect(),
            kind => {
                return Err(Error::Config(format!(
                    "decay rate must be positive in {kind:?}"
                )))
            }
        };
        let mut true_coeffs = Vec::with_capacity(spec.modes + 1);
        true_coeffs.push(1.0);
        true_coeffs.extend((1..=spec.modes).map(|l| (l as f64).powf(-(spec.s + 0.5))));
        Self::from_parts(
            spec.kind,
            spec.s,
            spectrum,
            true_coeffs,
            spec.rho_u,
            spec.sigma_e,
            spec.endogenous_modes.clone(),
        )
    }

    /// Design from an explicit spectrum and coefficient vector.
    ///
    /// `true_coeffs[0]` multiplies the constant; `true_coeffs[l]` multiplies
    /// `φ_{l+1}`. Spectrum entries may be zero (the assumption validator will
    /// flag them) but not negative.
    pub fn from_parts(
        kind: IllPosedness,
        smoothness: f64,
        spectrum: Vec<f64>,
        true_coeffs: Vec<f64>,
        rho_u: f64,
        sigma_e: f64,
        endogenous_modes: Vec<usize>,
    ) -> Result<Self> {
        if spectrum.is_empty() {
            return Err(Error::Config("empty spectrum".into()));
        }
        if let Some(bad) = spectrum.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Config(format!(
                "spectrum entry {bad} is not a nonnegative number"
            )));
        }
        let mass: f64 = spectrum.iter().map(|r| 2.0 * r).sum();
        if mass > MAX_SPECTRAL_MASS {
            return Err(Error::Config(format!(
                "density positivity needs Σ 2ρ_l ≤ {MAX_SPECTRAL_MASS}, got {mass:.6}"
            )));
        }
        if true_coeffs.is_empty() || true_coeffs.len() > spectrum.len() + 1 {
            return Err(Error::Config(format!(
                "structural function needs 1..={} coefficients, got {}",
                spectrum.len() + 1,
                true_coeffs.len()
            )));
        }
        if true_coeffs.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("non-finite structural coefficient".into()));
        }
        if !(rho_u.is_finite() && sigma_e.is_finite() && sigma_e >= 0.0) {
            return Err(Error::Config(format!(
                "error law needs finite rho_U and sigma_e ≥ 0, got ({rho_u}, {sigma_e})"
            )));
        }
        if let Some(&l) = endogenous_modes
            .iter()
            .find(|&&l| l == 0 || l > spectrum.len())
        {
            return Err(Error::Config(format!(
                "endogenous mode {l} outside 1..={}",
                spectrum.len()
            )));
        }
        Ok(Self {
            kind,
            smoothness,
            spectrum,
            true_coeffs,
            rho_u,
            sigma_e,
            endogenous_modes,
            density_bound: 1.0 + mass,
        })
    }

    pub fn kind(&self) -> IllPosedness {
        self.kind
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// `ρ_1, …, ρ_L`.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn modes(&self) -> usize {
        self.spectrum.len()
    }

    /// Full coefficient vector of `g₀` in the cosine basis.
    pub fn true_coeffs(&self) -> &[f64] {
        &self.true_coeffs
    }

    pub fn endogeneity_weight(&self) -> f64 {
        self.rho_u
    }

    pub fn noise_scale(&self) -> f64 {
        self.sigma_e
    }

    /// `M_f = 1 + Σ 2ρ_l`.
    pub fn density_bound(&self) -> f64 {
        self.density_bound
    }

    /// `b₀^J`: the first `2^J` coefficients of `g₀`, zero-padded.
    pub fn truncated_coeffs(&self, level: u32) -> Result<SieveCoefficients> {
        let d = basis::dim(level)?;
        let mut v = DVector::zeros(d);
        for (slot, b) in v.iter_mut().zip(&self.true_coeffs) {
            *slot = *b;
        }
        SieveCoefficients::new(level, v)
    }

    /// `‖g₀ - P_J g₀‖²`.
    pub fn tail_sq_norm(&self, level: u32) -> Result<f64> {
        let d = basis::dim(level)?;
        Ok(self.true_coeffs.iter().skip(d).map(|b| b * b).sum())
    }

    pub fn g0(&self, x: f64) -> f64 {
        let c1 = (PI * x).cos();
        let (mut prev, mut cur) = (1.0, c1);
        let mut acc = self.true_coeffs[0];
        for b in &self.true_coeffs[1..] {
            acc += b * SQRT_2 * cur;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        acc
    }

    pub fn density(&self, x: f64, w: f64) -> Result<f64> {
        for v in [x, w] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain { value: v });
            }
        }
        Ok(self.density_unchecked(x, w))
    }

    fn density_unchecked(&self, x: f64, w: f64) -> f64 {
        let (cx, cw) = ((PI * x).cos(), (PI * w).cos());
        let (mut px, mut qx) = (1.0, cx);
        let (mut pw, mut qw) = (1.0, cw);
        let mut acc = 1.0;
        for rho in &self.spectrum {
            acc += 2.0 * rho * qx * qw;
            let nx = 2.0 * cx * qx - px;
            px = qx;
            qx = nx;
            let nw = 2.0 * cw * qw - pw;
            pw = qw;
            qw = nw;
        }
        acc
    }

    /// `n` i.i.d. draws of `(Y, X, W)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Sample {
        self.sample_with_proposals(n, rng).0
    }

    pub fn sample_seeded(&self, n: usize, seed: u64) -> Sample {
        self.sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Like [`Design::sample`], also returning the number of rejection-sampler
    /// proposals consumed. Acceptance probability is `1 / M_f`.
    pub fn sample_with_proposals<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Sample, usize) {
        let mut rows = Sample::with_capacity(n);
        let mut proposals = 0;
        while rows.len() < n {
            let x: f64 = rng.random();
            let w: f64 = rng.random();
            let u: f64 = rng.random();
            proposals += 1;
            if u * self.density_bound > self.density_unchecked(x, w) {
                continue;
            }
            let noise: f64 = if self.sigma_e > 0.0 {
                self.sigma_e * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let u_val = self.structural_error(x, w) + noise;
            rows.push_unchecked(self.g0(x) + u_val, x, w);
        }
        (rows, proposals)
    }

    /// Endogenous part of `U`, without the independent noise.
    pub fn structural_error(&self, x: f64, w: f64) -> f64 {
        if self.rho_u == 0.0 {
            return 0.0;
        }
        let acc: f64 = self
            .endogenous_modes
            .iter()
            .map(|&l| {
                let k = l as f64 * PI;
                SQRT_2 * ((k * x).cos() - self.spectrum[l - 1] * (k * w).cos())
            })
            .sum();
        self.rho_u * acc
    }

    /// Population `Φ_WX = diag(1, ρ_1, …, ρ_{2^J-1})` in the cosine basis.
    pub fn population_phi_wx(&self, level: u32) -> Result<DMatrix<f64>> {
        let d = self.check_level(level)?;
        let mut diag = DVector::zeros(d);
        diag[0] = 1.0;
        for l in 1..d {
            diag[l] = self.spectrum[l - 1];
        }
        Ok(DMatrix::from_diagonal(&diag))
    }

    /// Population `Φ_WW`; the identity because `W` is uniform.
    pub fn population_phi_ww(&self, level: u32) -> Result<DMatrix<f64>> {
        let d = self.check_level(level)?;
        Ok(DMatrix::identity(d, d))
    }

    /// Sieve measure of ill-posedness `τ_J`: smallest singular value of the
    /// cross-Gram matrix `(⟨φ_l, K φ_m⟩)`, here `min(1, ρ_1, …, ρ_{2^J-1})`.
    pub fn true_tau(&self, level: u32) -> Result<f64> {
        let d = self.check_level(level)?;
        Ok(self.spectrum[..d - 1].iter().copied().fold(1.0, f64::min))
    }

    fn check_level(&self, level: u32) -> Result<usize> {
        let d = basis::dim(level)?;
        if d > self.spectrum.len() + 1 {
            return Err(Error::SpectrumExhausted {
                level,
                needed: d - 1,
                available: self.spectrum.len(),
            });
        }
        Ok(d)
    }

    /// Checks the regularity assumptions the estimator theory relies on,
    /// restricted to what is verifiable on the truncated span up to `J_max`.
    pub fn validate_assumptions(&self, max_level: u32) -> AssumptionReport {
        let mut checks = Vec::new();

        let grid = 64;
        let max_density = (0..=grid)
            .flat_map(|i| (0..=grid).map(move |j| (i, j)))
            .map(|(i, j)| self.density_unchecked(i as f64 / grid as f64, j as f64 / grid as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        let min_density = (0..=grid)
            .flat_map(|i| (0..=grid).map(move |j| (i, j)))
            .map(|(i, j)| self.density_unchecked(i as f64 / grid as f64, j as f64 / grid as f64))
            .fold(f64::INFINITY, f64::min);
        checks.push(AssumptionCheck::new(
            "bounded_density",
            max_density <= self.density_bound + 1e-12 && min_density > 0.0,
            format!(
                "density range on grid [{min_density:.4}, {max_density:.4}], bound M_f = {:.4}",
                self.density_bound
            ),
        ));

        // every cosine mode beyond the constant integrates to zero, so f_W ≡ 1
        let quad = basis::Quadrature::new(basis::QuadratureRule::GaussLegendre, 256)
            .expect("fixed quadrature");
        let min_marginal = (0..=16)
            .map(|j| {
                let w = j as f64 / 16.0;
                quad.integrate(|x| self.density_unchecked(x, w))
            })
            .fold(f64::INFINITY, f64::min);
        checks.push(AssumptionCheck::new(
            "instrument_density_floor",
            min_marginal >= 1.0 - 1e-8,
            format!("min f_W on grid = {min_marginal:.10}"),
        ));

        let d = basis::dim(max_level).unwrap_or(usize::MAX);
        let span = (d.saturating_sub(1)).min(self.spectrum.len());
        let zero_modes: Vec<usize> = self.spectrum[..span]
            .iter()
            .enumerate()
            .filter(|(_, r)| **r <= 0.0)
            .map(|(i, _)| i + 1)
            .collect();
        checks.push(AssumptionCheck::new(
            "injectivity",
            zero_modes.is_empty() && d <= self.spectrum.len() + 1,
            if zero_modes.is_empty() {
                format!("ρ_1..ρ_{span} all positive")
            } else {
                format!("zero singular values at modes {zero_modes:?}")
            },
        ));

        let decay: Vec<(f64, f64)> = self.true_coeffs[1..]
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > 0.0)
            .map(|(i, b)| (((i + 1) as f64).ln(), b.abs().ln()))
            .collect();
        let (a3_ok, a3_detail) = if decay.len() >= 2 {
            let (lx, ly): (Vec<f64>, Vec<f64>) = decay.into_iter().unzip();
            let fit = fit_line(&lx, &ly);
            let target = -(self.smoothness + 0.5);
            (
                fit.slope <= target + 0.1,
                format!(
                    "coefficient log-log slope {:.4}, declared -(s+1/2) = {target:.4}",
                    fit.slope
                ),
            )
        } else {
            (
                true,
                "structural function is a finite sieve element".to_string(),
            )
        };
        checks.push(AssumptionCheck::new("smoothness", a3_ok, a3_detail));

        let positive: Vec<(usize, f64)> = self
            .spectrum
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 0.0)
            .map(|(i, r)| (i + 1, r.ln()))
            .collect();
        let (a4_ok, a4_detail) = if positive.len() >= 2 {
            let ly: Vec<f64> = positive.iter().map(|p| p.1).collect();
            match self.kind {
                IllPosedness::Mild { r } => {
                    let lx: Vec<f64> = positive.iter().map(|p| (p.0 as f64).ln()).collect();
                    let slope = fit_line(&lx, &ly).slope;
                    (
                        (slope + r).abs() <= 0.1 + 0.05 * r,
                        format!("log ρ_l vs log l slope {slope:.4}, declared -r = {:.4}", -r),
                    )
                }
                IllPosedness::Severe { c } => {
                    let lx: Vec<f64> = positive.iter().map(|p| p.0 as f64).collect();
                    let slope = fit_line(&lx, &ly).slope;
                    (
                        (slope + c).abs() <= 0.1 + 0.05 * c,
                        format!("log ρ_l vs l slope {slope:.4}, declared -c = {:.4}", -c),
                    )
                }
            }
        } else {
            (false, "fewer than two positive singular values".to_string())
        };
        checks.push(AssumptionCheck::new("illposedness_class", a4_ok, a4_detail));

        checks.push(AssumptionCheck::new(
            "bias_orthogonality",
            true,
            "cosine basis diagonalizes K, so <φ_l, K(g0 - P_J g0)> = 0 for l ≤ 2^J".to_string(),
        ));

        AssumptionReport { checks }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl AssumptionCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Observations `(Y_i, X_i, W_i)` with `X, W ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    y: Vec<f64>,
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Sample {
    pub fn new(y: Vec<f64>, x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if y.len() != x.len() || y.len() != w.len() {
            return Err(Error::Data(format!(
                "column lengths differ: y {}, x {}, w {}",
                y.len(),
                x.len(),
                w.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::Data("sample has no observations".into()));
        }
        for i in 0..y.len() {
            if !(y[i].is_finite() && x[i].is_finite() && w[i].is_finite()) {
                return Err(Error::Data(format!("non-finite value in row {}", i + 1)));
            }
            if !(0.0..=1.0).contains(&x[i]) || !(0.0..=1.0).contains(&w[i]) {
                return Err(Error::Data(format!(
                    "x or w outside [0, 1] in row {}",
                    i + 1
                )));
            }
        }
        Ok(Self { y, x, w })
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            y: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            w: Vec::with_capacity(n),
        }
    }

    fn push_unchecked(&mut self, y: f64, x: f64, w: f64) {
        self.y.push(y);
        self.x.push(x);
        self.w.push(w);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len()).map(move |i| (self.y[i], self.x[i], self.w[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Basis, Quadrature, QuadratureRule};
    use crate::stats::ks_statistic;
    use approx::assert_abs_diff_eq;

    fn mild_r2() -> Design {
        DesignSpec::mild(2.0, 2.0, 100, 0.1).build().unwrap()
    }

    #[test]
    fn harmonic_spectrum_is_rejected() {
        // Σ 2·0.1/l over l ≤ 100 = 0.2·H_100 ≈ 1.037
        let h100: f64 = (1..=100).map(|l| 1.0 / l as f64).sum();
        let err = DesignSpec::mild(1.0, 2.0, 100, 0.1).build().unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains(&format!("{:.6}", 0.2 * h100)), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn square_summable_spectrum_is_accepted() {
        let d = mild_r2();
        let zeta2_partial: f64 = (1..=100).map(|l| (l as f64).powi(-2)).sum();
        assert_abs_diff_eq!(
            d.density_bound(),
            1.0 + 0.2 * zeta2_partial,
            epsilon = 1e-12
        );
        assert!(d.density_bound() < 1.0 + 0.2 * PI * PI / 6.0);
        assert_abs_diff_eq!(d.spectrum()[1], 0.025);
    }

    #[test]
    fn severe_spectrum_formula() {
        let d = DesignSpec::severe(1.0, 2.0, 50, 0.2).build().unwrap();
        assert_abs_diff_eq!(d.spectrum()[0], 0.2 * (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.true_tau(1).unwrap(), 0.073_576, epsilon = 1e-6);
    }

    #[test]
    fn density_examples() {
        let d = Design::from_parts(
            IllPosedness::Mild { r: 1.0 },
            1.0,
            vec![0.1],
            vec![1.0],
            0.0,
            0.0,
            vec![1],
        )
        .unwrap();
        assert_abs_diff_eq!(d.density(0.5, 0.123).unwrap(), 1.0, epsilon = 1e-15);
        // 1 + ρ_1 φ_2(0)² = 1 + 0.1·2
        assert_abs_diff_eq!(d.density(0.0, 0.0).unwrap(), 1.2, epsilon = 1e-15);
        assert!(matches!(d.density(1.2, 0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn density_integrates_to_one() {
        let q = Quadrature::new(QuadratureRule::GaussLegendre, 400).unwrap();
        for d in [
            mild_r2(),
            DesignSpec::severe(1.0, 2.0, 50, 0.2).build().unwrap(),
        ] {
            let total = q.integrate(|x| q.integrate(|w| d.density(x, w).unwrap()));
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn noiseless_exogenous_sample_is_exact() {
        let d = mild_r2();
        let s = d.sample_seeded(500, 3);
        for (y, x, _) in s.rows() {
            assert_eq!(y, d.g0(x));
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = DesignSpec::mild(2.0, 2.0, 20, 0.1)
            .with_errors(0.3, 0.1)
            .build()
            .unwrap();
        assert_eq!(d.sample_seeded(200, 11), d.sample_seeded(200, 11));
        assert_ne!(d.sample_seeded(200, 11), d.sample_seeded(200, 12));
    }

    #[test]
    fn true_tau_examples() {
        // a = 0.5 with r = 1 breaks positivity (Σ2ρ = H_3); the same shape at a = 0.05
        assert!(DesignSpec::mild(1.0, 2.0, 3, 0.5).build().is_err());
        let d = DesignSpec::mild(1.0, 2.0, 3, 0.05).build().unwrap();
        assert_abs_diff_eq!(d.true_tau(2).unwrap(), 0.016_666_7, epsilon = 1e-7);
        assert_eq!(d.true_tau(0).unwrap(), 1.0);
        assert_abs_diff_eq!(mild_r2().true_tau(2).unwrap(), 0.1 / 9.0, epsilon = 1e-15);
        assert!(matches!(
            DesignSpec::mild(2.0, 2.0, 6, 0.1)
                .build()
                .unwrap()
                .true_tau(3),
            Err(Error::SpectrumExhausted {
                needed: 7,
                available: 6,
                ..
            })
        ));
    }

    #[test]
    fn true_tau_nonincreasing() {
        let d = mild_r2();
        let taus: Vec<f64> = (0..=6).map(|j| d.true_tau(j).unwrap()).collect();
        assert!(taus.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn truncation_and_tail() {
        let d = DesignSpec::mild(2.0, 2.0, 5, 0.1).build().unwrap();
        let b = d.truncated_coeffs(3).unwrap();
        assert_eq!(b.as_slice()[6..], [0.0, 0.0]);
        assert_eq!(d.tail_sq_norm(3).unwrap(), 0.0);
        let tail = d.tail_sq_norm(1).unwrap();
        let expect: f64 = (2..=5).map(|l| (l as f64).powf(-5.0)).sum();
        assert_abs_diff_eq!(tail, expect, epsilon = 1e-15);
    }

    #[test]
    fn g0_matches_basis_synthesis() {
        let d = DesignSpec::mild(2.0, 2.0, 15, 0.1).build().unwrap();
        let b = d.truncated_coeffs(4).unwrap();
        let basis = Basis::cosine();
        for &x in &[0.0, 0.2, 0.5, 0.99, 1.0] {
            assert_abs_diff_eq!(d.g0(x), basis.synthesize(&b, x).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn acceptance_frequency_matches_density_bound() {
        let d = DesignSpec::severe(0.5, 2.0, 30, 0.1).build().unwrap();
        let n = 50_000;
        let (_, proposals) = d.sample_with_proposals(n, &mut ChaCha8Rng::seed_from_u64(5));
        let p = 1.0 / d.density_bound();
        let freq = n as f64 / proposals as f64;
        let sd = (p * (1.0 - p) / proposals as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * sd, "freq {freq} vs {p}");
    }

    #[test]
    fn marginals_uniform_and_errors_conditionally_centred() {
        let d = DesignSpec::mild(2.0, 2.0, 40, 0.13)
            .with_errors(0.5, 0.2)
            .build()
            .unwrap();
        let n = 100_000;
        let s = d.sample_seeded(n, 17);
        let crit = 1.63 / (n as f64).sqrt();
        assert!(ks_statistic(s.x(), |v| v) < crit);
        assert!(ks_statistic(s.w(), |v| v) < crit);
        let basis = Basis::cosine();
        let u: Vec<f64> = s.rows().map(|(y, x, _)| y - d.g0(x)).collect();
        for l in 0..8 {
            let prods: Vec<f64> = s
                .w()
                .iter()
                .zip(&u)
                .map(|(&w, &ui)| basis.eval_vector(3, w).unwrap()[l] * ui)
                .collect();
            let m = crate::stats::mean(&prods);
            let sd = crate::stats::std_dev(&prods);
            assert!(m.abs() <= 4.0 * sd / (n as f64).sqrt(), "mode {l}: {m}");
        }
        // but U is correlated with φ_2(X): endogeneity is real
        let cov: f64 = s
            .x()
            .iter()
            .zip(&u)
            .map(|(&x, &ui)| SQRT_2 * (PI * x).cos() * ui)
            .sum::<f64>()
            / n as f64;
        assert!(cov > 0.3);
    }

    #[test]
    fn assumption_report_flags() {
        assert!(mild_r2().validate_assumptions(4).all_passed());

        let mut spectrum = mild_r2().spectrum().to_vec();
        spectrum[2] = 0.0;
        let d = Design::from_parts(
            IllPosedness::Mild { r: 2.0 },
            2.0,
            spectrum,
            mild_r2().true_coeffs().to_vec(),
            0.0,
            0.0,
            vec![1],
        )
        .unwrap();
        let report = d.validate_assumptions(3);
        assert!(!report.check("injectivity").unwrap().passed);

        // declared r = 1 but the spectrum decays like l^{-2}
        let d = Design::from_parts(
            IllPosedness::Mild { r: 1.0 },
            2.0,
            mild_r2().spectrum().to_vec(),
            mild_r2().true_coeffs().to_vec(),
            0.0,
            0.0,
            vec![1],
        )
        .unwrap();
        let report = d.validate_assumptions(3);
        assert!(!report.check("illposedness_class").unwrap().passed);
        assert!(report.check("injectivity").unwrap().passed);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let json = r#"{"kind":"severe","c":1.0,"scale":0.2,"L":50,"s":2.0,"rho_U":0.3,"sigma_e":0.1,"seed":9}"#;
        let spec: DesignSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.kind, IllPosedness::Severe { c: 1.0 });
        assert_eq!(spec.modes, 50);
        assert_eq!(spec.endogenous_modes, vec![1, 2]);
        let back: DesignSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::new(vec![1.0], vec![0.5], vec![0.5]).is_ok());
        assert!(Sample::new(vec![1.0], vec![1.5], vec![0.5]).is_err());
        assert!(Sample::new(vec![], vec![], vec![]).is_err());
        assert!(Sample::new(vec![1.0, 2.0], vec![0.5], vec![0.5]).is_err());
    }
}
