//! Generating priors on sieve coefficients.
//!
//! Product priors have density `Π q(b_l)`; the isotropic prior has density
//! proportional to `r(‖b‖)`. Log densities are returned without normalizing
//! constants, which cancel in every posterior computation.
//!
//! The small-ball and flatness diagnostics are Monte Carlo estimates for one
//! prior and one sample size. They are finite-sample diagnostics, not checks
//! of the asymptotic conditions.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{self, SieveCoefficients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorFamily {
    GaussianProduct {
        sigma: f64,
    },
    UniformProduct {
        #[serde(rename = "A")]
        half_width: f64,
    },
    LaplaceProduct {
        lambda: f64,
    },
    IsotropicExponential {
        lambda: f64,
    },
}

impl PriorFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PriorFamily::GaussianProduct { .. } => "gaussian_product",
            PriorFamily::UniformProduct { .. } => "uniform_product",
            PriorFamily::LaplaceProduct { .. } => "laplace_product",
            PriorFamily::IsotropicExponential { .. } => "isotropic_exponential",
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            PriorFamily::GaussianProduct { sigma } => sigma,
            PriorFamily::UniformProduct { half_width } => half_width,
            PriorFamily::LaplaceProduct { lambda }
            | PriorFamily::IsotropicExponential { lambda } => lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    family: PriorFamily,
    level: u32,
}

impl Prior {
    pub fn new(family: PriorFamily, level: u32) -> Result<Self> {
        let scale = family.scale();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "{} prior needs a positive finite scale, got {scale}",
                family.name()
            )));
        }
        basis::dim(level)?;
        Ok(Self { family, level })
    }

    pub fn gaussian(sigma: f64, level: u32) -> Result<Self> {
        Self::new(PriorFamily::GaussianProduct { sigma }, level)
    }

    pub fn family(&self) -> PriorFamily {
        self.family
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        1 << self.level
    }

    pub fn log_density(&self, b: &SieveCoefficients) -> Result<f64> {
        if b.level() != self.level {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: b.dim(),
            });
        }
        Ok(self.log_density_vec(b.coeffs()))
    }

    /// Unnormalized log density; `-∞` outside the support.
    pub fn log_density_vec(&self, b: &DVector<f64>) -> f64 {
        match self.family {
            PriorFamily::GaussianProduct { sigma } => -b.norm_squared() / (2.0 * sigma * sigma),
            PriorFamily::UniformProduct { half_width } => {
                if b.iter().all(|v| v.abs() <= half_width) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorFamily::LaplaceProduct { lambda } => -lambda * b.lp_norm(1),
            PriorFamily::IsotropicExponential { lambda } => -lambda * b.norm(),
        }
    }

    pub fn in_support(&self, b: &DVector<f64>) -> bool {
        self.log_density_vec(b) > f64::NEG_INFINITY
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SieveCoefficients {
        let d = self.dim();
        let v = match self.family {
            PriorFamily::GaussianProduct { sigma } => {
                DVector::from_fn(d, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
            }
            PriorFamily::UniformProduct { half_width } => {
                DVector::from_fn(d, |_, _| rng.random_range(-half_width..=half_width))
            }
            PriorFamily::LaplaceProduct { lambda } => {
                let exp = Exp::new(lambda).expect("validated rate");
                DVector::from_fn(d, |_, _| {
                    let m: f64 = rng.sample(exp);
                    if rng.random::<bool>() {
                        m
                    } else {
                        -m
                    }
                })
            }
            PriorFamily::IsotropicExponential { lambda } => {
                // radial density ∝ t^{d-1} e^{-λt}
                let radius: f64 =
                    rng.sample(Gamma::new(d as f64, 1.0 / lambda).expect("validated"));
                unit_direction(d, rng) * radius
            }
        };
        SieveCoefficients::new(self.level, v).expect("prior draws are finite")
    }

    pub fn sample_seeded(&self, seed: u64) -> SieveCoefficients {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Lower estimate of `sup |π(c + b) / π(c + b') - 1|` over `‖b‖, ‖b'‖ ≤ radius`
    /// from `probes` random pairs in the ball.
    pub fn flatness_ratio(
        &self,
        center: &SieveCoefficients,
        radius: f64,
        probes: usize,
        seed: u64,
    ) -> Result<FlatnessReport> {
        self.check_level(center)?;
        if !(radius > 0.0) {
            return Err(Error::Config(format!(
                "flatness radius must be positive, got {radius}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let mut ratio: f64 = 0.0;
        let mut zero_density_probes = 0;
        for _ in 0..probes {
            let a = center.coeffs() + ball_point(d, radius, &mut rng);
            let b = center.coeffs() + ball_point(d, radius, &mut rng);
            let (la, lb) = (self.log_density_vec(&a), self.log_density_vec(&b));
            if la == f64::NEG_INFINITY || lb == f64::NEG_INFINITY {
                zero_density_probes += 1;
                continue;
            }
            ratio = ratio.max(((la - lb).exp() - 1.0).abs());
        }
        Ok(FlatnessReport {
            ratio: if zero_density_probes > 0 {
                f64::INFINITY
            } else {
                ratio
            },
            probes,
            zero_density_probes,
        })
    }

    /// `log Π(‖b - center‖ ≤ eps)` by Monte Carlo; `-∞` if no draw lands.
    pub fn small_ball_logprob(
        &self,
        center: &SieveCoefficients,
        eps: f64,
        draws: usize,
        seed: u64,
    ) -> Result<f64> {
        self.check_level(center)?;
        if !(eps > 0.0) {
            return Err(Error::Config(format!(
                "small-ball radius must be positive, got {eps}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hits = (0..draws)
            .filter(|_| (self.sample(&mut rng).coeffs() - center.coeffs()).norm() <= eps)
            .count();
        Ok((hits as f64 / draws as f64).ln())
    }

    fn check_level(&self, b: &SieveCoefficients) -> Result<()> {
        if b.level() != self.level {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: b.dim(),
            });
        }
        Ok(())
    }
}

/// Outcome of [`Prior::flatness_ratio`]. A positive `zero_density_probes`
/// count means the prior vanishes somewhere in the ball and flatness fails;
/// `ratio` is then infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub ratio: f64,
    pub probes: usize,
    pub zero_density_probes: usize,
}

impl FlatnessReport {
    pub fn violated(&self) -> bool {
        self.zero_density_probes > 0
    }
}

fn unit_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

fn ball_point<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    let u: f64 = rng.random();
    unit_direction(d, rng) * (radius * u.powf(1.0 / d as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn coeffs(level: u32, v: &[f64]) -> SieveCoefficients {
        SieveCoefficients::from_slice(level, v).unwrap()
    }

    #[test]
    fn rejects_nonpositive_scales() {
        assert!(Prior::gaussian(0.0, 1).is_err());
        assert!(Prior::new(PriorFamily::LaplaceProduct { lambda: -1.0 }, 1).is_err());
        assert!(Prior::new(
            PriorFamily::UniformProduct {
                half_width: f64::NAN
            },
            1
        )
        .is_err());
    }

    #[test]
    fn log_density_examples() {
        let g = Prior::gaussian(1.0, 1).unwrap();
        assert_eq!(g.log_density(&coeffs(1, &[0.0, 0.0])).unwrap(), 0.0);

        let u = Prior::new(PriorFamily::UniformProduct { half_width: 1.0 }, 1).unwrap();
        assert_eq!(
            u.log_density(&coeffs(1, &[2.0, 0.0])).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(u.log_density(&coeffs(1, &[1.0, -0.3])).unwrap(), 0.0);

        let l = Prior::new(PriorFamily::LaplaceProduct { lambda: 1.0 }, 1).unwrap();
        let d = l.log_density(&coeffs(1, &[2.0, -1.0])).unwrap()
            - l.log_density(&coeffs(1, &[0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(d, -2.0);

        assert!(matches!(
            g.log_density(&coeffs(2, &[0.0; 4])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn gaussian_draw_variance() {
        let p = Prior::gaussian(1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let draws: Vec<SieveCoefficients> = (0..n).map(|_| p.sample(&mut rng)).collect();
        for k in 0..2 {
            let col: Vec<f64> = draws.iter().map(|b| b.as_slice()[k]).collect();
            let var = crate::stats::std_dev(&col).powi(2);
            assert!((0.985..=1.015).contains(&var), "{var}");
        }
    }

    #[test]
    fn uniform_draws_stay_in_cube() {
        let p = Prior::new(PriorFamily::UniformProduct { half_width: 2.0 }, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            assert!(p.sample(&mut rng).as_slice().iter().all(|v| v.abs() <= 2.0));
        }
    }

    #[test]
    fn isotropic_mean_radius() {
        let p = Prior::new(PriorFamily::IsotropicExponential { lambda: 1.0 }, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| p.sample(&mut rng).coeffs().norm())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 4.0).abs() < 0.04, "{mean}");
    }

    #[test]
    fn laplace_draws_have_expected_abs_mean() {
        let p = Prior::new(PriorFamily::LaplaceProduct { lambda: 2.0 }, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let v: Vec<f64> = (0..n).map(|_| p.sample(&mut rng).as_slice()[0]).collect();
        let abs_mean = v.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!((abs_mean - 0.5).abs() < 0.01);
        assert!(crate::stats::mean(&v).abs() < 0.01);
    }

    #[test]
    fn flatness_examples() {
        let u = Prior::new(PriorFamily::UniformProduct { half_width: 1.0 }, 2).unwrap();
        let r = u
            .flatness_ratio(&coeffs(2, &[0.1; 4]), 0.5, 2048, 1)
            .unwrap();
        assert_eq!(r.ratio, 0.0);
        assert!(!r.violated());
        let r = u
            .flatness_ratio(&coeffs(2, &[0.9; 4]), 0.5, 2048, 1)
            .unwrap();
        assert!(r.violated());

        let g = Prior::gaussian(1.0, 1).unwrap();
        let r = g
            .flatness_ratio(&coeffs(1, &[0.0, 0.0]), 0.1, 2048, 2)
            .unwrap();
        assert!(r.ratio > 0.0 && r.ratio <= 0.01f64.exp() - 1.0);

        let l = Prior::new(PriorFamily::LaplaceProduct { lambda: 1.0 }, 2).unwrap();
        let bound = (2.0 * 0.05 * 2.0f64).exp() - 1.0;
        for center in [[0.0; 4], [1.0, -2.0, 0.3, 0.01]] {
            let r = l
                .flatness_ratio(&coeffs(2, &center), 0.05, 2048, 3)
                .unwrap();
            assert!(r.ratio <= bound);
        }
    }

    #[test]
    fn flatness_shrinks_with_radius() {
        let center = coeffs(2, &[0.5, -0.2, 0.1, 0.0]);
        for family in [
            PriorFamily::GaussianProduct { sigma: 1.0 },
            PriorFamily::LaplaceProduct { lambda: 1.0 },
            PriorFamily::IsotropicExponential { lambda: 1.0 },
        ] {
            let p = Prior::new(family, 2).unwrap();
            let ratios: Vec<f64> = [1.0, 0.3, 0.1, 0.03, 0.01]
                .iter()
                .map(|&r| p.flatness_ratio(&center, r, 2048, 7).unwrap().ratio)
                .collect();
            assert!(
                ratios.windows(2).all(|w| w[1] < w[0]),
                "{family:?}: {ratios:?}"
            );
        }
    }

    #[test]
    fn small_ball_examples() {
        let g = Prior::gaussian(1.0, 1).unwrap();
        let zero = coeffs(1, &[0.0, 0.0]);
        assert_eq!(g.small_ball_logprob(&zero, 1e6, 1000, 1).unwrap(), 0.0);

        // P(χ²₂ ≤ 1) = 1 - e^{-1/2}
        let lp = g.small_ball_logprob(&zero, 1.0, 200_000, 2).unwrap();
        assert!((lp - (1.0 - (-0.5f64).exp()).ln()).abs() < 0.01, "{lp}");

        let u = Prior::new(PriorFamily::UniformProduct { half_width: 1.0 }, 0).unwrap();
        let lp = u
            .small_ball_logprob(&coeffs(0, &[0.0]), 0.25, 200_000, 3)
            .unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 0.01, "{lp}");
    }

    #[test]
    fn serde_keys() {
        let p: PriorFamily =
            serde_json::from_str(r#"{"family":"uniform_product","A":2.0}"#).unwrap();
        assert_eq!(p, PriorFamily::UniformProduct { half_width: 2.0 });
        let p: PriorFamily =
            serde_json::from_str(r#"{"family":"isotropic_exponential","lambda":0.5}"#).unwrap();
        assert_eq!(p, PriorFamily::IsotropicExponential { lambda: 0.5 });
    }

    proptest! {
        #[test]
        fn product_priors_are_exchangeable(v in prop::collection::vec(-3.0f64..3.0, 4), shift in 1usize..4) {
            let mut rotated = v.clone();
            rotated.rotate_left(shift);
            for family in [
                PriorFamily::GaussianProduct { sigma: 1.3 },
                PriorFamily::UniformProduct { half_width: 2.0 },
                PriorFamily::LaplaceProduct { lambda: 0.7 },
            ] {
                let p = Prior::new(family, 2).unwrap();
                let a = p.log_density(&coeffs(2, &v)).unwrap();
                let b = p.log_density(&coeffs(2, &rotated)).unwrap();
                prop_assert!(a == b || (a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn isotropic_prior_is_rotation_invariant(
            v in prop::collection::vec(-3.0f64..3.0, 4),
            m in prop::collection::vec(-1.0f64..1.0, 16),
        ) {
            let q = DMatrix::from_vec(4, 4, m).qr().q();
            let p = Prior::new(PriorFamily::IsotropicExponential { lambda: 1.5 }, 2).unwrap();
            let b = DVector::from_vec(v);
            let rotated = &q * &b;
            prop_assert!((p.log_density_vec(&b) - p.log_density_vec(&rotated)).abs() < 1e-10);
        }
    }
}
