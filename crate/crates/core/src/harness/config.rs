//! Experiment configuration and the resolution-level rule.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::design::{Design, DesignSpec, IllPosedness};
use crate::error::{Error, Result};
use crate::posterior::{SamplerConfig, DEFAULT_ETA};
use crate::priors::PriorFamily;

/// Default upper clamp on the automatic resolution level.
pub const DEFAULT_J_CAP: u32 = 6;

/// Default contraction-ball multiplier `M`.
pub const DEFAULT_CONTRACTION_MULTIPLIER: f64 = 5.0;

/// Sample-size grid and replication count for the studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyGrid {
    pub n_values: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Levels profiled by the ill-posedness study; empty means `0..=J_max`
    /// for the design.
    #[serde(default)]
    pub levels: Vec<u32>,
}

fn default_replications() -> usize {
    1
}

fn default_basis() -> BasisKind {
    BasisKind::Cosine
}

fn default_prior() -> PriorFamily {
    PriorFamily::GaussianProduct { sigma: 10.0 }
}

fn default_j_cap() -> u32 {
    DEFAULT_J_CAP
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_multiplier() -> f64 {
    DEFAULT_CONTRACTION_MULTIPLIER
}

fn default_output() -> PathBuf {
    PathBuf::from("reports")
}

/// JSON experiment description shared by every subcommand.
///
/// Exactly one of `design` (synthetic data with known truth) and `data`
/// (a `y,x,w` CSV file) drives `fit`; the studies and `simulate` need a
/// design. With real data the automatic level rule has no `(r, s)` to work
/// from, so `level` must be set explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default = "default_basis")]
    pub basis: BasisKind,
    /// Explicit resolution level; `None` selects it from `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default = "default_j_cap")]
    pub j_cap: u32,
    /// Constant `c'` of the severe-case rule; defaults to `1/(4c)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severe_constant: Option<f64>,
    #[serde(default = "default_prior")]
    pub prior: PriorFamily,
    /// Sampler settings for non-Gaussian priors. Its `eta` and `seed` are
    /// replaced by the top-level temperature and derived seeds.
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyGrid>,
    /// Sample size for `simulate` and synthetic `fit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_multiplier")]
    pub contraction_multiplier: f64,
}

impl ExperimentConfig {
    /// Minimal configuration around a synthetic design.
    pub fn synthetic(design: DesignSpec) -> Self {
        Self {
            design: Some(design),
            data: None,
            basis: default_basis(),
            level: None,
            j_cap: DEFAULT_J_CAP,
            severe_constant: None,
            prior: default_prior(),
            sampler: SamplerConfig::default(),
            study: None,
            n: None,
            seed: 0,
            output_dir: default_output(),
            eta: DEFAULT_ETA,
            contraction_multiplier: DEFAULT_CONTRACTION_MULTIPLIER,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.contraction_multiplier > 0.0) {
            return Err(Error::Config(
                "contraction_multiplier must be positive".into(),
            ));
        }
        if let Some(c) = self.severe_constant {
            if !(c > 0.0) {
                return Err(Error::Config("severe_constant must be positive".into()));
            }
        }
        if let Some(study) = &self.study {
            if study.n_values.is_empty() {
                return Err(Error::Config("study.n_values is empty".into()));
            }
            if study.n_values[0] == 0 || study.n_values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(
                    "study.n_values must be positive and strictly increasing".into(),
                ));
            }
            if study.replications == 0 {
                return Err(Error::Config(
                    "study.replications must be at least 1".into(),
                ));
            }
        }
        if self.design.is_some() && self.data.is_some() {
            return Err(Error::Config(
                "set either `design` or `data`, not both".into(),
            ));
        }
        if self.data.is_some() && self.level.is_none() {
            return Err(Error::Config(
                "real data has unknown (r, s); set an explicit `level`".into(),
            ));
        }
        Ok(())
    }

    pub fn build_design(&self) -> Result<Design> {
        self.design
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a synthetic `design`".into()))?
            .build()
    }

    pub fn study_grid(&self) -> Result<&StudyGrid> {
        self.study
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a `study` grid".into()))
    }

    /// Level for sample size `n`: the explicit level when set, otherwise the
    /// automatic rule for the design.
    pub fn level_for(&self, n: usize, design: Option<&Design>) -> Result<u32> {
        if let Some(j) = self.level {
            return Ok(j);
        }
        let design = design.ok_or_else(|| {
            Error::Config("automatic level selection needs a synthetic design".into())
        })?;
        Ok(choose_level(
            n,
            design.kind(),
            design.smoothness(),
            self.j_cap,
            self.severe_constant,
        ))
    }
}

/// Resolution level `J_n` from the rate-optimal rule.
///
/// Mild (`ρ_l ∝ l^{-r}`): `J = round(log₂ n^{1/(2r+2s+1)})`.
/// Severe (`ρ_l ∝ e^{-cl}`): `J = round(log₂(c' ln n))`, with `c' = 1/(4c)`
/// unless given. Both are clamped to `[0, j_cap]`.
pub fn choose_level(
    n: usize,
    kind: IllPosedness,
    smoothness: f64,
    j_cap: u32,
    severe_constant: Option<f64>,
) -> u32 {
    let n = (n.max(2)) as f64;
    let raw = match kind {
        IllPosedness::Mild { r } => n.log2() / (2.0 * r + 2.0 * smoothness + 1.0),
        IllPosedness::Severe { c } => {
            let c_prime = severe_constant.unwrap_or(1.0 / (4.0 * c));
            (c_prime * n.ln()).log2()
        }
    };
    if !raw.is_finite() || raw <= 0.0 {
        return 0;
    }
    (raw.round() as u32).min(j_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MILD: IllPosedness = IllPosedness::Mild { r: 1.0 };

    #[test]
    fn level_rule_examples() {
        assert_eq!(choose_level(16384, MILD, 2.0, 6, None), 2);
        assert_eq!(choose_level(128, MILD, 2.0, 6, None), 1);
        let n = 8f64.exp().round() as usize;
        assert_eq!(
            choose_level(n, IllPosedness::Severe { c: 1.0 }, 2.0, 6, None),
            1
        );
        assert_eq!(
            choose_level(1 << 40, IllPosedness::Mild { r: 0.0 }, 0.0, 6, None),
            6
        );
        assert_eq!(
            choose_level(2, IllPosedness::Severe { c: 5.0 }, 1.0, 6, None),
            0
        );
    }

    proptest! {
        #[test]
        fn level_rule_is_monotone(r in 0.1f64..3.0, s in 0.5f64..4.0, n in 2usize..1_000_000) {
            let kind = IllPosedness::Mild { r };
            prop_assert!(choose_level(n, kind, s, 6, None) <= choose_level(n + n / 3 + 1, kind, s, 6, None));
            let sev = IllPosedness::Severe { c: r };
            prop_assert!(choose_level(n, sev, s, 6, None) <= choose_level(n + n / 3 + 1, sev, s, 6, None));
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"{
            "design": {"kind": "mild", "r": 1.0, "scale": 0.1, "L": 20, "s": 2.0},
            "study": {"n_values": [100, 200], "replications": 3},
            "seed": 9
        }"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.prior, PriorFamily::GaussianProduct { sigma: 10.0 });
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(back, config);

        let mut bad = config.clone();
        bad.study.as_mut().unwrap().n_values = vec![200, 100];
        assert!(matches!(bad.validate(), Err(Error::Config(_))));

        let mut real = config.clone();
        real.design = None;
        real.data = Some("data.csv".into());
        assert!(real.validate().is_err());
        real.level = Some(2);
        real.validate().unwrap();

        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 1}"#).is_err());
    }
}
