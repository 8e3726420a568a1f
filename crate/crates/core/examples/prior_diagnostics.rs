//! Draw from each prior family and report its local flatness and small-ball
//! probability around the truth.

use npiv_qb::{DesignSpec, Prior, PriorFamily};

fn main() -> npiv_qb::Result<()> {
    let design = DesignSpec::mild(1.0, 2.0, 20, 0.12).build()?;
    let level = 2;
    let truth = design.truncated_coeffs(level)?;
    let families = [
        PriorFamily::GaussianProduct { sigma: 2.0 },
        PriorFamily::UniformProduct { half_width: 3.0 },
        PriorFamily::LaplaceProduct { lambda: 1.0 },
        PriorFamily::IsotropicExponential { lambda: 1.0 },
    ];
    for family in families {
        let prior = Prior::new(family, level)?;
        let draw = prior.sample_seeded(1);
        let flat = prior.flatness_ratio(&truth, 0.05, 2000, 2)?;
        let ball = prior.small_ball_logprob(&truth, 0.5, 200_000, 3)?;
        println!(
            "{:<22} log density at truth {:>8.3}, flatness ratio (r = 0.05) {:.4}, log P(ball 0.5) {:.2}, draw {:.2?}",
            family.name(),
            prior.log_density(&truth)?,
            flat.ratio,
            ball,
            draw.as_slice()
        );
    }
    Ok(())
}
