//! Empirical moments, the minimum-distance estimator and the Gaussian limit
//! law on one synthetic sample.

use npiv_qb::analysis::l2_error;
use npiv_qb::posterior::{bvm_approx, mde};
use npiv_qb::{Basis, DesignSpec, EmpiricalMoments};

fn main() -> npiv_qb::Result<()> {
    let design = DesignSpec::mild(1.0, 2.0, 20, 0.12)
        .with_errors(0.15, 0.25)
        .build()?;
    let sample = design.sample_seeded(5000, 3);
    for level in 0..=3 {
        let em = EmpiricalMoments::from_sample(&sample, &Basis::cosine(), level)?;
        let est = mde(&em);
        let law = bvm_approx(&em)?;
        let sds: Vec<String> = (0..em.dim())
            .map(|k| format!("{:.3}", law.marginal_sd(k)))
            .collect();
        println!(
            "J = {level}: tau_hat {:.4} (tau {:.4}), quasi-loglik at b_hat {:.2e}, L2 error {:.4}, sd {}",
            em.tau_hat(),
            design.true_tau(level)?,
            em.quasi_loglik(&est.coeffs)?,
            l2_error(&est.coeffs, &design),
            sds.join(" ")
        );
    }
    Ok(())
}
