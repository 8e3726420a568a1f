//! Random-walk Metropolis against the closed-form Gaussian quasi-posterior.
//!
//! Run with `cargo run --release --example conjugate_vs_rwm`.

use npiv_qb::posterior::{conjugate_posterior, rwm_sample};
use npiv_qb::stats::ks_statistic;
use npiv_qb::{Basis, DesignSpec, EmpiricalMoments, Prior, SamplerConfig};

fn main() -> npiv_qb::Result<()> {
    let design = DesignSpec::mild(1.0, 2.0, 20, 0.12)
        .with_errors(0.15, 0.25)
        .build()?;
    let sample = design.sample_seeded(2000, 17);
    let em = EmpiricalMoments::from_sample(&sample, &Basis::cosine(), 2)?;
    let prior = Prior::gaussian(2.0, 2)?;

    let exact = conjugate_posterior(&em, &prior)?;
    let config = SamplerConfig {
        seed: 17,
        thin: 10,
        ..SamplerConfig::default()
    };
    let pr = rwm_sample(&em, &prior, &config)?;
    let draws = pr.mcmc().expect("sampled posterior");
    let se = draws.mean_standard_errors();

    println!(
        "acceptance {:.3}, step {:.3}",
        draws.diagnostics.acceptance_rate, draws.diagnostics.step_sizes[0]
    );
    println!("coef      exact mean    rwm mean   mc se     ess      ks");
    for (k, se_k) in se.iter().enumerate() {
        let col = draws.column(k);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let ks = ks_statistic(&col, |x| exact.marginal_cdf(k, x));
        println!(
            "b{:<3} {:>12.5} {:>11.5} {:>8.5} {:>8.0} {:>7.4}",
            k + 1,
            exact.mean()[k],
            mean,
            se_k,
            draws.diagnostics.ess[k],
            ks
        );
    }
    Ok(())
}
