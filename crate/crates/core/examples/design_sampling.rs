//! Build mildly and severely ill-posed designs, draw samples, and check
//! their assumptions.

use npiv_qb::stats::ks_statistic;
use npiv_qb::DesignSpec;

fn main() -> npiv_qb::Result<()> {
    let specs = [
        (
            "mild",
            DesignSpec::mild(1.0, 2.0, 20, 0.12).with_errors(0.15, 0.25),
        ),
        (
            "severe",
            DesignSpec::severe(1.0, 2.0, 30, 0.2).with_errors(0.1, 0.2),
        ),
    ];
    for (name, spec) in specs {
        let design = spec.build()?;
        println!("{name}: density bound {:.3}", design.density_bound());
        for level in 0..=4 {
            println!("  tau_{level} = {:.5}", design.true_tau(level)?);
        }
        let mut rng = npiv_qb::stats::replication_rng(7, 0, 0, 0);
        let (sample, proposals) = design.sample_with_proposals(20_000, &mut rng);
        println!(
            "  n = {}, rejection acceptance {:.3}, KS(x) {:.4}, KS(w) {:.4}",
            sample.len(),
            sample.len() as f64 / proposals as f64,
            ks_statistic(sample.x(), |v| v),
            ks_statistic(sample.w(), |v| v)
        );
        for check in design.validate_assumptions(4).checks {
            println!(
                "  [{}] {}: {}",
                if check.passed { "ok" } else { "!!" },
                check.name,
                check.detail
            );
        }
    }
    Ok(())
}
