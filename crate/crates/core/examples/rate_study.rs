//! Median L2 error of the quasi-Bayes estimator over a grid of sample sizes,
//! with the fitted log-log slope against the minimax exponent.

use npiv_qb::harness::{run_rate_study, ExperimentConfig, StudyGrid};
use npiv_qb::DesignSpec;

fn main() -> npiv_qb::Result<()> {
    let mut config =
        ExperimentConfig::synthetic(DesignSpec::mild(1.0, 2.0, 20, 0.12).with_errors(0.15, 0.25));
    config.seed = 1;
    config.study = Some(StudyGrid {
        n_values: vec![500, 1000, 2000, 4000, 8000, 16000],
        replications: 40,
        levels: vec![],
    });
    let report = run_rate_study(&config)?;
    println!("     n  J  median error    IQR   tau_hat/tau  mass outside");
    for p in &report.points {
        println!(
            "{:>6}  {}  {:>12.4}  {:>6.4}  {:>11.3}  {:>12.3}",
            p.n,
            p.level,
            p.median_error,
            p.iqr_error,
            p.median_tau_hat / p.tau,
            p.median_contraction_mass
        );
    }
    println!(
        "slope {:.3} (se {:.3}), theory {:.3}",
        report.slope,
        report.slope_se,
        report.theoretical_slope.unwrap()
    );
    Ok(())
}
