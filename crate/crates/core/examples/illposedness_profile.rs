//! Empirical sieve measure of ill-posedness against its population value.

use npiv_qb::analysis::illposedness_profile;
use npiv_qb::{Basis, DesignSpec};

fn main() -> npiv_qb::Result<()> {
    let specs = [
        (
            "mild r = 1",
            DesignSpec::mild(1.0, 2.0, 20, 0.12).with_errors(0.15, 0.25),
        ),
        (
            "severe c = 1",
            DesignSpec::severe(1.0, 2.0, 30, 0.2).with_errors(0.1, 0.2),
        ),
    ];
    for (name, spec) in specs {
        let design = spec.build()?;
        let profile = illposedness_profile(
            &design,
            &Basis::cosine(),
            &[1000, 10_000, 100_000],
            &[1, 2, 3, 4],
            10,
            9,
        )?;
        println!("{name}");
        for r in &profile.rows {
            println!(
                "  n {:>6} J {}: tau {:.2e}  median tau_hat {:.2e}  IQR {:.1e}{}",
                r.n,
                r.level,
                r.tau,
                r.median_tau_hat,
                r.iqr_tau_hat,
                if r.flagged { "  margin fails" } else { "" }
            );
        }
    }
    Ok(())
}
