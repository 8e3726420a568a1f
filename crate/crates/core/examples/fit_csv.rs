//! Fit real-data style input: write a sample to CSV, read it back, fit at an
//! explicit level and save the JSON and CSV report pair.
//!
//! `cargo run --example fit_csv -- path/to/data.csv 2` fits a file of your
//! own with header `y,x,w` at level 2.

use std::path::PathBuf;

use npiv_qb::harness::{load_csv, run_fit, save_report, write_sample_csv, ExperimentConfig};
use npiv_qb::{DesignSpec, PriorFamily};

fn main() -> npiv_qb::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = std::env::temp_dir().join("npiv-qb-fit-example");
    std::fs::create_dir_all(&out)?;
    let path = match args.next() {
        Some(p) => PathBuf::from(p),
        None => {
            let design = DesignSpec::mild(1.0, 2.0, 20, 0.12)
                .with_errors(0.15, 0.25)
                .build()?;
            let p = out.join("sample.csv");
            write_sample_csv(&design.sample_seeded(3000, 11), &p)?;
            p
        }
    };
    let level = args.next().map(|s| s.parse().expect("level")).unwrap_or(2);

    let sample = load_csv(&path)?;
    let mut config = ExperimentConfig::synthetic(DesignSpec::mild(1.0, 2.0, 20, 0.12));
    config.design = None;
    config.data = Some(path);
    config.level = Some(level);
    config.prior = PriorFamily::GaussianProduct { sigma: 10.0 };
    config.validate()?;

    let report = run_fit(&config, &sample)?;
    println!(
        "n {} at J = {}, tau_hat {:.4}",
        report.n, report.level, report.tau_hat
    );
    for k in 0..report.qb.len() {
        println!(
            "  b{}: qb {:>8.4}  mde {:>8.4}  95% [{:.4}, {:.4}]",
            k + 1,
            report.qb[k],
            report.mde[k],
            report.credible_lower[k],
            report.credible_upper[k]
        );
    }
    let (json, csv) = save_report(&report, &out, "fit")?;
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}
