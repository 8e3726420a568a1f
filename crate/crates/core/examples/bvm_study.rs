//! KL divergence between the conjugate quasi-posterior and its Gaussian
//! limit as the sample grows.

use npiv_qb::harness::{run_bvm_study, ExperimentConfig, StudyGrid};
use npiv_qb::{DesignSpec, PriorFamily};

fn main() -> npiv_qb::Result<()> {
    let mut config =
        ExperimentConfig::synthetic(DesignSpec::mild(1.0, 2.0, 20, 0.12).with_errors(0.15, 0.25));
    config.seed = 1;
    config.level = Some(2);
    config.study = Some(StudyGrid {
        n_values: vec![1000, 4000, 16000, 64000],
        replications: 20,
        levels: vec![],
    });
    for sigma in [1.0, 10.0] {
        config.prior = PriorFamily::GaussianProduct { sigma };
        let report = run_bvm_study(&config)?;
        println!("prior sd {sigma}");
        for p in &report.points {
            println!(
                "  n {:>6}: median KL {:.3e}, TV bound {:.3e}",
                p.n,
                p.median,
                p.median_tv_bound.unwrap()
            );
        }
    }
    Ok(())
}
