//! The Gibbs posterior on a finite set of prior draws minimizes loss plus
//! KL-to-prior. Atoms are prior draws; the loss of an atom is the empirical
//! criterion `-quasi_loglik`. A small temperature keeps several atoms in
//! play; at `η = 1/2` these losses put nearly all weight on one atom.

use npiv_qb::analysis::{gibbs_weights, info_complexity};
use npiv_qb::{Basis, DesignSpec, EmpiricalMoments, Prior};

fn main() -> npiv_qb::Result<()> {
    let design = DesignSpec::mild(1.0, 2.0, 20, 0.12)
        .with_errors(0.15, 0.25)
        .build()?;
    let em = EmpiricalMoments::from_sample(&design.sample_seeded(400, 5), &Basis::cosine(), 1)?;
    let prior = Prior::gaussian(1.0, 1)?;
    let atoms: Vec<_> = (0..8).map(|i| prior.sample_seeded(100 + i)).collect();
    let losses: Vec<f64> = atoms.iter().map(|b| -em.quasi_loglik(b).unwrap()).collect();
    let uniform = vec![1.0 / 8.0; 8];
    let eta = 0.02;

    let gibbs = gibbs_weights(&losses, &uniform, eta)?;
    let best = info_complexity(&losses, &uniform, &gibbs, eta)?;
    println!("atom  loss       gibbs weight");
    for (i, (l, w)) in losses.iter().zip(&gibbs).enumerate() {
        println!("{i:>4}  {l:>9.3}  {w:.4}");
    }
    println!("complexity at Gibbs weights {best:.4}");
    println!(
        "complexity at prior weights {:.4}",
        info_complexity(&losses, &uniform, &uniform, eta)?
    );
    let argmin = losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut point = vec![0.0; 8];
    point[argmin] = 1.0;
    println!(
        "complexity at point mass on argmin {:.4}",
        info_complexity(&losses, &uniform, &point, eta)?
    );
    Ok(())
}
