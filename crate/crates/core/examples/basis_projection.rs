//! Project a function onto the cosine and Haar sieves and measure the
//! truncation error as the level grows.

use npiv_qb::{Basis, BasisKind};

fn main() -> npiv_qb::Result<()> {
    let g = |x: f64| (3.0 * x).sin() + x * x;
    for kind in [BasisKind::Cosine, BasisKind::Haar] {
        let basis = Basis::new(kind);
        println!("{kind} basis");
        for level in 0..=5 {
            let b = basis.project(level, g)?;
            let err = basis
                .quadrature()
                .integrate(|x| (g(x) - basis.synthesize(&b, x).unwrap()).powi(2))
                .sqrt();
            println!("  J = {level}  dim {:>2}  L2 error {err:.2e}", b.dim());
        }
        let gram = basis.gram(3)?;
        let off = (gram - nalgebra::DMatrix::identity(8, 8)).abs().max();
        println!("  max |G - I| at J = 3: {off:.1e}");
    }
    Ok(())
}
