//! Orthonormal function systems on `[0, 1]` truncated at dyadic size `2^J`.
//!
//! Two systems are provided. The cosine system `φ_1 = 1`,
//! `φ_l(x) = √2 cos(π (l-1) x)` is the default and is also the basis in which
//! the synthetic designs diagonalize their operator. The Haar system spans the
//! dyadic step functions and exercises the wavelet code path.
//!
//! Indexing in docs is 1-based (`φ_1` is the constant), storage is 0-based:
//! entry `i` of every vector returned here is `φ_{i+1}`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of quadrature nodes.
pub const DEFAULT_NODES: usize = 4096;

/// Largest supported resolution level.
pub const MAX_LEVEL: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Cosine,
    Haar,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::Cosine => f.write_str("cosine"),
            BasisKind::Haar => f.write_str("haar"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    GaussLegendre,
    Midpoint,
}

/// Quadrature nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Quadrature {
    rule: QuadratureRule,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(rule: QuadratureRule, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("quadrature needs at least one node".into()));
        }
        let (nodes, weights) = match rule {
            QuadratureRule::GaussLegendre => gauss_legendre_unit(count),
            QuadratureRule::Midpoint => {
                let h = 1.0 / count as f64;
                (
                    (0..count).map(|i| (i as f64 + 0.5) * h).collect(),
                    vec![h; count],
                )
            }
        };
        Ok(Self {
            rule,
            nodes,
            weights,
        })
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫₀¹ f` under this rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre rule mapped from `[-1, 1]` to `[0, 1]`.
///
/// Roots of `P_n` by Newton iteration from the Tricomi initial guess; weights
/// from `2 / ((1 - x²) P_n'(x)²)`.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; store ascending on [0, 1]
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 0.5 * w;
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// An orthonormal system together with the quadrature used to integrate
/// against it. Cheap to clone; the quadrature table is shared.
#[derive(Debug, Clone)]
pub struct Basis {
    kind: BasisKind,
    quadrature: Arc<Quadrature>,
}

impl Basis {
    /// Basis with its default quadrature: 4096-node Gauss–Legendre for the
    /// cosine system, the 4096-cell dyadic midpoint rule for Haar (exact for
    /// Haar integrands up to level 11).
    pub fn new(kind: BasisKind) -> Self {
        static GAUSS: OnceLock<Arc<Quadrature>> = OnceLock::new();
        static MIDPOINT: OnceLock<Arc<Quadrature>> = OnceLock::new();
        let (cell, rule) = match kind {
            BasisKind::Cosine => (&GAUSS, QuadratureRule::GaussLegendre),
            BasisKind::Haar => (&MIDPOINT, QuadratureRule::Midpoint),
        };
        let quadrature = cell
            .get_or_init(|| Arc::new(Quadrature::new(rule, DEFAULT_NODES).expect("valid default")))
            .clone();
        Self { kind, quadrature }
    }

    pub fn cosine() -> Self {
        Self::new(BasisKind::Cosine)
    }

    pub fn haar() -> Self {
        Self::new(BasisKind::Haar)
    }

    pub fn with_quadrature(kind: BasisKind, rule: QuadratureRule, nodes: usize) -> Result<Self> {
        Ok(Self {
            kind,
            quadrature: Arc::new(Quadrature::new(rule, nodes)?),
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// `φ^J(x) = (φ_1(x), …, φ_{2^J}(x))`.
    pub fn eval_vector(&self, level: u32, x: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(dim(level)?);
        self.eval_into(level, x, out.as_mut_slice())?;
        Ok(out)
    }

    /// Writes `φ^J(x)` into `out`, whose length must be `2^J`.
    pub fn eval_into(&self, level: u32, x: f64, out: &mut [f64]) -> Result<()> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain { value: x });
        }
        let d = dim(level)?;
        if out.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: out.len(),
            });
        }
        match self.kind {
            BasisKind::Cosine => cosine_into(x, out),
            BasisKind::Haar => haar_into(level, x, out),
        }
        Ok(())
    }

    /// Quadrature Gram matrix `(∫ φ_l φ_m)` over the first `2^J` functions.
    pub fn gram(&self, level: u32) -> Result<DMatrix<f64>> {
        let d = dim(level)?;
        let needed = d << 4;
        if self.quadrature.len() < needed {
            return Err(Error::Config(format!(
                "gram at level {level} needs at least {needed} quadrature nodes, have {}",
                self.quadrature.len()
            )));
        }
        let mut g = DMatrix::zeros(d, d);
        let mut phi = vec![0.0; d];
        for (&x, &w) in self.quadrature.nodes.iter().zip(&self.quadrature.weights) {
            self.eval_into(level, x, &mut phi)?;
            for l in 0..d {
                let wl = w * phi[l];
                for m in l..d {
                    g[(l, m)] += wl * phi[m];
                }
            }
        }
        g.fill_lower_triangle_with_upper_triangle();
        Ok(g)
    }

    /// Coefficients `∫ φ_l f` of the projection of `f` onto the level-`J` sieve.
    pub fn project<F: Fn(f64) -> f64>(&self, level: u32, f: F) -> Result<SieveCoefficients> {
        let d = dim(level)?;
        let mut acc = DVector::zeros(d);
        let mut phi = vec![0.0; d];
        for (&x, &w) in self.quadrature.nodes.iter().zip(&self.quadrature.weights) {
            let fx = f(x);
            if !fx.is_finite() {
                return Err(Error::Data(format!("function value {fx} at x = {x}")));
            }
            self.eval_into(level, x, &mut phi)?;
            for (a, p) in acc.iter_mut().zip(&phi) {
                *a += w * fx * p;
            }
        }
        SieveCoefficients::new(level, acc)
    }

    /// `g(x) = Σ b_l φ_l(x)`.
    pub fn synthesize(&self, b: &SieveCoefficients, x: f64) -> Result<f64> {
        let mut phi = vec![0.0; b.dim()];
        self.eval_into(b.level(), x, &mut phi)?;
        Ok(b.coeffs().iter().zip(&phi).map(|(c, p)| c * p).sum())
    }
}

/// `2^J`, rejecting levels that would not fit comfortably in memory.
pub fn dim(level: u32) -> Result<usize> {
    if level > MAX_LEVEL {
        return Err(Error::Config(format!(
            "resolution level {level} exceeds the supported maximum {MAX_LEVEL}"
        )));
    }
    Ok(1usize << level)
}

/// `√2 cos(π k x)` for `k = 1, …` via the Chebyshev recurrence.
fn cosine_into(x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    let c1 = (PI * x).cos();
    let mut prev = 1.0;
    let mut cur = c1;
    for slot in out.iter_mut().skip(1) {
        *slot = SQRT_2 * cur;
        let next = 2.0 * c1 * cur - prev;
        prev = cur;
        cur = next;
    }
}

/// Haar system: `φ_1 = 1`, then `ψ_{j,k}(x) = 2^{j/2} ψ(2^j x - k)` stored at
/// index `2^j + k`. Supports are half-open except the last cell, which also
/// owns `x = 1`.
fn haar_into(level: u32, x: f64, out: &mut [f64]) {
    out.fill(0.0);
    out[0] = 1.0;
    for j in 0..level {
        let cells = 1usize << j;
        let scaled = x * cells as f64;
        let k = (scaled.floor() as usize).min(cells - 1);
        let t = scaled - k as f64;
        let amp = (cells as f64).sqrt();
        out[cells + k] = if t < 0.5 { amp } else { -amp };
    }
}

/// Coefficient vector `b^J ∈ ℝ^{2^J}` of a sieve function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoefficients", into = "RawCoefficients")]
pub struct SieveCoefficients {
    level: u32,
    coeffs: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCoefficients {
    level: u32,
    coeffs: Vec<f64>,
}

impl TryFrom<RawCoefficients> for SieveCoefficients {
    type Error = Error;

    fn try_from(raw: RawCoefficients) -> Result<Self> {
        Self::new(raw.level, DVector::from_vec(raw.coeffs))
    }
}

impl From<SieveCoefficients> for RawCoefficients {
    fn from(b: SieveCoefficients) -> Self {
        RawCoefficients {
            level: b.level,
            coeffs: b.coeffs.as_slice().to_vec(),
        }
    }
}

impl SieveCoefficients {
    pub fn new(level: u32, coeffs: DVector<f64>) -> Result<Self> {
        let d = dim(level)?;
        if coeffs.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: coeffs.len(),
            });
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::Data(format!("non-finite coefficient {bad}")));
        }
        Ok(Self { level, coeffs })
    }

    pub fn from_slice(level: u32, coeffs: &[f64]) -> Result<Self> {
        Self::new(level, DVector::from_column_slice(coeffs))
    }

    pub fn zeros(level: u32) -> Result<Self> {
        Ok(Self {
            level,
            coeffs: DVector::zeros(dim(level)?),
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coeffs.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.coeffs
    }
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn max_identity_gap(g: &DMatrix<f64>) -> f64 {
        let d = g.nrows();
        (g - DMatrix::<f64>::identity(d, d)).amax()
    }

    #[test]
    fn cosine_values_at_endpoints_and_midpoint() {
        let b = Basis::cosine();
        let v = b.eval_vector(1, 0.0).unwrap();
        assert_abs_diff_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], 1.414_213_562_4, epsilon = 1e-10);
        let v = b.eval_vector(1, 0.5).unwrap();
        assert_abs_diff_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cosine_recurrence_matches_direct_evaluation() {
        let b = Basis::cosine();
        for &x in &[0.0, 0.013, 0.37, 0.5, 0.91, 1.0] {
            let v = b.eval_vector(6, x).unwrap();
            for l in 1..64 {
                let direct = SQRT_2 * (PI * l as f64 * x).cos();
                assert_abs_diff_eq!(v[l], direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn haar_matches_mother_wavelet() {
        let b = Basis::haar();
        let v = b.eval_vector(1, 0.25).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 1.0]);
        let v = b.eval_vector(1, 0.75).unwrap();
        assert_eq!(v.as_slice(), &[1.0, -1.0]);
        // level 2: ψ_{1,0} lives on [0, ½) with amplitude √2
        let v = b.eval_vector(2, 0.3).unwrap();
        assert_abs_diff_eq!(v[2], -SQRT_2);
        assert_eq!(v[3], 0.0);
        let v = b.eval_vector(2, 1.0).unwrap();
        assert_abs_diff_eq!(v[3], -SQRT_2);
    }

    #[test]
    fn rejects_points_outside_unit_interval() {
        let b = Basis::cosine();
        assert!(matches!(b.eval_vector(2, 1.5), Err(Error::Domain { .. })));
        assert!(matches!(b.eval_vector(2, -1e-9), Err(Error::Domain { .. })));
        assert!(b
            .synthesize(&SieveCoefficients::zeros(1).unwrap(), 2.0)
            .is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let q = Quadrature::new(QuadratureRule::GaussLegendre, 8).unwrap();
        // degree ≤ 15 exact
        for k in 0..16 {
            let exact = 1.0 / (k as f64 + 1.0);
            assert_abs_diff_eq!(q.integrate(|x| x.powi(k)), exact, epsilon = 1e-14);
        }
        let big = Quadrature::new(QuadratureRule::GaussLegendre, DEFAULT_NODES).unwrap();
        assert_abs_diff_eq!(big.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(big.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn gram_is_identity() {
        let g = Basis::cosine().gram(1).unwrap();
        assert!(max_identity_gap(&g) < 1e-10);
        let g = Basis::haar().gram(2).unwrap();
        assert!(max_identity_gap(&g) < 1e-12);
        let g = Basis::cosine().gram(3).unwrap();
        assert!(max_identity_gap(&g) < 1e-10);
    }

    #[test]
    fn gram_agrees_with_ten_times_finer_rule() {
        // oracle: composite 10-point Gauss–Legendre on 4096 panels (40960 nodes)
        let panel = Quadrature::new(QuadratureRule::GaussLegendre, 10).unwrap();
        let b = Basis::cosine();
        let panels = 4096;
        let mut fine = DMatrix::<f64>::zeros(8, 8);
        for p in 0..panels {
            let (lo, h) = (p as f64 / panels as f64, 1.0 / panels as f64);
            for (&t, &w) in panel.nodes().iter().zip(panel.weights()) {
                let v = b.eval_vector(3, lo + h * t).unwrap();
                fine += &v * v.transpose() * (w * h);
            }
        }
        let coarse = b.gram(3).unwrap();
        assert!((coarse - fine).amax() < 1e-10);
    }

    #[test]
    fn orthonormal_up_to_level_six() {
        for basis in [Basis::cosine(), Basis::haar()] {
            for level in 0..=6 {
                let g = basis.gram(level).unwrap();
                assert!(
                    max_identity_gap(&g) < 1e-8,
                    "{} level {level}",
                    basis.kind()
                );
            }
        }
    }

    #[test]
    fn gram_requires_enough_nodes() {
        let b =
            Basis::with_quadrature(BasisKind::Cosine, QuadratureRule::GaussLegendre, 32).unwrap();
        assert!(b.gram(1).is_ok());
        assert!(matches!(b.gram(2), Err(Error::Config(_))));
    }

    #[test]
    fn project_known_functions() {
        let b = Basis::cosine();
        let c = b.project(3, |_| 3.0).unwrap();
        assert_abs_diff_eq!(c.as_slice()[0], 3.0, epsilon = 1e-12);
        assert!(c.as_slice()[1..].iter().all(|v| v.abs() < 1e-12));

        let c = b.project(2, |x| SQRT_2 * (PI * x).cos()).unwrap();
        let expect = [0.0, 1.0, 0.0, 0.0];
        for (got, want) in c.as_slice().iter().zip(expect) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }

        // ∫ x √2 cos(πx) dx = -2√2/π²; checked against composite Simpson
        let c = b.project(1, |x| x).unwrap();
        let simpson = {
            let m = 20_000;
            let h = 1.0 / m as f64;
            let f = |x: f64| x * SQRT_2 * (PI * x).cos();
            let mut s = f(0.0) + f(1.0);
            for i in 1..m {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            s * h / 3.0
        };
        assert_abs_diff_eq!(c.as_slice()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.as_slice()[1], simpson, epsilon = 1e-10);
        assert_abs_diff_eq!(c.as_slice()[1], -2.0 * SQRT_2 / (PI * PI), epsilon = 1e-12);
    }

    #[test]
    fn project_rejects_non_finite_values() {
        let r = Basis::cosine().project(1, |x| if x > 0.5 { f64::NAN } else { 0.0 });
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn synthesize_examples() {
        let b = Basis::cosine();
        let one = SieveCoefficients::from_slice(1, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(b.synthesize(&one, 0.77).unwrap(), 1.0);
        let second = SieveCoefficients::from_slice(1, &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(
            b.synthesize(&second, 0.0).unwrap(),
            1.414_213_562_4,
            epsilon = 1e-10
        );
        let mix = SieveCoefficients::from_slice(1, &[2.0, -1.0]).unwrap();
        assert_abs_diff_eq!(b.synthesize(&mix, 0.5).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn sup_norm_growth_bound() {
        for basis in [Basis::cosine(), Basis::haar()] {
            for level in 0..=6 {
                let bound = 2.0 * 2f64.powf(level as f64 / 2.0);
                for i in 0..=1024 {
                    let x = i as f64 / 1024.0;
                    let v = basis.eval_vector(level, x).unwrap();
                    assert!(v.norm() <= bound);
                }
            }
        }
    }

    #[test]
    fn coefficients_validate_length_and_finiteness() {
        assert!(matches!(
            SieveCoefficients::from_slice(2, &[1.0, 2.0]),
            Err(Error::Dimension {
                expected: 4,
                got: 2
            })
        ));
        assert!(SieveCoefficients::from_slice(0, &[f64::INFINITY]).is_err());
        let json = r#"{"level":1,"coeffs":[1.0]}"#;
        assert!(serde_json::from_str::<SieveCoefficients>(json).is_err());
    }
}
