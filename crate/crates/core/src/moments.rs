//! Sufficient statistics of the quasi-likelihood.
//!
//! With `A = Φ̂_WX = Eₙ[φ(W)φ(X)ᵀ]`, `M = Φ̂_WW = Eₙ[φ(W)φ(W)ᵀ]` and
//! `c = Eₙ[φ(W)Y]`, the series estimate of the conditional moment is
//! `m̂(w, b) = φ(w)ᵀ M⁻ (c - A b)` and
//!
//! ```text
//! Eₙ[m̂²(W_i, b)] = (c - A b)ᵀ M⁻ (c - A b)
//! ```
//!
//! so the whole quasi-likelihood only depends on `(n, A, M, c)`.

use nalgebra::{DMatrix, DVector};

use crate::basis::{self, Basis, SieveCoefficients};
use crate::design::Sample;
use crate::error::{Error, Result};

/// Relative cutoff used when inverting `Φ̂_WW`.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// Spectral pseudo-inverse: singular values below `tol · s_max` are treated
/// as zero. Returns the inverse together with the retained rank.
pub fn pinv_with_rank(matrix: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, usize) {
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(cols, rows), 0);
    }
    let svd = matrix.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let cutoff = tol * s_max;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut out = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    (out, rank)
}

pub fn pinv(matrix: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    pinv_with_rank(matrix, tol).0
}

/// Empirical moments of a sample at resolution level `J`.
///
/// Immutable after construction; every method takes `&self`.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    n: usize,
    level: u32,
    basis: Basis,
    phi_ww: DMatrix<f64>,
    phi_wx: DMatrix<f64>,
    c: DVector<f64>,
    ww_inverse: DMatrix<f64>,
    ww_rank: usize,
}

impl EmpiricalMoments {
    pub fn from_sample(sample: &Sample, basis: &Basis, level: u32) -> Result<Self> {
        let d = basis::dim(level)?;
        let n = sample.len();
        if n == 0 {
            return Err(Error::Data("empty sample".into()));
        }
        // column-major accumulation of the upper triangle of Σ φ(W)φ(W)ᵀ
        let mut ww = vec![0.0; d * d];
        let mut wx = vec![0.0; d * d];
        let mut c = vec![0.0; d];
        let mut pw = vec![0.0; d];
        let mut px = vec![0.0; d];
        for (y, x, w) in sample.rows() {
            basis.eval_into(level, w, &mut pw)?;
            basis.eval_into(level, x, &mut px)?;
            for m in 0..d {
                let (xm, wm) = (px[m], pw[m]);
                let col = m * d;
                for l in 0..=m {
                    ww[col + l] += pw[l] * wm;
                }
                for l in 0..d {
                    wx[col + l] += pw[l] * xm;
                }
            }
            for l in 0..d {
                c[l] += pw[l] * y;
            }
        }
        let inv_n = 1.0 / n as f64;
        let mut phi_ww = DMatrix::from_vec(d, d, ww) * inv_n;
        phi_ww.fill_lower_triangle_with_upper_triangle();
        let phi_wx = DMatrix::from_vec(d, d, wx) * inv_n;
        let c = DVector::from_vec(c) * inv_n;
        Self::from_parts(n, level, basis.clone(), phi_ww, phi_wx, c)
    }

    /// Moments from precomputed averages.
    pub fn from_parts(
        n: usize,
        level: u32,
        basis: Basis,
        phi_ww: DMatrix<f64>,
        phi_wx: DMatrix<f64>,
        c: DVector<f64>,
    ) -> Result<Self> {
        let d = basis::dim(level)?;
        for shape in [phi_ww.shape(), phi_wx.shape()] {
            if shape != (d, d) {
                return Err(Error::Dimension {
                    expected: d,
                    got: if shape.0 != d { shape.0 } else { shape.1 },
                });
            }
        }
        if c.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: c.len(),
            });
        }
        if phi_ww
            .iter()
            .chain(phi_wx.iter())
            .chain(c.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Data("non-finite moment entry".into()));
        }
        let (ww_inverse, ww_rank) = pinv_with_rank(&phi_ww, DEFAULT_PINV_TOL);
        Ok(Self {
            n,
            level,
            basis,
            phi_ww,
            phi_wx,
            c,
            ww_inverse,
            ww_rank,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// `Φ̂_WW`.
    pub fn phi_ww(&self) -> &DMatrix<f64> {
        &self.phi_ww
    }

    /// `Φ̂_WX`.
    pub fn phi_wx(&self) -> &DMatrix<f64> {
        &self.phi_wx
    }

    /// `Eₙ[φ(W) Y]`.
    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn ww_inverse(&self) -> &DMatrix<f64> {
        &self.ww_inverse
    }

    pub fn ww_rank(&self) -> usize {
        self.ww_rank
    }

    pub fn ww_full_rank(&self) -> bool {
        self.ww_rank == self.dim()
    }

    fn check(&self, b: &SieveCoefficients) -> Result<()> {
        if b.level() != self.level {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: b.dim(),
            });
        }
        Ok(())
    }

    /// `c - Φ̂_WX b`.
    pub fn residual(&self, b: &SieveCoefficients) -> Result<DVector<f64>> {
        self.check(b)?;
        Ok(&self.c - &self.phi_wx * b.coeffs())
    }

    /// Series estimate `m̂(w, b)` of the conditional moment `E[Y - g(X) | W = w]`.
    pub fn mhat(&self, b: &SieveCoefficients, w: f64) -> Result<f64> {
        let r = self.residual(b)?;
        let phi = self.basis.eval_vector(self.level, w)?;
        Ok(phi.dot(&(&self.ww_inverse * r)))
    }

    /// `-(n/2) Eₙ[m̂²(W_i, b)]`, the log quasi-likelihood at temperature 1/2
    /// with the `b`-free term of the quadratic expansion dropped.
    pub fn quasi_loglik(&self, b: &SieveCoefficients) -> Result<f64> {
        let r = self.residual(b)?;
        Ok(self.quasi_loglik_residual(&r))
    }

    /// [`EmpiricalMoments::quasi_loglik`] for a raw coefficient vector of the
    /// right length; used in sampler inner loops.
    pub fn quasi_loglik_vec(&self, b: &DVector<f64>) -> f64 {
        let r = &self.c - &self.phi_wx * b;
        self.quasi_loglik_residual(&r)
    }

    fn quasi_loglik_residual(&self, r: &DVector<f64>) -> f64 {
        let q = r.dot(&(&self.ww_inverse * r));
        -0.5 * self.n as f64 * q.max(0.0)
    }

    /// Gradient `n Aᵀ M⁻ (c - A b)` of the log quasi-likelihood.
    pub fn gradient(&self, b: &SieveCoefficients) -> Result<DVector<f64>> {
        let r = self.residual(b)?;
        Ok(self.phi_wx.tr_mul(&(&self.ww_inverse * r)) * self.n as f64)
    }

    /// Negative Hessian `n Aᵀ M⁻ A` of the log quasi-likelihood.
    pub fn information(&self) -> DMatrix<f64> {
        let mut h = self.phi_wx.tr_mul(&(&self.ww_inverse * &self.phi_wx)) * self.n as f64;
        symmetrize(&mut h);
        h
    }

    /// Empirical sieve measure of ill-posedness: smallest singular value of
    /// `Φ̂_WX`.
    pub fn tau_hat(&self) -> f64 {
        self.phi_wx.singular_values().min()
    }

    /// `Δₙ = √n (c - Φ̂_WX b₀)`.
    pub fn delta_n(&self, b0: &SieveCoefficients) -> Result<DVector<f64>> {
        Ok(self.residual(b0)? * (self.n as f64).sqrt())
    }

    /// FNV-1a digest of the moment values, used as posterior provenance.
    pub fn fingerprint(&self) -> String {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(self.n as u64);
        eat(self.level as u64);
        for v in self
            .phi_ww
            .iter()
            .chain(self.phi_wx.iter())
            .chain(self.c.iter())
        {
            eat(v.to_bits());
        }
        format!("{h:016x}")
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}
