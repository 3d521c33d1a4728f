//! Kernels for the uniform symmetric tridiagonal matrix with unit diagonal
//! and constant off-diagonal `alpha`.
//!
//! Nothing here materializes the dense matrix. The spectrum is known in
//! closed form, λ_k = 1 + 2α cos(kπ/(T+1)) for k = 1..T, which gives the
//! log-determinant, its derivative in α, and the positive-definiteness test
//! in O(T) or O(1).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};

/// `A(alpha, dim)`: ones on the diagonal, `alpha` on both off-diagonals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformTridiagonal {
    alpha: f64,
    dim: usize,
}

impl UniformTridiagonal {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("tridiagonal dimension must be at least 1"));
        }
        if !alpha.is_finite() {
            return Err(Error::domain(format!("off-diagonal value {alpha} is not finite")));
        }
        Ok(Self { alpha, dim })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// cos(kπ/(T+1)) for k = 1..T.
    pub fn spectrum_cosines(&self) -> impl Iterator<Item = f64> {
        let denom = (self.dim + 1) as f64;
        (1..=self.dim).map(move |k| (k as f64 * std::f64::consts::PI / denom).cos())
    }

    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> {
        let alpha = self.alpha;
        self.spectrum_cosines().map(move |c| 1.0 + 2.0 * alpha * c)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 1 {
            return 1.0;
        }
        let c1 = (std::f64::consts::PI / (self.dim + 1) as f64).cos();
        1.0 - 2.0 * self.alpha.abs() * c1
    }

    pub fn is_pd(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }

    /// vᵀ A v = Σ v_t² + 2α Σ v_t v_{t+1}.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        check_len(self.dim, v.len())?;
        let (sq, lag) = square_and_lag_sums(v);
        Ok(sq + 2.0 * self.alpha * lag)
    }

    /// out = A v.
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.dim, v.len())?;
        check_len(self.dim, out.len())?;
        let n = v.len();
        for t in 0..n {
            let mut acc = v[t];
            if t > 0 {
                acc += self.alpha * v[t - 1];
            }
            if t + 1 < n {
                acc += self.alpha * v[t + 1];
            }
            out[t] = acc;
        }
        Ok(())
    }

    /// log det A = Σ_k ln(1 + 2α cos(kπ/(T+1))).
    pub fn log_det(&self) -> Result<f64> {
        if !self.is_pd() {
            return Err(Error::domain(format!(
                "log-determinant of non-positive-definite tridiagonal (alpha = {}, T = {})",
                self.alpha, self.dim
            )));
        }
        if self.dim == 1 {
            return Ok(0.0);
        }
        let alpha = self.alpha;
        Ok(self.spectrum_cosines().map(|c| (2.0 * alpha * c).ln_1p()).sum())
    }

    /// d/dα log det A = Σ_k 2cos_k / (1 + 2α cos_k).
    pub fn log_det_derivative(&self) -> Result<f64> {
        if !self.is_pd() {
            return Err(Error::domain(format!(
                "log-determinant derivative outside the positive-definite region (alpha = {})",
                self.alpha
            )));
        }
        if self.dim == 1 {
            return Ok(0.0);
        }
        let alpha = self.alpha;
        Ok(self
            .spectrum_cosines()
            .map(|c| 2.0 * c / (1.0 + 2.0 * alpha * c))
            .sum())
    }

    /// A = L Lᵀ with L lower bidiagonal, in O(T).
    pub fn cholesky(&self) -> Result<BidiagonalFactor> {
        let n = self.dim;
        let mut diag = Vec::with_capacity(n);
        let mut sub = Vec::with_capacity(n.saturating_sub(1));
        diag.push(1.0);
        for t in 1..n {
            let l = self.alpha / diag[t - 1];
            let pivot = 1.0 - l * l;
            if !(pivot > 0.0) {
                return Err(Error::domain(format!(
                    "tridiagonal Cholesky failed at row {t} (alpha = {})",
                    self.alpha
                )));
            }
            sub.push(l);
            diag.push(pivot.sqrt());
        }
        Ok(BidiagonalFactor { diag, sub })
    }

    /// One draw from Normal(0, λ A⁻¹), i.e. precision A/λ.
    pub fn sample<R: Rng + ?Sized>(&self, lambda: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("scale {lambda} must be positive")));
        }
        let factor = self.cholesky()?;
        let scale = lambda.sqrt();
        let z: Vec<f64> = (0..self.dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(factor.solve_upper(&z))
    }
}

/// Lower bidiagonal Cholesky factor: `diag[t]` on the diagonal and
/// `sub[t]` at position (t+1, t).
#[derive(Debug, Clone)]
pub struct BidiagonalFactor {
    pub diag: Vec<f64>,
    pub sub: Vec<f64>,
}

impl BidiagonalFactor {
    /// Solves Lᵀ x = z by back-substitution.
    pub fn solve_upper(&self, z: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut x = vec![0.0; n];
        x[n - 1] = z[n - 1] / self.diag[n - 1];
        for t in (0..n - 1).rev() {
            x[t] = (z[t] - self.sub[t] * x[t + 1]) / self.diag[t];
        }
        x
    }
}

/// (Σ v_t², Σ v_t v_{t+1}).
pub fn square_and_lag_sums(v: &[f64]) -> (f64, f64) {
    let sq = v.iter().map(|x| x * x).sum();
    let lag = v.windows(2).map(|w| w[0] * w[1]).sum();
    (sq, lag)
}
