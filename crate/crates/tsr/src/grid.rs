//! Collocation grids, Fourier spectral differentiation and trigonometric
//! interpolation on one base period.
//!
//! Everything downstream samples periodic quantities at the equispaced
//! phases `theta_j = 2*pi*j/n_ts` and represents harmonics in the centered
//! ordering `k = -(n_ts-1)/2 ..= (n_ts-1)/2`. Keeping one ordering
//! convention everywhere avoids sign and index bugs in the frequency-domain
//! cross-checks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Result, TsrError};

/// Temporal discretization backbone: phases, base frequency and the spectral
/// differentiation matrix.
///
/// The grid is immutable after construction and cheap to share read-only
/// across sweep workers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    n_ts: usize,
    omega0: f64,
    thetas: Vec<f64>,
    diff: DMatrix<f64>,
}

impl SpectralGrid {
    pub fn new(n_ts: usize, omega0: f64) -> Result<Self> {
        if !omega0.is_finite() || omega0 <= 0.0 {
            return Err(TsrError::InvalidGrid(format!(
                "base frequency must be positive, got {omega0}"
            )));
        }
        let diff = build_diff_matrix(n_ts)?;
        let thetas = (0..n_ts).map(|j| 2.0 * PI * j as f64 / n_ts as f64).collect();
        Ok(Self { n_ts, omega0, thetas, diff })
    }

    pub fn n_ts(&self) -> usize {
        self.n_ts
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega0
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn diff(&self) -> &DMatrix<f64> {
        &self.diff
    }

    /// Resolved harmonics in centered order `-(n_ts-1)/2 ..= (n_ts-1)/2`.
    pub fn harmonics(&self) -> Vec<i64> {
        let k_max = (self.n_ts as i64 - 1) / 2;
        (-k_max..=k_max).collect()
    }

    /// Unitary DFT matrix of this grid in natural row order.
    pub fn dft(&self) -> DMatrix<Complex64> {
        dft_matrix(self.n_ts).expect("grid construction already validated n_ts")
    }

    /// Centered Fourier coefficients `c_k` of one sampled channel, ordered
    /// like [`harmonics`](Self::harmonics), normalized so that
    /// `samples(theta) = sum_k c_k exp(i k theta)`.
    pub fn fourier_coeffs(&self, samples: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if samples.len() != self.n_ts {
            return Err(TsrError::DimensionMismatch(format!(
                "expected {} samples, got {}",
                self.n_ts,
                samples.len()
            )));
        }
        let n = self.n_ts as f64;
        let harmonics = self.harmonics();
        let coeffs = harmonics.iter().map(|&k| {
            let mut acc = Complex64::ZERO;
            for (j, s) in samples.iter().enumerate() {
                acc += s * Complex64::from_polar(1.0, -(k as f64) * self.thetas[j]);
            }
            acc / n
        });
        Ok(DVector::from_iterator(self.n_ts, coeffs))
    }

    /// Evaluate the unique degree-(n_ts-1)/2 trigonometric interpolant of the
    /// samples at an arbitrary phase. Exact at the collocation points and for
    /// any resolved harmonic.
    pub fn trig_interpolate(&self, samples: &DVector<Complex64>, theta: f64) -> Result<Complex64> {
        let coeffs = self.fourier_coeffs(samples)?;
        let mut value = Complex64::ZERO;
        for (&k, c) in self.harmonics().iter().zip(coeffs.iter()) {
            value += c * Complex64::from_polar(1.0, k as f64 * theta);
        }
        Ok(value)
    }
}

/// Fourier spectral differentiation matrix for an odd-sized periodic grid:
/// `D_jk = (1/2) (-1)^(j-k) csc(pi (j-k)/n_ts)` off the diagonal, zero on it.
/// Differentiates resolved trigonometric polynomials exactly.
pub fn build_diff_matrix(n_ts: usize) -> Result<DMatrix<f64>> {
    if n_ts < 3 || n_ts % 2 == 0 {
        return Err(TsrError::InvalidGrid(format!(
            "collocation count must be odd and >= 3, got {n_ts}"
        )));
    }
    let n = n_ts as i64;
    Ok(DMatrix::from_fn(n_ts, n_ts, |j, k| {
        if j == k {
            0.0
        } else {
            let d = j as i64 - k as i64;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (PI * d as f64 / n as f64).sin()
        }
    }))
}

/// Unitary DFT matrix `F_pq = exp(-i 2 pi p q / n_ts) / sqrt(n_ts)` in
/// natural row order; `F F^H = I`.
pub fn dft_matrix(n_ts: usize) -> Result<DMatrix<Complex64>> {
    if n_ts < 3 || n_ts % 2 == 0 {
        return Err(TsrError::InvalidGrid(format!(
            "collocation count must be odd and >= 3, got {n_ts}"
        )));
    }
    let scale = 1.0 / (n_ts as f64).sqrt();
    Ok(DMatrix::from_fn(n_ts, n_ts, |p, q| {
        Complex64::from_polar(scale, -2.0 * PI * (p as f64) * (q as f64) / n_ts as f64)
    }))
}

/// DFT with rows reordered to the centered harmonics `k = -(n_ts-1)/2 ..= (n_ts-1)/2`.
/// In this ordering `F D F^H = diag(i k)`.
pub fn centered_dft_matrix(n_ts: usize) -> Result<DMatrix<Complex64>> {
    let f = dft_matrix(n_ts)?;
    let mut out = DMatrix::zeros(n_ts, n_ts);
    let k_max = (n_ts as i64 - 1) / 2;
    for (row, k) in (-k_max..=k_max).enumerate() {
        let src = k.rem_euclid(n_ts as i64) as usize;
        out.row_mut(row).copy_from(&f.row(src));
    }
    Ok(out)
}
