//! Lag-window estimation of the spectral density matrix of first differences
//! and its dynamic eigenvalues.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_desc, symmetrize};

/// Lag-window weight function `w(u)`, supported on `|u| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Bartlett,
    Parzen,
}

impl Kernel {
    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Bartlett => 1.0 - a,
            Kernel::Parzen => {
                if a <= 0.5 {
                    1.0 - 6.0 * a * a + 6.0 * a * a * a
                } else {
                    2.0 * (1.0 - a).powi(3)
                }
            }
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bartlett" => Ok(Kernel::Bartlett),
            "parzen" => Ok(Kernel::Parzen),
            other => Err(Error::Config(format!("unknown kernel `{other}` (bartlett|parzen)"))),
        }
    }
}

/// `max(1, floor(0.75 * sqrt(T)))`.
pub fn default_bandwidth(t_obs: usize) -> usize {
    ((0.75 * (t_obs as f64).sqrt()).floor() as usize).max(1)
}

/// Frequency grid `θ_h = π h / (B + 1/2)`, `h = -B..=B`.
pub fn frequency_grid(bandwidth: usize) -> Vec<f64> {
    let b = bandwidth as i64;
    (-b..=b).map(|h| PI * h as f64 / (bandwidth as f64 + 0.5)).collect()
}

/// Spectral density estimates on the symmetric frequency grid.
#[derive(Debug, Clone)]
pub struct SpectralDensity {
    pub bandwidth: usize,
    pub kernel: Kernel,
    /// `θ_h` for `h = -B..=B`; index `h + B`.
    pub grid: Vec<f64>,
    /// One Hermitian `n x n` matrix per grid point.
    pub matrices: Vec<DMatrix<Complex64>>,
    /// `n x (2B+1)` dynamic eigenvalues, descending down each column, once
    /// [`dynamic_eigenvalues`] has run.
    pub eigvals: Option<DMatrix<f64>>,
    /// Number of differenced observations behind the estimate.
    pub t_obs: usize,
}

impl SpectralDensity {
    pub fn n(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    /// Grid index of `θ = 0`.
    pub fn zero_index(&self) -> usize {
        self.bandwidth
    }

    /// Checks Hermitian symmetry, conjugate symmetry across `±θ` and
    /// (when eigenvalues are available) positive semidefiniteness.
    pub fn check_invariants(&self) -> Result<()> {
        let scale = self
            .matrices
            .iter()
            .map(|m| m.iter().fold(0.0_f64, |a, z| a.max(z.norm())))
            .fold(0.0_f64, f64::max)
            .max(1.0);
        for (h, m) in self.matrices.iter().enumerate() {
            if (m - m.adjoint()).iter().any(|z| z.norm() > 1e-10 * scale) {
                return Err(Error::Estimation(format!("spectral matrix at grid index {h} is not Hermitian")));
            }
            let mirror = &self.matrices[self.matrices.len() - 1 - h];
            if (m - mirror.conjugate()).iter().any(|z| z.norm() > 1e-10 * scale) {
                return Err(Error::Estimation(format!("conjugate symmetry fails at grid index {h}")));
            }
        }
        if let Some(ev) = &self.eigvals {
            if ev.iter().any(|v| *v < -1e-8 * scale) {
                return Err(Error::Estimation("spectral matrix has a negative eigenvalue".into()));
            }
        }
        Ok(())
    }
}

/// `(1/T) Σ_{t=1}^{T-k} Δx_t Δx_{t+k}'`; negative lags via transpose.
pub fn autocovariance(diffs: &DMatrix<f64>, k: i64) -> Result<DMatrix<f64>> {
    let t = diffs.ncols();
    let lag = k.unsigned_abs() as usize;
    if lag >= t {
        return Err(Error::InvalidInput(format!("lag {k} must be below the sample length {t}")));
    }
    let n_terms = t - lag;
    let g = diffs.columns(0, n_terms) * diffs.columns(lag, n_terms).transpose() / t as f64;
    Ok(if k < 0 { g.transpose() } else { g })
}

/// Lag-window spectrum from autocovariances `Γ_0..Γ_B` (non-negative lags).
pub fn spectrum_from_autocovariances(
    gammas: &[DMatrix<f64>],
    bandwidth: usize,
    kernel: Kernel,
    t_obs: usize,
) -> Result<SpectralDensity> {
    if gammas.len() != bandwidth + 1 {
        return Err(Error::Dimension(format!("need {} autocovariances, got {}", bandwidth + 1, gammas.len())));
    }
    let weights: Vec<f64> = (0..=bandwidth).map(|k| kernel.weight(k as f64 / bandwidth as f64)).collect();
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::InvalidInput("kernel weights must lie in [0, 1]".into()));
    }
    let n = gammas[0].nrows();
    // Σ(θ) = (2π)^{-1} [Γ_0 + Σ_k w_k ((Γ_k + Γ_k') cos kθ - i (Γ_k - Γ_k') sin kθ)]
    let sym: Vec<DMatrix<f64>> = gammas.iter().map(|g| g + g.transpose()).collect();
    let skew: Vec<DMatrix<f64>> = gammas.iter().map(|g| g - g.transpose()).collect();
    let grid = frequency_grid(bandwidth);
    let matrices: Vec<DMatrix<Complex64>> = grid
        .par_iter()
        .map(|&theta| {
            let mut re = gammas[0].clone();
            let mut im = DMatrix::zeros(n, n);
            for k in 1..=bandwidth {
                let w = weights[k];
                if w == 0.0 {
                    continue;
                }
                let (s, c) = (k as f64 * theta).sin_cos();
                re += &sym[k] * (w * c);
                if theta != 0.0 {
                    im -= &skew[k] * (w * s);
                }
            }
            let re = symmetrize(&re) / (2.0 * PI);
            let im = (&im - im.transpose()) * (0.5 / (2.0 * PI));
            DMatrix::from_fn(n, n, |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
        })
        .collect();
    Ok(SpectralDensity { bandwidth, kernel, grid, matrices, eigvals: None, t_obs })
}

/// Lag-window estimator of the spectral density of `diffs` (`n x T`).
pub fn lag_window_spectrum(diffs: &DMatrix<f64>, bandwidth: usize, kernel: Kernel) -> Result<SpectralDensity> {
    let t = diffs.ncols();
    if bandwidth == 0 || bandwidth >= t {
        return Err(Error::InvalidInput(format!("bandwidth {bandwidth} must lie in 1..{t}")));
    }
    let gammas = (0..=bandwidth)
        .map(|k| autocovariance(diffs, k as i64))
        .collect::<Result<Vec<_>>>()?;
    spectrum_from_autocovariances(&gammas, bandwidth, kernel, t)
}

fn hermitian_eigenvalues(m: &DMatrix<Complex64>, real_only: bool) -> Vec<f64> {
    let mut vals: Vec<f64> = if real_only {
        let re = m.map(|z| z.re);
        sym_eigen_desc(&re).0.iter().copied().collect()
    } else {
        m.clone().symmetric_eigenvalues().iter().copied().collect()
    };
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Real dynamic eigenvalues per frequency, descending; also stored in `sd`.
///
/// Eigenvalues at `-θ` equal those at `θ`, so only `θ >= 0` is decomposed.
pub fn dynamic_eigenvalues(sd: &mut SpectralDensity) -> DMatrix<f64> {
    let n = sd.n();
    let b = sd.bandwidth;
    let half: Vec<Vec<f64>> = (0..=b)
        .into_par_iter()
        .map(|h| hermitian_eigenvalues(&sd.matrices[b + h], h == 0))
        .collect();
    let mut out = DMatrix::zeros(n, 2 * b + 1);
    for (h, vals) in half.iter().enumerate() {
        for (j, v) in vals.iter().enumerate() {
            out[(j, b + h)] = *v;
            out[(j, b - h)] = *v;
        }
    }
    sd.eigvals = Some(out.clone());
    out
}
