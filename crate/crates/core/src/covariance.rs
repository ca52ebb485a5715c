//! Sample autocovariances, the block-Toeplitz lift and its adjoint, and
//! truncated periodogram estimates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Trajectory;
use crate::linalg::{self, CMatrix};
use crate::model::{FrequencyGrid, SpectrumGrid};

#[derive(Debug, Error)]
pub enum CovarianceError {
    #[error("lag {lag} is too large for {samples} samples")]
    LagTooLarge { lag: usize, samples: usize },
    #[error("leading block is not symmetric (asymmetry {0:.3e})")]
    AsymmetricLeadBlock(f64),
    #[error("lag {index} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("empty lag list")]
    Empty,
    #[error("spectral estimate is indefinite (min eigenvalue {0:.3e})")]
    IndefiniteEstimate(f64),
    #[error("matrix dimension {dim} is not a multiple of block size {block}")]
    BlockMismatch { dim: usize, block: usize },
    #[error("block-Toeplitz matrix is singular")]
    Singular,
}

/// Autocovariance lags `R_0..R_p` and the sample count behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSequence {
    lags: Vec<DMatrix<f64>>,
    n_samples: usize,
}

impl CovSequence {
    pub fn new(lags: Vec<DMatrix<f64>>, n_samples: usize) -> Result<Self, CovarianceError> {
        check_lags(&lags)?;
        Ok(Self { lags, n_samples })
    }

    pub fn lags(&self) -> &[DMatrix<f64>] {
        &self.lags
    }

    pub fn lag(&self, k: usize) -> &DMatrix<f64> {
        &self.lags[k]
    }

    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.lags[0].nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// First `p + 1` lags.
    pub fn truncate(&self, p: usize) -> Self {
        Self {
            lags: self.lags[..=p.min(self.max_lag())].to_vec(),
            n_samples: self.n_samples,
        }
    }

    pub fn to_file(&self) -> CovSequenceFile {
        CovSequenceFile {
            lags: self.lags.iter().map(linalg::to_rows).collect(),
            n_samples: self.n_samples,
        }
    }
}

/// JSON form: row-major lag matrices plus the sample count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovSequenceFile {
    pub lags: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "N")]
    pub n_samples: usize,
}

fn check_lags(lags: &[DMatrix<f64>]) -> Result<(), CovarianceError> {
    let first = lags.first().ok_or(CovarianceError::Empty)?;
    let n = first.nrows();
    for (index, l) in lags.iter().enumerate() {
        if l.shape() != (n, n) {
            return Err(CovarianceError::ShapeMismatch {
                index,
                got: l.shape(),
                expected: (n, n),
            });
        }
    }
    let asym = (first - first.transpose()).norm();
    if asym > 1e-10 * (1.0 + first.norm()) {
        return Err(CovarianceError::AsymmetricLeadBlock(asym));
    }
    Ok(())
}

/// `R̂_k = (1/N) Σ_t y(t+k) y(t)ᵀ`, k = 0..p.
pub fn sample_autocov(y: &Trajectory, p: usize) -> Result<CovSequence, CovarianceError> {
    let s = y.samples();
    let big_n = s.nrows();
    if p >= big_n {
        return Err(CovarianceError::LagTooLarge {
            lag: p,
            samples: big_n,
        });
    }
    let scale = 1.0 / big_n as f64;
    let lags = (0..=p)
        .map(|k| {
            let len = big_n - k;
            let r = s.rows(k, len).transpose() * s.rows(0, len) * scale;
            if k == 0 {
                linalg::symmetrize(&r)
            } else {
                r
            }
        })
        .collect();
    Ok(CovSequence {
        lags,
        n_samples: big_n,
    })
}

/// Symmetric block-Toeplitz matrix with block size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockToeplitz {
    matrix: DMatrix<f64>,
    block: usize,
}

impl BlockToeplitz {
    pub fn from_cov(c: &CovSequence) -> Self {
        toeplitz_lift(c.lags()).expect("validated lags")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn block(&self) -> usize {
        self.block
    }

    /// Number of block rows, `p + 1`.
    pub fn blocks(&self) -> usize {
        self.matrix.nrows() / self.block
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.matrix.clone().cholesky().is_some() && self.min_eigenvalue() > 0.0
    }

    /// Inverse with a `1e−8·I` ridge when the smallest eigenvalue falls
    /// below `1e−10·tr/dim`. Returns the inverse and whether the ridge was used.
    pub fn regularized_inverse(&self) -> Result<(DMatrix<f64>, bool), CovarianceError> {
        let dim = self.matrix.nrows();
        let floor = 1e-10 * self.matrix.trace() / dim as f64;
        let ridge = self.min_eigenvalue() < floor;
        let mut m = self.matrix.clone();
        if ridge {
            for i in 0..dim {
                m[(i, i)] += 1e-8;
            }
        }
        let inv = m
            .cholesky()
            .ok_or(CovarianceError::Singular)?
            .inverse();
        Ok((linalg::symmetrize(&inv), ridge))
    }
}

/// Block `(i, j)` is `Q_{j−i}` for `j ≥ i` and `Q_{i−j}ᵀ` below the diagonal.
pub fn toeplitz_lift(q: &[DMatrix<f64>]) -> Result<BlockToeplitz, CovarianceError> {
    check_lags(q)?;
    let n = q[0].nrows();
    let b = q.len();
    let mut m = DMatrix::zeros(n * b, n * b);
    for i in 0..b {
        for j in i..b {
            let blk = if j == i {
                linalg::symmetrize(&q[0])
            } else {
                q[j - i].clone()
            };
            m.view_mut((i * n, j * n), (n, n)).copy_from(&blk);
            if j != i {
                m.view_mut((j * n, i * n), (n, n)).copy_from(&blk.transpose());
            }
        }
    }
    Ok(BlockToeplitz { matrix: m, block: n })
}

/// Adjoint of the lift: `D_0 = Σ_v S_vv`, `D_j = 2 Σ_v S_{v,v+j}`.
pub fn toeplitz_adjoint(s: &DMatrix<f64>, n: usize) -> Result<Vec<DMatrix<f64>>, CovarianceError> {
    let dim = s.nrows();
    if n == 0 || dim % n != 0 || s.ncols() != dim {
        return Err(CovarianceError::BlockMismatch { dim, block: n });
    }
    let b = dim / n;
    Ok((0..b)
        .map(|j| {
            let mut acc = DMatrix::zeros(n, n);
            for v in 0..(b - j) {
                acc += s.view((v * n, (v + j) * n), (n, n));
            }
            if j == 0 {
                linalg::symmetrize(&acc)
            } else {
                acc * 2.0
            }
        })
        .collect())
}

/// Lag window for periodogram smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    #[default]
    Bartlett,
}

impl Window {
    pub fn weight(self, k: usize, p: usize) -> f64 {
        match self {
            Window::Rectangular => 1.0,
            Window::Bartlett => 1.0 - k as f64 / (p + 1) as f64,
        }
    }
}

fn raw_periodogram(c: &CovSequence, grid: &FrequencyGrid, window: Window) -> Vec<CMatrix> {
    let p = c.max_lag();
    let n = c.dim();
    grid.omegas()
        .iter()
        .map(|&omega| {
            let mut phi = linalg::to_complex(c.lag(0));
            for k in 1..=p {
                let w = window.weight(k, p);
                let phase = Complex64::from_polar(w, -omega * k as f64);
                let rk = c.lag(k);
                for a in 0..n {
                    for b in 0..n {
                        phi[(a, b)] += phase * rk[(a, b)] + phase.conj() * rk[(b, a)];
                    }
                }
            }
            linalg::hermitize(&phi)
        })
        .collect()
}

fn project_hermitian_psd(m: &CMatrix) -> CMatrix {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut u = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        u.column_mut(j).scale_mut(lam.max(0.0));
    }
    linalg::hermitize(&(&u * eig.eigenvectors.adjoint()))
}

/// `Φ̂(ω) = Σ_{|k|≤p} w_k R̂_k e^{−jkω}`; slightly negative grid points are
/// projected onto the PSD cone, clearly indefinite estimates are rejected.
pub fn truncated_periodogram(
    c: &CovSequence,
    grid: &FrequencyGrid,
    window: Window,
) -> Result<SpectrumGrid, CovarianceError> {
    let mut values = raw_periodogram(c, grid, window);
    let scale = 1.0 + c.lag(0).norm();
    for v in values.iter_mut() {
        let lo = linalg::herm_eigenvalues(v)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if lo < -1e-6 * scale {
            return Err(CovarianceError::IndefiniteEstimate(lo));
        }
        if lo < 0.0 {
            *v = project_hermitian_psd(v);
        }
    }
    Ok(SpectrumGrid {
        omegas: grid.omegas().to_vec(),
        values,
    })
}

/// Truncated periodogram with every grid point projected onto the PSD cone.
pub fn projected_periodogram(c: &CovSequence, grid: &FrequencyGrid, window: Window) -> SpectrumGrid {
    SpectrumGrid {
        omegas: grid.omegas().to_vec(),
        values: raw_periodogram(c, grid, window)
            .iter()
            .map(project_hermitian_psd)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_sum_lag_one() {
        let y = Trajectory::new(DMatrix::from_element(4, 1, 1.0)).unwrap();
        let c = sample_autocov(&y, 1).unwrap();
        assert!((c.lag(1)[(0, 0)] - 0.75).abs() < 1e-15);
        assert!(sample_autocov(&y, 4).is_err());
    }

    #[test]
    fn scalar_lift() {
        let t = toeplitz_lift(&[DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 1.0)]).unwrap();
        assert_eq!(t.matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn adjoint_hand_sum() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 2.0]);
        let d = toeplitz_adjoint(&s, 1).unwrap();
        assert_eq!(d[0][(0, 0)], 3.0);
        assert_eq!(d[1][(0, 0)], 6.0);
    }

    #[test]
    fn adjoint_of_identity() {
        let d = toeplitz_adjoint(&DMatrix::identity(6, 6), 2).unwrap();
        assert_eq!(d[0], DMatrix::identity(2, 2) * 3.0);
        assert!(d[1].norm() == 0.0 && d[2].norm() == 0.0);
    }

    #[test]
    fn rectangular_periodogram_at_zero() {
        let c = CovSequence::new(vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 0.5)], 10).unwrap();
        let grid = FrequencyGrid::uniform(5).unwrap();
        let s = truncated_periodogram(&c, &grid, Window::Rectangular).unwrap();
        assert!((s.values[0][(0, 0)].re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn white_lags_give_flat_spectrum() {
        let c = CovSequence::new(vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)], 10).unwrap();
        let grid = FrequencyGrid::uniform(9).unwrap();
        let s = truncated_periodogram(&c, &grid, Window::Bartlett).unwrap();
        for v in &s.values {
            assert!((v - CMatrix::identity(2, 2)).norm() < 1e-15);
        }
    }

    #[test]
    fn indefinite_estimate_rejected() {
        let c = CovSequence::new(vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)], 10).unwrap();
        let grid = FrequencyGrid::uniform(9).unwrap();
        assert!(matches!(
            truncated_periodogram(&c, &grid, Window::Rectangular),
            Err(CovarianceError::IndefiniteEstimate(_))
        ));
        let s = projected_periodogram(&c, &grid, Window::Rectangular);
        assert!(s.min_eigenvalue() >= -1e-12);
    }
}
