//! Stage 3: latent factor estimation from the AR-filtered data.
//!
//! The filtered series `y_AR = Â(z) y` has spectrum `Δ L Δ* + I` with
//! `L = θ_l θ_lᵀ`. `L` is found by minimizing `tr L` over PSD matrices whose
//! block sums stay within Frobenius balls around the sample lags; the ball
//! radii come from Monte Carlo resampling of the filtered spectrum.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{projected_periodogram, sample_autocov, truncated_periodogram, CovSequence, CovarianceError, Window};
use crate::data::{DataError, Trajectory};
use crate::linalg::{self, CMatrix};
use crate::model::{FrequencyGrid, SpectrumGrid};
use crate::solver::{admm_solve, prox, AdmmSettings, SolveReport, SolverError, SplitProblem};

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("at least 50 Monte Carlo runs are needed, got {0}")]
    TooFewRuns(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("expected {expected} alphas or deltas, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("delta must be non-negative, got {0}")]
    NegativeDelta(f64),
    #[error("tolerance balls exclude the PSD cone")]
    Infeasible,
    #[error("latent solve failed: {0}")]
    SolverFailed(SolverError),
    #[error("latent rank is zero")]
    RankZero,
    #[error("theta has shape {got:?}, incompatible with {n} series")]
    ThetaShape { got: (usize, usize), n: usize },
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<SolverError> for LatentError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InfeasibleDetected { .. } => LatentError::Infeasible,
            other => LatentError::SolverFailed(other),
        }
    }
}

/// `y_AR(t) = y(t) + Σ_j Â_j y(t−j)` with zero initial conditions.
pub fn filter_ar(y: &Trajectory, theta_a: &DMatrix<f64>) -> Result<Trajectory, LatentError> {
    let n = y.dim();
    if theta_a.nrows() != n || theta_a.ncols() % n != 0 {
        return Err(LatentError::ThetaShape { got: theta_a.shape(), n });
    }
    let p1 = theta_a.ncols() / n - 1;
    let s = y.samples();
    let big_n = s.nrows();
    let mut out = s.clone();
    for j in 1..=p1 {
        if j >= big_n {
            break;
        }
        let a = theta_a.columns(j * n, n);
        // rows j.. receive A_j y(t−j): Y_lag · A_jᵀ
        let contrib = s.rows(0, big_n - j) * a.transpose();
        let mut tail = out.rows_mut(j, big_n - j);
        tail += contrib;
    }
    Ok(Trajectory::new(out)?)
}

/// Sample lags `0..p2` of the filtered data and its truncated periodogram.
pub fn estimate_ar_spectrum(
    y_ar: &Trajectory,
    p2: usize,
    grid: &FrequencyGrid,
    window: Window,
) -> Result<(CovSequence, SpectrumGrid), LatentError> {
    let covs = sample_autocov(y_ar, p2)?;
    let spec = truncated_periodogram(&covs, grid, window)?;
    Ok((covs, spec))
}

/// Ball radii `δ_0..δ_p2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSet {
    pub deltas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub runs: usize,
}

/// Empirical quantile: the `⌈α·m⌉`-th smallest of `m` values.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    let idx = ((alpha * m as f64).ceil() as usize).clamp(1, m) - 1;
    v[idx]
}

/// Stationary Gaussian surrogates with a prescribed spectrum, drawn on the
/// length-`N` Fourier grid.
pub struct SurrogateSampler {
    /// Hermitian square roots at `ω_k = 2πk/N`, `k = 0..=N/2`.
    roots: Vec<CMatrix>,
    n: usize,
    len: usize,
}

impl SurrogateSampler {
    /// Spectrum given by the lag sequence under `window`, projected onto the
    /// PSD cone at each Fourier frequency.
    pub fn from_lags(covs: &CovSequence, len: usize, window: Window) -> Self {
        let half = len / 2;
        let omegas: Vec<f64> = (0..=half)
            .map(|k| 2.0 * std::f64::consts::PI * k as f64 / len as f64)
            .collect();
        let spec = spectrum_at(covs, &omegas, window);
        Self {
            roots: spec.iter().map(linalg::herm_sqrt).collect(),
            n: covs.dim(),
            len,
        }
    }

    /// One surrogate trajectory, `len × n`.
    pub fn draw<R: Rng>(&self, rng: &mut R, planner: &mut FftPlanner<f64>) -> DMatrix<f64> {
        let (n, len) = (self.n, self.len);
        let half = len / 2;
        let mut spectra = vec![vec![Complex64::new(0.0, 0.0); len]; n];
        let frac = std::f64::consts::FRAC_1_SQRT_2;
        for (k, root) in self.roots.iter().enumerate() {
            let real_bin = k == 0 || (len % 2 == 0 && k == half);
            let xi = DVector::<Complex64>::from_fn(n, |_, _| {
                if real_bin {
                    Complex64::new(rng.sample(StandardNormal), 0.0)
                } else {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    Complex64::new(a * frac, b * frac)
                }
            });
            let v = root * xi;
            for c in 0..n {
                spectra[c][k] = v[c];
                if k != 0 && !(len % 2 == 0 && k == half) {
                    spectra[c][len - k] = v[c].conj();
                }
            }
        }
        let ifft = planner.plan_fft_inverse(len);
        let scale = 1.0 / (len as f64).sqrt();
        let mut out = DMatrix::zeros(len, n);
        for (c, buf) in spectra.iter_mut().enumerate() {
            ifft.process(buf);
            for (t, v) in buf.iter().enumerate() {
                out[(t, c)] = v.re * scale;
            }
        }
        out
    }
}

fn spectrum_at(covs: &CovSequence, omegas: &[f64], window: Window) -> Vec<CMatrix> {
    let p = covs.max_lag();
    let n = covs.dim();
    omegas
        .iter()
        .map(|&omega| {
            let mut phi = linalg::to_complex(covs.lag(0));
            for k in 1..=p {
                let phase = Complex64::from_polar(window.weight(k, p), -omega * k as f64);
                let rk = covs.lag(k);
                for a in 0..n {
                    for b in 0..n {
                        phi[(a, b)] += phase * rk[(a, b)] + phase.conj() * rk[(b, a)];
                    }
                }
            }
            let h = linalg::hermitize(&phi);
            let eig = nalgebra::SymmetricEigen::new(h);
            let mut u = eig.eigenvectors.clone();
            for (j, &lam) in eig.eigenvalues.iter().enumerate() {
                u.column_mut(j).scale_mut(lam.max(0.0));
            }
            linalg::hermitize(&(&u * eig.eigenvectors.adjoint()))
        })
        .collect()
}

/// Options for the Monte Carlo radius selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    /// One level per lag, or a single level used for every lag.
    pub alphas: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    /// Lag window of the resampling spectrum.
    pub window: Window,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            alphas: vec![0.95],
            runs: 200,
            seed: 0,
            window: Window::Rectangular,
        }
    }
}

/// `δ_k` = empirical `α_k`-quantile of `‖R̂_k − R̂_{r,k}‖_F` over surrogate
/// trajectories of length `N` drawn from the spectrum of `covs`.
pub fn monte_carlo_deltas(covs: &CovSequence, n_samples: usize, opts: &MonteCarloOptions) -> Result<ToleranceSet, LatentError> {
    if opts.runs < 50 {
        return Err(LatentError::TooFewRuns(opts.runs));
    }
    let lags = covs.max_lag() + 1;
    let alphas = expand_alphas(&opts.alphas, lags)?;
    let sampler = SurrogateSampler::from_lags(covs, n_samples, opts.window);
    let mut planner = FftPlanner::new();
    let mut norms = vec![Vec::with_capacity(opts.runs); lags];
    for run in 0..opts.runs {
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
        rng.set_stream(run as u64 + 1);
        let draw = Trajectory::new(sampler.draw(&mut rng, &mut planner))?;
        let resampled = sample_autocov(&draw, covs.max_lag())?;
        for (k, bucket) in norms.iter_mut().enumerate() {
            bucket.push((covs.lag(k) - resampled.lag(k)).norm());
        }
    }
    Ok(ToleranceSet {
        deltas: norms
            .iter()
            .zip(&alphas)
            .map(|(v, &a)| empirical_quantile(v, a))
            .collect(),
        alphas,
        runs: opts.runs,
    })
}

fn expand_alphas(alphas: &[f64], lags: usize) -> Result<Vec<f64>, LatentError> {
    let out = match alphas.len() {
        1 => vec![alphas[0]; lags],
        len if len == lags => alphas.to_vec(),
        len => {
            return Err(LatentError::LengthMismatch {
                expected: lags,
                got: len,
            })
        }
    };
    if let Some(&bad) = out.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(LatentError::InvalidAlpha(bad));
    }
    Ok(out)
}

/// Split form: `z = (Y, B_0(L), …, B_p(L))` with `Y = L` kept PSD and each
/// block sum kept inside its ball.
struct LatentProblem {
    n: usize,
    blocks: usize,
    centers: Vec<DMatrix<f64>>,
    deltas: Vec<f64>,
}

impl LatentProblem {
    fn dim(&self) -> usize {
        self.n * self.blocks
    }

    fn unpack(&self, v: &DVector<f64>) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let d = self.dim();
        let nn = self.n * self.n;
        let y = DMatrix::from_column_slice(d, d, &v.as_slice()[..d * d]);
        let w = (0..self.blocks)
            .map(|k| {
                let s = d * d + k * nn;
                DMatrix::from_column_slice(self.n, self.n, &v.as_slice()[s..s + nn])
            })
            .collect();
        (y, w)
    }

    fn pack(&self, y: &DMatrix<f64>, w: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.split_dim());
        out.extend_from_slice(y.as_slice());
        for m in w {
            out.extend_from_slice(m.as_slice());
        }
        DVector::from_vec(out)
    }
}

/// `B_0(L) = Σ_v L_vv`, `B_k(L) = Σ_v L_{v,v+k}ᵀ`.
pub fn block_sums(l: &DMatrix<f64>, n: usize) -> Vec<DMatrix<f64>> {
    let blocks = l.nrows() / n;
    (0..blocks)
        .map(|k| {
            let mut acc = DMatrix::zeros(n, n);
            for v in 0..(blocks - k) {
                acc += l.view(((v + k) * n, v * n), (n, n));
            }
            acc
        })
        .collect()
}

fn block_sums_adjoint(w: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let blocks = w.len();
    let mut g = DMatrix::zeros(n * blocks, n * blocks);
    for (k, wk) in w.iter().enumerate() {
        for v in 0..(blocks - k) {
            if k == 0 {
                g.view_mut((v * n, v * n), (n, n)).copy_from(&linalg::symmetrize(wk));
            } else {
                let half = wk * 0.5;
                g.view_mut(((v + k) * n, v * n), (n, n)).copy_from(&half);
                g.view_mut((v * n, (v + k) * n), (n, n)).copy_from(&half.transpose());
            }
        }
    }
    g
}

impl SplitProblem for LatentProblem {
    type Primal = DMatrix<f64>;

    fn split_dim(&self) -> usize {
        self.dim() * self.dim() + self.blocks * self.n * self.n
    }

    fn primal_dim(&self) -> usize {
        self.dim() * self.dim()
    }

    fn primal_step(&mut self, v: &DVector<f64>, rho: f64) -> DMatrix<f64> {
        let (vy, w) = self.unpack(v);
        let n = self.n;
        let b = self.blocks;
        let y = linalg::symmetrize(&vy);
        let blk = |i: usize, j: usize| y.view((i * n, j * n), (n, n)).into_owned();
        let mut l = DMatrix::zeros(self.dim(), self.dim());

        let eye_step = DMatrix::<f64>::identity(n, n) / rho;
        let w0 = linalg::symmetrize(&w[0]);
        let m = b as f64;
        let mut sum = DMatrix::zeros(n, n);
        for v in 0..b {
            sum += blk(v, v) - &eye_step;
        }
        let s = (sum + &w0 * m) / (1.0 + m);
        let shift = &s - &w0;
        for v in 0..b {
            l.view_mut((v * n, v * n), (n, n))
                .copy_from(&(blk(v, v) - &eye_step - &shift));
        }

        for k in 1..b {
            let m = (b - k) as f64;
            let wt = w[k].transpose();
            let mut sum = DMatrix::zeros(n, n);
            for v in 0..(b - k) {
                sum += blk(v, v + k);
            }
            let s = (sum * 2.0 + &wt * m) / (2.0 + m);
            let shift = (s - &wt) * 0.5;
            for v in 0..(b - k) {
                let xv = blk(v, v + k) - &shift;
                l.view_mut((v * n, (v + k) * n), (n, n)).copy_from(&xv);
                l.view_mut(((v + k) * n, v * n), (n, n)).copy_from(&xv.transpose());
            }
        }
        l
    }

    fn forward(&self, x: &DMatrix<f64>) -> DVector<f64> {
        self.pack(x, &block_sums(x, self.n))
    }

    fn adjoint_norm(&self, d: &DVector<f64>) -> f64 {
        let (dy, dw) = self.unpack(d);
        (dy + block_sums_adjoint(&dw, self.n)).norm()
    }

    fn split_prox(&self, v: &DVector<f64>, _rho: f64) -> DVector<f64> {
        let (vy, w) = self.unpack(v);
        let y = prox::psd_project(&vy);
        let w: Vec<DMatrix<f64>> = w
            .iter()
            .zip(&self.centers)
            .zip(&self.deltas)
            .map(|((wk, c), &d)| prox::frobenius_ball_project(wk, c, d))
            .collect();
        self.pack(&y, &w)
    }

    fn objective(&self, x: &DMatrix<f64>, _z: &DVector<f64>) -> f64 {
        x.trace()
    }
}

#[derive(Debug, Clone)]
pub struct LatentSolution {
    /// `n(p2+1)` square PSD matrix.
    pub l: DMatrix<f64>,
    pub l_hat: usize,
    /// `n(p2+1) × l̂`.
    pub theta_l: DMatrix<f64>,
    /// Eigenvalues of `L`, descending.
    pub eigenvalues: Vec<f64>,
    pub deltas: ToleranceSet,
    /// `δ_k − ‖B_k(L) − c_k‖_F` per lag.
    pub slacks: Vec<f64>,
    pub report: SolveReport<DMatrix<f64>>,
}

impl LatentSolution {
    pub fn trace(&self) -> f64 {
        self.l.trace()
    }

    pub fn to_file(&self) -> LatentSolutionFile {
        LatentSolutionFile {
            l_hat: self.l_hat,
            eigenvalues: self.eigenvalues.clone(),
            deltas: self.deltas.deltas.clone(),
            theta_l: linalg::to_rows(&self.theta_l),
            trace: self.trace(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatentSolutionFile {
    pub l_hat: usize,
    pub eigenvalues: Vec<f64>,
    pub deltas: Vec<f64>,
    pub theta_l: Vec<Vec<f64>>,
    pub trace: f64,
}

/// ADMM settings for the latent solve. The ball constraints are checked
/// against a small absolute slack, so the stopping rule is tighter than the
/// solver default.
pub fn latent_admm_settings() -> AdmmSettings {
    AdmmSettings {
        rel_tol: 1e-9,
        abs_tol: 1e-12,
        ..AdmmSettings::default()
    }
}

/// `min tr L` over `L ⪰ 0` with `‖B_0(L) + I − R_0‖_F ≤ δ_0` and
/// `‖B_k(L) − R_k‖_F ≤ δ_k`.
pub fn solve_latent(
    covs_ar: &CovSequence,
    deltas: &ToleranceSet,
    eta: f64,
    settings: &AdmmSettings,
) -> Result<LatentSolution, LatentError> {
    let blocks = covs_ar.max_lag() + 1;
    let n = covs_ar.dim();
    if deltas.deltas.len() != blocks {
        return Err(LatentError::LengthMismatch {
            expected: blocks,
            got: deltas.deltas.len(),
        });
    }
    if let Some(&d) = deltas.deltas.iter().find(|d| !(**d >= 0.0)) {
        return Err(LatentError::NegativeDelta(d));
    }
    let mut centers = covs_ar.lags().to_vec();
    centers[0] = &centers[0] - DMatrix::<f64>::identity(n, n);
    let mut problem = LatentProblem {
        n,
        blocks,
        centers,
        deltas: deltas.deltas.clone(),
    };
    let report = admm_solve(&mut problem, settings, None)?;
    let (y, _) = problem.unpack(&report.z);
    let l = prox::psd_project(&y);
    let sums = block_sums(&l, n);
    let slacks = sums
        .iter()
        .zip(&problem.centers)
        .zip(&problem.deltas)
        .map(|((s, c), d)| d - (s - c).norm())
        .collect();
    let eigenvalues = linalg::sym_eigenvalues(&l);
    let l_hat = infer_latent_dim(&l, eta);
    let theta_l = if l_hat > 0 {
        factor_latent(&l, l_hat)?
    } else {
        DMatrix::zeros(l.nrows(), 0)
    };
    Ok(LatentSolution {
        l,
        l_hat,
        theta_l,
        eigenvalues,
        deltas: deltas.clone(),
        slacks,
        report,
    })
}

/// Count of eigenvalues above `η·λ_max`; zero when `λ_max ≤ 1e−8`.
pub fn infer_latent_dim(l: &DMatrix<f64>, eta: f64) -> usize {
    let eig = linalg::sym_eigenvalues(l);
    let top = eig.first().copied().unwrap_or(0.0);
    if top <= 1e-8 {
        return 0;
    }
    eig.iter().filter(|&&v| v > eta * top).count()
}

/// Leading `l̂` eigenpairs as `U Λ^{1/2}`, each column signed so that its
/// largest-magnitude entry is positive.
pub fn factor_latent(l: &DMatrix<f64>, l_hat: usize) -> Result<DMatrix<f64>, LatentError> {
    if l_hat == 0 {
        return Err(LatentError::RankZero);
    }
    let (vals, vecs) = linalg::sorted_eigen(l);
    let mut theta = DMatrix::zeros(l.nrows(), l_hat);
    for j in 0..l_hat.min(vals.len()) {
        let mut col = vecs.column(j) * vals[j].max(0.0).sqrt();
        let peak = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if peak < 0.0 {
            col.neg_mut();
        }
        theta.set_column(j, &col);
    }
    Ok(theta)
}

/// `Φ_{W_L}(ω) = Δ(ω) L Δ(ω)ᴴ` with `Δ(ω) = [I, e^{−jω} I, …]`.
pub fn latent_spectrum(l: &DMatrix<f64>, n: usize, grid: &FrequencyGrid) -> SpectrumGrid {
    let blocks = l.nrows() / n;
    let values = grid
        .omegas()
        .iter()
        .map(|&omega| {
            let mut out = CMatrix::zeros(n, n);
            for a in 0..blocks {
                for b in 0..blocks {
                    let phase = Complex64::from_polar(1.0, -omega * (a as f64 - b as f64));
                    let blk = l.view((a * n, b * n), (n, n));
                    out.zip_apply(&blk.into_owned(), |o, v| *o += phase * v);
                }
            }
            linalg::hermitize(&out)
        })
        .collect();
    SpectrumGrid {
        omegas: grid.omegas().to_vec(),
        values,
    }
}

/// Relative Frobenius error `‖Φ̂ − Φ‖_F / ‖Φ‖_F` per grid point.
pub fn spectrum_error_curve(estimate: &SpectrumGrid, truth: &SpectrumGrid) -> Vec<(f64, f64)> {
    estimate
        .omegas
        .iter()
        .zip(estimate.values.iter().zip(&truth.values))
        .map(|(&w, (e, t))| (w, (e - t).norm() / t.norm().max(f64::MIN_POSITIVE)))
        .collect()
}

/// CSV `omega,relative_error`.
pub fn write_error_curve<W: Write>(curve: &[(f64, f64)], out: W, comments: &[String]) -> std::io::Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["omega", "relative_error"])?;
    for (omega, err) in curve {
        w.write_record(&[format!("{omega:e}"), format!("{err:e}")])?;
    }
    w.flush()
}

/// Bartlett periodogram of the filtered data, projected onto the PSD cone.
pub fn filtered_spectrum(covs: &CovSequence, grid: &FrequencyGrid) -> SpectrumGrid {
    projected_periodogram(covs, grid, Window::Bartlett)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_filter() {
        let y = Trajectory::new(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let mut theta = DMatrix::zeros(2, 4);
        theta.columns_mut(0, 2).fill_with_identity();
        assert_eq!(filter_ar(&y, &theta).unwrap(), y);
    }

    #[test]
    fn difference_filter() {
        let y = Trajectory::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let theta = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let out = filter_ar(&y, &theta).unwrap();
        assert_eq!(out.samples().as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn quantile_semantics() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.5), 5.0);
        assert_eq!(empirical_quantile(&v, 0.9999), 10.0);
    }

    #[test]
    fn latent_dim_thresholds() {
        assert_eq!(infer_latent_dim(&DMatrix::zeros(3, 3), 0.05), 0);
        let l = DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 0.01, 0.0]));
        assert_eq!(infer_latent_dim(&l, 0.05), 1);
    }

    #[test]
    fn factor_of_rank_one() {
        let v = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let l = &v * v.transpose();
        let theta = factor_latent(&l, 1).unwrap();
        assert!((theta.column(0) - &v).norm() < 1e-12);
        assert!(matches!(factor_latent(&l, 0), Err(LatentError::RankZero)));
    }

    #[test]
    fn too_few_runs() {
        let c = CovSequence::new(vec![DMatrix::identity(2, 2)], 100).unwrap();
        let opts = MonteCarloOptions {
            runs: 10,
            ..MonteCarloOptions::default()
        };
        assert!(matches!(monte_carlo_deltas(&c, 100, &opts), Err(LatentError::TooFewRuns(10))));
    }

    #[test]
    fn constant_latent_spectrum_when_memoryless() {
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let grid = FrequencyGrid::uniform(7).unwrap();
        let s = latent_spectrum(&l, 2, &grid);
        for v in &s.values {
            assert!((v - linalg::to_complex(&l)).norm() < 1e-14);
        }
    }
}
