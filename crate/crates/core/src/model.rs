//! Model types: matrix polynomials, pseudo-polynomials, the AR model with
//! latent factor, topologies and sampled spectra.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMatrix};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("coefficient {index} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("polynomial needs at least one coefficient")]
    EmptyPolynomial,
    #[error("leading coefficient is not symmetric (asymmetry {0:.3e})")]
    AsymmetricLeadBlock(f64),
    #[error("leading block of the AR parameter is not the identity")]
    LeadingBlockNotIdentity,
    #[error("AR polynomial is singular at omega = {omega:.4} (|det| = {det:.3e})")]
    SingularPolynomial { omega: f64, det: f64 },
    #[error("AR polynomial is not stable (spectral radius {0:.6})")]
    UnstableModel(f64),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("frequency grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("invalid model file: {0}")]
    InvalidFile(String),
}

/// Uniform frequency grid on `[0, π]` with trapezoidal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
}

impl FrequencyGrid {
    pub fn uniform(m: usize) -> Result<Self, ModelError> {
        if m < 2 {
            return Err(ModelError::GridTooSmall(m));
        }
        let h = PI / (m - 1) as f64;
        Ok(Self {
            omegas: (0..m).map(|i| i as f64 * h).collect(),
        })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Weights `c_i` with `Σ c_i f(ω_i) ≈ (1/2π)∫_{−π}^{π} f(ω) dω` for even `f`.
    pub fn average_weights(&self) -> Vec<f64> {
        let m = self.omegas.len();
        let h = 1.0 / (m - 1) as f64;
        (0..m)
            .map(|i| if i == 0 || i == m - 1 { 0.5 * h } else { h })
            .collect()
    }

    /// Quadrature average of a real function sampled on the grid.
    pub fn average(&self, values: &[f64]) -> f64 {
        self.average_weights()
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

/// Hermitian matrix-valued function sampled on a frequency grid.
#[derive(Debug, Clone)]
pub struct SpectrumGrid {
    pub omegas: Vec<f64>,
    pub values: Vec<CMatrix>,
}

impl SpectrumGrid {
    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.nrows())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest `‖Φ − Φᴴ‖_F` over the grid.
    pub fn max_asymmetry(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (v - v.adjoint()).norm())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all grid points.
    pub fn min_eigenvalue(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| linalg::herm_eigenvalues(v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -1e-8
    }
}

/// Finite matrix polynomial `Σ_j P_j z^{−j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomial {
    coeffs: Vec<DMatrix<f64>>,
}

impl MatrixPolynomial {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self, ModelError> {
        let first = coeffs.first().ok_or(ModelError::EmptyPolynomial)?;
        let expected = first.shape();
        for (index, c) in coeffs.iter().enumerate() {
            if c.shape() != expected {
                return Err(ModelError::ShapeMismatch {
                    index,
                    got: c.shape(),
                    expected,
                });
            }
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn rows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.coeffs[0].ncols()
    }

    /// Value at `z = e^{jω}`.
    pub fn eval(&self, omega: f64) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows(), self.cols());
        for (j, c) in self.coeffs.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -omega * j as f64);
            out.zip_apply(c, |o, v| *o += phase * v);
        }
        out
    }
}

/// Symmetric matrix pseudo-polynomial `½[D(z) + D*(z)]`, `D(z) = Σ_j Q_j z^{−j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPolynomial {
    coeffs: Vec<DMatrix<f64>>,
}

impl PseudoPolynomial {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self, ModelError> {
        let poly = MatrixPolynomial::new(coeffs)?;
        let q0 = &poly.coeffs[0];
        if q0.nrows() != q0.ncols() {
            return Err(ModelError::ShapeMismatch {
                index: 0,
                got: q0.shape(),
                expected: (q0.nrows(), q0.nrows()),
            });
        }
        let asym = (q0 - q0.transpose()).norm();
        if asym > 1e-10 * (1.0 + q0.norm()) {
            return Err(ModelError::AsymmetricLeadBlock(asym));
        }
        Ok(Self { coeffs: poly.coeffs })
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, omega: f64) -> CMatrix {
        let n = self.dim();
        let mut d = CMatrix::zeros(n, n);
        for (j, c) in self.coeffs.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -omega * j as f64);
            d.zip_apply(c, |o, v| *o += phase * v);
        }
        linalg::hermitize(&d)
    }

    pub fn on_grid(&self, grid: &FrequencyGrid) -> SpectrumGrid {
        SpectrumGrid {
            omegas: grid.omegas().to_vec(),
            values: grid.omegas().iter().map(|&w| self.eval(w)).collect(),
        }
    }
}

/// Undirected graph over `n` observed nodes, edges stored as `(k, q)` with `k < q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|k| ((k + 1)..n).map(move |q| (k, q)))
            .collect();
        Self { n, edges }
    }

    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ModelError> {
        let mut t = Self::empty(n);
        for (a, b) in edges {
            t.insert(a, b)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, a: usize, b: usize) -> Result<(), ModelError> {
        if a == b {
            return Err(ModelError::SelfLoop(a));
        }
        for node in [a, b] {
            if node >= self.n {
                return Err(ModelError::NodeOutOfRange { node, n: self.n });
            }
        }
        self.edges.insert((a.min(b), a.max(b)));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// 0/1 adjacency matrix with zero diagonal.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(k, q) in &self.edges {
            m[(k, q)] = 1.0;
            m[(q, k)] = 1.0;
        }
        m
    }
}

/// `A(z) y(t) = W_L(z) x(t) + w(t)` with unit-variance white `x` and `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArLatentModel {
    n: usize,
    l: usize,
    p1: usize,
    p2: usize,
    /// `[I, A_1, ..., A_p1]`, n × n(p1+1).
    theta_a: DMatrix<f64>,
    /// `[W_L0; ...; W_Lp2]`, n(p2+1) × l.
    theta_l: DMatrix<f64>,
}

impl ArLatentModel {
    pub fn new(theta_a: DMatrix<f64>, theta_l: DMatrix<f64>, p2: usize) -> Result<Self, ModelError> {
        let n = theta_a.nrows();
        if n == 0 || theta_a.ncols() % n != 0 || theta_a.ncols() == 0 {
            return Err(ModelError::ShapeMismatch {
                index: 0,
                got: theta_a.shape(),
                expected: (n, n),
            });
        }
        let p1 = theta_a.ncols() / n - 1;
        if theta_l.nrows() != n * (p2 + 1) {
            return Err(ModelError::ShapeMismatch {
                index: 1,
                got: theta_l.shape(),
                expected: (n * (p2 + 1), theta_l.ncols()),
            });
        }
        if theta_a.columns(0, n) != DMatrix::identity(n, n) {
            return Err(ModelError::LeadingBlockNotIdentity);
        }
        Ok(Self {
            n,
            l: theta_l.ncols(),
            p1,
            p2,
            theta_a,
            theta_l,
        })
    }

    /// Build from AR coefficients `A_1..A_p1` and latent taps `W_L0..W_Lp2`.
    pub fn from_coefficients(
        n: usize,
        ar: &[DMatrix<f64>],
        latent: &[DMatrix<f64>],
    ) -> Result<Self, ModelError> {
        let l = latent.first().map_or(0, |w| w.ncols());
        let p2 = latent.len().saturating_sub(1);
        let mut theta_a = DMatrix::zeros(n, n * (ar.len() + 1));
        theta_a.columns_mut(0, n).fill_with_identity();
        for (j, a) in ar.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(ModelError::ShapeMismatch {
                    index: j + 1,
                    got: a.shape(),
                    expected: (n, n),
                });
            }
            theta_a.columns_mut((j + 1) * n, n).copy_from(a);
        }
        let mut theta_l = DMatrix::zeros(n * (p2 + 1), l);
        for (k, w) in latent.iter().enumerate() {
            if w.shape() != (n, l) {
                return Err(ModelError::ShapeMismatch {
                    index: k,
                    got: w.shape(),
                    expected: (n, l),
                });
            }
            theta_l.rows_mut(k * n, n).copy_from(w);
        }
        Self::new(theta_a, theta_l, p2)
    }

    /// Ten-node chain with three lag-1 and three lag-2 unit couplings and a
    /// single first-order latent factor.
    pub fn example_one() -> Self {
        let n = 10;
        let mut a1 = DMatrix::zeros(n, n);
        let mut a2 = DMatrix::zeros(n, n);
        for (i, j) in [(0, 5), (8, 3), (9, 2)] {
            a1[(i, j)] = 1.0;
        }
        for (i, j) in [(1, 4), (4, 6), (7, 0)] {
            a2[(i, j)] = 1.0;
        }
        let taps = [
            0.926, 0.5952, 0.7055, 0.7316, 0.1737, 0.4798, 0.1388, 0.8916, 0.751, 0.915, 0.2552,
            0.0979, 0.8548, 0.9712, 0.0039, 0.9843, 0.9706, 0.1537, 0.695, 0.6398,
        ];
        let w0 = DMatrix::from_column_slice(n, 1, &taps[..n]);
        let w1 = DMatrix::from_column_slice(n, 1, &taps[n..]);
        Self::from_coefficients(n, &[a1, a2], &[w0, w1]).expect("valid example")
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn p1(&self) -> usize {
        self.p1
    }
    pub fn p2(&self) -> usize {
        self.p2
    }
    pub fn theta_a(&self) -> &DMatrix<f64> {
        &self.theta_a
    }
    pub fn theta_l(&self) -> &DMatrix<f64> {
        &self.theta_l
    }

    /// `A_j`, with `A_0 = I`.
    pub fn ar_coeff(&self, j: usize) -> DMatrix<f64> {
        self.theta_a.columns(j * self.n, self.n).into_owned()
    }

    /// `W_{L,k}`.
    pub fn latent_coeff(&self, k: usize) -> DMatrix<f64> {
        self.theta_l.rows(k * self.n, self.n).into_owned()
    }

    pub fn ar_polynomial(&self) -> MatrixPolynomial {
        MatrixPolynomial::new((0..=self.p1).map(|j| self.ar_coeff(j)).collect())
            .expect("consistent shapes")
    }

    pub fn latent_polynomial(&self) -> MatrixPolynomial {
        MatrixPolynomial::new((0..=self.p2).map(|k| self.latent_coeff(k)).collect())
            .expect("consistent shapes")
    }

    /// `L = θ_l θ_lᵀ`.
    pub fn latent_gram(&self) -> DMatrix<f64> {
        &self.theta_l * self.theta_l.transpose()
    }

    /// Spectral radius of the block companion matrix of `A(z)`.
    pub fn spectral_radius(&self) -> f64 {
        companion_spectral_radius(&self.theta_a)
    }

    pub fn check_stable(&self) -> Result<(), ModelError> {
        let r = self.spectral_radius();
        if r >= 1.0 - 1e-8 {
            Err(ModelError::UnstableModel(r))
        } else {
            Ok(())
        }
    }

    pub fn to_file(&self) -> ModelFile {
        let n = self.n;
        let a = self.theta_a.columns(n, n * self.p1).into_owned();
        let mut w = DMatrix::zeros(n, self.l * (self.p2 + 1));
        for k in 0..=self.p2 {
            w.columns_mut(k * self.l, self.l)
                .copy_from(&self.latent_coeff(k));
        }
        ModelFile {
            n,
            l: self.l,
            p1: self.p1,
            p2: self.p2,
            a: linalg::to_rows(&a),
            w_l: linalg::to_rows(&w),
        }
    }

    pub fn from_file(f: &ModelFile) -> Result<Self, ModelError> {
        let bad = |what: &str| ModelError::InvalidFile(what.to_string());
        let n = f.n;
        if f.a.len() != n || f.w_l.len() != n {
            return Err(bad("A and W_L must have n rows"));
        }
        let a = linalg::from_rows(&f.a, n * f.p1).ok_or_else(|| bad("A must be n x n*p1"))?;
        let w = linalg::from_rows(&f.w_l, f.l * (f.p2 + 1))
            .ok_or_else(|| bad("W_L must be n x l*(p2+1)"))?;
        let ar: Vec<_> = (0..f.p1).map(|j| a.columns(j * n, n).into_owned()).collect();
        let latent: Vec<_> = (0..=f.p2)
            .map(|k| w.columns(k * f.l, f.l).into_owned())
            .collect();
        Self::from_coefficients(n, &ar, &latent)
    }
}

/// Serialized model: `A = [A_1 … A_p1]` (n × n·p1) and
/// `W_L = [W_L0 … W_Lp2]` (n × l·(p2+1)), both row-major.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub n: usize,
    pub l: usize,
    pub p1: usize,
    pub p2: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "W_L")]
    pub w_l: Vec<Vec<f64>>,
}

fn companion_spectral_radius(theta_a: &DMatrix<f64>) -> f64 {
    let n = theta_a.nrows();
    let p = theta_a.ncols() / n - 1;
    if p == 0 {
        return 0.0;
    }
    let d = n * p;
    let mut c = DMatrix::zeros(d, d);
    for j in 0..p {
        c.view_mut((0, j * n), (n, n))
            .copy_from(&(-theta_a.columns((j + 1) * n, n)));
    }
    for i in 1..p {
        c.view_mut((i * n, (i - 1) * n), (n, n)).fill_with_identity();
    }
    match c.clone().try_schur(1e-14, 10_000) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
        None => gelfand_radius(&c),
    }
}

// ‖C^k‖^{1/k} for large k; used when the Schur iteration stalls.
fn gelfand_radius(c: &DMatrix<f64>) -> f64 {
    let mut power = c.clone();
    let mut log_scale = 0.0;
    let steps = 512;
    for _ in 1..steps {
        power = &power * c;
        let nrm = power.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        log_scale += nrm.ln();
        power /= nrm;
    }
    (log_scale / steps as f64).exp()
}

fn det_abs(m: &CMatrix) -> f64 {
    m.clone().lu().determinant().norm()
}

/// `Φ_y(ω) = A(ω)⁻¹ [W_L(ω) W_L(ω)ᴴ + I] A(ω)⁻ᴴ` on the grid.
pub fn true_output_spectrum(m: &ArLatentModel, grid: &FrequencyGrid) -> Result<SpectrumGrid, ModelError> {
    let a_poly = m.ar_polynomial();
    let w_poly = m.latent_polynomial();
    let n = m.n();
    let mut values = Vec::with_capacity(grid.len());
    for &omega in grid.omegas() {
        let a = a_poly.eval(omega);
        let det = det_abs(&a);
        if det < 1e-12 {
            return Err(ModelError::SingularPolynomial { omega, det });
        }
        let a_inv = a
            .try_inverse()
            .ok_or(ModelError::SingularPolynomial { omega, det })?;
        let w = w_poly.eval(omega);
        let middle = &w * w.adjoint() + CMatrix::identity(n, n);
        values.push(linalg::hermitize(&(&a_inv * middle * a_inv.adjoint())));
    }
    Ok(SpectrumGrid {
        omegas: grid.omegas().to_vec(),
        values,
    })
}

/// `(Φ_S, Φ_L)` with `Φ_y⁻¹ = Φ_S − Φ_L`.
pub fn inverse_spectrum_parts(m: &ArLatentModel, grid: &FrequencyGrid) -> (SpectrumGrid, SpectrumGrid) {
    let a_poly = m.ar_polynomial();
    let w_poly = m.latent_polynomial();
    let l = m.l();
    let mut phi_s = Vec::with_capacity(grid.len());
    let mut phi_l = Vec::with_capacity(grid.len());
    for &omega in grid.omegas() {
        let a = a_poly.eval(omega);
        let w = w_poly.eval(omega);
        phi_s.push(linalg::hermitize(&(a.adjoint() * &a)));
        let psi = w.adjoint() * &a;
        let lambda = CMatrix::identity(l, l) + w.adjoint() * &w;
        let solved = lambda
            .cholesky()
            .expect("I + WᴴW is positive definite")
            .solve(&psi);
        phi_l.push(linalg::hermitize(&(psi.adjoint() * solved)));
    }
    let omegas = grid.omegas().to_vec();
    (
        SpectrumGrid {
            omegas: omegas.clone(),
            values: phi_s,
        },
        SpectrumGrid {
            omegas,
            values: phi_l,
        },
    )
}

/// `Φ_{W_L}(ω) = W_L(ω) W_L(ω)ᴴ`.
pub fn true_latent_spectrum(m: &ArLatentModel, grid: &FrequencyGrid) -> SpectrumGrid {
    let w_poly = m.latent_polynomial();
    SpectrumGrid {
        omegas: grid.omegas().to_vec(),
        values: grid
            .omegas()
            .iter()
            .map(|&omega| {
                let w = w_poly.eval(omega);
                linalg::hermitize(&(&w * w.adjoint()))
            })
            .collect(),
    }
}

/// Autocovariances `R_0..R_p` of the model by quadrature of `Φ_y e^{jkω}`.
pub fn model_autocovariances(
    m: &ArLatentModel,
    p: usize,
    grid_size: usize,
) -> Result<Vec<DMatrix<f64>>, ModelError> {
    let grid = FrequencyGrid::uniform(grid_size)?;
    let spec = true_output_spectrum(m, &grid)?;
    let weights = grid.average_weights();
    let n = m.n();
    Ok((0..=p)
        .map(|k| {
            let mut r = DMatrix::zeros(n, n);
            for ((&omega, phi), &c) in grid.omegas().iter().zip(&spec.values).zip(&weights) {
                let phase = Complex64::from_polar(1.0, k as f64 * omega);
                r.zip_apply(phi, |o, v| *o += c * (v * phase).re);
            }
            if k == 0 {
                linalg::symmetrize(&r)
            } else {
                r
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_polynomial_eval() {
        let p = MatrixPolynomial::new(vec![DMatrix::identity(2, 2)]).unwrap();
        let v = p.eval(1.3);
        assert!((v - linalg::to_complex(&DMatrix::identity(2, 2))).norm() < 1e-15);
    }

    #[test]
    fn delay_at_pi_is_minus_identity() {
        let p = MatrixPolynomial::new(vec![DMatrix::zeros(2, 2), DMatrix::identity(2, 2)]).unwrap();
        let v = p.eval(PI);
        assert!((v + linalg::to_complex(&DMatrix::identity(2, 2))).norm() < 1e-12);
    }

    #[test]
    fn white_noise_spectrum() {
        let m = ArLatentModel::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 0), 0).unwrap();
        let grid = FrequencyGrid::uniform(16).unwrap();
        let s = true_output_spectrum(&m, &grid).unwrap();
        for v in &s.values {
            assert!((v - CMatrix::identity(3, 3)).norm() < 1e-14);
        }
    }

    #[test]
    fn scalar_ar_spectrum_at_zero() {
        let a1 = DMatrix::from_element(1, 1, 0.5);
        let m = ArLatentModel::from_coefficients(1, &[a1], &[]).unwrap();
        let grid = FrequencyGrid::uniform(8).unwrap();
        let s = true_output_spectrum(&m, &grid).unwrap();
        assert!((s.values[0][(0, 0)].re - 1.0 / 2.25).abs() < 1e-14);
    }

    #[test]
    fn example_one_is_stable_with_unit_determinant() {
        let m = ArLatentModel::example_one();
        // det A(z) = 1 everywhere makes the companion matrix nilpotent. Its
        // Jordan blocks only let an eigensolver resolve the zeros to about
        // eps^(1/4), so the determinant carries the exact check.
        assert!(m.spectral_radius() < 1e-3);
        m.check_stable().unwrap();
        for z in [0.9, -0.4, 2.5] {
            let a = m.ar_polynomial().eval(z);
            assert!((a.lu().determinant() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
        let sumsq: f64 = m.theta_l().iter().map(|v| v * v).sum();
        assert!((sumsq - 9.296).abs() < 1e-3);
    }

    #[test]
    fn unstable_model_is_rejected() {
        let a1 = DMatrix::from_element(1, 1, -1.2);
        let m = ArLatentModel::from_coefficients(1, &[a1], &[]).unwrap();
        assert!(matches!(m.check_stable(), Err(ModelError::UnstableModel(_))));
    }

    #[test]
    fn model_file_round_trip() {
        let m = ArLatentModel::example_one();
        let text = serde_json::to_string(&m.to_file()).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        let m2 = ArLatentModel::from_file(&back).unwrap();
        assert!((m.theta_a() - m2.theta_a()).norm() <= 1e-15 * m.theta_a().norm());
        assert!((m.theta_l() - m2.theta_l()).norm() <= 1e-15 * m.theta_l().norm());
        assert_eq!(m2.p2(), 1);
    }

    #[test]
    fn zero_latent_file_keeps_order() {
        let f = ModelFile {
            n: 2,
            l: 0,
            p1: 1,
            p2: 1,
            a: vec![vec![0.1, 0.0], vec![0.0, 0.2]],
            w_l: vec![vec![], vec![]],
        };
        let m = ArLatentModel::from_file(&f).unwrap();
        assert_eq!((m.l(), m.p1(), m.p2()), (0, 1, 1));
    }

    #[test]
    fn topology_rejects_self_loop() {
        assert!(Topology::from_edges(3, [(1, 1)]).is_err());
        let t = Topology::from_edges(3, [(2, 0)]).unwrap();
        assert!(t.contains(0, 2));
        assert_eq!(Topology::complete(4).edge_count(), 6);
    }
}
