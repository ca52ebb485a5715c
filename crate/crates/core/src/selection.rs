//! Candidate scoring: relative entropy rate between a smoothed
//! non-parametric spectrum and each fitted model, times a complexity count.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latent::latent_spectrum;
use crate::linalg::{self, CMatrix};
use crate::model::{FrequencyGrid, MatrixPolynomial, SpectrumGrid, Topology};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("AR polynomial is singular at omega = {omega:.4}")]
    SingularPolynomial { omega: f64 },
    #[error("spectrum is not positive definite at omega = {omega:.4}")]
    NotPositiveDefinite { omega: f64 },
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("spectra differ in shape or grid")]
    GridMismatch,
    #[error("theta has shape {got:?}, incompatible with {n} series")]
    ThetaShape { got: (usize, usize), n: usize },
}

/// How off-diagonal support entries are counted in the complexity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportCount {
    /// One per edge.
    #[default]
    Unordered,
    /// Two per edge.
    Ordered,
}

fn ar_polynomial(theta_a: &DMatrix<f64>) -> Result<MatrixPolynomial, SelectionError> {
    let n = theta_a.nrows();
    if n == 0 || theta_a.ncols() % n != 0 {
        return Err(SelectionError::ThetaShape { got: theta_a.shape(), n });
    }
    let coeffs = (0..theta_a.ncols() / n)
        .map(|j| theta_a.columns(j * n, n).into_owned())
        .collect();
    Ok(MatrixPolynomial::new(coeffs).expect("equal blocks"))
}

/// `Â(ω)⁻¹ [Δ L Δᴴ + I] Â(ω)⁻ᴴ` on the grid.
pub fn parametric_spectrum(theta_a: &DMatrix<f64>, l: &DMatrix<f64>, grid: &FrequencyGrid) -> Result<SpectrumGrid, SelectionError> {
    let n = theta_a.nrows();
    let poly = ar_polynomial(theta_a)?;
    let latent = if l.nrows() == 0 {
        None
    } else {
        Some(latent_spectrum(l, n, grid))
    };
    let values = grid
        .omegas()
        .iter()
        .enumerate()
        .map(|(i, &omega)| {
            let a = poly.eval(omega);
            let a_inv = a
                .try_inverse()
                .ok_or(SelectionError::SingularPolynomial { omega })?;
            let mut middle = CMatrix::identity(n, n);
            if let Some(s) = &latent {
                middle += &s.values[i];
            }
            Ok(linalg::hermitize(&(&a_inv * middle * a_inv.adjoint())))
        })
        .collect::<Result<_, _>>()?;
    Ok(SpectrumGrid {
        omegas: grid.omegas().to_vec(),
        values,
    })
}

fn log_det_pd(m: &CMatrix, omega: f64) -> Result<(f64, CMatrix), SelectionError> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(SelectionError::NotPositiveDefinite { omega })?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    Ok((log_det, chol.inverse()))
}

/// `½{avg_ω[log det(Φ₁⁻¹Φ₂) + tr(Φ₁Φ₂⁻¹)] − n}` with trapezoid weights on `[0, π]`.
pub fn relative_entropy_rate(nonparametric: &SpectrumGrid, parametric: &SpectrumGrid) -> Result<f64, SelectionError> {
    if nonparametric.len() != parametric.len() || nonparametric.dim() != parametric.dim() || nonparametric.is_empty() {
        return Err(SelectionError::GridMismatch);
    }
    let n = nonparametric.dim() as f64;
    let grid = FrequencyGrid::uniform(nonparametric.len()).map_err(|_| SelectionError::GridMismatch)?;
    let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12);
    if !same(&nonparametric.omegas, grid.omegas()) || !same(&parametric.omegas, grid.omegas()) {
        return Err(SelectionError::GridMismatch);
    }
    let integrand = nonparametric
        .omegas
        .iter()
        .zip(nonparametric.values.iter().zip(&parametric.values))
        .map(|(&omega, (np, p))| {
            let (ld_np, _) = log_det_pd(&linalg::hermitize(np), omega)?;
            let (ld_p, p_inv) = log_det_pd(&linalg::hermitize(p), omega)?;
            let tr = (np * p_inv).trace().re;
            Ok(ld_p - ld_np + tr)
        })
        .collect::<Result<Vec<f64>, SelectionError>>()?;
    Ok(0.5 * (grid.average(&integrand) - n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredModel {
    pub lambda: f64,
    pub topology: Topology,
    pub theta_a: DMatrix<f64>,
    /// Latent Gram matrix; empty when no latent stage was run.
    pub l: DMatrix<f64>,
    pub l_hat: usize,
    pub divergence: f64,
    pub complexity: usize,
    pub score: f64,
    /// Complexity was zero, so the score falls back to the divergence.
    pub degenerate: bool,
}

impl ScoredModel {
    pub fn to_file(&self) -> ScoredModelFile {
        ScoredModelFile {
            lambda: self.lambda,
            edges: self.topology.edges().collect(),
            l_hat: self.l_hat,
            divergence: self.divergence,
            complexity: self.complexity,
            score: self.score,
            degenerate: self.degenerate,
            theta_a: linalg::to_rows(&self.theta_a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredModelFile {
    pub lambda: f64,
    pub edges: Vec<(usize, usize)>,
    pub l_hat: usize,
    pub divergence: f64,
    pub complexity: usize,
    pub score: f64,
    pub degenerate: bool,
    pub theta_a: Vec<Vec<f64>>,
}

/// Edge count (per `counting`) plus `n·l̂`.
pub fn complexity(topology: &Topology, l_hat: usize, counting: SupportCount) -> usize {
    let per_edge = match counting {
        SupportCount::Unordered => 1,
        SupportCount::Ordered => 2,
    };
    per_edge * topology.edge_count() + topology.n() * l_hat
}

/// `f = D·p`, or `f = D` when `p = 0`.
pub fn score(
    lambda: f64,
    topology: Topology,
    theta_a: DMatrix<f64>,
    l: DMatrix<f64>,
    l_hat: usize,
    nonparametric: &SpectrumGrid,
    grid: &FrequencyGrid,
    counting: SupportCount,
) -> Result<ScoredModel, SelectionError> {
    let parametric = parametric_spectrum(&theta_a, &l, grid)?;
    let divergence = relative_entropy_rate(nonparametric, &parametric)?;
    let complexity = complexity(&topology, l_hat, counting);
    let degenerate = complexity == 0;
    let score = if degenerate { divergence } else { divergence * complexity as f64 };
    Ok(ScoredModel {
        lambda,
        topology,
        theta_a,
        l,
        l_hat,
        divergence,
        complexity,
        score,
        degenerate,
    })
}

/// Lowest score; ties go to smaller complexity, then smaller `λ`.
pub fn select_best(candidates: &[ScoredModel]) -> Result<&ScoredModel, SelectionError> {
    candidates
        .iter()
        .min_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(a.complexity.cmp(&b.complexity))
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .ok_or(SelectionError::EmptyCandidates)
}

/// CSV `lambda,edges,l_hat,score,divergence,complexity`.
pub fn write_score_table<W: Write>(candidates: &[ScoredModel], out: W, comments: &[String]) -> std::io::Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "edges", "l_hat", "score", "divergence", "complexity"])?;
    for c in candidates {
        w.write_record(&[
            c.lambda.to_string(),
            c.topology.edge_count().to_string(),
            c.l_hat.to_string(),
            format!("{:e}", c.score),
            format!("{:e}", c.divergence),
            c.complexity.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(grid: &FrequencyGrid, m: DMatrix<f64>) -> SpectrumGrid {
        SpectrumGrid {
            omegas: grid.omegas().to_vec(),
            values: vec![linalg::to_complex(&m); grid.len()],
        }
    }

    #[test]
    fn scalar_closed_form() {
        let grid = FrequencyGrid::uniform(16).unwrap();
        let np = constant(&grid, DMatrix::from_element(1, 1, 2.0));
        let p = constant(&grid, DMatrix::from_element(1, 1, 1.0));
        let d = relative_entropy_rate(&np, &p).unwrap();
        assert!((d - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!(relative_entropy_rate(&np, &np).unwrap().abs() < 1e-12);
    }

    #[test]
    fn white_parametric_spectrum() {
        let grid = FrequencyGrid::uniform(9).unwrap();
        let s = parametric_spectrum(&DMatrix::identity(3, 3), &DMatrix::zeros(0, 0), &grid).unwrap();
        for v in &s.values {
            assert!((v - CMatrix::identity(3, 3)).norm() < 1e-14);
        }
    }

    #[test]
    fn singular_ar_polynomial() {
        let grid = FrequencyGrid::uniform(9).unwrap();
        let theta = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!(matches!(
            parametric_spectrum(&theta, &DMatrix::zeros(0, 0), &grid),
            Err(SelectionError::SingularPolynomial { .. })
        ));
    }

    #[test]
    fn empty_model_is_degenerate() {
        let grid = FrequencyGrid::uniform(9).unwrap();
        let np = constant(&grid, DMatrix::identity(2, 2) * 2.0);
        let m = score(0.8, Topology::empty(2), DMatrix::identity(2, 2), DMatrix::zeros(0, 0), 0, &np, &grid, SupportCount::Unordered).unwrap();
        assert_eq!(m.complexity, 0);
        assert!(m.degenerate);
        assert_eq!(m.score, m.divergence);
    }

    #[test]
    fn complexity_counting() {
        let t = Topology::from_edges(10, [(0, 5), (3, 8)]).unwrap();
        assert_eq!(complexity(&t, 1, SupportCount::Unordered), 12);
        assert_eq!(complexity(&t, 1, SupportCount::Ordered), 14);
    }

    #[test]
    fn empty_selection() {
        assert!(matches!(select_best(&[]), Err(SelectionError::EmptyCandidates)));
    }
}
