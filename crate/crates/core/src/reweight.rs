//! Stage 2: AR refinement by nuclear-norm minimization over the Schur lift
//! `X_L(θ) = [[K⁻¹, θᵀ], [θ, I]]`, with only the topology-allowed entries of
//! `A_1..A_p` free, improved by reweighted trace iterations.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{BlockToeplitz, CovarianceError};
use crate::linalg;
use crate::model::Topology;
use crate::solver::{admm_solve, prox, AdmmSettings, SolveReport, SolverError, SplitProblem, WarmStart};

#[derive(Debug, Error)]
pub enum ReweightError {
    #[error("K is singular")]
    SingularK,
    #[error("weighted solve failed: {0}")]
    SolverFailed(#[from] SolverError),
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("weight matrices must be square of size {expected}")]
    WeightShape { expected: usize },
    #[error("theta has shape {got:?}, expected {expected:?}")]
    ThetaShape {
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("topology has {got} nodes, K has block size {expected}")]
    TopologySize { got: usize, expected: usize },
    #[error("basis is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),
}

impl From<CovarianceError> for ReweightError {
    fn from(_: CovarianceError) -> Self {
        ReweightError::SingularK
    }
}

/// The lift with its fixed entries and the list of free `θ` positions.
#[derive(Debug, Clone)]
pub struct SchurLift {
    k_inv: DMatrix<f64>,
    n: usize,
    p1: usize,
    /// `(row, column)` positions in `θ` (n × n(p1+1)) that are free.
    free: Vec<(usize, usize)>,
    theta_init: DMatrix<f64>,
    ridge: bool,
}

impl SchurLift {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    /// Side of `X_L`, `n(p1+2)`.
    pub fn size(&self) -> usize {
        self.n * (self.p1 + 2)
    }

    pub fn free_positions(&self) -> &[(usize, usize)] {
        &self.free
    }

    /// Number of free entries of `X_L` (each `θ` entry appears twice).
    pub fn free_entry_count(&self) -> usize {
        2 * self.free.len()
    }

    pub fn theta_init(&self) -> &DMatrix<f64> {
        &self.theta_init
    }

    pub fn k_inv(&self) -> &DMatrix<f64> {
        &self.k_inv
    }

    /// Whether `K` needed a ridge before inversion.
    pub fn ridge_applied(&self) -> bool {
        self.ridge
    }

    /// `θ` with identity lead block, the given free values, zeros elsewhere.
    pub fn theta_from_values(&self, values: &DVector<f64>) -> DMatrix<f64> {
        let nk = self.n * (self.p1 + 1);
        let mut theta = DMatrix::zeros(self.n, nk);
        theta.columns_mut(0, self.n).fill_with_identity();
        for (&(i, c), &v) in self.free.iter().zip(values.iter()) {
            theta[(i, c)] = v;
        }
        theta
    }

    /// Free values read from `θ`.
    pub fn values_of(&self, theta: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&(i, c)| theta[(i, c)]))
    }

    /// `[[K⁻¹, θᵀ], [θ, I]]`.
    pub fn assemble(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        let nk = self.n * (self.p1 + 1);
        let size = self.size();
        let mut x = DMatrix::zeros(size, size);
        x.view_mut((0, 0), (nk, nk)).copy_from(&self.k_inv);
        x.view_mut((nk, 0), (self.n, nk)).copy_from(theta);
        x.view_mut((0, nk), (nk, self.n)).copy_from(&theta.transpose());
        x.view_mut((nk, nk), (self.n, self.n)).fill_with_identity();
        x
    }

    /// Position in `X_L` of the lower copy of free entry `f`.
    fn lift_position(&self, f: usize) -> (usize, usize) {
        let (i, c) = self.free[f];
        (self.n * (self.p1 + 1) + i, c)
    }
}

/// Assemble the lift. Free entries are the positions `(k, q)` and `(q, k)`
/// of every `A_j`, `j ≥ 1`, for each edge `{k, q}` of the topology.
pub fn build_lift(k: &BlockToeplitz, topology: &Topology, theta_init: &DMatrix<f64>) -> Result<SchurLift, ReweightError> {
    let n = k.block();
    let p1 = k.blocks() - 1;
    if topology.n() != n {
        return Err(ReweightError::TopologySize {
            got: topology.n(),
            expected: n,
        });
    }
    if theta_init.shape() != (n, n * (p1 + 1)) {
        return Err(ReweightError::ThetaShape {
            got: theta_init.shape(),
            expected: (n, n * (p1 + 1)),
        });
    }
    let (k_inv, ridge) = k.regularized_inverse()?;
    let mut free = Vec::new();
    for j in 1..=p1 {
        for (a, b) in topology.edges() {
            free.push((a, j * n + b));
            free.push((b, j * n + a));
        }
    }
    free.sort_unstable();
    Ok(SchurLift {
        k_inv,
        n,
        p1,
        free,
        theta_init: theta_init.clone(),
        ridge,
    })
}

/// Split form `M = W1 X_L(θ) W2`, with the nuclear norm on `M`.
struct WeightedProblem<'a> {
    lift: &'a SchurLift,
    w1: &'a DMatrix<f64>,
    w2: &'a DMatrix<f64>,
    /// `W1 X_L(θ = 0 on free set) W2`.
    offset: DMatrix<f64>,
    gram: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    symmetric: bool,
}

impl<'a> WeightedProblem<'a> {
    fn new(lift: &'a SchurLift, w1: &'a DMatrix<f64>, w2: &'a DMatrix<f64>) -> Self {
        let base = lift.assemble(&lift.theta_from_values(&DVector::zeros(lift.free.len())));
        let offset = w1 * base * w2;
        let g1 = w1.transpose() * w1;
        let g2 = w2 * w2.transpose();
        let m = lift.free.len();
        let pos: Vec<(usize, usize)> = (0..m).map(|f| lift.lift_position(f)).collect();
        let gram = DMatrix::from_fn(m, m, |f, g| {
            let (a, c) = pos[f];
            let (a2, c2) = pos[g];
            g1[(a, a2)] * g2[(c, c2)] + g1[(a, c2)] * g2[(c, a2)] + g1[(c, a2)] * g2[(a, c2)] + g1[(c, c2)] * g2[(a, a2)]
        });
        let symmetric = w1 == w2 && (w1 - w1.transpose()).norm() <= 1e-12 * w1.norm();
        Self {
            lift,
            w1,
            w2,
            offset,
            gram: if m > 0 { gram.cholesky() } else { None },
            symmetric,
        }
    }

    fn side(&self) -> usize {
        self.lift.size()
    }

    /// `Bᵀ vec(V)` with `B_f = W1 (E_f + E_fᵀ) W2`.
    fn basis_adjoint(&self, v: &DMatrix<f64>) -> DVector<f64> {
        let h = self.w1.transpose() * v * self.w2.transpose();
        DVector::from_iterator(
            self.lift.free.len(),
            (0..self.lift.free.len()).map(|f| {
                let (a, c) = self.lift.lift_position(f);
                h[(a, c)] + h[(c, a)]
            }),
        )
    }

    fn as_matrix(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let s = self.side();
        DMatrix::from_column_slice(s, s, v.as_slice())
    }
}

impl SplitProblem for WeightedProblem<'_> {
    type Primal = DVector<f64>;

    fn split_dim(&self) -> usize {
        self.side() * self.side()
    }

    fn primal_dim(&self) -> usize {
        self.lift.free.len().max(1)
    }

    fn primal_step(&mut self, v: &DVector<f64>, _rho: f64) -> DVector<f64> {
        match &self.gram {
            Some(chol) => {
                let rhs = self.basis_adjoint(&(self.as_matrix(v) - &self.offset));
                chol.solve(&rhs)
            }
            None => DVector::zeros(self.lift.free.len()),
        }
    }

    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.w1 * self.lift.assemble(&self.lift.theta_from_values(x)) * self.w2;
        DVector::from_column_slice(m.as_slice())
    }

    fn adjoint_norm(&self, d: &DVector<f64>) -> f64 {
        self.basis_adjoint(&self.as_matrix(d)).norm()
    }

    fn split_prox(&self, v: &DVector<f64>, rho: f64) -> DVector<f64> {
        let m = self.as_matrix(v);
        let out = if self.symmetric {
            prox::svt_symmetric(&m, 1.0 / rho)
        } else {
            prox::svt(&m, 1.0 / rho)
        };
        DVector::from_column_slice(out.as_slice())
    }

    fn objective(&self, _x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        self.as_matrix(z).singular_values().sum()
    }
}

#[derive(Debug, Clone)]
pub struct WeightedSolve {
    pub theta: DMatrix<f64>,
    /// `‖W1 X_L(θ) W2‖_*` at the returned `θ`.
    pub objective: f64,
    pub report: SolveReport<DVector<f64>>,
}

/// `argmin_θ ‖W1 X_L(θ) W2‖_*` over the free entries.
pub fn solve_weighted_nuclear(
    lift: &SchurLift,
    w1: &DMatrix<f64>,
    w2: &DMatrix<f64>,
    start: Option<&DMatrix<f64>>,
    settings: &AdmmSettings,
) -> Result<WeightedSolve, ReweightError> {
    let size = lift.size();
    if w1.shape() != (size, size) || w2.shape() != (size, size) {
        return Err(ReweightError::WeightShape { expected: size });
    }
    let mut problem = WeightedProblem::new(lift, w1, w2);
    let warm = start.map(|theta| {
        let z = problem.forward(&lift.values_of(theta));
        WarmStart {
            dual: DVector::zeros(z.len()),
            z,
            rho: settings.rho,
        }
    });
    let report = admm_solve(&mut problem, settings, warm.as_ref())?;
    let theta = lift.theta_from_values(&report.x);
    let objective = (w1 * lift.assemble(&theta) * w2).singular_values().sum();
    Ok(WeightedSolve {
        theta,
        objective,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReweightOptions {
    pub max_iters: usize,
    pub eps: f64,
    /// Stop when `‖θ^{k+1} − θ^k‖_F / ‖θ^k‖_F` falls below this.
    pub change_tol: f64,
    pub admm: AdmmSettings,
}

impl Default for ReweightOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            eps: 1e-3,
            change_tol: 1e-6,
            admm: AdmmSettings::default(),
        }
    }
}

/// Weights and iterate between reweighted solves.
#[derive(Debug, Clone)]
pub struct ReweightState {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub iteration: usize,
    pub changes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReweightRecord {
    pub iteration: usize,
    /// Singular values of `X_L(θ^k)`, descending.
    pub singular_values: Vec<f64>,
    pub delta_ar: Option<f64>,
    pub relative_change: Option<f64>,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

impl ReweightRecord {
    /// Singular values above `rel · σ_max`.
    pub fn count_above(&self, rel: f64) -> usize {
        linalg::numerical_rank(&self.singular_values, rel)
    }
}

#[derive(Debug, Clone)]
pub struct ReweightResult {
    pub theta: DMatrix<f64>,
    /// Entry 0 describes the initial `θ` handed to [`build_lift`].
    pub history: Vec<ReweightRecord>,
    pub state: ReweightState,
    pub converged: bool,
}

impl ReweightResult {
    /// History CSV: iteration, δ_AR (empty without truth), top-10 singular values.
    pub fn write_history<W: Write>(&self, out: W, comments: &[String]) -> std::io::Result<()> {
        let mut out = out;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "delta_ar".to_string()];
        header.extend((1..=10).map(|i| format!("sv{i}")));
        w.write_record(&header)?;
        for rec in &self.history {
            let mut row = vec![
                rec.iteration.to_string(),
                rec.delta_ar.map(|d| format!("{d:e}")).unwrap_or_default(),
            ];
            row.extend((0..10).map(|i| {
                rec.singular_values
                    .get(i)
                    .map(|s| format!("{s:e}"))
                    .unwrap_or_default()
            }));
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// `‖θ − θ̂‖_F / ‖θ‖_F`.
pub fn relative_error(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> f64 {
    (truth - estimate).norm() / truth.norm()
}

fn record(lift: &SchurLift, theta: &DMatrix<f64>, iteration: usize, truth: Option<&DMatrix<f64>>) -> ReweightRecord {
    ReweightRecord {
        iteration,
        singular_values: linalg::singular_values(&lift.assemble(theta)),
        delta_ar: truth.map(|t| relative_error(t, theta)),
        relative_change: None,
        solver_iterations: 0,
        solver_converged: true,
    }
}

/// `(T + εI)^{−1/2}` from `T = W⁻¹ U Σ Uᵀ W⁻¹`.
fn next_weight(w: &DMatrix<f64>, basis: &DMatrix<f64>, sigma: &[f64], eps: f64) -> DMatrix<f64> {
    let size = w.nrows();
    let top = sigma.iter().copied().fold(0.0, f64::max);
    let mut scaled = basis.clone();
    for (j, &s) in sigma.iter().enumerate() {
        let keep = if s > 1e-10 * top { s.sqrt() } else { 0.0 };
        scaled.column_mut(j).scale_mut(keep);
    }
    let w_inv = w.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(size, size));
    let half = w_inv * scaled;
    let t = linalg::symmetrize(&(&half * half.transpose())) + DMatrix::identity(size, size) * eps;
    linalg::sym_map(&t, |v| 1.0 / v.max(eps).sqrt())
}

/// Reweighted iterations starting from identity weights.
pub fn reweight_iterate(
    lift: &SchurLift,
    opts: &ReweightOptions,
    truth: Option<&DMatrix<f64>>,
) -> Result<ReweightResult, ReweightError> {
    if opts.eps <= 0.0 || !opts.eps.is_finite() {
        return Err(ReweightError::NonPositiveEps(opts.eps));
    }
    let size = lift.size();
    let mut state = ReweightState {
        w1: DMatrix::identity(size, size),
        w2: DMatrix::identity(size, size),
        theta: lift.theta_init().clone(),
        iteration: 0,
        changes: Vec::new(),
    };
    let mut history = vec![record(lift, &state.theta, 0, truth)];
    let mut previous: Option<DMatrix<f64>> = None;
    let mut converged = false;

    for k in 1..=opts.max_iters {
        let solve = solve_weighted_nuclear(lift, &state.w1, &state.w2, previous.as_ref(), &opts.admm)?;
        let theta = solve.theta;
        let change = previous
            .as_ref()
            .map(|p| (&theta - p).norm() / p.norm().max(f64::MIN_POSITIVE));

        let m = &state.w1 * lift.assemble(&theta) * &state.w2;
        let svd = m.svd(true, true);
        let u = svd.u.expect("left factor");
        let v = svd.v_t.expect("right factor").transpose();
        let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        let w1 = next_weight(&state.w1, &u, &sigma, opts.eps);
        let w2 = next_weight(&state.w2, &v, &sigma, opts.eps);

        let mut rec = record(lift, &theta, k, truth);
        rec.relative_change = change;
        rec.solver_iterations = solve.report.iterations;
        rec.solver_converged = solve.report.converged;
        history.push(rec);
        if let Some(c) = change {
            state.changes.push(c);
        }
        state.w1 = w1;
        state.w2 = w2;
        state.theta = theta.clone();
        state.iteration = k;
        previous = Some(theta);
        if change.is_some_and(|c| c < opts.change_tol) {
            converged = true;
            break;
        }
    }
    Ok(ReweightResult {
        theta: state.theta.clone(),
        history,
        state,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankIdentityReport {
    pub rank_lift: usize,
    pub rank_k: usize,
    pub rank_schur: usize,
    /// `l(p2+1)`.
    pub expected_schur: usize,
    /// `rank(X_L) = rank(K) + rank(θKθᵀ − I)`.
    pub identity_holds: bool,
    /// `rank(θKθᵀ − I) = l(p2+1)`.
    pub matches_model: bool,
    /// `l(p2+1) < n`.
    pub hypothesis: bool,
}

/// Numerical ranks (cut `1e−8·σ_max`) of the lift, `K` and `θKθᵀ − I`.
pub fn rank_identity_check(theta: &DMatrix<f64>, k: &BlockToeplitz, l: usize, p2: usize) -> Result<RankIdentityReport, ReweightError> {
    let n = theta.nrows();
    let km = k.matrix();
    if theta.ncols() != km.nrows() {
        return Err(ReweightError::ThetaShape {
            got: theta.shape(),
            expected: (n, km.nrows()),
        });
    }
    let k_inv = km.clone().try_inverse().ok_or(ReweightError::SingularK)?;
    let nk = km.nrows();
    let mut lift = DMatrix::zeros(nk + n, nk + n);
    lift.view_mut((0, 0), (nk, nk)).copy_from(&linalg::symmetrize(&k_inv));
    lift.view_mut((nk, 0), (n, nk)).copy_from(theta);
    lift.view_mut((0, nk), (nk, n)).copy_from(&theta.transpose());
    lift.view_mut((nk, nk), (n, n)).fill_with_identity();
    let schur = theta * km * theta.transpose() - DMatrix::identity(n, n);
    let rank_lift = linalg::matrix_rank(&lift, 1e-8);
    let rank_k = linalg::matrix_rank(km, 1e-8);
    let rank_schur = linalg::matrix_rank(&schur, 1e-8);
    let expected_schur = l * (p2 + 1);
    Ok(RankIdentityReport {
        rank_lift,
        rank_k,
        rank_schur,
        expected_schur,
        identity_holds: rank_lift == rank_k + rank_schur,
        matches_model: rank_schur == expected_schur,
        hypothesis: expected_schur < n,
    })
}

/// `(ñ/r) max_i ‖Uᵀ e_i‖²` for an orthonormal `ñ × r` basis.
pub fn coherence(u: &DMatrix<f64>, ambient: usize) -> Result<f64, ReweightError> {
    let r = u.ncols();
    let dev = (u.transpose() * u - DMatrix::identity(r, r)).norm();
    if dev > 1e-10 * (1.0 + r as f64) || u.nrows() != ambient {
        return Err(ReweightError::NotOrthonormal(dev));
    }
    if r == 0 {
        return Ok(0.0);
    }
    let top = u
        .row_iter()
        .map(|row| row.norm_squared())
        .fold(0.0, f64::max);
    Ok(ambient as f64 / r as f64 * top)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionReport {
    pub mu0: f64,
    pub mu1: f64,
    pub rank: usize,
    pub n_tilde: usize,
    /// Number of known (fixed) entries of `X_L`.
    pub known_entries: usize,
}

/// Coherence figures of `X_L(θ̂)`; rank counted above `rel · σ_max`.
pub fn completion_diagnostics(lift: &SchurLift, theta: &DMatrix<f64>, rel: f64) -> Result<CompletionReport, ReweightError> {
    let x = lift.assemble(theta);
    let size = x.nrows();
    let svd = x.svd(true, true);
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let top = sigma.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > rel * top).collect();
    let r = keep.len();
    let u_full = svd.u.expect("left factor");
    let v_full = svd.v_t.expect("right factor").transpose();
    let u = DMatrix::from_fn(size, r, |i, j| u_full[(i, keep[j])]);
    let v = DMatrix::from_fn(size, r, |i, j| v_full[(i, keep[j])]);
    let mu0 = coherence(&u, size)?.max(coherence(&v, size)?);
    let uv = &u * v.transpose();
    let max_entry = uv.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mu1 = if r == 0 { 0.0 } else { max_entry * size as f64 / (r as f64).sqrt() };
    Ok(CompletionReport {
        mu0,
        mu1,
        rank: r,
        n_tilde: size,
        known_entries: size * size - lift.free_entry_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::toeplitz_lift;

    fn simple_k() -> BlockToeplitz {
        let r0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let r1 = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.0, 0.2]);
        toeplitz_lift(&[r0, r1]).unwrap()
    }

    #[test]
    fn empty_topology_has_no_freedom() {
        let k = simple_k();
        let mut init = DMatrix::zeros(2, 4);
        init.columns_mut(0, 2).fill_with_identity();
        let lift = build_lift(&k, &Topology::empty(2), &init).unwrap();
        assert_eq!(lift.free_entry_count(), 0);
        let size = lift.size();
        let eye = DMatrix::identity(size, size);
        let sol = solve_weighted_nuclear(&lift, &eye, &eye, None, &AdmmSettings::default()).unwrap();
        assert_eq!(sol.theta, init);
        let expect: f64 = lift.assemble(&init).singular_values().sum();
        assert!((sol.objective - expect).abs() < 1e-12);
    }

    #[test]
    fn complete_topology_frees_off_diagonals() {
        let k = simple_k();
        let init = DMatrix::zeros(2, 4);
        let lift = build_lift(&k, &Topology::complete(2), &init).unwrap();
        assert_eq!(lift.free_positions(), &[(0, 3), (1, 2)]);
    }

    #[test]
    fn coherence_extremes() {
        let u = DMatrix::<f64>::identity(6, 6).columns(0, 2).into_owned();
        assert!((coherence(&u, 6).unwrap() - 3.0).abs() < 1e-12);
        assert!((coherence(&DMatrix::identity(6, 6), 6).unwrap() - 1.0).abs() < 1e-12);
        assert!(coherence(&(DMatrix::identity(3, 3) * 2.0), 3).is_err());
    }

    #[test]
    fn non_positive_eps_rejected() {
        let k = simple_k();
        let lift = build_lift(&k, &Topology::empty(2), &DMatrix::zeros(2, 4)).unwrap();
        let opts = ReweightOptions {
            eps: 0.0,
            ..ReweightOptions::default()
        };
        assert!(matches!(reweight_iterate(&lift, &opts, None), Err(ReweightError::NonPositiveEps(_))));
    }
}
