//! Stage 1: the sparse-plus-low-rank topology program
//!
//! `min (1−λ)[tr(K X) − n] + λ h∞(D(X))` over `X ⪰ 0` with `X_00 = I`,
//!
//! followed by extraction of `Φ̂_S`, thresholding into a topology, a dual
//! certificate check and the rank-n factorization `X = θᵀθ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{toeplitz_adjoint, toeplitz_lift, BlockToeplitz};
use crate::linalg;
use crate::model::{FrequencyGrid, ModelError, PseudoPolynomial, Topology};
use crate::solver::{admm_solve, prox, AdmmSettings, SolveReport, SolverError, SplitProblem, WarmStart};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("lambda must lie in (0, 1), got {0}")]
    InvalidLambda(f64),
    #[error("K is not positive definite")]
    IndefiniteK,
    #[error("topology solve failed: {0}")]
    SolverFailed(#[from] SolverError),
    #[error("non-positive diagonal of the sparse spectrum at node {node}, omega = {omega:.4}")]
    NonpositiveDiagonal { node: usize, omega: f64 },
    #[error("rank of X is {rank}, below n = {n}")]
    RankDeficient { rank: usize, n: usize },
    #[error("rank of X is {rank}, above n = {n} (factor residual {residual:.3e})")]
    RankExcess { rank: usize, n: usize, residual: f64 },
    #[error("certificate failed: {0}")]
    CertificateFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `Σ_{k<q} max_j max(|[Q_j]_kq|, |[Q_j]_qk|)`.
pub fn h_inf(q: &[DMatrix<f64>]) -> f64 {
    let n = q.first().map_or(0, |m| m.nrows());
    let mut total = 0.0;
    for k in 0..n {
        for r in (k + 1)..n {
            total += q
                .iter()
                .map(|m| m[(k, r)].abs().max(m[(r, k)].abs()))
                .fold(0.0, f64::max);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyOptions {
    /// Normalized edge threshold.
    pub tau: f64,
    pub grid_size: usize,
    pub admm: AdmmSettings,
}

impl Default for TopologyOptions {
    fn default() -> Self {
        Self {
            tau: 0.1,
            grid_size: 512,
            admm: AdmmSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopologySolution {
    pub lambda: f64,
    /// `n(p1+1)` square, PSD, identity corner.
    pub x: DMatrix<f64>,
    pub q: PseudoPolynomial,
    pub topology: Topology,
    /// Normalized edge scores, `n × n`.
    pub scores: DMatrix<f64>,
    pub report: SolveReport<DMatrix<f64>>,
}

impl TopologySolution {
    pub fn n(&self) -> usize {
        self.q.dim()
    }

    pub fn p1(&self) -> usize {
        self.q.order()
    }

    pub fn to_file(&self) -> TopologySolutionFile {
        TopologySolutionFile {
            lambda: self.lambda,
            edges: self.topology.edges().map(|(a, b)| [a, b]).collect(),
            objective: self.report.objective,
            residuals: Residuals {
                primal: self.report.primal_residual,
                dual: self.report.dual_residual,
            },
            iterations: self.report.iterations,
            converged: self.report.converged,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopologySolutionFile {
    pub lambda: f64,
    pub edges: Vec<[usize; 2]>,
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
}

/// Split form: `z = (Y, Q)` with `Y = X` kept PSD and `Q = D(X)` penalized.
struct TopologyProblem<'a> {
    k: &'a DMatrix<f64>,
    n: usize,
    blocks: usize,
    lambda: f64,
}

impl TopologyProblem<'_> {
    fn dim(&self) -> usize {
        self.n * self.blocks
    }

    fn y_len(&self) -> usize {
        self.dim() * self.dim()
    }

    fn unpack(&self, v: &DVector<f64>) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let d = self.dim();
        let nn = self.n * self.n;
        let y = DMatrix::from_column_slice(d, d, &v.as_slice()[..d * d]);
        let q = (0..self.blocks)
            .map(|j| {
                let start = d * d + j * nn;
                DMatrix::from_column_slice(self.n, self.n, &v.as_slice()[start..start + nn])
            })
            .collect();
        (y, q)
    }

    fn pack(&self, y: &DMatrix<f64>, q: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.split_dim());
        out.extend_from_slice(y.as_slice());
        for m in q {
            out.extend_from_slice(m.as_slice());
        }
        DVector::from_vec(out)
    }

    /// Apply the group prox to a lag list in place.
    fn shrink_groups(&self, q: &mut [DMatrix<f64>], t: f64) {
        let mut group = Vec::with_capacity(2 * self.blocks);
        for a in 0..self.n {
            for b in (a + 1)..self.n {
                group.clear();
                for m in q.iter() {
                    group.push(m[(a, b)]);
                    group.push(m[(b, a)]);
                }
                let shrunk = prox::prox_group_linf(&group, t);
                for (j, m) in q.iter_mut().enumerate() {
                    m[(a, b)] = shrunk[2 * j];
                    m[(b, a)] = shrunk[2 * j + 1];
                }
            }
        }
    }
}

impl SplitProblem for TopologyProblem<'_> {
    type Primal = DMatrix<f64>;

    fn split_dim(&self) -> usize {
        self.y_len() + self.blocks * self.n * self.n
    }

    fn primal_dim(&self) -> usize {
        self.y_len()
    }

    fn primal_step(&mut self, v: &DVector<f64>, rho: f64) -> DMatrix<f64> {
        let (vy, vq) = self.unpack(v);
        let n = self.n;
        let b = self.blocks;
        let target = linalg::symmetrize(&vy) - self.k * ((1.0 - self.lambda) / rho);
        let mut x = DMatrix::zeros(self.dim(), self.dim());
        let blk = |i: usize, j: usize| target.view((i * n, j * n), (n, n)).into_owned();

        // diagonal blocks, corner fixed at I
        let w0 = linalg::symmetrize(&vq[0]);
        let eye = DMatrix::<f64>::identity(n, n);
        x.view_mut((0, 0), (n, n)).copy_from(&eye);
        if b > 1 {
            let m = b as f64;
            let mut sum_rest = DMatrix::zeros(n, n);
            for v in 1..b {
                sum_rest += blk(v, v);
            }
            let s_rest = (sum_rest - (&eye - &w0) * (m - 1.0)) / m;
            let shift = &eye + &s_rest - &w0;
            for v in 1..b {
                x.view_mut((v * n, v * n), (n, n))
                    .copy_from(&(blk(v, v) - &shift));
            }
        }

        // off-diagonal block diagonals
        for j in 1..b {
            let m = (b - j) as f64;
            let w = &vq[j];
            let mut sum = DMatrix::zeros(n, n);
            for v in 0..(b - j) {
                sum += blk(v, v + j);
            }
            let s = (sum + w * m) / (1.0 + 2.0 * m);
            let shift = s * 2.0 - w;
            for v in 0..(b - j) {
                let xv = blk(v, v + j) - &shift;
                x.view_mut((v * n, (v + j) * n), (n, n)).copy_from(&xv);
                x.view_mut(((v + j) * n, v * n), (n, n))
                    .copy_from(&xv.transpose());
            }
        }
        x
    }

    fn forward(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let q = toeplitz_adjoint(x, self.n).expect("consistent blocks");
        self.pack(x, &q)
    }

    fn adjoint_norm(&self, d: &DVector<f64>) -> f64 {
        let (dy, dq) = self.unpack(d);
        let lifted = toeplitz_lift_loose(&dq);
        (dy + lifted).norm()
    }

    fn split_prox(&self, v: &DVector<f64>, rho: f64) -> DVector<f64> {
        let (vy, mut vq) = self.unpack(v);
        let y = prox::psd_project(&vy);
        self.shrink_groups(&mut vq, self.lambda / rho);
        self.pack(&y, &vq)
    }

    fn objective(&self, x: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
        let (_, q) = self.unpack(z);
        (1.0 - self.lambda) * (linalg::inner(self.k, x) - self.n as f64) + self.lambda * h_inf(&q)
    }
}

/// Lift that symmetrizes a possibly asymmetric leading block (adjoint of `D`
/// on the full coefficient space).
fn toeplitz_lift_loose(q: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut fixed = q.to_vec();
    fixed[0] = linalg::symmetrize(&q[0]);
    toeplitz_lift(&fixed).expect("symmetric lead").matrix().clone()
}

/// Congruence that maps the PSD iterate onto an exact identity corner.
fn normalize_corner(y: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let c = y.view((0, 0), (n, n)).into_owned();
    let inv_sqrt = linalg::sym_map(&c, |v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let mut s = DMatrix::identity(y.nrows(), y.ncols());
    s.view_mut((0, 0), (n, n)).copy_from(&inv_sqrt);
    let mut out = linalg::symmetrize(&(&s * y * &s));
    out.view_mut((0, 0), (n, n)).fill_with_identity();
    out
}

/// Solve the topology program at `lambda`, optionally warm-started.
pub fn solve_topology(
    k: &BlockToeplitz,
    lambda: f64,
    opts: &TopologyOptions,
    warm: Option<&WarmStart>,
) -> Result<TopologySolution, TopologyError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(TopologyError::InvalidLambda(lambda));
    }
    if k.matrix().clone().cholesky().is_none() {
        return Err(TopologyError::IndefiniteK);
    }
    let n = k.block();
    let mut problem = TopologyProblem {
        k: k.matrix(),
        n,
        blocks: k.blocks(),
        lambda,
    };
    let warm = warm.filter(|w| w.z.len() == problem.split_dim());
    let report = admm_solve(&mut problem, &opts.admm, warm)?;
    let (y, _) = problem.unpack(&report.z);
    let x = normalize_corner(&prox::psd_project(&y), n);
    let q = extract_sparse_spectrum(&x, n)?;
    let grid = FrequencyGrid::uniform(opts.grid_size)?;
    let scores = edge_scores(&q, &grid)?;
    let topology = topology_from_scores(&scores, opts.tau);
    Ok(TopologySolution {
        lambda,
        x,
        q,
        topology,
        scores,
        report,
    })
}

/// `Q̂_0 = Σ_v X_vv`, `Q̂_j = 2 Σ_v X_{v,v+j}`.
pub fn extract_sparse_spectrum(x: &DMatrix<f64>, n: usize) -> Result<PseudoPolynomial, TopologyError> {
    let q = toeplitz_adjoint(x, n).map_err(|e| TopologyError::CertificateFailed(e.to_string()))?;
    Ok(PseudoPolynomial::new(q)?)
}

/// `max_ω |Φ_kq| / sqrt(Φ_kk Φ_qq)` for every pair.
pub fn edge_scores(phi_s: &PseudoPolynomial, grid: &FrequencyGrid) -> Result<DMatrix<f64>, TopologyError> {
    let n = phi_s.dim();
    let mut scores = DMatrix::zeros(n, n);
    for &omega in grid.omegas() {
        let v = phi_s.eval(omega);
        for i in 0..n {
            if v[(i, i)].re <= 0.0 {
                return Err(TopologyError::NonpositiveDiagonal { node: i, omega });
            }
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let s = v[(a, b)].norm() / (v[(a, a)].re * v[(b, b)].re).sqrt();
                if s > scores[(a, b)] {
                    scores[(a, b)] = s;
                    scores[(b, a)] = s;
                }
            }
        }
    }
    Ok(scores)
}

fn topology_from_scores(scores: &DMatrix<f64>, tau: f64) -> Topology {
    let n = scores.nrows();
    let mut t = Topology::empty(n);
    for a in 0..n {
        for b in (a + 1)..n {
            if scores[(a, b)] > tau {
                t.insert(a, b).expect("valid pair");
            }
        }
    }
    t
}

/// Edge iff the normalized score exceeds `tau`.
pub fn threshold_topology(
    phi_s: &PseudoPolynomial,
    tau: f64,
    grid: &FrequencyGrid,
) -> Result<Topology, TopologyError> {
    Ok(topology_from_scores(&edge_scores(phi_s, grid)?, tau))
}

/// Multipliers of the γ-form program and the residual of each optimality
/// condition.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub gamma: f64,
    pub z: Vec<DMatrix<f64>>,
    pub u: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub residuals: KktResiduals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖X_00 − I‖_F` plus the negative part of `λ_min(X)`.
    pub primal: f64,
    /// Largest `|diag(Z_j)|`.
    pub z_diagonal: f64,
    /// Largest excess of `Σ_j |Z_kq| + |Z_qk|` over `γ`.
    pub z_budget: f64,
    /// Negative part of `λ_min(U)`.
    pub u_psd: f64,
    /// `‖K + T(Z) − U − blockdiag(P, 0)‖_F` off the corner.
    pub stationarity: f64,
    /// `‖(K + T(Z) − blockdiag(P, 0)) X‖_F`.
    pub slackness: f64,
    /// γ-form primal objective minus `tr(P) − n`.
    pub gap: f64,
    pub primal_objective: f64,
    pub rank: usize,
}

impl DualCertificate {
    /// Rebuild the residuals from the stored multipliers.
    pub fn recompute(&self, x: &DMatrix<f64>, k: &DMatrix<f64>) -> KktResiduals {
        kkt_residuals(x, k, &self.z, &self.u, &self.p, self.gamma)
    }
}

/// Relative eigenvalue cut for the rank condition. Matches the tolerance of
/// the stationarity and slackness checks: warm-started solves can leave an
/// eigenvalue near `1e−5·λ_max` along a direction the objective barely sees.
const CERTIFICATE_RANK_TOL: f64 = 1e-4;

fn kkt_residuals(
    x: &DMatrix<f64>,
    k: &DMatrix<f64>,
    z: &[DMatrix<f64>],
    u: &DMatrix<f64>,
    p: &DMatrix<f64>,
    gamma: f64,
) -> KktResiduals {
    let n = p.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let corner = (x.view((0, 0), (n, n)) - &eye).norm();
    let primal = corner + (-linalg::min_eigenvalue(x)).max(0.0);

    let z_diagonal = z
        .iter()
        .flat_map(|m| m.diagonal().iter().map(|v| v.abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let mut z_budget = 0.0_f64;
    for a in 0..n {
        for b in (a + 1)..n {
            let s: f64 = z.iter().map(|m| m[(a, b)].abs() + m[(b, a)].abs()).sum();
            z_budget = z_budget.max(s - gamma);
        }
    }
    let u_psd = (-linalg::min_eigenvalue(u)).max(0.0);

    let mut pad = DMatrix::zeros(x.nrows(), x.ncols());
    pad.view_mut((0, 0), (n, n)).copy_from(p);
    let lifted = toeplitz_lift_loose(z);
    let stationarity = (k + &lifted - u - &pad).norm();
    let slackness = ((k + &lifted - &pad) * x).norm();

    let q = toeplitz_adjoint(x, n).expect("consistent blocks");
    let primal_objective = linalg::inner(k, x) - n as f64 + gamma * h_inf(&q);
    let gap = primal_objective - (p.trace() - n as f64);
    let eig = linalg::sym_eigenvalues(x);
    KktResiduals {
        primal,
        z_diagonal,
        z_budget: z_budget.max(0.0),
        u_psd,
        stationarity,
        slackness,
        gap,
        primal_objective,
        rank: linalg::numerical_rank(&eig, CERTIFICATE_RANK_TOL),
    }
}

/// Build multipliers from the solver duals and check the optimality
/// conditions of the γ = λ/(1−λ) form.
pub fn verify_kkt(sol: &TopologySolution, k: &BlockToeplitz, lambda: f64) -> Result<DualCertificate, TopologyError> {
    if !sol.report.converged {
        return Err(TopologyError::CertificateFailed("solve did not converge".into()));
    }
    let n = k.block();
    let blocks = k.blocks();
    let d = n * blocks;
    let scale = 1.0 - lambda;
    let gamma = lambda / scale;
    let dual = &sol.report.dual;
    let y_dual = DMatrix::from_column_slice(d, d, &dual.as_slice()[..d * d]);
    let u = linalg::symmetrize(&(-y_dual / scale));
    let z: Vec<DMatrix<f64>> = (0..blocks)
        .map(|j| {
            let start = d * d + j * n * n;
            DMatrix::from_column_slice(n, n, &dual.as_slice()[start..start + n * n]) / scale
        })
        .collect();
    let full = k.matrix() + toeplitz_lift_loose(&z) - &u;
    let p = linalg::symmetrize(&full.view((0, 0), (n, n)).into_owned());
    let residuals = kkt_residuals(&sol.x, k.matrix(), &z, &u, &p, gamma);

    let knorm = k.matrix().norm();
    let tol = 1e-4 * knorm;
    let mut failed = Vec::new();
    if residuals.primal > 1e-6 * (1.0 + knorm) {
        failed.push(format!("primal feasibility {:.3e}", residuals.primal));
    }
    if residuals.z_diagonal > 1e-8 * (1.0 + gamma) {
        failed.push(format!("diag(Z) {:.3e}", residuals.z_diagonal));
    }
    if residuals.z_budget > 1e-8 * (1.0 + gamma) {
        failed.push(format!("gamma budget {:.3e}", residuals.z_budget));
    }
    if residuals.u_psd > tol {
        failed.push(format!("U not PSD {:.3e}", residuals.u_psd));
    }
    if residuals.stationarity > tol {
        failed.push(format!("stationarity {:.3e}", residuals.stationarity));
    }
    if residuals.slackness > tol {
        failed.push(format!("complementary slackness {:.3e}", residuals.slackness));
    }
    if residuals.rank != n {
        failed.push(format!("rank {} != {}", residuals.rank, n));
    }
    if residuals.gap.abs() > 1e-4 * (1.0 + residuals.primal_objective.abs()) {
        failed.push(format!("duality gap {:.3e}", residuals.gap));
    }
    if !failed.is_empty() {
        return Err(TopologyError::CertificateFailed(failed.join("; ")));
    }
    Ok(DualCertificate {
        gamma,
        z,
        u,
        p,
        residuals,
    })
}

/// `θ̂` read from the first block row of `X`, with rank checks.
#[derive(Debug, Clone)]
pub struct ThetaFactor {
    pub theta: DMatrix<f64>,
    pub rank: usize,
    /// `‖X − θ̂ᵀθ̂‖_F`.
    pub residual: f64,
}

/// First block row of `X` as `θ̂ = [I, X_01, …, X_0p]`, rank unchecked.
pub fn first_block_row(x: &DMatrix<f64>, n: usize) -> ThetaFactor {
    let mut theta = x.rows(0, n).into_owned();
    theta.columns_mut(0, n).fill_with_identity();
    let residual = (x - theta.transpose() * &theta).norm();
    let sv = linalg::sym_eigenvalues(x);
    ThetaFactor {
        theta,
        rank: linalg::numerical_rank(&sv, 1e-6),
        residual,
    }
}

/// Factor `X = θ̂ᵀθ̂`; the numerical rank (cut `1e−6·σ_max`) must equal `n`.
pub fn factor_theta(x: &DMatrix<f64>, n: usize) -> Result<ThetaFactor, TopologyError> {
    let f = first_block_row(x, n);
    match f.rank.cmp(&n) {
        std::cmp::Ordering::Less => Err(TopologyError::RankDeficient { rank: f.rank, n }),
        std::cmp::Ordering::Greater => Err(TopologyError::RankExcess {
            rank: f.rank,
            n,
            residual: f.residual,
        }),
        std::cmp::Ordering::Equal => Ok(f),
    }
}
