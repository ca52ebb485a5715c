//! Consensus ADMM for `min f(x) + g(z)` subject to `A x = z`.
//!
//! A problem supplies the `x`-minimization, the linear map `A`, the norm of
//! `Aᵀ` applied to split-space vectors, and the prox of `g`. The engine runs
//! scaled-form ADMM with residual balancing.

pub mod prox;

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    MaxIterationsExceeded {
        iterations: usize,
        primal: f64,
        dual: f64,
    },
    #[error("multipliers diverged after {iterations} iterations; problem looks infeasible")]
    InfeasibleDetected { iterations: usize },
    #[error("warm start has length {got}, expected {expected}")]
    WarmStartMismatch { got: usize, expected: usize },
}

pub trait SplitProblem {
    type Primal: Clone;

    /// Length of the split variable `z`.
    fn split_dim(&self) -> usize;

    /// Number of scalar primal unknowns (used in the absolute tolerance).
    fn primal_dim(&self) -> usize;

    /// `argmin_x f(x) + (ρ/2)‖A x − v‖²`.
    fn primal_step(&mut self, v: &DVector<f64>, rho: f64) -> Self::Primal;

    /// `A x`.
    fn forward(&self, x: &Self::Primal) -> DVector<f64>;

    /// `‖Aᵀ d‖`.
    fn adjoint_norm(&self, d: &DVector<f64>) -> f64;

    /// `prox_{g/ρ}(v)`.
    fn split_prox(&self, v: &DVector<f64>, rho: f64) -> DVector<f64>;

    /// `f(x) + g(z)`.
    fn objective(&self, x: &Self::Primal, z: &DVector<f64>) -> f64;
}

/// Fields missing from a config take the solver defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmSettings {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub rho: f64,
    pub adaptive_rho: bool,
    /// Iterations between residual-balancing checks.
    pub adapt_interval: usize,
    pub trace: bool,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            rho: 1.0,
            adaptive_rho: true,
            adapt_interval: 10,
            trace: false,
        }
    }
}

/// Split variable and unscaled multiplier from a previous solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub z: DVector<f64>,
    pub dual: DVector<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport<P> {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub x: P,
    pub z: DVector<f64>,
    /// Unscaled multiplier `y = ρu` of `A x = z`.
    pub dual: DVector<f64>,
    pub rho: f64,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl<P> SolveReport<P> {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            z: self.z.clone(),
            dual: self.dual.clone(),
            rho: self.rho,
        }
    }

    /// Turn a non-converged report into an error.
    pub fn require_converged(self) -> Result<Self, SolverError> {
        if self.converged {
            Ok(self)
        } else {
            Err(SolverError::MaxIterationsExceeded {
                iterations: self.iterations,
                primal: self.primal_residual,
                dual: self.dual_residual,
            })
        }
    }

    /// Iteration trace as CSV.
    pub fn write_trace<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "primal_residual", "dual_residual", "objective"])?;
        for row in &self.trace {
            w.write_record(&[
                row.iteration.to_string(),
                format!("{:e}", row.primal_residual),
                format!("{:e}", row.dual_residual),
                format!("{:e}", row.objective),
            ])?;
        }
        w.flush()
    }
}

struct Snapshot<P> {
    score: f64,
    iteration: usize,
    primal: f64,
    dual: f64,
    x: P,
    z: DVector<f64>,
    y: DVector<f64>,
}

/// Run ADMM. A run that hits `max_iters` returns the best iterate seen with
/// `converged = false`; diverging multipliers give `InfeasibleDetected`.
pub fn admm_solve<S: SplitProblem>(
    problem: &mut S,
    settings: &AdmmSettings,
    warm: Option<&WarmStart>,
) -> Result<SolveReport<S::Primal>, SolverError> {
    let m = problem.split_dim();
    let sqrt_m = (m as f64).sqrt();
    let sqrt_n = (problem.primal_dim() as f64).sqrt();
    let mut rho = settings.rho;
    let (mut z, mut u) = match warm {
        Some(w) => {
            for len in [w.z.len(), w.dual.len()] {
                if len != m {
                    return Err(SolverError::WarmStartMismatch { got: len, expected: m });
                }
            }
            rho = w.rho;
            (w.z.clone(), &w.dual / w.rho)
        }
        None => (DVector::zeros(m), DVector::zeros(m)),
    };

    let mut trace = Vec::new();
    let mut best: Option<Snapshot<S::Primal>> = None;
    let mut dual_ref = 0.0_f64;
    let mut scale_ref = 0.0_f64;

    for it in 1..=settings.max_iters {
        let v = &z - &u;
        let x = problem.primal_step(&v, rho);
        let ax = problem.forward(&x);
        let z_old = std::mem::replace(&mut z, problem.split_prox(&(&ax + &u), rho));
        let r_vec = &ax - &z;
        u += &r_vec;

        let r = r_vec.norm();
        let s = rho * problem.adjoint_norm(&(&z - &z_old));
        let eps_pri = sqrt_m * settings.abs_tol + settings.rel_tol * ax.norm().max(z.norm());
        let eps_dual = sqrt_n * settings.abs_tol + settings.rel_tol * rho * problem.adjoint_norm(&u);

        if settings.trace {
            trace.push(TraceRow {
                iteration: it,
                primal_residual: r,
                dual_residual: s,
                objective: problem.objective(&x, &z),
            });
        }

        let score = (r / eps_pri).max(s / eps_dual);
        let converged = r <= eps_pri && s <= eps_dual;
        if converged || best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(Snapshot {
                score,
                iteration: it,
                primal: r,
                dual: s,
                x: x.clone(),
                z: z.clone(),
                y: &u * rho,
            });
        }
        if converged {
            break;
        }

        let y_norm = rho * u.norm();
        scale_ref = scale_ref.max(ax.norm()).max(z.norm());
        if it <= 10 {
            dual_ref = dual_ref.max(y_norm);
        } else if y_norm > 1e6 * (1.0 + dual_ref + scale_ref) {
            return Err(SolverError::InfeasibleDetected { iterations: it });
        }

        if settings.adaptive_rho && it % settings.adapt_interval.max(1) == 0 {
            if r > 10.0 * s {
                rho *= 2.0;
                u /= 2.0;
            } else if s > 10.0 * r {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }

    let b = best.expect("at least one iteration");
    let converged = b.score <= 1.0;
    Ok(SolveReport {
        iterations: if converged { b.iteration } else { settings.max_iters },
        primal_residual: b.primal,
        dual_residual: b.dual,
        objective: problem.objective(&b.x, &b.z),
        x: b.x,
        z: b.z,
        dual: b.y,
        rho,
        converged,
        trace,
    })
}
