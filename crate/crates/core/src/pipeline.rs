//! End-to-end identification: topology sweep, AR refinement, latent factor
//! and scoring for every regularization weight, then selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{sample_autocov, truncated_periodogram, BlockToeplitz, CovSequence, CovarianceError, Window};
use crate::data::Trajectory;
use crate::latent::{self, LatentError, LatentSolution, MonteCarloOptions};
use crate::model::{FrequencyGrid, ModelError, SpectrumGrid};
use crate::reweight::{self, ReweightError, ReweightOptions, ReweightResult};
use crate::selection::{self, ScoredModel, SelectionError, SupportCount};
use crate::solver::{AdmmSettings, WarmStart};
use crate::sparse_lowrank::{self, DualCertificate, TopologyError, TopologyOptions, TopologySolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Covariance,
    Topology,
    Reweight,
    Latent,
    Score,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Covariance => "covariance",
            Stage::Topology => "topology",
            Stage::Reweight => "reweight",
            Stage::Latent => "latent",
            Stage::Score => "score",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Reweight(#[from] ReweightError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

#[derive(Debug, Error)]
#[error("{stage} stage failed{}: {source}", .lambda.map(|l| format!(" at lambda = {l}")).unwrap_or_default())]
pub struct PipelineError {
    pub stage: Stage,
    pub lambda: Option<f64>,
    #[source]
    pub source: StageError,
}

impl PipelineError {
    /// True when the failure is numerical rather than a bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.source,
            StageError::Topology(TopologyError::SolverFailed(_))
                | StageError::Topology(TopologyError::CertificateFailed(_))
                | StageError::Reweight(ReweightError::SolverFailed(_))
                | StageError::Latent(LatentError::SolverFailed(_))
                | StageError::Latent(LatentError::Infeasible)
        )
    }
}

fn at<E: Into<StageError>>(stage: Stage, lambda: Option<f64>) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        lambda,
        source: e.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    pub p1: usize,
    pub p2: usize,
    pub lambdas: Vec<f64>,
    pub tau: f64,
    pub grid_size: usize,
    pub eps: f64,
    pub reweight_iters: usize,
    pub change_tol: f64,
    pub alphas: Vec<f64>,
    pub mc_runs: usize,
    pub seed: u64,
    pub eta: f64,
    /// Max lag of the non-parametric reference spectrum; `2(p1+p2)` if unset.
    pub reference_lag: Option<usize>,
    pub support_count: SupportCount,
    /// Radius growth factor per retry of an infeasible latent program.
    pub inflation_step: f64,
    pub max_inflations: usize,
    pub topology_admm: AdmmSettings,
    pub reweight_admm: AdmmSettings,
    pub latent_admm: AdmmSettings,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            p1: 2,
            p2: 1,
            lambdas: vec![0.12, 0.24, 0.36, 0.48, 0.60, 0.72, 0.84],
            tau: 0.1,
            grid_size: 512,
            eps: 1e-3,
            reweight_iters: 50,
            change_tol: 1e-6,
            alphas: vec![0.95],
            mc_runs: 200,
            seed: 0,
            eta: 0.05,
            reference_lag: None,
            support_count: SupportCount::Unordered,
            inflation_step: 1.5,
            max_inflations: 30,
            topology_admm: AdmmSettings::default(),
            reweight_admm: AdmmSettings {
                max_iters: 2000,
                ..AdmmSettings::default()
            },
            latent_admm: latent::latent_admm_settings(),
        }
    }
}

impl IdentifyConfig {
    pub fn reference_lag(&self) -> usize {
        self.reference_lag.unwrap_or(2 * (self.p1 + self.p2))
    }

    fn topology_options(&self) -> TopologyOptions {
        TopologyOptions {
            tau: self.tau,
            grid_size: self.grid_size,
            admm: self.topology_admm,
        }
    }

    fn reweight_options(&self) -> ReweightOptions {
        ReweightOptions {
            max_iters: self.reweight_iters,
            eps: self.eps,
            change_tol: self.change_tol,
            admm: self.reweight_admm,
        }
    }

    fn monte_carlo(&self) -> MonteCarloOptions {
        MonteCarloOptions {
            alphas: self.alphas.clone(),
            runs: self.mc_runs,
            seed: self.seed,
            ..MonteCarloOptions::default()
        }
    }
}

/// Everything computed for one regularization weight.
#[derive(Debug)]
pub struct Candidate {
    pub lambda: f64,
    pub topology: TopologySolution,
    pub certificate: Result<DualCertificate, TopologyError>,
    /// `None` when the topology has no edges and nothing is refined.
    pub reweight: Option<ReweightResult>,
    pub theta_a: DMatrix<f64>,
    pub latent: LatentSolution,
    /// Factor applied to the Monte Carlo radii before the latent program
    /// became feasible; 1 when no inflation was needed.
    pub delta_inflation: f64,
    pub scored: ScoredModel,
}

#[derive(Debug)]
pub struct Identification {
    pub covs: CovSequence,
    pub reference: SpectrumGrid,
    pub candidates: Vec<Candidate>,
    pub selected: usize,
}

impl Identification {
    pub fn best(&self) -> &Candidate {
        &self.candidates[self.selected]
    }

    pub fn scored(&self) -> Vec<ScoredModel> {
        self.candidates.iter().map(|c| c.scored.clone()).collect()
    }
}

/// When the Monte Carlo radii leave the latent program infeasible (the AR
/// filter of a sparse candidate leaves lag structure no latent term of order
/// `p2` can explain), grow every radius by `inflation_step` until it is not.
fn solve_latent_inflating(
    covs_ar: &CovSequence,
    mut deltas: latent::ToleranceSet,
    cfg: &IdentifyConfig,
) -> Result<(LatentSolution, f64), LatentError> {
    let mut factor = 1.0;
    for _ in 0..cfg.max_inflations {
        match latent::solve_latent(covs_ar, &deltas, cfg.eta, &cfg.latent_admm) {
            Err(LatentError::Infeasible) => {
                factor *= cfg.inflation_step;
                deltas.deltas.iter_mut().for_each(|d| *d *= cfg.inflation_step);
            }
            other => return other.map(|s| (s, factor)),
        }
    }
    latent::solve_latent(covs_ar, &deltas, cfg.eta, &cfg.latent_admm).map(|s| (s, factor))
}

/// Run every stage over the configured `λ` grid (ascending), warm-starting
/// each topology solve from the previous one. `on_candidate` sees each
/// candidate as soon as it is complete. With `truth` the reweight history
/// records the relative AR error per iteration.
pub fn identify(
    y: &Trajectory,
    cfg: &IdentifyConfig,
    truth: Option<&DMatrix<f64>>,
    mut on_candidate: impl FnMut(&Candidate),
) -> Result<Identification, PipelineError> {
    let n = y.dim();
    let covs = sample_autocov(y, cfg.p1).map_err(at(Stage::Covariance, None))?;
    let k = BlockToeplitz::from_cov(&covs);
    let grid = FrequencyGrid::uniform(cfg.grid_size).map_err(at(Stage::Covariance, None))?;
    let reference_covs = sample_autocov(y, cfg.reference_lag()).map_err(at(Stage::Covariance, None))?;
    let reference = truncated_periodogram(&reference_covs, &grid, Window::Bartlett).map_err(at(Stage::Covariance, None))?;

    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(|a, b| a.total_cmp(b));
    let topo_opts = cfg.topology_options();
    let mut warm: Option<WarmStart> = None;
    let mut candidates = Vec::with_capacity(lambdas.len());

    for lambda in lambdas {
        let some = Some(lambda);
        let topology = sparse_lowrank::solve_topology(&k, lambda, &topo_opts, warm.as_ref()).map_err(at(Stage::Topology, some))?;
        warm = Some(topology.report.warm_start());
        let certificate = sparse_lowrank::verify_kkt(&topology, &k, lambda);
        let init = sparse_lowrank::first_block_row(&topology.x, n);
        let lift = reweight::build_lift(&k, &topology.topology, &init.theta).map_err(at(Stage::Reweight, some))?;

        let (reweight, theta_a) = if lift.free_positions().is_empty() {
            (None, lift.theta_from_values(&DVector::zeros(0)))
        } else {
            let r = reweight::reweight_iterate(&lift, &cfg.reweight_options(), truth.filter(|t| t.shape() == init.theta.shape())).map_err(at(Stage::Reweight, some))?;
            let theta = r.theta.clone();
            (Some(r), theta)
        };

        let y_ar = latent::filter_ar(y, &theta_a).map_err(at(Stage::Latent, some))?;
        let (covs_ar, _) = latent::estimate_ar_spectrum(&y_ar, cfg.p2, &grid, Window::Bartlett).map_err(at(Stage::Latent, some))?;
        let deltas = latent::monte_carlo_deltas(&covs_ar, y.len(), &cfg.monte_carlo()).map_err(at(Stage::Latent, some))?;
        let (latent_sol, delta_inflation) = solve_latent_inflating(&covs_ar, deltas, cfg).map_err(at(Stage::Latent, some))?;

        let gram = &latent_sol.theta_l * latent_sol.theta_l.transpose();
        let scored = selection::score(
            lambda,
            topology.topology.clone(),
            theta_a.clone(),
            gram,
            latent_sol.l_hat,
            &reference,
            &grid,
            cfg.support_count,
        )
        .map_err(at(Stage::Score, some))?;

        let candidate = Candidate {
            lambda,
            topology,
            certificate,
            reweight,
            theta_a,
            latent: latent_sol,
            delta_inflation,
            scored,
        };
        on_candidate(&candidate);
        candidates.push(candidate);
    }

    let scored: Vec<ScoredModel> = candidates.iter().map(|c| c.scored.clone()).collect();
    let best = selection::select_best(&scored).map_err(at(Stage::Score, None))?;
    let selected = scored
        .iter()
        .position(|s| std::ptr::eq(s, best))
        .expect("best comes from the list");
    Ok(Identification {
        covs,
        reference,
        candidates,
        selected,
    })
}
