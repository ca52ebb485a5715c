//! Batch front end: configuration, subcommands and the on-disk result
//! bundle.
//!
//! Every file written here carries the run configuration, either as `# `
//! comment lines (CSV) or under a `config` key (JSON).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use slrid::covariance::{sample_autocov, truncated_periodogram, Window};
use slrid::data::{self, DataError, Trajectory};
use slrid::latent::{self, LatentSolutionFile};
use slrid::linalg;
use slrid::model::{self, ArLatentModel, FrequencyGrid, ModelError, ModelFile, Topology};
use slrid::pipeline::{self, Candidate, IdentifyConfig, PipelineError};
use slrid::reweight::relative_error;
use slrid::selection::{self, ScoredModel, ScoredModelFile, SelectionError};

/// Name accepted in place of a model path for the built-in 10-node example.
pub const BUILTIN_MODEL: &str = "example-one";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_solver_failure() {
            CliError::Solver(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Model JSON for `simulate`, or `example-one`.
    pub model: Option<String>,
    /// Model used to report errors against the truth in `identify`.
    pub truth: Option<String>,
    pub trajectory: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub n_samples: usize,
    pub burn_in: usize,
    pub output: PathBuf,
    #[serde(flatten)]
    pub identify: IdentifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            truth: None,
            trajectory: None,
            prices: None,
            n_samples: 5000,
            burn_in: 0,
            output: PathBuf::from("out"),
            identify: IdentifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<(), CliError> {
        let id = &self.identify;
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.n_samples == 0 {
            return fail("n_samples must be positive".into());
        }
        if id.p1 == 0 {
            return fail("p1 must be at least 1".into());
        }
        if id.lambdas.is_empty() {
            return fail("lambda grid is empty".into());
        }
        if let Some(l) = id.lambdas.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return fail(format!("lambda must lie in (0, 1), got {l}"));
        }
        if !(id.tau >= 0.0 && id.tau < 1.0) {
            return fail(format!("tau must lie in [0, 1), got {}", id.tau));
        }
        if !(id.eta > 0.0 && id.eta < 1.0) {
            return fail(format!("eta must lie in (0, 1), got {}", id.eta));
        }
        if !(id.eps > 0.0 && id.eps.is_finite()) {
            return fail(format!("eps must be positive, got {}", id.eps));
        }
        if id.alphas.is_empty() {
            return fail("alphas are empty".into());
        }
        if let Some(a) = id.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return fail(format!("alpha must lie in (0, 1), got {a}"));
        }
        if id.alphas.len() != 1 && id.alphas.len() != id.p2 + 1 {
            return fail(format!("expected 1 or {} alphas, got {}", id.p2 + 1, id.alphas.len()));
        }
        if id.mc_runs < 50 {
            return fail(format!("mc_runs must be at least 50, got {}", id.mc_runs));
        }
        if id.grid_size < 2 {
            return fail(format!("grid_size must be at least 2, got {}", id.grid_size));
        }
        if id.reweight_iters == 0 {
            return fail("reweight_iters must be positive".into());
        }
        if !(id.inflation_step > 1.0) {
            return fail(format!("inflation_step must exceed 1, got {}", id.inflation_step));
        }
        Ok(())
    }

    /// Configuration as one JSON line, for CSV headers.
    pub fn provenance(&self) -> Vec<String> {
        vec![
            format!("config: {}", serde_json::to_string(self).expect("config serializes")),
            format!("seed: {}", self.identify.seed),
        ]
    }
}

/// Flag overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub truth: Option<String>,
    pub trajectory: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    pub lambdas: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    pub mc_runs: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub grid_size: Option<usize>,
    pub p1: Option<usize>,
    pub p2: Option<usize>,
}

impl Overrides {
    pub fn apply(self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = self.$src {
                    cfg.$($dst)+ = v;
                }
            };
        }
        if self.model.is_some() {
            cfg.model = self.model;
        }
        if self.truth.is_some() {
            cfg.truth = self.truth;
        }
        if self.trajectory.is_some() {
            cfg.trajectory = self.trajectory;
        }
        if self.prices.is_some() {
            cfg.prices = self.prices;
        }
        set!(output => output);
        set!(n_samples => n_samples);
        set!(seed => identify.seed);
        set!(lambdas => identify.lambdas);
        set!(tau => identify.tau);
        set!(eta => identify.eta);
        set!(eps => identify.eps);
        set!(mc_runs => identify.mc_runs);
        set!(alphas => identify.alphas);
        set!(grid_size => identify.grid_size);
        set!(p1 => identify.p1);
        set!(p2 => identify.p2);
    }
}

/// Comma-separated floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

pub fn load_model(source: &str) -> Result<ArLatentModel, CliError> {
    if source == BUILTIN_MODEL {
        return Ok(ArLatentModel::example_one());
    }
    let path = Path::new(source);
    let file = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let parsed: ModelFile =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(ArLatentModel::from_file(&parsed)?)
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config: &'a RunConfig,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, cfg: &RunConfig, body: T) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let stamped = Stamped {
        config: cfg,
        seed: cfg.identify.seed,
        body,
    };
    serde_json::to_writer_pretty(&mut w, &stamped).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

#[derive(Serialize)]
struct ModelBody<'a> {
    model: &'a ModelFile,
}

/// Simulate the configured model; writes `trajectory.csv` and `model.json`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    cfg.validate()?;
    let source = cfg
        .model
        .as_deref()
        .ok_or_else(|| CliError::Config("simulate needs a model".into()))?;
    let m = load_model(source)?;
    m.check_stable()?;
    let y = data::simulate_with_burn_in(&m, cfg.n_samples, cfg.identify.seed, cfg.burn_in)?;
    ensure_dir(&cfg.output)?;
    let path = cfg.output.join("trajectory.csv");
    y.write_csv(create(&path)?, &cfg.provenance())?;
    write_json(&cfg.output.join("model.json"), cfg, ModelBody { model: &m.to_file() })?;
    Ok(y)
}

/// Log returns of a price panel; writes `returns.csv`.
pub fn cmd_returns(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let path = cfg
        .prices
        .as_ref()
        .ok_or_else(|| CliError::Config("returns needs a prices CSV".into()))?;
    let panel = data::load_csv(path)?;
    let y = data::log_returns(&panel)?;
    ensure_dir(&cfg.output)?;
    let mut comments = cfg.provenance();
    comments.push(format!("columns: {}", panel.names.join(",")));
    y.write_csv(create(&cfg.output.join("returns.csv"))?, &comments)?;
    Ok(y)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(Trajectory::read_csv(BufReader::new(file))?)
}

fn lambda_dir(root: &Path, lambda: f64) -> PathBuf {
    root.join(format!("lambda_{lambda:.4}"))
}

#[derive(Serialize, Deserialize)]
struct TopologyBody {
    topology: slrid::sparse_lowrank::TopologySolutionFile,
    certificate_passed: bool,
    certificate_message: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct LatentBody {
    latent: LatentSolutionFile,
    delta_inflation: f64,
}

#[derive(Serialize, Deserialize)]
struct ScoredBody {
    scored: ScoredModelFile,
}

fn write_candidate(cfg: &RunConfig, c: &Candidate) -> Result<(), CliError> {
    let dir = lambda_dir(&cfg.output, c.lambda);
    ensure_dir(&dir)?;
    write_json(
        &dir.join("topology.json"),
        cfg,
        TopologyBody {
            topology: c.topology.to_file(),
            certificate_passed: c.certificate.is_ok(),
            certificate_message: c.certificate.as_ref().err().map(|e| e.to_string()),
        },
    )?;
    if let Some(r) = &c.reweight {
        let path = dir.join("reweight_history.csv");
        r.write_history(create(&path)?, &cfg.provenance()).map_err(io_err(&path))?;
    }
    write_json(
        &dir.join("latent.json"),
        cfg,
        LatentBody {
            latent: c.latent.to_file(),
            delta_inflation: c.delta_inflation,
        },
    )?;
    write_json(&dir.join("scored.json"), cfg, ScoredBody { scored: c.scored.to_file() })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentifySummary {
    pub selected_lambda: f64,
    pub edges: Vec<(usize, usize)>,
    pub l_hat: usize,
    pub score: f64,
    pub table: Vec<ScoredModelFile>,
}

/// Full pipeline on `trajectory`; writes one directory per `λ`, the score
/// table and the selected model.
pub fn cmd_identify(cfg: &RunConfig) -> Result<IdentifySummary, CliError> {
    cfg.validate()?;
    let path = cfg
        .trajectory
        .as_ref()
        .ok_or_else(|| CliError::Config("identify needs a trajectory CSV".into()))?;
    let y = read_trajectory(path)?;
    let truth = cfg.truth.as_deref().map(load_model).transpose()?;
    if let Some(m) = &truth {
        if m.n() != y.dim() {
            return Err(CliError::Config(format!("truth model has {} series, data has {}", m.n(), y.dim())));
        }
    }
    ensure_dir(&cfg.output)?;

    let mut write_failure = None;
    let truth_theta = truth.as_ref().map(|m| m.theta_a().clone());
    let outcome = pipeline::identify(&y, &cfg.identify, truth_theta.as_ref(), |c| {
        if write_failure.is_none() {
            write_failure = write_candidate(cfg, c).err();
        }
    });
    if let Some(e) = write_failure {
        return Err(e);
    }
    let id = outcome?;

    let scored = id.scored();
    let table_path = cfg.output.join("scores.csv");
    selection::write_score_table(&scored, create(&table_path)?, &cfg.provenance()).map_err(io_err(&table_path))?;
    write_edge_counts(cfg, &id.candidates)?;
    write_singular_values(cfg, &id.candidates)?;
    if let Some(m) = &truth {
        write_truth_reports(cfg, m, &id.candidates, id.selected)?;
    }

    let best = id.best();
    let selected = selected_model_file(best)?;
    write_json(
        &cfg.output.join("selected.json"),
        cfg,
        SelectedBody {
            scored: best.scored.to_file(),
            model: selected,
        },
    )?;
    Ok(IdentifySummary {
        selected_lambda: best.lambda,
        edges: best.scored.topology.edges().collect(),
        l_hat: best.latent.l_hat,
        score: best.scored.score,
        table: scored.iter().map(ScoredModel::to_file).collect(),
    })
}

#[derive(Serialize)]
struct SelectedBody {
    scored: ScoredModelFile,
    /// `None` when no latent factor was found or the AR part is unstable.
    model: Option<ModelFile>,
}

fn selected_model_file(c: &Candidate) -> Result<Option<ModelFile>, CliError> {
    if c.latent.l_hat == 0 {
        return Ok(None);
    }
    let m = ArLatentModel::new(c.theta_a.clone(), c.latent.theta_l.clone(), c.latent.theta_l.nrows() / c.theta_a.nrows() - 1);
    Ok(m.ok().map(|m| m.to_file()))
}

fn write_edge_counts(cfg: &RunConfig, candidates: &[Candidate]) -> Result<(), CliError> {
    let path = cfg.output.join("edge_counts.csv");
    let mut out = create(&path)?;
    let mut run = || -> std::io::Result<()> {
        for c in cfg.provenance() {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "lambda,edges,certificate_passed")?;
        for c in candidates {
            writeln!(out, "{},{},{}", c.lambda, c.topology.topology.edge_count(), c.certificate.is_ok())?;
        }
        out.flush()
    };
    run().map_err(io_err(&path))
}

/// First and last singular-value vectors of every reweight run.
fn write_singular_values(cfg: &RunConfig, candidates: &[Candidate]) -> Result<(), CliError> {
    let path = cfg.output.join("singular_values.csv");
    let mut out = create(&path)?;
    let mut run = || -> std::io::Result<()> {
        for c in cfg.provenance() {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "lambda,iterate,index,value")?;
        for c in candidates {
            let Some(r) = &c.reweight else { continue };
            let last = r.history.len() - 1;
            for (label, rec) in [("initial", &r.history[0]), ("final", &r.history[last])] {
                for (i, s) in rec.singular_values.iter().enumerate() {
                    writeln!(out, "{},{label},{i},{s:e}", c.lambda)?;
                }
            }
        }
        out.flush()
    };
    run().map_err(io_err(&path))
}

/// AR error per `λ` and the latent-spectrum error curve of the selected
/// candidate.
fn write_truth_reports(cfg: &RunConfig, truth: &ArLatentModel, candidates: &[Candidate], selected: usize) -> Result<(), CliError> {
    let path = cfg.output.join("ar_error.csv");
    let mut out = create(&path)?;
    let mut run = || -> std::io::Result<()> {
        for c in cfg.provenance() {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "lambda,relative_error")?;
        for c in candidates {
            if c.theta_a.shape() == truth.theta_a().shape() {
                writeln!(out, "{},{:e}", c.lambda, relative_error(truth.theta_a(), &c.theta_a))?;
            }
        }
        out.flush()
    };
    run().map_err(io_err(&path))?;

    let best = &candidates[selected];
    let grid = FrequencyGrid::uniform(cfg.identify.grid_size)?;
    let n = truth.n();
    if best.latent.l.nrows() == n * (truth.p2() + 1) {
        let estimate = latent::latent_spectrum(&best.latent.l, n, &grid);
        let reference = model::true_latent_spectrum(truth, &grid);
        let curve = latent::spectrum_error_curve(&estimate, &reference);
        let path = cfg.output.join("latent_spectrum_error.csv");
        latent::write_error_curve(&curve, create(&path)?, &cfg.provenance()).map_err(io_err(&path))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RescoreSummary {
    pub selected_lambda: f64,
    pub table: Vec<ScoredModelFile>,
}

/// Recompute scores from an existing bundle in `cfg.output` against the
/// configured trajectory, and rewrite `scores.csv`.
pub fn cmd_score(cfg: &RunConfig) -> Result<RescoreSummary, CliError> {
    cfg.validate()?;
    let path = cfg
        .trajectory
        .as_ref()
        .ok_or_else(|| CliError::Config("score needs a trajectory CSV".into()))?;
    let y = read_trajectory(path)?;
    let id = &cfg.identify;
    let grid = FrequencyGrid::uniform(id.grid_size)?;
    let covs = sample_autocov(&y, id.reference_lag()).map_err(|e| CliError::Data(e.to_string()))?;
    let reference = truncated_periodogram(&covs, &grid, Window::Bartlett).map_err(|e| CliError::Data(e.to_string()))?;

    let mut dirs: Vec<PathBuf> = fs::read_dir(&cfg.output)
        .map_err(io_err(&cfg.output))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("lambda_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(format!("no lambda_* directories under {}", cfg.output.display())));
    }

    let mut scored = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let prev: ScoredBody = read_json(&dir.join("scored.json"))?;
        let lat: LatentBody = read_json(&dir.join("latent.json"))?;
        let n = y.dim();
        let theta_a = matrix_from_rows(&prev.scored.theta_a, dir)?;
        let topology = Topology::from_edges(n, prev.scored.edges.iter().copied())?;
        let gram = if lat.latent.l_hat == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let theta_l = matrix_from_rows(&lat.latent.theta_l, dir)?;
            &theta_l * theta_l.transpose()
        };
        let s = selection::score(prev.scored.lambda, topology, theta_a, gram, lat.latent.l_hat, &reference, &grid, id.support_count)
            .map_err(|e: SelectionError| CliError::Data(format!("{}: {e}", dir.display())))?;
        scored.push(s);
    }
    scored.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let table_path = cfg.output.join("scores.csv");
    selection::write_score_table(&scored, create(&table_path)?, &cfg.provenance()).map_err(io_err(&table_path))?;
    let best = selection::select_best(&scored).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(RescoreSummary {
        selected_lambda: best.lambda,
        table: scored.iter().map(ScoredModel::to_file).collect(),
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn matrix_from_rows(rows: &[Vec<f64>], dir: &Path) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    linalg::from_rows(rows, ncols).ok_or_else(|| CliError::Data(format!("{}: ragged matrix", dir.display())))
}
