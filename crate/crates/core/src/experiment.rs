//! Success-probability sweeps over the rescaled sample size.
//!
//! A sweep runs, for every model size `p` and every control value `β`, a batch
//! of independent trials. Each trial draws a fresh graph and couplings, samples
//! `n = max(2, round(β · factor · d · ln p))` spins, solves every node's
//! regression with `λ = κ √(ln p / n)` and counts a success when every signed
//! neighbourhood is recovered exactly. Trial seeds are derived from the master
//! seed and the trial's coordinates, so results do not depend on scheduling.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::graph::{
    assign_couplings, generate_grid_periodic, generate_random_regular, generate_regular_tree, generate_star,
    star_degree_linear, star_degree_log, CouplingScheme, SignedGraph,
};
use crate::rng::derive_seed;
use crate::sampler::{gibbs_sample, SamplerConfig};
use crate::solvers::{recover_graph, LambdaRule, NodeFailure, SolverConfig, SolverKind};
use crate::witness::{construct_witness, WitnessOptions};

/// Graph family of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Random `d`-regular graph, redrawn every trial.
    Rr,
    /// Periodic square lattice; `p` must be a square `L²` with `L ≥ 3`.
    Grid,
    /// Star whose hub degree grows like `⌈0.1 p⌉`.
    StarLinear,
    /// Star whose hub degree grows like `⌈ln p⌉`.
    StarLog,
    /// Random tree whose internal vertices all have degree `d`.
    Tree,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Rr => "rr",
            Family::Grid => "grid",
            Family::StarLinear => "star_linear",
            Family::StarLog => "star_log",
            Family::Tree => "tree",
        }
    }

    /// Sample-size factor in `n = β · factor · d · ln p`.
    pub fn default_beta_factor(self) -> f64 {
        match self {
            Family::Grid => 15.0,
            _ => 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Lasso,
    Logistic,
    Both,
}

impl SolverChoice {
    pub fn kinds(self) -> Vec<SolverKind> {
        match self {
            SolverChoice::Lasso => vec![SolverKind::Lasso],
            SolverChoice::Logistic => vec![SolverKind::Logistic],
            SolverChoice::Both => vec![SolverKind::Lasso, SolverKind::Logistic],
        }
    }
}

fn default_degree() -> usize {
    3
}

fn default_true() -> bool {
    true
}

/// Sweep definition, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    /// Degree for `rr` and `tree`; ignored by the other families.
    #[serde(default = "default_degree")]
    pub degree: usize,
    pub p_list: Vec<usize>,
    pub beta_grid: Vec<f64>,
    /// Overrides the family's default factor (10, or 15 for grids).
    #[serde(default)]
    pub beta_factor: Option<f64>,
    pub coupling: CouplingScheme,
    /// `κ` in `λ = κ √(ln p / n)`.
    pub kappa: f64,
    /// Separate `κ` for the logistic solver; defaults to `kappa`.
    #[serde(default)]
    pub kappa_logistic: Option<f64>,
    pub trials: usize,
    pub solver: SolverChoice,
    pub master_seed: u64,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub solver_settings: SolverConfig,
    /// Worker threads; `None` uses the ambient rayon pool.
    #[serde(default)]
    pub workers: Option<usize>,
    /// On tree sweeps, also record the witness ℓ2 error at every node.
    #[serde(default)]
    pub record_witness: bool,
    /// Measure wall time per trial (the only non-reproducible output).
    #[serde(default = "default_true")]
    pub timing: bool,
}

/// Gibbs settings of a sweep; the seed comes from the trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    pub burn_in_sweeps: usize,
    pub thinning_sweeps: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSettings { burn_in_sweeps: d.burn_in_sweeps, thinning_sweeps: d.thinning_sweeps }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serialisable")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config is always serialisable");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn beta_factor(&self) -> f64 {
        self.beta_factor.unwrap_or_else(|| self.family.default_beta_factor())
    }

    pub fn kappa_for(&self, solver: SolverKind) -> f64 {
        match solver {
            SolverKind::Lasso => self.kappa,
            SolverKind::Logistic => self.kappa_logistic.unwrap_or(self.kappa),
        }
    }

    /// Degree used in the sample-size rule for model size `p`.
    pub fn degree_for(&self, p: usize) -> usize {
        match self.family {
            Family::Rr | Family::Tree => self.degree,
            Family::Grid => 4,
            Family::StarLinear => star_degree_linear(p),
            Family::StarLog => star_degree_log(p),
        }
    }

    /// `max(2, round(β · factor · d · ln p))`.
    pub fn sample_size(&self, p: usize, beta: f64) -> usize {
        let n = (beta * self.beta_factor() * self.degree_for(p) as f64 * (p as f64).ln()).round();
        (n as usize).max(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials: must be at least 1"));
        }
        if self.p_list.is_empty() {
            return Err(invalid("p_list: must not be empty"));
        }
        if self.beta_grid.is_empty() {
            return Err(invalid("beta_grid: must not be empty"));
        }
        if self.beta_grid.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(invalid("beta_grid: every value must be positive and finite"));
        }
        if self.beta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("beta_grid: must be strictly increasing"));
        }
        if let Some(f) = self.beta_factor {
            if !(f > 0.0) || !f.is_finite() {
                return Err(invalid("beta_factor: must be positive"));
            }
        }
        for (name, k) in [("kappa", Some(self.kappa)), ("kappa_logistic", self.kappa_logistic)] {
            if let Some(k) = k {
                if !(k >= 0.0) || !k.is_finite() {
                    return Err(invalid(format!("{name}: must be finite and non-negative")));
                }
            }
        }
        if self.workers == Some(0) {
            return Err(invalid("workers: must be at least 1"));
        }
        if self.record_witness && self.family != Family::Tree {
            return Err(invalid("record_witness: only available for the tree family"));
        }
        for &p in &self.p_list {
            self.check_size(p)?;
        }
        Ok(())
    }

    fn check_size(&self, p: usize) -> Result<()> {
        let d = self.degree;
        match self.family {
            Family::Rr => {
                if d < 3 || d >= p || (p * d) % 2 == 1 {
                    return Err(invalid(format!("p_list: p = {p} is not valid for a {d}-regular graph")));
                }
            }
            Family::Grid => {
                let side = (p as f64).sqrt().round() as usize;
                if side * side != p || side < 3 {
                    return Err(invalid(format!("p_list: grid needs p = L² with L >= 3 (got {p})")));
                }
            }
            Family::StarLinear | Family::StarLog => {
                let hub = self.degree_for(p);
                if hub == 0 || hub >= p {
                    return Err(invalid(format!("p_list: p = {p} too small for a star")));
                }
            }
            Family::Tree => {
                if d < 2 || p < d + 1 || (p - d - 1) % (d - 1) != 0 {
                    return Err(invalid(format!(
                        "p_list: a tree with internal degree {d} needs p = {} + k·{} (got {p})",
                        d + 1,
                        d - 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Graph with couplings for one trial.
    pub fn build_graph(&self, p: usize, seed: u64) -> Result<SignedGraph> {
        let topology = match self.family {
            Family::Rr => generate_random_regular(p, self.degree, derive_seed(seed, &[0]))?,
            Family::Grid => {
                let side = (p as f64).sqrt().round() as usize;
                generate_grid_periodic(side, side)?
            }
            Family::StarLinear => generate_star(p, star_degree_linear(p))?,
            Family::StarLog => generate_star(p, star_degree_log(p))?,
            Family::Tree => generate_regular_tree(p, self.degree, derive_seed(seed, &[0]))?,
        };
        assign_couplings(topology, self.coupling, derive_seed(seed, &[1]))
    }
}

/// Seed of trial `trial` at grid point `(p, beta_index)`.
pub fn trial_seed(master_seed: u64, p: usize, beta_index: usize, trial: usize) -> u64 {
    derive_seed(master_seed, &[p as u64, beta_index as u64, trial as u64])
}

/// One solver's verdict on one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub solver: SolverKind,
    pub lambda: f64,
    pub success: bool,
    /// Nodes whose estimated signed neighbourhood was wrong.
    pub wrong_nodes: Vec<usize>,
    /// Nodes whose solver failed; a failure makes the trial unsuccessful.
    pub failures: Vec<NodeFailure>,
    pub elapsed_ms: f64,
}

/// ℓ2 error of the restricted Lasso against the population target at one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessRecord {
    pub node: usize,
    pub lambda: f64,
    pub w_inf_norm: f64,
    /// `‖W‖_∞ ≤ λ/2`.
    pub noise_hypothesis: bool,
    pub l2_error: f64,
    /// `3 λ √d / C_min` with the sample `C_min`.
    pub l2_bound: f64,
    pub strictly_feasible: bool,
    pub sign_consistent: bool,
}

impl WitnessRecord {
    pub fn bound_holds(&self) -> bool {
        self.l2_error <= self.l2_bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub p: usize,
    pub beta_index: usize,
    pub beta: f64,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub outcomes: Vec<SolverOutcome>,
    /// Witness records (tree sweeps with `record_witness`); nodes whose
    /// support block is singular are skipped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness: Vec<WitnessRecord>,
    /// Set when the trial could not run at all (graph or sampling failure).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run one trial. Solver failures are recorded in the outcome rather than
/// returned, so a sweep always completes.
pub fn run_trial(config: &ExperimentConfig, p: usize, beta_index: usize, trial: usize) -> TrialOutcome {
    let beta = config.beta_grid[beta_index];
    let seed = trial_seed(config.master_seed, p, beta_index, trial);
    let n = config.sample_size(p, beta);
    let mut outcome = TrialOutcome {
        p,
        beta_index,
        beta,
        trial,
        seed,
        n,
        outcomes: Vec::new(),
        witness: Vec::new(),
        error: None,
    };
    let prepared = config.build_graph(p, seed).and_then(|graph| {
        let sampler = SamplerConfig {
            burn_in_sweeps: config.sampler.burn_in_sweeps,
            thinning_sweeps: config.sampler.thinning_sweeps,
            seed: derive_seed(seed, &[2]),
        };
        let samples = gibbs_sample(&graph, n, sampler)?;
        Ok((graph, samples))
    });
    let (graph, samples) = match prepared {
        Ok(v) => v,
        Err(e) => {
            outcome.error = Some(format!("{}: {e}", e.kind()));
            outcome.outcomes = config
                .solver
                .kinds()
                .into_iter()
                .map(|solver| SolverOutcome {
                    solver,
                    lambda: f64::NAN,
                    success: false,
                    wrong_nodes: Vec::new(),
                    failures: Vec::new(),
                    elapsed_ms: 0.0,
                })
                .collect();
            return outcome;
        }
    };
    for solver in config.solver.kinds() {
        let rule = LambdaRule::Scaled { kappa: config.kappa_for(solver) };
        let start = config.timing.then(Instant::now);
        let estimate = recover_graph(&samples, rule, solver, &config.solver_settings)
            .expect("samples are non-empty and sized to the graph");
        let elapsed_ms = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
        let correct = estimate.node_correct(&graph).expect("estimate and graph share p");
        let wrong_nodes: Vec<usize> = (0..p).filter(|&r| !correct[r]).collect();
        outcome.outcomes.push(SolverOutcome {
            solver,
            lambda: estimate.lambda,
            success: wrong_nodes.is_empty() && estimate.failures.is_empty(),
            wrong_nodes,
            failures: estimate.failures,
            elapsed_ms,
        });
        if config.record_witness && solver == SolverKind::Lasso {
            let options = WitnessOptions { solver: config.solver_settings, ..Default::default() };
            for r in 0..p {
                if let Ok(cert) = construct_witness(&samples, &graph, r, estimate.lambda, &options) {
                    outcome.witness.push(WitnessRecord {
                        node: r,
                        lambda: cert.lambda,
                        w_inf_norm: cert.w_inf_norm(),
                        noise_hypothesis: cert.noise_hypothesis_holds(),
                        l2_error: cert.l2_error(),
                        l2_bound: cert.l2_bound(),
                        strictly_feasible: cert.strictly_feasible(),
                        sign_consistent: cert.sign_consistent(),
                    });
                }
            }
        }
    }
    outcome
}

/// Aggregate of one `(solver, p, β)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub n: usize,
    pub lambda: f64,
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
    /// Trials with at least one node-level solver error (counted as failures).
    pub solver_errors: usize,
    pub probability: f64,
    pub stderr: f64,
    pub mean_trial_ms: f64,
}

/// Wald standard error `√(q(1−q)/T)`, floored at `1/(2T)` so that empty or
/// saturated cells do not claim zero uncertainty.
pub fn binomial_stderr(successes: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let t = trials as f64;
    let q = successes as f64 / t;
    (q * (1.0 - q) / t).sqrt().max(0.5 / t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub solver: SolverKind,
    pub family: Family,
    pub p: usize,
    pub d: usize,
    pub points: Vec<CurvePoint>,
}

impl SuccessCurve {
    pub fn betas(&self) -> Vec<f64> {
        self.points.iter().map(|pt| pt.beta).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|pt| pt.probability).collect()
    }

    pub fn crossing(&self) -> Option<f64> {
        crossing_point(&self.betas(), &self.probabilities())
    }
}

/// Where a curve first reaches 0.5, by linear interpolation between the
/// bracketing grid points. `None` when the curve starts at or above 0.5 or
/// never reaches it.
pub fn crossing_point(betas: &[f64], probs: &[f64]) -> Option<f64> {
    let i = probs.iter().position(|&q| q >= 0.5)?;
    if i == 0 {
        return None;
    }
    let (b0, b1, q0, q1) = (betas[i - 1], betas[i], probs[i - 1], probs[i]);
    Some(b0 + (0.5 - q0) / (q1 - q0) * (b1 - b0))
}

/// Adjacent grid points where the success probability drops by more than two
/// combined standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub solver: SolverKind,
    pub p: usize,
    pub beta_from: f64,
    pub beta_to: f64,
    pub drop: f64,
    pub tolerance: f64,
}

pub fn monotonicity_violations(curve: &SuccessCurve) -> Vec<MonotonicityViolation> {
    curve
        .points
        .windows(2)
        .filter_map(|w| {
            let drop = w[0].probability - w[1].probability;
            let tolerance = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            (drop > tolerance).then(|| MonotonicityViolation {
                solver: curve.solver,
                p: curve.p,
                beta_from: w[0].beta,
                beta_to: w[1].beta,
                drop,
                tolerance,
            })
        })
        .collect()
}

/// Per-β differences between two solvers' curves on the same grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub p: usize,
    pub betas: Vec<f64>,
    /// `lasso − logistic` success probability at each β.
    pub differences: Vec<f64>,
    pub max_abs_difference: f64,
    pub crossing_lasso: Option<f64>,
    pub crossing_logistic: Option<f64>,
    pub crossing_gap: Option<f64>,
}

pub fn compare_solvers(lasso: &SuccessCurve, logistic: &SuccessCurve) -> Result<AlignmentReport> {
    if lasso.p != logistic.p || lasso.betas() != logistic.betas() {
        return Err(invalid("curves were computed on different grids"));
    }
    let differences: Vec<f64> = lasso
        .points
        .iter()
        .zip(&logistic.points)
        .map(|(a, b)| a.probability - b.probability)
        .collect();
    let crossing_lasso = lasso.crossing();
    let crossing_logistic = logistic.crossing();
    Ok(AlignmentReport {
        p: lasso.p,
        betas: lasso.betas(),
        max_abs_difference: differences.iter().fold(0.0, |a, d| a.max(d.abs())),
        differences,
        crossing_lasso,
        crossing_logistic,
        crossing_gap: crossing_lasso.zip(crossing_logistic).map(|(a, b)| (a - b).abs()),
    })
}

/// Everything needed to reproduce a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub crate_version: String,
    /// One entry per trial: `(p, beta_index, trial, seed)`.
    pub seeds: Vec<(usize, usize, usize, u64)>,
    pub monotonicity_violations: Vec<MonotonicityViolation>,
    /// Trials that could not run, with the cause.
    pub trial_errors: Vec<(usize, usize, usize, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub curves: Vec<SuccessCurve>,
    pub trials: Vec<TrialOutcome>,
    pub manifest: Manifest,
}

impl SweepResult {
    pub fn curve(&self, solver: SolverKind, p: usize) -> Option<&SuccessCurve> {
        self.curves.iter().find(|c| c.solver == solver && c.p == p)
    }

    /// Curves as CSV with columns
    /// `solver,family,p,d,beta,n,lambda,trials,successes,probability,stderr,mean_trial_ms`.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record([
            "solver", "family", "p", "d", "beta", "n", "lambda", "trials", "successes", "probability", "stderr",
            "mean_trial_ms",
        ])?;
        for curve in &self.curves {
            for pt in &curve.points {
                writer.write_record([
                    curve.solver.name().to_string(),
                    curve.family.name().to_string(),
                    curve.p.to_string(),
                    curve.d.to_string(),
                    pt.beta.to_string(),
                    pt.n.to_string(),
                    pt.lambda.to_string(),
                    pt.trials.to_string(),
                    pt.successes.to_string(),
                    pt.probability.to_string(),
                    pt.stderr.to_string(),
                    pt.mean_trial_ms.to_string(),
                ])?;
            }
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn run_cells(config: &ExperimentConfig, cells: &[(usize, usize, usize)]) -> Vec<TrialOutcome> {
    cells
        .par_iter()
        .map(|&(p, bi, trial)| run_trial(config, p, bi, trial))
        .collect()
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| invalid(format!("workers: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Run the full `p_list × beta_grid × trials` sweep.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut cells = Vec::new();
    for &p in &config.p_list {
        for bi in 0..config.beta_grid.len() {
            for trial in 0..config.trials {
                cells.push((p, bi, trial));
            }
        }
    }
    let trials = in_pool(config.workers, || run_cells(config, &cells))?;

    let mut curves = Vec::new();
    for solver in config.solver.kinds() {
        for &p in &config.p_list {
            let mut points = Vec::new();
            for (bi, &beta) in config.beta_grid.iter().enumerate() {
                let cell: Vec<&SolverOutcome> = trials
                    .iter()
                    .filter(|t| t.p == p && t.beta_index == bi)
                    .filter_map(|t| t.outcomes.iter().find(|o| o.solver == solver))
                    .collect();
                let successes = cell.iter().filter(|o| o.success).count();
                let n = config.sample_size(p, beta);
                points.push(CurvePoint {
                    beta,
                    n,
                    lambda: LambdaRule::Scaled { kappa: config.kappa_for(solver) }.lambda(n, p),
                    trials: cell.len(),
                    successes,
                    failures: cell.len() - successes,
                    solver_errors: cell.iter().filter(|o| !o.failures.is_empty()).count(),
                    probability: successes as f64 / cell.len() as f64,
                    stderr: binomial_stderr(successes, cell.len()),
                    mean_trial_ms: cell.iter().map(|o| o.elapsed_ms).sum::<f64>() / cell.len() as f64,
                });
            }
            curves.push(SuccessCurve { solver, family: config.family, p, d: config.degree_for(p), points });
        }
    }
    let manifest = Manifest {
        config: config.clone(),
        config_digest: config.digest(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: trials.iter().map(|t| (t.p, t.beta_index, t.trial, t.seed)).collect(),
        monotonicity_violations: curves.iter().flat_map(monotonicity_violations).collect(),
        trial_errors: trials
            .iter()
            .filter_map(|t| t.error.clone().map(|e| (t.p, t.beta_index, t.trial, e)))
            .collect(),
    };
    Ok(SweepResult { curves, trials, manifest })
}

/// Success rates of each candidate `κ` at the middle of the β grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub solver: SolverKind,
    pub beta: f64,
    pub candidates: Vec<f64>,
    /// Mean success probability over `p_list` for each candidate.
    pub success: Vec<f64>,
    pub chosen: f64,
}

/// Pick `κ` maximising the mean success probability at the grid midpoint;
/// ties go to the smaller `κ`. Trial seeds are offset from the sweep's so the
/// calibration data are not reused by the sweep.
pub fn calibrate_kappa(config: &ExperimentConfig, candidates: &[f64], solver: SolverKind) -> Result<CalibrationReport> {
    if candidates.is_empty() {
        return Err(invalid("at least one candidate kappa is required"));
    }
    let mid = config.beta_grid.len() / 2;
    let beta = config.beta_grid[mid];
    let mut success = Vec::with_capacity(candidates.len());
    for &kappa in candidates {
        let mut probe = config.clone();
        probe.beta_grid = vec![beta];
        probe.solver = match solver {
            SolverKind::Lasso => SolverChoice::Lasso,
            SolverKind::Logistic => SolverChoice::Logistic,
        };
        probe.kappa = kappa;
        probe.kappa_logistic = None;
        probe.record_witness = false;
        probe.master_seed = derive_seed(config.master_seed, &[0xca1b]);
        let result = run_sweep(&probe)?;
        let mean = result.curves.iter().map(|c| c.points[0].probability).sum::<f64>() / result.curves.len() as f64;
        success.push(mean);
    }
    let mut best = 0;
    for (i, &s) in success.iter().enumerate() {
        if s > success[best] {
            best = i;
        }
    }
    Ok(CalibrationReport { solver, beta, candidates: candidates.to_vec(), success, chosen: candidates[best] })
}
