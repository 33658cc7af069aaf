//! Neighbourhood regression solvers.
//!
//! For a node `r` the square-loss Lasso minimises
//! `(1/2n) Σ_i (x_r − Σ_u θ_u x_u)² + λ‖θ‖₁`, which in moment form is
//! `½·c − bᵀθ + ½ θᵀQθ + λ‖θ‖₁` with `Q` the sample second moments of the
//! predictors, `b = E_n[x_r x_∖r]` and `c = E_n[x_r²] = 1`. Working in moment
//! form means the same code handles sample and population (exact-moment)
//! problems. There is no intercept: the model has zero external field.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Sign, SignedGraph};
use crate::sampler::SampleMatrix;

/// Coefficients at or below this magnitude are treated as zero.
pub const EPS_ACTIVE: f64 = 1e-8;

/// Tolerance and iteration budget shared by all solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Keep the objective value after each full cycle (diagnostics only).
    #[serde(default)]
    pub record_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-8, max_iters: 100_000, record_objective: false }
    }
}

/// The regression of spin `r` on every other spin.
#[derive(Clone, Debug)]
pub struct NeighborhoodProblem<'a> {
    r: usize,
    p: usize,
    lambda: f64,
    predictors: Vec<usize>,
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    response_moment: f64,
    samples: Option<&'a SampleMatrix>,
}

impl<'a> NeighborhoodProblem<'a> {
    /// Build the problem from raw samples.
    pub fn from_samples(samples: &'a SampleMatrix, r: usize, lambda: f64) -> Result<Self> {
        let moments = samples.second_moments();
        Self::with_moments(&moments, Some(samples), r, lambda)
    }

    /// Build the problem from samples whose second-moment matrix is already known.
    pub fn with_moments(
        moments: &DMatrix<f64>,
        samples: Option<&'a SampleMatrix>,
        r: usize,
        lambda: f64,
    ) -> Result<Self> {
        let p = moments.nrows();
        if moments.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "second-moment matrix is {}x{}",
                moments.nrows(),
                moments.ncols()
            )));
        }
        if let Some(s) = samples {
            if s.p() != p {
                return Err(Error::DimensionMismatch(format!(
                    "samples have p = {} but moments have p = {p}",
                    s.p()
                )));
            }
            if s.n() == 0 {
                return Err(invalid("at least one sample is required"));
            }
        }
        if p < 2 {
            return Err(invalid("need at least two spins"));
        }
        if r >= p {
            return Err(invalid(format!("response index {r} out of range for p = {p}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and non-negative (got {lambda})")));
        }
        let predictors: Vec<usize> = (0..p).filter(|&u| u != r).collect();
        let m = predictors.len();
        let gram = DMatrix::from_fn(m, m, |i, j| moments[(predictors[i], predictors[j])]);
        let cross = DVector::from_fn(m, |i, _| moments[(r, predictors[i])]);
        Ok(NeighborhoodProblem {
            r,
            p,
            lambda,
            predictors,
            gram,
            cross,
            response_moment: moments[(r, r)],
            samples,
        })
    }

    /// Population problem from an exact second-moment matrix (no samples attached).
    pub fn from_second_moments(moments: &DMatrix<f64>, r: usize, lambda: f64) -> Result<NeighborhoodProblem<'static>> {
        NeighborhoodProblem::with_moments(moments, None, r, lambda)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same problem with a different penalty.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and non-negative (got {lambda})")));
        }
        let mut out = self.clone();
        out.lambda = lambda;
        Ok(out)
    }

    /// Vertex labels of the coefficient vector, in order.
    pub fn predictors(&self) -> &[usize] {
        &self.predictors
    }

    /// Position of `vertex` in the coefficient vector.
    pub fn position_of(&self, vertex: usize) -> Option<usize> {
        match vertex.cmp(&self.r) {
            std::cmp::Ordering::Less => Some(vertex),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => (vertex < self.p).then(|| vertex - 1),
        }
    }

    /// Predictor second moments `Q` (size (p−1)²).
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Response/predictor cross moments `b`.
    pub fn cross(&self) -> &DVector<f64> {
        &self.cross
    }

    pub fn samples(&self) -> Option<&'a SampleMatrix> {
        self.samples
    }

    /// Gradient of the square loss, `Qθ − b`.
    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.gram * theta - &self.cross
    }

    /// Smooth part of the square-loss objective.
    pub fn loss(&self, theta: &DVector<f64>) -> f64 {
        0.5 * self.response_moment - self.cross.dot(theta) + 0.5 * theta.dot(&(&self.gram * theta))
    }

    /// Full penalised square-loss objective.
    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        self.loss(theta) + self.lambda * theta.lp_norm(1)
    }

    /// `‖∇ℓ(0)‖_∞`: the smallest λ for which the Lasso solution is zero.
    pub fn lambda_max(&self) -> f64 {
        self.cross.amax()
    }
}

/// Output of a solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    pub r: usize,
    pub lambda: f64,
    pub predictors: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub subgradient: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Set when λ = 0 and the design is rank-deficient, so the minimiser is not unique.
    #[serde(default)]
    pub non_unique: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

/// Compact JSON view of a solution.
#[derive(Serialize)]
struct SolutionDump<'s> {
    r: usize,
    lambda: f64,
    coefficients: &'s [f64],
    subgradient: &'s [f64],
    kkt_residual: f64,
    iterations: usize,
}

impl LassoSolution {
    pub fn coefficient_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    /// Coefficient attached to vertex `t` (zero for `t = r`).
    pub fn coefficient_of(&self, t: usize) -> f64 {
        self.predictors
            .iter()
            .position(|&u| u == t)
            .map_or(0.0, |i| self.coefficients[i])
    }

    pub fn to_dump_json(&self) -> String {
        let dump = SolutionDump {
            r: self.r,
            lambda: self.lambda,
            coefficients: &self.coefficients,
            subgradient: &self.subgradient,
            kkt_residual: self.kkt_residual,
            iterations: self.iterations,
        };
        serde_json::to_string_pretty(&dump).expect("solution dump is always serialisable")
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Worst KKT violation over `coords`.
fn kkt_residual(grad: &DVector<f64>, theta: &DVector<f64>, lambda: f64, coords: &[usize]) -> f64 {
    coords
        .iter()
        .map(|&t| {
            if theta[t] != 0.0 {
                (grad[t] + lambda * theta[t].signum()).abs()
            } else {
                (grad[t].abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn subgradient(grad: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> Vec<f64> {
    if lambda > 0.0 {
        grad.iter().map(|g| -g / lambda).collect()
    } else {
        theta.iter().map(|&v| if v == 0.0 { 0.0 } else { v.signum() }).collect()
    }
}

fn rank_deficient(gram: &DMatrix<f64>, coords: &[usize]) -> bool {
    if coords.is_empty() {
        return false;
    }
    let sub = DMatrix::from_fn(coords.len(), coords.len(), |i, j| gram[(coords[i], coords[j])]);
    sub.symmetric_eigenvalues().min() < 1e-10
}

fn coordinate_descent(
    problem: &NeighborhoodProblem<'_>,
    coords: &[usize],
    start: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<LassoSolution> {
    let m = problem.predictors.len();
    let lambda = problem.lambda;
    let gram = &problem.gram;
    let mut theta = DVector::zeros(m);
    if let Some(start) = start {
        if start.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "warm start has length {} but the problem has {m} coefficients",
                start.len()
            )));
        }
        for &t in coords {
            theta[t] = start[t];
        }
    }
    let mut grad = problem.gradient(&theta);
    let mut trace = Vec::new();
    if config.record_objective {
        trace.push(problem.objective(&theta));
    }
    let mut residual = kkt_residual(&grad, &theta, lambda, coords);
    let mut iterations = 0;
    while residual >= config.tol {
        if iterations == config.max_iters {
            return Err(Error::NonConvergence { iterations, residual });
        }
        iterations += 1;
        let mut moved = false;
        for &t in coords {
            let diag = gram[(t, t)];
            if diag <= 0.0 {
                continue;
            }
            let old = theta[t];
            let new = soft_threshold(old - grad[t] / diag, lambda / diag);
            if new != old {
                let delta = new - old;
                theta[t] = new;
                grad.axpy(delta, &gram.column(t), 1.0);
                moved = true;
            }
        }
        // Refresh the gradient exactly so the residual is not polluted by drift.
        grad = problem.gradient(&theta);
        if config.record_objective {
            trace.push(problem.objective(&theta));
        }
        residual = kkt_residual(&grad, &theta, lambda, coords);
        if !moved {
            break;
        }
    }
    if let Some((polished, polished_grad, polished_residual)) = polish(problem, &theta, coords) {
        if polished_residual <= residual {
            theta = polished;
            grad = polished_grad;
            residual = polished_residual;
        }
    }
    Ok(LassoSolution {
        r: problem.r,
        lambda,
        predictors: problem.predictors.clone(),
        coefficients: theta.iter().copied().collect(),
        subgradient: subgradient(&grad, &theta, lambda),
        kkt_residual: residual,
        iterations,
        objective: problem.objective(&theta),
        non_unique: lambda == 0.0 && rank_deficient(gram, coords),
        objective_trace: trace,
    })
}

/// Solve the stationarity equations `Q_AA θ_A = b_A − λ sign(θ_A)` on the
/// active set found by coordinate descent. Returns the polished point when the
/// system is well posed and the signs survive, which removes the residual
/// tolerance-level error and makes the answer independent of the start point.
fn polish(
    problem: &NeighborhoodProblem<'_>,
    theta: &DVector<f64>,
    coords: &[usize],
) -> Option<(DVector<f64>, DVector<f64>, f64)> {
    let active: Vec<usize> = coords.iter().copied().filter(|&t| theta[t] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let k = active.len();
    let sub = DMatrix::from_fn(k, k, |i, j| problem.gram[(active[i], active[j])]);
    let rhs = DVector::from_fn(k, |i, _| problem.cross[active[i]] - problem.lambda * theta[active[i]].signum());
    let solved = sub.cholesky()?.solve(&rhs);
    let mut out = DVector::zeros(theta.len());
    for (i, &t) in active.iter().enumerate() {
        if solved[i].signum() != theta[t].signum() || solved[i] == 0.0 {
            return None;
        }
        out[t] = solved[i];
    }
    let grad = problem.gradient(&out);
    let residual = kkt_residual(&grad, &out, problem.lambda, coords);
    Some((out, grad, residual))
}

/// Square-loss Lasso by cyclic coordinate descent from zero.
pub fn solve_lasso(problem: &NeighborhoodProblem<'_>, config: &SolverConfig) -> Result<LassoSolution> {
    let coords: Vec<usize> = (0..problem.predictors.len()).collect();
    coordinate_descent(problem, &coords, None, config)
}

/// Square-loss Lasso started from the coefficient vector `start`.
pub fn solve_lasso_from(
    problem: &NeighborhoodProblem<'_>,
    start: &[f64],
    config: &SolverConfig,
) -> Result<LassoSolution> {
    let coords: Vec<usize> = (0..problem.predictors.len()).collect();
    coordinate_descent(problem, &coords, Some(start), config)
}

/// Lasso with every coefficient outside the vertex set `support` pinned at zero.
///
/// The residual covers the free coordinates only; the subgradient is still
/// reported for every coordinate as `−∇ℓ/λ`.
pub fn solve_lasso_restricted(
    problem: &NeighborhoodProblem<'_>,
    support: &[usize],
    config: &SolverConfig,
) -> Result<LassoSolution> {
    if support.is_empty() {
        return Err(invalid("restricted support must contain at least one vertex"));
    }
    let mut coords = Vec::with_capacity(support.len());
    for &v in support {
        let pos = problem
            .position_of(v)
            .ok_or_else(|| invalid(format!("support vertex {v} is the response or out of range")))?;
        coords.push(pos);
    }
    coords.sort_unstable();
    coords.dedup();
    coordinate_descent(problem, &coords, None, config)
}

/// Per-sample data for the logistic loss: rows of predictors and the response.
struct LogisticData {
    n: usize,
    m: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl LogisticData {
    fn new(problem: &NeighborhoodProblem<'_>, samples: &SampleMatrix) -> Self {
        let n = samples.n();
        let m = problem.predictors.len();
        let mut x = Vec::with_capacity(n * m);
        let mut y = Vec::with_capacity(n);
        for row in samples.rows() {
            y.push(row[problem.r] as f64);
            x.extend(problem.predictors.iter().map(|&u| row[u] as f64));
        }
        LogisticData { n, m, x, y }
    }

    /// Loss `(1/n) Σ log(1 + exp(−2 y θᵀx))`.
    fn loss(&self, theta: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            let row = &self.x[i * self.m..(i + 1) * self.m];
            let margin: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            total += softplus(-2.0 * self.y[i] * margin);
        }
        total / self.n as f64
    }

    fn loss_and_gradient(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut total = 0.0;
        let mut grad = DVector::zeros(self.m);
        for i in 0..self.n {
            let row = &self.x[i * self.m..(i + 1) * self.m];
            let margin: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            let u = -2.0 * self.y[i] * margin;
            total += softplus(u);
            let weight = -2.0 * self.y[i] * sigmoid(u);
            for (g, a) in grad.iter_mut().zip(row) {
                *g += weight * a;
            }
        }
        let scale = 1.0 / self.n as f64;
        (total * scale, grad * scale)
    }
}

impl LogisticData {
    /// Whether a Newton step from `theta` is small, i.e. the loss is locally
    /// well curved and `theta` sits near an attained minimiser.
    fn near_finite_minimizer(&self, theta: &DVector<f64>, grad: &DVector<f64>) -> bool {
        let mut hessian = DMatrix::zeros(self.m, self.m);
        for i in 0..self.n {
            let row = DVector::from_column_slice(&self.x[i * self.m..(i + 1) * self.m]);
            let margin = row.dot(theta);
            let s = sigmoid(-2.0 * self.y[i] * margin);
            hessian.ger(4.0 * s * (1.0 - s) / self.n as f64, &row, &row, 1.0);
        }
        match hessian.cholesky() {
            Some(chol) => chol.solve(grad).amax() < NEWTON_STEP_LIMIT,
            None => false,
        }
    }
}

/// Largest Newton step accepted as evidence of a finite unpenalised minimiser.
const NEWTON_STEP_LIMIT: f64 = 1e-4;

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Coefficient magnitude beyond which a logistic fit is declared divergent.
const LOGISTIC_DIVERGENCE: f64 = 1e6;

/// ℓ1-penalised logistic regression of `x_r` on the other spins.
///
/// Accelerated proximal gradient with backtracking and adaptive restart. The
/// logit carries a factor 2 so that `P(x_r | rest) ∝ exp(x_r Σ θ_u x_u)` under
/// the per-edge coupling convention. Requires attached samples.
pub fn solve_logistic_l1(problem: &NeighborhoodProblem<'_>, config: &SolverConfig) -> Result<LassoSolution> {
    let samples = problem
        .samples
        .ok_or_else(|| invalid("logistic regression needs samples, not just moments"))?;
    let data = LogisticData::new(problem, samples);
    let m = data.m;
    let lambda = problem.lambda;
    let coords: Vec<usize> = (0..m).collect();

    // The logistic Hessian is bounded by the predictor Gram matrix, so
    // 1/λ_max(Q) is a safe step; start optimistic and backtrack towards it.
    let curvature = problem.gram.symmetric_eigenvalues().max().max(1e-12);
    let safe_step = 1.0 / curvature;
    let mut step = 4.0 * safe_step;

    let penalised = |loss: f64, theta: &DVector<f64>| loss + lambda * theta.lp_norm(1);
    let mut theta = DVector::zeros(m);
    let (loss0, mut grad) = data.loss_and_gradient(&theta);
    let mut value = penalised(loss0, &theta);
    let mut momentum_point = theta.clone();
    let mut at_theta = true;
    let mut t_k = 1.0_f64;
    let mut trace = Vec::new();
    if config.record_objective {
        trace.push(value);
    }
    let mut residual = kkt_residual(&grad, &theta, lambda, &coords);
    let mut iterations = 0;
    while residual >= config.tol {
        if iterations == config.max_iters {
            return Err(Error::NonConvergence { iterations, residual });
        }
        iterations += 1;
        let (y_loss, y_grad) = data.loss_and_gradient(&momentum_point);
        let candidate = loop {
            let cand = (&momentum_point - &y_grad * step).map(|z| soft_threshold(z, step * lambda));
            let diff = &cand - &momentum_point;
            let bound = y_loss + y_grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            // Steps at or below 1/L_global are always admissible, which also keeps
            // rounding noise near the optimum from collapsing the step size.
            if step <= safe_step || data.loss(&cand) <= bound {
                break cand;
            }
            step = (0.5 * step).max(safe_step);
        };
        let (c_loss, c_grad) = data.loss_and_gradient(&candidate);
        let c_value = penalised(c_loss, &candidate);
        if c_value > value && !at_theta {
            // Restart: drop momentum and take a plain proximal step from θ.
            t_k = 1.0;
            momentum_point = theta.clone();
            at_theta = true;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        momentum_point = &candidate + (&candidate - &theta) * ((t_k - 1.0) / t_next);
        at_theta = false;
        t_k = t_next;
        theta = candidate;
        grad = c_grad;
        value = c_value;
        if config.record_objective {
            trace.push(value);
        }
        residual = kkt_residual(&grad, &theta, lambda, &coords);
        if theta.amax() > LOGISTIC_DIVERGENCE {
            return Err(Error::NonConvergence { iterations, residual });
        }
    }
    if lambda == 0.0 && !data.near_finite_minimizer(&theta, &grad) {
        // Separable data: the gradient can be made arbitrarily small while the
        // coefficients run off to infinity, so a small residual proves nothing.
        return Err(Error::NonConvergence { iterations, residual });
    }
    Ok(LassoSolution {
        r: problem.r,
        lambda,
        predictors: problem.predictors.clone(),
        coefficients: theta.iter().copied().collect(),
        subgradient: subgradient(&grad, &theta, lambda),
        kkt_residual: residual,
        iterations,
        objective: value,
        non_unique: false,
        objective_trace: trace,
    })
}

/// Estimated signed neighbourhood of a vertex.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedNeighborhood {
    pub r: usize,
    pub neighbors: BTreeMap<usize, Sign>,
}

/// Keep the predictors whose coefficient exceeds `eps_active` in magnitude.
pub fn extract_signed_neighborhood_with(solution: &LassoSolution, eps_active: f64) -> SignedNeighborhood {
    let neighbors = solution
        .predictors
        .iter()
        .zip(&solution.coefficients)
        .filter(|(_, c)| c.abs() > eps_active)
        .filter_map(|(&t, &c)| Sign::of(c).map(|s| (t, s)))
        .collect();
    SignedNeighborhood { r: solution.r, neighbors }
}

/// Signed neighbourhood with the default activity threshold [`EPS_ACTIVE`].
pub fn extract_signed_neighborhood(solution: &LassoSolution) -> SignedNeighborhood {
    extract_signed_neighborhood_with(solution, EPS_ACTIVE)
}

/// How λ is chosen for a sample of size `n` over `p` spins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed { lambda: f64 },
    /// `λ = κ √(ln p / n)`.
    Scaled { kappa: f64 },
}

impl LambdaRule {
    pub fn lambda(&self, n: usize, p: usize) -> f64 {
        match *self {
            LambdaRule::Fixed { lambda } => lambda,
            LambdaRule::Scaled { kappa } => kappa * ((p as f64).ln() / n.max(1) as f64).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Lasso,
    Logistic,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Lasso => "lasso",
            SolverKind::Logistic => "logistic",
        }
    }

    pub fn solve(self, problem: &NeighborhoodProblem<'_>, config: &SolverConfig) -> Result<LassoSolution> {
        match self {
            SolverKind::Lasso => solve_lasso(problem, config),
            SolverKind::Logistic => solve_logistic_l1(problem, config),
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(SolverKind::Lasso),
            "logistic" => Ok(SolverKind::Logistic),
            other => Err(invalid(format!("unknown solver '{other}' (expected lasso or logistic)"))),
        }
    }
}

/// A node whose regression failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub node: usize,
    pub kind: String,
    pub message: String,
}

/// Result of running the per-node regressions on every vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEstimate {
    pub p: usize,
    pub lambda: f64,
    pub solver: SolverKind,
    /// One entry per vertex; `None` where the solver failed.
    pub neighborhoods: Vec<Option<SignedNeighborhood>>,
    pub failures: Vec<NodeFailure>,
}

impl GraphEstimate {
    /// Whether every node's signed neighbourhood equals the truth.
    pub fn matches(&self, graph: &SignedGraph) -> Result<bool> {
        Ok(self.node_correct(graph)?.iter().all(|&ok| ok))
    }

    pub fn node_correct(&self, graph: &SignedGraph) -> Result<Vec<bool>> {
        if graph.p() != self.p {
            return Err(Error::DimensionMismatch(format!("graph has p = {}, estimate has p = {}", graph.p(), self.p)));
        }
        (0..self.p)
            .map(|r| {
                let truth = graph.signed_neighbors(r)?;
                Ok(self.neighborhoods[r].as_ref().is_some_and(|nb| nb.neighbors == truth))
            })
            .collect()
    }

    /// Edges selected from both endpoints with agreeing signs.
    pub fn and_edges(&self) -> BTreeMap<(usize, usize), Sign> {
        let mut out = BTreeMap::new();
        for nb in self.neighborhoods.iter().flatten() {
            for (&t, &s) in &nb.neighbors {
                if nb.r < t {
                    let back = self.neighborhoods[t].as_ref().and_then(|o| o.neighbors.get(&nb.r));
                    if back == Some(&s) {
                        out.insert((nb.r, t), s);
                    }
                }
            }
        }
        out
    }
}

/// Solve the neighbourhood problem at every vertex, distributing nodes over the rayon pool.
pub fn recover_graph(
    samples: &SampleMatrix,
    rule: LambdaRule,
    solver: SolverKind,
    config: &SolverConfig,
) -> Result<GraphEstimate> {
    if samples.n() == 0 {
        return Err(invalid("at least one sample is required"));
    }
    let p = samples.p();
    let lambda = rule.lambda(samples.n(), p);
    let moments = samples.second_moments();
    let results: Vec<Result<SignedNeighborhood>> = (0..p)
        .into_par_iter()
        .map(|r| {
            let problem = NeighborhoodProblem::with_moments(&moments, Some(samples), r, lambda)?;
            solver.solve(&problem, config).map(|sol| extract_signed_neighborhood(&sol))
        })
        .collect();
    let mut neighborhoods = Vec::with_capacity(p);
    let mut failures = Vec::new();
    for (node, res) in results.into_iter().enumerate() {
        match res {
            Ok(nb) => neighborhoods.push(Some(nb)),
            Err(e) => {
                failures.push(NodeFailure { node, kind: e.kind().to_string(), message: e.to_string() });
                neighborhoods.push(None);
            }
        }
    }
    Ok(GraphEstimate { p, lambda, solver, neighborhoods, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{assign_couplings, generate_random_regular, CouplingScheme};
    use crate::sampler::{gibbs_sample, SamplerConfig};
    use approx::assert_abs_diff_eq;

    fn samples(rows: &[Vec<i8>]) -> SampleMatrix {
        SampleMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn perfectly_correlated_pair_shrinks_by_lambda() {
        let s = samples(&[vec![1, 1], vec![-1, -1]]);
        let prob = NeighborhoodProblem::from_samples(&s, 0, 0.1).unwrap();
        let sol = solve_lasso(&prob, &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.coefficients[0], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.subgradient[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kill_condition_gives_exact_zero() {
        let s = samples(&[vec![1, 1, -1], vec![-1, 1, 1], vec![1, -1, -1], vec![1, 1, 1]]);
        let prob = NeighborhoodProblem::from_samples(&s, 0, 0.0).unwrap();
        let lmax = prob.lambda_max();
        for solver in [SolverKind::Lasso, SolverKind::Logistic] {
            // Both losses have gradient −b at zero, so they share the kill level.
            let sol = solver.solve(&prob.with_lambda(lmax).unwrap(), &SolverConfig::default()).unwrap();
            assert!(sol.coefficients.iter().all(|&c| c == 0.0), "{solver:?}");
            assert!(extract_signed_neighborhood(&sol).neighbors.is_empty());
        }
    }

    #[test]
    fn separable_logistic_without_penalty_diverges() {
        let s = samples(&[vec![1, 1], vec![-1, -1], vec![1, 1]]);
        let prob = NeighborhoodProblem::from_samples(&s, 0, 0.0).unwrap();
        let err = solve_logistic_l1(&prob, &SolverConfig::default()).unwrap_err();
        assert_eq!(err.kind(), "non_convergence");
    }

    #[test]
    fn extraction_applies_threshold_and_signs() {
        let sol = LassoSolution {
            r: 0,
            lambda: 0.1,
            predictors: vec![1, 2, 3, 4],
            coefficients: vec![0.3, -0.2, 0.0, 1e-12],
            subgradient: vec![1.0, -1.0, 0.0, 0.0],
            kkt_residual: 0.0,
            iterations: 1,
            objective: 0.0,
            non_unique: false,
            objective_trace: vec![],
        };
        let nb = extract_signed_neighborhood(&sol);
        let expected: BTreeMap<usize, Sign> = [(1, Sign::Plus), (2, Sign::Minus)].into();
        assert_eq!(nb.neighbors, expected);
    }

    #[test]
    fn restricted_solve_with_full_support_matches_unrestricted() {
        let rows: Vec<Vec<i8>> = (0..30)
            .map(|i| (0..5).map(|j| if (i * 7 + j * 3 + i * j) % 5 < 2 { 1 } else { -1 }).collect())
            .collect();
        let s = samples(&rows);
        let prob = NeighborhoodProblem::from_samples(&s, 2, 0.05).unwrap();
        let full = solve_lasso(&prob, &SolverConfig::default()).unwrap();
        let restricted = solve_lasso_restricted(&prob, &[0, 1, 3, 4], &SolverConfig::default()).unwrap();
        assert_eq!(full.coefficients, restricted.coefficients);
        assert!(solve_lasso_restricted(&prob, &[], &SolverConfig::default()).is_err());
        assert!(solve_lasso_restricted(&prob, &[2], &SolverConfig::default()).is_err());
    }

    #[test]
    fn rank_deficient_unpenalised_problem_is_flagged() {
        // Columns 1 and 2 are identical.
        let s = samples(&[vec![1, 1, 1], vec![-1, 1, 1], vec![1, -1, -1], vec![-1, -1, -1]]);
        let prob = NeighborhoodProblem::from_samples(&s, 0, 0.0).unwrap();
        let sol = solve_lasso(&prob, &SolverConfig::default()).unwrap();
        assert!(sol.non_unique);
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let rows: Vec<Vec<i8>> = (0..40)
            .map(|i| (0..6).map(|j| if (i * 5 + j * j + i / 3) % 3 == 0 { 1 } else { -1 }).collect())
            .collect();
        let s = samples(&rows);
        let prob = NeighborhoodProblem::from_samples(&s, 1, 0.01).unwrap();
        let config = SolverConfig { record_objective: true, ..Default::default() };
        let sol = solve_lasso(&prob, &config).unwrap();
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn dump_has_expected_fields() {
        let s = samples(&[vec![1, 1], vec![-1, -1]]);
        let prob = NeighborhoodProblem::from_samples(&s, 1, 0.1).unwrap();
        let sol = solve_lasso(&prob, &SolverConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&sol.to_dump_json()).unwrap();
        for key in ["r", "lambda", "coefficients", "subgradient", "kkt_residual", "iterations"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn recovers_random_regular_graph_from_many_samples() {
        let g = assign_couplings(generate_random_regular(12, 3, 5).unwrap(), CouplingScheme::MixedSign { theta0: 0.4 }, 6).unwrap();
        let s = gibbs_sample(&g, 10_000, SamplerConfig::with_seed(7)).unwrap();
        for solver in [SolverKind::Lasso, SolverKind::Logistic] {
            let est = recover_graph(&s, LambdaRule::Scaled { kappa: 3.0 }, solver, &SolverConfig::default()).unwrap();
            assert!(est.failures.is_empty());
            assert!(est.matches(&g).unwrap(), "{solver:?}");
            assert_eq!(est.and_edges(), g.signed_edge_set().unwrap());
        }
    }

    #[test]
    fn single_sample_and_huge_lambda_do_not_crash() {
        let g = assign_couplings(generate_random_regular(8, 3, 1).unwrap(), CouplingScheme::UniformPositive { theta0: 0.4 }, 2).unwrap();
        let s = gibbs_sample(&g, 1, SamplerConfig::with_seed(3)).unwrap();
        let est = recover_graph(&s, LambdaRule::Scaled { kappa: 1.0 }, SolverKind::Lasso, &SolverConfig::default()).unwrap();
        assert!(!est.matches(&g).unwrap());
        let s = gibbs_sample(&g, 200, SamplerConfig::with_seed(3)).unwrap();
        let est = recover_graph(&s, LambdaRule::Fixed { lambda: 1e6 }, SolverKind::Lasso, &SolverConfig::default()).unwrap();
        assert!(est.and_edges().is_empty());
    }
}
