//! Primal-dual witness certificates and empirical checks of the sample-level
//! conditions behind neighbourhood-Lasso sparsistency.
//!
//! The witness for node `r` with true neighbourhood `S` is built in three
//! steps: solve the Lasso restricted to `S`, set the coefficients on `S^c` to
//! zero, and read the dual variables on `S^c` off the stationarity equations.
//! If those duals are strictly inside `(−1, 1)` and the signs on `S` are right,
//! the unrestricted Lasso recovers the signed neighbourhood exactly. Every
//! inequality used along the way is recorded so it can be checked on data.
//!
//! The centre of the analysis is the population Lasso target, which is only
//! available in closed form on trees; loopy graphs are rejected.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bethe::{incoherence_norm, rescaled_theta, tree_covariance, RescaledParams, SINGULAR_EIGENVALUE};
use crate::error::{invalid, Error, Result};
use crate::graph::SignedGraph;
use crate::rng::derive_seed;
use crate::sampler::{gibbs_sample, SampleMatrix, SamplerConfig, EXACT_ENUMERATION_CAP};
use crate::solvers::{solve_lasso_restricted, NeighborhoodProblem, SolverConfig};

/// Slack allowed when comparing quantities that are equal in exact arithmetic.
pub const CHECK_SLACK: f64 = 1e-12;

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn validate_support(p: usize, r: usize, support: &[usize]) -> Result<()> {
    if r >= p {
        return Err(invalid(format!("node {r} out of range for p = {p}")));
    }
    if support.iter().any(|&s| s >= p || s == r) {
        return Err(invalid("support must be a set of vertices other than r"));
    }
    Ok(())
}

/// Second-moment structure seen by the regression at node `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceReport {
    pub r: usize,
    pub support: Vec<usize>,
    /// Predictor second moments in predictor order (every vertex but `r`).
    pub q_n: DMatrix<f64>,
    pub eig_min_ss: f64,
    pub eig_max_full: f64,
    /// `⫴Q_{S^cS} Q_SS⁻¹⫴_∞`; `None` when `Q_SS` is singular.
    pub incoherence: Option<f64>,
}

/// Covariance report from a full `p × p` second-moment matrix.
pub fn covariance_report(moments: &DMatrix<f64>, r: usize, support: &[usize]) -> Result<CovarianceReport> {
    let p = moments.nrows();
    validate_support(p, r, support)?;
    let asym = (moments - moments.transpose()).amax();
    if asym > 1e-12 {
        return Err(invalid(format!("second-moment matrix is not symmetric (max asymmetry {asym:e})")));
    }
    let full = symmetrized(moments);
    let predictors: Vec<usize> = (0..p).filter(|&u| u != r).collect();
    let q_n = DMatrix::from_fn(p - 1, p - 1, |i, j| full[(predictors[i], predictors[j])]);
    let eig_max_full = q_n.symmetric_eigenvalues().max();
    let eig_min_ss = if support.is_empty() {
        f64::INFINITY
    } else {
        DMatrix::from_fn(support.len(), support.len(), |i, j| full[(support[i], support[j])])
            .symmetric_eigenvalues()
            .min()
    };
    let incoherence = match incoherence_norm(&full, r, support) {
        Ok(v) => Some(v),
        Err(Error::Singular { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(CovarianceReport { r, support: support.to_vec(), q_n, eig_min_ss, eig_max_full, incoherence })
}

/// Covariance report from samples (the diagonal is exactly one for spin data).
pub fn sample_covariance(samples: &SampleMatrix, r: usize, support: &[usize]) -> Result<CovarianceReport> {
    if samples.n() == 0 {
        return Err(invalid("at least one sample is required"));
    }
    covariance_report(&samples.second_moments(), r, support)
}

/// Outcome of the sample-level dependency and incoherence checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub eig_min_ss: f64,
    pub c_min_target: f64,
    pub delta: f64,
    /// `Λ_min(Q_SS) − (C_min − δ)`.
    pub dependency_margin: f64,
    pub dependency_pass: bool,
    pub incoherence: Option<f64>,
    /// `1 − α/2`.
    pub incoherence_bound: f64,
    /// `(1 − α/2) − incoherence`; `None` when the incoherence is undefined.
    pub incoherence_margin: Option<f64>,
    pub incoherence_pass: bool,
}

/// Check `Λ_min(Q_SS) ≥ C_min − δ` and `incoherence ≤ 1 − α/2`.
pub fn check_conditions(report: &CovarianceReport, c_min_target: f64, alpha_target: f64, delta: f64) -> ConditionCheck {
    let dependency_margin = report.eig_min_ss - (c_min_target - delta);
    let incoherence_bound = 1.0 - alpha_target / 2.0;
    let incoherence_margin = report.incoherence.map(|v| incoherence_bound - v);
    ConditionCheck {
        eig_min_ss: report.eig_min_ss,
        c_min_target,
        delta,
        dependency_margin,
        dependency_pass: dependency_margin >= -CHECK_SLACK,
        incoherence: report.incoherence,
        incoherence_bound,
        incoherence_margin,
        incoherence_pass: incoherence_margin.is_some_and(|m| m >= -CHECK_SLACK),
    }
}

/// Empirical gradient of the square loss at the population target, negated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseVector {
    pub r: usize,
    pub predictors: Vec<usize>,
    /// `W_s = (1/n) Σ_i Z_s⁽ⁱ⁾` with `Z_s = x_s (x_r − Σ_t θ̃_rt x_t)`.
    pub w: Vec<f64>,
    pub inf_norm: f64,
    /// `max_{i,s} |Z_s⁽ⁱ⁾|`.
    pub max_abs_z: f64,
    /// Per-coordinate sample variance of `Z_s` (zero when `n = 1`).
    pub z_variance: Vec<f64>,
}

/// Noise vector at node `r` for population coefficients `theta_tilde`.
pub fn compute_noise_vector(samples: &SampleMatrix, r: usize, theta_tilde: &RescaledParams) -> Result<NoiseVector> {
    let p = samples.p();
    if theta_tilde.theta.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "samples have p = {p} but the coefficients have p = {}",
            theta_tilde.theta.nrows()
        )));
    }
    if r >= p {
        return Err(invalid(format!("node {r} out of range for p = {p}")));
    }
    if samples.n() == 0 {
        return Err(invalid("at least one sample is required"));
    }
    let predictors: Vec<usize> = (0..p).filter(|&u| u != r).collect();
    let coef: Vec<(usize, f64)> = (0..p)
        .filter(|&t| t != r && theta_tilde.get(r, t) != 0.0)
        .map(|t| (t, theta_tilde.get(r, t)))
        .collect();
    let m = predictors.len();
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut max_abs_z: f64 = 0.0;
    for row in samples.rows() {
        let e = row[r] as f64 - coef.iter().map(|&(t, c)| c * row[t] as f64).sum::<f64>();
        // |Z_s| = |e| because x_s = ±1.
        max_abs_z = max_abs_z.max(e.abs());
        for (k, &s) in predictors.iter().enumerate() {
            let z = row[s] as f64 * e;
            sum[k] += z;
            sum_sq[k] += z * z;
        }
    }
    let n = samples.n() as f64;
    let w: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let z_variance = if samples.n() > 1 {
        sum_sq.iter().zip(&w).map(|(sq, mean)| ((sq - n * mean * mean) / (n - 1.0)).max(0.0)).collect()
    } else {
        vec![0.0; m]
    };
    let inf_norm = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(NoiseVector { r, predictors, w, inf_norm, max_abs_z, z_variance })
}

/// Exact moments of `Z_s` under the model, by enumeration of all states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZStatistics {
    pub r: usize,
    pub predictors: Vec<usize>,
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// Largest `|Z_s|` over all states and coordinates.
    pub max_abs: f64,
}

pub fn z_statistics_exact(graph: &SignedGraph, r: usize) -> Result<ZStatistics> {
    let p = graph.p();
    if p > EXACT_ENUMERATION_CAP {
        return Err(Error::TooLarge { p, cap: EXACT_ENUMERATION_CAP });
    }
    if r >= p {
        return Err(invalid(format!("node {r} out of range for p = {p}")));
    }
    let params = rescaled_theta(graph)?;
    let edges = graph.weighted_edges()?;
    let shift: f64 = edges.iter().map(|e| e.2.abs()).sum();
    let predictors: Vec<usize> = (0..p).filter(|&u| u != r).collect();
    let coef: Vec<(usize, f64)> = graph.neighbors(r).iter().map(|&t| (t, params.get(r, t))).collect();
    let mut total = 0.0;
    let mut first = vec![0.0; p - 1];
    let mut second = vec![0.0; p - 1];
    let mut max_abs: f64 = 0.0;
    let mut x = vec![0.0f64; p];
    for state in 0u32..(1u32 << p) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if state >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        let energy: f64 = edges.iter().map(|&(a, b, j)| j * x[a] * x[b]).sum();
        let weight = (energy - shift).exp();
        let e = x[r] - coef.iter().map(|&(t, c)| c * x[t]).sum::<f64>();
        max_abs = max_abs.max(e.abs());
        total += weight;
        for (k, &s) in predictors.iter().enumerate() {
            let z = x[s] * e;
            first[k] += weight * z;
            second[k] += weight * z * z;
        }
    }
    Ok(ZStatistics {
        r,
        predictors,
        mean: first.iter().map(|v| v / total).collect(),
        second_moment: second.iter().map(|v| v / total).collect(),
        max_abs,
    })
}

/// Where the certificate's `C_min` comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CMinSource {
    /// Smallest eigenvalue of the data's `Q_SS`.
    #[default]
    Measured,
    /// A caller-supplied target, e.g. a closed-form population value.
    Injected { value: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WitnessOptions {
    pub c_min: CMinSource,
    pub solver: SolverConfig,
}

/// Primal-dual witness for one node, holding only raw quantities; every
/// check is recomputed from them when queried.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct WitnessCertificate {
    pub r: usize,
    pub lambda: f64,
    pub support: Vec<usize>,
    pub complement: Vec<usize>,
    pub theta_hat_s: Vec<f64>,
    pub theta_tilde_s: Vec<f64>,
    /// True coupling signs on `S` (±1).
    pub true_signs_s: Vec<f64>,
    pub z_s: Vec<f64>,
    pub z_sc: Vec<f64>,
    pub w_s: Vec<f64>,
    pub w_sc: Vec<f64>,
    /// `max |Qθ̂ − b + λẑ|` over all coordinates.
    pub stationarity_residual: f64,
    pub solver_tol: f64,
    pub c_min: f64,
    pub c_min_measured: f64,
    /// `1 − ⫴Q_{S^cS}Q_SS⁻¹⫴_∞` of the data.
    pub alpha_hat: f64,
    /// Maximum degree of the graph.
    pub d: usize,
    /// Smallest population coefficient magnitude over the whole graph.
    pub theta_tilde_min: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

impl WitnessCertificate {
    pub fn z_sc_inf_norm(&self) -> f64 {
        inf_norm(&self.z_sc)
    }

    /// `1 − ‖ẑ_{S^c}‖_∞`.
    pub fn strict_feasibility_margin(&self) -> f64 {
        1.0 - self.z_sc_inf_norm()
    }

    pub fn strictly_feasible(&self) -> bool {
        self.strict_feasibility_margin() > 0.0
    }

    pub fn sign_consistent(&self) -> bool {
        self.theta_hat_s
            .iter()
            .zip(&self.true_signs_s)
            .all(|(&v, &s)| v != 0.0 && v.signum() == s)
    }

    fn error_vector(&self) -> Vec<f64> {
        self.theta_hat_s.iter().zip(&self.theta_tilde_s).map(|(a, b)| a - b).collect()
    }

    pub fn l2_error(&self) -> f64 {
        self.error_vector().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `3 λ √d / C_min`.
    pub fn l2_bound(&self) -> f64 {
        3.0 * self.lambda * (self.d as f64).sqrt() / self.c_min
    }

    pub fn linf_error(&self) -> f64 {
        inf_norm(&self.error_vector())
    }

    pub fn half_theta_tilde_min(&self) -> f64 {
        self.theta_tilde_min / 2.0
    }

    pub fn w_inf_norm(&self) -> f64 {
        inf_norm(&self.w_s).max(inf_norm(&self.w_sc))
    }

    /// Whether `‖W‖_∞ ≤ λ/2`, the noise level under which the ℓ2 bound is guaranteed.
    pub fn noise_hypothesis_holds(&self) -> bool {
        self.w_inf_norm() <= self.lambda / 2.0
    }

    /// `(1 − α̂)(1 + ‖W_S‖_∞/λ) + ‖W_{S^c}‖_∞/λ`, an upper bound on `‖ẑ_{S^c}‖_∞`.
    pub fn dual_bound(&self) -> f64 {
        (1.0 - self.alpha_hat) * (1.0 + inf_norm(&self.w_s) / self.lambda) + inf_norm(&self.w_sc) / self.lambda
    }

    /// Every named check, evaluated from the raw fields.
    pub fn all_checks(&self) -> BTreeMap<String, bool> {
        let mut checks = BTreeMap::new();
        checks.insert("strict_feasibility".into(), self.strictly_feasible());
        checks.insert("sign_consistency".into(), self.sign_consistent());
        checks.insert("l2_bound".into(), self.l2_error() <= self.l2_bound());
        checks.insert("linf_half_theta_min".into(), self.linf_error() <= self.half_theta_tilde_min());
        checks.insert("dual_bound_chain".into(), self.z_sc_inf_norm() <= self.dual_bound() + CHECK_SLACK);
        checks.insert("stationarity".into(), self.stationarity_residual <= self.solver_tol + 1e-10);
        checks
    }

    pub fn passes_all(&self) -> bool {
        self.all_checks().values().all(|&ok| ok)
    }

    pub fn failed_checks(&self) -> Vec<String> {
        self.all_checks().into_iter().filter(|(_, ok)| !ok).map(|(k, _)| k).collect()
    }

    /// JSON with all raw quantities plus the derived checks and margins.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "r": self.r,
            "lambda": self.lambda,
            "support": self.support,
            "complement": self.complement,
            "theta_hat_s": self.theta_hat_s,
            "theta_tilde_s": self.theta_tilde_s,
            "true_signs_s": self.true_signs_s,
            "z_s": self.z_s,
            "z_sc": self.z_sc,
            "w_s": self.w_s,
            "w_sc": self.w_sc,
            "stationarity_residual": self.stationarity_residual,
            "solver_tol": self.solver_tol,
            "c_min": self.c_min,
            "c_min_measured": self.c_min_measured,
            "alpha_hat": self.alpha_hat,
            "d": self.d,
            "theta_tilde_min": self.theta_tilde_min,
            "strict_feasibility_margin": self.strict_feasibility_margin(),
            "l2_error": self.l2_error(),
            "l2_bound": self.l2_bound(),
            "linf_error": self.linf_error(),
            "half_theta_tilde_min": self.half_theta_tilde_min(),
            "dual_bound": self.dual_bound(),
            "checks": self.all_checks(),
            "passes_all": self.passes_all(),
        })
    }
}

/// Build the witness at node `r` from a full second-moment matrix (sample or population).
pub fn construct_witness_from_moments(
    moments: &DMatrix<f64>,
    graph: &SignedGraph,
    r: usize,
    lambda: f64,
    options: &WitnessOptions,
) -> Result<WitnessCertificate> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("the witness needs a positive finite lambda (got {lambda})")));
    }
    if moments.nrows() != graph.p() {
        return Err(Error::DimensionMismatch(format!(
            "moments have p = {} but the graph has p = {}",
            moments.nrows(),
            graph.p()
        )));
    }
    let params = rescaled_theta(graph)?;
    let support: Vec<usize> = graph.neighbors(r).to_vec();
    if support.is_empty() {
        return Err(invalid(format!("node {r} has no neighbours, so there is no support to certify")));
    }
    let theta_tilde_min = params.theta_tilde_min().expect("a node with neighbours implies edges");
    let report = covariance_report(moments, r, &support)?;
    if !(report.eig_min_ss > SINGULAR_EIGENVALUE) {
        return Err(Error::Singular { min_eigenvalue: report.eig_min_ss });
    }
    let incoherence = report.incoherence.expect("Q_SS is nonsingular");

    let problem = NeighborhoodProblem::from_second_moments(moments, r, lambda)?;
    let restricted = solve_lasso_restricted(&problem, &support, &options.solver)?;
    let theta_hat = restricted.coefficient_vector();
    let m = problem.predictors().len();
    let pos = |v: usize| problem.position_of(v).expect("validated vertex");
    let s_pos: Vec<usize> = support.iter().map(|&s| pos(s)).collect();
    let complement: Vec<usize> = (0..graph.p()).filter(|&u| u != r && !support.contains(&u)).collect();
    let c_pos: Vec<usize> = complement.iter().map(|&u| pos(u)).collect();

    let theta_tilde = DVector::from_vec(params.row_without(r));
    let w = problem.cross() - problem.gram() * &theta_tilde;
    let delta = &theta_hat - &theta_tilde;
    let q = problem.gram();

    let theta_hat_s: Vec<f64> = s_pos.iter().map(|&i| theta_hat[i]).collect();
    let grad = problem.gradient(&theta_hat);
    let z_s: Vec<f64> = s_pos
        .iter()
        .map(|&i| if theta_hat[i] != 0.0 { theta_hat[i].signum() } else { -grad[i] / lambda })
        .collect();
    let z_sc: Vec<f64> = c_pos
        .iter()
        .map(|&j| {
            let coupling: f64 = s_pos.iter().map(|&i| q[(j, i)] * delta[i]).sum();
            (w[j] - coupling) / lambda
        })
        .collect();

    let mut z = DVector::zeros(m);
    for (k, &i) in s_pos.iter().enumerate() {
        z[i] = z_s[k];
    }
    for (k, &j) in c_pos.iter().enumerate() {
        z[j] = z_sc[k];
    }
    let stationarity_residual = (grad + z * lambda).amax();

    let c_min = match options.c_min {
        CMinSource::Measured => report.eig_min_ss,
        CMinSource::Injected { value } => value,
    };
    let true_signs_s = support
        .iter()
        .map(|&s| graph.coupling(r, s).map(f64::signum))
        .collect::<Result<Vec<_>>>()?;
    Ok(WitnessCertificate {
        r,
        lambda,
        support: support.clone(),
        complement,
        theta_hat_s,
        theta_tilde_s: s_pos.iter().map(|&i| theta_tilde[i]).collect(),
        true_signs_s,
        z_s,
        z_sc,
        w_s: s_pos.iter().map(|&i| w[i]).collect(),
        w_sc: c_pos.iter().map(|&j| w[j]).collect(),
        stationarity_residual,
        solver_tol: options.solver.tol,
        c_min,
        c_min_measured: report.eig_min_ss,
        alpha_hat: 1.0 - incoherence,
        d: graph.max_degree(),
        theta_tilde_min,
    })
}

/// Witness from samples drawn on a tree `graph`.
pub fn construct_witness(
    samples: &SampleMatrix,
    graph: &SignedGraph,
    r: usize,
    lambda: f64,
    options: &WitnessOptions,
) -> Result<WitnessCertificate> {
    if samples.p() != graph.p() {
        return Err(Error::DimensionMismatch(format!(
            "samples have p = {} but the graph has p = {}",
            samples.p(),
            graph.p()
        )));
    }
    if samples.n() == 0 {
        return Err(invalid("at least one sample is required"));
    }
    construct_witness_from_moments(&samples.second_moments(), graph, r, lambda, options)
}

/// Witness in the population limit: exact tree moments, so `W = 0`.
pub fn construct_witness_population(
    graph: &SignedGraph,
    r: usize,
    lambda: f64,
    options: &WitnessOptions,
) -> Result<WitnessCertificate> {
    construct_witness_from_moments(&tree_covariance(graph)?, graph, r, lambda, options)
}

/// One row of the noise tail-probability probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub lambda: f64,
    pub empirical_prob: f64,
    pub bound: f64,
    pub trials: usize,
    /// Wald standard error of `empirical_prob`.
    pub stderr: f64,
    /// Whether `n ≥ (c + 1) d² ln p`, the sample size the bound assumes.
    pub in_precondition: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub r: usize,
    pub c: f64,
    pub trials: usize,
    pub sampler: SamplerConfig,
}

/// `λ = 4 √(c + 1) (2 − α)/α · √(ln p / n)`.
pub fn probe_lambda(c: f64, alpha: f64, p: usize, n: usize) -> f64 {
    4.0 * (c + 1.0).sqrt() * (2.0 - alpha) / alpha * ((p as f64).ln() / n as f64).sqrt()
}

/// Monte Carlo estimate of `P(‖W‖_∞ (2 − α)/λ ≥ α/2)` at node `r` for each `n`,
/// against the bound `2 exp(−c ln p)`. `α` is the population incoherence
/// margin of the tree (minimum over nodes).
pub fn tail_rate_probe(graph: &SignedGraph, n_grid: &[usize], config: &ProbeConfig) -> Result<Vec<ProbeRow>> {
    if !(config.c > 0.0) || !config.c.is_finite() {
        return Err(invalid(format!("c must be positive (got {})", config.c)));
    }
    if n_grid.contains(&0) {
        return Err(invalid("sample sizes must be positive"));
    }
    let p = graph.p();
    if config.r >= p {
        return Err(invalid(format!("node {} out of range for p = {p}", config.r)));
    }
    if config.trials == 0 {
        return Ok(Vec::new());
    }
    let params = rescaled_theta(graph)?;
    let cov = tree_covariance(graph)?;
    let worst = (0..p)
        .filter(|&u| graph.degree(u) > 0)
        .map(|u| incoherence_norm(&cov, u, graph.neighbors(u)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let alpha = 1.0 - worst;
    let d = graph.max_degree() as f64;
    let log_p = (p as f64).ln();
    let bound = 2.0 * (-config.c * log_p).exp();
    let mut rows = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let lambda = probe_lambda(config.c, alpha, p, n);
        let hits: Vec<bool> = (0..config.trials)
            .into_par_iter()
            .map(|trial| -> Result<bool> {
                let seed = derive_seed(config.sampler.seed, &[gi as u64, trial as u64]);
                let samples = gibbs_sample(graph, n, SamplerConfig { seed, ..config.sampler })?;
                let noise = compute_noise_vector(&samples, config.r, &params)?;
                Ok(noise.inf_norm * (2.0 - alpha) / lambda >= alpha / 2.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let k = hits.iter().filter(|&&h| h).count();
        let prob = k as f64 / config.trials as f64;
        rows.push(ProbeRow {
            n,
            lambda,
            empirical_prob: prob,
            bound,
            trials: config.trials,
            stderr: (prob * (1.0 - prob) / config.trials as f64).sqrt(),
            in_precondition: n as f64 >= (config.c + 1.0) * d * d * log_p,
        });
    }
    Ok(rows)
}

/// Probe table as CSV with columns `n,lambda,empirical_prob,bound,trials,stderr,in_precondition`.
pub fn probe_to_csv(rows: &[ProbeRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        writer.write_record(["n", "lambda", "empirical_prob", "bound", "trials", "stderr", "in_precondition"])?;
    }
    // Headers come from the field names on the first serialised row.
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bethe::rr_constants;
    use crate::graph::{assign_couplings, generate_regular_tree, CouplingScheme};
    use approx::assert_abs_diff_eq;

    fn tree(theta0: f64) -> SignedGraph {
        assign_couplings(generate_regular_tree(10, 3, 4).unwrap(), CouplingScheme::MixedSign { theta0 }, 5).unwrap()
    }

    fn interior(g: &SignedGraph) -> usize {
        (0..g.p()).find(|&r| g.degree(r) == 3).unwrap()
    }

    #[test]
    fn population_witness_passes_everything() {
        let g = tree(0.4);
        let alpha = rr_constants(3, 0.4).unwrap().alpha;
        for r in 0..g.p() {
            let cert = construct_witness_population(&g, r, 0.02, &WitnessOptions::default()).unwrap();
            assert!(cert.passes_all(), "node {r}: {:?}", cert.failed_checks());
            assert!(cert.z_sc_inf_norm() <= 1.0 - alpha + 1e-8);
            assert!(cert.w_inf_norm() < 1e-14);
        }
    }

    #[test]
    fn enormous_lambda_reports_sign_failure() {
        let g = tree(0.4);
        let cert = construct_witness_population(&g, interior(&g), 50.0, &WitnessOptions::default()).unwrap();
        assert!(cert.theta_hat_s.iter().all(|&v| v == 0.0));
        assert!(cert.failed_checks().contains(&"sign_consistency".to_string()));
        assert!(construct_witness_population(&g, 0, 0.0, &WitnessOptions::default()).is_err());
    }

    #[test]
    fn population_conditions_have_expected_margins() {
        let g = assign_couplings(generate_regular_tree(10, 3, 4).unwrap(), CouplingScheme::UniformPositive { theta0: 0.4 }, 5)
            .unwrap();
        let rr = rr_constants(3, 0.4).unwrap();
        let r = interior(&g);
        let report = covariance_report(&tree_covariance(&g).unwrap(), r, g.neighbors(r)).unwrap();
        let check = check_conditions(&report, rr.c_min, rr.alpha, 0.0);
        assert!(check.dependency_pass && check.incoherence_pass);
        assert_abs_diff_eq!(check.dependency_margin, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(check.incoherence_margin.unwrap(), rr.alpha / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn tiny_samples_fail_conditions_without_error() {
        let g = tree(0.4);
        let s = SampleMatrix::from_rows(&[vec![1; 10], vec![-1; 10]]).unwrap();
        let r = interior(&g);
        let report = sample_covariance(&s, r, g.neighbors(r)).unwrap();
        assert!(report.q_n.diagonal().iter().all(|&v| v == 1.0));
        let check = check_conditions(&report, 0.8, 0.6, 0.0);
        assert!(!check.dependency_pass);
        assert!(!check.incoherence_pass);
    }

    #[test]
    fn noise_vector_on_independent_spins() {
        let g = SignedGraph::edgeless(4);
        let params = crate::bethe::rescaled_theta(&g).unwrap();
        let s = SampleMatrix::from_rows(&[vec![1, 1, -1, 1], vec![1, -1, -1, 1], vec![-1, 1, 1, 1]]).unwrap();
        let noise = compute_noise_vector(&s, 0, &params).unwrap();
        let m = s.second_moments();
        for (k, &t) in noise.predictors.iter().enumerate() {
            assert_abs_diff_eq!(noise.w[k], m[(0, t)], epsilon = 1e-15);
        }
        assert!(noise.inf_norm <= 1.0);
        let bad = crate::bethe::rescaled_theta(&SignedGraph::edgeless(5)).unwrap();
        assert_eq!(compute_noise_vector(&s, 0, &bad).unwrap_err().kind(), "dimension_mismatch");
    }

    #[test]
    fn probe_with_zero_trials_is_empty_and_flags_small_n() {
        let g = tree(0.4);
        let cfg = ProbeConfig { r: 0, c: 0.5, trials: 0, sampler: SamplerConfig::with_seed(1) };
        assert!(tail_rate_probe(&g, &[10, 20], &cfg).unwrap().is_empty());
        let cfg = ProbeConfig { trials: 5, sampler: SamplerConfig { burn_in_sweeps: 50, ..SamplerConfig::with_seed(1) }, ..cfg };
        let rows = tail_rate_probe(&g, &[5, 100], &cfg).unwrap();
        // (c + 1) d² ln p = 1.5 · 9 · ln 10 ≈ 31.1
        assert!(!rows[0].in_precondition);
        assert!(rows[1].in_precondition);
        let csv = probe_to_csv(&rows).unwrap();
        assert!(csv.starts_with("n,lambda,empirical_prob,bound,trials"));
        assert_eq!(csv.lines().count(), 3);
    }
}
