//! Closed-form population quantities for zero-field Ising models on trees.
//!
//! On a tree every pairwise correlation is the product of `tanh(J_e)` along the
//! connecting path, the inverse covariance is sparse with the graph's pattern,
//! and the population Lasso target (the minimiser of the expected square loss)
//! has a closed form with the same sign pattern as the couplings. These
//! formulas are wrong on graphs with cycles, so every entry point checks
//! acyclicity first. Forests are accepted: components are independent.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::SignedGraph;

fn require_acyclic(graph: &SignedGraph, operation: &'static str) -> Result<()> {
    if !graph.has_couplings() {
        return Err(Error::CouplingsUnassigned);
    }
    if graph.is_acyclic() {
        Ok(())
    } else {
        Err(Error::NotATree { operation })
    }
}

/// Population Lasso target on a tree.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledParams {
    /// `theta[(r, t)]` is the coefficient of `x_t` in the regression of `x_r`.
    pub theta: DMatrix<f64>,
    /// Per vertex, `1 − d_r + Σ_{u∈N(r)} 1/(1 − tanh² J_ru)`: the reciprocal of
    /// the residual variance of `x_r` given the other spins.
    pub prefactor_inverse: Vec<f64>,
    edges: Vec<(usize, usize)>,
}

impl RescaledParams {
    pub fn get(&self, r: usize, t: usize) -> f64 {
        self.theta[(r, t)]
    }

    /// Coefficients for node `r` in predictor order (every vertex but `r`).
    pub fn row_without(&self, r: usize) -> Vec<f64> {
        (0..self.theta.ncols()).filter(|&t| t != r).map(|t| self.theta[(r, t)]).collect()
    }

    /// Smallest magnitude over ordered edge pairs; `None` for an edgeless graph.
    pub fn theta_tilde_min(&self) -> Option<f64> {
        self.edges
            .iter()
            .flat_map(|&(r, t)| [self.theta[(r, t)].abs(), self.theta[(t, r)].abs()])
            .reduce(f64::min)
    }

    /// Smallest magnitude over the edges at vertex `r`.
    pub fn theta_tilde_min_at(&self, r: usize, graph: &SignedGraph) -> Option<f64> {
        graph.neighbors(r).iter().map(|&t| self.theta[(r, t)].abs()).reduce(f64::min)
    }
}

/// Population Lasso coefficients on a tree:
/// `θ̃_rt = [tanh J_rt / (1 − tanh² J_rt)] / (1 − d_r + Σ_u 1/(1 − tanh² J_ru))`.
pub fn rescaled_theta(graph: &SignedGraph) -> Result<RescaledParams> {
    require_acyclic(graph, "the rescaled-parameter formula")?;
    let p = graph.p();
    let mut theta = DMatrix::zeros(p, p);
    let mut prefactor_inverse = Vec::with_capacity(p);
    for r in 0..p {
        let mut f = 1.0 - graph.degree(r) as f64;
        for &u in graph.neighbors(r) {
            let t = graph.coupling(r, u)?.tanh();
            f += 1.0 / (1.0 - t * t);
        }
        for &u in graph.neighbors(r) {
            let t = graph.coupling(r, u)?.tanh();
            theta[(r, u)] = t / (1.0 - t * t) / f;
        }
        prefactor_inverse.push(f);
    }
    Ok(RescaledParams { theta, prefactor_inverse, edges: graph.edges().to_vec() })
}

/// Rescaled coefficient on a uniform-magnitude regular tree:
/// `sign · tanh θ0 / (1 + (d − 1) tanh² θ0)`.
pub fn rescaled_theta_rr(d: usize, theta0: f64, sign: f64) -> f64 {
    let t = theta0.tanh();
    sign.signum() * t / (1.0 + (d as f64 - 1.0) * t * t)
}

/// Exact covariance (equal to the second-moment matrix at zero field) of a tree model.
pub fn tree_covariance(graph: &SignedGraph) -> Result<DMatrix<f64>> {
    require_acyclic(graph, "the path-product covariance")?;
    let p = graph.p();
    let adjacency = graph.weighted_adjacency()?;
    let mut cov = DMatrix::zeros(p, p);
    for source in 0..p {
        let mut value = vec![None; p];
        value[source] = Some(1.0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let cu = value[u].expect("queued vertices have values");
            for &(v, j) in &adjacency[u] {
                if value[v].is_none() {
                    value[v] = Some(cu * j.tanh());
                    queue.push_back(v);
                }
            }
        }
        for (t, c) in value.into_iter().enumerate() {
            cov[(source, t)] = c.unwrap_or(0.0);
        }
    }
    Ok(cov)
}

/// Sparse inverse of the tree covariance.
pub fn bethe_inverse_covariance(graph: &SignedGraph) -> Result<DMatrix<f64>> {
    require_acyclic(graph, "the tree inverse covariance")?;
    let p = graph.p();
    let mut inv = DMatrix::identity(p, p);
    for (r, t, j) in graph.weighted_edges()? {
        let th = j.tanh();
        let s = 1.0 - th * th;
        inv[(r, r)] += 1.0 / s - 1.0;
        inv[(t, t)] += 1.0 / s - 1.0;
        inv[(r, t)] = -th / s;
        inv[(t, r)] = -th / s;
    }
    Ok(inv)
}

/// Closed-form support-block constants of a uniform regular tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RRConstants {
    pub d: usize,
    pub theta0: f64,
    /// Smallest eigenvalue of the neighbour covariance block, `1 − tanh² θ0`.
    pub c_min: f64,
    /// Incoherence margin, `1 − tanh θ0`.
    pub alpha: f64,
    /// Largest eigenvalue of the neighbour covariance block, `1 + (d − 1) tanh² θ0`.
    pub lambda_max_qss: f64,
    pub theta_tilde_rr: f64,
}

pub fn rr_constants(d: usize, theta0: f64) -> Result<RRConstants> {
    if d < 1 {
        return Err(invalid("degree must be at least 1"));
    }
    if !(theta0 > 0.0) || !theta0.is_finite() {
        return Err(invalid(format!("theta0 must be positive and finite (got {theta0})")));
    }
    let t = theta0.tanh();
    Ok(RRConstants {
        d,
        theta0,
        c_min: 1.0 - t * t,
        alpha: 1.0 - t,
        lambda_max_qss: 1.0 + (d as f64 - 1.0) * t * t,
        theta_tilde_rr: rescaled_theta_rr(d, theta0, 1.0),
    })
}

fn block(q: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| q[(rows[i], cols[j])])
}

/// Eigenvalue floor below which a support block is treated as singular.
pub const SINGULAR_EIGENVALUE: f64 = 1e-12;

/// Extreme eigenvalues `(min, max)` of the block `Q_SS`.
pub fn support_eigenvalues(q_full: &DMatrix<f64>, support: &[usize]) -> (f64, f64) {
    if support.is_empty() {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let eig = block(q_full, support, support).symmetric_eigenvalues();
    (eig.min(), eig.max())
}

/// `max_row_sum |Q_{S^cS} Q_SS⁻¹|` where `S^c` is every vertex outside `S ∪ {r}`.
pub fn incoherence_norm(q_full: &DMatrix<f64>, r: usize, support: &[usize]) -> Result<f64> {
    let p = q_full.nrows();
    if q_full.ncols() != p {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    if r >= p || support.iter().any(|&s| s >= p || s == r) {
        return Err(invalid("support must be a set of vertices other than r"));
    }
    if support.is_empty() {
        return Ok(0.0);
    }
    let complement: Vec<usize> = (0..p).filter(|&u| u != r && !support.contains(&u)).collect();
    let q_ss = block(q_full, support, support);
    let min_eigenvalue = q_ss.symmetric_eigenvalues().min();
    if !(min_eigenvalue > SINGULAR_EIGENVALUE) {
        return Err(Error::Singular { min_eigenvalue });
    }
    if complement.is_empty() {
        return Ok(0.0);
    }
    let chol = q_ss.cholesky().ok_or(Error::Singular { min_eigenvalue })?;
    // Q_SS⁻¹ Q_{S S^c} is the transpose of the wanted product.
    let product = chol.solve(&block(q_full, support, &complement));
    Ok((0..complement.len())
        .map(|i| product.column(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Population dependency and incoherence constants at one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeConstants {
    pub r: usize,
    pub c_min: f64,
    pub lambda_max_qss: f64,
    pub incoherence: f64,
}

/// Per-node constants of the population covariance for the neighbourhood supports of `graph`.
pub fn node_constants(graph: &SignedGraph, q_full: &DMatrix<f64>) -> Result<Vec<NodeConstants>> {
    (0..graph.p())
        .map(|r| {
            let support = graph.neighbors(r);
            let (c_min, lambda_max_qss) = support_eigenvalues(q_full, support);
            Ok(NodeConstants { r, c_min, lambda_max_qss, incoherence: incoherence_norm(q_full, r, support)? })
        })
        .collect()
}

/// Sufficient condition for population sparsistency: `θ̃_min ≥ 6 λ √d / C_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub lambda: f64,
    pub theta_tilde_min: f64,
    pub c_min: f64,
    pub max_degree: usize,
    pub threshold: f64,
    pub pass: bool,
}

/// Evaluate both sides of the minimum-signal condition; `C_min` is the minimum
/// over nodes of the smallest eigenvalue of the population support block.
pub fn theorem_thresholds(graph: &SignedGraph, lambda: f64) -> Result<ThresholdReport> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite and non-negative (got {lambda})")));
    }
    let params = rescaled_theta(graph)?;
    let theta_tilde_min = params
        .theta_tilde_min()
        .ok_or_else(|| invalid("the graph has no edges"))?;
    let cov = tree_covariance(graph)?;
    let c_min = (0..graph.p())
        .filter(|&r| graph.degree(r) > 0)
        .map(|r| support_eigenvalues(&cov, graph.neighbors(r)).0)
        .fold(f64::INFINITY, f64::min);
    let max_degree = graph.max_degree();
    let threshold = 6.0 * lambda * (max_degree as f64).sqrt() / c_min;
    Ok(ThresholdReport { lambda, theta_tilde_min, c_min, max_degree, threshold, pass: theta_tilde_min >= threshold })
}

/// Population theory summary for a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    /// Keyed by `"r-t"` for every ordered edge pair.
    pub theta_tilde: BTreeMap<String, f64>,
    pub theta_tilde_min: f64,
    /// Minimum over nodes of the smallest support-block eigenvalue.
    pub c_min: f64,
    /// `1 − max_r` incoherence norm.
    pub alpha: f64,
    /// Maximum over nodes of the largest support-block eigenvalue.
    pub lambda_max: f64,
    pub nodes: Vec<NodeConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdReport>,
}

pub fn theory_report(graph: &SignedGraph, lambda: Option<f64>) -> Result<TheoryReport> {
    let params = rescaled_theta(graph)?;
    let cov = tree_covariance(graph)?;
    let mut theta_tilde = BTreeMap::new();
    for &(r, t) in graph.edges() {
        theta_tilde.insert(format!("{r}-{t}"), params.get(r, t));
        theta_tilde.insert(format!("{t}-{r}"), params.get(t, r));
    }
    let nodes: Vec<NodeConstants> = node_constants(graph, &cov)?
        .into_iter()
        .filter(|n| graph.degree(n.r) > 0)
        .collect();
    let c_min = nodes.iter().map(|n| n.c_min).fold(f64::INFINITY, f64::min);
    let lambda_max = nodes.iter().map(|n| n.lambda_max_qss).fold(f64::NEG_INFINITY, f64::max);
    let incoherence = nodes.iter().map(|n| n.incoherence).fold(0.0, f64::max);
    let thresholds = lambda.map(|l| theorem_thresholds(graph, l)).transpose()?;
    Ok(TheoryReport {
        theta_tilde,
        theta_tilde_min: params.theta_tilde_min().ok_or_else(|| invalid("the graph has no edges"))?,
        c_min,
        alpha: 1.0 - incoherence,
        lambda_max,
        nodes,
        thresholds,
    })
}
