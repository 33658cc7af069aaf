//! Graph families and coupling assignment.
//!
//! A [`SignedGraph`] stores one coupling `J_e` per unordered edge. The Ising
//! weight of a configuration is `exp(sum over edges of J_e x_r x_t)`, so each
//! edge is counted once; under this convention the covariance across a single
//! isolated edge is `tanh(J_e)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::seeded;

/// Retry cap for the pairing-model generator.
pub const RR_RETRY_LIMIT: usize = 1000;

/// Sign of a nonzero coupling or coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    /// `None` for zero (and NaN).
    pub fn of(x: f64) -> Option<Sign> {
        if x > 0.0 {
            Some(Sign::Plus)
        } else if x < 0.0 {
            Some(Sign::Minus)
        } else {
            None
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Minus => -1,
            Sign::Plus => 1,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, Self::Error> {
        match v {
            -1 => Ok(Sign::Minus),
            1 => Ok(Sign::Plus),
            other => Err(format!("sign must be -1 or +1, got {other}")),
        }
    }
}

/// Undirected simple graph with optional per-edge couplings.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedGraph {
    p: usize,
    /// Sorted, each pair stored once with `r < t`.
    edges: Vec<(usize, usize)>,
    /// Aligned with `edges`; every value nonzero and finite.
    couplings: Option<Vec<f64>>,
    /// Sorted neighbour lists; doubles as the degree cache.
    adjacency: Vec<Vec<usize>>,
}

impl SignedGraph {
    /// Build a graph without couplings. Pairs may be given in either order.
    pub fn new(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(invalid(format!("self-loop at vertex {a}")));
            }
            if a >= p || b >= p {
                return Err(invalid(format!("edge ({a},{b}) out of range for p = {p}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(invalid(format!("duplicate edge ({a},{b})")));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); p];
        for &(r, t) in &edges {
            adjacency[r].push(t);
            adjacency[t].push(r);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(SignedGraph {
            p,
            edges,
            couplings: None,
            adjacency,
        })
    }

    /// Graph with no edges; every coupling is zero, so couplings count as assigned.
    pub fn edgeless(p: usize) -> Self {
        SignedGraph {
            p,
            edges: Vec::new(),
            couplings: Some(Vec::new()),
            adjacency: vec![Vec::new(); p],
        }
    }

    /// Build a graph from `(r, t, J)` triples.
    pub fn with_couplings(
        p: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let triples: Vec<_> = edges.into_iter().collect();
        let mut graph = SignedGraph::new(p, triples.iter().map(|&(r, t, _)| (r, t)))?;
        let mut values = vec![0.0; graph.edges.len()];
        for &(r, t, j) in &triples {
            let idx = graph.edge_index(r, t).expect("edge was just inserted");
            values[idx] = j;
        }
        graph.set_couplings(values)?;
        Ok(graph)
    }

    /// Replace all couplings. `values` is aligned with [`SignedGraph::edges`].
    pub fn set_couplings(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} couplings for {} edges",
                values.len(),
                self.edges.len()
            )));
        }
        if let Some((i, j)) = values
            .iter()
            .enumerate()
            .find(|(_, j)| **j == 0.0 || !j.is_finite())
        {
            let (r, t) = self.edges[i];
            return Err(invalid(format!(
                "coupling on edge ({r},{t}) must be nonzero and finite, got {j}"
            )));
        }
        self.couplings = Some(values);
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, r: usize) -> &[usize] {
        &self.adjacency[r]
    }

    pub fn degree(&self, r: usize) -> usize {
        self.adjacency[r].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Maximum vertex degree `d`.
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_couplings(&self) -> bool {
        self.couplings.is_some()
    }

    pub fn couplings(&self) -> Option<&[f64]> {
        self.couplings.as_deref()
    }

    pub fn edge_index(&self, r: usize, t: usize) -> Option<usize> {
        self.edges.binary_search(&(r.min(t), r.max(t))).ok()
    }

    pub fn has_edge(&self, r: usize, t: usize) -> bool {
        self.edge_index(r, t).is_some()
    }

    /// Coupling on `(r, t)`; zero for non-adjacent pairs.
    pub fn coupling(&self, r: usize, t: usize) -> Result<f64> {
        let couplings = self.couplings.as_ref().ok_or(Error::CouplingsUnassigned)?;
        Ok(self.edge_index(r, t).map_or(0.0, |i| couplings[i]))
    }

    /// `(r, t, J)` with `r < t`, in edge order.
    pub fn weighted_edges(&self) -> Result<Vec<(usize, usize, f64)>> {
        let couplings = self.couplings.as_ref().ok_or(Error::CouplingsUnassigned)?;
        Ok(self
            .edges
            .iter()
            .zip(couplings)
            .map(|(&(r, t), &j)| (r, t, j))
            .collect())
    }

    /// Per-vertex `(neighbour, J)` lists, used by the sampler's inner loop.
    pub fn weighted_adjacency(&self) -> Result<Vec<Vec<(usize, f64)>>> {
        let mut adj = vec![Vec::new(); self.p];
        for (r, t, j) in self.weighted_edges()? {
            adj[r].push((t, j));
            adj[t].push((r, j));
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(t, _)| t);
        }
        Ok(adj)
    }

    /// Smallest |J| over edges (`None` for an edgeless graph).
    pub fn theta_min(&self) -> Option<f64> {
        self.couplings
            .as_ref()?
            .iter()
            .map(|j| j.abs())
            .min_by(f64::total_cmp)
    }

    pub fn theta_max(&self) -> Option<f64> {
        self.couplings
            .as_ref()?
            .iter()
            .map(|j| j.abs())
            .max_by(f64::total_cmp)
    }

    /// No cycles (every component is a tree).
    pub fn is_acyclic(&self) -> bool {
        let mut uf = UnionFind::new(self.p);
        self.edges.iter().all(|&(r, t)| uf.union(r, t))
    }

    /// Connected and acyclic.
    pub fn is_tree(&self) -> bool {
        self.p > 0 && self.num_edges() + 1 == self.p && self.is_acyclic()
    }

    /// `E*`: the sign of every edge coupling.
    pub fn signed_edge_set(&self) -> Result<BTreeMap<(usize, usize), Sign>> {
        Ok(self
            .weighted_edges()?
            .into_iter()
            .map(|(r, t, j)| ((r, t), Sign::of(j).expect("couplings are nonzero")))
            .collect())
    }

    /// `N±(r)`: neighbours of `r` keyed to the sign of their coupling.
    pub fn signed_neighbors(&self, r: usize) -> Result<BTreeMap<usize, Sign>> {
        let couplings = self.couplings.as_ref().ok_or(Error::CouplingsUnassigned)?;
        Ok(self.adjacency[r]
            .iter()
            .map(|&t| {
                let j = couplings[self.edge_index(r, t).unwrap()];
                (t, Sign::of(j).expect("couplings are nonzero"))
            })
            .collect())
    }

    /// Breadth-first distances from `source`; `None` marks unreachable vertices.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.p];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Shortest-path edge count between distinct vertices; `Ok(None)` if unreachable.
    pub fn path_length(&self, r: usize, t: usize) -> Result<Option<usize>> {
        if r >= self.p || t >= self.p {
            return Err(invalid(format!("vertex out of range for p = {}", self.p)));
        }
        if r == t {
            return Err(invalid("path_length requires r != t"));
        }
        Ok(self.distances_from(r)[t])
    }

    pub fn to_file(&self) -> GraphFile {
        let couplings = self.couplings.as_deref();
        GraphFile {
            p: self.p,
            edges: self
                .edges
                .iter()
                .enumerate()
                .map(|(i, &(r, t))| (r, t, couplings.map(|c| c[i])))
                .collect(),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let mut graph = SignedGraph::new(file.p, file.edges.iter().map(|&(r, t, _)| (r, t)))?;
        let assigned = file.edges.iter().filter(|e| e.2.is_some()).count();
        if assigned == 0 {
            return Ok(graph);
        }
        if assigned != file.edges.len() {
            return Err(Error::Parse(
                "either every edge or no edge may carry a coupling".into(),
            ));
        }
        let mut values = vec![0.0; graph.num_edges()];
        for &(r, t, j) in &file.edges {
            values[graph.edge_index(r, t).unwrap()] = j.unwrap();
        }
        graph.set_couplings(values)?;
        Ok(graph)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        SignedGraph::from_file(&file)
    }
}

/// On-disk graph: `{p, edges: [[r, t, coupling], ...]}` with `r < t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub p: usize,
    pub edges: Vec<(usize, usize, Option<f64>)>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// False if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Random `d`-regular simple graph from the pairing (configuration) model.
///
/// Stubs are shuffled and paired; a pairing containing a self-loop or a repeated
/// edge is discarded and redrawn, up to [`RR_RETRY_LIMIT`] times.
pub fn generate_random_regular(p: usize, d: usize, seed: u64) -> Result<SignedGraph> {
    if (p * d) % 2 == 1 {
        return Err(Error::Infeasible(format!(
            "p·d must be even (p = {p}, d = {d})"
        )));
    }
    if d < 3 {
        return Err(invalid(format!("degree must be at least 3, got {d}")));
    }
    if d >= p {
        return Err(invalid(format!("degree {d} must be smaller than p = {p}")));
    }
    let mut rng = seeded(seed);
    let mut stubs: Vec<usize> = (0..p).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    'attempt: for _ in 0..RR_RETRY_LIMIT {
        stubs.shuffle(&mut rng);
        let mut seen = BTreeSet::new();
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b || !seen.insert((a.min(b), a.max(b))) {
                continue 'attempt;
            }
        }
        return SignedGraph::new(p, seen);
    }
    Err(Error::RetryLimit {
        limit: RR_RETRY_LIMIT,
    })
}

/// Periodic `rows × cols` square lattice (torus); vertex `i·cols + j`.
pub fn generate_grid_periodic(rows: usize, cols: usize) -> Result<SignedGraph> {
    if rows < 3 || cols < 3 {
        return Err(invalid(format!(
            "periodic grid needs rows, cols >= 3 (got {rows} x {cols}); smaller sizes wrap into multi-edges"
        )));
    }
    let id = |i: usize, j: usize| i * cols + j;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            edges.push((id(i, j), id(i, (j + 1) % cols)));
            edges.push((id(i, j), id((i + 1) % rows, j)));
        }
    }
    SignedGraph::new(rows * cols, edges)
}

/// Star with hub 0 joined to vertices `1..=d`; the rest stay isolated.
pub fn generate_star(p: usize, d: usize) -> Result<SignedGraph> {
    if d == 0 || d >= p {
        return Err(invalid(format!(
            "star degree must satisfy 1 <= d <= p-1 (p = {p}, d = {d})"
        )));
    }
    SignedGraph::new(p, (1..=d).map(|leaf| (0, leaf)))
}

/// `⌈0.1·p⌉`, the linear-growth star degree.
pub fn star_degree_linear(p: usize) -> usize {
    (p as f64 * 0.1).ceil() as usize
}

/// `⌈ln p⌉`, the logarithmic-growth star degree (natural logarithm).
pub fn star_degree_log(p: usize) -> usize {
    (p as f64).ln().ceil() as usize
}

/// Uniform-attachment random tree on `p` vertices with max degree `<= d_max`.
///
/// Vertex `i` attaches to a uniformly chosen earlier vertex that still has
/// spare degree.
pub fn generate_random_tree(p: usize, d_max: usize, seed: u64) -> Result<SignedGraph> {
    if p < 2 || d_max < 2 {
        return Err(invalid(format!(
            "random tree needs p >= 2 and d_max >= 2 (got p = {p}, d_max = {d_max})"
        )));
    }
    let mut rng = seeded(seed);
    let mut degree = vec![0usize; p];
    let mut open: Vec<usize> = vec![0];
    let mut edges = Vec::with_capacity(p - 1);
    for v in 1..p {
        let slot = rng.random_range(0..open.len());
        let u = open[slot];
        edges.push((u, v));
        degree[u] += 1;
        degree[v] += 1;
        if degree[u] == d_max {
            open.swap_remove(slot);
        }
        open.push(v);
    }
    SignedGraph::new(p, edges)
}

/// Random tree whose internal vertices all have degree exactly `d`.
///
/// Starts from a `d`-star and repeatedly picks a random leaf and gives it
/// `d − 1` children. Interior vertices see exactly the local structure of a
/// `d`-regular graph, which makes this the tree surrogate for random regular
/// graphs. Requires `p = d + 1 + k(d − 1)` for some `k >= 0`.
pub fn generate_regular_tree(p: usize, d: usize, seed: u64) -> Result<SignedGraph> {
    if d < 2 {
        return Err(invalid(format!("degree must be at least 2, got {d}")));
    }
    if p < d + 1 || (p - d - 1) % (d - 1) != 0 {
        return Err(Error::Infeasible(format!(
            "a tree with internal degree {d} needs p = {} + k·{} vertices, got p = {p}",
            d + 1,
            d - 1
        )));
    }
    let mut rng = seeded(seed);
    let mut edges: Vec<(usize, usize)> = (1..=d).map(|leaf| (0, leaf)).collect();
    let mut leaves: Vec<usize> = (1..=d).collect();
    let mut next = d + 1;
    while next < p {
        let slot = rng.random_range(0..leaves.len());
        let parent = leaves.swap_remove(slot);
        for _ in 0..d - 1 {
            edges.push((parent, next));
            leaves.push(next);
            next += 1;
        }
    }
    SignedGraph::new(p, edges)
}

/// How couplings are drawn for each edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingScheme {
    /// Every edge gets `theta0`.
    UniformPositive { theta0: f64 },
    /// Every edge gets `±theta0` with independent fair signs.
    MixedSign { theta0: f64 },
    /// Every edge gets `amplitude / sqrt(d)` with `d` the graph's max degree.
    DegreeScaled { amplitude: f64 },
}

impl CouplingScheme {
    fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            CouplingScheme::UniformPositive { theta0 } => ("theta0", theta0),
            CouplingScheme::MixedSign { theta0 } => ("theta0", theta0),
            CouplingScheme::DegreeScaled { amplitude } => ("amplitude", amplitude),
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("{name} must be positive, got {v}")))
        }
    }

    /// Coupling magnitude this scheme assigns on a graph with max degree `d`.
    pub fn magnitude(&self, d: usize) -> f64 {
        match *self {
            CouplingScheme::UniformPositive { theta0 } | CouplingScheme::MixedSign { theta0 } => {
                theta0
            }
            CouplingScheme::DegreeScaled { amplitude } => amplitude / (d as f64).sqrt(),
        }
    }
}

/// Assign couplings to every edge according to `scheme`.
pub fn assign_couplings(
    mut graph: SignedGraph,
    scheme: CouplingScheme,
    seed: u64,
) -> Result<SignedGraph> {
    scheme.validate()?;
    if graph.num_edges() == 0 {
        return Err(invalid("cannot assign couplings to a graph without edges"));
    }
    let magnitude = scheme.magnitude(graph.max_degree());
    let values = match scheme {
        CouplingScheme::MixedSign { .. } => {
            let mut rng = seeded(seed);
            (0..graph.num_edges())
                .map(|_| {
                    if rng.random_bool(0.5) {
                        magnitude
                    } else {
                        -magnitude
                    }
                })
                .collect()
        }
        _ => vec![magnitude; graph.num_edges()],
    };
    graph.set_couplings(values)?;
    Ok(graph)
}
