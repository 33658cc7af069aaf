//! Spin configurations: heat-bath Gibbs sampling and exact enumeration.

use std::fmt::Write as _;
use std::io::{BufRead, Read};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::graph::SignedGraph;
use crate::rng::seeded;

/// Largest `p` accepted by [`exact_enumerate`].
pub const EXACT_ENUMERATION_CAP: usize = 20;

const BINARY_MAGIC: &[u8; 4] = b"ISNG";

/// `n × p` matrix of ±1 spins, row-major, one row per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMatrix {
    n: usize,
    p: usize,
    data: Vec<i8>,
    provenance: String,
}

impl SampleMatrix {
    pub fn from_flat(n: usize, p: usize, data: Vec<i8>, provenance: impl Into<String>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("a sample matrix needs at least one row"));
        }
        if data.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {n} x {p} sample matrix",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v != 1 && v != -1) {
            return Err(invalid(format!("spin values must be ±1, found {v}")));
        }
        Ok(SampleMatrix {
            n,
            p,
            data,
            provenance: provenance.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged sample rows".into()));
        }
        SampleMatrix::from_flat(rows.len(), p, rows.concat(), "rows")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.data[i * self.p + j]
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.data.chunks_exact(self.p)
    }

    /// Digest of the sampler configuration that produced the matrix, or a tag
    /// naming where it was loaded from.
    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// First `n` rows as a new matrix.
    pub fn head(&self, n: usize) -> Result<SampleMatrix> {
        if n == 0 || n > self.n {
            return Err(invalid(format!("cannot take {n} of {} rows", self.n)));
        }
        SampleMatrix::from_flat(n, self.p, self.data[..n * self.p].to_vec(), self.provenance.clone())
    }

    /// Empirical `(1/n) Σ_i x⁽ⁱ⁾ x⁽ⁱ⁾ᵀ` over all `p` spins. The diagonal is exactly one.
    pub fn second_moments(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut counts = vec![0i64; p * p];
        for row in self.rows() {
            for i in 0..p {
                let xi = row[i] as i64;
                let base = i * p;
                for j in (i + 1)..p {
                    counts[base + j] += xi * row[j] as i64;
                }
            }
        }
        let n = self.n as f64;
        DMatrix::from_fn(p, p, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => counts[i * p + j] as f64 / n,
            std::cmp::Ordering::Greater => counts[j * p + i] as f64 / n,
        })
    }

    /// Text format: a `p=<p> n=<n>` header, then one line of space-separated ±1 per sample.
    pub fn to_text(&self) -> String {
        let mut out = format!("p={} n={}\n", self.p, self.n);
        for row in self.rows() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty sample file".into()))??;
        let (mut p, mut n) = (None, None);
        for token in header.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token {token:?}")))?;
            let value: usize = value
                .parse()
                .map_err(|_| Error::Parse(format!("bad header value {token:?}")))?;
            match key {
                "p" => p = Some(value),
                "n" => n = Some(value),
                _ => return Err(Error::Parse(format!("unknown header key {key:?}"))),
            }
        }
        let (p, n) = match (p, n) {
            (Some(p), Some(n)) => (p, n),
            _ => return Err(Error::Parse("header must be \"p=<p> n=<n>\"".into())),
        };
        let mut data = Vec::with_capacity(n * p);
        let mut rows = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for token in line.split_whitespace() {
                let v = match token {
                    "1" | "+1" => 1,
                    "-1" => -1,
                    other => return Err(Error::Parse(format!("bad spin value {other:?}"))),
                };
                data.push(v);
            }
            if data.len() - before != p {
                return Err(Error::Parse(format!(
                    "row {rows} has {} spins, expected {p}",
                    data.len() - before
                )));
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Parse(format!("header declares n = {n} but found {rows} rows")));
        }
        SampleMatrix::from_flat(n, p, data, "text")
    }

    /// Binary format: `ISNG`, `u32` n, `u32` p (little endian), then the `n·p`
    /// spins as one row-major bit stream, least significant bit first, bit set = +1.
    pub fn to_binary(&self) -> Result<Vec<u8>> {
        let n = u32::try_from(self.n).map_err(|_| invalid("n exceeds u32"))?;
        let p = u32::try_from(self.p).map_err(|_| invalid("p exceeds u32"))?;
        let mut out = Vec::with_capacity(12 + self.data.len().div_ceil(8));
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&p.to_le_bytes());
        for chunk in self.data.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (k, &v)| if v == 1 { acc | (1 << k) } else { acc });
            out.push(byte);
        }
        Ok(out)
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
            return Err(Error::Parse("missing ISNG header".into()));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let p = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        let total = n * p;
        if body.len() != total.div_ceil(8) {
            return Err(Error::Parse(format!(
                "binary body has {} bytes, expected {}",
                body.len(),
                total.div_ceil(8)
            )));
        }
        let data = (0..total)
            .map(|k| if body[k / 8] >> (k % 8) & 1 == 1 { 1 } else { -1 })
            .collect();
        SampleMatrix::from_flat(n, p, data, "binary")
    }

    /// Read either format, detected by the magic bytes.
    pub fn read_any(mut reader: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.starts_with(BINARY_MAGIC) {
            SampleMatrix::from_binary(&bytes)
        } else {
            SampleMatrix::from_text(bytes.as_slice())
        }
    }
}

/// Gibbs chain settings; `thinning_sweeps` full sweeps separate retained samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in_sweeps: usize,
    pub thinning_sweeps: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            seed,
            ..Default::default()
        }
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in_sweeps: 1000,
            thinning_sweeps: 10,
            seed: 0,
        }
    }
}

/// Draw `n` samples by sequential single-site heat-bath sweeps.
///
/// Spin `r` is set to +1 with probability `1 / (1 + exp(-2 h_r))`, where
/// `h_r = Σ_{t∈N(r)} J_rt x_t`. The chain starts from a uniform random state.
pub fn gibbs_sample(graph: &SignedGraph, n: usize, config: SamplerConfig) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(invalid("sample count n must be at least 1"));
    }
    if config.thinning_sweeps == 0 {
        return Err(invalid("thinning_sweeps must be at least 1"));
    }
    let adjacency = graph.weighted_adjacency()?;
    let p = graph.p();
    let mut rng = seeded(config.seed);
    let mut state: Vec<i8> = (0..p)
        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
        .collect();

    let sweep = |state: &mut [i8], rng: &mut crate::rng::Rng| {
        for r in 0..p {
            let h: f64 = adjacency[r].iter().map(|&(t, j)| j * state[t] as f64).sum();
            let p_plus = 1.0 / (1.0 + (-2.0 * h).exp());
            state[r] = if rng.random::<f64>() < p_plus { 1 } else { -1 };
        }
    };

    for _ in 0..config.burn_in_sweeps {
        sweep(&mut state, &mut rng);
    }
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n {
        for _ in 0..config.thinning_sweeps {
            sweep(&mut state, &mut rng);
        }
        data.extend_from_slice(&state);
    }
    SampleMatrix::from_flat(n, p, data, provenance_digest(graph, &config))
}

fn provenance_digest(graph: &SignedGraph, config: &SamplerConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(graph.to_json().as_bytes());
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    let digest = hasher.finalize();
    format!("gibbs:{}", hex::encode(&digest[..8]))
}

/// Exact moments of the Ising distribution from full enumeration.
#[derive(Clone, Debug)]
pub struct ExactMoments {
    /// `E{x_r}`.
    pub mean: DVector<f64>,
    /// `E{x xᵀ}`; unit diagonal.
    pub second_moment: DMatrix<f64>,
    /// `E{x xᵀ} − E{x}E{x}ᵀ`.
    pub covariance: DMatrix<f64>,
    pub log_partition: f64,
}

/// Sum over all `2^p` configurations. `p` is capped at [`EXACT_ENUMERATION_CAP`].
pub fn exact_enumerate(graph: &SignedGraph) -> Result<ExactMoments> {
    let p = graph.p();
    if p > EXACT_ENUMERATION_CAP {
        return Err(Error::TooLarge {
            p,
            cap: EXACT_ENUMERATION_CAP,
        });
    }
    let edges = graph.weighted_edges()?;
    // Energies lie in [-shift, shift]; weights are stored as exp(E - shift).
    let shift: f64 = edges.iter().map(|e| e.2.abs()).sum();

    let mut total = 0.0;
    let mut first = vec![0.0; p];
    let mut pair = vec![0.0; p * p];
    let mut x = vec![0.0f64; p];
    for state in 0u32..(1u32 << p) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if state >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        let energy: f64 = edges.iter().map(|&(r, t, j)| j * x[r] * x[t]).sum();
        let w = (energy - shift).exp();
        total += w;
        for i in 0..p {
            let wi = w * x[i];
            first[i] += wi;
            let base = i * p;
            for j in (i + 1)..p {
                pair[base + j] += wi * x[j];
            }
        }
    }

    let mean = DVector::from_iterator(p, first.iter().map(|v| v / total));
    let second_moment = DMatrix::from_fn(p, p, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => pair[i * p + j] / total,
        std::cmp::Ordering::Greater => pair[j * p + i] / total,
    });
    let covariance = &second_moment - &mean * mean.transpose();
    Ok(ExactMoments {
        mean,
        second_moment,
        covariance,
        log_partition: shift + total.ln(),
    })
}

/// Column means of the sample matrix.
pub fn estimate_magnetization(samples: &SampleMatrix) -> Vec<f64> {
    let mut sums = vec![0i64; samples.p()];
    for row in samples.rows() {
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += v as i64;
        }
    }
    let n = samples.n() as f64;
    sums.into_iter().map(|s| s as f64 / n).collect()
}

/// Spins whose empirical magnetization exceeds `3 · 5/√n`, hinting that the
/// chain is not in the paramagnetic phase or has not mixed.
pub fn magnetization_alerts(samples: &SampleMatrix) -> Vec<usize> {
    let limit = 15.0 / (samples.n() as f64).sqrt();
    estimate_magnetization(samples)
        .iter()
        .enumerate()
        .filter(|(_, m)| m.abs() > limit)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_random_tree, generate_star, SignedGraph};
    use approx::assert_abs_diff_eq;

    fn path3(j: f64) -> SignedGraph {
        SignedGraph::with_couplings(3, [(0, 1, j), (1, 2, j)]).unwrap()
    }

    #[test]
    fn single_edge_correlation_is_tanh() {
        let g = SignedGraph::with_couplings(2, [(0, 1, 0.4)]).unwrap();
        let m = exact_enumerate(&g).unwrap();
        assert_abs_diff_eq!(m.covariance[(0, 1)], 0.4f64.tanh(), epsilon = 1e-15);
        assert_abs_diff_eq!(m.covariance[(0, 1)], 0.379949, epsilon = 1e-6);
        // Z = 2e^J + 2e^-J = 4 cosh J
        assert_abs_diff_eq!(m.log_partition, (4.0 * 0.4f64.cosh()).ln(), epsilon = 1e-14);
    }

    #[test]
    fn path_covariances() {
        let m = exact_enumerate(&path3(0.4)).unwrap();
        assert_abs_diff_eq!(m.covariance[(0, 2)], 0.4f64.tanh().powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(m.covariance[(0, 2)], 0.144361, epsilon = 1e-6);
        assert!(m.mean.iter().all(|v| v.abs() < 1e-15));
        assert_abs_diff_eq!(m.covariance, m.covariance.transpose(), epsilon = 0.0);
    }

    #[test]
    fn zero_couplings_give_identity() {
        let m = exact_enumerate(&SignedGraph::edgeless(3)).unwrap();
        assert_eq!(m.covariance, DMatrix::identity(3, 3));
        let m = exact_enumerate(&SignedGraph::edgeless(5)).unwrap();
        assert_eq!(m.covariance, DMatrix::identity(5, 5));
        assert_eq!(m.mean, DVector::zeros(5));
        assert_abs_diff_eq!(m.log_partition, 5.0 * 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn enumeration_cap() {
        let g = SignedGraph::edgeless(21);
        assert!(matches!(exact_enumerate(&g), Err(Error::TooLarge { p: 21, cap: 20 })));
    }

    #[test]
    fn tree_covariance_is_path_product() {
        let mut g = generate_random_tree(9, 3, 5).unwrap();
        let values: Vec<f64> = (0..g.num_edges())
            .map(|k| if k % 2 == 0 { 0.3 + 0.05 * k as f64 } else { -0.25 })
            .collect();
        g.set_couplings(values).unwrap();
        let m = exact_enumerate(&g).unwrap();
        for r in 0..9 {
            for t in 0..9 {
                if r == t {
                    continue;
                }
                let expected = path_product(&g, r, t);
                assert_abs_diff_eq!(m.covariance[(r, t)], expected, epsilon = 1e-12);
            }
        }
    }

    // Walk the unique tree path by repeatedly stepping to the neighbour closer to `t`.
    fn path_product(g: &SignedGraph, r: usize, t: usize) -> f64 {
        let dist = g.distances_from(t);
        let mut product = 1.0;
        let mut u = r;
        while u != t {
            let next = *g
                .neighbors(u)
                .iter()
                .find(|&&v| dist[v].unwrap() + 1 == dist[u].unwrap())
                .unwrap();
            product *= g.coupling(u, next).unwrap().tanh();
            u = next;
        }
        product
    }

    #[test]
    fn gibbs_rejects_bad_input() {
        let g = path3(0.2);
        assert!(gibbs_sample(&g, 0, SamplerConfig::default()).is_err());
        let bare = generate_star(3, 2).unwrap();
        assert!(matches!(
            gibbs_sample(&bare, 5, SamplerConfig::default()),
            Err(Error::CouplingsUnassigned)
        ));
    }

    #[test]
    fn gibbs_is_deterministic() {
        let g = path3(0.4);
        let cfg = SamplerConfig {
            burn_in_sweeps: 10,
            thinning_sweeps: 2,
            seed: 99,
        };
        let a = gibbs_sample(&g, 50, cfg).unwrap();
        assert_eq!(a, gibbs_sample(&g, 50, cfg).unwrap());
        assert_ne!(a, gibbs_sample(&g, 50, SamplerConfig { seed: 100, ..cfg }).unwrap());
    }

    #[test]
    fn free_spins_are_fair_coins() {
        let g = SignedGraph::edgeless(4);
        let n = 100_000;
        let s = gibbs_sample(&g, n, SamplerConfig { burn_in_sweeps: 0, thinning_sweeps: 1, seed: 3 })
            .unwrap();
        for m in estimate_magnetization(&s) {
            assert!(m.abs() < 0.02, "mean {m}");
        }
        let q = s.second_moments();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(q[(i, j)].abs() < 0.02);
                }
            }
        }

        // Chi-square on the joint of spins (0, 1): four cells, three degrees of freedom.
        let mut cells = [0usize; 4];
        for row in s.rows() {
            cells[((row[0] + 1) / 2 * 2 + (row[1] + 1) / 2) as usize] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = cells
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // Upper 0.001 quantile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 16.266, "chi2 = {chi2}");
    }

    #[test]
    fn magnetization_of_fixed_matrices() {
        let ones = SampleMatrix::from_flat(4, 3, vec![1; 12], "t").unwrap();
        assert_eq!(estimate_magnetization(&ones), vec![1.0; 3]);
        // 15/sqrt(4) = 7.5, so no column of a 4-row matrix can trigger an alert.
        assert!(magnetization_alerts(&ones).is_empty());
        let balanced = SampleMatrix::from_rows(&[vec![1, -1], vec![-1, 1]]).unwrap();
        assert_eq!(estimate_magnetization(&balanced), vec![0.0, 0.0]);
    }

    #[test]
    fn second_moments_unit_diagonal_and_rank_one() {
        let s = SampleMatrix::from_rows(&[vec![1, -1, 1]]).unwrap();
        let q = s.second_moments();
        let x = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        assert_eq!(q, &x * x.transpose());
    }

    #[test]
    fn text_and_binary_formats() {
        let s = SampleMatrix::from_rows(&[vec![1, -1, 1], vec![-1, -1, 1]]).unwrap();
        let text = s.to_text();
        assert_eq!(text, "p=3 n=2\n1 -1 1\n-1 -1 1\n");
        let back = SampleMatrix::from_text(text.as_bytes()).unwrap();
        assert_eq!(back.row(1), s.row(1));
        let bin = s.to_binary().unwrap();
        assert_eq!(&bin[..4], b"ISNG");
        assert_eq!(bin[4..12], [2, 0, 0, 0, 3, 0, 0, 0]);
        // bits, LSB first: + - + - - +  -> 0b100101
        assert_eq!(bin[12..], [0b0010_0101]);
        let back = SampleMatrix::read_any(bin.as_slice()).unwrap();
        assert_eq!(back.to_text(), text);
        assert!(SampleMatrix::from_text("p=2 n=2\n1 1\n".as_bytes()).is_err());
        assert!(SampleMatrix::from_text("p=2 n=1\n1 0\n".as_bytes()).is_err());
    }
}
