//! Test-only oracles, independent of the library's solver paths.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Exact Lasso optimum of `½·c − bᵀθ + ½ θᵀGθ + λ‖θ‖₁` by sign-pattern enumeration.
///
/// Every pattern in {−1, 0, +1}^m fixes a support `A` and signs `s`; the
/// stationary point of the smooth problem on `A`, `G_AA θ_A = b_A − λ s_A`, is a
/// candidate when its signs agree with `s`. Some optimal solution has linearly
/// independent active columns, so its pattern yields a nonsingular system and
/// the minimum over candidates is the optimum.
pub fn lasso_sign_pattern_optimum(gram: &DMatrix<f64>, b: &DVector<f64>, c: f64, lambda: f64) -> (f64, DVector<f64>) {
    let m = b.len();
    let mut best = (f64::INFINITY, DVector::zeros(m));
    let patterns = 3usize.pow(m as u32);
    for code in 0..patterns {
        let mut signs = vec![0i8; m];
        let mut k = code;
        for s in signs.iter_mut() {
            *s = (k % 3) as i8 - 1;
            k /= 3;
        }
        let support: Vec<usize> = (0..m).filter(|&i| signs[i] != 0).collect();
        let mut theta = DVector::zeros(m);
        if !support.is_empty() {
            let a = DMatrix::from_fn(support.len(), support.len(), |i, j| gram[(support[i], support[j])]);
            let rhs = DVector::from_fn(support.len(), |i, _| b[support[i]] - lambda * signs[support[i]] as f64);
            let lu = a.clone().lu();
            let Some(sol) = lu.solve(&rhs) else { continue };
            // Reject near-singular supports whose solve is not trustworthy.
            if (&a * &sol - &rhs).amax() > 1e-9 {
                continue;
            }
            if support
                .iter()
                .enumerate()
                .any(|(i, &t)| sol[i] * signs[t] as f64 <= 0.0)
            {
                continue;
            }
            for (i, &t) in support.iter().enumerate() {
                theta[t] = sol[i];
            }
        }
        let value = 0.5 * c - b.dot(&theta) + 0.5 * theta.dot(&(gram * &theta)) + lambda * theta.lp_norm(1);
        if value < best.0 {
            best = (value, theta);
        }
    }
    best
}

/// Product of `tanh(J_e)` along the unique tree path, found by walking toward `t`.
pub fn tree_path_product(graph: &ising_lasso::graph::SignedGraph, r: usize, t: usize) -> f64 {
    let dist = graph.distances_from(t);
    if dist[r].is_none() {
        return 0.0;
    }
    let mut product = 1.0;
    let mut u = r;
    while u != t {
        let next = *graph
            .neighbors(u)
            .iter()
            .find(|&&v| dist[v].map(|dv| dv + 1) == dist[u])
            .unwrap();
        product *= graph.coupling(u, next).unwrap().tanh();
        u = next;
    }
    product
}

/// Symmetric eigenvalues by cyclic Jacobi rotations (independent of nalgebra's solver).
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Random ±1 matrix with mild column correlation, for solver fixtures.
pub fn random_spin_rows(n: usize, p: usize, seed: u64) -> Vec<Vec<i8>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut row = Vec::with_capacity(p);
            let mut prev: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
            for _ in 0..p {
                // Copy the previous spin with probability 0.65 to induce correlation.
                let v = if rng.random_bool(0.65) { prev } else if rng.random_bool(0.5) { 1 } else { -1 };
                row.push(v);
                prev = v;
            }
            row
        })
        .collect()
}

/// Random tree with couplings drawn uniformly from `[−0.6, −0.05] ∪ [0.05, 0.6]`.
pub fn random_paramagnetic_tree(p: usize, seed: u64) -> ising_lasso::graph::SignedGraph {
    use rand::{Rng, SeedableRng};
    let mut g = ising_lasso::graph::generate_random_tree(p, 4, seed).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
    let values: Vec<f64> = (0..g.num_edges())
        .map(|_| {
            let magnitude = rng.random_range(0.05..=0.6);
            if rng.random_bool(0.5) { magnitude } else { -magnitude }
        })
        .collect();
    g.set_couplings(values).unwrap();
    g
}
