mod common;

use common::{jacobi_eigenvalues, random_paramagnetic_tree, tree_path_product};
use ising_lasso::bethe::*;
use ising_lasso::sampler::exact_enumerate;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tree_covariance_matches_enumeration(p in 2usize..=12, seed in any::<u64>()) {
        let g = random_paramagnetic_tree(p, seed);
        let exact = exact_enumerate(&g).unwrap();
        let cov = tree_covariance(&g).unwrap();
        prop_assert!((&cov - &exact.covariance).amax() <= 1e-12);
        for r in 0..p {
            for t in 0..p {
                prop_assert!((cov[(r, t)] - tree_path_product(&g, r, t)).abs() <= 1e-12);
            }
        }
        let inv = bethe_inverse_covariance(&g).unwrap();
        prop_assert!((&cov * &inv - DMatrix::identity(p, p)).amax() <= 1e-10);
    }

    #[test]
    fn rescaled_target_solves_population_normal_equations(p in 3usize..=12, seed in any::<u64>()) {
        let g = random_paramagnetic_tree(p, seed);
        let exact = exact_enumerate(&g).unwrap();
        let params = rescaled_theta(&g).unwrap();
        for r in 0..p {
            let idx: Vec<usize> = (0..p).filter(|&u| u != r).collect();
            let q = DMatrix::from_fn(p - 1, p - 1, |i, j| exact.second_moment[(idx[i], idx[j])]);
            let b = DVector::from_fn(p - 1, |i, _| exact.second_moment[(r, idx[i])]);
            let solved = q.cholesky().unwrap().solve(&b);
            let closed = params.row_without(r);
            for k in 0..p - 1 {
                prop_assert!((solved[k] - closed[k]).abs() <= 1e-10);
                let t = idx[k];
                if g.has_edge(r, t) {
                    prop_assert_eq!(closed[k].signum(), g.coupling(r, t).unwrap().signum());
                } else {
                    prop_assert_eq!(closed[k], 0.0);
                }
            }
        }
    }

    #[test]
    fn single_neighbour_incoherence_is_below_tanh_max(p in 3usize..=12, seed in any::<u64>()) {
        let g = random_paramagnetic_tree(p, seed);
        let cov = tree_covariance(&g).unwrap();
        let bound = g.theta_max().unwrap().tanh();
        for r in 0..p {
            for &s in g.neighbors(r) {
                prop_assert!(incoherence_norm(&cov, r, &[s]).unwrap() <= bound + 1e-15);
            }
        }
    }
}

#[test]
fn regular_constants_match_numeric_eigendecomposition() {
    for d in [3usize, 4, 5, 8] {
        for theta0 in [0.1, 0.2, 0.4] {
            let c = rr_constants(d, theta0).unwrap();
            let t2 = theta0.tanh().powi(2);
            let q_ss = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { t2 });
            let eig = jacobi_eigenvalues(&q_ss);
            assert!((eig[0] - c.c_min).abs() <= 1e-12);
            assert!((eig[d - 1] - c.lambda_max_qss).abs() <= 1e-12);
        }
    }
}

#[test]
fn regular_tree_interior_incoherence_is_tanh() {
    use ising_lasso::graph::{assign_couplings, generate_regular_tree, CouplingScheme};
    let g = assign_couplings(generate_regular_tree(22, 3, 7).unwrap(), CouplingScheme::MixedSign { theta0: 0.4 }, 8).unwrap();
    let cov = tree_covariance(&g).unwrap();
    let rr = rr_constants(3, 0.4).unwrap();
    for r in (0..22).filter(|&r| g.degree(r) == 3) {
        let norm = incoherence_norm(&cov, r, g.neighbors(r)).unwrap();
        assert!((norm - (1.0 - rr.alpha)).abs() <= 1e-12);
    }
}
