mod common;

use ising_lasso::bethe::rescaled_theta;
use ising_lasso::graph::{assign_couplings, generate_regular_tree, CouplingScheme};
use ising_lasso::sampler::{gibbs_sample, SamplerConfig};
use ising_lasso::solvers::{extract_signed_neighborhood, solve_lasso, NeighborhoodProblem, SolverConfig};
use ising_lasso::witness::*;
use proptest::prelude::*;

fn regular_tree(p: usize, seed: u64) -> ising_lasso::graph::SignedGraph {
    assign_couplings(generate_regular_tree(p, 3, seed).unwrap(), CouplingScheme::MixedSign { theta0: 0.4 }, seed + 1)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn certificate_fields_are_consistent(seed in 0u64..1000, p in 5usize..10, kappa in 0.3f64..3.0) {
        let graph = common::random_paramagnetic_tree(p, seed);
        let n = 800;
        let samples = gibbs_sample(&graph, n, SamplerConfig::with_seed(seed + 7)).unwrap();
        let lambda = kappa * ((p as f64).ln() / n as f64).sqrt();
        for r in (0..p).filter(|&r| graph.degree(r) > 0) {
            let Ok(cert) = construct_witness(&samples, &graph, r, lambda, &WitnessOptions::default()) else { continue };
            prop_assert_eq!(cert.support.len() + cert.complement.len(), p - 1);
            prop_assert!(cert.stationarity_residual <= cert.solver_tol + 1e-10);
            for (k, &th) in cert.theta_hat_s.iter().enumerate() {
                if th != 0.0 {
                    prop_assert_eq!(cert.z_s[k], th.signum());
                }
                prop_assert!(cert.z_s[k].abs() <= 1.0 + 1e-9);
            }
            prop_assert!(cert.all_checks()["stationarity"]);
            prop_assert_eq!(cert.c_min, cert.c_min_measured);
        }
    }

    #[test]
    fn feasible_sign_consistent_witness_implies_lasso_recovery(seed in 0u64..1000, p in 5usize..10, kappa in 0.5f64..3.0) {
        let graph = common::random_paramagnetic_tree(p, seed);
        let n = 2000;
        let samples = gibbs_sample(&graph, n, SamplerConfig::with_seed(seed + 11)).unwrap();
        let lambda = kappa * ((p as f64).ln() / n as f64).sqrt();
        for r in (0..p).filter(|&r| graph.degree(r) > 0) {
            let Ok(cert) = construct_witness(&samples, &graph, r, lambda, &WitnessOptions::default()) else { continue };
            if !(cert.strictly_feasible() && cert.sign_consistent()) {
                continue;
            }
            let problem = NeighborhoodProblem::from_samples(&samples, r, lambda).unwrap();
            let solution = solve_lasso(&problem, &SolverConfig::default()).unwrap();
            let estimate = extract_signed_neighborhood(&solution);
            prop_assert_eq!(estimate.neighbors, graph.signed_neighbors(r).unwrap());
        }
    }

    #[test]
    fn noise_moments_obey_enumerated_bounds(seed in 0u64..1000, p in 4usize..11) {
        let graph = common::random_paramagnetic_tree(p, seed);
        let d = graph.max_degree() as f64;
        for r in 0..p {
            let stats = z_statistics_exact(&graph, r).unwrap();
            for (m, s) in stats.mean.iter().zip(&stats.second_moment) {
                prop_assert!(m.abs() <= 1e-12, "mean {m}");
                prop_assert!(*s <= 1.0 + 1e-12, "second moment {s}");
            }
            prop_assert!(stats.max_abs <= d + 1e-12);
        }
    }
}

#[test]
fn population_witness_passes_every_check() {
    let graph = regular_tree(10, 3);
    for r in 0..graph.p() {
        let cert = construct_witness_population(&graph, r, 0.02, &WitnessOptions::default()).unwrap();
        assert!(cert.passes_all(), "node {r} failed {:?}", cert.failed_checks());
        assert!(cert.w_inf_norm() < 1e-12);
        assert!(cert.z_sc_inf_norm() <= 1.0 - (1.0 - 0.4f64.tanh()) + 1e-8);
    }
}

#[test]
fn large_sample_covariance_and_noise_are_tight() {
    let graph = regular_tree(10, 5);
    let n = 100_000;
    let samples = gibbs_sample(&graph, n, SamplerConfig::with_seed(17)).unwrap();
    let (r, t) = graph.edges()[0];
    let report = sample_covariance(&samples, r, graph.neighbors(r)).unwrap();
    let pos = if t < r { t } else { t - 1 };
    let expected = graph.coupling(r, t).unwrap().tanh();
    // Predictor moments exclude r, so test the edge through the full moment matrix.
    let full = samples.second_moments();
    assert!((full[(r, t)] - expected).abs() < 0.01, "{} vs {expected}", full[(r, t)]);
    assert!(report.q_n[(pos, pos)] == 1.0);
    let params = rescaled_theta(&graph).unwrap();
    for r in 0..graph.p() {
        let noise = compute_noise_vector(&samples, r, &params).unwrap();
        assert!(noise.inf_norm < 0.02, "node {r}: {}", noise.inf_norm);
    }
}

#[test]
fn tail_frequency_falls_as_samples_grow() {
    let graph = regular_tree(16, 2);
    let cfg = ProbeConfig {
        r: 0,
        c: 0.5,
        trials: 200,
        sampler: SamplerConfig { burn_in_sweeps: 200, thinning_sweeps: 5, seed: 99 },
    };
    // Fixed λ makes the event ‖W‖_∞ ≥ const, which must get rarer with n.
    let params = rescaled_theta(&graph).unwrap();
    let threshold = 0.08;
    let mut freq = Vec::new();
    for (gi, &n) in [50usize, 200, 800].iter().enumerate() {
        let mut hits = 0;
        for trial in 0..cfg.trials {
            let seed = ising_lasso::rng::derive_seed(cfg.sampler.seed, &[gi as u64, trial as u64]);
            let s = gibbs_sample(&graph, n, SamplerConfig { seed, ..cfg.sampler }).unwrap();
            if compute_noise_vector(&s, cfg.r, &params).unwrap().inf_norm >= threshold {
                hits += 1;
            }
        }
        freq.push(hits as f64 / cfg.trials as f64);
    }
    assert!(freq[0] > freq[1] && freq[1] >= freq[2], "{freq:?}");
    let rows = tail_rate_probe(&graph, &[20, 400], &cfg).unwrap();
    assert!(rows[0].lambda > rows[1].lambda);
    assert!(!rows[0].in_precondition && rows[1].in_precondition);
    let csv = probe_to_csv(&rows).unwrap();
    assert!(csv.starts_with("n,lambda,empirical_prob,bound,trials,stderr,in_precondition\n"));
    assert_eq!(csv.lines().count(), 3);
}
