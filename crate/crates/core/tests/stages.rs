//! Topology program, dual certificate and AR refinement on exact and
//! simulated covariances.

use nalgebra::DMatrix;

use slrid::covariance::{sample_autocov, toeplitz_lift, BlockToeplitz, CovSequence};
use slrid::data::simulate;
use slrid::model::{model_autocovariances, ArLatentModel, Topology};
use slrid::reweight::{self, build_lift, reweight_iterate, ReweightOptions};
use slrid::sparse_lowrank::{first_block_row, solve_topology, verify_kkt, TopologyOptions};

fn identity_k(n: usize, blocks: usize) -> BlockToeplitz {
    let mut lags = vec![DMatrix::zeros(n, n); blocks];
    lags[0] = DMatrix::identity(n, n);
    toeplitz_lift(&lags).unwrap()
}

#[test]
fn white_covariance_has_empty_graph_and_trivial_certificate() {
    let k = identity_k(4, 3);
    for lambda in [0.1, 0.5, 0.9] {
        let sol = solve_topology(&k, lambda, &TopologyOptions::default(), None).unwrap();
        assert!(sol.report.converged);
        assert_eq!(sol.topology.edge_count(), 0);
        // optimum is blockdiag(I, 0)
        let mut expected = DMatrix::zeros(12, 12);
        expected.view_mut((0, 0), (4, 4)).fill_with_identity();
        assert!((&sol.x - expected).norm() < 1e-5, "lambda {lambda}");
        let cert = verify_kkt(&sol, &k, lambda).unwrap();
        assert!(cert.z.iter().all(|z| z.norm() < 1e-4));
        assert!((&cert.p - DMatrix::<f64>::identity(4, 4)).norm() < 1e-4);
        assert_eq!(cert.residuals.rank, 4);
    }
}

#[test]
fn example_sweep_certificates_and_monotone_edges() {
    let m = ArLatentModel::example_one();
    let y = simulate(&m, 5000, 0).unwrap();
    let k = BlockToeplitz::from_cov(&sample_autocov(&y, 2).unwrap());
    let opts = TopologyOptions::default();
    let mut warm = None;
    let mut counts = Vec::new();
    for lambda in [0.12, 0.24, 0.36, 0.48, 0.60, 0.72, 0.84] {
        let sol = solve_topology(&k, lambda, &opts, warm.as_ref()).unwrap();
        let cert = verify_kkt(&sol, &k, lambda);
        assert!(cert.is_ok(), "lambda {lambda}: {:?}", cert.err());
        warm = Some(sol.report.warm_start());
        counts.push(sol.topology.edge_count());
        if lambda == 0.60 {
            let truth = Topology::from_edges(10, [(0, 5), (3, 8), (2, 9), (1, 4), (4, 6), (0, 7)]).unwrap();
            assert_eq!(sol.topology, truth);
        }
    }
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
}

#[test]
fn invalid_lambda_is_rejected() {
    let k = identity_k(2, 2);
    assert!(solve_topology(&k, 0.0, &TopologyOptions::default(), None).is_err());
    assert!(solve_topology(&k, 1.0, &TopologyOptions::default(), None).is_err());
}

/// Exact covariances of a latent-free model: the true coefficients make the
/// lift rank-minimal, so the refinement should find them.
#[test]
fn refinement_recovers_exact_coefficients() {
    let base = ArLatentModel::example_one();
    let m = ArLatentModel::new(base.theta_a().clone(), DMatrix::zeros(20, 0), 1).unwrap();
    let lags = model_autocovariances(&m, 2, 8193).unwrap();
    let k = BlockToeplitz::from_cov(&CovSequence::new(lags, 1_000_000).unwrap());
    let truth = Topology::from_edges(10, [(0, 5), (3, 8), (2, 9), (1, 4), (4, 6), (0, 7)]).unwrap();
    let sol = solve_topology(&k, 0.6, &TopologyOptions::default(), None).unwrap();
    let init = first_block_row(&sol.x, 10);
    let lift = build_lift(&k, &truth, &init.theta).unwrap();
    let opts = ReweightOptions {
        max_iters: 30,
        ..ReweightOptions::default()
    };
    let res = reweight_iterate(&lift, &opts, Some(m.theta_a())).unwrap();
    let errors: Vec<f64> = res.history.iter().filter_map(|h| h.delta_ar).collect();
    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(best < 1e-6, "{errors:?}");
    // the eps smoothing of the weights keeps later iterates close to the optimum
    assert!(errors.last().unwrap() < &1e-3, "{errors:?}");
    assert!(errors[1..].iter().all(|&e| e < errors[0]));
}

#[test]
fn refinement_keeps_mask_and_lead_block() {
    let m = ArLatentModel::example_one();
    let y = simulate(&m, 2000, 4).unwrap();
    let k = BlockToeplitz::from_cov(&sample_autocov(&y, 2).unwrap());
    let topo = Topology::from_edges(10, [(0, 5), (1, 4)]).unwrap();
    let mut init = DMatrix::zeros(10, 30);
    init.columns_mut(0, 10).fill_with_identity();
    let lift = build_lift(&k, &topo, &init).unwrap();
    let opts = ReweightOptions {
        max_iters: 5,
        ..ReweightOptions::default()
    };
    let res = reweight_iterate(&lift, &opts, None).unwrap();
    let theta = &res.theta;
    assert_eq!(theta.columns(0, 10).into_owned(), DMatrix::<f64>::identity(10, 10));
    for i in 0..10 {
        for c in 10..30 {
            let b = c % 10;
            let allowed = i != b && topo.contains(i, b);
            if !allowed {
                assert_eq!(theta[(i, c)], 0.0, "entry ({i}, {c})");
            }
        }
    }
    assert!(matches!(
        reweight_iterate(
            &lift,
            &ReweightOptions {
                eps: 0.0,
                ..opts
            },
            None
        ),
        Err(reweight::ReweightError::NonPositiveEps(_))
    ));
}
