use consensus_robustness::convergence::{convergence_time, distance_to_consensus};
use consensus_robustness::gramian::{
    observability_gramian, solve_lyapunov_direct, solve_lyapunov_series, DEFAULT_SERIES_TOL,
};
use consensus_robustness::linalg::{inf_norm, symmetric_eigenvalues_by_modulus};
use consensus_robustness::projection::{commutation_check, project, semigroup_defect, Projector};
use consensus_robustness::topology::{lazy, random_flocking};
use consensus_robustness::StochasticMatrix;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Row-normalised 0/1 pattern with at least one entry per row.
fn pattern_matrix() -> impl Strategy<Value = StochasticMatrix> {
    (2usize..7).prop_flat_map(|n| {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), n).prop_map(move |rows| {
            let rows: Vec<Vec<f64>> = rows
                .into_iter()
                .enumerate()
                .map(|(i, mut r)| {
                    if !r.iter().any(|&b| b) {
                        r[(i + 1) % n] = true;
                    }
                    let d = r.iter().filter(|&&b| b).count() as f64;
                    r.iter().map(|&b| if b { 1.0 / d } else { 0.0 }).collect()
                })
                .collect();
            StochasticMatrix::from_rows(&rows).unwrap()
        })
    })
}

fn primitive_matrix() -> impl Strategy<Value = StochasticMatrix> {
    prop_oneof![
        pattern_matrix().prop_filter("primitive", |a| a.is_primitive()),
        (3usize..14, 0.2f64..0.9, any::<u64>()).prop_map(|(n, p, s)| random_flocking(n, p, s).unwrap()),
        (3usize..14, 0.2f64..0.9, any::<u64>()).prop_map(|(n, p, s)| lazy(&random_flocking(n, p, s).unwrap())),
    ]
}

fn wielandt_oracle(a: &StochasticMatrix) -> bool {
    let n = a.n();
    let b = a.matrix().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let mut p = DMatrix::identity(n, n);
    for _ in 0..(n - 1) * (n - 1) + 1 {
        p = (&p * &b).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    }
    p.iter().all(|&v| v > 0.0)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn primitivity_matches_wielandt(a in pattern_matrix()) {
        prop_assert_eq!(a.is_primitive(), wielandt_oracle(&a));
    }

    #[test]
    fn invariant_distribution_is_stationary(a in primitive_matrix()) {
        let pi = a.invariant_distribution().unwrap();
        let v = DVector::from_column_slice(pi.as_slice());
        let drift = (a.matrix().transpose() * &v - &v).amax();
        prop_assert!(drift <= 1e-10);
        prop_assert!((pi.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(pi.min() > 0.0);
    }

    #[test]
    fn flocking_degree_identity(n in 3usize..20, p in 0.1f64..1.0, seed in any::<u64>()) {
        let a = random_flocking(n, p, seed).unwrap();
        let f = a.provenance().unwrap().flocking.as_ref().unwrap();
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&f.degrees));
        let scale = f.adjacency.amax().max(1.0);
        prop_assert!((d * a.matrix() - &f.adjacency).amax() <= 1e-15 * scale);
    }

    #[test]
    fn lazy_shifts_symmetrized_spectrum(n in 3usize..16, p in 0.2f64..1.0, seed in any::<u64>()) {
        let a = random_flocking(n, p, seed).unwrap();
        let l = lazy(&a);
        let s = a.provenance().unwrap().flocking.as_ref().unwrap().symmetrized();
        let sl = l.provenance().unwrap().flocking.as_ref().unwrap().symmetrized();
        let want = sorted(symmetric_eigenvalues_by_modulus(&s).into_iter().map(|x| (1.0 + x) / 2.0).collect());
        let got = sorted(symmetric_eigenvalues_by_modulus(&sl));
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-10);
        }
        prop_assert!(got.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn projectors_are_idempotent_and_annihilate_consensus(a in primitive_matrix()) {
        let n = a.n();
        let ones = DVector::from_element(n, 1.0);
        for proj in [Projector::uniform(n).unwrap(), Projector::pi_weighted(&a.invariant_distribution().unwrap())] {
            let m = proj.matrix();
            prop_assert!((m * m - m).amax() <= 1e-12);
            prop_assert!((m * &ones).amax() <= 1e-12);
        }
    }

    #[test]
    fn projection_commutes_with_powers(a in primitive_matrix(), k in 1usize..40) {
        let q = Projector::uniform(a.n()).unwrap();
        let qpi = Projector::pi_weighted(&a.invariant_distribution().unwrap());
        prop_assert!(commutation_check(&a, &q, k) <= 1e-10 * k as f64);
        prop_assert!(commutation_check(&a, &qpi, k) <= 1e-10 * k as f64);
        let comm = qpi.matrix() * a.matrix() - a.matrix() * qpi.matrix();
        prop_assert!(inf_norm(&comm) <= 1e-10);
    }

    #[test]
    fn semigroup_identity(a in primitive_matrix(), m in 0u32..8, l in 0u32..8) {
        let qpi = Projector::pi_weighted(&a.invariant_distribution().unwrap());
        prop_assert!(semigroup_defect(&a, &qpi, m, l) <= 1e-10);
    }

    #[test]
    fn projected_network_is_stable(a in primitive_matrix()) {
        let net = project(&a, &Projector::uniform(a.n()).unwrap()).unwrap();
        prop_assert!(net.spectral_radius() < 1.0);
    }

    #[test]
    fn gramian_dominates_identity_and_solvers_agree(a in primitive_matrix()) {
        let net = project(&a, &Projector::uniform(a.n()).unwrap()).unwrap();
        let d = solve_lyapunov_direct(&net).unwrap();
        let s = solve_lyapunov_series(&net, DEFAULT_SERIES_TOL).unwrap();
        let o = observability_gramian(&net).unwrap();
        prop_assert!(d.lambda_min >= 1.0 - 1e-9);
        prop_assert!(s.lambda_min >= 1.0 - 1e-9);
        prop_assert!((&d.p - &s.p).amax() <= 1e-8 * d.sigma1);
        prop_assert!((d.trace - o.trace).abs() <= 1e-8 * d.trace);
        prop_assert!(d.residual <= 1e-9 && s.residual <= 1e-9);
    }

    #[test]
    fn convergence_time_matches_linear_scan(a in primitive_matrix(), eps in 0.05f64..1.5) {
        let report = convergence_time(&a, eps).unwrap();
        let pi = a.invariant_distribution().unwrap();
        let mut k = 0u64;
        while distance_to_consensus(&a, k, &pi).unwrap() >= eps {
            k += 1;
            prop_assert!(k < 100_000);
        }
        prop_assert_eq!(report.t, k);
    }

    #[test]
    fn convergence_time_is_monotone_in_epsilon(a in primitive_matrix(), e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(convergence_time(&a, lo).unwrap().t >= convergence_time(&a, hi).unwrap().t);
    }
}
