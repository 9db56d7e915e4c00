//! Property tests. Instances are drawn from a seeded stream so that
//! proptest only has to shrink sizes and seeds.

mod common;

use hbcm::bench::{self, Method};
use hbcm::metrics::{self, adjusted_rand_index_slices};
use hbcm::model::{self, assemble_covariance, canonicalize, systems_equivalent, transform_system, ParameterSystem};
use hbcm::simulate::{self, rng_from_seed, NoiseSpec, SimRng};
use hbcm::spectral::{self, KernelMatrix};
use hbcm::vem::{self, FitOptions};
use hbcm::{linalg, DataMatrix, LabelAssignment};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

fn system_from(seed: u64, p: usize, k: usize) -> (ParameterSystem, SimRng) {
    let mut rng = rng_from_seed(seed);
    let sys = common::random_system(p.max(3 * k), k, &mut rng);
    (sys, rng)
}

fn canonical_row_means(c: &model::CanonicalSystem) -> Vec<f64> {
    let p = c.lambda.len();
    let k = c.omega.nrows();
    (0..k)
        .map(|r| {
            c.labels
                .as_slice()
                .iter()
                .zip(&c.lambda)
                .map(|(&cj, l)| l * c.omega[(r, cj)])
                .sum::<f64>()
                / p as f64
        })
        .collect()
}

fn well_scaled(sys: &ParameterSystem) -> bool {
    common::canonical_scale(sys).iter().all(|t| t.abs() > 0.05)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn covariance_is_symmetric_with_noise_floor(seed in any::<u64>(), p in 3usize..25, k in 1usize..5) {
        let (sys, _) = system_from(seed, p, k);
        let s = assemble_covariance(&sys).unwrap();
        let m = s.matrix();
        prop_assert_eq!(m, &m.transpose());
        let min_noise = sys.sigma2.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(linalg::sorted_eigenvalues(m)[0] >= min_noise - 1e-9);
    }

    #[test]
    fn feature_rescaling_scales_covariance(seed in any::<u64>(), p in 3usize..20, k in 1usize..4) {
        let (sys, mut rng) = system_from(seed, p, k);
        let b: Vec<f64> = (0..sys.p()).map(|_| common::random_nonzero(&mut rng)).collect();
        let scaled = ParameterSystem::new(
            sys.labels.clone(),
            sys.lambda.iter().zip(&b).map(|(l, b)| l * b).collect(),
            sys.sigma2.iter().zip(&b).map(|(s, b)| s * b * b).collect(),
            sys.omega.clone(),
            None,
        ).unwrap();
        let lhs = assemble_covariance(&scaled).unwrap();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b));
        let rhs = &d * assemble_covariance(&sys).unwrap().matrix() * &d;
        prop_assert!(linalg::max_abs_diff(lhs.matrix(), &rhs) < 1e-12);
        prop_assert_eq!(scaled.labels, sys.labels);
    }

    #[test]
    fn canonical_form_is_normalized_and_idempotent(seed in any::<u64>(), p in 6usize..30, k in 2usize..5) {
        let (sys, _) = system_from(seed, p, k);
        prop_assume!(well_scaled(&sys));
        let c = canonicalize(&sys).unwrap();
        for t in canonical_row_means(&c) {
            prop_assert!((t - 1.0).abs() < 1e-9, "row mean {}", t);
        }
        let again = canonicalize(&c.to_system()).unwrap();
        prop_assert!(linalg::max_abs_diff(&again.omega, &c.omega) < 1e-9);
        for (a, b) in again.lambda.iter().zip(&c.lambda) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let sa = assemble_covariance(&sys).unwrap();
        let sc = assemble_covariance(&c.to_system()).unwrap();
        prop_assert!(linalg::max_abs_diff(sa.matrix(), sc.matrix()) < 1e-10);
    }

    #[test]
    fn equivalent_systems_share_covariance(seed in any::<u64>(), p in 6usize..30, k in 2usize..5) {
        let (a, mut rng) = system_from(seed, p, k);
        let b = if rng.random::<bool>() {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rng);
            let d: Vec<f64> = (0..k).map(|_| common::random_nonzero(&mut rng)).collect();
            transform_system(&a, &perm, &d)
        } else {
            common::random_system(a.p(), k, &mut rng)
        };
        if systems_equivalent(&a, &b).unwrap().is_some() {
            let sa = assemble_covariance(&a).unwrap();
            let sb = assemble_covariance(&b).unwrap();
            prop_assert!(linalg::max_abs_diff(sa.matrix(), sb.matrix()) < 1e-10);
        }
    }

    #[test]
    fn generation_is_seed_deterministic(seed in any::<u64>(), n in 2usize..20, p in 3usize..12) {
        let (sys, _) = system_from(seed, p, 1);
        let noise = NoiseSpec::StudentTStandardized { dof: 4.0 };
        let a = simulate::generate_dataset(n, &sys, noise, &mut rng_from_seed(seed)).unwrap();
        let b = simulate::generate_dataset(n, &sys, noise, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(a.0, b.0);
        prop_assert_eq!(a.1.alpha, b.1.alpha);
    }

    #[test]
    fn correlation_ignores_column_scale(seed in any::<u64>(), n in 5usize..40, p in 2usize..10) {
        let mut rng = rng_from_seed(seed);
        let x = common::normal_matrix(n, p, &mut rng);
        let b: Vec<f64> = (0..p).map(|_| common::random_nonzero(&mut rng) * 3.0).collect();
        let mut xb = x.clone();
        for (j, bj) in b.iter().enumerate() {
            xb.column_mut(j).scale_mut(*bj);
        }
        let k1 = spectral::abs_correlation(&DataMatrix::new(x).unwrap()).unwrap();
        let k2 = spectral::abs_correlation(&DataMatrix::new(xb).unwrap()).unwrap();
        prop_assert!(linalg::max_abs_diff(k1.matrix(), k2.matrix()) < 1e-12);
        for j in 0..p {
            prop_assert_eq!(k1.matrix()[(j, j)], 1.0);
        }
        prop_assert!(k1.matrix().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn top_eigenpairs_are_sorted_and_orthonormal(seed in any::<u64>(), p in 2usize..15, k in 1usize..5) {
        let k = k.min(p);
        let mut rng = rng_from_seed(seed);
        let x = common::normal_matrix(p + 3, p, &mut rng);
        let kernel = spectral::abs_correlation(&DataMatrix::new(x).unwrap()).unwrap();
        let (vals, vecs) = spectral::top_eigenpairs(kernel.matrix(), k);
        prop_assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let gram = vecs.transpose() * &vecs;
        prop_assert!(linalg::max_abs_diff(&gram, &DMatrix::identity(k, k)) < 1e-10);
        for (i, v) in vals.iter().enumerate() {
            let r = kernel.matrix() * vecs.column(i) - vecs.column(i) * *v;
            prop_assert!(r.amax() < 1e-9);
        }
    }

    #[test]
    fn kmeans_descends_and_keeps_best_restart(seed in any::<u64>(), n in 6usize..60, k in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let pts = common::normal_matrix(n, 3, &mut rng);
        let res = spectral::kmeans(&pts, k, 5, 300, &mut rng).unwrap();
        prop_assert!(res.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
        prop_assert!(res.restart_inertias.iter().all(|&r| res.inertia <= r));
    }

    #[test]
    fn posterior_updates_stay_valid(seed in any::<u64>(), n in 2usize..20, p in 1usize..12, k in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let x = common::normal_matrix(n, p, &mut rng) * 3.0;
        let q1 = common::random_row_stochastic(p, k, &mut rng);
        let params = common::random_params(p, k, &mut rng);
        let q2 = vem::e_step_q2(&x, &q1, &params).unwrap();
        prop_assert!(linalg::is_symmetric(&q2.v, 0.0));
        prop_assert!(q2.v.clone().cholesky().is_some());
        let q1 = vem::e_step_q1(&x, &q2, &params).unwrap();
        for row in q1.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn coordinate_updates_do_not_lower_objective(seed in any::<u64>(), n in 2usize..15, p in 2usize..10, k in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let x = common::normal_matrix(n, p, &mut rng);
        let q1 = common::random_row_stochastic(p, k, &mut rng);
        let params = common::random_params(p, k, &mut rng);
        let q2 = vem::e_step_q2(&x, &q1, &params).unwrap();
        let j0 = vem::elbo(&x, &q1, &q2, &params).unwrap();
        let q1 = vem::e_step_q1(&x, &q2, &params).unwrap();
        let j1 = vem::elbo(&x, &q1, &q2, &params).unwrap();
        let step = vem::m_step(&x, &q1, &q2, &params, 1e-8).unwrap();
        let j2 = vem::elbo(&x, &q1, &q2, &step.params).unwrap();
        let q2 = vem::e_step_q2(&x, &q1, &step.params).unwrap();
        let j3 = vem::elbo(&x, &q1, &q2, &step.params).unwrap();
        for (a, b) in [(j0, j1), (j1, j2), (j2, j3)] {
            prop_assert!(b >= a - 1e-8 * a.abs(), "{} -> {}", a, b);
        }
        let pi_sum: f64 = step.params.pi.iter().sum();
        prop_assert!((pi_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_is_symmetric_and_relabel_invariant(seed in any::<u64>(), p in 2usize..50, ka in 1usize..6, kb in 1usize..6) {
        let mut rng = rng_from_seed(seed);
        let a = common::random_labels(p, ka, &mut rng);
        let b = common::random_labels(p, kb, &mut rng);
        let ab = adjusted_rand_index_slices(&a, &b).unwrap();
        prop_assert_eq!(ab, adjusted_rand_index_slices(&b, &a).unwrap());
        let mut perm: Vec<usize> = (0..ka).collect();
        perm.shuffle(&mut rng);
        let a2: Vec<usize> = a.iter().map(|&c| perm[c]).collect();
        prop_assert_eq!(ab, adjusted_rand_index_slices(&a2, &b).unwrap());
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, common::ari_brute_force(&a, &b));
    }

    #[test]
    fn soft_confusion_of_hard_labels_counts(seed in any::<u64>(), p in 1usize..40, k in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let a = LabelAssignment::new(common::random_labels(p, k, &mut rng), k).unwrap();
        let b = LabelAssignment::new(common::random_labels(p, k, &mut rng), k).unwrap();
        let r = metrics::soft_confusion(&a.one_hot(), &b.one_hot()).unwrap();
        let mut counts = DMatrix::<f64>::zeros(k, k);
        for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
            counts[(x, y)] += 1.0;
        }
        prop_assert!(linalg::max_abs_diff(r.matrix(), &(counts / p as f64)) < 1e-15);

        let q = common::random_row_stochastic(p, k, &mut rng);
        let soft = metrics::soft_confusion(&q, &b.one_hot()).unwrap();
        prop_assert!(soft.matrix().iter().all(|&v| v >= 0.0));
        prop_assert!((soft.matrix().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn misclassification_is_a_rate(seed in any::<u64>(), p in 1usize..30, k in 1usize..6) {
        let mut rng = rng_from_seed(seed);
        let truth = common::random_labels(p, k, &mut rng);
        let t = LabelAssignment::new(truth.clone(), k).unwrap();
        let q = common::random_row_stochastic(p, k, &mut rng);
        let m = metrics::min_misclassification(&q, &t).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        let hard = LabelAssignment::new(common::random_labels(p, k, &mut rng), k).unwrap();
        let got = metrics::min_misclassification(&hard.one_hot(), &t).unwrap();
        prop_assert!((got - common::misclassification_brute_force(&hard.one_hot(), &truth)).abs() < 1e-12);
    }

    #[test]
    fn moment_lambda_is_row_mean_of_covariance(seed in any::<u64>(), n in 1usize..30, p in 1usize..15) {
        let mut rng = rng_from_seed(seed);
        let x = common::normal_matrix(n, p, &mut rng);
        let got = metrics::moment_lambda_matrix(&x);
        for j in 0..p {
            let mut acc = 0.0;
            for jj in 0..p {
                let s: f64 = (0..n).map(|i| x[(i, j)] * x[(i, jj)]).sum();
                acc += s / n as f64;
            }
            let want = acc / p as f64;
            prop_assert!((got[j] - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cv_report_means_are_column_means(seed in any::<u64>(), m in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let x = DataMatrix::new(common::normal_matrix(12, 9, &mut rng)).unwrap();
        let report = bench::select_k_cv(&x, &[2, 3], m, Method::Spectral, &FitOptions::default(), seed).unwrap();
        prop_assert_eq!(report.per_split_ari.len(), m);
        for (i, mean) in report.mean_ari.iter().enumerate() {
            let col: Vec<f64> = report.per_split_ari.iter().filter_map(|row| row[i]).collect();
            let want = (!col.is_empty()).then(|| col.iter().sum::<f64>() / col.len() as f64);
            prop_assert_eq!(*mean, want);
        }
        let best = report.k_values.iter().position(|&k| k == report.best_k).unwrap();
        let top = report.mean_ari.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(report.mean_ari[best], Some(top));
        prop_assert!(report.mean_ari[..best].iter().all(|v| v.is_none_or(|v| v < top)));
    }
}

#[test]
fn kernel_rejects_bad_matrices() {
    let mut m = DMatrix::from_element(2, 2, 0.5);
    assert!(KernelMatrix::new(m.clone()).is_err());
    m.fill_diagonal(1.0);
    assert!(KernelMatrix::new(m).is_ok());
}
