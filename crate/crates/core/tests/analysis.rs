mod common;

use qcsys::classify::{classify, StabilityCertificate, VerdictStatus};
use qcsys::families::{
    counterexample_family, desync_family, desync_qcm_bound, irreducible, vertex_family,
    vertex_qcm_bound,
};
use qcsys::measures::{ovm_empirical, qcm, transient_bound};
use qcsys::reachability::{qc_check, reach_points, word_product, QcStatus};
use qcsys::robustness::qcm_perturbation_check;
use qcsys::{Error, Matrix, MatrixFamily, NormSpec, SystemSpec, Tolerances, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `{D_1 A, -D_1 A}` has a common invariant line exactly when `D_1 A` has a
/// real eigenvector.
fn vertex_pair_is_quasi_controllable(a: &Matrix) -> bool {
    let f = vertex_family(a).unwrap();
    let v = &f.members()[0];
    let disc = (v[(0, 0)] - v[(1, 1)]).powi(2) + 4.0 * v[(0, 1)] * v[(1, 0)];
    disc < -1e-9
}

#[test]
fn vertex_pairs_share_an_eigenvector_even_when_a_is_regular() {
    // Nonsingular and irreducible, yet D_1 A has real eigenvalues.
    let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 0.5]);
    assert!(irreducible(&a));
    let f = vertex_family(&a).unwrap();
    assert_eq!(f.members()[1], -&f.members()[0]);
    let v = qc_check(&f, &SystemSpec::new(f.clone())).unwrap();
    assert_eq!(v.status, QcStatus::NotQuasiControllable);
    let r = vertex_qcm_bound(&a, NormSpec::L1).unwrap();
    assert!(r.applicable);
    let est = qcm(&f, 2, NormSpec::L1, 1.0 / 32.0, &Tolerances::default()).unwrap();
    assert!(r.bound > est.empirical_inf);
}

#[test]
fn stable_certificate_bounds_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 10 {
        let f = common::random_family(&mut rng, 2, 2).scaled(0.6);
        let v = classify(&f, &SystemSpec::new(f.clone())).unwrap();
        let StabilityCertificate::NormContraction { depth, max_norm } = v.certificate else {
            continue;
        };
        let rate = max_norm.powf(1.0 / depth as f64);
        for _ in 0..20 {
            let x = common::random_unit(&mut rng, 2, NormSpec::L1);
            let reach = reach_points(&f, &x, depth, NormSpec::L1, 1e-12).unwrap();
            let peak = reach.steps[depth]
                .iter()
                .map(|p| NormSpec::L1.of(p.point.as_slice()))
                .fold(0.0, f64::max);
            assert!(peak <= rate.powi(depth as i32) * (1.0 + 1e-9));
        }
        checked += 1;
    }
}

#[test]
fn unstable_certificate_word_grows_at_its_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 8 {
        let f = common::random_family(&mut rng, 2, 2).scaled(1.8);
        let v = classify(&f, &SystemSpec::new(f.clone())).unwrap();
        let StabilityCertificate::SpectralGrowth { word, spectral_radius, .. } = &v.certificate else {
            continue;
        };
        let p = word_product(&f, word);
        let rate = spectral_radius.powf(1.0 / word.len() as f64);
        // A complex dominant pair makes |P^k y| oscillate by a bounded factor,
        // which only averages out over many repetitions.
        let real_dominant = qcsys::linalg::eigenvalues(&p)
            .unwrap()
            .iter()
            .filter(|z| (z.norm() - spectral_radius).abs() <= 1e-9 * spectral_radius)
            .all(|z| z.im == 0.0);
        let repetitions = if real_dominant { 10 } else { 400 };
        let mut y = common::random_unit(&mut rng, 2, NormSpec::L1);
        for _ in 0..40 {
            y = &p * &y;
            y /= NormSpec::L1.of(y.as_slice());
        }
        let mut log_growth = 0.0;
        for _ in 0..repetitions {
            y = &p * &y;
            let s = NormSpec::L1.of(y.as_slice());
            log_growth += s.ln();
            y /= s;
        }
        let observed = (log_growth / (repetitions * word.len()) as f64).exp();
        assert!((observed / rate - 1.0).abs() < 0.01, "{observed} vs {rate}");
        checked += 1;
    }
}

#[test]
fn desync_bound_never_exceeds_grid_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tol = Tolerances::default();
    let mut checked = 0;
    while checked < 50 {
        let dim = rng.gen_range(2..=3);
        let a = common::random_matrix(&mut rng, dim, 1.0);
        let desync = desync_qcm_bound(&a, NormSpec::L1).unwrap();
        if desync.applicable {
            let est = qcm(&desync_family(&a).unwrap(), dim, NormSpec::L1, 1.0 / 16.0, &tol).unwrap();
            assert!(desync.bound <= est.empirical_inf + 1e-6);
        }
        let vertex = vertex_qcm_bound(&a, NormSpec::L1).unwrap();
        // For N = 2 the two vertex members are negatives of each other, so the
        // bound can only hold when the family is actually quasi-controllable.
        if vertex.applicable && (dim == 3 || vertex_pair_is_quasi_controllable(&a)) {
            let est = qcm(&vertex_family(&a).unwrap(), dim, NormSpec::L1, 1.0 / 16.0, &tol).unwrap();
            assert!(vertex.bound <= est.empirical_inf + 1e-6);
        }
        checked += 1;
    }
}

#[test]
fn counterexample_is_stable_but_not_quasi_controllable() {
    let f = counterexample_family(0.1, 0.5).unwrap();
    let spec = SystemSpec::new(f.clone());
    let v = qc_check(&f, &spec).unwrap();
    assert_eq!(v.status, QcStatus::NotQuasiControllable);
    let basis = v.witness_basis().unwrap();
    assert_eq!(basis.len(), 1);
    assert!(basis[0][1].abs() < 1e-12);
    assert_eq!(classify(&f, &spec).unwrap().status, VerdictStatus::ExponentiallyStable);
    assert!(matches!(transient_bound(&f, &spec), Err(Error::DegenerateMeasure)));
}

#[test]
fn transient_bound_holds_for_stable_quasi_controllable_families() {
    let f = common::rotation().scaled(0.9);
    let spec = SystemSpec::new(f.clone()).with_horizon(1).with_mesh(1.0 / 64.0);
    let b = transient_bound(&f, &spec).unwrap();
    let ovm = ovm_empirical(&f, 40, NormSpec::L1).unwrap();
    assert!(ovm.lower_bound <= b.bound);
    assert_eq!(b.stability_certificate.status, VerdictStatus::ExponentiallyStable);

    let units = common::matrix_units();
    let b = transient_bound(&units, &SystemSpec::new(units.clone())).unwrap();
    assert_eq!(b.stability_certificate.status, VerdictStatus::MarginalBounded);
    assert!(ovm_empirical(&units, 20, NormSpec::L1).unwrap().lower_bound <= b.bound);
}

#[test]
fn overshoot_of_converging_stable_families_approaches_the_limit_bound() {
    let f = common::rotation().scaled(0.8);
    let spec = SystemSpec::new(f.clone()).with_horizon(2).with_mesh(1.0 / 64.0);
    let limit = transient_bound(&f, &spec).unwrap().bound;
    let direction = Matrix::from_row_slice(2, 2, &[0.3, 0.2, -0.1, 0.25]);
    let mut last = f64::INFINITY;
    for k in 0..8 {
        let g = f.perturbed(&[&direction * 0.5f64.powi(k)]).unwrap();
        last = ovm_empirical(&g, 60, NormSpec::L1).unwrap().lower_bound;
    }
    assert!(last <= limit + 1e-6, "{last} vs {limit}");
}

#[test]
fn perturbation_checks_pass_on_random_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..10 {
        let f = common::random_family(&mut rng, 2, 2);
        let deltas: Vec<Matrix> = (0..2).map(|_| common::random_matrix(&mut rng, 2, 1e-2)).collect();
        let spec = SystemSpec::new(f.clone()).with_mesh(1.0 / 16.0);
        let r = qcm_perturbation_check(&f, &deltas, &spec, 20).unwrap();
        assert!(r.lipschitz_ok);
        if let Some(kept) = r.qc_preserved {
            assert!(kept);
        }
    }
}

#[test]
fn equivalence_with_spectral_predicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let dim = rng.gen_range(2..=3);
        let mut a = common::random_matrix(&mut rng, dim, 1.0);
        if rng.gen_bool(0.3) {
            a[(dim - 1, 0)] = 0.0;
            a[(dim - 1, 1.min(dim - 2))] = 0.0;
        }
        let eig = qcsys::linalg::eigenvalues(&a).unwrap();
        let no_one = eig.iter().all(|z| (z - 1.0).norm() > 1e-6);
        let no_zero = eig.iter().all(|z| z.norm() > 1e-6);
        let desync = desync_family(&a).unwrap();
        let v = qc_check(&desync, &SystemSpec::new(desync.clone())).unwrap();
        assert_eq!(v.status == QcStatus::QuasiControllable, no_one && irreducible(&a));
        let vertex = vertex_family(&a).unwrap();
        let v = qc_check(&vertex, &SystemSpec::new(vertex.clone())).unwrap();
        let expect = if dim == 2 {
            vertex_pair_is_quasi_controllable(&a)
        } else {
            no_zero && irreducible(&a)
        };
        assert_eq!(v.status == QcStatus::QuasiControllable, expect);
    }
}

#[test]
fn scalar_families_are_always_quasi_controllable() {
    let f = MatrixFamily::new(vec![Matrix::from_element(1, 1, 0.0)]).unwrap();
    let v = qc_check(&f, &SystemSpec::new(f.clone())).unwrap();
    assert_eq!(v.status, QcStatus::QuasiControllable);
    let x = Vector::from_element(1, 1.0);
    assert_eq!(reach_points(&f, &x, 1, NormSpec::L1, 1e-12).unwrap().steps[1].len(), 1);
}
