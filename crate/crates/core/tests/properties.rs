mod common;

use proptest::prelude::*;
use qcsys::classify::{classify, jsr_bounds, VerdictStatus};
use qcsys::families::{desync_family, irreducible};
use qcsys::geometry::{hausdorff, inscribed_radius, SymPolytope};
use qcsys::measures::{ovm_empirical, qcm, qcm_point};
use qcsys::reachability::{qc_check, reach_points, QcStatus};
use qcsys::robustness::family_distance_bound;
use qcsys::{induced_matrix_norm, vector_norm, Matrix, MatrixFamily, NormSpec, SystemSpec, Tolerances, Vector};

fn norm_kind() -> impl Strategy<Value = NormSpec> {
    prop_oneof![Just(NormSpec::L1), Just(NormSpec::Linf)]
}

fn vector(dim: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-2.0f64..2.0, dim).prop_map(Vector::from_vec)
}

fn matrix(dim: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, dim * dim).prop_map(move |v| Matrix::from_vec(dim, dim, v))
}

fn family(dim: usize, members: usize) -> impl Strategy<Value = MatrixFamily> {
    prop::collection::vec(matrix(dim), members).prop_map(|m| MatrixFamily::new(m).unwrap())
}

fn unit(dim: usize, n: NormSpec) -> impl Strategy<Value = Vector> {
    vector(dim)
        .prop_filter("away from zero", move |v| n.of(v.as_slice()) > 1e-2)
        .prop_map(move |v| {
            let s = n.of(v.as_slice());
            v / s
        })
}

fn gens(dim: usize) -> impl Strategy<Value = Vec<Vector>> {
    prop::collection::vec(vector(dim), dim..=8)
}

const TOL: Tolerances = Tolerances {
    rank_tol: 1e-9,
    dedup_tol: 1e-12,
    lp_tol: 1e-10,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_axioms(a in vector(3), b in vector(3), lambda in -5.0f64..5.0, n in norm_kind()) {
        prop_assert!((vector_norm(&(&a * lambda), n) - lambda.abs() * vector_norm(&a, n)).abs() < 1e-12);
        prop_assert!(vector_norm(&(&a + &b), n) <= vector_norm(&a, n) + vector_norm(&b, n) + 1e-12);
    }

    #[test]
    fn induced_norm_is_submultiplicative(a in matrix(3), b in matrix(3), x in vector(3), n in norm_kind()) {
        prop_assert!(induced_matrix_norm(&(&a * &b), n) <= induced_matrix_norm(&a, n) * induced_matrix_norm(&b, n) + 1e-12);
        prop_assert!(vector_norm(&(&a * &x), n) <= induced_matrix_norm(&a, n) * vector_norm(&x, n) + 1e-12);
    }

    #[test]
    fn inscribed_radius_matches_polar_vertices(g in gens(2), n in norm_kind()) {
        let r = inscribed_radius(&SymPolytope::new(2, g.clone()).unwrap(), n, &TOL).unwrap();
        let oracle = common::brute_force_radius(&g, n);
        prop_assert!((r - oracle).abs() <= 1e-8 * oracle.max(1e-12) || (r == 0.0 && oracle == 0.0),
            "lp {r} vs oracle {oracle}");
    }

    #[test]
    fn inscribed_ball_fits(g in gens(3), cs in prop::collection::vec(vector(3), 20), n in norm_kind()) {
        let r = inscribed_radius(&SymPolytope::new(3, g.clone()).unwrap(), n, &TOL).unwrap();
        for c in cs {
            let support = g.iter().map(|w| w.dot(&c).abs()).fold(0.0, f64::max);
            prop_assert!(support >= r * n.dual().of(c.as_slice()) - 1e-9);
        }
    }

    #[test]
    fn inscribed_radius_scales_and_grows(g in gens(3), extra in vector(3), lambda in -3.0f64..3.0) {
        let p = SymPolytope::new(3, g.clone()).unwrap();
        let r = inscribed_radius(&p, NormSpec::L1, &TOL).unwrap();
        let rs = inscribed_radius(&p.scaled(lambda), NormSpec::L1, &TOL).unwrap();
        prop_assert!((rs - lambda.abs() * r).abs() <= 1e-9 * (1.0 + r));
        let mut more = g;
        more.push(extra);
        let rm = inscribed_radius(&SymPolytope::new(3, more).unwrap(), NormSpec::L1, &TOL).unwrap();
        prop_assert!(rm >= r - 1e-9);
    }

    #[test]
    fn hausdorff_is_a_metric(a in gens(2), b in gens(2), c in gens(2), n in norm_kind()) {
        let [p, q, r] = [a, b, c].map(|g| SymPolytope::new(2, g).unwrap());
        let pq = hausdorff(&p, &q, n, 1e-10).unwrap();
        prop_assert!((pq - hausdorff(&q, &p, n, 1e-10).unwrap()).abs() < 1e-9);
        let pr = hausdorff(&p, &r, n, 1e-10).unwrap();
        let rq = hausdorff(&r, &q, n, 1e-10).unwrap();
        prop_assert!(pq <= pr + rq + 1e-9);
    }

    #[test]
    fn reach_sets_are_linear(f in family(2, 2), x in vector(2), lambda in 0.1f64..3.0) {
        let a = reach_points(&f, &x, 3, NormSpec::L1, 0.0).unwrap();
        let b = reach_points(&f, &(&x * lambda), 3, NormSpec::L1, 0.0).unwrap();
        for (sa, sb) in a.steps.iter().zip(&b.steps) {
            prop_assert_eq!(sa.len(), sb.len());
            for (pa, pb) in sa.iter().zip(sb) {
                prop_assert!((&pa.point * lambda - &pb.point).amax() <= 1e-12 * (1.0 + pb.point.amax()));
            }
        }
    }

    #[test]
    fn reach_sets_compose(f in family(2, 2), x in vector(2)) {
        let whole = reach_points(&f, &x, 3, NormSpec::L1, 1e-12).unwrap();
        let head = reach_points(&f, &x, 1, NormSpec::L1, 1e-12).unwrap();
        let mut joined: Vec<Vector> = Vec::new();
        for p in &head.steps[1] {
            let tail = reach_points(&f, &p.point, 2, NormSpec::L1, 1e-12).unwrap();
            for q in &tail.steps[2] {
                if !joined.iter().any(|y| NormSpec::L1.dist(y.as_slice(), q.point.as_slice()) <= 1e-12) {
                    joined.push(q.point.clone());
                }
            }
        }
        prop_assert_eq!(joined.len(), whole.steps[3].len());
        for p in &whole.steps[3] {
            prop_assert!(joined.iter().any(|y| NormSpec::L1.dist(y.as_slice(), p.point.as_slice()) <= 1e-9));
        }
    }

    #[test]
    fn point_measure_is_homogeneous_monotone_and_lipschitz(
        f in family(2, 2), x in unit(2, NormSpec::L1), y in unit(2, NormSpec::L1), lambda in 0.2f64..4.0
    ) {
        let n = NormSpec::L1;
        let rx = qcm_point(&f, &x, 2, n, &TOL).unwrap();
        let reach = reach_points(&f, &(&x * lambda), 2, n, 1e-12).unwrap();
        let scaled = inscribed_radius(&SymPolytope::new(2, reach.points().cloned().collect()).unwrap(), n, &TOL).unwrap();
        prop_assert!((scaled - lambda * rx).abs() <= 1e-9 * (1.0 + scaled));
        prop_assert!(qcm_point(&f, &x, 3, n, &TOL).unwrap() >= rx - 1e-9);
        let m_s = qcm(&f, 2, n, 0.25, &TOL).unwrap().lipschitz_m;
        let ry = qcm_point(&f, &y, 2, n, &TOL).unwrap();
        prop_assert!((rx - ry).abs() <= m_s * n.dist(x.as_slice(), y.as_slice()) + 1e-9);
    }

    #[test]
    fn jsr_bracket_is_ordered(f in family(2, 2), depth in 1usize..5) {
        let b = jsr_bounds(&f, depth, NormSpec::L1).unwrap();
        prop_assert!(b.lower <= b.upper + 1e-9);
    }

    #[test]
    fn overshoot_is_at_least_one_and_grows_with_horizon(f in family(2, 2)) {
        let f = f.scaled(0.7);
        let short = ovm_empirical(&f, 4, NormSpec::L1).unwrap();
        let long = ovm_empirical(&f, 8, NormSpec::L1).unwrap();
        prop_assert!(short.lower_bound >= 1.0);
        prop_assert!(long.lower_bound >= short.lower_bound);
    }

    #[test]
    fn distance_bound_is_a_pseudometric(f in family(2, 2), g in family(2, 2), h in family(2, 2)) {
        let d = |a: &MatrixFamily, b: &MatrixFamily| family_distance_bound(a, b, 2, NormSpec::L1).unwrap();
        prop_assert_eq!(d(&f, &f), 0.0);
        prop_assert!((d(&f, &g) - d(&g, &f)).abs() < 1e-12);
        prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-12);
    }

    #[test]
    fn irreducibility_survives_permutation(a in matrix(3), perm in Just([0usize, 1, 2]).prop_shuffle(), mask in 0u16..512) {
        let a = Matrix::from_fn(3, 3, |i, j| if mask >> (3 * i + j) & 1 == 1 { 0.0 } else { a[(i, j)] });
        let p = Matrix::from_fn(3, 3, |i, j| a[(perm[i], perm[j])]);
        prop_assert_eq!(irreducible(&a), irreducible(&p));
    }

    #[test]
    fn desync_rows_reconstruct(a in matrix(3)) {
        let f = desync_family(&a).unwrap();
        for (i, m) in f.members().iter().enumerate() {
            for r in 0..3 {
                let expect = if r == i { a.row(r).into_owned() } else { Matrix::identity(3, 3).row(r).into_owned() };
                prop_assert_eq!(m.row(r).into_owned(), expect);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn witnesses_are_invariant(f in family(3, 2)) {
        // Force a shared invariant plane x3 = 0 half of the time through block structure.
        let blocked = MatrixFamily::new(f.members().iter().map(|m| {
            let mut m = m.clone();
            m[(2, 0)] = 0.0;
            m[(2, 1)] = 0.0;
            m
        }).collect()).unwrap();
        for fam in [f, blocked] {
            let v = qc_check(&fam, &SystemSpec::new(fam.clone())).unwrap();
            if let Some(basis) = v.witness_basis() {
                prop_assert_eq!(v.status, QcStatus::NotQuasiControllable);
                prop_assert!(qcsys::linalg::is_common_invariant(fam.members(), basis, 1e-7));
            }
        }
    }

    #[test]
    fn certified_measure_means_full_orbits(f in family(2, 2), probes in prop::collection::vec(unit(2, NormSpec::L1), 10)) {
        let est = qcm(&f, 2, NormSpec::L1, 1.0 / 32.0, &TOL).unwrap();
        prop_assert!(est.certified_lower <= est.empirical_inf);
        if est.certified_lower > 0.0 {
            for x in probes {
                prop_assert_eq!(qcsys::reachability::orbit_span_dim(&f, &x, 2, NormSpec::L1, 1e-12, 1e-9).unwrap(), 2);
            }
        }
    }

    #[test]
    fn stability_flips_once_along_scaling(f in family(2, 2)) {
        let b = jsr_bounds(&f, 8, NormSpec::L1).unwrap();
        prop_assume!(b.upper > 0.0 && b.lower > 0.0);
        // Sweep across 1 / jsr; stable below, unstable above, never back.
        let mut seen_unstable = false;
        for k in 0..12 {
            let lambda = (0.5 + 0.1 * k as f64) / b.upper.max(b.lower);
            let g = f.scaled(lambda);
            let v = classify(&g, &SystemSpec::new(g.clone())).unwrap();
            let stable = v.status == VerdictStatus::ExponentiallyStable;
            let unstable = !stable && v.epsilon.is_some();
            prop_assert!(!(stable && seen_unstable));
            seen_unstable |= unstable;
        }
    }
}
