use std::sync::Arc;

use detline::aps;
use detline::corpus;
use detline::etainv::EtaOptions;
use detline::glines::{Factor, GradedLine, LineElement, TensorWord};
use detline::glue::{self, GluingScenario};
use detline::model::{BoundaryIsometry, IntervalGeom, OperatorSpec, Spin, SpinCircle};
use detline::par;
use detline::special;
use detline::transport::{self, EpsSchedule};
use num_complex::Complex64;
use proptest::prelude::*;

fn word_from(grades: &[i64]) -> TensorWord {
    TensorWord::new(
        grades
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let line = GradedLine::unit(format!("L{i}"), *g);
                if i % 2 == 0 {
                    Factor::plain(line)
                } else {
                    Factor::inverse(line)
                }
            })
            .collect(),
    )
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut corpus::rng(seed));
    p
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn koszul_signs_compose(grades in prop::collection::vec(-3i64..4, 1..7), s1 in any::<u64>(), s2 in any::<u64>()) {
        let x = LineElement::new(word_from(&grades), Complex64::new(0.3, -0.7));
        let n = grades.len();
        let (p, q) = (permutation(n, s1), permutation(n, s2));
        let two_step = x.reorder(&p).unwrap().reorder(&q).unwrap();
        let composed: Vec<usize> = q.iter().map(|&i| p[i]).collect();
        let one_step = x.reorder(&composed).unwrap();
        prop_assert_eq!(&two_step.word, &one_step.word);
        prop_assert!((two_step.coordinate - one_step.coordinate).norm() < 1e-15);
    }

    #[test]
    fn composition_presentations_agree(g0 in -3i64..4, gy in -3i64..4, g2 in -3i64..4, a in 0.0..6.3f64, b in 0.0..6.3f64) {
        let (l0, ly, l2) = (GradedLine::unit("L0", g0), GradedLine::unit("LY", gy), GradedLine::unit("L2", g2));
        let t2 = LineElement::new(TensorWord::new(vec![Factor::plain(l2), Factor::inverse(ly.clone())]), Complex64::from_polar(1.0, a));
        let t1 = LineElement::new(TensorWord::new(vec![Factor::plain(ly), Factor::inverse(l0)]), Complex64::from_polar(1.0, b));
        let canonical = glue::glue_composition(&t2, &t1).unwrap();
        let direct = glue::glue_composition_direct(&t2, &t1).unwrap();
        prop_assert!(canonical.distance(&direct).unwrap() < 1e-14);
        let ungraded = glue::glue_composition_ungraded(&t2, &t1).unwrap();
        let expected = if gy.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        prop_assert!((ungraded.coordinate - expected * canonical.coordinate).norm() < 1e-14);
    }

    #[test]
    fn lattice_eta_is_odd_in_offset(a in 0.001..0.999f64, s in -0.5..0.9f64) {
        let lhs = special::lattice_eta(s, 1.3, a);
        let rhs = -special::lattice_eta(s, 1.3, 1.0 - a);
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn hurwitz_shift(a in 0.05..3.0f64, s in -1.5..0.95f64) {
        let d = special::hurwitz_zeta(s, a) - special::hurwitz_zeta(s, a + 1.0);
        prop_assert!((d - a.powf(-s)).abs() < 1e-10 * (1.0 + d.abs()));
    }

    #[test]
    fn parallel_map_matches_sequential(v in prop::collection::vec(-1e3..1e3f64, 0..200)) {
        let f = |x: &f64| x.sin() * x;
        prop_assert_eq!(par::map(&v, f), par::map_sequential(&v, f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn factored_tau_is_isometry_independent(seed in any::<u64>(), rank in 1usize..4, l in 0.5..6.0f64) {
        let mut r = corpus::rng(seed);
        let bundle = corpus::flat_bundle(&mut r, rank, l, 2);
        let t = corpus::unitary(&mut r, rank);
        let u = corpus::unitary(&mut r, rank);
        let op = OperatorSpec::interval(IntervalGeom { length: l }, &bundle, &BoundaryIsometry::new(&t).unwrap());
        let res = aps::tau_equivariance_check(&op, &u, &EtaOptions::default()).unwrap();
        prop_assert!(res < 1e-9, "residual {res}");
        let tv = aps::tau_interval(&op, &EtaOptions::default()).unwrap();
        prop_assert!((tv.element.quillen_norm() - 1.0).abs() < aps::NORM_TOL);
    }

    #[test]
    fn closed_gluing_holds(seed in any::<u64>(), bounding in any::<bool>()) {
        let mut s = corpus::gluing_corpus(seed, 3).swap_remove((seed % 3) as usize);
        s.circle.spin = if bounding { Spin::Bounding } else { Spin::Nonbounding };
        let r = glue::verify_gluing(&s, &EtaOptions::default()).unwrap();
        prop_assert!(r.residual < 1e-8, "{r:?}");
    }

    #[test]
    fn circle_tau_is_cut_independent(seed in any::<u64>(), p in 0.05..0.45f64, q in 0.55..0.95f64) {
        let base = corpus::gluing_corpus(seed, 1).remove(0);
        let l = base.circle.circumference;
        let other = GluingScenario { cut: [p * l, q * l], isometries: None, ..base.clone() };
        let a = glue::verify_gluing(&base, &EtaOptions::default()).unwrap();
        let b = glue::verify_gluing(&other, &EtaOptions::default()).unwrap();
        prop_assert!((a.rhs - b.rhs).norm() < 1e-8);
        prop_assert!((a.lhs - b.lhs).norm() < 1e-15);
    }

    #[test]
    fn transport_is_unitary_and_reverses(seed in any::<u64>(), rank in 1usize..3) {
        let mut r = corpus::rng(seed);
        let fam = Arc::new(corpus::family(&mut r, rank, false).compile());
        let p0 = corpus::point(&mut r);
        let path = corpus::polyline(&mut r, p0, 2);
        let s = EpsSchedule::geometric(2, 4);
        let fwd = transport::adiabatic_tau(&fam, &path, &s, &EtaOptions::default()).unwrap().limit;
        let back = transport::adiabatic_tau(&fam, &path.clone().reversed(), &s, &EtaOptions::default()).unwrap().limit;
        prop_assert!((fwd.quillen_norm() - 1.0).abs() < 1e-9);
        prop_assert!(back.distance(&fwd.dual().unwrap()).unwrap() < 1e-6);
    }

    #[test]
    fn holonomy_agrees_across_spin_structures(seed in any::<u64>(), rank in 1usize..3) {
        let mut r = corpus::rng(seed);
        let fam = Arc::new(corpus::family(&mut r, rank, false).compile());
        let lp = corpus::disk(&mut r, 0.7).boundary_loop(0.05);
        let s = EpsSchedule::geometric(1, 3);
        let nb = transport::holonomy(&fam, &lp, Spin::Nonbounding, &s, &EtaOptions::default()).unwrap();
        let bd = transport::holonomy(&fam, &lp, Spin::Bounding, &s, &EtaOptions::default()).unwrap();
        prop_assert!((nb.hol - bd.hol).norm() < 1e-8);
        let flip = if rank % 2 == 1 { -1.0 } else { 1.0 };
        prop_assert!((nb.alim_tau - flip * bd.alim_tau).norm() < 1e-8);
    }
}

#[test]
fn circle_scenarios_serialize_round_trip() {
    let s = corpus::gluing_corpus(1, 2);
    let json = serde_json::to_string(&s).unwrap();
    let back: Vec<GluingScenario> = serde_json::from_str(&json).unwrap();
    assert_eq!(back.len(), 2);
    let c: SpinCircle = serde_json::from_str(r#"{"circumference": 1.5, "spin": "bounding"}"#).unwrap();
    assert_eq!(c.spin, Spin::Bounding);
}
