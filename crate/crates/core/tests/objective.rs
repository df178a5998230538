mod common;

use molrefine_core::descriptors::PropertyId;
use molrefine_core::objective::{evaluate, gradient, term_satisfied, Direction, ObjectiveSpec, ObjectiveTerm};
use molrefine_core::PropertyVector;
use proptest::prelude::*;

#[test]
fn randomized_indicator_and_gradient() {
    println!("{}", common::objective_math(10_000).unwrap());
}

fn direction() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::Increase), Just(Direction::Decrease)]
}

fn property() -> impl Strategy<Value = PropertyId> {
    prop_oneof![Just(PropertyId::LogP), Just(PropertyId::Tpsa), Just(PropertyId::Qed)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn indicator_and_residual(p in property(), dir in direction(), d in 0.0f64..50.0, m in -100.0f64..100.0, delta in -60.0f64..60.0) {
        let spec = ObjectiveSpec::new("t", vec![ObjectiveTerm::new(p, dir, d).unwrap()]).unwrap();
        let mv: PropertyVector = [(p, m)].into_iter().collect();
        let mh: PropertyVector = [(p, m + delta)].into_iter().collect();
        let observed = (m + delta) - m;
        let eval = evaluate(&spec, &mv, &mh).unwrap();
        let grad = gradient(&spec, &mv, &mh).unwrap();
        let signed = dir.sign() * d;
        prop_assert_eq!(eval.overall, dir.sign() * (observed - signed) >= 0.0);
        prop_assert_eq!(grad.per_term[0].residual, (observed - signed).abs());
        prop_assert_eq!(grad.per_term[0].direction, dir);
    }

    #[test]
    fn boundary_is_satisfied(dir in direction(), k in 0u32..400) {
        let d = k as f64 / 8.0;
        let t = ObjectiveTerm::new(PropertyId::Tpsa, dir, d).unwrap();
        prop_assert!(term_satisfied(&t, dir.sign() * d));
        prop_assert!(!term_satisfied(&t, dir.sign() * d - dir.sign() * 0.125));
    }
}

#[test]
fn compact_round_trip() {
    let spec = ObjectiveSpec::parse_compact("+LogP:0.5,-TPSA:10").unwrap();
    assert_eq!(spec.to_compact(), "+LogP:0.5,-TPSA:10");
    assert!(ObjectiveSpec::parse_compact("+LogP:0.5,+LogP:1").is_err());
    assert!(ObjectiveSpec::parse_compact("*LogP:1").is_err());
    assert!(ObjectiveSpec::parse_compact("+LogP:-1").is_err());
    assert_eq!(ObjectiveSpec::resolve("single/strict/+QED").unwrap().terms[0].magnitude, 0.1);
}
