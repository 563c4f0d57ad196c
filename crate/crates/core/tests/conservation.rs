mod common;

use common::{checked_run, RandomCase};
use endp::engine::run;
use endp::scenario::case_study;
use endp::Error;
use proptest::prelude::*;

fn case_strategy() -> impl Strategy<Value = RandomCase> {
    (
        prop::collection::vec(prop::collection::vec(0.0..common::MAX_RATE_VEH_H, 5), 5),
        1..=common::MAX_LOAD_STEPS,
        0.0..common::MAX_TAIL_SCALE,
        0u64..256,
        0.0f64..0.05,
        1000.0f64..6000.0,
        any::<bool>(),
    )
        .prop_map(|(rates, switch_step, tail_scale, mask, mu, c_ij_veh_h, per_class)| RandomCase {
            rates,
            switch_step,
            tail_scale,
            mask,
            mu,
            c_ij_veh_h,
            per_class,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_scenarios_conserve_vehicles(case in case_strategy()) {
        let sc = case.scenario();
        let audit = checked_run(&sc, &case.design()).map_err(TestCaseError::fail)?;
        prop_assert!(audit.injected_veh > 0.0 || case.rates.iter().flatten().all(|&q| q == 0.0));
    }
}

#[test]
fn case_study_schemes_conserve_vehicles() {
    let sc = case_study();
    for pairs in common::schemes() {
        let d = common::mask_of(&sc.network, &pairs);
        let audit = checked_run(&sc, &d).unwrap();
        assert!(audit.relative_error() < 1e-12, "{pairs:?}: {audit:?}");
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let sc = case_study();
    let d = sc.network.full_design();
    assert_eq!(run(&sc, &d).unwrap(), run(&sc, &d).unwrap());
}

#[test]
fn overload_is_reported_as_invariant_violation() {
    let mut sc = case_study();
    for seg in &mut sc.demand.segments {
        for row in &mut seg.rates {
            row.iter_mut().for_each(|q| *q = 20_000.0 / 3600.0);
        }
    }
    match run(&sc, &sc.network.empty_design()) {
        Err(Error::InvariantViolation { element, .. }) => assert!(element.starts_with("subregion"), "{element}"),
        other => panic!("expected an invariant violation, got {other:?}"),
    }
}
