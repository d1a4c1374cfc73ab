//! The fast element-wise propagator against dense matrix exponentials.

use std::f64::consts::PI;

use donor_nmr::pulse::{
    oracle_propagate, pulse_propagator, run_sequence, CMatrix, DensityMatrix, MarkerKind, PulseEvent, ReadoutSpec,
    Sequence, SequenceEvent,
};
use donor_nmr::spin::{Spin, SpinSystem};
use num_complex::Complex64;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn arb_system(twice: u32) -> impl Strategy<Value = SpinSystem> {
    (1e6..1e7f64, -5e4..5e4f64, -2e3..2e3f64).prop_map(move |(nu0, nu_q, off)| {
        SpinSystem::new(Spin::from_twice(twice).unwrap(), nu0, nu_q, nu0 + off).unwrap()
    })
}

fn arb_pulse(dim: usize) -> impl Strategy<Value = PulseEvent> {
    (0.0..2.0 * PI, 0.0..2.0 * PI, proptest::option::of(0..dim - 1)).prop_map(|(a, p, sel)| match sel {
        Some(i) => PulseEvent::selective(a, p, i, i + 1),
        None => PulseEvent::nonselective(a, p),
    })
}

fn arb_event(dim: usize) -> impl Strategy<Value = SequenceEvent> {
    prop_oneof![
        arb_pulse(dim).prop_map(SequenceEvent::Pulse),
        (0.0..2e-3f64).prop_map(SequenceEvent::Delay),
        (0.0..1e-3f64).prop_map(|d| SequenceEvent::Marker {
            kind: MarkerKind::Light,
            duration: d
        }),
    ]
}

fn arb_state(dim: usize) -> impl Strategy<Value = DensityMatrix> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim)
        .prop_filter("non-zero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(|v| {
            let psi: Vec<Complex64> = v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            DensityMatrix::from_state(&psi).unwrap()
        })
}

fn arb_case(twice: u32) -> impl Strategy<Value = (SpinSystem, DensityMatrix, Sequence)> {
    let dim = twice as usize + 1;
    (
        arb_system(twice),
        arb_state(dim),
        proptest::collection::vec(arb_event(dim), 0..=8),
        proptest::option::of(arb_pulse(dim)),
    )
        .prop_map(move |(sys, rho, events, projection)| {
            let readout = ReadoutSpec::ProjectedPopulation { level: 0, projection };
            (sys, rho, Sequence::new(events, readout))
        })
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).camax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_dense_oracle_for_three_halves((sys, rho, seq) in arb_case(3)) {
        let fast = run_sequence(&sys, &rho, &seq, None).unwrap();
        let slow = oracle_propagate(&sys, &rho, &seq).unwrap();
        prop_assert!(max_diff(fast.rho.matrix(), slow.matrix()) <= TOL);
    }

    #[test]
    fn output_is_a_density_matrix((sys, rho, seq) in arb_case(3)) {
        let out = run_sequence(&sys, &rho, &seq, None).unwrap();
        prop_assert!(out.rho.validate().is_ok());
        let tr = out.rho.trace();
        prop_assert!((tr.re - 1.0).abs() < 1e-12 && tr.im.abs() < 1e-12);
    }

    #[test]
    fn pulses_are_unitary(p in arb_pulse(4), sys in arb_system(3)) {
        let u = pulse_propagator(&sys, &p).unwrap();
        let err = max_diff(&(&u * u.adjoint()), &CMatrix::identity(4, 4));
        prop_assert!(err < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matches_dense_oracle_for_other_spins(
        (sys, rho, seq) in prop_oneof![arb_case(1), arb_case(5), arb_case(7), arb_case(9)]
    ) {
        let fast = run_sequence(&sys, &rho, &seq, None).unwrap();
        let slow = oracle_propagate(&sys, &rho, &seq).unwrap();
        prop_assert!(max_diff(fast.rho.matrix(), slow.matrix()) <= TOL);
    }
}

#[test]
fn selective_pi_swaps_only_its_pair() {
    let sys = SpinSystem::arsenic(7.315e6, 1e4, 7.315e6).unwrap();
    let seq = Sequence::new(
        vec![SequenceEvent::Pulse(PulseEvent::selective(PI, 0.0, 1, 2))],
        ReadoutSpec::ProjectedPopulation {
            level: 2,
            projection: None,
        },
    );
    let rho = DensityMatrix::pure_level(4, 1).unwrap();
    let out = run_sequence(&sys, &rho, &seq, None).unwrap();
    assert!((out.amplitude() - 1.0).abs() < 1e-15);
    for k in [0, 3] {
        assert_eq!(out.rho.get(k, k).norm(), 0.0);
    }
}
