//! Protocol-level checks that run in well under a second each.

use donor_nmr::experiments::presets::{self, lorentzian_field_bath, static_disorder, strained_arsenic};
use donor_nmr::experiments::{
    echo_train_decay, fit_decay, fit_power_law, free_induction_decay, hahn_echo_decay, AlphaMode, DecayTrace, Ensemble,
};
use donor_nmr::experiments::fit::fit_points;
use donor_nmr::noise::{Environment, StaticDisorder};
use donor_nmr::spin::coherence_label;
use proptest::prelude::*;

fn stretched(t: &[f64], a: f64, t2: f64, alpha: f64) -> Vec<f64> {
    t.iter().map(|x| a * (-(x / t2).powf(alpha)).exp()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_scale_equivariant(
        t2 in 5e-3..0.1f64, alpha in 0.8..3.0f64, a in 0.5..2.0f64,
        s in 0.1..10.0f64, c in 0.1..10.0f64,
    ) {
        let t: Vec<f64> = (1..=16).map(|k| k as f64 * t2 / 6.0).collect();
        let y = stretched(&t, a, t2, alpha);
        let base = fit_points(&t, &y, AlphaMode::Free).unwrap();
        let ts: Vec<f64> = t.iter().map(|x| x * s).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
        let scaled = fit_points(&ts, &ys, AlphaMode::Free).unwrap();
        prop_assert!((scaled.t2 / (base.t2 * s) - 1.0).abs() < 1e-6);
        prop_assert!((scaled.amplitude / (base.amplitude * c) - 1.0).abs() < 1e-6);
        prop_assert!((scaled.alpha - base.alpha).abs() < 1e-6);
        prop_assert!((base.t2 / t2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn power_law_recovers_exponent(beta in 0.1..1.5f64, pre in 1e-3..1.0f64) {
        let n = [1.0, 2.0, 4.0, 8.0, 16.0];
        let t2: Vec<f64> = n.iter().map(|x: &f64| pre * x.powf(beta)).collect();
        let fit = fit_power_law(&n, &t2).unwrap();
        prop_assert!((fit.exponent - beta).abs() < 1e-10);
    }
}

#[test]
fn cpmg_with_one_pulse_is_the_hahn_echo() {
    let sys = strained_arsenic();
    let tr = coherence_label(&sys, 0, 1).unwrap();
    let env = Environment::quiet()
        .with_bath(presets::one_over_f_bath())
        .with_charge_burst(presets::charge_burst());
    let ens = Ensemble::new(static_disorder(8), 3, 11);
    let taus = [1e-3, 2e-3, 5e-3];
    let times: Vec<f64> = taus.iter().map(|t| 2.0 * t).collect();
    let hahn = hahn_echo_decay(&sys, &tr, &taus, &ens, &env, None).unwrap();
    let cpmg = echo_train_decay(&sys, &tr, 1, &times, &ens, &env, None).unwrap();
    assert_eq!(hahn.amplitudes, cpmg.amplitudes);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let sys = strained_arsenic();
    let tr = coherence_label(&sys, 1, 2).unwrap();
    let env = Environment::quiet().with_bath(presets::csqt_field_bath());
    let ens = Ensemble::new(static_disorder(16), 4, 3);
    let taus = [2e-3, 8e-3, 20e-3];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| hahn_echo_decay(&sys, &tr, &taus, &ens, &env, None).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}

#[test]
fn static_spread_gives_five_millisecond_free_induction() {
    let sys = strained_arsenic();
    let times: Vec<f64> = (1..=12).map(|k| k as f64 * 1e-3).collect();
    let ens = Ensemble::new(static_disorder(20_000), 1, 5);
    let fid = free_induction_decay(&sys, 1, 2, &times, &ens, &Environment::quiet()).unwrap();
    let fit = fit_decay(&fid, AlphaMode::Fixed(2.0)).unwrap();
    assert!((fit.t2 - 5e-3).abs() < 0.25e-3, "T2* = {}", fit.t2);
}

/// Under a fast Lorentzian field bath an order-p coherence decays as
/// exp(−p·t/T2), so T2·p is the same for p = 1, 2, 3.
#[test]
fn coherence_order_sets_the_decay_rate() {
    let sys = strained_arsenic();
    let env = Environment::quiet().with_bath(lorentzian_field_bath(0.06, 4, 1e3, 3e3));
    let ens = Ensemble::new(StaticDisorder::none(), 4000, 9);
    let times: Vec<f64> = (1..=10).map(|k| k as f64 * 6e-3).collect();
    let t2p: Vec<f64> = [(0, 1), (0, 2), (0, 3)]
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let fid = free_induction_decay(&sys, i, j, &times, &ens, &env).unwrap();
            fit_decay(&fid, AlphaMode::Fixed(1.0)).unwrap().t2 * (k + 1) as f64
        })
        .collect();
    for v in &t2p {
        assert!((v / 0.06 - 1.0).abs() < 0.1, "T2·p = {t2p:?}");
    }
}

#[test]
fn fit_round_trip_through_trace() {
    let t: Vec<f64> = (1..=20).map(|k| k as f64 * 5e-3).collect();
    let trace = DecayTrace::new(t.clone(), stretched(&t, 0.8, 0.0483, 1.0), "synthetic").unwrap();
    let fit = fit_decay(&trace, AlphaMode::Free).unwrap();
    assert!((fit.t2 / 0.0483 - 1.0).abs() < 1e-6);
    assert!((fit.alpha - 1.0).abs() < 1e-6);
}
