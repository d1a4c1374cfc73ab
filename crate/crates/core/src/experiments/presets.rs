//! Calibrated parameter sets.
//!
//! Absolute coherence times are not predictable from first principles, so
//! the noise models below were tuned once by simulation and are frozen
//! here. The acceptance suite and the example configurations use them.

use std::f64::consts::PI;

use crate::noise::{BathStatistics, BathTarget, ChargeBurstModel, FluctuatorBath, StaticDisorder};
use crate::spin::{SpinSystem, DEFAULT_B_Z, GAMMA_AS75};

/// Static spread of Δν₀ and ν_Q, Hz. Gives a 1/e free-induction time of
/// √2/(2πσ) ≈ 5 ms.
pub const STATIC_SIGMA: f64 = 45.0;

/// Quadrupole splitting of the strained sample, Hz.
pub const STRAINED_NU_Q: f64 = 10e3;

/// Hahn-echo T2 of the center transition, seconds.
pub const CSQT_T2: f64 = 48.3e-3;

/// Single-quantum T2 targeted by the multi-quantum bath, seconds.
pub const MULTIQUANTUM_SQT_T2: f64 = 60e-3;

pub fn larmor() -> f64 {
    GAMMA_AS75 * DEFAULT_B_Z
}

/// ⁷⁵As with resolved satellites, driven on resonance.
pub fn strained_arsenic() -> SpinSystem {
    SpinSystem::arsenic(larmor(), STRAINED_NU_Q, larmor()).expect("valid preset")
}

/// ⁷⁵As with no mean quadrupole splitting; only the static spread remains.
pub fn unstrained_arsenic() -> SpinSystem {
    SpinSystem::arsenic(larmor(), 0.0, larmor()).expect("valid preset")
}

pub fn static_disorder(ensemble_size: usize) -> StaticDisorder {
    StaticDisorder {
        sigma_delta_nu0: STATIC_SIGMA,
        sigma_nu_q: STATIC_SIGMA,
        ensemble_size,
    }
}

/// Fast field bath with Lorentzian jumps. An order-p coherence decays as
/// exp(−p·t/t2) once the switching rates exceed 1/t2 by a wide margin.
pub fn lorentzian_field_bath(t2: f64, n_fluctuators: usize, rate_min: f64, rate_max: f64) -> FluctuatorBath {
    FluctuatorBath {
        target: BathTarget::Field,
        statistics: BathStatistics::Lorentzian,
        n_fluctuators,
        coupling: 1.0 / (2.0 * PI * t2 * n_fluctuators as f64),
        rate_min,
        rate_max,
    }
}

/// Field bath of the multi-quantum experiment.
pub fn multiquantum_bath() -> FluctuatorBath {
    lorentzian_field_bath(MULTIQUANTUM_SQT_T2, 4, 1e3, 3e3)
}

/// Field bath limiting the center transition of the strained sample.
/// Slower than [`multiquantum_bath`] to keep second-long timelines cheap.
pub fn csqt_field_bath() -> FluctuatorBath {
    lorentzian_field_bath(CSQT_T2, 2, 300.0, 900.0)
}

/// Gaussian-limit telegraph bath with rates spread over four decades,
/// an approximately 1/f spectrum between 0.3 Hz and 3 kHz.
pub fn one_over_f_bath() -> FluctuatorBath {
    FluctuatorBath {
        target: BathTarget::Field,
        statistics: BathStatistics::Telegraph,
        n_fluctuators: 100,
        coupling: 5.5,
        rate_min: 0.3,
        rate_max: 3e3,
    }
}

/// Charge traps released by a light burst. Right after the burst the
/// satellite echo decays in ≈ 5 ms with a Gaussian shape; the traps empty
/// within ≈ 0.5 s.
pub fn charge_burst() -> ChargeBurstModel {
    ChargeBurstModel {
        n_traps: 1000,
        coupling_q: 10.0,
        activation_light: 0.1,
        activation_light_and_bias: 0.2,
        relax_rate: 10.0,
        switch_rate: 285.0,
    }
}

/// Long-lived, slowly switching traps (bias-assisted regime).
pub fn slow_charge_burst() -> ChargeBurstModel {
    ChargeBurstModel {
        n_traps: 1000,
        coupling_q: 5.0,
        activation_light: 0.05,
        activation_light_and_bias: 0.1,
        relax_rate: 0.5,
        switch_rate: 20.0,
    }
}

/// τ values of the multi-quantum scan, all beyond the free-induction time.
pub fn multiquantum_taus() -> Vec<f64> {
    (0..10).map(|k| 10e-3 + 4e-3 * k as f64).collect()
}

/// Evolution times 2τ of the t_space scan, covering both the 5 ms and the
/// 50 ms regime.
pub fn tspace_times() -> Vec<f64> {
    [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 14.0, 20.0, 28.0, 40.0, 56.0, 80.0, 110.0]
        .iter()
        .map(|t| t * 1e-3)
        .collect()
}

/// Burst-to-echo waits of the t_space scan, seconds.
pub fn tspace_waits() -> Vec<f64> {
    vec![0.0, 0.01, 0.03, 0.1, 0.2, 0.3, 0.5, 1.0]
}

/// Base evolution-time grid of the 1/f CPMG scan, stretched by √n.
pub fn cpmg_grid() -> crate::experiments::CpmgGrid {
    crate::experiments::CpmgGrid {
        base: (1..=10).map(|k| 2.5e-3 * k as f64).collect(),
        exponent: 0.5,
    }
}

/// CPMG grid for the slow-burst scan, stretched by n^0.7.
pub fn slow_cpmg_grid() -> crate::experiments::CpmgGrid {
    crate::experiments::CpmgGrid {
        base: (1..=10).map(|k| 2.5e-3 * k as f64).collect(),
        exponent: 0.7,
    }
}

pub const CPMG_PULSES: [usize; 5] = [1, 2, 4, 8, 16];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for b in [multiquantum_bath(), csqt_field_bath(), one_over_f_bath()] {
            b.validate().unwrap();
        }
        charge_burst().validate().unwrap();
        slow_charge_burst().validate().unwrap();
        static_disorder(10).validate().unwrap();
    }

    #[test]
    fn one_over_f_spans_four_decades() {
        let b = one_over_f_bath();
        assert!((b.rate_max / b.rate_min).log10() >= 4.0 - 1e-12);
    }

    #[test]
    fn lorentzian_coupling_sums_to_target() {
        let b = lorentzian_field_bath(0.06, 4, 1e3, 3e3);
        let total = b.coupling * b.n_fluctuators as f64;
        assert!((1.0 / (2.0 * PI * total) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn grids_are_increasing() {
        for g in [multiquantum_taus(), tspace_times(), tspace_waits(), cpmg_grid().base] {
            assert!(g.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
