//! Coherence-pathway separation by a discrete Fourier transform over the
//! phase of the refocusing pulse.
//!
//! Shifting the refocusing-pulse phase by φ multiplies the part of the signal
//! carried by a pathway with order change Δp = p − p′ by exp(iφΔp). With
//! φ_k = 2πk/N the pathway amplitudes are the DFT bins
//! c_Δp = (1/N)·Σ_k S(φ_k)·exp(−iΔp·φ_k).

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PHASE_STEPS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwaySpectrum {
    /// φ_k = 2πk/N, radians.
    pub phases: Vec<f64>,
    /// Detected signal for each φ_k.
    pub signal: Vec<Complex64>,
    /// Largest |Δp| reported.
    pub max_dp: usize,
    /// c_Δp for Δp = −max_dp ..= max_dp.
    pub components: Vec<Complex64>,
}

/// Phase steps needed to keep Δp up to `max_dp` alias-free.
pub fn required_steps(max_dp: usize) -> usize {
    2 * max_dp + 2
}

pub fn phase_grid(steps: usize) -> Vec<f64> {
    (0..steps).map(|k| 2.0 * PI * k as f64 / steps as f64).collect()
}

impl PathwaySpectrum {
    pub fn from_signal(signal: Vec<Complex64>, max_dp: usize) -> Result<Self> {
        let n = signal.len();
        if n < required_steps(max_dp) {
            return Err(Error::PhaseAliasing {
                steps: n,
                max_dp,
                needed: required_steps(max_dp) - 1,
            });
        }
        let mut buf = signal.clone();
        FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        let components = (-(max_dp as i64)..=max_dp as i64)
            .map(|dp| buf[dp.rem_euclid(n as i64) as usize] * scale)
            .collect();
        Ok(PathwaySpectrum {
            phases: phase_grid(n),
            signal,
            max_dp,
            components,
        })
    }

    pub fn from_real(signal: &[f64], max_dp: usize) -> Result<Self> {
        Self::from_signal(signal.iter().map(|&s| Complex64::new(s, 0.0)).collect(), max_dp)
    }

    /// Complex amplitude of pathway Δp (zero outside the reported range).
    pub fn component(&self, dp: i32) -> Complex64 {
        if dp.unsigned_abs() as usize > self.max_dp {
            return Complex64::new(0.0, 0.0);
        }
        self.components[(dp + self.max_dp as i32) as usize]
    }

    pub fn magnitude(&self, dp: i32) -> f64 {
        self.component(dp).norm()
    }

    /// Σ_Δp c_Δp·exp(iΔp·φ).
    pub fn synthesize(&self, phi: f64) -> Complex64 {
        (-(self.max_dp as i32)..=self.max_dp as i32)
            .map(|dp| self.component(dp) * Complex64::from_polar(1.0, dp as f64 * phi))
            .sum()
    }
}
