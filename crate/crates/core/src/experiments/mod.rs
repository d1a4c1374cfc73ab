//! Echo protocols and their analysis.
//!
//! Every protocol averages over an ensemble of static offsets and, for each
//! member, over a number of independent noise realizations. Members and
//! realizations are simulated in parallel; the average is always summed in
//! member/realization order, so results are reproducible for any worker
//! count. Noise seeds depend only on (seed, member, realization), never on
//! the delay being simulated, which keeps scans over τ or t_space on common
//! random numbers.

pub mod fit;
pub mod pathway;
pub mod presets;
mod protocols;

pub use fit::{fit_decay, fit_power_law, AlphaMode, FitError, FitResult, PowerLawFit};
pub use pathway::{PathwaySpectrum, DEFAULT_PHASE_STEPS};
pub use protocols::*;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{derive_seed, sample_static, Environment, StaticDisorder, STREAM_NOISE, STREAM_STATIC};
use crate::spin::SpinSystem;

/// Echo amplitude against total evolution time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    /// Seconds, strictly increasing.
    pub times: Vec<f64>,
    /// Normalized to the amplitude at the shortest time.
    pub amplitudes: Vec<f64>,
    /// Amplitude at the shortest time before normalization.
    pub reference: f64,
    pub meta: String,
}

impl DecayTrace {
    pub fn new(times: Vec<f64>, raw: Vec<f64>, meta: impl Into<String>) -> Result<Self> {
        if times.len() != raw.len() {
            return Err(Error::Invariant("times and amplitudes differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::OutOfRange {
                field: "times",
                value: f64::NAN,
                expected: "strictly increasing",
            });
        }
        let reference = raw.first().copied().unwrap_or(1.0);
        let norm = if reference != 0.0 { reference } else { 1.0 };
        let amplitudes: Vec<f64> = raw.iter().map(|a| a / norm).collect();
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("amplitudes"));
        }
        Ok(DecayTrace {
            times,
            amplitudes,
            reference,
            meta: meta.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Ensemble layout shared by all protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub disorder: StaticDisorder,
    /// Noise realizations per static member.
    pub realizations: usize,
    pub seed: u64,
}

impl Ensemble {
    pub fn new(disorder: StaticDisorder, realizations: usize, seed: u64) -> Self {
        Ensemble {
            disorder,
            realizations,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.disorder.validate()?;
        if self.realizations == 0 {
            return Err(Error::OutOfRange {
                field: "realizations",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(())
    }

    fn members(&self) -> Result<Vec<(f64, f64)>> {
        sample_static(&self.disorder, derive_seed(self.seed, &[STREAM_STATIC]))
    }

    fn realizations_for(&self, env: &Environment) -> usize {
        if env.is_quiet() {
            1
        } else {
            self.realizations
        }
    }

    /// Runs `f(member_system, noise_seed)` for every member and realization
    /// and returns the results in deterministic order.
    pub fn map<T, F>(&self, sys: &SpinSystem, env: &Environment, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&SpinSystem, u64) -> Result<T> + Sync,
    {
        self.validate()?;
        env.validate()?;
        let members = self.members()?;
        let reps = self.realizations_for(env);
        (0..members.len() * reps)
            .into_par_iter()
            .map(|k| {
                let (m, r) = (k / reps, k % reps);
                let (dd, dq) = members[m];
                let member = sys.with_offsets(dd, dq);
                f(&member, derive_seed(self.seed, &[STREAM_NOISE, m as u64, r as u64]))
            })
            .collect()
    }
}

/// Ordered mean of equally long vectors.
fn mean_columns(rows: &[Vec<Complex64>]) -> Vec<Complex64> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut acc = vec![Complex64::new(0.0, 0.0); width];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = rows.len().max(1) as f64;
    acc.into_iter().map(|a| a / n).collect()
}
