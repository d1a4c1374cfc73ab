//! Static ensemble disorder and stochastic frequency fluctuations.
//!
//! All samplers are pure functions of their parameters, the interval layout
//! and a `u64` seed. Fluctuator trajectories are integrated exactly: every
//! process is piecewise constant between Poisson switching events, so the
//! integral over an interval is a finite sum and does not depend on how the
//! time axis is sliced.
//!
//! Integrals are returned in cycles (Hz·s). An element of coherence order p
//! and quadrupole coefficient q picks up the phase 2π(p·Φ₀ + q·Φ_Q).
//!
//! # Seed splitting
//!
//! Independent streams are derived with [`derive_seed`], a SplitMix64 chain
//! over `(seed, path...)`. Ensemble drivers use the path
//! `[STREAM_NOISE, member, realization]` for dynamic noise and
//! `[STREAM_STATIC]` for the static offsets; inside a realization bath `k`
//! uses `[k]` and the charge-burst process uses `[STREAM_BURST]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Cauchy, Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{MarkerKind, Timeline};

pub const STREAM_STATIC: u64 = 0x5354_4154;
pub const STREAM_NOISE: u64 = 0x4e4f_4953;
pub const STREAM_BURST: u64 = 0x4255_5253;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for the stream identified by `path`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian spread of the detuning and of ν_Q across the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticDisorder {
    pub sigma_delta_nu0: f64,
    pub sigma_nu_q: f64,
    pub ensemble_size: usize,
}

impl StaticDisorder {
    pub fn none() -> Self {
        StaticDisorder {
            sigma_delta_nu0: 0.0,
            sigma_nu_q: 0.0,
            ensemble_size: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("sigma_delta_nu0", self.sigma_delta_nu0),
            ("sigma_nuQ", self.sigma_nu_q),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange {
                    field,
                    value: v,
                    expected: "finite and >= 0",
                });
            }
        }
        if self.ensemble_size == 0 {
            return Err(Error::OutOfRange {
                field: "ensemble_size",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(())
    }
}

/// Independent Gaussian (Δν₀ offset, ν_Q offset) pairs, one per member.
pub fn sample_static(d: &StaticDisorder, seed: u64) -> Result<Vec<(f64, f64)>> {
    d.validate()?;
    let mut rng = rng_from(seed);
    let det = Normal::new(0.0, d.sigma_delta_nu0).expect("validated sigma");
    let quad = Normal::new(0.0, d.sigma_nu_q).expect("validated sigma");
    Ok((0..d.ensemble_size)
        .map(|_| (det.sample(&mut rng), quad.sample(&mut rng)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathTarget {
    /// Fluctuations of the detuning δν₀ (effective magnetic field).
    Field,
    /// Fluctuations of the quadrupole frequency δν_Q.
    Quadrupole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathStatistics {
    /// Symmetric two-state fluctuator, value ±coupling.
    #[default]
    Telegraph,
    /// At every switching event the value is redrawn from a Lorentzian
    /// (Cauchy) distribution of half width `coupling`. Models the
    /// heavy-tailed local-field distribution of a dilute dipolar spin bath.
    Lorentzian,
}

/// Ensemble of independent fluctuators with switching rates sampled
/// log-uniformly in `[rate_min, rate_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuatorBath {
    pub target: BathTarget,
    #[serde(default)]
    pub statistics: BathStatistics,
    pub n_fluctuators: usize,
    /// Hz per fluctuator.
    pub coupling: f64,
    /// Hz.
    pub rate_min: f64,
    /// Hz.
    pub rate_max: f64,
}

impl FluctuatorBath {
    pub fn validate(&self) -> Result<()> {
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(Error::OutOfRange {
                field: "coupling",
                value: self.coupling,
                expected: "finite and >= 0",
            });
        }
        if !(self.rate_min >= 0.0 && self.rate_max.is_finite() && self.rate_min <= self.rate_max) {
            return Err(Error::OutOfRange {
                field: "rate_min",
                value: self.rate_min,
                expected: "0 <= rate_min <= rate_max < inf",
            });
        }
        if self.rate_min == 0.0 && self.rate_max > 0.0 {
            return Err(Error::OutOfRange {
                field: "rate_min",
                value: 0.0,
                expected: "> 0 for a log-uniform rate range",
            });
        }
        Ok(())
    }

    fn sample_rate(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.rate_min == self.rate_max {
            self.rate_min
        } else {
            let (lo, hi) = (self.rate_min.ln(), self.rate_max.ln());
            (lo + (hi - lo) * rng.random::<f64>()).exp()
        }
    }

    fn sample_value(&self, rng: &mut ChaCha8Rng, current: f64) -> f64 {
        match self.statistics {
            BathStatistics::Telegraph => -current,
            BathStatistics::Lorentzian => cauchy(rng, self.coupling),
        }
    }

    fn initial_value(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.statistics {
            BathStatistics::Telegraph => {
                if rng.random::<bool>() {
                    self.coupling
                } else {
                    -self.coupling
                }
            }
            BathStatistics::Lorentzian => cauchy(rng, self.coupling),
        }
    }
}

fn cauchy(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        Cauchy::new(0.0, scale).expect("positive scale").sample(rng)
    }
}

/// Waiting time of a Poisson process; infinite for a zero rate, zero for an
/// infinite one.
fn waiting_time(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate == 0.0 {
        f64::INFINITY
    } else if rate.is_infinite() {
        0.0
    } else {
        let e: f64 = Exp1.sample(rng);
        e / rate
    }
}

fn boundaries(intervals: &[f64]) -> Result<Vec<f64>> {
    let mut edges = Vec::with_capacity(intervals.len() + 1);
    let mut now = 0.0;
    edges.push(now);
    for &d in intervals {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::OutOfRange {
                field: "interval",
                value: d,
                expected: "finite and >= 0",
            });
        }
        now += d;
        edges.push(now);
    }
    Ok(edges)
}

/// Adds the integral of a piecewise-constant trajectory to `acc`.
/// `value_at` is called with the current value whenever a switch happens
/// and returns the next value; `next_switch` returns the next event time.
struct Trajectory<'a> {
    rng: &'a mut ChaCha8Rng,
    value: f64,
    switch_at: f64,
    /// Trajectory is zero from this time on.
    stop_at: f64,
}

fn integrate<F>(traj: &mut Trajectory<'_>, start: f64, edges: &[f64], acc: &mut [f64], mut step: F)
where
    F: FnMut(&mut ChaCha8Rng, f64) -> (f64, f64),
{
    for (k, w) in edges.windows(2).enumerate() {
        let (a, b) = (w[0].max(start), w[1].min(traj.stop_at));
        if b <= a {
            continue;
        }
        let mut cur = a;
        let mut sum = 0.0;
        while traj.switch_at < b {
            if traj.switch_at > cur {
                sum += traj.value * (traj.switch_at - cur);
                cur = traj.switch_at;
            }
            let (value, wait) = step(traj.rng, traj.value);
            traj.value = value;
            traj.switch_at += wait;
        }
        sum += traj.value * (b - cur);
        acc[k] += sum;
    }
}

/// Accumulated ∫δν dt (cycles) of the bath over consecutive intervals
/// starting at t = 0.
pub fn simulate_telegraph_phase(bath: &FluctuatorBath, intervals: &[f64], seed: u64) -> Result<Vec<f64>> {
    bath.validate()?;
    let edges = boundaries(intervals)?;
    let mut acc = vec![0.0; intervals.len()];
    if bath.coupling == 0.0 || bath.n_fluctuators == 0 {
        return Ok(acc);
    }
    // Every fluctuator owns a random stream, so a trajectory depends only on
    // (seed, index): neither the slicing nor the total length of the time
    // axis changes it.
    for k in 0..bath.n_fluctuators {
        let mut rng = rng_from(derive_seed(seed, &[k as u64]));
        let rate = bath.sample_rate(&mut rng);
        let value = bath.initial_value(&mut rng);
        let first = waiting_time(&mut rng, rate);
        let mut traj = Trajectory {
            rng: &mut rng,
            value,
            switch_at: first,
            stop_at: f64::INFINITY,
        };
        integrate(&mut traj, 0.0, &edges, &mut acc, |rng, v| {
            let next = bath.sample_value(rng, v);
            (next, waiting_time(rng, rate))
        });
    }
    Ok(acc)
}

/// Charge traps activated by light (and bias) bursts. Each active trap
/// shifts ν_Q by ±`coupling_q`, telegraphs at `switch_rate` and deactivates
/// permanently at `relax_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeBurstModel {
    pub n_traps: u64,
    /// Hz per active trap.
    pub coupling_q: f64,
    /// Fraction of traps activated by a light burst.
    pub activation_light: f64,
    /// Fraction of traps activated by a combined light and bias burst.
    pub activation_light_and_bias: f64,
    /// Hz.
    pub relax_rate: f64,
    /// Hz.
    pub switch_rate: f64,
}

impl ChargeBurstModel {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("activation_light", self.activation_light),
            ("activation_light_and_bias", self.activation_light_and_bias),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange {
                    field,
                    value: v,
                    expected: "0 <= activation <= 1",
                });
            }
        }
        for (field, v) in [("relax_rate", self.relax_rate), ("switch_rate", self.switch_rate)] {
            if !(v >= 0.0) {
                return Err(Error::OutOfRange {
                    field,
                    value: v,
                    expected: ">= 0",
                });
            }
        }
        if !(self.coupling_q >= 0.0 && self.coupling_q.is_finite()) {
            return Err(Error::OutOfRange {
                field: "coupling_q",
                value: self.coupling_q,
                expected: "finite and >= 0",
            });
        }
        Ok(())
    }

    pub fn activation(&self, kind: MarkerKind) -> f64 {
        match kind {
            MarkerKind::Light => self.activation_light,
            MarkerKind::LightAndBias => self.activation_light_and_bias,
        }
    }
}

/// Accumulated ∫δν_Q dt (cycles) produced by the bursts started at
/// `markers`, over consecutive intervals starting at t = 0.
pub fn simulate_charge_burst(
    model: &ChargeBurstModel,
    markers: &[(f64, MarkerKind)],
    intervals: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    model.validate()?;
    let edges = boundaries(intervals)?;
    let mut acc = vec![0.0; intervals.len()];
    for (b, &(t_m, kind)) in markers.iter().enumerate() {
        let p = model.activation(kind);
        if p == 0.0 || model.n_traps == 0 || model.coupling_q == 0.0 {
            continue;
        }
        let burst_seed = derive_seed(seed, &[b as u64]);
        let active = Binomial::new(model.n_traps, p)
            .expect("validated")
            .sample(&mut rng_from(burst_seed));
        for k in 0..active {
            let mut rng = rng_from(derive_seed(burst_seed, &[k]));
            let value = if rng.random::<bool>() {
                model.coupling_q
            } else {
                -model.coupling_q
            };
            let stop_at = t_m + waiting_time(&mut rng, model.relax_rate);
            let first = t_m + waiting_time(&mut rng, model.switch_rate);
            let mut traj = Trajectory {
                rng: &mut rng,
                value,
                switch_at: first,
                stop_at,
            };
            let rate = model.switch_rate;
            integrate(&mut traj, t_m, &edges, &mut acc, |rng, v| (-v, waiting_time(rng, rate)));
        }
    }
    Ok(acc)
}

/// Dynamic part of the environment: fluctuator baths and an optional
/// charge-burst process.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    #[serde(default)]
    pub baths: Vec<FluctuatorBath>,
    #[serde(default)]
    pub charge_burst: Option<ChargeBurstModel>,
}

impl Environment {
    pub fn quiet() -> Self {
        Environment::default()
    }

    pub fn with_bath(mut self, bath: FluctuatorBath) -> Self {
        self.baths.push(bath);
        self
    }

    pub fn with_charge_burst(mut self, model: ChargeBurstModel) -> Self {
        self.charge_burst = Some(model);
        self
    }

    pub fn is_quiet(&self) -> bool {
        self.baths.iter().all(|b| b.coupling == 0.0 || b.n_fluctuators == 0) && self.charge_burst.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.baths {
            b.validate()?;
        }
        if let Some(c) = &self.charge_burst {
            c.validate()?;
        }
        Ok(())
    }
}

/// Accumulated fluctuation integrals over one evolution span, in cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpanPhase {
    pub field: f64,
    pub quadrupole: f64,
}

impl SpanPhase {
    pub fn is_zero(&self) -> bool {
        self.field == 0.0 && self.quadrupole == 0.0
    }
}

/// Per-span fluctuation integrals for one sequence and one noise draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    spans: Vec<SpanPhase>,
    seed: u64,
}

impl NoiseRealization {
    pub fn silent(spans: usize) -> Self {
        NoiseRealization {
            spans: vec![SpanPhase::default(); spans],
            seed: 0,
        }
    }

    pub fn from_spans(spans: Vec<SpanPhase>, seed: u64) -> Self {
        NoiseRealization { spans, seed }
    }

    pub fn sample(env: &Environment, timeline: &Timeline, seed: u64) -> Result<Self> {
        let durations: Vec<f64> = timeline.spans.iter().map(|s| s.duration()).collect();
        let mut spans = vec![SpanPhase::default(); durations.len()];
        for (k, bath) in env.baths.iter().enumerate() {
            let phases = simulate_telegraph_phase(bath, &durations, derive_seed(seed, &[k as u64]))?;
            for (s, p) in spans.iter_mut().zip(phases) {
                match bath.target {
                    BathTarget::Field => s.field += p,
                    BathTarget::Quadrupole => s.quadrupole += p,
                }
            }
        }
        if let Some(model) = &env.charge_burst {
            let phases = simulate_charge_burst(
                model,
                &timeline.markers,
                &durations,
                derive_seed(seed, &[STREAM_BURST]),
            )?;
            for (s, p) in spans.iter_mut().zip(phases) {
                s.quadrupole += p;
            }
        }
        Ok(NoiseRealization { spans, seed })
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn span(&self, k: usize) -> SpanPhase {
        self.spans[k]
    }

    pub fn spans(&self) -> &[SpanPhase] {
        &self.spans
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}
