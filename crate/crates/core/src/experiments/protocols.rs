use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fit::{fit_decay, fit_power_law, AlphaMode, FitResult, PowerLawFit};
use super::pathway::{PathwaySpectrum, DEFAULT_PHASE_STEPS};
use super::{mean_columns, DecayTrace, Ensemble};
use crate::error::{Error, Result};
use crate::noise::{Environment, NoiseRealization};
use crate::pulse::{
    CompiledSequence, DensityMatrix, MarkerKind, PulseEvent, ReadoutSpec, Sequence, SequenceEvent,
};
use crate::spin::{CoherenceLabel, SpinSystem};

/// Delay between initialization and the light/bias burst.
pub const MARKER_AFTER_INIT: f64 = 5e-3;
/// Length of the light/bias burst.
pub const MARKER_DURATION: f64 = 5e-4;
/// Nutation angle of each pulse of the three-pulse multi-quantum echo.
pub const THREE_PULSE_ANGLE: f64 = 2.0 * PI / 3.0;

/// Light or light+bias burst placed before the echo block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerPlacement {
    pub kind: MarkerKind,
    /// Wait between the end of the burst and the first echo pulse, seconds.
    pub t_space: f64,
    #[serde(default = "default_after_init")]
    pub after_init: f64,
    #[serde(default = "default_marker_duration")]
    pub duration: f64,
}

fn default_after_init() -> f64 {
    MARKER_AFTER_INIT
}

fn default_marker_duration() -> f64 {
    MARKER_DURATION
}

impl MarkerPlacement {
    pub fn new(kind: MarkerKind, t_space: f64) -> Self {
        MarkerPlacement {
            kind,
            t_space,
            after_init: MARKER_AFTER_INIT,
            duration: MARKER_DURATION,
        }
    }

    fn events(&self) -> [SequenceEvent; 3] {
        [
            SequenceEvent::Delay(self.after_init),
            SequenceEvent::Marker {
                kind: self.kind,
                duration: self.duration,
            },
            SequenceEvent::Delay(self.t_space),
        ]
    }
}

fn sqt_levels(transition: &CoherenceLabel) -> Result<(usize, usize)> {
    if transition.order.abs() != 1 {
        return Err(Error::NotSingleQuantum(transition.i, transition.j));
    }
    Ok((transition.i.min(transition.j), transition.i.max(transition.j)))
}

/// Selective π/2 – [t/2n – π – t/2n]ⁿ – π/2 on one single-quantum
/// transition, optionally preceded by a burst. The projection phase is
/// chosen so a perfectly refocused echo returns to the initial level.
pub fn echo_train_sequence(
    transition: &CoherenceLabel,
    n: usize,
    total: f64,
    marker: Option<&MarkerPlacement>,
) -> Result<Sequence> {
    let (upper, lower) = sqt_levels(transition)?;
    if n == 0 {
        return Err(Error::OutOfRange {
            field: "n",
            value: 0.0,
            expected: ">= 1",
        });
    }
    let mut events = Vec::with_capacity(3 + 3 * n + 1);
    if let Some(m) = marker {
        events.extend(m.events());
    }
    events.push(SequenceEvent::Pulse(PulseEvent::selective(PI / 2.0, 0.0, upper, lower)));
    let half = total / (2 * n) as f64;
    for _ in 0..n {
        events.push(SequenceEvent::Delay(half));
        events.push(SequenceEvent::Pulse(PulseEvent::selective(PI, 0.0, upper, lower)));
        events.push(SequenceEvent::Delay(half));
    }
    let projection_phase = if n % 2 == 1 { 0.0 } else { PI };
    Ok(Sequence::new(
        events,
        ReadoutSpec::ProjectedDifference {
            upper,
            lower,
            projection: Some(PulseEvent::selective(PI / 2.0, projection_phase, upper, lower)),
        },
    ))
}

/// Hahn echo π/2 – τ – π – τ – π/2.
pub fn hahn_sequence(transition: &CoherenceLabel, tau: f64, marker: Option<&MarkerPlacement>) -> Result<Sequence> {
    echo_train_sequence(transition, 1, 2.0 * tau, marker)
}

/// Nonselective 2π/3 – τ₁ – 2π/3(φ) – τ₂ – 2π/3, then the population of
/// the initial level is read out.
pub fn three_pulse_sequence(init_level: usize, tau1: f64, tau2: f64, phase: f64) -> Sequence {
    Sequence::new(
        vec![
            SequenceEvent::Pulse(PulseEvent::nonselective(THREE_PULSE_ANGLE, 0.0)),
            SequenceEvent::Delay(tau1),
            SequenceEvent::Pulse(PulseEvent::nonselective(THREE_PULSE_ANGLE, phase)),
            SequenceEvent::Delay(tau2),
            SequenceEvent::Pulse(PulseEvent::nonselective(THREE_PULSE_ANGLE, 0.0)),
        ],
        ReadoutSpec::ProjectedPopulation {
            level: init_level,
            projection: None,
        },
    )
}

fn noise_for(env: &Environment, seq: &Sequence, seed: u64) -> Result<Option<NoiseRealization>> {
    if env.is_quiet() {
        Ok(None)
    } else {
        NoiseRealization::sample(env, &seq.timeline(), seed).map(Some)
    }
}

/// Ensemble-averaged echo amplitude of a selective n-pulse echo train at
/// each total evolution time.
#[allow(clippy::too_many_arguments)]
pub fn echo_train_decay(
    sys: &SpinSystem,
    transition: &CoherenceLabel,
    n: usize,
    times: &[f64],
    ensemble: &Ensemble,
    env: &Environment,
    marker: Option<&MarkerPlacement>,
) -> Result<DecayTrace> {
    let (upper, _) = sqt_levels(transition)?;
    let seqs = times
        .iter()
        .map(|&t| echo_train_sequence(transition, n, t, marker))
        .collect::<Result<Vec<_>>>()?;
    let compiled = seqs
        .iter()
        .map(|s| CompiledSequence::new(sys, s))
        .collect::<Result<Vec<_>>>()?;
    let rho0 = DensityMatrix::pure_level(sys.dim(), upper)?;
    let rows = ensemble.map(sys, env, |member, seed| {
        seqs.iter()
            .zip(&compiled)
            .map(|(seq, c)| {
                let noise = noise_for(env, seq, seed)?;
                Ok(c.execute(member, &rho0, noise.as_ref())?.signal)
            })
            .collect::<Result<Vec<Complex64>>>()
    })?;
    let raw = mean_columns(&rows).into_iter().map(|z| z.re).collect();
    let meta = format!(
        "echo n={n} transition=({},{}) {}{}",
        transition.i,
        transition.j,
        transition.kind,
        marker.map_or(String::new(), |m| format!(" marker={:?} t_space={}s", m.kind, m.t_space))
    );
    DecayTrace::new(times.to_vec(), raw, meta)
}

/// Hahn echo decay; the trace is indexed by the evolution time 2τ.
pub fn hahn_echo_decay(
    sys: &SpinSystem,
    transition: &CoherenceLabel,
    tau_list: &[f64],
    ensemble: &Ensemble,
    env: &Environment,
    marker: Option<&MarkerPlacement>,
) -> Result<DecayTrace> {
    let times: Vec<f64> = tau_list.iter().map(|t| 2.0 * t).collect();
    echo_train_decay(sys, transition, 1, &times, ensemble, env, marker)
}

fn check_phase_steps(sys: &SpinSystem, steps: usize) -> Result<usize> {
    let max_dp = 2 * sys.spin().twice() as usize;
    let needed = super::pathway::required_steps(max_dp);
    if steps < needed {
        return Err(Error::PhaseAliasing {
            steps,
            max_dp,
            needed: needed - 1,
        });
    }
    Ok(max_dp)
}

/// Signal S(φ_k) per τ, for every τ in `taus` (τ₁ = τ₂ unless `tau2` given).
fn phase_cycle_signals(
    sys: &SpinSystem,
    init_level: usize,
    taus: &[(f64, f64)],
    steps: usize,
    ensemble: &Ensemble,
    env: &Environment,
) -> Result<Vec<Vec<Complex64>>> {
    let phases = super::pathway::phase_grid(steps);
    let blocks = taus
        .iter()
        .map(|&(t1, t2)| {
            phases
                .iter()
                .map(|&phi| {
                    let s = three_pulse_sequence(init_level, t1, t2, phi);
                    CompiledSequence::new(sys, &s).map(|c| (s, c))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rho0 = DensityMatrix::pure_level(sys.dim(), init_level)?;
    let rows = ensemble.map(sys, env, |member, seed| {
        let mut out = Vec::with_capacity(taus.len() * steps);
        for block in &blocks {
            // phase does not change the timing, one draw serves the cycle
            let noise = noise_for(env, &block[0].0, seed)?;
            for (_, c) in block {
                out.push(c.execute(member, &rho0, noise.as_ref())?.signal);
            }
        }
        Ok(out)
    })?;
    let mean = mean_columns(&rows);
    Ok(mean.chunks(steps).map(|c| c.to_vec()).collect())
}

/// Three-pulse echo with the middle-pulse phase stepped over a full cycle,
/// separated into coherence-transfer pathways.
pub fn three_pulse_phase_cycle(
    sys: &SpinSystem,
    init_level: usize,
    tau1: f64,
    tau2: f64,
    steps: usize,
    ensemble: &Ensemble,
    env: &Environment,
) -> Result<PathwaySpectrum> {
    let max_dp = check_phase_steps(sys, steps)?;
    let mut signals = phase_cycle_signals(sys, init_level, &[(tau1, tau2)], steps, ensemble, env)?;
    PathwaySpectrum::from_signal(signals.remove(0), max_dp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiquantumDecays {
    /// Δp = 2 pathway.
    pub sqt: DecayTrace,
    /// Δp = 4 pathway.
    pub dqt: DecayTrace,
    /// Δp = 6 pathway.
    pub tqt: DecayTrace,
    pub spectra: Vec<PathwaySpectrum>,
}

impl MultiquantumDecays {
    pub fn traces(&self) -> [(&'static str, &DecayTrace); 3] {
        [("sqt", &self.sqt), ("dqt", &self.dqt), ("tqt", &self.tqt)]
    }
}

/// Magnitudes of the Δp = 2, 4, 6 pathways against 2τ for τ₁ = τ₂ = τ.
pub fn multiquantum_decays(
    sys: &SpinSystem,
    init_level: usize,
    tau_list: &[f64],
    steps: usize,
    ensemble: &Ensemble,
    env: &Environment,
) -> Result<MultiquantumDecays> {
    let max_dp = check_phase_steps(sys, steps)?;
    if max_dp < 6 {
        return Err(Error::OutOfRange {
            field: "spin_I",
            value: sys.spin().value(),
            expected: ">= 3/2 for triple-quantum pathways",
        });
    }
    let taus: Vec<(f64, f64)> = tau_list.iter().map(|&t| (t, t)).collect();
    let signals = phase_cycle_signals(sys, init_level, &taus, steps, ensemble, env)?;
    let spectra = signals
        .into_iter()
        .map(|s| PathwaySpectrum::from_signal(s, max_dp))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = tau_list.iter().map(|t| 2.0 * t).collect();
    let trace = |dp: i32, name: &str| {
        DecayTrace::new(
            times.clone(),
            spectra.iter().map(|s| s.magnitude(dp)).collect(),
            format!("three-pulse Δp={dp} ({name}) init={init_level}"),
        )
    };
    Ok(MultiquantumDecays {
        sqt: trace(2, "SQT")?,
        dqt: trace(4, "DQT")?,
        tqt: trace(6, "TQT")?,
        spectra,
    })
}

/// Evolution-time grid of a CPMG scan: `base · n^exponent` for n pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpmgGrid {
    pub base: Vec<f64>,
    #[serde(default)]
    pub exponent: f64,
}

impl CpmgGrid {
    pub fn times(&self, n: usize) -> Vec<f64> {
        let s = (n as f64).powf(self.exponent);
        self.base.iter().map(|t| t * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpmgPoint {
    pub n: usize,
    pub trace: DecayTrace,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpmgScan {
    pub points: Vec<CpmgPoint>,
    /// Slope of ln T2 against ln n.
    pub beta: PowerLawFit,
}

#[allow(clippy::too_many_arguments)]
pub fn cpmg_scan(
    sys: &SpinSystem,
    transition: &CoherenceLabel,
    n_list: &[usize],
    grid: &CpmgGrid,
    ensemble: &Ensemble,
    env: &Environment,
    marker: Option<&MarkerPlacement>,
    alpha: AlphaMode,
) -> Result<CpmgScan> {
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let trace = echo_train_decay(sys, transition, n, &grid.times(n), ensemble, env, marker)?;
        let fit = fit_decay(&trace, alpha)?;
        points.push(CpmgPoint { n, trace, fit });
    }
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let t2: Vec<f64> = points.iter().map(|p| p.fit.t2).collect();
    let beta = fit_power_law(&ns, &t2)?;
    Ok(CpmgScan { points, beta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspacePoint {
    pub t_space: f64,
    pub trace: DecayTrace,
    pub fit: FitResult,
}

/// Hahn decays with a burst placed `t_space` before the echo, one per
/// entry of `t_space_list`.
#[allow(clippy::too_many_arguments)]
pub fn tspace_scan(
    sys: &SpinSystem,
    transition: &CoherenceLabel,
    t_space_list: &[f64],
    kind: MarkerKind,
    tau_list: &[f64],
    ensemble: &Ensemble,
    env: &Environment,
    alpha: AlphaMode,
) -> Result<Vec<TspacePoint>> {
    t_space_list
        .iter()
        .map(|&t_space| {
            let marker = MarkerPlacement::new(kind, t_space);
            let trace = hahn_echo_decay(sys, transition, tau_list, ensemble, env, Some(&marker))?;
            let fit = fit_decay(&trace, alpha)?;
            Ok(TspacePoint { t_space, trace, fit })
        })
        .collect()
}

/// Nonselective-π Hahn echo of an injected coherence (i, j): starts from
/// (|i⟩ + |j⟩)/√2, applies τ – π – τ and returns the ensemble-averaged
/// magnitude of the mirrored element, relative to τ = 0.
pub fn pi_refocused_coherence(
    sys: &SpinSystem,
    i: usize,
    j: usize,
    tau: f64,
    ensemble: &Ensemble,
    env: &Environment,
) -> Result<f64> {
    let d = sys.dim();
    if i >= d || j >= d || i == j {
        return Err(Error::IndexOutOfRange { index: i.max(j), dim: d });
    }
    let mut psi = vec![Complex64::new(0.0, 0.0); d];
    psi[i] = Complex64::new(1.0, 0.0);
    psi[j] = Complex64::new(1.0, 0.0);
    let rho0 = DensityMatrix::from_state(&psi)?;
    let readout = ReadoutSpec::Coherence {
        i: d - 1 - i,
        j: d - 1 - j,
    };
    let seq = Sequence::new(
        vec![
            SequenceEvent::Delay(tau),
            SequenceEvent::Pulse(PulseEvent::nonselective(PI, 0.0)),
            SequenceEvent::Delay(tau),
        ],
        readout,
    );
    let compiled = CompiledSequence::new(sys, &seq)?;
    let rows = ensemble.map(sys, env, |member, seed| {
        let noise = noise_for(env, &seq, seed)?;
        Ok(vec![compiled.execute(member, &rho0, noise.as_ref())?.signal])
    })?;
    Ok(mean_columns(&rows)[0].norm() / rho0.get(i, j).norm())
}

/// Free-induction decay |⟨ρ_ij(t)⟩| of an injected coherence, normalized to
/// t = 0.
pub fn free_induction_decay(
    sys: &SpinSystem,
    i: usize,
    j: usize,
    times: &[f64],
    ensemble: &Ensemble,
    env: &Environment,
) -> Result<DecayTrace> {
    let d = sys.dim();
    if i >= d || j >= d || i == j {
        return Err(Error::IndexOutOfRange { index: i.max(j), dim: d });
    }
    let mut psi = vec![Complex64::new(0.0, 0.0); d];
    psi[i] = Complex64::new(1.0, 0.0);
    psi[j] = Complex64::new(1.0, 0.0);
    let rho0 = DensityMatrix::from_state(&psi)?;
    let seqs: Vec<Sequence> = times
        .iter()
        .map(|&t| Sequence::new(vec![SequenceEvent::Delay(t)], ReadoutSpec::Coherence { i, j }))
        .collect();
    let compiled = seqs
        .iter()
        .map(|s| CompiledSequence::new(sys, s))
        .collect::<Result<Vec<_>>>()?;
    let rows = ensemble.map(sys, env, |member, seed| {
        seqs.iter()
            .zip(&compiled)
            .map(|(s, c)| {
                let noise = noise_for(env, s, seed)?;
                Ok(c.execute(member, &rho0, noise.as_ref())?.signal)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let raw: Vec<f64> = mean_columns(&rows).iter().map(|z| z.norm() / rho0.get(i, j).norm()).collect();
    DecayTrace::new(times.to_vec(), raw, format!("fid ({i},{j})"))
}

/// Default number of phase steps for the three-pulse cycle.
pub fn default_phase_steps() -> usize {
    DEFAULT_PHASE_STEPS
}
