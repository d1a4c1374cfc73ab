//! Ideal rf pulses, free evolution and sequence execution.
//!
//! The fast path applies delays element-wise through the [`DeltaNuTable`];
//! [`oracle_propagate`] rebuilds the same dynamics from dense matrix
//! exponentials and exists to cross-check it.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseRealization, SpanPhase};
use crate::spin::{build_hamiltonian, delta_nu_table, spin_operators, DeltaNuTable, SpinSystem};

pub type CMatrix = DMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const POSITIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: CMatrix,
}

impl DensityMatrix {
    /// Wraps a matrix after checking the density-matrix invariants.
    pub fn new(rho: CMatrix) -> Result<Self> {
        let dm = DensityMatrix { rho };
        dm.validate()?;
        Ok(dm)
    }

    /// Pure population of a single level.
    pub fn pure_level(dim: usize, level: usize) -> Result<Self> {
        if level >= dim {
            return Err(Error::IndexOutOfRange { index: level, dim });
        }
        let mut rho = CMatrix::zeros(dim, dim);
        rho[(level, level)] = Complex64::new(1.0, 0.0);
        Ok(DensityMatrix { rho })
    }

    /// Projector onto a normalized copy of `psi`.
    pub fn from_state(psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Invariant("state vector has zero norm".into()));
        }
        let v = nalgebra::DVector::from_iterator(psi.len(), psi.iter().map(|z| z / norm));
        Ok(DensityMatrix {
            rho: &v * v.adjoint(),
        })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rho[(i, j)]
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).camax()
    }

    fn check_cheap(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if !(herm <= HERMITIAN_TOL) {
            return Err(Error::Invariant(format!("hermiticity error {herm:e}")));
        }
        let tr = self.trace();
        if !((tr.re - 1.0).abs() <= TRACE_TOL && tr.im.abs() <= TRACE_TOL) {
            return Err(Error::Invariant(format!("trace {tr}")));
        }
        Ok(())
    }

    /// Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_square() {
            return Err(Error::Invariant("density matrix is not square".into()));
        }
        self.check_cheap()?;
        let herm = (&self.rho + self.rho.adjoint()).map(|z| z * 0.5);
        let min = herm
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -POSITIVITY_TOL {
            return Err(Error::Invariant(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    fn conjugate_by(&mut self, u: &CMatrix) {
        self.rho = u * &self.rho * u.adjoint();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selectivity {
    Nonselective,
    /// Ideal rotation confined to the two adjacent levels `(i, j)`.
    Selective { i: usize, j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    /// Nutation angle in radians.
    pub angle: f64,
    /// rf phase φ in radians.
    pub phase: f64,
    pub selectivity: Selectivity,
}

impl PulseEvent {
    pub fn nonselective(angle: f64, phase: f64) -> Self {
        PulseEvent {
            angle,
            phase,
            selectivity: Selectivity::Nonselective,
        }
    }

    pub fn selective(angle: f64, phase: f64, i: usize, j: usize) -> Self {
        PulseEvent {
            angle,
            phase,
            selectivity: Selectivity::Selective { i, j },
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.angle >= 0.0 && self.angle.is_finite()) {
            return Err(Error::OutOfRange {
                field: "nutation_angle",
                value: self.angle,
                expected: "finite and >= 0",
            });
        }
        if !self.phase.is_finite() {
            return Err(Error::NonFinite("phase"));
        }
        if let Selectivity::Selective { i, j } = self.selectivity {
            for index in [i, j] {
                if index >= dim {
                    return Err(Error::IndexOutOfRange { index, dim });
                }
            }
            if i.abs_diff(j) != 1 {
                return Err(Error::NonAdjacentSelective(i, j));
            }
        }
        Ok(())
    }
}

/// Angle in units of π, printed compactly (`π/2`, `2π/3`, `π`).
pub(crate) fn format_angle(angle: f64) -> String {
    let x = angle / PI;
    for den in 1..=12u32 {
        let num = x * den as f64;
        if (num - num.round()).abs() < 1e-9 {
            let num = num.round() as i64;
            if num == 0 {
                return "0".into();
            }
            let head = if num == 1 {
                "π".to_string()
            } else {
                format!("{num}π")
            };
            return if den == 1 { head } else { format!("{head}/{den}") };
        }
    }
    format!("{:.4} rad", angle)
}

impl fmt::Display for PulseEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_angle(self.angle))?;
        if self.phase != 0.0 {
            write!(f, "({:.1}°)", self.phase.to_degrees())?;
        }
        if let Selectivity::Selective { i, j } = self.selectivity {
            write!(f, "[{i},{j}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKind {
    Light,
    LightAndBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceEvent {
    Pulse(PulseEvent),
    /// Free evolution, seconds.
    Delay(f64),
    /// Light or light+bias burst of the given duration in seconds. The spin
    /// evolves freely during it; the burst starts the charge-trap process.
    Marker { kind: MarkerKind, duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutSpec {
    /// Report ρ_ij directly (test instrumentation).
    Coherence { i: usize, j: usize },
    /// Apply an optional projection pulse, then report ρ_kk.
    ProjectedPopulation {
        level: usize,
        projection: Option<PulseEvent>,
    },
    /// Apply an optional projection pulse, then report ρ_uu − ρ_ll.
    ProjectedDifference {
        upper: usize,
        lower: usize,
        projection: Option<PulseEvent>,
    },
}

impl ReadoutSpec {
    fn projection(&self) -> Option<&PulseEvent> {
        match self {
            ReadoutSpec::Coherence { .. } => None,
            ReadoutSpec::ProjectedPopulation { projection, .. }
            | ReadoutSpec::ProjectedDifference { projection, .. } => projection.as_ref(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let idx: &[usize] = match self {
            ReadoutSpec::Coherence { i, j } => &[*i, *j],
            ReadoutSpec::ProjectedPopulation { level, .. } => &[*level],
            ReadoutSpec::ProjectedDifference { upper, lower, .. } => &[*upper, *lower],
        };
        for &index in idx {
            if index >= dim {
                return Err(Error::IndexOutOfRange { index, dim });
            }
        }
        if let Some(p) = self.projection() {
            p.validate(dim)?;
        }
        Ok(())
    }

    fn observe(&self, rho: &DensityMatrix) -> Complex64 {
        match *self {
            ReadoutSpec::Coherence { i, j } => rho.get(i, j),
            ReadoutSpec::ProjectedPopulation { level, .. } => Complex64::new(rho.get(level, level).re, 0.0),
            ReadoutSpec::ProjectedDifference { upper, lower, .. } => {
                Complex64::new(rho.get(upper, upper).re - rho.get(lower, lower).re, 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub events: Vec<SequenceEvent>,
    pub readout: ReadoutSpec,
}

/// Evolution span of a delay or marker, absolute seconds from the start of
/// the sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Time layout of a sequence: one span per delay/marker event, in order, and
/// the start times of the environment markers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    pub spans: Vec<Span>,
    pub markers: Vec<(f64, MarkerKind)>,
    pub total: f64,
}

impl Sequence {
    pub fn new(events: Vec<SequenceEvent>, readout: ReadoutSpec) -> Self {
        Sequence { events, readout }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        for ev in &self.events {
            match ev {
                SequenceEvent::Pulse(p) => p.validate(dim)?,
                SequenceEvent::Delay(t) | SequenceEvent::Marker { duration: t, .. } => {
                    if !(*t >= 0.0 && t.is_finite()) {
                        return Err(Error::OutOfRange {
                            field: "duration",
                            value: *t,
                            expected: "finite and >= 0",
                        });
                    }
                }
            }
        }
        self.readout.validate(dim)
    }

    pub fn timeline(&self) -> Timeline {
        let mut tl = Timeline::default();
        let mut now = 0.0;
        for ev in &self.events {
            match *ev {
                SequenceEvent::Pulse(_) => {}
                SequenceEvent::Delay(t) => {
                    tl.spans.push(Span { start: now, end: now + t });
                    now += t;
                }
                SequenceEvent::Marker { kind, duration } => {
                    tl.markers.push((now, kind));
                    tl.spans.push(Span {
                        start: now,
                        end: now + duration,
                    });
                    now += duration;
                }
            }
        }
        tl.total = now;
        tl
    }

    /// Number of delay/marker spans, i.e. the length a noise realization
    /// for this sequence must have.
    pub fn span_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| !matches!(e, SequenceEvent::Pulse(_)))
            .count()
    }
}

/// Unitary of an ideal instantaneous pulse.
///
/// Nonselective: U = exp(−iθ(I_x cos φ + I_y sin φ)).
/// Selective on (i, j): the spin-1/2 rotation inside that subspace, identity
/// elsewhere.
pub fn pulse_propagator(sys: &SpinSystem, pulse: &PulseEvent) -> Result<CMatrix> {
    let dim = sys.dim();
    pulse.validate(dim)?;
    let (theta, phi) = (pulse.angle, pulse.phase);
    match pulse.selectivity {
        Selectivity::Nonselective => {
            let [ix, iy, _] = spin_operators(sys.spin());
            let gen = (ix * Complex64::new(phi.cos(), 0.0) + iy * Complex64::new(phi.sin(), 0.0))
                * Complex64::new(0.0, -theta);
            Ok(gen.exp())
        }
        Selectivity::Selective { i, j } => {
            // (hi, lo) = (higher m, lower m) = (smaller index, larger index)
            let (hi, lo) = if i < j { (i, j) } else { (j, i) };
            let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            let mut u = CMatrix::identity(dim, dim);
            u[(hi, hi)] = Complex64::new(c, 0.0);
            u[(lo, lo)] = Complex64::new(c, 0.0);
            u[(hi, lo)] = Complex64::new(0.0, -s) * Complex64::from_polar(1.0, -phi);
            u[(lo, hi)] = Complex64::new(0.0, -s) * Complex64::from_polar(1.0, phi);
            Ok(u)
        }
    }
}

/// Element-wise free evolution:
/// ρ_ij ← ρ_ij·exp(i·2π·Δν_ij·t + i·noise_phase_ij).
///
/// `noise_phase` must be antisymmetric; `None` means noise-free.
pub fn free_evolution(
    table: &DeltaNuTable,
    rho: &DensityMatrix,
    t: f64,
    noise_phase: Option<&DMatrix<f64>>,
) -> DensityMatrix {
    let mut out = rho.clone();
    evolve_in_place(table, &mut out, t, |i, j| noise_phase.map_or(0.0, |n| n[(i, j)]));
    out
}

fn evolve_in_place(
    table: &DeltaNuTable,
    rho: &mut DensityMatrix,
    t: f64,
    noise: impl Fn(usize, usize) -> f64,
) {
    let d = rho.dim();
    for i in 0..d {
        for j in i + 1..d {
            let phase = 2.0 * PI * table.get(i, j) * t + noise(i, j);
            let f = Complex64::from_polar(1.0, phase);
            let upper = rho.rho[(i, j)] * f;
            rho.rho[(i, j)] = upper;
            rho.rho[(j, i)] = upper.conj();
        }
    }
}

/// Noise phase matrix 2π(p_ij·Φ₀ + q_ij·Φ_Q) for accumulated detuning and
/// quadrupole integrals Φ₀, Φ_Q (in cycles).
pub fn noise_phase_matrix(table: &DeltaNuTable, span: SpanPhase) -> DMatrix<f64> {
    let d = table.dim();
    DMatrix::from_fn(d, d, |i, j| {
        2.0 * PI * (table.detuning_coeff(i, j) * span.field + table.quadrupole_coeff(i, j) * span.quadrupole)
    })
}

#[derive(Debug, Clone)]
enum Step {
    Pulse(CMatrix),
    Evolve { duration: f64, span: usize },
}

/// A sequence with its pulse unitaries precomputed. Ideal pulses do not
/// depend on the frequencies of an ensemble member, so one compiled sequence
/// serves the whole ensemble.
#[derive(Debug, Clone)]
pub struct CompiledSequence {
    steps: Vec<Step>,
    readout: ReadoutSpec,
    projection: Option<CMatrix>,
    spans: usize,
    dim: usize,
}

#[derive(Debug, Clone)]
pub struct SequenceOutput {
    /// Detected value; imaginary part is zero for population readouts.
    pub signal: Complex64,
    pub rho: DensityMatrix,
}

impl SequenceOutput {
    pub fn amplitude(&self) -> f64 {
        self.signal.re
    }
}

impl CompiledSequence {
    pub fn new(sys: &SpinSystem, seq: &Sequence) -> Result<Self> {
        let dim = sys.dim();
        seq.validate(dim)?;
        let mut steps = Vec::with_capacity(seq.events.len());
        let mut span = 0;
        for ev in &seq.events {
            match ev {
                SequenceEvent::Pulse(p) => steps.push(Step::Pulse(pulse_propagator(sys, p)?)),
                SequenceEvent::Delay(t) | SequenceEvent::Marker { duration: t, .. } => {
                    steps.push(Step::Evolve { duration: *t, span });
                    span += 1;
                }
            }
        }
        let projection = seq
            .readout
            .projection()
            .map(|p| pulse_propagator(sys, p))
            .transpose()?;
        Ok(CompiledSequence {
            steps,
            readout: seq.readout,
            projection,
            spans: span,
            dim,
        })
    }

    pub fn span_count(&self) -> usize {
        self.spans
    }

    /// Runs the sequence for one ensemble member. `member` supplies the
    /// frequencies (static offsets already applied); `noise` the per-span
    /// accumulated fluctuations, or `None` for noise-free evolution.
    pub fn execute(
        &self,
        member: &SpinSystem,
        rho0: &DensityMatrix,
        noise: Option<&NoiseRealization>,
    ) -> Result<SequenceOutput> {
        if member.dim() != self.dim || rho0.dim() != self.dim {
            return Err(Error::Invariant(format!(
                "dimension mismatch: sequence {}, system {}, state {}",
                self.dim,
                member.dim(),
                rho0.dim()
            )));
        }
        if let Some(n) = noise {
            if n.len() != self.spans {
                return Err(Error::Invariant(format!(
                    "noise realization has {} spans, sequence has {}",
                    n.len(),
                    self.spans
                )));
            }
        }
        let table = delta_nu_table(member);
        let mut rho = rho0.clone();
        for step in &self.steps {
            match step {
                Step::Pulse(u) => rho.conjugate_by(u),
                Step::Evolve { duration, span } => {
                    let sp = noise.map(|n| n.span(*span)).unwrap_or_default();
                    if sp.is_zero() {
                        evolve_in_place(&table, &mut rho, *duration, |_, _| 0.0);
                    } else {
                        evolve_in_place(&table, &mut rho, *duration, |i, j| {
                            2.0 * PI
                                * (table.detuning_coeff(i, j) * sp.field
                                    + table.quadrupole_coeff(i, j) * sp.quadrupole)
                        });
                    }
                }
            }
        }
        if let Some(u) = &self.projection {
            rho.conjugate_by(u);
        }
        rho.check_cheap()?;
        Ok(SequenceOutput {
            signal: self.readout.observe(&rho),
            rho,
        })
    }
}

/// Compiles and executes a sequence in one call.
pub fn run_sequence(
    sys: &SpinSystem,
    rho0: &DensityMatrix,
    seq: &Sequence,
    noise: Option<&NoiseRealization>,
) -> Result<SequenceOutput> {
    CompiledSequence::new(sys, seq)?.execute(sys, rho0, noise)
}

/// Reference propagation by dense unitary products. Delays use
/// exp(−i·2π·H^rot·t/h) with H^rot = H + hν_rf·I_z assembled from the
/// lab-frame Hamiltonian and the spin operators. Noise-free only; the
/// readout projection pulse is applied, the readout itself is not.
pub fn oracle_propagate(sys: &SpinSystem, rho0: &DensityMatrix, seq: &Sequence) -> Result<DensityMatrix> {
    let dim = sys.dim();
    seq.validate(dim)?;
    let [_, _, iz] = spin_operators(sys.spin());
    let h_rot = build_hamiltonian(sys).map(|x| Complex64::new(x, 0.0)) + iz * Complex64::new(sys.nu_rf(), 0.0);
    let mut total = CMatrix::identity(dim, dim);
    for ev in &seq.events {
        let step = match ev {
            SequenceEvent::Pulse(p) => pulse_propagator(sys, p)?,
            SequenceEvent::Delay(t) | SequenceEvent::Marker { duration: t, .. } => {
                (&h_rot * Complex64::new(0.0, -2.0 * PI * t)).exp()
            }
        };
        total = step * total;
    }
    if let Some(p) = seq.readout.projection() {
        total = pulse_propagator(sys, p)? * total;
    }
    Ok(DensityMatrix {
        rho: &total * rho0.matrix() * total.adjoint(),
    })
}
