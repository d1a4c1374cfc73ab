//! Run configuration: a TOML document with unit-annotated values.
//!
//! ```toml
//! [system]
//! spin_I = "3/2"
//! nu0 = "2.56025 MHz"
//! nu_Q = "10 kHz"
//!
//! [protocol.hahn]
//! transition = "satellite"
//! tau = ["1 ms", "2 ms", "4 ms", "8 ms"]
//!
//! [execution]
//! seed = 7
//! ```
//!
//! Unknown keys are rejected and every error carries the line and column
//! of the offending value.

use std::fmt;
use std::num::NonZeroUsize;
use std::ops::Range;

use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use toml::Spanned;

use super::units::{Angle, Area, Field, Frequency, Gradient, Gyro, Time};
use crate::experiments::pathway::required_steps;
use crate::experiments::{AlphaMode, CpmgGrid, Ensemble, MarkerPlacement, DEFAULT_PHASE_STEPS};
use crate::noise::{BathStatistics, BathTarget, ChargeBurstModel, Environment, FluctuatorBath, StaticDisorder};
use crate::pulse::MarkerKind;
use crate::spin::{coherence_label, quadrupole_frequency, CoherenceLabel, QuadrupoleGeometry, Spin, SpinSystem};

/// Relative tolerance for ν₀ given both directly and as γₙ·B_z.
pub const OVERSPECIFIED_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(text: &str, span: Option<Range<usize>>, message: impl Into<String>) -> Self {
        let (line, column) = match span {
            Some(r) => {
                let head = &text[..r.start.min(text.len())];
                let line = head.matches('\n').count() + 1;
                let column = head.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
                (Some(line), Some(column))
            }
            None => (None, None),
        };
        ConfigError {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    #[serde(default)]
    pub disorder: DisorderBlock,
    #[serde(default, rename = "bath", skip_serializing_if = "Vec::is_empty")]
    pub baths: Vec<BathBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_burst: Option<ChargeBurstBlock>,
    pub protocol: Protocol,
    pub execution: ExecutionBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Parses and fully validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::at(text, e.span(), e.message()))?;
    cfg.cross_check().map_err(|(span, msg)| ConfigError::at(text, span, msg))?;
    Ok(cfg)
}

impl RunConfig {
    /// Canonical TOML with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn spin_system(&self) -> SpinSystem {
        self.system.resolved
    }

    pub fn environment(&self) -> Environment {
        Environment {
            baths: self.baths.iter().map(|b| b.bath).collect(),
            charge_burst: self.charge_burst.map(|c| c.model),
        }
    }

    pub fn ensemble(&self) -> Ensemble {
        Ensemble::new(
            StaticDisorder {
                sigma_delta_nu0: self.disorder.sigma_delta_nu0.value,
                sigma_nu_q: self.disorder.sigma_nu_q.value,
                ensemble_size: self.execution.ensemble.get(),
            },
            self.execution.realizations.get(),
            self.execution.seed,
        )
    }

    /// Checks that need more than one block.
    fn cross_check(&self) -> Result<(), (Option<Range<usize>>, String)> {
        let sys = self.spin_system();
        let dim = sys.dim();
        let level = |l: &Option<Spanned<usize>>| -> Result<usize, (Option<Range<usize>>, String)> {
            match l {
                None => Ok(default_init_level(dim)),
                Some(s) if *s.get_ref() < dim => Ok(*s.get_ref()),
                Some(s) => Err((
                    Some(s.span()),
                    format!("init_level {} out of range for spin {} (0..{dim})", s.get_ref(), sys.spin()),
                )),
            }
        };
        let steps = |s: &Spanned<usize>| {
            let needed = required_steps(2 * sys.spin().twice() as usize);
            if *s.get_ref() < needed {
                Err((
                    Some(s.span()),
                    format!(
                        "phase_steps = {} aliases coherence-order changes for spin {}; use at least {needed}",
                        s.get_ref(),
                        sys.spin()
                    ),
                ))
            } else {
                Ok(())
            }
        };
        match &self.protocol {
            Protocol::Hahn(p) => p.transition.resolve(&sys).map(drop),
            Protocol::Cpmg(p) => p.transition.resolve(&sys).map(drop),
            Protocol::Tspace(p) => p.transition.resolve(&sys).map(drop),
            Protocol::PhaseCycle(p) => level(&p.init_level).and(steps(&p.phase_steps)),
            Protocol::Multiquantum(p) => {
                if sys.spin().twice() < 3 {
                    return Err((None, "multiquantum needs spin_I >= 3/2".into()));
                }
                level(&p.init_level).and(steps(&p.phase_steps))
            }
        }
    }
}

fn default_init_level(dim: usize) -> usize {
    // m = −1/2
    dim / 2
}

// ---------------------------------------------------------------- system

/// Spin written as "3/2", 1.5 or "1.5".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinField(pub Spin);

impl Serialize for SpinField {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for SpinField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = SpinField;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a half-integer spin such as \"3/2\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<SpinField, E> {
                Spin::try_from(v).map(SpinField).map_err(|_| {
                    E::custom(format!("spin_I = {v} is not allowed: only half-integer spins 1/2 ..= 9/2"))
                })
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<SpinField, E> {
                self.visit_f64(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<SpinField, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<SpinField, E> {
                let value = match v.split_once('/') {
                    Some((n, d)) => match (n.trim().parse::<f64>(), d.trim().parse::<f64>()) {
                        (Ok(n), Ok(d)) if d != 0.0 => n / d,
                        _ => return Err(E::custom(format!("spin_I = \"{v}\" is not a fraction"))),
                    },
                    None => v
                        .trim()
                        .parse()
                        .map_err(|_| E::custom(format!("spin_I = \"{v}\" is not a number")))?,
                };
                self.visit_f64(value)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub v33: Gradient,
    pub q_moment: Area,
    pub theta: Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemRaw {
    #[serde(rename = "spin_I", default = "default_spin")]
    spin: SpinField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu0: Option<Frequency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_n: Option<Gyro>,
    #[serde(rename = "B_z", default, skip_serializing_if = "Option::is_none")]
    b_z: Option<Field>,
    #[serde(rename = "nu_Q", default, skip_serializing_if = "Option::is_none")]
    nu_q: Option<Frequency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometry: Option<GeometryBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu_rf: Option<Frequency>,
}

fn default_spin() -> SpinField {
    SpinField(Spin::THREE_HALVES)
}

/// System block with ν₀, ν_Q and ν_rf resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRaw", into = "SystemRaw")]
pub struct SystemBlock {
    raw: SystemRaw,
    pub resolved: SpinSystem,
}

fn agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= OVERSPECIFIED_TOLERANCE * a.abs().max(b.abs())
}

impl TryFrom<SystemRaw> for SystemBlock {
    type Error = String;

    fn try_from(raw: SystemRaw) -> Result<Self, String> {
        let from_field = match (raw.gamma_n, raw.b_z) {
            (Some(g), Some(b)) => Some(g.value * b.value),
            (None, None) => None,
            _ => return Err("gamma_n and B_z must be given together".into()),
        };
        let nu0 = match (raw.nu0, from_field) {
            (Some(n), Some(f)) if !agree(n.value, f) => {
                return Err(format!(
                    "over-specified: nu0 = {} but gamma_n·B_z = {} Hz",
                    n,
                    super::units::format_number(f)
                ))
            }
            (Some(n), _) => n.value,
            (None, Some(f)) => f,
            (None, None) => return Err("missing nu0 (or gamma_n and B_z)".into()),
        };
        let from_geometry = match raw.geometry {
            Some(g) => {
                let geom = QuadrupoleGeometry::new(g.v33.value, g.q_moment.value, g.theta.value, 0.0, 0.0)
                    .map_err(|e| e.to_string())?;
                Some(quadrupole_frequency(&geom))
            }
            None => None,
        };
        let nu_q = match (raw.nu_q, from_geometry) {
            (Some(n), Some(g)) if !agree(n.value, g) => {
                return Err(format!(
                    "over-specified: nu_Q = {} but the geometry gives {} Hz",
                    n,
                    super::units::format_number(g)
                ))
            }
            (Some(n), _) => n.value,
            (None, Some(g)) => g,
            (None, None) => 0.0,
        };
        let nu_rf = raw.nu_rf.map_or(nu0, |f| f.value);
        let resolved = SpinSystem::new(raw.spin.0, nu0, nu_q, nu_rf).map_err(|e| e.to_string())?;
        let raw = SystemRaw {
            nu0: Some(Frequency::new(nu0)),
            nu_q: Some(Frequency::new(nu_q)),
            nu_rf: Some(Frequency::new(nu_rf)),
            ..raw
        };
        Ok(SystemBlock { raw, resolved })
    }
}

impl From<SystemBlock> for SystemRaw {
    fn from(b: SystemBlock) -> SystemRaw {
        b.raw
    }
}

impl SystemBlock {
    /// Block for an already constructed system, with ν₀ given directly.
    pub fn from_system(sys: SpinSystem) -> Self {
        SystemBlock {
            raw: SystemRaw {
                spin: SpinField(sys.spin()),
                nu0: Some(Frequency::new(sys.nu0())),
                gamma_n: None,
                b_z: None,
                nu_q: Some(Frequency::new(sys.nu_q())),
                geometry: None,
                nu_rf: Some(Frequency::new(sys.nu_rf())),
            },
            resolved: sys,
        }
    }
}

// ---------------------------------------------------------------- noise

fn non_negative<'de, D: Deserializer<'de>>(d: D) -> Result<Frequency, D::Error> {
    let q = Frequency::deserialize(d)?;
    if q.value < 0.0 {
        return Err(de::Error::custom(format!("{q} must be >= 0")));
    }
    Ok(q)
}

fn fraction<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(de::Error::custom(format!("{v} is not a fraction in [0, 1]")));
    }
    Ok(v)
}

fn zero_hz() -> Frequency {
    Frequency::new(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderBlock {
    #[serde(default = "zero_hz", deserialize_with = "non_negative")]
    pub sigma_delta_nu0: Frequency,
    #[serde(rename = "sigma_nu_Q", default = "zero_hz", deserialize_with = "non_negative")]
    pub sigma_nu_q: Frequency,
}

impl Default for DisorderBlock {
    fn default() -> Self {
        DisorderBlock {
            sigma_delta_nu0: zero_hz(),
            sigma_nu_q: zero_hz(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BathRaw {
    target: BathTarget,
    #[serde(default)]
    statistics: BathStatistics,
    n_fluctuators: usize,
    #[serde(deserialize_with = "non_negative")]
    coupling: Frequency,
    #[serde(deserialize_with = "non_negative")]
    rate_min: Frequency,
    #[serde(deserialize_with = "non_negative")]
    rate_max: Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BathRaw", into = "BathRaw")]
pub struct BathBlock {
    pub bath: FluctuatorBath,
}

impl TryFrom<BathRaw> for BathBlock {
    type Error = String;

    fn try_from(r: BathRaw) -> Result<Self, String> {
        let bath = FluctuatorBath {
            target: r.target,
            statistics: r.statistics,
            n_fluctuators: r.n_fluctuators,
            coupling: r.coupling.value,
            rate_min: r.rate_min.value,
            rate_max: r.rate_max.value,
        };
        bath.validate().map_err(|e| format!("bath: {e}"))?;
        Ok(BathBlock { bath })
    }
}

impl From<BathBlock> for BathRaw {
    fn from(b: BathBlock) -> BathRaw {
        let f = b.bath;
        BathRaw {
            target: f.target,
            statistics: f.statistics,
            n_fluctuators: f.n_fluctuators,
            coupling: Frequency::new(f.coupling),
            rate_min: Frequency::new(f.rate_min),
            rate_max: Frequency::new(f.rate_max),
        }
    }
}

impl From<FluctuatorBath> for BathBlock {
    fn from(bath: FluctuatorBath) -> Self {
        BathBlock { bath }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChargeBurstRaw {
    n_traps: u64,
    #[serde(rename = "coupling_Q", deserialize_with = "non_negative")]
    coupling_q: Frequency,
    #[serde(deserialize_with = "fraction")]
    activation_light: f64,
    #[serde(deserialize_with = "fraction")]
    activation_light_and_bias: f64,
    #[serde(deserialize_with = "non_negative")]
    relax_rate: Frequency,
    #[serde(alias = "while_active_switch_rate", deserialize_with = "non_negative")]
    switch_rate: Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ChargeBurstRaw", into = "ChargeBurstRaw")]
pub struct ChargeBurstBlock {
    pub model: ChargeBurstModel,
}

impl From<ChargeBurstRaw> for ChargeBurstBlock {
    fn from(r: ChargeBurstRaw) -> Self {
        ChargeBurstBlock {
            model: ChargeBurstModel {
                n_traps: r.n_traps,
                coupling_q: r.coupling_q.value,
                activation_light: r.activation_light,
                activation_light_and_bias: r.activation_light_and_bias,
                relax_rate: r.relax_rate.value,
                switch_rate: r.switch_rate.value,
            },
        }
    }
}

impl From<ChargeBurstBlock> for ChargeBurstRaw {
    fn from(b: ChargeBurstBlock) -> Self {
        let m = b.model;
        ChargeBurstRaw {
            n_traps: m.n_traps,
            coupling_q: Frequency::new(m.coupling_q),
            activation_light: m.activation_light,
            activation_light_and_bias: m.activation_light_and_bias,
            relax_rate: Frequency::new(m.relax_rate),
            switch_rate: Frequency::new(m.switch_rate),
        }
    }
}

impl From<ChargeBurstModel> for ChargeBurstBlock {
    fn from(model: ChargeBurstModel) -> Self {
        ChargeBurstBlock { model }
    }
}

// ---------------------------------------------------------------- protocol

/// Exactly one protocol, written as `[protocol.<kind>]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Hahn(HahnBlock),
    PhaseCycle(PhaseCycleBlock),
    Multiquantum(MultiquantumBlock),
    Cpmg(CpmgBlock),
    Tspace(TspaceBlock),
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Hahn(_) => "hahn",
            Protocol::PhaseCycle(_) => "phase_cycle",
            Protocol::Multiquantum(_) => "multiquantum",
            Protocol::Cpmg(_) => "cpmg",
            Protocol::Tspace(_) => "tspace",
        }
    }
}

/// Strictly increasing list of non-negative times, written either as an
/// array or as `{ start, stop, count }`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeList(pub Vec<f64>);

impl Serialize for TimeList {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.iter().map(|&t| Time::new(t)).collect::<Vec<_>>().serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearRange {
    start: Time,
    stop: Time,
    count: usize,
}

impl<'de> Deserialize<'de> for TimeList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec<f64>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a list of times or { start, stop, count }")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::new();
                while let Some(t) = seq.next_element::<Time>()? {
                    out.push(t.value);
                }
                Ok(out)
            }
            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Vec<f64>, A::Error> {
                let r = LinearRange::deserialize(de::value::MapAccessDeserializer::new(map))?;
                match r.count {
                    0 => Ok(vec![]),
                    1 => Ok(vec![r.start.value]),
                    n => {
                        let step = (r.stop.value - r.start.value) / (n - 1) as f64;
                        Ok((0..n).map(|k| r.start.value + step * k as f64).collect())
                    }
                }
            }
        }
        let v = d.deserialize_any(V)?;
        if v.is_empty() {
            return Err(de::Error::custom("time list is empty"));
        }
        if v.iter().any(|&t| t < 0.0) {
            return Err(de::Error::custom("times must be >= 0"));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(de::Error::custom("times must be strictly increasing"));
        }
        Ok(TimeList(v))
    }
}

/// `"free"` or a fixed stretch exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSpec(pub AlphaMode);

impl Serialize for AlphaSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            AlphaMode::Free => s.serialize_str("free"),
            AlphaMode::Fixed(a) => s.serialize_f64(a),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = AlphaSpec;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"free\" or a number between 0.5 and 4")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<AlphaSpec, E> {
                if v == "free" {
                    Ok(AlphaSpec(AlphaMode::Free))
                } else {
                    Err(E::custom(format!("alpha = \"{v}\": expected \"free\" or a number")))
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<AlphaSpec, E> {
                use crate::experiments::fit::{ALPHA_MAX, ALPHA_MIN};
                if (ALPHA_MIN..=ALPHA_MAX).contains(&v) {
                    Ok(AlphaSpec(AlphaMode::Fixed(v)))
                } else {
                    Err(E::custom(format!("alpha = {v} outside [{ALPHA_MIN}, {ALPHA_MAX}]")))
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<AlphaSpec, E> {
                self.visit_f64(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<AlphaSpec, E> {
                self.visit_f64(v as f64)
            }
        }
        d.deserialize_any(V)
    }
}

fn alpha_free() -> AlphaSpec {
    AlphaSpec(AlphaMode::Free)
}

fn alpha_one() -> AlphaSpec {
    AlphaSpec(AlphaMode::Fixed(1.0))
}

fn alpha_two() -> AlphaSpec {
    AlphaSpec(AlphaMode::Fixed(2.0))
}

/// Single-quantum transition: `"center"`, `"satellite"` (upper),
/// `"satellite_lower"` or a level pair `[i, j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransitionSpec {
    Named(TransitionName),
    Levels([usize; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionName {
    Center,
    Satellite,
    SatelliteLower,
}

impl TransitionSpec {
    pub fn levels(&self, dim: usize) -> (usize, usize) {
        match *self {
            TransitionSpec::Named(TransitionName::Center) => (dim / 2 - 1, dim / 2),
            TransitionSpec::Named(TransitionName::Satellite) => (0, 1),
            TransitionSpec::Named(TransitionName::SatelliteLower) => (dim - 2, dim - 1),
            TransitionSpec::Levels([i, j]) => (i, j),
        }
    }
}

trait ResolveTransition {
    fn resolve(&self, sys: &SpinSystem) -> Result<CoherenceLabel, (Option<Range<usize>>, String)>;
}

impl ResolveTransition for Spanned<TransitionSpec> {
    fn resolve(&self, sys: &SpinSystem) -> Result<CoherenceLabel, (Option<Range<usize>>, String)> {
        let (i, j) = self.get_ref().levels(sys.dim());
        let label = coherence_label(sys, i, j).map_err(|e| (Some(self.span()), format!("transition: {e}")))?;
        if label.order.abs() != 1 {
            return Err((
                Some(self.span()),
                format!("transition ({i}, {j}) has order {}, need a single-quantum pair", label.order),
            ));
        }
        Ok(label)
    }
}

fn default_after_init() -> Time {
    Time::new(crate::experiments::MARKER_AFTER_INIT)
}

fn default_marker_duration() -> Time {
    Time::new(crate::experiments::MARKER_DURATION)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerBlock {
    pub kind: MarkerKind,
    pub t_space: Time,
    #[serde(default = "default_after_init")]
    pub after_init: Time,
    #[serde(default = "default_marker_duration")]
    pub duration: Time,
}

impl MarkerBlock {
    pub fn placement(&self) -> MarkerPlacement {
        MarkerPlacement {
            kind: self.kind,
            t_space: self.t_space.value,
            after_init: self.after_init.value,
            duration: self.duration.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HahnBlock {
    pub transition: Spanned<TransitionSpec>,
    pub tau: TimeList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<MarkerBlock>,
    #[serde(default = "alpha_free")]
    pub alpha: AlphaSpec,
}

fn default_steps() -> Spanned<usize> {
    Spanned::new(0..0, DEFAULT_PHASE_STEPS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseCycleBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_level: Option<Spanned<usize>>,
    pub tau1: Time,
    pub tau2: Time,
    #[serde(default = "default_steps")]
    pub phase_steps: Spanned<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiquantumBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_level: Option<Spanned<usize>>,
    pub tau: TimeList,
    #[serde(default = "default_steps")]
    pub phase_steps: Spanned<usize>,
    #[serde(default = "alpha_one")]
    pub alpha: AlphaSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpmgBlock {
    pub transition: Spanned<TransitionSpec>,
    pub n: Vec<NonZeroUsize>,
    /// Evolution times for n = 1.
    pub times: TimeList,
    /// Times for n pulses are `times · n^exponent`.
    #[serde(default)]
    pub exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<MarkerBlock>,
    #[serde(default = "alpha_free")]
    pub alpha: AlphaSpec,
}

impl CpmgBlock {
    pub fn grid(&self) -> CpmgGrid {
        CpmgGrid {
            base: self.times.0.clone(),
            exponent: self.exponent,
        }
    }
}

fn light() -> MarkerKind {
    MarkerKind::Light
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TspaceBlock {
    pub transition: Spanned<TransitionSpec>,
    pub t_space: TimeList,
    #[serde(default = "light")]
    pub marker_kind: MarkerKind,
    pub tau: TimeList,
    #[serde(default = "alpha_two")]
    pub alpha: AlphaSpec,
}

impl PhaseCycleBlock {
    pub fn level(&self, dim: usize) -> usize {
        self.init_level.as_ref().map_or(default_init_level(dim), |s| *s.get_ref())
    }
}

impl MultiquantumBlock {
    pub fn level(&self, dim: usize) -> usize {
        self.init_level.as_ref().map_or(default_init_level(dim), |s| *s.get_ref())
    }
}

/// Resolves a validated transition field.
pub fn transition_label(spec: &Spanned<TransitionSpec>, sys: &SpinSystem) -> CoherenceLabel {
    spec.resolve(sys).expect("validated at parse time")
}

// ---------------------------------------------------------------- execution

fn one() -> NonZeroUsize {
    NonZeroUsize::MIN
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionBlock {
    /// Static-disorder members.
    #[serde(default = "one")]
    pub ensemble: NonZeroUsize,
    /// Noise realizations per member.
    #[serde(default = "one")]
    pub realizations: NonZeroUsize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<NonZeroUsize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

fn default_dir() -> String {
    "results".into()
}

fn default_prefix() -> String {
    "run".into()
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_prefix")]
    pub prefix: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: default_dir(),
            prefix: default_prefix(),
            formats: default_formats(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
spin_I = "3/2"
nu0 = "2.56025 MHz"
nu_Q = "10 kHz"

[protocol.hahn]
transition = "satellite"
tau = ["1 ms", "2 ms", "3 ms", "4 ms"]

[execution]
seed = 7
"#;

    #[test]
    fn minimal_hahn_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        let sys = cfg.spin_system();
        assert_eq!(sys.nu0(), 2.56025e6);
        assert_eq!(sys.nu_rf(), sys.nu0());
        assert_eq!(cfg.execution.ensemble.get(), 1);
        assert_eq!(cfg.output.prefix, "run");
        match &cfg.protocol {
            Protocol::Hahn(h) => {
                assert_eq!(h.tau.0, vec![1e-3, 2e-3, 3e-3, 4e-3]);
                assert_eq!(h.alpha, AlphaSpec(AlphaMode::Free));
            }
            p => panic!("wrong protocol {}", p.name()),
        }
    }

    #[test]
    fn integer_spin_rejected_with_line() {
        let text = MINIMAL.replace("spin_I = \"3/2\"", "spin_I = 1");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.line, Some(3), "{err}");
        assert!(err.message.contains("spin_I"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nthreads = 2");
        let err = parse_config(&text).unwrap_err();
        assert!(err.message.contains("threads"), "{err}");
        assert_eq!(err.line, Some(13));
    }

    #[test]
    fn missing_seed_rejected() {
        let text = MINIMAL.replace("seed = 7", "");
        assert!(parse_config(&text).unwrap_err().message.contains("seed"));
    }

    #[test]
    fn bare_number_rejected() {
        let text = MINIMAL.replace("\"10 kHz\"", "10000");
        let err = parse_config(&text).unwrap_err();
        assert!(err.message.contains("missing a unit"), "{err}");
        assert_eq!(err.line, Some(5));
    }

    #[test]
    fn overspecified_larmor() {
        let ok = MINIMAL.replace("nu0 = \"2.56025 MHz\"", "nu0 = \"2.56025 MHz\"\ngamma_n = \"7.315 MHz/T\"\nB_z = \"0.35 T\"");
        parse_config(&ok).unwrap();
        let bad = ok.replace("0.35 T", "0.36 T");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.message.contains("over-specified"), "{err}");
        assert!(err.line.is_some());
    }

    #[test]
    fn bad_transition_is_anchored() {
        let text = MINIMAL.replace("\"satellite\"", "[0, 2]");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.line, Some(8), "{err}");
    }

    #[test]
    fn round_trip_is_idempotent() {
        let cfg = parse_config(MINIMAL).unwrap();
        let once = cfg.to_toml();
        let again = parse_config(&once).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), once);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn range_time_list() {
        let text = MINIMAL.replace(
            "tau = [\"1 ms\", \"2 ms\", \"3 ms\", \"4 ms\"]",
            "tau = { start = \"1 ms\", stop = \"4 ms\", count = 4 }",
        );
        match parse_config(&text).unwrap().protocol {
            Protocol::Hahn(h) => assert_eq!(h.tau.0.len(), 4),
            _ => unreachable!(),
        }
    }

    #[test]
    fn two_protocols_rejected() {
        let text = format!("{MINIMAL}\n[protocol.phase_cycle]\ntau1 = \"1 ms\"\ntau2 = \"1 ms\"\n");
        assert!(parse_config(&text).is_err());
    }
}
