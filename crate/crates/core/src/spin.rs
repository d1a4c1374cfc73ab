//! Spin system of an ionized donor nucleus: first-order quadrupolar Zeeman
//! Hamiltonian, rotating-frame evolution frequencies and coherence orders.
//!
//! Levels are indexed from the top projection down: index 0 is `m = +I`,
//! index `dim - 1` is `m = -I`. With this ordering a nonselective π pulse is
//! an antidiagonal permutation of the density matrix.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant in J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Elementary charge in C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Gyromagnetic ratio of ⁷⁵As in Hz/T.
pub const GAMMA_AS75: f64 = 7.3150e6;
/// Default static field in T (X-band EDMR resonance region).
pub const DEFAULT_B_Z: f64 = 0.35;

/// Spin quantum number stored as twice its value so it is always exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Spin {
    twice: u32,
}

impl Spin {
    pub const HALF: Spin = Spin { twice: 1 };
    pub const THREE_HALVES: Spin = Spin { twice: 3 };

    /// Spin from `2I`. Only odd values (half-integer spins) up to 9/2 are
    /// accepted, which covers the group-V donors.
    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice % 2 == 1 && twice <= 9 {
            Ok(Spin { twice })
        } else {
            Err(Error::InvalidSpin(twice as f64 / 2.0))
        }
    }

    pub fn twice(self) -> u32 {
        self.twice
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn dim(self) -> usize {
        self.twice as usize + 1
    }

    /// Projection `m` of level `index` (descending ordering).
    pub fn projection(self, index: usize) -> f64 {
        self.value() - index as f64
    }
}

impl TryFrom<f64> for Spin {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        let twice = 2.0 * v;
        if !twice.is_finite() || twice <= 0.0 || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpin(v));
        }
        Spin::from_twice(twice.round() as u32)
    }
}

impl From<Spin> for f64 {
    fn from(s: Spin) -> f64 {
        s.value()
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2", self.twice)
    }
}

/// Nuclear spin with its Zeeman, quadrupole and rotating-frame parameters.
/// All frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    spin: Spin,
    nu0: f64,
    nu_q: f64,
    nu_rf: f64,
    delta_nu0: f64,
}

impl SpinSystem {
    pub fn new(spin: Spin, nu0: f64, nu_q: f64, nu_rf: f64) -> Result<Self> {
        for (name, v) in [("nu0", nu0), ("nuQ", nu_q), ("nu_rf", nu_rf)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(SpinSystem {
            spin,
            nu0,
            nu_q,
            nu_rf,
            delta_nu0: nu0 - nu_rf,
        })
    }

    /// Spin 3/2 (⁷⁵As) with the given Larmor, quadrupole and carrier frequencies.
    pub fn arsenic(nu0: f64, nu_q: f64, nu_rf: f64) -> Result<Self> {
        Self::new(Spin::THREE_HALVES, nu0, nu_q, nu_rf)
    }

    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn nu_q(&self) -> f64 {
        self.nu_q
    }

    pub fn nu_rf(&self) -> f64 {
        self.nu_rf
    }

    pub fn delta_nu0(&self) -> f64 {
        self.delta_nu0
    }

    /// Same system with static offsets added to the detuning and to ν_Q.
    /// Used to build ensemble members; the carrier stays fixed.
    pub fn with_offsets(&self, d_delta_nu0: f64, d_nu_q: f64) -> SpinSystem {
        SpinSystem {
            spin: self.spin,
            nu0: self.nu0 + d_delta_nu0,
            nu_q: self.nu_q + d_nu_q,
            nu_rf: self.nu_rf,
            delta_nu0: self.delta_nu0 + d_delta_nu0,
        }
    }

    /// Constant subtracted from m² in the quadrupole term. For I = 3/2 this is
    /// 5/4 as written for As⁺; other spins use the traceless I(I+1)/3.
    fn quadrupole_offset(&self) -> f64 {
        if self.spin == Spin::THREE_HALVES {
            1.25
        } else {
            let i = self.spin.value();
            i * (i + 1.0) / 3.0
        }
    }

    fn level_energy(&self, larmor: f64, index: usize) -> f64 {
        let m = self.spin.projection(index);
        -larmor * m + 0.5 * self.nu_q * (m * m - self.quadrupole_offset())
    }

    /// Lab-frame level energies E/h in Hz, ordered from m = +I downwards.
    pub fn energies(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.level_energy(self.nu0, k))
            .collect()
    }

    /// Rotating-frame energies E^rot/h = E/h + ν_rf·m.
    pub fn rotating_energies(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.level_energy(self.delta_nu0, k))
            .collect()
    }

    /// Frequency of the single-quantum transition between levels `k` and
    /// `k + 1`, taken as E(lower m) − E(higher m) so it is positive for ν₀ > 0.
    pub fn sqt_frequency(&self, k: usize) -> Result<f64> {
        if k + 1 >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: k + 1,
                dim: self.dim(),
            });
        }
        Ok(self.level_energy(self.nu0, k + 1) - self.level_energy(self.nu0, k))
    }
}

/// Diagonal lab-frame Hamiltonian H/h in Hz.
pub fn build_hamiltonian(sys: &SpinSystem) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sys.energies()))
}

/// Geometry entering the first-order quadrupole frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrupoleGeometry {
    /// Effective field gradient V₃₃ in V/m².
    pub v33: f64,
    /// Nuclear quadrupole moment Q in m².
    pub q_moment: f64,
    /// Angle between B_z and the principal gradient axis, radians.
    pub theta: f64,
    /// Gyromagnetic ratio in Hz/T.
    pub gamma_n: f64,
    /// Static field in T.
    pub b_z: f64,
}

impl QuadrupoleGeometry {
    pub fn new(v33: f64, q_moment: f64, theta: f64, gamma_n: f64, b_z: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::OutOfRange {
                field: "theta",
                value: theta,
                expected: "0 <= theta <= pi",
            });
        }
        Ok(QuadrupoleGeometry {
            v33,
            q_moment,
            theta,
            gamma_n,
            b_z,
        })
    }

    pub fn larmor(&self) -> f64 {
        self.gamma_n * self.b_z
    }
}

/// First-order quadrupole frequency in Hz:
/// h·ν_Q = ½·V₃₃·e·Q·½(3cos²ϑ − 1).
pub fn quadrupole_frequency(geom: &QuadrupoleGeometry) -> f64 {
    let c = geom.theta.cos();
    let angular = 0.5 * (3.0 * c * c - 1.0);
    0.5 * geom.v33 * ELEMENTARY_CHARGE * geom.q_moment * angular / PLANCK
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceKind {
    Population,
    /// Central single-quantum transition, +1/2 ↔ −1/2.
    CenterSqt,
    /// Satellite single-quantum transitions.
    SatelliteSqt,
    Dqt,
    Tqt,
    Higher,
}

impl fmt::Display for CoherenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CoherenceKind::Population => "population",
            CoherenceKind::CenterSqt => "cSQT",
            CoherenceKind::SatelliteSqt => "sSQT",
            CoherenceKind::Dqt => "DQT",
            CoherenceKind::Tqt => "TQT",
            CoherenceKind::Higher => "higher",
        };
        f.write_str(s)
    }
}

/// Density-matrix element (i, j) with its coherence order p = m_i − m_j.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceLabel {
    pub i: usize,
    pub j: usize,
    pub m_i: f64,
    pub m_j: f64,
    pub order: i32,
    pub kind: CoherenceKind,
}

pub fn coherence_label(sys: &SpinSystem, i: usize, j: usize) -> Result<CoherenceLabel> {
    let dim = sys.dim();
    for index in [i, j] {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
    }
    let spin = sys.spin();
    let (m_i, m_j) = (spin.projection(i), spin.projection(j));
    let order = j as i32 - i as i32;
    let kind = match order.unsigned_abs() {
        0 => CoherenceKind::Population,
        1 if m_i.abs() == 0.5 && m_j.abs() == 0.5 => CoherenceKind::CenterSqt,
        1 => CoherenceKind::SatelliteSqt,
        2 => CoherenceKind::Dqt,
        3 => CoherenceKind::Tqt,
        _ => CoherenceKind::Higher,
    };
    Ok(CoherenceLabel {
        i,
        j,
        m_i,
        m_j,
        order,
        kind,
    })
}

/// Rotating-frame evolution frequencies Δν_ij in Hz together with their
/// decomposition Δν_ij = p_ij·Δν₀ + q_ij·ν_Q.
///
/// The sign is chosen so that an element evolves as
/// ρ_ij(t) = ρ_ij(0)·exp(i·2π·Δν_ij·t) under the Schrödinger dynamics of the
/// diagonal Hamiltonian, i.e. Δν_ij = (E_j − E_i)/h. With H = −ν₀I_z + … this
/// makes the detuning coefficient equal to the coherence order.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaNuTable {
    entries: DMatrix<f64>,
    detuning_coeff: DMatrix<f64>,
    quadrupole_coeff: DMatrix<f64>,
}

impl DeltaNuTable {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Coefficient of Δν₀ in entry (i, j); equals the coherence order.
    pub fn detuning_coeff(&self, i: usize, j: usize) -> f64 {
        self.detuning_coeff[(i, j)]
    }

    /// Coefficient of ν_Q in entry (i, j).
    pub fn quadrupole_coeff(&self, i: usize, j: usize) -> f64 {
        self.quadrupole_coeff[(i, j)]
    }

    /// Off-diagonal pairs (i < j) whose frequency carries no ν_Q term.
    pub fn quadrupole_immune_pairs(&self) -> Vec<(usize, usize)> {
        let d = self.dim();
        let mut out = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                if self.quadrupole_coeff[(i, j)] == 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn frequency_matrix(energies: &[f64]) -> DMatrix<f64> {
    let d = energies.len();
    DMatrix::from_fn(d, d, |i, j| energies[j] - energies[i])
}

pub fn delta_nu_table(sys: &SpinSystem) -> DeltaNuTable {
    let entries = frequency_matrix(&sys.rotating_energies());
    // The table is linear in (Δν₀, ν_Q); probing with unit values recovers the
    // coefficients without hard-coding them.
    let unit_detuning = SpinSystem::new(sys.spin(), 1.0, 0.0, 0.0).expect("finite");
    let unit_quadrupole = SpinSystem::new(sys.spin(), 0.0, 1.0, 0.0).expect("finite");
    DeltaNuTable {
        entries,
        detuning_coeff: frequency_matrix(&unit_detuning.rotating_energies()),
        quadrupole_coeff: frequency_matrix(&unit_quadrupole.rotating_energies()),
    }
}

/// Spin operators (I_x, I_y, I_z) in the descending-m basis.
pub fn spin_operators(spin: Spin) -> [DMatrix<Complex64>; 3] {
    let d = spin.dim();
    let i = spin.value();
    let mut raise = DMatrix::<Complex64>::zeros(d, d);
    for k in 1..d {
        let m = spin.projection(k);
        raise[(k - 1, k)] = Complex64::new((i * (i + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let lower = raise.adjoint();
    let ix = (&raise + &lower).map(|z| z * 0.5);
    let iy = (&raise - &lower).map(|z| z * Complex64::new(0.0, -0.5));
    let iz = DMatrix::from_fn(d, d, |r, c| {
        if r == c {
            Complex64::new(spin.projection(r), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    [ix, iy, iz]
}
