//! Single-qubit polarization states, density matrices and the Pauli basis.
//!
//! Bloch convention: |H⟩ is +z, |D⟩ is +x and |R⟩ is +y, so that
//! `ρ = (I + xX + yY + zZ) / 2` with `X`, `Y`, `Z` written in the H/V basis.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::serial::ReIm;

const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-9;

pub(crate) const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Labels of the six polarization states used as probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl StateLabel {
    pub const ALL: [StateLabel; 6] = [
        StateLabel::H,
        StateLabel::V,
        StateLabel::D,
        StateLabel::A,
        StateLabel::R,
        StateLabel::L,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StateLabel::H => "H",
            StateLabel::V => "V",
            StateLabel::D => "D",
            StateLabel::A => "A",
            StateLabel::R => "R",
            StateLabel::L => "L",
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" => Ok(StateLabel::H),
            "V" => Ok(StateLabel::V),
            "D" => Ok(StateLabel::D),
            "A" => Ok(StateLabel::A),
            "R" => Ok(StateLabel::R),
            "L" => Ok(StateLabel::L),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// A pure polarization state `amp_h |H⟩ + amp_v |V⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    amp_h: Complex64,
    amp_v: Complex64,
}

impl QubitState {
    pub fn new(amp_h: Complex64, amp_v: Complex64) -> Result<Self> {
        let norm_sq = amp_h.norm_sqr() + amp_v.norm_sqr();
        if !((norm_sq - 1.0).abs() <= NORM_TOL) {
            return Err(Error::Unnormalized { norm_sq });
        }
        Ok(QubitState { amp_h, amp_v })
    }

    /// Linear polarization at `theta` radians from horizontal.
    pub fn linear(theta: f64) -> Self {
        QubitState {
            amp_h: c(theta.cos(), 0.0),
            amp_v: c(theta.sin(), 0.0),
        }
    }

    pub fn amp_h(&self) -> Complex64 {
        self.amp_h
    }

    pub fn amp_v(&self) -> Complex64 {
        self.amp_v
    }

    pub fn to_vector(&self) -> Vector2<Complex64> {
        Vector2::new(self.amp_h, self.amp_v)
    }

    /// The state orthogonal to `self`, with the phase convention
    /// `(h, v) ↦ (-v*, h*)`.
    pub fn orthogonal(&self) -> Self {
        QubitState {
            amp_h: -self.amp_v.conj(),
            amp_v: self.amp_h.conj(),
        }
    }

    /// Applies a 2×2 unitary, renormalizing away round-off.
    pub fn transformed(&self, u: &Matrix2<Complex64>) -> Self {
        let v = u * self.to_vector();
        let n = v.norm();
        QubitState {
            amp_h: v[0] / n,
            amp_v: v[1] / n,
        }
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &QubitState) -> f64 {
        (self.amp_h.conj() * other.amp_h + self.amp_v.conj() * other.amp_v).norm_sqr()
    }
}

pub fn universal_state(label: StateLabel) -> QubitState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (amp_h, amp_v) = match label {
        StateLabel::H => (c(1.0, 0.0), c(0.0, 0.0)),
        StateLabel::V => (c(0.0, 0.0), c(1.0, 0.0)),
        StateLabel::D => (c(s, 0.0), c(s, 0.0)),
        StateLabel::A => (c(s, 0.0), c(-s, 0.0)),
        StateLabel::R => (c(s, 0.0), c(0.0, s)),
        StateLabel::L => (c(s, 0.0), c(0.0, -s)),
    };
    QubitState { amp_h, amp_v }
}

/// String form of [`universal_state`], rejecting unknown labels.
pub fn universal_state_named(label: &str) -> Result<QubitState> {
    Ok(universal_state(label.parse()?))
}

/// Pauli operators in the order `I, X, Y, Z` (indices 0..=3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Pauli> {
        Pauli::ALL.get(i).copied()
    }

    pub fn symbol(self) -> &'static str {
        ["I", "X", "Y", "Z"][self.index()]
    }

    pub fn matrix(self) -> Matrix2<Complex64> {
        match self {
            Pauli::I => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)),
            Pauli::X => Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)),
            Pauli::Y => Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
            Pauli::Z => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)),
        }
    }
}

/// The four Pauli matrices indexed by basis position.
pub fn pauli_basis() -> [Matrix2<Complex64>; 4] {
    Pauli::ALL.map(Pauli::matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = BlochVector { x, y, z };
        if !(v.norm() <= 1.0 + 1e-9) {
            return Err(Error::InvalidDensity(format!(
                "Bloch vector norm {} exceeds 1",
                v.norm()
            )));
        }
        Ok(v)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// A valid single-qubit density matrix: Hermitian, unit trace, PSD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Matrix2<Complex64>);

impl DensityMatrix {
    /// Validates `m`. Tiny anti-Hermitian round-off (below 1e-12) is removed.
    pub fn new(m: Matrix2<Complex64>) -> Result<Self> {
        let dynm = linalg::to_dyn(&m);
        let herm_err = linalg::hermiticity_error(&dynm);
        if !(herm_err <= HERMITIAN_TOL) {
            return Err(Error::InvalidDensity(format!(
                "not Hermitian (max deviation {herm_err:e})"
            )));
        }
        let tr = m.trace();
        if !((tr.re - 1.0).abs() <= TRACE_TOL && tr.im.abs() <= TRACE_TOL) {
            return Err(Error::InvalidDensity(format!("trace {tr} is not 1")));
        }
        let h = linalg::hermitian_part(&dynm);
        let lmin = linalg::min_eigenvalue(&h);
        if lmin < linalg::PSD_FLOOR {
            return Err(Error::InvalidDensity(format!(
                "negative eigenvalue {lmin:e}"
            )));
        }
        Ok(DensityMatrix(linalg::from_dyn(&h)))
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Pauli::I.matrix().scale(0.5))
    }

    /// `(I + xX + yY + zZ) / 2`.
    pub fn from_bloch(b: &BlochVector) -> Self {
        let [x, y, z] = b.components();
        let m = Pauli::I.matrix()
            + Pauli::X.matrix().scale(x)
            + Pauli::Y.matrix().scale(y)
            + Pauli::Z.matrix().scale(z);
        DensityMatrix(m.scale(0.5))
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.0
    }

    /// Ascending eigenvalues.
    /// Ascending eigenvalues, in closed form.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let (a, d) = (self.0[(0, 0)].re, self.0[(1, 1)].re);
        let mean = 0.5 * (a + d);
        let radius = (0.5 * (a - d)).hypot(self.0[(0, 1)].norm());
        [mean - radius, mean + radius]
    }

    /// `tr(ρ O)` for a Hermitian observable.
    pub fn expectation(&self, op: &Matrix2<Complex64>) -> f64 {
        (self.0 * op).trace().re
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn population(&self, psi: &QubitState) -> f64 {
        let v = psi.to_vector();
        (v.adjoint() * self.0 * v)[(0, 0)].re
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = linalg::to_dyn(&(self.0 - other.0));
        let (values, _) = linalg::eigh(&diff);
        0.5 * values.iter().map(|l| l.abs()).sum::<f64>()
    }

    pub fn is_pure(&self) -> bool {
        self.eigenvalues()[0].abs() <= 1e-9
    }
}

pub fn density_of(state: &QubitState) -> DensityMatrix {
    let v = state.to_vector();
    DensityMatrix(v * v.adjoint())
}

/// `F = tr √(√ρ_received ρ_sent √ρ_received)`, the square-root (not squared)
/// form. Clamped to `[0, 1]` against round-off.
pub fn state_fidelity(sent: &DensityMatrix, received: &DensityMatrix) -> Result<f64> {
    let f = linalg::uhlmann_fidelity(&linalg::to_dyn(&received.0), &linalg::to_dyn(&sent.0))
        .ok_or_else(|| Error::InvalidDensity("fidelity argument is not PSD".into()))?;
    Ok(f.clamp(0.0, 1.0))
}

/// `tr(ρ²)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    (rho.0 * rho.0).trace().re
}

pub fn bloch_of(rho: &DensityMatrix) -> BlochVector {
    BlochVector {
        x: rho.expectation(&Pauli::X.matrix()),
        y: rho.expectation(&Pauli::Y.matrix()),
        z: rho.expectation(&Pauli::Z.matrix()),
    }
}

/// Haar-random pure state.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R) -> QubitState {
    let mut g = || c(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let (h, v) = (g(), g());
    let n = (h.norm_sqr() + v.norm_sqr()).sqrt();
    QubitState {
        amp_h: h / n,
        amp_v: v / n,
    }
}

/// Hilbert-Schmidt random mixed state (`G G† / tr`, `G` complex Ginibre).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let g = Matrix2::from_fn(|_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = g * g.adjoint();
    let tr = m.trace().re;
    let m = m.unscale(tr);
    DensityMatrix(linalg::from_dyn(&linalg::hermitian_part(&linalg::to_dyn(
        &m,
    ))))
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ReIm::from_matrix(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ReIm::deserialize(d)?;
        let m = raw.to_matrix::<2>().map_err(serde::de::Error::custom)?;
        DensityMatrix::new(m).map_err(serde::de::Error::custom)
    }
}
