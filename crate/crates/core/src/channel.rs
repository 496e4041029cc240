//! Single-qubit channels in the Pauli χ representation and as Kraus sets,
//! plus the Jones matrices and Beer-Lambert loss used to build the link.
//!
//! The χ basis is always ordered `Ẽ₀ = I, Ẽ₁ = X, Ẽ₂ = Y, Ẽ₃ = Z` and the
//! channel acts as `ε(ρ) = Σ_mn χ_mn Ẽ_m ρ Ẽ_n†`.
//!
//! Loss never enters χ. A link is described by a trace-preserving
//! polarization map together with a scalar photon survival probability.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::photonics::LinkConfig;
use crate::qstate::{c, pauli_basis, DensityMatrix, Pauli};
use crate::serial::ReIm;

const CHI_HERMITIAN_TOL: f64 = 1e-10;
const TP_TOL: f64 = 1e-8;
const KRAUS_TOL: f64 = 1e-8;
/// χ eigenvalues below this are dropped when extracting Kraus operators.
const KRAUS_EIGEN_CUTOFF: f64 = 1e-12;

/// Process matrix over the Pauli basis; Hermitian, PSD and trace preserving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessMatrix(Matrix4<Complex64>);

impl ProcessMatrix {
    pub fn new(chi: Matrix4<Complex64>) -> Result<Self> {
        let d = linalg::to_dyn(&chi);
        let herm = linalg::hermiticity_error(&d);
        if !(herm <= CHI_HERMITIAN_TOL) {
            return Err(Error::InvalidProcess(format!(
                "not Hermitian (max deviation {herm:e})"
            )));
        }
        let h = linalg::hermitian_part(&d);
        let lmin = linalg::min_eigenvalue(&h);
        if lmin < linalg::PSD_FLOOR {
            return Err(Error::InvalidProcess(format!(
                "not positive semidefinite (eigenvalue {lmin:e})"
            )));
        }
        let chi = linalg::from_dyn(&h);
        let tp = tp_residual(&chi);
        if !(tp <= TP_TOL) {
            return Err(Error::InvalidProcess(format!(
                "not trace preserving (||Σ χ_mn Ẽ_n†Ẽ_m - I|| = {tp:e})"
            )));
        }
        Ok(ProcessMatrix(chi))
    }

    /// The identity channel: a single unit entry at (0, 0).
    pub fn ideal() -> Self {
        let mut chi = Matrix4::zeros();
        chi[(0, 0)] = c(1.0, 0.0);
        ProcessMatrix(chi)
    }

    pub fn chi(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Per-element `(modulus, argument)` in row-major order, the data behind
    /// a 3-D bar chart of χ.
    pub fn polar_elements(&self) -> Vec<ChiElement> {
        let mut out = Vec::with_capacity(16);
        for m in Pauli::ALL {
            for n in Pauli::ALL {
                let z = self.0[(m.index(), n.index())];
                out.push(ChiElement {
                    row: m.symbol(),
                    col: n.symbol(),
                    re: z.re,
                    im: z.im,
                    modulus: z.norm(),
                    argument: if z.norm() > 1e-15 { z.arg() } else { 0.0 },
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChiElement {
    pub row: &'static str,
    pub col: &'static str,
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub argument: f64,
}

/// Frobenius norm of `Σ_mn χ_mn Ẽ_n†Ẽ_m − I`.
pub(crate) fn tp_residual(chi: &Matrix4<Complex64>) -> f64 {
    (tp_map(chi) - Matrix2::identity()).norm()
}

pub(crate) fn tp_map(chi: &Matrix4<Complex64>) -> Matrix2<Complex64> {
    let e = pauli_basis();
    let mut acc = Matrix2::zeros();
    for m in 0..4 {
        for n in 0..4 {
            acc += (e[n].adjoint() * e[m]) * chi[(m, n)];
        }
    }
    acc
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChiJson {
    basis: Vec<String>,
    #[serde(flatten)]
    values: ReIm,
}

impl Serialize for ProcessMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ChiJson {
            basis: Pauli::ALL.iter().map(|p| p.symbol().to_string()).collect(),
            values: ReIm::from_matrix(&self.0),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProcessMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = ChiJson::deserialize(d)?;
        if raw.basis != ["I", "X", "Y", "Z"] {
            return Err(D::Error::custom(format!(
                "basis must be [\"I\",\"X\",\"Y\",\"Z\"], got {:?}",
                raw.basis
            )));
        }
        let m = raw.values.to_matrix::<4>().map_err(D::Error::custom)?;
        ProcessMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Operator-sum representation `ρ ↦ Σ K ρ K†`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet(Vec<Matrix2<Complex64>>);

impl KrausSet {
    pub fn new(operators: Vec<Matrix2<Complex64>>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::IncompleteKraus { deviation: 1.0 });
        }
        let sum: Matrix2<Complex64> = operators.iter().map(|k| k.adjoint() * k).sum();
        let deviation = (sum - Matrix2::identity()).norm();
        if !(deviation <= KRAUS_TOL) {
            return Err(Error::IncompleteKraus { deviation });
        }
        Ok(KrausSet(operators))
    }

    pub fn unitary(u: Matrix2<Complex64>) -> Result<Self> {
        KrausSet::new(vec![u])
    }

    pub fn operators(&self) -> &[Matrix2<Complex64>] {
        &self.0
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Matrix2<Complex64> {
        self.0.iter().map(|k| k * rho.matrix() * k.adjoint()).sum()
    }

    /// Kraus set of `self` applied after `first`.
    pub fn after(&self, first: &KrausSet) -> KrausSet {
        let mut ops = Vec::with_capacity(self.0.len() * first.0.len());
        for a in &self.0 {
            for b in &first.0 {
                ops.push(a * b);
            }
        }
        KrausSet(ops)
    }
}

/// `ε(ρ) = Σ_mn χ_mn Ẽ_m ρ Ẽ_n†`.
pub fn apply_channel(chi: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let tp = tp_residual(&chi.0);
    if !(tp <= TP_TOL) {
        return Err(Error::InvalidProcess(format!(
            "not trace preserving (residual {tp:e})"
        )));
    }
    let out = apply_chi_raw(&chi.0, rho.matrix());
    let out: Matrix2<Complex64> = linalg::from_dyn(&linalg::hermitian_part(&linalg::to_dyn(&out)));
    let tr = out.trace().re;
    DensityMatrix::new(out.unscale(tr))
}

pub(crate) fn apply_chi_raw(
    chi: &Matrix4<Complex64>,
    rho: &Matrix2<Complex64>,
) -> Matrix2<Complex64> {
    let e = pauli_basis();
    let mut acc = Matrix2::zeros();
    for m in 0..4 {
        let left = e[m] * rho;
        for n in 0..4 {
            let w = chi[(m, n)];
            if w != Complex64::ZERO {
                acc += (left * e[n].adjoint()) * w;
            }
        }
    }
    acc
}

/// Pauli coefficients `k_m = tr(Ẽ_m K) / 2`, so that `K = Σ k_m Ẽ_m`.
fn pauli_coefficients(k: &Matrix2<Complex64>) -> [Complex64; 4] {
    pauli_basis().map(|e| (e * k).trace() * 0.5)
}

pub fn chi_from_kraus(k: &KrausSet) -> Result<ProcessMatrix> {
    KrausSet::new(k.0.clone())?;
    let mut chi = Matrix4::zeros();
    for op in &k.0 {
        let coeff = pauli_coefficients(op);
        for m in 0..4 {
            for n in 0..4 {
                chi[(m, n)] += coeff[m] * coeff[n].conj();
            }
        }
    }
    ProcessMatrix::new(chi)
}

/// Kraus operators `√λ_j Σ_m v_j[m] Ẽ_m` from the eigendecomposition of χ,
/// each rescaled by a global phase so its leading nonzero entry is real and
/// non-negative.
pub fn kraus_from_chi(chi: &ProcessMatrix) -> Result<KrausSet> {
    let (values, vectors) = linalg::eigh(&linalg::to_dyn(&chi.0));
    if values[0] < linalg::PSD_FLOOR {
        return Err(Error::InvalidProcess(format!(
            "not positive semidefinite (eigenvalue {:e})",
            values[0]
        )));
    }
    let e = pauli_basis();
    let mut ops = Vec::new();
    for (j, &lambda) in values.iter().enumerate().rev() {
        if lambda < KRAUS_EIGEN_CUTOFF {
            continue;
        }
        let v = vectors.column(j);
        let mut k: Matrix2<Complex64> = (0..4).map(|m| e[m] * v[m]).sum();
        k *= c(lambda.sqrt(), 0.0);
        ops.push(normalize_phase(k));
    }
    KrausSet::new(ops)
}

/// Removes the global phase so the first entry (row-major) with modulus above
/// 1e-12 is real and non-negative.
pub(crate) fn normalize_phase(m: Matrix2<Complex64>) -> Matrix2<Complex64> {
    let lead = [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
        .into_iter()
        .find(|z| z.norm() > 1e-12);
    match lead {
        Some(z) => m * (z.conj() / z.norm()),
        None => m,
    }
}

/// χ of the unitary channel `ρ ↦ U ρ U†`.
pub fn unitary_chi(u: &Matrix2<Complex64>) -> Result<ProcessMatrix> {
    chi_from_kraus(&KrausSet::unitary(*u)?)
}

/// `ρ ↦ (1 − p) ρ + p I/2`, i.e. χ = diag(1 − 3p/4, p/4, p/4, p/4).
pub fn depolarizing_kraus(p: f64) -> Result<KrausSet> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter {
            name: "depolarizing",
            reason: format!("weight {p} outside [0, 1]"),
        });
    }
    let e = pauli_basis();
    let mut ops = vec![e[0] * c((1.0 - 0.75 * p).sqrt(), 0.0)];
    if p > 0.0 {
        let w = c((p / 4.0).sqrt(), 0.0);
        ops.extend(e[1..].iter().map(|m| m * w));
    }
    KrausSet::new(ops)
}

pub fn depolarizing_chi(p: f64) -> Result<ProcessMatrix> {
    chi_from_kraus(&depolarizing_kraus(p)?)
}

/// Rotation of linear polarization by `theta`: `cos θ I − i sin θ Y`.
pub fn rotation_unitary(theta: f64) -> Matrix2<Complex64> {
    let (s, co) = theta.sin_cos();
    Matrix2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveplateKind {
    /// Retardance π.
    Half,
    /// Retardance π/2.
    Quarter,
}

impl WaveplateKind {
    pub fn retardance(self) -> f64 {
        match self {
            WaveplateKind::Half => PI,
            WaveplateKind::Quarter => PI / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveplateSetting {
    kind: WaveplateKind,
    angle: f64,
}

impl WaveplateSetting {
    /// `angle` is the fast axis measured from horizontal; it is folded into `[0, π)`.
    pub fn new(kind: WaveplateKind, angle: f64) -> Self {
        let mut a = angle.rem_euclid(PI);
        if a >= PI {
            a = 0.0;
        }
        WaveplateSetting { kind, angle: a }
    }

    pub fn kind(&self) -> WaveplateKind {
        self.kind
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
}

/// Jones matrix `R(−θ) diag(1, e^{iδ}) R(θ)` of a linear retarder with fast
/// axis at `θ` and retardance `δ`, phase-normalized so the leading nonzero
/// entry is real and non-negative.
///
/// With this convention a quarter-wave plate at π/4 takes |H⟩ to |L⟩ and |V⟩
/// to |R⟩.
pub fn waveplate_unitary(s: &WaveplateSetting) -> Matrix2<Complex64> {
    let (sn, cs) = s.angle.sin_cos();
    let slow = Complex64::from_polar(1.0, s.kind.retardance());
    let one = c(1.0, 0.0);
    let off = (one - slow) * (cs * sn);
    let m = Matrix2::new(
        one * (cs * cs) + slow * (sn * sn),
        off,
        off,
        one * (sn * sn) + slow * (cs * cs),
    );
    normalize_phase(m)
}

/// `e^{−αL}`.
pub fn transmittance(alpha: f64, length: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("attenuation coefficient {alpha} must be non-negative"),
        });
    }
    if !(length >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "length",
            reason: format!("length {length} must be non-negative"),
        });
    }
    Ok((-alpha * length).exp())
}

/// `−10 log₁₀ T`.
pub fn loss_db(transmittance: f64) -> f64 {
    -10.0 * transmittance.log10()
}

pub fn db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannel {
    pub chi: ProcessMatrix,
    pub kraus: KrausSet,
    /// Probability that a launched photon reaches the receiver optics.
    pub survival_probability: f64,
}

/// Polarization map `depolarize(p) ∘ rotate(θ)` plus the classical survival
/// probability `e^{−αL} · 10^{−extra_loss_db/10}`.
pub fn build_link_channel(cfg: &LinkConfig) -> Result<LinkChannel> {
    cfg.validate()?;
    let noise = &cfg.polarization_noise;
    let rotation = KrausSet::unitary(rotation_unitary(noise.rotation_rad))?;
    let kraus = depolarizing_kraus(noise.depolarizing)?.after(&rotation);
    let chi = chi_from_kraus(&kraus)?;
    let survival =
        transmittance(cfg.alpha_per_m, cfg.length_m)? * db_to_transmittance(cfg.extra_loss_db);
    Ok(LinkChannel {
        chi,
        kraus,
        survival_probability: survival,
    })
}

/// Random CPTP map with `n_kraus` operators, cut from a Haar-like random
/// isometry `C² → C^{2n}` obtained by QR of a complex Ginibre matrix.
pub fn random_kraus<R: Rng + ?Sized>(rng: &mut R, n_kraus: usize) -> KrausSet {
    let n = n_kraus.max(1);
    let g = DMatrix::<Complex64>::from_fn(2 * n, 2, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let q = g.qr().q();
    let ops = (0..n)
        .map(|j| Matrix2::from_fn(|r, col| q[(2 * j + r, col)]))
        .collect();
    KrausSet(ops)
}

pub fn random_cptp<R: Rng + ?Sized>(rng: &mut R) -> ProcessMatrix {
    let n = rng.random_range(1..=4);
    chi_from_kraus(&random_kraus(rng, n)).expect("isometry yields a complete Kraus set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{density_of, random_density, universal_state, StateLabel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag_chi(d: [f64; 4]) -> Matrix4<Complex64> {
        Matrix4::from_diagonal(&nalgebra::Vector4::from(d.map(|x| c(x, 0.0))))
    }

    /// Independent expansion oracle: χ_mn = Σ_k tr(Ẽ_m K_k) conj(tr(Ẽ_n K_k)) / 4,
    /// written out with explicit 2×2 index loops.
    fn chi_oracle(ops: &[Matrix2<Complex64>]) -> Matrix4<Complex64> {
        let e = pauli_basis();
        let mut chi = Matrix4::zeros();
        for k in ops {
            let mut coeff = [Complex64::ZERO; 4];
            for (m, em) in e.iter().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        coeff[m] += em[(i, j)] * k[(j, i)];
                    }
                }
                coeff[m] *= 0.5;
            }
            for m in 0..4 {
                for n in 0..4 {
                    chi[(m, n)] += coeff[m] * coeff[n].conj();
                }
            }
        }
        chi
    }

    #[test]
    fn ideal_channel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let rho = random_density(&mut rng);
            let out = apply_channel(&ProcessMatrix::ideal(), &rho).unwrap();
            assert!((out.matrix() - rho.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn full_depolarization() {
        let chi = ProcessMatrix::new(diag_chi([0.25; 4])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = apply_channel(&chi, &random_density(&mut rng)).unwrap();
        assert!((out.matrix() - DensityMatrix::maximally_mixed().matrix()).norm() < 1e-14);
    }

    #[test]
    fn unitary_chi_matches_conjugation() {
        let u = waveplate_unitary(&WaveplateSetting::new(WaveplateKind::Quarter, 0.3));
        let chi = unitary_chi(&u).unwrap();
        let psi = density_of(&universal_state(StateLabel::D));
        let out = apply_channel(&chi, &psi).unwrap();
        let direct = u * psi.matrix() * u.adjoint();
        assert!((out.matrix() - direct).norm() < 1e-12);
    }

    #[test]
    fn chi_from_simple_kraus_sets() {
        let e = pauli_basis();
        let chi = chi_from_kraus(&KrausSet::new(vec![e[0]]).unwrap()).unwrap();
        assert!((chi.chi() - ProcessMatrix::ideal().chi()).norm() < 1e-15);
        let chi = chi_from_kraus(&KrausSet::new(vec![e[1]]).unwrap()).unwrap();
        assert!((chi.chi() - diag_chi([0.0, 1.0, 0.0, 0.0])).norm() < 1e-15);

        // {√(1−p) I, √(p/3) X, √(p/3) Y, √(p/3) Z} with p = 0.3.
        let p: f64 = 0.3;
        let ops = vec![
            e[0] * c((1.0 - p).sqrt(), 0.0),
            e[1] * c((p / 3.0).sqrt(), 0.0),
            e[2] * c((p / 3.0).sqrt(), 0.0),
            e[3] * c((p / 3.0).sqrt(), 0.0),
        ];
        let oracle = chi_oracle(&ops);
        assert!((oracle - diag_chi([0.7, 0.1, 0.1, 0.1])).norm() < 1e-15);
        let chi = chi_from_kraus(&KrausSet::new(ops).unwrap()).unwrap();
        assert!((chi.chi() - oracle).norm() < 1e-14);
    }

    #[test]
    fn incomplete_kraus_rejected() {
        let e = pauli_basis();
        assert!(matches!(
            KrausSet::new(vec![e[0] * c(0.9, 0.0)]),
            Err(Error::IncompleteKraus { .. })
        ));
    }

    #[test]
    fn non_tp_chi_rejected() {
        assert!(matches!(
            ProcessMatrix::new(diag_chi([0.5, 0.1, 0.1, 0.1])),
            Err(Error::InvalidProcess(_))
        ));
        assert!(ProcessMatrix::new(diag_chi([1.1, -0.1, 0.0, 0.0])).is_err());
    }

    #[test]
    fn kraus_from_ideal_is_identity() {
        let k = kraus_from_chi(&ProcessMatrix::ideal()).unwrap();
        assert_eq!(k.operators().len(), 1);
        assert!((k.operators()[0] - Matrix2::identity()).norm() < 1e-14);
    }

    #[test]
    fn kraus_from_full_depolarizer_equal_norms() {
        let k = kraus_from_chi(&depolarizing_chi(1.0).unwrap()).unwrap();
        assert_eq!(k.operators().len(), 4);
        for op in k.operators() {
            assert_abs_diff_eq!(op.norm(), 0.5f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn waveplates() {
        let hwp0 = waveplate_unitary(&WaveplateSetting::new(WaveplateKind::Half, 0.0));
        assert!((hwp0 - Pauli::Z.matrix()).norm() < 1e-15);

        let h = universal_state(StateLabel::H);
        let hwp = waveplate_unitary(&WaveplateSetting::new(WaveplateKind::Half, PI / 8.0));
        assert_abs_diff_eq!(
            h.transformed(&hwp).overlap(&universal_state(StateLabel::D)),
            1.0,
            epsilon = 1e-12
        );

        let qwp = waveplate_unitary(&WaveplateSetting::new(WaveplateKind::Quarter, PI / 4.0));
        assert_abs_diff_eq!(
            h.transformed(&qwp).overlap(&universal_state(StateLabel::L)),
            1.0,
            epsilon = 1e-12
        );
        let v = universal_state(StateLabel::V);
        assert_abs_diff_eq!(
            v.transformed(&qwp).overlap(&universal_state(StateLabel::R)),
            1.0,
            epsilon = 1e-12
        );

        for kind in [WaveplateKind::Half, WaveplateKind::Quarter] {
            for a in [-2.0, 0.0, 0.7, 3.0, 9.0] {
                let s = WaveplateSetting::new(kind, a);
                assert!((0.0..PI).contains(&s.angle()));
                let u = waveplate_unitary(&s);
                assert!((u.adjoint() * u - Matrix2::identity()).norm() < 1e-12);
                assert!(u[(0, 0)].im.abs() < 1e-15 && u[(0, 0)].re >= 0.0);
            }
        }
    }

    #[test]
    fn transmittance_values() {
        let t = transmittance(0.16, 55.0).unwrap();
        assert_abs_diff_eq!(t, (-8.8f64).exp(), epsilon = 1e-18);
        assert!((t - 1.507e-4).abs() < 5e-8);
        assert!((loss_db(t) - 38.2).abs() < 0.05);
        assert_eq!(transmittance(3.0, 0.0).unwrap(), 1.0);
        assert!((transmittance(0.018, 55.0).unwrap() - 0.3716).abs() < 5e-5);
        assert!(transmittance(-0.1, 1.0).is_err());
        assert!(transmittance(0.1, -1.0).is_err());
    }

    #[test]
    fn chi_json_layout() {
        let chi = depolarizing_chi(0.3).unwrap();
        let js = serde_json::to_value(chi).unwrap();
        assert_eq!(js["basis"], serde_json::json!(["I", "X", "Y", "Z"]));
        assert_abs_diff_eq!(js["re"][0][0].as_f64().unwrap(), 0.775, epsilon = 1e-12);
        let back: ProcessMatrix = serde_json::from_value(js).unwrap();
        assert!((back.chi() - chi.chi()).norm() < 1e-15);
    }

    #[test]
    fn link_channel_forms() {
        let mut cfg = crate::photonics::tests::test_link();
        let link = build_link_channel(&cfg).unwrap();
        assert!((link.chi.chi() - ProcessMatrix::ideal().chi()).norm() < 1e-15);
        let expected = (-0.16f64 * 55.0).exp() * 10f64.powf(-0.18);
        assert_abs_diff_eq!(link.survival_probability, expected, epsilon = 1e-18);

        cfg.polarization_noise.depolarizing = 0.2;
        let link = build_link_channel(&cfg).unwrap();
        assert!((link.chi.chi() - diag_chi([0.85, 0.05, 0.05, 0.05])).norm() < 1e-14);

        cfg.polarization_noise.depolarizing = 0.0;
        cfg.polarization_noise.rotation_rad = 0.3;
        let link = build_link_channel(&cfg).unwrap();
        let rot = unitary_chi(&rotation_unitary(0.3)).unwrap();
        assert!((link.chi.chi() - rot.chi()).norm() < 1e-14);
        assert_abs_diff_eq!(
            link.chi.chi()[(0, 0)].re,
            0.3f64.cos().powi(2),
            epsilon = 1e-14
        );
        // Rotating H by θ lands on linear polarization at θ.
        let out = apply_channel(&link.chi, &density_of(&universal_state(StateLabel::H))).unwrap();
        assert_abs_diff_eq!(
            out.population(&crate::qstate::QubitState::linear(0.3)),
            1.0,
            epsilon = 1e-12
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn channel_preserves_trace_and_hermiticity(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chi = random_cptp(&mut rng);
            let rho = random_density(&mut rng);
            let raw = apply_chi_raw(chi.chi(), rho.matrix());
            prop_assert!((raw.trace() - c(1.0, 0.0)).norm() < 1e-9);
            prop_assert!((raw - raw.adjoint()).norm() < 1e-9);
        }

        #[test]
        fn channel_is_affine_linear(seed in any::<u64>(), a in 0.0..1.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chi = random_cptp(&mut rng);
            let r1 = random_density(&mut rng);
            let r2 = random_density(&mut rng);
            let mix = DensityMatrix::new(r1.matrix().scale(a) + r2.matrix().scale(1.0 - a)).unwrap();
            let lhs = apply_channel(&chi, &mix).unwrap();
            let rhs = apply_channel(&chi, &r1).unwrap().matrix().scale(a)
                + apply_channel(&chi, &r2).unwrap().matrix().scale(1.0 - a);
            prop_assert!((lhs.matrix() - rhs).norm() < 1e-10);
        }

        #[test]
        fn kraus_chi_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chi = random_cptp(&mut rng);
            let back = chi_from_kraus(&kraus_from_chi(&chi).unwrap()).unwrap();
            prop_assert!((back.chi() - chi.chi()).norm() < 1e-9);
        }

        #[test]
        fn chi_reproduces_kraus_action(seed in any::<u64>(), n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_kraus(&mut rng, n);
            let chi = chi_from_kraus(&k).unwrap();
            let rho = random_density(&mut rng);
            prop_assert!((apply_chi_raw(chi.chi(), rho.matrix()) - k.apply(&rho)).norm() < 1e-10);
        }

        #[test]
        fn composition_of_unitaries(a in 0.0..PI, b in 0.0..PI) {
            let u = waveplate_unitary(&WaveplateSetting::new(WaveplateKind::Quarter, a));
            let v = waveplate_unitary(&WaveplateSetting::new(WaveplateKind::Half, b));
            let composed = KrausSet::unitary(u).unwrap().after(&KrausSet::unitary(v).unwrap());
            let lhs = chi_from_kraus(&composed).unwrap();
            let rhs = unitary_chi(&(u * v)).unwrap();
            prop_assert!((lhs.chi() - rhs.chi()).norm() < 1e-10);
        }

        #[test]
        fn transmittance_multiplicative(alpha in 0.0..1.0f64, l1 in 0.0..100.0f64, l2 in 0.0..100.0f64) {
            let lhs = transmittance(alpha, l1 + l2).unwrap();
            let rhs = transmittance(alpha, l1).unwrap() * transmittance(alpha, l2).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
