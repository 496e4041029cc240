//! State and process reconstruction from dual-detector counts.
//!
//! State tomography measures three bases. The transmitted port of each basis
//! projects onto |H⟩, |D⟩ and |R⟩ respectively, so with the Bloch convention
//! of [`crate::qstate`] the basis H/V measures `z`, D/A measures `x` and R/L
//! measures `y`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, SMatrix, SVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{tp_residual, ProcessMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::photonics::{normalized_probability, CountRecord, MeasurementBasis};
use crate::qstate::{
    c, density_of, pauli_basis, universal_state, BlochVector, DensityMatrix, Pauli, StateLabel,
};

/// Count records for the three tomography bases.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyDataset {
    records: BTreeMap<MeasurementBasis, CountRecord>,
}

impl TomographyDataset {
    pub fn new(hv: CountRecord, da: CountRecord, rl: CountRecord) -> Result<Self> {
        let records = BTreeMap::from([
            (MeasurementBasis::HV, hv),
            (MeasurementBasis::DA, da),
            (MeasurementBasis::RL, rl),
        ]);
        for (basis, rec) in &records {
            if rec.total() == 0 {
                return Err(Error::IncompleteDataset(format!(
                    "basis {} has no counts",
                    basis.name()
                )));
            }
        }
        Ok(TomographyDataset { records })
    }

    /// Three records in the order H/V, D/A, R/L.
    pub fn from_records(records: &[CountRecord]) -> Result<Self> {
        match records {
            [hv, da, rl] => TomographyDataset::new(*hv, *da, *rl),
            _ => Err(Error::IncompleteDataset(format!(
                "expected 3 records (H/V, D/A, R/L), got {}",
                records.len()
            ))),
        }
    }

    pub fn record(&self, basis: MeasurementBasis) -> &CountRecord {
        &self.records[&basis]
    }

    /// Records in H/V, D/A, R/L order.
    pub fn records(&self) -> Vec<CountRecord> {
        MeasurementBasis::ALL
            .iter()
            .map(|b| self.records[b])
            .collect()
    }

    fn total_counts(&self) -> f64 {
        self.records.values().map(|r| r.total() as f64).sum()
    }
}

/// Index of the Bloch component a basis measures.
fn bloch_axis(basis: MeasurementBasis) -> usize {
    match basis {
        MeasurementBasis::DA => 0,
        MeasurementBasis::RL => 1,
        MeasurementBasis::HV => 2,
    }
}

/// `(⟨X⟩, ⟨Y⟩, ⟨Z⟩)`, each `p_t − p_r` from the normalized two-port ratio.
pub fn expectation_from_counts(d: &TomographyDataset) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for basis in MeasurementBasis::ALL {
        let p = normalized_probability(d.record(basis))?;
        out[bloch_axis(basis)] = 2.0 * p - 1.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEstimate {
    pub matrix: Matrix2<Complex64>,
    pub bloch: [f64; 3],
    pub min_eigenvalue: f64,
}

impl LinearEstimate {
    /// Whether the estimate is a valid density matrix.
    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue >= linalg::PSD_FLOOR
    }
}

/// `ρ̂ = (I + ⟨X⟩X + ⟨Y⟩Y + ⟨Z⟩Z) / 2`; may have a negative eigenvalue.
pub fn reconstruct_linear(d: &TomographyDataset) -> Result<LinearEstimate> {
    let bloch = expectation_from_counts(d)?;
    let [x, y, z] = bloch;
    let matrix = (Pauli::I.matrix()
        + Pauli::X.matrix().scale(x)
        + Pauli::Y.matrix().scale(y)
        + Pauli::Z.matrix().scale(z))
    .scale(0.5);
    let norm = (x * x + y * y + z * z).sqrt();
    Ok(LinearEstimate {
        matrix,
        bloch,
        min_eigenvalue: 0.5 * (1.0 - norm),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iterations: 10_000,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOutcome {
    pub rho: DensityMatrix,
    pub iterations: usize,
    /// Gradient norm of the per-count negative log-likelihood at return.
    pub gradient_norm: f64,
    /// Per-count log-likelihood at return.
    pub log_likelihood: f64,
}

pub fn reconstruct_mle(d: &TomographyDataset) -> Result<DensityMatrix> {
    reconstruct_mle_with(d, &MleOptions::default()).map(|o| o.rho)
}

type Vec4 = SVector<f64, 4>;
type Mat4 = SMatrix<f64, 4, 4>;

/// Quadratic forms `Q_k` with `bloch_k(θ) = θᵀ Q_k θ / θᵀθ` for the
/// factorization `ρ = T†T / tr(T†T)`, `T = [[t1, 0], [t3 + i t4, t2]]`,
/// `θ = (t1, t2, t3, t4)`.
fn bloch_forms() -> [Mat4; 3] {
    let mut qx = Mat4::zeros();
    qx[(1, 2)] = 1.0;
    qx[(2, 1)] = 1.0;
    let mut qy = Mat4::zeros();
    qy[(1, 3)] = 1.0;
    qy[(3, 1)] = 1.0;
    let qz = Mat4::from_diagonal(&Vec4::new(1.0, -1.0, 1.0, 1.0));
    [qx, qy, qz]
}

fn params_from_bloch(r: [f64; 3]) -> Vec4 {
    let rho = DensityMatrix::from_bloch(&BlochVector {
        x: r[0],
        y: r[1],
        z: r[2],
    });
    let m = rho.matrix();
    let t2 = m[(1, 1)].re.sqrt();
    let off = m[(1, 0)] / t2;
    let t1 = (m[(0, 0)].re - off.norm_sqr()).max(0.0).sqrt();
    let theta = Vec4::new(t1, t2, off.re, off.im);
    theta / theta.norm()
}

/// Per-count negative log-likelihood with its derivatives in θ.
struct Likelihood {
    /// `(transmitted, reflected)` counts per Bloch axis, divided by the total.
    weights: [(f64, f64); 3],
    forms: [Mat4; 3],
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn x_over_y(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x / y
    }
}

impl Likelihood {
    fn new(d: &TomographyDataset) -> Self {
        let n = d.total_counts();
        let mut weights = [(0.0, 0.0); 3];
        for basis in MeasurementBasis::ALL {
            let rec = d.record(basis);
            weights[bloch_axis(basis)] = (rec.counts_t as f64 / n, rec.counts_r as f64 / n);
        }
        Likelihood {
            weights,
            forms: bloch_forms(),
        }
    }

    fn bloch(&self, theta: &Vec4) -> [f64; 3] {
        let s = theta.norm_squared();
        self.forms
            .map(|q| (theta.transpose() * q * theta)[(0, 0)] / s)
    }

    fn value(&self, theta: &Vec4) -> f64 {
        let r = self.bloch(theta);
        let mut g = 0.0;
        for (&(t, rr), rk) in self.weights.iter().zip(r) {
            let p = 0.5 * (1.0 + rk);
            g -= xlogy(t, p) + xlogy(rr, 1.0 - p);
        }
        if g.is_nan() {
            f64::INFINITY
        } else {
            g
        }
    }

    /// Value, gradient and Hessian of the objective at θ.
    fn derivatives(&self, theta: &Vec4) -> (f64, Vec4, Mat4) {
        let s = theta.norm_squared();
        let mut grad = Vec4::zeros();
        let mut hess = Mat4::zeros();
        let mut value = 0.0;
        for k in 0..3 {
            let q = &self.forms[k];
            let r = (theta.transpose() * q * theta)[(0, 0)] / s;
            // ∇r = 2(Qθ − rθ)/s,  ∇²r = 2(Q − rI − θ∇rᵀ − ∇rθᵀ)/s.
            let grad_r = (q * theta - theta * r) * (2.0 / s);
            let hess_r = (q
                - Mat4::identity() * r
                - theta * grad_r.transpose()
                - grad_r * theta.transpose())
                * (2.0 / s);
            let (t, rr) = self.weights[k];
            let p = 0.5 * (1.0 + r);
            let q_minus = 1.0 - p;
            value -= xlogy(t, p) + xlogy(rr, q_minus);
            let dg = -0.5 * (x_over_y(t, p) - x_over_y(rr, q_minus));
            let d2g = 0.25 * (x_over_y(t, p * p) + x_over_y(rr, q_minus * q_minus));
            grad += grad_r * dg;
            hess += grad_r * grad_r.transpose() * d2g + hess_r * dg;
        }
        (value, grad, hess)
    }
}

/// Maximum-likelihood state under independent Poisson counts per detector
/// with a free intensity per basis (equivalently, a binomial split per
/// basis). Positivity is built in through `ρ = T†T / tr(T†T)`; the
/// factor is optimized with damped Newton steps on the unit sphere.
pub fn reconstruct_mle_with(d: &TomographyDataset, opts: &MleOptions) -> Result<MleOutcome> {
    let lik = Likelihood::new(d);
    let lin = reconstruct_linear(d)?;
    let norm = lin.bloch.iter().map(|x| x * x).sum::<f64>().sqrt();
    let shrink = if norm > 0.9 { 0.9 / norm } else { 1.0 };
    let mut theta = params_from_bloch(lin.bloch.map(|x| x * shrink));
    let mut damping = 1e-6;
    let mut grad_norm = f64::INFINITY;

    let finish =
        |theta: &Vec4, iterations: usize, gradient_norm: f64, value: f64| -> Result<MleOutcome> {
            // Rebuilt from the Bloch vector, kept a few ulps inside the ball so
            // the smallest eigenvalue cannot round below zero.
            let r = lik.bloch(theta);
            let len = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cap = 1.0 - 8.0 * f64::EPSILON;
            let r = if len > cap {
                r.map(|x| x * cap / len)
            } else {
                r
            };
            Ok(MleOutcome {
                rho: DensityMatrix::from_bloch(&BlochVector::new(r[0], r[1], r[2])?),
                iterations,
                gradient_norm,
                log_likelihood: -value,
            })
        };

    for iteration in 0..opts.max_iterations {
        let (value, grad, hess) = lik.derivatives(&theta);
        // The objective is invariant under θ ↦ aθ; drop that direction.
        let grad = grad - theta * theta.dot(&grad);
        grad_norm = grad.norm();
        if grad_norm <= opts.gradient_tol {
            return finish(&theta, iteration, grad_norm, value);
        }
        let pinned = hess + theta * theta.transpose();
        loop {
            let system = pinned + Mat4::identity() * damping;
            let step = match system.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    damping = (damping * 10.0).max(1e-12);
                    continue;
                }
            };
            let candidate = theta + step;
            let candidate = candidate / candidate.norm();
            let new_value = lik.value(&candidate);
            let step_norm = (candidate - theta).norm();
            if new_value <= value + 1e-15 * value.abs().max(1.0) {
                theta = candidate;
                damping = (damping / 4.0).max(1e-15);
                if step_norm <= opts.step_tol {
                    let (v, g, _) = lik.derivatives(&theta);
                    let g = g - theta * theta.dot(&g);
                    return finish(&theta, iteration + 1, g.norm(), v);
                }
                break;
            }
            if step_norm <= opts.step_tol {
                return finish(&theta, iteration + 1, grad_norm, value);
            }
            damping = (damping * 4.0).max(1e-12);
        }
    }
    let best = finish(&theta, opts.max_iterations, grad_norm, lik.value(&theta))?;
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        gradient_norm: grad_norm,
        best: Box::new(best.rho),
    })
}

/// Reconstructed output states keyed by the universal input state that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessDataset {
    outputs: BTreeMap<StateLabel, DensityMatrix>,
}

/// Relative eigenvalue threshold for the input Gram-matrix rank test.
const GRAM_RANK_TOL: f64 = 1e-9;

impl ProcessDataset {
    pub fn new(outputs: BTreeMap<StateLabel, DensityMatrix>) -> Result<Self> {
        let rank = input_rank(outputs.keys().copied());
        if rank < 4 {
            let labels: Vec<&str> = outputs.keys().map(|l| l.as_str()).collect();
            return Err(Error::RankDeficient(format!(
                "inputs {{{}}} span {rank} of the 4 operator dimensions; add states from another basis",
                labels.join(", ")
            )));
        }
        Ok(ProcessDataset { outputs })
    }

    pub fn outputs(&self) -> &BTreeMap<StateLabel, DensityMatrix> {
        &self.outputs
    }
}

/// Rank of the Gram matrix `G_ij = tr(ρ_i ρ_j)` of the input states.
fn input_rank(labels: impl Iterator<Item = StateLabel>) -> usize {
    let states: Vec<DensityMatrix> = labels.map(|l| density_of(&universal_state(l))).collect();
    let n = states.len();
    if n == 0 {
        return 0;
    }
    let gram = DMatrix::from_fn(n, n, |i, j| {
        (states[i].matrix() * states[j].matrix()).trace()
    });
    let (values, _) = linalg::eigh(&gram);
    let max = values[n - 1];
    values.iter().filter(|&&l| l > GRAM_RANK_TOL * max).count()
}

const PROJECTION_STEP_TOL: f64 = 1e-10;
const PROJECTION_MAX_ITER: usize = 100_000;

/// Least-squares χ from `ε(ρ_in) = Σ χ_mn Ẽ_m ρ_in Ẽ_n†` over all pairs,
/// followed by the Frobenius-nearest Hermitian, PSD, trace-preserving matrix
/// (Dykstra's alternating projections).
pub fn reconstruct_process(pd: &ProcessDataset) -> Result<ProcessMatrix> {
    let e = pauli_basis();
    let rows = 4 * pd.outputs.len();
    let mut a = DMatrix::<Complex64>::zeros(rows, 16);
    let mut b = DVector::<Complex64>::zeros(rows);
    for (p, (label, out)) in pd.outputs.iter().enumerate() {
        let rho_in = density_of(&universal_state(*label));
        for m in 0..4 {
            for n in 0..4 {
                let term = e[m] * rho_in.matrix() * e[n].adjoint();
                for i in 0..2 {
                    for j in 0..2 {
                        a[(4 * p + 2 * i + j, 4 * m + n)] = term[(i, j)];
                    }
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                b[4 * p + 2 * i + j] = out.matrix()[(i, j)];
            }
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax)
        .count();
    if rank < 16 {
        return Err(Error::RankDeficient(format!(
            "least-squares system has rank {rank} of 16"
        )));
    }
    let x = svd
        .solve(&b, 1e-10 * smax)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let chi_ls = Matrix4::from_fn(|m, n| x[4 * m + n]);
    project_cptp(&chi_ls)
}

/// Frobenius projection onto the affine set `Σ χ_mn Ẽ_n†Ẽ_m = I`.
struct TpProjector {
    map: DMatrix<Complex64>,
    gram_inv: DMatrix<Complex64>,
}

impl TpProjector {
    fn new() -> Self {
        let e = pauli_basis();
        let map = DMatrix::from_fn(4, 16, |row, col| {
            let (i, j) = (row / 2, row % 2);
            let (m, n) = (col / 4, col % 4);
            (e[n].adjoint() * e[m])[(i, j)]
        });
        let gram = &map * map.adjoint();
        let gram_inv = gram.try_inverse().expect("trace map is surjective");
        TpProjector { map, gram_inv }
    }

    fn project(&self, chi: &Matrix4<Complex64>) -> Matrix4<Complex64> {
        let v = DVector::from_fn(16, |k, _| chi[(k / 4, k % 4)]);
        let target = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let residual = &self.map * &v - target;
        let corrected = v - self.map.adjoint() * (&self.gram_inv * residual);
        let out = Matrix4::from_fn(|m, n| corrected[4 * m + n]);
        linalg::from_dyn(&linalg::hermitian_part(&linalg::to_dyn(&out)))
    }
}

fn project_psd(chi: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    linalg::from_dyn(&linalg::psd_projection(&linalg::to_dyn(chi)))
}

pub(crate) fn project_cptp(chi: &Matrix4<Complex64>) -> Result<ProcessMatrix> {
    let tp = TpProjector::new();
    let mut x: Matrix4<Complex64> = linalg::from_dyn(&linalg::hermitian_part(&linalg::to_dyn(chi)));
    let mut p = Matrix4::zeros();
    let mut q = Matrix4::zeros();
    for _ in 0..PROJECTION_MAX_ITER {
        let y = project_psd(&(x + p));
        p = x + p - y;
        let next = tp.project(&(y + q));
        q = y + q - next;
        let step = (next - x).norm();
        x = next;
        if step < PROJECTION_STEP_TOL {
            break;
        }
    }
    let min_eig = linalg::min_eigenvalue(&linalg::to_dyn(&x));
    if min_eig < linalg::PSD_FLOOR || tp_residual(&x) > 1e-8 {
        return Err(Error::InvalidProcess(format!(
            "CPTP projection stalled (min eigenvalue {min_eig:e})"
        )));
    }
    ProcessMatrix::new(x)
}

/// `F_P = tr √(√χ_est χ_ref √χ_est)`, with both χ first normalized to unit
/// trace.
pub fn process_fidelity(chi_est: &ProcessMatrix, chi_ref: &ProcessMatrix) -> Result<f64> {
    let norm = |chi: &ProcessMatrix| -> Result<DMatrix<Complex64>> {
        let tr = chi.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidProcess("χ has non-positive trace".into()));
        }
        Ok(linalg::to_dyn(&chi.chi().unscale(tr)))
    };
    let f = linalg::uhlmann_fidelity(&norm(chi_est)?, &norm(chi_ref)?)
        .ok_or_else(|| Error::InvalidProcess("process fidelity argument is not PSD".into()))?;
    Ok(f.clamp(0.0, 1.0))
}

/// One row of a bar-chart table of χ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiBar {
    pub row: &'static str,
    pub col: &'static str,
    pub modulus: f64,
    pub argument: f64,
}

pub fn chi_bar_table(chi: &ProcessMatrix) -> Vec<ChiBar> {
    chi.polar_elements()
        .into_iter()
        .map(|e| ChiBar {
            row: e.row,
            col: e.col,
            modulus: e.modulus,
            argument: e.argument,
        })
        .collect()
}
