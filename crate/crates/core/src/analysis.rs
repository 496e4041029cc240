//! Polarization-correlation fringes: Malus-law fits and visibilities.

use std::f64::consts::PI;
use std::io::Read;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonics::{normalized_probability, CountRecord};

const MIN_ANGLES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub angle_rad: f64,
    pub value: f64,
}

/// Which quantity of a [`CountRecord`] forms the fringe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanColumn {
    Transmitted,
    Reflected,
    Normalized,
}

/// Fringe samples: at least six distinct analyzer angles spanning π or more.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationScan {
    points: Vec<ScanPoint>,
}

impl CorrelationScan {
    pub fn new(points: Vec<ScanPoint>) -> Result<Self> {
        if points
            .iter()
            .any(|p| !p.value.is_finite() || p.value < 0.0 || !p.angle_rad.is_finite())
        {
            return Err(Error::DegenerateFit(
                "scan values must be finite and non-negative".into(),
            ));
        }
        let mut angles: Vec<f64> = points.iter().map(|p| p.angle_rad).collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if angles.len() < MIN_ANGLES {
            return Err(Error::DegenerateFit(format!(
                "need at least {MIN_ANGLES} distinct angles, got {}",
                angles.len()
            )));
        }
        let span = angles[angles.len() - 1] - angles[0];
        if span < PI - 1e-9 {
            return Err(Error::DegenerateFit(format!(
                "angles span {span:.4} rad, need at least π"
            )));
        }
        Ok(CorrelationScan { points })
    }

    pub fn from_records(records: &[CountRecord], column: ScanColumn) -> Result<Self> {
        let points = records
            .iter()
            .map(|r| {
                let value = match column {
                    ScanColumn::Transmitted => r.counts_t as f64,
                    ScanColumn::Reflected => r.counts_r as f64,
                    ScanColumn::Normalized => normalized_probability(r)?,
                };
                Ok(ScanPoint {
                    angle_rad: r.setting_angle,
                    value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CorrelationScan::new(points)
    }

    pub fn points(&self) -> &[ScanPoint] {
        &self.points
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        CorrelationScan::new(
            self.points
                .iter()
                .map(|p| ScanPoint {
                    angle_rad: p.angle_rad,
                    value: p.value * factor,
                })
                .collect(),
        )
    }
}

/// `n` equally spaced analyzer angles covering `[0, π]` inclusive.
pub fn scan_angles(n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitWeighting {
    /// Ordinary least squares; parameter covariance scaled by the residual
    /// variance.
    #[default]
    Uniform,
    /// Weights `1 / max(y, 1)`, covariance taken as known.
    Poisson,
}

/// `C(θ) = offset + amplitude · cos(2(θ − phase))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinusoidFit {
    pub amplitude: f64,
    pub offset: f64,
    /// Folded into `(−π/2, π/2]`.
    pub phase: f64,
    /// `amplitude / offset`, clipped to `[0, 1]`.
    pub visibility: f64,
    /// RMS of the unweighted residuals.
    pub residual: f64,
    /// Covariance of `(amplitude, phase, offset)`.
    pub covariance: [[f64; 3]; 3],
    pub amplitude_stderr: f64,
    pub phase_stderr: f64,
    pub offset_stderr: f64,
    pub visibility_stderr: f64,
}

impl SinusoidFit {
    pub fn evaluate(&self, theta: f64) -> f64 {
        self.offset + self.amplitude * (2.0 * (theta - self.phase)).cos()
    }
}

pub fn fit_malus(scan: &CorrelationScan) -> Result<SinusoidFit> {
    fit_malus_with(scan, FitWeighting::Uniform)
}

/// Linear least squares in `(A cos 2φ, A sin 2φ, B)`, then converted to
/// amplitude, phase and offset with delta-method uncertainties.
pub fn fit_malus_with(scan: &CorrelationScan, weighting: FitWeighting) -> Result<SinusoidFit> {
    let row = |theta: f64| Vector3::new((2.0 * theta).cos(), (2.0 * theta).sin(), 1.0);
    let weight = |y: f64| match weighting {
        FitWeighting::Uniform => 1.0,
        FitWeighting::Poisson => 1.0 / y.max(1.0),
    };
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for p in scan.points() {
        let x = row(p.angle_rad);
        let w = weight(p.value);
        normal += x * x.transpose() * w;
        rhs += x * (w * p.value);
    }
    let eig = normal.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-10 * hi) {
        return Err(Error::DegenerateFit(
            "analyzer angles do not resolve cos 2θ and sin 2θ (all equal mod π/2?)".into(),
        ));
    }
    let inv = normal
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("singular normal equations".into()))?;
    let coef = inv * rhs;
    let (a, b, offset) = (coef[0], coef[1], coef[2]);

    let n = scan.points().len();
    let mut rss = 0.0;
    let mut wrss = 0.0;
    for p in scan.points() {
        let r = p.value - row(p.angle_rad).dot(&coef);
        rss += r * r;
        wrss += weight(p.value) * r * r;
    }
    let cov_lin = match weighting {
        FitWeighting::Uniform => inv * (wrss / (n - 3).max(1) as f64),
        FitWeighting::Poisson => inv,
    };

    let amplitude = a.hypot(b);
    if !(offset > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "fitted offset {offset} is not positive"
        )));
    }
    let mut phase = 0.5 * b.atan2(a);
    if phase <= -PI / 2.0 {
        phase += PI;
    }

    // Jacobian of (A, φ, B) with respect to (a, b, c).
    let jac = if amplitude > 0.0 {
        let a2 = amplitude * amplitude;
        Matrix3::new(
            a / amplitude,
            b / amplitude,
            0.0,
            -b / (2.0 * a2),
            a / (2.0 * a2),
            0.0,
            0.0,
            0.0,
            1.0,
        )
    } else {
        Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    };
    let cov = jac * cov_lin * jac.transpose();
    let vis_grad = Vector3::new(1.0 / offset, 0.0, -amplitude / (offset * offset));
    let vis_var = (vis_grad.transpose() * cov * vis_grad)[(0, 0)];

    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    Ok(SinusoidFit {
        amplitude,
        offset,
        phase,
        visibility: (amplitude / offset).clamp(0.0, 1.0),
        residual: (rss / n as f64).sqrt(),
        covariance,
        amplitude_stderr: cov[(0, 0)].max(0.0).sqrt(),
        phase_stderr: cov[(1, 1)].max(0.0).sqrt(),
        offset_stderr: cov[(2, 2)].max(0.0).sqrt(),
        visibility_stderr: vis_var.max(0.0).sqrt(),
    })
}

/// `(max − min) / (max + min)`.
pub fn visibility(max_count: f64, min_count: f64) -> Result<f64> {
    if !(min_count >= 0.0 && max_count >= min_count && max_count > 0.0) {
        return Err(Error::InvalidParameter {
            name: "visibility",
            reason: format!(
                "need max >= min >= 0 and max > 0, got max={max_count}, min={min_count}"
            ),
        });
    }
    Ok((max_count - min_count) / (max_count + min_count))
}

pub fn average_visibility(fits: &[SinusoidFit]) -> Result<f64> {
    mean_visibility(&fits.iter().map(|f| f.visibility).collect::<Vec<_>>())
}

/// Arithmetic mean of visibility values.
pub fn mean_visibility(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter {
            name: "fits",
            reason: "cannot average an empty list".into(),
        });
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Deserialize)]
struct ScanRow {
    angle_rad: f64,
    value: f64,
}

/// Reads a scan from CSV. Two layouts are accepted: `angle_rad,value`, or
/// the count-record layout (`setting_angle_rad,counts_t,counts_r,duration_s`)
/// reduced through `column`.
pub fn read_scan_csv<R: Read>(input: R, column: ScanColumn) -> Result<CorrelationScan> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::DegenerateFit(format!("unreadable scan CSV: {e}")))?
        .clone();
    let csv_err = |e: csv::Error| Error::DegenerateFit(format!("bad scan CSV row: {e}"));
    if headers.iter().any(|h| h == "counts_t") {
        let records: Vec<CountRecord> = reader
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)?;
        CorrelationScan::from_records(&records, column)
    } else {
        let rows: Vec<ScanRow> = reader
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)?;
        CorrelationScan::new(
            rows.into_iter()
                .map(|r| ScanPoint {
                    angle_rad: r.angle_rad,
                    value: r.value,
                })
                .collect(),
        )
    }
}
