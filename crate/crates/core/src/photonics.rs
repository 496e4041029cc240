//! Photon-level model of the link: weak-coherent source, loss budget and
//! two-detector click simulation.
//!
//! Randomness comes from ChaCha8 substreams keyed by `(seed, stream)`, so
//! every record can be regenerated on its own and in any order.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::channel::{build_link_channel, db_to_transmittance, loss_db, transmittance};
use crate::error::{Error, Result};
use crate::qstate::{universal_state, DensityMatrix, QubitState, StateLabel};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Tail mass below which the photon-number distribution is truncated.
const POISSON_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// μ, photons per pulse.
    pub mean_photon_number: f64,
    pub repetition_rate_hz: f64,
    pub wavelength_m: f64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_photon_number > 0.0 && self.mean_photon_number.is_finite()) {
            return Err(invalid("source.mean_photon_number", "must be positive"));
        }
        if !(self.repetition_rate_hz > 0.0 && self.repetition_rate_hz.is_finite()) {
            return Err(invalid("source.repetition_rate_hz", "must be positive"));
        }
        if !(self.wavelength_m > 400e-9 && self.wavelength_m < 700e-9) {
            return Err(invalid(
                "source.wavelength_m",
                "must lie in (400 nm, 700 nm)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorId {
    Apd1,
    Apd2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Background (dark plus stray light) rate on APD1.
    pub dark_rate_1_hz: f64,
    pub dark_rate_2_hz: f64,
    /// Lumped detection efficiency, including coupling into the fibers.
    pub efficiency: f64,
    /// Which APD sits on the transmitted port of the analyzer PBS.
    #[serde(default = "default_transmitted")]
    pub transmitted_detector: DetectorId,
}

fn default_transmitted() -> DetectorId {
    DetectorId::Apd1
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dark_rate_1_hz >= 0.0 && self.dark_rate_1_hz.is_finite()) {
            return Err(invalid("detectors.dark_rate_1_hz", "must be non-negative"));
        }
        if !(self.dark_rate_2_hz >= 0.0 && self.dark_rate_2_hz.is_finite()) {
            return Err(invalid("detectors.dark_rate_2_hz", "must be non-negative"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid("detectors.efficiency", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Background rates on the (transmitted, reflected) ports.
    pub fn port_backgrounds(&self) -> (f64, f64) {
        match self.transmitted_detector {
            DetectorId::Apd1 => (self.dark_rate_1_hz, self.dark_rate_2_hz),
            DetectorId::Apd2 => (self.dark_rate_2_hz, self.dark_rate_1_hz),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationNoise {
    /// Residual rotation of linear polarization, radians.
    #[serde(default)]
    pub rotation_rad: f64,
    /// Depolarizing weight `p` in `ρ ↦ (1 − p) ρ + p I/2`.
    #[serde(default)]
    pub depolarizing: f64,
}

/// Slow intensity drift: each record's signal rate is scaled by a factor
/// drawn uniformly from `[min_factor, max_factor]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalFluctuation {
    pub min_factor: f64,
    pub max_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub alpha_per_m: f64,
    pub length_m: f64,
    /// Interfaces, optics and coupling losses on top of the water column.
    #[serde(default)]
    pub extra_loss_db: f64,
    pub source: SourceConfig,
    pub detectors: DetectorConfig,
    #[serde(default)]
    pub polarization_noise: PolarizationNoise,
    #[serde(default)]
    pub fluctuation: Option<SignalFluctuation>,
    pub seed: u64,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_per_m >= 0.0 && self.alpha_per_m.is_finite()) {
            return Err(invalid("link.alpha_per_m", "must be non-negative"));
        }
        if !(self.length_m > 0.0 && self.length_m.is_finite()) {
            return Err(invalid("link.length_m", "must be positive"));
        }
        if !(self.extra_loss_db >= 0.0 && self.extra_loss_db.is_finite()) {
            return Err(invalid("link.extra_loss_db", "must be non-negative"));
        }
        self.source.validate()?;
        self.detectors.validate()?;
        let p = self.polarization_noise.depolarizing;
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(
                "polarization_noise.depolarizing",
                "must lie in [0, 1]",
            ));
        }
        if !self.polarization_noise.rotation_rad.is_finite() {
            return Err(invalid("polarization_noise.rotation_rad", "must be finite"));
        }
        if let Some(f) = self.fluctuation {
            if !(f.min_factor > 0.0 && f.min_factor <= f.max_factor && f.max_factor.is_finite()) {
                return Err(invalid("fluctuation", "need 0 < min_factor <= max_factor"));
            }
        }
        Ok(())
    }

    /// Mean detected signal rate `S` (clicks per second summed over both
    /// ports) before any fluctuation.
    pub fn signal_rate(&self) -> Result<f64> {
        let survival = transmittance(self.alpha_per_m, self.length_m)?
            * db_to_transmittance(self.extra_loss_db);
        Ok(self.source.repetition_rate_hz
            * self.source.mean_photon_number
            * survival
            * self.detectors.efficiency)
    }
}

fn invalid(name: &'static str, reason: &str) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.to_string(),
    }
}

/// Poisson photon-number probabilities `P(n) = e^{−μ} μⁿ / n!` for
/// `n = 0..=n_max`, truncated once the remaining tail drops below 1e-12 and
/// renormalized.
pub fn photon_number_distribution(mu: f64) -> Result<Vec<f64>> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid("mu", "mean photon number must be positive"));
    }
    let mut probs = Vec::new();
    let mut p = (-mu).exp();
    let mut cumulative = 0.0;
    let mut n = 0u32;
    loop {
        probs.push(p);
        cumulative += p;
        // Past the mode the terms shrink geometrically, so the tail is below
        // p · μ/(n+1−μ) once n+1 > μ.
        let next_n = f64::from(n + 1);
        if next_n > mu && 1.0 - cumulative < POISSON_TAIL && p * mu / (next_n - mu) < POISSON_TAIL {
            break;
        }
        n += 1;
        p *= mu / f64::from(n);
    }
    let total: f64 = probs.iter().sum();
    Ok(probs.into_iter().map(|x| x / total).collect())
}

/// Mean optical energy per pulse, `μ h c / λ`, in joules.
pub fn mean_pulse_energy(src: &SourceConfig) -> f64 {
    src.mean_photon_number * PLANCK * SPEED_OF_LIGHT / src.wavelength_m
}

/// Mean optical power `μ h c / λ · rate`, in watts.
pub fn mean_power(src: &SourceConfig) -> f64 {
    mean_pulse_energy(src) * src.repetition_rate_hz
}

/// Analyzer basis for tomography; the first label is routed to the
/// transmitted port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MeasurementBasis {
    HV,
    DA,
    RL,
}

impl MeasurementBasis {
    pub const ALL: [MeasurementBasis; 3] = [
        MeasurementBasis::HV,
        MeasurementBasis::DA,
        MeasurementBasis::RL,
    ];

    pub fn transmitted_state(self) -> StateLabel {
        match self {
            MeasurementBasis::HV => StateLabel::H,
            MeasurementBasis::DA => StateLabel::D,
            MeasurementBasis::RL => StateLabel::R,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeasurementBasis::HV => "HV",
            MeasurementBasis::DA => "DA",
            MeasurementBasis::RL => "RL",
        }
    }
}

/// Projective two-outcome measurement: the transmitted port projects onto
/// `projector`, the reflected port onto its orthogonal complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    /// Angle recorded alongside the counts.
    pub angle_rad: f64,
    pub projector: QubitState,
}

impl MeasurementSetting {
    /// Linear analyzer transmitting polarization at `theta`.
    pub fn linear(theta: f64) -> Self {
        MeasurementSetting {
            angle_rad: theta,
            projector: QubitState::linear(theta),
        }
    }

    /// Tomography setting. The recorded angle is the linear-analyzer angle
    /// (0 for H/V, π/4 for D/A) and 0 for the circular basis.
    pub fn basis(b: MeasurementBasis) -> Self {
        let angle_rad = match b {
            MeasurementBasis::DA => std::f64::consts::FRAC_PI_4,
            _ => 0.0,
        };
        MeasurementSetting {
            angle_rad,
            projector: universal_state(b.transmitted_state()),
        }
    }

    /// `tr(Π ρ)` for the transmitted port.
    pub fn transmitted_probability(&self, rho: &DensityMatrix) -> f64 {
        rho.population(&self.projector).clamp(0.0, 1.0)
    }
}

/// Click tallies for one analyzer setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    #[serde(rename = "setting_angle_rad")]
    pub setting_angle: f64,
    pub counts_t: u64,
    pub counts_r: u64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
}

impl CountRecord {
    pub fn new(setting_angle: f64, counts_t: u64, counts_r: u64, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid("duration_s", "must be positive"));
        }
        Ok(CountRecord {
            setting_angle,
            counts_t,
            counts_r,
            duration,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts_t + self.counts_r
    }
}

/// Independent random stream for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a stream identifier from a stage tag and two indices.
pub fn stream_id(stage: u16, major: u32, minor: u16) -> u64 {
    (u64::from(stage) << 48) | (u64::from(major) << 16) | u64::from(minor)
}

/// Mean clicks `(transmitted, reflected)` over `duration` for signal rate
/// `signal_rate`.
pub fn expected_counts(
    rho_out: &DensityMatrix,
    setting: &MeasurementSetting,
    detectors: &DetectorConfig,
    signal_rate: f64,
    duration: f64,
) -> (f64, f64) {
    let p = setting.transmitted_probability(rho_out);
    let (bg_t, bg_r) = detectors.port_backgrounds();
    (
        (signal_rate * p + bg_t) * duration,
        (signal_rate * (1.0 - p) + bg_r) * duration,
    )
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(u64::MAX)
}

/// Poisson-sampled clicks on both ports for one setting.
///
/// Transmitted mean is `S tr(Πρ) T + B_t T`, reflected mean is
/// `S tr((I−Π)ρ) T + B_r T`. With a configured fluctuation, `S` is first
/// scaled by a factor drawn for this record. Detector `d` draws from
/// substream `2·stream + d` of the link seed.
pub fn simulate_counts(
    rho_out: &DensityMatrix,
    setting: &MeasurementSetting,
    link: &LinkConfig,
    duration: f64,
    stream: u64,
) -> Result<CountRecord> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(invalid("duration_s", "must be positive"));
    }
    let mut rate = link.signal_rate()?;
    let mut rng_t = substream(link.seed, stream.wrapping_mul(2));
    let mut rng_r = substream(link.seed, stream.wrapping_mul(2).wrapping_add(1));
    if let Some(f) = link.fluctuation {
        rate *= if f.max_factor > f.min_factor {
            rng_t.random_range(f.min_factor..=f.max_factor)
        } else {
            f.min_factor
        };
    }
    let (mean_t, mean_r) = expected_counts(rho_out, setting, &link.detectors, rate, duration);
    CountRecord::new(
        setting.angle_rad,
        poisson(mean_t, &mut rng_t),
        poisson(mean_r, &mut rng_r),
        duration,
    )
}

/// Exactly `shots` detected photons split binomially between the ports,
/// with no background. Duration is recorded as 1 s.
pub fn sample_shots<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    setting: &MeasurementSetting,
    shots: u64,
    rng: &mut R,
) -> CountRecord {
    let p = setting.transmitted_probability(rho);
    let t = Binomial::new(shots, p)
        .expect("probability clamped to [0, 1]")
        .sample(rng);
    CountRecord {
        setting_angle: setting.angle_rad,
        counts_t: t,
        counts_r: shots - t,
        duration: 1.0,
    }
}

/// `counts_t / (counts_t + counts_r)`; the ratio cancels common intensity
/// fluctuations.
pub fn normalized_probability(rec: &CountRecord) -> Result<f64> {
    match rec.total() {
        0 => Err(Error::ZeroCounts),
        total => Ok(rec.counts_t as f64 / total as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBudget {
    pub channel_transmittance: f64,
    pub channel_db: f64,
    pub extra_loss_db: f64,
    pub total_db: f64,
    pub survival_probability: f64,
    pub expected_signal_rate_hz: f64,
    pub background_rate_apd1_hz: f64,
    pub background_rate_apd2_hz: f64,
    pub mean_pulse_energy_j: f64,
    pub mean_power_w: f64,
}

pub fn link_budget(link: &LinkConfig) -> Result<LinkBudget> {
    link.validate()?;
    let channel_t = transmittance(link.alpha_per_m, link.length_m)?;
    let channel_db = loss_db(channel_t);
    let total_db = channel_db + link.extra_loss_db;
    let survival = build_link_channel(link)?.survival_probability;
    let src = &link.source;
    Ok(LinkBudget {
        channel_transmittance: channel_t,
        channel_db,
        extra_loss_db: link.extra_loss_db,
        total_db,
        survival_probability: survival,
        expected_signal_rate_hz: src.repetition_rate_hz
            * src.mean_photon_number
            * db_to_transmittance(total_db)
            * link.detectors.efficiency,
        background_rate_apd1_hz: link.detectors.dark_rate_1_hz,
        background_rate_apd2_hz: link.detectors.dark_rate_2_hz,
        mean_pulse_energy_j: mean_pulse_energy(src),
        mean_power_w: mean_power(src),
    })
}

/// Writes records as CSV with header
/// `setting_angle_rad,counts_t,counts_r,duration_s`.
pub fn write_counts_csv<W: Write>(records: &[CountRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    w.flush()
}

pub fn read_counts_csv<R: Read>(input: R) -> std::result::Result<Vec<CountRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::qstate::{density_of, universal_state};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn test_link() -> LinkConfig {
        LinkConfig {
            alpha_per_m: 0.16,
            length_m: 55.0,
            extra_loss_db: 1.8,
            source: SourceConfig {
                mean_photon_number: 0.37,
                repetition_rate_hz: 1e9,
                wavelength_m: 532e-9,
            },
            detectors: DetectorConfig {
                dark_rate_1_hz: 600.0,
                dark_rate_2_hz: 200.0,
                efficiency: 0.3,
                transmitted_detector: DetectorId::Apd1,
            },
            polarization_noise: PolarizationNoise::default(),
            fluctuation: None,
            seed: 7,
        }
    }

    #[test]
    fn weak_coherent_statistics() {
        let p = photon_number_distribution(0.37).unwrap();
        assert_abs_diff_eq!(p[0], 0.6907, epsilon = 5e-5);
        assert_abs_diff_eq!(p[1], 0.2556, epsilon = 5e-5);
        assert_abs_diff_eq!(p[2..].iter().sum::<f64>(), 0.0537, epsilon = 5e-5);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // Tail beyond the truncation point, computed directly.
        let n_max = p.len() - 1;
        let mut term = (-0.37f64).exp();
        let mut head = 0.0;
        for n in 0..=n_max {
            if n > 0 {
                term *= 0.37 / n as f64;
            }
            head += term;
        }
        assert!(1.0 - head < 1e-12);

        let tiny = photon_number_distribution(1e-9).unwrap();
        assert!(tiny[0] > 1.0 - 1e-8);
        assert!(photon_number_distribution(0.0).is_err());
        assert!(photon_number_distribution(-1.0).is_err());
    }

    #[test]
    fn pulse_energy_and_power() {
        let src = test_link().source;
        let e = mean_pulse_energy(&src);
        assert!((e - 1.38e-19).abs() < 0.01e-19, "{e}");
        assert!((mean_power(&src) - 1.38e-10).abs() < 0.01e-10);
        let zero = SourceConfig {
            mean_photon_number: 0.0,
            ..src
        };
        assert_eq!(mean_pulse_energy(&zero), 0.0);
    }

    #[test]
    fn normalized_probability_cases() {
        let r = CountRecord::new(0.0, 9000, 1000, 1.0).unwrap();
        assert_abs_diff_eq!(normalized_probability(&r).unwrap(), 0.9, epsilon = 1e-15);
        let r = CountRecord::new(0.0, 0, 17, 1.0).unwrap();
        assert_eq!(normalized_probability(&r).unwrap(), 0.0);
        let r = CountRecord::new(0.0, 0, 0, 1.0).unwrap();
        assert!(matches!(normalized_probability(&r), Err(Error::ZeroCounts)));
        assert!(CountRecord::new(0.0, 1, 1, 0.0).is_err());
    }

    #[test]
    fn budget_numbers() {
        let b = link_budget(&test_link()).unwrap();
        assert_abs_diff_eq!(b.channel_db, 38.2, epsilon = 0.05);
        assert_abs_diff_eq!(b.total_db, 40.0, epsilon = 0.05);
        let mut forty = test_link();
        forty.extra_loss_db = 40.0 - b.channel_db;
        let b40 = link_budget(&forty).unwrap();
        assert_abs_diff_eq!(b40.expected_signal_rate_hz, 11100.0, epsilon = 1e-6);
        let mut short = test_link();
        short.alpha_per_m = 0.0;
        assert_eq!(link_budget(&short).unwrap().channel_db, 0.0);
    }

    #[test]
    fn projection_counts_without_noise() {
        let mut link = test_link();
        link.detectors.dark_rate_1_hz = 0.0;
        link.detectors.dark_rate_2_hz = 0.0;
        let s = link.signal_rate().unwrap();
        let h = density_of(&universal_state(StateLabel::H));
        let rec =
            simulate_counts(&h, &MeasurementSetting::linear(0.0), &link, 10000.0 / s, 3).unwrap();
        assert_eq!(rec.counts_r, 0);
        assert!((rec.counts_t as f64 - 10000.0).abs() < 5.0 * 100.0);
    }

    #[test]
    fn mixed_state_splits_evenly() {
        let mut link = test_link();
        link.detectors.dark_rate_1_hz = 0.0;
        link.detectors.dark_rate_2_hz = 0.0;
        let rho = DensityMatrix::maximally_mixed();
        for (i, angle) in [0.0, 0.4, 1.1].into_iter().enumerate() {
            let rec = simulate_counts(
                &rho,
                &MeasurementSetting::linear(angle),
                &link,
                10.0,
                i as u64,
            )
            .unwrap();
            let sigma = (rec.total() as f64).sqrt();
            assert!((rec.counts_t as f64 - rec.counts_r as f64).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn calibrated_rates() {
        let link = test_link();
        let s = link.signal_rate().unwrap();
        let rho = density_of(&universal_state(StateLabel::D));
        let duration = 100.0;
        let rec =
            simulate_counts(&rho, &MeasurementSetting::linear(0.3), &link, duration, 11).unwrap();
        let expected = (s + 800.0) * duration;
        assert!((rec.total() as f64 - expected).abs() < 3.0 * expected.sqrt());
        assert!((s - 11000.0).abs() < 200.0, "{s}");
    }

    #[test]
    fn counts_are_reproducible() {
        let mut link = test_link();
        link.fluctuation = Some(SignalFluctuation {
            min_factor: 9.0 / 11.0,
            max_factor: 12.0 / 11.0,
        });
        let rho = density_of(&universal_state(StateLabel::A));
        let a = simulate_counts(&rho, &MeasurementSetting::linear(0.2), &link, 5.0, 42).unwrap();
        let b = simulate_counts(&rho, &MeasurementSetting::linear(0.2), &link, 5.0, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_counts(&rho, &MeasurementSetting::linear(0.2), &link, 5.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ratio_insensitive_to_fluctuation() {
        let mut link = test_link();
        link.detectors.dark_rate_1_hz = 0.0;
        link.detectors.dark_rate_2_hz = 0.0;
        link.fluctuation = Some(SignalFluctuation {
            min_factor: 9.0 / 11.0,
            max_factor: 12.0 / 11.0,
        });
        let rho = density_of(&universal_state(StateLabel::H));
        let setting = MeasurementSetting::linear(0.5);
        let expected = setting.transmitted_probability(&rho);
        let mut totals = Vec::new();
        for stream in 0..20 {
            let rec = simulate_counts(&rho, &setting, &link, 10.0, stream).unwrap();
            let n = rec.total() as f64;
            let p = normalized_probability(&rec).unwrap();
            assert!((p - expected).abs() < 4.0 * (expected * (1.0 - expected) / n).sqrt());
            totals.push(n);
        }
        let spread = totals.iter().cloned().fold(f64::MIN, f64::max)
            - totals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 5000.0, "fluctuation should move totals: {spread}");
    }

    #[test]
    fn csv_header_and_round_trip() {
        let recs = vec![
            CountRecord::new(0.0, 10, 2, 1.5).unwrap(),
            CountRecord::new(0.785, 3, 4, 1.5).unwrap(),
        ];
        let mut buf = Vec::new();
        write_counts_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("setting_angle_rad,counts_t,counts_r,duration_s\n"));
        assert_eq!(read_counts_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut v = serde_json::to_value(test_link()).unwrap();
        v["colour"] = serde_json::json!(1);
        let err = serde_json::from_value::<LinkConfig>(v)
            .unwrap_err()
            .to_string();
        assert!(err.contains("colour"), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn empirical_rates_within_poisson_bounds(seed in any::<u64>(), theta in 0.0..3.2f64) {
            let mut link = test_link();
            link.seed = seed;
            let rho = density_of(&universal_state(StateLabel::R));
            let setting = MeasurementSetting::linear(theta);
            let s = link.signal_rate().unwrap();
            let duration = 50.0;
            let (mt, mr) = expected_counts(&rho, &setting, &link.detectors, s, duration);
            let rec = simulate_counts(&rho, &setting, &link, duration, 5).unwrap();
            // 4σ keeps the per-case false alarm rate below 1e-4.
            prop_assert!((rec.counts_t as f64 - mt).abs() < 4.0 * mt.sqrt());
            prop_assert!((rec.counts_r as f64 - mr).abs() < 4.0 * mr.sqrt());
        }
    }
}
