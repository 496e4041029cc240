//! End-to-end experiment: configuration, acquisition, reconstruction and
//! the machine-readable report.
//!
//! Every number in an [`ExperimentReport`] is produced by one of the library
//! operations; this module only sequences them and collects the results.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, CorrelationScan, ScanColumn, ScanPoint, SinusoidFit};
use crate::channel::{apply_channel, build_link_channel, ProcessMatrix};
use crate::error::{Error, Result};
use crate::photonics::{
    expected_counts, link_budget, simulate_counts, stream_id, write_counts_csv, CountRecord,
    DetectorId, LinkBudget, LinkConfig, MeasurementBasis, MeasurementSetting,
};
use crate::qstate::{
    bloch_of, density_of, purity, state_fidelity, universal_state, BlochVector, DensityMatrix,
    StateLabel,
};
use crate::tomography::{
    self, chi_bar_table, process_fidelity, reconstruct_process, ChiBar, MleOptions, ProcessDataset,
    TomographyDataset,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const PAPER55M: &str = include_str!("../presets/paper55m.toml");

const STAGE_TOMOGRAPHY: u16 = 1;
const STAGE_SCAN: u16 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySettings {
    /// Integration time per basis.
    #[serde(default = "default_tomo_duration")]
    pub duration_s: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_tomo_duration() -> f64 {
    10.0
}

fn default_max_iterations() -> usize {
    MleOptions::default().max_iterations
}

impl Default for TomographySettings {
    fn default() -> Self {
        TomographySettings {
            duration_s: default_tomo_duration(),
            max_iterations: default_max_iterations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSettings {
    #[serde(default = "default_scan_states")]
    pub states: Vec<StateLabel>,
    /// Number of analyzer angles spread evenly over `[0, π]`.
    #[serde(default = "default_scan_angles")]
    pub angles: usize,
    /// Integration time per angle.
    #[serde(default = "default_scan_duration")]
    pub duration_s: f64,
    /// APD whose raw counts are fitted for each state; unlisted states use
    /// APD1 for H, D, R and APD2 for V, A, L.
    #[serde(default)]
    pub detector: BTreeMap<StateLabel, DetectorId>,
}

fn default_scan_states() -> Vec<StateLabel> {
    vec![StateLabel::H, StateLabel::V, StateLabel::D, StateLabel::A]
}

fn default_scan_angles() -> usize {
    13
}

fn default_scan_duration() -> f64 {
    1.0
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            states: default_scan_states(),
            angles: default_scan_angles(),
            duration_s: default_scan_duration(),
            detector: BTreeMap::new(),
        }
    }
}

impl ScanSettings {
    pub fn detector_for(&self, label: StateLabel) -> DetectorId {
        self.detector.get(&label).copied().unwrap_or(match label {
            StateLabel::H | StateLabel::D | StateLabel::R => DetectorId::Apd1,
            StateLabel::V | StateLabel::A | StateLabel::L => DetectorId::Apd2,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Average fitted visibility the depolarizing weight is tuned to.
    pub target_average_visibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            dir: None,
            formats: default_formats(),
        }
    }
}

/// Full experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub link: LinkConfig,
    pub states: Vec<StateLabel>,
    #[serde(default)]
    pub tomography: TomographySettings,
    #[serde(default)]
    pub scan: ScanSettings,
    #[serde(default)]
    pub calibration: Option<CalibrationSettings>,
    #[serde(default)]
    pub output: OutputSettings,
}

fn default_schema() -> u32 {
    1
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: ExperimentPlan =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        ExperimentPlan::from_toml_str(&text)
    }

    /// Bundled presets by name; currently only `paper55m`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper55m" => ExperimentPlan::from_toml_str(PAPER55M),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    /// Either a preset name or a path to a TOML file.
    pub fn load(spec: &str) -> Result<Self> {
        if !spec.contains(['/', '.']) {
            return ExperimentPlan::preset(spec);
        }
        ExperimentPlan::from_file(Path::new(spec))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected 1)",
                self.schema_version
            )));
        }
        self.link.validate()?;
        if self.states.is_empty() {
            return Err(Error::Config(
                "`states` must list at least one state".into(),
            ));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tomography.duration_s) {
            return Err(Error::Config(
                "`tomography.duration_s` must be positive".into(),
            ));
        }
        if self.tomography.max_iterations == 0 {
            return Err(Error::Config(
                "`tomography.max_iterations` must be positive".into(),
            ));
        }
        if !positive(self.scan.duration_s) {
            return Err(Error::Config("`scan.duration_s` must be positive".into()));
        }
        if !self.scan.states.is_empty() && self.scan.angles < 6 {
            return Err(Error::Config("`scan.angles` must be at least 6".into()));
        }
        if let Some(c) = &self.calibration {
            if !(c.target_average_visibility > 0.0 && c.target_average_visibility <= 1.0) {
                return Err(Error::Config(
                    "`calibration.target_average_visibility` must lie in (0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.link.seed = seed;
        self
    }

    /// SHA-256 of the plan's canonical JSON form.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub target_average_visibility: f64,
    pub depolarizing: f64,
    pub predicted_average_visibility: f64,
}

fn label_index(label: StateLabel) -> u32 {
    StateLabel::ALL.iter().position(|&l| l == label).unwrap() as u32
}

fn port_column(link: &LinkConfig, detector: DetectorId) -> ScanColumn {
    if detector == link.detectors.transmitted_detector {
        ScanColumn::Transmitted
    } else {
        ScanColumn::Reflected
    }
}

/// Average fitted visibility of noise-free (mean-count) scans for `link`.
pub fn predicted_average_visibility(link: &LinkConfig, scan: &ScanSettings) -> Result<f64> {
    let chi = build_link_channel(link)?.chi;
    let rate = link.signal_rate()?;
    let mut fits = Vec::with_capacity(scan.states.len());
    for &label in &scan.states {
        let rho_out = apply_channel(&chi, &density_of(&universal_state(label)))?;
        let column = port_column(link, scan.detector_for(label));
        let points = analysis::scan_angles(scan.angles)
            .into_iter()
            .map(|theta| {
                let (t, r) = expected_counts(
                    &rho_out,
                    &MeasurementSetting::linear(theta),
                    &link.detectors,
                    rate,
                    scan.duration_s,
                );
                ScanPoint {
                    angle_rad: theta,
                    value: if column == ScanColumn::Transmitted {
                        t
                    } else {
                        r
                    },
                }
            })
            .collect();
        fits.push(analysis::fit_malus(&CorrelationScan::new(points)?)?);
    }
    analysis::average_visibility(&fits)
}

/// Bisection on the depolarizing weight so the predicted average visibility
/// hits `target`. Visibility is monotone decreasing in the weight.
pub fn calibrate_depolarizing(
    link: &LinkConfig,
    scan: &ScanSettings,
    target: f64,
) -> Result<Calibration> {
    let at = |p: f64| -> Result<f64> {
        let mut l = link.clone();
        l.polarization_noise.depolarizing = p;
        predicted_average_visibility(&l, scan)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let v_lo = at(lo)?;
    if target > v_lo {
        return Err(Error::InvalidParameter {
            name: "calibration.target_average_visibility",
            reason: format!("target {target} exceeds the noiseless visibility {v_lo:.6} allowed by the backgrounds"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let p = 0.5 * (lo + hi);
    Ok(Calibration {
        target_average_visibility: target,
        depolarizing: p,
        predicted_average_visibility: at(p)?,
    })
}

/// Simulated raw data for a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    /// Link after calibration, as actually simulated.
    pub link: LinkConfig,
    pub calibration: Option<Calibration>,
    pub true_chi: ProcessMatrix,
    pub survival_probability: f64,
    /// Three records per state in H/V, D/A, R/L order.
    pub tomography: BTreeMap<StateLabel, Vec<CountRecord>>,
    pub scans: BTreeMap<StateLabel, Vec<CountRecord>>,
}

pub fn tomography_records(
    rho_out: &DensityMatrix,
    label: StateLabel,
    link: &LinkConfig,
    duration: f64,
) -> Result<Vec<CountRecord>> {
    MeasurementBasis::ALL
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            simulate_counts(
                rho_out,
                &MeasurementSetting::basis(b),
                link,
                duration,
                stream_id(STAGE_TOMOGRAPHY, label_index(label), i as u16),
            )
        })
        .collect()
}

pub fn scan_records(
    rho_out: &DensityMatrix,
    label: StateLabel,
    link: &LinkConfig,
    scan: &ScanSettings,
) -> Result<Vec<CountRecord>> {
    analysis::scan_angles(scan.angles)
        .into_iter()
        .enumerate()
        .map(|(i, theta)| {
            simulate_counts(
                rho_out,
                &MeasurementSetting::linear(theta),
                link,
                scan.duration_s,
                stream_id(STAGE_SCAN, label_index(label), i as u16),
            )
        })
        .collect()
}

/// Prepares every state, sends it through the (calibrated) link and records
/// tomography and scan counts.
pub fn acquire(plan: &ExperimentPlan) -> Result<Acquisition> {
    plan.validate()?;
    let mut link = plan.link.clone();
    let calibration = match &plan.calibration {
        Some(c) => {
            let cal = calibrate_depolarizing(&link, &plan.scan, c.target_average_visibility)?;
            link.polarization_noise.depolarizing = cal.depolarizing;
            Some(cal)
        }
        None => None,
    };
    let channel = build_link_channel(&link)?;
    let mut tomography = BTreeMap::new();
    for &label in &plan.states {
        let rho_out = apply_channel(&channel.chi, &density_of(&universal_state(label)))?;
        tomography.insert(
            label,
            tomography_records(&rho_out, label, &link, plan.tomography.duration_s)?,
        );
    }
    let mut scans = BTreeMap::new();
    for &label in &plan.scan.states {
        let rho_out = apply_channel(&channel.chi, &density_of(&universal_state(label)))?;
        scans.insert(label, scan_records(&rho_out, label, &link, &plan.scan)?);
    }
    Ok(Acquisition {
        link,
        calibration,
        true_chi: channel.chi,
        survival_probability: channel.survival_probability,
        tomography,
        scans,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub fidelity_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateReport {
    pub label: StateLabel,
    pub counts: Vec<CountRecord>,
    pub density_matrix: DensityMatrix,
    pub bloch: BlochVector,
    /// `tr √(√ρ_received ρ_sent √ρ_received)`.
    pub fidelity: f64,
    /// Square of `fidelity`, the other common convention.
    pub fidelity_squared: f64,
    pub purity: f64,
    pub mle_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibilityReport {
    pub label: StateLabel,
    pub detector: DetectorId,
    pub fit: SinusoidFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessReport {
    pub chi: ProcessMatrix,
    pub bars: Vec<ChiBar>,
    /// Fidelity of the reconstructed χ to the identity channel.
    pub fidelity: f64,
    pub fidelity_squared: f64,
    /// Fidelity of the reconstructed χ to the simulated channel.
    pub fidelity_to_simulated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport {
    pub chi: ProcessMatrix,
    pub survival_probability: f64,
    pub rotation_rad: f64,
    pub depolarizing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub link_budget: Option<LinkBudget>,
    pub calibration: Option<Calibration>,
    pub simulated_channel: Option<ChannelReport>,
    pub states: Vec<StateReport>,
    pub average_fidelity: Option<f64>,
    pub average_fidelity_squared: Option<f64>,
    pub average_purity: Option<f64>,
    pub process: Option<ProcessReport>,
    pub visibility: Vec<VisibilityReport>,
    pub average_visibility: Option<f64>,
}

impl ExperimentReport {
    fn empty(plan: &ExperimentPlan) -> Self {
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            provenance: Provenance {
                config_hash: plan.config_hash(),
                seed: plan.link.seed,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                fidelity_convention:
                    "sqrt: tr sqrt(sqrt(rho_received) rho_sent sqrt(rho_received))".into(),
            },
            link_budget: None,
            calibration: None,
            simulated_channel: None,
            states: Vec::new(),
            average_fidelity: None,
            average_fidelity_squared: None,
            average_purity: None,
            process: None,
            visibility: Vec::new(),
            average_visibility: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Configuration,
    Acquisition,
    StateTomography,
    ProcessTomography,
    VisibilityFit,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Configuration => "configuration",
            Stage::Acquisition => "acquisition",
            Stage::StateTomography => "state tomography",
            Stage::ProcessTomography => "process tomography",
            Stage::VisibilityFit => "visibility fit",
        })
    }
}

/// A failed run: the stage that failed, why, and everything computed before.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
    pub partial: Box<ExperimentReport>,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs acquisition and the full analysis chain. Deterministic in
/// `(plan, seed)`.
pub fn run_full_experiment(
    plan: &ExperimentPlan,
) -> std::result::Result<ExperimentReport, StageError> {
    let mut report = ExperimentReport::empty(plan);
    macro_rules! stage {
        ($stage:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(source) => {
                    return Err(StageError {
                        stage: $stage,
                        source,
                        partial: Box::new(report),
                    })
                }
            }
        };
    }

    stage!(Stage::Configuration, plan.validate());
    report.link_budget = Some(stage!(Stage::Configuration, link_budget(&plan.link)));
    let acq = stage!(Stage::Acquisition, acquire(plan));
    report.calibration = acq.calibration;
    report.simulated_channel = Some(ChannelReport {
        chi: acq.true_chi,
        survival_probability: acq.survival_probability,
        rotation_rad: acq.link.polarization_noise.rotation_rad,
        depolarizing: acq.link.polarization_noise.depolarizing,
    });

    let opts = MleOptions {
        max_iterations: plan.tomography.max_iterations,
        ..MleOptions::default()
    };
    let mut outputs = BTreeMap::new();
    for &label in &plan.states {
        let records = &acq.tomography[&label];
        let dataset = stage!(
            Stage::StateTomography,
            TomographyDataset::from_records(records)
        );
        let mle = stage!(
            Stage::StateTomography,
            tomography::reconstruct_mle_with(&dataset, &opts)
        );
        let sent = density_of(&universal_state(label));
        let fidelity = stage!(Stage::StateTomography, state_fidelity(&sent, &mle.rho));
        outputs.insert(label, mle.rho);
        report.states.push(StateReport {
            label,
            counts: records.clone(),
            density_matrix: mle.rho,
            bloch: bloch_of(&mle.rho),
            fidelity,
            fidelity_squared: fidelity * fidelity,
            purity: purity(&mle.rho),
            mle_iterations: mle.iterations,
        });
    }
    report.average_fidelity = mean(report.states.iter().map(|s| s.fidelity));
    report.average_fidelity_squared = mean(report.states.iter().map(|s| s.fidelity_squared));
    report.average_purity = mean(report.states.iter().map(|s| s.purity));

    let dataset = stage!(Stage::ProcessTomography, ProcessDataset::new(outputs));
    let chi = stage!(Stage::ProcessTomography, reconstruct_process(&dataset));
    let fidelity = stage!(
        Stage::ProcessTomography,
        process_fidelity(&chi, &ProcessMatrix::ideal())
    );
    let to_sim = stage!(
        Stage::ProcessTomography,
        process_fidelity(&chi, &acq.true_chi)
    );
    report.process = Some(ProcessReport {
        chi,
        bars: chi_bar_table(&chi),
        fidelity,
        fidelity_squared: fidelity * fidelity,
        fidelity_to_simulated: to_sim,
    });

    for &label in &plan.scan.states {
        let detector = plan.scan.detector_for(label);
        let scan = stage!(
            Stage::VisibilityFit,
            CorrelationScan::from_records(&acq.scans[&label], port_column(&acq.link, detector))
        );
        let fit = stage!(Stage::VisibilityFit, analysis::fit_malus(&scan));
        report.visibility.push(VisibilityReport {
            label,
            detector,
            fit,
        });
    }
    if !report.visibility.is_empty() {
        let fits: Vec<SinusoidFit> = report.visibility.iter().map(|v| v.fit).collect();
        report.average_visibility = Some(stage!(
            Stage::VisibilityFit,
            analysis::average_visibility(&fits)
        ));
    }
    Ok(report)
}

fn io_err(path: &Path, e: impl fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn write_counts_file(path: &Path, records: &[CountRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_counts_csv(records, &mut buf).map_err(|e| io_err(path, e))?;
    write_file(path, &buf)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Serialize)]
struct StateRow {
    label: StateLabel,
    fidelity: f64,
    fidelity_squared: f64,
    purity: f64,
    bloch_x: f64,
    bloch_y: f64,
    bloch_z: f64,
}

#[derive(Serialize)]
struct VisibilityRow {
    label: StateLabel,
    detector: DetectorId,
    visibility: f64,
    visibility_stderr: f64,
    amplitude: f64,
    offset: f64,
    phase_rad: f64,
}

/// Writes `report.json` and/or plot-ready CSV tables into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path, formats: &[OutputFormat]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    if formats.contains(&OutputFormat::Json) {
        write_file(&dir.join("report.json"), report.to_json().as_bytes())?;
    }
    if formats.contains(&OutputFormat::Csv) {
        let rows: Vec<StateRow> = report
            .states
            .iter()
            .map(|s| StateRow {
                label: s.label,
                fidelity: s.fidelity,
                fidelity_squared: s.fidelity_squared,
                purity: s.purity,
                bloch_x: s.bloch.x,
                bloch_y: s.bloch.y,
                bloch_z: s.bloch.z,
            })
            .collect();
        write_file(&dir.join("states.csv"), &csv_bytes(&rows)?)?;
        if let Some(p) = &report.process {
            write_file(&dir.join("chi_bars.csv"), &csv_bytes(&p.bars)?)?;
        }
        let rows: Vec<VisibilityRow> = report
            .visibility
            .iter()
            .map(|v| VisibilityRow {
                label: v.label,
                detector: v.detector,
                visibility: v.fit.visibility,
                visibility_stderr: v.fit.visibility_stderr,
                amplitude: v.fit.amplitude,
                offset: v.fit.offset,
                phase_rad: v.fit.phase,
            })
            .collect();
        write_file(&dir.join("visibility.csv"), &csv_bytes(&rows)?)?;
        for s in &report.states {
            write_counts_file(&dir.join(format!("counts_{}.csv", s.label)), &s.counts)?;
        }
    }
    Ok(())
}

/// Writes the raw acquisition: `counts_<L>.csv` (tomography, H/V, D/A, R/L
/// rows) and `scan_<L>.csv` per state.
pub fn write_acquisition(acq: &Acquisition, dir: &Path, formats: &[OutputFormat]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    if formats.contains(&OutputFormat::Csv) {
        for (label, recs) in &acq.tomography {
            write_counts_file(&dir.join(format!("counts_{label}.csv")), recs)?;
        }
        for (label, recs) in &acq.scans {
            write_counts_file(&dir.join(format!("scan_{label}.csv")), recs)?;
        }
    }
    if formats.contains(&OutputFormat::Json) {
        #[derive(Serialize)]
        struct AcqJson<'a> {
            seed: u64,
            depolarizing: f64,
            tomography: &'a BTreeMap<StateLabel, Vec<CountRecord>>,
            scans: &'a BTreeMap<StateLabel, Vec<CountRecord>>,
        }
        let js = serde_json::to_string_pretty(&AcqJson {
            seed: acq.link.seed,
            depolarizing: acq.link.polarization_noise.depolarizing,
            tomography: &acq.tomography,
            scans: &acq.scans,
        })
        .expect("acquisition serializes");
        write_file(&dir.join("acquisition.json"), js.as_bytes())?;
    }
    Ok(())
}
