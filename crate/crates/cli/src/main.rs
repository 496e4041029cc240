use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use polarlink::analysis::{fit_malus_with, read_scan_csv, FitWeighting, ScanColumn, SinusoidFit};
use polarlink::channel::ProcessMatrix;
use polarlink::experiment::{self, ExperimentPlan, OutputFormat};
use polarlink::photonics::{link_budget, read_counts_csv};
use polarlink::qstate::{
    bloch_of, density_of, purity, state_fidelity, universal_state, DensityMatrix, StateLabel,
};
use polarlink::tomography::{
    chi_bar_table, process_fidelity, reconstruct_mle_with, reconstruct_process, MleOptions,
    ProcessDataset, TomographyDataset,
};
use polarlink::Error;

#[derive(Parser)]
#[command(
    name = "polarlink",
    version,
    about = "Underwater polarization-qubit link simulator and tomography toolkit"
)]
struct Cli {
    /// Preset name (`paper55m`) or path to a TOML plan.
    #[arg(long, global = true, default_value = "paper55m")]
    config: String,
    /// Override the plan's RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Column {
    Transmitted,
    Reflected,
    Normalized,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Uniform,
    Poisson,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate tomography and scan counts for every state in the plan.
    Simulate,
    /// Reconstruct a density matrix from a three-row (H/V, D/A, R/L) counts CSV.
    StateTomo {
        counts: PathBuf,
        /// Prepared state, to report the fidelity against.
        #[arg(long)]
        state: Option<StateLabel>,
    },
    /// Reconstruct the process matrix from per-state counts CSVs.
    ProcessTomo {
        /// `LABEL=path` pairs, e.g. `H=counts_H.csv`.
        #[arg(long = "input", value_parser = parse_input)]
        inputs: Vec<(StateLabel, PathBuf)>,
        /// Directory holding `counts_<LABEL>.csv` files.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Fit a Malus-law sinusoid to an analyzer scan CSV.
    FitVisibility {
        scan: PathBuf,
        #[arg(long, value_enum, default_value_t = Column::Transmitted)]
        column: Column,
        #[arg(long, value_enum, default_value_t = Weighting::Uniform)]
        weighting: Weighting,
    },
    /// Print the loss and rate budget of the configured link.
    LinkBudget,
    /// Run the full experiment and write the report.
    Run,
}

fn parse_input(s: &str) -> Result<(StateLabel, PathBuf), String> {
    let (label, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LABEL=path, got `{s}`"))?;
    let label = label.parse::<StateLabel>().map_err(|e| e.to_string())?;
    Ok((label, PathBuf::from(path)))
}

/// Maps a library error onto the documented exit codes.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::UnknownLabel(_) => 2,
        Error::NonConvergence { .. } => 3,
        Error::Io(_) => 4,
        _ => 1,
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn load_plan(cli: &Cli) -> Result<ExperimentPlan, Error> {
    let plan = ExperimentPlan::load(&cli.config)?;
    Ok(match cli.seed {
        Some(s) => plan.with_seed(s),
        None => plan,
    })
}

fn read_records(path: &Path) -> Result<Vec<polarlink::photonics::CountRecord>, Error> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_counts_csv(f).map_err(|e| io_err(path, e))
}

/// Writes `text` to `<out>/<name>` or to stdout.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Error> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| io_err(&p, e))
        }
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io(format!("stdout: {e}"))),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[derive(Serialize)]
struct StateSummary {
    source: String,
    label: Option<StateLabel>,
    bloch_x: f64,
    bloch_y: f64,
    bloch_z: f64,
    purity: f64,
    fidelity: Option<f64>,
    iterations: usize,
}

#[derive(Serialize)]
struct StateTomoJson {
    summary: StateSummary,
    density_matrix: DensityMatrix,
}

#[derive(Serialize)]
struct ProcessJson {
    inputs: Vec<StateLabel>,
    chi: ProcessMatrix,
    bars: Vec<polarlink::tomography::ChiBar>,
    fidelity: f64,
}

#[derive(Serialize)]
struct FitRow {
    visibility: f64,
    visibility_stderr: f64,
    amplitude: f64,
    amplitude_stderr: f64,
    offset: f64,
    offset_stderr: f64,
    phase_rad: f64,
    phase_stderr: f64,
    residual: f64,
}

impl From<&SinusoidFit> for FitRow {
    fn from(f: &SinusoidFit) -> Self {
        FitRow {
            visibility: f.visibility,
            visibility_stderr: f.visibility_stderr,
            amplitude: f.amplitude,
            amplitude_stderr: f.amplitude_stderr,
            offset: f.offset,
            offset_stderr: f.offset_stderr,
            phase_rad: f.phase,
            phase_stderr: f.phase_stderr,
            residual: f.residual,
        }
    }
}

fn mle(path: &Path) -> Result<polarlink::tomography::MleOutcome, Error> {
    let ds = TomographyDataset::from_records(&read_records(path)?)?;
    reconstruct_mle_with(&ds, &MleOptions::default())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Simulate => {
            let plan = load_plan(cli)?;
            let acq = experiment::acquire(&plan)?;
            let dir = out
                .map(Path::to_path_buf)
                .or_else(|| plan.output.dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("polarlink-out"));
            experiment::write_acquisition(&acq, &dir, &[cli.format.into()])?;
            println!("wrote simulated counts to {}", dir.display());
        }
        Command::StateTomo { counts, state } => {
            let m = mle(counts)?;
            let fidelity = match state {
                Some(l) => Some(state_fidelity(&density_of(&universal_state(*l)), &m.rho)?),
                None => None,
            };
            let b = bloch_of(&m.rho);
            let summary = StateSummary {
                source: counts.display().to_string(),
                label: *state,
                bloch_x: b.x,
                bloch_y: b.y,
                bloch_z: b.z,
                purity: purity(&m.rho),
                fidelity,
                iterations: m.iterations,
            };
            match cli.format {
                Format::Json => emit(
                    out,
                    "state.json",
                    &to_json(&StateTomoJson {
                        summary,
                        density_matrix: m.rho,
                    }),
                )?,
                Format::Csv => emit(out, "state.csv", &to_csv(&[summary])?)?,
            }
        }
        Command::ProcessTomo { inputs, dir } => {
            let mut files: BTreeMap<StateLabel, PathBuf> = BTreeMap::new();
            if let Some(d) = dir {
                for l in StateLabel::ALL {
                    let p = d.join(format!("counts_{l}.csv"));
                    if p.exists() {
                        files.insert(l, p);
                    }
                }
            }
            files.extend(inputs.iter().cloned());
            if files.is_empty() {
                return Err(Error::Config(
                    "process-tomo needs --input LABEL=path or --dir".into(),
                ));
            }
            let mut outputs = BTreeMap::new();
            for (l, p) in &files {
                outputs.insert(*l, mle(p)?.rho);
            }
            let chi = reconstruct_process(&ProcessDataset::new(outputs)?)?;
            let fidelity = process_fidelity(&chi, &ProcessMatrix::ideal())?;
            let bars = chi_bar_table(&chi);
            match cli.format {
                Format::Json => emit(
                    out,
                    "process.json",
                    &to_json(&ProcessJson {
                        inputs: files.keys().copied().collect(),
                        chi,
                        bars,
                        fidelity,
                    }),
                )?,
                Format::Csv => emit(out, "chi_bars.csv", &to_csv(&bars)?)?,
            }
        }
        Command::FitVisibility {
            scan,
            column,
            weighting,
        } => {
            let column = match column {
                Column::Transmitted => ScanColumn::Transmitted,
                Column::Reflected => ScanColumn::Reflected,
                Column::Normalized => ScanColumn::Normalized,
            };
            let weighting = match weighting {
                Weighting::Uniform => FitWeighting::Uniform,
                Weighting::Poisson => FitWeighting::Poisson,
            };
            let f = File::open(scan).map_err(|e| io_err(scan, e))?;
            let fit = fit_malus_with(&read_scan_csv(f, column)?, weighting)?;
            match cli.format {
                Format::Json => emit(out, "fit.json", &to_json(&fit))?,
                Format::Csv => emit(out, "fit.csv", &to_csv(&[FitRow::from(&fit)])?)?,
            }
        }
        Command::LinkBudget => {
            let plan = load_plan(cli)?;
            let budget = link_budget(&plan.link)?;
            match cli.format {
                Format::Json => emit(out, "link_budget.json", &to_json(&budget))?,
                Format::Csv => emit(out, "link_budget.csv", &to_csv(&[budget])?)?,
            }
        }
        Command::Run => {
            let plan = load_plan(cli)?;
            let dir = out
                .map(Path::to_path_buf)
                .or_else(|| plan.output.dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("polarlink-out"));
            let formats = if cli.out.is_some() || plan.output.formats.is_empty() {
                vec![cli.format.into(), OutputFormat::Csv]
            } else {
                plan.output.formats.clone()
            };
            let report = match experiment::run_full_experiment(&plan) {
                Ok(r) => r,
                Err(e) => {
                    // Keep whatever finished before the failure.
                    let _ = experiment::write_report(&e.partial, &dir, &[OutputFormat::Json]);
                    eprintln!("error: {e}");
                    return Err(e.source);
                }
            };
            experiment::write_report(&report, &dir, &formats)?;
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            println!(
                "average fidelity {}  average purity {}  process fidelity {}  average visibility {}  -> {}",
                show(report.average_fidelity),
                show(report.average_purity),
                show(report.process.as_ref().map(|p| p.fidelity)),
                show(report.average_visibility),
                dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
