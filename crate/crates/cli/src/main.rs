mod chart;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pansatz::calibration::{calibrate_device, CalibrationData, DEFAULT_LEAK_THRESHOLD};
use pansatz::dynamics::DeviceModel;
use pansatz::hamiltonians::{exact_ground_energy, MoleculeSpec};
use pansatz::optimizers::{HillClimbConfig, OptimizerKind, SpsaConfig};
use pansatz::vqe::{molecule_files, run_sweep, run_vqe, AnsatzChoice, SweepOutcome, VqeResult, VqeSettings};

use crate::chart::{Chart, Series};
use crate::output::{write_atomic, DurationRow, SweepRow};

const DATA_ENV: &str = "PANSATZ_DATA_DIR";

#[derive(Parser, Debug)]
#[command(name = "pansatz", version, about = "Pulse-level transmon simulation and duration-parameterized VQE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate single-qubit and cross-resonance pulses for a device.
    Calibrate {
        /// Device JSON (bare names are looked up under <data>/devices).
        #[arg(long)]
        device: PathBuf,
        /// Calibrate only the first N qubits (default: all).
        #[arg(long)]
        qubits: Option<usize>,
        /// Maximum population allowed outside the qubit subspace.
        #[arg(long, default_value_t = DEFAULT_LEAK_THRESHOLD)]
        leak_threshold: f64,
        /// Output calibration JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact ground energy of a molecule Hamiltonian by diagonalization.
    Fci {
        /// Molecule JSON (bare names are looked up under <data>/molecules).
        #[arg(long)]
        molecule: PathBuf,
    },
    /// One PANSATZ VQE run.
    Vqe(SingleArgs),
    /// One VQE run with the gate-level Real Amplitudes baseline.
    BaselineVqe(SingleArgs),
    /// PANSATZ VQE at every molecule file of a directory; writes CSV.
    Sweep(SweepArgs),
    /// PANSATZ and baseline schedule durations along a sweep; writes CSV.
    Durations(SweepArgs),
}

#[derive(Args, Debug)]
struct SingleArgs {
    /// Molecule JSON (bare names are looked up under <data>/molecules).
    #[arg(long)]
    molecule: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Result JSON (default: summary on stdout only).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Directory of molecule JSON files (bare names are looked up under <data>/molecules).
    #[arg(long)]
    molecules: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render a line chart to this SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Device JSON (bare names are looked up under <data>/devices).
    #[arg(long)]
    device: PathBuf,
    /// Calibration JSON; calibrated from the device when omitted.
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Hill)]
    optimizer: OptimizerArg,
    /// Shots per measurement group.
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    /// Ansatz layers.
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Relaxation and dephasing during pulses.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    noise: Switch,
    /// Readout assignment errors.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    readout: Switch,
    #[arg(long, value_enum, default_value_t = Mitigation::None)]
    mitigation: Mitigation,
    /// Stop once a cost estimate is within chemical accuracy of FCI.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    fci_stop: Switch,
    /// Optimizer iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    Hill,
    Spsa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mitigation {
    Tensored,
    None,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Calibrate {
            device,
            qubits,
            leak_threshold,
            out,
        } => {
            let dev = load_device(&device)?;
            let n = qubits.unwrap_or(dev.n_qubits());
            let cal = calibrate_device(&dev, n, leak_threshold)?;
            emit(out.as_deref(), format!("{}\n", cal.to_json()).as_bytes())?;
        }
        Command::Fci { molecule } => {
            let path = resolve(&molecule, "molecules")?;
            let m = MoleculeSpec::load(&path)?;
            let e = exact_ground_energy(&m.hamiltonian)?;
            println!("{e:.12}");
        }
        Command::Vqe(a) => single(a, false)?,
        Command::BaselineVqe(a) => single(a, true)?,
        Command::Sweep(a) => return sweep(a, false),
        Command::Durations(a) => return sweep(a, true),
    }
    Ok(ExitCode::SUCCESS)
}

fn data_root() -> PathBuf {
    std::env::var_os(DATA_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

/// `p` as given if it exists, else under the data root, its `kind`
/// directory, or (molecules) the per-molecule directory named by the prefix.
fn resolve(p: &Path, kind: &str) -> Result<PathBuf> {
    if p.exists() {
        return Ok(p.to_path_buf());
    }
    let root = data_root();
    let mut candidates = vec![root.join(p), root.join(kind).join(p)];
    if let Some(prefix) = p.file_name().and_then(|f| f.to_str()).and_then(|f| f.split('_').next()) {
        candidates.push(root.join(kind).join(prefix).join(p));
    }
    candidates
        .into_iter()
        .find(|c| c.exists())
        .with_context(|| format!("{} not found (also looked under {})", p.display(), root.display()))
}

fn load_device(p: &Path) -> Result<DeviceModel> {
    let path = resolve(p, "devices")?;
    Ok(DeviceModel::load(&path)?)
}

fn settings(run: &RunArgs, n_qubits: usize, baseline: bool) -> Result<VqeSettings> {
    if let Some(j) = run.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        // only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    if run.layers == 0 {
        bail!("--layers must be at least 1");
    }
    let device = load_device(&run.device)?;
    let calibration = match &run.calib {
        // trimmed to the qubits in use so the config hash matches an on-the-fly run
        Some(c) => CalibrationData::load(resolve(c, "calibrations")?)?.first(n_qubits)?,
        None => calibrate_device(&device, n_qubits.min(device.n_qubits()), DEFAULT_LEAK_THRESHOLD)?,
    };
    let mut s = VqeSettings::new(device, calibration);
    s.ansatz = if baseline {
        AnsatzChoice::Gansatz { layers: run.layers }
    } else {
        AnsatzChoice::Pansatz { layers: run.layers }
    };
    s.optimizer = match run.optimizer {
        OptimizerArg::Hill => OptimizerKind::HillClimb(HillClimbConfig {
            max_iters: run.max_iters.unwrap_or(HillClimbConfig::default().max_iters),
            ..HillClimbConfig::default()
        }),
        OptimizerArg::Spsa => OptimizerKind::Spsa(SpsaConfig {
            max_iters: run.max_iters.unwrap_or(SpsaConfig::default().max_iters),
            ..SpsaConfig::default()
        }),
    };
    s.shots = run.shots;
    s.noise = run.noise.on();
    s.readout = run.readout.on();
    s.mitigation = run.mitigation == Mitigation::Tensored;
    s.fci_stopping = run.fci_stop.on();
    s.seed = run.seed;
    Ok(s)
}

fn single(a: SingleArgs, baseline: bool) -> Result<()> {
    let path = resolve(&a.molecule, "molecules")?;
    let m = MoleculeSpec::load(&path)?;
    let s = settings(&a.run, m.n_qubits, baseline)?;
    let r = run_vqe(&m, &s)?;
    println!("{}", summary(&r));
    if let Some(out) = &a.out {
        let doc = serde_json::json!({
            "config_hash": s.config_hash(),
            "seed": s.seed,
            "result": r,
        });
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        write_atomic(out, text.as_bytes())?;
    }
    Ok(())
}

fn summary(r: &VqeResult) -> String {
    format!(
        "{} {} Å: E = {:.6} ± {:.6} Ha, FCI = {:.6}, |ΔE| = {:.6}, converged = {}, iterations = {}, duration = {} dt ({:.1} ns), baseline = {} dt ({:.1} ns)",
        r.molecule,
        r.distance,
        r.energy,
        r.stderr,
        r.fci,
        r.abs_error,
        r.converged,
        r.iterations,
        r.durations.pansatz_dt,
        r.durations.pansatz_ns,
        r.durations.gansatz_dt,
        r.durations.gansatz_ns,
    )
}

fn sweep(a: SweepArgs, durations: bool) -> Result<ExitCode> {
    let dir = resolve(&a.molecules, "molecules")?;
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let files = molecule_files(&dir)?;
    let n = files
        .iter()
        .filter_map(|f| MoleculeSpec::load(f).ok())
        .map(|m| m.n_qubits)
        .max()
        .unwrap_or(2);
    let s = settings(&a.run, n, false)?;
    let hash = s.config_hash();
    let outcomes = run_sweep(&files, &s);
    let csv = if durations {
        output::to_csv(outcomes.iter().map(DurationRow::from_outcome))?
    } else {
        output::to_csv(outcomes.iter().map(|o| SweepRow::from_outcome(o, &s, &hash)))?
    };
    emit(a.out.as_deref(), &csv)?;
    if let Some(svg) = &a.svg {
        let chart = if durations { duration_chart(&outcomes) } else { energy_chart(&outcomes) };
        write_atomic(svg, chart.render().as_bytes())?;
    }
    let failed: Vec<&SweepOutcome> = outcomes.iter().filter(|o| o.result.is_err()).collect();
    for o in &failed {
        if let Err(e) = &o.result {
            eprintln!("error: {}: {e}", o.file.display());
        }
    }
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn ok_results(outcomes: &[SweepOutcome]) -> impl Iterator<Item = &VqeResult> {
    outcomes.iter().filter_map(|o| o.result.as_ref().ok())
}

fn energy_chart(outcomes: &[SweepOutcome]) -> Chart {
    let name = ok_results(outcomes).next().map(|r| r.molecule.clone()).unwrap_or_default();
    Chart {
        title: format!("{name} dissociation curve"),
        x_label: "distance (Å)".into(),
        y_label: "energy (Ha)".into(),
        series: vec![
            Series::line("FCI", "#444444", ok_results(outcomes).map(|r| (r.distance, r.fci)).collect()),
            Series::markers("VQE", "#d62728", ok_results(outcomes).map(|r| (r.distance, r.energy)).collect()),
        ],
    }
}

fn duration_chart(outcomes: &[SweepOutcome]) -> Chart {
    Chart {
        title: "Schedule duration".into(),
        x_label: "distance (Å)".into(),
        y_label: "duration (ns)".into(),
        series: vec![
            Series::line(
                "baseline",
                "#1f77b4",
                ok_results(outcomes).map(|r| (r.distance, r.durations.gansatz_ns)).collect(),
            ),
            Series::line(
                "PANSATZ",
                "#d62728",
                ok_results(outcomes).map(|r| (r.distance, r.durations.pansatz_ns)).collect(),
            ),
        ],
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}
