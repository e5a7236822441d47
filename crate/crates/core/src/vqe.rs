//! VQE orchestration: build, evolve, estimate and optimize; bond-distance sweeps.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{
    build_pansatz, gansatz_hf_params, gansatz_param_count, gansatz_schedule_duration, hf_initial_params,
    simulate_gansatz, GansatzConfig, PansatzConfig, ParamKind,
};
use crate::calibration::CalibrationData;
use crate::dynamics::{
    evolve_schedule, DensityMatrix, DeviceModel, DressedBasis, NoiseConfig, ReadoutFrame, DEFAULT_SUBSTEPS,
};
use crate::error::{Error, Result};
use crate::estimation::{Estimator, EstimatorOptions, ReadoutModel};
use crate::hamiltonians::{exact_expectation, MoleculeSpec};
use crate::optimizers::{
    minimize, Coordinate, HillClimbConfig, OptimResult, OptimizerConfig, OptimizerKind, StopReason, TraceEntry,
    CHEMICAL_ACCURACY, DEFAULT_PHASE_STEP,
};
use crate::seed;

const FINAL_ESTIMATE_TAG: u64 = 0xF1A1;
const OPTIMIZER_TAG: u64 = 0x0B7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ansatz", rename_all = "snake_case")]
pub enum AnsatzChoice {
    Pansatz { layers: usize },
    Gansatz { layers: usize },
}

impl AnsatzChoice {
    pub fn layers(&self) -> usize {
        match *self {
            AnsatzChoice::Pansatz { layers } | AnsatzChoice::Gansatz { layers } => layers,
        }
    }
}

/// Everything about a run except the molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeSettings {
    pub device: DeviceModel,
    pub calibration: CalibrationData,
    pub ansatz: AnsatzChoice,
    pub optimizer: OptimizerKind,
    pub shots: u64,
    pub noise: bool,
    pub readout: bool,
    pub mitigation: bool,
    pub seed: u64,
    /// Stop the optimizer once a cost is within chemical accuracy of FCI.
    pub fci_stopping: bool,
    /// Diagnostic mode: exact expectations on the renormalized qubit subspace, no sampling.
    pub exact: bool,
    pub substeps: usize,
}

impl VqeSettings {
    pub fn new(device: DeviceModel, calibration: CalibrationData) -> Self {
        VqeSettings {
            device,
            calibration,
            ansatz: AnsatzChoice::Pansatz { layers: 1 },
            optimizer: OptimizerKind::HillClimb(HillClimbConfig::default()),
            shots: 10_000,
            noise: true,
            readout: false,
            mitigation: false,
            seed: 0,
            fci_stopping: true,
            exact: false,
            substeps: DEFAULT_SUBSTEPS,
        }
    }

    /// SHA-256 of the serialized settings with the seed cleared, so the
    /// points of one sweep share a hash.
    pub fn config_hash(&self) -> String {
        let canonical = VqeSettings { seed: 0, ..self.clone() };
        let json = serde_json::to_vec(&canonical).expect("settings serialize");
        hex::encode(Sha256::digest(&json).as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationReport {
    pub pansatz_dt: u64,
    pub pansatz_ns: f64,
    pub gansatz_dt: u64,
    pub gansatz_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeResult {
    pub molecule: String,
    pub distance: f64,
    pub ansatz: AnsatzChoice,
    pub energy: f64,
    pub stderr: f64,
    pub fci: f64,
    pub abs_error: f64,
    /// Within tolerance of FCI given the final estimate, or the optimizer
    /// stopped at the tolerance goal.
    pub converged: bool,
    /// `abs_error <= 0.0016 + 2·stderr` for the fresh final estimate alone.
    pub within_band: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    /// Duration of the schedule at the final parameters (PANSATZ) or of the
    /// fixed gate sequence (GANSATZ).
    pub schedule_duration_dt: u64,
    pub gansatz_duration_dt: u64,
    pub durations: DurationReport,
    pub params_final: Vec<f64>,
    pub param_names: Vec<String>,
    pub trace: Vec<TraceEntry>,
    pub seed: u64,
}

/// Prepared cost model for one molecule.
pub struct Problem {
    molecule: MoleculeSpec,
    device: DeviceModel,
    settings: VqeSettings,
    pansatz: Option<PansatzConfig>,
    gansatz: GansatzConfig,
    noise: NoiseConfig,
    dressed: Option<DressedBasis>,
    estimator: Estimator,
}

impl Problem {
    pub fn new(molecule: &MoleculeSpec, settings: &VqeSettings) -> Result<Self> {
        let n = molecule.n_qubits;
        if n > settings.device.n_qubits() {
            return Err(Error::validation(
                "molecule",
                format!("{n} qubits needed, device has {}", settings.device.n_qubits()),
            ));
        }
        let device = settings.device.first(n)?;
        let cal = settings.calibration.first(n)?;
        let layers = settings.ansatz.layers();
        let pansatz = match settings.ansatz {
            AnsatzChoice::Pansatz { layers } => Some(PansatzConfig::linear(n, layers, cal.clone())?),
            AnsatzChoice::Gansatz { .. } => None,
        };
        let gansatz = GansatzConfig::linear(n, layers.max(1), &cal, device.pulse_defaults.gansatz_cnot_cr_dt)?;
        let gansatz = GansatzConfig { layers, ..gansatz };
        let noise = if settings.noise {
            NoiseConfig::from_device(&device, true)
        } else {
            NoiseConfig::off(n)
        };
        let readout = if settings.readout {
            Some(ReadoutModel::from_device(&device, n)?)
        } else {
            None
        };
        let estimator = Estimator::new(
            &molecule.hamiltonian,
            EstimatorOptions {
                readout,
                mitigate: settings.mitigation,
                leakage_policy: device.leakage_policy,
                ..EstimatorOptions::shots(settings.shots)
            },
        )?;
        let dressed = match device.readout_frame {
            ReadoutFrame::Dressed if !device.couplings.is_empty() => Some(DressedBasis::new(&device)?),
            _ => None,
        };
        Ok(Problem {
            dressed,
            molecule: molecule.clone(),
            device,
            settings: settings.clone(),
            pansatz,
            gansatz,
            noise,
            estimator,
        })
    }

    pub fn device(&self) -> &DeviceModel {
        &self.device
    }

    pub fn pansatz(&self) -> Option<&PansatzConfig> {
        self.pansatz.as_ref()
    }

    pub fn gansatz(&self) -> &GansatzConfig {
        &self.gansatz
    }

    pub fn initial_params(&self) -> Result<Vec<f64>> {
        match &self.pansatz {
            Some(cfg) => hf_initial_params(&self.molecule, cfg),
            None => Ok(gansatz_hf_params(&self.molecule, &self.gansatz)),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match &self.pansatz {
            Some(cfg) => cfg.layout().iter().map(ParamKind::name).collect(),
            None => (0..gansatz_param_count(&self.gansatz))
                .map(|k| format!("ry{}.{}", k / self.gansatz.n_qubits, k % self.gansatz.n_qubits))
                .collect(),
        }
    }

    pub fn coordinates(&self) -> Vec<Coordinate> {
        let (ds, cs, ps) = match self.settings.optimizer {
            OptimizerKind::HillClimb(h) => (h.duration_step, h.cr_step, h.phase_step),
            OptimizerKind::Spsa(_) => (1, 1, DEFAULT_PHASE_STEP),
        };
        match &self.pansatz {
            Some(cfg) => pansatz_coordinates(cfg, ds, cs, ps),
            None => vec![Coordinate::continuous(ps); gansatz_param_count(&self.gansatz)],
        }
    }

    /// Prepared state as seen by readout (qutrits for PANSATZ, qubits for GANSATZ).
    pub fn prepare(&self, params: &[f64]) -> Result<DensityMatrix> {
        match &self.pansatz {
            Some(cfg) => {
                let s = build_pansatz(&self.device, cfg, params)?;
                let rho = evolve_schedule(&self.device, &s, &self.noise, self.settings.substeps)?;
                let mut rho = match &self.dressed {
                    Some(b) => b.to_dressed(&rho, s.duration() as f64 * self.device.dt)?,
                    None => rho,
                };
                rho.apply_frame_phases(&s.final_drive_phases(self.device.n_qubits()));
                Ok(rho)
            }
            None => simulate_gansatz(&self.gansatz, params, &self.noise, self.device.dt),
        }
    }

    /// `(energy, stderr)` at `params`.
    pub fn evaluate(&self, params: &[f64], eval_seed: u64) -> Result<(f64, f64)> {
        let rho = self.prepare(params)?;
        if self.settings.exact {
            let q = rho.qubit_subspace().renormalized()?;
            return Ok((exact_expectation(&q, &self.molecule.hamiltonian)?, 0.0));
        }
        let r = self.estimator.estimate(&rho, eval_seed)?;
        Ok((r.energy, r.stderr))
    }

    pub fn schedule_duration(&self, params: &[f64]) -> Result<u64> {
        match &self.pansatz {
            Some(cfg) => Ok(build_pansatz(&self.device, cfg, params)?.duration()),
            None => Ok(gansatz_schedule_duration(&self.gansatz)),
        }
    }

    pub fn duration_report(&self, params: &[f64]) -> Result<DurationReport> {
        let p = self.schedule_duration(params)?;
        let g = gansatz_schedule_duration(&self.gansatz);
        Ok(DurationReport {
            pansatz_dt: p,
            pansatz_ns: p as f64 * self.device.dt,
            gansatz_dt: g,
            gansatz_ns: g as f64 * self.device.dt,
        })
    }
}

/// Optimizer geometry of a PANSATZ vector: CR totals live on a lattice of
/// two units (one per echo half) and move by `2·cr_step` units,
/// single-qubit durations move by `duration_step` units, phases
/// continuously by `phase_step`.
pub fn pansatz_coordinates(config: &PansatzConfig, duration_step: u64, cr_step: u64, phase_step: f64) -> Vec<Coordinate> {
    let g = config.granularity as f64;
    let ds = duration_step as f64;
    let cs = cr_step as f64;
    config
        .layout()
        .iter()
        .map(|k| match k {
            ParamKind::CrDuration { .. } => Coordinate::lattice(2.0 * g * cs, 2.0 * g),
            ParamKind::SqDuration { .. } => Coordinate::lattice(g * ds, g),
            ParamKind::Phase { .. } => Coordinate::continuous(phase_step),
        })
        .collect()
}

fn run_context(molecule: &MoleculeSpec) -> String {
    format!("VQE for {} at {} Å", molecule.name, molecule.distance)
}

/// One VQE run from the Hartree–Fock starting point.
pub fn run_vqe(molecule: &MoleculeSpec, settings: &VqeSettings) -> Result<VqeResult> {
    run_vqe_inner(molecule, settings).map_err(|e| e.context(run_context(molecule)))
}

fn run_vqe_inner(molecule: &MoleculeSpec, settings: &VqeSettings) -> Result<VqeResult> {
    let problem = Problem::new(molecule, settings)?;
    let fci = molecule.reference_energy()?;
    let x0 = problem.initial_params()?;
    let coords = problem.coordinates();
    let opt = OptimizerConfig {
        kind: settings.optimizer,
        rng_seed: seed::derive(settings.seed, OPTIMIZER_TAG),
        goal: settings.fci_stopping.then_some(fci + CHEMICAL_ACCURACY),
    };
    let result: OptimResult = minimize(|p, s| Ok(problem.evaluate(p, s)?.0), &x0, &coords, &opt)?;
    result.check_finite()?;

    let best = result.best_params.clone();
    let (energy, stderr) = problem.evaluate(&best, seed::derive(settings.seed, FINAL_ESTIMATE_TAG))?;
    let abs_error = (energy - fci).abs();
    let within_band = abs_error <= CHEMICAL_ACCURACY + 2.0 * stderr;
    let converged = within_band || result.stop == StopReason::Goal;
    let durations = problem.duration_report(&best)?;
    Ok(VqeResult {
        molecule: molecule.name.clone(),
        distance: molecule.distance,
        ansatz: settings.ansatz,
        energy,
        stderr,
        fci,
        abs_error,
        converged,
        within_band,
        iterations: result.iterations(),
        evaluations: result.evaluations,
        stop: result.stop,
        schedule_duration_dt: problem.schedule_duration(&best)?,
        gansatz_duration_dt: durations.gansatz_dt,
        durations,
        params_final: best,
        param_names: problem.param_names(),
        trace: result.trace,
        seed: settings.seed,
    })
}

/// Outcome of one sweep point; failures are kept and the sweep continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub file: PathBuf,
    pub result: std::result::Result<VqeResult, String>,
}

/// Seed of the sweep point at `distance`.
pub fn sweep_seed(base: u64, distance: f64) -> u64 {
    seed::derive(base, distance.to_bits())
}

/// Run one VQE per molecule file in parallel, sorted by distance.
pub fn run_sweep(files: &[PathBuf], template: &VqeSettings) -> Vec<SweepOutcome> {
    let mut out: Vec<(f64, SweepOutcome)> = files
        .par_iter()
        .map(|f| {
            let res = MoleculeSpec::load(f).and_then(|m| {
                let settings = VqeSettings {
                    seed: sweep_seed(template.seed, m.distance),
                    ..template.clone()
                };
                run_vqe(&m, &settings)
            });
            let distance = res.as_ref().map(|r| r.distance).unwrap_or(f64::INFINITY);
            (
                distance,
                SweepOutcome {
                    file: f.clone(),
                    result: res.map_err(|e| e.to_string()),
                },
            )
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.file.cmp(&b.1.file)));
    out.into_iter().map(|(_, o)| o).collect()
}

/// Molecule JSON files directly inside `dir`, sorted by name.
pub fn molecule_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> VqeSettings {
        let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");
        let device = DeviceModel::load(format!("{root}/devices/ibm_manila_like.json")).unwrap();
        let cal = CalibrationData::load(format!("{root}/calibrations/ibm_manila_like.json")).unwrap();
        VqeSettings::new(device, cal.first(2).unwrap())
    }

    fn h2(file: &str) -> MoleculeSpec {
        MoleculeSpec::load(format!("{}/../../data/molecules/h2/{file}", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    #[test]
    fn config_hash_ignores_seed_only() {
        let s = settings();
        let h = s.config_hash();
        assert_eq!(h.len(), 64);
        assert_eq!(VqeSettings { seed: 99, ..s.clone() }.config_hash(), h);
        assert_ne!(VqeSettings { shots: 5000, ..s.clone() }.config_hash(), h);
        assert_ne!(VqeSettings { noise: false, ..s }.config_hash(), h);
    }

    #[test]
    fn coordinates_follow_the_lattice() {
        let s = settings();
        let cfg = PansatzConfig::linear(2, 1, s.calibration.clone()).unwrap();
        let coords = pansatz_coordinates(&cfg, 1, 8, 0.1);
        for (k, c) in cfg.layout().iter().zip(&coords) {
            match k {
                ParamKind::CrDuration { .. } => assert_eq!((c.step, c.lattice), (256.0, Some(32.0))),
                ParamKind::SqDuration { .. } => assert_eq!((c.step, c.lattice), (16.0, Some(16.0))),
                ParamKind::Phase { .. } => assert_eq!((c.step, c.lattice), (0.1, None)),
            }
        }
    }

    #[test]
    fn sweep_seeds_are_stable_and_distinct() {
        assert_eq!(sweep_seed(3, 0.735), sweep_seed(3, 0.735));
        assert_ne!(sweep_seed(3, 0.735), sweep_seed(3, 0.9));
        assert_ne!(sweep_seed(3, 0.735), sweep_seed(4, 0.735));
    }

    #[test]
    fn hf_point_durations() {
        let s = settings();
        let p = Problem::new(&h2("h2_0.735.json"), &s).unwrap();
        let x0 = p.initial_params().unwrap();
        let d = p.duration_report(&x0).unwrap();
        assert_eq!(d.gansatz_dt, 1792);
        assert!((d.gansatz_ns - 1792.0 * s.device.dt).abs() < 1e-9);
        assert!(d.pansatz_dt < d.gansatz_dt);
        assert_eq!(p.param_names().len(), 5);
    }

    #[test]
    fn exact_mode_has_no_stderr_and_respects_the_bound() {
        let s = VqeSettings { exact: true, ..settings() };
        let m = h2("h2_0.735.json");
        let p = Problem::new(&m, &s).unwrap();
        let (e, se) = p.evaluate(&p.initial_params().unwrap(), 0).unwrap();
        assert_eq!(se, 0.0);
        assert!(e >= m.reference_energy().unwrap() - 1e-9);
    }

    #[test]
    fn missing_molecule_file_becomes_a_sweep_error() {
        let out = run_sweep(&[PathBuf::from("/nonexistent/h2_1.0.json")], &settings());
        assert_eq!(out.len(), 1);
        assert!(out[0].result.is_err());
    }

    #[test]
    fn molecule_files_lists_json_sorted() {
        let dir = std::env::temp_dir().join(format!("pansatz-vqe-files-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for f in ["b.json", "a.json", "notes.txt"] {
            std::fs::write(dir.join(f), "{}").unwrap();
        }
        let files = molecule_files(&dir).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        let names: Vec<_> = files.iter().map(|f| f.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["a.json", "b.json"]);
    }
}
