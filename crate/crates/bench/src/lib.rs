//! Benchmark fixtures built from the committed device, calibration and molecules.

use std::path::PathBuf;

use pansatz::ansatz::{build_pansatz, hf_initial_params, PansatzConfig};
use pansatz::calibration::CalibrationData;
use pansatz::dynamics::DeviceModel;
use pansatz::hamiltonians::MoleculeSpec;
use pansatz::pulse::Schedule;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn device(n_qubits: usize) -> DeviceModel {
    DeviceModel::load(data_dir().join("devices/ibm_manila_like.json"))
        .and_then(|d| d.first(n_qubits))
        .expect("committed device")
}

pub fn calibration(n_qubits: usize) -> CalibrationData {
    CalibrationData::load(data_dir().join("calibrations/ibm_manila_like.json"))
        .and_then(|c| c.first(n_qubits))
        .expect("committed calibration")
}

pub fn molecule(family: &str, file: &str) -> MoleculeSpec {
    MoleculeSpec::load(data_dir().join("molecules").join(family).join(file)).expect("committed molecule")
}

/// PANSATZ schedule at the Hartree–Fock point with every CR block switched on.
pub fn pansatz_schedule(molecule: &MoleculeSpec, cr_total: f64) -> (DeviceModel, Schedule) {
    let n = molecule.n_qubits;
    let device = device(n);
    let cfg = PansatzConfig::linear(n, 1, calibration(n)).expect("config");
    let mut params = hf_initial_params(molecule, &cfg).expect("hf params");
    for (p, k) in params.iter_mut().zip(cfg.layout()) {
        if matches!(k, pansatz::ansatz::ParamKind::CrDuration { .. }) {
            *p = cr_total;
        }
    }
    let s = build_pansatz(&device, &cfg, &params).expect("schedule");
    (device, s)
}
