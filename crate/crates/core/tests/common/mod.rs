#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;
use pansatz::calibration::{calibrate_device, CalibrationData, DEFAULT_LEAK_THRESHOLD};
use pansatz::dynamics::{DensityMatrix, DeviceModel};
use pansatz::hamiltonians::MoleculeSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn device() -> DeviceModel {
    DeviceModel::load(data_dir().join("devices/ibm_manila_like.json")).unwrap()
}

pub fn calibration(n_qubits: usize) -> CalibrationData {
    calibrate_device(&device(), n_qubits, DEFAULT_LEAK_THRESHOLD).unwrap()
}

pub fn molecule(family: &str, file: &str) -> MoleculeSpec {
    MoleculeSpec::load(data_dir().join("molecules").join(family).join(file)).unwrap()
}

pub fn molecule_dir(family: &str) -> PathBuf {
    data_dir().join("molecules").join(family)
}

/// Largest entrywise difference of two density matrices.
pub fn max_diff(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    (a.to_matrix() - b.to_matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Haar-like random pure state on `n` qubits (2 levels), from Gaussian amplitudes.
pub fn random_pure_state(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let dim = 1 << n;
    let mut amps: Vec<Complex64> = (0..dim).map(|_| Complex64::new(gauss(rng), gauss(rng))).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    DensityMatrix::from_pure(n, 2, &amps).unwrap()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
