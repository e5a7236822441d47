//! Pulse-level ansatz schedules and the gate-level Real Amplitudes baseline.
//!
//! PANSATZ layer structure: a fixed half-π layer on the controls of the
//! first entangling sublayer, then per layer an echoed-CR sublayer on edges
//! `(0,1), (2,3), …`, a second on `(1,2), (3,4), …`, virtual Z phases and one
//! signed single-qubit DRAG pulse per qubit. Layer boundaries are barriers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationData;
use crate::dynamics::{DensityMatrix, DeviceModel, NoiseConfig};
use crate::error::{Error, Result};
use crate::hamiltonians::MoleculeSpec;
use crate::pulse::{build_echoed_cr, EchoedCrParams, Schedule};

/// Meaning of one entry of a PANSATZ parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    /// Signed total cross-resonance time (both echo halves), samples.
    CrDuration { layer: usize, control: usize, target: usize },
    /// Virtual Z frame shift, radians.
    Phase { layer: usize, qubit: usize },
    /// Signed single-qubit pulse duration, samples.
    SqDuration { layer: usize, qubit: usize },
}

impl ParamKind {
    pub fn name(&self) -> String {
        match *self {
            ParamKind::CrDuration { layer, control, target } => format!("l{layer}.cr{control}{target}"),
            ParamKind::Phase { layer, qubit } => format!("l{layer}.phase{qubit}"),
            ParamKind::SqDuration { layer, qubit } => format!("l{layer}.sq{qubit}"),
        }
    }

    pub fn is_duration(&self) -> bool {
        !matches!(self, ParamKind::Phase { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PansatzConfig {
    pub n_qubits: usize,
    pub layers: usize,
    /// Undirected coupling edges used for entanglers.
    pub edges: Vec<(usize, usize)>,
    pub calibration: CalibrationData,
    pub granularity: u64,
}

fn linear_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|q| (q - 1, q)).collect()
}

impl PansatzConfig {
    /// One layer family on a linear chain `0-1-2-…`.
    pub fn linear(n_qubits: usize, layers: usize, calibration: CalibrationData) -> Result<Self> {
        let cfg = PansatzConfig {
            n_qubits,
            layers,
            edges: linear_edges(n_qubits),
            granularity: calibration.granularity,
            calibration,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::validation("n_qubits", "must be positive"));
        }
        if self.layers == 0 {
            return Err(Error::validation("layers", "at least one layer is required"));
        }
        if self.granularity == 0 {
            return Err(Error::validation("granularity", "must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &self.edges {
            if a == b || a >= self.n_qubits || b >= self.n_qubits {
                return Err(Error::validation("edges", format!("invalid edge ({a}, {b})")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::validation("edges", format!("duplicate edge ({a}, {b})")));
            }
        }
        if self.calibration.qubits.len() < self.n_qubits {
            return Err(Error::validation("calibration", "fewer calibrated qubits than ansatz qubits"));
        }
        Ok(())
    }

    fn sublayer(&self, parity: usize) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .filter(|&(c, _)| c % 2 == parity)
            .collect();
        e.sort_unstable();
        e
    }

    /// Entangling sublayer A: edges whose lower (control) qubit is even.
    pub fn sublayer_a(&self) -> Vec<(usize, usize)> {
        self.sublayer(0)
    }

    /// Entangling sublayer B: edges whose lower (control) qubit is odd.
    pub fn sublayer_b(&self) -> Vec<(usize, usize)> {
        self.sublayer(1)
    }

    /// Qubits receiving the fixed half-π pulse.
    pub fn fixed_controls(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.sublayer_a().iter().map(|e| e.0).collect();
        c.dedup();
        c
    }

    /// Ordering descriptor for the parameter vector.
    pub fn layout(&self) -> Vec<ParamKind> {
        let mut out = Vec::with_capacity(param_count(self));
        let (a, b) = (self.sublayer_a(), self.sublayer_b());
        for layer in 0..self.layers {
            for &(control, target) in a.iter().chain(&b) {
                out.push(ParamKind::CrDuration { layer, control, target });
            }
            out.extend((0..self.n_qubits).map(|qubit| ParamKind::Phase { layer, qubit }));
            out.extend((0..self.n_qubits).map(|qubit| ParamKind::SqDuration { layer, qubit }));
        }
        out
    }
}

pub fn param_count(config: &PansatzConfig) -> usize {
    config.layers * (config.edges.len() + 2 * config.n_qubits)
}

/// Nearest multiple of `step` (ties away from zero).
pub fn lattice_round(x: f64, step: u64) -> i64 {
    let s = step.max(1) as f64;
    ((x / s).round() * s) as i64
}

/// Build the PANSATZ schedule for `params` (layout per [`PansatzConfig::layout`]).
///
/// Single-qubit durations are rounded to the lattice; CR totals are split
/// into lattice halves by the echo builder. Zero durations emit no pulse.
pub fn build_pansatz(device: &DeviceModel, config: &PansatzConfig, params: &[f64]) -> Result<Schedule> {
    let layout = config.layout();
    if params.len() != layout.len() {
        return Err(Error::Dimension {
            expected: layout.len(),
            found: params.len(),
        });
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::validation("params", "non-finite entry"));
    }
    let cal = &config.calibration;
    let g = config.granularity;

    let mut s = Schedule::new();
    let mut fixed = Schedule::new();
    for c in config.fixed_controls() {
        fixed.play(0, device.drive_channel(c)?, cal.qubit(c)?.half_pi_pulse()?)?;
    }
    s.append(&fixed);

    let (a, b) = (config.sublayer_a(), config.sublayer_b());
    let mut idx = 0;
    for _ in 0..config.layers {
        for edges in [&a, &b] {
            let mut frags = Vec::with_capacity(edges.len());
            for &(c, t) in edges.iter() {
                let pair = cal.pair(c, t)?;
                let p = EchoedCrParams {
                    amp: pair.cr_amp,
                    sigma: pair.cr_sigma,
                    risefall_ratio: pair.cr_risefall_ratio,
                    total_cr_duration: params[idx].round() as i64,
                };
                idx += 1;
                let flip = cal.qubit(c)?.pi_pulse()?;
                frags.push(build_echoed_cr(
                    &p,
                    &flip,
                    device.control_channel(c, t)?,
                    device.drive_channel(c)?,
                    g,
                )?);
            }
            s.append(&Schedule::merge(&frags)?);
        }
        let mut block = Schedule::new();
        let phases = &params[idx..idx + config.n_qubits];
        let durations = &params[idx + config.n_qubits..idx + 2 * config.n_qubits];
        idx += 2 * config.n_qubits;
        for q in 0..config.n_qubits {
            let ch = device.drive_channel(q)?;
            if phases[q] != 0.0 {
                block.shift_phase(0, ch, phases[q])?;
            }
            let d = lattice_round(durations[q], g);
            if d != 0 {
                block.play(0, ch, cal.qubit(q)?.pulse(d)?)?;
            }
        }
        s.append(&block);
    }
    Ok(s)
}

/// Parameters preparing (approximately) the Hartree–Fock determinant.
///
/// Entanglers and phases start at zero. A qubit with HF bit 1 completes its
/// fixed half-π pulse with another one, or gets a full π pulse if it had
/// none. A fixed-pulse qubit with HF bit 0 is left in superposition.
pub fn hf_initial_params(molecule: &MoleculeSpec, config: &PansatzConfig) -> Result<Vec<f64>> {
    if molecule.hf_bitstring.len() != config.n_qubits {
        return Err(Error::Dimension {
            expected: config.n_qubits,
            found: molecule.hf_bitstring.len(),
        });
    }
    let fixed = config.fixed_controls();
    let layout = config.layout();
    let mut out = vec![0.0; layout.len()];
    for (slot, kind) in out.iter_mut().zip(&layout) {
        if let ParamKind::SqDuration { layer: 0, qubit } = *kind {
            if molecule.hf_bit(qubit) {
                let qc = config.calibration.qubit(qubit)?;
                *slot = if fixed.contains(&qubit) {
                    qc.half_pi_duration as f64
                } else {
                    qc.pi_duration as f64
                };
            }
        }
    }
    Ok(out)
}

/// Gate-level Real Amplitudes baseline with fixed gate durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GansatzConfig {
    pub n_qubits: usize,
    pub layers: usize,
    pub edges: Vec<(usize, usize)>,
    /// Duration of one half-π pulse (an Ry is two of them), samples.
    pub half_pi_dt: u64,
    /// Duration of the control flip inside a CNOT, samples.
    pub pi_dt: u64,
    /// Total CR time of one CNOT, samples.
    pub cnot_cr_dt: u64,
}

impl GansatzConfig {
    /// Linear chain with gate durations from the calibration (slowest qubit sets each layer).
    pub fn linear(n_qubits: usize, layers: usize, calibration: &CalibrationData, cnot_cr_dt: u64) -> Result<Self> {
        let qs = calibration.first(n_qubits)?.qubits;
        Ok(GansatzConfig {
            n_qubits,
            layers,
            edges: linear_edges(n_qubits),
            half_pi_dt: qs.iter().map(|q| q.half_pi_duration).max().unwrap_or(0),
            pi_dt: qs.iter().map(|q| q.pi_duration).max().unwrap_or(0),
            cnot_cr_dt,
        })
    }

    fn sublayers(&self) -> [Vec<(usize, usize)>; 2] {
        let pick = |parity: usize| {
            let mut e: Vec<(usize, usize)> = self
                .edges
                .iter()
                .map(|&(a, b)| (a.min(b), a.max(b)))
                .filter(|&(c, _)| c % 2 == parity)
                .collect();
            e.sort_unstable();
            e
        };
        [pick(0), pick(1)]
    }

    pub fn cnot_dt(&self) -> u64 {
        self.cnot_cr_dt + 2 * self.pi_dt
    }

    pub fn ry_layer_dt(&self) -> u64 {
        2 * self.half_pi_dt
    }
}

pub fn gansatz_param_count(config: &GansatzConfig) -> usize {
    config.n_qubits * (config.layers + 1)
}

/// Fixed schedule length of the baseline, independent of its parameters.
pub fn gansatz_schedule_duration(config: &GansatzConfig) -> u64 {
    let nonempty = config.sublayers().iter().filter(|s| !s.is_empty()).count() as u64;
    config.ry_layer_dt() * (config.layers as u64 + 1) + config.layers as u64 * nonempty * config.cnot_dt()
}

/// Real Amplitudes parameters preparing the HF determinant: π rotations in
/// the last Ry layer (every CNOT before it acts on |0…0>).
pub fn gansatz_hf_params(molecule: &MoleculeSpec, config: &GansatzConfig) -> Vec<f64> {
    let n = config.n_qubits;
    let mut out = vec![0.0; gansatz_param_count(config)];
    for q in 0..n {
        if molecule.hf_bit(q) {
            out[config.layers * n + q] = std::f64::consts::PI;
        }
    }
    out
}

fn apply_ry(rho: &mut DensityMatrix, q: usize, theta: f64) {
    let (s, c) = (theta / 2.0).sin_cos();
    let u = [
        Complex64::new(c, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(c, 0.0),
    ];
    rho.apply_local_unitary(q, &u);
}

fn apply_cnot(rho: &mut DensityMatrix, control: usize, target: usize) {
    let dim = rho.dim();
    let perm: Vec<usize> = (0..dim)
        .map(|b| if (b >> control) & 1 == 1 { b ^ (1 << target) } else { b })
        .collect();
    let old = rho.data().to_vec();
    let data = rho.data_mut();
    for i in 0..dim {
        for j in 0..dim {
            data[perm[i] * dim + perm[j]] = old[i * dim + j];
        }
    }
}

/// Amplitude damping plus pure dephasing on every qubit for `t_ns`.
fn apply_idle_noise(rho: &mut DensityMatrix, noise: &NoiseConfig, t_ns: f64) {
    if !noise.is_active() {
        return;
    }
    let dim = rho.dim();
    for q in 0..rho.n_qubits() {
        let t_us = t_ns / 1000.0;
        let gamma = 1.0 - (-noise.relaxation[q] * t_us).exp();
        let keep = (1.0 - gamma).sqrt();
        let dephase = (-noise.dephasing[q] * t_us).exp();
        let bit = 1usize << q;
        let old = rho.data().to_vec();
        let data = rho.data_mut();
        for i in 0..dim {
            for j in 0..dim {
                let (a, b) = (i & bit != 0, j & bit != 0);
                let mut v = old[i * dim + j];
                if a {
                    v *= keep;
                }
                if b {
                    v *= keep;
                }
                if a != b {
                    v *= dephase;
                }
                if !a && !b {
                    v += old[(i | bit) * dim + (j | bit)] * gamma;
                }
                data[i * dim + j] = v;
            }
        }
    }
}

/// Gate-level density-matrix simulation of the baseline on the qubit subspace.
///
/// Each layer is followed by relaxation and dephasing on all qubits for the
/// layer's pulse-model duration (`dt_ns` per sample).
pub fn simulate_gansatz(
    config: &GansatzConfig,
    params: &[f64],
    noise: &NoiseConfig,
    dt_ns: f64,
) -> Result<DensityMatrix> {
    let n = config.n_qubits;
    if params.len() != gansatz_param_count(config) {
        return Err(Error::Dimension {
            expected: gansatz_param_count(config),
            found: params.len(),
        });
    }
    if noise.is_active() && (noise.relaxation.len() < n || noise.dephasing.len() < n) {
        return Err(Error::Dimension {
            expected: n,
            found: noise.relaxation.len().min(noise.dephasing.len()),
        });
    }
    let mut rho = DensityMatrix::ground(n, 2);
    let ry_ns = config.ry_layer_dt() as f64 * dt_ns;
    let cnot_ns = config.cnot_dt() as f64 * dt_ns;
    let ry_layer = |rho: &mut DensityMatrix, k: usize| {
        for q in 0..n {
            apply_ry(rho, q, params[k * n + q]);
        }
        apply_idle_noise(rho, noise, ry_ns);
    };
    ry_layer(&mut rho, 0);
    for layer in 0..config.layers {
        for sub in config.sublayers() {
            if sub.is_empty() {
                continue;
            }
            for (c, t) in sub {
                apply_cnot(&mut rho, c, t);
            }
            apply_idle_noise(&mut rho, noise, cnot_ns);
        }
        ry_layer(&mut rho, layer + 1);
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{PairCalibration, QubitCalibration};

    pub(crate) fn toy_calibration(n: usize) -> CalibrationData {
        CalibrationData {
            granularity: 16,
            qubits: vec![
                QubitCalibration {
                    sq_amp: 0.8,
                    half_pi_duration: 32,
                    pi_duration: 64,
                    pi_amp: 0.8,
                    drag_sigma: 40.0,
                    drag_beta: -1.0,
                };
                n
            ],
            pairs: (1..n)
                .map(|t| PairCalibration {
                    control: t - 1,
                    target: t,
                    cr_amp: 0.9,
                    cr_sigma: 64.0,
                    cr_risefall_ratio: 2.0,
                })
                .collect(),
        }
    }

    #[test]
    fn parameter_counts() {
        for (n, want) in [(2, 5), (3, 8), (4, 11)] {
            let cfg = PansatzConfig::linear(n, 1, toy_calibration(n)).unwrap();
            assert_eq!(param_count(&cfg), want);
            assert_eq!(cfg.layout().len(), want);
        }
    }

    #[test]
    fn sublayers_alternate() {
        let cfg = PansatzConfig::linear(5, 1, toy_calibration(5)).unwrap();
        assert_eq!(cfg.sublayer_a(), vec![(0, 1), (2, 3)]);
        assert_eq!(cfg.sublayer_b(), vec![(1, 2), (3, 4)]);
        assert_eq!(cfg.fixed_controls(), vec![0, 2]);
        let names: Vec<String> = cfg.layout().iter().take(5).map(|k| k.name()).collect();
        assert_eq!(names, ["l0.cr01", "l0.cr23", "l0.cr12", "l0.cr34", "l0.phase0"]);
    }

    #[test]
    fn gansatz_duration_model() {
        let cal = toy_calibration(2);
        let g = GansatzConfig::linear(2, 1, &cal, 1000).unwrap();
        assert_eq!(gansatz_schedule_duration(&g), 2 * 32 + (1000 + 128) + 2 * 32);
        let g0 = GansatzConfig { layers: 0, ..g.clone() };
        assert_eq!(gansatz_schedule_duration(&g0), 64);
        assert_eq!(gansatz_param_count(&g), 4);
        let g4 = GansatzConfig::linear(4, 1, &toy_calibration(4), 1000).unwrap();
        assert_eq!(gansatz_schedule_duration(&g4), 2 * 64 + 2 * 1128);
    }

    #[test]
    fn gansatz_idle_noise_relaxes_excited_state() {
        let cal = toy_calibration(1);
        let g = GansatzConfig::linear(1, 0, &cal, 0).unwrap();
        let noise = NoiseConfig {
            enabled: true,
            relaxation: vec![10.0],
            dephasing: vec![0.0],
        };
        let rho = simulate_gansatz(&g, &[std::f64::consts::PI], &noise, 1.0).unwrap();
        let want = (-10.0 * 64.0 / 1000.0f64).exp();
        assert!((rho.get(1, 1).re - want).abs() < 1e-12);
        rho.validate().unwrap();
    }

    #[test]
    fn cnot_maps_basis_states() {
        let mut rho = DensityMatrix::basis_state(2, 2, 0b01);
        apply_cnot(&mut rho, 0, 1);
        assert_eq!(rho.get(0b11, 0b11).re, 1.0);
    }

    #[test]
    fn lattice_rounding_is_symmetric() {
        assert_eq!(lattice_round(23.0, 16), 16);
        assert_eq!(lattice_round(-23.0, 16), -16);
        assert_eq!(lattice_round(24.0, 16), 32);
        assert_eq!(lattice_round(7.0, 16), 0);
    }
}
