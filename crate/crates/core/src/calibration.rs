//! Start-of-run pulse calibration: leakage-limited amplitudes, π/2 and π
//! durations on the sample lattice, and cross-resonance amplitudes.
//!
//! Everything here is deterministic and simulates without dissipation.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{build_generator, evolve, DensityMatrix, DeviceModel, NoiseConfig, DEFAULT_SUBSTEPS};
use crate::error::{Error, Result};
use crate::pulse::{DragEnvelope, FlatTopGaussianEnvelope, Schedule};

pub const DEFAULT_LEAK_THRESHOLD: f64 = 1e-3;

/// Amplitude grid, scanned from the top.
const AMP_GRID_STEP: f64 = 0.05;
const AMP_GRID_POINTS: usize = 20;
/// Longest single-qubit pulse considered, in lattice units.
const MAX_LATTICE_UNITS: u64 = 256;
/// Half-π candidates (consecutive lattice points) tried when matching the π pulse.
const HALF_PI_CANDIDATES: usize = 6;
const TARGET_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitCalibration {
    pub sq_amp: f64,
    pub half_pi_duration: u64,
    pub pi_duration: u64,
    /// Amplitude of the π pulse, refined separately so echo flips are exact.
    pub pi_amp: f64,
    pub drag_sigma: f64,
    pub drag_beta: f64,
}

impl QubitCalibration {
    /// DRAG pulse of signed lattice duration `d` at the calibrated amplitude.
    ///
    /// The sign of `d` sets the sign of the amplitude; `|d|` the length.
    pub fn pulse(&self, d: i64) -> Result<DragEnvelope> {
        let sign = if d < 0 { -1.0 } else { 1.0 };
        DragEnvelope::new(
            Complex64::new(sign * self.sq_amp, 0.0),
            self.drag_sigma,
            self.drag_beta,
            d.unsigned_abs(),
        )
    }

    pub fn half_pi_pulse(&self) -> Result<DragEnvelope> {
        self.pulse(self.half_pi_duration as i64)
    }

    pub fn pi_pulse(&self) -> Result<DragEnvelope> {
        DragEnvelope::new(
            Complex64::new(self.pi_amp, 0.0),
            self.drag_sigma,
            self.drag_beta,
            self.pi_duration,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCalibration {
    pub control: usize,
    pub target: usize,
    pub cr_amp: f64,
    pub cr_sigma: f64,
    pub cr_risefall_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationData {
    pub granularity: u64,
    pub qubits: Vec<QubitCalibration>,
    pub pairs: Vec<PairCalibration>,
}

impl CalibrationData {
    pub fn qubit(&self, q: usize) -> Result<&QubitCalibration> {
        self.qubits
            .get(q)
            .ok_or_else(|| Error::validation("calibration.qubits", format!("no entry for qubit {q}")))
    }

    pub fn pair(&self, control: usize, target: usize) -> Result<&PairCalibration> {
        self.pairs
            .iter()
            .find(|p| p.control == control && p.target == target)
            .ok_or_else(|| {
                Error::validation("calibration.pairs", format!("no entry for pair ({control}, {target})"))
            })
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.granularity;
        if g == 0 {
            return Err(Error::validation("granularity", "must be positive"));
        }
        for (i, q) in self.qubits.iter().enumerate() {
            for (name, d) in [("half_pi_duration", q.half_pi_duration), ("pi_duration", q.pi_duration)] {
                if d == 0 || d % g != 0 {
                    return Err(Error::validation(
                        format!("qubits[{i}].{name}"),
                        format!("{d} is not a positive multiple of {g}"),
                    ));
                }
            }
            for (name, a) in [("sq_amp", q.sq_amp), ("pi_amp", q.pi_amp)] {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::validation(format!("qubits[{i}].{name}"), "must be in (0, 1]"));
                }
            }
        }
        for (i, p) in self.pairs.iter().enumerate() {
            if !(p.cr_amp > 0.0 && p.cr_amp <= 1.0) {
                return Err(Error::validation(format!("pairs[{i}].cr_amp"), "must be in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Restrict to the first `n` qubits (pairs inside that range are kept).
    pub fn first(&self, n: usize) -> Result<CalibrationData> {
        if n > self.qubits.len() {
            return Err(Error::validation(
                "calibration.qubits",
                format!("needs {n} qubits, calibration has {}", self.qubits.len()),
            ));
        }
        Ok(CalibrationData {
            granularity: self.granularity,
            qubits: self.qubits[..n].to_vec(),
            pairs: self.pairs.iter().filter(|p| p.control < n && p.target < n).copied().collect(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CalibrationData = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| e.context(format!("loading {}", path.display())))
    }
}

fn amp_grid() -> impl Iterator<Item = f64> {
    (1..=AMP_GRID_POINTS).rev().map(|k| k as f64 * AMP_GRID_STEP)
}

/// Noiseless evolution of one schedule from a basis state.
fn run(device: &DeviceModel, schedule: &Schedule, initial: usize) -> Result<DensityMatrix> {
    let gen = build_generator(device, schedule)?;
    let rho0 = DensityMatrix::basis_state(device.n_qubits(), device.levels, initial);
    evolve(&rho0, &gen, &NoiseConfig::off(device.n_qubits()), 0..gen.n_samples(), DEFAULT_SUBSTEPS)
}

/// Total population outside the qubit subspace.
pub fn leakage(rho: &DensityMatrix) -> f64 {
    let dim = rho.dim();
    (0..dim)
        .filter(|&i| (0..rho.n_qubits()).any(|q| rho.level_of(i, q) >= 2))
        .map(|i| rho.get(i, i).re)
        .sum()
}

/// Single-qubit DRAG pulse on isolated qubit 0 of `device1`, started from |0>.
pub fn simulate_single(device1: &DeviceModel, env: DragEnvelope) -> Result<DensityMatrix> {
    let mut s = Schedule::new();
    if env.duration > 0 {
        s.play(0, device1.drive_channel(0)?, env)?;
    }
    run(device1, &s, 0)
}

fn p_one(rho: &DensityMatrix) -> f64 {
    rho.get(1, 1).re
}

/// Sum of the unit-amplitude envelope samples: the rotation angle per
/// unit amplitude is `4π·Ω·dt` times this area.
fn drag_area(sigma: f64, duration: u64) -> f64 {
    let env = DragEnvelope {
        amp: Complex64::new(1.0, 0.0),
        sigma,
        beta: 0.0,
        duration,
    };
    (0..duration).map(|j| env.shape_at(j as f64 + 0.5).re).sum()
}

/// Lattice duration whose envelope area is closest to the π area at `amp`, if reachable.
fn pi_area_duration(device: &DeviceModel, sigma: f64, amp: f64) -> Option<u64> {
    let g = device.granularity();
    let target = 1.0 / (4.0 * device.drive_strength * device.dt * amp);
    let mut best: Option<(u64, f64)> = None;
    let mut prev = 0.0;
    for k in 1..=MAX_LATTICE_UNITS {
        let d = k * g;
        let a = drag_area(sigma, d);
        let err = (a - target).abs();
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((d, err));
        }
        if a >= target || a - prev < 1e-9 * a {
            break;
        }
        prev = a;
    }
    best.filter(|&(d, _)| drag_area(sigma, d) >= 0.5 * target).map(|(d, _)| d)
}

fn single_device(device: &DeviceModel, q: usize) -> Result<DeviceModel> {
    device.subset(&[q])
}

/// Largest grid amplitude whose π-area DRAG pulse leaks at most `leak_threshold`.
pub fn calibrate_amplitude(device: &DeviceModel, q: usize, leak_threshold: f64) -> Result<f64> {
    let d1 = single_device(device, q)?;
    let sigma = device.pulse_defaults.drag_sigma;
    let beta = device.default_drag_beta(q);
    for amp in amp_grid() {
        let Some(dur) = pi_area_duration(&d1, sigma, amp) else {
            continue;
        };
        let env = DragEnvelope::new(Complex64::new(amp, 0.0), sigma, beta, dur)?;
        let rho = simulate_single(&d1, env)?;
        if leakage(&rho) <= leak_threshold {
            return Ok(amp);
        }
    }
    Err(Error::Calibration(format!(
        "qubit {q}: no amplitude on the grid keeps leakage below {leak_threshold:e}"
    )))
}

/// Lattice half-π pulse: the shortest lattice duration that reaches
/// P(1) = 0.5 at or below `sq_amp`, with the amplitude refined so the
/// target is met exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPiCalibration {
    pub amp: f64,
    pub duration: u64,
}

fn excited_population(d1: &DeviceModel, q: usize, amp: f64, duration: u64) -> Result<f64> {
    let env = DragEnvelope::new(
        Complex64::new(amp, 0.0),
        d1.pulse_defaults.drag_sigma,
        d1.default_drag_beta(0),
        duration,
    )
    .map_err(|e| e.context(format!("qubit {q}")))?;
    Ok(p_one(&simulate_single(d1, env)?))
}

/// Amplitude in `(0, hi]` with P(1) = `target` for a fixed duration (bisection).
fn bisect_amp(d1: &DeviceModel, q: usize, duration: u64, hi: f64, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if excited_population(d1, q, mid, duration)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn half_pi_candidates(device: &DeviceModel, q: usize, sq_amp: f64) -> Result<Vec<HalfPiCalibration>> {
    let d1 = single_device(device, q)?;
    let g = device.granularity();
    let mut out = Vec::new();
    let mut prev = 0.0;
    for k in 1..=MAX_LATTICE_UNITS {
        let d = k * g;
        let p = excited_population(&d1, q, sq_amp, d)?;
        if p >= 0.5 {
            let amp = bisect_amp(&d1, q, d, sq_amp, 0.5)?;
            out.push(HalfPiCalibration { amp, duration: d });
            if out.len() == HALF_PI_CANDIDATES {
                break;
            }
        } else if !out.is_empty() || p < prev - 1e-12 {
            break;
        }
        prev = p;
    }
    if out.is_empty() {
        return Err(Error::Calibration(format!(
            "qubit {q}: no lattice duration reaches a π/2 rotation at amplitude {sq_amp}"
        )));
    }
    Ok(out)
}

/// Shortest-lattice π/2 pulse at or below `sq_amp`.
pub fn calibrate_half_pi(device: &DeviceModel, q: usize, sq_amp: f64) -> Result<HalfPiCalibration> {
    Ok(half_pi_candidates(device, q, sq_amp)?[0])
}

/// Lattice duration maximizing P(1) from |0> at `amp`, with that population.
pub fn calibrate_pi(device: &DeviceModel, q: usize, amp: f64) -> Result<(u64, f64)> {
    let d1 = single_device(device, q)?;
    let g = device.granularity();
    let mut best = (0u64, -1.0f64);
    let mut rising = false;
    for k in 1..=MAX_LATTICE_UNITS {
        let d = k * g;
        let p = excited_population(&d1, q, amp, d)?;
        if p > best.1 {
            best = (d, p);
            rising = true;
        } else if rising && p < best.1 {
            break;
        }
    }
    if (best.1 - 1.0).abs() > TARGET_TOLERANCE {
        return Err(Error::Calibration(format!(
            "qubit {q}: best lattice π pulse only reaches P(1) = {:.4}",
            best.1
        )));
    }
    Ok(best)
}

/// Amplitude in `[lo, hi]` maximizing P(1) at a fixed duration (golden section).
fn maximize_amp(d1: &DeviceModel, q: usize, duration: u64, lo: f64, hi: f64) -> Result<f64> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = excited_population(d1, q, x1, duration)?;
    let mut f2 = excited_population(d1, q, x2, duration)?;
    for _ in 0..60 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = excited_population(d1, q, x1, duration)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = excited_population(d1, q, x2, duration)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Full single-qubit calibration: amplitude, then matched π/2 and π durations.
///
/// The shortest lattice half-π whose refined amplitude also admits an
/// accurate lattice π pulse is kept; failing that, the most accurate one.
pub fn calibrate_qubit(device: &DeviceModel, q: usize, leak_threshold: f64) -> Result<QubitCalibration> {
    let amp = calibrate_amplitude(device, q, leak_threshold)?;
    let mut chosen: Option<(HalfPiCalibration, u64, f64)> = None;
    for hp in half_pi_candidates(device, q, amp)? {
        let Ok((pi, p)) = calibrate_pi(device, q, hp.amp) else {
            continue;
        };
        if !(1.8..=2.2).contains(&(pi as f64 / hp.duration as f64)) {
            continue;
        }
        if chosen.is_none_or(|(_, _, bp)| p > bp) {
            chosen = Some((hp, pi, p));
        }
        if p >= 1.0 - TARGET_TOLERANCE {
            break;
        }
    }
    let (hp, pi, _) = chosen.ok_or_else(|| {
        Error::Calibration(format!("qubit {q}: no π/2 candidate admits an accurate lattice π pulse"))
    })?;
    let d1 = single_device(device, q)?;
    let pi_amp = maximize_amp(&d1, q, pi, 0.8 * hp.amp, (1.2 * hp.amp).min(1.0))?;
    Ok(QubitCalibration {
        sq_amp: hp.amp,
        half_pi_duration: hp.duration,
        pi_duration: pi,
        pi_amp,
        drag_sigma: device.pulse_defaults.drag_sigma,
        drag_beta: device.default_drag_beta(q),
    })
}

/// Reference CR pulse length used for the leakage test, in samples.
fn cr_reference_duration(device: &DeviceModel) -> u64 {
    let g = device.granularity();
    let d = 4.0 * device.pulse_defaults.cr_sigma * device.pulse_defaults.cr_risefall_ratio;
    ((d / g as f64).ceil() as u64).max(1) * g
}

/// Largest grid CR amplitude whose reference flat-top pulse leaks at most
/// `leak_threshold` on either qubit, for control in |0> and in |1>.
pub fn calibrate_cr_amp(device: &DeviceModel, control: usize, target: usize, leak_threshold: f64) -> Result<f64> {
    let d2 = device.subset(&[control, target])?;
    let ch = d2.control_channel(0, 1)?;
    let pd = device.pulse_defaults;
    let dur = cr_reference_duration(device);
    // control is qubit 0 of the pair device, so |control=1, target=0> is index 1
    let excited_control = 1;
    for amp in amp_grid() {
        let env = FlatTopGaussianEnvelope::new(Complex64::new(amp, 0.0), pd.cr_sigma, pd.cr_risefall_ratio, dur)?;
        let mut s = Schedule::new();
        s.play(0, ch, env)?;
        let mut worst = 0.0f64;
        for init in [0, excited_control] {
            worst = worst.max(leakage(&run(&d2, &s, init)?));
        }
        if worst <= leak_threshold {
            return Ok(amp);
        }
    }
    Err(Error::Calibration(format!(
        "pair ({control}, {target}): no CR amplitude on the grid keeps leakage below {leak_threshold:e}"
    )))
}

/// Calibrate the first `n_qubits` of the device and every coupled pair among
/// them (control = lower index).
pub fn calibrate_device(device: &DeviceModel, n_qubits: usize, leak_threshold: f64) -> Result<CalibrationData> {
    let dev = device.first(n_qubits)?;
    let qubits = (0..n_qubits)
        .into_par_iter()
        .map(|q| calibrate_qubit(&dev, q, leak_threshold))
        .collect::<Result<Vec<_>>>()?;
    let mut edges: Vec<(usize, usize)> = dev
        .couplings
        .iter()
        .map(|c| (c.q0.min(c.q1), c.q0.max(c.q1)))
        .collect();
    edges.sort_unstable();
    let pd = dev.pulse_defaults;
    let pairs = edges
        .into_par_iter()
        .map(|(c, t)| {
            Ok(PairCalibration {
                control: c,
                target: t,
                cr_amp: calibrate_cr_amp(&dev, c, t, leak_threshold)?,
                cr_sigma: pd.cr_sigma,
                cr_risefall_ratio: pd.cr_risefall_ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cal = CalibrationData {
        granularity: dev.granularity(),
        qubits,
        pairs,
    };
    cal.validate()?;
    Ok(cal)
}

/// Rotation angle of a resonant, real DRAG pulse in the two-level limit.
pub fn nominal_rotation_angle(device: &DeviceModel, amp: f64, sigma: f64, duration: u64) -> f64 {
    4.0 * PI * device.drive_strength * device.dt * amp * drag_area(sigma, duration)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMMITTED: &str = include_str!("../../../data/calibrations/ibm_manila_like.json");

    fn committed() -> CalibrationData {
        CalibrationData::from_json(COMMITTED).unwrap()
    }

    #[test]
    fn committed_calibration_is_valid_and_on_lattice() {
        let c = committed();
        assert_eq!(c.qubits.len(), 5);
        assert_eq!(c.pairs.len(), 4);
        for q in &c.qubits {
            assert!(q.pi_duration >= q.half_pi_duration);
            assert!(q.sq_amp <= 1.0 && q.pi_amp <= 1.0);
        }
    }

    #[test]
    fn first_keeps_only_inner_pairs() {
        let c = committed().first(2).unwrap();
        assert_eq!(c.qubits.len(), 2);
        assert!(c.pairs.iter().all(|p| p.control < 2 && p.target < 2));
        assert!(!c.pairs.is_empty());
        assert!(committed().first(6).is_err());
    }

    #[test]
    fn validation_rejects_off_lattice_and_large_amplitudes() {
        let mut c = committed();
        c.qubits[0].half_pi_duration += 1;
        assert!(c.validate().is_err());
        let mut c = committed();
        c.qubits[1].pi_amp = 1.2;
        assert!(c.validate().is_err());
        let mut c = committed();
        c.pairs[0].cr_amp = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = committed();
        assert_eq!(CalibrationData::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn negative_duration_flips_amplitude() {
        let q = committed().qubits[0];
        let a = q.pulse(48).unwrap();
        let b = q.pulse(-48).unwrap();
        assert_eq!(a.duration, b.duration);
        assert_eq!(a.amp, -b.amp);
    }

    #[test]
    fn leakage_counts_second_excited_levels() {
        assert_eq!(leakage(&DensityMatrix::ground(2, 3)), 0.0);
        // levels (q0, q1) = (2, 0) and (1, 2) leak, (1, 1) does not
        for (idx, want) in [(2, 1.0), (7, 1.0), (4, 0.0)] {
            assert_eq!(leakage(&DensityMatrix::basis_state(2, 3, idx)), want, "index {idx}");
        }
    }

    #[test]
    fn fresh_calibration_reproduces_the_committed_file() {
        let device = DeviceModel::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/devices/ibm_manila_like.json")).unwrap();
        let fresh = calibrate_device(&device, 2, DEFAULT_LEAK_THRESHOLD).unwrap();
        assert_eq!(fresh, committed().first(2).unwrap());
    }
}
