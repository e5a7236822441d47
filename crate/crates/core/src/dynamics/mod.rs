//! Coupled-transmon device model and open-system dynamics.
//!
//! Frequencies are cyclic GHz in the device file; the generator works in
//! angular units (rad/ns) with time in ns. Each qubit has its own rotating
//! frame, so coupling terms oscillate at qubit detunings and a resonant
//! drive has no carrier factor.

mod dressed;
mod generator;
mod integrate;
mod state;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{Channel, ChannelKind};

pub use dressed::DressedBasis;
pub use generator::{build_generator, Generator};
pub use integrate::{evolve, evolve_schedule, measure_probabilities, DEFAULT_SUBSTEPS};
pub use state::DensityMatrix;

/// Assignment-error probabilities of one qubit's readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutErrors {
    /// P(read 1 | prepared 0).
    pub p10: f64,
    /// P(read 0 | prepared 1).
    pub p01: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    pub freq_ghz: f64,
    /// Anharmonicity `E_12 - E_01` in GHz (negative for transmons).
    pub anharm_ghz: f64,
    pub t1_us: f64,
    pub t2_us: f64,
    pub readout: ReadoutErrors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub q0: usize,
    pub q1: usize,
    pub g_ghz: f64,
}

/// How a transmon level beyond |1> is reported by the discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakagePolicy {
    #[default]
    AsOne,
    AsZero,
}

/// Basis the discriminator projects onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutFrame {
    /// Eigenstates of the undriven coupled device.
    #[default]
    Dressed,
    /// Bare product states.
    Bare,
}

fn default_drag_sigma() -> f64 {
    40.0
}
fn default_cr_sigma() -> f64 {
    64.0
}
fn default_cr_risefall_ratio() -> f64 {
    2.0
}
fn default_granularity() -> u64 {
    16
}
fn default_cnot_cr() -> u64 {
    320
}

/// Pulse-shape hyper-parameters kept with the device so runs are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseDefaults {
    #[serde(default = "default_drag_sigma")]
    pub drag_sigma: f64,
    /// DRAG derivative weight in samples; derived from the anharmonicity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drag_beta: Option<f64>,
    #[serde(default = "default_cr_sigma")]
    pub cr_sigma: f64,
    #[serde(default = "default_cr_risefall_ratio")]
    pub cr_risefall_ratio: f64,
    /// Every played duration is a multiple of this many samples.
    #[serde(default = "default_granularity")]
    pub granularity: u64,
    /// Total CR time (both halves) of the gate-level CNOT, in samples.
    #[serde(default = "default_cnot_cr")]
    pub gansatz_cnot_cr_dt: u64,
}

impl Default for PulseDefaults {
    fn default() -> Self {
        PulseDefaults {
            drag_sigma: default_drag_sigma(),
            drag_beta: None,
            cr_sigma: default_cr_sigma(),
            cr_risefall_ratio: default_cr_risefall_ratio(),
            granularity: default_granularity(),
            gansatz_cnot_cr_dt: default_cnot_cr(),
        }
    }
}

fn default_levels() -> usize {
    3
}
fn default_dt() -> f64 {
    0.2222
}
fn default_drive_strength() -> f64 {
    0.03
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "dt_ns", default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Drive strength per unit amplitude, GHz: the drive term is
    /// `2π·Ω·(s(t) a + h.c.)`.
    #[serde(rename = "drive_strength_ghz", default = "default_drive_strength")]
    pub drive_strength: f64,
    pub qubits: Vec<QubitParams>,
    #[serde(default)]
    pub couplings: Vec<Coupling>,
    #[serde(default)]
    pub pulse_defaults: PulseDefaults,
    #[serde(default)]
    pub leakage_policy: LeakagePolicy,
    #[serde(default)]
    pub readout_frame: ReadoutFrame,
}

impl DeviceModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let d: DeviceModel = serde_json::from_str(text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| e.context(format!("loading {}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("device serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::validation("levels", "must be at least 2"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::validation("dt_ns", "must be positive"));
        }
        if self.qubits.is_empty() {
            return Err(Error::validation("qubits", "device has no qubits"));
        }
        for (i, q) in self.qubits.iter().enumerate() {
            if !(q.t1_us > 0.0 && q.t2_us > 0.0) {
                return Err(Error::validation(format!("qubits[{i}]"), "T1 and T2 must be positive"));
            }
            if q.t2_us > 2.0 * q.t1_us + 1e-12 {
                return Err(Error::validation(format!("qubits[{i}].t2_us"), "T2 exceeds 2·T1"));
            }
            for (name, p) in [("p10", q.readout.p10), ("p01", q.readout.p01)] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::validation(format!("qubits[{i}].readout.{name}"), "not a probability"));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, c) in self.couplings.iter().enumerate() {
            let field = format!("couplings[{i}]");
            if c.q0 == c.q1 || c.q0 >= self.qubits.len() || c.q1 >= self.qubits.len() {
                return Err(Error::validation(field, "invalid qubit pair"));
            }
            if !seen.insert((c.q0.min(c.q1), c.q0.max(c.q1))) {
                return Err(Error::validation(field, "duplicate coupling"));
            }
        }
        if self.pulse_defaults.granularity == 0 {
            return Err(Error::validation("pulse_defaults.granularity", "must be positive"));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn dim(&self) -> usize {
        self.levels.pow(self.n_qubits() as u32)
    }

    pub fn granularity(&self) -> u64 {
        self.pulse_defaults.granularity
    }

    pub fn are_coupled(&self, a: usize, b: usize) -> bool {
        self.couplings
            .iter()
            .any(|c| (c.q0 == a && c.q1 == b) || (c.q0 == b && c.q1 == a))
    }

    pub fn drive_channel(&self, q: usize) -> Result<Channel> {
        let qp = self
            .qubits
            .get(q)
            .ok_or_else(|| Error::UnknownChannel(format!("d{q}")))?;
        Ok(Channel {
            kind: ChannelKind::Drive(q),
            carrier_freq: qp.freq_ghz,
        })
    }

    /// Cross-resonance channel: control's drive line at the target frequency.
    pub fn control_channel(&self, control: usize, target: usize) -> Result<Channel> {
        if control >= self.n_qubits() || target >= self.n_qubits() || !self.are_coupled(control, target) {
            return Err(Error::UnknownChannel(format!("u{control}_{target}")));
        }
        Ok(Channel {
            kind: ChannelKind::Control { control, target },
            carrier_freq: self.qubits[target].freq_ghz,
        })
    }

    /// Device restricted to the listed qubits (renumbered in the given order).
    pub fn subset(&self, qubits: &[usize]) -> Result<DeviceModel> {
        for &q in qubits {
            if q >= self.n_qubits() {
                return Err(Error::validation("qubits", format!("qubit {q} not on device")));
            }
        }
        let pos = |q: usize| qubits.iter().position(|&x| x == q);
        let couplings = self
            .couplings
            .iter()
            .filter_map(|c| {
                Some(Coupling {
                    q0: pos(c.q0)?,
                    q1: pos(c.q1)?,
                    g_ghz: c.g_ghz,
                })
            })
            .collect();
        Ok(DeviceModel {
            qubits: qubits.iter().map(|&q| self.qubits[q]).collect(),
            couplings,
            ..self.clone()
        })
    }

    /// First `n` qubits.
    pub fn first(&self, n: usize) -> Result<DeviceModel> {
        if n > self.n_qubits() {
            return Err(Error::validation(
                "n_qubits",
                format!("needs {n} qubits, device has {}", self.n_qubits()),
            ));
        }
        self.subset(&(0..n).collect::<Vec<_>>())
    }

    /// Default DRAG weight (samples): first-order leakage cancellation for
    /// the drive convention `2π·Ω·(s a + h.c.)`, i.e. `1/(2α·dt)` with the
    /// angular anharmonicity `α < 0`.
    pub fn default_drag_beta(&self, q: usize) -> f64 {
        if let Some(b) = self.pulse_defaults.drag_beta {
            return b;
        }
        let alpha = 2.0 * std::f64::consts::PI * self.qubits[q].anharm_ghz;
        1.0 / (2.0 * alpha * self.dt)
    }
}

/// Relaxation and pure-dephasing rates per qubit, in 1/µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub relaxation: Vec<f64>,
    pub dephasing: Vec<f64>,
}

impl NoiseConfig {
    pub fn off(n_qubits: usize) -> Self {
        NoiseConfig {
            enabled: false,
            relaxation: vec![0.0; n_qubits],
            dephasing: vec![0.0; n_qubits],
        }
    }

    /// Rates from T1/T2: `1/T1` and `max(0, 1/T2 - 1/(2 T1))`.
    pub fn from_device(device: &DeviceModel, enabled: bool) -> Self {
        let relaxation = device.qubits.iter().map(|q| 1.0 / q.t1_us).collect();
        let dephasing = device
            .qubits
            .iter()
            .map(|q| (1.0 / q.t2_us - 1.0 / (2.0 * q.t1_us)).max(0.0))
            .collect();
        NoiseConfig {
            enabled,
            relaxation,
            dephasing,
        }
    }

    pub fn is_active(&self) -> bool {
        self.enabled
            && (self.relaxation.iter().any(|&r| r > 0.0) || self.dephasing.iter().any(|&r| r > 0.0))
    }
}
