use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dynamics::DeviceModel;
use crate::error::{Error, Result};
use crate::pulse::{ChannelKind, Schedule};

/// Sparse real-weighted operator entries `(row, col, weight)`.
pub(crate) type Entries = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone)]
pub(crate) struct CouplingTerm {
    /// Entries of `a_k^† a_l`.
    pub entries: Entries,
    /// `2π g`, rad/ns.
    pub strength: f64,
    /// `2π (ω_k - ω_l)`, rad/ns.
    pub detuning: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ChannelDrive {
    /// `2π (ω_q - ω_d)`, rad/ns.
    pub detuning: f64,
    pub samples: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub(crate) struct QubitDrive {
    pub qubit: usize,
    pub channels: Vec<ChannelDrive>,
}

/// Time-dependent Hamiltonian `H(t)` of a device running a schedule, in rad/ns.
///
/// `H(t) = Σ_k (α_k/2) a_k†a_k†a_k a_k
///       + Σ_<kl> 2πg (e^{i(ω_k-ω_l)t} a_k†a_l + h.c.)
///       + Σ_q (c_q(t) a_q + h.c.)`, with
/// `c_q(t) = 2πΩ Σ_ch s_ch(t) e^{-i(ω_q-ω_ch)t}` summed over channels on the
/// drive line of qubit `q`.
#[derive(Debug, Clone)]
pub struct Generator {
    pub(crate) n_qubits: usize,
    pub(crate) levels: usize,
    pub(crate) dim: usize,
    pub(crate) dt: f64,
    pub(crate) n_samples: usize,
    pub(crate) diag: Vec<f64>,
    pub(crate) couplings: Vec<CouplingTerm>,
    /// Entries of `a_q` for every qubit.
    pub(crate) lowering: Vec<Entries>,
    pub(crate) drives: Vec<QubitDrive>,
    drive_scale: f64,
}

pub(crate) fn lowering_entries(n_qubits: usize, levels: usize, q: usize) -> Entries {
    let dim = levels.pow(n_qubits as u32);
    let stride = levels.pow(q as u32);
    (0..dim)
        .filter_map(|k| {
            let l = (k / stride) % levels;
            (l > 0).then(|| (k - stride, k, (l as f64).sqrt()))
        })
        .collect()
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Complex drive coefficient multiplying `a_q` during sample `j` at time `t` (ns).
    pub(crate) fn drive_coefficient(&self, drive: &QubitDrive, j: usize, t: f64) -> Complex64 {
        let mut c = Complex64::new(0.0, 0.0);
        if j >= self.n_samples {
            return c;
        }
        for ch in &drive.channels {
            let s = ch.samples[j];
            if s.re == 0.0 && s.im == 0.0 {
                continue;
            }
            c += s * Complex64::from_polar(1.0, -ch.detuning * t);
        }
        c * self.drive_scale
    }

    /// Dense `H(t)` for the given sample index and time, row-major.
    pub fn matrix_at(&self, j: usize, t: f64) -> Vec<Complex64> {
        let d = self.dim;
        let mut h = vec![Complex64::new(0.0, 0.0); d * d];
        for (i, &v) in self.diag.iter().enumerate() {
            h[i * d + i] += v;
        }
        for c in &self.couplings {
            let k = Complex64::from_polar(c.strength, c.detuning * t);
            for &(r, col, w) in &c.entries {
                h[r * d + col] += k * w;
                h[col * d + r] += k.conj() * w;
            }
        }
        for drive in &self.drives {
            let c = self.drive_coefficient(drive, j, t);
            for &(r, col, w) in &self.lowering[drive.qubit] {
                h[r * d + col] += c * w;
                h[col * d + r] += c.conj() * w;
            }
        }
        h
    }

    /// `out = H(t) rho` for row-major square matrices.
    pub(crate) fn apply(&self, j: usize, t: f64, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        for i in 0..d {
            let v = self.diag[i];
            let (dst, src) = (&mut out[i * d..(i + 1) * d], &rho[i * d..(i + 1) * d]);
            for (o, r) in dst.iter_mut().zip(src) {
                *o = r * v;
            }
        }
        for c in &self.couplings {
            let k = Complex64::from_polar(c.strength, c.detuning * t);
            for &(r, col, w) in &c.entries {
                row_axpy(out, r, rho, col, k * w, d);
                row_axpy(out, col, rho, r, k.conj() * w, d);
            }
        }
        for drive in &self.drives {
            let c = self.drive_coefficient(drive, j, t);
            if c.norm_sqr() == 0.0 {
                continue;
            }
            for &(r, col, w) in &self.lowering[drive.qubit] {
                row_axpy(out, r, rho, col, c * w, d);
                row_axpy(out, col, rho, r, c.conj() * w, d);
            }
        }
    }
}

#[inline]
fn row_axpy(out: &mut [Complex64], dst: usize, src: &[Complex64], row: usize, a: Complex64, d: usize) {
    let o = &mut out[dst * d..(dst + 1) * d];
    let s = &src[row * d..(row + 1) * d];
    for (x, y) in o.iter_mut().zip(s) {
        *x += a * y;
    }
}

/// Build the rotating-frame generator for `schedule` on `device`.
pub fn build_generator(device: &DeviceModel, schedule: &Schedule) -> Result<Generator> {
    let n = device.n_qubits();
    let levels = device.levels;
    let dim = device.dim();
    let two_pi = 2.0 * PI;

    let mut diag = vec![0.0; dim];
    for (i, v) in diag.iter_mut().enumerate() {
        let mut stride = 1;
        for q in &device.qubits {
            let l = ((i / stride) % levels) as f64;
            *v += two_pi * q.anharm_ghz / 2.0 * l * (l - 1.0);
            stride *= levels;
        }
    }

    let lowering: Vec<Entries> = (0..n).map(|q| lowering_entries(n, levels, q)).collect();

    let couplings = device
        .couplings
        .iter()
        .map(|c| {
            // a_k^† a_l entries from the lowering lists: a_l |x> = w |y>, then a_k^† |y> = w' |z>
            let (k, l) = (c.q0, c.q1);
            let mut entries = Vec::new();
            let stride_k = levels.pow(k as u32);
            for &(y, x, w) in &lowering[l] {
                let lk = (y / stride_k) % levels;
                if lk + 1 < levels {
                    let z = y + stride_k;
                    entries.push((z, x, w * ((lk + 1) as f64).sqrt()));
                }
            }
            CouplingTerm {
                entries,
                strength: two_pi * c.g_ghz,
                detuning: two_pi * (device.qubits[k].freq_ghz - device.qubits[l].freq_ghz),
            }
        })
        .collect();

    let mut drives: Vec<QubitDrive> = Vec::new();
    for wf in schedule.render()? {
        let kind = wf.channel.kind;
        let q = kind.physical_qubit();
        match kind {
            ChannelKind::Drive(q) => {
                device.drive_channel(q)?;
            }
            ChannelKind::Control { control, target } => {
                device.control_channel(control, target)?;
            }
        }
        if q >= n {
            return Err(Error::UnknownChannel(kind.to_string()));
        }
        let detuning = two_pi * (device.qubits[q].freq_ghz - wf.channel.carrier_freq);
        let entry = ChannelDrive {
            detuning,
            samples: wf.samples,
        };
        match drives.iter_mut().find(|d| d.qubit == q) {
            Some(d) => d.channels.push(entry),
            None => drives.push(QubitDrive {
                qubit: q,
                channels: vec![entry],
            }),
        }
    }

    Ok(Generator {
        n_qubits: n,
        levels,
        dim,
        dt: device.dt,
        n_samples: schedule.duration() as usize,
        diag,
        couplings,
        lowering,
        drives,
        drive_scale: two_pi * device.drive_strength,
    })
}
