use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::dynamics::{DensityMatrix, DeviceModel};
use crate::error::{Error, Result};

/// Eigenbasis of the undriven lab-frame Hamiltonian, each eigenvector
/// labelled by the bare state it overlaps most.
///
/// Dispersive readout discriminates these dressed states, not the bare
/// product states, so states are rotated into this basis before counting.
#[derive(Debug, Clone)]
pub struct DressedBasis {
    n_qubits: usize,
    levels: usize,
    /// Column `k` is the dressed state labelled by bare index `k`.
    vectors: DMatrix<f64>,
    /// Frame energies `2π Σ ω_q l_q` of each bare index, rad/ns.
    frame: Vec<f64>,
}

impl DressedBasis {
    pub fn new(device: &DeviceModel) -> Result<Self> {
        let n = device.n_qubits();
        let levels = device.levels;
        let dim = device.dim();
        let level = |i: usize, q: usize| (i / levels.pow(q as u32)) % levels;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut frame = vec![0.0; dim];
        for i in 0..dim {
            for (q, p) in device.qubits.iter().enumerate() {
                let l = level(i, q) as f64;
                frame[i] += 2.0 * PI * p.freq_ghz * l;
                h[(i, i)] += 2.0 * PI * (p.freq_ghz * l + 0.5 * p.anharm_ghz * l * (l - 1.0));
            }
        }
        for c in &device.couplings {
            let (k, l) = (c.q0, c.q1);
            let (sk, sl) = (levels.pow(k as u32), levels.pow(l as u32));
            // a_k† a_l: lowers l, raises k
            for j in 0..dim {
                let (lk, ll) = (level(j, k), level(j, l));
                if ll == 0 || lk + 1 >= levels {
                    continue;
                }
                let i = j + sk - sl;
                let w = 2.0 * PI * c.g_ghz * (((lk + 1) * ll) as f64).sqrt();
                h[(i, j)] += w;
                h[(j, i)] += w;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(dim * dim);
        for k in 0..dim {
            for i in 0..dim {
                pairs.push((eig.eigenvectors[(i, k)].abs(), i, k));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut label_of = vec![usize::MAX; dim];
        let mut used = vec![false; dim];
        for (_, i, k) in pairs {
            if label_of[k] == usize::MAX && !used[i] {
                label_of[k] = i;
                used[i] = true;
            }
        }
        let mut vectors = DMatrix::<f64>::zeros(dim, dim);
        for k in 0..dim {
            let i = label_of[k];
            if i == usize::MAX {
                return Err(Error::InvalidState("dressed-state labelling failed".into()));
            }
            let sign = if eig.eigenvectors[(i, k)] < 0.0 { -1.0 } else { 1.0 };
            for r in 0..dim {
                vectors[(r, i)] = sign * eig.eigenvectors[(r, k)];
            }
        }
        Ok(DressedBasis {
            n_qubits: n,
            levels,
            vectors,
            frame,
        })
    }

    /// `ρ` (rotating frame, at time `t_ns`) expressed in the dressed basis,
    /// keeping the bare rotating-frame phase convention.
    pub fn to_dressed(&self, rho: &DensityMatrix, t_ns: f64) -> Result<DensityMatrix> {
        if rho.n_qubits() != self.n_qubits || rho.levels() != self.levels {
            return Err(Error::Dimension {
                expected: self.vectors.nrows(),
                found: rho.dim(),
            });
        }
        let dim = self.vectors.nrows();
        let w = DMatrix::from_fn(dim, dim, |i, j| {
            Complex64::from_polar(self.vectors[(i, j)], (self.frame[i] - self.frame[j]) * t_ns)
        });
        let r = rho.to_matrix();
        let out = w.adjoint() * r * &w;
        DensityMatrix::from_matrix(self.n_qubits, self.levels, &out)
    }
}
