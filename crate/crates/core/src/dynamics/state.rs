use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Density matrix over `levels^n` states, stored row-major.
///
/// Basis index `i` has qubit `q` at level `(i / levels^q) % levels`, so qubit 0
/// is the least significant digit (little-endian, matching bitstrings).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    levels: usize,
    n_qubits: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(n_qubits: usize, levels: usize) -> Self {
        let dim = levels.pow(n_qubits as u32);
        DensityMatrix {
            levels,
            n_qubits,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn basis_state(n_qubits: usize, levels: usize, index: usize) -> Self {
        let mut rho = Self::zeros(n_qubits, levels);
        let dim = rho.dim();
        rho.data[index * dim + index] = Complex64::new(1.0, 0.0);
        rho
    }

    /// All qubits in level 0.
    pub fn ground(n_qubits: usize, levels: usize) -> Self {
        Self::basis_state(n_qubits, levels, 0)
    }

    pub fn maximally_mixed(n_qubits: usize, levels: usize) -> Self {
        let mut rho = Self::zeros(n_qubits, levels);
        let dim = rho.dim();
        for i in 0..dim {
            rho.data[i * dim + i] = Complex64::new(1.0 / dim as f64, 0.0);
        }
        rho
    }

    pub fn from_pure(n_qubits: usize, levels: usize, amps: &[Complex64]) -> Result<Self> {
        let mut rho = Self::zeros(n_qubits, levels);
        let dim = rho.dim();
        if amps.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: amps.len(),
            });
        }
        for i in 0..dim {
            for j in 0..dim {
                rho.data[i * dim + j] = amps[i] * amps[j].conj();
            }
        }
        Ok(rho)
    }

    pub fn from_matrix(n_qubits: usize, levels: usize, m: &DMatrix<Complex64>) -> Result<Self> {
        let mut rho = Self::zeros(n_qubits, levels);
        let dim = rho.dim();
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: m.nrows(),
            });
        }
        for i in 0..dim {
            for j in 0..dim {
                rho.data[i * dim + j] = m[(i, j)];
            }
        }
        Ok(rho)
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let dim = self.dim();
        DMatrix::from_fn(dim, dim, |i, j| self.data[i * dim + j])
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.levels.pow(self.n_qubits as u32)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim() + j]
    }

    pub(crate) fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Level of qubit `q` in basis index `i`.
    pub fn level_of(&self, i: usize, q: usize) -> usize {
        (i / self.levels.pow(q as u32)) % self.levels
    }

    pub fn trace(&self) -> f64 {
        let dim = self.dim();
        (0..dim).map(|i| self.data[i * dim + i].re).sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        let dim = self.dim();
        (0..dim).map(|i| self.data[i * dim + i].re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let dim = self.dim();
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in i..dim {
                worst = worst.max((self.data[i * dim + j] - self.data[j * dim + i].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.to_matrix()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Check Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > 1e-9 {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {h:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-7 {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let lo = self.min_eigenvalue();
        if lo < -1e-7 {
            return Err(Error::InvalidState(format!("negative eigenvalue {lo:e}")));
        }
        Ok(())
    }

    pub fn hermitize(&mut self) {
        let dim = self.dim();
        for i in 0..dim {
            self.data[i * dim + i].im = 0.0;
            for j in (i + 1)..dim {
                let a = self.data[i * dim + j];
                let b = self.data[j * dim + i];
                let m = (a + b.conj()) * 0.5;
                self.data[i * dim + j] = m;
                self.data[j * dim + i] = m.conj();
            }
        }
    }

    /// Full-space index of a qubit-subspace basis state `bits`.
    pub fn embed_index(&self, bits: usize) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for q in 0..self.n_qubits {
            if (bits >> q) & 1 == 1 {
                idx += stride;
            }
            stride *= self.levels;
        }
        idx
    }

    /// Block restricted to levels {0, 1} of every qubit (not renormalized).
    pub fn qubit_subspace(&self) -> DensityMatrix {
        if self.levels == 2 {
            return self.clone();
        }
        let qdim = 1usize << self.n_qubits;
        let map: Vec<usize> = (0..qdim).map(|b| self.embed_index(b)).collect();
        let mut out = DensityMatrix::zeros(self.n_qubits, 2);
        for a in 0..qdim {
            for b in 0..qdim {
                out.data[a * qdim + b] = self.get(map[a], map[b]);
            }
        }
        out
    }

    /// Carry residual frame phases into the state: `rho -> U† rho U` with
    /// `U = exp(i Σ_q φ_q n_q)`, so that ideal basis changes afterwards see
    /// what basis pulses played in the shifted frames would.
    pub fn apply_frame_phases(&mut self, phases: &[f64]) {
        let dim = self.dim();
        let theta: Vec<f64> = (0..dim)
            .map(|i| {
                phases
                    .iter()
                    .enumerate()
                    .take(self.n_qubits)
                    .map(|(q, p)| p * self.level_of(i, q) as f64)
                    .sum()
            })
            .collect();
        for i in 0..dim {
            for j in 0..dim {
                self.data[i * dim + j] *= Complex64::from_polar(1.0, theta[j] - theta[i]);
            }
        }
    }

    /// Rescale to unit trace.
    pub fn renormalized(mut self) -> Result<DensityMatrix> {
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidState("zero trace".into()));
        }
        for z in &mut self.data {
            *z /= tr;
        }
        Ok(self)
    }

    /// Apply a single-qubit operator `u` (levels x levels, row-major) on qubit
    /// `q` as `rho -> U rho U^dagger`.
    pub fn apply_local_unitary(&mut self, q: usize, u: &[Complex64]) {
        let d = self.levels;
        let dim = self.dim();
        let stride = d.pow(q as u32);
        let mut tmp = vec![Complex64::new(0.0, 0.0); d];
        // left: rows
        for col in 0..dim {
            for base in 0..dim {
                if (base / stride) % d != 0 {
                    continue;
                }
                for (a, t) in tmp.iter_mut().enumerate() {
                    *t = (0..d)
                        .map(|b| u[a * d + b] * self.data[(base + b * stride) * dim + col])
                        .sum();
                }
                for (a, t) in tmp.iter().enumerate() {
                    self.data[(base + a * stride) * dim + col] = *t;
                }
            }
        }
        // right: columns, multiply by U^dagger
        for row in 0..dim {
            for base in 0..dim {
                if (base / stride) % d != 0 {
                    continue;
                }
                for (a, t) in tmp.iter_mut().enumerate() {
                    *t = (0..d)
                        .map(|b| self.data[row * dim + base + b * stride] * u[a * d + b].conj())
                        .sum();
                }
                for (a, t) in tmp.iter().enumerate() {
                    self.data[row * dim + base + a * stride] = *t;
                }
            }
        }
    }

    /// Reduced state of the listed qubits (in the given order, first = least significant).
    pub fn partial_trace_keep(&self, keep: &[usize]) -> DensityMatrix {
        let d = self.levels;
        let dim = self.dim();
        let mut out = DensityMatrix::zeros(keep.len(), d);
        let odim = out.dim();
        let reduced_index = |i: usize| -> usize {
            keep.iter()
                .enumerate()
                .map(|(k, &q)| self.level_of(i, q) * d.pow(k as u32))
                .sum()
        };
        let rest_key = |i: usize| -> usize {
            (0..self.n_qubits)
                .filter(|q| !keep.contains(q))
                .map(|q| self.level_of(i, q) * d.pow(q as u32))
                .sum()
        };
        for i in 0..dim {
            let ri = reduced_index(i);
            let ki = rest_key(i);
            for j in 0..dim {
                if rest_key(j) != ki {
                    continue;
                }
                out.data[ri * odim + reduced_index(j)] += self.data[i * dim + j];
            }
        }
        out
    }
}
