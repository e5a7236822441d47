//! Shot-sampled energy estimation with optional readout errors and
//! tensored readout-error mitigation.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::dynamics::{measure_probabilities, DensityMatrix, DeviceModel, LeakagePolicy};
use crate::error::{Error, Result};
use crate::hamiltonians::{group_qubitwise, Grouping, Pauli, PauliSum};
use crate::seed;

const SINGULAR_DET: f64 = 1e-6;

/// Measured outcomes of one measurement setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsTable {
    /// Per-qubit basis letters, qubit 0 rightmost.
    pub basis: String,
    pub shots: u64,
    /// Bitstring (qubit 0 rightmost) to count; zero counts omitted.
    pub counts: BTreeMap<String, u64>,
}

fn bitstring(b: usize, n: usize) -> String {
    (0..n).rev().map(|q| if (b >> q) & 1 == 1 { '1' } else { '0' }).collect()
}

impl CountsTable {
    fn from_vec(basis: String, n: usize, counts: &[u64]) -> Self {
        CountsTable {
            basis,
            shots: counts.iter().sum(),
            counts: counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(b, &c)| (bitstring(b, n), c))
                .collect(),
        }
    }
}

/// Per-qubit column-stochastic confusion matrices `m[measured][prepared]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub matrices: Vec<[[f64; 2]; 2]>,
}

impl ReadoutModel {
    /// From `(p10, p01)` pairs: P(read 1 | 0) and P(read 0 | 1).
    pub fn from_errors(errors: &[(f64, f64)]) -> Result<Self> {
        let m = ReadoutModel {
            matrices: errors.iter().map(|&(p10, p01)| [[1.0 - p10, p01], [p10, 1.0 - p01]]).collect(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_device(device: &DeviceModel, n_qubits: usize) -> Result<Self> {
        if n_qubits > device.n_qubits() {
            return Err(Error::Dimension {
                expected: n_qubits,
                found: device.n_qubits(),
            });
        }
        Self::from_errors(
            &device.qubits[..n_qubits]
                .iter()
                .map(|q| (q.readout.p10, q.readout.p01))
                .collect::<Vec<_>>(),
        )
    }

    pub fn identity(n_qubits: usize) -> Self {
        ReadoutModel {
            matrices: vec![[[1.0, 0.0], [0.0, 1.0]]; n_qubits],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.matrices.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (q, m) in self.matrices.iter().enumerate() {
            for col in 0..2 {
                let (a, b) = (m[0][col], m[1][col]);
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || ((a + b) - 1.0).abs() > 1e-12 {
                    return Err(Error::validation(
                        format!("readout[{q}]"),
                        "confusion columns must be probability vectors",
                    ));
                }
            }
        }
        Ok(())
    }

    fn inverses(&self) -> Result<Vec<[[f64; 2]; 2]>> {
        self.matrices
            .iter()
            .enumerate()
            .map(|(q, m)| {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < SINGULAR_DET {
                    return Err(Error::Mitigation(format!(
                        "confusion matrix of qubit {q} is singular (det {det:e})"
                    )));
                }
                Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
            })
            .collect()
    }
}

/// Apply per-qubit 2x2 matrices along each bit of a length-2^n vector.
fn tensor_apply(v: &[f64], mats: &[[[f64; 2]; 2]]) -> Vec<f64> {
    let mut out = v.to_vec();
    for (q, m) in mats.iter().enumerate() {
        let bit = 1usize << q;
        for b in 0..out.len() {
            if b & bit != 0 {
                continue;
            }
            let (x0, x1) = (out[b], out[b | bit]);
            out[b] = m[0][0] * x0 + m[0][1] * x1;
            out[b | bit] = m[1][0] * x0 + m[1][1] * x1;
        }
    }
    out
}

fn check_len(len: usize, readout: &ReadoutModel) -> Result<()> {
    if len != 1 << readout.n_qubits() {
        return Err(Error::Dimension {
            expected: 1 << readout.n_qubits(),
            found: len,
        });
    }
    Ok(())
}

/// Distribution of measured bitstrings given the true distribution.
pub fn apply_confusion(dist: &[f64], readout: &ReadoutModel) -> Result<Vec<f64>> {
    check_len(dist.len(), readout)?;
    Ok(tensor_apply(dist, &readout.matrices))
}

/// Tensored inversion; the result may hold negative quasi-probabilities.
pub fn invert_tensored(freqs: &[f64], readout: &ReadoutModel) -> Result<Vec<f64>> {
    check_len(freqs.len(), readout)?;
    Ok(tensor_apply(freqs, &readout.inverses()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub energy: f64,
    pub stderr: f64,
    pub per_group_counts: Vec<CountsTable>,
    pub mitigated: bool,
}

/// Sampling settings shared by every evaluation of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOptions {
    pub shots: u64,
    pub readout: Option<ReadoutModel>,
    pub mitigate: bool,
    /// Clip and renormalize mitigated quasi-probabilities (off by default).
    pub clip: bool,
    pub leakage_policy: LeakagePolicy,
}

impl EstimatorOptions {
    pub fn shots(shots: u64) -> Self {
        EstimatorOptions {
            shots,
            readout: None,
            mitigate: false,
            clip: false,
            leakage_policy: LeakagePolicy::AsOne,
        }
    }
}

/// Energy estimator for one Hamiltonian with precomputed measurement groups.
#[derive(Debug, Clone)]
pub struct Estimator {
    hamiltonian: PauliSum,
    grouping: Grouping,
    options: EstimatorOptions,
    /// Per group: `f(b) = Σ coeff·(-1)^{|b ∧ support|}` over its terms.
    observables: Vec<Vec<f64>>,
}

impl Estimator {
    pub fn new(hamiltonian: &PauliSum, options: EstimatorOptions) -> Result<Self> {
        if options.shots == 0 {
            return Err(Error::validation("shots", "must be positive"));
        }
        let n = hamiltonian.n_qubits();
        if let Some(r) = &options.readout {
            if r.n_qubits() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: r.n_qubits(),
                });
            }
            r.validate()?;
            if options.mitigate {
                r.inverses()?;
            }
        }
        let grouping = group_qubitwise(hamiltonian);
        let observables = grouping
            .groups
            .iter()
            .map(|g| {
                (0..1usize << n)
                    .map(|b| {
                        g.terms
                            .iter()
                            .map(|t| {
                                let parity = (b & t.support_mask()).count_ones() % 2;
                                if parity == 1 {
                                    -t.coeff
                                } else {
                                    t.coeff
                                }
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(Estimator {
            hamiltonian: hamiltonian.clone(),
            grouping,
            options,
            observables,
        })
    }

    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    pub fn options(&self) -> &EstimatorOptions {
        &self.options
    }

    pub fn hamiltonian(&self) -> &PauliSum {
        &self.hamiltonian
    }

    /// Outcome distribution of group `g` before readout errors.
    fn group_distribution(&self, rho: &DensityMatrix, g: usize) -> Result<Vec<f64>> {
        let group = &self.grouping.groups[g];
        let mut r = rho.clone();
        for q in 0..rho.n_qubits() {
            let u = match group.basis_on(q) {
                Pauli::X => hadamard(rho.levels()),
                Pauli::Y => hadamard_sdg(rho.levels()),
                _ => continue,
            };
            r.apply_local_unitary(q, &u);
        }
        measure_probabilities(&r, self.options.leakage_policy)
    }

    /// Shot-sampled estimate of `Tr(ρ H)`.
    pub fn estimate(&self, rho: &DensityMatrix, rng_seed: u64) -> Result<EstimationResult> {
        let n = self.hamiltonian.n_qubits();
        if rho.n_qubits() != n {
            return Err(Error::Dimension {
                expected: n,
                found: rho.n_qubits(),
            });
        }
        let shots = self.options.shots;
        let mitigate = self.options.mitigate && self.options.readout.is_some();
        let mut energy = self.grouping.offset;
        let mut variance = 0.0;
        let mut tables = Vec::with_capacity(self.grouping.groups.len());
        for (g, f) in self.observables.iter().enumerate() {
            let mut p = self.group_distribution(rho, g)?;
            if let Some(r) = &self.options.readout {
                p = apply_confusion(&p, r)?;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(rng_seed, g as u64));
            let counts = multinomial(&mut rng, shots, &p)?;
            let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();
            // value = Σ_b w_b f_b with w = M^{-1} freqs when mitigating; equivalently
            // Σ_b freqs_b y_b with y = M^{-T} f, which gives the sampling variance.
            let y: Vec<f64> = match (&self.options.readout, mitigate) {
                (Some(r), true) if !self.options.clip => {
                    let inv = r.inverses()?;
                    let inv_t: Vec<[[f64; 2]; 2]> =
                        inv.iter().map(|m| [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]).collect();
                    tensor_apply(f, &inv_t)
                }
                _ => f.clone(),
            };
            let (value, second) = if mitigate && self.options.clip {
                let w = clip_quasi(&invert_tensored(&freqs, self.options.readout.as_ref().unwrap())?);
                let v: f64 = w.iter().zip(f).map(|(a, b)| a * b).sum();
                let s: f64 = w.iter().zip(f).map(|(a, b)| a * b * b).sum();
                (v, s)
            } else {
                let v: f64 = freqs.iter().zip(&y).map(|(a, b)| a * b).sum();
                let s: f64 = freqs.iter().zip(&y).map(|(a, b)| a * b * b).sum();
                (v, s)
            };
            energy += value;
            variance += ((second - value * value) / shots as f64).max(0.0);
            tables.push(CountsTable::from_vec(self.grouping.groups[g].basis.clone(), n, &counts));
        }
        Ok(EstimationResult {
            energy,
            stderr: variance.sqrt(),
            per_group_counts: tables,
            mitigated: mitigate,
        })
    }
}

/// Convenience wrapper building a one-off [`Estimator`].
pub fn estimate_energy(
    rho: &DensityMatrix,
    hamiltonian: &PauliSum,
    shots: u64,
    rng_seed: u64,
    readout: Option<&ReadoutModel>,
    mitigate: bool,
) -> Result<EstimationResult> {
    let opts = EstimatorOptions {
        readout: readout.cloned(),
        mitigate,
        ..EstimatorOptions::shots(shots)
    };
    Estimator::new(hamiltonian, opts)?.estimate(rho, rng_seed)
}

fn clip_quasi(w: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.iter().map(|x| x / total).collect()
    } else {
        clipped
    }
}

/// Multinomial draw by sequential conditional binomials.
fn multinomial(rng: &mut ChaCha8Rng, shots: u64, p: &[f64]) -> Result<Vec<u64>> {
    let mut out = vec![0u64; p.len()];
    let mut left = shots;
    let mut mass = 1.0f64;
    for (i, &pi) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == p.len() {
            out[i] = left;
            break;
        }
        let pi = pi.max(0.0);
        let q = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q)
                .map_err(|e| Error::InvalidState(format!("bad outcome probability: {e}")))?
                .sample(rng)
        };
        out[i] = k;
        left -= k;
        mass -= pi;
    }
    Ok(out)
}

/// Hadamard on levels {0, 1}, identity above.
fn hadamard(levels: usize) -> Vec<Complex64> {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let mut u = identity(levels);
    u[0] = h;
    u[1] = h;
    u[levels] = h;
    u[levels + 1] = -h;
    u
}

/// `H·S†` on levels {0, 1}: maps the +1 eigenstate of Y to |0>.
fn hadamard_sdg(levels: usize) -> Vec<Complex64> {
    let h = FRAC_1_SQRT_2;
    let mut u = identity(levels);
    u[0] = Complex64::new(h, 0.0);
    u[1] = Complex64::new(0.0, -h);
    u[levels] = Complex64::new(h, 0.0);
    u[levels + 1] = Complex64::new(0.0, h);
    u
}

fn identity(levels: usize) -> Vec<Complex64> {
    let mut u = vec![Complex64::new(0.0, 0.0); levels * levels];
    for i in 0..levels {
        u[i * levels + i] = Complex64::new(1.0, 0.0);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{exact_expectation, PauliTerm};

    fn h(terms: &[(&str, f64)]) -> PauliSum {
        PauliSum::new(2, terms.iter().map(|&(p, c)| PauliTerm::new(p, c)).collect()).unwrap()
    }

    #[test]
    fn deterministic_state_gives_exact_energy() {
        let rho = DensityMatrix::basis_state(2, 2, 0b01);
        let r = estimate_energy(&rho, &h(&[("ZZ", 1.0)]), 1000, 3, None, false).unwrap();
        assert_eq!(r.energy, -1.0);
        assert_eq!(r.stderr, 0.0);
        assert_eq!(r.per_group_counts[0].counts.get("01"), Some(&1000));
    }

    #[test]
    fn scrambled_readout_erases_signal() {
        let rho = DensityMatrix::ground(2, 2);
        let ro = ReadoutModel::from_errors(&[(0.5, 0.5), (0.5, 0.5)]).unwrap();
        let r = estimate_energy(&rho, &h(&[("ZI", 1.0)]), 200_000, 11, Some(&ro), false).unwrap();
        assert!(r.energy.abs() < 0.01, "{}", r.energy);
    }

    #[test]
    fn mitigation_recovers_ideal_value() {
        let rho = DensityMatrix::ground(2, 2);
        let ro = ReadoutModel::from_errors(&[(0.1, 0.05), (0.1, 0.05)]).unwrap();
        let raw = estimate_energy(&rho, &h(&[("ZI", 1.0)]), 100_000, 5, Some(&ro), false).unwrap();
        let mit = estimate_energy(&rho, &h(&[("ZI", 1.0)]), 100_000, 5, Some(&ro), true).unwrap();
        assert!((raw.energy - 0.8).abs() < 0.02);
        assert!((mit.energy - 1.0).abs() < 0.02, "{}", mit.energy);
        assert!(mit.mitigated);
    }

    #[test]
    fn confusion_column_read_off() {
        let ro = ReadoutModel {
            matrices: vec![[[0.9, 0.05], [0.1, 0.95]]],
        };
        let d = apply_confusion(&[1.0, 0.0], &ro).unwrap();
        assert!((d[0] - 0.9).abs() < 1e-15 && (d[1] - 0.1).abs() < 1e-15);
        let back = invert_tensored(&d, &ro).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-12 && back[1].abs() < 1e-12);
    }

    #[test]
    fn singular_confusion_is_rejected() {
        let ro = ReadoutModel::from_errors(&[(0.5, 0.5)]).unwrap();
        assert!(matches!(invert_tensored(&[0.5, 0.5], &ro), Err(Error::Mitigation(_))));
    }

    #[test]
    fn basis_changes_measure_x_and_y() {
        let s = FRAC_1_SQRT_2;
        // |+> on qubit 0 and |+i> on qubit 1
        let plus = [Complex64::new(s, 0.0), Complex64::new(s, 0.0)];
        let plus_i = [Complex64::new(s, 0.0), Complex64::new(0.0, s)];
        let amps: Vec<Complex64> = (0..4).map(|b| plus[b & 1] * plus_i[b >> 1]).collect();
        let rho = DensityMatrix::from_pure(2, 2, &amps).unwrap();
        let ham = h(&[("IX", 0.7), ("YI", -0.3), ("YX", 0.2)]);
        let r = estimate_energy(&rho, &ham, 100, 1, None, false).unwrap();
        assert!((r.energy - (0.7 - 0.3 + 0.2)).abs() < 1e-12, "{}", r.energy);
        assert!((exact_expectation(&rho, &ham).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn qutrit_state_uses_leakage_policy() {
        let rho = DensityMatrix::basis_state(2, 3, 2);
        let ham = h(&[("IZ", 1.0)]);
        let r = estimate_energy(&rho, &ham, 10, 1, None, false).unwrap();
        assert_eq!(r.energy, -1.0);
    }
}
