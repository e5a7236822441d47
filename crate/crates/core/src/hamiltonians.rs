//! Qubit Hamiltonians as weighted Pauli sums.
//!
//! Qubit ordering is little-endian throughout the crate: in a Pauli string
//! or a bitstring, the rightmost character belongs to qubit 0. Basis index
//! `b` of a 2^n vector has qubit `q` in bit `q`.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::DensityMatrix;
use crate::error::{Error, Result};

/// Largest register for which dense diagonalization is attempted.
pub const MAX_DENSE_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// One weighted Pauli string. Coefficients are in Hartree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub pauli: String,
    pub coeff: f64,
}

impl PauliTerm {
    pub fn new(pauli: impl Into<String>, coeff: f64) -> Self {
        PauliTerm {
            pauli: pauli.into(),
            coeff,
        }
    }

    /// Operator acting on qubit `q` (reads the string right to left).
    pub fn op_on(&self, q: usize) -> Pauli {
        let bytes = self.pauli.as_bytes();
        Pauli::from_char(bytes[bytes.len() - 1 - q] as char).unwrap_or(Pauli::I)
    }

    pub fn is_identity(&self) -> bool {
        self.pauli.bytes().all(|b| b == b'I')
    }

    /// Bit flip mask (X or Y) and phase mask (Z or Y) in little-endian bit order.
    pub fn masks(&self) -> (usize, usize) {
        let n = self.pauli.len();
        let mut x = 0usize;
        let mut z = 0usize;
        for q in 0..n {
            match self.op_on(q) {
                Pauli::I => {}
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                }
            }
        }
        (x, z)
    }

    /// Qubits carrying a non-identity operator.
    pub fn support_mask(&self) -> usize {
        let (x, z) = self.masks();
        x | z
    }

    fn y_count(&self) -> u32 {
        self.pauli.bytes().filter(|&b| b == b'Y').count() as u32
    }

    /// Action on a computational basis state: `P|b> = phase * |b ^ x>`.
    pub(crate) fn apply_to_basis(&self, b: usize) -> (usize, Complex64) {
        let (x, z) = self.masks();
        let mut phase = i_pow(self.y_count());
        if (b & z).count_ones() % 2 == 1 {
            phase = -phase;
        }
        (b ^ x, phase)
    }
}

fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// A qubit Hamiltonian with distinct Pauli strings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl PauliSum {
    pub fn new(n_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::validation("n_qubits", "must be positive"));
        }
        let mut seen = HashSet::new();
        for (i, t) in terms.iter().enumerate() {
            let field = format!("pauli_terms[{i}].pauli");
            if t.pauli.len() != n_qubits {
                return Err(Error::validation(
                    field,
                    format!("length {} does not match n_qubits {}", t.pauli.len(), n_qubits),
                ));
            }
            if let Some(c) = t.pauli.chars().find(|&c| Pauli::from_char(c).is_none()) {
                return Err(Error::validation(field, format!("illegal character {c:?}")));
            }
            if !seen.insert(t.pauli.clone()) {
                return Err(Error::validation(field, format!("duplicate Pauli string {}", t.pauli)));
            }
            if !t.coeff.is_finite() {
                return Err(Error::validation(
                    format!("pauli_terms[{i}].coeff"),
                    "coefficient is not finite",
                ));
            }
        }
        Ok(PauliSum { n_qubits, terms })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// Coefficient of the all-identity string (0 if absent).
    pub fn identity_coeff(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.is_identity())
            .map(|t| t.coeff)
            .sum()
    }

    /// Dense 2^n x 2^n matrix.
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        terms_matrix(self.n_qubits, self.terms.iter())
    }
}

pub(crate) fn terms_matrix<'a>(
    n_qubits: usize,
    terms: impl Iterator<Item = &'a PauliTerm>,
) -> DMatrix<Complex64> {
    let dim = 1usize << n_qubits;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for t in terms {
        for b in 0..dim {
            let (row, phase) = t.apply_to_basis(b);
            m[(row, b)] += phase * t.coeff;
        }
    }
    m
}

/// A molecule at one geometry, with its qubit Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoleculeSpec {
    pub name: String,
    pub distance: f64,
    pub n_qubits: usize,
    pub hamiltonian: PauliSum,
    pub hf_bitstring: String,
    pub fci_energy: Option<f64>,
}

impl MoleculeSpec {
    /// HF occupation of qubit `q` (little-endian read of `hf_bitstring`).
    pub fn hf_bit(&self, q: usize) -> bool {
        let b = self.hf_bitstring.as_bytes();
        b[b.len() - 1 - q] == b'1'
    }

    /// Reference energy: the stored value, or diagonalization when absent.
    pub fn reference_energy(&self) -> Result<f64> {
        match self.fci_energy {
            Some(e) => Ok(e),
            None => exact_ground_energy(&self.hamiltonian),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        parse_molecule(&text).map_err(|e| e.context(format!("loading {}", path.display())))
    }
}

#[derive(Deserialize)]
struct MoleculeFile {
    name: String,
    distance_angstrom: f64,
    n_qubits: usize,
    pauli_terms: Vec<PauliTerm>,
    hf_bitstring: String,
    #[serde(default)]
    fci_energy: Option<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    generator: Option<serde_json::Value>,
}

/// Parse and validate a molecule JSON document.
pub fn parse_molecule(json_text: &str) -> Result<MoleculeSpec> {
    let raw: MoleculeFile = serde_json::from_str(json_text)?;
    let hamiltonian = PauliSum::new(raw.n_qubits, raw.pauli_terms)?;
    if raw.hf_bitstring.len() != raw.n_qubits {
        return Err(Error::validation(
            "hf_bitstring",
            format!(
                "length {} does not match n_qubits {}",
                raw.hf_bitstring.len(),
                raw.n_qubits
            ),
        ));
    }
    if raw.hf_bitstring.bytes().any(|b| b != b'0' && b != b'1') {
        return Err(Error::validation("hf_bitstring", "must contain only 0 and 1"));
    }
    if !raw.distance_angstrom.is_finite() {
        return Err(Error::validation("distance_angstrom", "not finite"));
    }
    if let Some(e) = raw.fci_energy {
        if raw.n_qubits <= MAX_DENSE_QUBITS {
            let exact = exact_ground_energy(&hamiltonian)?;
            if (exact - e).abs() > 1e-9 {
                return Err(Error::validation(
                    "fci_energy",
                    format!("{e} differs from the minimal eigenvalue {exact}"),
                ));
            }
        }
    }
    Ok(MoleculeSpec {
        name: raw.name,
        distance: raw.distance_angstrom,
        n_qubits: raw.n_qubits,
        hamiltonian,
        hf_bitstring: raw.hf_bitstring,
        fci_energy: raw.fci_energy,
    })
}

/// Minimal eigenvalue by dense diagonalization.
pub fn exact_ground_energy(h: &PauliSum) -> Result<f64> {
    if h.n_qubits > MAX_DENSE_QUBITS {
        return Err(Error::Capability(format!(
            "dense diagonalization supports at most {MAX_DENSE_QUBITS} qubits, got {}",
            h.n_qubits
        )));
    }
    let m = h.to_matrix();
    let eig = m.symmetric_eigenvalues();
    Ok(eig.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// `Tr(rho H)` for a state on the 2^n qubit space.
pub fn exact_expectation(state: &DensityMatrix, h: &PauliSum) -> Result<f64> {
    let dim = 1usize << h.n_qubits();
    if state.levels() != 2 || state.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: state.dim(),
        });
    }
    let tr = state.trace();
    if (tr - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidState(format!("trace {tr} is not 1")));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for t in h.terms() {
        acc += pauli_expectation(state, t) * t.coeff;
    }
    if acc.im.abs() >= 1e-8 {
        return Err(Error::InvalidState(format!(
            "expectation has imaginary part {}",
            acc.im
        )));
    }
    Ok(acc.re)
}

/// `Tr(rho P)` for one Pauli string on a 2-level register.
pub(crate) fn pauli_expectation(state: &DensityMatrix, term: &PauliTerm) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for b in 0..state.dim() {
        let (row, phase) = term.apply_to_basis(b);
        // Tr(rho P) = sum_b <b| rho P |b> = sum_b phase_b rho[b, row_b]
        acc += state.get(b, row) * phase;
    }
    acc
}

/// Terms sharing one per-qubit measurement basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementGroup {
    /// Per-qubit basis letters, `I` where no term constrains the qubit.
    pub basis: String,
    pub terms: Vec<PauliTerm>,
}

impl MeasurementGroup {
    /// Measurement letter for qubit `q`; unconstrained qubits read out in Z.
    pub fn basis_on(&self, q: usize) -> Pauli {
        let b = self.basis.as_bytes();
        match Pauli::from_char(b[b.len() - 1 - q] as char) {
            Some(Pauli::I) | None => Pauli::Z,
            Some(p) => p,
        }
    }
}

/// Result of qubit-wise grouping: identity offset plus compatible groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grouping {
    pub offset: f64,
    pub groups: Vec<MeasurementGroup>,
}

/// Greedy first-fit qubit-wise commuting groups, largest |coeff| first.
pub fn group_qubitwise(h: &PauliSum) -> Grouping {
    let n = h.n_qubits();
    let mut order: Vec<&PauliTerm> = h.terms().iter().filter(|t| !t.is_identity()).collect();
    order.sort_by(|a, b| b.coeff.abs().total_cmp(&a.coeff.abs()));

    let mut groups: Vec<(Vec<Pauli>, Vec<PauliTerm>)> = Vec::new();
    'terms: for t in order {
        let ops: Vec<Pauli> = (0..n).map(|q| t.op_on(q)).collect();
        for (basis, members) in groups.iter_mut() {
            let fits = ops
                .iter()
                .zip(basis.iter())
                .all(|(&p, &b)| p == Pauli::I || b == Pauli::I || p == b);
            if fits {
                for (b, &p) in basis.iter_mut().zip(ops.iter()) {
                    if p != Pauli::I {
                        *b = p;
                    }
                }
                members.push(t.clone());
                continue 'terms;
            }
        }
        groups.push((ops, vec![t.clone()]));
    }

    Grouping {
        offset: h.identity_coeff(),
        groups: groups
            .into_iter()
            .map(|(basis, terms)| MeasurementGroup {
                basis: basis.iter().rev().map(|p| p.as_char()).collect(),
                terms,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum(n: usize, terms: &[(&str, f64)]) -> PauliSum {
        PauliSum::new(n, terms.iter().map(|&(p, c)| PauliTerm::new(p, c)).collect()).unwrap()
    }

    #[test]
    fn parses_identity_only_molecule() {
        let m = parse_molecule(
            r#"{"name":"id","distance_angstrom":1.0,"n_qubits":1,
                "pauli_terms":[{"pauli":"I","coeff":0.5}],"hf_bitstring":"0"}"#,
        )
        .unwrap();
        assert_eq!(m.n_qubits, 1);
        assert_eq!(m.hamiltonian.terms().len(), 1);
    }

    #[test]
    fn rejects_bad_molecules() {
        let base = |terms: &str, hf: &str| {
            format!(
                r#"{{"name":"x","distance_angstrom":1.0,"n_qubits":2,"pauli_terms":{terms},"hf_bitstring":"{hf}"}}"#
            )
        };
        let dup = parse_molecule(&base(r#"[{"pauli":"ZZ","coeff":1},{"pauli":"ZZ","coeff":2}]"#, "01"));
        assert!(matches!(dup, Err(Error::Validation { ref reason, .. }) if reason.contains("duplicate")));
        let len = parse_molecule(&base(r#"[{"pauli":"Z","coeff":1}]"#, "01"));
        assert!(matches!(len, Err(Error::Validation { ref field, .. }) if field.contains("pauli")));
        let ch = parse_molecule(&base(r#"[{"pauli":"ZQ","coeff":1}]"#, "01"));
        assert!(matches!(ch, Err(Error::Validation { ref reason, .. }) if reason.contains("illegal")));
        let hf = parse_molecule(&base(r#"[{"pauli":"ZZ","coeff":1}]"#, "0a"));
        assert!(matches!(hf, Err(Error::Validation { ref field, .. }) if field == "hf_bitstring"));
        let hf_len = parse_molecule(&base(r#"[{"pauli":"ZZ","coeff":1}]"#, "011"));
        assert!(matches!(hf_len, Err(Error::Validation { ref field, .. }) if field == "hf_bitstring"));
        assert!(matches!(parse_molecule("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_inconsistent_fci_reference() {
        let r = parse_molecule(
            r#"{"name":"x","distance_angstrom":1.0,"n_qubits":1,
                "pauli_terms":[{"pauli":"Z","coeff":1.0}],"hf_bitstring":"0","fci_energy":-0.5}"#,
        );
        assert!(matches!(r, Err(Error::Validation { ref field, .. }) if field == "fci_energy"));
    }

    #[test]
    fn ground_energies_of_trivial_hamiltonians() {
        assert!((exact_ground_energy(&sum(1, &[("Z", 1.0)])).unwrap() + 1.0).abs() < 1e-12);
        assert!((exact_ground_energy(&sum(2, &[("II", 0.5)])).unwrap() - 0.5).abs() < 1e-12);
        let big = PauliSum::new(13, vec![PauliTerm::new("I".repeat(13), 1.0)]).unwrap();
        assert!(matches!(exact_ground_energy(&big), Err(Error::Capability(_))));
    }

    #[test]
    fn y_string_matrix_is_hermitian() {
        let h = sum(2, &[("XY", 0.3), ("YZ", -0.2), ("YY", 0.1)]);
        let m = h.to_matrix();
        assert!((&m - m.adjoint()).norm() < 1e-14);
        // Y|0> = i|1>
        let y = sum(1, &[("Y", 1.0)]).to_matrix();
        assert_eq!(y[(1, 0)], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn expectations_on_basis_states() {
        // qubit 0 excited: index 1
        let rho = DensityMatrix::basis_state(2, 2, 1);
        let e = exact_expectation(&rho, &sum(2, &[("ZZ", 1.0)])).unwrap();
        assert!((e + 1.0).abs() < 1e-12);
        let rho0 = DensityMatrix::basis_state(2, 2, 0);
        let e = exact_expectation(&rho0, &sum(2, &[("XX", 1.0)])).unwrap();
        assert!(e.abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(2, 2);
        let e = exact_expectation(&mixed, &sum(2, &[("ZI", 0.7), ("XY", 0.2)])).unwrap();
        assert!(e.abs() < 1e-12);
        let wrong = DensityMatrix::basis_state(1, 2, 0);
        assert!(matches!(
            exact_expectation(&wrong, &sum(2, &[("ZZ", 1.0)])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn qubitwise_grouping_examples() {
        let g = group_qubitwise(&sum(2, &[("ZZ", 1.0), ("ZI", 0.5), ("IZ", 0.2)]));
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].basis, "ZZ");
        let g = group_qubitwise(&sum(2, &[("ZZ", 1.0), ("XX", 0.5)]));
        assert_eq!(g.groups.len(), 2);
        let g = group_qubitwise(&sum(3, &[("XII", 1.0), ("IIZ", 0.5), ("III", -2.0)]));
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].basis, "XIZ");
        assert_eq!(g.groups[0].basis_on(1), Pauli::Z);
        assert_eq!(g.offset, -2.0);
    }
}
